//! Randomized geometry checks shared by the core test suite and the
//! acceptance target. Each `run_*` drives a deterministic proptest runner.

use mirrorfield_core::geometry::{polygon, CameraIntrinsics, MirrorPlane};
use mirrorfield_core::geometry::{project, undistort_pixel, Pose};
use nalgebra::{Vector2, Vector3};
use std::cell::Cell;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};

/// Reflection round trip and fixed points, relative to the coordinates' size.
pub const REFLECT_TOL: f64 = 1e-12;
/// Clipped vertices may sit this far outside either input.
pub const CLIP_TOL: f64 = 1e-9;
/// Distortion round trip in pixels.
pub const DISTORT_TOL_PX: f64 = 1e-6;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// Runs a property and returns how many cases reached its body.
fn run<S: Strategy>(
    cases: u32,
    strat: &S,
    body: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<usize, String>
where
    S::Value: std::fmt::Debug,
{
    let count = Cell::new(0usize);
    runner(cases)
        .run(strat, |v| {
            count.set(count.get() + 1);
            body(v)
        })
        .map_err(|e: TestError<S::Value>| e.to_string())?;
    Ok(count.get())
}

fn unit() -> impl Strategy<Value = Vector3<f64>> {
    (0.0..std::f64::consts::TAU, -1.0..1.0f64).prop_map(|(phi, z)| {
        let r = (1.0 - z * z).sqrt();
        Vector3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

fn point() -> impl Strategy<Value = Vector3<f64>> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn plane() -> impl Strategy<Value = MirrorPlane> {
    (unit(), -1.0..1.0f64).prop_map(|(n, d)| {
        let seed = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = n.cross(&seed).normalize();
        let v = n.cross(&u);
        let square = vec![
            Vector2::new(-0.1, -0.1),
            Vector2::new(0.1, -0.1),
            Vector2::new(0.1, 0.1),
            Vector2::new(-0.1, 0.1),
        ];
        MirrorPlane::from_frame(n * d, u, v, square).unwrap()
    })
}

/// Convex CCW polygon: sorted angles on a circle, at least three distinct.
fn convex() -> impl Strategy<Value = Vec<Vector2<f64>>> {
    (
        prop::collection::vec(0.0..std::f64::consts::TAU, 3..9),
        -1.0..1.0f64,
        -1.0..1.0f64,
        0.2..2.0f64,
    )
        .prop_filter_map("degenerate polygon", |(mut angles, cx, cy, r)| {
            angles.sort_by(f64::total_cmp);
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let poly: Vec<Vector2<f64>> = angles
                .iter()
                .map(|a| Vector2::new(cx + r * a.cos(), cy + r * a.sin()))
                .collect();
            (poly.len() >= 3 && polygon::signed_area(&poly) > 1e-4).then_some(poly)
        })
}

pub fn run_reflection_involution(cases: u32) -> Result<usize, String> {
    run(cases, &(plane(), point()), |(m, p)| {
        let back = m.reflect_point(&m.reflect_point(&p));
        prop_assert!((back - p).norm() <= REFLECT_TOL * (1.0 + p.norm() + m.offset.abs()));
        let h = m.householder();
        prop_assert!((h.determinant() + 1.0).abs() < 1e-12);
        prop_assert!((h * h - nalgebra::Matrix3::identity()).amax() < 1e-12);
        // Signed distance flips.
        let d0 = m.signed_distance(&p);
        let d1 = m.signed_distance(&m.reflect_point(&p));
        prop_assert!((d0 + d1).abs() <= REFLECT_TOL * (1.0 + p.norm()));
        Ok(())
    })
}

pub fn run_fixed_plane_points(cases: u32) -> Result<usize, String> {
    run(
        cases,
        &(plane(), -3.0..3.0f64, -3.0..3.0f64),
        |(m, a, b)| {
            let p = m.frame_origin + m.frame_axes[0] * a + m.frame_axes[1] * b;
            let q = m.reflect_point(&p);
            prop_assert!((q - p).norm() <= REFLECT_TOL * (1.0 + p.norm()));
            // Directions within the plane are unchanged, the normal flips.
            prop_assert!((m.reflect_dir(&m.frame_axes[0]) - m.frame_axes[0]).norm() < 1e-12);
            prop_assert!((m.reflect_dir(&m.normal) + m.normal).norm() < 1e-12);
            Ok(())
        },
    )
}

pub fn run_clip_bounds(cases: u32) -> Result<usize, String> {
    run(cases, &(convex(), convex()), |(a, b)| {
        let c = polygon::clip(&a, &b);
        let (aa, ab) = (polygon::signed_area(&a), polygon::signed_area(&b));
        let ac = if c.len() >= 3 {
            polygon::signed_area(&c)
        } else {
            0.0
        };
        prop_assert!(ac >= -CLIP_TOL);
        prop_assert!(
            ac <= aa.min(ab) + CLIP_TOL,
            "area {ac} exceeds min({aa}, {ab})"
        );
        for v in &c {
            prop_assert!(polygon::contains(&a, v, CLIP_TOL) && polygon::contains(&b, v, CLIP_TOL));
        }
        let rev = polygon::clip(&b, &a);
        let ar = if rev.len() >= 3 {
            polygon::signed_area(&rev)
        } else {
            0.0
        };
        prop_assert!((ac - ar).abs() <= 1e-9 * (1.0 + aa.max(ab)));
        let own = polygon::clip(&a, &a);
        prop_assert!((polygon::signed_area(&own) - aa).abs() <= 1e-9 * (1.0 + aa));
        Ok(())
    })
}

pub fn run_distortion_roundtrip(cases: u32) -> Result<usize, String> {
    // Models that stay monotone out to the sensor corners; beyond the fold
    // a distorted pixel has no preimage and undistortion reports an error.
    let strat = (
        50.0..80.0f64,
        -0.1..0.1f64,
        -0.02..0.02f64,
        0.0..1.0f64,
        0.0..1.0f64,
    );
    run(cases, &strat, |(hfov, k1, k2, fu, fv)| {
        let k = CameraIntrinsics::from_hfov(1920, 1080, hfov, k1, k2);
        // A pixel on the sensor, its undistorted ray, and back.
        let px = Vector2::new(fu * 1919.0, fv * 1079.0);
        let n = undistort_pixel(&k, px).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let again = project(&k, &Pose::identity(), &Vector3::new(n.x, n.y, 1.0))
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((again - px).norm() < DISTORT_TOL_PX, "{px} -> {again}");
        Ok(())
    })
}
