#![allow(dead_code)]

use mirrorfield_core::calibrate::nearest_parallel_grid;
use mirrorfield_core::decode::{LightField4D, RectifiedGridModel};
use mirrorfield_core::design::{init_faceted_parabola, DesignSpec, DesignState};
use mirrorfield_core::geometry::Pose;
use mirrorfield_core::simulate::{Checkerboard, PointTarget, Scene};
use nalgebra::{Matrix3, Vector3};

pub fn default_state() -> DesignState {
    init_faceted_parabola(&DesignSpec::default()).unwrap()
}

pub fn grid_model(state: &DesignState) -> RectifiedGridModel {
    nearest_parallel_grid(
        &state.mirrors,
        &state.spec.camera,
        &state.spec.camera_pose,
        state.spec.rows,
        state.spec.cols,
    )
    .unwrap()
}

/// Board facing the mirrors, `depth` beyond the virtual centers; 12×16
/// squares of 20 mm.
pub fn board_at(depth: f64) -> Checkerboard {
    Checkerboard {
        pose: Pose {
            rotation: Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)),
            center: Vector3::new(0.0, 0.0, -0.12 + depth),
        },
        rows: 12,
        cols: 16,
        square_size: 0.02,
    }
}

pub fn two_board_scene() -> Scene {
    Scene {
        checkerboards: vec![board_at(0.3), board_at(0.5)],
        ..Scene::default()
    }
}

/// Point `depth` in front of the central rectified view, along the ray of
/// target pixel `(u, v)`.
pub fn point_in_view(model: &RectifiedGridModel, u: f64, v: f64, depth: f64) -> Vector3<f64> {
    let (s, t) = model.central();
    let c = model.view(s, t).unwrap();
    let k = &model.target_intrinsics;
    let d = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0) * depth;
    c.center + model.target_orientation * d
}

/// Up to `count` spheres of distinct size and brightness, placed greedily so
/// that each is inside every view with `margin` pixels to spare and at least
/// `separation` pixels from the others in every view.
pub fn point_targets(
    lf_masks: &LightField4D,
    count: usize,
    margin: f64,
    separation: f64,
) -> Vec<PointTarget> {
    let model = &lf_masks.model;
    let k = &model.target_intrinsics;
    let depths = [1.0, 0.5, 0.7, 0.4];
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let visible = |p: &Vector3<f64>| {
        model.views.iter().all(|v| {
            let Some(q) = model.project(v, p) else {
                return false;
            };
            let img = &lf_masks.view(v.s, v.t).unwrap().image;
            [
                (0.0, 0.0),
                (margin, 0.0),
                (-margin, 0.0),
                (0.0, margin),
                (0.0, -margin),
            ]
            .iter()
            .all(|(dx, dy)| img.sample(q.x + dx, q.y + dy).is_some())
        })
    };
    let halton = |mut i: usize, base: usize| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    for i in 1..2000 {
        if placed.len() == count {
            break;
        }
        let depth = depths[placed.len() % depths.len()];
        let du = (halton(i, 2) - 0.5) * 2.0 * k.cx;
        let dv = (halton(i, 3) - 0.5) * 2.0 * k.cy;
        let p = point_in_view(model, k.cx + du, k.cy + dv, depth);
        if !visible(&p) {
            continue;
        }
        let far = placed.iter().all(|(o, _)| {
            model.views.iter().all(|v| {
                (model.project(v, &p).unwrap() - model.project(v, o).unwrap()).norm() >= separation
            })
        });
        if far {
            placed.push((p, depth));
        }
    }
    placed
        .iter()
        .enumerate()
        .map(|(n, (p, depth))| {
            let radius_px = 1.5 + 0.05 * n as f64;
            // Interleave dark and light so neighbours in placement order differ most.
            let level = (n * 7 % 20) as f64 / 19.0;
            let intensity = if level < 0.5 {
                0.02 + 0.6 * level
            } else {
                0.98 - 0.6 * (1.0 - level)
            };
            PointTarget {
                position: *p,
                radius: radius_px * depth / k.fx,
                intensity,
            }
        })
        .collect()
}

/// Synthetic calibration problem on the two-board rig: observations from the
/// true mirrors, initial guess perturbed by `tilt_deg` and `offset_mm`.
pub fn calibration_problem(
    state: &DesignState,
    noise_px: f64,
    seed: u64,
    tilt_deg: f64,
    offset_mm: f64,
) -> mirrorfield_core::calibrate::CalibrationProblem {
    use mirrorfield_core::calibrate::{perturb_mirrors, CalibrationProblem};
    use mirrorfield_core::simulate::synth_observations;
    let scene = two_board_scene();
    let obs = synth_observations(state, &scene, noise_px, seed).unwrap();
    CalibrationProblem {
        intrinsics: state.spec.camera,
        camera_pose: state.spec.camera_pose,
        observations: obs.observations,
        boards: scene.checkerboards,
        initial_mirrors: perturb_mirrors(&state.mirrors, tilt_deg.to_radians(), offset_mm * 1e-3)
            .unwrap(),
    }
}

/// Intensity-weighted centroid of `|I − background|` within `radius` of
/// `guess`; `None` if any pixel in the window is masked.
pub fn blob_centroid(
    img: &mirrorfield_core::decode::MaskedImage,
    guess: nalgebra::Vector2<f64>,
    radius: f64,
    background: f64,
) -> Option<nalgebra::Vector2<f64>> {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let r = radius.ceil() as i64;
    let (gx, gy) = (guess.x.round() as i64, guess.y.round() as i64);
    for y in gy - r..=gy + r {
        for x in gx - r..=gx + r {
            if ((x - gx).pow(2) + (y - gy).pow(2)) as f64 > radius * radius {
                continue;
            }
            if x < 0 || y < 0 {
                return None;
            }
            let v = img.get(x as usize, y as usize)?;
            let w = (v - background).abs();
            sw += w;
            sx += w * x as f64;
            sy += w * y as f64;
        }
    }
    (sw > 0.0).then(|| nalgebra::Vector2::new(sx / sw, sy / sw))
}

/// Measured against predicted adjacent-view disparity for one target.
#[derive(Debug, Clone)]
pub struct DisparitySample {
    pub depth: f64,
    pub measured_s: f64,
    pub expected_s: f64,
    pub measured_t: f64,
    pub expected_t: f64,
}

/// A target at `depth` that the central view and both of its +s / +t
/// neighbours see with room to spare, away from `avoid`.
fn place_for_disparity(
    masks: &LightField4D,
    depth: f64,
    radius_px: f64,
    avoid: &[Vector3<f64>],
) -> PointTarget {
    let m = &masks.model;
    let (cs, ct) = m.central();
    let views = [(cs, ct), (cs + 1, ct), (cs, ct + 1)];
    let k = &m.target_intrinsics;
    for j in -8i32..=8 {
        for i in -8i32..=8 {
            let p = point_in_view(m, k.cx + 12.0 * i as f64, k.cy + 12.0 * j as f64, depth);
            let ok = views.iter().all(|&(s, t)| {
                let q = m.project(m.view(s, t).unwrap(), &p).unwrap();
                let img = &masks.view(s, t).unwrap().image;
                (-1..=1).all(|a| {
                    (-1..=1).all(|b| {
                        img.sample(q.x + 12.0 * a as f64, q.y + 12.0 * b as f64)
                            .is_some()
                    })
                }) && avoid
                    .iter()
                    .all(|o| (m.project(m.view(s, t).unwrap(), o).unwrap() - q).norm() > 30.0)
            });
            if ok {
                return PointTarget {
                    position: p,
                    radius: radius_px * depth / k.fx,
                    intensity: 0.95,
                };
            }
        }
    }
    panic!("no placement for depth {depth}");
}

/// Renders bright discs at each depth plus a dark one effectively at
/// infinity, decodes, and measures disparities from blob centroids. Returns
/// the finite-depth samples and the largest disparity at infinity.
pub fn measure_disparity_law(state: &DesignState, depths: &[f64]) -> (Vec<DisparitySample>, f64) {
    use mirrorfield_core::decode::decode_frame;
    use mirrorfield_core::simulate::{render, subimage_map, RawImage, DEFAULT_SUBIMAGE_MARGIN};

    let model = grid_model(state);
    let map = subimage_map(state, DEFAULT_SUBIMAGE_MARGIN).unwrap();
    let (w, h) = (
        state.spec.camera.width as usize,
        state.spec.camera.height as usize,
    );
    let masks = decode_frame(&RawImage::new(w, h, 0.5), &model, &map, "blank").unwrap();
    let mut targets: Vec<PointTarget> = Vec::new();
    for &depth in depths {
        let avoid: Vec<_> = targets.iter().map(|t| t.position).collect();
        targets.push(place_for_disparity(&masks, depth, 3.0, &avoid));
    }
    let k = model.target_intrinsics;
    let far = point_in_view(&model, k.cx, k.cy, 1e6);
    // Wide enough to average the edge sampling noise down.
    targets.push(PointTarget {
        position: far,
        radius: 6.0 * 1e6 / k.fx,
        intensity: 0.05,
    });
    let scene = Scene {
        point_targets: targets.clone(),
        ..Scene::default()
    };
    let raw = render(state, &scene, 6, 11).unwrap();
    let lf = decode_frame(&raw, &model, &map, "targets").unwrap();
    let (cs, ct) = model.central();
    let centroid = |s: usize, t: usize, p: &Vector3<f64>, window: f64| {
        let guess = model.project(model.view(s, t).unwrap(), p).unwrap();
        blob_centroid(&lf.view(s, t).unwrap().image, guess, window, 0.5).unwrap()
    };
    let samples = targets[..depths.len()]
        .iter()
        .map(|tg| {
            let c = centroid(cs, ct, &tg.position, 7.0);
            let z = (model.target_orientation.transpose()
                * (tg.position - model.view(cs, ct).unwrap().center))
                .z;
            DisparitySample {
                depth: z,
                measured_s: centroid(cs + 1, ct, &tg.position, 7.0).x - c.x,
                expected_s: k.fx * model.s_step.norm() / z,
                measured_t: centroid(cs, ct + 1, &tg.position, 7.0).y - c.y,
                expected_t: k.fy * model.t_step.norm() / z,
            }
        })
        .collect();
    let c = centroid(cs, ct, &far, 10.0);
    let far_max = [(cs + 1, ct), (cs, ct + 1)]
        .iter()
        .map(|&(s, t)| (centroid(s, t, &far, 10.0) - c).norm())
        .fold(0.0, f64::max);
    (samples, far_max)
}

/// Twenty well-separated point targets rendered through `state` and decoded.
pub fn point_target_light_field(state: &DesignState) -> (Vec<PointTarget>, LightField4D) {
    use mirrorfield_core::decode::decode_frame;
    use mirrorfield_core::simulate::{render, subimage_map, RawImage, DEFAULT_SUBIMAGE_MARGIN};

    let model = grid_model(state);
    let map = subimage_map(state, DEFAULT_SUBIMAGE_MARGIN).unwrap();
    let (w, h) = (
        state.spec.camera.width as usize,
        state.spec.camera.height as usize,
    );
    let masks = decode_frame(&RawImage::new(w, h, 0.5), &model, &map, "blank").unwrap();
    let targets = point_targets(&masks, 20, 14.0, 20.0);
    let scene = Scene {
        point_targets: targets.clone(),
        ..Scene::default()
    };
    let raw = render(state, &scene, 2, 7).unwrap();
    (targets, decode_frame(&raw, &model, &map, "points").unwrap())
}

/// Depth of `p` along the target axis, from the central view's center.
pub fn target_depth(lf: &LightField4D, p: &Vector3<f64>) -> f64 {
    let m = &lf.model;
    let (s, t) = m.central();
    (m.target_orientation.transpose() * (p - m.view(s, t).unwrap().center)).z
}
