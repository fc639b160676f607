//! Synthetic imagery: a ray tracer through the mirror array and analytic
//! checkerboard observations. These stand in for the physical adapter in
//! every closed-loop test.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignState;
use crate::error::{Error, Result};
use crate::geometry::polygon;
use crate::geometry::{project, undistort_pixel, CameraIntrinsics, MirrorPlane, Pose};

pub const DARK: f64 = 0.05;
pub const LIGHT: f64 = 0.95;

/// A planar checkerboard of `rows × cols` squares, centered on its pose.
///
/// Board-local x runs along columns and y along rows; the board lies in the
/// local `z = 0` plane. Inner corners are indexed `(row, col)` with
/// `row < rows - 1`, `col < cols - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkerboard {
    pub pose: Pose,
    pub rows: usize,
    pub cols: usize,
    pub square_size: f64,
}

impl Checkerboard {
    pub fn corner_local(&self, row: usize, col: usize) -> Vector3<f64> {
        Vector3::new(
            (col as f64 + 1.0 - self.cols as f64 / 2.0) * self.square_size,
            (row as f64 + 1.0 - self.rows as f64 / 2.0) * self.square_size,
            0.0,
        )
    }

    pub fn corner_world(&self, row: usize, col: usize) -> Vector3<f64> {
        self.pose.camera_to_world(&self.corner_local(row, col))
    }

    pub fn corner_count(&self) -> usize {
        self.rows.saturating_sub(1) * self.cols.saturating_sub(1)
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.pose.rotation.column(2).into_owned()
    }

    /// Shade at a board-local point, or `None` off the board.
    fn shade(&self, local: &Vector3<f64>) -> Option<f64> {
        let a = local.x / self.square_size + self.cols as f64 / 2.0;
        let b = local.y / self.square_size + self.rows as f64 / 2.0;
        if !(a >= 0.0 && b >= 0.0 && a < self.cols as f64 && b < self.rows as f64) {
            return None;
        }
        let parity = (a.floor() as i64 + b.floor() as i64).rem_euclid(2);
        Some(if parity == 0 { DARK } else { LIGHT })
    }
}

/// A uniformly shaded sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    pub position: Vector3<f64>,
    pub radius: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub checkerboards: Vec<Checkerboard>,
    pub point_targets: Vec<PointTarget>,
    pub background_intensity: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            checkerboards: Vec::new(),
            point_targets: Vec::new(),
            background_intensity: 0.5,
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.background_intensity) {
            return Err(Error::Invalid(
                "background intensity must lie in [0, 1]".into(),
            ));
        }
        for (i, b) in self.checkerboards.iter().enumerate() {
            if !(b.square_size > 0.0) || b.rows < 2 || b.cols < 2 {
                return Err(Error::Invalid(format!(
                    "checkerboard {i} needs square_size > 0 and at least 2×2 squares"
                )));
            }
            b.pose.validate()?;
        }
        for (i, p) in self.point_targets.iter().enumerate() {
            if !(p.radius > 0.0) || !unit(p.intensity) {
                return Err(Error::Invalid(format!(
                    "point target {i} needs radius > 0 and intensity in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        RawImage {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Invalid(format!(
                "{} pixels for a {width}×{height} image",
                pixels.len()
            )));
        }
        Ok(RawImage {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }
}

/// Ray tracer with the scene and mirrors bound once per render.
struct Tracer<'a> {
    intr: &'a CameraIntrinsics,
    pose: &'a Pose,
    mirrors: &'a [MirrorPlane],
    scene: &'a Scene,
}

impl Tracer<'_> {
    fn trace(&self, pixel: Vector2<f64>) -> f64 {
        let bg = self.scene.background_intensity;
        let Ok(n) = undistort_pixel(self.intr, pixel) else {
            return bg;
        };
        let dir = self.pose.camera_to_world_dir(&Vector3::new(n.x, n.y, 1.0));
        let origin = self.pose.center;
        let Some((m, t)) = nearest_mirror(self.mirrors, &origin, &dir) else {
            return bg;
        };
        let hit = origin + dir * t;
        let refl = m.reflect_dir(&dir);
        scene_hit(self.scene, &hit, &refl).unwrap_or(bg)
    }
}

fn nearest_mirror<'m>(
    mirrors: &'m [MirrorPlane],
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<(&'m MirrorPlane, f64)> {
    mirrors
        .iter()
        .filter_map(|m| m.ray_hit(origin, dir).map(|t| (m, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Intensity of the nearest scene surface along a ray.
fn scene_hit(scene: &Scene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    let mut offer = |t: f64, v: f64| {
        if t > 1e-12 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, v));
        }
    };
    for b in &scene.checkerboards {
        let n = b.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            continue;
        }
        let t = n.dot(&(b.pose.center - origin)) / denom;
        if t > 1e-12 {
            let local = b.pose.world_to_camera(&(origin + dir * t));
            if let Some(v) = b.shade(&local) {
                offer(t, v);
            }
        }
    }
    let dd = dir.norm_squared();
    for p in &scene.point_targets {
        let oc = origin - p.position;
        let half_b = oc.dot(dir);
        let c = oc.norm_squared() - p.radius * p.radius;
        let disc = half_b * half_b - dd * c;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let t0 = (-half_b - sq) / dd;
        let t1 = (-half_b + sq) / dd;
        offer(if t0 > 1e-12 { t0 } else { t1 }, p.intensity);
    }
    best.map(|(_, v)| v)
}

/// Intensity seen at one raw-image pixel.
pub fn trace_pixel(state: &DesignState, scene: &Scene, pixel: Vector2<f64>) -> f64 {
    Tracer {
        intr: &state.spec.camera,
        pose: &state.spec.camera_pose,
        mirrors: &state.mirrors,
        scene,
    }
    .trace(pixel)
}

fn pixel_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer keeps neighbouring pixels decorrelated.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders the raw frame with `supersample²` stratified, jittered samples per
/// pixel. Output depends only on the inputs and `seed`.
pub fn render(
    state: &DesignState,
    scene: &Scene,
    supersample: usize,
    seed: u64,
) -> Result<RawImage> {
    if supersample == 0 {
        return Err(Error::Invalid("supersample must be at least 1".into()));
    }
    scene.validate()?;
    let intr = &state.spec.camera;
    let (w, h) = (intr.width as usize, intr.height as usize);
    if w == 0 || h == 0 {
        return Err(Error::Invalid("image has zero size".into()));
    }
    let tracer = Tracer {
        intr,
        pose: &state.spec.camera_pose,
        mirrors: &state.mirrors,
        scene,
    };
    let ss = supersample;
    let inv = 1.0 / ss as f64;
    let mut pixels = vec![0.0; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(seed, (y * w + x) as u64));
            let mut acc = 0.0;
            for a in 0..ss {
                for b in 0..ss {
                    let jx: f64 = rng.random();
                    let jy: f64 = rng.random();
                    let px = Vector2::new(
                        x as f64 - 0.5 + (b as f64 + jx) * inv,
                        y as f64 - 0.5 + (a as f64 + jy) * inv,
                    );
                    acc += tracer.trace(px);
                }
            }
            *out = acc * inv * inv;
        }
    });
    RawImage::from_pixels(w, h, pixels)
}

/// Pixel of `point` seen through mirror `index` of an arbitrary mirror set.
///
/// The point is reflected into virtual space and projected by the real
/// camera. The line of sight must cross mirror `index` inside its extent
/// dilated by `extent_tol` (m) and meet no other mirror first.
pub fn project_via(
    intr: &CameraIntrinsics,
    pose: &Pose,
    mirrors: &[MirrorPlane],
    index: usize,
    point: &Vector3<f64>,
    extent_tol: f64,
) -> Result<Vector2<f64>> {
    let m = mirrors
        .get(index)
        .ok_or_else(|| Error::Invalid(format!("no mirror {index}")))?;
    let not_visible = || Error::NotVisible { mirror: index };
    let virt = m.reflect_point(point);
    let c = pose.center;
    let d = virt - c;
    let t = m.ray_plane(&c, &d).ok_or_else(not_visible)?;
    if t > 1.0 + 1e-9 || !polygon::contains(&m.extent, &m.to_local(&(c + d * t)), extent_tol) {
        return Err(not_visible());
    }
    let blocked = mirrors
        .iter()
        .enumerate()
        .any(|(j, o)| j != index && o.ray_hit(&c, &d).is_some_and(|s| s < t));
    if blocked {
        return Err(not_visible());
    }
    project(intr, pose, &virt)
}

pub fn project_via_mirror(
    state: &DesignState,
    mirror_index: usize,
    point: &Vector3<f64>,
) -> Result<Vector2<f64>> {
    project_via(
        &state.spec.camera,
        &state.spec.camera_pose,
        &state.mirrors,
        mirror_index,
        point,
        0.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CornerId {
    pub board: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub mirror_index: usize,
    pub corner: CornerId,
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub observations: Vec<Observation>,
    /// Set when nothing was visible.
    pub warning: Option<String>,
}

/// Every in-bounds corner projection through every mirror, plus isotropic
/// Gaussian noise. Sorted by mirror, then corner; noise is drawn in that order.
pub fn synth_observations(
    state: &DesignState,
    scene: &Scene,
    noise_px: f64,
    seed: u64,
) -> Result<Observations> {
    if scene.checkerboards.is_empty() {
        return Err(Error::Invalid("scene has no checkerboard".into()));
    }
    if !(noise_px >= 0.0) {
        return Err(Error::Invalid("noise must be non-negative".into()));
    }
    scene.validate()?;
    let normal = Normal::new(0.0, noise_px).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intr = &state.spec.camera;
    let mut observations = Vec::new();
    for m in 0..state.mirrors.len() {
        for (bi, b) in scene.checkerboards.iter().enumerate() {
            for row in 0..b.rows - 1 {
                for col in 0..b.cols - 1 {
                    let Ok(px) = project_via_mirror(state, m, &b.corner_world(row, col)) else {
                        continue;
                    };
                    if !intr.in_bounds(px) {
                        continue;
                    }
                    let pixel = if noise_px > 0.0 {
                        px + Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng))
                    } else {
                        px
                    };
                    observations.push(Observation {
                        mirror_index: m,
                        corner: CornerId {
                            board: bi,
                            row,
                            col,
                        },
                        pixel,
                    });
                }
            }
        }
    }
    let warning = observations
        .is_empty()
        .then(|| "no checkerboard corner is visible through any mirror".to_string());
    Ok(Observations {
        observations,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubImage {
    pub mirror_index: usize,
    /// CCW polygon in undistorted pixel coordinates.
    pub polygon: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubImageMap {
    pub width: usize,
    pub height: usize,
    pub subimages: Vec<SubImage>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SubImageMap {
    pub fn get(&self, mirror_index: usize) -> Option<&SubImage> {
        self.subimages
            .iter()
            .find(|s| s.mirror_index == mirror_index)
    }
}

pub const DEFAULT_SUBIMAGE_MARGIN: f64 = 2.0;

/// Sub-image polygons: mirror extents projected by the pinhole part of the
/// camera, eroded by `margin` pixels and clipped to the image.
///
/// Polygons live in the undistorted image that decoding slices, where a
/// planar quadrilateral projects to an exact quadrilateral.
pub fn subimage_map(state: &DesignState, margin: f64) -> Result<SubImageMap> {
    state.validate()?;
    if !(margin >= 0.0) {
        return Err(Error::Invalid("margin must be non-negative".into()));
    }
    let intr = &state.spec.camera;
    let pose = &state.spec.camera_pose;
    let (w, h) = (intr.width as f64 - 1.0, intr.height as f64 - 1.0);
    let frame = [
        Vector2::new(0.0, 0.0),
        Vector2::new(w, 0.0),
        Vector2::new(w, h),
        Vector2::new(0.0, h),
    ];
    let mut subimages = Vec::new();
    let mut warnings = Vec::new();
    for (i, m) in state.mirrors.iter().enumerate() {
        let mut pts = Vec::with_capacity(4);
        for p in m.world_vertices() {
            let pc = pose.world_to_camera(&p);
            if pc.z <= 1e-12 {
                break;
            }
            pts.push(intr.pinhole_pixel(Vector2::new(pc.x / pc.z, pc.y / pc.z)));
        }
        let poly = if pts.len() == m.extent.len() {
            let eroded = polygon::erode(&polygon::ensure_ccw(pts), margin);
            polygon::clip(&eroded, &frame)
        } else {
            Vec::new()
        };
        if poly.len() < 3 || polygon::signed_area(&poly) <= 0.0 {
            warnings.push(format!("mirror {i} falls outside the image"));
            continue;
        }
        subimages.push(SubImage {
            mirror_index: i,
            polygon: poly,
        });
    }
    Ok(SubImageMap {
        width: intr.width as usize,
        height: intr.height as usize,
        subimages,
        warnings,
    })
}

/// Fraction of raw pixels (sampled every `stride`) whose ray reaches a
/// mirror and whose undistorted position lies in that mirror's polygon.
pub fn subimage_coverage(state: &DesignState, map: &SubImageMap, stride: usize) -> f64 {
    let intr = &state.spec.camera;
    let pose = &state.spec.camera_pose;
    let stride = stride.max(1);
    let (mut seen, mut covered) = (0usize, 0usize);
    for y in (0..intr.height as usize).step_by(stride) {
        for x in (0..intr.width as usize).step_by(stride) {
            let Ok(n) = undistort_pixel(intr, Vector2::new(x as f64, y as f64)) else {
                continue;
            };
            let dir = pose.camera_to_world_dir(&Vector3::new(n.x, n.y, 1.0));
            let hit = state
                .mirrors
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.ray_hit(&pose.center, &dir).map(|t| (i, t)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((i, _)) = hit else { continue };
            seen += 1;
            let up = intr.pinhole_pixel(n);
            if map
                .get(i)
                .is_some_and(|s| polygon::contains(&s.polygon, &up, 0.0))
            {
                covered += 1;
            }
        }
    }
    if seen == 0 {
        0.0
    } else {
        covered as f64 / seen as f64
    }
}
