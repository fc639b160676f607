//! 4D light-field features: 2D keypoints in every view, matched to the
//! central view and filtered by the point-plane correspondence. Each
//! accepted feature carries a consolidated slope (pixels per grid step).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::decode::{LightField4D, MaskedImage, RectifiedGridModel};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint2D {
    pub s: usize,
    pub t: usize,
    pub u: f64,
    pub v: f64,
    pub response: f64,
    pub descriptor: Vec<f64>,
}

impl Keypoint2D {
    pub fn pixel(&self) -> Vector2<f64> {
        Vector2::new(self.u, self.v)
    }
}

/// Anything that turns a view into keypoints.
pub trait Detector {
    fn detect(&self, image: &MaskedImage, s: usize, t: usize) -> Vec<Keypoint2D>;
}

/// Harris corners with raw 8×8 intensity-patch descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarrisDetector {
    /// Pre-smoothing before differentiation (px).
    pub sigma_d: f64,
    /// Structure-tensor window (px).
    pub sigma_i: f64,
    pub k: f64,
    /// Responses below `relative_threshold · max` are discarded.
    pub relative_threshold: f64,
    pub nms_radius: usize,
    /// Sample spacing of the descriptor patch (px).
    pub patch_step: f64,
    pub max_keypoints: usize,
}

impl Default for HarrisDetector {
    fn default() -> Self {
        HarrisDetector {
            sigma_d: 1.0,
            sigma_i: 2.0,
            k: 0.04,
            relative_threshold: 0.01,
            nms_radius: 3,
            patch_step: 1.0,
            max_keypoints: 2000,
        }
    }
}

pub const PATCH: usize = 8;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable convolution with clamped borders.
fn blur(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x as i64 + j as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * img[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = (y as i64 + j as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Chebyshev distance (capped at `cap`) from each pixel to the nearest
/// masked pixel or image border.
fn mask_distance(mask: &[bool], w: usize, h: usize, cap: usize) -> Vec<usize> {
    let mut d: Vec<usize> = mask.iter().map(|m| if *m { cap } else { 0 }).collect();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                d[y * w + x] = 0;
            }
        }
    }
    // Two chamfer passes with the 8-neighbourhood give the Chebyshev metric.
    for y in 0..h {
        for x in 0..w {
            let mut best = d[y * w + x];
            if x > 0 {
                best = best.min(d[y * w + x - 1] + 1);
            }
            if y > 0 {
                best = best.min(d[(y - 1) * w + x] + 1);
                if x > 0 {
                    best = best.min(d[(y - 1) * w + x - 1] + 1);
                }
                if x + 1 < w {
                    best = best.min(d[(y - 1) * w + x + 1] + 1);
                }
            }
            d[y * w + x] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let mut best = d[y * w + x];
            if x + 1 < w {
                best = best.min(d[y * w + x + 1] + 1);
            }
            if y + 1 < h {
                best = best.min(d[(y + 1) * w + x] + 1);
                if x + 1 < w {
                    best = best.min(d[(y + 1) * w + x + 1] + 1);
                }
                if x > 0 {
                    best = best.min(d[(y + 1) * w + x - 1] + 1);
                }
            }
            d[y * w + x] = best;
        }
    }
    d
}

/// Offset of a parabola's vertex through three samples, in `[-0.5, 0.5]`.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom < 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

impl HarrisDetector {
    fn border(&self) -> usize {
        let support = (3.0 * self.sigma_d).ceil() + (3.0 * self.sigma_i).ceil() + 2.0;
        let patch = self.patch_step * PATCH as f64 / 2.0 + 1.0;
        support.max(patch).ceil() as usize
    }

    pub fn response_map(&self, image: &MaskedImage) -> Vec<f64> {
        let (w, h) = (image.width, image.height);
        let filled: Vec<f64> = image
            .pixels
            .iter()
            .zip(&image.mask)
            .map(|(p, m)| if *m { *p } else { 0.0 })
            .collect();
        let sm = blur(&filled, w, h, self.sigma_d);
        let (mut xx, mut yy, mut xy) = (vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]);
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let i = y * w + x;
                let gx = 0.5 * (sm[i + 1] - sm[i - 1]);
                let gy = 0.5 * (sm[i + w] - sm[i - w]);
                xx[i] = gx * gx;
                yy[i] = gy * gy;
                xy[i] = gx * gy;
            }
        }
        let (xx, yy, xy) = (
            blur(&xx, w, h, self.sigma_i),
            blur(&yy, w, h, self.sigma_i),
            blur(&xy, w, h, self.sigma_i),
        );
        (0..w * h)
            .map(|i| {
                let tr = xx[i] + yy[i];
                xx[i] * yy[i] - xy[i] * xy[i] - self.k * tr * tr
            })
            .collect()
    }

    /// Raw 8×8 patch around a subpixel location, or `None` if it leaves the
    /// valid region.
    pub fn describe(&self, image: &MaskedImage, u: f64, v: f64) -> Option<Vec<f64>> {
        let half = (PATCH as f64 - 1.0) / 2.0;
        let mut d = Vec::with_capacity(PATCH * PATCH);
        for j in 0..PATCH {
            for i in 0..PATCH {
                let x = u + (i as f64 - half) * self.patch_step;
                let y = v + (j as f64 - half) * self.patch_step;
                d.push(image.sample(x, y)?);
            }
        }
        Some(d)
    }
}

impl Detector for HarrisDetector {
    fn detect(&self, image: &MaskedImage, s: usize, t: usize) -> Vec<Keypoint2D> {
        let (w, h) = (image.width, image.height);
        if w < 3 || h < 3 || image.valid_count() == 0 {
            return Vec::new();
        }
        let resp = self.response_map(image);
        let border = self.border();
        let dist = mask_distance(&image.mask, w, h, border + 1);
        let max = resp
            .iter()
            .zip(&dist)
            .filter(|(_, d)| **d > border)
            .map(|(r, _)| *r)
            .fold(0.0, f64::max);
        if !(max > 1e-12) {
            return Vec::new();
        }
        let thr = self.relative_threshold * max;
        let r = self.nms_radius as i64;
        let mut kps = Vec::new();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let v0 = resp[i];
                if v0 <= thr || dist[i] <= border {
                    continue;
                }
                let mut is_max = true;
                'nms: for dy in -r..=r {
                    for dx in -r..=r {
                        let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                        if (dx, dy) == (0, 0)
                            || xx < 0
                            || yy < 0
                            || xx >= w as i64
                            || yy >= h as i64
                        {
                            continue;
                        }
                        let j = yy as usize * w + xx as usize;
                        // Ties go to the earlier pixel in raster order.
                        if resp[j] > v0 || (resp[j] == v0 && j < i) {
                            is_max = false;
                            break 'nms;
                        }
                    }
                }
                if !is_max {
                    continue;
                }
                let u = x as f64 + parabolic_offset(resp[i - 1], v0, resp[i + 1]);
                let v = y as f64 + parabolic_offset(resp[i - w], v0, resp[i + w]);
                if let Some(descriptor) = self.describe(image, u, v) {
                    kps.push(Keypoint2D {
                        s,
                        t,
                        u,
                        v,
                        response: v0,
                        descriptor,
                    });
                }
            }
        }
        kps.sort_by(|a, b| {
            b.response
                .total_cmp(&a.response)
                .then(a.v.total_cmp(&b.v))
                .then(a.u.total_cmp(&b.u))
        });
        kps.truncate(self.max_keypoints);
        kps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Largest accepted distance between observed and predicted location.
    pub max_dist_px: f64,
    pub n_min: usize,
    /// Ratio-test threshold on best / second-best descriptor distance.
    pub match_ratio: f64,
    /// Matches must lie within this distance of the epipolar ray through the
    /// central location; `None` disables the gate.
    pub epipolar_tol_px: Option<f64>,
    /// Admissible slope interval for matches (px per grid step).
    pub slope_range: (f64, f64),
}

impl FilterConfig {
    /// Defaults for an `S × T` light field: `n_min = ceil(0.75 S T)`.
    pub fn for_grid(s_count: usize, t_count: usize) -> Self {
        FilterConfig {
            max_dist_px: 1.0,
            n_min: ((0.75 * (s_count * t_count) as f64).ceil() as usize).max(2),
            match_ratio: 0.8,
            epipolar_tol_px: Some(3.0),
            slope_range: (0.0, f64::INFINITY),
        }
    }

    pub fn validate(&self, view_count: usize) -> Result<()> {
        if !(self.max_dist_px > 0.0) {
            return Err(Error::Invalid("max_dist_px must be positive".into()));
        }
        if self.n_min < 2 || self.n_min > view_count {
            return Err(Error::Invalid(format!(
                "n_min must lie in [2, {view_count}], got {}",
                self.n_min
            )));
        }
        if !(self.match_ratio > 0.0 && self.match_ratio <= 1.0) {
            return Err(Error::Invalid("match_ratio must lie in (0, 1]".into()));
        }
        if self.epipolar_tol_px.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Invalid("epipolar tolerance must be positive".into()));
        }
        if !(self.slope_range.0 <= self.slope_range.1) {
            return Err(Error::Invalid("slope range is empty".into()));
        }
        Ok(())
    }
}

/// How the image of a scene point moves from the central view to another
/// view, as a function of its slope `w`.
///
/// Slopes are pixels of u-shift per unit s step on the ideal grid, so
/// `w = fx·|s_step| / z` for a point at depth `z`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisparityModel {
    /// Parallel views on an exact grid: `Δpixel = w·(Δs, g·Δt)` with `g` the
    /// t-to-s step ratio in pixels.
    Ideal { t_over_s: f64 },
    /// Parallel views at their actual virtual centers. Off-grid offsets,
    /// including along the optical axis, are predicted exactly rather than
    /// absorbed into the match tolerance.
    Calibrated {
        intrinsics: CameraIntrinsics,
        /// Length of one s step (m).
        unit_m: f64,
        /// Virtual center of view `(s, t)` in target-frame coordinates.
        centers: Vec<((usize, usize), Vector3<f64>)>,
    },
}

/// Shift `n·w / (k − w·dz)` of one view relative to the central one.
#[derive(Debug, Clone, Copy)]
struct Shift {
    n: Vector2<f64>,
    k: f64,
    dz: f64,
}

impl Shift {
    fn at(&self, w: f64) -> Vector2<f64> {
        self.n * (w / (self.k - w * self.dz))
    }

    /// d(at)/dw.
    fn rate(&self, w: f64) -> Vector2<f64> {
        let den = self.k - w * self.dz;
        self.n * (self.k / (den * den))
    }
}

impl DisparityModel {
    pub fn ideal(t_over_s: f64) -> Self {
        DisparityModel::Ideal { t_over_s }
    }

    /// Uses the virtual centers of a decoded grid model.
    pub fn from_grid(model: &RectifiedGridModel) -> Self {
        let rt = model.target_orientation.transpose();
        let unit = if model.s_count > 1 {
            model.s_step.norm()
        } else {
            model.t_step.norm()
        };
        DisparityModel::Calibrated {
            intrinsics: model.target_intrinsics,
            unit_m: unit,
            centers: model
                .views
                .iter()
                .map(|v| ((v.s, v.t), rt * v.center))
                .collect(),
        }
    }

    fn shift(&self, central: &Keypoint2D, s: usize, t: usize) -> Result<Shift> {
        let ds = s as f64 - central.s as f64;
        let dt = t as f64 - central.t as f64;
        let shift = match self {
            DisparityModel::Ideal { t_over_s } => Shift {
                n: Vector2::new(ds, dt * t_over_s),
                k: 1.0,
                dz: 0.0,
            },
            DisparityModel::Calibrated {
                intrinsics: k,
                unit_m,
                centers,
            } => {
                let find = |s: usize, t: usize| {
                    centers
                        .iter()
                        .find(|(st, _)| *st == (s, t))
                        .map(|(_, c)| *c)
                        .ok_or_else(|| {
                            Error::Invalid(format!("no view ({s}, {t}) in the grid model"))
                        })
                };
                let d = find(s, t)? - find(central.s, central.t)?;
                let off_axis = central.pixel() - Vector2::new(k.cx, k.cy);
                Shift {
                    n: Vector2::new(-k.fx * d.x, -k.fy * d.y) + off_axis * d.z,
                    k: k.fx * unit_m,
                    dz: d.z,
                }
            }
        };
        Ok(shift)
    }
}

/// Slope that explains `other` as the central keypoint seen from its view.
pub fn slope_from_pair(
    central: &Keypoint2D,
    other: &Keypoint2D,
    model: &DisparityModel,
) -> Result<f64> {
    let sh = model.shift(central, other.s, other.t)?;
    let nn = sh.n.norm_squared();
    if nn == 0.0 {
        return Err(Error::Invalid("pair lies in the same view".into()));
    }
    // Δp = λ·n with λ = w / (k − w·dz), solved for w.
    let lambda = (other.pixel() - central.pixel()).dot(&sh.n) / nn;
    let den = 1.0 + lambda * sh.dz;
    if !(den > 0.0) {
        return Err(Error::Geometry(
            "pair implies a point behind the views".into(),
        ));
    }
    Ok(lambda * sh.k / den)
}

/// Expected location in view `(s, t)` of a feature with the given slope.
pub fn predict_location(
    central: &Keypoint2D,
    slope: f64,
    s: usize,
    t: usize,
    model: &DisparityModel,
) -> Result<Vector2<f64>> {
    Ok(central.pixel() + model.shift(central, s, t)?.at(slope))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub central: usize,
    pub other: usize,
    /// Best over second-best descriptor distance (0 when unopposed).
    pub ratio: f64,
}

fn descriptor_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// True when `other` could be `central` seen at an admissible slope.
fn epipolar_ok(
    central: &Keypoint2D,
    other: &Keypoint2D,
    config: &FilterConfig,
    model: &DisparityModel,
) -> bool {
    let Some(tol) = config.epipolar_tol_px else {
        return true;
    };
    let Ok(w) = slope_from_pair(central, other, model) else {
        return false;
    };
    let w = w.clamp(config.slope_range.0, config.slope_range.1);
    predict_location(central, w, other.s, other.t, model)
        .is_ok_and(|p| (other.pixel() - p).norm() <= tol)
}

/// One-to-one matches between central and other-view keypoints: nearest
/// descriptor passing the ratio test in both directions, mutually best,
/// among pairs that satisfy the epipolar gate.
pub fn match_to_central(
    central: &[Keypoint2D],
    other: &[Keypoint2D],
    config: &FilterConfig,
    model: &DisparityModel,
) -> Vec<Match> {
    let gate: Vec<Vec<bool>> = central
        .iter()
        .map(|c| {
            other
                .iter()
                .map(|o| epipolar_ok(c, o, config, model))
                .collect()
        })
        .collect();
    let dist: Vec<Vec<f64>> = central
        .iter()
        .map(|c| {
            other
                .iter()
                .map(|o| descriptor_distance(&c.descriptor, &o.descriptor))
                .collect()
        })
        .collect();
    // Best and second-best over the admissible entries of an iterator.
    fn best_two(it: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
        let (mut b, mut bd, mut sd) = (None, f64::INFINITY, f64::INFINITY);
        for (j, d) in it {
            if d < bd {
                sd = bd;
                bd = d;
                b = Some(j);
            } else if d < sd {
                sd = d;
            }
        }
        let ratio = if sd.is_finite() {
            if sd > 0.0 {
                bd / sd
            } else {
                1.0
            }
        } else {
            0.0
        };
        b.map(|j| (j, ratio))
    }
    let forward: Vec<Option<(usize, f64)>> = (0..central.len())
        .map(|i| {
            best_two(
                (0..other.len())
                    .filter(|&j| gate[i][j])
                    .map(|j| (j, dist[i][j])),
            )
        })
        .collect();
    let backward: Vec<Option<(usize, f64)>> = (0..other.len())
        .map(|j| {
            best_two(
                (0..central.len())
                    .filter(|&i| gate[i][j])
                    .map(|i| (i, dist[i][j])),
            )
        })
        .collect();
    let mut out = Vec::new();
    for (i, f) in forward.iter().enumerate() {
        let Some((j, r)) = *f else { continue };
        let Some((ib, rb)) = backward[j] else {
            continue;
        };
        if ib == i && r < config.match_ratio && rb < config.match_ratio {
            out.push(Match {
                central: i,
                other: j,
                ratio: r.max(rb),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewMatch {
    pub s: usize,
    pub t: usize,
    pub u: f64,
    pub v: f64,
    pub ratio: f64,
}

/// A central keypoint and its matches in other views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature4DCandidate {
    pub central: Keypoint2D,
    pub matches: Vec<ViewMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature4D {
    pub u: f64,
    pub v: f64,
    /// Pixels of shift per grid step; positive when features move with +s.
    pub slope: f64,
    /// Supporting views, the central one included.
    pub support: usize,
    /// RMS distance of supporting non-central views from the consolidated
    /// prediction.
    pub residual_rms_px: f64,
    pub views: Vec<(usize, usize)>,
}

/// Least-squares slope over `views` (Gauss-Newton; one step when the
/// model is linear in the slope).
fn consolidated(c: &Keypoint2D, views: &[(&ViewMatch, Shift)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (m, sh) in views {
        let q = sh.n / sh.k;
        num += (Vector2::new(m.u, m.v) - c.pixel()).dot(&q);
        den += q.norm_squared();
    }
    let mut w = num / den;
    for _ in 0..8 {
        let (mut g, mut h) = (0.0, 0.0);
        for (m, sh) in views {
            let r = Vector2::new(m.u, m.v) - c.pixel() - sh.at(w);
            let j = sh.rate(w);
            g += j.dot(&r);
            h += j.norm_squared();
        }
        let step = g / h;
        w += step;
        if step.abs() <= 1e-12 * w.abs().max(1.0) {
            break;
        }
    }
    w
}

fn miss(c: &Keypoint2D, m: &ViewMatch, sh: &Shift, w: f64) -> f64 {
    (Vector2::new(m.u, m.v) - c.pixel() - sh.at(w)).norm()
}

/// Point-plane filter.
///
/// The best-ratio match seeds a slope; views whose match lies within
/// `max_dist_px` of the resulting prediction are accepted. With at least
/// `n_min` views (central included) the slope is refit over the accepted
/// views, and views still within bound of the refit slope form the support.
/// Candidates whose support drops below `n_min` are discarded.
pub fn filter_point_plane(
    candidates: &[Feature4DCandidate],
    config: &FilterConfig,
    model: &DisparityModel,
) -> Vec<Feature4D> {
    let mut out = Vec::new();
    for cand in candidates {
        let c = &cand.central;
        let others: Vec<(&ViewMatch, Shift)> = cand
            .matches
            .iter()
            .filter(|m| (m.s, m.t) != (c.s, c.t))
            .filter_map(|m| model.shift(c, m.s, m.t).ok().map(|sh| (m, sh)))
            .collect();
        let Some((seed, _)) = others.iter().min_by(|(a, _), (b, _)| {
            a.ratio
                .total_cmp(&b.ratio)
                .then((a.t, a.s).cmp(&(b.t, b.s)))
        }) else {
            continue;
        };
        let seed_kp = Keypoint2D {
            s: seed.s,
            t: seed.t,
            u: seed.u,
            v: seed.v,
            response: 0.0,
            descriptor: Vec::new(),
        };
        let Ok(w0) = slope_from_pair(c, &seed_kp, model) else {
            continue;
        };
        let accepted: Vec<(&ViewMatch, Shift)> = others
            .iter()
            .copied()
            .filter(|(m, sh)| miss(c, m, sh, w0) <= config.max_dist_px)
            .collect();
        if accepted.len() + 1 < config.n_min {
            continue;
        }
        let w = consolidated(c, &accepted);
        let kept: Vec<(&ViewMatch, Shift)> = accepted
            .iter()
            .copied()
            .filter(|(m, sh)| miss(c, m, sh, w) <= config.max_dist_px)
            .collect();
        if kept.len() + 1 < config.n_min {
            continue;
        }
        let rms = (kept
            .iter()
            .map(|(m, sh)| miss(c, m, sh, w).powi(2))
            .sum::<f64>()
            / kept.len() as f64)
            .sqrt();
        let mut views: Vec<(usize, usize)> = std::iter::once((c.s, c.t))
            .chain(kept.iter().map(|(m, _)| (m.s, m.t)))
            .collect();
        views.sort_by_key(|&(s, t)| (t, s));
        out.push(Feature4D {
            u: c.u,
            v: c.v,
            slope: w,
            support: kept.len() + 1,
            residual_rms_px: rms,
            views,
        });
    }
    out
}

/// Detect in every view, match each to the central view and filter.
pub fn extract_features(
    lf: &LightField4D,
    detector: &dyn Detector,
    config: &FilterConfig,
) -> Result<Vec<Feature4D>> {
    config.validate(lf.s_count * lf.t_count)?;
    let Some(central) = lf.central() else {
        return Ok(Vec::new());
    };
    let model = DisparityModel::from_grid(&lf.model);
    let ckps = detector.detect(&central.image, central.s, central.t);
    let mut candidates: Vec<Feature4DCandidate> = ckps
        .iter()
        .map(|k| Feature4DCandidate {
            central: k.clone(),
            matches: Vec::new(),
        })
        .collect();
    for view in &lf.views {
        if (view.s, view.t) == (central.s, central.t) {
            continue;
        }
        let kps = detector.detect(&view.image, view.s, view.t);
        for m in match_to_central(&ckps, &kps, config, &model) {
            let o = &kps[m.other];
            candidates[m.central].matches.push(ViewMatch {
                s: o.s,
                t: o.t,
                u: o.u,
                v: o.v,
                ratio: m.ratio,
            });
        }
    }
    Ok(filter_point_plane(&candidates, config, &model))
}
