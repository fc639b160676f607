//! Raw frame to 4D light field: undistort, slice into sub-images, and warp
//! each sub-image into the orientation of the central view.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polygon, serde_mat3, CameraIntrinsics};
use crate::simulate::{RawImage, SubImageMap};

/// Homographies worse conditioned than this are rejected.
pub const MAX_HOMOGRAPHY_CONDITION: f64 = 1e8;

/// One view of the rectified grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub mirror_index: usize,
    pub s: usize,
    pub t: usize,
    /// Virtual camera center.
    pub center: Vector3<f64>,
    /// Nearest point of the fitted grid.
    pub fitted_center: Vector3<f64>,
    /// `center − fitted_center`; reported, not compensated.
    pub residual: Vector3<f64>,
    /// Rectifying rotation `R_rel = (O D)ᵀ T` from the x-flipped virtual
    /// frame to the target frame.
    #[serde(with = "serde_mat3")]
    pub rotation: Matrix3<f64>,
}

/// The nearest grid of parallel cameras and the sampling of its views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifiedGridModel {
    pub s_count: usize,
    pub t_count: usize,
    /// Sorted by `(t, s)`.
    pub views: Vec<GridView>,
    /// Camera-to-world rotation shared by all rectified views.
    #[serde(with = "serde_mat3")]
    pub target_orientation: Matrix3<f64>,
    pub target_intrinsics: CameraIntrinsics,
    pub base_intrinsics: CameraIntrinsics,
    /// World displacement of the virtual center per unit `s` and `t`.
    pub s_step: Vector3<f64>,
    pub t_step: Vector3<f64>,
    /// Mean squared grid-fit residual (m²).
    pub grid_error: f64,
}

const FLIP: Matrix3<f64> = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);

impl RectifiedGridModel {
    pub fn central(&self) -> (usize, usize) {
        (self.s_count / 2, self.t_count / 2)
    }

    pub fn view(&self, s: usize, t: usize) -> Option<&GridView> {
        self.views.iter().find(|v| v.s == s && v.t == t)
    }

    /// Length of one `t` step relative to one `s` step.
    pub fn t_over_s(&self) -> f64 {
        let s = self.s_step.norm();
        if s > 0.0 {
            self.t_step.norm() / s
        } else {
            1.0
        }
    }

    /// Vertical pixel shift per `t` step over horizontal shift per `s` step
    /// for a point at any fixed depth.
    pub fn grid_scale(&self) -> f64 {
        let k = &self.target_intrinsics;
        self.t_over_s() * k.fy / k.fx
    }

    /// Maps target pixels to raw undistorted pixels: `K · D · R_rel · K_t⁻¹`.
    pub fn target_to_raw(&self, view: &GridView) -> Matrix3<f64> {
        self.base_intrinsics.k_matrix() * FLIP * view.rotation * self.target_intrinsics.k_inverse()
    }

    /// Maps raw undistorted pixels to target pixels.
    pub fn raw_to_target(&self, view: &GridView) -> Matrix3<f64> {
        self.target_intrinsics.k_matrix()
            * view.rotation.transpose()
            * FLIP
            * self.base_intrinsics.k_inverse()
    }

    /// Target pixel of a world point seen from the view's virtual center.
    pub fn project(&self, view: &GridView, point: &Vector3<f64>) -> Option<Vector2<f64>> {
        let d = self.target_orientation.transpose() * (point - view.center);
        (d.z > 0.0).then(|| {
            self.target_intrinsics
                .pinhole_pixel(Vector2::new(d.x / d.z, d.y / d.z))
        })
    }
}

/// Grayscale image with a validity mask (`true` = has source data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedImage {
    pub fn empty(width: usize, height: usize) -> Self {
        MaskedImage {
            width,
            height,
            pixels: vec![0.0; width * height],
            mask: vec![false; width * height],
        }
    }

    pub fn from_raw(raw: &RawImage) -> Self {
        MaskedImage {
            width: raw.width,
            height: raw.height,
            pixels: raw.pixels.clone(),
            mask: vec![true; raw.pixels.len()],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.mask[i].then(|| self.pixels[i])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Bilinear sample; `None` if a contributing neighbour is masked or
    /// outside. A zero fractional part uses only the lower neighbour.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(
            self.width,
            self.height,
            &self.pixels,
            Some(&self.mask),
            x,
            y,
        )
    }
}

fn bilinear(w: usize, h: usize, px: &[f64], mask: Option<&[bool]>, x: f64, y: f64) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0) {
        return None;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    if x1 >= w || y1 >= h {
        return None;
    }
    let at = |xx: usize, yy: usize| {
        let i = yy * w + xx;
        match mask {
            Some(m) if !m[i] => None,
            _ => Some(px[i]),
        }
    };
    let top = if fx > 0.0 {
        at(x0, y0)? * (1.0 - fx) + at(x1, y0)? * fx
    } else {
        at(x0, y0)?
    };
    if fy == 0.0 {
        return Some(top);
    }
    let bottom = if fx > 0.0 {
        at(x0, y1)? * (1.0 - fx) + at(x1, y1)? * fx
    } else {
        at(x0, y1)?
    };
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Removes radial distortion by inverse mapping: each output (pinhole)
/// pixel samples the raw image at its distorted location. Pixels without a
/// source, or beyond the radius where the model stops being monotone, are
/// masked.
pub fn undistort_image(raw: &RawImage, intr: &CameraIntrinsics) -> Result<MaskedImage> {
    intr.validate()?;
    if raw.pixels.len() != raw.width * raw.height {
        return Err(Error::Invalid(
            "raw image buffer does not match its size".into(),
        ));
    }
    if !intr.has_distortion() {
        return Ok(MaskedImage::from_raw(raw));
    }
    let (w, h) = (raw.width, raw.height);
    let mut pixels = vec![0.0; w * h];
    let mut mask = vec![false; w * h];
    pixels
        .par_chunks_mut(w)
        .zip(mask.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (prow, mrow))| {
            for x in 0..w {
                let n = intr.pinhole_normalized(Vector2::new(x as f64, y as f64));
                let r2 = n.norm_squared();
                if 1.0 + 3.0 * intr.k1 * r2 + 5.0 * intr.k2 * r2 * r2 <= 0.0 {
                    continue;
                }
                let src = intr.normalized_to_pixel(n);
                if let Some(v) = bilinear(w, h, &raw.pixels, None, src.x, src.y) {
                    prow[x] = v;
                    mrow[x] = true;
                }
            }
        });
    Ok(MaskedImage {
        width: w,
        height: h,
        pixels,
        mask,
    })
}

/// A sub-image cropped to its polygon's bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubView {
    pub mirror_index: usize,
    /// Top-left corner of the crop in the undistorted frame.
    pub x0: usize,
    pub y0: usize,
    pub image: MaskedImage,
    pub warning: Option<String>,
}

/// Crops each sub-image polygon's bounding box; pixels whose centers fall
/// outside the polygon (or had no source) are masked.
pub fn slice(undistorted: &MaskedImage, map: &SubImageMap) -> Vec<SubView> {
    let (w, h) = (undistorted.width, undistorted.height);
    map.subimages
        .iter()
        .map(|si| {
            let poly = &si.polygon;
            let empty = |msg: String| SubView {
                mirror_index: si.mirror_index,
                x0: 0,
                y0: 0,
                image: MaskedImage::empty(0, 0),
                warning: Some(msg),
            };
            if poly.len() < 3 || polygon::signed_area(poly) <= 0.0 {
                return empty(format!(
                    "sub-image {} has an empty polygon",
                    si.mirror_index
                ));
            }
            let lo = poly
                .iter()
                .fold(Vector2::repeat(f64::INFINITY), |a, p| a.inf(p));
            let hi = poly
                .iter()
                .fold(Vector2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
            let x0 = lo.x.ceil().max(0.0) as usize;
            let y0 = lo.y.ceil().max(0.0) as usize;
            let x1 = (hi.x.floor().max(-1.0) as i64).min(w as i64 - 1);
            let y1 = (hi.y.floor().max(-1.0) as i64).min(h as i64 - 1);
            if x1 < x0 as i64 || y1 < y0 as i64 {
                return empty(format!(
                    "sub-image {} lies outside the frame",
                    si.mirror_index
                ));
            }
            let (cw, ch) = (x1 as usize - x0 + 1, y1 as usize - y0 + 1);
            let mut image = MaskedImage::empty(cw, ch);
            for yy in 0..ch {
                for xx in 0..cw {
                    let (gx, gy) = (x0 + xx, y0 + yy);
                    if !polygon::contains(poly, &Vector2::new(gx as f64, gy as f64), 0.0) {
                        continue;
                    }
                    if let Some(v) = undistorted.get(gx, gy) {
                        image.pixels[yy * cw + xx] = v;
                        image.mask[yy * cw + xx] = true;
                    }
                }
            }
            SubView {
                mirror_index: si.mirror_index,
                x0,
                y0,
                image,
                warning: None,
            }
        })
        .collect()
}

fn condition(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let min = sv.min();
    if min > 0.0 {
        sv.max() / min
    } else {
        f64::INFINITY
    }
}

/// Warps a sub-image into the target frame by inverse mapping through
/// `K · D · R_rel · K_t⁻¹` with bilinear interpolation.
pub fn rectify_view(
    sub: &SubView,
    view: &GridView,
    model: &RectifiedGridModel,
) -> Result<MaskedImage> {
    let hmat = model.target_to_raw(view);
    let cond = condition(&hmat);
    if !(cond <= MAX_HOMOGRAPHY_CONDITION) {
        return Err(Error::SingularHomography {
            s: view.s,
            t: view.t,
            condition: cond,
        });
    }
    let ti = &model.target_intrinsics;
    let (w, h) = (ti.width as usize, ti.height as usize);
    let mut out = MaskedImage::empty(w, h);
    if sub.image.width == 0 || sub.image.height == 0 {
        return Ok(out);
    }
    out.pixels
        .par_chunks_mut(w)
        .zip(out.mask.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (prow, mrow))| {
            for u in 0..w {
                let p = hmat * Vector3::new(u as f64, v as f64, 1.0);
                if p.z <= 0.0 {
                    continue;
                }
                let x = p.x / p.z - sub.x0 as f64;
                let y = p.y / p.z - sub.y0 as f64;
                if let Some(val) = sub.image.sample(x, y) {
                    prow[u] = val;
                    mrow[u] = true;
                }
            }
        });
    Ok(out)
}

/// One rectified view of the light field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfView {
    pub s: usize,
    pub t: usize,
    pub mirror_index: usize,
    pub image: MaskedImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightField4D {
    pub s_count: usize,
    pub t_count: usize,
    pub u_count: usize,
    pub v_count: usize,
    /// Sorted by `(t, s)`.
    pub views: Vec<LfView>,
    pub model: RectifiedGridModel,
    pub source_id: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl LightField4D {
    pub fn view(&self, s: usize, t: usize) -> Option<&LfView> {
        self.views.iter().find(|v| v.s == s && v.t == t)
    }

    pub fn central(&self) -> Option<&LfView> {
        let (s, t) = self.model.central();
        self.view(s, t)
    }
}

/// Undistort, slice and rectify a raw frame.
pub fn decode_frame(
    raw: &RawImage,
    model: &RectifiedGridModel,
    map: &SubImageMap,
    source_id: &str,
) -> Result<LightField4D> {
    if raw.width != map.width || raw.height != map.height {
        return Err(Error::Invalid(format!(
            "frame is {}×{} but the sub-image map expects {}×{}",
            raw.width, raw.height, map.width, map.height
        ))
        .at("slice"));
    }
    let und = undistort_image(raw, &model.base_intrinsics).map_err(|e| e.at("undistort"))?;
    let subs = slice(&und, map);
    let mut warnings: Vec<String> = subs.iter().filter_map(|s| s.warning.clone()).collect();
    let ti = &model.target_intrinsics;
    let (uw, vh) = (ti.width as usize, ti.height as usize);
    let views = model
        .views
        .par_iter()
        .map(|gv| {
            let image = match subs.iter().find(|s| s.mirror_index == gv.mirror_index) {
                Some(sub) => rectify_view(sub, gv, model).map_err(|e| e.at("rectify"))?,
                None => MaskedImage::empty(uw, vh),
            };
            Ok(LfView {
                s: gv.s,
                t: gv.t,
                mirror_index: gv.mirror_index,
                image,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for gv in &model.views {
        if !subs.iter().any(|s| s.mirror_index == gv.mirror_index) {
            warnings.push(format!("no sub-image for mirror {}", gv.mirror_index));
        }
    }
    Ok(LightField4D {
        s_count: model.s_count,
        t_count: model.t_count,
        u_count: uw,
        v_count: vh,
        views,
        model: model.clone(),
        source_id: source_id.to_string(),
        warnings,
    })
}

/// The views laid out as one `S·U × T·V` mosaic; masked pixels become 0.
pub fn tile(lf: &LightField4D) -> RawImage {
    let (w, h) = (lf.s_count * lf.u_count, lf.t_count * lf.v_count);
    let mut img = RawImage::new(w, h, 0.0);
    for v in &lf.views {
        for y in 0..lf.v_count {
            for x in 0..lf.u_count {
                if let Some(val) = v.image.get(x, y) {
                    img.set(v.s * lf.u_count + x, v.t * lf.v_count + y, val);
                }
            }
        }
    }
    img
}
