use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::serde_mat3;
use crate::error::{Error, Result};

/// Pinhole intrinsics with two-term radial distortion.
///
/// Pixel centers sit at integer coordinates, so a centered principal point of
/// a `w`-wide sensor is `(w - 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// Centered intrinsics from a horizontal field of view in degrees.
    pub fn from_hfov(width: u32, height: u32, hfov_deg: f64, k1: f64, k2: f64) -> Self {
        let fx = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        CameraIntrinsics {
            fx,
            fy: fx,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            k1,
            k2,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid(
                "intrinsics contain non-finite values".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Invalid("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("sensor size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::Invalid(
                "principal point lies outside the sensor".into(),
            ));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0
    }

    /// Same pinhole with the distortion terms zeroed.
    pub fn without_distortion(&self) -> Self {
        CameraIntrinsics {
            k1: 0.0,
            k2: 0.0,
            ..*self
        }
    }

    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn k_inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Radial distortion factor `1 + k1 r^2 + k2 r^4`.
    #[inline]
    pub fn radial_factor(&self, r2: f64) -> f64 {
        1.0 + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// Normalized (undistorted) coordinates to distorted pixel coordinates.
    #[inline]
    pub fn normalized_to_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        let f = self.radial_factor(n.norm_squared());
        Vector2::new(self.fx * n.x * f + self.cx, self.fy * n.y * f + self.cy)
    }

    /// Normalized coordinates to pixels ignoring distortion.
    #[inline]
    pub fn pinhole_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    #[inline]
    pub fn pinhole_normalized(&self, px: Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn in_bounds(&self, px: Vector2<f64>) -> bool {
        px.x >= 0.0
            && px.y >= 0.0
            && px.x <= self.width as f64 - 1.0
            && px.y <= self.height as f64 - 1.0
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * (self.width as f64).hypot(self.height as f64)
    }
}

/// Rigid camera pose; `rotation` maps camera-frame vectors to world frame.
///
/// Camera frame: +x right, +y down, +z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(with = "serde_mat3")]
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let pose = Pose { rotation, center };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            center: Vector3::zeros(),
        }
    }

    /// Camera at `center` looking at `target`; image "up" (−y) follows `up`.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let z = (target - center)
            .try_normalize(1e-15)
            .ok_or_else(|| Error::Invalid("look_at target coincides with center".into()))?;
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Invalid("look_at up vector is parallel to view".into()))?;
        let y = z.cross(&x);
        Pose::new(Matrix3::from_columns(&[x, y, z]), center)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(ortho < 1e-9) || !((r.determinant() - 1.0).abs() < 1e-9) {
            return Err(Error::Invalid(
                "pose rotation must be orthonormal with det +1".into(),
            ));
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("pose center is not finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(&(p - self.center))
    }

    #[inline]
    pub fn camera_to_world_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.center
    }

    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }
}

/// Projects a world point through a distorted pinhole camera.
pub fn project(intr: &CameraIntrinsics, pose: &Pose, point: &Vector3<f64>) -> Result<Vector2<f64>> {
    let pc = pose.world_to_camera(point);
    if !(pc.z > 1e-12) {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    Ok(intr.normalized_to_pixel(Vector2::new(pc.x / pc.z, pc.y / pc.z)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UndistortOptions {
    /// Allowed distance from the principal point, in multiples of the half diagonal.
    pub domain_factor: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for UndistortOptions {
    fn default() -> Self {
        UndistortOptions {
            domain_factor: 1.5,
            max_iter: 20,
            tolerance: 1e-10,
        }
    }
}

/// Inverts the radial model: distorted pixel to undistorted normalized coordinates.
pub fn undistort_pixel(intr: &CameraIntrinsics, pixel: Vector2<f64>) -> Result<Vector2<f64>> {
    undistort_pixel_with(intr, pixel, &UndistortOptions::default())
}

pub fn undistort_pixel_with(
    intr: &CameraIntrinsics,
    pixel: Vector2<f64>,
    opts: &UndistortOptions,
) -> Result<Vector2<f64>> {
    let du = pixel.x - intr.cx;
    let dv = pixel.y - intr.cy;
    if !(du.hypot(dv) <= opts.domain_factor * intr.half_diagonal()) {
        return Err(Error::OutOfDomain {
            u: pixel.x,
            v: pixel.y,
        });
    }
    let xd = Vector2::new(du / intr.fx, dv / intr.fy);
    if !intr.has_distortion() {
        return Ok(xd);
    }
    let rd = xd.norm();
    if rd == 0.0 {
        return Ok(xd);
    }
    let r = solve_radius(intr.k1, intr.k2, rd, opts)?;
    Ok(xd * (r / rd))
}

/// Damped Newton on `r (1 + k1 r^2 + k2 r^4) = rd`.
fn solve_radius(k1: f64, k2: f64, rd: f64, opts: &UndistortOptions) -> Result<f64> {
    let g = |r: f64| {
        let r2 = r * r;
        r * (1.0 + k1 * r2 + k2 * r2 * r2) - rd
    };
    let mut r = rd;
    let mut gr = g(r);
    for _ in 0..opts.max_iter {
        if gr.abs() <= opts.tolerance * rd.max(1e-3) {
            return Ok(r);
        }
        let r2 = r * r;
        let slope = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
        if !(slope > 1e-9) {
            break;
        }
        let step = gr / slope;
        let mut lambda = 1.0;
        let mut next = r - step;
        let mut g_next = g(next);
        while g_next.abs() > gr.abs() && lambda > 1e-4 {
            lambda *= 0.5;
            next = r - lambda * step;
            g_next = g(next);
        }
        r = next;
        gr = g_next;
    }
    if gr.abs() <= opts.tolerance * rd.max(1e-3) && r > 0.0 {
        return Ok(r);
    }
    Err(Error::Divergence {
        iterations: opts.max_iter,
        residual: gr.abs(),
    })
}
