use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::camera::Pose;
use super::polygon;
use super::serde_mat3;
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// A planar mirror: the plane `{x : normal · x = offset}` plus a convex extent
/// expressed in an in-plane frame.
///
/// The plane carries three degrees of freedom (two for the normal, one for the
/// offset); the extent only bounds which rays hit the mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Counter-clockwise polygon in `(frame_axes[0], frame_axes[1])` coordinates.
    pub extent: Vec<Vector2<f64>>,
    pub frame_origin: Vector3<f64>,
    pub frame_axes: [Vector3<f64>; 2],
}

impl MirrorPlane {
    /// Builds a mirror from an in-plane frame; the normal is `u × v`.
    pub fn from_frame(
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        extent: Vec<Vector2<f64>>,
    ) -> Result<Self> {
        let u = u
            .try_normalize(1e-15)
            .ok_or_else(|| Error::InvalidPlane("zero frame axis".into()))?;
        let v = (v - u * u.dot(&v))
            .try_normalize(1e-15)
            .ok_or_else(|| Error::InvalidPlane("degenerate frame axes".into()))?;
        let normal = u.cross(&v);
        let plane = MirrorPlane {
            normal,
            offset: normal.dot(&origin),
            extent,
            frame_origin: origin,
            frame_axes: [u, v],
        };
        plane.validate()?;
        Ok(plane)
    }

    /// Checks the plane invariants (unit normal, frame on plane, convex CCW extent).
    pub fn validate(&self) -> Result<()> {
        self.validate_plane()?;
        let [u, v] = &self.frame_axes;
        if (u.norm() - 1.0).abs() > UNIT_TOL
            || (v.norm() - 1.0).abs() > UNIT_TOL
            || u.dot(v).abs() > UNIT_TOL
            || u.dot(&self.normal).abs() > UNIT_TOL
            || v.dot(&self.normal).abs() > UNIT_TOL
        {
            return Err(Error::InvalidPlane(
                "frame axes are not orthonormal in-plane".into(),
            ));
        }
        if (self.normal.dot(&self.frame_origin) - self.offset).abs() > UNIT_TOL {
            return Err(Error::InvalidPlane("frame origin is off the plane".into()));
        }
        if self.extent.len() < 3 {
            return Err(Error::InvalidPlane(
                "extent needs at least 3 vertices".into(),
            ));
        }
        if !(polygon::signed_area(&self.extent) > 0.0) || !polygon::is_convex(&self.extent) {
            return Err(Error::InvalidPlane(
                "extent must be convex and counter-clockwise".into(),
            ));
        }
        Ok(())
    }

    /// Checks only the 3-DOF part (unit normal, finite offset).
    pub fn validate_plane(&self) -> Result<()> {
        if !((self.normal.norm() - 1.0).abs() < UNIT_TOL) || !self.offset.is_finite() {
            return Err(Error::InvalidPlane(format!(
                "normal must be unit length (|n| = {})",
                self.normal.norm()
            )));
        }
        Ok(())
    }

    /// Householder matrix `I - 2 n nᵀ`.
    #[inline]
    pub fn householder(&self) -> Matrix3<f64> {
        Matrix3::identity() - 2.0 * self.normal * self.normal.transpose()
    }

    #[inline]
    pub fn reflect_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - 2.0 * (self.normal.dot(p) - self.offset) * self.normal
    }

    #[inline]
    pub fn reflect_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        d - 2.0 * self.normal.dot(d) * self.normal
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    #[inline]
    pub fn to_world(&self, q: &Vector2<f64>) -> Vector3<f64> {
        self.frame_origin + self.frame_axes[0] * q.x + self.frame_axes[1] * q.y
    }

    #[inline]
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let d = p - self.frame_origin;
        Vector2::new(d.dot(&self.frame_axes[0]), d.dot(&self.frame_axes[1]))
    }

    pub fn world_vertices(&self) -> Vec<Vector3<f64>> {
        self.extent.iter().map(|q| self.to_world(q)).collect()
    }

    pub fn centroid_world(&self) -> Vector3<f64> {
        self.to_world(&polygon::centroid(&self.extent))
    }

    /// Ray parameter `t > 0` where `origin + t dir` meets the plane.
    #[inline]
    pub fn ray_plane(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = (self.offset - self.normal.dot(origin)) / denom;
        (t > 1e-12).then_some(t)
    }

    /// Ray parameter of the hit inside the extent, if any.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let t = self.ray_plane(origin, dir)?;
        let q = self.to_local(&(origin + dir * t));
        polygon::contains(&self.extent, &q, 0.0).then_some(t)
    }

    /// Rebuilds the mirror on a new plane, rotating the frame by the minimal
    /// rotation between the normals and projecting the origin onto the plane.
    pub fn with_plane(&self, normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let normal = normal
            .try_normalize(1e-15)
            .ok_or_else(|| Error::InvalidPlane("zero normal".into()))?;
        let rot = nalgebra::Rotation3::rotation_between(&self.normal, &normal)
            .unwrap_or_else(nalgebra::Rotation3::identity);
        let origin = self.frame_origin + (offset - normal.dot(&self.frame_origin)) * normal;
        let mut u = rot * self.frame_axes[0];
        u = (u - normal * normal.dot(&u)).normalize();
        let v = normal.cross(&u);
        Ok(MirrorPlane {
            normal,
            offset,
            extent: self.extent.clone(),
            frame_origin: origin,
            frame_axes: [u, v],
        })
    }
}

/// The 4×4 homogeneous reflection through the mirror plane.
///
/// Linear part `I - 2 n nᵀ`, translation `2 offset n`.
pub fn reflection_matrix(plane: &MirrorPlane) -> Result<Matrix4<f64>> {
    plane.validate_plane()?;
    let m = plane.householder();
    let t = 2.0 * plane.offset * plane.normal;
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
    h.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    Ok(h)
}

/// The reflection of a real camera through a mirror.
///
/// `orientation` keeps the reflected (left-handed) frame: det = −1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualCamera {
    pub center: Vector3<f64>,
    #[serde(with = "serde_mat3")]
    pub orientation: Matrix3<f64>,
    pub mirror_index: usize,
}

impl VirtualCamera {
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.orientation.column(2).into_owned()
    }
}

pub fn virtual_camera(
    real: &Pose,
    plane: &MirrorPlane,
    mirror_index: usize,
) -> Result<VirtualCamera> {
    plane.validate_plane()?;
    real.validate()?;
    Ok(VirtualCamera {
        center: plane.reflect_point(&real.center),
        orientation: plane.householder() * real.rotation,
        mirror_index,
    })
}
