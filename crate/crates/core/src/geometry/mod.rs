//! Reflection algebra, the distorted pinhole model, and convex polygons.

mod camera;
mod mirror;
pub mod polygon;

pub use camera::{
    project, undistort_pixel, undistort_pixel_with, CameraIntrinsics, Pose, UndistortOptions,
};
pub use mirror::{reflection_matrix, virtual_camera, MirrorPlane, VirtualCamera};
pub use polygon::{clip_convex, polygon_area, ConvexPolygon3D, PlaneFrame};

/// Serializes a 3×3 matrix as nested row-major arrays.
pub mod serde_mat3 {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}
