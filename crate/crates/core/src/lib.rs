//! Design, simulation, calibration and decoding for planar-mirror light-field
//! camera adapters.
//!
//! An array of planar mirrors in front of a single camera splits its image into
//! sub-images, each seen from a virtual camera (the real camera reflected
//! through one mirror). The modules follow the life of such an adapter:
//!
//! - [`geometry`]: reflection algebra, the distorted pinhole model, convex polygons.
//! - [`design`]: faceted-parabola initialization, grid/overlap cost, constraints
//!   and the derivative-free optimizer.
//! - [`simulate`]: ray-traced raw frames and analytic checkerboard observations.
//! - [`calibrate`]: Levenberg–Marquardt over the 3-DOF mirror planes.
//! - [`decode`]: undistort, slice and rectify raw frames into a 4D light field.
//! - [`features`]: 4D features filtered by the point-plane correspondence.
//! - [`io`]: file formats shared by the command-line tool.

// `!(x > y)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod decode;
pub mod design;
pub mod error;
pub mod features;
pub mod geometry;
pub mod io;
pub mod simulate;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
