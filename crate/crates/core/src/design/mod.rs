//! Mirror-array design: faceted-parabola initialization, the grid/overlap cost,
//! manufacturability constraints and a derivative-free optimizer.
//!
//! Coordinates are in the design frame: mirrors are laid out over the base
//! plane `z = 0`, and the camera looks at the array along its optical axis.

mod constraints;
mod optimize;

use nalgebra::{DMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::polygon::{self, PlaneFrame};
use crate::geometry::{
    virtual_camera, CameraIntrinsics, ConvexPolygon3D, MirrorPlane, Pose, VirtualCamera,
};

pub use constraints::{
    check_constraints, check_constraints_with, ConstraintOptions, OcclusionSampling, Violation,
    ViolationKind,
};
pub use optimize::{
    optimize, params_to_state, OptimizeOptions, OptimizeOutcome, TraceEntry, PARAMS_PER_MIRROR,
};

/// Evaluation depths used for overlap diagnostics unless the user overrides them.
pub const DEFAULT_EVAL_DEPTHS: [f64; 2] = [0.3, 0.5];

/// User-facing description of the array to design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub rows: usize,
    pub cols: usize,
    /// Width of the square aperture tiled by the mirrors (m).
    pub scale: f64,
    /// Focal length of the initial parabola (m).
    pub focal_hint: f64,
    /// Overlap evaluation distances along the central virtual axis (m).
    pub eval_depths: Vec<f64>,
    /// Weight of the grid term; `1 - alpha` weighs the overlap term.
    pub alpha: f64,
    /// RMS grid residual (m) at which the grid term reaches 1.
    #[serde(default = "default_grid_tolerance")]
    pub grid_tolerance: f64,
    /// Minimum spacing between adjacent mirrors in the base plane (m).
    pub min_gap: f64,
    pub camera: CameraIntrinsics,
    pub camera_pose: Pose,
}

fn default_grid_tolerance() -> f64 {
    1e-3
}

/// 1920×1080 with a 70° horizontal field of view and mild barrel distortion,
/// standing in for a consumer webcam.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::from_hfov(1920, 1080, 70.0, -0.1, 0.02)
}

/// Camera at height `h` above the base plane, looking straight down at it.
pub fn downward_pose(h: f64) -> Pose {
    Pose {
        rotation: nalgebra::Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
        center: Vector3::new(0.0, 0.0, h),
    }
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            rows: 3,
            cols: 3,
            scale: 0.07,
            focal_hint: 0.1,
            eval_depths: DEFAULT_EVAL_DEPTHS.to_vec(),
            alpha: 0.5,
            grid_tolerance: default_grid_tolerance(),
            min_gap: 0.001,
            camera: default_intrinsics(),
            camera_pose: downward_pose(0.12),
        }
    }
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows * self.cols < 2 {
            return Err(Error::Invalid(
                "the array needs at least two mirrors".into(),
            ));
        }
        if !(self.scale > 0.0) || !(self.focal_hint > 0.0) || !(self.grid_tolerance > 0.0) {
            return Err(Error::Invalid(
                "scale, focal_hint and grid_tolerance must be positive".into(),
            ));
        }
        if self.eval_depths.is_empty()
            || self.eval_depths.iter().any(|d| !(*d > 0.0))
            || self.eval_depths.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::Invalid(
                "eval_depths must be positive and strictly increasing".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Invalid("alpha must lie in [0, 1]".into()));
        }
        if !(self.min_gap >= 0.0) {
            return Err(Error::Invalid("min_gap must be non-negative".into()));
        }
        self.camera.validate()?;
        self.camera_pose.validate()
    }

    pub fn mirror_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major index of the central mirror (`rows/2`, `cols/2`).
    pub fn central_index(&self) -> usize {
        (self.rows / 2) * self.cols + self.cols / 2
    }
}

/// Evaluation-plane reference: planes orthogonal to `axis` at distance
/// `depth` from `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReference {
    pub center: Vector3<f64>,
    pub axis: Vector3<f64>,
    /// In-plane direction used as the first axis of evaluation-plane frames.
    pub u_hint: Vector3<f64>,
    /// Central footprint area per evaluation depth when the reference was
    /// taken. The overlap deficit is measured against these, so shrinking
    /// the central mirror cannot fake a full overlap.
    #[serde(default)]
    pub reference_areas: Vec<f64>,
}

impl EvalReference {
    /// Reference from the central virtual camera; `u_hint` is its flipped x axis
    /// so plots read non-mirrored.
    pub fn from_virtual(v: &VirtualCamera) -> Self {
        EvalReference {
            center: v.center,
            axis: v.optical_axis().normalize(),
            u_hint: -v.orientation.column(0).into_owned(),
            reference_areas: Vec::new(),
        }
    }

    pub fn plane(&self, depth: f64) -> Result<PlaneFrame> {
        PlaneFrame::new(self.center + self.axis * depth, self.axis, self.u_hint)
    }
}

/// A mirror array together with the spec it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignState {
    pub spec: DesignSpec,
    /// Row-major `rows × cols` mirrors.
    pub mirrors: Vec<MirrorPlane>,
    /// Fixed during optimization so the cost landscape does not drift.
    pub eval_reference: EvalReference,
}

impl DesignState {
    /// Wraps mirrors, taking the evaluation reference from the current central mirror.
    pub fn new(spec: DesignSpec, mirrors: Vec<MirrorPlane>) -> Result<Self> {
        if mirrors.len() != spec.mirror_count() {
            return Err(Error::Invalid(format!(
                "expected {} mirrors, got {}",
                spec.mirror_count(),
                mirrors.len()
            )));
        }
        let ci = spec.central_index();
        let central = virtual_camera(&spec.camera_pose, &mirrors[ci], ci)?;
        let mut state = DesignState {
            eval_reference: EvalReference::from_virtual(&central),
            spec,
            mirrors,
        };
        let areas = state
            .spec
            .eval_depths
            .iter()
            .map(|&d| {
                let frame = state.eval_reference.plane(d)?;
                Ok(polygon::signed_area(&footprint_local(
                    &state, &frame, ci, d,
                )?))
            })
            .collect::<Result<Vec<_>>>()?;
        state.eval_reference.reference_areas = areas;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.mirrors.len() != self.spec.mirror_count() {
            return Err(Error::Invalid(
                "mirror count does not match rows × cols".into(),
            ));
        }
        for (i, m) in self.mirrors.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::Invalid(format!("mirror {i}: {e}")))?;
            if m.extent.len() != 4 {
                return Err(Error::Invalid(format!(
                    "mirror {i} extent is not a quadrilateral"
                )));
            }
        }
        Ok(())
    }

    pub fn virtual_cameras(&self) -> Result<Vec<VirtualCamera>> {
        self.mirrors
            .iter()
            .enumerate()
            .map(|(i, m)| virtual_camera(&self.spec.camera_pose, m, i))
            .collect()
    }
}

/// Tiles the base-plane square and places each facet on the tangent plane of
/// `z = (x² + y²) / (4 focal_hint)` at its cell center.
pub fn init_faceted_parabola(spec: &DesignSpec) -> Result<DesignState> {
    spec.validate()?;
    let cw = spec.scale / spec.cols as f64;
    let ch = spec.scale / spec.rows as f64;
    if spec.min_gap >= cw.min(ch) {
        return Err(Error::InfeasibleSpacing {
            min_gap: spec.min_gap,
            cell: cw.min(ch),
        });
    }
    // Center the array where the optical axis meets the base plane.
    let axis = spec.camera_pose.optical_axis();
    let c = spec.camera_pose.center;
    if axis.z.abs() < 1e-9 || -c.z / axis.z <= 0.0 {
        return Err(Error::Invalid(
            "camera optical axis does not meet the base plane".into(),
        ));
    }
    let hit = c + axis * (-c.z / axis.z);
    let f = spec.focal_hint;
    let half_gap = spec.min_gap / 2.0;

    let mut mirrors = Vec::with_capacity(spec.mirror_count());
    for r in 0..spec.rows {
        for col in 0..spec.cols {
            let x_lo = -spec.scale / 2.0 + col as f64 * cw + half_gap;
            let x_hi = -spec.scale / 2.0 + (col + 1) as f64 * cw - half_gap;
            let y_lo = -spec.scale / 2.0 + r as f64 * ch + half_gap;
            let y_hi = -spec.scale / 2.0 + (r + 1) as f64 * ch - half_gap;
            let xc = 0.5 * (x_lo + x_hi);
            let yc = 0.5 * (y_lo + y_hi);
            let gx = xc / (2.0 * f);
            let gy = yc / (2.0 * f);
            let z0 = (xc * xc + yc * yc) / (4.0 * f);
            let normal = Vector3::new(-gx, -gy, 1.0).normalize();
            let e1 = Vector3::new(1.0, 0.0, gx).normalize();
            let e2 = normal.cross(&e1);
            let origin = Vector3::new(hit.x + xc, hit.y + yc, z0);
            let corners = [(x_lo, y_lo), (x_hi, y_lo), (x_hi, y_hi), (x_lo, y_hi)];
            let extent = corners
                .iter()
                .map(|&(x, y)| {
                    let d = Vector3::new(x - xc, y - yc, gx * (x - xc) + gy * (y - yc));
                    Vector2::new(d.dot(&e1), d.dot(&e2))
                })
                .collect();
            mirrors.push(MirrorPlane::from_frame(origin, e1, e2, extent)?);
        }
    }
    DesignState::new(spec.clone(), mirrors)
}

/// Footprints of every mirror on the evaluation plane at `depth`, in that
/// plane's 2D frame (CCW).
pub fn footprints_local(
    state: &DesignState,
    depth: f64,
) -> Result<(PlaneFrame, Vec<Vec<Vector2<f64>>>)> {
    let frame = state.eval_reference.plane(depth)?;
    let footprints = (0..state.mirrors.len())
        .map(|i| footprint_local(state, &frame, i, depth))
        .collect::<Result<Vec<_>>>()?;
    Ok((frame, footprints))
}

fn footprint_local(
    state: &DesignState,
    frame: &PlaneFrame,
    index: usize,
    depth: f64,
) -> Result<Vec<Vector2<f64>>> {
    let mirror = &state.mirrors[index];
    let c = state.spec.camera_pose.center;
    let unbounded = || Error::FootprintUnbounded {
        mirror: index,
        depth,
    };
    let mut out = Vec::with_capacity(mirror.extent.len());
    for q in &mirror.extent {
        let p = mirror.to_world(q);
        let d = mirror.reflect_dir(&(p - c));
        let denom = frame.normal.dot(&d);
        if denom.abs() < 1e-12 {
            return Err(unbounded());
        }
        let t = frame.normal.dot(&(frame.origin - p)) / denom;
        if !(t > 0.0) || !t.is_finite() {
            return Err(unbounded());
        }
        out.push(frame.to_local(&(p + d * t)));
    }
    Ok(polygon::ensure_ccw(out))
}

/// Region of the evaluation plane seen through one mirror.
pub fn fov_footprint(
    state: &DesignState,
    mirror_index: usize,
    depth: f64,
) -> Result<ConvexPolygon3D> {
    if !(depth > 0.0) {
        return Err(Error::Invalid("depth must be positive".into()));
    }
    if mirror_index >= state.mirrors.len() {
        return Err(Error::Invalid(format!("no mirror {mirror_index}")));
    }
    let frame = state.eval_reference.plane(depth)?;
    let local = footprint_local(state, &frame, mirror_index, depth)?;
    if polygon::signed_area(&local) <= 0.0 {
        return Err(Error::Geometry(format!(
            "mirror {mirror_index} extent is degenerate"
        )));
    }
    Ok(ConvexPolygon3D {
        vertices: local.iter().map(|q| frame.to_world(q)).collect(),
    })
}

/// Intersection of all mirror footprints at `depth` and its area.
pub fn full_overlap(state: &DesignState, depth: f64) -> Result<(Option<ConvexPolygon3D>, f64)> {
    if !(depth > 0.0) {
        return Err(Error::Invalid("depth must be positive".into()));
    }
    let (frame, fps) = footprints_local(state, depth)?;
    let region = intersect_all(&fps);
    let area = polygon::signed_area(&region).max(0.0);
    if region.len() < 3 || area <= 0.0 {
        return Ok((None, 0.0));
    }
    Ok((
        Some(ConvexPolygon3D {
            vertices: region.iter().map(|q| frame.to_world(q)).collect(),
        }),
        area,
    ))
}

fn intersect_all(fps: &[Vec<Vector2<f64>>]) -> Vec<Vector2<f64>> {
    let mut region = fps[0].clone();
    for fp in &fps[1..] {
        if region.len() < 3 {
            return Vec::new();
        }
        region = polygon::clip(&region, fp);
    }
    region
}

/// Least-squares affine grid `origin + i·x_step + j·y_step` through a set of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFit {
    /// Mean squared residual (m²).
    pub error: f64,
    pub origin: Vector3<f64>,
    pub x_step: Vector3<f64>,
    pub y_step: Vector3<f64>,
}

impl GridFit {
    pub fn at(&self, row: usize, col: usize) -> Vector3<f64> {
        self.origin + self.x_step * col as f64 + self.y_step * row as f64
    }
}

/// Fits row-major `centers` to a rectangular (affine) grid; `i` runs over
/// columns, `j` over rows. A single-row or single-column layout fits a line
/// and reports a zero step for the missing axis.
pub fn grid_fit_error(centers: &[Vector3<f64>], rows: usize, cols: usize) -> Result<GridFit> {
    let n = rows * cols;
    if centers.len() != n {
        return Err(Error::Invalid(format!(
            "expected {n} centers, got {}",
            centers.len()
        )));
    }
    if n < 3 {
        return Err(Error::Underdetermined(format!(
            "{n} centers cannot fix a grid"
        )));
    }
    let use_i = cols > 1;
    let use_j = rows > 1;
    let k = 1 + use_i as usize + use_j as usize;
    let design = DMatrix::from_fn(n, k, |m, c| {
        let (r, col) = (m / cols, m % cols);
        match (c, use_i) {
            (0, _) => 1.0,
            (1, true) => col as f64,
            _ => r as f64,
        }
    });
    let rhs = DMatrix::from_fn(n, 3, |m, c| centers[m][c]);
    let normal = design.transpose() * &design;
    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Underdetermined("grid indices are collinear".into()))?;
    let coef = chol.solve(&(design.transpose() * &rhs));
    let resid = &rhs - &design * &coef;
    let row_vec = |i: usize| Vector3::new(coef[(i, 0)], coef[(i, 1)], coef[(i, 2)]);
    let origin = row_vec(0);
    let x_step = if use_i { row_vec(1) } else { Vector3::zeros() };
    let y_step = if use_j {
        row_vec(k - 1)
    } else {
        Vector3::zeros()
    };
    Ok(GridFit {
        error: resid.norm_squared() / n as f64,
        origin,
        x_step,
        y_step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthOverlap {
    pub depth: f64,
    /// Full-overlap area (m²).
    pub area: f64,
    /// Footprint area of the central mirror (m²).
    pub central_area: f64,
    /// Central footprint area of the reference design (m²).
    pub reference_area: f64,
    pub polygon: Option<ConvexPolygon3D>,
}

/// Cost breakdown and diagnostics for one design state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub cost_total: f64,
    pub cost_grid: f64,
    pub cost_overlap: f64,
    pub overlap_area_per_depth: Vec<DepthOverlap>,
    pub virtual_centers: Vec<Vector3<f64>>,
    pub fitted_grid: GridFit,
    pub constraint_violations: Vec<Violation>,
}

impl DesignReport {
    pub fn max_violation(&self) -> f64 {
        self.constraint_violations
            .iter()
            .map(|v| v.magnitude)
            .fold(0.0, f64::max)
    }
}

/// Scores a design: `alpha · grid + (1 − alpha) · overlap deficit`.
///
/// The grid term is the grid-fit error of the virtual centers over
/// `grid_tolerance²`;
/// the overlap term averages `1 − overlap / reference central footprint`
/// over the evaluation depths. Constraint violations are listed, not added.
pub fn design_cost(state: &DesignState) -> Result<DesignReport> {
    design_cost_with(state, &ConstraintOptions::default())
}

pub fn design_cost_with(state: &DesignState, opts: &ConstraintOptions) -> Result<DesignReport> {
    let spec = &state.spec;
    let virtuals = state.virtual_cameras()?;
    let centers: Vec<_> = virtuals.iter().map(|v| v.center).collect();
    let fit = grid_fit_error(&centers, spec.rows, spec.cols)?;
    let cost_grid = fit.error / (spec.grid_tolerance * spec.grid_tolerance);

    let central = spec.central_index();
    let mut per_depth = Vec::with_capacity(spec.eval_depths.len());
    let mut deficit_sum = 0.0;
    for (k, &depth) in spec.eval_depths.iter().enumerate() {
        let (frame, fps) = footprints_local(state, depth)?;
        let central_area = polygon::signed_area(&fps[central]);
        let reference_area = state
            .eval_reference
            .reference_areas
            .get(k)
            .copied()
            .unwrap_or(central_area);
        let region = intersect_all(&fps);
        let area = if region.len() >= 3 {
            polygon::signed_area(&region).max(0.0)
        } else {
            0.0
        };
        let deficit = if reference_area > 0.0 {
            (1.0 - area / reference_area).clamp(0.0, 1.0)
        } else {
            1.0
        };
        deficit_sum += deficit;
        per_depth.push(DepthOverlap {
            depth,
            area,
            central_area,
            reference_area,
            polygon: (area > 0.0).then(|| ConvexPolygon3D {
                vertices: region.iter().map(|q| frame.to_world(q)).collect(),
            }),
        });
    }
    let cost_overlap = deficit_sum / spec.eval_depths.len() as f64;
    let cost_total = spec.alpha * cost_grid + (1.0 - spec.alpha) * cost_overlap;
    Ok(DesignReport {
        cost_total,
        cost_grid,
        cost_overlap,
        overlap_area_per_depth: per_depth,
        virtual_centers: centers,
        fitted_grid: fit,
        constraint_violations: check_constraints_with(state, opts),
    })
}
