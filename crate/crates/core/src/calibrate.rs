//! Mirror-plane calibration from checkerboard corners.
//!
//! Each mirror is refined with exactly three parameters (two tangent-plane
//! angles of its normal and an offset change) by Levenberg–Marquardt on pixel
//! residuals. The intrinsics stay fixed. Board poses are known by default and
//! can optionally be estimated jointly.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{GridView, RectifiedGridModel};
use crate::design::grid_fit_error;
use crate::error::{Error, Result};
use crate::geometry::{undistort_pixel, virtual_camera, CameraIntrinsics, MirrorPlane, Pose};
use crate::simulate::{project_via, Checkerboard, Observation};

/// Tilts mirror `k` by `tilt_rad` about its first (even `k`) or second
/// (odd `k`) tangent axis and pushes its offset by `offset_m`. A repeatable
/// starting point for recovery experiments.
pub fn perturb_mirrors(
    mirrors: &[MirrorPlane],
    tilt_rad: f64,
    offset_m: f64,
) -> Result<Vec<MirrorPlane>> {
    mirrors
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let p = if k % 2 == 0 {
                [tilt_rad, 0.0, offset_m]
            } else {
                [0.0, tilt_rad, offset_m]
            };
            apply_mirror(m, &p)
        })
        .collect()
}

/// How far one mirror estimate is from another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorDelta {
    /// Angle between the normals (rad).
    pub tilt_rad: f64,
    /// Offset difference (m).
    pub offset_m: f64,
}

pub fn mirror_deltas(a: &[MirrorPlane], b: &[MirrorPlane]) -> Vec<MirrorDelta> {
    a.iter()
        .zip(b)
        .map(|(x, y)| MirrorDelta {
            tilt_rad: x
                .normal
                .cross(&y.normal)
                .norm()
                .atan2(x.normal.dot(&y.normal)),
            offset_m: y.offset - x.offset,
        })
        .collect()
}

pub const PARAMS_PER_MIRROR: usize = 3;
const PARAMS_PER_BOARD: usize = 6;
const MIN_OBS_PER_MIRROR: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProblem {
    pub intrinsics: CameraIntrinsics,
    pub camera_pose: Pose,
    pub observations: Vec<Observation>,
    /// Board geometry and poses; poses are the initial guess in joint mode.
    pub boards: Vec<Checkerboard>,
    pub initial_mirrors: Vec<MirrorPlane>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub gradient_tolerance: f64,
    /// Stop once the residual RMS (px) is down to rounding noise.
    #[serde(default = "default_rms_floor")]
    pub rms_floor_px: f64,
    /// Central-difference step on the normalized parameters.
    pub jacobian_step: f64,
    pub initial_lambda: f64,
    /// Residual magnitude (px) given to corners invisible under a candidate.
    pub invisible_cap_px: f64,
    /// Dilation of mirror extents (m) when deciding visibility; small
    /// misalignments of the initial planes should not drop edge corners.
    pub extent_tolerance: f64,
    /// Also estimate 6 DOF per board.
    pub joint_boards: bool,
}

fn default_rms_floor() -> f64 {
    1e-12
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            max_iterations: 200,
            relative_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            rms_floor_px: default_rms_floor(),
            jacobian_step: 1e-7,
            initial_lambda: 1e-3,
            invisible_cap_px: 50.0,
            extent_tolerance: 5e-3,
            joint_boards: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mirrors: Vec<MirrorPlane>,
    /// Per-component residual RMS (px).
    pub rms_px: f64,
    pub rms_spatial_mm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Variance estimates in parameter order (3 per mirror, then 6 per board).
    pub covariance_diag: Vec<f64>,
    /// Cost `Σ r²` after each accepted step, starting with the initial cost.
    pub cost_trace: Vec<f64>,
    /// Observations whose corner was invisible at the solution.
    pub capped: usize,
    /// Estimated board poses in joint mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub board_poses: Option<Vec<Pose>>,
}

impl CalibrationProblem {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.camera_pose.validate()?;
        for m in &self.initial_mirrors {
            m.validate_plane()?;
        }
        let mut counts = vec![0usize; self.initial_mirrors.len()];
        for o in &self.observations {
            let b = self.boards.get(o.corner.board).ok_or_else(|| {
                Error::Invalid(format!(
                    "observation refers to missing board {}",
                    o.corner.board
                ))
            })?;
            if o.corner.row + 1 >= b.rows || o.corner.col + 1 >= b.cols {
                return Err(Error::Invalid(format!(
                    "corner ({}, {}) does not exist on board {}",
                    o.corner.row, o.corner.col, o.corner.board
                )));
            }
            *counts.get_mut(o.mirror_index).ok_or_else(|| {
                Error::Invalid(format!(
                    "observation refers to missing mirror {}",
                    o.mirror_index
                ))
            })? += 1;
        }
        if let Some(m) = counts.iter().position(|&c| c < MIN_OBS_PER_MIRROR) {
            return Err(Error::Invalid(format!(
                "mirror {m} has {} observations, at least {MIN_OBS_PER_MIRROR} are needed",
                counts[m]
            )));
        }
        Ok(())
    }

    /// Observations in residual order: by mirror, then corner.
    fn sorted(&self) -> Vec<Observation> {
        let mut obs = self.observations.clone();
        obs.sort_by_key(|o| (o.mirror_index, o.corner));
        obs
    }
}

/// Orthonormal tangent basis of a unit normal.
fn tangent_basis(n: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let seed = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let a = n.cross(&seed).normalize();
    [a, n.cross(&a)]
}

/// Mirror after rotating its normal by tangent angles `(p0, p1)` and
/// shifting its offset by `p2`.
fn apply_mirror(m: &MirrorPlane, p: &[f64]) -> Result<MirrorPlane> {
    let [a, b] = tangent_basis(&m.normal);
    let theta = a * p[0] + b * p[1];
    let angle = theta.norm();
    let normal = if angle > 0.0 {
        m.normal * angle.cos() + theta * (angle.sin() / angle)
    } else {
        m.normal
    };
    m.with_plane(normal, m.offset + p[2])
}

fn apply_board(b: &Checkerboard, p: &[f64]) -> Checkerboard {
    let rot = Rotation3::from_scaled_axis(Vector3::new(p[0], p[1], p[2]));
    Checkerboard {
        pose: Pose {
            rotation: rot.matrix() * b.pose.rotation,
            center: b.pose.center + Vector3::new(p[3], p[4], p[5]),
        },
        ..b.clone()
    }
}

struct Model<'a> {
    problem: &'a CalibrationProblem,
    obs: Vec<Observation>,
    opts: CalibrationOptions,
}

impl Model<'_> {
    fn n_mirror_params(&self) -> usize {
        self.problem.initial_mirrors.len() * PARAMS_PER_MIRROR
    }

    fn n_params(&self) -> usize {
        self.n_mirror_params()
            + if self.opts.joint_boards {
                self.problem.boards.len() * PARAMS_PER_BOARD
            } else {
                0
            }
    }

    fn unpack(&self, x: &[f64]) -> Result<(Vec<MirrorPlane>, Vec<Checkerboard>)> {
        let mirrors = self
            .problem
            .initial_mirrors
            .iter()
            .zip(x.chunks(PARAMS_PER_MIRROR))
            .map(|(m, p)| apply_mirror(m, p))
            .collect::<Result<Vec<_>>>()?;
        let boards = if self.opts.joint_boards {
            self.problem
                .boards
                .iter()
                .zip(x[self.n_mirror_params()..].chunks(PARAMS_PER_BOARD))
                .map(|(b, p)| apply_board(b, p))
                .collect()
        } else {
            self.problem.boards.clone()
        };
        Ok((mirrors, boards))
    }

    /// Residual vector and the number of capped observations.
    fn residuals(&self, mirrors: &[MirrorPlane], boards: &[Checkerboard]) -> (DVector<f64>, usize) {
        let cap = self.opts.invisible_cap_px / std::f64::consts::SQRT_2;
        let mut r = DVector::zeros(2 * self.obs.len());
        let mut capped = 0;
        for (k, o) in self.obs.iter().enumerate() {
            let corner = boards[o.corner.board].corner_world(o.corner.row, o.corner.col);
            let expected = project_via(
                &self.problem.intrinsics,
                &self.problem.camera_pose,
                mirrors,
                o.mirror_index,
                &corner,
                self.opts.extent_tolerance,
            );
            let d = match expected {
                Ok(e) => o.pixel - e,
                Err(_) => {
                    capped += 1;
                    Vector2::new(cap, cap)
                }
            };
            r[2 * k] = d.x;
            r[2 * k + 1] = d.y;
        }
        (r, capped)
    }

    fn eval(&self, x: &[f64]) -> Option<(DVector<f64>, usize)> {
        let (m, b) = self.unpack(x).ok()?;
        Some(self.residuals(&m, &b))
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.opts.jacobian_step;
        let cols: Vec<DVector<f64>> = (0..self.n_params())
            .into_par_iter()
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                let fail = || Error::Geometry(format!("parameter {j} left the valid range"));
                let (rp, _) = self.eval(&xp).ok_or_else(fail)?;
                let (rm, _) = self.eval(&xm).ok_or_else(fail)?;
                Ok((rp - rm) / (2.0 * h))
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Fails with the first mirror whose 3×3 normal-equation block is singular.
    fn check_rank(&self, jtj: &DMatrix<f64>) -> Result<()> {
        for m in 0..self.problem.initial_mirrors.len() {
            let block = jtj.fixed_view::<3, 3>(3 * m, 3 * m).into_owned();
            let eig = block.symmetric_eigenvalues();
            let max = eig.max();
            if !(max > 0.0) || eig.min() <= max * 1e-14 {
                return Err(Error::RankDeficient { mirror: m });
            }
        }
        Ok(())
    }
}

/// Residuals `observed − expected` for given mirrors (board poses as stored),
/// ordered by mirror then corner. Invisible corners get the capped value.
pub fn residuals(problem: &CalibrationProblem, mirrors: &[MirrorPlane]) -> Result<Vec<f64>> {
    residuals_with(problem, mirrors, &CalibrationOptions::default())
}

pub fn residuals_with(
    problem: &CalibrationProblem,
    mirrors: &[MirrorPlane],
    opts: &CalibrationOptions,
) -> Result<Vec<f64>> {
    problem.validate()?;
    if mirrors.len() != problem.initial_mirrors.len() {
        return Err(Error::Invalid(
            "mirror count does not match the problem".into(),
        ));
    }
    let model = Model {
        problem,
        obs: problem.sorted(),
        opts: *opts,
    };
    Ok(model
        .residuals(mirrors, &problem.boards)
        .0
        .as_slice()
        .to_vec())
}

pub fn levenberg_marquardt(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    levenberg_marquardt_with(problem, &CalibrationOptions::default())
}

pub fn levenberg_marquardt_with(
    problem: &CalibrationProblem,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    problem.validate()?;
    let model = Model {
        problem,
        obs: problem.sorted(),
        opts: *opts,
    };
    let np = model.n_params();
    let mut x = vec![0.0; np];
    let (mut r, _) = model
        .eval(&x)
        .ok_or_else(|| Error::Geometry("initial mirrors are invalid".into()))?;
    let mut cost = r.norm_squared();
    let mut cost_trace = vec![cost];
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = model.jacobian(&x)?;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let floor = opts.rms_floor_px * opts.rms_floor_px * r.len() as f64;
        if grad.amax() < opts.gradient_tolerance || cost <= floor {
            converged = true;
            break;
        }
        model.check_rank(&jtj)?;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match model.eval(&xn) {
                Some((rn, _)) if rn.norm_squared() < cost => {
                    let new_cost = rn.norm_squared();
                    let rel = (cost - new_cost) / cost;
                    x = xn;
                    r = rn;
                    cost = new_cost;
                    cost_trace.push(cost);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < opts.relative_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // No damped step lowers the cost: a numerical minimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = model.jacobian(&x)?;
    }

    let (mirrors, boards) = model.unpack(&x)?;
    let (r, capped) = model.residuals(&mirrors, &boards);
    let sse = r.norm_squared();
    let m = r.len();
    let jtj = jac.transpose() * &jac;
    let sigma2 = if m > np { sse / (m - np) as f64 } else { 0.0 };
    let covariance_diag = match jtj.clone().try_inverse() {
        Some(inv) => (0..np).map(|i| sigma2 * inv[(i, i)]).collect(),
        None => vec![f64::INFINITY; np],
    };
    let solved = CalibrationProblem {
        boards: boards.clone(),
        ..problem.clone()
    };
    let rms_spatial_mm = spatial_rms(&solved, &mirrors)?;
    Ok(CalibrationResult {
        mirrors,
        rms_px: (sse / m as f64).sqrt(),
        rms_spatial_mm,
        iterations,
        converged,
        covariance_diag,
        cost_trace,
        capped,
        board_poses: opts
            .joint_boards
            .then(|| boards.iter().map(|b| b.pose).collect()),
    })
}

/// RMS distance (mm) from each known corner to the ray traced back from its
/// observed pixel through the camera and its mirror.
pub fn spatial_rms(problem: &CalibrationProblem, mirrors: &[MirrorPlane]) -> Result<f64> {
    if problem.observations.is_empty() {
        return Ok(0.0);
    }
    let pose = &problem.camera_pose;
    let mut sum = 0.0;
    for o in &problem.observations {
        let m = mirrors
            .get(o.mirror_index)
            .ok_or_else(|| Error::Invalid(format!("no mirror {}", o.mirror_index)))?;
        let board = problem
            .boards
            .get(o.corner.board)
            .ok_or_else(|| Error::Invalid(format!("no board {}", o.corner.board)))?;
        let n = undistort_pixel(&problem.intrinsics, o.pixel)?;
        let dir = pose.camera_to_world_dir(&Vector3::new(n.x, n.y, 1.0));
        let t = m
            .ray_plane(&pose.center, &dir)
            .ok_or_else(|| Error::Geometry(format!("ray misses mirror {}", o.mirror_index)))?;
        let hit = pose.center + dir * t;
        let refl = m
            .reflect_dir(&dir)
            .try_normalize(1e-300)
            .ok_or_else(|| Error::Geometry("degenerate reflected ray".into()))?;
        let x = board.corner_world(o.corner.row, o.corner.col);
        sum += (x - hit).cross(&refl).norm_squared();
    }
    Ok((sum / problem.observations.len() as f64).sqrt() * 1e3)
}

const FLIP: Matrix3<f64> = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);

/// Nearest grid of parallel cameras for a calibrated mirror array.
///
/// The target orientation is the central virtual orientation with its x axis
/// flipped (restoring a right-handed frame). Grid index `s` grows along the
/// target's −x, `t` along its −y, so disparity is positive with the index.
/// Translation residuals are reported, not compensated.
pub fn nearest_parallel_grid(
    mirrors: &[MirrorPlane],
    intr: &CameraIntrinsics,
    real_pose: &Pose,
    rows: usize,
    cols: usize,
) -> Result<RectifiedGridModel> {
    let n = rows * cols;
    if mirrors.len() != n {
        return Err(Error::Invalid(format!(
            "{} mirrors for a {rows}×{cols} grid",
            mirrors.len()
        )));
    }
    if n < 4 {
        return Err(Error::Invalid(
            "a parallel grid needs at least four mirrors".into(),
        ));
    }
    let virtuals = mirrors
        .iter()
        .enumerate()
        .map(|(i, m)| virtual_camera(real_pose, m, i))
        .collect::<Result<Vec<_>>>()?;
    let centers: Vec<_> = virtuals.iter().map(|v| v.center).collect();
    let fit = grid_fit_error(&centers, rows, cols)?;
    let central = (rows / 2) * cols + cols / 2;
    let target = virtuals[central].orientation * FLIP;
    let tx = target.column(0).into_owned();
    let ty = target.column(1).into_owned();

    // Columns map to s unless the grid is turned a quarter relative to the target.
    let swap = fit.x_step.dot(&tx).abs() < fit.x_step.dot(&ty).abs();
    let (s_step, t_step) = if swap {
        (fit.y_step, fit.x_step)
    } else {
        (fit.x_step, fit.y_step)
    };
    let (s_count, t_count) = if swap { (rows, cols) } else { (cols, rows) };
    let s_rev = s_step.dot(&tx) > 0.0;
    let t_rev = t_step.dot(&ty) > 0.0;

    let k_inv = intr.k_inverse();
    let mut half = Vector2::<f64>::zeros();
    let mut views = Vec::with_capacity(n);
    for (i, v) in virtuals.iter().enumerate() {
        let (row, col) = (i / cols, i % cols);
        let (a, b) = if swap { (row, col) } else { (col, row) };
        let s = if s_rev { s_count - 1 - a } else { a };
        let t = if t_rev { t_count - 1 - b } else { b };
        let fitted = fit.at(row, col);
        let f = v.orientation * FLIP;
        let rotation = f.transpose() * target;
        // Raw pinhole pixel direction to target-frame direction: Tᵀ O K⁻¹.
        let to_target = target.transpose() * v.orientation * k_inv;
        for p in mirrors[i].world_vertices() {
            let pc = real_pose.world_to_camera(&p);
            let raw = intr.pinhole_pixel(Vector2::new(pc.x / pc.z, pc.y / pc.z));
            let d = to_target * Vector3::new(raw.x, raw.y, 1.0);
            if d.z <= 0.0 {
                return Err(Error::Geometry(format!(
                    "mirror {i} extent lies behind its virtual camera"
                )));
            }
            half.x = half.x.max((intr.fx * d.x / d.z).abs());
            half.y = half.y.max((intr.fy * d.y / d.z).abs());
        }
        views.push(GridView {
            mirror_index: i,
            s,
            t,
            center: v.center,
            fitted_center: fitted,
            residual: v.center - fitted,
            rotation,
        });
    }
    let u = 2 * half.x.ceil() as u32 + 1;
    let vdim = 2 * half.y.ceil() as u32 + 1;
    let target_intrinsics = CameraIntrinsics {
        fx: intr.fx,
        fy: intr.fy,
        cx: (u - 1) as f64 / 2.0,
        cy: (vdim - 1) as f64 / 2.0,
        k1: 0.0,
        k2: 0.0,
        width: u,
        height: vdim,
    };
    views.sort_by_key(|v| (v.t, v.s));
    Ok(RectifiedGridModel {
        s_count,
        t_count,
        views,
        target_orientation: target,
        target_intrinsics,
        base_intrinsics: *intr,
        s_step,
        t_step,
        grid_error: fit.error,
    })
}
