use nalgebra::{Rotation3, Vector2};
use serde::{Deserialize, Serialize};

use super::{design_cost_with, ConstraintOptions, DesignReport, DesignState};
use crate::error::{Error, Result};
use crate::geometry::MirrorPlane;

/// Tilt (2), offset along the initial normal (1), four in-plane vertex shifts (8).
pub const PARAMS_PER_MIRROR: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Penalty rounds; the weight grows by `penalty_growth` after each.
    pub rounds: usize,
    pub penalty_weight: f64,
    pub penalty_growth: f64,
    /// Sweep limit per round.
    pub max_sweeps: usize,
    pub tilt_step: f64,
    pub offset_step: f64,
    pub vertex_step: f64,
    /// A round ends once every step has shrunk below `initial · min_step_ratio`.
    pub min_step_ratio: f64,
    /// Largest violation magnitude accepted as feasible.
    pub feasibility_tol: f64,
    pub constraints: ConstraintOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            rounds: 3,
            penalty_weight: 1e6,
            penalty_growth: 10.0,
            max_sweeps: 200,
            tilt_step: 0.01,
            offset_step: 1e-3,
            vertex_step: 1e-3,
            min_step_ratio: 1e-3,
            feasibility_tol: 1e-6,
            constraints: ConstraintOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub round: usize,
    pub penalty_weight: f64,
    pub cost_total: f64,
    pub cost_grid: f64,
    pub cost_overlap: f64,
    pub penalty: f64,
    pub penalized: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub state: DesignState,
    pub report: DesignReport,
    pub trace: Vec<TraceEntry>,
    /// False when a round hit its sweep limit.
    pub converged: bool,
    pub method: String,
    pub evaluations: usize,
}

/// Applies a parameter vector (relative to `base`) to every mirror.
///
/// Each facet tilts about its frame origin, shifts along its initial normal,
/// and moves its extent vertices within the (tilted) plane, so facets stay
/// planar by construction.
pub fn params_to_state(base: &DesignState, x: &[f64]) -> Result<DesignState> {
    if x.len() != base.mirrors.len() * PARAMS_PER_MIRROR {
        return Err(Error::Invalid(
            "parameter vector has the wrong length".into(),
        ));
    }
    let mut mirrors = Vec::with_capacity(base.mirrors.len());
    for (m, p) in base.mirrors.iter().zip(x.chunks(PARAMS_PER_MIRROR)) {
        if m.extent.len() != 4 {
            return Err(Error::Invalid(
                "optimizer expects quadrilateral extents".into(),
            ));
        }
        let [e1, e2] = m.frame_axes;
        let rot = Rotation3::from_scaled_axis(e1 * p[0] + e2 * p[1]);
        let u = rot * e1;
        let v = rot * e2;
        let normal = u.cross(&v);
        let origin = m.frame_origin + m.normal * p[2];
        let extent = m
            .extent
            .iter()
            .enumerate()
            .map(|(k, q)| q + Vector2::new(p[3 + 2 * k], p[4 + 2 * k]))
            .collect();
        mirrors.push(MirrorPlane {
            normal,
            offset: normal.dot(&origin),
            extent,
            frame_origin: origin,
            frame_axes: [u, v],
        });
    }
    Ok(DesignState {
        spec: base.spec.clone(),
        mirrors,
        eval_reference: base.eval_reference.clone(),
    })
}

struct Eval {
    report: DesignReport,
    penalty_sum: f64,
}

impl Eval {
    fn penalized(&self, weight: f64) -> f64 {
        self.report.cost_total + weight * self.penalty_sum
    }
}

fn evaluate(base: &DesignState, x: &[f64], opts: &OptimizeOptions) -> Option<Eval> {
    let state = params_to_state(base, x).ok()?;
    let report = design_cost_with(&state, &opts.constraints).ok()?;
    let penalty_sum = report
        .constraint_violations
        .iter()
        .fold(0.0, |acc, v| acc + v.magnitude * v.magnitude);
    report.cost_total.is_finite().then_some(Eval {
        report,
        penalty_sum,
    })
}

/// Adaptive coordinate pattern search with an exterior quadratic penalty.
///
/// Every accepted move strictly lowers the penalized cost of the current
/// round. The returned state is the best feasible iterate seen.
pub fn optimize(state: &DesignState, options: &OptimizeOptions) -> Result<OptimizeOutcome> {
    state.validate()?;
    let dim = state.mirrors.len() * PARAMS_PER_MIRROR;
    let mut x = vec![0.0; dim];
    let mut evaluations = 1;
    let mut current = evaluate(state, &x, options)
        .ok_or_else(|| Error::InfeasibleStart("initial design cannot be scored".into()))?;
    if current.report.max_violation() > options.feasibility_tol {
        let first = &current.report.constraint_violations[0];
        return Err(Error::InfeasibleStart(format!(
            "{:?} on mirrors {:?} (magnitude {:.3e})",
            first.kind, first.mirrors, first.magnitude
        )));
    }

    let initial_steps: Vec<f64> = (0..dim)
        .map(|i| match i % PARAMS_PER_MIRROR {
            0 | 1 => options.tilt_step,
            2 => options.offset_step,
            _ => options.vertex_step,
        })
        .collect();

    let mut best_x = x.clone();
    let mut best_cost = current.report.cost_total;
    let mut trace = Vec::new();
    let mut converged = true;
    let mut iteration = 0;
    let mut weight = options.penalty_weight;

    let record =
        |trace: &mut Vec<TraceEntry>, it: usize, round: usize, w: f64, e: &Eval, evals: usize| {
            trace.push(TraceEntry {
                iteration: it,
                round,
                penalty_weight: w,
                cost_total: e.report.cost_total,
                cost_grid: e.report.cost_grid,
                cost_overlap: e.report.cost_overlap,
                penalty: w * e.penalty_sum,
                penalized: e.penalized(w),
                evaluations: evals,
            })
        };
    record(&mut trace, 0, 0, weight, &current, evaluations);

    for round in 0..options.rounds.max(1) {
        if round > 0 {
            weight *= options.penalty_growth;
        }
        let mut steps = initial_steps.clone();
        let mut f = current.penalized(weight);
        let mut round_done = false;
        for _ in 0..options.max_sweeps {
            let mut improved = false;
            for i in 0..dim {
                let mut moved = false;
                for sign in [1.0, -1.0] {
                    let mut trial = x.clone();
                    trial[i] += sign * steps[i];
                    evaluations += 1;
                    if let Some(e) = evaluate(state, &trial, options) {
                        let fe = e.penalized(weight);
                        if fe < f {
                            x = trial;
                            f = fe;
                            current = e;
                            moved = true;
                            break;
                        }
                    }
                }
                if moved {
                    improved = true;
                    steps[i] = (steps[i] * 2.0).min(initial_steps[i] * 4.0);
                } else {
                    steps[i] *= 0.5;
                }
            }
            iteration += 1;
            record(&mut trace, iteration, round, weight, &current, evaluations);
            if current.report.max_violation() <= options.feasibility_tol
                && current.report.cost_total < best_cost
            {
                best_cost = current.report.cost_total;
                best_x = x.clone();
            }
            let tiny = steps
                .iter()
                .zip(&initial_steps)
                .all(|(s, s0)| *s < s0 * options.min_step_ratio);
            if tiny || !improved && steps.iter().all(|s| *s == 0.0) {
                round_done = true;
                break;
            }
        }
        if !round_done {
            converged = false;
        }
    }

    let final_state = params_to_state(state, &best_x)?;
    let report = design_cost_with(&final_state, &options.constraints)?;
    Ok(OptimizeOutcome {
        state: final_state,
        report,
        trace,
        converged,
        method: "adaptive coordinate pattern search, exterior quadratic penalty".into(),
        evaluations,
    })
}
