use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::DesignState;
use crate::geometry::polygon;
use crate::geometry::MirrorPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Mirror `mirrors[1]` blocks rays of mirror `mirrors[0]`; magnitude is the blocked fraction.
    Occlusion,
    /// Adjacent mirrors closer than `min_gap`; magnitude is the shortfall (m).
    Spacing,
    /// Extent vertex falls outside the sensor; magnitude in normalized image units.
    OutOfView,
    /// Extent is not a convex CCW polygon.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub mirrors: Vec<usize>,
    pub magnitude: f64,
}

/// Where occlusion rays are cast from on each mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OcclusionSampling {
    /// Vertices, edge midpoints and the centroid (9 rays for a quadrilateral).
    Standard,
    /// `n × n` points spread over the extent.
    Grid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOptions {
    pub sampling: OcclusionSampling,
    /// Shortfalls at or below this are treated as meeting `min_gap`.
    pub spacing_tolerance: f64,
    pub check_view: bool,
}

impl Default for ConstraintOptions {
    fn default() -> Self {
        ConstraintOptions {
            sampling: OcclusionSampling::Standard,
            spacing_tolerance: 1e-12,
            check_view: true,
        }
    }
}

pub fn check_constraints(state: &DesignState) -> Vec<Violation> {
    check_constraints_with(state, &ConstraintOptions::default())
}

pub fn check_constraints_with(state: &DesignState, opts: &ConstraintOptions) -> Vec<Violation> {
    let mut out = Vec::new();
    let valid: Vec<bool> = state
        .mirrors
        .iter()
        .map(|m| {
            m.extent.len() >= 3
                && polygon::signed_area(&m.extent) > 0.0
                && polygon::is_convex(&m.extent)
        })
        .collect();
    for (i, ok) in valid.iter().enumerate() {
        if !ok {
            out.push(Violation {
                kind: ViolationKind::Degenerate,
                mirrors: vec![i],
                magnitude: 1.0,
            });
        }
    }
    occlusion(state, opts, &valid, &mut out);
    spacing(state, opts, &valid, &mut out);
    if opts.check_view {
        out_of_view(state, &mut out);
    }
    out
}

fn sample_points(m: &MirrorPlane, sampling: OcclusionSampling) -> Vec<Vector2<f64>> {
    let ext = &m.extent;
    match sampling {
        OcclusionSampling::Standard => {
            let n = ext.len();
            let mut pts = ext.clone();
            pts.extend((0..n).map(|k| 0.5 * (ext[k] + ext[(k + 1) % n])));
            pts.push(polygon::centroid(ext));
            pts
        }
        OcclusionSampling::Grid(n) => {
            let n = n.max(1);
            let mut pts = Vec::with_capacity(n * n);
            for a in 0..n {
                for b in 0..n {
                    let s = (a as f64 + 0.5) / n as f64;
                    let t = (b as f64 + 0.5) / n as f64;
                    if ext.len() == 4 {
                        let p = ext[0] * ((1.0 - s) * (1.0 - t))
                            + ext[1] * (s * (1.0 - t))
                            + ext[2] * (s * t)
                            + ext[3] * ((1.0 - s) * t);
                        pts.push(p);
                    } else {
                        let (lo, hi) = bounds(ext);
                        let p = Vector2::new(lo.x + s * (hi.x - lo.x), lo.y + t * (hi.y - lo.y));
                        if polygon::contains(ext, &p, 0.0) {
                            pts.push(p);
                        }
                    }
                }
            }
            pts
        }
    }
}

fn bounds(pts: &[Vector2<f64>]) -> (Vector2<f64>, Vector2<f64>) {
    pts.iter().fold(
        (
            Vector2::repeat(f64::INFINITY),
            Vector2::repeat(f64::NEG_INFINITY),
        ),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    )
}

/// True when the open segment `a + t d`, `t ∈ (0, t_max)` crosses the extent of `m`.
fn segment_hits(m: &MirrorPlane, a: &Vector3<f64>, d: &Vector3<f64>, t_max: f64) -> bool {
    let denom = m.normal.dot(d);
    if denom.abs() < 1e-15 {
        return false;
    }
    let t = (m.offset - m.normal.dot(a)) / denom;
    if !(t > 1e-9 * t_max && t < t_max * (1.0 - 1e-9)) {
        return false;
    }
    polygon::contains(&m.extent, &m.to_local(&(a + d * t)), 0.0)
}

fn occlusion(
    state: &DesignState,
    opts: &ConstraintOptions,
    valid: &[bool],
    out: &mut Vec<Violation>,
) {
    let cam = state.spec.camera_pose.center;
    let max_depth = state.spec.eval_depths.last().copied().unwrap_or(1.0);
    let plane = state.eval_reference.plane(max_depth).ok();
    let n = state.mirrors.len();
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        let mi = &state.mirrors[i];
        let samples = sample_points(mi, opts.sampling);
        if samples.is_empty() {
            continue;
        }
        let mut blocked = vec![0usize; n];
        for q in &samples {
            let s = mi.to_world(q);
            let incident = s - cam;
            let refl = mi.reflect_dir(&incident).normalize();
            let t_end = plane
                .and_then(|p| {
                    let denom = p.normal.dot(&refl);
                    let t = p.normal.dot(&(p.origin - s)) / denom;
                    (denom.abs() > 1e-12 && t > 0.0 && t.is_finite()).then_some(t)
                })
                .unwrap_or(1.0);
            for j in 0..n {
                if j == i || !valid[j] {
                    continue;
                }
                let mj = &state.mirrors[j];
                if segment_hits(mj, &cam, &incident, 1.0) || segment_hits(mj, &s, &refl, t_end) {
                    blocked[j] += 1;
                }
            }
        }
        for (j, &b) in blocked.iter().enumerate() {
            if b > 0 {
                out.push(Violation {
                    kind: ViolationKind::Occlusion,
                    mirrors: vec![i, j],
                    magnitude: b as f64 / samples.len() as f64,
                });
            }
        }
    }
}

fn spacing(
    state: &DesignState,
    opts: &ConstraintOptions,
    valid: &[bool],
    out: &mut Vec<Violation>,
) {
    let spec = &state.spec;
    let projected: Vec<Vec<Vector2<f64>>> = state
        .mirrors
        .iter()
        .map(|m| polygon::ensure_ccw(m.world_vertices().iter().map(|p| p.xy()).collect()))
        .collect();
    for i in 0..state.mirrors.len() {
        let (ri, ci) = (i / spec.cols, i % spec.cols);
        for j in (i + 1)..state.mirrors.len() {
            let (rj, cj) = (j / spec.cols, j % spec.cols);
            if ri.abs_diff(rj) > 1 || ci.abs_diff(cj) > 1 || !valid[i] || !valid[j] {
                continue;
            }
            let gap = polygon::signed_distance(&projected[i], &projected[j]);
            let shortfall = spec.min_gap - gap;
            if shortfall > opts.spacing_tolerance {
                out.push(Violation {
                    kind: ViolationKind::Spacing,
                    mirrors: vec![i, j],
                    magnitude: shortfall,
                });
            }
        }
    }
}

fn out_of_view(state: &DesignState, out: &mut Vec<Violation>) {
    let intr = &state.spec.camera;
    let pose = &state.spec.camera_pose;
    let (w, h) = (intr.width as f64 - 1.0, intr.height as f64 - 1.0);
    for (i, m) in state.mirrors.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for p in m.world_vertices() {
            let pc = pose.world_to_camera(&p);
            if pc.z <= 1e-9 {
                worst = worst.max(1.0);
                continue;
            }
            let n = Vector2::new(pc.x / pc.z, pc.y / pc.z);
            let r2 = n.norm_squared();
            if 1.0 + 3.0 * intr.k1 * r2 + 5.0 * intr.k2 * r2 * r2 <= 0.0 {
                worst = worst.max(1.0);
                continue;
            }
            let px = intr.normalized_to_pixel(n);
            let excess = [-px.x, px.x - w]
                .iter()
                .map(|e| e / intr.fx)
                .chain([-px.y, px.y - h].iter().map(|e| e / intr.fy))
                .fold(0.0, f64::max);
            worst = worst.max(excess);
        }
        if worst > 0.0 {
            out.push(Violation {
                kind: ViolationKind::OutOfView,
                mirrors: vec![i],
                magnitude: worst,
            });
        }
    }
}
