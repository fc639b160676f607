//! Convex polygon helpers in 2D and on planes in 3D.
//!
//! 2D polygons are plain vertex slices; operations that need a winding expect
//! counter-clockwise order (positive signed area).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COPLANAR_TOL: f64 = 1e-7;

#[inline]
fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn signed_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += cross2(&poly[i], &poly[(i + 1) % n]);
    }
    0.5 * s
}

pub fn is_convex(poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let scale = poly.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-12);
    let tol = 1e-12 * scale * scale;
    let mut sign = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let z = cross2(&(b - a), &(c - b));
        if z.abs() <= tol {
            continue;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

pub fn ensure_ccw(mut poly: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

pub fn centroid(poly: &[Vector2<f64>]) -> Vector2<f64> {
    let a = signed_area(poly);
    if a.abs() < 1e-300 {
        let n = poly.len().max(1) as f64;
        return poly.iter().sum::<Vector2<f64>>() / n;
    }
    let n = poly.len();
    let mut c = Vector2::zeros();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        c += (p + q) * cross2(&p, &q);
    }
    c / (6.0 * a)
}

/// Point-in-convex-polygon test for a CCW polygon; `tol` widens the polygon.
#[inline]
pub fn contains(poly: &[Vector2<f64>], p: &Vector2<f64>, tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a = poly[i];
        let e = poly[(i + 1) % n] - a;
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        if cross2(&e, &(p - a)) < -tol * len {
            return false;
        }
    }
    true
}

/// Keeps the part of `subject` left of the directed line `a -> b`.
pub fn clip_halfplane(
    subject: &[Vector2<f64>],
    a: Vector2<f64>,
    b: Vector2<f64>,
) -> Vec<Vector2<f64>> {
    let e = b - a;
    let side = |p: &Vector2<f64>| cross2(&e, &(p - a));
    let n = subject.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let cur = subject[i];
        let prev = subject[(i + n - 1) % n];
        let sc = side(&cur);
        let sp = side(&prev);
        if sc >= 0.0 {
            if sp < 0.0 {
                out.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
            out.push(cur);
        } else if sp >= 0.0 {
            out.push(prev + (cur - prev) * (sp / (sp - sc)));
        }
    }
    out
}

/// Sutherland–Hodgman clip of `subject` by the convex CCW `clipper`.
pub fn clip(subject: &[Vector2<f64>], clipper: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut out = subject.to_vec();
    let n = clipper.len();
    for i in 0..n {
        if out.len() < 3 {
            return Vec::new();
        }
        out = clip_halfplane(&out, clipper[i], clipper[(i + 1) % n]);
    }
    dedup(out)
}

/// Drops consecutive near-duplicate vertices.
pub fn dedup(poly: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    let scale = poly.iter().map(|p| p.norm()).fold(1e-300, f64::max);
    let eps = 1e-13 * scale;
    let mut out: Vec<Vector2<f64>> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q| (p - q).norm() > eps) {
            out.push(p);
        }
    }
    while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= eps {
        out.pop();
    }
    out
}

/// Shrinks a convex CCW polygon by `margin` along every edge normal.
pub fn erode(poly: &[Vector2<f64>], margin: f64) -> Vec<Vector2<f64>> {
    if margin <= 0.0 {
        return poly.to_vec();
    }
    let n = poly.len();
    let mut out = poly.to_vec();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let e = b - a;
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let inward = Vector2::new(-e.y, e.x) / len;
        out = clip_halfplane(&out, a + inward * margin, b + inward * margin);
        if out.len() < 3 {
            return Vec::new();
        }
    }
    let out = dedup(out);
    if out.len() < 3 || signed_area(&out) <= 0.0 {
        Vec::new()
    } else {
        out
    }
}

fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let e = b - a;
    let l2 = e.norm_squared();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&e) / l2).clamp(0.0, 1.0);
    (p - (a + e * t)).norm()
}

/// Signed separation of two convex CCW polygons: the gap when disjoint,
/// minus the minimum separating-axis overlap when they intersect.
pub fn signed_distance(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    let mut min_overlap = f64::INFINITY;
    let mut separated = false;
    for (p, q) in [(a, b), (b, a)] {
        let n = p.len();
        for i in 0..n {
            let e = p[(i + 1) % n] - p[i];
            let len = e.norm();
            if len == 0.0 {
                continue;
            }
            let axis = Vector2::new(e.y, -e.x) / len;
            let (pmin, pmax) = project_range(p, &axis);
            let (qmin, qmax) = project_range(q, &axis);
            let overlap = pmax.min(qmax) - pmin.max(qmin);
            if overlap <= 0.0 {
                separated = true;
            }
            min_overlap = min_overlap.min(overlap);
        }
    }
    if !separated {
        return -min_overlap;
    }
    let mut d = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        let n = q.len();
        for v in p {
            for i in 0..n {
                d = d.min(point_segment_distance(v, &q[i], &q[(i + 1) % n]));
            }
        }
    }
    d
}

fn project_range(poly: &[Vector2<f64>], axis: &Vector2<f64>) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        })
}

/// Orthonormal frame on a plane in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    pub origin: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl PlaneFrame {
    /// Frame with `u` taken from `hint` projected into the plane.
    pub fn new(origin: Vector3<f64>, normal: Vector3<f64>, hint: Vector3<f64>) -> Result<Self> {
        let normal = normal
            .try_normalize(1e-15)
            .ok_or_else(|| Error::Geometry("zero plane normal".into()))?;
        let mut u = (hint - normal * normal.dot(&hint)).try_normalize(1e-9);
        if u.is_none() {
            let alt = if normal.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            u = (alt - normal * normal.dot(&alt)).try_normalize(1e-9);
        }
        let u = u.ok_or_else(|| Error::Geometry("cannot build plane frame".into()))?;
        let v = normal.cross(&u);
        Ok(PlaneFrame {
            origin,
            u,
            v,
            normal,
        })
    }

    #[inline]
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let d = p - self.origin;
        Vector2::new(d.dot(&self.u), d.dot(&self.v))
    }

    #[inline]
    pub fn to_world(&self, q: &Vector2<f64>) -> Vector3<f64> {
        self.origin + self.u * q.x + self.v * q.y
    }

    #[inline]
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.origin).dot(&self.normal)
    }
}

/// Convex planar polygon in 3D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon3D {
    pub vertices: Vec<Vector3<f64>>,
}

impl ConvexPolygon3D {
    pub fn new(vertices: Vec<Vector3<f64>>) -> Result<Self> {
        let p = ConvexPolygon3D { vertices };
        p.validate()?;
        Ok(p)
    }

    /// Newell normal (length = twice the area).
    pub fn vector_area(&self) -> Vector3<f64> {
        let n = self.vertices.len();
        let mut s = Vector3::zeros();
        for i in 0..n {
            s += self.vertices[i].cross(&self.vertices[(i + 1) % n]);
        }
        s
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len().max(1) as f64
    }

    /// Frame on the polygon's own plane.
    pub fn frame(&self) -> Result<PlaneFrame> {
        if self.vertices.len() < 3 {
            return Err(Error::Geometry("polygon has fewer than 3 vertices".into()));
        }
        let hint = self.vertices[1] - self.vertices[0];
        PlaneFrame::new(self.centroid(), self.vector_area(), hint)
    }

    pub fn validate(&self) -> Result<()> {
        let frame = self.frame()?;
        if self
            .vertices
            .iter()
            .any(|p| frame.distance(p).abs() > COPLANAR_TOL)
        {
            return Err(Error::Geometry("polygon vertices are not coplanar".into()));
        }
        let local: Vec<_> = self.vertices.iter().map(|p| frame.to_local(p)).collect();
        if !is_convex(&local) {
            return Err(Error::Geometry("polygon is not convex".into()));
        }
        Ok(())
    }

    pub fn to_local(&self, frame: &PlaneFrame) -> Vec<Vector2<f64>> {
        self.vertices.iter().map(|p| frame.to_local(p)).collect()
    }
}

/// Area via the 3D shoelace (Newell) formula; 0 for degenerate polygons.
pub fn polygon_area(p: &ConvexPolygon3D) -> f64 {
    if p.vertices.len() < 3 {
        return 0.0;
    }
    0.5 * p.vector_area().norm()
}

/// Intersection of two convex polygons lying in `shared_plane`.
///
/// Returns `None` when the intersection has no area.
pub fn clip_convex(
    a: &ConvexPolygon3D,
    b: &ConvexPolygon3D,
    shared_plane: &PlaneFrame,
) -> Result<Option<ConvexPolygon3D>> {
    for p in a.vertices.iter().chain(&b.vertices) {
        if shared_plane.distance(p).abs() > COPLANAR_TOL {
            return Err(Error::Geometry(
                "polygons do not lie in the shared plane".into(),
            ));
        }
    }
    let la = ensure_ccw(a.to_local(shared_plane));
    let lb = ensure_ccw(b.to_local(shared_plane));
    let out = clip(&la, &lb);
    if out.len() < 3 || signed_area(&out) <= 0.0 {
        return Ok(None);
    }
    Ok(Some(ConvexPolygon3D {
        vertices: out.iter().map(|q| shared_plane.to_world(q)).collect(),
    }))
}
