//! Bounded Lipschitz domains in dimension one to three.
//!
//! Points are fixed-size `[f64; 3]` arrays; coordinates beyond the domain's
//! dimension are kept at zero so that norms and differences need no
//! dimension argument.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Builds a point from a slice of at most three coordinates.
pub fn point(coords: &[f64]) -> Point {
    let mut p = ORIGIN;
    for (slot, &c) in p.iter_mut().zip(coords) {
        *slot = c;
    }
    p
}

/// Uniform random unit vector in `R^d`.
pub fn random_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Point {
    use rand_distr::{Distribution, StandardNormal};
    if d == 1 {
        return if rng.random::<bool>() { [1.0, 0.0, 0.0] } else { [-1.0, 0.0, 0.0] };
    }
    loop {
        let mut p = ORIGIN;
        for c in p.iter_mut().take(d) {
            *c = StandardNormal.sample(rng);
        }
        let n = norm(p);
        if n > 1e-12 {
            return scale(p, 1.0 / n);
        }
    }
}

/// Uniform random point of the ball `B(center, radius)` in `R^d`.
pub fn random_in_ball<R: Rng + ?Sized>(center: Point, radius: f64, d: usize, rng: &mut R) -> Point {
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    add(center, scale(random_direction(d, rng), r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]> },
}

/// JSON form of a domain: the shape plus optional Lipschitz character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoints {
    /// Interior point with boundary distance at least `r0/2`.
    pub x0: Point,
    /// `x0` shifted by `r0/4` along the first axis.
    pub x1: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: Shape,
    dim: usize,
    r0: f64,
    lambda: f64,
    diam: f64,
    refs: ReferencePoints,
}

fn check_finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be finite"))
    }
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_spec(DomainSpec { shape: Shape::Interval { a, b }, r0: None, lambda: None })
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        Self::from_spec(DomainSpec {
            shape: Shape::Ball { center: center.to_vec(), radius },
            r0: None,
            lambda: None,
        })
    }

    pub fn cube(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::from_spec(DomainSpec {
            shape: Shape::Box { lo: lo.to_vec(), hi: hi.to_vec() },
            r0: None,
            lambda: None,
        })
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        Self::from_spec(DomainSpec { shape: Shape::Polygon { vertices }, r0: None, lambda: None })
    }

    /// Replaces the Lipschitz character; reference points are recomputed.
    pub fn with_lipschitz(self, r0: f64, lambda: f64) -> Result<Self> {
        Self::from_spec(DomainSpec { shape: self.shape, r0: Some(r0), lambda: Some(lambda) })
    }

    pub fn spec(&self) -> DomainSpec {
        DomainSpec { shape: self.shape.clone(), r0: Some(self.r0), lambda: Some(self.lambda) }
    }

    pub fn from_spec(spec: DomainSpec) -> Result<Self> {
        let (dim, diam, default_r0) = match &spec.shape {
            Shape::Interval { a, b } => {
                check_finite("a", *a)?;
                check_finite("b", *b)?;
                if a >= b {
                    return Err(Error::invalid("b", "interval needs a < b"));
                }
                (1, b - a, 0.5 * (b - a))
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || center.len() > 3 {
                    return Err(Error::invalid("center", "dimension must be 1, 2 or 3"));
                }
                for &c in center {
                    check_finite("center", c)?;
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::invalid("radius", "must be positive"));
                }
                (center.len(), 2.0 * radius, *radius)
            }
            Shape::Box { lo, hi } => {
                if lo.is_empty() || lo.len() > 3 || lo.len() != hi.len() {
                    return Err(Error::invalid("lo", "lo/hi must have equal length 1..=3"));
                }
                let mut d2 = 0.0;
                let mut min_half = f64::INFINITY;
                for (l, h) in lo.iter().zip(hi) {
                    check_finite("lo", *l)?;
                    check_finite("hi", *h)?;
                    if l >= h {
                        return Err(Error::invalid("hi", "box needs lo < hi in every coordinate"));
                    }
                    d2 += (h - l) * (h - l);
                    min_half = min_half.min(0.5 * (h - l));
                }
                (lo.len(), d2.sqrt(), min_half)
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(Error::invalid("vertices", "polygon needs at least three vertices"));
                }
                for v in vertices {
                    check_finite("vertices", v[0])?;
                    check_finite("vertices", v[1])?;
                }
                if polygon_area(vertices).abs() < 1e-12 {
                    return Err(Error::invalid("vertices", "polygon is degenerate"));
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        if j == i + 1 || (i == 0 && j == n - 1) {
                            continue;
                        }
                        if segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                            return Err(Error::invalid("vertices", "polygon is not simple"));
                        }
                    }
                }
                let mut diam: f64 = 0.0;
                for a in vertices {
                    for b in vertices {
                        diam = diam.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                    }
                }
                (2, diam, f64::NAN)
            }
        };
        let mut dom = Domain {
            shape: spec.shape,
            dim,
            r0: 0.0,
            lambda: spec.lambda.unwrap_or(1.0),
            diam,
            refs: ReferencePoints { x0: ORIGIN, x1: ORIGIN },
        };
        let (argmax, max_delta) = dom.grid_argmax_delta();
        let r0 = match spec.r0 {
            Some(r) => r,
            None if default_r0.is_nan() => max_delta,
            None => default_r0,
        };
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::invalid("r0", "must be positive"));
        }
        if r0 > diam {
            return Err(Error::invalid("r0", "must not exceed the diameter"));
        }
        if !(dom.lambda.is_finite() && dom.lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be nonnegative"));
        }
        dom.r0 = r0;
        let x0 = match &dom.shape {
            Shape::Interval { a, b } => point(&[0.5 * (a + b)]),
            Shape::Ball { center, .. } => point(center),
            _ => argmax,
        };
        if dom.dist_to_boundary(x0) < 0.5 * r0 - 1e-12 {
            return Err(Error::Geometry(format!(
                "no point with boundary distance >= r0/2 = {}; r0 is inconsistent with the shape",
                0.5 * r0
            )));
        }
        let mut x1 = x0;
        x1[0] += 0.25 * r0;
        dom.refs = ReferencePoints { x0, x1 };
        Ok(dom)
    }

    /// Argmax of the boundary distance on a regular grid over the bounding
    /// box; ties go to the lexicographically smallest node.
    fn grid_argmax_delta(&self) -> (Point, f64) {
        let (lo, hi) = self.bounding_box();
        let n = match self.dim {
            1 => 2000,
            2 => 200,
            _ => 40,
        };
        let mut best = (ORIGIN, f64::NEG_INFINITY);
        let mut idx = [0usize; 3];
        let counts: Vec<usize> = (0..3).map(|k| if k < self.dim { n + 1 } else { 1 }).collect();
        for i in 0..counts[0] {
            idx[0] = i;
            for j in 0..counts[1] {
                idx[1] = j;
                for k in 0..counts[2] {
                    idx[2] = k;
                    let mut p = ORIGIN;
                    for c in 0..self.dim {
                        p[c] = lo[c] + (hi[c] - lo[c]) * idx[c] as f64 / n as f64;
                    }
                    if !self.contains(p) {
                        continue;
                    }
                    let v = self.dist_to_boundary(p);
                    if v > best.1 {
                        best = (p, v);
                    }
                }
            }
        }
        best
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `r0 / diam`.
    pub fn relative_r0(&self) -> f64 {
        self.r0 / self.diam
    }

    /// Radius factor `1 / (2 sqrt(1 + λ²))` of interpolation balls.
    pub fn kappa(&self) -> f64 {
        0.5 / (1.0 + self.lambda * self.lambda).sqrt()
    }

    pub fn reference_points(&self) -> ReferencePoints {
        self.refs
    }

    /// Ball with the same centre and radius, if the domain is a ball.
    pub fn as_ball(&self) -> Option<(Point, f64)> {
        match &self.shape {
            Shape::Ball { center, radius } => Some((point(center), *radius)),
            Shape::Interval { a, b } => Some((point(&[0.5 * (a + b)]), 0.5 * (b - a))),
            _ => None,
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Interval { a, b } => (point(&[*a]), point(&[*b])),
            Shape::Ball { center, radius } => {
                let c = point(center);
                let mut lo = c;
                let mut hi = c;
                for k in 0..self.dim {
                    lo[k] -= radius;
                    hi[k] += radius;
                }
                (lo, hi)
            }
            Shape::Box { lo, hi } => (point(lo), point(hi)),
            Shape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY, f64::INFINITY, 0.0];
                let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Ball { radius, .. } => {
                crate::numerics::special::ball_volume(self.dim) * radius.powi(self.dim as i32)
            }
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Shape::Polygon { vertices } => polygon_area(vertices).abs(),
        }
    }

    /// Membership in the open set.
    pub fn contains(&self, x: Point) -> bool {
        match &self.shape {
            Shape::Interval { a, b } => x[0] > *a && x[0] < *b,
            Shape::Ball { center, radius } => dist(x, point(center)) < *radius,
            Shape::Box { lo, hi } => (0..self.dim).all(|k| x[k] > lo[k] && x[k] < hi[k]),
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let mut inside = false;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    if (a[1] > x[1]) != (b[1] > x[1]) {
                        let xc = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                        if x[0] < xc {
                            inside = !inside;
                        }
                    }
                }
                inside && self.dist_to_boundary(x) > 0.0
            }
        }
    }

    /// Euclidean distance from `x` to the boundary, for points on either side.
    pub fn dist_to_boundary(&self, x: Point) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (x[0] - a).abs().min((b - x[0]).abs()),
            Shape::Ball { center, radius } => (radius - dist(x, point(center))).abs(),
            Shape::Box { lo, hi } => {
                let inside = (0..self.dim).all(|k| x[k] > lo[k] && x[k] < hi[k]);
                if inside {
                    (0..self.dim).map(|k| (x[k] - lo[k]).min(hi[k] - x[k])).fold(f64::INFINITY, f64::min)
                } else {
                    (0..self.dim)
                        .map(|k| {
                            let e = (lo[k] - x[k]).max(0.0).max(x[k] - hi[k]);
                            e * e
                        })
                        .sum::<f64>()
                        .sqrt()
                }
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let p = [x[0], x[1]];
                (0..n)
                    .map(|i| segment_distance(p, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Boundary distance for interior points and zero outside.
    pub fn delta(&self, x: Point) -> f64 {
        if self.contains(x) {
            self.dist_to_boundary(x)
        } else {
            0.0
        }
    }

    /// Parameter intervals `t > 0` on which `x + t·u` lies in the domain,
    /// for a unit vector `u`; sorted and disjoint.
    pub fn ray_segments(&self, x: Point, u: Point) -> Vec<(f64, f64)> {
        let clip = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
            let lo = lo.max(0.0);
            if hi > lo {
                vec![(lo, hi)]
            } else {
                vec![]
            }
        };
        match &self.shape {
            Shape::Interval { a, b } => {
                if u[0] > 0.0 {
                    clip((a - x[0]) / u[0], (b - x[0]) / u[0])
                } else if u[0] < 0.0 {
                    clip((b - x[0]) / u[0], (a - x[0]) / u[0])
                } else {
                    vec![]
                }
            }
            Shape::Ball { center, radius } => {
                let q = sub(x, point(center));
                let bq = dot(q, u);
                let disc = bq * bq - (dot(q, q) - radius * radius);
                if disc <= 0.0 {
                    return vec![];
                }
                let s = disc.sqrt();
                clip(-bq - s, -bq + s)
            }
            Shape::Box { lo, hi } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..self.dim {
                    if u[k] == 0.0 {
                        if x[k] <= lo[k] || x[k] >= hi[k] {
                            return vec![];
                        }
                    } else {
                        let (ta, tb) = ((lo[k] - x[k]) / u[k], (hi[k] - x[k]) / u[k]);
                        t0 = t0.max(ta.min(tb));
                        t1 = t1.min(ta.max(tb));
                    }
                }
                clip(t0, t1)
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                let mut ts = Vec::new();
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let den = u[0] * e[1] - u[1] * e[0];
                    if den.abs() < 1e-300 {
                        continue;
                    }
                    let w = [a[0] - x[0], a[1] - x[1]];
                    let t = (w[0] * e[1] - w[1] * e[0]) / den;
                    let s = (w[0] * u[1] - w[1] * u[0]) / den;
                    if (0.0..1.0).contains(&s) && t > 0.0 {
                        ts.push(t);
                    }
                }
                ts.sort_by(f64::total_cmp);
                ts.dedup_by(|p, q| (*p - *q).abs() < 1e-13);
                let mut cuts = vec![0.0];
                cuts.extend(ts);
                let mut out = Vec::new();
                for w in cuts.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    if self.contains(add(x, scale(u, mid))) {
                        out.push((w[0], w[1]));
                    }
                }
                out
            }
        }
    }

    /// Uniform interior point by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let (lo, hi) = self.bounding_box();
        loop {
            let mut p = ORIGIN;
            for k in 0..self.dim {
                p[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
            }
            if self.contains(p) {
                return p;
            }
        }
    }

    /// Whether `B(a, radius)` lies in `D ∩ B(x, 3r) ∩ B(y, 3r)`.
    pub fn interpolation_ball_admissible(&self, a: Point, radius: f64, x: Point, y: Point, r: f64) -> bool {
        self.contains(a)
            && self.dist_to_boundary(a) >= radius
            && dist(a, x) + radius <= 3.0 * r
            && dist(a, y) + radius <= 3.0 * r
    }

    /// The interpolation point `A_{x,y}`.
    ///
    /// For `r = δ(x) ∨ δ(y) ∨ |x−y| > r0/32` this is `x1`; otherwise the
    /// segment from the midpoint of `x, y` towards `x0` is scanned in steps
    /// of `κr/4` and the first admissible point is returned.
    pub fn interpolation_point(&self, x: Point, y: Point) -> Result<Point> {
        if !self.contains(x) || !self.contains(y) {
            return Err(Error::OutsideDomain(format!("{x:?} / {y:?}")));
        }
        let r = self.dist_to_boundary(x).max(self.dist_to_boundary(y)).max(dist(x, y));
        if r > self.r0 / 32.0 {
            return Ok(self.refs.x1);
        }
        let kr = self.kappa() * r;
        let mid = scale(add(x, y), 0.5);
        let to_x0 = sub(self.refs.x0, mid);
        let len = norm(to_x0);
        let step = 0.25 * kr;
        let steps = if len > 0.0 { (len / step).ceil() as usize } else { 0 };
        for k in 0..=steps {
            let a = if len > 0.0 { add(mid, scale(to_x0, (k as f64 * step).min(len) / len)) } else { mid };
            if self.interpolation_ball_admissible(a, kr, x, y, r) {
                return Ok(a);
            }
            if dist(a, mid) > 3.0 * r {
                break;
            }
        }
        Err(Error::Geometry(format!(
            "no admissible interpolation point for x={x:?}, y={y:?} (r={r:e}, kappa={})",
            self.kappa()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> Domain {
        Domain::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    fn l_shape() -> Domain {
        Domain::polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]).unwrap()
    }

    #[test]
    fn membership() {
        let b = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        assert!(b.contains([0.5, 0.0, 0.0]));
        assert!(!b.contains([1.0, 0.0, 0.0]));
        let i = Domain::interval(-1.0, 1.0).unwrap();
        assert!(!i.contains([-1.000_000_1, 0.0, 0.0]));
        let l = l_shape();
        assert!(l.contains([0.5, 1.5, 0.0]));
        assert!(!l.contains([1.5, 1.5, 0.0]));
    }

    #[test]
    fn boundary_distances() {
        let b = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        assert!((b.dist_to_boundary([0.25, 0.0, 0.0]) - 0.75).abs() < 1e-15);
        let i = Domain::interval(-1.0, 1.0).unwrap();
        assert_eq!(i.dist_to_boundary(ORIGIN), 1.0);
        assert!((unit_square().dist_to_boundary([0.1, 0.4, 0.0]) - 0.1).abs() < 1e-15);
        // exterior distance
        assert!((unit_square().dist_to_boundary([2.0, 0.5, 0.0]) - 1.0).abs() < 1e-15);
        assert!((l_shape().dist_to_boundary([1.5, 1.5, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reference_points_conventions() {
        let b = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.reference_points().x0, ORIGIN);
        let i = Domain::interval(-1.0, 1.0).unwrap().with_lipschitz(1.0, 1.0).unwrap();
        let refs = i.reference_points();
        assert_eq!(refs.x0[0], 0.0);
        assert_eq!(refs.x1[0], 0.25);
        let sq = unit_square().with_lipschitz(0.5, 1.0).unwrap();
        let refs = sq.reference_points();
        // independent grid argmax: the centroid maximises min(x, 1-x, y, 1-y)
        let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
        for i in 1..100 {
            for j in 1..100 {
                let (x, y) = (i as f64 / 100.0, j as f64 / 100.0);
                let v = x.min(1.0 - x).min(y).min(1.0 - y);
                if v > best.0 {
                    best = (v, [x, y]);
                }
            }
        }
        assert!((refs.x0[0] - best.1[0]).abs() < 1e-12 && (refs.x0[1] - best.1[1]).abs() < 1e-12);
        assert!((dist(refs.x0, refs.x1) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_r0_rejected() {
        let r = Domain::interval(-1.0, 1.0).unwrap().with_lipschitz(2.5, 1.0);
        assert!(r.is_err());
        let r = unit_square().with_lipschitz(1.2, 1.0);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn non_simple_polygon_rejected() {
        let bow = Domain::polygon(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(bow.is_err());
    }

    #[test]
    fn interpolation_point_large_branch() {
        let b = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let refs = b.reference_points();
        assert_eq!(b.interpolation_point(refs.x0, refs.x0).unwrap(), refs.x1);
        let a = b.interpolation_point([-0.2, 0.0, 0.0], [0.2, 0.0, 0.0]).unwrap();
        assert_eq!(a, refs.x1);
    }

    #[test]
    fn interpolation_point_small_branch_ball_inclusion() {
        let dom = Domain::interval(-1.0, 1.0).unwrap().with_lipschitz(1.0, 1.0).unwrap();
        let (x, y) = ([-0.999, 0.0, 0.0], [-0.998, 0.0, 0.0]);
        let a = dom.interpolation_point(x, y).unwrap();
        assert_ne!(a, dom.reference_points().x1);
        let r: f64 = 0.002;
        let kr = dom.kappa() * r;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = random_in_ball(a, kr, 1, &mut rng);
            assert!(dom.contains(p) && dist(p, x) < 3.0 * r && dist(p, y) < 3.0 * r);
        }
    }

    #[test]
    fn ray_segments_ball_and_polygon() {
        let b = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let s = b.ray_segments([0.5, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert_eq!(s.len(), 1);
        assert!((s[0].1 - 0.5).abs() < 1e-15);
        // ray crossing the notch of the L-shape leaves and re-enters
        let l = l_shape();
        let s = l.ray_segments([0.5, 1.5, 0.0], [0.0, -1.0, 0.0]);
        assert_eq!(s.len(), 1);
        let s = l.ray_segments([0.5, 1.5, 0.0], [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, 0.0]);
        assert!((s[0].1 - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn analytic_delta_matches_sampled_nearest_boundary() {
        // nearest-boundary distance estimated as the smallest ball radius
        // around x that reaches a sampled exterior point
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let doms = [Domain::ball(&[0.0, 0.0], 1.0).unwrap(), unit_square(), Domain::interval(-1.0, 1.0).unwrap()];
        for dom in &doms {
            for _ in 0..5 {
                let x = dom.sample_uniform(&mut rng);
                let exact = dom.dist_to_boundary(x);
                let (mut lo, mut hi) = (0.0, dom.diam());
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let mut hit = false;
                    for _ in 0..400 {
                        let dir = random_direction(dom.dim(), &mut rng);
                        if !dom.contains(add(x, scale(dir, mid))) {
                            hit = true;
                            break;
                        }
                    }
                    if hit {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                // bisection on the sphere radius can only overestimate
                assert!(hi >= exact - 1e-9, "{hi} < {exact}");
                if dom.dim() == 1 {
                    assert!((hi - exact).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn domain_json_roundtrip() {
        let s = r#"{"shape":"ball","center":[0.0,0.0],"radius":1.0,"r0":1.0,"lambda":1.0}"#;
        let spec: DomainSpec = serde_json::from_str(s).unwrap();
        let dom = Domain::from_spec(spec.clone()).unwrap();
        assert_eq!(dom.spec(), spec);
    }

    #[test]
    fn diameter_matches_sampled_supremum() {
        for seed in 0u64..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for dom in [Domain::ball(&[0.0, 0.0], 1.0).unwrap(), unit_square()] {
            let pts: Vec<Point> = (0..10_000).map(|_| dom.sample_uniform(&mut rng)).collect();
            // extreme sample points along many directions carry the supremum
            let mut ext = Vec::new();
            for k in 0..90 {
                let th = std::f64::consts::PI * k as f64 / 90.0;
                let u = [th.cos(), th.sin(), 0.0];
                let key = |p: &&Point| dot(**p, u);
                ext.push(*pts.iter().max_by(|a, b| key(a).total_cmp(&key(b))).unwrap());
                ext.push(*pts.iter().min_by(|a, b| key(a).total_cmp(&key(b))).unwrap());
            }
            let mut best: f64 = 0.0;
            for a in &ext { for b in &ext { best = best.max(dist(*a, *b)); } }
            assert!(best <= dom.diam() && best >= 0.98 * dom.diam(), "{} vs {}", best, dom.diam());
        }
    }
    }

    proptest! {
        #[test]
        fn delta_triangle_property(ax in 0.0f64..1.0, ay in 0.0f64..1.0, bx in 0.0f64..1.0, by in 0.0f64..1.0) {
            let dom = l_shape();
            let x = [2.0 * ax, 2.0 * ay, 0.0];
            let y = [2.0 * bx, 2.0 * by, 0.0];
            prop_assume!(dom.contains(x) && dom.contains(y));
            prop_assert!(dom.delta(x) + dist(x, y) >= dom.delta(y) - 1e-12);
        }

        #[test]
        fn small_branch_point_is_admissible(t in 0.0f64..1.0, s in 1e-4f64..0.02, side in 0usize..4) {
            let dom = unit_square().with_lipschitz(0.5, 1.0).unwrap();
            // pairs hugging one edge of the square
            let base = [0.2 + 0.6 * t, s];
            let (x, y) = match side {
                0 => ([base[0], base[1], 0.0], [base[0] + s, base[1] * 0.5, 0.0]),
                1 => ([1.0 - base[1], base[0], 0.0], [1.0 - 0.5 * base[1], base[0] - s, 0.0]),
                2 => ([base[0], 1.0 - base[1], 0.0], [base[0] - s, 1.0 - 0.5 * base[1], 0.0]),
                _ => ([base[1], base[0], 0.0], [0.5 * base[1], base[0] + s, 0.0]),
            };
            let r = dom.delta(x).max(dom.delta(y)).max(dist(x, y));
            prop_assume!(r <= dom.r0() / 32.0);
            let a = dom.interpolation_point(x, y).unwrap();
            prop_assert!(dom.interpolation_ball_admissible(a, dom.kappa() * r, x, y, r));
        }

    }
}
