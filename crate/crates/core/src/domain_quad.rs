//! Quadrature of functions over a domain with point singularities.
//!
//! Integration is polar around a chosen centre (typically the strongest
//! singularity); further singular points become breakpoints of the radial
//! and angular rules.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{add, dot, scale, sub, Domain, Point};
use crate::numerics::quad::{breakpoints, gauss_kronrod, tanh_sinh_breaks};

/// `∫_D f(y) dy` for `d ∈ {1, 2}`.
///
/// `center` is the polar origin and `singular` lists further points where
/// `f` may blow up. `tol` is a relative tolerance for the inner rules.
pub fn integrate_over_domain<F: Fn(Point) -> f64>(
    domain: &Domain,
    center: Point,
    singular: &[Point],
    tol: f64,
    f: F,
) -> Result<f64> {
    match domain.dim() {
        1 => {
            let (lo, hi) = domain.bounding_box();
            let mut pts = vec![center[0]];
            pts.extend(singular.iter().map(|p| p[0]));
            let b = breakpoints(lo[0], hi[0], &pts);
            Ok(tanh_sinh_breaks(|x, _, _| f([x, 0.0, 0.0]), &b, tol)?.value)
        }
        2 => {
            let radial = |theta: f64| -> f64 {
                let u = [theta.cos(), theta.sin(), 0.0];
                let mut total = 0.0;
                for (t0, t1) in domain.ray_segments(center, u) {
                    let mut cuts: Vec<f64> = singular
                        .iter()
                        .map(|s| dot(sub(*s, center), u))
                        .filter(|&t| t > t0 && t < t1)
                        .collect();
                    cuts.push(t0);
                    cuts.push(t1);
                    let b = breakpoints(t0, t1, &cuts);
                    let v = tanh_sinh_breaks(|t, _, _| f(add(center, scale(u, t))) * t, &b, tol)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN);
                    total += v;
                }
                total
            };
            let mut angles: Vec<f64> = singular
                .iter()
                .map(|s| {
                    let v = sub(*s, center);
                    v[1].atan2(v[0]).rem_euclid(2.0 * PI)
                })
                .collect();
            if let crate::geometry::Shape::Polygon { vertices } = domain.shape() {
                angles.extend(
                    vertices
                        .iter()
                        .map(|v| (v[1] - center[1]).atan2(v[0] - center[0]).rem_euclid(2.0 * PI)),
                );
            }
            for k in 0..8 {
                angles.push(k as f64 * PI / 4.0);
            }
            let b = breakpoints(0.0, 2.0 * PI, &angles);
            let mut total = 0.0;
            for w in b.windows(2) {
                let r = gauss_kronrod(radial, w[0], w[1], 1e-13, tol.max(1e-10), 200)?;
                if !r.value.is_finite() {
                    return Err(Error::Quadrature { error: f64::INFINITY, target: tol });
                }
                total += r.value;
            }
            Ok(total)
        }
        d => Err(Error::invalid("d", format!("domain quadrature supports d <= 2, got {d}"))),
    }
}
