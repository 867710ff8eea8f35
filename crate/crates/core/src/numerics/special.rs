//! Special functions and dimensional constants.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// The Riesz-type constant `Γ((d−ρ)/2) / (π^{d/2} 2^ρ |Γ(ρ/2)|)`.
///
/// With `ρ = −α` it normalises the stable Lévy density, with `ρ = α` the
/// potential kernel.
pub fn riesz_constant(rho: f64, d: usize) -> Result<f64> {
    let df = d as f64;
    if rho == 0.0 || rho >= df {
        return Err(Error::invalid("rho", format!("need 0 != rho < d, got rho={rho}, d={d}")));
    }
    let half = 0.5 * rho;
    if half < 0.0 && half.fract() == 0.0 {
        return Err(Error::invalid("rho", "rho/2 is a pole of the gamma function"));
    }
    let num = gamma(0.5 * (df - rho));
    Ok(num / (PI.powf(0.5 * df) * 2f64.powf(rho) * gamma(half).abs()))
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

fn bessel_j_series(nu: f64, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = (0.5 * x).powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    for k in 1..300 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn bessel_j_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let a = 2.0 * kf - 1.0;
        term *= (mu - a * a) / (kf * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Bessel function of the first kind `J_ν(x)` for `x ≥ 0` and `ν > −1`.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if nu == 0.5 {
        return (2.0 / (PI * x)).sqrt() * x.sin();
    }
    if nu == -0.5 {
        return (2.0 / (PI * x)).sqrt() * x.cos();
    }
    if x <= 12.0 + nu.abs() {
        bessel_j_series(nu, x)
    } else {
        bessel_j_asymptotic(nu, x)
    }
}

/// Modified Bessel function `K_ν(x)` for `x > 0`, by quadrature of
/// `∫_0^∞ exp(−x cosh t) cosh(νt) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    let t_max = (50.0 / x + 1.0).ln().max(1.0) + 3.0;
    crate::numerics::quad::gl_panels(|t| (-x * t.cosh()).exp() * (nu * t).cosh(), 0.0, t_max, 64, 16)
}

/// Kolmogorov survival function `P(K > λ)` of the limiting KS statistic.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}
