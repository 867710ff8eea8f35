//! One-dimensional quadrature rules.
//!
//! Three workhorses are provided: fixed Gauss–Legendre panels for smooth
//! integrands, an adaptive Gauss–Kronrod (7/15) rule with an error estimate,
//! and double-exponential (tanh–sinh) quadrature for integrands with
//! algebraic endpoint singularities. The tanh–sinh integrand receives the
//! exact distances to both endpoints so that singular factors such as
//! `|x - a|^(-0.9)` can be evaluated without cancellation.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

fn rule_cache() -> &'static RwLock<HashMap<usize, Rule>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "rule order must be positive");
    if let Some(rule) = rule_cache().read().expect("rule cache poisoned").get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    rule_cache()
        .write()
        .expect("rule cache poisoned")
        .entry(n)
        .or_insert(rule)
        .clone()
}

/// Composite Gauss–Legendre over `panels` equal panels of `[a, b]`.
pub fn gl_panels<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let (nodes, weights) = (&rule.0, &rule.1);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            s += w * f(mid + 0.5 * h * x);
        }
        sum += 0.5 * h * s;
    }
    sum
}

/// Gauss–Legendre over the consecutive intervals defined by `breaks`.
pub fn gl_breaks<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], order: usize) -> f64 {
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gl_panels(&mut f, w[0], w[1], 1, order))
        .sum()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod 7/15 quadrature.
///
/// Subdivides the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |value|)` or `max_intervals`
/// is reached, in which case [`Error::Quadrature`] reports the achieved bound.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evals: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut evals = 15;
    loop {
        let value: f64 = intervals.iter().map(|i| i.2).sum();
        let error: f64 = intervals.iter().map(|i| i.3).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target {
            return Ok(QuadResult { value, error, evals });
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Quadrature { error, target });
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty interval list");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evals += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Double-exponential quadrature on `[a, b]`.
///
/// `f(x, da, db)` receives the abscissa together with `da = x - a` and
/// `db = b - x`, both computed without cancellation. Levels are refined
/// until two successive estimates agree to `tol` (relative, with an absolute
/// floor of `tol * 1e-3`).
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evals: 0 });
    }
    let half = 0.5 * (b - a);
    let t_max = 6.5;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut evals = 0usize;
    let mut eval_at = |t: f64, evals: &mut usize| -> f64 {
        let u = half_pi * t.sinh();
        let cosh_u = u.cosh();
        let w = half_pi * t.cosh() / (cosh_u * cosh_u);
        // distance of the abscissa from the nearer end of [-1, 1]
        let comp = 1.0 / (u.abs().exp() * cosh_u);
        let (da, db) = if t < 0.0 {
            (half * comp, half * (2.0 - comp))
        } else {
            (half * (2.0 - comp), half * comp)
        };
        if da <= 0.0 || db <= 0.0 || w < 1e-300 {
            return 0.0;
        }
        let x = if da < db { a + da } else { b - db };
        *evals += 1;
        let v = f(x, da, db);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = eval_at(0.0, &mut evals);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        sum += eval_at(k as f64 * h, &mut evals) + eval_at(-(k as f64) * h, &mut evals);
        k += 1;
    }
    let mut prev = sum * h * half;
    let mut err = f64::INFINITY;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += eval_at(t, &mut evals) + eval_at(-t, &mut evals);
            k += 2;
        }
        let current = sum * h * half;
        err = (current - prev).abs();
        if err <= tol * current.abs().max(1e-3) {
            return Ok(QuadResult { value: current, error: err, evals });
        }
        prev = current;
    }
    Err(Error::Quadrature {
        error: err,
        target: tol,
    })
}

/// Tanh–sinh over consecutive intervals of `breaks`; singular points should
/// be listed as breakpoints.
pub fn tanh_sinh_breaks<F: FnMut(f64, f64, f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    tol: f64,
) -> Result<QuadResult> {
    let mut total = QuadResult { value: 0.0, error: 0.0, evals: 0 };
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (a, b) = (w[0], w[1]);
            let r = tanh_sinh(|x, da, db| f(x, da, db), a, b, tol)?;
            total.value += r.value;
            total.error += r.error;
            total.evals += r.evals;
        }
    }
    Ok(total)
}

/// Sorted, deduplicated breakpoints clipped to `[lo, hi]`.
pub fn breakpoints(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = std::iter::once(lo)
        .chain(interior.iter().copied().filter(|&p| p > lo && p < hi))
        .chain(std::iter::once(hi))
        .collect();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + x.abs()));
    b
}
