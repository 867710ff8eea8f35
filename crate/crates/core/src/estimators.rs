//! Monte Carlo and quadrature estimators on domains.
//!
//! Monte Carlo work is split into fixed-size batches. Batch `b` draws from a
//! ChaCha stream seeded by `(seed, b)` and batches are merged in order, so
//! results depend on `(seed, n)` only and not on the number of workers.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain_quad::integrate_over_domain;
use crate::error::{Error, Result};
use crate::geometry::{dist, sub, Domain, Point};
use crate::levy_models::LevyModel;
use crate::numerics::special::ball_volume;
use crate::numerics::stats::Moments;
use crate::path_sim::{PathConfig, PathEngine};
use crate::stable_core::{ball_green_unchecked, ball_mean_exit, check_alpha, BallExitSampler, GreenFunction};

/// A value with its standard error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
    pub method: String,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, Value>,
}

impl Estimate {
    pub fn new(value: f64, se: f64, n: usize, seed: u64, method: &str) -> Self {
        Self { value, se, n, seed, method: method.to_string(), diagnostics: BTreeMap::new() }
    }

    pub(crate) fn from_moments(m: &Moments, seed: u64, method: &str) -> Self {
        Self::new(m.mean, m.std_error(), m.n as usize, seed, method)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }

    /// Adds a warning flag; flagged estimates make runs inconclusive.
    pub fn flag(&mut self, reason: &str) {
        let entry = self.diagnostics.entry("flags".to_string()).or_insert_with(|| Value::Array(vec![]));
        if let Value::Array(v) = entry {
            v.push(Value::String(reason.to_string()));
        }
    }

    pub fn flags(&self) -> Vec<String> {
        match self.diagnostics.get("flags") {
            Some(Value::Array(v)) => v.iter().filter_map(|s| s.as_str().map(str::to_string)).collect(),
            _ => vec![],
        }
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags().is_empty()
    }

    /// `|a − b| ≤ k · sqrt(se_a² + se_b²)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.se.hypot(other.se)
    }
}

/// Sample count, seed and batch size of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

fn default_batch() -> usize {
    500
}

impl McConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, batch: default_batch() }
    }
}

/// Independent generator for batch `b`.
pub fn batch_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// Runs `cfg.n` independent samples, each writing `k` outputs, and returns
/// their moments merged in batch order.
pub fn mc_vector<F>(cfg: &McConfig, k: usize, sample: F) -> Result<Vec<Moments>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let parts = mc_batches(cfg, k, sample)?;
    Ok(merge_prefix(&parts, parts.len()))
}

/// Per-batch moments of [`mc_vector`], in batch order.
pub fn mc_batches<F>(cfg: &McConfig, k: usize, sample: F) -> Result<Vec<Vec<Moments>>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if cfg.n == 0 || cfg.batch == 0 {
        return Err(Error::invalid("n", "sample count must be positive"));
    }
    let batches = cfg.n.div_ceil(cfg.batch);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(cfg.seed, b);
            let count = cfg.batch.min(cfg.n - b * cfg.batch);
            let mut acc = vec![Moments::default(); k];
            let mut out = vec![0.0; k];
            for _ in 0..count {
                out.iter_mut().for_each(|v| *v = 0.0);
                sample(&mut rng, &mut out)?;
                for (a, v) in acc.iter_mut().zip(&out) {
                    a.push(*v);
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Merges the first `count` batches.
pub fn merge_prefix(parts: &[Vec<Moments>], count: usize) -> Vec<Moments> {
    let k = parts.first().map_or(0, Vec::len);
    let mut total = vec![Moments::default(); k];
    for part in &parts[..count.min(parts.len())] {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

/// Horizon after which an unexited path is flagged: 200 mean exit times of
/// the smallest enclosing ball.
pub fn default_horizon(domain: &Domain, alpha: f64) -> f64 {
    200.0 * domain.diam().powf(alpha)
}

/// Path scheme defaults for a domain.
pub fn default_path_config(domain: &Domain, alpha: f64) -> PathConfig {
    PathConfig::for_scale(domain.diam(), alpha)
}

fn require_inside(domain: &Domain, x: Point, name: &str) -> Result<()> {
    if !domain.contains(x) {
        return Err(Error::OutsideDomain(format!("{name} = {:?} is not in the domain", &x[..domain.dim()])));
    }
    Ok(())
}

fn flag_horizon(est: &mut Estimate, capped: &Moments) {
    let frac = capped.mean;
    *est = est.clone().with("horizon_capped_fraction", frac);
    if frac > 1e-3 {
        est.flag("horizon cap hit on more than 0.1% of paths");
    }
}

/// `E^x τ_D` from simulated exit times.
pub fn exit_time_mc(
    domain: &Domain,
    model: &LevyModel,
    x: Point,
    cfg: &McConfig,
    path: PathConfig,
    horizon: f64,
) -> Result<Estimate> {
    Ok(exit_time_mc_multi(domain, model, &[x], cfg, path, horizon)?.remove(0))
}

/// [`exit_time_mc`] at several starting points with one seed.
pub fn exit_time_mc_multi(
    domain: &Domain,
    model: &LevyModel,
    xs: &[Point],
    cfg: &McConfig,
    path: PathConfig,
    horizon: f64,
) -> Result<Vec<Estimate>> {
    for &x in xs {
        require_inside(domain, x, "x")?;
    }
    let engine = PathEngine::new(model, path)?;
    let k = xs.len();
    let m = mc_vector(cfg, 2 * k, |rng, out| {
        for (i, &x) in xs.iter().enumerate() {
            let o = engine.run(x, Some(domain), horizon, &[], rng, |_, _| {})?;
            out[i] = o.end_time;
            out[k + i] = f64::from(u8::from(!o.exited));
        }
        Ok(())
    })?;
    Ok((0..k)
        .map(|i| {
            let mut e = Estimate::from_moments(&m[i], cfg.seed, "path")
                .with("eps", path.eps)
                .with("dt", path.dt)
                .with("horizon", horizon);
            flag_horizon(&mut e, &m[k + i]);
            e
        })
        .collect())
}

/// Walk-on-spheres settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WosConfig {
    /// Inscribed ball radius as a fraction of `δ_D`.
    pub shrink: f64,
    /// Walks with `δ_D < shell · diam` are absorbed.
    pub shell: f64,
    pub max_steps: usize,
}

impl Default for WosConfig {
    fn default() -> Self {
        Self { shrink: 0.95, shell: 1e-4, max_steps: 1_000_000 }
    }
}

/// One walk from `x`: calls `visit(centre, radius)` for every inscribed
/// ball and returns the final position (outside `D`, or in the shell).
fn wos_walk<R: rand::Rng + ?Sized, F: FnMut(Point, f64)>(
    domain: &Domain,
    sampler: &BallExitSampler,
    x: Point,
    wos: &WosConfig,
    rng: &mut R,
    mut visit: F,
) -> Result<(Point, usize, bool)> {
    let shell = wos.shell * domain.diam();
    let mut pos = x;
    for step in 0..wos.max_steps {
        if !domain.contains(pos) {
            return Ok((pos, step, false));
        }
        let delta = domain.dist_to_boundary(pos);
        if delta < shell {
            return Ok((pos, step, true));
        }
        let radius = wos.shrink * delta;
        visit(pos, radius);
        pos = sampler.from_center(pos, radius, rng);
    }
    Err(Error::StepBudget(wos.max_steps))
}

/// Stable Green function `G̃_D(x, y)` for each `y` by walk on spheres: the
/// sum over visited balls of their closed-form Green functions.
pub fn green_wos_stable(
    domain: &Domain,
    alpha: f64,
    x: Point,
    ys: &[Point],
    cfg: &McConfig,
    wos: &WosConfig,
) -> Result<Vec<Estimate>> {
    check_alpha(alpha)?;
    let d = domain.dim();
    require_inside(domain, x, "x")?;
    for &y in ys {
        if dist(x, y) == 0.0 {
            return Err(Error::CoincidentPoints);
        }
    }
    let sampler = BallExitSampler::new(alpha, d)?;
    let k = ys.len();
    let m = mc_vector(cfg, k + 2, |rng, out| {
        let (_, steps, absorbed) = wos_walk(domain, &sampler, x, wos, rng, |c, r| {
            let gap_c = r * r;
            for (o, &y) in out.iter_mut().zip(ys) {
                let cy = dist(c, y);
                if cy < r && cy > 0.0 {
                    *o += ball_green_unchecked(cy, gap_c, (r - cy) * (r + cy), r, alpha, d);
                }
            }
        })?;
        out[k] = steps as f64;
        out[k + 1] = f64::from(u8::from(absorbed));
        Ok(())
    })?;
    Ok((0..k)
        .map(|i| {
            let mut e = Estimate::from_moments(&m[i], cfg.seed, "wos")
                .with("mean_steps", m[k].mean)
                .with("absorbed_fraction", m[k + 1].mean);
            if !domain.contains(ys[i]) {
                e.value = 0.0;
                e.se = 0.0;
            }
            e
        })
        .collect())
}

/// `E^x τ_D` for the stable process by walk on spheres: the sum of the
/// mean exit times of the visited balls.
pub fn exit_time_wos(domain: &Domain, alpha: f64, xs: &[Point], cfg: &McConfig, wos: &WosConfig) -> Result<Vec<Estimate>> {
    check_alpha(alpha)?;
    let d = domain.dim();
    let sampler = BallExitSampler::new(alpha, d)?;
    for &x in xs {
        require_inside(domain, x, "x")?;
    }
    let k = xs.len();
    let m = mc_vector(cfg, k, |rng, out| {
        for (o, &x) in out.iter_mut().zip(xs) {
            wos_walk(domain, &sampler, x, wos, rng, |_, r| {
                *o += ball_mean_exit(crate::geometry::ORIGIN, r, alpha, d).unwrap_or(0.0);
            })?;
        }
        Ok(())
    })?;
    Ok(m.iter().map(|mm| Estimate::from_moments(mm, cfg.seed, "wos")).collect())
}

/// Normalised Epanechnikov kernel of bandwidth `h` in dimension `d`.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    d: usize,
    h: f64,
    norm: f64,
}

impl Kernel {
    pub fn new(d: usize, h: f64) -> Self {
        let c = (d as f64 + 2.0) / (2.0 * ball_volume(d));
        Self { d, h, norm: c / h.powi(d as i32) }
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn eval(&self, u: Point) -> f64 {
        let q = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) / (self.h * self.h);
        if q < 1.0 {
            self.norm * (1.0 - q)
        } else {
            0.0
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// Bandwidth `diam · N^{−1/(d+4)}`.
pub fn default_bandwidth(domain: &Domain, n: usize) -> f64 {
    domain.diam() * (n as f64).powf(-1.0 / (domain.dim() as f64 + 4.0))
}

/// Occupation-density estimates of `G^Y_D(x, y)` for each `y`, at bandwidth
/// `h` and, as a bias diagnostic, `h/2`.
#[allow(clippy::too_many_arguments)]
pub fn green_mc(
    domain: &Domain,
    model: &LevyModel,
    x: Point,
    ys: &[Point],
    h: f64,
    cfg: &McConfig,
    path: PathConfig,
    horizon: f64,
) -> Result<Vec<Estimate>> {
    Ok(green_mc_nested(domain, model, x, ys, h, cfg, path, horizon, &[cfg.n])?.remove(0))
}

/// [`green_mc`] evaluated on nested prefixes of one run: entry `i` uses the
/// first `prefixes[i]` paths (rounded up to whole batches).
#[allow(clippy::too_many_arguments)]
pub fn green_mc_nested(
    domain: &Domain,
    model: &LevyModel,
    x: Point,
    ys: &[Point],
    h: f64,
    cfg: &McConfig,
    path: PathConfig,
    horizon: f64,
    prefixes: &[usize],
) -> Result<Vec<Vec<Estimate>>> {
    require_inside(domain, x, "x")?;
    if !(h > 0.0) {
        return Err(Error::invalid("bandwidth", "must be positive"));
    }
    for &y in ys {
        if dist(x, y) < 2.0 * h {
            return Err(Error::invalid("y", "points closer than twice the bandwidth to x are refused"));
        }
    }
    let engine = PathEngine::new(model, path)?;
    let full = Kernel::new(domain.dim(), h);
    let half = Kernel::new(domain.dim(), 0.5 * h);
    let inside: Vec<bool> = ys.iter().map(|&y| domain.contains(y)).collect();
    let k = ys.len();
    let parts = mc_batches(cfg, 2 * k + 1, |rng, out| {
        let mut prev: Option<(f64, Point)> = None;
        let o = engine.run(x, Some(domain), horizon, &[], rng, |t, p| {
            if let Some((t0, p0)) = prev {
                let dt = t - t0;
                for (i, &y) in ys.iter().enumerate() {
                    let u = sub(p0, y);
                    out[i] += dt * full.eval(u);
                    out[k + i] += dt * half.eval(u);
                }
            }
            prev = Some((t, p));
        })?;
        out[2 * k] = f64::from(u8::from(!o.exited));
        Ok(())
    })?;
    Ok(prefixes
        .iter()
        .map(|&n| {
            let m = merge_prefix(&parts, n.div_ceil(cfg.batch));
            (0..k)
                .map(|i| {
                    if !inside[i] {
                        return Estimate::new(0.0, 0.0, m[i].n as usize, cfg.seed, "occupation").with("bandwidth", h);
                    }
                    let half_est = &m[k + i];
                    let mut e = Estimate::from_moments(&m[i], cfg.seed, "occupation")
                        .with("bandwidth", h)
                        .with("half_bandwidth_value", half_est.mean)
                        .with("half_bandwidth_se", half_est.std_error());
                    let joint = e.se.hypot(half_est.std_error());
                    if (e.value - half_est.mean).abs() > 3.0 * joint {
                        e.flag("bandwidth sensitivity exceeds 3 standard errors");
                    }
                    flag_horizon(&mut e, &m[2 * k]);
                    e
                })
                .collect()
        })
        .collect())
}

/// Kernel estimate of the killed density `p_D(t, x, y)` for each `y`.
#[allow(clippy::too_many_arguments)]
pub fn killed_density_mc(
    domain: &Domain,
    model: &LevyModel,
    t: f64,
    x: Point,
    ys: &[Point],
    h: f64,
    cfg: &McConfig,
    path: PathConfig,
) -> Result<Vec<Estimate>> {
    require_inside(domain, x, "x")?;
    if !(t > 0.0) {
        return Err(Error::invalid("t", "time must be positive"));
    }
    let engine = PathEngine::new(model, path)?;
    let kernel = Kernel::new(domain.dim(), h);
    let k = ys.len();
    let m = mc_vector(cfg, k + 1, |rng, out| {
        let o = engine.run(x, Some(domain), t, &[t], rng, |_, _| {})?;
        if !o.exited {
            out[k] = 1.0;
            for (v, &y) in out.iter_mut().zip(ys) {
                *v = kernel.eval(sub(o.end_position, y));
            }
        }
        Ok(())
    })?;
    let survivors = (m[k].mean * m[k].n as f64).round() as usize;
    Ok((0..k)
        .map(|i| {
            let mut e = Estimate::from_moments(&m[i], cfg.seed, "killed-kde")
                .with("bandwidth", h)
                .with("survivors", survivors);
            if survivors < 100 {
                e.flag("fewer than 100 surviving paths");
            }
            e
        })
        .collect())
}

/// Quadrature value with an error estimate from a tolerance-tightened rerun.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

/// Ikeda–Watanabe formula `P_D(x, z) = ∫_D G_D(x, y) ν^Y(y − z) dy` with a
/// supplied Green function.
pub fn poisson_kernel_iw<G: GreenFunction>(
    domain: &Domain,
    model: &LevyModel,
    x: Point,
    z: Point,
    green: &G,
    tol: f64,
) -> Result<QuadValue> {
    require_inside(domain, x, "x")?;
    if domain.contains(z) || domain.dist_to_boundary(z) == 0.0 {
        return Err(Error::invalid("z", "must lie outside the closure of the domain"));
    }
    let f = |y: Point| {
        if dist(y, x) == 0.0 {
            return 0.0;
        }
        green.green(x, y) * model.levy_radial(dist(y, z))
    };
    let coarse = integrate_over_domain(domain, x, &[x], tol * 10.0, f)?;
    let fine = integrate_over_domain(domain, x, &[x], tol, f)?;
    let error = (fine - coarse).abs();
    let gap = domain.dist_to_boundary(z);
    if error > 1e-2 * fine.abs() {
        return Err(Error::Quadrature { error, target: tol * fine.abs() }).map_err(|e| {
            if gap < 1e-3 * domain.diam() {
                Error::invalid("z", format!("too close to the boundary ({gap:e}); {e}"))
            } else {
                e
            }
        });
    }
    Ok(QuadValue { value: fine, error })
}

/// Poisson kernel by the occupation form of the Ikeda–Watanabe formula:
/// `P_D(x, z) = E^x ∫_0^{τ_D} ν^Y(Y_t − z) dt`.
pub fn poisson_kernel_mc(
    domain: &Domain,
    model: &LevyModel,
    x: Point,
    zs: &[Point],
    cfg: &McConfig,
    path: PathConfig,
    horizon: f64,
) -> Result<Vec<Estimate>> {
    require_inside(domain, x, "x")?;
    for &z in zs {
        if domain.contains(z) {
            return Err(Error::invalid("z", "must lie outside the domain"));
        }
    }
    let engine = PathEngine::new(model, path)?;
    let k = zs.len();
    let m = mc_vector(cfg, k + 1, |rng, out| {
        let mut prev: Option<(f64, Point)> = None;
        let o = engine.run(x, Some(domain), horizon, &[], rng, |t, p| {
            if let Some((t0, p0)) = prev {
                for (v, &z) in out.iter_mut().zip(zs) {
                    *v += (t - t0) * model.levy_radial(dist(p0, z));
                }
            }
            prev = Some((t, p));
        })?;
        out[k] = f64::from(u8::from(!o.exited));
        Ok(())
    })?;
    Ok((0..k)
        .map(|i| {
            let mut e = Estimate::from_moments(&m[i], cfg.seed, "occupation-iw");
            flag_horizon(&mut e, &m[k]);
            e
        })
        .collect())
}

/// How exit positions are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitMethod {
    /// Exact ball exits (stable models only).
    Wos,
    Path,
}

/// `E^x u(Y_{τ_D})` for boundary data `u` on the complement.
#[allow(clippy::too_many_arguments)]
pub fn harmonic_eval<U: Fn(Point) -> f64 + Sync>(
    domain: &Domain,
    model: &LevyModel,
    boundary_data: U,
    xs: &[Point],
    cfg: &McConfig,
    method: ExitMethod,
    path: PathConfig,
    horizon: f64,
) -> Result<Vec<Estimate>> {
    for &x in xs {
        require_inside(domain, x, "x")?;
    }
    let k = xs.len();
    match method {
        ExitMethod::Wos => {
            if !model.is_stable() {
                return Err(Error::invalid("method", "walk on spheres needs a stable model"));
            }
            let sampler = BallExitSampler::new(model.alpha(), model.dim())?;
            let wos = WosConfig::default();
            let m = mc_vector(cfg, k, |rng, out| {
                for (o, &x) in out.iter_mut().zip(xs) {
                    let (end, _, _) = wos_walk(domain, &sampler, x, &wos, rng, |_, _| {})?;
                    *o = boundary_data(end);
                }
                Ok(())
            })?;
            Ok(m.iter().map(|mm| Estimate::from_moments(mm, cfg.seed, "wos")).collect())
        }
        ExitMethod::Path => {
            let engine = PathEngine::new(model, path)?;
            let m = mc_vector(cfg, 2 * k, |rng, out| {
                for (i, &x) in xs.iter().enumerate() {
                    let o = engine.run(x, Some(domain), horizon, &[], rng, |_, _| {})?;
                    if o.exited {
                        out[i] = boundary_data(o.exit_position);
                    } else {
                        out[k + i] = 1.0;
                    }
                }
                Ok(())
            })?;
            Ok((0..k)
                .map(|i| {
                    let mut e = Estimate::from_moments(&m[i], cfg.seed, "path");
                    flag_horizon(&mut e, &m[k + i]);
                    e
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point, ORIGIN};
    use crate::stable_core::{ball_green, ball_poisson_kernel, BallGreen};

    #[test]
    fn batches_are_worker_independent() {
        let cfg = McConfig { n: 2_000, seed: 9, batch: 100 };
        let f = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
            out[0] = rand::Rng::random::<f64>(rng);
            Ok(())
        };
        let a = mc_vector(&cfg, 1, f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_vector(&cfg, 1, f).unwrap());
        assert_eq!(a[0].mean.to_bits(), b[0].mean.to_bits());
        assert_eq!(a[0].m2.to_bits(), b[0].m2.to_bits());
    }

    #[test]
    fn estimate_json_shape() {
        let mut e = Estimate::new(1.0, 0.1, 10, 3, "wos").with("mean_steps", 4.0);
        e.flag("test");
        let v: Value = serde_json::to_value(&e).unwrap();
        for key in ["value", "se", "n", "seed", "method", "diagnostics"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(e.is_flagged());
    }

    #[test]
    fn wos_green_matches_ball_closed_form() {
        let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let x = point(&[0.2, 0.0]);
        let ys = [point(&[-0.3, 0.1]), point(&[0.5, 0.5]), point(&[0.0, -0.6])];
        let est = green_wos_stable(&dom, 1.5, x, &ys, &McConfig::new(20_000, 1), &WosConfig::default()).unwrap();
        for (e, &y) in est.iter().zip(&ys) {
            let exact = ball_green(x, y, 1.0, 1.5, 2).unwrap();
            assert!((e.value - exact).abs() < 3.5 * e.se, "{} vs {exact} (se {})", e.value, e.se);
        }
    }

    #[test]
    fn wos_exit_time_matches_closed_form() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let xs = [ORIGIN, point(&[0.7])];
        let est = exit_time_wos(&dom, 1.2, &xs, &McConfig::new(20_000, 2), &WosConfig::default()).unwrap();
        for (e, &x) in est.iter().zip(&xs) {
            let exact = ball_mean_exit(x, 1.0, 1.2, 1).unwrap();
            assert!((e.value - exact).abs() < 3.5 * e.se + 1e-3 * exact);
        }
    }

    #[test]
    fn path_exit_time_matches_closed_form() {
        let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let model = LevyModel::stable(2, 1.5).unwrap();
        let path = default_path_config(&dom, 1.5);
        let e = exit_time_mc(&dom, &model, ORIGIN, &McConfig::new(4_000, 3), path, default_horizon(&dom, 1.5)).unwrap();
        let exact = ball_mean_exit(ORIGIN, 1.0, 1.5, 2).unwrap();
        assert!((e.value - exact).abs() < 3.0 * e.se + 0.01 * exact, "{} vs {exact}", e.value);
        assert!(!e.is_flagged());
    }

    #[test]
    fn green_mc_outside_is_zero_and_near_diagonal_refused() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let model = LevyModel::stable(1, 1.2).unwrap();
        let path = default_path_config(&dom, 1.2);
        let e = green_mc(&dom, &model, ORIGIN, &[point(&[1.5])], 0.05, &McConfig::new(100, 1), path, 100.0).unwrap();
        assert_eq!(e[0].value, 0.0);
        assert!(green_mc(&dom, &model, ORIGIN, &[point(&[0.05])], 0.05, &McConfig::new(100, 1), path, 100.0).is_err());
    }

    #[test]
    fn green_mc_matches_interval_closed_form() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let model = LevyModel::stable(1, 1.2).unwrap();
        let path = default_path_config(&dom, 1.2);
        let ys = [point(&[0.4]), point(&[-0.5])];
        let est = green_mc(&dom, &model, ORIGIN, &ys, 0.05, &McConfig::new(4_000, 4), path, 100.0).unwrap();
        for (e, &y) in est.iter().zip(&ys) {
            let exact = ball_green(ORIGIN, y, 1.0, 1.2, 1).unwrap();
            assert!((e.value - exact).abs() < (3.0 * e.se).max(0.05 * exact), "{} vs {exact}", e.value);
        }
    }

    #[test]
    fn iw_poisson_kernel_matches_closed_form() {
        let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let model = LevyModel::stable(2, 1.5).unwrap();
        let green = BallGreen::new(&dom, 1.5).unwrap();
        let x = point(&[0.3, 0.1]);
        let z = point(&[1.5, 0.0]);
        let q = poisson_kernel_iw(&dom, &model, x, z, &green, 1e-7).unwrap();
        let exact = ball_poisson_kernel(x, z, 1.0, 1.5, 2).unwrap();
        assert!((q.value / exact - 1.0).abs() < 0.03, "{} vs {exact}", q.value);
    }

    #[test]
    fn harmonic_constant_and_half_space() {
        let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let model = LevyModel::stable(2, 1.5).unwrap();
        let cfg = McConfig::new(20_000, 5);
        let path = default_path_config(&dom, 1.5);
        let one = harmonic_eval(&dom, &model, |_| 1.0, &[ORIGIN], &cfg, ExitMethod::Wos, path, 100.0).unwrap();
        assert_eq!(one[0].value, 1.0);
        let half = harmonic_eval(&dom, &model, |z| f64::from(u8::from(z[0] > 0.0)), &[ORIGIN], &cfg, ExitMethod::Wos, path, 100.0)
            .unwrap();
        assert!((half[0].value - 0.5).abs() < 3.0 * half[0].se);
    }

    #[test]
    fn killed_density_decays() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let model = LevyModel::stable(1, 1.5).unwrap();
        let path = default_path_config(&dom, 1.5);
        let cfg = McConfig::new(4_000, 6);
        let vals: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&t| killed_density_mc(&dom, &model, t, ORIGIN, &[ORIGIN], 0.1, &cfg, path).unwrap()[0].value)
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }
}
