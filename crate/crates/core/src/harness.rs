//! Comparison experiments between a perturbed model and the stable process.
//!
//! Every experiment returns empirical bands with confidence intervals; none
//! of them reports a comparability constant as ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::function::beta::ln_beta;

use crate::domain_quad::integrate_over_domain;
use crate::error::{Error, Result};
use crate::estimators::{
    default_horizon, default_path_config, exit_time_mc, exit_time_mc_multi, exit_time_wos, green_mc_nested,
    green_wos_stable, mc_vector, poisson_kernel_iw, poisson_kernel_mc, Estimate, Kernel, McConfig, WosConfig,
};
use crate::geometry::{add, dist, point, random_direction, scale, sub, Domain, Point};
use crate::levy_models::LevyModel;
use crate::numerics::interp::UniformTable;
use crate::numerics::quad::{breakpoints, tanh_sinh, tanh_sinh_breaks};
use crate::numerics::special::sphere_area;
use crate::numerics::stats::linear_fit;
use crate::path_sim::{PathConfig, PathEngine};
use crate::stable_core::{ball_mean_exit, BallExitSampler, BallGreen, GreenFunction};

/// Outcome of a comparability experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Violated,
    Inconclusive,
}

impl Verdict {
    /// Process exit status: 0 bounded, 2 inconclusive, 3 violated.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Bounded => 0,
            Verdict::Inconclusive => 2,
            Verdict::Violated => 3,
        }
    }

    /// Worst of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }

    fn rank(self) -> u8 {
        match self {
            Verdict::Bounded => 0,
            Verdict::Inconclusive => 1,
            Verdict::Violated => 2,
        }
    }

    fn max(self, other: Verdict) -> Verdict {
        if other.rank() > self.rank() {
            other
        } else {
            self
        }
    }
}

/// Normal quantile of the two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// One grid entry of a ratio experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub numerator: f64,
    pub numerator_se: f64,
    pub denominator: f64,
    pub denominator_se: f64,
    pub ratio: f64,
    pub se: f64,
    pub ci: (f64, f64),
    #[serde(default)]
    pub flags: Vec<String>,
}

impl RatioRow {
    /// Ratio of two independent estimates with a delta-method standard error.
    pub fn new(x: Point, y: Option<Point>, d: usize, num: &Estimate, den: &Estimate) -> Self {
        let ratio = num.value / den.value;
        let rel = (num.se / num.value).hypot(den.se / den.value);
        let se = (ratio * rel).abs();
        let mut flags = num.flags();
        flags.extend(den.flags());
        Self {
            x: x[..d].to_vec(),
            y: y.map(|p| p[..d].to_vec()),
            numerator: num.value,
            numerator_se: num.se,
            denominator: den.value,
            denominator_se: den.se,
            ratio,
            se,
            ci: (ratio - Z95 * se, ratio + Z95 * se),
            flags,
        }
    }
}

/// Band behaviour under doubling of the sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub n_small: usize,
    pub n_large: usize,
    pub band_small: f64,
    pub band_large: f64,
    /// `band_large / band_small − 1`.
    pub expansion: f64,
}

impl Stability {
    pub fn new(n_small: usize, n_large: usize, small: &[RatioRow], large: &[RatioRow]) -> Self {
        let band_small = band_of(small);
        let band_large = band_of(large);
        Self { n_small, n_large, band_small, band_large, expansion: band_large / band_small - 1.0 }
    }
}

/// Largest admissible band expansion under sample doubling.
pub const MAX_EXPANSION: f64 = 0.10;

fn band_of(rows: &[RatioRow]) -> f64 {
    let (lo, hi) = min_max(rows.iter().map(|r| r.ratio));
    hi / lo
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Ratios over a grid with min/max bands and a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub experiment: String,
    pub rows: Vec<RatioRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Bootstrap 95% interval of the grid minimum.
    pub min_band: (f64, f64),
    /// Bootstrap 95% interval of the grid maximum.
    pub max_band: (f64, f64),
    /// `max_ratio / min_ratio`.
    pub band: f64,
    pub stability: Option<Stability>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub config: Value,
}

impl RatioReport {
    /// Summarises rows; `seed` drives the parametric bootstrap of the bands.
    pub fn assemble(experiment: &str, rows: Vec<RatioRow>, stability: Option<Stability>, config: Value, seed: u64) -> Self {
        let (min_ratio, max_ratio) = min_max(rows.iter().map(|r| r.ratio));
        let (min_band, max_band) = bootstrap_extremes(&rows, seed, 1000);
        let mut notes = Vec::new();
        let mut verdict = Verdict::Bounded;
        if rows.is_empty() {
            notes.push("empty grid".into());
            verdict = Verdict::Inconclusive;
        }
        for r in &rows {
            if !r.ratio.is_finite() || !r.se.is_finite() {
                notes.push(format!("non-finite ratio at x={:?}", r.x));
                verdict = verdict.max(Verdict::Inconclusive);
            } else if r.ci.1 <= 0.0 {
                notes.push(format!("interval excludes positive ratios at x={:?} y={:?}", r.x, r.y));
                verdict = verdict.max(Verdict::Violated);
            } else if r.ci.0 <= 0.0 {
                notes.push(format!("interval reaches zero at x={:?} y={:?}", r.x, r.y));
                verdict = verdict.max(Verdict::Inconclusive);
            }
            for f in &r.flags {
                notes.push(format!("flag at x={:?} y={:?}: {f}", r.x, r.y));
                verdict = verdict.max(Verdict::Inconclusive);
            }
        }
        if let Some(s) = &stability {
            if !(s.expansion < MAX_EXPANSION) {
                notes.push(format!("band expanded by {:.1}% under sample doubling", 100.0 * s.expansion));
                verdict = verdict.max(Verdict::Inconclusive);
            }
        }
        Self {
            experiment: experiment.to_string(),
            rows,
            min_ratio,
            max_ratio,
            min_band,
            max_band,
            band: max_ratio / min_ratio,
            stability,
            verdict,
            notes,
            config,
        }
    }
}

/// Percentile intervals of the grid min and max when each ratio is redrawn
/// from its normal approximation.
fn bootstrap_extremes(rows: &[RatioRow], seed: u64, reps: usize) -> ((f64, f64), (f64, f64)) {
    if rows.is_empty() {
        return ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b007);
    let mut mins = Vec::with_capacity(reps);
    let mut maxs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let (lo, hi) = min_max(rows.iter().map(|r| {
            let z: f64 = StandardNormal.sample(&mut rng);
            r.ratio + r.se * z
        }));
        mins.push(lo);
        maxs.push(hi);
    }
    let pct = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[(0.025 * reps as f64) as usize], v[((0.975 * reps as f64) as usize).min(reps - 1)])
    };
    (pct(&mut mins), pct(&mut maxs))
}

/// `i`-th element of the van der Corput sequence in `base`.
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic well-spread points of `D` with `δ_D ≥ margin`, from a
/// Halton sequence started at `offset`.
pub fn spread_points(domain: &Domain, count: usize, margin: f64, offset: usize) -> Vec<Point> {
    let (lo, hi) = domain.bounding_box();
    let d = domain.dim();
    let mut out = Vec::with_capacity(count);
    let mut i = offset + 1;
    while out.len() < count && i < offset + 100_000 {
        let mut p = lo;
        for (k, base) in [2usize, 3, 5].iter().enumerate().take(d) {
            p[k] = lo[k] + (hi[k] - lo[k]) * radical_inverse(i, *base);
        }
        if domain.contains(p) && domain.dist_to_boundary(p) >= margin {
            out.push(p);
        }
        i += 1;
    }
    out
}

/// Source points with their target points for Green comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGrid {
    pub sources: Vec<(Point, Vec<Point>)>,
}

impl PairGrid {
    /// `n_x` sources with `n_y` targets each, pairwise separated by at least
    /// `min_sep` and kept `margin` away from the boundary.
    pub fn spread(domain: &Domain, n_x: usize, n_y: usize, min_sep: f64, margin: f64) -> Self {
        let xs = spread_points(domain, n_x, margin, 0);
        let pool = spread_points(domain, 64 * n_y, margin, 1000);
        let sources = xs
            .into_iter()
            .map(|x| {
                let ys: Vec<Point> = pool.iter().copied().filter(|&y| dist(x, y) >= min_sep).take(n_y).collect();
                (x, ys)
            })
            .collect();
        Self { sources }
    }

    pub fn len(&self) -> usize {
        self.sources.iter().map(|(_, ys)| ys.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stable Green values `G̃_D(x, ·)`: closed form on balls, walk on spheres
/// elsewhere.
pub fn stable_green_values(domain: &Domain, alpha: f64, x: Point, ys: &[Point], cfg: &McConfig) -> Result<Vec<Estimate>> {
    if domain.as_ball().is_some() {
        let g = BallGreen::new(domain, alpha)?;
        Ok(ys.iter().map(|&y| Estimate::new(g.green(x, y), 0.0, 0, 0, "closed-form")).collect())
    } else {
        green_wos_stable(domain, alpha, x, ys, cfg, &WosConfig::default())
    }
}

/// Stable exit moments: closed form on balls, walk on spheres elsewhere.
pub fn stable_exit_values(domain: &Domain, alpha: f64, xs: &[Point], cfg: &McConfig) -> Result<Vec<Estimate>> {
    if let Some((c, r)) = domain.as_ball() {
        xs.iter()
            .map(|&x| Ok(Estimate::new(ball_mean_exit(sub(x, c), r, alpha, domain.dim())?, 0.0, 0, 0, "closed-form")))
            .collect()
    } else {
        exit_time_wos(domain, alpha, xs, cfg, &WosConfig::default())
    }
}

/// Settings shared by the Monte Carlo comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Paths per source point (the smaller run when doubling).
    pub n: usize,
    pub seed: u64,
    /// Kernel bandwidth; defaults to `diam/40`.
    pub bandwidth: Option<f64>,
    /// Also run `2n` paths and report band stability.
    pub doubling: bool,
    pub path: Option<PathConfig>,
    pub horizon: Option<f64>,
}

impl CompareOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, bandwidth: None, doubling: true, path: None, horizon: None }
    }

    pub fn bandwidth_for(&self, domain: &Domain) -> f64 {
        self.bandwidth.unwrap_or(domain.diam() / 40.0)
    }

    fn path_for(&self, domain: &Domain, alpha: f64) -> PathConfig {
        self.path.unwrap_or_else(|| default_path_config(domain, alpha))
    }

    fn horizon_for(&self, domain: &Domain, alpha: f64) -> f64 {
        self.horizon.unwrap_or_else(|| default_horizon(domain, alpha))
    }
}

/// Green-function ratios `G^Y_D / G̃_D` over a pair grid.
pub fn compare_green(domain: &Domain, model: &LevyModel, grid: &PairGrid, opts: &CompareOptions) -> Result<RatioReport> {
    let d = domain.dim();
    let alpha = model.alpha();
    let h = opts.bandwidth_for(domain);
    for (x, ys) in &grid.sources {
        for y in ys {
            if dist(*x, *y) < 4.0 * h {
                return Err(Error::invalid("grid", "pairs must be at least four bandwidths apart"));
            }
        }
    }
    let n_large = if opts.doubling { 2 * opts.n } else { opts.n };
    let path = opts.path_for(domain, alpha);
    let horizon = opts.horizon_for(domain, alpha);
    let mut small = Vec::new();
    let mut large = Vec::new();
    for (i, (x, ys)) in grid.sources.iter().enumerate() {
        let cfg = McConfig::new(n_large, opts.seed.wrapping_add(i as u64));
        let prefixes = if opts.doubling { vec![opts.n, n_large] } else { vec![n_large] };
        let est = green_mc_nested(domain, model, *x, ys, h, &cfg, path, horizon, &prefixes)?;
        let tilde = stable_green_values(domain, alpha, *x, ys, &McConfig::new(n_large, cfg.seed ^ 0xa5a5))?;
        for (j, y) in ys.iter().enumerate() {
            large.push(RatioRow::new(*x, Some(*y), d, &est[est.len() - 1][j], &tilde[j]));
            if opts.doubling {
                small.push(RatioRow::new(*x, Some(*y), d, &est[0][j], &tilde[j]));
            }
        }
    }
    let stability = opts.doubling.then(|| Stability::new(opts.n, n_large, &small, &large));
    let config = json!({
        "domain": domain.spec(),
        "model": model.spec(),
        "n": opts.n,
        "doubling": opts.doubling,
        "seed": opts.seed,
        "bandwidth": h,
        "eps": path.eps,
        "dt": path.dt,
        "pairs": grid.len(),
    });
    Ok(RatioReport::assemble("green", large, stability, config, opts.seed))
}

/// Exit-moment ratios `E^x τ^Y_D / E^x τ̃_D`.
pub fn compare_moments(domain: &Domain, model: &LevyModel, xs: &[Point], opts: &CompareOptions) -> Result<RatioReport> {
    let d = domain.dim();
    let alpha = model.alpha();
    let path = opts.path_for(domain, alpha);
    let horizon = opts.horizon_for(domain, alpha);
    let run = |n: usize| -> Result<Vec<RatioRow>> {
        let cfg = McConfig::new(n, opts.seed);
        let y = exit_time_mc_multi(domain, model, xs, &cfg, path, horizon)?;
        let tilde = stable_exit_values(domain, alpha, xs, &McConfig::new(n, opts.seed ^ 0xa5a5))?;
        Ok(xs.iter().enumerate().map(|(i, &x)| RatioRow::new(x, None, d, &y[i], &tilde[i])).collect())
    };
    let (rows, stability) = if opts.doubling {
        let small = run(opts.n)?;
        let large = run(2 * opts.n)?;
        let s = Stability::new(opts.n, 2 * opts.n, &small, &large);
        (large, Some(s))
    } else {
        (run(opts.n)?, None)
    };
    let config = json!({
        "domain": domain.spec(),
        "model": model.spec(),
        "n": opts.n,
        "seed": opts.seed,
        "eps": path.eps,
        "dt": path.dt,
    });
    Ok(RatioReport::assemble("moments", rows, stability, config, opts.seed))
}

/// Coarse `∫_D G_D(x, y) dy` against the mean exit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub integral: Estimate,
    pub exit_time: Estimate,
    pub cells: usize,
    pub bandwidth: f64,
    pub relative_gap: f64,
    pub passed: bool,
}

/// Relative tolerance of the occupation identity.
pub const OCCUPATION_TOLERANCE: f64 = 0.05;

struct Cell {
    centre: Point,
    volume: f64,
    near: bool,
}

fn lattice_cells(domain: &Domain, target: usize, x: Point) -> (Vec<Cell>, f64, f64) {
    let d = domain.dim();
    let s = (domain.volume() / target as f64).powf(1.0 / d as f64);
    let h = 0.5 * s;
    let (lo, hi) = domain.bounding_box();
    let counts: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / s).ceil() as usize).collect();
    let sub_n = 8usize;
    let mut cells = Vec::new();
    let total: usize = counts.iter().product();
    for idx in 0..total {
        let mut rem = idx;
        let mut corner = lo;
        for k in 0..d {
            corner[k] = lo[k] + (rem % counts[k]) as f64 * s;
            rem /= counts[k];
        }
        let subs = sub_n.pow(d as u32);
        let mut inside = 0usize;
        let mut centroid = [0.0; 3];
        for j in 0..subs {
            let mut rem = j;
            let mut p = corner;
            for k in 0..d {
                p[k] += ((rem % sub_n) as f64 + 0.5) * s / sub_n as f64;
                rem /= sub_n;
            }
            if domain.contains(p) {
                inside += 1;
                for k in 0..d {
                    centroid[k] += p[k];
                }
            }
        }
        if inside == 0 {
            continue;
        }
        let mut centre = corner;
        for k in 0..d {
            centre[k] += 0.5 * s;
        }
        if !domain.contains(centre) {
            for k in 0..d {
                centre[k] = centroid[k] / inside as f64;
            }
        }
        let volume = s.powi(d as i32) * inside as f64 / subs as f64;
        let near = dist(centre, x) < 2.0 * h;
        cells.push(Cell { centre, volume, near });
    }
    (cells, s, h)
}

/// Occupation identity `∫_D G_D(x, y) dy = E^x τ_D` on a coarse lattice of
/// about `cells` points. Kernel Green estimates are used away from `x`;
/// cells within two bandwidths of `x` contribute their occupation time.
pub fn occupation_identity(
    domain: &Domain,
    model: &LevyModel,
    x: Point,
    cells: usize,
    cfg: &McConfig,
    path: PathConfig,
) -> Result<OccupationReport> {
    let (lattice, s, h) = lattice_cells(domain, cells, x);
    let kernel = Kernel::new(domain.dim(), h);
    let far: Vec<&Cell> = lattice.iter().filter(|c| !c.near).collect();
    let near: Vec<&Cell> = lattice.iter().filter(|c| c.near).collect();
    let (lo, _) = domain.bounding_box();
    let d = domain.dim();
    let in_near = |p: Point| {
        near.iter().any(|c| (0..d).all(|k| (p[k] - c.centre[k]).abs() <= 0.5 * s))
            && domain.contains(p)
            && (0..d).all(|k| p[k] >= lo[k])
    };
    let engine = PathEngine::new(model, path)?;
    let horizon = default_horizon(domain, model.alpha());
    let m = mc_vector(cfg, 2, |rng, out| {
        let mut prev: Option<(f64, Point)> = None;
        engine.run(x, Some(domain), horizon, &[], rng, |t, p| {
            if let Some((t0, p0)) = prev {
                let dt = t - t0;
                if in_near(p0) {
                    out[1] += dt;
                }
                out[0] += dt * far.iter().map(|c| c.volume * kernel.eval(sub(p0, c.centre))).sum::<f64>();
            }
            prev = Some((t, p));
        })?;
        out[0] += out[1];
        Ok(())
    })?;
    let integral = Estimate::new(m[0].mean, m[0].std_error(), m[0].n as usize, cfg.seed, "coarse-lattice")
        .with("near_occupation", m[1].mean);
    let exit = exit_time_mc(domain, model, x, &McConfig::new(cfg.n, cfg.seed.wrapping_add(1)), path, horizon)?;
    let relative_gap = (integral.value - exit.value).abs() / exit.value;
    Ok(OccupationReport {
        integral,
        exit_time: exit,
        cells: lattice.len(),
        bandwidth: h,
        relative_gap,
        passed: relative_gap < OCCUPATION_TOLERANCE,
    })
}

/// `[H f](x) = ∫_D ∫_D G(x, w) σ(|w − z|) f(z) dz dw` by nested quadrature.
///
/// `singular` lists the points where `f` blows up.
pub fn h_sigma_apply<G, S, F>(
    domain: &Domain,
    green: &G,
    sigma: S,
    f: F,
    x: Point,
    singular: &[Point],
    tol: f64,
) -> Result<f64>
where
    G: GreenFunction,
    S: Fn(f64) -> f64,
    F: Fn(Point) -> f64,
{
    let diam = domain.diam();
    // skip the inner integral when σ vanishes on the whole range of |w − z|
    let probe = (1..=64).any(|i| sigma(diam * i as f64 / 64.0) != 0.0);
    if !probe {
        return Ok(0.0);
    }
    let inner = |w: Point| -> f64 {
        let mut pts = vec![w];
        pts.extend_from_slice(singular);
        integrate_over_domain(domain, w, &pts, tol, |z| {
            let r = dist(w, z);
            if r == 0.0 {
                return 0.0;
            }
            let s = sigma(r);
            if s == 0.0 {
                0.0
            } else {
                s * f(z)
            }
        })
        .unwrap_or(f64::NAN)
    };
    let mut pts = vec![x];
    pts.extend_from_slice(singular);
    let v = integrate_over_domain(domain, x, &pts, tol, |w| {
        if dist(w, x) == 0.0 {
            return 0.0;
        }
        green.green(x, w) * inner(w)
    })?;
    if !v.is_finite() {
        return Err(Error::Quadrature { error: f64::INFINITY, target: tol });
    }
    Ok(v)
}

/// `R̃_D(x, y) = ∫∫ G̃_D(x, w) σ(w − z) G̃_D(z, y) dz dw` with signed σ.
pub fn r_tilde<G: GreenFunction>(domain: &Domain, green: &G, model: &LevyModel, x: Point, y: Point, tol: f64) -> Result<f64> {
    let sigma = SigmaLookup::new(model, domain.diam());
    h_sigma_apply(domain, green, |r| sigma.eval(r), |z| green.green(z, y), x, &[y], tol)
}

/// Radial `σ` for repeated quadrature: a log-log table on `(0, diam]` when
/// `σ` is smooth and of one sign there, direct evaluation otherwise.
struct SigmaLookup<'a> {
    model: &'a LevyModel,
    table: Option<(UniformTable, f64)>,
    diam: f64,
}

impl<'a> SigmaLookup<'a> {
    fn new(model: &'a LevyModel, diam: f64) -> Self {
        Self { model, table: Self::tabulate(model, diam), diam }
    }

    fn tabulate(model: &LevyModel, diam: f64) -> Option<(UniformTable, f64)> {
        let (a, b) = ((1e-9 * diam).ln(), diam.ln());
        let n = 801;
        let step = (b - a) / (n - 1) as f64;
        let raw: Vec<f64> = (0..n).map(|i| model.sigma_radial((a + i as f64 * step).exp())).collect();
        let sign = raw[0].signum();
        if sign == 0.0 || raw.iter().any(|v| !v.is_finite() || v.signum() != sign) {
            return None;
        }
        let table = UniformTable::new(a, step, raw.iter().map(|v| v.abs().ln()).collect());
        for i in (0..n - 1).step_by(23) {
            let u = a + (i as f64 + 0.5) * step;
            let exact = model.sigma_radial(u.exp());
            let approx = sign * table.eval(u).exp();
            if !((approx - exact).abs() <= 1e-6 * exact.abs()) {
                return None;
            }
        }
        Some((table, sign))
    }

    fn eval(&self, r: f64) -> f64 {
        match &self.table {
            Some((table, sign)) if r <= self.diam => {
                let u = r.ln();
                let v = table.values();
                let logv = if u < table.x0() {
                    v[0] + (v[1] - v[0]) / table.step() * (u - table.x0())
                } else {
                    table.eval(u)
                };
                sign * logv.exp()
            }
            _ => self.model.sigma_radial(r),
        }
    }
}

/// Contraction factor of `H^{|σ|}_D` on the Green kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub diameter: f64,
    /// `(x, y, [H G̃(·,y)](x), G̃(x,y), ratio)` per grid pair.
    pub rows: Vec<(Vec<f64>, Vec<f64>, f64, f64, f64)>,
    /// Largest grid ratio.
    pub theta: f64,
    pub passed: bool,
}

/// Contraction threshold of the iteration.
pub const CONTRACTION_LIMIT: f64 = 0.5;

/// `θ = max [H^{|σ|} G̃(·, y)](x) / G̃(x, y)` over a grid of a ball domain.
pub fn contraction_theta(domain: &Domain, model: &LevyModel, pairs: usize, tol: f64) -> Result<ContractionReport> {
    let d = domain.dim();
    let green = BallGreen::new(domain, model.alpha())?;
    let diam = domain.diam();
    let grid = PairGrid::spread(domain, pairs.div_ceil(2).max(1), 2, 0.1 * diam, 0.1 * diam);
    let sigma = SigmaLookup::new(model, diam);
    let mut rows = Vec::new();
    for (x, ys) in &grid.sources {
        for &y in ys.iter() {
            let h = h_sigma_apply(domain, &green, |r| sigma.eval(r).abs(), |z| green.green(z, y), *x, &[y], tol)?;
            let g = green.green(*x, y);
            rows.push((x[..d].to_vec(), y[..d].to_vec(), h, g, h / g));
        }
    }
    let theta = rows.iter().map(|r| r.4).fold(0.0, f64::max);
    Ok(ContractionReport { diameter: diam, rows, theta, passed: theta < CONTRACTION_LIMIT })
}

/// Monte Carlo `[H^{|σ|} G̃(·, y)](x)` at several pairs of a ball: `w` is
/// uniform in `D` and `z − w` has radial density `∝ r^{ϱ−1}` on `(0, diam]`,
/// which cancels the singularity of `σ` at the origin.
pub fn h_sigma_mc(domain: &Domain, model: &LevyModel, pairs: &[(Point, Point)], cfg: &McConfig) -> Result<Vec<Estimate>> {
    let d = domain.dim();
    let green = BallGreen::new(domain, model.alpha())?;
    let diam = domain.diam();
    let sigma = SigmaLookup::new(model, diam);
    let rho = model.envelope().rho;
    if !(rho > 0.0) {
        return Err(Error::invalid("sigma.rho", "importance sampling needs a positive envelope exponent"));
    }
    let scale_w = domain.volume() * sphere_area(d) * diam.powf(rho) / rho;
    let m = mc_vector(cfg, pairs.len(), |rng, out| {
        let w = domain.sample_uniform(rng);
        let u: f64 = rng.random();
        let r = diam * u.powf(1.0 / rho);
        let z = add(w, scale(random_direction(d, rng), r));
        if !domain.contains(z) {
            return Ok(());
        }
        let weight = scale_w * sigma.eval(r).abs() * r.powf(d as f64 - rho);
        for (o, (x, y)) in out.iter_mut().zip(pairs) {
            *o = weight * green.green(*x, w) * green.green(z, *y);
        }
        Ok(())
    })?;
    Ok(m.iter().map(|mm| Estimate::from_moments(mm, cfg.seed, "h-sigma-mc")).collect())
}

/// Contraction factor of one ball in a diameter scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub diameter: f64,
    pub theta: f64,
    pub se: f64,
    pub passed: bool,
}

/// Monte Carlo contraction factor on centred balls of the given diameters,
/// on the same pair layout as [`contraction_theta`].
pub fn contraction_scan(model: &LevyModel, diameters: &[f64], pairs: usize, cfg: &McConfig) -> Result<Vec<ScanRow>> {
    let d = model.dim();
    let mut rows = Vec::new();
    for &diam in diameters {
        let domain = Domain::ball(&[0.0; 3][..d], 0.5 * diam)?;
        let green = BallGreen::new(&domain, model.alpha())?;
        let grid = PairGrid::spread(&domain, pairs.div_ceil(2).max(1), 2, 0.1 * diam, 0.1 * diam);
        let list: Vec<(Point, Point)> = grid.sources.iter().flat_map(|(x, ys)| ys.iter().map(move |&y| (*x, y))).collect();
        let est = h_sigma_mc(&domain, model, &list, cfg)?;
        let (theta, se) = list
            .iter()
            .zip(&est)
            .map(|((x, y), e)| {
                let g = green.green(*x, *y);
                (e.value / g, e.se / g)
            })
            .fold((0.0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
        rows.push(ScanRow { diameter: diam, theta, se, passed: theta < CONTRACTION_LIMIT });
    }
    Ok(rows)
}

/// The four cases of the convolution-integral bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalkaCase {
    /// `a + ϱ + b < 0`: `|x − y|^{a+ϱ+b}`.
    Negative,
    /// `a + ϱ + b = 0`: `1 + log(diam/|x − y|)`.
    Critical,
    /// `a = b = −ϱ`: `diam^a (1 + log(diam/|x − y|))`.
    Balanced,
    /// Otherwise: `diam^{a+ϱ+b}`.
    Positive,
}

impl CalkaCase {
    pub fn classify(a: f64, b: f64, rho: f64) -> Self {
        let s = a + rho + b;
        if (a - b).abs() < 1e-12 && (a + rho).abs() < 1e-12 {
            CalkaCase::Balanced
        } else if s.abs() < 1e-12 {
            CalkaCase::Critical
        } else if s < 0.0 {
            CalkaCase::Negative
        } else {
            CalkaCase::Positive
        }
    }

    /// Power of `|x − y|` in the bound.
    pub fn exponent(self, a: f64, b: f64, rho: f64) -> f64 {
        match self {
            CalkaCase::Negative => a + rho + b,
            _ => 0.0,
        }
    }

    /// Whether the bound carries a `1 + log(diam/|x − y|)` factor.
    pub fn has_log(self) -> bool {
        matches!(self, CalkaCase::Critical | CalkaCase::Balanced)
    }
}

/// Ladder evaluation of the convolution integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalkaReport {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub case: CalkaCase,
    pub separations: Vec<f64>,
    pub values: Vec<f64>,
    pub claimed_exponent: f64,
    /// Fitted power of the logarithmic factor.
    pub log_power: f64,
    pub fitted_slope: f64,
    pub slope_se: f64,
    pub passed: bool,
}

/// Slope tolerance of the ladder regression.
pub const SLOPE_TOLERANCE: f64 = 0.1;

/// `∫_D ∫_D |y − z|^{a−d} |z − w|^ϱ |w − x|^{b−d} dz dw` on an interval, with
/// `x` and `y` placed symmetrically about the midpoint. The inner rule runs
/// at `tol · 1e−4` so the outer level comparison sees a smooth integrand.
pub fn calka_integral_1d(lo: f64, hi: f64, a: f64, b: f64, rho: f64, sep: f64, tol: f64) -> Result<f64> {
    let mid = 0.5 * (lo + hi);
    let (x, y) = (mid + 0.5 * sep, mid - 0.5 * sep);
    // distance from the abscissa to a breakpoint, exact at segment ends
    let gap = |t: f64, p: f64, seg: (f64, f64), da: f64, db: f64| -> f64 {
        if p == seg.0 {
            da
        } else if p == seg.1 {
            db
        } else {
            (t - p).abs()
        }
    };
    let inner_tol = (tol * 1e-4).max(1e-12);
    let (p, q) = (a - 1.0, rho);
    let middle_coef = ln_beta(p + 1.0, q + 1.0).exp();
    let inner = |w: f64| -> f64 {
        let gap_yw = (w - y).abs();
        let (l, r) = if w < y { (w, y) } else { (y, w) };
        let l_is_y = l == y;
        // between y and w the integral is a Beta function
        let mut total = middle_coef * gap_yw.powf(p + q + 1.0);
        let left = tanh_sinh(
            |_, _, db| {
                let (dy, dw) = if l_is_y { (db, db + gap_yw) } else { (db + gap_yw, db) };
                dy.powf(p) * dw.powf(q)
            },
            lo,
            l,
            inner_tol,
        );
        let right = tanh_sinh(
            |_, da, _| {
                let (dy, dw) = if l_is_y { (da + gap_yw, da) } else { (da, da + gap_yw) };
                dy.powf(p) * dw.powf(q)
            },
            r,
            hi,
            inner_tol,
        );
        match (left, right) {
            (Ok(u), Ok(v)) => total += u.value + v.value,
            _ => return f64::NAN,
        }
        total
    };
    let b_pts = breakpoints(lo, hi, &[x, y]);
    let mut total = 0.0;
    for seg in b_pts.windows(2) {
        let s = (seg[0], seg[1]);
        total += tanh_sinh_breaks(|w, da, db| inner(w) * gap(w, x, s, da, db).powf(b - 1.0), seg, tol)?.value;
    }
    if !total.is_finite() {
        return Err(Error::Quadrature { error: f64::INFINITY, target: tol });
    }
    Ok(total)
}

/// Power of the `1 + log(diam/|x − y|)` factor in the claimed form.
fn log_power(case: CalkaCase) -> f64 {
    if case.has_log() {
        1.0
    } else {
        0.0
    }
}

/// Regression of the log-integral against `log|x − y|` along a ladder on
/// the interval `(lo, hi)`.
///
/// The bound is one-sided, so a logarithmic factor of any power between 0
/// and the claimed one is admitted: the slope is profiled over that power
/// and the least-squares choice is reported.
pub fn calka_bound_check(lo: f64, hi: f64, a: f64, b: f64, rho: f64, separations: &[f64], tol: f64) -> Result<CalkaReport> {
    if !(rho > -1.0) || !(a > 0.0) || !(b > 0.0) {
        return Err(Error::invalid("rho", "needs −d < ϱ and a, b > 0"));
    }
    let diam = hi - lo;
    let case = CalkaCase::classify(a, b, rho);
    let values = separations
        .iter()
        .map(|&s| calka_integral_1d(lo, hi, a, b, rho, s, tol))
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = separations.iter().map(|s| s.ln()).collect();
    let log_factor: Vec<f64> = separations.iter().map(|s| (1.0 + (diam / s).ln()).ln()).collect();
    let max_power = log_power(case);
    let steps = if max_power > 0.0 { 100 } else { 0 };
    let mut best: Option<(f64, f64, crate::numerics::stats::LinearFit)> = None;
    for i in 0..=steps {
        let beta = if steps == 0 { 0.0 } else { max_power * i as f64 / steps as f64 };
        let ly: Vec<f64> = values.iter().zip(&log_factor).map(|(v, l)| v.ln() - beta * l).collect();
        let fit = linear_fit(&lx, &ly);
        let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2)).sum();
        if best.as_ref().is_none_or(|b| sse < b.1) {
            best = Some((beta, sse, fit));
        }
    }
    let (beta, _, fit) = best.expect("at least one profile step");
    let claimed = case.exponent(a, b, rho);
    Ok(CalkaReport {
        a,
        b,
        rho,
        case,
        separations: separations.to_vec(),
        values,
        claimed_exponent: claimed,
        log_power: beta,
        fitted_slope: fit.slope,
        slope_se: fit.slope_se,
        passed: (fit.slope - claimed).abs() <= SLOPE_TOLERANCE,
    })
}

/// Halving ladder `start · 2^{−k}`, `k < steps`.
pub fn halving_ladder(start: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|k| start * 0.5f64.powi(k as i32)).collect()
}

/// Harmonic pair and evaluation points of a boundary Harnack experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BhpOptions {
    pub rho: f64,
    pub beta: f64,
    pub points: usize,
    pub n: usize,
    pub seed: u64,
}

/// Double ratios `u(x) v(y) / (u(y) v(x))` for two functions harmonic in
/// `D ∩ B(z, ρ)` that vanish on `B(z, ρ) \ D`.
pub fn bhp_check<U, V>(domain: &Domain, model: &LevyModel, z: Point, u: U, v: V, opts: &BhpOptions) -> Result<RatioReport>
where
    U: Fn(Point) -> f64 + Sync,
    V: Fn(Point) -> f64 + Sync,
{
    let d = domain.dim();
    let radius = opts.rho * opts.beta;
    let local = spread_points(domain, 4096, 0.0, 7)
        .into_iter()
        .filter(|&p| dist(p, z) < radius && domain.dist_to_boundary(p) > 0.02 * radius)
        .take(opts.points)
        .collect::<Vec<_>>();
    if local.len() < 2 {
        return Err(Error::Geometry("no evaluation points near the boundary point".into()));
    }
    let k = local.len();
    let cfg = McConfig::new(opts.n, opts.seed);
    let uu = |p: Point| if dist(p, z) < opts.rho { 0.0 } else { u(p) };
    let vv = |p: Point| if dist(p, z) < opts.rho { 0.0 } else { v(p) };
    let m = if model.is_stable() {
        let sampler = BallExitSampler::new(model.alpha(), d)?;
        let shell = 1e-4 * domain.diam();
        mc_vector(&cfg, 2 * k, |rng, out| {
            for (i, &x) in local.iter().enumerate() {
                let mut pos = x;
                let mut steps = 0usize;
                while domain.contains(pos) {
                    let delta = domain.dist_to_boundary(pos);
                    if delta < shell {
                        break;
                    }
                    pos = sampler.from_center(pos, 0.95 * delta, rng);
                    steps += 1;
                    if steps > 1_000_000 {
                        return Err(Error::StepBudget(steps));
                    }
                }
                if !domain.contains(pos) {
                    out[i] = uu(pos);
                    out[k + i] = vv(pos);
                }
            }
            Ok(())
        })?
    } else {
        let path = default_path_config(domain, model.alpha());
        let engine = PathEngine::new(model, path)?;
        let horizon = default_horizon(domain, model.alpha());
        mc_vector(&cfg, 2 * k, |rng, out| {
            for (i, &x) in local.iter().enumerate() {
                let o = engine.run(x, Some(domain), horizon, &[], rng, |_, _| {})?;
                if o.exited {
                    out[i] = uu(o.exit_position);
                    out[k + i] = vv(o.exit_position);
                }
            }
            Ok(())
        })?
    };
    let est = |j: usize| Estimate::new(m[j].mean, m[j].std_error(), opts.n, opts.seed, "harmonic");
    let mut rows = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let (ux, vx, uy, vy) = (est(i), est(k + i), est(j), est(k + j));
            let ratio = ux.value * vy.value / (uy.value * vx.value);
            let rel = [&ux, &vx, &uy, &vy].iter().map(|e| (e.se / e.value).powi(2)).sum::<f64>().sqrt();
            let se = ratio * rel;
            rows.push(RatioRow {
                x: local[i][..d].to_vec(),
                y: Some(local[j][..d].to_vec()),
                numerator: ux.value * vy.value,
                numerator_se: 0.0,
                denominator: uy.value * vx.value,
                denominator_se: 0.0,
                ratio,
                se,
                ci: (ratio - Z95 * se, ratio + Z95 * se),
                flags: vec![],
            });
        }
    }
    let config = json!({
        "domain": domain.spec(),
        "model": model.spec(),
        "z": &z[..d],
        "rho": opts.rho,
        "beta": opts.beta,
        "n": opts.n,
        "seed": opts.seed,
    });
    Ok(RatioReport::assemble("bhp", rows, None, config, opts.seed))
}

/// Poisson-kernel ratios `P^Y_D(x, z) / P̃_D(x, z)` on a ball domain.
pub fn compare_poisson(domain: &Domain, model: &LevyModel, xs: &[Point], zs: &[Point], opts: &CompareOptions) -> Result<RatioReport> {
    let d = domain.dim();
    let alpha = model.alpha();
    let green = BallGreen::new(domain, alpha)?;
    let stable = LevyModel::stable(d, alpha)?;
    let path = opts.path_for(domain, alpha);
    let horizon = opts.horizon_for(domain, alpha);
    let mut rows = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let cfg = McConfig::new(opts.n, opts.seed.wrapping_add(i as u64));
        let py = poisson_kernel_mc(domain, model, x, zs, &cfg, path, horizon)?;
        for (j, &z) in zs.iter().enumerate() {
            let q = poisson_kernel_iw(domain, &stable, x, z, &green, 1e-7)?;
            let tilde = Estimate::new(q.value, q.error, 0, 0, "ikeda-watanabe");
            rows.push(RatioRow::new(x, Some(z), d, &py[j], &tilde));
        }
    }
    let config = json!({
        "domain": domain.spec(),
        "model": model.spec(),
        "n": opts.n,
        "seed": opts.seed,
    });
    Ok(RatioReport::assemble("poisson", rows, None, config, opts.seed))
}

/// Far-branch ratios `P^Y_D(x, z) / (ν^Y(z − x) E^x τ̃_D)`.
pub fn poisson_far_ratio(domain: &Domain, model: &LevyModel, x: Point, zs: &[Point], opts: &CompareOptions) -> Result<RatioReport> {
    let d = domain.dim();
    let alpha = model.alpha();
    let path = opts.path_for(domain, alpha);
    let horizon = opts.horizon_for(domain, alpha);
    let cfg = McConfig::new(opts.n, opts.seed);
    let py = poisson_kernel_mc(domain, model, x, zs, &cfg, path, horizon)?;
    let tau = stable_exit_values(domain, alpha, &[x], &cfg)?.remove(0);
    let rows = zs
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let nu = model.levy_radial(dist(z, x));
            let den = Estimate::new(nu * tau.value, nu * tau.se, tau.n, tau.seed, "levy-times-moment");
            RatioRow::new(x, Some(z), d, &py[j], &den)
        })
        .collect();
    let config = json!({ "domain": domain.spec(), "model": model.spec(), "n": opts.n, "seed": opts.seed });
    Ok(RatioReport::assemble("poisson-far", rows, None, config, opts.seed))
}

/// Convenience: points on the segment from `a` to `b` at fractions `ts`.
pub fn segment_points(a: &[f64], b: &[f64], ts: &[f64]) -> Vec<Point> {
    let (pa, pb) = (point(a), point(b));
    ts.iter()
        .map(|&t| {
            let mut p = pa;
            for k in 0..3 {
                p[k] = pa[k] + t * (pb[k] - pa[k]);
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ORIGIN;

    #[test]
    fn verdict_ordering() {
        assert_eq!(Verdict::Bounded.and(Verdict::Inconclusive), Verdict::Inconclusive);
        assert_eq!(Verdict::Violated.and(Verdict::Inconclusive), Verdict::Violated);
        assert_eq!(Verdict::Violated.exit_code(), 3);
    }

    #[test]
    fn report_min_not_above_max() {
        let e = |v: f64| Estimate::new(v, 0.01, 10, 0, "t");
        let rows: Vec<RatioRow> = [1.0, 1.2, 0.9].iter().map(|&v| RatioRow::new(ORIGIN, None, 1, &e(v), &e(1.0))).collect();
        let r = RatioReport::assemble("t", rows, None, Value::Null, 1);
        assert!(r.min_ratio <= r.max_ratio);
        assert!(r.min_band.0 <= r.min_band.1 && r.max_band.0 <= r.max_band.1);
        assert_eq!(r.verdict, Verdict::Bounded);
    }

    #[test]
    fn negative_interval_is_violation() {
        let rows = vec![RatioRow::new(ORIGIN, None, 1, &Estimate::new(-1.0, 0.01, 1, 0, "t"), &Estimate::new(1.0, 0.0, 1, 0, "t"))];
        assert_eq!(RatioReport::assemble("t", rows, None, Value::Null, 1).verdict, Verdict::Violated);
    }

    #[test]
    fn spread_points_respect_margin() {
        let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let pts = spread_points(&dom, 30, 0.1, 0);
        assert_eq!(pts.len(), 30);
        assert!(pts.iter().all(|&p| dom.dist_to_boundary(p) >= 0.1));
        let grid = PairGrid::spread(&dom, 4, 5, 0.2, 0.1);
        assert_eq!(grid.len(), 20);
    }

    #[test]
    fn stable_moments_ratio_near_one() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let model = LevyModel::stable(1, 1.5).unwrap();
        let mut opts = CompareOptions::new(2_000, 3);
        opts.doubling = false;
        let xs = segment_points(&[0.0], &[0.9], &[0.0, 0.5, 1.0]);
        let r = compare_moments(&dom, &model, &xs, &opts).unwrap();
        for row in &r.rows {
            assert!((row.ratio - 1.0).abs() < 3.0 * row.se + 0.02, "{row:?}");
        }
    }

    #[test]
    fn zero_sigma_gives_zero_operator() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let g = BallGreen::new(&dom, 1.5).unwrap();
        let v = h_sigma_apply(&dom, &g, |_| 0.0, |_| 1.0, ORIGIN, &[], 1e-6).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn h_sigma_constant_kernel_factorises() {
        // σ ≡ 1 and f ≡ 1 give |D| E^x τ
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let g = BallGreen::new(&dom, 1.5).unwrap();
        let x = point(&[0.3]);
        let v = h_sigma_apply(&dom, &g, |_| 1.0, |_| 1.0, x, &[], 1e-8).unwrap();
        let exact = 2.0 * ball_mean_exit(x, 1.0, 1.5, 1).unwrap();
        assert!((v / exact - 1.0).abs() < 1e-5, "{v} vs {exact}");
    }

    #[test]
    fn sigma_lookup_matches_direct() {
        let model = LevyModel::relativistic(2, 1.5, 1.0).unwrap();
        let lookup = SigmaLookup::new(&model, 0.4);
        assert!(lookup.table.is_some());
        for r in [1e-12, 1e-7, 3e-4, 0.01, 0.123, 0.4] {
            let (a, b) = (lookup.eval(r), model.sigma_radial(r));
            assert!((a - b).abs() <= 1e-5 * b.abs(), "r={r}: {a} vs {b}");
        }
        let truncated = LevyModel::truncated(2, 1.5, 0.1).unwrap();
        assert!(SigmaLookup::new(&truncated, 0.4).table.is_none());
    }

    #[test]
    fn h_sigma_mc_matches_quadrature_on_interval() {
        let domain = Domain::interval(-0.2, 0.2).unwrap();
        let model = LevyModel::relativistic(1, 1.5, 1.0).unwrap();
        let green = BallGreen::new(&domain, 1.5).unwrap();
        let (x, y) = (point(&[0.05]), point(&[-0.08]));
        let quad = h_sigma_apply(&domain, &green, |r| model.sigma_radial(r).abs(), |z| green.green(z, y), x, &[y], 1e-6).unwrap();
        let mc = h_sigma_mc(&domain, &model, &[(x, y)], &McConfig::new(200_000, 5)).unwrap().remove(0);
        assert!((mc.value - quad).abs() < 4.0 * mc.se, "{} ± {} vs {quad}", mc.value, mc.se);
    }

    #[test]
    fn calka_negative_case_scaling() {
        let r = calka_bound_check(-1.0, 1.0, 0.2, 0.3, -0.8, &[0.04, 0.02, 0.01], 1e-5).unwrap();
        assert_eq!(r.case, CalkaCase::Negative);
        assert!((r.fitted_slope + 0.3).abs() < 0.1, "{r:?}");
    }
}
