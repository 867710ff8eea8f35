//! Samplers for increments and path skeletons.
//!
//! Perturbed processes are simulated through the dominating jump intensity
//! `ν̃ + σ₋ = max(ν^Y, ν̃)`: stable jumps of size at least `ε` are thinned
//! with probability `ν^Y/ν̃`, jumps of `σ₋` are added in full, and the
//! remaining small jumps are replaced by a Brownian motion of equal variance.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{add, norm, random_direction, scale, Domain, Point, ORIGIN};
use crate::levy_models::{tempered_exponent, LevyModel, RadialFn, Sigma};
use crate::numerics::special::sphere_area;
use crate::stable_core::{check_alpha, check_dim, levy_constant};

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn gaussian_vector<R: Rng + ?Sized>(d: usize, sd: f64, rng: &mut R) -> Point {
    let mut p = ORIGIN;
    for c in p.iter_mut().take(d) {
        let z: f64 = StandardNormal.sample(rng);
        *c = sd * z;
    }
    p
}

/// Positive strictly `β`-stable variable with `E e^{−λS} = e^{−λ^β}`.
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    if beta == 1.0 {
        return 1.0;
    }
    let u = PI * open01(rng);
    let w: f64 = Exp1.sample(rng);
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    a * ((1.0 - beta) * u).sin().powf((1.0 - beta) / beta) * w.powf(-(1.0 - beta) / beta)
}

/// Standard symmetric stable variable with `E e^{izX} = e^{−|z|^α}`.
pub fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * (open01(rng) - 0.5);
    if alpha == 1.0 {
        return u.tan();
    }
    let w: f64 = Exp1.sample(rng);
    (alpha * u).sin() / u.cos().powf(1.0 / alpha) * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Exact sample of the stable increment over time `t`.
pub fn sample_stable_increment<R: Rng + ?Sized>(t: f64, alpha: f64, d: usize, rng: &mut R) -> Result<Point> {
    check_alpha(alpha)?;
    check_dim(d)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "time must be positive"));
    }
    if d == 1 {
        return Ok([t.powf(1.0 / alpha) * sample_symmetric_stable(alpha, rng), 0.0, 0.0]);
    }
    let s = t.powf(2.0 / alpha) * sample_positive_stable(alpha / 2.0, rng);
    Ok(gaussian_vector(d, (2.0 * s).sqrt(), rng))
}

/// Exact sampler of relativistic increments by rejection from the stable
/// subordinator.
#[derive(Debug, Clone, Copy)]
pub struct RelativisticSampler {
    pub alpha: f64,
    pub m: f64,
    pub d: usize,
}

impl RelativisticSampler {
    pub fn new(alpha: f64, m: f64, d: usize) -> Result<Self> {
        check_alpha(alpha)?;
        check_dim(d)?;
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::invalid("m", "mass must be nonnegative"));
        }
        Ok(Self { alpha, m, d })
    }

    /// Increment over `t` together with the number of subordinator draws.
    /// Long steps are split so that every piece has acceptance at least `e^{−1}`.
    pub fn sample_counted<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<(Point, usize)> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", "time must be positive"));
        }
        if self.m == 0.0 {
            return Ok((sample_stable_increment(t, self.alpha, self.d, rng)?, 1));
        }
        let pieces = (t * self.m).ceil().max(1.0) as usize;
        let tp = t / pieces as f64;
        let big_m = self.m.powf(2.0 / self.alpha);
        let time_scale = tp.powf(2.0 / self.alpha);
        let mut total_s = 0.0;
        let mut trials = 0;
        for _ in 0..pieces {
            loop {
                trials += 1;
                let s = time_scale * sample_positive_stable(self.alpha / 2.0, rng);
                if open01(rng) < (-big_m * s).exp() {
                    total_s += s;
                    break;
                }
            }
        }
        Ok((gaussian_vector(self.d, (2.0 * total_s).sqrt(), rng), trials))
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<Point> {
        Ok(self.sample_counted(t, rng)?.0)
    }

    /// One unsplit rejection trial: `Some(increment)` on acceptance.
    pub fn trial<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Option<Point> {
        let big_m = self.m.powf(2.0 / self.alpha);
        let s = t.powf(2.0 / self.alpha) * sample_positive_stable(self.alpha / 2.0, rng);
        if open01(rng) < (-big_m * s).exp() {
            Some(gaussian_vector(self.d, (2.0 * s).sqrt(), rng))
        } else {
            None
        }
    }
}

pub fn sample_relativistic_increment<R: Rng + ?Sized>(
    t: f64,
    alpha: f64,
    m: f64,
    d: usize,
    rng: &mut R,
) -> Result<Point> {
    RelativisticSampler::new(alpha, m, d)?.sample(t, rng)
}

/// Radial envelope piece `coef · r^power` on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPiece {
    pub lo: f64,
    pub hi: f64,
    pub coef: f64,
    pub power: f64,
}

impl PowerPiece {
    pub fn mass(&self) -> f64 {
        let p1 = self.power + 1.0;
        if p1.abs() < 1e-14 {
            return self.coef * (self.hi / self.lo).ln();
        }
        let top = if self.hi.is_finite() { self.hi.powf(p1) } else { 0.0 };
        let bottom = if self.lo > 0.0 { self.lo.powf(p1) } else { 0.0 };
        self.coef * (top - bottom) / p1
    }

    pub fn value(&self, r: f64) -> f64 {
        self.coef * r.powf(self.power)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open01(rng);
        let p1 = self.power + 1.0;
        if p1.abs() < 1e-14 {
            return self.lo * (self.hi / self.lo).powf(u);
        }
        if !self.hi.is_finite() {
            return self.lo * u.powf(1.0 / p1);
        }
        let a = if self.lo > 0.0 { self.lo.powf(p1) } else { 0.0 };
        let b = self.hi.powf(p1);
        (a + u * (b - a)).powf(1.0 / p1).clamp(self.lo, self.hi)
    }
}

#[derive(Clone)]
enum JumpKind {
    Empty,
    Gaussian { scale: f64 },
    Enveloped { density: RadialFn, pieces: Vec<PowerPiece>, cumulative: Vec<f64>, exact: bool },
}

/// Law of the jumps of a compound Poisson process with an isotropic,
/// nonnegative, finite intensity.
#[derive(Clone)]
pub struct JumpLaw {
    d: usize,
    mass: f64,
    kind: JumpKind,
}

impl std::fmt::Debug for JumpLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JumpLaw").field("d", &self.d).field("mass", &self.mass).finish()
    }
}

impl JumpLaw {
    pub fn empty(d: usize) -> Self {
        Self { d, mass: 0.0, kind: JumpKind::Empty }
    }

    pub fn gaussian(d: usize, mass: f64, scale: f64) -> Self {
        Self { d, mass, kind: JumpKind::Gaussian { scale } }
    }

    /// Intensity `density(|w|)` of total mass `mass`, sampled by rejection
    /// against the radial envelope `Σ pieces ≥ S_d r^{d−1} density(r)`.
    /// With `exact` the envelope is the radial law itself.
    pub fn enveloped(d: usize, mass: f64, density: RadialFn, pieces: Vec<PowerPiece>, exact: bool) -> Result<Self> {
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::invalid("mass", "jump intensity must be finite and nonnegative"));
        }
        if mass == 0.0 || pieces.is_empty() {
            return Ok(Self::empty(d));
        }
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            let m = p.mass();
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::invalid("envelope", "envelope piece has infinite mass"));
            }
            acc += m;
            cumulative.push(acc);
        }
        Ok(Self { d, mass, kind: JumpKind::Enveloped { density, pieces, cumulative, exact } })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.mass == 0.0
    }

    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(norm(self.sample(rng)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        match &self.kind {
            JumpKind::Empty => Err(Error::invalid("mass", "cannot sample from an empty jump law")),
            JumpKind::Gaussian { scale } => Ok(gaussian_vector(self.d, *scale, rng)),
            JumpKind::Enveloped { density, pieces, cumulative, exact } => {
                let total = *cumulative.last().expect("nonempty");
                let area = sphere_area(self.d);
                let dm1 = self.d as i32 - 1;
                for _ in 0..1_000_000 {
                    let u = open01(rng) * total;
                    let i = cumulative.partition_point(|&c| c < u).min(pieces.len() - 1);
                    let piece = pieces[i];
                    let r = piece.sample(rng);
                    if *exact {
                        return Ok(scale(random_direction(self.d, rng), r));
                    }
                    let target = area * r.powi(dm1) * density(r);
                    let bound = piece.value(r);
                    if target > bound * (1.0 + 1e-9) {
                        return Err(Error::EnvelopeViolation { radius: r, value: target, bound });
                    }
                    if open01(rng) * bound < target {
                        return Ok(scale(random_direction(self.d, rng), r));
                    }
                }
                Err(Error::StepBudget(1_000_000))
            }
        }
    }
}

/// Which half of the Jordan decomposition of `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaPart {
    Plus,
    Minus,
}

/// Compound-Poisson law of `σ₊` or `σ₋`.
pub fn sigma_part_law(model: &LevyModel, part: SigmaPart) -> Result<JumpLaw> {
    let d = model.dim();
    let alpha = model.alpha();
    let area = sphere_area(d);
    let sign = match part {
        SigmaPart::Plus => 1.0,
        SigmaPart::Minus => -1.0,
    };
    let owned = model.clone();
    let density: RadialFn = Arc::new(move |r| (sign * owned.sigma_radial(r)).max(0.0));
    let stable_coef = levy_constant(alpha, d) * area;
    match model.sigma() {
        Sigma::Zero => Ok(JumpLaw::empty(d)),
        Sigma::Truncated { cutoff } => {
            if part == SigmaPart::Minus {
                return Ok(JumpLaw::empty(d));
            }
            let piece = PowerPiece { lo: *cutoff, hi: f64::INFINITY, coef: stable_coef, power: -1.0 - alpha };
            JumpLaw::enveloped(d, piece.mass(), density, vec![piece], true)
        }
        Sigma::Relativistic { m, big_m, .. } => {
            if part == SigmaPart::Minus {
                return Ok(JumpLaw::empty(d));
            }
            let k = 0.5 * (d as f64 + alpha);
            let (s, cs) = tempered_exponent(k, alpha);
            let r_star = (4.0 / big_m * cs.powf(-1.0 / s)).sqrt();
            let pieces = vec![
                PowerPiece {
                    lo: 0.0,
                    hi: r_star,
                    coef: stable_coef * cs * (big_m / 4.0).powf(s),
                    power: 2.0 * s - 1.0 - alpha,
                },
                PowerPiece { lo: r_star, hi: f64::INFINITY, coef: stable_coef, power: -1.0 - alpha },
            ];
            JumpLaw::enveloped(d, *m, density, pieces, false)
        }
        Sigma::Power { c, rho, support } => {
            if sign * c <= 0.0 {
                return Ok(JumpLaw::empty(d));
            }
            let piece = PowerPiece { lo: 0.0, hi: *support, coef: c.abs() * area, power: rho - 1.0 };
            JumpLaw::enveloped(d, piece.mass(), density, vec![piece], true)
        }
        Sigma::Bump { amplitude, radius } => {
            if sign * amplitude <= 0.0 {
                return Ok(JumpLaw::empty(d));
            }
            let piece = PowerPiece { lo: 0.0, hi: *radius, coef: amplitude.abs() * area, power: d as f64 - 1.0 };
            JumpLaw::enveloped(d, piece.mass(), density, vec![piece], true)
        }
        Sigma::Gaussian { mass, scale } => {
            if sign * mass <= 0.0 {
                return Ok(JumpLaw::empty(d));
            }
            Ok(JumpLaw::gaussian(d, mass.abs(), *scale))
        }
        Sigma::Callback { support, .. } => {
            let (plus, minus) = model.sigma_parts_mass()?;
            let mass = if part == SigmaPart::Plus { plus } else { minus };
            let env = model.envelope();
            let inner = support.min(1.0);
            let mut pieces = vec![PowerPiece { lo: 0.0, hi: inner, coef: env.c * area, power: env.rho - 1.0 }];
            // outside the unit ball the envelope is a sampled step function
            let mut lo = inner;
            while lo < *support {
                let hi = (lo * 1.25).min(*support);
                let dm1 = d as i32 - 1;
                let sup = (0..=32)
                    .map(|i| {
                        let r = lo + (hi - lo) * i as f64 / 32.0;
                        area * r.powi(dm1) * density(r.min(hi * (1.0 - 1e-12)))
                    })
                    .fold(0.0, f64::max);
                if sup > 0.0 {
                    pieces.push(PowerPiece { lo, hi, coef: 1.5 * sup, power: 0.0 });
                }
                lo = hi;
            }
            JumpLaw::enveloped(d, mass, density, pieces, false)
        }
    }
}

/// Jumps of a compound Poisson process with law `law` on `[0, t]`, sorted by
/// time.
pub fn sample_compound_poisson<R: Rng + ?Sized>(law: &JumpLaw, t: f64, rng: &mut R) -> Result<Vec<(f64, Point)>> {
    if law.is_empty() || t <= 0.0 {
        return Ok(Vec::new());
    }
    let n = Poisson::new(law.mass() * t)
        .map_err(|e| Error::invalid("mass", e.to_string()))?
        .sample(rng) as usize;
    let mut times: Vec<f64> = (0..n).map(|_| t * rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    times.into_iter().map(|s| Ok((s, law.sample(rng)?))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSkeleton {
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Point>,
    pub exited: bool,
    pub exit_index: Option<usize>,
    pub horizon: f64,
    /// Largest jump kept along the path.
    pub max_jump: f64,
}

impl PathSkeleton {
    pub fn exit_time(&self) -> Option<f64> {
        self.exit_index.map(|i| self.times[i])
    }

    pub fn exit_position(&self) -> Option<Point> {
        self.exit_index.map(|i| self.positions[i])
    }

    pub fn end(&self) -> Point {
        *self.positions.last().expect("skeleton has a start point")
    }

    /// Position at time `t` (càdlàg, piecewise constant between nodes).
    pub fn position_at(&self, t: f64) -> Point {
        let i = self.times.partition_point(|&s| s <= t);
        self.positions[i.saturating_sub(1)]
    }

    /// Rows `t, x1, .., xd, exited` with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        let coords: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},exited", coords.join(",")).map_err(io)?;
        for (i, (t, p)) in self.times.iter().zip(&self.positions).enumerate() {
            let xs: Vec<String> = p[..self.dim].iter().map(|v| format!("{v:.17e}")).collect();
            let flag = u8::from(self.exit_index == Some(i));
            writeln!(w, "{t:.17e},{},{flag}", xs.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// Cutoff and grid of the skeleton scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Jumps smaller than this are replaced by a Brownian substitute.
    pub eps: f64,
    /// Grid step on which the Brownian substitute is evaluated.
    pub dt: f64,
    /// Hard cap on recorded nodes per path.
    pub max_nodes: usize,
}

impl PathConfig {
    pub fn new(eps: f64, dt: f64) -> Self {
        Self { eps, dt, max_nodes: 50_000_000 }
    }

    /// Defaults scaled to a domain of size `scale`: `ε = scale/200` and a
    /// step of 1/500 of the stable mean exit time from a ball of radius
    /// `scale/2`.
    pub fn for_scale(scale: f64, alpha: f64) -> Self {
        Self::new(scale / 200.0, (0.5 * scale).powf(alpha) / 500.0)
    }
}

/// Outcome of a single simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub exited: bool,
    pub exit_time: f64,
    pub exit_position: Point,
    pub end_time: f64,
    pub end_position: Point,
    pub nodes: usize,
    pub max_jump: f64,
}

/// Precomputed jump rates of the dominating process of a model.
#[derive(Debug, Clone)]
pub struct PathEngine {
    model: LevyModel,
    cfg: PathConfig,
    big_rate: f64,
    brownian_rate: f64,
    minus: JumpLaw,
}

impl PathEngine {
    pub fn new(model: &LevyModel, cfg: PathConfig) -> Result<Self> {
        if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
            return Err(Error::invalid("eps", "cutoff must be positive"));
        }
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        let d = model.dim();
        let alpha = model.alpha();
        let big_rate = levy_constant(alpha, d) * sphere_area(d) * cfg.eps.powf(-alpha) / alpha;
        let brownian_rate = model.small_jump_variance(cfg.eps)? / d as f64;
        let minus = sigma_part_law(model, SigmaPart::Minus)?;
        Ok(Self { model: model.clone(), cfg, big_rate, brownian_rate, minus })
    }

    pub fn config(&self) -> PathConfig {
        self.cfg
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    /// Per-coordinate variance of the Brownian substitute over one grid step.
    pub fn substitute_step_variance(&self) -> f64 {
        self.brownian_rate * self.cfg.dt
    }

    /// Warning when the Brownian substitute moves more than `1e-2·scale`
    /// (standard deviation) within one grid step.
    pub fn cutoff_warning(&self, scale: f64) -> Option<String> {
        let v = self.substitute_step_variance() * self.model.dim() as f64;
        (v > 1e-4 * scale * scale).then(|| {
            format!("small-jump substitute variance {v:.3e} per step exceeds 1e-4·scale² = {:.3e}", 1e-4 * scale * scale)
        })
    }

    /// Runs one path from `x` until exit from `domain` or `horizon`, calling
    /// `visit(t, position)` at every recorded node including the start.
    /// `extra_times` (sorted) are forced record times.
    pub fn run<R, F>(
        &self,
        x: Point,
        domain: Option<&Domain>,
        horizon: f64,
        extra_times: &[f64],
        rng: &mut R,
        mut visit: F,
    ) -> Result<RunOutcome>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, Point),
    {
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        let d = self.model.dim();
        let alpha = self.model.alpha();
        let eps = self.cfg.eps;
        let mut pos = x;
        let mut t = 0.0;
        let mut nodes = 1usize;
        let mut max_jump: f64 = 0.0;
        visit(0.0, pos);
        let outcome = |exited: bool, t: f64, pos: Point, nodes: usize, max_jump: f64| RunOutcome {
            exited,
            exit_time: if exited { t } else { f64::INFINITY },
            exit_position: pos,
            end_time: t,
            end_position: pos,
            nodes,
            max_jump,
        };
        if let Some(dom) = domain {
            if !dom.contains(pos) {
                return Ok(outcome(true, 0.0, pos, nodes, max_jump));
            }
        }
        let exp = |rate: f64, rng: &mut R| -> f64 {
            if rate > 0.0 {
                let e: f64 = Exp1.sample(rng);
                e / rate
            } else {
                f64::INFINITY
            }
        };
        let mut next_big = exp(self.big_rate, rng);
        let mut next_minus = exp(self.minus.mass(), rng);
        let mut grid_k = 1usize;
        let mut extra_i = extra_times.partition_point(|&s| s <= 0.0);
        let bsd = self.brownian_rate.sqrt();
        loop {
            let next_grid = (grid_k as f64 * self.cfg.dt).min(horizon);
            let next_extra = extra_times.get(extra_i).copied().unwrap_or(f64::INFINITY);
            let te = next_big.min(next_minus).min(next_grid).min(next_extra);
            if te > t && bsd > 0.0 {
                pos = add(pos, gaussian_vector(d, bsd * (te - t).sqrt(), rng));
            }
            t = te;
            let mut record = false;
            if te == next_big {
                next_big = t + exp(self.big_rate, rng);
                let r = eps * open01(rng).powf(-1.0 / alpha);
                if open01(rng) < self.model.keep_probability(r) {
                    pos = add(pos, scale(random_direction(d, rng), r));
                    max_jump = max_jump.max(r);
                    record = true;
                }
            } else if te == next_minus {
                next_minus = t + exp(self.minus.mass(), rng);
                let w = self.minus.sample(rng)?;
                max_jump = max_jump.max(norm(w));
                pos = add(pos, w);
                record = true;
            } else if te == next_extra {
                extra_i += 1;
                record = true;
            } else {
                grid_k += 1;
                record = true;
            }
            if record {
                nodes += 1;
                if nodes > self.cfg.max_nodes {
                    return Err(Error::StepBudget(self.cfg.max_nodes));
                }
                visit(t, pos);
                if let Some(dom) = domain {
                    if !dom.contains(pos) {
                        return Ok(outcome(true, t, pos, nodes, max_jump));
                    }
                }
            }
            if t >= horizon {
                return Ok(outcome(false, t, pos, nodes, max_jump));
            }
        }
    }

    pub fn skeleton<R: Rng + ?Sized>(
        &self,
        x: Point,
        domain: Option<&Domain>,
        horizon: f64,
        extra_times: &[f64],
        rng: &mut R,
    ) -> Result<PathSkeleton> {
        let mut times = Vec::new();
        let mut positions = Vec::new();
        let out = self.run(x, domain, horizon, extra_times, rng, |t, p| {
            // coincident event times collapse onto the later position
            if times.last() == Some(&t) {
                *positions.last_mut().expect("nonempty") = p;
            } else {
                times.push(t);
                positions.push(p);
            }
        })?;
        let exit_index = out.exited.then(|| times.len() - 1);
        Ok(PathSkeleton {
            dim: self.model.dim(),
            times,
            positions,
            exited: out.exited,
            exit_index,
            horizon,
            max_jump: out.max_jump,
        })
    }
}

/// Skeleton of the perturbed process started at `x`, stopped at `horizon`.
pub fn sample_perturbed_path<R: Rng + ?Sized>(
    model: &LevyModel,
    x: Point,
    horizon: f64,
    cfg: PathConfig,
    rng: &mut R,
) -> Result<PathSkeleton> {
    PathEngine::new(model, cfg)?.skeleton(x, None, horizon, &[], rng)
}

/// Joint paths of `X` and `Z = X + V` with `V` compound Poisson.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSample {
    pub path_x: PathSkeleton,
    pub path_z: PathSkeleton,
    /// First jump time of `V`; infinite when `V` has no jump before the horizon.
    pub first_jump: f64,
    pub jumps_v: Vec<(f64, Point)>,
}

/// Couples `X` (law of `model`) with `Z = X + V`, `V` compound Poisson with
/// jump intensity `law`, sharing one realization of `X`.
pub fn sample_coupled<R: Rng + ?Sized>(
    model: &LevyModel,
    law: &JumpLaw,
    x: Point,
    horizon: f64,
    cfg: PathConfig,
    rng: &mut R,
) -> Result<CouplingSample> {
    let jumps_v = sample_compound_poisson(law, horizon, rng)?;
    let times: Vec<f64> = jumps_v.iter().map(|j| j.0).collect();
    let path_x = PathEngine::new(model, cfg)?.skeleton(x, None, horizon, &times, rng)?;
    let mut path_z = path_x.clone();
    let mut shift = ORIGIN;
    let mut j = 0;
    for (t, p) in path_z.times.iter().zip(path_z.positions.iter_mut()) {
        while j < jumps_v.len() && jumps_v[j].0 <= *t {
            shift = add(shift, jumps_v[j].1);
            j += 1;
        }
        *p = add(*p, shift);
    }
    path_z.max_jump = jumps_v.iter().map(|j| norm(j.1)).fold(path_x.max_jump, f64::max);
    let first_jump = jumps_v.first().map_or(f64::INFINITY, |j| j.0);
    Ok(CouplingSample { path_x, path_z, first_jump, jumps_v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point;
    use crate::numerics::stats::{ks_pvalue, ks_statistic, ks_two_sample, ks_two_sample_pvalue, Moments};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn cauchy_cdf(x: f64) -> f64 {
        0.5 + x.atan() / PI
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let mut r = rng(1);
        let n = 100_000;
        for &beta in &[0.3, 0.6, 0.75] {
            let m = Moments::from_slice(&(0..n).map(|_| (-sample_positive_stable(beta, &mut r)).exp()).collect::<Vec<_>>());
            assert!((m.mean - (-1.0f64).exp()).abs() < 4.0 * m.std_error(), "beta={beta}");
        }
    }

    #[test]
    fn cauchy_increment_ks() {
        let mut r = rng(2);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_stable_increment(1.0, 1.0, 1, &mut r).unwrap()[0]).collect();
        assert!(ks_statistic(&xs, cauchy_cdf) < 0.01);
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        // median within a binomial 99.9% band
        let below = xs.iter().filter(|&&v| v < 0.0).count() as f64;
        assert!((below - 50_000.0).abs() < 3.3 * 158.2);
    }

    #[test]
    fn isotropic_cauchy_projection() {
        // a one-dimensional projection of the 2D Cauchy law is Cauchy
        let mut r = rng(3);
        let xs: Vec<f64> = (0..50_000).map(|_| sample_stable_increment(1.0, 1.0, 2, &mut r).unwrap()[0]).collect();
        assert!(ks_pvalue(ks_statistic(&xs, cauchy_cdf), xs.len()) > 0.01);
    }

    #[test]
    fn stable_self_similarity() {
        let mut r = rng(4);
        let t: f64 = 0.3;
        let a: Vec<f64> = (0..20_000).map(|_| sample_stable_increment(t, 1.4, 1, &mut r).unwrap()[0]).collect();
        let b: Vec<f64> =
            (0..20_000).map(|_| t.powf(1.0 / 1.4) * sample_stable_increment(1.0, 1.4, 1, &mut r).unwrap()[0]).collect();
        let dks = ks_two_sample(&a, &b);
        assert!(ks_two_sample_pvalue(dks, a.len(), b.len()) > 0.01);
    }

    #[test]
    fn relativistic_characteristic_function() {
        let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
        let s = RelativisticSampler::new(1.2, 1.0, 1).unwrap();
        let mut r = rng(5);
        let xs: Vec<f64> = (0..100_000).map(|_| s.sample(0.5, &mut r).unwrap()[0]).collect();
        for &z in &[0.3, 0.7, 1.5, 3.0, 5.0] {
            let m = Moments::from_slice(&xs.iter().map(|x| (z * x).cos()).collect::<Vec<_>>());
            let exact = (-0.5 * model.char_exponent(point(&[z])).unwrap()).exp();
            assert!((m.mean - exact).abs() < 3.0 * m.std_error().max(1e-4), "z={z}: {} vs {exact}", m.mean);
        }
    }

    #[test]
    fn relativistic_acceptance_rate() {
        let s = RelativisticSampler::new(1.2, 1.0, 2).unwrap();
        let mut r = rng(6);
        let acc: Vec<f64> = (0..100_000).map(|_| f64::from(u8::from(s.trial(0.5, &mut r).is_some()))).collect();
        let m = Moments::from_slice(&acc);
        assert!((m.mean - (-0.5f64).exp()).abs() < 3.0 * m.std_error());
    }

    #[test]
    fn relativistic_massless_is_stable() {
        let mut a = rng(7);
        let mut b = rng(7);
        let x = sample_relativistic_increment(0.7, 1.3, 0.0, 2, &mut a).unwrap();
        let y = sample_stable_increment(0.7, 1.3, 2, &mut b).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn compound_poisson_counts_and_first_jump() {
        let model = LevyModel::truncated(1, 1.5, 1.0).unwrap();
        let law = sigma_part_law(&model, SigmaPart::Plus).unwrap();
        // unit mass law for the Poisson checks
        let unit = JumpLaw::gaussian(1, 1.0, 1.0);
        let mut r = rng(8);
        let mut none = Vec::with_capacity(100_000);
        let mut firsts = Vec::new();
        for _ in 0..100_000 {
            let j = sample_compound_poisson(&unit, 1.0, &mut r).unwrap();
            none.push(f64::from(u8::from(j.is_empty())));
            if let Some(f) = j.first() {
                firsts.push(f.0);
            }
        }
        let m = Moments::from_slice(&none);
        assert!((m.mean - (-1.0f64).exp()).abs() < 3.0 * m.std_error());
        // first jump conditioned on occurring before 1
        let c = 1.0 - (-1.0f64).exp();
        let dks = ks_statistic(&firsts, |t| (1.0 - (-t).exp()) / c);
        assert!(ks_pvalue(dks, firsts.len()) > 0.01);
        // tail jumps of the truncated model follow the Pareto radial law
        let radii: Vec<f64> = (0..100_000).map(|_| law.sample_radius(&mut r).unwrap()).collect();
        assert!(ks_statistic(&radii, |x| 1.0 - x.powf(-1.5)) < 0.01);
        assert!((law.mass() - model.sigma_stats().unwrap().m).abs() < 1e-9);
    }

    #[test]
    fn relativistic_sigma_radial_law() {
        // rejection sampler against the radial CDF from quadrature
        let model = LevyModel::relativistic(2, 1.2, 1.0).unwrap();
        let law = sigma_part_law(&model, SigmaPart::Plus).unwrap();
        let mut r = rng(9);
        let radii: Vec<f64> = (0..20_000).map(|_| law.sample_radius(&mut r).unwrap()).collect();
        let area = sphere_area(2);
        let cdf = |x: f64| {
            crate::numerics::quad::tanh_sinh(|s, _, _| area * s * model.sigma_radial(s), 0.0, x, 1e-10).unwrap().value
                / law.mass()
        };
        let mut sorted = radii.clone();
        sorted.sort_by(f64::total_cmp);
        // evaluate the CDF on a coarse table to keep the test fast
        let nodes: Vec<f64> = (0..=400).map(|i| 50.0 * i as f64 / 400.0).collect();
        let vals: Vec<f64> = nodes.iter().map(|&x| if x == 0.0 { 0.0 } else { cdf(x) }).collect();
        let table = |x: f64| crate::numerics::interp::linear(&nodes, &vals, x.min(50.0));
        let dks = ks_statistic(&sorted, table);
        assert!(ks_pvalue(dks, sorted.len()) > 0.01, "ks={dks}");
    }

    #[test]
    fn misdeclared_envelope_is_reported() {
        let density: RadialFn = Arc::new(|r| if r < 1.0 { 5.0 } else { 0.0 });
        let pieces = vec![PowerPiece { lo: 0.0, hi: 1.0, coef: 1.0, power: 0.0 }];
        let law = JumpLaw::enveloped(1, 10.0, density, pieces, false).unwrap();
        let mut r = rng(10);
        assert!(matches!(law.sample(&mut r), Err(Error::EnvelopeViolation { .. })));
    }

    #[test]
    fn truncated_paths_keep_no_long_jumps() {
        let model = LevyModel::truncated(2, 1.5, 0.3).unwrap();
        let mut r = rng(11);
        for _ in 0..200 {
            let p = sample_perturbed_path(&model, ORIGIN, 1.0, PathConfig::new(0.01, 0.01), &mut r).unwrap();
            assert!(p.max_jump <= 0.3);
        }
    }

    #[test]
    fn stable_path_endpoint_matches_exact_law() {
        let model = LevyModel::stable(1, 1.3).unwrap();
        let engine = PathEngine::new(&model, PathConfig::new(1e-3, 0.05)).unwrap();
        let mut r = rng(12);
        let ends: Vec<f64> =
            (0..20_000).map(|_| engine.skeleton(ORIGIN, None, 0.5, &[], &mut r).unwrap().end()[0]).collect();
        let exact: Vec<f64> = (0..20_000).map(|_| sample_stable_increment(0.5, 1.3, 1, &mut r).unwrap()[0]).collect();
        assert!(ks_two_sample(&ends, &exact) < 0.02);
    }

    #[test]
    fn relativistic_path_endpoint_matches_exact_law() {
        let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
        let engine = PathEngine::new(&model, PathConfig::new(1e-3, 0.05)).unwrap();
        let s = RelativisticSampler::new(1.2, 1.0, 1).unwrap();
        let mut r = rng(13);
        let ends: Vec<f64> =
            (0..20_000).map(|_| engine.skeleton(ORIGIN, None, 0.5, &[], &mut r).unwrap().end()[0]).collect();
        let exact: Vec<f64> = (0..20_000).map(|_| s.sample(0.5, &mut r).unwrap()[0]).collect();
        assert!(ks_two_sample(&ends, &exact) < 0.02);
    }

    #[test]
    fn skeleton_invariants_and_reproducibility() {
        let model = LevyModel::relativistic(2, 1.5, 1.0).unwrap();
        let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        let engine = PathEngine::new(&model, PathConfig::new(0.005, 0.002)).unwrap();
        let a = engine.skeleton(ORIGIN, Some(&dom), 100.0, &[], &mut rng(14)).unwrap();
        let b = engine.skeleton(ORIGIN, Some(&dom), 100.0, &[], &mut rng(14)).unwrap();
        assert_eq!(a, b);
        assert!(a.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.times.len(), a.positions.len());
        assert!(a.exited);
        let i = a.exit_index.unwrap();
        assert_eq!(i, a.times.len() - 1);
        assert!(!dom.contains(a.positions[i]));
        assert!(a.positions[..i].iter().all(|&p| dom.contains(p)));
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("t,x1,x2,exited\n"));
        assert_eq!(text.lines().count(), a.times.len() + 1);
    }

    #[test]
    fn coupling_zero_mass() {
        let model = LevyModel::stable(1, 1.2).unwrap();
        let c = sample_coupled(&model, &JumpLaw::empty(1), ORIGIN, 1.0, PathConfig::new(0.01, 0.01), &mut rng(15))
            .unwrap();
        assert_eq!(c.path_x, c.path_z);
        assert!(c.first_jump.is_infinite());
    }

    #[test]
    fn coupling_agrees_before_first_jump() {
        let model = LevyModel::stable(2, 1.2).unwrap();
        let tail = LevyModel::truncated(2, 1.2, 0.5).unwrap();
        let law = sigma_part_law(&tail, SigmaPart::Plus).unwrap();
        let mut r = rng(16);
        for _ in 0..100 {
            let c = sample_coupled(&model, &law, ORIGIN, 1.0, PathConfig::new(0.01, 0.01), &mut r).unwrap();
            for (i, &t) in c.path_x.times.iter().enumerate() {
                if t < c.first_jump {
                    assert_eq!(c.path_x.positions[i], c.path_z.positions[i]);
                }
            }
            for (t, _) in &c.jumps_v {
                assert!(c.path_z.times.contains(t));
            }
        }
    }

    #[test]
    fn coupled_sum_matches_direct_sum() {
        // stable + tail jumps equals stable plus an independent compound Poisson
        let model = LevyModel::stable(1, 1.2).unwrap();
        let tail = LevyModel::truncated(1, 1.2, 1.0).unwrap();
        let law = sigma_part_law(&tail, SigmaPart::Plus).unwrap();
        let mut r = rng(17);
        let coupled: Vec<f64> = (0..5_000)
            .map(|_| sample_coupled(&model, &law, ORIGIN, 0.5, PathConfig::new(1e-3, 0.05), &mut r).unwrap().path_z.end()[0])
            .collect();
        let direct: Vec<f64> = (0..5_000)
            .map(|_| {
                let x = sample_stable_increment(0.5, 1.2, 1, &mut r).unwrap()[0];
                x + sample_compound_poisson(&law, 0.5, &mut r).unwrap().iter().map(|j| j.1[0]).sum::<f64>()
            })
            .collect();
        let dks = ks_two_sample(&coupled, &direct);
        assert!(ks_two_sample_pvalue(dks, 5_000, 5_000) > 0.01, "ks={dks}");
    }

    #[test]
    fn negative_sigma_jumps_are_added() {
        // stable plus a bump of extra jumps: compare with direct summation
        let spec = crate::levy_models::ModelSpec {
            kind: crate::levy_models::ModelKind::Custom,
            d: 1,
            alpha: 1.2,
            m: None,
            cutoff: None,
            sigma: Some(crate::levy_models::SigmaSpec {
                c: 1.0,
                rho: 1.0,
                support: 2.0,
                family: Some("bump".into()),
                amplitude: Some(-1.0),
                scale: None,
            }),
        };
        let model = LevyModel::from_spec(spec).unwrap();
        let law = sigma_part_law(&model, SigmaPart::Minus).unwrap();
        assert!((law.mass() - 4.0).abs() < 1e-12);
        let engine = PathEngine::new(&model, PathConfig::new(1e-3, 0.05)).unwrap();
        let mut r = rng(18);
        let a: Vec<f64> = (0..10_000).map(|_| engine.skeleton(ORIGIN, None, 0.5, &[], &mut r).unwrap().end()[0]).collect();
        let b: Vec<f64> = (0..10_000)
            .map(|_| {
                sample_stable_increment(0.5, 1.2, 1, &mut r).unwrap()[0]
                    + sample_compound_poisson(&law, 0.5, &mut r).unwrap().iter().map(|j| j.1[0]).sum::<f64>()
            })
            .collect();
        let dks = ks_two_sample(&a, &b);
        assert!(ks_two_sample_pvalue(dks, a.len(), b.len()) > 0.01, "ks={dks}");
    }
}
