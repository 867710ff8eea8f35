//! Closed forms and tabulated numerics for the isotropic α-stable process:
//! free transition density, potential kernel, ball Green function, ball
//! Poisson kernel, ball exit law and the Green-function envelopes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{add, dist, norm, random_direction, scale, sub, Domain, Point};
use crate::numerics::interp::UniformTable;
use crate::numerics::quad::{gl_panels, tanh_sinh};
use crate::numerics::special::{bessel_j, riesz_constant, sphere_area};

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("must lie in (0, 2), got {alpha}")))
    }
}

pub fn check_dim(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::invalid("d", format!("dimension must be 1, 2 or 3, got {d}")))
    }
}

/// Validated value of the constant `𝒜(ρ, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableConstant {
    pub rho: f64,
    pub d: usize,
    pub value: f64,
}

impl StableConstant {
    pub fn new(rho: f64, d: usize) -> Result<Self> {
        Ok(Self { rho, d, value: riesz_constant(rho, d)? })
    }
}

/// Normalising constant `𝒜(−α, d)` of the stable Lévy density.
pub fn levy_constant(alpha: f64, d: usize) -> f64 {
    riesz_constant(-alpha, d).expect("-alpha is admissible")
}

/// Stable Lévy density `𝒜(−α,d)|x|^{−d−α}` as a function of the radius.
pub fn stable_levy_density(r: f64, alpha: f64, d: usize) -> f64 {
    levy_constant(alpha, d) * r.powf(-(d as f64) - alpha)
}

/// Potential kernel `𝒜(α,d)|x|^{α−d}`; requires `d > α`.
pub fn potential_kernel(x: Point, alpha: f64, d: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if (d as f64) <= alpha {
        return Err(Error::invalid("alpha", "potential kernel needs d > alpha"));
    }
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(riesz_constant(alpha, d)? * r.powf(alpha - d as f64))
}

/// `1 − sphere_mean_cos(s, d)` without cancellation at small `s`.
pub fn sphere_mean_cos_deficit(s: f64, d: usize) -> f64 {
    if s.abs() >= 1.0 {
        return 1.0 - sphere_mean_cos(s, d);
    }
    // 1 − Γ(d/2) Σ (−1)^k (s/2)^{2k} / (k! Γ(k + d/2))
    let half_d = 0.5 * d as f64;
    let q = 0.25 * s * s;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..30 {
        let kf = k as f64;
        term *= -q / (kf * (kf - 1.0 + half_d));
        sum -= term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Average of `cos(z·w)` over the unit sphere at `|z||w| = s`.
pub fn sphere_mean_cos(s: f64, d: usize) -> f64 {
    match d {
        1 => s.cos(),
        2 => bessel_j(0.0, s),
        3 => {
            if s.abs() < 1e-4 {
                1.0 - s * s / 6.0
            } else {
                s.sin() / s
            }
        }
        _ => {
            let nu = 0.5 * d as f64 - 1.0;
            if s == 0.0 {
                1.0
            } else {
                gamma(nu + 1.0) * (2.0 / s).powf(nu) * bessel_j(nu, s)
            }
        }
    }
}

/// Free transition density `p̃(1, ·)` tabulated in the radius.
#[derive(Debug)]
pub struct StableDensity {
    alpha: f64,
    d: usize,
    table: Option<UniformTable>,
    r_switch: f64,
    at_zero: f64,
}

fn density_cache() -> &'static RwLock<HashMap<(u64, usize), Arc<StableDensity>>> {
    static CACHE: OnceLock<RwLock<HashMap<(u64, usize), Arc<StableDensity>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

impl StableDensity {
    /// Shared, lazily built table for `(α, d)`.
    pub fn get(alpha: f64, d: usize) -> Result<Arc<StableDensity>> {
        check_alpha(alpha)?;
        check_dim(d)?;
        let key = (alpha.to_bits(), d);
        if let Some(t) = density_cache().read().expect("density cache poisoned").get(&key) {
            return Ok(t.clone());
        }
        let built = Arc::new(Self::build(alpha, d)?);
        Ok(density_cache()
            .write()
            .expect("density cache poisoned")
            .entry(key)
            .or_insert(built)
            .clone())
    }

    fn build(alpha: f64, d: usize) -> Result<Self> {
        let df = d as f64;
        let at_zero = sphere_area(d) * gamma(df / alpha) / (alpha * (2.0 * PI).powf(df));
        if alpha == 1.0 {
            return Ok(Self { alpha, d, table: None, r_switch: f64::INFINITY, at_zero });
        }
        let (r_switch, step): (f64, f64) = if alpha < 1.0 { (4.0, 0.001) } else { (10.0, 0.005) };
        let n = (r_switch / step).round() as usize + 1;
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| fourier_radial(alpha, d, i as f64 * step))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            alpha,
            d,
            table: Some(UniformTable::new(0.0, step, values)),
            r_switch,
            at_zero,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `p̃(1, x)` at `|x| = r`.
    pub fn unit(&self, r: f64) -> f64 {
        let r = r.abs();
        if self.alpha == 1.0 {
            let k = 0.5 * (self.d as f64 + 1.0);
            return gamma(k) / PI.powf(k) * (1.0 + r * r).powf(-k);
        }
        if r == 0.0 {
            return self.at_zero;
        }
        if r < self.r_switch {
            self.table.as_ref().expect("table present").eval(r).max(0.0)
        } else {
            large_r_series(self.alpha, self.d, r)
        }
    }

    /// `p̃(t, x)` at `|x| = r` through the scaling relation.
    pub fn density(&self, t: f64, r: f64) -> f64 {
        let s = t.powf(1.0 / self.alpha);
        self.unit(r / s) / s.powi(self.d as i32)
    }

    pub fn density_at(&self, t: f64, x: Point) -> f64 {
        self.density(t, norm(x))
    }

    /// `sup_x p̃(t, x) = p̃(t, 0)`.
    pub fn sup(&self, t: f64) -> f64 {
        self.at_zero * t.powf(-(self.d as f64) / self.alpha)
    }
}

/// `p̃(1, r)` by radial Fourier inversion of `exp(−|z|^α)`.
pub fn fourier_radial(alpha: f64, d: usize, r: f64) -> Result<f64> {
    let df = d as f64;
    let k_max = 41.5f64.powf(1.0 / alpha);
    let integrand = |k: f64| (-k.powf(alpha)).exp() * k.powf(df - 1.0) * sphere_mean_cos(k * r, d);
    let k1 = k_max.min(1.0);
    let head = tanh_sinh(|k, _, _| integrand(k), 0.0, k1, 1e-13)?.value;
    let width = (1.0f64).min(1.2 / r.max(1e-9));
    let panels = ((k_max - k1) / width).ceil().max(1.0) as usize;
    let body = gl_panels(integrand, k1, k_max, panels, 20);
    Ok(sphere_area(d) / (2.0 * PI).powf(df) * (head + body))
}

/// Large-radius expansion of `p̃(1, r)`, summed until the terms stop
/// decreasing.
pub fn large_r_series(alpha: f64, d: usize, r: f64) -> f64 {
    let df = d as f64;
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    let ln_r = r.ln();
    for n in 1..400 {
        let nf = n as f64;
        let s = (nf * PI * alpha / 2.0).sin();
        let ln_mag = statrs::function::gamma::ln_gamma(nf * alpha / 2.0 + 1.0)
            + statrs::function::gamma::ln_gamma((nf * alpha + df) / 2.0)
            - statrs::function::gamma::ln_gamma(nf + 1.0)
            + nf * alpha * 2f64.ln()
            - (nf * alpha + df) * ln_r;
        let mag = ln_mag.exp();
        if mag > last && alpha > 1.0 {
            break;
        }
        last = mag;
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * s * mag;
        if mag < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / PI.powf(df / 2.0 + 1.0)
}

/// Constant of the Blumenthal–Getoor–Ray ball Green function.
fn bgr_constant(alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    gamma(df / 2.0) / (2f64.powf(alpha) * PI.powf(df / 2.0) * gamma(alpha / 2.0).powi(2))
}

/// `∫_0^w s^{α/2−1} (1+s)^{−d/2} ds`.
fn bgr_integral(w: f64, alpha: f64, d: usize) -> f64 {
    let a = 0.5 * alpha;
    let b = 0.5 * (d as f64 - alpha);
    if b > 0.0 {
        return beta(a, b) * beta_reg(a, b, w / (1.0 + w));
    }
    // d = 1 <= α: divergent total integral, evaluated directly
    let half_d = 0.5 * d as f64;
    let w1 = w.min(1.0);
    // s = v^{1/a} removes the endpoint singularity on [0, min(w, 1)]
    let head = gl_panels(
        |v| (1.0 + v.powf(1.0 / a)).powf(-half_d) / a,
        0.0,
        w1.powf(a),
        4,
        20,
    );
    if w <= 1.0 {
        return head;
    }
    // s = e^u on [1, w]
    let lw = w.ln();
    let panels = (lw / 2.0).ceil().max(1.0) as usize;
    head + gl_panels(|u| (a * u).exp() * (1.0 + u.exp()).powf(-half_d), 0.0, lw, panels, 20)
}

fn ball_params(alpha: f64, d: usize) -> Result<()> {
    check_alpha(alpha)?;
    check_dim(d)
}

/// Green function of `B(0, r)` for the isotropic α-stable process.
///
/// Valid for all `α ∈ (0,2)` when `d = 1` and for `d > α` otherwise. Points
/// are relative to the ball centre.
pub fn ball_green(x: Point, y: Point, r: f64, alpha: f64, d: usize) -> Result<f64> {
    ball_params(alpha, d)?;
    if (d as f64) <= alpha && d != 1 {
        return Err(Error::invalid("alpha", "ball Green function needs d > alpha or d = 1"));
    }
    let xy = dist(x, y);
    if xy == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx >= r || ny >= r {
        return Ok(0.0);
    }
    Ok(ball_green_unchecked(xy, (r - nx) * (r + nx), (r - ny) * (r + ny), r, alpha, d))
}

/// Ball Green function from `|x−y|` and `r² − |x|²`, `r² − |y|²`.
#[inline]
pub fn ball_green_unchecked(xy: f64, gap_x: f64, gap_y: f64, r: f64, alpha: f64, d: usize) -> f64 {
    let w = gap_x * gap_y / (r * r * xy * xy);
    bgr_constant(alpha, d) * xy.powf(alpha - d as f64) * bgr_integral(w, alpha, d)
}

/// Ball Poisson kernel `C ((r²−|x|²)/(|z|²−r²))^{α/2} |x−z|^{−d}`.
pub fn ball_poisson_kernel(x: Point, z: Point, r: f64, alpha: f64, d: usize) -> Result<f64> {
    ball_params(alpha, d)?;
    let (nx, nz) = (norm(x), norm(z));
    if nx >= r {
        return Err(Error::OutsideDomain(format!("{x:?}")));
    }
    if nz <= r {
        return Ok(0.0);
    }
    let df = d as f64;
    let c = gamma(df / 2.0) * PI.powf(-df / 2.0 - 1.0) * (PI * alpha / 2.0).sin();
    let ratio = ((r - nx) * (r + nx)) / ((nz - r) * (nz + r));
    Ok(c * ratio.powf(alpha / 2.0) * dist(x, z).powf(-df))
}

/// Mean exit time `E^x τ` of `B(0, r)`.
pub fn ball_mean_exit(x: Point, r: f64, alpha: f64, d: usize) -> Result<f64> {
    ball_params(alpha, d)?;
    let nx = norm(x);
    if nx >= r {
        return Ok(0.0);
    }
    Ok(mean_exit_constant(alpha, d) * ((r - nx) * (r + nx)).powf(alpha / 2.0))
}

pub fn mean_exit_constant(alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    gamma(df / 2.0) / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((df + alpha) / 2.0))
}

/// CDF of `|X_τ|` for the walk started at the centre of `B(0, r)`.
pub fn ball_exit_radial_cdf(rho: f64, r: f64, alpha: f64) -> f64 {
    if rho <= r {
        return 0.0;
    }
    // 1 − r²/ρ² ~ Beta(1 − α/2, α/2)
    beta_reg(1.0 - alpha / 2.0, alpha / 2.0, 1.0 - (r / rho).powi(2))
}

/// Sampler for the exit position of `B(center, r)`.
#[derive(Debug, Clone)]
pub struct BallExitSampler {
    alpha: f64,
    d: usize,
    radial: Beta<f64>,
}

impl BallExitSampler {
    pub fn new(alpha: f64, d: usize) -> Result<Self> {
        ball_params(alpha, d)?;
        let radial = Beta::new(alpha / 2.0, 1.0 - alpha / 2.0)
            .map_err(|e| Error::invalid("alpha", e.to_string()))?;
        Ok(Self { alpha, d, radial })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Exit position of `B(center, r)` started at the centre: inverse
    /// radial law plus a uniform direction.
    pub fn from_center<R: Rng + ?Sized>(&self, center: Point, r: f64, rng: &mut R) -> Point {
        // q = r²/|Z|² ~ Beta(α/2, 1 − α/2)
        let q: f64 = self.radial.sample(rng).max(f64::MIN_POSITIVE);
        let rho = r / q.sqrt();
        add(center, scale(random_direction(self.d, rng), rho))
    }

    /// Exit position of `B(center, r)` from an arbitrary interior point by
    /// chaining exits of maximal inscribed centred balls.
    pub fn sample<R: Rng + ?Sized>(&self, center: Point, r: f64, x: Point, rng: &mut R) -> Point {
        let mut pos = x;
        loop {
            let rel = dist(pos, center);
            if rel >= r {
                return pos;
            }
            let inner = r - rel;
            pos = self.from_center(pos, inner, rng);
        }
    }
}

/// Convenience wrapper around [`BallExitSampler::sample`].
pub fn ball_exit_sample<R: Rng + ?Sized>(x: Point, r: f64, alpha: f64, d: usize, rng: &mut R) -> Result<Point> {
    if norm(x) >= r {
        return Err(Error::OutsideDomain(format!("{x:?}")));
    }
    Ok(BallExitSampler::new(alpha, d)?.sample(crate::geometry::ORIGIN, r, x, rng))
}

/// Source of stable Green-function values on a fixed domain.
pub trait GreenFunction: Sync {
    fn green(&self, x: Point, y: Point) -> f64;
}

/// Closed-form Green function of a ball (or interval).
#[derive(Debug, Clone, Copy)]
pub struct BallGreen {
    pub center: Point,
    pub radius: f64,
    pub alpha: f64,
    pub d: usize,
}

impl BallGreen {
    pub fn new(domain: &Domain, alpha: f64) -> Result<Self> {
        let (center, radius) = domain
            .as_ball()
            .ok_or_else(|| Error::invalid("domain", "closed-form Green function needs a ball or interval"))?;
        ball_params(alpha, domain.dim())?;
        Ok(Self { center, radius, alpha, d: domain.dim() })
    }
}

impl GreenFunction for BallGreen {
    fn green(&self, x: Point, y: Point) -> f64 {
        ball_green(sub(x, self.center), sub(y, self.center), self.radius, self.alpha, self.d).unwrap_or(f64::INFINITY)
    }
}

/// Capped Green function `G̃_D(·, x0) ∧ 𝒜(α,d) r0^{α−d}` with a
/// concurrent memo table.
pub struct PhiTilde<'a, G: GreenFunction> {
    domain: &'a Domain,
    green: &'a G,
    cap: f64,
    cache: RwLock<HashMap<[u64; 3], f64>>,
}

impl<'a, G: GreenFunction> PhiTilde<'a, G> {
    pub fn new(domain: &'a Domain, green: &'a G, alpha: f64) -> Result<Self> {
        let d = domain.dim();
        if (d as f64) <= alpha {
            return Err(Error::invalid("alpha", "capped Green function needs d > alpha"));
        }
        let cap = riesz_constant(alpha, d)? * domain.r0().powf(alpha - d as f64);
        Ok(Self { domain, green, cap, cache: RwLock::new(HashMap::new()) })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn value(&self, x: Point) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain(format!("{x:?}")));
        }
        let key = [x[0].to_bits(), x[1].to_bits(), x[2].to_bits()];
        if let Some(v) = self.cache.read().expect("phi cache poisoned").get(&key) {
            return Ok(*v);
        }
        let x0 = self.domain.reference_points().x0;
        let v = if dist(x, x0) == 0.0 { self.cap } else { self.green.green(x, x0).min(self.cap) };
        self.cache.write().expect("phi cache poisoned").insert(key, v);
        Ok(v)
    }
}

/// Which envelope formula produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeRegime {
    /// `φ(x)φ(y)/φ(A)² |x−y|^{α−d}` for `d > α`.
    PhiRatio,
    /// `log((δδ')^{1/2}/|x−y| + 1)` for `d = α = 1`.
    Logarithmic,
    /// `(δδ')^{(α−1)/2}` branch of the one-dimensional `α > 1` form.
    Plateau,
    /// `(δδ')^{α/2}/|x−y|` branch of the one-dimensional `α > 1` form.
    BoundaryDecay,
}

/// Constant-free envelope value; two-sided bounds follow as
/// `[value / c, value · c]` for an unknown `c ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GreenEnvelope {
    pub value: f64,
    pub regime: EnvelopeRegime,
    pub constant_free: bool,
}

impl GreenEnvelope {
    pub fn lower(&self, c: f64) -> f64 {
        self.value / c
    }

    pub fn upper(&self, c: f64) -> f64 {
        self.value * c
    }
}

/// One-dimensional envelope for `α ≥ 1` from boundary distances.
pub fn one_dim_envelope(delta_x: f64, delta_y: f64, gap: f64, alpha: f64) -> Result<GreenEnvelope> {
    if gap <= 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let dd = delta_x * delta_y;
    if alpha == 1.0 {
        return Ok(GreenEnvelope {
            value: (dd.sqrt() / gap + 1.0).ln(),
            regime: EnvelopeRegime::Logarithmic,
            constant_free: true,
        });
    }
    if alpha < 1.0 {
        return Err(Error::invalid("alpha", "one-dimensional form needs alpha >= 1"));
    }
    let plateau = dd.powf((alpha - 1.0) / 2.0);
    let decay = dd.powf(alpha / 2.0) / gap;
    let (value, regime) = if decay <= plateau {
        (decay, EnvelopeRegime::BoundaryDecay)
    } else {
        (plateau, EnvelopeRegime::Plateau)
    };
    Ok(GreenEnvelope { value, regime, constant_free: true })
}

/// Envelope of `G̃_D(x, y)`: the capped-Green ratio form when `d > α`,
/// the one-dimensional forms when `d = 1 ≤ α`.
pub fn green_envelope<G: GreenFunction>(
    domain: &Domain,
    phi: Option<&PhiTilde<'_, G>>,
    alpha: f64,
    x: Point,
    y: Point,
) -> Result<GreenEnvelope> {
    let d = domain.dim();
    let gap = dist(x, y);
    if gap == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    if !domain.contains(x) || !domain.contains(y) {
        return Err(Error::OutsideDomain(format!("{x:?} / {y:?}")));
    }
    if (d as f64) > alpha {
        let phi = phi.ok_or_else(|| Error::invalid("phi", "capped Green function required for d > alpha"))?;
        let a = domain.interpolation_point(x, y)?;
        let pa = phi.value(a)?;
        let value = phi.value(x)? * phi.value(y)? / (pa * pa) * gap.powf(alpha - d as f64);
        return Ok(GreenEnvelope { value, regime: EnvelopeRegime::PhiRatio, constant_free: true });
    }
    one_dim_envelope(domain.dist_to_boundary(x), domain.dist_to_boundary(y), gap, alpha)
}
