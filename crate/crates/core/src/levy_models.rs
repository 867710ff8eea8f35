//! Lévy models: the isotropic stable process and its perturbations by a
//! finite signed density `σ = ν̃ − ν^Y`.
//!
//! All densities are radial, so every model is symmetric. The relativistic
//! density uses the subordination identity
//! `ν^Y(x) = ν̃(x) · E[exp(−m^{2/α}|x|²/(4U))]`, `U ~ Gamma((d+α)/2, 1)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::geometry::{norm, Point};
use crate::numerics::interp::UniformTable;
use crate::numerics::quad::{breakpoints, gl_panels, tanh_sinh, tanh_sinh_breaks};
use crate::numerics::special::{ball_volume, sphere_area};
use crate::stable_core::{check_alpha, check_dim, levy_constant, sphere_mean_cos_deficit};

/// `1 − E[exp(−c/U)]` and `E[exp(−c/U)]` for `U ~ Gamma(k, 1)`, tabulated
/// in `ln c`.
#[derive(Debug)]
pub struct TemperedRatio {
    k: f64,
    ln_deficit: UniformTable,
    ln_ratio: UniformTable,
    ln_c0: f64,
    ln_c1: f64,
}

const LN_C_MIN: f64 = -32.236_191_301_916_64; // ln 1e-14
const LN_C_MAX: f64 = 8.294_049_640_102_028; // ln 4000

fn tempered_cache() -> &'static RwLock<HashMap<u64, Arc<TemperedRatio>>> {
    static CACHE: OnceLock<RwLock<HashMap<u64, Arc<TemperedRatio>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

impl TemperedRatio {
    pub fn get(k: f64) -> Arc<TemperedRatio> {
        if let Some(t) = tempered_cache().read().expect("cache poisoned").get(&k.to_bits()) {
            return t.clone();
        }
        let built = Arc::new(Self::build(k));
        tempered_cache().write().expect("cache poisoned").entry(k.to_bits()).or_insert(built).clone()
    }

    /// Both expectations by the trapezoidal rule in `v = ln u`, which is
    /// spectrally accurate for these doubly exponentially decaying integrands.
    pub fn direct(k: f64, c: f64) -> (f64, f64) {
        let v_lo = -45.0 / k;
        let v_hi = if c > 1.0 { 0.5 * c.ln() + 5.0 } else { 5.0 };
        let step = 0.02;
        let n = ((v_hi - v_lo) / step).ceil() as usize;
        let ln_gk = ln_gamma(k);
        let (mut deficit, mut ratio) = (0.0, 0.0);
        for i in 0..=n {
            let v = v_lo + i as f64 * step;
            let base = k * v - v.exp() - ln_gk;
            let x = c * (-v).exp();
            deficit += (base.exp()) * (-(-x).exp_m1());
            ratio += (base - x).exp();
        }
        (deficit * step, ratio * step)
    }

    fn build(k: f64) -> Self {
        let n = 4001;
        let h = (LN_C_MAX - LN_C_MIN) / (n - 1) as f64;
        let mut ld = Vec::with_capacity(n);
        let mut lr = Vec::with_capacity(n);
        for i in 0..n {
            let c = (LN_C_MIN + i as f64 * h).exp();
            let (d, r) = Self::direct(k, c);
            ld.push(d.max(1e-300).ln());
            lr.push(r.max(1e-300).ln());
        }
        Self {
            k,
            ln_deficit: UniformTable::new(LN_C_MIN, h, ld),
            ln_ratio: UniformTable::new(LN_C_MIN, h, lr),
            ln_c0: LN_C_MIN,
            ln_c1: LN_C_MIN + h,
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `1 − E[exp(−c/U)]`.
    pub fn deficit(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        let lc = c.ln();
        if lc >= LN_C_MAX {
            return 1.0;
        }
        if lc < self.ln_c0 {
            // power-law extrapolation from the first two nodes
            let v = self.ln_deficit.values();
            let slope = (v[1] - v[0]) / (self.ln_c1 - self.ln_c0);
            return (v[0] + slope * (lc - self.ln_c0)).exp();
        }
        self.ln_deficit.eval(lc).exp().min(1.0)
    }

    /// `E[exp(−c/U)]`.
    pub fn ratio(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 1.0;
        }
        let lc = c.ln();
        if lc >= LN_C_MAX {
            return 0.0;
        }
        if lc < -4.0 {
            return 1.0 - self.deficit(c);
        }
        self.ln_ratio.eval(lc).exp().min(1.0)
    }
}

/// Radial isotropic density supplied by the caller.
pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The perturbation `σ = ν̃ − ν^Y` as a radial density.
#[derive(Clone)]
pub enum Sigma {
    Zero,
    /// `ν̃(1 − E[exp(−M|x|²/(4U))])`, `M = m^{2/α}`.
    Relativistic { m: f64, big_m: f64, table: Arc<TemperedRatio> },
    /// `ν̃ 1_{|x| > cutoff}`.
    Truncated { cutoff: f64 },
    /// `c |x|^{ρ−d} 1_{|x| < support}`.
    Power { c: f64, rho: f64, support: f64 },
    /// `amplitude · 1_{|x| < radius}`.
    Bump { amplitude: f64, radius: f64 },
    /// `mass · N(0, scale² I)` density.
    Gaussian { mass: f64, scale: f64 },
    /// Caller-supplied radial density with finite support.
    Callback { f: RadialFn, support: f64 },
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Zero => write!(f, "Zero"),
            Sigma::Relativistic { m, .. } => write!(f, "Relativistic {{ m: {m} }}"),
            Sigma::Truncated { cutoff } => write!(f, "Truncated {{ cutoff: {cutoff} }}"),
            Sigma::Power { c, rho, support } => write!(f, "Power {{ c: {c}, rho: {rho}, support: {support} }}"),
            Sigma::Bump { amplitude, radius } => write!(f, "Bump {{ amplitude: {amplitude}, radius: {radius} }}"),
            Sigma::Gaussian { mass, scale } => write!(f, "Gaussian {{ mass: {mass}, scale: {scale} }}"),
            Sigma::Callback { support, .. } => write!(f, "Callback {{ support: {support} }}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Stable,
    Relativistic,
    Truncated,
    Custom,
}

/// Declared bound `|σ(x)| ≤ c|x|^{ρ−d}` on `0 < |x| ≤ 1` and support radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEnvelope {
    pub c: f64,
    pub rho: f64,
    pub support: f64,
}

/// JSON form of the perturbation of a custom model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub c: f64,
    pub rho: f64,
    pub support: f64,
    /// `power` (default): `σ = c|x|^{ρ−d}` inside the support; `bump`:
    /// constant `amplitude` inside the support; `gaussian`: `amplitude`
    /// times a centred normal density of standard deviation `scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d: usize,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaStats {
    /// Signed total mass `σ(R^d)`.
    pub m: f64,
    /// Total variation `|σ|(R^d)`.
    pub big_m: f64,
    pub rho: f64,
    pub c: f64,
    pub nonneg: bool,
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    kind: ModelKind,
    d: usize,
    alpha: f64,
    levy_const: f64,
    sigma: Sigma,
    envelope: SigmaEnvelope,
    spec: ModelSpec,
}

impl LevyModel {
    pub fn stable(d: usize, alpha: f64) -> Result<Self> {
        Self::from_spec(ModelSpec { kind: ModelKind::Stable, d, alpha, m: None, cutoff: None, sigma: None })
    }

    pub fn relativistic(d: usize, alpha: f64, m: f64) -> Result<Self> {
        Self::from_spec(ModelSpec { kind: ModelKind::Relativistic, d, alpha, m: Some(m), cutoff: None, sigma: None })
    }

    pub fn truncated(d: usize, alpha: f64, cutoff: f64) -> Result<Self> {
        Self::from_spec(ModelSpec {
            kind: ModelKind::Truncated,
            d,
            alpha,
            m: None,
            cutoff: Some(cutoff),
            sigma: None,
        })
    }

    /// Stable model perturbed by an arbitrary radial `σ` with finite support.
    pub fn custom_callback(d: usize, alpha: f64, f: RadialFn, envelope: SigmaEnvelope) -> Result<Self> {
        check_alpha(alpha)?;
        check_dim(d)?;
        if !(envelope.support.is_finite() && envelope.support > 0.0) {
            return Err(Error::invalid("sigma.support", "callback densities need a finite positive support"));
        }
        let spec = ModelSpec {
            kind: ModelKind::Custom,
            d,
            alpha,
            m: None,
            cutoff: None,
            sigma: Some(SigmaSpec {
                c: envelope.c,
                rho: envelope.rho,
                support: envelope.support,
                family: Some("callback".into()),
                amplitude: None,
                scale: None,
            }),
        };
        let model = Self {
            kind: ModelKind::Custom,
            d,
            alpha,
            levy_const: levy_constant(alpha, d),
            sigma: Sigma::Callback { f, support: envelope.support },
            envelope,
            spec,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        check_alpha(spec.alpha)?;
        check_dim(spec.d)?;
        let (d, alpha) = (spec.d, spec.alpha);
        let df = d as f64;
        let levy_const = levy_constant(alpha, d);
        let (sigma, envelope) = match spec.kind {
            ModelKind::Stable => (Sigma::Zero, SigmaEnvelope { c: 0.0, rho: df, support: 0.0 }),
            ModelKind::Relativistic => {
                let m = spec.m.ok_or_else(|| Error::invalid("m", "relativistic model needs a mass"))?;
                if !(m.is_finite() && m >= 0.0) {
                    return Err(Error::invalid("m", "mass must be nonnegative"));
                }
                if m == 0.0 {
                    (Sigma::Zero, SigmaEnvelope { c: 0.0, rho: df, support: 0.0 })
                } else {
                    let k = 0.5 * (df + alpha);
                    let big_m = m.powf(2.0 / alpha);
                    let (s, cs) = tempered_exponent(k, alpha);
                    let env = SigmaEnvelope {
                        c: levy_const * cs * (big_m / 4.0).powf(s),
                        rho: 2.0 * s - alpha,
                        support: f64::INFINITY,
                    };
                    (Sigma::Relativistic { m, big_m, table: TemperedRatio::get(k) }, env)
                }
            }
            ModelKind::Truncated => {
                let cutoff = spec.cutoff.ok_or_else(|| Error::invalid("cutoff", "truncated model needs a cutoff"))?;
                if !(cutoff.is_finite() && cutoff > 0.0) {
                    return Err(Error::invalid("cutoff", "must be positive"));
                }
                let c = if cutoff >= 1.0 { 0.0 } else { levy_const * cutoff.powf(-df - alpha) };
                (Sigma::Truncated { cutoff }, SigmaEnvelope { c, rho: df, support: f64::INFINITY })
            }
            ModelKind::Custom => {
                let s = spec.sigma.as_ref().ok_or_else(|| Error::invalid("sigma", "custom model needs sigma"))?;
                for (name, v) in [("sigma.c", s.c), ("sigma.rho", s.rho), ("sigma.support", s.support)] {
                    if !v.is_finite() {
                        return Err(Error::invalid(name, "must be finite"));
                    }
                }
                if s.rho <= 0.0 {
                    return Err(Error::invalid("sigma.rho", "envelope exponent must be positive"));
                }
                if s.c < 0.0 {
                    return Err(Error::invalid("sigma.c", "envelope constant must be nonnegative"));
                }
                if s.support <= 0.0 {
                    return Err(Error::invalid("sigma.support", "must be positive"));
                }
                let env = SigmaEnvelope { c: s.c, rho: s.rho, support: s.support };
                let sigma = match s.family.as_deref().unwrap_or("power") {
                    "power" => Sigma::Power { c: s.amplitude.unwrap_or(s.c), rho: s.rho, support: s.support },
                    "bump" => Sigma::Bump {
                        amplitude: s
                            .amplitude
                            .ok_or_else(|| Error::invalid("sigma.amplitude", "bump family needs an amplitude"))?,
                        radius: s.support,
                    },
                    "gaussian" => {
                        let scale = s.scale.ok_or_else(|| Error::invalid("sigma.scale", "gaussian family needs a scale"))?;
                        if !(scale.is_finite() && scale > 0.0) {
                            return Err(Error::invalid("sigma.scale", "must be positive"));
                        }
                        Sigma::Gaussian {
                            mass: s
                                .amplitude
                                .ok_or_else(|| Error::invalid("sigma.amplitude", "gaussian family needs an amplitude"))?,
                            scale,
                        }
                    }
                    other => {
                        return Err(Error::invalid("sigma.family", format!("unknown family `{other}`")));
                    }
                };
                (sigma, env)
            }
        };
        let model = Self { kind: spec.kind, d, alpha, levy_const, sigma, envelope, spec };
        model.validate()?;
        Ok(model)
    }

    /// Checks `ν^Y ≥ 0` and the declared envelope on a radial grid.
    fn validate(&self) -> Result<()> {
        for r in self.radial_grid() {
            let s = self.sigma_radial(r);
            if !s.is_finite() {
                return Err(Error::invalid("sigma", format!("density is not finite at radius {r:e}")));
            }
            let nu = self.stable_radial(r);
            if s > nu * (1.0 + 1e-9) + 1e-300 {
                return Err(Error::invalid(
                    "sigma",
                    format!("perturbation exceeds the stable density at radius {r:e}: nu^Y would be negative"),
                ));
            }
        }
        self.check_envelope()
    }

    fn radial_grid(&self) -> Vec<f64> {
        let mut r_max: f64 = 1e3;
        let s = self.support();
        if s.is_finite() {
            r_max = r_max.max(s * 1.01);
        }
        let n = 400;
        let (l0, l1) = ((1e-6f64).ln(), r_max.ln());
        let mut g: Vec<f64> = (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect();
        if s.is_finite() {
            g.push(s * (1.0 - 1e-9));
        }
        g
    }

    /// Verifies `|σ(r)| r^{d−ρ} ≤ c` on a log-spaced grid of `(0, 1]`.
    pub fn check_envelope(&self) -> Result<()> {
        let df = self.d as f64;
        let n = 200;
        for i in 0..n {
            let r = (1e-6f64).powf(1.0 - i as f64 / (n - 1) as f64);
            let v = self.sigma_radial(r).abs() * r.powf(df - self.envelope.rho);
            if v > self.envelope.c * (1.0 + 1e-9) + 1e-300 {
                return Err(Error::EnvelopeViolation { radius: r, value: v, bound: self.envelope.c });
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> &Sigma {
        &self.sigma
    }

    pub fn envelope(&self) -> SigmaEnvelope {
        self.envelope
    }

    pub fn is_stable(&self) -> bool {
        matches!(self.sigma, Sigma::Zero)
    }

    /// Radius beyond which `σ` vanishes (infinite for tails).
    pub fn support(&self) -> f64 {
        match &self.sigma {
            Sigma::Zero => 0.0,
            Sigma::Relativistic { .. } | Sigma::Truncated { .. } | Sigma::Gaussian { .. } => f64::INFINITY,
            Sigma::Power { support, .. } => *support,
            Sigma::Bump { radius, .. } => *radius,
            Sigma::Callback { support, .. } => *support,
        }
    }

    /// Stable Lévy density at radius `r`.
    #[inline]
    pub fn stable_radial(&self, r: f64) -> f64 {
        self.levy_const * r.powf(-(self.d as f64) - self.alpha)
    }

    /// `σ` at radius `r > 0`.
    pub fn sigma_radial(&self, r: f64) -> f64 {
        match &self.sigma {
            Sigma::Zero => 0.0,
            Sigma::Relativistic { big_m, table, .. } => self.stable_radial(r) * table.deficit(big_m * r * r / 4.0),
            Sigma::Truncated { cutoff } => {
                if r > *cutoff {
                    self.stable_radial(r)
                } else {
                    0.0
                }
            }
            Sigma::Power { c, rho, support } => {
                if r < *support {
                    c * r.powf(rho - self.d as f64)
                } else {
                    0.0
                }
            }
            Sigma::Bump { amplitude, radius } => {
                if r < *radius {
                    *amplitude
                } else {
                    0.0
                }
            }
            Sigma::Gaussian { mass, scale } => {
                let s2 = scale * scale;
                mass * (2.0 * PI * s2).powf(-0.5 * self.d as f64) * (-r * r / (2.0 * s2)).exp()
            }
            Sigma::Callback { f, support } => {
                if r < *support {
                    f(r)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sigma_at(&self, x: Point) -> f64 {
        self.sigma_radial(norm(x))
    }

    /// `ν^Y` at radius `r > 0`.
    pub fn levy_radial(&self, r: f64) -> f64 {
        match &self.sigma {
            Sigma::Relativistic { big_m, table, .. } => self.stable_radial(r) * table.ratio(big_m * r * r / 4.0),
            Sigma::Truncated { cutoff } => {
                if r > *cutoff {
                    0.0
                } else {
                    self.stable_radial(r)
                }
            }
            _ => (self.stable_radial(r) - self.sigma_radial(r)).max(0.0),
        }
    }

    /// Lévy density `ν^Y(x)`; the origin is rejected.
    pub fn levy_density(&self, x: Point) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::invalid("x", "Lévy density is not defined at the origin"));
        }
        Ok(self.levy_radial(r))
    }

    /// Probability that a stable jump of radius `r` is also a jump of `Y`:
    /// `min(1, ν^Y/ν̃)`.
    pub fn keep_probability(&self, r: f64) -> f64 {
        match &self.sigma {
            Sigma::Zero => 1.0,
            Sigma::Relativistic { big_m, table, .. } => table.ratio(big_m * r * r / 4.0),
            Sigma::Truncated { cutoff } => {
                if r > *cutoff {
                    0.0
                } else {
                    1.0
                }
            }
            _ => {
                let s = self.sigma_radial(r);
                if s <= 0.0 {
                    1.0
                } else {
                    (1.0 - s / self.stable_radial(r)).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// `∫ f(r) S_d r^{d−1} dr` over `(0, ∞)` with breakpoints at the
    /// support features of `σ`.
    fn radial_mass<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> Result<f64> {
        let area = sphere_area(self.d);
        let dm1 = self.d as i32 - 1;
        let g = |r: f64| area * r.powi(dm1) * f(r);
        let mut cuts = vec![1.0];
        match &self.sigma {
            Sigma::Truncated { cutoff } => cuts.push(*cutoff),
            Sigma::Gaussian { scale, .. } => cuts.extend([*scale, 4.0 * scale, 8.0 * scale]),
            _ => {}
        }
        let s = self.support();
        if s.is_finite() {
            cuts.push(s);
        }
        let r_top = cuts.iter().cloned().fold(1.0, f64::max);
        let b = breakpoints(0.0, r_top, &cuts);
        let head = tanh_sinh_breaks(|r, _, _| g(r), &b, tol)?.value;
        if s.is_finite() && s <= r_top {
            return Ok(head);
        }
        let tail = tanh_sinh(|u, _, _| g(1.0 / u) / (u * u), 0.0, 1.0 / r_top, tol)?.value;
        Ok(head + tail)
    }

    /// Mass, total variation, envelope and sign of `σ`.
    pub fn sigma_stats(&self) -> Result<SigmaStats> {
        self.check_envelope()?;
        let m = self.radial_mass(|r| self.sigma_radial(r), 1e-11)?;
        let big_m = self.radial_mass(|r| self.sigma_radial(r).abs(), 1e-11)?;
        let nonneg = self.radial_grid().into_iter().all(|r| self.sigma_radial(r) >= 0.0);
        Ok(SigmaStats { m, big_m, rho: self.envelope.rho, c: self.envelope.c, nonneg })
    }

    /// Mass of the positive and negative parts of `σ`.
    pub fn sigma_parts_mass(&self) -> Result<(f64, f64)> {
        let plus = self.radial_mass(|r| self.sigma_radial(r).max(0.0), 1e-11)?;
        let minus = self.radial_mass(|r| (-self.sigma_radial(r)).max(0.0), 1e-11)?;
        Ok((plus, minus))
    }

    /// Closed-form masses where available, used as cross-checks.
    pub fn sigma_mass_closed_form(&self) -> Option<f64> {
        let df = self.d as f64;
        match &self.sigma {
            Sigma::Zero => Some(0.0),
            Sigma::Relativistic { m, .. } => Some(*m),
            Sigma::Truncated { cutoff } => {
                Some(self.levy_const * sphere_area(self.d) * cutoff.powf(-self.alpha) / self.alpha)
            }
            Sigma::Power { c, rho, support } => Some(c * sphere_area(self.d) * support.powf(*rho) / rho),
            Sigma::Bump { amplitude, radius } => Some(amplitude * ball_volume(self.d) * radius.powf(df)),
            Sigma::Gaussian { mass, .. } => Some(*mass),
            Sigma::Callback { .. } => None,
        }
    }

    /// `∫_{|w|<ε} |w|² min(ν̃, ν^Y)(w) dw`: variance rate (summed over
    /// coordinates) of the small jumps kept from the stable part.
    pub fn small_jump_variance(&self, eps: f64) -> Result<f64> {
        let area = sphere_area(self.d);
        let alpha = self.alpha;
        let full = self.levy_const * area * eps.powf(2.0 - alpha) / (2.0 - alpha);
        if self.is_stable() {
            return Ok(full);
        }
        let dm1 = self.d as i32 + 1;
        let removed = tanh_sinh(
            |r, _, _| area * r.powi(dm1) * self.sigma_radial(r).max(0.0),
            0.0,
            eps,
            1e-10,
        )?
        .value;
        Ok((full - removed).max(0.0))
    }

    /// Characteristic exponent `ψ(z)` with `E e^{i z·Y_t} = e^{−tψ(z)}`.
    pub fn char_exponent(&self, z: Point) -> Result<f64> {
        self.char_exponent_with(z, 20)
    }

    /// As [`char_exponent`](Self::char_exponent) with a chosen Gauss rule
    /// order for the oscillatory radial integral.
    pub fn char_exponent_with(&self, z: Point, order: usize) -> Result<f64> {
        let s = norm(z);
        let stable = s.powf(self.alpha);
        match &self.sigma {
            Sigma::Zero => Ok(stable),
            Sigma::Relativistic { m, big_m, .. } => {
                Ok((s * s + big_m).powf(self.alpha / 2.0) - m)
            }
            _ => {
                if s == 0.0 {
                    return Ok(0.0);
                }
                let removed = self.sigma_fourier_deficit(s, order)?;
                Ok((stable - removed).max(0.0))
            }
        }
    }

    /// Fourier transform `σ̂(k) = ∫ cos(z·w) σ(w) dw` at `|z| = k`, given the
    /// mass `σ(R^d)`.
    pub fn sigma_transform(&self, k: f64, mass: f64) -> Result<f64> {
        match &self.sigma {
            Sigma::Zero => Ok(0.0),
            Sigma::Gaussian { mass, scale } => Ok(mass * (-0.5 * k * k * scale * scale).exp()),
            Sigma::Relativistic { m, big_m, .. } => {
                Ok(m - (k.powf(self.alpha) - ((k * k + big_m).powf(self.alpha / 2.0) - m)))
            }
            _ => {
                if k == 0.0 {
                    return Ok(mass);
                }
                Ok(mass - self.sigma_fourier_deficit(k, 20)?)
            }
        }
    }

    /// `∫ (1 − cos z·w) σ(w) dw` at `|z| = s`.
    fn sigma_fourier_deficit(&self, s: f64, order: usize) -> Result<f64> {
        if let Sigma::Truncated { cutoff } = &self.sigma {
            // ψ̃ minus the exponent of the kept jumps on |w| < cutoff
            let kept = self.oscillatory_radial(|r| self.stable_radial(r), s, *cutoff, order)?;
            return Ok(s.powf(self.alpha) - kept);
        }
        let upper = match &self.sigma {
            Sigma::Gaussian { scale, .. } => 12.0 * scale,
            _ => self.support(),
        };
        if !upper.is_finite() {
            return Err(Error::invalid("sigma", "no quadrature rule for this tail"));
        }
        self.oscillatory_radial(|r| self.sigma_radial(r), s, upper, order)
    }

    /// `∫_{|w|<R} (1 − cos z·w) f(|w|) dw` at `|z| = s`.
    fn oscillatory_radial<F: Fn(f64) -> f64>(&self, f: F, s: f64, upper: f64, order: usize) -> Result<f64> {
        let d = self.d;
        let area = sphere_area(d);
        let dm1 = d as i32 - 1;
        let g = |r: f64| area * r.powi(dm1) * f(r) * sphere_mean_cos_deficit(s * r, d);
        let width = (0.5f64).min(1.0 / s);
        let r0 = upper.min(width);
        let head = tanh_sinh(|r, _, _| g(r), 0.0, r0, 1e-12)?.value;
        let panels = ((upper - r0) / width).ceil() as usize;
        let body = if panels > 0 { gl_panels(g, r0, upper, panels, order) } else { 0.0 };
        let total = head + body;
        if !total.is_finite() {
            return Err(Error::Quadrature { error: f64::INFINITY, target: 1e-12 });
        }
        Ok(total)
    }
}

/// Exponent `s ∈ (α/2, min(1, k))` and constant `Γ(k−s)/Γ(k)` of the bound
/// `1 − E[exp(−c/U)] ≤ (Γ(k−s)/Γ(k)) c^s`.
pub fn tempered_exponent(k: f64, alpha: f64) -> (f64, f64) {
    let s = if k > 1.0 { 1.0 } else { 0.5 * (0.5 * alpha + k) };
    (s, gamma(k - s) / gamma(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point;
    use crate::numerics::special::bessel_k;
    use proptest::prelude::*;

    #[test]
    fn stable_levy_density_cauchy() {
        let m = LevyModel::stable(1, 1.0).unwrap();
        // 𝒜(−1, 1) = 1/π, evaluated independently
        let a = gamma(1.0) / (PI.sqrt() * 0.5 * gamma(-0.5).abs());
        assert!((a - 1.0 / PI).abs() < 1e-15);
        assert!((m.levy_density(point(&[2.0])).unwrap() - a / 4.0).abs() < 1e-15);
        assert!(m.levy_density(point(&[0.0])).is_err());
    }

    #[test]
    fn truncated_density_vanishes_outside() {
        let m = LevyModel::truncated(2, 1.5, 1.0).unwrap();
        assert_eq!(m.levy_density(point(&[2.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn relativistic_small_mass_limit() {
        let s = LevyModel::stable(2, 1.3).unwrap();
        let r = LevyModel::relativistic(2, 1.3, 1e-9).unwrap();
        for &x in &[0.01, 0.5, 3.0] {
            let a = s.levy_density(point(&[x, 0.0])).unwrap();
            let b = r.levy_density(point(&[x, 0.0])).unwrap();
            assert!((a / b - 1.0).abs() < 1e-6);
        }
        let zero = LevyModel::relativistic(2, 1.3, 0.0).unwrap();
        assert!(zero.is_stable());
    }

    #[test]
    fn tempered_ratio_matches_bessel_form() {
        // E[exp(-c/U)] = 2 c^{k/2} K_k(2 sqrt c) / Γ(k)
        for &k in &[0.6, 1.1, 1.75] {
            let t = TemperedRatio::get(k);
            for &c in &[1e-3f64, 0.1, 1.0, 7.0, 40.0] {
                let exact = 2.0 * c.powf(k / 2.0) * bessel_k(k, 2.0 * c.sqrt()) / gamma(k);
                assert!((t.ratio(c) / exact - 1.0).abs() < 1e-7, "k={k} c={c}: {} vs {exact}", t.ratio(c));
                assert!((t.ratio(c) + t.deficit(c) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn char_exponent_trivial_values() {
        let s = LevyModel::stable(1, 1.5).unwrap();
        assert_eq!(s.char_exponent(point(&[1.0])).unwrap(), 1.0);
        let r = LevyModel::relativistic(3, 1.0, 1.0).unwrap();
        assert_eq!(r.char_exponent(point(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn relativistic_exponent_matches_levy_khintchine() {
        // closed form against the quadrature of ∫(1−cos)ν^Y
        for d in 1..=2 {
            let m = LevyModel::relativistic(d, 1.2, 1.0).unwrap();
            for &z in &[0.5, 2.0, 6.0] {
                let closed = m.char_exponent(point(&[z])).unwrap();
                let quad = m.oscillatory_radial(|r| m.levy_radial(r), z, 130.0, 20).unwrap();
                assert!((closed - quad).abs() < 1e-7 * closed.max(1.0), "d={d} z={z}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn truncated_exponent_self_convergence() {
        let m = LevyModel::truncated(1, 1.5, 1.0).unwrap();
        let z = point(&[3.0]);
        let a = m.char_exponent_with(z, 10).unwrap();
        let b = m.char_exponent_with(z, 20).unwrap();
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        // direct Lévy–Khintchine integral over the kept jumps |w| < 1
        let lk = 2.0
            * tanh_sinh(|w, _, _| 2.0 * (1.5 * w).sin().powi(2) * m.stable_radial(w), 0.0, 1.0, 1e-12)
                .unwrap()
                .value;
        assert!((lk - b).abs() < 1e-8, "{lk} vs {b}");
    }

    #[test]
    fn sigma_stats_truncated_closed_form() {
        for &(d, alpha) in &[(1usize, 1.2), (2, 1.5)] {
            let m = LevyModel::truncated(d, alpha, 1.0).unwrap();
            let st = m.sigma_stats().unwrap();
            let closed = levy_constant(alpha, d) * sphere_area(d) / alpha;
            assert!((st.m / closed - 1.0).abs() < 1e-9);
            assert_eq!(st.m, st.big_m);
            assert!(st.nonneg);
        }
    }

    #[test]
    fn sigma_stats_relativistic_mass_is_m() {
        for &(d, alpha, mass) in &[(1usize, 1.2, 1.0), (2, 1.5, 0.5), (1, 0.6, 2.0)] {
            let model = LevyModel::relativistic(d, alpha, mass).unwrap();
            let st = model.sigma_stats().unwrap();
            assert!(st.nonneg && st.m > 0.0);
            assert!((st.m - mass).abs() < 1e-6 * mass, "d={d} alpha={alpha}: {}", st.m);
        }
    }

    #[test]
    fn stable_sigma_is_zero() {
        let st = LevyModel::stable(2, 1.5).unwrap().sigma_stats().unwrap();
        assert_eq!((st.m, st.big_m), (0.0, 0.0));
    }

    #[test]
    fn custom_families() {
        let spec = ModelSpec {
            kind: ModelKind::Custom,
            d: 2,
            alpha: 1.5,
            m: None,
            cutoff: None,
            sigma: Some(SigmaSpec {
                c: 0.5,
                rho: 2.0,
                support: 1.0,
                family: Some("bump".into()),
                amplitude: Some(-1.0 / PI),
                scale: None,
            }),
        };
        let m = LevyModel::from_spec(spec).unwrap();
        let st = m.sigma_stats().unwrap();
        assert!((st.m + 1.0).abs() < 1e-9 && (st.big_m - 1.0).abs() < 1e-9 && !st.nonneg);
        // the declared envelope must hold
        let bad = ModelSpec {
            kind: ModelKind::Custom,
            d: 2,
            alpha: 1.5,
            m: None,
            cutoff: None,
            sigma: Some(SigmaSpec { c: 0.1, rho: 2.0, support: 1.0, family: Some("bump".into()), amplitude: Some(-1.0), scale: None }),
        };
        assert!(matches!(LevyModel::from_spec(bad), Err(Error::EnvelopeViolation { .. })));
    }

    #[test]
    fn custom_density_cannot_exceed_stable() {
        let f: RadialFn = Arc::new(|_| 100.0);
        let r = LevyModel::custom_callback(1, 1.0, f, SigmaEnvelope { c: 100.0, rho: 1.0, support: 5.0 });
        assert!(r.is_err());
    }

    #[test]
    fn spec_rejects_bad_alpha() {
        let r = LevyModel::stable(2, 2.5);
        assert!(matches!(r, Err(Error::InvalidParameter { ref field, .. }) if field == "alpha"));
    }

    proptest! {
        #[test]
        fn exponent_symmetric(z in -20.0f64..20.0) {
            let m = LevyModel::truncated(1, 1.3, 0.7).unwrap();
            let a = m.char_exponent(point(&[z])).unwrap();
            let b = m.char_exponent(point(&[-z])).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn exponent_gap_within_twice_mass(z in 0.0f64..30.0) {
            // 0 ≤ ψ̃ − ψ^Y ≤ 2m for σ ≥ 0
            let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
            let gap = z.powf(1.2) - model.char_exponent(point(&[z])).unwrap();
            prop_assert!(gap >= -1e-12 && gap <= 2.0 + 1e-12);
        }

        #[test]
        fn densities_symmetric(x in 0.001f64..10.0, y in -10.0f64..10.0) {
            let model = LevyModel::relativistic(2, 1.5, 2.0).unwrap();
            let a = model.levy_density(point(&[x, y])).unwrap();
            let b = model.levy_density(point(&[-x, -y])).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn envelope_holds(r in 1e-6f64..1.0) {
            for model in [LevyModel::relativistic(1, 1.2, 1.0).unwrap(), LevyModel::relativistic(1, 0.6, 1.0).unwrap(), LevyModel::truncated(2, 1.5, 0.5).unwrap()] {
                let env = model.envelope();
                let v = model.sigma_radial(r).abs() * r.powf(model.dim() as f64 - env.rho);
                prop_assert!(v <= env.c * (1.0 + 1e-9));
            }
        }
    }
}
