//! The perturbation series `p^Y(t) = e^{tm} Σ (−t)^n p̃(t) * σ^{*n} / n!`
//! on regular grids, the domination check and potential-kernel comparisons.
//!
//! The `n = 0` term is evaluated pointwise from the tabulated stable density.
//! The remaining terms are summed in the frequency domain against the exact
//! stable transform `e^{−t|ξ|^α}`, so the heavy tail of `p̃` is never sampled.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, ORIGIN};
use crate::levy_models::{LevyModel, Sigma, SigmaStats};
use crate::numerics::quad::{breakpoints, gauss_legendre, gl_breaks, gl_panels, tanh_sinh};
use crate::numerics::special::{riesz_constant, sphere_area};
use crate::stable_core::{sphere_mean_cos, StableDensity};

/// Header of the binary grid format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub d: usize,
    pub h: f64,
    #[serde(rename = "L")]
    pub extent: f64,
    pub n: usize,
    #[serde(default)]
    pub t: Option<f64>,
}

/// Values on the grid `{(i − K)h}^d`, `i = 0..2K`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    d: usize,
    h: f64,
    n: usize,
    t: Option<f64>,
    values: Vec<f64>,
    mass: f64,
}

impl GridDensity {
    pub fn new(d: usize, h: f64, n: usize, t: Option<f64>, values: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::invalid("d", "grid work supports d = 1 or 2"));
        }
        if n % 2 == 0 || n < 3 {
            return Err(Error::invalid("n", "grid needs an odd node count of at least 3"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("h", "spacing must be positive"));
        }
        if values.len() != n.pow(d as u32) {
            return Err(Error::invalid("values", "length does not match the grid"));
        }
        let mut g = Self { d, h, n, t, values, mass: 0.0 };
        g.mass = g.trapezoid();
        Ok(g)
    }

    pub fn from_fn<F: Fn(Point) -> f64 + Sync>(d: usize, h: f64, n: usize, t: Option<f64>, f: F) -> Result<Self> {
        let k = (n / 2) as f64;
        let values = (0..n.pow(d as u32))
            .map(|idx| {
                let mut p = ORIGIN;
                if d == 1 {
                    p[0] = (idx as f64 - k) * h;
                } else {
                    p[0] = ((idx / n) as f64 - k) * h;
                    p[1] = ((idx % n) as f64 - k) * h;
                }
                f(p)
            })
            .collect();
        Self::new(d, h, n, t, values)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> Option<f64> {
        self.t
    }

    /// Half-width `K h` of the grid.
    pub fn extent(&self) -> f64 {
        (self.n / 2) as f64 * self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.h
    }

    pub fn point(&self, idx: usize) -> Point {
        if self.d == 1 {
            [self.coord(idx), 0.0, 0.0]
        } else {
            [self.coord(idx / self.n), self.coord(idx % self.n), 0.0]
        }
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    fn trapezoid(&self) -> f64 {
        let n = self.n;
        let w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let s: f64 = if self.d == 1 {
            self.values.iter().enumerate().map(|(i, v)| w(i) * v).sum()
        } else {
            self.values.iter().enumerate().map(|(idx, v)| w(idx / n) * w(idx % n) * v).sum()
        };
        s * self.h.powi(self.d as i32)
    }

    /// `max |f(x) − f(−x)|` over the grid.
    pub fn symmetry_defect(&self) -> f64 {
        let len = self.values.len();
        (0..len).map(|i| (self.values[i] - self.values[len - 1 - i]).abs()).fold(0.0, f64::max)
    }

    /// Largest magnitude on the outermost ring of cells.
    pub fn boundary_peak(&self) -> f64 {
        let n = self.n;
        if self.d == 1 {
            return self.values[0].abs().max(self.values[n - 1].abs());
        }
        let mut b: f64 = 0.0;
        for i in 0..n {
            for &idx in &[i, (n - 1) * n + i, i * n, i * n + n - 1] {
                b = b.max(self.values[idx].abs());
            }
        }
        b
    }

    /// Linear (bilinear) interpolation; zero outside the grid.
    pub fn eval(&self, x: Point) -> f64 {
        let k = (self.n / 2) as f64;
        let locate = |c: f64| -> Option<(usize, f64)> {
            let u = c / self.h + k;
            if u < 0.0 || u > (self.n - 1) as f64 {
                return None;
            }
            let i = (u.floor() as usize).min(self.n - 2);
            Some((i, u - i as f64))
        };
        if self.d == 1 {
            match locate(x[0]) {
                Some((i, f)) => self.values[i] * (1.0 - f) + self.values[i + 1] * f,
                None => 0.0,
            }
        } else {
            match (locate(x[0]), locate(x[1])) {
                (Some((i, fx)), Some((j, fy))) => {
                    let v = |a: usize, b: usize| self.values[a * self.n + b];
                    v(i, j) * (1.0 - fx) * (1.0 - fy)
                        + v(i + 1, j) * fx * (1.0 - fy)
                        + v(i, j + 1) * (1.0 - fx) * fy
                        + v(i + 1, j + 1) * fx * fy
                }
                _ => 0.0,
            }
        }
    }

    pub fn header(&self) -> GridHeader {
        GridHeader { d: self.d, h: self.h, extent: self.extent(), n: self.n, t: self.t }
    }

    /// One JSON header line followed by little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        let header = serde_json::to_string(&self.header()).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w, "{header}").map_err(io)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        let mut line = String::new();
        r.read_line(&mut line).map_err(io)?;
        let header: GridHeader = serde_json::from_str(line.trim()).map_err(|e| Error::Io(format!("grid header: {e}")))?;
        let count = header.n.checked_pow(header.d as u32).ok_or_else(|| Error::Io("grid too large".into()))?;
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes).map_err(io)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Self::new(header.d, header.h, header.n, header.t, values)
    }

    /// CSV of the slice through the origin along the first axis.
    pub fn write_csv_slice<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(e.to_string());
        writeln!(w, "x,value").map_err(io)?;
        let mid = self.n / 2;
        for i in 0..self.n {
            let v = if self.d == 1 { self.values[i] } else { self.values[i * self.n + mid] };
            writeln!(w, "{:.17e},{:.17e}", self.coord(i), v).map_err(io)?;
        }
        Ok(())
    }
}

/// In-place multidimensional FFT of a row-major array.
fn fft_nd(data: &mut [Complex<f64>], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = |len: usize, planner: &mut FftPlanner<f64>| {
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    };
    match dims {
        [n] => plan(*n, &mut planner).process(data),
        [n0, n1] => {
            let (n0, n1) = (*n0, *n1);
            let rows = plan(n1, &mut planner);
            for row in data.chunks_exact_mut(n1) {
                rows.process(row);
            }
            let cols = plan(n0, &mut planner);
            let mut col = vec![Complex::new(0.0, 0.0); n0];
            for j in 0..n1 {
                for i in 0..n0 {
                    col[i] = data[i * n1 + j];
                }
                cols.process(&mut col);
                for i in 0..n0 {
                    data[i * n1 + j] = col[i];
                }
            }
        }
        _ => unreachable!("grids are one- or two-dimensional"),
    }
}

/// Radii where `σ` may jump.
fn sigma_breaks(model: &LevyModel) -> Vec<f64> {
    match model.sigma() {
        Sigma::Truncated { cutoff } => vec![*cutoff],
        Sigma::Power { support, .. } | Sigma::Callback { support, .. } => vec![*support],
        Sigma::Bump { radius, .. } => vec![*radius],
        _ => vec![],
    }
}

/// Cell averages of `σ` on a grid; the origin cell is integrated with an
/// endpoint-singular rule.
pub fn sigma_grid(model: &LevyModel, h: f64, n: usize) -> Result<GridDensity> {
    let d = model.dim();
    let k = (n / 2) as f64;
    let radial_breaks = sigma_breaks(model);
    let sig = |r: f64| model.sigma_radial(r);
    let values: Vec<f64> = if d == 1 {
        (0..n)
            .map(|i| {
                let x = (i as f64 - k) * h;
                let (a, b) = (x - 0.5 * h, x + 0.5 * h);
                let mut interior: Vec<f64> = vec![];
                for &rb in &radial_breaks {
                    interior.extend([rb, -rb]);
                }
                if x.abs() < 0.75 * h {
                    let right = tanh_sinh(|r, _, _| sig(r), 0.0, b, 1e-12).map(|q| q.value).unwrap_or(0.0);
                    2.0 * right / h
                } else {
                    let br = breakpoints(a, b, &interior);
                    gl_breaks(|y| sig(y.abs()), &br, 8) / h
                }
            })
            .collect()
    } else {
        let rule = gauss_legendre(4);
        (0..n * n)
            .map(|idx| {
                let x = ((idx / n) as f64 - k) * h;
                let y = ((idx % n) as f64 - k) * h;
                if x.abs() < 0.75 * h && y.abs() < 0.75 * h {
                    // eight congruent triangles around the singular centre
                    let half = 0.5 * h;
                    let ang = gl_panels(
                        |th| {
                            let rmax = half / th.cos();
                            tanh_sinh(|r, _, _| sig(r) * r, 0.0, rmax, 1e-12).map(|q| q.value).unwrap_or(0.0)
                        },
                        0.0,
                        PI / 4.0,
                        1,
                        16,
                    );
                    8.0 * ang / (h * h)
                } else {
                    let (nodes, weights) = (&rule.0, &rule.1);
                    let mut s = 0.0;
                    for (u, wu) in nodes.iter().zip(weights) {
                        for (v, wv) in nodes.iter().zip(weights) {
                            let px = x + 0.5 * h * u;
                            let py = y + 0.5 * h * v;
                            s += wu * wv * sig((px * px + py * py).sqrt());
                        }
                    }
                    s / 4.0
                }
            })
            .collect()
    };
    GridDensity::new(d, h, n, None, values)
}

/// `σ^{*n}` by zero-padded FFT convolution, cropped to the input window.
pub fn convolve_power(sigma: &GridDensity, n: usize) -> Result<GridDensity> {
    if n == 0 {
        return Err(Error::invalid("n", "power must be at least 1"));
    }
    if n == 1 {
        return Ok(sigma.clone());
    }
    let d = sigma.d;
    let big_n = sigma.n;
    let full = n * (big_n - 1) + 1;
    let dims: Vec<usize> = vec![full; d];
    let total = full.pow(d as u32);
    let mut buf = vec![Complex::new(0.0, 0.0); total];
    for (idx, v) in sigma.values.iter().enumerate() {
        let target = if d == 1 { idx } else { (idx / big_n) * full + idx % big_n };
        buf[target] = Complex::new(*v, 0.0);
    }
    fft_nd(&mut buf, &dims, false);
    let cell = sigma.h.powi(d as i32);
    for z in buf.iter_mut() {
        *z = z.powu(n as u32) * cell.powi(n as i32 - 1);
    }
    fft_nd(&mut buf, &dims, true);
    let norm = total as f64;
    let offset = (n - 1) * (big_n / 2);
    let values: Vec<f64> = (0..big_n.pow(d as u32))
        .map(|idx| {
            let src = if d == 1 { idx + offset } else { (idx / big_n + offset) * full + idx % big_n + offset };
            buf[src].re / norm
        })
        .collect();
    let out = GridDensity::new(d, sigma.h, big_n, sigma.t, values)?;
    let limit = 1e-6 * out.peak();
    let boundary = out.boundary_peak();
    if boundary > limit {
        return Err(Error::Aliasing { boundary, limit });
    }
    Ok(out)
}

/// Grid geometry for series evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub h: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(d: usize, h: f64, n: usize) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::invalid("d", "grid work supports d = 1 or 2"));
        }
        if n % 2 == 0 || n < 3 || !(h > 0.0) {
            return Err(Error::invalid("grid", "need h > 0 and an odd node count"));
        }
        Ok(Self { d, h, n })
    }

    /// Half-width `6 t^{1/α} + s` with `s` the support of `σ` (10 when
    /// unbounded); spacing `min(L/1024, t^{1/α}/64)`.
    pub fn default_for(model: &LevyModel, t: f64) -> Self {
        let scale = t.powf(1.0 / model.alpha());
        let s = model.support();
        let s = if s.is_finite() { s } else { 10.0 };
        let extent = 6.0 * scale + s;
        let mut h = (extent / 1024.0).min(scale / 64.0);
        if model.dim() == 2 {
            h = h.max(extent / 512.0);
        }
        let k = (extent / h).ceil() as usize;
        Self { d: model.dim(), h, n: 2 * k + 1 }
    }

    /// Grid whose every `stride`-th node forms the `count`-node check grid
    /// of spacing `big_h`.
    pub fn nested(d: usize, big_h: f64, count: usize, stride: usize) -> Result<Self> {
        let k = (count / 2 + 1) * stride;
        Self::new(d, big_h / stride as f64, 2 * k + 1)
    }

    pub fn extent(&self) -> f64 {
        (self.n / 2) as f64 * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    /// Fixed truncation order; chosen adaptively from `tol` when absent.
    pub n_max: Option<usize>,
    pub tol: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { n_max: None, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDensity {
    pub density: GridDensity,
    /// `e^{tm}(p^Y − p̃)` part, i.e. the terms `n ≥ 1`.
    pub correction: GridDensity,
    pub n_max: usize,
    pub tail_bound: f64,
    /// Heuristic size of periodic images of the heavy stable tail.
    pub alias_estimate: f64,
    pub stats: SigmaStats,
}

impl SeriesDensity {
    pub fn tolerance(&self) -> f64 {
        self.tail_bound + self.alias_estimate
    }
}

/// `e^{tm} sup p̃(t) Σ_{n > n_max} (tM)^n / n!`.
pub fn series_tail(t: f64, m: f64, big_m: f64, sup_p: f64, n_max: usize) -> f64 {
    let x = t * big_m;
    if x == 0.0 {
        return 0.0;
    }
    // (tM)^{n+1}/(n+1)! and onwards, in logs to avoid overflow
    let mut ln_term = (n_max as f64 + 1.0) * x.ln() - ln_factorial(n_max + 1);
    let mut sum = 0.0;
    let mut k = n_max + 1;
    loop {
        let term = ln_term.exp();
        sum += term;
        if term < 1e-17 * sum || k > n_max + 2000 {
            break;
        }
        k += 1;
        ln_term += x.ln() - (k as f64).ln();
    }
    (t * m).exp() * sup_p * sum
}

fn ln_factorial(n: usize) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// Default head length `max(8, ⌈d/α⌉ + 4)`.
pub fn default_n_max(d: usize, alpha: f64) -> usize {
    8usize.max((d as f64 / alpha).ceil() as usize + 4)
}

fn choose_n_max(t: f64, stats: &SigmaStats, sup_p: f64, d: usize, alpha: f64, opts: &SeriesOptions) -> Result<(usize, f64)> {
    if let Some(n) = opts.n_max {
        let tail = series_tail(t, stats.m, stats.big_m, sup_p, n);
        if tail > opts.tol {
            return Err(Error::SeriesTail { requested: opts.tol, n_max: n, tail });
        }
        return Ok((n, tail));
    }
    let mut n = default_n_max(d, alpha);
    loop {
        let tail = series_tail(t, stats.m, stats.big_m, sup_p, n);
        if tail <= opts.tol {
            return Ok((n, tail));
        }
        if n >= 2000 {
            return Err(Error::SeriesTail { requested: opts.tol, n_max: n, tail });
        }
        n += 1;
    }
}

/// Angular frequency of DFT bin `j` for `len` samples at spacing `h`.
fn frequency(j: usize, len: usize, h: f64) -> f64 {
    let jj = if j <= len / 2 { j as f64 } else { j as f64 - len as f64 };
    2.0 * PI * jj / (len as f64 * h)
}

/// Transform length: wide padding in one dimension pushes the periodic
/// images of the heavy stable tail far from the window.
fn padded_len(d: usize, n: usize) -> usize {
    if d == 1 {
        8 * n
    } else {
        2 * n
    }
}

/// Terms `n ≥ 1` of the series (without the `e^{tm}` factor) on the grid.
fn series_correction(t: f64, alpha: f64, sigma: &GridDensity, n_max: usize) -> Result<GridDensity> {
    let d = sigma.d;
    let big_n = sigma.n;
    let len = padded_len(d, big_n);
    let dims = vec![len; d];
    let total = len.pow(d as u32);
    let mut buf = vec![Complex::new(0.0, 0.0); total];
    let k = big_n / 2;
    let wrap = |i: usize| (i + len - k) % len;
    for (idx, v) in sigma.values.iter().enumerate() {
        let target = if d == 1 { wrap(idx) } else { wrap(idx / big_n) * len + wrap(idx % big_n) };
        buf[target] = Complex::new(*v, 0.0);
    }
    fft_nd(&mut buf, &dims, false);
    let cell = sigma.h.powi(d as i32);
    let h = sigma.h;
    for (idx, z) in buf.iter_mut().enumerate() {
        let xi2 = if d == 1 {
            frequency(idx, len, h).powi(2)
        } else {
            frequency(idx / len, len, h).powi(2) + frequency(idx % len, len, h).powi(2)
        };
        let s_hat = z.re * cell;
        let u = -t * s_hat;
        // Horner for Σ_{n=1}^{n_max} u^n/n!
        let mut acc = 0.0;
        for n in (1..=n_max).rev() {
            acc = (acc + 1.0) * u / n as f64;
        }
        *z = Complex::new(acc * (-t * xi2.powf(alpha / 2.0)).exp(), 0.0);
    }
    fft_nd(&mut buf, &dims, true);
    let scale_back = 1.0 / (total as f64 * cell);
    let values = (0..big_n.pow(d as u32))
        .map(|idx| {
            let src = if d == 1 { wrap(idx) } else { wrap(idx / big_n) * len + wrap(idx % big_n) };
            buf[src].re * scale_back
        })
        .collect();
    GridDensity::new(d, sigma.h, big_n, Some(t), values)
}

/// Grid evaluation of `p^Y(t, ·)` with a rigorous bound on the dropped
/// series terms.
pub fn density_series(t: f64, model: &LevyModel, spec: &GridSpec, opts: &SeriesOptions) -> Result<SeriesDensity> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "time must be positive"));
    }
    if spec.d != model.dim() {
        return Err(Error::invalid("grid.d", "grid and model dimensions differ"));
    }
    let stats = model.sigma_stats()?;
    let p = StableDensity::get(model.alpha(), model.dim())?;
    let free = GridDensity::from_fn(spec.d, spec.h, spec.n, Some(t), |x| p.density_at(t, x))?;
    if model.is_stable() {
        let zero = GridDensity::new(spec.d, spec.h, spec.n, Some(t), vec![0.0; free.values.len()])?;
        return Ok(SeriesDensity {
            density: free,
            correction: zero,
            n_max: 0,
            tail_bound: 0.0,
            alias_estimate: 0.0,
            stats,
        });
    }
    let (n_max, tail_bound) = choose_n_max(t, &stats, p.sup(t), model.dim(), model.alpha(), opts)?;
    let sigma = sigma_grid(model, spec.h, spec.n)?;
    let corr = series_correction(t, model.alpha(), &sigma, n_max)?;
    let growth = (t * stats.m).exp();
    let corr_values: Vec<f64> = corr.values.iter().map(|v| growth * v).collect();
    let values = free.values.iter().zip(&corr_values).map(|(a, b)| growth * a + b).collect();
    let extent = spec.extent();
    let image = padded_len(spec.d, spec.n) as f64 * spec.h - 2.0 * extent;
    let alias_estimate = 4.0 * (t * stats.big_m).exp_m1() * growth * p.density(t, image);
    Ok(SeriesDensity {
        density: GridDensity::new(spec.d, spec.h, spec.n, Some(t), values)?,
        correction: GridDensity::new(spec.d, spec.h, spec.n, Some(t), corr_values)?,
        n_max,
        tail_bound,
        alias_estimate,
        stats,
    })
}

/// Worst margin of `e^{mt} p̃(t,x) − p^Y(t,x)` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationRow {
    pub t: f64,
    pub nodes: usize,
    pub worst_x: f64,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub rows: Vec<DominationRow>,
    pub passed: bool,
}

/// Checks `p^Y(t, x) ≤ e^{mt} p̃(t, x)` on a `count`-node grid of spacing
/// `big_h` for each time (one-dimensional models).
pub fn domination_check(times: &[f64], big_h: f64, count: usize, model: &LevyModel, opts: &SeriesOptions) -> Result<DominationReport> {
    if model.dim() != 1 {
        return Err(Error::invalid("d", "domination check runs on one-dimensional grids"));
    }
    let stats = model.sigma_stats()?;
    if !stats.nonneg {
        return Err(Error::invalid("sigma", "domination needs a nonnegative perturbation"));
    }
    let mut rows = Vec::new();
    for &t in times {
        let scale = t.powf(1.0 / model.alpha());
        let stride = (big_h / (scale / 64.0).min(0.01)).ceil().max(1.0) as usize;
        let spec = GridSpec::nested(1, big_h, count, stride)?;
        let series = density_series(t, model, &spec, opts)?;
        let centre = spec.n / 2;
        let mut worst = (f64::INFINITY, 0.0);
        for j in 0..count {
            let offset = j as isize - (count / 2) as isize;
            let idx = (centre as isize + offset * stride as isize) as usize;
            // margin = e^{mt} p̃ − p^Y = −(terms n ≥ 1)
            let margin = -series.correction.values()[idx];
            if margin < worst.0 {
                worst = (margin, series.density.coord(idx));
            }
        }
        let tolerance = series.tolerance();
        rows.push(DominationRow {
            t,
            nodes: count,
            worst_x: worst.1,
            worst_margin: worst.0,
            tolerance,
            passed: worst.0 >= -tolerance,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(DominationReport { rows, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialOptions {
    /// Upper end of the series time integral.
    pub t_max: f64,
    /// Gauss panels per unit of `ln t`; refinement doubles this.
    pub panels_per_log_unit: usize,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        Self { t_max: 50.0, panels_per_log_unit: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialRow {
    pub radius: f64,
    pub u_y: f64,
    pub u_tilde: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub rows: Vec<PotentialRow>,
    /// `max(max ratio, 1/min ratio)` over the radii.
    pub band: f64,
    /// Bound on `∫_{t_max}^∞ |p^Y − p̃|` from `0 ≤ p^Y ≤ e^{tm} sup p̃`.
    pub tail_bound: f64,
    pub t_nodes: usize,
}

/// Log-spaced Gauss nodes `(t, weight)` for `∫_0^{t_max} · dt`.
fn log_time_nodes(t_min: f64, t_max: f64, per_unit: usize) -> Vec<(f64, f64)> {
    let (a, b) = (t_min.ln(), t_max.ln());
    let panels = ((b - a) * per_unit as f64).ceil().max(1.0) as usize;
    let rule = gauss_legendre(8);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * 8);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let u = mid + 0.5 * width * x;
            let t = u.exp();
            out.push((t, 0.5 * width * w * t));
        }
    }
    out
}

/// Compares `U^Y = ∫_0^∞ p^Y(t, ·) dt` with `Ũ` at the given radii.
///
/// The `n ≥ 1` part is integrated in time inside a radial Fourier integral,
/// which avoids gridding the slowly decaying potential.
pub fn potential_compare(model: &LevyModel, radii: &[f64], opts: &PotentialOptions) -> Result<PotentialReport> {
    let d = model.dim();
    let alpha = model.alpha();
    let df = d as f64;
    if df <= alpha {
        return Err(Error::invalid("alpha", "potential comparison needs d > alpha"));
    }
    let stats = model.sigma_stats()?;
    let p = StableDensity::get(alpha, d)?;
    let nodes = log_time_nodes(1e-12, opts.t_max, opts.panels_per_log_unit);
    let growth = |t: f64| (t * stats.m).exp();
    // free part on (0, t_max) and the stable tail beyond
    let tail_nodes = log_time_nodes(opts.t_max, opts.t_max * 1e12, opts.panels_per_log_unit.max(2));
    let far = 1e12 * opts.t_max;
    let far_tail = p.sup(1.0) * far.powf(1.0 - df / alpha) / (df / alpha - 1.0);
    let tail_bound = {
        let sup_int = p.sup(1.0) * opts.t_max.powf(1.0 - df / alpha) / (df / alpha - 1.0);
        let g = growth(opts.t_max).max(1.0);
        sup_int * g
    };
    // Fourier side of the correction: Ĉ(k) tabulated on Gauss nodes in k
    let mut k_nodes: Vec<(f64, f64)> = Vec::new();
    let mut c_hat: Vec<f64> = Vec::new();
    if !model.is_stable() {
        let width = 0.25;
        let rule = gauss_legendre(12);
        let mut k0 = 0.0;
        let mut total: f64 = 0.0;
        loop {
            let mut panel = 0.0;
            for (x, w) in rule.0.iter().zip(&rule.1) {
                let k = k0 + 0.5 * width * (1.0 + x);
                let s_hat = model.sigma_transform(k, stats.m)?;
                let ka = k.powf(alpha);
                let mut acc_t = 0.0;
                for &(t, wt) in &nodes {
                    let u = -t * s_hat;
                    let n_terms = series_terms(t * stats.big_m);
                    let mut acc = 0.0;
                    for n in (1..=n_terms).rev() {
                        acc = (acc + 1.0) * u / n as f64;
                    }
                    acc_t += wt * growth(t) * (-t * ka).exp() * acc;
                }
                let weight = 0.5 * width * w;
                k_nodes.push((k, weight));
                c_hat.push(acc_t);
                panel += weight * acc_t * k.powi(d as i32 - 1);
            }
            total += panel;
            k0 += width;
            if (panel.abs() < 1e-12 * total.abs().max(1e-300) && k0 > 4.0) || k0 > 2000.0 {
                break;
            }
        }
    }
    let pref = sphere_area(d) / (2.0 * PI).powf(df);
    let u_const = riesz_constant(alpha, d)?;
    let mut rows = Vec::new();
    for &r in radii {
        if !(r > 0.0) {
            return Err(Error::invalid("radii", "radii must be positive"));
        }
        let u0: f64 = nodes.iter().map(|&(t, w)| w * growth(t) * p.density(t, r)).sum();
        let tail: f64 = tail_nodes.iter().map(|&(t, w)| w * p.density(t, r)).sum::<f64>() + far_tail;
        let corr: f64 = k_nodes
            .iter()
            .zip(&c_hat)
            .map(|(&(k, w), c)| w * c * k.powi(d as i32 - 1) * sphere_mean_cos(k * r, d))
            .sum::<f64>()
            * pref;
        let u_y = u0 + corr + tail;
        let u_tilde = u_const * r.powf(alpha - df);
        rows.push(PotentialRow { radius: r, u_y, u_tilde, ratio: u_y / u_tilde });
    }
    let hi = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(PotentialReport { rows, band: hi.max(1.0 / lo), tail_bound, t_nodes: nodes.len() })
}

/// Series length with `Σ_{n>N} x^n/n! < 1e-16 e^x`.
fn series_terms(x: f64) -> usize {
    let mut n = 4usize;
    while series_tail(1.0, 0.0, x, 1.0, n) > 1e-16 * x.exp().max(1.0) && n < 2000 {
        n += 4;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesGap {
    pub t0: f64,
    pub gap: f64,
    pub worst_x: f64,
    /// `gap / t0^{2−1/α}`.
    pub ratio: f64,
}

/// `max_x ∫_0^{t0} |p̃(t,x) − e^{−2mt} p^Y(t,x)| dt` over `|x| ≤ 2`
/// (one-dimensional models with `α ≥ 1`).
pub fn one_dim_series_gap(t0: f64, model: &LevyModel, opts: &SeriesOptions) -> Result<SeriesGap> {
    if model.dim() != 1 || model.alpha() < 1.0 {
        return Err(Error::invalid("model", "series gap needs d = 1 and alpha >= 1"));
    }
    if !(t0 > 0.0 && t0 <= 1.0) {
        return Err(Error::invalid("t0", "must lie in (0, 1]"));
    }
    let alpha = model.alpha();
    let exponent = 2.0 - 1.0 / alpha;
    if model.is_stable() {
        return Ok(SeriesGap { t0, gap: 0.0, worst_x: 0.0, ratio: 0.0 });
    }
    let spec = GridSpec::default_for(model, t0);
    let centre = spec.n / 2;
    let reach = (2.0 / spec.h).floor() as usize;
    let idxs: Vec<usize> = (centre - reach..=centre + reach).collect();
    let mut gaps = vec![0.0; idxs.len()];
    let p = StableDensity::get(alpha, 1)?;
    // t = t0 u², which removes the t^{1−1/α} endpoint behaviour
    let rule = gauss_legendre(16);
    let m = model.sigma_stats()?.m;
    for panel in 0..4 {
        let (a, b) = (panel as f64 / 4.0, (panel + 1) as f64 / 4.0);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let u = a + 0.5 * (b - a) * (1.0 + x);
            let t = t0 * u * u;
            let wt = 0.5 * (b - a) * w * 2.0 * t0 * u;
            let s = density_series(t, model, &spec, opts)?;
            let damp = (-2.0 * m * t).exp();
            for (g, &i) in gaps.iter_mut().zip(&idxs) {
                let xi = s.density.coord(i);
                *g += wt * (p.density(t, xi) - damp * s.density.values()[i]).abs();
            }
        }
    }
    let (k, gap) = gaps.iter().enumerate().fold((0, 0.0), |acc, (k, &g)| if g > acc.1 { (k, g) } else { acc });
    Ok(SeriesGap { t0, gap, worst_x: spec_coord(&spec, idxs[k]), ratio: gap / t0.powf(exponent) })
}

fn spec_coord(spec: &GridSpec, i: usize) -> f64 {
    (i as f64 - (spec.n / 2) as f64) * spec.h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point;
    use crate::levy_models::{ModelKind, ModelSpec, SigmaSpec};
    use proptest::prelude::*;

    fn bump_model(d: usize, amplitude: f64, radius: f64) -> LevyModel {
        LevyModel::from_spec(ModelSpec {
            kind: ModelKind::Custom,
            d,
            alpha: 1.5,
            m: None,
            cutoff: None,
            sigma: Some(SigmaSpec {
                c: amplitude.abs(),
                rho: d as f64,
                support: radius,
                family: Some("bump".into()),
                amplitude: Some(amplitude),
                scale: None,
            }),
        })
        .unwrap()
    }

    #[test]
    fn convolve_power_identity_and_mass() {
        let model = bump_model(1, 0.1, 1.0);
        let s = sigma_grid(&model, 0.01, 801).unwrap();
        assert_eq!(convolve_power(&s, 1).unwrap(), s);
        let m = s.mass();
        for n in 2..=3 {
            let c = convolve_power(&s, n).unwrap();
            assert!((c.mass() / m.powi(n as i32) - 1.0).abs() < 1e-6);
            assert!(c.symmetry_defect() < 1e-9 * c.peak().max(1.0));
        }
        // a window too small for the support of σ^{*4} is reported
        assert!(matches!(convolve_power(&s, 5), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn convolve_power_two_dimensional() {
        let model = bump_model(2, 0.1, 0.5);
        let s = sigma_grid(&model, 0.05, 61).unwrap();
        let c = convolve_power(&s, 2).unwrap();
        assert!((c.mass() / s.mass().powi(2) - 1.0).abs() < 1e-6);
        assert!(c.symmetry_defect() < 1e-9);
    }

    #[test]
    fn sigma_grid_mass_matches_closed_form() {
        let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
        let s = sigma_grid(&model, 0.01, 4001).unwrap();
        // mass beyond the window from the stable tail
        let outside = 2.0 * crate::stable_core::levy_constant(1.2, 1) * 20.0f64.powf(-1.2) / 1.2;
        assert!((s.mass() + outside - 1.0).abs() < 2e-3, "{}", s.mass() + outside);
    }

    #[test]
    fn stable_series_is_exact() {
        let model = LevyModel::stable(1, 1.2).unwrap();
        let spec = GridSpec::default_for(&model, 0.5);
        let s = density_series(0.5, &model, &spec, &SeriesOptions::default()).unwrap();
        let p = StableDensity::get(1.2, 1).unwrap();
        for i in (0..spec.n).step_by(97) {
            assert_eq!(s.density.values()[i], p.density(0.5, s.density.coord(i)));
        }
        assert_eq!(s.tail_bound, 0.0);
    }

    #[test]
    fn series_mass_is_one() {
        for model in [LevyModel::truncated(1, 1.5, 1.0).unwrap(), LevyModel::relativistic(1, 1.2, 1.0).unwrap()] {
            let spec = GridSpec::new(1, 0.01, 16001).unwrap();
            let s = density_series(0.5, &model, &spec, &SeriesOptions::default()).unwrap();
            // relativistic and truncated densities have light tails beyond the window
            assert!((s.density.mass() - 1.0).abs() < 1e-4, "{}", s.density.mass());
            assert!(s.density.symmetry_defect() < 1e-10);
        }
    }

    #[test]
    fn series_matches_fourier_inversion() {
        // independent oracle: p^Y(t,x) = (1/π)∫_0^∞ e^{−tψ(k)} cos(kx) dk
        let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
        let t = 0.5;
        let spec = GridSpec::default_for(&model, t);
        let s = density_series(t, &model, &spec, &SeriesOptions::default()).unwrap();
        for &x in &[0.0, 0.5, 1.3, 3.0] {
            let f = |k: f64| (-t * model.char_exponent(point(&[k])).unwrap()).exp() * (k * x).cos();
            let exact = (gl_panels(f, 0.0, 60.0, 600, 16)) / PI;
            let got = s.density.eval(point(&[x]));
            assert!((got - exact).abs() < 2e-4 * exact.max(0.01), "x={x}: {got} vs {exact}");
        }
    }

    #[test]
    fn series_resolution_consistency() {
        let model = LevyModel::truncated(1, 1.5, 1.0).unwrap();
        let a = density_series(0.5, &model, &GridSpec::new(1, 0.02, 1501).unwrap(), &SeriesOptions::default()).unwrap();
        let b = density_series(0.5, &model, &GridSpec::new(1, 0.01, 3001).unwrap(), &SeriesOptions::default()).unwrap();
        for i in (0..1501).step_by(25) {
            let x = a.density.coord(i);
            assert!((a.density.values()[i] - b.density.eval(point(&[x]))).abs() < 1e-4);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let model = LevyModel::truncated(1, 1.5, 1.0).unwrap();
        let spec = GridSpec::new(1, 0.01, 4001).unwrap();
        let one = density_series(0.25, &model, &spec, &SeriesOptions::default()).unwrap().density;
        let two = density_series(0.5, &model, &spec, &SeriesOptions::default()).unwrap().density;
        // direct discrete convolution at interior nodes
        let (h, n, c) = (spec.h, spec.n, spec.n / 2);
        let v = one.values();
        let mut err: f64 = 0.0;
        for i in (c - 300..=c + 300).step_by(10) {
            let mut acc = 0.0;
            for j in 0..n {
                let k = i as isize - j as isize + c as isize;
                if (0..n as isize).contains(&k) {
                    acc += v[j] * v[k as usize];
                }
            }
            err = err.max((acc * h - two.values()[i]).abs());
        }
        assert!(err < 5e-4, "{err}");
    }

    #[test]
    fn series_tail_guard() {
        let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
        let spec = GridSpec::new(1, 0.05, 201).unwrap();
        let opts = SeriesOptions { n_max: Some(1), tol: 1e-12 };
        assert!(matches!(density_series(0.5, &model, &spec, &opts), Err(Error::SeriesTail { .. })));
    }

    #[test]
    fn domination_holds_for_truncated() {
        let model = LevyModel::truncated(1, 1.5, 1.0).unwrap();
        let r = domination_check(&[0.25, 0.5], 0.01, 2048, &model, &SeriesOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
        let stable = LevyModel::stable(1, 1.5).unwrap();
        let r = domination_check(&[0.5], 0.01, 2048, &stable, &SeriesOptions::default()).unwrap();
        assert_eq!(r.rows[0].worst_margin, 0.0);
    }

    #[test]
    fn potential_stable_ratio_is_one() {
        let model = LevyModel::stable(2, 1.5).unwrap();
        let r = potential_compare(&model, &[0.01, 0.1, 1.0], &PotentialOptions::default()).unwrap();
        for row in &r.rows {
            assert!((row.ratio - 1.0).abs() < 2e-2, "{row:?}");
        }
    }

    #[test]
    fn one_dim_gap_zero_for_stable() {
        let model = LevyModel::stable(1, 1.2).unwrap();
        assert_eq!(one_dim_series_gap(0.5, &model, &SeriesOptions::default()).unwrap().gap, 0.0);
    }

    #[test]
    fn binary_round_trip() {
        let g = GridDensity::from_fn(2, 0.1, 11, Some(0.5), |x| (-x[0] * x[0] - 2.0 * x[1] * x[1]).exp()).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        let back = GridDensity::read_binary(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(g, back);
        let mut csv = Vec::new();
        g.write_csv_slice(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 12);
    }

    proptest! {
        #[test]
        fn series_tail_decreases(t in 0.01f64..2.0, big_m in 0.1f64..5.0, n in 1usize..30) {
            let a = series_tail(t, big_m, big_m, 1.0, n);
            let b = series_tail(t, big_m, big_m, 1.0, n + 1);
            prop_assert!(b <= a);
        }

        #[test]
        fn grid_mass_scales_linearly(c in 0.1f64..10.0) {
            let g = GridDensity::from_fn(1, 0.1, 21, None, |x| c * (1.0 - x[0].abs()).max(0.0)).unwrap();
            prop_assert!((g.mass() - c).abs() < 1e-9 * c);
        }
    }
}
