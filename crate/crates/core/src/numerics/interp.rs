/// Samples of a function on a uniform grid `x0 + i·h`, evaluated by local
/// four-point Lagrange interpolation.
#[derive(Debug, Clone)]
pub struct UniformTable {
    x0: f64,
    h: f64,
    values: Vec<f64>,
}

impl UniformTable {
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 4, "table needs at least four nodes");
        assert!(h > 0.0);
        Self { x0, h, values }
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(x0: f64, x1: f64, n: usize, mut f: F) -> Self {
        let h = (x1 - x0) / (n - 1) as f64;
        let values = (0..n).map(|i| f(x0 + i as f64 * h)).collect();
        Self::new(x0, h, values)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.values.len() - 1) as f64 * self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interpolated value; `x` is clamped into the tabulated range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).clamp(1, n - 3);
        let u = s - i as f64;
        let (f0, f1, f2, f3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        // Lagrange basis on nodes -1, 0, 1, 2
        let l0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let l1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let l2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let l3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        f0 * l0 + f1 * l1 + f2 * l2 + f3 * l3
    }
}

/// Piecewise-linear interpolation on sorted abscissae.
pub fn linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (xa, xb) = (xs[j - 1], xs[j]);
    let w = (x - xa) / (xb - xa);
    ys[j - 1] * (1.0 - w) + ys[j] * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_reproduced() {
        let t = UniformTable::from_fn(0.0, 2.0, 21, |x| x * x * x - x);
        for &x in &[0.03, 0.55, 1.234, 1.99] {
            assert!((t.eval(x) - (x * x * x - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_interpolation() {
        let xs = [0.0, 1.0, 3.0];
        let ys = [0.0, 2.0, 0.0];
        assert_eq!(linear(&xs, &ys, 2.0), 1.0);
        assert_eq!(linear(&xs, &ys, -1.0), 0.0);
    }
}
