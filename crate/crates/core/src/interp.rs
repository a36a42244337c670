//! Natural cubic spline on a strictly increasing, possibly nonuniform grid.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Argument(format!(
                "spline needs matching grids of length >= 2 (got {} and {})",
                n,
                y.len()
            )));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("spline abscissae must increase strictly".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the natural-end tridiagonal system.
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(Self { x, y, m })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn interval(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&xi| xi <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    /// Running integral from the first knot, evaluated at every knot.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 0..self.x.len() - 1 {
            let h = self.x[i + 1] - self.x[i];
            acc += 0.5 * h * (self.y[i] + self.y[i + 1]) - h * h * h * (self.m[i] + self.m[i + 1]) / 24.0;
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data_exactly() {
        let x: Vec<f64> = vec![0.0, 0.3, 0.35, 1.0, 2.5];
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t - 1.0).collect();
        let s = CubicSpline::new(x, y).unwrap();
        for t in [0.1, 0.33, 0.9, 2.0] {
            assert!((s.eval(t) - (2.0 * t - 1.0)).abs() < 1e-14);
            assert!((s.derivative(t) - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn smooth_function_converges() {
        let n = 401;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64 * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::new(x, y).unwrap();
        for t in [0.5, 1.234, 2.9] {
            assert!((s.eval(t) - t.sin()).abs() < 1e-8);
            assert!((s.derivative(t) - t.cos()).abs() < 1e-5);
        }
        let cum = s.cumulative_integral();
        assert!((cum[n - 1] - (1.0 - 3f64.cos())).abs() < 1e-7);
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(CubicSpline::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }
}
