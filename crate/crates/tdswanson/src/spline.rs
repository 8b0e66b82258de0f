//! Interpolation of tabulated real samples.

/// Piecewise interpolant through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; empty for linear interpolation.
    m: Vec<f64>,
}

impl Interpolant {
    /// Piecewise linear interpolant.
    pub fn linear(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() == ys.len() && xs.len() >= 2);
        Self { xs, ys, m: Vec::new() }
    }

    /// Natural cubic spline (zero second derivative at both ends).
    pub fn natural_cubic(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n == ys.len() && n >= 2);
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Self { xs, ys, m }
    }

    fn segment(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&v| v <= x);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - x) / h, (x - x0) / h);
        let lin = a * self.ys[i] + b * self.ys[i + 1];
        if self.m.is_empty() {
            return lin;
        }
        lin + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let slope = (self.ys[i + 1] - self.ys[i]) / h;
        if self.m.is_empty() {
            return slope;
        }
        let (a, b) = ((x1 - x) / h, (x - x0) / h);
        slope + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_interpolates_between_knots() {
        let s = Interpolant::linear(vec![0.0, 1.0], vec![0.0, 1.0]);
        assert_eq!(s.eval(0.25), 0.25);
        assert_eq!(s.derivative(0.7), 1.0);
    }

    #[test]
    fn cubic_reproduces_knots_and_lines() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let s = Interpolant::natural_cubic(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.eval(*x) - y).abs() < 1e-14);
        }
        assert!((s.eval(1.3) - 1.6).abs() < 1e-14);
        assert!((s.derivative(2.2) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cubic_tracks_smooth_function() {
        let xs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let s = Interpolant::natural_cubic(xs, ys);
        for k in 0..30 {
            let x = 0.5 + 0.1 * k as f64 + 0.037;
            assert!((s.eval(x) - x.sin()).abs() < 1e-5);
            assert!((s.derivative(x) - x.cos()).abs() < 1e-3);
        }
    }

    #[test]
    fn derivative_is_continuous_at_knots() {
        let xs = vec![0.0, 0.3, 1.0, 1.4, 2.0];
        let ys = vec![1.0, -0.5, 0.7, 0.2, 0.9];
        let s = Interpolant::natural_cubic(xs.clone(), ys);
        for &x in &xs[1..4] {
            assert!((s.derivative(x - 1e-9) - s.derivative(x + 1e-9)).abs() < 1e-6);
        }
    }
}
