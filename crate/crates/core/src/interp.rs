//! One-dimensional interpolants: monotone cubic Hermite, natural cubic
//! spline, and a periodic Hermite interpolant on uniform grids.

/// Shape-preserving piecewise cubic Hermite interpolant (parabolic slopes
/// with the Hyman monotonicity filter).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                // three-point parabola slope, clipped to keep each piece monotone
                let p = (h[i] * delta[i - 1] + h[i - 1] * delta[i]) / (h[i - 1] + h[i]);
                let cap = 3.0 * delta[i - 1].abs().min(delta[i].abs());
                d[i] = p.signum() * p.abs().min(cap);
            }
        }
        MonotoneCubic { x, y, d }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Evaluate; clamps to the end intervals outside the data range.
    pub fn eval(&self, t: f64) -> f64 {
        let i = segment(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        hermite(self.y[i], self.y[i + 1], self.d[i] * h, self.d[i + 1] * h, s)
    }
}

fn segment(x: &[f64], t: f64) -> usize {
    let n = x.len();
    if t <= x[0] {
        return 0;
    }
    if t >= x[n - 1] {
        return n - 2;
    }
    match x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    }
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * m1
}

fn hermite_deriv(y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> f64 {
    let s2 = s * s;
    (6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1
        + (3.0 * s2 - 2.0 * s) * m1
}

/// Natural cubic spline with value and first-derivative evaluation.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 3 && y.len() == n);
        // tridiagonal system for second derivatives, m[0] = m[n-1] = 0
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0 / 6.0;
            let b = (h0 + h1) / 3.0;
            let cc = h1 / 6.0;
            let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
            let denom = b - a * c[i - 1];
            c[i] = cc / denom;
            r[i] = (rhs - a * r[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = r[i] - c[i] * m[i + 1];
        }
        NaturalSpline { x, y, m }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = segment(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let i = segment(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

/// Periodic cubic Hermite interpolant on a uniform grid `t0 + i*h`,
/// `i = 0..N`, period `N*h`. Node slopes use fourth-order centered
/// differences, so the interpolation error is O(h^4) for smooth data.
#[derive(Debug, Clone)]
pub struct PeriodicHermite {
    t0: f64,
    h: f64,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl PeriodicHermite {
    pub fn new(t0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        assert!(n >= 5);
        let at = |i: isize| y[i.rem_euclid(n as isize) as usize];
        let d = (0..n as isize)
            .map(|i| (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * h))
            .collect();
        PeriodicHermite { t0, h, y, d }
    }

    pub fn period(&self) -> f64 {
        self.h * self.y.len() as f64
    }

    fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.y.len();
        let u = (t - self.t0).rem_euclid(self.period()) / self.h;
        let i = (u.floor() as usize).min(n - 1);
        let s = u - i as f64;
        (i, (i + 1) % n, s)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (i, j, s) = self.locate(t);
        hermite(self.y[i], self.y[j], self.d[i] * self.h, self.d[j] * self.h, s)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let (i, j, s) = self.locate(t);
        hermite_deriv(self.y[i], self.y[j], self.d[i] * self.h, self.d[j] * self.h, s) / self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_cubic_preserves_monotonicity() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 5.0 { 0.0 } else { 1.0 }).collect();
        let m = MonotoneCubic::new(x, y);
        let mut prev = m.eval(0.0);
        for k in 1..900 {
            let v = m.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn natural_spline_reproduces_smooth_function() {
        let x: Vec<f64> = (0..=80).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = NaturalSpline::new(x, y);
        assert!((s.eval(1.234) - 1.234f64.sin()).abs() < 1e-6);
        assert!((s.deriv(1.234) - 1.234f64.cos()).abs() < 1e-4);
    }

    #[test]
    fn periodic_hermite_is_periodic_and_accurate() {
        let n = 64;
        let p = 2.0 * std::f64::consts::PI;
        let h = p / n as f64;
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * h).cos()).collect();
        let ph = PeriodicHermite::new(0.0, h, y);
        assert!((ph.eval(0.3) - ph.eval(0.3 + p)).abs() < 1e-14);
        assert!((ph.eval(0.3) - 0.3f64.cos()).abs() < 1e-6);
        assert!((ph.deriv(0.3) + 0.3f64.sin()).abs() < 1e-4);
    }
}
