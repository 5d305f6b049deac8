use super::kernel::KernelTable;
use super::params::ProblemParams;
use crate::error::{Error, Result, Stage};
use crate::quad::GaussLegendre;

/// Coarsest grid spacing accepted by the discretized operator.
pub const MAX_SPACING: f64 = 0.25;

/// Relative kernel level at which the infinite-line sum is truncated.
const TRUNCATION_LEVEL: f64 = 1e-16;

/// Discretization of
/// `L v(t) = kappa PV int (v(t) - v(t - xi)) K(xi) dxi + lambda_hardy v(t)`
/// on a uniform lattice `t + m h`. The PV integral is folded onto xi > 0,
/// giving second differences `2 v(t) - v(t + m h) - v(t - m h)` against
/// product-integration weights `w_m`.
#[derive(Debug, Clone)]
pub struct LineOperator {
    pub params: ProblemParams,
    pub h: f64,
    /// `weights[m]` for m = 0..=M, with `weights[0] = 0`.
    pub weights: Vec<f64>,
}

impl LineOperator {
    pub fn new(table: &KernelTable, h: f64) -> Result<Self> {
        let p = table.params;
        if !(h > 0.0) {
            return Err(Error::domain(Stage::Operator, format!("spacing h = {h} must be positive")));
        }
        if h > MAX_SPACING {
            return Err(Error::refused(
                Stage::Operator,
                format!("spacing h = {h} too coarse; required spacing <= {MAX_SPACING}"),
            ));
        }
        let k = |x: f64| table.eval(x);
        let cut = (table.tail_bound(0.0) / (TRUNCATION_LEVEL * k(h))).ln() / table.tail_rate;
        let mut m_max = (cut / h).ceil() as usize;
        m_max += m_max % 2;
        let mut w = vec![0.0; m_max + 1];
        let gl = GaussLegendre::new(16);

        // Central pair [0, 2h]: even interpolant a2 xi^2 + a4 xi^4 of the
        // second difference through xi = h and xi = 2h, integrated exactly
        // against the singular law plus a regular remainder.
        let c = table.singular_coeff;
        let s = p.singular_exponent();
        let moment = |q: i32| {
            let e = q as f64 - 2.0 * p.gamma;
            let exact = c * (2.0 * h).powf(e) / e;
            let rem = gl.integrate(|x| x.powi(q) * (k(x) - c * x.powf(-s)), 0.0, 2.0 * h);
            exact + rem
        };
        let (m2, m4) = (moment(2), moment(4));
        let (h2, h4) = (h * h, h * h * h * h);
        w[1] += 16.0 * m2 / (12.0 * h2) - 4.0 * m4 / (12.0 * h4);
        w[2] += -m2 / (12.0 * h2) + m4 / (12.0 * h4);

        // Remaining pairs: quadratic Lagrange product integration.
        for pair in 1..m_max / 2 {
            let a = 2.0 * pair as f64 * h;
            let (mut l0, mut l1, mut l2) = (0.0, 0.0, 0.0);
            for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
                let u = x + 1.0;
                let kv = wt * h * k(a + h * u);
                l0 += kv * (u - 1.0) * (u - 2.0) / 2.0;
                l1 += kv * u * (2.0 - u);
                l2 += kv * u * (u - 1.0) / 2.0;
            }
            w[2 * pair] += l0;
            w[2 * pair + 1] += l1;
            w[2 * pair + 2] += l2;
        }
        Ok(LineOperator { params: p, h, weights: w })
    }

    /// Apply to a function defined on the whole line.
    pub fn apply_fn<F: Fn(f64) -> f64>(&self, v: F, t: f64) -> f64 {
        let v0 = v(t);
        let mut s = 0.0;
        for (m, w) in self.weights.iter().enumerate().skip(1) {
            let x = m as f64 * self.h;
            s += w * (2.0 * v0 - v(t + x) - v(t - x));
        }
        self.params.kappa * s + self.params.lambda_hardy * v0
    }

    /// Periodic operator on `n` grid points with period `n h`.
    pub fn periodic(&self, n: usize) -> PeriodicOperator {
        let mut c = vec![0.0; n];
        for (m, w) in self.weights.iter().enumerate().skip(1) {
            c[m % n] += w;
            c[(n - m % n) % n] += w;
        }
        c[0] = 0.0;
        PeriodicOperator {
            params: self.params,
            h: self.h,
            coeffs: c,
        }
    }
}

/// Circulant form of the operator on an L-periodic uniform grid, obtained by
/// folding the line weights modulo the period (the periodized kernel K_L).
#[derive(Debug, Clone)]
pub struct PeriodicOperator {
    pub params: ProblemParams,
    pub h: f64,
    /// `coeffs[d]` couples grid points at index distance d (mod N); `coeffs[0] = 0`.
    pub coeffs: Vec<f64>,
}

impl PeriodicOperator {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.h * self.coeffs.len() as f64
    }

    pub fn apply_at(&self, v: &[f64], i: usize) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for d in 1..n {
            s += self.coeffs[d] * (v[i] - v[(i + d) % n]);
        }
        self.params.kappa * s + self.params.lambda_hardy * v[i]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.len());
        (0..v.len()).map(|i| self.apply_at(v, i)).collect()
    }

    /// Sum of the off-diagonal coefficients, the diagonal of the PV part.
    pub fn row_sum(&self) -> f64 {
        self.coeffs.iter().sum()
    }
}
