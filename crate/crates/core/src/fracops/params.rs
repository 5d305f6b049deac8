use crate::error::{Error, Result};
use crate::special::{beta_fn, gamma_fn, sphere_area};
use std::f64::consts::PI;

/// Dimension, fractional order and every derived exponent and constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub n: usize,
    pub gamma: f64,
    /// (n - 2 gamma) / 2
    pub sigma: f64,
    /// (n + 2 gamma) / (n - 2 gamma)
    pub beta: f64,
    /// Normalization of the singular integral.
    pub kappa: f64,
    /// Zeroth-order coefficient of the cylindrical operator.
    pub lambda_hardy: f64,
    /// Nonlinearity constant for the R^n bubble (lambda / (lambda^2 + |x|^2))^sigma.
    pub c_bubble: f64,
    /// Constant for the cylindrical profile (cosh t)^(-sigma); equals
    /// 2^(-2 gamma) c_bubble.
    pub c_profile: f64,
}

impl ProblemParams {
    /// Validates `n >= 2`, `gamma` in (0, 1) and `n > 2 gamma`.
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParams(format!(
                "gamma = {gamma} must lie in (0, 1)"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParams(format!(
                "n = {n}: the angular reduction needs n >= 2"
            )));
        }
        let nf = n as f64;
        if nf <= 2.0 * gamma {
            return Err(Error::InvalidParams(format!(
                "n = {n} must exceed 2 gamma = {}",
                2.0 * gamma
            )));
        }
        let sigma = (nf - 2.0 * gamma) / 2.0;
        let beta = (nf + 2.0 * gamma) / (nf - 2.0 * gamma);
        let (kappa, lambda_hardy, c_bubble) = constants(nf, gamma);
        Ok(ProblemParams {
            n,
            gamma,
            sigma,
            beta,
            kappa,
            lambda_hardy,
            c_bubble,
            c_profile: c_bubble * 2f64.powf(-2.0 * gamma),
        })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Exponential decay rate of K at infinity, (n + 2 gamma) / 2.
    pub fn tail_rate(&self) -> f64 {
        (self.nf() + 2.0 * self.gamma) / 2.0
    }

    /// Exponent of the near-origin singularity, 1 + 2 gamma.
    pub fn singular_exponent(&self) -> f64 {
        1.0 + 2.0 * self.gamma
    }

    /// Coefficient C of K(xi) ~ C |xi|^(-1-2 gamma) as xi -> 0.
    pub fn singular_coeff(&self) -> f64 {
        let n = self.nf();
        sphere_area(self.n - 1) * 0.5 * beta_fn((n - 1.0) / 2.0, (1.0 + 2.0 * self.gamma) / 2.0)
    }
}

fn constants(n: f64, g: f64) -> (f64, f64, f64) {
    let kappa = PI.powf(-n / 2.0) * 4f64.powf(g) * gamma_fn(n / 2.0 + g) / gamma_fn(1.0 - g) * g;
    let r = gamma_fn((n + 2.0 * g) / 4.0) / gamma_fn((n - 2.0 * g) / 4.0);
    let lambda_hardy = 4f64.powf(g) * r * r;
    let c_bubble = 4f64.powf(g) * gamma_fn(n / 2.0 + g) / gamma_fn(n / 2.0 - g);
    (kappa, lambda_hardy, c_bubble)
}

/// `(kappa, lambda_hardy, c_bubble)` from their Gamma-function closed forms.
pub fn normalization_constants(p: &ProblemParams) -> (f64, f64, f64) {
    constants(p.nf(), p.gamma)
}
