//! Gamma-family helpers and closed-form radial integrals.

use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}

pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

/// Euler Beta function B(a, b) for positive arguments.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Surface area of the unit sphere S^{d-1} in R^d. `sphere_area(1)` is 2.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Closed form of the radial integral of r^a (1 + r^2)^(-b) over (0, inf).
pub fn radial_power_integral(a: f64, b: f64) -> f64 {
    let p = (a + 1.0) / 2.0;
    0.5 * beta_fn(p, b - p)
}
