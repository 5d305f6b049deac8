//! Periodic Delaunay profiles of the cylindrical problem
//! `L v = c v^beta`, solved by Newton's method on the even half-period.

use crate::error::{Error, Result, Stage};
use crate::fit::{linear_fit, log_fit};
use crate::fracops::{KernelTable, LineOperator, PeriodicOperator, ProblemParams};
use crate::interp::PeriodicHermite;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Cylindrical bubble (cosh t)^(-sigma).
pub fn bubble(t: f64, p: &ProblemParams) -> f64 {
    t.cosh().powf(-p.sigma)
}

/// Derivative of `bubble`.
pub fn bubble_deriv(t: f64, p: &ProblemParams) -> f64 {
    -p.sigma * t.tanh() * bubble(t, p)
}

/// Number of images on each side needed so the dropped part of the
/// bubble sum is below 1e-14 on a period.
fn image_count(l: f64, p: &ProblemParams) -> i64 {
    let amp = 2f64.powf(p.sigma);
    let mut j = 1i64;
    while 2.0 * amp * (-p.sigma * (j as f64 * l - l)).exp() / (1.0 - (-p.sigma * l).exp()) > 1e-14 {
        j += 1;
    }
    j
}

/// Bubble tower with bumps at t = (1/2 + j) L for all integers j.
pub fn tower_value(t: f64, l: f64, p: &ProblemParams) -> f64 {
    let m = image_count(l, p);
    (-m - 1..=m).map(|j| bubble(t - (0.5 + j as f64) * l, p)).sum()
}

/// Reference tower sampled on `grid`.
pub fn tower_initial(l: f64, grid: &[f64], p: &ProblemParams) -> Result<Vec<f64>> {
    if !(l >= 6.0) {
        return Err(Error::domain(Stage::Delaunay, format!("period L = {l} below 6")));
    }
    Ok(grid.iter().map(|&t| tower_value(t, l, p)).collect())
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy)]
pub struct DelaunaySettings {
    /// Grid points per period; must be a multiple of 4.
    pub n_grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for DelaunaySettings {
    fn default() -> Self {
        DelaunaySettings {
            n_grid: 512,
            tol: 1e-10,
            max_iter: 40,
            max_backtracks: 20,
        }
    }
}

/// One period of a solved profile on `t_i = -L/2 + i h`, i = 0..N.
#[derive(Debug, Clone)]
pub struct DelaunayProfile {
    pub params: ProblemParams,
    pub l: f64,
    pub h: f64,
    pub grid: Vec<f64>,
    pub v_values: Vec<f64>,
    pub tower_values: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Sup norm of the discrete residual after each Newton step.
    pub history: Vec<f64>,
    interp: PeriodicHermite,
}

impl DelaunayProfile {
    /// Periodic interpolation of v_L.
    pub fn eval(&self, t: f64) -> f64 {
        self.interp.eval(t)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.interp.deriv(t)
    }

    pub fn min_value(&self) -> f64 {
        self.v_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn psi_sup(&self) -> f64 {
        self.psi_values.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Radial function on R^n: u(r) = r^(-sigma) v_L(-ln r).
    pub fn to_rn(&self, r: f64) -> Result<f64> {
        profile_to_rn(self, r)
    }
}

pub fn profile_to_rn(profile: &DelaunayProfile, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain(Stage::Delaunay, format!("radius r = {r} must be positive")));
    }
    Ok(r.powf(-profile.params.sigma) * profile.eval(-r.ln()))
}

fn residual(op: &PeriodicOperator, v: &[f64], c: f64, beta: f64) -> Vec<f64> {
    let n = v.len();
    (0..=n / 2)
        .into_par_iter()
        .map(|k| op.apply_at(v, k) - c * v[k].powf(beta))
        .collect()
}

fn unfold(u: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| u[i.min(n - i)]).collect()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Solve for the even L-periodic profile starting from the bubble tower.
pub fn solve_delaunay(
    table: &KernelTable,
    l: f64,
    settings: &DelaunaySettings,
) -> Result<DelaunayProfile> {
    solve_delaunay_from(table, l, settings, 1.0)
}

/// As `solve_delaunay`, with the initial tower scaled by `start_scale`.
pub fn solve_delaunay_from(
    table: &KernelTable,
    l: f64,
    settings: &DelaunaySettings,
    start_scale: f64,
) -> Result<DelaunayProfile> {
    let p = table.params;
    let n = settings.n_grid;
    if n < 16 || n % 4 != 0 {
        return Err(Error::domain(Stage::Delaunay, format!("grid size {n} must be a multiple of 4, at least 16")));
    }
    if !(settings.tol >= 1e-13) {
        return Err(Error::domain(Stage::Delaunay, "tolerance below 1e-13"));
    }
    let h = l / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| -0.5 * l + i as f64 * h).collect();
    let tower = tower_initial(l, &grid, &p)?;
    let op = LineOperator::new(table, h)
        .map_err(|e| Error::refused(Stage::Delaunay, e.to_string()))?
        .periodic(n);
    let c = p.c_profile;
    let beta = p.beta;
    let half = n / 2 + 1;

    let mut u: Vec<f64> = tower[..half].iter().map(|x| x * start_scale).collect();
    let mut v = unfold(&u, n);
    let mut f = residual(&op, &v, c, beta);
    let mut fnorm = sup(&f);
    let mut history = vec![fnorm];
    let mut iter = 0;
    let diag_pv = p.kappa * op.row_sum() + p.lambda_hardy;
    while fnorm > settings.tol {
        if iter >= settings.max_iter {
            return Err(Error::NoConvergence {
                stage: Stage::Delaunay,
                iterations: iter,
                residual: fnorm,
            });
        }
        // dense Jacobian on the half-period unknowns
        let rows: Vec<Vec<f64>> = (0..half)
            .into_par_iter()
            .map(|k| {
                let mut row = vec![0.0; half];
                for i in 0..n {
                    let d = (i + n - k) % n;
                    if d != 0 {
                        row[i.min(n - i)] -= p.kappa * op.coeffs[d];
                    }
                }
                row[k] += diag_pv - c * beta * u[k].powf(beta - 1.0);
                row
            })
            .collect();
        let jac = DMatrix::from_fn(half, half, |r, s| rows[r][s]);
        let rhs = DVector::from_iterator(half, f.iter().map(|x| -x));
        let step = jac.lu().solve(&rhs).ok_or_else(|| {
            Error::refused(Stage::Delaunay, "singular Newton Jacobian")
        })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=settings.max_backtracks {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
            if trial.iter().all(|x| *x > 0.0) {
                let tv = unfold(&trial, n);
                let tf = residual(&op, &tv, c, beta);
                let tn = sup(&tf);
                if tn < fnorm || (alpha == 1.0 && tn <= settings.tol) {
                    u = trial;
                    v = tv;
                    f = tf;
                    fnorm = tn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        iter += 1;
        history.push(fnorm);
        if !accepted {
            return Err(Error::NoConvergence {
                stage: Stage::Delaunay,
                iterations: iter,
                residual: fnorm,
            });
        }
    }
    let psi: Vec<f64> = v.iter().zip(&tower).map(|(a, b)| a - b).collect();
    let interp = PeriodicHermite::new(grid[0], h, v.clone());
    Ok(DelaunayProfile {
        params: p,
        l,
        h,
        grid,
        v_values: v,
        tower_values: tower,
        psi_values: psi,
        residual_norm: fnorm,
        iterations: iter,
        history,
        interp,
    })
}

/// Far-field fit of the half tower sum_{j >= 0} v(t - L/2 - j L) mapped to R^n.
#[derive(Debug, Clone, Copy)]
pub struct FarField {
    /// Slope of ln u against ln |x| on [2, 100].
    pub slope: f64,
    /// exp(intercept): the coefficient of |x|^slope.
    pub amplitude: f64,
}

pub fn half_tower_value(t: f64, l: f64, p: &ProblemParams) -> f64 {
    let m = image_count(l, p) + 2;
    (0..=m).map(|j| bubble(t - (0.5 + j as f64) * l, p)).sum()
}

pub fn half_tower_far_field(l: f64, p: &ProblemParams) -> Result<FarField> {
    if !(l >= 8.0) {
        return Err(Error::domain(Stage::Delaunay, format!("far-field fit needs L >= 8, got {l}")));
    }
    let samples = 64;
    let (a, b) = (2f64.ln(), 100f64.ln());
    let lx: Vec<f64> = (0..samples)
        .map(|i| a + (b - a) * i as f64 / (samples - 1) as f64)
        .collect();
    let u: Vec<f64> = lx
        .iter()
        .map(|&s| (-p.sigma * s).exp() * half_tower_value(-s, l, p))
        .collect();
    let fit = log_fit(&lx, &u);
    Ok(FarField {
        slope: fit.slope,
        amplitude: fit.intercept.exp(),
    })
}

/// Fitted decay rates of a sweep of solved profiles.
#[derive(Debug, Clone, Copy)]
pub struct SweepRates {
    /// -d ln ||psi_L||_inf / dL.
    pub psi_rate: f64,
    /// d ln(min v_L) / dL.
    pub neck_slope: f64,
}

pub fn sweep_rates(profiles: &[DelaunayProfile]) -> SweepRates {
    let ls: Vec<f64> = profiles.iter().map(|p| p.l).collect();
    let psi: Vec<f64> = profiles.iter().map(|p| p.psi_sup().ln()).collect();
    let mins: Vec<f64> = profiles.iter().map(|p| p.min_value().ln()).collect();
    SweepRates {
        psi_rate: -linear_fit(&ls, &psi).slope,
        neck_slope: linear_fit(&ls, &mins).slope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::KernelGridSpec;
    use std::sync::OnceLock;

    fn p3() -> ProblemParams {
        ProblemParams::new(3, 0.5).unwrap()
    }

    fn table() -> &'static KernelTable {
        static T: OnceLock<KernelTable> = OnceLock::new();
        T.get_or_init(|| KernelTable::build(&p3(), KernelGridSpec::default_for(&p3())).unwrap())
    }

    #[test]
    fn bubble_values() {
        let p = p3();
        assert_eq!(bubble(0.0, &p), 1.0);
        assert!((bubble(1.0, &p) - 0.648054).abs() < 1e-6);
        assert!((bubble(20.0, &p) * (p.sigma * 20.0).exp() - 2f64.powf(p.sigma)).abs() < 1e-6);
        assert_eq!(bubble(1.3, &p), bubble(-1.3, &p));
    }

    #[test]
    fn tower_min_matches_direct_sum() {
        let p = p3();
        let grid = [0.0];
        let v = tower_initial(10.0, &grid, &p).unwrap()[0];
        // direct summation oracle: sum over 40 images of sech((1/2 + j) 10)
        let direct: f64 = (-40..40).map(|j: i32| 1.0 / ((0.5 + j as f64) * 10.0).cosh()).sum();
        assert!((v / direct - 1.0).abs() < 1e-13);
        assert!((v / (4.0 * (-5f64).exp()) - 1.0).abs() < 0.05);
        assert!(tower_initial(5.0, &grid, &p).is_err());
    }

    #[test]
    fn solve_converges_even_and_flat_at_bumps() {
        let s = DelaunaySettings { n_grid: 256, ..Default::default() };
        let prof = solve_delaunay(table(), 10.0, &s).unwrap();
        assert!(prof.residual_norm <= 1e-10);
        let n = prof.v_values.len();
        for i in 1..n {
            assert_eq!(prof.v_values[i], prof.v_values[n - i]);
        }
        assert!(prof.v_values.iter().all(|x| *x > 0.0));
        assert!(prof.deriv(5.0).abs() < 1e-8 && prof.deriv(-5.0).abs() < 1e-8);
        // uniqueness from a perturbed start
        let other = solve_delaunay_from(table(), 10.0, &s, 1.05).unwrap();
        let d = prof
            .v_values
            .iter()
            .zip(&other.v_values)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn profile_maps_to_rn() {
        let s = DelaunaySettings { n_grid: 128, ..Default::default() };
        let prof = solve_delaunay(table(), 8.0, &s).unwrap();
        assert!((prof.to_rn(1.0).unwrap() - prof.eval(0.0)).abs() < 1e-15);
        let r = 0.3;
        let a = prof.to_rn(r * (-8f64).exp()).unwrap();
        let b = (8.0 * prof.params.sigma).exp() * prof.to_rn(r).unwrap();
        assert!((a / b - 1.0).abs() < 1e-12);
        assert!(prof.to_rn(0.0).is_err());
    }

    #[test]
    fn far_field_slope_and_amplitude() {
        let p = p3();
        let amps: Vec<f64> = [8.0, 10.0, 12.0]
            .iter()
            .map(|&l| {
                let f = half_tower_far_field(l, &p).unwrap();
                assert!((f.slope / -(2.0 * p.sigma) - 1.0).abs() < 0.01);
                f.amplitude
            })
            .collect();
        let fit = log_fit(&[8.0, 10.0, 12.0], &amps);
        assert!((fit.slope / (-p.sigma / 2.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn sweep_rates_exceed_half_sigma() {
        let s = DelaunaySettings::default();
        let profs: Vec<DelaunayProfile> = [8.0, 10.0, 12.0, 14.0]
            .iter()
            .map(|&l| solve_delaunay(table(), l, &s).unwrap())
            .collect();
        for pr in &profs {
            eprintln!("L={} res={:.2e} psi={:.3e} min={:.4e} it={}", pr.l, pr.residual_norm, pr.psi_sup(), pr.min_value(), pr.iterations);
        }
        let r = sweep_rates(&profs);
        eprintln!("{r:?}");
        let sigma = table().params.sigma;
        assert!(r.psi_rate > sigma / 2.0);
        assert!((r.neck_slope / (-sigma / 2.0) - 1.0).abs() < 0.05);
    }
}
