//! Reduced finite-dimensional problem: balancing conditions, the Toda-type
//! ladder operators and their inverses, leading-order coefficients of the
//! projected equations, and the nested ladder / balancing solve.
//!
//! Index conventions. Each point `i` carries a tower of bubbles `j = 0, 1, ...`
//! with scales `lambda_j = R_j exp(-(1 + 2j) L_i / 2)`. Ladders store the
//! perturbations `r_j`, `a~_j` for `j = 0..J`; beyond `J` they are zero.
//! Residual vectors of the ladder equations are indexed by row `j = 1..=J`
//! and stored at slot `j - 1`.

use crate::error::{Error, Result, Stage};
use crate::fit::linear_fit;
use crate::fracops::ProblemParams;
use crate::interactions::InteractionConstants;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Minimum pairwise distance of the points in a `Configuration`.
pub const MIN_SEPARATION: f64 = 2.0;

/// Default bound on `|L_i - L|`.
pub const DEFAULT_MAX_SPREAD: f64 = 4.0;

/// Largest exponent accepted inside a weighted norm before it is treated
/// as infinite.
const LN_MAX: f64 = 700.0;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn check_points(points: &[Vec<f64>], p: &ProblemParams, stage: Stage) -> Result<()> {
    for (i, x) in points.iter().enumerate() {
        if x.len() != p.n {
            return Err(Error::domain(
                stage,
                format!("point {} has {} coordinates, expected {}", i + 1, x.len(), p.n),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(stage, format!("point {} is not finite", i + 1)));
        }
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if dist(&points[i], &points[j]) == 0.0 {
                return Err(Error::domain(
                    stage,
                    format!("points {} and {} coincide", i + 1, j + 1),
                ));
            }
        }
    }
    Ok(())
}

/// Base parameters of a multi-point configuration.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub params: ProblemParams,
    pub points: Vec<Vec<f64>>,
    /// Necksize factors q_i.
    pub q: Vec<f64>,
    /// Base Delaunay parameter.
    pub l: f64,
    /// Dilations R^i.
    pub big_r: Vec<f64>,
    /// Rescaled translations a^_0^i.
    pub a_hat: Vec<Vec<f64>>,
    /// Admissible `|L_i - L|`.
    pub max_spread: f64,
}

impl Configuration {
    pub fn new(
        params: ProblemParams,
        points: Vec<Vec<f64>>,
        q: Vec<f64>,
        l: f64,
        big_r: Vec<f64>,
        a_hat: Vec<Vec<f64>>,
        max_spread: f64,
    ) -> Result<Self> {
        let k = points.len();
        if k < 2 {
            return Err(Error::domain(Stage::Reduce, format!("{k} point(s); need at least 2")));
        }
        if q.len() != k || big_r.len() != k || a_hat.len() != k {
            return Err(Error::domain(Stage::Reduce, "per-point vectors differ in length"));
        }
        check_points(&points, &params, Stage::Reduce)?;
        for i in 0..k {
            for j in i + 1..k {
                let d = dist(&points[i], &points[j]);
                if d < MIN_SEPARATION {
                    return Err(Error::domain(
                        Stage::Reduce,
                        format!("points {} and {} are {d} apart, below {MIN_SEPARATION}", i + 1, j + 1),
                    ));
                }
            }
        }
        if q.iter().chain(&big_r).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::domain(Stage::Reduce, "q_i and R^i must be positive"));
        }
        if a_hat.iter().any(|a| a.len() != params.n) {
            return Err(Error::domain(Stage::Reduce, "translation has wrong dimension"));
        }
        let cfg = Configuration {
            params,
            points,
            q,
            l,
            big_r,
            a_hat,
            max_spread,
        };
        for i in 0..k {
            if (cfg.l_i(i) - l).abs() > max_spread {
                return Err(Error::domain(
                    Stage::Reduce,
                    format!("|L_{} - L| = {} exceeds {max_spread}", i + 1, (cfg.l_i(i) - l).abs()),
                ));
            }
        }
        Ok(cfg)
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    /// Per-point parameter from q_i exp(-sigma L / 2) = exp(-sigma L_i / 2).
    pub fn l_i(&self, i: usize) -> f64 {
        self.l - 2.0 / self.params.sigma * self.q[i].ln()
    }

    pub fn balance1_residual(&self, consts: &InteractionConstants) -> Result<Vec<f64>> {
        balance1_residual(&self.points, &self.q, &self.big_r, consts)
    }
}

/// `A2 sum_{i' != i} q_i' (R^i R^i')^sigma |p_i - p_i'|^(-2 sigma) - q_i`.
pub fn balance1_residual(
    points: &[Vec<f64>],
    q: &[f64],
    big_r: &[f64],
    consts: &InteractionConstants,
) -> Result<Vec<f64>> {
    let p = &consts.params;
    check_points(points, p, Stage::Balance)?;
    let k = points.len();
    Ok((0..k)
        .map(|i| {
            let s: f64 = (0..k)
                .filter(|&m| m != i)
                .map(|m| {
                    q[m] * (big_r[i] * big_r[m]).powf(p.sigma)
                        * dist(&points[i], &points[m]).powf(-2.0 * p.sigma)
                })
                .sum();
            consts.a2 * s - q[i]
        })
        .collect())
}

/// Partial derivatives of the balance residual with respect to q and R.
pub fn balance_jacobians(
    points: &[Vec<f64>],
    q: &[f64],
    big_r: &[f64],
    consts: &InteractionConstants,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = &consts.params;
    let k = points.len();
    let coupling = |i: usize, m: usize| {
        consts.a2 * dist(&points[i], &points[m]).powf(-2.0 * p.sigma) * (big_r[i] * big_r[m]).powf(p.sigma)
    };
    let f_q = DMatrix::from_fn(k, k, |i, m| if i == m { -1.0 } else { coupling(i, m) });
    let f_r = DMatrix::from_fn(k, k, |i, m| {
        if i == m {
            p.sigma / big_r[i] * (0..k).filter(|&s| s != i).map(|s| coupling(i, s) * q[s]).sum::<f64>()
        } else {
            p.sigma / big_r[m] * coupling(i, m) * q[m]
        }
    });
    (f_q, f_r)
}

/// Result of the balancing solve.
#[derive(Debug, Clone)]
pub struct BalanceSolution {
    pub big_r: Vec<f64>,
    pub a_hat: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub f_q: DMatrix<f64>,
    pub f_r: DMatrix<f64>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn trace(history: &[f64]) -> String {
    let parts: Vec<String> = history.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Solves the first balancing condition for R with q fixed (minimum-norm
/// Newton steps), then evaluates the translations from the second.
pub fn solve_balance(
    points: &[Vec<f64>],
    q: &[f64],
    consts: &InteractionConstants,
) -> Result<BalanceSolution> {
    let p = &consts.params;
    let k = points.len();
    if k == 1 {
        return Err(Error::refused(
            Stage::Balance,
            format!("q_1 unsatisfiable: residual is -q_1 = {} for a single point", -q[0]),
        ));
    }
    if k == 0 || q.len() != k {
        return Err(Error::domain(Stage::Balance, "need one q per point and at least two points"));
    }
    if q.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain(Stage::Balance, "q_i must be positive"));
    }
    check_points(points, p, Stage::Balance)?;

    // uniform start matching the summed equations
    let mut denom = 0.0;
    for i in 0..k {
        for m in (0..k).filter(|&m| m != i) {
            denom += consts.a2 * q[m] * dist(&points[i], &points[m]).powf(-2.0 * p.sigma);
        }
    }
    let s = (q.iter().sum::<f64>() / denom).powf(1.0 / (2.0 * p.sigma));
    let mut big_r = vec![s; k];
    let mut res = balance1_residual(points, q, &big_r, consts)?;
    let mut history = vec![sup(&res)];
    let tol = 1e-10;
    let max_iter = 60;
    let mut it = 0;
    while sup(&res) > tol {
        if it == max_iter {
            return Err(Error::refused(
                Stage::Balance,
                format!("Newton stagnated; residual history {}", trace(&history)),
            ));
        }
        it += 1;
        let (_, f_r) = balance_jacobians(points, q, &big_r, consts);
        let rhs = DVector::from_iterator(k, res.iter().map(|v| -v));
        let step = f_r
            .svd(true, true)
            .solve(&rhs, 1e-12 * (1.0 + big_r.iter().cloned().fold(0.0, f64::max)))
            .map_err(|e| Error::refused(Stage::Balance, format!("singular Jacobian: {e}")))?;
        let mut damp = 1.0;
        let current = sup(&res);
        loop {
            let trial: Vec<f64> = big_r.iter().zip(step.iter()).map(|(r, d)| r + damp * d).collect();
            if trial.iter().all(|v| *v > 0.0) {
                let tr = balance1_residual(points, q, &trial, consts)?;
                if sup(&tr) < current || damp < 1e-3 {
                    big_r = trial;
                    res = tr;
                    break;
                }
            }
            damp *= 0.5;
            if damp < 1e-6 {
                return Err(Error::refused(
                    Stage::Balance,
                    format!("no admissible damped step; residual history {}", trace(&history)),
                ));
            }
        }
        history.push(sup(&res));
    }

    let a_hat = balance_translations(points, q, &big_r, consts);
    let (f_q, f_r) = balance_jacobians(points, q, &big_r, consts);
    Ok(BalanceSolution {
        big_r,
        a_hat,
        residual: sup(&res),
        iterations: it,
        history,
        f_q,
        f_r,
    })
}

/// `-(A3/A0) sum (p_i' - p_i)/|p_i' - p_i|^(2 sigma + 2) (q_i'/q_i) (R^i R^i')^sigma`.
pub fn balance_translations(
    points: &[Vec<f64>],
    q: &[f64],
    big_r: &[f64],
    consts: &InteractionConstants,
) -> Vec<Vec<f64>> {
    let p = &consts.params;
    let k = points.len();
    (0..k)
        .map(|i| {
            let mut a = vec![0.0; p.n];
            for m in (0..k).filter(|&m| m != i) {
                let d = dist(&points[i], &points[m]);
                let w = -consts.a3 / consts.a0 * d.powf(-2.0 * p.sigma - 2.0) * q[m] / q[i]
                    * (big_r[i] * big_r[m]).powf(p.sigma);
                for l in 0..p.n {
                    a[l] += w * (points[m][l] - points[i][l]);
                }
            }
            a
        })
        .collect()
}

/// Which ladder operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// Dilation ladder, rows (-1, 2, -1).
    R,
    /// Translation ladder, rows (-1, 1 + e^(-2L), -e^(-2L)).
    A,
}

fn stencil(which: Ladder, l_i: f64) -> (f64, f64, f64) {
    match which {
        Ladder::R => (-1.0, 2.0, -1.0),
        Ladder::A => {
            let e = (-2.0 * l_i).exp();
            (-1.0, 1.0 + e, -e)
        }
    }
}

/// Truncated banded product: row `j = 1..=J` is
/// `s0 x_(j-1) + s1 x_j + s2 x_(j+1)` with `x_J = x_(J+1) = 0`.
pub fn toda_apply(which: Ladder, x: &[f64], l_i: f64) -> Vec<f64> {
    assert!(x.len() >= 3, "ladder length must be at least 3");
    let (s0, s1, s2) = stencil(which, l_i);
    let at = |j: usize| x.get(j).copied().unwrap_or(0.0);
    (1..=x.len())
        .map(|j| s0 * at(j - 1) + s1 * at(j) + s2 * at(j + 1))
        .collect()
}

/// `sup_j exp((2j + 1) tau') |x_j|` over ladder slots `j = 0..`.
pub fn ladder_norm(x: &[f64], tau_prime: f64) -> f64 {
    weighted_sup(x.iter().map(|v| v.abs()), 0, tau_prime)
}

/// Weighted norm of a residual vector whose slot `s` holds row `s + 1`.
pub fn residual_norm(f: &[f64], tau_prime: f64) -> f64 {
    weighted_sup(f.iter().map(|v| v.abs()), 1, tau_prime)
}

fn weighted_sup<I: Iterator<Item = f64>>(vals: I, offset: usize, tau_prime: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (s, v) in vals.enumerate() {
        if v.is_nan() || v.is_infinite() {
            return f64::INFINITY;
        }
        if v > 0.0 {
            best = best.max(v.ln() + (2 * (s + offset) + 1) as f64 * tau_prime);
        }
    }
    if best == f64::NEG_INFINITY {
        0.0
    } else if best > LN_MAX {
        f64::INFINITY
    } else {
        best.exp()
    }
}

/// Inverse of a ladder operator with its measured weighted-bound constant.
#[derive(Debug, Clone)]
pub struct TodaInverse {
    pub ladder: Vec<f64>,
    /// `|x|_tau / (exp(-2 tau') |f|_tau)`; zero when `f = 0`.
    pub bound_constant: f64,
}

/// Solves `T x = f` on the truncated ladder with `x_J = x_(J+1) = 0`.
pub fn toda_invert(which: Ladder, f: &[f64], l_i: f64, tau_prime: f64) -> Result<TodaInverse> {
    let jn = f.len();
    if jn < 3 {
        return Err(Error::domain(Stage::Reduce, "ladder length must be at least 3"));
    }
    let fnorm = residual_norm(f, tau_prime);
    if !fnorm.is_finite() {
        return Err(Error::refused(
            Stage::Reduce,
            "right-hand side has infinite weighted norm",
        ));
    }
    let x = match which {
        Ladder::R => {
            let mut x = vec![0.0; jn + 2];
            for j in (1..=jn).rev() {
                x[j - 1] = 2.0 * x[j] - x[j + 1] - f[j - 1];
            }
            x.truncate(jn);
            x
        }
        Ladder::A => {
            let e = (-2.0 * l_i).exp();
            // partial geometric sums S_m = sum_{s < m} e^s
            let mut sums = vec![0.0; jn + 1];
            for m in 1..=jn {
                sums[m] = sums[m - 1] + e.powi(m as i32 - 1);
            }
            (0..jn)
                .map(|j| -(j + 1..=jn).map(|row| sums[row - j] * f[row - 1]).sum::<f64>())
                .collect()
        }
    };
    let back = toda_apply(which, &x, l_i);
    let scale = sup(f).max(f64::MIN_POSITIVE);
    let worst = back[..jn.saturating_sub(2)]
        .iter()
        .zip(f)
        .map(|(b, v)| (b - v).abs())
        .fold(0.0, f64::max);
    if worst > 1e-12 * scale {
        return Err(Error::refused(
            Stage::Reduce,
            format!("ladder inverse round trip off by {worst:.3e} relative to {scale:.3e}"),
        ));
    }
    let bound_constant = if fnorm == 0.0 {
        0.0
    } else {
        ladder_norm(&x, tau_prime) / ((-2.0 * tau_prime).exp() * fnorm)
    };
    Ok(TodaInverse { ladder: x, bound_constant })
}

/// Ladders `r_j^i` and `a~_j^i` for `j = 0..J`, zero beyond.
#[derive(Debug, Clone)]
pub struct TowerPerturbation {
    pub depth: usize,
    pub tau: f64,
    pub r: Vec<Vec<f64>>,
    pub a_tilde: Vec<Vec<Vec<f64>>>,
}

impl TowerPerturbation {
    pub fn zeros(cfg: &Configuration, depth: usize, tau: f64) -> Self {
        TowerPerturbation {
            depth,
            tau,
            r: vec![vec![0.0; depth]; cfg.k()],
            a_tilde: vec![vec![vec![0.0; cfg.params.n]; depth]; cfg.k()],
        }
    }

    /// Weight exponent tau' = tau L_i / 2.
    pub fn tau_prime(&self, cfg: &Configuration, i: usize) -> f64 {
        self.tau * cfg.l_i(i) / 2.0
    }

    pub fn r_at(&self, i: usize, j: usize) -> f64 {
        self.r[i].get(j).copied().unwrap_or(0.0)
    }

    /// a-bar_j = a^_0 + a~_j.
    pub fn a_bar(&self, cfg: &Configuration, i: usize, j: usize) -> Vec<f64> {
        match self.a_tilde[i].get(j) {
            Some(t) => cfg.a_hat[i].iter().zip(t).map(|(a, b)| a + b).collect(),
            None => cfg.a_hat[i].clone(),
        }
    }

    /// R_j = R (1 + r_j).
    pub fn big_r_j(&self, cfg: &Configuration, i: usize, j: usize) -> f64 {
        cfg.big_r[i] * (1.0 + self.r_at(i, j))
    }

    /// t_j = (1/2 + j) L_i.
    pub fn t_j(&self, cfg: &Configuration, i: usize, j: usize) -> f64 {
        (0.5 + j as f64) * cfg.l_i(i)
    }

    pub fn lambda(&self, cfg: &Configuration, i: usize, j: usize) -> f64 {
        self.big_r_j(cfg, i, j) * (-(1.0 + 2.0 * j as f64) * cfg.l_i(i) / 2.0).exp()
    }

    /// Translation a_j = lambda_j^2 a-bar_j.
    pub fn a_j(&self, cfg: &Configuration, i: usize, j: usize) -> Vec<f64> {
        let l2 = self.lambda(cfg, i, j).powi(2);
        self.a_bar(cfg, i, j).into_iter().map(|v| v * l2).collect()
    }

    /// ln(lambda_j / lambda_j') without forming the tiny scales.
    fn log_ratio(&self, cfg: &Configuration, i: usize, j: usize, jp: usize) -> f64 {
        (self.r_at(i, j).ln_1p() - self.r_at(i, jp).ln_1p()) - (j as f64 - jp as f64) * cfg.l_i(i)
    }

    pub fn r_norm(&self, cfg: &Configuration, i: usize) -> f64 {
        ladder_norm(&self.r[i], self.tau_prime(cfg, i))
    }

    pub fn a_norm(&self, cfg: &Configuration, i: usize) -> f64 {
        let mags: Vec<f64> = self.a_tilde[i]
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        ladder_norm(&mags, self.tau_prime(cfg, i))
    }
}

/// Number of tower neighbours on each side kept in the ladder sums.
fn neighbour_reach(cfg: &Configuration, i: usize) -> usize {
    1 + (40.0 / (cfg.params.sigma * cfg.l_i(i))).ceil() as usize
}

/// Row `j >= 1` of point `i`: `(beta_{j,0}, beta_{j,l} / lambda_j)`.
fn tower_row(
    cfg: &Configuration,
    pert: &TowerPerturbation,
    consts: &InteractionConstants,
    i: usize,
    j: usize,
) -> (f64, Vec<f64>) {
    let p = &cfg.params;
    let c = p.c_bubble;
    let reach = neighbour_reach(cfg, i);
    let abar_j = pert.a_bar(cfg, i, j);
    let mut b0 = 0.0;
    let mut bl = vec![0.0; p.n];
    // pair up j - d and j + d so unperturbed contributions cancel exactly
    for d in 1..=reach {
        for jp in [j.checked_sub(d), Some(j + d)].into_iter().flatten() {
            let ell = pert.log_ratio(cfg, i, j, jp);
            b0 += c * consts.f(-ell);
            let ratio = (-p.sigma * ell.abs()).exp();
            let big = ell.max(0.0);
            let wj = (2.0 * (ell - big)).exp();
            let wp = (-2.0 * big).exp();
            let abar_p = pert.a_bar(cfg, i, jp);
            for l in 0..p.n {
                bl[l] += ratio * (wj * abar_j[l] - wp * abar_p[l]);
            }
        }
    }
    for v in &mut bl {
        *v *= c * consts.a0;
    }
    (b0, bl)
}

/// Bracketed j = 0 rows: `(beta_{0,0}, beta_{0,l} / lambda_0) / (c q_i e^(-sigma L))`.
fn base_rows(
    cfg: &Configuration,
    pert: &TowerPerturbation,
    consts: &InteractionConstants,
    i: usize,
) -> (f64, Vec<f64>) {
    let p = &cfg.params;
    let r0 = |m: usize| pert.big_r_j(cfg, m, 0);
    let mut cross = 0.0;
    let mut trans = vec![0.0; p.n];
    for m in (0..cfg.k()).filter(|&m| m != i) {
        let d = dist(&cfg.points[i], &cfg.points[m]);
        let w = (r0(i) * r0(m)).powf(p.sigma) * cfg.q[m];
        cross += consts.a2 * d.powf(-2.0 * p.sigma) * w;
        for l in 0..p.n {
            trans[l] += consts.a3 * (cfg.points[m][l] - cfg.points[i][l]) * d.powf(-2.0 * p.sigma - 2.0) * w;
        }
    }
    let self_ratio = (pert.big_r_j(cfg, i, 1) / r0(i)).powf(p.sigma);
    let row0 = -(cross - self_ratio * cfg.q[i]);
    // (a_0 - a_1) / lambda_0^2 = a-bar_0 - (lambda_1 / lambda_0)^2 a-bar_1
    let shrink = (2.0 * pert.log_ratio(cfg, i, 1, 0)).exp();
    let (ab0, ab1) = (pert.a_bar(cfg, i, 0), pert.a_bar(cfg, i, 1));
    let rows = (0..p.n)
        .map(|l| trans[l] + consts.a0 * self_ratio * (ab0[l] - shrink * ab1[l]) * cfg.q[i])
        .collect();
    (row0, rows)
}

/// Leading-order coefficients `beta[i][j][l]` for `j = 0..=J`, `l = 0..=n`.
pub fn beta_leading(
    cfg: &Configuration,
    pert: &TowerPerturbation,
    consts: &InteractionConstants,
) -> Vec<Vec<Vec<f64>>> {
    let p = &cfg.params;
    (0..cfg.k())
        .map(|i| {
            let scale = p.c_bubble * cfg.q[i] * (-p.sigma * cfg.l).exp();
            let (row0, rows) = base_rows(cfg, pert, consts, i);
            let lam0 = pert.lambda(cfg, i, 0);
            let mut out = Vec::with_capacity(pert.depth + 1);
            let mut first = vec![scale * row0];
            first.extend(rows.iter().map(|v| scale * lam0 * v));
            out.push(first);
            for j in 1..=pert.depth {
                let (b0, bl) = tower_row(cfg, pert, consts, i, j);
                let lam = pert.lambda(cfg, i, j);
                let mut row = vec![b0];
                row.extend(bl.iter().map(|v| v * lam));
                out.push(row);
            }
            out
        })
        .collect()
}

/// Normalized j = 0 rows of every point, concatenated as
/// `[row0_1, row_1..row_n of point 1, row0_2, ...]`.
pub fn base_residual(cfg: &Configuration, pert: &TowerPerturbation, consts: &InteractionConstants) -> Vec<f64> {
    (0..cfg.k())
        .flat_map(|i| {
            let (r0, rl) = base_rows(cfg, pert, consts, i);
            std::iter::once(r0).chain(rl)
        })
        .collect()
}

/// Outcome of the ladder fixed-point iteration for one point.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub iterations: usize,
    /// Weighted norms of successive updates.
    pub steps: Vec<f64>,
    /// Largest ratio of successive update norms over the first three ratios.
    pub contraction: f64,
}

fn measured_contraction(steps: &[f64]) -> f64 {
    let floor = 1e-13 * steps.first().copied().unwrap_or(0.0);
    steps
        .windows(2)
        .take(3)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// Fixed-point iteration for the ladders of point `i` with the base
/// parameters held fixed.
pub fn solve_ladders(
    cfg: &Configuration,
    pert: &mut TowerPerturbation,
    consts: &InteractionConstants,
    i: usize,
    tol: f64,
    max_iter: usize,
) -> Result<InnerSolve> {
    let p = &cfg.params;
    let depth = pert.depth;
    if depth < 3 {
        return Err(Error::domain(Stage::Reduce, "ladder depth must be at least 3"));
    }
    let l_i = cfg.l_i(i);
    let tp = pert.tau_prime(cfg, i);
    let s0 = -p.c_bubble * consts.df(l_i);
    let sa = p.c_bubble * consts.a0 * (-p.sigma * l_i).exp();
    let mut steps = Vec::new();
    for it in 1..=max_iter {
        let rows: Vec<(f64, Vec<f64>)> = (1..=depth).map(|j| tower_row(cfg, pert, consts, i, j)).collect();
        let f0: Vec<f64> = rows.iter().map(|r| r.0 / s0).collect();
        let dr = toda_invert(Ladder::R, &f0, l_i, tp)?.ladder;
        let mut da = vec![vec![0.0; p.n]; depth];
        for l in 0..p.n {
            let fl: Vec<f64> = rows.iter().map(|r| r.1[l] / sa).collect();
            let col = toda_invert(Ladder::A, &fl, l_i, tp)?.ladder;
            for j in 0..depth {
                da[j][l] = col[j];
            }
        }
        for j in 0..depth {
            pert.r[i][j] -= dr[j];
            if pert.r[i][j] <= -1.0 {
                return Err(Error::refused(Stage::Reduce, "dilation ladder left the admissible range"));
            }
            for l in 0..p.n {
                pert.a_tilde[i][j][l] -= da[j][l];
            }
        }
        let mags: Vec<f64> = da.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let step = ladder_norm(&dr, tp) + ladder_norm(&mags, tp);
        if !step.is_finite() {
            return Err(Error::refused(Stage::Reduce, "ladder iteration produced a non-finite update"));
        }
        steps.push(step);
        if steps.len() >= 4 && measured_contraction(&steps) >= 1.0 {
            return Err(Error::refused(
                Stage::Reduce,
                format!(
                    "ladder map is not contracting (factor {:.3}); L = {} is outside the asymptotic regime",
                    measured_contraction(&steps),
                    cfg.l
                ),
            ));
        }
        if step < tol {
            return Ok(InnerSolve {
                iterations: it,
                contraction: measured_contraction(&steps),
                steps,
            });
        }
    }
    Err(Error::NoConvergence {
        stage: Stage::Reduce,
        iterations: max_iter,
        residual: steps.last().copied().unwrap_or(f64::NAN),
    })
}

/// Settings of the reduced solve.
#[derive(Debug, Clone, Copy)]
pub struct ReducedSettings {
    /// Ladder decay weight; `None` means 0.2 sigma.
    pub tau: Option<f64>,
    pub depth: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub max_spread: f64,
}

impl Default for ReducedSettings {
    fn default() -> Self {
        ReducedSettings {
            tau: None,
            depth: 8,
            inner_tol: 1e-10,
            inner_max_iter: 50,
            outer_tol: 1e-10,
            outer_max_iter: 30,
            max_spread: DEFAULT_MAX_SPREAD,
        }
    }
}

/// Diagnostics of the reduced solve.
#[derive(Debug, Clone)]
pub struct ReducedReport {
    pub balance: BalanceSolution,
    pub outer_iterations: usize,
    /// Sup norm of the normalized j = 0 rows per outer iteration.
    pub outer_history: Vec<f64>,
    pub outer_residual: f64,
    /// Inner iteration count and contraction factor per point, from a cold
    /// start at the final base parameters.
    pub inner_iterations: Vec<usize>,
    pub contraction: f64,
    /// `(|a~|_tau + |r|_tau) e^(tau L)`, maximized over points.
    pub ball_constant: f64,
    /// Largest |beta_{j,l}| over all rows after convergence.
    pub max_beta: f64,
}

fn unpack(
    template: &Configuration,
    z: &[f64],
) -> Result<Configuration> {
    let k = template.k();
    let n = template.params.n;
    let big_r = z[..k].to_vec();
    let q = z[k..2 * k].to_vec();
    let a_hat = (0..k).map(|i| z[2 * k + i * n..2 * k + (i + 1) * n].to_vec()).collect();
    Configuration::new(
        template.params,
        template.points.clone(),
        q,
        template.l,
        big_r,
        a_hat,
        template.max_spread,
    )
}

fn pack(cfg: &Configuration) -> Vec<f64> {
    let mut z = cfg.big_r.clone();
    z.extend(&cfg.q);
    for a in &cfg.a_hat {
        z.extend(a);
    }
    z
}

/// Inner solves for every point followed by the normalized base rows.
fn outer_eval(
    cfg: &Configuration,
    pert: &mut TowerPerturbation,
    consts: &InteractionConstants,
    s: &ReducedSettings,
) -> Result<(Vec<f64>, Vec<InnerSolve>)> {
    let mut inner = Vec::with_capacity(cfg.k());
    for i in 0..cfg.k() {
        inner.push(solve_ladders(cfg, pert, consts, i, s.inner_tol, s.inner_max_iter)?);
    }
    Ok((base_residual(cfg, pert, consts), inner))
}

/// Nested solve: balancing start, ladder fixed point for rows j >= 1 and
/// minimum-norm Newton on (R, q, a^) for the j = 0 rows.
pub fn solve_reduced(
    params: &ProblemParams,
    points: &[Vec<f64>],
    q_seed: &[f64],
    l: f64,
    settings: &ReducedSettings,
    consts: &InteractionConstants,
) -> Result<(Configuration, TowerPerturbation, ReducedReport)> {
    if !(l >= 8.0) {
        return Err(Error::domain(Stage::Reduce, format!("L = {l} below 8")));
    }
    let tau = settings.tau.unwrap_or(0.2 * params.sigma);
    if !(tau > 0.0 && tau < params.sigma) {
        return Err(Error::domain(
            Stage::Reduce,
            format!("tau = {tau} must lie in (0, sigma = {})", params.sigma),
        ));
    }
    let balance = solve_balance(points, q_seed, consts)?;
    let mut cfg = Configuration::new(
        *params,
        points.to_vec(),
        q_seed.to_vec(),
        l,
        balance.big_r.clone(),
        balance.a_hat.clone(),
        settings.max_spread,
    )?;
    let mut pert = TowerPerturbation::zeros(&cfg, settings.depth, tau);
    let (mut g, _) = outer_eval(&cfg, &mut pert, consts, settings)?;
    let mut history = vec![sup(&g)];
    let mut it = 0;
    while sup(&g) > settings.outer_tol {
        if it == settings.outer_max_iter {
            return Err(Error::refused(
                Stage::Reduce,
                format!("outer Newton did not converge; residual trace {}", trace(&history)),
            ));
        }
        it += 1;
        let z = pack(&cfg);
        let m = g.len();
        let cols: Vec<Result<Vec<f64>>> = (0..z.len())
            .into_par_iter()
            .map(|c| {
                let h = 1e-7 * z[c].abs().max(1.0);
                let mut zp = z.clone();
                zp[c] += h;
                let cp = unpack(&cfg, &zp)?;
                let mut pp = pert.clone();
                let (gp, _) = outer_eval(&cp, &mut pp, consts, settings)?;
                Ok(gp.iter().zip(&g).map(|(a, b)| (a - b) / h).collect())
            })
            .collect();
        let mut jac = DMatrix::zeros(m, z.len());
        for (c, col) in cols.into_iter().enumerate() {
            let col = col?;
            for r in 0..m {
                jac[(r, c)] = col[r];
            }
        }
        let rhs = DVector::from_iterator(m, g.iter().map(|v| -v));
        let step = jac
            .svd(true, true)
            .solve(&rhs, 1e-10)
            .map_err(|e| Error::refused(Stage::Reduce, format!("outer Jacobian solve failed: {e}")))?;
        let current = sup(&g);
        let mut damp = 1.0;
        loop {
            let zt: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a + damp * d).collect();
            let trial = unpack(&cfg, &zt).and_then(|ct| {
                let mut pt = pert.clone();
                let (gt, _) = outer_eval(&ct, &mut pt, consts, settings)?;
                Ok((ct, pt, gt))
            });
            if let Ok((ct, pt, gt)) = trial {
                if sup(&gt) < current {
                    cfg = ct;
                    pert = pt;
                    g = gt;
                    break;
                }
            }
            damp *= 0.5;
            if damp < 1e-4 {
                return Err(Error::refused(
                    Stage::Reduce,
                    format!("outer Newton diverged; residual trace {}", trace(&history)),
                ));
            }
        }
        history.push(sup(&g));
    }

    // cold restart of the ladders at the final base parameters for the
    // contraction diagnostics
    let mut cold = TowerPerturbation::zeros(&cfg, settings.depth, tau);
    let (_, inner) = outer_eval(&cfg, &mut cold, consts, settings)?;
    let contraction = inner.iter().map(|s| s.contraction).fold(0.0, f64::max);
    let ball_constant = (0..cfg.k())
        .map(|i| (pert.a_norm(&cfg, i) + pert.r_norm(&cfg, i)) * (tau * l).exp())
        .fold(0.0, f64::max);
    let beta = beta_leading(&cfg, &pert, consts);
    let max_beta = beta
        .iter()
        .flat_map(|b| b.iter().flat_map(|row| row.iter()))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let report = ReducedReport {
        balance,
        outer_iterations: it,
        outer_residual: sup(&g),
        outer_history: history,
        inner_iterations: inner.iter().map(|s| s.iterations).collect(),
        contraction,
        ball_constant,
        max_beta,
    };
    Ok((cfg, pert, report))
}

/// Central-difference Jacobian of the dilation rows `beta_{j,0}`, `j = 1..=J`,
/// of point `i` with respect to `r_0..r_(J-1)`.
pub fn dilation_jacobian(
    cfg: &Configuration,
    pert: &TowerPerturbation,
    consts: &InteractionConstants,
    i: usize,
    h: f64,
) -> DMatrix<f64> {
    let depth = pert.depth;
    let rows = |pp: &TowerPerturbation| -> Vec<f64> {
        (1..=depth).map(|j| tower_row(cfg, pp, consts, i, j).0).collect()
    };
    let mut jac = DMatrix::zeros(depth, depth);
    for c in 0..depth {
        let mut plus = pert.clone();
        let mut minus = pert.clone();
        plus.r[i][c] += h;
        minus.r[i][c] -= h;
        let (bp, bm) = (rows(&plus), rows(&minus));
        for r in 0..depth {
            jac[(r, c)] = (bp[r] - bm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Largest `|J[row j, col j']| / |J[row j, col j]|` over `|j - j'| >= 2`,
/// where row `j` (slot `j - 1`) pairs with ladder column `j`.
pub fn off_band_ratio(jac: &DMatrix<f64>) -> f64 {
    let n = jac.nrows();
    let mut worst = 0.0f64;
    for s in 0..n {
        let j = s + 1;
        let diag = if j < jac.ncols() { jac[(s, j)] } else { jac[(s, j - 1)] };
        for c in 0..jac.ncols() {
            if (c as i64 - j as i64).abs() >= 2 {
                worst = worst.max(jac[(s, c)].abs() / diag.abs());
            }
        }
    }
    worst
}

/// Decay of the j >= 1 rows for ladders on the edge of the decay class,
/// `r_j = a~_j,1 = eps exp(-tau t_j)`.
#[derive(Debug, Clone)]
pub struct RowDecay {
    /// `|beta_{j,0}|` and `|beta_{j,l}| / lambda_j` (largest l) for j = 1..=5.
    pub dilation: Vec<f64>,
    pub translation: Vec<f64>,
    /// Fitted slopes of the logarithms against `t_{j-1}`.
    pub dilation_slope: f64,
    pub translation_slope: f64,
    /// `max_j |beta_{j,0}| / (e^(-sigma L) e^(-tau t_{j-1}))`.
    pub bound_constant: f64,
}

pub fn row_decay(
    cfg: &Configuration,
    consts: &InteractionConstants,
    depth: usize,
    tau: f64,
    eps: f64,
    i: usize,
) -> RowDecay {
    let p = &cfg.params;
    let mut pert = TowerPerturbation::zeros(cfg, depth, tau);
    for j in 0..depth {
        let w = eps * (-tau * pert.t_j(cfg, i, j)).exp();
        pert.r[i][j] = w;
        pert.a_tilde[i][j][0] = w;
    }
    let js: Vec<usize> = (1..=5.min(depth.saturating_sub(2))).collect();
    let mut dil = Vec::new();
    let mut tr = Vec::new();
    let mut ts = Vec::new();
    let mut bound = 0.0f64;
    for &j in &js {
        let (b0, bl) = tower_row(cfg, &pert, consts, i, j);
        let t = pert.t_j(cfg, i, j - 1);
        dil.push(b0.abs());
        tr.push(bl.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        ts.push(t);
        bound = bound.max(b0.abs() / ((-p.sigma * cfg.l).exp() * (-tau * t).exp()));
    }
    let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<f64>>();
    RowDecay {
        dilation_slope: linear_fit(&ts, &ln(&dil)).slope,
        translation_slope: linear_fit(&ts, &ln(&tr)).slope,
        dilation: dil,
        translation: tr,
        bound_constant: bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::appendix_constants;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn consts() -> &'static InteractionConstants {
        static C: OnceLock<InteractionConstants> = OnceLock::new();
        C.get_or_init(|| appendix_constants(&ProblemParams::new(3, 0.5).unwrap()))
    }

    fn pair(d: f64) -> Vec<Vec<f64>> {
        vec![vec![-d / 2.0, 0.0, 0.0], vec![d / 2.0, 0.0, 0.0]]
    }

    fn triangle(side: f64) -> Vec<Vec<f64>> {
        let rad = side / 3f64.sqrt();
        (0..3)
            .map(|m| {
                let th = 2.0 * PI * m as f64 / 3.0;
                vec![rad * th.cos(), rad * th.sin(), 0.0]
            })
            .collect()
    }

    #[test]
    fn balance_residual_examples() {
        let c = consts();
        let one = balance1_residual(&[vec![0.0; 3]], &[0.7], &[1.0], c).unwrap();
        assert_eq!(one, vec![-0.7]);
        let r = balance1_residual(&pair(1.0), &[1.0, 1.0], &[1.0 / PI, 1.0 / PI], c).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-9), "{r:?}");
        // joint dilation of points and R
        let pts = triangle(3.0);
        let q = [1.0, 1.3, 0.8];
        let big_r = [0.4, 0.5, 0.6];
        let base = balance1_residual(&pts, &q, &big_r, c).unwrap();
        let s = 2.7;
        let pts2: Vec<Vec<f64>> = pts.iter().map(|x| x.iter().map(|v| v * s).collect()).collect();
        let r2: Vec<f64> = big_r.iter().map(|v| v * s).collect();
        let scaled = balance1_residual(&pts2, &q, &r2, c).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(balance1_residual(&[vec![0.0; 3], vec![0.0; 3]], &[1.0, 1.0], &[1.0, 1.0], c).is_err());
    }

    #[test]
    fn symmetric_pair_balance() {
        let c = consts();
        let sol = solve_balance(&pair(1.0), &[1.0, 1.0], c).unwrap();
        for r in &sol.big_r {
            assert!((r - 1.0 / PI).abs() < 1e-8, "{r}");
        }
        let q = DVector::from_vec(vec![1.0, 1.0]);
        assert!((&sol.f_q * &q).amax() < 1e-10);
        // translations point towards the partner and are opposite
        assert!(sol.a_hat[0][0] > 0.0 && (sol.a_hat[0][0] + sol.a_hat[1][0]).abs() < 1e-14);
    }

    #[test]
    fn balance_range_identity() {
        let c = consts();
        let pts = triangle(3.0);
        let q = [1.0, 1.2, 0.9];
        let sol = solve_balance(&pts, &q, c).unwrap();
        assert!(sol.residual <= 1e-10);
        let rv = DVector::from_vec(sol.big_r.clone());
        let lhs = &sol.f_r * &rv;
        // F_R R = 2 sigma q at a balanced point
        for i in 0..3 {
            assert!((lhs[i] - 2.0 * c.params.sigma * q[i]).abs() < 1e-10, "{lhs}");
        }
        let qv = DVector::from_vec(q.to_vec());
        assert!((&sol.f_q * &qv).amax() < 1e-10);
    }

    #[test]
    fn balance_relabeling() {
        let c = consts();
        let pts = vec![vec![0.0, 0.0, 0.0], vec![3.0, 0.5, 0.0], vec![0.7, 2.9, 1.0], vec![-2.0, 1.0, 2.5]];
        let q = [1.0, 0.9, 1.1, 1.05];
        let a = solve_balance(&pts, &q, c).unwrap();
        let perm = [2, 0, 3, 1];
        let pts2: Vec<Vec<f64>> = perm.iter().map(|&m| pts[m].clone()).collect();
        let q2: Vec<f64> = perm.iter().map(|&m| q[m]).collect();
        let b = solve_balance(&pts2, &q2, c).unwrap();
        for (s, &m) in perm.iter().enumerate() {
            assert!((b.big_r[s] - a.big_r[m]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_point_unsatisfiable() {
        let err = solve_balance(&[vec![0.0; 3]], &[1.0], consts()).unwrap_err();
        assert!(err.to_string().contains("q_1 unsatisfiable"));
        assert_eq!(err.code(), "balance.refused");
    }

    fn dense(which: Ladder, jn: usize, l: f64) -> DMatrix<f64> {
        let (s0, s1, s2) = stencil(which, l);
        DMatrix::from_fn(jn, jn, |r, c| {
            let j = r + 1;
            if c + 1 == j {
                s0
            } else if c == j {
                s1
            } else if c == j + 1 {
                s2
            } else {
                0.0
            }
        })
    }

    #[test]
    fn toda_apply_examples() {
        let ones = vec![1.0; 10];
        let tr = toda_apply(Ladder::R, &ones, 10.0);
        assert!(tr[..8].iter().all(|v| *v == 0.0));
        assert_eq!(tr[8], 1.0);
        let ta = toda_apply(Ladder::A, &ones, 10.0);
        assert!(ta[..8].iter().all(|v| v.abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for which in [Ladder::R, Ladder::A] {
            let y = toda_apply(which, &x, 10.0);
            let d = dense(which, 200, 10.0) * DVector::from_vec(x.clone());
            for (a, b) in y.iter().zip(d.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn toda_invert_examples() {
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        let inv = toda_invert(Ladder::A, &e1, 10.0, 1.0).unwrap();
        assert_eq!(inv.ladder[0], -1.0);
        assert!(inv.ladder[1..].iter().all(|v| *v == 0.0));
        assert_eq!(toda_apply(Ladder::A, &inv.ladder, 10.0), e1);

        let zero = toda_invert(Ladder::R, &[0.0; 10], 10.0, 1.0).unwrap();
        assert!(zero.ladder.iter().all(|v| *v == 0.0));

        let tp = 1.0;
        let f: Vec<f64> = (1..=30).map(|row| (-(2 * row + 1) as f64 * tp).exp()).collect();
        assert!((residual_norm(&f, tp) - 1.0).abs() < 1e-12);
        for which in [Ladder::R, Ladder::A] {
            let inv = toda_invert(which, &f, 10.0, tp).unwrap();
            assert!(inv.bound_constant <= 4.0, "{which:?} {}", inv.bound_constant);
        }
        let blow: Vec<f64> = vec![1.0; 400];
        assert!(toda_invert(Ladder::R, &blow, 10.0, 1.0).is_err());
    }

    #[test]
    fn toda_round_trip_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let jn = 200;
        for which in [Ladder::R, Ladder::A] {
            let mut x = vec![0.0; jn];
            for v in x[2..jn - 3].iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let f = toda_apply(which, &x, 10.0);
            let back = toda_invert(which, &f, 10.0, 0.01).unwrap().ladder;
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn symmetric_config(l: f64) -> Configuration {
        let c = consts();
        let pts = pair(2.0);
        let sol = solve_balance(&pts, &[1.0, 1.0], c).unwrap();
        Configuration::new(c.params, pts, vec![1.0, 1.0], l, sol.big_r, sol.a_hat, DEFAULT_MAX_SPREAD).unwrap()
    }

    #[test]
    fn configuration_invariants() {
        let c = consts();
        let p = c.params;
        let mk = |pts: Vec<Vec<f64>>, q: Vec<f64>| {
            Configuration::new(p, pts, q, 10.0, vec![1.0, 1.0], vec![vec![0.0; 3]; 2], 4.0)
        };
        assert!(mk(pair(1.0), vec![1.0, 1.0]).is_err());
        assert!(mk(pair(2.0), vec![1.0, -1.0]).is_err());
        assert!(mk(pair(2.0), vec![1.0, 100.0]).is_err());
        let cfg = mk(pair(2.0), vec![1.0, 2.0]).unwrap();
        assert!((cfg.l_i(1) - (10.0 - 2.0 * 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn balanced_base_row_vanishes() {
        let cfg = symmetric_config(12.0);
        let pert = TowerPerturbation::zeros(&cfg, 8, 0.2);
        let beta = beta_leading(&cfg, &pert, consts());
        for b in &beta {
            assert!(b[0][0].abs() < 1e-10);
        }
        let base = base_residual(&cfg, &pert, consts());
        assert!(base[0].abs() < 1e-12);
    }

    #[test]
    fn dilation_jacobian_is_toda() {
        let c = consts();
        let cfg = symmetric_config(12.0);
        let pert = TowerPerturbation::zeros(&cfg, 8, 0.2);
        let jac = dilation_jacobian(&cfg, &pert, c, 0, 1e-6);
        let fp = c.df(cfg.l_i(0));
        let cc = c.params.c_bubble;
        for s in 1..6 {
            let j = s + 1;
            assert!((jac[(s, j)] / (-2.0 * cc * fp) - 1.0).abs() < 0.03);
            assert!((jac[(s, j - 1)] / (cc * fp) - 1.0).abs() < 0.03);
            assert!((jac[(s, j + 1)] / (cc * fp) - 1.0).abs() < 0.03);
        }
        assert!(off_band_ratio(&jac) < 0.05);
    }

    #[test]
    fn rows_decay_in_the_tower() {
        let cfg = symmetric_config(12.0);
        let tau = 0.2;
        let d = row_decay(&cfg, consts(), 8, tau, (-tau * 12.0).exp(), 0);
        assert!(d.dilation_slope <= -0.95 * tau, "{d:?}");
        assert!(d.translation_slope <= -0.95 * tau, "{d:?}");
        assert!(d.bound_constant.is_finite());
    }

    #[test]
    fn reduced_symmetric_pair() {
        let c = consts();
        let s = ReducedSettings::default();
        let (cfg, pert, rep) = solve_reduced(&c.params, &pair(2.0), &[1.0, 1.0], 12.0, &s, c).unwrap();
        assert!(rep.outer_residual <= 1e-10);
        assert!(rep.max_beta <= 1e-9);
        assert!(rep.contraction < 0.5);
        assert!(rep.ball_constant < 1.0, "{}", rep.ball_constant);
        assert!((cfg.big_r[0] - cfg.big_r[1]).abs() < 1e-9);
        assert!((pert.r[0][0] - pert.r[1][0]).abs() < 1e-12);
    }

    #[test]
    fn reduced_triangle_symmetry() {
        let c = consts();
        let s = ReducedSettings::default();
        let (cfg, _, rep) = solve_reduced(&c.params, &triangle(3.0), &[1.0; 3], 12.0, &s, c).unwrap();
        assert!(rep.outer_residual <= 1e-10);
        for i in 1..3 {
            assert!((cfg.big_r[i] - cfg.big_r[0]).abs() < 1e-9);
        }
        // a^ of point 1 is the rotation of a^ of point 0 by 120 degrees
        let th = 2.0 * PI / 3.0;
        let a0 = &cfg.a_hat[0];
        let rot = [th.cos() * a0[0] - th.sin() * a0[1], th.sin() * a0[0] + th.cos() * a0[1]];
        let scale = a0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!((rot[0] - cfg.a_hat[1][0]).abs() < 1e-7 * scale);
        assert!((rot[1] - cfg.a_hat[1][1]).abs() < 1e-7 * scale);
    }

    #[test]
    fn reduced_rejects_small_l() {
        let c = consts();
        let s = ReducedSettings::default();
        assert!(solve_reduced(&c.params, &pair(2.0), &[1.0, 1.0], 6.0, &s, c).is_err());
    }
}
