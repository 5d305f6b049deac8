//! Global approximate solution built from bubble towers and Delaunay
//! correctors, its residual, weighted sup norms and their decay in L.

use crate::delaunay::{bubble, solve_delaunay, DelaunayProfile, DelaunaySettings};
use crate::error::{Error, Result, Stage};
use crate::fit::linear_fit;
use crate::fracops::{KernelTable, ProblemParams};
use crate::interactions::InteractionConstants;
use crate::reduced_system::{solve_reduced, Configuration, ReducedSettings, TowerPerturbation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Radius inside which the Delaunay corrector is fully switched on.
pub const CUTOFF_INNER: f64 = 0.5;
/// Radius beyond which it is switched off.
pub const CUTOFF_OUTER: f64 = 1.0;

/// C^2 smoothstep cutoff: 1 for r <= 1/2, 0 for r >= 1.
pub fn cutoff(r: f64) -> f64 {
    if r <= CUTOFF_INNER {
        1.0
    } else if r >= CUTOFF_OUTER {
        0.0
    } else {
        let s = (r - CUTOFF_INNER) / (CUTOFF_OUTER - CUTOFF_INNER);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// How many bubbles a tower carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// Exactly bubbles `j = 0..m`.
    Finite(usize),
    /// The ladder followed by unperturbed bubbles, summed until negligible
    /// with a geometric remainder.
    Infinite,
}

/// One point's tower: centre, scales and translations.
#[derive(Debug, Clone)]
pub struct TowerSpec {
    pub centre: Vec<f64>,
    pub l_i: f64,
    pub big_r: f64,
    /// Dilation ladder r_j.
    pub r: Vec<f64>,
    /// a-bar_j = a^ + a~_j for the ladder range; `a_hat` beyond it.
    pub a_bar: Vec<Vec<f64>>,
    pub a_hat: Vec<f64>,
    pub extent: Extent,
}

impl TowerSpec {
    fn log_lambda0(&self, j: usize) -> f64 {
        self.big_r.ln() - (0.5 + j as f64) * self.l_i
    }

    fn r_at(&self, j: usize) -> f64 {
        self.r.get(j).copied().unwrap_or(0.0)
    }

    fn a_bar_at(&self, j: usize) -> &[f64] {
        self.a_bar.get(j).map(|v| v.as_slice()).unwrap_or(&self.a_hat)
    }

    /// Perturbed scale and translation of bubble j.
    pub fn bubble_params(&self, j: usize) -> (f64, Vec<f64>) {
        let lam = (self.log_lambda0(j) + self.r_at(j).ln_1p()).exp();
        let a = self.a_bar_at(j).iter().map(|v| v * lam * lam).collect();
        (lam, a)
    }
}

/// Values of the individual bubbles of one tower at a point, with the
/// geometric remainder of an infinite tower.
#[derive(Debug, Clone, Default)]
struct TowerTerms {
    terms: Vec<f64>,
    tail: f64,
    tail_beta: f64,
}

fn bubble_rn(lam: f64, d2: f64, sigma: f64) -> f64 {
    (lam / (lam * lam + d2)).powf(sigma)
}

/// Bubbles of tower `t` at offset `y = x - centre`.
fn tower_terms(t: &TowerSpec, y: &[f64], p: &ProblemParams) -> TowerTerms {
    let rho = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = TowerTerms::default();
    let eval = |j: usize| {
        let (lam, a) = t.bubble_params(j);
        let d2: f64 = y.iter().zip(&a).map(|(yv, av)| (yv - av).powi(2)).sum();
        (lam, bubble_rn(lam, d2, p.sigma))
    };
    match t.extent {
        Extent::Finite(m) => {
            for j in 0..m {
                out.terms.push(eval(j).1);
            }
        }
        Extent::Infinite => {
            let mut sum = 0.0;
            let mut j = 0;
            loop {
                let (lam, w) = eval(j);
                out.terms.push(w);
                sum += w;
                j += 1;
                if j >= t.r.len() && lam < 1e-3 * rho && w < 1e-18 * sum {
                    let qr = (-p.sigma * t.l_i).exp();
                    out.tail = w * qr / (1.0 - qr);
                    let qb = qr.powf(p.beta);
                    out.tail_beta = w.powf(p.beta) * qb / (1.0 - qb);
                    break;
                }
                if j > 100_000 {
                    break;
                }
            }
        }
    }
    out
}

impl TowerTerms {
    fn sum(&self) -> f64 {
        self.terms.iter().sum::<f64>() + self.tail
    }
}

/// Unperturbed radial tower of scale R around the centre, as a function
/// of the distance: 2^(-sigma) rho^(-sigma) sum_j v(t + ln R - (1/2 + j) L).
fn radial_tower(rho: f64, t: &TowerSpec, p: &ProblemParams) -> f64 {
    let s = -rho.ln() + t.big_r.ln();
    let last = ((s + 40.0 / p.sigma) / t.l_i).ceil().max(0.0) as usize + 1;
    let v: f64 = (0..=last).map(|j| bubble(s - (0.5 + j as f64) * t.l_i, p)).sum();
    2f64.powf(-p.sigma) * rho.powf(-p.sigma) * v
}

/// A location given either absolutely or as an offset from one of the
/// points. Offsets keep their full relative precision arbitrarily close to
/// the point, which absolute coordinates cannot.
#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Abs(Vec<f64>),
    Near(usize, Vec<f64>),
}

impl Location {
    /// Offset from the centre of tower `m`.
    pub fn offset(&self, field: &AssembledField, m: usize) -> Vec<f64> {
        match self {
            Location::Abs(x) => x.iter().zip(&field.towers[m].centre).map(|(a, b)| a - b).collect(),
            Location::Near(i, y) if *i == m => y.clone(),
            Location::Near(i, y) => field.towers[*i]
                .centre
                .iter()
                .zip(&field.towers[m].centre)
                .zip(y)
                .map(|((a, b), v)| (a - b) + v)
                .collect(),
        }
    }

    /// Absolute coordinates (rounded for offsets).
    pub fn absolute(&self, field: &AssembledField) -> Vec<f64> {
        match self {
            Location::Abs(x) => x.clone(),
            Location::Near(i, y) => field.towers[*i].centre.iter().zip(y).map(|(a, b)| a + b).collect(),
        }
    }
}

fn norm2(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Field mode.
#[derive(Debug, Clone)]
pub enum FieldMode {
    /// Bubble towers only.
    Towers,
    /// Towers plus cutoff Delaunay correctors, one profile per point.
    Corrected(Vec<DelaunayProfile>),
}

/// The approximate solution.
#[derive(Debug, Clone)]
pub struct AssembledField {
    pub params: ProblemParams,
    pub towers: Vec<TowerSpec>,
    pub mode: FieldMode,
}

impl AssembledField {
    /// Towers from a solved configuration.
    pub fn from_solution(cfg: &Configuration, pert: &TowerPerturbation) -> Self {
        let towers = (0..cfg.k())
            .map(|i| TowerSpec {
                centre: cfg.points[i].clone(),
                l_i: cfg.l_i(i),
                big_r: cfg.big_r[i],
                r: pert.r[i].clone(),
                a_bar: (0..pert.depth).map(|j| pert.a_bar(cfg, i, j)).collect(),
                a_hat: cfg.a_hat[i].clone(),
                extent: Extent::Infinite,
            })
            .collect();
        AssembledField {
            params: cfg.params,
            towers,
            mode: FieldMode::Towers,
        }
    }

    /// A single unperturbed tower centred at `centre`.
    pub fn single_point(p: &ProblemParams, centre: Vec<f64>, l: f64, big_r: f64, extent: Extent) -> Self {
        let n = p.n;
        AssembledField {
            params: *p,
            towers: vec![TowerSpec {
                centre,
                l_i: l,
                big_r,
                r: Vec::new(),
                a_bar: Vec::new(),
                a_hat: vec![0.0; n],
                extent,
            }],
            mode: FieldMode::Towers,
        }
    }

    /// Switches on the Delaunay correctors; `profiles[i]` must have period L_i.
    pub fn with_correctors(mut self, profiles: Vec<DelaunayProfile>) -> Result<Self> {
        if profiles.len() != self.towers.len() {
            return Err(Error::domain(Stage::Assemble, "one Delaunay profile per point required"));
        }
        for (t, pr) in self.towers.iter().zip(&profiles) {
            if (pr.l - t.l_i).abs() > 1e-8 * t.l_i || pr.params != self.params {
                return Err(Error::domain(
                    Stage::Assemble,
                    format!("profile period {} does not match L_i = {}", pr.l, t.l_i),
                ));
            }
            if t.extent != Extent::Infinite {
                return Err(Error::domain(Stage::Assemble, "correctors need infinite towers"));
            }
        }
        self.mode = FieldMode::Corrected(profiles);
        Ok(self)
    }

    pub fn distance(&self, i: usize, at: &Location) -> f64 {
        norm2(&at.offset(self, i))
    }

    /// Index and distance of the nearest point.
    pub fn nearest(&self, at: &Location) -> (usize, f64) {
        (0..self.towers.len())
            .map(|i| (i, self.distance(i, at)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    fn delaunay_rn(&self, i: usize, rho: f64, pr: &DelaunayProfile) -> f64 {
        let p = &self.params;
        2f64.powf(-p.sigma) * rho.powf(-p.sigma) * pr.eval(-rho.ln() + self.towers[i].big_r.ln())
    }
}

/// u-bar(x): tower sums plus cutoff correctors.
pub fn evaluate_ubar(field: &AssembledField, x: &[f64]) -> f64 {
    evaluate_at(field, &Location::Abs(x.to_vec()))
}

pub fn evaluate_at(field: &AssembledField, at: &Location) -> f64 {
    let p = &field.params;
    let mut u: f64 = (0..field.towers.len())
        .map(|m| tower_terms(&field.towers[m], &at.offset(field, m), p).sum())
        .sum();
    if let FieldMode::Corrected(profiles) = &field.mode {
        for (i, pr) in profiles.iter().enumerate() {
            let rho = field.distance(i, at);
            let chi = cutoff(rho);
            if chi > 0.0 {
                u += chi * (field.delaunay_rn(i, rho, pr) - radial_tower(rho, &field.towers[i], p));
            }
        }
    }
    u
}

/// `(sum w)^beta - sum w^beta` for positive terms, formed around the
/// largest term so that small cross contributions keep their accuracy.
fn superadditive_gap(terms: &[f64], beta: f64) -> f64 {
    let (imax, wmax) = terms
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |a, (i, &w)| if w > a.1 { (i, w) } else { a });
    if wmax == 0.0 {
        return 0.0;
    }
    let mut rest = 0.0;
    let mut rest_beta = 0.0;
    for (i, &w) in terms.iter().enumerate() {
        if i != imax {
            rest += w;
            rest_beta += w.powf(beta);
        }
    }
    wmax.powf(beta) * (beta * (rest / wmax).ln_1p()).exp_m1() - rest_beta
}

/// Residual of the tower field, `-c [(sum w)^beta - sum w^beta]`.
pub fn residual_towers(field: &AssembledField, x: &[f64]) -> Result<f64> {
    residual_towers_at(field, &Location::Abs(x.to_vec()))
}

pub fn residual_towers_at(field: &AssembledField, at: &Location) -> Result<f64> {
    if !matches!(field.mode, FieldMode::Towers) {
        return Err(Error::refused(
            Stage::Assemble,
            "tower residual requested for a field with correctors switched on",
        ));
    }
    let p = &field.params;
    let mut terms = Vec::new();
    let mut tails = 0.0;
    let mut tails_beta = 0.0;
    for (m, t) in field.towers.iter().enumerate() {
        let tt = tower_terms(t, &at.offset(field, m), p);
        terms.extend(tt.terms);
        tails += tt.tail;
        tails_beta += tt.tail_beta;
    }
    // tail bubbles enter as one extra summand with their own power sum
    terms.push(tails);
    let gap = superadditive_gap(&terms, p.beta) + tails.powf(p.beta) - tails_beta;
    Ok(-p.c_bubble * gap)
}

/// log(w / w0) for a perturbed bubble against its unperturbed counterpart.
fn log_bubble_ratio(t: &TowerSpec, j: usize, y: &[f64], sigma: f64) -> f64 {
    let lam0 = t.log_lambda0(j).exp();
    let r = t.r_at(j);
    let (lam, a) = t.bubble_params(j);
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let ya: f64 = y.iter().zip(&a).map(|(u, v)| u * v).sum();
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let num = lam0 * lam0 * (r * (2.0 + r)) - 2.0 * ya + a2;
    let _ = lam;
    sigma * (r.ln_1p() - (num / (lam0 * lam0 + y2)).ln_1p())
}

/// Residual of the corrected field inside `B(p_i, 1/2)` and of the towers
/// outside every unit ball. Samples in the cutoff annulus are refused.
pub fn residual_corrected(field: &AssembledField, x: &[f64]) -> Result<f64> {
    residual_corrected_at(field, &Location::Abs(x.to_vec()))
}

pub fn residual_corrected_at(field: &AssembledField, at: &Location) -> Result<f64> {
    let profiles = match &field.mode {
        FieldMode::Corrected(pr) => pr,
        FieldMode::Towers => return residual_towers_at(field, at),
    };
    let p = &field.params;
    let (i, rho) = field.nearest(at);
    if rho >= CUTOFF_OUTER {
        let towers_only = AssembledField {
            params: field.params,
            towers: field.towers.clone(),
            mode: FieldMode::Towers,
        };
        return residual_towers_at(&towers_only, at);
    }
    if rho > CUTOFF_INNER {
        return Err(Error::refused(
            Stage::Assemble,
            format!("corrector residual not available in the cutoff annulus (distance {rho})"),
        ));
    }
    let own = &field.towers[i];
    let y = at.offset(field, i);
    let u = field.delaunay_rn(i, rho, &profiles[i]);
    // own ladder corrections: sum_j (w_j - w_j^0) and sum_j (w_j^beta - w_j0^beta)
    let mut d = 0.0;
    let mut d_beta = 0.0;
    for j in 0..own.r.len().max(own.a_bar.len()) {
        let lam0 = own.log_lambda0(j).exp();
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let w0 = bubble_rn(lam0, y2, p.sigma);
        let lr = log_bubble_ratio(own, j, &y, p.sigma);
        d += w0 * lr.exp_m1();
        d_beta += w0.powf(p.beta) * (p.beta * lr).exp_m1();
    }
    let mut others_beta = 0.0;
    for (m, t) in field.towers.iter().enumerate() {
        if m != i {
            let tt = tower_terms(t, &at.offset(field, m), p);
            d += tt.sum();
            others_beta += tt.terms.iter().map(|w| w.powf(p.beta)).sum::<f64>() + tt.tail_beta;
        }
    }
    let gap = u.powf(p.beta) * (p.beta * (d / u).ln_1p()).exp_m1() - d_beta - others_beta;
    Ok(-p.c_bubble * gap)
}

/// Which weighted norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Solution norm: `dist^(-mu) |u|` inside, `|x|^(n - 2 gamma) |u|` outside.
    Star,
    /// Residual norm: `dist^(2 gamma - mu) |f|` inside, `|x|^(n + 2 gamma) |f|` outside.
    StarStar,
}

/// Weights and sample grids of the sup norms.
#[derive(Debug, Clone, Copy)]
pub struct WeightedNormSpec {
    pub gamma1: f64,
    pub tau: f64,
    /// Inner samples per neck period.
    pub per_period: usize,
    /// Ladder depth J; the inner grid reaches exp(-(J + 1/2) L_i).
    pub depth: usize,
    /// Largest outer radius.
    pub outer_max: f64,
    pub outer_per_decade: usize,
}

impl WeightedNormSpec {
    /// `gamma1` must lie strictly inside (-sigma, min(-sigma + 2 gamma, 0)).
    pub fn new(p: &ProblemParams, gamma1: Option<f64>, tau: f64, depth: usize) -> Result<Self> {
        let g1 = gamma1.unwrap_or(-p.sigma + p.gamma);
        let hi = (-p.sigma + 2.0 * p.gamma).min(0.0);
        if !(g1 > -p.sigma && g1 < hi) {
            return Err(Error::domain(
                Stage::Assemble,
                format!("gamma1 = {g1} outside ({}, {hi})", -p.sigma),
            ));
        }
        if !(tau > 0.0) {
            return Err(Error::domain(Stage::Assemble, "tau must be positive"));
        }
        Ok(WeightedNormSpec {
            gamma1: g1,
            tau,
            per_period: 16,
            depth,
            outer_max: 1e3,
            outer_per_decade: 24,
        })
    }

    /// Inner exponent min(gamma1, -sigma + tau).
    pub fn mu(&self, p: &ProblemParams) -> f64 {
        self.gamma1.min(-p.sigma + self.tau)
    }

    pub fn inner_weight(&self, p: &ProblemParams, kind: NormKind, dist: f64) -> f64 {
        let e = match kind {
            NormKind::Star => -self.mu(p),
            NormKind::StarStar => 2.0 * p.gamma - self.mu(p),
        };
        dist.powf(e)
    }

    pub fn outer_weight(&self, p: &ProblemParams, kind: NormKind, r: f64) -> f64 {
        let e = match kind {
            NormKind::Star => p.nf() - 2.0 * p.gamma,
            NormKind::StarStar => p.nf() + 2.0 * p.gamma,
        };
        (1.0 + r).powf(e)
    }
}

/// Where a sample sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Within distance 1 of point `i`.
    Inner(usize),
    Outer,
}

#[derive(Debug, Clone)]
pub struct NormSample {
    pub at: Location,
    pub region: Region,
    /// Distance to the nearest point (inner) or to the centroid (outer).
    pub dist: f64,
    pub value: f64,
}

/// Weighted sup norm with the location of its maximizer.
#[derive(Debug, Clone)]
pub struct NormValue {
    pub value: f64,
    pub argmax: usize,
}

fn centroid(field: &AssembledField) -> Vec<f64> {
    let n = field.params.n;
    let k = field.towers.len() as f64;
    (0..n)
        .map(|l| field.towers.iter().map(|t| t.centre[l]).sum::<f64>() / k)
        .collect()
}

fn unit_directions(field: &AssembledField, i: usize) -> Vec<Vec<f64>> {
    let n = field.params.n;
    let mut dirs = Vec::new();
    for l in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[l] = s;
            dirs.push(d);
        }
    }
    for (m, t) in field.towers.iter().enumerate() {
        if m != i {
            let d: Vec<f64> = t.centre.iter().zip(&field.towers[i].centre).map(|(a, b)| a - b).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            dirs.push(d.iter().map(|v| v / norm).collect());
        }
    }
    dirs
}

/// Sample positions: logarithmic radii around each point down to the
/// deepest tower scale and logarithmic rays from the centroid outside
/// every unit ball. With `skip_annulus` the cutoff annulus is left out.
pub fn sample_grid(field: &AssembledField, spec: &WeightedNormSpec, skip_annulus: bool) -> Vec<(Location, Region, f64)> {
    let mut out = Vec::new();
    let start = if skip_annulus { CUTOFF_INNER } else { CUTOFF_OUTER };
    for (i, t) in field.towers.iter().enumerate() {
        let s_max = (spec.depth as f64 + 0.5) * t.l_i;
        let s_min = -start.ln();
        let count = ((s_max - s_min) / t.l_i * spec.per_period as f64).ceil() as usize;
        for d in unit_directions(field, i) {
            for m in 0..=count {
                let s = s_min + (s_max - s_min) * m as f64 / count as f64;
                let rho = (-s).exp();
                if skip_annulus && m == 0 {
                    // stay strictly inside the corrector ball
                    continue;
                }
                let at = Location::Near(i, d.iter().map(|v| rho * v).collect());
                if field.nearest(&at).0 == i {
                    out.push((at, Region::Inner(i), rho));
                }
            }
        }
    }
    let c = centroid(field);
    let mut rays = Vec::new();
    let n = field.params.n;
    for l in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[l] = s;
            rays.push(d);
        }
    }
    let decades = spec.outer_max.log10() + 2.0;
    let count = (decades * spec.outer_per_decade as f64).ceil() as usize;
    for d in &rays {
        for m in 0..=count {
            let r = 10f64.powf(-2.0 + decades * m as f64 / count as f64);
            let at = Location::Abs(c.iter().zip(d).map(|(a, v)| a + r * v).collect());
            if field.nearest(&at).1 >= CUTOFF_OUTER {
                out.push((at, Region::Outer, r));
            }
        }
    }
    out
}

/// Residual at every grid sample, evaluated concurrently.
pub fn scan_residual(field: &AssembledField, spec: &WeightedNormSpec) -> Result<Vec<NormSample>> {
    let corrected = matches!(field.mode, FieldMode::Corrected(_));
    let grid = sample_grid(field, spec, corrected);
    grid.into_par_iter()
        .map(|(at, region, dist)| {
            let value = if corrected {
                residual_corrected_at(field, &at)?
            } else {
                residual_towers_at(field, &at)?
            };
            Ok(NormSample { at, region, dist, value })
        })
        .collect()
}

/// Field values at every grid sample.
pub fn scan_field(field: &AssembledField, spec: &WeightedNormSpec) -> Vec<NormSample> {
    sample_grid(field, spec, false)
        .into_par_iter()
        .map(|(at, region, dist)| {
            let value = evaluate_at(field, &at);
            NormSample { at, region, dist, value }
        })
        .collect()
}

/// Weighted sup norm of sampled values. `smallest_scale` is the deepest
/// tower scale the inner samples must reach.
pub fn weighted_norm(
    samples: &[NormSample],
    p: &ProblemParams,
    spec: &WeightedNormSpec,
    kind: NormKind,
    smallest_scale: f64,
) -> Result<NormValue> {
    let deepest = samples
        .iter()
        .filter(|s| matches!(s.region, Region::Inner(_)))
        .map(|s| s.dist)
        .fold(f64::INFINITY, f64::min);
    if deepest > smallest_scale * (1.0 + 1e-9) {
        return Err(Error::refused(
            Stage::Assemble,
            format!("inner grid stops at distance {deepest:.3e}, above the tower scale {smallest_scale:.3e}"),
        ));
    }
    let mut best = NormValue { value: 0.0, argmax: 0 };
    for (k, s) in samples.iter().enumerate() {
        let w = match s.region {
            Region::Inner(_) => spec.inner_weight(p, kind, s.dist),
            Region::Outer => spec.outer_weight(p, kind, s.dist),
        };
        let v = w * s.value.abs();
        if v > best.value {
            best = NormValue { value: v, argmax: k };
        }
    }
    Ok(best)
}

/// Deepest scale exp(-(J + 1/2) L_i) over all points.
pub fn smallest_scale(field: &AssembledField, spec: &WeightedNormSpec) -> f64 {
    field
        .towers
        .iter()
        .map(|t| (-(spec.depth as f64 + 0.5) * t.l_i).exp())
        .fold(f64::INFINITY, f64::min)
}

/// Shared inputs of the assembled-field pipeline.
#[derive(Debug, Clone)]
pub struct AssemblyContext<'a> {
    pub table: &'a KernelTable,
    pub consts: &'a InteractionConstants,
    pub delaunay: DelaunaySettings,
    pub reduced: ReducedSettings,
    pub gamma1: Option<f64>,
}

/// Reduced solve, Delaunay correctors and the corrected field at one L.
pub fn corrected_field(
    ctx: &AssemblyContext,
    points: &[Vec<f64>],
    q: &[f64],
    l: f64,
) -> Result<(AssembledField, Configuration, TowerPerturbation)> {
    let p = ctx.consts.params;
    let (cfg, pert, _) = solve_reduced(&p, points, q, l, &ctx.reduced, ctx.consts)?;
    let field = AssembledField::from_solution(&cfg, &pert);
    let mut profiles: Vec<DelaunayProfile> = Vec::new();
    for t in &field.towers {
        match profiles.iter().find(|pr| (pr.l - t.l_i).abs() <= 1e-8 * t.l_i) {
            Some(pr) => profiles.push(pr.clone()),
            None => profiles.push(solve_delaunay(ctx.table, t.l_i, &ctx.delaunay)?),
        }
    }
    let field = field.with_correctors(profiles)?;
    Ok((field, cfg, pert))
}

/// Residual norm of the corrected field at one L.
pub fn residual_norm_at(ctx: &AssemblyContext, points: &[Vec<f64>], q: &[f64], l: f64) -> Result<(f64, NormSample)> {
    let p = ctx.consts.params;
    let (field, _, pert) = corrected_field(ctx, points, q, l)?;
    let spec = WeightedNormSpec::new(&p, ctx.gamma1, pert.tau, pert.depth)?;
    let samples = scan_residual(&field, &spec)?;
    let nv = weighted_norm(&samples, &p, &spec, NormKind::StarStar, smallest_scale(&field, &spec))?;
    Ok((nv.value, samples[nv.argmax].clone()))
}

/// Fitted decay of the residual norm in L.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub ls: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    /// xi-hat with slope = -(n - 2 gamma)/4 (1 + xi-hat).
    pub margin: f64,
    pub max_fit_residual: f64,
    /// Set when an L lies below the asymptotic regime or the log-linear
    /// fit is poor; the slope is then not meaningful.
    pub non_asymptotic: Option<String>,
}

/// Largest log-linear misfit tolerated before the regime is flagged.
pub const DECAY_FIT_RESIDUAL_LIMIT: f64 = 0.5;

pub fn residual_decay_fit(
    ctx: &AssemblyContext,
    points: &[Vec<f64>],
    q: &[f64],
    ls: &[f64],
) -> Result<DecayFit> {
    let p = ctx.consts.params;
    let reference = p.sigma / 2.0;
    if ls.len() < 4 || ls.iter().any(|&l| !(l >= 8.0)) {
        return Ok(DecayFit {
            ls: ls.to_vec(),
            norms: Vec::new(),
            slope: f64::NAN,
            margin: f64::NAN,
            max_fit_residual: f64::NAN,
            non_asymptotic: Some(format!("non-asymptotic: need at least 4 values of L >= 8, got {ls:?}")),
        });
    }
    let norms: Vec<f64> = ls
        .par_iter()
        .map(|&l| residual_norm_at(ctx, points, q, l).map(|r| r.0))
        .collect::<Result<Vec<f64>>>()?;
    let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(ls, &logs);
    let non_asymptotic = if fit.max_residual > DECAY_FIT_RESIDUAL_LIMIT || !fit.slope.is_finite() {
        Some(format!("non-asymptotic: log-linear misfit {:.3}", fit.max_residual))
    } else {
        None
    };
    Ok(DecayFit {
        ls: ls.to_vec(),
        norms,
        slope: fit.slope,
        margin: -fit.slope / reference - 1.0,
        max_fit_residual: fit.max_residual,
        non_asymptotic,
    })
}

/// Random sample points: half log-uniform in distance around the points
/// down to the deepest tower scale, half uniform in a box around them.
pub fn random_samples(field: &AssembledField, depth: usize, count: usize, seed: u64) -> Vec<Location> {
    let n = field.params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = centroid(field);
    let span = field
        .towers
        .iter()
        .map(|t| t.centre.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
        + 3.0;
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > 1e-3 && r <= 1.0 {
                return v.iter().map(|x| x / r).collect();
            }
        }
    };
    (0..count)
        .map(|k| {
            if k % 2 == 0 {
                let i = rng.gen_range(0..field.towers.len());
                let t = &field.towers[i];
                let s = rng.gen_range(0.0..(depth as f64 + 0.5) * t.l_i);
                let d = unit(&mut rng);
                Location::Near(i, d.iter().map(|v| (-s).exp() * v).collect())
            } else {
                Location::Abs(c.iter().map(|a| a + rng.gen_range(-span..span)).collect())
            }
        })
        .collect()
}

/// Range of `u-bar |x - p_i|^sigma / (2^(-sigma) half-tower(t + ln R))` on
/// spheres `|x - p_i| = e^(-t)`, `t` in `[1, J L_i]`.
pub fn neck_ratio_range(field: &AssembledField, i: usize, depth: usize, count: usize, seed: u64) -> (f64, f64) {
    let p = &field.params;
    let t = &field.towers[i];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.n;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for _ in 0..count {
        let s = rng.gen_range(1.0..depth as f64 * t.l_i);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let rho = (-s).exp();
        let at = Location::Near(i, v.iter().map(|b| rho * b / r).collect());
        let ratio = evaluate_at(field, &at) / radial_tower(rho, t, p);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

/// Cylindrical profile of a concentric tower with scales `lambda_j`:
/// `rho^sigma sum_j w_j = 2^(-sigma) sum_j v(t + ln lambda_j)`.
pub fn concentric_profile(t: f64, log_lambdas: &[f64], p: &ProblemParams) -> f64 {
    2f64.powf(-p.sigma) * log_lambdas.iter().map(|ll| bubble(t + ll, p)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{KernelGridSpec, LineOperator};
    use crate::interactions::appendix_constants;
    use crate::reduced_system::ReducedSettings;
    use std::sync::OnceLock;

    fn params() -> ProblemParams {
        ProblemParams::new(3, 0.5).unwrap()
    }

    fn consts() -> &'static InteractionConstants {
        static C: OnceLock<InteractionConstants> = OnceLock::new();
        C.get_or_init(|| appendix_constants(&params()))
    }

    fn table() -> &'static KernelTable {
        static T: OnceLock<KernelTable> = OnceLock::new();
        T.get_or_init(|| KernelTable::build(&params(), KernelGridSpec::default_for(&params())).unwrap())
    }

    fn pair(d: f64) -> Vec<Vec<f64>> {
        vec![vec![-d / 2.0, 0.0, 0.0], vec![d / 2.0, 0.0, 0.0]]
    }

    fn solved_pair(l: f64) -> AssembledField {
        let c = consts();
        let (cfg, pert, _) = solve_reduced(&c.params, &pair(2.0), &[1.0, 1.0], l, &ReducedSettings::default(), c).unwrap();
        AssembledField::from_solution(&cfg, &pert)
    }

    #[test]
    fn cutoff_is_c2() {
        assert_eq!(cutoff(0.3), 1.0);
        assert_eq!(cutoff(1.2), 0.0);
        let h = 1e-4;
        for r in [0.5, 1.0] {
            let d1 = (cutoff(r + h) - cutoff(r - h)) / (2.0 * h);
            let d2 = (cutoff(r + h) - 2.0 * cutoff(r) + cutoff(r - h)) / (h * h);
            assert!(d1.abs() < 1e-6 && d2.abs() < 1e-2);
        }
    }

    #[test]
    fn single_bubble_value() {
        let p = params();
        let lam0 = 0.3 * (-5.0f64).exp();
        let f = AssembledField::single_point(&p, vec![0.0; 3], 10.0, 0.3, Extent::Finite(1));
        let u = evaluate_ubar(&f, &[lam0, 0.0, 0.0]);
        assert!((u / (2.0 * lam0).powf(-p.sigma) - 1.0).abs() < 1e-13);
        assert_eq!(residual_towers(&f, &[0.3, 0.2, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn far_field_matches_scale_sum() {
        let f = solved_pair(10.0);
        let p = params();
        let x = [50.0, 0.0, 0.0];
        let u = evaluate_ubar(&f, &x) * 50f64.powf(2.0 * p.sigma);
        let mut s = 0.0;
        for t in &f.towers {
            for j in 0..60 {
                s += t.bubble_params(j).0.powf(p.sigma);
            }
        }
        assert!(u / s > 0.5 && u / s < 2.0, "{}", u / s);
    }

    #[test]
    fn single_tower_matches_delaunay() {
        let p = params();
        let l = 10.0;
        let prof = solve_delaunay(table(), l, &DelaunaySettings::default()).unwrap();
        let f = AssembledField::single_point(&p, vec![0.0; 3], l, 1.0, Extent::Infinite);
        for m in 0..200 {
            let s = 8.0 * l * m as f64 / 200.0 + 1e-3;
            let rho = (-s).exp();
            let u = evaluate_ubar(&f, &[rho, 0.0, 0.0]);
            let d = prof.to_rn(rho).unwrap() * 2f64.powf(-p.sigma);
            // the tower lacks the images with j < 0 that the periodic profile carries
            let images: f64 = (1..40).map(|j| bubble(s + (j as f64 - 0.5) * l, &p)).sum();
            let bound = 2f64.powf(-p.sigma) * rho.powf(-p.sigma) * (prof.psi_sup() + images);
            assert!((u - d).abs() <= bound * 1.0001 + 1e-12 * u, "s = {s}");
        }
    }

    #[test]
    fn residual_sign_and_midpoint() {
        let f = solved_pair(10.0);
        let p = params();
        let samples = random_samples(&f, 8, 2000, 5);
        for at in &samples {
            assert!(residual_towers_at(&f, at).unwrap() <= 0.0);
        }
        // two-term expansion where one tower dominates
        let x = [-0.5, 0.0, 0.0];
        let at = Location::Abs(x.to_vec());
        let w1 = tower_terms(&f.towers[0], &at.offset(&f, 0), &p).sum();
        let w2 = tower_terms(&f.towers[1], &at.offset(&f, 1), &p).sum();
        let s = residual_towers(&f, &x).unwrap();
        let approx = p.c_bubble * p.beta * w1.powf(p.beta - 1.0) * w2;
        assert!((s.abs() / approx - 1.0).abs() < 0.25);
        // at the midpoint both towers are equal and the gap is (2^beta - 2) w^beta
        let mid = [0.0, 0.0, 0.0];
        let tt = tower_terms(&f.towers[0], &Location::Abs(mid.to_vec()).offset(&f, 0), &p);
        let own: f64 = tt.terms.iter().map(|w| w.powf(p.beta)).sum::<f64>() + tt.tail_beta;
        let gap = (2.0 * tt.sum()).powf(p.beta) - 2.0 * own;
        let s = residual_towers(&f, &mid).unwrap();
        assert!((s.abs() / (p.c_bubble * gap) - 1.0).abs() < 1e-9);
        // the two-term expansion misses the symmetric gap by (2^beta - 2) / beta
        let w = tt.sum();
        let ratio = s.abs() / (p.c_bubble * p.beta * w.powf(p.beta));
        assert!((ratio / ((2f64.powf(p.beta) - 2.0) / p.beta) - 1.0).abs() < 0.01);
    }

    #[test]
    fn tower_residual_matches_cylindrical_operator() {
        let p = params();
        let op = LineOperator::new(table(), 0.02).unwrap();
        let l = 4.0;
        let lls: Vec<f64> = (0..40).map(|j| -(0.5 + j as f64) * l).collect();
        let f = AssembledField::single_point(&p, vec![0.0; 3], l, 1.0, Extent::Finite(40));
        for t in [1.0, 2.0, 3.3, 5.9, 8.0] {
            let brute = op.apply_fn(|s| concentric_profile(s, &lls, &p), t)
                - p.c_bubble * concentric_profile(t, &lls, &p).powf(p.beta);
            let rho = (-t).exp();
            let exact = residual_towers(&f, &[rho, 0.0, 0.0]).unwrap() * rho.powf(p.sigma * p.beta);
            assert!((brute / exact - 1.0).abs() < 1e-4, "t = {t}: {brute} vs {exact}");
        }
    }

    #[test]
    fn norm_examples() {
        let p = params();
        let spec = WeightedNormSpec::new(&p, Some(-0.95), 0.2, 8).unwrap();
        assert_eq!(spec.mu(&p), -0.95);
        let samples: Vec<NormSample> = (0..50)
            .map(|m| {
                let d = (-(m as f64) * 2.0).exp();
                NormSample { at: Location::Near(0, vec![d, 0.0, 0.0]), region: Region::Inner(0), dist: d, value: d.powf(-0.95) }
            })
            .collect();
        let v = weighted_norm(&samples, &p, &spec, NormKind::Star, 1e-40).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        let doubled: Vec<NormSample> = samples
            .iter()
            .map(|s| NormSample { value: 2.0 * s.value, ..s.clone() })
            .collect();
        let v2 = weighted_norm(&doubled, &p, &spec, NormKind::Star, 1e-40).unwrap();
        assert!((v2.value - 2.0 * v.value).abs() < 1e-12);
        assert!(weighted_norm(&samples, &p, &spec, NormKind::Star, 1e-60).is_err());
        assert!(WeightedNormSpec::new(&p, Some(0.1), 0.2, 8).is_err());
        assert!(WeightedNormSpec::new(&p, Some(-1.0), 0.2, 8).is_err());
    }

    #[test]
    fn positivity_and_neck_bound() {
        let f = solved_pair(10.0);
        for at in random_samples(&f, 8, 10_000, 17) {
            let u = evaluate_at(&f, &at);
            assert!(u > 0.0 && u.is_finite());
        }
        for i in 0..2 {
            let (lo, hi) = neck_ratio_range(&f, i, 8, 500, 23 + i as u64);
            assert!(lo >= 0.5 && hi <= 2.0, "{lo} {hi}");
        }
    }

    #[test]
    fn corrected_field_residual() {
        let ctx = AssemblyContext {
            table: table(),
            consts: consts(),
            delaunay: DelaunaySettings::default(),
            reduced: ReducedSettings::default(),
            gamma1: None,
        };
        let (field, _, pert) = corrected_field(&ctx, &pair(2.0), &[1.0, 1.0], 12.0).unwrap();
        let p = params();
        for at in random_samples(&field, 8, 2000, 9) {
            assert!(evaluate_at(&field, &at) > 0.0);
        }
        residual_corrected(&field, &[-0.75, 0.0, 0.0]).unwrap();
        assert!(residual_corrected(&field, &[-1.0 + 0.7, 0.0, 0.0]).is_err());
        assert!(residual_towers(&field, &[0.0, 3.0, 0.0]).is_err());
        let spec = WeightedNormSpec::new(&p, None, pert.tau, pert.depth).unwrap();
        let samples = scan_residual(&field, &spec).unwrap();
        let nv = weighted_norm(&samples, &p, &spec, NormKind::StarStar, smallest_scale(&field, &spec)).unwrap();
        assert!(nv.value.is_finite() && nv.value > 0.0);
    }

    fn ctx() -> AssemblyContext<'static> {
        AssemblyContext {
            table: table(),
            consts: consts(),
            delaunay: DelaunaySettings::default(),
            reduced: ReducedSettings::default(),
            gamma1: None,
        }
    }

    #[test]
    fn residual_decays_faster_than_quarter_rate() {
        let p = params();
        let fit = residual_decay_fit(&ctx(), &pair(2.0), &[1.0, 1.0], &[8.0, 10.0, 12.0, 14.0]).unwrap();
        assert!(fit.non_asymptotic.is_none(), "{:?}", fit.non_asymptotic);
        assert!(fit.slope <= -p.sigma / 2.0 * 1.05, "slope {}", fit.slope);
        assert!(fit.margin > 0.0);
        // Frozen from the grid scan.
        assert!((fit.slope + 1.0).abs() < 0.02, "slope {}", fit.slope);
    }

    #[test]
    fn decay_rate_is_dilation_invariant() {
        let ls = [8.0, 10.0, 12.0, 14.0];
        let a = residual_decay_fit(&ctx(), &pair(2.0), &[1.0, 1.0], &ls).unwrap();
        let b = residual_decay_fit(&ctx(), &pair(4.0), &[1.0, 1.0], &ls).unwrap();
        assert!((a.slope / b.slope - 1.0).abs() < 0.02, "{} vs {}", a.slope, b.slope);
    }

    #[test]
    fn single_bubble_norm_vanishes() {
        let p = params();
        for l in [8.0, 10.0, 12.0, 14.0] {
            let f = AssembledField::single_point(&p, vec![0.0; 3], l, 1.0, Extent::Finite(1));
            let spec = WeightedNormSpec::new(&p, None, 0.2 * p.sigma, 1).unwrap();
            let samples = scan_residual(&f, &spec).unwrap();
            assert!(samples.iter().all(|s| s.value == 0.0));
        }
    }

    #[test]
    fn short_l_list_is_flagged() {
        let fit = residual_decay_fit(&ctx(), &pair(2.0), &[1.0, 1.0], &[4.0, 5.0]).unwrap();
        assert!(fit.non_asymptotic.unwrap().starts_with("non-asymptotic"));
    }

    #[test]
    fn inner_maximum_sits_at_a_neck() {
        let p = params();
        let l = 12.0;
        let (field, _, pert) = corrected_field(&ctx(), &pair(2.0), &[1.0, 1.0], l).unwrap();
        let spec = WeightedNormSpec::new(&p, None, pert.tau, pert.depth).unwrap();
        let samples = scan_residual(&field, &spec).unwrap();
        let (_, dist, i) = samples
            .iter()
            .filter_map(|s| match s.region {
                Region::Inner(i) => Some((spec.inner_weight(&p, NormKind::StarStar, s.dist) * s.value.abs(), s.dist, i)),
                Region::Outer => None,
            })
            .fold((0.0, 0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        let t = &field.towers[i];
        let s = -dist.ln() + t.big_r.ln();
        let phase = (s / t.l_i - 0.5).rem_euclid(1.0);
        assert!((phase - 0.5).abs() > 0.25, "phase {phase}");
    }
}
