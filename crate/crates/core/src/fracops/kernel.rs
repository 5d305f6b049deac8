use super::params::ProblemParams;
use crate::error::{Error, Result, Stage};
use crate::interp::MonotoneCubic;
use crate::quad::adaptive;
use crate::special::sphere_area;
use rayon::prelude::*;
use std::io::{BufRead, Write};

/// Below this |xi| the kernel is replaced by its singular law C |xi|^(-1-2 gamma).
pub const XI_FLOOR: f64 = 1e-4;

/// Half-width of the band around rho = 1 where `angular_density` refuses.
pub const PHI_EXCLUSION_BAND: f64 = 5e-5;

const CACHE_VERSION: &str = "gluing-kernel-v1";

/// Breakpoints 2 asin(min(1, s 4^k)) on [0, pi] resolving a peak of width ~s at 0.
fn peak_breakpoints(s: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut w = s;
    while w < 1.0 {
        pts.push(2.0 * w.asin());
        w *= 4.0;
    }
    pts.push(std::f64::consts::PI);
    pts
}

/// Angular reduction of the singular integral:
/// |S^{n-2}| * integral over [0, pi] of sin^{n-2}(t) (1 + rho^2 - 2 rho cos t)^{-(n+2 gamma)/2}.
pub fn angular_density(rho: f64, p: &ProblemParams) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::domain(Stage::Kernel, format!("rho = {rho} must be positive")));
    }
    if (rho - 1.0).abs() < PHI_EXCLUSION_BAND {
        return Err(Error::domain(
            Stage::Kernel,
            format!("rho = {rho} lies in the exclusion band around 1; use the singular expansion"),
        ));
    }
    let e = -(p.nf() + 2.0 * p.gamma) / 2.0;
    let m = (p.n - 2) as i32;
    let d2 = (1.0 - rho) * (1.0 - rho);
    let f = |t: f64| {
        let s = (0.5 * t).sin();
        t.sin().powi(m) * (d2 + 4.0 * rho * s * s).powf(e)
    };
    let scale = (1.0 - rho).abs() / (2.0 * rho.sqrt().max(1e-300));
    let r = adaptive(f, &peak_breakpoints(scale.min(1.0)), 0.0, 1e-13, 20_000);
    Ok(sphere_area(p.n - 1) * r.value)
}

/// Kernel K(xi) evaluated by quadrature in the symmetric form
/// |S^{n-2}| * integral of sin^{n-2}(t) (4 sinh^2(xi/2) + 4 sin^2(t/2))^{-(n+2 gamma)/2},
/// which equals e^{-(sigma+2 gamma)|xi|} Phi(e^{-|xi|}) and is even by construction.
/// Below `XI_FLOOR` the singular law is returned instead.
pub fn kernel_direct(xi: f64, p: &ProblemParams) -> Result<f64> {
    let a = xi.abs();
    if a == 0.0 || !a.is_finite() {
        return Err(Error::domain(Stage::Kernel, format!("K is singular at xi = {xi}")));
    }
    if a < XI_FLOOR {
        return Ok(p.singular_coeff() * a.powf(-p.singular_exponent()));
    }
    Ok(kernel_quadrature(a, p))
}

fn kernel_quadrature(a: f64, p: &ProblemParams) -> f64 {
    let e = -(p.nf() + 2.0 * p.gamma) / 2.0;
    let m = (p.n - 2) as i32;
    let sh = (0.5 * a).sinh();
    let d = 4.0 * sh * sh;
    let f = |t: f64| {
        let s = (0.5 * t).sin();
        t.sin().powi(m) * (d + 4.0 * s * s).powf(e)
    };
    let r = adaptive(f, &peak_breakpoints(sh.min(1.0)), 0.0, 1e-13, 20_000);
    sphere_area(p.n - 1) * r.value
}

/// Zeroth-order constant reproduced from the kernel:
/// 2 kappa * integral over (0, inf) of (cosh(sigma xi) - 1) K(xi).
/// Agrees with the Gamma closed form `lambda_hardy`.
pub fn lambda_hardy_by_quadrature(p: &ProblemParams) -> f64 {
    let s = p.sigma;
    let e = p.singular_exponent();
    // below the floor (cosh(s xi) - 1) ~ s^2 xi^2 / 2 against C xi^(-1-2g)
    let head = p.singular_coeff() * 0.5 * s * s * XI_FLOOR.powf(3.0 - e) / (3.0 - e);
    // integrand decays like e^(-2 gamma xi)
    let end = 45.0 / (2.0 * p.gamma);
    let mut pts = vec![XI_FLOOR];
    let mut x = 1e-3;
    while x < end {
        pts.push(x);
        x *= 2.0;
    }
    pts.push(end);
    let f = |x: f64| {
        let c = if s * x < 1e-3 {
            let y = s * x;
            0.5 * y * y * (1.0 + y * y / 12.0)
        } else {
            (s * x).cosh() - 1.0
        };
        c * kernel_quadrature(x, p)
    };
    let r = adaptive(f, &pts, 0.0, 1e-11, 20_000);
    2.0 * p.kappa * (head + r.value)
}

/// Log-spaced sampling of K on [xi_min, xi_max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGridSpec {
    pub xi_min: f64,
    pub xi_max: f64,
    /// Samples per unit of ln(xi).
    pub per_efold: usize,
}

impl KernelGridSpec {
    /// Default range: from the singular floor to where K has dropped
    /// roughly sixteen decades below its value at 1.
    pub fn default_for(p: &ProblemParams) -> Self {
        KernelGridSpec {
            xi_min: XI_FLOOR,
            xi_max: 2.0 + 37.0 / p.tail_rate(),
            per_efold: 1000,
        }
    }

    pub fn abscissae(&self) -> Vec<f64> {
        let (a, b) = (self.xi_min.ln(), self.xi_max.ln());
        let count = ((b - a) * self.per_efold as f64).ceil() as usize + 1;
        (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect()
    }
}

/// Sampled kernel with monotone interpolation in (ln xi, ln K), the singular
/// law below the floor, and exponential extrapolation past the last sample.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub params: ProblemParams,
    pub spec: KernelGridSpec,
    pub xi_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub singular_coeff: f64,
    pub tail_rate: f64,
    interp: MonotoneCubic,
    tail_amplitude: f64,
}

impl KernelTable {
    pub fn build(params: &ProblemParams, spec: KernelGridSpec) -> Result<Self> {
        if !(spec.xi_min >= XI_FLOOR && spec.xi_max > spec.xi_min && spec.per_efold >= 10) {
            return Err(Error::domain(Stage::Kernel, format!("bad kernel grid {spec:?}")));
        }
        let xi = spec.abscissae();
        let values: Vec<f64> = xi.par_iter().map(|&x| kernel_quadrature(x, params)).collect();
        Self::from_samples(params, spec, xi, values)
    }

    /// Assemble a table from precomputed samples (e.g. loaded from cache),
    /// checking positivity and strict decrease.
    pub fn from_samples(
        params: &ProblemParams,
        spec: KernelGridSpec,
        xi_grid: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if xi_grid.len() != values.len() || xi_grid.len() < 3 {
            return Err(Error::domain(Stage::Kernel, "sample count mismatch"));
        }
        for w in values.windows(2) {
            if !(w[1] > 0.0 && w[1] < w[0]) {
                return Err(Error::refused(
                    Stage::Kernel,
                    "kernel samples not strictly positive and decreasing",
                ));
            }
        }
        let lx: Vec<f64> = xi_grid.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let tail_rate = params.tail_rate();
        let last = xi_grid.len() - 1;
        let tail_amplitude = values[last] * (tail_rate * xi_grid[last]).exp();
        Ok(KernelTable {
            params: *params,
            spec,
            singular_coeff: params.singular_coeff(),
            tail_rate,
            interp: MonotoneCubic::new(lx, ly),
            tail_amplitude,
            xi_grid,
            values,
        })
    }

    /// K(xi), even in xi. Returns +inf at xi = 0.
    pub fn eval(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a < self.spec.xi_min {
            return self.singular_coeff * a.powf(-self.params.singular_exponent());
        }
        if a > self.spec.xi_max {
            return self.tail_amplitude * (-self.tail_rate * a).exp();
        }
        self.interp.eval(a.ln()).exp()
    }

    /// Relative variation of K(xi) e^{tail_rate xi} over the upper half of
    /// the sampled range.
    pub fn tail_variation(&self) -> f64 {
        let half = 0.5 * self.spec.xi_max;
        let s: Vec<f64> = self
            .xi_grid
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x >= half)
            .map(|(x, v)| v * (self.tail_rate * x).exp())
            .collect();
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(0.0, f64::max);
        (hi - lo) / hi
    }

    /// Largest K(xi) e^{tail_rate xi} over samples with xi >= from.
    pub fn tail_bound(&self, from: f64) -> f64 {
        self.xi_grid
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x >= from)
            .map(|(x, v)| v * (self.tail_rate * x).exp())
            .fold(self.tail_amplitude, f64::max)
    }

    /// Writes a version line, a column header, then one `xi,K` row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# {CACHE_VERSION} n={} gamma={} xi_min={} xi_max={} per_efold={}",
            self.params.n, self.params.gamma, self.spec.xi_min, self.spec.xi_max, self.spec.per_efold
        )?;
        writeln!(w, "xi,K")?;
        for (x, v) in self.xi_grid.iter().zip(&self.values) {
            writeln!(w, "{x:?},{v:?}")?;
        }
        Ok(())
    }

    /// Reads a table written by `write_csv`; the header must match `params` and `spec`.
    pub fn read_csv<R: BufRead>(params: &ProblemParams, spec: KernelGridSpec, r: R) -> Result<Self> {
        let bad = |why: &str| Error::refused(Stage::Kernel, format!("kernel cache: {why}"));
        let mut lines = r.lines();
        let head = lines.next().and_then(|l| l.ok()).ok_or_else(|| bad("empty file"))?;
        let expect = format!(
            "# {CACHE_VERSION} n={} gamma={} xi_min={} xi_max={} per_efold={}",
            params.n, params.gamma, spec.xi_min, spec.xi_max, spec.per_efold
        );
        if head.trim() != expect {
            return Err(bad("header mismatch"));
        }
        match lines.next() {
            Some(Ok(l)) if l.trim() == "xi,K" => {}
            _ => return Err(bad("missing column header")),
        }
        let mut xi = Vec::new();
        let mut vals = Vec::new();
        for l in lines {
            let l = l.map_err(|e| bad(&e.to_string()))?;
            if l.trim().is_empty() {
                continue;
            }
            let mut it = l.split(',');
            let parse = |s: Option<&str>| s.and_then(|s| s.trim().parse::<f64>().ok());
            match (parse(it.next()), parse(it.next())) {
                (Some(a), Some(b)) => {
                    xi.push(a);
                    vals.push(b);
                }
                _ => return Err(bad("malformed row")),
            }
        }
        if xi != spec.abscissae() {
            return Err(bad("abscissae do not match the grid spec"));
        }
        Self::from_samples(params, spec, xi, vals)
    }
}

/// L-periodic sum of kernel images, truncated at `truncation` images per side.
#[derive(Debug, Clone)]
pub struct PeriodizedKernel {
    pub base: KernelTable,
    pub period: f64,
    pub truncation: usize,
    /// Sample abscissae on (0, L/2] and the periodized values there.
    pub xi_samples: Vec<f64>,
    pub values: Vec<f64>,
}

impl PeriodizedKernel {
    pub fn eval(&self, xi: f64) -> f64 {
        let l = self.period;
        let r = ((xi + 0.5 * l).rem_euclid(l) - 0.5 * l).abs();
        let m = self.truncation as i64;
        (-m..=m).map(|j| self.base.eval(r - j as f64 * l)).sum()
    }
}

/// Largest accepted relative variation of K e^{rate xi} on the sampled tail.
const TAIL_CHECK: f64 = 0.02;

/// Periodize `table` with period `l`, choosing the image count so the
/// dropped tail is at most `tol` uniformly on [-L/2, L/2].
pub fn periodize_kernel(table: &KernelTable, l: f64, tol: f64) -> Result<PeriodizedKernel> {
    if !(l >= 4.0) || !(tol > 0.0) {
        return Err(Error::domain(Stage::Kernel, format!("need L >= 4 and tol > 0, got L = {l}, tol = {tol}")));
    }
    let var = table.tail_variation();
    if !(var < TAIL_CHECK) {
        return Err(Error::refused(
            Stage::Kernel,
            format!("tail rate check failed: K e^(rate xi) varies by {var:.3e} on the sampled tail"),
        ));
    }
    let rate = table.tail_rate;
    let amp = table.tail_bound(0.5 * l);
    let ratio = 1.0 / (1.0 - (-rate * l).exp());
    let mut m = 0usize;
    while 2.0 * amp * ratio * (-rate * ((m as f64 + 1.0) * l - 0.5 * l)).exp() > tol {
        m += 1;
    }
    let samples = 256;
    let xi_samples: Vec<f64> = (1..=samples).map(|i| 0.5 * l * i as f64 / samples as f64).collect();
    let mut pk = PeriodizedKernel {
        base: table.clone(),
        period: l,
        truncation: m,
        xi_samples,
        values: Vec::new(),
    };
    pk.values = pk.xi_samples.iter().map(|&x| pk.eval(x)).collect();
    Ok(pk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::log_fit;
    use std::sync::OnceLock;

    fn p3() -> ProblemParams {
        ProblemParams::new(3, 0.5).unwrap()
    }

    fn table3() -> &'static KernelTable {
        static T: OnceLock<KernelTable> = OnceLock::new();
        T.get_or_init(|| KernelTable::build(&p3(), KernelGridSpec::default_for(&p3())).unwrap())
    }

    /// Hypergeometric series oracle: Phi(rho) = |S^{n-1}| 2F1((n+2g)/2, 1+g; n/2; rho^2), rho < 1.
    fn phi_series(rho: f64, p: &ProblemParams) -> f64 {
        let (a, b, c) = ((p.nf() + 2.0 * p.gamma) / 2.0, 1.0 + p.gamma, p.nf() / 2.0);
        let z = rho * rho;
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 0..100_000 {
            let k = k as f64;
            term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
            sum += term;
            if term.abs() < 1e-17 * sum {
                break;
            }
        }
        sphere_area(p.n) * sum
    }

    #[test]
    fn phi_at_zero_is_sphere_area() {
        let p = p3();
        assert!((angular_density(0.0, &p).unwrap() - sphere_area(3)).abs() < 1e-12);
    }

    #[test]
    fn phi_matches_series_oracle() {
        for &(n, g) in &[(3usize, 0.5), (4, 0.75), (5, 0.25), (2, 0.3)] {
            let p = ProblemParams::new(n, g).unwrap();
            for &rho in &[0.1, 0.5, 0.9] {
                let a = angular_density(rho, &p).unwrap();
                let b = phi_series(rho, &p);
                assert!((a / b - 1.0).abs() < 1e-10, "n={n} g={g} rho={rho}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn phi_reciprocity() {
        let p = p3();
        for &rho in &[2.0, 5.0, 10.0] {
            let lhs = angular_density(1.0 / rho, &p).unwrap();
            let rhs = rho.powf(p.nf() + 2.0 * p.gamma) * angular_density(rho, &p).unwrap();
            assert!((lhs / rhs - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn phi_far_scaling_frozen() {
        // rho^{n+2g} Phi(rho) at rho = 10 against the same quantity at rho = 100:
        // both approach |S^{n-1}|; oracle values from the series at 1/rho.
        let p = p3();
        let a = angular_density(10.0, &p).unwrap() * 10f64.powi(4);
        let b = angular_density(100.0, &p).unwrap() * 100f64.powi(4);
        assert!((a / b - 1.0).abs() < 0.03);
        assert!((a / phi_series(0.1, &p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phi_rejects_bad_rho() {
        let p = p3();
        assert!(angular_density(-1.0, &p).is_err());
        assert!(angular_density(1.0 + 1e-5, &p).is_err());
    }

    #[test]
    fn direct_kernel_matches_phi_form() {
        let p = ProblemParams::new(4, 0.75).unwrap();
        for &xi in &[0.01, 0.3, 2.0, 7.0] {
            let k = kernel_direct(xi, &p).unwrap();
            let alt = (-(p.sigma + 2.0 * p.gamma) * xi).exp() * angular_density((-xi as f64).exp(), &p).unwrap();
            assert!((k / alt - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn lambda_hardy_self_consistency() {
        for &(n, g) in &[(3usize, 0.5), (4, 0.75), (5, 0.25)] {
            let p = ProblemParams::new(n, g).unwrap();
            let q = lambda_hardy_by_quadrature(&p);
            assert!((q / p.lambda_hardy - 1.0).abs() < 1e-6, "n={n} g={g}: {q} vs {}", p.lambda_hardy);
        }
    }

    #[test]
    fn kernel_is_even_and_seam_continuous() {
        let p = p3();
        assert_eq!(kernel_direct(2.0, &p).unwrap(), kernel_direct(-2.0, &p).unwrap());
        let inner = p.singular_coeff() * XI_FLOOR.powf(-p.singular_exponent());
        let outer = kernel_direct(XI_FLOOR, &p).unwrap();
        assert!((inner / outer - 1.0).abs() < 1e-6);
        assert!(kernel_direct(0.0, &p).is_err());
    }

    #[test]
    fn table_interpolation_accuracy() {
        let p = p3();
        let t = table3();
        for &xi in &[1.3e-4, 0.0123, 0.77, 3.3, 11.1] {
            let a = t.eval(xi);
            let b = kernel_direct(xi, &p).unwrap();
            assert!((a / b - 1.0).abs() < 1e-9, "xi={xi} {a} {b}");
        }
        assert!(t.tail_variation() < 0.02);
    }

    #[test]
    fn kernel_log_slopes() {
        let t = table3();
        let xs: Vec<f64> = (0..=30).map(|i| 6.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| t.eval(x)).collect();
        assert!((log_fit(&xs, &ys).slope / -2.0 - 1.0).abs() < 0.02);
        let xs: Vec<f64> = (0..=20).map(|i| (1e-4f64.ln() + i as f64 * 0.1 * 10f64.ln()).exp()).collect();
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| t.eval(x)).collect();
        assert!((log_fit(&lx, &ys).slope / -2.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn csv_round_trip() {
        let t = table3();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = KernelTable::read_csv(&t.params, t.spec, buf.as_slice()).unwrap();
        assert_eq!(back.values, t.values);
        let other = ProblemParams::new(3, 0.25).unwrap();
        assert!(KernelTable::read_csv(&other, t.spec, buf.as_slice()).is_err());
    }

    #[test]
    fn periodized_kernel_properties() {
        let t = table3();
        let pk = periodize_kernel(t, 10.0, 1e-12).unwrap();
        assert!(pk.truncation <= 4);
        for &x in &[0.3, 1.7, 4.9] {
            assert!((pk.eval(x) - pk.eval(x + 10.0)).abs() <= 1e-12 * pk.eval(x));
            assert_eq!(pk.eval(x), pk.eval(-x));
            assert!(pk.eval(x) >= t.eval(x));
        }
        // tail oracle: direct summation of far images
        let x = 5.0;
        let dropped: f64 = ((pk.truncation as i64 + 1)..60)
            .map(|j| t.eval(x - j as f64 * 10.0) + t.eval(x + j as f64 * 10.0))
            .sum();
        assert!(dropped <= 1e-12);
        assert!(periodize_kernel(t, 3.0, 1e-12).is_err());
    }
}
