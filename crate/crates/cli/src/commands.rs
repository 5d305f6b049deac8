//! Subcommand implementations. Each stage writes its artifact into the
//! output directory and prints a short summary to stdout.

use crate::cache;
use crate::config::RunConfig;
use crate::error::CliError;
use gluing_core::acceptance::{self, appendix_oracle, run_suite, summary_line, SuiteConfig};
use gluing_core::assembly::{
    corrected_field, evaluate_at, random_samples, residual_decay_fit, scan_residual, AssemblyContext, DecayFit,
    NormKind, Region, WeightedNormSpec,
};
use gluing_core::delaunay::{solve_delaunay, sweep_rates, DelaunayProfile};
use gluing_core::fracops::{lambda_hardy_by_quadrature, KernelTable, ProblemParams};
use gluing_core::interactions::{appendix_constants, InteractionConstants};
use gluing_core::reduced_system::{solve_balance, solve_reduced, BalanceSolution};
use gluing_core::special::{gamma_fn, ln_gamma_fn};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const VERSION_LINE: &str = concat!("# gluing ", env!("CARGO_PKG_VERSION"));

/// Resolved run: configuration plus command-line overrides.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub seed: u64,
}

impl Run {
    fn params(&self) -> Result<ProblemParams, CliError> {
        self.cfg.problem_params()
    }

    fn create(&self, name: &str, artifact: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let path = self.out.join(name);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{VERSION_LINE} {artifact}").map_err(|e| CliError::io(&path, e))?;
        Ok((path, w))
    }

    /// CSV file with the version comment line, then `header`, then `rows`.
    fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let (path, w) = self.create(name, name.trim_end_matches(".csv"))?;
        let io = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(header).map_err(io)?;
        for r in rows {
            wtr.write_record(r).map_err(io)?;
        }
        wtr.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn table(&self, p: &ProblemParams) -> Result<KernelTable, CliError> {
        cache::load_or_build(&self.cache, p, self.cfg.kernel_spec(p))
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn kernel(run: &Run) -> Result<KernelTable, CliError> {
    let p = run.params()?;
    let table = run.table(&p)?;
    let (path, mut w) = run.create("kernel.csv", "kernel")?;
    table.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
    println!(
        "kernel: {} samples on [{:e}, {:e}], tail variation {:.2e}",
        table.xi_grid.len(),
        table.spec.xi_min,
        table.spec.xi_max,
        table.tail_variation()
    );
    Ok(table)
}

pub fn delaunay(run: &Run, table: &KernelTable) -> Result<Vec<DelaunayProfile>, CliError> {
    let settings = run.cfg.delaunay_settings();
    let mut profiles = Vec::new();
    for &l in &run.cfg.solver.l_sweep {
        let pr = solve_delaunay(table, l, &settings)?;
        println!(
            "delaunay: L={l} residual {:.2e} iterations {} min {:.6e} psi {:.3e}",
            pr.residual_norm,
            pr.iterations,
            pr.min_value(),
            pr.psi_sup()
        );
        profiles.push(pr);
    }
    if profiles.len() >= 2 {
        let r = sweep_rates(&profiles);
        println!("delaunay: psi rate {:.4}, neck slope {:.4}", r.psi_rate, r.neck_slope);
    }
    let rows: Vec<Vec<String>> = profiles
        .iter()
        .flat_map(|pr| {
            (0..pr.grid.len()).map(move |i| {
                vec![num(pr.l), num(pr.grid[i]), num(pr.v_values[i]), num(pr.tower_values[i]), num(pr.psi_values[i])]
            })
        })
        .collect();
    run.write_csv("profiles.csv", &["L", "t", "v", "tower", "psi"], &rows)?;
    Ok(profiles)
}

/// Closed-form and quadrature oracles for the six normalization constants.
fn constant_rows(p: &ProblemParams, c: &InteractionConstants) -> Vec<(&'static str, f64, f64)> {
    let (n, g) = (p.nf(), p.gamma);
    let pi = std::f64::consts::PI;
    // reflection form of the singular-integral normalization
    let kappa = -4f64.powf(g) * gamma_fn(n / 2.0 + g) / (pi.powf(n / 2.0) * gamma_fn(-g));
    let c_bubble = 4f64.powf(g) * (ln_gamma_fn(n / 2.0 + g) - ln_gamma_fn(n / 2.0 - g)).exp();
    let (a0, a2, a3) = appendix_oracle(p);
    vec![
        ("kappa", p.kappa, kappa),
        ("lambda_hardy", p.lambda_hardy, lambda_hardy_by_quadrature(p)),
        ("c_bubble", p.c_bubble, c_bubble),
        ("A2", c.a2, a2),
        ("A3", c.a3, a3),
        ("A0", c.a0, a0),
    ]
}

pub fn constants(run: &Run) -> Result<InteractionConstants, CliError> {
    let p = run.params()?;
    let c = appendix_constants(&p);
    let rows: Vec<Vec<String>> = constant_rows(&p, &c)
        .into_iter()
        .map(|(name, v, o)| {
            println!("{name:<13} {v:>22.15e}  oracle {o:>22.15e}  delta {:.2e}", (v - o).abs());
            vec![name.to_string(), num(v), num(o), num((v - o).abs())]
        })
        .collect();
    run.write_csv("constants.csv", &["name", "value", "oracle", "delta"], &rows)?;
    Ok(c)
}

pub fn interactions(run: &Run) -> Result<InteractionConstants, CliError> {
    let c = constants(run)?;
    let rows: Vec<Vec<String>> = c
        .f_table
        .iter()
        .zip(&c.df_table)
        .map(|((l, f), (_, d))| vec![num(*l), num(*f), num(*d)])
        .collect();
    run.write_csv("interactions.csv", &["ell", "F", "dF"], &rows)?;
    Ok(c)
}

pub fn balance(run: &Run, consts: &InteractionConstants) -> Result<BalanceSolution, CliError> {
    let pts = &run.cfg.points;
    let sol = solve_balance(&pts.coordinates, &pts.q, consts)?;
    println!("balance: residual {:.2e} after {} iterations", sol.residual, sol.iterations);
    let n = run.cfg.params.n;
    let mut header = vec!["point".to_string(), "q".into(), "R".into()];
    header.extend((1..=n).map(|d| format!("a_hat_{d}")));
    let rows: Vec<Vec<String>> = (0..sol.big_r.len())
        .map(|i| {
            let mut r = vec![i.to_string(), num(pts.q[i]), num(sol.big_r[i])];
            r.extend(sol.a_hat[i].iter().map(|v| num(*v)));
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("balance.csv", &h, &rows)?;
    Ok(sol)
}

pub fn reduce(run: &Run, consts: &InteractionConstants) -> Result<(), CliError> {
    let p = run.params()?;
    let pts = &run.cfg.points;
    let (cfg, pert, rep) = solve_reduced(&p, &pts.coordinates, &pts.q, run.cfg.solver.l, &run.cfg.reduced_settings(), consts)?;
    println!(
        "reduce: L={} outer {} iterations residual {:.2e}; contraction {:.3e}; ball constant {:.3e}; max beta {:.2e}",
        cfg.l, rep.outer_iterations, rep.outer_residual, rep.contraction, rep.ball_constant, rep.max_beta
    );
    let n = p.n;
    let mut header = vec!["point", "j", "L_i", "q", "R"].into_iter().map(String::from).collect::<Vec<_>>();
    header.extend((1..=n).map(|d| format!("a_hat_{d}")));
    header.push("r_j".into());
    header.extend((1..=n).map(|d| format!("a_tilde_{d}")));
    let mut rows = Vec::new();
    for i in 0..cfg.k() {
        for j in 0..pert.depth {
            let mut r = vec![i.to_string(), j.to_string(), num(cfg.l_i(i)), num(cfg.q[i]), num(cfg.big_r[i])];
            r.extend(cfg.a_hat[i].iter().map(|v| num(*v)));
            r.push(num(pert.r[i][j]));
            r.extend(pert.a_tilde[i][j].iter().map(|v| num(*v)));
            rows.push(r);
        }
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("solution.csv", &h, &rows)?;
    Ok(())
}

fn decay_report(p: &ProblemParams, fit: &DecayFit, positivity: (usize, usize)) -> String {
    let target = -p.sigma / 2.0 * (1.0 + acceptance::DECAY_MARGIN);
    let mut s = format!("{VERSION_LINE} decay-fit\n");
    s += "L,norm\n";
    for (l, v) in fit.ls.iter().zip(&fit.norms) {
        s += &format!("{},{}\n", num(*l), num(*v));
    }
    s += &format!("slope = {:.6}\n", fit.slope);
    s += &format!("reference = -(n - 2 gamma)/4 = {:.6}\n", -p.sigma / 2.0);
    s += &format!("threshold = {target:.6}\n");
    s += &format!("margin = {:.6}\n", fit.margin);
    s += &format!("max fit residual = {:.3e}\n", fit.max_fit_residual);
    match &fit.non_asymptotic {
        Some(m) => s += &format!("status = {m}\n"),
        None if fit.slope <= target => s += "status = pass\n",
        None => s += "status = fail\n",
    }
    s += &format!("positivity = {}/{} samples positive\n", positivity.0, positivity.1);
    s
}

pub fn assemble(run: &Run, table: &KernelTable, consts: &InteractionConstants) -> Result<(), CliError> {
    let p = run.params()?;
    let ctx = AssemblyContext {
        table,
        consts,
        delaunay: run.cfg.delaunay_settings(),
        reduced: run.cfg.reduced_settings(),
        gamma1: None,
    };
    let pts = &run.cfg.points;
    let (field, _, pert) = corrected_field(&ctx, &pts.coordinates, &pts.q, run.cfg.solver.l)?;
    let spec = WeightedNormSpec::new(&p, None, pert.tau, pert.depth)?;
    let samples = scan_residual(&field, &spec)?;
    let n = p.n;
    let mut header: Vec<String> = vec!["region".into(), "point".into(), "dist".into()];
    header.extend((1..=n).map(|d| format!("x_{d}")));
    header.extend(["ubar", "S", "weight", "weighted"].map(String::from));
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let (region, point, weight) = match s.region {
                Region::Inner(i) => ("inner", i.to_string(), spec.inner_weight(&p, NormKind::StarStar, s.dist)),
                Region::Outer => ("outer", String::new(), spec.outer_weight(&p, NormKind::StarStar, s.dist)),
            };
            let mut r = vec![region.to_string(), point, num(s.dist)];
            r.extend(s.at.absolute(&field).iter().map(|v| num(*v)));
            r.extend([evaluate_at(&field, &s.at), s.value, weight, weight * s.value.abs()].map(num));
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write_csv("residual_scan.csv", &h, &rows)?;

    let count = run.cfg.solver.positivity_samples;
    let positive = random_samples(&field, pert.depth, count, run.seed)
        .iter()
        .filter(|at| evaluate_at(&field, at) > 0.0)
        .count();
    let fit = residual_decay_fit(&ctx, &pts.coordinates, &pts.q, &run.cfg.solver.l_sweep)?;
    let report = decay_report(&p, &fit, (positive, count));
    let path = run.out.join("decay_fit.txt");
    std::fs::write(&path, &report).map_err(|e| CliError::io(&path, e))?;
    println!(
        "assemble: {} residual samples; decay slope {:.4} margin {:.3}{}; {positive}/{count} positive",
        samples.len(),
        fit.slope,
        fit.margin,
        fit.non_asymptotic.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
    );
    Ok(())
}

pub fn accept(run: &Run) -> Result<(), CliError> {
    let suite = SuiteConfig {
        decay_ls: run.cfg.accept.decay_l.clone(),
        only: run.cfg.accept.criteria.clone(),
        seed: run.seed,
    };
    let source = |p: &ProblemParams| -> gluing_core::Result<KernelTable> {
        cache::load_or_build(&run.cache, p, run.cfg.kernel_spec(p)).map_err(|e| match e {
            CliError::Core(c) => c,
            other => gluing_core::Error::InvalidParams(other.to_string()),
        })
    };
    let rows = run_suite(&suite, &source)?;
    for r in &rows {
        println!("{}", summary_line(r));
    }
    std::fs::create_dir_all(&run.out).map_err(|e| CliError::io(&run.out, e))?;
    let path = run.out.join("accept.csv");
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{VERSION_LINE} accept")?;
        acceptance::write_csv(&rows, &mut w)?;
        w.flush()
    };
    write().map_err(|e| CliError::io(&path, e))?;
    let failed = rows.iter().filter(|r| !r.pass()).count();
    println!("accept: {}/{} criteria pass", rows.len() - failed, rows.len());
    if failed > 0 {
        return Err(CliError::AcceptFailed { failed, total: rows.len() });
    }
    Ok(())
}

pub fn pipeline(run: &Run) -> Result<(), CliError> {
    let table = kernel(run)?;
    delaunay(run, &table)?;
    let consts = constants(run)?;
    balance(run, &consts)?;
    reduce(run, &consts)?;
    assemble(run, &table, &consts)?;
    Ok(())
}

pub fn resolve_dir(base: Option<&Path>, fallback: &Path) -> PathBuf {
    base.map(Path::to_path_buf).unwrap_or_else(|| fallback.to_path_buf())
}
