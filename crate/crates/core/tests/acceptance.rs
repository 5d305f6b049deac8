//! Acceptance suite: one line per criterion, then a comparison with the
//! pinned outcomes below. Exits nonzero when any criterion deviates from
//! its pinned outcome.

use gluing_core::acceptance::{run_suite, summary_line, SuiteConfig};
use gluing_core::fracops::{KernelGridSpec, KernelTable};
use std::process::ExitCode;
use std::time::Instant;

/// Criteria pinned to fail, with the reason. Each failing row also carries
/// the oracle-based check that passes.
const PINNED_FAILURES: &[(usize, &str)] = &[
    (5, "stated limit 8/3 of F e^(sigma ell); the leading-order oracle gives 2 pi"),
    (6, "concentric pair integral carries the factor |S^(n-1)| 2^(-sigma(beta+1)) = pi/2 besides (1/lambda1) F"),
    (8, "F_R R equals (n - 2 gamma) q at a balanced point, twice the stated (n - 2 gamma)/2 q"),
];

fn main() -> ExitCode {
    let start = Instant::now();
    let source = |p: &gluing_core::ProblemParams| KernelTable::build(p, KernelGridSpec::default_for(p));
    let rows = match run_suite(&SuiteConfig::default(), &source) {
        Ok(r) => r,
        Err(e) => {
            println!("suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut deviations = 0;
    for r in &rows {
        println!("{}", summary_line(r));
        let pinned = PINNED_FAILURES.iter().find(|(id, _)| *id == r.id);
        match (r.pass(), pinned) {
            (true, None) => {}
            (false, Some((_, why))) => println!("    pinned failure: {why}"),
            (true, Some(_)) => {
                println!("    unexpected PASS of a pinned failure");
                deviations += 1;
            }
            (false, None) => {
                for c in r.checks.iter().filter(|c| !c.pass) {
                    println!("    {}: measured {} threshold {}", c.label, c.measured, c.threshold);
                }
                deviations += 1;
            }
        }
        if !r.pass() {
            for c in r.checks.iter().filter(|c| c.pass) {
                println!("    passing: {}: {}", c.label, c.measured);
            }
        }
    }
    let passed = rows.iter().filter(|r| r.pass()).count();
    println!(
        "{passed}/{} criteria pass; {} pinned failures; {deviations} deviations; {:.1} s",
        rows.len(),
        PINNED_FAILURES.len(),
        start.elapsed().as_secs_f64()
    );
    if deviations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
