use crate::resolve;
use clap::Args;
use pdsep_core::error::Result;
use pdsep_core::gradcheck::{run_suite, DEFAULT_CASES, DEFAULT_TOL};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative tolerance against central finite differences.
    #[arg(long)]
    tol: Option<f64>,
    /// Randomized cases per op.
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Test fixture: negate the named op's analytic gradient to verify the
    /// harness catches sign bugs.
    #[arg(long)]
    inject_fault: Option<String>,
}

pub fn run(args: GradcheckArgs) -> Result<i32> {
    let mut cfg = resolve::load_base(&args.config)?;
    cfg.set_opt("tol", args.tol)?;
    cfg.set_opt("cases", args.cases)?;
    cfg.set_opt("inject_fault", args.inject_fault)?;
    let seed = resolve::resolve_seed(&mut cfg, args.seed)?;

    let tol = cfg.get_or("tol", DEFAULT_TOL)?;
    let cases = cfg.get_or("cases", DEFAULT_CASES)?;
    let fault = cfg.get("inject_fault").map(|s| s.to_string());

    let report = run_suite(tol, cases, seed, fault.as_deref())?;
    for op in &report.ops {
        println!(
            "{:18} cases={:4} max_rel_err={:10.3e}  {}",
            op.name,
            op.cases,
            op.max_rel_err,
            if op.passed { "pass" } else { "FAIL" }
        );
    }
    if report.all_passed() {
        println!("gradcheck: all {} ops passed (tol {tol:.1e})", report.ops.len());
        Ok(0)
    } else {
        eprintln!("gradcheck FAILED for: {}", report.failed_ops().join(", "));
        Ok(3)
    }
}
