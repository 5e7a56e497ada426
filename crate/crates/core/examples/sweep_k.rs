//! Iterations to converge as a function of the horizon gain K, for both initializations.

use lpadp::harness::{run_sweep_k, ExperimentConfig, Variant};

fn main() -> lpadp::Result<()> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut cfg = ExperimentConfig::load(&root.join("linear-tracking.toml"))?;
    cfg.out_dir = std::env::temp_dir().join("lpadp_sweep");
    let report = run_sweep_k(&cfg, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?;
    println!("  K   [A]   [S]");
    let a = report.counts(Variant::MsqViLpA);
    let s = report.counts(Variant::MsqViLpS);
    for ((k, na, _), (_, ns, _)) in a.iter().zip(&s) {
        println!("{k:>3} {:>5} {:>5}", na.unwrap_or(0), ns.unwrap_or(0));
    }
    Ok(())
}
