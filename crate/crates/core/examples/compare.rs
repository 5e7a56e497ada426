//! The five-variant comparison through the harness, on the linear tracking plant.
//! Pass `benchmark` as the first argument to run the benchmark defaults instead.

use lpadp::harness::{run_compare, ExperimentConfig};

fn main() -> lpadp::Result<()> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let which = std::env::args().nth(1).unwrap_or_else(|| "linear-tracking".into());
    let mut cfg = ExperimentConfig::load(&root.join(format!("{which}.toml")))?;
    cfg.out_dir = std::env::temp_dir().join(format!("lpadp_compare_{which}"));
    let report = run_compare(&cfg)?;
    for arm in &report.arms {
        match &arm.result {
            Ok(r) => println!("{:<14} {:?} after {} iterations {}", arm.variant.name(), r.status, r.iterations(), r.abort_reason.clone().unwrap_or_default()),
            Err(e) => println!("{:<14} error: {e}", arm.variant.name()),
        }
    }
    println!("largest distance between converged final matrices: {:?}", report.max_pairwise_distance);
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}
