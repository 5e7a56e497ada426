//! Learns constrained and unconstrained controllers for the linear tracking plant and
//! simulates both closed loops.

use lpadp::harness::{run_tracking, tracking_controller, ExperimentConfig};

fn main() -> lpadp::Result<()> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for constrained in [false, true] {
        let mut cfg = ExperimentConfig::load(&root.join("linear-tracking.toml"))?;
        cfg.constrained = constrained;
        cfg.out_dir = std::env::temp_dir().join("lpadp_tracking");
        let params = tracking_controller(&cfg)?;
        let report = run_tracking(&cfg, &params, 200)?;
        let t = &report.trajectory;
        let applied = t.applied_inputs.iter().map(|u| u.value[0].abs()).fold(0.0, f64::max);
        let raw = t.unconstrained_actions.iter().map(|a| a[0].abs()).fold(0.0, f64::max);
        let err = t.states.last().map(|z| z.error.iter().map(|e| e.abs()).fold(0.0, f64::max)).unwrap_or(0.0);
        println!(
            "constrained = {constrained}: max |u| applied {applied:.3}, max |mu| {raw:.3}, final |e| {err:.2e}, cost {:.3} -> {}",
            t.discounted_cost,
            report.path.display()
        );
    }
    Ok(())
}
