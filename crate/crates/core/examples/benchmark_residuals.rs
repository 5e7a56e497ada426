//! How well the printed converged matrices satisfy the sampled Bellman equation of the
//! printed benchmark plant, and what the default runs do there.

use lpadp::algorithms::bellman_residual;
use lpadp::benchmark;
use lpadp::harness::{run_compare, ExperimentConfig};
use lpadp::plant::AugmentedState;

fn main() -> lpadp::Result<()> {
    for constrained in [false, true] {
        let cfg = ExperimentConfig { constrained, out_dir: std::env::temp_dir().join("lpadp_benchmark"), ..Default::default() };
        let plant = cfg.build_plant()?;
        let buffer = cfg.build_buffer(&plant)?;
        let p = if constrained { benchmark::constrained_optimum() } else { benchmark::unconstrained_optimum() };
        println!("constrained = {constrained}");
        println!("  printed optimum: eigenvalues {:.3?}", p.eigenvalues());
        println!("  sampled Bellman residual: {:.3e}", bellman_residual(&p, &buffer, benchmark::GAMMA)?);
        // e = [1, 0], r = 0 with a = 0 is a fixed point of the plant with stage cost 4, so the
        // true Q-value there is at least 4.
        let z = AugmentedState::new(vec![1.0, 0.0], vec![0.0, 0.0])?;
        println!("  Q(e = [1, 0], r = 0, a = 0) = {:.4}", p.q_value(&z, &[0.0])?);

        let report = run_compare(&cfg)?;
        for arm in &report.arms {
            if let Ok(r) = &arm.result {
                println!("  {:<14} {:?} after {}: {}", arm.variant.name(), r.status, r.iterations(), r.abort_reason.clone().unwrap_or_default());
            }
        }
    }
    Ok(())
}
