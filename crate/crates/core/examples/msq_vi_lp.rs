//! Multi-step value iteration against standard value iteration on the linear tracking
//! plant, from a start that satisfies the initialization condition, with the monotonicity
//! check on both runs.

use lpadp::algorithms::{self, check_monotonicity, initialization_gap, AlgorithmConfig, InitialPolicy};
use lpadp::plant::PlantSpec;
use lpadp::qfunc::{FeatureMap, QParams};
use lpadp::sampling::{build_buffer, UniformSampler};

fn main() -> lpadp::Result<()> {
    let plant = PlantSpec::by_name("linear-tracking")?.build(None)?;
    let sampler = UniformSampler::boxed(4, (-5.0, 5.0), 1, (-2.0, 2.0))?;
    let buffer = build_buffer(&plant, 2000, &sampler, 0)?;
    let map = FeatureMap::linear(2, 1);

    // Policy iteration from a stabilising law gives the fixed point; twice it is a valid start.
    let mut pi = AlgorithmConfig::new(QParams::zeros(map.clone()), 0.95, 0.0);
    pi.initial_policy = InitialPolicy::Explicit { coefficients: vec![vec![-0.5, -1.0, 0.0, 0.0]] };
    let fixed = algorithms::q_pi_lp(&pi, &plant, &buffer)?;
    println!("q-pi-lp: {:?} in {} iterations", fixed.status, fixed.iterations());
    let p0 = fixed.final_params.scaled(2.0);
    println!("initialization gap (<= 0 required): {:.3e}", initialization_gap(&p0, &buffer, 0.95)?);

    let msq = algorithms::msq_vi_lp(&AlgorithmConfig::new(p0.clone(), 0.95, 5.0), &plant, &buffer)?;
    let vi = algorithms::q_vi_lp(&AlgorithmConfig::new(p0, 0.95, 0.0), &plant, &buffer)?;
    for run in [&msq, &vi] {
        let report = check_monotonicity(run, &buffer, 1e-6)?;
        println!(
            "{}: {:?} after {} iterations, monotone: {} (max violation {:.2e})",
            run.algorithm.name(),
            run.status,
            run.iterations(),
            report.holds(),
            report.max_violation
        );
    }
    println!("\n i   H   msq distance   vi distance");
    for (a, b) in msq.history.iter().zip(&vi.history).take(10) {
        println!("{:>2} {:>3}   {:.3e}      {:.3e}", a.index, a.horizon, a.buffer_q_distance, b.buffer_q_distance);
    }
    Ok(())
}
