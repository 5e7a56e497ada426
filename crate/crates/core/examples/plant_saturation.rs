//! The benchmark plant as a black box: one augmented step, saturation, and a closed-loop
//! run under the stabilising initial law.

use lpadp::benchmark;
use lpadp::plant::{saturate, AugmentedState, PlantSpec};

fn main() -> lpadp::Result<()> {
    let plant = PlantSpec::default().build(Some(vec![benchmark::INPUT_BOUND]))?;
    let z0 = AugmentedState::from_state(&benchmark::X0, &benchmark::R0)?;
    println!("z0 = {:?}", z0.stacked());

    for a in [0.0, 0.3, 0.7, 5.0] {
        let z1 = plant.step_augmented(&z0, &[a])?;
        let cost = plant.stage_cost_observed(&z0, &[a])?;
        println!("a = {a:>4}: applied {:?}, cost {cost:.4}, z1 = {:.4?}", saturate(&[a], &[0.7])?.value, z1.stacked());
    }

    let policy = benchmark::stabilizing_policy();
    let (traj, failure) = plant.simulate_closed_loop_partial(&policy, &benchmark::X0, &benchmark::R0, 200, benchmark::GAMMA)?;
    println!("\nclosed loop under mu0: {} steps recorded, discounted cost {:.4e}", traj.applied_inputs.len(), traj.discounted_cost);
    if let Some(e) = failure {
        println!("stopped: {e}");
    }
    let worst = traj.applied_inputs.iter().map(|u| u.value[0].abs()).fold(0.0, f64::max);
    println!("largest applied |u| = {worst}");
    Ok(())
}
