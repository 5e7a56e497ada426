//! Quadratic-in-features Q-functions: evaluation, the closed-form greedy action and a
//! brute-force check of it.

use lpadp::benchmark;
use lpadp::plant::AugmentedState;
use lpadp::qfunc::{FeatureMap, QParams};

fn main() -> lpadp::Result<()> {
    let p = benchmark::constrained_optimum();
    println!("features: {:?}", p.feature_map().names());
    println!("eigenvalues: {:.3?}", p.eigenvalues());

    let z = AugmentedState::new(vec![0.3, -1.6], vec![0.5, 0.5])?;
    let a = p.greedy_action(&z)?[0];
    println!("greedy action at {:?}: {a:.6}", z.stacked());

    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for k in 0..=60_000 {
        let v = -3.0 + k as f64 * 1e-4;
        let q = p.q_value(&z, &[v])?;
        if q < best {
            best = q;
            arg = v;
        }
    }
    println!("scan minimum over [-3, 3]: a = {arg:.4}, Q = {best:.6} (closed form {:.6})", p.min_q(&z)?);

    // A two-input map: the action block is solved as a linear system.
    let map = FeatureMap::linear(1, 2);
    let rows = vec![
        vec![1.0, 0.0, 0.2, 0.1],
        vec![0.0, 1.0, 0.0, 0.3],
        vec![0.2, 0.0, 2.0, 0.5],
        vec![0.1, 0.3, 0.5, 1.0],
    ];
    let q = QParams::from_rows(map, &rows)?;
    let z = AugmentedState::new(vec![1.0], vec![-1.0])?;
    println!("two-input greedy action: {:.4?}", q.greedy_action(&z)?);
    Ok(())
}
