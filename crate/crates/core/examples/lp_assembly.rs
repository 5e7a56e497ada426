//! One iteration's linear program, assembled by hand and solved.

use lpadp::lp::{self, RelevanceWeight};
use lpadp::plant::PlantSpec;
use lpadp::qfunc::{FeatureMap, GreedyPolicy, QParams};
use lpadp::sampling::{build_buffer, collect_rollouts, UniformSampler};

fn main() -> lpadp::Result<()> {
    let plant = PlantSpec::by_name("linear-tracking")?.build(None)?;
    let sampler = UniformSampler::boxed(4, (-5.0, 5.0), 1, (-2.0, 2.0))?;
    let buffer = build_buffer(&plant, 1000, &sampler, 1)?;
    let map = FeatureMap::linear(2, 1);

    let moments = RelevanceWeight::StandardNormal.moments(&map, &buffer)?;
    println!("M_c smallest eigenvalue: {:.3}", moments.min_eigenvalue());
    let objective = lp::objective_coefficients(&moments);

    let p_prev = QParams::identity(map.clone()).scaled(100.0);
    let policy = GreedyPolicy::new(p_prev.clone())?;
    for h in [1, 4] {
        let rollouts = collect_rollouts(&plant, &buffer, &policy, h, 0)?;
        let program = lp::assemble(objective.clone(), &buffer, &rollouts, &p_prev, 0.95, 0)?;
        let solution = lp::solve(&program)?;
        println!(
            "H = {h}: {} variables, {} constraints, status {}, objective {:.4}, max violation {:.1e}",
            program.num_variables(),
            program.constraints.len(),
            solution.status,
            solution.objective_value,
            solution.max_violation
        );
        if h == 4 {
            let path = std::env::temp_dir().join("lpadp_program.txt");
            program.write_text(&path)?;
            println!("dumped to {}", path.display());
        }
    }

    // The benchmark's printed moments (all third and fourth moments one) are not a valid
    // second-moment matrix, and the program is unbounded for every buffer.
    let bench = FeatureMap::benchmark();
    let ones = RelevanceWeight::AllOnes.moments(&bench, &buffer)?;
    println!("all-ones moments, smallest eigenvalue: {:.3}", ones.min_eigenvalue());
    Ok(())
}
