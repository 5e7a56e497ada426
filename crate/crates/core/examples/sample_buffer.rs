//! Building the replay buffer and collecting multi-step rollouts from it.

use lpadp::benchmark;
use lpadp::plant::PlantSpec;
use lpadp::sampling::{build_buffer, collect_rollouts, SampleBuffer, UniformSampler};

fn main() -> lpadp::Result<()> {
    let plant = PlantSpec::by_name("linear-tracking")?.build(Some(vec![benchmark::INPUT_BOUND]))?;
    let sampler = UniformSampler::boxed(4, (-5.0, 5.0), 1, (-2.0, 2.0))?;
    let buffer = build_buffer(&plant, 500, &sampler, 7)?;
    let s = &buffer.samples()[0];
    println!("{} samples; first: z = {:.3?}, a = {:.3?}, L = {:.3}", buffer.len(), s.state.stacked(), s.action, s.cost);

    let policy = lpadp::qfunc::FeaturePolicy::new(lpadp::qfunc::FeatureMap::linear(2, 1), vec![vec![-0.5, -1.0, 0.0, 0.0]])?;
    for h in [1, 3, 10] {
        let set = collect_rollouts(&plant, &buffer, &policy, h, 0)?;
        let first = set.rollouts[0].as_ref().expect("linear rollouts stay bounded");
        println!("H = {h:>2}: {} states, {} on-policy costs, survivors {}", first.states.len(), first.costs.len(), set.survivors());
    }

    let path = std::env::temp_dir().join("lpadp_buffer.csv");
    buffer.save_csv(&path)?;
    let back = SampleBuffer::load_csv(&path)?;
    println!("round trip through {} exact: {}", path.display(), back == buffer);
    Ok(())
}
