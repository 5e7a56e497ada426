//! Randomized experience-replay buffer and per-iteration multi-step rollouts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::{fmt_float, read_comments, write_csv};
use crate::plant::{AugmentedState, Plant};
use crate::qfunc::Policy;

/// One replay record `(z_b, a_b, L(z_b, a_b), z_{1,b})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: AugmentedState,
    pub action: Vec<f64>,
    pub cost: f64,
    pub next: AugmentedState,
}

/// Immutable set of excitation samples reused at every iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBuffer {
    samples: Vec<Sample>,
    seed: u64,
}

impl SampleBuffer {
    pub fn from_samples(samples: Vec<Sample>, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("buffer needs at least one sample".into()));
        }
        if let Some(s) = samples.iter().find(|s| !(s.cost >= 0.0)) {
            return Err(Error::InvalidArgument(format!("sample cost must be non-negative, got {}", s.cost)));
        }
        Ok(Self { samples, seed })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One row per sample: `z`, `a`, cost, next `z`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let first = &self.samples[0];
        let n = first.state.error.len();
        let m = first.action.len();
        let mut header = Vec::new();
        for prefix in ["", "next_"] {
            header.extend((1..=n).map(|i| format!("{prefix}e{i}")));
            header.extend((1..=n).map(|i| format!("{prefix}r{i}")));
            if prefix.is_empty() {
                header.extend((1..=m).map(|j| format!("a{j}")));
                header.push("cost".into());
            }
        }
        let rows: Vec<Vec<String>> = self
            .samples
            .iter()
            .map(|s| {
                s.state
                    .stacked()
                    .into_iter()
                    .chain(s.action.iter().copied())
                    .chain(std::iter::once(s.cost))
                    .chain(s.next.stacked())
                    .map(fmt_float)
                    .collect()
            })
            .collect();
        let comments = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("state_dim".to_string(), n.to_string()),
            ("input_dim".to_string(), m.to_string()),
        ];
        write_csv(path, &comments, &header, &rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let comments = read_comments(&text);
        let lookup = |key: &str| -> Result<u64> {
            comments
                .iter()
                .find(|(k, _)| k == key)
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("buffer file is missing `# {key}=` header")))
        };
        let seed = lookup("seed")?;
        let n = lookup("state_dim")? as usize;
        let m = lookup("input_dim")? as usize;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for record in reader.records() {
            let values = record?
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number `{f}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != 4 * n + m + 1 {
                return Err(Error::Config(format!("buffer row has {} columns, expected {}", values.len(), 4 * n + m + 1)));
            }
            let state = AugmentedState::from_stacked(&values[..2 * n])?;
            let action = values[2 * n..2 * n + m].to_vec();
            let cost = values[2 * n + m];
            let next = AugmentedState::from_stacked(&values[2 * n + m + 1..])?;
            samples.push(Sample { state, action, cost, next });
        }
        Self::from_samples(samples, seed)
    }
}

/// Source of excitation pairs `(z, a)`.
pub trait Sampler {
    /// Draws a stacked augmented state and an action.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);
}

/// Independent uniform draws per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformSampler {
    pub state_ranges: Vec<(f64, f64)>,
    pub action_ranges: Vec<(f64, f64)>,
}

impl UniformSampler {
    pub fn new(state_ranges: Vec<(f64, f64)>, action_ranges: Vec<(f64, f64)>) -> Result<Self> {
        if state_ranges.is_empty() || action_ranges.is_empty() {
            return Err(Error::InvalidArgument("sampling ranges must be nonempty".into()));
        }
        if let Some((lo, hi)) = state_ranges.iter().chain(&action_ranges).find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument(format!("empty sampling interval [{lo}, {hi})")));
        }
        Ok(Self { state_ranges, action_ranges })
    }

    /// Same interval for every augmented-state component and every action channel.
    pub fn boxed(augmented_dim: usize, state: (f64, f64), input_dim: usize, action: (f64, f64)) -> Result<Self> {
        Self::new(vec![state; augmented_dim], vec![action; input_dim])
    }
}

impl Sampler for UniformSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let z = self.state_ranges.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
        let a = self.action_ranges.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
        (z, a)
    }
}

/// Draws `size` pairs and queries the plant once per pair for cost and successor.
pub fn build_buffer<S: Sampler + ?Sized>(plant: &Plant, size: usize, sampler: &S, seed: u64) -> Result<SampleBuffer> {
    if size == 0 {
        return Err(Error::InvalidArgument("buffer size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(size);
    for b in 0..size {
        let (z, action) = sampler.draw(&mut rng);
        let state = AugmentedState::from_stacked(&z)?;
        let cost = plant.stage_cost_observed(&state, &action)?;
        let next = match plant.step_augmented(&state, &action) {
            Ok(next) if next.norm() <= plant.divergence_threshold() => next,
            Ok(_) | Err(Error::NumericalOverflow { .. }) => return Err(Error::DivergedRollout { sample: b, step: 1 }),
            Err(e) => return Err(e),
        };
        samples.push(Sample { state, action, cost, next });
    }
    SampleBuffer::from_samples(samples, seed)
}

/// On-policy continuation of one buffer sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `z_{1,b} .. z_{H,b}`.
    pub states: Vec<AugmentedState>,
    /// `L(z_l, mu(z_l))` for `l = 1 .. H-1`.
    pub costs: Vec<f64>,
    /// `mu(z_{H,b})`.
    pub terminal_action: Vec<f64>,
}

impl Rollout {
    pub fn terminal_state(&self) -> &AugmentedState {
        self.states.last().expect("rollouts hold at least one state")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSample {
    pub sample: usize,
    pub step: usize,
}

/// Rollouts for every buffer sample. Divergent samples are `None` and listed in `dropped`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSet {
    pub rollouts: Vec<Option<Rollout>>,
    pub horizon: usize,
    pub policy_id: usize,
    pub dropped: Vec<DroppedSample>,
}

impl RolloutSet {
    pub fn survivors(&self) -> usize {
        self.rollouts.len() - self.dropped.len()
    }

    pub fn survival_fraction(&self) -> f64 {
        self.survivors() as f64 / self.rollouts.len() as f64
    }
}

/// Rolls the saturated policy for `horizon - 1` steps from `start = z_{1,b}`.
pub fn rollout(plant: &Plant, policy: &dyn Policy, start: &AugmentedState, horizon: usize, sample: usize) -> Result<Rollout> {
    let diverged = |step| Error::DivergedRollout { sample, step };
    let mut states = Vec::with_capacity(horizon);
    let mut costs = Vec::with_capacity(horizon.saturating_sub(1));
    let mut z = start.clone();
    for l in 1..horizon {
        let action = policy.action(&z)?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(diverged(l));
        }
        costs.push(plant.stage_cost_observed(&z, &action)?);
        let next = match plant.step_augmented(&z, &action) {
            Ok(next) => next,
            Err(Error::NumericalOverflow { .. }) => return Err(diverged(l + 1)),
            Err(e) => return Err(e),
        };
        if next.norm() > plant.divergence_threshold() {
            return Err(diverged(l + 1));
        }
        states.push(std::mem::replace(&mut z, next));
    }
    let terminal_action = policy.action(&z)?;
    if terminal_action.iter().any(|a| !a.is_finite()) {
        return Err(diverged(horizon));
    }
    states.push(z);
    Ok(Rollout { states, costs, terminal_action })
}

/// Collects `H`-step on-policy data starting from every stored successor `z_{1,b}`.
pub fn collect_rollouts(
    plant: &Plant,
    buffer: &SampleBuffer,
    policy: &dyn Policy,
    horizon: usize,
    policy_id: usize,
) -> Result<RolloutSet> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let outcomes: Vec<Result<Rollout>> = buffer
        .samples()
        .par_iter()
        .enumerate()
        .map(|(b, s)| rollout(plant, policy, &s.next, horizon, b))
        .collect();
    let mut rollouts = Vec::with_capacity(outcomes.len());
    let mut dropped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => rollouts.push(Some(r)),
            Err(Error::DivergedRollout { sample, step }) => {
                dropped.push(DroppedSample { sample, step });
                rollouts.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RolloutSet { rollouts, horizon, policy_id, dropped })
}
