//! Iteration engines: multi-step value iteration (MSQ-VI-LP), its one-step special case
//! (Q-VI-LP), and an LP policy-iteration baseline (Q-PI-LP).
//!
//! Every iteration solves one linear program whose size depends only on the buffer and the
//! feature map. The loop stops when `max_b |Q^{i+1}(z_b, a_b) - Q^i(z_b, a_b)| <= epsilon`.
//!
//! History convention: record `i` describes the program solved at iteration `i`, i.e. the
//! step from `P^i` to `P^{i+1}`. Record 0 therefore holds the distance from the initial
//! matrix.

use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, objective_coefficients, quadratic_coefficients, Constraint, LinearProgram, LpMetadata, RelevanceWeight};
use crate::plant::Plant;
use crate::qfunc::{buffer_q_distance, iterate_distance, FeaturePolicy, GreedyPolicy, Policy, QParams};
use crate::sampling::{collect_rollouts, SampleBuffer};

/// `H_i = 1 + round(K sqrt(i))`, rounding half away from zero.
pub fn horizon(i: usize, gain: f64) -> usize {
    1 + (gain * (i as f64).sqrt()).round() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HorizonSchedule {
    /// `H_i = 1 + round(gain sqrt(i))`.
    Gain { gain: f64 },
    /// Explicit horizons; the last value repeats.
    Explicit { horizons: Vec<usize> },
}

impl HorizonSchedule {
    pub fn at(&self, i: usize) -> usize {
        match self {
            HorizonSchedule::Gain { gain } => horizon(i, *gain),
            HorizonSchedule::Explicit { horizons } => horizons[i.min(horizons.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            HorizonSchedule::Gain { gain } if !(*gain >= 0.0 && gain.is_finite()) => {
                Err(Error::Config(format!("horizon gain must be finite and non-negative, got {gain}")))
            }
            HorizonSchedule::Explicit { horizons } if horizons.is_empty() || horizons.contains(&0) => {
                Err(Error::Config("explicit horizons must be nonempty and at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Which policy drives the first iteration's rollouts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialPolicy {
    /// Greedy policy of the initial matrix.
    #[default]
    Greedy,
    /// `mu0(z) = C psi(z)`; one row of coefficients per action channel.
    Explicit { coefficients: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub horizon: HorizonSchedule,
    pub initial_params: QParams,
    #[serde(default)]
    pub initial_policy: InitialPolicy,
    #[serde(default)]
    pub relevance: RelevanceWeight,
    /// Optional `P_aa >= delta` bound added to every program.
    #[serde(default)]
    pub action_floor: Option<f64>,
    /// Minimum fraction of rollouts that must stay bounded for an iteration to proceed.
    #[serde(default = "default_min_survival")]
    pub min_survival: f64,
}

fn default_min_survival() -> f64 {
    0.9
}

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

impl AlgorithmConfig {
    pub fn new(initial_params: QParams, gamma: f64, gain: f64) -> Self {
        Self {
            gamma,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            horizon: HorizonSchedule::Gain { gain },
            initial_params,
            initial_policy: InitialPolicy::Greedy,
            relevance: RelevanceWeight::default(),
            action_floor: None,
            min_survival: default_min_survival(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_survival) {
            return Err(Error::Config("min_survival must lie in [0, 1]".into()));
        }
        self.horizon.validate()
    }

    fn explicit_policy(&self) -> Result<Option<FeaturePolicy>> {
        match &self.initial_policy {
            InitialPolicy::Greedy => Ok(None),
            InitialPolicy::Explicit { coefficients } => {
                Ok(Some(FeaturePolicy::new(self.initial_params.feature_map().clone(), coefficients.clone())?))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    MsqViLp,
    QViLp,
    QPiLp,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::MsqViLp => "msq-vi-lp",
            AlgorithmKind::QViLp => "q-vi-lp",
            AlgorithmKind::QPiLp => "q-pi-lp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub horizon: usize,
    pub params_after: QParams,
    pub buffer_q_distance: f64,
    pub matrix_distance: f64,
    pub dropped_constraints: usize,
    pub objective_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: AlgorithmKind,
    pub status: RunStatus,
    pub abort_reason: Option<String>,
    pub history: Vec<IterationRecord>,
    pub final_params: QParams,
    pub config: AlgorithmConfig,
    /// Wall time per iteration; kept out of serialized output so reruns are byte-identical.
    #[serde(skip)]
    pub wall_times: Vec<Duration>,
}

impl RunResult {
    /// Number of programs solved.
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    /// `P^0, P^1, ...` including the initial matrix.
    pub fn iterates(&self) -> impl Iterator<Item = &QParams> {
        std::iter::once(&self.config.initial_params).chain(self.history.iter().map(|r| &r.params_after))
    }

    /// `(iteration, H_i, buffer distance, matrix distance)` rows.
    pub fn history_rows(&self) -> Vec<(usize, usize, f64, f64)> {
        self.history.iter().map(|r| (r.index, r.horizon, r.buffer_q_distance, r.matrix_distance)).collect()
    }
}

/// Result of one policy-evaluation program.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub params: QParams,
    pub objective_value: f64,
    pub program: LinearProgram,
}

/// Builds and solves the multi-step evaluation program from `p_prev` under `policy`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_multistep(
    plant: &Plant,
    buffer: &SampleBuffer,
    p_prev: &QParams,
    policy: &dyn Policy,
    horizon: usize,
    gamma: f64,
    objective: &[f64],
    iteration: usize,
    action_floor: Option<f64>,
    min_survival: f64,
) -> Result<Evaluation> {
    let rollouts = collect_rollouts(plant, buffer, policy, horizon, iteration)?;
    if !rollouts.dropped.is_empty() {
        warn!(
            "iteration {iteration}: {} of {} rollouts diverged (H = {horizon})",
            rollouts.dropped.len(),
            buffer.len()
        );
    }
    if rollouts.survival_fraction() < min_survival {
        let first = rollouts.dropped[0];
        return Err(Error::DivergedRollout { sample: first.sample, step: first.step });
    }
    let mut program = lp::assemble(objective.to_vec(), buffer, &rollouts, p_prev, gamma, iteration)?;
    if let Some(delta) = action_floor {
        program = program.with_action_floor(delta);
    }
    let (params, objective_value) = lp::solve(&program)?.into_optimal()?;
    Ok(Evaluation { params, objective_value, program })
}

/// Fixed-policy relaxation `Q(z_b, a_b) - gamma Q(z_{1,b}, mu(z_{1,b})) <= L_b`, where both
/// sides use the decision variables.
pub fn evaluate_policy(
    buffer: &SampleBuffer,
    feature_map: &crate::qfunc::FeatureMap,
    policy: &dyn Policy,
    gamma: f64,
    objective: &[f64],
    iteration: usize,
    action_floor: Option<f64>,
) -> Result<Evaluation> {
    let mut constraints = Vec::with_capacity(buffer.len());
    for (b, s) in buffer.samples().iter().enumerate() {
        let now = quadratic_coefficients(&feature_map.features(&s.state, &s.action)?);
        let next_action = policy.action(&s.next)?;
        let next = quadratic_coefficients(&feature_map.features(&s.next, &next_action)?);
        let coefficients = now.iter().zip(&next).map(|(a, b)| a - gamma * b).collect();
        constraints.push(Constraint { sample: b, coefficients, rhs: s.cost });
    }
    let metadata = LpMetadata {
        iteration,
        horizon: 1,
        num_variables: feature_map.triangle_len(),
        constraint_count: constraints.len(),
        dropped: Vec::new(),
    };
    let mut program = LinearProgram {
        feature_map: feature_map.clone(),
        objective: objective.to_vec(),
        constraints,
        lower_bounds: Vec::new(),
        metadata,
    };
    if let Some(delta) = action_floor {
        program = program.with_action_floor(delta);
    }
    let (params, objective_value) = lp::solve(&program)?.into_optimal()?;
    Ok(Evaluation { params, objective_value, program })
}

struct Loop<'a> {
    kind: AlgorithmKind,
    config: &'a AlgorithmConfig,
    history: Vec<IterationRecord>,
    wall_times: Vec<Duration>,
}

impl<'a> Loop<'a> {
    fn finish(self, status: RunStatus, final_params: QParams, abort_reason: Option<String>) -> RunResult {
        RunResult {
            algorithm: self.kind,
            status,
            abort_reason,
            history: self.history,
            final_params,
            config: self.config.clone(),
            wall_times: self.wall_times,
        }
    }
}

fn run_value_iteration(kind: AlgorithmKind, config: &AlgorithmConfig, plant: &Plant, buffer: &SampleBuffer) -> Result<RunResult> {
    config.validate()?;
    let map = config.initial_params.feature_map().clone();
    let objective = objective_coefficients(&config.relevance.moments(&map, buffer)?);
    let explicit = config.explicit_policy()?;
    let mut state = Loop { kind, config, history: Vec::new(), wall_times: Vec::new() };
    let mut current = config.initial_params.clone();

    for i in 0..config.max_iterations {
        let started = Instant::now();
        let h = match kind {
            AlgorithmKind::QViLp => 1,
            _ => config.horizon.at(i),
        };
        let greedy;
        let policy: &dyn Policy = match (&explicit, i) {
            (Some(p), 0) => p,
            _ => match GreedyPolicy::new(current.clone()) {
                Ok(p) => {
                    greedy = p;
                    &greedy
                }
                Err(e) => return Ok(state.finish(RunStatus::Aborted, current, Some(format!("iteration {i}: {e}")))),
            },
        };
        let eval = match evaluate_multistep(
            plant,
            buffer,
            &current,
            policy,
            h,
            config.gamma,
            &objective,
            i,
            config.action_floor,
            config.min_survival,
        ) {
            Ok(e) => e,
            Err(e @ (Error::Lp { .. } | Error::DivergedRollout { .. } | Error::IllPosedPolicy { .. })) => {
                return Ok(state.finish(RunStatus::Aborted, current, Some(format!("iteration {i}: {e}"))));
            }
            Err(e) => return Err(e),
        };
        let dq = buffer_q_distance(&eval.params, &current, buffer)?;
        let dm = iterate_distance(&eval.params, &current)?;
        debug!("{} iteration {i}: H = {h}, buffer distance {dq:e}, matrix distance {dm:e}", kind.name());
        state.history.push(IterationRecord {
            index: i,
            horizon: h,
            params_after: eval.params.clone(),
            buffer_q_distance: dq,
            matrix_distance: dm,
            dropped_constraints: eval.program.metadata.dropped.len(),
            objective_value: eval.objective_value,
        });
        state.wall_times.push(started.elapsed());
        current = eval.params;
        if dq <= config.epsilon {
            return Ok(state.finish(RunStatus::Converged, current, None));
        }
    }
    Ok(state.finish(RunStatus::MaxIterations, current, None))
}

/// Multi-step value iteration with the configured horizon schedule.
pub fn msq_vi_lp(config: &AlgorithmConfig, plant: &Plant, buffer: &SampleBuffer) -> Result<RunResult> {
    run_value_iteration(AlgorithmKind::MsqViLp, config, plant, buffer)
}

/// Standard value iteration: the multi-step engine with `H_i = 1`.
pub fn q_vi_lp(config: &AlgorithmConfig, plant: &Plant, buffer: &SampleBuffer) -> Result<RunResult> {
    run_value_iteration(AlgorithmKind::QViLp, config, plant, buffer)
}

/// LP policy iteration. Requires an explicit stabilising initial policy; the first record is
/// the evaluation of that policy and counts as an iteration. `plant` is unused because the
/// one-step data comes from the buffer.
pub fn q_pi_lp(config: &AlgorithmConfig, _plant: &Plant, buffer: &SampleBuffer) -> Result<RunResult> {
    config.validate()?;
    let map = config.initial_params.feature_map().clone();
    let objective = objective_coefficients(&config.relevance.moments(&map, buffer)?);
    let initial = config
        .explicit_policy()?
        .ok_or_else(|| Error::Config("policy iteration needs an explicit initial policy".into()))?;
    let mut state = Loop { kind: AlgorithmKind::QPiLp, config, history: Vec::new(), wall_times: Vec::new() };
    let mut current = config.initial_params.clone();

    for i in 0..config.max_iterations {
        let started = Instant::now();
        let greedy;
        let policy: &dyn Policy = if i == 0 {
            &initial
        } else {
            match GreedyPolicy::new(current.clone()) {
                Ok(p) => {
                    greedy = p;
                    &greedy
                }
                Err(e) => return Ok(state.finish(RunStatus::Aborted, current, Some(format!("iteration {i}: {e}")))),
            }
        };
        let eval = match evaluate_policy(buffer, &map, policy, config.gamma, &objective, i, config.action_floor) {
            Ok(e) => e,
            Err(e @ Error::Lp { .. }) => {
                return Ok(state.finish(RunStatus::Aborted, current, Some(format!("iteration {i}: {e}"))));
            }
            Err(e) => return Err(e),
        };
        let dq = buffer_q_distance(&eval.params, &current, buffer)?;
        let dm = iterate_distance(&eval.params, &current)?;
        debug!("q-pi-lp iteration {i}: buffer distance {dq:e}, matrix distance {dm:e}");
        state.history.push(IterationRecord {
            index: i,
            horizon: 1,
            params_after: eval.params.clone(),
            buffer_q_distance: dq,
            matrix_distance: dm,
            dropped_constraints: 0,
            objective_value: eval.objective_value,
        });
        state.wall_times.push(started.elapsed());
        current = eval.params;
        if dq <= config.epsilon {
            return Ok(state.finish(RunStatus::Converged, current, None));
        }
    }
    Ok(state.finish(RunStatus::MaxIterations, current, None))
}

pub fn run(kind: AlgorithmKind, config: &AlgorithmConfig, plant: &Plant, buffer: &SampleBuffer) -> Result<RunResult> {
    match kind {
        AlgorithmKind::MsqViLp => msq_vi_lp(config, plant, buffer),
        AlgorithmKind::QViLp => q_vi_lp(config, plant, buffer),
        AlgorithmKind::QPiLp => q_pi_lp(config, plant, buffer),
    }
}

/// `T Q(z_b, a_b) = L_b + gamma min_v Q(z_{1,b}, v)` at every buffer sample.
pub fn bellman_backup(params: &QParams, buffer: &SampleBuffer, gamma: f64) -> Result<Vec<f64>> {
    buffer.samples().iter().map(|s| Ok(s.cost + gamma * params.min_q(&s.next)?)).collect()
}

/// `max_b |Q(z_b, a_b) - L_b - gamma min_v Q(z_{1,b}, v)|`.
pub fn bellman_residual(params: &QParams, buffer: &SampleBuffer, gamma: f64) -> Result<f64> {
    let backup = bellman_backup(params, buffer, gamma)?;
    let mut worst: f64 = 0.0;
    for (s, t) in buffer.samples().iter().zip(backup) {
        worst = worst.max((params.q_value(&s.state, &s.action)? - t).abs());
    }
    Ok(worst)
}

/// `max_b (L_b + gamma min_v Q(z_{1,b}, v) - Q(z_b, a_b))`; non-positive when the
/// initialization condition `Q >= T Q` holds at every sample.
pub fn initialization_gap(params: &QParams, buffer: &SampleBuffer, gamma: f64) -> Result<f64> {
    let backup = bellman_backup(params, buffer, gamma)?;
    let mut worst = f64::NEG_INFINITY;
    for (s, t) in buffer.samples().iter().zip(backup) {
        worst = worst.max(t - params.q_value(&s.state, &s.action)?);
    }
    Ok(worst)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub tolerance: f64,
    /// Samples where `Q^{i+1} > L + gamma min Q^i(z_1)` beyond tolerance.
    pub upper_violations: usize,
    /// Samples where `L + gamma min Q^i(z_1) > Q^i` beyond tolerance.
    pub lower_violations: usize,
    pub max_violation: f64,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.upper_violations == 0 && self.lower_violations == 0
    }
}

/// Checks `Q^{i+1}(z_b, a_b) <= L_b + gamma min_v Q^i(z_{1,b}, v) <= Q^i(z_b, a_b)` for every
/// consecutive pair of iterates and every buffer sample.
pub fn check_monotonicity(run: &RunResult, buffer: &SampleBuffer, tolerance: f64) -> Result<MonotonicityReport> {
    let gamma = run.config.gamma;
    let iterates: Vec<&QParams> = run.iterates().collect();
    let mut report = MonotonicityReport { tolerance, ..Default::default() };
    for pair in iterates.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        report.pairs_checked += 1;
        let backup = bellman_backup(prev, buffer, gamma)?;
        for (s, middle) in buffer.samples().iter().zip(backup) {
            let q_next = next.q_value(&s.state, &s.action)?;
            let q_prev = prev.q_value(&s.state, &s.action)?;
            let upper = q_next - middle;
            let lower = middle - q_prev;
            if upper > tolerance {
                report.upper_violations += 1;
            }
            if lower > tolerance {
                report.lower_violations += 1;
            }
            report.max_violation = report.max_violation.max(upper).max(lower);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_law() {
        assert_eq!(horizon(0, 5.0), 1);
        assert_eq!(horizon(1, 5.0), 6);
        assert_eq!(horizon(4, 5.0), 11);
        assert_eq!(horizon(2, 5.0), 1 + 7); // 5 sqrt(2) = 7.07
        for i in 0..50 {
            assert_eq!(horizon(i, 0.0), 1);
        }
        // 0.5 sqrt(1) = 0.5 rounds away from zero.
        assert_eq!(horizon(1, 0.5), 2);
    }

    #[test]
    fn explicit_schedule_repeats_last_value() {
        let s = HorizonSchedule::Explicit { horizons: vec![1, 3, 4] };
        assert_eq!((0..6).map(|i| s.at(i)).collect::<Vec<_>>(), vec![1, 3, 4, 4, 4, 4]);
        assert!(HorizonSchedule::Explicit { horizons: vec![] }.validate().is_err());
        assert!(HorizonSchedule::Gain { gain: -1.0 }.validate().is_err());
    }

    use crate::plant::{Plant, PlantSpec};
    use crate::qfunc::FeatureMap;
    use crate::sampling::{build_buffer, UniformSampler};

    fn linear_fixture(size: usize) -> (Plant, SampleBuffer) {
        let plant = PlantSpec::by_name("linear-tracking").unwrap().build(None).unwrap();
        let sampler = UniformSampler::boxed(4, (-5.0, 5.0), 1, (-2.0, 2.0)).unwrap();
        let buffer = build_buffer(&plant, size, &sampler, 11).unwrap();
        (plant, buffer)
    }

    fn stabilizing() -> InitialPolicy {
        InitialPolicy::Explicit { coefficients: vec![vec![-0.5, -1.0, 0.0, 0.0]] }
    }

    fn optimum(plant: &Plant, buffer: &SampleBuffer) -> QParams {
        let mut cfg = AlgorithmConfig::new(QParams::zeros(FeatureMap::linear(2, 1)), 0.95, 0.0);
        cfg.initial_policy = stabilizing();
        let run = q_pi_lp(&cfg, plant, buffer).unwrap();
        assert!(run.converged(), "{:?}", run.abort_reason);
        run.final_params
    }

    #[test]
    fn zero_gain_reproduces_value_iteration() {
        let (plant, buffer) = linear_fixture(200);
        let mut cfg = AlgorithmConfig::new(QParams::identity(FeatureMap::linear(2, 1)).scaled(50.0), 0.95, 0.0);
        cfg.max_iterations = 15;
        let msq = msq_vi_lp(&cfg, &plant, &buffer).unwrap();
        let vi = q_vi_lp(&cfg, &plant, &buffer).unwrap();
        assert_eq!(msq.history, vi.history);
        assert_eq!(msq.final_params, vi.final_params);
        assert_eq!(msq.status, vi.status);
    }

    #[test]
    fn zero_discount_fits_costs_after_one_solve() {
        let (plant, buffer) = linear_fixture(200);
        for kind in [AlgorithmKind::QViLp, AlgorithmKind::MsqViLp, AlgorithmKind::QPiLp] {
            let mut cfg = AlgorithmConfig::new(QParams::identity(FeatureMap::linear(2, 1)), 0.0, 5.0);
            cfg.initial_policy = stabilizing();
            let run = run(kind, &cfg, &plant, &buffer).unwrap();
            let first = &run.history[0].params_after;
            for s in buffer.samples() {
                let q = first.q_value(&s.state, &s.action).unwrap();
                assert!((q - s.cost).abs() < 1e-6 * (1.0 + s.cost), "{}: {q} vs {}", kind.name(), s.cost);
            }
            assert!(run.converged());
            assert_eq!(run.iterations(), 2, "{}", kind.name());
            assert!(run.history[1].buffer_q_distance < 1e-6);
        }
    }

    #[test]
    fn policy_iteration_from_optimal_policy_stops_immediately() {
        let (plant, buffer) = linear_fixture(1000);
        let p = optimum(&plant, &buffer);
        let k = p.matrix().ncols() - 1;
        let gains: Vec<f64> = (0..k).map(|j| -p.get(k, j) / p.get(k, k)).collect();
        let mut cfg = AlgorithmConfig::new(p.clone(), 0.95, 0.0);
        cfg.initial_policy = InitialPolicy::Explicit { coefficients: vec![gains] };
        let run = q_pi_lp(&cfg, &plant, &buffer).unwrap();
        assert!(run.converged());
        assert_eq!(run.iterations(), 1);
    }

    #[test]
    fn compliant_start_is_monotone() {
        let (plant, buffer) = linear_fixture(1000);
        let p0 = optimum(&plant, &buffer).scaled(2.0);
        assert!(initialization_gap(&p0, &buffer, 0.95).unwrap() <= 0.0);
        let mut cfg = AlgorithmConfig::new(p0, 0.95, 5.0);
        cfg.max_iterations = 20;
        let run = msq_vi_lp(&cfg, &plant, &buffer).unwrap();
        let report = check_monotonicity(&run, &buffer, 1e-6).unwrap();
        assert!(report.holds(), "{report:?}");
        assert_eq!(report.pairs_checked, run.iterations());
    }

    #[test]
    fn converged_history_satisfies_both_inequalities_with_equality() {
        let (plant, buffer) = linear_fixture(1000);
        let p = optimum(&plant, &buffer);
        let mut cfg = AlgorithmConfig::new(p.clone(), 0.95, 5.0);
        cfg.max_iterations = 3;
        let run = msq_vi_lp(&cfg, &plant, &buffer).unwrap();
        assert!(run.converged());
        let report = check_monotonicity(&run, &buffer, 1e-6).unwrap();
        assert!(report.holds());
        assert!(report.max_violation.abs() < 1e-6);
    }

    #[test]
    fn tiny_start_is_flagged() {
        let (plant, buffer) = linear_fixture(200);
        let p0 = QParams::identity(FeatureMap::linear(2, 1)).scaled(1e-3);
        assert!(initialization_gap(&p0, &buffer, 0.95).unwrap() > 0.0);
        let mut cfg = AlgorithmConfig::new(p0, 0.95, 0.0);
        cfg.max_iterations = 3;
        let run = q_vi_lp(&cfg, &plant, &buffer).unwrap();
        let report = check_monotonicity(&run, &buffer, 1e-6).unwrap();
        assert!(report.lower_violations > 0);
    }

    #[test]
    fn policy_iteration_needs_explicit_policy() {
        let (plant, buffer) = linear_fixture(20);
        let cfg = AlgorithmConfig::new(QParams::identity(FeatureMap::linear(2, 1)), 0.95, 0.0);
        assert!(matches!(q_pi_lp(&cfg, &plant, &buffer), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = AlgorithmConfig::new(QParams::identity(FeatureMap::linear(2, 1)), 1.5, 0.0);
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.9;
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 1e-6;
        cfg.max_iterations = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nonconvex_start_aborts_with_reason() {
        let (plant, buffer) = linear_fixture(50);
        let p0 = QParams::identity(FeatureMap::linear(2, 1)).scaled(-1.0);
        let cfg = AlgorithmConfig::new(p0.clone(), 0.95, 5.0);
        let run = msq_vi_lp(&cfg, &plant, &buffer).unwrap();
        assert_eq!(run.status, RunStatus::Aborted);
        assert!(run.history.is_empty());
        assert_eq!(run.final_params, p0);
        assert!(run.abort_reason.unwrap().starts_with("iteration 0:"));
    }
}
