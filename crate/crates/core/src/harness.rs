//! Experiment driver behind the command-line tool: config loading, the algorithm
//! comparison, the horizon-gain sweep, closed-loop tracking and single runs, plus the
//! CSV/JSON artifacts they write.
//!
//! Every output file starts with `# config_hash=...` and `# seed=...` comment lines. The
//! hash covers the resolved config (after command-line overrides) serialized as JSON.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::algorithms::{self, AlgorithmConfig, AlgorithmKind, HorizonSchedule, InitialPolicy, RunResult, RunStatus};
use crate::benchmark;
use crate::error::{Error, Result};
use crate::lp::RelevanceWeight;
use crate::output::{config_hash, fmt_float, write_csv};
use crate::plant::{ClosedLoopTrajectory, Plant, PlantSpec};
use crate::qfunc::{iterate_distance, FeatureMap, GreedyPolicy, QParams};
use crate::sampling::{build_buffer, SampleBuffer, UniformSampler};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Compare,
    SweepK,
    Track,
    Run,
}

/// The five algorithm variants of the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "msq-vi-lp[A]")]
    MsqViLpA,
    #[serde(rename = "msq-vi-lp[S]")]
    MsqViLpS,
    #[serde(rename = "q-pi-lp")]
    QPiLp,
    #[serde(rename = "q-vi-lp[A]")]
    QViLpA,
    #[serde(rename = "q-vi-lp[S]")]
    QViLpS,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::MsqViLpA, Variant::MsqViLpS, Variant::QPiLp, Variant::QViLpA, Variant::QViLpS];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::MsqViLpA => "msq-vi-lp[A]",
            Variant::MsqViLpS => "msq-vi-lp[S]",
            Variant::QPiLp => "q-pi-lp",
            Variant::QViLpA => "q-vi-lp[A]",
            Variant::QViLpS => "q-vi-lp[S]",
        }
    }

    /// File-name form, e.g. `msq-vi-lp-a`.
    pub fn slug(&self) -> &'static str {
        match self {
            Variant::MsqViLpA => "msq-vi-lp-a",
            Variant::MsqViLpS => "msq-vi-lp-s",
            Variant::QPiLp => "q-pi-lp",
            Variant::QViLpA => "q-vi-lp-a",
            Variant::QViLpS => "q-vi-lp-s",
        }
    }

    pub fn algorithm(&self) -> AlgorithmKind {
        match self {
            Variant::MsqViLpA | Variant::MsqViLpS => AlgorithmKind::MsqViLp,
            Variant::QPiLp => AlgorithmKind::QPiLp,
            Variant::QViLpA | Variant::QViLpS => AlgorithmKind::QViLp,
        }
    }

    /// Whether the first iteration is driven by the stabilising policy.
    pub fn uses_stabilizing_policy(&self) -> bool {
        !matches!(self, Variant::MsqViLpA | Variant::QViLpA)
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name || v.slug() == name)
            .ok_or_else(|| Error::Config(format!("unknown variant '{name}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    pub size: usize,
    pub state_range: (f64, f64),
    pub action_range: (f64, f64),
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self { size: benchmark::BUFFER_SIZE, state_range: benchmark::STATE_RANGE, action_range: benchmark::ACTION_RANGE }
    }
}

/// Settings shared by every variant. Plant-dependent fields left empty fall back to the
/// benchmark values when the plant is the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSettings {
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub horizon_gain: f64,
    /// Explicit horizons; overrides `horizon_gain` when set.
    pub horizons: Option<Vec<usize>>,
    /// Feature names such as `["e1", "e2", "r1", "r2", "a"]`, action entries last.
    pub features: Option<Vec<String>>,
    /// Row-major upper triangle of the initial matrix.
    pub initial_params: Option<Vec<f64>>,
    /// One row of base-feature coefficients per input channel.
    pub stabilizing_policy: Option<Vec<Vec<f64>>>,
    pub relevance: RelevanceWeight,
    pub action_floor: Option<f64>,
    pub min_survival: f64,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        Self {
            gamma: benchmark::GAMMA,
            epsilon: algorithms::DEFAULT_EPSILON,
            max_iterations: algorithms::DEFAULT_MAX_ITERATIONS,
            horizon_gain: benchmark::HORIZON_GAIN,
            horizons: None,
            features: None,
            initial_params: None,
            stabilizing_policy: None,
            relevance: RelevanceWeight::default(),
            action_floor: None,
            min_survival: 0.9,
        }
    }
}

/// Where the tracking experiment gets its controller.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ControllerSource {
    /// Final matrix of a fresh run of `run_variant`.
    #[default]
    Run,
    /// The converged matrices printed for the benchmark.
    Published,
    Matrix { upper_triangle: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub steps: usize,
    pub x0: Option<Vec<f64>>,
    pub r0: Option<Vec<f64>>,
    pub controller: ControllerSource,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { steps: 200, x0: None, r0: None, controller: ControllerSource::Run }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub constrained: bool,
    pub input_bounds: Vec<f64>,
    pub plant: PlantSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Write per-run CSV files; `summary.json` is always written.
    pub write_csv: bool,
    pub buffer: BufferConfig,
    pub algorithm: AlgorithmSettings,
    pub variants: Vec<Variant>,
    pub run_variant: Variant,
    pub k_values: Vec<f64>,
    /// Initializations swept by `sweep-k`: `msq-vi-lp[A]` and/or `msq-vi-lp[S]`.
    pub sweep_modes: Vec<Variant>,
    pub tracking: TrackingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Compare,
            constrained: false,
            input_bounds: vec![benchmark::INPUT_BOUND],
            plant: PlantSpec::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            write_csv: true,
            buffer: BufferConfig::default(),
            algorithm: AlgorithmSettings::default(),
            variants: Variant::ALL.to_vec(),
            run_variant: Variant::MsqViLpA,
            k_values: (0..=6).map(f64::from).collect(),
            sweep_modes: vec![Variant::MsqViLpA, Variant::MsqViLpS],
            tracking: TrackingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the JSON form of this config, leaving out `out_dir` so that the same
    /// experiment written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("config is a table").remove("out_dir");
        config_hash(&value.to_string())
    }

    fn is_benchmark(&self) -> bool {
        matches!(self.plant, PlantSpec::Benchmark(_))
    }

    pub fn build_plant(&self) -> Result<Plant> {
        self.plant.build(if self.constrained { Some(self.input_bounds.clone()) } else { None })
    }

    pub fn feature_map(&self, plant: &Plant) -> Result<FeatureMap> {
        match &self.algorithm.features {
            Some(names) => {
                let map = FeatureMap::from_names(names)?;
                if map.input_dim() != plant.input_dim() {
                    return Err(Error::Config(format!("features {names:?} do not fit the plant")));
                }
                Ok(map)
            }
            None if self.is_benchmark() => Ok(FeatureMap::benchmark()),
            None => Ok(FeatureMap::linear(plant.state_dim(), plant.input_dim())),
        }
    }

    pub fn build_buffer(&self, plant: &Plant) -> Result<SampleBuffer> {
        let sampler =
            UniformSampler::boxed(2 * plant.state_dim(), self.buffer.state_range, plant.input_dim(), self.buffer.action_range)?;
        build_buffer(plant, self.buffer.size, &sampler, self.seed)
    }

    fn initial_params(&self, map: &FeatureMap) -> Result<QParams> {
        match &self.algorithm.initial_params {
            Some(tri) => QParams::from_upper_triangle(map.clone(), tri),
            None if self.is_benchmark() && *map == FeatureMap::benchmark() => Ok(benchmark::initial_matrix()),
            None => Err(Error::Config("algorithm.initial_params is required for this plant".into())),
        }
    }

    fn stabilizing_policy(&self) -> Result<Vec<Vec<f64>>> {
        match &self.algorithm.stabilizing_policy {
            Some(c) => Ok(c.clone()),
            None if self.is_benchmark() => Ok(vec![benchmark::STABILIZING_GAINS.to_vec()]),
            None => Err(Error::Config("algorithm.stabilizing_policy is required for this plant".into())),
        }
    }

    /// The algorithm config a variant runs with.
    pub fn variant_config(&self, variant: Variant, plant: &Plant) -> Result<AlgorithmConfig> {
        let map = self.feature_map(plant)?;
        let s = &self.algorithm;
        let mut cfg = AlgorithmConfig::new(self.initial_params(&map)?, s.gamma, s.horizon_gain);
        cfg.epsilon = s.epsilon;
        cfg.max_iterations = s.max_iterations;
        if let Some(h) = &s.horizons {
            cfg.horizon = HorizonSchedule::Explicit { horizons: h.clone() };
        }
        cfg.relevance = s.relevance.clone();
        cfg.action_floor = s.action_floor;
        cfg.min_survival = s.min_survival;
        if variant.uses_stabilizing_policy() {
            cfg.initial_policy = InitialPolicy::Explicit { coefficients: self.stabilizing_policy()? };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn header(&self) -> Vec<(String, String)> {
        vec![("config_hash".into(), self.hash()), ("seed".into(), self.seed.to_string())]
    }

    fn case(&self) -> &'static str {
        if self.constrained {
            "constrained"
        } else {
            "unconstrained"
        }
    }
}

/// Outcome of one experiment arm. Errors are kept as text so a failed arm never stops
/// the others.
#[derive(Clone, Debug)]
pub struct Arm {
    pub variant: Variant,
    pub gain: f64,
    pub result: std::result::Result<RunResult, String>,
}

impl Arm {
    pub fn converged(&self) -> bool {
        matches!(&self.result, Ok(r) if r.converged())
    }

    pub fn iterations(&self) -> Option<usize> {
        self.result.as_ref().ok().map(|r| r.iterations())
    }

    fn status(&self) -> &'static str {
        match &self.result {
            Ok(r) => match r.status {
                RunStatus::Converged => "converged",
                RunStatus::MaxIterations => "max-iterations",
                RunStatus::Aborted => "aborted",
            },
            Err(_) => "error",
        }
    }

    fn reason(&self) -> Option<String> {
        match &self.result {
            Ok(r) => r.abort_reason.clone(),
            Err(e) => Some(e.clone()),
        }
    }

    fn summary(&self) -> serde_json::Value {
        let mut v = json!({
            "variant": self.variant.name(),
            "horizon_gain": self.gain,
            "status": self.status(),
            "abort_reason": self.reason(),
            "iterations": self.iterations(),
        });
        if let Ok(r) = &self.result {
            v["algorithm"] = json!(r.algorithm.name());
            v["final_matrix"] = json!(r.final_params.rows());
            v["final_params"] = serde_json::to_value(&r.final_params).expect("params serialize");
        }
        v
    }
}

/// Plant, buffer and per-variant configs shared by all arms of an experiment.
pub struct Setup {
    pub plant: Plant,
    pub buffer: SampleBuffer,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let plant = config.build_plant()?;
        let buffer = config.build_buffer(&plant)?;
        Ok(Self { plant, buffer })
    }
}

fn run_arm(config: &ExperimentConfig, setup: &Setup, variant: Variant, gain: f64) -> Arm {
    let result = (|| {
        let mut cfg = config.variant_config(variant, &setup.plant)?;
        if config.algorithm.horizons.is_none() {
            cfg.horizon = HorizonSchedule::Gain { gain };
        }
        algorithms::run(variant.algorithm(), &cfg, &setup.plant, &setup.buffer)
    })()
    .map_err(|e| e.to_string());
    match &result {
        Ok(r) => info!("{} (K = {gain}): {:?} after {} iterations", variant.name(), r.status, r.iterations()),
        Err(e) => info!("{} (K = {gain}): {e}", variant.name()),
    }
    Arm { variant, gain, result }
}

fn write_convergence(config: &ExperimentConfig, dir: &Path, arm: &Arm) -> Result<()> {
    let Ok(run) = &arm.result else { return Ok(()) };
    let mut comments = config.header();
    comments.push(("variant".into(), arm.variant.name().into()));
    comments.push(("status".into(), arm.status().into()));
    comments.push(("convention".into(), "row i is the program solved at iteration i (P^i to P^(i+1))".into()));
    let header: Vec<String> =
        ["iteration", "horizon", "buffer_q_distance", "matrix_inf_distance", "dropped_constraints"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = run
        .history
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                r.horizon.to_string(),
                fmt_float(r.buffer_q_distance),
                fmt_float(r.matrix_distance),
                r.dropped_constraints.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join(format!("convergence_{}.csv", arm.variant.slug())), &comments, &header, &rows)
}

fn write_summary(config: &ExperimentConfig, dir: &Path, mut body: serde_json::Value) -> Result<()> {
    body["config_hash"] = json!(config.hash());
    body["seed"] = json!(config.seed);
    body["plant"] = json!(config.plant.name());
    body["case"] = json!(config.case());
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub arms: Vec<Arm>,
    /// Largest element-wise distance between final matrices of converged arms.
    pub max_pairwise_distance: Option<f64>,
}

impl CompareReport {
    pub fn all_converged(&self) -> bool {
        self.arms.iter().all(Arm::converged)
    }

    pub fn arm(&self, variant: Variant) -> Option<&Arm> {
        self.arms.iter().find(|a| a.variant == variant)
    }
}

/// Runs every configured variant on one shared buffer.
pub fn run_compare(config: &ExperimentConfig) -> Result<CompareReport> {
    if config.variants.is_empty() {
        return Err(Error::Config("no variants configured".into()));
    }
    let setup = Setup::new(config)?;
    let gain = config.algorithm.horizon_gain;
    let arms: Vec<Arm> = config.variants.par_iter().map(|v| run_arm(config, &setup, *v, gain)).collect();

    let finals: Vec<&QParams> = arms.iter().filter(|a| a.converged()).map(|a| &a.result.as_ref().unwrap().final_params).collect();
    let mut max_pairwise_distance = None;
    for (i, p) in finals.iter().enumerate() {
        for q in &finals[i + 1..] {
            let d = iterate_distance(p, q)?;
            max_pairwise_distance = Some(max_pairwise_distance.map_or(d, |m: f64| m.max(d)));
        }
    }

    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    if config.write_csv {
        for arm in &arms {
            write_convergence(config, dir, arm)?;
        }
    }
    write_summary(
        config,
        dir,
        json!({
            "experiment": "compare",
            "max_pairwise_distance": max_pairwise_distance,
            "variants": arms.iter().map(Arm::summary).collect::<Vec<_>>(),
        }),
    )?;
    Ok(CompareReport { arms, max_pairwise_distance })
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    /// One arm per `(K, mode)`, ordered by K and then by the configured mode order.
    pub arms: Vec<Arm>,
}

impl SweepReport {
    /// Iteration counts for one mode, in K order (`None` for failed arms).
    pub fn counts(&self, variant: Variant) -> Vec<(f64, Option<usize>, bool)> {
        self.arms.iter().filter(|a| a.variant == variant).map(|a| (a.gain, a.iterations(), a.converged())).collect()
    }
}

/// MSQ-VI-LP from the arbitrary and the stabilising start for each horizon gain.
pub fn run_sweep_k(config: &ExperimentConfig, k_values: &[f64]) -> Result<SweepReport> {
    if k_values.is_empty() {
        return Err(Error::Config("k_values must not be empty".into()));
    }
    if let Some(k) = k_values.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
        return Err(Error::Config(format!("horizon gains must be finite and non-negative, got {k}")));
    }
    if config.sweep_modes.is_empty() || config.sweep_modes.iter().any(|v| v.algorithm() != AlgorithmKind::MsqViLp) {
        return Err(Error::Config("sweep_modes must list msq-vi-lp[A] and/or msq-vi-lp[S]".into()));
    }
    let setup = Setup::new(config)?;
    let jobs: Vec<(f64, Variant)> =
        k_values.iter().flat_map(|k| config.sweep_modes.iter().map(move |v| (*k, *v))).collect();
    let arms: Vec<Arm> = jobs.par_iter().map(|(k, v)| run_arm(config, &setup, *v, *k)).collect();

    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    if config.write_csv {
        let header: Vec<String> = ["K", "mode", "iterations", "converged", "status"].map(String::from).to_vec();
        let rows: Vec<Vec<String>> = arms
            .iter()
            .map(|a| {
                vec![
                    fmt_float(a.gain),
                    if a.variant == Variant::MsqViLpA { "A" } else { "S" }.to_string(),
                    a.iterations().map_or(String::new(), |n| n.to_string()),
                    a.converged().to_string(),
                    a.status().to_string(),
                ]
            })
            .collect();
        write_csv(&dir.join("sweep_k.csv"), &config.header(), &header, &rows)?;
    }
    write_summary(
        config,
        dir,
        json!({ "experiment": "sweep-k", "arms": arms.iter().map(Arm::summary).collect::<Vec<_>>() }),
    )?;
    Ok(SweepReport { arms })
}

#[derive(Clone, Debug)]
pub struct TrackingReport {
    pub trajectory: ClosedLoopTrajectory,
    /// Set when the closed loop left the divergence threshold; the trajectory holds the prefix.
    pub divergence: Option<String>,
    pub path: PathBuf,
}

/// Closed loop under the greedy policy of `params`, from the configured (or benchmark)
/// initial state and reference.
pub fn run_tracking(config: &ExperimentConfig, params: &QParams, steps: usize) -> Result<TrackingReport> {
    let plant = config.build_plant()?;
    let x0 = config.tracking.x0.clone().unwrap_or_else(|| benchmark::X0.to_vec());
    let r0 = config.tracking.r0.clone().unwrap_or_else(|| benchmark::R0.to_vec());
    let policy = GreedyPolicy::new(params.clone())?;
    let (trajectory, failure) = plant.simulate_closed_loop_partial(&policy, &x0, &r0, steps, config.algorithm.gamma)?;
    let divergence = failure.map(|e| e.to_string());

    let n = plant.state_dim();
    let m = plant.input_dim();
    let channel = |base: &str, j: usize| if m == 1 { base.to_string() } else { format!("{base}{}", j + 1) };
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("r{i}")));
    header.extend((0..m).map(|j| channel("u_applied", j)));
    header.extend((0..m).map(|j| channel("u_unconstrained", j)));
    let rows: Vec<Vec<String>> = trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let mut row = vec![k.to_string()];
            row.extend(z.state().iter().map(|v| fmt_float(*v)));
            row.extend(z.reference.iter().map(|v| fmt_float(*v)));
            match (trajectory.applied_inputs.get(k), trajectory.unconstrained_actions.get(k)) {
                (Some(u), Some(a)) => {
                    row.extend(u.value.iter().map(|v| fmt_float(*v)));
                    row.extend(a.iter().map(|v| fmt_float(*v)));
                }
                _ => row.extend(std::iter::repeat_n(String::new(), 2 * m)),
            }
            row
        })
        .collect();

    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("tracking_{}.csv", config.case()));
    let mut comments = config.header();
    comments.push(("discounted_cost".into(), fmt_float(trajectory.discounted_cost)));
    if let Some(d) = &divergence {
        comments.push(("diverged".into(), d.clone()));
    }
    write_csv(&path, &comments, &header, &rows)?;
    Ok(TrackingReport { trajectory, divergence, path })
}

/// Resolves the tracking controller named in the config.
pub fn tracking_controller(config: &ExperimentConfig) -> Result<QParams> {
    match &config.tracking.controller {
        ControllerSource::Matrix { upper_triangle } => {
            let plant = config.build_plant()?;
            QParams::from_upper_triangle(config.feature_map(&plant)?, upper_triangle)
        }
        ControllerSource::Published if config.is_benchmark() => Ok(if config.constrained {
            benchmark::constrained_optimum()
        } else {
            benchmark::unconstrained_optimum()
        }),
        ControllerSource::Published => Err(Error::Config("published controllers exist only for the benchmark plant".into())),
        ControllerSource::Run => {
            let setup = Setup::new(config)?;
            let arm = run_arm(config, &setup, config.run_variant, config.algorithm.horizon_gain);
            match arm.result {
                Ok(r) if r.converged() => Ok(r.final_params),
                Ok(r) => Err(Error::Config(format!(
                    "controller run {} ended as {:?}: {}",
                    config.run_variant.name(),
                    r.status,
                    r.abort_reason.unwrap_or_default()
                ))),
                Err(e) => Err(Error::Config(format!("controller run failed: {e}"))),
            }
        }
    }
}

/// One variant, with its convergence CSV and summary.
pub fn run_single(config: &ExperimentConfig) -> Result<Arm> {
    let setup = Setup::new(config)?;
    let arm = run_arm(config, &setup, config.run_variant, config.algorithm.horizon_gain);
    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    if config.write_csv {
        write_convergence(config, dir, &arm)?;
    }
    write_summary(config, dir, json!({ "experiment": "run", "variants": [arm.summary()] }))?;
    Ok(arm)
}

/// Runs the experiment named by `config.kind`. Returns whether every arm converged
/// (for tracking: whether the closed loop stayed bounded).
pub fn execute(config: &ExperimentConfig) -> Result<bool> {
    match config.kind {
        ExperimentKind::Compare => Ok(run_compare(config)?.all_converged()),
        ExperimentKind::SweepK => Ok(run_sweep_k(config, &config.k_values)?.arms.iter().all(Arm::converged)),
        ExperimentKind::Run => Ok(run_single(config)?.converged()),
        ExperimentKind::Track => {
            let params = tracking_controller(config)?;
            let report = run_tracking(config, &params, config.tracking.steps)?;
            let dir = &config.out_dir;
            write_summary(
                config,
                dir,
                json!({
                    "experiment": "track",
                    "controller": params.rows(),
                    "steps": report.trajectory.applied_inputs.len(),
                    "discounted_cost": report.trajectory.discounted_cost,
                    "divergence": report.divergence,
                }),
            )?;
            Ok(report.divergence.is_none())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
            assert_eq!(Variant::parse(v.slug()).unwrap(), v);
        }
        assert!(Variant::parse("q-vi").is_err());
    }

    #[test]
    fn empty_toml_is_the_benchmark_default() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.buffer.size, 2000);
        assert_eq!(cfg.algorithm.epsilon, 1e-6);
        assert_eq!(cfg.k_values, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.kind = ExperimentKind::SweepK;
        cfg.constrained = true;
        cfg.plant = PlantSpec::by_name("linear-tracking").unwrap();
        cfg.algorithm.stabilizing_policy = Some(vec![vec![-0.5, -1.0, 0.0, 0.0]]);
        cfg.tracking.controller = ControllerSource::Matrix { upper_triangle: vec![1.0; 15] };
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3").is_err());
        assert!(ExperimentConfig::from_toml("[algorithm]\ngama = 0.9").is_err());
    }

    #[test]
    fn hash_tracks_overrides() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn benchmark_defaults_resolve() {
        let cfg = ExperimentConfig { constrained: true, ..Default::default() };
        let plant = cfg.build_plant().unwrap();
        let a = cfg.variant_config(Variant::QViLpA, &plant).unwrap();
        assert_eq!(a.initial_params, benchmark::initial_matrix());
        assert_eq!(a.initial_policy, InitialPolicy::Greedy);
        let s = cfg.variant_config(Variant::MsqViLpS, &plant).unwrap();
        assert_eq!(s.initial_policy, InitialPolicy::Explicit { coefficients: vec![benchmark::STABILIZING_GAINS.to_vec()] });
    }

    #[test]
    fn other_plants_need_explicit_initialization() {
        let cfg = ExperimentConfig { plant: PlantSpec::by_name("linear-tracking").unwrap(), ..Default::default() };
        let plant = cfg.build_plant().unwrap();
        assert!(matches!(cfg.variant_config(Variant::MsqViLpA, &plant), Err(Error::Config(_))));
    }
}
