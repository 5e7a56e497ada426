//! Black-box plant interface, the augmented tracking system and closed-loop simulation.
//!
//! Everything outside this module talks to a plant through [`Plant::step_augmented`] and
//! [`Plant::stage_cost_observed`]. The learning code never sees dynamics coefficients.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::qfunc::Policy;

/// Default bound on the augmented-state norm before a trajectory is declared divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

/// The unknown system: state dynamics, reference generator and stage cost.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// `x_{k+1} = f(x_k, u_k)` with an already admissible input.
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// `r_{k+1} = g(r_k)`.
    fn reference(&self, r: &[f64]) -> Vec<f64>;
    /// `l(z, u)`, must be non-negative.
    fn cost(&self, error: &[f64], reference: &[f64], u: &[f64]) -> f64;
}

/// Stacked tracking error and reference, `z = [e; r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub error: Vec<f64>,
    pub reference: Vec<f64>,
}

impl AugmentedState {
    pub fn new(error: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        if error.len() != reference.len() {
            return Err(Error::InvalidArgument(format!(
                "error has length {} but reference has length {}",
                error.len(),
                reference.len()
            )));
        }
        Ok(Self { error, reference })
    }

    /// Builds `z` from a physical state and a reference (`e = x - r`).
    pub fn from_state(x: &[f64], r: &[f64]) -> Result<Self> {
        if x.len() != r.len() {
            return Err(Error::InvalidArgument(format!(
                "state has length {} but reference has length {}",
                x.len(),
                r.len()
            )));
        }
        let error = x.iter().zip(r).map(|(x, r)| x - r).collect();
        Ok(Self { error, reference: r.to_vec() })
    }

    /// Splits a stacked `[e; r]` slice of even length.
    pub fn from_stacked(z: &[f64]) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "stacked augmented state must have even length, got {}",
                z.len()
            )));
        }
        let n = z.len() / 2;
        Ok(Self { error: z[..n].to_vec(), reference: z[n..].to_vec() })
    }

    pub fn zeros(n: usize) -> Self {
        Self { error: vec![0.0; n], reference: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.error.len() + self.reference.len()
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.error.iter().chain(&self.reference).copied().collect()
    }

    /// Physical state `x = e + r`.
    pub fn state(&self) -> Vec<f64> {
        self.error.iter().zip(&self.reference).map(|(e, r)| e + r).collect()
    }

    pub fn norm(&self) -> f64 {
        self.error.iter().chain(&self.reference).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.error.iter().chain(&self.reference).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub value: Vec<f64>,
    pub saturated: bool,
}

/// Hard saturation `s(.)`: clamps channel `j` into `[-bound_j, bound_j]`.
pub fn saturate(raw: &[f64], bounds: &[f64]) -> Result<ControlInput> {
    if raw.len() != bounds.len() {
        return Err(Error::InvalidArgument(format!(
            "action has {} channels but {} bounds were given",
            raw.len(),
            bounds.len()
        )));
    }
    if let Some(b) = bounds.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::InvalidArgument(format!("input bound must be positive, got {b}")));
    }
    let value = raw.iter().zip(bounds).map(|(a, b)| a.clamp(-b, *b)).collect();
    Ok(ControlInput { value, saturated: true })
}

/// Recorded closed-loop run. `states` has one more entry than the per-step sequences.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClosedLoopTrajectory {
    pub states: Vec<AugmentedState>,
    pub applied_inputs: Vec<ControlInput>,
    pub unconstrained_actions: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub discounted_cost: f64,
}

/// A black-box system together with its admissible input set.
///
/// With `bounds == None` the saturation map is the identity (unconstrained case).
#[derive(Clone, Debug)]
pub struct Plant {
    dynamics: Arc<dyn Dynamics>,
    bounds: Option<Vec<f64>>,
    divergence_threshold: f64,
}

impl Plant {
    pub fn new(dynamics: Arc<dyn Dynamics>, bounds: Option<Vec<f64>>) -> Result<Self> {
        if let Some(b) = &bounds {
            if b.len() != dynamics.input_dim() {
                return Err(Error::InvalidArgument(format!(
                    "plant has {} inputs but {} bounds were given",
                    dynamics.input_dim(),
                    b.len()
                )));
            }
            if b.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument(format!("input bounds must be positive: {b:?}")));
            }
        }
        Ok(Self { dynamics, bounds, divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD })
    }

    pub fn with_divergence_threshold(mut self, threshold: f64) -> Self {
        self.divergence_threshold = threshold;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn bounds(&self) -> Option<&[f64]> {
        self.bounds.as_deref()
    }

    pub fn divergence_threshold(&self) -> f64 {
        self.divergence_threshold
    }

    /// `s(a)`; identity when the plant is unconstrained.
    pub fn admissible_input(&self, action: &[f64]) -> Result<ControlInput> {
        if action.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "action has {} channels, plant expects {}",
                action.len(),
                self.input_dim()
            )));
        }
        match &self.bounds {
            Some(bounds) => saturate(action, bounds),
            None => Ok(ControlInput { value: action.to_vec(), saturated: false }),
        }
    }

    fn check_dims(&self, z: &AugmentedState, action: &[f64]) -> Result<()> {
        let n = self.state_dim();
        if z.error.len() != n || z.reference.len() != n {
            return Err(Error::InvalidArgument(format!(
                "augmented state has dimension {}, plant expects {}",
                z.dim(),
                2 * n
            )));
        }
        ensure_finite("augmented state", &z.stacked())?;
        ensure_finite("action", action)
    }

    /// `z' = [f(e + r, s(a)) - g(r); g(r)]`.
    pub fn step_augmented(&self, z: &AugmentedState, action: &[f64]) -> Result<AugmentedState> {
        self.check_dims(z, action)?;
        let u = self.admissible_input(action)?;
        let x_next = self.dynamics.step(&z.state(), &u.value);
        let r_next = self.dynamics.reference(&z.reference);
        let next = AugmentedState {
            error: x_next.iter().zip(&r_next).map(|(x, r)| x - r).collect(),
            reference: r_next,
        };
        if !next.is_finite() {
            return Err(Error::NumericalOverflow { step: 0, state: next.stacked() });
        }
        Ok(next)
    }

    /// `L(z, a) = l(z, s(a))`.
    pub fn stage_cost_observed(&self, z: &AugmentedState, action: &[f64]) -> Result<f64> {
        self.check_dims(z, action)?;
        let u = self.admissible_input(action)?;
        Ok(self.dynamics.cost(&z.error, &z.reference, &u.value))
    }

    /// Rolls `x_{k+1} = f(x_k, s(mu(z_k)))`, `r_{k+1} = g(r_k)` for `steps` steps.
    pub fn simulate_closed_loop(
        &self,
        policy: &dyn Policy,
        x0: &[f64],
        r0: &[f64],
        steps: usize,
        gamma: f64,
    ) -> Result<ClosedLoopTrajectory> {
        let (trajectory, failure) = self.simulate_closed_loop_partial(policy, x0, r0, steps, gamma)?;
        match failure {
            Some(err) => Err(err),
            None => Ok(trajectory),
        }
    }

    /// Like [`Plant::simulate_closed_loop`] but keeps the prefix recorded before a divergence.
    pub fn simulate_closed_loop_partial(
        &self,
        policy: &dyn Policy,
        x0: &[f64],
        r0: &[f64],
        steps: usize,
        gamma: f64,
    ) -> Result<(ClosedLoopTrajectory, Option<Error>)> {
        if steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("discount must lie in (0, 1], got {gamma}")));
        }
        let mut z = AugmentedState::from_state(x0, r0)?;
        let mut traj = ClosedLoopTrajectory { states: vec![z.clone()], ..Default::default() };
        let mut discount = 1.0;
        for k in 0..steps {
            let action = policy.action(&z)?;
            let applied = self.admissible_input(&action)?;
            let cost = self.stage_cost_observed(&z, &action)?;
            let next = match self.step_augmented(&z, &action) {
                Ok(next) => next,
                Err(Error::NumericalOverflow { state, .. }) => {
                    return Ok((traj, Some(Error::NumericalOverflow { step: k + 1, state })));
                }
                Err(e) => return Err(e),
            };
            traj.unconstrained_actions.push(action);
            traj.applied_inputs.push(applied);
            traj.stage_costs.push(cost);
            traj.discounted_cost += discount * cost;
            discount *= gamma;
            let diverged = next.norm() > self.divergence_threshold;
            traj.states.push(next.clone());
            if diverged {
                return Ok((traj, Some(Error::NumericalOverflow { step: k + 1, state: next.stacked() })));
            }
            z = next;
        }
        Ok((traj, None))
    }
}

/// The two-state nonlinear benchmark with a sine-wave reference generator and
/// stage cost `e' (w_e I) e + w_u u'u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkPlant {
    pub error_weight: f64,
    pub input_weight: f64,
    /// Coefficient `c` of the second row, `c (x1^2 + x2 + u) sin x2`. The printed benchmark
    /// uses 2; the unmodified textbook system uses 0.5.
    pub second_row_gain: f64,
}

impl Default for BenchmarkPlant {
    fn default() -> Self {
        Self { error_weight: 4.0, input_weight: 1.0, second_row_gain: 2.0 }
    }
}

impl Dynamics for BenchmarkPlant {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (x1, x2, u) = (x[0], x[1], u[0]);
        let c = self.second_row_gain;
        vec![(x1 + x2 * x2 + u) * x2.cos(), (c * x1 * x1 + c * x2 + c * u) * x2.sin()]
    }

    fn reference(&self, r: &[f64]) -> Vec<f64> {
        vec![0.9751 * r[0] + 0.0992 * r[1], -0.4958 * r[0] + 0.9751 * r[1]]
    }

    fn cost(&self, error: &[f64], _reference: &[f64], u: &[f64]) -> f64 {
        self.error_weight * error.iter().map(|e| e * e).sum::<f64>()
            + self.input_weight * u.iter().map(|u| u * u).sum::<f64>()
    }
}

/// Linear plant `x' = A x + B u` tracking a linear exosystem `r' = G r`, with cost
/// `e' E e + u' F u` (`E`, `F` diagonal). Its optimal Q-function is exactly quadratic
/// in `[e; r; a]`, which makes it the reference instance for the monotonicity checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearTrackingPlant {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub error_weights: Vec<f64>,
    pub input_weights: Vec<f64>,
}

impl Default for LinearTrackingPlant {
    fn default() -> Self {
        Self {
            a: vec![vec![0.9, 0.3], vec![-0.2, 1.05]],
            b: vec![vec![0.0], vec![1.0]],
            g: vec![vec![0.9751, 0.0992], vec![-0.4958, 0.9751]],
            error_weights: vec![4.0, 4.0],
            input_weights: vec![1.0],
        }
    }
}

impl LinearTrackingPlant {
    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        let m = self.input_weights.len();
        let square = |mat: &Vec<Vec<f64>>, cols: usize| mat.len() == n && mat.iter().all(|row| row.len() == cols);
        if n == 0 || m == 0 || !square(&self.a, n) || !square(&self.b, m) || !square(&self.g, n) {
            return Err(Error::Config("linear plant matrices have inconsistent shapes".into()));
        }
        if self.error_weights.len() != n {
            return Err(Error::Config("linear plant needs one error weight per state".into()));
        }
        if self.error_weights.iter().chain(&self.input_weights).any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("linear plant cost weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn mat_vec(mat: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    mat.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

impl Dynamics for LinearTrackingPlant {
    fn state_dim(&self) -> usize {
        self.a.len()
    }

    fn input_dim(&self) -> usize {
        self.input_weights.len()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        mat_vec(&self.a, x).iter().zip(mat_vec(&self.b, u)).map(|(ax, bu)| ax + bu).collect()
    }

    fn reference(&self, r: &[f64]) -> Vec<f64> {
        mat_vec(&self.g, r)
    }

    fn cost(&self, error: &[f64], _reference: &[f64], u: &[f64]) -> f64 {
        let e: f64 = self.error_weights.iter().zip(error).map(|(w, e)| w * e * e).sum();
        let a: f64 = self.input_weights.iter().zip(u).map(|(w, u)| w * u * u).sum();
        e + a
    }
}

/// Registry entry for a plant, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum PlantSpec {
    #[serde(rename = "benchmark-v")]
    Benchmark(BenchmarkPlant),
    LinearTracking(LinearTrackingPlant),
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec::Benchmark(BenchmarkPlant::default())
    }
}

impl PlantSpec {
    /// Looks a plant up by registry name with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "benchmark-v" => Ok(PlantSpec::Benchmark(BenchmarkPlant::default())),
            "linear-tracking" => Ok(PlantSpec::LinearTracking(LinearTrackingPlant::default())),
            other => Err(Error::UnknownPlant(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlantSpec::Benchmark(_) => "benchmark-v",
            PlantSpec::LinearTracking(_) => "linear-tracking",
        }
    }

    pub fn dynamics(&self) -> Result<Arc<dyn Dynamics>> {
        Ok(match self {
            PlantSpec::Benchmark(p) => Arc::new(p.clone()),
            PlantSpec::LinearTracking(p) => {
                p.validate()?;
                Arc::new(p.clone())
            }
        })
    }

    pub fn build(&self, bounds: Option<Vec<f64>>) -> Result<Plant> {
        Plant::new(self.dynamics()?, bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Zero;
    impl Policy for Zero {
        fn action(&self, _z: &AugmentedState) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
    }

    fn benchmark(bound: Option<f64>) -> Plant {
        PlantSpec::default().build(bound.map(|b| vec![b])).unwrap()
    }

    #[test]
    fn saturation_clamps_per_channel() {
        assert_eq!(saturate(&[1.2], &[0.7]).unwrap().value, vec![0.7]);
        assert_eq!(saturate(&[0.3], &[0.7]).unwrap().value, vec![0.3]);
        assert_eq!(saturate(&[-0.9], &[0.7]).unwrap().value, vec![-0.7]);
        assert!(saturate(&[0.3], &[0.7]).unwrap().saturated);
    }

    #[test]
    fn saturation_rejects_bad_arguments() {
        assert!(matches!(saturate(&[1.0, 2.0], &[0.7]), Err(Error::InvalidArgument(_))));
        assert!(matches!(saturate(&[1.0], &[0.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn origin_is_an_equilibrium() {
        let plant = benchmark(Some(0.7));
        let next = plant.step_augmented(&AugmentedState::zeros(2), &[0.0]).unwrap();
        assert_eq!(next, AugmentedState::zeros(2));
    }

    #[test]
    fn benchmark_step_from_initial_condition() {
        // Frozen from a scalar evaluation: x1 = 2.01 cos(-1.1), x2 = -0.92 sin(-1.1),
        // r1 = 0.4875 + 0.0496, r2 = -0.2479 + 0.48755.
        let plant = benchmark(None);
        let z = AugmentedState::from_state(&[0.8, -1.1], &[0.5, 0.5]).unwrap();
        assert_eq!(z.error, vec![0.30000000000000004, -1.6]);
        let next = plant.step_augmented(&z, &[0.0]).unwrap();
        let x1 = 0.9117282040654106;
        let x2 = 0.8199107712565207;
        let r = [0.53715, 0.23965];
        assert!((next.reference[0] - r[0]).abs() < 1e-12);
        assert!((next.reference[1] - r[1]).abs() < 1e-12);
        assert!((next.error[0] - (x1 - r[0])).abs() < 1e-12);
        assert!((next.error[1] - (x2 - r[1])).abs() < 1e-12);
    }

    #[test]
    fn actions_beyond_the_bound_act_like_the_bound() {
        let plant = benchmark(Some(0.7));
        let z = AugmentedState::from_state(&[0.8, -1.1], &[0.5, 0.5]).unwrap();
        assert_eq!(plant.step_augmented(&z, &[5.0]).unwrap(), plant.step_augmented(&z, &[0.7]).unwrap());
    }

    #[test]
    fn stage_cost_examples() {
        let plant = benchmark(Some(0.7));
        let z = AugmentedState::new(vec![1.0, 0.0], vec![3.0, -2.0]).unwrap();
        assert_eq!(plant.stage_cost_observed(&z, &[0.0]).unwrap(), 4.0);
        assert_eq!(plant.stage_cost_observed(&AugmentedState::zeros(2), &[0.0]).unwrap(), 0.0);
        let z = AugmentedState::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!((plant.stage_cost_observed(&z, &[2.0]).unwrap() - 8.49).abs() < 1e-12);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let plant = benchmark(None);
        let z = AugmentedState::new(vec![f64::NAN, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(plant.step_augmented(&z, &[0.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            plant.stage_cost_observed(&AugmentedState::zeros(2), &[f64::INFINITY]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn overflowing_dynamics_report_the_state() {
        let plant = benchmark(None);
        let z = AugmentedState::new(vec![1e200, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(plant.step_augmented(&z, &[0.0]), Err(Error::NumericalOverflow { .. })));
    }

    #[test]
    fn zero_policy_at_equilibrium_stays_put() {
        let plant = benchmark(Some(0.7));
        let traj = plant.simulate_closed_loop(&Zero, &[0.0, 0.0], &[0.0, 0.0], 25, 0.95).unwrap();
        assert_eq!(traj.states.len(), 26);
        assert_eq!(traj.applied_inputs.len(), 25);
        assert!(traj.states.iter().all(|z| z.norm() == 0.0));
        assert_eq!(traj.discounted_cost, 0.0);
    }

    #[test]
    fn divergence_is_reported_with_prefix() {
        let plant = benchmark(None).with_divergence_threshold(10.0);
        let (traj, failure) = plant.simulate_closed_loop_partial(&Zero, &[3.0, 3.0], &[0.0, 0.0], 50, 0.9).unwrap();
        assert!(matches!(failure, Some(Error::NumericalOverflow { .. })));
        assert!(traj.states.len() < 51);
        assert_eq!(traj.states.len(), traj.applied_inputs.len() + 1);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(PlantSpec::by_name("benchmark-v").unwrap().name(), "benchmark-v");
        assert_eq!(PlantSpec::by_name("linear-tracking").unwrap().name(), "linear-tracking");
        assert!(matches!(PlantSpec::by_name("nope"), Err(Error::UnknownPlant(_))));
    }

    proptest! {
        #[test]
        fn saturation_is_idempotent(a in -10.0f64..10.0, b in 0.01f64..5.0) {
            let once = saturate(&[a], &[b]).unwrap().value;
            let twice = saturate(&once, &[b]).unwrap().value;
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn equal_saturated_images_are_equivalent(
            z in proptest::collection::vec(-3.0f64..3.0, 4),
            excess in 0.0f64..10.0,
        ) {
            let plant = benchmark(Some(0.7));
            let z = AugmentedState::from_stacked(&z).unwrap();
            let a = [0.7 + excess];
            prop_assert_eq!(plant.step_augmented(&z, &a).unwrap(), plant.step_augmented(&z, &[0.7]).unwrap());
            prop_assert_eq!(plant.stage_cost_observed(&z, &a).unwrap(), plant.stage_cost_observed(&z, &[0.7]).unwrap());
        }

        #[test]
        fn reference_half_ignores_error_and_action(
            r in proptest::collection::vec(-3.0f64..3.0, 2),
            e1 in proptest::collection::vec(-3.0f64..3.0, 2),
            e2 in proptest::collection::vec(-3.0f64..3.0, 2),
            a1 in -2.0f64..2.0,
            a2 in -2.0f64..2.0,
        ) {
            let plant = benchmark(None);
            let n1 = plant.step_augmented(&AugmentedState::new(e1, r.clone()).unwrap(), &[a1]).unwrap();
            let n2 = plant.step_augmented(&AugmentedState::new(e2, r).unwrap(), &[a2]).unwrap();
            prop_assert_eq!(n1.reference, n2.reference);
        }

        #[test]
        fn stepping_is_deterministic(z in proptest::collection::vec(-5.0f64..5.0, 4), a in -2.0f64..2.0) {
            let plant = benchmark(Some(0.7));
            let z = AugmentedState::from_stacked(&z).unwrap();
            let n1 = plant.step_augmented(&z, &[a]).unwrap();
            let n2 = plant.step_augmented(&z, &[a]).unwrap();
            prop_assert_eq!(n1.stacked().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            n2.stacked().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
