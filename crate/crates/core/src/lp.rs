//! Per-iteration linear program over the free entries of the symmetric parameter matrix.
//!
//! Decision variables are the row-major upper triangle of `P`. A quadratic form
//! `phi' P phi` is linear in that vector with coefficient `phi_i phi_j` on diagonal
//! entries and `2 phi_i phi_j` off the diagonal.

use std::fmt;
use std::io::Write;
use std::path::Path;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::fmt_float;
use crate::qfunc::{triangle_index, FeatureMap, QParams};
use crate::sampling::{DroppedSample, RolloutSet, SampleBuffer};

/// Feasibility tolerance, relative to `1 + |rhs|`.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

/// Moments of the relevance weight over the linear variables (`e_i`, `r_i`, `a_j` that
/// appear as features) and the squared features.
///
/// `second` is the covariance; with a nonzero `mean` the raw second moment is
/// `second + mean mean'`. `third[i][j] = E[x_i y_j]` pairs linear variable `i` with squared
/// feature `j`, and `fourth[j][k] = E[y_j y_k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    pub mean: Vec<f64>,
    pub second: Vec<Vec<f64>>,
    pub third: Vec<Vec<f64>>,
    pub fourth: Vec<Vec<f64>>,
}

impl MomentConfig {
    /// Zero mean, identity second moment, and every third and fourth moment set to one.
    pub fn all_ones(map: &FeatureMap) -> Self {
        let (p, q) = counts(map);
        Self {
            mean: vec![0.0; p],
            second: identity(p),
            third: vec![vec![1.0; q]; p],
            fourth: vec![vec![1.0; q]; q],
        }
    }

    /// Moments of a standard normal over the linear variables: odd moments vanish,
    /// `E[x^4] = 3` and `E[x^2 y^2] = 1` for distinct variables.
    pub fn standard_normal(map: &FeatureMap) -> Self {
        let (p, q) = counts(map);
        let squares: Vec<_> = map.base().iter().filter(|f| f.is_squared()).collect();
        let fourth = (0..q)
            .map(|j| (0..q).map(|k| if squares[j].root() == squares[k].root() { 3.0 } else { 1.0 }).collect())
            .collect();
        Self { mean: vec![0.0; p], second: identity(p), third: vec![vec![0.0; q]; p], fourth }
    }
}

fn identity(p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Number of linear and squared features.
fn counts(map: &FeatureMap) -> (usize, usize) {
    let q = map.base().iter().filter(|f| f.is_squared()).count();
    (map.len() - q, q)
}

/// How the LP objective weights the state-action space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RelevanceWeight {
    /// Explicit moments of the weight.
    Moments(MomentConfig),
    /// `E[x^4] = 3`-type moments of a standard normal (see [`MomentConfig::standard_normal`]).
    #[default]
    StandardNormal,
    /// Zero mean, unit covariance, all third and fourth moments one.
    AllOnes,
    /// Empirical measure of the buffer pairs `(z_b, a_b)`.
    Empirical,
}

impl RelevanceWeight {
    pub fn moments(&self, map: &FeatureMap, buffer: &SampleBuffer) -> Result<RelevanceMoments> {
        match self {
            RelevanceWeight::Moments(cfg) => assemble_moments(map, cfg),
            RelevanceWeight::StandardNormal => assemble_moments(map, &MomentConfig::standard_normal(map)),
            RelevanceWeight::AllOnes => assemble_moments(map, &MomentConfig::all_ones(map)),
            RelevanceWeight::Empirical => empirical_moments(map, buffer),
        }
    }
}

/// `M_c = E_c[phi phi']`, so that `E_c[phi' P phi] = <P, M_c>`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceMoments {
    pub feature_second_moment: DMatrix<f64>,
}

impl RelevanceMoments {
    /// Smallest eigenvalue of `M_c`. A negative value means the LP is unbounded for
    /// every buffer, since sampled constraints only span positive semidefinite directions.
    pub fn min_eigenvalue(&self) -> f64 {
        self.feature_second_moment.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn inner_product(&self, params: &QParams) -> f64 {
        self.feature_second_moment.component_mul(params.matrix()).sum()
    }
}

fn check_square(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument(format!("{name} moments must be {rows}x{cols}")));
    }
    Ok(())
}

pub fn assemble_moments(map: &FeatureMap, cfg: &MomentConfig) -> Result<RelevanceMoments> {
    let (p, q) = counts(map);
    if cfg.mean.len() != p {
        return Err(Error::InvalidArgument(format!("first moment must have length {p}")));
    }
    check_square("second", &cfg.second, p, p)?;
    check_square("third", &cfg.third, p, q)?;
    check_square("fourth", &cfg.fourth, q, q)?;
    let sigma = DMatrix::from_fn(p, p, |i, j| cfg.second[i][j]);
    if sigma != sigma.transpose() {
        return Err(Error::InvalidArgument("second moment must be symmetric".into()));
    }
    if sigma.clone().symmetric_eigenvalues().iter().any(|v| *v < -1e-12) {
        return Err(Error::InvalidArgument("second moment must be positive semidefinite".into()));
    }
    for j in 0..q {
        for k in 0..j {
            if cfg.fourth[j][k] != cfg.fourth[k][j] {
                return Err(Error::InvalidArgument("fourth moment must be symmetric".into()));
            }
        }
    }

    // Positions of linear and squared features inside phi.
    let nb = map.base_len();
    let mut linear = Vec::with_capacity(p);
    let mut squared = Vec::with_capacity(q);
    for (pos, f) in map.base().iter().enumerate() {
        if f.is_squared() {
            squared.push(pos);
        } else {
            linear.push(pos);
        }
    }
    linear.extend(nb..map.len());

    let k = map.len();
    let mut m = DMatrix::zeros(k, k);
    for (i, &pi) in linear.iter().enumerate() {
        for (j, &pj) in linear.iter().enumerate() {
            m[(pi, pj)] = cfg.second[i][j] + cfg.mean[i] * cfg.mean[j];
        }
        for (j, &pj) in squared.iter().enumerate() {
            m[(pi, pj)] = cfg.third[i][j];
            m[(pj, pi)] = cfg.third[i][j];
        }
    }
    for (j, &pj) in squared.iter().enumerate() {
        for (l, &pl) in squared.iter().enumerate() {
            m[(pj, pl)] = cfg.fourth[j][l];
        }
    }
    Ok(RelevanceMoments { feature_second_moment: m })
}

/// `M_c = (1/B) sum_b phi(z_b, a_b) phi(z_b, a_b)'`.
pub fn empirical_moments(map: &FeatureMap, buffer: &SampleBuffer) -> Result<RelevanceMoments> {
    if buffer.is_empty() {
        return Err(Error::InvalidArgument("buffer is empty".into()));
    }
    let k = map.len();
    let mut m = DMatrix::zeros(k, k);
    for s in buffer.samples() {
        let phi = map.features(&s.state, &s.action)?;
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    Ok(RelevanceMoments { feature_second_moment: m / buffer.len() as f64 })
}

/// Linear functional `p -> <P(p), M_c>` over the triangle parameterization.
pub fn objective_coefficients(moments: &RelevanceMoments) -> Vec<f64> {
    symmetric_coefficients(&moments.feature_second_moment)
}

fn symmetric_coefficients(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            out.push(if i == j { m[(i, i)] } else { m[(i, j)] + m[(j, i)] });
        }
    }
    out
}

/// Coefficients of `phi' P phi` over the triangle parameterization.
pub fn quadratic_coefficients(phi: &[f64]) -> Vec<f64> {
    let k = phi.len();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            out.push(if i == j { phi[i] * phi[i] } else { 2.0 * phi[i] * phi[j] });
        }
    }
    out
}

/// `coefficients . p <= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub sample: usize,
    pub coefficients: Vec<f64>,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LpMetadata {
    pub iteration: usize,
    pub horizon: usize,
    pub num_variables: usize,
    pub constraint_count: usize,
    pub dropped: Vec<DroppedSample>,
}

/// Maximise `objective . p` subject to every constraint and the optional lower bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub feature_map: FeatureMap,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// `(variable index, lower bound)` pairs, used for the optional `P_aa >= delta` safeguard.
    pub lower_bounds: Vec<(usize, f64)>,
    pub metadata: LpMetadata,
}

impl LinearProgram {
    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    /// Adds `P_{a_j a_j} >= delta` for every action channel.
    pub fn with_action_floor(mut self, delta: f64) -> Self {
        let k = self.feature_map.len();
        for j in self.feature_map.base_len()..k {
            self.lower_bounds.push((triangle_index(k, j, j), delta));
        }
        self
    }

    /// Plain-text dump: a comment line, the objective, then one `coefficients..., rhs` line
    /// per constraint.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let m = &self.metadata;
        writeln!(
            out,
            "# iteration={} horizon={} variables={} constraints={} dropped={}",
            m.iteration,
            m.horizon,
            m.num_variables,
            m.constraint_count,
            m.dropped.len()
        )?;
        writeln!(out, "{}", self.objective.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(" "))?;
        for c in &self.constraints {
            let mut fields: Vec<String> = c.coefficients.iter().map(|v| fmt_float(*v)).collect();
            fields.push(fmt_float(c.rhs));
            writeln!(out, "{}", fields.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Right-hand side `L_b + sum_{l=1}^{H-1} gamma^l L_l + gamma^H Q_prev(z_H, mu(z_H))`.
pub fn bellman_rhs(cost: f64, rollout_costs: &[f64], tail_q: f64, gamma: f64) -> f64 {
    let mut rhs = cost;
    for (l, c) in rollout_costs.iter().enumerate() {
        rhs += gamma.powi(l as i32 + 1) * c;
    }
    rhs + gamma.powi(rollout_costs.len() as i32 + 1) * tail_q
}

/// One inequality per surviving buffer sample.
pub fn assemble_constraints(
    buffer: &SampleBuffer,
    rollouts: &RolloutSet,
    p_prev: &QParams,
    gamma: f64,
    horizon: usize,
) -> Result<Vec<Constraint>> {
    if rollouts.horizon != horizon {
        return Err(Error::InvalidArgument(format!(
            "rollouts were collected with horizon {} but the LP uses {horizon}",
            rollouts.horizon
        )));
    }
    if rollouts.rollouts.len() != buffer.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rollouts for a buffer of {} samples",
            rollouts.rollouts.len(),
            buffer.len()
        )));
    }
    let map = p_prev.feature_map();
    let mut constraints = Vec::with_capacity(rollouts.survivors());
    for (b, (sample, rollout)) in buffer.samples().iter().zip(&rollouts.rollouts).enumerate() {
        let Some(rollout) = rollout else { continue };
        if rollout.states.len() != horizon || rollout.costs.len() + 1 != horizon {
            return Err(Error::InvalidArgument(format!("rollout {b} does not have horizon {horizon}")));
        }
        let tail = p_prev.q_value(rollout.terminal_state(), &rollout.terminal_action)?;
        let rhs = bellman_rhs(sample.cost, &rollout.costs, tail, gamma);
        if !rhs.is_finite() {
            return Err(Error::Lp { status: LpStatus::NumericalFailure, detail: format!("non-finite rhs for sample {b}") });
        }
        let phi = map.features(&sample.state, &sample.action)?;
        constraints.push(Constraint { sample: b, coefficients: quadratic_coefficients(&phi), rhs });
    }
    Ok(constraints)
}

/// Builds the full program for one iteration.
pub fn assemble(
    objective: Vec<f64>,
    buffer: &SampleBuffer,
    rollouts: &RolloutSet,
    p_prev: &QParams,
    gamma: f64,
    iteration: usize,
) -> Result<LinearProgram> {
    let horizon = rollouts.horizon;
    let constraints = assemble_constraints(buffer, rollouts, p_prev, gamma, horizon)?;
    let num_variables = p_prev.feature_map().triangle_len();
    if objective.len() != num_variables {
        return Err(Error::InvalidArgument("objective length does not match the feature map".into()));
    }
    let metadata = LpMetadata {
        iteration,
        horizon,
        num_variables,
        constraint_count: constraints.len(),
        dropped: rollouts.dropped.clone(),
    };
    Ok(LinearProgram {
        feature_map: p_prev.feature_map().clone(),
        objective,
        constraints,
        lower_bounds: Vec::new(),
        metadata,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present when `status` is optimal.
    pub params: Option<QParams>,
    pub objective_value: f64,
    pub max_violation: f64,
    pub detail: String,
}

impl LpSolution {
    fn failed(status: LpStatus, detail: String) -> Self {
        Self { status, params: None, objective_value: f64::NAN, max_violation: f64::NAN, detail }
    }

    /// The optimal parameters, or an [`Error::Lp`] carrying the status.
    pub fn into_optimal(self) -> Result<(QParams, f64)> {
        match (self.status, self.params) {
            (LpStatus::Optimal, Some(p)) => Ok((p, self.objective_value)),
            (status, _) => Err(Error::Lp { status, detail: self.detail }),
        }
    }
}

/// Largest violation of `coefficients . p <= rhs`, measured relative to `1 + |rhs|`.
pub fn relative_violation(constraints: &[Constraint], p: &[f64]) -> f64 {
    constraints
        .iter()
        .map(|c| {
            let lhs: f64 = c.coefficients.iter().zip(p).map(|(a, x)| a * x).sum();
            (lhs - c.rhs) / (1.0 + c.rhs.abs())
        })
        .fold(0.0, f64::max)
}

/// Solves the program with a dense simplex. Rows are scaled to unit max-norm first.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    if lp.constraints.is_empty() {
        return Err(Error::InvalidArgument("linear program has no constraints".into()));
    }
    let n = lp.num_variables();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    // Free variables are split as `p = plus - minus`; bounded ones keep a single column.
    let columns: Vec<(minilp::Variable, Option<minilp::Variable>, f64)> = (0..n)
        .map(|i| {
            let lower = lp.lower_bounds.iter().filter(|(v, _)| *v == i).map(|(_, b)| *b).fold(f64::NEG_INFINITY, f64::max);
            if lower.is_finite() {
                (problem.add_var(lp.objective[i], (0.0, f64::INFINITY)), None, lower)
            } else {
                let plus = problem.add_var(lp.objective[i], (0.0, f64::INFINITY));
                let minus = problem.add_var(-lp.objective[i], (0.0, f64::INFINITY));
                (plus, Some(minus), 0.0)
            }
        })
        .collect();
    for c in &lp.constraints {
        let scale = c.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            if c.rhs < 0.0 {
                return Ok(LpSolution::failed(LpStatus::Infeasible, format!("sample {} has 0 <= {}", c.sample, c.rhs)));
            }
            continue;
        }
        let mut expr = Vec::with_capacity(2 * n);
        let mut rhs = c.rhs;
        for ((plus, minus, shift), a) in columns.iter().zip(&c.coefficients) {
            if *a == 0.0 {
                continue;
            }
            expr.push((*plus, a / scale));
            if let Some(minus) = minus {
                expr.push((*minus, -a / scale));
            }
            rhs -= a * shift;
        }
        problem.add_constraint(expr.as_slice(), ComparisonOp::Le, rhs / scale);
    }
    let solution = match problem.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return Ok(LpSolution::failed(LpStatus::Infeasible, "solver reported infeasible".into())),
        Err(minilp::Error::Unbounded) => {
            return Ok(LpSolution::failed(
                LpStatus::Unbounded,
                "objective is unbounded; the sampled constraints do not pin the objective direction".into(),
            ))
        }
    };
    let x: Vec<f64> = columns
        .iter()
        .map(|(plus, minus, shift)| solution[*plus] - minus.map_or(0.0, |m| solution[m]) + shift)
        .collect();
    if x.iter().any(|v| v.is_infinite()) || solution.objective().is_infinite() {
        // minilp sometimes reports an unbounded ray as an infinite solution instead of an error.
        return Ok(LpSolution::failed(LpStatus::Unbounded, "solver returned an unbounded ray".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Ok(LpSolution::failed(LpStatus::NumericalFailure, "solver returned non-finite values".into()));
    }
    let max_violation = relative_violation(&lp.constraints, &x);
    let objective_value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let params = QParams::from_upper_triangle(lp.feature_map.clone(), &x)?;
    if max_violation > FEASIBILITY_TOLERANCE {
        return Ok(LpSolution {
            status: LpStatus::NumericalFailure,
            params: None,
            objective_value,
            max_violation,
            detail: format!("constraint violation {max_violation:e} exceeds tolerance"),
        });
    }
    Ok(LpSolution { status: LpStatus::Optimal, params: Some(params), objective_value, max_violation, detail: String::new() })
}
