//! Quadratic-in-features Q-functions `Q(z, a) = phi(z, a)' P phi(z, a)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::plant::AugmentedState;
use crate::sampling::SampleBuffer;

/// A scalar function of the augmented state. Indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaseFeature {
    Error(usize),
    Reference(usize),
    ErrorSquared(usize),
    ReferenceSquared(usize),
}

impl BaseFeature {
    fn eval(&self, z: &AugmentedState) -> f64 {
        match *self {
            BaseFeature::Error(i) => z.error[i],
            BaseFeature::Reference(i) => z.reference[i],
            BaseFeature::ErrorSquared(i) => z.error[i] * z.error[i],
            BaseFeature::ReferenceSquared(i) => z.reference[i] * z.reference[i],
        }
    }

    /// State index this feature reads.
    fn index(&self) -> usize {
        match *self {
            BaseFeature::Error(i)
            | BaseFeature::Reference(i)
            | BaseFeature::ErrorSquared(i)
            | BaseFeature::ReferenceSquared(i) => i,
        }
    }

    pub fn is_squared(&self) -> bool {
        matches!(self, BaseFeature::ErrorSquared(_) | BaseFeature::ReferenceSquared(_))
    }

    /// The linear feature this one is the square of (itself when linear).
    pub fn root(&self) -> BaseFeature {
        match *self {
            BaseFeature::ErrorSquared(i) => BaseFeature::Error(i),
            BaseFeature::ReferenceSquared(i) => BaseFeature::Reference(i),
            other => other,
        }
    }

    fn parse(name: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognised feature name `{name}`"));
        let (body, squared) = match name.strip_suffix("^2") {
            Some(body) => (body, true),
            None => (name, false),
        };
        let mut chars = body.chars();
        let kind = chars.next().ok_or_else(bad)?;
        let index: usize = chars.as_str().parse().map_err(|_| bad())?;
        if index == 0 {
            return Err(bad());
        }
        let i = index - 1;
        match (kind, squared) {
            ('e', false) => Ok(BaseFeature::Error(i)),
            ('r', false) => Ok(BaseFeature::Reference(i)),
            ('e', true) => Ok(BaseFeature::ErrorSquared(i)),
            ('r', true) => Ok(BaseFeature::ReferenceSquared(i)),
            ('a', _) => Err(Error::InvalidArgument(format!(
                "action features must be linear and trailing, got `{name}`"
            ))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for BaseFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BaseFeature::Error(i) => write!(f, "e{}", i + 1),
            BaseFeature::Reference(i) => write!(f, "r{}", i + 1),
            BaseFeature::ErrorSquared(i) => write!(f, "e{}^2", i + 1),
            BaseFeature::ReferenceSquared(i) => write!(f, "r{}^2", i + 1),
        }
    }
}

/// Ordered state features `psi(z)` followed by the `m` action channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureMap {
    base: Vec<BaseFeature>,
    input_dim: usize,
}

impl FeatureMap {
    pub fn new(base: Vec<BaseFeature>, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("feature map needs at least one action channel".into()));
        }
        Ok(Self { base, input_dim })
    }

    /// `[e1, e2, r1, r2, r1^2, r2^2, a]`.
    pub fn benchmark() -> Self {
        use BaseFeature::*;
        Self {
            base: vec![Error(0), Error(1), Reference(0), Reference(1), ReferenceSquared(0), ReferenceSquared(1)],
            input_dim: 1,
        }
    }

    /// `[e_1..e_n, r_1..r_n, a_1..a_m]`, exact for linear plants with quadratic cost.
    pub fn linear(state_dim: usize, input_dim: usize) -> Self {
        let base = (0..state_dim)
            .map(BaseFeature::Error)
            .chain((0..state_dim).map(BaseFeature::Reference))
            .collect();
        Self { base, input_dim }
    }

    /// Parses names such as `e1`, `r2`, `r1^2`, followed by `a` (or `a1`, `a2`, ...).
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let split = names
            .iter()
            .position(|n| n.as_ref().starts_with('a') && !n.as_ref().contains('^'))
            .ok_or_else(|| Error::InvalidArgument("feature list has no action entries".into()))?;
        let base = names[..split].iter().map(|n| BaseFeature::parse(n.as_ref())).collect::<Result<Vec<_>>>()?;
        let actions = &names[split..];
        let input_dim = actions.len();
        for (j, name) in actions.iter().enumerate() {
            let name = name.as_ref();
            let ok = if input_dim == 1 { name == "a" || name == "a1" } else { name == format!("a{}", j + 1) };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "action features must be linear and trailing, got `{name}`"
                )));
            }
        }
        Self::new(base, input_dim)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.base.iter().map(|f| f.to_string()).collect();
        if self.input_dim == 1 {
            names.push("a".into());
        } else {
            names.extend((1..=self.input_dim).map(|j| format!("a{j}")));
        }
        names
    }

    pub fn base(&self) -> &[BaseFeature] {
        &self.base
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Total feature dimension.
    pub fn len(&self) -> usize {
        self.base.len() + self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of free entries of a symmetric `len() x len()` matrix.
    pub fn triangle_len(&self) -> usize {
        let k = self.len();
        k * (k + 1) / 2
    }

    /// Smallest state dimension this map can be evaluated on.
    pub fn min_state_dim(&self) -> usize {
        self.base.iter().map(|f| f.index() + 1).max().unwrap_or(0)
    }

    /// `psi(z)`.
    pub fn state_features(&self, z: &AugmentedState) -> Result<Vec<f64>> {
        if z.error.len() < self.min_state_dim() || z.error.len() != z.reference.len() {
            return Err(Error::InvalidArgument(format!(
                "augmented state of dimension {} is too small for the feature map",
                z.dim()
            )));
        }
        ensure_finite("augmented state", &z.stacked())?;
        Ok(self.base.iter().map(|f| f.eval(z)).collect())
    }

    /// `phi(z, a) = [psi(z); a]`.
    pub fn features(&self, z: &AugmentedState, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "action has {} channels, feature map expects {}",
                action.len(),
                self.input_dim
            )));
        }
        ensure_finite("action", action)?;
        let mut phi = self.state_features(z)?;
        phi.extend_from_slice(action);
        Ok(phi)
    }
}

/// Row-major upper-triangle position of `(i, j)` in a `k x k` symmetric matrix.
pub fn triangle_index(k: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * k - i + 1) / 2 + (j - i)
}

/// Symmetric parameter matrix of a quadratic Q-function.
#[derive(Clone, Debug, PartialEq)]
pub struct QParams {
    matrix: DMatrix<f64>,
    feature_map: FeatureMap,
}

impl QParams {
    pub fn zeros(feature_map: FeatureMap) -> Self {
        let k = feature_map.len();
        Self { matrix: DMatrix::zeros(k, k), feature_map }
    }

    pub fn identity(feature_map: FeatureMap) -> Self {
        let k = feature_map.len();
        Self { matrix: DMatrix::identity(k, k), feature_map }
    }

    /// Builds from the row-major upper triangle; the lower triangle is mirrored.
    pub fn from_upper_triangle(feature_map: FeatureMap, triangle: &[f64]) -> Result<Self> {
        let k = feature_map.len();
        if triangle.len() != feature_map.triangle_len() {
            return Err(Error::InvalidArgument(format!(
                "upper triangle has {} entries, expected {}",
                triangle.len(),
                feature_map.triangle_len()
            )));
        }
        let mut matrix = DMatrix::zeros(k, k);
        let mut it = triangle.iter();
        for i in 0..k {
            for j in i..k {
                let v = *it.next().expect("length checked");
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Ok(Self { matrix, feature_map })
    }

    /// Builds from full rows. The rows must be exactly symmetric.
    pub fn from_rows(feature_map: FeatureMap, rows: &[Vec<f64>]) -> Result<Self> {
        let k = feature_map.len();
        if rows.len() != k || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument(format!("parameter matrix must be {k}x{k}")));
        }
        for i in 0..k {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidArgument(format!(
                        "parameter matrix is not symmetric at ({i}, {j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        let matrix = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        Ok(Self { matrix, feature_map })
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let k = self.dim();
        let mut out = Vec::with_capacity(self.feature_map.triangle_len());
        for i in 0..k {
            for j in i..k {
                out.push(self.matrix[(i, j)]);
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.matrix.row(i).iter().copied().collect()).collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &QParams, beta: f64) -> Result<QParams> {
        self.same_map(other)?;
        Ok(QParams { matrix: &self.matrix * alpha + &other.matrix * beta, feature_map: self.feature_map.clone() })
    }

    pub fn scaled(&self, alpha: f64) -> QParams {
        QParams { matrix: &self.matrix * alpha, feature_map: self.feature_map.clone() }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut eig: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    fn same_map(&self, other: &QParams) -> Result<()> {
        if self.feature_map != other.feature_map {
            return Err(Error::InvalidArgument("parameter matrices use different feature maps".into()));
        }
        Ok(())
    }

    /// `phi' P phi` for an already evaluated feature vector.
    pub fn quadratic_form(&self, phi: &[f64]) -> f64 {
        let k = self.dim();
        let mut total = 0.0;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                row += self.matrix[(i, j)] * phi[j];
            }
            total += phi[i] * row;
        }
        total
    }

    pub fn q_value(&self, z: &AugmentedState, action: &[f64]) -> Result<f64> {
        let phi = self.feature_map.features(z, action)?;
        Ok(self.quadratic_form(&phi))
    }

    /// Unconstrained minimiser `a* = -P_aa^{-1} P_a,psi psi(z)`. No saturation is applied.
    pub fn greedy_action(&self, z: &AugmentedState) -> Result<Vec<f64>> {
        GreedyPolicy::new(self.clone())?.action(z)
    }

    /// `min_v Q(z, v)`, the Q-value at the greedy action.
    pub fn min_q(&self, z: &AugmentedState) -> Result<f64> {
        let a = self.greedy_action(z)?;
        self.q_value(z, &a)
    }

    pub fn action_block(&self) -> DMatrix<f64> {
        let nb = self.feature_map.base_len();
        let m = self.feature_map.input_dim();
        self.matrix.view((nb, nb), (m, m)).into_owned()
    }
}

/// Max element-wise absolute difference `||P_new - P_old||_inf`.
pub fn iterate_distance(p_new: &QParams, p_old: &QParams) -> Result<f64> {
    p_new.same_map(p_old)?;
    Ok(p_new.matrix.iter().zip(p_old.matrix.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `max_b |Q_new(z_b, a_b) - Q_old(z_b, a_b)|` over the buffer.
pub fn buffer_q_distance(p_new: &QParams, p_old: &QParams, buffer: &SampleBuffer) -> Result<f64> {
    p_new.same_map(p_old)?;
    if buffer.is_empty() {
        return Err(Error::InvalidArgument("buffer is empty".into()));
    }
    let diff = p_new.combine(1.0, p_old, -1.0)?;
    let mut worst: f64 = 0.0;
    for sample in buffer.samples() {
        let phi = p_new.feature_map.features(&sample.state, &sample.action)?;
        worst = worst.max(diff.quadratic_form(&phi).abs());
    }
    Ok(worst)
}

/// A state-feedback law `mu(z)` returning an unconstrained action.
pub trait Policy: Send + Sync {
    fn action(&self, z: &AugmentedState) -> Result<Vec<f64>>;
}

/// Greedy (argmin) policy of a Q-function with a positive-definite action block.
#[derive(Clone, Debug)]
pub struct GreedyPolicy {
    params: QParams,
    action_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl GreedyPolicy {
    pub fn new(params: QParams) -> Result<Self> {
        let block = params.action_block();
        let ill_posed = || Error::IllPosedPolicy { block: block.iter().copied().collect() };
        if block.iter().any(|v| !v.is_finite()) {
            return Err(ill_posed());
        }
        let action_chol = if block.nrows() == 1 {
            if !(block[(0, 0)] > 0.0) {
                return Err(ill_posed());
            }
            None
        } else {
            Some(block.clone().cholesky().ok_or_else(ill_posed)?)
        };
        Ok(Self { params, action_chol })
    }

    pub fn params(&self) -> &QParams {
        &self.params
    }
}

impl Policy for GreedyPolicy {
    fn action(&self, z: &AugmentedState) -> Result<Vec<f64>> {
        let map = &self.params.feature_map;
        let psi = map.state_features(z)?;
        let nb = map.base_len();
        let m = map.input_dim();
        let cross = |j: usize| -> f64 { psi.iter().enumerate().map(|(k, p)| self.params.matrix[(nb + j, k)] * p).sum() };
        match &self.action_chol {
            None => Ok(vec![-cross(0) / self.params.matrix[(nb, nb)]]),
            Some(chol) => {
                let rhs = DVector::from_fn(m, |j, _| cross(j));
                Ok(chol.solve(&rhs).iter().map(|v| -v).collect())
            }
        }
    }
}

/// `mu(z) = C psi(z)` for a fixed coefficient matrix over the state features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePolicy {
    feature_map: FeatureMap,
    coefficients: Vec<Vec<f64>>,
}

impl FeaturePolicy {
    pub fn new(feature_map: FeatureMap, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.len() != feature_map.input_dim()
            || coefficients.iter().any(|row| row.len() != feature_map.base_len())
        {
            return Err(Error::InvalidArgument(format!(
                "policy needs {} rows of {} coefficients",
                feature_map.input_dim(),
                feature_map.base_len()
            )));
        }
        Ok(Self { feature_map, coefficients })
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }
}

impl Policy for FeaturePolicy {
    fn action(&self, z: &AugmentedState) -> Result<Vec<f64>> {
        let psi = self.feature_map.state_features(z)?;
        Ok(self.coefficients.iter().map(|row| row.iter().zip(&psi).map(|(c, p)| c * p).sum()).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct QParamsRepr {
    feature_names: Vec<String>,
    upper_triangle: Vec<f64>,
}

impl Serialize for QParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        QParamsRepr { feature_names: self.feature_map.names(), upper_triangle: self.upper_triangle() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = QParamsRepr::deserialize(deserializer)?;
        let map = FeatureMap::from_names(&repr.feature_names).map_err(serde::de::Error::custom)?;
        QParams::from_upper_triangle(map, &repr.upper_triangle).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use proptest::prelude::*;

    fn z(e: [f64; 2], r: [f64; 2]) -> AugmentedState {
        AugmentedState::new(e.to_vec(), r.to_vec()).unwrap()
    }

    #[test]
    fn benchmark_features() {
        let map = FeatureMap::benchmark();
        assert_eq!(map.features(&z([1.0, 2.0], [3.0, 4.0]), &[5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 9.0, 16.0, 5.0]);
        assert_eq!(map.features(&z([0.0; 2], [0.0; 2]), &[0.0]).unwrap(), vec![0.0; 7]);
        assert_eq!(map.features(&z([0.0; 2], [-2.0, 1.0]), &[0.0]).unwrap(), vec![0.0, 0.0, -2.0, 1.0, 4.0, 1.0, 0.0]);
        assert!(map.features(&z([f64::NAN, 0.0], [0.0; 2]), &[0.0]).is_err());
        assert!(map.features(&z([0.0; 2], [0.0; 2]), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn feature_names_round_trip() {
        let map = FeatureMap::benchmark();
        assert_eq!(map.names(), vec!["e1", "e2", "r1", "r2", "r1^2", "r2^2", "a"]);
        assert_eq!(FeatureMap::from_names(&map.names()).unwrap(), map);
        let multi = FeatureMap::linear(2, 2);
        assert_eq!(FeatureMap::from_names(&multi.names()).unwrap(), multi);
    }

    #[test]
    fn nonlinear_action_features_are_rejected() {
        assert!(FeatureMap::from_names(&["e1", "a", "a^2"]).is_err());
        assert!(FeatureMap::from_names(&["e1", "a^2"]).is_err());
        assert!(FeatureMap::from_names(&["e1", "r1"]).is_err());
    }

    #[test]
    fn q_value_of_identity_and_zero() {
        let map = FeatureMap::benchmark();
        let state = z([1.0, 2.0], [3.0, 4.0]);
        let norm2 = 1.0 + 4.0 + 9.0 + 16.0 + 81.0 + 256.0 + 25.0;
        assert_eq!(QParams::identity(map.clone()).q_value(&state, &[5.0]).unwrap(), norm2);
        assert_eq!(QParams::zeros(map).q_value(&state, &[5.0]).unwrap(), 0.0);
    }

    #[test]
    fn q_value_at_converged_unconstrained_matrix() {
        // phi = [0.5, -1, 1, 2, 1, 4, 0.3]; phi' P phi accumulated term by term in Python.
        let p = benchmark::unconstrained_optimum();
        let value = p.q_value(&z([0.5, -1.0], [1.0, 2.0]), &[0.3]).unwrap();
        assert!((value - 26.383364).abs() < 1e-9, "{value}");
    }

    #[test]
    fn greedy_action_examples() {
        let map = FeatureMap::benchmark();
        assert_eq!(QParams::identity(map.clone()).greedy_action(&z([1.0, -2.0], [0.5, 3.0])).unwrap(), vec![0.0]);

        let mut tri = vec![0.0; map.triangle_len()];
        tri[triangle_index(7, 6, 6)] = 2.0;
        tri[triangle_index(7, 0, 6)] = 3.0;
        let p = QParams::from_upper_triangle(map, &tri).unwrap();
        assert_eq!(p.greedy_action(&z([1.0, 0.0], [0.0, 0.0])).unwrap(), vec![-1.5]);
    }

    #[test]
    fn greedy_action_matches_dense_scan() {
        let p = benchmark::constrained_optimum();
        for e1 in [-2.0, 0.0, 1.5] {
            for r2 in [-1.0, 0.5, 2.0] {
                let state = z([e1, 0.4], [0.3, r2]);
                let exact = p.greedy_action(&state).unwrap()[0];
                let mut best = (f64::INFINITY, 0.0);
                let mut a = -3.0;
                while a <= 3.0 {
                    let q = p.q_value(&state, &[a]).unwrap();
                    if q < best.0 {
                        best = (q, a);
                    }
                    a += 1e-4;
                }
                assert!((exact - best.1).abs() < 1e-3, "exact {exact} scan {}", best.1);
            }
        }
    }

    #[test]
    fn nonpositive_action_block_is_ill_posed() {
        let map = FeatureMap::benchmark();
        let p = QParams::zeros(map);
        assert!(matches!(p.greedy_action(&z([1.0, 0.0], [0.0, 0.0])), Err(Error::IllPosedPolicy { .. })));
        let map = FeatureMap::linear(1, 2);
        let p = QParams::from_rows(
            map,
            &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 2.0], vec![0.0, 0.0, 2.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(GreedyPolicy::new(p), Err(Error::IllPosedPolicy { .. })));
    }

    #[test]
    fn multi_input_greedy_is_the_block_solution() {
        let map = FeatureMap::linear(1, 2);
        // P_aa = [[2, 1], [1, 3]], P_a,psi = [[1, 0], [0, 2]] over psi = [e1, r1].
        let rows = vec![
            vec![5.0, 0.0, 1.0, 0.0],
            vec![0.0, 5.0, 0.0, 2.0],
            vec![1.0, 0.0, 2.0, 1.0],
            vec![0.0, 2.0, 1.0, 3.0],
        ];
        let p = QParams::from_rows(map, &rows).unwrap();
        let state = AugmentedState::new(vec![1.0], vec![1.0]).unwrap();
        let a = p.greedy_action(&state).unwrap();
        // Solve [[2,1],[1,3]] a = -[1, 2]  =>  a = [-0.2, -0.6].
        assert!((a[0] + 0.2).abs() < 1e-12 && (a[1] + 0.6).abs() < 1e-12, "{a:?}");
    }

    #[test]
    fn iterate_distance_examples() {
        let map = FeatureMap::benchmark();
        let p = benchmark::initial_matrix();
        assert_eq!(iterate_distance(&p, &p).unwrap(), 0.0);
        let mut tri = p.upper_triangle();
        tri[3] += 0.5;
        let q = QParams::from_upper_triangle(map.clone(), &tri).unwrap();
        assert!((iterate_distance(&q, &p).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(iterate_distance(&p, &QParams::zeros(map)).unwrap(), 96.46);
        assert!(iterate_distance(&p, &QParams::zeros(FeatureMap::linear(2, 1))).is_err());
    }

    #[test]
    fn from_rows_rejects_asymmetry() {
        let map = FeatureMap::linear(1, 1);
        let rows = vec![vec![1.0, 2.0, 0.0], vec![2.5, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(QParams::from_rows(map, &rows).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let p = benchmark::initial_matrix().scaled(1.0 / 3.0);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"feature_names\":[\"e1\",\"e2\",\"r1\",\"r2\",\"r1^2\",\"r2^2\",\"a\"]"));
        let back: QParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn feature_policy_reproduces_stabilising_law() {
        let policy = benchmark::stabilizing_policy();
        let a = policy.action(&z([2.0, 1.0], [7.0, -3.0])).unwrap();
        assert_eq!(a, vec![-1.5 * 2.0 + 0.5 * 1.0]);
    }

    fn random_params(entries: &[f64], action_diag: f64) -> QParams {
        let map = FeatureMap::benchmark();
        let mut tri = entries.to_vec();
        tri[triangle_index(7, 6, 6)] = action_diag;
        QParams::from_upper_triangle(map, &tri).unwrap()
    }

    proptest! {
        #[test]
        fn greedy_action_is_a_minimiser(
            entries in proptest::collection::vec(-3.0f64..3.0, 28),
            diag in 0.1f64..5.0,
            state in proptest::collection::vec(-3.0f64..3.0, 4),
            probes in proptest::collection::vec(-50.0f64..50.0, 1000),
        ) {
            let p = random_params(&entries, diag);
            let state = AugmentedState::from_stacked(&state).unwrap();
            let best = p.q_value(&state, &p.greedy_action(&state).unwrap()).unwrap();
            for a in probes {
                let q = p.q_value(&state, &[a]).unwrap();
                prop_assert!(best <= q + 1e-9 * (1.0 + q.abs()));
            }
        }

        #[test]
        fn greedy_action_is_scale_invariant(
            entries in proptest::collection::vec(-3.0f64..3.0, 28),
            diag in 0.1f64..5.0,
            scale in 0.01f64..100.0,
            state in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let p = random_params(&entries, diag);
            let state = AugmentedState::from_stacked(&state).unwrap();
            let a = p.greedy_action(&state).unwrap()[0];
            let b = p.scaled(scale).greedy_action(&state).unwrap()[0];
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn q_value_is_linear_in_params(
            e1 in proptest::collection::vec(-3.0f64..3.0, 28),
            e2 in proptest::collection::vec(-3.0f64..3.0, 28),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
            state in proptest::collection::vec(-3.0f64..3.0, 4),
            a in -2.0f64..2.0,
        ) {
            let map = FeatureMap::benchmark();
            let p1 = QParams::from_upper_triangle(map.clone(), &e1).unwrap();
            let p2 = QParams::from_upper_triangle(map, &e2).unwrap();
            let state = AugmentedState::from_stacked(&state).unwrap();
            let lhs = p1.combine(alpha, &p2, beta).unwrap().q_value(&state, &[a]).unwrap();
            let rhs = alpha * p1.q_value(&state, &[a]).unwrap() + beta * p2.q_value(&state, &[a]).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn triangle_construction_is_symmetric(entries in proptest::collection::vec(-10.0f64..10.0, 28)) {
            let p = QParams::from_upper_triangle(FeatureMap::benchmark(), &entries).unwrap();
            prop_assert_eq!(p.matrix().clone(), p.matrix().transpose());
            prop_assert_eq!(p.upper_triangle(), entries);
        }
    }
}
