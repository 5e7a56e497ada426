//! Settings of the two-state tracking benchmark: initial conditions, input bound, the
//! stabilising initial law, the arbitrary initial matrix and the converged matrices
//! reported for the unconstrained and constrained-input cases.

use crate::qfunc::{FeatureMap, FeaturePolicy, QParams};

pub const X0: [f64; 2] = [0.8, -1.1];
pub const R0: [f64; 2] = [0.5, 0.5];
pub const INPUT_BOUND: f64 = 0.7;
pub const GAMMA: f64 = 0.95;
pub const BUFFER_SIZE: usize = 2000;
pub const STATE_RANGE: (f64, f64) = (-5.0, 5.0);
pub const ACTION_RANGE: (f64, f64) = (-2.0, 2.0);
pub const HORIZON_GAIN: f64 = 5.0;

/// Coefficients of `mu0(z) = [-1.5, 0.5, 0, 0, 0, 0] [e; r; r^2]`.
pub const STABILIZING_GAINS: [f64; 6] = [-1.5, 0.5, 0.0, 0.0, 0.0, 0.0];

const INITIAL: [[f64; 7]; 7] = [
    [34.49, -1.88, -0.36, -9.25, -6.86, 11.84, 3.97],
    [-1.88, 96.46, 7.25, 29.08, -7.05, -22.61, -3.71],
    [-0.36, 7.25, 21.69, 5.4, -18.23, 1.13, 4.85],
    [-9.25, 29.08, 5.4, 19.68, -2.49, -11.5, -4.89],
    [-6.86, -7.05, -18.23, -2.49, 39.83, 1.64, -13.31],
    [11.84, -22.61, 1.13, -11.5, 1.64, 22.86, 3.38],
    [3.97, -3.71, 4.85, -4.89, -13.31, 3.38, 0.69],
];

const UNCONSTRAINED: [[f64; 7]; 7] = [
    [1.4919, -0.3188, 1.6205, -1.5628, 1.1226, 1.1514, -0.4904],
    [-0.3188, 1.4633, 1.0812, 2.0894, -0.6807, -1.2905, 0.5798],
    [1.6205, 1.0812, 1.7562, -1.4084, 1.1803, 0.8366, -0.1929],
    [-1.5628, 2.0894, -1.4084, 2.3127, -1.1903, -0.8835, -0.41],
    [1.1226, -0.6807, 1.1803, -1.1903, 1.1439, 0.9940, 0.2128],
    [1.1514, -1.2905, 0.8366, -0.8835, 0.9940, 0.9997, -0.3828],
    [-0.4904, 0.5798, -0.1929, -0.41, 0.2128, -0.3828, 1.2541],
];

const CONSTRAINED: [[f64; 7]; 7] = [
    [3.41, 0.3425, 3.1847, -1.4843, -0.2365, 0.8246, -0.353],
    [0.3425, 2.2134, 0.3118, -0.831, -0.0006, -0.3326, 0.2298],
    [3.1847, 0.3118, 6.4281, -4.2846, 0.6503, 1.0746, -0.9133],
    [-1.4843, -0.831, -4.2846, 5.4101, -0.6801, -0.8131, 0.033],
    [-0.2365, -0.0006, 0.6503, -0.6801, 1.616, -1.6175, -0.388],
    [0.8246, -0.3326, 1.0746, -0.8131, -1.6175, 2.6316, 0.0135],
    [-0.353, 0.2298, -0.9133, 0.033, -0.388, 0.0135, 1.9404],
];

fn params(rows: &[[f64; 7]; 7]) -> QParams {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    QParams::from_rows(FeatureMap::benchmark(), &rows).expect("published matrices are symmetric")
}

/// The arbitrary initial matrix used by the `[A]` variants.
pub fn initial_matrix() -> QParams {
    params(&INITIAL)
}

pub fn unconstrained_optimum() -> QParams {
    params(&UNCONSTRAINED)
}

pub fn constrained_optimum() -> QParams {
    params(&CONSTRAINED)
}

pub fn stabilizing_policy() -> FeaturePolicy {
    FeaturePolicy::new(FeatureMap::benchmark(), vec![STABILIZING_GAINS.to_vec()]).expect("six base features")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_matrices_load() {
        assert_eq!(initial_matrix().get(1, 1), 96.46);
        assert_eq!(unconstrained_optimum().get(6, 6), 1.2541);
        assert_eq!(constrained_optimum().get(0, 0), 3.41);
    }
}
