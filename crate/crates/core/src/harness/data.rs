use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::spec::{ExperimentSpec, ProblemKind};
use crate::error::Result;

/// Independent sub-seed streams derived from the master seed.
pub const GRAPH_STREAM: u64 = 1;
pub const DATA_STREAM: u64 = 2;

/// Sub-seed `stream` of `master`: the first word of ChaCha8 keyed by the
/// master seed on the given stream.
pub fn sub_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// `(N·M) × K` for row-partitioned problems, `M × (N·K)` for column-partitioned.
    pub matrix: Array2<f64>,
    /// ±1 labels, or regression targets for the lasso problem.
    pub response: Array1<f64>,
    pub planted: Array1<f64>,
    pub seed: u64,
}

impl SyntheticDataset {
    /// `(positives, negatives)` among the labels.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self.response.iter().filter(|&&b| b > 0.0).count();
        (pos, self.response.len() - pos)
    }
}

/// Gaussian features (rows optionally rescaled to a fixed ℓ₁ norm), a planted
/// sparse model, and labels `sign(a·w)` flipped with probability
/// `label_noise` (targets `a·w + 0.01·noise` for the lasso problem).
pub fn generate_dataset(spec: &ExperimentSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let seed = sub_seed(spec.seed, DATA_STREAM);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_rows, n_cols) = match spec.problem {
        ProblemKind::CpdLogistic => (spec.rows, spec.agents * spec.dim),
        _ => (spec.agents * spec.rows, spec.dim),
    };
    let mut matrix = Array2::from_shape_simple_fn((n_rows, n_cols), || rng.sample::<f64, _>(StandardNormal));
    if let Some(target) = spec.row_l1_norm {
        for mut row in matrix.axis_iter_mut(Axis(0)) {
            let l1: f64 = row.iter().map(|x| x.abs()).sum();
            if l1 > 0.0 {
                row *= target / l1;
            }
        }
    }
    let nnz = ((spec.sparsity * n_cols as f64).round() as usize).clamp(1, n_cols);
    let mut planted = Array1::zeros(n_cols);
    for j in sample(&mut rng, n_cols, nnz) {
        planted[j] = rng.sample::<f64, _>(StandardNormal);
    }
    let scores = matrix.dot(&planted);
    let response = match spec.problem {
        ProblemKind::RpdLasso => scores.mapv(|s| s + 0.01 * rng.sample::<f64, _>(StandardNormal)),
        _ => scores.mapv(|s| {
            let b = if s >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < spec.label_noise {
                -b
            } else {
                b
            }
        }),
    };
    let data = SyntheticDataset {
        matrix,
        response,
        planted,
        seed,
    };
    if spec.problem != ProblemKind::RpdLasso && n_rows >= 200 {
        let (pos, neg) = data.label_counts();
        let imbalance = pos.abs_diff(neg) as f64 / n_rows as f64;
        if imbalance > 0.2 {
            log::warn!("labels are unbalanced: {pos} positive, {neg} negative");
        }
    }
    Ok(data)
}
