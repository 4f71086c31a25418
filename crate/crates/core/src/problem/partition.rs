//! Row- and column-partitioned data models and the builders that turn them
//! into P1 / P2 instances.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::{
    AgentObjective, LogisticLoss, Loss, P2Block, ProblemP1, ProblemP2, QuadraticLoss, Regularizer,
    SmoothTerm,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Quadratic,
}

/// Split `A` (and the aligned response `b`) into `n_agents` consecutive row
/// blocks of equal height.
pub fn partition_rows(
    a: &Array2<f64>,
    b: &Array1<f64>,
    n_agents: usize,
) -> Result<Vec<(Array2<f64>, Array1<f64>)>> {
    if a.nrows() != b.len() {
        return Err(Error::Shape(format!(
            "data matrix has {} rows, response has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    if n_agents == 0 || a.nrows() % n_agents != 0 {
        return Err(Error::Shape(format!(
            "{} rows cannot be split evenly across {n_agents} agents",
            a.nrows()
        )));
    }
    let m = a.nrows() / n_agents;
    Ok((0..n_agents)
        .map(|i| {
            let rows = i * m..(i + 1) * m;
            (a.slice(s![rows.clone(), ..]).to_owned(), b.slice(s![rows]).to_owned())
        })
        .collect())
}

/// Split `E` into `n_agents` consecutive column blocks of equal width.
pub fn partition_columns(e: &Array2<f64>, n_agents: usize) -> Result<Vec<Array2<f64>>> {
    if n_agents == 0 || e.ncols() % n_agents != 0 {
        return Err(Error::Shape(format!(
            "{} columns cannot be split evenly across {n_agents} agents",
            e.ncols()
        )));
    }
    let k = e.ncols() / n_agents;
    Ok((0..n_agents)
        .map(|i| e.slice(s![.., i * k..(i + 1) * k]).to_owned())
        .collect())
}

fn max_row_l1(a: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Row-partitioned regression: agent `i` holds rows `i·M..(i+1)·M` and
/// `g_i = (λ/N)‖·‖₁ + box`.
///
/// For the logistic loss the strong-convexity modulus is certified on
/// `|y_j| ≤ U` with `U = box_bound`, or `domain_bound` when there is no box.
pub fn build_rpd_p1(
    a: &Array2<f64>,
    response: &Array1<f64>,
    n_agents: usize,
    kind: LossKind,
    lambda: f64,
    box_bound: Option<f64>,
    domain_bound: Option<f64>,
) -> Result<ProblemP1> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let reg = Regularizer::l1_box(lambda / n_agents.max(1) as f64, box_bound)?;
    let agents = partition_rows(a, response, n_agents)?
        .into_iter()
        .map(|(ai, bi)| {
            let loss: Loss = match kind {
                LossKind::Logistic => {
                    let margin = box_bound
                        .or(domain_bound)
                        .map_or(f64::INFINITY, |bound| bound * max_row_l1(&ai));
                    LogisticLoss::new(bi, margin)?.into()
                }
                LossKind::Quadratic => QuadraticLoss::new(bi).into(),
            };
            AgentObjective::new(a.ncols(), Some(SmoothTerm::new(ai, loss)?), reg.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemP1::new(agents)
}

/// Column-partitioned sparse logistic regression
/// `min Σ_m log(1 + exp(−b_m z_m)) + λ Σ_i ‖x_i‖₁` s.t. `|x_ij| ≤ a`,
/// `z = Σ_i E_i x_i`.
#[derive(Debug, Clone)]
pub struct CpdLogistic {
    blocks: Vec<Array2<f64>>,
    labels: Array1<f64>,
    lambda: f64,
    box_bound: f64,
}

impl CpdLogistic {
    pub fn new(blocks: Vec<Array2<f64>>, labels: Array1<f64>, lambda: f64, box_bound: f64) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("need at least one column block".into()));
        }
        if let Some(i) = blocks.iter().position(|e| e.nrows() != labels.len()) {
            return Err(Error::Shape(format!(
                "column block {i} has {} rows, there are {} labels",
                blocks[i].nrows(),
                labels.len()
            )));
        }
        if !(lambda >= 0.0) || !(box_bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lambda >= 0 and box bound > 0, got {lambda} and {box_bound}"
            )));
        }
        // validate labels early
        LogisticLoss::new(labels.clone(), 0.0)?;
        Ok(Self {
            blocks,
            labels,
            lambda,
            box_bound,
        })
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn pooled_matrix(&self) -> Array2<f64> {
        let views: Vec<_> = self.blocks.iter().map(|e| e.view()).collect();
        concatenate(Axis(1), &views).expect("blocks share row count")
    }

    fn loss(&self) -> Result<LogisticLoss> {
        let margin = self.box_bound * max_row_l1(&self.pooled_matrix());
        LogisticLoss::new(self.labels.clone(), margin)
    }

    fn block_reg(&self) -> Result<Regularizer> {
        Regularizer::l1_box(self.lambda, Some(self.box_bound))
    }

    /// The coupled form: agents `1..N` own `x_i` with `φ_i = g_i` and
    /// coupling `E_i`; agent 0 owns the augmented `[x_0; z]` with the
    /// logistic loss on `z` and coupling `[E_0 | −I]`; `q = 0`.
    pub fn to_p2(&self) -> Result<ProblemP2> {
        let m = self.labels.len();
        let reg = self.block_reg()?;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, e) in self.blocks.iter().enumerate() {
            let k = e.ncols();
            if i == 0 {
                let mut smooth = Array2::zeros((m, k + m));
                smooth.slice_mut(s![.., k..]).assign(&Array2::eye(m));
                let mut coupling = Array2::zeros((m, k + m));
                coupling.slice_mut(s![.., ..k]).assign(e);
                coupling.slice_mut(s![.., k..]).assign(&(-Array2::<f64>::eye(m)));
                let obj = AgentObjective::new(
                    k + m,
                    Some(SmoothTerm::new(smooth, self.loss()?.into())?),
                    Regularizer::Blocks(vec![(k, reg.clone()), (m, Regularizer::Zero)]),
                )?;
                out.push(P2Block::new(obj, coupling)?);
            } else {
                let obj = AgentObjective::new(k, None, reg.clone())?;
                out.push(P2Block::new(obj, e.clone())?);
            }
        }
        ProblemP2::new(out, Array1::zeros(m))
    }

    /// The same problem as a single-agent P1 over the stacked `x`.
    pub fn pooled_p1(&self) -> Result<ProblemP1> {
        let e = self.pooled_matrix();
        let dim = e.ncols();
        let term = SmoothTerm::new(e, self.loss()?.into())?;
        ProblemP1::new(vec![AgentObjective::new(dim, Some(term), self.block_reg()?)?])
    }

    /// Direct objective of the reformulated problem at `(x, z)`.
    pub fn objective(&self, x: &[Array1<f64>], z: &Array1<f64>) -> f64 {
        use super::SmoothLoss;
        let reg = self.block_reg().expect("validated in new");
        let loss = LogisticLoss::new(self.labels.clone(), 0.0).expect("validated in new");
        loss.value(z.view()) + x.iter().map(|xi| reg.value(xi.view())).sum::<f64>()
    }

    /// Split a stacked pooled iterate into per-agent P2 variables, appending
    /// `z = Σ E_i x_i` to agent 0's block.
    pub fn lift(&self, stacked: &Array1<f64>) -> Vec<Array1<f64>> {
        let mut offset = 0;
        let mut z = Array1::zeros(self.labels.len());
        let mut parts: Vec<Array1<f64>> = self
            .blocks
            .iter()
            .map(|e| {
                let xi = stacked.slice(s![offset..offset + e.ncols()]).to_owned();
                offset += e.ncols();
                z += &e.dot(&xi);
                xi
            })
            .collect();
        parts[0] = concatenate![Axis(0), parts[0], z];
        parts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::SmoothLoss;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_row_split() {
        let a = Array2::eye(4).slice(s![.., ..2]).to_owned();
        let b = array![0.0, 1.0, 2.0, 3.0];
        let parts = partition_rows(&a, &b, 2).unwrap();
        assert_eq!(parts[0].0, a.slice(s![0..2, ..]));
        assert_eq!(parts[1].0, a.slice(s![2..4, ..]));
        assert_eq!(parts[1].1, array![2.0, 3.0]);
    }

    #[test]
    fn partitions_reassemble_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 12, 5);
        let b = Array1::from_shape_fn(12, |i| i as f64);
        let parts = partition_rows(&a, &b, 3).unwrap();
        assert!(parts.iter().all(|(ai, bi)| ai.dim() == (4, 5) && bi.len() == 4));
        let views: Vec<_> = parts.iter().map(|(ai, _)| ai.view()).collect();
        assert_eq!(concatenate(Axis(0), &views).unwrap(), a);

        let e = random_matrix(&mut rng, 4, 9);
        let cols = partition_columns(&e, 3).unwrap();
        assert!(cols.iter().all(|c| c.dim() == (4, 3)));
        let views: Vec<_> = cols.iter().map(|c| c.view()).collect();
        assert_eq!(concatenate(Axis(1), &views).unwrap(), e);
    }

    #[test]
    fn identity_column_split() {
        let e = Array2::<f64>::eye(4);
        let cols = partition_columns(&e, 2).unwrap();
        assert_eq!(cols[0], e.slice(s![.., 0..2]));
        assert_eq!(cols[1], e.slice(s![.., 2..4]));
    }

    #[test]
    fn indivisible_splits_fail() {
        let a = Array2::zeros((5, 2));
        assert!(partition_rows(&a, &Array1::zeros(5), 2).is_err());
        assert!(partition_columns(&Array2::zeros((2, 5)), 3).is_err());
        assert!(partition_rows(&a, &Array1::zeros(4), 1).is_err());
    }

    #[test]
    fn rpd_regularizer_weight_is_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 6, 3);
        let b = array![1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let p = build_rpd_p1(&a, &b, 3, LossKind::Logistic, 0.3, Some(1.0), None).unwrap();
        assert_eq!(p.n_agents(), 3);
        assert_eq!(*p.agents()[0].reg(), Regularizer::L1Box { weight: 0.3 / 3.0, bound: 1.0 });
        // margin bound is the box times the largest local row l1 norm
        let a0 = a.slice(s![0..2, ..]).to_owned();
        let expect = LogisticLoss::new(array![1.0, -1.0], max_row_l1(&a0)).unwrap();
        let got = p.agents()[0].smooth().unwrap().loss().strong_convexity();
        assert_eq!(got, expect.strong_convexity());
    }

    #[test]
    fn cpd_zero_data() {
        let blocks = vec![Array2::zeros((2, 1)), Array2::zeros((2, 1))];
        let cpd = CpdLogistic::new(blocks, array![1.0, -1.0], 0.1, 1.0).unwrap();
        let p2 = cpd.to_p2().unwrap();
        let x = vec![Array1::zeros(3), Array1::zeros(1)];
        assert!((p2.objective(&x) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(p2.constraint_residual(&x).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn cpd_residual_and_objective_match_direct_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 4, 2)).collect();
        let labels = array![1.0, -1.0, -1.0, 1.0];
        let cpd = CpdLogistic::new(blocks.clone(), labels, 0.2, 2.0).unwrap();
        let p2 = cpd.to_p2().unwrap();
        let xs: Vec<Array1<f64>> = (0..3).map(|_| Array1::from_shape_fn(2, |_| rng.random_range(-2.0..2.0))).collect();
        let z = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let mut vars = xs.clone();
        vars[0] = concatenate![Axis(0), xs[0], z];
        let direct: Array1<f64> = blocks.iter().zip(&xs).map(|(e, x)| e.dot(x)).fold(-&z, |acc, v| acc + v);
        assert!((p2.constraint_residual(&vars) - direct).iter().all(|r| r.abs() < 1e-14));

        // feasible point: z = Σ E_i x_i
        let stacked = concatenate(Axis(0), &xs.iter().map(|x| x.view()).collect::<Vec<_>>()).unwrap();
        let lifted = cpd.lift(&stacked);
        assert!(p2.constraint_residual(&lifted).iter().all(|r| r.abs() < 1e-14));
        let zf = lifted[0].slice(s![2..]).to_owned();
        let direct_obj = cpd.objective(&xs, &zf);
        assert!((p2.objective(&lifted) - direct_obj).abs() <= 1e-12 * direct_obj.abs());
        let pooled = cpd.pooled_p1().unwrap();
        assert!((pooled.objective(stacked.view()) - direct_obj).abs() <= 1e-12 * direct_obj.abs());
    }

    #[test]
    fn cpd_shape_mismatch() {
        let blocks = vec![Array2::zeros((3, 1)), Array2::zeros((2, 1))];
        assert!(CpdLogistic::new(blocks, array![1.0, -1.0], 0.1, 1.0).is_err());
    }
}
