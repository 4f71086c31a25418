//! Agent objectives `φ_i = f_i(A_i ·) + g_i(·)` and the two problem shapes:
//! shared-variable consensus (P1) and block variables coupled by a linear
//! constraint `Σ E_i x_i = q` (P2).

mod loss;
mod partition;
mod regularizer;
mod tuning;

pub use loss::{sigmoid, softplus, LogisticLoss, Loss, QuadraticLoss, SmoothLoss};
pub use partition::{build_rpd_p1, partition_columns, partition_rows, CpdLogistic, LossKind};
pub use regularizer::{prox_l1_box, soft_threshold, Regularizer};
pub use tuning::{auto_beta, beta_min_ic, beta_min_idc, BETA_FLOOR, BETA_MARGIN};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::lambda_max_gram;

/// `f(A y)` with the spectral constant `λ_max(AᵀA)` cached.
#[derive(Debug, Clone)]
pub struct SmoothTerm {
    matrix: Array2<f64>,
    loss: Loss,
    lambda_max_ata: f64,
}

impl SmoothTerm {
    pub fn new(matrix: Array2<f64>, loss: Loss) -> Result<Self> {
        if matrix.nrows() != loss.dim() {
            return Err(Error::Shape(format!(
                "smooth term matrix has {} rows but the loss acts on {} entries",
                matrix.nrows(),
                loss.dim()
            )));
        }
        let lambda_max_ata = lambda_max_gram(&matrix);
        Ok(Self {
            matrix,
            loss,
            lambda_max_ata,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn loss(&self) -> &Loss {
        &self.loss
    }

    pub fn lambda_max_ata(&self) -> f64 {
        self.lambda_max_ata
    }

    pub fn value(&self, y: ArrayView1<f64>) -> f64 {
        self.loss.value(self.matrix.dot(&y).view())
    }

    /// `Aᵀ ∇f(A y)`.
    pub fn gradient(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let u = self.matrix.dot(&y);
        self.matrix.t().dot(&self.loss.gradient(u.view()))
    }

    /// `L_f` of the loss alone.
    pub fn loss_lipschitz(&self) -> f64 {
        self.loss.lipschitz_grad()
    }

    /// Lipschitz constant of `y ↦ Aᵀ∇f(Ay)`.
    pub fn lipschitz(&self) -> f64 {
        self.loss.lipschitz_grad() * self.lambda_max_ata
    }

    /// `L²_f / σ²_f`.
    pub fn condition_ratio(&self) -> Result<f64> {
        let sigma2 = self.loss.strong_convexity();
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss strong-convexity modulus must be positive, got {sigma2:e}"
            )));
        }
        let l = self.loss.lipschitz_grad();
        Ok(l * l / sigma2)
    }
}

/// One agent's `φ_i`. The smooth part may be absent (`φ_i = g_i`).
#[derive(Debug, Clone)]
pub struct AgentObjective {
    dim: usize,
    smooth: Option<SmoothTerm>,
    reg: Regularizer,
}

impl AgentObjective {
    pub fn new(dim: usize, smooth: Option<SmoothTerm>, reg: Regularizer) -> Result<Self> {
        if let Some(term) = &smooth {
            if term.matrix.ncols() != dim {
                return Err(Error::Shape(format!(
                    "smooth term matrix has {} columns, agent variable has {dim}",
                    term.matrix.ncols()
                )));
            }
        }
        if let Regularizer::Blocks(blocks) = &reg {
            let covered: usize = blocks.iter().map(|(len, _)| len).sum();
            if covered != dim {
                return Err(Error::Shape(format!(
                    "block regularizer covers {covered} coordinates, agent variable has {dim}"
                )));
            }
        }
        Ok(Self { dim, smooth, reg })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smooth(&self) -> Option<&SmoothTerm> {
        self.smooth.as_ref()
    }

    pub fn reg(&self) -> &Regularizer {
        &self.reg
    }

    pub fn smooth_value(&self, y: ArrayView1<f64>) -> f64 {
        self.smooth.as_ref().map_or(0.0, |s| s.value(y))
    }

    pub fn smooth_gradient(&self, y: ArrayView1<f64>) -> Array1<f64> {
        match &self.smooth {
            Some(s) => s.gradient(y),
            None => Array1::zeros(self.dim),
        }
    }

    pub fn smooth_lipschitz(&self) -> f64 {
        self.smooth.as_ref().map_or(0.0, SmoothTerm::lipschitz)
    }

    pub fn value(&self, y: ArrayView1<f64>) -> f64 {
        self.smooth_value(y) + self.reg.value(y)
    }

    /// Minimum-norm element of `∇(f∘A)(y) + extra + ∂g(y)`.
    pub fn stationarity_residual(&self, y: ArrayView1<f64>, extra: ArrayView1<f64>) -> Array1<f64> {
        let r = self.smooth_gradient(y) + extra;
        self.reg.min_norm_residual(y, r.view())
    }
}

/// `min_y Σ_i φ_i(y)`.
#[derive(Debug, Clone)]
pub struct ProblemP1 {
    agents: Vec<AgentObjective>,
    dim: usize,
}

impl ProblemP1 {
    pub fn new(agents: Vec<AgentObjective>) -> Result<Self> {
        let dim = agents
            .first()
            .ok_or_else(|| Error::InvalidArgument("problem needs at least one agent".into()))?
            .dim();
        if let Some(i) = agents.iter().position(|a| a.dim() != dim) {
            return Err(Error::Shape(format!(
                "agent {i} has dimension {}, agent 0 has {dim}",
                agents[i].dim()
            )));
        }
        Ok(Self { agents, dim })
    }

    pub fn agents(&self) -> &[AgentObjective] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self, y: ArrayView1<f64>) -> f64 {
        self.agents.iter().map(|a| a.value(y)).sum()
    }
}

/// One block of a P2 instance: its objective and its column block `E_i` of
/// the coupling constraint.
#[derive(Debug, Clone)]
pub struct P2Block {
    objective: AgentObjective,
    coupling: Array2<f64>,
    lambda_max_ete: f64,
}

impl P2Block {
    pub fn new(objective: AgentObjective, coupling: Array2<f64>) -> Result<Self> {
        if coupling.ncols() != objective.dim() {
            return Err(Error::Shape(format!(
                "coupling block has {} columns, agent variable has {}",
                coupling.ncols(),
                objective.dim()
            )));
        }
        let lambda_max_ete = lambda_max_gram(&coupling);
        Ok(Self {
            objective,
            coupling,
            lambda_max_ete,
        })
    }

    pub fn objective(&self) -> &AgentObjective {
        &self.objective
    }

    pub fn coupling(&self) -> &Array2<f64> {
        &self.coupling
    }

    pub fn lambda_max_ete(&self) -> f64 {
        self.lambda_max_ete
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }
}

/// `min Σ_i φ_i(x_i)` subject to `Σ_i E_i x_i = q`.
#[derive(Debug, Clone)]
pub struct ProblemP2 {
    blocks: Vec<P2Block>,
    target: Array1<f64>,
}

impl ProblemP2 {
    pub fn new(blocks: Vec<P2Block>, target: Array1<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("problem needs at least one block".into()));
        }
        if let Some(i) = blocks.iter().position(|b| b.coupling.nrows() != target.len()) {
            return Err(Error::Shape(format!(
                "coupling block {i} has {} rows, constraint target has {}",
                blocks[i].coupling.nrows(),
                target.len()
            )));
        }
        Ok(Self { blocks, target })
    }

    pub fn blocks(&self) -> &[P2Block] {
        &self.blocks
    }

    pub fn n_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    /// Number of coupling constraints `M`.
    pub fn n_constraints(&self) -> usize {
        self.target.len()
    }

    pub fn objective(&self, x: &[Array1<f64>]) -> f64 {
        self.blocks.iter().zip(x).map(|(b, xi)| b.objective.value(xi.view())).sum()
    }

    /// `Σ_i E_i x_i − q`.
    pub fn constraint_residual(&self, x: &[Array1<f64>]) -> Array1<f64> {
        let mut r = -&self.target;
        for (b, xi) in self.blocks.iter().zip(x) {
            r += &b.coupling.dot(xi);
        }
        r
    }
}
