//! Lower bounds on the proximal weight β_i for the inexact methods.

use ndarray::Array2;

use super::{AgentObjective, P2Block};
use crate::error::{Error, Result};
use crate::linalg::power_iteration;

pub const BETA_MARGIN: f64 = 1.05;
pub const BETA_FLOOR: f64 = 1e-3;

fn check_penalty(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("penalty c must be positive, got {c}")))
    }
}

/// `(L²/σ²) λ_max(AᵀA) − c λ_min(D+W)`. The value may be negative; callers
/// choose β strictly above `max(0, ·)`.
pub fn beta_min_ic(agent: &AgentObjective, c: f64, lambda_min_dw: f64) -> Result<f64> {
    check_penalty(c)?;
    let smooth_part = match agent.smooth() {
        Some(term) => term.condition_ratio()? * term.lambda_max_ata(),
        None => 0.0,
    };
    Ok(smooth_part - c * lambda_min_dw)
}

/// `λ_max((L²/σ²) AᵀA + EᵀE / (2|N_i|c))`.
pub fn beta_min_idc(block: &P2Block, c: f64, degree: usize) -> Result<f64> {
    check_penalty(c)?;
    if degree == 0 {
        return Err(Error::InvalidArgument("agent degree must be at least 1".into()));
    }
    let matrix = idc_matrix(block, c, degree)?;
    Ok(power_iteration(matrix.nrows(), |v| matrix.dot(&v), 1e-10, 100_000))
}

pub(crate) fn idc_matrix(block: &P2Block, c: f64, degree: usize) -> Result<Array2<f64>> {
    let e = block.coupling();
    let mut m = e.t().dot(e) / (2.0 * degree as f64 * c);
    if let Some(term) = block.objective().smooth() {
        let a = term.matrix();
        m.scaled_add(term.condition_ratio()?, &a.t().dot(a));
    }
    Ok(m)
}

/// `margin · max(0, β_min) + floor`, strictly above the threshold.
pub fn auto_beta(beta_min: f64) -> f64 {
    BETA_MARGIN * beta_min.max(0.0) + BETA_FLOOR
}
