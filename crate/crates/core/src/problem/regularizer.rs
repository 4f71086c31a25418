use ndarray::{s, Array1, ArrayView1, Zip};

use crate::error::{Error, Result};

/// Componentwise `sign(s_j) · max(|s_j| − t, 0)`.
pub fn soft_threshold(s: ArrayView1<f64>, threshold: f64) -> Array1<f64> {
    s.mapv(|v| shrink(v, threshold))
}

fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximity operator of `l1_weight‖y‖₁ + 𝟙{|y_j| ≤ bound}` at parameter
/// `gamma`: shrink by `l1_weight / gamma`, then clip to the box. The two
/// compose exactly because both act coordinatewise and the clip commutes with
/// the sign.
pub fn prox_l1_box(s: ArrayView1<f64>, l1_weight: f64, bound: f64, gamma: f64) -> Array1<f64> {
    let t = l1_weight / gamma;
    s.mapv(|v| shrink(v, t).clamp(-bound, bound))
}

/// Separable non-smooth term `g`. Only the pieces whose proximity operator is
/// exact in closed form are representable.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    L1 { weight: f64 },
    Box { bound: f64 },
    L1Box { weight: f64, bound: f64 },
    /// Direct sum of regularizers over consecutive coordinate blocks.
    Blocks(Vec<(usize, Regularizer)>),
}

impl Regularizer {
    /// `λ‖·‖₁` plus an optional box, normalised to the narrowest variant.
    pub fn l1_box(weight: f64, bound: Option<f64>) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::InvalidArgument(format!("l1 weight must be nonnegative, got {weight}")));
        }
        if let Some(b) = bound {
            if !(b > 0.0) {
                return Err(Error::InvalidArgument(format!("box bound must be positive, got {b}")));
            }
        }
        Ok(match (weight > 0.0, bound) {
            (false, None) => Regularizer::Zero,
            (true, None) => Regularizer::L1 { weight },
            (false, Some(bound)) => Regularizer::Box { bound },
            (true, Some(bound)) => Regularizer::L1Box { weight, bound },
        })
    }

    fn weight_and_bound(&self) -> Option<(f64, f64)> {
        match *self {
            Regularizer::Zero => Some((0.0, f64::INFINITY)),
            Regularizer::L1 { weight } => Some((weight, f64::INFINITY)),
            Regularizer::Box { bound } => Some((0.0, bound)),
            Regularizer::L1Box { weight, bound } => Some((weight, bound)),
            Regularizer::Blocks(_) => None,
        }
    }

    pub fn box_bound(&self) -> Option<f64> {
        self.weight_and_bound().map(|(_, b)| b).filter(|b| b.is_finite())
    }

    /// `Σ_i g_i` for coordinatewise-identical pieces: weights add, boxes
    /// intersect.
    pub fn sum(parts: &[Regularizer]) -> Result<Self> {
        let mut weight = 0.0;
        let mut bound = f64::INFINITY;
        for part in parts {
            let (w, b) = part
                .weight_and_bound()
                .ok_or_else(|| Error::InvalidArgument("cannot pool block-structured regularizers".into()))?;
            weight += w;
            bound = bound.min(b);
        }
        Self::l1_box(weight, bound.is_finite().then_some(bound))
    }

    fn check_blocks(blocks: &[(usize, Regularizer)], dim: usize) {
        let total: usize = blocks.iter().map(|(len, _)| len).sum();
        assert_eq!(total, dim, "block regularizer covers {total} coordinates, vector has {dim}");
    }

    /// `g(y)`, `+∞` outside the box.
    pub fn value(&self, y: ArrayView1<f64>) -> f64 {
        if let Regularizer::Blocks(blocks) = self {
            Self::check_blocks(blocks, y.len());
            let mut start = 0;
            return blocks
                .iter()
                .map(|(len, reg)| {
                    let v = reg.value(y.slice(s![start..start + len]));
                    start += len;
                    v
                })
                .sum();
        }
        let (weight, bound) = self.weight_and_bound().expect("non-block regularizer");
        if y.iter().any(|v| v.abs() > bound) {
            return f64::INFINITY;
        }
        weight * y.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// `argmin_y g(y) + (γ/2)‖y − s‖²`.
    pub fn prox(&self, s: ArrayView1<f64>, gamma: f64) -> Array1<f64> {
        match *self {
            Regularizer::Zero => s.to_owned(),
            Regularizer::L1 { weight } => soft_threshold(s, weight / gamma),
            Regularizer::Box { bound } => s.mapv(|v| v.clamp(-bound, bound)),
            Regularizer::L1Box { weight, bound } => prox_l1_box(s, weight, bound, gamma),
            Regularizer::Blocks(ref blocks) => {
                Self::check_blocks(blocks, s.len());
                let mut out = Array1::zeros(s.len());
                let mut start = 0;
                for (len, reg) in blocks {
                    let range = start..start + len;
                    out.slice_mut(s![range.clone()]).assign(&reg.prox(s.slice(s![range]), gamma));
                    start += len;
                }
                out
            }
        }
    }

    /// Euclidean projection onto the domain of `g`.
    pub fn project(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.map_blocks(y, &|reg, y| {
            let (_, bound) = reg.weight_and_bound().expect("non-block regularizer");
            y.mapv(|v| v.clamp(-bound, bound))
        })
    }

    /// A subgradient of the finite part of `g` (the ℓ₁ term), taking 0 at the
    /// kink. The box is left to [`Regularizer::project`].
    pub fn subgradient(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.map_blocks(y, &|reg, y| {
            let (weight, _) = reg.weight_and_bound().expect("non-block regularizer");
            y.mapv(|v| if v == 0.0 { 0.0 } else { weight * v.signum() })
        })
    }

    /// Minimum-norm element of `r + ∂g(x)`, coordinatewise. `x` is expected
    /// to lie in the domain; points exactly on the box face pick up the
    /// normal cone.
    pub fn min_norm_residual(&self, x: ArrayView1<f64>, r: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), r.len());
        if let Regularizer::Blocks(blocks) = self {
            Self::check_blocks(blocks, x.len());
            let mut out = Array1::zeros(x.len());
            let mut start = 0;
            for (len, reg) in blocks {
                let range = start..start + len;
                let piece = reg.min_norm_residual(x.slice(s![range.clone()]), r.slice(s![range.clone()]));
                out.slice_mut(s![range]).assign(&piece);
                start += len;
            }
            return out;
        }
        let (w, bound) = self.weight_and_bound().expect("non-block regularizer");
        Zip::from(&x).and(&r).map_collect(|&xj, &rj| {
            if xj >= bound {
                (rj + w).max(0.0)
            } else if xj <= -bound {
                (rj - w).min(0.0)
            } else if xj == 0.0 {
                shrink(rj, w)
            } else {
                rj + w * xj.signum()
            }
        })
    }

    fn map_blocks(&self, y: ArrayView1<f64>, f: &dyn Fn(&Regularizer, ArrayView1<f64>) -> Array1<f64>) -> Array1<f64> {
        match self {
            Regularizer::Blocks(blocks) => {
                Self::check_blocks(blocks, y.len());
                let mut out = Array1::zeros(y.len());
                let mut start = 0;
                for (len, reg) in blocks {
                    let range = start..start + len;
                    out.slice_mut(s![range.clone()]).assign(&reg.map_blocks(y.slice(s![range]), f));
                    start += len;
                }
                out
            }
            reg => f(reg, y),
        }
    }
}
