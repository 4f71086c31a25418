use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};

/// Smooth convex loss `f : ℝᴹ → ℝ` with the constants the step-size
/// conditions need.
pub trait SmoothLoss {
    fn dim(&self) -> usize;
    fn value(&self, u: ArrayView1<f64>) -> f64;
    fn gradient(&self, u: ArrayView1<f64>) -> Array1<f64>;
    /// Lipschitz constant `L_f` of the gradient.
    fn lipschitz_grad(&self) -> f64;
    /// Strong-convexity modulus `σ²_f`, possibly only valid on a declared
    /// bounded domain.
    fn strong_convexity(&self) -> f64;
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ_m log(1 + exp(−b_m u_m))` for labels `b_m ∈ {−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLoss {
    labels: Array1<f64>,
    margin_bound: f64,
}

impl LogisticLoss {
    /// `margin_bound` is a bound `U` on `|u_m|` over the feasible domain; the
    /// curvature `s(U)(1 − s(U))` there is the certified strong-convexity
    /// modulus. Pass `f64::INFINITY` when no bound is known (σ² is then 0).
    pub fn new(labels: Array1<f64>, margin_bound: f64) -> Result<Self> {
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &b)| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidLabel { index, value });
        }
        if margin_bound.is_nan() || margin_bound < 0.0 {
            return Err(Error::InvalidArgument(format!("margin bound must be nonnegative, got {margin_bound}")));
        }
        Ok(Self { labels, margin_bound })
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn margin_bound(&self) -> f64 {
        self.margin_bound
    }
}

impl SmoothLoss for LogisticLoss {
    fn dim(&self) -> usize {
        self.labels.len()
    }

    fn value(&self, u: ArrayView1<f64>) -> f64 {
        Zip::from(&self.labels).and(&u).fold(0.0, |acc, &b, &x| acc + softplus(-b * x))
    }

    fn gradient(&self, u: ArrayView1<f64>) -> Array1<f64> {
        Zip::from(&self.labels).and(&u).map_collect(|&b, &x| -b * sigmoid(-b * x))
    }

    fn lipschitz_grad(&self) -> f64 {
        0.25
    }

    fn strong_convexity(&self) -> f64 {
        // s(U)(1 - s(U)) = e^{-U} / (1 + e^{-U})^2
        let e = (-self.margin_bound).exp();
        e / ((1.0 + e) * (1.0 + e))
    }
}

/// `‖b − u‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    target: Array1<f64>,
}

impl QuadraticLoss {
    pub fn new(target: Array1<f64>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }
}

impl SmoothLoss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, u: ArrayView1<f64>) -> f64 {
        Zip::from(&self.target).and(&u).fold(0.0, |acc, &b, &x| acc + (b - x) * (b - x))
    }

    fn gradient(&self, u: ArrayView1<f64>) -> Array1<f64> {
        Zip::from(&self.target).and(&u).map_collect(|&b, &x| 2.0 * (x - b))
    }

    fn lipschitz_grad(&self) -> f64 {
        2.0
    }

    fn strong_convexity(&self) -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    Logistic(LogisticLoss),
    Quadratic(QuadraticLoss),
}

impl SmoothLoss for Loss {
    fn dim(&self) -> usize {
        match self {
            Loss::Logistic(l) => l.dim(),
            Loss::Quadratic(l) => l.dim(),
        }
    }

    fn value(&self, u: ArrayView1<f64>) -> f64 {
        match self {
            Loss::Logistic(l) => l.value(u),
            Loss::Quadratic(l) => l.value(u),
        }
    }

    fn gradient(&self, u: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Loss::Logistic(l) => l.gradient(u),
            Loss::Quadratic(l) => l.gradient(u),
        }
    }

    fn lipschitz_grad(&self) -> f64 {
        match self {
            Loss::Logistic(l) => l.lipschitz_grad(),
            Loss::Quadratic(l) => l.lipschitz_grad(),
        }
    }

    fn strong_convexity(&self) -> f64 {
        match self {
            Loss::Logistic(l) => l.strong_convexity(),
            Loss::Quadratic(l) => l.strong_convexity(),
        }
    }
}

impl From<LogisticLoss> for Loss {
    fn from(l: LogisticLoss) -> Self {
        Loss::Logistic(l)
    }
}

impl From<QuadraticLoss> for Loss {
    fn from(l: QuadraticLoss) -> Self {
        Loss::Quadratic(l)
    }
}
