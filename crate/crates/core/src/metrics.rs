//! Convergence measurements, per-round records and the CSV trace format.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array1;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    CAdmm,
    IcAdmm,
    DcAdmm,
    IdcAdmm,
    Subgradient,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::CAdmm,
        Algorithm::IcAdmm,
        Algorithm::DcAdmm,
        Algorithm::IdcAdmm,
        Algorithm::Subgradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CAdmm => "c-admm",
            Algorithm::IcAdmm => "ic-admm",
            Algorithm::DcAdmm => "dc-admm",
            Algorithm::IdcAdmm => "idc-admm",
            Algorithm::Subgradient => "subgrad",
        }
    }

    /// Solves the subproblem with an inner loop.
    pub fn is_exact(self) -> bool {
        matches!(self, Algorithm::CAdmm | Algorithm::DcAdmm)
    }

    pub fn is_dual(self) -> bool {
        matches!(self, Algorithm::DcAdmm | Algorithm::IdcAdmm)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub value: f64,
    /// `obj* = 0`, so `value` is the absolute gap.
    pub absolute: bool,
}

/// `(obj(ŷ) − obj*)/obj*`, or the absolute gap when `obj* = 0`.
pub fn accuracy(obj_at_mean: f64, obj_star: f64) -> Accuracy {
    if obj_star == 0.0 {
        Accuracy {
            value: obj_at_mean,
            absolute: true,
        }
    } else {
        Accuracy {
            value: (obj_at_mean - obj_star) / obj_star,
            absolute: false,
        }
    }
}

pub fn mean(y: &[Array1<f64>]) -> Array1<f64> {
    let mut m = y[0].clone();
    for yi in &y[1..] {
        m += yi;
    }
    m / y.len() as f64
}

/// `Σ_i ‖ŷ − y_i‖² / N` with `ŷ` the agent mean.
pub fn consensus_error(y: &[Array1<f64>]) -> f64 {
    let m = mean(y);
    y.iter()
        .map(|yi| {
            let d = &m - yi;
            d.dot(&d)
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Multiplication count of one agent-round: `K + ℓ(2MK + 2K)` for the exact
/// methods, `K + 2MK + 2K` for the single-step ones.
pub fn flop_estimate(algorithm: Algorithm, m: usize, k: usize, inner_iterations: usize) -> u64 {
    let (m, k) = (m as u64, k as u64);
    let step = 2 * m * k + 2 * k;
    if algorithm.is_exact() {
        k + inner_iterations as u64 * step
    } else {
        k + step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log e_k` against `k` over the trailing
/// `tail_fraction` of the sequence; `rate = exp(slope)`.
pub fn linear_rate_fit(errors: &[f64], tail_fraction: f64) -> Result<RateFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction must lie in (0, 1], got {tail_fraction}")));
    }
    if let Some(i) = errors.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument(format!("error {i} is {}, must be positive", errors[i])));
    }
    let n = ((errors.len() as f64 * tail_fraction).ceil() as usize).min(errors.len());
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points in the tail".into()));
    }
    let start = errors.len() - n;
    let xs: Vec<f64> = (start..errors.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = errors[start..].iter().map(|e| e.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (my + slope * (x - mx))).powi(2))
        .sum();
    let r_squared = if syy <= f64::EPSILON * nf * my.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(RateFit {
        rate: slope.exp(),
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub objective: f64,
    pub acc: f64,
    pub cserr: Option<f64>,
    pub feasibility: Option<f64>,
    pub dual_consensus: Option<f64>,
    pub inner_iterations: Option<u64>,
    pub cumulative_flops: u64,
    pub wall_time_s: f64,
    /// `sqrt(Σ_i ‖y_i − y*‖²)`; kept in memory only.
    pub distance_to_reference: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetsMet,
    MaxOuter,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::TargetsMet => "targets-met",
            StopReason::MaxOuter => "max-outer",
        })
    }
}

/// Largest violations of the structural identities seen over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InvariantReport {
    /// `‖Σ_i p_i‖ / (Σ_i ‖p_i‖ + 1)`.
    pub dual_sum: f64,
    /// Feasibility identity residual (dual methods).
    pub feasibility_identity: f64,
    /// Largest per-agent stationarity residual divided by the inner
    /// tolerance (exact dual method).
    pub stationarity_over_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub seed: Option<u64>,
    pub config: Vec<(String, String)>,
    pub records: Vec<IterationRecord>,
    pub acc_absolute: bool,
    /// `(β_i, β_min,i)` per agent for the inexact methods.
    pub beta: Vec<(f64, f64)>,
    pub invariants: InvariantReport,
    pub stop: StopReason,
}

pub const CSV_HEADER: [&str; 9] = [
    "k",
    "objective",
    "acc",
    "cserr",
    "feasibility",
    "dual_consensus",
    "inner_iterations",
    "cumulative_flops",
    "wall_time_s",
];

fn opt_float(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl Trace {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            seed: None,
            config: Vec::new(),
            records: Vec::new(),
            acc_absolute: false,
            beta: Vec::new(),
            invariants: InvariantReport::default(),
            stop: StopReason::MaxOuter,
        }
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace is non-empty after a run")
    }

    /// Number of outer rounds run (the `k` of the last record).
    pub fn rounds(&self) -> usize {
        self.last().k
    }

    pub fn total_flops(&self) -> u64 {
        self.last().cumulative_flops
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.acc),
                opt_float(r.cserr),
                opt_float(r.feasibility),
                opt_float(r.dual_consensus),
                r.inner_iterations.map(|n| n.to_string()).unwrap_or_default(),
                r.cumulative_flops.to_string(),
                format!("{:e}", r.wall_time_s),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
