//! Consensus ADMM for a shared variable: the exact method with an inner
//! FISTA solve per round, and the inexact method with one proximal-gradient
//! step per round.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::inner::{fista_solve, metropolis_weights, subgradient_baseline_step, CompositeSubproblem, InnerConfig};
use crate::linalg::norm;
use crate::metrics::{
    accuracy, consensus_error, flop_estimate, mean, Algorithm, IterationRecord, StopReason, Trace,
};
use crate::problem::{beta_min_ic, ProblemP1};

/// Per-agent primal iterates and aggregated duals.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub y: Vec<Array1<f64>>,
    pub p: Vec<Array1<f64>>,
    pub k: usize,
}

impl ConsensusState {
    /// Every agent at `y0`, duals zero.
    pub fn uniform(n_agents: usize, y0: Array1<f64>) -> Self {
        let dim = y0.len();
        Self {
            y: vec![y0; n_agents],
            p: vec![Array1::zeros(dim); n_agents],
            k: 0,
        }
    }

    pub fn zeros(n_agents: usize, dim: usize) -> Self {
        Self::uniform(n_agents, Array1::zeros(dim))
    }

    /// `‖Σ_i p_i‖ / (Σ_i ‖p_i‖ + 1)`.
    pub fn dual_sum_residual(&self) -> f64 {
        dual_sum_residual(&self.p)
    }
}

pub(crate) fn dual_sum_residual(p: &[Array1<f64>]) -> f64 {
    let mut sum = Array1::zeros(p[0].len());
    let mut scale = 1.0;
    for pi in p {
        sum += pi;
        scale += norm(pi.view());
    }
    norm(sum.view()) / scale
}

#[derive(Debug, Clone)]
pub struct ConsensusConfig {
    pub c: f64,
    /// `β_i`, inexact method only.
    pub beta: Vec<f64>,
    /// Inner solve settings, exact method only.
    pub inner: InnerConfig,
    /// Start each inner solve at the agent's previous iterate instead of 0.
    pub inner_warm_start: bool,
    pub max_outer: usize,
    pub acc_target: f64,
    pub cserr_target: f64,
}

impl ConsensusConfig {
    pub fn validate(&self, n_agents: usize, variant: Algorithm) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("penalty c must be positive, got {}", self.c)));
        }
        if variant == Algorithm::IcAdmm {
            if self.beta.len() != n_agents {
                return Err(Error::InvalidArgument(format!(
                    "{} beta values for {n_agents} agents",
                    self.beta.len()
                )));
            }
            if let Some(b) = self.beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
                return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {b}")));
            }
        }
        self.inner.validate()
    }

    /// `γ_i = β_i + 2c|N_i|`.
    pub fn gamma(&self, graph: &Graph, i: usize) -> f64 {
        self.beta[i] + 2.0 * self.c * graph.degree(i) as f64
    }
}

fn check_shapes(state: &ConsensusState, p1: &ProblemP1, graph: &Graph) -> Result<()> {
    let n = p1.n_agents();
    if graph.n_agents() != n || state.y.len() != n || state.p.len() != n {
        return Err(Error::Shape(format!(
            "graph has {} agents, problem {n}, state {}/{}",
            graph.n_agents(),
            state.y.len(),
            state.p.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| state.y[i].len() != p1.dim() || state.p[i].len() != p1.dim()) {
        return Err(Error::Shape(format!("agent {i} state does not match dimension {}", p1.dim())));
    }
    Ok(())
}

/// `p_i + c Σ_{j∈N_i} (y_i − y_j)` from the previous round.
fn dual_update(state: &ConsensusState, graph: &Graph, c: f64, i: usize) -> Array1<f64> {
    let mut p = state.p[i].clone();
    for &j in graph.neighbors(i) {
        p.scaled_add(c, &(&state.y[i] - &state.y[j]));
    }
    p
}

/// `Σ_{j∈N_i} (y_i + y_j)` from the previous round.
fn neighbor_sum(state: &ConsensusState, graph: &Graph, i: usize) -> Array1<f64> {
    let mut s = Array1::zeros(state.y[i].len());
    for &j in graph.neighbors(i) {
        s += &state.y[i];
        s += &state.y[j];
    }
    s
}

/// Result of one bulk-synchronous round.
#[derive(Debug, Clone)]
pub struct RoundOutput<S> {
    pub state: S,
    /// Inner iterations per agent (zeros for single-step methods).
    pub inner_iterations: Vec<usize>,
}

/// One exact round: dual update, then
/// `y_i = argmin f_i(A_i y) + g_i(y) + yᵀp_i + c Σ_j ‖y − (y_i + y_j)/2‖²`.
pub fn c_admm_round(
    state: &ConsensusState,
    p1: &ProblemP1,
    graph: &Graph,
    cfg: &ConsensusConfig,
) -> Result<RoundOutput<ConsensusState>> {
    check_shapes(state, p1, graph)?;
    let c = cfg.c;
    let per_agent: Vec<(Array1<f64>, Array1<f64>, usize)> = (0..p1.n_agents())
        .into_par_iter()
        .map(|i| {
            let agent = &p1.agents()[i];
            let p = dual_update(state, graph, c, i);
            let s = neighbor_sum(state, graph, i);
            let d = graph.degree(i) as f64;
            let centers: Vec<Array1<f64>> = graph
                .neighbors(i)
                .iter()
                .map(|&j| (&state.y[i] + &state.y[j]) * 0.5)
                .collect();
            let sub = CompositeSubproblem::new(
                p1.dim(),
                |y: ArrayView1<f64>| {
                    let mut g = agent.smooth_gradient(y);
                    g += &p;
                    g.scaled_add(2.0 * c * d, &y);
                    g.scaled_add(-c, &s);
                    g
                },
                agent.reg(),
            )
            .with_value(|y: ArrayView1<f64>| {
                let penalty: f64 = centers
                    .iter()
                    .map(|m| {
                        let r = &y - m;
                        r.dot(&r)
                    })
                    .sum();
                agent.smooth_value(y) + y.dot(&p) + c * penalty
            })
            .with_lipschitz(agent.smooth_lipschitz() + 2.0 * c * d);
            let start = if cfg.inner_warm_start {
                state.y[i].clone()
            } else {
                agent.reg().project(Array1::zeros(p1.dim()).view())
            };
            let res = fista_solve(&sub, start.view(), &cfg.inner).map_err(|e| e.at_agent(i))?;
            drop(sub);
            if res.hit_budget {
                log::debug!("agent {i}: inner budget hit, pgr {:e}", res.final_pgr);
            }
            Ok((res.solution, p, res.iterations))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(state, per_agent))
}

fn assemble(
    state: &ConsensusState,
    per_agent: Vec<(Array1<f64>, Array1<f64>, usize)>,
) -> RoundOutput<ConsensusState> {
    let mut y = Vec::with_capacity(per_agent.len());
    let mut p = Vec::with_capacity(per_agent.len());
    let mut inner = Vec::with_capacity(per_agent.len());
    for (yi, pi, li) in per_agent {
        y.push(yi);
        p.push(pi);
        inner.push(li);
    }
    RoundOutput {
        state: ConsensusState { y, p, k: state.k + 1 },
        inner_iterations: inner,
    }
}

/// One inexact round: dual update, then
/// `y_i = prox_g^{γ_i}[(β_i y_i − A_iᵀ∇f_i(A_i y_i) − p_i + c Σ_j (y_i + y_j)) / γ_i]`.
pub fn ic_admm_round(
    state: &ConsensusState,
    p1: &ProblemP1,
    graph: &Graph,
    cfg: &ConsensusConfig,
) -> Result<RoundOutput<ConsensusState>> {
    check_shapes(state, p1, graph)?;
    if cfg.beta.len() != p1.n_agents() {
        return Err(Error::InvalidArgument(format!(
            "{} beta values for {} agents",
            cfg.beta.len(),
            p1.n_agents()
        )));
    }
    let c = cfg.c;
    let per_agent: Vec<(Array1<f64>, Array1<f64>, usize)> = (0..p1.n_agents())
        .into_par_iter()
        .map(|i| {
            let agent = &p1.agents()[i];
            let p = dual_update(state, graph, c, i);
            let yi = &state.y[i];
            let grad = agent.smooth_gradient(yi.view());
            if !grad.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    iteration: state.k + 1,
                    iterate_norm: norm(yi.view()),
                    iterate: yi.to_vec(),
                }
                .at_agent(i));
            }
            let gamma = cfg.gamma(graph, i);
            let mut s = yi * cfg.beta[i];
            s -= &grad;
            s -= &p;
            s.scaled_add(c, &neighbor_sum(state, graph, i));
            s /= gamma;
            Ok((agent.reg().prox(s.view(), gamma), p, 0))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(state, per_agent))
}

/// `(y*, obj*)` from the centralized solve.
#[derive(Debug, Clone)]
pub struct Reference {
    pub y_star: Array1<f64>,
    pub obj_star: f64,
}

/// Per-agent `(β_i, β_min,i)` for the inexact method; warns when the
/// threshold is not exceeded.
pub fn check_beta_ic(p1: &ProblemP1, graph: &Graph, cfg: &ConsensusConfig) -> Vec<(f64, f64)> {
    let lam_min = graph.spectrum().lambda_min_d_plus_w;
    p1.agents()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let bmin = match beta_min_ic(a, cfg.c, lam_min) {
                Ok(b) => b,
                Err(e) => {
                    log::warn!("agent {i}: cannot evaluate beta threshold: {e}");
                    f64::NAN
                }
            };
            if cfg.beta[i] <= bmin.max(0.0) {
                log::warn!(
                    "agent {i}: beta {:e} does not exceed threshold {:e}; convergence is not guaranteed",
                    cfg.beta[i],
                    bmin.max(0.0)
                );
            }
            (cfg.beta[i], bmin)
        })
        .collect()
}

/// Tracks the divergence baseline: the larger of the measure at rounds 0
/// and 1 (floored at 1e-12).
pub(crate) struct DivergenceGuard {
    measure: &'static str,
    baseline: f64,
}

impl DivergenceGuard {
    pub(crate) const FACTOR: f64 = 1e6;

    pub(crate) fn new(measure: &'static str, initial: f64) -> Self {
        Self {
            measure,
            baseline: initial.max(1e-12),
        }
    }

    pub(crate) fn check(&mut self, round: usize, value: f64) -> Result<()> {
        if round == 1 {
            self.baseline = self.baseline.max(value);
        }
        if !value.is_finite() || value > Self::FACTOR * self.baseline {
            return Err(Error::Divergence {
                round,
                measure: self.measure,
                value,
                baseline: self.baseline,
            });
        }
        Ok(())
    }
}

fn distance(y: &[Array1<f64>], y_star: &Array1<f64>) -> f64 {
    y.iter()
        .map(|yi| {
            let d = yi - y_star;
            d.dot(&d)
        })
        .sum::<f64>()
        .sqrt()
}

fn record(
    p1: &ProblemP1,
    reference: &Reference,
    y: &[Array1<f64>],
    k: usize,
    inner: Option<u64>,
    flops: u64,
    started: Instant,
) -> (IterationRecord, bool) {
    let y_mean = mean(y);
    let objective = p1.objective(y_mean.view());
    let acc = accuracy(objective, reference.obj_star);
    (
        IterationRecord {
            k,
            objective,
            acc: acc.value,
            cserr: Some(consensus_error(y)),
            feasibility: None,
            dual_consensus: None,
            inner_iterations: inner,
            cumulative_flops: flops,
            wall_time_s: started.elapsed().as_secs_f64(),
            distance_to_reference: Some(distance(y, &reference.y_star)),
        },
        acc.absolute,
    )
}

fn targets_met(r: &IterationRecord, cfg: &ConsensusConfig) -> bool {
    r.acc.abs() < cfg.acc_target && r.cserr.unwrap_or(f64::INFINITY) < cfg.cserr_target
}

/// Runs rounds from `start` until both `|acc|` and `cserr` are below their
/// targets or `max_outer` rounds have run.
pub fn run_consensus(
    variant: Algorithm,
    p1: &ProblemP1,
    graph: &Graph,
    cfg: &ConsensusConfig,
    reference: &Reference,
    start: ConsensusState,
) -> Result<Trace> {
    if variant.is_dual() {
        return Err(Error::InvalidArgument(format!("{variant} solves the coupled problem, not consensus")));
    }
    cfg.validate(p1.n_agents(), variant)?;
    check_shapes(&start, p1, graph)?;
    let started = Instant::now();
    let mut trace = Trace::new(variant);
    if variant == Algorithm::IcAdmm {
        trace.beta = check_beta_ic(p1, graph, cfg);
    }
    let weights = (variant == Algorithm::Subgradient).then(|| metropolis_weights(graph));
    let rows: Vec<usize> = p1
        .agents()
        .iter()
        .map(|a| a.smooth().map_or(0, |s| s.matrix().nrows()))
        .collect();

    let mut state = start;
    let (first, absolute) = record(
        p1,
        reference,
        &state.y,
        state.k,
        variant.is_exact().then_some(0),
        0,
        started,
    );
    trace.acc_absolute = absolute;
    let mut guard = DivergenceGuard::new("cserr", first.cserr.unwrap_or(0.0));
    let done = targets_met(&first, cfg);
    trace.records.push(first);
    if done {
        trace.stop = StopReason::TargetsMet;
        return Ok(trace);
    }
    let mut flops = 0u64;
    for _ in 0..cfg.max_outer {
        let (next, inner) = match variant {
            Algorithm::CAdmm => {
                let out = c_admm_round(&state, p1, graph, cfg)?;
                (out.state, out.inner_iterations)
            }
            Algorithm::IcAdmm => {
                let out = ic_admm_round(&state, p1, graph, cfg)?;
                (out.state, out.inner_iterations)
            }
            Algorithm::Subgradient => {
                let y = subgradient_baseline_step(
                    &state.y,
                    weights.as_ref().expect("built above"),
                    p1,
                    state.k + 1,
                )?;
                let n = y.len();
                (
                    ConsensusState {
                        y,
                        p: state.p,
                        k: state.k + 1,
                    },
                    vec![0; n],
                )
            }
            Algorithm::DcAdmm | Algorithm::IdcAdmm => unreachable!("rejected above"),
        };
        state = next;
        flops += inner
            .iter()
            .zip(&rows)
            .map(|(&l, &m)| flop_estimate(variant, m, p1.dim(), l))
            .sum::<u64>();
        trace.invariants.dual_sum = trace.invariants.dual_sum.max(state.dual_sum_residual());
        let inner_total = variant.is_exact().then(|| inner.iter().map(|&l| l as u64).sum());
        let (rec, _) = record(p1, reference, &state.y, state.k, inner_total, flops, started);
        guard.check(state.k, rec.cserr.unwrap_or(0.0))?;
        let done = targets_met(&rec, cfg);
        trace.records.push(rec);
        if done {
            trace.stop = StopReason::TargetsMet;
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{AgentObjective, QuadraticLoss, Regularizer, SmoothTerm};
    use ndarray::array;

    fn scalar_pair(t: [f64; 2]) -> ProblemP1 {
        let agents = t
            .iter()
            .map(|&ti| {
                let term = SmoothTerm::new(array![[1.0]], QuadraticLoss::new(array![ti]).into()).unwrap();
                AgentObjective::new(1, Some(term), Regularizer::Zero).unwrap()
            })
            .collect();
        ProblemP1::new(agents).unwrap()
    }

    fn config(c: f64) -> ConsensusConfig {
        ConsensusConfig {
            c,
            beta: vec![1.0, 1.0],
            inner: InnerConfig::new(1e-12, 100_000).unwrap(),
            inner_warm_start: true,
            max_outer: 10,
            acc_target: 1e-4,
            cserr_target: 1e-5,
        }
    }

    #[test]
    fn fixed_point_at_common_minimizer() {
        let p1 = scalar_pair([0.7, 0.7]);
        let g = Graph::complete(2).unwrap();
        let state = ConsensusState::uniform(2, array![0.7]);
        for out in [
            c_admm_round(&state, &p1, &g, &config(0.5)).unwrap(),
            ic_admm_round(&state, &p1, &g, &config(0.5)).unwrap(),
        ] {
            assert!(out.state.p.iter().all(|p| p[0] == 0.0));
            assert!(out.state.y.iter().all(|y| (y[0] - 0.7).abs() < 1e-10));
        }
    }

    #[test]
    fn exact_round_scalar_closed_form() {
        let t = [1.0, -2.0];
        let p1 = scalar_pair(t);
        let g = Graph::complete(2).unwrap();
        let c = 0.3;
        let mut state = ConsensusState::uniform(2, array![0.0]);
        state.y = vec![array![0.4], array![-0.1]];
        state.p = vec![array![0.2], array![-0.2]];
        let out = c_admm_round(&state, &p1, &g, &config(c)).unwrap();
        let (y1, y2) = (0.4, -0.1);
        let p = [0.2 + c * (y1 - y2), -0.2 + c * (y2 - y1)];
        for i in 0..2 {
            // 2(y − t) + p + 2c(y − (y1+y2)/2) = 0
            let closed = (2.0 * t[i] - p[i] + c * (y1 + y2)) / (2.0 + 2.0 * c);
            assert!((out.state.y[i][0] - closed).abs() < 1e-10, "agent {i}");
            assert!((out.state.p[i][0] - p[i]).abs() < 1e-15);
        }
        assert!(out.state.dual_sum_residual() < 1e-15);
    }

    #[test]
    fn inexact_first_round_is_a_gradient_step() {
        let p1 = scalar_pair([1.0, 3.0]);
        let g = Graph::complete(2).unwrap();
        let cfg = config(0.4);
        let y0 = 0.5;
        let out = ic_admm_round(&ConsensusState::uniform(2, array![y0]), &p1, &g, &cfg).unwrap();
        for (i, t) in [1.0, 3.0].into_iter().enumerate() {
            let gamma = cfg.gamma(&g, i);
            let expect = y0 - 2.0 * (y0 - t) / gamma;
            assert!((out.state.y[i][0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn config_checks() {
        let p1 = scalar_pair([0.0, 0.0]);
        let mut cfg = config(1.0);
        cfg.beta = vec![1.0];
        assert!(cfg.validate(2, Algorithm::IcAdmm).is_err());
        assert!(cfg.validate(2, Algorithm::CAdmm).is_ok());
        cfg.c = 0.0;
        assert!(cfg.validate(2, Algorithm::CAdmm).is_err());
        let g = Graph::complete(3).unwrap();
        assert!(c_admm_round(&ConsensusState::zeros(2, 1), &p1, &g, &config(1.0)).is_err());
    }

    #[test]
    fn divergence_guard() {
        let mut g = DivergenceGuard::new("cserr", 0.0);
        g.check(1, 1e-3).unwrap();
        g.check(2, 1e2).unwrap();
        assert!(matches!(g.check(3, 1e4), Err(Error::Divergence { round: 3, .. })));
        assert!(g.check(4, f64::NAN).is_err());
    }
}
