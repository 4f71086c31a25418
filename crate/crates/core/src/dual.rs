//! Dual consensus ADMM for block variables under `Σ_i E_i x_i = q`: each
//! agent keeps a primal block `x_i`, a local dual copy `ν_i` and an
//! aggregated multiplier `p_i`.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::consensus::{dual_sum_residual, DivergenceGuard, RoundOutput};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::inner::{fista_solve, CompositeSubproblem, InnerConfig};
use crate::linalg::norm;
use crate::metrics::{accuracy, flop_estimate, Algorithm, IterationRecord, StopReason, Trace};
use crate::problem::{beta_min_idc, P2Block, ProblemP2};

#[derive(Debug, Clone, PartialEq)]
pub struct DualConsensusState {
    pub x: Vec<Array1<f64>>,
    pub nu: Vec<Array1<f64>>,
    pub p: Vec<Array1<f64>>,
    pub k: usize,
}

impl DualConsensusState {
    /// `x_i = 0` projected onto the domain of `g_i`, `ν_i = p_i = 0`.
    pub fn zeros(p2: &ProblemP2) -> Self {
        let m = p2.n_constraints();
        let n = p2.n_agents();
        Self {
            x: p2
                .blocks()
                .iter()
                .map(|b| b.objective().reg().project(Array1::zeros(b.dim()).view()))
                .collect(),
            nu: vec![Array1::zeros(m); n],
            p: vec![Array1::zeros(m); n],
            k: 0,
        }
    }

    pub fn dual_sum_residual(&self) -> f64 {
        dual_sum_residual(&self.p)
    }
}

#[derive(Debug, Clone)]
pub struct DualConsensusConfig {
    pub c: f64,
    /// `β_i`, inexact method only.
    pub beta: Vec<f64>,
    /// Inner solve settings, exact method only.
    pub inner: InnerConfig,
    pub inner_warm_start: bool,
    pub max_outer: usize,
    pub acc_target: f64,
    pub feasibility_target: f64,
    pub dual_consensus_target: f64,
}

impl DualConsensusConfig {
    pub fn validate(&self, n_agents: usize, variant: Algorithm) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("penalty c must be positive, got {}", self.c)));
        }
        if variant == Algorithm::IdcAdmm {
            if self.beta.len() != n_agents {
                return Err(Error::InvalidArgument(format!(
                    "{} beta values for {n_agents} agents",
                    self.beta.len()
                )));
            }
            if let Some(b) = self.beta.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
                return Err(Error::InvalidArgument(format!("beta must be positive, got {b}")));
            }
        }
        self.inner.validate()
    }
}

fn check_shapes(state: &DualConsensusState, p2: &ProblemP2, graph: &Graph) -> Result<()> {
    let n = p2.n_agents();
    let m = p2.n_constraints();
    if graph.n_agents() != n || state.x.len() != n || state.nu.len() != n || state.p.len() != n {
        return Err(Error::Shape(format!(
            "graph has {} agents, problem {n}, state {}/{}/{}",
            graph.n_agents(),
            state.x.len(),
            state.nu.len(),
            state.p.len()
        )));
    }
    for (i, b) in p2.blocks().iter().enumerate() {
        if state.x[i].len() != b.dim() || state.nu[i].len() != m || state.p[i].len() != m {
            return Err(Error::Shape(format!("agent {i} state does not match the problem dimensions")));
        }
    }
    Ok(())
}

/// Per-agent quantities shared by the exact and inexact rounds.
struct Local<'a> {
    block: &'a P2Block,
    degree: f64,
    c: f64,
    /// `p_i^{(k)}`
    p: Array1<f64>,
    /// `Σ_j (ν_i + ν_j)` from the previous round.
    s: Array1<f64>,
    /// `q / N`
    q_share: Array1<f64>,
}

impl<'a> Local<'a> {
    fn new(state: &DualConsensusState, p2: &'a ProblemP2, graph: &Graph, c: f64, i: usize) -> Self {
        let mut p = state.p[i].clone();
        let mut s = Array1::zeros(p2.n_constraints());
        for &j in graph.neighbors(i) {
            p.scaled_add(c, &(&state.nu[i] - &state.nu[j]));
            s += &state.nu[i];
            s += &state.nu[j];
        }
        Self {
            block: &p2.blocks()[i],
            degree: graph.degree(i) as f64,
            c,
            p,
            s,
            q_share: p2.target() / p2.n_agents() as f64,
        }
    }

    /// `(1/c)(E x − q/N) − p/c + S`.
    fn w(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut w = (self.block.coupling().dot(&x) - &self.q_share) / self.c;
        w.scaled_add(-1.0 / self.c, &self.p);
        w += &self.s;
        w
    }

    /// `∇f∘A (x) + (1/(2d)) Eᵀ w(x)`.
    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = self.block.objective().smooth_gradient(x);
        g.scaled_add(1.0 / (2.0 * self.degree), &self.block.coupling().t().dot(&self.w(x)));
        g
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let w = self.w(x);
        self.block.objective().smooth_value(x) + self.c / (4.0 * self.degree) * w.dot(&w)
    }

    fn lipschitz(&self) -> f64 {
        self.block.objective().smooth_lipschitz() + self.block.lambda_max_ete() / (2.0 * self.degree * self.c)
    }

    /// `ν_i = w(x_i) / (2d)`.
    fn nu(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w(x) / (2.0 * self.degree)
    }
}

fn assemble(
    state: &DualConsensusState,
    per_agent: Vec<(Array1<f64>, Array1<f64>, Array1<f64>, usize)>,
) -> RoundOutput<DualConsensusState> {
    let n = per_agent.len();
    let mut next = DualConsensusState {
        x: Vec::with_capacity(n),
        nu: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        k: state.k + 1,
    };
    let mut inner = Vec::with_capacity(n);
    for (x, nu, p, l) in per_agent {
        next.x.push(x);
        next.nu.push(nu);
        next.p.push(p);
        inner.push(l);
    }
    RoundOutput {
        state: next,
        inner_iterations: inner,
    }
}

/// One exact round: dual update, the `x`-subproblem by FISTA, then the
/// closed-form `ν` update.
pub fn dc_admm_round(
    state: &DualConsensusState,
    p2: &ProblemP2,
    graph: &Graph,
    cfg: &DualConsensusConfig,
) -> Result<RoundOutput<DualConsensusState>> {
    check_shapes(state, p2, graph)?;
    let per_agent = (0..p2.n_agents())
        .into_par_iter()
        .map(|i| {
            let local = Local::new(state, p2, graph, cfg.c, i);
            let reg = local.block.objective().reg();
            let sub = CompositeSubproblem::new(local.block.dim(), |x| local.gradient(x), reg)
                .with_value(|x| local.value(x))
                .with_lipschitz(local.lipschitz());
            let start = if cfg.inner_warm_start {
                state.x[i].clone()
            } else {
                reg.project(Array1::zeros(local.block.dim()).view())
            };
            let res = fista_solve(&sub, start.view(), &cfg.inner).map_err(|e| e.at_agent(i))?;
            drop(sub);
            if res.hit_budget {
                log::debug!("agent {i}: inner budget hit, pgr {:e}", res.final_pgr);
            }
            let nu = local.nu(res.solution.view());
            Ok((res.solution, nu, local.p, res.iterations))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(state, per_agent))
}

/// One inexact round: dual update, a single linearized proximal step
/// `x_i = prox_g^{β_i}[x_i − (1/β_i)(∇f∘A(x_i) + (1/(2d))Eᵀw(x_i))]`, then the
/// closed-form `ν` update at the new `x_i`.
pub fn idc_admm_round(
    state: &DualConsensusState,
    p2: &ProblemP2,
    graph: &Graph,
    cfg: &DualConsensusConfig,
) -> Result<RoundOutput<DualConsensusState>> {
    check_shapes(state, p2, graph)?;
    if cfg.beta.len() != p2.n_agents() {
        return Err(Error::InvalidArgument(format!(
            "{} beta values for {} agents",
            cfg.beta.len(),
            p2.n_agents()
        )));
    }
    let per_agent = (0..p2.n_agents())
        .into_par_iter()
        .map(|i| {
            let local = Local::new(state, p2, graph, cfg.c, i);
            let x_prev = &state.x[i];
            let grad = local.gradient(x_prev.view());
            if !grad.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    iteration: state.k + 1,
                    iterate_norm: norm(x_prev.view()),
                    iterate: x_prev.to_vec(),
                }
                .at_agent(i));
            }
            let beta = cfg.beta[i];
            let s = x_prev - &(grad / beta);
            let x = local.block.objective().reg().prox(s.view(), beta);
            let nu = local.nu(x.view());
            Ok((x, nu, local.p, 0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(state, per_agent))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    /// `dist(0, ∂φ_i(x_i) + E_iᵀν_i)` per agent.
    pub stationarity: Vec<f64>,
    /// `‖Σ_i E_i x_i − q‖`.
    pub feasibility: f64,
    /// `Σ_i Σ_{j∈N_i} ‖ν_i − ν_j‖²`.
    pub dual_consensus: f64,
}

pub fn kkt_residuals(state: &DualConsensusState, p2: &ProblemP2, graph: &Graph) -> KktResiduals {
    let stationarity = p2
        .blocks()
        .iter()
        .zip(&state.x)
        .zip(&state.nu)
        .map(|((b, x), nu)| {
            let extra = b.coupling().t().dot(nu);
            norm(b.objective().stationarity_residual(x.view(), extra.view()).view())
        })
        .collect();
    KktResiduals {
        stationarity,
        feasibility: norm(p2.constraint_residual(&state.x).view()),
        dual_consensus: dual_consensus(&state.nu, graph),
    }
}

pub fn dual_consensus(nu: &[Array1<f64>], graph: &Graph) -> f64 {
    (0..nu.len())
        .flat_map(|i| graph.neighbors(i).iter().map(move |&j| (i, j)))
        .map(|(i, j)| {
            let d = &nu[i] - &nu[j];
            d.dot(&d)
        })
        .sum()
}

/// `‖(Σ_i E_i x_i^{(k)} − q) − c Σ_i Σ_{j∈N_i} (ν_i^{(k)} + ν_j^{(k)} − ν_i^{(k−1)} − ν_j^{(k−1)})‖`.
pub fn feasibility_identity_residual(
    prev: &DualConsensusState,
    next: &DualConsensusState,
    p2: &ProblemP2,
    graph: &Graph,
    c: f64,
) -> f64 {
    let mut rhs = Array1::zeros(p2.n_constraints());
    for i in 0..p2.n_agents() {
        for &j in graph.neighbors(i) {
            rhs += &next.nu[i];
            rhs += &next.nu[j];
            rhs -= &prev.nu[i];
            rhs -= &prev.nu[j];
        }
    }
    norm((p2.constraint_residual(&next.x) - rhs * c).view())
}

/// Per-agent `(β_i, β_min,i)`; warns when the threshold is not exceeded.
pub fn check_beta_idc(p2: &ProblemP2, graph: &Graph, cfg: &DualConsensusConfig) -> Vec<(f64, f64)> {
    p2.blocks()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let bmin = match beta_min_idc(b, cfg.c, graph.degree(i)) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("agent {i}: cannot evaluate beta threshold: {e}");
                    f64::NAN
                }
            };
            if cfg.beta[i] <= bmin {
                log::warn!(
                    "agent {i}: beta {:e} does not exceed threshold {bmin:e}; convergence is not guaranteed",
                    cfg.beta[i]
                );
            }
            (cfg.beta[i], bmin)
        })
        .collect()
}

fn record(
    p2: &ProblemP2,
    graph: &Graph,
    obj_star: f64,
    state: &DualConsensusState,
    inner: Option<u64>,
    flops: u64,
    started: Instant,
) -> (IterationRecord, bool) {
    let objective = p2.objective(&state.x);
    let acc = accuracy(objective, obj_star);
    (
        IterationRecord {
            k: state.k,
            objective,
            acc: acc.value,
            cserr: None,
            feasibility: Some(norm(p2.constraint_residual(&state.x).view())),
            dual_consensus: Some(dual_consensus(&state.nu, graph)),
            inner_iterations: inner,
            cumulative_flops: flops,
            wall_time_s: started.elapsed().as_secs_f64(),
            distance_to_reference: None,
        },
        acc.absolute,
    )
}

fn targets_met(r: &IterationRecord, cfg: &DualConsensusConfig) -> bool {
    r.acc.abs() < cfg.acc_target
        && r.feasibility.unwrap_or(f64::INFINITY) < cfg.feasibility_target
        && r.dual_consensus.unwrap_or(f64::INFINITY) < cfg.dual_consensus_target
}

/// Runs rounds until `|acc|`, feasibility and dual consensus are all below
/// their targets or `max_outer` rounds have run. The structural identities
/// are checked every round and their worst violations stored in the trace.
pub fn run_dual_consensus(
    variant: Algorithm,
    p2: &ProblemP2,
    graph: &Graph,
    cfg: &DualConsensusConfig,
    obj_star: f64,
    start: DualConsensusState,
) -> Result<Trace> {
    if !variant.is_dual() {
        return Err(Error::InvalidArgument(format!("{variant} does not solve the coupled problem")));
    }
    cfg.validate(p2.n_agents(), variant)?;
    check_shapes(&start, p2, graph)?;
    let started = Instant::now();
    let mut trace = Trace::new(variant);
    if variant == Algorithm::IdcAdmm {
        trace.beta = check_beta_idc(p2, graph, cfg);
    }
    let m = p2.n_constraints();

    let mut state = start;
    let (first, absolute) = record(p2, graph, obj_star, &state, variant.is_exact().then_some(0), 0, started);
    trace.acc_absolute = absolute;
    let mut guard = DivergenceGuard::new("feasibility", first.feasibility.unwrap_or(0.0));
    let done = targets_met(&first, cfg);
    trace.records.push(first);
    if done {
        trace.stop = StopReason::TargetsMet;
        return Ok(trace);
    }
    let mut flops = 0u64;
    for _ in 0..cfg.max_outer {
        let out = match variant {
            Algorithm::DcAdmm => dc_admm_round(&state, p2, graph, cfg)?,
            Algorithm::IdcAdmm => idc_admm_round(&state, p2, graph, cfg)?,
            _ => unreachable!("rejected above"),
        };
        flops += out
            .inner_iterations
            .iter()
            .zip(p2.blocks())
            .map(|(&l, b)| flop_estimate(variant, m, b.dim(), l))
            .sum::<u64>();
        let inv = &mut trace.invariants;
        inv.dual_sum = inv.dual_sum.max(out.state.dual_sum_residual());
        inv.feasibility_identity = inv
            .feasibility_identity
            .max(feasibility_identity_residual(&state, &out.state, p2, graph, cfg.c));
        if variant == Algorithm::DcAdmm {
            let kkt = kkt_residuals(&out.state, p2, graph);
            for (b, r) in p2.blocks().iter().zip(&kkt.stationarity) {
                let scale = cfg.inner.pgr_tolerance * (b.dim() as f64).sqrt();
                inv.stationarity_over_tolerance = inv.stationarity_over_tolerance.max(r / scale);
            }
        }
        state = out.state;
        let inner_total = variant
            .is_exact()
            .then(|| out.inner_iterations.iter().map(|&l| l as u64).sum());
        let (rec, _) = record(p2, graph, obj_star, &state, inner_total, flops, started);
        guard.check(state.k, rec.feasibility.unwrap_or(0.0))?;
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
    use ndarray::{array, Array2};

    /// Two scalar agents, `φ_i(x) = (x − t_i)²`, constraint `x_1 + x_2 = q`.
    fn scalar_pair(t: [f64; 2], q: f64) -> ProblemP2 {
        let blocks = t
            .iter()
            .map(|&ti| {
                let term = SmoothTerm::new(array![[1.0]], QuadraticLoss::new(array![ti]).into()).unwrap();
                let obj = AgentObjective::new(1, Some(term), Regularizer::Zero).unwrap();
                P2Block::new(obj, array![[1.0]]).unwrap()
            })
            .collect();
        ProblemP2::new(blocks, array![q]).unwrap()
    }

    fn config(c: f64) -> DualConsensusConfig {
        DualConsensusConfig {
            c,
            beta: vec![5.0, 5.0],
            inner: InnerConfig::new(1e-13, 100_000).unwrap(),
            inner_warm_start: true,
            max_outer: 10,
            acc_target: 1e-4,
            feasibility_target: 1e-4,
            dual_consensus_target: 1e-6,
        }
    }

    #[test]
    fn zero_data_fixed_point() {
        let obj = AgentObjective::new(2, None, Regularizer::L1 { weight: 1.0 }).unwrap();
        let blk = P2Block::new(obj, Array2::zeros((3, 2))).unwrap();
        let p2 = ProblemP2::new(vec![blk.clone(), blk], Array1::zeros(3)).unwrap();
        let g = Graph::complete(2).unwrap();
        let state = DualConsensusState::zeros(&p2);
        for out in [
            dc_admm_round(&state, &p2, &g, &config(1.0)).unwrap(),
            idc_admm_round(&state, &p2, &g, &config(1.0)).unwrap(),
        ] {
            assert_eq!(out.state.x, state.x);
            assert_eq!(out.state.nu, state.nu);
            assert_eq!(out.state.p, state.p);
        }
    }

    #[test]
    fn first_round_nu_collapse() {
        let p2 = scalar_pair([1.0, -0.5], 0.8);
        let g = Graph::complete(2).unwrap();
        let c = 0.7;
        let nu0 = 0.3;
        let mut state = DualConsensusState::zeros(&p2);
        state.nu = vec![array![nu0], array![nu0]];
        let out = dc_admm_round(&state, &p2, &g, &config(c)).unwrap();
        for i in 0..2 {
            let x = out.state.x[i][0];
            let expect = nu0 + (x - 0.4) / (2.0 * c);
            assert!((out.state.nu[i][0] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_round_scalar_closed_form() {
        // x-step: 2(x − t) + (1/2)·w(x) with w = (x − q/2)/c − p/c + S
        // ⇒ x = (2t − (1/2)(−q/(2c) − p/c + S)) / (2 + 1/(2c))
        let t = [1.0, -0.5];
        let q = 0.8;
        let p2 = scalar_pair(t, q);
        let g = Graph::complete(2).unwrap();
        let c = 0.7;
        let mut state = DualConsensusState::zeros(&p2);
        state.nu = vec![array![0.2], array![-0.1]];
        state.p = vec![array![0.05], array![-0.05]];
        let out = dc_admm_round(&state, &p2, &g, &config(c)).unwrap();
        let nus = [0.2, -0.1];
        let s = nus[0] + nus[1];
        for i in 0..2 {
            let p = state.p[i][0] + c * (nus[i] - nus[1 - i]);
            let x = (2.0 * t[i] - 0.5 * (-q / (2.0 * c) - p / c + s)) / (2.0 + 1.0 / (2.0 * c));
            let nu = 0.5 * (s - p / c + (x - q / 2.0) / c);
            assert!((out.state.x[i][0] - x).abs() < 1e-11, "agent {i}");
            assert!((out.state.nu[i][0] - nu).abs() < 1e-11);
            assert!((out.state.p[i][0] - p).abs() < 1e-15);
        }
    }

    #[test]
    fn inexact_rounds_match_transcription() {
        let t = [1.0, -0.5];
        let q = 0.8;
        let p2 = scalar_pair(t, q);
        let g = Graph::complete(2).unwrap();
        let cfg = config(0.6);
        let c = cfg.c;
        let mut state = DualConsensusState::zeros(&p2);
        let (mut x, mut nu, mut p) = ([0.0f64; 2], [0.0f64; 2], [0.0f64; 2]);
        for _ in 0..3 {
            let mut nx = [0.0; 2];
            let mut nn = [0.0; 2];
            let mut np = [0.0; 2];
            for i in 0..2 {
                let j = 1 - i;
                np[i] = p[i] + c * (nu[i] - nu[j]);
                let s = nu[i] + nu[j];
                let w = (x[i] - q / 2.0) / c - np[i] / c + s;
                nx[i] = x[i] - (2.0 * (x[i] - t[i])) / cfg.beta[i] - w / (2.0 * cfg.beta[i]);
                nn[i] = 0.5 * (s - np[i] / c + (nx[i] - q / 2.0) / c);
            }
            x = nx;
            nu = nn;
            p = np;
            state = idc_admm_round(&state, &p2, &g, &cfg).unwrap().state;
            for i in 0..2 {
                assert!((state.x[i][0] - x[i]).abs() < 1e-14);
                assert!((state.nu[i][0] - nu[i]).abs() < 1e-14);
                assert!((state.p[i][0] - p[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn saddle_point_residuals_vanish() {
        // min Σ (x_i − t_i)² s.t. x_1 + x_2 = q: x_i = t_i − ν/2, ν = t_1 + t_2 − q
        let t = [1.0, -0.5];
        let q = 0.8;
        let p2 = scalar_pair(t, q);
        let g = Graph::complete(2).unwrap();
        let nu = t[0] + t[1] - q;
        let x = [t[0] - nu / 2.0, t[1] - nu / 2.0];
        let state = DualConsensusState {
            x: vec![array![x[0]], array![x[1]]],
            nu: vec![array![nu], array![nu]],
            p: vec![array![0.0], array![0.0]],
            k: 0,
        };
        let r = kkt_residuals(&state, &p2, &g);
        assert!(r.stationarity.iter().all(|&s| s <= 1e-12));
        assert!(r.feasibility <= 1e-12);
        assert_eq!(r.dual_consensus, 0.0);
    }

    #[test]
    fn identity_holds_on_a_short_run() {
        let p2 = scalar_pair([1.0, -0.5], 0.8);
        let g = Graph::complete(2).unwrap();
        let cfg = config(0.6);
        let mut state = DualConsensusState::zeros(&p2);
        for _ in 0..20 {
            let next = idc_admm_round(&state, &p2, &g, &cfg).unwrap().state;
            assert!(feasibility_identity_residual(&state, &next, &p2, &g, cfg.c) < 1e-12);
            assert!(next.dual_sum_residual() < 1e-15);
            state = next;
        }
    }
}
