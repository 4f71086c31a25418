use admm_net::dual::{
    dc_admm_round, feasibility_identity_residual, idc_admm_round, DualConsensusConfig, DualConsensusState,
};
use admm_net::graph::Graph;
use admm_net::harness::{build_instance, reference_solution, run_on_instance, ExperimentSpec, Problem};
use admm_net::inner::InnerConfig;
use admm_net::metrics::{linear_rate_fit, Algorithm};
use admm_net::problem::{auto_beta, beta_min_idc, AgentObjective, P2Block, ProblemP2, QuadraticLoss, Regularizer, SmoothTerm};
use ndarray::{s, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const N: usize = 4;
const K: usize = 3;
const M: usize = 2;

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample::<f64, _>(StandardNormal))
}

/// `min Σ ‖A_i x_i − b_i‖²` s.t. `Σ E_i x_i = q` with tall `A_i` and wide `E_i`.
fn quadratic_p2(seed: u64) -> (ProblemP2, Vec<Array2<f64>>, Vec<Array1<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    let mut a_list = Vec::new();
    let mut b_list = Vec::new();
    for _ in 0..N {
        let a = gaussian(&mut rng, (6, K)) * 0.4;
        let b = gaussian(&mut rng, (6, 1)).column(0).to_owned();
        let e = gaussian(&mut rng, (M, K)) * 0.5;
        let term = SmoothTerm::new(a.clone(), QuadraticLoss::new(b.clone()).into()).unwrap();
        let objective = AgentObjective::new(K, Some(term), Regularizer::Zero).unwrap();
        blocks.push(P2Block::new(objective, e).unwrap());
        a_list.push(a);
        b_list.push(b);
    }
    let q = gaussian(&mut rng, (M, 1)).column(0).to_owned();
    (ProblemP2::new(blocks, q).unwrap(), a_list, b_list)
}

/// Dense solve with partial pivoting.
fn solve(mut m: Array2<f64>, mut rhs: Array1<f64>) -> Array1<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        for k in 0..n {
            m.swap([col, k], [pivot, k]);
        }
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[[row, k]] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[[row, row]];
    }
    x
}

/// KKT system `2AᵢᵀAᵢxᵢ + Eᵢᵀν = 2Aᵢᵀbᵢ`, `Σ Eᵢxᵢ = q`.
fn kkt_solution(p2: &ProblemP2, a: &[Array2<f64>], b: &[Array1<f64>]) -> Array1<f64> {
    let size = N * K + M;
    let mut m = Array2::zeros((size, size));
    let mut rhs = Array1::zeros(size);
    for i in 0..N {
        let e = p2.blocks()[i].coupling();
        let rows = i * K..(i + 1) * K;
        m.slice_mut(s![rows.clone(), rows.clone()]).assign(&(a[i].t().dot(&a[i]) * 2.0));
        m.slice_mut(s![rows.clone(), N * K..]).assign(&e.t());
        m.slice_mut(s![N * K.., rows.clone()]).assign(e);
        rhs.slice_mut(s![rows]).assign(&(a[i].t().dot(&b[i]) * 2.0));
    }
    rhs.slice_mut(s![N * K..]).assign(p2.target());
    solve(m, rhs).slice(s![..N * K]).to_owned()
}

fn stacked_distance(x: &[Array1<f64>], x_star: &Array1<f64>) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let d = xi - &x_star.slice(s![i * K..(i + 1) * K]);
            d.dot(&d)
        })
        .sum::<f64>()
        .sqrt()
}

fn dual_config(p2: &ProblemP2, graph: &Graph, c: f64) -> DualConsensusConfig {
    DualConsensusConfig {
        c,
        beta: p2
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| auto_beta(beta_min_idc(b, c, graph.degree(i)).unwrap()))
            .collect(),
        inner: InnerConfig::new(1e-11, 100_000).unwrap(),
        inner_warm_start: true,
        max_outer: 0,
        acc_target: 1e-4,
        feasibility_target: 1e-4,
        dual_consensus_target: 1e-6,
    }
}

#[test]
fn both_methods_converge_linearly_to_the_kkt_point() {
    let (p2, a, b) = quadratic_p2(21);
    let x_star = kkt_solution(&p2, &a, &b);
    let graph = Graph::cycle(N).unwrap();
    let cfg = dual_config(&p2, &graph, 0.5);
    for (name, rounds) in [("dc", 150), ("idc", 1500)] {
        let mut state = DualConsensusState::zeros(&p2);
        let mut errors = vec![stacked_distance(&state.x, &x_star)];
        for _ in 0..rounds {
            let next = if name == "dc" {
                dc_admm_round(&state, &p2, &graph, &cfg).unwrap().state
            } else {
                idc_admm_round(&state, &p2, &graph, &cfg).unwrap().state
            };
            assert!(feasibility_identity_residual(&state, &next, &p2, &graph, cfg.c) < 1e-8);
            state = next;
            errors.push(stacked_distance(&state.x, &x_star));
        }
        assert!(errors.last().unwrap() < &1e-3, "{name}: final error {:e}", errors.last().unwrap());
        // fit above the rounding floor
        let above: Vec<f64> = errors.iter().copied().take_while(|&e| e > 1e-10).collect();
        assert!(above.len() > 20, "{name}: only {} rounds above the floor", above.len());
        let fit = linear_rate_fit(&above, 0.5).unwrap();
        assert!(fit.rate < 1.0 && fit.r_squared >= 0.95, "{name}: {fit:?}");
    }
}

#[test]
fn rounds_are_pure_functions_of_the_snapshot() {
    let (p2, _, _) = quadratic_p2(22);
    let graph = Graph::complete(N).unwrap();
    let cfg = dual_config(&p2, &graph, 0.3);
    let mut state = DualConsensusState::zeros(&p2);
    for _ in 0..4 {
        state = dc_admm_round(&state, &p2, &graph, &cfg).unwrap().state;
    }
    assert_eq!(
        dc_admm_round(&state, &p2, &graph, &cfg).unwrap().state,
        dc_admm_round(&state, &p2, &graph, &cfg).unwrap().state
    );
    assert_eq!(
        idc_admm_round(&state, &p2, &graph, &cfg).unwrap().state,
        idc_admm_round(&state, &p2, &graph, &cfg).unwrap().state
    );
}

fn small_cpd(seed: u64, algorithm: Algorithm) -> ExperimentSpec {
    ExperimentSpec {
        agents: 4,
        rows: 12,
        dim: 6,
        sparsity: 0.5,
        algorithm,
        max_outer: 60,
        seed,
        ..ExperimentSpec::cpd_default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn structural_identities_hold_on_every_run(seed in 0u64..1000, exact in any::<bool>()) {
        let spec = small_cpd(seed, if exact { Algorithm::DcAdmm } else { Algorithm::IdcAdmm });
        let instance = build_instance(&spec).unwrap();
        let coupled = matches!(instance.problem, Problem::Coupled { .. });
        prop_assert!(coupled);
        let reference = reference_solution(&spec, &instance).unwrap();
        let out = run_on_instance(&spec, &instance, &reference).unwrap();
        let inv = out.trace.invariants;
        prop_assert!(inv.dual_sum <= 1e-9, "dual sum {:e}", inv.dual_sum);
        prop_assert!(inv.feasibility_identity < 1e-8, "identity {:e}", inv.feasibility_identity);
        if exact {
            prop_assert!(inv.stationarity_over_tolerance <= 2.0, "stationarity {}", inv.stationarity_over_tolerance);
        }
    }
}
