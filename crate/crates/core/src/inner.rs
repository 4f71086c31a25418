//! Proximal-gradient machinery: the FISTA inner solver, the centralized
//! reference solve, and the consensus-subgradient baseline.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{norm, power_iteration};
use crate::problem::{ProblemP1, Regularizer};

type GradientFn<'a> = Box<dyn Fn(ArrayView1<f64>) -> Array1<f64> + Sync + 'a>;
type ValueFn<'a> = Box<dyn Fn(ArrayView1<f64>) -> f64 + Sync + 'a>;

/// `min_y h(y) + g(y)` with `h` smooth and `g` prox-friendly.
pub struct CompositeSubproblem<'a> {
    dim: usize,
    gradient: GradientFn<'a>,
    value: Option<ValueFn<'a>>,
    reg: &'a Regularizer,
    lipschitz: Option<f64>,
}

impl<'a> CompositeSubproblem<'a> {
    pub fn new(
        dim: usize,
        gradient: impl Fn(ArrayView1<f64>) -> Array1<f64> + Sync + 'a,
        reg: &'a Regularizer,
    ) -> Self {
        Self {
            dim,
            gradient: Box::new(gradient),
            value: None,
            reg,
            lipschitz: None,
        }
    }

    pub fn with_value(mut self, value: impl Fn(ArrayView1<f64>) -> f64 + Sync + 'a) -> Self {
        self.value = Some(Box::new(value));
        self
    }

    /// Lipschitz constant of `∇h`, enabling the constant step `1/L`.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gradient(&self, y: ArrayView1<f64>) -> Array1<f64> {
        (self.gradient)(y)
    }

    pub fn smooth_value(&self, y: ArrayView1<f64>) -> Option<f64> {
        self.value.as_ref().map(|v| v(y))
    }

    pub fn reg(&self) -> &Regularizer {
        self.reg
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1/L` when the subproblem carries a Lipschitz bound, backtracking otherwise.
    Auto,
    Constant(f64),
    /// Halve the step from `initial` until the quadratic upper bound holds.
    Backtracking { initial: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub step: StepRule,
    pub pgr_tolerance: f64,
    pub max_inner_iterations: usize,
}

impl InnerConfig {
    pub fn new(pgr_tolerance: f64, max_inner_iterations: usize) -> Result<Self> {
        let cfg = Self {
            step: StepRule::Auto,
            pgr_tolerance,
            max_inner_iterations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_step(mut self, step: StepRule) -> Self {
        self.step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pgr_tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pgr tolerance must be positive, got {}",
                self.pgr_tolerance
            )));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::InvalidArgument("inner iteration budget must be positive".into()));
        }
        match self.step {
            StepRule::Constant(r) | StepRule::Backtracking { initial: r } if !(r > 0.0 && r.is_finite()) => {
                Err(Error::InvalidArgument(format!("step size must be positive, got {r}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub solution: Array1<f64>,
    pub iterations: usize,
    pub final_pgr: f64,
    /// The budget ran out before the pgr test passed.
    pub hit_budget: bool,
    /// Step `ρ` used on the last iteration.
    pub step: f64,
    /// `z^{(ℓ−1)}` of the last iteration, from which `final_pgr` is computed.
    pub last_extrapolated: Array1<f64>,
}

fn checked_gradient(sub: &CompositeSubproblem, z: &Array1<f64>, iteration: usize) -> Result<Array1<f64>> {
    let g = sub.gradient(z.view());
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFiniteGradient {
            iteration,
            iterate_norm: norm(z.view()),
            iterate: z.to_vec(),
        })
    }
}

/// `‖z − ỹ‖ / (ρ √K)`.
pub fn pgr(z: ArrayView1<f64>, y: ArrayView1<f64>, step: f64) -> f64 {
    norm((&z - &y).view()) / (step * (z.len() as f64).sqrt())
}

/// FISTA with momentum `(ℓ−1)/(ℓ+2)`:
/// `ỹ^ℓ = prox_g^{1/ρ}(z^{ℓ−1} − ρ∇h(z^{ℓ−1}))`,
/// `z^ℓ = ỹ^ℓ + ((ℓ−1)/(ℓ+2))(ỹ^ℓ − ỹ^{ℓ−1})`, starting from `ỹ^0 = z^0 = start`.
pub fn fista_solve(sub: &CompositeSubproblem, start: ArrayView1<f64>, cfg: &InnerConfig) -> Result<InnerResult> {
    cfg.validate()?;
    if start.len() != sub.dim() {
        return Err(Error::Shape(format!(
            "start has length {}, subproblem has dimension {}",
            start.len(),
            sub.dim()
        )));
    }
    let (mut step, backtrack) = match (cfg.step, sub.lipschitz()) {
        (StepRule::Constant(r), _) => (r, false),
        (StepRule::Auto, Some(l)) if l > 0.0 => (1.0 / l, false),
        (StepRule::Auto, Some(_)) => (1.0, false),
        (StepRule::Auto, None) => (1.0, true),
        (StepRule::Backtracking { initial }, _) => (initial, true),
    };
    if backtrack && sub.value.is_none() {
        return Err(Error::InvalidArgument("backtracking needs the smooth value oracle".into()));
    }

    let mut y_prev = start.to_owned();
    let mut z = start.to_owned();
    let mut last = InnerResult {
        solution: y_prev.clone(),
        iterations: 0,
        final_pgr: f64::INFINITY,
        hit_budget: true,
        step,
        last_extrapolated: z.clone(),
    };
    for ell in 1..=cfg.max_inner_iterations {
        let grad = checked_gradient(sub, &z, ell)?;
        let mut y = sub.reg().prox((&z - &(&grad * step)).view(), 1.0 / step);
        if backtrack {
            let hz = sub.smooth_value(z.view()).expect("checked above");
            loop {
                let d = &y - &z;
                let upper = hz + grad.dot(&d) + d.dot(&d) / (2.0 * step);
                let hy = sub.smooth_value(y.view()).expect("checked above");
                if hy <= upper + 1e-12 * hz.abs().max(1.0) || step < 1e-300 {
                    break;
                }
                step *= 0.5;
                y = sub.reg().prox((&z - &(&grad * step)).view(), 1.0 / step);
            }
        }
        let res = pgr(z.view(), y.view(), step);
        if res < cfg.pgr_tolerance {
            return Ok(InnerResult {
                solution: y,
                iterations: ell,
                final_pgr: res,
                hit_budget: false,
                step,
                last_extrapolated: z,
            });
        }
        let momentum = (ell as f64 - 1.0) / (ell as f64 + 2.0);
        let z_next = &y + &((&y - &y_prev) * momentum);
        last = InnerResult {
            solution: y.clone(),
            iterations: ell,
            final_pgr: res,
            hit_budget: true,
            step,
            last_extrapolated: std::mem::replace(&mut z, z_next),
        };
        y_prev = y;
    }
    log::debug!(
        "inner solve hit its budget of {} iterations with pgr {:e}",
        cfg.max_inner_iterations,
        last.final_pgr
    );
    Ok(last)
}

/// Solves the pooled problem `Σ_i φ_i` to high accuracy; the result is the
/// denominator of `acc`.
pub fn centralized_reference(p: &ProblemP1, cfg: &InnerConfig) -> Result<(Array1<f64>, f64)> {
    let regs: Vec<Regularizer> = p.agents().iter().map(|a| a.reg().clone()).collect();
    let reg = Regularizer::sum(&regs)?;
    let dim = p.dim();
    let lipschitz = power_iteration(
        dim,
        |v| {
            p.agents()
                .iter()
                .filter_map(|a| a.smooth())
                .fold(Array1::zeros(dim), |acc, s| {
                    acc + s.matrix().t().dot(&s.matrix().dot(&v)) * s.loss_lipschitz()
                })
        },
        1e-10,
        100_000,
    );
    let sub = CompositeSubproblem::new(
        dim,
        |y| {
            p.agents()
                .iter()
                .fold(Array1::zeros(dim), |acc, a| acc + a.smooth_gradient(y))
        },
        &reg,
    )
    .with_value(|y| p.agents().iter().map(|a| a.smooth_value(y)).sum())
    .with_lipschitz(lipschitz);
    let start = reg.project(Array1::zeros(dim).view());
    let result = fista_solve(&sub, start.view(), cfg)?;
    if result.hit_budget {
        log::warn!(
            "centralized reference stopped at its budget with pgr {:e} (target {:e})",
            result.final_pgr,
            cfg.pgr_tolerance
        );
    }
    let obj = p.objective(result.solution.view());
    Ok((result.solution, obj))
}

/// Metropolis mixing weights `w_ij = 1/(1 + max(d_i, d_j))` on edges,
/// `w_ii = 1 − Σ_j w_ij`.
pub fn metropolis_weights(graph: &Graph) -> Array2<f64> {
    let n = graph.n_agents();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for &j in graph.neighbors(i) {
            w[[i, j]] = 1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64);
        }
        w[[i, i]] = 1.0 - w.row(i).sum();
    }
    w
}

/// Step length `10/k` of the subgradient baseline.
pub fn subgradient_step_length(k: usize) -> f64 {
    10.0 / k as f64
}

/// One round of the consensus-subgradient method: mix with Metropolis
/// weights, take a `10/k` subgradient step on the local `φ_i`, project onto
/// the box.
pub fn subgradient_baseline_step(
    y: &[Array1<f64>],
    weights: &Array2<f64>,
    p: &ProblemP1,
    k: usize,
) -> Result<Vec<Array1<f64>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("subgradient rounds are counted from 1".into()));
    }
    let n = p.n_agents();
    if y.len() != n || weights.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "{} states and {:?} weights for {n} agents",
            y.len(),
            weights.dim()
        )));
    }
    let step = subgradient_step_length(k);
    p.agents()
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let mut v = Array1::zeros(p.dim());
            for (j, yj) in y.iter().enumerate() {
                let wij = weights[[i, j]];
                if wij != 0.0 {
                    v.scaled_add(wij, yj);
                }
            }
            let g = agent.smooth_gradient(v.view()) + agent.reg().subgradient(v.view());
            if !g.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    iteration: k,
                    iterate_norm: norm(v.view()),
                    iterate: v.to_vec(),
                }
                .at_agent(i));
            }
            v.scaled_add(-step, &g);
            Ok(agent.reg().project(v.view()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{
        build_rpd_p1, AgentObjective, LogisticLoss, LossKind, QuadraticLoss, SmoothLoss, SmoothTerm,
    };
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight() -> InnerConfig {
        InnerConfig::new(1e-10, 100_000).unwrap()
    }

    #[test]
    fn unconstrained_quadratic() {
        let reg = Regularizer::Zero;
        let ones = Array1::<f64>::ones(4);
        let sub = CompositeSubproblem::new(4, |y| (&y - &ones) * 2.0, &reg).with_lipschitz(2.0);
        let r = fista_solve(&sub, Array1::zeros(4).view(), &tight()).unwrap();
        assert!(!r.hit_budget);
        assert!((&r.solution - &ones).iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn boxed_quadratic_with_interior_minimizer() {
        let reg = Regularizer::Box { bound: 1.0 };
        let sub = CompositeSubproblem::new(3, |y| &y * 2.0, &reg)
            .with_value(|y| y.dot(&y));
        let r = fista_solve(&sub, array![0.9, -0.4, 0.7].view(), &tight()).unwrap();
        assert!(r.solution.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn scalar_lasso_closed_form() {
        // (y − 2)² + |y| → y = 1.5
        let reg = Regularizer::L1 { weight: 1.0 };
        let sub = CompositeSubproblem::new(1, |y| (&y - 2.0) * 2.0, &reg).with_lipschitz(2.0);
        let r = fista_solve(&sub, array![0.0].view(), &tight()).unwrap();
        assert!((r.solution[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn backtracking_finds_the_same_point() {
        let reg = Regularizer::L1 { weight: 0.3 };
        let sub = CompositeSubproblem::new(2, |y| array![8.0 * (y[0] - 1.0), 2.0 * (y[1] + 1.0)], &reg)
            .with_value(|y| 4.0 * (y[0] - 1.0).powi(2) + (y[1] + 1.0).powi(2));
        let cfg = tight().with_step(StepRule::Backtracking { initial: 10.0 });
        let r = fista_solve(&sub, array![0.0, 0.0].view(), &cfg).unwrap();
        assert!(r.step <= 1.0 / 8.0);
        assert!((r.solution[0] - (1.0 - 0.3 / 8.0)).abs() < 1e-8);
        assert!((r.solution[1] - (-1.0 + 0.15)).abs() < 1e-8);
    }

    #[test]
    fn first_iterate_descends_and_pgr_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let lip = 2.0 * crate::linalg::lambda_max_gram(&a);
        let reg = Regularizer::Zero;
        let value = |y: ArrayView1<f64>| {
            let r = a.dot(&y) - &b;
            r.dot(&r)
        };
        let sub = CompositeSubproblem::new(4, |y| a.t().dot(&(a.dot(&y) - &b)) * 2.0, &reg)
            .with_value(value)
            .with_lipschitz(lip);
        let start = Array1::from_shape_fn(4, |_| rng.random_range(-3.0..3.0));
        let one = fista_solve(&sub, start.view(), &InnerConfig::new(1e-300, 1).unwrap()).unwrap();
        assert!(one.hit_budget);
        assert!(value(one.solution.view()) < value(start.view()));
        let full = fista_solve(&sub, start.view(), &InnerConfig::new(1e-6, 10_000).unwrap()).unwrap();
        let again = pgr(full.last_extrapolated.view(), full.solution.view(), full.step);
        assert_eq!(again.to_bits(), full.final_pgr.to_bits());
        assert!(full.final_pgr < 1e-6);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let reg = Regularizer::Zero;
        let sub = CompositeSubproblem::new(2, |y| y.mapv(|v| v / 0.0), &reg).with_lipschitz(1.0);
        let err = fista_solve(&sub, array![1.0, 2.0].view(), &tight()).unwrap_err();
        match err {
            Error::NonFiniteGradient { iteration, iterate, .. } => {
                assert_eq!(iteration, 1);
                assert_eq!(iterate, vec![1.0, 2.0]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(InnerConfig::new(0.0, 10).is_err());
        assert!(InnerConfig::new(1e-3, 0).is_err());
        assert!(InnerConfig::new(1e-3, 10).unwrap().with_step(StepRule::Constant(-1.0)).validate().is_err());
    }

    #[test]
    fn reference_on_zero_data() {
        let n = 3;
        let m = 4;
        let a = Array2::zeros((n * m, 5));
        let labels = Array1::from_shape_fn(n * m, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let p = build_rpd_p1(&a, &labels, n, LossKind::Logistic, 0.1, Some(1.0), None).unwrap();
        let (y, obj) = centralized_reference(&p, &tight()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!((obj - (n * m) as f64 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reference_scalar_lasso() {
        // Σ_i (y − t_i)² + λ|y| with λ split evenly: minimizer is
        // soft-threshold of the mean at λ/(2N).
        let a = Array2::ones((3, 1));
        let t = array![1.0, 2.0, 4.0];
        let p = build_rpd_p1(&a, &t, 3, LossKind::Quadratic, 1.2, None, None).unwrap();
        let (y, _) = centralized_reference(&p, &tight()).unwrap();
        let mean = 7.0 / 3.0;
        assert!((y[0] - (mean - 1.2 / 6.0)).abs() < 1e-9);
    }

    #[test]
    fn reference_beats_probes_and_ignores_agent_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, m, k) = (3, 5, 3);
        let a = Array2::from_shape_fn((n * m, k), |_| rng.random_range(-1.0..1.0));
        let labels = Array1::from_shape_fn(n * m, |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let p = build_rpd_p1(&a, &labels, n, LossKind::Logistic, 0.1, Some(1.0), None).unwrap();
        let (y, obj) = centralized_reference(&p, &tight()).unwrap();
        for _ in 0..1_000_000 {
            let probe = Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0));
            assert!(obj <= p.objective(probe.view()) + 1e-12);
        }
        let mut agents = p.agents().to_vec();
        agents.reverse();
        let q = ProblemP1::new(agents).unwrap();
        let (_, obj_rev) = centralized_reference(&q, &tight()).unwrap();
        assert!((obj - obj_rev).abs() <= 1e-12 * obj.abs());
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn metropolis_rows_sum_to_one() {
        for g in [Graph::complete(4).unwrap(), Graph::path(5).unwrap(), Graph::cycle(6).unwrap()] {
            let w = metropolis_weights(&g);
            for i in 0..g.n_agents() {
                assert!((w.row(i).sum() - 1.0).abs() < 1e-15);
                assert!(w.row(i).iter().all(|&x| x >= 0.0));
            }
            assert_eq!(w, w.t());
        }
    }

    fn scalar_quadratic_pair(t: [f64; 2]) -> ProblemP1 {
        let agents = t
            .iter()
            .map(|&ti| {
                let term = SmoothTerm::new(array![[1.0]], QuadraticLoss::new(array![ti]).into()).unwrap();
                AgentObjective::new(1, Some(term), Regularizer::Zero).unwrap()
            })
            .collect();
        ProblemP1::new(agents).unwrap()
    }

    #[test]
    fn subgradient_fixed_point() {
        let p = scalar_quadratic_pair([0.5, 0.5]);
        let w = metropolis_weights(&Graph::complete(2).unwrap());
        let y = vec![array![0.5], array![0.5]];
        let out = subgradient_baseline_step(&y, &w, &p, 3).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn subgradient_one_step_by_hand() {
        // from 0 the mix is 0; gradient 2(0 − t_i); step 10 → y_i = 20 t_i
        let p = scalar_quadratic_pair([0.3, -1.0]);
        let w = metropolis_weights(&Graph::complete(2).unwrap());
        let out = subgradient_baseline_step(&[array![0.0], array![0.0]], &w, &p, 1).unwrap();
        assert!((out[0][0] - 6.0).abs() < 1e-14);
        assert!((out[1][0] + 20.0).abs() < 1e-14);
    }

    #[test]
    fn logistic_subproblem_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let loss = LogisticLoss::new(array![1.0, -1.0, -1.0, 1.0], 2.0).unwrap();
        let term = SmoothTerm::new(a, loss.into()).unwrap();
        let y = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
        let g = term.gradient(y.view());
        let h = 1e-6;
        for j in 0..3 {
            let mut up = y.clone();
            let mut dn = y.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (term.value(up.view()) - term.value(dn.view())) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * g.iter().map(|v| v.abs()).fold(1e-12, f64::max));
        }
        assert_eq!(term.loss().lipschitz_grad(), 0.25);
    }
}
