use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array1;

use super::data::{generate_dataset, sub_seed, SyntheticDataset, GRAPH_STREAM};
use super::spec::{ExperimentSpec, ProblemKind};
use crate::consensus::{run_consensus, ConsensusConfig, ConsensusState, Reference};
use crate::dual::{run_dual_consensus, DualConsensusConfig, DualConsensusState};
use crate::error::{Error, Result};
use crate::graph::{generate_connected_graph, Graph};
use crate::inner::{centralized_reference, InnerConfig};
use crate::metrics::{Algorithm, StopReason, Trace};
use crate::problem::{
    auto_beta, beta_min_ic, beta_min_idc, build_rpd_p1, partition_columns, CpdLogistic, LossKind, ProblemP1,
    ProblemP2,
};

#[derive(Debug, Clone)]
pub enum Problem {
    Consensus(ProblemP1),
    Coupled { p2: ProblemP2, cpd: CpdLogistic },
}

/// Everything an experiment runs on, rebuilt deterministically from the spec.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub data: SyntheticDataset,
    pub problem: Problem,
}

pub fn build_graph(spec: &ExperimentSpec) -> Result<Graph> {
    generate_connected_graph(
        spec.agents,
        spec.edge_probability,
        sub_seed(spec.seed, GRAPH_STREAM),
        spec.force_non_bipartite,
    )
}

pub fn build_instance(spec: &ExperimentSpec) -> Result<Instance> {
    spec.validate()?;
    let graph = build_graph(spec)?;
    let data = generate_dataset(spec)?;
    let problem = match spec.problem {
        ProblemKind::RpdLogistic | ProblemKind::RpdLasso => {
            let kind = if spec.problem == ProblemKind::RpdLasso {
                LossKind::Quadratic
            } else {
                LossKind::Logistic
            };
            Problem::Consensus(build_rpd_p1(
                &data.matrix,
                &data.response,
                spec.agents,
                kind,
                spec.lambda,
                spec.box_bound,
                spec.domain_bound,
            )?)
        }
        ProblemKind::CpdLogistic => {
            let bound = spec.box_bound.ok_or_else(|| Error::InvalidArgument("missing box bound".into()))?;
            let blocks = partition_columns(&data.matrix, spec.agents)?;
            let cpd = CpdLogistic::new(blocks, data.response.clone(), spec.lambda, bound)?;
            Problem::Coupled { p2: cpd.to_p2()?, cpd }
        }
    };
    Ok(Instance { graph, data, problem })
}

/// Centralized solution of the pooled problem. For the coupled problem
/// `y_star` is the stacked `[x_1; …; x_N]`.
pub fn reference_solution(spec: &ExperimentSpec, instance: &Instance) -> Result<Reference> {
    let cfg = InnerConfig::new(spec.reference_pgr, spec.reference_max_iter)?;
    let (y_star, obj_star) = match &instance.problem {
        Problem::Consensus(p1) => centralized_reference(p1, &cfg)?,
        Problem::Coupled { cpd, .. } => centralized_reference(&cpd.pooled_p1()?, &cfg)?,
    };
    Ok(Reference { y_star, obj_star })
}

/// Per-agent `(β_min, β)`: explicit values from the spec, or
/// `auto_beta(β_min)`. Exact methods and the subgradient baseline get zeros.
pub fn select_beta(spec: &ExperimentSpec, instance: &Instance) -> Result<Vec<(f64, f64)>> {
    let graph = &instance.graph;
    let thresholds: Vec<f64> = match (&instance.problem, spec.algorithm) {
        (Problem::Consensus(p1), Algorithm::IcAdmm) => {
            let lambda_min = graph.spectrum().lambda_min_d_plus_w;
            p1.agents()
                .iter()
                .map(|a| beta_min_ic(a, spec.c, lambda_min))
                .collect::<Result<_>>()?
        }
        (Problem::Coupled { p2, .. }, Algorithm::IdcAdmm) => p2
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| beta_min_idc(b, spec.c, graph.degree(i)))
            .collect::<Result<_>>()?,
        _ => return Ok(vec![(0.0, 0.0); spec.agents]),
    };
    Ok(match spec.explicit_beta() {
        Some(b) => thresholds.into_iter().zip(b).collect(),
        None => thresholds.into_iter().map(|t| (t, auto_beta(t))).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub trace: Trace,
    pub summary: Summary,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let instance = build_instance(spec)?;
    let reference = reference_solution(spec, &instance)?;
    run_on_instance(spec, &instance, &reference)
}

/// Runs `spec.algorithm` on a prebuilt instance and reference, from
/// projected zeros.
pub fn run_on_instance(spec: &ExperimentSpec, instance: &Instance, reference: &Reference) -> Result<ExperimentOutput> {
    let beta: Vec<f64> = select_beta(spec, instance)?.into_iter().map(|(_, b)| b).collect();
    let inner = InnerConfig::new(spec.inner_pgr, spec.inner_max_iter)?;
    let mut trace = match &instance.problem {
        Problem::Consensus(p1) => {
            let cfg = ConsensusConfig {
                c: spec.c,
                beta,
                inner,
                inner_warm_start: spec.inner_warm_start,
                max_outer: spec.max_outer,
                acc_target: spec.acc_target,
                cserr_target: spec.cserr_target,
            };
            let start = ConsensusState::uniform(
                spec.agents,
                p1.agents()[0].reg().project(Array1::zeros(p1.dim()).view()),
            );
            run_consensus(spec.algorithm, p1, &instance.graph, &cfg, reference, start)?
        }
        Problem::Coupled { p2, .. } => {
            let cfg = DualConsensusConfig {
                c: spec.c,
                beta,
                inner,
                inner_warm_start: spec.inner_warm_start,
                max_outer: spec.max_outer,
                acc_target: spec.acc_target,
                feasibility_target: spec.feasibility_target,
                dual_consensus_target: spec.dual_consensus_target,
            };
            run_dual_consensus(
                spec.algorithm,
                p2,
                &instance.graph,
                &cfg,
                reference.obj_star,
                DualConsensusState::zeros(p2),
            )?
        }
    };
    trace.seed = Some(spec.seed);
    trace.config = spec.to_pairs();
    let summary = Summary::from_trace(spec, &trace, reference.obj_star);
    if let Some(path) = &spec.output {
        write_outputs(&trace, &summary, path)?;
    }
    Ok(ExperimentOutput {
        spec: spec.clone(),
        trace,
        summary,
    })
}

/// Trace CSV at `path`, summary and config echo at `path` with a
/// `.summary.txt` suffix.
pub fn write_outputs(trace: &Trace, summary: &Summary, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    trace.write_csv(BufWriter::new(File::create(path)?))?;
    std::fs::write(summary_path(path), summary.render())?;
    Ok(())
}

pub fn summary_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.txt");
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub problem: ProblemKind,
    pub seed: u64,
    pub rounds: usize,
    pub stop: StopReason,
    pub obj_star: f64,
    pub final_objective: f64,
    pub final_acc: f64,
    pub acc_absolute: bool,
    pub final_cserr: Option<f64>,
    pub final_feasibility: Option<f64>,
    pub final_dual_consensus: Option<f64>,
    pub total_inner_iterations: u64,
    pub total_flops: u64,
    pub wall_time_s: f64,
    /// `(min, max)` over agents; `None` when β is unused.
    pub beta_min_range: Option<(f64, f64)>,
    pub beta_range: Option<(f64, f64)>,
    pub invariant_dual_sum: f64,
    pub invariant_feasibility_identity: f64,
    pub invariant_stationarity: f64,
    pub config: Vec<(String, String)>,
}

impl Summary {
    pub fn from_trace(spec: &ExperimentSpec, trace: &Trace, obj_star: f64) -> Self {
        let last = trace.last();
        let range = |v: Vec<f64>| {
            (!v.is_empty()).then(|| {
                v.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
            })
        };
        Self {
            algorithm: trace.algorithm,
            problem: spec.problem,
            seed: spec.seed,
            rounds: trace.rounds(),
            stop: trace.stop,
            obj_star,
            final_objective: last.objective,
            final_acc: last.acc,
            acc_absolute: trace.acc_absolute,
            final_cserr: last.cserr,
            final_feasibility: last.feasibility,
            final_dual_consensus: last.dual_consensus,
            total_inner_iterations: trace.records.iter().filter_map(|r| r.inner_iterations).sum(),
            total_flops: trace.total_flops(),
            wall_time_s: last.wall_time_s,
            beta_min_range: range(trace.beta.iter().map(|b| b.1).collect()),
            beta_range: range(trace.beta.iter().map(|b| b.0).collect()),
            invariant_dual_sum: trace.invariants.dual_sum,
            invariant_feasibility_identity: trace.invariants.feasibility_identity,
            invariant_stationarity: trace.invariants.stationarity_over_tolerance,
            config: trace.config.clone(),
        }
    }

    /// Stable `key = value` pairs; values are plain decimal or scientific.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:e}"));
        let range = |v: Option<(f64, f64)>| v.map_or_else(|| "none".to_string(), |(a, b)| format!("{a:e}..{b:e}"));
        vec![
            ("algorithm", self.algorithm.to_string()),
            ("problem", self.problem.to_string()),
            ("seed", self.seed.to_string()),
            ("rounds", self.rounds.to_string()),
            ("stop", self.stop.to_string()),
            ("obj_star", format!("{:e}", self.obj_star)),
            ("final_objective", format!("{:e}", self.final_objective)),
            ("final_acc", format!("{:e}", self.final_acc)),
            ("acc_mode", if self.acc_absolute { "absolute" } else { "relative" }.to_string()),
            ("final_cserr", opt(self.final_cserr)),
            ("final_feasibility", opt(self.final_feasibility)),
            ("final_dual_consensus", opt(self.final_dual_consensus)),
            ("total_inner_iterations", self.total_inner_iterations.to_string()),
            ("total_flops", self.total_flops.to_string()),
            ("wall_time_s", format!("{:.3}", self.wall_time_s)),
            ("beta_min", range(self.beta_min_range)),
            ("beta", range(self.beta_range)),
            ("invariant_dual_sum", format!("{:e}", self.invariant_dual_sum)),
            ("invariant_feasibility_identity", format!("{:e}", self.invariant_feasibility_identity)),
            ("invariant_stationarity", format!("{:e}", self.invariant_stationarity)),
        ]
    }

    pub fn render(&self) -> String {
        let mut out = String::from("[summary]\n");
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("\n[config]\n");
        for (k, v) in &self.config {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<ExperimentOutput>,
}

/// Runs every spec on the same seed. The problem instance and reference are
/// built once when the specs agree on every problem-shaping key.
pub fn compare(specs: &[ExperimentSpec]) -> Result<Comparison> {
    let Some(first) = specs.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    if let Some(other) = specs.iter().find(|s| s.seed != first.seed) {
        return Err(Error::InvalidArgument(format!(
            "mismatched problem seeds: {} and {}",
            first.seed, other.seed
        )));
    }
    let mut shared: Option<(ExperimentSpec, Instance, Reference)> = None;
    let mut runs = Vec::with_capacity(specs.len());
    for spec in specs {
        let reusable = shared.as_ref().is_some_and(|(s, _, _)| same_problem(s, spec));
        if !reusable {
            let instance = build_instance(spec)?;
            let reference = reference_solution(spec, &instance)?;
            shared = Some((spec.clone(), instance, reference));
        }
        let (_, instance, reference) = shared.as_ref().expect("instance built above");
        runs.push(run_on_instance(spec, instance, reference)?);
    }
    Ok(Comparison { runs })
}

fn same_problem(a: &ExperimentSpec, b: &ExperimentSpec) -> bool {
    a.problem == b.problem
        && a.agents == b.agents
        && a.rows == b.rows
        && a.dim == b.dim
        && a.lambda == b.lambda
        && a.box_bound == b.box_bound
        && a.domain_bound == b.domain_bound
        && a.row_l1_norm == b.row_l1_norm
        && a.sparsity == b.sparsity
        && a.label_noise == b.label_noise
        && a.edge_probability == b.edge_probability
        && a.force_non_bipartite == b.force_non_bipartite
        && a.reference_pgr == b.reference_pgr
        && a.reference_max_iter == b.reference_max_iter
        && a.seed == b.seed
}

const TABLE_COLUMNS: [&str; 8] = [
    "algorithm",
    "rounds",
    "stop",
    "final_acc",
    "final_cserr",
    "final_feasibility",
    "total_flops",
    "wall_time_s",
];

impl Comparison {
    fn rows(&self) -> Vec<Vec<String>> {
        self.runs
            .iter()
            .map(|r| {
                let pairs = r.summary.pairs();
                TABLE_COLUMNS
                    .iter()
                    .map(|c| {
                        pairs
                            .iter()
                            .find(|(k, _)| k == c)
                            .map(|(_, v)| v.clone())
                            .unwrap_or_default()
                    })
                    .collect()
            })
            .collect()
    }

    /// Column-aligned table for terminals.
    pub fn render_table(&self) -> String {
        let rows = self.rows();
        let widths: Vec<usize> = (0..TABLE_COLUMNS.len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0).max(TABLE_COLUMNS[j].len()))
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(TABLE_COLUMNS.to_vec(), &mut out);
        for r in &rows {
            line(r.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = TABLE_COLUMNS.join(",");
        out.push('\n');
        for r in self.rows() {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}
