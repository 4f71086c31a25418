use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    RpdLogistic,
    RpdLasso,
    CpdLogistic,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::RpdLogistic => "rpd-logistic",
            ProblemKind::RpdLasso => "rpd-lasso",
            ProblemKind::CpdLogistic => "cpd-logistic",
        }
    }

    pub fn is_coupled(self) -> bool {
        self == ProblemKind::CpdLogistic
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ProblemKind::RpdLogistic, ProblemKind::RpdLasso, ProblemKind::CpdLogistic]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown problem kind {s:?}")))
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaMode {
    /// `margin · max(0, β_min) + floor` per agent.
    Auto,
    /// One value per agent, or a single value for all.
    Explicit(Vec<f64>),
}

/// Everything needed to reproduce one run. Serialized as flat `key = value`
/// text; see [`ExperimentSpec::parse`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    /// `N`
    pub agents: usize,
    /// `M`: data rows per agent (row-partitioned) or coupling rows (column-partitioned).
    pub rows: usize,
    /// `K`: shared dimension (row-partitioned) or per-agent block size.
    pub dim: usize,
    pub lambda: f64,
    /// `a`; `None` drops the box.
    pub box_bound: Option<f64>,
    /// Bound used to certify logistic curvature when there is no box.
    pub domain_bound: Option<f64>,
    /// Rescale every data row to this ℓ₁ norm; `None` keeps raw Gaussian rows.
    pub row_l1_norm: Option<f64>,
    /// Fraction of nonzeros in the planted model.
    pub sparsity: f64,
    pub label_noise: f64,
    pub edge_probability: f64,
    pub force_non_bipartite: bool,
    pub algorithm: Algorithm,
    pub c: f64,
    pub beta: BetaMode,
    pub inner_pgr: f64,
    pub inner_max_iter: usize,
    pub inner_warm_start: bool,
    pub reference_pgr: f64,
    pub reference_max_iter: usize,
    pub acc_target: f64,
    pub cserr_target: f64,
    pub feasibility_target: f64,
    pub dual_consensus_target: f64,
    pub max_outer: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            problem: ProblemKind::RpdLogistic,
            agents: 10,
            rows: 30,
            dim: 200,
            lambda: 0.1,
            box_bound: Some(1.0),
            domain_bound: None,
            row_l1_norm: Some(4.0),
            sparsity: 0.1,
            label_noise: 0.05,
            edge_probability: 0.5,
            force_non_bipartite: true,
            algorithm: Algorithm::IcAdmm,
            c: 0.1,
            beta: BetaMode::Auto,
            inner_pgr: 1e-5,
            inner_max_iter: 100_000,
            inner_warm_start: true,
            reference_pgr: 1e-9,
            reference_max_iter: 1_000_000,
            acc_target: 1e-4,
            cserr_target: 1e-5,
            feasibility_target: 1e-4,
            dual_consensus_target: 1e-6,
            max_outer: 50_000,
            output: None,
            seed: 1,
        }
    }
}

pub const KEYS: [&str; 27] = [
    "problem",
    "agents",
    "rows",
    "dim",
    "lambda",
    "box_bound",
    "domain_bound",
    "row_l1_norm",
    "sparsity",
    "label_noise",
    "edge_probability",
    "force_non_bipartite",
    "algorithm",
    "c",
    "beta",
    "inner_pgr",
    "inner_max_iter",
    "inner_warm_start",
    "reference_pgr",
    "reference_max_iter",
    "acc_target",
    "cserr_target",
    "feasibility_target",
    "dual_consensus_target",
    "max_outer",
    "output",
    "seed",
];

fn parse_num<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("bad value {value:?}: {e}"))
}

fn parse_opt(value: &str) -> std::result::Result<Option<f64>, String> {
    if value == "none" {
        Ok(None)
    } else {
        parse_num(value).map(Some)
    }
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {value:?}")),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl ExperimentSpec {
    /// Flat `key = value` lines; `#` starts a comment. Keys not listed in
    /// [`KEYS`] and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key {key:?}"),
                });
            }
            entries.push((line_no, key, value));
        }
        // omitted keys take the defaults of the chosen problem kind
        let coupled = entries
            .iter()
            .any(|(_, k, v)| *k == "problem" && *v == ProblemKind::CpdLogistic.name());
        let mut spec = if coupled { Self::cpd_default() } else { Self::default() };
        for (line, key, value) in entries {
            spec.set(key, value).map_err(|message| Error::Config { line, message })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "problem" => self.problem = value.parse().map_err(|e: Error| e.to_string())?,
            "agents" => self.agents = parse_num(value)?,
            "rows" => self.rows = parse_num(value)?,
            "dim" => self.dim = parse_num(value)?,
            "lambda" => self.lambda = parse_num(value)?,
            "box_bound" => self.box_bound = parse_opt(value)?,
            "domain_bound" => self.domain_bound = parse_opt(value)?,
            "row_l1_norm" => self.row_l1_norm = parse_opt(value)?,
            "sparsity" => self.sparsity = parse_num(value)?,
            "label_noise" => self.label_noise = parse_num(value)?,
            "edge_probability" => self.edge_probability = parse_num(value)?,
            "force_non_bipartite" => self.force_non_bipartite = parse_bool(value)?,
            "algorithm" => self.algorithm = value.parse().map_err(|e: Error| e.to_string())?,
            "c" => self.c = parse_num(value)?,
            "beta" => {
                self.beta = if value == "auto" {
                    BetaMode::Auto
                } else {
                    BetaMode::Explicit(
                        value
                            .split(',')
                            .map(|v| parse_num(v.trim()))
                            .collect::<std::result::Result<_, _>>()?,
                    )
                }
            }
            "inner_pgr" => self.inner_pgr = parse_num(value)?,
            "inner_max_iter" => self.inner_max_iter = parse_num(value)?,
            "inner_warm_start" => self.inner_warm_start = parse_bool(value)?,
            "reference_pgr" => self.reference_pgr = parse_num(value)?,
            "reference_max_iter" => self.reference_max_iter = parse_num(value)?,
            "acc_target" => self.acc_target = parse_num(value)?,
            "cserr_target" => self.cserr_target = parse_num(value)?,
            "feasibility_target" => self.feasibility_target = parse_num(value)?,
            "dual_consensus_target" => self.dual_consensus_target = parse_num(value)?,
            "max_outer" => self.max_outer = parse_num(value)?,
            "output" => self.output = (value != "none").then(|| PathBuf::from(value)),
            "seed" => self.seed = parse_num(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.agents == 0 || self.rows == 0 || self.dim == 0 {
            return bad(format!(
                "dimensions must be positive, got N={} M={} K={}",
                self.agents, self.rows, self.dim
            ));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        for (name, v) in [
            ("box_bound", self.box_bound),
            ("domain_bound", self.domain_bound),
            ("row_l1_norm", self.row_l1_norm),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.problem.is_coupled() && self.box_bound.is_none() {
            return bad("the column-partitioned problem needs a box bound".into());
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity must lie in (0, 1], got {}", self.sparsity));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label noise must lie in [0, 0.5), got {}", self.label_noise));
        }
        let coupled_algo = self.algorithm.is_dual();
        if coupled_algo != self.problem.is_coupled() {
            return bad(format!("algorithm {} cannot solve problem {}", self.algorithm, self.problem));
        }
        if let BetaMode::Explicit(b) = &self.beta {
            if b.len() != 1 && b.len() != self.agents {
                return bad(format!("{} beta values for {} agents", b.len(), self.agents));
            }
        }
        for (name, v) in [
            ("c", self.c),
            ("inner_pgr", self.inner_pgr),
            ("reference_pgr", self.reference_pgr),
            ("acc_target", self.acc_target),
            ("cserr_target", self.cserr_target),
            ("feasibility_target", self.feasibility_target),
            ("dual_consensus_target", self.dual_consensus_target),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Canonical `(key, value)` pairs; parsing them back yields `self`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let beta = match &self.beta {
            BetaMode::Auto => "auto".to_string(),
            BetaMode::Explicit(b) => b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        };
        [
            ("problem", self.problem.to_string()),
            ("agents", self.agents.to_string()),
            ("rows", self.rows.to_string()),
            ("dim", self.dim.to_string()),
            ("lambda", self.lambda.to_string()),
            ("box_bound", fmt_opt(self.box_bound)),
            ("domain_bound", fmt_opt(self.domain_bound)),
            ("row_l1_norm", fmt_opt(self.row_l1_norm)),
            ("sparsity", self.sparsity.to_string()),
            ("label_noise", self.label_noise.to_string()),
            ("edge_probability", self.edge_probability.to_string()),
            ("force_non_bipartite", self.force_non_bipartite.to_string()),
            ("algorithm", self.algorithm.to_string()),
            ("c", self.c.to_string()),
            ("beta", beta),
            ("inner_pgr", self.inner_pgr.to_string()),
            ("inner_max_iter", self.inner_max_iter.to_string()),
            ("inner_warm_start", self.inner_warm_start.to_string()),
            ("reference_pgr", self.reference_pgr.to_string()),
            ("reference_max_iter", self.reference_max_iter.to_string()),
            ("acc_target", self.acc_target.to_string()),
            ("cserr_target", self.cserr_target.to_string()),
            ("feasibility_target", self.feasibility_target.to_string()),
            ("dual_consensus_target", self.dual_consensus_target.to_string()),
            ("max_outer", self.max_outer.to_string()),
            (
                "output",
                self.output
                    .as_ref()
                    .map_or_else(|| "none".to_string(), |p| p.display().to_string()),
            ),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn to_config_string(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Per-agent β list for [`BetaMode::Explicit`].
    pub fn explicit_beta(&self) -> Option<Vec<f64>> {
        match &self.beta {
            BetaMode::Auto => None,
            BetaMode::Explicit(b) if b.len() == 1 => Some(vec![b[0]; self.agents]),
            BetaMode::Explicit(b) => Some(b.clone()),
        }
    }

    /// Defaults for the column-partitioned logistic problem.
    pub fn cpd_default() -> Self {
        Self {
            problem: ProblemKind::CpdLogistic,
            rows: 50,
            dim: 40,
            lambda: 0.01,
            box_bound: Some(20.0),
            row_l1_norm: Some(0.35),
            algorithm: Algorithm::IdcAdmm,
            c: 0.02,
            inner_warm_start: false,
            ..Self::default()
        }
    }
}
