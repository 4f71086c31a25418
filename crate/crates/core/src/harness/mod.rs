//! Synthetic experiments: spec files, seeded data and graphs, runs and comparisons.

mod data;
mod run;
mod spec;

pub use data::{generate_dataset, sub_seed, SyntheticDataset, DATA_STREAM, GRAPH_STREAM};
pub use run::{
    build_graph, build_instance, compare, reference_solution, run_experiment, run_on_instance, select_beta,
    summary_path, write_outputs, Comparison, ExperimentOutput, Instance, Problem, Summary,
};
pub use spec::{BetaMode, ExperimentSpec, ProblemKind, KEYS};
