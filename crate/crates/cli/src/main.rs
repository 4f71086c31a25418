use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use admm_net::harness::{
    build_graph, build_instance, compare, generate_dataset, run_experiment, select_beta, ExperimentSpec,
};
use admm_net::io::{write_matrix, write_vector};
use admm_net::metrics::Algorithm;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "admm-net", version, about = "Decentralized consensus ADMM experiments on simulated agent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trace CSV path; the summary goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several algorithms on one problem instance and print a table.
    Compare {
        /// Config files to compare; repeat the flag or use commas in --algo.
        #[arg(long = "config", value_name = "PATH")]
        configs: Vec<PathBuf>,
        /// Comma-separated algorithms, each run on the first config.
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "max-iter")]
        max_iter: Option<usize>,
        /// Write the machine-readable table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the communication graph and print its edge list and spectrum.
    GenGraph {
        #[command(flatten)]
        common: Common,
        /// Edge-list path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory for matrix.csv, response.csv and planted.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-agent β thresholds and the auto-selected β.
    TuneBeta {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        load_spec(self.config.as_deref(), self.algo, self.seed, self.max_iter)
    }
}

fn load_spec(
    config: Option<&Path>,
    algo: Option<Algorithm>,
    seed: Option<u64>,
    max_iter: Option<usize>,
) -> Result<ExperimentSpec> {
    let mut spec = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentSpec::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None if algo.is_some_and(Algorithm::is_dual) => ExperimentSpec::cpd_default(),
        None => ExperimentSpec::default(),
    };
    if let Some(a) = algo {
        spec.algorithm = a;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(m) = max_iter {
        spec.max_outer = m;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, out } => {
            let mut spec = common.spec()?;
            if out.is_some() {
                spec.output = out;
            }
            let result = run_experiment(&spec)?;
            print!("{}", result.summary.render());
        }
        Command::Compare {
            configs,
            algo,
            seed,
            max_iter,
            out,
        } => {
            let mut specs = Vec::new();
            match &algo {
                Some(list) => {
                    let base = configs.first().map(PathBuf::as_path);
                    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let a: Algorithm = name.parse()?;
                        specs.push(load_spec(base, Some(a), seed, max_iter)?);
                    }
                }
                None => {
                    for path in &configs {
                        specs.push(load_spec(Some(path), None, seed, max_iter)?);
                    }
                }
            }
            if specs.len() < 2 {
                bail!("compare needs at least two runs; pass several --config files or --algo a,b");
            }
            let report = compare(&specs)?;
            print!("{}", report.render_table());
            if let Some(path) = out {
                std::fs::write(&path, report.render_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::GenGraph { common, out } => {
            let spec = common.spec()?;
            let graph = build_graph(&spec)?;
            let s = graph.spectrum();
            println!("agents = {}", graph.n_agents());
            println!("edges = {}", graph.edges().len());
            println!("bipartite = {}", s.bipartite);
            println!("lambda_min_d_plus_w = {:e}", s.lambda_min_d_plus_w);
            println!("lambda_max_d_plus_w = {:e}", s.lambda_max_d_plus_w);
            match out {
                Some(path) => std::fs::write(&path, graph.to_edge_list())?,
                None => print!("\n{}", graph.to_edge_list()),
            }
        }
        Command::GenData { common, out } => {
            let spec = common.spec()?;
            let data = generate_dataset(&spec)?;
            std::fs::create_dir_all(&out)?;
            write_matrix(BufWriter::new(File::create(out.join("matrix.csv"))?), &data.matrix)?;
            write_vector(BufWriter::new(File::create(out.join("response.csv"))?), &data.response)?;
            write_vector(BufWriter::new(File::create(out.join("planted.csv"))?), &data.planted)?;
            let (pos, neg) = data.label_counts();
            println!("rows = {}", data.matrix.nrows());
            println!("cols = {}", data.matrix.ncols());
            println!("positive = {pos}");
            println!("negative = {neg}");
            println!("data_seed = {}", data.seed);
        }
        Command::TuneBeta { common } => {
            let spec = common.spec()?;
            if !matches!(spec.algorithm, Algorithm::IcAdmm | Algorithm::IdcAdmm) {
                bail!("{} does not use beta; pick ic-admm or idc-admm", spec.algorithm);
            }
            let instance = build_instance(&spec)?;
            println!("agent,beta_min,beta");
            for (i, (t, b)) in select_beta(&spec, &instance)?.into_iter().enumerate() {
                println!("{i},{t:e},{b:e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
