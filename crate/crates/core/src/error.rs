use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("no connected graph on {n_agents} agents after {budget} samples at edge probability {edge_probability}")]
    RetryBudgetExhausted {
        n_agents: usize,
        edge_probability: f64,
        budget: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label at index {index} is {value}, expected -1 or +1")]
    InvalidLabel { index: usize, value: f64 },

    #[error("non-finite gradient at inner iteration {iteration} (iterate norm {iterate_norm})")]
    NonFiniteGradient {
        iteration: usize,
        iterate_norm: f64,
        iterate: Vec<f64>,
    },

    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("diverged at round {round}: {measure} = {value:e} exceeds 1e6 x baseline {baseline:e}")]
    Divergence {
        round: usize,
        measure: &'static str,
        value: f64,
        baseline: f64,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_agent(self, agent: usize) -> Self {
        Error::Agent {
            agent,
            source: Box::new(self),
        }
    }
}
