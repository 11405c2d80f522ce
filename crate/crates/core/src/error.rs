use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph: {0}")]
    InvalidGraph(String),

    #[error("graph: unknown fixture `{name}`; available fixtures: {available}")]
    UnknownFixture { name: String, available: String },

    #[error("gcn-model: shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("gcn-model: invalid widths {0:?}: need at least two positive widths")]
    InvalidSpec(Vec<usize>),

    /// A hypothesis the requested construction relies on does not hold.
    #[error("{module}: hypothesis violated: {detail}")]
    Hypothesis { module: &'static str, detail: String },

    #[error("{module}: {what} is {actual}, above the cap of {cap}; {advice}")]
    CapExceeded {
        module: &'static str,
        what: &'static str,
        actual: usize,
        cap: usize,
        advice: &'static str,
    },

    #[error("arrangement: simplex exceeded {iterations} iterations (basis {basis:?})")]
    IterationCap { iterations: usize, basis: Vec<usize> },

    #[error("arrangement: solver failed below pattern prefix `{pattern}`: {source}")]
    SolverAt {
        pattern: String,
        #[source]
        source: Box<Error>,
    },

    #[error("witness: {0}")]
    Witness(String),

    #[error("render: slice anchors are affinely dependent")]
    DegenerateSlice,

    #[error("sampler: {0}")]
    Sampling(String),

    #[error("cli: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for validation problems, 3 for
    /// cap and solver failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CapExceeded { .. } | Error::IterationCap { .. } | Error::SolverAt { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
