use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {value} out of range for mode {mode} (valid 1..={size})")]
    ModeIndex {
        mode: usize,
        value: usize,
        size: usize,
    },

    #[error("mode {mode} out of range (grid has {modes} modes)")]
    Mode { mode: usize, modes: usize },

    #[error("task id {task} out of range (valid 1..={tasks})")]
    Task { task: usize, tasks: usize },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid model file: {0}")]
    Model(String),

    #[error(
        "{context}: linear system is singular or ill-conditioned (residual {residual:.3e}); \
         try a larger jitter or a smaller C"
    )]
    Singular { context: String, residual: f64 },

    #[error("degenerate subproblem for mode {mode}, row {row}: all z vectors are zero")]
    Degenerate { mode: usize, row: usize },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unsupported(_) => 2,
            Error::Singular { .. } | Error::Degenerate { .. } => 4,
            _ => 3,
        }
    }
}
