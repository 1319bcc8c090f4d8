use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("requested {requested} basis modes but the grid only resolves {max}")]
    Capacity { requested: usize, max: usize },

    #[error(
        "mollifier radius {radius} is below the grid spacing {spacing}; refine the grid or lower n"
    )]
    KernelTooNarrow { radius: f64, spacing: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("CFL number {ratio:.6} exceeds the limit {limit}")]
    Cfl { ratio: f64, limit: f64 },

    #[error("non-finite value in {what} at t = {time}")]
    NonFinite { what: &'static str, time: f64 },

    #[error(
        "mass matrix is singular at t = {time}: the momentum equation degenerates into an \
         elliptic equation where the density vanishes and kappa = 0 ({detail})"
    )]
    Degenerate { time: f64, detail: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("uniqueness violated: difference energy {energy:e} at t = {time} from identical data")]
    UniquenessViolation { time: f64, energy: f64 },

    #[error("config error at {}: key `{key}`: {message}", line.map_or_else(|| "unknown line".to_string(), |l| format!("line {l}")))]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("step failed at t = {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                time,
                source: Box::new(e),
            },
        }
    }

    /// Strips any `AtTime` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }
}
