use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("zero matrix: {0}")]
    ZeroMatrix(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate row distribution: all rows are zero")]
    DegenerateDistribution,

    #[error("window count {t} exceeds cap {cap}; lambda or alpha too extreme")]
    WindowCountExceeded { t: usize, cap: usize },

    #[error("polynomial degree {degree} exceeds cap {cap} for gamma={gamma}, eps={eps}")]
    DegreeCapExceeded {
        degree: usize,
        cap: usize,
        gamma: f64,
        eps: f64,
    },

    #[error("power polynomial certification failed after escalating to degree factor {max_factor}")]
    PowerPolyCertification { max_factor: usize },

    #[error("solver failed to converge within {epochs} epochs; last relative residual {residual:.3e}")]
    SolverDidNotConverge {
        epochs: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("work budget exhausted in {context}; best lambda reached {lambda:.3e}")]
    BudgetExhausted { context: &'static str, lambda: f64 },

    #[error("precision infeasible at n={n} for {context}: required accuracy {required:.3e} is below 1e-14 of the sum magnitude")]
    PrecisionInfeasible {
        context: &'static str,
        n: usize,
        required: f64,
    },

    #[error("oracle size cap exceeded: {dim} > {cap}")]
    OracleSizeCap { dim: usize, cap: usize },

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
