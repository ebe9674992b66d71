use thiserror::Error;

pub type Result<T, E = PbrlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PbrlError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory enumeration exceeded cap of {cap}")]
    EnumerationCapExceeded { cap: usize },

    #[error("exact evaluation infeasible (trajectory cap {cap}); use a Monte-Carlo estimate")]
    MonteCarloRequired { cap: usize },

    #[error("policy pool of {count} policies exceeds cap {cap}")]
    CapExceeded { count: String, cap: usize },

    #[error("no Condorcet winner in pool (best worst-case preference {best_margin:.6})")]
    NoCondorcetWinner { best_margin: f64 },

    #[error("Gram matrix is not positive definite")]
    SingularGram,

    #[error("vertex enumeration over {num_states} states exceeds the exact cap and the heuristic is disabled")]
    VertexEnumerationCapExceeded { num_states: usize },

    #[error("near-optimal policy set is empty")]
    EmptyPolicySet,

    #[error("environment generation failed after {attempts} rejections")]
    GenerationFailed { attempts: usize },

    #[error("domain of {size} points is too large for exhaustive search (max {max})")]
    DomainTooLarge { size: usize, max: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
