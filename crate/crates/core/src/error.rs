use thiserror::Error;

pub type Result<T> = std::result::Result<T, PbdwError>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PbdwError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("field belongs to a different discrete space")]
    SpaceMismatch,

    #[error("point outside the closed domain: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("generator kind error: {0}")]
    Kind(String),

    #[error("rank deficiency at basis index {index} (1-based)")]
    RankDeficient { index: usize },

    #[error("rank error: {0}")]
    Rank(String),

    #[error("unisolvency violated: cond(L_eta) = {cond:.3e} exceeds 1e12")]
    Unisolvency { cond: f64 },

    #[error(
        "background not identifiable: some nonzero z in Z_N has l_m(z) = 0 for all m \
         (smallest singular value of L_z is {sigma_min:.3e})"
    )]
    Identifiability { sigma_min: f64 },

    #[error("stability error: {0}")]
    Stability(String),

    #[error("numerical conditioning error: {0}")]
    Conditioning(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("placement failed at iteration {iteration}: {source}")]
    Placement {
        iteration: usize,
        #[source]
        source: Box<PbdwError>,
    },
}

impl PbdwError {
    /// True for failures caused by the data or the numerics rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            PbdwError::RankDeficient { .. }
            | PbdwError::Rank(_)
            | PbdwError::Unisolvency { .. }
            | PbdwError::Identifiability { .. }
            | PbdwError::Stability(_)
            | PbdwError::Conditioning(_)
            | PbdwError::Factorization(_) => true,
            PbdwError::Placement { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
