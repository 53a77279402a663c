use thiserror::Error;

/// Errors raised by the library.
///
/// The variants fall into three families that the CLI maps to exit codes:
/// refusals (the input sits on or too close to a degenerate configuration),
/// numerical failures, and invalid input.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("root finder did not converge after {iterations} iterations (max correction {max_correction:e})")]
    RootsNotConverged { iterations: usize, max_correction: f64 },

    #[error("path segment {segment} passes within {distance:e} of root {root} (clearance {clearance:e})")]
    ClearanceViolation {
        segment: usize,
        root: usize,
        distance: f64,
        clearance: f64,
    },

    #[error("near collision: {0}; shrink epsilon or the capture tolerance")]
    NearCollision(String),

    #[error("separatrix {0} is homoclinic; no diagram can be read off at this slant")]
    Homoclinic(usize),

    #[error("every slant in the grid produced a homoclinic configuration")]
    AllSlantsHomoclinic,

    #[error("inconsistent sector endpoints: {0}")]
    InconsistentSectors(String),

    #[error("geometry inconsistency: {0}")]
    Geometry(String),

    #[error("gate system inconsistent: closing residual {0:e}")]
    GateInconsistent(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("factorization retries exhausted")]
    RetriesExhausted,

    #[error("normalization position {0} has a zero entry")]
    ZeroPosition(String),

    #[error("normalization positions do not connect all {0} indices")]
    DisconnectedPositions(usize),

    #[error("growth rates not separated: gap {gap:e} below floor {floor:e} at {context}")]
    GrowthRates { gap: f64, floor: f64, context: String },

    #[error("flags not transverse: principal angle {angle:e} below floor {floor:e} in sector {sector}")]
    Transversality { angle: f64, floor: f64, sector: usize },

    #[error("triangularity violated for {matrix}: off-triangle residual {residual:e}")]
    Triangularity { matrix: String, residual: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("schema: {0}")]
    Schema(String),
}

impl Error {
    /// True for errors that mean "the input is on or near a degenerate configuration".
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::NearCollision(_)
                | Error::Homoclinic(_)
                | Error::AllSlantsHomoclinic
                | Error::ClearanceViolation { .. }
                | Error::GrowthRates { .. }
                | Error::Transversality { .. }
        )
    }

    /// True for invalid-input errors.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Schema(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
