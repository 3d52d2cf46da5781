use crate::stokes::SolveReport;

/// Errors raised anywhere in the toolkit.
///
/// The message strings are part of the command-line contract: the CLI
/// prints them verbatim in its JSON error payload.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("alpha out of range: {0} is not in the open interval (1, 3)")]
    AlphaOutOfRange(f64),

    #[error("epsilon out of range: {0} is not in (0, 1)")]
    EpsilonOutOfRange(f64),

    #[error("(2ε)⁻¹ not integer: epsilon = {0} does not tile the torus")]
    TorusTiling(f64),

    #[error("obstacle exceeds B(0,1/8): bounding radius {0}")]
    ObstacleTooLarge(f64),

    #[error("hole does not fit inside B(x_k, ε/4): radius {radius} vs ε/4 = {limit}")]
    HoleTooLarge { radius: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("under-resolved hole: {cells:.2} cells across the diameter, need {required}")]
    UnderResolved { cells: f64, required: f64 },

    #[error("disconnected fluid region: {components} components")]
    DisconnectedFluid { components: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("matrix not SPD: {0}")]
    NotSpd(String),

    #[error("solver did not converge: {what} (residual {:.3e} after {} iterations)", report.residual_momentum.max(report.residual_div), report.iterations)]
    NoConvergence { what: String, report: Box<SolveReport> },

    #[error("truncation too small: R = {r} (need R ≥ 2)")]
    TruncationTooSmall { r: f64 },

    #[error("need ≥ 3 truncation radii, got {0}")]
    TooFewRadii(usize),

    #[error("truncation study inconsistent: {0}")]
    TruncationInconsistent(String),

    #[error("degenerate obstacle: resistance matrix is singular")]
    DegenerateObstacle,

    #[error("degenerate resistance: comparison requires a non-empty hole set")]
    DegenerateResistance,

    #[error("cell truncation insufficient for this ε: need R ≥ {needed:.3}, have {have:.3}")]
    CellTruncation { needed: f64, have: f64 },

    #[error("need ≥ 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("non-positive value {0} in rate fit")]
    NonPositive(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that come from the numerical solvers rather than from
    /// invalid input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::DisconnectedFluid { .. }
                | Error::DegenerateObstacle
                | Error::DegenerateResistance
                | Error::TruncationInconsistent(_)
                | Error::NonFinite(_)
        )
    }
}
