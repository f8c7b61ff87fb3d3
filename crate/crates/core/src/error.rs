use thiserror::Error;

use crate::mesh::CellCoord;

/// Errors produced by mesh evaluation, compilation, simulation and calibration.
#[derive(Debug, Error)]
pub enum MeshError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Settings and configuration do not describe the same mesh.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input failed a physical or numerical validity check.
    #[error("validation error: {0}")]
    Validation(String),

    /// Problem size exceeds a fixed cap.
    #[error("size error: {what} is {got}, limit is {limit}")]
    Size {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    /// Requested phase is not reachable by the heater in any 2π branch.
    #[error("range error at cell {cell}: phase {target:.6} rad not reachable in [{lo:.6}, {hi:.6}]")]
    Range {
        cell: CellCoord,
        target: f64,
        lo: f64,
        hi: f64,
    },

    /// Required coupling cannot be realized by a cell.
    #[error("infeasible at cell {cell}: {reason}")]
    Infeasible { cell: CellCoord, reason: String },

    /// Least-squares fit failed on every start.
    #[error("fit error: {reason} (best residual {best_residual:.3e})")]
    Fit { reason: String, best_residual: f64 },

    /// A calibration measurement was requested before its route was calibrated.
    #[error("protocol-order error: {0}")]
    Protocol(String),

    /// Input carries no usable signal (zero column, flat fringe, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A quantity diverges (for example zero loss in the complexity model).
    #[error("infinite result: {0}")]
    Infinite(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;
