//! Compilation of target transformations into mesh settings, and of mesh
//! settings into heater voltages.

mod blass;
mod lossy_bs;
mod reck;
mod voltages;
mod xgate;

use serde::{Deserialize, Serialize};

use crate::matrix::C64;
use crate::mesh::{mzi_block, CellCoord, CouplerParams, MeshSettings};

pub use blass::blass_synthesize;
pub use lossy_bs::{lossy_bs_matrix, lossy_bs_settings, LossyBsSpec};
pub use reck::reck_decompose;
pub use voltages::{settings_to_voltages, CellVoltages};
pub use xgate::{xgate_matrix, xgate_settings, GateSpec};

/// Numerical tolerances used by the compilers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest accepted ‖U†U − I‖ for unitary targets.
    pub unitarity: f64,
    /// Largest accepted round-trip residual for a feasible compilation.
    pub residual: f64,
    /// Slack on singular values and coupling ratios.
    pub slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitarity: 1e-8,
            residual: 1e-9,
            slack: 1e-9,
        }
    }
}

/// Note attached to one cell during compilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellNote {
    pub cell: CellCoord,
    pub note: String,
}

/// Outcome of a compilation: settings plus how well they reproduce the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub schema_version: u32,
    pub settings: MeshSettings,
    /// Largest entry-wise `|target − achieved|`.
    pub residual: f64,
    pub feasible: bool,
    pub diagnostics: Vec<CellNote>,
    /// First cell whose required coupling could not be realized.
    pub offending_cell: Option<CellCoord>,
}

/// Entries of an ideal (balanced) cell.
pub(crate) fn ideal_cell(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    crate::mesh::cell_block(theta, phi, &CouplerParams::BALANCED, &CouplerParams::BALANCED)
}

/// Internal phase in [0, π] giving cross power `p` on an MZI with the given
/// couplers, or `None` when `p` lies outside the achievable range by more
/// than `slack`.
pub(crate) fn theta_for_cross_power(p: f64, dc1: CouplerParams, dc2: CouplerParams, slack: f64) -> Option<f64> {
    let (a, b) = crate::mesh::bar_amplitudes(dc1, dc2);
    if a * b < 1e-300 {
        let fixed = 1.0 - (a - b).powi(2);
        return ((p - fixed).abs() <= slack).then_some(0.0);
    }
    let cos = (a * a + b * b - 1.0 + p) / (2.0 * a * b);
    if cos.abs() > 1.0 + slack / (2.0 * a * b) {
        return None;
    }
    Some(cos.clamp(-1.0, 1.0).acos())
}

/// Lower-left entry of the bare MZI (no external phase).
pub(crate) fn mzi_cross(theta: f64, dc1: CouplerParams, dc2: CouplerParams) -> C64 {
    mzi_block(theta, &dc1, &dc2)[1][0]
}
