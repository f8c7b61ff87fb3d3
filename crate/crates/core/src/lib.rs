//! Simulation, compilation and calibration of programmable linear-optical
//! processors built from tunable Mach-Zehnder unit cells.

pub mod error;
pub mod matrix;
pub mod calibration;
pub mod compiler;
pub mod complexity;
mod lsq;
pub mod mesh;
pub mod quantum;
pub mod report;

pub use error::{MeshError, Result};
pub use matrix::{TransferMatrix, C64};
pub use mesh::{
    apply_chip_loss, forward, CellCoord, CellParams, CellSetting, ChipLossModel, CouplerParams, FabricationModel,
    MeshConfig, MeshSettings, Topology,
};

/// Version tag written into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;
