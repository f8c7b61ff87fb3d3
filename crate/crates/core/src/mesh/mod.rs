//! Unit cells, mesh topologies and forward evaluation.
//!
//! A unit cell is an external phase shifter on its upper mode followed by a
//! Mach-Zehnder interferometer made of two directional couplers around an
//! internal phase shifter. Couplers follow the symmetric convention
//! `[[√(1−η), i√η], [i√η, √(1−η)]]`; every module in this crate relies on it.

mod cell;
mod fabrication;
mod forward;
mod loss;
mod topology;

pub use cell::{
    achievable_split_range, dc_matrix, fold_phase, mzi_bar_power, mzi_matrix, phase_distance, CellParams,
    CellSetting, CouplerParams, HeaterLaw,
};
pub(crate) use cell::{bar_amplitudes, cell_block, mzi_block};
pub use fabrication::FabricationModel;
pub use forward::{forward, propagate_input, Forward};
pub use loss::{apply_chip_loss, db_to_amplitude, db_to_power, ChipLossModel, PathLengths};
pub use topology::{CellCoord, MeshConfig, MeshSettings, Topology};

/// Default heater responsivity, rad/V².
pub const NOMINAL_HEATER_COEF: f64 = 0.05;
