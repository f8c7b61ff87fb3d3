//! Heater characterization of a Blass mesh from photon counts.

mod curve;
mod device;
mod fit;
mod protocol;
mod refine;
mod table;

pub use curve::{fringe_model, heater_phase, CalibrationCurve, CellVoltages};
pub use device::{Noise, Port, VirtualDevice, VoltageMap};
pub use fit::{fit_fringe, FringeData, FringeFit, MIN_FRINGE_POINTS};
pub use protocol::{calibrate_mesh, couplers_from_fringe, synth_fringe, CalibrationOptions};
pub use table::{CalibrationEntry, CalibrationSummary, CalibrationTable, CellFlag, Stat};
