//! Photon statistics of transfer matrices: permanents, two-photon
//! interference, few-photon Fock evolution and single-photon gate metrics.
//!
//! All matrices follow `T[output][input]`. Lossy (subunitary) matrices give
//! probabilities that do not sum to one; the deficit is the loss.

mod fock;
mod gates;
mod hom;
mod permanent;

pub use fock::{output_distribution, FockDistribution, FOCK_PHOTON_CAP};
pub use gates::{
    gate_fidelity, gate_fidelity_monte_carlo, state_fidelity, superposition_evolve, truth_table, FidelityReport,
    MonteCarloFidelity, SuperpositionOutput, TruthTable,
};
pub use hom::{
    coincidence_probability, hom_scan, visibility, GaussianFit, HomScan, InterferenceKind, SourceModel,
};
pub use permanent::{permanent, permanent_naive, PERMANENT_CAP};
