use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::cell::{fold_phase, CellParams, CouplerParams, HeaterLaw};
use crate::mesh::topology::{MeshConfig, Topology};
use crate::mesh::NOMINAL_HEATER_COEF;

/// Statistical model of fabrication spread used to sample hidden cell
/// parameters. Defaults reproduce the characterized chip: coupler ratios
/// 0.497 ± 0.126 clipped to [0.05, 0.95], internal phase offsets
/// 3.5 ± 1.85 rad folded into [0, 2π), and a 3π/2 design tuning range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FabricationModel {
    pub eta_mean: f64,
    pub eta_sd: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    pub offset_mean: f64,
    pub offset_sd: f64,
    /// Nominal heater responsivity, rad/V².
    pub coef_nominal: f64,
    /// Relative spread of heater responsivity.
    pub coef_rel_sd: f64,
    /// Tuning range reached by a nominal heater at the voltage limit.
    pub design_range: f64,
    /// External phase offsets are drawn uniformly from [0, 2π) when true,
    /// otherwise they are zero.
    pub random_external_offsets: bool,
}

impl Default for FabricationModel {
    fn default() -> Self {
        Self {
            eta_mean: 0.497,
            eta_sd: 0.126,
            eta_min: 0.05,
            eta_max: 0.95,
            offset_mean: 3.5,
            offset_sd: 1.85,
            coef_nominal: NOMINAL_HEATER_COEF,
            coef_rel_sd: 0.05,
            design_range: 1.5 * PI,
            random_external_offsets: true,
        }
    }
}

impl FabricationModel {
    /// No spread: every cell equals the nominal design.
    pub fn ideal() -> Self {
        Self {
            eta_mean: 0.5,
            eta_sd: 0.0,
            offset_mean: 0.0,
            offset_sd: 0.0,
            coef_rel_sd: 0.0,
            random_external_offsets: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta_sd >= 0.0
            && self.offset_sd >= 0.0
            && self.coef_rel_sd >= 0.0
            && (0.0..=1.0).contains(&self.eta_min)
            && (0.0..=1.0).contains(&self.eta_max)
            && self.eta_min <= self.eta_max
            && self.coef_nominal > 0.0
            && self.design_range > 0.0;
        if !ok {
            return Err(MeshError::Domain(format!("invalid fabrication model {self:?}")));
        }
        Ok(())
    }

    /// Heater voltage limit: the nominal heater reaches `design_range` at it.
    pub fn voltage_limit(&self) -> f64 {
        (self.design_range / self.coef_nominal).sqrt()
    }

    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> CellParams {
        let eta = Normal::new(self.eta_mean, self.eta_sd).expect("validated sd");
        let offset = Normal::new(self.offset_mean, self.offset_sd).expect("validated sd");
        let coef = Normal::new(1.0, self.coef_rel_sd).expect("validated sd");
        let mut draw_eta = || eta.sample(rng).clamp(self.eta_min, self.eta_max);
        let dc1 = CouplerParams { eta: draw_eta() };
        let dc2 = CouplerParams { eta: draw_eta() };
        let phase_offset = fold_phase(offset.sample(rng));
        let u_max2 = self.design_range / self.coef_nominal;
        let internal_coef = (self.coef_nominal * coef.sample(rng)).max(1e-6 * self.coef_nominal);
        let external_coef = (self.coef_nominal * coef.sample(rng)).max(1e-6 * self.coef_nominal);
        let external_offset = if self.random_external_offsets {
            rng.random_range(0.0..TAU)
        } else {
            0.0
        };
        CellParams {
            dc1,
            dc2,
            phase_offset,
            phase_range: internal_coef * u_max2,
            internal_coef,
            external: HeaterLaw {
                offset: external_offset,
                coef: external_coef,
            },
        }
    }

    /// Samples a full mesh, cells drawn in the topology's cell order.
    pub fn sample_mesh<R: Rng + ?Sized>(&self, topology: Topology, rng: &mut R) -> Result<MeshConfig> {
        self.validate()?;
        topology.validate()?;
        let cells = topology
            .cell_order()
            .into_iter()
            .map(|c| (c, self.sample_cell(rng)))
            .collect();
        MeshConfig::new(topology, cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_respect_bounds_and_statistics() {
        let fab = FabricationModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let mut etas = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let c = fab.sample_cell(&mut rng);
            c.validate().unwrap();
            etas.push(c.dc1.eta);
            etas.push(c.dc2.eta);
            assert!((0.0..TAU).contains(&c.phase_offset));
        }
        assert!(etas.iter().all(|e| (0.05..=0.95).contains(e)));
        let mean = etas.iter().sum::<f64>() / etas.len() as f64;
        assert!((mean - 0.497).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn ideal_model_is_deterministic() {
        let fab = FabricationModel::ideal();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = fab.sample_cell(&mut rng);
        assert_eq!(c.dc1.eta, 0.5);
        assert_eq!(c.phase_offset, 0.0);
        assert!((c.phase_range - 1.5 * PI).abs() < 1e-12);
    }

    proptest::proptest! {
        /// Any tuning window of at least π holds π/2 or 3π/2 (mod 2π), so
        /// balanced couplers can always be set to 50:50.
        #[test]
        fn balanced_split_is_reachable(seed in proptest::prelude::any::<u64>()) {
            let c = FabricationModel::default().sample_cell(&mut ChaCha8Rng::seed_from_u64(seed));
            let hits = [0.5 * PI, 1.5 * PI].iter().any(|&t| {
                let k = ((c.phase_offset - t) / TAU).ceil();
                t + k * TAU <= c.phase_offset + c.phase_range
            });
            proptest::prop_assert!(hits, "offset {} range {}", c.phase_offset, c.phase_range);
        }
    }

    #[test]
    fn voltage_limit_gives_design_range() {
        let fab = FabricationModel::default();
        let u = fab.voltage_limit();
        assert!((fab.coef_nominal * u * u - 1.5 * PI).abs() < 1e-12);
    }
}
