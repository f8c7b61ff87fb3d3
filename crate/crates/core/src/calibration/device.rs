use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::{propagate_input, CellCoord, CellSetting, FabricationModel, MeshConfig, MeshSettings, Topology};

use super::curve::CellVoltages;

/// Heater voltages for a whole mesh; absent cells sit at 0 V.
pub type VoltageMap = BTreeMap<CellCoord, CellVoltages>;

/// Counting statistics of a [`VirtualDevice`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Poisson-distributed photon counts.
    Poisson,
    /// Expected counts, no sampling.
    Noiseless,
}

/// Output port of a cell, relative to the light entering on its row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Bar,
    Cross,
}

/// Software stand-in for a fabricated Blass chip.
///
/// The hidden cell parameters are only observable through photon counts
/// returned by [`VirtualDevice::measure`]. [`VirtualDevice::ground_truth`]
/// exists so that tests and reports can score a calibration afterwards.
#[derive(Debug, Clone)]
pub struct VirtualDevice {
    config: MeshConfig,
    voltage_limit: f64,
    seed: u64,
    noise: Noise,
    rng: ChaCha8Rng,
    fabrication: Option<FabricationModel>,
}

impl VirtualDevice {
    /// Samples hidden parameters of `blass(d)` from `fab`, seeded.
    pub fn sample(d: usize, fab: &FabricationModel, seed: u64, noise: Noise) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = fab.sample_mesh(Topology::Blass { d }, &mut rng)?;
        Ok(Self {
            config,
            voltage_limit: fab.voltage_limit(),
            seed,
            noise,
            rng,
            fabrication: Some(*fab),
        })
    }

    /// Wraps explicitly chosen hidden parameters.
    pub fn from_config(config: MeshConfig, voltage_limit: f64, seed: u64, noise: Noise) -> Result<Self> {
        if !matches!(config.topology(), Topology::Blass { .. }) {
            return Err(MeshError::Unsupported(
                "virtual devices are modelled on the blass topology only".into(),
            ));
        }
        if !(voltage_limit > 0.0) {
            return Err(MeshError::Domain(format!("voltage limit {voltage_limit} must be positive")));
        }
        Ok(Self {
            config,
            voltage_limit,
            seed,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fabrication: None,
        })
    }

    pub fn topology(&self) -> Topology {
        self.config.topology()
    }

    pub fn d(&self) -> usize {
        self.config.d()
    }

    pub fn voltage_limit(&self) -> f64 {
        self.voltage_limit
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn fabrication(&self) -> Option<&FabricationModel> {
        self.fabrication.as_ref()
    }

    /// Hidden parameters. Calibration code must not call this.
    pub fn ground_truth(&self) -> &MeshConfig {
        &self.config
    }

    /// Phases the heaters produce for `voltages`.
    pub(crate) fn settings_for(&self, voltages: &VoltageMap) -> Result<MeshSettings> {
        let topo = self.topology();
        let mut cells = BTreeMap::new();
        for coord in topo.cell_order() {
            let v = voltages.get(&coord).copied().unwrap_or_default();
            for u in [v.internal, v.external] {
                if !(0.0..=self.voltage_limit * (1.0 + 1e-12)).contains(&u) {
                    return Err(MeshError::Domain(format!(
                        "voltage {u} at cell {coord} outside [0, {}]",
                        self.voltage_limit
                    )));
                }
            }
            let p = self.config.cell(coord).expect("complete config");
            cells.insert(
                coord,
                CellSetting::new(p.internal_law().phase(v.internal), p.external.phase(v.external)),
            );
        }
        MeshSettings::new(topo, cells, Vec::new())
    }

    /// Detected counts at output column `output` for `shots` photons sent into
    /// input row `input`.
    pub fn measure(&mut self, voltages: &VoltageMap, input: usize, output: usize, shots: f64) -> Result<f64> {
        let d = self.d();
        if output >= d {
            return Err(MeshError::Domain(format!("output {output} outside 0..{d}")));
        }
        if !(shots > 0.0) {
            return Err(MeshError::Domain("shots must be positive".into()));
        }
        let settings = self.settings_for(voltages)?;
        let amp = propagate_input(&self.config, &settings, input)?[d + output];
        let lambda = shots * amp.norm_sqr();
        Ok(match self.noise {
            Noise::Noiseless => lambda,
            Noise::Poisson if lambda > 0.0 => Poisson::new(lambda)
                .map_err(|e| MeshError::Domain(e.to_string()))?
                .sample(&mut self.rng),
            Noise::Poisson => 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurements_are_reproducible() {
        let fab = FabricationModel::default();
        let mut a = VirtualDevice::sample(3, &fab, 42, Noise::Poisson).unwrap();
        let mut b = VirtualDevice::sample(3, &fab, 42, Noise::Poisson).unwrap();
        let v = VoltageMap::new();
        for _ in 0..5 {
            assert_eq!(a.measure(&v, 2, 0, 1e4).unwrap(), b.measure(&v, 2, 0, 1e4).unwrap());
        }
        assert_eq!(a.ground_truth(), b.ground_truth());
    }

    #[test]
    fn overvoltage_rejected() {
        let mut dev = VirtualDevice::sample(2, &FabricationModel::ideal(), 1, Noise::Noiseless).unwrap();
        let mut v = VoltageMap::new();
        v.insert(CellCoord::new(0, 0), CellVoltages { internal: 100.0, external: 0.0 });
        assert!(dev.measure(&v, 0, 0, 1.0).is_err());
    }

    #[test]
    fn triangular_devices_unsupported() {
        let cfg = MeshConfig::ideal(Topology::Triangular { d: 3 }).unwrap();
        assert!(matches!(
            VirtualDevice::from_config(cfg, 9.0, 0, Noise::Noiseless),
            Err(MeshError::Unsupported(_))
        ));
    }
}
