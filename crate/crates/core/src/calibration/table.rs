use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::{fold_phase, CellCoord, CellParams, CouplerParams, FabricationModel, HeaterLaw, MeshConfig, Topology};

use super::curve::CalibrationCurve;

/// Reason a table entry should be treated with care.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", content = "detail", rename_all = "snake_case")]
pub enum CellFlag {
    /// Internal fringe amplitude indistinguishable from noise.
    Unidentifiable,
    /// No interferometer isolates this cell; couplers left on the `η₁ + η₂ ≤ 1` branch.
    BranchUnresolved,
    /// External phase only sets the phase of an input, offset fixed to 0.
    InputGauge,
    /// External phase only sets the phase of an output, offset fixed to 0.
    OutputGauge,
    /// External heater coefficient not measured, nominal value used.
    NominalCoefficient,
    FitFailed(String),
}

/// Calibration result for one unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEntry {
    pub cell: CellCoord,
    /// Bar-port fringe of the internal heater.
    pub internal: CalibrationCurve,
    /// Interference fringe of the external heater; `c` is the external phase offset.
    pub external: CalibrationCurve,
    pub internal_residual: f64,
    /// `None` when the external heater was never swept.
    pub external_residual: Option<f64>,
    /// Reachable bar-power interval `[a − b, a + b]`.
    pub split_range: (f64, f64),
    /// Recovered coupler ratios `(η₁, η₂)`.
    pub couplers: (f64, f64),
    /// Internal phase reachable between 0 V and the voltage limit.
    pub phase_range: f64,
    pub flags: Vec<CellFlag>,
}

impl CalibrationEntry {
    pub fn is_flagged(&self, flag: &CellFlag) -> bool {
        self.flags.contains(flag)
    }

    /// Estimated fabrication parameters of the cell.
    pub fn cell_params(&self) -> CellParams {
        CellParams {
            dc1: CouplerParams { eta: self.couplers.0.clamp(0.0, 1.0) },
            dc2: CouplerParams { eta: self.couplers.1.clamp(0.0, 1.0) },
            phase_offset: fold_phase(self.internal.c),
            phase_range: if self.phase_range > 0.0 { self.phase_range } else { f64::MIN_POSITIVE },
            internal_coef: self.internal.d_coef,
            external: HeaterLaw {
                offset: fold_phase(self.external.c),
                coef: self.external.d_coef,
            },
        }
    }
}

/// Mean and standard deviation of a recovered quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, count: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        Self { mean, std: var.sqrt(), count: n }
    }
}

/// Population statistics of a calibrated mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub coupler_ratio: Stat,
    pub phase_offset: Stat,
    pub phase_range: Stat,
    pub flagged_cells: usize,
}

/// Per-cell calibration of a whole mesh plus the provenance of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub topology: Topology,
    /// Heater voltage limit used for every sweep.
    pub voltage_limit: f64,
    pub shots: f64,
    pub device_seed: u64,
    pub fabrication: Option<FabricationModel>,
    entries: BTreeMap<CellCoord, CalibrationEntry>,
}

impl CalibrationTable {
    pub fn new(topology: Topology, voltage_limit: f64, shots: f64, device_seed: u64) -> Self {
        Self {
            topology,
            voltage_limit,
            shots,
            device_seed,
            fabrication: None,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, entry: CalibrationEntry) -> Result<()> {
        if !self.topology.contains(entry.cell) {
            return Err(MeshError::Config(format!("cell {} not in {:?}", entry.cell, self.topology)));
        }
        self.entries.insert(entry.cell, entry);
        Ok(())
    }

    pub fn entry(&self, cell: CellCoord) -> Option<&CalibrationEntry> {
        self.entries.get(&cell)
    }

    pub(crate) fn entry_mut(&mut self, cell: CellCoord) -> Option<&mut CalibrationEntry> {
        self.entries.get_mut(&cell)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CalibrationEntry> {
        self.entries.values()
    }

    pub fn contains(&self, cell: CellCoord) -> bool {
        self.entries.contains_key(&cell)
    }

    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.topology.cell_count()
    }

    /// Mesh model assembled from the recovered parameters.
    pub fn to_mesh_config(&self) -> Result<MeshConfig> {
        if !self.is_complete() {
            return Err(MeshError::Config(format!(
                "table covers {} of {} cells",
                self.entries.len(),
                self.topology.cell_count()
            )));
        }
        MeshConfig::new(self.topology, self.entries.iter().map(|(c, e)| (*c, e.cell_params())).collect())
    }

    pub fn summary(&self) -> CalibrationSummary {
        let etas: Vec<f64> = self.entries().flat_map(|e| [e.couplers.0, e.couplers.1]).collect();
        let offsets: Vec<f64> = self
            .entries()
            .filter(|e| !e.is_flagged(&CellFlag::Unidentifiable))
            .map(|e| e.internal.c)
            .collect();
        let ranges: Vec<f64> = self.entries().map(|e| e.phase_range).collect();
        CalibrationSummary {
            coupler_ratio: Stat::of(&etas),
            phase_offset: Stat::of(&offsets),
            phase_range: Stat::of(&ranges),
            flagged_cells: self
                .entries()
                .filter(|e| {
                    e.flags
                        .iter()
                        .any(|f| matches!(f, CellFlag::Unidentifiable | CellFlag::FitFailed(_)))
                })
                .count(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRepr {
    schema_version: u32,
    topology: Topology,
    voltage_limit: f64,
    shots: f64,
    device_seed: u64,
    #[serde(default)]
    fabrication: Option<FabricationModel>,
    #[serde(default)]
    summary: Option<CalibrationSummary>,
    entries: Vec<CalibrationEntry>,
}

impl Serialize for CalibrationTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TableRepr {
            schema_version: crate::SCHEMA_VERSION,
            topology: self.topology,
            voltage_limit: self.voltage_limit,
            shots: self.shots,
            device_seed: self.device_seed,
            fabrication: self.fabrication,
            summary: Some(self.summary()),
            entries: self.entries.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CalibrationTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = TableRepr::deserialize(d)?;
        if r.schema_version != crate::SCHEMA_VERSION {
            return Err(D::Error::custom(format!("unsupported schema_version {}", r.schema_version)));
        }
        let mut t = CalibrationTable::new(r.topology, r.voltage_limit, r.shots, r.device_seed);
        t.fabrication = r.fabrication;
        for e in r.entries {
            t.insert(e).map_err(D::Error::custom)?;
        }
        Ok(t)
    }
}
