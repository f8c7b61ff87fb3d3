use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::cell::{CellParams, CellSetting, CouplerParams, HeaterLaw};
use crate::SCHEMA_VERSION;

/// Grid coordinate of a unit cell, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub row: usize,
    pub col: usize,
}

impl CellCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Mesh layout.
///
/// **Blass** (`d` inputs, `d` outputs, `d²` cells). The mesh is modelled on
/// `2d` waveguides: row lines `0..d` carry the inputs, column lines `d..2d`
/// start in vacuum and end at the outputs. Cell `(i, j)` couples row line `i`
/// (upper mode) to column line `d + j` (lower mode); cells act in row-major
/// order. The row remnants after the last column are terminated loss ports.
///
/// **Triangular** (Reck, `d(d−1)/2` cells). Cell `(r, k)` with
/// `0 ≤ k ≤ r ≤ d−2` acts on adjacent modes `(d−2−r, d−1−r)`. Cells are
/// grouped in diagonals `s = r − k`; diagonal `s` sweeps its mode pairs from
/// the top of the mesh downwards, and diagonals act in increasing `s`. With
/// 1-based labels `e_{i,j} = (r+1, k+1)`, column `j` holds rows `j..d−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    Blass { d: usize },
    Triangular { d: usize },
}

impl Topology {
    pub fn d(&self) -> usize {
        match *self {
            Topology::Blass { d } | Topology::Triangular { d } => d,
        }
    }

    pub fn cell_count(&self) -> usize {
        match *self {
            Topology::Blass { d } => d * d,
            Topology::Triangular { d } => d * d.saturating_sub(1) / 2,
        }
    }

    /// Number of waveguides in the full model.
    pub fn mode_count(&self) -> usize {
        match *self {
            Topology::Blass { d } => 2 * d,
            Topology::Triangular { d } => d,
        }
    }

    /// Cells in the order they act on light.
    pub fn cell_order(&self) -> Vec<CellCoord> {
        match *self {
            Topology::Blass { d } => (0..d)
                .flat_map(|i| (0..d).map(move |j| CellCoord::new(i, j)))
                .collect(),
            Topology::Triangular { d } => {
                let mut out = Vec::with_capacity(self.cell_count());
                for s in 0..d.saturating_sub(1) {
                    for c in 0..(d - 1 - s) {
                        let r = d - 2 - c;
                        out.push(CellCoord::new(r, r - s));
                    }
                }
                out
            }
        }
    }

    /// Full-model mode pair `(upper, lower)` a cell acts on.
    pub fn modes_of(&self, cell: CellCoord) -> (usize, usize) {
        match *self {
            Topology::Blass { d } => (cell.row, d + cell.col),
            Topology::Triangular { d } => (d - 2 - cell.row, d - 1 - cell.row),
        }
    }

    pub fn contains(&self, cell: CellCoord) -> bool {
        match *self {
            Topology::Blass { d } => cell.row < d && cell.col < d,
            Topology::Triangular { d } => d >= 2 && cell.row <= d - 2 && cell.col <= cell.row,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Topology::Blass { d } if d == 0 => Err(MeshError::Config("blass mesh needs d ≥ 1".into())),
            Topology::Triangular { d } if d < 2 => {
                Err(MeshError::Config("triangular mesh needs d ≥ 2".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Topology plus per-cell fabrication parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    topology: Topology,
    cells: BTreeMap<CellCoord, CellParams>,
}

impl MeshConfig {
    pub fn new(topology: Topology, cells: BTreeMap<CellCoord, CellParams>) -> Result<Self> {
        topology.validate()?;
        if cells.len() != topology.cell_count() {
            return Err(MeshError::Config(format!(
                "{:?} needs {} cells, got {}",
                topology,
                topology.cell_count(),
                cells.len()
            )));
        }
        for (coord, p) in &cells {
            if !topology.contains(*coord) {
                return Err(MeshError::Config(format!("cell {coord} is not part of {topology:?}")));
            }
            p.validate()?;
        }
        Ok(Self { topology, cells })
    }

    /// Every cell set to [`CellParams::ideal`].
    pub fn ideal(topology: Topology) -> Result<Self> {
        Self::uniform(topology, CellParams::ideal())
    }

    pub fn uniform(topology: Topology, params: CellParams) -> Result<Self> {
        topology.validate()?;
        let cells = topology.cell_order().into_iter().map(|c| (c, params)).collect();
        Self::new(topology, cells)
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn d(&self) -> usize {
        self.topology.d()
    }

    pub fn cells(&self) -> &BTreeMap<CellCoord, CellParams> {
        &self.cells
    }

    pub fn cell(&self, coord: CellCoord) -> Option<&CellParams> {
        self.cells.get(&coord)
    }

    pub fn set_cell(&mut self, coord: CellCoord, params: CellParams) -> Result<()> {
        params.validate()?;
        match self.cells.get_mut(&coord) {
            Some(slot) => {
                *slot = params;
                Ok(())
            }
            None => Err(MeshError::Config(format!("cell {coord} not in mesh"))),
        }
    }
}

/// Programmable state: one [`CellSetting`] per cell and an optional output
/// phase layer (one phase per output mode, empty when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSettings {
    topology: Topology,
    cells: BTreeMap<CellCoord, CellSetting>,
    output_phases: Vec<f64>,
}

impl MeshSettings {
    pub fn new(
        topology: Topology,
        cells: BTreeMap<CellCoord, CellSetting>,
        output_phases: Vec<f64>,
    ) -> Result<Self> {
        topology.validate()?;
        if cells.len() != topology.cell_count() || cells.keys().any(|c| !topology.contains(*c)) {
            return Err(MeshError::Config(format!(
                "settings cover {} cells, {:?} has {}",
                cells.len(),
                topology,
                topology.cell_count()
            )));
        }
        if !output_phases.is_empty() && output_phases.len() != topology.d() {
            return Err(MeshError::Config(format!(
                "output phase layer has {} entries, expected {}",
                output_phases.len(),
                topology.d()
            )));
        }
        if cells.values().any(|s| !s.theta.is_finite() || !s.phi.is_finite())
            || output_phases.iter().any(|p| !p.is_finite())
        {
            return Err(MeshError::Config("settings contain non-finite phases".into()));
        }
        Ok(Self {
            topology,
            cells,
            output_phases,
        })
    }

    pub fn uniform(topology: Topology, setting: CellSetting) -> Result<Self> {
        topology.validate()?;
        let cells = topology.cell_order().into_iter().map(|c| (c, setting)).collect();
        Self::new(topology, cells, Vec::new())
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn cells(&self) -> &BTreeMap<CellCoord, CellSetting> {
        &self.cells
    }

    pub fn get(&self, coord: CellCoord) -> Option<CellSetting> {
        self.cells.get(&coord).copied()
    }

    pub fn set(&mut self, coord: CellCoord, setting: CellSetting) -> Result<()> {
        match self.cells.get_mut(&coord) {
            Some(slot) => {
                *slot = setting;
                Ok(())
            }
            None => Err(MeshError::Config(format!("cell {coord} not in mesh"))),
        }
    }

    pub fn output_phases(&self) -> &[f64] {
        &self.output_phases
    }

    pub fn set_output_phases(&mut self, phases: Vec<f64>) -> Result<()> {
        if !phases.is_empty() && phases.len() != self.topology.d() {
            return Err(MeshError::Config(format!(
                "output phase layer needs {} entries",
                self.topology.d()
            )));
        }
        self.output_phases = phases;
        Ok(())
    }

    /// Fails unless the key set matches `config`.
    pub fn check_against(&self, config: &MeshConfig) -> Result<()> {
        if self.topology != config.topology() {
            return Err(MeshError::Config(format!(
                "settings are for {:?}, config is {:?}",
                self.topology,
                config.topology()
            )));
        }
        if let Some(c) = config.cells().keys().find(|c| !self.cells.contains_key(c)) {
            return Err(MeshError::Config(format!("no setting for cell {c}")));
        }
        Ok(())
    }
}

// JSON representation -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellParamsEntry {
    row: usize,
    col: usize,
    dc1: CouplerParams,
    dc2: CouplerParams,
    phase_offset: f64,
    phase_range: f64,
    internal_coef: f64,
    external: HeaterLaw,
}

impl CellParamsEntry {
    fn new(c: CellCoord, p: &CellParams) -> Self {
        Self {
            row: c.row,
            col: c.col,
            dc1: p.dc1,
            dc2: p.dc2,
            phase_offset: p.phase_offset,
            phase_range: p.phase_range,
            internal_coef: p.internal_coef,
            external: p.external,
        }
    }

    fn params(&self) -> CellParams {
        CellParams {
            dc1: self.dc1,
            dc2: self.dc2,
            phase_offset: self.phase_offset,
            phase_range: self.phase_range,
            internal_coef: self.internal_coef,
            external: self.external,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshConfigRepr {
    schema_version: u32,
    topology: Topology,
    cells: Vec<CellParamsEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellSettingEntry {
    row: usize,
    col: usize,
    theta: f64,
    phi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSettingsRepr {
    schema_version: u32,
    topology: Topology,
    cells: Vec<CellSettingEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    output_phases: Vec<f64>,
}

fn check_version<E: serde::de::Error>(v: u32) -> Result<(), E> {
    if v != SCHEMA_VERSION {
        return Err(E::custom(format!(
            "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

impl Serialize for MeshConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MeshConfigRepr {
            schema_version: SCHEMA_VERSION,
            topology: self.topology,
            cells: self
                .cells
                .iter()
                .map(|(c, p)| CellParamsEntry::new(*c, p))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeshConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MeshConfigRepr::deserialize(d)?;
        check_version(repr.schema_version)?;
        let mut cells = BTreeMap::new();
        for e in repr.cells {
            let key = CellCoord::new(e.row, e.col);
            if cells.insert(key, e.params()).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate cell {key}")));
            }
        }
        MeshConfig::new(repr.topology, cells).map_err(serde::de::Error::custom)
    }
}

impl Serialize for MeshSettings {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MeshSettingsRepr {
            schema_version: SCHEMA_VERSION,
            topology: self.topology,
            cells: self
                .cells
                .iter()
                .map(|(c, st)| CellSettingEntry {
                    row: c.row,
                    col: c.col,
                    theta: st.theta,
                    phi: st.phi,
                })
                .collect(),
            output_phases: self.output_phases.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeshSettings {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MeshSettingsRepr::deserialize(d)?;
        check_version(repr.schema_version)?;
        let mut cells = BTreeMap::new();
        for e in repr.cells {
            let key = CellCoord::new(e.row, e.col);
            if cells.insert(key, CellSetting::new(e.theta, e.phi)).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate cell {key}")));
            }
        }
        MeshSettings::new(repr.topology, cells, repr.output_phases).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_counts() {
        assert_eq!(Topology::Blass { d: 8 }.cell_count(), 64);
        assert_eq!(Topology::Triangular { d: 8 }.cell_count(), 28);
        assert_eq!(Topology::Triangular { d: 8 }.cell_order().len(), 28);
        let order = Topology::Blass { d: 3 }.cell_order();
        assert_eq!(order[1], CellCoord::new(0, 1));
        assert_eq!(order[3], CellCoord::new(1, 0));
    }

    #[test]
    fn triangular_order_is_diagonal_sweep() {
        let t = Topology::Triangular { d: 4 };
        let order = t.cell_order();
        let modes: Vec<usize> = order.iter().map(|c| t.modes_of(*c).0).collect();
        assert_eq!(modes, vec![0, 1, 2, 0, 1, 0]);
        let mut sorted = order.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
        assert!(order.iter().all(|c| t.contains(*c)));
    }

    #[test]
    fn config_rejects_missing_cells() {
        let t = Topology::Blass { d: 2 };
        let mut cells: BTreeMap<_, _> = t.cell_order().into_iter().map(|c| (c, CellParams::ideal())).collect();
        cells.remove(&CellCoord::new(1, 1));
        assert!(MeshConfig::new(t, cells).is_err());
    }

    #[test]
    fn settings_json_rejects_unknown_fields_and_versions() {
        let s = MeshSettings::uniform(Topology::Blass { d: 1 }, CellSetting::BAR).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: MeshSettings = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = json.replace("\"schema_version\":1", "\"schema_version\":99");
        assert!(serde_json::from_str::<MeshSettings>(&bad).is_err());
        let extra = json.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<MeshSettings>(&extra).is_err());
    }

    #[test]
    fn config_json_roundtrip() {
        let c = MeshConfig::ideal(Topology::Triangular { d: 3 }).unwrap();
        let json = serde_json::to_string_pretty(&c).unwrap();
        assert!(json.contains("\"kind\": \"triangular\""));
        let back: MeshConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn check_against_detects_topology_mismatch() {
        let c = MeshConfig::ideal(Topology::Blass { d: 2 }).unwrap();
        let s = MeshSettings::uniform(Topology::Triangular { d: 2 }, CellSetting::BAR).unwrap();
        assert!(matches!(s.check_against(&c), Err(MeshError::Config(_))));
    }
}
