use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::matrix::TransferMatrix;
use crate::mesh::{forward, CellSetting, MeshConfig, MeshSettings, Topology};

/// Power `n` of the cyclic shift `X|j⟩ = |j+1 mod d⟩` on a `d`-level qudit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub d: usize,
    pub n: usize,
}

impl GateSpec {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        let s = Self { d, n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.n < 1 || self.n > self.d {
            return Err(MeshError::Domain(format!(
                "gate needs 2 ≤ d and 1 ≤ n ≤ d, got d={} n={}",
                self.d, self.n
            )));
        }
        Ok(())
    }
}

/// Permutation matrix of `X^n`: input `j` goes to output `(j + n) mod d`.
pub fn xgate_matrix(d: usize, n: usize) -> TransferMatrix {
    let perm: Vec<usize> = (0..d).map(|j| (j + n) % d).collect();
    TransferMatrix::permutation(&perm).expect("cyclic shift is a permutation")
}

/// Settings on `triangular(d)` realizing `X^n` with ideal cells.
///
/// With 1-based labels `e_{i,j}` (row `i`, column `j` of the triangle, see
/// [`Topology`]) a cell is set to cross iff `j ≤ n` and `i ≤ (d − n) + (j − 1)`;
/// every other cell stays in bar. An output phase layer then removes the
/// phases picked up along each path so the result is the bare permutation.
pub fn xgate_settings(spec: GateSpec) -> Result<MeshSettings> {
    spec.validate()?;
    let GateSpec { d, n } = spec;
    let topo = Topology::Triangular { d };
    let mut settings = MeshSettings::uniform(topo, CellSetting::BAR)?;
    for cell in topo.cell_order() {
        let (i, j) = (cell.row + 1, cell.col + 1);
        if j <= n && i < d - n + j {
            settings.set(cell, CellSetting::CROSS)?;
        }
    }
    let t = forward(&MeshConfig::ideal(topo)?, &settings)?.effective;
    let phases = (0..d)
        .map(|out| {
            let input = (out + d - n % d) % d;
            -t.get(out, input).arg()
        })
        .collect();
    settings.set_output_phases(phases)?;
    Ok(settings)
}
