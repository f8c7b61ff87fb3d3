use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::matrix::{TransferMatrix, C64};
use crate::mesh::{CellCoord, CellSetting, MeshSettings, Topology};

use super::ideal_cell;

/// Lossy beam splitter `½[[1, 1], [1, e^{iα}]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossyBsSpec {
    pub alpha: f64,
}

pub fn lossy_bs_matrix(alpha: f64) -> TransferMatrix {
    let h = C64::new(0.5, 0.0);
    TransferMatrix::from_rows(&[vec![h, h], vec![h, C64::from_polar(0.5, alpha)]]).expect("2x2")
}

/// Picks θ ∈ [0, π] and φ so that the ideal cell's row→column amplitude is `target`.
fn cross_to(target: C64) -> CellSetting {
    let m = target.norm().min(1.0);
    let theta = 2.0 * m.acos();
    let base = ideal_cell(theta, 0.0)[1][0];
    CellSetting::new(theta, crate::mesh::fold_phase(target.arg() - base.arg()))
}

/// Settings on `blass(2)` realizing the lossy beam splitter with ideal cells.
///
/// The four amplitudes expand over the mesh paths as
///
/// ```text
/// T01 = X(1,0)
/// T11 = X(1,1)·B(1,0)
/// T00 = C(1,0)·X(0,0)
/// T10 = C(1,1)·X(0,1)·B(0,0) + X(1,1)·R(1,0)·X(0,0)
/// ```
///
/// where `X`, `B`, `C`, `R` are the row→column, row→row, column→column and
/// column→row entries of each cell. Solving them in this order fixes one
/// cell at a time.
pub fn lossy_bs_settings(spec: LossyBsSpec) -> Result<MeshSettings> {
    if !spec.alpha.is_finite() {
        return Err(MeshError::Domain(format!("alpha {} is not finite", spec.alpha)));
    }
    let t = lossy_bs_matrix(spec.alpha);
    let s_max = t.max_singular_value();
    assert!(s_max <= 1.0 + 1e-12, "lossy beam splitter has singular value {s_max}");

    let cell = |s: CellSetting| ideal_cell(s.theta, s.phi);
    let s10 = cross_to(t.get(0, 1));
    let c10 = cell(s10);
    let s11 = cross_to(t.get(1, 1) / c10[0][0]);
    let c11 = cell(s11);
    let s00 = cross_to(t.get(0, 0) / c10[1][1]);
    let c00 = cell(s00);
    let rest = c11[1][0] * c10[0][1] * c00[1][0];
    let s01 = cross_to((t.get(1, 0) - rest) / (c11[1][1] * c00[0][0]));

    let mut settings = MeshSettings::uniform(Topology::Blass { d: 2 }, CellSetting::new(PI, 0.0))?;
    settings.set(CellCoord::new(0, 0), s00)?;
    settings.set(CellCoord::new(0, 1), s01)?;
    settings.set(CellCoord::new(1, 0), s10)?;
    settings.set(CellCoord::new(1, 1), s11)?;
    Ok(settings)
}
