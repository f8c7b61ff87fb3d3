use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::matrix::{TransferMatrix, C64, I};

/// Power cross-coupling ratio of a directional coupler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerParams {
    pub eta: f64,
}

impl CouplerParams {
    pub const BALANCED: CouplerParams = CouplerParams { eta: 0.5 };

    pub fn new(eta: f64) -> Result<Self> {
        let c = Self { eta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(MeshError::Domain(format!(
                "coupler ratio {} outside [0, 1]",
                self.eta
            )));
        }
        Ok(())
    }

    pub(crate) fn matrix(&self) -> [[C64; 2]; 2] {
        let t = C64::new((1.0 - self.eta).sqrt(), 0.0);
        let k = I * self.eta.sqrt();
        [[t, k], [k, t]]
    }
}

/// Thermo-optic heater response φ(U) = offset + coef·U².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterLaw {
    pub offset: f64,
    pub coef: f64,
}

impl HeaterLaw {
    pub fn phase(&self, volts: f64) -> f64 {
        self.offset + self.coef * volts * volts
    }
}

/// Fabrication parameters of one unit cell: an MZI built from two couplers,
/// its internal heater, and the external phase shifter on the upper mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParams {
    pub dc1: CouplerParams,
    pub dc2: CouplerParams,
    /// Internal phase at zero heater voltage, folded into [0, 2π).
    pub phase_offset: f64,
    /// Largest internal phase shift the heater can add.
    pub phase_range: f64,
    /// Internal heater responsivity, rad/V².
    pub internal_coef: f64,
    pub external: HeaterLaw,
}

impl CellParams {
    /// Balanced couplers, zero offsets and the 3π/2 design range.
    pub fn ideal() -> Self {
        Self {
            dc1: CouplerParams::BALANCED,
            dc2: CouplerParams::BALANCED,
            phase_offset: 0.0,
            phase_range: 1.5 * std::f64::consts::PI,
            internal_coef: crate::mesh::NOMINAL_HEATER_COEF,
            external: HeaterLaw {
                offset: 0.0,
                coef: crate::mesh::NOMINAL_HEATER_COEF,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dc1.validate()?;
        self.dc2.validate()?;
        if !(self.phase_range > 0.0) {
            return Err(MeshError::Domain(format!(
                "phase range {} must be positive",
                self.phase_range
            )));
        }
        if !(0.0..TAU).contains(&self.phase_offset) {
            return Err(MeshError::Domain(format!(
                "phase offset {} not folded into [0, 2π)",
                self.phase_offset
            )));
        }
        Ok(())
    }

    pub fn internal_law(&self) -> HeaterLaw {
        HeaterLaw {
            offset: self.phase_offset,
            coef: self.internal_coef,
        }
    }

    /// 2×2 matrix of the cell on (upper, lower) = (row, column) modes: the
    /// external phase acts on the upper mode before the MZI.
    pub fn matrix(&self, setting: CellSetting) -> [[C64; 2]; 2] {
        cell_block(setting.theta, setting.phi, &self.dc1, &self.dc2)
    }

    pub fn split_range(&self) -> (f64, f64) {
        achievable_split_range(&self.dc1, &self.dc2)
    }
}

/// Programmable state of one cell: internal MZI phase θ and external phase φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSetting {
    pub theta: f64,
    pub phi: f64,
}

impl CellSetting {
    pub const BAR: CellSetting = CellSetting {
        theta: std::f64::consts::PI,
        phi: 0.0,
    };
    pub const CROSS: CellSetting = CellSetting { theta: 0.0, phi: 0.0 };

    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }
}

fn to_matrix(m: [[C64; 2]; 2]) -> TransferMatrix {
    TransferMatrix::from_rows(&[m[0].to_vec(), m[1].to_vec()]).expect("2x2")
}

fn mul2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

pub(crate) fn mzi_block(theta: f64, dc1: &CouplerParams, dc2: &CouplerParams) -> [[C64; 2]; 2] {
    let mut m = dc1.matrix();
    let e = C64::from_polar(1.0, theta);
    m[0][0] *= e;
    m[0][1] *= e;
    mul2(&dc2.matrix(), &m)
}

pub(crate) fn cell_block(
    theta: f64,
    phi: f64,
    dc1: &CouplerParams,
    dc2: &CouplerParams,
) -> [[C64; 2]; 2] {
    let mut m = mzi_block(theta, dc1, dc2);
    let e = C64::from_polar(1.0, phi);
    m[0][0] *= e;
    m[1][0] *= e;
    m
}

/// Directional coupler `[[√(1−η), i√η], [i√η, √(1−η)]]`.
pub fn dc_matrix(eta: f64) -> Result<TransferMatrix> {
    Ok(to_matrix(CouplerParams::new(eta)?.matrix()))
}

/// MZI: `DC(η₂) · diag(e^{iθ}, 1) · DC(η₁)`.
pub fn mzi_matrix(theta: f64, dc1: CouplerParams, dc2: CouplerParams) -> Result<TransferMatrix> {
    if !theta.is_finite() {
        return Err(MeshError::Domain(format!("theta {theta} is not finite")));
    }
    dc1.validate()?;
    dc2.validate()?;
    Ok(to_matrix(mzi_block(theta, &dc1, &dc2)))
}

/// Bar-port power of an MZI at phase θ in closed form.
pub fn mzi_bar_power(theta: f64, dc1: CouplerParams, dc2: CouplerParams) -> f64 {
    let (a, b) = bar_amplitudes(dc1, dc2);
    (C64::from_polar(a, theta) - b).norm_sqr()
}

/// `(√((1−η₁)(1−η₂)), √(η₁η₂))`.
pub(crate) fn bar_amplitudes(dc1: CouplerParams, dc2: CouplerParams) -> (f64, f64) {
    (
        ((1.0 - dc1.eta) * (1.0 - dc2.eta)).sqrt(),
        (dc1.eta * dc2.eta).sqrt(),
    )
}

/// Interval of bar-port power reachable by tuning θ over a full period.
pub fn achievable_split_range(dc1: &CouplerParams, dc2: &CouplerParams) -> (f64, f64) {
    let (a, b) = bar_amplitudes(*dc1, *dc2);
    ((a - b).powi(2), (a + b).powi(2))
}

/// Folds an angle into [0, 2π).
pub fn fold_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Smallest absolute difference between two angles.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = fold_phase(a - b);
    d.min(TAU - d)
}
