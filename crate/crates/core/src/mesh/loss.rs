use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::matrix::TransferMatrix;

/// Chip-level loss: propagation, facet coupling and the longest optical path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipLossModel {
    /// dB/cm.
    pub prop_loss: f64,
    /// dB per facet.
    pub coupling_loss: f64,
    /// cm.
    pub longest_path: f64,
    /// Facets crossed by a path (0 for on-chip transmission only).
    #[serde(default)]
    pub facets: u32,
}

impl ChipLossModel {
    /// 0.2 dB/cm, 2.9 dB/facet, 10 cm longest path, on-chip only.
    pub fn reference() -> Self {
        Self {
            prop_loss: 0.2,
            coupling_loss: 2.9,
            longest_path: 10.0,
            facets: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prop_loss < 0.0 || self.coupling_loss < 0.0 || self.longest_path < 0.0 {
            return Err(MeshError::Domain("loss model fields must be non-negative".into()));
        }
        Ok(())
    }

    /// Total loss in dB along a path of `length_cm`.
    pub fn path_loss_db(&self, length_cm: f64) -> Result<f64> {
        if length_cm < 0.0 || !length_cm.is_finite() {
            return Err(MeshError::Domain(format!("path length {length_cm} cm is negative")));
        }
        Ok(self.prop_loss * length_cm + self.coupling_loss * f64::from(self.facets))
    }

    /// Power transmission of the longest path.
    pub fn worst_case_transmission(&self) -> Result<f64> {
        Ok(db_to_power(self.path_loss_db(self.longest_path)?))
    }
}

/// Path lengths used by [`apply_chip_loss`].
#[derive(Debug, Clone, PartialEq)]
pub enum PathLengths {
    Uniform(f64),
    /// `lengths[j][i]` in cm for input `i` → output `j`.
    PerPair(Vec<Vec<f64>>),
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// Scales every amplitude by `10^(−dB/20)` for its path.
pub fn apply_chip_loss(
    t: &TransferMatrix,
    loss: &ChipLossModel,
    lengths: &PathLengths,
) -> Result<TransferMatrix> {
    loss.validate()?;
    let mut out = t.clone();
    for j in 0..t.rows() {
        for i in 0..t.cols() {
            let len = match lengths {
                PathLengths::Uniform(l) => *l,
                PathLengths::PerPair(m) => *m
                    .get(j)
                    .and_then(|r| r.get(i))
                    .ok_or_else(|| MeshError::Domain(format!("no path length for ({j}, {i})")))?,
            };
            let k = db_to_amplitude(loss.path_loss_db(len)?);
            out.set(j, i, t.get(j, i) * k);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_loss_is_identity() {
        let t = TransferMatrix::identity(3);
        let m = ChipLossModel {
            prop_loss: 0.0,
            coupling_loss: 0.0,
            longest_path: 0.0,
            facets: 2,
        };
        let out = apply_chip_loss(&t, &m, &PathLengths::Uniform(5.0)).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn ten_cm_on_chip() {
        let t = TransferMatrix::identity(2);
        let out = apply_chip_loss(&t, &ChipLossModel::reference(), &PathLengths::Uniform(10.0)).unwrap();
        assert_abs_diff_eq!(out.power(0, 0), 10f64.powf(-0.2), epsilon = 1e-14);
        assert!(out.power(0, 0) >= 0.60);
    }

    #[test]
    fn with_two_facets() {
        let m = ChipLossModel {
            facets: 2,
            ..ChipLossModel::reference()
        };
        assert_abs_diff_eq!(m.worst_case_transmission().unwrap(), 10f64.powf(-0.78), epsilon = 1e-14);
        assert_abs_diff_eq!(m.worst_case_transmission().unwrap(), 0.166, epsilon = 1e-3);
    }

    #[test]
    fn negative_length_rejected() {
        let t = TransferMatrix::identity(1);
        let r = apply_chip_loss(&t, &ChipLossModel::reference(), &PathLengths::PerPair(vec![vec![-1.0]]));
        assert!(matches!(r, Err(MeshError::Domain(_))));
    }
}
