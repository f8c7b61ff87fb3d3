use std::collections::BTreeMap;

use crate::calibration::{CalibrationTable, VoltageMap};
use crate::error::{MeshError, Result};
use crate::mesh::{CellCoord, MeshSettings};

pub use crate::calibration::CellVoltages;

/// Heater voltages programming `settings` on a calibrated device.
///
/// Each phase is taken in the 2π branch that needs the lowest non-negative
/// voltage. The output phase layer has no heaters and is ignored.
pub fn settings_to_voltages(settings: &MeshSettings, calib: &CalibrationTable) -> Result<VoltageMap> {
    if settings.topology() != calib.topology {
        return Err(MeshError::Config(format!(
            "settings are for {:?}, calibration for {:?}",
            settings.topology(),
            calib.topology
        )));
    }
    let u_max = calib.voltage_limit;
    let mut out = BTreeMap::new();
    for (&cell, s) in settings.cells() {
        let e = calib
            .entry(cell)
            .ok_or_else(|| MeshError::Config(format!("no calibration for cell {cell}")))?;
        let solve = |curve: &crate::calibration::CalibrationCurve, target: f64| {
            curve.voltage_for_phase(target, u_max).ok_or_else(|| range_error(cell, target, curve, u_max))
        };
        out.insert(
            cell,
            CellVoltages {
                internal: solve(&e.internal, s.theta)?,
                external: solve(&e.external, s.phi)?,
            },
        );
    }
    Ok(out)
}

fn range_error(cell: CellCoord, target: f64, curve: &crate::calibration::CalibrationCurve, u_max: f64) -> MeshError {
    let (lo, hi) = curve.phase_interval(u_max);
    MeshError::Range { cell, target, lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{heater_phase, CalibrationCurve, CalibrationEntry};
    use crate::mesh::{phase_distance, CellSetting, Topology};
    use std::f64::consts::PI;

    fn table(c: f64, coef: f64) -> CalibrationTable {
        let topo = Topology::Blass { d: 1 };
        let u_max = (1.5 * PI / 0.05f64).sqrt();
        let mut t = CalibrationTable::new(topo, u_max, 1e4, 0);
        let curve = CalibrationCurve::new(0.5, 0.5, c, coef);
        t.insert(CalibrationEntry {
            cell: CellCoord::new(0, 0),
            internal: curve,
            external: curve,
            internal_residual: 0.0,
            external_residual: None,
            split_range: (0.0, 1.0),
            couplers: (0.5, 0.5),
            phase_range: coef * u_max * u_max,
            flags: vec![],
        })
        .unwrap();
        t
    }

    fn one(theta: f64, phi: f64) -> MeshSettings {
        let mut s = MeshSettings::uniform(Topology::Blass { d: 1 }, CellSetting::BAR).unwrap();
        s.set(CellCoord::new(0, 0), CellSetting::new(theta, phi)).unwrap();
        s
    }

    #[test]
    fn offset_maps_to_zero_volts() {
        let v = settings_to_voltages(&one(1.0, 1.0), &table(1.0, 0.05)).unwrap();
        assert_eq!(v[&CellCoord::new(0, 0)].internal, 0.0);
    }

    #[test]
    fn square_law_inversion() {
        let v = settings_to_voltages(&one(1.8, 1.0), &table(1.0, 0.05)).unwrap();
        assert!((v[&CellCoord::new(0, 0)].internal - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_phase_names_cell() {
        let err = settings_to_voltages(&one(0.9, 1.0), &table(1.0, 0.05)).unwrap_err();
        match err {
            MeshError::Range { cell, lo, hi, .. } => {
                assert_eq!(cell, CellCoord::new(0, 0));
                assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0 - 1.5 * PI).abs() < 1e-9);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn roundtrip_on_reachable_phases() {
        let t = table(2.5, 0.05);
        let curve = t.entry(CellCoord::new(0, 0)).unwrap().internal;
        for k in 0..200 {
            let target = -10.0 + 0.1 * k as f64;
            if let Ok(v) = settings_to_voltages(&one(target, 2.5), &t) {
                let u = v[&CellCoord::new(0, 0)].internal;
                assert!(phase_distance(heater_phase(u, &curve).unwrap(), target) < 1e-9);
            }
        }
    }
}
