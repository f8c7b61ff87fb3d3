use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::fold_phase;

/// Fringe `f(U) = a − b·cos(c + d_coef·U²)` of a heater-driven element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationCurve {
    pub a: f64,
    pub b: f64,
    /// Phase at zero voltage, rad.
    pub c: f64,
    /// Heater responsivity, rad/V².
    pub d_coef: f64,
}

impl CalibrationCurve {
    pub fn new(a: f64, b: f64, c: f64, d_coef: f64) -> Self {
        Self { a, b, c, d_coef }
    }

    /// Lowest and highest fringe values.
    pub fn extrema(&self) -> (f64, f64) {
        (self.a - self.b, self.a + self.b)
    }

    /// Phases reachable with voltages in `[0, u_max]`.
    pub fn phase_interval(&self, u_max: f64) -> (f64, f64) {
        (self.c, self.c + self.d_coef * u_max * u_max)
    }

    /// Lowest voltage in `[0, u_max]` realizing `target` modulo 2π.
    pub fn voltage_for_phase(&self, target: f64, u_max: f64) -> Option<f64> {
        let k = ((self.c - target) / TAU).ceil();
        let phase = target + k * TAU;
        let u = ((phase - self.c).max(0.0) / self.d_coef).sqrt();
        (u <= u_max * (1.0 + 1e-12)).then_some(u.min(u_max))
    }

    /// Voltage in `[0, u_max]` whose fringe value is closest to `level`.
    pub fn voltage_for_level(&self, level: f64, u_max: f64) -> f64 {
        let mut candidates = vec![0.0, u_max];
        if self.b > 0.0 {
            let x = ((self.a - level) / self.b).clamp(-1.0, 1.0).acos();
            for t in [x, -x, PI, 0.0] {
                if let Some(u) = self.voltage_for_phase(t, u_max) {
                    candidates.push(u);
                }
            }
        }
        candidates
            .into_iter()
            .min_by(|p, q| {
                let e = |u: f64| (fringe_model(u, self) - level).abs();
                e(*p).total_cmp(&e(*q)).then(p.total_cmp(q))
            })
            .expect("non-empty")
    }

    /// Voltage maximizing (`high = true`) or minimizing the fringe.
    pub fn voltage_for_extreme(&self, high: bool, u_max: f64) -> f64 {
        let (lo, hi) = self.extrema();
        self.voltage_for_level(if high { hi } else { lo }, u_max)
    }

    /// Same fringe with `c` folded into [0, 2π) and `b ≥ 0`.
    pub fn normalized(mut self) -> Self {
        if self.b < 0.0 {
            self.b = -self.b;
            self.c += PI;
        }
        self.c = fold_phase(self.c);
        self
    }
}

/// Heater square law `c + d_coef·U²`.
pub fn heater_phase(volts: f64, curve: &CalibrationCurve) -> Result<f64> {
    if !(volts >= 0.0) {
        return Err(MeshError::Domain(format!("heater voltage {volts} must be non-negative")));
    }
    Ok(curve.c + curve.d_coef * volts * volts)
}

/// Expected bar-port transmission `a − b·cos(c + d_coef·U²)`.
pub fn fringe_model(volts: f64, curve: &CalibrationCurve) -> f64 {
    curve.a - curve.b * (curve.c + curve.d_coef * volts * volts).cos()
}

/// Heater voltages applied to one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellVoltages {
    pub internal: f64,
    pub external: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn heater_law_examples() {
        let c = CalibrationCurve::new(0.5, 0.5, 1.0, 0.05);
        assert_abs_diff_eq!(heater_phase(0.0, &c).unwrap(), 1.0);
        assert_abs_diff_eq!(heater_phase(4.0, &c).unwrap(), 1.8, epsilon = 1e-12);
        assert!(matches!(heater_phase(-1.0, &c), Err(MeshError::Domain(_))));
        let u = (1.5 * PI / 0.05f64).sqrt();
        assert_abs_diff_eq!(heater_phase(u, &c).unwrap() - 1.0, 1.5 * PI, epsilon = 1e-12);
    }

    #[test]
    fn fringe_extrema() {
        let c = CalibrationCurve::new(0.6, 0.3, 0.0, 0.05);
        assert_abs_diff_eq!(fringe_model(0.0, &c), 0.3);
        let u = (PI / 0.05f64).sqrt();
        assert_abs_diff_eq!(fringe_model(u, &c), 0.9, epsilon = 1e-12);
        let h = CalibrationCurve::new(0.5, 0.5, PI / 2.0, 0.05);
        assert_abs_diff_eq!(fringe_model(0.0, &h), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn voltage_branch_choice() {
        let c = CalibrationCurve::new(0.5, 0.5, 1.0, 0.05);
        let u_max = (1.5 * PI / 0.05f64).sqrt();
        assert_abs_diff_eq!(c.voltage_for_phase(1.8, u_max).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.voltage_for_phase(1.0, u_max).unwrap(), 0.0);
        assert_abs_diff_eq!(c.voltage_for_phase(1.0 + TAU, u_max).unwrap(), 0.0, epsilon = 1e-6);
        assert!(c.voltage_for_phase(1.0 - 0.1, u_max).is_none());
    }

    #[test]
    fn extreme_voltages() {
        let u_max = (1.5 * PI / 0.05f64).sqrt();
        let c = CalibrationCurve::new(0.5, 0.4, 2.0, 0.05);
        let hi = c.voltage_for_extreme(true, u_max);
        assert_abs_diff_eq!(fringe_model(hi, &c), 0.9, epsilon = 1e-12);
        let lo = c.voltage_for_extreme(false, u_max);
        assert_abs_diff_eq!(fringe_model(lo, &c), 0.1, epsilon = 1e-12);
    }
}
