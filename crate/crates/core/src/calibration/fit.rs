use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::lsq::{self, CurveModel};

use super::curve::CalibrationCurve;

/// Counts recorded while sweeping one heater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FringeData {
    pub voltages: Vec<f64>,
    pub counts: Vec<f64>,
    /// Photons sent per point; counts are divided by this before fitting.
    pub shots: f64,
}

impl FringeData {
    pub fn new(voltages: Vec<f64>, counts: Vec<f64>, shots: f64) -> Result<Self> {
        let d = Self { voltages, counts, shots };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.voltages.len() != self.counts.len() {
            return Err(MeshError::Domain(format!(
                "{} voltages but {} counts",
                self.voltages.len(),
                self.counts.len()
            )));
        }
        if self.counts.iter().any(|c| !(*c >= 0.0)) || self.voltages.iter().any(|u| !(*u >= 0.0)) {
            return Err(MeshError::Domain("counts and voltages must be non-negative".into()));
        }
        if !(self.shots > 0.0) {
            return Err(MeshError::Domain("shots must be positive".into()));
        }
        Ok(())
    }

    pub fn transmissions(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c / self.shots).collect()
    }

    /// Writes `voltage,counts` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["voltage", "counts"])?;
        for (u, c) in self.voltages.iter().zip(&self.counts) {
            wr.write_record([u.to_string(), c.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Result of [`fit_fringe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub curve: CalibrationCurve,
    /// RMS of the transmission residuals.
    pub residual: f64,
    /// False when the fringe amplitude is indistinguishable from noise, in
    /// which case `c` and `d_coef` carry no information.
    pub identifiable: bool,
}

pub const MIN_FRINGE_POINTS: usize = 8;
const STARTS: usize = 8;

struct Fringe;

impl CurveModel for Fringe {
    fn eval(&self, p: &[f64], x: f64, g: &mut [f64]) -> f64 {
        let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
        let (s, co) = (c + d * x).sin_cos();
        g[0] = 1.0;
        g[1] = -co;
        g[2] = b * s;
        g[3] = b * s * x;
        a - b * co
    }
}

/// Least-squares fit of `a − b·cos(c + d·U²)` to normalized counts.
///
/// For a fixed `d` the model is linear in `(a, b·cos c, b·sin c)`, so a dense
/// scan over the phase swept by the heater yields exact `(a, b, c)` for every
/// candidate `d`. The best local minima of that profile seed a full
/// Levenberg-Marquardt refinement.
pub fn fit_fringe(data: &FringeData) -> Result<FringeFit> {
    data.validate()?;
    let n = data.voltages.len();
    if n < MIN_FRINGE_POINTS {
        return Err(MeshError::Domain(format!(
            "fringe fit needs at least {MIN_FRINGE_POINTS} points, got {n}"
        )));
    }
    let xs: Vec<f64> = data.voltages.iter().map(|u| u * u).collect();
    let ys = data.transmissions();
    let x_max = xs.iter().cloned().fold(0.0, f64::max);
    if !(x_max > 0.0) {
        return Err(MeshError::Domain("fringe sweep has no voltage span".into()));
    }
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let spread = ys.iter().map(|y| (y - y_mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * y_mean.abs().max(1e-300) {
        return Ok(FringeFit {
            curve: CalibrationCurve::new(y_mean, 0.0, 0.0, 0.0),
            residual: lsq::rms(&ys.iter().map(|y| y - y_mean).collect::<Vec<_>>()),
            identifiable: false,
        });
    }

    let yv = DVector::from_column_slice(&ys);
    let spans: Vec<f64> = (0..240).map(|k| 0.25 * PI * (32.0f64).powf(k as f64 / 239.0)).collect();
    let profile: Vec<(f64, f64, [f64; 3])> = spans
        .iter()
        .filter_map(|&span| {
            let d = span / x_max;
            let mut m = DMatrix::zeros(n, 3);
            for (r, &x) in xs.iter().enumerate() {
                let (s, c) = (d * x).sin_cos();
                m[(r, 0)] = 1.0;
                m[(r, 1)] = c;
                m[(r, 2)] = s;
            }
            let (beta, rms) = lsq::linear(&m, &yv)?;
            Some((d, rms, [beta[0], beta[1], beta[2]]))
        })
        .collect();

    let mut minima: Vec<usize> = (0..profile.len())
        .filter(|&k| {
            let left = k == 0 || profile[k - 1].1 >= profile[k].1;
            let right = k + 1 == profile.len() || profile[k + 1].1 >= profile[k].1;
            left && right
        })
        .collect();
    minima.sort_by(|&p, &q| profile[p].1.total_cmp(&profile[q].1));
    minima.truncate(STARTS);

    let mut best: Option<(CalibrationCurve, f64)> = None;
    let mut best_residual = f64::INFINITY;
    for k in minima {
        let (d, coarse, [a, p, q]) = profile[k];
        best_residual = best_residual.min(coarse);
        // a + p·cos(dx) + q·sin(dx) = a − b·cos(c + dx) with b·cos c = −p, b·sin c = q.
        let b = p.hypot(q);
        let c = q.atan2(-p);
        let Some((par, rms)) = lsq::refine(&Fringe, &xs, &ys, &[a, b, c, d]) else {
            continue;
        };
        if !(par[3] > 0.0) {
            continue;
        }
        let curve = CalibrationCurve::new(par[0], par[1], par[2], par[3]).normalized();
        if best.as_ref().is_none_or(|(_, r)| rms < *r) {
            best = Some((curve, rms));
        }
    }
    let Some((curve, residual)) = best else {
        return Err(MeshError::Fit {
            reason: "no start converged to a positive heater coefficient".into(),
            best_residual,
        });
    };
    let sigma_b = residual * (2.0 / n as f64).sqrt();
    Ok(FringeFit {
        curve,
        residual,
        identifiable: curve.b > 4.0 * sigma_b.max(1e-9 * curve.a.abs()),
    })
}
