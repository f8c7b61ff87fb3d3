use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::lsq::{self, CurveModel};
use crate::matrix::TransferMatrix;


/// Photon-pair source and detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceModel {
    /// Two-photon visibility of the source alone.
    pub v_src: f64,
    /// Width of the Gaussian overlap in delay units.
    pub dip_sigma: f64,
    pub mean_photon_number: f64,
    pub heralding_eff: f64,
    pub detector_eff: f64,
    /// Extra overlap factor for on-chip path mismatch.
    pub extra_overlap: f64,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            v_src: 0.81,
            dip_sigma: 1.0,
            mean_photon_number: 0.01,
            heralding_eff: 0.30,
            detector_eff: 0.85,
            extra_overlap: 1.0,
        }
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = unit(self.v_src)
            && unit(self.heralding_eff)
            && unit(self.detector_eff)
            && unit(self.extra_overlap)
            && self.dip_sigma > 0.0
            && self.mean_photon_number >= 0.0;
        if !ok {
            return Err(MeshError::Domain(format!("invalid source model {self:?}")));
        }
        Ok(())
    }

    /// Pairwise overlap of the two photons at relative delay `tau`.
    pub fn overlap(&self, tau: f64) -> f64 {
        self.v_src * self.extra_overlap * (-tau * tau / (2.0 * self.dip_sigma * self.dip_sigma)).exp()
    }

    /// Scale from a two-photon probability to expected coincidences over
    /// `pulses` pump pulses: `pulses·μ²·(η_h·η_d)²`.
    pub fn count_scale(&self, pulses: f64) -> f64 {
        let eff = self.heralding_eff * self.detector_eff;
        pulses * self.mean_photon_number * self.mean_photon_number * eff * eff
    }
}

/// Probability of one photon in each of `outputs` for one photon in each of
/// `inputs`, with pairwise overlap `overlap`.
pub fn coincidence_probability(
    t: &TransferMatrix,
    inputs: (usize, usize),
    outputs: (usize, usize),
    overlap: f64,
) -> Result<f64> {
    let (a, b) = inputs;
    let (c, d) = outputs;
    if a == b || c == d {
        return Err(MeshError::Domain("coincidence needs distinct input and output modes".into()));
    }
    if a.max(b) >= t.cols() || c.max(d) >= t.rows() {
        return Err(MeshError::Domain(format!(
            "modes {inputs:?} -> {outputs:?} outside {}x{} matrix",
            t.rows(),
            t.cols()
        )));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(MeshError::Domain(format!("overlap {overlap} outside [0, 1]")));
    }
    let direct = t.get(c, a) * t.get(d, b);
    let swapped = t.get(c, b) * t.get(d, a);
    Ok(direct.norm_sqr() + swapped.norm_sqr() + 2.0 * overlap * (direct * swapped.conj()).re)
}

/// `|C_d − C_i| / C_d`.
pub fn visibility(c_dist: f64, c_indist: f64) -> Result<f64> {
    if c_dist <= 0.0 || !c_dist.is_finite() {
        return Err(MeshError::Domain(format!(
            "visibility needs a positive distinguishable rate, got {c_dist}"
        )));
    }
    Ok((c_dist - c_indist).abs() / c_dist)
}

/// `baseline − depth·exp(−(τ−center)²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub baseline: f64,
    pub depth: f64,
    pub center: f64,
    pub sigma: f64,
    pub residual: f64,
}

impl GaussianFit {
    pub fn eval(&self, tau: f64) -> f64 {
        let z = (tau - self.center) / self.sigma;
        self.baseline - self.depth * (-0.5 * z * z).exp()
    }
}

struct Gaussian;

impl CurveModel for Gaussian {
    fn eval(&self, p: &[f64], x: f64, g: &mut [f64]) -> f64 {
        let (b, h, mu, s) = (p[0], p[1], p[2], p[3]);
        let dx = x - mu;
        let e = (-dx * dx / (2.0 * s * s)).exp();
        g[0] = 1.0;
        g[1] = -e;
        g[2] = -h * e * dx / (s * s);
        g[3] = -h * e * dx * dx / (s * s * s);
        b - h * e
    }
}

fn fit_gaussian(xs: &[f64], ys: &[f64], sigma_hint: f64) -> GaussianFit {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].abs().total_cmp(&xs[j].abs()));
    let tail = &order[n - (n / 5).max(1)..];
    let baseline = tail.iter().map(|&i| ys[i]).sum::<f64>() / tail.len() as f64;
    let extreme = (0..n)
        .max_by(|&i, &j| (ys[i] - baseline).abs().total_cmp(&(ys[j] - baseline).abs()))
        .expect("non-empty");
    let depth = baseline - ys[extreme];
    let flat = GaussianFit {
        baseline,
        depth: 0.0,
        center: 0.0,
        sigma: sigma_hint,
        residual: lsq::rms(&ys.iter().map(|y| y - baseline).collect::<Vec<_>>()),
    };
    if depth.abs() <= 1e-14 * baseline.abs().max(1e-300) {
        return flat;
    }
    let start = [baseline, depth, xs[extreme], sigma_hint];
    match lsq::refine(&Gaussian, xs, ys, &start) {
        Some((p, residual)) if p[3] != 0.0 => GaussianFit {
            baseline: p[0],
            depth: p[1],
            center: p[2],
            sigma: p[3].abs(),
            residual,
        },
        _ => flat,
    }
}

/// Whether the photons bunch (dip) or anti-bunch (peak) at zero delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceKind {
    Dip,
    Peak,
    Flat,
}

/// Coincidences as a function of the relative photon delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomScan {
    pub delays: Vec<f64>,
    /// Probability per delay, or expected counts when scaled.
    pub coincidences: Vec<f64>,
    /// Coincidences of fully distinguishable photons.
    pub distinguishable: f64,
    pub fit: GaussianFit,
    /// `|depth| / baseline` of the fit.
    pub visibility: f64,
    pub kind: InterferenceKind,
}

/// Coincidence scan over `delays`. With `pulses` set, probabilities are
/// converted to expected counts by [`SourceModel::count_scale`].
pub fn hom_scan(
    t: &TransferMatrix,
    inputs: (usize, usize),
    outputs: (usize, usize),
    source: &SourceModel,
    delays: &[f64],
    pulses: Option<f64>,
) -> Result<HomScan> {
    source.validate()?;
    if delays.is_empty() {
        return Err(MeshError::Domain("empty delay list".into()));
    }
    if delays.iter().any(|d| !d.is_finite()) {
        return Err(MeshError::Domain("delays must be finite".into()));
    }
    let scale = pulses.map_or(1.0, |p| source.count_scale(p));
    let distinguishable = scale * coincidence_probability(t, inputs, outputs, 0.0)?;
    let coincidences = delays
        .iter()
        .map(|&tau| Ok(scale * coincidence_probability(t, inputs, outputs, source.overlap(tau))?))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_gaussian(delays, &coincidences, source.dip_sigma);
    let visibility = if fit.baseline > 0.0 { fit.depth.abs() / fit.baseline } else { 0.0 };
    let kind = if visibility < 1e-9 {
        InterferenceKind::Flat
    } else if fit.depth > 0.0 {
        InterferenceKind::Dip
    } else {
        InterferenceKind::Peak
    };
    Ok(HomScan {
        delays: delays.to_vec(),
        coincidences,
        distinguishable,
        fit,
        visibility,
        kind,
    })
}

impl HomScan {
    /// `delay,coincidence,fit` rows after `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(
            w,
            "# fit baseline={} depth={} center={} sigma={} visibility={} kind={:?}",
            self.fit.baseline, self.fit.depth, self.fit.center, self.fit.sigma, self.visibility, self.kind
        )?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["delay", "coincidence", "fit"])?;
        for (&tau, &c) in self.delays.iter().zip(&self.coincidences) {
            csv.serialize((tau, c, self.fit.eval(tau)))?;
        }
        csv.flush()?;
        Ok(())
    }
}
