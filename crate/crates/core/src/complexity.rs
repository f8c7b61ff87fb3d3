//! Platform loss model and the functional-complexity figure of merit: the
//! number of unit cells `n²` in a square mesh before transmission drops to
//! `e⁻¹`.

use std::f64::consts::{LN_10, PI};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};

/// `(10 / ln 10)`: cell loss in dB at which a single cell transmits `e⁻¹`.
pub const NEPER_DB: f64 = 10.0 / LN_10;

/// Unit of the bend radius in the power law `bend_A·R^bend_B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusUnit {
    Um,
    #[default]
    Mm,
    M,
}

impl RadiusUnit {
    pub fn meters(self) -> f64 {
        match self {
            Self::Um => 1e-6,
            Self::Mm => 1e-3,
            Self::M => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Um => "um",
            Self::Mm => "mm",
            Self::M => "m",
        }
    }
}

/// Loss coefficients and geometry of one waveguide platform. Losses are in
/// dB/m, lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformLossModel {
    pub name: String,
    pub alpha_s: f64,
    #[serde(rename = "bend_A")]
    pub bend_a: f64,
    #[serde(rename = "bend_B")]
    pub bend_b: f64,
    pub alpha_t: f64,
    #[serde(rename = "L_t")]
    pub l_t: f64,
    #[serde(default)]
    pub radius_unit: RadiusUnit,
}

impl PlatformLossModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_s >= 0.0
            && self.alpha_t >= 0.0
            && self.l_t >= 0.0
            && self.bend_a > 0.0
            && self.bend_b < 0.0
            && [self.alpha_s, self.alpha_t, self.l_t, self.bend_a, self.bend_b]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(MeshError::Validation(format!("invalid platform model {:?}", self.name)));
        }
        Ok(())
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(MeshError::Domain(format!("bend radius {r} must be positive")));
    }
    Ok(())
}

/// Power-law bend loss plus the straight-propagation floor, dB/m.
pub fn bend_loss(model: &PlatformLossModel, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(model.bend_a * r.powf(model.bend_b) + model.alpha_s)
}

/// `(L_b, L_uc)` in meters for radius `r` in the model's radius unit.
pub fn unit_cell_geometry(model: &PlatformLossModel, r: f64) -> Result<(f64, f64)> {
    check_radius(r)?;
    let l_b = 4.0 * PI * r * model.radius_unit.meters();
    Ok((l_b, l_b + 2.0 * model.l_t))
}

/// Loss of one unit cell in dB: `α_s·L_uc + α_b·L_b + α_t·2L_t`, with `α_b`
/// the power-law term alone.
pub fn cell_loss(model: &PlatformLossModel, r: f64) -> Result<f64> {
    let (l_b, l_uc) = unit_cell_geometry(model, r)?;
    let alpha_b = model.bend_a * r.powf(model.bend_b);
    Ok(model.alpha_s * l_uc + alpha_b * l_b + model.alpha_t * 2.0 * model.l_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityResult {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "L_uc_m")]
    pub l_uc: f64,
    #[serde(rename = "cell_loss_dB")]
    pub loss_per_cell: f64,
    /// Cells in series before transmission reaches `e⁻¹`.
    pub n: f64,
    pub c_f: f64,
}

pub fn functional_complexity(model: &PlatformLossModel, r: f64) -> Result<ComplexityResult> {
    model.validate()?;
    let (_, l_uc) = unit_cell_geometry(model, r)?;
    let loss = cell_loss(model, r)?;
    if !(loss > 0.0) {
        return Err(MeshError::Infinite(format!(
            "platform {:?} has zero loss per cell at R = {r}",
            model.name
        )));
    }
    let n = NEPER_DB / loss;
    Ok(ComplexityResult {
        r,
        l_uc,
        loss_per_cell: loss,
        n,
        c_f: n * n,
    })
}

/// A published processor drawn next to the curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePoint {
    pub label: String,
    pub platform: String,
    #[serde(rename = "R")]
    pub r: f64,
    pub c_f: f64,
}

/// Contents of a platform file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformFile {
    pub schema_version: u32,
    pub platforms: Vec<PlatformLossModel>,
    #[serde(default)]
    pub reference_points: Vec<ReferencePoint>,
}

impl PlatformFile {
    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        if f.schema_version != crate::SCHEMA_VERSION {
            return Err(MeshError::Validation(format!("unsupported schema_version {}", f.schema_version)));
        }
        for p in &f.platforms {
            p.validate()?;
        }
        Ok(f)
    }
}

const DEFAULT_PLATFORMS: &str = include_str!("../data/platforms.json");

/// SOI, Si₃N₄ and doped silica with R in millimeters.
pub fn default_platforms() -> PlatformFile {
    PlatformFile::from_json(DEFAULT_PLATFORMS).expect("bundled platform file is valid")
}

/// `n` radii spaced logarithmically from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && n >= 1) || (n == 1 && hi != lo) {
        return Err(MeshError::Domain(format!("invalid grid {lo}..{hi} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|k| if k + 1 == n { hi } else { lo * (step * k as f64).exp() }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub platform: String,
    #[serde(rename = "R")]
    pub r: f64,
    pub radius_unit: RadiusUnit,
    #[serde(rename = "L_uc_m")]
    pub l_uc: f64,
    #[serde(rename = "cell_loss_dB")]
    pub cell_loss: f64,
    pub n: f64,
    pub c_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCurve {
    pub rows: Vec<CurveRow>,
    pub reference_points: Vec<ReferencePoint>,
}

impl ComplexityCurve {
    pub fn max_c_f(&self) -> f64 {
        self.rows.iter().map(|r| r.c_f).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values of one platform, in grid order.
    pub fn series(&self, platform: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.platform == platform).map(|r| r.c_f).collect()
    }

    /// Reference points go into `#` comment lines after `header`.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        for p in &self.reference_points {
            writeln!(w, "# reference {}: platform={} R={} c_f={}", p.label, p.platform, p.r, p.c_f)?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["platform", "R", "radius_unit", "L_uc_m", "cell_loss_dB", "n", "c_f"])?;
        for r in &self.rows {
            csv.write_record([
                r.platform.clone(),
                r.r.to_string(),
                r.radius_unit.label().to_string(),
                r.l_uc.to_string(),
                r.cell_loss.to_string(),
                r.n.to_string(),
                r.c_f.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Evaluates every model on every radius of `grid`, platform-major.
pub fn complexity_curve(
    models: &[PlatformLossModel],
    grid: &[f64],
    reference_points: &[ReferencePoint],
) -> Result<ComplexityCurve> {
    if grid.is_empty() {
        return Err(MeshError::Domain("empty radius grid".into()));
    }
    let mut rows = Vec::with_capacity(models.len() * grid.len());
    for m in models {
        for &r in grid {
            let c = functional_complexity(m, r)?;
            rows.push(CurveRow {
                platform: m.name.clone(),
                r,
                radius_unit: m.radius_unit,
                l_uc: c.l_uc,
                cell_loss: c.loss_per_cell,
                n: c.n,
                c_f: c.c_f,
            });
        }
    }
    Ok(ComplexityCurve {
        rows,
        reference_points: reference_points.to_vec(),
    })
}

/// Power law `α_b = A·R^B` fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// RMS residual of `ln α_b`.
    pub residual: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(MeshError::Domain(format!("need at least 2 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(r, a)| !(*r > 0.0 && *a > 0.0)) {
        return Err(MeshError::Domain(format!("point {p:?} is not positive")));
    }
    let x = DMatrix::from_fn(points.len(), 2, |i, j| if j == 0 { 1.0 } else { points[i].0.ln() });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1.ln()));
    let (beta, residual) =
        crate::lsq::linear(&x, &y).ok_or_else(|| MeshError::Degenerate("all radii are equal".into()))?;
    Ok(PowerLawFit {
        a: beta[0].exp(),
        b: beta[1],
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn platform(name: &str) -> PlatformLossModel {
        default_platforms().platforms.into_iter().find(|p| p.name == name).unwrap()
    }

    fn bare() -> PlatformLossModel {
        PlatformLossModel {
            name: "bare".into(),
            alpha_s: 0.0,
            bend_a: 1.0,
            bend_b: -1.0,
            alpha_t: 0.0,
            l_t: 0.0,
            radius_unit: RadiusUnit::M,
        }
    }

    #[test]
    fn bend_loss_plug_in() {
        assert!((bend_loss(&platform("Si3N4"), 1.0).unwrap() - 0.361).abs() < 1e-12);
        assert!((bend_loss(&platform("SOI"), 1.0).unwrap() - 6.77).abs() < 1e-12);
        assert!((bend_loss(&platform("Si3N4"), 1e12).unwrap() - 0.045).abs() < 1e-9);
        assert!(matches!(bend_loss(&bare(), 0.0), Err(MeshError::Domain(_))));
    }

    #[test]
    fn geometry() {
        let (_, l) = unit_cell_geometry(&bare(), 1.0 / (4.0 * PI)).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let (_, l) = unit_cell_geometry(&platform("Si3N4"), 1.0).unwrap();
        assert!((l - (4.0 * PI * 1e-3 + 0.024)).abs() < 1e-15);
        let (_, l) = unit_cell_geometry(&platform("doped silica"), 10.0).unwrap();
        assert!((l - 0.1357).abs() < 1e-4);
    }

    #[test]
    fn soi_is_dominated_by_tuning_loss() {
        let soi = platform("SOI");
        let total = cell_loss(&soi, 1.0).unwrap();
        let tuning = soi.alpha_t * 2.0 * soi.l_t;
        assert!(tuning / total > 0.5);
    }

    #[test]
    fn single_cell_at_one_neper() {
        let mut m = bare();
        m.bend_a = NEPER_DB / (4.0 * PI);
        let c = functional_complexity(&m, 1.0 / (4.0 * PI)).unwrap();
        assert!((c.n - 1.0).abs() < 1e-12 && (c.c_f - 1.0).abs() < 1e-12);
        let t = 10f64.powf(-c.loss_per_cell / 10.0);
        assert!((t - (-1.0f64).exp()).abs() < 1e-12);
        m.bend_a /= 2.0;
        let half = functional_complexity(&m, 1.0 / (4.0 * PI)).unwrap();
        assert!((half.c_f - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_is_infinite() {
        let mut m = bare();
        m.bend_a = 1e-300;
        assert!(matches!(functional_complexity(&m, 1e300), Err(MeshError::Infinite(_))));
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = bare();
        m.bend_b = 0.5;
        assert!(functional_complexity(&m, 1.0).is_err());
        let json = r#"{"schema_version":1,"platforms":[],"extra":1}"#;
        assert!(PlatformFile::from_json(json).is_err());
    }

    #[test]
    fn platform_ordering_and_ratios() {
        let f = default_platforms();
        let grid = log_grid(0.01, 10.0, 31).unwrap();
        let c = complexity_curve(&f.platforms, &grid, &[]).unwrap();
        let (sin, soi, sil) = (c.series("Si3N4"), c.series("SOI"), c.series("doped silica"));
        for k in 0..grid.len() {
            assert!(sin[k] > sil[k] && sil[k] > soi[k]);
            let soi_ratio = (sin[k] / soi[k]).log10();
            let sil_ratio = (sin[k] / sil[k]).log10();
            assert!((3.5..=4.5).contains(&soi_ratio), "R {} soi {soi_ratio}", grid[k]);
            assert!((1.5..=3.0).contains(&sil_ratio), "R {} silica {sil_ratio}", grid[k]);
        }
    }

    #[test]
    fn single_row_matches_direct_call() {
        let m = platform("Si3N4");
        let c = complexity_curve(std::slice::from_ref(&m), &[2.0], &[]).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].c_f, functional_complexity(&m, 2.0).unwrap().c_f);
        assert!(complexity_curve(&[m], &[], &[]).is_err());
    }

    #[test]
    fn csv_header() {
        let f = default_platforms();
        let point = ReferencePoint {
            label: "x".into(),
            platform: "SOI".into(),
            r: 1.0,
            c_f: 10.0,
        };
        let c = complexity_curve(&f.platforms, &[1.0, 2.0], &[point]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, &["seed 0".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed 0");
        assert!(lines[1].starts_with("# reference x"));
        assert_eq!(lines[2], "platform,R,radius_unit,L_uc_m,cell_loss_dB,n,c_f");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn power_law_recovery() {
        let pts: Vec<(f64, f64)> = [0.05, 0.3, 1.0, 4.0, 20.0].iter().map(|&r| (r, 0.316 * f64::powf(r, -0.95))).collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.a - 0.316).abs() < 1e-9 && (f.b + 0.95).abs() < 1e-9 && f.residual < 1e-9);
        let two = fit_power_law(&[(1.0, 2.0), (4.0, 1.0)]).unwrap();
        assert!((two.a - 2.0).abs() < 1e-12 && (two.b + 0.5).abs() < 1e-12);
        assert!(fit_power_law(&[(1.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 2.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn noisy_power_law_is_reproducible() {
        let fit = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.2).unwrap();
            let pts: Vec<(f64, f64)> = log_grid(0.01, 10.0, 40)
                .unwrap()
                .into_iter()
                .map(|r| (r, 7.24 * r.powf(-0.74) * f64::exp(noise.sample(&mut rng))))
                .collect();
            fit_power_law(&pts).unwrap()
        };
        let (a, b) = (fit(3), fit(3));
        assert_eq!(a, b);
        assert!(a.residual > 0.1 && a.residual < 0.3);
        assert!((a.b + 0.74).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn loss_identity(r in 1e-3f64..1e3, a in 1e-3f64..10.0, s in 0.0f64..5.0, t in 0.0f64..1e4, lt in 0.0f64..0.05) {
            let m = PlatformLossModel { alpha_s: s, bend_a: a, alpha_t: t, l_t: lt, ..bare() };
            let c = functional_complexity(&m, r).unwrap();
            prop_assert!((c.c_f * c.loss_per_cell.powi(2) / (NEPER_DB * NEPER_DB) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn complexity_decreases_with_each_loss_term(r in 1e-2f64..1e2, k in 1.01f64..3.0) {
            let base = PlatformLossModel { alpha_s: 0.1, bend_a: 1.0, alpha_t: 5.0, l_t: 0.01, ..bare() };
            let c0 = functional_complexity(&base, r).unwrap().c_f;
            for m in [
                PlatformLossModel { alpha_s: base.alpha_s * k, ..base.clone() },
                PlatformLossModel { alpha_t: base.alpha_t * k, ..base.clone() },
                PlatformLossModel { bend_a: base.bend_a * k, ..base.clone() },
                PlatformLossModel { l_t: base.l_t * k, ..base.clone() },
            ] {
                prop_assert!(functional_complexity(&m, r).unwrap().c_f < c0);
            }
        }

        #[test]
        fn exact_power_law_round_trip(a in 1e-2f64..10.0, b in -2.0f64..-0.1) {
            let pts: Vec<(f64, f64)> = [0.1, 1.0, 3.0, 30.0].iter().map(|&r| (r, a * f64::powf(r, b))).collect();
            let f = fit_power_law(&pts).unwrap();
            for (r, y) in pts {
                prop_assert!((f.a * r.powf(f.b) / y - 1.0).abs() < 1e-9);
            }
        }
    }
}
