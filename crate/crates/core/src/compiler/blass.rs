use crate::error::{MeshError, Result};
use crate::matrix::{TransferMatrix, C64, ZERO};
use crate::mesh::{forward, CellCoord, CellSetting, MeshConfig, MeshSettings, Topology};

use super::{mzi_cross, theta_for_cross_power, CellNote, CompileReport, Tolerances};

/// Synthesizes settings on a Blass mesh so that its effective matrix equals `t`.
///
/// Rows are peeled from the bottom. Input `k` only enters the mesh on row
/// `k`, so the `k`-th component of every column's target must be supplied by
/// cell `(k, j)` alone; this fixes the cell's coupling and external phase.
/// Inverting the cell then gives the column state required above row `k`,
/// which becomes the target for the rows that remain.
pub fn blass_synthesize(t: &TransferMatrix, config: &MeshConfig, tol: &Tolerances) -> Result<CompileReport> {
    let topo = config.topology();
    let d = match topo {
        Topology::Blass { d } => d,
        Topology::Triangular { .. } => {
            return Err(MeshError::Config("blass synthesis needs a blass mesh".into()));
        }
    };
    if t.dims() != (d, d) {
        return Err(MeshError::Validation(format!("target is {:?}, mesh is {d}×{d}", t.dims())));
    }
    let s_max = t.max_singular_value();
    if s_max > 1.0 + tol.slack {
        return Err(MeshError::Validation(format!(
            "target has singular value {s_max:.6} > 1 and cannot be realized passively"
        )));
    }

    let mut settings = MeshSettings::uniform(topo, CellSetting::BAR)?;
    let mut diagnostics = Vec::new();
    let mut offending = None;
    // cols[j][i]: amplitude input i must carry in column j below the current row.
    let mut cols: Vec<Vec<C64>> = (0..d).map(|j| (0..d).map(|i| t.get(j, i)).collect()).collect();

    for k in (0..d).rev() {
        let mut r = vec![ZERO; d];
        r[k] = C64::new(1.0, 0.0);
        for (j, col) in cols.iter_mut().enumerate() {
            let cell = CellCoord::new(k, j);
            let p = config.cell(cell).expect("validated config");
            let (dc1, dc2) = (p.dc1, p.dc2);
            let rk = r[k].norm_sqr();
            let need = col[k].norm_sqr();
            let mut power = if rk > 1e-24 {
                need / rk
            } else if need > 1e-24 {
                offending.get_or_insert(cell);
                diagnostics.push(CellNote {
                    cell,
                    note: format!("row {k} has no power left but column {j} needs {need:.3e}"),
                });
                1.0
            } else {
                0.0
            };
            if power > 1.0 && power <= 1.0 + 1e-6 {
                power = 1.0;
            }
            let (lo, hi) = p.split_range();
            let theta = match theta_for_cross_power(power, dc1, dc2, tol.slack) {
                Some(th) => th,
                None => {
                    offending.get_or_insert(cell);
                    diagnostics.push(CellNote {
                        cell,
                        note: format!(
                            "required cross power {power:.6} outside achievable [{:.6}, {:.6}]",
                            1.0 - hi,
                            1.0 - lo
                        ),
                    });
                    if power > 1.0 - lo {
                        0.0
                    } else {
                        std::f64::consts::PI
                    }
                }
            };
            let base = mzi_cross(theta, dc1, dc2);
            let phi = if rk > 1e-24 && need > 1e-30 && base.norm() > 1e-15 {
                crate::mesh::fold_phase((col[k] / (base * r[k])).arg())
            } else {
                0.0
            };
            let setting = CellSetting::new(theta, phi);
            settings.set(cell, setting)?;
            let m = p.matrix(setting);
            let mut prev = vec![ZERO; d];
            if m[1][1].norm() > 1e-12 {
                for i in 0..k {
                    prev[i] = (col[i] - m[1][0] * r[i]) / m[1][1];
                }
            }
            for i in 0..d {
                r[i] = m[0][0] * r[i] + m[0][1] * prev[i];
            }
            *col = prev;
        }
    }

    let achieved = forward(config, &settings)?.effective;
    let residual = achieved.max_abs_diff(t);
    let feasible = offending.is_none() && residual <= tol.residual;
    if offending.is_none() && !feasible {
        diagnostics.push(CellNote {
            cell: CellCoord::new(0, 0),
            note: format!("round-trip residual {residual:.3e} exceeds tolerance {:.1e}", tol.residual),
        });
    }
    Ok(CompileReport {
        schema_version: crate::SCHEMA_VERSION,
        settings,
        residual,
        feasible,
        diagnostics,
        offending_cell: offending,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{lossy_bs_matrix, lossy_bs_settings, LossyBsSpec};
    use crate::mesh::{CellParams, CouplerParams};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ideal(d: usize) -> MeshConfig {
        MeshConfig::ideal(Topology::Blass { d }).unwrap()
    }

    fn random_subunitary(d: usize, rng: &mut ChaCha8Rng) -> TransferMatrix {
        let u = TransferMatrix::haar_unitary(d, rng).into_inner();
        let v = TransferMatrix::haar_unitary(d, rng).into_inner();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            (0..d).map(|_| C64::new(rng.random::<f64>(), 0.0)),
        ));
        TransferMatrix::new(u * s * v.adjoint())
    }

    #[test]
    fn identity_target() {
        let r = blass_synthesize(&TransferMatrix::identity(4), &ideal(4), &Tolerances::default()).unwrap();
        assert!(r.feasible, "{r:?}");
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn gain_is_rejected() {
        let t = TransferMatrix::identity(2).scale(1.5);
        assert!(matches!(
            blass_synthesize(&t, &ideal(2), &Tolerances::default()),
            Err(MeshError::Validation(_))
        ));
    }

    #[test]
    fn agrees_with_closed_form_lossy_bs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ideal(2);
        for _ in 0..100 {
            let alpha = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let t = lossy_bs_matrix(alpha);
            let r = blass_synthesize(&t, &cfg, &Tolerances::default()).unwrap();
            assert!(r.feasible && r.residual < 1e-9);
            let closed = lossy_bs_settings(LossyBsSpec { alpha }).unwrap();
            let e = forward(&cfg, &closed).unwrap().effective;
            assert!(e.max_abs_diff(&forward(&cfg, &r.settings).unwrap().effective) < 1e-9);
        }
    }

    #[test]
    fn weak_couplers_report_offending_cell() {
        let mut p = CellParams::ideal();
        p.dc1 = CouplerParams { eta: 0.1 };
        p.dc2 = CouplerParams { eta: 0.1 };
        let cfg = MeshConfig::uniform(Topology::Blass { d: 2 }, p).unwrap();
        let r = blass_synthesize(&TransferMatrix::identity(2), &cfg, &Tolerances::default()).unwrap();
        assert!(!r.feasible);
        assert!(r.offending_cell.is_some());
    }

    #[test]
    fn nonideal_couplers_within_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let topo = Topology::Blass { d: 3 };
        let cells = topo
            .cell_order()
            .into_iter()
            .map(|c| {
                let mut p = CellParams::ideal();
                p.dc1 = CouplerParams { eta: rng.random_range(0.45..0.55) };
                p.dc2 = CouplerParams { eta: rng.random_range(0.45..0.55) };
                (c, p)
            })
            .collect();
        let cfg = MeshConfig::new(topo, cells).unwrap();
        let t = random_subunitary(3, &mut rng).scale(0.8);
        let r = blass_synthesize(&t, &cfg, &Tolerances::default()).unwrap();
        assert!(r.feasible, "{:?}", r.diagnostics);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn subunitary_roundtrip(seed in any::<u64>(), d in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_subunitary(d, &mut rng);
            let r = blass_synthesize(&t, &ideal(d), &Tolerances::default()).unwrap();
            prop_assert!(r.feasible, "residual {} {:?}", r.residual, r.diagnostics);
            prop_assert!(r.residual < 1e-9);
        }
    }
}
