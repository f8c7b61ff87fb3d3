use crate::error::{MeshError, Result};
use crate::matrix::TransferMatrix;
use crate::mesh::{CellSetting, MeshSettings, Topology};

use super::{ideal_cell, Tolerances};

/// Decomposes a unitary into ideal-cell settings on `triangular(d)`.
///
/// Entries of `U` are nulled row by row from the bottom, left to right, by
/// right-multiplying with inverse cells. The remaining diagonal becomes the
/// output phase layer, so `forward(settings).effective == U`.
pub fn reck_decompose(u: &TransferMatrix, tol: &Tolerances) -> Result<MeshSettings> {
    if !u.is_square() || u.rows() < 2 {
        return Err(MeshError::Validation(format!(
            "reck decomposition needs a square matrix with d ≥ 2, got {:?}",
            u.dims()
        )));
    }
    let err = u.unitarity_error();
    if !(err < tol.unitarity) {
        return Err(MeshError::Validation(format!(
            "target is not unitary: ‖U†U − I‖ = {err:.3e}"
        )));
    }
    let d = u.rows();
    let topo = Topology::Triangular { d };
    let order = topo.cell_order();
    let mut w = u.clone().into_inner();
    let mut settings = MeshSettings::uniform(topo, CellSetting::BAR)?;
    let mut step = 0;
    for r in (1..d).rev() {
        for c in 0..r {
            let a = w[(r, c)];
            let b = w[(r, c + 1)];
            let (theta, phi) = if a.norm() < 1e-14 {
                (std::f64::consts::PI, 0.0)
            } else {
                (2.0 * b.norm().atan2(a.norm()), a.arg() - b.arg() + std::f64::consts::PI)
            };
            let m = ideal_cell(theta, phi);
            for row in 0..d {
                let x = w[(row, c)];
                let y = w[(row, c + 1)];
                w[(row, c)] = x * m[0][0].conj() + y * m[0][1].conj();
                w[(row, c + 1)] = x * m[1][0].conj() + y * m[1][1].conj();
            }
            settings.set(order[step], CellSetting::new(theta, crate::mesh::fold_phase(phi)))?;
            step += 1;
        }
    }
    settings.set_output_phases((0..d).map(|k| w[(k, k)].arg()).collect())?;
    Ok(settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::C64;
    use crate::mesh::{forward, MeshConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn roundtrip(u: &TransferMatrix) -> f64 {
        let s = reck_decompose(u, &Tolerances::default()).unwrap();
        let cfg = MeshConfig::ideal(s.topology()).unwrap();
        forward(&cfg, &s).unwrap().effective.max_abs_diff(u)
    }

    #[test]
    fn identity_is_all_bar() {
        let u = TransferMatrix::identity(8);
        let s = reck_decompose(&u, &Tolerances::default()).unwrap();
        for st in s.cells().values() {
            assert_eq!(*st, CellSetting::BAR);
        }
        assert!(roundtrip(&u) < 1e-12);
    }

    #[test]
    fn hadamard_uses_one_balanced_cell() {
        let h = TransferMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]).unwrap().scale(0.5f64.sqrt());
        let s = reck_decompose(&h, &Tolerances::default()).unwrap();
        let theta = s.cells().values().next().unwrap().theta;
        assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(roundtrip(&h) < 1e-12);
    }

    #[test]
    fn rejects_non_unitary() {
        let m = TransferMatrix::identity(3).scale(0.9);
        assert!(matches!(reck_decompose(&m, &Tolerances::default()), Err(MeshError::Validation(_))));
    }

    #[test]
    fn permutation_roundtrip() {
        let p = TransferMatrix::permutation(&[2, 0, 3, 1]).unwrap();
        assert!(roundtrip(&p) < 1e-12);
        let ph = TransferMatrix::diagonal(&[C64::from_polar(1.0, 0.3), C64::from_polar(1.0, -2.0)]);
        assert!(roundtrip(&ph) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn haar_roundtrip(seed in any::<u64>(), d in 2usize..=8) {
            let u = TransferMatrix::haar_unitary(d, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(roundtrip(&u) < 1e-9);
        }
    }
}
