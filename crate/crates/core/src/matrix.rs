//! Complex transfer matrices.
//!
//! Rows index output modes and columns index input modes, so `T[(j, i)]` is
//! the amplitude for a photon entering mode `i` to leave in mode `j`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MeshError, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Complex scattering matrix of a mesh or sub-circuit.
#[derive(Clone, PartialEq)]
pub struct TransferMatrix(DMatrix<C64>);

impl TransferMatrix {
    pub fn new(inner: DMatrix<C64>) -> Self {
        Self(inner)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    /// Builds a matrix from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(MeshError::Domain("ragged matrix rows".into()));
        }
        Ok(Self(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c])))
    }

    /// Real-valued convenience constructor, mostly for tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let v: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&v)
    }

    /// Permutation matrix with `T[(perm[i], i)] = 1`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(MeshError::Domain(format!("{perm:?} is not a permutation")));
            }
        }
        let mut m = DMatrix::zeros(n, n);
        for (i, &p) in perm.iter().enumerate() {
            m[(p, i)] = ONE;
        }
        Ok(Self(m))
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries)))
    }

    /// Haar-random unitary via QR of a complex Ginibre matrix with the
    /// phase of R's diagonal folded back into Q.
    pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = DMatrix::from_fn(n, n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for c in 0..n {
            let d = r[(c, c)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
            for row in 0..n {
                q[(row, c)] *= ph;
            }
        }
        Self(q)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn is_square(&self) -> bool {
        self.0.is_square()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: C64) {
        self.0[(row, col)] = v;
    }

    /// Power transfer |T_ji|².
    pub fn power(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)].norm_sqr()
    }

    pub fn mul(&self, rhs: &TransferMatrix) -> Result<TransferMatrix> {
        if self.cols() != rhs.rows() {
            return Err(MeshError::Domain(format!(
                "cannot multiply {:?} by {:?}",
                self.dims(),
                rhs.dims()
            )));
        }
        Ok(Self(&self.0 * &rhs.0))
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols() {
            return Err(MeshError::Domain(format!(
                "vector of length {} applied to {:?} matrix",
                v.len(),
                self.dims()
            )));
        }
        Ok((0..self.rows())
            .map(|r| (0..self.cols()).map(|c| self.0[(r, c)] * v[c]).sum())
            .collect())
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(self.0.map(|z| z * k))
    }

    /// Sub-block with the given row and column ranges.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        Self(
            self.0
                .view((rows.start, cols.start), (rows.len(), cols.len()))
                .into_owned(),
        )
    }

    /// Frobenius norm of T†T − I.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.0.adjoint() * &self.0;
        let id = DMatrix::<C64>::identity(g.nrows(), g.ncols());
        (g - id).norm()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &TransferMatrix) -> f64 {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Residual after removing the best diagonal output phase layer, i.e.
    /// `min_D max|D·self − target|` with D unit-modulus diagonal. Each row's
    /// phase is chosen to align it with the matching target row.
    pub fn gauge_residual(&self, target: &TransferMatrix) -> f64 {
        assert_eq!(self.dims(), target.dims(), "dimension mismatch");
        let mut worst = 0.0f64;
        for r in 0..self.rows() {
            let overlap: C64 = (0..self.cols())
                .map(|c| self.0[(r, c)].conj() * target.0[(r, c)])
                .sum();
            let ph = if overlap.norm() > 1e-300 { overlap / overlap.norm() } else { ONE };
            for c in 0..self.cols() {
                worst = worst.max((self.0[(r, c)] * ph - target.0[(r, c)]).norm());
            }
        }
        worst
    }

    /// Residual up to a single global phase.
    pub fn global_phase_residual(&self, target: &TransferMatrix) -> f64 {
        assert_eq!(self.dims(), target.dims(), "dimension mismatch");
        let overlap: C64 = self
            .0
            .iter()
            .zip(target.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let ph = if overlap.norm() > 1e-300 { overlap / overlap.norm() } else { ONE };
        self.0
            .iter()
            .zip(target.0.iter())
            .map(|(a, b)| (a * ph - b).norm())
            .fold(0.0, f64::max)
    }

    /// Left-multiplies by a 2×2 block acting on rows `a` and `b`.
    pub(crate) fn apply_two_mode(&mut self, a: usize, b: usize, m: &[[C64; 2]; 2]) {
        for c in 0..self.0.ncols() {
            let x = self.0[(a, c)];
            let y = self.0[(b, c)];
            self.0[(a, c)] = m[0][0] * x + m[0][1] * y;
            self.0[(b, c)] = m[1][0] * x + m[1][1] * y;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|r| (0..self.cols()).map(|c| self.0[(r, c)]).collect())
            .collect()
    }
}

impl fmt::Debug for TransferMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "TransferMatrix {}x{} [", self.rows(), self.cols())?;
        for r in 0..self.rows() {
            write!(f, "  ")?;
            for c in 0..self.cols() {
                let z = self.0[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for TransferMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// JSON form: `{"rows": r, "cols": c, "entries": [[[re, im], ...], ...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl Serialize for TransferMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows(),
            cols: self.cols(),
            entries: self
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransferMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        if repr.entries.len() != repr.rows || repr.entries.iter().any(|r| r.len() != repr.cols) {
            return Err(serde::de::Error::custom(format!(
                "entries do not match declared shape {}x{}",
                repr.rows, repr.cols
            )));
        }
        let rows: Vec<Vec<C64>> = repr
            .entries
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        TransferMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde helper for complex vectors as `[[re, im], ...]`.
pub(crate) mod complex_vec {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8 {
            let u = TransferMatrix::haar_unitary(n, &mut rng);
            assert!(u.unitarity_error() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn permutation_rejects_duplicates() {
        assert!(TransferMatrix::permutation(&[0, 0]).is_err());
        let p = TransferMatrix::permutation(&[1, 2, 0]).unwrap();
        assert_eq!(p.get(1, 0), ONE);
        assert_eq!(p.get(0, 2), ONE);
    }

    #[test]
    fn gauge_residual_ignores_row_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = TransferMatrix::haar_unitary(4, &mut rng);
        let d = TransferMatrix::diagonal(&[
            C64::from_polar(1.0, 0.3),
            C64::from_polar(1.0, -1.1),
            C64::from_polar(1.0, 2.0),
            ONE,
        ]);
        let du = d.mul(&u).unwrap();
        assert!(du.gauge_residual(&u) < 1e-14);
        assert!(du.max_abs_diff(&u) > 0.1);
    }

    #[test]
    fn json_shape_mismatch_is_rejected() {
        let bad = r#"{"rows":2,"cols":2,"entries":[[[1,0],[0,0]]]}"#;
        assert!(serde_json::from_str::<TransferMatrix>(bad).is_err());
        let good = r#"{"rows":1,"cols":2,"entries":[[[1,0],[0,0.5]]]}"#;
        let m: TransferMatrix = serde_json::from_str(good).unwrap();
        assert_eq!(m.get(0, 1), C64::new(0.0, 0.5));
    }
}
