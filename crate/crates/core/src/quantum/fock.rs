use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::matrix::{TransferMatrix, C64};

use super::permanent::permanent;

/// Largest photon number accepted by [`output_distribution`].
pub const FOCK_PHOTON_CAP: usize = 4;

/// Output occupation patterns with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockDistribution {
    /// `(occupation per output mode, probability)`, in lexicographic order.
    pub outcomes: Vec<(Vec<usize>, f64)>,
    /// Probability that at least one photon is lost.
    pub loss: f64,
}

impl FockDistribution {
    pub fn probability(&self, pattern: &[usize]) -> f64 {
        self.outcomes.iter().find(|(o, _)| o == pattern).map_or(0.0, |(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All occupation vectors of `n` photons in `modes` modes.
fn patterns(n: usize, modes: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, modes: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == modes {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=n).rev() {
            prefix.push(k);
            rec(n - k, modes, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if modes > 0 {
        rec(n, modes, &mut Vec::with_capacity(modes), &mut out);
    }
    out
}

fn repeated(occ: &[usize]) -> Vec<usize> {
    occ.iter().enumerate().flat_map(|(m, &k)| std::iter::repeat_n(m, k)).collect()
}

/// Exact output statistics of indistinguishable photons with input occupation
/// `input` (one entry per column of `t`).
pub fn output_distribution(t: &TransferMatrix, input: &[usize]) -> Result<FockDistribution> {
    if input.len() != t.cols() {
        return Err(MeshError::Domain(format!(
            "input has {} modes, matrix has {} inputs",
            input.len(),
            t.cols()
        )));
    }
    let n: usize = input.iter().sum();
    if n > FOCK_PHOTON_CAP {
        return Err(MeshError::Size {
            what: "photon number".into(),
            got: n,
            limit: FOCK_PHOTON_CAP,
        });
    }
    let cols = repeated(input);
    let in_norm: f64 = input.iter().map(|&k| factorial(k)).product();
    let mut outcomes = Vec::new();
    for pattern in patterns(n, t.rows()) {
        let p = if n == 0 {
            1.0
        } else {
            let rows = repeated(&pattern);
            let sub: Vec<Vec<C64>> = rows.iter().map(|&r| cols.iter().map(|&c| t.get(r, c)).collect()).collect();
            let out_norm: f64 = pattern.iter().map(|&k| factorial(k)).product();
            permanent(&TransferMatrix::from_rows(&sub)?)?.norm_sqr() / (in_norm * out_norm)
        };
        outcomes.push((pattern, p));
    }
    let total: f64 = outcomes.iter().map(|(_, p)| p).sum();
    Ok(FockDistribution {
        outcomes,
        loss: (1.0 - total).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::lossy_bs_matrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn pattern_count_is_binomial() {
        assert_eq!(patterns(4, 8).len(), 330);
        assert_eq!(patterns(0, 3), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn single_photon_is_column_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = TransferMatrix::haar_unitary(4, &mut rng);
        let dist = output_distribution(&u, &[0, 0, 1, 0]).unwrap();
        for j in 0..4 {
            let mut pat = vec![0; 4];
            pat[j] = 1;
            assert!((dist.probability(&pat) - u.power(j, 2)).abs() < 1e-14);
        }
        assert!((dist.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_hom() {
        let s = FRAC_1_SQRT_2;
        let bs = TransferMatrix::from_rows(&[vec![C64::new(s, 0.0), C64::new(0.0, s)], vec![C64::new(0.0, s), C64::new(s, 0.0)]])
            .unwrap();
        let dist = output_distribution(&bs, &[1, 1]).unwrap();
        assert!((dist.probability(&[2, 0]) - 0.5).abs() < 1e-15);
        assert!((dist.probability(&[0, 2]) - 0.5).abs() < 1e-15);
        assert!(dist.probability(&[1, 1]) < 1e-30);
    }

    #[test]
    fn lossy_splitter_reports_loss() {
        let dist = output_distribution(&lossy_bs_matrix(0.0), &[1, 1]).unwrap();
        assert!((dist.probability(&[1, 1]) - 0.25).abs() < 1e-15);
        assert!(dist.total() < 1.0 && dist.loss > 0.0);
        assert!((dist.total() + dist.loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn photon_cap() {
        let u = TransferMatrix::identity(3);
        assert!(matches!(output_distribution(&u, &[2, 2, 1]), Err(MeshError::Size { .. })));
        assert!(output_distribution(&u, &[1, 1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn unitary_evolution_conserves_probability(seed in any::<u64>(), d in 1usize..=8, n in 0usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = TransferMatrix::haar_unitary(d, &mut rng);
            let mut input = vec![0; d];
            for k in 0..n {
                input[(seed as usize).wrapping_add(k * 7) % d] += 1;
            }
            let dist = output_distribution(&u, &input).unwrap();
            prop_assert!((dist.total() - 1.0).abs() < 1e-9);
        }
    }
}
