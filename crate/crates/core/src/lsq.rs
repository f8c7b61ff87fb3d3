//! Thin wrappers over Levenberg-Marquardt and linear least squares.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

/// Model `y = f(x; p)` returning the value and its gradient in `p`.
pub(crate) trait CurveModel {
    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64;
}

struct Problem<'a, M: CurveModel> {
    model: &'a M,
    xs: &'a [f64],
    ys: &'a [f64],
    p: DVector<f64>,
}

impl<M: CurveModel> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let mut g = vec![0.0; self.p.len()];
        let r = DVector::from_iterator(
            self.xs.len(),
            self.xs
                .iter()
                .zip(self.ys)
                .map(|(&x, &y)| self.model.eval(self.p.as_slice(), x, &mut g) - y),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.p.len();
        let mut j = DMatrix::zeros(self.xs.len(), n);
        let mut g = vec![0.0; n];
        for (row, &x) in self.xs.iter().enumerate() {
            self.model.eval(self.p.as_slice(), x, &mut g);
            for (col, v) in g.iter().enumerate() {
                j[(row, col)] = *v;
            }
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Refines `start` and returns the parameters with the RMS residual, or
/// `None` if the solver produced non-finite values.
pub(crate) fn refine<M: CurveModel>(model: &M, xs: &[f64], ys: &[f64], start: &[f64]) -> Option<(Vec<f64>, f64)> {
    let problem = Problem {
        model,
        xs,
        ys,
        p: DVector::from_column_slice(start),
    };
    let (problem, _report) = LevenbergMarquardt::new()
        .with_ftol(1e-15)
        .with_xtol(1e-15)
        .with_gtol(1e-15)
        .with_patience(200)
        .minimize(problem);
    let r = problem.residuals()?;
    let p: Vec<f64> = problem.p.iter().copied().collect();
    p.iter().all(|v| v.is_finite()).then(|| (p, rms(r.as_slice())))
}

pub(crate) fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

/// Ordinary least squares `X·β ≈ y` via SVD; `None` when `X` is rank deficient.
pub(crate) fn linear(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(y, 1e-12).ok()?;
    let r = x * &beta - y;
    Some((beta, rms(r.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp;
    impl CurveModel for Exp {
        fn eval(&self, p: &[f64], x: f64, g: &mut [f64]) -> f64 {
            let e = (p[1] * x).exp();
            g[0] = e;
            g[1] = p[0] * x * e;
            p[0] * e
        }
    }

    #[test]
    fn recovers_exponential() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * (-0.7 * x).exp()).collect();
        let (p, r) = refine(&Exp, &xs, &ys, &[1.0, 0.0]).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-9 && (p[1] + 0.7).abs() < 1e-9 && r < 1e-10);
    }

    #[test]
    fn linear_fit_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[1.0, 3.0, 5.0]);
        let (b, r) = linear(&x, &y).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12 && r < 1e-12);
    }
}
