//! Linear family: polynomial ridge, RBF kernel ridge, and Bayesian ridge
//! with evidence-maximized precisions. All three standardize inputs and
//! center targets before solving their normal systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaler, fit_scaler, FeatureMatrix, Scaler};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyRidgeParams {
    pub degree: usize,
    pub lambda: f64,
}

impl Default for PolyRidgeParams {
    fn default() -> Self {
        // Tiny λ keeps the normal equations well-posed without biasing fits.
        PolyRidgeParams {
            degree: 2,
            lambda: 1e-8,
        }
    }
}

impl PolyRidgeParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::invalid("degree must be ≥ 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelRidgeParams {
    pub lambda: f64,
    pub length_scale: f64,
}

impl Default for KernelRidgeParams {
    fn default() -> Self {
        KernelRidgeParams {
            lambda: 1e-3,
            length_scale: 1.0,
        }
    }
}

impl KernelRidgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be > 0"));
        }
        if !(self.length_scale > 0.0) {
            return Err(Error::invalid("length_scale must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesRidgeParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for BayesRidgeParams {
    fn default() -> Self {
        BayesRidgeParams {
            max_iter: 300,
            tol: 1e-3,
        }
    }
}

impl BayesRidgeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter must be ≥ 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be > 0"));
        }
        Ok(())
    }
}

/// All exponent vectors with 1 ≤ total degree ≤ `degree`, graded then
/// lexicographic, including interaction terms.
pub fn monomial_exponents(d: usize, degree: usize) -> Vec<Vec<u32>> {
    fn compositions(d: usize, total: u32, out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>) {
        if d == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            compositions(d - 1, total - first, out, prefix);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 1..=degree as u32 {
        compositions(d, total, &mut out, &mut Vec::new());
    }
    out
}

fn expand_row(row: &[f64], exponents: &[Vec<u32>]) -> Vec<f64> {
    exponents
        .iter()
        .map(|e| {
            e.iter()
                .zip(row)
                .map(|(&p, &x)| x.powi(p as i32))
                .product()
        })
        .collect()
}

fn check_fit_inputs(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 || x.n_rows() != y.len() {
        return Err(Error::invalid(format!(
            "need matching nonempty features/targets, got {} rows and {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets contain non-finite values"));
    }
    Ok(())
}

fn center(y: &[f64]) -> (f64, Vec<f64>) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (mean, y.iter().map(|&v| v - mean).collect())
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.cholesky()
        .map(|chol| chol.solve(b))
        .ok_or_else(|| Error::Numerical("normal equations not positive definite".into()))
}

/// Polynomial feature expansion followed by ridge regression. Expanded
/// columns are centered so the intercept stays unpenalized (squared terms
/// of standardized features have nonzero mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialRidge {
    scaler: Scaler,
    exponents: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
    feature_means: Vec<f64>,
    y_mean: f64,
    lambda: f64,
}

impl PolynomialRidge {
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &PolyRidgeParams) -> Result<Self> {
        params.validate()?;
        check_fit_inputs(x, y)?;
        let scaler = fit_scaler(x)?;
        let xs = apply_scaler(&scaler, x)?;
        let exponents = monomial_exponents(x.n_cols(), params.degree);
        let p = exponents.len();
        let n = xs.n_rows();
        let mut phi = DMatrix::zeros(n, p);
        for i in 0..n {
            for (j, value) in expand_row(xs.row(i), &exponents).into_iter().enumerate() {
                phi[(i, j)] = value;
            }
        }
        let feature_means: Vec<f64> = (0..p).map(|j| phi.column(j).sum() / n as f64).collect();
        for i in 0..n {
            for j in 0..p {
                phi[(i, j)] -= feature_means[j];
            }
        }
        let (y_mean, y_c) = center(y);
        let y_vec = DVector::from_vec(y_c);
        let mut normal = phi.transpose() * &phi;
        for j in 0..p {
            normal[(j, j)] += params.lambda;
        }
        let rhs = phi.transpose() * y_vec;
        let w = solve_spd(normal, &rhs)?;
        Ok(PolynomialRidge {
            scaler,
            exponents,
            coefficients: w.iter().copied().collect(),
            feature_means,
            y_mean,
            lambda: params.lambda,
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let xs = apply_scaler(&self.scaler, x)?;
        Ok((0..xs.n_rows())
            .map(|i| {
                let phi = expand_row(xs.row(i), &self.exponents);
                self.y_mean
                    + phi
                        .iter()
                        .zip(&self.feature_means)
                        .zip(&self.coefficients)
                        .map(|((a, m), b)| (a - m) * b)
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.len()
    }
}

/// Ridge regression in the RKHS of an RBF kernel on standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidge {
    scaler: Scaler,
    x_train: FeatureMatrix,
    dual_coefficients: Vec<f64>,
    y_mean: f64,
    params: KernelRidgeParams,
}

impl KernelRidge {
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &KernelRidgeParams) -> Result<Self> {
        params.validate()?;
        check_fit_inputs(x, y)?;
        let scaler = fit_scaler(x)?;
        let xs = apply_scaler(&scaler, x)?;
        let n = xs.n_rows();
        let inv_two_ell2 = 1.0 / (2.0 * params.length_scale * params.length_scale);
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0 + params.lambda;
            for j in (i + 1)..n {
                let d2: f64 = xs
                    .row(i)
                    .iter()
                    .zip(xs.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let v = (-d2 * inv_two_ell2).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let (y_mean, y_c) = center(y);
        let alpha = solve_spd(k, &DVector::from_vec(y_c))?;
        Ok(KernelRidge {
            scaler,
            x_train: xs,
            dual_coefficients: alpha.iter().copied().collect(),
            y_mean,
            params: *params,
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let xs = apply_scaler(&self.scaler, x)?;
        let inv_two_ell2 =
            1.0 / (2.0 * self.params.length_scale * self.params.length_scale);
        Ok((0..xs.n_rows())
            .map(|i| {
                let q = xs.row(i);
                self.y_mean
                    + self
                        .x_train
                        .rows()
                        .zip(&self.dual_coefficients)
                        .map(|(t, &a)| {
                            let d2: f64 =
                                t.iter().zip(q).map(|(p, r)| (p - r) * (p - r)).sum();
                            a * (-d2 * inv_two_ell2).exp()
                        })
                        .sum::<f64>()
            })
            .collect())
    }
}

/// Bayesian ridge: both precisions learned by fixed-point evidence
/// maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianRidge {
    scaler: Scaler,
    coefficients: Vec<f64>,
    y_mean: f64,
    /// Learned noise precision (α in the evidence formulation).
    pub noise_precision: f64,
    /// Learned weight precision (λ).
    pub weight_precision: f64,
    pub n_iterations: usize,
}

impl BayesianRidge {
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &BayesRidgeParams) -> Result<Self> {
        params.validate()?;
        check_fit_inputs(x, y)?;
        let scaler = fit_scaler(x)?;
        let xs = apply_scaler(&scaler, x)?;
        let n = xs.n_rows();
        let d = xs.n_cols();
        let (y_mean, y_c) = center(y);
        let y_var = y_c.iter().map(|v| v * v).sum::<f64>() / n as f64;

        if y_var == 0.0 {
            // Constant target: zero weights, precisions at their priors.
            return Ok(BayesianRidge {
                scaler,
                coefficients: vec![0.0; d],
                y_mean,
                noise_precision: 1.0,
                weight_precision: 1.0,
                n_iterations: 0,
            });
        }

        let xmat = DMatrix::from_fn(n, d, |i, j| xs.row(i)[j]);
        let y_vec = DVector::from_vec(y_c);
        let xtx = xmat.transpose() * &xmat;
        let xty = xmat.transpose() * &y_vec;
        let eig = xtx.symmetric_eigen();
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&s| s.max(0.0)).collect();
        let q = eig.eigenvectors;
        let qt_xty = q.transpose() * &xty;

        let mut alpha = 1.0 / y_var;
        let mut lambda = 1.0;
        let mut m = DVector::zeros(d);
        let mut iterations = 0;
        for it in 1..=params.max_iter {
            iterations = it;
            let scaled = DVector::from_fn(d, |j, _| {
                qt_xty[j] / (lambda + alpha * eigenvalues[j])
            });
            m = &q * scaled * alpha;
            let gamma: f64 = eigenvalues
                .iter()
                .map(|&s| alpha * s / (lambda + alpha * s))
                .sum();
            let m_norm2 = m.norm_squared().max(f64::EPSILON);
            let residual = (&y_vec - &xmat * &m).norm_squared().max(f64::EPSILON);
            let lambda_new = gamma / m_norm2;
            let alpha_new = (n as f64 - gamma).max(f64::EPSILON) / residual;
            let rel_l = (lambda_new - lambda).abs() / lambda;
            let rel_a = (alpha_new - alpha).abs() / alpha;
            lambda = lambda_new;
            alpha = alpha_new;
            if rel_l < params.tol && rel_a < params.tol {
                break;
            }
        }

        Ok(BayesianRidge {
            scaler,
            coefficients: m.iter().copied().collect(),
            y_mean,
            noise_precision: alpha,
            weight_precision: lambda,
            n_iterations: iterations,
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let xs = apply_scaler(&self.scaler, x)?;
        Ok((0..xs.n_rows())
            .map(|i| {
                self.y_mean
                    + xs.row(i)
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_2d(n: usize) -> FeatureMatrix {
        FeatureMatrix::from_rows(
            &(0..n)
                .map(|i| vec![(i % 7) as f64, (i / 7) as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn monomial_count_matches_closed_form() {
        // C(d + deg, deg) − 1 monomials of total degree 1..=deg.
        assert_eq!(monomial_exponents(4, 2).len(), 14);
        assert_eq!(monomial_exponents(2, 3).len(), 9);
        assert_eq!(monomial_exponents(1, 4).len(), 4);
    }

    #[test]
    fn poly_ridge_recovers_quadratic() {
        let x = grid_2d(40);
        let y: Vec<f64> = (0..40)
            .map(|i| {
                let (a, b) = ((i % 7) as f64, (i / 7) as f64);
                2.0 + 3.0 * a - b + 0.5 * a * a - 0.25 * a * b
            })
            .collect();
        let model = PolynomialRidge::fit(&x, &y, &PolyRidgeParams::default()).unwrap();
        assert_eq!(model.n_coefficients(), monomial_exponents(2, 2).len());
        let preds = model.predict(&x).unwrap();
        for (p, t) in preds.iter().zip(&y) {
            assert_relative_eq!(p, t, epsilon = 1e-6);
        }
    }

    #[test]
    fn kernel_ridge_interpolates_at_vanishing_lambda() {
        let x = grid_2d(25);
        let y: Vec<f64> = (0..25).map(|i| ((i as f64) * 0.37).sin() * 4.0).collect();
        let params = KernelRidgeParams {
            lambda: 1e-10,
            length_scale: 1.0,
        };
        let model = KernelRidge::fit(&x, &y, &params).unwrap();
        let preds = model.predict(&x).unwrap();
        for (p, t) in preds.iter().zip(&y) {
            assert_relative_eq!(p, t, epsilon = 1e-6);
        }
    }

    #[test]
    fn bayesian_ridge_recovers_linear_trend() {
        let x = grid_2d(40);
        let y: Vec<f64> = (0..40)
            .map(|i| 1.0 + 2.0 * (i % 7) as f64 - 3.0 * (i / 7) as f64)
            .collect();
        let model = BayesianRidge::fit(&x, &y, &BayesRidgeParams::default()).unwrap();
        assert!(model.noise_precision > 0.0 && model.weight_precision > 0.0);
        let preds = model.predict(&x).unwrap();
        for (p, t) in preds.iter().zip(&y) {
            assert_relative_eq!(p, t, epsilon = 1e-3);
        }
    }

    #[test]
    fn constant_targets_for_all_three() {
        let x = grid_2d(12);
        let y = vec![7.5; 12];
        let probe = FeatureMatrix::from_rows(&[vec![100.0, -3.0]]).unwrap();
        let pr = PolynomialRidge::fit(&x, &y, &PolyRidgeParams::default()).unwrap();
        assert_relative_eq!(pr.predict(&probe).unwrap()[0], 7.5, epsilon = 1e-9);
        let kr = KernelRidge::fit(&x, &y, &KernelRidgeParams::default()).unwrap();
        assert_relative_eq!(kr.predict(&probe).unwrap()[0], 7.5, epsilon = 1e-9);
        let br = BayesianRidge::fit(&x, &y, &BayesRidgeParams::default()).unwrap();
        assert_relative_eq!(br.predict(&probe).unwrap()[0], 7.5, epsilon = 1e-9);
    }

    #[test]
    fn parameter_validation() {
        assert!(PolyRidgeParams { degree: 0, lambda: 1.0 }.validate().is_err());
        assert!(PolyRidgeParams { degree: 2, lambda: 0.0 }.validate().is_err());
        assert!(KernelRidgeParams { lambda: -1.0, length_scale: 1.0 }
            .validate()
            .is_err());
        assert!(BayesRidgeParams { max_iter: 0, tol: 1e-3 }.validate().is_err());
    }
}
