//! Gaussian-process regression with an isotropic RBF + white-noise kernel
//! on standardized inputs and targets. Hyperparameters maximize the log
//! marginal likelihood via multi-restart compass search in log space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaler, fit_scaler, FeatureMatrix, Scaler};
use crate::error::{Error, Result};

/// Kernel hyperparameters: k(x, x′) = σ_f²·exp(−‖x−x′‖²/(2ℓ²)) + σ_n²·δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0) || !(self.length_scale > 0.0) {
            return Err(Error::invalid(
                "signal_variance and length_scale must be > 0",
            ));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::invalid("noise_variance must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    /// Log-space restarts for the likelihood search (1–5; seeds beyond the
    /// built-in list are clamped).
    pub n_restarts: usize,
    /// Skip the search and use these kernel parameters as-is.
    pub fixed: Option<KernelParams>,
    /// Standardize inputs and targets before fitting.
    pub standardize: bool,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            n_restarts: 5,
            fixed: None,
            standardize: true,
        }
    }
}

impl GpParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_restarts < 1 {
            return Err(Error::invalid("n_restarts must be ≥ 1"));
        }
        if let Some(fixed) = &self.fixed {
            fixed.validate()?;
        }
        Ok(())
    }
}

/// Search restarts in (σ_f², ℓ, σ_n²), natural scale; targets are
/// standardized so unit signal variance is the natural anchor.
const RESTARTS: [[f64; 3]; 5] = [
    [1.0, 1.0, 1e-2],
    [1.0, 0.3, 1e-1],
    [1.0, 3.0, 1e-3],
    [0.5, 0.7, 1e-4],
    [2.0, 1.5, 1e-1],
];

const LN_BOUNDS: [(f64, f64); 3] = [
    (-13.8, 9.2),  // σ_f² in [1e-6, 1e4]
    (-6.9, 6.9),   // ℓ in [1e-3, 1e3]
    (-23.0, 4.6),  // σ_n² in [1e-10, 1e2]
];

const MAX_EVALS_PER_RESTART: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GpDump", into = "GpDump")]
pub struct GaussianProcess {
    x_train: FeatureMatrix,
    scaler: Option<Scaler>,
    y_mean: f64,
    y_std: f64,
    y_standardized: Vec<f64>,
    kernel: KernelParams,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
}

/// Serialized form; the Cholesky factor and weights are rebuilt on load,
/// which is deterministic and therefore prediction-exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GpDump {
    x_train: FeatureMatrix,
    scaler: Option<Scaler>,
    y_mean: f64,
    y_std: f64,
    y_standardized: Vec<f64>,
    kernel: KernelParams,
}

impl From<GaussianProcess> for GpDump {
    fn from(gp: GaussianProcess) -> Self {
        GpDump {
            x_train: gp.x_train,
            scaler: gp.scaler,
            y_mean: gp.y_mean,
            y_std: gp.y_std,
            y_standardized: gp.y_standardized,
            kernel: gp.kernel,
        }
    }
}

impl TryFrom<GpDump> for GaussianProcess {
    type Error = Error;

    fn try_from(dump: GpDump) -> Result<Self> {
        let d2 = squared_distances(&dump.x_train);
        let (chol_l, alpha) =
            factorize_with_jitter(&d2, &dump.kernel, &dump.y_standardized)?;
        Ok(GaussianProcess {
            x_train: dump.x_train,
            scaler: dump.scaler,
            y_mean: dump.y_mean,
            y_std: dump.y_std,
            y_standardized: dump.y_standardized,
            kernel: dump.kernel,
            chol_l,
            alpha,
        })
    }
}

fn squared_distances(x: &FeatureMatrix) -> DMatrix<f64> {
    let n = x.n_rows();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[(i, j)] = dist;
            d2[(j, i)] = dist;
        }
    }
    d2
}

fn kernel_matrix(d2: &DMatrix<f64>, params: &KernelParams, jitter: f64) -> DMatrix<f64> {
    let inv_two_ell2 = 1.0 / (2.0 * params.length_scale * params.length_scale);
    let mut k = d2.map(|d| params.signal_variance * (-d * inv_two_ell2).exp());
    let diag = params.signal_variance + params.noise_variance + jitter;
    for i in 0..k.nrows() {
        k[(i, i)] = diag;
    }
    k
}

/// −½ yᵀα − Σ log L_ii − (n/2)·log 2π for a factorized kernel matrix.
fn lml_from_factor(l: &DMatrix<f64>, alpha: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det_half: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn lml_at(d2: &DMatrix<f64>, params: &KernelParams, y: &DVector<f64>) -> Option<f64> {
    let k = kernel_matrix(d2, params, 0.0);
    let chol = k.cholesky()?;
    let alpha = chol.solve(y);
    Some(lml_from_factor(&chol.l(), &alpha, y))
}

/// Jitter ladder: try exact, then 1e-10 … 1e-6 (×10 per step).
fn factorize_with_jitter(
    d2: &DMatrix<f64>,
    params: &KernelParams,
    y: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let y_vec = DVector::from_column_slice(y);
    let mut jitter = 0.0;
    loop {
        let k = kernel_matrix(d2, params, jitter);
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(&y_vec);
            return Ok((chol.l(), alpha));
        }
        jitter = match jitter {
            0.0 => 1e-10,
            j if j < 1e-6 => j * 10.0,
            _ => {
                return Err(Error::Numerical(
                    "kernel matrix not positive definite after jitter escalation to 1e-6".into(),
                ))
            }
        };
    }
}

/// Greedy first-improvement compass search over ln-parameters. Monotone
/// ascent from the start point, so the result never scores below it.
fn compass_search(
    d2: &DMatrix<f64>,
    y: &DVector<f64>,
    start: [f64; 3],
) -> ([f64; 3], f64) {
    let to_params = |ln: &[f64; 3]| KernelParams {
        signal_variance: ln[0].exp(),
        length_scale: ln[1].exp(),
        noise_variance: ln[2].exp(),
    };
    let mut cur = start.map(|v| v.ln());
    for (i, (lo, hi)) in LN_BOUNDS.iter().enumerate() {
        cur[i] = cur[i].clamp(*lo, *hi);
    }
    let mut f_cur = lml_at(d2, &to_params(&cur), y).unwrap_or(f64::NEG_INFINITY);
    let mut evals = 1;
    let mut step = 0.6;
    while step > 0.05 && evals < MAX_EVALS_PER_RESTART {
        let mut improved = false;
        'scan: for dim in 0..3 {
            for dir in [1.0, -1.0] {
                let mut cand = cur;
                cand[dim] = (cand[dim] + dir * step).clamp(LN_BOUNDS[dim].0, LN_BOUNDS[dim].1);
                if cand[dim] == cur[dim] {
                    continue;
                }
                let f = lml_at(d2, &to_params(&cand), y).unwrap_or(f64::NEG_INFINITY);
                evals += 1;
                if f > f_cur {
                    cur = cand;
                    f_cur = f;
                    improved = true;
                    break 'scan;
                }
                if evals >= MAX_EVALS_PER_RESTART {
                    break 'scan;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (cur.map(|v| v.exp()), f_cur)
}

impl GaussianProcess {
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &GpParams) -> Result<Self> {
        params.validate()?;
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

        let (scaler, x_train) = if params.standardize {
            let scaler = fit_scaler(x)?;
            let scaled = apply_scaler(&scaler, x)?;
            (Some(scaler), scaled)
        } else {
            (None, x.clone())
        };
        let n = y.len() as f64;
        let (y_mean, y_std) = if params.standardize {
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            (mean, if std > 0.0 { std } else { 1.0 })
        } else {
            (0.0, 1.0)
        };
        let y_standardized: Vec<f64> = y.iter().map(|&v| (v - y_mean) / y_std).collect();

        let d2 = squared_distances(&x_train);
        let kernel = match params.fixed {
            Some(fixed) => fixed,
            None => {
                let y_vec = DVector::from_column_slice(&y_standardized);
                let mut best: Option<([f64; 3], f64)> = None;
                for start in RESTARTS.iter().take(params.n_restarts.min(RESTARTS.len())) {
                    let (p, f) = compass_search(&d2, &y_vec, *start);
                    if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                        best = Some((p, f));
                    }
                }
                let (p, f) = best.expect("at least one restart");
                if !f.is_finite() {
                    return Err(Error::Numerical(
                        "likelihood search failed at every restart".into(),
                    ));
                }
                KernelParams {
                    signal_variance: p[0],
                    length_scale: p[1],
                    noise_variance: p[2],
                }
            }
        };

        let (chol_l, alpha) = factorize_with_jitter(&d2, &kernel, &y_standardized)?;
        Ok(GaussianProcess {
            x_train,
            scaler,
            y_mean,
            y_std,
            y_standardized,
            kernel,
            chol_l,
            alpha,
        })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn n_features(&self) -> usize {
        self.x_train.n_cols()
    }

    fn cross_kernel(&self, x: &FeatureMatrix) -> Result<DMatrix<f64>> {
        if x.n_cols() != self.x_train.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.x_train.n_cols(),
                got: x.n_cols(),
            });
        }
        let xs = match &self.scaler {
            Some(scaler) => apply_scaler(scaler, x)?,
            None => x.clone(),
        };
        let n = self.x_train.n_rows();
        let m = xs.n_rows();
        let inv_two_ell2 =
            1.0 / (2.0 * self.kernel.length_scale * self.kernel.length_scale);
        let mut k = DMatrix::zeros(n, m);
        for j in 0..m {
            let q = xs.row(j);
            for i in 0..n {
                let d2: f64 = self
                    .x_train
                    .row(i)
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                k[(i, j)] = self.kernel.signal_variance * (-d2 * inv_two_ell2).exp();
            }
        }
        Ok(k)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let k_star = self.cross_kernel(x)?;
        Ok((0..k_star.ncols())
            .map(|j| self.y_mean + self.y_std * k_star.column(j).dot(&self.alpha))
            .collect())
    }

    /// Posterior mean and standard deviation of the latent function;
    /// variance is clamped at zero against rounding.
    pub fn predict_with_std(&self, x: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let k_star = self.cross_kernel(x)?;
        let v = self
            .chol_l
            .clone()
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let mut means = Vec::with_capacity(k_star.ncols());
        let mut stds = Vec::with_capacity(k_star.ncols());
        for j in 0..k_star.ncols() {
            means.push(self.y_mean + self.y_std * k_star.column(j).dot(&self.alpha));
            let var = self.kernel.signal_variance - v.column(j).norm_squared();
            stds.push(self.y_std * var.max(0.0).sqrt());
        }
        Ok((means, stds))
    }
}

/// Evidence of the data under the kernel: −½ yᵀα − Σ log L_ii − (n/2)·log 2π.
pub fn log_marginal_likelihood(
    params: &KernelParams,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<f64> {
    params.validate()?;
    if x.n_rows() == 0 || x.n_rows() != y.len() {
        return Err(Error::invalid("need matching nonempty features/targets"));
    }
    let d2 = squared_distances(x);
    let y_vec = DVector::from_column_slice(y);
    lml_at(&d2, params, &y_vec)
        .ok_or_else(|| Error::Numerical("kernel matrix not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn raw_params(kernel: KernelParams) -> GpParams {
        GpParams {
            n_restarts: 1,
            fixed: Some(kernel),
            standardize: false,
        }
    }

    const UNIT: KernelParams = KernelParams {
        signal_variance: 1.0,
        length_scale: 1.0,
        noise_variance: 0.0,
    };

    #[test]
    fn single_point_interpolation() {
        let x = FeatureMatrix::from_rows(&[vec![0.5]]).unwrap();
        let gp = GaussianProcess::fit(&x, &[3.0], &raw_params(UNIT)).unwrap();
        let (mean, std) = gp.predict_with_std(&x).unwrap();
        assert_relative_eq!(mean[0], 3.0, epsilon = 1e-12);
        assert!(std[0].abs() < 1e-6);
    }

    #[test]
    fn single_point_interpolation_standardized() {
        let x = FeatureMatrix::from_rows(&[vec![0.5]]).unwrap();
        let gp = GaussianProcess::fit(
            &x,
            &[3.0],
            &GpParams {
                fixed: Some(UNIT),
                ..GpParams::default()
            },
        )
        .unwrap();
        let (mean, std) = gp.predict_with_std(&x).unwrap();
        assert_relative_eq!(mean[0], 3.0, epsilon = 1e-12);
        assert!(std[0].abs() < 1e-6);
    }

    #[test]
    fn prior_limit_far_from_data() {
        let x = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        let gp = GaussianProcess::fit(&x, &[1.0], &raw_params(UNIT)).unwrap();
        let far = FeatureMatrix::from_rows(&[vec![100.0]]).unwrap();
        let (_, std) = gp.predict_with_std(&far).unwrap();
        assert_relative_eq!(std[0], 1.0, epsilon = 1e-3); // σ_f = 1
    }

    /// Two training points, unit hyperparameters: posterior at a query
    /// solved by direct 2×2 inversion.
    #[test]
    fn two_point_posterior_matches_hand_solution() {
        let x0 = 0.0;
        let x1 = 1.0;
        let (y0, y1) = (1.0, 2.0);
        let noise = 0.1;
        let kernel = KernelParams {
            signal_variance: 1.0,
            length_scale: 1.0,
            noise_variance: noise,
        };
        let x = FeatureMatrix::from_rows(&[vec![x0], vec![x1]]).unwrap();
        let gp = GaussianProcess::fit(&x, &[y0, y1], &raw_params(kernel)).unwrap();

        let q = 0.5;
        let k = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
        // A = [[1+σn², k01], [k01, 1+σn²]], inverted in closed form.
        let k01 = k(x0, x1);
        let d = 1.0 + noise;
        let det = d * d - k01 * k01;
        let (inv00, inv01, inv11) = (d / det, -k01 / det, d / det);
        let (ks0, ks1) = (k(q, x0), k(q, x1));
        let a0 = inv00 * y0 + inv01 * y1;
        let a1 = inv01 * y0 + inv11 * y1;
        let mean_expected = ks0 * a0 + ks1 * a1;
        let var_expected = 1.0
            - (ks0 * (inv00 * ks0 + inv01 * ks1) + ks1 * (inv01 * ks0 + inv11 * ks1));

        let probe = FeatureMatrix::from_rows(&[vec![q]]).unwrap();
        let (mean, std) = gp.predict_with_std(&probe).unwrap();
        assert_relative_eq!(mean[0], mean_expected, epsilon = 1e-9);
        assert_relative_eq!(std[0], var_expected.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn scalar_lml_closed_form() {
        // n = 1: −½[y²/(σ_f²+σ_n²) + ln(σ_f²+σ_n²) + ln 2π].
        let params = KernelParams {
            signal_variance: 2.0,
            length_scale: 1.0,
            noise_variance: 0.5,
        };
        let x = FeatureMatrix::from_rows(&[vec![0.7]]).unwrap();
        let y = [1.3];
        let got = log_marginal_likelihood(&params, &x, &y).unwrap();
        let total = 2.5;
        let expected = -0.5
            * (y[0] * y[0] / total + total.ln() + (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn search_result_beats_every_restart_seed() {
        let x = FeatureMatrix::from_rows(
            &(0..12).map(|i| vec![i as f64 / 3.0]).collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..12).map(|i| (i as f64 / 3.0).sin()).collect();
        let gp = GaussianProcess::fit(&x, &y, &GpParams::default()).unwrap();
        let scaler = fit_scaler(&x).unwrap();
        let xs = apply_scaler(&scaler, &x).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        let ys: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();
        let best = log_marginal_likelihood(gp.kernel(), &xs, &ys).unwrap();
        for start in RESTARTS {
            let seed = KernelParams {
                signal_variance: start[0],
                length_scale: start[1],
                noise_variance: start[2],
            };
            let at_seed = log_marginal_likelihood(&seed, &xs, &ys).unwrap();
            assert!(best >= at_seed - 1e-9, "{best} < {at_seed}");
        }
    }

    #[test]
    fn variance_bounded_by_prior() {
        let x = FeatureMatrix::from_rows(
            &(0..10).map(|i| vec![i as f64, (i * i % 7) as f64]).collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i as f64).cos() * 3.0).collect();
        let kernel = KernelParams {
            signal_variance: 2.5,
            length_scale: 0.8,
            noise_variance: 0.2,
        };
        let gp = GaussianProcess::fit(&x, &y, &raw_params(kernel)).unwrap();
        let probes: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64 * 0.3 - 2.0, (i % 9) as f64 - 1.0])
            .collect();
        let (_, stds) = gp
            .predict_with_std(&FeatureMatrix::from_rows(&probes).unwrap())
            .unwrap();
        for s in stds {
            assert!(s * s <= kernel.signal_variance + kernel.noise_variance + 1e-9);
        }
        // At training points the posterior variance is below the prior's.
        let (_, train_stds) = gp.predict_with_std(&x).unwrap();
        for s in train_stds {
            assert!(s * s <= kernel.signal_variance);
        }
    }

    #[test]
    fn white_noise_improves_conditioning() {
        // Duplicated inputs make the noise-free kernel singular; adding
        // noise variance keeps it factorizable.
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let y = [1.0, 2.0];
        let singular = log_marginal_likelihood(&UNIT, &x, &y);
        assert!(singular.is_err());
        let noisy = KernelParams {
            noise_variance: 0.1,
            ..UNIT
        };
        assert!(log_marginal_likelihood(&noisy, &x, &y).is_ok());
    }

    #[test]
    fn jitter_ladder_rescues_singular_fit() {
        // Fitting with fixed noise-free params on duplicated inputs only
        // succeeds through the jitter escalation.
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [1.0, 1.0, 2.0];
        let gp = GaussianProcess::fit(&x, &y, &raw_params(UNIT)).unwrap();
        let preds = gp.predict(&x).unwrap();
        assert!(preds.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn mean_matches_plain_predict() {
        let x = FeatureMatrix::from_rows(
            &(0..8).map(|i| vec![i as f64]).collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..8).map(|i| (i as f64) * 1.5 + 1.0).collect();
        let gp = GaussianProcess::fit(
            &x,
            &y,
            &GpParams {
                n_restarts: 2,
                ..GpParams::default()
            },
        )
        .unwrap();
        let probe =
            FeatureMatrix::from_rows(&[vec![2.5], vec![6.1], vec![-3.0]]).unwrap();
        let (mean, _) = gp.predict_with_std(&probe).unwrap();
        assert_eq!(mean, gp.predict(&probe).unwrap());
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let gp = GaussianProcess::fit(&x, &[5.5; 3], &GpParams::default()).unwrap();
        let preds = gp
            .predict(&FeatureMatrix::from_rows(&[vec![0.5], vec![9.0]]).unwrap())
            .unwrap();
        for p in preds {
            assert_relative_eq!(p, 5.5, epsilon = 1e-9);
        }
    }
}
