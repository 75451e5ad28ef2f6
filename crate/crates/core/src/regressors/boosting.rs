//! Gradient-boosted regression trees: stagewise least-squares residual
//! fitting with shrinkage on a constant base prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::regressors::tree::{Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub max_depth: Option<u32>,
    pub learning_rate: f64,
    /// Fraction of rows drawn (without replacement) per stage; 1.0 uses all.
    pub subsample: f64,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_estimators: 750,
            max_depth: Some(10),
            learning_rate: 0.1,
            subsample: 1.0,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(Error::invalid("n_estimators must be ≥ 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate must be in (0, 1]"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid("subsample must be in (0, 1]"));
        }
        self.tree_params().validate()
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    base_prediction: f64,
    learning_rate: f64,
    stages: Vec<Tree>,
    n_features: usize,
}

impl BoostedTrees {
    /// Stages are inherently sequential: each tree fits the residuals of
    /// the ensemble so far.
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &BoostParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if x.n_rows() == 0 || x.n_rows() != y.len() {
            return Err(Error::invalid(format!(
                "need matching nonempty features/targets, got {} rows and {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        let n = x.n_rows();
        let base = y.iter().sum::<f64>() / n as f64;
        let tree_params = params.tree_params();
        let n_sub = if params.subsample < 1.0 {
            ((n as f64) * params.subsample).round().max(1.0) as usize
        } else {
            n
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut current: Vec<f64> = vec![base; n];
        let mut residuals: Vec<f64> = vec![0.0; n];
        let mut stages = Vec::with_capacity(params.n_estimators);
        let all_rows: Vec<u32> = (0..n as u32).collect();
        for _ in 0..params.n_estimators {
            for i in 0..n {
                residuals[i] = y[i] - current[i];
            }
            let rows: Vec<u32> = if n_sub < n {
                let mut ids = all_rows.clone();
                ids.shuffle(&mut rng);
                ids.truncate(n_sub);
                ids.sort_unstable();
                ids
            } else {
                all_rows.clone()
            };
            let tree = Tree::fit_on_rows(x, &residuals, &rows, &tree_params, None)?;
            for i in 0..n {
                current[i] += params.learning_rate * tree.predict_row(x.row(i));
            }
            stages.push(tree);
        }
        Ok(BoostedTrees {
            base_prediction: base,
            learning_rate: params.learning_rate,
            stages,
            n_features: x.n_cols(),
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(par::map_slice(&rows, |row| {
            self.base_prediction
                + self.learning_rate
                    * self
                        .stages
                        .iter()
                        .map(|t| t.predict_row(row))
                        .sum::<f64>()
        }))
    }

    /// Training-style MSE trajectory after each stage, on the given data.
    pub fn staged_mse(&self, x: &FeatureMatrix, y: &[f64]) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        if x.n_rows() != y.len() {
            return Err(Error::invalid("feature rows and targets differ"));
        }
        let n = x.n_rows();
        let mut current: Vec<f64> = vec![self.base_prediction; n];
        let mut out = Vec::with_capacity(self.stages.len());
        for tree in &self.stages {
            for (i, value) in current.iter_mut().enumerate() {
                *value += self.learning_rate * tree.predict_row(x.row(i));
            }
            let mse = current
                .iter()
                .zip(y)
                .map(|(&p, &t)| (p - t).powi(2))
                .sum::<f64>()
                / n as f64;
            out.push(mse);
        }
        Ok(out)
    }

    pub fn base_prediction(&self) -> f64 {
        self.base_prediction
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_stage_closed_form() {
        // F₀ = 5; the stage fits residuals (−5, +5); with shrinkage 0.1 the
        // predictions are 5 − 0.5 and 5 + 0.5.
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = [0.0, 10.0];
        let params = BoostParams {
            n_estimators: 1,
            learning_rate: 0.1,
            max_depth: Some(8),
            ..BoostParams::default()
        };
        let model = BoostedTrees::fit(&x, &y, &params, 0).unwrap();
        assert_eq!(model.base_prediction(), 5.0);
        let preds = model.predict(&x).unwrap();
        assert_relative_eq!(preds[0], 4.5, epsilon = 1e-12);
        assert_relative_eq!(preds[1], 5.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![3.0], vec![9.0]]).unwrap();
        let y = [4.0; 3];
        let model = BoostedTrees::fit(&x, &y, &BoostParams::default(), 0).unwrap();
        let preds = model
            .predict(&FeatureMatrix::from_rows(&[vec![-5.0], vec![100.0]]).unwrap())
            .unwrap();
        assert_eq!(preds, vec![4.0, 4.0]);
    }

    #[test]
    fn staged_mse_non_increasing() {
        let x = FeatureMatrix::from_rows(
            &(0..40).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..40)
            .map(|i| (i as f64).sin() * 10.0 + (i as f64) * 0.5)
            .collect();
        let params = BoostParams {
            n_estimators: 60,
            max_depth: Some(3),
            ..BoostParams::default()
        };
        let model = BoostedTrees::fit(&x, &y, &params, 0).unwrap();
        let mse = model.staged_mse(&x, &y).unwrap();
        for w in mse.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "MSE increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let params = BoostParams {
            learning_rate: 0.0,
            ..BoostParams::default()
        };
        assert!(params.validate().is_err());
        let params = BoostParams {
            n_estimators: 0,
            ..BoostParams::default()
        };
        assert!(params.validate().is_err());
    }
}
