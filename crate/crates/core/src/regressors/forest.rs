//! Random forest: bagged CART trees with per-split feature subsampling.
//! Member RNG streams derive from the spec seed, so fits are identical
//! whether members train serially or in parallel.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::regressors::tree::{Tree, TreeParams};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` uses the regression default
    /// ⌈d/3⌉, resolved at fit time.
    pub max_features: Option<usize>,
    /// Bootstrap resampling (sample size n, with replacement). Disabling it
    /// makes every member fit the full data.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::invalid("n_trees must be ≥ 1"));
        }
        self.tree_params(4).validate()
    }

    fn tree_params(&self, d: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: Some(self.max_features.unwrap_or_else(|| d.div_ceil(3)).min(d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    members: Vec<Tree>,
    n_features: usize,
}

impl RandomForest {
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if x.n_rows() == 0 || x.n_rows() != y.len() {
            return Err(Error::invalid(format!(
                "need matching nonempty features/targets, got {} rows and {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        let n = x.n_rows();
        let tree_params = params.tree_params(x.n_cols());
        let members = par::try_map_indexed(params.n_trees, |m| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, m as u64));
            let rows: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            Tree::fit_on_rows(x, y, &rows, &tree_params, Some(rng))
        })?;
        Ok(RandomForest {
            members,
            n_features: x.n_cols(),
        })
    }

    fn member_predictions(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(par::map_slice(&rows, |row| {
            self.members.iter().map(|t| t.predict_row(row)).collect()
        }))
    }

    /// Mean of member outputs.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let per_row = self.member_predictions(x)?;
        let k = self.members.len() as f64;
        Ok(per_row.iter().map(|preds| preds.iter().sum::<f64>() / k).collect())
    }

    /// Mean and population standard deviation across members.
    pub fn predict_with_std(&self, x: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let per_row = self.member_predictions(x)?;
        let k = self.members.len() as f64;
        let mut means = Vec::with_capacity(per_row.len());
        let mut stds = Vec::with_capacity(per_row.len());
        for preds in &per_row {
            let mean = preds.iter().sum::<f64>() / k;
            let var = preds.iter().map(|&p| (p - mean).powi(2)).sum::<f64>() / k;
            means.push(mean);
            stds.push(var.max(0.0).sqrt());
        }
        Ok((means, stds))
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (FeatureMatrix, Vec<f64>) {
        let x = FeatureMatrix::from_rows(
            &(0..30)
                .map(|i| vec![i as f64, ((i * 13) % 7) as f64, ((i * 5) % 11) as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..30).map(|i| (i as f64) * 2.0 + ((i * 13) % 7) as f64).collect();
        (x, y)
    }

    #[test]
    fn single_member_equals_member_prediction() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 1,
            ..ForestParams::default()
        };
        let forest = RandomForest::fit(&x, &y, &params, 9).unwrap();
        let (mean, std) = forest.predict_with_std(&x).unwrap();
        assert_eq!(mean, forest.predict(&x).unwrap());
        assert!(std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = toy();
        let a = RandomForest::fit(&x, &y, &ForestParams::default(), 5).unwrap();
        let b = RandomForest::fit(&x, &y, &ForestParams::default(), 5).unwrap();
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        let c = RandomForest::fit(&x, &y, &ForestParams::default(), 6).unwrap();
        assert_ne!(a.predict(&x).unwrap(), c.predict(&x).unwrap());
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = toy();
        let y = vec![3.25; x.n_rows()];
        let forest = RandomForest::fit(&x, &y, &ForestParams::default(), 0).unwrap();
        assert!(forest.predict(&x).unwrap().iter().all(|&p| p == 3.25));
    }

    #[test]
    fn std_nonzero_on_disagreement() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 20,
            ..ForestParams::default()
        };
        let forest = RandomForest::fit(&x, &y, &params, 1).unwrap();
        let probe = FeatureMatrix::from_rows(&[vec![14.5, 3.0, 6.0]]).unwrap();
        let (_, std) = forest.predict_with_std(&probe).unwrap();
        assert!(std[0] > 0.0);
    }
}
