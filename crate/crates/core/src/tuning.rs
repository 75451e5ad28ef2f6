//! Exhaustive k-fold cross-validated grid search over hyperparameters.
//! One seeded fold partition is reused across every grid point so the
//! comparison is paired.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics;
use crate::par;
use crate::regressors::{
    BoostParams, FamilyParams, ForestParams, KernelRidgeParams, Model, ModelSpec,
    PolyRidgeParams, TreeParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scoring {
    /// Maximize.
    R2,
    /// Minimize.
    Mae,
    /// Minimize.
    Mape,
}

impl Scoring {
    pub fn parse(s: &str) -> Result<Scoring> {
        match s.to_ascii_lowercase().as_str() {
            "r2" => Ok(Scoring::R2),
            "mae" => Ok(Scoring::Mae),
            "mape" => Ok(Scoring::Mape),
            other => Err(Error::invalid(format!("unknown scoring `{other}`"))),
        }
    }

    pub fn maximize(&self) -> bool {
        matches!(self, Scoring::R2)
    }

    fn score(&self, y: &[f64], y_hat: &[f64]) -> Result<f64> {
        match self {
            Scoring::R2 => metrics::r2_score(y, y_hat),
            Scoring::Mae => metrics::mae(y, y_hat),
            Scoring::Mape => metrics::mape(y, y_hat),
        }
    }
}

impl std::fmt::Display for Scoring {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scoring::R2 => "r2",
            Scoring::Mae => "mae",
            Scoring::Mape => "mape",
        })
    }
}

/// Per-family hyperparameter grids; `enumerate` yields the full Cartesian
/// product in documented order (first list outermost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpecGrid {
    GradientBoosting {
        n_estimators: Vec<usize>,
        max_depth: Vec<u32>,
        learning_rate: Vec<f64>,
    },
    RandomForest {
        n_trees: Vec<usize>,
        max_depth: Vec<Option<u32>>,
    },
    DecisionTree {
        max_depth: Vec<Option<u32>>,
        min_samples_leaf: Vec<usize>,
    },
    PolynomialRidge {
        degree: Vec<usize>,
        lambda: Vec<f64>,
    },
    KernelRidge {
        lambda: Vec<f64>,
        length_scale: Vec<f64>,
    },
}

impl SpecGrid {
    /// Mirrors the tuned ensemble's published neighborhood so the selected
    /// configuration (750 estimators, depth 10) is reachable by search.
    pub fn default_gb() -> SpecGrid {
        SpecGrid::GradientBoosting {
            n_estimators: vec![250, 500, 750, 1000],
            max_depth: vec![5, 10, 15],
            learning_rate: vec![0.1],
        }
    }

    pub fn enumerate(&self, seed: u64) -> Vec<ModelSpec> {
        let mut specs = Vec::new();
        match self {
            SpecGrid::GradientBoosting {
                n_estimators,
                max_depth,
                learning_rate,
            } => {
                for &n in n_estimators {
                    for &d in max_depth {
                        for &lr in learning_rate {
                            specs.push(ModelSpec {
                                params: FamilyParams::GradientBoosting(BoostParams {
                                    n_estimators: n,
                                    max_depth: Some(d),
                                    learning_rate: lr,
                                    ..BoostParams::default()
                                }),
                                seed,
                            });
                        }
                    }
                }
            }
            SpecGrid::RandomForest { n_trees, max_depth } => {
                for &n in n_trees {
                    for &d in max_depth {
                        specs.push(ModelSpec {
                            params: FamilyParams::RandomForest(ForestParams {
                                n_trees: n,
                                max_depth: d,
                                ..ForestParams::default()
                            }),
                            seed,
                        });
                    }
                }
            }
            SpecGrid::DecisionTree {
                max_depth,
                min_samples_leaf,
            } => {
                for &d in max_depth {
                    for &msl in min_samples_leaf {
                        specs.push(ModelSpec {
                            params: FamilyParams::DecisionTree(TreeParams {
                                max_depth: d,
                                min_samples_leaf: msl,
                                ..TreeParams::default()
                            }),
                            seed,
                        });
                    }
                }
            }
            SpecGrid::PolynomialRidge { degree, lambda } => {
                for &deg in degree {
                    for &l in lambda {
                        specs.push(ModelSpec {
                            params: FamilyParams::PolynomialRidge(PolyRidgeParams {
                                degree: deg,
                                lambda: l,
                            }),
                            seed,
                        });
                    }
                }
            }
            SpecGrid::KernelRidge {
                lambda,
                length_scale,
            } => {
                for &l in lambda {
                    for &ls in length_scale {
                        specs.push(ModelSpec {
                            params: FamilyParams::KernelRidge(KernelRidgeParams {
                                lambda: l,
                                length_scale: ls,
                            }),
                            seed,
                        });
                    }
                }
            }
        }
        specs
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRow {
    pub spec: ModelSpec,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_spec: ModelSpec,
    pub cv_table: Vec<CvRow>,
    pub scoring: Scoring,
}

impl GridSearchResult {
    /// One row per grid point, spec columns flattened.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let k = self
            .cv_table
            .first()
            .map(|r| r.fold_scores.len())
            .unwrap_or(0);
        out.push_str("family");
        if let Some(first) = self.cv_table.first() {
            for (name, _) in first.spec.param_pairs() {
                let _ = write!(out, ",{name}");
            }
        }
        for i in 0..k {
            let _ = write!(out, ",fold_{i}");
        }
        let _ = writeln!(out, ",mean_{}", self.scoring);
        for row in &self.cv_table {
            out.push_str(row.spec.family().short_name());
            for (_, value) in row.spec.param_pairs() {
                let _ = write!(out, ",{value}");
            }
            for s in &row.fold_scores {
                let _ = write!(out, ",{s}");
            }
            let _ = writeln!(out, ",{}", row.mean_score);
        }
        out
    }
}

/// Contiguous fold blocks over a seeded shuffle; sizes differ by at most 1.
fn make_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(indices[start..start + size].to_vec());
        start += size;
    }
    folds
}

/// Exhaustive grid search with paired k-fold scoring. Ties break toward
/// the earliest grid-enumeration order.
pub fn grid_search_cv(
    grid: &SpecGrid,
    x: &FeatureMatrix,
    y: &[f64],
    k: usize,
    scoring: Scoring,
    seed: u64,
) -> Result<GridSearchResult> {
    let n = x.n_rows();
    if n != y.len() {
        return Err(Error::invalid("feature rows and targets differ"));
    }
    if k < 2 {
        return Err(Error::invalid("k must be ≥ 2"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {n} available samples"
        )));
    }
    let specs = grid.enumerate(seed);
    if specs.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    for spec in &specs {
        spec.validate()?;
    }

    let folds = make_folds(n, k, seed);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|i| {
            let mut held = folds[i].clone();
            held.sort_unstable();
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            train.sort_unstable();
            (train, held)
        })
        .collect();

    let cv_table: Vec<CvRow> = par::try_map_indexed(specs.len(), |si| {
        let spec = &specs[si];
        let mut fold_scores = Vec::with_capacity(k);
        for (train, held) in &splits {
            let model = Model::fit(spec, &x.select(train), &gather(y, train))?;
            let preds = model.predict(&x.select(held))?;
            fold_scores.push(scoring.score(&gather(y, held), &preds)?);
        }
        let mean_score = fold_scores.iter().sum::<f64>() / k as f64;
        Ok::<CvRow, Error>(CvRow {
            spec: spec.clone(),
            fold_scores,
            mean_score,
        })
    })?;

    let mut best = 0;
    for (i, row) in cv_table.iter().enumerate().skip(1) {
        let better = if scoring.maximize() {
            row.mean_score > cv_table[best].mean_score
        } else {
            row.mean_score < cv_table[best].mean_score
        };
        if better {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best_spec: cv_table[best].spec.clone(),
        cv_table,
        scoring,
    })
}

fn gather(y: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| y[i]).collect()
}
