//! Regression engines behind a uniform fit/predict contract, with optional
//! predictive uncertainty and bit-exact JSON round-tripping.

pub mod boosting;
pub mod forest;
pub mod gp;
pub mod linear;
pub mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

pub use boosting::{BoostParams, BoostedTrees};
pub use forest::{ForestParams, RandomForest};
pub use gp::{GaussianProcess, GpParams, KernelParams};
pub use linear::{
    BayesRidgeParams, BayesianRidge, KernelRidge, KernelRidgeParams, PolyRidgeParams,
    PolynomialRidge,
};
pub use tree::{Tree, TreeParams};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    DecisionTree,
    RandomForest,
    GradientBoosting,
    GaussianProcess,
    PolynomialRidge,
    KernelRidge,
    BayesianRidge,
}

impl Family {
    pub fn short_name(&self) -> &'static str {
        match self {
            Family::DecisionTree => "dt",
            Family::RandomForest => "rf",
            Family::GradientBoosting => "gb",
            Family::GaussianProcess => "gp",
            Family::PolynomialRidge => "pr",
            Family::KernelRidge => "kr",
            Family::BayesianRidge => "br",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "dt" | "decision-tree" => Ok(Family::DecisionTree),
            "rf" | "random-forest" => Ok(Family::RandomForest),
            "gb" | "gradient-boosting" => Ok(Family::GradientBoosting),
            "gp" | "gaussian-process" => Ok(Family::GaussianProcess),
            "pr" | "polynomial-ridge" => Ok(Family::PolynomialRidge),
            "kr" | "kernel-ridge" => Ok(Family::KernelRidge),
            "br" | "bayesian-ridge" => Ok(Family::BayesianRidge),
            other => Err(Error::invalid(format!("unknown model family `{other}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyParams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    GradientBoosting(BoostParams),
    GaussianProcess(GpParams),
    PolynomialRidge(PolyRidgeParams),
    KernelRidge(KernelRidgeParams),
    BayesianRidge(BayesRidgeParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: FamilyParams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn default_for(family: Family, seed: u64) -> ModelSpec {
        let params = match family {
            Family::DecisionTree => FamilyParams::DecisionTree(TreeParams::default()),
            Family::RandomForest => FamilyParams::RandomForest(ForestParams::default()),
            Family::GradientBoosting => FamilyParams::GradientBoosting(BoostParams::default()),
            Family::GaussianProcess => FamilyParams::GaussianProcess(GpParams::default()),
            Family::PolynomialRidge => FamilyParams::PolynomialRidge(PolyRidgeParams::default()),
            Family::KernelRidge => FamilyParams::KernelRidge(KernelRidgeParams::default()),
            Family::BayesianRidge => FamilyParams::BayesianRidge(BayesRidgeParams::default()),
        };
        ModelSpec { params, seed }
    }

    pub fn family(&self) -> Family {
        match &self.params {
            FamilyParams::DecisionTree(_) => Family::DecisionTree,
            FamilyParams::RandomForest(_) => Family::RandomForest,
            FamilyParams::GradientBoosting(_) => Family::GradientBoosting,
            FamilyParams::GaussianProcess(_) => Family::GaussianProcess,
            FamilyParams::PolynomialRidge(_) => Family::PolynomialRidge,
            FamilyParams::KernelRidge(_) => Family::KernelRidge,
            FamilyParams::BayesianRidge(_) => Family::BayesianRidge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            FamilyParams::DecisionTree(p) => p.validate(),
            FamilyParams::RandomForest(p) => p.validate(),
            FamilyParams::GradientBoosting(p) => p.validate(),
            FamilyParams::GaussianProcess(p) => p.validate(),
            FamilyParams::PolynomialRidge(p) => p.validate(),
            FamilyParams::KernelRidge(p) => p.validate(),
            FamilyParams::BayesianRidge(p) => p.validate(),
        }
    }

    /// Flattened hyperparameter columns for tables and CSV export.
    pub fn param_pairs(&self) -> Vec<(&'static str, String)> {
        fn depth(d: Option<u32>) -> String {
            d.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
        }
        match &self.params {
            FamilyParams::DecisionTree(p) => vec![
                ("max_depth", depth(p.max_depth)),
                ("min_samples_split", p.min_samples_split.to_string()),
                ("min_samples_leaf", p.min_samples_leaf.to_string()),
            ],
            FamilyParams::RandomForest(p) => vec![
                ("n_trees", p.n_trees.to_string()),
                ("max_depth", depth(p.max_depth)),
                (
                    "max_features",
                    p.max_features
                        .map(|v| v.to_string())
                        .unwrap_or_else(|| "auto".into()),
                ),
            ],
            FamilyParams::GradientBoosting(p) => vec![
                ("n_estimators", p.n_estimators.to_string()),
                ("max_depth", depth(p.max_depth)),
                ("learning_rate", p.learning_rate.to_string()),
            ],
            FamilyParams::GaussianProcess(p) => {
                vec![("n_restarts", p.n_restarts.to_string())]
            }
            FamilyParams::PolynomialRidge(p) => vec![
                ("degree", p.degree.to_string()),
                ("lambda", p.lambda.to_string()),
            ],
            FamilyParams::KernelRidge(p) => vec![
                ("lambda", p.lambda.to_string()),
                ("length_scale", p.length_scale.to_string()),
            ],
            FamilyParams::BayesianRidge(p) => vec![
                ("max_iter", p.max_iter.to_string()),
                ("tol", p.tol.to_string()),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum ModelKind {
    DecisionTree(Tree),
    RandomForest(RandomForest),
    GradientBoosting(BoostedTrees),
    GaussianProcess(GaussianProcess),
    PolynomialRidge(PolynomialRidge),
    KernelRidge(KernelRidge),
    BayesianRidge(BayesianRidge),
}

/// A trained regressor plus the spec that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    spec: ModelSpec,
    kind: ModelKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDump {
    schema_version: u32,
    spec: ModelSpec,
    model: Model,
}

impl Model {
    pub fn fit(spec: &ModelSpec, x: &FeatureMatrix, y: &[f64]) -> Result<Model> {
        spec.validate()?;
        if x.n_rows() == 0 || x.n_rows() != y.len() {
            return Err(Error::invalid(format!(
                "need matching nonempty features/targets, got {} rows and {} targets",
                x.n_rows(),
                y.len()
            )));
        }
        if x.rows().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("features contain non-finite values"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("targets contain non-finite values"));
        }
        let kind = match &spec.params {
            FamilyParams::DecisionTree(p) => {
                let rng = ChaCha8Rng::seed_from_u64(spec.seed);
                ModelKind::DecisionTree(Tree::fit(x, y, p, Some(rng))?)
            }
            FamilyParams::RandomForest(p) => {
                ModelKind::RandomForest(RandomForest::fit(x, y, p, spec.seed)?)
            }
            FamilyParams::GradientBoosting(p) => {
                ModelKind::GradientBoosting(BoostedTrees::fit(x, y, p, spec.seed)?)
            }
            FamilyParams::GaussianProcess(p) => {
                ModelKind::GaussianProcess(GaussianProcess::fit(x, y, p)?)
            }
            FamilyParams::PolynomialRidge(p) => {
                ModelKind::PolynomialRidge(PolynomialRidge::fit(x, y, p)?)
            }
            FamilyParams::KernelRidge(p) => ModelKind::KernelRidge(KernelRidge::fit(x, y, p)?),
            FamilyParams::BayesianRidge(p) => {
                ModelKind::BayesianRidge(BayesianRidge::fit(x, y, p)?)
            }
        };
        Ok(Model {
            spec: spec.clone(),
            kind,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match &self.kind {
            ModelKind::DecisionTree(m) => m.predict(x),
            ModelKind::RandomForest(m) => m.predict(x),
            ModelKind::GradientBoosting(m) => m.predict(x),
            ModelKind::GaussianProcess(m) => m.predict(x),
            ModelKind::PolynomialRidge(m) => m.predict(x),
            ModelKind::KernelRidge(m) => m.predict(x),
            ModelKind::BayesianRidge(m) => m.predict(x),
        }
    }

    pub fn supports_std(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::GaussianProcess(_) | ModelKind::RandomForest(_)
        )
    }

    /// Predictions with per-point uncertainty. Only the Gaussian process
    /// (posterior std) and the random forest (member std) support this;
    /// gradient boosting needs a committee instead.
    pub fn predict_with_std(&self, x: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            ModelKind::GaussianProcess(m) => m.predict_with_std(x),
            ModelKind::RandomForest(m) => m.predict_with_std(x),
            other => Err(Error::Unsupported(format!(
                "predict_with_std is not defined for {}; use a committee for ensemble variance",
                Model {
                    spec: self.spec.clone(),
                    kind: other.clone()
                }
                .family()
            ))),
        }
    }

    pub fn as_gradient_boosting(&self) -> Option<&BoostedTrees> {
        match &self.kind {
            ModelKind::GradientBoosting(m) => Some(m),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let dump = ModelDump {
            schema_version: MODEL_SCHEMA_VERSION,
            spec: self.spec.clone(),
            model: self.clone(),
        };
        Ok(serde_json::to_string(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        // Model files may carry deeply nested trees; lift the parser's
        // recursion cap and rely on the document being our own schema.
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let dump = ModelDump::deserialize(&mut de)?;
        if dump.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model schema_version {}, expected {}",
                dump.schema_version, MODEL_SCHEMA_VERSION
            )));
        }
        Ok(dump.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (FeatureMatrix, Vec<f64>) {
        let x = FeatureMatrix::from_rows(
            &(0..24)
                .map(|i| vec![i as f64, ((i * 5) % 7) as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y: Vec<f64> = (0..24)
            .map(|i| 3.0 + (i as f64) * 0.7 + (((i * 5) % 7) as f64).sqrt())
            .collect();
        (x, y)
    }

    fn all_families() -> Vec<Family> {
        vec![
            Family::DecisionTree,
            Family::RandomForest,
            Family::GradientBoosting,
            Family::GaussianProcess,
            Family::PolynomialRidge,
            Family::KernelRidge,
            Family::BayesianRidge,
        ]
    }

    #[test]
    fn every_family_fits_and_round_trips_bit_exactly() {
        let (x, y) = toy();
        for family in all_families() {
            let mut spec = ModelSpec::default_for(family, 11);
            // Keep the heavier ensembles small for this smoke test.
            match &mut spec.params {
                FamilyParams::GradientBoosting(p) => p.n_estimators = 10,
                FamilyParams::RandomForest(p) => p.n_trees = 5,
                FamilyParams::GaussianProcess(p) => p.n_restarts = 2,
                _ => {}
            }
            let model = Model::fit(&spec, &x, &y).unwrap();
            let preds = model.predict(&x).unwrap();
            assert!(preds.iter().all(|p| p.is_finite()), "{family}");

            let json = model.to_json().unwrap();
            let reloaded = Model::from_json(&json).unwrap();
            let preds2 = reloaded.predict(&x).unwrap();
            let bits: Vec<u64> = preds.iter().map(|p| p.to_bits()).collect();
            let bits2: Vec<u64> = preds2.iter().map(|p| p.to_bits()).collect();
            assert_eq!(bits, bits2, "round-trip drift for {family}");
        }
    }

    #[test]
    fn constant_target_all_families() {
        let (x, _) = toy();
        let y = vec![2.5; x.n_rows()];
        for family in all_families() {
            let mut spec = ModelSpec::default_for(family, 0);
            match &mut spec.params {
                FamilyParams::GradientBoosting(p) => p.n_estimators = 5,
                FamilyParams::RandomForest(p) => p.n_trees = 3,
                FamilyParams::GaussianProcess(p) => p.n_restarts = 1,
                _ => {}
            }
            let model = Model::fit(&spec, &x, &y).unwrap();
            for p in model.predict(&x).unwrap() {
                assert!((p - 2.5).abs() < 1e-9, "{family}: {p}");
            }
        }
    }

    #[test]
    fn std_support_matrix() {
        let (x, y) = toy();
        for family in all_families() {
            let mut spec = ModelSpec::default_for(family, 1);
            match &mut spec.params {
                FamilyParams::GradientBoosting(p) => p.n_estimators = 5,
                FamilyParams::RandomForest(p) => p.n_trees = 3,
                FamilyParams::GaussianProcess(p) => p.n_restarts = 1,
                _ => {}
            }
            let model = Model::fit(&spec, &x, &y).unwrap();
            let supported = matches!(family, Family::GaussianProcess | Family::RandomForest);
            assert_eq!(model.supports_std(), supported);
            match model.predict_with_std(&x) {
                Ok((mean, std)) => {
                    assert!(supported);
                    assert_eq!(mean.len(), std.len());
                    assert!(std.iter().all(|&s| s >= 0.0));
                }
                Err(e) => {
                    assert!(!supported);
                    assert!(e.is_validation());
                }
            }
        }
    }

    #[test]
    fn prediction_is_pure() {
        let (x, y) = toy();
        let spec = ModelSpec::default_for(Family::KernelRidge, 0);
        let model = Model::fit(&spec, &x, &y).unwrap();
        let a = model.predict(&x).unwrap();
        let b = model.predict(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap();
        let spec = ModelSpec::default_for(Family::DecisionTree, 0);
        assert!(Model::fit(&spec, &x, &[1.0, 2.0]).is_err());
        let x_ok = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(Model::fit(&spec, &x_ok, &[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!(Family::parse("gb").unwrap(), Family::GradientBoosting);
        assert_eq!(
            Family::parse("gaussian-process").unwrap(),
            Family::GaussianProcess
        );
        assert!(Family::parse("svm").is_err());
    }
}
