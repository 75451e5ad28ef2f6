//! Active-learning loops: a random-sampling baseline, uncertainty sampling
//! with a Gaussian process, and query-by-committee with boosted-tree
//! committees, plus a checkpointed suggest/ingest state machine for runs
//! that alternate with real experiments.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advisor::{evaluate_config_predictions, get_optimal_values, get_optimal_values_from, Goal};
use crate::data::{ConfigPoint, Dataset, FeatureMatrix, RunRecord};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::par;
use crate::regressors::{BoostParams, FamilyParams, GpParams, Model, ModelSpec};
use crate::seeding::derive_seed;
use crate::synth::{sample_runtime, CostModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    RandomSampling,
    UncertaintySampling,
    QueryByCommittee,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Strategy> {
        match s.to_ascii_lowercase().as_str() {
            "rs" | "random" => Ok(Strategy::RandomSampling),
            "us" | "uncertainty" => Ok(Strategy::UncertaintySampling),
            "qc" | "committee" => Ok(Strategy::QueryByCommittee),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::RandomSampling => "rs",
            Strategy::UncertaintySampling => "us",
            Strategy::QueryByCommittee => "qc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    pub strategy: Strategy,
    pub n_initial: usize,
    pub query_size: usize,
    pub n_queries: usize,
    pub n_committees: usize,
    pub goal: Option<Goal>,
    pub seed: u64,
    /// Report metrics from the committee mean instead of the last-fitted
    /// member (the verbatim algorithm scores the last member).
    pub committee_mean_reporting: bool,
    /// Likelihood-search restarts for the per-iteration GP refit.
    pub gp_restarts: usize,
}

impl ALConfig {
    pub fn new(strategy: Strategy, seed: u64) -> ALConfig {
        ALConfig {
            strategy,
            n_initial: 50,
            query_size: 50,
            n_queries: match strategy {
                Strategy::QueryByCommittee => 10,
                _ => 20,
            },
            n_committees: 5,
            goal: None,
            seed,
            committee_mean_reporting: false,
            gp_restarts: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 1 || self.query_size < 1 || self.n_queries < 1 {
            return Err(Error::invalid(
                "n_initial, query_size, and n_queries must all be ≥ 1",
            ));
        }
        if self.strategy == Strategy::QueryByCommittee && self.n_committees < 2 {
            return Err(Error::invalid("query-by-committee needs ≥ 2 committees"));
        }
        if self.gp_restarts < 1 {
            return Err(Error::invalid("gp_restarts must be ≥ 1"));
        }
        Ok(())
    }
}

/// A labeling request: the pool row being queried and its configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPoint {
    pub pool_index: usize,
    pub config: ConfigPoint,
}

/// Source of true runtimes for selected configurations.
pub trait LabelOracle {
    fn label(&mut self, queries: &[QueryPoint]) -> Result<Vec<f64>>;
}

/// Simulation oracle answering exactly the pooled measurement.
pub struct PoolLookupOracle {
    runtimes: Vec<f64>,
}

impl PoolLookupOracle {
    pub fn new(pool: &Dataset) -> Self {
        PoolLookupOracle {
            runtimes: pool.runtimes(),
        }
    }
}

impl LabelOracle for PoolLookupOracle {
    fn label(&mut self, queries: &[QueryPoint]) -> Result<Vec<f64>> {
        queries
            .iter()
            .map(|q| {
                self.runtimes.get(q.pool_index).copied().ok_or_else(|| {
                    Error::invalid(format!("pool index {} out of range", q.pool_index))
                })
            })
            .collect()
    }
}

/// Oracle backed by the analytic cost model; each configuration gets a
/// seed derived from its own coordinates, so answers are stable across
/// runs and query orders.
pub struct SyntheticOracle {
    pub params: CostModelParams,
    pub seed: u64,
}

impl LabelOracle for SyntheticOracle {
    fn label(&mut self, queries: &[QueryPoint]) -> Result<Vec<f64>> {
        queries
            .iter()
            .map(|q| {
                let c = q.config;
                let salt = ((c.o as u64) << 48)
                    | ((c.v as u64 & 0xFFFF) << 32)
                    | ((c.nodes as u64 & 0xFFFF) << 16)
                    | (c.tile_size as u64 & 0xFFFF);
                sample_runtime(c.o, c.v, c.nodes, c.tile_size, &self.params, derive_seed(self.seed, salt))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub iteration: usize,
    pub n_labeled: usize,
    pub pool_report: EvalReport,
    pub config_report: Option<EvalReport>,
}

/// Outcome of a simulated loop: the metric trajectory plus the final
/// labeled set (sorted pool indices with their oracle labels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRun {
    pub points: Vec<LearningCurvePoint>,
    pub labeled_indices: Vec<usize>,
    pub labels: Vec<f64>,
}

/// Learning-curve CSV: `iteration,n_labeled,r2,mae,mape[,r2_cfg,mae_cfg,mape_cfg]`.
pub fn curve_to_csv(points: &[LearningCurvePoint]) -> String {
    use std::fmt::Write as _;
    let with_cfg = points.iter().any(|p| p.config_report.is_some());
    let mut out = String::from("iteration,n_labeled,r2,mae,mape");
    if with_cfg {
        out.push_str(",r2_cfg,mae_cfg,mape_cfg");
    }
    out.push('\n');
    for p in points {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            p.iteration, p.n_labeled, p.pool_report.r2, p.pool_report.mae, p.pool_report.mape
        );
        if with_cfg {
            match &p.config_report {
                Some(c) => {
                    let _ = write!(out, ",{},{},{}", c.r2, c.mae, c.mape);
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}

/// The model(s) a strategy fits each iteration.
pub enum StrategyModel {
    Single(Model),
    Committee(Vec<Model>),
}

impl StrategyModel {
    /// The reporting model's predictions; the verbatim committee rule uses
    /// the last-fitted member unless mean reporting is enabled.
    pub fn report_predictions(&self, x: &FeatureMatrix, committee_mean: bool) -> Result<Vec<f64>> {
        match self {
            StrategyModel::Single(m) => m.predict(x),
            StrategyModel::Committee(members) => {
                if committee_mean {
                    let all: Vec<Vec<f64>> = members
                        .iter()
                        .map(|m| m.predict(x))
                        .collect::<Result<_>>()?;
                    let k = all.len() as f64;
                    Ok((0..x.n_rows())
                        .map(|i| all.iter().map(|p| p[i]).sum::<f64>() / k)
                        .collect())
                } else {
                    members.last().expect("committee is nonempty").predict(x)
                }
            }
        }
    }
}

/// Fit the per-iteration strategy model: a GP for uncertainty sampling, a
/// bootstrap-diversified boosted-tree committee for query-by-committee,
/// and a single boosted-tree model for the random baseline.
pub fn fit_strategy_model(
    cfg: &ALConfig,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<StrategyModel> {
    match cfg.strategy {
        Strategy::UncertaintySampling => {
            let spec = ModelSpec {
                params: FamilyParams::GaussianProcess(GpParams {
                    n_restarts: cfg.gp_restarts,
                    ..GpParams::default()
                }),
                seed: cfg.seed,
            };
            Ok(StrategyModel::Single(Model::fit(&spec, x, y)?))
        }
        Strategy::RandomSampling => {
            let spec = ModelSpec {
                params: FamilyParams::GradientBoosting(BoostParams::default()),
                seed: cfg.seed,
            };
            Ok(StrategyModel::Single(Model::fit(&spec, x, y)?))
        }
        Strategy::QueryByCommittee => {
            let n = x.n_rows();
            let members = par::try_map_indexed(cfg.n_committees, |member| {
                let member_seed = cfg.seed.wrapping_add(member as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(member_seed);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let spec = ModelSpec {
                    params: FamilyParams::GradientBoosting(BoostParams::default()),
                    seed: member_seed,
                };
                let xb = x.select(&rows);
                let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                Model::fit(&spec, &xb, &yb)
            })?;
            Ok(StrategyModel::Committee(members))
        }
    }
}

/// Indices of the `batch` largest predictive standard deviations, in
/// descending std order with ties broken by lower index.
pub fn select_uncertainty(
    model: &Model,
    unlabeled: &FeatureMatrix,
    batch: usize,
) -> Result<Vec<usize>> {
    if batch < 1 {
        return Err(Error::invalid("batch must be ≥ 1"));
    }
    let (_, std) = model.predict_with_std(unlabeled)?;
    Ok(rank_descending(&std, batch))
}

/// Row-wise population variance across committee predictions; the largest
/// `batch` rows win, ties toward the lower index.
pub fn select_committee(predictions: &[Vec<f64>], batch: usize) -> Result<Vec<usize>> {
    if batch < 1 {
        return Err(Error::invalid("batch must be ≥ 1"));
    }
    let m = predictions.first().map(|row| row.len()).unwrap_or(0);
    if m < 2 {
        return Err(Error::invalid(
            "committee selection needs ≥ 2 prediction columns",
        ));
    }
    let variances: Vec<f64> = predictions
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / m as f64;
            row.iter().map(|&p| (p - mean).powi(2)).sum::<f64>() / m as f64
        })
        .collect();
    Ok(rank_descending(&variances, batch))
}

fn rank_descending(scores: &[f64], batch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(batch.min(scores.len()));
    order
}

/// Seeded uniform sample without replacement, capped at the population.
pub fn select_random(unlabeled_count: usize, batch: usize, seed: u64) -> Vec<usize> {
    let take = batch.min(unlabeled_count);
    let mut pool: Vec<usize> = (0..unlabeled_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..take {
        let j = rng.random_range(i..unlabeled_count);
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool
}

fn merge_sorted(into: &mut Vec<usize>, mut extra: Vec<usize>) {
    extra.sort_unstable();
    into.extend(extra);
    into.sort_unstable();
}

/// Run a simulated active-learning loop against an oracle. Per iteration:
/// fit the strategy model on the labeled rows, score it against the full
/// pool (and, under a goal, against the test set via configuration loss),
/// then query a batch from the unlabeled pool. The loop stops early once
/// the pool is exhausted.
pub fn run_active_learning(
    pool: &Dataset,
    test: Option<&Dataset>,
    oracle: &mut dyn LabelOracle,
    cfg: &ALConfig,
) -> Result<ActiveRun> {
    cfg.validate()?;
    if pool.len() < cfg.n_initial {
        return Err(Error::invalid(format!(
            "pool has {} rows, fewer than n_initial = {}",
            pool.len(),
            cfg.n_initial
        )));
    }
    let (test_ds, true_optima) = match cfg.goal {
        Some(goal) => {
            let test_ds = test.filter(|t| !t.is_empty()).ok_or_else(|| {
                Error::invalid("a nonempty test set is required when a goal is set")
            })?;
            (Some(test_ds), Some(get_optimal_values(test_ds, goal)?))
        }
        None => (None, None),
    };

    let pool_x = pool.features();
    let pool_y = pool.runtimes();
    let test_x = test_ds.map(|t| t.features());

    let mut labels: Vec<f64> = vec![f64::NAN; pool.len()];
    let mut labeled = select_random(pool.len(), cfg.n_initial, derive_seed(cfg.seed, 0));
    labeled.sort_unstable();
    let mut unlabeled: Vec<usize> = (0..pool.len()).filter(|i| !labeled.contains(i)).collect();
    query_oracle(pool, oracle, &labeled, &mut labels)?;

    let mut points = Vec::with_capacity(cfg.n_queries);
    for iteration in 1..=cfg.n_queries {
        if unlabeled.is_empty() {
            break;
        }
        let x_lab = pool_x.select(&labeled);
        let y_lab: Vec<f64> = labeled.iter().map(|&i| labels[i]).collect();
        let model = fit_strategy_model(cfg, &x_lab, &y_lab)?;

        let pool_pred = model.report_predictions(&pool_x, cfg.committee_mean_reporting)?;
        let pool_report = metrics::evaluate(&pool_y, &pool_pred)?;

        let config_report = match (&cfg.goal, &test_ds, &test_x, &true_optima) {
            (Some(goal), Some(test_ds), Some(test_x), Some(truth)) => {
                let test_pred =
                    model.report_predictions(test_x, cfg.committee_mean_reporting)?;
                let predicted = get_optimal_values_from(test_ds, &test_pred, *goal)?;
                Some(evaluate_config_predictions(test_ds, truth, &predicted, *goal)?)
            }
            _ => None,
        };

        let batch = cfg.query_size.min(unlabeled.len());
        let unlabeled_x = pool_x.select(&unlabeled);
        let picked_local: Vec<usize> = match cfg.strategy {
            Strategy::UncertaintySampling => match &model {
                StrategyModel::Single(m) => select_uncertainty(m, &unlabeled_x, batch)?,
                StrategyModel::Committee(_) => unreachable!("US fits a single model"),
            },
            Strategy::QueryByCommittee => match &model {
                StrategyModel::Committee(members) => {
                    let per_member: Vec<Vec<f64>> = members
                        .iter()
                        .map(|m| m.predict(&unlabeled_x))
                        .collect::<Result<_>>()?;
                    let rows: Vec<Vec<f64>> = (0..unlabeled_x.n_rows())
                        .map(|i| per_member.iter().map(|p| p[i]).collect())
                        .collect();
                    select_committee(&rows, batch)?
                }
                StrategyModel::Single(_) => unreachable!("QC fits a committee"),
            },
            Strategy::RandomSampling => {
                select_random(unlabeled.len(), batch, derive_seed(cfg.seed, iteration as u64))
            }
        };

        let picked: Vec<usize> = picked_local.iter().map(|&j| unlabeled[j]).collect();
        query_oracle(pool, oracle, &picked, &mut labels)?;
        let picked_set: Vec<usize> = {
            let mut p = picked.clone();
            p.sort_unstable();
            p
        };
        unlabeled.retain(|i| picked_set.binary_search(i).is_err());
        merge_sorted(&mut labeled, picked);

        points.push(LearningCurvePoint {
            iteration,
            n_labeled: labeled.len(),
            pool_report,
            config_report,
        });
    }

    let final_labels: Vec<f64> = labeled.iter().map(|&i| labels[i]).collect();
    Ok(ActiveRun {
        points,
        labeled_indices: labeled,
        labels: final_labels,
    })
}

fn query_oracle(
    pool: &Dataset,
    oracle: &mut dyn LabelOracle,
    indices: &[usize],
    labels: &mut [f64],
) -> Result<()> {
    let queries: Vec<QueryPoint> = indices
        .iter()
        .map(|&i| QueryPoint {
            pool_index: i,
            config: pool.records[i].config(),
        })
        .collect();
    let answers = oracle.label(&queries)?;
    for (&i, &value) in indices.iter().zip(&answers) {
        labels[i] = value;
    }
    Ok(())
}

/// Checkpointed suggest/ingest loop over unlabeled candidate
/// configurations, for alternating with real experiments. Metrics are
/// computed on the labeled rows (no pool-wide truth exists before the
/// experiments run). The RNG state is a derivation counter: every random
/// draw uses a stream seeded by (cfg.seed, counter).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActiveState {
    pub cfg: ALConfig,
    candidates: Vec<ConfigPoint>,
    /// Sorted labeled candidate indices with their measured runtimes.
    labeled: Vec<(usize, f64)>,
    pending: Vec<usize>,
    iteration: usize,
    rng_draws: u64,
    pub curve: Vec<LearningCurvePoint>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub iteration: usize,
    pub n_ingested: usize,
    pub n_labeled: usize,
    pub done: bool,
    pub report: EvalReport,
}

impl ActiveState {
    /// Start a deferred loop: the first pending batch is the seeded random
    /// initial selection.
    pub fn begin(candidates: Vec<ConfigPoint>, cfg: ALConfig) -> Result<ActiveState> {
        cfg.validate()?;
        if candidates.len() < cfg.n_initial {
            return Err(Error::invalid(format!(
                "{} candidates, fewer than n_initial = {}",
                candidates.len(),
                cfg.n_initial
            )));
        }
        let mut dedup = candidates.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != candidates.len() {
            return Err(Error::invalid(
                "candidate configurations must be unique in deferred mode",
            ));
        }
        let pending = select_random(candidates.len(), cfg.n_initial, derive_seed(cfg.seed, 0));
        Ok(ActiveState {
            cfg,
            candidates,
            labeled: Vec::new(),
            pending,
            iteration: 0,
            rng_draws: 1,
            curve: Vec::new(),
            done: false,
        })
    }

    pub fn pending_configs(&self) -> Vec<ConfigPoint> {
        self.pending.iter().map(|&i| self.candidates[i]).collect()
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn unlabeled_indices(&self) -> Vec<usize> {
        let labeled: Vec<usize> = self.labeled.iter().map(|(i, _)| *i).collect();
        (0..self.candidates.len())
            .filter(|i| labeled.binary_search(i).is_err())
            .collect()
    }

    fn features_of(&self, indices: &[usize]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| self.candidates[i].features().to_vec())
            .collect();
        FeatureMatrix::from_rows(&rows).expect("uniform candidate rows")
    }

    /// Consume labeled rows for the pending batch. The rows must match the
    /// pending suggestions exactly (as a multiset of configurations);
    /// anything else is rejected with the offending row.
    pub fn ingest(&mut self, rows: &[RunRecord]) -> Result<IngestSummary> {
        if self.done {
            return Err(Error::invalid("this loop has already finished"));
        }
        if self.pending.is_empty() {
            return Err(Error::invalid("no pending suggestions to ingest"));
        }
        let mut by_config: BTreeMap<ConfigPoint, VecDeque<usize>> = BTreeMap::new();
        for &i in &self.pending {
            by_config.entry(self.candidates[i]).or_default().push_back(i);
        }
        let mut matched: Vec<(usize, f64)> = Vec::with_capacity(rows.len());
        for r in rows {
            r.validate()?;
            let slot = by_config.get_mut(&r.config()).and_then(VecDeque::pop_front);
            match slot {
                Some(i) => matched.push((i, r.runtime_s)),
                None => {
                    return Err(Error::invalid(format!(
                        "ingested row {},{},{},{} does not match any pending suggestion",
                        r.o, r.v, r.nodes, r.tile_size
                    )))
                }
            }
        }
        let leftover: usize = by_config.values().map(VecDeque::len).sum();
        if leftover > 0 {
            return Err(Error::invalid(format!(
                "{leftover} pending suggestion(s) missing from the ingested rows"
            )));
        }

        self.labeled.extend(matched);
        self.labeled.sort_unstable_by_key(|(i, _)| *i);
        self.pending.clear();
        self.iteration += 1;

        let indices: Vec<usize> = self.labeled.iter().map(|(i, _)| *i).collect();
        let y: Vec<f64> = self.labeled.iter().map(|(_, v)| *v).collect();
        let x = self.features_of(&indices);
        let model = fit_strategy_model(&self.cfg, &x, &y)?;
        let preds = model.report_predictions(&x, self.cfg.committee_mean_reporting)?;
        let report = metrics::evaluate(&y, &preds)?;
        self.curve.push(LearningCurvePoint {
            iteration: self.iteration,
            n_labeled: self.labeled.len(),
            pool_report: report,
            config_report: None,
        });

        let unlabeled = self.unlabeled_indices();
        if self.iteration > self.cfg.n_queries || unlabeled.is_empty() {
            self.done = true;
        } else {
            let batch = self.cfg.query_size.min(unlabeled.len());
            let unlabeled_x = self.features_of(&unlabeled);
            let picked_local = match (&self.cfg.strategy, &model) {
                (Strategy::UncertaintySampling, StrategyModel::Single(m)) => {
                    select_uncertainty(m, &unlabeled_x, batch)?
                }
                (Strategy::QueryByCommittee, StrategyModel::Committee(members)) => {
                    let per_member: Vec<Vec<f64>> = members
                        .iter()
                        .map(|m| m.predict(&unlabeled_x))
                        .collect::<Result<_>>()?;
                    let mrows: Vec<Vec<f64>> = (0..unlabeled_x.n_rows())
                        .map(|i| per_member.iter().map(|p| p[i]).collect())
                        .collect();
                    select_committee(&mrows, batch)?
                }
                (Strategy::RandomSampling, _) => {
                    let seed = derive_seed(self.cfg.seed, self.rng_draws);
                    self.rng_draws += 1;
                    select_random(unlabeled.len(), batch, seed)
                }
                _ => unreachable!("strategy/model pairing is fixed by fit_strategy_model"),
            };
            self.pending = picked_local.into_iter().map(|j| unlabeled[j]).collect();
        }

        Ok(IngestSummary {
            iteration: self.iteration,
            n_ingested: rows.len(),
            n_labeled: self.labeled.len(),
            done: self.done,
            report: self.curve.last().expect("row just pushed").pool_report,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ActiveState> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
