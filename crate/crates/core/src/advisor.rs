//! Configuration advice: sweep candidate (nodes, tile) pairs through a
//! trained model to answer the shortest-time and budget questions, and
//! score predicted-optimal configurations by their *true* objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{group_by_problem, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::regressors::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSize {
    pub o: u32,
    pub v: u32,
}

impl ProblemSize {
    pub fn validate(&self) -> Result<()> {
        if self.o < 1 || self.v < 1 {
            return Err(Error::invalid("problem size components must be ≥ 1"));
        }
        Ok(())
    }
}

/// Candidate node counts and tile sizes, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigGrid {
    pub node_candidates: Vec<u32>,
    pub tile_candidates: Vec<u32>,
}

impl ConfigGrid {
    pub fn new(node_candidates: Vec<u32>, tile_candidates: Vec<u32>) -> Result<ConfigGrid> {
        let grid = ConfigGrid {
            node_candidates,
            tile_candidates,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("node_candidates", &self.node_candidates),
            ("tile_candidates", &self.tile_candidates),
        ] {
            if list.is_empty() {
                return Err(Error::invalid(format!("{name} is empty")));
            }
            if list[0] < 1 {
                return Err(Error::invalid(format!("{name} entries must be ≥ 1")));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "{name} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.node_candidates.len() * self.tile_candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ConfigGrid {
    /// Candidate ranges of typical interest, inferred from observed
    /// production sweeps; override via CLI or config for other machines.
    fn default() -> Self {
        ConfigGrid {
            node_candidates: vec![
                5, 10, 15, 20, 25, 30, 35, 45, 50, 65, 70, 75, 90, 95, 110, 120, 185, 200, 220,
                240, 260, 300, 320, 350, 400, 600, 700, 800, 900,
            ],
            tile_candidates: vec![40, 60, 70, 73, 80, 90, 100, 110, 120, 130, 140, 150, 160, 180],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Goal {
    /// Minimize predicted runtime.
    ShortestTime,
    /// Minimize predicted node-hours.
    Budget,
}

impl Goal {
    pub fn parse(s: &str) -> Result<Goal> {
        match s.to_ascii_lowercase().as_str() {
            "stq" | "shortest-time" => Ok(Goal::ShortestTime),
            "bq" | "budget" => Ok(Goal::Budget),
            other => Err(Error::invalid(format!("unknown goal `{other}`"))),
        }
    }

    fn objective(&self, nodes: u32, runtime_s: f64) -> f64 {
        match self {
            Goal::ShortestTime => runtime_s,
            Goal::Budget => nodes as f64 * runtime_s / 3600.0,
        }
    }
}

impl std::fmt::Display for Goal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Goal::ShortestTime => "stq",
            Goal::Budget => "bq",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub o: u32,
    pub v: u32,
    pub nodes: u32,
    pub tile_size: u32,
    pub predicted_runtime_s: f64,
    pub predicted_node_hours: f64,
    pub goal: Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub nodes: u32,
    pub tile_size: u32,
    pub predicted_runtime_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalEntry {
    pub nodes: u32,
    pub tile_size: u32,
    pub objective_value: f64,
}

/// Per-problem optimal configurations under one goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalTable {
    pub goal: Goal,
    pub entries: BTreeMap<(u32, u32), OptimalEntry>,
}

/// nodes × runtime / 3600.
pub fn node_hours(nodes: u32, runtime_s: f64) -> Result<f64> {
    if nodes < 1 {
        return Err(Error::invalid("nodes must be ≥ 1"));
    }
    if !(runtime_s > 0.0) || !runtime_s.is_finite() {
        return Err(Error::invalid("runtime_s must be positive and finite"));
    }
    Ok(nodes as f64 * runtime_s / 3600.0)
}

/// Predict runtime at every grid cell for a fixed problem size, Cartesian
/// order (nodes outer, tiles inner).
pub fn sweep(model: &Model, problem: ProblemSize, grid: &ConfigGrid) -> Result<Vec<SweepPoint>> {
    problem.validate()?;
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &n in &grid.node_candidates {
        for &t in &grid.tile_candidates {
            rows.push(vec![problem.o as f64, problem.v as f64, n as f64, t as f64]);
        }
    }
    let preds = model.predict(&FeatureMatrix::from_rows(&rows)?)?;
    let mut out = Vec::with_capacity(preds.len());
    let mut i = 0;
    for &n in &grid.node_candidates {
        for &t in &grid.tile_candidates {
            out.push(SweepPoint {
                nodes: n,
                tile_size: t,
                predicted_runtime_s: preds[i],
            });
            i += 1;
        }
    }
    Ok(out)
}

/// Answer a goal by sweeping the grid: STQ takes the predicted-runtime
/// argmin, BQ the predicted node-hours argmin. Ties break toward fewer
/// nodes, then a smaller tile.
pub fn recommend(
    model: &Model,
    problem: ProblemSize,
    grid: &ConfigGrid,
    goal: Goal,
) -> Result<Recommendation> {
    let points = sweep(model, problem, grid)?;
    // Sweep order is (nodes asc, tiles asc); strict improvement keeps the
    // first of any tie, which is exactly the documented tie-break.
    let mut best: Option<(&SweepPoint, f64)> = None;
    for p in &points {
        let obj = goal.objective(p.nodes, p.predicted_runtime_s);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((p, obj));
        }
    }
    let (point, _) = best.expect("grid is nonempty");
    Ok(Recommendation {
        o: problem.o,
        v: problem.v,
        nodes: point.nodes,
        tile_size: point.tile_size,
        predicted_runtime_s: point.predicted_runtime_s,
        // Arithmetic identity with the prediction, even when a linear model
        // extrapolates below zero; the validated node_hours op is for
        // measured runtimes.
        predicted_node_hours: point.nodes as f64 * point.predicted_runtime_s / 3600.0,
        goal,
    })
}

/// Per-(O, V) optimal configuration from measured records.
pub fn get_optimal_values(dataset: &Dataset, goal: Goal) -> Result<OptimalTable> {
    let values = dataset.runtimes();
    get_optimal_values_from(dataset, &values, goal)
}

/// Same argmin, but over caller-supplied values (e.g. model predictions)
/// aligned with the dataset's records.
pub fn get_optimal_values_from(
    dataset: &Dataset,
    values: &[f64],
    goal: Goal,
) -> Result<OptimalTable> {
    if values.len() != dataset.len() {
        return Err(Error::invalid("values are not aligned with the records"));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("cannot take optima of an empty dataset"));
    }
    let mut entries = BTreeMap::new();
    for (key, indices) in group_by_problem(dataset) {
        let mut best: Option<OptimalEntry> = None;
        for &i in &indices {
            let r = &dataset.records[i];
            let candidate = OptimalEntry {
                nodes: r.nodes,
                tile_size: r.tile_size,
                objective_value: goal.objective(r.nodes, values[i]),
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    candidate.objective_value < b.objective_value
                        || (candidate.objective_value == b.objective_value
                            && (candidate.nodes, candidate.tile_size) < (b.nodes, b.tile_size))
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        entries.insert(key, best.expect("group is nonempty"));
    }
    Ok(OptimalTable { goal, entries })
}

/// One scored problem under the configuration-loss rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigLossPair {
    pub o: u32,
    pub v: u32,
    pub true_optimal: f64,
    pub true_at_predicted: f64,
}

/// The pairs behind [`evaluate_config_predictions`]: per problem, the true
/// optimal objective and the TRUE objective measured at the predicted
/// config — never the model's own prediction. Both tables must cover the
/// same (O, V) keys, and every predicted config must exist among that
/// group's records.
pub fn config_loss_pairs(
    test: &Dataset,
    true_optima: &OptimalTable,
    predicted_optima: &OptimalTable,
    goal: Goal,
) -> Result<Vec<ConfigLossPair>> {
    let keys: Vec<(u32, u32)> = true_optima.entries.keys().copied().collect();
    if keys != predicted_optima.entries.keys().copied().collect::<Vec<_>>() {
        return Err(Error::invalid(
            "true and predicted optima cover different (O, V) sets",
        ));
    }
    let groups = group_by_problem(test);
    let mut pairs = Vec::with_capacity(keys.len());
    for key in keys {
        let truth = &true_optima.entries[&key];
        let predicted = &predicted_optima.entries[&key];
        let indices = groups.get(&key).ok_or_else(|| {
            Error::invalid(format!("problem {key:?} missing from the test records"))
        })?;
        // True objective at the predicted config; replicated measurements
        // resolve to the best (minimum), matching the optimum convention.
        let measured = indices
            .iter()
            .map(|&i| &test.records[i])
            .filter(|r| r.nodes == predicted.nodes && r.tile_size == predicted.tile_size)
            .map(|r| goal.objective(r.nodes, r.runtime_s))
            .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.min(v))));
        let measured = measured.ok_or_else(|| {
            Error::invalid(format!(
                "predicted config ({}, {}) for problem {key:?} is absent from the test records",
                predicted.nodes, predicted.tile_size
            ))
        })?;
        pairs.push(ConfigLossPair {
            o: key.0,
            v: key.1,
            true_optimal: truth.objective_value,
            true_at_predicted: measured,
        });
    }
    Ok(pairs)
}

/// Metrics over the configuration-loss pairs.
pub fn evaluate_config_predictions(
    test: &Dataset,
    true_optima: &OptimalTable,
    predicted_optima: &OptimalTable,
    goal: Goal,
) -> Result<EvalReport> {
    let pairs = config_loss_pairs(test, true_optima, predicted_optima, goal)?;
    let y_true: Vec<f64> = pairs.iter().map(|p| p.true_optimal).collect();
    let y_at_predicted: Vec<f64> = pairs.iter().map(|p| p.true_at_predicted).collect();
    metrics::evaluate(&y_true, &y_at_predicted)
}
