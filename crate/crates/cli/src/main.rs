//! Command-line frontend: dataset generation, training, evaluation,
//! hyperparameter tuning, configuration advice, and active-learning loops.
//!
//! Conventions: human-readable summaries go to stderr; machine-readable
//! CSV/records go to stdout or `--out` files. Exit codes: 0 success,
//! 1 validation error (bad flags, schemas, contracts), 2 runtime failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use tensortime::active::{
    curve_to_csv, run_active_learning, ActiveState, ALConfig, PoolLookupOracle, Strategy,
};
use tensortime::advisor::{recommend, sweep, ConfigGrid, Goal, ProblemSize};
use tensortime::data::{
    format_seconds, group_by_problem, load_candidates_csv, load_csv, RunRecord,
    CANDIDATE_CSV_HEADER,
};
use tensortime::error::Error;
use tensortime::metrics::{evaluate, mae, mape, r2_score};
use tensortime::regressors::{Family, FamilyParams, Model, ModelSpec};
use tensortime::seeding::derive_seed;
use tensortime::synth::{default_problems, generate_dataset, sample_runtime, CostModelParams};
use tensortime::tuning::{grid_search_cv, Scoring, SpecGrid};

const ENV_PREFIX: &str = "TENSORTIME_";
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "tensortime",
    version,
    about = "Runtime prediction and configuration advice for tiled tensor-contraction workloads"
)]
struct Cli {
    /// Optional key=value config file; flags override env vars
    /// (TENSORTIME_*), which override this file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV from the analytic cost model.
    Generate(GenerateArgs),
    /// Fit a model on a dataset CSV and write its JSON dump.
    Train(TrainArgs),
    /// Score a model on a dataset CSV, overall and per (O, V) group.
    Eval(EvalArgs),
    /// Exhaustive k-fold cross-validated grid search.
    Tune(TuneArgs),
    /// Answer the shortest-time or budget question for one problem size.
    Recommend(RecommendArgs),
    /// Run a simulated active-learning loop and export its learning curve.
    ActiveSim(ActiveSimArgs),
    /// Emit the pending experiment batch of a checkpointed loop.
    ActiveSuggest(ActiveSuggestArgs),
    /// Feed labeled experiment results back into a checkpointed loop.
    ActiveIngest(ActiveIngestArgs),
    /// Merge learning-curve CSVs into one long-format table for plotting.
    CurveExport(CurveExportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Problem sizes as `O:V` pairs, e.g. `44:260,81:835`.
    #[arg(long)]
    problems: Option<String>,
    /// Node-count candidates (comma-separated, strictly increasing).
    #[arg(long, default_value = "5,10,20,40,80,160,320,640")]
    nodes: String,
    /// Tile-size candidates (comma-separated, strictly increasing).
    #[arg(long, default_value = "40,60,80,100,120,140")]
    tiles: String,
    #[arg(long)]
    n_per_cell: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    cost: CostArgs,
}

#[derive(Args)]
struct CostArgs {
    /// Lognormal noise σ of sampled runtimes.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    c_flop: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    c_comm: Option<f64>,
    #[arg(long)]
    c_fixed: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Model family: dt, rf, gb, gp, pr, kr, br.
    #[arg(long, default_value = "gb")]
    family: String,
    /// Output path for the model JSON dump.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct HyperArgs {
    /// Ensemble size (gb, rf).
    #[arg(long)]
    n_estimators: Option<usize>,
    /// Tree depth limit (dt, rf, gb).
    #[arg(long)]
    max_depth: Option<u32>,
    /// Shrinkage per boosting stage (gb).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Polynomial degree (pr).
    #[arg(long)]
    degree: Option<usize>,
    /// Ridge regularization λ (pr, kr).
    #[arg(long)]
    reg_lambda: Option<f64>,
    /// RBF length scale (kr).
    #[arg(long)]
    length_scale: Option<f64>,
    /// Likelihood-search restarts (gp).
    #[arg(long)]
    gp_restarts: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    data: PathBuf,
    /// Family to tune: gb, rf, dt, pr, kr.
    #[arg(long, default_value = "gb")]
    family: String,
    /// Cross-validation folds.
    #[arg(long)]
    k: Option<usize>,
    /// r2 (maximize), mae or mape (minimize).
    #[arg(long, default_value = "mape")]
    scoring: String,
    #[arg(long)]
    seed: Option<u64>,
    /// cv-table CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the winning spec as JSON.
    #[arg(long)]
    best_out: Option<PathBuf>,
    /// Grid override lists (comma-separated), per family.
    #[arg(long)]
    grid_n_estimators: Option<String>,
    #[arg(long)]
    grid_max_depth: Option<String>,
    #[arg(long)]
    grid_learning_rate: Option<String>,
    #[arg(long)]
    grid_n_trees: Option<String>,
    #[arg(long)]
    grid_degree: Option<String>,
    #[arg(long)]
    grid_lambda: Option<String>,
    #[arg(long)]
    grid_length_scale: Option<String>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    o: u32,
    #[arg(long)]
    v: u32,
    /// stq (shortest time) or bq (budget).
    #[arg(long)]
    goal: String,
    /// Node-count candidates; defaults to the built-in sweep grid.
    #[arg(long)]
    nodes: Option<String>,
    /// Tile-size candidates; defaults to the built-in sweep grid.
    #[arg(long)]
    tiles: Option<String>,
    /// Also write the full sweep as CSV.
    #[arg(long)]
    sweep_out: Option<PathBuf>,
}

#[derive(Args)]
struct ActiveSimArgs {
    /// Labeled pool CSV the loop queries from.
    #[arg(long)]
    pool: PathBuf,
    /// rs, us, or qc.
    #[arg(long)]
    strategy: String,
    /// Held-out test CSV, required when --goal is set.
    #[arg(long)]
    test: Option<PathBuf>,
    /// stq or bq; enables configuration-loss scoring.
    #[arg(long)]
    goal: Option<String>,
    /// pool (answer with pooled measurements) or synthetic (relabel the
    /// pool from the analytic cost model before simulating).
    #[arg(long, default_value = "pool")]
    oracle: String,
    /// Curve CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    loop_args: LoopArgs,
    #[command(flatten)]
    cost: CostArgs,
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    n_initial: Option<usize>,
    #[arg(long)]
    query_size: Option<usize>,
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    n_committees: Option<usize>,
    /// Report committee-mean metrics instead of the last member's.
    #[arg(long)]
    committee_mean: bool,
    #[arg(long)]
    gp_restarts: Option<usize>,
}

#[derive(Args)]
struct ActiveSuggestArgs {
    /// Loop checkpoint; created on first use (requires --candidates).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Unlabeled candidate configurations CSV (O,V,nodes,tile_size).
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Where to write the pending-experiments CSV.
    #[arg(long)]
    pending: PathBuf,
    /// rs, us, or qc (first call only).
    #[arg(long, default_value = "us")]
    strategy: String,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    loop_args: LoopArgs,
}

#[derive(Args)]
struct ActiveIngestArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled results CSV (full five-column schema).
    #[arg(long)]
    labeled: PathBuf,
    /// Pending file to clear after a successful ingest.
    #[arg(long)]
    pending: Option<PathBuf>,
}

#[derive(Args)]
struct CurveExportArgs {
    /// Merged CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Learning-curve CSVs to merge (tagged by file stem).
    #[arg(required = true)]
    curves: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful exits; anything else is a
            // validation failure.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let ctx = match Ctx::new(cli.config.as_deref()) {
        Ok(ctx) => ctx,
        Err(e) => return fail(&e),
    };
    match dispatch(cli.command, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() { 1 } else { 2 })
}

fn dispatch(command: Command, ctx: &Ctx) -> Result<(), Error> {
    match command {
        Command::Generate(args) => cmd_generate(args, ctx),
        Command::Train(args) => cmd_train(args, ctx),
        Command::Eval(args) => cmd_eval(args),
        Command::Tune(args) => cmd_tune(args, ctx),
        Command::Recommend(args) => cmd_recommend(args),
        Command::ActiveSim(args) => cmd_active_sim(args, ctx),
        Command::ActiveSuggest(args) => cmd_active_suggest(args, ctx),
        Command::ActiveIngest(args) => cmd_active_ingest(args),
        Command::CurveExport(args) => cmd_curve_export(args),
    }
}

/// Option resolution: flag, then TENSORTIME_<KEY>, then the config file.
struct Ctx {
    config: BTreeMap<String, String>,
}

impl Ctx {
    fn new(path: Option<&Path>) -> Result<Ctx, Error> {
        let mut config = BTreeMap::new();
        if let Some(path) = path {
            for (no, line) in std::fs::read_to_string(path)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::invalid(format!("config line {} is not key=value: `{line}`", no + 1))
                })?;
                config.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Ctx { config })
    }

    fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Error> {
        if let Some(v) = flag {
            return Ok(v);
        }
        let env_key = format!("{ENV_PREFIX}{}", key.to_uppercase().replace('-', "_"));
        let raw = std::env::var(env_key)
            .ok()
            .or_else(|| self.config.get(key).cloned());
        match raw {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::invalid(format!("cannot parse `{raw}` for option {key}"))),
            None => Ok(default),
        }
    }
}

fn write_or_stdout(path: Option<&Path>, contents: &str) -> Result<(), Error> {
    match path {
        Some(path) => std::fs::write(path, contents)?,
        None => print!("{contents}"),
    }
    Ok(())
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Error> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

fn parse_problems(raw: &str) -> Result<Vec<ProblemSize>, Error> {
    raw.split(',')
        .map(|pair| {
            let (o, v) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad problem `{pair}`, expected O:V")))?;
            Ok(ProblemSize {
                o: o.parse()
                    .map_err(|_| Error::invalid(format!("bad O in `{pair}`")))?,
                v: v.parse()
                    .map_err(|_| Error::invalid(format!("bad V in `{pair}`")))?,
            })
        })
        .collect()
}

fn cost_params(args: &CostArgs, ctx: &Ctx) -> Result<CostModelParams, Error> {
    let d = CostModelParams::default();
    let params = CostModelParams {
        noise_sigma: ctx.resolve(args.noise, "noise", d.noise_sigma)?,
        c_flop: args.c_flop.unwrap_or(d.c_flop),
        t0: args.t0.unwrap_or(d.t0),
        t1: args.t1.unwrap_or(d.t1),
        c_comm: args.c_comm.unwrap_or(d.c_comm),
        c_fixed: args.c_fixed.unwrap_or(d.c_fixed),
    };
    params.validate()?;
    Ok(params)
}

fn format_node_hours(nh: f64) -> String {
    let mut s = format!("{nh:.4}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn cmd_generate(args: GenerateArgs, ctx: &Ctx) -> Result<(), Error> {
    let problems = match &args.problems {
        Some(raw) => parse_problems(raw)?,
        None => default_problems(),
    };
    let grid = ConfigGrid::new(
        parse_list(&args.nodes, "node")?,
        parse_list(&args.tiles, "tile")?,
    )?;
    let n_per_cell = ctx.resolve(args.n_per_cell, "n-per-cell", 1)?;
    let seed = ctx.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let params = cost_params(&args.cost, ctx)?;
    let dataset = generate_dataset(&problems, &grid, n_per_cell, &params, seed)?;
    write_or_stdout(args.out.as_deref(), &dataset.to_csv_string())?;
    eprintln!(
        "generated {} records ({} problems × {} nodes × {} tiles × {n_per_cell}), seed {seed}",
        dataset.len(),
        problems.len(),
        grid.node_candidates.len(),
        grid.tile_candidates.len()
    );
    Ok(())
}

fn build_spec(family: Family, hyper: &HyperArgs, seed: u64) -> ModelSpec {
    let mut spec = ModelSpec::default_for(family, seed);
    match &mut spec.params {
        FamilyParams::GradientBoosting(p) => {
            if let Some(n) = hyper.n_estimators {
                p.n_estimators = n;
            }
            if let Some(d) = hyper.max_depth {
                p.max_depth = Some(d);
            }
            if let Some(lr) = hyper.learning_rate {
                p.learning_rate = lr;
            }
        }
        FamilyParams::RandomForest(p) => {
            if let Some(n) = hyper.n_estimators {
                p.n_trees = n;
            }
            if let Some(d) = hyper.max_depth {
                p.max_depth = Some(d);
            }
        }
        FamilyParams::DecisionTree(p) => {
            if let Some(d) = hyper.max_depth {
                p.max_depth = Some(d);
            }
        }
        FamilyParams::GaussianProcess(p) => {
            if let Some(r) = hyper.gp_restarts {
                p.n_restarts = r;
            }
        }
        FamilyParams::PolynomialRidge(p) => {
            if let Some(d) = hyper.degree {
                p.degree = d;
            }
            if let Some(l) = hyper.reg_lambda {
                p.lambda = l;
            }
        }
        FamilyParams::KernelRidge(p) => {
            if let Some(l) = hyper.reg_lambda {
                p.lambda = l;
            }
            if let Some(ls) = hyper.length_scale {
                p.length_scale = ls;
            }
        }
        FamilyParams::BayesianRidge(_) => {}
    }
    spec
}

fn cmd_train(args: TrainArgs, ctx: &Ctx) -> Result<(), Error> {
    let dataset = load_csv(&args.data)?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let family = Family::parse(&args.family)?;
    let seed = ctx.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let spec = build_spec(family, &args.hyper, seed);
    let model = Model::fit(&spec, &dataset.features(), &dataset.runtimes())?;
    model.save(&args.out)?;
    let preds = model.predict(&dataset.features())?;
    let report = evaluate(&dataset.runtimes(), &preds)?;
    println!("r2,mae,mape,n");
    println!("{},{},{},{}", report.r2, report.mae, report.mape, report.n);
    eprintln!(
        "trained {family} on {} records from {}; train-set r2 {:.4}, mae {:.4}, mape {:.4}; model -> {}",
        dataset.len(),
        args.data.display(),
        report.r2,
        report.mae,
        report.mape,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let model = Model::load(&args.model)?;
    let dataset = load_csv(&args.data)?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let preds = model.predict(&dataset.features())?;
    let truth = dataset.runtimes();

    let mut out = String::from("scope,o,v,n,r2,mae,mape\n");
    let overall = evaluate(&truth, &preds)?;
    let _ = writeln!(
        out,
        "overall,,,{},{},{},{}",
        overall.n, overall.r2, overall.mae, overall.mape
    );
    for ((o, v), indices) in group_by_problem(&dataset) {
        let y: Vec<f64> = indices.iter().map(|&i| truth[i]).collect();
        let y_hat: Vec<f64> = indices.iter().map(|&i| preds[i]).collect();
        // R² is undefined for singleton or zero-variance groups.
        let r2_cell = r2_score(&y, &y_hat)
            .map(|r| r.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "group,{o},{v},{},{r2_cell},{},{}",
            y.len(),
            mae(&y, &y_hat)?,
            mape(&y, &y_hat)?
        );
    }
    write_or_stdout(args.out.as_deref(), &out)?;
    eprintln!(
        "evaluated {} on {} records: r2 {:.4}, mae {:.4}, mape {:.4}",
        model.family(),
        overall.n,
        overall.r2,
        overall.mae,
        overall.mape
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs, ctx: &Ctx) -> Result<(), Error> {
    let dataset = load_csv(&args.data)?;
    let family = Family::parse(&args.family)?;
    let k = ctx.resolve(args.k, "k", 5)?;
    let scoring = Scoring::parse(&args.scoring)?;
    let seed = ctx.resolve(args.seed, "seed", DEFAULT_SEED)?;

    fn nums<T: FromStr>(raw: &Option<String>, default: &[T], what: &str) -> Result<Vec<T>, Error>
    where
        T: Clone,
    {
        match raw {
            Some(raw) => {
                let parsed: Result<Vec<T>, Error> = raw
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad {what} entry `{s}`")))
                    })
                    .collect();
                let parsed = parsed?;
                if parsed.is_empty() {
                    return Err(Error::invalid(format!("empty {what} grid")));
                }
                Ok(parsed)
            }
            None => Ok(default.to_vec()),
        }
    }

    let grid = match family {
        Family::GradientBoosting => SpecGrid::GradientBoosting {
            n_estimators: nums(&args.grid_n_estimators, &[250, 500, 750, 1000], "n-estimators")?,
            max_depth: nums(&args.grid_max_depth, &[5, 10, 15], "max-depth")?,
            learning_rate: nums(&args.grid_learning_rate, &[0.1], "learning-rate")?,
        },
        Family::RandomForest => SpecGrid::RandomForest {
            n_trees: nums(&args.grid_n_trees, &[50, 100, 200], "n-trees")?,
            max_depth: nums(&args.grid_max_depth, &[10u32, 20], "max-depth")?
                .into_iter()
                .map(Some)
                .collect(),
        },
        Family::DecisionTree => SpecGrid::DecisionTree {
            max_depth: nums(&args.grid_max_depth, &[5u32, 10, 20], "max-depth")?
                .into_iter()
                .map(Some)
                .collect(),
            min_samples_leaf: vec![1],
        },
        Family::PolynomialRidge => SpecGrid::PolynomialRidge {
            degree: nums(&args.grid_degree, &[1, 2, 3], "degree")?,
            lambda: nums(&args.grid_lambda, &[1e-8, 1e-4], "lambda")?,
        },
        Family::KernelRidge => SpecGrid::KernelRidge {
            lambda: nums(&args.grid_lambda, &[1e-6, 1e-4, 1e-2, 1.0], "lambda")?,
            length_scale: nums(&args.grid_length_scale, &[0.3, 1.0, 3.0], "length-scale")?,
        },
        other => {
            return Err(Error::invalid(format!(
                "no tuning grid defined for family {other}"
            )))
        }
    };

    let result = grid_search_cv(
        &grid,
        &dataset.features(),
        &dataset.runtimes(),
        k,
        scoring,
        seed,
    )?;
    write_or_stdout(args.out.as_deref(), &result.to_csv())?;
    if let Some(path) = &args.best_out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&result.best_spec).map_err(Error::from)?,
        )?;
    }
    let best_params: Vec<String> = result
        .best_spec
        .param_pairs()
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    eprintln!(
        "tuned {family} over {} grid points ({k}-fold, {scoring}); best: {}",
        result.cv_table.len(),
        best_params.join(", ")
    );
    Ok(())
}

fn cmd_recommend(args: RecommendArgs) -> Result<(), Error> {
    let model = Model::load(&args.model)?;
    let problem = ProblemSize {
        o: args.o,
        v: args.v,
    };
    let goal = Goal::parse(&args.goal)?;
    let default_grid = ConfigGrid::default();
    let grid = ConfigGrid::new(
        match &args.nodes {
            Some(raw) => parse_list(raw, "node")?,
            None => default_grid.node_candidates.clone(),
        },
        match &args.tiles {
            Some(raw) => parse_list(raw, "tile")?,
            None => default_grid.tile_candidates.clone(),
        },
    )?;
    if let Some(path) = &args.sweep_out {
        let points = sweep(&model, problem, &grid)?;
        let mut csv = String::from("O,V,nodes,tile_size,pred_runtime_s\n");
        for p in points {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                args.o,
                args.v,
                p.nodes,
                p.tile_size,
                format_seconds(p.predicted_runtime_s)
            );
        }
        std::fs::write(path, csv)?;
    }
    let rec = recommend(&model, problem, &grid, goal)?;
    println!(
        "{},{},{},{},{},{},{}",
        rec.o,
        rec.v,
        rec.goal,
        rec.nodes,
        rec.tile_size,
        format_seconds(rec.predicted_runtime_s),
        format_node_hours(rec.predicted_node_hours)
    );
    eprintln!(
        "{} for ({}, {}): run on {} nodes with tile size {} — predicted {} s, {} node-hours",
        match goal {
            Goal::ShortestTime => "shortest time",
            Goal::Budget => "cheapest budget",
        },
        rec.o,
        rec.v,
        rec.nodes,
        rec.tile_size,
        format_seconds(rec.predicted_runtime_s),
        format_node_hours(rec.predicted_node_hours)
    );
    Ok(())
}

fn al_config(
    strategy: Strategy,
    goal: Option<Goal>,
    seed: u64,
    loop_args: &LoopArgs,
    ctx: &Ctx,
) -> Result<ALConfig, Error> {
    let defaults = ALConfig::new(strategy, seed);
    let cfg = ALConfig {
        strategy,
        n_initial: ctx.resolve(loop_args.n_initial, "n-initial", defaults.n_initial)?,
        query_size: ctx.resolve(loop_args.query_size, "query-size", defaults.query_size)?,
        n_queries: ctx.resolve(loop_args.n_queries, "n-queries", defaults.n_queries)?,
        n_committees: ctx.resolve(loop_args.n_committees, "n-committees", defaults.n_committees)?,
        goal,
        seed,
        committee_mean_reporting: loop_args.committee_mean,
        gp_restarts: ctx.resolve(loop_args.gp_restarts, "gp-restarts", defaults.gp_restarts)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_active_sim(args: ActiveSimArgs, ctx: &Ctx) -> Result<(), Error> {
    let mut pool = load_csv(&args.pool)?;
    let strategy = Strategy::parse(&args.strategy)?;
    let goal = args.goal.as_deref().map(Goal::parse).transpose()?;
    let seed = ctx.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let cfg = al_config(strategy, goal, seed, &args.loop_args, ctx)?;

    match args.oracle.as_str() {
        "pool" => {}
        "synthetic" => {
            // Relabel the pool from the cost model so oracle answers and
            // pool-level truth agree.
            let params = cost_params(&args.cost, ctx)?;
            for (i, r) in pool.records.iter_mut().enumerate() {
                r.runtime_s = sample_runtime(
                    r.o,
                    r.v,
                    r.nodes,
                    r.tile_size,
                    &params,
                    derive_seed(seed, i as u64),
                )?;
            }
        }
        other => return Err(Error::invalid(format!("unknown oracle `{other}`"))),
    }

    let test = args.test.as_deref().map(load_csv).transpose()?;
    let mut oracle = PoolLookupOracle::new(&pool);
    let run = run_active_learning(&pool, test.as_ref(), &mut oracle, &cfg)?;
    write_or_stdout(args.out.as_deref(), &curve_to_csv(&run.points))?;
    let last = run.points.last().expect("at least one iteration");
    eprintln!(
        "{strategy} simulation: {} iterations, final n_labeled {} of {}, pool mape {:.4}",
        run.points.len(),
        last.n_labeled,
        pool.len(),
        last.pool_report.mape
    );
    Ok(())
}

fn pending_csv(state: &ActiveState) -> String {
    let mut out = String::from(CANDIDATE_CSV_HEADER);
    out.push('\n');
    for c in state.pending_configs() {
        let _ = writeln!(out, "{},{},{},{}", c.o, c.v, c.nodes, c.tile_size);
    }
    out
}

fn cmd_active_suggest(args: ActiveSuggestArgs, ctx: &Ctx) -> Result<(), Error> {
    let state = if args.checkpoint.exists() {
        ActiveState::load(&args.checkpoint)?
    } else {
        let candidates_path = args
            .candidates
            .as_ref()
            .ok_or_else(|| Error::invalid("starting a new loop requires --candidates"))?;
        let candidates = load_candidates_csv(candidates_path)?;
        let strategy = Strategy::parse(&args.strategy)?;
        let seed = ctx.resolve(args.seed, "seed", DEFAULT_SEED)?;
        let cfg = al_config(strategy, None, seed, &args.loop_args, ctx)?;
        let state = ActiveState::begin(candidates, cfg)?;
        state.save(&args.checkpoint)?;
        state
    };
    std::fs::write(&args.pending, pending_csv(&state))?;
    if state.done {
        eprintln!(
            "loop finished after {} iterations with {} labeled rows; nothing pending",
            state.iteration(),
            state.n_labeled()
        );
    } else {
        eprintln!(
            "iteration {}: {} experiments pending in {} (checkpoint {})",
            state.iteration(),
            state.pending_configs().len(),
            args.pending.display(),
            args.checkpoint.display()
        );
    }
    Ok(())
}

fn cmd_active_ingest(args: ActiveIngestArgs) -> Result<(), Error> {
    let mut state = ActiveState::load(&args.checkpoint)?;
    let labeled = load_csv(&args.labeled)?;
    let rows: Vec<RunRecord> = labeled.records;
    let summary = state.ingest(&rows)?;
    state.save(&args.checkpoint)?;
    if let Some(pending) = &args.pending {
        std::fs::write(pending, format!("{CANDIDATE_CSV_HEADER}\n"))?;
    }
    println!("iteration,n_labeled,r2,mae,mape");
    println!(
        "{},{},{},{},{}",
        summary.iteration,
        summary.n_labeled,
        summary.report.r2,
        summary.report.mae,
        summary.report.mape
    );
    eprintln!(
        "ingested {} rows; iteration {}, {} labeled, labeled-set mape {:.4}{}",
        summary.n_ingested,
        summary.iteration,
        summary.n_labeled,
        summary.report.mape,
        if summary.done {
            "; loop complete"
        } else {
            "; run active-suggest for the next batch"
        }
    );
    Ok(())
}

fn cmd_curve_export(args: CurveExportArgs) -> Result<(), Error> {
    let mut out = String::from("source,iteration,n_labeled,r2,mae,mape,r2_cfg,mae_cfg,mape_cfg\n");
    for path in &args.curves {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Csv {
            line: 1,
            column: String::new(),
            message: format!("{}: empty curve file", path.display()),
        })?;
        let has_cfg = header.contains("r2_cfg");
        let expect = if has_cfg { 8 } else { 5 };
        for (no, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expect {
                return Err(Error::Csv {
                    line: no + 2,
                    column: String::new(),
                    message: format!(
                        "{}: expected {expect} columns, found {}",
                        path.display(),
                        fields.len()
                    ),
                });
            }
            let _ = write!(out, "{stem}");
            for f in &fields {
                let _ = write!(out, ",{f}");
            }
            if !has_cfg {
                out.push_str(",,,");
            }
            out.push('\n');
        }
    }
    write_or_stdout(args.out.as_deref(), &out)?;
    eprintln!("merged {} curve file(s)", args.curves.len());
    Ok(())
}
