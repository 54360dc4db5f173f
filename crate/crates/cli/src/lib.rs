//! The `fir` command: k-fold training, ranking and masked prediction.

pub mod artifacts;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use fir_core::data::load_feature_matrix;
use fir_core::deploy::{extract, predict_masked, FirReport, Predictions};
use fir_core::error::FirError;
use fir_core::experiment::{DatasetSource, Experiment, FoldOutcome, Preset, RunConfig, Summary};
use fir_core::nn::{AdamConfig, Network};
use fir_core::{OperatorModel, SelectorModel};
use log::info;

use artifacts::{ModelMeta, MODEL_FILE, OPERATOR_FILE, SELECTOR_FILE};

pub const DEFAULT_OUT: &str = "fir_out";

#[derive(Debug, Parser)]
#[command(name = "fir", version, about = "Feature importance ranking with an operator/selector dual net")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validated training; writes one directory per fold and summary.json.
    Train(TrainArgs),
    /// Ranks the features of a trained fold directory.
    Rank(RankArgs),
    /// Predicts a CSV with a trained fold directory under its optimal mask.
    Predict(PredictArgs),
    /// Prints a run configuration for a built-in preset.
    Config {
        /// xor4, nonlinreg or binhyper
        preset: String,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Folds trained at once.
    #[arg(long, value_name = "INT")]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RankArgs {
    pub model_dir: PathBuf,
    /// Scores CSV destination [default: MODEL_DIR/rank_scores.csv]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; ranking involves no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PredictArgs {
    pub model_dir: PathBuf,
    pub csv: PathBuf,
    /// Predictions CSV destination [default: MODEL_DIR/predictions.csv]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; prediction involves no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A failed command and the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or missing configuration, checkpoint or input (exit 2).
    #[error("{0}")]
    Input(String),
    /// Training hit a non-finite value (exit 3).
    #[error("{0}")]
    Numeric(String),
    /// Results could not be written (exit 1).
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn input(context: impl std::fmt::Display, e: FirError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(format!("{context}: {e}"))
        } else {
            CliError::Input(format!("{context}: {e}"))
        }
    }

    fn output(e: FirError) -> Self {
        CliError::Output(format!("cannot write results: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => train_run(&args).map(|_| ()),
        Command::Rank(args) => {
            let ranked = rank(&args)?;
            print!("{}", ranked.table);
            Ok(())
        }
        Command::Predict(args) => predict(&args).map(|_| ()),
        Command::Config { preset } => {
            let p = Preset::from_name(&preset).map_err(|e| CliError::Input(e.to_string()))?;
            let mut run = RunConfig::preset(p);
            run.output_dir = Some(PathBuf::from(DEFAULT_OUT).join(p.name()));
            let text = serde_json::to_string_pretty(&run).expect("config serializes");
            println!("{text}");
            Ok(())
        }
    }
}

/// The result of a `train` run, kept in memory for callers that inspect it.
pub struct TrainRun {
    pub out_dir: PathBuf,
    pub experiment: Experiment,
    pub outcomes: Vec<FoldOutcome>,
    pub summary: Summary,
}

pub fn load_run_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

/// Resolves the config, trains every fold and writes all artifacts.
pub fn train_run(args: &TrainArgs) -> CliResult<TrainRun> {
    let mut run = load_run_config(&args.config)?;
    if let Some(seed) = args.seed {
        run.seed = seed;
    }
    if let Some(k) = args.folds {
        run.folds = k;
    }
    if let Some(p) = args.parallel {
        run.parallel = p;
    }
    // relative CSV paths are resolved against the config file
    if let DatasetSource::Csv { path, .. } = &mut run.dataset {
        if path.is_relative() {
            if let Some(base) = args.config.parent() {
                *path = base.join(&*path);
            }
        }
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let config_name = args.config.display();
    let exp = Experiment::resolve(&run).map_err(|e| CliError::input(format!("config {config_name}"), e))?;
    let target = match &run.dataset {
        DatasetSource::Csv { target, .. } => Some(target.as_str()),
        DatasetSource::Builtin { .. } => None,
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", out_dir.display())))?;
    info!(
        "training {} folds ({} at a time) into {}",
        exp.folds.len(),
        run.parallel.max(1),
        out_dir.display()
    );

    let outcomes = run_folds(&exp, run.parallel.max(1), |outcome| {
        artifacts::write_fold(&out_dir, &exp, outcome, target).map_err(CliError::output)?;
        info!(
            "fold {}: m* = {} ({}), test {} = {:.4}",
            outcome.fold_id,
            outcome.report.m_star,
            outcome
                .report
                .ranking
                .iter()
                .map(|&i| exp.feature_names[i].as_str())
                .collect::<Vec<_>>()
                .join(", "),
            fir_core::deploy::metric_name(exp.task),
            outcome.metric
        );
        Ok(())
    })?;
    let summary = Summary::new(&exp, &outcomes);
    artifacts::write_summary(&out_dir, &summary).map_err(CliError::output)?;
    info!(
        "{} = {:.4} ± {:.4} over {} folds",
        summary.metric,
        summary.metric_mean,
        summary.metric_std,
        outcomes.len()
    );
    Ok(TrainRun {
        out_dir,
        experiment: exp,
        outcomes,
        summary,
    })
}

/// Trains folds on up to `workers` threads; results come back in fold order.
fn run_folds(
    exp: &Experiment,
    workers: usize,
    on_done: impl Fn(&FoldOutcome) -> CliResult<()> + Sync,
) -> CliResult<Vec<FoldOutcome>> {
    let k = exp.folds.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CliResult<FoldOutcome>>>> = Mutex::new((0..k).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(k) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= k {
                    break;
                }
                let result = exp
                    .run_fold(i)
                    .map_err(|e| CliError::input(format!("fold {i}"), e))
                    .and_then(|o| on_done(&o).map(|_| o));
                let failed = result.is_err();
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(result);
                if failed {
                    next.store(k, Ordering::SeqCst);
                }
            });
        }
    });
    let slots = slots.into_inner().expect("workers joined");
    let mut outcomes = Vec::with_capacity(k);
    // slots left empty belong to folds skipped after a failure
    for r in slots.into_iter().flatten() {
        outcomes.push(r?);
    }
    Ok(outcomes)
}

fn require(dir: &Path, file: &str) -> CliResult<PathBuf> {
    let p = dir.join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Input(format!(
            "missing checkpoint {} (expected a fold directory written by `fir train`)",
            p.display()
        )))
    }
}

pub struct Ranked {
    pub report: FirReport,
    pub table: String,
    pub scores_csv: PathBuf,
}

/// Recomputes `m*` and its scores from the stored selector.
pub fn rank(args: &RankArgs) -> CliResult<Ranked> {
    let dir = &args.model_dir;
    let meta_path = require(dir, MODEL_FILE)?;
    let sel_path = require(dir, SELECTOR_FILE)?;
    let meta = ModelMeta::load(&meta_path).map_err(|e| CliError::input("model", e))?;
    let net = Network::load(&sel_path).map_err(|e| CliError::input("selector", e))?;
    let selector = SelectorModel::new(net, AdamConfig::adam(0.0)).map_err(|e| CliError::input("selector", e))?;
    let report = extract(
        &selector,
        meta.subset_size,
        meta.swap_scope,
        meta.fold_id,
        Some(&meta.feature_names),
    )
    .map_err(|e| CliError::input("selector", e))?;

    let mut table = String::from("rank  index  feature               score  selected\n");
    for (r, i) in report.full_ranking().into_iter().enumerate() {
        table.push_str(&format!(
            "{:>4}  {:>5}  {:<18}  {:>8.4}  {}\n",
            r + 1,
            i,
            report.feature_names[i],
            report.normalized_scores[i],
            if report.in_subset[i] { "yes" } else { "no" }
        ));
    }
    let scores_csv = args.out.clone().unwrap_or_else(|| dir.join("rank_scores.csv"));
    report.write_scores_csv(&scores_csv).map_err(CliError::output)?;
    Ok(Ranked {
        report,
        table,
        scores_csv,
    })
}

/// Writes predictions under the stored `m*` and returns them.
pub fn predict(args: &PredictArgs) -> CliResult<Predictions> {
    let dir = &args.model_dir;
    let meta_path = require(dir, MODEL_FILE)?;
    let op_path = require(dir, OPERATOR_FILE)?;
    let meta = ModelMeta::load(&meta_path).map_err(|e| CliError::input("model", e))?;
    let net = Network::load(&op_path).map_err(|e| CliError::input("operator", e))?;
    let operator =
        OperatorModel::new(net, meta.task.loss(), AdamConfig::nadam(0.0)).map_err(|e| CliError::input("operator", e))?;

    let (_, mut x) = load_feature_matrix(&args.csv, meta.target_column.as_deref())
        .map_err(|e| CliError::input(args.csv.display(), e))?;
    let d = meta.feature_names.len();
    if x.ncols() != d {
        return Err(CliError::Input(format!(
            "{}: expected d = {d} feature columns, got {}",
            args.csv.display(),
            x.ncols()
        )));
    }
    if let Some(st) = &meta.standardizer {
        x = st.transform(&x).map_err(|e| CliError::input(args.csv.display(), e))?;
    }
    let pred = predict_masked(&operator, meta.task, &x, &meta.m_star)
        .map_err(|e| CliError::input(args.csv.display(), e))?;

    let out = args.out.clone().unwrap_or_else(|| dir.join("predictions.csv"));
    write_predictions(&out, &pred, meta.class_names.as_deref())
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", out.display())))?;
    info!("wrote {} predictions to {}", pred.len(), out.display());
    Ok(pred)
}

fn write_predictions(path: &Path, pred: &Predictions, class_names: Option<&[String]>) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match pred {
        Predictions::Regression(values) => {
            w.write_record(["prediction"])?;
            for v in values {
                w.write_record([format!("{v:?}")])?;
            }
        }
        Predictions::Classification {
            probabilities,
            labels,
        } => {
            let k = probabilities.ncols();
            let name = |c: usize| class_names.map_or_else(|| c.to_string(), |n| n[c].clone());
            let mut header = vec!["label".to_string()];
            header.extend((0..k).map(|c| format!("p_{}", name(c))));
            w.write_record(&header)?;
            for (row, &label) in probabilities.rows().into_iter().zip(labels) {
                let mut rec = vec![name(label)];
                rec.extend(row.iter().map(|p| format!("{p:?}")));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
