//! Cross-validated runs: built-in synthetic presets, CSV sources, fold
//! construction and per-fold training.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{
    gen_binary_hypersphere, gen_nonlinear_regression, gen_xor4, kfold, load_csv, standardize,
    CsvSchema, Dataset, Standardizer, TaskHint, TaskKind,
};
use crate::deploy::{extract, metric_name, predict_masked, test_metric, FirReport};
use crate::error::{FirError, Result};
use crate::trainer::{train, TrainConfig, TrainedModel, TrainingData};

pub const RUN_SCHEMA_VERSION: u32 = 1;
pub const PRESET_TRAIN_ROWS: usize = 512;
pub const PRESET_TEST_ROWS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Xor4,
    Nonlinreg,
    Binhyper,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Xor4, Preset::Nonlinreg, Preset::Binhyper];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Xor4 => "xor4",
            Preset::Nonlinreg => "nonlinreg",
            Preset::Binhyper => "binhyper",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                FirError::Config(format!(
                    "unknown preset {name:?} (expected xor4, nonlinreg or binhyper)"
                ))
            })
    }

    /// Features that generate the label.
    pub fn relevant_features(self) -> &'static [usize] {
        match self {
            Preset::Xor4 => &[0, 1, 2],
            Preset::Nonlinreg | Preset::Binhyper => &[0, 1, 2, 3],
        }
    }

    pub fn generate(self, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
        match self {
            Preset::Xor4 => gen_xor4(n, rng),
            Preset::Nonlinreg => gen_nonlinear_regression(n, rng),
            Preset::Binhyper => gen_binary_hypersphere(n, rng),
        }
    }

    /// Architecture and search settings for the synthetic benchmarks.
    pub fn train_config(self) -> TrainConfig {
        let operator_hidden = match self {
            Preset::Nonlinreg => vec![100, 50, 25],
            Preset::Xor4 | Preset::Binhyper => vec![60, 30, 20],
        };
        TrainConfig {
            subset_size: 5,
            phase1_batches: 6000,
            candidate_count: 32,
            exploit_fraction: 0.5,
            perturb_count: 2,
            operator_hidden,
            selector_hidden: vec![100, 50, 10],
            ..TrainConfig::default()
        }
    }
}

fn default_standardize() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Builtin {
        name: String,
    },
    Csv {
        path: PathBuf,
        target: String,
        task: TaskHint,
        #[serde(default = "default_standardize")]
        standardize: bool,
    },
}

fn default_folds() -> usize {
    5
}

fn default_parallel() -> usize {
    1
}

/// The JSON document accepted by `fir train --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dataset: DatasetSource,
    /// Keys of [`TrainConfig`] overriding the preset (or generic) defaults.
    #[serde(default)]
    pub trainer: Map<String, Value>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Folds trained concurrently.
    #[serde(default = "default_parallel")]
    pub parallel: usize,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        RunConfig {
            schema_version: RUN_SCHEMA_VERSION,
            dataset: DatasetSource::Builtin {
                name: preset.name().into(),
            },
            trainer: Map::new(),
            folds: default_folds(),
            seed: 0,
            output_dir: None,
            parallel: default_parallel(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema_version != RUN_SCHEMA_VERSION {
            return Err(FirError::Config(format!(
                "unsupported schema_version {} (expected {RUN_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Merges the `trainer` overrides over the source's defaults.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let base = match &self.dataset {
            DatasetSource::Builtin { name } => Preset::from_name(name)?.train_config(),
            DatasetSource::Csv { .. } => TrainConfig::default(),
        };
        let Value::Object(mut merged) = serde_json::to_value(base)? else {
            unreachable!("TrainConfig serializes to an object")
        };
        for (k, v) in &self.trainer {
            if k == "seed" {
                return Err(FirError::Config(
                    "set the seed at the top level, not under trainer".into(),
                ));
            }
            merged.insert(k.clone(), v.clone());
        }
        let mut cfg: TrainConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| FirError::Config(format!("trainer: {e}")))?;
        cfg.seed = self.seed;
        Ok(cfg)
    }
}

/// Train, validation and test rows of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold_id: usize,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub standardizer: Option<Standardizer>,
}

/// Everything needed to train each fold.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: TrainConfig,
    pub task: TaskKind,
    pub feature_names: Vec<String>,
    pub class_names: Option<Vec<String>>,
    pub folds: Vec<FoldData>,
    pub seed: u64,
}

/// Per-fold training seed, decorrelated from the data seed.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 + 1);
    rand::RngCore::next_u64(&mut rng)
}

fn labels_of(ds: &Dataset) -> Option<Vec<usize>> {
    ds.targets.labels().map(<[usize]>::to_vec)
}

impl Experiment {
    pub fn resolve(run: &RunConfig) -> Result<Self> {
        if run.folds < 2 {
            return Err(FirError::Config(format!(
                "need at least 2 folds, got {}",
                run.folds
            )));
        }
        let config = run.train_config()?;
        let mut folds = Vec::with_capacity(run.folds);
        let reference = match &run.dataset {
            DatasetSource::Builtin { name } => {
                // Shared test set; each fold holds out one slice of the
                // training rows for early stopping.
                let preset = Preset::from_name(name)?;
                let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
                let train = preset.generate(PRESET_TRAIN_ROWS, &mut rng)?;
                let test = preset.generate(PRESET_TEST_ROWS, &mut rng)?;
                let labels = labels_of(&train);
                let plan = kfold(train.len(), run.folds, labels.as_deref(), run.seed)?;
                for i in 0..run.folds {
                    folds.push(FoldData {
                        fold_id: i,
                        train: train.subset(&plan.train_rows(i)),
                        validation: train.subset(&plan.test_rows(i)),
                        test: test.clone(),
                        standardizer: None,
                    });
                }
                train
            }
            DatasetSource::Csv {
                path,
                target,
                task,
                standardize: scale,
            } => {
                let all = load_csv(
                    path,
                    &CsvSchema {
                        target: target.clone(),
                        task: *task,
                    },
                )?;
                let labels = labels_of(&all);
                let plan = kfold(all.len(), run.folds, labels.as_deref(), run.seed)?;
                for i in 0..run.folds {
                    let rest = plan.train_rows(i);
                    let rest_ds = all.subset(&rest);
                    let inner_labels = labels_of(&rest_ds);
                    let inner = kfold(rest.len(), 5, inner_labels.as_deref(), fold_seed(run.seed, i))?;
                    let train = rest_ds.subset(&inner.train_rows(0));
                    let validation = rest_ds.subset(&inner.test_rows(0));
                    let test = all.subset(&plan.test_rows(i));
                    let fold = if *scale {
                        let (train, mut others, st) = standardize(&train, &[&validation, &test])?;
                        let test = others.pop().expect("two datasets");
                        let validation = others.pop().expect("two datasets");
                        FoldData {
                            fold_id: i,
                            train,
                            validation,
                            test,
                            standardizer: Some(st),
                        }
                    } else {
                        FoldData {
                            fold_id: i,
                            train,
                            validation,
                            test,
                            standardizer: None,
                        }
                    };
                    folds.push(fold);
                }
                all
            }
        };
        config.validate(reference.dim())?;
        Ok(Experiment {
            config,
            task: reference.task,
            feature_names: reference.feature_names.clone(),
            class_names: reference.class_names.clone(),
            folds,
            seed: run.seed,
        })
    }

    pub fn fold_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            seed: fold_seed(self.seed, fold),
            ..self.config.clone()
        }
    }

    pub fn run_fold(&self, fold: usize) -> Result<FoldOutcome> {
        let data = &self.folds[fold];
        let config = self.fold_config(fold);
        let model = train(
            &config,
            TrainingData {
                train: &data.train,
                validation: &data.validation,
            },
        )?;
        let report = extract(
            &model.selector,
            config.subset_size,
            config.swap_scope,
            fold,
            Some(&self.feature_names),
        )?;
        let pred = predict_masked(&model.operator, self.task, &data.test.features, &report.m_star)?;
        let metric = test_metric(&pred, &data.test)?;
        Ok(FoldOutcome {
            fold_id: fold,
            model,
            report,
            metric,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold_id: usize,
    pub model: TrainedModel,
    pub report: FirReport,
    /// Test accuracy or MSE under `m*`.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub metric_mean: f64,
    /// Sample standard deviation across folds.
    pub metric_std: f64,
    pub fold_metrics: Vec<f64>,
    /// Folds whose `m*` contains each feature.
    pub selected_feature_counts: Vec<usize>,
    pub m_stars: Vec<String>,
    pub feature_names: Vec<String>,
    pub subset_size: usize,
    pub seed: u64,
}

impl Summary {
    pub fn new(exp: &Experiment, outcomes: &[FoldOutcome]) -> Self {
        let metrics: Vec<f64> = outcomes.iter().map(|o| o.metric).collect();
        let n = metrics.len() as f64;
        let mean = metrics.iter().sum::<f64>() / n;
        let std = if metrics.len() > 1 {
            (metrics.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let d = exp.feature_names.len();
        let mut counts = vec![0; d];
        for o in outcomes {
            for i in o.report.m_star.ones() {
                counts[i] += 1;
            }
        }
        Summary {
            metric: metric_name(exp.task).into(),
            metric_mean: mean,
            metric_std: std,
            fold_metrics: metrics,
            selected_feature_counts: counts,
            m_stars: outcomes.iter().map(|o| o.report.m_star.to_bitstring()).collect(),
            feature_names: exp.feature_names.clone(),
            subset_size: exp.config.subset_size,
            seed: exp.seed,
        }
    }
}
