//! Post-training use of the dual net: the optimal mask `m*`, its feature
//! importance ranking, and prediction with the operator under `m*`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind, Targets};
use crate::error::{FirError, Result};
use crate::mask::{generate_optimal_mask_with, Mask, SwapScope};
use crate::operator::OperatorModel;
use crate::selector::SelectorModel;

pub const REPORT_FORMAT: &str = "fir-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirReport {
    pub format: String,
    pub version: u32,
    pub fold_id: usize,
    pub m_star: Mask,
    /// Importance (negated selector gradient) at `m*`, every feature.
    pub raw_scores: Vec<f64>,
    /// `raw / max|raw|`; all zero when every raw score is zero.
    pub normalized_scores: Vec<f64>,
    /// Selected features by descending score, lower index first on ties.
    pub ranking: Vec<usize>,
    /// `false` marks features outside `m*` whose scores are informational.
    pub in_subset: Vec<bool>,
    pub feature_names: Vec<String>,
    pub restarts: usize,
    pub converged: bool,
}

impl FirReport {
    pub fn d(&self) -> usize {
        self.m_star.len()
    }

    /// Every feature by descending score.
    pub fn full_ranking(&self) -> Vec<usize> {
        crate::mask::ImportanceScores(self.raw_scores.clone()).ranking()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: FirReport = serde_json::from_str(text)?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(FirError::Config(format!(
                "unsupported report {} v{}",
                report.format, report.version
            )));
        }
        let d = report.d();
        if report.raw_scores.len() != d
            || report.normalized_scores.len() != d
            || report.in_subset.len() != d
            || report.feature_names.len() != d
        {
            return Err(FirError::Config(format!("report arrays disagree with d={d}")));
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| FirError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FirError::io(path, e))?;
        Self::from_json(&text)
    }

    /// `feature_index,normalized_score`, one row per feature in index order.
    pub fn write_scores_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature_index", "normalized_score"])?;
        for (i, v) in self.normalized_scores.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:?}")])?;
        }
        w.flush().map_err(|e| FirError::io(path, e))?;
        Ok(())
    }
}

/// Divides by the largest magnitude, leaving an all-zero vector as is.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|v| v / max).collect()
    }
}

/// Runs the optimal-mask search on a trained selector and scores `m*`.
pub fn extract(
    selector: &SelectorModel,
    s: usize,
    scope: SwapScope,
    fold_id: usize,
    feature_names: Option<&[String]>,
) -> Result<FirReport> {
    let d = selector.feature_dim();
    let found = generate_optimal_mask_with(selector, d, s, scope)?;
    let raw = found.scores.0.clone();
    let names = match feature_names {
        Some(n) if n.len() == d => n.to_vec(),
        Some(n) => {
            return Err(FirError::Argument(format!(
                "{} feature names for {d} features",
                n.len()
            )))
        }
        None => crate::data::default_feature_names(d),
    };
    Ok(FirReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        fold_id,
        ranking: found.scores.rank_subset(&found.mask.ones()),
        in_subset: (0..d).map(|i| found.mask.get(i)).collect(),
        normalized_scores: normalize_scores(&raw),
        raw_scores: raw,
        m_star: found.mask,
        feature_names: names,
        restarts: found.restarts,
        converged: found.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Regression(Vec<f64>),
    /// Per-class probabilities (binary tasks get `[1 − p, p]`) and argmax labels.
    Classification {
        probabilities: Array2<f64>,
        labels: Vec<usize>,
    },
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Regression(v) => v.len(),
            Predictions::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Operator predictions for every row of `x` under the fixed mask `m_star`.
pub fn predict_masked(
    operator: &OperatorModel,
    task: TaskKind,
    x: &Array2<f64>,
    m_star: &Mask,
) -> Result<Predictions> {
    let d = operator.feature_dim();
    if x.ncols() != d {
        return Err(FirError::Argument(format!(
            "expected {d} feature columns, got {}",
            x.ncols()
        )));
    }
    if task.output_dim() != operator.net.output_dim() {
        return Err(FirError::Config(format!(
            "operator output width {} does not fit task {task:?}",
            operator.net.output_dim()
        )));
    }
    let out = operator.predict(x, m_star)?;
    Ok(match task {
        TaskKind::Regression => Predictions::Regression(out.column(0).to_vec()),
        TaskKind::Binary => {
            let probabilities =
                Array2::from_shape_fn((out.nrows(), 2), |(i, c)| if c == 1 { out[[i, 0]] } else { 1.0 - out[[i, 0]] });
            let labels = out.column(0).iter().map(|&p| usize::from(p > 0.5)).collect();
            Predictions::Classification { probabilities, labels }
        }
        TaskKind::Multiclass(_) => {
            let labels = out
                .rows()
                .into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                        .0
                })
                .collect();
            Predictions::Classification { probabilities: out, labels }
        }
    })
}

/// Accuracy for classification, mean squared error for regression.
pub fn test_metric(pred: &Predictions, data: &Dataset) -> Result<f64> {
    if pred.len() != data.len() || data.is_empty() {
        return Err(FirError::Argument(format!(
            "{} predictions for {} rows",
            pred.len(),
            data.len()
        )));
    }
    let n = data.len() as f64;
    match (pred, &data.targets) {
        (Predictions::Regression(p), Targets::Real(y)) => {
            Ok(p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
        }
        (Predictions::Classification { labels, .. }, Targets::Labels(y)) => {
            Ok(labels.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / n)
        }
        _ => Err(FirError::Argument("prediction kind does not match targets".into())),
    }
}

/// Name of the summary metric for a task.
pub fn metric_name(task: TaskKind) -> &'static str {
    if task.is_classification() {
        "accuracy"
    } else {
        "mse"
    }
}
