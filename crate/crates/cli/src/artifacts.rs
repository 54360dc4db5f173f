//! On-disk layout of a training run.
//!
//! ```text
//! OUT/summary.json
//! OUT/fold_<i>/{report.json, scores.csv, history.csv, operator.json, selector.json, model.json}
//! ```

use std::path::{Path, PathBuf};

use fir_core::data::Standardizer;
use fir_core::error::{FirError, Result};
use fir_core::experiment::{Experiment, FoldOutcome};
use fir_core::trainer::HistoryRow;
use fir_core::{Mask, SwapScope, TaskKind};
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT: &str = "fir-model";
pub const MODEL_VERSION: u32 = 1;

pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const OPERATOR_FILE: &str = "operator.json";
pub const SELECTOR_FILE: &str = "selector.json";
pub const MODEL_FILE: &str = "model.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// What `rank` and `predict` need besides the two networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub version: u32,
    pub fold_id: usize,
    pub task: TaskKind,
    pub subset_size: usize,
    pub swap_scope: SwapScope,
    pub m_star: Mask,
    pub feature_names: Vec<String>,
    /// Decodes label indices; `None` for regression.
    pub class_names: Option<Vec<String>>,
    /// Column dropped from prediction inputs when present.
    pub target_column: Option<String>,
    /// Applied to prediction inputs before the operator sees them.
    pub standardizer: Option<Standardizer>,
    pub test_metric: f64,
}

impl ModelMeta {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FirError::io(path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)?;
        if meta.format != MODEL_FORMAT || meta.version != MODEL_VERSION {
            return Err(FirError::Config(format!(
                "{}: unsupported model {} v{}",
                path.display(),
                meta.format,
                meta.version
            )));
        }
        Ok(meta)
    }
}

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold_{fold}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| FirError::io(path, e))
}

pub fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if history.is_empty() {
        w.write_record([
            "batch",
            "operator_train_loss",
            "operator_val_loss",
            "m_opt_val_loss",
            "selector_loss",
        ])?;
    }
    for row in history {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| FirError::io(path, e))
}

/// Writes every per-fold artifact into `fold_<i>/`.
pub fn write_fold(
    out: &Path,
    exp: &Experiment,
    outcome: &FoldOutcome,
    target_column: Option<&str>,
) -> Result<PathBuf> {
    let dir = fold_dir(out, outcome.fold_id);
    std::fs::create_dir_all(&dir).map_err(|e| FirError::io(&dir, e))?;
    outcome.report.save(dir.join(REPORT_FILE))?;
    outcome.report.write_scores_csv(dir.join(SCORES_FILE))?;
    write_history(&dir.join(HISTORY_FILE), &outcome.model.history)?;
    outcome.model.operator.net.save(dir.join(OPERATOR_FILE))?;
    outcome.model.selector.net.save(dir.join(SELECTOR_FILE))?;
    let meta = ModelMeta {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        fold_id: outcome.fold_id,
        task: exp.task,
        subset_size: exp.config.subset_size,
        swap_scope: exp.config.swap_scope,
        m_star: outcome.report.m_star.clone(),
        feature_names: exp.feature_names.clone(),
        class_names: exp.class_names.clone(),
        target_column: target_column.map(str::to_string),
        standardizer: exp.folds[outcome.fold_id].standardizer.clone(),
        test_metric: outcome.metric,
    };
    write_json(&dir.join(MODEL_FILE), &meta)?;
    Ok(dir)
}

pub fn write_summary<T: Serialize>(out: &Path, summary: &T) -> Result<()> {
    write_json(&out.join(SUMMARY_FILE), summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_still_has_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_history(&path, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "batch,operator_train_loss,operator_val_loss,m_opt_val_loss,selector_loss\n"
        );
    }

    #[test]
    fn history_rows_serialize_with_the_same_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let row = HistoryRow {
            batch: 8,
            operator_train_loss: 0.5,
            operator_val_loss: 0.25,
            m_opt_val_loss: 0.125,
            selector_loss: 1.0,
        };
        write_history(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("batch,operator_train_loss,operator_val_loss,m_opt_val_loss,selector_loss")
        );
        assert_eq!(lines.next(), Some("8,0.5,0.25,0.125,1.0"));
    }

    #[test]
    fn fold_directories_are_numbered() {
        assert_eq!(fold_dir(Path::new("out"), 3), Path::new("out/fold_3"));
    }
}
