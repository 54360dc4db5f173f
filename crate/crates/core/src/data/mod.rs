//! Datasets: synthetic generators, CSV ingestion, standardization and folds.

mod csv_io;
mod folds;
mod synthetic;

pub use csv_io::{load_csv, load_feature_matrix, write_csv, CsvSchema, TaskHint};
pub use folds::{kfold, FoldPlan};
pub use synthetic::{
    gen_binary_hypersphere, gen_nonlinear_regression, gen_xor4, nonlinear_regression_target,
    xor4_class_of_corner, SHELL_MAX, SHELL_MIN,
};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{FirError, Result};
use crate::nn::{LossKind, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "classes", rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass(usize),
}

impl TaskKind {
    pub fn loss(self) -> LossKind {
        match self {
            TaskKind::Regression => LossKind::Mse,
            TaskKind::Binary => LossKind::BinaryCrossEntropy,
            TaskKind::Multiclass(_) => LossKind::CategoricalCrossEntropy,
        }
    }

    /// Width of the operator's output layer.
    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Regression | TaskKind::Binary => 1,
            TaskKind::Multiclass(k) => k,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    pub fn class_count(self) -> Option<usize> {
        match self {
            TaskKind::Regression => None,
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass(k) => Some(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    Labels(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(v) => v.len(),
            Targets::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Targets::Labels(l) => Some(l),
            Targets::Real(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Real(v) => Targets::Real(rows.iter().map(|&i| v[i]).collect()),
            Targets::Labels(v) => Targets::Labels(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Supervision laid out for the network loss, possibly tiled over masks.
#[derive(Debug, Clone)]
pub enum OwnedTarget {
    Values(Array2<f64>),
    Classes(Vec<usize>),
}

impl OwnedTarget {
    pub fn view(&self) -> Target<'_> {
        match self {
            OwnedTarget::Values(v) => Target::Values(v.view()),
            OwnedTarget::Classes(c) => Target::Classes(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Targets,
    pub task: TaskKind,
    pub feature_names: Vec<String>,
    /// Original label strings, index = encoded class.
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        targets: Targets,
        task: TaskKind,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            features,
            targets,
            task,
            feature_names,
            class_names: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        if n == 0 {
            return Err(FirError::Data("dataset has no rows".into()));
        }
        if self.targets.len() != n {
            return Err(FirError::Data(format!(
                "{} feature rows but {} targets",
                n,
                self.targets.len()
            )));
        }
        if self.feature_names.len() != self.features.ncols() {
            return Err(FirError::Data(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.features.ncols()
            )));
        }
        if let Some(bad) = self.features.iter().position(|v| !v.is_finite()) {
            let d = self.features.ncols();
            return Err(FirError::Data(format!(
                "non-finite feature at row {}, column {}",
                bad / d,
                bad % d
            )));
        }
        match (&self.targets, self.task) {
            (Targets::Real(v), TaskKind::Regression) => {
                if v.iter().any(|t| !t.is_finite()) {
                    return Err(FirError::Data("non-finite regression target".into()));
                }
            }
            (Targets::Labels(l), task) if task.is_classification() => {
                let k = task.class_count().expect("classification");
                if let Some(bad) = l.iter().find(|&&c| c >= k) {
                    return Err(FirError::Data(format!("label {bad} out of range for {k} classes")));
                }
            }
            _ => {
                return Err(FirError::Data(format!(
                    "targets do not match task {:?}",
                    self.task
                )))
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(rows),
            task: self.task,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Targets for `rows`, repeated `reps` times back to back.
    pub fn tiled_targets(&self, rows: &[usize], reps: usize) -> OwnedTarget {
        let n = rows.len();
        match (&self.targets, self.task) {
            (Targets::Real(v), _) => OwnedTarget::Values(Array2::from_shape_fn((n * reps, 1), |(i, _)| {
                v[rows[i % n]]
            })),
            (Targets::Labels(l), TaskKind::Binary) => {
                OwnedTarget::Values(Array2::from_shape_fn((n * reps, 1), |(i, _)| {
                    l[rows[i % n]] as f64
                }))
            }
            (Targets::Labels(l), _) => {
                OwnedTarget::Classes((0..n * reps).map(|i| l[rows[i % n]]).collect())
            }
        }
    }
}

/// Per-feature affine transform learned from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; constant columns get `std = 1`.
    pub fn fit(features: &Array2<f64>) -> Self {
        let n = features.nrows() as f64;
        let mean: Array1<f64> = features.sum_axis(Axis(0)) / n;
        let std = features
            .columns()
            .into_iter()
            .zip(mean.iter())
            .map(|(col, &mu)| {
                let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 * mu.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.mean.len() {
            return Err(FirError::Data(format!(
                "standardizer fitted on {} columns, got {}",
                self.mean.len(),
                features.ncols()
            )));
        }
        let mut out = features.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        Ok(out)
    }
}

/// Standardizes `train` with its own statistics and `others` with the same ones.
pub fn standardize(
    train: &Dataset,
    others: &[&Dataset],
) -> Result<(Dataset, Vec<Dataset>, Standardizer)> {
    if train.is_empty() {
        return Err(FirError::Data("cannot standardize an empty dataset".into()));
    }
    let st = Standardizer::fit(&train.features);
    let mut t = train.clone();
    t.features = st.transform(&train.features)?;
    let rest = others
        .iter()
        .map(|o| {
            let mut c = (*o).clone();
            c.features = st.transform(&o.features)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((t, rest, st))
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn reg(features: Array2<f64>) -> Dataset {
        let n = features.nrows();
        let d = features.ncols();
        Dataset::new(
            features,
            Targets::Real(vec![0.0; n]),
            TaskKind::Regression,
            default_feature_names(d),
        )
        .unwrap()
    }

    #[test]
    fn standardize_train_moments() {
        let ds = reg(array![[1.0, 10.0, 3.0], [2.0, 20.0, 3.0], [4.0, 60.0, 3.0], [9.0, 0.0, 3.0]]);
        let (t, _, st) = standardize(&ds, &[]).unwrap();
        for (j, col) in t.features.columns().into_iter().enumerate() {
            let mean = col.sum() / 4.0;
            assert!(mean.abs() < 1e-9);
            if j < 2 {
                let sd = (col.iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
                assert!((sd - 1.0).abs() < 1e-9);
            }
        }
        // constant column: zeros, std recorded as 1
        assert!(t.features.column(2).iter().all(|&v| v == 0.0));
        assert_eq!(st.std[2], 1.0);
    }

    #[test]
    fn standardize_is_identity_on_standardized_data() {
        let ds = reg(array![[-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [1.0, 1.0]]);
        let (t, _, _) = standardize(&ds, &[]).unwrap();
        for (a, b) in t.features.iter().zip(ds.features.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn test_set_uses_train_statistics() {
        let train = reg(array![[0.0], [2.0]]);
        let test = reg(array![[5.0], [1.0]]);
        let (_, others, st) = standardize(&train, &[&test]).unwrap();
        assert_eq!(st.mean, vec![1.0]);
        assert_eq!(st.std, vec![1.0]);
        assert_eq!(others[0].features, array![[4.0], [0.0]]);
    }

    #[test]
    fn tiled_targets_repeat_rows() {
        let ds = Dataset::new(
            array![[0.0], [1.0], [2.0]],
            Targets::Labels(vec![1, 0, 1]),
            TaskKind::Binary,
            default_feature_names(1),
        )
        .unwrap();
        match ds.tiled_targets(&[2, 1], 2) {
            OwnedTarget::Values(v) => assert_eq!(v.column(0).to_vec(), vec![1.0, 0.0, 1.0, 0.0]),
            _ => panic!("binary targets are real-valued"),
        }
    }

    #[test]
    fn validation_catches_bad_labels() {
        let r = Dataset::new(
            array![[0.0], [1.0]],
            Targets::Labels(vec![0, 3]),
            TaskKind::Multiclass(3),
            default_feature_names(1),
        );
        assert!(r.is_err());
    }
}
