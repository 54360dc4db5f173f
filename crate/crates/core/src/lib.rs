//! Populationwise feature importance ranking with a dual net.
//!
//! An operator net learns the supervised task on masked inputs while a
//! selector net learns to predict the operator's loss for any feature
//! subset. The selector's input gradient drives a local search for the best
//! subset of `s` features and yields a per-feature importance score.

pub mod data;
pub mod deploy;
pub mod error;
pub mod experiment;
pub mod mask;
pub mod nn;
pub mod operator;
pub mod par;
pub mod selector;
pub mod trainer;

pub use data::{Dataset, TaskKind, Targets};
pub use deploy::{extract, predict_masked, FirReport, Predictions};
pub use error::{FirError, Result};
pub use experiment::{Experiment, Preset, RunConfig, Summary};
pub use mask::{generate_optimal_mask, ImportanceScores, Mask, SubsetScorer, SwapScope};
pub use nn::{Activation, AdamConfig, LossKind, Network};
pub use operator::OperatorModel;
pub use par::Execution;
pub use selector::{SelectorExample, SelectorModel};
pub use trainer::{train, TrainConfig, TrainedModel, TrainerState};
