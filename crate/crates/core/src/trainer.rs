//! Alternate training of the operator and selector nets.
//!
//! Phase I trains the operator on fresh random mask sets (and, by default,
//! warms the selector up on the resulting per-mask losses). Phase II repeats
//! a fixed cadence: `selector_update_period` operator batches on the current
//! candidate set, one weighted selector update on per-mask losses measured on
//! an evaluation batch, then a new candidate set built from the selector's
//! optimal mask, its perturbations, the previous best mask and random masks.
//! Early stopping watches only the validation loss of the optimal mask.

use std::collections::HashSet;

use log::{debug, info};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::error::{FirError, Result};
use crate::mask::{generate_optimal_mask_with, perturb, random_mask, Mask, SwapScope};
use crate::nn::{Activation, AdamConfig, Network};
use crate::operator::OperatorModel;
use crate::par::Execution;
use crate::selector::{example_weight, SelectorExample, SelectorModel};

/// Random draws attempted when replacing a duplicate candidate.
const DEDUP_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Features to select (`s`).
    pub subset_size: usize,
    /// Operator batches in Phase I (`E1`).
    pub phase1_batches: usize,
    /// Candidate masks per batch (`|M'|`).
    pub candidate_count: usize,
    /// Share of the candidate set filled by exploitation (`f`).
    pub exploit_fraction: f64,
    /// Pairs swapped by each perturbation (`s_p`).
    pub perturb_count: usize,
    pub batch_size: usize,
    /// Operator batches per selector update in Phase II.
    pub selector_update_period: usize,
    pub max_phase2_batches: usize,
    /// Consecutive non-improving optimal-mask validations before stopping.
    pub patience: usize,
    pub operator_hidden: Vec<usize>,
    pub selector_hidden: Vec<usize>,
    pub operator_activation: Activation,
    pub operator_lr: f64,
    pub selector_lr: f64,
    /// Also fit the selector on Phase I batch losses.
    pub selector_warmup: bool,
    /// Exchanges tried by the final swap test of the mask search.
    pub swap_scope: SwapScope,
    /// Measure selector targets and `m_best` on the full training set
    /// instead of one evaluation batch.
    pub full_set_eval: bool,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            subset_size: 5,
            phase1_batches: 6000,
            candidate_count: 32,
            exploit_fraction: 0.5,
            perturb_count: 2,
            batch_size: 32,
            selector_update_period: 8,
            max_phase2_batches: 20_000,
            patience: 50,
            operator_hidden: vec![60, 30, 20],
            selector_hidden: vec![100, 50, 10],
            operator_activation: Activation::Sigmoid,
            operator_lr: 1e-3,
            selector_lr: 1e-3,
            selector_warmup: true,
            swap_scope: SwapScope::default(),
            full_set_eval: false,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    /// Candidate slots filled from the selector: `m_best`, `m_opt` and perturbations.
    pub fn exploit_slots(&self) -> usize {
        (self.exploit_fraction * self.candidate_count as f64).round() as usize
    }

    pub fn explore_slots(&self) -> usize {
        self.candidate_count - self.exploit_slots()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let fail = |msg: String| Err(FirError::Config(msg));
        if self.subset_size == 0 || self.subset_size >= d {
            return fail(format!(
                "subset size must satisfy 0 < s < d, got s={}, d={d}",
                self.subset_size
            ));
        }
        if !(self.exploit_fraction > 0.0 && self.exploit_fraction < 1.0) {
            return fail(format!(
                "exploit fraction must lie in (0, 1), got {}",
                self.exploit_fraction
            ));
        }
        if self.exploit_slots() < 2 || self.exploit_slots() > self.candidate_count {
            return fail(format!(
                "f·|M'| = {} leaves no room for m_best and m_opt",
                self.exploit_slots()
            ));
        }
        if self.perturb_count >= self.subset_size || self.perturb_count > d - self.subset_size {
            return fail(format!(
                "perturbation size {} must be below s={} and at most d-s={}",
                self.perturb_count,
                self.subset_size,
                d - self.subset_size
            ));
        }
        if self.batch_size == 0 || self.selector_update_period == 0 {
            return fail("batch size and selector update period must be positive".into());
        }
        if !(self.operator_lr >= 0.0 && self.selector_lr >= 0.0) {
            return fail("learning rates must be non-negative".into());
        }
        Ok(())
    }

    fn output_activation(task: TaskKind) -> Activation {
        match task {
            TaskKind::Regression => Activation::Linear,
            TaskKind::Binary => Activation::Sigmoid,
            TaskKind::Multiclass(_) => Activation::Softmax,
        }
    }

    pub fn build_operator<R: Rng + ?Sized>(
        &self,
        d: usize,
        task: TaskKind,
        rng: &mut R,
    ) -> Result<OperatorModel> {
        let mut dims = vec![2 * d];
        dims.extend(&self.operator_hidden);
        dims.push(task.output_dim());
        let net = Network::mlp(
            &dims,
            self.operator_activation,
            Self::output_activation(task),
            rng,
        )?;
        OperatorModel::new(net, task.loss(), AdamConfig::nadam(self.operator_lr))
    }

    pub fn build_selector<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<SelectorModel> {
        let mut dims = vec![d];
        dims.extend(&self.selector_hidden);
        dims.push(1);
        let net = Network::mlp(&dims, Activation::Sigmoid, Activation::Linear, rng)?;
        SelectorModel::new(net, AdamConfig::adam(self.selector_lr))
    }
}

/// Training rows for the operator and held-out rows for early stopping.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
}

impl TrainingData<'_> {
    fn check(&self, config: &TrainConfig) -> Result<usize> {
        let d = self.train.dim();
        if self.validation.dim() != d || self.validation.task != self.train.task {
            return Err(FirError::Config(
                "training and validation sets disagree on features or task".into(),
            ));
        }
        if self.train.is_empty() || self.validation.is_empty() {
            return Err(FirError::Config("training and validation sets must be non-empty".into()));
        }
        config.validate(d)?;
        Ok(d)
    }
}

/// One row of the Phase II learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// Total operator batches so far, Phase I included.
    pub batch: usize,
    /// Mean operator loss over this step's training batches.
    pub operator_train_loss: f64,
    /// Operator loss over all candidates on the validation set.
    pub operator_val_loss: f64,
    /// Operator loss of the optimal mask on the validation set.
    pub m_opt_val_loss: f64,
    /// Weighted selector loss before its update.
    pub selector_loss: f64,
}

/// Weights and mask captured at the best optimal-mask validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub operator: Network,
    pub selector: Network,
    pub m_opt: Mask,
    pub batch: usize,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub operator: OperatorModel,
    pub selector: SelectorModel,
    pub m_best: Mask,
    /// The last random candidate set.
    pub candidates: Vec<Mask>,
    pub final_train_loss: Option<f64>,
    pub initial_train_loss: Option<f64>,
}

fn draw_batch<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    if batch >= n {
        (0..n).collect()
    } else {
        sample(rng, n, batch).into_vec()
    }
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

/// Replaces repeated masks with fresh random ones so `|M'|` stays fixed.
fn dedup_candidates<R: Rng + ?Sized>(
    masks: Vec<Mask>,
    d: usize,
    s: usize,
    rng: &mut R,
) -> Result<Vec<Mask>> {
    let mut seen = HashSet::with_capacity(masks.len());
    let mut out = Vec::with_capacity(masks.len());
    for m in masks {
        let mut m = m;
        if seen.contains(&m) {
            for _ in 0..DEDUP_ATTEMPTS {
                let r = random_mask(d, s, rng)?;
                if !seen.contains(&r) {
                    m = r;
                    break;
                }
            }
        }
        seen.insert(m.clone());
        out.push(m);
    }
    Ok(out)
}

fn random_candidates<R: Rng + ?Sized>(count: usize, d: usize, s: usize, rng: &mut R) -> Result<Vec<Mask>> {
    let masks = (0..count)
        .map(|_| random_mask(d, s, rng))
        .collect::<Result<Vec<_>>>()?;
    dedup_candidates(masks, d, s, rng)
}

/// `m_best`, `m_opt`, `f·|M'| − 2` perturbations of `m_opt`, then
/// `(1 − f)·|M'|` random masks. Duplicates are replaced by random masks.
pub fn build_candidates<R: Rng + ?Sized>(
    m_best: &Mask,
    m_opt: &Mask,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<Mask>> {
    let d = m_opt.len();
    let s = config.subset_size;
    let mut masks = Vec::with_capacity(config.candidate_count);
    masks.push(m_best.clone());
    masks.push(m_opt.clone());
    for _ in 0..config.exploit_slots() - 2 {
        masks.push(perturb(m_opt, config.perturb_count, rng)?);
    }
    for _ in 0..config.explore_slots() {
        masks.push(random_mask(d, s, rng)?);
    }
    dedup_candidates(masks, d, s, rng)
}

/// Operator exploration on random masks.
pub fn phase1<R: Rng + ?Sized>(
    config: &TrainConfig,
    data: TrainingData<'_>,
    rng: &mut R,
) -> Result<Phase1Outcome> {
    let d = data.check(config)?;
    let s = config.subset_size;
    let mut operator = config.build_operator(d, data.train.task, rng)?;
    let mut selector = config.build_selector(d, rng)?;
    let mut candidates = random_candidates(config.candidate_count, d, s, rng)?;
    let mut initial = None;
    let mut last = None;
    for e in 0..config.phase1_batches {
        if e > 0 {
            candidates = random_candidates(config.candidate_count, d, s, rng)?;
        }
        let rows = draw_batch(data.train.len(), config.batch_size, rng);
        let step = operator.train_step(data.train, &rows, &candidates)?;
        initial.get_or_insert(step.mean);
        last = Some(step.mean);
        if config.selector_warmup {
            let examples: Vec<SelectorExample> = candidates
                .iter()
                .zip(&step.per_mask)
                .map(|(m, &l)| SelectorExample {
                    mask: m.clone(),
                    target_loss: l,
                    weight: 1.0,
                })
                .collect();
            selector.train_step(&examples)?;
        }
        if (e + 1) % 1000 == 0 {
            debug!("phase I batch {}: operator loss {:.5}", e + 1, step.mean);
        }
    }
    let losses = operator.per_mask_losses(data.train, &candidates, config.execution)?;
    let m_best = candidates[argmin(&losses)].clone();
    info!(
        "phase I done after {} batches, m_best {m_best} (train loss {:.5})",
        config.phase1_batches,
        losses[argmin(&losses)]
    );
    Ok(Phase1Outcome {
        operator,
        selector,
        m_best,
        candidates,
        final_train_loss: last,
        initial_train_loss: initial,
    })
}

/// Everything the alternate algorithm mutates.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub operator: OperatorModel,
    pub selector: SelectorModel,
    pub m_best: Mask,
    pub m_opt: Mask,
    pub candidates: Vec<Mask>,
    pub batch_counter: usize,
    pub phase2_batches: usize,
    pub best_val_loss: f64,
    pub best_checkpoint: Option<Checkpoint>,
    pub stale_steps: usize,
    pub stop_flag: bool,
    pub history: Vec<HistoryRow>,
    /// Selector targets of the most recent step, aligned with the candidates it used.
    pub last_targets: Vec<f64>,
    pub last_candidates: Vec<Mask>,
}

impl TrainerState {
    /// Starts Phase II from a Phase I outcome: generates the first optimal
    /// mask and candidate set.
    pub fn from_phase1<R: Rng + ?Sized>(
        p1: Phase1Outcome,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = p1.m_best.len();
        let m_opt =
            generate_optimal_mask_with(&p1.selector, d, config.subset_size, config.swap_scope)?.mask;
        let candidates = build_candidates(&p1.m_best, &m_opt, config, rng)?;
        Ok(TrainerState {
            operator: p1.operator,
            selector: p1.selector,
            m_best: p1.m_best,
            m_opt,
            candidates,
            batch_counter: config.phase1_batches,
            phase2_batches: 0,
            best_val_loss: f64::INFINITY,
            best_checkpoint: None,
            stale_steps: 0,
            stop_flag: false,
            history: Vec::new(),
            last_targets: Vec::new(),
            last_candidates: Vec::new(),
        })
    }

    /// One Phase II step. Sets `stop_flag` when early stopping triggers or
    /// the batch budget runs out.
    pub fn phase2_step<R: Rng + ?Sized>(
        &mut self,
        config: &TrainConfig,
        data: TrainingData<'_>,
        rng: &mut R,
    ) -> Result<()> {
        let train = data.train;
        let mut train_loss = 0.0;
        for _ in 0..config.selector_update_period {
            let rows = draw_batch(train.len(), config.batch_size, rng);
            train_loss += self.operator.train_step(train, &rows, &self.candidates)?.mean;
            self.batch_counter += 1;
            self.phase2_batches += 1;
        }
        train_loss /= config.selector_update_period as f64;

        let eval_rows: Vec<usize> = if config.full_set_eval {
            (0..train.len()).collect()
        } else {
            draw_batch(train.len(), config.batch_size, rng)
        };
        let targets =
            self.operator
                .per_mask_losses_on(train, &eval_rows, &self.candidates, config.execution)?;
        let examples: Vec<SelectorExample> = self
            .candidates
            .iter()
            .zip(&targets)
            .map(|(m, &t)| SelectorExample {
                mask: m.clone(),
                target_loss: t,
                weight: example_weight(m, Some(&self.m_best), Some(&self.m_opt)),
            })
            .collect();
        let selector_loss = self.selector.train_step(&examples)?;
        self.m_best = self.candidates[argmin(&targets)].clone();

        let m_opt_val = self.operator.per_mask_loss(data.validation, &self.m_opt)?;
        let operator_val = self.operator.operator_loss(data.validation, &self.candidates)?;
        if !m_opt_val.is_finite() || !operator_val.is_finite() {
            return Err(FirError::NonFiniteLoss(format!(
                "validation loss at batch {}",
                self.batch_counter
            )));
        }
        self.history.push(HistoryRow {
            batch: self.batch_counter,
            operator_train_loss: train_loss,
            operator_val_loss: operator_val,
            m_opt_val_loss: m_opt_val,
            selector_loss,
        });
        debug!(
            "batch {}: train {:.5} val {:.5} m_opt {} val {:.5} selector {:.5}",
            self.batch_counter, train_loss, operator_val, self.m_opt, m_opt_val, selector_loss
        );

        if m_opt_val < self.best_val_loss {
            self.best_val_loss = m_opt_val;
            self.stale_steps = 0;
            self.best_checkpoint = Some(Checkpoint {
                operator: self.operator.net.clone(),
                selector: self.selector.net.clone(),
                m_opt: self.m_opt.clone(),
                batch: self.batch_counter,
                val_loss: m_opt_val,
            });
        } else {
            self.stale_steps += 1;
            if self.stale_steps >= config.patience {
                self.stop_flag = true;
            }
        }
        if self.phase2_batches + config.selector_update_period > config.max_phase2_batches {
            self.stop_flag = true;
        }

        self.last_targets = targets;
        self.last_candidates = std::mem::take(&mut self.candidates);
        let d = self.m_best.len();
        self.m_opt =
            generate_optimal_mask_with(&self.selector, d, config.subset_size, config.swap_scope)?
                .mask;
        self.candidates = build_candidates(&self.m_best, &self.m_opt, config, rng)?;
        Ok(())
    }

    /// Restores the best checkpoint, if any step produced one.
    pub fn restore_best(&mut self) {
        if let Some(ck) = &self.best_checkpoint {
            self.operator.net = ck.operator.clone();
            self.selector.net = ck.selector.clone();
        }
    }
}

/// The result of [`train`]: nets restored to the best validation point.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub operator: OperatorModel,
    pub selector: SelectorModel,
    pub history: Vec<HistoryRow>,
    pub best_checkpoint: Option<Checkpoint>,
    pub phase1_batches: usize,
    pub total_batches: usize,
    pub phase1_initial_loss: Option<f64>,
    pub phase1_final_loss: Option<f64>,
}

/// Phase I followed by Phase II until early stopping or the batch budget.
pub fn train(config: &TrainConfig, data: TrainingData<'_>) -> Result<TrainedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p1 = phase1(config, data, &mut rng)?;
    let (initial, final_p1) = (p1.initial_train_loss, p1.final_train_loss);
    let mut state = TrainerState::from_phase1(p1, config, &mut rng)?;
    while !state.stop_flag
        && state.phase2_batches + config.selector_update_period <= config.max_phase2_batches
    {
        state.phase2_step(config, data, &mut rng)?;
    }
    state.restore_best();
    if let Some(ck) = &state.best_checkpoint {
        info!(
            "training stopped after {} batches; best m_opt {} at batch {} (val {:.5})",
            state.batch_counter, ck.m_opt, ck.batch, ck.val_loss
        );
    }
    Ok(TrainedModel {
        operator: state.operator,
        selector: state.selector,
        history: state.history,
        best_checkpoint: state.best_checkpoint,
        phase1_batches: config.phase1_batches,
        total_batches: state.batch_counter,
        phase1_initial_loss: initial,
        phase1_final_loss: final_p1,
    })
}
