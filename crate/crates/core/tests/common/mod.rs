//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use fir_core::data::{default_feature_names, Dataset, Targets, TaskKind};
use fir_core::mask::{generate_optimal_mask, random_mask, Mask};
use fir_core::operator::OperatorModel;
use fir_core::nn::{loss_and_gradients, Activation, AdamConfig, Layer, LossKind, Network, Target};
use fir_core::selector::{SelectorExample, SelectorModel};
use fir_core::SubsetScorer;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Relative error with a small floor so exact zeros compare cleanly.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// A randomized network, batch and target for gradient checks.
pub struct GradCase {
    pub net: Network,
    pub batch: Array2<f64>,
    pub values: Array2<f64>,
    pub classes: Vec<usize>,
    pub loss: LossKind,
}

impl GradCase {
    pub fn target(&self) -> Target<'_> {
        match self.loss {
            LossKind::CategoricalCrossEntropy => Target::Classes(&self.classes),
            _ => Target::Values(self.values.view()),
        }
    }

    fn loss_of(&self, net: &Network, batch: &Array2<f64>) -> f64 {
        let out = net.predict(batch).unwrap();
        self.loss.mean_loss(&out, self.target()).unwrap()
    }

    /// Largest relative error over every parameter and input coordinate.
    pub fn max_rel_error(&self) -> f64 {
        let g = loss_and_gradients(&self.net, &self.batch, self.target(), self.loss).unwrap();
        let mut worst = 0.0f64;
        let layers = self.net.layers().to_vec();
        for k in 0..layers.len() {
            let (rows, cols) = layers[k].weights.dim();
            for i in 0..rows {
                for j in 0..cols {
                    let numeric = self.central(|l, h| l[k].weights[[i, j]] += h);
                    worst = worst.max(rel_err(g.params.layers[k].weights[[i, j]], numeric));
                }
                let numeric = self.central(|l, h| l[k].bias[i] += h);
                worst = worst.max(rel_err(g.params.layers[k].bias[i], numeric));
            }
        }
        for (idx, &analytic) in g.inputs.indexed_iter() {
            let mut plus = self.batch.clone();
            plus[idx] += FD_STEP;
            let mut minus = self.batch.clone();
            minus[idx] -= FD_STEP;
            let numeric =
                (self.loss_of(&self.net, &plus) - self.loss_of(&self.net, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic, numeric));
        }
        worst
    }

    fn central(&self, nudge: impl Fn(&mut Vec<Layer>, f64)) -> f64 {
        let mut plus = self.net.layers().to_vec();
        nudge(&mut plus, FD_STEP);
        let mut minus = self.net.layers().to_vec();
        nudge(&mut minus, -FD_STEP);
        let lp = self.loss_of(&Network::new(plus).unwrap(), &self.batch);
        let lm = self.loss_of(&Network::new(minus).unwrap(), &self.batch);
        (lp - lm) / (2.0 * FD_STEP)
    }
}

/// Every (hidden activation, output activation, loss) triple the library accepts.
pub fn activation_loss_combinations() -> Vec<(Activation, Activation, LossKind)> {
    let hidden = [Activation::Sigmoid, Activation::Relu, Activation::Linear];
    let heads = [
        (Activation::Linear, LossKind::Mse),
        (Activation::Sigmoid, LossKind::Mse),
        (Activation::Relu, LossKind::Mse),
        (Activation::Softmax, LossKind::Mse),
        (Activation::Sigmoid, LossKind::BinaryCrossEntropy),
        (Activation::Softmax, LossKind::CategoricalCrossEntropy),
    ];
    hidden
        .iter()
        .flat_map(|&h| heads.iter().map(move |&(o, l)| (h, o, l)))
        .collect()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a net of depth 1..=4 and a batch, redrawing while any ReLU
/// pre-activation sits within `1e-4` of its kink.
pub fn random_grad_case<R: Rng + ?Sized>(
    rng: &mut R,
    hidden: Activation,
    output: Activation,
    loss: LossKind,
) -> GradCase {
    loop {
        let depth = rng.random_range(1..=4);
        let min_out = if output == Activation::Softmax { 2 } else { 1 };
        let mut dims = vec![rng.random_range(1..=5)];
        for _ in 1..depth {
            dims.push(rng.random_range(1..=6));
        }
        dims.push(rng.random_range(min_out..=4));
        let net = Network::mlp(&dims, hidden, output, rng).unwrap();
        // nonzero biases exercise the bias gradient
        let layers: Vec<Layer> = net
            .layers()
            .iter()
            .map(|l| Layer {
                bias: Array1::from_shape_fn(l.bias.len(), |_| 0.3 * normal(rng)),
                ..l.clone()
            })
            .collect();
        let net = Network::new(layers).unwrap();
        let n = rng.random_range(1..=5);
        let batch = Array2::from_shape_fn((n, dims[0]), |_| normal(rng));
        let k = *dims.last().unwrap();
        let values = match loss {
            LossKind::BinaryCrossEntropy => {
                Array2::from_shape_fn((n, k), |_| f64::from(rng.random_bool(0.5) as u8))
            }
            _ => Array2::from_shape_fn((n, k), |_| normal(rng)),
        };
        let classes = (0..n).map(|_| rng.random_range(0..k)).collect();
        let (_, cache) = net.forward(&batch).unwrap();
        let near_kink = net.layers().iter().enumerate().any(|(l, layer)| {
            layer.activation == Activation::Relu
                && cache.pre_activation(l).iter().any(|z| z.abs() < 1e-4)
        });
        if !near_kink {
            return GradCase {
                net,
                batch,
                values,
                classes,
                loss,
            };
        }
    }
}

/// All `C(d, s)` masks in lexicographic order of index sets.
pub fn all_masks(d: usize, s: usize) -> Vec<Mask> {
    fn rec(start: usize, d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Mask>) {
        if left == 0 {
            out.push(Mask::from_indices(d, cur).unwrap());
            return;
        }
        for i in start..=d - left {
            cur.push(i);
            rec(i + 1, d, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, s, &mut Vec::new(), &mut out);
    out
}

/// Masks reachable by exchanging one selected and one unselected feature.
pub fn one_swap_neighbours(m: &Mask) -> Vec<Mask> {
    let mut out = Vec::new();
    for i in m.ones() {
        for j in m.zeros_indices() {
            let mut n = m.clone();
            n.set(i, false);
            n.set(j, true);
            out.push(n);
        }
    }
    out
}

/// A `d`-input selector with the benchmark's 100-50-10 sigmoid body.
pub fn table_selector<R: Rng + ?Sized>(d: usize, lr: f64, rng: &mut R) -> SelectorModel {
    let net = Network::mlp(&[d, 100, 50, 10, 1], Activation::Sigmoid, Activation::Linear, rng).unwrap();
    SelectorModel::new(net, AdamConfig::adam(lr)).unwrap()
}

/// Full-batch Adam on a loss table until every prediction is within
/// `tolerance` of its target or `max_steps` elapse. Returns the steps used.
pub fn memorize(sel: &mut SelectorModel, table: &[SelectorExample], tolerance: f64, max_steps: usize) -> usize {
    for step in 0..max_steps {
        if max_table_error(sel, table) < tolerance {
            return step;
        }
        sel.train_step(table).unwrap();
    }
    max_steps
}

pub fn max_table_error(sel: &SelectorModel, table: &[SelectorExample]) -> f64 {
    table
        .iter()
        .map(|e| (sel.predict(&e.mask).unwrap() - e.target_loss).abs())
        .fold(0.0, f64::max)
}

/// `true` when no one-swap neighbour has a strictly lower predicted loss.
pub fn is_swap_local_optimum<S: SubsetScorer>(scorer: &S, m: &Mask) -> bool {
    let here = scorer.predict_mask(m).unwrap();
    one_swap_neighbours(m)
        .iter()
        .all(|n| here <= scorer.predict_mask(n).unwrap())
}

pub struct TableOutcome {
    pub memorized: bool,
    pub local_optimum: bool,
    pub mask: Mask,
}

/// Memorizes a random `C(6, 2)` table and checks the searched mask.
pub fn local_optimality_trial<R: Rng + ?Sized>(rng: &mut R) -> TableOutcome {
    let (d, s) = (6, 2);
    let table: Vec<SelectorExample> = all_masks(d, s)
        .into_iter()
        .map(|mask| SelectorExample {
            mask,
            target_loss: rng.random_range(0.1..1.0),
            weight: 1.0,
        })
        .collect();
    let mut sel = table_selector(d, 1e-2, rng);
    memorize(&mut sel, &table, 0.01, 5000);
    let memorized = max_table_error(&sel, &table) < 0.05;
    let found = generate_optimal_mask(&sel, d, s).unwrap();
    TableOutcome {
        memorized,
        local_optimum: is_swap_local_optimum(&sel, &found.mask),
        mask: found.mask,
    }
}

/// The operator loss evaluated one instance at a time.
pub fn brute_force_operator_loss(
    net: &Network,
    loss: LossKind,
    x: &Array2<f64>,
    values: Option<&Array2<f64>>,
    classes: Option<&[usize]>,
    masks: &[Mask],
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for m in masks {
        for r in 0..x.nrows() {
            let d = x.ncols();
            let mut input = Array2::zeros((1, 2 * d));
            for j in 0..d {
                let bit = if m.get(j) { 1.0 } else { 0.0 };
                input[[0, j]] = x[[r, j]] * bit;
                input[[0, d + j]] = bit;
            }
            let out = net.predict(&input).unwrap();
            let l = match (values, classes) {
                (Some(v), _) => {
                    let row = v.row(r).to_owned().insert_axis(ndarray::Axis(0));
                    loss.mean_loss(&out, Target::Values(row.view())).unwrap()
                }
                (None, Some(c)) => loss.mean_loss(&out, Target::Classes(&c[r..r + 1])).unwrap(),
                _ => unreachable!(),
            };
            total += l;
            count += 1;
        }
    }
    total / count as f64
}

/// The selector loss without weights: `1/(2N) Σ (f(m) − target)²`.
pub fn unweighted_selector_loss(sel: &SelectorModel, examples: &[SelectorExample]) -> f64 {
    let sum: f64 = examples
        .iter()
        .map(|e| (sel.predict(&e.mask).unwrap() - e.target_loss).powi(2))
        .sum();
    sum / (2.0 * examples.len() as f64)
}

/// A random operator, batch and mask set for one task kind.
pub fn random_setup<R: Rng + ?Sized>(rng: &mut R, task: TaskKind) -> (OperatorModel, Dataset, Vec<Mask>) {
    let d = rng.random_range(2..=6);
    let n = rng.random_range(1..=6);
    let out = match task {
        TaskKind::Regression => Activation::Linear,
        TaskKind::Binary => Activation::Sigmoid,
        TaskKind::Multiclass(_) => Activation::Softmax,
    };
    let hidden = rng.random_range(1..=8);
    let net = Network::mlp(&[2 * d, hidden, task.output_dim()], Activation::Sigmoid, out, rng).unwrap();
    let op = OperatorModel::new(net, task.loss(), AdamConfig::nadam(1e-3)).unwrap();
    let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
    let targets = match task {
        TaskKind::Regression => Targets::Real((0..n).map(|_| StandardNormal.sample(rng)).collect()),
        _ => {
            let k = task.class_count().unwrap();
            Targets::Labels((0..n).map(|_| rng.random_range(0..k)).collect())
        }
    };
    let data = Dataset::new(x, targets, task, default_feature_names(d)).unwrap();
    let s = rng.random_range(1..d);
    let masks = (0..rng.random_range(1..=5))
        .map(|_| random_mask(d, s, rng).unwrap())
        .collect();
    (op, data, masks)
}

/// `brute_force_operator_loss` for any task kind.
pub fn brute(op: &OperatorModel, data: &Dataset, masks: &[Mask]) -> f64 {
    match (&data.targets, data.task) {
        (Targets::Real(y), _) => {
            let v = Array2::from_shape_fn((y.len(), 1), |(i, _)| y[i]);
            brute_force_operator_loss(&op.net, op.loss, &data.features, Some(&v), None, masks)
        }
        (Targets::Labels(l), TaskKind::Binary) => {
            let v = Array2::from_shape_fn((l.len(), 1), |(i, _)| l[i] as f64);
            brute_force_operator_loss(&op.net, op.loss, &data.features, Some(&v), None, masks)
        }
        (Targets::Labels(l), _) => {
            brute_force_operator_loss(&op.net, op.loss, &data.features, None, Some(l), masks)
        }
    }
}
