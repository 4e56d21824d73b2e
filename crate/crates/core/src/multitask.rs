//! Multitask image-side classifier: a shared-trunk MLP over precomputed
//! embeddings with four binary softmax heads (drug, weed, pills, syrup).
//!
//! The label tree (weed/pills/syrup under drug) is folded into per-sample
//! structured targets: a sub-class label activates its own head at full
//! weight and its parent at a reduced relation weight, everything else is
//! masked out of the loss. Training is plain mini-batch gradient descent
//! with RMSprop updates; all gradients are computed analytically and are
//! checked against finite differences in the tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Post, Source};
use crate::error::{Error, Result};

pub const NUM_TASKS: usize = 4;

/// Default down-weight for loss terms that come from task-relation
/// encoding rather than a direct label.
pub const DEFAULT_RELATION_WEIGHT: f64 = 0.5;

/// Probabilities are clamped to this floor (and 1 - floor) before logs.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Drug = 0,
    Weed = 1,
    Pills = 2,
    Syrup = 3,
}

impl Task {
    pub const ALL: [Task; NUM_TASKS] = [Task::Drug, Task::Weed, Task::Pills, Task::Syrup];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The two-level task tree: drug is the root, the three sub-classes its
/// children.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTree {
    /// parent[t] is `None` for the root.
    parent: [Option<Task>; NUM_TASKS],
}

impl Default for TaskTree {
    fn default() -> Self {
        Self {
            parent: [None, Some(Task::Drug), Some(Task::Drug), Some(Task::Drug)],
        }
    }
}

impl TaskTree {
    pub fn parent(&self, task: Task) -> Option<Task> {
        self.parent[task.index()]
    }

    pub fn root(&self) -> Task {
        Task::ALL
            .into_iter()
            .find(|t| self.parent[t.index()].is_none())
            .expect("tree has a root")
    }

    fn task_for(label: Label) -> Option<Task> {
        match label {
            Label::Drug => Some(Task::Drug),
            Label::Weed => Some(Task::Weed),
            Label::Pills => Some(Task::Pills),
            Label::Syrup => Some(Task::Syrup),
            Label::Negative => None,
        }
    }

    /// Structured target for one labeled sample.
    ///
    /// A directly labeled node gets weight 1.0; nodes activated through
    /// the tree (the parent of a sub-class, or the children of a negative
    /// root) get `relation_weight`; everything else is masked.
    pub fn encode(&self, label: Label, relation_weight: f64) -> StructuredTarget {
        let mut target = StructuredTarget::all_masked();
        match Self::task_for(label) {
            Some(task) => {
                target.activate(task, 1.0, 1.0);
                let mut cursor = task;
                while let Some(parent) = self.parent(cursor) {
                    target.activate(parent, 1.0, relation_weight);
                    cursor = parent;
                }
            }
            None => {
                // A negative root logically forces every node negative;
                // the sub-heads count as relation-derived.
                let root = self.root();
                target.activate(root, 0.0, 1.0);
                for task in Task::ALL {
                    if task != root {
                        target.activate(task, 0.0, relation_weight);
                    }
                }
            }
        }
        target
    }

    /// Single-task baseline: only the drug head is supervised, sub-heads
    /// are always masked.
    pub fn encode_single_task(&self, drug: bool) -> StructuredTarget {
        let mut target = StructuredTarget::all_masked();
        target.activate(self.root(), if drug { 1.0 } else { 0.0 }, 1.0);
        target
    }
}

/// Per-task (target, mask, weight) triple for one sample. Masked entries
/// take no part in the loss or its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredTarget {
    pub target: [f64; NUM_TASKS],
    pub mask: [bool; NUM_TASKS],
    pub weight: [f64; NUM_TASKS],
}

impl StructuredTarget {
    pub fn all_masked() -> Self {
        Self {
            target: [0.0; NUM_TASKS],
            mask: [false; NUM_TASKS],
            weight: [0.0; NUM_TASKS],
        }
    }

    pub fn activate(&mut self, task: Task, target: f64, weight: f64) {
        let i = task.index();
        self.target[i] = target;
        self.mask[i] = true;
        self.weight[i] = weight;
    }
}

/// One dense layer; weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn glorot(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim)
                .map(|_| rng.gen_range(-limit..limit))
                .collect(),
            bias: vec![0.0; out_dim],
        }
    }

    /// z = W x + b
    fn affine(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim)) {
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *o += acc;
        }
        out
    }
}

/// Shared-trunk multi-head MLP. The trunk applies ReLU after each layer;
/// each head is a 2-unit softmax whose first output is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub trunk: Vec<DenseLayer>,
    pub heads: Vec<DenseLayer>,
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

struct ForwardTrace {
    /// Post-activation trunk outputs, one per layer.
    trunk_post: Vec<Vec<f64>>,
    head_probs: [[f64; 2]; NUM_TASKS],
}

impl MlpModel {
    /// Glorot-uniform initialized network, deterministic for a fixed rng.
    pub fn init(input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut prev = input_dim;
        for &width in hidden {
            trunk.push(DenseLayer::glorot(prev, width, rng));
            prev = width;
        }
        let heads = (0..NUM_TASKS)
            .map(|_| DenseLayer::glorot(prev, 2, rng))
            .collect();
        Self {
            input_dim,
            trunk,
            heads,
        }
    }

    /// All-zero parameters with the same shapes; used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            input_dim: self.input_dim,
            trunk: self
                .trunk
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                .collect(),
            heads: self
                .heads
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::data(format!(
                "embedding dim {} \u{2260} model input dim {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let mut trunk_post = Vec::with_capacity(self.trunk.len());
        let mut current = x.to_vec();
        for layer in &self.trunk {
            let mut z = layer.affine(&current);
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            trunk_post.push(z.clone());
            current = z;
        }
        let mut head_probs = [[0.0; 2]; NUM_TASKS];
        for (t, head) in self.heads.iter().enumerate() {
            let logits = head.affine(&current);
            head_probs[t] = softmax2([logits[0], logits[1]]);
        }
        ForwardTrace {
            trunk_post,
            head_probs,
        }
    }

    /// Per-task positive-class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; NUM_TASKS]> {
        self.check_input(x)?;
        let trace = self.forward_trace(x);
        Ok(std::array::from_fn(|t| trace.head_probs[t][0]))
    }

    /// Both softmax outputs of every head (positive first).
    pub fn forward_pairs(&self, x: &[f64]) -> Result<[[f64; 2]; NUM_TASKS]> {
        self.check_input(x)?;
        Ok(self.forward_trace(x).head_probs)
    }

    /// The drug head's positive probability.
    pub fn predict_drug_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[Task::Drug.index()])
    }

    /// Parameters flattened in a fixed order: trunk layers then heads,
    /// weights before bias within each layer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in self.trunk.iter().chain(self.heads.iter()) {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for layer in self.trunk.iter_mut().chain(self.heads.iter_mut()) {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        debug_assert_eq!(offset, flat.len());
    }

    pub fn num_params(&self) -> usize {
        self.trunk
            .iter()
            .chain(self.heads.iter())
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Checks that layer dimensions chain from the input through the
    /// trunk into four 2-unit heads; used when loading external models.
    pub fn validate_shapes(&self) -> Result<()> {
        let mut prev = self.input_dim;
        for (i, layer) in self.trunk.iter().enumerate() {
            if layer.in_dim != prev
                || layer.weights.len() != layer.in_dim * layer.out_dim
                || layer.bias.len() != layer.out_dim
            {
                return Err(Error::data(format!("trunk layer {i} has inconsistent shape")));
            }
            prev = layer.out_dim;
        }
        if self.heads.len() != NUM_TASKS {
            return Err(Error::data(format!(
                "expected {NUM_TASKS} heads, got {}",
                self.heads.len()
            )));
        }
        for (i, head) in self.heads.iter().enumerate() {
            if head.in_dim != prev
                || head.out_dim != 2
                || head.weights.len() != head.in_dim * 2
                || head.bias.len() != 2
            {
                return Err(Error::data(format!("head {i} has inconsistent shape")));
            }
        }
        Ok(())
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn bce(target: f64, prob: f64) -> f64 {
    let p = clamp_prob(prob);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean over the batch of the per-sample masked, weighted binary
/// cross-entropies. Masked heads are skipped entirely, so their targets
/// and weights cannot influence the result.
pub fn masked_loss(predictions: &[[f64; NUM_TASKS]], targets: &[StructuredTarget]) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    assert!(!predictions.is_empty());
    let mut total = 0.0;
    for (probs, st) in predictions.iter().zip(targets) {
        total += sample_loss(probs, st);
    }
    total / predictions.len() as f64
}

fn sample_loss(probs: &[f64; NUM_TASKS], st: &StructuredTarget) -> f64 {
    let mut loss = 0.0;
    for (t, prob) in probs.iter().enumerate() {
        if st.mask[t] {
            loss += st.weight[t] * bce(st.target[t], *prob);
        }
    }
    loss
}

/// One training sample: an embedding and its structured target.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub embedding: Vec<f64>,
    pub target: StructuredTarget,
}

/// Loss of a batch under the model.
pub fn batch_loss(model: &MlpModel, batch: &[&TrainSample]) -> f64 {
    let predictions: Vec<[f64; NUM_TASKS]> = batch
        .iter()
        .map(|s| {
            let trace = model.forward_trace(&s.embedding);
            std::array::from_fn(|t| trace.head_probs[t][0])
        })
        .collect();
    let targets: Vec<StructuredTarget> = batch.iter().map(|s| s.target).collect();
    masked_loss(&predictions, &targets)
}

/// Exact analytic gradient of [`masked_loss`] with respect to every
/// parameter, averaged over the batch. Returned with the same shapes as
/// the model.
pub fn backward(model: &MlpModel, batch: &[&TrainSample]) -> MlpModel {
    assert!(!batch.is_empty());
    let mut grads = model.zeros_like();
    let scale = 1.0 / batch.len() as f64;

    for sample in batch {
        let x = &sample.embedding;
        let st = &sample.target;
        let trace = model.forward_trace(x);
        let trunk_out = trace
            .trunk_post
            .last()
            .map(Vec::as_slice)
            .unwrap_or(x.as_slice());

        // Gradient flowing back into the trunk output.
        let mut d_trunk_out = vec![0.0; trunk_out.len()];
        for (t, head) in model.heads.iter().enumerate() {
            if !st.mask[t] {
                continue;
            }
            // d(loss)/d(logit_pos) for softmax + BCE on the positive output.
            let d_pos = scale * st.weight[t] * (trace.head_probs[t][0] - st.target[t]);
            let d_logits = [d_pos, -d_pos];
            let head_grad = &mut grads.heads[t];
            for (unit, &dz) in d_logits.iter().enumerate() {
                head_grad.bias[unit] += dz;
                let row = &mut head_grad.weights[unit * head.in_dim..(unit + 1) * head.in_dim];
                for (g, h) in row.iter_mut().zip(trunk_out) {
                    *g += dz * h;
                }
                let wrow = &head.weights[unit * head.in_dim..(unit + 1) * head.in_dim];
                for (d, w) in d_trunk_out.iter_mut().zip(wrow) {
                    *d += dz * w;
                }
            }
        }

        // Backprop through the trunk.
        let mut d_post = d_trunk_out;
        for l in (0..model.trunk.len()).rev() {
            let layer = &model.trunk[l];
            let post = &trace.trunk_post[l];
            let input: &[f64] = if l == 0 {
                x.as_slice()
            } else {
                &trace.trunk_post[l - 1]
            };
            // ReLU gate: post > 0 iff pre-activation > 0.
            let d_z: Vec<f64> = d_post
                .iter()
                .zip(post)
                .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
                .collect();
            let layer_grad = &mut grads.trunk[l];
            let mut d_input = vec![0.0; layer.in_dim];
            for (unit, &dz) in d_z.iter().enumerate() {
                layer_grad.bias[unit] += dz;
                let row = &mut layer_grad.weights[unit * layer.in_dim..(unit + 1) * layer.in_dim];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += dz * v;
                }
                let wrow = &layer.weights[unit * layer.in_dim..(unit + 1) * layer.in_dim];
                for (d, w) in d_input.iter_mut().zip(wrow) {
                    *d += dz * w;
                }
            }
            d_post = d_input;
        }
    }
    grads
}

/// RMSprop accumulator state, one cache entry per flattened parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub cache: Vec<f64>,
    pub rho: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl RmsPropState {
    pub fn new(n_params: usize, learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        Self {
            cache: vec![0.0; n_params],
            rho,
            learning_rate,
            epsilon,
        }
    }
}

/// cache <- rho*cache + (1-rho)*g^2; theta <- theta - lr*g/(sqrt(cache)+eps)
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], state: &mut RmsPropState) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.cache.len());
    for ((theta, &g), c) in params.iter_mut().zip(grads).zip(state.cache.iter_mut()) {
        *c = state.rho * *c + (1.0 - state.rho) * g * g;
        *theta -= state.learning_rate * g / (c.sqrt() + state.epsilon);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub relation_weight: f64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            seed: 0,
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
            relation_weight: DEFAULT_RELATION_WEIGHT,
            hidden: vec![256, 256],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.learning_rate <= 0.0 || self.rho <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::invalid(
                "learning_rate, rho and epsilon must be positive",
            ));
        }
        if !(self.relation_weight > 0.0 && self.relation_weight <= 1.0) {
            return Err(Error::invalid(format!(
                "relation_weight {} not in (0,1]",
                self.relation_weight
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be positive"));
        }
        Ok(())
    }
}

/// Trained model plus the mean training loss recorded per epoch.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: MlpModel,
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch RMSprop training. Deterministic for a fixed config: seeded
/// Glorot initialization, seeded shuffling each epoch.
pub fn train(samples: &[TrainSample], config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::data("cannot train on an empty dataset"));
    }
    let drug = Task::Drug.index();
    let has_pos = samples
        .iter()
        .any(|s| s.target.mask[drug] && s.target.target[drug] == 1.0);
    let has_neg = samples
        .iter()
        .any(|s| s.target.mask[drug] && s.target.target[drug] == 0.0);
    if !has_pos || !has_neg {
        return Err(Error::data(
            "training set needs at least one positive and one negative drug-labeled sample",
        ));
    }
    let input_dim = samples[0].embedding.len();
    if samples.iter().any(|s| s.embedding.len() != input_dim) {
        return Err(Error::data("inconsistent embedding dimensions"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init(input_dim, &config.hidden, &mut rng);
    let mut state = RmsPropState::new(
        model.num_params(),
        config.learning_rate,
        config.rho,
        config.epsilon,
    );

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut flat = model.to_flat();
    for _ in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            epoch_loss += batch_loss(&model, &batch);
            n_batches += 1;
            let grads = backward(&model, &batch);
            rmsprop_step(&mut flat, &grads.to_flat(), &mut state);
            model.set_from_flat(&flat);
        }
        epoch_losses.push(epoch_loss / n_batches as f64);
    }
    Ok(TrainRun {
        model,
        epoch_losses,
    })
}

/// Turns labeled posts into training samples.
///
/// Multitask mode uses every labeled post: Instagram binary labels plus
/// web sub-class posts, encoded through the task tree. Single-task mode
/// keeps only Instagram posts and supervises the drug head alone.
pub fn samples_from_posts(
    posts: &[&Post],
    tree: &TaskTree,
    relation_weight: f64,
    single_task: bool,
) -> Vec<TrainSample> {
    posts
        .iter()
        .filter_map(|post| {
            let label = post.label?;
            let target = if single_task {
                if post.source != Source::Instagram || label.is_subclass() {
                    return None;
                }
                tree.encode_single_task(label == Label::Drug)
            } else {
                tree.encode(label, relation_weight)
            };
            Some(TrainSample {
                embedding: post.embedding.clone(),
                target,
            })
        })
        .collect()
}
