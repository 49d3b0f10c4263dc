//! Three-stage training pipeline.
//!
//! Stage 1 trains the network on the attribute-labeled set with sigmoid
//! cross-entropy. Stage 2 fine-tunes on the id-labeled set with the
//! attributes triplet loss, against initial labels frozen at the start of
//! the stage. Stage 3 re-labels the id set with the fine-tuned model,
//! merges it with the labeled set, and runs a final cross-entropy pass.
//! The embedding baseline fine-tunes everything below the output layer
//! with a plain hinge triplet loss on penultimate activations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attributes::{binarize_threshold, binarize_top_p, AttributeVector};
use crate::error::{Error, Result};
use crate::loss::sigmoid_cross_entropy;
use crate::matrix::Matrix;
use crate::net::{
    backward, backward_from_layer, forward, init_network, score_grad_to_logit_grad, sgd_step,
    GradientBundle, NetworkConfig, NetworkParams,
};
use crate::seeding::derive_seed;
use crate::triplet::{attributes_triplet_loss, hinge_triplet_loss, mine_triplets, InitialLabels};
use crate::triplet::{LossParams, TripletBatch};

// Stream tags keeping the pipeline's RNG streams independent.
const STREAM_SUPERVISED: u64 = 1;
const STREAM_MINE: u64 = 2;
const STREAM_BASELINE_MINE: u64 = 3;

/// Attribute-labeled training set.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<AttributeVector>,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<AttributeVector>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(first) = labels.first() {
            if labels.iter().any(|l| l.len() != first.len()) {
                return Err(Error::shape("labels differ in length".to_string()));
            }
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn attribute_count(&self) -> Option<usize> {
        self.labels.first().map(|l| l.len())
    }
}

/// Id-labeled set: features plus person and camera ids, no attributes.
#[derive(Debug, Clone)]
pub struct IdSet {
    pub features: Matrix,
    pub person_ids: Vec<u32>,
    pub camera_ids: Vec<u32>,
}

impl IdSet {
    pub fn new(features: Matrix, person_ids: Vec<u32>, camera_ids: Vec<u32>) -> Result<Self> {
        if features.rows() != person_ids.len() || person_ids.len() != camera_ids.len() {
            return Err(Error::shape(format!(
                "{} feature rows vs {} person ids vs {} camera ids",
                features.rows(),
                person_ids.len(),
                camera_ids.len()
            )));
        }
        Ok(IdSet {
            features,
            person_ids,
            camera_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.person_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.person_ids.is_empty()
    }
}

/// Per-stage training hyperparameters.
#[derive(Debug, Clone)]
pub struct StageConfig {
    pub epochs: usize,
    /// Minibatch size, in samples for the cross-entropy stages and in
    /// triplets for the fine-tuning stages.
    pub batch_size: usize,
    /// Triplets mined per epoch in stage 2 and the baseline. Zero is only
    /// meaningful for the baseline, which then leaves the model untouched.
    pub triplets_per_epoch: usize,
    pub learning_rate: f64,
    pub loss: LossParams,
    /// Positives kept by top-p pseudo-labeling.
    pub p: usize,
    /// Logit threshold for deep-attribute binarization.
    pub tau: f64,
    pub seed: u64,
    /// Classical momentum; 0 disables it and leaves plain SGD.
    pub momentum: f64,
    /// Layer indices excluded from updates.
    pub frozen_layers: Vec<usize>,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            epochs: 1,
            batch_size: 16,
            triplets_per_epoch: 32,
            learning_rate: 0.1,
            loss: LossParams::default(),
            p: 10,
            tau: 0.0,
            seed: 0,
            momentum: 0.0,
            frozen_layers: Vec::new(),
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.p == 0 {
            return Err(Error::config("p must be at least 1".to_string()));
        }
        LossParams::new(self.loss.theta, self.loss.gamma)?;
        Ok(())
    }
}

/// Final parameters and the per-epoch loss trace of one stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub params: NetworkParams,
    pub epoch_losses: Vec<f64>,
}

/// Per-stage summary serialized into run reports.
///
/// Wall time is kept in memory for logging but never serialized: report
/// files must be byte-identical across reruns of the same configuration.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub checkpoint: String,
    pub epoch_losses: Vec<f64>,
    pub final_loss: Option<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl StageReport {
    pub fn from_result(checkpoint: impl Into<String>, result: &StageResult, wall: f64) -> Self {
        StageReport {
            checkpoint: checkpoint.into(),
            epoch_losses: result.epoch_losses.clone(),
            final_loss: result.epoch_losses.last().copied(),
            wall_time_s: wall,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineReport {
    pub stages: BTreeMap<String, StageReport>,
}

impl PipelineReport {
    pub fn insert(&mut self, name: impl Into<String>, report: StageReport) {
        self.stages.insert(name.into(), report);
    }

    pub fn validate(&self) -> Result<()> {
        for (name, stage) in &self.stages {
            if stage.epoch_losses.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::validation(format!(
                    "stage {name} recorded a non-finite or negative loss"
                )));
            }
        }
        Ok(())
    }

    /// JSON with lexicographically ordered keys at every level.
    pub fn to_json(&self) -> Result<String> {
        to_sorted_json(self)
    }
}

/// Serialize any value to pretty JSON with lexicographically sorted keys.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::format(format!("JSON serialization failed: {e}")))?;
    serde_json::to_string_pretty(&v)
        .map_err(|e| Error::format(format!("JSON serialization failed: {e}")))
}

struct Updater {
    velocity: Option<GradientBundle>,
}

impl Updater {
    fn new() -> Self {
        Updater { velocity: None }
    }

    fn step(
        &mut self,
        params: &NetworkParams,
        mut grads: GradientBundle,
        cfg: &StageConfig,
    ) -> Result<NetworkParams> {
        for &li in &cfg.frozen_layers {
            grads.zero_layer(li);
        }
        if cfg.momentum > 0.0 {
            let v = self
                .velocity
                .get_or_insert_with(|| GradientBundle::zeros_like(params));
            for (vl, gl) in v.layers.iter_mut().zip(&grads.layers) {
                for (vv, gv) in vl.weight.data_mut().iter_mut().zip(gl.weight.data()) {
                    *vv = cfg.momentum * *vv + gv;
                }
                for (vv, gv) in vl.bias.iter_mut().zip(&gl.bias) {
                    *vv = cfg.momentum * *vv + gv;
                }
            }
            sgd_step(params, v, cfg.learning_rate)
        } else {
            sgd_step(params, &grads, cfg.learning_rate)
        }
    }
}

fn labels_to_matrix(labels: &[AttributeVector]) -> Result<Matrix> {
    let k = labels.first().map(|l| l.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(labels.len() * k);
    for l in labels {
        data.extend(l.bits().iter().map(|&b| b as f64));
    }
    Matrix::new(labels.len(), k.max(1), data)
}

/// Sigmoid cross-entropy training from existing parameters. Stage 1 starts
/// from a fresh init; stage 3 continues from the fine-tuned model. Both go
/// through this one loop so their behavior is identical by construction.
pub fn train_supervised(
    params: &NetworkParams,
    features: &Matrix,
    labels: &[AttributeVector],
    cfg: &StageConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::data("empty supervised training set".to_string()));
    }
    if features.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} feature rows vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if labels[0].len() != params.output_dim() {
        return Err(Error::shape(format!(
            "labels have {} attributes, network outputs {}",
            labels[0].len(),
            params.output_dim()
        )));
    }
    let targets = labels_to_matrix(labels)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_SUPERVISED]));
    let mut updater = Updater::new();
    let mut current = params.clone();
    let n = labels.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut weighted_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = features.select_rows(chunk)?;
            let t = targets.select_rows(chunk)?;
            let trace = forward(&current, &x)?;
            let (loss, dlogits) = sigmoid_cross_entropy(trace.logits(), &t)?;
            let grads = backward(&current, &trace, &dlogits)?;
            current = updater.step(&current, grads, cfg)?;
            weighted_loss += loss * chunk.len() as f64;
        }
        epoch_losses.push(weighted_loss / n as f64);
    }
    Ok(StageResult {
        params: current,
        epoch_losses,
    })
}

/// Stage 1: fully supervised training on the attribute-labeled set.
pub fn stage1_train(
    t_set: &LabeledSet,
    cfg: &StageConfig,
    net_cfg: &NetworkConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if t_set.is_empty() {
        return Err(Error::data("stage 1 requires a non-empty labeled set".to_string()));
    }
    if t_set.features.cols() != net_cfg.input_dim() {
        return Err(Error::shape(format!(
            "features have {} dims, network expects {}",
            t_set.features.cols(),
            net_cfg.input_dim()
        )));
    }
    if t_set.attribute_count() != Some(net_cfg.output_dim()) {
        return Err(Error::shape(format!(
            "labels have {:?} attributes, network outputs {}",
            t_set.attribute_count(),
            net_cfg.output_dim()
        )));
    }
    let params = init_network(net_cfg)?;
    train_supervised(&params, &t_set.features, &t_set.labels, cfg)
}

/// Predict the initial labels for every sample of the id set: top-p
/// binarized confidence scores, exactly p positives each.
pub fn predict_initial_labels(
    params: &NetworkParams,
    u_set: &IdSet,
    p: usize,
) -> Result<InitialLabels> {
    let trace = forward(params, &u_set.features)?;
    let logits = trace.logits();
    let mut labels = Vec::with_capacity(u_set.len());
    for r in 0..logits.rows() {
        labels.push(binarize_top_p(logits.row(r), p)?);
    }
    Ok(InitialLabels { labels })
}

/// Top-p binarized predictions for every row, used as the mining view of
/// the current model.
fn predict_top_p(params: &NetworkParams, features: &Matrix, p: usize) -> Result<Vec<AttributeVector>> {
    let trace = forward(params, features)?;
    let logits = trace.logits();
    (0..logits.rows())
        .map(|r| binarize_top_p(logits.row(r), p))
        .collect()
}

/// Stage 2: fine-tune with the attributes triplet loss against the frozen
/// initial labels. Each epoch re-mines triplets from the current top-p
/// predictions and descends the batch-mean loss in minibatches.
pub fn stage2_finetune(
    params: &NetworkParams,
    u_set: &IdSet,
    tilde: &InitialLabels,
    cfg: &StageConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if cfg.triplets_per_epoch == 0 {
        return Err(Error::config(
            "stage 2 needs a positive triplet count per epoch".to_string(),
        ));
    }
    if tilde.len() != u_set.len() {
        return Err(Error::shape(format!(
            "{} initial labels for {} samples",
            tilde.len(),
            u_set.len()
        )));
    }
    let mut sorted = u_set.person_ids.clone();
    sorted.sort_unstable();
    if !sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::data(
            "no person id repeats in the id set; no positive pair exists".to_string(),
        ));
    }

    let mut current = params.clone();
    let mut updater = Updater::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let predictions = predict_top_p(&current, &u_set.features, cfg.p)?;
        let batch = mine_triplets(
            &u_set.person_ids,
            &predictions,
            cfg.triplets_per_epoch,
            derive_seed(cfg.seed, &[STREAM_MINE, epoch as u64]),
        )?;
        let mut weighted_loss = 0.0;
        for chunk in batch.triplets.chunks(cfg.batch_size) {
            let trace = forward(&current, &u_set.features)?;
            let scores = trace.scores();
            let inv = 1.0 / chunk.len() as f64;
            let mut dscores = Matrix::zeros(scores.rows(), scores.cols());
            let mut chunk_loss = 0.0;
            for t in chunk {
                let (loss, grads) = attributes_triplet_loss(
                    scores.row(t.anchor),
                    scores.row(t.positive),
                    scores.row(t.negative),
                    &tilde.labels[t.anchor],
                    &tilde.labels[t.positive],
                    &tilde.labels[t.negative],
                    &cfg.loss,
                )?;
                chunk_loss += loss;
                for (c, g) in grads.anchor.iter().enumerate() {
                    dscores.set(t.anchor, c, dscores.get(t.anchor, c) + g * inv);
                }
                for (c, g) in grads.positive.iter().enumerate() {
                    dscores.set(t.positive, c, dscores.get(t.positive, c) + g * inv);
                }
                for (c, g) in grads.negative.iter().enumerate() {
                    dscores.set(t.negative, c, dscores.get(t.negative, c) + g * inv);
                }
            }
            let dlogits = score_grad_to_logit_grad(&dscores, scores)?;
            let grads = backward(&current, &trace, &dlogits)?;
            current = updater.step(&current, grads, cfg)?;
            weighted_loss += chunk_loss; // already per-triplet; sum then divide below
        }
        epoch_losses.push(weighted_loss / batch.len() as f64);
    }
    Ok(StageResult {
        params: current,
        epoch_losses,
    })
}

/// Stage 3: re-label the id set with the fine-tuned model, merge with the
/// labeled set, and run a final supervised pass. The labeled set's ground
/// truth is taken as-is and never modified.
pub fn stage3_combine(
    params: &NetworkParams,
    t_set: &LabeledSet,
    u_set: &IdSet,
    cfg: &StageConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if t_set.attribute_count() != Some(params.output_dim()) {
        return Err(Error::shape(format!(
            "labeled set has {:?} attributes, network outputs {}",
            t_set.attribute_count(),
            params.output_dim()
        )));
    }
    let pseudo = predict_initial_labels(params, u_set, cfg.p)?;
    let merged_features = t_set.features.vstack(&u_set.features)?;
    let mut merged_labels = t_set.labels.clone();
    merged_labels.extend(pseudo.labels);
    train_supervised(params, &merged_features, &merged_labels, cfg)
}

/// Deep attributes of the final model: per sample, the logits binarized at
/// the strict threshold `tau`.
pub fn predict_deep_attributes(
    params: &NetworkParams,
    features: &Matrix,
    tau: f64,
) -> Result<Vec<AttributeVector>> {
    let trace = forward(params, features)?;
    let logits = trace.logits();
    (0..logits.rows())
        .map(|r| binarize_threshold(logits.row(r), tau))
        .collect()
}

/// Penultimate-layer activations, the feature of the embedding baseline.
pub fn embed(params: &NetworkParams, features: &Matrix) -> Result<Matrix> {
    let trace = forward(params, features)?;
    Ok(trace.penultimate()?.clone())
}

/// Baseline: fine-tune the layers below the output with a plain hinge
/// triplet loss on penultimate activations. The output layer stays frozen
/// bit-for-bit. With a zero triplet count the model is returned unchanged.
pub fn embedding_triplet_baseline(
    params: &NetworkParams,
    u_set: &IdSet,
    cfg: &StageConfig,
) -> Result<StageResult> {
    cfg.validate()?;
    if params.num_layers() < 2 {
        return Err(Error::config(
            "embedding baseline needs a penultimate layer".to_string(),
        ));
    }
    if cfg.triplets_per_epoch == 0 {
        return Ok(StageResult {
            params: params.clone(),
            epoch_losses: Vec::new(),
        });
    }
    let hinge_only = LossParams {
        theta: cfg.loss.theta,
        gamma: 0.0,
    };
    let embed_layer = params.num_layers() - 2;

    let mut current = params.clone();
    let mut updater = Updater::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let predictions = predict_top_p(&current, &u_set.features, cfg.p)?;
        let batch: TripletBatch = mine_triplets(
            &u_set.person_ids,
            &predictions,
            cfg.triplets_per_epoch,
            derive_seed(cfg.seed, &[STREAM_BASELINE_MINE, epoch as u64]),
        )?;
        let mut weighted_loss = 0.0;
        for chunk in batch.triplets.chunks(cfg.batch_size) {
            let trace = forward(&current, &u_set.features)?;
            let emb = trace.penultimate()?;
            let inv = 1.0 / chunk.len() as f64;
            let mut demb = Matrix::zeros(emb.rows(), emb.cols());
            let mut chunk_loss = 0.0;
            for t in chunk {
                let (loss, grads) = hinge_triplet_loss(
                    emb.row(t.anchor),
                    emb.row(t.positive),
                    emb.row(t.negative),
                    &hinge_only,
                )?;
                chunk_loss += loss;
                for (c, g) in grads.anchor.iter().enumerate() {
                    demb.set(t.anchor, c, demb.get(t.anchor, c) + g * inv);
                }
                for (c, g) in grads.positive.iter().enumerate() {
                    demb.set(t.positive, c, demb.get(t.positive, c) + g * inv);
                }
                for (c, g) in grads.negative.iter().enumerate() {
                    demb.set(t.negative, c, demb.get(t.negative, c) + g * inv);
                }
            }
            let grads = backward_from_layer(&current, &trace, embed_layer, &demb)?;
            current = updater.step(&current, grads, cfg)?;
            weighted_loss += chunk_loss;
        }
        epoch_losses.push(weighted_loss / batch.len() as f64);
    }
    Ok(StageResult {
        params: current,
        epoch_losses,
    })
}
