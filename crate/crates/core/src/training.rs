//! Cross-entropy warmup followed by the ramped self-distillation objective.
//!
//! Iterations count batches from 1. Batches `1..=K` train on plain
//! cross-entropy; batch `K + j` uses `alpha = min(1, j * eta)`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{batchify, Batch, Corpus};
use crate::embedding::{inject_noise, NoiseSpec};
use crate::error::{Result, SkdError};
use crate::eval::eval_nll;
use crate::network::{backward_sequence_into, forward_step_with_input, Gradients, HiddenState, ModelParams};
use crate::objectives::{
    argmax, clip_q_n, combine, floored_ln, raw_q_n_from_distance, skd_grad_from_probs, softmax_into,
    SkdConfig, SoftTargetPair,
};
use crate::rng::derive_seed;

/// Ramp weight for the given 1-based iteration.
pub fn alpha_for(iteration: u64, config: &SkdConfig) -> f64 {
    if iteration <= config.warmup_k {
        return 0.0;
    }
    ((iteration - config.warmup_k) as f64 * config.eta).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.1,
            OptimizerKind::Adam => 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Global-norm clipping threshold.
    pub clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            clip_norm: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..OptimizerConfig::sgd(learning_rate)
        }
    }

    pub fn with_clip_norm(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SkdError::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(SkdError::Config(format!("clip_norm must be > 0, got {c}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SkdError::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(SkdError::Config("adam epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Scales `grads` by `min(1, clip_norm / |g|)`; returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, clip_norm: Option<f64>) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if let Some(limit) = clip_norm {
        if norm > limit {
            grads.scale(limit / norm);
        }
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    moments: Option<(ModelParams, ModelParams)>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            moments: None,
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Clips, then applies one update. Returns the pre-clip gradient norm.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &mut Gradients) -> f64 {
        let norm = clip_gradients(grads, self.config.clip_norm);
        self.steps += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => params.add_scaled(-lr, grads),
            OptimizerKind::Adam => {
                let OptimizerConfig {
                    beta1,
                    beta2,
                    epsilon,
                    ..
                } = self.config;
                let (m, v) = self.moments.get_or_insert_with(|| {
                    let zero = ModelParams::zeros(params.dims());
                    (zero.clone(), zero)
                });
                let c1 = 1.0 - beta1.powi(self.steps as i32);
                let c2 = 1.0 - beta2.powi(self.steps as i32);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut());
                for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
                    for k in 0..p.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + epsilon);
                    }
                }
            }
        }
        norm
    }
}

/// Mutable training state carried between batches.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Batches completed so far.
    pub iteration: u64,
    /// Ramp weight used by the most recent batch.
    pub alpha: f64,
    /// Base seed for the noise streams.
    pub seed: u64,
    /// Hidden state of each stream, carried from one window to the next.
    pub carry: Vec<HiddenState>,
}

impl TrainState {
    pub fn new(seed: u64, streams: usize, hidden: usize) -> Self {
        TrainState {
            iteration: 0,
            alpha: 0.0,
            seed,
            carry: vec![HiddenState::zeros(hidden); streams],
        }
    }

    pub fn reset_carry(&mut self) {
        for s in &mut self.carry {
            s.h.fill(0.0);
            s.c.fill(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub iteration: u64,
    pub alpha: f64,
    /// Mean objective over the batch's positions.
    pub loss: f64,
    /// Mean plain cross-entropy over the same positions.
    pub ce_loss: f64,
    pub qn_raw_mean: f64,
    pub qn_clipped_mean: f64,
    /// Share of positions whose prediction already equals the target.
    pub correct_fraction: f64,
    pub positions: usize,
    pub grad_norm: f64,
}

/// Seed of the noise added to stream `stream` during `iteration`.
pub fn noise_seed(base: u64, iteration: u64, stream: usize) -> u64 {
    derive_seed(derive_seed(base, iteration), stream as u64)
}

/// One forward/backward pass over `batch` and one optimizer update.
pub fn train_step(
    model: &mut ModelParams,
    batch: &Batch,
    state: &mut TrainState,
    skd: &SkdConfig,
    optimizer: &mut Optimizer,
) -> Result<StepMetrics> {
    let dims = model.dims();
    let streams = batch.streams();
    let window = batch.window();
    if state.carry.len() != streams {
        return Err(SkdError::domain(format!(
            "train state carries {} streams, batch has {streams}",
            state.carry.len()
        )));
    }
    let iteration = state.iteration + 1;
    let alpha = alpha_for(iteration, skd);
    let positions = streams * window;
    let scale = 1.0 / positions as f64;

    let mut grads = ModelParams::zeros(dims);
    let mut probs = vec![0.0; dims.vocab];
    let (mut loss_sum, mut ce_sum, mut raw_sum, mut clipped_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut correct = 0usize;

    for b in 0..streams {
        let inputs = batch.stream_inputs(b);
        let targets = batch.stream_targets(b);
        if let Some(&bad) = inputs.iter().chain(&targets).find(|&&t| t >= dims.vocab) {
            return Err(SkdError::domain(format!(
                "batch {iteration} holds token {bad} outside vocabulary of {}",
                dims.vocab
            )));
        }

        let lookups = Array2::from_shape_fn((window, dims.embed_in), |(t, k)| {
            model.input_embeddings[[inputs[t], k]]
        });
        let lookups = inject_noise(
            &lookups,
            NoiseSpec {
                std: skd.noise_std,
                seed: noise_seed(state.seed, iteration, b),
            },
        );

        let mut hidden = state.carry[b].clone();
        let mut caches = Vec::with_capacity(window);
        let mut logit_grads = Vec::with_capacity(window);
        for t in 0..window {
            let (logits, next, cache) =
                forward_step_with_input(model, inputs[t], lookups.row(t).to_owned(), &hidden)?;
            softmax_into(logits.values().as_slice().unwrap(), &mut probs);
            let target = targets[t];
            let predicted = argmax(&probs);
            let distance = model.output.pair_distance(target, predicted)?;
            let raw = raw_q_n_from_distance(distance, skd.sigma)?;
            let pair = SoftTargetPair {
                target,
                predicted,
                q_n: clip_q_n(raw),
            };
            let ln_p_t = floored_ln(probs[target]);
            let breakdown = combine(ln_p_t, floored_ln(probs[predicted]), &pair, alpha, skd.lambda);
            if !breakdown.total.is_finite() {
                return Err(SkdError::NonFiniteLoss {
                    batch: iteration,
                    position: b * window + t,
                    value: breakdown.total,
                });
            }
            loss_sum += breakdown.total;
            ce_sum -= ln_p_t;
            raw_sum += raw;
            clipped_sum += pair.q_n;
            correct += usize::from(predicted == target);

            let mut dz = Array1::zeros(dims.vocab);
            skd_grad_from_probs(&probs, &pair, alpha, skd.lambda, dz.as_slice_mut().unwrap());
            dz.mapv_inplace(|g| g * scale);
            logit_grads.push(dz);
            caches.push(cache);
            hidden = next;
        }
        backward_sequence_into(model, &inputs, &logit_grads, &caches, &mut grads)?;
        state.carry[b] = hidden;
    }

    let grad_norm = optimizer.apply(model, &mut grads);
    state.iteration = iteration;
    state.alpha = alpha;
    Ok(StepMetrics {
        iteration,
        alpha,
        loss: loss_sum * scale,
        ce_loss: ce_sum * scale,
        qn_raw_mean: raw_sum * scale,
        qn_clipped_mean: clipped_sum * scale,
        correct_fraction: correct as f64 * scale,
        positions,
        grad_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub skd: SkdConfig,
    pub batch_size: usize,
    pub window: usize,
    /// Batches between metrics rows.
    pub log_interval: u64,
    /// Stop after this many rows without a new best validation NLL.
    pub patience: Option<usize>,
    pub seed: u64,
}

/// One logged row; field order matches the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub alpha: f64,
    pub qn_raw_mean: f64,
    pub qn_clipped_mean: f64,
    pub train_loss: f64,
    /// Per-token validation NLL; NaN when there is no validation split.
    pub valid_nll: f64,
}

pub const METRICS_HEADER: [&str; 6] = [
    "iteration",
    "alpha",
    "qn_raw_mean",
    "qn_clipped_mean",
    "train_loss",
    "valid_nll",
];

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub rows: Vec<MetricsRow>,
    pub iterations: u64,
    pub stopped_early: bool,
}

#[derive(Default)]
struct Interval {
    steps: u64,
    loss: f64,
    raw: f64,
    clipped: f64,
}

impl Interval {
    fn add(&mut self, m: &StepMetrics) {
        self.steps += 1;
        self.loss += m.loss;
        self.raw += m.qn_raw_mean;
        self.clipped += m.qn_clipped_mean;
    }

    fn row(&self, iteration: u64, alpha: f64, valid_nll: f64) -> MetricsRow {
        let n = self.steps as f64;
        MetricsRow {
            iteration,
            alpha,
            qn_raw_mean: self.raw / n,
            qn_clipped_mean: self.clipped / n,
            train_loss: self.loss / n,
            valid_nll,
        }
    }
}

/// Runs up to `epochs` passes over the training split, logging a row every
/// `log_interval` batches and once more at the end. The hidden state of each
/// stream is reset at the start of every epoch.
pub fn train(
    model: &mut ModelParams,
    corpus: &Corpus,
    config: &TrainConfig,
    optimizer: &mut Optimizer,
    epochs: usize,
) -> Result<TrainHistory> {
    config.skd.validate()?;
    if config.log_interval == 0 {
        return Err(SkdError::Config("log_interval must be at least 1".into()));
    }
    let mut history = TrainHistory::default();
    if epochs == 0 {
        return Ok(history);
    }
    if corpus.train.is_empty() {
        return Err(SkdError::domain("training split is empty"));
    }
    corpus.check_ids(model.dims().vocab)?;
    let batches = batchify(&corpus.train, config.batch_size, config.window)?;
    if batches.is_empty() {
        return Err(SkdError::domain(format!(
            "training split of {} tokens yields no complete {}x{} batch",
            corpus.train.len(),
            config.window,
            config.batch_size
        )));
    }

    let validate = |model: &ModelParams| -> Result<f64> {
        if corpus.valid.is_empty() {
            Ok(f64::NAN)
        } else {
            eval_nll(model, &corpus.valid).map(|r| r.token_nll)
        }
    };

    let mut state = TrainState::new(config.seed, config.batch_size, model.dims().hidden);
    let mut interval = Interval::default();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    'epochs: for _ in 0..epochs {
        state.reset_carry();
        for batch in &batches {
            let metrics = train_step(model, batch, &mut state, &config.skd, optimizer)?;
            interval.add(&metrics);
            if state.iteration % config.log_interval == 0 {
                let valid = validate(model)?;
                history.rows.push(interval.row(state.iteration, state.alpha, valid));
                interval = Interval::default();
                if let Some(patience) = config.patience {
                    if valid < best {
                        best = valid;
                        stale = 0;
                    } else if valid.is_finite() {
                        stale += 1;
                        if stale >= patience {
                            history.stopped_early = true;
                            break 'epochs;
                        }
                    }
                }
            }
        }
    }
    if interval.steps > 0 {
        let valid = validate(model)?;
        history.rows.push(interval.row(state.iteration, state.alpha, valid));
    }
    history.iterations = state.iteration;
    Ok(history)
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(METRICS_HEADER)?;
    for r in rows {
        writer.write_record([
            r.iteration.to_string(),
            r.alpha.to_string(),
            r.qn_raw_mean.to_string(),
            r.qn_clipped_mean.to_string(),
            r.train_loss.to_string(),
            r.valid_nll.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| SkdError::io("<metrics>", e))?;
    Ok(())
}

pub fn save_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| SkdError::io(path, e))?;
    write_metrics_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(SkdError::domain(format!(
            "{}: unexpected metrics header",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(SkdError::from))
        .collect()
}
