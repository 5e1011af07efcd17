//! Self-knowledge distillation for neural language models.
//!
//! The model's own output-embedding geometry supplies a soft target for
//! its current prediction: when the model predicts `n` for gold word `t`,
//! `n` receives target mass `q_n = min(exp(-sigma |w_t - w_n|), 0.5)` and
//! `t` keeps the rest. The weight of that term ramps up after a
//! cross-entropy warmup.
//!
//! Modules, bottom-up:
//! - [`objectives`]: softmax, cross-entropy, soft targets and the loss.
//! - [`embedding`]: the output projection and noise injection.
//! - [`network`]: LSTM language model with manual BPTT.
//! - [`training`]: the warmup/ramp schedule, optimizers and the loop.
//! - [`data`], [`eval`], [`checkpoint`], [`config`], [`run`]: corpus
//!   handling, NLL evaluation and run plumbing.
//! - [`gradcheck`]: finite-difference verification harness.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod network;
pub mod objectives;
pub mod rng;
pub mod run;
pub mod synthetic;
pub mod training;

pub use config::{Objective, RunConfig};
pub use data::{batchify, build_vocab, decode, encode, Batch, Corpus, Vocabulary, EOS, EOS_ID, UNK, UNK_ID};
pub use embedding::{inject_noise, EmbeddingMatrix, NoiseSpec};
pub use error::{Result, SkdError};
pub use eval::{eval_nll, eval_nll_chunked, NllReport};
pub use network::{
    backward_sequence, forward_sequence, forward_step, init_params, Gradients, HiddenState, ModelDims, ModelParams,
    StepCache,
};
pub use objectives::{
    compute_q_n, cross_entropy, full_soft_targets, kd_reference_loss, skd_loss, skd_loss_grad_logits,
    softmax, LogitVector, LossBreakdown, ProbVector, SkdConfig, SoftTargetPair,
};
pub use training::{
    alpha_for, train, train_step, MetricsRow, Optimizer, OptimizerConfig, OptimizerKind, StepMetrics,
    TrainConfig, TrainHistory, TrainState,
};
