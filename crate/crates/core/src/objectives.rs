//! Softmax, cross-entropy and the self-distillation objective.
//!
//! The training objective for one target position is
//!
//! ```text
//! J = -(1 - a*l*q_n) * ln p_t - a*l*q_n * ln p_n
//! q_n = min(exp(-sigma * |w_t - w_n|_2), 0.5)
//! ```
//!
//! where `t` is the gold class, `n` the model's current prediction, `w_k`
//! rows of the output projection, `a` the warmup ramp and `l` the
//! distillation weight. `q_n` is a constant with respect to the parameters.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Result, SkdError};

/// Probabilities are floored here before taking logs on the training path.
pub const PROB_FLOOR: f64 = 1e-12;

/// Largest value `q_n` may take; the predicted class never outweighs the target.
pub const QN_CLIP: f64 = 0.5;

const PROB_SUM_TOL: f64 = 1e-9;

/// Unnormalized scores over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Array1<f64>);

impl LogitVector {
    pub fn new(values: impl Into<Array1<f64>>) -> Result<Self> {
        let values = values.into();
        if values.len() < 2 {
            return Err(SkdError::domain(format!(
                "logit vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SkdError::domain(format!("non-finite logit at index {i}")));
        }
        Ok(LogitVector(values))
    }

    /// Network output. Finite whenever the parameters are; non-finite
    /// parameters are left to surface as a non-finite loss.
    pub(crate) fn from_trusted(values: Array1<f64>) -> Self {
        LogitVector(values)
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// A categorical distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Array1<f64>);

impl ProbVector {
    pub fn new(values: impl Into<Array1<f64>>) -> Result<Self> {
        let values = values.into();
        if values.len() < 2 {
            return Err(SkdError::domain("probability vector needs at least 2 entries"));
        }
        if let Some(i) = values
            .iter()
            .position(|p| !(0.0..=1.0).contains(p) || p.is_nan())
        {
            return Err(SkdError::domain(format!(
                "probability {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        let sum: f64 = values.sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(SkdError::domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbVector(values))
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.0.get(k).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(self.0.as_slice().expect("contiguous"))
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// Target class, predicted class and the clipped soft target of the
/// prediction. `q_t = 1 - q_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftTargetPair {
    pub target: usize,
    pub predicted: usize,
    pub q_n: f64,
}

impl SoftTargetPair {
    pub fn new(target: usize, predicted: usize, q_n: f64) -> Result<Self> {
        if !(q_n > 0.0 && q_n <= QN_CLIP) {
            return Err(SkdError::domain(format!("q_n = {q_n} outside (0, 0.5]")));
        }
        Ok(SoftTargetPair {
            target,
            predicted,
            q_n,
        })
    }

    /// Builds the pair from the output-embedding rows of `target` and `predicted`.
    pub fn from_embeddings(
        embeddings: &EmbeddingMatrix,
        target: usize,
        predicted: usize,
        sigma: f64,
    ) -> Result<Self> {
        let distance = embeddings.pair_distance(target, predicted)?;
        Ok(SoftTargetPair {
            target,
            predicted,
            q_n: clip_q_n(raw_q_n_from_distance(distance, sigma)?),
        })
    }

    pub fn q_t(&self) -> f64 {
        1.0 - self.q_n
    }

    fn check_bounds(&self, vocab: usize) -> Result<()> {
        if self.target >= vocab || self.predicted >= vocab {
            return Err(SkdError::domain(format!(
                "pair ({}, {}) out of range for vocabulary of {vocab}",
                self.target, self.predicted
            )));
        }
        Ok(())
    }
}

/// Objective hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkdConfig {
    /// Distance scale in `exp(-sigma * d)`.
    pub sigma: f64,
    /// Distillation weight; 1 gives the simplified objective.
    pub lambda: f64,
    /// Ramp increment per iteration once warmup is over.
    pub eta: f64,
    /// Iterations of pure cross-entropy before the ramp starts.
    pub warmup_k: u64,
    /// Std of the Gaussian noise added to input embedding lookups.
    pub noise_std: f64,
}

impl Default for SkdConfig {
    fn default() -> Self {
        SkdConfig {
            sigma: 0.1,
            lambda: 1.0,
            eta: 0.0002,
            warmup_k: 500,
            noise_std: 0.01,
        }
    }
}

impl SkdConfig {
    /// Settings under which training reduces to plain cross-entropy.
    pub fn cross_entropy_only() -> Self {
        SkdConfig {
            eta: 0.0,
            warmup_k: u64::MAX,
            noise_std: 0.0,
            ..SkdConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma, self.lambda, self.eta, self.noise_std]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SkdError::Config("objective settings must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(SkdError::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SkdError::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.eta < 0.0 {
            return Err(SkdError::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.noise_std < 0.0 {
            return Err(SkdError::Config(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Per-position loss and the pieces it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Weight on `-ln p_t`: `1 - a*l*q_n`.
    pub ce_coefficient: f64,
    /// Weight on `-ln p_n`: `a*l*q_n`.
    pub distill_coefficient: f64,
    pub q_n: f64,
    pub predicted_index: usize,
    pub alpha: f64,
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub fn softmax(z: &LogitVector) -> ProbVector {
    let z = z.0.as_slice().expect("contiguous");
    let mut out = Array1::zeros(z.len());
    softmax_into(z, out.as_slice_mut().expect("contiguous"));
    ProbVector(out)
}

fn strict_ln(p: &ProbVector, k: usize) -> Result<f64> {
    match p.get(k) {
        None => Err(SkdError::domain(format!(
            "class {k} out of range for vocabulary of {}",
            p.len()
        ))),
        Some(pk) if pk <= 0.0 => Err(SkdError::InfiniteLoss { index: k }),
        Some(pk) => Ok(pk.ln()),
    }
}

/// `ln max(p, PROB_FLOOR)`.
pub fn floored_ln(p: f64) -> f64 {
    // `f64::max` would turn NaN into the floor
    if p < PROB_FLOOR {
        PROB_FLOOR.ln()
    } else {
        p.ln()
    }
}

/// `-ln p_t` in nats.
pub fn cross_entropy(p: &ProbVector, target: usize) -> Result<f64> {
    Ok(-strict_ln(p, target)?)
}

/// `exp(-sigma * d)` before clipping.
pub fn raw_q_n_from_distance(distance: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SkdError::domain(format!("sigma must be finite and > 0, got {sigma}")));
    }
    Ok((-sigma * distance).exp())
}

pub fn clip_q_n(raw: f64) -> f64 {
    raw.min(QN_CLIP)
}

pub(crate) fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SkdError::domain(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Unclipped `exp(-sigma * |w_t - w_n|_2)`.
pub fn compute_raw_q_n(
    w_t: ArrayView1<'_, f64>,
    w_n: ArrayView1<'_, f64>,
    sigma: f64,
) -> Result<f64> {
    if w_t.iter().chain(w_n.iter()).any(|v| !v.is_finite()) {
        return Err(SkdError::domain("embedding vectors must be finite"));
    }
    raw_q_n_from_distance(euclidean(w_t, w_n)?, sigma)
}

/// `min(exp(-sigma * |w_t - w_n|_2), 0.5)`, always in `(0, 0.5]`.
pub fn compute_q_n(w_t: ArrayView1<'_, f64>, w_n: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    compute_raw_q_n(w_t, w_n, sigma).map(clip_q_n)
}

/// Distance-based soft targets over every class:
/// `q_k ∝ exp(-sigma * |w_t - w_k|_2)`.
///
/// Costs O(V·D) per target, which is why training only ever uses the
/// two-class pair. Kept as a reference for tests.
pub fn full_soft_targets(embeddings: &EmbeddingMatrix, target: usize, sigma: f64) -> Result<ProbVector> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SkdError::domain(format!("sigma must be finite and > 0, got {sigma}")));
    }
    let vocab = embeddings.vocab_size();
    if target >= vocab {
        return Err(SkdError::domain(format!(
            "target {target} out of range for vocabulary of {vocab}"
        )));
    }
    // The self-distance is 0, so every exponent is <= 0 and the target's weight is 1.
    let mut weights = Array1::zeros(vocab);
    for k in 0..vocab {
        weights[k] = (-sigma * embeddings.pair_distance(target, k)?).exp();
    }
    let z = weights.sum();
    weights.mapv_inplace(|w| w / z);
    Ok(ProbVector(weights))
}

/// Classic distillation loss `-(1-l) ln p_t - l Σ_k q_k ln p_k`.
pub fn kd_reference_loss(p: &ProbVector, q: &ProbVector, target: usize, lambda: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(SkdError::domain(format!(
            "length mismatch: p has {}, q has {}",
            p.len(),
            q.len()
        )));
    }
    let mut soft = 0.0;
    for (k, &qk) in q.0.iter().enumerate() {
        if qk > 0.0 {
            soft -= qk * strict_ln(p, k)?;
        }
    }
    let hard = if lambda < 1.0 {
        -strict_ln(p, target)?
    } else {
        0.0
    };
    Ok((1.0 - lambda) * hard + lambda * soft)
}

fn coefficients(pair: &SoftTargetPair, alpha: f64, lambda: f64) -> (f64, f64) {
    let distill = alpha * lambda * pair.q_n;
    (1.0 - distill, distill)
}

fn check_schedule(alpha: f64, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SkdError::domain(format!("alpha = {alpha} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SkdError::domain(format!("lambda = {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Assembles the loss from precomputed `ln p_t` and `ln p_n`.
pub(crate) fn combine(
    ln_p_t: f64,
    ln_p_n: f64,
    pair: &SoftTargetPair,
    alpha: f64,
    lambda: f64,
) -> LossBreakdown {
    let (ce_coefficient, distill_coefficient) = coefficients(pair, alpha, lambda);
    let total = if pair.predicted == pair.target {
        -ln_p_t
    } else {
        -ce_coefficient * ln_p_t - distill_coefficient * ln_p_n
    };
    LossBreakdown {
        total,
        ce_coefficient,
        distill_coefficient,
        q_n: pair.q_n,
        predicted_index: pair.predicted,
        alpha,
    }
}

/// Self-distillation loss for one position.
pub fn skd_loss(p: &ProbVector, pair: &SoftTargetPair, alpha: f64, lambda: f64) -> Result<LossBreakdown> {
    check_schedule(alpha, lambda)?;
    pair.check_bounds(p.len())?;
    let ln_p_t = strict_ln(p, pair.target)?;
    let ln_p_n = strict_ln(p, pair.predicted)?;
    Ok(combine(ln_p_t, ln_p_n, pair, alpha, lambda))
}

/// Writes `p - y'` into `grad`, where `y'` puts `1 - a*l*q_n` on the target
/// and `a*l*q_n` on the prediction. `q_n` is held constant.
pub(crate) fn skd_grad_from_probs(
    probs: &[f64],
    pair: &SoftTargetPair,
    alpha: f64,
    lambda: f64,
    grad: &mut [f64],
) {
    grad.copy_from_slice(probs);
    if pair.predicted == pair.target {
        grad[pair.target] -= 1.0;
    } else {
        let (ce, distill) = coefficients(pair, alpha, lambda);
        grad[pair.target] -= ce;
        grad[pair.predicted] -= distill;
    }
}

/// Gradient of [`skd_loss`] with respect to the logits.
pub fn skd_loss_grad_logits(
    z: &LogitVector,
    pair: &SoftTargetPair,
    alpha: f64,
    lambda: f64,
) -> Result<Array1<f64>> {
    check_schedule(alpha, lambda)?;
    pair.check_bounds(z.len())?;
    let p = softmax(z);
    let mut grad = Array1::zeros(z.len());
    skd_grad_from_probs(
        p.0.as_slice().expect("contiguous"),
        pair,
        alpha,
        lambda,
        grad.as_slice_mut().expect("contiguous"),
    );
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn probs(v: &[f64]) -> ProbVector {
        ProbVector::new(Array1::from(v.to_vec())).unwrap()
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&LogitVector::new(array![0.0, 0.0, 0.0]).unwrap());
        for &v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&LogitVector::new(array![1000.0, 0.0, 0.0]).unwrap());
        assert!((p.values()[0] - 1.0).abs() < 1e-12);
        assert!(p.values()[1] < 1e-300 || p.values()[1] == 0.0);
        assert!(p.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        // mpmath, 30 digits
        let p = softmax(&LogitVector::new(array![1.0, 2.0, 3.0]).unwrap());
        let expected = [0.090_030_573_170_380_46, 0.244_728_471_054_797_65, 0.665_240_955_774_821_9];
        for (a, b) in p.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn logits_reject_non_finite() {
        assert!(LogitVector::new(array![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(array![f64::INFINITY, 0.0]).is_err());
        assert!(LogitVector::new(array![1.0]).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&probs(&[1.0, 0.0, 0.0]), 0).unwrap(), 0.0);
        let u = probs(&[0.25; 4]);
        for t in 0..4 {
            assert!((cross_entropy(&u, t).unwrap() - 4f64.ln()).abs() < 1e-15);
        }
        let ce = cross_entropy(&probs(&[0.6, 0.2, 0.2]), 1).unwrap();
        assert!((ce - 1.609_437_912_434_100_4).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_of_zero_probability_is_an_error() {
        let err = cross_entropy(&probs(&[1.0, 0.0, 0.0]), 2).unwrap_err();
        assert!(matches!(err, SkdError::InfiniteLoss { index: 2 }));
    }

    #[test]
    fn q_n_clips_at_zero_distance() {
        let w = array![0.3, -1.2];
        assert_eq!(compute_q_n(w.view(), w.view(), 0.1).unwrap(), 0.5);
    }

    #[test]
    fn q_n_at_clip_boundary() {
        let sigma = 0.1;
        let d = 2f64.ln() / sigma;
        let q = compute_q_n(array![0.0].view(), array![d].view(), sigma).unwrap();
        assert!((q - 0.5).abs() < 1e-15);
    }

    #[test]
    fn q_n_at_distance_twenty() {
        let q = compute_q_n(array![0.0, 0.0].view(), array![12.0, 16.0].view(), 0.1).unwrap();
        assert!((q - 0.135_335_283_236_612_7).abs() < 1e-12);
    }

    #[test]
    fn q_n_rejects_mismatched_dims() {
        assert!(compute_q_n(array![0.0, 1.0].view(), array![0.0].view(), 0.1).is_err());
        assert!(compute_q_n(array![0.0].view(), array![0.0].view(), 0.0).is_err());
    }

    #[test]
    fn full_soft_targets_uniform_for_identical_rows() {
        let w = EmbeddingMatrix::new(ndarray::Array2::ones((5, 3)), Array1::zeros(5)).unwrap();
        let q = full_soft_targets(&w, 2, 0.7).unwrap();
        for &v in q.values() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn full_soft_targets_three_classes() {
        // rows at distance 0, 1, 2 from the target
        let w = EmbeddingMatrix::new(array![[0.0], [1.0], [2.0]], Array1::zeros(3)).unwrap();
        let q = full_soft_targets(&w, 0, 1.0).unwrap();
        let expected = [0.665_240_955_774_821_9, 0.244_728_471_054_797_65, 0.090_030_573_170_380_46];
        for (a, b) in q.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kd_reference_degenerate_cases() {
        let p = probs(&[0.6, 0.2, 0.2]);
        let ce = cross_entropy(&p, 1).unwrap();
        let q = probs(&[0.1, 0.3, 0.6]);
        assert!((kd_reference_loss(&p, &q, 1, 0.0).unwrap() - ce).abs() < 1e-15);
        let hard = probs(&[0.0, 1.0, 0.0]);
        for lambda in [0.0, 0.3, 1.0] {
            assert!((kd_reference_loss(&p, &hard, 1, lambda).unwrap() - ce).abs() < 1e-15);
        }
    }

    #[test]
    fn kd_reference_two_class_value() {
        let p = probs(&[0.6, 0.2, 0.2]);
        let q = probs(&[0.5, 0.5, 0.0]);
        let loss = kd_reference_loss(&p, &q, 0, 1.0).unwrap();
        assert!((loss - 1.060_131_768_100_045_5).abs() < 1e-12);
    }

    #[test]
    fn kd_reference_rejects_zero_support() {
        let p = probs(&[0.5, 0.5, 0.0]);
        let q = probs(&[0.4, 0.3, 0.3]);
        assert!(matches!(
            kd_reference_loss(&p, &q, 0, 1.0),
            Err(SkdError::InfiniteLoss { index: 2 })
        ));
    }

    #[test]
    fn skd_loss_zero_alpha_is_cross_entropy() {
        let p = probs(&[0.6, 0.2, 0.2]);
        let pair = SoftTargetPair::new(0, 2, 0.4).unwrap();
        let b = skd_loss(&p, &pair, 0.0, 1.0).unwrap();
        assert_eq!(b.total, cross_entropy(&p, 0).unwrap());
        assert_eq!(b.ce_coefficient, 1.0);
        assert_eq!(b.distill_coefficient, 0.0);
    }

    #[test]
    fn skd_loss_collapses_when_prediction_is_correct() {
        let p = probs(&[0.3, 0.7]);
        let pair = SoftTargetPair::new(0, 0, 0.5).unwrap();
        let b = skd_loss(&p, &pair, 1.0, 1.0).unwrap();
        assert_eq!(b.total, -(0.3f64.ln()));
        assert!((b.total - 1.203_972_804_325_936).abs() < 1e-12);
        assert_eq!(b.ce_coefficient + b.distill_coefficient, 1.0);
    }

    #[test]
    fn skd_loss_matches_two_class_reference() {
        let p = probs(&[0.6, 0.2, 0.2]);
        let pair = SoftTargetPair::new(0, 1, 0.5).unwrap();
        let b = skd_loss(&p, &pair, 1.0, 1.0).unwrap();
        let q = probs(&[0.5, 0.5, 0.0]);
        assert!((b.total - 1.060_131_768_100_045_5).abs() < 1e-12);
        assert!((b.total - kd_reference_loss(&p, &q, 0, 1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn skd_loss_errors() {
        let p = probs(&[0.5, 0.5, 0.0]);
        let pair = SoftTargetPair::new(0, 2, 0.2).unwrap();
        assert!(matches!(
            skd_loss(&p, &pair, 0.5, 1.0),
            Err(SkdError::InfiniteLoss { index: 2 })
        ));
        let ok = SoftTargetPair::new(0, 1, 0.2).unwrap();
        assert!(skd_loss(&p, &ok, 1.5, 1.0).is_err());
        let oob = SoftTargetPair::new(0, 7, 0.2).unwrap();
        assert!(skd_loss(&p, &oob, 0.5, 1.0).is_err());
    }

    #[test]
    fn soft_target_pair_validates_q_n() {
        assert!(SoftTargetPair::new(0, 1, 0.0).is_err());
        assert!(SoftTargetPair::new(0, 1, 0.51).is_err());
        let pair = SoftTargetPair::new(0, 1, 0.3).unwrap();
        assert_eq!(pair.q_n + pair.q_t(), 1.0);
    }

    #[test]
    fn gradient_with_zero_alpha_is_ce_gradient() {
        let z = LogitVector::new(array![0.5, -1.0, 2.0, 0.0]).unwrap();
        let pair = SoftTargetPair::new(1, 2, 0.4).unwrap();
        let g = skd_loss_grad_logits(&z, &pair, 0.0, 1.0).unwrap();
        let mut expected = softmax(&z).into_inner();
        expected[1] -= 1.0;
        assert_eq!(g, expected);
        assert!(g.sum().abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn config_validation() {
        SkdConfig::default().validate().unwrap();
        let bad = SkdConfig {
            sigma: 0.0,
            ..SkdConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SkdConfig {
            lambda: 1.5,
            ..SkdConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
