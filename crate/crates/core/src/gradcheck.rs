//! Finite-difference verification of the network gradients under the
//! cross-entropy and self-distillation objectives.

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Result, SkdError};
use crate::network::{
    backward_sequence, forward_sequence, init_params, HiddenState, ModelDims, ModelParams,
};
use crate::objectives::{
    clip_q_n, raw_q_n_from_distance, skd_loss_grad_logits, softmax, SoftTargetPair,
};
use crate::rng::{derive_seed, seeded, symmetric_uniform};

/// Step of the five-point stencil. Its truncation error is `O(h^4)`, so a
/// wide step keeps cancellation error small on tiny gradient entries.
pub const DEFAULT_STEP: f64 = 1e-3;
/// How many times the step is divided by ten when a stencil point lands on
/// the other side of a ReLU kink.
const MAX_STEP_REDUCTIONS: u32 = 4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Denominator floor for relative errors of near-zero gradient entries.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Test hook that breaks the analytic gradient on purpose.
#[derive(Debug, Clone, PartialEq)]
pub enum Corruption {
    /// Adds 1e-3 to the first gradient entry of the named tensor.
    Parameter(String),
    /// Doubles the distillation weight on the predicted class.
    DistillTerm,
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub dims: ModelDims,
    pub seed: u64,
    pub sequence_len: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub alphas: Vec<f64>,
    pub step: f64,
    pub tolerance: f64,
    pub corruption: Option<Corruption>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            dims: ModelDims {
                vocab: 12,
                embed_in: 5,
                hidden: 6,
                embed_out: 4,
            },
            seed: 2018,
            sequence_len: 12,
            sigma: 0.1,
            lambda: 1.0,
            alphas: vec![0.0, 0.5, 1.0],
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            corruption: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub objective: String,
    pub alpha: f64,
    pub max_rel_error: f64,
    pub worst_parameter: &'static str,
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub cases: Vec<CaseReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CaseReport> {
        self.cases
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Exact summed loss over a window with fixed soft-target pairs, using
/// log-softmax so nothing is floored.
pub fn sequence_loss(
    params: &ModelParams,
    tokens: &[usize],
    pairs: &[SoftTargetPair],
    state: &HiddenState,
    alpha: f64,
    lambda: f64,
) -> Result<f64> {
    sequence_loss_and_pattern(params, tokens, pairs, state, alpha, lambda).map(|(loss, _)| loss)
}

/// The loss together with the sign pattern of every ReLU input; the loss
/// is smooth only while the pattern stays fixed.
fn sequence_loss_and_pattern(
    params: &ModelParams,
    tokens: &[usize],
    pairs: &[SoftTargetPair],
    state: &HiddenState,
    alpha: f64,
    lambda: f64,
) -> Result<(f64, Vec<bool>)> {
    let (logits, caches, _) = forward_sequence(params, tokens, state)?;
    let pattern = caches
        .iter()
        .flat_map(|c| c.ff_pre.iter().map(|&v| v > 0.0))
        .collect();
    let loss = logits
        .iter()
        .zip(pairs)
        .map(|(z, pair)| {
            let z = z.values();
            let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let ln_t = z[pair.target] - lse;
            let ln_n = z[pair.predicted] - lse;
            if pair.predicted == pair.target {
                -ln_t
            } else {
                let w = alpha * lambda * pair.q_n;
                -(1.0 - w) * ln_t - w * ln_n
            }
        })
        .sum();
    Ok((loss, pattern))
}

/// A small randomized problem: parameters, incoming state, tokens, targets.
pub struct Problem {
    pub params: ModelParams,
    pub state: HiddenState,
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Problem {
    pub fn random(dims: ModelDims, seed: u64, len: usize) -> Result<Self> {
        let mut params = init_params(dims, seed)?;
        // Non-zero biases so every tensor receives a generic gradient.
        let mut rng = seeded(derive_seed(seed, 101));
        for b in [&mut params.lstm.bias, &mut params.ff.bias, &mut params.output.bias] {
            b.iter_mut().for_each(|v| *v += symmetric_uniform(&mut rng, 0.5));
        }
        let hidden = dims.hidden;
        let state = HiddenState {
            h: Array1::from_shape_fn(hidden, |_| symmetric_uniform(&mut rng, 0.5)),
            c: Array1::from_shape_fn(hidden, |_| symmetric_uniform(&mut rng, 1.0)),
        };
        let mut draw = |n: usize| -> Vec<usize> {
            (0..n)
                .map(|_| (crate::rng::unit_f64(&mut rng) * dims.vocab as f64) as usize)
                .collect()
        };
        let tokens = draw(len);
        let targets = draw(len);
        Ok(Problem {
            params,
            state,
            tokens,
            targets,
        })
    }

    /// Pairs from the current model: prediction by argmax, `q_n` from the
    /// output rows. With `cross_entropy` every pair collapses onto its target.
    pub fn pairs(&self, sigma: f64, cross_entropy: bool) -> Result<Vec<SoftTargetPair>> {
        let (logits, _, _) = forward_sequence(&self.params, &self.tokens, &self.state)?;
        logits
            .iter()
            .zip(&self.targets)
            .map(|(z, &target)| {
                let p = softmax(z);
                let predicted = if cross_entropy { target } else { p.argmax() };
                let d = self.params.output.pair_distance(target, predicted)?;
                Ok(SoftTargetPair {
                    target,
                    predicted,
                    q_n: clip_q_n(raw_q_n_from_distance(d, sigma)?),
                })
            })
            .collect()
    }

    pub fn analytic_gradients(
        &self,
        pairs: &[SoftTargetPair],
        alpha: f64,
        lambda: f64,
        corruption: Option<&Corruption>,
    ) -> Result<ModelParams> {
        let (logits, caches, _) = forward_sequence(&self.params, &self.tokens, &self.state)?;
        let logit_grads = logits
            .iter()
            .zip(pairs)
            .map(|(z, pair)| {
                let mut g = skd_loss_grad_logits(z, pair, alpha, lambda)?;
                if corruption == Some(&Corruption::DistillTerm) && pair.predicted != pair.target {
                    g[pair.predicted] -= alpha * lambda * pair.q_n;
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grads = backward_sequence(&self.params, &self.tokens, &logit_grads, &caches)?;
        if let Some(Corruption::Parameter(name)) = corruption {
            let (_, tensor) = grads
                .tensors_mut()
                .into_iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| SkdError::domain(format!("unknown parameter {name:?}")))?;
            tensor[0] += 1e-3;
        }
        Ok(grads)
    }
}

fn check_case(
    problem: &mut Problem,
    objective: &str,
    pairs: &[SoftTargetPair],
    alpha: f64,
    opts: &GradcheckOptions,
) -> Result<CaseReport> {
    let analytic = problem.analytic_gradients(pairs, alpha, opts.lambda, opts.corruption.as_ref())?;
    let mut report = CaseReport {
        objective: objective.to_owned(),
        alpha,
        max_rel_error: 0.0,
        worst_parameter: "",
        worst_index: 0,
        checked: 0,
    };
    let (_, base_pattern) = sequence_loss_and_pattern(
        &problem.params,
        &problem.tokens,
        pairs,
        &problem.state,
        alpha,
        opts.lambda,
    )?;
    let analytic = analytic.tensors().map(|(n, t)| (n, t.to_vec()));
    for (tensor_idx, (name, grad)) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let mut eval = |delta: f64| -> Result<(f64, bool)> {
                let (_, t) = &mut problem.params.tensors_mut()[tensor_idx];
                let original = t[k];
                t[k] = original + delta;
                let result = sequence_loss_and_pattern(
                    &problem.params,
                    &problem.tokens,
                    pairs,
                    &problem.state,
                    alpha,
                    opts.lambda,
                );
                let (_, t) = &mut problem.params.tensors_mut()[tensor_idx];
                t[k] = original;
                result.map(|(loss, pattern)| (loss, pattern == base_pattern))
            };
            let mut h = opts.step;
            let mut numeric = 0.0;
            for attempt in 0..=MAX_STEP_REDUCTIONS {
                let points = [eval(2.0 * h)?, eval(h)?, eval(-h)?, eval(-2.0 * h)?];
                numeric = (-points[0].0 + 8.0 * points[1].0 - 8.0 * points[2].0 + points[3].0) / (12.0 * h);
                if points.iter().all(|p| p.1) || attempt == MAX_STEP_REDUCTIONS {
                    break;
                }
                h /= 10.0;
            }
            let err = relative_error(grad[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst_parameter = name;
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

/// Checks every parameter entry under cross-entropy and under the
/// self-distillation objective at each requested alpha.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    opts.dims.validate()?;
    if opts.sequence_len == 0 {
        return Err(SkdError::domain("sequence length must be at least 1"));
    }
    let mut problem = Problem::random(opts.dims, opts.seed, opts.sequence_len)?;
    let mut cases = Vec::new();

    let ce_pairs = problem.pairs(opts.sigma, true)?;
    cases.push(check_case(&mut problem, "ce", &ce_pairs, 0.0, opts)?);

    let skd_pairs = problem.pairs(opts.sigma, false)?;
    for &alpha in &opts.alphas {
        cases.push(check_case(&mut problem, "skd", &skd_pairs, alpha, opts)?);
    }
    Ok(GradcheckReport {
        cases,
        tolerance: opts.tolerance,
    })
}
