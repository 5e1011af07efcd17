//! Teacher-forced negative log-likelihood.

use serde::{Deserialize, Serialize};

use crate::data::EOS_ID;
use crate::error::{Result, SkdError};
use crate::network::{forward_step, HiddenState, ModelParams};
use crate::objectives::{floored_ln, softmax_into};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    /// Mean over sentences of the summed `-ln p` of each sentence's tokens,
    /// `<EOS>` included.
    pub sentence_nll: f64,
    /// Mean `-ln p` per predicted token.
    pub token_nll: f64,
    pub perplexity: f64,
    pub sentences: usize,
    pub tokens: usize,
}

/// Scores every token of `ids` in order, carrying the hidden state across
/// the whole split. The first token is conditioned on an `<EOS>` input, so
/// each sentence is predicted from the end of the previous one.
pub fn eval_nll(model: &ModelParams, ids: &[usize]) -> Result<NllReport> {
    eval_nll_chunked(model, ids, ids.len().max(1))
}

/// Same computation, driven in windows of `chunk` tokens with the state
/// handed from one window to the next.
pub fn eval_nll_chunked(model: &ModelParams, ids: &[usize], chunk: usize) -> Result<NllReport> {
    if ids.is_empty() {
        return Err(SkdError::domain("cannot evaluate an empty split"));
    }
    if chunk == 0 {
        return Err(SkdError::domain("chunk size must be at least 1"));
    }
    let vocab = model.dims().vocab;
    let mut probs = vec![0.0; vocab];
    let mut state = HiddenState::zeros(model.dims().hidden);
    let mut prev = EOS_ID;

    let mut total = 0.0;
    let mut sentence_sums = Vec::new();
    let mut current = 0.0;
    let mut open = false;

    for window in ids.chunks(chunk) {
        let mut carried = state;
        for &target in window {
            let (logits, next, _) = forward_step(model, prev, &carried)?;
            softmax_into(logits.values().as_slice().unwrap(), &mut probs);
            if target >= vocab {
                return Err(SkdError::domain(format!(
                    "token {target} out of range for vocabulary of {vocab}"
                )));
            }
            let nll = -floored_ln(probs[target]);
            total += nll;
            current += nll;
            open = true;
            if target == EOS_ID {
                sentence_sums.push(current);
                current = 0.0;
                open = false;
            }
            carried = next;
            prev = target;
        }
        state = carried;
    }
    if open {
        sentence_sums.push(current);
    }

    let tokens = ids.len();
    let token_nll = total / tokens as f64;
    let sentence_nll = sentence_sums.iter().sum::<f64>() / sentence_sums.len() as f64;
    Ok(NllReport {
        sentence_nll,
        token_nll,
        perplexity: token_nll.exp(),
        sentences: sentence_sums.len(),
        tokens,
    })
}
