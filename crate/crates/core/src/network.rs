//! Word-level LSTM language model: input lookup, one LSTM layer, one ReLU
//! feedforward layer, then the output projection. Gradients are computed by
//! hand with backpropagation through time over a window.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::embedding::{accumulate_outer, mat_t_vec, mat_vec, EmbeddingMatrix};
use crate::error::{Result, SkdError};
use crate::objectives::LogitVector;
use crate::rng::{derive_seed, seeded, symmetric_uniform};

/// Initial value of the forget-gate bias.
pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    /// Input lookup width.
    pub embed_in: usize,
    /// LSTM state width.
    pub hidden: usize,
    /// Width of the feedforward output and of the output embedding rows.
    pub embed_out: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.embed_in == 0 || self.hidden == 0 || self.embed_out == 0 {
            return Err(SkdError::domain(format!(
                "invalid model dimensions {self:?}: vocab >= 2 and all widths >= 1 required"
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let (v, e, h, d) = (self.vocab, self.embed_in, self.hidden, self.embed_out);
        v * e + 4 * h * (e + h + 1) + d * (h + 1) + v * (d + 1)
    }
}

/// Gate rows are stacked as `[input, forget, output, candidate]`, `H` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_input: Array2<f64>,
    pub w_recurrent: Array2<f64>,
    pub bias: Array1<f64>,
}

/// `r = relu(W h + b)`, mapping the LSTM state to the output embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable parameters. The same layout also carries gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_embeddings: Array2<f64>,
    pub lstm: LstmParams,
    pub ff: FeedForward,
    pub output: EmbeddingMatrix,
}

pub type Gradients = ModelParams;

pub const PARAM_NAMES: [&str; 8] = [
    "input_embeddings",
    "lstm.w_input",
    "lstm.w_recurrent",
    "lstm.bias",
    "ff.weights",
    "ff.bias",
    "output.weights",
    "output.bias",
];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            vocab: v,
            embed_in: e,
            hidden: h,
            embed_out: d,
        } = dims;
        ModelParams {
            input_embeddings: Array2::zeros((v, e)),
            lstm: LstmParams {
                w_input: Array2::zeros((4 * h, e)),
                w_recurrent: Array2::zeros((4 * h, h)),
                bias: Array1::zeros(4 * h),
            },
            ff: FeedForward {
                weights: Array2::zeros((d, h)),
                bias: Array1::zeros(d),
            },
            output: EmbeddingMatrix {
                weights: Array2::zeros((v, d)),
                bias: Array1::zeros(v),
            },
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.input_embeddings.nrows(),
            embed_in: self.input_embeddings.ncols(),
            hidden: self.lstm.w_recurrent.ncols(),
            embed_out: self.ff.weights.nrows(),
        }
    }

    /// Checks that every tensor agrees with the dimensions implied by the
    /// input embeddings and the recurrent matrix.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        dims.validate()?;
        let expected = ModelParams::zeros(dims);
        for ((name, a), (_, b)) in self.tensors().iter().zip(expected.tensors().iter()) {
            if a.len() != b.len() {
                return Err(SkdError::domain(format!(
                    "{name} has {} entries, expected {} for {dims:?}",
                    a.len(),
                    b.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(SkdError::domain(format!("{name} has non-finite entries")));
            }
        }
        if self.lstm.w_input.dim() != (4 * dims.hidden, dims.embed_in)
            || self.ff.weights.dim() != (dims.embed_out, dims.hidden)
            || self.output.weights.dim() != (dims.vocab, dims.embed_out)
        {
            return Err(SkdError::domain("parameter shapes are inconsistent"));
        }
        Ok(())
    }

    /// Named flat views in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 8] {
        [
            (PARAM_NAMES[0], self.input_embeddings.as_slice().unwrap()),
            (PARAM_NAMES[1], self.lstm.w_input.as_slice().unwrap()),
            (PARAM_NAMES[2], self.lstm.w_recurrent.as_slice().unwrap()),
            (PARAM_NAMES[3], self.lstm.bias.as_slice().unwrap()),
            (PARAM_NAMES[4], self.ff.weights.as_slice().unwrap()),
            (PARAM_NAMES[5], self.ff.bias.as_slice().unwrap()),
            (PARAM_NAMES[6], self.output.weights.as_slice().unwrap()),
            (PARAM_NAMES[7], self.output.bias.as_slice().unwrap()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        [
            (PARAM_NAMES[0], self.input_embeddings.as_slice_mut().unwrap()),
            (PARAM_NAMES[1], self.lstm.w_input.as_slice_mut().unwrap()),
            (PARAM_NAMES[2], self.lstm.w_recurrent.as_slice_mut().unwrap()),
            (PARAM_NAMES[3], self.lstm.bias.as_slice_mut().unwrap()),
            (PARAM_NAMES[4], self.ff.weights.as_slice_mut().unwrap()),
            (PARAM_NAMES[5], self.ff.bias.as_slice_mut().unwrap()),
            (PARAM_NAMES[6], self.output.weights.as_slice_mut().unwrap()),
            (PARAM_NAMES[7], self.output.bias.as_slice_mut().unwrap()),
        ]
    }

    pub fn fill(&mut self, value: f64) {
        for (_, t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn dot(&self, other: &ModelParams) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors().iter())
            .map(|((_, a), (_, b))| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &ModelParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += factor * y);
        }
    }
}

/// Deterministic initialization. Each tensor draws from its own stream,
/// uniform in `[-s, s)` with `s = 1/sqrt(fan_in)`: 1 for the lookup table,
/// `E + H` for both LSTM matrices, `H` for the feedforward layer and `D`
/// for the output projection. Biases start at 0 except the forget gate.
pub fn init_params(dims: ModelDims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut params = ModelParams::zeros(dims);
    let lstm_scale = 1.0 / ((dims.embed_in + dims.hidden) as f64).sqrt();
    let scales = [
        1.0,
        lstm_scale,
        lstm_scale,
        0.0,
        1.0 / (dims.hidden as f64).sqrt(),
        0.0,
        1.0 / (dims.embed_out as f64).sqrt(),
        0.0,
    ];
    for (i, ((_, tensor), scale)) in params.tensors_mut().into_iter().zip(scales).enumerate() {
        if scale == 0.0 {
            continue;
        }
        let mut rng = seeded(derive_seed(seed, i as u64));
        tensor
            .iter_mut()
            .for_each(|w| *w = symmetric_uniform(&mut rng, scale));
    }
    let h = dims.hidden;
    params.lstm.bias.slice_mut(s![h..2 * h]).fill(FORGET_BIAS_INIT);
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        HiddenState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

/// Everything one step needs to be differentiated later.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub token: usize,
    /// Input vector actually fed to the LSTM (lookup plus any noise).
    pub input: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    /// Activated gates in `[i, f, o, g]` order.
    pub gates: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
    pub ff_pre: Array1<f64>,
    pub ff_out: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_token(params: &ModelParams, token: usize) -> Result<()> {
    let vocab = params.input_embeddings.nrows();
    if token >= vocab {
        return Err(SkdError::domain(format!(
            "token {token} out of range for vocabulary of {vocab}"
        )));
    }
    Ok(())
}

pub fn forward_step(
    params: &ModelParams,
    token: usize,
    state: &HiddenState,
) -> Result<(LogitVector, HiddenState, StepCache)> {
    check_token(params, token)?;
    let input = params.input_embeddings.row(token).to_owned();
    Ok(forward_with_input(params, token, input, state))
}

/// Like [`forward_step`] but with an explicit input vector in place of the
/// lookup row; `token` still receives the input gradient.
pub fn forward_step_with_input(
    params: &ModelParams,
    token: usize,
    input: Array1<f64>,
    state: &HiddenState,
) -> Result<(LogitVector, HiddenState, StepCache)> {
    check_token(params, token)?;
    if input.len() != params.input_embeddings.ncols() {
        return Err(SkdError::domain(format!(
            "input has length {}, expected {}",
            input.len(),
            params.input_embeddings.ncols()
        )));
    }
    Ok(forward_with_input(params, token, input, state))
}

fn forward_with_input(
    params: &ModelParams,
    token: usize,
    input: Array1<f64>,
    state: &HiddenState,
) -> (LogitVector, HiddenState, StepCache) {
    let hidden = state.h.len();
    let mut gates = mat_vec(&params.lstm.w_input, input.view())
        + mat_vec(&params.lstm.w_recurrent, state.h.view())
        + &params.lstm.bias;
    gates
        .slice_mut(s![..3 * hidden])
        .mapv_inplace(sigmoid);
    gates.slice_mut(s![3 * hidden..]).mapv_inplace(f64::tanh);

    let i = gates.slice(s![..hidden]);
    let f = gates.slice(s![hidden..2 * hidden]);
    let o = gates.slice(s![2 * hidden..3 * hidden]);
    let g = gates.slice(s![3 * hidden..]);
    let c = &f * &state.c + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;

    let ff_pre = mat_vec(&params.ff.weights, h.view()) + &params.ff.bias;
    // written so that a NaN pre-activation stays NaN and reaches the loss check
    let ff_out = ff_pre.mapv(|v| if v < 0.0 { 0.0 } else { v });
    let logits = LogitVector::from_trusted(params.output.project_unchecked(ff_out.view()));

    let next = HiddenState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = StepCache {
        token,
        input,
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        c,
        tanh_c,
        h,
        ff_pre,
        ff_out,
    };
    (logits, next, cache)
}

/// Runs a whole window, returning per-step logits, caches and the final state.
pub fn forward_sequence(
    params: &ModelParams,
    tokens: &[usize],
    state: &HiddenState,
) -> Result<(Vec<LogitVector>, Vec<StepCache>, HiddenState)> {
    let mut logits = Vec::with_capacity(tokens.len());
    let mut caches = Vec::with_capacity(tokens.len());
    let mut state = state.clone();
    for &token in tokens {
        let (z, next, cache) = forward_step(params, token, &state)?;
        logits.push(z);
        caches.push(cache);
        state = next;
    }
    Ok((logits, caches, state))
}

/// Gradients of `Σ_t L_t` given `dL_t/dz_t` for every step. The incoming
/// state is treated as a constant.
pub fn backward_sequence(
    params: &ModelParams,
    tokens: &[usize],
    logit_grads: &[Array1<f64>],
    caches: &[StepCache],
) -> Result<Gradients> {
    let mut grads = ModelParams::zeros(params.dims());
    backward_sequence_into(params, tokens, logit_grads, caches, &mut grads)?;
    Ok(grads)
}

/// Accumulating form of [`backward_sequence`].
pub fn backward_sequence_into(
    params: &ModelParams,
    tokens: &[usize],
    logit_grads: &[Array1<f64>],
    caches: &[StepCache],
    grads: &mut Gradients,
) -> Result<()> {
    if tokens.len() != caches.len() || logit_grads.len() != caches.len() {
        return Err(SkdError::domain(format!(
            "sequence of {} tokens, {} logit gradients and {} caches",
            tokens.len(),
            logit_grads.len(),
            caches.len()
        )));
    }
    if let Some(t) = tokens.iter().zip(caches).position(|(tok, c)| *tok != c.token) {
        return Err(SkdError::domain(format!(
            "token at step {t} does not match its cache"
        )));
    }
    let dims = params.dims();
    let hidden = dims.hidden;
    if let Some(g) = logit_grads.iter().find(|g| g.len() != dims.vocab) {
        return Err(SkdError::domain(format!(
            "logit gradient of length {}, expected {}",
            g.len(),
            dims.vocab
        )));
    }

    let mut dh_next = Array1::<f64>::zeros(hidden);
    let mut dc_next = Array1::<f64>::zeros(hidden);
    let mut d_gates = Array1::<f64>::zeros(4 * hidden);

    for (cache, dz) in caches.iter().zip(logit_grads).rev() {
        // output projection
        accumulate_outer(&mut grads.output.weights, dz.view(), cache.ff_out.view());
        grads.output.bias += dz;
        let d_ff_out = mat_t_vec(&params.output.weights, dz.view());

        // ReLU
        let d_ff_pre = ndarray::Zip::from(&d_ff_out)
            .and(&cache.ff_pre)
            .map_collect(|&d, &u| if u > 0.0 { d } else { 0.0 });
        accumulate_outer(&mut grads.ff.weights, d_ff_pre.view(), cache.h.view());
        grads.ff.bias += &d_ff_pre;

        // LSTM cell
        let dh = mat_t_vec(&params.ff.weights, d_ff_pre.view()) + &dh_next;
        let gates = &cache.gates;
        for k in 0..hidden {
            let (i, f, o, g) = (
                gates[k],
                gates[hidden + k],
                gates[2 * hidden + k],
                gates[3 * hidden + k],
            );
            let tc = cache.tanh_c[k];
            let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
            let d_o = dh[k] * tc;
            let d_i = dc * g;
            let d_g = dc * i;
            let d_f = dc * cache.c_prev[k];
            d_gates[k] = d_i * i * (1.0 - i);
            d_gates[hidden + k] = d_f * f * (1.0 - f);
            d_gates[2 * hidden + k] = d_o * o * (1.0 - o);
            d_gates[3 * hidden + k] = d_g * (1.0 - g * g);
            dc_next[k] = dc * f;
        }
        accumulate_outer(&mut grads.lstm.w_input, d_gates.view(), cache.input.view());
        accumulate_outer(&mut grads.lstm.w_recurrent, d_gates.view(), cache.h_prev.view());
        grads.lstm.bias += &d_gates;

        let d_input = mat_t_vec(&params.lstm.w_input, d_gates.view());
        let mut row = grads.input_embeddings.row_mut(cache.token);
        row += &d_input;
        dh_next = mat_t_vec(&params.lstm.w_recurrent, d_gates.view());
    }
    Ok(())
}
