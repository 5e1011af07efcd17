//! The output projection `z = W h + b`, whose rows double as the word
//! vectors the distillation targets are measured in.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkdError};
use crate::objectives::{euclidean, LogitVector};
use crate::rng::Gaussian;

/// `V x D` projection weights (row `k` is the vector of word `k`) and a
/// length-`V` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
}

impl EmbeddingMatrix {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        let (vocab, dim) = weights.dim();
        if vocab < 2 || dim < 1 {
            return Err(SkdError::domain(format!(
                "embedding matrix must be at least 2 x 1, got {vocab} x {dim}"
            )));
        }
        if bias.len() != vocab {
            return Err(SkdError::domain(format!(
                "bias length {} does not match vocabulary of {vocab}",
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(SkdError::domain("embedding matrix has non-finite entries"));
        }
        Ok(EmbeddingMatrix {
            weights: weights.as_standard_layout().into_owned(),
            bias,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn row(&self, k: usize) -> Result<ArrayView1<'_, f64>> {
        if k >= self.vocab_size() {
            return Err(SkdError::domain(format!(
                "index {k} out of range for vocabulary of {}",
                self.vocab_size()
            )));
        }
        Ok(self.weights.row(k))
    }

    /// `z_k = w_k · h + b_k`.
    pub fn project_logits(&self, h: ArrayView1<'_, f64>) -> Result<LogitVector> {
        if h.len() != self.dim() {
            return Err(SkdError::domain(format!(
                "hidden vector has length {}, projection expects {}",
                h.len(),
                self.dim()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(SkdError::domain("hidden vector has non-finite entries"));
        }
        Ok(LogitVector::from_trusted(self.project_unchecked(h)))
    }

    pub(crate) fn project_unchecked(&self, h: ArrayView1<'_, f64>) -> Array1<f64> {
        mat_vec(&self.weights, h) + &self.bias
    }

    /// Euclidean distance between rows `t` and `n`.
    pub fn pair_distance(&self, t: usize, n: usize) -> Result<f64> {
        euclidean(self.row(t)?, self.row(n)?)
    }
}

/// Per-coordinate Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub std: f64,
    pub seed: u64,
}

/// Returns `vectors + eps`, `eps ~ N(0, std^2)` i.i.d., filled in row-major
/// order from the Box–Muller stream keyed by `spec.seed`. A zero std returns
/// the input untouched.
pub fn inject_noise(vectors: &Array2<f64>, spec: NoiseSpec) -> Array2<f64> {
    let mut out = vectors.to_owned();
    if spec.std == 0.0 {
        return out;
    }
    let mut gauss = Gaussian::new(spec.seed);
    // `to_owned` may keep a non-standard layout; iterate logically.
    for v in out.iter_mut() {
        *v += spec.std * gauss.sample();
    }
    out
}

pub(crate) fn accumulate_outer(acc: &mut Array2<f64>, left: ArrayView1<'_, f64>, right: ArrayView1<'_, f64>) {
    if let (Some(a), Some(r)) = (acc.as_slice_mut(), right.as_slice()) {
        for (row, &l) in a.chunks_exact_mut(r.len().max(1)).zip(left.iter()) {
            if l != 0.0 {
                for (x, &y) in row.iter_mut().zip(r) {
                    *x += l * y;
                }
            }
        }
        return;
    }
    Zip::from(acc.rows_mut()).and(&left).for_each(|mut row, &l| {
        if l != 0.0 {
            row.scaled_add(l, &right);
        }
    });
}

// ndarray's matrix-vector product without a BLAS backend is several times
// slower than these loops at the sizes used here.

/// `w x`.
pub(crate) fn mat_vec(w: &Array2<f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    match (w.as_slice(), x.as_slice()) {
        (Some(a), Some(x)) if !x.is_empty() => a
            .chunks_exact(x.len())
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect(),
        _ => w.dot(&x),
    }
}

/// `w^T x`.
pub(crate) fn mat_t_vec(w: &Array2<f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut out = Array1::zeros(w.ncols());
    match (w.as_slice(), out.as_slice_mut()) {
        (Some(a), Some(o)) if !o.is_empty() => {
            for (row, &l) in a.chunks_exact(o.len()).zip(x.iter()) {
                if l != 0.0 {
                    for (acc, &v) in o.iter_mut().zip(row) {
                        *acc += l * v;
                    }
                }
            }
        }
        _ => out = w.t().dot(&x),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(array![[1.0, 2.0], [3.0, 4.0]], array![0.5, -0.5]).unwrap()
    }

    #[test]
    fn zero_hidden_gives_bias() {
        let w = sample();
        let z = w.project_logits(array![0.0, 0.0].view()).unwrap();
        assert_eq!(z.values(), w.bias().view());
    }

    #[test]
    fn identity_projection() {
        let w = EmbeddingMatrix::new(Array2::eye(3), Array1::zeros(3)).unwrap();
        let h = array![0.25, -3.0, 7.5];
        assert_eq!(w.project_logits(h.view()).unwrap().into_inner(), h);
    }

    #[test]
    fn hand_computed_projection() {
        let z = sample().project_logits(array![1.0, 1.0].view()).unwrap();
        assert_eq!(z.into_inner(), array![3.5, 6.5]);
    }

    #[test]
    fn projection_rejects_wrong_dimension() {
        assert!(sample().project_logits(array![1.0].view()).is_err());
    }

    #[test]
    fn distances() {
        let w = EmbeddingMatrix::new(array![[0.0, 0.0], [3.0, 4.0]], Array1::zeros(2)).unwrap();
        assert_eq!(w.pair_distance(0, 0).unwrap(), 0.0);
        assert_eq!(w.pair_distance(0, 1).unwrap(), 5.0);
        assert!(w.pair_distance(0, 2).is_err());
    }

    #[test]
    fn construction_checks_shapes() {
        assert!(EmbeddingMatrix::new(Array2::zeros((1, 3)), Array1::zeros(1)).is_err());
        assert!(EmbeddingMatrix::new(Array2::zeros((2, 0)), Array1::zeros(2)).is_err());
        assert!(EmbeddingMatrix::new(Array2::zeros((2, 3)), Array1::zeros(3)).is_err());
        assert!(EmbeddingMatrix::new(array![[f64::NAN], [0.0]], Array1::zeros(2)).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let m = array![[1.5, -2.0], [0.1, 1e-300]];
        let out = inject_noise(&m, NoiseSpec { std: 0.0, seed: 9 });
        assert_eq!(out, m);
    }

    #[test]
    fn noise_is_seeded() {
        let m = Array2::zeros((4, 5));
        let spec = NoiseSpec { std: 0.3, seed: 42 };
        assert_eq!(inject_noise(&m, spec), inject_noise(&m, spec));
        assert_ne!(inject_noise(&m, spec), inject_noise(&m, NoiseSpec { seed: 43, ..spec }));
    }

    #[test]
    fn noise_moments() {
        let m = Array2::zeros((1000, 100));
        let out = inject_noise(&m, NoiseSpec { std: 0.1, seed: 7 });
        let n = out.len() as f64;
        let mean = out.sum() / n;
        let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // standard errors: 0.1/sqrt(1e5) ≈ 3.2e-4 for the mean, ≈ 2.2e-4 for the std
        assert!(mean.abs() < 0.003, "mean {mean}");
        assert!((std - 0.1).abs() < 0.003, "std {std}");
    }
}
