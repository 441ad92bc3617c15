//! Gradient-trained classifiers and the weighted replay objective.
//!
//! The round objective is the current domain's loss plus the weighted
//! losses of the replayed domains:
//!
//! ```text
//! L(θ) = L_t(θ, D_current) + Σ_j w_j · L_t(θ, D_j)
//! ```
//!
//! [`LinearSoftmax`] is the stock learner: a multiclass linear model with
//! mean cross-entropy loss, trained by full-batch gradient descent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::buffer::DomainDataset;
use crate::error::{Error, Result};
use crate::selection::SelectionResult;

/// One term of the replay objective.
#[derive(Clone, Copy, Debug)]
pub struct WeightedBatch<'a> {
    pub data: &'a DomainDataset,
    pub weight: f64,
}

impl<'a> WeightedBatch<'a> {
    pub fn new(data: &'a DomainDataset, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::contract(format!(
                "batch weight must be positive, got {weight}"
            )));
        }
        Ok(Self { data, weight })
    }
}

/// A model that can be scored and updated on weighted labeled batches.
pub trait Learner: Clone + Send + Sync {
    fn dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Mean per-sample loss on `data`.
    fn loss(&self, data: &DomainDataset) -> Result<f64>;

    /// One gradient step on `Σ weight · loss(data)`; leaves `self` untouched.
    fn descend(&self, batches: &[WeightedBatch<'_>]) -> Result<Self>;

    /// Predicted class of a single feature vector.
    fn predict(&self, x: &[f64]) -> usize;
}

/// Multiclass linear softmax classifier.
///
/// Parameters are stored flat: the `num_classes × dim` weight matrix in
/// row-major order followed by the `num_classes` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmax {
    num_classes: usize,
    dim: usize,
    params: Vec<f64>,
    step_size: f64,
    seed: u64,
}

impl LinearSoftmax {
    /// All-zero parameters: the uniform predictor.
    pub fn zeros(num_classes: usize, dim: usize, step_size: f64) -> Result<Self> {
        Self::with_parameters(
            num_classes,
            dim,
            vec![0.0; num_classes * (dim + 1)],
            step_size,
            0,
        )
    }

    /// Weights drawn from N(0, init_scale²) with a seeded generator; zero biases.
    pub fn seeded(
        num_classes: usize,
        dim: usize,
        step_size: f64,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(init_scale.is_finite() && init_scale >= 0.0) {
            return Err(Error::contract(format!(
                "init scale must be >= 0, got {init_scale}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut params: Vec<f64> = (0..num_classes * dim)
            .map(|_| init_scale * normal.sample(&mut rng))
            .collect();
        params.resize(num_classes * (dim + 1), 0.0);
        Self::with_parameters(num_classes, dim, params, step_size, seed)
    }

    pub fn with_parameters(
        num_classes: usize,
        dim: usize,
        params: Vec<f64>,
        step_size: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::contract("need at least two classes"));
        }
        if dim == 0 {
            return Err(Error::contract("feature dimensionality must be positive"));
        }
        if params.len() != num_classes * (dim + 1) {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                num_classes * (dim + 1),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("parameters must be finite"));
        }
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::contract(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        Ok(Self {
            num_classes,
            dim,
            params,
            step_size,
            seed,
        })
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_step_size(&self, step_size: f64) -> Result<Self> {
        Self::with_parameters(
            self.num_classes,
            self.dim,
            self.params.clone(),
            step_size,
            self.seed,
        )
    }

    /// Class scores `W x + b` written into `out`.
    fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        let (w, b) = self.params.split_at(self.num_classes * self.dim);
        for (c, s) in out.iter_mut().enumerate() {
            let row = &w[c * self.dim..(c + 1) * self.dim];
            *s = b[c] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        }
    }

    fn check(&self, data: &DomainDataset) -> Result<()> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        if let Some(&bad) = data.labels().iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Gradient of `Σ weight · mean-cross-entropy` with respect to the flat
    /// parameter vector.
    pub fn gradient(&self, batches: &[WeightedBatch<'_>]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        let mut probs = vec![0.0; self.num_classes];
        let bias_offset = self.num_classes * self.dim;
        for batch in batches {
            self.check(batch.data)?;
            let scale = batch.weight / batch.data.len() as f64;
            for (x, &y) in batch.data.features().iter_rows().zip(batch.data.labels()) {
                self.scores_into(x, &mut probs);
                softmax_in_place(&mut probs);
                probs[y] -= 1.0;
                for (c, &g) in probs.iter().enumerate() {
                    let g = scale * g;
                    let row = &mut grad[c * self.dim..(c + 1) * self.dim];
                    for (acc, v) in row.iter_mut().zip(x) {
                        *acc += g * v;
                    }
                    grad[bias_offset + c] += g;
                }
            }
        }
        Ok(grad)
    }
}

impl Learner for LinearSoftmax {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn loss(&self, data: &DomainDataset) -> Result<f64> {
        self.check(data)?;
        let mut scores = vec![0.0; self.num_classes];
        let mut total = 0.0;
        for (x, &y) in data.features().iter_rows().zip(data.labels()) {
            self.scores_into(x, &mut scores);
            total += log_sum_exp(&scores) - scores[y];
        }
        Ok((total / data.len() as f64).max(0.0))
    }

    fn descend(&self, batches: &[WeightedBatch<'_>]) -> Result<Self> {
        let grad = self.gradient(batches)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFailure("non-finite gradient".into()));
        }
        let params: Vec<f64> = self
            .params
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - self.step_size * g)
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFailure("parameters diverged".into()));
        }
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut scores = vec![0.0; self.num_classes];
        self.scores_into(x, &mut scores);
        argmax_lowest(&scores)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in v.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in v.iter_mut() {
        *s /= total;
    }
}

// First maximal index.
fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate().skip(1) {
        if s > v[best] {
            best = i;
        }
    }
    best
}

pub fn loss<L: Learner>(state: &L, data: &DomainDataset) -> Result<f64> {
    state.loss(data)
}

/// The objective's batches: the current domain with weight 1, then each
/// selected domain with its selection weight.
pub fn replay_batches<'a>(
    current: &'a DomainDataset,
    selection: &'a SelectionResult,
) -> Result<Vec<WeightedBatch<'a>>> {
    std::iter::once(WeightedBatch::new(current, 1.0))
        .chain(
            selection
                .selected
                .iter()
                .map(|s| WeightedBatch::new(&s.samples, s.weight)),
        )
        .collect()
}

/// `loss(current) + Σ_j w_j · loss(selected_j)`.
pub fn replay_loss<L: Learner>(
    state: &L,
    current: &DomainDataset,
    selection: &SelectionResult,
) -> Result<f64> {
    let mut total = state.loss(current)?;
    for s in &selection.selected {
        total += s.weight * state.loss(&s.samples)?;
    }
    Ok(total)
}

/// One full-batch gradient step on [`replay_loss`].
pub fn train_step<L: Learner>(
    state: &L,
    current: &DomainDataset,
    selection: &SelectionResult,
) -> Result<L> {
    state.descend(&replay_batches(current, selection)?)
}

/// Fraction of samples whose predicted class equals the label.
pub fn evaluate<L: Learner>(state: &L, data: &DomainDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    if data.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: data.dim(),
        });
    }
    let correct = data
        .features()
        .iter_rows()
        .zip(data.labels())
        .filter(|(x, &y)| state.predict(x) == y)
        .count();
    Ok(correct as f64 / data.len() as f64)
}
