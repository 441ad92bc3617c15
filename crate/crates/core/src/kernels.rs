//! Kernel functions and (multi-kernel) maximum mean discrepancy.
//!
//! The MMD estimator is the biased V-statistic
//!
//! ```text
//! MMD²(A, B; k) = 1/n_a² ΣΣ k(a_i, a_i') − 2/(n_a n_b) ΣΣ k(a_i, b_j) + 1/n_b² ΣΣ k(b_j, b_j')
//! ```
//!
//! with the diagonal terms of the within-set sums included. MK-MMD is the
//! convex combination `Σ β_u MMD²(A, B; k_u)` with `β_u ≥ 0` and `Σ β_u = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, squared_distance, FeatureMatrix};

/// Tolerance on `Σ β_u = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Bandwidth multipliers of the default Gaussian family, applied to the
/// median-heuristic bandwidth.
pub const DEFAULT_BANDWIDTH_SCALES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(−‖x−y‖² / (2·bandwidth²))`
    Gaussian { bandwidth: f64 },
    /// `⟨x, y⟩`
    Linear,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } if !(bandwidth.is_finite() && bandwidth > 0.0) => {
                Err(Error::contract(format!(
                    "gaussian bandwidth must be positive and finite, got {bandwidth}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value from precomputed pair statistics.
    #[inline]
    fn apply(&self, sq_dist: f64, inner: f64) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => (-sq_dist / (2.0 * bandwidth * bandwidth)).exp(),
            KernelSpec::Linear => inner,
        }
    }
}

/// A non-negative, finite discrepancy value.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceValue(f64);

impl DistanceValue {
    /// Clamps tiny negative round-off to zero; rejects anything else that is
    /// not a finite non-negative number.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NumericFailure(format!(
                "non-finite distance {value}"
            )));
        }
        Ok(Self(value.max(0.0)))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A weighted set of kernels. Weights are validated on use, not on
/// construction, so that configurations can be inspected before rejection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiKernel {
    pub kernels: Vec<KernelSpec>,
    pub weights: Vec<f64>,
}

impl MultiKernel {
    pub fn new(kernels: Vec<KernelSpec>, weights: Vec<f64>) -> Result<Self> {
        let mk = Self { kernels, weights };
        validate_kernel_weights(&mk)?;
        Ok(mk)
    }

    /// Equal weights `1/m`.
    pub fn uniform(kernels: Vec<KernelSpec>) -> Result<Self> {
        let m = kernels.len();
        if m == 0 {
            return Err(Error::contract("multi-kernel needs at least one kernel"));
        }
        Self::new(kernels, vec![1.0 / m as f64; m])
    }

    /// Uniformly weighted Gaussian kernels with bandwidths `scale × base`.
    pub fn gaussian_family(base_bandwidth: f64, scales: &[f64]) -> Result<Self> {
        let kernels = scales
            .iter()
            .map(|s| KernelSpec::gaussian(s * base_bandwidth))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(kernels)
    }

    pub fn single(spec: KernelSpec) -> Result<Self> {
        Self::new(vec![spec], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::contract("kernel input has non-finite entries"));
    }
    Ok(spec.apply(squared_distance(x, y), dot(x, y)))
}

/// Median of pairwise Euclidean distances over the pooled samples of `a`
/// and `b`, or 1.0 if that median is zero. Even counts average the two
/// middle values.
pub fn median_heuristic_bandwidth(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    a.check_same_dim(b)?;
    let pooled: Vec<&[f64]> = a.iter_rows().chain(b.iter_rows()).collect();
    if pooled.len() < 2 {
        return Err(Error::contract(
            "median heuristic needs at least two pooled samples",
        ));
    }
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for (i, x) in pooled.iter().enumerate() {
        for y in &pooled[i + 1..] {
            dists.push(squared_distance(x, y).sqrt());
        }
    }
    let median = median_in_place(&mut dists);
    Ok(if median > 0.0 { median } else { 1.0 })
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, &mut upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    }
}

/// Biased MMD² under a single kernel.
pub fn mmd_squared(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<DistanceValue> {
    Ok(mmd_per_kernel(a, b, std::slice::from_ref(spec))?[0])
}

/// Biased MMD² under each kernel of `kernels`, sharing the pairwise
/// distance computations. Each entry is bitwise identical to the
/// corresponding single-kernel [`mmd_squared`].
pub fn mmd_per_kernel(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    kernels: &[KernelSpec],
) -> Result<Vec<DistanceValue>> {
    a.check_same_dim(b)?;
    for k in kernels {
        k.validate()?;
    }
    let needs_inner = kernels.iter().any(|k| matches!(k, KernelSpec::Linear));

    let aa = within_sums(a, kernels, needs_inner);
    let bb = within_sums(b, kernels, needs_inner);
    let ab = cross_sums(a, b, kernels, needs_inner);

    let na = a.rows() as f64;
    let nb = b.rows() as f64;
    (0..kernels.len())
        .map(|u| {
            let v = aa[u] / (na * na) - 2.0 * ab[u] / (na * nb) + bb[u] / (nb * nb);
            DistanceValue::new(v)
        })
        .collect()
}

/// `Σ_u β_u MMD²(a, b; k_u)`, after validating the weights.
pub fn mk_mmd(a: &FeatureMatrix, b: &FeatureMatrix, mk: &MultiKernel) -> Result<DistanceValue> {
    validate_kernel_weights(mk)?;
    let per_kernel = mmd_per_kernel(a, b, &mk.kernels)?;
    let total = per_kernel
        .iter()
        .zip(&mk.weights)
        .map(|(d, w)| w * d.value())
        .fold(0.0, |acc, x| acc + x);
    DistanceValue::new(total)
}

pub fn validate_kernel_weights(mk: &MultiKernel) -> Result<()> {
    if mk.kernels.is_empty() {
        return Err(Error::contract("multi-kernel needs at least one kernel"));
    }
    if mk.kernels.len() != mk.weights.len() {
        return Err(Error::contract(format!(
            "{} kernels but {} weights",
            mk.kernels.len(),
            mk.weights.len()
        )));
    }
    for k in &mk.kernels {
        k.validate()?;
    }
    if let Some((index, &value)) = mk
        .weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        return Err(Error::NegativeWeight { index, value });
    }
    let sum: f64 = mk.weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightsNotNormalized { sum });
    }
    Ok(())
}

// Σ_{i,i'} k(x_i, x_i') using symmetry: diagonal once, off-diagonal twice.
fn within_sums(x: &FeatureMatrix, kernels: &[KernelSpec], needs_inner: bool) -> Vec<f64> {
    let mut diag = vec![0.0; kernels.len()];
    let mut off = vec![0.0; kernels.len()];
    for i in 0..x.rows() {
        let xi = x.row(i);
        let inner = if needs_inner { dot(xi, xi) } else { 0.0 };
        for (acc, k) in diag.iter_mut().zip(kernels) {
            *acc += k.apply(0.0, inner);
        }
        for j in i + 1..x.rows() {
            let xj = x.row(j);
            let sq = squared_distance(xi, xj);
            let inner = if needs_inner { dot(xi, xj) } else { 0.0 };
            for (acc, k) in off.iter_mut().zip(kernels) {
                *acc += k.apply(sq, inner);
            }
        }
    }
    diag.iter().zip(&off).map(|(d, o)| d + 2.0 * o).collect()
}

fn cross_sums(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    kernels: &[KernelSpec],
    needs_inner: bool,
) -> Vec<f64> {
    let mut sums = vec![0.0; kernels.len()];
    for xa in a.iter_rows() {
        for xb in b.iter_rows() {
            let sq = squared_distance(xa, xb);
            let inner = if needs_inner { dot(xa, xb) } else { 0.0 };
            for (acc, k) in sums.iter_mut().zip(kernels) {
                *acc += k.apply(sq, inner);
            }
        }
    }
    sums
}
