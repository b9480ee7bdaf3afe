//! The Wishart kernel density estimator, least-squares cross-validation,
//! and plug-in estimates of the moments V₁,₁ and V₂,₂.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{cross_sum, pairwise_sum};
use crate::spd::SpdMatrix;
use crate::wishart::{kernel_params, KernelSpec, OverlapKernel, PreparedDensity};

/// A non-empty sample of SPD matrices of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    items: Vec<SpdMatrix>,
}

impl Sample {
    pub fn new(items: Vec<SpdMatrix>) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptySample)?;
        let dim = first.dim();
        if let Some(bad) = items.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[SpdMatrix] {
        &self.items
    }

    pub fn into_items(self) -> Vec<SpdMatrix> {
        self.items
    }

    /// Concatenate two samples of the same dimension.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut items = self.items.clone();
        items.extend(other.items.iter().cloned());
        Ok(Self { dim: self.dim, items })
    }
}

/// f̂(S) = (1/n) Σₜ K_{ν(b,d), bS}(Xₜ).
pub fn evaluate_kde(sample: &Sample, b: f64, s: &SpdMatrix) -> Result<f64> {
    let spec = KernelSpec::new(b, sample.dim)?;
    let density = PreparedDensity::new(&kernel_params(spec, s)?)?;
    let mut total = 0.0;
    for x in &sample.items {
        total += density.log_eval(x)?.exp();
    }
    Ok(total / sample.len() as f64)
}

/// Leave-one-out values f̂₋ᵢ(Xᵢ) = (1/(n−1)) Σ_{j≠i} K_{ν(b,d), bXᵢ}(Xⱼ).
fn leave_one_out_densities(sample: &Sample, b: f64) -> Result<Vec<f64>> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { needed: 2, found: n });
    }
    let spec = KernelSpec::new(b, sample.dim)?;
    sample
        .items
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            let density = PreparedDensity::new(&kernel_params(spec, xi)?)?;
            let mut s = 0.0;
            for (j, xj) in sample.items.iter().enumerate() {
                if j != i {
                    s += density.log_eval(xj)?.exp();
                }
            }
            Ok(s / (n - 1) as f64)
        })
        .collect()
}

/// CV(b) = (1/n²) ΣᵢΣⱼ κ_b(Xᵢ, Xⱼ) − (2/n) Σᵢ f̂₋ᵢ(Xᵢ).
pub fn lscv_score(sample: &Sample, b: f64) -> Result<f64> {
    let n = sample.len();
    let loo = leave_one_out_densities(sample, b)?;
    let kernel = OverlapKernel::equal(sample.dim, b)?;
    let integral = cross_sum(&kernel, &sample.items, &sample.items)? / (n * n) as f64;
    Ok(integral - 2.0 * pairwise_sum(&loo) / n as f64)
}

/// Outcome of a cross-validation grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LscvSelection {
    pub b_opt: f64,
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Minimize CV(b) over an ascending grid; ties go to the larger bandwidth.
pub fn lscv_select(sample: &Sample, grid: &[f64]) -> Result<LscvSelection> {
    if sample.len() < 2 {
        return Err(Error::SampleTooSmall { needed: 2, found: sample.len() });
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("bandwidth grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidParameter("bandwidth grid must be positive and strictly ascending".into()));
    }
    let scores: Vec<f64> = grid.iter().map(|&b| lscv_score(sample, b)).collect::<Result<_>>()?;
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s <= scores[best] {
            best = k;
        }
    }
    Ok(LscvSelection { b_opt: grid[best], grid: grid.to_vec(), scores })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || count == 0 {
        return Err(Error::InvalidParameter(format!("invalid grid {lo}:{hi}:{count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, z) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|k| {
            if k == 0 {
                lo
            } else if k + 1 == count {
                hi
            } else {
                (a + (z - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// 25 log-spaced bandwidths on [0.005, 1].
pub fn default_grid() -> Vec<f64> {
    log_grid(0.005, 1.0, 25).expect("static grid")
}

/// Plug-in estimates of V₁,₁ = ∫ f |S|^{−(d+1)/2} and V₂,₂ = ∫ f² |S|^{−(d+1)/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub v11_hat: f64,
    pub v22_hat: f64,
    pub b_used: f64,
}

/// (1/n) Σ |Xᵢ|^{−(d+1)/2}.
pub fn v11_hat(sample: &Sample) -> f64 {
    let p = (sample.dim as f64 + 1.0) / 2.0;
    let terms: Vec<f64> = sample.items.iter().map(|x| (-p * x.log_det()).exp()).collect();
    pairwise_sum(&terms) / sample.len() as f64
}

/// v̂₁₁ as above; v̂₂₂ = (1/n) Σ f̂₋ᵢ(Xᵢ) |Xᵢ|^{−(d+1)/2} with the leave-one-out KDE.
pub fn plugin_moments(sample: &Sample, b: f64) -> Result<MomentEstimates> {
    let p = (sample.dim as f64 + 1.0) / 2.0;
    let loo = leave_one_out_densities(sample, b)?;
    let terms: Vec<f64> =
        sample.items.iter().zip(&loo).map(|(x, f)| f * (-p * x.log_det()).exp()).collect();
    let est = MomentEstimates {
        v11_hat: v11_hat(sample),
        v22_hat: pairwise_sum(&terms) / sample.len() as f64,
        b_used: b,
    };
    if !(est.v11_hat.is_finite() && est.v22_hat.is_finite()) {
        return Err(Error::Overflow("moment estimate is not finite".into()));
    }
    Ok(est)
}
