//! The two-sample statistic T and its Gaussian, spectral and permutation
//! calibrations.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{cross_sum, pairwise_sum, GramMatrix};
use crate::kde::{plugin_moments, MomentEstimates, Sample};
use crate::rng::stream;
use crate::spd::{half_len, weighted_sum};
use crate::special::{centering_a, limit_constants, log_multigamma, normal_upper_tail};
use crate::wishart::OverlapKernel;

/// Relative tolerance below which a negative raw statistic is treated as zero.
pub const CLAMP_TOL: f64 = 1e-12;

/// Default relative eigenvalue cutoff for [`estimate_null_spectrum`].
pub const DEFAULT_SPECTRUM_TOL: f64 = 1e-10;

const DRAW_BLOCK: usize = 4096;

/// Two independent samples of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    sample1: Sample,
    sample2: Sample,
}

impl TwoSampleData {
    pub fn new(sample1: Sample, sample2: Sample) -> Result<Self> {
        if sample1.dim() != sample2.dim() {
            return Err(Error::DimensionMismatch { expected: sample1.dim(), found: sample2.dim() });
        }
        Ok(Self { sample1, sample2 })
    }

    pub fn sample1(&self) -> &Sample {
        &self.sample1
    }

    pub fn sample2(&self) -> &Sample {
        &self.sample2
    }

    pub fn dim(&self) -> usize {
        self.sample1.dim()
    }

    pub fn n1(&self) -> usize {
        self.sample1.len()
    }

    pub fn n2(&self) -> usize {
        self.sample2.len()
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }

    /// n₁n₂/n.
    pub fn n_eff(&self) -> f64 {
        self.n1() as f64 * self.n2() as f64 / self.n() as f64
    }

    /// Sample 1 followed by sample 2.
    pub fn pooled(&self) -> Sample {
        self.sample1.concat(&self.sample2).expect("dimensions checked at construction")
    }

    pub fn swapped(&self) -> Self {
        Self { sample1: self.sample2.clone(), sample2: self.sample1.clone() }
    }
}

/// A pair of bandwidths (b₁ for sample 1, b₂ for sample 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub b1: f64,
    pub b2: f64,
}

impl Bandwidths {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        for b in [b1, b2] {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive and finite, got {b}")));
            }
        }
        Ok(Self { b1, b2 })
    }

    pub fn common(b: f64) -> Result<Self> {
        Self::new(b, b)
    }

    /// The shared bandwidth, or `UnequalBandwidth` naming `method`.
    pub fn require_common(&self, method: Method) -> Result<f64> {
        if self.b1 == self.b2 {
            Ok(self.b1)
        } else {
            Err(Error::UnequalBandwidth { method: method.as_str(), b1: self.b1, b2: self.b2 })
        }
    }
}

/// T together with its unclamped value and the positive part used as its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticParts {
    pub value: f64,
    pub raw: f64,
    pub scale: f64,
}

impl StatisticParts {
    fn combine(n1: usize, n2: usize, s11: f64, s22: f64, s12: f64) -> Result<Self> {
        let (n1, n2) = (n1 as f64, n2 as f64);
        let n_eff = n1 * n2 / (n1 + n2);
        let positive = s11 / (n1 * n1) + s22 / (n2 * n2);
        let raw = n_eff * (positive - 2.0 * s12 / (n1 * n2));
        Self::clamp(raw, n_eff * positive)
    }

    fn clamp(raw: f64, scale: f64) -> Result<Self> {
        if !raw.is_finite() {
            return Err(Error::Overflow("statistic is not finite".into()));
        }
        let value = if raw >= 0.0 {
            raw
        } else if raw > -CLAMP_TOL * scale {
            0.0
        } else {
            return Err(Error::Domain(format!(
                "statistic is negative beyond rounding ({raw:e}, scale {scale:e}); bandwidth or data are ill-conditioned"
            )));
        };
        Ok(Self { value, raw, scale })
    }
}

/// T by the expanded-square double sums, with the clamping details.
pub fn statistic_parts(data: &TwoSampleData, b1: f64, b2: f64) -> Result<StatisticParts> {
    let bw = Bandwidths::new(b1, b2)?;
    let d = data.dim();
    let x1 = data.sample1.items();
    let x2 = data.sample2.items();
    let s11 = cross_sum(&OverlapKernel::equal(d, bw.b1)?, x1, x1)?;
    let s22 = cross_sum(&OverlapKernel::equal(d, bw.b2)?, x2, x2)?;
    let s12 = cross_sum(&OverlapKernel::new(d, bw.b1, bw.b2)?, x1, x2)?;
    StatisticParts::combine(data.n1(), data.n2(), s11, s22, s12)
}

/// T = n_eff ∫ (f̂₁ − f̂₂)², sample ℓ smoothed at b_ℓ.
pub fn statistic_t(data: &TwoSampleData, b1: f64, b2: f64) -> Result<f64> {
    Ok(statistic_parts(data, b1, b2)?.value)
}

/// T evaluated term by term through the weights a_{i,ℓ} = δ_{iℓ} − n_ℓ/n
/// and the explicit Γ_d ratio for each bandwidth pair. Intended as a
/// cross-check of [`statistic_t`]; it is slower.
pub fn statistic_t_weighted(data: &TwoSampleData, b1: f64, b2: f64) -> Result<f64> {
    let bw = Bandwidths::new(b1, b2)?;
    let d = data.dim();
    let df = d as f64;
    let r = half_len(d) as f64;
    let half = (df + 1.0) / 2.0;
    let b = [bw.b1, bw.b2];
    let ns = [data.n1() as f64, data.n2() as f64];
    let n = ns[0] + ns[1];
    let samples = [data.sample1.items(), data.sample2.items()];

    let mut positive = 0.0;
    let mut total = 0.0;
    for l1 in 0..2 {
        for l2 in 0..2 {
            let weight: f64 = (0..2)
                .map(|i| {
                    let a1 = f64::from(u8::from(i == l1)) - ns[l1] / n;
                    let a2 = f64::from(u8::from(i == l2)) - ns[l2] / n;
                    ns[i] * a1 * a2
                })
                .sum::<f64>()
                / (ns[l1] * ns[l2]);
            let (e1, e2) = (1.0 / (2.0 * b[l1]), 1.0 / (2.0 * b[l2]));
            let exponent = e1 + e2 + half;
            let log_coef = -r * std::f64::consts::LN_2
                + (-df * e1 - r) * b[l1].ln()
                + (-df * e2 - r) * b[l2].ln()
                + log_multigamma(d, exponent)?
                - log_multigamma(d, e1 + half)?
                - log_multigamma(d, e2 + half)?;
            let rows: Vec<f64> = samples[l1]
                .par_iter()
                .map(|x| {
                    let mut s = 0.0;
                    for y in samples[l2] {
                        let m = weighted_sum(x, 1.0 / b[l1], y, 1.0 / b[l2])?;
                        let log_term = log_coef + e1 * x.log_det() + e2 * y.log_det() - exponent * m.log_det();
                        s += log_term.exp();
                    }
                    Ok(s)
                })
                .collect::<Result<_>>()?;
            let term = weight * pairwise_sum(&rows);
            total += term;
            if weight > 0.0 {
                positive += term;
            }
        }
    }
    Ok(StatisticParts::clamp(total, positive)?.value)
}

/// Calibration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gaussian,
    Spectral,
    Permutation,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gaussian => "gaussian",
            Method::Spectral => "spectral",
            Method::Permutation => "permutation",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Method::Gaussian),
            "spectral" => Ok(Method::Spectral),
            "permutation" => Ok(Method::Permutation),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Where the V₁,₁ / V₂,₂ values fed to the Gaussian test came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    /// Leave-one-out plug-ins on the pooled sample.
    PooledPlugin,
    /// Supplied by the caller (e.g. known simulation truth).
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiagnostics {
    pub z_score: f64,
    /// A_d(b)·v̂₁₁.
    pub centering: f64,
    /// √(v_d·v̂₂₂).
    pub denominator: f64,
    pub a_d: f64,
    pub v_d: f64,
    pub v11: f64,
    pub v22: f64,
    pub moment_source: MomentSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub n_draws: usize,
    pub exceedances: usize,
    pub retained_eigenvalues: usize,
    /// Up to the ten largest retained eigenvalues.
    pub leading_eigenvalues: Vec<f64>,
    pub trace: f64,
    pub truncated_mass: f64,
    pub negative_mass: f64,
    /// Monte Carlo mean of the simulated null draws (compare with the eigenvalue sum).
    pub draw_mean: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationDiagnostics {
    pub n_perm: usize,
    pub exceedances: usize,
    /// Permuted statistics whose small negative rounding value was clamped to 0.
    pub clamped: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diagnostics {
    Gaussian(GaussianDiagnostics),
    Spectral(SpectralDiagnostics),
    Permutation(PermutationDiagnostics),
}

/// Outcome of one calibrated test. Rejection is for large T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// T before clamping small negative rounding to 0.
    pub statistic_raw: f64,
    pub method: Method,
    pub p_value: f64,
    pub bandwidths: Bandwidths,
    pub diagnostics: Diagnostics,
}

/// Shrinking-bandwidth calibration: z = b^{r/4}(T − A_d(b)v₁₁)/√(v_d v₂₂),
/// p = P(N(0,1) ≥ z).
pub fn gaussian_test(
    data: &TwoSampleData,
    bandwidths: Bandwidths,
    moments: &MomentEstimates,
    source: MomentSource,
) -> Result<TestResult> {
    let b = bandwidths.require_common(Method::Gaussian)?;
    if !moments.v11_hat.is_finite() || !moments.v22_hat.is_finite() {
        return Err(Error::InvalidParameter("moment estimates must be finite".into()));
    }
    if !(moments.v22_hat > 0.0) {
        return Err(Error::DegenerateVariance(moments.v22_hat));
    }
    let d = data.dim();
    let parts = statistic_parts(data, b, b)?;
    let consts = limit_constants(d);
    let a_d = centering_a(d, b)?;
    let centering = a_d * moments.v11_hat;
    let denominator = (consts.v_d * moments.v22_hat).sqrt();
    let z = b.powf(consts.r as f64 / 4.0) * (parts.value - centering) / denominator;
    Ok(TestResult {
        statistic: parts.value,
        statistic_raw: parts.raw,
        method: Method::Gaussian,
        p_value: normal_upper_tail(z),
        bandwidths,
        diagnostics: Diagnostics::Gaussian(GaussianDiagnostics {
            z_score: z,
            centering,
            denominator,
            a_d,
            v_d: consts.v_d,
            v11: moments.v11_hat,
            v22: moments.v22_hat,
            moment_source: source,
        }),
    })
}

/// [`gaussian_test`] with moments estimated on the pooled sample at the test bandwidth.
pub fn gaussian_test_pooled(data: &TwoSampleData, bandwidths: Bandwidths) -> Result<TestResult> {
    let b = bandwidths.require_common(Method::Gaussian)?;
    let moments = plugin_moments(&data.pooled(), b)?;
    gaussian_test(data, bandwidths, &moments, MomentSource::PooledPlugin)
}

/// Estimated eigenvalues of the centered covariance operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSpectrum {
    /// Retained eigenvalues of HGH/n, descending, all positive.
    pub eigenvalues: Vec<f64>,
    /// tr(HGH)/n.
    pub trace: f64,
    /// Absolute mass of dropped eigenvalues (small or negative).
    pub truncated_mass: f64,
    /// Absolute mass of the negative eigenvalues alone.
    pub negative_mass: f64,
}

impl NullSpectrum {
    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.eigenvalues)
    }
}

fn require_pooled(pooled: &Sample) -> Result<()> {
    if pooled.len() < 2 {
        return Err(Error::SampleTooSmall { needed: 2, found: pooled.len() });
    }
    Ok(())
}

fn spectrum_of_gram(gram: &GramMatrix, rel_tol: f64) -> NullSpectrum {
    let n = gram.n();
    let nf = n as f64;
    let centered = gram.double_centered();
    let trace = (0..n).map(|i| centered[i * n + i]).sum::<f64>() / nf;
    let m = DMatrix::from_row_slice(n, n, &centered) / nf;
    let eig = SymmetricEigen::new(m);
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let lambda_max = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = (rel_tol * lambda_max).max(64.0 * f64::EPSILON * gram.max_abs());
    let mut kept = Vec::new();
    let mut truncated_mass = 0.0;
    let mut negative_mass = 0.0;
    for v in values {
        if v > floor {
            kept.push(v);
        } else {
            truncated_mass += v.abs();
            if v < 0.0 {
                negative_mass += -v;
            }
        }
    }
    NullSpectrum { eigenvalues: kept, trace, truncated_mass, negative_mass }
}

/// Eigenvalues of HGH/n for the pooled Gram matrix at bandwidth b;
/// eigenvalues at or below max(rel_tol·λ_max, rounding floor) are dropped.
pub fn estimate_null_spectrum(pooled: &Sample, b: f64, rel_tol: f64) -> Result<NullSpectrum> {
    require_pooled(pooled)?;
    if !(rel_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("rel_tol must be nonnegative, got {rel_tol}")));
    }
    let gram = GramMatrix::new(&OverlapKernel::equal(pooled.dim(), b)?, pooled.items())?;
    Ok(spectrum_of_gram(&gram, rel_tol))
}

/// Draws of Σ λⱼ Zⱼ², block k of 4096 from stream k of `seed`.
pub fn weighted_chi2_draws(eigenvalues: &[f64], n_draws: usize, seed: u64) -> Vec<f64> {
    let blocks = n_draws.div_ceil(DRAW_BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = stream(seed, k as u64);
            let len = DRAW_BLOCK.min(n_draws - k * DRAW_BLOCK);
            (0..len)
                .map(|_| {
                    eigenvalues
                        .iter()
                        .map(|l| {
                            let z: f64 = rng.sample(StandardNormal);
                            l * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Fixed-bandwidth calibration against Σ λ̂ⱼ Zⱼ² with λ̂ from the pooled sample.
pub fn spectral_test(data: &TwoSampleData, bandwidths: Bandwidths, n_draws: usize, seed: u64) -> Result<TestResult> {
    spectral_test_with_tol(data, bandwidths, n_draws, seed, DEFAULT_SPECTRUM_TOL)
}

pub fn spectral_test_with_tol(
    data: &TwoSampleData,
    bandwidths: Bandwidths,
    n_draws: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<TestResult> {
    let b = bandwidths.require_common(Method::Spectral)?;
    if n_draws < 1000 {
        return Err(Error::InvalidParameter(format!("spectral test needs at least 1000 draws, got {n_draws}")));
    }
    let pooled = data.pooled();
    require_pooled(&pooled)?;
    let parts = statistic_parts(data, b, b)?;
    let spectrum = estimate_null_spectrum(&pooled, b, rel_tol)?;
    let draws = weighted_chi2_draws(&spectrum.eigenvalues, n_draws, seed);
    let exceedances = draws.iter().filter(|&&v| v >= parts.value).count();
    Ok(TestResult {
        statistic: parts.value,
        statistic_raw: parts.raw,
        method: Method::Spectral,
        p_value: (1 + exceedances) as f64 / (n_draws + 1) as f64,
        bandwidths,
        diagnostics: Diagnostics::Spectral(SpectralDiagnostics {
            n_draws,
            exceedances,
            retained_eigenvalues: spectrum.eigenvalues.len(),
            leading_eigenvalues: spectrum.eigenvalues.iter().take(10).copied().collect(),
            trace: spectrum.trace,
            truncated_mass: spectrum.truncated_mass,
            negative_mass: spectrum.negative_mass,
            draw_mean: pairwise_sum(&draws) / n_draws as f64,
            seed,
        }),
    })
}

/// Pooled Gram matrices reused across relabelings.
struct PooledGrams {
    g11: GramMatrix,
    g22: Option<GramMatrix>,
    g12: Option<GramMatrix>,
}

impl PooledGrams {
    fn new(pooled: &Sample, bw: Bandwidths) -> Result<Self> {
        let d = pooled.dim();
        let items = pooled.items();
        let g11 = GramMatrix::new(&OverlapKernel::equal(d, bw.b1)?, items)?;
        if bw.b1 == bw.b2 {
            return Ok(Self { g11, g22: None, g12: None });
        }
        let g22 = GramMatrix::new(&OverlapKernel::equal(d, bw.b2)?, items)?;
        let g12 = GramMatrix::new(&OverlapKernel::general(d, bw.b1, bw.b2)?, items)?;
        Ok(Self { g11, g22: Some(g22), g12: Some(g12) })
    }

    fn raw_statistic(&self, idx1: &[usize], idx2: &[usize]) -> (f64, f64) {
        let s11 = self.g11.block_sum(idx1, idx1);
        let s22 = self.g22.as_ref().unwrap_or(&self.g11).block_sum(idx2, idx2);
        let s12 = self.g12.as_ref().unwrap_or(&self.g11).block_sum(idx1, idx2);
        let (n1, n2) = (idx1.len() as f64, idx2.len() as f64);
        let n_eff = n1 * n2 / (n1 + n2);
        let positive = s11 / (n1 * n1) + s22 / (n2 * n2);
        (n_eff * (positive - 2.0 * s12 / (n1 * n2)), n_eff * positive)
    }
}

/// Label-permutation calibration with the add-one rule; ties count as exceedances.
pub fn permutation_test(data: &TwoSampleData, bandwidths: Bandwidths, n_perm: usize, seed: u64) -> Result<TestResult> {
    if n_perm < 19 {
        return Err(Error::InvalidParameter(format!("permutation test needs at least 19 permutations, got {n_perm}")));
    }
    let parts = statistic_parts(data, bandwidths.b1, bandwidths.b2)?;
    let pooled = data.pooled();
    let grams = PooledGrams::new(&pooled, bandwidths)?;
    let (n1, n) = (data.n1(), data.n());
    let identity: Vec<usize> = (0..n).collect();
    let (obs_raw, obs_scale) = grams.raw_statistic(&identity[..n1], &identity[n1..]);
    let threshold = obs_raw.max(0.0) - CLAMP_TOL * obs_scale;

    let perms: Vec<(bool, bool)> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let mut idx = identity.clone();
            idx.shuffle(&mut rng);
            let (a, b) = idx.split_at(n1);
            let (raw, scale) = grams.raw_statistic(a, b);
            let clamped = raw < 0.0 && raw > -CLAMP_TOL * scale;
            (raw.max(0.0) >= threshold, clamped)
        })
        .collect();
    let exceedances = perms.iter().filter(|p| p.0).count();
    let clamped = perms.iter().filter(|p| p.1).count();
    Ok(TestResult {
        statistic: parts.value,
        statistic_raw: parts.raw,
        method: Method::Permutation,
        p_value: (1 + exceedances) as f64 / (n_perm + 1) as f64,
        bandwidths,
        diagnostics: Diagnostics::Permutation(PermutationDiagnostics { n_perm, exceedances, clamped, seed }),
    })
}

/// Empirical degeneracy check on the pooled Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsKernel {
    pub b: f64,
    /// m̂(Zᵢ) = (1/n) Σⱼ κ(Zᵢ, Zⱼ).
    pub m_hat: Vec<f64>,
    /// Grand mean of the Gram matrix.
    pub m0_hat: f64,
    /// max over rows of |Σⱼ (HGH)ᵢⱼ|.
    pub max_centered_row_sum: f64,
    pub gram_max_abs: f64,
}

pub fn degeneracy_diagnostics(pooled: &Sample, b: f64) -> Result<DiagnosticsKernel> {
    require_pooled(pooled)?;
    let gram = GramMatrix::new(&OverlapKernel::equal(pooled.dim(), b)?, pooled.items())?;
    let n = gram.n();
    let m_hat = gram.row_means();
    let m0_hat = pairwise_sum(&m_hat) / n as f64;
    let centered = gram.double_centered();
    let max_centered_row_sum =
        (0..n).map(|i| centered[i * n..(i + 1) * n].iter().sum::<f64>().abs()).fold(0.0, f64::max);
    Ok(DiagnosticsKernel { b, m_hat, m0_hat, max_centered_row_sum, gram_max_abs: gram.max_abs() })
}
