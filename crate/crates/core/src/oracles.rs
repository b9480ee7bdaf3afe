//! Independent numerical checks of the closed forms: adaptive quadrature
//! for d = 1 and importance-sampling Monte Carlo for any d.
//!
//! Nothing here calls the overlap closed form; the integrands are built from
//! kernel densities only.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::pairwise_sum;
use crate::kde::Sample;
use crate::rng::stream;
use crate::spd::SpdMatrix;
use crate::special::ln_gamma;
use crate::two_sample::TwoSampleData;
use crate::wishart::{log_density, sample_wishart, WishartParams};

/// Stopping rule for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-15, rel_tol: 1e-12, max_subdivisions: 4000 }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) || max_subdivisions == 0 {
            return Err(Error::InvalidParameter("quadrature tolerances must be positive".into()));
        }
        Ok(Self { abs_tol, rel_tol, max_subdivisions })
    }
}

/// An integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights for the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Piece { a, b, value: k * h, error: ((k - g) * h).abs() }
}

/// Globally adaptive 7/15-point Gauss–Kronrod quadrature of f over [a, b],
/// starting from the given interior breakpoints. The error bound is the
/// summed |K15 − G7| over the final partition.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<QuadEstimate> {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&t| t > a && t < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut heap: BinaryHeap<Piece> = cuts.windows(2).map(|w| kronrod(&f, w[0], w[1])).collect();
    let mut subdivisions = heap.len();
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::Domain("integrand produced a non-finite value".into()));
        }
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            return Ok(QuadEstimate { value, error, subdivisions });
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence { estimate: value, error, subdivisions });
        }
        let worst = heap.pop().expect("partition is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::NonConvergence { estimate: value, error, subdivisions });
        }
        heap.push(kronrod(&f, worst.a, mid));
        heap.push(kronrod(&f, mid, worst.b));
        subdivisions += 1;
    }
}

/// ∫₀^∞ g(s) ds through s = 1/u, u = t/(1 − t); `centres` are points in s
/// where g is concentrated.
fn integrate_half_line<G: Fn(f64) -> f64>(g: G, centres: &[f64], spec: &QuadratureSpec) -> Result<QuadEstimate> {
    let to_t = |s: f64| {
        let u = 1.0 / s;
        u / (1.0 + u)
    };
    let breaks: Vec<f64> = centres.iter().filter(|s| s.is_finite() && **s > 0.0).map(|&s| to_t(s)).collect();
    integrate(
        |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                return 0.0;
            }
            let u = t / (1.0 - t);
            let du_dt = 1.0 / ((1.0 - t) * (1.0 - t));
            let s = 1.0 / u;
            let v = g(s) * du_dt / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        &breaks,
        spec,
    )
}

/// ln of the scalar Wishart (gamma) density with shape ν and scale σ at x:
/// x^{ν/2−1} e^{−x/(2σ)} / ((2σ)^{ν/2} Γ(ν/2)).
fn log_scalar_wishart(nu: f64, sigma: f64, x: f64) -> f64 {
    (nu / 2.0 - 1.0) * x.ln() - x / (2.0 * sigma) - (nu / 2.0) * (2.0 * sigma).ln() - ln_gamma(nu / 2.0)
}

/// Scalar kernel K_{ν(b,1), b s}(x).
fn scalar_kernel(b: f64, s: f64, x: f64) -> f64 {
    log_scalar_wishart(1.0 / b + 2.0, b * s, x).exp()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// ∫₀^∞ K_{ν(b₁,1), b₁s}(x) K_{ν(b₂,1), b₂s}(y) ds by quadrature.
pub fn quad_overlap_1d(x: f64, y: f64, b1: f64, b2: f64, spec: &QuadratureSpec) -> Result<QuadEstimate> {
    for (name, v) in [("x", x), ("y", y), ("b1", b1), ("b2", b2)] {
        check_positive(name, v)?;
    }
    integrate_half_line(|s| scalar_kernel(b1, s, x) * scalar_kernel(b2, s, y), &[x, y], spec)
}

fn scalar_values(sample: &Sample) -> Result<Vec<f64>> {
    if sample.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: sample.dim() });
    }
    Ok(sample.items().iter().map(|m| m.get(0, 0)).collect())
}

fn scalar_kde(values: &[f64], b: f64, s: f64) -> f64 {
    values.iter().map(|&x| scalar_kernel(b, s, x)).sum::<f64>() / values.len() as f64
}

/// n_eff ∫ (f̂₁ − f̂₂)² by quadrature, d = 1.
pub fn quad_statistic_1d(data: &TwoSampleData, b1: f64, b2: f64, spec: &QuadratureSpec) -> Result<QuadEstimate> {
    check_positive("b1", b1)?;
    check_positive("b2", b2)?;
    let x1 = scalar_values(data.sample1())?;
    let x2 = scalar_values(data.sample2())?;
    let centres: Vec<f64> = x1.iter().chain(&x2).copied().collect();
    let n_eff = data.n_eff();
    let est = integrate_half_line(
        |s| {
            let diff = scalar_kde(&x1, b1, s) - scalar_kde(&x2, b2, s);
            diff * diff
        },
        &centres,
        spec,
    )?;
    Ok(QuadEstimate { value: n_eff * est.value, error: n_eff * est.error, subdivisions: est.subdivisions })
}

/// ∫ f̂ by quadrature, d = 1.
pub fn quad_mass_1d(sample: &Sample, b: f64, spec: &QuadratureSpec) -> Result<QuadEstimate> {
    check_positive("b", b)?;
    let x = scalar_values(sample)?;
    integrate_half_line(|s| scalar_kde(&x, b, s), &x, spec)
}

/// V₁,₁ = ∫ f(s)/s ds and V₂,₂ = ∫ f(s)²/s ds for the scalar Wishart truth f.
pub fn quad_moments_1d(truth: &WishartParams, spec: &QuadratureSpec) -> Result<(QuadEstimate, QuadEstimate)> {
    if truth.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: truth.dim() });
    }
    let (nu, sigma) = (truth.nu(), truth.scale().get(0, 0));
    let mode = (nu * sigma).max(f64::MIN_POSITIVE);
    let v11 = integrate_half_line(|s| (log_scalar_wishart(nu, sigma, s) - s.ln()).exp(), &[mode], spec)?;
    let v22 = integrate_half_line(|s| (2.0 * log_scalar_wishart(nu, sigma, s) - s.ln()).exp(), &[mode], spec)?;
    Ok((v11, v22))
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_draws: usize,
}

const MC_BLOCK: usize = 4096;

/// κ_b(X, Y) by importance sampling over U = S⁻¹.
///
/// In U the integrand K(X; ν, bU⁻¹) K(Y; ν, bU⁻¹) |U|^{−(d+1)} is drawn from a
/// Wishart proposal of shape ν(b, d) + d + 1 whose mean matches the
/// integrand's mean (2/b + d + 1)·b(X + Y)⁻¹; the weight then has finite
/// variance for every b and d. Block k of 4096 draws uses stream k of `seed`.
pub fn mc_overlap(x: &SpdMatrix, y: &SpdMatrix, b: f64, n_draws: usize, seed: u64) -> Result<McEstimate> {
    check_positive("b", b)?;
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    if n_draws < 2 {
        return Err(Error::InvalidParameter("at least two draws are needed".into()));
    }
    let d = x.dim();
    let df = d as f64;
    let nu = 1.0 / b + df + 1.0;
    let nu_p = nu + df + 1.0;
    let target_shape = 2.0 / b + df + 1.0;
    let sum = crate::spd::weighted_sum(x, 1.0 / b, y, 1.0 / b)?;
    let proposal = WishartParams::new(nu_p, sum.inverse()?.scaled(target_shape / nu_p)?)?;
    let blocks = n_draws.div_ceil(MC_BLOCK);
    let log_weights: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let len = MC_BLOCK.min(n_draws - k * MC_BLOCK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let u = sample_wishart(&proposal, &mut rng)?;
                let s = u.inverse()?.scaled(b)?;
                let kernel = WishartParams::new(nu, s)?;
                let log_g = log_density(&kernel, x)? + log_density(&kernel, y)? - (df + 1.0) * u.log_det();
                out.push(log_g - log_density(&proposal, &u)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::DegenerateProposal(format!("largest log weight is {shift}")));
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - shift).exp()).collect();
    let nf = n_draws as f64;
    let mean = pairwise_sum(&w) / nf;
    let sq: Vec<f64> = w.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (nf - 1.0);
    let scale = shift.exp();
    let est = McEstimate { estimate: mean * scale, stderr: (var / nf).sqrt() * scale, n_draws };
    if !est.estimate.is_finite() || !est.stderr.is_finite() {
        return Err(Error::DegenerateProposal(format!("estimate {} with stderr {}", est.estimate, est.stderr)));
    }
    Ok(est)
}
