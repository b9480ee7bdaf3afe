//! Wishart densities, the KDE kernel parameterization, a Bartlett sampler,
//! and the closed-form overlap kernel κ.
//!
//! κ_{b₁,b₂}(X, Y) = ∫ K_{ν(b₁,d), b₁S}(X) K_{ν(b₂,d), b₂S}(Y) dS is the
//! Gram kernel of the two-sample statistic. It is evaluated entirely in the
//! log domain:
//!
//! ```text
//! ln κ = ln C(b₁, b₂) + ln|X|/(2b₁) + ln|Y|/(2b₂) − α ln|X/b₁ + Y/b₂|
//! α    = 1/(2b₁) + 1/(2b₂) + (d+1)/2
//! ```

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spd::{half_len, log_det_weighted_sum, SpdMatrix};
use crate::special::{checked_exp, log_multigamma};

/// Shape ν and scale Σ of a Wishart law.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartParams {
    nu: f64,
    scale: SpdMatrix,
}

impl WishartParams {
    pub fn new(nu: f64, scale: SpdMatrix) -> Result<Self> {
        let d = scale.dim() as f64;
        if !(nu > d - 1.0) || !nu.is_finite() {
            return Err(Error::Domain(format!("Wishart shape must exceed d - 1 = {}, got {nu}", d - 1.0)));
        }
        Ok(Self { nu, scale })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    /// E[X] = ν Σ, row-major.
    pub fn mean(&self) -> Vec<f64> {
        self.scale.entries().iter().map(|v| v * self.nu).collect()
    }
}

/// Bandwidth and dimension of the Wishart KDE kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    b: f64,
    d: usize,
}

impl KernelSpec {
    pub fn new(b: f64, d: usize) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive and finite, got {b}")));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { b, d })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// ν(b, d) = 1/b + d + 1.
    pub fn nu(&self) -> f64 {
        1.0 / self.b + self.d as f64 + 1.0
    }
}

/// The kernel centred at S: shape ν(b, d), scale bS.
pub fn kernel_params(spec: KernelSpec, s: &SpdMatrix) -> Result<WishartParams> {
    if s.dim() != spec.d {
        return Err(Error::DimensionMismatch { expected: spec.d, found: s.dim() });
    }
    WishartParams::new(spec.nu(), s.scaled(spec.b)?)
}

/// A Wishart density with its normalizing constant precomputed.
#[derive(Debug, Clone)]
pub(crate) struct PreparedDensity {
    d: usize,
    exponent: f64,
    log_norm: f64,
    scale_chol: Vec<f64>,
}

impl PreparedDensity {
    pub(crate) fn new(p: &WishartParams) -> Result<Self> {
        let d = p.dim();
        let df = d as f64;
        let log_norm = -(p.nu / 2.0) * (df * LN_2 + p.scale.log_det()) - log_multigamma(d, p.nu / 2.0)?;
        Ok(Self {
            d,
            exponent: p.nu / 2.0 - (df + 1.0) / 2.0,
            log_norm,
            scale_chol: p.scale.chol_lower().to_vec(),
        })
    }

    pub(crate) fn log_eval(&self, x: &SpdMatrix) -> Result<f64> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.dim() });
        }
        Ok(self.exponent * x.log_det() - 0.5 * trace_inv_product(&self.scale_chol, x.chol_lower(), self.d)
            + self.log_norm)
    }
}

/// tr(Σ⁻¹X) = ‖L_Σ⁻¹ L_X‖²_F given both lower factors.
fn trace_inv_product(l_sigma: &[f64], l_x: &[f64], d: usize) -> f64 {
    if d == 1 {
        let q = l_x[0] / l_sigma[0];
        return q * q;
    }
    let mut total = 0.0;
    let mut z = [0.0f64; 16];
    let mut heap;
    let col: &mut [f64] = if d <= 16 {
        &mut z[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    for c in 0..d {
        // Column c of L_X is zero above row c.
        for i in 0..d {
            let mut s = if i >= c { l_x[i * d + c] } else { 0.0 };
            for k in 0..i {
                s -= l_sigma[i * d + k] * col[k];
            }
            col[i] = s / l_sigma[i * d + i];
            total += col[i] * col[i];
        }
    }
    total
}

/// ln K_{ν,Σ}(X).
pub fn log_density(p: &WishartParams, x: &SpdMatrix) -> Result<f64> {
    PreparedDensity::new(p)?.log_eval(x)
}

/// One Wishart draw by the Bartlett decomposition X = (L A)(L A)ᵀ with
/// A lower triangular, A_ii² ~ χ²(ν − i), A_ij ~ N(0, 1) below the diagonal.
pub fn sample_wishart<R: Rng + ?Sized>(p: &WishartParams, rng: &mut R) -> Result<SpdMatrix> {
    let d = p.dim();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        let chi = ChiSquared::new(p.nu - i as f64)
            .map_err(|e| Error::Domain(format!("chi-square degrees of freedom: {e}")))?;
        a[i * d + i] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[i * d + j] = StandardNormal.sample(rng);
        }
    }
    let l = p.scale.chol_lower();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = 0.0;
            for k in j..=i {
                s += l[i * d + k] * a[k * d + j];
            }
            m[i * d + j] = s;
        }
    }
    SpdMatrix::from_factor(d, m)
}

/// Precomputed overlap kernel κ_{b₁,b₂} for a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapKernel {
    d: usize,
    b1: f64,
    b2: f64,
    log_coef: f64,
    e1: f64,
    e2: f64,
    alpha: f64,
    w1: f64,
    w2: f64,
    equal: bool,
}

fn check_b(b: f64) -> Result<()> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive and finite, got {b}")));
    }
    Ok(())
}

impl OverlapKernel {
    /// Uses the equal-bandwidth simplification when `b1 == b2`.
    pub fn new(d: usize, b1: f64, b2: f64) -> Result<Self> {
        if b1 == b2 {
            Self::equal(d, b1)
        } else {
            Self::general(d, b1, b2)
        }
    }

    /// Equal bandwidths: coefficient (b^{−r}/2^r) Γ_d(1/b + (d+1)/2) / Γ_d(1/(2b) + (d+1)/2)²
    /// applied to |X|^{1/(2b)} |Y|^{1/(2b)} / |X + Y|^{1/b + (d+1)/2}.
    pub fn equal(d: usize, b: f64) -> Result<Self> {
        check_b(b)?;
        let r = half_len(d) as f64;
        let half = (d as f64 + 1.0) / 2.0;
        let log_coef = -r * b.ln() - r * LN_2 + log_multigamma(d, 1.0 / b + half)?
            - 2.0 * log_multigamma(d, 1.0 / (2.0 * b) + half)?;
        let e = 1.0 / (2.0 * b);
        Ok(Self { d, b1: b, b2: b, log_coef, e1: e, e2: e, alpha: 1.0 / b + half, w1: 1.0, w2: 1.0, equal: true })
    }

    /// The closed form for arbitrary bandwidths, term by term.
    pub fn general(d: usize, b1: f64, b2: f64) -> Result<Self> {
        check_b(b1)?;
        check_b(b2)?;
        let r = half_len(d) as f64;
        let df = d as f64;
        let half = (df + 1.0) / 2.0;
        let e1 = 1.0 / (2.0 * b1);
        let e2 = 1.0 / (2.0 * b2);
        let alpha = e1 + e2 + half;
        let log_coef = -r * LN_2 + (-df * e1 - r) * b1.ln() + (-df * e2 - r) * b2.ln() + log_multigamma(d, alpha)?
            - log_multigamma(d, e1 + half)?
            - log_multigamma(d, e2 + half)?;
        Ok(Self { d, b1, b2, log_coef, e1, e2, alpha, w1: 1.0 / b1, w2: 1.0 / b2, equal: false })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bandwidths(&self) -> (f64, f64) {
        (self.b1, self.b2)
    }

    /// ln of the Γ_d coefficient.
    pub fn log_coefficient(&self) -> f64 {
        self.log_coef
    }

    /// ln κ(X, Y), with X smoothed at b₁ and Y at b₂.
    pub fn log_eval(&self, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.dim() });
        }
        let ld_sum = log_det_weighted_sum(x, self.w1, y, self.w2)?;
        if self.equal {
            // e1 == e2: write the data term symmetrically so swapping X and Y is exact.
            Ok(self.log_coef + self.e1 * (x.log_det() + y.log_det()) - self.alpha * ld_sum)
        } else {
            Ok(self.log_coef + self.e1 * x.log_det() + self.e2 * y.log_det() - self.alpha * ld_sum)
        }
    }

    pub fn eval(&self, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
        let v = self.log_eval(x, y)?;
        checked_exp(v, "overlap kernel")
    }
}

/// ln κ_{b₁,b₂}(X, Y).
pub fn log_overlap(b1: f64, b2: f64, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    OverlapKernel::new(x.dim(), b1, b2)?.log_eval(x, y)
}
