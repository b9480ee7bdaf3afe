//! Log-domain special functions and the dimensional constants of the
//! shrinking- and fixed-bandwidth null limits.
//!
//! Every gamma-ratio quantity has a `log_*` form; the linear-domain
//! functions only exponentiate and report overflow.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::spd::half_len;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest argument of `exp` that stays finite.
const MAX_EXP_ARG: f64 = 709.78;

/// Bernoulli-number coefficients B_{2k} / (2k(2k-1)) of the Stirling series.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// ln Γ(x) for x > 0; NaN otherwise.
///
/// Stirling series for x ≥ 10, upward recurrence below.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut shift = 1.0;
    let mut z = x;
    while z < 10.0 {
        shift *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for c in STIRLING.iter().rev() {
        series = series * inv2 + c;
    }
    series *= inv;
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + series - shift.ln()
}

/// ln Γ_d(α) = d(d−1)/4 · ln π + Σᵢ ln Γ(α − (i−1)/2).
pub fn log_multigamma(d: usize, alpha: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let lower = (d as f64 - 1.0) / 2.0;
    if !(alpha > lower) || !alpha.is_finite() {
        return Err(Error::Domain(format!("multivariate gamma needs alpha > {lower}, got {alpha}")));
    }
    let mut s = (d * (d - 1)) as f64 / 4.0 * LN_PI;
    for i in 0..d {
        s += ln_gamma(alpha - i as f64 / 2.0);
    }
    Ok(s)
}

fn check_bandwidth(b: f64) -> Result<()> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive and finite, got {b}")));
    }
    Ok(())
}

pub(crate) fn checked_exp(log_value: f64, what: &str) -> Result<f64> {
    if log_value > MAX_EXP_ARG {
        return Err(Error::Overflow(format!("{what}: log value {log_value} is not representable")));
    }
    Ok(log_value.exp())
}

/// ln A_d(b), with
/// A_d(b) = b^{−r} 2^{−d/b−2r} Γ_d(1/b + (d+1)/2) / Γ_d(1/(2b) + (d+1)/2)².
pub fn log_centering_a(d: usize, b: f64) -> Result<f64> {
    check_bandwidth(b)?;
    let r = half_len(d) as f64;
    let df = d as f64;
    let half = (df + 1.0) / 2.0;
    Ok(-r * b.ln() - (df / b + 2.0 * r) * LN_2 + log_multigamma(d, 1.0 / b + half)?
        - 2.0 * log_multigamma(d, 1.0 / (2.0 * b) + half)?)
}

/// The centering constant A_d(b) of the shrinking-bandwidth limit.
pub fn centering_a(d: usize, b: f64) -> Result<f64> {
    checked_exp(log_centering_a(d, b)?, "centering constant A_d(b)")
}

/// Dimensional constants of the shrinking-bandwidth limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConstants {
    pub d: usize,
    pub r: usize,
    /// c_d = 2^{−d(d+2)/2} π^{−r/2}
    pub c_d: f64,
    /// I_d = (2√π)^d (√(2π))^{d(d−1)/2}
    pub i_d: f64,
    /// v_d = 2 c_d² I_d
    pub v_d: f64,
}

pub fn limit_constants(d: usize) -> LimitConstants {
    let r = half_len(d);
    let df = d as f64;
    let rf = r as f64;
    let c_d = (-(df * (df + 2.0) / 2.0) * LN_2 - rf / 2.0 * LN_PI).exp();
    let i_d = (df * (2.0 * PI.sqrt()).ln() + (df * (df - 1.0) / 2.0) * (2.0 * PI).sqrt().ln()).exp();
    LimitConstants { d, r, c_d, i_d, v_d: 2.0 * c_d * c_d * i_d }
}

/// The closed form v_d = 2^{−(3r+d−2)/2} π^{−r/2}.
pub fn v_d_closed_form(d: usize) -> f64 {
    let rf = half_len(d) as f64;
    let df = d as f64;
    (-(3.0 * rf + df - 2.0) / 2.0 * LN_2 - rf / 2.0 * LN_PI).exp()
}

/// J_{d,p} = ∫ exp{−p tr(U²)/8} dU over symmetric matrices
/// = (√(8π/p))^d (√(4π/p))^{d(d−1)/2}.
pub fn gauss_integral_j(d: usize, p: u32) -> f64 {
    assert!(d >= 1 && p >= 1, "gauss_integral_j needs d, p >= 1");
    let df = d as f64;
    let pf = p as f64;
    (df * 0.5 * (8.0 * PI / pf).ln() + df * (df - 1.0) / 2.0 * 0.5 * (4.0 * PI / pf).ln()).exp()
}

/// ln of (b^{−r}/2^r) Γ_d(1/(2b)) / Γ_d(1/(2b) + (d+1)/2).
pub fn log_kernel_mass(d: usize, b: f64) -> Result<f64> {
    check_bandwidth(b)?;
    let r = half_len(d) as f64;
    let z = 1.0 / (2.0 * b);
    if !(z > (d as f64 - 1.0) / 2.0) {
        return Err(Error::Domain(format!(
            "kernel mass needs 1/(2b) > (d-1)/2; b = {b} is too large for d = {d}"
        )));
    }
    Ok(-r * b.ln() - r * LN_2 + log_multigamma(d, z)? - log_multigamma(d, z + (d as f64 + 1.0) / 2.0)?)
}

/// Total mass of the Wishart KDE, which also equals ∫ κ_b(X, Y) dY.
pub fn kernel_mass(d: usize, b: f64) -> Result<f64> {
    checked_exp(log_kernel_mass(d, b)?, "kernel mass")
}

/// P(Z > z) for a standard normal Z.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}
