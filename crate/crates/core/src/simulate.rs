//! Wishart scenario generators and the replicated-experiment harness.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{lscv_select, log_grid, plugin_moments, MomentEstimates, Sample};
use crate::oracles::{quad_moments_1d, QuadratureSpec};
use crate::rng::{derive_seed, stream};
use crate::spd::{half_len, SpdMatrix};
use crate::special::normal_cdf;
use crate::two_sample::{
    gaussian_test, permutation_test, spectral_test, Bandwidths, Diagnostics, Method, MomentSource, TestResult,
    TwoSampleData,
};
use crate::wishart::{sample_wishart, WishartParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Both samples from Wishart(ν₁, Σ₁).
    Null,
    /// Sample 2 from Wishart(ν₁, c·Σ₁) with c = `scale_factor`.
    ScaleShift,
    /// Sample 2 from Wishart(ν₂, Σ₁).
    ShapeShift,
    /// Sample 2 from Wishart(ν₁, RΣ₁Rᵀ) with R orthogonal.
    RotationOnly,
}

/// A two-sample Wishart model. Matrices are nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub d: usize,
    pub nu1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu2: Option<f64>,
    pub sigma1: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<f64>,
    /// Degrees, counter-clockwise; d = 2 only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
    pub n1: usize,
    pub n2: usize,
}

fn flatten(rows: &[Vec<f64>], d: usize, what: &str) -> Result<Vec<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidScenario(format!("{what} must be a {d}x{d} matrix")));
    }
    Ok(rows.iter().flatten().copied().collect())
}

/// The 2×2 counter-clockwise rotation by `degrees`.
pub fn rotation_2d(degrees: f64) -> Vec<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    vec![c, -s, s, c]
}

impl ScenarioSpec {
    fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidScenario(msg.into())
    }

    pub fn sigma1_matrix(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.d, flatten(&self.sigma1, self.d, "sigma1")?).map_err(|e| Self::invalid(format!("sigma1: {e}")))
    }

    /// R for rotation_only: the explicit matrix if given, else the 2-d angle.
    pub fn rotation_matrix(&self) -> Result<Vec<f64>> {
        let d = self.d;
        let r = match (&self.rotation, self.rotation_angle) {
            (Some(rows), _) => flatten(rows, d, "rotation")?,
            (None, Some(angle)) if d == 2 => rotation_2d(angle),
            (None, Some(_)) => return Err(Self::invalid("rotation_angle applies to d = 2 only; give an explicit rotation")),
            (None, None) => return Err(Self::invalid("rotation_only needs rotation_angle (d = 2) or rotation")),
        };
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| r[i * d + k] * r[j * d + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-10 {
                    return Err(Self::invalid("rotation is not orthogonal"));
                }
            }
        }
        Ok(r)
    }

    /// The Wishart laws of sample 1 and sample 2.
    pub fn laws(&self) -> Result<(WishartParams, WishartParams)> {
        if self.d == 0 {
            return Err(Self::invalid("d must be at least 1"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Self::invalid("n1 and n2 must be at least 1"));
        }
        let sigma1 = self.sigma1_matrix()?;
        let law = |nu: f64, s: SpdMatrix| WishartParams::new(nu, s).map_err(|e| Self::invalid(e.to_string()));
        let first = law(self.nu1, sigma1.clone())?;
        let second = match self.kind {
            ScenarioKind::Null => first.clone(),
            ScenarioKind::ScaleShift => {
                let c = self.scale_factor.ok_or_else(|| Self::invalid("scale_shift needs scale_factor"))?;
                if !(c > 0.0) || !c.is_finite() {
                    return Err(Self::invalid(format!("scale_factor must be positive, got {c}")));
                }
                law(self.nu1, sigma1.scaled(c)?)?
            }
            ScenarioKind::ShapeShift => {
                let nu2 = self.nu2.ok_or_else(|| Self::invalid("shape_shift needs nu2"))?;
                law(nu2, sigma1)?
            }
            ScenarioKind::RotationOnly => law(self.nu1, sigma1.congruence(&self.rotation_matrix()?)?)?,
        };
        Ok((first, second))
    }
}

/// Draw sample 1 then sample 2 from the scenario.
pub fn generate_scenario<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<TwoSampleData> {
    let (p1, p2) = spec.laws()?;
    let s1: Vec<SpdMatrix> = (0..spec.n1).map(|_| sample_wishart(&p1, rng)).collect::<Result<_>>()?;
    let s2: Vec<SpdMatrix> = (0..spec.n2).map(|_| sample_wishart(&p2, rng)).collect::<Result<_>>()?;
    TwoSampleData::new(Sample::new(s1)?, Sample::new(s2)?)
}

/// How each replicate picks its bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum BandwidthRule {
    Fixed { value: f64 },
    /// LSCV on the pooled sample over a log grid.
    Lscv {
        #[serde(default = "default_lscv_lo")]
        lo: f64,
        #[serde(default = "default_lscv_hi")]
        hi: f64,
        #[serde(default = "default_lscv_count")]
        count: usize,
    },
    /// b = c·n^{−γ} with n the pooled size; γ defaults to 1/r.
    Power {
        c: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
}

fn default_lscv_lo() -> f64 {
    0.005
}
fn default_lscv_hi() -> f64 {
    1.0
}
fn default_lscv_count() -> usize {
    25
}

impl BandwidthRule {
    fn gamma(&self, d: usize) -> Option<f64> {
        match self {
            BandwidthRule::Power { gamma, .. } => Some(gamma.unwrap_or(1.0 / half_len(d) as f64)),
            _ => None,
        }
    }

    pub fn select(&self, pooled: &Sample) -> Result<f64> {
        let b = match self {
            BandwidthRule::Fixed { value } => *value,
            BandwidthRule::Lscv { lo, hi, count } => lscv_select(pooled, &log_grid(*lo, *hi, *count)?)?.b_opt,
            BandwidthRule::Power { c, .. } => {
                let gamma = self.gamma(pooled.dim()).expect("power rule");
                c * (pooled.len() as f64).powf(-gamma)
            }
        };
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("bandwidth rule produced {b}")));
        }
        Ok(b)
    }
}

/// V₁,₁ and V₂,₂ of the simulation truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleMoments {
    pub v11: f64,
    pub v22: f64,
}

fn default_n_perm() -> usize {
    199
}
fn default_n_draws() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub bandwidth_rule: BandwidthRule,
    pub method: Method,
    #[serde(default = "default_n_perm")]
    pub n_perm: usize,
    #[serde(default = "default_n_draws")]
    pub n_draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Used by the Gaussian method instead of pooled plug-ins when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_moments: Option<OracleMoments>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.scenario.laws()?;
        if let Some(gamma) = self.bandwidth_rule.gamma(self.scenario.d) {
            let r = half_len(self.scenario.d) as f64;
            if self.method == Method::Gaussian && !(gamma > 0.0 && gamma * r / 2.0 < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "power rule needs 0 < gamma and gamma*r/2 < 1 for the gaussian method (gamma = {gamma}, r = {r})"
                )));
            }
        }
        Ok(())
    }
}

/// One replicate's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub index: usize,
    pub seed: u64,
    pub b: f64,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub reps: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Binomial standard error √(p̂(1 − p̂)/reps).
    pub rejection_se: f64,
    /// Counts of p-values in [0, 0.1), [0.1, 0.2), …, [0.9, 1].
    pub p_value_deciles: [usize; 10],
    pub records: Vec<RepRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

fn replicate_data(config: &ExperimentConfig, index: usize) -> Result<(u64, TwoSampleData)> {
    let seed = derive_seed(config.master_seed, index as u64);
    let data = generate_scenario(&config.scenario, &mut stream(seed, 0))?;
    Ok((seed, data))
}

fn run_one(config: &ExperimentConfig, index: usize) -> Result<(RepRecord, TestResult)> {
    let (seed, data) = replicate_data(config, index)?;
    let pooled = data.pooled();
    let b = config.bandwidth_rule.select(&pooled)?;
    let bw = Bandwidths::common(b)?;
    let test_seed = derive_seed(seed, 1);
    let result = match config.method {
        Method::Gaussian => {
            let (moments, source) = match config.oracle_moments {
                Some(m) => (MomentEstimates { v11_hat: m.v11, v22_hat: m.v22, b_used: b }, MomentSource::Supplied),
                None => (plugin_moments(&pooled, b)?, MomentSource::PooledPlugin),
            };
            gaussian_test(&data, bw, &moments, source)?
        }
        Method::Spectral => spectral_test(&data, bw, config.n_draws, test_seed)?,
        Method::Permutation => permutation_test(&data, bw, config.n_perm, test_seed)?,
    };
    let z = match &result.diagnostics {
        Diagnostics::Gaussian(g) => Some(g.z_score),
        _ => None,
    };
    Ok((RepRecord { index, seed, b, statistic: result.statistic, p_value: result.p_value, z }, result))
}

fn run_all<T: Send, F>(config: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..config.reps)
        .into_par_iter()
        .map(|k| f(k).map_err(|e| Error::Replicate { index: k, source: Box::new(e) }))
        .collect()
}

/// Replicate the test `reps` times; replicate k draws from seed derive_seed(master_seed, k).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let records: Vec<RepRecord> = run_all(config, |k| run_one(config, k).map(|(r, _)| r))?;
    let rejections = records.iter().filter(|r| r.p_value <= config.alpha).count();
    let mut deciles = [0usize; 10];
    for r in &records {
        deciles[((r.p_value * 10.0).floor() as usize).min(9)] += 1;
    }
    let rate = rejections as f64 / config.reps as f64;
    Ok(ExperimentReport {
        config: config.clone(),
        reps: config.reps,
        rejections,
        rejection_rate: rate,
        rejection_se: (rate * (1.0 - rate) / config.reps as f64).sqrt(),
        p_value_deciles: deciles,
        records,
        wall_clock_seconds: None,
    })
}

/// Summary of standardized Gaussian-regime statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub reps: usize,
    pub mean: f64,
    pub variance: f64,
    /// Kolmogorov–Smirnov distance to N(0, 1).
    pub ks_distance: f64,
    pub moments: OracleMoments,
    pub z: Vec<f64>,
    pub b: Vec<f64>,
}

/// sup |F_n − Φ| for the sample `z`.
pub fn ks_distance_normal(z: &[f64]) -> f64 {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Moments of the scenario truth: the configured values, or quadrature when d = 1.
pub fn truth_moments(config: &ExperimentConfig) -> Result<OracleMoments> {
    if let Some(m) = config.oracle_moments {
        return Ok(m);
    }
    if config.scenario.kind != ScenarioKind::Null {
        return Err(Error::InvalidParameter("truth moments need a null scenario".into()));
    }
    if config.scenario.d != 1 {
        return Err(Error::InvalidParameter("oracle_moments must be given when d > 1".into()));
    }
    let (truth, _) = config.scenario.laws()?;
    let (v11, v22) = quad_moments_1d(&truth, &QuadratureSpec::default())?;
    Ok(OracleMoments { v11: v11.value, v22: v22.value })
}

/// Standardize T over `reps` null replicates with the truth's V₁,₁ and V₂,₂.
pub fn clt_diagnostic(config: &ExperimentConfig) -> Result<CltSummary> {
    if config.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    let moments = truth_moments(config)?;
    let mut gaussian = config.clone();
    gaussian.method = Method::Gaussian;
    gaussian.oracle_moments = Some(moments);
    gaussian.validate()?;
    let records: Vec<RepRecord> = run_all(&gaussian, |k| run_one(&gaussian, k).map(|(r, _)| r))?;
    let z: Vec<f64> = records.iter().map(|r| r.z.expect("gaussian records carry z")).collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let variance = if z.len() > 1 { z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(CltSummary {
        reps: z.len(),
        mean,
        variance,
        ks_distance: ks_distance_normal(&z),
        moments,
        b: records.iter().map(|r| r.b).collect(),
        z,
    })
}
