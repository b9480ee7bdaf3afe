//! Symmetric and symmetric positive definite matrices.
//!
//! [`SpdMatrix`] is the sample-space element of the whole crate. It is
//! validated once, and its lower Cholesky factor and log-determinant are
//! cached so the O(n²) pairwise loops never refactor a sample matrix.

use crate::error::{Error, Result};

/// Default relative asymmetry tolerance (Frobenius norm).
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Pivots at or below this value are treated as singular.
pub const MIN_PIVOT: f64 = 1e-300;

/// Largest dimension handled with stack buffers in the pairwise hot path.
const STACK_DIM: usize = 8;

/// A square matrix intended to be symmetric, stored row-major.
///
/// Symmetry is not enforced on construction; [`validate_spd`] checks it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::LengthMismatch { expected: dim * dim, found: entries.len() });
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// ‖M − Mᵀ‖_F / ‖M‖_F (zero for the zero matrix).
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a = self.entries[i * d + j];
                norm += a * a;
                let t = a - self.entries[j * d + i];
                diff += t * t;
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            (diff / norm).sqrt()
        }
    }

    /// Average with the transpose.
    pub fn symmetrized(&self) -> Self {
        let d = self.dim;
        let mut entries = self.entries.clone();
        for i in 0..d {
            for j in (i + 1)..d {
                let m = 0.5 * (self.entries[i * d + j] + self.entries[j * d + i]);
                entries[i * d + j] = m;
                entries[j * d + i] = m;
            }
        }
        Self { dim: d, entries }
    }
}

/// Upper triangle (row-major, diagonal included) of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfVector {
    dim: usize,
    values: Vec<f64>,
}

/// r(d) = d(d+1)/2.
pub fn half_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl HalfVector {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != half_len(dim) {
            return Err(Error::LengthMismatch { expected: half_len(dim), found: values.len() });
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn half_vectorize(m: &SymmetricMatrix) -> HalfVector {
    let d = m.dim;
    let mut values = Vec::with_capacity(half_len(d));
    for i in 0..d {
        for j in i..d {
            values.push(m.entries[i * d + j]);
        }
    }
    HalfVector { dim: d, values }
}

pub fn unhalf_vectorize(v: &HalfVector) -> SymmetricMatrix {
    let d = v.dim;
    let mut entries = vec![0.0; d * d];
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            entries[i * d + j] = v.values[k];
            entries[j * d + i] = v.values[k];
            k += 1;
        }
    }
    SymmetricMatrix { dim: d, entries }
}

/// A validated symmetric positive definite matrix with cached factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    entries: Vec<f64>,
    chol_lower: Vec<f64>,
    log_det: f64,
}

impl SpdMatrix {
    /// Validate row-major entries with the default symmetry tolerance.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        validate_spd(&SymmetricMatrix::new(dim, entries)?, SYMMETRY_TOL)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim]).expect("identity is SPD")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut entries = vec![0.0; d * d];
        for (i, &v) in diag.iter().enumerate() {
            entries[i * d + i] = v;
        }
        Self::new(d, entries)
    }

    /// Build directly from a lower-triangular factor L, giving L Lᵀ.
    pub(crate) fn from_factor(dim: usize, chol_lower: Vec<f64>) -> Result<Self> {
        let d = dim;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += chol_lower[i * d + k] * chol_lower[j * d + k];
                }
                entries[i * d + j] = s;
                entries[j * d + i] = s;
            }
        }
        // Refactor rather than trusting the input factor's signs.
        Self::from_symmetric_entries(d, entries)
    }

    fn from_symmetric_entries(dim: usize, entries: Vec<f64>) -> Result<Self> {
        let mut chol_lower = entries.clone();
        let log_det = cholesky_in_place(&mut chol_lower, dim)?;
        Ok(Self { dim, entries, chol_lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn chol_lower(&self) -> &[f64] {
        &self.chol_lower
    }

    /// Natural log of the determinant.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn to_symmetric(&self) -> SymmetricMatrix {
        SymmetricMatrix { dim: self.dim, entries: self.entries.clone() }
    }

    pub fn half_vector(&self) -> HalfVector {
        half_vectorize(&self.to_symmetric())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {c}")));
        }
        Self::from_symmetric_entries(self.dim, self.entries.iter().map(|v| v * c).collect())
    }

    /// Inverse through the cached factor.
    pub fn inverse(&self) -> Result<Self> {
        let d = self.dim;
        let l = &self.chol_lower;
        // Invert L by forward substitution, then M⁻¹ = L⁻ᵀ L⁻¹.
        let mut linv = vec![0.0; d * d];
        for col in 0..d {
            for i in col..d {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in col..i {
                    s -= l[i * d + k] * linv[k * d + col];
                }
                linv[i * d + col] = s / l[i * d + i];
            }
        }
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..d {
                    s += linv[k * d + i] * linv[k * d + j];
                }
                entries[i * d + j] = s;
                entries[j * d + i] = s;
            }
        }
        Self::from_symmetric_entries(d, entries)
    }

    /// tr(self · other).
    pub fn trace_product(&self, other: &SpdMatrix) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.entries[i * d + j] * other.entries[j * d + i];
            }
        }
        s
    }

    /// A · self · Aᵀ for a row-major d×d matrix A.
    pub fn congruence(&self, a: &[f64]) -> Result<Self> {
        let d = self.dim;
        if a.len() != d * d {
            return Err(Error::LengthMismatch { expected: d * d, found: a.len() });
        }
        let mut ax = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += a[i * d + k] * self.entries[k * d + j];
                }
                ax[i * d + j] = s;
            }
        }
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..d {
                    s += ax[i * d + k] * a[j * d + k];
                }
                entries[i * d + j] = s;
                entries[j * d + i] = s;
            }
        }
        Self::from_symmetric_entries(d, entries)
    }
}

/// Check symmetry, symmetrize, and factor.
pub fn validate_spd(m: &SymmetricMatrix, tol: f64) -> Result<SpdMatrix> {
    if m.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let asymmetry = m.asymmetry();
    if asymmetry > tol {
        return Err(Error::NotSymmetric { asymmetry, tol });
    }
    let sym = m.symmetrized();
    SpdMatrix::from_symmetric_entries(sym.dim, sym.entries)
}

pub fn log_det(x: &SpdMatrix) -> f64 {
    x.log_det
}

/// wx·X + wy·Y for positive weights.
pub fn weighted_sum(x: &SpdMatrix, wx: f64, y: &SpdMatrix, wy: f64) -> Result<SpdMatrix> {
    check_weighted_args(x, wx, y, wy)?;
    let entries = x.entries.iter().zip(&y.entries).map(|(a, b)| wx * a + wy * b).collect();
    SpdMatrix::from_symmetric_entries(x.dim, entries)
}

fn check_weighted_args(x: &SpdMatrix, wx: f64, y: &SpdMatrix, wy: f64) -> Result<()> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch { expected: x.dim, found: y.dim });
    }
    if !(wx > 0.0 && wy > 0.0) {
        return Err(Error::InvalidParameter(format!("weights must be positive, got {wx} and {wy}")));
    }
    Ok(())
}

/// ln|wx·X + wy·Y| without allocating for small dimensions.
pub(crate) fn log_det_weighted_sum(x: &SpdMatrix, wx: f64, y: &SpdMatrix, wy: f64) -> Result<f64> {
    check_weighted_args(x, wx, y, wy)?;
    let d = x.dim;
    if d == 1 {
        let v = wx * x.entries[0] + wy * y.entries[0];
        if v <= MIN_PIVOT {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: v });
        }
        return Ok(v.ln());
    }
    if d <= STACK_DIM {
        let mut buf = [0.0f64; STACK_DIM * STACK_DIM];
        let a = &mut buf[..d * d];
        for (k, slot) in a.iter_mut().enumerate() {
            *slot = wx * x.entries[k] + wy * y.entries[k];
        }
        cholesky_in_place(a, d)
    } else {
        let mut a: Vec<f64> = x.entries.iter().zip(&y.entries).map(|(p, q)| wx * p + wy * q).collect();
        cholesky_in_place(&mut a, d)
    }
}

/// Overwrite `a` with its lower Cholesky factor (upper part zeroed) and
/// return the log-determinant.
pub(crate) fn cholesky_in_place(a: &mut [f64], d: usize) -> Result<f64> {
    let mut log_det = 0.0;
    for j in 0..d {
        let mut pivot = a[j * d + j];
        for k in 0..j {
            pivot -= a[j * d + k] * a[j * d + k];
        }
        if !(pivot > MIN_PIVOT) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        a[j * d + j] = ljj;
        log_det += pivot.ln();
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
        for i in 0..j {
            a[i * d + j] = 0.0;
        }
    }
    Ok(log_det)
}
