//! Pairwise kernel sums and Gram matrices.
//!
//! Rows are processed in parallel, each row is summed sequentially, and the
//! row totals are combined by pairwise summation in index order. The result
//! is therefore identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;
use crate::wishart::OverlapKernel;

/// Pairwise (cascade) summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub(crate) fn eval_pair(kernel: &OverlapKernel, x: &SpdMatrix, y: &SpdMatrix, i: usize, j: usize) -> Result<f64> {
    let log_v = kernel.log_eval(x, y)?;
    if log_v > 709.78 {
        let (b1, b2) = kernel.bandwidths();
        return Err(Error::Overflow(format!(
            "overlap kernel at pair ({i}, {j}) has log value {log_v:.3} (b1 = {b1}, b2 = {b2}); bandwidth too small"
        )));
    }
    Ok(log_v.exp())
}

/// Σᵢ Σⱼ κ(xᵢ, yⱼ).
pub fn cross_sum(kernel: &OverlapKernel, xs: &[SpdMatrix], ys: &[SpdMatrix]) -> Result<f64> {
    let rows: Vec<f64> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut s = 0.0;
            for (j, y) in ys.iter().enumerate() {
                s += eval_pair(kernel, x, y, i, j)?;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&rows))
}

/// Dense row-major square matrix of kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    /// G[i][j] = κ(zᵢ, zⱼ). Only the upper triangle is evaluated when the
    /// kernel has equal bandwidths.
    pub fn new(kernel: &OverlapKernel, items: &[SpdMatrix]) -> Result<Self> {
        let n = items.len();
        let (b1, b2) = kernel.bandwidths();
        let symmetric = b1 == b2;
        let rows: Vec<Vec<f64>> = items
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let start = if symmetric { i } else { 0 };
                let mut row = Vec::with_capacity(n - start);
                for (j, y) in items.iter().enumerate().skip(start) {
                    row.push(eval_pair(kernel, x, y, i, j)?);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            let start = if symmetric { i } else { 0 };
            for (k, v) in row.into_iter().enumerate() {
                let j = start + k;
                data[i * n + j] = v;
                if symmetric {
                    data[j * n + i] = v;
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_data(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, found: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Σ_{i∈rows} Σ_{j∈cols} G[i][j].
    pub fn block_sum(&self, rows: &[usize], cols: &[usize]) -> f64 {
        let totals: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let row = self.row(i);
                cols.iter().map(|&j| row[j]).sum::<f64>()
            })
            .collect();
        pairwise_sum(&totals)
    }

    pub fn row_means(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum::<f64>() / self.n as f64).collect()
    }

    /// H G H with H = I − 11ᵀ/n.
    pub fn double_centered(&self) -> Vec<f64> {
        let n = self.n;
        let row_means = self.row_means();
        let col_means: Vec<f64> =
            (0..n).map(|j| (0..n).map(|i| self.data[i * n + j]).sum::<f64>() / n as f64).collect();
        let grand = pairwise_sum(&row_means) / n as f64;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.data[i * n + j] - row_means[i] - col_means[j] + grand;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
