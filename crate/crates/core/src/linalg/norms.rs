//! Matrix and vector norms used by the regularisers and the bound measures.
//!
//! Sums run sequentially in row-major order so results are reproducible
//! bit-for-bit.

use crate::error::{Error, Result};

use super::tensor::MatrixView;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorNorm {
    L1,
    L2,
    Linf,
}

/// Norm used to measure a weight matrix or its distance from a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixNorm {
    /// Maximum absolute row sum, the operator norm induced by the vector ∞-norm.
    Mars,
    Frobenius,
}

impl MatrixNorm {
    pub fn name(self) -> &'static str {
        match self {
            MatrixNorm::Mars => "mars",
            MatrixNorm::Frobenius => "frobenius",
        }
    }
}

fn nonempty(m: &MatrixView<'_>) -> Result<()> {
    if m.is_empty() {
        Err(Error::domain("norm of an empty matrix"))
    } else {
        Ok(())
    }
}

/// `max_i Σ_j |M_ij|`
pub fn mars_norm(m: MatrixView<'_>) -> Result<f64> {
    nonempty(&m)?;
    Ok(m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

pub fn frobenius_norm(m: MatrixView<'_>) -> Result<f64> {
    nonempty(&m)?;
    Ok(m.data().iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub fn matrix_norm(m: MatrixView<'_>, kind: MatrixNorm) -> Result<f64> {
    match kind {
        MatrixNorm::Mars => mars_norm(m),
        MatrixNorm::Frobenius => frobenius_norm(m),
    }
}

pub fn vector_norm(v: &[f64], kind: VectorNorm) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::domain("norm of an empty vector"));
    }
    Ok(match kind {
        VectorNorm::L1 => l1(v),
        VectorNorm::L2 => l2(v),
        VectorNorm::Linf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
    })
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖A − B‖` under `kind`, computed without materialising the difference.
pub fn distance(a: MatrixView<'_>, b: MatrixView<'_>, kind: MatrixNorm) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::domain(format!(
            "distance between {}x{} and {}x{} matrices",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    nonempty(&a)?;
    Ok(match kind {
        MatrixNorm::Mars => a
            .row_iter()
            .zip(b.row_iter())
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max),
        MatrixNorm::Frobenius => a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
    })
}
