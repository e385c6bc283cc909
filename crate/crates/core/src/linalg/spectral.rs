use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::norms::l2;

/// Settings for the power iteration on `AᵀA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub iters: usize,
    /// Stop once two successive estimates differ by less than this.
    pub tol: f64,
    /// Seed of the random unit start vector.
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            iters: 500,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub sigma: f64,
    /// `‖A v_k‖` after each iteration.
    pub history: Vec<f64>,
    pub seed: u64,
}

/// Estimates the largest singular value of a linear map given only the map
/// and its adjoint. The estimate `‖A v_k‖` never decreases across iterations
/// (up to rounding) and is a lower bound on the true value.
///
/// A zero operator yields `0`.
pub fn power_iteration<F, G>(
    mut apply: F,
    mut apply_adjoint: G,
    in_len: usize,
    opts: &PowerIteration,
) -> Result<SpectralEstimate>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    if opts.iters == 0 {
        return Err(Error::domain(
            "power iteration needs at least one iteration",
        ));
    }
    if in_len == 0 {
        return Err(Error::domain("power iteration on an empty input space"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..in_len)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let n = l2(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut history = Vec::with_capacity(opts.iters);
    let mut sigma = 0.0;
    for _ in 0..opts.iters {
        let av = apply(&v);
        let next_sigma = l2(&av);
        history.push(next_sigma);
        if next_sigma == 0.0 {
            sigma = 0.0;
            break;
        }
        let done = history.len() > 1 && (next_sigma - sigma).abs() < opts.tol;
        sigma = next_sigma;
        if done {
            break;
        }
        let mut w = apply_adjoint(&av);
        let wn = l2(&w);
        if wn == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
    }
    Ok(SpectralEstimate {
        sigma,
        history,
        seed: opts.seed,
    })
}

pub fn spectral_norm<F, G>(
    apply: F,
    apply_adjoint: G,
    in_len: usize,
    opts: &PowerIteration,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    power_iteration(apply, apply_adjoint, in_len, opts).map(|e| e.sigma)
}

/// Spectral norm of an explicit dense matrix.
pub fn matrix_spectral_norm(m: super::MatrixView<'_>, opts: &PowerIteration) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::domain("spectral norm of an empty matrix"));
    }
    spectral_norm(|x| m.matvec(x), |y| m.matvec_transposed(y), m.cols(), opts)
}
