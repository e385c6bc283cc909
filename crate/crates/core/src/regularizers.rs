//! Distance regularisers around reference weights.
//!
//! Projections map an updated weight matrix `Ŵ` back into the ball
//! `{W : ‖W − W0‖ ≤ γ}`:
//!
//! - Frobenius: translate to the origin, radially shrink onto the ℓ² ball,
//!   translate back.
//! - MARS: the ball is the intersection of per-row ℓ¹ balls, so each row of
//!   `Ŵ − W0` is projected independently. The default per-row map shrinks
//!   radially ("scaling"), which is feasible but not the Euclidean-nearest
//!   point; [`project_l1_ball_exact`] is the sort-and-threshold Euclidean
//!   projection.
//!
//! Penalties return a value and a (sub)gradient for `λ‖W − W0‖²_F` and
//! `λ‖W − W0‖_∞`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{l1, l2, MatrixNorm, Tensor};

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "radius must be non-negative, got {gamma}"
        )))
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// Divisor `max(1, norm/γ)`; `γ = 0` maps any nonzero input to the origin.
fn shrink_factor(norm: f64, gamma: f64) -> f64 {
    if norm <= gamma {
        1.0
    } else if gamma == 0.0 {
        f64::INFINITY
    } else {
        norm / gamma
    }
}

fn scale_into(t: &mut [f64], divisor: f64) {
    if divisor == 1.0 {
        return;
    }
    if divisor.is_infinite() {
        t.fill(0.0);
    } else {
        t.iter_mut().for_each(|x| *x /= divisor);
    }
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Writes `x0 + step` into `x`, shrinking `step` geometrically in ulps until
/// the recomputed distance is at most `gamma`. Without this, rounding in the
/// addition can leave the point just outside the ball and a second projection
/// would move it again.
fn settle(x: &mut [f64], x0: &[f64], step: &[f64], gamma: f64, dist: fn(&[f64], &[f64]) -> f64) {
    let mut k = 4.0 * f64::EPSILON;
    let mut shrink = 1.0;
    loop {
        for ((xi, &x0i), &si) in x.iter_mut().zip(x0).zip(step) {
            *xi = x0i + si * shrink;
        }
        if dist(x, x0) <= gamma || shrink == 0.0 {
            return;
        }
        shrink = (1.0 - k).max(0.0);
        k *= 2.0;
    }
}

/// In-place ball projection of a vector around the origin.
fn settle_at_origin(t: &mut [f64], gamma: f64, dist: fn(&[f64], &[f64]) -> f64) {
    let zero = vec![0.0; t.len()];
    if dist(t, &zero) > gamma {
        let step = t.to_vec();
        settle(t, &zero, &step, gamma, dist);
    }
}

/// `t / max(1, ‖t‖₂/γ)`, in place.
pub fn project_l2_ball_in_place(t: &mut [f64], gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    let d = shrink_factor(l2(t), gamma);
    scale_into(t, d);
    settle_at_origin(t, gamma, l2_dist);
    Ok(())
}

/// Euclidean projection onto the ℓ² ball of radius `γ`.
pub fn project_l2_ball(t: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = t.to_vec();
    project_l2_ball_in_place(&mut out, gamma)?;
    Ok(out)
}

/// `t / max(1, ‖t‖₁/γ)`, in place.
pub fn project_l1_ball_scaling_in_place(t: &mut [f64], gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    let d = shrink_factor(l1(t), gamma);
    scale_into(t, d);
    settle_at_origin(t, gamma, l1_dist);
    Ok(())
}

/// Radial shrink onto the ℓ¹ ball: feasible and direction-preserving but not
/// the closest feasible point in Euclidean distance.
pub fn project_l1_ball_scaling(t: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = t.to_vec();
    project_l1_ball_scaling_in_place(&mut out, gamma)?;
    Ok(out)
}

/// Euclidean projection onto the ℓ¹ ball via the sort-and-threshold simplex
/// projection of `|t|`: find `τ ≥ 0` with `Σ max(|t_i| − τ, 0) = γ` and
/// soft-threshold. Inputs already inside the ball are returned unchanged.
pub fn project_l1_ball_exact_in_place(t: &mut [f64], gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    if l1(t) <= gamma {
        return Ok(());
    }
    if gamma == 0.0 {
        t.fill(0.0);
        return Ok(());
    }
    let mut mags: Vec<f64> = t.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - gamma) / (k + 1) as f64;
        if u > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    for x in t.iter_mut() {
        *x = x.signum() * (x.abs() - tau).max(0.0);
    }
    settle_at_origin(t, gamma, l1_dist);
    Ok(())
}

pub fn project_l1_ball_exact(t: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = t.to_vec();
    project_l1_ball_exact_in_place(&mut out, gamma)?;
    Ok(out)
}

/// Row-wise ℓ¹ projection used inside the MARS projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L1Projection {
    #[default]
    Scaling,
    Exact,
}

impl FromStr for L1Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "scaling" => Ok(Self::Scaling),
            "exact" => Ok(Self::Exact),
            other => Err(Error::config(format!(
                "unknown l1 projection '{other}' (expected scaling|exact)"
            ))),
        }
    }
}

impl fmt::Display for L1Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Scaling => "scaling",
            Self::Exact => "exact",
        })
    }
}

/// `W0 + (Ŵ − W0)/max(1, ‖Ŵ − W0‖_F/γ)`. Returns `Ŵ` bitwise when it is
/// already inside the ball.
pub fn project_frobenius_distance(
    reference: &Tensor,
    updated: &Tensor,
    gamma: f64,
) -> Result<Tensor> {
    let mut out = updated.clone();
    project_frobenius_distance_in_place(reference, &mut out, gamma)?;
    Ok(out)
}

pub fn project_frobenius_distance_in_place(
    reference: &Tensor,
    w: &mut Tensor,
    gamma: f64,
) -> Result<()> {
    check_same_shape(reference, w)?;
    check_gamma(gamma)?;
    let r = reference.data();
    let d = shrink_factor(l2_dist(w.data(), r), gamma);
    if d == 1.0 {
        return Ok(());
    }
    if d.is_infinite() {
        w.data_mut().copy_from_slice(r);
        return Ok(());
    }
    let step: Vec<f64> = w.data().iter().zip(r).map(|(x, x0)| (x - x0) / d).collect();
    settle(w.data_mut(), r, &step, gamma, l2_dist);
    Ok(())
}

/// Applies the ℓ¹ projection to every row of `Ŵ − W0` (rows as in the
/// weight's matrix view) and translates back. Rows that are already within
/// `γ` of their reference row are left bitwise untouched.
pub fn project_mars_distance(
    reference: &Tensor,
    updated: &Tensor,
    gamma: f64,
    inner: L1Projection,
) -> Result<Tensor> {
    let mut out = updated.clone();
    project_mars_distance_in_place(reference, &mut out, gamma, inner)?;
    Ok(out)
}

pub fn project_mars_distance_in_place(
    reference: &Tensor,
    w: &mut Tensor,
    gamma: f64,
    inner: L1Projection,
) -> Result<()> {
    check_same_shape(reference, w)?;
    check_gamma(gamma)?;
    let cols = reference.as_matrix().cols();
    let mut diff = vec![0.0; cols];
    for (row, row0) in w
        .data_mut()
        .chunks_exact_mut(cols)
        .zip(reference.data().chunks_exact(cols))
    {
        let dist = l1_dist(row, row0);
        if dist <= gamma {
            continue;
        }
        if gamma == 0.0 {
            row.copy_from_slice(row0);
            continue;
        }
        for ((d, a), b) in diff.iter_mut().zip(row.iter()).zip(row0) {
            *d = a - b;
        }
        match inner {
            L1Projection::Scaling => {
                let s = dist / gamma;
                diff.iter_mut().for_each(|d| *d /= s);
            }
            L1Projection::Exact => project_l1_ball_exact_in_place(&mut diff, gamma)?,
        }
        settle(row, row0, &diff, gamma, l1_dist);
    }
    Ok(())
}

/// Projection matching `kind`.
pub fn project_distance_in_place(
    kind: MatrixNorm,
    reference: &Tensor,
    w: &mut Tensor,
    gamma: f64,
    inner: L1Projection,
) -> Result<()> {
    match kind {
        MatrixNorm::Mars => project_mars_distance_in_place(reference, w, gamma, inner),
        MatrixNorm::Frobenius => project_frobenius_distance_in_place(reference, w, gamma),
    }
}

/// `λ‖W − W0‖²_F` and its gradient `2λ(W − W0)`.
pub fn penalty_l2sp(w: &Tensor, reference: &Tensor, lambda: f64) -> Result<(f64, Tensor)> {
    check_same_shape(w, reference)?;
    check_lambda(lambda)?;
    let diff = w.sub(reference)?;
    let value = lambda * diff.data().iter().map(|d| d * d).sum::<f64>();
    let grad = diff.data().iter().map(|d| 2.0 * lambda * d).collect();
    Ok((value, Tensor::new(w.shape().to_vec(), grad)?))
}

/// `λ‖W − W0‖_∞` and a subgradient: `λ·sign(W − W0)` on the lowest-index row
/// attaining the maximum row sum, zero elsewhere (`sign(0) = 0`).
pub fn penalty_mars(w: &Tensor, reference: &Tensor, lambda: f64) -> Result<(f64, Tensor)> {
    check_same_shape(w, reference)?;
    check_lambda(lambda)?;
    let diff = w.sub(reference)?;
    let m = diff.as_matrix();
    let mut best_row = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, row) in m.row_iter().enumerate() {
        let s = l1(row);
        if s > best {
            best = s;
            best_row = i;
        }
    }
    let mut grad = Tensor::zeros(w.shape());
    let cols = m.cols();
    for (g, &d) in grad.data_mut()[best_row * cols..(best_row + 1) * cols]
        .iter_mut()
        .zip(m.row(best_row))
    {
        *g = if d > 0.0 {
            lambda
        } else if d < 0.0 {
            -lambda
        } else {
            0.0
        };
    }
    Ok((lambda * best, grad))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "penalty weight must be non-negative, got {lambda}"
        )))
    }
}

/// Which penalty a layer receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    Mars,
    /// Squared Frobenius distance (ℓ²-SP).
    FrobeniusSquared,
}

impl PenaltyKind {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Mars => "mars",
            PenaltyKind::FrobeniusSquared => "l2sp",
        }
    }
}

pub fn penalty(
    kind: PenaltyKind,
    w: &Tensor,
    reference: &Tensor,
    lambda: f64,
) -> Result<(f64, Tensor)> {
    match kind {
        PenaltyKind::Mars => penalty_mars(w, reference, lambda),
        PenaltyKind::FrobeniusSquared => penalty_l2sp(w, reference, lambda),
    }
}

/// Distance constraint on one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub kind: MatrixNorm,
    /// Radius; `+∞` leaves the layer unconstrained.
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl FromStr for Constraint {
    type Err = Error;

    /// `mars:<γ>` or `frobenius:<γ>`; `γ` may be `inf`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("constraint '{s}' should look like mars:0.5")))?;
        let kind = match kind.trim() {
            "mars" => MatrixNorm::Mars,
            "frobenius" | "l2" => MatrixNorm::Frobenius,
            other => return Err(Error::config(format!("unknown constraint norm '{other}'"))),
        };
        let gamma: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad radius in constraint '{s}'")))?;
        if !(gamma >= 0.0) {
            return Err(Error::config(format!(
                "constraint radius must be >= 0 in '{s}'"
            )));
        }
        Ok(Constraint { kind, gamma })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.gamma)
    }
}

impl FromStr for Penalty {
    type Err = Error;

    /// `mars:<λ>` or `l2sp:<λ>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("penalty '{s}' should look like l2sp:0.01")))?;
        let kind = match kind.trim() {
            "mars" => PenaltyKind::Mars,
            "l2sp" | "frobenius_squared" => PenaltyKind::FrobeniusSquared,
            other => return Err(Error::config(format!("unknown penalty '{other}'"))),
        };
        let lambda: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad weight in penalty '{s}'")))?;
        if !(lambda >= 0.0) || lambda.is_infinite() {
            return Err(Error::config(format!(
                "penalty weight must be finite and >= 0 in '{s}'"
            )));
        }
        Ok(Penalty { kind, lambda })
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.lambda)
    }
}

/// Per-layer constraints keyed by parameter-layer index (0-based).
pub type ConstraintSpec = BTreeMap<usize, Constraint>;
/// Per-layer penalties keyed by parameter-layer index (0-based).
pub type PenaltySpec = BTreeMap<usize, Penalty>;

/// Regulariser of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Regularization {
    pub constraints: ConstraintSpec,
    pub penalties: PenaltySpec,
    pub inner: L1Projection,
}

impl Regularization {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_none(&self) -> bool {
        self.constraints.is_empty() && self.penalties.is_empty()
    }

    /// Rejects layer indices beyond `layer_count` and layers that carry both
    /// a constraint and a penalty.
    pub fn validate(&self, layer_count: usize) -> Result<()> {
        for &j in self.constraints.keys().chain(self.penalties.keys()) {
            if j >= layer_count {
                return Err(Error::config(format!(
                    "regulariser references layer{} but the network has {layer_count} parameter layers",
                    j + 1
                )));
            }
        }
        if let Some(j) = self
            .constraints
            .keys()
            .find(|j| self.penalties.contains_key(j))
        {
            return Err(Error::config(format!(
                "layer{} has both a constraint and a penalty",
                j + 1
            )));
        }
        Ok(())
    }

    /// Multiplies every radius and penalty weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.constraints.values_mut().for_each(|c| c.gamma *= factor);
        out.penalties.values_mut().for_each(|p| p.lambda *= factor);
        out
    }
}
