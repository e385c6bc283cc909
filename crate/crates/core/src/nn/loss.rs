use crate::error::{Error, Result};
use crate::linalg::Tensor;

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, c) = match *logits.shape() {
        [n, c] => (n, c),
        _ => {
            return Err(Error::domain(format!(
                "logits must be [batch, classes], got {:?}",
                logits.shape()
            )))
        }
    };
    if labels.len() != n {
        return Err(Error::domain(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::domain(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    Ok((n, c))
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = check_labels(logits, labels)?;
    let mut grad = vec![0.0; n * c];
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    for ((row, g), &y) in logits
        .data()
        .chunks_exact(c)
        .zip(grad.chunks_exact_mut(c))
        .zip(labels)
    {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - max).exp();
            z += *gi;
        }
        total += z.ln() - (row[y] - max);
        for gi in g.iter_mut() {
            *gi *= scale / z;
        }
        g[y] -= scale;
    }
    Ok((total * scale, Tensor::new(vec![n, c], grad)?))
}

/// Margin of each example: `logit_y − max_{k≠y} logit_k`.
fn margins<'a>(logits: &'a [f64], c: usize, labels: &'a [usize]) -> impl Iterator<Item = f64> + 'a {
    logits.chunks_exact(c).zip(labels).map(move |(row, &y)| {
        let other = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != y)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        row[y] - other
    })
}

/// Mean of `clamp(1 − margin/γ, 0, 1)`; upper-bounds the 0/1 error.
pub fn ramp_loss(logits: &Tensor, labels: &[usize], margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::domain(format!(
            "ramp loss margin must be positive, got {margin}"
        )));
    }
    let (n, c) = check_labels(logits, labels)?;
    if c < 2 {
        return Err(Error::domain("ramp loss needs at least two classes"));
    }
    let sum: f64 = margins(logits.data(), c, labels)
        .map(|m| (1.0 - m / margin).clamp(0.0, 1.0))
        .sum();
    Ok(sum / n as f64)
}

/// Index of the largest logit in each row, first index on ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}

/// Number of rows whose argmax equals the label.
pub fn correct_count(logits: &Tensor, labels: &[usize]) -> usize {
    argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, c: usize, v: &[f64]) -> Tensor {
        Tensor::new(vec![n, c], v.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, g) = cross_entropy(&t(1, 2, &[0.0, 0.0]), &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(g.data().iter().sum::<f64>().abs() < 1e-15);
        let (l, g) = cross_entropy(&t(1, 2, &[1000.0, 0.0]), &[0]).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-12);
        assert!(g.is_finite());
        assert!(cross_entropy(&t(1, 2, &[0.0, 0.0]), &[2]).is_err());
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let (_, g) = cross_entropy(&t(2, 3, &[0.3, -1.0, 2.0, 5.0, 0.1, 0.2]), &[2, 0]).unwrap();
        for row in g.data().chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn ramp_examples() {
        assert_eq!(ramp_loss(&t(1, 2, &[3.0, 1.0]), &[0], 1.0).unwrap(), 0.0);
        assert_eq!(ramp_loss(&t(1, 2, &[1.0, 1.0]), &[0], 1.0).unwrap(), 1.0);
        assert_eq!(ramp_loss(&t(1, 2, &[0.0, 1.0]), &[0], 1.0).unwrap(), 1.0);
        assert!((ramp_loss(&t(1, 2, &[0.5, 0.0]), &[0], 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(ramp_loss(&t(1, 2, &[0.0, 1.0]), &[0], 0.0).is_err());
        assert!(ramp_loss(&t(1, 2, &[0.0, 1.0]), &[0], -1.0).is_err());
    }

    #[test]
    fn argmax_ties_first() {
        assert_eq!(
            argmax_rows(&t(2, 3, &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0])),
            vec![0, 1]
        );
    }
}
