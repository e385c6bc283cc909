mod common;

use common::{random_tensor, rng};
use distreg::linalg::Tensor;
use distreg::regularizers::{
    penalty_l2sp, penalty_mars, project_frobenius_distance, project_l1_ball_exact,
    project_l1_ball_scaling, project_mars_distance, L1Projection,
};
use proptest::prelude::*;

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn row_l1_distances(w: &Tensor, w0: &Tensor) -> Vec<f64> {
    let cols = w.shape()[1..].iter().product::<usize>();
    w.data()
        .chunks(cols)
        .zip(w0.data().chunks(cols))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
        .collect()
}

/// Euclidean projection onto the ℓ¹ ball by bisection on the threshold.
fn l1_projection_oracle(v: &[f64], gamma: f64) -> Vec<f64> {
    if l1(v) <= gamma {
        return v.to_vec();
    }
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
        if s > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - hi).max(0.0))
        .collect()
}

proptest! {
    #[test]
    fn exact_l1_projection_matches_bisection(v in prop::collection::vec(-5.0f64..5.0, 1..40), gamma in 0.01f64..10.0) {
        let p = project_l1_ball_exact(&v, gamma).unwrap();
        let o = l1_projection_oracle(&v, gamma);
        for (a, b) in p.iter().zip(&o) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!(l1(&p) <= gamma * (1.0 + 1e-12));
    }

    #[test]
    fn scaling_l1_projection_is_radial(v in prop::collection::vec(-5.0f64..5.0, 1..40), gamma in 0.01f64..10.0) {
        let p = project_l1_ball_scaling(&v, gamma).unwrap();
        prop_assert!(l1(&p) <= gamma * (1.0 + 1e-12));
        let s = (l1(&v) / gamma).max(1.0);
        for (a, b) in p.iter().zip(&v) {
            prop_assert!((a * s - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn frobenius_projection_is_nearest_point(seed in any::<u64>(), gamma in 0.0f64..3.0) {
        let mut r = rng(seed);
        let w0 = random_tensor(&mut r, &[3, 4], 1.0);
        let w = random_tensor(&mut r, &[3, 4], 2.0);
        let p = project_frobenius_distance(&w0, &w, gamma).unwrap();
        let d = l2(p.sub(&w0).unwrap().data());
        prop_assert!(d <= gamma * (1.0 + 1e-12) + 1e-300);
        // The nearest point of a ball lies on the segment to its centre.
        let dw = l2(w.sub(&w0).unwrap().data());
        if dw > gamma {
            prop_assert!((d - gamma).abs() <= 1e-12 * gamma.max(1.0));
            let dist_to_input = l2(w.sub(&p).unwrap().data());
            prop_assert!((dist_to_input - (dw - gamma)).abs() <= 1e-12 * dw);
        } else {
            prop_assert_eq!(p, w);
        }
    }

    #[test]
    fn projections_are_idempotent_far_from_the_origin(seed in any::<u64>(), gamma in 1e-6f64..1.0, offset in 1.0f64..1e4) {
        let mut r = rng(seed);
        let mut w0 = random_tensor(&mut r, &[4, 6], 1.0);
        w0.data_mut().iter_mut().for_each(|x| *x += offset);
        let mut w = random_tensor(&mut r, &[4, 6], 1.0);
        w.data_mut().iter_mut().for_each(|x| *x += offset);
        let p = project_frobenius_distance(&w0, &w, gamma).unwrap();
        prop_assert_eq!(&project_frobenius_distance(&w0, &p, gamma).unwrap(), &p);
        prop_assert!(l2(p.sub(&w0).unwrap().data()) <= gamma);
        for inner in [L1Projection::Scaling, L1Projection::Exact] {
            let p = project_mars_distance(&w0, &w, gamma, inner).unwrap();
            prop_assert_eq!(&project_mars_distance(&w0, &p, gamma, inner).unwrap(), &p);
            prop_assert!(row_l1_distances(&p, &w0).iter().all(|&d| d <= gamma));
        }
    }

    #[test]
    fn mars_projection_only_touches_violating_rows(seed in any::<u64>(), gamma in 0.0f64..3.0, exact in any::<bool>()) {
        let mut r = rng(seed);
        let w0 = random_tensor(&mut r, &[5, 4], 1.0);
        let w = random_tensor(&mut r, &[5, 4], 1.0);
        let inner = if exact { L1Projection::Exact } else { L1Projection::Scaling };
        let p = project_mars_distance(&w0, &w, gamma, inner).unwrap();
        let before = row_l1_distances(&w, &w0);
        let after = row_l1_distances(&p, &w0);
        for (i, (&b, &a)) in before.iter().zip(&after).enumerate() {
            prop_assert!(a <= gamma * (1.0 + 1e-12) + 1e-15);
            if b <= gamma {
                prop_assert_eq!(&p.data()[i * 4..i * 4 + 4], &w.data()[i * 4..i * 4 + 4]);
            }
        }
    }
}

#[test]
fn conv_kernels_are_projected_per_output_channel() {
    let mut r = rng(1);
    let w0 = random_tensor(&mut r, &[3, 2, 2, 2], 1.0);
    let w = random_tensor(&mut r, &[3, 2, 2, 2], 3.0);
    let p = project_mars_distance(&w0, &w, 0.5, L1Projection::Scaling).unwrap();
    for d in row_l1_distances(&p, &w0) {
        assert!(d <= 0.5 * (1.0 + 1e-12));
    }
}

#[test]
fn negative_radius_and_shape_mismatch_are_rejected() {
    let a = Tensor::zeros(&[2, 2]);
    let b = Tensor::zeros(&[2, 3]);
    assert!(project_frobenius_distance(&a, &a, -1.0).is_err());
    assert!(project_mars_distance(&a, &b, 1.0, L1Projection::Scaling).is_err());
    assert!(penalty_l2sp(&a, &b, 1.0).is_err());
}

/// Central differences of a scalar function of a tensor.
fn numeric_gradient(w: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..w.len())
        .map(|k| {
            let mut up = w.clone();
            up.data_mut()[k] += h;
            let mut down = w.clone();
            down.data_mut()[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn penalty_gradients_match_finite_differences() {
    let mut r = rng(21);
    for _ in 0..20 {
        let w0 = random_tensor(&mut r, &[4, 3], 1.0);
        let w = random_tensor(&mut r, &[4, 3], 1.0);
        let (v, g) = penalty_l2sp(&w, &w0, 0.3).unwrap();
        let d = w.sub(&w0).unwrap();
        assert!((v - 0.3 * d.data().iter().map(|x| x * x).sum::<f64>()).abs() < 1e-12);
        let num = numeric_gradient(&w, |t| penalty_l2sp(t, &w0, 0.3).unwrap().0);
        assert!(common::rel_error(g.data(), &num) < 1e-6);

        // Random rows have a unique maximiser and no zero entries almost
        // surely, so the penalty is differentiable here.
        let (v, g) = penalty_mars(&w, &w0, 0.7).unwrap();
        let rows = row_l1_distances(&w, &w0);
        assert!((v - 0.7 * rows.iter().cloned().fold(0.0, f64::max)).abs() < 1e-12);
        let num = numeric_gradient(&w, |t| penalty_mars(t, &w0, 0.7).unwrap().0);
        assert!(common::rel_error(g.data(), &num) < 1e-6);
    }
}

#[test]
fn mars_subgradient_uses_first_maximising_row() {
    let w0 = Tensor::zeros(&[3, 2]);
    let w = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.5, -0.5, 0.0, 0.0]).unwrap();
    let (v, g) = penalty_mars(&w, &w0, 2.0).unwrap();
    assert_eq!(v, 2.0);
    assert_eq!(g.data(), &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}
