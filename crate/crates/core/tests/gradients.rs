mod common;

use common::{cross_entropy_oracle, gradient_check, random_tensor, rng, small_network};
use distreg::linalg::Tensor;
use distreg::nn::{cross_entropy, ramp_loss};

const TOL: f64 = 1e-4;

#[test]
fn backprop_matches_central_differences() {
    for seed in 0..24 {
        let (net, input) = small_network(seed);
        let err = gradient_check(&net, &input, seed);
        assert!(err < TOL, "network {seed}: relative error {err:e}");
    }
}

#[test]
fn cross_entropy_value_and_gradient() {
    let mut r = rng(2);
    for _ in 0..10 {
        let z = random_tensor(&mut r, &[4, 3], 4.0);
        let labels = vec![0, 2, 1, 2];
        let (v, g) = cross_entropy(&z, &labels).unwrap();
        assert!((v - cross_entropy_oracle(z.data(), 3, &labels)).abs() < 1e-12);
        let h = 1e-6;
        for k in 0..z.len() {
            let mut up = z.clone();
            up.data_mut()[k] += h;
            let mut down = z.clone();
            down.data_mut()[k] -= h;
            let num = (cross_entropy_oracle(up.data(), 3, &labels)
                - cross_entropy_oracle(down.data(), 3, &labels))
                / (2.0 * h);
            assert!((g.data()[k] - num).abs() < 1e-7);
        }
    }
}

#[test]
fn cross_entropy_is_stable_for_large_logits() {
    let z = Tensor::new(vec![1, 2], vec![1000.0, 0.0]).unwrap();
    let (v, g) = cross_entropy(&z, &[0]).unwrap();
    assert!(v.is_finite() && v >= 0.0);
    assert!(g.is_finite());
}

#[test]
fn ramp_loss_examples() {
    // Margins 2, 0.5 and -1 with margin parameter 1 give losses 0, 0.5, 1.
    let z = Tensor::new(vec![3, 2], vec![2.0, 0.0, 0.5, 0.0, 0.0, 1.0]).unwrap();
    let v = ramp_loss(&z, &[0, 0, 0], 1.0).unwrap();
    assert!((v - 0.5).abs() < 1e-15);
}
