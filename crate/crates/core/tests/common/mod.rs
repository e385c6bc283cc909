//! Oracles shared by the integration tests. Nothing here calls into the
//! library's numerical routines.
#![allow(dead_code)]

use distreg::linalg::Tensor;
use distreg::nn::{Activation, Conv2d, Dense, Layer, MaxPool2d, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

pub fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), random_vec(r, n, scale)).unwrap()
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }
}

/// Singular values by one-sided Jacobi rotations on the columns of `m`,
/// sorted descending.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let (r, c) = (m.rows, m.cols);
    // Column-major copy: u[j] is column j.
    let mut u: Vec<Vec<f64>> = (0..c)
        .map(|j| (0..r).map(|i| m.at(i, j)).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..c {
            for q in p + 1..c {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (head, tail) = u.split_at_mut(q);
                for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = cs * a - sn * b;
                    *y = sn * a + cs * b;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = u
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn spectral_oracle(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// The matrix a stride/padding convolution applies to a flattened
/// `[in_c, h, w]` input, built tap by tap.
pub fn unfold_conv(
    kernel: &Tensor,
    input: (usize, usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
) -> Mat {
    let s = kernel.shape();
    let (oc, ic, kh, kw) = (s[0], s[1], s[2], s[3]);
    let (c, h, w) = input;
    assert_eq!(c, ic);
    let oh = (h + 2 * padding.0 - kh) / stride.0 + 1;
    let ow = (w + 2 * padding.1 - kw) / stride.1 + 1;
    let rows = oc * oh * ow;
    let cols = c * h * w;
    let mut a = vec![0.0; rows * cols];
    let k = kernel.data();
    for o in 0..oc {
        for y in 0..oh {
            for x in 0..ow {
                let row = (o * oh + y) * ow + x;
                for ci in 0..ic {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (y * stride.0 + dy) as isize - padding.0 as isize;
                            let ix = (x * stride.1 + dx) as isize - padding.1 as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let col = (ci * h + iy as usize) * w + ix as usize;
                            a[row * cols + col] += k[((o * ic + ci) * kh + dy) * kw + dx];
                        }
                    }
                }
            }
        }
    }
    Mat { rows, cols, a }
}

/// Mean softmax cross-entropy computed directly with log-sum-exp.
pub fn cross_entropy_oracle(logits: &[f64], classes: usize, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// A small random network of one of several shapes, all with parameters
/// drawn from `[-0.5, 0.5)`.
pub fn small_network(seed: u64) -> (Network, Vec<usize>) {
    let mut r = rng(seed);
    let relu = Activation::Relu;
    let id = Activation::Identity;
    let classes = 2 + (seed as usize % 3);
    let conv = |r: &mut ChaCha8Rng, oc, ic, k, stride, pad| {
        Layer::Conv(Conv2d {
            kernel: random_tensor(r, &[oc, ic, k, k], 0.5),
            bias: random_tensor(r, &[oc], 0.5),
            stride: (stride, stride),
            padding: (pad, pad),
            activation: relu,
        })
    };
    let dense = |r: &mut ChaCha8Rng, o, i, act| {
        Layer::Dense(Dense {
            weight: random_tensor(r, &[o, i], 0.5),
            bias: random_tensor(r, &[o], 0.5),
            activation: act,
        })
    };
    let (input, layers) = match seed % 4 {
        0 => (
            vec![5],
            vec![dense(&mut r, 6, 5, relu), dense(&mut r, classes, 6, id)],
        ),
        1 => (
            vec![1, 6, 6],
            vec![
                conv(&mut r, 3, 1, 3, 1, 0),
                Layer::MaxPool(MaxPool2d {
                    window: (2, 2),
                    stride: (2, 2),
                }),
                dense(&mut r, classes, 3 * 2 * 2, id),
            ],
        ),
        2 => (
            vec![2, 5, 5],
            vec![
                conv(&mut r, 2, 2, 3, 2, 1),
                dense(&mut r, 4, 2 * 3 * 3, relu),
                dense(&mut r, classes, 4, id),
            ],
        ),
        _ => (
            vec![1, 7, 7],
            vec![
                conv(&mut r, 2, 1, 2, 1, 0),
                conv(&mut r, 3, 2, 3, 1, 1),
                Layer::MaxPool(MaxPool2d {
                    window: (3, 3),
                    stride: (2, 2),
                }),
                dense(&mut r, classes, 3 * 2 * 2, id),
            ],
        ),
    };
    let net = Network::from_layers(&input, layers, seed).unwrap();
    (net, input)
}

/// Relative error between two gradient tensors, measured in the Euclidean
/// norm of the whole tensor.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error over every weight and bias tensor between the
/// backpropagated gradient of the mean cross-entropy and central differences.
pub fn gradient_check(net: &Network, input_shape: &[usize], seed: u64) -> f64 {
    use distreg::nn::cross_entropy;
    let mut r = rng(seed ^ 0xfd);
    let batch = 3;
    let mut shape = vec![batch];
    shape.extend_from_slice(input_shape);
    let x = random_tensor(&mut r, &shape, 1.0);
    let classes = net.class_count();
    let labels: Vec<usize> = (0..batch).map(|_| r.random_range(0..classes)).collect();

    let (logits, cache) = net.forward(&x).unwrap();
    let (_, g) = cross_entropy(&logits, &labels).unwrap();
    let grads = net.backward(&cache, &g).unwrap();

    let loss_at = |params: &[distreg::nn::LayerParams]| {
        let mut n = net.clone();
        n.set_params(params).unwrap();
        let z = n.predict(&x).unwrap();
        cross_entropy_oracle(z.data(), classes, &labels)
    };
    let h = 1e-6;
    let base = net.params();
    let mut worst = 0.0f64;
    for j in 0..base.len() {
        for which in 0..2 {
            let len = if which == 0 {
                base[j].weight.len()
            } else {
                base[j].bias.len()
            };
            let mut numeric = vec![0.0; len];
            for (k, slot) in numeric.iter_mut().enumerate() {
                let mut p = base.clone();
                let t = if which == 0 {
                    &mut p[j].weight
                } else {
                    &mut p[j].bias
                };
                t.data_mut()[k] += h;
                let up = loss_at(&p);
                let t = if which == 0 {
                    &mut p[j].weight
                } else {
                    &mut p[j].bias
                };
                t.data_mut()[k] -= 2.0 * h;
                let down = loss_at(&p);
                *slot = (up - down) / (2.0 * h);
            }
            let analytic = if which == 0 {
                grads[j].weight.data()
            } else {
                grads[j].bias.data()
            };
            worst = worst.max(rel_error(analytic, &numeric));
        }
    }
    worst
}
