mod common;

use std::collections::BTreeMap;

use distreg::data::{synthetic_transfer_task, Dataset, SyntheticParams};
use distreg::linalg::{distance, MatrixNorm, Tensor};
use distreg::nn::{parse_architecture, Network};
use distreg::optim::{
    train, AdamConfig, EpochRecord, MetricsSink, NullSink, TrainConfig, UpdateRule,
};
use distreg::regularizers::{Constraint, L1Projection, Penalty, PenaltyKind, Regularization};
use distreg::{Error, Result};

fn task() -> (Dataset, Dataset) {
    let t = synthetic_transfer_task(&SyntheticParams {
        seed: 3,
        n_pre: 200,
        n_fine: 100,
        n_test: 100,
        dim: 8,
        classes: 3,
        ..Default::default()
    })
    .unwrap();
    (t.finetune, t.finetune_test)
}

fn net() -> Network {
    let arch = parse_architecture("dense:12:relu,dense:3").unwrap();
    Network::new(&[1, 1, 8], &arch, 17).unwrap()
}

fn cfg(reg: Regularization) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_size: 16,
        seed: 5,
        shuffle: true,
        rule: UpdateRule::Adam(AdamConfig {
            lr: 0.05,
            ..Default::default()
        }),
        regularization: reg,
        ..Default::default()
    }
}

fn all_layers(c: Constraint) -> Regularization {
    Regularization {
        constraints: BTreeMap::from([(0, c), (1, c)]),
        ..Default::default()
    }
}

#[test]
fn zero_radius_freezes_weights() {
    let (tr, _) = task();
    let mut n = net();
    let before = n.params();
    for kind in [MatrixNorm::Mars, MatrixNorm::Frobenius] {
        let reg = all_layers(Constraint { kind, gamma: 0.0 });
        train(&mut n, &tr, None, &cfg(reg), &mut NullSink).unwrap();
        for (a, b) in n.params().iter().zip(&before) {
            assert_eq!(a.weight, b.weight);
        }
    }
    // Biases are free.
    assert_ne!(n.params()[0].bias, before[0].bias);
}

#[test]
fn infinite_radius_is_bitwise_unconstrained() {
    let (tr, te) = task();
    let mut plain = net();
    let h1 = train(
        &mut plain,
        &tr,
        Some(&te),
        &cfg(Regularization::none()),
        &mut NullSink,
    )
    .unwrap();
    for kind in [MatrixNorm::Mars, MatrixNorm::Frobenius] {
        let mut c = net();
        let reg = all_layers(Constraint {
            kind,
            gamma: f64::INFINITY,
        });
        let h2 = train(&mut c, &tr, Some(&te), &cfg(reg), &mut NullSink).unwrap();
        assert_eq!(c.params(), plain.params());
        assert_eq!(h1, h2);
    }
}

#[test]
fn zero_penalty_is_bitwise_unregularised() {
    let (tr, _) = task();
    let mut plain = net();
    train(
        &mut plain,
        &tr,
        None,
        &cfg(Regularization::none()),
        &mut NullSink,
    )
    .unwrap();
    for kind in [PenaltyKind::Mars, PenaltyKind::FrobeniusSquared] {
        let mut p = net();
        let reg = Regularization {
            penalties: BTreeMap::from([(0, Penalty { kind, lambda: 0.0 })]),
            ..Default::default()
        };
        train(&mut p, &tr, None, &cfg(reg), &mut NullSink).unwrap();
        assert_eq!(p.params(), plain.params());
    }
}

struct Feasibility {
    kind: MatrixNorm,
    gamma: f64,
    worst: f64,
}

impl MetricsSink for Feasibility {
    fn on_epoch(&mut self, net: &Network, _r: &EpochRecord) -> Result<()> {
        for (p, r) in net.params().iter().zip(net.reference()) {
            let d = distance(p.weight.as_matrix(), r.weight.as_matrix(), self.kind)?;
            self.worst = self.worst.max(d / self.gamma);
        }
        Ok(())
    }
}

#[test]
fn every_step_stays_feasible() {
    let (tr, _) = task();
    for (kind, inner) in [
        (MatrixNorm::Mars, L1Projection::Scaling),
        (MatrixNorm::Mars, L1Projection::Exact),
        (MatrixNorm::Frobenius, L1Projection::Scaling),
    ] {
        let gamma = 0.2;
        let mut reg = all_layers(Constraint { kind, gamma });
        reg.inner = inner;
        // One batch per epoch, so the per-epoch hook sees every step.
        let c = TrainConfig {
            epochs: 25,
            batch_size: tr.len(),
            ..cfg(reg)
        };
        let mut sink = Feasibility {
            kind,
            gamma,
            worst: 0.0,
        };
        let mut n = net();
        train(&mut n, &tr, None, &c, &mut sink).unwrap();
        assert!(sink.worst <= 1.0 + 1e-12, "{kind:?}: {}", sink.worst);
        assert!(sink.worst > 0.999, "constraint never became active");
    }
}

#[test]
fn training_is_deterministic() {
    let (tr, te) = task();
    let reg = all_layers(Constraint {
        kind: MatrixNorm::Mars,
        gamma: 0.3,
    });
    let mut a = net();
    let mut b = net();
    let ha = train(&mut a, &tr, Some(&te), &cfg(reg.clone()), &mut NullSink).unwrap();
    let hb = train(&mut b, &tr, Some(&te), &cfg(reg), &mut NullSink).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.params(), b.params());
}

#[test]
fn sgd_training_reduces_loss() {
    let (tr, _) = task();
    let mut n = net();
    let c = TrainConfig {
        epochs: 10,
        rule: UpdateRule::Sgd { lr: 0.5 },
        ..cfg(Regularization::none())
    };
    let h = train(&mut n, &tr, None, &c, &mut NullSink).unwrap();
    assert!(h.last().unwrap().train_loss < h[0].train_loss);
}

#[test]
fn non_finite_input_is_a_numerical_error() {
    let (tr, _) = task();
    let mut data = tr.inputs.data().to_vec();
    data[3] = f64::NAN;
    let bad = Dataset::new(
        "bad",
        Tensor::new(tr.inputs.shape().to_vec(), data).unwrap(),
        tr.labels.clone(),
        tr.class_count,
    )
    .unwrap();
    let mut n = net();
    let err = train(
        &mut n,
        &bad,
        None,
        &cfg(Regularization::none()),
        &mut NullSink,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Numerical(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn bad_configurations_are_rejected() {
    let (tr, _) = task();
    let mut n = net();
    let zero_epochs = TrainConfig {
        epochs: 0,
        ..cfg(Regularization::none())
    };
    assert!(matches!(
        train(&mut n, &tr, None, &zero_epochs, &mut NullSink),
        Err(Error::Config(_))
    ));
    let out_of_range = Regularization {
        constraints: BTreeMap::from([(
            5,
            Constraint {
                kind: MatrixNorm::Mars,
                gamma: 1.0,
            },
        )]),
        ..Default::default()
    };
    assert!(matches!(
        train(&mut n, &tr, None, &cfg(out_of_range), &mut NullSink),
        Err(Error::Config(_))
    ));
}
