//! Projected / penalised stochastic (sub)gradient training.

use crate::data::{BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{distance, MatrixNorm, Tensor};
use crate::nn::{correct_count, cross_entropy, Network};
use crate::regularizers::{penalty, project_distance_in_place, Regularization};

use super::update::{sgd_update, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Sgd { lr: f64 },
    Adam(AdamConfig),
}

impl UpdateRule {
    pub fn base_lr(&self) -> f64 {
        match self {
            UpdateRule::Sgd { lr } => *lr,
            UpdateRule::Adam(c) => c.lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` every `every` epochs.
    StepDecay {
        factor: f64,
        every: usize,
    },
}

impl LrSchedule {
    /// Rate for 0-based `epoch`.
    pub fn lr(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { factor, every } => base * factor.powi((epoch / every) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub rule: UpdateRule,
    pub schedule: LrSchedule,
    pub regularization: Regularization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 64,
            seed: 0,
            shuffle: true,
            rule: UpdateRule::Adam(AdamConfig::default()),
            schedule: LrSchedule::Constant,
            regularization: Regularization::none(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, param_layers: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        match self.rule {
            UpdateRule::Sgd { lr } if !(lr > 0.0 && lr.is_finite()) => {
                return Err(Error::config(format!(
                    "learning rate must be positive, got {lr}"
                )));
            }
            UpdateRule::Adam(c) => c.validate()?,
            _ => {}
        }
        if let LrSchedule::StepDecay { factor, every } = self.schedule {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::config(format!(
                    "decay factor must lie in (0, 1], got {factor}"
                )));
            }
            if every == 0 {
                return Err(Error::config("decay interval must be at least 1 epoch"));
            }
        }
        self.regularization.validate(param_layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 0-based global step index.
    pub step: usize,
    pub epoch: usize,
    /// Minibatch cross-entropy plus penalties.
    pub objective: f64,
}

/// Distances of one parameter layer's weight from its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerDistance {
    pub mars: f64,
    pub frobenius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Example-weighted mean cross-entropy over the epoch's minibatches,
    /// without penalties.
    pub train_loss: f64,
    /// Accuracy of the minibatch predictions made during the epoch.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub distances: Vec<LayerDistance>,
}

/// Receives progress from [`train`]; called on the training thread only.
pub trait MetricsSink {
    fn on_step(&mut self, _step: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn on_epoch(&mut self, _net: &Network, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl MetricsSink for NullSink {}

/// Weight distances of every parameter layer from the network's reference.
pub fn layer_distances(net: &Network) -> Result<Vec<LayerDistance>> {
    (0..net.param_layer_count())
        .map(|j| {
            let w = net.weight(j).as_matrix();
            let w0 = net.reference()[j].weight.as_matrix();
            Ok(LayerDistance {
                mars: distance(w, w0, MatrixNorm::Mars)?,
                frobenius: distance(w, w0, MatrixNorm::Frobenius)?,
            })
        })
        .collect()
}

/// Logits for the whole dataset, computed in chunks of `chunk` examples.
pub fn predict_all(net: &Network, data: &Dataset, chunk: usize) -> Result<Tensor> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(data.len() * net.class_count());
    let idx: Vec<usize> = (0..data.len()).collect();
    for part in idx.chunks(chunk) {
        let (x, _) = data.gather(part);
        out.extend_from_slice(net.predict(&x)?.data());
    }
    Tensor::new(vec![data.len(), net.class_count()], out)
}

/// Mean cross-entropy and accuracy.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, f64)> {
    let logits = predict_all(net, data, 256)?;
    let (loss, _) = cross_entropy(&logits, &data.labels)?;
    Ok((
        loss,
        correct_count(&logits, &data.labels) as f64 / data.len() as f64,
    ))
}

/// Minibatch training. Each step takes the cross-entropy gradient, adds
/// penalty subgradients for penalised layers, applies the update rule to all
/// parameters and then projects every constrained weight back onto its ball
/// around the reference. Biases are neither penalised nor constrained.
///
/// The reference is whatever `net.reference()` holds when called.
pub fn train(
    net: &mut Network,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    sink: &mut dyn MetricsSink,
) -> Result<Vec<EpochRecord>> {
    cfg.validate(net.param_layer_count())?;
    if data.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    if data.class_count > net.class_count() {
        return Err(Error::config(format!(
            "dataset has {} classes but the network outputs {}",
            data.class_count,
            net.class_count()
        )));
    }
    let reg = &cfg.regularization;
    let reference: Vec<Tensor> = net.reference().iter().map(|p| p.weight.clone()).collect();
    let mut adam = match cfg.rule {
        UpdateRule::Adam(c) => {
            let params = net.params();
            Some(AdamState::new(
                c,
                params.iter().flat_map(|p| [&p.weight, &p.bias]),
            ))
        }
        UpdateRule::Sgd { .. } => None,
    };
    let plan = BatchPlan {
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        shuffle: cfg.shuffle,
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr(cfg.rule.base_lr(), epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in plan.batches(data.len(), epoch)? {
            let (x, y) = data.gather(&batch);
            let (logits, cache) = net.forward(&x)?;
            let (loss, grad_logits) = cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss is {loss} at step {step}")));
            }
            loss_sum += loss * y.len() as f64;
            correct += correct_count(&logits, &y);
            let mut grads = net.backward(&cache, &grad_logits)?;

            let mut objective = loss;
            for (&j, p) in &reg.penalties {
                let (value, g) = penalty(p.kind, net.weight(j), &reference[j], p.lambda)?;
                objective += value;
                for (a, b) in grads[j].weight.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            if !objective.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective is {objective} at step {step}"
                )));
            }

            {
                let mut params: Vec<&mut Tensor> = net
                    .params_mut()
                    .into_iter()
                    .flat_map(|(w, b)| [w, b])
                    .collect();
                let grads: Vec<&Tensor> = grads.iter().flat_map(|g| [&g.weight, &g.bias]).collect();
                match adam.as_mut() {
                    Some(state) => state.update(&mut params, &grads, lr),
                    None => sgd_update(&mut params, &grads, lr),
                }
                .map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("{m} at step {step}")),
                    other => other,
                })?;
            }
            for (&j, c) in &reg.constraints {
                project_distance_in_place(
                    c.kind,
                    &reference[j],
                    net.weight_mut(j),
                    c.gamma,
                    reg.inner,
                )?;
            }

            sink.on_step(&StepRecord {
                step,
                epoch: epoch + 1,
                objective,
            })?;
            step += 1;
        }

        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            test_acc: test
                .map(|t| evaluate(net, t).map(|(_, acc)| acc))
                .transpose()?,
            distances: layer_distances(net)?,
        };
        sink.on_epoch(net, &record)?;
        history.push(record);
    }
    Ok(history)
}
