use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Tensor;

use super::layers::{
    format_architecture, Conv2d, ConvGeometry, Dense, Layer, LayerCache, LayerSpec, MaxPool2d,
};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

/// Weight and bias of one parameterised layer. Also used for gradients and
/// for the stored reference ("pre-trained") snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn zeros_like(other: &LayerParams) -> Self {
        Self {
            weight: Tensor::zeros(other.weight.shape()),
            bias: Tensor::zeros(other.bias.shape()),
        }
    }
}

pub type Gradients = Vec<LayerParams>;

/// Activations recorded by [`Network::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    network_id: u64,
    generation: u64,
    batch: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

/// Feed-forward network with a reference copy of its parameters.
#[derive(Debug, Clone)]
pub struct Network {
    id: u64,
    generation: u64,
    seed: u64,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// `shapes[i]` is the per-example input shape of layer `i`; the last entry
    /// is the output shape.
    shapes: Vec<Vec<usize>>,
    reference: Vec<LayerParams>,
}

fn fan_in(spec: &LayerSpec, input: &[usize]) -> usize {
    match *spec {
        LayerSpec::Dense { .. } => input.iter().product(),
        LayerSpec::Conv { kernel, .. } => input[0] * kernel.0 * kernel.1,
        LayerSpec::MaxPool { .. } => 0,
    }
}

fn param_shapes(spec: &LayerSpec, input: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
    match *spec {
        LayerSpec::Dense { out, .. } => Some((vec![out, input.iter().product()], vec![out])),
        LayerSpec::Conv {
            out_channels,
            kernel,
            ..
        } => Some((
            vec![out_channels, input[0], kernel.0, kernel.1],
            vec![out_channels],
        )),
        LayerSpec::MaxPool { .. } => None,
    }
}

/// Uniform on `[−1/√fan_in, 1/√fan_in]`.
fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches generated length")
}

impl Network {
    /// Builds a network with freshly initialised parameters and captures them
    /// as the reference.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let layer = match (*spec, param_shapes(spec, &shape)) {
                (LayerSpec::Dense { activation, .. }, Some((ws, bs))) => {
                    let fi = fan_in(spec, &shape);
                    Layer::Dense(Dense {
                        weight: uniform_init(&ws, fi, &mut rng),
                        bias: uniform_init(&bs, fi, &mut rng),
                        activation,
                    })
                }
                (
                    LayerSpec::Conv {
                        stride,
                        padding,
                        activation,
                        ..
                    },
                    Some((ws, bs)),
                ) => {
                    let fi = fan_in(spec, &shape);
                    Layer::Conv(Conv2d {
                        kernel: uniform_init(&ws, fi, &mut rng),
                        bias: uniform_init(&bs, fi, &mut rng),
                        stride,
                        padding,
                        activation,
                    })
                }
                (LayerSpec::MaxPool { window, stride }, _) => {
                    Layer::MaxPool(MaxPool2d { window, stride })
                }
                _ => unreachable!("parameterised specs always have parameter shapes"),
            };
            shape = spec.output_shape(&shape)?;
            layers.push(layer);
        }
        Self::from_layers(input_shape, layers, seed)
    }

    /// Wraps explicit layers, validating that shapes chain, and captures the
    /// current parameters as the reference.
    pub fn from_layers(input_shape: &[usize], layers: Vec<Layer>, seed: u64) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::domain(format!("bad input shape {input_shape:?}")));
        }
        if layers.is_empty() {
            return Err(Error::domain("network needs at least one layer"));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for layer in &layers {
            let input = shapes.last().expect("non-empty");
            let spec = layer.spec();
            if let Some((ws, bs)) = param_shapes(&spec, input) {
                let (w, b) = layer.params().expect("parameterised layer");
                if w.shape() != ws.as_slice() || b.shape() != bs.as_slice() {
                    return Err(Error::domain(format!(
                        "layer {spec} has parameter shapes {:?}/{:?}, input {input:?} needs {ws:?}/{bs:?}",
                        w.shape(),
                        b.shape()
                    )));
                }
            }
            let next = spec.output_shape(input)?;
            shapes.push(next);
        }
        if shapes.last().expect("non-empty").len() != 1 {
            return Err(Error::domain(
                "the last layer must produce a flat logit vector",
            ));
        }
        let mut net = Self {
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
            seed,
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            reference: Vec::new(),
        };
        net.recapture_reference();
        Ok(net)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.shapes.last().expect("non-empty")[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn architecture(&self) -> String {
        format_architecture(&self.specs())
    }

    /// Per-example input shape of layer `i` (index into [`Self::layers`]).
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Indices into [`Self::layers`] of the layers that carry parameters.
    pub fn param_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.params().is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn param_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.params().is_some()).count()
    }

    /// Name of the `j`-th parameterised layer (0-based `j`): `layer{j+1}`.
    pub fn param_layer_name(j: usize) -> String {
        format!("layer{}", j + 1)
    }

    fn param_layer(&self, j: usize) -> &Layer {
        let idx = self.param_layer_indices()[j];
        &self.layers[idx]
    }

    /// The `j`-th parameterised layer.
    pub fn param_layer_at(&self, j: usize) -> (&Layer, &[usize]) {
        let idx = self.param_layer_indices()[j];
        (&self.layers[idx], &self.shapes[idx])
    }

    pub fn weight(&self, j: usize) -> &Tensor {
        self.param_layer(j).params().expect("parameterised").0
    }

    pub fn bias(&self, j: usize) -> &Tensor {
        self.param_layer(j).params().expect("parameterised").1
    }

    pub fn params(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| LayerParams {
                weight: w.clone(),
                bias: b.clone(),
            })
            .collect()
    }

    /// Mutable access to every parameter layer, in order. Invalidates any
    /// outstanding [`ForwardCache`].
    pub fn params_mut(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .collect()
    }

    pub fn weight_mut(&mut self, j: usize) -> &mut Tensor {
        self.params_mut().swap_remove(j).0
    }

    /// Replaces all live parameters, checking shapes.
    pub fn set_params(&mut self, params: &[LayerParams]) -> Result<()> {
        check_shapes(&self.params(), params)?;
        for ((w, b), p) in self.params_mut().into_iter().zip(params) {
            *w = p.weight.clone();
            *b = p.bias.clone();
        }
        Ok(())
    }

    /// Draws fresh parameters for parameterised layer `j` using the same
    /// uniform scheme as construction.
    pub fn reinit_param_layer(&mut self, j: usize, seed: u64) {
        let idx = self.param_layer_indices()[j];
        let fi = fan_in(&self.layers[idx].spec(), &self.shapes[idx]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64 + 1);
        self.generation += 1;
        let (w, b) = self.layers[idx].params_mut().expect("parameterised");
        *w = uniform_init(w.shape(), fi, &mut rng);
        *b = uniform_init(b.shape(), fi, &mut rng);
    }

    pub fn reference(&self) -> &[LayerParams] {
        &self.reference
    }

    /// Snapshots the current parameters as the reference. Call once, before
    /// training begins.
    pub fn recapture_reference(&mut self) {
        self.reference = self.params();
    }

    /// Installs an explicit reference snapshot.
    pub fn set_reference(&mut self, reference: Vec<LayerParams>) -> Result<()> {
        check_shapes(&self.params(), &reference)?;
        self.reference = reference;
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let n = batch.shape()[0];
        let per: usize = batch.shape()[1..].iter().product();
        if batch.shape().len() < 2 || per != self.input_len() {
            return Err(Error::domain(format!(
                "batch shape {:?} does not match network input {:?}",
                batch.shape(),
                self.input_shape
            )));
        }
        Ok(n)
    }

    fn run(&self, batch: &Tensor, record: bool) -> Result<(Tensor, Vec<LayerCache>)> {
        let n = self.check_batch(batch)?;
        let mut x = batch.data().to_vec();
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        for (i, layer) in self.layers.iter().enumerate() {
            let in_shape = &self.shapes[i];
            let y = match layer {
                Layer::Dense(d) => {
                    let y = d.forward(&x, n)?;
                    if record {
                        caches.push(LayerCache::Dense {
                            input: std::mem::take(&mut x),
                            output: y.clone(),
                        });
                    }
                    y
                }
                Layer::Conv(c) => {
                    let geometry = ConvGeometry::new(c, in_shape)?;
                    let (y, cols) = c.forward(&geometry, &x, n, record);
                    if record {
                        caches.push(LayerCache::Conv {
                            geometry,
                            cols,
                            output: y.clone(),
                        });
                    }
                    y
                }
                Layer::MaxPool(p) => {
                    let (y, argmax) = p.forward(in_shape, &x, n)?;
                    if record {
                        caches.push(LayerCache::MaxPool {
                            argmax,
                            in_len: x.len(),
                        });
                    }
                    y
                }
            };
            x = y;
        }
        let logits = Tensor::new(vec![n, self.class_count()], x)?;
        Ok((logits, caches))
    }

    /// Forward pass recording everything [`Self::backward`] needs.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let (logits, layers) = self.run(batch, true)?;
        Ok((
            logits,
            ForwardCache {
                network_id: self.id,
                generation: self.generation,
                batch: batch.shape()[0],
                layers,
            },
        ))
    }

    /// Forward pass without recording; returns logits `[batch, classes]`.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, false).map(|(l, _)| l)
    }

    /// Reverse-mode gradients of a scalar loss given `∂loss/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Gradients> {
        if cache.network_id != self.id || cache.generation != self.generation {
            return Err(Error::domain(
                "forward cache is stale: parameters changed or it belongs to another network",
            ));
        }
        if grad_logits.shape() != [cache.batch, self.class_count()] {
            return Err(Error::domain(format!(
                "upstream gradient shape {:?}, expected [{}, {}]",
                grad_logits.shape(),
                cache.batch,
                self.class_count()
            )));
        }
        let n = cache.batch;
        let mut grads: Vec<Option<LayerParams>> = vec![None; self.layers.len()];
        let mut g = grad_logits.data().to_vec();
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let need_input = i > 0;
            let next = match (layer, lc) {
                (Layer::Dense(d), LayerCache::Dense { input, output }) => {
                    let (lg, dx) = d.backward(input, output, g, n, need_input);
                    grads[i] = Some(to_params(lg, &d.weight, &d.bias));
                    dx
                }
                (
                    Layer::Conv(c),
                    LayerCache::Conv {
                        geometry,
                        cols,
                        output,
                    },
                ) => {
                    let (lg, dx) = c.backward(geometry, cols, output, g, n, need_input);
                    grads[i] = Some(to_params(lg, &c.kernel, &c.bias));
                    dx
                }
                (Layer::MaxPool(_), LayerCache::MaxPool { argmax, in_len }) => {
                    Some(MaxPool2d::backward(argmax, *in_len, &g))
                }
                _ => return Err(Error::domain("forward cache does not match network layers")),
            };
            match next {
                Some(dx) => g = dx,
                None => break,
            }
        }
        Ok(grads.into_iter().flatten().collect())
    }
}

fn to_params(lg: super::layers::LayerGrads, w: &Tensor, b: &Tensor) -> LayerParams {
    LayerParams {
        weight: Tensor::new(w.shape().to_vec(), lg.weight).expect("gradient matches weight shape"),
        bias: Tensor::new(b.shape().to_vec(), lg.bias).expect("gradient matches bias shape"),
    }
}

/// Checks two parameter lists layer by layer, naming the first mismatch.
pub fn check_shapes(a: &[LayerParams], b: &[LayerParams]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "parameter layer count differs: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        if x.weight.shape() != y.weight.shape() || x.bias.shape() != y.bias.shape() {
            return Err(Error::domain(format!(
                "{}: shapes {:?}/{:?} vs {:?}/{:?}",
                Network::param_layer_name(j),
                x.weight.shape(),
                x.bias.shape(),
                y.weight.shape(),
                y.bias.shape()
            )));
        }
    }
    Ok(())
}
