use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Tensor;

use super::gemm::{gemm, Operand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        if self == Activation::Relu {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
    }

    /// Zeroes upstream gradient where the unit was clamped. `out` is the
    /// post-activation value.
    fn mask(self, grad: &mut [f64], out: &[f64]) {
        if self == Activation::Relu {
            for (g, &o) in grad.iter_mut().zip(out) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// Architecture of one layer without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        out: usize,
        activation: Activation,
    },
    Conv {
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        activation: Activation,
    },
    MaxPool {
        window: (usize, usize),
        stride: (usize, usize),
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        !matches!(self, LayerSpec::MaxPool { .. })
    }

    /// Per-example output shape for a per-example input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { out, .. } => Ok(vec![out]),
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (_, h, w) = chw(input)?;
                let oh = conv_extent(h, kernel.0, stride.0, padding.0)?;
                let ow = conv_extent(w, kernel.1, stride.1, padding.1)?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::MaxPool { window, stride } => {
                let (c, h, w) = chw(input)?;
                let oh = conv_extent(h, window.0, stride.0, 0)?;
                let ow = conv_extent(w, window.1, stride.1, 0)?;
                Ok(vec![c, oh, ow])
            }
        }
    }
}

fn chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::domain(format!(
            "spatial layer needs a [channels, height, width] input, got {shape:?}"
        ))),
    }
}

/// `floor((in + 2·pad − k)/stride) + 1`, which must be at least 1.
fn conv_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || k == 0 {
        return Err(Error::domain("kernel and stride extents must be positive"));
    }
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::domain(format!(
            "window {k} larger than padded input extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { out, activation } => write!(f, "dense:{out}:{}", activation.name()),
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
                activation,
            } => write!(
                f,
                "conv:{out_channels}:{}x{}:s{}x{}:p{}x{}:{}",
                kernel.0,
                kernel.1,
                stride.0,
                stride.1,
                padding.0,
                padding.1,
                activation.name()
            ),
            LayerSpec::MaxPool { window, stride } => {
                write!(
                    f,
                    "maxpool:{}x{}:s{}x{}",
                    window.0, window.1, stride.0, stride.1
                )
            }
        }
    }
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(format!("bad {what} '{s}'")))
}

/// `"9x9"` → (9, 9); a bare `"9"` means square.
fn parse_pair(s: &str, what: &str) -> Result<(usize, usize)> {
    match s.split_once('x') {
        Some((a, b)) => Ok((parse_usize(a, what)?, parse_usize(b, what)?)),
        None => {
            let v = parse_usize(s, what)?;
            Ok((v, v))
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    /// Grammar:
    /// `dense:<out>[:relu|identity]`,
    /// `conv:<out>:<kh>x<kw>[:s<stride>][:p<pad>][:relu|identity]`,
    /// `maxpool:<h>x<w>[:s<stride>]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let mut activation = None;
        let mut stride = None;
        let mut padding = None;
        let head = parts.first().copied().unwrap_or("");
        let (fixed, opts) = match head {
            "dense" => (2, &parts[2.min(parts.len())..]),
            "conv" => (3, &parts[3.min(parts.len())..]),
            "maxpool" => (2, &parts[2.min(parts.len())..]),
            other => {
                return Err(Error::config(format!(
                    "unknown layer kind '{other}' in '{s}'"
                )))
            }
        };
        if parts.len() < fixed {
            return Err(Error::config(format!("layer '{s}' is missing fields")));
        }
        for opt in opts {
            match *opt {
                "relu" => activation = Some(Activation::Relu),
                "identity" | "linear" => activation = Some(Activation::Identity),
                o if o.starts_with('s') => stride = Some(parse_pair(&o[1..], "stride")?),
                o if o.starts_with('p') => padding = Some(parse_pair(&o[1..], "padding")?),
                o => {
                    return Err(Error::config(format!(
                        "unknown layer option '{o}' in '{s}'"
                    )))
                }
            }
        }
        let spec = match head {
            "dense" => {
                if stride.is_some() || padding.is_some() {
                    return Err(Error::config(format!(
                        "dense layer '{s}' takes no stride/padding"
                    )));
                }
                LayerSpec::Dense {
                    out: parse_usize(parts[1], "output size")?,
                    activation: activation.unwrap_or(Activation::Identity),
                }
            }
            "conv" => LayerSpec::Conv {
                out_channels: parse_usize(parts[1], "channel count")?,
                kernel: parse_pair(parts[2], "kernel size")?,
                stride: stride.unwrap_or((1, 1)),
                padding: padding.unwrap_or((0, 0)),
                activation: activation.unwrap_or(Activation::Relu),
            },
            _ => {
                if activation.is_some() || padding.is_some() {
                    return Err(Error::config(format!(
                        "maxpool '{s}' takes only a stride option"
                    )));
                }
                let window = parse_pair(parts[1], "pool window")?;
                LayerSpec::MaxPool {
                    window,
                    stride: stride.unwrap_or(window),
                }
            }
        };
        let positive = match spec {
            LayerSpec::Dense { out, .. } => out > 0,
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                ..
            } => out_channels > 0 && kernel.0 > 0 && kernel.1 > 0 && stride.0 > 0 && stride.1 > 0,
            LayerSpec::MaxPool { window, stride } => {
                window.0 > 0 && window.1 > 0 && stride.0 > 0 && stride.1 > 0
            }
        };
        if !positive {
            return Err(Error::config(format!("layer '{s}' has a zero extent")));
        }
        Ok(spec)
    }
}

/// Parses a comma-separated architecture string.
pub fn parse_architecture(s: &str) -> Result<Vec<LayerSpec>> {
    let specs = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(LayerSpec::from_str)
        .collect::<Result<Vec<_>>>()?;
    if specs.is_empty() {
        return Err(Error::config("architecture has no layers"));
    }
    Ok(specs)
}

pub fn format_architecture(specs: &[LayerSpec]) -> String {
    specs
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Fully connected layer `φ(W x + b)`; inputs are flattened per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

/// 2-D convolution (cross-correlation) over `[channels, height, width]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kh, kw]`
    pub kernel: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub activation: Activation,
}

/// Max pooling. Trailing rows/columns that do not fill a window are dropped;
/// ties go to the first element in row-major order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPool2d {
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    MaxPool(MaxPool2d),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                out: d.weight.shape()[0],
                activation: d.activation,
            },
            Layer::Conv(c) => {
                let s = c.kernel.shape();
                LayerSpec::Conv {
                    out_channels: s[0],
                    kernel: (s[2], s[3]),
                    stride: c.stride,
                    padding: c.padding,
                    activation: c.activation,
                }
            }
            Layer::MaxPool(p) => LayerSpec::MaxPool {
                window: p.window,
                stride: p.stride,
            },
        }
    }

    pub(crate) fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            Layer::Conv(c) => Some((&c.kernel, &c.bias)),
            Layer::MaxPool(_) => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            Layer::Conv(c) => Some((&mut c.kernel, &mut c.bias)),
            Layer::MaxPool(_) => None,
        }
    }
}

/// Geometry of a convolution applied to one `[c, h, w]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeometry {
    pub fn new(conv: &Conv2d, input: &[usize]) -> Result<Self> {
        let (in_c, in_h, in_w) = chw(input)?;
        let ks = conv.kernel.shape();
        if ks[1] != in_c {
            return Err(Error::domain(format!(
                "kernel expects {} input channels, input has {in_c}",
                ks[1]
            )));
        }
        Ok(Self {
            in_c,
            in_h,
            in_w,
            out_c: ks[0],
            out_h: conv_extent(in_h, ks[2], conv.stride.0, conv.padding.0)?,
            out_w: conv_extent(in_w, ks[3], conv.stride.1, conv.padding.1)?,
            kh: ks[2],
            kw: ks[3],
            stride: conv.stride,
            padding: conv.padding,
        })
    }

    /// Rows of the patch matrix: `in_c · kh · kw`.
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    /// Output spatial positions.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.positions()
    }

    /// Input index read by patch row `r` at output position `p`, if inside
    /// the (unpadded) input.
    #[inline]
    fn source(&self, c: usize, ki: usize, kj: usize, oy: usize, ox: usize) -> Option<usize> {
        let y = (oy * self.stride.0 + ki).checked_sub(self.padding.0)?;
        let x = (ox * self.stride.1 + kj).checked_sub(self.padding.1)?;
        if y < self.in_h && x < self.in_w {
            Some((c * self.in_h + y) * self.in_w + x)
        } else {
            None
        }
    }

    /// Unfolds one input into a `[patch_len, positions]` patch matrix.
    pub fn im2col(&self, input: &[f64], cols: &mut [f64]) {
        let p_len = self.positions();
        let mut r = 0;
        for c in 0..self.in_c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = &mut cols[r * p_len..(r + 1) * p_len];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            row[oy * self.out_w + ox] =
                                self.source(c, ki, kj, oy, ox).map_or(0.0, |i| input[i]);
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters a patch matrix back onto the input.
    pub fn col2im(&self, cols: &[f64], input: &mut [f64]) {
        let p_len = self.positions();
        let mut r = 0;
        for c in 0..self.in_c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = &cols[r * p_len..(r + 1) * p_len];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some(i) = self.source(c, ki, kj, oy, ox) {
                                input[i] += row[oy * self.out_w + ox];
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    /// Linear part of the convolution (no bias, no activation) on one input.
    pub fn apply_linear(&self, kernel: &[f64], input: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.patch_len() * self.positions()];
        self.im2col(input, &mut cols);
        let mut out = vec![0.0; self.out_len()];
        gemm(
            Operand::new(kernel, self.out_c, self.patch_len()),
            Operand::new(&cols, self.patch_len(), self.positions()),
            0.0,
            &mut out,
            self.out_c,
            self.positions(),
        );
        out
    }

    /// Adjoint (transposed convolution) of [`Self::apply_linear`].
    pub fn apply_adjoint(&self, kernel: &[f64], output: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.patch_len() * self.positions()];
        gemm(
            Operand::new(kernel, self.out_c, self.patch_len()).t(),
            Operand::new(output, self.out_c, self.positions()),
            0.0,
            &mut cols,
            self.patch_len(),
            self.positions(),
        );
        let mut input = vec![0.0; self.in_len()];
        self.col2im(&cols, &mut input);
        input
    }
}

/// Saved state needed to back-propagate through one layer.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Dense {
        input: Vec<f64>,
        output: Vec<f64>,
    },
    Conv {
        geometry: ConvGeometry,
        cols: Vec<f64>,
        output: Vec<f64>,
    },
    MaxPool {
        argmax: Vec<usize>,
        in_len: usize,
    },
}

pub(crate) struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub(crate) fn forward(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (out, inp) = (self.weight.shape()[0], self.weight.shape()[1]);
        if input.len() != batch * inp {
            return Err(Error::domain(format!(
                "dense layer expects {inp} inputs per example, got {}",
                input.len() / batch.max(1)
            )));
        }
        let mut y = Vec::with_capacity(batch * out);
        for _ in 0..batch {
            y.extend_from_slice(self.bias.data());
        }
        gemm(
            Operand::new(input, batch, inp),
            Operand::new(self.weight.data(), out, inp).t(),
            1.0,
            &mut y,
            batch,
            out,
        );
        self.activation.apply(&mut y);
        Ok(y)
    }

    pub(crate) fn backward(
        &self,
        input: &[f64],
        output: &[f64],
        mut grad_out: Vec<f64>,
        batch: usize,
        need_input_grad: bool,
    ) -> (LayerGrads, Option<Vec<f64>>) {
        let (out, inp) = (self.weight.shape()[0], self.weight.shape()[1]);
        self.activation.mask(&mut grad_out, output);
        let mut dw = vec![0.0; out * inp];
        gemm(
            Operand::new(&grad_out, batch, out).t(),
            Operand::new(input, batch, inp),
            0.0,
            &mut dw,
            out,
            inp,
        );
        let mut db = vec![0.0; out];
        for row in grad_out.chunks_exact(out) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        let dx = need_input_grad.then(|| {
            let mut dx = vec![0.0; batch * inp];
            gemm(
                Operand::new(&grad_out, batch, out),
                Operand::new(self.weight.data(), out, inp),
                0.0,
                &mut dx,
                batch,
                inp,
            );
            dx
        });
        (
            LayerGrads {
                weight: dw,
                bias: db,
            },
            dx,
        )
    }
}

impl Conv2d {
    /// Returns the activated output and, when `keep_cols`, the patch matrices
    /// of every example.
    pub(crate) fn forward(
        &self,
        geo: &ConvGeometry,
        input: &[f64],
        batch: usize,
        keep_cols: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let patch = geo.patch_len() * geo.positions();
        let (in_len, out_len, p) = (geo.in_len(), geo.out_len(), geo.positions());
        let mut out = vec![0.0; batch * out_len];
        let mut all_cols = if keep_cols {
            vec![0.0; batch * patch]
        } else {
            Vec::new()
        };
        let mut scratch = if keep_cols {
            Vec::new()
        } else {
            vec![0.0; patch]
        };
        for b in 0..batch {
            let cols: &mut [f64] = if keep_cols {
                &mut all_cols[b * patch..(b + 1) * patch]
            } else {
                &mut scratch
            };
            geo.im2col(&input[b * in_len..(b + 1) * in_len], cols);
            let ob = &mut out[b * out_len..(b + 1) * out_len];
            for (o, row) in ob.chunks_exact_mut(p).enumerate() {
                row.fill(self.bias.data()[o]);
            }
            gemm(
                Operand::new(self.kernel.data(), geo.out_c, geo.patch_len()),
                Operand::new(cols, geo.patch_len(), p),
                1.0,
                ob,
                geo.out_c,
                p,
            );
        }
        self.activation.apply(&mut out);
        (out, all_cols)
    }

    pub(crate) fn backward(
        &self,
        geo: &ConvGeometry,
        cols: &[f64],
        output: &[f64],
        mut grad_out: Vec<f64>,
        batch: usize,
        need_input_grad: bool,
    ) -> (LayerGrads, Option<Vec<f64>>) {
        self.activation.mask(&mut grad_out, output);
        let (pl, p) = (geo.patch_len(), geo.positions());
        let (out_len, patch) = (geo.out_len(), pl * p);
        let mut dk = vec![0.0; geo.out_c * pl];
        let mut db = vec![0.0; geo.out_c];
        let mut dx = need_input_grad.then(|| vec![0.0; batch * geo.in_len()]);
        let mut dcols = if need_input_grad {
            vec![0.0; patch]
        } else {
            Vec::new()
        };
        for b in 0..batch {
            let gb = &grad_out[b * out_len..(b + 1) * out_len];
            let cb = &cols[b * patch..(b + 1) * patch];
            gemm(
                Operand::new(gb, geo.out_c, p),
                Operand::new(cb, pl, p).t(),
                1.0,
                &mut dk,
                geo.out_c,
                pl,
            );
            for (d, row) in db.iter_mut().zip(gb.chunks_exact(p)) {
                *d += row.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    Operand::new(self.kernel.data(), geo.out_c, pl).t(),
                    Operand::new(gb, geo.out_c, p),
                    0.0,
                    &mut dcols,
                    pl,
                    p,
                );
                let in_len = geo.in_len();
                geo.col2im(&dcols, &mut dx[b * in_len..(b + 1) * in_len]);
            }
        }
        (
            LayerGrads {
                weight: dk,
                bias: db,
            },
            dx,
        )
    }
}

impl MaxPool2d {
    pub(crate) fn forward(
        &self,
        input_shape: &[usize],
        input: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        let (c, h, w) = chw(input_shape)?;
        let oh = conv_extent(h, self.window.0, self.stride.0, 0)?;
        let ow = conv_extent(w, self.window.1, self.stride.1, 0)?;
        let in_len = c * h * w;
        let mut out = Vec::with_capacity(batch * c * oh * ow);
        let mut argmax = Vec::with_capacity(batch * c * oh * ow);
        for b in 0..batch {
            for ch in 0..c {
                let base = b * in_len + ch * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = base + oy * self.stride.0 * w + ox * self.stride.1;
                        for ky in 0..self.window.0 {
                            let y = oy * self.stride.0 + ky;
                            for kx in 0..self.window.1 {
                                let i = base + y * w + ox * self.stride.1 + kx;
                                if input[i] > best {
                                    best = input[i];
                                    best_i = i;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_i);
                    }
                }
            }
        }
        Ok((out, argmax))
    }

    pub(crate) fn backward(argmax: &[usize], in_len: usize, grad_out: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; in_len];
        for (&i, g) in argmax.iter().zip(grad_out) {
            dx[i] += g;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_spec_round_trip() {
        let arch = "conv:112:9x9:relu, maxpool:5x5, dense:10";
        let specs = parse_architecture(arch).unwrap();
        assert_eq!(specs.len(), 3);
        let canon = format_architecture(&specs);
        assert_eq!(
            canon,
            "conv:112:9x9:s1x1:p0x0:relu,maxpool:5x5:s5x5,dense:10:identity"
        );
        assert_eq!(parse_architecture(&canon).unwrap(), specs);
    }

    #[test]
    fn layer_spec_rejects_garbage() {
        assert!("pool:2".parse::<LayerSpec>().is_err());
        assert!("dense:0".parse::<LayerSpec>().is_err());
        assert!("conv:4".parse::<LayerSpec>().is_err());
        assert!("dense:4:s2".parse::<LayerSpec>().is_err());
        assert!("conv:4:3x3:bogus".parse::<LayerSpec>().is_err());
    }

    #[test]
    fn output_extents() {
        let conv: LayerSpec = "conv:112:9x9".parse().unwrap();
        assert_eq!(conv.output_shape(&[1, 28, 28]).unwrap(), vec![112, 20, 20]);
        let pool: LayerSpec = "maxpool:5x5".parse().unwrap();
        assert_eq!(pool.output_shape(&[112, 20, 20]).unwrap(), vec![112, 4, 4]);
        // trailing remainder dropped
        assert_eq!(pool.output_shape(&[1, 12, 7]).unwrap(), vec![1, 2, 1]);
        let strided: LayerSpec = "conv:2:3x3:s2:p1".parse().unwrap();
        assert_eq!(strided.output_shape(&[1, 5, 5]).unwrap(), vec![2, 3, 3]);
        assert!(conv.output_shape(&[1, 8, 8]).is_err());
    }

    #[test]
    fn maxpool_ties_take_first_index() {
        let pool = MaxPool2d {
            window: (2, 2),
            stride: (2, 2),
        };
        let (out, argmax) = pool.forward(&[1, 2, 2], &[1.0, 1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(out, vec![1.0]);
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let conv = Conv2d {
            kernel: Tensor::zeros(&[2, 2, 3, 2]),
            bias: Tensor::zeros(&[2]),
            stride: (2, 1),
            padding: (1, 1),
            activation: Activation::Identity,
        };
        let geo = ConvGeometry::new(&conv, &[2, 5, 4]).unwrap();
        let x: Vec<f64> = (0..geo.in_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let n = geo.patch_len() * geo.positions();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; n];
        geo.im2col(&x, &mut cols);
        let mut back = vec![0.0; geo.in_len()];
        geo.col2im(&y, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
