//! Norm and distance statistics of a trained network and the distance-based
//! complexity measures built from them.
//!
//! Conv layers are viewed two ways. The MARS quantities use the kernel as an
//! `out_channels x (in_channels·kh·kw)` matrix, which equals the MARS norm of
//! the unfolded operator up to boundary rows with fewer taps. The Frobenius
//! and spectral quantities describe the unfolded operator itself.
//!
//! Only weights enter the statistics; biases are ignored.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{
    distance, frobenius_norm, mars_norm, matrix_spectral_norm, spectral_norm, MatrixNorm,
    PowerIteration, Tensor,
};
use crate::nn::{conv_operator, ramp_loss, Layer, LayerParams, Network};
use crate::optim::predict_all;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub name: String,
    /// `‖W‖_∞` (MARS).
    pub b_inf: f64,
    /// `‖W − W0‖_∞`.
    pub d_inf: f64,
    /// Frobenius norm of the unfolded operator.
    pub b_f: f64,
    pub d_f: f64,
    /// Spectral norm of the layer's linear map.
    pub b_spec: f64,
    pub d_spec: f64,
    /// Columns of the unfolded weight matrix, i.e. the flattened input length.
    pub n: usize,
    /// Weights plus biases.
    pub param_count: usize,
}

/// Statistics of every parameter layer of `net` against `reference`.
pub fn layer_stats(
    net: &Network,
    reference: &[LayerParams],
    power: &PowerIteration,
) -> Result<Vec<LayerStats>> {
    crate::nn::check_shapes(&net.params(), reference)?;
    (0..net.param_layer_count())
        .map(|j| {
            let (layer, input_shape) = net.param_layer_at(j);
            let w = net.weight(j);
            let w0 = &reference[j].weight;
            let diff = w.sub(w0)?;
            let (wm, w0m) = (w.as_matrix(), w0.as_matrix());
            let b_inf = mars_norm(wm)?;
            let d_inf = distance(wm, w0m, MatrixNorm::Mars)?;
            let param_count = w.len() + net.bias(j).len();
            let (b_f, d_f, b_spec, d_spec, n) = match layer {
                Layer::Dense(_) => (
                    frobenius_norm(wm)?,
                    distance(wm, w0m, MatrixNorm::Frobenius)?,
                    matrix_spectral_norm(wm, power)?,
                    matrix_spectral_norm(diff.as_matrix(), power)?,
                    wm.cols(),
                ),
                Layer::Conv(conv) => {
                    let spec = |k: &Tensor| -> Result<(f64, usize, usize)> {
                        let (a, at, in_len, positions) = conv_operator(conv, input_shape, k)?;
                        Ok((spectral_norm(a, at, in_len, power)?, in_len, positions))
                    };
                    let (b_spec, in_len, positions) = spec(w)?;
                    let (d_spec, _, _) = spec(&diff)?;
                    let root_p = (positions as f64).sqrt();
                    (
                        root_p * frobenius_norm(wm)?,
                        root_p * distance(wm, w0m, MatrixNorm::Frobenius)?,
                        b_spec,
                        d_spec,
                        in_len,
                    )
                }
                Layer::MaxPool(_) => unreachable!("parameter layers are dense or conv"),
            };
            Ok(LayerStats {
                name: Network::param_layer_name(j),
                b_inf,
                d_inf,
                b_f,
                d_f,
                b_spec,
                d_spec,
                n,
                param_count,
            })
        })
        .collect()
}

fn check_common(stats: &[LayerStats], m: usize) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::domain("no layers"));
    }
    if m == 0 {
        return Err(Error::domain("sample size m must be at least 1"));
    }
    Ok(())
}

fn check_scalar(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be finite and non-negative, got {v}"
        )))
    }
}

/// `4·√(ln 2d)·c·ρ·C_∞·(Σ_j D_j/B_j)·(Π_j 2B_j)/√m` over MARS quantities.
pub fn mars_complexity(
    stats: &[LayerStats],
    m: usize,
    c: usize,
    d: usize,
    c_inf: f64,
    rho: f64,
) -> Result<f64> {
    check_common(stats, m)?;
    if d == 0 {
        return Err(Error::domain("input dimension d must be at least 1"));
    }
    check_scalar("C_inf", c_inf)?;
    check_scalar("rho", rho)?;
    let mut sum = 0.0;
    let mut prod = 1.0;
    for s in stats {
        if !(s.b_inf > 0.0) {
            return Err(Error::domain(format!("{}: MARS norm is zero", s.name)));
        }
        sum += s.d_inf / s.b_inf;
        prod *= 2.0 * s.b_inf;
    }
    let d = d as f64;
    Ok(4.0 * (2.0 * d).ln().sqrt() * c as f64 * rho * c_inf * sum * prod / (m as f64).sqrt())
}

/// `2√2·c·ρ·C₂·(Σ_j D_j/(2B_j·Π_{i≤j}√n_i))·(Π_j 2B_j√n_j)/√m` over the
/// unfolded Frobenius quantities.
pub fn frobenius_complexity(
    stats: &[LayerStats],
    m: usize,
    c: usize,
    c_2: f64,
    rho: f64,
) -> Result<f64> {
    check_common(stats, m)?;
    check_scalar("C_2", c_2)?;
    check_scalar("rho", rho)?;
    let mut sum = 0.0;
    let mut prod = 1.0;
    let mut root_n = 1.0;
    for s in stats {
        if !(s.b_f > 0.0) {
            return Err(Error::domain(format!("{}: Frobenius norm is zero", s.name)));
        }
        if s.n == 0 {
            return Err(Error::domain(format!("{}: zero columns", s.name)));
        }
        let rn = (s.n as f64).sqrt();
        root_n *= rn;
        sum += s.d_f / (2.0 * s.b_f * root_n);
        prod *= 2.0 * s.b_f * rn;
    }
    Ok(2.0 * 2f64.sqrt() * c as f64 * rho * c_2 * sum * prod / (m as f64).sqrt())
}

/// `√(N/m)·ρ·C₂·(Σ_j D_j)·(Π_j B_j)` over spectral quantities, with `N` the
/// total parameter count and the big-O constant taken as 1.
pub fn spectral_complexity(stats: &[LayerStats], m: usize, c_2: f64, rho: f64) -> Result<f64> {
    check_common(stats, m)?;
    check_scalar("C_2", c_2)?;
    check_scalar("rho", rho)?;
    let n: usize = stats.iter().map(|s| s.param_count).sum();
    let sum: f64 = stats.iter().map(|s| s.d_spec).sum();
    let prod: f64 = stats.iter().map(|s| s.b_spec).product();
    Ok((n as f64 / m as f64).sqrt() * rho * c_2 * sum * prod)
}

/// `3·√(ln(2/δ)/(2m))`.
pub fn confidence_term(m: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if m == 0 {
        return Err(Error::domain("sample size m must be at least 1"));
    }
    Ok(3.0 * ((2.0 / delta).ln() / (2.0 * m as f64)).sqrt())
}

pub fn generalization_bound(
    empirical_risk: f64,
    complexity: f64,
    m: usize,
    delta: f64,
) -> Result<f64> {
    Ok(empirical_risk + complexity + confidence_term(m, delta)?)
}

/// `(max_i ‖x_i‖_∞, max_i ‖x_i‖_2)` over the dataset.
pub fn input_bounds(ds: &Dataset) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::domain("input bounds of an empty dataset"));
    }
    let mut c_inf: f64 = 0.0;
    let mut c_2: f64 = 0.0;
    for i in 0..ds.len() {
        let x = ds.example(i);
        c_inf = c_inf.max(x.iter().map(|v| v.abs()).fold(0.0, f64::max));
        c_2 = c_2.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok((c_inf, c_2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub delta: f64,
    /// Lipschitz constant of the loss.
    pub rho: f64,
    /// Ramp-loss margin used for the empirical risk.
    pub margin: f64,
    pub power: PowerIteration,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            rho: 1.0,
            margin: 1.0,
            power: PowerIteration::default(),
        }
    }
}

/// The three measures (full middle terms, without the confidence term), the
/// empirical ramp risk and every constant they were computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub epoch: usize,
    pub mars: f64,
    pub frobenius: f64,
    pub spectral: f64,
    pub risk: f64,
    pub conf: f64,
    pub m: usize,
    pub c: usize,
    pub d: usize,
    pub c_inf: f64,
    pub c_2: f64,
    pub rho: f64,
    pub delta: f64,
    pub layers: Vec<LayerStats>,
    /// Reasons for any measure reported as `+∞`.
    pub diagnostics: Vec<String>,
}

pub const BOUND_CSV_HEADER: &str =
    "epoch,mars,frobenius,spectral,risk,conf,m,c,d,C_inf,C_2,rho,delta";

fn or_infinite(r: Result<f64>, what: &str, diagnostics: &mut Vec<String>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::Domain(msg)) if msg.ends_with("norm is zero") => {
            diagnostics.push(format!("{what} measure is infinite: {msg}"));
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

impl BoundReport {
    /// Measures `net` against `reference` on `data` (the training sample).
    pub fn compute(
        net: &Network,
        reference: &[LayerParams],
        data: &Dataset,
        params: &BoundParams,
        epoch: usize,
    ) -> Result<Self> {
        let layers = layer_stats(net, reference, &params.power)?;
        let (c_inf, c_2) = input_bounds(data)?;
        let m = data.len();
        let c = net.class_count();
        let d = net.input_len();
        let logits = predict_all(net, data, 256)?;
        let risk = ramp_loss(&logits, &data.labels, params.margin)?;
        let conf = confidence_term(m, params.delta)?;
        let mut diagnostics = Vec::new();
        let mars = or_infinite(
            mars_complexity(&layers, m, c, d, c_inf, params.rho),
            "mars",
            &mut diagnostics,
        )?;
        let frobenius = or_infinite(
            frobenius_complexity(&layers, m, c, c_2, params.rho),
            "frobenius",
            &mut diagnostics,
        )?;
        let spectral = spectral_complexity(&layers, m, c_2, params.rho)?;
        Ok(Self {
            epoch,
            mars,
            frobenius,
            spectral,
            risk,
            conf,
            m,
            c,
            d,
            c_inf,
            c_2,
            rho: params.rho,
            delta: params.delta,
            layers,
            diagnostics,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.mars,
            self.frobenius,
            self.spectral,
            self.risk,
            self.conf,
            self.m,
            self.c,
            self.d,
            self.c_inf,
            self.c_2,
            self.rho,
            self.delta
        )
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "epoch {}: m={} c={} d={} C_inf={} C_2={} rho={} delta={}",
            self.epoch, self.m, self.c, self.d, self.c_inf, self.c_2, self.rho, self.delta
        );
        let _ = writeln!(
            s,
            "  {:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
            "layer", "B_inf", "D_inf", "B_F", "D_F", "B_spec", "D_spec", "n"
        );
        for l in &self.layers {
            let _ = writeln!(
                s,
                "  {:<8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8}",
                l.name, l.b_inf, l.d_inf, l.b_f, l.d_f, l.b_spec, l.d_spec, l.n
            );
        }
        for (name, v) in [
            ("mars", self.mars),
            ("frobenius", self.frobenius),
            ("spectral", self.spectral),
        ] {
            let _ = writeln!(
                s,
                "  {name:<10} measure {v}  bound {}",
                self.risk + v + self.conf
            );
        }
        let _ = writeln!(s, "  ramp risk {}  confidence {}", self.risk, self.conf);
        let _ = writeln!(s, "  measures include all constants; conv Frobenius uses sqrt(output positions) x kernel norm");
        for d in &self.diagnostics {
            let _ = writeln!(s, "  note: {d}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(b: f64, d: f64, n: usize, params: usize) -> Vec<LayerStats> {
        vec![LayerStats {
            name: "layer1".into(),
            b_inf: b,
            d_inf: d,
            b_f: b,
            d_f: d,
            b_spec: b,
            d_spec: d,
            n,
            param_count: params,
        }]
    }

    #[test]
    fn single_layer_examples() {
        let s = one(1.0, 0.5, 4, 4);
        let mars = mars_complexity(&s, 4, 2, 2, 1.0, 1.0).unwrap();
        assert!((mars - 4.0 * 4f64.ln().sqrt()).abs() < 1e-12);
        let frob = frobenius_complexity(&s, 4, 2, 1.0, 1.0).unwrap();
        assert!((frob - 2f64.sqrt()).abs() < 1e-12);
        assert!((spectral_complexity(&s, 4, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let conf = confidence_term(200, 0.1).unwrap();
        assert!((conf - 3.0 * (20f64.ln() / 400.0).sqrt()).abs() < 1e-15);
        assert!((generalization_bound(0.1, 2.0, 200, 0.1).unwrap() - 2.1 - conf).abs() < 1e-15);
    }

    #[test]
    fn zero_distance_gives_zero_measures() {
        let s = one(3.0, 0.0, 9, 10);
        assert_eq!(mars_complexity(&s, 10, 3, 5, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(frobenius_complexity(&s, 10, 3, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(spectral_complexity(&s, 10, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_norm_and_bad_delta_are_domain_errors() {
        let s = one(0.0, 0.0, 1, 1);
        let err = mars_complexity(&s, 1, 2, 2, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("layer1"));
        assert!(frobenius_complexity(&s, 1, 2, 1.0, 1.0).is_err());
        assert!(confidence_term(10, 1.0).is_err());
        assert!(confidence_term(10, 0.0).is_err());
    }

    #[test]
    fn input_bounds_examples() {
        let x = Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.0, 3.0]).unwrap();
        let ds = Dataset::new("t", x, vec![0, 1], 2).unwrap();
        let (ci, c2) = input_bounds(&ds).unwrap();
        assert_eq!(ci, 3.0);
        assert_eq!(c2, 3.0);
        let z = Dataset::new("z", Tensor::zeros(&[1, 3]), vec![0], 1).unwrap();
        assert_eq!(input_bounds(&z).unwrap(), (0.0, 0.0));
    }
}
