//! The experiment subcommands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::bounds::{BoundParams, BoundReport, BOUND_CSV_HEADER};
use crate::data::{self, synthetic_transfer_task, Dataset, SyntheticParams};
use crate::error::{Error, Result};
use crate::linalg::MatrixNorm;
use crate::nn::{check_shapes, Network};
use crate::optim::{layer_distances, train, EpochRecord, MetricsSink, TrainConfig};
use crate::regularizers::{Constraint, ConstraintSpec};

use super::checkpoint;
use super::config::RunConfig;

pub const INIT_CHECKPOINT: &str = "init.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const HISTOGRAM_BINS: usize = 15;
/// A layer counts as on the boundary when `γ − distance ≤ BOUNDARY_TOL·γ`.
pub const BOUNDARY_TOL: f64 = 1e-3;

struct CsvFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvFile {
    fn create(path: &Path, header: &str) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut csv = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        };
        csv.row(header)?;
        Ok(csv)
    }

    /// Writes one line and flushes, so a failed run leaves complete rows.
    fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `epoch,train_loss,train_acc,test_acc,layer1_mars,layer1_frobenius,...`
pub fn metrics_header(layers: usize) -> String {
    let mut h = String::from("epoch,train_loss,train_acc,test_acc");
    for j in 0..layers {
        let name = Network::param_layer_name(j);
        let _ = write!(h, ",{name}_mars,{name}_frobenius");
    }
    h
}

pub fn metrics_row(r: &EpochRecord) -> String {
    let mut s = format!(
        "{},{},{},{}",
        r.epoch,
        r.train_loss,
        r.train_acc,
        r.test_acc.map_or(String::new(), |a| a.to_string())
    );
    for d in &r.distances {
        let _ = write!(s, ",{},{}", d.mars, d.frobenius);
    }
    s
}

struct RunSink<'a> {
    metrics: CsvFile,
    bounds: Option<(CsvFile, &'a Dataset, BoundParams)>,
    quiet: bool,
}

impl MetricsSink for RunSink<'_> {
    fn on_epoch(&mut self, net: &Network, r: &EpochRecord) -> Result<()> {
        self.metrics.row(&metrics_row(r))?;
        if let Some((csv, data, params)) = self.bounds.as_mut() {
            let rep = BoundReport::compute(net, net.reference(), data, params, r.epoch)?;
            csv.row(&rep.csv_row())?;
        }
        if !self.quiet {
            eprintln!(
                "epoch {}: loss {:.5} train acc {:.4} test acc {}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                r.test_acc.map_or("-".into(), |a| format!("{a:.4}"))
            );
        }
        Ok(())
    }
}

/// Training and test sets named by the config.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let mut tr = data::load_train(&cfg.data_dir)?;
    let mut te = data::load_test(&cfg.data_dir)?;
    if let Some(n) = cfg.train_limit {
        tr = tr.take(n);
    }
    if let Some(n) = cfg.test_limit {
        te = te.take(n);
    }
    // Class count from the union so a small split missing a class still
    // matches the network head.
    let classes = tr.class_count.max(te.class_count);
    Ok((tr.with_class_count(classes)?, te.with_class_count(classes)?))
}

/// The network a run starts from, with its reference captured.
pub fn initial_network(cfg: &RunConfig, train_data: &Dataset) -> Result<Network> {
    let input = cfg
        .input
        .clone()
        .unwrap_or_else(|| train_data.example_shape().to_vec());
    if input.iter().product::<usize>() != train_data.example_len() {
        return Err(Error::config(format!(
            "input shape {input:?} does not match the data's {:?}",
            train_data.example_shape()
        )));
    }
    let mut net = match &cfg.init_checkpoint {
        Some(path) => {
            let mut net = checkpoint::load(path)?.network;
            if net.input_shape() != input.as_slice() {
                return Err(Error::config(format!(
                    "checkpoint input {:?} does not match {input:?}",
                    net.input_shape()
                )));
            }
            if let Some(arch) = &cfg.arch {
                if net.specs() != *arch {
                    return Err(Error::config(format!(
                        "arch does not match the checkpoint's {}",
                        net.architecture()
                    )));
                }
            }
            if cfg.reinit_head {
                let last = net.param_layer_count() - 1;
                net.reinit_param_layer(last, cfg.train.seed);
            }
            net.recapture_reference();
            net
        }
        None => Network::new(
            &input,
            cfg.arch.as_ref().expect("validated"),
            cfg.train.seed,
        )?,
    };
    if train_data.class_count > net.class_count() {
        return Err(Error::config(format!(
            "data has {} classes but the network outputs {}",
            train_data.class_count,
            net.class_count()
        )));
    }
    net.recapture_reference();
    Ok(net)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochRecord>,
}

fn train_into(
    cfg: &RunConfig,
    factor: f64,
    data: (&Dataset, &Dataset),
    out_dir: &Path,
    quiet: bool,
) -> Result<TrainOutcome> {
    create_dir(out_dir)?;
    let mut net = initial_network(cfg, data.0)?;
    let train_cfg = TrainConfig {
        regularization: cfg.regularization(net.param_layer_count())?.scaled(factor),
        ..cfg.train.clone()
    };
    checkpoint::save(&out_dir.join(INIT_CHECKPOINT), &net, cfg.hash)?;
    let mut sink = RunSink {
        metrics: CsvFile::create(
            &out_dir.join(METRICS_CSV),
            &metrics_header(net.param_layer_count()),
        )?,
        bounds: if cfg.bounds_per_epoch {
            Some((
                CsvFile::create(&out_dir.join(BOUNDS_CSV), BOUND_CSV_HEADER)?,
                data.0,
                cfg.bound,
            ))
        } else {
            None
        },
        quiet,
    };
    let history = train(&mut net, data.0, Some(data.1), &train_cfg, &mut sink)?;
    checkpoint::save(&out_dir.join(FINAL_CHECKPOINT), &net, cfg.hash)?;
    Ok(TrainOutcome {
        network: net,
        history,
    })
}

/// `train --config`: writes the initial and final checkpoints, the per-epoch
/// metrics CSV and, with `bounds_per_epoch`, a bounds CSV.
pub fn cmd_train(config: &Path, quiet: bool) -> Result<TrainOutcome> {
    let cfg = RunConfig::load(config)?;
    let (tr, te) = load_data(&cfg)?;
    train_into(&cfg, 1.0, (&tr, &te), &cfg.output_dir, quiet)
}

#[derive(Debug, Clone)]
pub struct BoundArgs {
    pub init: PathBuf,
    pub final_: PathBuf,
    pub data: PathBuf,
    pub params: BoundParams,
    pub epoch: usize,
    pub limit: Option<usize>,
}

/// `bound`: measures the final checkpoint against the initial one on the
/// training split of `data`.
pub fn cmd_bound(args: &BoundArgs) -> Result<BoundReport> {
    let init = checkpoint::load(&args.init)?.network;
    let fin = checkpoint::load(&args.final_)?.network;
    check_shapes(&fin.params(), &init.params())?;
    if init.specs() != fin.specs() || init.input_shape() != fin.input_shape() {
        return Err(Error::domain(format!(
            "checkpoints have different architectures: {} vs {}",
            init.architecture(),
            fin.architecture()
        )));
    }
    let mut data = data::load_train(&args.data)?;
    if let Some(n) = args.limit {
        data = data.take(n);
    }
    BoundReport::compute(&fin, &init.params(), &data, &args.params, args.epoch)
}

pub const SWEEP_HEADER: &str = "c,train_loss,train_acc,test_acc,mars,frobenius,spectral,risk,conf";

/// `sweep`: one training run per factor, each with every radius and penalty
/// weight multiplied by the factor. Rows are flushed as runs finish.
pub fn cmd_sweep(config: &Path, factors: &[f64], quiet: bool) -> Result<Vec<String>> {
    if factors.is_empty() {
        return Err(Error::config("no sweep factors"));
    }
    if let Some(f) = factors.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::config(format!(
            "sweep factors must be positive, got {f}"
        )));
    }
    let cfg = RunConfig::load(config)?;
    if cfg.constraints.is_empty() && cfg.penalties.is_empty() {
        return Err(Error::config(
            "sweep needs base constraints or penalties in the config",
        ));
    }
    let (tr, te) = load_data(&cfg)?;
    create_dir(&cfg.output_dir)?;
    let mut csv = CsvFile::create(&cfg.output_dir.join(SWEEP_CSV), SWEEP_HEADER)?;
    let mut rows = Vec::new();
    for (i, &c) in factors.iter().enumerate() {
        let dir = cfg.output_dir.join(format!("run{:02}", i + 1));
        if !quiet {
            eprintln!("sweep factor {c}");
        }
        let out = train_into(&cfg, c, (&tr, &te), &dir, quiet)?;
        let last = out.history.last().expect("at least one epoch");
        let rep = BoundReport::compute(
            &out.network,
            out.network.reference(),
            &tr,
            &cfg.bound,
            last.epoch,
        )?;
        let row = format!(
            "{c},{},{},{},{},{},{},{},{}",
            last.train_loss,
            last.train_acc,
            last.test_acc.map_or(String::new(), |a| a.to_string()),
            rep.mars,
            rep.frobenius,
            rep.spectral,
            rep.risk,
            rep.conf
        );
        csv.row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Parses `layer1=mars:0.5,layer2=frobenius:1`.
pub fn parse_constraint_list(s: &str) -> Result<ConstraintSpec> {
    let mut out = ConstraintSpec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (layer, c) = item
            .split_once('=')
            .ok_or_else(|| Error::config(format!("'{item}' should look like layer1=mars:0.5")))?;
        let j = layer
            .trim()
            .strip_prefix("layer")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::config(format!("bad layer name '{layer}'")))?;
        out.insert(j - 1, c.parse::<Constraint>()?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub layer: String,
    pub mars: f64,
    pub frobenius: f64,
    pub constraint: Option<Constraint>,
    /// Distance in the constraint's norm.
    pub constrained_distance: Option<f64>,
    pub on_boundary: bool,
    pub exceeds: bool,
}

pub const DISTANCES_HEADER: &str =
    "layer,mars,frobenius,constraint,gamma,distance,on_boundary,exceeds";

impl DistanceRow {
    pub fn csv(&self) -> String {
        let (kind, gamma) = self.constraint.map_or((String::new(), String::new()), |c| {
            (c.kind.name().to_string(), c.gamma.to_string())
        });
        format!(
            "{},{},{},{},{},{},{},{}",
            self.layer,
            self.mars,
            self.frobenius,
            kind,
            gamma,
            self.constrained_distance
                .map_or(String::new(), |d| d.to_string()),
            self.on_boundary,
            self.exceeds
        )
    }
}

/// Fixed-bin histogram over `[0, max]`; a single bin when every value is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub max: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Self {
                max,
                counts: vec![values.len()],
            };
        }
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / max) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Self { max, counts }
    }

    pub fn text(&self, label: &str) -> String {
        let mut s = format!(
            "{label} histogram, {} bins over [0, {}]\n",
            self.counts.len(),
            self.max
        );
        let width = self.max / self.counts.len() as f64;
        for (i, &c) in self.counts.iter().enumerate() {
            let _ = writeln!(
                s,
                "  [{:>12.6}, {:>12.6}{} {:>5} {}",
                i as f64 * width,
                (i + 1) as f64 * width,
                if i + 1 == self.counts.len() { "]" } else { ")" },
                c,
                "#".repeat(c.min(60))
            );
        }
        s
    }
}

/// `distances`: per-layer weight distances between two checkpoints, flagging
/// layers on or beyond the boundary of a supplied constraint.
pub fn cmd_distances(
    init: &Path,
    final_: &Path,
    constraints: &ConstraintSpec,
) -> Result<(Vec<DistanceRow>, Histogram)> {
    let a = checkpoint::load(init)?.network;
    let mut b = checkpoint::load(final_)?.network;
    check_shapes(&b.params(), &a.params())?;
    if let Some(&j) = constraints.keys().find(|&&j| j >= a.param_layer_count()) {
        return Err(Error::config(format!(
            "constraint on layer{} but the network has {} parameter layers",
            j + 1,
            a.param_layer_count()
        )));
    }
    b.set_reference(a.params())?;
    let rows: Vec<DistanceRow> = layer_distances(&b)?
        .into_iter()
        .enumerate()
        .map(|(j, d)| {
            let constraint = constraints.get(&j).copied();
            let dist = constraint.map(|c| match c.kind {
                MatrixNorm::Mars => d.mars,
                MatrixNorm::Frobenius => d.frobenius,
            });
            let (on_boundary, exceeds) = match (constraint, dist) {
                (Some(c), Some(x)) if c.gamma.is_finite() => (
                    c.gamma - x <= BOUNDARY_TOL * c.gamma,
                    x > c.gamma * (1.0 + 1e-12),
                ),
                _ => (false, false),
            };
            DistanceRow {
                layer: Network::param_layer_name(j),
                mars: d.mars,
                frobenius: d.frobenius,
                constraint,
                constrained_distance: dist,
                on_boundary,
                exceeds,
            }
        })
        .collect();
    let mars: Vec<f64> = rows.iter().map(|r| r.mars).collect();
    Ok((rows, Histogram::new(&mars, HISTOGRAM_BINS)))
}

/// `gen-data`: writes `pretrain/` and `finetune/` IDX directories and a
/// `meta.txt` sidecar with the generation parameters.
pub fn cmd_gen_data(params: &SyntheticParams, out: &Path) -> Result<()> {
    let t = synthetic_transfer_task(params)?;
    data::write_split(&out.join("pretrain"), &t.pretrain, &t.pretrain_test)?;
    data::write_split(&out.join("finetune"), &t.finetune, &t.finetune_test)?;
    let meta = format!(
        "seed = {}\nn_pre = {}\nn_fine = {}\nn_test = {}\ndim = {}\nclasses = {}\nshift = {}\nnoise = {}\n",
        params.seed, params.n_pre, params.n_fine, params.n_test, params.dim, params.classes, params.shift, params.noise
    );
    let path = out.join("meta.txt");
    fs::write(&path, meta).map_err(|e| Error::io(path, e))
}
