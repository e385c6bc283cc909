//! Command-line driver: config files, checkpoints and the subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bounds::{BoundParams, BOUND_CSV_HEADER};
use crate::data::SyntheticParams;
use crate::error::{Error, Result};
use crate::linalg::PowerIteration;

pub use commands::{
    cmd_bound, cmd_distances, cmd_gen_data, cmd_sweep, cmd_train, parse_constraint_list, BoundArgs,
    Histogram,
};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "distreg",
    version,
    about = "Distance-regularised training and distance-based bound measures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a config file; writes checkpoints and a metrics CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Complexity measures of a final checkpoint relative to an initial one.
    Bound {
        #[arg(long)]
        init: PathBuf,
        #[arg(long = "final")]
        final_: PathBuf,
        /// Directory with the training split used for m, C and the risk.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        /// Value written to the epoch column.
        #[arg(long, default_value_t = 0)]
        epoch: usize,
        /// Use only the first N training examples.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 500)]
        power_iters: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One training run per factor applied to every radius and penalty weight.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated positive factors, e.g. 1e-3,1e-1,1,1e1,1e3
        #[arg(long)]
        factors: String,
        #[arg(long)]
        quiet: bool,
    },
    /// Per-layer weight distances between two checkpoints.
    Distances {
        #[arg(long)]
        init: PathBuf,
        #[arg(long = "final")]
        final_: PathBuf,
        /// e.g. layer1=mars:0.5,layer2=frobenius:1
        #[arg(long)]
        constraints: Option<String>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic pretrain / fine-tune task as IDX files.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n_pre: usize,
        #[arg(long, default_value_t = 500)]
        n_fine: usize,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0.5)]
        shift: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

pub fn parse_factors(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::config(format!("bad sweep factor '{t}'")))
        })
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, quiet } => {
            let out = cmd_train(&config, quiet)?;
            if let Some(last) = out.history.last() {
                println!(
                    "trained {} epochs: train loss {} train acc {} test acc {}",
                    last.epoch,
                    last.train_loss,
                    last.train_acc,
                    last.test_acc.map_or("-".into(), |a| a.to_string())
                );
            }
            Ok(())
        }
        Command::Bound {
            init,
            final_,
            data,
            delta,
            rho,
            margin,
            epoch,
            limit,
            power_iters,
            out,
        } => {
            let args = BoundArgs {
                init,
                final_,
                data,
                params: BoundParams {
                    delta,
                    rho,
                    margin,
                    power: PowerIteration {
                        iters: power_iters,
                        ..PowerIteration::default()
                    },
                },
                epoch,
                limit,
            };
            let rep = cmd_bound(&args)?;
            eprint!("{}", rep.text());
            emit(
                out.as_deref(),
                &format!("{BOUND_CSV_HEADER}\n{}\n", rep.csv_row()),
            )
        }
        Command::Sweep {
            config,
            factors,
            quiet,
        } => {
            let rows = cmd_sweep(&config, &parse_factors(&factors)?, quiet)?;
            println!("{}", commands::SWEEP_HEADER);
            for r in rows {
                println!("{r}");
            }
            Ok(())
        }
        Command::Distances {
            init,
            final_,
            constraints,
            out,
        } => {
            let spec = constraints
                .as_deref()
                .map(parse_constraint_list)
                .transpose()?
                .unwrap_or_default();
            let (rows, hist) = cmd_distances(&init, &final_, &spec)?;
            let mut csv = format!("{}\n", commands::DISTANCES_HEADER);
            for r in &rows {
                csv.push_str(&r.csv());
                csv.push('\n');
            }
            emit(out.as_deref(), &csv)?;
            let text = hist.text("MARS distance");
            if out.is_some() {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
            Ok(())
        }
        Command::GenData {
            seed,
            out,
            n_pre,
            n_fine,
            n_test,
            dim,
            classes,
            shift,
            noise,
        } => cmd_gen_data(
            &SyntheticParams {
                seed,
                n_pre,
                n_fine,
                n_test,
                dim,
                classes,
                shift,
                noise,
            },
            &out,
        ),
    }
}
