use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use memsnn::harness::{self, SweepAxis, SweepParam, SweepSpec};
use memsnn::pipelines::{test_modes, EvalMode, ExperimentConfig};

#[derive(Parser)]
#[command(name = "memsnn", version, about = "Memristor-backed spiking network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted `key=value` applied on top of the config, e.g. `snn.steps=200`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        ExperimentConfig::from_file(&self.config, &overrides).with_context(|| format!("loading {}", self.config.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train per the config's approach, evaluate on the test split and write all outputs.
    Train(Common),
    /// Evaluate a saved run on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory holding params.csv (and crossbar_state.csv).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Modes to evaluate: ann, snn, snn+memristor. Defaults to the approach's modes.
        #[arg(long = "mode")]
        modes: Vec<EvalMode>,
    },
    /// Convert a trained network to its spiking form (writes snn.json).
    Convert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Program a converted network's weights into a fresh crossbar.
    Map {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run one config per value (or per pair of values for a shmoo).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// T, r_tolerance or read_noise.
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Second axis for a shmoo grid.
        #[arg(long, requires = "values2")]
        param2: Option<SweepParam>,
        #[arg(long, value_delimiter = ',', requires = "param2")]
        values2: Vec<f64>,
    },
}

fn print_accuracies(acc: &std::collections::BTreeMap<String, f64>) {
    for (mode, a) in acc {
        println!("test {mode}: {a:.2}%");
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let (record, _) = harness::run(&cfg, Some(&common.out))?;
            println!("fingerprint {}", record.fingerprint);
            println!("best epoch {}", record.best_epoch);
            print_accuracies(&record.test_accuracy);
            println!("outputs in {}", common.out.display());
        }
        Command::Eval { common, checkpoint, modes } => {
            let cfg = common.load()?;
            let modes = if modes.is_empty() { test_modes(cfg.approach).to_vec() } else { modes };
            let acc = harness::eval_checkpoint(&cfg, &checkpoint, &modes)?;
            print_accuracies(&acc);
            std::fs::create_dir_all(&common.out)?;
            write_json(&common.out.join("eval.json"), &acc)?;
        }
        Command::Convert { common, checkpoint } => {
            let cfg = common.load()?;
            let spec = harness::convert_checkpoint(&cfg, &checkpoint, &common.out)?;
            println!("{} weights, V_th {}, T {}", spec.weights.len(), spec.v_th, spec.steps);
        }
        Command::Map { common, checkpoint } => {
            let cfg = common.load()?;
            let f = harness::map_checkpoint(&cfg, &checkpoint, &common.out)?;
            println!(
                "{}/{} devices converged, euclidean distance {:.6}, rms {:.6}, max relative R error {:.6}",
                f.converged, f.devices, f.euclidean_distance, f.rms_error, f.max_relative_r_error
            );
        }
        Command::Sweep {
            common,
            param,
            values,
            param2,
            values2,
        } => {
            let cfg = common.load()?;
            let mut axes = vec![SweepAxis { param, values }];
            if let Some(p) = param2 {
                axes.push(SweepAxis { param: p, values: values2 });
            }
            let spec = SweepSpec::new(cfg, axes)?;
            let cells = harness::sweep(&spec, Some(&common.out))?;
            let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
            print!("{}", harness::sweep_csv(&spec.axes, &cells));
            if failed == cells.len() {
                bail!("every sweep cell failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
