//! Config-driven runs, sweeps and their on-disk outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{program_trace_csv, CrossbarArray};
use crate::netcore::{Adagrad, NetworkParams};
use crate::pipelines::approach1::{self, fresh_array};
use crate::pipelines::metrics::{epochs_csv, round2, trace_wobble, weight_trace_csv};
use crate::pipelines::{
    self, load_dataset, seeds, ConfigError, EpochMetrics, EvalMode, ExperimentConfig, MappingFidelity, PipelineError,
    ProgrammingStats, RunOutput, SnnSpec,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const WEIGHTS_TRACE_CSV: &str = "weights_trace.csv";
pub const PROGRAMMING_TRACE_CSV: &str = "programming_trace.csv";
pub const PARAMS_CSV: &str = "params.csv";
pub const CROSSBAR_CSV: &str = "crossbar_state.csv";
pub const VOCAB_TSV: &str = "vocab.tsv";
pub const CONFIG_TOML: &str = "config.toml";
pub const SNN_JSON: &str = "snn.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// What a run reports. Accuracies are percentages rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// SHA-256 of the resolved configuration.
    pub fingerprint: String,
    pub seed: u64,
    pub approach: u8,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub test_accuracy: BTreeMap<String, f64>,
    pub programming: ProgrammingStats,
    pub mapping: Option<MappingFidelity>,
    /// Largest `|expected - actual|` weight gap over the second half of
    /// direct training.
    pub trace_wobble: Option<f64>,
    pub vocab_size: usize,
    pub expected_vocab_size: usize,
    pub wall_clock_seconds: f64,
}

impl MetricsRecord {
    pub fn from_run(cfg: &ExperimentConfig, out: &RunOutput, seconds: f64) -> Self {
        let m = &out.metrics;
        let epochs = m
            .epochs
            .iter()
            .map(|e| EpochMetrics {
                train_accuracy: round2(e.train_accuracy),
                validation_accuracy: round2(e.validation_accuracy),
                ..*e
            })
            .collect();
        let total = m.weight_trace.iter().map(|r| r.sample).max().unwrap_or(0);
        Self {
            fingerprint: cfg.fingerprint(),
            seed: cfg.seed,
            approach: cfg.approach,
            epochs,
            best_epoch: m.best_epoch,
            test_accuracy: m.test.iter().map(|(k, v)| (k.clone(), round2(v.accuracy))).collect(),
            programming: m.programming,
            mapping: m.mapping,
            trace_wobble: (cfg.approach == 2).then(|| trace_wobble(&m.weight_trace, total / 2)),
            vocab_size: m.vocab_size,
            expected_vocab_size: cfg.data.vocab_size,
            wall_clock_seconds: seconds,
        }
    }

    pub fn accuracy(&self, mode: EvalMode) -> Option<f64> {
        self.test_accuracy.get(mode.name()).copied()
    }
}

/// Runs the experiment and, if `out` is given, writes every output file there.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(MetricsRecord, RunOutput), HarnessError> {
    let start = Instant::now();
    let output = pipelines::run_experiment(cfg)?;
    let record = MetricsRecord::from_run(cfg, &output, start.elapsed().as_secs_f64());
    if let Some(dir) = out {
        write_outputs(dir, cfg, &output, &record)?;
    }
    Ok((record, output))
}

pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput, record: &MetricsRecord) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join(METRICS_CSV), epochs_csv(&out.metrics.epochs, out.metrics.best_epoch))?;
    write_file(
        &dir.join(SUMMARY_JSON),
        serde_json::to_string_pretty(record).expect("record serializes") + "\n",
    )?;
    write_file(&dir.join(WEIGHTS_TRACE_CSV), weight_trace_csv(&out.metrics.weight_trace))?;
    write_file(&dir.join(PROGRAMMING_TRACE_CSV), program_trace_csv(&out.programming_events))?;
    write_file(&dir.join(CONFIG_TOML), cfg.to_toml_string())?;
    write_file(&dir.join(SNN_JSON), serde_json::to_string_pretty(&out.snn).expect("spec serializes") + "\n")?;

    let mut buf = Vec::new();
    out.params.write_checkpoint(&mut buf).map_err(PipelineError::from)?;
    write_file(&dir.join(PARAMS_CSV), buf)?;
    let mut buf = Vec::new();
    out.array.write_state_csv(&mut buf).map_err(PipelineError::from)?;
    write_file(&dir.join(CROSSBAR_CSV), buf)?;
    if let Some(v) = &out.vocab {
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).map_err(io_err(&dir.join(VOCAB_TSV)))?;
        write_file(&dir.join(VOCAB_TSV), buf)?;
    }
    Ok(())
}

/// Loads `params.csv` from a run directory.
pub fn load_params(cfg: &ExperimentConfig, dir: &Path) -> Result<NetworkParams<f64>, HarnessError> {
    let path = dir.join(PARAMS_CSV);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let opt = Adagrad::new(cfg.model.eta, cfg.model.epsilon);
    let params = NetworkParams::read_checkpoint(BufReader::new(file), opt).map_err(|e| HarnessError::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if params.dim() != cfg.input_dim() {
        return Err(HarnessError::Checkpoint {
            path: path.display().to_string(),
            reason: format!("read-out has {} weights, config expects {}", params.dim(), cfg.input_dim()),
        });
    }
    Ok(params)
}

/// Rebuilds a crossbar from `crossbar_state.csv`.
pub fn load_array(cfg: &ExperimentConfig, dir: &Path) -> Result<CrossbarArray<f64>, HarnessError> {
    let path = dir.join(CROSSBAR_CSV);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut array = fresh_array(cfg)?;
    array.read_state_csv(BufReader::new(file)).map_err(|e| HarnessError::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(array)
}

/// Evaluates a saved run on the configured test split.
pub fn eval_checkpoint(
    cfg: &ExperimentConfig,
    dir: &Path,
    modes: &[EvalMode],
) -> Result<BTreeMap<String, f64>, HarnessError> {
    let mut init = seeds::stream_rng(cfg.seed, &format!("{}/embedding", seeds::INIT));
    let ds = load_dataset(cfg, &mut init)?;
    let mut params = load_params(cfg, dir)?;
    if params.vocab() != ds.vocab_len() {
        return Err(HarnessError::Checkpoint {
            path: dir.join(PARAMS_CSV).display().to_string(),
            reason: format!("embedding has {} rows, data gives a vocabulary of {}", params.vocab(), ds.vocab_len()),
        });
    }
    if let Some(v) = &ds.vocab {
        params = params.with_pad(v.pad_id());
    }
    let array = if modes.contains(&EvalMode::SnnMemristor) {
        load_array(cfg, dir)?
    } else {
        fresh_array(cfg)?
    };
    Ok(approach1::evaluate_all(cfg, &params, &array, &ds.test, modes)?
        .into_iter()
        .map(|(m, o)| (m.name().to_string(), round2(o.accuracy)))
        .collect())
}

/// Converts a saved network and writes `snn.json` to `out`.
pub fn convert_checkpoint(cfg: &ExperimentConfig, dir: &Path, out: &Path) -> Result<SnnSpec, HarnessError> {
    let params = load_params(cfg, dir)?;
    let spec = pipelines::convert_to_snn(&params, cfg);
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join(SNN_JSON), serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n")?;
    Ok(spec)
}

/// Maps the weights of `snn.json` (or, failing that, `params.csv`) in `dir`
/// onto a fresh crossbar and writes the array state, programming trace and
/// fidelity summary to `out`.
pub fn map_checkpoint(cfg: &ExperimentConfig, dir: &Path, out: &Path) -> Result<MappingFidelity, HarnessError> {
    let snn_path = dir.join(SNN_JSON);
    let spec = if snn_path.exists() {
        let text = fs::read_to_string(&snn_path).map_err(io_err(&snn_path))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Checkpoint {
            path: snn_path.display().to_string(),
            reason: e.to_string(),
        })?
    } else {
        pipelines::convert_to_snn(&load_params(cfg, dir)?, cfg)
    };
    let mut events = Vec::new();
    let mapping = pipelines::map_to_memristors(&spec, cfg, Some(&mut events))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut buf = Vec::new();
    mapping.array.write_state_csv(&mut buf).map_err(PipelineError::from)?;
    write_file(&out.join(CROSSBAR_CSV), buf)?;
    write_file(&out.join(PROGRAMMING_TRACE_CSV), program_trace_csv(&events))?;
    write_file(
        &out.join("mapping.json"),
        serde_json::to_string_pretty(&mapping.fidelity).expect("fidelity serializes") + "\n",
    )?;
    Ok(mapping.fidelity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "T")]
    Steps,
    #[serde(rename = "r_tolerance")]
    RTolerance,
    #[serde(rename = "read_noise")]
    ReadNoise,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Steps => "T",
            SweepParam::RTolerance => "r_tolerance",
            SweepParam::ReadNoise => "read_noise",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<(), HarnessError> {
        match self {
            SweepParam::Steps => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(HarnessError::Sweep(format!("T must be a positive integer, got {value}")));
                }
                cfg.snn.steps = value as usize;
            }
            SweepParam::RTolerance => cfg.crossbar.r_tolerance = value,
            SweepParam::ReadNoise => cfg.crossbar.read_noise = value,
        }
        cfg.validate().map_err(|e| HarnessError::Sweep(format!("{} = {value}: {e}", self.name())))
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T" | "steps" | "snn.steps" => Ok(SweepParam::Steps),
            "r_tolerance" | "crossbar.r_tolerance" => Ok(SweepParam::RTolerance),
            "read_noise" | "crossbar.read_noise" => Ok(SweepParam::ReadNoise),
            _ => Err(format!("unknown sweep parameter {s:?} (T, r_tolerance, read_noise)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// One axis, or two crossed axes (shmoo), over a shared base config and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axes: Vec<SweepAxis>,
}

impl SweepSpec {
    pub fn new(base: ExperimentConfig, axes: Vec<SweepAxis>) -> Result<Self, HarnessError> {
        let spec = Self { base, axes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(HarnessError::Sweep("need one axis, or two for a shmoo".into()));
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return Err(HarnessError::Sweep("shmoo axes must differ".into()));
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(HarnessError::Sweep(format!("{}: empty value list", axis.param.name())));
            }
            for &v in &axis.values {
                axis.param.apply(&mut self.base.clone(), v)?;
            }
        }
        Ok(())
    }

    /// Cells in row-major order over the axes.
    pub fn cells(&self) -> Vec<Vec<(SweepParam, f64)>> {
        let mut cells = vec![vec![]];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push((axis.param, v));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub values: Vec<(SweepParam, f64)>,
    pub outcome: Result<MetricsRecord, String>,
}

/// Runs every cell (in parallel) with the base seed. A failing cell is
/// recorded and does not stop the others. If `out` is given, each cell's
/// outputs go to a numbered subdirectory and the collated table to
/// `sweep.csv`.
pub fn sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<Vec<SweepCell>, HarnessError> {
    spec.validate()?;
    let cells = spec.cells();
    let results: Vec<SweepCell> = cells
        .into_par_iter()
        .enumerate()
        .map(|(i, values)| {
            let outcome = (|| {
                let mut cfg = spec.base.clone();
                for &(p, v) in &values {
                    p.apply(&mut cfg, v)?;
                }
                let dir: Option<PathBuf> = out.map(|d| d.join(format!("cell_{i:03}")));
                run(&cfg, dir.as_deref()).map(|(record, _)| record)
            })()
            .map_err(|e: HarnessError| e.to_string());
            SweepCell { values, outcome }
        })
        .collect();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_file(&dir.join(SWEEP_CSV), sweep_csv(&spec.axes, &results))?;
    }
    Ok(results)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per cell; failed cells carry `status = failed` and the message.
pub fn sweep_csv(axes: &[SweepAxis], cells: &[SweepCell]) -> String {
    let mut header: Vec<String> = axes.iter().map(|a| a.param.name().to_string()).collect();
    header.extend(
        [
            "status",
            "best_epoch",
            "validation_accuracy",
            "test_ann",
            "test_snn",
            "test_snn_memristor",
            "trace_wobble",
            "error",
        ]
        .map(String::from),
    );
    let mut s = header.join(",") + "\n";
    let opt = |x: Option<f64>, prec: usize| x.map_or(String::new(), |v| format!("{v:.prec$}"));
    for c in cells {
        let mut row: Vec<String> = c.values.iter().map(|(_, v)| format!("{v}")).collect();
        match &c.outcome {
            Ok(r) => {
                let val = r.epochs.get(r.best_epoch.wrapping_sub(1)).map(|e| e.validation_accuracy);
                row.extend([
                    "ok".to_string(),
                    r.best_epoch.to_string(),
                    opt(val, 2),
                    opt(r.accuracy(EvalMode::Ann), 2),
                    opt(r.accuracy(EvalMode::Snn), 2),
                    opt(r.accuracy(EvalMode::SnnMemristor), 2),
                    opt(r.trace_wobble, 6),
                    String::new(),
                ]);
            }
            Err(e) => {
                row.push("failed".to_string());
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(csv_field(e));
            }
        }
        s += &(row.join(",") + "\n");
    }
    s
}
