//! Training, conversion, mapping and evaluation workflows.

pub mod approach1;
pub mod approach2;
pub mod config;
pub mod data;
pub mod eval;
pub mod metrics;
pub mod seeds;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::crossbar::{CrossbarArray, CrossbarError, ProgramEvent};
use crate::netcore::{NetError, NetworkParams};
use crate::spiking::SpikingError;
use crate::textdata::{DataError, Vocabulary};

pub use approach1::{convert_to_snn, map_to_memristors, train_ann, Mapping, SnnSpec, TrainResult};
pub use approach2::{train_snn_direct, DirectResult};
pub use config::{ConfigError, DataSource, ExperimentConfig};
pub use data::{load_dataset, Dataset, Example, Input};
pub use eval::{evaluate, EvalMode, EvalOutcome, EvalSettings, Model};
pub use metrics::{EpochMetrics, MappingFidelity, ProgrammingStats, RunMetrics, WeightTraceRow};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error(transparent)]
    Spiking(#[from] SpikingError),
    #[error("this step needs approach {expected}, config selects {found}")]
    Approach { expected: u8, found: u8 },
    #[error("missing {0}")]
    Missing(&'static str),
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Software network; for approach 2 `linear` holds the expected weights.
    pub params: NetworkParams<f64>,
    pub array: CrossbarArray<f64>,
    pub snn: SnnSpec,
    pub vocab: Option<Vocabulary>,
    pub programming_events: Vec<ProgramEvent<f64>>,
}

/// Test modes reported by each approach.
pub fn test_modes(approach: u8) -> &'static [EvalMode] {
    if approach == 2 {
        &[EvalMode::Snn, EvalMode::SnnMemristor]
    } else {
        &[EvalMode::Ann, EvalMode::Snn, EvalMode::SnnMemristor]
    }
}

/// Loads the data and runs the configured approach end to end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let mut init = seeds::stream_rng(cfg.seed, &format!("{}/embedding", seeds::INIT));
    let ds = load_dataset(cfg, &mut init)?;
    run_on(cfg, ds)
}

/// Runs the configured approach on an already loaded data set.
pub fn run_on(cfg: &ExperimentConfig, ds: Dataset) -> Result<RunOutput, PipelineError> {
    let mut events = Vec::new();
    let keep = cfg.run.programming_trace;
    let (params, array, epochs, best_epoch, trace, programming, mapping) = if cfg.approach == 2 {
        let r = train_snn_direct(cfg, &ds)?;
        events = r.events;
        (r.params, r.array, r.epochs, r.best_epoch, r.trace, r.programming, None)
    } else {
        let r = train_ann(cfg, &ds)?;
        let spec = convert_to_snn(&r.params, cfg);
        let m = map_to_memristors(&spec, cfg, keep.then_some(&mut events))?;
        let mut programming = ProgrammingStats::default();
        programming.add(&m.reports);
        let actual = m.array.true_weights();
        let sample = ds.train.len() * cfg.epochs;
        let trace = spec
            .weights
            .iter()
            .enumerate()
            .map(|(k, &w)| WeightTraceRow {
                sample,
                epoch: r.best_epoch,
                index: k,
                expected: w,
                actual: actual[k],
                measured: f64::NAN,
            })
            .collect();
        (r.params, m.array, r.epochs, r.best_epoch, trace, programming, Some(m.fidelity))
    };

    let modes = test_modes(cfg.approach);
    let test: BTreeMap<String, EvalOutcome> = approach1::evaluate_all(cfg, &params, &array, &ds.test, modes)?
        .into_iter()
        .map(|(m, o)| (m.name().to_string(), o))
        .collect();
    let metrics = RunMetrics {
        approach: cfg.approach,
        epochs,
        best_epoch,
        test,
        weight_trace: trace,
        programming,
        mapping,
        vocab_size: ds.vocab_len(),
        vectors_found: ds.vectors_found,
    };
    Ok(RunOutput {
        metrics,
        snn: convert_to_snn(&params, cfg),
        params,
        array,
        vocab: ds.vocab,
        programming_events: events,
    })
}
