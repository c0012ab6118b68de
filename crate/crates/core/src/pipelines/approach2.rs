//! Direct training of a memristor-backed spiking network.
//!
//! The read-out layer lives in the crossbar. A full-precision shadow copy of
//! the expected weights takes the Adagrad steps and the crossbar is
//! reprogrammed toward it after every sample. The embedding stays in ordinary
//! memory.

use rand::seq::SliceRandom;

use super::approach1::{eval_settings, fresh_array, initial_params, selection_loss};
use super::config::ExperimentConfig;
use super::data::{Dataset, Input};
use super::eval::{evaluate, pooled_input, EvalMode, Model};
use super::metrics::{EpochMetrics, ProgrammingStats, WeightTraceRow};
use super::{seeds, PipelineError};
use crate::crossbar::{CrossbarArray, ProgramEvent};
use crate::netcore::{bce_loss, grad_embedding, grad_linear, output_probability, NetworkParams};
use crate::spiking::{encode_poisson, run_inference};

#[derive(Debug, Clone)]
pub struct DirectResult {
    /// `linear` holds the shadow (expected) weights.
    pub params: NetworkParams<f64>,
    pub array: CrossbarArray<f64>,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub trace: Vec<WeightTraceRow>,
    pub programming: ProgrammingStats,
    /// Pulses applied at trace samples (and during the initial mapping).
    pub events: Vec<ProgramEvent<f64>>,
}

/// Per sample: read the crossbar, encode `x_c`, run the neuron, take
/// `y = sigmoid(rate + C)`, step the shadow weights and the embedding with
/// the BCE gradients, and program the crossbar toward the new shadow weights.
/// Devices whose read is already within tolerance are skipped.
pub fn train_snn_direct(cfg: &ExperimentConfig, ds: &Dataset) -> Result<DirectResult, PipelineError> {
    if cfg.approach != 2 {
        return Err(PipelineError::Approach {
            expected: 2,
            found: cfg.approach,
        });
    }
    let mut params = initial_params(cfg, ds)?;
    let mut array = fresh_array(cfg)?;
    let policy = cfg.policy()?;
    let dim = params.dim();
    let keep_events = cfg.run.programming_trace;
    let mut events = Vec::new();
    let mut programming = ProgrammingStats::default();
    programming.add(&array.program_weights(&params.linear, &policy, keep_events.then_some(&mut events))?);

    let mut shuffle = seeds::stream_rng(cfg.seed, seeds::SHUFFLE);
    let mut encoder = seeds::stream_rng(cfg.seed, seeds::ENCODER);
    let settings = eval_settings(cfg);
    let offset = cfg.model.offset;
    let has_validation = !ds.validation.is_empty();
    let mut order: Vec<usize> = (0..ds.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut trace = Vec::new();
    let mut sample = 0usize;
    let mut best: Option<(f64, usize, NetworkParams<f64>, CrossbarArray<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss, mut correct) = (0.0, 0usize);
        for &i in &order {
            let ex = &ds.train[i];
            let x_c = pooled_input(&params, &ex.input)?;
            let read = array.read_weights_prefix(dim);
            let spikes = encode_poisson(&x_c, cfg.snn.steps, &mut encoder)?;
            let inf = run_inference(&read, &spikes, cfg.snn.v_th)?;
            let y = output_probability(inf.rate, offset);
            loss += bce_loss(y, ex.label);
            correct += usize::from(inf.is_positive() == ex.label);

            let g_s = grad_linear(y, ex.label, &x_c);
            let g_e = match &ex.input {
                Input::Tokens(ids) => Some(grad_embedding(y, ex.label, &read, ids, params.pad_id)),
                Input::Features(_) => None,
            };
            params.update_linear(&g_s);
            let at_trace = sample.is_multiple_of(cfg.run.trace_every);
            let sink = (keep_events && at_trace).then_some(&mut events);
            programming.add(&array.program_weights(&params.linear, &policy, sink)?);
            if let Some(g) = g_e {
                params.update_embedding(&g);
            }
            if at_trace {
                let actual = array.true_weights();
                trace.extend((0..dim).map(|k| WeightTraceRow {
                    sample,
                    epoch,
                    index: k,
                    expected: params.linear[k],
                    actual: actual[k],
                    measured: read[k],
                }));
            }
            sample += 1;
        }

        let snap = array.snapshot();
        let model = Model {
            params: &params,
            snapshot: Some(&snap),
        };
        let val = evaluate(&model, &ds.validation, EvalMode::SnnMemristor, &settings, &format!("validation/{epoch}"))?;
        let n = ds.train.len().max(1) as f64;
        let m = EpochMetrics {
            epoch,
            train_loss: loss / n,
            train_accuracy: 100.0 * correct as f64 / n,
            validation_loss: val.loss,
            validation_accuracy: val.accuracy,
        };
        let score = selection_loss(&m, has_validation);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, epoch, params.clone(), array.clone()));
        }
        epochs.push(m);
    }
    let (_, best_epoch, params, array) = best.expect("at least one epoch");
    Ok(DirectResult {
        params,
        array,
        epochs,
        best_epoch,
        trace,
        programming,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipelines::config::DataSource;
    use crate::pipelines::data::load_dataset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feature_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::baseline(2);
        cfg.data.source = DataSource::Features;
        cfg.data.train_size = 300;
        cfg.data.validation_size = 100;
        cfg.data.test_size = 100;
        cfg.snn.v_th = 1.0;
        cfg.snn.steps = 200;
        cfg.crossbar.r_tolerance = 0.03;
        cfg.epochs = 2;
        cfg.run.trace_every = 50;
        cfg
    }

    #[test]
    fn trains_and_traces() {
        let cfg = feature_cfg();
        let ds = load_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let res = train_snn_direct(&cfg, &ds).unwrap();
        assert_eq!(res.epochs.len(), 2);
        assert_eq!(res.trace.len(), 2 * (600 / 50));
        assert!(res.params.linear.iter().all(|w| (0.0..=1.0).contains(w)));
        assert!(res.programming.devices >= 2 * 601);
        let again = train_snn_direct(&cfg, &ds).unwrap();
        assert_eq!(again.epochs, res.epochs);
        assert_eq!(again.array.resistances(), res.array.resistances());
    }

    #[test]
    fn rejects_wrong_approach() {
        let mut cfg = feature_cfg();
        cfg.approach = 1;
        cfg.crossbar.custom_pulses = true;
        let ds = load_dataset(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(
            train_snn_direct(&cfg, &ds),
            Err(PipelineError::Approach { expected: 2, found: 1 })
        ));
    }
}
