//! Train a constrained ANN, convert it to a spiking network and map its
//! read-out weights onto a crossbar.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{Dataset, Example, Input};
use super::eval::{evaluate, EvalMode, EvalOutcome, EvalSettings, Model};
use super::metrics::{EpochMetrics, MappingFidelity};
use super::{seeds, PipelineError};
use crate::crossbar::{euclidean_distance, CrossbarArray, ProgramEvent, ProgramReport};
use crate::netcore::{
    ann_train_step, bce_loss, grad_linear, linear_forward, output_probability, Adagrad, NetworkParams, StepOutcome,
};

pub fn eval_settings(cfg: &ExperimentConfig) -> EvalSettings {
    EvalSettings {
        steps: cfg.snn.steps,
        v_th: cfg.snn.v_th,
        ann_offset: cfg.model.offset,
        snn_offset: cfg.snn_offset(),
        seed: cfg.seed,
    }
}

/// Embedding from the data set and a uniform `[0, 1)` read-out layer.
pub fn initial_params(cfg: &ExperimentConfig, ds: &Dataset) -> Result<NetworkParams<f64>, PipelineError> {
    let mut rng = seeds::stream_rng(cfg.seed, &format!("{}/linear", seeds::INIT));
    let dim = cfg.input_dim();
    let linear = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let opt = Adagrad::new(cfg.model.eta, cfg.model.epsilon);
    let params = NetworkParams::new(ds.embedding.clone(), ds.vocab_len(), dim, linear, opt)?;
    Ok(match &ds.vocab {
        Some(v) => params.with_pad(v.pad_id()),
        None => params,
    })
}

/// One ANN-mode update. Feature inputs only train the read-out layer.
pub fn ann_step(params: &mut NetworkParams<f64>, ex: &Example, offset: f64) -> Result<StepOutcome<f64>, PipelineError> {
    match &ex.input {
        Input::Tokens(ids) => Ok(ann_train_step(params, ids, ex.label, offset)?),
        Input::Features(x) => {
            let y = output_probability(linear_forward(x, &params.linear), offset);
            params.update_linear(&grad_linear(y, ex.label, x));
            Ok(StepOutcome {
                y,
                loss: bce_loss(y, ex.label),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: NetworkParams<f64>,
    pub epochs: Vec<EpochMetrics>,
    /// 1-based.
    pub best_epoch: usize,
}

/// Selection score of an epoch: validation loss, or training loss when
/// there is no validation split.
pub(crate) fn selection_loss(m: &EpochMetrics, has_validation: bool) -> f64 {
    if has_validation {
        m.validation_loss
    } else {
        m.train_loss
    }
}

/// Batch-1 BCE + Adagrad over shuffled epochs; returns the parameters of the
/// epoch with the smallest validation loss.
pub fn train_ann(cfg: &ExperimentConfig, ds: &Dataset) -> Result<TrainResult, PipelineError> {
    if cfg.approach != 1 {
        return Err(PipelineError::Approach {
            expected: 1,
            found: cfg.approach,
        });
    }
    let mut params = initial_params(cfg, ds)?;
    let mut shuffle = seeds::stream_rng(cfg.seed, seeds::SHUFFLE);
    let settings = eval_settings(cfg);
    let has_validation = !ds.validation.is_empty();
    let mut order: Vec<usize> = (0..ds.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, NetworkParams<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss, mut correct) = (0.0, 0usize);
        for &i in &order {
            let ex = &ds.train[i];
            let out = ann_step(&mut params, ex, cfg.model.offset)?;
            loss += out.loss;
            correct += usize::from((out.y >= 0.5) == ex.label);
        }
        let model = Model {
            params: &params,
            snapshot: None,
        };
        let val = evaluate(&model, &ds.validation, EvalMode::Ann, &settings, &format!("validation/{epoch}"))?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss / ds.train.len() as f64,
            train_accuracy: 100.0 * correct as f64 / ds.train.len() as f64,
            validation_loss: val.loss,
            validation_accuracy: val.accuracy,
        };
        let score = selection_loss(&m, has_validation);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, epoch, params.clone()));
        }
        epochs.push(m);
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainResult {
        params,
        epochs,
        best_epoch,
    })
}

/// Spiking network equivalent to a trained read-out layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnSpec {
    pub weights: Vec<f64>,
    pub v_th: f64,
    pub steps: usize,
}

/// Copies the weights unchanged and takes `V_th` and `T` from the config.
/// The sigmoid and its offset have no spiking counterpart; the class is read
/// from the firing rate.
pub fn convert_to_snn(params: &NetworkParams<f64>, cfg: &ExperimentConfig) -> SnnSpec {
    SnnSpec {
        weights: params.linear.clone(),
        v_th: cfg.snn.v_th,
        steps: cfg.snn.steps,
    }
}

#[derive(Debug, Clone)]
pub struct Mapping {
    pub array: CrossbarArray<f64>,
    pub reports: Vec<ProgramReport<f64>>,
    pub fidelity: MappingFidelity,
}

/// Fresh crossbar with devices uniformly random in `[r_min, r_max]`, using
/// the `init` and `crossbar-noise` streams of `cfg.seed`.
pub fn fresh_array(cfg: &ExperimentConfig) -> Result<CrossbarArray<f64>, PipelineError> {
    let mut init = seeds::stream_rng(cfg.seed, &format!("{}/crossbar", seeds::INIT));
    Ok(CrossbarArray::random(
        cfg.crossbar.rows,
        cfg.crossbar.cols,
        cfg.device,
        cfg.bounds()?,
        cfg.crossbar.read_noise,
        &mut init,
        seeds::stream_rng(cfg.seed, seeds::CROSSBAR_NOISE),
    )?)
}

pub fn fidelity(array: &CrossbarArray<f64>, targets: &[f64], reports: &[ProgramReport<f64>]) -> MappingFidelity {
    let actual = array.true_weights();
    let actual = &actual[..targets.len()];
    let bounds = array.bounds();
    let resistances = array.resistances();
    let max_rel = targets
        .iter()
        .zip(&resistances)
        .map(|(&w, &r)| {
            let t = bounds.resistance_unchecked(w);
            ((t - r) / t).abs()
        })
        .fold(0.0, f64::max);
    let d = euclidean_distance(targets, actual);
    MappingFidelity {
        devices: targets.len(),
        converged: reports.iter().filter(|r| r.converged).count(),
        euclidean_distance: d,
        rms_error: if targets.is_empty() { 0.0 } else { d / (targets.len() as f64).sqrt() },
        max_relative_r_error: max_rel,
    }
}

/// Programs the spiking network's weights into a fresh crossbar with the
/// configured pulse policy.
pub fn map_to_memristors(
    spec: &SnnSpec,
    cfg: &ExperimentConfig,
    trace: Option<&mut Vec<ProgramEvent<f64>>>,
) -> Result<Mapping, PipelineError> {
    let mut array = fresh_array(cfg)?;
    let reports = array.program_weights(&spec.weights, &cfg.policy()?, trace)?;
    let fidelity = fidelity(&array, &spec.weights, &reports);
    Ok(Mapping {
        array,
        reports,
        fidelity,
    })
}

/// Test-set accuracy in the three modes of a converted and mapped network.
/// Every spiking mode sees the same spike trains, so the SNN and memristor
/// numbers differ only by the crossbar.
pub fn evaluate_all(
    cfg: &ExperimentConfig,
    params: &NetworkParams<f64>,
    array: &CrossbarArray<f64>,
    data: &[Example],
    modes: &[EvalMode],
) -> Result<Vec<(EvalMode, EvalOutcome)>, PipelineError> {
    let snap = array.snapshot();
    let model = Model {
        params,
        snapshot: Some(&snap),
    };
    let settings = eval_settings(cfg);
    modes
        .iter()
        .map(|&m| Ok((m, evaluate(&model, data, m, &settings, "test")?)))
        .collect()
}
