use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{Example, Input};
use super::seeds;
use super::PipelineError;
use crate::crossbar::CrossbarSnapshot;
use crate::netcore::{bce_loss, linear_forward, output_probability, NetworkParams};
use crate::spiking::{encode_poisson, run_inference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// `sigmoid(V_c + C) >= 0.5` on the continuous network.
    Ann,
    /// Spiking inference with the software weights, `rate > 0.5`.
    Snn,
    /// Spiking inference with weights read from the crossbar on every sample.
    SnnMemristor,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Ann => "ann",
            EvalMode::Snn => "snn",
            EvalMode::SnnMemristor => "snn+memristor",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ann" => Ok(EvalMode::Ann),
            "snn" => Ok(EvalMode::Snn),
            "snn+memristor" | "snn-memristor" | "memristor" => Ok(EvalMode::SnnMemristor),
            _ => Err(format!("unknown mode {s:?} (ann, snn, snn+memristor)")),
        }
    }
}

/// Frozen network for evaluation. `snapshot` is needed only for
/// [`EvalMode::SnnMemristor`].
#[derive(Debug, Clone)]
pub struct Model<'a> {
    pub params: &'a NetworkParams<f64>,
    pub snapshot: Option<&'a CrossbarSnapshot<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub steps: usize,
    pub v_th: f64,
    /// `C` of the ANN sigmoid.
    pub ann_offset: f64,
    /// Offset turning a firing rate into a probability (loss only).
    pub snn_offset: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// Percentage in `[0, 100]`.
    pub accuracy: f64,
    pub loss: f64,
    pub samples: usize,
}

/// `x_c` of one example.
pub fn pooled_input(params: &NetworkParams<f64>, input: &Input) -> Result<Vec<f64>, PipelineError> {
    match input {
        Input::Tokens(ids) => Ok(params.embed_and_pool(ids)?),
        Input::Features(x) => Ok(x.clone()),
    }
}

/// Accuracy and mean loss of `model` on `data`. Samples are processed in
/// parallel; sample `i` draws its spikes and read noise from its own
/// generators keyed by `(settings.seed, tag, i)`, so the result does not
/// depend on thread scheduling.
pub fn evaluate(
    model: &Model<'_>,
    data: &[Example],
    mode: EvalMode,
    settings: &EvalSettings,
    tag: &str,
) -> Result<EvalOutcome, PipelineError> {
    if mode == EvalMode::SnnMemristor && model.snapshot.is_none() {
        return Err(PipelineError::Missing("crossbar snapshot for snn+memristor evaluation"));
    }
    if data.is_empty() {
        return Ok(EvalOutcome {
            accuracy: 0.0,
            loss: 0.0,
            samples: 0,
        });
    }
    let encoder_stream = format!("{}/{tag}", seeds::ENCODER);
    let noise_stream = format!("{}/{tag}", seeds::CROSSBAR_NOISE);
    let per_sample = |(i, ex): (usize, &Example)| -> Result<(bool, f64), PipelineError> {
        let x_c = pooled_input(model.params, &ex.input)?;
        let (positive, y) = match mode {
            EvalMode::Ann => {
                let y = output_probability(linear_forward(&x_c, &model.params.linear), settings.ann_offset);
                (y >= 0.5, y)
            }
            EvalMode::Snn | EvalMode::SnnMemristor => {
                let weights = match (mode, model.snapshot) {
                    (EvalMode::SnnMemristor, Some(snap)) => {
                        let mut noise = seeds::item_rng(settings.seed, &noise_stream, i as u64);
                        snap.read_weights_with(x_c.len(), &mut noise)
                    }
                    _ => model.params.linear.clone(),
                };
                let mut enc = seeds::item_rng(settings.seed, &encoder_stream, i as u64);
                let train = encode_poisson(&x_c, settings.steps, &mut enc)?;
                let inf = run_inference(&weights, &train, settings.v_th)?;
                (inf.is_positive(), output_probability(inf.rate, settings.snn_offset))
            }
        };
        Ok((positive == ex.label, bce_loss(y, ex.label)))
    };
    let results: Vec<(bool, f64)> = data.par_iter().enumerate().map(per_sample).collect::<Result<_, _>>()?;
    let correct = results.iter().filter(|r| r.0).count();
    let loss = results.iter().map(|r| r.1).sum::<f64>() / data.len() as f64;
    Ok(EvalOutcome {
        accuracy: 100.0 * correct as f64 / data.len() as f64,
        loss,
        samples: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::Adagrad;

    fn settings() -> EvalSettings {
        EvalSettings {
            steps: 200,
            v_th: 1.0,
            ann_offset: 0.0,
            snn_offset: -0.5,
            seed: 3,
        }
    }

    fn feature(x: f64, label: bool) -> Example {
        Example {
            input: Input::Features(vec![x]),
            label,
        }
    }

    #[test]
    fn majority_stub_scores_half_on_balanced_data() {
        // Zero weights with zero offset give y = 0.5: every sample is called positive.
        let params = NetworkParams::new(vec![], 0, 1, vec![0.0], Adagrad::new(0.05, 1e-8)).unwrap();
        let model = Model { params: &params, snapshot: None };
        let data: Vec<Example> = (0..10).map(|i| feature(0.3, i % 2 == 0)).collect();
        let out = evaluate(&model, &data, EvalMode::Ann, &settings(), "t").unwrap();
        assert_eq!(out.accuracy, 50.0);
    }

    #[test]
    fn trivial_net_fires_every_step() {
        let params = NetworkParams::new(vec![], 0, 1, vec![1.0], Adagrad::new(0.05, 1e-8)).unwrap();
        let model = Model { params: &params, snapshot: None };
        let data = vec![feature(1.0, true)];
        let out = evaluate(&model, &data, EvalMode::Snn, &settings(), "t").unwrap();
        assert_eq!(out.accuracy, 100.0);
    }

    #[test]
    fn memristor_mode_needs_a_snapshot() {
        let params = NetworkParams::new(vec![], 0, 1, vec![1.0], Adagrad::new(0.05, 1e-8)).unwrap();
        let model = Model { params: &params, snapshot: None };
        assert!(evaluate(&model, &[feature(1.0, true)], EvalMode::SnnMemristor, &settings(), "t").is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let params = NetworkParams::new(vec![], 0, 1, vec![0.8], Adagrad::new(0.05, 1e-8)).unwrap();
        let model = Model { params: &params, snapshot: None };
        let data: Vec<Example> = (0..64).map(|i| feature(0.62, i % 3 != 0)).collect();
        let a = evaluate(&model, &data, EvalMode::Snn, &settings(), "t").unwrap();
        let b = evaluate(&model, &data, EvalMode::Snn, &settings(), "t").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_names_parse_back() {
        for m in [EvalMode::Ann, EvalMode::Snn, EvalMode::SnnMemristor] {
            assert_eq!(m.name().parse::<EvalMode>().unwrap(), m);
        }
    }
}
