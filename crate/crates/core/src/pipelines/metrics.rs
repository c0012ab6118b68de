use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::EvalOutcome;
use crate::crossbar::ProgramReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent, from the predictions made before each update.
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

/// One synapse at one trace point. `expected` is the software weight the
/// device is programmed toward, `actual` the weight stored in the device after
/// programming and `measured` the noisy read the forward pass used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTraceRow {
    pub sample: usize,
    pub epoch: usize,
    pub index: usize,
    pub expected: f64,
    pub actual: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProgrammingStats {
    /// Devices visited by the programming loop.
    pub devices: usize,
    pub skipped: usize,
    pub converged: usize,
    pub not_converged: usize,
    pub pulses: usize,
    /// Largest relative error at the final read among visited devices.
    pub max_final_relative_error: f64,
}

impl ProgrammingStats {
    pub fn add(&mut self, reports: &[ProgramReport<f64>]) {
        for r in reports {
            self.devices += 1;
            self.pulses += r.iterations;
            if r.skipped() {
                self.skipped += 1;
            }
            if r.converged {
                self.converged += 1;
            } else {
                self.not_converged += 1;
            }
            self.max_final_relative_error = self.max_final_relative_error.max(r.final_relative_error);
        }
    }
}

/// How closely a one-shot mapping reproduced its target weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingFidelity {
    pub devices: usize,
    pub converged: usize,
    pub euclidean_distance: f64,
    pub rms_error: f64,
    /// Largest `|R_target - R| / R_target` over the true device states.
    pub max_relative_r_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub approach: u8,
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Keyed by evaluation mode name.
    pub test: BTreeMap<String, EvalOutcome>,
    pub weight_trace: Vec<WeightTraceRow>,
    pub programming: ProgrammingStats,
    pub mapping: Option<MappingFidelity>,
    pub vocab_size: usize,
    pub vectors_found: Option<usize>,
}

impl RunMetrics {
    pub fn test_accuracy(&self, mode: &str) -> Option<f64> {
        self.test.get(mode).map(|o| o.accuracy)
    }
}

/// Rounds a percentage to the two decimals it is reported with.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn epochs_csv(epochs: &[EpochMetrics], best_epoch: usize) -> String {
    let mut s = String::from("epoch,train_loss,train_accuracy,validation_loss,validation_accuracy,best\n");
    for e in epochs {
        let _ = writeln!(
            s,
            "{},{:.6},{:.2},{:.6},{:.2},{}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            e.validation_loss,
            e.validation_accuracy,
            u8::from(e.epoch == best_epoch)
        );
    }
    s
}

pub fn weight_trace_csv(rows: &[WeightTraceRow]) -> String {
    let mut s = String::from("sample,epoch,index,expected,actual,measured\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.sample, r.epoch, r.index, r.expected, r.actual, r.measured);
    }
    s
}

/// Largest `|expected - actual|` over trace rows with `sample >= from`.
pub fn trace_wobble(rows: &[WeightTraceRow], from: usize) -> f64 {
    rows.iter()
        .filter(|r| r.sample >= from)
        .map(|r| (r.expected - r.actual).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_accumulate() {
        let mut s = ProgrammingStats::default();
        s.add(&[
            ProgramReport { converged: true, iterations: 0, final_relative_error: 0.0001 },
            ProgramReport { converged: false, iterations: 5, final_relative_error: 0.3 },
        ]);
        assert_eq!((s.devices, s.skipped, s.converged, s.not_converged, s.pulses), (2, 1, 1, 1, 5));
        assert_eq!(s.max_final_relative_error, 0.3);
    }

    #[test]
    fn csv_marks_best_epoch_and_rounds() {
        let e = |epoch| EpochMetrics {
            epoch,
            train_loss: 0.5,
            train_accuracy: 70.123,
            validation_loss: 0.4,
            validation_accuracy: 71.006,
        };
        let csv = epochs_csv(&[e(1), e(2)], 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "1,0.500000,70.12,0.400000,71.01,0");
        assert!(lines[2].ends_with(",1"));
        assert_eq!(round2(85.885), 85.89);
    }

    #[test]
    fn wobble_ignores_early_samples() {
        let r = |sample, expected, actual| WeightTraceRow { sample, epoch: 1, index: 0, expected, actual, measured: actual };
        let rows = [r(0, 0.5, 0.1), r(10, 0.5, 0.49), r(20, 0.5, 0.515)];
        assert!((trace_wobble(&rows, 10) - 0.015).abs() < 1e-12);
        assert!((trace_wobble(&rows, 0) - 0.4).abs() < 1e-12);
    }
}
