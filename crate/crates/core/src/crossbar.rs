//! Virtual memristor crossbar: weight/resistance codec, noisy reads and the
//! predict-write-verify programming loop.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device_model::{apply_pulse, boundary, DeviceParams, DeviceState, PulseSpec};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CrossbarError {
    #[error("resistance {resistance} outside [{r_min}, {r_max}]")]
    ResistanceOutOfRange { resistance: f64, r_min: f64, r_max: f64 },
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("device ({row}, {col}) outside a {rows}x{cols} array")]
    Index { row: usize, col: usize, rows: usize, cols: usize },
    #[error("{needed} synapses do not fit a {rows}x{cols} array")]
    Capacity { needed: usize, rows: usize, cols: usize },
    #[error("invalid programming policy: {0}")]
    Policy(String),
    #[error("invalid crossbar configuration: {0}")]
    Config(String),
    #[error("array state line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lower and upper resistive-state bounds of the weight codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceBounds<S> {
    pub r_min: S,
    pub r_max: S,
}

impl<S: Scalar> ResistanceBounds<S> {
    pub fn new(r_min: S, r_max: S) -> Result<Self, CrossbarError> {
        if !(r_min > S::zero() && r_min < r_max && r_max.is_finite()) {
            return Err(CrossbarError::Config(format!(
                "need 0 < r_min < r_max, got r_min={r_min} r_max={r_max}"
            )));
        }
        Ok(Self { r_min, r_max })
    }

    /// Min/max of the boundary states `r_p(v)`, `r_n(v)` over every voltage in
    /// the given pulse sets: exactly the states the pulses can reach.
    pub fn from_pulses<'a, I>(params: &DeviceParams<S>, pulses: I) -> Result<Self, CrossbarError>
    where
        I: IntoIterator<Item = &'a PulseSpec<S>>,
    {
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for p in pulses {
            let b = boundary(params, p.voltage);
            lo = lo.min(b);
            hi = hi.max(b);
        }
        Self::new(lo, hi)
    }

    fn conductance_span(&self) -> S {
        self.r_min.recip() - self.r_max.recip()
    }

    /// Codec without the range check; may leave [0, 1] for out-of-range R.
    #[inline]
    pub fn weight_unchecked(&self, r: S) -> S {
        (r.recip() - self.r_max.recip()) / self.conductance_span()
    }

    #[inline]
    pub fn resistance_unchecked(&self, w: S) -> S {
        (w * self.conductance_span() + self.r_max.recip()).recip()
    }
}

/// `w = (1/R - 1/R_max) / (1/R_min - 1/R_max)`: the normalized conductance.
pub fn weight_from_resistance<S: Scalar>(r: S, r_min: S, r_max: S) -> Result<S, CrossbarError> {
    if !(r >= r_min && r <= r_max) {
        return Err(CrossbarError::ResistanceOutOfRange {
            resistance: r.as_f64(),
            r_min: r_min.as_f64(),
            r_max: r_max.as_f64(),
        });
    }
    let bounds = ResistanceBounds { r_min, r_max };
    Ok(bounds.weight_unchecked(r).max(S::zero()).min(S::one()))
}

/// Inverse of [`weight_from_resistance`].
pub fn resistance_from_weight<S: Scalar>(w: S, r_min: S, r_max: S) -> Result<S, CrossbarError> {
    if !(w >= S::zero() && w <= S::one()) {
        return Err(CrossbarError::WeightOutOfRange(w.as_f64()));
    }
    let bounds = ResistanceBounds { r_min, r_max };
    Ok(bounds.resistance_unchecked(w).max(r_min).min(r_max))
}

/// Pulse candidates and stop conditions for predict-write-verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramPolicy<S> {
    pub positive_pulses: Vec<PulseSpec<S>>,
    pub negative_pulses: Vec<PulseSpec<S>>,
    /// Relative error `|R_target - R| / R_target` at which programming stops.
    pub r_tolerance: S,
    pub max_n: usize,
}

impl<S: Scalar> ProgramPolicy<S> {
    /// Builds a policy from one voltage per polarity and widths in microseconds.
    /// Pulses are kept sorted by width so that ties favour the shorter pulse.
    pub fn from_widths(
        positive_voltage: S,
        positive_widths_us: &[S],
        negative_voltage: S,
        negative_widths_us: &[S],
        r_tolerance: S,
        max_n: usize,
    ) -> Result<Self, CrossbarError> {
        let mk = |v: S, widths: &[S]| -> Result<Vec<PulseSpec<S>>, CrossbarError> {
            widths
                .iter()
                .map(|&w| PulseSpec::micros(v, w).map_err(|e| CrossbarError::Policy(e.to_string())))
                .collect()
        };
        let policy = Self {
            positive_pulses: mk(positive_voltage, positive_widths_us)?,
            negative_pulses: mk(negative_voltage, negative_widths_us)?,
            r_tolerance,
            max_n,
        }
        .sorted();
        policy.validate()?;
        Ok(policy)
    }

    /// Conversion-path baseline: coarse and fine pulses in both directions.
    pub fn approach1_reference() -> Self {
        let us = |xs: &[f64]| xs.iter().map(|&x| S::lit(x)).collect::<Vec<_>>();
        Self::from_widths(
            S::lit(0.9),
            &us(&[1.0, 2.0, 10.0, 20.0, 50.0, 100.0]),
            S::lit(-1.2),
            &us(&[1.0, 2.0, 10.0, 20.0, 100.0, 1000.0, 2000.0, 5000.0]),
            S::lit(0.0005),
            5,
        )
        .expect("reference policy is valid")
    }

    /// Direct-training baseline: small-step pulses only.
    pub fn approach2_reference() -> Self {
        let us = |xs: &[f64]| xs.iter().map(|&x| S::lit(x)).collect::<Vec<_>>();
        Self::from_widths(
            S::lit(0.9),
            &us(&[1.0, 2.0, 10.0, 20.0, 50.0]),
            S::lit(-1.2),
            &us(&[1.0, 2.0, 10.0, 20.0, 100.0]),
            S::lit(0.0005),
            5,
        )
        .expect("reference policy is valid")
    }

    pub fn with_tolerance(mut self, r_tolerance: S) -> Self {
        self.r_tolerance = r_tolerance;
        self
    }

    pub fn with_max_n(mut self, max_n: usize) -> Self {
        self.max_n = max_n;
        self
    }

    fn sorted(mut self) -> Self {
        let by_width = |a: &PulseSpec<S>, b: &PulseSpec<S>| {
            a.width.partial_cmp(&b.width).unwrap_or(std::cmp::Ordering::Equal)
        };
        self.positive_pulses.sort_by(by_width);
        self.negative_pulses.sort_by(by_width);
        self
    }

    pub fn validate(&self) -> Result<(), CrossbarError> {
        if !(self.r_tolerance > S::zero()) {
            return Err(CrossbarError::Policy("r_tolerance must be > 0".into()));
        }
        if self.max_n == 0 {
            return Err(CrossbarError::Policy("max_n must be >= 1".into()));
        }
        if self.positive_pulses.is_empty() || self.negative_pulses.is_empty() {
            return Err(CrossbarError::Policy("both pulse lists must be non-empty".into()));
        }
        if self.positive_pulses.iter().any(|p| p.voltage <= S::zero()) {
            return Err(CrossbarError::Policy("positive pulse list holds a non-positive voltage".into()));
        }
        if self.negative_pulses.iter().any(|p| p.voltage >= S::zero()) {
            return Err(CrossbarError::Policy("negative pulse list holds a non-negative voltage".into()));
        }
        Ok(())
    }

    /// Every pulse in both lists, positive first.
    pub fn all_pulses(&self) -> impl Iterator<Item = &PulseSpec<S>> {
        self.positive_pulses.iter().chain(self.negative_pulses.iter())
    }

    /// Smallest predicted relative RS change per polarity when starting from
    /// `r`. A policy can only settle inside its tolerance band near `r` if
    /// both values are below `r_tolerance`.
    pub fn finest_relative_step(&self, params: &DeviceParams<S>, r: S) -> (S, S) {
        let finest = |pulses: &[PulseSpec<S>]| {
            pulses
                .iter()
                .map(|&p| ((apply_pulse(params, DeviceState::new(r), p).resistance - r) / r).abs())
                .fold(S::infinity(), S::min)
        };
        (finest(&self.positive_pulses), finest(&self.negative_pulses))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport<S> {
    pub converged: bool,
    /// Pulses applied. Zero means the device was already within tolerance.
    pub iterations: usize,
    /// Relative error at the last (noisy) read.
    pub final_relative_error: S,
}

impl<S> ProgramReport<S> {
    pub fn skipped(&self) -> bool {
        self.iterations == 0
    }
}

/// One pulse of a programming run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramEvent<S> {
    pub row: usize,
    pub col: usize,
    pub iteration: usize,
    pub pulse: PulseSpec<S>,
    pub target: S,
    /// Noisy read the prediction started from.
    pub start_read: S,
    pub predicted: S,
    /// True state after the pulse.
    pub actual: S,
    /// Verify read after the pulse.
    pub measured: S,
}

#[inline]
fn relative_error<S: Scalar>(target: S, r: S) -> S {
    ((target - r) / target).abs()
}

#[inline]
fn perturb<S: Scalar, R: Rng + ?Sized>(r: S, read_noise: S, rng: &mut R) -> S {
    if read_noise == S::zero() {
        return r;
    }
    let u = (S::lit(2.0) * S::uniform(rng) - S::one()) * read_noise;
    r * (S::one() + u)
}

/// Grid of devices sharing one parameter set, with a private seeded noise stream.
#[derive(Debug, Clone)]
pub struct CrossbarArray<S: Scalar> {
    rows: usize,
    cols: usize,
    devices: Vec<DeviceState<S>>,
    params: DeviceParams<S>,
    bounds: ResistanceBounds<S>,
    read_noise: S,
    rng: ChaCha8Rng,
}

impl<S: Scalar> CrossbarArray<S> {
    /// Every device starts at `resistance`.
    pub fn uniform(
        rows: usize,
        cols: usize,
        params: DeviceParams<S>,
        bounds: ResistanceBounds<S>,
        read_noise: S,
        resistance: S,
        noise_rng: ChaCha8Rng,
    ) -> Result<Self, CrossbarError> {
        if rows == 0 || cols == 0 {
            return Err(CrossbarError::Config("array must have at least one device".into()));
        }
        params.validate().map_err(|e| CrossbarError::Config(e.to_string()))?;
        if !(read_noise >= S::zero() && read_noise < S::one()) {
            return Err(CrossbarError::Config(format!("read_noise {read_noise} outside [0, 1)")));
        }
        if !(resistance >= bounds.r_min && resistance <= bounds.r_max) {
            return Err(CrossbarError::ResistanceOutOfRange {
                resistance: resistance.as_f64(),
                r_min: bounds.r_min.as_f64(),
                r_max: bounds.r_max.as_f64(),
            });
        }
        Ok(Self {
            rows,
            cols,
            devices: vec![DeviceState::new(resistance); rows * cols],
            params,
            bounds,
            read_noise,
            rng: noise_rng,
        })
    }

    /// Devices start uniformly at random in `[r_min, r_max]`, drawn from `init`.
    pub fn random<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        params: DeviceParams<S>,
        bounds: ResistanceBounds<S>,
        read_noise: S,
        init: &mut R,
        noise_rng: ChaCha8Rng,
    ) -> Result<Self, CrossbarError> {
        let mut array = Self::uniform(rows, cols, params, bounds, read_noise, bounds.r_min, noise_rng)?;
        let span = bounds.r_max - bounds.r_min;
        for d in &mut array.devices {
            d.resistance = bounds.r_min + span * S::uniform(init);
        }
        Ok(array)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }

    pub fn params(&self) -> &DeviceParams<S> {
        &self.params
    }

    pub fn bounds(&self) -> ResistanceBounds<S> {
        self.bounds
    }

    pub fn read_noise(&self) -> S {
        self.read_noise
    }

    pub fn set_read_noise(&mut self, read_noise: S) {
        self.read_noise = read_noise;
    }

    fn index(&self, row: usize, col: usize) -> Result<usize, CrossbarError> {
        if row >= self.rows || col >= self.cols {
            return Err(CrossbarError::Index {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(row * self.cols + col)
    }

    /// Noise-free device state.
    pub fn state(&self, row: usize, col: usize) -> Result<DeviceState<S>, CrossbarError> {
        Ok(self.devices[self.index(row, col)?])
    }

    /// Noise-free resistances, row-major.
    pub fn resistances(&self) -> Vec<S> {
        self.devices.iter().map(|d| d.resistance).collect()
    }

    /// Noise-free weights, row-major.
    pub fn true_weights(&self) -> Vec<S> {
        self.devices
            .iter()
            .map(|d| self.bounds.weight_unchecked(d.resistance).max(S::zero()).min(S::one()))
            .collect()
    }

    /// `R (1 + u)` with `u ~ U[-read_noise, read_noise]`, one fresh draw per call.
    pub fn read(&mut self, row: usize, col: usize) -> Result<S, CrossbarError> {
        let i = self.index(row, col)?;
        Ok(self.read_flat(i))
    }

    fn read_flat(&mut self, i: usize) -> S {
        perturb(self.devices[i].resistance, self.read_noise, &mut self.rng)
    }

    /// Reads every device and decodes to weights clamped to `[0, 1]`.
    pub fn read_weights(&mut self) -> Vec<S> {
        (0..self.devices.len())
            .map(|i| {
                let r = self.read_flat(i);
                self.bounds.weight_unchecked(r).max(S::zero()).min(S::one())
            })
            .collect()
    }

    /// Reads the first `n` devices only.
    pub fn read_weights_prefix(&mut self, n: usize) -> Vec<S> {
        (0..n.min(self.devices.len()))
            .map(|i| {
                let r = self.read_flat(i);
                self.bounds.weight_unchecked(r).max(S::zero()).min(S::one())
            })
            .collect()
    }

    /// Frozen copy for concurrent readers with their own noise streams.
    pub fn snapshot(&self) -> CrossbarSnapshot<S> {
        CrossbarSnapshot {
            resistances: self.resistances(),
            bounds: self.bounds,
            read_noise: self.read_noise,
        }
    }

    /// Predict-write-verify for one device.
    ///
    /// The first read doubles as the skip check. Each iteration then predicts
    /// every sign-appropriate candidate from a noisy read, applies the closest
    /// one to the true state and verifies with a separate read.
    pub fn program_device(
        &mut self,
        row: usize,
        col: usize,
        target: S,
        policy: &ProgramPolicy<S>,
        mut trace: Option<&mut Vec<ProgramEvent<S>>>,
    ) -> Result<ProgramReport<S>, CrossbarError> {
        let i = self.index(row, col)?;
        if !(target >= self.bounds.r_min && target <= self.bounds.r_max) {
            return Err(CrossbarError::ResistanceOutOfRange {
                resistance: target.as_f64(),
                r_min: self.bounds.r_min.as_f64(),
                r_max: self.bounds.r_max.as_f64(),
            });
        }

        let mut measured = self.read_flat(i);
        let mut err = relative_error(target, measured);
        if err <= policy.r_tolerance {
            return Ok(ProgramReport {
                converged: true,
                iterations: 0,
                final_relative_error: err,
            });
        }

        for iteration in 1..=policy.max_n {
            let start = if iteration == 1 { measured } else { self.read_flat(i) };
            let candidates = if target > start {
                &policy.positive_pulses
            } else {
                &policy.negative_pulses
            };
            let (pulse, predicted) = best_candidate(&self.params, start, target, candidates);

            let actual = apply_pulse(&self.params, self.devices[i], pulse);
            self.devices[i] = actual;
            measured = self.read_flat(i);
            err = relative_error(target, measured);

            if let Some(t) = trace.as_deref_mut() {
                t.push(ProgramEvent {
                    row,
                    col,
                    iteration,
                    pulse,
                    target,
                    start_read: start,
                    predicted,
                    actual: actual.resistance,
                    measured,
                });
            }
            if err <= policy.r_tolerance {
                return Ok(ProgramReport {
                    converged: true,
                    iterations: iteration,
                    final_relative_error: err,
                });
            }
        }
        Ok(ProgramReport {
            converged: false,
            iterations: policy.max_n,
            final_relative_error: err,
        })
    }

    /// Programs the first `targets.len()` devices (row-major) toward the given
    /// weights. Devices already within tolerance are left alone.
    pub fn program_weights(
        &mut self,
        targets: &[S],
        policy: &ProgramPolicy<S>,
        mut trace: Option<&mut Vec<ProgramEvent<S>>>,
    ) -> Result<Vec<ProgramReport<S>>, CrossbarError> {
        if targets.len() > self.capacity() {
            return Err(CrossbarError::Capacity {
                needed: targets.len(),
                rows: self.rows,
                cols: self.cols,
            });
        }
        let ResistanceBounds { r_min, r_max } = self.bounds;
        let mut reports = Vec::with_capacity(targets.len());
        for (i, &w) in targets.iter().enumerate() {
            let target_r = resistance_from_weight(w, r_min, r_max)?;
            let (row, col) = (i / self.cols, i % self.cols);
            reports.push(self.program_device(row, col, target_r, policy, trace.as_deref_mut())?);
        }
        Ok(reports)
    }

    /// Writes `row,col,resistance_ohms` lines with a header.
    pub fn write_state_csv<W: Write>(&self, mut out: W) -> Result<(), CrossbarError> {
        writeln!(out, "row,col,resistance_ohms")?;
        for (i, d) in self.devices.iter().enumerate() {
            writeln!(out, "{},{},{}", i / self.cols, i % self.cols, d.resistance)?;
        }
        Ok(())
    }

    /// Loads device states written by [`Self::write_state_csv`]. Every device
    /// must be listed and lie within the codec bounds.
    pub fn read_state_csv<R: BufRead>(&mut self, input: R) -> Result<(), CrossbarError> {
        let mut seen = vec![false; self.devices.len()];
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let line = line.trim();
            if line.is_empty() || (lineno == 1 && line.starts_with("row")) {
                continue;
            }
            let parse_err = |reason: &str| CrossbarError::Parse {
                line: lineno,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err("expected row,col,resistance_ohms"));
            }
            let row: usize = fields[0].parse().map_err(|_| parse_err("bad row"))?;
            let col: usize = fields[1].parse().map_err(|_| parse_err("bad col"))?;
            let r: f64 = fields[2].parse().map_err(|_| parse_err("bad resistance"))?;
            let r = S::lit(r);
            let i = self.index(row, col)?;
            if !(r >= self.bounds.r_min && r <= self.bounds.r_max) {
                return Err(parse_err("resistance outside codec bounds"));
            }
            self.devices[i] = DeviceState::new(r);
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(CrossbarError::Parse {
                line: 0,
                reason: format!("device ({}, {}) missing", missing / self.cols, missing % self.cols),
            });
        }
        Ok(())
    }
}

fn best_candidate<S: Scalar>(
    params: &DeviceParams<S>,
    start: S,
    target: S,
    candidates: &[PulseSpec<S>],
) -> (PulseSpec<S>, S) {
    let mut best = candidates[0];
    let mut best_pred = apply_pulse(params, DeviceState::new(start), best).resistance;
    let mut best_dist = (best_pred - target).abs();
    for &c in &candidates[1..] {
        let pred = apply_pulse(params, DeviceState::new(start), c).resistance;
        let dist = (pred - target).abs();
        // strict: equal distance keeps the earlier (shorter) pulse
        if dist < best_dist {
            best = c;
            best_pred = pred;
            best_dist = dist;
        }
    }
    (best, best_pred)
}

/// Programming trace as CSV, one row per applied pulse.
pub fn program_trace_csv<S: Scalar>(events: &[ProgramEvent<S>]) -> String {
    let mut s = String::from("row,col,iteration,voltage,width_s,target_ohms,start_read_ohms,predicted_ohms,actual_ohms,measured_ohms\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{:e},{},{},{},{},{}",
            e.row, e.col, e.iteration, e.pulse.voltage, e.pulse.width, e.target, e.start_read, e.predicted, e.actual, e.measured
        );
    }
    s
}

/// Immutable copy of an array's resistances, shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarSnapshot<S> {
    pub resistances: Vec<S>,
    pub bounds: ResistanceBounds<S>,
    pub read_noise: S,
}

impl<S: Scalar> CrossbarSnapshot<S> {
    /// Noisy weight read of the first `n` devices using a caller-owned stream.
    pub fn read_weights_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<S> {
        self.resistances[..n.min(self.resistances.len())]
            .iter()
            .map(|&r| {
                let r = perturb(r, self.read_noise, rng);
                self.bounds.weight_unchecked(r).max(S::zero()).min(S::one())
            })
            .collect()
    }

    pub fn true_weights(&self, n: usize) -> Vec<S> {
        self.resistances[..n.min(self.resistances.len())]
            .iter()
            .map(|&r| self.bounds.weight_unchecked(r).max(S::zero()).min(S::one()))
            .collect()
    }
}

pub fn euclidean_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(S::zero(), |acc, v| acc + v)
        .sqrt()
}
