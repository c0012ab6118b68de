//! Empirical bipolar memristor model.
//!
//! The switching rate depends on the applied bias and on the distance to a
//! voltage-dependent boundary state:
//!
//! ```text
//! dR/dt = A_p (exp(|v|/t_p) - 1) h(r_p(v) - R) (r_p(v) - R)^2    v > 0
//! dR/dt = A_n (exp(|v|/t_n) - 1) h(R - r_n(v)) (R - r_n(v))^2    v <= 0
//! r_{p,n}(v) = a0_{p,n} + a1_{p,n} v
//! ```
//!
//! Everything here is a pure function over value types. Pulses are applied by
//! explicit Euler integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("device parameter `{field}` is invalid: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// How a pulse width is turned into Euler steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    /// Every pulse is split into `substeps` equal steps of `width / substeps`.
    #[default]
    Subdivide,
    /// `N = max(1, floor(width / dt))` steps of size `dt`.
    FixedStep,
}

fn default_substeps() -> usize {
    100
}

/// Fitted model constants. Field names in serialized form follow the usual
/// symbols (`A_p`, `a0_n`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams<S> {
    #[serde(rename = "A_p")]
    pub a_p: S,
    #[serde(rename = "A_n")]
    pub a_n: S,
    pub t_p: S,
    pub t_n: S,
    pub a0_p: S,
    pub a1_p: S,
    pub a0_n: S,
    pub a1_n: S,
    /// Integration step in seconds. Only used by [`Integration::FixedStep`].
    pub dt: S,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl<S: Scalar> DeviceParams<S> {
    /// Baseline fitted parameters of the reference device.
    pub fn reference() -> Self {
        Self {
            a_p: S::lit(0.21389),
            a_n: S::lit(-0.81302),
            t_p: S::lit(1.6591),
            t_n: S::lit(1.5148),
            a0_p: S::lit(37087.0),
            a1_p: S::lit(-20193.0),
            a0_n: S::lit(43430.0),
            a1_n: S::lit(34333.0),
            dt: S::lit(1e-3),
            integration: Integration::Subdivide,
            substeps: default_substeps(),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let z = S::zero();
        let finite = [
            ("A_p", self.a_p),
            ("A_n", self.a_n),
            ("t_p", self.t_p),
            ("t_n", self.t_n),
            ("a0_p", self.a0_p),
            ("a1_p", self.a1_p),
            ("a0_n", self.a0_n),
            ("a1_n", self.a1_n),
            ("dt", self.dt),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.a_p <= z {
            return Err(invalid("A_p", "must be > 0"));
        }
        if self.a_n >= z {
            return Err(invalid("A_n", "must be < 0"));
        }
        if self.t_p <= z {
            return Err(invalid("t_p", "must be > 0"));
        }
        if self.t_n <= z {
            return Err(invalid("t_n", "must be > 0"));
        }
        if self.dt <= z {
            return Err(invalid("dt", "must be > 0"));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be >= 1"));
        }
        Ok(())
    }

    /// Number of Euler steps and the step size for a pulse of `width` seconds.
    pub fn steps_for(&self, width: S) -> (usize, S) {
        match self.integration {
            Integration::Subdivide => {
                let n = self.substeps.max(1);
                (n, width / S::from_usize_lossy(n))
            }
            Integration::FixedStep => {
                let n = (width / self.dt).floor().to_usize().unwrap_or(0).max(1);
                (n, self.dt)
            }
        }
    }

    pub fn with_integration(mut self, integration: Integration) -> Self {
        self.integration = integration;
        self
    }
}

impl<S: Scalar> Default for DeviceParams<S> {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DeviceState<S> {
    /// Ohms.
    pub resistance: S,
}

impl<S: Scalar> DeviceState<S> {
    pub fn new(resistance: S) -> Self {
        debug_assert!(resistance > S::zero());
        Self { resistance }
    }
}

/// A rectangular programming pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec<S> {
    /// Signed bias in volts.
    pub voltage: S,
    /// Seconds.
    pub width: S,
}

impl<S: Scalar> PulseSpec<S> {
    pub fn new(voltage: S, width: S) -> Result<Self, ParamError> {
        if !(width > S::zero()) || !width.is_finite() {
            return Err(invalid("width", "pulse width must be > 0"));
        }
        if voltage == S::zero() || !voltage.is_finite() {
            return Err(invalid("voltage", "pulse voltage must be non-zero"));
        }
        Ok(Self { voltage, width })
    }

    /// Convenience constructor taking the width in microseconds.
    pub fn micros(voltage: S, width_us: S) -> Result<Self, ParamError> {
        Self::new(voltage, width_us / S::lit(1e6))
    }
}

/// Active boundary state for bias `v`: `r_p(v)` for `v > 0`, `r_n(v)` otherwise.
#[inline]
pub fn boundary<S: Scalar>(params: &DeviceParams<S>, v: S) -> S {
    if v > S::zero() {
        params.a0_p + params.a1_p * v
    } else {
        params.a0_n + params.a1_n * v
    }
}

/// Voltage-only prefactor `A (exp(|v|/t) - 1)` of the active branch.
#[inline]
fn bias_gain<S: Scalar>(params: &DeviceParams<S>, v: S) -> S {
    if v > S::zero() {
        params.a_p * ((v.abs() / params.t_p).exp() - S::one())
    } else {
        params.a_n * ((v.abs() / params.t_n).exp() - S::one())
    }
}

/// Distance to the active boundary measured in the switching direction.
/// Non-positive means the gate is closed.
#[inline]
fn gate_gap<S: Scalar>(v: S, r: S, bound: S) -> S {
    if v > S::zero() {
        bound - r
    } else {
        r - bound
    }
}

/// `dR/dt` in ohms per second. The Heaviside gate uses `h(0) = 0`.
pub fn switching_rate<S: Scalar>(params: &DeviceParams<S>, state: DeviceState<S>, v: S) -> S {
    let gap = gate_gap(v, state.resistance, boundary(params, v));
    if gap <= S::zero() {
        return S::zero();
    }
    bias_gain(params, v) * gap * gap
}

/// Applies one pulse by explicit Euler integration. A step that would cross the
/// active boundary lands exactly on it.
pub fn apply_pulse<S: Scalar>(
    params: &DeviceParams<S>,
    state: DeviceState<S>,
    pulse: PulseSpec<S>,
) -> DeviceState<S> {
    let v = pulse.voltage;
    let bound = boundary(params, v);
    let gain = bias_gain(params, v);
    let (steps, h) = params.steps_for(pulse.width);
    let positive = v > S::zero();

    let mut r = state.resistance;
    for _ in 0..steps {
        let gap = gate_gap(v, r, bound);
        if gap <= S::zero() {
            break;
        }
        let next = r + gain * gap * gap * h;
        r = if positive { next.min(bound) } else { next.max(bound) };
    }
    DeviceState { resistance: r }
}
