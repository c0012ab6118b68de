//! Rate-coded spiking machinery: Poisson encoding, integrate-and-fire neuron
//! with reset by subtraction, and the analytical rate relation.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpikingError {
    #[error("input component {index} = {value} outside [0, 1]")]
    Domain { index: usize, value: f64 },
    #[error("spike train needs at least one timestep")]
    EmptyWindow,
    #[error("{weights} weights for a {dims}-dimensional spike train")]
    Shape { weights: usize, dims: usize },
    #[error("threshold must be > 0, got {0}")]
    Threshold(f64),
}

/// Binary spike trains for `dims` inputs over `steps` timesteps, stored
/// time-major so one timestep is contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    dims: usize,
    steps: usize,
    bits: Vec<u8>,
}

impl SpikeTrain {
    /// `rows[i][t]` is the bit of input `i` at step `t`.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, SpikingError> {
        let dims = rows.len();
        let steps = rows.first().map_or(0, Vec::len);
        if steps == 0 {
            return Err(SpikingError::EmptyWindow);
        }
        let mut bits = vec![0u8; dims * steps];
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), steps, "ragged spike rows");
            for (t, &b) in row.iter().enumerate() {
                bits[t * dims + i] = u8::from(b != 0);
            }
        }
        Ok(Self { dims, steps, bits })
    }

    pub fn zeros(dims: usize, steps: usize) -> Self {
        Self {
            dims,
            steps,
            bits: vec![0; dims * steps],
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn bit(&self, input: usize, t: usize) -> u8 {
        self.bits[t * self.dims + input]
    }

    /// Bits of every input at step `t`.
    #[inline]
    pub fn step(&self, t: usize) -> &[u8] {
        &self.bits[t * self.dims..(t + 1) * self.dims]
    }

    /// Realized firing rate per input, `(1/T) sum_t x_t`.
    pub fn mean_rates<S: Scalar>(&self) -> Vec<S> {
        let mut counts = vec![0usize; self.dims];
        for t in 0..self.steps {
            for (c, &b) in counts.iter_mut().zip(self.step(t)) {
                *c += b as usize;
            }
        }
        let steps = S::from_usize_lossy(self.steps);
        counts.into_iter().map(|c| S::from_usize_lossy(c) / steps).collect()
    }

    /// Raster dump as `t,neuron,bit` lines (debug output).
    pub fn raster_csv(&self) -> String {
        let mut s = String::from("t,neuron,bit\n");
        for t in 0..self.steps {
            for (i, &b) in self.step(t).iter().enumerate() {
                let _ = writeln!(s, "{t},{i},{b}");
            }
        }
        s
    }
}

/// Poisson rate coding: bit `(i, t)` fires iff `x_c[i] > u[i, t]` with the
/// `dims x steps` uniform matrix drawn input-major before comparison.
pub fn encode_poisson<S: Scalar, R: Rng + ?Sized>(
    x_c: &[S],
    steps: usize,
    rng: &mut R,
) -> Result<SpikeTrain, SpikingError> {
    if steps == 0 {
        return Err(SpikingError::EmptyWindow);
    }
    for (index, &value) in x_c.iter().enumerate() {
        if !(value >= S::zero() && value <= S::one()) {
            return Err(SpikingError::Domain {
                index,
                value: value.as_f64(),
            });
        }
    }
    let dims = x_c.len();
    let mut bits = vec![0u8; dims * steps];
    for (i, &x) in x_c.iter().enumerate() {
        for t in 0..steps {
            bits[t * dims + i] = u8::from(x > S::uniform(rng));
        }
    }
    Ok(SpikeTrain { dims, steps, bits })
}

/// Integrate-and-fire neuron without leak, reset by subtraction:
///
/// ```text
/// V_t = V_{t-1} + I_t - Z_{t-1} V_th
/// Z_t = [V_t >= V_th]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifNeuronState<S> {
    pub v: S,
    pub v_th: S,
    pub v0: S,
    /// `Z_{t-1}`: whether the previous step fired.
    pub fired: bool,
}

impl<S: Scalar> LifNeuronState<S> {
    /// Fresh neuron at `V_0 = 0`.
    pub fn new(v_th: S) -> Result<Self, SpikingError> {
        if !(v_th > S::zero()) {
            return Err(SpikingError::Threshold(v_th.as_f64()));
        }
        Ok(Self {
            v: S::zero(),
            v_th,
            v0: S::zero(),
            fired: false,
        })
    }

    /// Membrane voltage with the pending subtraction of the last spike applied.
    pub fn residual(&self) -> S {
        if self.fired {
            self.v - self.v_th
        } else {
            self.v
        }
    }
}

/// One timestep. Fires at exactly the threshold.
#[inline]
pub fn lif_step<S: Scalar>(state: LifNeuronState<S>, weighted_input: S) -> (LifNeuronState<S>, bool) {
    let reset = if state.fired { state.v_th } else { S::zero() };
    let v = state.v + weighted_input - reset;
    let fired = v >= state.v_th;
    (LifNeuronState { v, fired, ..state }, fired)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference<S> {
    /// `(sum_t Z_t) / T`.
    pub rate: S,
    /// Residual membrane voltage after the window, i.e. `V_T - Z_T V_th`.
    pub final_v: S,
    pub spikes: usize,
}

impl<S: Scalar> Inference<S> {
    /// Positive class iff more than half of the window fired.
    pub fn is_positive(&self) -> bool {
        self.rate > S::lit(0.5)
    }
}

/// Runs a fresh neuron over the whole train.
pub fn run_inference<S: Scalar>(weights: &[S], train: &SpikeTrain, v_th: S) -> Result<Inference<S>, SpikingError> {
    if weights.len() != train.dims() {
        return Err(SpikingError::Shape {
            weights: weights.len(),
            dims: train.dims(),
        });
    }
    let mut state = LifNeuronState::new(v_th)?;
    let mut spikes = 0usize;
    for t in 0..train.steps() {
        let input = weighted_input(weights, train.step(t));
        let (next, fired) = lif_step(state, input);
        state = next;
        spikes += usize::from(fired);
    }
    Ok(Inference {
        rate: S::from_usize_lossy(spikes) / S::from_usize_lossy(train.steps()),
        final_v: state.residual(),
        spikes,
    })
}

#[inline]
fn weighted_input<S: Scalar>(weights: &[S], bits: &[u8]) -> S {
    weights
        .iter()
        .zip(bits)
        .fold(S::zero(), |acc, (&w, &b)| if b != 0 { acc + w } else { acc })
}

/// Firing rate predicted from the equivalent continuous output:
/// `V_c / V_th - (V_final - V_0) / (V_th T)`.
pub fn rate_estimate<S: Scalar>(v_c: S, v_th: S, final_v: S, v0: S, steps: usize) -> S {
    v_c / v_th - (final_v - v0) / (v_th * S::from_usize_lossy(steps))
}

/// Surrogate gradient accumulated over the window with the rectangular
/// pseudo-derivative `1/(2 V_th)` on `0 < V_t < 2 V_th`:
/// `delta (1/T) sum_t h'(V_t - V_th) x_t`.
///
/// Used to check the closed-form gradient, not for training.
pub fn surrogate_grad_oracle<S: Scalar>(
    weights: &[S],
    train: &SpikeTrain,
    v_th: S,
    loss_delta: S,
) -> Result<Vec<S>, SpikingError> {
    if weights.len() != train.dims() {
        return Err(SpikingError::Shape {
            weights: weights.len(),
            dims: train.dims(),
        });
    }
    let mut state = LifNeuronState::new(v_th)?;
    let window = S::lit(2.0) * v_th;
    let slope = window.recip();
    let mut acc = vec![S::zero(); weights.len()];
    for t in 0..train.steps() {
        let bits = train.step(t);
        let (next, _) = lif_step(state, weighted_input(weights, bits));
        state = next;
        if state.v > S::zero() && state.v < window {
            for (a, &b) in acc.iter_mut().zip(bits) {
                if b != 0 {
                    *a += slope;
                }
            }
        }
    }
    let steps = S::from_usize_lossy(train.steps());
    Ok(acc.into_iter().map(|a| loss_delta * a / steps).collect())
}

/// Membrane trajectory `V_1..V_T` (before the pending subtraction).
pub fn membrane_trace<S: Scalar>(weights: &[S], train: &SpikeTrain, v_th: S) -> Result<Vec<S>, SpikingError> {
    let mut state = LifNeuronState::new(v_th)?;
    Ok((0..train.steps())
        .map(|t| {
            state = lif_step(state, weighted_input(weights, train.step(t))).0;
            state.v
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn encode_extremes() {
        let t = encode_poisson(&[1.0f64, 0.0], 64, &mut rng(1)).unwrap();
        for s in 0..64 {
            assert_eq!(t.bit(0, s), 1);
            assert_eq!(t.bit(1, s), 0);
        }
    }

    #[test]
    fn encode_half_rate() {
        let t = encode_poisson(&[0.5f64], 1000, &mut rng(2)).unwrap();
        let r: f64 = t.mean_rates()[0];
        // binomial sd sqrt(0.25/1000) ~ 0.0158; 0.07 is > 4 sd
        assert!((r - 0.5).abs() < 0.07, "{r}");
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(matches!(
            encode_poisson(&[0.2f64, 1.2], 10, &mut rng(3)),
            Err(SpikingError::Domain { index: 1, .. })
        ));
        assert!(matches!(encode_poisson(&[0.2f64], 0, &mut rng(3)), Err(SpikingError::EmptyWindow)));
    }

    #[test]
    fn lif_rest() {
        let s = LifNeuronState::new(1.0f64).unwrap();
        let (s, z) = lif_step(s, 0.0);
        assert_eq!(s.v, 0.0);
        assert!(!z);
    }

    #[test]
    fn lif_hand_simulation_half_rate() {
        let train = SpikeTrain::from_rows(&[vec![1; 10]]).unwrap();
        let w = [1.0f64];
        let mut s = LifNeuronState::new(2.0).unwrap();
        let mut fired_at = Vec::new();
        for t in 0..10 {
            let (n, z) = lif_step(s, w[0] * f64::from(train.bit(0, t)));
            s = n;
            if z {
                fired_at.push(t + 1);
            }
        }
        assert_eq!(fired_at, vec![2, 4, 6, 8, 10]);
        let inf = run_inference(&w, &train, 2.0).unwrap();
        assert_eq!(inf.rate, 0.5);
        assert_eq!(inf.final_v, 0.0);
        assert!(!inf.is_positive());
    }

    #[test]
    fn lif_threshold_one_fires_every_step() {
        let train = SpikeTrain::from_rows(&[vec![1; 7]]).unwrap();
        let inf = run_inference(&[1.0f64], &train, 1.0).unwrap();
        assert_eq!(inf.rate, 1.0);
        assert!(inf.is_positive());
    }

    #[test]
    fn zero_train_never_fires() {
        let train = SpikeTrain::zeros(4, 20);
        let inf = run_inference(&[1.0f64; 4], &train, 0.5).unwrap();
        assert_eq!(inf.rate, 0.0);
        assert_eq!(inf.final_v, 0.0);
    }

    #[test]
    fn inference_shape_error() {
        let train = SpikeTrain::zeros(3, 5);
        assert!(matches!(run_inference(&[1.0f64; 2], &train, 1.0), Err(SpikingError::Shape { .. })));
        assert!(matches!(run_inference(&[1.0f64; 3], &train, 0.0), Err(SpikingError::Threshold(_))));
    }

    #[test]
    fn rate_estimate_examples() {
        assert_eq!(rate_estimate(2.0f64, 2.0, 0.3, 0.3, 10), 1.0);
        assert_eq!(rate_estimate(1.0f64, 2.0, 0.0, 0.0, 37), 0.5);
        let r = rate_estimate(0.0f64, 2.0, 0.8, 0.0, 10);
        assert_relative_eq!(r, -0.04);
        assert!(r <= 0.0);
    }

    #[test]
    fn surrogate_on_zero_train_is_zero() {
        let train = SpikeTrain::zeros(3, 12);
        let g = surrogate_grad_oracle(&[0.5f64, 0.2, 0.9], &train, 1.0, 0.7).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn surrogate_inside_window_is_scaled_mean_rate() {
        // single always-on input with w = 1, V_th = 2: V_t alternates 1, 2
        let train = SpikeTrain::from_rows(&[vec![1; 10], vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 0]]).unwrap();
        let w = [1.0f64, 0.0];
        let v = membrane_trace(&w, &train, 2.0).unwrap();
        assert!(v.iter().all(|&x| x > 0.0 && x < 4.0));
        let g = surrogate_grad_oracle(&w, &train, 2.0, 0.5).unwrap();
        let x_c: Vec<f64> = train.mean_rates();
        for (gi, xi) in g.iter().zip(&x_c) {
            assert_relative_eq!(*gi, 0.5 * xi / 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn raster_has_one_line_per_bit() {
        let t = encode_poisson(&[0.3f64, 0.6], 5, &mut rng(9)).unwrap();
        assert_eq!(t.raster_csv().lines().count(), 11);
    }

    #[test]
    fn works_in_f32() {
        let t = encode_poisson(&[0.25f32, 0.75], 400, &mut rng(5)).unwrap();
        let inf = run_inference(&[0.5f32, 0.5], &t, 1.0).unwrap();
        let v_c: f32 = t.mean_rates::<f32>().iter().map(|x| 0.5 * x).sum();
        let est = rate_estimate(v_c, 1.0, inf.final_v, 0.0, 400);
        assert!((inf.rate - est).abs() < 1e-5);
    }

    fn train_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<u8>>, f64)> {
        (1usize..6, 1usize..80).prop_flat_map(|(dims, steps)| {
            (
                proptest::collection::vec(0.0f64..=1.0, dims),
                proptest::collection::vec(proptest::collection::vec(0u8..=1, steps), dims),
                0.05f64..4.0,
            )
        })
    }

    proptest! {
        #[test]
        fn rate_relation_holds((w, rows, v_th) in train_strategy()) {
            let train = SpikeTrain::from_rows(&rows).unwrap();
            let inf = run_inference(&w, &train, v_th).unwrap();
            let x_bar: Vec<f64> = train.mean_rates();
            let v_c: f64 = w.iter().zip(&x_bar).map(|(a, b)| a * b).sum();
            let est = rate_estimate(v_c, v_th, inf.final_v, 0.0, train.steps());
            prop_assert!((inf.rate - est).abs() <= 1.0 / train.steps() as f64);
            prop_assert!((inf.rate - est).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&inf.rate));
        }

        #[test]
        fn rate_non_increasing_in_threshold((w, rows, v_th) in train_strategy(), bump in 0.0f64..3.0) {
            let train = SpikeTrain::from_rows(&rows).unwrap();
            let lo = run_inference(&w, &train, v_th).unwrap().rate;
            let hi = run_inference(&w, &train, v_th + bump).unwrap().rate;
            prop_assert!(hi <= lo);
        }

        #[test]
        fn encoder_rate_is_unbiased(x in 0.0f64..=1.0, seed in any::<u64>()) {
            let steps = 4000;
            let t = encode_poisson(&[x], steps, &mut rng(seed)).unwrap();
            let r: f64 = t.mean_rates()[0];
            let sd = (x * (1.0 - x) / steps as f64).sqrt();
            prop_assert!((r - x).abs() <= 5.0 * sd + 1e-12);
        }
    }
}
