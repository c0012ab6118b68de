//! Property tests for cross-module invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use memsnn::netcore::output_probability;
use memsnn::pipelines::ExperimentConfig;
use memsnn::spiking::encode_poisson;
use memsnn::textdata::{tokenize, Vocabulary};
use memsnn::{CrossbarArray, DeviceParams, ProgramPolicy, ResistanceBounds};

fn array(seed: u64, read_noise: f64) -> CrossbarArray {
    let params = DeviceParams::reference();
    let policy = ProgramPolicy::approach1_reference();
    let bounds = ResistanceBounds::from_pulses(&params, policy.all_pulses()).unwrap();
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    CrossbarArray::random(4, 4, params, bounds, read_noise, &mut init, ChaCha8Rng::seed_from_u64(seed + 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn programming_keeps_devices_in_bounds(
        weights in proptest::collection::vec(0.0f64..=1.0, 1..=16),
        seed in 0u64..1000,
        noise in prop_oneof![Just(0.0), 0.0f64..0.2],
        tolerance in prop_oneof![Just(0.0005), 0.0001f64..0.3],
    ) {
        let mut a = array(seed, noise);
        let policy = ProgramPolicy::approach1_reference().with_tolerance(tolerance);
        let reports = a.program_weights(&weights, &policy, None).unwrap();
        prop_assert_eq!(reports.len(), weights.len());
        for r in &reports {
            prop_assert!(r.iterations <= policy.max_n);
            prop_assert!(r.final_relative_error >= 0.0);
            prop_assert!(!r.converged || r.final_relative_error <= tolerance);
        }
        let b = a.bounds();
        for r in a.resistances() {
            prop_assert!(r >= b.r_min && r <= b.r_max, "{} outside [{}, {}]", r, b.r_min, b.r_max);
        }
        for w in a.true_weights() {
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn spike_trains_are_binary(x in proptest::collection::vec(0.0f64..=1.0, 1..8), steps in 1usize..200, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = encode_poisson(&x, steps, &mut rng).unwrap();
        prop_assert_eq!(train.steps(), steps);
        for t in 0..steps {
            prop_assert!(train.step(t).iter().all(|&b| b <= 1));
        }
        // Extreme rates are deterministic.
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                prop_assert!((0..steps).all(|t| train.bit(i, t) == 0));
            }
        }
    }

    // Past |v + C| ~ 36 the f64 sigmoid rounds to exactly 0 or 1; the loss
    // clamps for that case.
    #[test]
    fn output_probability_is_open_unit_interval(v in -15.0f64..15.0, offset in -15.0f64..15.0) {
        let y = output_probability(v, offset);
        prop_assert!(y > 0.0 && y < 1.0);
    }

    #[test]
    fn vocabulary_ids_are_dense(docs in proptest::collection::vec("[a-f ]{0,40}", 0..30), min in 1usize..4) {
        let tokens: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
        let v = Vocabulary::build(&tokens, min);
        prop_assert_eq!(v.token(v.unk_id()), Some("[unk]"));
        prop_assert_eq!(v.token(v.pad_id()), Some("[pad]"));
        for id in 0..v.len() {
            let tok = v.token(id).unwrap();
            prop_assert_eq!(v.id(tok), Some(id));
            if id != v.unk_id() && id != v.pad_id() {
                prop_assert!(v.count(id) >= min);
            }
        }
        prop_assert!(v.token(v.len()).is_none());
    }
}

#[test]
fn fingerprint_ignores_table_order() {
    let cfg = ExperimentConfig::baseline(2);
    let text = cfg.to_toml_string();
    let (head, tables) = text.split_at(text.find("\n[").unwrap() + 1);
    let mut parts: Vec<String> = tables.split("\n[").map(|t| t.trim_start_matches('[').to_string()).collect();
    parts.reverse();
    let shuffled = format!("{head}{}", parts.iter().map(|t| format!("[{}\n", t.trim_end())).collect::<String>());
    assert_ne!(shuffled, text);
    let again = ExperimentConfig::from_toml_str(&shuffled, &[]).unwrap();
    assert_eq!(again.fingerprint(), cfg.fingerprint());

    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(other.fingerprint(), cfg.fingerprint());
}
