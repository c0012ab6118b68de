//! Deterministic stand-in for a polar movie-review corpus.
//!
//! Reviews are built from pronounceable pseudo-words drawn from Zipf-shaped
//! distributions: a large neutral lexicon plus small positive and negative
//! lexicons. Each review gets a random "clarity" `s`, the probability that a
//! sentiment word agrees with the label, so some reviews are ambiguous and a
//! bag-of-words model tops out well below 100%.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Review;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticReviews {
    pub neutral_words: usize,
    pub polar_words: usize,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is a sentiment word.
    pub sentiment_rate: f64,
    /// Range of the per-review agreement probability.
    pub clarity: (f64, f64),
}

impl Default for SyntheticReviews {
    fn default() -> Self {
        Self {
            neutral_words: 4000,
            polar_words: 250,
            zipf_exponent: 1.0,
            min_len: 40,
            max_len: 250,
            sentiment_rate: 0.08,
            clarity: (0.5, 1.0),
        }
    }
}

const ONSETS: [&str; 20] = [
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "st",
];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ou"];

/// Unique pseudo-word for `index`: base-120 digits spelled as syllables, at
/// least two syllables long.
pub fn pseudo_word(index: usize) -> String {
    let base = ONSETS.len() * NUCLEI.len();
    let mut n = index;
    let mut word = String::new();
    let mut syllables = 0;
    while n > 0 || syllables < 2 {
        let d = n % base;
        word.push_str(ONSETS[d / NUCLEI.len()]);
        word.push_str(NUCLEI[d % NUCLEI.len()]);
        n /= base;
        syllables += 1;
    }
    word
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-exponent))).expect("non-empty lexicon")
}

impl SyntheticReviews {
    /// `n` reviews with alternating labels in shuffled order, fully determined
    /// by `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Vec<Review> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let neutral: Vec<String> = (0..self.neutral_words).map(pseudo_word).collect();
        let positive: Vec<String> = (0..self.polar_words).map(|i| pseudo_word(self.neutral_words + i)).collect();
        let negative: Vec<String> = (0..self.polar_words)
            .map(|i| pseudo_word(self.neutral_words + self.polar_words + i))
            .collect();
        let neutral_dist = zipf(neutral.len(), self.zipf_exponent);
        let polar_dist = zipf(self.polar_words, self.zipf_exponent);

        let mut out: Vec<Review> = (0..n)
            .map(|i| {
                let label = i % 2 == 0;
                let len = rng.gen_range(self.min_len..=self.max_len);
                let clarity = rng.gen_range(self.clarity.0..=self.clarity.1);
                let mut text = String::new();
                let mut sentence_left = 0usize;
                for _ in 0..len {
                    let word = if rng.gen::<f64>() < self.sentiment_rate {
                        let agree = rng.gen::<f64>() < clarity;
                        let lexicon = if agree == label { &positive } else { &negative };
                        &lexicon[polar_dist.sample(&mut rng)]
                    } else {
                        &neutral[neutral_dist.sample(&mut rng)]
                    };
                    if sentence_left == 0 {
                        if !text.is_empty() {
                            text.push_str(if rng.gen::<f64>() < 0.1 { "<br /><br />" } else { " " });
                        }
                        sentence_left = rng.gen_range(6..20);
                        let mut cs = word.chars();
                        if let Some(c) = cs.next() {
                            text.extend(c.to_uppercase());
                            text.push_str(cs.as_str());
                        }
                    } else {
                        text.push(' ');
                        text.push_str(word);
                        if sentence_left > 1 && rng.gen::<f64>() < 0.06 {
                            text.push(',');
                        }
                    }
                    sentence_left -= 1;
                    if sentence_left == 0 {
                        text.push(if rng.gen::<f64>() < 0.15 { '!' } else { '.' });
                    }
                }
                if sentence_left > 0 {
                    text.push('.');
                }
                Review { text, label }
            })
            .collect();
        out.shuffle(&mut rng);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textdata::{build_vocab, tokenize};
    use std::collections::HashSet;

    #[test]
    fn pseudo_words_are_unique() {
        let words: HashSet<String> = (0..20_000).map(pseudo_word).collect();
        assert_eq!(words.len(), 20_000);
        assert!(words.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let g = SyntheticReviews::default();
        let a = g.generate(200, 7);
        assert_eq!(a, g.generate(200, 7));
        assert_ne!(a, g.generate(200, 8));
        assert_eq!(a.iter().filter(|r| r.label).count(), 100);
    }

    #[test]
    fn texts_tokenize_into_plausible_lengths() {
        let g = SyntheticReviews::default();
        for r in g.generate(50, 3) {
            let toks = tokenize(&r.text);
            let words = toks.iter().filter(|t| t.chars().all(|c| c.is_ascii_lowercase())).count();
            assert!((g.min_len..=g.max_len).contains(&words), "{words}");
            assert!(!toks.iter().any(|t| t.contains('<')));
        }
    }

    #[test]
    fn desk_scale_vocabulary_is_substantial() {
        let train = SyntheticReviews::default().generate(2000, 11);
        let v = build_vocab(&train, 10);
        assert!(v.len() > 1500, "{}", v.len());
    }

    #[test]
    fn polar_words_carry_the_label() {
        let g = SyntheticReviews::default();
        let pos_word = pseudo_word(g.neutral_words);
        let neg_word = pseudo_word(g.neutral_words + g.polar_words);
        let (mut in_pos, mut in_neg) = (0, 0);
        for r in g.generate(1000, 5) {
            let toks = tokenize(&r.text);
            let p = toks.iter().filter(|t| **t == pos_word).count() as i64;
            let n = toks.iter().filter(|t| **t == neg_word).count() as i64;
            if r.label {
                in_pos += p - n;
            } else {
                in_neg += p - n;
            }
        }
        assert!(in_pos > 0 && in_neg < 0, "{in_pos} {in_neg}");
    }
}
