//! Text ingestion: tokenizer, vocabulary, corpora, splits and word vectors.

mod tokenize;
mod vectors;
mod vocab;

pub mod synthetic;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tokenize::tokenize;
pub use vectors::{load_word_vectors, load_word_vectors_file, WordVectors};
pub use vocab::{Vocabulary, PAD, UNK};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Path {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: expected {expected} vector components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("dataset is empty: {0}")]
    Empty(String),
    #[error("requested {requested} samples but the pool holds {available}")]
    InsufficientPool { requested: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A labelled raw review. `label` is true for the positive class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub text: String,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Word-id sequence with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub ids: Vec<usize>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub samples: Vec<Sample>,
}

impl Corpus {
    /// Tokenizes and encodes reviews. A review with no tokens becomes a single
    /// `[unk]` so every sequence is non-empty.
    pub fn encode(reviews: &[Review], vocab: &Vocabulary, split: Split) -> Self {
        let samples = reviews
            .iter()
            .map(|r| {
                let mut ids = vocab.encode_ids(&tokenize(&r.text));
                if ids.is_empty() {
                    ids.push(vocab.unk_id());
                }
                Sample { ids, label: r.label }
            })
            .collect();
        Self { split, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        positive_fraction(&self.samples, |s| s.label)
    }
}

pub fn positive_fraction<T>(items: &[T], label: impl Fn(&T) -> bool) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().filter(|x| label(x)).count() as f64 / items.len() as f64
}

/// Builds the vocabulary from the training reviews only.
pub fn build_vocab(train: &[Review], min_frequency: usize) -> Vocabulary {
    Vocabulary::build(train.iter().map(|r| tokenize(&r.text)), min_frequency)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let entries = fs::read_dir(dir).map_err(|e| DataError::Path {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Reads `<root>/<split>/pos/*` and `<root>/<split>/neg/*`, one review per
/// file, in file-name order (positives first).
pub fn load_imdb_split(root: &Path, split: &str) -> Result<Vec<Review>, DataError> {
    let mut out = Vec::new();
    for (sub, label) in [("pos", true), ("neg", false)] {
        for path in read_dir_sorted(&root.join(split).join(sub))? {
            let text = fs::read_to_string(&path).map_err(|e| DataError::Path {
                path: path.display().to_string(),
                source: e,
            })?;
            out.push(Review { text, label });
        }
    }
    if out.is_empty() {
        return Err(DataError::Empty(root.join(split).display().to_string()));
    }
    Ok(out)
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "pos" | "positive" => Some(true),
        "0" | "neg" | "negative" => Some(false),
        _ => None,
    }
}

/// Parses `label \t text` lines. Labels are `0`/`1` or `neg`/`pos`; blank
/// lines are skipped.
pub fn parse_tsv<R: BufRead>(input: R) -> Result<Vec<Review>, DataError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| DataError::MalformedLine {
            line: n + 1,
            reason: "expected `label<TAB>text`".into(),
        })?;
        let label = parse_label(label).ok_or_else(|| DataError::MalformedLine {
            line: n + 1,
            reason: format!("unknown label {label:?}"),
        })?;
        out.push(Review {
            text: text.to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_tsv(path: &Path) -> Result<Vec<Review>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::Path {
        path: path.display().to_string(),
        source: e,
    })?;
    let reviews = parse_tsv(BufReader::new(file))?;
    if reviews.is_empty() {
        return Err(DataError::Empty(path.display().to_string()));
    }
    Ok(reviews)
}

/// Writes reviews as TSV. Tabs and newlines inside the text become spaces.
pub fn write_tsv<W: Write>(reviews: &[Review], mut out: W) -> std::io::Result<()> {
    for r in reviews {
        let text: String = r
            .text
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        writeln!(out, "{}\t{}", u8::from(r.label), text)?;
    }
    Ok(())
}

/// Seeded, label-stratified split of `pool` into disjoint `(train, validation)`
/// sets of the requested sizes. Each class is shuffled and dealt in
/// proportion to its share of the pool, so both splits keep the pool's label
/// balance up to rounding. Elements beyond `train + validation` are unused.
pub fn split_dataset<T: Clone>(
    pool: &[T],
    label: impl Fn(&T) -> bool,
    train: usize,
    validation: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    let requested = train + validation;
    if requested > pool.len() {
        return Err(DataError::InsufficientPool {
            requested,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..pool.len()).partition(|&i| label(&pool[i]));
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let share = pos.len() as f64 / pool.len().max(1) as f64;
    let deal = |size: usize, pos_left: usize, neg_left: usize| -> usize {
        let want = (size as f64 * share).round() as usize;
        want.min(pos_left).max(size.saturating_sub(neg_left))
    };
    let train_pos = deal(train, pos.len(), neg.len());
    let val_pos = deal(validation, pos.len() - train_pos, neg.len() - (train - train_pos));
    let train_neg = train - train_pos;
    let val_neg = validation - val_pos;

    let pick = |idx: &[usize]| idx.iter().map(|&i| pool[i].clone()).collect::<Vec<_>>();
    let mut tr = pick(&pos[..train_pos]);
    tr.extend(pick(&neg[..train_neg]));
    let mut va = pick(&pos[train_pos..train_pos + val_pos]);
    va.extend(pick(&neg[train_neg..train_neg + val_neg]));
    tr.shuffle(&mut rng);
    va.shuffle(&mut rng);
    Ok((tr, va))
}

/// Stratified subsample of `n` elements (the train half of [`split_dataset`]).
pub fn subsample<T: Clone>(pool: &[T], label: impl Fn(&T) -> bool, n: usize, seed: u64) -> Result<Vec<T>, DataError> {
    split_dataset(pool, label, n, 0, seed).map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;
    use std::io::Cursor;

    fn pool(n: usize, pos_every: usize) -> Vec<(usize, bool)> {
        (0..n).map(|i| (i, i % pos_every == 0)).collect()
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let reviews = vec![
            Review { text: "Great\tfilm".into(), label: true },
            Review { text: "Dull.".into(), label: false },
        ];
        let mut buf = Vec::new();
        write_tsv(&reviews, &mut buf).unwrap();
        let back = parse_tsv(Cursor::new(buf)).unwrap();
        assert_eq!(back[0].text, "Great film");
        assert_eq!(back[1], reviews[1]);
        assert!(matches!(parse_tsv(Cursor::new("x\tfoo\n")), Err(DataError::MalformedLine { line: 1, .. })));
        assert!(matches!(
            parse_tsv(Cursor::new("1\tok\nno tab\n")),
            Err(DataError::MalformedLine { line: 2, .. })
        ));
        assert_eq!(parse_tsv(Cursor::new("pos\ta\nneg\tb\n")).unwrap().len(), 2);
    }

    #[test]
    fn imdb_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (sub, name, text) in [("pos", "1_9.txt", "Loved it"), ("neg", "2_1.txt", "Hated it"), ("pos", "0_8.txt", "Fine")] {
            let d = dir.path().join("train").join(sub);
            fs::create_dir_all(&d).unwrap();
            fs::write(d.join(name), text).unwrap();
        }
        let r = load_imdb_split(dir.path(), "train").unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!((r[0].text.as_str(), r[0].label), ("Fine", true));
        assert_eq!((r[2].text.as_str(), r[2].label), ("Hated it", false));
        assert!(matches!(load_imdb_split(dir.path(), "test"), Err(DataError::Path { .. })));
    }

    #[test]
    fn encode_maps_unknown_and_empty() {
        let train = vec![Review { text: "good good bad".into(), label: true }];
        let vocab = build_vocab(&train, 1);
        let c = Corpus::encode(
            &[Review { text: "good zzz".into(), label: true }, Review { text: "".into(), label: false }],
            &vocab,
            Split::Test,
        );
        assert_eq!(c.samples[0].ids, vec![vocab.id("good").unwrap(), vocab.unk_id()]);
        assert_eq!(c.samples[1].ids, vec![vocab.unk_id()]);
    }

    #[test]
    fn reference_split_sizes() {
        let p = pool(25_000, 2);
        let (tr, va) = split_dataset(&p, |x| x.1, 17_500, 7_500, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (17_500, 7_500));
        assert!((positive_fraction(&tr, |x| x.1) - positive_fraction(&va, |x| x.1)).abs() <= 0.01);
    }

    #[test]
    fn exhaustive_split_and_insufficient_pool() {
        let p = pool(30, 3);
        let (tr, va) = split_dataset(&p, |x| x.1, 20, 10, 5).unwrap();
        let ids: HashSet<usize> = tr.iter().chain(&va).map(|x| x.0).collect();
        assert_eq!(ids.len(), 30);
        assert!(matches!(
            split_dataset(&p, |x| x.1, 20, 11, 5),
            Err(DataError::InsufficientPool { requested: 31, available: 30 })
        ));
    }

    proptest! {
        #[test]
        fn split_is_disjoint_deterministic_and_balanced(
            n in 10usize..400,
            pos_every in 1usize..5,
            frac in 0.1f64..0.9,
            seed in any::<u64>(),
        ) {
            let p = pool(n, pos_every);
            let train = ((n as f64) * frac) as usize;
            let validation = n - train;
            let (tr, va) = split_dataset(&p, |x| x.1, train, validation, seed).unwrap();
            let (tr2, va2) = split_dataset(&p, |x| x.1, train, validation, seed).unwrap();
            prop_assert_eq!(&tr, &tr2);
            prop_assert_eq!(&va, &va2);
            prop_assert_eq!(tr.len(), train);
            prop_assert_eq!(va.len(), validation);
            let a: HashSet<usize> = tr.iter().map(|x| x.0).collect();
            let b: HashSet<usize> = va.iter().map(|x| x.0).collect();
            prop_assert!(a.is_disjoint(&b));
            prop_assert_eq!(a.len() + b.len(), n);
            // Rounding can move one sample per class between the splits.
            let slack = 1.0 / train.min(validation).max(1) as f64;
            let gap = (positive_fraction(&tr, |x| x.1) - positive_fraction(&va, |x| x.1)).abs();
            prop_assert!(gap <= slack + 1e-12, "gap {gap} slack {slack}");
        }
    }
}
