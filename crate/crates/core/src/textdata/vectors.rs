use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::{DataError, Vocabulary};

/// Pre-trained vectors aligned to a vocabulary. Rows absent from the file are
/// `None` and get a default at initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    pub dim: usize,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl WordVectors {
    pub fn found(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    /// Embedding table in `[0, 1]`: each dimension min-max normalized over the
    /// rows found in the file. `[unk]` starts at 0.5, `[pad]` at 0 and any other
    /// missing row uniformly at random.
    pub fn normalized_embedding<R: Rng + ?Sized>(&self, vocab: &Vocabulary, rng: &mut R) -> Vec<f64> {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for row in self.rows.iter().flatten() {
            for (d, &x) in row.iter().enumerate() {
                lo[d] = lo[d].min(x);
                hi[d] = hi[d].max(x);
            }
        }
        let mut out = Vec::with_capacity(self.rows.len() * self.dim);
        for (id, row) in self.rows.iter().enumerate() {
            if id == vocab.pad_id() {
                out.extend(std::iter::repeat_n(0.0, self.dim));
                continue;
            }
            match row {
                Some(v) if id != vocab.unk_id() => {
                    for (d, &x) in v.iter().enumerate() {
                        let span = hi[d] - lo[d];
                        out.push(if span > 0.0 { (x - lo[d]) / span } else { 0.5 });
                    }
                }
                _ if id == vocab.unk_id() => out.extend(std::iter::repeat_n(0.5, self.dim)),
                _ => out.extend((0..self.dim).map(|_| rng.gen::<f64>())),
            }
        }
        out
    }
}

/// Reads whitespace-separated `token v1 ... v_dim` lines and keeps the rows of
/// tokens present in `vocab`.
pub fn load_word_vectors<R: BufRead>(input: R, vocab: &Vocabulary, dim: usize) -> Result<WordVectors, DataError> {
    let mut rows = vec![None; vocab.len()];
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else {
            continue;
        };
        let values = parts
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| DataError::MalformedLine {
                line: lineno,
                reason: "non-numeric vector component".into(),
            })?;
        if values.len() != dim {
            return Err(DataError::Dimension {
                line: lineno,
                expected: dim,
                found: values.len(),
            });
        }
        if let Some(id) = vocab.id(token) {
            rows[id] = Some(values);
        }
    }
    Ok(WordVectors { dim, rows })
}

pub fn load_word_vectors_file(path: &Path, vocab: &Vocabulary, dim: usize) -> Result<WordVectors, DataError> {
    let file = File::open(path).map_err(|e| DataError::Path {
        path: path.display().to_string(),
        source: e,
    })?;
    load_word_vectors(BufReader::new(file), vocab, dim)
}
