use std::collections::HashMap;
use std::io::Write;

pub const UNK: &str = "[unk]";
pub const PAD: &str = "[pad]";

/// Frequency-cut vocabulary with `[unk]` at id 0 and `[pad]` at id 1.
///
/// Remaining ids are assigned by descending training-set count, ties broken
/// lexicographically, so the build is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<usize>,
    min_frequency: usize,
}

impl Vocabulary {
    pub fn build<I, D, T>(documents: I, min_frequency: usize) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            for tok in doc {
                *freq.entry(tok.as_ref().to_owned()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(t, c)| *c >= min_frequency && t != UNK && t != PAD)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens = vec![UNK.to_owned(), PAD.to_owned()];
        let mut counts = vec![0, 0];
        for (t, c) in kept {
            tokens.push(t);
            counts.push(c);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            index,
            tokens,
            counts,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        0
    }

    pub fn pad_id(&self) -> usize {
        1
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> usize {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Unknown tokens map to `[unk]`.
    pub fn encode_ids<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(self.unk_id()))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }

    /// `token \t id \t count` per line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{i}\t{}", self.counts[i])?;
        }
        Ok(())
    }
}
