//! Constrained bag-of-embeddings classifier shared by both training paths.
//!
//! All weights live in `[0, 1]` so they can be stored as normalized
//! conductances and so the pooled sentence vector is a valid firing rate.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("word id {id} outside vocabulary of {vocab}")]
    UnknownId { id: usize, vocab: usize },
    #[error("sentence has no tokens after dropping padding")]
    EmptySentence,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Adagrad hyperparameters: `s += g^2; theta -= eta g / (sqrt(s) + eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adagrad<S> {
    pub eta: S,
    pub epsilon: S,
}

impl<S: Scalar> Adagrad<S> {
    pub fn new(eta: S, epsilon: S) -> Self {
        Self { eta, epsilon }
    }

    /// In-place update followed by clipping to `[0, 1]`.
    pub fn step(&self, theta: &mut [S], accum: &mut [S], grad: &[S]) {
        debug_assert_eq!(theta.len(), grad.len());
        debug_assert_eq!(accum.len(), grad.len());
        for ((t, s), &g) in theta.iter_mut().zip(accum.iter_mut()).zip(grad) {
            *s += g * g;
            let next = *t - self.eta * g / (s.sqrt() + self.epsilon);
            *t = next.max(S::zero()).min(S::one());
        }
    }
}

/// Embedding table, linear read-out and their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<S> {
    vocab: usize,
    dim: usize,
    /// Row-major `vocab x dim`.
    pub embedding: Vec<S>,
    /// One weight per embedding dimension (single output).
    pub linear: Vec<S>,
    pub adagrad_s_embedding: Vec<S>,
    pub adagrad_s_linear: Vec<S>,
    pub optimizer: Adagrad<S>,
    /// Id whose rows are excluded from pooling.
    pub pad_id: Option<usize>,
}

impl<S: Scalar> NetworkParams<S> {
    pub fn new(embedding: Vec<S>, vocab: usize, dim: usize, linear: Vec<S>, optimizer: Adagrad<S>) -> Result<Self, NetError> {
        if embedding.len() != vocab * dim {
            return Err(NetError::Shape(format!(
                "embedding has {} values, expected {vocab} x {dim}",
                embedding.len()
            )));
        }
        if linear.len() != dim {
            return Err(NetError::Shape(format!("linear layer has {} weights, expected {dim}", linear.len())));
        }
        let clip = |v: S| v.max(S::zero()).min(S::one());
        Ok(Self {
            vocab,
            dim,
            embedding: embedding.into_iter().map(clip).collect(),
            linear: linear.into_iter().map(clip).collect(),
            adagrad_s_embedding: vec![S::zero(); vocab * dim],
            adagrad_s_linear: vec![S::zero(); dim],
            optimizer,
            pad_id: None,
        })
    }

    /// Uniform `[0, 1)` initialization of both layers.
    pub fn random<R: Rng + ?Sized>(vocab: usize, dim: usize, optimizer: Adagrad<S>, rng: &mut R) -> Self {
        let embedding = (0..vocab * dim).map(|_| S::uniform(rng)).collect();
        let linear = (0..dim).map(|_| S::uniform(rng)).collect();
        Self::new(embedding, vocab, dim, linear, optimizer).expect("shapes are consistent")
    }

    pub fn with_pad(mut self, pad_id: usize) -> Self {
        self.pad_id = Some(pad_id);
        self
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: usize) -> &[S] {
        &self.embedding[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [S] {
        &mut self.embedding[id * self.dim..(id + 1) * self.dim]
    }

    /// Number of non-padding positions, after validating every id.
    fn effective_len(&self, word_ids: &[usize]) -> Result<usize, NetError> {
        let mut n = 0;
        for &id in word_ids {
            if id >= self.vocab {
                return Err(NetError::UnknownId { id, vocab: self.vocab });
            }
            if Some(id) != self.pad_id {
                n += 1;
            }
        }
        if n == 0 {
            return Err(NetError::EmptySentence);
        }
        Ok(n)
    }

    /// Mean of the embedding rows of the non-padding ids.
    pub fn embed_and_pool(&self, word_ids: &[usize]) -> Result<Vec<S>, NetError> {
        let n = self.effective_len(word_ids)?;
        let mut acc = vec![S::zero(); self.dim];
        for &id in word_ids.iter().filter(|&&id| Some(id) != self.pad_id) {
            for (a, &e) in acc.iter_mut().zip(self.row(id)) {
                *a += e;
            }
        }
        let inv = S::from_usize_lossy(n).recip();
        for a in &mut acc {
            *a = (*a * inv).min(S::one());
        }
        Ok(acc)
    }

    /// Adagrad step on the read-out weights.
    pub fn update_linear(&mut self, grad: &[S]) {
        let opt = self.optimizer;
        opt.step(&mut self.linear, &mut self.adagrad_s_linear, grad);
    }

    /// Adagrad step on the embedding rows touched by a sparse gradient.
    pub fn update_embedding(&mut self, grad: &SparseRows<S>) {
        let opt = self.optimizer;
        let dim = self.dim;
        for (&id, g) in &grad.rows {
            let range = id * dim..(id + 1) * dim;
            opt.step(&mut self.embedding[range.clone()], &mut self.adagrad_s_embedding[range], g);
        }
    }

    /// Text checkpoint: a header line `memsnn-params,<format>,<v>,<e>,<o>`,
    /// then `v` embedding rows and one linear row, comma separated.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<(), NetError> {
        writeln!(out, "memsnn-params,1,{},{},1", self.vocab, self.dim)?;
        let join = |xs: &[S]| xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        for id in 0..self.vocab {
            writeln!(out, "{}", join(self.row(id)))?;
        }
        writeln!(out, "{}", join(&self.linear))?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R, optimizer: Adagrad<S>) -> Result<Self, NetError> {
        let mut lines = input.lines();
        let bad = |line: usize, reason: &str| NetError::Checkpoint {
            line,
            reason: reason.to_string(),
        };
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))??;
        let fields: Vec<&str> = header.trim().split(',').collect();
        if fields.len() != 5 || fields[0] != "memsnn-params" {
            return Err(bad(1, "missing memsnn-params header"));
        }
        if fields[1] != "1" {
            return Err(bad(1, "unsupported format version"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(1, "bad shape field"));
        let (vocab, dim, outputs) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
        if outputs != 1 {
            return Err(bad(1, "only single-output checkpoints are supported"));
        }
        let mut parse_row = |lineno: usize| -> Result<Vec<S>, NetError> {
            let line = lines.next().ok_or_else(|| bad(lineno, "unexpected end of file"))??;
            let row = line
                .trim()
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map(S::lit).map_err(|_| bad(lineno, "bad number")))
                .collect::<Result<Vec<S>, _>>()?;
            if row.len() != dim {
                return Err(bad(lineno, &format!("expected {dim} values, found {}", row.len())));
            }
            Ok(row)
        };
        let mut embedding = Vec::with_capacity(vocab * dim);
        for id in 0..vocab {
            embedding.extend(parse_row(id + 2)?);
        }
        let linear = parse_row(vocab + 2)?;
        Self::new(embedding, vocab, dim, linear, optimizer)
    }
}

/// `V_c = sum_i W_s[i] x_c[i]`.
pub fn linear_forward<S: Scalar>(x_c: &[S], weights: &[S]) -> S {
    x_c.iter().zip(weights).fold(S::zero(), |acc, (&x, &w)| acc + x * w)
}

/// `sigmoid(v + C)`, computed without overflow for large `|v + C|`.
pub fn output_probability<S: Scalar>(v: S, offset: S) -> S {
    let a = v + offset;
    if a >= S::zero() {
        (S::one() + (-a).exp()).recip()
    } else {
        let e = a.exp();
        e / (S::one() + e)
    }
}

/// Binary cross-entropy `-(l ln y + (1 - l) ln(1 - y))`. `y` is clamped away
/// from 0 and 1 so the loss stays finite.
pub fn bce_loss<S: Scalar>(y: S, label: bool) -> S {
    let tiny = S::lit(1e-12).max(S::epsilon());
    let y = y.max(tiny).min(S::one() - tiny);
    if label {
        -y.ln()
    } else {
        -(S::one() - y).ln()
    }
}

#[inline]
fn label_value<S: Scalar>(label: bool) -> S {
    if label {
        S::one()
    } else {
        S::zero()
    }
}

/// Read-out gradient `(y - label) x_c`.
pub fn grad_linear<S: Scalar>(y: S, label: bool, x_c: &[S]) -> Vec<S> {
    let delta = y - label_value::<S>(label);
    x_c.iter().map(|&x| delta * x).collect()
}

/// Sparse per-row gradient over the embedding table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows<S> {
    pub rows: BTreeMap<usize, Vec<S>>,
}

/// Embedding gradient `(y - label) W_s / n` for every non-padding occurrence,
/// `n` being the number of non-padding positions. Repeated ids accumulate.
pub fn grad_embedding<S: Scalar>(
    y: S,
    label: bool,
    linear: &[S],
    word_ids: &[usize],
    pad_id: Option<usize>,
) -> SparseRows<S> {
    let n = word_ids.iter().filter(|&&id| Some(id) != pad_id).count();
    let mut out = SparseRows::default();
    if n == 0 {
        return out;
    }
    let scale = (y - label_value::<S>(label)) / S::from_usize_lossy(n);
    for &id in word_ids.iter().filter(|&&id| Some(id) != pad_id) {
        let row = out.rows.entry(id).or_insert_with(|| vec![S::zero(); linear.len()]);
        for (r, &w) in row.iter_mut().zip(linear) {
            *r += scale * w;
        }
    }
    out
}

/// Result of one ANN-mode training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<S> {
    pub y: S,
    pub loss: S,
}

/// Forward, loss and Adagrad update of both layers for one sentence in ANN
/// mode (`y = sigmoid(V_c + C)`).
pub fn ann_train_step<S: Scalar>(
    params: &mut NetworkParams<S>,
    word_ids: &[usize],
    label: bool,
    offset: S,
) -> Result<StepOutcome<S>, NetError> {
    let x_c = params.embed_and_pool(word_ids)?;
    let v_c = linear_forward(&x_c, &params.linear);
    let y = output_probability(v_c, offset);
    let loss = bce_loss(y, label);
    let g_s = grad_linear(y, label, &x_c);
    let g_e = grad_embedding(y, label, &params.linear, word_ids, params.pad_id);
    params.update_linear(&g_s);
    params.update_embedding(&g_e);
    Ok(StepOutcome { y, loss })
}
