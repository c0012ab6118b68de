use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DataSource, ExperimentConfig};
use super::PipelineError;
use crate::textdata::{
    self, build_vocab, load_word_vectors_file, Corpus, DataError, Review, Split, Vocabulary, WordVectors,
};

/// What the network pools into `x_c`.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// Word ids, mean-pooled through the embedding table.
    Tokens(Vec<usize>),
    /// A ready-made `x_c` in `[0, 1]`.
    Features(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Input,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    /// `None` for the feature task.
    pub vocab: Option<Vocabulary>,
    /// Row-major `vocab x e` starting embedding in `[0, 1]`.
    pub embedding: Vec<f64>,
    /// Vocabulary rows found in the vector file, if one was given.
    pub vectors_found: Option<usize>,
}

impl Dataset {
    pub fn vocab_len(&self) -> usize {
        self.vocab.as_ref().map_or(0, Vocabulary::len)
    }
}

fn examples(corpus: Corpus) -> Vec<Example> {
    corpus
        .samples
        .into_iter()
        .map(|s| Example {
            input: Input::Tokens(s.ids),
            label: s.label,
        })
        .collect()
}

/// Separable 2-feature task: `x = (f, 1 - f)` with `f` uniform on `[0, 1]`,
/// label `f > 0.5`, points with `|f - 0.5| < margin / 2` rejected. The pair
/// sums to 1, so the class boundary is reachable with non-negative weights
/// and a fixed threshold.
pub fn feature_examples(n: usize, margin: f64, rng: &mut impl Rng) -> Vec<Example> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let f: f64 = rng.gen();
        if (f - 0.5).abs() < margin / 2.0 {
            continue;
        }
        out.push(Example {
            input: Input::Features(vec![f, 1.0 - f]),
            label: f > 0.5,
        });
    }
    out
}

/// Loads, subsamples and encodes the configured data. `init` seeds the
/// embedding rows that have no pre-trained vector.
pub fn load_dataset(cfg: &ExperimentConfig, init: &mut ChaCha8Rng) -> Result<Dataset, PipelineError> {
    let d = &cfg.data;
    let (train_pool, test_pool) = match d.source {
        DataSource::Features => {
            let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
            let train = feature_examples(d.train_size, d.margin, &mut rng);
            let validation = feature_examples(d.validation_size, d.margin, &mut rng);
            let test = feature_examples(d.test_size, d.margin, &mut rng);
            return Ok(Dataset {
                train,
                validation,
                test,
                vocab: None,
                embedding: Vec::new(),
                vectors_found: None,
            });
        }
        DataSource::Imdb => {
            let root = d.path.as_deref().expect("validated");
            (textdata::load_imdb_split(root, "train")?, textdata::load_imdb_split(root, "test")?)
        }
        DataSource::Tsv => (
            textdata::load_tsv(d.train_path.as_deref().expect("validated"))?,
            textdata::load_tsv(d.test_path.as_deref().expect("validated"))?,
        ),
        DataSource::SyntheticText => {
            // Independent generator seeds for the two pools keep them disjoint
            // in draws, like separate train/test downloads.
            let g = &d.synthetic;
            (
                g.generate(d.train_size + d.validation_size, d.seed),
                g.generate(d.test_size, d.seed ^ 0x5eed_7e57),
            )
        }
    };
    let (train, validation) = textdata::split_dataset(&train_pool, |r: &Review| r.label, d.train_size, d.validation_size, d.seed)?;
    let test = textdata::subsample(&test_pool, |r: &Review| r.label, d.test_size, d.seed.wrapping_add(1))?;
    if train.is_empty() {
        return Err(DataError::Empty("training split".into()).into());
    }

    let vocab = build_vocab(&train, d.min_frequency);
    let dim = cfg.model.embedding_dim;
    let vectors = match &d.vectors {
        Some(p) => load_word_vectors_file(p, &vocab, dim)?,
        None => WordVectors {
            dim,
            rows: vec![None; vocab.len()],
        },
    };
    let vectors_found = d.vectors.as_ref().map(|_| vectors.found());
    let embedding = vectors.normalized_embedding(&vocab, init);

    Ok(Dataset {
        train: examples(Corpus::encode(&train, &vocab, Split::Train)),
        validation: examples(Corpus::encode(&validation, &vocab, Split::Validation)),
        test: examples(Corpus::encode(&test, &vocab, Split::Test)),
        vocab: Some(vocab),
        embedding,
        vectors_found,
    })
}
