use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crossbar::{ProgramPolicy, ResistanceBounds};
use crate::device_model::DeviceParams;
use crate::textdata::synthetic::SyntheticReviews;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn field(name: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// `<path>/train/{pos,neg}` and `<path>/test/{pos,neg}`.
    Imdb,
    /// `train_path` and `test_path`, one `label \t text` per line.
    Tsv,
    /// Generated polar reviews.
    SyntheticText,
    /// Complementary feature pair `(f, 1 - f)`, positive iff `f > 0.5`.
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    /// Optional `token v1 .. v_e` text file for embedding initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<PathBuf>,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub min_frequency: usize,
    /// Expected vocabulary size; reported next to the built one, not enforced.
    pub vocab_size: usize,
    /// Seed for subsampling, splitting and synthetic generation. Kept apart
    /// from the run seed so every run sees the same data.
    #[serde(default)]
    pub seed: u64,
    /// Width of the excluded band around `f = 0.5` in the feature task.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub synthetic: SyntheticReviews,
}

fn default_margin() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding dimension `e`.
    pub embedding_dim: usize,
    /// Output dimension `o`.
    pub outputs: usize,
    pub batch_size: usize,
    /// Offset `C` inside the training sigmoid.
    pub offset: f64,
    pub eta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnnConfig {
    /// Spike-train length `T`.
    pub steps: usize,
    pub v_th: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossbarConfig {
    pub rows: usize,
    pub cols: usize,
    pub positive_voltage: f64,
    pub positive_widths_us: Vec<f64>,
    pub negative_voltage: f64,
    pub negative_widths_us: Vec<f64>,
    pub r_tolerance: f64,
    pub max_n: usize,
    pub read_noise: f64,
    /// Allows pulse lists other than the approach's reference lists.
    #[serde(default)]
    pub custom_pulses: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Training samples between weight-trace records.
    pub trace_every: usize,
    /// Keep per-pulse programming events (trace samples only for approach 2).
    pub programming_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trace_every: 175,
            programming_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub approach: u8,
    pub seed: u64,
    pub epochs: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub snn: SnnConfig,
    pub device: DeviceParams<f64>,
    pub crossbar: CrossbarConfig,
    #[serde(default)]
    pub run: RunConfig,
}

const APPROACH1_POS_US: [f64; 6] = [1.0, 2.0, 10.0, 20.0, 50.0, 100.0];
const APPROACH1_NEG_US: [f64; 8] = [1.0, 2.0, 10.0, 20.0, 100.0, 1000.0, 2000.0, 5000.0];
const APPROACH2_POS_US: [f64; 5] = [1.0, 2.0, 10.0, 20.0, 50.0];
const APPROACH2_NEG_US: [f64; 5] = [1.0, 2.0, 10.0, 20.0, 100.0];

/// Reference pulse widths (positive, negative) in microseconds.
pub fn reference_widths(approach: u8) -> (&'static [f64], &'static [f64]) {
    if approach == 2 {
        (&APPROACH2_POS_US, &APPROACH2_NEG_US)
    } else {
        (&APPROACH1_POS_US, &APPROACH1_NEG_US)
    }
}

impl ExperimentConfig {
    /// Baseline configuration for approach 1 or 2 on the full IMDB data set.
    pub fn baseline(approach: u8) -> Self {
        let (pos, neg) = reference_widths(approach);
        let (offset, v_th) = if approach == 2 { (-0.5, 56.75) } else { (-25.0, 50.0) };
        Self {
            approach,
            seed: 0,
            epochs: 5,
            data: DataConfig {
                source: DataSource::Imdb,
                path: Some(PathBuf::from("data/aclImdb")),
                train_path: None,
                test_path: None,
                vectors: None,
                train_size: 17_500,
                validation_size: 7_500,
                test_size: 25_000,
                min_frequency: 10,
                vocab_size: 20_473,
                seed: 0,
                margin: default_margin(),
                synthetic: SyntheticReviews::default(),
            },
            model: ModelConfig {
                embedding_dim: 100,
                outputs: 1,
                batch_size: 1,
                offset,
                eta: 0.05,
                epsilon: 1e-8,
            },
            snn: SnnConfig { steps: 1000, v_th },
            device: DeviceParams::reference(),
            crossbar: CrossbarConfig {
                rows: 10,
                cols: 10,
                positive_voltage: 0.9,
                positive_widths_us: pos.to_vec(),
                negative_voltage: -1.2,
                negative_widths_us: neg.to_vec(),
                r_tolerance: 0.0005,
                max_n: 5,
                read_noise: 0.0,
                custom_pulses: false,
            },
            run: RunConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate_paths()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Relative data paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.data.path,
            &mut self.data.train_path,
            &mut self.data.test_path,
            &mut self.data.vectors,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Field-level checks that do not touch the file system.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.approach == 1 || self.approach == 2) {
            return Err(field("approach", format!("must be 1 or 2, got {}", self.approach)));
        }
        if self.epochs == 0 {
            return Err(field("epochs", "must be >= 1"));
        }
        let d = &self.data;
        match d.source {
            DataSource::Imdb if d.path.is_none() => return Err(field("data.path", "required for source = \"imdb\"")),
            DataSource::Tsv if d.train_path.is_none() => {
                return Err(field("data.train_path", "required for source = \"tsv\""))
            }
            DataSource::Tsv if d.test_path.is_none() => return Err(field("data.test_path", "required for source = \"tsv\"")),
            _ => {}
        }
        if d.train_size == 0 {
            return Err(field("data.train_size", "must be >= 1"));
        }
        if d.test_size == 0 {
            return Err(field("data.test_size", "must be >= 1"));
        }
        if d.min_frequency == 0 {
            return Err(field("data.min_frequency", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&d.margin) {
            return Err(field("data.margin", "must lie in [0, 1)"));
        }
        let s = &d.synthetic;
        if s.neutral_words == 0 || s.polar_words == 0 || s.min_len == 0 || s.min_len > s.max_len {
            return Err(field("data.synthetic", "needs non-empty lexicons and 0 < min_len <= max_len"));
        }
        if !(0.0..=1.0).contains(&s.sentiment_rate) || !(0.0 <= s.clarity.0 && s.clarity.0 <= s.clarity.1 && s.clarity.1 <= 1.0) {
            return Err(field("data.synthetic", "rates must lie in [0, 1]"));
        }

        let m = &self.model;
        if m.embedding_dim == 0 {
            return Err(field("model.embedding_dim", "must be >= 1"));
        }
        if m.outputs != 1 {
            return Err(field("model.outputs", "only a single output is supported"));
        }
        if m.batch_size != 1 {
            return Err(field("model.batch_size", "only batch size 1 is supported"));
        }
        if !m.offset.is_finite() {
            return Err(field("model.offset", "must be finite"));
        }
        if !(m.eta > 0.0 && m.eta.is_finite()) {
            return Err(field("model.eta", "must be > 0"));
        }
        if !(m.epsilon > 0.0 && m.epsilon.is_finite()) {
            return Err(field("model.epsilon", "must be > 0"));
        }
        if self.snn.steps == 0 {
            return Err(field("snn.steps", "must be >= 1"));
        }
        if !(self.snn.v_th > 0.0 && self.snn.v_th.is_finite()) {
            return Err(field("snn.v_th", "must be > 0"));
        }
        self.device.validate().map_err(|e| field("device", e.to_string()))?;

        let c = &self.crossbar;
        if c.rows == 0 || c.cols == 0 {
            return Err(field("crossbar.rows", "array must have at least one device"));
        }
        if self.input_dim() > c.rows * c.cols {
            return Err(field(
                "crossbar.rows",
                format!("{} synapses do not fit a {}x{} array", self.input_dim(), c.rows, c.cols),
            ));
        }
        if !(c.r_tolerance > 0.0 && c.r_tolerance < 1.0) {
            return Err(field("crossbar.r_tolerance", "must lie in (0, 1)"));
        }
        if c.max_n == 0 {
            return Err(field("crossbar.max_n", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&c.read_noise) {
            return Err(field("crossbar.read_noise", "must lie in [0, 1)"));
        }
        if !(c.positive_voltage > 0.0) {
            return Err(field("crossbar.positive_voltage", "must be > 0"));
        }
        if !(c.negative_voltage < 0.0) {
            return Err(field("crossbar.negative_voltage", "must be < 0"));
        }
        for (name, widths) in [
            ("crossbar.positive_widths_us", &c.positive_widths_us),
            ("crossbar.negative_widths_us", &c.negative_widths_us),
        ] {
            if widths.is_empty() {
                return Err(field(name, "must not be empty"));
            }
            if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(field(name, "widths must be > 0"));
            }
        }
        if !c.custom_pulses {
            let (pos, neg) = reference_widths(self.approach);
            let same = |a: &[f64], b: &[f64]| {
                let mut a = a.to_vec();
                a.sort_by(f64::total_cmp);
                a == b
            };
            if !same(&c.positive_widths_us, pos) {
                return Err(field(
                    "crossbar.positive_widths_us",
                    format!("approach {} uses {pos:?}; set crossbar.custom_pulses = true to change it", self.approach),
                ));
            }
            if !same(&c.negative_widths_us, neg) {
                return Err(field(
                    "crossbar.negative_widths_us",
                    format!("approach {} uses {neg:?}; set crossbar.custom_pulses = true to change it", self.approach),
                ));
            }
        }
        if self.run.trace_every == 0 {
            return Err(field("run.trace_every", "must be >= 1"));
        }
        Ok(())
    }

    /// Checks that configured data files exist.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        let d = &self.data;
        let check = |name: &str, p: &Option<PathBuf>| match p {
            Some(p) if !p.exists() => Err(field(name, format!("{} does not exist", p.display()))),
            _ => Ok(()),
        };
        match d.source {
            DataSource::Imdb => check("data.path", &d.path)?,
            DataSource::Tsv => {
                check("data.train_path", &d.train_path)?;
                check("data.test_path", &d.test_path)?;
            }
            _ => {}
        }
        check("data.vectors", &d.vectors)
    }

    /// Number of synapses of the read-out layer.
    pub fn input_dim(&self) -> usize {
        match self.data.source {
            DataSource::Features => 2,
            _ => self.model.embedding_dim,
        }
    }

    pub fn policy(&self) -> Result<ProgramPolicy<f64>, ConfigError> {
        let c = &self.crossbar;
        ProgramPolicy::from_widths(
            c.positive_voltage,
            &c.positive_widths_us,
            c.negative_voltage,
            &c.negative_widths_us,
            c.r_tolerance,
            c.max_n,
        )
        .map_err(|e| field("crossbar", e.to_string()))
    }

    pub fn bounds(&self) -> Result<ResistanceBounds<f64>, ConfigError> {
        let policy = self.policy()?;
        ResistanceBounds::from_pulses(&self.device, policy.all_pulses()).map_err(|e| field("crossbar", e.to_string()))
    }

    /// Offset inside the sigmoid that turns a firing rate into a probability.
    pub fn snn_offset(&self) -> f64 {
        if self.approach == 2 {
            self.model.offset
        } else {
            -0.5
        }
    }

    /// SHA-256 of the canonical JSON form (keys sorted), so the value does not
    /// depend on field order in the source file.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sets a dotted `key=value` in a TOML table. The value is parsed as a TOML
/// literal when possible (`0.03`, `[1, 2]`, `true`) and as a bare string
/// otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| field(key, format!("{part} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines_validate_and_round_trip() {
        for a in [1, 2] {
            let cfg = ExperimentConfig::baseline(a);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), &[]).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.fingerprint(), cfg.fingerprint());
        }
    }

    #[test]
    fn baseline_values() {
        let a1 = ExperimentConfig::baseline(1);
        assert_eq!((a1.snn.v_th, a1.model.offset, a1.crossbar.max_n), (50.0, -25.0, 5));
        let a2 = ExperimentConfig::baseline(2);
        assert_eq!((a2.snn.v_th, a2.model.offset), (56.75, -0.5));
        assert_eq!(a2.crossbar.negative_widths_us, vec![1.0, 2.0, 10.0, 20.0, 100.0]);
        let b = a1.bounds().unwrap();
        assert!((b.r_max - 18_913.3).abs() < 1e-6 && (b.r_min - 2_230.4).abs() < 1e-6);
    }

    #[test]
    fn overrides_apply_and_change_fingerprint() {
        let base = ExperimentConfig::baseline(1);
        let text = base.to_toml_string();
        let cfg = ExperimentConfig::from_toml_str(&text, &["crossbar.r_tolerance=0.2".into(), "seed=9".into()]).unwrap();
        assert_eq!(cfg.crossbar.r_tolerance, 0.2);
        assert_eq!(cfg.seed, 9);
        assert_ne!(cfg.fingerprint(), base.fingerprint());
        let cfg = ExperimentConfig::from_toml_str(&text, &["data.source=synthetic-text".into()]).unwrap();
        assert_eq!(cfg.data.source, DataSource::SyntheticText);
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text, &["nonsense".into()]),
            Err(ConfigError::Override(_))
        ));
    }

    #[test]
    fn fingerprint_ignores_field_order() {
        let base = ExperimentConfig::baseline(1);
        let text = base.to_toml_string();
        // Same content with the top-level scalars moved after the sections.
        let (head, tail) = text.split_at(text.find("[data]").unwrap());
        let reordered = format!("{tail}\n");
        let mut reordered_table: toml::Table = reordered.parse().unwrap();
        let head_table: toml::Table = head.parse().unwrap();
        reordered_table.extend(head_table);
        let cfg = ExperimentConfig::from_toml_str(&toml::to_string(&reordered_table).unwrap(), &[]).unwrap();
        assert_eq!(cfg.fingerprint(), base.fingerprint());
    }

    #[test]
    fn field_level_errors() {
        let text = ExperimentConfig::baseline(1).to_toml_string();
        let err = |o: &str| match ExperimentConfig::from_toml_str(&text, &[o.to_string()]) {
            Err(ConfigError::Field { field, .. }) => field,
            other => panic!("{o}: {other:?}"),
        };
        assert_eq!(err("approach=3"), "approach");
        assert_eq!(err("crossbar.r_tolerance=0"), "crossbar.r_tolerance");
        assert_eq!(err("crossbar.read_noise=1.5"), "crossbar.read_noise");
        assert_eq!(err("snn.steps=0"), "snn.steps");
        assert_eq!(err("model.embedding_dim=101"), "crossbar.rows");
        assert_eq!(err("crossbar.positive_widths_us=[1.0, 2.0]"), "crossbar.positive_widths_us");
        assert_eq!(err("approach=2"), "crossbar.positive_widths_us");
        assert!(ExperimentConfig::from_toml_str(&text, &["crossbar.custom_pulses=true".into(), "approach=2".into()]).is_ok());
    }

    #[test]
    fn missing_dataset_path_names_the_field() {
        let mut cfg = ExperimentConfig::baseline(1);
        cfg.data.path = None;
        match cfg.validate() {
            Err(ConfigError::Field { field, .. }) => assert_eq!(field, "data.path"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::baseline(1);
        cfg.data.path = Some(PathBuf::from("/definitely/not/here"));
        match cfg.validate_paths() {
            Err(ConfigError::Field { field, .. }) => assert_eq!(field, "data.path"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = ExperimentConfig::baseline(1).to_toml_string();
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text, &["snn.bogus=1".into()]),
            Err(ConfigError::Parse(_))
        ));
    }
}
