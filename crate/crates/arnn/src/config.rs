//! Flat `key = value` run configuration.
//!
//! Resolution order, later wins: built-in defaults, the config file, then
//! command-line overrides. Unknown keys are rejected and every value is
//! parsed before any command touches the file system.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use arnn_core::data::PreprocessConfig;
use arnn_core::model::{ModelConfig, Profile};
use arnn_core::synth::SynthConfig;
use arnn_core::train::Stage;

use crate::error::{AppError, Result};
use crate::ingest::Dialect;

/// Every recognised key with its default value. An empty default means
/// "unset" (taken from the profile, or required by the command).
pub const KEYS: &[(&str, &str)] = &[
    ("input", ""),
    ("data_dir", "data"),
    ("checkpoint_dir", "checkpoints"),
    ("out", ""),
    ("delimiter", "tab"),
    ("intra_delimiter", "|"),
    ("gap_threshold_seconds", "3600"),
    ("item_coverage", "0.5"),
    ("category_coverage", "0.75"),
    ("test_window_days", "3"),
    ("profile", "xing"),
    ("gru_hidden", ""),
    ("gru_dropout", ""),
    ("pnn_embedding", ""),
    ("pnn_hidden", ""),
    ("merge_hidden", ""),
    ("stage", ""),
    ("seed", "0"),
    ("epochs", "10"),
    ("patience", "3"),
    ("batch_lanes", "50"),
    ("lr_pretrain", "0.05"),
    ("lr_merge", "0.01"),
    ("weight_decay", "1e-6"),
    ("validation_fraction", "0.1"),
    ("k", "20"),
    ("knn_lambda", "20"),
    ("knn_neighbors", "100"),
    ("systems", "itemknn,gru,pnn,arnn"),
    ("synth_sessions", "2000"),
    ("synth_items", "60"),
    ("synth_fields", "6"),
    ("synth_categories", "2"),
    ("synth_min_len", "3"),
    ("synth_max_len", "6"),
    ("synth_days", "30"),
    ("synth_context", "true"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    ItemKnn,
    Gru,
    Pnn,
    Arnn,
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "itemknn" => Ok(System::ItemKnn),
            "gru" => Ok(System::Gru),
            "pnn" => Ok(System::Pnn),
            "arnn" => Ok(System::Arnn),
            other => Err(format!("unknown system {other}")),
        }
    }
}

/// Fully resolved and typed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub out: Option<PathBuf>,
    pub dialect: Dialect,
    pub preprocess: PreprocessConfig,
    pub profile: Profile,
    pub model: ModelConfig,
    pub stage: Option<Stage>,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_lanes: usize,
    pub lr_pretrain: f64,
    pub lr_merge: f64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
    pub k: usize,
    pub knn_lambda: f64,
    pub knn_neighbors: usize,
    pub systems: Vec<System>,
    pub synth: SynthConfig,
}

/// Raw key/value layers before typing.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    values: BTreeMap<String, String>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merges a `key = value` file. `#` starts a comment.
    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AppError::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    n + 1
                ))
            })?;
            self = self
                .set(key.trim(), value.trim())
                .map_err(|e| AppError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(self)
    }

    pub fn set(mut self, key: &str, value: &str) -> Result<Self> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(AppError::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(self)
    }

    /// Parses a `key=value` override.
    pub fn assignment(self, text: &str) -> Result<Self> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| AppError::Config(format!("expected key=value, got {text:?}")))?;
        self.set(k.trim(), v.trim())
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .expect("known key")
        })
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| AppError::Config(format!("{key}: cannot parse {raw:?}")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn build(&self) -> Result<RunConfig> {
        let profile: Profile = self
            .raw("profile")
            .parse()
            .map_err(|e: arnn_core::Error| AppError::Config(e.to_string()))?;
        let mut model = profile.model_config();
        if let Some(v) = self.optional("gru_hidden")? {
            model.gru_hidden = v;
        }
        if let Some(v) = self.optional("gru_dropout")? {
            model.gru_dropout = v;
        }
        if let Some(v) = self.optional("pnn_embedding")? {
            model.pnn_embedding = v;
        }
        if let Some(v) = self.optional("pnn_hidden")? {
            model.pnn_hidden = v;
        }
        if let Some(v) = self.optional("merge_hidden")? {
            model.merge_hidden = v;
        }
        let stage = match self.raw("stage") {
            "" => None,
            s => Some(parse_stage(s)?),
        };
        let gap = match self.raw("gap_threshold_seconds") {
            "inf" => u64::MAX,
            _ => self.parse("gap_threshold_seconds")?,
        };
        let window_days: f64 = self.parse("test_window_days")?;
        let systems = self
            .raw("systems")
            .split(',')
            .map(|s| s.trim().parse::<System>().map_err(AppError::Config))
            .collect::<Result<Vec<_>>>()?;
        let cfg = RunConfig {
            input: self.path("input"),
            data_dir: self.path("data_dir").unwrap_or_else(|| "data".into()),
            checkpoint_dir: self
                .path("checkpoint_dir")
                .unwrap_or_else(|| "checkpoints".into()),
            out: self.path("out"),
            dialect: Dialect {
                delimiter: parse_delimiter(self.raw("delimiter"))?,
                intra_delimiter: single_char("intra_delimiter", self.raw("intra_delimiter"))?,
            },
            preprocess: PreprocessConfig {
                gap_threshold_seconds: gap,
                item_coverage: self.parse("item_coverage")?,
                category_coverage: self.parse("category_coverage")?,
                test_window_seconds: (window_days * 86_400.0).round() as u64,
            },
            profile,
            model,
            stage,
            seed: self.parse("seed")?,
            epochs: self.parse("epochs")?,
            patience: self.parse("patience")?,
            batch_lanes: self.parse("batch_lanes")?,
            lr_pretrain: self.parse("lr_pretrain")?,
            lr_merge: self.parse("lr_merge")?,
            weight_decay: self.parse("weight_decay")?,
            validation_fraction: self.parse("validation_fraction")?,
            k: self.parse("k")?,
            knn_lambda: self.parse("knn_lambda")?,
            knn_neighbors: self.parse("knn_neighbors")?,
            systems,
            synth: SynthConfig {
                sessions: self.parse("synth_sessions")?,
                items: self.parse("synth_items")?,
                fields: self.parse("synth_fields")?,
                categories_per_field: self.parse("synth_categories")?,
                min_len: self.parse("synth_min_len")?,
                max_len: self.parse("synth_max_len")?,
                days: self.parse("synth_days")?,
                context_dependent: self.parse("synth_context")?,
                seed: self.parse("seed")?,
            },
        };
        cfg.check()?;
        Ok(cfg)
    }
}

fn parse_stage(s: &str) -> Result<Stage> {
    match s {
        "gru" => Ok(Stage::GruPretrain),
        "pnn" => Ok(Stage::PnnPretrain),
        "merge" => Ok(Stage::Merge),
        other => Err(AppError::Config(format!(
            "unknown stage {other:?} (gru, pnn, merge)"
        ))),
    }
}

fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" => Ok(b'\t'),
        "comma" => Ok(b','),
        other => {
            let c = single_char("delimiter", other)?;
            u8::try_from(c).map_err(|_| AppError::Config("delimiter must be ASCII".into()))
        }
    }
}

fn single_char(key: &str, s: &str) -> Result<char> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(AppError::Config(format!(
            "{key} must be a single character"
        ))),
    }
}

impl RunConfig {
    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(AppError::Config(msg.to_string()));
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.preprocess.item_coverage) || !unit(self.preprocess.category_coverage) {
            return bad("coverage fractions must lie in (0, 1]");
        }
        if self.batch_lanes < 2 {
            return bad("batch_lanes must be at least 2");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if !(self.lr_pretrain > 0.0 && self.lr_merge > 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rates must be positive and weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.model.gru_dropout) {
            return bad("gru_dropout must lie in [0, 1)");
        }
        let m = &self.model;
        if [m.gru_hidden, m.pnn_embedding, m.pnn_hidden, m.merge_hidden].contains(&0) {
            return bad("layer sizes must be positive");
        }
        if self.knn_lambda < 0.0 || self.knn_neighbors == 0 {
            return bad("knn_lambda must be non-negative and knn_neighbors positive");
        }
        if self.systems.is_empty() {
            return bad("systems must name at least one system");
        }
        Ok(())
    }

    pub fn learning_rate(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Merge => self.lr_merge,
            _ => self.lr_pretrain,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = ConfigBuilder::new().build().unwrap();
        assert_eq!(cfg.preprocess, PreprocessConfig::default());
        assert_eq!(cfg.batch_lanes, 50);
        assert_eq!(cfg.k, 20);
        assert_eq!(cfg.model, Profile::Xing.model_config());
        assert_eq!(cfg.systems.len(), 4);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ConfigBuilder::new().set("learning_rate", "0.1"),
            Err(AppError::Config(_))
        ));
    }

    #[test]
    fn file_then_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "# experiment\nprofile = tmall\nseed = 4 # trailing\nk=5\n",
        )
        .unwrap();
        let cfg = ConfigBuilder::new()
            .file(&path)
            .unwrap()
            .assignment("k=10")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(cfg.profile, Profile::Tmall);
        assert_eq!(cfg.model.merge_hidden, 1000);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.k, 10);
    }

    #[test]
    fn bad_values_rejected() {
        for (k, v) in [
            ("batch_lanes", "1"),
            ("item_coverage", "0"),
            ("k", "x"),
            ("stage", "all"),
            ("profile", "movielens"),
            ("systems", "gru,bpr"),
        ] {
            let r = ConfigBuilder::new().set(k, v).unwrap().build();
            assert!(matches!(r, Err(AppError::Config(_))), "{k}={v}");
        }
    }

    #[test]
    fn infinite_gap() {
        let cfg = ConfigBuilder::new()
            .set("gap_threshold_seconds", "inf")
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(cfg.preprocess.gap_threshold_seconds, u64::MAX);
    }
}
