//! Flat `key=value` run configuration with file, environment and flag layers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const ENV_PREFIX: &str = "RESTOBENCH_";

/// Marker for hyperparameters taken from the task's table row.
pub const AUTO: &str = "auto";

/// Every accepted key with its default value and a short description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data_dir", "data", "directory with the generated benchmark"),
    ("out_dir", "runs", "directory for checkpoints, curves and result tables"),
    ("task", "1", "task number, 1-5"),
    ("model", "memnn", "rule_based, tfidf, nearest_neighbor, embeddings or memnn"),
    ("seed", "0", "seed for generation and training"),
    ("train_size", "1000", "dialogs per training split"),
    ("val_size", "1000", "dialogs per validation split"),
    ("test_size", "1000", "dialogs per test split (plain and OOV)"),
    ("use_history", AUTO, "condition on the dialog history"),
    ("time_features", "true", "time tokens on memory slots"),
    ("speaker_features", "true", "speaker tokens on memory slots"),
    ("match_type", "false", "entity type tokens on candidates"),
    ("match_type_no_history", "false", "type candidate entities even when absent from the context"),
    ("bigrams", "false", "add bigram tokens to the vocabulary"),
    ("recency_time", "false", "number memory slots from the most recent one"),
    ("lr", AUTO, "learning rate"),
    ("margin", AUTO, "ranking margin (embeddings)"),
    ("dim", AUTO, "embedding dimension"),
    ("negatives", AUTO, "negative candidates per example"),
    ("hops", AUTO, "memory hops"),
    ("epochs", "100", "training epochs"),
    ("eval_every", "1", "validate every this many epochs"),
    ("tied", "false", "share input and candidate embeddings (embeddings)"),
    ("full_softmax", "true", "normalize over all candidates while training (memnn)"),
    ("max_grad_norm", AUTO, "gradient norm cap, or none"),
    ("init_scale", AUTO, "half-width of the uniform initialization"),
    ("identity_r", "true", "start the hop matrix at the identity (memnn)"),
    ("splits", "test,test_oov", "splits to evaluate"),
    ("top_k", "10", "k for top-k accuracy"),
    ("checkpoint", "", "checkpoint path (default: <out_dir>/task<T>-<model>.json)"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(ConfigError(format!("unknown config key `{key}`"))),
        }
    }

    /// Parses one `key=value` assignment.
    pub fn set_assignment(&mut self, text: &str) -> Result<(), ConfigError> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("expected key=value, got `{text}`")))?;
        self.set(k, v)
    }

    /// Applies a file of `key=value` lines; blank lines and `#` comments are skipped.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.set_assignment(line)
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Applies `RESTOBENCH_<KEY>` variables.
    pub fn merge_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), &v)
                    .map_err(|e| ConfigError(format!("environment variable {k}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    pub fn is_auto(&self, key: &str) -> bool {
        self.get(key) == AUTO
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| ConfigError(format!("invalid value `{v}` for `{key}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key) {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            v => Err(ConfigError(format!("invalid boolean `{v}` for `{key}`"))),
        }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.get(key))
    }

    /// Fills an `auto` key.
    pub fn resolve(&mut self, key: &str, value: impl fmt::Display) {
        if self.is_auto(key) {
            self.values.insert(key.to_string(), value.to_string());
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// One `key=value` line per key, sorted; readable back with [`Self::merge_file`].
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
