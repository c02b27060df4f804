//! Flat `key=value` run configuration.
//!
//! Every key has a default; unknown keys and unparsable values are rejected
//! when set. The resolved configuration renders to a canonical text (sorted
//! keys), which is also what the config hash covers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataio::InputFormat;
use crate::error::{Error, Result};
use crate::losses::LossMode;
use crate::model::Backbone;
use crate::synth::SynthConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Usize,
    U64,
    F64,
    Bool,
    Text,
    Format,
    Backbone,
    LossMode,
    F64List,
    U64List,
}

/// (key, default, kind). Empty text means unset.
const KEYS: &[(&str, &str, Kind)] = &[
    ("seed", "0", Kind::U64),
    ("out", "runs", Kind::Text),
    // prepare
    ("input", "", Kind::Text),
    ("format", "tsv", Kind::Format),
    ("k_core", "10", Kind::Usize),
    ("test_fraction", "0.2", Kind::F64),
    // train
    ("data_dir", "", Kind::Text),
    ("dim", "64", Kind::Usize),
    ("batch_size", "512", Kind::Usize),
    ("learning_rate", "0.001", Kind::F64),
    ("alpha", "0.1", Kind::F64),
    ("beta", "0.1", Kind::F64),
    ("epochs", "100", Kind::Usize),
    ("backbone", "mf", Kind::Backbone),
    ("layers", "2", Kind::Usize),
    ("loss_mode", "weighted", Kind::LossMode),
    ("false_negative_filter", "true", Kind::Bool),
    ("init_scale", "0.1", Kind::F64),
    ("patience", "10", Kind::Usize),
    ("val_fraction", "0.1", Kind::F64),
    ("l2", "0", Kind::F64),
    // eval / ood
    ("checkpoint", "", Kind::Text),
    ("k", "20", Kind::Usize),
    ("proportions", "0.5,0.4,0.3", Kind::F64List),
    ("ood_seeds", "0,1,2", Kind::U64List),
    // synth
    ("synth_users", "2000", Kind::Usize),
    ("synth_items", "1000", Kind::Usize),
    ("synth_dim", "16", Kind::Usize),
    ("synth_density", "0.005", Kind::F64),
    ("synth_pop_exponent", "1.5", Kind::F64),
    ("synth_interest", "", Kind::F64),
    ("synth_conformity", "", Kind::F64),
    ("synth_test_fraction", "0.2", Kind::F64),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|&(_, _, kind)| kind)
}

fn check_value(key: &str, kind: Kind, value: &str) -> Result<()> {
    let bad = |what: &str| Error::Config(format!("`{key}`: expected {what}, got `{value}`"));
    let list_ok = |parse: fn(&str) -> bool| value.split(',').all(|v| parse(v.trim()));
    let ok = match kind {
        Kind::Usize => value.parse::<usize>().is_ok(),
        Kind::U64 => value.parse::<u64>().is_ok(),
        Kind::F64 => value.parse::<f64>().is_ok(),
        Kind::Bool => value.parse::<bool>().is_ok(),
        Kind::Text => true,
        Kind::Format => value.parse::<InputFormat>().is_ok(),
        Kind::Backbone => value.parse::<Backbone>().is_ok(),
        Kind::LossMode => value.parse::<LossMode>().is_ok(),
        Kind::F64List => list_ok(|v| v.parse::<f64>().is_ok()),
        Kind::U64List => list_ok(|v| v.parse::<u64>().is_ok()),
    };
    if ok {
        return Ok(());
    }
    Err(bad(match kind {
        Kind::Usize | Kind::U64 => "a non-negative integer",
        Kind::F64 => "a number",
        Kind::Bool => "true or false",
        Kind::Format => "csv or tsv",
        Kind::Backbone => "mf or lightgcn",
        Kind::LossMode => "weighted or literal",
        Kind::F64List => "a comma-separated list of numbers",
        Kind::U64List => "a comma-separated list of integers",
        Kind::Text => unreachable!(),
    }))
}

/// Resolved run configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let mut values: BTreeMap<&'static str, String> =
            KEYS.iter().map(|&(k, d, _)| (k, d.to_string())).collect();
        values.insert("synth_interest", synth.interest_strength.to_string());
        values.insert("synth_conformity", synth.conformity_mix.to_string());
        Self { values }
    }
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|&(k, _, _)| k)
    }

    /// Sets one key after validating its value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let kind = kind_of(key).ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        check_value(key, kind, value)?;
        let slot = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(k, _, _)| *k)
            .unwrap();
        self.values.insert(slot, value.to_string());
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    /// Parses file contents over the defaults. Blank lines and `#` comments
    /// are ignored; a key may appear only once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1))
            })?;
            let k = k.trim();
            if seen.contains(&k) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{k}`",
                    n + 1
                )));
            }
            seen.push(k);
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(e))))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn value<T: std::str::FromStr>(&self, key: &str) -> T {
        self.values[key]
            .parse()
            .unwrap_or_else(|_| unreachable!("`{key}` validated on set"))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Vec<T> {
        self.values[key]
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .unwrap_or_else(|_| unreachable!("`{key}` validated on set"))
            })
            .collect()
    }

    /// `None` when the key is empty.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("`{key}` must be set for this command")))
    }

    pub fn seed(&self) -> u64 {
        self.value("seed")
    }

    pub fn format(&self) -> InputFormat {
        self.value("format")
    }

    pub fn k_core(&self) -> usize {
        self.value("k_core")
    }

    pub fn test_fraction(&self) -> f64 {
        self.value("test_fraction")
    }

    pub fn k(&self) -> usize {
        self.value("k")
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.list("proportions")
    }

    pub fn ood_seeds(&self) -> Vec<u64> {
        self.list("ood_seeds")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.value("dim"),
            batch_size: self.value("batch_size"),
            learning_rate: self.value("learning_rate"),
            alpha: self.value("alpha"),
            beta: self.value("beta"),
            epochs: self.value("epochs"),
            seed: self.seed(),
            backbone: self.value("backbone"),
            layers: self.value("layers"),
            loss_mode: self.value("loss_mode"),
            false_negative_filter: self.value("false_negative_filter"),
            init_scale: self.value("init_scale"),
            patience: self.value("patience"),
            val_fraction: self.value("val_fraction"),
            val_k: self.k(),
            l2: self.value("l2"),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_users: self.value("synth_users"),
            n_items: self.value("synth_items"),
            dim: self.value("synth_dim"),
            density: self.value("synth_density"),
            pop_exponent: self.value("synth_pop_exponent"),
            interest_strength: self.value("synth_interest"),
            conformity_mix: self.value("synth_conformity"),
            test_fraction: self.value("synth_test_fraction"),
            seed: self.seed(),
        }
    }

    /// Canonical `key=value` lines, sorted by key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// First 12 hex digits of the SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
