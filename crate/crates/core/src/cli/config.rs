//! Experiment configuration: per-dataset defaults, JSON overlays and
//! command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dfa::DfaConfig;
use crate::error::{Error, Result};
use crate::graph::Attack;
use crate::pseudo_error::SpreadConfig;
use crate::training::{FreezeSchedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Bp,
    Dfa,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Bp => "bp",
            Algo::Dfa => "dfa",
        }
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp" => Ok(Algo::Bp),
            "dfa" => Ok(Algo::Dfa),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}, expected bp or dfa"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// 60% train, 20% validation, 20% test.
    #[serde(rename = "random602020")]
    Random602020,
    /// 20 training nodes per class.
    #[serde(rename = "sparse20")]
    Sparse20,
}

impl SplitMode {
    pub fn name(self) -> &'static str {
        match self {
            SplitMode::Random602020 => "random602020",
            SplitMode::Sparse20 => "sparse20",
        }
    }
}

impl FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random602020" => Ok(SplitMode::Random602020),
            "sparse20" => Ok(SplitMode::Sparse20),
            _ => Err(Error::Config(format!(
                "unknown split mode {s:?}, expected random602020 or sparse20"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub algo: Algo,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Learning rate for BP runs; `lr` when unset.
    pub bp_lr: Option<f64>,
    pub weight_decay: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub epsilon: f64,
    pub error_generator: bool,
    pub node_filter: bool,
    pub modulate: bool,
    pub seeds: Vec<u64>,
    pub split: SplitMode,
    pub per_class: usize,
    pub val_size: usize,
    /// Attack kind for `attack`; all kinds when unset.
    pub attack: Option<Attack>,
    pub rates: Vec<f64>,
    pub depths: Vec<usize>,
    pub freeze: FreezeSchedule,
    pub normalize_features: bool,
    pub out: PathBuf,
}

/// Hyperparameters that differ between the benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetDefaults {
    pub lr: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub weight_decay: f64,
}

/// Tuned values for known dataset names, matched case-insensitively.
pub fn dataset_defaults(name: &str) -> Option<DatasetDefaults> {
    let d = |lr, alpha, iterations, weight_decay| DatasetDefaults {
        lr,
        alpha,
        iterations,
        weight_decay,
    };
    Some(match name.to_ascii_lowercase().as_str() {
        "cora" => d(0.01, 0.1, 50, 5e-4),
        "citeseer" => d(0.01, 0.01, 200, 5e-4),
        "pubmed" => d(0.01, 0.1, 200, 5e-4),
        "photo" => d(0.001, 0.01, 50, 5e-4),
        "computer" | "computers" => d(0.001, 0.01, 50, 5e-4),
        "texas" => d(0.01, 0.9, 50, 0.0),
        "cornell" => d(0.01, 0.5, 50, 0.0),
        "actor" => d(0.01, 0.5, 50, 0.0),
        "chameleon" => d(0.01, 0.5, 200, 0.0),
        "squirrel" => d(0.01, 0.5, 200, 0.0),
        _ => return None,
    })
}

impl ExperimentConfig {
    /// Defaults for the dataset at `data`, keyed by its directory name.
    pub fn for_dataset(data: &Path) -> Self {
        let name = data.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let tuned = dataset_defaults(name).unwrap_or_else(|| {
            log::warn!("no tuned defaults for dataset {name:?}; using the cora values");
            dataset_defaults("cora").unwrap()
        });
        Self {
            data: data.to_path_buf(),
            algo: Algo::Dfa,
            layers: 3,
            hidden: 64,
            lr: tuned.lr,
            bp_lr: None,
            weight_decay: tuned.weight_decay,
            epochs: 1000,
            alpha: tuned.alpha,
            iterations: tuned.iterations,
            epsilon: 0.5,
            error_generator: true,
            node_filter: true,
            modulate: false,
            seeds: (0..10).collect(),
            split: SplitMode::Random602020,
            per_class: 20,
            val_size: 500,
            attack: None,
            rates: vec![0.2, 0.4, 0.6, 0.8],
            depths: (2..=8).collect(),
            freeze: FreezeSchedule::default(),
            normalize_features: true,
            out: PathBuf::from("results"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.spread_config().validate()?;
        if self.node_filter && !self.error_generator {
            return Err(Error::Config("node_filter requires error_generator".into()));
        }
        self.train_config_for(Algo::Bp).validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("perturbation rate {r} outside [0, 1]")));
        }
        if self.depths.contains(&0) {
            return Err(Error::Config("depths must be positive".into()));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            hidden: self.hidden,
            layers: self.layers,
            freeze: self.freeze.clone(),
        }
    }

    pub fn train_config_for(&self, algo: Algo) -> TrainConfig {
        match (algo, self.bp_lr) {
            (Algo::Bp, Some(lr)) => TrainConfig { lr, ..self.train_config() },
            _ => self.train_config(),
        }
    }

    pub fn spread_config(&self) -> SpreadConfig {
        SpreadConfig {
            alpha: self.alpha,
            iterations: self.iterations,
            epsilon: self.epsilon,
        }
    }

    pub fn dfa_config(&self, record_alignment: bool) -> DfaConfig {
        DfaConfig {
            train: self.train_config(),
            spread: self.spread_config(),
            use_error_generator: self.error_generator,
            use_node_filter: self.node_filter,
            modulate_by_activation_derivative: self.modulate,
            record_alignment,
        }
    }

    pub fn apply(&mut self, patch: ConfigPatch) {
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = patch.$f { self.$f = v; })* };
        }
        take!(
            data, algo, layers, hidden, lr, weight_decay, epochs, alpha, iterations, epsilon,
            error_generator, node_filter, modulate, seeds, split, per_class, val_size, rates,
            depths, freeze, normalize_features, out
        );
        if let Some(a) = patch.attack {
            self.attack = Some(a);
        }
        if let Some(lr) = patch.bp_lr {
            self.bp_lr = Some(lr);
        }
    }

    /// Every setting that affects results, as `key=value` cells. The output
    /// directory is left out so identical runs write identical files.
    pub fn provenance(&self) -> Result<Vec<String>> {
        let value = serde_json::to_value(self)?;
        let map = value.as_object().expect("config serializes to an object");
        Ok(map
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect())
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match serde_json::to_string_pretty(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

/// A partial configuration; set fields replace the current values.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub data: Option<PathBuf>,
    pub algo: Option<Algo>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub bp_lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub alpha: Option<f64>,
    pub iterations: Option<usize>,
    pub epsilon: Option<f64>,
    pub error_generator: Option<bool>,
    pub node_filter: Option<bool>,
    pub modulate: Option<bool>,
    pub seeds: Option<Vec<u64>>,
    pub split: Option<SplitMode>,
    pub per_class: Option<usize>,
    pub val_size: Option<usize>,
    pub attack: Option<Attack>,
    pub rates: Option<Vec<f64>>,
    pub depths: Option<Vec<usize>>,
    pub freeze: Option<FreezeSchedule>,
    pub normalize_features: Option<bool>,
    pub out: Option<PathBuf>,
}

impl ConfigPatch {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_defaults_by_name() {
        let c = ExperimentConfig::for_dataset(Path::new("data/CiteSeer"));
        assert_eq!((c.lr, c.alpha, c.iterations, c.weight_decay), (0.01, 0.01, 200, 5e-4));
        let c = ExperimentConfig::for_dataset(Path::new("/x/texas"));
        assert_eq!((c.alpha, c.weight_decay), (0.9, 0.0));
        let c = ExperimentConfig::for_dataset(Path::new("cora"));
        assert_eq!((c.hidden, c.layers, c.epochs, c.epsilon), (64, 3, 1000, 0.5));
        c.validate().unwrap();
    }

    #[test]
    fn patch_overrides_and_rejects_unknown_keys() {
        let mut c = ExperimentConfig::for_dataset(Path::new("cora"));
        let p = ConfigPatch::from_json(r#"{"lr": 0.05, "algo": "bp", "split": "sparse20", "attack": "flip"}"#)
            .unwrap();
        c.apply(p);
        assert_eq!((c.lr, c.algo, c.split, c.attack), (0.05, Algo::Bp, SplitMode::Sparse20, Some(Attack::Flip)));
        assert!(matches!(ConfigPatch::from_json(r#"{"learning_rate": 1}"#), Err(Error::Config(_))));
    }

    #[test]
    fn full_config_round_trips() {
        let c = ExperimentConfig::for_dataset(Path::new("cora"));
        let text = serde_json::to_string(&c).unwrap();
        let mut d = ExperimentConfig::for_dataset(Path::new("other"));
        d.apply(ConfigPatch::from_json(&text).unwrap());
        assert_eq!(c, d);
    }

    #[test]
    fn node_filter_without_generator_is_rejected() {
        let mut c = ExperimentConfig::for_dataset(Path::new("cora"));
        c.error_generator = false;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.node_filter = false;
        c.validate().unwrap();
    }

    #[test]
    fn bp_learning_rate_override() {
        let mut c = ExperimentConfig::for_dataset(Path::new("cora"));
        assert_eq!(c.train_config_for(Algo::Bp).lr, c.lr);
        c.apply(ConfigPatch::from_json(r#"{"bp_lr": 0.005}"#).unwrap());
        assert_eq!(c.train_config_for(Algo::Bp).lr, 0.005);
        assert_eq!(c.train_config_for(Algo::Dfa).lr, c.lr);
        c.bp_lr = Some(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn provenance_names_every_field() {
        let c = ExperimentConfig::for_dataset(Path::new("cora"));
        let cells = c.provenance().unwrap();
        assert!(cells.iter().any(|s| s == "lr=0.01"));
        assert!(cells.iter().any(|s| s == "algo=dfa"));
        assert_eq!(cells.len(), 23);
        assert!(!cells.iter().any(|s| s.starts_with("out=")));
    }
}
