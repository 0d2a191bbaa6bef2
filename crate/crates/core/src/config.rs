//! Run configuration, read from and written to TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{find_manifest, EdgeFormat};
use crate::graph::{partition_by_percentile, partition_by_threshold, ConflictPolicy, DegreePartition, GraphError, SignedGraph};
use crate::losses::{FairnessNormalizer, LossConfig};
use crate::metrics::F1Variant;
use crate::plugin::PluginMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Head/tail boundary rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KPolicy {
    /// `K` = mean degree of the training graph.
    #[default]
    Mean,
    Fixed(f64),
    /// Top and bottom fractions of nodes by degree.
    Percentile { top: f64, bottom: f64 },
}

impl KPolicy {
    pub fn partition(&self, g: &SignedGraph) -> Result<DegreePartition, GraphError> {
        match *self {
            KPolicy::Mean => Ok(partition_by_threshold(g, g.mean_degree())),
            KPolicy::Fixed(k) => Ok(partition_by_threshold(g, k)),
            KPolicy::Percentile { top, bottom } => partition_by_percentile(g, top, bottom),
        }
    }
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::Mean => f.write_str("mean"),
            KPolicy::Fixed(k) => write!(f, "fixed:{k}"),
            KPolicy::Percentile { top, bottom } => write!(f, "pct:{top}:{bottom}"),
        }
    }
}

fn fraction(s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("bad percentile `{s}`")))?;
    // "20" and "0.2" both mean twenty percent.
    let v = if v > 1.0 { v / 100.0 } else { v };
    if !(0.0..=1.0).contains(&v) {
        return Err(ConfigError::Invalid(format!("percentile `{s}` out of range")));
    }
    Ok(v)
}

impl FromStr for KPolicy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["mean"] => Ok(KPolicy::Mean),
            ["fixed", k] => {
                let k: f64 = k
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("bad K `{k}`")))?;
                if !(k.is_finite() && k >= 0.0) {
                    return Err(ConfigError::Invalid(format!("K must be >= 0, got {k}")));
                }
                Ok(KPolicy::Fixed(k))
            }
            ["pct", t, b] => {
                let (top, bottom) = (fraction(t)?, fraction(b)?);
                if top + bottom > 1.0 {
                    return Err(ConfigError::Invalid(format!("top + bottom exceed 1 in `{s}`")));
                }
                Ok(KPolicy::Percentile { top, bottom })
            }
            _ => Err(ConfigError::Invalid(format!("unknown K policy `{s}` (mean, fixed:K, pct:T:B)"))),
        }
    }
}

impl TryFrom<String> for KPolicy {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<KPolicy> for String {
    fn from(k: KPolicy) -> String {
        k.to_string()
    }
}

/// Component removed in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    NoTranslation,
    NoHeadConstraint,
    NoLocalization,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoTranslation,
        Ablation::NoHeadConstraint,
        Ablation::NoLocalization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoTranslation => "no-translation",
            Ablation::NoHeadConstraint => "no-head-constraint",
            Ablation::NoLocalization => "no-localization",
        }
    }
}

impl FromStr for Ablation {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dataset: String,
    pub data_path: Option<PathBuf>,
    pub format: Option<EdgeFormat>,
    pub conflict_policy: ConflictPolicy,
    pub train_ratio: f64,
    pub d_in: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub classifier_hidden: usize,
    pub k_policy: KPolicy,
    pub plugin_enabled: bool,
    pub no_translation: bool,
    pub no_head_constraint: bool,
    pub no_localization: bool,
    pub inject_heads_at_inference: bool,
    pub mu: f64,
    pub eta: f64,
    pub reg_lambda: f64,
    pub fairness_normalizer: FairnessNormalizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub f1_variant: F1Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        Self {
            dataset: "bitcoin-alpha".into(),
            data_path: None,
            format: None,
            conflict_policy: ConflictPolicy::Drop,
            train_ratio: 0.8,
            d_in: 64,
            hidden_dim: 64,
            layers: 2,
            classifier_hidden: 32,
            k_policy: KPolicy::Mean,
            plugin_enabled: true,
            no_translation: false,
            no_head_constraint: false,
            no_localization: false,
            inject_heads_at_inference: true,
            mu: loss.mu,
            eta: loss.eta,
            reg_lambda: loss.reg_lambda,
            fairness_normalizer: loss.fairness_normalizer,
            learning_rate: 1e-2,
            epochs: 200,
            seed: 0,
            f1_variant: F1Variant::Binary,
        }
    }
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ModelConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.d_in == 0 || self.hidden_dim == 0 || self.classifier_hidden == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("train_ratio must be in (0, 1), got {}", self.train_ratio));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        self.loss_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Effective loss weights after ablation flags.
    pub fn loss_config(&self) -> LossConfig {
        let plugin = self.plugin_mode() != PluginMode::Disabled;
        LossConfig {
            mu: if self.plugin_enabled { self.mu } else { 0.0 },
            eta: if plugin && !self.no_head_constraint { self.eta } else { 0.0 },
            reg_lambda: self.reg_lambda,
            fairness_normalizer: self.fairness_normalizer,
        }
    }

    pub fn plugin_mode(&self) -> PluginMode {
        if !self.plugin_enabled || self.no_translation {
            PluginMode::Disabled
        } else if self.no_localization {
            PluginMode::GlobalOnly
        } else {
            PluginMode::Localized
        }
    }

    /// Copy with exactly one ablation applied on top of the full model.
    pub fn with_ablation(&self, a: Ablation) -> Self {
        let mut c = self.clone();
        c.plugin_enabled = true;
        c.no_translation = a == Ablation::NoTranslation;
        c.no_head_constraint = a == Ablation::NoHeadConstraint;
        c.no_localization = a == Ablation::NoLocalization;
        c
    }

    pub fn baseline(&self) -> Self {
        Self {
            plugin_enabled: false,
            no_translation: false,
            no_head_constraint: false,
            no_localization: false,
            ..self.clone()
        }
    }

    /// Short label used in reports.
    pub fn variant(&self) -> String {
        if !self.plugin_enabled {
            return "sgcn".into();
        }
        let mut s = String::from("dd-sgcn");
        for (flag, name) in [
            (self.no_translation, Ablation::NoTranslation),
            (self.no_head_constraint, Ablation::NoHeadConstraint),
            (self.no_localization, Ablation::NoLocalization),
        ] {
            if flag {
                s.push('/');
                s.push_str(name.name());
            }
        }
        s
    }

    pub fn edge_format(&self) -> Result<EdgeFormat, ConfigError> {
        self.format
            .or_else(|| find_manifest(&self.dataset).map(|m| m.format))
            .ok_or_else(|| ConfigError::Invalid(format!("no format given and `{}` is not a known dataset", self.dataset)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_policy_round_trips() {
        for s in ["mean", "fixed:6", "fixed:2.5", "pct:0.2:0.2"] {
            assert_eq!(s.parse::<KPolicy>().unwrap().to_string(), s);
        }
        assert_eq!("pct:20:20".parse::<KPolicy>().unwrap(), KPolicy::Percentile { top: 0.2, bottom: 0.2 });
        for bad in ["median", "fixed:-1", "pct:0.7:0.7", "fixed", "pct:a:b"] {
            assert!(bad.parse::<KPolicy>().is_err(), "{bad}");
        }
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ModelConfig {
            k_policy: KPolicy::Percentile { top: 0.2, bottom: 0.2 },
            data_path: Some("data/x.csv".into()),
            ..ModelConfig::default()
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ModelConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(matches!(ModelConfig::from_toml_str("epochs = 3\nlearning_rte = 0.1\n"), Err(ConfigError::Parse(_))));
        let partial = ModelConfig::from_toml_str("epochs = 3\nk_policy = \"fixed:15\"\n").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.k_policy, KPolicy::Fixed(15.0));
        assert_eq!(partial.d_in, 64);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::from_toml_str("mu = -1.0\n").is_err());
        assert!(ModelConfig::from_toml_str("train_ratio = 1.0\n").is_err());
        assert!(ModelConfig::from_toml_str("layers = 0\n").is_err());
    }

    #[test]
    fn ablation_effects() {
        let base = ModelConfig::default();
        assert_eq!(base.plugin_mode(), PluginMode::Localized);
        assert_eq!(base.with_ablation(Ablation::NoLocalization).plugin_mode(), PluginMode::GlobalOnly);
        assert_eq!(base.with_ablation(Ablation::NoTranslation).plugin_mode(), PluginMode::Disabled);
        assert_eq!(base.with_ablation(Ablation::NoHeadConstraint).loss_config().eta, 0.0);
        let b = base.baseline();
        assert_eq!(b.plugin_mode(), PluginMode::Disabled);
        assert_eq!((b.loss_config().mu, b.loss_config().eta), (0.0, 0.0));
        assert_eq!(b.variant(), "sgcn");
        assert_eq!(base.with_ablation(Ablation::NoHeadConstraint).variant(), "dd-sgcn/no-head-constraint");
        assert_eq!("no-localization".parse::<Ablation>().unwrap(), Ablation::NoLocalization);
    }

    #[test]
    fn format_inferred_from_dataset() {
        assert_eq!(ModelConfig::default().edge_format().unwrap(), EdgeFormat::BitcoinCsv);
        let c = ModelConfig {
            dataset: "mine".into(),
            ..ModelConfig::default()
        };
        assert!(c.edge_format().is_err());
    }
}
