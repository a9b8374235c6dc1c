//! Run configuration: one TOML document, overridden field by field by flags.

use std::path::{Path, PathBuf};

use gnnx_core::optim::AdamConfig;
use gnnx_core::{
    Error, ExplainerConfig, ModelConfig, Result, SplitSpec, TrainConfig, DEFAULT_THRESHOLD,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let d = SplitSpec::default();
        SplitSection {
            train: d.train,
            val: d.val,
            test: d.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub threshold: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub leaky_slope: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            hidden_dim: d.hidden_dim,
            leaky_slope: d.leaky_slope,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            beta1: d.adam.beta1,
            beta2: d.adam.beta2,
            eps: d.adam.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub edge_size_coeff: f64,
    pub edge_entropy_coeff: f64,
    pub feature_size_coeff: f64,
    pub feature_entropy_coeff: f64,
    pub top_k_edges: usize,
    pub init_std: f64,
}

impl Default for ExplainSection {
    fn default() -> Self {
        let d = ExplainerConfig::default();
        ExplainSection {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            edge_size_coeff: d.edge_size_coeff,
            edge_entropy_coeff: d.edge_entropy_coeff,
            feature_size_coeff: d.feature_size_coeff,
            feature_entropy_coeff: d.feature_entropy_coeff,
            top_k_edges: d.top_k_edges,
            init_std: d.init_std,
        }
    }
}

/// Everything a run depends on. The single `seed` drives the split shuffle,
/// parameter initialisation and the explainer's mask initialisation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub paths: Paths,
    pub split: SplitSection,
    pub graph: GraphSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub explain: ExplainSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, feature_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            num_classes,
            hidden_dim: self.model.hidden_dim,
            leaky_slope: self.model.leaky_slope,
            init_seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            adam: AdamConfig {
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                eps: self.train.eps,
            },
        }
    }

    pub fn explainer_config(&self) -> ExplainerConfig {
        let e = &self.explain;
        ExplainerConfig {
            epochs: e.epochs,
            learning_rate: e.learning_rate,
            edge_size_coeff: e.edge_size_coeff,
            edge_entropy_coeff: e.edge_entropy_coeff,
            feature_size_coeff: e.feature_size_coeff,
            feature_entropy_coeff: e.feature_entropy_coeff,
            top_k_edges: e.top_k_edges,
            init_std: e.init_std,
            seed: self.seed,
        }
    }

    /// Checks every section without touching the file system.
    pub fn validate(&self) -> Result<()> {
        self.split_spec().validate()?;
        let t = self.graph.threshold;
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::Config(format!(
                "threshold must lie in [-1, 1], got {t}"
            )));
        }
        self.model_config(1, 1).validate()?;
        self.train_config().validate()?;
        let a = self.train_config().adam;
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps.is_nan()
            || a.eps <= 0.0
        {
            return Err(Error::Config(format!(
                "adam needs beta1, beta2 in [0, 1) and eps > 0, got {a:?}"
            )));
        }
        self.explainer_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train_config(), TrainConfig::default());
        assert_eq!(c.explainer_config(), ExplainerConfig::default());
        assert_eq!(c.graph.threshold, 0.725);
        assert_eq!(c.model_config(128, 2), ModelConfig::default());
        assert_eq!(c.precision, Precision::F64);
        c.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_in_defaults() {
        let c = RunConfig::parse("seed = 7\nprecision = \"f32\"\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(
            (c.seed, c.precision, c.train.epochs),
            (7, Precision::F32, 5)
        );
        assert_eq!(c.train.learning_rate, 0.001);
        assert_eq!(c.split_spec().seed, 7);
        assert_eq!(c.explainer_config().seed, 7);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig {
            seed: 3,
            ..RunConfig::default()
        };
        c.paths.corpus = Some("data/corpus.jsonl".into());
        c.explain.top_k_edges = 4;
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn bad_documents_are_config_errors() {
        for text in [
            "[train]\nepoch = 3\n",
            "seed = \"x\"",
            "[split]\ntrain = 0.9\n",
        ] {
            let parsed = RunConfig::parse(text).and_then(|c| c.validate());
            assert!(matches!(parsed, Err(Error::Config(_))), "{text}");
        }
    }
}
