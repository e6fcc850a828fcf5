//! Experiment configuration, canonical fingerprints, and grid expansion.
//!
//! An [`ExperimentConfig`] pins every knob that can change a result:
//! dataset, detector, federation strategy, partition, epochs, optimizer
//! settings, and the master seed. Its [`ExperimentConfig::fingerprint`] is a
//! SHA-256 digest of the canonical JSON encoding, so two runs with the same
//! fingerprint are guaranteed to produce the same numbers and the result
//! store can use it as a resume key.
//!
//! Configs can be assembled from three layers: built-in defaults, an
//! optional TOML file ([`FileConfig`]), and command-line flags. Later layers
//! override earlier ones field by field via [`RawConfig::overlay`].

use std::str::FromStr;

use fedanom_core::dataset::DatasetName;
use fedanom_core::federation::{FederationConfig, Strategy};
use fedanom_core::models::{ModelConfig, ModelKind, TrainConfig};
use fedanom_core::partition::{PartitionConfig, PartitionScheme};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Global epochs used when `smoke` is set and the configured count is larger.
pub const SMOKE_GLOBAL_EPOCHS: usize = 3;
/// Per-series training-row cap under `smoke`.
pub const SMOKE_TRAIN_ROWS: usize = 2000;

/// Fully-resolved description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub model: ModelKind,
    pub strategy: Strategy,
    pub clients: usize,
    pub partition: PartitionScheme,
    /// Dirichlet concentration; ignored by the other schemes.
    pub beta: f64,
    pub global_epochs: usize,
    pub local_epochs: usize,
    pub seed: u64,
    /// Shrinks models, caps training rows, and caps global epochs.
    pub smoke: bool,
    pub lr: f64,
    pub batch_size: usize,
    /// Proximal coefficient.
    pub mu: f64,
    /// Contrastive temperature.
    pub tau: f64,
    pub contrastive_weight: f64,
}

/// Default partition for a dataset: one client per series where there are
/// many series, contiguous Dirichlet blocks for the single-series dataset.
pub fn default_partition(dataset: DatasetName) -> PartitionScheme {
    match dataset {
        DatasetName::Psm => PartitionScheme::DirichletContiguous,
        _ => PartitionScheme::PerSeries,
    }
}

impl ExperimentConfig {
    /// A config with every field at its default for the given selection.
    pub fn new(dataset: DatasetName, model: ModelKind, strategy: Strategy) -> Self {
        Self {
            dataset,
            model,
            strategy,
            clients: dataset.default_clients(),
            partition: default_partition(dataset),
            beta: 0.5,
            global_epochs: 10,
            local_epochs: 10,
            seed: 0,
            smoke: false,
            lr: 1e-3,
            batch_size: 128,
            mu: 0.01,
            tau: 0.5,
            contrastive_weight: 1.0,
        }
    }

    /// Stable hex fingerprint of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let canonical =
            serde_json::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(format!("v1|{canonical}").as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Basic sanity checks; sub-configs run their own validation later.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.clients == 0 {
            anyhow::bail!("clients must be >= 1");
        }
        if self.local_epochs == 0 {
            anyhow::bail!("local_epochs must be >= 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            anyhow::bail!("lr must be positive");
        }
        if self.batch_size == 0 {
            anyhow::bail!("batch_size must be >= 1");
        }
        if self.partition == PartitionScheme::DirichletContiguous
            && !(self.beta.is_finite() && self.beta > 0.0)
        {
            anyhow::bail!("beta must be positive for the Dirichlet partition");
        }
        Ok(())
    }

    /// Global epochs actually run; smoke caps the configured count.
    pub fn effective_global_epochs(&self) -> usize {
        if self.smoke {
            self.global_epochs.min(SMOKE_GLOBAL_EPOCHS)
        } else {
            self.global_epochs
        }
    }

    /// Detector configuration at the scale implied by `smoke`.
    pub fn model_config(&self, input_dims: usize) -> ModelConfig {
        if self.smoke {
            ModelConfig::desk_scale(self.model, input_dims)
        } else {
            ModelConfig::full_scale(self.model, input_dims)
        }
    }

    /// Optimizer settings.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            ..TrainConfig::default()
        }
    }

    /// Federation settings, with smoke-capped global epochs.
    pub fn federation_config(&self) -> FederationConfig {
        FederationConfig {
            strategy: self.strategy,
            global_epochs: self.effective_global_epochs(),
            local_epochs: self.local_epochs,
            mu: self.mu,
            tau: self.tau,
            contrastive_weight: self.contrastive_weight,
            seed: self.seed,
        }
    }

    /// Partition settings.
    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig {
            scheme: self.partition,
            beta: self.beta,
            n_clients: self.clients,
            seed: self.seed,
        }
    }
}

/// Partially-specified config: one layer of the default/file/CLI stack.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub dataset: Option<String>,
    pub model: Option<String>,
    pub fl: Option<String>,
    pub clients: Option<usize>,
    pub partition: Option<String>,
    pub beta: Option<f64>,
    pub global_epochs: Option<usize>,
    pub local_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub smoke: Option<bool>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    pub contrastive_weight: Option<f64>,
}

impl RawConfig {
    /// Fields set in `other` override the same fields here.
    pub fn overlay(&mut self, other: &RawConfig) {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field.clone();
                }
            };
        }
        take!(dataset);
        take!(model);
        take!(fl);
        take!(clients);
        take!(partition);
        take!(beta);
        take!(global_epochs);
        take!(local_epochs);
        take!(seed);
        take!(smoke);
        take!(lr);
        take!(batch_size);
        take!(mu);
        take!(tau);
        take!(contrastive_weight);
    }

    /// Resolve into a complete config; `dataset`, `model`, and `fl` are
    /// required, everything else falls back to dataset-aware defaults.
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let dataset = self
            .dataset
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("missing required setting: dataset"))
            .and_then(|s| DatasetName::from_str(s).map_err(Into::into))?;
        let model = self
            .model
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("missing required setting: model"))
            .and_then(|s| ModelKind::from_str(s).map_err(Into::into))?;
        let strategy = self
            .fl
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("missing required setting: fl"))
            .and_then(|s| Strategy::from_str(s).map_err(Into::into))?;

        let mut cfg = ExperimentConfig::new(dataset, model, strategy);
        if let Some(v) = self.clients {
            cfg.clients = v;
        }
        if let Some(s) = self.partition.as_deref() {
            cfg.partition = PartitionScheme::from_str(s)?;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.global_epochs {
            cfg.global_epochs = v;
        }
        if let Some(v) = self.local_epochs {
            cfg.local_epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.smoke {
            cfg.smoke = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.mu {
            cfg.mu = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.contrastive_weight {
            cfg.contrastive_weight = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Axis lists for a grid of experiments; empty axes fall back to the base.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub datasets: Option<Vec<String>>,
    pub models: Option<Vec<String>>,
    pub fls: Option<Vec<String>>,
    pub partitions: Option<Vec<String>>,
    pub betas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
}

/// TOML config file shape: a base experiment plus an optional grid.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<RawConfig>,
    pub grid: Option<RawGrid>,
}

impl FileConfig {
    /// Parse a TOML config file.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Expanded cross-product description of many experiments.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Base settings applied to every cell.
    pub base: RawConfig,
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    pub fls: Vec<String>,
    pub partitions: Vec<Option<String>>,
    pub betas: Vec<Option<f64>>,
    pub seeds: Vec<Option<u64>>,
}

impl GridSpec {
    /// Build a grid from a base config and optional axis lists. Missing
    /// axes collapse to a single cell inheriting the base value.
    pub fn from_parts(base: RawConfig, grid: RawGrid) -> anyhow::Result<Self> {
        fn axis_required(
            name: &str,
            list: Option<Vec<String>>,
            fallback: Option<&String>,
        ) -> anyhow::Result<Vec<String>> {
            match (list, fallback) {
                (Some(v), _) if !v.is_empty() => Ok(v),
                (_, Some(single)) => Ok(vec![single.clone()]),
                _ => anyhow::bail!("grid axis '{name}' is empty and no base value is set"),
            }
        }
        let datasets = axis_required("datasets", grid.datasets, base.dataset.as_ref())?;
        let models = axis_required("models", grid.models, base.model.as_ref())?;
        let fls = axis_required("fls", grid.fls, base.fl.as_ref())?;
        let partitions = match grid.partitions {
            Some(v) if !v.is_empty() => v.into_iter().map(Some).collect(),
            _ => vec![base.partition.clone()],
        };
        let betas = match grid.betas {
            Some(v) if !v.is_empty() => v.into_iter().map(Some).collect(),
            _ => vec![base.beta],
        };
        let seeds = match grid.seeds {
            Some(v) if !v.is_empty() => v.into_iter().map(Some).collect(),
            _ => vec![base.seed],
        };
        Ok(Self {
            base,
            datasets,
            models,
            fls,
            partitions,
            betas,
            seeds,
        })
    }

    /// Cross product of all axes as resolved configs.
    pub fn expand(&self) -> anyhow::Result<Vec<ExperimentConfig>> {
        let mut out = Vec::new();
        for dataset in &self.datasets {
            for model in &self.models {
                for fl in &self.fls {
                    for partition in &self.partitions {
                        for beta in &self.betas {
                            for seed in &self.seeds {
                                let mut raw = self.base.clone();
                                raw.overlay(&RawConfig {
                                    dataset: Some(dataset.clone()),
                                    model: Some(model.clone()),
                                    fl: Some(fl.clone()),
                                    partition: partition.clone(),
                                    beta: *beta,
                                    seed: *seed,
                                    ..RawConfig::default()
                                });
                                out.push(raw.resolve()?);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Short human-readable label for log lines and report rows.
pub fn config_label(cfg: &ExperimentConfig) -> String {
    format!(
        "{}/{}/{} clients={} seed={}",
        cfg.dataset.dir_name(),
        cfg.model.name(),
        cfg.strategy.name(),
        cfg.clients,
        cfg.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = ExperimentConfig::new(DatasetName::Psm, ModelKind::Usad, Strategy::FedAvg);
        let b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);

        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.fingerprint(), c.fingerprint());
        let mut d = a.clone();
        d.beta = 0.1;
        assert_ne!(a.fingerprint(), d.fingerprint());
    }

    #[test]
    fn defaults_follow_dataset() {
        let psm = ExperimentConfig::new(DatasetName::Psm, ModelKind::Usad, Strategy::FedAvg);
        assert_eq!(psm.clients, 24);
        assert_eq!(psm.partition, PartitionScheme::DirichletContiguous);
        let smd =
            ExperimentConfig::new(DatasetName::Smd, ModelKind::DeepSvdd, Strategy::Central);
        assert_eq!(smd.clients, 28);
        assert_eq!(smd.partition, PartitionScheme::PerSeries);
        let smap =
            ExperimentConfig::new(DatasetName::Smap, ModelKind::LstmAe, Strategy::Moon);
        assert_eq!(smap.clients, 54);
    }

    #[test]
    fn overlay_prefers_later_layer() {
        let mut base = RawConfig {
            dataset: Some("psm".into()),
            model: Some("usad".into()),
            fl: Some("fedavg".into()),
            seed: Some(3),
            ..RawConfig::default()
        };
        let cli = RawConfig {
            seed: Some(9),
            clients: Some(4),
            ..RawConfig::default()
        };
        base.overlay(&cli);
        let cfg = base.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.clients, 4);
        assert_eq!(cfg.dataset, DatasetName::Psm);
    }

    #[test]
    fn toml_file_round_trip() {
        let text = r#"
            [experiment]
            dataset = "psm"
            model = "usad"
            fl = "fedavg"
            beta = 0.5
            seed = 7

            [grid]
            models = ["usad", "lstmae"]
            seeds = [0, 1]
        "#;
        let file = FileConfig::parse(text).unwrap();
        let base = file.experiment.unwrap();
        let grid = GridSpec::from_parts(base, file.grid.unwrap()).unwrap();
        let cells = grid.expand().unwrap();
        assert_eq!(cells.len(), 4);
        let fps: std::collections::BTreeSet<String> =
            cells.iter().map(|c| c.fingerprint()).collect();
        assert_eq!(fps.len(), 4, "all grid cells must have distinct fingerprints");
    }

    #[test]
    fn unknown_toml_key_is_rejected() {
        let text = "[experiment]\ndataset = \"psm\"\nmodle = \"usad\"\n";
        assert!(FileConfig::parse(text).is_err());
    }

    #[test]
    fn smoke_caps_global_epochs() {
        let mut cfg = ExperimentConfig::new(DatasetName::Psm, ModelKind::Usad, Strategy::FedAvg);
        cfg.global_epochs = 10;
        cfg.smoke = true;
        assert_eq!(cfg.effective_global_epochs(), 3);
        cfg.global_epochs = 0;
        assert_eq!(cfg.effective_global_epochs(), 0);
        cfg.smoke = false;
        cfg.global_epochs = 10;
        assert_eq!(cfg.effective_global_epochs(), 10);
    }

    #[test]
    fn resolve_rejects_bad_values() {
        let raw = RawConfig {
            dataset: Some("psm".into()),
            model: Some("usad".into()),
            fl: Some("fedavg".into()),
            clients: Some(0),
            ..RawConfig::default()
        };
        assert!(raw.resolve().is_err());
        let raw = RawConfig {
            dataset: Some("nope".into()),
            model: Some("usad".into()),
            fl: Some("fedavg".into()),
            ..RawConfig::default()
        };
        assert!(raw.resolve().is_err());
    }
}
