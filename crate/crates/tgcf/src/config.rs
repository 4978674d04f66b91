//! Experiment configuration: a single TOML document with sections for data,
//! split, model, training, evaluation, sweep grid and output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::SynthSpec;
use crate::engine::{FeatureMode, ModelConfig, Variant};
use crate::error::{Result, TgcfError};
use crate::training::TrainConfig;

/// Which model a run trains and evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunModel {
    Static,
    Windowed,
    ForwardWeighted,
    Mf,
    MostPop,
    RecentPop,
}

impl RunModel {
    pub fn is_trained(self) -> bool {
        !matches!(self, RunModel::MostPop | RunModel::RecentPop)
    }

    /// Engine variant for GNN/MF models.
    pub fn variant(self) -> Option<Variant> {
        match self {
            RunModel::Static | RunModel::Mf => Some(Variant::Static),
            RunModel::Windowed => Some(Variant::Windowed),
            RunModel::ForwardWeighted => Some(Variant::ForwardWeighted),
            RunModel::MostPop | RunModel::RecentPop => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunModel::Static => "static",
            RunModel::Windowed => "windowed",
            RunModel::ForwardWeighted => "forward_weighted",
            RunModel::Mf => "mf",
            RunModel::MostPop => "most_pop",
            RunModel::RecentPop => "recent_pop",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSection {
    pub events: PathBuf,
    pub items: PathBuf,
    #[serde(default = "default_true")]
    pub infer_missing: bool,
    #[serde(default = "default_margin")]
    pub maturity_margin: u32,
}

fn default_true() -> bool {
    true
}
fn default_margin() -> u32 {
    30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSection {
    pub train_end_day: u32,
    pub val_end_day: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub model: RunModel,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_id_dim")]
    pub id_dim: usize,
    #[serde(default = "default_feature_mode")]
    pub feature_mode: FeatureMode,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_window")]
    pub window: u32,
}

fn default_layers() -> usize {
    1
}
fn default_id_dim() -> usize {
    64
}
fn default_feature_mode() -> FeatureMode {
    FeatureMode::IdOnly
}
fn default_feature_dim() -> usize {
    16
}
fn default_window() -> u32 {
    2
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            model: RunModel::Windowed,
            layers: default_layers(),
            id_dim: default_id_dim(),
            feature_mode: default_feature_mode(),
            feature_dim: default_feature_dim(),
            window: default_window(),
        }
    }
}

impl ModelSection {
    /// Engine configuration for trainable models; MF pins K=0 / IdOnly.
    pub fn engine_config(&self) -> Option<ModelConfig> {
        let variant = self.model.variant()?;
        Some(match self.model {
            RunModel::Mf => ModelConfig {
                variant,
                layers: 0,
                id_dim: self.id_dim,
                feature_mode: FeatureMode::IdOnly,
                feature_dim: self.feature_dim,
                window: 1,
            },
            _ => ModelConfig {
                variant,
                layers: self.layers,
                id_dim: self.id_dim,
                feature_mode: self.feature_mode,
                feature_dim: self.feature_dim,
                window: self.window,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_neg_ratio")]
    pub neg_ratio: usize,
    #[serde(default = "d_dns_pool")]
    pub dns_pool: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_eval_every")]
    pub eval_every: usize,
}

fn d_epochs() -> usize {
    40
}
fn d_patience() -> usize {
    10
}
fn d_neg_ratio() -> usize {
    10
}
fn d_dns_pool() -> usize {
    50
}
fn d_lr() -> f64 {
    1e-4
}
fn d_eval_every() -> usize {
    1
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: d_epochs(),
            patience: d_patience(),
            neg_ratio: d_neg_ratio(),
            dns_pool: d_dns_pool(),
            lr: d_lr(),
            eval_every: d_eval_every(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            neg_ratio: self.neg_ratio,
            dns_pool: self.dns_pool,
            lr: self.lr,
            seed,
            eval_every: self.eval_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default)]
    pub map_literal_paper_formula: bool,
}

fn d_k() -> usize {
    50
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { k: d_k(), map_literal_paper_formula: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default = "d_variants")]
    pub variants: Vec<RunModel>,
    #[serde(default = "d_windows")]
    pub windows: Vec<u32>,
    #[serde(default = "d_sweep_layers")]
    pub layers: Vec<usize>,
    #[serde(default = "d_feature_modes")]
    pub feature_modes: Vec<FeatureMode>,
}

fn d_variants() -> Vec<RunModel> {
    vec![RunModel::Static, RunModel::Windowed, RunModel::ForwardWeighted]
}
fn d_windows() -> Vec<u32> {
    (1..=25).collect()
}
fn d_sweep_layers() -> Vec<usize> {
    vec![1]
}
fn d_feature_modes() -> Vec<FeatureMode> {
    vec![FeatureMode::IdOnly]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            variants: d_variants(),
            windows: d_windows(),
            layers: d_sweep_layers(),
            feature_modes: d_feature_modes(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputSection {
    /// ISO date mapped to day index 0, for report labels only.
    #[serde(default)]
    pub base_date: Option<String>,
}

/// The whole experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    #[serde(default)]
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(Self, String)> {
        let raw = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&raw)
            .map_err(|e| TgcfError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok((cfg, raw))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synth) {
            (None, None) => {
                return Err(TgcfError::Config(
                    "config needs a [data] or a [synth] section".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(TgcfError::Config(
                    "config has both [data] and [synth]; pick one".into(),
                ))
            }
            _ => {}
        }
        if self.data.is_some() && self.split.is_none() {
            return Err(TgcfError::Config(
                "[data] requires a [split] section (key split.train_end_day)".into(),
            ));
        }
        if let Some(s) = &self.split {
            if s.train_end_day == 0 || s.train_end_day >= s.val_end_day {
                return Err(TgcfError::Config(
                    "split must satisfy 0 < train_end_day < val_end_day".into(),
                ));
            }
        }
        if let Some(cfg) = self.model.engine_config() {
            cfg.validate()?;
        }
        if self.sweep.windows.is_empty() || self.sweep.variants.is_empty() {
            return Err(TgcfError::Config("sweep.windows and sweep.variants must be nonempty".into()));
        }
        {
            let mut w = self.sweep.windows.clone();
            w.sort_unstable();
            w.dedup();
            if w.len() != self.sweep.windows.len() || w.first() == Some(&0) {
                return Err(TgcfError::Config(
                    "sweep.windows values must be >= 1 and distinct".into(),
                ));
            }
        }
        if self.eval.k == 0 {
            return Err(TgcfError::Config("eval.k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Documentation of every configuration key, printed by `--help-config`.
pub const CONFIG_HELP: &str = r#"Configuration file reference (TOML)

Top level
  seed                       integer, master RNG seed (default 0); the CLI
                             flag --seed overrides it.

[data]        load a real dataset (mutually exclusive with [synth])
  events                     path to events CSV: header day,user_id,item_id
  items                      path to items CSV: header item_id,rating,sector,
                             industry,country,currency,grade,seniority,
                             issue_day,maturity_day
  infer_missing              bool (true): infer availability for items missing
                             from the file from their observed event days
  maturity_margin            days added past the last observed day when
                             inferring maturity (default 30)

[synth]       generate a drifting synthetic dataset
  users, items, days, events_per_day    required positive integers
  segments                   latent user segments (default 8)
  item_clusters              item clusters (default 12)
  regime_length              days between preference re-draws (default 20)
  repeat_prob                fraction of the previous day replayed (0.134)
  item_lifetime_mean         mean item lifetime in days (default 60)
  train_end_day, val_end_day optional split boundaries (defaults: 2/3, 5/6
                             of the day span)

[split]       required with [data]; overrides [synth] defaults when present
  train_end_day              first validation day
  val_end_day                first test day

[model]
  model                      one of: static | windowed | forward_weighted |
                             mf | most_pop | recent_pop (default windowed)
  layers                     propagation layers K in 0..=3 (default 1)
  id_dim                     ID embedding size (default 64)
  feature_mode               id_only | id_plus_features (default id_only)
  feature_dim                per-feature embedding size (default 16)
  window                     window w in days for windowed / forward_weighted
                             / recent_pop (default 2)

[train]
  epochs                     max epochs (default 40)
  patience                   validation evaluations without improvement
                             before stopping (default 10)
  neg_ratio                  negatives kept per positive (default 10)
  dns_pool                   uniformly drawn candidates scored per positive
                             (default 50)
  lr                         Adam learning rate (default 1e-4)
  eval_every                 epochs between validation passes (default 1)

[eval]
  k                          cutoff for Recall@K / NDCG@K (default 50)
  map_literal_paper_formula  bool (false): skip the division of average
                             precision by the number of relevant items

[sweep]
  variants                   list of model names (default [static, windowed,
                             forward_weighted])
  windows                    list of window sizes (default 1..=25)
  layers                     list of layer counts (default [1])
  feature_modes              list of feature modes (default [id_only])

[output]
  base_date                  ISO date (YYYY-MM-DD) mapped to day index 0 for
                             report labels only
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synth_config_parses_with_defaults() {
        let raw = r#"
            seed = 3
            [synth]
            users = 10
            items = 20
            days = 30
            events_per_day = 15
        "#;
        let cfg: ExperimentConfig = toml::from_str(raw).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.train.epochs, 40);
        assert_eq!(cfg.eval.k, 50);
        assert_eq!(cfg.sweep.windows.len(), 25);
        assert_eq!(cfg.model.model, RunModel::Windowed);
    }

    #[test]
    fn window_zero_rejected_for_windowed_model() {
        let raw = r#"
            [synth]
            users = 10
            items = 20
            days = 30
            events_per_day = 15
            [model]
            model = "windowed"
            window = 0
        "#;
        let cfg: ExperimentConfig = toml::from_str(raw).unwrap();
        assert!(matches!(cfg.validate(), Err(TgcfError::Config(_))));
    }

    #[test]
    fn data_without_split_rejected() {
        let raw = r#"
            [data]
            events = "e.csv"
            items = "i.csv"
        "#;
        let cfg: ExperimentConfig = toml::from_str(raw).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn duplicate_sweep_windows_rejected() {
        let raw = r#"
            [synth]
            users = 10
            items = 20
            days = 30
            events_per_day = 15
            [sweep]
            windows = [1, 2, 2]
        "#;
        let cfg: ExperimentConfig = toml::from_str(raw).unwrap();
        assert!(cfg.validate().is_err());
    }
}
