//! Application configuration. Precedence: command-line flags, then
//! environment variables, then the config file, then built-in defaults.
//! Validation failures name the offending key and abort before any work.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub rollout: RolloutSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub clients: ClientsSection,
    /// Source-tag aliases merged into newly created registries.
    #[serde(default)]
    pub aliases: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub embed_dim: usize,
    pub interval_table: Option<PathBuf>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            embed_dim: 1024,
            interval_table: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSection {
    pub budget: usize,
    pub top_k: usize,
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self { budget: 8, top_k: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub group_size: usize,
    pub lambda_r: f64,
    pub learning_rate: f64,
    pub eps_clip: f64,
    pub beta_kl: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 500,
            group_size: 8,
            lambda_r: 0.2,
            learning_rate: 1.0,
            eps_clip: 0.2,
            beta_kl: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClientsSection {
    pub generator_url: Option<String>,
    pub judge_url: Option<String>,
    pub embedder_url: Option<String>,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => AppConfig::default(),
        };
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    fn apply_env(&mut self) {
        if self.clients.generator_url.is_none() {
            self.clients.generator_url = std::env::var("MSR2_GENERATOR_URL").ok();
        }
        if self.clients.judge_url.is_none() {
            self.clients.judge_url = std::env::var("MSR2_JUDGE_URL").ok();
        }
        if self.clients.embedder_url.is_none() {
            self.clients.embedder_url = std::env::var("MSR2_EMBEDDER_URL").ok();
        }
    }

    fn validate(&self) -> Result<()> {
        if self.retrieval.embed_dim < 8 {
            bail!("config key retrieval.embed_dim must be at least 8");
        }
        if self.rollout.budget == 0 {
            bail!("config key rollout.budget must be positive");
        }
        if self.rollout.top_k == 0 {
            bail!("config key rollout.top_k must be positive");
        }
        if self.train.group_size < 2 {
            bail!("config key train.group_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.train.lambda_r) {
            bail!("config key train.lambda_r must lie in [0, 1]");
        }
        if self.train.learning_rate <= 0.0 {
            bail!("config key train.learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.train.eps_clip) {
            bail!("config key train.eps_clip must lie in [0, 1)");
        }
        if self.train.beta_kl < 0.0 {
            bail!("config key train.beta_kl must be non-negative");
        }
        Ok(())
    }
}
