//! Configuration file and runtime wiring.
//!
//! One TOML file describes engines, the df provider, fixture paths and
//! pipeline knobs; every value can be overridden by a CLI flag. The file is
//! found via `--config` or the `RELICT_CONFIG` environment variable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::ExtractedDoc;
use crate::docfreq::{
    CachedDf, DfProvider, DfProviderConfig, DfProviderKind, FixtureDf, LocalIndexDf,
    RemoteHitCountDf, DEFAULT_WEB_N_DOCS,
};
use crate::pipeline::EscalationPolicy;
use crate::providers::transport::{HttpTransport, UreqTransport};
use crate::providers::{Engine, EngineBinding, EngineKind};
use crate::search::{Index, RankingFn};
use crate::stopwords::{StopwordError, StopwordSet};

pub const CONFIG_ENV: &str = "RELICT_CONFIG";
pub const ENGINE_ENDPOINT_ENV: &str = "RELICT_ENGINE_ENDPOINT";
pub const ENGINE_KEY_ENV: &str = "RELICT_ENGINE_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Load { path: String, message: String },
    #[error("no engine named {0:?} in config")]
    UnknownEngine(String),
    #[error("engine {engine_id}: {message}")]
    BadEngine { engine_id: String, message: String },
    #[error("df provider {provider_id}: {message}")]
    BadDfProvider {
        provider_id: String,
        message: String,
    },
    #[error("title_skip_threshold must be within [0, 1], got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Stopwords(#[from] StopwordError),
    #[error(transparent)]
    Index(#[from] crate::search::IndexError),
    #[error(transparent)]
    Provider(#[from] crate::providers::ProviderError),
    #[error(transparent)]
    Df(#[from] crate::docfreq::DfError),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProvidersConfig {
    /// Tag fixture (JSONL `{"uri", "tags"}`).
    #[serde(default)]
    pub tags: Option<PathBuf>,
    /// Backlink fixture (JSONL `{"uri", "inlinks"}`).
    #[serde(default)]
    pub inlinks: Option<PathBuf>,
    /// Page-copy fixture (JSONL `{"uri", "html_path"}`).
    #[serde(default)]
    pub pages: Option<PathBuf>,
    #[serde(default = "default_inlink_cap")]
    pub inlink_cap: usize,
}

fn default_inlink_cap() -> usize {
    50
}

/// The whole configuration surface of the CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CliConfig {
    /// Stop word list; the bundled SMART list when absent.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    /// Corpus manifest holding the cached page copies.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// df cache TSV; enables caching when set.
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    #[serde(default)]
    pub cache_max_age_hours: Option<i64>,
    /// Default fallback chain, e.g. "TI-LS5".
    #[serde(default)]
    pub combination: Option<String>,
    #[serde(default)]
    pub escalate_unless: Option<EscalationPolicy>,
    /// τ for the title-length predictor.
    #[serde(default)]
    pub title_skip_threshold: Option<f64>,
    #[serde(default)]
    pub default_engine: Option<String>,
    #[serde(default)]
    pub ranking: Option<RankingFn>,
    #[serde(default)]
    pub df: Option<DfProviderConfig>,
    #[serde(default)]
    pub engines: BTreeMap<String, EngineBinding>,
    #[serde(default)]
    pub providers: ProvidersConfig,
}

impl CliConfig {
    /// Load from an explicit path, else `RELICT_CONFIG`, else defaults.
    /// Returns the config and the directory its relative paths resolve
    /// against.
    pub fn load(explicit: Option<&Path>) -> Result<(Self, PathBuf), ConfigError> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let path = explicit.map(Path::to_path_buf).or(env_path);
        match path {
            Some(path) => {
                let text = fs::read_to_string(&path).map_err(|e| ConfigError::Load {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                let config: CliConfig = toml::from_str(&text).map_err(|e| ConfigError::Load {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                if let Some(t) = config.title_skip_threshold {
                    if !(0.0..=1.0).contains(&t) {
                        return Err(ConfigError::BadThreshold(t));
                    }
                }
                let base = path
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."));
                Ok((config, base))
            }
            None => Ok((CliConfig::default(), PathBuf::from("."))),
        }
    }

    pub fn stopword_set(&self, base: &Path) -> Result<StopwordSet, ConfigError> {
        match &self.stopwords {
            Some(path) => Ok(StopwordSet::from_file(&base.join(path))?),
            None => Ok(StopwordSet::bundled()),
        }
    }
}

/// Built runtime pieces shared by the commands.
pub struct Runtime {
    pub config: CliConfig,
    pub base: PathBuf,
    pub stopwords: StopwordSet,
    pub transport: Arc<dyn HttpTransport>,
}

impl Runtime {
    pub fn new(config_path: Option<&Path>) -> Result<Self, ConfigError> {
        let (config, base) = CliConfig::load(config_path)?;
        let stopwords = config.stopword_set(&base)?;
        Ok(Self {
            config,
            base,
            stopwords,
            transport: Arc::new(UreqTransport::new()),
        })
    }

    /// Resolve an engine binding by name and build it. `universe` supplies
    /// the corpus for a local-sim binding whose index file is absent.
    pub fn build_engine(
        &self,
        name: &str,
        universe: Option<&[ExtractedDoc]>,
    ) -> Result<Engine, ConfigError> {
        let binding = self
            .config
            .engines
            .get(name)
            .ok_or_else(|| ConfigError::UnknownEngine(name.to_string()))?;
        let engine_id = if binding.engine_id.is_empty() {
            name.to_string()
        } else {
            binding.engine_id.clone()
        };
        match binding.kind {
            EngineKind::LocalSim => {
                let index = self.load_or_build_index(binding, universe, &engine_id)?;
                Ok(Engine::local_sim(&engine_id, index, binding.max_results))
            }
            EngineKind::FixtureReplay => {
                let path = binding.fixture_path.as_ref().ok_or_else(|| ConfigError::BadEngine {
                    engine_id: engine_id.clone(),
                    message: "fixture-replay needs fixture_path".into(),
                })?;
                Ok(Engine::fixture_replay(
                    &engine_id,
                    &self.base.join(path),
                    binding.max_results,
                )?)
            }
            EngineKind::RemoteGeneric => {
                let endpoint = binding
                    .endpoint
                    .clone()
                    .or_else(|| std::env::var(ENGINE_ENDPOINT_ENV).ok())
                    .ok_or_else(|| ConfigError::BadEngine {
                        engine_id: engine_id.clone(),
                        message: format!("remote-generic needs endpoint (or {ENGINE_ENDPOINT_ENV})"),
                    })?;
                let api_key = std::env::var(ENGINE_KEY_ENV).ok();
                Ok(Engine::remote_generic(
                    &engine_id,
                    &endpoint,
                    api_key,
                    binding.rate_limit,
                    binding.max_results,
                    self.transport.clone(),
                    None,
                ))
            }
        }
    }

    fn load_or_build_index(
        &self,
        binding: &EngineBinding,
        universe: Option<&[ExtractedDoc]>,
        engine_id: &str,
    ) -> Result<Arc<Index>, ConfigError> {
        if let Some(rel) = &binding.index_path {
            let path = self.base.join(rel);
            if path.exists() {
                let mut index = Index::load(&path)?;
                if let Some(ranking) = self.config.ranking {
                    index.set_ranking(ranking);
                }
                return Ok(Arc::new(index));
            }
        }
        let docs = universe.ok_or_else(|| ConfigError::BadEngine {
            engine_id: engine_id.to_string(),
            message: "local-sim has no index file and no corpus to build one from".into(),
        })?;
        let mut index = Index::build(docs, &self.stopwords)?;
        if let Some(ranking) = self.config.ranking {
            index.set_ranking(ranking);
        }
        Ok(Arc::new(index))
    }

    /// Build the configured df provider. Local-index providers compute
    /// exact counts over `universe`.
    pub fn build_df_provider(
        &self,
        universe: &[ExtractedDoc],
    ) -> Result<Arc<dyn DfProvider>, ConfigError> {
        let Some(df_config) = &self.config.df else {
            return Ok(Arc::new(LocalIndexDf::from_docs(universe, "local-index")));
        };
        let provider_id = df_config.provider_id.as_str();
        let n_docs = df_config.n_docs_override.unwrap_or(DEFAULT_WEB_N_DOCS);
        let inner: Arc<dyn DfProvider> = match df_config.kind {
            DfProviderKind::LocalIndex => {
                Arc::new(LocalIndexDf::from_docs(universe, provider_id))
            }
            DfProviderKind::RemoteHitcount | DfProviderKind::CacheWrapped => {
                let endpoint =
                    df_config
                        .endpoint
                        .as_deref()
                        .ok_or_else(|| ConfigError::BadDfProvider {
                            provider_id: provider_id.to_string(),
                            message: "remote provider needs endpoint".into(),
                        })?;
                if let Some(fixture) = endpoint.strip_prefix("fixture:") {
                    Arc::new(FixtureDf::load(
                        &self.base.join(fixture),
                        n_docs,
                        provider_id,
                    )?)
                } else {
                    Arc::new(RemoteHitCountDf::new(
                        provider_id,
                        endpoint,
                        n_docs,
                        df_config.rate_limit,
                        self.transport.clone(),
                        None,
                    ))
                }
            }
        };
        let wrap_cache = df_config.kind == DfProviderKind::CacheWrapped
            || (self.config.cache_path.is_some() && df_config.kind != DfProviderKind::LocalIndex);
        if wrap_cache {
            let cache_rel = self
                .config
                .cache_path
                .clone()
                .unwrap_or_else(|| PathBuf::from("df_cache.tsv"));
            let max_age =
                chrono::Duration::hours(self.config.cache_max_age_hours.unwrap_or(24 * 30));
            return Ok(Arc::new(CachedDf::new(
                inner,
                &self.base.join(cache_rel),
                max_age,
            )?));
        }
        Ok(inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let text = r#"
            combination = "TI-LS5"
            title_skip_threshold = 0.5

            [df]
            provider_id = "local"
            kind = "local-index"

            [engines.local]
            engine_id = "local-sim"
            kind = "local-sim"
            max_results = 100

            [engines.replay]
            engine_id = "yahoo"
            kind = "fixture-replay"
            fixture_path = "engine_replay.jsonl"

            [providers]
            tags = "tags.jsonl"
            inlink_cap = 50
        "#;
        let config: CliConfig = toml::from_str(text).unwrap();
        assert_eq!(config.combination.as_deref(), Some("TI-LS5"));
        assert_eq!(config.engines.len(), 2);
        assert_eq!(config.engines["replay"].kind, EngineKind::FixtureReplay);
        assert_eq!(config.providers.inlink_cap, 50);
        assert_eq!(
            config.df.as_ref().unwrap().kind,
            DfProviderKind::LocalIndex
        );
    }

    #[test]
    fn bad_threshold_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("relict.toml");
        fs::write(&path, "title_skip_threshold = 1.5\n").unwrap();
        assert!(matches!(
            CliConfig::load(Some(&path)),
            Err(ConfigError::BadThreshold(_))
        ));
    }

    #[test]
    fn missing_config_is_defaults() {
        std::env::remove_var(CONFIG_ENV);
        let (config, _) = CliConfig::load(None).unwrap();
        assert!(config.engines.is_empty());
        assert!(config.df.is_none());
    }
}
