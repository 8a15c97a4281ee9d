//! Backend configuration file.
//!
//! One TOML section per backend kind; any subset may be present:
//!
//! ```toml
//! [chat]
//! endpoint = "https://api.openai.com/v1"
//! model_id = "gpt-4"
//! auth_env_var = "OPENAI_API_KEY"
//! timeout = 60.0
//! max_concurrency = 4
//! max_retries = 2
//!
//! [embedding]
//! endpoint = "http://localhost:7997"
//! model_id = "ViT-bigG-14/laion2b_s39b_b160k"
//! ```
//!
//! Credentials are never written in the file: `auth_env_var` names an
//! environment variable that must hold the API key at run time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default embedder: OpenCLIP ViT-bigG-14 pretrained on LAION-2B.
pub const DEFAULT_EMBED_MODEL: &str = "ViT-bigG-14/laion2b_s39b_b160k";

fn default_timeout() -> f64 {
    60.0
}
fn default_concurrency() -> usize {
    4
}
fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Base URL of an OpenAI-compatible server, including any `/v1` prefix.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    /// Request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Maximum in-flight requests to this backend.
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Extra attempts after a retryable failure (transport error, 429, 5xx).
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: String::new(),
            model_id: String::new(),
            auth_env_var: None,
            timeout: default_timeout(),
            max_concurrency: default_concurrency(),
            max_retries: default_retries(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self, section: &str) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(Error::Config(format!("[{section}] endpoint is empty")));
        }
        if self.model_id.is_empty() {
            return Err(Error::Config(format!("[{section}] model_id is empty")));
        }
        if !(self.timeout > 0.0) {
            return Err(Error::Config(format!("[{section}] timeout must be positive")));
        }
        if self.max_concurrency == 0 {
            return Err(Error::Config(format!(
                "[{section}] max_concurrency must be at least 1"
            )));
        }
        Ok(())
    }
}

/// Parsed backend config file. Sections may be omitted; using an operation
/// whose section is missing is a configuration error at run time.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chat: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vqa: Option<BackendConfig>,
}

impl BackendsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: BackendsFile = toml::from_str(&raw)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (name, section) in [
            ("caption", &file.caption),
            ("chat", &file.chat),
            ("embedding", &file.embedding),
            ("vqa", &file.vqa),
        ] {
            if let Some(cfg) = section {
                cfg.validate(name)?;
            }
        }
        Ok(file)
    }

    /// A filled-in sample, used by docs and the `describe --help` workflow.
    pub fn example() -> Self {
        let base = |endpoint: &str, model: &str| BackendConfig {
            endpoint: endpoint.to_string(),
            model_id: model.to_string(),
            auth_env_var: Some("OPENAI_API_KEY".to_string()),
            timeout: default_timeout(),
            max_concurrency: default_concurrency(),
            max_retries: default_retries(),
        };
        BackendsFile {
            caption: Some(base("http://localhost:8001/v1", "blip2-flan-t5-xxl")),
            chat: Some(base("https://api.openai.com/v1", "gpt-4")),
            embedding: Some(BackendConfig {
                auth_env_var: None,
                ..base("http://localhost:7997", DEFAULT_EMBED_MODEL)
            }),
            vqa: Some(base("http://localhost:8002/v1", "llava-1.5-13b")),
        }
    }
}
