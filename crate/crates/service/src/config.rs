//! Service configuration file (TOML).
//!
//! ```toml
//! data_dir = "./vctx-data"
//! port = 8080
//!
//! [http]
//! api_key_env = "VCTX_API_KEY"
//! retries = 2
//!
//! # Template for new agents; any AgentConfig field.
//! [agent]
//! max_tokens = 8192
//! processor = { kind = "http", endpoint = "http://localhost:8000/v1/chat/completions", model = "local" }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vctx_core::runtime::AgentConfig;

pub const DEFAULT_DATA_DIR: &str = "vctx-data";
pub const DEFAULT_PORT: u16 = 8080;

/// Settings shared by the HTTP processor and embedder clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            api_key_env: "VCTX_API_KEY".into(),
            timeout_secs: 60,
            retries: 2,
            backoff_ms: 250,
        }
    }
}

impl HttpSettings {
    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    pub port: Option<u16>,
    pub http: HttpSettings,
    pub agent: AgentConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {detail}")]
    Parse { path: String, detail: String },
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|detail| ConfigError::Parse {
            path: path.display().to_string(),
            detail,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// The command line value wins over the file, which wins over the default.
    pub fn resolve_data_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vctx_core::runtime::ProcessorBinding;

    #[test]
    fn parses_documented_example() {
        let text = "data_dir = \"d\"\nport = 9\n[http]\nretries = 4\n[agent]\nmax_tokens = 8192\n\
                    processor = { kind = \"http\", endpoint = \"http://x\", model = \"m\" }\n";
        let c = ServiceConfig::parse(text).unwrap();
        assert_eq!(c.port, Some(9));
        assert_eq!(c.http.retries, 4);
        assert_eq!(c.http.api_key_env, "VCTX_API_KEY");
        assert_eq!(c.agent.max_tokens, 8192);
        assert_eq!(
            c.agent.processor,
            ProcessorBinding::Http {
                endpoint: "http://x".into(),
                model: "m".into()
            }
        );
    }

    #[test]
    fn empty_file_is_all_defaults_and_unknown_keys_fail() {
        assert_eq!(ServiceConfig::parse("").unwrap(), ServiceConfig::default());
        assert!(ServiceConfig::parse("prot = 1").is_err());
        assert!(ServiceConfig::parse("[agent]\nmax_tokenz = 1").is_err());
    }
}
