//! Settings resolution: command-line flag, then environment variable, then
//! `ace.toml`, then built-in default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ace_core::clock::{Clock, FixedClock, SystemClock};
use ace_core::gateway::{Gateway, GatewayConfig, Mode};
use ace_core::history::Store;
use ace_core::Engine;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_STORE_PATH: &str = "ace-store";
pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_FIXTURES_DIR: &str = "fixtures";
pub const CONFIG_FILE_NAME: &str = "ace.toml";

/// Contents of `ace.toml`. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub store_path: Option<PathBuf>,
    pub bind_addr: Option<String>,
    pub fixtures_dir: Option<PathBuf>,
    pub llm_mode: Option<String>,
    pub llm_base_url: Option<String>,
    pub llm_model: Option<String>,
    pub llm_api_key: Option<String>,
    pub fixed_clock: Option<String>,
}

impl FileConfig {
    /// Reads an explicit config file, or `./ace.toml` when present.
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let default = PathBuf::from(CONFIG_FILE_NAME);
                if !default.is_file() {
                    return Ok(Self::default());
                }
                default
            }
        };
        let raw = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Values given on the command line or through the environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub store_path: Option<PathBuf>,
    pub bind_addr: Option<String>,
    pub fixtures_dir: Option<PathBuf>,
    pub llm_mode: Option<String>,
    pub llm_base_url: Option<String>,
    pub llm_model: Option<String>,
    pub llm_api_key: Option<String>,
    pub fixed_clock: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub store_path: PathBuf,
    pub bind_addr: String,
    pub gateway: GatewayConfig,
    pub fixed_clock: Option<String>,
}

impl Settings {
    pub fn resolve(overrides: Overrides, file: FileConfig) -> Result<Self, CliError> {
        let mode: Mode = match overrides.llm_mode.or(file.llm_mode) {
            Some(m) => m.parse().map_err(|e: ace_core::gateway::GatewayError| CliError::Config(e.to_string()))?,
            None => Mode::Replay,
        };
        Ok(Settings {
            store_path: overrides.store_path.or(file.store_path).unwrap_or_else(|| DEFAULT_STORE_PATH.into()),
            bind_addr: overrides.bind_addr.or(file.bind_addr).unwrap_or_else(|| DEFAULT_BIND_ADDR.into()),
            gateway: GatewayConfig {
                mode,
                base_url: overrides.llm_base_url.or(file.llm_base_url),
                api_key: overrides.llm_api_key.or(file.llm_api_key),
                model: overrides.llm_model.or(file.llm_model),
                fixtures_dir: overrides
                    .fixtures_dir
                    .or(file.fixtures_dir)
                    .unwrap_or_else(|| DEFAULT_FIXTURES_DIR.into()),
            },
            fixed_clock: overrides.fixed_clock.or(file.fixed_clock),
        })
    }

    pub fn clock(&self) -> Result<Arc<dyn Clock>, CliError> {
        Ok(match &self.fixed_clock {
            Some(ts) => {
                Arc::new(FixedClock::parse(ts).map_err(|e| CliError::Config(format!("fixed clock {ts:?}: {e}")))?)
            }
            None => Arc::new(SystemClock),
        })
    }

    /// Opens the store and wires the gateway.
    pub fn engine(&self) -> Result<Engine, CliError> {
        let clock = self.clock()?;
        let store = Store::open(&self.store_path).map_err(|e| CliError::Domain(e.into()))?;
        let gateway = Gateway::from_config(&self.gateway, clock.clone()).map_err(|e| CliError::Domain(e.into()))?;
        Ok(Engine::new(store, Arc::new(gateway), clock))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_precedence_flag_env_over_file_over_default() {
        let file: FileConfig = toml::from_str(
            "store_path = \"from-file\"\nbind_addr = \"0.0.0.0:9000\"\nllm_mode = \"record\"\nllm_api_key = \"k\"",
        )
        .unwrap();
        let overrides = Overrides { store_path: Some("from-flag".into()), ..Default::default() };
        let s = Settings::resolve(overrides, file).unwrap();
        assert_eq!(s.store_path, PathBuf::from("from-flag"));
        assert_eq!(s.bind_addr, "0.0.0.0:9000");
        assert_eq!(s.gateway.mode, Mode::Record);
        assert_eq!(s.gateway.fixtures_dir, PathBuf::from(DEFAULT_FIXTURES_DIR));

        let d = Settings::resolve(Overrides::default(), FileConfig::default()).unwrap();
        assert_eq!(d.store_path, PathBuf::from(DEFAULT_STORE_PATH));
        assert_eq!(d.bind_addr, DEFAULT_BIND_ADDR);
        assert_eq!(d.gateway.mode, Mode::Replay);
    }

    #[test]
    fn test_bad_values_rejected() {
        let bad_mode = Overrides { llm_mode: Some("dream".into()), ..Default::default() };
        assert!(matches!(Settings::resolve(bad_mode, FileConfig::default()), Err(CliError::Config(_))));
        assert!(toml::from_str::<FileConfig>("colour = \"red\"").is_err());
        let clock = Overrides { fixed_clock: Some("yesterday".into()), ..Default::default() };
        assert!(Settings::resolve(clock, FileConfig::default()).unwrap().clock().is_err());
    }

    #[test]
    fn test_live_mode_without_key_is_config_error() {
        let overrides = Overrides { llm_mode: Some("live".into()), ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let mut s = Settings::resolve(overrides, FileConfig::default()).unwrap();
        s.store_path = dir.path().to_path_buf();
        let err = s.engine().unwrap_err();
        assert_eq!(err.code(), "config_error");
    }
}
