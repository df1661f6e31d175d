use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionConfig;
use crate::error::{Error, Result};

pub const PORT_ENV: &str = "CHOICECTX_PORT";
pub const DATA_DIR_ENV: &str = "CHOICECTX_DATA_DIR";

/// Service configuration file (TOML). `port` and `data_dir` can be overridden
/// through the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    /// Session storage; sessions live in memory only when absent.
    pub data_dir: Option<PathBuf>,
    /// Web console bundle served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Defaults for sessions created without a config.
    pub session: SessionConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: Some(PathBuf::from("choicectx-data")),
            static_dir: None,
            session: SessionConfig::default(),
        }
    }
}

impl ServeConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn apply_env(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self> {
        if let Some(port) = var(PORT_ENV) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("{PORT_ENV}={port} is not a port")))?;
        }
        if let Some(dir) = var(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
            self.data_dir = Some(PathBuf::from(dir));
        }
        Ok(self)
    }

    pub fn addr(&self) -> Result<SocketAddr> {
        format!("{}:{}", self.host, self.port).parse().map_err(|_| {
            Error::InvalidParameter(format!("bad listen address {}:{}", self.host, self.port))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_with_env_overrides() {
        let cfg = ServeConfig::from_toml(
            "port = 9000\ndata_dir = \"/tmp/a\"\n[session.detector]\ntheta = 0.8\n",
        )
        .unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.session.detector.theta, 0.8);
        assert_eq!(cfg.session.detector.min_support, 5);
        let cfg = cfg
            .apply_env(|k| match k {
                PORT_ENV => Some("9100".into()),
                DATA_DIR_ENV => Some("/tmp/b".into()),
                _ => None,
            })
            .unwrap();
        assert_eq!(
            (cfg.port, cfg.data_dir.unwrap()),
            (9100, PathBuf::from("/tmp/b"))
        );
        assert!(ServeConfig::default()
            .apply_env(|_| Some("x".into()))
            .is_err());
    }
}
