//! Server configuration: defaults, TOML file loading and environment overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::content::LangCode;
use crate::engage::BadgeRule;

/// Prefix for environment overrides, e.g. `PEERLINGO_HANDSHAKE_TIMEOUT_S=30`.
pub const ENV_PREFIX: &str = "PEERLINGO_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub handshake_timeout_s: i64,
    pub missed_ttl_s: i64,
    pub signup_grant_s: i64,
    pub invite_bonus_s: i64,
    pub expert_threshold: u32,
    pub controller_enabled: bool,
    pub languages: Vec<LangCode>,
    pub badges: Vec<BadgeRule>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            handshake_timeout_s: 60,
            missed_ttl_s: 600,
            signup_grant_s: 1800,
            invite_bonus_s: 1800,
            expert_threshold: 5,
            controller_enabled: false,
            languages: ["en", "es", "ru", "de"].into_iter().map(LangCode::from).collect(),
            badges: BadgeRule::defaults(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment override {key}: {message}")]
    Env { key: String, message: String },
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Applies `PEERLINGO_<KEY>` overrides from the process environment.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(std::env::vars())
    }

    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (key, value) in vars {
            let Some(name) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let value = value.as_ref().trim();
            let bad = |message: &str| ConfigError::Env {
                key: key.as_ref().to_owned(),
                message: message.to_owned(),
            };
            match name.to_ascii_lowercase().as_str() {
                "handshake_timeout_s" => {
                    self.handshake_timeout_s = value.parse().map_err(|_| bad("expected integer"))?
                }
                "missed_ttl_s" => self.missed_ttl_s = value.parse().map_err(|_| bad("expected integer"))?,
                "signup_grant_s" => {
                    self.signup_grant_s = value.parse().map_err(|_| bad("expected integer"))?
                }
                "invite_bonus_s" => {
                    self.invite_bonus_s = value.parse().map_err(|_| bad("expected integer"))?
                }
                "expert_threshold" => {
                    self.expert_threshold = value.parse().map_err(|_| bad("expected integer"))?
                }
                "controller_enabled" => {
                    self.controller_enabled = value.parse().map_err(|_| bad("expected true/false"))?
                }
                "languages" => {
                    self.languages = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(LangCode::from)
                        .collect();
                    if self.languages.is_empty() {
                        return Err(bad("language list is empty"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
