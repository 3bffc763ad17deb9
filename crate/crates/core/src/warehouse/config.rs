//! Warehouse configuration, read from TOML:
//!
//! ```toml
//! mode = "push"                 # "poll" | "push" | "push-with-safety-poll"
//! listen = "127.0.0.1:7070"
//!
//! [mqtt]
//! mqtt_url = "mqtt://127.0.0.1:1883"
//! batch_window_ms = 0
//! max_batch = 10
//! buffer_max = 1000
//! safety_poll_ms = 60000
//!
//! [store]
//! dump = "warehouse.nt"
//!
//! [[servers]]
//! server_id = "reqs"
//! base_url = "http://127.0.0.1:8081"
//! trs_url = "http://127.0.0.1:8081/trs"
//! poll_period_ms = 5000
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const DEFAULT_POLL_PERIOD_MS: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Poll,
    Push,
    PushWithSafetyPoll,
}

impl Mode {
    pub fn polls(self) -> bool {
        self != Mode::Push
    }

    pub fn pushes(self) -> bool {
        self != Mode::Poll
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "poll" => Ok(Mode::Poll),
            "push" => Ok(Mode::Push),
            "push-with-safety-poll" => Ok(Mode::PushWithSafetyPoll),
            other => Err(format!(
                "unknown mode {other:?} (expected poll, push or push-with-safety-poll)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    pub server_id: String,
    pub base_url: String,
    pub trs_url: String,
    #[serde(default = "default_poll_period")]
    pub poll_period_ms: u64,
}

impl ServerEntry {
    /// Entry for a server at `base_url` with its TRS at `{base_url}/trs`.
    pub fn new(server_id: impl Into<String>, base_url: impl Into<String>) -> Self {
        let base_url = base_url.into();
        ServerEntry {
            server_id: server_id.into(),
            trs_url: format!("{base_url}/trs"),
            base_url,
            poll_period_ms: DEFAULT_POLL_PERIOD_MS,
        }
    }

    pub fn with_poll_period(mut self, ms: u64) -> Self {
        self.poll_period_ms = ms;
        self
    }
}

fn default_poll_period() -> u64 {
    DEFAULT_POLL_PERIOD_MS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MqttSettings {
    pub mqtt_url: Option<String>,
    pub batch_window_ms: u64,
    pub max_batch: usize,
    pub buffer_max: usize,
    /// Poll period used in push-with-safety-poll mode.
    pub safety_poll_ms: u64,
}

impl Default for MqttSettings {
    fn default() -> Self {
        MqttSettings {
            mqtt_url: None,
            batch_window_ms: 0,
            max_batch: 10,
            buffer_max: 1_000,
            safety_poll_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSettings {
    /// Written with the union-default N-Triples on shutdown.
    pub dump: Option<PathBuf>,
    /// Loaded before the initial sync.
    pub load: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarehouseConfig {
    pub mode: Mode,
    pub listen: Option<String>,
    pub servers: Vec<ServerEntry>,
    pub mqtt: MqttSettings,
    pub store: StoreSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl WarehouseConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: WarehouseConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for server in &self.servers {
            if server.server_id.is_empty() {
                return Err(ConfigError::Invalid("empty server_id".into()));
            }
            if !seen.insert(server.server_id.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate server_id {:?}",
                    server.server_id
                )));
            }
            if self.mode.polls() && server.poll_period_ms == 0 {
                return Err(ConfigError::Invalid(format!(
                    "server {:?}: poll_period_ms must be positive",
                    server.server_id
                )));
            }
        }
        if self.mqtt.max_batch == 0 {
            return Err(ConfigError::Invalid("mqtt.max_batch must be positive".into()));
        }
        if self.mode == Mode::PushWithSafetyPoll && self.mqtt.safety_poll_ms == 0 {
            return Err(ConfigError::Invalid("mqtt.safety_poll_ms must be positive".into()));
        }
        Ok(())
    }
}
