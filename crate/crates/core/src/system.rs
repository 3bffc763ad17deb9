//! The whole system from one TOML file: the three tool services, the
//! optional broker connection, and the warehouse.
//!
//! ```toml
//! mode = "push"            # "direct" | "poll" | "push" | "push-with-safety-poll"
//! listen = "127.0.0.1:7070"
//! poll_period_ms = 5000
//!
//! [services]
//! reqs = "127.0.0.1:8081"
//! design = "127.0.0.1:8082"
//! changes = "127.0.0.1:8083"
//!
//! [fixture]
//! canonical = true
//!
//! [workload]               # optional; driven in the background by `up`
//! seed = 42
//! steps = 500
//! rate = 5.0
//!
//! [mqtt]
//! mqtt_url = "mqtt://127.0.0.1:1883"
//!
//! [bench]
//! modes = ["direct", "poll", "push"]
//! query_repeats = 10
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bench::{BenchConfig, BenchMode};
use crate::bridge::{InProcessBus, MqttTransport, PubSub, Publisher, PublisherSettings};
use crate::clock::{Clock, SystemClock};
use crate::toolchain::{run_workload, seed_fixture, FixtureSpec, Toolchain, ToolchainServices, WorkloadScript};
use crate::trs::TrsServerConfig;
use crate::warehouse::{
    ConfigError, MqttSettings, RunningWarehouse, StoreSettings, Warehouse, WarehouseConfig, DEFAULT_POLL_PERIOD_MS,
};

/// Bench-only knobs; fixture, workload, poll period and MQTT come from the
/// top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub modes: Vec<BenchMode>,
    pub query_repeats: usize,
    pub over_http: bool,
    pub settle_timeout_ms: u64,
    pub drop_probability: f64,
    pub duplicate_probability: f64,
    pub fault_seed: u64,
    /// Where to write the JSON report.
    pub report: Option<PathBuf>,
}

impl Default for BenchSection {
    fn default() -> Self {
        let d = BenchConfig::default();
        BenchSection {
            modes: d.modes,
            query_repeats: d.query_repeats,
            over_http: d.over_http,
            settle_timeout_ms: d.settle_timeout_ms,
            drop_probability: d.drop_probability,
            duplicate_probability: d.duplicate_probability,
            fault_seed: d.fault_seed,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub mode: BenchMode,
    /// Warehouse endpoint; ignored in direct mode.
    pub listen: String,
    pub poll_period_ms: u64,
    /// Fixed service addresses by server id; unlisted services pick a free port.
    pub services: BTreeMap<String, SocketAddr>,
    pub fixture: FixtureSpec,
    pub workload: Option<WorkloadScript>,
    pub mqtt: MqttSettings,
    pub store: StoreSettings,
    pub bench: BenchSection,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            mode: BenchMode::Poll,
            listen: "127.0.0.1:7070".into(),
            poll_period_ms: DEFAULT_POLL_PERIOD_MS,
            services: BTreeMap::new(),
            fixture: FixtureSpec::canonical(),
            workload: None,
            mqtt: MqttSettings::default(),
            store: StoreSettings::default(),
            bench: BenchSection::default(),
        }
    }
}

impl SystemConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: SystemConfig = toml::from_str(text)?;
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

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.poll_period_ms == 0 {
            return Err(ConfigError::Invalid("poll_period_ms must be positive".into()));
        }
        if self.mode != BenchMode::Direct {
            self.listen
                .parse::<SocketAddr>()
                .map_err(|e| ConfigError::Invalid(format!("listen {:?}: {e}", self.listen)))?;
        }
        for id in self.services.keys() {
            if !crate::toolchain::ResourceKind::ALL.iter().any(|k| k.server_id() == id) {
                return Err(ConfigError::Invalid(format!("unknown service {id:?}")));
            }
        }
        if let Some(w) = &self.workload {
            w.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        for p in [self.bench.drop_probability, self.bench.duplicate_probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid("bench probabilities must lie in [0, 1]".into()));
            }
        }
        if self.bench.modes.is_empty() {
            return Err(ConfigError::Invalid("bench.modes is empty".into()));
        }
        self.warehouse_config(Vec::new()).validate()
    }

    fn warehouse_config(&self, servers: Vec<crate::warehouse::ServerEntry>) -> WarehouseConfig {
        WarehouseConfig {
            mode: self.mode.warehouse_mode().unwrap_or_default(),
            listen: Some(self.listen.clone()),
            servers,
            mqtt: self.mqtt.clone(),
            store: self.store.clone(),
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            modes: self.bench.modes.clone(),
            fixture: self.fixture.clone(),
            workload: self.workload.clone().unwrap_or_else(|| BenchConfig::default().workload),
            poll_period_ms: self.poll_period_ms,
            query_repeats: self.bench.query_repeats,
            over_http: self.bench.over_http,
            settle_timeout_ms: self.bench.settle_timeout_ms,
            mqtt: self.mqtt.clone(),
            drop_probability: self.bench.drop_probability,
            duplicate_probability: self.bench.duplicate_probability,
            fault_seed: self.bench.fault_seed,
        }
    }
}

/// Startup failure, naming the component that failed.
#[derive(Debug, thiserror::Error)]
pub enum UpError {
    #[error("services: {0}")]
    Services(std::io::Error),
    #[error("broker: {0}")]
    Broker(crate::bridge::TransportError),
    #[error("warehouse: {0}")]
    Warehouse(#[from] crate::warehouse::StartError),
}

pub struct RunningSystem {
    toolchain: Arc<Toolchain>,
    services: Option<ToolchainServices>,
    publishers: Vec<Publisher>,
    warehouse: Option<RunningWarehouse>,
    warehouse_addr: Option<SocketAddr>,
    workload: Option<JoinHandle<()>>,
}

impl RunningSystem {
    pub fn up(config: &SystemConfig) -> Result<Self, UpError> {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let toolchain = Arc::new(Toolchain::new(TrsServerConfig::default(), clock.clone()));
        let truth = seed_fixture(&config.fixture, &toolchain);
        let services = ToolchainServices::spawn(&toolchain, &config.services).map_err(UpError::Services)?;

        let mut publishers = Vec::new();
        let mut transport = None;
        let mode = config.mode.warehouse_mode();
        if mode.is_some_and(|m| m.pushes()) {
            let (publish_side, consume_side): (Arc<dyn PubSub>, Arc<dyn PubSub>) = match &config.mqtt.mqtt_url {
                Some(url) => {
                    let connect = |who: &str| {
                        MqttTransport::connect(url, &format!("lcq-{who}-{}", std::process::id()), Duration::from_secs(5))
                            .map(|t| Arc::new(t) as Arc<dyn PubSub>)
                            .map_err(UpError::Broker)
                    };
                    (connect("tools")?, connect("warehouse")?)
                }
                None => {
                    let bus = Arc::new(InProcessBus::new());
                    (bus.clone(), bus)
                }
            };
            for server in toolchain.servers() {
                publishers.push(Publisher::spawn(server, publish_side.clone(), PublisherSettings::from(&config.mqtt)));
            }
            transport = Some(consume_side);
        }

        let (warehouse, warehouse_addr) = match mode {
            None => (None, None),
            Some(_) => {
                let wh = Arc::new(Warehouse::new(clock));
                for (server, p) in toolchain.servers().zip(&publishers) {
                    wh.metrics().attach_publisher(server.id(), p.stats());
                }
                let wh_config = config.warehouse_config(services.server_entries(config.poll_period_ms));
                let mut running = RunningWarehouse::start(wh, wh_config, transport)?;
                let listen: SocketAddr = config.listen.parse().expect("validated");
                let addr = running.serve(listen)?;
                (Some(running), Some(addr))
            }
        };

        let workload = config.workload.clone().map(|script| {
            let toolchain = toolchain.clone();
            std::thread::spawn(move || {
                if let Err(e) = run_workload(&script, &toolchain, &truth) {
                    tracing::error!(error = %e, "workload failed");
                }
            })
        });

        Ok(RunningSystem {
            toolchain,
            services: Some(services),
            publishers,
            warehouse,
            warehouse_addr,
            workload,
        })
    }

    pub fn toolchain(&self) -> &Arc<Toolchain> {
        &self.toolchain
    }

    pub fn service_url(&self, server_id: &str) -> Option<String> {
        self.services.as_ref()?.base_url(server_id)
    }

    pub fn warehouse(&self) -> Option<&RunningWarehouse> {
        self.warehouse.as_ref()
    }

    /// Base URL of the warehouse endpoint, when one is running.
    pub fn warehouse_url(&self) -> Option<String> {
        self.warehouse_addr.map(|a| format!("http://{a}"))
    }

    /// Checks every service and the warehouse answer their health probes.
    pub fn health_check(&self) -> Result<(), String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(5)))
            .build()
            .into();
        let mut probes: Vec<(String, String)> = self
            .toolchain
            .servers()
            .filter_map(|s| Some((s.id().to_owned(), format!("{}/trs", self.service_url(s.id())?))))
            .collect();
        if let Some(url) = self.warehouse_url() {
            probes.push(("warehouse".into(), format!("{url}/health")));
        }
        for (name, url) in probes {
            match agent.get(&url).call() {
                Ok(r) if r.status().is_success() => {}
                Ok(r) => return Err(format!("{name}: HTTP {}", r.status().as_u16())),
                Err(e) => return Err(format!("{name}: {e}")),
            }
        }
        Ok(())
    }

    /// Waits for the background workload, if any, to finish.
    pub fn join_workload(&mut self) {
        if let Some(t) = self.workload.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.publishers.clear();
        let result = match self.warehouse.take() {
            Some(w) => w.shutdown(),
            None => Ok(()),
        };
        if let Some(s) = self.services.take() {
            s.shutdown();
        }
        result
    }
}
