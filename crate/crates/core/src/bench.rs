//! Benchmark runs: the same seeded fixture and workload under each
//! integration mode, reporting staleness, request load, query latency and
//! whether the mode converged to the services' state.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bridge::{InProcessBus, MqttTransport, PubSub, Publisher, PublisherSettings};
use crate::client::{HttpSource, LocalSource, TrsSource};
use crate::clock::{Clock, SystemClock};
use crate::metrics::percentile;
use crate::queries::{DirectQuery, Lcq};
use crate::sparql::{self, BindingTable};
use crate::toolchain::{
    run_workload, seed_fixture, FixtureSpec, GroundTruth, MutationRecord, OpKind, ResourceKind, Toolchain, ToolchainServices,
    WorkloadScript,
};
use crate::trs::TrsServerConfig;
use crate::warehouse::{Mode, MqttSettings, RunningWarehouse, ServerEntry, Warehouse, WarehouseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    Direct,
    Poll,
    Push,
    PushWithSafetyPoll,
}

impl BenchMode {
    pub fn warehouse_mode(self) -> Option<Mode> {
        match self {
            BenchMode::Direct => None,
            BenchMode::Poll => Some(Mode::Poll),
            BenchMode::Push => Some(Mode::Push),
            BenchMode::PushWithSafetyPoll => Some(Mode::PushWithSafetyPoll),
        }
    }
}

impl std::fmt::Display for BenchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchMode::Direct => "direct",
            BenchMode::Poll => "poll",
            BenchMode::Push => "push",
            BenchMode::PushWithSafetyPoll => "push-with-safety-poll",
        })
    }
}

impl std::str::FromStr for BenchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(BenchMode::Direct),
            "poll" => Ok(BenchMode::Poll),
            "push" => Ok(BenchMode::Push),
            "push-with-safety-poll" => Ok(BenchMode::PushWithSafetyPoll),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub modes: Vec<BenchMode>,
    pub fixture: FixtureSpec,
    pub workload: WorkloadScript,
    pub poll_period_ms: u64,
    /// Times each query runs after the workload.
    pub query_repeats: usize,
    /// Reach the services over HTTP instead of in process.
    pub over_http: bool,
    /// How long to wait for the pipelines to catch up after the workload
    /// before the final pull cycle.
    pub settle_timeout_ms: u64,
    pub mqtt: MqttSettings,
    /// Fault injection on the in-process bus (ignored with a real broker).
    pub drop_probability: f64,
    pub duplicate_probability: f64,
    pub fault_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            modes: vec![BenchMode::Direct, BenchMode::Poll, BenchMode::Push],
            fixture: FixtureSpec::canonical(),
            workload: WorkloadScript {
                seed: 42,
                steps: 500,
                ..WorkloadScript::default()
            },
            poll_period_ms: 5_000,
            query_repeats: 10,
            over_http: false,
            settle_timeout_ms: 15_000,
            mqtt: MqttSettings::default(),
            drop_probability: 0.0,
            duplicate_probability: 0.0,
            fault_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport {
    pub mode: BenchMode,
    pub converged: bool,
    /// Resources live when the initial sync ran.
    pub base_size: usize,
    pub workload_ops: usize,
    /// Creations and modifications recorded by the workload.
    pub upsert_events: usize,
    pub staleness_samples: usize,
    pub staleness_p50_ms: Option<f64>,
    pub staleness_p95_ms: Option<f64>,
    /// Resource GETs issued, per service.
    pub resource_gets: BTreeMap<String, u64>,
    pub total_resource_gets: u64,
    pub total_page_gets: u64,
    pub initial_fetches: u64,
    pub fetch_actions: u64,
    pub mqtt_messages_published: u64,
    pub mqtt_messages_received: u64,
    pub mqtt_lost: u64,
    pub mqtt_dropped: u64,
    pub mqtt_gaps: u64,
    pub dirty_uris: usize,
    pub lcq_latency_p50_ms: BTreeMap<String, f64>,
    /// Result rows per query, as IRIs.
    pub lcq_results: BTreeMap<String, Vec<String>>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub modes: Vec<ModeReport>,
}

impl BenchReport {
    pub fn all_converged(&self) -> bool {
        self.modes.iter().all(|m| m.converged)
    }

    pub fn mode(&self, mode: BenchMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let ms = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.0}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8} {:>9} {:>9} {:>9}  {}",
            "mode", "stale p50", "stale p95", "res GETs", "page GETs", "mqtt rx", "gaps", "lcq1 ms", "lcq2 ms", "lcq3 ms", "converged"
        );
        for m in &self.modes {
            let lat = |q: &str| m.lcq_latency_p50_ms.get(q).map_or("-".to_owned(), |v| format!("{v:.3}"));
            let _ = writeln!(
                out,
                "{:<22} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8} {:>9} {:>9} {:>9}  {}",
                m.mode.to_string(),
                ms(m.staleness_p50_ms),
                ms(m.staleness_p95_ms),
                m.total_resource_gets,
                m.total_page_gets,
                m.mqtt_messages_received,
                m.mqtt_gaps,
                lat("lcq1"),
                lat("lcq2"),
                lat("lcq3"),
                if m.converged { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Start(#[from] crate::warehouse::StartError),
    #[error(transparent)]
    Direct(#[from] crate::queries::DirectError),
    #[error(transparent)]
    Workload(#[from] crate::toolchain::WorkloadError),
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    let mut modes = Vec::new();
    for mode in &config.modes {
        modes.push(run_mode(*mode, config)?);
    }
    Ok(BenchReport {
        config: config.clone(),
        modes,
    })
}

/// The canned queries, with LCQ2 asked about CR1 and R1.
pub fn canned_queries(toolchain: &Toolchain) -> Vec<Lcq> {
    vec![
        Lcq::Lcq1,
        Lcq::Lcq2 {
            cr: toolchain.iri(ResourceKind::ChangeRequest, "CR1"),
            req: toolchain.iri(ResourceKind::Requirement, "R1"),
        },
        Lcq::Lcq3,
    ]
}

fn result_iris(table: &BindingTable) -> Vec<String> {
    table
        .rows()
        .iter()
        .flat_map(|row| row.iter().flatten().map(|t| match t {
            crate::rdf::Term::Iri(i) => i.as_str().to_owned(),
            crate::rdf::Term::Literal(l) => l.lexical().to_owned(),
        }))
        .collect()
}

struct Services {
    toolchain: Toolchain,
    http: Option<ToolchainServices>,
}

impl Services {
    fn new(config: &BenchConfig, clock: Arc<dyn Clock>) -> Result<Self, BenchError> {
        let toolchain = Toolchain::new(TrsServerConfig::default(), clock);
        let http = if config.over_http {
            Some(ToolchainServices::spawn(&toolchain, &BTreeMap::new()).map_err(|e| BenchError::Setup(e.to_string()))?)
        } else {
            None
        };
        Ok(Services { toolchain, http })
    }

    fn sources(&self) -> BTreeMap<String, Arc<dyn TrsSource>> {
        self.toolchain
            .servers()
            .map(|s| {
                let source: Arc<dyn TrsSource> = match &self.http {
                    Some(h) => Arc::new(HttpSource::new(s.id(), h.base_url(s.id()).expect("served"))),
                    None => Arc::new(LocalSource::new(s.clone())),
                };
                (s.id().to_owned(), source)
            })
            .collect()
    }

    fn entries(&self, poll_period_ms: u64) -> Vec<ServerEntry> {
        match &self.http {
            Some(h) => h.server_entries(poll_period_ms),
            None => self
                .toolchain
                .servers()
                .map(|s| ServerEntry::new(s.id(), format!("local://{}", s.id())).with_poll_period(poll_period_ms))
                .collect(),
        }
    }
}

fn upsert_events(log: &[MutationRecord]) -> usize {
    log.iter().filter(|r| r.op.kind() != OpKind::Delete).count()
}

/// Runs one mode on fresh services.
pub fn run_mode(mode: BenchMode, config: &BenchConfig) -> Result<ModeReport, BenchError> {
    let started = Instant::now();
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let services = Services::new(config, clock.clone())?;
    let toolchain = &services.toolchain;
    let truth = seed_fixture(&config.fixture, toolchain);
    let base_size = toolchain.live_count();
    let queries = canned_queries(toolchain);

    let Some(wh_mode) = mode.warehouse_mode() else {
        return run_direct(config, &services, &truth, &queries, base_size, started);
    };

    // Push plumbing: one connection for the publishers, one for the warehouse.
    let mut publishers: Vec<Publisher> = Vec::new();
    let mut bus: Option<Arc<InProcessBus>> = None;
    let transport: Option<Arc<dyn PubSub>> = if wh_mode.pushes() {
        let (publish_side, consume_side): (Arc<dyn PubSub>, Arc<dyn PubSub>) = match &config.mqtt.mqtt_url {
            Some(url) => {
                let connect = |who: &str| {
                    MqttTransport::connect(url, &format!("lcq-bench-{who}-{}", std::process::id()), Duration::from_secs(5))
                        .map(|t| Arc::new(t) as Arc<dyn PubSub>)
                        .map_err(|e| BenchError::Setup(e.to_string()))
                };
                (connect("tools")?, connect("warehouse")?)
            }
            None => {
                let b = Arc::new(InProcessBus::new());
                b.set_faults(config.fault_seed, config.drop_probability, config.duplicate_probability);
                bus = Some(b.clone());
                (b.clone(), b)
            }
        };
        for server in toolchain.servers() {
            publishers.push(Publisher::spawn(server, publish_side.clone(), PublisherSettings::from(&config.mqtt)));
        }
        Some(consume_side)
    } else {
        None
    };

    let warehouse = Arc::new(Warehouse::new(clock));
    for (server, p) in toolchain.servers().zip(&publishers) {
        warehouse.metrics().attach_publisher(server.id(), p.stats());
    }
    let wh_config = WarehouseConfig {
        mode: wh_mode,
        servers: services.entries(config.poll_period_ms),
        mqtt: config.mqtt.clone(),
        ..WarehouseConfig::default()
    };
    let running = RunningWarehouse::start_with_sources(warehouse.clone(), wh_config, services.sources(), transport)?;

    let log = run_workload(&config.workload, toolchain, &truth)?;

    let targets = toolchain.last_orders();
    running.wait_for_orders(&targets, Duration::from_millis(config.settle_timeout_ms));
    // One last pull per server recovers anything the push path lost.
    if let Err(e) = running.sync_all_now() {
        tracing::warn!(error = %e, "final sync failed");
    }
    let converged_data = warehouse.dataset() == toolchain.live_dataset();

    let truth_ds = toolchain.live_dataset();
    let mut lcq_results = BTreeMap::new();
    let mut lcq_latency = BTreeMap::new();
    let mut results_match = true;
    for q in &queries {
        let text = q.sparql();
        let before = warehouse.metrics_snapshot().record.query_latency_ms.len();
        let mut table = None;
        for _ in 0..config.query_repeats.max(1) {
            table = Some(warehouse.sparql_query(&text).map_err(|e| BenchError::Setup(e.to_string()))?);
        }
        let table = table.expect("ran at least once");
        let samples = warehouse.metrics_snapshot().record.query_latency_ms[before..].to_vec();
        let expected = sparql::evaluate(&sparql::parse_query(&text).expect("canned query"), &truth_ds);
        results_match &= table == expected;
        lcq_latency.insert(q.name().to_owned(), percentile(&samples, 50.0).unwrap_or(0.0));
        lcq_results.insert(q.name().to_owned(), result_iris(&table));
    }

    drop(publishers);
    let metrics = warehouse.metrics_snapshot();
    drop(running);
    let publisher_totals = |f: fn(&crate::metrics::PublisherRecord) -> u64| metrics.record.publishers.values().map(f).sum();
    Ok(ModeReport {
        mode,
        converged: converged_data && results_match,
        base_size,
        workload_ops: log.len(),
        upsert_events: upsert_events(&log),
        staleness_samples: metrics.stats.staleness_samples,
        staleness_p50_ms: metrics.stats.staleness_p50_ms,
        staleness_p95_ms: metrics.stats.staleness_p95_ms,
        resource_gets: metrics.record.http_get_count.clone(),
        total_resource_gets: metrics.stats.total_http_gets,
        total_page_gets: metrics.stats.total_page_gets,
        initial_fetches: metrics.record.servers.values().map(|s| s.initial_fetches).sum(),
        fetch_actions: metrics.record.servers.values().map(|s| s.fetch_actions).sum(),
        mqtt_messages_published: publisher_totals(|p| p.messages),
        mqtt_messages_received: metrics.record.mqtt_message_count,
        mqtt_lost: bus.as_ref().map_or(0, |b| b.lost()),
        mqtt_dropped: metrics.record.mqtt_dropped_count,
        mqtt_gaps: metrics.record.mqtt_gap_count,
        dirty_uris: metrics.record.dirty_uris.len(),
        lcq_latency_p50_ms: lcq_latency,
        lcq_results,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

fn run_direct(
    config: &BenchConfig,
    services: &Services,
    truth: &GroundTruth,
    queries: &[Lcq],
    base_size: usize,
    started: Instant,
) -> Result<ModeReport, BenchError> {
    let toolchain = &services.toolchain;
    let log = run_workload(&config.workload, toolchain, truth)?;

    let direct = DirectQuery::new(services.sources());
    let truth_ds = toolchain.live_dataset();
    let mut lcq_results = BTreeMap::new();
    let mut lcq_latency = BTreeMap::new();
    let mut per_server_before: BTreeMap<String, u64> = BTreeMap::new();
    for s in toolchain.servers() {
        per_server_before.insert(s.id().to_owned(), s.served_counts().resources);
    }
    let mut converged = true;
    for q in queries {
        let mut samples = Vec::new();
        let mut table = None;
        for _ in 0..config.query_repeats.max(1) {
            let t0 = Instant::now();
            table = Some(direct.run(q)?);
            samples.push(t0.elapsed().as_secs_f64() * 1000.0);
        }
        let table = table.expect("ran at least once");
        let expected = sparql::evaluate(&sparql::parse_query(&q.sparql()).expect("canned query"), &truth_ds);
        converged &= table == expected;
        lcq_latency.insert(q.name().to_owned(), percentile(&samples, 50.0).unwrap_or(0.0));
        lcq_results.insert(q.name().to_owned(), result_iris(&table));
    }
    let resource_gets: BTreeMap<String, u64> = toolchain
        .servers()
        .map(|s| (s.id().to_owned(), s.served_counts().resources - per_server_before[s.id()]))
        .collect();
    Ok(ModeReport {
        mode: BenchMode::Direct,
        converged,
        base_size,
        workload_ops: log.len(),
        upsert_events: upsert_events(&log),
        staleness_samples: 0,
        staleness_p50_ms: None,
        staleness_p95_ms: None,
        total_resource_gets: direct.resource_gets(),
        resource_gets,
        total_page_gets: direct.page_gets(),
        initial_fetches: 0,
        fetch_actions: 0,
        mqtt_messages_published: 0,
        mqtt_messages_received: 0,
        mqtt_lost: 0,
        mqtt_dropped: 0,
        mqtt_gaps: 0,
        dirty_uris: 0,
        lcq_latency_p50_ms: lcq_latency,
        lcq_results,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}
