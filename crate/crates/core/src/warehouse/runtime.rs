use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{select, Receiver, Sender};
use parking_lot::Mutex;

use super::{Mode, Warehouse, WarehouseConfig};
use crate::bridge::{self, ChangeEventMessage, Delivery, GapDetector, PubSub, TransportError};
use crate::client::{HttpSource, SyncError, TrsClient, TrsSource};
use crate::serve::HttpServerHandle;

/// Owner recorded for graphs loaded from a dump file.
pub const STORE_OWNER: &str = "store";

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("initial sync failed for {server}: {source}")]
    Sync {
        server: String,
        #[source]
        source: SyncError,
    },
    #[error("mode {0:?} needs a pub/sub transport")]
    NoTransport(Mode),
    #[error("subscribe failed: {0}")]
    Subscribe(#[from] TransportError),
    #[error("invalid config: {0}")]
    Config(#[from] super::config::ConfigError),
    #[error("cannot load {path}: {message}")]
    Load { path: String, message: String },
    #[error("cannot listen: {0}")]
    Listen(#[from] std::io::Error),
}

type SharedClient = Arc<Mutex<TrsClient>>;

/// A started warehouse: initial sync done, poll loops and the push
/// consumer running per the configured mode.
pub struct RunningWarehouse {
    warehouse: Arc<Warehouse>,
    config: WarehouseConfig,
    clients: BTreeMap<String, SharedClient>,
    stop: Option<Sender<()>>,
    threads: Vec<JoinHandle<()>>,
    http: Option<HttpServerHandle>,
    /// Held so the connection lives as long as the consumers.
    _transport: Option<Arc<dyn PubSub>>,
}

impl RunningWarehouse {
    /// Starts with sources built from the config: each server is reached over
    /// HTTP at its `base_url`.
    pub fn start(
        warehouse: Arc<Warehouse>,
        config: WarehouseConfig,
        transport: Option<Arc<dyn PubSub>>,
    ) -> Result<Self, StartError> {
        Self::start_with_sources(warehouse, config, BTreeMap::new(), transport)
    }

    /// Like [`RunningWarehouse::start`], but servers listed in `sources` are
    /// reached through the given source instead of HTTP.
    pub fn start_with_sources(
        warehouse: Arc<Warehouse>,
        config: WarehouseConfig,
        mut sources: BTreeMap<String, Arc<dyn TrsSource>>,
        transport: Option<Arc<dyn PubSub>>,
    ) -> Result<Self, StartError> {
        config.validate()?;
        if config.mode.pushes() && transport.is_none() {
            return Err(StartError::NoTransport(config.mode));
        }
        if let Some(path) = &config.store.load {
            let text = std::fs::read_to_string(path).map_err(|e| StartError::Load {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            warehouse
                .load_ntriples(STORE_OWNER, &text)
                .map_err(|e| StartError::Load {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
        }

        // Subscribe before syncing so nothing recorded during the initial
        // sync is missed; anything already covered is discarded by order.
        let deliveries = match (&transport, config.mode.pushes()) {
            (Some(t), true) => Some(t.subscribe(bridge::EVENTS_FILTER)?),
            _ => None,
        };

        let mut clients = BTreeMap::new();
        for entry in &config.servers {
            let source = sources
                .remove(&entry.server_id)
                .unwrap_or_else(|| Arc::new(HttpSource::new(entry.server_id.clone(), entry.base_url.clone())));
            let mut client = TrsClient::new(source, warehouse.clone(), entry.trs_url.clone());
            client.initial_sync().map_err(|source| StartError::Sync {
                server: entry.server_id.clone(),
                source,
            })?;
            clients.insert(entry.server_id.clone(), Arc::new(Mutex::new(client)));
        }

        let (stop_tx, stop_rx) = crossbeam_channel::bounded::<()>(0);
        let mut threads = Vec::new();
        for entry in &config.servers {
            let period = match config.mode {
                Mode::Poll => Some(entry.poll_period_ms),
                Mode::PushWithSafetyPoll => Some(config.mqtt.safety_poll_ms),
                Mode::Push => None,
            };
            if let Some(ms) = period {
                let client = clients[&entry.server_id].clone();
                let stop = stop_rx.clone();
                threads.push(spawn_named(format!("poll-{}", entry.server_id), move || {
                    poll_loop(client, Duration::from_millis(ms), stop)
                }));
            }
        }
        if let Some(deliveries) = deliveries {
            threads.extend(spawn_push_consumers(
                deliveries,
                &clients,
                warehouse.clone(),
                config.mqtt.max_batch,
                stop_rx.clone(),
            ));
        }

        tracing::info!(mode = ?config.mode, servers = clients.len(), "warehouse started");
        Ok(RunningWarehouse {
            warehouse,
            config,
            clients,
            stop: Some(stop_tx),
            threads,
            http: None,
            _transport: transport,
        })
    }

    /// Serves the SPARQL, metrics and health endpoints on `addr`.
    pub fn serve(&mut self, addr: SocketAddr) -> Result<SocketAddr, StartError> {
        let handle = HttpServerHandle::spawn(addr, super::http::router(self.warehouse.clone()))?;
        let bound = handle.addr();
        self.http = Some(handle);
        Ok(bound)
    }

    pub fn warehouse(&self) -> &Arc<Warehouse> {
        &self.warehouse
    }

    pub fn config(&self) -> &WarehouseConfig {
        &self.config
    }

    pub fn server_ids(&self) -> impl Iterator<Item = &str> {
        self.clients.keys().map(String::as_str)
    }

    pub fn last_applied_order(&self, server_id: &str) -> Option<u64> {
        self.clients.get(server_id).map(|c| c.lock().last_applied_order())
    }

    /// Runs one pull cycle for every server right now.
    pub fn sync_all_now(&self) -> Result<(), SyncError> {
        for client in self.clients.values() {
            client.lock().sync_once()?;
        }
        Ok(())
    }

    /// Waits until every server's applied order reaches `targets`, or the
    /// timeout passes. Returns whether all targets were reached.
    pub fn wait_for_orders(&self, targets: &BTreeMap<String, u64>, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let done = targets
                .iter()
                .all(|(id, want)| self.last_applied_order(id).is_some_and(|have| have >= *want));
            if done {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    /// Stops all pipelines and writes the dump file if one is configured.
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_threads();
        if let Some(http) = self.http.take() {
            http.shutdown();
        }
        if let Some(path) = &self.config.store.dump {
            std::fs::write(path, self.warehouse.dump_ntriples())?;
        }
        Ok(())
    }

    fn stop_threads(&mut self) {
        self.stop.take();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for RunningWarehouse {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn spawn_named(name: String, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    std::thread::Builder::new()
        .name(name)
        .spawn(f)
        .expect("spawn warehouse thread")
}

fn poll_loop(client: SharedClient, period: Duration, stop: Receiver<()>) {
    loop {
        select! {
            recv(stop) -> _ => return,
            default(period) => {}
        }
        let mut c = client.lock();
        if let Err(e) = c.sync_once() {
            tracing::warn!(server = c.server_id(), error = %e, "poll cycle failed");
        }
    }
}

/// How often a push consumer without traffic retries dirty resources.
const IDLE_TICK: Duration = Duration::from_secs(1);

/// One dispatcher routes deliveries by topic to a consumer per server, so
/// each server's messages are handled in order while servers proceed
/// independently.
fn spawn_push_consumers(
    deliveries: Receiver<Delivery>,
    clients: &BTreeMap<String, SharedClient>,
    warehouse: Arc<Warehouse>,
    max_batch: usize,
    stop: Receiver<()>,
) -> Vec<JoinHandle<()>> {
    let mut threads = Vec::new();
    let mut routes: BTreeMap<String, Sender<ChangeEventMessage>> = BTreeMap::new();
    for (id, client) in clients {
        let (tx, rx) = crossbeam_channel::unbounded();
        routes.insert(id.clone(), tx);
        let client = client.clone();
        let warehouse = warehouse.clone();
        let stop = stop.clone();
        threads.push(spawn_named(format!("push-{id}"), move || {
            consume(rx, client, warehouse, stop)
        }));
    }
    threads.push(spawn_named("push-dispatch".into(), move || loop {
        let delivery = select! {
            recv(stop) -> _ => return,
            recv(deliveries) -> d => match d {
                Ok(d) => d,
                Err(_) => return,
            },
        };
        let metrics = warehouse.metrics();
        let decoded = ChangeEventMessage::decode(&delivery.payload)
            .and_then(|m| m.check_batch_size(max_batch).map(|_| m));
        let msg = match decoded {
            Ok(m) if bridge::server_of_topic(&delivery.topic) == Some(m.server_id()) => m,
            Ok(_) | Err(_) => {
                metrics.mqtt_rejected();
                continue;
            }
        };
        match routes.get(msg.server_id()) {
            Some(route) => {
                let _ = route.send(msg);
            }
            None => metrics.mqtt_rejected(),
        }
    }));
    threads
}

fn consume(
    messages: Receiver<ChangeEventMessage>,
    client: SharedClient,
    warehouse: Arc<Warehouse>,
    stop: Receiver<()>,
) {
    let mut detector = GapDetector::new();
    loop {
        let msg = select! {
            recv(stop) -> _ => return,
            recv(messages) -> m => match m {
                Ok(m) => Some(m),
                Err(_) => return,
            },
            default(IDLE_TICK) => None,
        };
        let mut c = client.lock();
        match msg {
            Some(msg) => {
                if let Err(e) = bridge::on_message(&msg, &mut detector, &mut c, warehouse.metrics()) {
                    tracing::warn!(server = c.server_id(), error = %e, "push apply failed");
                }
                c.retry_dirty();
            }
            None => {
                c.retry_dirty();
            }
        }
    }
}
