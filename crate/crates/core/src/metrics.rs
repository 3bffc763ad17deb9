//! Counters and samples behind the warehouse's `/metrics` document.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use crate::rdf::Iri;

/// Per-server request and action counters, updated by the sync pipelines.
#[derive(Debug, Default)]
pub struct ServerCounters {
    /// Resource GETs issued, retries included.
    pub resource_gets: AtomicU64,
    /// TRS document, base page and change-log page GETs issued.
    pub page_gets: AtomicU64,
    /// Resource fetches performed while loading the Base during initial sync.
    pub initial_fetches: AtomicU64,
    /// FetchAndUpsert actions executed (one fetch each, before retries).
    pub fetch_actions: AtomicU64,
    pub delete_actions: AtomicU64,
    pub skip_actions: AtomicU64,
    /// Change events folded into applied windows.
    pub events_applied: AtomicU64,
    /// Full re-synchronisations after the log was truncated past our position.
    pub resyncs: AtomicU64,
    pub fetch_failures: AtomicU64,
}

impl ServerCounters {
    pub fn incr(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    fn snapshot(&self) -> ServerCountsRecord {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        ServerCountsRecord {
            resource_gets: get(&self.resource_gets),
            page_gets: get(&self.page_gets),
            initial_fetches: get(&self.initial_fetches),
            fetch_actions: get(&self.fetch_actions),
            delete_actions: get(&self.delete_actions),
            skip_actions: get(&self.skip_actions),
            events_applied: get(&self.events_applied),
            resyncs: get(&self.resyncs),
            fetch_failures: get(&self.fetch_failures),
        }
    }
}

/// Counters kept by a change-event publisher (the tool side of the push path).
#[derive(Debug, Default)]
pub struct PublisherStats {
    pub messages: AtomicU64,
    pub events: AtomicU64,
    pub dropped: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StalenessSample {
    pub event_ts: u64,
    pub apply_ts: u64,
}

impl StalenessSample {
    pub fn staleness_ms(&self) -> u64 {
        self.apply_ts.saturating_sub(self.event_ts)
    }
}

#[derive(Debug, Default)]
pub struct Metrics {
    servers: RwLock<BTreeMap<String, Arc<ServerCounters>>>,
    publishers: RwLock<BTreeMap<String, Arc<PublisherStats>>>,
    dirty: Mutex<BTreeMap<String, BTreeSet<Iri>>>,
    staleness: Mutex<Vec<StalenessSample>>,
    query_latency_ms: Mutex<Vec<f64>>,
    mqtt_messages: AtomicU64,
    mqtt_rejected: AtomicU64,
    mqtt_gaps: AtomicU64,
    mqtt_stale_events: AtomicU64,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn server(&self, server_id: &str) -> Arc<ServerCounters> {
        if let Some(c) = self.servers.read().get(server_id) {
            return Arc::clone(c);
        }
        Arc::clone(
            self.servers
                .write()
                .entry(server_id.to_owned())
                .or_default(),
        )
    }

    pub fn attach_publisher(&self, server_id: &str, stats: Arc<PublisherStats>) {
        self.publishers.write().insert(server_id.to_owned(), stats);
    }

    pub fn set_dirty(&self, server_id: &str, uris: BTreeSet<Iri>) {
        let mut dirty = self.dirty.lock();
        if uris.is_empty() {
            dirty.remove(server_id);
        } else {
            dirty.insert(server_id.to_owned(), uris);
        }
    }

    pub fn record_staleness(&self, samples: impl IntoIterator<Item = StalenessSample>) {
        self.staleness.lock().extend(samples);
    }

    pub fn record_query_latency(&self, ms: f64) {
        self.query_latency_ms.lock().push(ms);
    }

    pub fn mqtt_message(&self) {
        self.mqtt_messages.fetch_add(1, Ordering::Relaxed);
    }

    pub fn mqtt_rejected(&self) {
        self.mqtt_rejected.fetch_add(1, Ordering::Relaxed);
    }

    pub fn mqtt_gap(&self) {
        self.mqtt_gaps.fetch_add(1, Ordering::Relaxed);
    }

    pub fn mqtt_stale_events(&self, n: u64) {
        self.mqtt_stale_events.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsReport {
        let servers: BTreeMap<String, ServerCountsRecord> = self
            .servers
            .read()
            .iter()
            .map(|(id, c)| (id.clone(), c.snapshot()))
            .collect();
        let publishers: BTreeMap<String, PublisherRecord> = self
            .publishers
            .read()
            .iter()
            .map(|(id, p)| {
                (
                    id.clone(),
                    PublisherRecord {
                        messages: p.messages.load(Ordering::Relaxed),
                        events: p.events.load(Ordering::Relaxed),
                        dropped: p.dropped.load(Ordering::Relaxed),
                    },
                )
            })
            .collect();
        let staleness_samples = self.staleness.lock().clone();
        let query_latency_ms = self.query_latency_ms.lock().clone();
        let dirty_uris: Vec<String> = self
            .dirty
            .lock()
            .values()
            .flatten()
            .map(|u| u.as_str().to_owned())
            .collect();

        let record = MetricsRecord {
            http_get_count: servers
                .iter()
                .map(|(id, c)| (id.clone(), c.resource_gets))
                .collect(),
            page_get_count: servers
                .iter()
                .map(|(id, c)| (id.clone(), c.page_gets))
                .collect(),
            mqtt_message_count: self.mqtt_messages.load(Ordering::Relaxed),
            mqtt_rejected_count: self.mqtt_rejected.load(Ordering::Relaxed),
            mqtt_gap_count: self.mqtt_gaps.load(Ordering::Relaxed),
            mqtt_stale_event_count: self.mqtt_stale_events.load(Ordering::Relaxed),
            mqtt_dropped_count: publishers.values().map(|p| p.dropped).sum(),
            dirty_uris,
            staleness_samples,
            query_latency_ms,
            servers,
            publishers,
        };
        let stats = DerivedStats::from_record(&record);
        MetricsReport { record, stats }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ServerCountsRecord {
    pub resource_gets: u64,
    pub page_gets: u64,
    pub initial_fetches: u64,
    pub fetch_actions: u64,
    pub delete_actions: u64,
    pub skip_actions: u64,
    pub events_applied: u64,
    pub resyncs: u64,
    pub fetch_failures: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PublisherRecord {
    pub messages: u64,
    pub events: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub staleness_samples: Vec<StalenessSample>,
    /// Resource GETs per service.
    pub http_get_count: BTreeMap<String, u64>,
    /// TRS document and page GETs per service.
    pub page_get_count: BTreeMap<String, u64>,
    pub mqtt_message_count: u64,
    pub mqtt_rejected_count: u64,
    pub mqtt_gap_count: u64,
    pub mqtt_stale_event_count: u64,
    pub mqtt_dropped_count: u64,
    pub dirty_uris: Vec<String>,
    pub query_latency_ms: Vec<f64>,
    pub servers: BTreeMap<String, ServerCountsRecord>,
    pub publishers: BTreeMap<String, PublisherRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DerivedStats {
    pub staleness_samples: usize,
    pub staleness_p50_ms: Option<f64>,
    pub staleness_p95_ms: Option<f64>,
    pub total_http_gets: u64,
    pub total_page_gets: u64,
    pub query_latency_p50_ms: Option<f64>,
}

impl DerivedStats {
    fn from_record(record: &MetricsRecord) -> Self {
        let staleness: Vec<f64> = record
            .staleness_samples
            .iter()
            .map(|s| s.staleness_ms() as f64)
            .collect();
        DerivedStats {
            staleness_samples: staleness.len(),
            staleness_p50_ms: percentile(&staleness, 50.0),
            staleness_p95_ms: percentile(&staleness, 95.0),
            total_http_gets: record.http_get_count.values().sum(),
            total_page_gets: record.page_get_count.values().sum(),
            query_latency_p50_ms: percentile(&record.query_latency_ms, 50.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub record: MetricsRecord,
    pub stats: DerivedStats,
}

/// Nearest-rank percentile. `None` for an empty sample.
pub fn percentile(samples: &[f64], pct: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(percentile(&[7.0], 95.0), Some(7.0));
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50.0), Some(5.0));
        assert_eq!(percentile(&xs, 95.0), Some(10.0));
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
    }

    #[test]
    fn empty_snapshot_is_all_zero() {
        let m = Metrics::new();
        let report = m.snapshot();
        assert_eq!(report.record, MetricsRecord::default());
        assert_eq!(report.stats, DerivedStats::default());
    }

    #[test]
    fn counters_aggregate_per_server() {
        let m = Metrics::new();
        ServerCounters::incr(&m.server("reqs").resource_gets);
        ServerCounters::incr(&m.server("reqs").resource_gets);
        ServerCounters::incr(&m.server("design").page_gets);
        m.record_staleness([StalenessSample { event_ts: 10, apply_ts: 15 }]);
        let report = m.snapshot();
        assert_eq!(report.record.http_get_count["reqs"], 2);
        assert_eq!(report.stats.total_http_gets, 2);
        assert_eq!(report.stats.total_page_gets, 1);
        assert_eq!(report.stats.staleness_p50_ms, Some(5.0));
    }
}
