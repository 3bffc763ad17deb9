//! The Linked Data Warehouse: one named graph per tool resource, a SPARQL
//! endpoint over the union of all graphs, and the metrics that describe how
//! current and how costly the materialized view is.
//!
//! Writers (the sync pipelines) go through [`Warehouse::commit`], which
//! applies a whole action batch and then publishes a new immutable
//! [`Snapshot`]. Readers take the current snapshot and never see a batch
//! half-applied.

pub mod config;
pub mod http;
mod runtime;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use parking_lot::{Mutex, RwLock};

use crate::clock::Clock;
use crate::metrics::{Metrics, MetricsReport};
use crate::rdf::{ntriples, Dataset, Graph, Iri, RdfError};
use crate::sparql::{self, BindingTable, GraphIndex, Query, QueryError};

pub use config::{
    ConfigError, Mode, MqttSettings, ServerEntry, StoreSettings, WarehouseConfig, DEFAULT_POLL_PERIOD_MS,
};
pub use runtime::{RunningWarehouse, StartError, STORE_OWNER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphUpdate {
    Upsert(Iri, Graph),
    Delete(Iri),
}

/// An immutable view of the warehouse contents.
#[derive(Debug, Default)]
pub struct Snapshot {
    dataset: Dataset,
    owners: BTreeMap<Iri, String>,
    index: OnceLock<GraphIndex>,
}

impl Snapshot {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Graph names that were loaded from `server_id`.
    pub fn graphs_of(&self, server_id: &str) -> BTreeSet<Iri> {
        self.owners
            .iter()
            .filter(|(_, owner)| owner.as_str() == server_id)
            .map(|(g, _)| g.clone())
            .collect()
    }

    fn index(&self) -> &GraphIndex {
        self.index.get_or_init(|| GraphIndex::from_dataset(&self.dataset))
    }

    pub fn query(&self, query: &Query) -> BindingTable {
        sparql::evaluate_index(query, self.index())
    }
}

pub struct Warehouse {
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
    metrics: Arc<Metrics>,
    clock: Arc<dyn Clock>,
}

impl Warehouse {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_metrics(clock, Arc::new(Metrics::new()))
    }

    pub fn with_metrics(clock: Arc<dyn Clock>, metrics: Arc<Metrics>) -> Self {
        Warehouse {
            current: RwLock::new(Arc::new(Snapshot::default())),
            writer: Mutex::new(()),
            metrics,
            clock,
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    pub fn metrics_snapshot(&self) -> MetricsReport {
        self.metrics.snapshot()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read())
    }

    pub fn dataset(&self) -> Dataset {
        self.snapshot().dataset.clone()
    }

    /// Applies `updates` from `server_id` as one atomic step.
    pub fn commit(&self, server_id: &str, updates: Vec<GraphUpdate>) {
        if updates.is_empty() {
            return;
        }
        self.write(|dataset, owners| {
            for update in updates {
                apply_update(dataset, owners, server_id, update);
            }
        });
    }

    /// Applies `updates` and drops every other graph owned by `server_id`
    /// that is not in `keep`. Used after a full re-synchronisation.
    pub fn replace_server(&self, server_id: &str, updates: Vec<GraphUpdate>, keep: &BTreeSet<Iri>) {
        self.write(|dataset, owners| {
            let stale: Vec<Iri> = owners
                .iter()
                .filter(|(g, owner)| owner.as_str() == server_id && !keep.contains(*g))
                .map(|(g, _)| g.clone())
                .collect();
            for g in stale {
                dataset.delete_graph(&g);
                owners.remove(&g);
            }
            for update in updates {
                apply_update(dataset, owners, server_id, update);
            }
        });
    }

    fn write(&self, f: impl FnOnce(&mut Dataset, &mut BTreeMap<Iri, String>)) {
        let _writer = self.writer.lock();
        let current = self.snapshot();
        let mut dataset = current.dataset.clone();
        let mut owners = current.owners.clone();
        f(&mut dataset, &mut owners);
        *self.current.write() = Arc::new(Snapshot {
            dataset,
            owners,
            index: OnceLock::new(),
        });
    }

    /// Parses and runs a query over the current snapshot, recording latency.
    pub fn sparql_query(&self, text: &str) -> Result<BindingTable, QueryError> {
        let started = Instant::now();
        let query = sparql::parse_query(text)?;
        let table = self.snapshot().query(&query);
        self.metrics
            .record_query_latency(started.elapsed().as_secs_f64() * 1000.0);
        Ok(table)
    }

    pub fn query(&self, query: &Query) -> BindingTable {
        let started = Instant::now();
        let table = self.snapshot().query(query);
        self.metrics
            .record_query_latency(started.elapsed().as_secs_f64() * 1000.0);
        table
    }

    /// Canonical N-Triples of the union-default view.
    pub fn dump_ntriples(&self) -> String {
        ntriples::serialize_ntriples(&self.snapshot().dataset.union_graph())
    }

    /// Loads an N-Triples dump, one named graph per distinct subject, owned
    /// by `server_id`.
    pub fn load_ntriples(&self, server_id: &str, text: &str) -> Result<usize, RdfError> {
        let graph = ntriples::parse_ntriples(text)?;
        let mut by_subject: BTreeMap<Iri, Graph> = BTreeMap::new();
        for triple in graph {
            by_subject.entry(triple.subject.clone()).or_default().insert(triple);
        }
        let n = by_subject.len();
        self.commit(
            server_id,
            by_subject
                .into_iter()
                .map(|(g, body)| GraphUpdate::Upsert(g, body))
                .collect(),
        );
        Ok(n)
    }
}

fn apply_update(
    dataset: &mut Dataset,
    owners: &mut BTreeMap<Iri, String>,
    server_id: &str,
    update: GraphUpdate,
) {
    match update {
        GraphUpdate::Upsert(name, graph) => {
            owners.insert(name.clone(), server_id.to_owned());
            dataset.upsert_graph(name, graph);
        }
        GraphUpdate::Delete(name) => {
            owners.remove(&name);
            dataset.delete_graph(&name);
        }
    }
}

impl std::fmt::Debug for Warehouse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Warehouse")
            .field("graphs", &self.snapshot().dataset.len())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SystemClock;
    use crate::rdf::{Term, Triple};

    fn iri(s: &str) -> Iri {
        Iri::new(s).unwrap()
    }

    fn body(s: &str, v: &str) -> Graph {
        [Triple::new(iri(s), iri("http://ex/p"), Term::literal(v))]
            .into_iter()
            .collect()
    }

    #[test]
    fn empty_warehouse_answers_empty_group_with_one_row() {
        let wh = Warehouse::new(Arc::new(SystemClock));
        let table = wh.sparql_query("SELECT * WHERE { }").unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(wh.metrics_snapshot().record.query_latency_ms.len(), 1);
    }

    #[test]
    fn malformed_query_leaves_state_alone() {
        let wh = Warehouse::new(Arc::new(SystemClock));
        wh.commit("s", vec![GraphUpdate::Upsert(iri("http://ex/a"), body("http://ex/a", "1"))]);
        let before = wh.dataset();
        assert!(wh.sparql_query("SELECT ?x WHERE {").is_err());
        assert_eq!(wh.dataset(), before);
    }

    #[test]
    fn snapshots_are_isolated_from_later_commits() {
        let wh = Warehouse::new(Arc::new(SystemClock));
        wh.commit("s", vec![GraphUpdate::Upsert(iri("http://ex/a"), body("http://ex/a", "1"))]);
        let snap = wh.snapshot();
        wh.commit("s", vec![GraphUpdate::Delete(iri("http://ex/a"))]);
        assert_eq!(snap.dataset().len(), 1);
        assert!(wh.dataset().is_empty());
    }

    #[test]
    fn replace_server_drops_orphans_of_that_server_only() {
        let wh = Warehouse::new(Arc::new(SystemClock));
        wh.commit(
            "a",
            vec![
                GraphUpdate::Upsert(iri("http://a/1"), body("http://a/1", "x")),
                GraphUpdate::Upsert(iri("http://a/2"), body("http://a/2", "x")),
            ],
        );
        wh.commit("b", vec![GraphUpdate::Upsert(iri("http://b/1"), body("http://b/1", "x"))]);
        let keep: BTreeSet<Iri> = [iri("http://a/1")].into_iter().collect();
        wh.replace_server("a", vec![], &keep);
        let names: Vec<String> = wh.dataset().graph_names().map(|g| g.to_string()).collect();
        assert_eq!(names, vec!["http://a/1", "http://b/1"]);
    }

    #[test]
    fn dump_and_load_regroup_by_subject() {
        let wh = Warehouse::new(Arc::new(SystemClock));
        wh.commit(
            "a",
            vec![
                GraphUpdate::Upsert(iri("http://a/1"), body("http://a/1", "x")),
                GraphUpdate::Upsert(iri("http://a/2"), body("http://a/2", "y")),
            ],
        );
        let dump = wh.dump_ntriples();
        let other = Warehouse::new(Arc::new(SystemClock));
        assert_eq!(other.load_ntriples("a", &dump).unwrap(), 2);
        assert_eq!(other.dataset(), wh.dataset());
    }
}
