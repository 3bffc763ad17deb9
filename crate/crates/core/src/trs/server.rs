use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_channel::{Receiver, Sender};
use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use super::{BasePage, ChangeEvent, ChangeKind, ChangeLogPage, TrackedResourceSet, TrsDescriptor};
use crate::clock::Clock;
use crate::rdf::{Dataset, Graph, Iri, RdfError};

#[derive(Debug, Clone)]
pub struct TrsServerConfig {
    pub page_size: usize,
    /// Rebuild the Base after this many events past the cutoff.
    pub rebase_every: Option<u64>,
    /// Keep pre-cutoff events after a rebase.
    pub retain_history: bool,
}

impl Default for TrsServerConfig {
    fn default() -> Self {
        TrsServerConfig {
            page_size: super::DEFAULT_PAGE_SIZE,
            rebase_every: None,
            retain_history: false,
        }
    }
}

/// Requests answered by a server, by endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ServedCounts {
    pub trs_documents: u64,
    pub base_pages: u64,
    pub changelog_pages: u64,
    pub resources: u64,
}

impl ServedCounts {
    pub fn total(&self) -> u64 {
        self.trs_documents + self.base_pages + self.changelog_pages + self.resources
    }
}

#[derive(Default)]
struct Counters {
    trs_documents: AtomicU64,
    base_pages: AtomicU64,
    changelog_pages: AtomicU64,
    resources: AtomicU64,
}

struct State {
    resources: BTreeMap<Iri, Arc<Graph>>,
    trs: TrackedResourceSet,
}

/// A resource host that tracks every mutation in a [`TrackedResourceSet`].
///
/// Mutations are serialized; each one updates the resource map and appends
/// its change event under the same write lock, then notifies subscribers in
/// record order after the lock is released.
pub struct TrsServer {
    id: String,
    namespace: String,
    config: TrsServerConfig,
    clock: Arc<dyn Clock>,
    state: RwLock<State>,
    mutation: Mutex<()>,
    subscribers: Mutex<Vec<Sender<ChangeEvent>>>,
    served: Counters,
}

impl TrsServer {
    /// `namespace` is the IRI prefix for resources hosted here; resource
    /// `{namespace}{id}` is served at `/resources/{id}`.
    pub fn new(
        id: impl Into<String>,
        namespace: impl Into<String>,
        config: TrsServerConfig,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let trs = TrackedResourceSet::new(config.page_size);
        let trs = if config.retain_history {
            trs.retain_history()
        } else {
            trs
        };
        TrsServer {
            id: id.into(),
            namespace: namespace.into(),
            config,
            clock,
            state: RwLock::new(State {
                resources: BTreeMap::new(),
                trs,
            }),
            mutation: Mutex::new(()),
            subscribers: Mutex::new(Vec::new()),
            served: Counters::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn config(&self) -> &TrsServerConfig {
        &self.config
    }

    pub fn resource_iri(&self, local_id: &str) -> Result<Iri, RdfError> {
        Iri::new(format!("{}{}", self.namespace, local_id))
    }

    /// The local id of a resource hosted here, if `uri` is in this namespace.
    pub fn local_id<'a>(&self, uri: &'a Iri) -> Option<&'a str> {
        uri.as_str().strip_prefix(self.namespace.as_str())
    }

    /// Receives every change event recorded from now on, in record order.
    pub fn subscribe(&self) -> Receiver<ChangeEvent> {
        let (tx, rx) = crossbeam_channel::unbounded();
        self.subscribers.lock().push(tx);
        rx
    }

    /// Stores `graph` as the current state of `uri`, recording a Creation if
    /// the resource was absent and a Modification otherwise.
    pub fn put(&self, uri: Iri, graph: Graph) -> ChangeEvent {
        let _serial = self.mutation.lock();
        let event = {
            let mut state = self.state.write();
            let kind = if state.resources.contains_key(&uri) {
                ChangeKind::Modification
            } else {
                ChangeKind::Creation
            };
            state.resources.insert(uri.clone(), Arc::new(graph));
            self.record_locked(&mut state, uri, kind)
        };
        self.notify(&event);
        event
    }

    /// Deletes `uri`. Returns `None` (and records nothing) if it was absent.
    pub fn remove(&self, uri: &Iri) -> Option<ChangeEvent> {
        let _serial = self.mutation.lock();
        let event = {
            let mut state = self.state.write();
            state.resources.remove(uri)?;
            self.record_locked(&mut state, uri.clone(), ChangeKind::Deletion)
        };
        self.notify(&event);
        Some(event)
    }

    /// Records an event without touching resource content. The server trusts
    /// its caller; a Modification of an absent resource is recorded as given.
    pub fn record(&self, uri: Iri, kind: ChangeKind) -> ChangeEvent {
        let _serial = self.mutation.lock();
        let event = {
            let mut state = self.state.write();
            self.record_locked(&mut state, uri, kind)
        };
        self.notify(&event);
        event
    }

    fn record_locked(&self, state: &mut State, uri: Iri, kind: ChangeKind) -> ChangeEvent {
        let event = state.trs.record_change(uri, kind, self.clock.now_ms());
        if let Some(every) = self.config.rebase_every {
            if state.trs.last_order() - state.trs.cutoff_order() >= every {
                let live: Vec<Iri> = state.resources.keys().cloned().collect();
                state.trs.rebase(live);
            }
        }
        event
    }

    fn notify(&self, event: &ChangeEvent) {
        self.subscribers
            .lock()
            .retain(|tx| tx.send(event.clone()).is_ok());
    }

    /// Rebuilds the Base from the live resources and moves the cutoff.
    pub fn rebase(&self) {
        let _serial = self.mutation.lock();
        let mut state = self.state.write();
        let live: Vec<Iri> = state.resources.keys().cloned().collect();
        state.trs.rebase(live);
    }

    pub fn serve_descriptor(&self) -> TrsDescriptor {
        self.served.trs_documents.fetch_add(1, Ordering::Relaxed);
        self.state.read().trs.descriptor()
    }

    pub fn serve_base_page(&self, n: usize) -> BasePage {
        self.served.base_pages.fetch_add(1, Ordering::Relaxed);
        self.state.read().trs.base_page(n)
    }

    pub fn serve_changelog_page(&self, n: usize) -> ChangeLogPage {
        self.served.changelog_pages.fetch_add(1, Ordering::Relaxed);
        self.state.read().trs.changelog_page(n)
    }

    /// Current state of a resource; `None` once deleted or if never created.
    pub fn serve_resource(&self, uri: &Iri) -> Option<Arc<Graph>> {
        self.served.resources.fetch_add(1, Ordering::Relaxed);
        self.state.read().resources.get(uri).cloned()
    }

    pub fn served_counts(&self) -> ServedCounts {
        ServedCounts {
            trs_documents: self.served.trs_documents.load(Ordering::Relaxed),
            base_pages: self.served.base_pages.load(Ordering::Relaxed),
            changelog_pages: self.served.changelog_pages.load(Ordering::Relaxed),
            resources: self.served.resources.load(Ordering::Relaxed),
        }
    }

    /// Uncounted read, for oracles and the hosting tool itself.
    pub fn resource(&self, uri: &Iri) -> Option<Arc<Graph>> {
        self.state.read().resources.get(uri).cloned()
    }

    pub fn live_uris(&self) -> BTreeSet<Iri> {
        self.state.read().resources.keys().cloned().collect()
    }

    /// Every live resource as a named graph under its own IRI.
    pub fn live_dataset(&self) -> Dataset {
        let state = self.state.read();
        let mut d = Dataset::new();
        for (uri, graph) in &state.resources {
            d.upsert_graph(uri.clone(), Arc::clone(graph));
        }
        d
    }

    pub fn trs_snapshot(&self) -> TrackedResourceSet {
        self.state.read().trs.clone()
    }

    pub fn last_order(&self) -> u64 {
        self.state.read().trs.last_order()
    }
}

impl std::fmt::Debug for TrsServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrsServer")
            .field("id", &self.id)
            .field("namespace", &self.namespace)
            .finish_non_exhaustive()
    }
}
