//! TRS client: loads a server's Base, follows its change log, and keeps the
//! warehouse's graphs for that server current.
//!
//! One [`TrsClient`] drives one server. Each sync window is compacted so a
//! resource is fetched at most once per window, whatever happened to it in
//! between.

mod compact;
mod source;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::metrics::{ServerCounters, StalenessSample};
use crate::rdf::{Graph, Iri};
use crate::trs::ChangeEvent;
use crate::warehouse::{GraphUpdate, Warehouse};

pub use compact::{compact, Action, EffectiveAction, OrderError};
pub use source::{FaultySource, FetchError, HttpSource, LocalSource, TrsSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Initial,
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncState {
    pub server_id: String,
    pub trs_url: String,
    pub last_applied_order: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("server {server}: {source}")]
    Fetch {
        server: String,
        #[source]
        source: FetchError,
    },
    #[error("server {server}: change log truncated past order {last_applied}")]
    LogTruncated { server: String, last_applied: u64 },
    #[error("server {server}: {source}")]
    Order {
        server: String,
        #[source]
        source: OrderError,
    },
    #[error("server {server}: poll before initial sync")]
    NotSynced { server: String },
    #[error("server {server}: base kept changing during initial sync")]
    Unstable { server: String },
}

/// Retries for a single request within one sync cycle.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(20),
            max_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        RetryPolicy {
            attempts: 1,
            ..Self::default()
        }
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T, FetchError>) -> Result<T, FetchError> {
        let mut delay = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt >= self.attempts.max(1) => return Err(e),
                Err(_) => {
                    std::thread::sleep(delay);
                    delay = (delay * 2).min(self.max_backoff);
                    attempt += 1;
                }
            }
        }
    }
}

/// Backoff for resources whose fetch kept failing: first retry after 1 s,
/// doubling up to 60 s.
pub const DIRTY_BACKOFF_MIN_MS: u64 = 1_000;
pub const DIRTY_BACKOFF_MAX_MS: u64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DirtyEntry {
    failures: u32,
    next_attempt_ms: u64,
}

fn dirty_backoff_ms(failures: u32) -> u64 {
    let shift = failures.saturating_sub(1).min(16);
    (DIRTY_BACKOFF_MIN_MS << shift).min(DIRTY_BACKOFF_MAX_MS)
}

/// What a window of events did to the warehouse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApplyReport {
    pub events: usize,
    pub fetched: usize,
    pub deleted: usize,
    pub skipped: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncOutcome {
    Applied(ApplyReport),
    Resynced,
}

pub struct TrsClient {
    source: Arc<dyn TrsSource>,
    warehouse: Arc<Warehouse>,
    state: SyncState,
    retry: RetryPolicy,
    counters: Arc<ServerCounters>,
    dirty: BTreeMap<Iri, DirtyEntry>,
}

impl TrsClient {
    pub fn new(source: Arc<dyn TrsSource>, warehouse: Arc<Warehouse>, trs_url: impl Into<String>) -> Self {
        let server_id = source.server_id().to_owned();
        let counters = warehouse.metrics().server(&server_id);
        TrsClient {
            source,
            warehouse,
            state: SyncState {
                server_id,
                trs_url: trs_url.into(),
                last_applied_order: 0,
                phase: Phase::Initial,
            },
            retry: RetryPolicy::default(),
            counters,
            dirty: BTreeMap::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn state(&self) -> &SyncState {
        &self.state
    }

    pub fn server_id(&self) -> &str {
        &self.state.server_id
    }

    pub fn last_applied_order(&self) -> u64 {
        self.state.last_applied_order
    }

    pub fn dirty(&self) -> BTreeSet<Iri> {
        self.dirty.keys().cloned().collect()
    }

    fn fetch_error(&self, source: FetchError) -> SyncError {
        SyncError::Fetch {
            server: self.state.server_id.clone(),
            source,
        }
    }

    fn get_base_page(&self, n: usize) -> Result<crate::trs::BasePage, SyncError> {
        self.retry
            .run(|| {
                ServerCounters::incr(&self.counters.page_gets);
                self.source.base_page(n)
            })
            .map_err(|e| self.fetch_error(e))
    }

    fn get_changelog_page(&self, n: usize) -> Result<crate::trs::ChangeLogPage, SyncError> {
        self.retry
            .run(|| {
                ServerCounters::incr(&self.counters.page_gets);
                self.source.changelog_page(n)
            })
            .map_err(|e| self.fetch_error(e))
    }

    fn fetch(&self, uri: &Iri) -> Result<Option<Graph>, FetchError> {
        self.retry.run(|| {
            ServerCounters::incr(&self.counters.resource_gets);
            self.source.fetch(uri)
        })
    }

    /// Loads the Base and every event past its cutoff, then replaces this
    /// server's graphs in one commit. On error the warehouse is untouched.
    pub fn initial_sync(&mut self) -> Result<(), SyncError> {
        const MAX_ATTEMPTS: usize = 5;
        for _ in 0..MAX_ATTEMPTS {
            if let Some(result) = self.try_initial_sync()? {
                let (contents, last_order) = result;
                let keep: BTreeSet<Iri> = contents
                    .iter()
                    .filter(|(_, g)| g.is_some())
                    .map(|(u, _)| u.clone())
                    .collect();
                let updates = contents
                    .into_iter()
                    .filter_map(|(u, g)| g.map(|g| GraphUpdate::Upsert(u, g)))
                    .collect();
                self.warehouse.replace_server(&self.state.server_id, updates, &keep);
                self.state.last_applied_order = self.state.last_applied_order.max(last_order);
                self.state.phase = Phase::Incremental;
                self.publish_dirty();
                return Ok(());
            }
        }
        Err(SyncError::Unstable {
            server: self.state.server_id.clone(),
        })
    }

    /// `Ok(None)` when the server rebased mid-read and the read must restart.
    #[allow(clippy::type_complexity)]
    fn try_initial_sync(&mut self) -> Result<Option<(BTreeMap<Iri, Option<Graph>>, u64)>, SyncError> {
        let mut members = Vec::new();
        let mut page = 0;
        let mut cutoff = None;
        loop {
            let p = self.get_base_page(page)?;
            match cutoff {
                None => cutoff = Some(p.cutoff_order),
                Some(c) if c != p.cutoff_order => return Ok(None),
                Some(_) => {}
            }
            members.extend(p.members);
            match p.next {
                Some(n) => page = n,
                None => break,
            }
        }
        let cutoff = cutoff.unwrap_or(0);

        let mut contents: BTreeMap<Iri, Option<Graph>> = BTreeMap::new();
        for uri in members {
            let body = self.fetch_for_initial(&uri)?;
            ServerCounters::incr(&self.counters.initial_fetches);
            contents.insert(uri, body);
        }

        let events = match self.read_log_after(cutoff) {
            Ok(events) => events,
            Err(SyncError::LogTruncated { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let actions = compact(&events).map_err(|source| SyncError::Order {
            server: self.state.server_id.clone(),
            source,
        })?;
        for action in &actions {
            match action.action {
                Action::FetchAndUpsert => {
                    let body = self.fetch_for_initial(&action.uri)?;
                    ServerCounters::incr(&self.counters.fetch_actions);
                    contents.insert(action.uri.clone(), body);
                }
                Action::DeleteGraph => {
                    ServerCounters::incr(&self.counters.delete_actions);
                    contents.insert(action.uri.clone(), None);
                }
                Action::Skip => ServerCounters::incr(&self.counters.skip_actions),
            }
        }
        let last = events.last().map_or(cutoff, |e| e.order);
        Ok(Some((contents, last)))
    }

    /// An unreachable server fails the sync; a single broken resource is
    /// recorded as dirty and retried later.
    fn fetch_for_initial(&mut self, uri: &Iri) -> Result<Option<Graph>, SyncError> {
        match self.fetch(uri) {
            Ok(body) => {
                self.dirty.remove(uri);
                Ok(body)
            }
            Err(e @ FetchError::Unreachable(_)) => Err(self.fetch_error(e)),
            Err(_) => {
                ServerCounters::incr(&self.counters.fetch_failures);
                self.mark_dirty(uri.clone());
                Ok(None)
            }
        }
    }

    /// Reads every event with order greater than `after`, oldest first,
    /// walking the change log newest-first until an older order shows up.
    fn read_log_after(&self, after: u64) -> Result<Vec<ChangeEvent>, SyncError> {
        let mut newer = Vec::new();
        let mut page = 0;
        let mut cutoff = 0;
        let mut reached_known = false;
        loop {
            let p = self.get_changelog_page(page)?;
            if page == 0 {
                cutoff = p.cutoff_order;
            }
            for event in p.events {
                if event.order <= after {
                    reached_known = true;
                    break;
                }
                newer.push(event);
            }
            match p.next {
                Some(n) if !reached_known => page = n,
                _ => break,
            }
        }
        newer.reverse();
        newer.dedup_by_key(|e| e.order);

        let contiguous = newer
            .iter()
            .zip(after + 1..)
            .all(|(e, expected)| e.order == expected);
        let truncated = match newer.first() {
            Some(_) => !contiguous,
            None => cutoff > after,
        };
        if truncated {
            return Err(SyncError::LogTruncated {
                server: self.state.server_id.clone(),
                last_applied: after,
            });
        }
        Ok(newer)
    }

    /// Events recorded since the last applied order, oldest first.
    pub fn poll_once(&self) -> Result<Vec<ChangeEvent>, SyncError> {
        if self.state.phase != Phase::Incremental {
            return Err(SyncError::NotSynced {
                server: self.state.server_id.clone(),
            });
        }
        self.read_log_after(self.state.last_applied_order)
    }

    /// One polling cycle: pull new events and apply them, falling back to a
    /// full resync if the log no longer reaches back to our position. Dirty
    /// resources that are due are retried afterwards.
    pub fn sync_once(&mut self) -> Result<SyncOutcome, SyncError> {
        let outcome = match self.poll_once() {
            Ok(events) => SyncOutcome::Applied(self.apply_events(&events)?),
            Err(SyncError::LogTruncated { .. }) => {
                ServerCounters::incr(&self.counters.resyncs);
                self.initial_sync()?;
                SyncOutcome::Resynced
            }
            Err(e) => return Err(e),
        };
        self.retry_dirty();
        Ok(outcome)
    }

    /// Compacts and applies a window. Events at or below the last applied
    /// order are ignored, so redelivered windows are harmless.
    pub fn apply_events(&mut self, events: &[ChangeEvent]) -> Result<ApplyReport, SyncError> {
        let fresh: Vec<ChangeEvent> = events
            .iter()
            .filter(|e| e.order > self.state.last_applied_order)
            .cloned()
            .collect();
        if fresh.is_empty() {
            return Ok(ApplyReport::default());
        }
        let actions = compact(&fresh).map_err(|source| SyncError::Order {
            server: self.state.server_id.clone(),
            source,
        })?;
        let mut report = self.apply_actions(&actions);
        report.events = fresh.len();
        self.counters
            .events_applied
            .fetch_add(fresh.len() as u64, std::sync::atomic::Ordering::Relaxed);

        let applied_at = self.warehouse.clock().now_ms();
        self.warehouse.metrics().record_staleness(fresh.iter().map(|e| StalenessSample {
            event_ts: e.ts,
            apply_ts: applied_at.max(e.ts),
        }));
        Ok(report)
    }

    /// Executes actions and commits them as one batch. A fetch that still
    /// fails after retries marks the resource dirty instead of stalling.
    pub fn apply_actions(&mut self, actions: &[EffectiveAction]) -> ApplyReport {
        let mut report = ApplyReport::default();
        let mut updates = Vec::new();
        for action in actions {
            match action.action {
                Action::FetchAndUpsert => {
                    ServerCounters::incr(&self.counters.fetch_actions);
                    match self.fetch(&action.uri) {
                        Ok(Some(body)) => {
                            updates.push(GraphUpdate::Upsert(action.uri.clone(), body));
                            self.dirty.remove(&action.uri);
                            report.fetched += 1;
                        }
                        Ok(None) => {
                            updates.push(GraphUpdate::Delete(action.uri.clone()));
                            self.dirty.remove(&action.uri);
                            report.deleted += 1;
                        }
                        Err(_) => {
                            ServerCounters::incr(&self.counters.fetch_failures);
                            self.mark_dirty(action.uri.clone());
                            report.failed += 1;
                        }
                    }
                }
                Action::DeleteGraph => {
                    ServerCounters::incr(&self.counters.delete_actions);
                    updates.push(GraphUpdate::Delete(action.uri.clone()));
                    self.dirty.remove(&action.uri);
                    report.deleted += 1;
                }
                Action::Skip => {
                    ServerCounters::incr(&self.counters.skip_actions);
                    self.dirty.remove(&action.uri);
                    report.skipped += 1;
                }
            }
        }
        self.warehouse.commit(&self.state.server_id, updates);
        if let Some(max) = actions.iter().map(|a| a.max_order).max() {
            self.state.last_applied_order = self.state.last_applied_order.max(max);
        }
        self.publish_dirty();
        report
    }

    /// Retries dirty resources whose backoff has elapsed. Returns how many
    /// were repaired.
    pub fn retry_dirty(&mut self) -> usize {
        let now = self.warehouse.clock().now_ms();
        let due: Vec<Iri> = self
            .dirty
            .iter()
            .filter(|(_, d)| d.next_attempt_ms <= now)
            .map(|(u, _)| u.clone())
            .collect();
        let mut repaired = 0;
        let mut updates = Vec::new();
        for uri in due {
            match self.fetch(&uri) {
                Ok(body) => {
                    updates.push(match body {
                        Some(g) => GraphUpdate::Upsert(uri.clone(), g),
                        None => GraphUpdate::Delete(uri.clone()),
                    });
                    self.dirty.remove(&uri);
                    repaired += 1;
                }
                Err(_) => {
                    ServerCounters::incr(&self.counters.fetch_failures);
                    self.mark_dirty(uri);
                }
            }
        }
        self.warehouse.commit(&self.state.server_id, updates);
        self.publish_dirty();
        repaired
    }

    fn mark_dirty(&mut self, uri: Iri) {
        let now = self.warehouse.clock().now_ms();
        let entry = self.dirty.entry(uri).or_insert(DirtyEntry {
            failures: 0,
            next_attempt_ms: now,
        });
        entry.failures += 1;
        entry.next_attempt_ms = now + dirty_backoff_ms(entry.failures);
    }

    fn publish_dirty(&self) {
        self.warehouse
            .metrics()
            .set_dirty(&self.state.server_id, self.dirty());
    }
}

impl std::fmt::Debug for TrsClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrsClient")
            .field("state", &self.state)
            .field("dirty", &self.dirty.len())
            .finish_non_exhaustive()
    }
}
