use std::collections::VecDeque;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{select, Receiver, Sender};

use super::{topic_for, ChangeEventMessage, PubSub};
use crate::metrics::PublisherStats;
use crate::trs::{ChangeEvent, TrsServer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublisherSettings {
    /// Events recorded within this many milliseconds of the first pending
    /// one share a message. 0 sends every event on its own.
    pub batch_window_ms: u64,
    pub max_batch: usize,
    /// Events held while the transport is down; beyond this the oldest are
    /// dropped and subscribers recover them from the change log.
    pub buffer_max: usize,
}

impl Default for PublisherSettings {
    fn default() -> Self {
        PublisherSettings {
            batch_window_ms: 0,
            max_batch: 10,
            buffer_max: 1_000,
        }
    }
}

impl From<&crate::warehouse::MqttSettings> for PublisherSettings {
    fn from(s: &crate::warehouse::MqttSettings) -> Self {
        PublisherSettings {
            batch_window_ms: s.batch_window_ms,
            max_batch: s.max_batch,
            buffer_max: s.buffer_max,
        }
    }
}

/// Groups pending events into messages. Time is passed in, so the
/// batching rules can be tested without threads.
#[derive(Debug, Clone)]
pub struct Batcher {
    settings: PublisherSettings,
    pending: VecDeque<ChangeEvent>,
    window_start: Option<u64>,
}

impl Batcher {
    pub fn new(settings: PublisherSettings) -> Self {
        Batcher {
            settings,
            pending: VecDeque::new(),
            window_start: None,
        }
    }

    fn batch_limit(&self) -> usize {
        if self.settings.batch_window_ms == 0 {
            1
        } else {
            self.settings.max_batch.max(1)
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Queues an event; returns how many old events had to be dropped.
    pub fn push(&mut self, event: ChangeEvent, now_ms: u64) -> usize {
        if self.pending.is_empty() {
            self.window_start = Some(now_ms);
        }
        self.pending.push_back(event);
        self.enforce_limit()
    }

    fn enforce_limit(&mut self) -> usize {
        let mut dropped = 0;
        while self.pending.len() > self.settings.buffer_max {
            self.pending.pop_front();
            dropped += 1;
        }
        if self.pending.is_empty() {
            self.window_start = None;
        }
        dropped
    }

    /// When the pending partial batch becomes due.
    pub fn deadline(&self) -> Option<u64> {
        self.window_start.map(|s| s + self.settings.batch_window_ms)
    }

    /// Next batch that may be sent at `now_ms`: a full batch at once, a
    /// partial one when its window has closed.
    pub fn next_batch(&mut self, now_ms: u64) -> Option<Vec<ChangeEvent>> {
        let limit = self.batch_limit();
        let due = self.deadline().is_some_and(|d| now_ms >= d);
        if self.pending.len() < limit && !(due && !self.pending.is_empty()) {
            return None;
        }
        let n = self.pending.len().min(limit);
        let batch: Vec<ChangeEvent> = self.pending.drain(..n).collect();
        if self.pending.is_empty() {
            self.window_start = None;
        }
        Some(batch)
    }

    /// Puts a batch that could not be sent back in front. Returns how many
    /// events were dropped to respect the buffer limit.
    pub fn requeue(&mut self, batch: Vec<ChangeEvent>, now_ms: u64) -> usize {
        if self.pending.is_empty() {
            self.window_start = Some(now_ms);
        }
        for event in batch.into_iter().rev() {
            self.pending.push_front(event);
        }
        self.enforce_limit()
    }
}

/// Forwards a server's recorded events to a transport on a background
/// thread, in record order.
pub struct Publisher {
    stats: Arc<PublisherStats>,
    stop: Option<Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

const RETRY_DELAY: Duration = Duration::from_millis(50);

impl Publisher {
    pub fn spawn(server: &TrsServer, transport: Arc<dyn PubSub>, settings: PublisherSettings) -> Self {
        let events = server.subscribe();
        let server_id = server.id().to_owned();
        let stats = Arc::new(PublisherStats::default());
        let (stop_tx, stop_rx) = crossbeam_channel::bounded::<()>(0);
        let thread = {
            let stats = stats.clone();
            std::thread::Builder::new()
                .name(format!("publish-{server_id}"))
                .spawn(move || run(server_id, events, stop_rx, transport, settings, stats))
                .expect("spawn publisher thread")
        };
        Publisher {
            stats,
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn stats(&self) -> Arc<PublisherStats> {
        self.stats.clone()
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Publisher {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn run(
    server_id: String,
    events: Receiver<ChangeEvent>,
    stop: Receiver<()>,
    transport: Arc<dyn PubSub>,
    settings: PublisherSettings,
    stats: Arc<PublisherStats>,
) {
    let epoch = Instant::now();
    let now = || epoch.elapsed().as_millis() as u64;
    let topic = topic_for(&server_id);
    let mut batcher = Batcher::new(settings);
    let mut retry_at: Option<u64> = None;

    loop {
        let wake = match (batcher.deadline(), retry_at) {
            (Some(d), Some(r)) => Some(d.max(r)),
            (Some(d), None) => Some(d),
            (None, _) => None,
        };
        let timeout = match wake {
            Some(w) => Duration::from_millis(w.saturating_sub(now())),
            None => Duration::from_secs(3600),
        };
        select! {
            recv(stop) -> _ => return,
            recv(events) -> msg => match msg {
                Ok(event) => {
                    let dropped = batcher.push(event, now());
                    stats.dropped.fetch_add(dropped as u64, Ordering::Relaxed);
                }
                Err(_) => return,
            },
            default(timeout) => {}
        }
        // Anything recorded meanwhile joins the queue before batching.
        for event in events.try_iter() {
            let dropped = batcher.push(event, now());
            stats.dropped.fetch_add(dropped as u64, Ordering::Relaxed);
        }
        if retry_at.is_some_and(|r| now() < r) {
            continue;
        }
        retry_at = None;
        while let Some(batch) = batcher.next_batch(now()) {
            let len = batch.len();
            let msg = ChangeEventMessage::new(server_id.clone(), batch).expect("server events are ordered");
            match transport.publish(&topic, &msg.encode()) {
                Ok(()) => {
                    stats.messages.fetch_add(1, Ordering::Relaxed);
                    stats.events.fetch_add(len as u64, Ordering::Relaxed);
                }
                Err(e) => {
                    tracing::debug!(server = %server_id, error = %e, "publish failed, buffering");
                    let dropped = batcher.requeue(msg.into_events(), now());
                    stats.dropped.fetch_add(dropped as u64, Ordering::Relaxed);
                    retry_at = Some(now() + RETRY_DELAY.as_millis() as u64);
                    break;
                }
            }
        }
    }
}
