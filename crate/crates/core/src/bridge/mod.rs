//! Push path: servers publish their change events over a pub/sub transport
//! and the warehouse applies them as they arrive.
//!
//! Messages carry event metadata only, never resource content, so the
//! consumer still fetches each changed resource. Delivery is at least once;
//! duplicates are dropped by order and gaps are closed by pulling the
//! server's change log.

mod publisher;
mod transport;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::client::{ApplyReport, SyncError, TrsClient};
use crate::metrics::Metrics;
use crate::trs::ChangeEvent;

pub use publisher::{Batcher, Publisher, PublisherSettings};
pub use transport::{topic_matches, Delivery, InProcessBus, MqttTransport, PubSub, TransportError};

/// Subscription filter covering every server's event topic.
pub const EVENTS_FILTER: &str = "trs/+/events";

pub fn topic_for(server_id: &str) -> String {
    format!("trs/{server_id}/events")
}

/// Server id from a `trs/{serverId}/events` topic.
pub fn server_of_topic(topic: &str) -> Option<&str> {
    let rest = topic.strip_prefix("trs/")?.strip_suffix("/events")?;
    (!rest.is_empty() && !rest.contains('/')).then_some(rest)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessageError {
    #[error("message carries no events")]
    Empty,
    #[error("message has an empty serverId")]
    NoServer,
    #[error("event orders not strictly ascending: {next} follows {previous}")]
    Unordered { previous: u64, next: u64 },
    #[error("batch of {len} events exceeds max_batch {max}")]
    TooLarge { len: usize, max: usize },
    #[error("malformed message: {0}")]
    Malformed(String),
}

/// `{"serverId":…,"events":[…]}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChangeEventMessage {
    server_id: String,
    events: Vec<ChangeEvent>,
}

impl ChangeEventMessage {
    pub fn new(server_id: impl Into<String>, events: Vec<ChangeEvent>) -> Result<Self, MessageError> {
        let msg = ChangeEventMessage {
            server_id: server_id.into(),
            events,
        };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<(), MessageError> {
        if self.server_id.is_empty() {
            return Err(MessageError::NoServer);
        }
        if self.events.is_empty() {
            return Err(MessageError::Empty);
        }
        for pair in self.events.windows(2) {
            if pair[1].order <= pair[0].order {
                return Err(MessageError::Unordered {
                    previous: pair[0].order,
                    next: pair[1].order,
                });
            }
        }
        Ok(())
    }

    pub fn check_batch_size(&self, max_batch: usize) -> Result<(), MessageError> {
        if self.events.len() > max_batch {
            return Err(MessageError::TooLarge {
                len: self.events.len(),
                max: max_batch,
            });
        }
        Ok(())
    }

    pub fn server_id(&self) -> &str {
        &self.server_id
    }

    pub fn events(&self) -> &[ChangeEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<ChangeEvent> {
        self.events
    }

    pub fn topic(&self) -> String {
        topic_for(&self.server_id)
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("message serializes")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, MessageError> {
        let msg: ChangeEventMessage =
            serde_json::from_slice(bytes).map_err(|e| MessageError::Malformed(e.to_string()))?;
        msg.validate()?;
        Ok(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sequence {
    InSequence,
    /// Events between `expected` and `first` never arrived.
    Gap { expected: u64, first: u64 },
    /// The message starts at or below an order already applied.
    Stale,
}

/// Tracks the next order expected from each server.
#[derive(Debug, Clone, Default)]
pub struct GapDetector {
    expected: BTreeMap<String, u64>,
}

impl GapDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn expected_next_order(&self, server_id: &str) -> u64 {
        self.expected.get(server_id).copied().unwrap_or(1)
    }

    pub fn classify(&self, server_id: &str, first_order: u64) -> Sequence {
        let expected = self.expected_next_order(server_id);
        match first_order.cmp(&expected) {
            std::cmp::Ordering::Equal => Sequence::InSequence,
            std::cmp::Ordering::Greater => Sequence::Gap {
                expected,
                first: first_order,
            },
            std::cmp::Ordering::Less => Sequence::Stale,
        }
    }

    /// Records that everything up to `last_applied` is in the warehouse.
    /// Never moves backwards.
    pub fn advance(&mut self, server_id: &str, last_applied: u64) {
        let slot = self.expected.entry(server_id.to_owned()).or_insert(1);
        *slot = (*slot).max(last_applied + 1);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageOutcome {
    Applied(ApplyReport),
    /// A gap was closed by pulling the change log first.
    CaughtUp(ApplyReport),
    /// Every event had already been applied.
    Duplicate,
}

/// Applies one decoded message for the server `client` follows.
pub fn on_message(
    msg: &ChangeEventMessage,
    detector: &mut GapDetector,
    client: &mut TrsClient,
    metrics: &Metrics,
) -> Result<MessageOutcome, SyncError> {
    metrics.mqtt_message();
    let server = client.server_id().to_owned();
    detector.advance(&server, client.last_applied_order());

    let last = client.last_applied_order();
    let stale = msg.events().iter().filter(|e| e.order <= last).count();
    if stale > 0 {
        metrics.mqtt_stale_events(stale as u64);
    }
    let fresh = &msg.events()[stale..];
    let Some(first) = fresh.first() else {
        return Ok(MessageOutcome::Duplicate);
    };

    let contiguous = fresh.iter().zip(first.order..).all(|(e, o)| e.order == o);
    let outcome = match detector.classify(&server, first.order) {
        Sequence::InSequence if contiguous => MessageOutcome::Applied(client.apply_events(fresh)?),
        _ => {
            metrics.mqtt_gap();
            client.sync_once()?;
            MessageOutcome::CaughtUp(client.apply_events(fresh)?)
        }
    };
    detector.advance(&server, client.last_applied_order());
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::Iri;
    use crate::trs::ChangeKind;

    fn ev(order: u64) -> ChangeEvent {
        ChangeEvent::new(order, Iri::new("http://reqs/r/1").unwrap(), ChangeKind::Creation, 1_700_000_000_000)
    }

    #[test]
    fn encodes_single_event_in_canonical_key_order() {
        let msg = ChangeEventMessage::new("reqs", vec![ev(1)]).unwrap();
        assert_eq!(
            String::from_utf8(msg.encode()).unwrap(),
            r#"{"serverId":"reqs","events":[{"order":1,"uri":"http://reqs/r/1","kind":"Creation","ts":1700000000000}]}"#
        );
        assert_eq!(msg.topic(), "trs/reqs/events");
    }

    #[test]
    fn batch_round_trips() {
        let msg = ChangeEventMessage::new("reqs", vec![ev(1), ev(2), ev(3)]).unwrap();
        let back = ChangeEventMessage::decode(&msg.encode()).unwrap();
        assert_eq!(back.events().len(), 3);
        assert_eq!(back, msg);
    }

    #[test]
    fn rejects_invalid_messages() {
        assert_eq!(ChangeEventMessage::new("reqs", vec![]), Err(MessageError::Empty));
        assert!(matches!(
            ChangeEventMessage::new("reqs", vec![ev(2), ev(2)]),
            Err(MessageError::Unordered { .. })
        ));
        for bad in [
            r#"{"serverId":"reqs","events":[{"order":1,"uri":"http://x","kind":"Renamed","ts":0}]}"#,
            r#"{"serverId":"reqs","events":[]}"#,
            r#"{"serverId":"reqs","events":[{"order":2,"uri":"http://x","kind":"Creation","ts":0},{"order":1,"uri":"http://x","kind":"Creation","ts":0}]}"#,
            r#"{"serverId":"reqs","events":[{"order":1,"uri":"not an iri","kind":"Creation","ts":0}]}"#,
            "not json",
        ] {
            assert!(ChangeEventMessage::decode(bad.as_bytes()).is_err(), "{bad}");
        }
        let big = ChangeEventMessage::new("reqs", (1..=11).map(ev).collect()).unwrap();
        assert!(big.check_batch_size(10).is_err());
    }

    #[test]
    fn topics() {
        assert_eq!(server_of_topic("trs/reqs/events"), Some("reqs"));
        assert_eq!(server_of_topic("trs//events"), None);
        assert_eq!(server_of_topic("trs/a/b/events"), None);
        assert_eq!(server_of_topic("other"), None);
    }

    #[test]
    fn gap_detector_classifies_and_never_regresses() {
        let mut d = GapDetector::new();
        assert_eq!(d.classify("s", 1), Sequence::InSequence);
        assert_eq!(d.classify("s", 4), Sequence::Gap { expected: 1, first: 4 });
        d.advance("s", 5);
        assert_eq!(d.classify("s", 6), Sequence::InSequence);
        assert_eq!(d.classify("s", 3), Sequence::Stale);
        d.advance("s", 2);
        assert_eq!(d.expected_next_order("s"), 6);
    }
}
