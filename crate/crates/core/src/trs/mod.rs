//! Tracked Resource Set server side: the change log with its paged Base and
//! cutoff, a thread-safe resource host built on it, and the HTTP surface.

pub mod http;
mod server;
mod set;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rdf::Iri;

pub use server::{ServedCounts, TrsServer, TrsServerConfig};
pub use set::{BasePage, ChangeLogPage, TrackedResourceSet, TrsDescriptor, DEFAULT_PAGE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    Creation,
    Modification,
    Deletion,
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChangeKind::Creation => "Creation",
            ChangeKind::Modification => "Modification",
            ChangeKind::Deletion => "Deletion",
        })
    }
}

/// One tracked mutation. Field order matches the wire encoding:
/// `{"order":…,"uri":…,"kind":…,"ts":…}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub order: u64,
    pub uri: Iri,
    pub kind: ChangeKind,
    /// Server wall clock, milliseconds since the Unix epoch.
    pub ts: u64,
}

impl ChangeEvent {
    pub fn new(order: u64, uri: Iri, kind: ChangeKind, ts: u64) -> Self {
        ChangeEvent {
            order,
            uri,
            kind,
            ts,
        }
    }
}

/// Applies events to a set of live resource IRIs: Creation and Modification
/// mark a resource present, Deletion marks it absent.
pub fn replay<'a>(
    base: impl IntoIterator<Item = Iri>,
    events: impl IntoIterator<Item = &'a ChangeEvent>,
) -> BTreeSet<Iri> {
    let mut live: BTreeSet<Iri> = base.into_iter().collect();
    for event in events {
        match event.kind {
            ChangeKind::Creation | ChangeKind::Modification => {
                live.insert(event.uri.clone());
            }
            ChangeKind::Deletion => {
                live.remove(&event.uri);
            }
        }
    }
    live
}

/// JSON documents served under `/trs`.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use super::ChangeEvent;

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct TrsDocument {
        pub base: String,
        pub change_log: String,
        pub cutoff_order: u64,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct BasePageDocument {
        pub base: Vec<String>,
        pub cutoff_order: u64,
        pub next: Option<String>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct ChangeLogPageDocument {
        pub change_log: Vec<ChangeEvent>,
        pub cutoff_order: u64,
        pub next: Option<String>,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn change_event_json_field_order() {
        let ev = ChangeEvent::new(
            1,
            Iri::new("http://reqs/r/1").unwrap(),
            ChangeKind::Creation,
            1_700_000_000_000,
        );
        let json = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            json,
            r#"{"order":1,"uri":"http://reqs/r/1","kind":"Creation","ts":1700000000000}"#
        );
        assert_eq!(serde_json::from_str::<ChangeEvent>(&json).unwrap(), ev);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let json = r#"{"order":1,"uri":"http://reqs/r/1","kind":"Update","ts":0}"#;
        assert!(serde_json::from_str::<ChangeEvent>(json).is_err());
        let json = r#"{"order":1,"uri":"not-absolute","kind":"Creation","ts":0}"#;
        assert!(serde_json::from_str::<ChangeEvent>(json).is_err());
    }
}
