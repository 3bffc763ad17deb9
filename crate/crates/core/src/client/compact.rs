use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::rdf::Iri;
use crate::trs::{ChangeEvent, ChangeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Action {
    FetchAndUpsert,
    DeleteGraph,
    Skip,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::FetchAndUpsert => "FetchAndUpsert",
            Action::DeleteGraph => "DeleteGraph",
            Action::Skip => "Skip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct EffectiveAction {
    pub uri: Iri,
    pub action: Action,
    /// Largest event order folded into this action.
    pub max_order: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("change events out of order: {next} follows {previous}")]
pub struct OrderError {
    pub previous: u64,
    pub next: u64,
}

/// Folds a window of events into at most one action per resource.
///
/// Only the first and last event of each resource matter: a resource that
/// was both created and deleted inside the window never reaches the
/// warehouse, any other resource whose last event is a deletion is dropped,
/// and everything else is re-fetched in its current state.
pub fn compact(events: &[ChangeEvent]) -> Result<Vec<EffectiveAction>, OrderError> {
    for pair in events.windows(2) {
        if pair[1].order <= pair[0].order {
            return Err(OrderError {
                previous: pair[0].order,
                next: pair[1].order,
            });
        }
    }

    // uri -> (first kind, last kind, last order)
    let mut folded: BTreeMap<&Iri, (ChangeKind, ChangeKind, u64)> = BTreeMap::new();
    for e in events {
        folded
            .entry(&e.uri)
            .and_modify(|(_, last, order)| {
                *last = e.kind;
                *order = e.order;
            })
            .or_insert((e.kind, e.kind, e.order));
    }

    let mut actions: Vec<EffectiveAction> = folded
        .into_iter()
        .map(|(uri, (first, last, max_order))| {
            let action = match (first, last) {
                (ChangeKind::Creation, ChangeKind::Deletion) => Action::Skip,
                (_, ChangeKind::Deletion) => Action::DeleteGraph,
                _ => Action::FetchAndUpsert,
            };
            EffectiveAction {
                uri: uri.clone(),
                action,
                max_order,
            }
        })
        .collect();
    actions.sort_by_key(|a| a.max_order);
    Ok(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChangeKind::*;

    fn ev(order: u64, uri: &str, kind: ChangeKind) -> ChangeEvent {
        ChangeEvent::new(order, Iri::new(uri).unwrap(), kind, 0)
    }

    fn summary(actions: &[EffectiveAction]) -> Vec<(String, Action, u64)> {
        actions
            .iter()
            .map(|a| (a.uri.to_string(), a.action, a.max_order))
            .collect()
    }

    #[test]
    fn create_modify_delete_does_nothing() {
        let events = [ev(1, "http://r/1", Creation), ev(2, "http://r/1", Modification), ev(3, "http://r/1", Deletion)];
        assert_eq!(
            summary(&compact(&events).unwrap()),
            vec![("http://r/1".into(), Action::Skip, 3)]
        );
    }

    #[test]
    fn single_modification_fetches() {
        let events = [ev(1, "http://r/1", Modification)];
        assert_eq!(
            summary(&compact(&events).unwrap()),
            vec![("http://r/1".into(), Action::FetchAndUpsert, 1)]
        );
    }

    #[test]
    fn delete_then_recreate_fetches() {
        let events = [ev(4, "http://r/1", Deletion), ev(5, "http://r/1", Creation)];
        assert_eq!(compact(&events).unwrap()[0].action, Action::FetchAndUpsert);
    }

    #[test]
    fn modify_then_delete_deletes() {
        let events = [ev(4, "http://r/1", Modification), ev(5, "http://r/1", Deletion)];
        assert_eq!(compact(&events).unwrap()[0].action, Action::DeleteGraph);
    }

    #[test]
    fn actions_follow_last_touch_order() {
        let events = [
            ev(1, "http://r/a", Creation),
            ev(2, "http://r/b", Creation),
            ev(3, "http://r/a", Modification),
        ];
        assert_eq!(
            summary(&compact(&events).unwrap()),
            vec![
                ("http://r/b".into(), Action::FetchAndUpsert, 2),
                ("http://r/a".into(), Action::FetchAndUpsert, 3),
            ]
        );
    }

    #[test]
    fn rejects_unordered_and_duplicate_orders() {
        let unordered = [ev(2, "http://r/a", Creation), ev(1, "http://r/b", Creation)];
        assert_eq!(compact(&unordered), Err(OrderError { previous: 2, next: 1 }));
        let dup = [ev(2, "http://r/a", Creation), ev(2, "http://r/a", Modification)];
        assert!(compact(&dup).is_err());
    }

    #[test]
    fn empty_window_is_empty() {
        assert!(compact(&[]).unwrap().is_empty());
    }
}
