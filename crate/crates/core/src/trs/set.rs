use std::collections::BTreeSet;

use super::{ChangeEvent, ChangeKind};
use crate::rdf::Iri;

pub const DEFAULT_PAGE_SIZE: usize = 50;

/// A server's Base snapshot, its cutoff position, and the retained change log.
///
/// Invariants:
/// * recorded orders are `1..=last_order` with no gaps;
/// * every event with `order > cutoff_order` is retained;
/// * replaying the retained events newer than the cutoff onto `base` yields
///   the live resource set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedResourceSet {
    base: Vec<Iri>,
    cutoff_order: u64,
    /// Ascending by order.
    log: Vec<ChangeEvent>,
    last_order: u64,
    page_size: usize,
    truncate_on_rebase: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrsDescriptor {
    pub cutoff_order: u64,
    pub base_members: usize,
    pub retained_events: usize,
    pub last_order: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasePage {
    pub members: Vec<Iri>,
    pub cutoff_order: u64,
    /// Index of the following page, `None` on the last page.
    pub next: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeLogPage {
    /// Newest first.
    pub events: Vec<ChangeEvent>,
    pub cutoff_order: u64,
    pub next: Option<usize>,
}

impl Default for TrackedResourceSet {
    fn default() -> Self {
        Self::new(DEFAULT_PAGE_SIZE)
    }
}

impl TrackedResourceSet {
    pub fn new(page_size: usize) -> Self {
        assert!(page_size > 0, "page size must be positive");
        TrackedResourceSet {
            base: Vec::new(),
            cutoff_order: 0,
            log: Vec::new(),
            last_order: 0,
            page_size,
            truncate_on_rebase: true,
        }
    }

    /// Keep events at or before the cutoff after a rebase instead of dropping them.
    pub fn retain_history(mut self) -> Self {
        self.truncate_on_rebase = false;
        self
    }

    pub fn record_change(&mut self, uri: Iri, kind: ChangeKind, now_ms: u64) -> ChangeEvent {
        self.last_order += 1;
        let event = ChangeEvent::new(self.last_order, uri, kind, now_ms);
        self.log.push(event.clone());
        event
    }

    pub fn descriptor(&self) -> TrsDescriptor {
        TrsDescriptor {
            cutoff_order: self.cutoff_order,
            base_members: self.base.len(),
            retained_events: self.log.len(),
            last_order: self.last_order,
        }
    }

    pub fn cutoff_order(&self) -> u64 {
        self.cutoff_order
    }

    pub fn last_order(&self) -> u64 {
        self.last_order
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn base(&self) -> &[Iri] {
        &self.base
    }

    /// Retained events, oldest first.
    pub fn events(&self) -> &[ChangeEvent] {
        &self.log
    }

    pub fn base_page(&self, n: usize) -> BasePage {
        let (members, next) = page_of(&self.base, n, self.page_size);
        BasePage {
            members: members.to_vec(),
            cutoff_order: self.cutoff_order,
            next,
        }
    }

    pub fn changelog_page(&self, n: usize) -> ChangeLogPage {
        let len = self.log.len();
        let start = n.saturating_mul(self.page_size);
        let events = if start >= len {
            Vec::new()
        } else {
            let end = (start + self.page_size).min(len);
            // Page n covers newest-first positions [start, end).
            self.log[len - end..len - start].iter().rev().cloned().collect()
        };
        let next = (start.saturating_add(self.page_size) < len).then_some(n + 1);
        ChangeLogPage {
            events,
            cutoff_order: self.cutoff_order,
            next,
        }
    }

    pub fn base_page_count(&self) -> usize {
        self.base.len().div_ceil(self.page_size).max(1)
    }

    /// Replaces the Base with a snapshot of `live` and moves the cutoff to the
    /// newest recorded order. Older events are dropped unless history is
    /// retained.
    pub fn rebase(&mut self, live: impl IntoIterator<Item = Iri>) {
        let snapshot: BTreeSet<Iri> = live.into_iter().collect();
        self.base = snapshot.into_iter().collect();
        self.cutoff_order = self.last_order;
        if self.truncate_on_rebase {
            let cutoff = self.cutoff_order;
            self.log.retain(|e| e.order > cutoff);
        }
    }

    /// Events newer than the cutoff, oldest first.
    pub fn events_after_cutoff(&self) -> &[ChangeEvent] {
        let idx = self.log.partition_point(|e| e.order <= self.cutoff_order);
        &self.log[idx..]
    }

    /// The live set implied by Base plus post-cutoff events.
    pub fn live_set(&self) -> BTreeSet<Iri> {
        super::replay(self.base.iter().cloned(), self.events_after_cutoff())
    }
}

fn page_of<T>(items: &[T], n: usize, page_size: usize) -> (&[T], Option<usize>) {
    let start = n.saturating_mul(page_size);
    if start >= items.len() {
        return (&[], None);
    }
    let end = (start + page_size).min(items.len());
    (&items[start..end], (end < items.len()).then_some(n + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(i: usize) -> Iri {
        Iri::new(format!("http://ex/r{i}")).unwrap()
    }

    #[test]
    fn fresh_server_is_empty() {
        let trs = TrackedResourceSet::default();
        let d = trs.descriptor();
        assert_eq!((d.cutoff_order, d.base_members, d.retained_events), (0, 0, 0));
        assert!(trs.base_page(0).members.is_empty());
        assert_eq!(trs.base_page(0).next, None);
        assert!(trs.changelog_page(0).events.is_empty());
    }

    #[test]
    fn orders_start_at_one_and_serve_newest_first() {
        let mut trs = TrackedResourceSet::default();
        assert_eq!(trs.record_change(iri(1), ChangeKind::Creation, 10).order, 1);
        trs.record_change(iri(2), ChangeKind::Creation, 11);
        trs.record_change(iri(1), ChangeKind::Modification, 12);
        let orders: Vec<u64> = trs.changelog_page(0).events.iter().map(|e| e.order).collect();
        assert_eq!(orders, vec![3, 2, 1]);
    }

    #[test]
    fn pages_of_two_over_five_members() {
        let mut trs = TrackedResourceSet::new(2);
        for i in 0..5 {
            trs.record_change(iri(i), ChangeKind::Creation, 0);
        }
        trs.rebase((0..5).map(iri));
        let sizes: Vec<usize> = (0..3).map(|n| trs.base_page(n).members.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert_eq!(trs.base_page(0).next, Some(1));
        assert_eq!(trs.base_page(2).next, None);
        assert_eq!(trs.base_page_count(), 3);
    }

    #[test]
    fn out_of_range_page_is_empty_with_end_marker() {
        let mut trs = TrackedResourceSet::new(2);
        trs.record_change(iri(1), ChangeKind::Creation, 0);
        let page = trs.changelog_page(999);
        assert!(page.events.is_empty());
        assert_eq!(page.next, None);
        let page = trs.base_page(999);
        assert!(page.members.is_empty());
        assert_eq!(page.next, None);
    }

    #[test]
    fn rebase_then_delete() {
        let mut trs = TrackedResourceSet::default();
        for i in 1..=3 {
            trs.record_change(iri(i), ChangeKind::Creation, 0);
        }
        trs.rebase((1..=3).map(iri));
        trs.record_change(iri(2), ChangeKind::Deletion, 0);

        assert_eq!(trs.base(), &[iri(1), iri(2), iri(3)]);
        assert_eq!(trs.cutoff_order(), 3);
        let log = trs.changelog_page(0).events;
        assert_eq!(log.len(), 1);
        assert_eq!((log[0].order, log[0].kind), (4, ChangeKind::Deletion));
        assert_eq!(trs.live_set(), [iri(1), iri(3)].into_iter().collect());
    }

    #[test]
    fn rebase_is_idempotent_without_new_events() {
        let mut trs = TrackedResourceSet::default();
        trs.record_change(iri(1), ChangeKind::Creation, 0);
        trs.rebase([iri(1)]);
        let once = trs.clone();
        trs.rebase([iri(1)]);
        assert_eq!(trs, once);

        let mut empty = TrackedResourceSet::default();
        empty.rebase([]);
        assert_eq!(empty.cutoff_order(), 0);
        assert!(empty.base().is_empty());
    }

    #[test]
    fn retained_history_survives_rebase() {
        let mut trs = TrackedResourceSet::default().retain_history();
        trs.record_change(iri(1), ChangeKind::Creation, 0);
        trs.rebase([iri(1)]);
        assert_eq!(trs.events().len(), 1);
        assert!(trs.events_after_cutoff().is_empty());
    }
}
