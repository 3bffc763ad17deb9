use std::collections::btree_map;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Iri, Triple};

/// A set of triples. Inserting a duplicate is a no-op.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Graph {
    triples: BTreeSet<Triple>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if the triple was not already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn remove(&mut self, triple: &Triple) -> bool {
        self.triples.remove(triple)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.triples.iter()
    }

    /// Triples whose subject is `subject`, in canonical order.
    pub fn with_subject<'a>(&'a self, subject: &'a Iri) -> impl Iterator<Item = &'a Triple> + 'a {
        self.triples
            .iter()
            .skip_while(move |t| &t.subject < subject)
            .take_while(move |t| &t.subject == subject)
    }
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.triples.iter()).finish()
    }
}

impl FromIterator<Triple> for Graph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        Graph {
            triples: iter.into_iter().collect(),
        }
    }
}

impl Extend<Triple> for Graph {
    fn extend<I: IntoIterator<Item = Triple>>(&mut self, iter: I) {
        self.triples.extend(iter)
    }
}

impl IntoIterator for Graph {
    type Item = Triple;
    type IntoIter = std::collections::btree_set::IntoIter<Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.into_iter()
    }
}

impl<'a> IntoIterator for &'a Graph {
    type Item = &'a Triple;
    type IntoIter = std::collections::btree_set::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

/// Named graphs keyed by graph IRI.
///
/// Graphs are held behind `Arc` so that cloning a dataset (to publish a new
/// read snapshot) costs one pointer copy per graph.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    graphs: BTreeMap<Iri, Arc<Graph>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces whatever is stored under `name` with exactly `graph`.
    pub fn upsert_graph(&mut self, name: Iri, graph: impl Into<Arc<Graph>>) {
        self.graphs.insert(name, graph.into());
    }

    /// Removes the named graph. Removing an absent graph is a no-op.
    pub fn delete_graph(&mut self, name: &Iri) -> Option<Arc<Graph>> {
        self.graphs.remove(name)
    }

    pub fn graph(&self, name: &Iri) -> Option<&Graph> {
        self.graphs.get(name).map(Arc::as_ref)
    }

    pub fn contains_graph(&self, name: &Iri) -> bool {
        self.graphs.contains_key(name)
    }

    pub fn graph_names(&self) -> impl Iterator<Item = &Iri> + '_ {
        self.graphs.keys()
    }

    pub fn graphs(&self) -> btree_map::Iter<'_, Iri, Arc<Graph>> {
        self.graphs.iter()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// The union-default view: every triple present in at least one named graph.
    pub fn union_graph(&self) -> Graph {
        self.graphs
            .values()
            .flat_map(|g| g.iter().cloned())
            .collect()
    }

    pub fn union_contains(&self, triple: &Triple) -> bool {
        self.graphs.values().any(|g| g.contains(triple))
    }

    /// Total number of quads (a triple counted once per graph holding it).
    pub fn quad_count(&self) -> usize {
        self.graphs.values().map(|g| g.len()).sum()
    }
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.graphs.iter()).finish()
    }
}
