use std::collections::{BTreeMap, HashMap};

use super::{
    BindingTable, CompareOp, Comparison, GroupPattern, PatternElement, Query, TermPattern,
    TriplePattern, Variable,
};
use crate::rdf::{Dataset, Graph, Iri, Term, Triple};

/// A solution mapping from variables to ground terms.
pub type Solution = BTreeMap<Variable, Term>;

/// Positional hash indexes over a triple set.
#[derive(Debug, Default)]
pub struct GraphIndex {
    triples: Vec<Triple>,
    by_subject: HashMap<Iri, Vec<usize>>,
    by_predicate: HashMap<Iri, Vec<usize>>,
    by_object: HashMap<Term, Vec<usize>>,
}

impl GraphIndex {
    pub fn new(graph: &Graph) -> Self {
        Self::from_triples(graph.iter().cloned())
    }

    /// Indexes the union-default view of a dataset.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(&dataset.union_graph())
    }

    fn from_triples(triples: impl Iterator<Item = Triple>) -> Self {
        let mut index = GraphIndex::default();
        for (i, triple) in triples.enumerate() {
            index.by_subject.entry(triple.subject.clone()).or_default().push(i);
            index
                .by_predicate
                .entry(triple.predicate.clone())
                .or_default()
                .push(i);
            index.by_object.entry(triple.object.clone()).or_default().push(i);
            index.triples.push(triple);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples that could match `pattern` once `solution` is substituted,
    /// taken from the most selective bound position.
    fn candidates<'a>(
        &'a self,
        pattern: &TriplePattern,
        solution: &Solution,
    ) -> Box<dyn Iterator<Item = &'a Triple> + 'a> {
        let subject = resolve(&pattern.subject, solution);
        let predicate = resolve(&pattern.predicate, solution);
        let object = resolve(&pattern.object, solution);

        let mut best: Option<&Vec<usize>> = None;
        let lists = [
            subject.and_then(|t| t.as_iri().map(|iri| self.by_subject.get(iri))),
            predicate.and_then(|t| t.as_iri().map(|iri| self.by_predicate.get(iri))),
            object.map(|t| self.by_object.get(t)),
        ];
        for list in lists.into_iter().flatten() {
            match list {
                // A bound position with no entry means nothing can match.
                None => return Box::new(std::iter::empty()),
                Some(ids) if best.is_none_or(|b| ids.len() < b.len()) => best = Some(ids),
                Some(_) => {}
            }
        }
        // A literal bound in subject or predicate position matches nothing.
        if subject.is_some_and(|t| t.as_iri().is_none())
            || predicate.is_some_and(|t| t.as_iri().is_none())
        {
            return Box::new(std::iter::empty());
        }
        match best {
            Some(ids) => Box::new(ids.iter().map(move |&i| &self.triples[i])),
            None => Box::new(self.triples.iter()),
        }
    }
}

fn resolve<'a>(pattern: &'a TermPattern, solution: &'a Solution) -> Option<&'a Term> {
    match pattern {
        TermPattern::Term(t) => Some(t),
        TermPattern::Var(v) => solution.get(v),
    }
}

fn bound_positions(pattern: &TriplePattern, solution: &Solution) -> usize {
    pattern
        .positions()
        .into_iter()
        .filter(|p| resolve(p, solution).is_some())
        .count()
}

/// Extends `solution` so that `pattern` matches `triple`, if possible.
fn unify(pattern: &TriplePattern, triple: &Triple, solution: &Solution) -> Option<Solution> {
    let mut out = solution.clone();
    let subject = Term::Iri(triple.subject.clone());
    let predicate = Term::Iri(triple.predicate.clone());
    for (p, value) in [
        (&pattern.subject, &subject),
        (&pattern.predicate, &predicate),
        (&pattern.object, &triple.object),
    ] {
        match p {
            TermPattern::Term(t) if t != value => return None,
            TermPattern::Term(_) => {}
            TermPattern::Var(v) => match out.get(v) {
                Some(bound) if bound != value => return None,
                Some(_) => {}
                None => {
                    out.insert(v.clone(), value.clone());
                }
            },
        }
    }
    Some(out)
}

/// All extensions of `seed` that satisfy every pattern.
///
/// Patterns are matched most-bound-first; the result set does not depend on
/// the order in which `patterns` are given.
pub fn match_bgp(patterns: &[TriplePattern], index: &GraphIndex, seed: &Solution) -> Vec<Solution> {
    let mut out = Vec::new();
    let mut remaining: Vec<&TriplePattern> = patterns.iter().collect();
    match_rec(&mut remaining, index, seed, &mut out);
    out
}

fn match_rec(
    remaining: &mut Vec<&TriplePattern>,
    index: &GraphIndex,
    solution: &Solution,
    out: &mut Vec<Solution>,
) {
    if remaining.is_empty() {
        out.push(solution.clone());
        return;
    }
    let (pick, _) = remaining
        .iter()
        .enumerate()
        .max_by_key(|(i, p)| (bound_positions(p, solution), std::cmp::Reverse(*i)))
        .expect("non-empty");
    let pattern = remaining.remove(pick);
    for triple in index.candidates(pattern, solution) {
        if let Some(extended) = unify(pattern, triple, solution) {
            match_rec(remaining, index, &extended, out);
        }
    }
    remaining.insert(pick, pattern);
}

fn compatible(a: &Solution, b: &Solution) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .all(|(k, v)| large.get(k).is_none_or(|other| other == v))
}

fn join(left: Vec<Solution>, right: &[Solution]) -> Vec<Solution> {
    let mut out = Vec::new();
    for l in &left {
        for r in right {
            if compatible(l, r) {
                let mut merged = l.clone();
                merged.extend(r.iter().map(|(k, v)| (k.clone(), v.clone())));
                out.push(merged);
            }
        }
    }
    out
}

/// Evaluates a group with `seed` substituted for its variables. Every
/// returned solution extends `seed`. Union results are concatenated, so the
/// output is a multiset.
pub(crate) fn eval_group(group: &GroupPattern, index: &GraphIndex, seed: &Solution) -> Vec<Solution> {
    let triples: Vec<TriplePattern> = group
        .elements
        .iter()
        .filter_map(|e| match e {
            PatternElement::Triple(tp) => Some(tp.clone()),
            _ => None,
        })
        .collect();
    let mut rows = match_bgp(&triples, index, seed);

    for element in &group.elements {
        let sub = match element {
            PatternElement::Union(left, right) => {
                let mut sub = eval_group(left, index, seed);
                sub.extend(eval_group(right, index, seed));
                sub
            }
            PatternElement::Group(inner) => eval_group(inner, index, seed),
            _ => continue,
        };
        rows = join(rows, &sub);
        if rows.is_empty() {
            return rows;
        }
    }

    for element in &group.elements {
        match element {
            PatternElement::Compare(cmp) => rows.retain(|row| compare(cmp, row)),
            PatternElement::NotExists(inner) => {
                rows.retain(|row| eval_group(inner, index, row).is_empty())
            }
            _ => {}
        }
    }
    rows
}

fn compare(cmp: &Comparison, row: &Solution) -> bool {
    let (Some(lhs), Some(rhs)) = (resolve(&cmp.lhs, row), resolve(&cmp.rhs, row)) else {
        return false;
    };
    match cmp.op {
        CompareOp::Eq => lhs == rhs,
        CompareOp::Ne => lhs != rhs,
    }
}

/// Runs `query` over the union-default view of `dataset`.
pub fn evaluate(query: &Query, dataset: &Dataset) -> BindingTable {
    evaluate_index(query, &GraphIndex::from_dataset(dataset))
}

/// Runs `query` over a single graph.
pub fn evaluate_graph(query: &Query, graph: &Graph) -> BindingTable {
    evaluate_index(query, &GraphIndex::new(graph))
}

pub fn evaluate_index(query: &Query, index: &GraphIndex) -> BindingTable {
    let solutions = eval_group(&query.pattern, index, &Solution::new());
    BindingTable::from_solutions(query.columns(), &solutions, query.distinct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparql::parse_query;

    fn iri(s: &str) -> Iri {
        Iri::new(s).unwrap()
    }

    fn graph(triples: &[(&str, &str, &str)]) -> Graph {
        triples
            .iter()
            .map(|(s, p, o)| {
                let object = if let Some(lit) = o.strip_prefix('"') {
                    Term::literal(lit)
                } else {
                    Term::Iri(iri(o))
                };
                Triple::new(iri(s), iri(p), object)
            })
            .collect()
    }

    #[test]
    fn zero_patterns_yield_seed() {
        let index = GraphIndex::new(&Graph::new());
        let mut seed = Solution::new();
        seed.insert(Variable::new("x"), Term::literal("v"));
        assert_eq!(match_bgp(&[], &index, &seed), vec![seed]);
    }

    #[test]
    fn ground_pattern_present_or_absent() {
        let g = graph(&[("http://ex/a", "http://ex/p", "http://ex/b")]);
        let index = GraphIndex::new(&g);
        let seed = Solution::new();
        let present = TriplePattern::new(iri("http://ex/a"), iri("http://ex/p"), iri("http://ex/b"));
        let absent = TriplePattern::new(iri("http://ex/a"), iri("http://ex/p"), iri("http://ex/c"));
        assert_eq!(match_bgp(&[present], &index, &seed), vec![seed.clone()]);
        assert!(match_bgp(&[absent], &index, &seed).is_empty());
    }

    #[test]
    fn repeated_variable_within_a_pattern() {
        let g = graph(&[
            ("http://ex/a", "http://ex/p", "http://ex/a"),
            ("http://ex/a", "http://ex/p", "http://ex/b"),
        ]);
        let q = parse_query("SELECT ?x WHERE { ?x <http://ex/p> ?x }").unwrap();
        let table = evaluate_graph(&q, &g);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn single_pattern_literal_match() {
        let g = graph(&[
            ("http://ex/r1", "http://ex/p", "\"A"),
            ("http://ex/r2", "http://ex/p", "\"B"),
        ]);
        let q = parse_query("SELECT ?s WHERE { ?s <http://ex/p> \"A\" }").unwrap();
        let table = evaluate_graph(&q, &g);
        assert_eq!(table.rows(), &[vec![Some(Term::Iri(iri("http://ex/r1")))]]);
    }

    #[test]
    fn empty_dataset() {
        let d = Dataset::new();
        let q = parse_query("SELECT ?s WHERE { ?s ?p ?o }").unwrap();
        assert!(evaluate(&q, &d).is_empty());
        let q = parse_query("SELECT * WHERE { }").unwrap();
        let table = evaluate(&q, &d);
        assert_eq!(table.len(), 1);
        assert!(table.columns().is_empty());
    }

    #[test]
    fn unbound_comparison_drops_row() {
        let g = graph(&[
            ("http://ex/a", "http://ex/p", "http://ex/b"),
            ("http://ex/c", "http://ex/q", "http://ex/d"),
        ]);
        let q = parse_query(
            "SELECT * WHERE { { ?s <http://ex/p> ?o } UNION { ?s <http://ex/q> ?z } FILTER(?o != <http://ex/x>) }",
        )
        .unwrap();
        let table = evaluate_graph(&q, &g);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn union_keeps_duplicates_unless_distinct() {
        let g = graph(&[("http://ex/a", "http://ex/p", "http://ex/b")]);
        let q = parse_query(
            "SELECT ?s WHERE { { ?s <http://ex/p> ?o } UNION { ?s <http://ex/p> ?o } }",
        )
        .unwrap();
        assert_eq!(evaluate_graph(&q, &g).len(), 2);
        let q = parse_query(
            "SELECT DISTINCT ?s WHERE { { ?s <http://ex/p> ?o } UNION { ?s <http://ex/p> ?o } }",
        )
        .unwrap();
        assert_eq!(evaluate_graph(&q, &g).len(), 1);
    }

    #[test]
    fn not_exists_removes_row_when_inner_triple_added() {
        let mut g = graph(&[
            ("http://ex/b1", "http://ex/type", "http://ex/Block"),
            ("http://ex/b2", "http://ex/type", "http://ex/Block"),
        ]);
        let q = parse_query(
            "SELECT ?b WHERE { ?b <http://ex/type> <http://ex/Block> FILTER NOT EXISTS { ?b <http://ex/sat> ?r } }",
        )
        .unwrap();
        assert_eq!(evaluate_graph(&q, &g).len(), 2);
        g.insert(Triple::new(iri("http://ex/b1"), iri("http://ex/sat"), iri("http://ex/r")));
        let table = evaluate_graph(&q, &g);
        assert_eq!(table.rows(), &[vec![Some(Term::Iri(iri("http://ex/b2")))]]);
    }
}
