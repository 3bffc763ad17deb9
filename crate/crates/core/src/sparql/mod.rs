//! A small SPARQL `SELECT` engine.
//!
//! The accepted language is basic graph patterns, `UNION` between braced
//! groups, nested groups, `FILTER NOT EXISTS { … }` and `FILTER(a = b)` /
//! `FILTER(a != b)`. Anything else (OPTIONAL, SERVICE, property paths,
//! solution modifiers, …) is rejected with [`QueryError::Unsupported`].
//! Queries run over the union of all named graphs in a [`Dataset`].

mod eval;
mod parser;
mod results;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::rdf::{Dataset, Iri, Term};

pub use eval::{evaluate, evaluate_graph, evaluate_index, match_bgp, GraphIndex, Solution};
pub use parser::parse_query;
pub use results::BindingTable;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(Arc<str>);

impl Variable {
    pub fn new(name: impl AsRef<str>) -> Self {
        Variable(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

/// A term position in a pattern: either a variable or a ground term.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermPattern {
    Var(Variable),
    Term(Term),
}

impl TermPattern {
    pub fn var(name: &str) -> Self {
        TermPattern::Var(Variable::new(name))
    }

    pub fn as_var(&self) -> Option<&Variable> {
        match self {
            TermPattern::Var(v) => Some(v),
            TermPattern::Term(_) => None,
        }
    }
}

impl fmt::Debug for TermPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermPattern::Var(v) => v.fmt(f),
            TermPattern::Term(t) => t.fmt(f),
        }
    }
}

impl From<Variable> for TermPattern {
    fn from(v: Variable) -> Self {
        TermPattern::Var(v)
    }
}

impl From<Term> for TermPattern {
    fn from(t: Term) -> Self {
        TermPattern::Term(t)
    }
}

impl From<Iri> for TermPattern {
    fn from(iri: Iri) -> Self {
        TermPattern::Term(Term::Iri(iri))
    }
}

/// Subject and predicate are never literals; the parser enforces this.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: TermPattern,
    pub predicate: TermPattern,
    pub object: TermPattern,
}

impl TriplePattern {
    pub fn new(
        subject: impl Into<TermPattern>,
        predicate: impl Into<TermPattern>,
        object: impl Into<TermPattern>,
    ) -> Self {
        TriplePattern {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    pub fn positions(&self) -> [&TermPattern; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> + '_ {
        self.positions().into_iter().filter_map(TermPattern::as_var)
    }
}

impl fmt::Debug for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} {:?} {:?}",
            self.subject, self.predicate, self.object
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub lhs: TermPattern,
    pub op: CompareOp,
    pub rhs: TermPattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternElement {
    Triple(TriplePattern),
    Union(GroupPattern, GroupPattern),
    /// A nested `{ … }` group that is not part of a `UNION`.
    Group(GroupPattern),
    NotExists(GroupPattern),
    Compare(Comparison),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct GroupPattern {
    pub elements: Vec<PatternElement>,
}

impl GroupPattern {
    pub fn new(elements: Vec<PatternElement>) -> Self {
        GroupPattern { elements }
    }

    /// Variables that a solution of this group may bind, in order of first
    /// appearance. Filter-only variables are not in scope.
    pub fn in_scope_variables(&self) -> Vec<Variable> {
        let mut out = Vec::new();
        self.collect_in_scope(&mut out);
        out
    }

    fn collect_in_scope(&self, out: &mut Vec<Variable>) {
        for element in &self.elements {
            match element {
                PatternElement::Triple(tp) => {
                    for v in tp.variables() {
                        if !out.contains(v) {
                            out.push(v.clone());
                        }
                    }
                }
                PatternElement::Union(left, right) => {
                    left.collect_in_scope(out);
                    right.collect_in_scope(out);
                }
                PatternElement::Group(inner) => inner.collect_in_scope(out),
                PatternElement::NotExists(_) | PatternElement::Compare(_) => {}
            }
        }
    }

    /// Every variable mentioned anywhere in the group, filters included.
    pub fn mentioned_variables(&self) -> Vec<Variable> {
        let mut out = Vec::new();
        self.collect_mentioned(&mut out);
        out
    }

    fn collect_mentioned(&self, out: &mut Vec<Variable>) {
        fn push(out: &mut Vec<Variable>, v: &Variable) {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        for element in &self.elements {
            match element {
                PatternElement::Triple(tp) => tp.variables().for_each(|v| push(out, v)),
                PatternElement::Compare(c) => {
                    for v in [&c.lhs, &c.rhs].into_iter().filter_map(TermPattern::as_var) {
                        push(out, v);
                    }
                }
                PatternElement::Union(l, r) => {
                    l.collect_mentioned(out);
                    r.collect_mentioned(out);
                }
                PatternElement::Group(g) | PatternElement::NotExists(g) => g.collect_mentioned(out),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    All,
    Vars(Vec<Variable>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub prefixes: BTreeMap<String, Iri>,
    pub projection: Projection,
    pub distinct: bool,
    pub pattern: GroupPattern,
}

impl Query {
    /// Output columns: the projected variables, or every in-scope variable
    /// for `SELECT *`.
    pub fn columns(&self) -> Vec<Variable> {
        match &self.projection {
            Projection::All => self.pattern.in_scope_variables(),
            Projection::Vars(vars) => vars.clone(),
        }
    }

    pub fn evaluate(&self, dataset: &Dataset) -> BindingTable {
        evaluate(self, dataset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unsupported construct: {construct}")]
    Unsupported { position: usize, construct: String },
}
