//! Oracles and fixtures shared by the integration tests. The oracles are
//! deliberately naive and never call into the code they check.

#![allow(dead_code)]

pub mod broker;
pub mod golden;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use lcq::clock::ManualClock;
use lcq::rdf::{Dataset, Graph, Iri, Literal, Term, Triple};
use lcq::trs::{ChangeKind, TrsServer, TrsServerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn iri(s: &str) -> Iri {
    Iri::new(s).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- history

/// One mutation at a TRS server.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryOp {
    Put(usize, u32),
    Remove(usize),
    Rebase,
}

pub fn resource(i: usize) -> Iri {
    iri(&format!("http://h.example.org/resources/r{i}"))
}

/// Body of resource `i` at version `v`.
pub fn body(i: usize, v: u32) -> Graph {
    let mut g = Graph::new();
    g.insert(Triple::new(resource(i), iri("http://example.org/p#version"), Literal::plain(v.to_string())));
    if v % 3 == 0 {
        g.insert(Triple::new(resource(i), iri("http://example.org/p#link"), resource((i + 1) % 7)));
    }
    g
}

/// A random valid history: puts and removes over `resources` ids, with
/// occasional rebases when `rebases` is set.
pub fn random_history(seed: u64, len: usize, resources: usize, rebases: bool) -> Vec<HistoryOp> {
    let mut r = rng(seed);
    let mut live = BTreeSet::new();
    let mut ops = Vec::with_capacity(len);
    for _ in 0..len {
        if rebases && r.random_bool(0.08) {
            ops.push(HistoryOp::Rebase);
            continue;
        }
        let i = r.random_range(0..resources);
        if live.contains(&i) && r.random_bool(0.35) {
            live.remove(&i);
            ops.push(HistoryOp::Remove(i));
        } else {
            live.insert(i);
            ops.push(HistoryOp::Put(i, r.random_range(0..1000)));
        }
    }
    ops
}

pub fn play(server: &TrsServer, ops: &[HistoryOp]) {
    for op in ops {
        match op {
            HistoryOp::Put(i, v) => {
                server.put(resource(*i), body(*i, *v));
            }
            HistoryOp::Remove(i) => {
                server.remove(&resource(*i));
            }
            HistoryOp::Rebase => server.rebase(),
        }
    }
}

/// Live resources and bodies after folding `ops` from genesis.
pub fn fold_history(ops: &[HistoryOp]) -> BTreeMap<Iri, Graph> {
    let mut live = BTreeMap::new();
    for op in ops {
        match op {
            HistoryOp::Put(i, v) => {
                live.insert(resource(*i), body(*i, *v));
            }
            HistoryOp::Remove(i) => {
                live.remove(&resource(*i));
            }
            HistoryOp::Rebase => {}
        }
    }
    live
}

pub fn dataset_of(live: &BTreeMap<Iri, Graph>) -> Dataset {
    let mut ds = Dataset::new();
    for (u, g) in live {
        ds.upsert_graph(u.clone(), g.clone());
    }
    ds
}

pub fn history_server(config: TrsServerConfig) -> Arc<TrsServer> {
    Arc::new(TrsServer::new(
        "h",
        "http://h.example.org/resources/",
        config,
        Arc::new(ManualClock::new(1_700_000_000_000)),
    ))
}

pub fn kind_of(op: &HistoryOp, was_live: bool) -> Option<ChangeKind> {
    match op {
        HistoryOp::Put(..) if was_live => Some(ChangeKind::Modification),
        HistoryOp::Put(..) => Some(ChangeKind::Creation),
        HistoryOp::Remove(_) => Some(ChangeKind::Deletion),
        HistoryOp::Rebase => None,
    }
}

// ---------------------------------------------------------------- SPARQL

/// Query element used by the generator and the brute-force oracle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum QTerm {
    Var(u8),
    Const(Term),
}

pub type QPattern = [QTerm; 3];

#[derive(Debug, Clone)]
pub enum QFilter {
    Eq(u8, QTerm),
    Ne(u8, QTerm),
}

#[derive(Debug, Clone)]
pub struct QuerySpec {
    /// One BGP, or two when the query is a UNION of groups.
    pub branches: Vec<Vec<QPattern>>,
    pub not_exists: Option<Vec<QPattern>>,
    pub filter: Option<QFilter>,
    pub projection: Vec<u8>,
    pub distinct: bool,
}

fn render_term(t: &QTerm) -> String {
    match t {
        QTerm::Var(v) => format!("?v{v}"),
        QTerm::Const(Term::Iri(i)) => format!("<{}>", i.as_str()),
        QTerm::Const(Term::Literal(l)) => format!("\"{}\"", l.lexical()),
    }
}

fn render_bgp(ps: &[QPattern]) -> String {
    ps.iter()
        .map(|p| p.iter().map(render_term).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(" . ")
}

impl QuerySpec {
    pub fn to_sparql(&self) -> String {
        let mut body = if self.branches.len() == 1 {
            render_bgp(&self.branches[0])
        } else {
            self.branches
                .iter()
                .map(|b| format!("{{ {} }}", render_bgp(b)))
                .collect::<Vec<_>>()
                .join(" UNION ")
        };
        if let Some(ne) = &self.not_exists {
            body.push_str(&format!(" FILTER NOT EXISTS {{ {} }}", render_bgp(ne)));
        }
        match &self.filter {
            Some(QFilter::Eq(v, t)) => body.push_str(&format!(" FILTER(?v{v} = {})", render_term(t))),
            Some(QFilter::Ne(v, t)) => body.push_str(&format!(" FILTER(?v{v} != {})", render_term(t))),
            None => {}
        }
        let vars = self.projection.iter().map(|v| format!("?v{v}")).collect::<Vec<_>>().join(" ");
        let distinct = if self.distinct { "DISTINCT " } else { "" };
        format!("SELECT {distinct}{vars} WHERE {{ {body} }}")
    }
}

fn vars_of(ps: &[QPattern]) -> BTreeSet<u8> {
    ps.iter()
        .flatten()
        .filter_map(|t| match t {
            QTerm::Var(v) => Some(*v),
            QTerm::Const(_) => None,
        })
        .collect()
}

type Assignment = BTreeMap<u8, Term>;

fn subst(t: &QTerm, a: &Assignment) -> Option<Term> {
    match t {
        QTerm::Var(v) => a.get(v).cloned(),
        QTerm::Const(c) => Some(c.clone()),
    }
}

fn holds(p: &QPattern, a: &Assignment, triples: &BTreeSet<(Term, Term, Term)>) -> bool {
    match (subst(&p[0], a), subst(&p[1], a), subst(&p[2], a)) {
        (Some(s), Some(pr), Some(o)) => triples.contains(&(s, pr, o)),
        _ => false,
    }
}

/// Every total assignment of `vars` over `domain`, extending `base`.
fn assignments(vars: &[u8], domain: &[Term], base: &Assignment) -> Vec<Assignment> {
    let mut out = vec![base.clone()];
    for v in vars {
        let mut next = Vec::new();
        for a in &out {
            for t in domain {
                let mut b = a.clone();
                b.insert(*v, t.clone());
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// Brute force: enumerate assignments over the active domain, keep those
/// whose instantiated patterns all occur in the union graph.
pub fn oracle_rows(spec: &QuerySpec, dataset: &Dataset) -> Vec<Vec<Option<Term>>> {
    let triples: BTreeSet<(Term, Term, Term)> = dataset
        .union_graph()
        .iter()
        .map(|t| (Term::Iri(t.subject.clone()), Term::Iri(t.predicate.clone()), t.object.clone()))
        .collect();
    let mut domain: BTreeSet<Term> = triples.iter().flat_map(|(s, p, o)| [s.clone(), p.clone(), o.clone()]).collect();
    let all_patterns = spec.branches.iter().flatten().chain(spec.not_exists.iter().flatten());
    for t in all_patterns.flatten() {
        if let QTerm::Const(c) = t {
            domain.insert(c.clone());
        }
    }
    let domain: Vec<Term> = domain.into_iter().collect();

    let mut solutions: Vec<Assignment> = Vec::new();
    for branch in &spec.branches {
        let vars: Vec<u8> = vars_of(branch).into_iter().collect();
        for a in assignments(&vars, &domain, &Assignment::new()) {
            if branch.iter().all(|p| holds(p, &a, &triples)) {
                solutions.push(a);
            }
        }
    }
    if let Some(ne) = &spec.not_exists {
        solutions.retain(|a| {
            let free: Vec<u8> = vars_of(ne).into_iter().filter(|v| !a.contains_key(v)).collect();
            !assignments(&free, &domain, a).iter().any(|b| ne.iter().all(|p| holds(p, b, &triples)))
        });
    }
    if let Some(f) = &spec.filter {
        solutions.retain(|a| {
            let (v, t, want_eq) = match f {
                QFilter::Eq(v, t) => (v, t, true),
                QFilter::Ne(v, t) => (v, t, false),
            };
            match (a.get(v), subst(t, a)) {
                (Some(x), Some(y)) => (x == &y) == want_eq,
                _ => false,
            }
        });
    }
    let mut rows: Vec<Vec<Option<Term>>> = solutions
        .iter()
        .map(|a| spec.projection.iter().map(|v| a.get(v).cloned()).collect())
        .collect();
    if spec.distinct {
        let set: BTreeSet<_> = rows.into_iter().collect();
        rows = set.into_iter().collect();
    }
    rows.sort();
    rows
}

/// Small vocabulary so random patterns hit random data often.
pub fn vocab() -> (Vec<Term>, Vec<Term>, Vec<Term>) {
    let subjects = (0..4).map(|i| Term::Iri(iri(&format!("http://d.example.org/s{i}")))).collect::<Vec<_>>();
    let predicates = (0..3).map(|i| Term::Iri(iri(&format!("http://d.example.org/p{i}")))).collect();
    let mut objects = subjects.clone();
    objects.push(Term::Literal(Literal::plain("a")));
    objects.push(Term::Literal(Literal::plain("b")));
    (subjects, predicates, objects)
}

pub fn random_dataset(r: &mut ChaCha8Rng, max_triples: usize) -> Dataset {
    let (s, p, o) = vocab();
    let mut ds = Dataset::new();
    let n = r.random_range(0..=max_triples);
    let mut graphs: BTreeMap<usize, Graph> = BTreeMap::new();
    for _ in 0..n {
        let subj = match &s[r.random_range(0..s.len())] {
            Term::Iri(i) => i.clone(),
            Term::Literal(_) => unreachable!(),
        };
        let pred = match &p[r.random_range(0..p.len())] {
            Term::Iri(i) => i.clone(),
            Term::Literal(_) => unreachable!(),
        };
        let obj = o[r.random_range(0..o.len())].clone();
        graphs.entry(r.random_range(0..3)).or_default().insert(Triple::new(subj, pred, obj));
    }
    for (g, graph) in graphs {
        ds.upsert_graph(iri(&format!("http://d.example.org/g{g}")), graph);
    }
    ds
}

fn random_pattern(r: &mut ChaCha8Rng, nvars: u8) -> QPattern {
    let (s, p, o) = vocab();
    let mut pick = |pool: &[Term], var_p: f64| {
        if r.random_bool(var_p) {
            QTerm::Var(r.random_range(0..nvars))
        } else {
            QTerm::Const(pool[r.random_range(0..pool.len())].clone())
        }
    };
    [pick(&s, 0.7), pick(&p, 0.25), pick(&o, 0.6)]
}

pub fn random_query(r: &mut ChaCha8Rng) -> QuerySpec {
    let nvars = 3;
    let nbranches = if r.random_bool(0.3) { 2 } else { 1 };
    let mut branches: Vec<Vec<QPattern>> = (0..nbranches)
        .map(|_| (0..r.random_range(1..=3)).map(|_| random_pattern(r, nvars)).collect())
        .collect();
    // Projected variables must occur in the pattern.
    if vars_of(&branches.concat()).is_empty() {
        branches[0][0][0] = QTerm::Var(0);
    }
    let bound: BTreeSet<u8> = branches.iter().flat_map(|b| vars_of(b)).collect();
    let not_exists = r
        .random_bool(0.3)
        .then(|| (0..r.random_range(1..=2)).map(|_| random_pattern(r, nvars + 1)).collect());
    let (_, _, objects) = vocab();
    let filter = if !bound.is_empty() && r.random_bool(0.3) {
        let bound: Vec<u8> = bound.iter().copied().collect();
        let v = bound[r.random_range(0..bound.len())];
        let rhs = if r.random_bool(0.5) {
            QTerm::Var(bound[r.random_range(0..bound.len())])
        } else {
            QTerm::Const(objects[r.random_range(0..objects.len())].clone())
        };
        Some(if r.random_bool(0.5) { QFilter::Eq(v, rhs) } else { QFilter::Ne(v, rhs) })
    } else {
        None
    };
    let mut projection: Vec<u8> = bound.iter().copied().filter(|_| r.random_bool(0.7)).collect();
    if projection.is_empty() {
        projection = bound.iter().copied().take(1).collect();
    }
    QuerySpec {
        branches,
        not_exists,
        filter,
        projection,
        distinct: r.random_bool(0.3),
    }
}

// ---------------------------------------------------------------- TRS reads

/// All base members and the cutoff, read page by page.
pub fn read_base(source: &dyn lcq::client::TrsSource) -> (Vec<Iri>, u64) {
    let mut members = Vec::new();
    let mut page = Some(0);
    let mut cutoff = 0;
    while let Some(n) = page {
        let p = source.base_page(n).unwrap();
        cutoff = p.cutoff_order;
        members.extend(p.members);
        page = p.next;
    }
    (members, cutoff)
}

/// Every retained change-log event, oldest first.
pub fn read_log(source: &dyn lcq::client::TrsSource) -> Vec<lcq::trs::ChangeEvent> {
    let mut events = Vec::new();
    let mut page = Some(0);
    while let Some(n) = page {
        let p = source.changelog_page(n).unwrap();
        events.extend(p.events);
        page = p.next;
    }
    events.reverse();
    events
}

// ---------------------------------------------------------------- compaction

pub struct CompactionCase {
    pub window_len: usize,
    pub compacted: Dataset,
    pub raw: Dataset,
    pub expected: Dataset,
    pub compacted_gets: u64,
    pub raw_gets: u64,
}

/// Plays a random history, syncs two warehouses part way, then applies the
/// remaining window compacted to one and event by event to the other.
pub fn compaction_case(seed: u64, max_events: usize, max_resources: usize) -> CompactionCase {
    use lcq::client::{LocalSource, TrsClient};
    use lcq::warehouse::Warehouse;

    let mut r = rng(seed);
    let resources = r.random_range(1..=max_resources);
    let prefix_len = r.random_range(0..=20);
    let window_len = r.random_range(0..=max_events);
    let ops = random_history(seed ^ 0x5eed, prefix_len + window_len, resources, false);
    let server = history_server(TrsServerConfig::default());
    play(&server, &ops[..prefix_len]);

    let clock = Arc::new(ManualClock::new(1_700_000_000_000));
    let make = || {
        let wh = Arc::new(Warehouse::new(clock.clone()));
        let mut c = TrsClient::new(Arc::new(LocalSource::new(server.clone())), wh.clone(), "local");
        c.initial_sync().unwrap();
        (wh, c)
    };
    let (wh_c, mut client_c) = make();
    let (wh_r, mut client_r) = make();
    let gets = |wh: &Warehouse| wh.metrics_snapshot().stats.total_http_gets;
    let (base_c, base_r) = (gets(&wh_c), gets(&wh_r));

    play(&server, &ops[prefix_len..]);
    let window = client_c.poll_once().unwrap();
    assert_eq!(window.len(), window_len);
    client_c.apply_events(&window).unwrap();
    for e in &window {
        client_r.apply_events(std::slice::from_ref(e)).unwrap();
    }
    CompactionCase {
        window_len,
        compacted: wh_c.dataset(),
        raw: wh_r.dataset(),
        expected: dataset_of(&fold_history(&ops)),
        compacted_gets: gets(&wh_c) - base_c,
        raw_gets: gets(&wh_r) - base_r,
    }
}
