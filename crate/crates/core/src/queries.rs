//! The three canned lifecycle queries, as SPARQL for the warehouse and as
//! hand-written crawl plans that answer them straight from the tool
//! services.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::client::{FetchError, TrsSource};
use crate::rdf::vocab::RDF_TYPE;
use crate::rdf::{Graph, Iri, Term};
use crate::sparql::{BindingTable, Variable};
use crate::toolchain::{tc, CHANGES, DESIGN, REQS};
use crate::trs;

const PREFIXES: &str = "PREFIX rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#>\nPREFIX tc: <http://example.org/toolchain#>\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lcq {
    /// Simulink blocks not linked to any requirement.
    Lcq1,
    /// Change requests, other than `cr`, tracking a requirement that refines
    /// or is refined by `req`.
    Lcq2 { cr: Iri, req: Iri },
    /// Blocks and requirements no change request tracks.
    Lcq3,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LcqError {
    #[error("unknown query {0:?} (expected lcq1, lcq2 or lcq3)")]
    UnknownQuery(String),
    #[error("lcq2 needs a change request and a requirement IRI")]
    MissingParameters,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

impl Lcq {
    pub fn parse(name: &str, cr: Option<&str>, req: Option<&str>) -> Result<Self, LcqError> {
        match name.to_ascii_lowercase().as_str() {
            "lcq1" => Ok(Lcq::Lcq1),
            "lcq3" => Ok(Lcq::Lcq3),
            "lcq2" => {
                let (Some(cr), Some(req)) = (cr, req) else {
                    return Err(LcqError::MissingParameters);
                };
                let iri = |s: &str| Iri::new(s).map_err(|e| LcqError::BadParameter(e.to_string()));
                Ok(Lcq::Lcq2 { cr: iri(cr)?, req: iri(req)? })
            }
            other => Err(LcqError::UnknownQuery(other.to_owned())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Lcq::Lcq1 => "lcq1",
            Lcq::Lcq2 { .. } => "lcq2",
            Lcq::Lcq3 => "lcq3",
        }
    }

    pub fn result_variable(&self) -> &'static str {
        match self {
            Lcq::Lcq1 => "b",
            Lcq::Lcq2 { .. } => "cr",
            Lcq::Lcq3 => "m",
        }
    }

    pub fn sparql(&self) -> String {
        let body = match self {
            Lcq::Lcq1 => "SELECT ?b WHERE { ?b rdf:type tc:SimulinkBlock . FILTER NOT EXISTS { ?b tc:satisfies ?r } }".to_owned(),
            Lcq::Lcq2 { cr, req } => format!(
                "SELECT ?cr WHERE {{ {{ ?rx tc:refines <{req}> . ?cr tc:tracks ?rx }} UNION {{ <{req}> tc:refines ?ry . ?cr tc:tracks ?ry }} FILTER(?cr != <{cr}>) }}"
            ),
            Lcq::Lcq3 => "SELECT ?m WHERE { { ?m rdf:type tc:SimulinkBlock } UNION { ?m rdf:type tc:Requirement } FILTER NOT EXISTS { ?cr tc:tracks ?m } FILTER NOT EXISTS { ?m tc:satisfies ?r . ?cr2 tc:tracks ?r } }".to_owned(),
        };
        format!("{PREFIXES}{body}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DirectError {
    #[error("no source configured for service {0:?}")]
    MissingService(String),
    #[error("service {server}: {source}")]
    Fetch {
        server: String,
        #[source]
        source: FetchError,
    },
}

/// Answers lifecycle queries by crawling the services for every query, with
/// no materialized store. Every request is counted.
pub struct DirectQuery {
    sources: BTreeMap<String, Arc<dyn TrsSource>>,
    resource_gets: AtomicU64,
    page_gets: AtomicU64,
}

impl DirectQuery {
    pub fn new(sources: BTreeMap<String, Arc<dyn TrsSource>>) -> Self {
        DirectQuery {
            sources,
            resource_gets: AtomicU64::new(0),
            page_gets: AtomicU64::new(0),
        }
    }

    pub fn resource_gets(&self) -> u64 {
        self.resource_gets.load(Ordering::Relaxed)
    }

    pub fn page_gets(&self) -> u64 {
        self.page_gets.load(Ordering::Relaxed)
    }

    fn source(&self, server: &str) -> Result<&Arc<dyn TrsSource>, DirectError> {
        self.sources
            .get(server)
            .ok_or_else(|| DirectError::MissingService(server.to_owned()))
    }

    fn fail(server: &str) -> impl Fn(FetchError) -> DirectError + '_ {
        move |source| DirectError::Fetch {
            server: server.to_owned(),
            source,
        }
    }

    /// Live members of a service: its Base plus the events after the cutoff.
    pub fn members(&self, server: &str) -> Result<BTreeSet<Iri>, DirectError> {
        let source = self.source(server)?;
        let mut base = Vec::new();
        let mut cutoff = 0;
        let mut page = Some(0);
        while let Some(n) = page {
            self.page_gets.fetch_add(1, Ordering::Relaxed);
            let p = source.base_page(n).map_err(Self::fail(server))?;
            cutoff = p.cutoff_order;
            base.extend(p.members);
            page = p.next;
        }
        let mut newer = Vec::new();
        let mut page = Some(0);
        'pages: while let Some(n) = page {
            self.page_gets.fetch_add(1, Ordering::Relaxed);
            let p = source.changelog_page(n).map_err(Self::fail(server))?;
            for event in p.events {
                if event.order <= cutoff {
                    break 'pages;
                }
                newer.push(event);
            }
            page = p.next;
        }
        newer.reverse();
        Ok(trs::replay(base, &newer))
    }

    fn get(&self, server: &str, uri: &Iri) -> Result<Option<Graph>, DirectError> {
        self.resource_gets.fetch_add(1, Ordering::Relaxed);
        self.source(server)?.fetch(uri).map_err(Self::fail(server))
    }

    /// Fetches every live member of `server`; members gone by the time of
    /// the GET are left out.
    fn crawl(&self, server: &str) -> Result<Vec<(Iri, Graph)>, DirectError> {
        let mut out = Vec::new();
        for uri in self.members(server)? {
            if let Some(g) = self.get(server, &uri)? {
                out.push((uri, g));
            }
        }
        Ok(out)
    }

    pub fn run(&self, query: &Lcq) -> Result<BindingTable, DirectError> {
        let rows: Vec<Iri> = match query {
            Lcq::Lcq1 => self
                .crawl(DESIGN)?
                .into_iter()
                .filter(|(uri, g)| has_type(g, uri, tc::SIMULINK_BLOCK) && objects(g, uri, tc::SATISFIES).is_empty())
                .map(|(uri, _)| uri)
                .collect(),
            Lcq::Lcq2 { cr, req } => {
                let refined_by_req = match self.get(REQS, req)? {
                    Some(g) => objects(&g, req, tc::REFINES),
                    None => Vec::new(),
                };
                let refining_req: Vec<Iri> = self
                    .crawl(REQS)?
                    .into_iter()
                    .flat_map(|(uri, g)| {
                        let hits = objects(&g, &uri, tc::REFINES).iter().filter(|t| *t == req).count();
                        std::iter::repeat_n(uri, hits)
                    })
                    .collect();
                let mut rows = Vec::new();
                for (uri, g) in self.crawl(CHANGES)? {
                    if uri == *cr {
                        continue;
                    }
                    let tracked: BTreeSet<Iri> = objects(&g, &uri, tc::TRACKS).into_iter().collect();
                    // One row per matching binding of each UNION branch.
                    let n = refining_req.iter().filter(|r| tracked.contains(*r)).count()
                        + refined_by_req.iter().filter(|r| tracked.contains(*r)).count();
                    rows.extend(std::iter::repeat_n(uri, n));
                }
                rows
            }
            Lcq::Lcq3 => {
                let design = self.crawl(DESIGN)?;
                let reqs = self.crawl(REQS)?;
                let tracked: BTreeSet<Iri> = self
                    .crawl(CHANGES)?
                    .iter()
                    .flat_map(|(uri, g)| objects(g, uri, tc::TRACKS))
                    .collect();
                let mut models = Vec::new();
                for (uri, g) in design.iter().chain(&reqs) {
                    if tracked.contains(uri) {
                        continue;
                    }
                    // A block also counts as tracked through any requirement it satisfies.
                    if objects(g, uri, tc::SATISFIES).iter().any(|r| tracked.contains(r)) {
                        continue;
                    }
                    for ty in [tc::SIMULINK_BLOCK, tc::REQUIREMENT] {
                        if has_type(g, uri, ty) {
                            models.push(uri.clone());
                        }
                    }
                }
                models
            }
        };
        Ok(BindingTable::new(
            vec![Variable::new(query.result_variable())],
            rows.into_iter().map(|u| vec![Some(Term::Iri(u))]).collect(),
            false,
        ))
    }
}

fn objects(g: &Graph, subject: &Iri, predicate: &str) -> Vec<Iri> {
    g.with_subject(subject)
        .filter(|t| t.predicate.as_str() == predicate)
        .filter_map(|t| t.object.as_iri().cloned())
        .collect()
}

fn has_type(g: &Graph, subject: &Iri, ty: &str) -> bool {
    g.with_subject(subject)
        .any(|t| t.predicate.as_str() == RDF_TYPE && t.object.as_iri().is_some_and(|o| o.as_str() == ty))
}

impl std::fmt::Debug for DirectQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectQuery")
            .field("services", &self.sources.keys().collect::<Vec<_>>())
            .field("resource_gets", &self.resource_gets())
            .finish()
    }
}
