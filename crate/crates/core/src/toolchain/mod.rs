//! A miniature engineering toolchain: requirements, design blocks and change
//! requests, each hosted by its own TRS server, with links across them.

mod fixture;
mod service;
mod workload;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::rdf::vocab::{DCTERMS_TITLE, RDF_TYPE};
use crate::rdf::{Dataset, Graph, Iri, Literal, Term, Triple};
use crate::trs::{ChangeEvent, TrsServer, TrsServerConfig};

pub use fixture::{seed_canonical, seed_fixture, FixtureSpec, GroundTruth};
pub use service::ToolchainServices;
pub use workload::{
    run_workload, KindWeights, MutationRecord, Op, OpKind, OpWeights, WorkloadError, WorkloadGenerator, WorkloadScript,
};

/// Toolchain vocabulary.
pub mod tc {
    pub const NS: &str = "http://example.org/toolchain#";
    pub const REQUIREMENT: &str = "http://example.org/toolchain#Requirement";
    pub const SIMULINK_BLOCK: &str = "http://example.org/toolchain#SimulinkBlock";
    pub const CHANGE_REQUEST: &str = "http://example.org/toolchain#ChangeRequest";
    pub const SATISFIES: &str = "http://example.org/toolchain#satisfies";
    pub const REFINES: &str = "http://example.org/toolchain#refines";
    pub const TRACKS: &str = "http://example.org/toolchain#tracks";
    pub const STATUS: &str = "http://example.org/toolchain#status";
}

pub const REQS: &str = "reqs";
pub const DESIGN: &str = "design";
pub const CHANGES: &str = "changes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    Requirement,
    SimulinkBlock,
    ChangeRequest,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 3] = [
        ResourceKind::Requirement,
        ResourceKind::SimulinkBlock,
        ResourceKind::ChangeRequest,
    ];

    pub fn type_iri(self) -> &'static str {
        match self {
            ResourceKind::Requirement => tc::REQUIREMENT,
            ResourceKind::SimulinkBlock => tc::SIMULINK_BLOCK,
            ResourceKind::ChangeRequest => tc::CHANGE_REQUEST,
        }
    }

    /// Local id prefix: `R1`, `B1`, `CR1`.
    pub fn id_prefix(self) -> &'static str {
        match self {
            ResourceKind::Requirement => "R",
            ResourceKind::SimulinkBlock => "B",
            ResourceKind::ChangeRequest => "CR",
        }
    }

    pub fn server_id(self) -> &'static str {
        match self {
            ResourceKind::Requirement => REQS,
            ResourceKind::SimulinkBlock => DESIGN,
            ResourceKind::ChangeRequest => CHANGES,
        }
    }
}

/// One tool artefact. Links live on the source resource only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResource {
    pub uri: Iri,
    pub kind: ResourceKind,
    pub title: String,
    pub status: Option<String>,
    /// Block to requirement.
    pub satisfies: Vec<Iri>,
    /// Requirement to requirement.
    pub refines: Vec<Iri>,
    /// Change request to requirement or block.
    pub tracks: Vec<Iri>,
}

impl ToolResource {
    pub fn new(uri: Iri, kind: ResourceKind, title: impl Into<String>) -> Self {
        ToolResource {
            uri,
            kind,
            title: title.into(),
            status: None,
            satisfies: Vec::new(),
            refines: Vec::new(),
            tracks: Vec::new(),
        }
    }

    pub fn to_graph(&self) -> Graph {
        let iri = |s: &str| Iri::new(s).expect("vocabulary IRI");
        let mut g = Graph::new();
        g.insert(Triple::new(self.uri.clone(), iri(RDF_TYPE), Term::Iri(iri(self.kind.type_iri()))));
        g.insert(Triple::new(
            self.uri.clone(),
            iri(DCTERMS_TITLE),
            Term::Literal(Literal::plain(&self.title)),
        ));
        if let Some(status) = &self.status {
            g.insert(Triple::new(self.uri.clone(), iri(tc::STATUS), Term::Literal(Literal::plain(status))));
        }
        for (predicate, targets) in [
            (tc::SATISFIES, &self.satisfies),
            (tc::REFINES, &self.refines),
            (tc::TRACKS, &self.tracks),
        ] {
            for target in targets {
                g.insert(Triple::new(self.uri.clone(), iri(predicate), Term::Iri(target.clone())));
            }
        }
        g
    }
}

/// Resource namespace of a tool service.
pub fn namespace(server_id: &str) -> String {
    format!("http://{server_id}.example.org/resources/")
}

/// IRI of resource `local_id` of `kind`, as the toolchain names it.
pub fn resource_iri(kind: ResourceKind, local_id: &str) -> Result<Iri, crate::rdf::RdfError> {
    Iri::new(format!("{}{local_id}", namespace(kind.server_id())))
}

/// The three tool services.
pub struct Toolchain {
    servers: BTreeMap<&'static str, Arc<TrsServer>>,
}

impl Toolchain {
    /// Servers with resources under `http://{server}.example.org/resources/`.
    pub fn new(config: TrsServerConfig, clock: Arc<dyn Clock>) -> Self {
        let servers = [REQS, DESIGN, CHANGES]
            .into_iter()
            .map(|id| {
                (id, Arc::new(TrsServer::new(id, namespace(id), config.clone(), clock.clone())))
            })
            .collect();
        Toolchain { servers }
    }

    pub fn server(&self, server_id: &str) -> Option<&Arc<TrsServer>> {
        self.servers.get(server_id)
    }

    pub fn server_for(&self, kind: ResourceKind) -> &Arc<TrsServer> {
        &self.servers[kind.server_id()]
    }

    /// The server whose namespace contains `uri`.
    pub fn server_of(&self, uri: &Iri) -> Option<&Arc<TrsServer>> {
        self.servers.values().find(|s| s.local_id(uri).is_some())
    }

    pub fn servers(&self) -> impl Iterator<Item = &Arc<TrsServer>> {
        self.servers.values()
    }

    pub fn iri(&self, kind: ResourceKind, local_id: &str) -> Iri {
        self.server_for(kind)
            .resource_iri(local_id)
            .expect("toolchain ids form valid IRIs")
    }

    pub fn put(&self, resource: &ToolResource) -> ChangeEvent {
        self.server_for(resource.kind)
            .put(resource.uri.clone(), resource.to_graph())
    }

    pub fn delete(&self, uri: &Iri) -> Option<ChangeEvent> {
        self.server_of(uri)?.remove(uri)
    }

    /// Union of every server's live resources, one named graph each.
    pub fn live_dataset(&self) -> Dataset {
        let mut all = Dataset::new();
        for server in self.servers.values() {
            for (name, graph) in server.live_dataset().graphs() {
                all.upsert_graph(name.clone(), graph.clone());
            }
        }
        all
    }

    pub fn live_count(&self) -> usize {
        self.servers.values().map(|s| s.live_uris().len()).sum()
    }

    /// Last recorded order per server.
    pub fn last_orders(&self) -> BTreeMap<String, u64> {
        self.servers
            .iter()
            .map(|(id, s)| (id.to_string(), s.last_order()))
            .collect()
    }
}

impl std::fmt::Debug for Toolchain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Toolchain")
            .field("servers", &self.servers.keys().collect::<Vec<_>>())
            .finish()
    }
}
