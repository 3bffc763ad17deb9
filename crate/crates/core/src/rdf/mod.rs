//! Minimal RDF model: IRIs, literals, triples, graphs and named-graph
//! datasets, plus the N-Triples wire format.

mod graph;
pub mod ntriples;
mod term;

pub use graph::{Dataset, Graph};
pub use ntriples::{parse_ntriples, serialize_ntriples};
pub use term::{Iri, Literal, Term, Triple};

/// Well-known vocabularies.
pub mod vocab {
    pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
    pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
    pub const DCTERMS_TITLE: &str = "http://purl.org/dc/terms/title";
    pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RdfError {
    #[error("invalid IRI {iri:?}: {reason}")]
    InvalidIri { iri: String, reason: &'static str },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: blank nodes unsupported")]
    BlankNode { line: usize },
}
