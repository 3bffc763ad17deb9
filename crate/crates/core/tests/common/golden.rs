//! Wire outputs checked byte for byte against tests/golden.

use std::path::PathBuf;
use std::sync::Arc;

use lcq::bridge::ChangeEventMessage;
use lcq::clock::ManualClock;
use lcq::queries::Lcq;
use lcq::rdf::{serialize_ntriples, Graph, Literal, Triple};
use lcq::sparql::{evaluate, parse_query};
use lcq::toolchain::{seed_fixture, FixtureSpec, ResourceKind, Toolchain};
use lcq::trs::http::{base_page_document, changelog_page_document, trs_document};
use lcq::trs::{ChangeEvent, ChangeKind, TrsServer, TrsServerConfig};

use super::iri;

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).unwrap() + "\n"
}

pub fn canonical() -> Toolchain {
    let tc = Toolchain::new(TrsServerConfig::default(), Arc::new(ManualClock::new(1_700_000_000_000)));
    seed_fixture(&FixtureSpec::canonical(), &tc);
    tc
}

pub fn ntriples() -> Vec<(String, String)> {
    let s = iri("http://example.org/s");
    let mut g = Graph::new();
    g.insert(Triple::new(s.clone(), iri("http://example.org/a"), Literal::plain("tab\there \"quoted\" back\\slash")));
    g.insert(Triple::new(s.clone(), iri("http://example.org/b"), Literal::plain("line\nbreak\rcr")));
    g.insert(Triple::new(s.clone(), iri("http://example.org/c"), Literal::plain("caf\u{e9} \u{1F680}")));
    g.insert(Triple::new(
        s.clone(),
        iri("http://example.org/d"),
        Literal::typed("42", iri("http://www.w3.org/2001/XMLSchema#integer")),
    ));
    g.insert(Triple::new(s, iri("http://example.org/e"), iri("http://example.org/o")));
    vec![
        ("canonical.nt".into(), serialize_ntriples(&canonical().live_dataset().union_graph())),
        ("escapes.nt".into(), serialize_ntriples(&g)),
    ]
}

pub fn change_event_message() -> Vec<(String, String)> {
    let events = vec![
        ChangeEvent::new(7, iri("http://reqs.example.org/resources/R1"), ChangeKind::Creation, 1_700_000_000_000),
        ChangeEvent::new(8, iri("http://reqs.example.org/resources/R1"), ChangeKind::Modification, 1_700_000_000_250),
        ChangeEvent::new(9, iri("http://reqs.example.org/resources/R2"), ChangeKind::Deletion, 1_700_000_001_000),
    ];
    let msg = ChangeEventMessage::new("reqs", events).unwrap();
    vec![("change_event_message.json".into(), String::from_utf8(msg.encode()).unwrap())]
}

pub fn trs_documents() -> Vec<(String, String)> {
    let server = TrsServer::new(
        "reqs",
        "http://reqs.example.org/resources/",
        TrsServerConfig {
            page_size: 2,
            rebase_every: None,
            retain_history: false,
        },
        Arc::new(ManualClock::new(1_700_000_000_000)),
    );
    for id in ["R1", "R2", "R3"] {
        server.put(server.resource_iri(id).unwrap(), Graph::new());
    }
    server.rebase();
    server.put(server.resource_iri("R4").unwrap(), Graph::new());
    server.remove(&server.resource_iri("R2").unwrap());
    server.put(server.resource_iri("R1").unwrap(), Graph::new());

    let base = "http://127.0.0.1:8081";
    vec![
        ("trs.json".into(), pretty(&trs_document(&server.serve_descriptor(), base))),
        ("trs_base_0.json".into(), pretty(&base_page_document(&server.serve_base_page(0), base))),
        ("trs_base_1.json".into(), pretty(&base_page_document(&server.serve_base_page(1), base))),
        ("trs_changelog_0.json".into(), pretty(&changelog_page_document(&server.serve_changelog_page(0), base))),
        ("trs_changelog_1.json".into(), pretty(&changelog_page_document(&server.serve_changelog_page(1), base))),
    ]
}

pub fn sparql_results() -> Vec<(String, String)> {
    let tc = canonical();
    let ds = tc.live_dataset();
    let lcq2 = Lcq::Lcq2 {
        cr: tc.iri(ResourceKind::ChangeRequest, "CR1"),
        req: tc.iri(ResourceKind::Requirement, "R1"),
    };
    let mut out: Vec<(String, String)> = [("lcq1", Lcq::Lcq1), ("lcq2", lcq2), ("lcq3", Lcq::Lcq3)]
        .into_iter()
        .map(|(name, q)| {
            let table = evaluate(&parse_query(&q.sparql()).unwrap(), &ds);
            (format!("{name}_results.json"), table.to_json())
        })
        .collect();
    let q = parse_query(
        "PREFIX tc: <http://example.org/toolchain#> \
         SELECT ?r ?s WHERE { ?r tc:status ?s FILTER(?s = \"DRAFT\") }",
    )
    .unwrap();
    out.push(("literal_results.json".into(), evaluate(&q, &ds).to_json()));
    out
}

/// Files whose content differs from `actual`, with the reason.
pub fn mismatches(cases: &[(String, String)]) -> Vec<String> {
    cases
        .iter()
        .filter_map(|(name, actual)| match std::fs::read_to_string(dir().join(name)) {
            Ok(expected) if &expected == actual => None,
            Ok(_) => Some(format!("{name}: differs")),
            Err(e) => Some(format!("{name}: {e}")),
        })
        .collect()
}
