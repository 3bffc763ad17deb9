//! Serve a Tracked Resource Set over HTTP and read it back with the client
//! source: base pages, change log, and a resource body.

use std::sync::Arc;

use lcq::client::{HttpSource, TrsSource};
use lcq::clock::SystemClock;
use lcq::rdf::{serialize_ntriples, Graph, Iri, Literal, Triple};
use lcq::serve::HttpServerHandle;
use lcq::trs::{TrsServer, TrsServerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = TrsServerConfig {
        page_size: 2,
        rebase_every: Some(4),
        ..TrsServerConfig::default()
    };
    let server = Arc::new(TrsServer::new("reqs", "http://reqs.example.org/resources/", config, Arc::new(SystemClock)));
    let title = Iri::new("http://purl.org/dc/terms/title")?;
    for i in 1..=5 {
        let uri = server.resource_iri(&format!("R{i}"))?;
        let mut g = Graph::new();
        g.insert(Triple::new(uri.clone(), title.clone(), Literal::plain(format!("Requirement {i}"))));
        server.put(uri, g);
    }
    server.remove(&server.resource_iri("R2")?);

    let srv = server.clone();
    let http = HttpServerHandle::spawn_with("127.0.0.1:0".parse()?, move |base| lcq::trs::http::router(srv, base))?;
    println!("serving {}/trs", http.base_url());

    let source = HttpSource::new("reqs", http.base_url());
    println!("cutoff order {}", source.cutoff_order()?);
    let mut page = Some(0);
    while let Some(n) = page {
        let p = source.base_page(n)?;
        println!("base page {n}: {:?}", p.members.iter().map(Iri::as_str).collect::<Vec<_>>());
        page = p.next;
    }
    let log = source.changelog_page(0)?;
    for e in &log.events {
        println!("event {} {:?} {}", e.order, e.kind, e.uri);
    }
    if let Some(body) = source.fetch(&Iri::new("http://reqs.example.org/resources/R5")?)? {
        print!("{}", serialize_ntriples(&body));
    }
    http.shutdown();
    Ok(())
}
