//! Parse an N-Triples document, group it into named graphs, and print the
//! canonical serialization of the union.

use lcq::rdf::{parse_ntriples, serialize_ntriples, Dataset, Iri};

const DOC: &str = r#"
# two resources, out of order and with a duplicate
<http://reqs.example.org/resources/R2> <http://example.org/toolchain#refines> <http://reqs.example.org/resources/R1> .
<http://reqs.example.org/resources/R1> <http://purl.org/dc/terms/title> "Braking \"distance\"" .
<http://reqs.example.org/resources/R1> <http://example.org/toolchain#priority> "3"^^<http://www.w3.org/2001/XMLSchema#integer> .
<http://reqs.example.org/resources/R2> <http://example.org/toolchain#refines> <http://reqs.example.org/resources/R1> .
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = parse_ntriples(DOC)?;
    println!("{} distinct triples", graph.len());

    let mut ds = Dataset::new();
    for subject in ["http://reqs.example.org/resources/R1", "http://reqs.example.org/resources/R2"] {
        let name = Iri::new(subject)?;
        let mut g = lcq::rdf::Graph::new();
        for t in graph.with_subject(&name) {
            g.insert(t.clone());
        }
        ds.upsert_graph(name, g);
    }
    println!("{} named graphs, {} quads", ds.len(), ds.quad_count());

    let canonical = serialize_ntriples(&ds.union_graph());
    print!("{canonical}");
    assert_eq!(parse_ntriples(&canonical)?, graph);
    Ok(())
}
