use lcq::rdf::{parse_ntriples, serialize_ntriples, Dataset, Graph, Iri, Literal, Term, Triple};
use proptest::prelude::*;

fn iri() -> impl Strategy<Value = Iri> {
    "[a-z]{1,3}(/[A-Za-z0-9_~.-]{0,6}){0,3}"
        .prop_map(|path| Iri::new(format!("http://example.org/{path}")).unwrap())
}

fn literal() -> impl Strategy<Value = Literal> {
    let lexical = prop_oneof![
        "[ -~]{0,12}",
        any::<String>(),
        Just("\"\\\n\r\t".to_owned()),
    ];
    (lexical, prop::option::of(iri())).prop_map(|(lex, dt)| match dt {
        Some(dt) => Literal::typed(lex, dt),
        None => Literal::plain(lex),
    })
}

fn triple() -> impl Strategy<Value = Triple> {
    let object = prop_oneof![iri().prop_map(Term::Iri), literal().prop_map(Term::Literal)];
    (iri(), iri(), object).prop_map(|(s, p, o)| Triple::new(s, p, o))
}

fn graph() -> impl Strategy<Value = Graph> {
    prop::collection::vec(triple(), 0..30).prop_map(|ts| {
        let mut g = Graph::new();
        for t in ts {
            g.insert(t);
        }
        g
    })
}

proptest! {
    #[test]
    fn ntriples_round_trip(g in graph()) {
        let text = serialize_ntriples(&g);
        let back = parse_ntriples(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize_ntriples(&back), text);
    }

    #[test]
    fn serialization_is_sorted_one_line_per_triple(g in graph()) {
        let text = serialize_ntriples(&g);
        let lines: Vec<&str> = text.lines().collect();
        prop_assert_eq!(lines.len(), g.len());
        prop_assert!(lines.iter().all(|l| l.ends_with(" .")));
    }

    #[test]
    fn dataset_union_is_union_of_graphs(graphs in prop::collection::vec((0u8..4, graph()), 0..6)) {
        let mut ds = Dataset::new();
        let mut model: std::collections::BTreeMap<u8, Graph> = Default::default();
        for (name, g) in graphs {
            ds.upsert_graph(Iri::new(format!("http://g/{name}")).unwrap(), g.clone());
            model.insert(name, g);
        }
        let mut expected = Graph::new();
        for g in model.values() {
            for t in g.iter() {
                expected.insert(t.clone());
            }
        }
        prop_assert_eq!(ds.len(), model.len());
        prop_assert_eq!(ds.union_graph(), expected);
        prop_assert_eq!(ds.quad_count(), model.values().map(Graph::len).sum::<usize>());
    }

    #[test]
    fn upsert_replaces_and_delete_removes(a in graph(), b in graph()) {
        let name = Iri::new("http://g/x").unwrap();
        let mut ds = Dataset::new();
        ds.upsert_graph(name.clone(), a);
        ds.upsert_graph(name.clone(), b.clone());
        prop_assert_eq!(ds.graph(&name), Some(&b));
        ds.delete_graph(&name);
        prop_assert!(ds.is_empty());
        prop_assert!(ds.delete_graph(&name).is_none());
    }
}

#[test]
fn malformed_lines_are_rejected() {
    for bad in [
        "<http://a> <http://b> <http://c>",
        "<http://a> <http://b> \"unterminated .",
        "<rel> <http://b> <http://c> .",
        "_:b0 <http://b> <http://c> .",
    ] {
        assert!(parse_ntriples(bad).is_err(), "{bad}");
    }
}
