mod common;

use common::{oracle_rows, random_dataset, random_query, rng};
use lcq::sparql::{evaluate, parse_query};
use proptest::prelude::*;

fn check(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let ds = random_dataset(&mut r, 50);
    let spec = random_query(&mut r);
    let text = spec.to_sparql();
    let query = parse_query(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
    let mut got = evaluate(&query, &ds).rows().to_vec();
    got.sort();
    prop_assert_eq!(got, oracle_rows(&spec, &ds), "{}", text);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn evaluator_matches_brute_force(seed in any::<u64>()) {
        check(seed)?;
    }
}

#[test]
fn empty_dataset_gives_no_rows_for_variable_patterns() {
    let ds = lcq::rdf::Dataset::new();
    let q = parse_query("SELECT ?s WHERE { ?s ?p ?o }").unwrap();
    assert!(evaluate(&q, &ds).is_empty());
}
