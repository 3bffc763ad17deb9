//! Evaluate SPARQL over the canonical toolchain fixture.

use std::sync::Arc;

use lcq::clock::SystemClock;
use lcq::queries::Lcq;
use lcq::sparql::{evaluate, parse_query};
use lcq::toolchain::{seed_fixture, FixtureSpec, Toolchain};
use lcq::trs::TrsServerConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tc = Toolchain::new(TrsServerConfig::default(), Arc::new(SystemClock));
    seed_fixture(&FixtureSpec::canonical(), &tc);
    let ds = tc.live_dataset();

    let lcq1 = Lcq::Lcq1.sparql();
    println!("{lcq1}\n");
    println!("{}\n", evaluate(&parse_query(&lcq1)?, &ds).to_json());

    let adhoc = "PREFIX tc: <http://example.org/toolchain#>
        SELECT DISTINCT ?r ?status WHERE { ?cr tc:tracks ?r . ?r tc:status ?status FILTER(?status = \"APPROVED\") }";
    let table = evaluate(&parse_query(adhoc)?, &ds);
    for row in table.rows() {
        println!("{row:?}");
    }

    match parse_query("SELECT ?s WHERE { ?s ?p ?o } ORDER BY ?s") {
        Ok(_) => unreachable!(),
        Err(e) => println!("\nrejected: {e}"),
    }
    Ok(())
}
