//! Keep a warehouse current by polling each service's change log.

use std::sync::Arc;

use lcq::client::{LocalSource, TrsClient};
use lcq::clock::SystemClock;
use lcq::toolchain::{seed_fixture, FixtureSpec, ResourceKind, ToolResource, Toolchain};
use lcq::trs::TrsServerConfig;
use lcq::warehouse::Warehouse;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(SystemClock);
    let tc = Toolchain::new(TrsServerConfig::default(), clock.clone());
    seed_fixture(&FixtureSpec::canonical(), &tc);
    let wh = Arc::new(Warehouse::new(clock));

    let mut clients: Vec<TrsClient> = tc
        .servers()
        .map(|s| TrsClient::new(Arc::new(LocalSource::new(s.clone())), wh.clone(), format!("local://{}/trs", s.id())))
        .collect();
    for c in &mut clients {
        c.initial_sync()?;
    }
    println!("after initial sync: {} graphs", wh.dataset().len());

    // B3 now satisfies R3 and B4 is deleted.
    let mut b3 = ToolResource::new(tc.iri(ResourceKind::SimulinkBlock, "B3"), ResourceKind::SimulinkBlock, "Block B3");
    b3.satisfies.push(tc.iri(ResourceKind::Requirement, "R3"));
    tc.put(&b3);
    tc.delete(&tc.iri(ResourceKind::SimulinkBlock, "B4"));

    for c in &mut clients {
        let outcome = c.sync_once()?;
        println!("{:<8} order {:>2}  {outcome:?}", c.server_id(), c.last_applied_order());
    }
    let lcq1 = wh.sparql_query(&lcq::queries::Lcq::Lcq1.sparql())?;
    println!("LCQ1 now has {} rows", lcq1.len());
    assert_eq!(wh.dataset(), tc.live_dataset());
    Ok(())
}
