//! The three lifecycle queries, answered by the warehouse and by crawling
//! the services directly, with the request cost of each.

use std::sync::Arc;

use lcq::client::{LocalSource, TrsClient, TrsSource};
use lcq::clock::SystemClock;
use lcq::queries::{DirectQuery, Lcq};
use lcq::toolchain::{seed_fixture, FixtureSpec, ResourceKind, Toolchain};
use lcq::trs::TrsServerConfig;
use lcq::warehouse::Warehouse;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(SystemClock);
    let tc = Toolchain::new(TrsServerConfig::default(), clock.clone());
    seed_fixture(&FixtureSpec::canonical(), &tc);
    let sources = || {
        tc.servers()
            .map(|s| (s.id().to_owned(), Arc::new(LocalSource::new(s.clone())) as Arc<dyn TrsSource>))
            .collect()
    };

    let wh = Arc::new(Warehouse::new(clock));
    let mut synced = 0;
    for (_, source) in sources() {
        let mut c = TrsClient::new(source, wh.clone(), "local");
        c.initial_sync()?;
        synced += 1;
    }
    let sync_gets = wh.metrics_snapshot().stats.total_http_gets;
    println!("warehouse synced {synced} services with {sync_gets} resource GETs");

    let direct = DirectQuery::new(sources());
    let queries = [
        Lcq::Lcq1,
        Lcq::Lcq2 {
            cr: tc.iri(ResourceKind::ChangeRequest, "CR1"),
            req: tc.iri(ResourceKind::Requirement, "R1"),
        },
        Lcq::Lcq3,
    ];
    for q in &queries {
        let from_wh = wh.sparql_query(&q.sparql())?;
        let before = direct.resource_gets();
        let from_direct = direct.run(q)?;
        let names: Vec<_> = from_wh
            .column_values(q.result_variable())
            .iter()
            .map(|t| format!("{t:?}").rsplit('/').next().unwrap_or_default().trim_end_matches('>').to_owned())
            .collect();
        println!(
            "{}: {:?}  (direct crawl: {} GETs, same answer: {})",
            q.name(),
            names,
            direct.resource_gets() - before,
            from_wh == from_direct
        );
    }
    Ok(())
}
