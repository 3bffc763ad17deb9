//! Push mode: services publish change events on a bus and the warehouse
//! applies them as they arrive. A lost message shows up as a gap on the
//! next one and is recovered by pulling the change log.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use lcq::bridge::{InProcessBus, PubSub, Publisher, PublisherSettings};
use lcq::client::{LocalSource, TrsSource};
use lcq::clock::SystemClock;
use lcq::toolchain::{seed_fixture, FixtureSpec, ResourceKind, ToolResource, Toolchain};
use lcq::trs::TrsServerConfig;
use lcq::warehouse::{Mode, RunningWarehouse, ServerEntry, Warehouse, WarehouseConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(SystemClock);
    let tc = Toolchain::new(TrsServerConfig::default(), clock.clone());
    seed_fixture(&FixtureSpec::canonical(), &tc);

    let bus = Arc::new(InProcessBus::new());
    let publishers: Vec<Publisher> = tc
        .servers()
        .map(|s| Publisher::spawn(s, bus.clone() as Arc<dyn PubSub>, PublisherSettings::default()))
        .collect();

    let config = WarehouseConfig {
        mode: Mode::Push,
        servers: tc.servers().map(|s| ServerEntry::new(s.id(), format!("local://{}", s.id()))).collect(),
        ..WarehouseConfig::default()
    };
    let sources: BTreeMap<String, Arc<dyn TrsSource>> = tc
        .servers()
        .map(|s| (s.id().to_owned(), Arc::new(LocalSource::new(s.clone())) as Arc<dyn TrsSource>))
        .collect();
    let wh = Arc::new(Warehouse::new(clock));
    let running = RunningWarehouse::start_with_sources(wh.clone(), config, sources, Some(bus.clone()))?;

    let mut cr = ToolResource::new(tc.iri(ResourceKind::ChangeRequest, "CR4"), ResourceKind::ChangeRequest, "Retune B3");
    cr.status = Some("OPEN".into());
    cr.tracks.push(tc.iri(ResourceKind::SimulinkBlock, "B3"));
    tc.put(&cr);

    bus.drop_next(1);
    cr.status = Some("RESOLVED".into());
    tc.put(&cr); // lost
    cr.title = "Retune B3 gains".into();
    tc.put(&cr); // arrives, exposes the gap

    let caught_up = running.wait_for_orders(&tc.last_orders(), Duration::from_secs(5));
    let m = wh.metrics_snapshot();
    println!("caught up: {caught_up}");
    println!("messages {} gaps {} lost {}", m.record.mqtt_message_count, m.record.mqtt_gap_count, bus.lost());
    println!("staleness p50 {:?} ms", m.stats.staleness_p50_ms);
    assert_eq!(wh.dataset(), tc.live_dataset());
    drop(publishers);
    Ok(())
}
