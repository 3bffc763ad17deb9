//! The push path over a real MQTT connection to the in-test broker.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::broker::MiniBroker;
use lcq::bridge::{topic_for, ChangeEventMessage, MqttTransport, PubSub, Publisher, PublisherSettings, EVENTS_FILTER};
use lcq::clock::SystemClock;
use lcq::system::{RunningSystem, SystemConfig};
use lcq::toolchain::{run_workload, seed_fixture, FixtureSpec, Toolchain, ToolchainServices, WorkloadScript};
use lcq::trs::{ChangeEvent, ChangeKind, TrsServerConfig};
use lcq::warehouse::{Mode, MqttSettings, RunningWarehouse, Warehouse, WarehouseConfig};

fn connect(broker: &MiniBroker, id: &str) -> Arc<MqttTransport> {
    Arc::new(MqttTransport::connect(&broker.url(), id, Duration::from_secs(5)).expect("connect"))
}

fn wait_until(timeout: Duration, mut f: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    f()
}

#[test]
fn publish_reaches_matching_subscriber() {
    let broker = MiniBroker::start();
    let sub = connect(&broker, "sub");
    let rx = sub.subscribe(EVENTS_FILTER).unwrap();
    let publisher = connect(&broker, "pub");
    let ev = ChangeEvent::new(1, common::iri("http://reqs.example.org/resources/R1"), ChangeKind::Creation, 5);
    let msg = ChangeEventMessage::new("reqs", vec![ev]).unwrap();
    // The subscription is asynchronous; retry until it is in place.
    let got = wait_until(Duration::from_secs(5), || {
        publisher.publish(&topic_for("reqs"), &msg.encode()).unwrap();
        rx.recv_timeout(Duration::from_millis(100)).is_ok()
    });
    assert!(got);
    publisher.publish("other/topic", b"x").unwrap();
    while let Ok(d) = rx.recv_timeout(Duration::from_millis(200)) {
        assert_eq!(d.topic, "trs/reqs/events");
    }
}

#[test]
fn unreachable_broker_fails_to_connect() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let err = MqttTransport::connect(&format!("mqtt://{addr}"), "x", Duration::from_millis(300));
    assert!(err.is_err());
}

#[test]
fn warehouse_follows_services_over_mqtt_and_http() {
    let broker = MiniBroker::start();
    let tc = Toolchain::new(TrsServerConfig::default(), Arc::new(SystemClock));
    let truth = seed_fixture(&FixtureSpec::canonical(), &tc);
    let services = ToolchainServices::spawn(&tc, &BTreeMap::new()).unwrap();
    let tools = connect(&broker, "tools");
    let publishers: Vec<Publisher> = tc
        .servers()
        .map(|s| Publisher::spawn(s, tools.clone() as Arc<dyn PubSub>, PublisherSettings::default()))
        .collect();

    let config = WarehouseConfig {
        mode: Mode::Push,
        servers: services.server_entries(60_000),
        mqtt: MqttSettings {
            mqtt_url: Some(broker.url()),
            ..MqttSettings::default()
        },
        ..WarehouseConfig::default()
    };
    let wh = Arc::new(Warehouse::new(Arc::new(SystemClock)));
    let running = RunningWarehouse::start(wh.clone(), config, Some(connect(&broker, "warehouse"))).unwrap();
    let script = WorkloadScript {
        seed: 3,
        steps: 120,
        rate: 200.0,
        ..WorkloadScript::default()
    };
    run_workload(&script, &tc, &truth).unwrap();
    let ok = running.wait_for_orders(&tc.last_orders(), Duration::from_secs(20));
    if !ok {
        let m = wh.metrics_snapshot();
        let applied: Vec<_> = tc.servers().map(|s| (s.id().to_owned(), running.last_applied_order(s.id()))).collect();
        let pubs: Vec<_> = publishers.iter().map(|p| (p.stats().messages.load(std::sync::atomic::Ordering::Relaxed), p.stats().events.load(std::sync::atomic::Ordering::Relaxed))).collect();
        panic!("push did not catch up: want {:?} have {applied:?} msgs {} gaps {} rejected {} broker {} pubs {pubs:?}", tc.last_orders(), m.record.mqtt_message_count, m.record.mqtt_gap_count, m.record.mqtt_rejected_count, broker.published());
    }
    assert_eq!(wh.dataset(), tc.live_dataset());
    let m = wh.metrics_snapshot();
    assert!(m.record.mqtt_message_count > 0);
    assert!(broker.published() >= m.record.mqtt_message_count);
    drop(publishers);
    drop(running);
    services.shutdown();
}

#[test]
fn clients_reconnect_and_gaps_are_pulled() {
    let broker = MiniBroker::start();
    let tc = Toolchain::new(TrsServerConfig::default(), Arc::new(SystemClock));
    let truth = seed_fixture(&FixtureSpec::canonical(), &tc);
    let services = ToolchainServices::spawn(&tc, &BTreeMap::new()).unwrap();
    let tools = connect(&broker, "tools-r");
    let _publishers: Vec<Publisher> = tc
        .servers()
        .map(|s| Publisher::spawn(s, tools.clone() as Arc<dyn PubSub>, PublisherSettings::default()))
        .collect();
    let consumer = connect(&broker, "wh-r");
    let config = WarehouseConfig {
        mode: Mode::Push,
        servers: services.server_entries(60_000),
        ..WarehouseConfig::default()
    };
    let wh = Arc::new(Warehouse::new(Arc::new(SystemClock)));
    let running = RunningWarehouse::start(wh.clone(), config, Some(consumer.clone())).unwrap();

    let script = |seed| WorkloadScript {
        seed,
        steps: 30,
        rate: 0.0,
        ..WorkloadScript::default()
    };
    run_workload(&script(1), &tc, &truth).unwrap();
    assert!(running.wait_for_orders(&tc.last_orders(), Duration::from_secs(10)));

    broker.kick_all();
    assert!(wait_until(Duration::from_secs(10), || tools.is_connected() && consumer.is_connected()));
    // Give the renewed subscription a moment, then mutate again. Anything
    // published while disconnected was requeued; anything lost shows up as
    // a gap on the next message and is pulled.
    std::thread::sleep(Duration::from_millis(300));
    for step in 0..5 {
        let live: Vec<_> = tc.live_dataset().graph_names().cloned().collect();
        let target = &live[step % live.len()];
        let server = tc.server_of(target).unwrap();
        let body = server.resource(target).unwrap();
        server.put(target.clone(), (*body).clone());
    }
    assert!(running.wait_for_orders(&tc.last_orders(), Duration::from_secs(10)), "not caught up after reconnect");
    assert_eq!(wh.dataset(), tc.live_dataset());
    services.shutdown();
}

#[test]
fn system_up_with_broker_is_healthy() {
    let broker = MiniBroker::start();
    let config = SystemConfig {
        mode: lcq::bench::BenchMode::Push,
        listen: "127.0.0.1:0".into(),
        mqtt: MqttSettings {
            mqtt_url: Some(broker.url()),
            ..MqttSettings::default()
        },
        ..SystemConfig::default()
    };
    let system = RunningSystem::up(&config).unwrap();
    system.health_check().unwrap();
    let wh = system.warehouse().unwrap().warehouse().clone();
    assert_eq!(wh.dataset(), system.toolchain().live_dataset());
    system.shutdown().unwrap();
}
