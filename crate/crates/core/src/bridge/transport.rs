use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rumqttc::{Client, Event, MqttOptions, Packet, QoS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub topic: String,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("transport not connected")]
    NotConnected,
    #[error("invalid broker url {0:?}")]
    BadUrl(String),
    #[error("mqtt: {0}")]
    Mqtt(String),
}

/// A topic-based publish/subscribe port.
pub trait PubSub: Send + Sync {
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), TransportError>;

    /// Deliveries for every topic matching `filter` (MQTT wildcard syntax).
    fn subscribe(&self, filter: &str) -> Result<Receiver<Delivery>, TransportError>;
}

/// MQTT topic filter matching with `+` and `#` wildcards.
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

type Subscribers = Mutex<Vec<(String, Sender<Delivery>)>>;

fn dispatch(subscribers: &Subscribers, topic: &str, payload: &[u8]) {
    subscribers.lock().retain(|(filter, tx)| {
        if !topic_matches(filter, topic) {
            return true;
        }
        tx.send(Delivery {
            topic: topic.to_owned(),
            payload: payload.to_vec(),
        })
        .is_ok()
    });
}

struct BusFaults {
    rng: ChaCha8Rng,
    drop_probability: f64,
    duplicate_probability: f64,
    drop_next: u32,
}

/// In-process transport with injectable faults: refusing publishes
/// (offline), silently losing messages, and redelivering them.
pub struct InProcessBus {
    subscribers: Subscribers,
    offline: AtomicBool,
    faults: Mutex<BusFaults>,
    delivered: AtomicU64,
    lost: AtomicU64,
    duplicated: AtomicU64,
}

impl Default for InProcessBus {
    fn default() -> Self {
        Self::new()
    }
}

impl InProcessBus {
    pub fn new() -> Self {
        InProcessBus {
            subscribers: Mutex::new(Vec::new()),
            offline: AtomicBool::new(false),
            faults: Mutex::new(BusFaults {
                rng: ChaCha8Rng::seed_from_u64(0),
                drop_probability: 0.0,
                duplicate_probability: 0.0,
                drop_next: 0,
            }),
            delivered: AtomicU64::new(0),
            lost: AtomicU64::new(0),
            duplicated: AtomicU64::new(0),
        }
    }

    /// While offline, publishes fail and the publisher has to buffer.
    pub fn set_offline(&self, offline: bool) {
        self.offline.store(offline, Ordering::SeqCst);
    }

    /// Accepted messages are lost with probability `drop` and delivered
    /// twice with probability `duplicate`, drawn from a seeded generator.
    pub fn set_faults(&self, seed: u64, drop: f64, duplicate: f64) {
        let mut f = self.faults.lock();
        f.rng = ChaCha8Rng::seed_from_u64(seed);
        f.drop_probability = drop;
        f.duplicate_probability = duplicate;
    }

    /// Loses the next `n` accepted messages.
    pub fn drop_next(&self, n: u32) {
        self.faults.lock().drop_next = n;
    }

    pub fn delivered(&self) -> u64 {
        self.delivered.load(Ordering::SeqCst)
    }

    pub fn lost(&self) -> u64 {
        self.lost.load(Ordering::SeqCst)
    }

    pub fn duplicated(&self) -> u64 {
        self.duplicated.load(Ordering::SeqCst)
    }
}

impl PubSub for InProcessBus {
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), TransportError> {
        if self.offline.load(Ordering::SeqCst) {
            return Err(TransportError::NotConnected);
        }
        let copies = {
            let mut guard = self.faults.lock();
            let f = &mut *guard;
            if f.drop_next > 0 {
                f.drop_next -= 1;
                0
            } else if f.drop_probability > 0.0 && f.rng.random_bool(f.drop_probability) {
                0
            } else if f.duplicate_probability > 0.0 && f.rng.random_bool(f.duplicate_probability) {
                2
            } else {
                1
            }
        };
        match copies {
            0 => {
                self.lost.fetch_add(1, Ordering::SeqCst);
            }
            n => {
                for _ in 0..n {
                    dispatch(&self.subscribers, topic, payload);
                }
                self.delivered.fetch_add(1, Ordering::SeqCst);
                if n > 1 {
                    self.duplicated.fetch_add(1, Ordering::SeqCst);
                }
            }
        }
        Ok(())
    }

    fn subscribe(&self, filter: &str) -> Result<Receiver<Delivery>, TransportError> {
        let (tx, rx) = crossbeam_channel::unbounded();
        self.subscribers.lock().push((filter.to_owned(), tx));
        Ok(rx)
    }
}

/// MQTT 3.1.1 over TCP to an external broker, QoS 1, no retained messages.
/// Subscriptions are renewed after every reconnect.
pub struct MqttTransport {
    client: Client,
    connected: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
    subscribers: Arc<Subscribers>,
    filters: Arc<Mutex<Vec<String>>>,
}

/// `mqtt://host:port` or `tcp://host:port`; the port defaults to 1883.
pub fn parse_broker_url(url: &str) -> Result<(String, u16), TransportError> {
    let bad = || TransportError::BadUrl(url.to_owned());
    let rest = url
        .strip_prefix("mqtt://")
        .or_else(|| url.strip_prefix("tcp://"))
        .ok_or_else(bad)?;
    let rest = rest.trim_end_matches('/');
    let (host, port) = match rest.rsplit_once(':') {
        Some((h, p)) => (h, p.parse().map_err(|_| bad())?),
        None => (rest, 1883),
    };
    if host.is_empty() {
        return Err(bad());
    }
    Ok((host.to_owned(), port))
}

impl MqttTransport {
    /// Connects and waits up to `timeout` for the broker's CONNACK.
    pub fn connect(url: &str, client_id: &str, timeout: Duration) -> Result<Self, TransportError> {
        let (host, port) = parse_broker_url(url)?;
        let mut options = MqttOptions::new(client_id, host, port);
        options.set_keep_alive(Duration::from_secs(5));
        options.set_clean_session(true);
        let (client, mut connection) = Client::new(options, 1024);

        let connected = Arc::new(AtomicBool::new(false));
        let stop = Arc::new(AtomicBool::new(false));
        let subscribers: Arc<Subscribers> = Arc::new(Mutex::new(Vec::new()));
        let filters: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));
        let last_error = Arc::new(Mutex::new(None::<String>));

        {
            let client = client.clone();
            let connected = connected.clone();
            let stop = stop.clone();
            let subscribers = subscribers.clone();
            let filters = filters.clone();
            let last_error = last_error.clone();
            std::thread::Builder::new()
                .name(format!("mqtt-{client_id}"))
                .spawn(move || {
                    for event in connection.iter() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        match event {
                            Ok(Event::Incoming(Packet::ConnAck(_))) => {
                                for filter in filters.lock().iter() {
                                    let _ = client.try_subscribe(filter.clone(), QoS::AtLeastOnce);
                                }
                                connected.store(true, Ordering::SeqCst);
                            }
                            Ok(Event::Incoming(Packet::Publish(p))) => {
                                dispatch(&subscribers, &p.topic, &p.payload);
                            }
                            Ok(_) => {}
                            Err(e) => {
                                connected.store(false, Ordering::SeqCst);
                                *last_error.lock() = Some(e.to_string());
                                std::thread::sleep(Duration::from_millis(100));
                            }
                        }
                    }
                    connected.store(false, Ordering::SeqCst);
                })
                .map_err(|e| TransportError::Mqtt(e.to_string()))?;
        }

        let deadline = Instant::now() + timeout;
        while !connected.load(Ordering::SeqCst) {
            if Instant::now() >= deadline {
                stop.store(true, Ordering::SeqCst);
                let _ = client.try_disconnect();
                let reason = last_error.lock().clone().unwrap_or_else(|| "timed out".into());
                return Err(TransportError::Mqtt(format!("cannot connect to {url}: {reason}")));
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        Ok(MqttTransport {
            client,
            connected,
            stop,
            subscribers,
            filters,
        })
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::SeqCst)
    }
}

impl PubSub for MqttTransport {
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), TransportError> {
        if !self.is_connected() {
            return Err(TransportError::NotConnected);
        }
        self.client
            .try_publish(topic, QoS::AtLeastOnce, false, payload.to_vec())
            .map_err(|e| TransportError::Mqtt(e.to_string()))
    }

    fn subscribe(&self, filter: &str) -> Result<Receiver<Delivery>, TransportError> {
        let (tx, rx) = crossbeam_channel::unbounded();
        self.subscribers.lock().push((filter.to_owned(), tx));
        self.filters.lock().push(filter.to_owned());
        self.client
            .try_subscribe(filter, QoS::AtLeastOnce)
            .map_err(|e| TransportError::Mqtt(e.to_string()))?;
        Ok(rx)
    }
}

impl Drop for MqttTransport {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.client.try_disconnect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_matching() {
        assert!(topic_matches("trs/+/events", "trs/reqs/events"));
        assert!(!topic_matches("trs/+/events", "trs/reqs/other"));
        assert!(!topic_matches("trs/+/events", "trs/a/b/events"));
        assert!(topic_matches("trs/#", "trs/a/b"));
        assert!(topic_matches("a/b", "a/b"));
        assert!(!topic_matches("a/b", "a/b/c"));
    }

    #[test]
    fn broker_urls() {
        assert_eq!(parse_broker_url("mqtt://localhost:1884").unwrap(), ("localhost".into(), 1884));
        assert_eq!(parse_broker_url("tcp://10.0.0.1").unwrap(), ("10.0.0.1".into(), 1883));
        assert!(parse_broker_url("http://x:1").is_err());
        assert!(parse_broker_url("mqtt://:1").is_err());
    }

    #[test]
    fn bus_routes_by_filter_and_injects_faults() {
        let bus = InProcessBus::new();
        let all = bus.subscribe("trs/+/events").unwrap();
        let reqs = bus.subscribe("trs/reqs/events").unwrap();
        bus.publish("trs/design/events", b"d").unwrap();
        bus.publish("trs/reqs/events", b"r").unwrap();
        assert_eq!(all.try_iter().count(), 2);
        assert_eq!(reqs.try_iter().map(|d| d.payload).collect::<Vec<_>>(), vec![b"r".to_vec()]);

        bus.drop_next(1);
        bus.publish("trs/reqs/events", b"lost").unwrap();
        assert_eq!(reqs.try_iter().count(), 0);
        assert_eq!(bus.lost(), 1);

        bus.set_faults(1, 0.0, 1.0);
        bus.publish("trs/reqs/events", b"twice").unwrap();
        assert_eq!(reqs.try_iter().count(), 2);

        bus.set_offline(true);
        assert_eq!(bus.publish("trs/reqs/events", b"x"), Err(TransportError::NotConnected));
    }
}
