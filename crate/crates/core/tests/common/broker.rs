//! A minimal MQTT 3.1.1 broker for tests: CONNECT, SUBSCRIBE, PUBLISH
//! (QoS 0/1) and PINGREQ over plain TCP, one thread per connection. Enough
//! to exercise the real client end to end without an external broker.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use bytes::BytesMut;
use lcq::bridge::topic_matches;
use parking_lot::Mutex;
use rumqttc::{ConnAck, ConnectReturnCode, Packet, PubAck, Publish, QoS, SubAck, SubscribeReasonCode};

const MAX_PACKET: usize = 1 << 20;

struct Session {
    id: u64,
    stream: Mutex<TcpStream>,
    filters: Mutex<Vec<String>>,
    next_pkid: Mutex<u16>,
}

impl Session {
    fn send(&self, packet: Packet) -> bool {
        let mut buf = BytesMut::new();
        if packet.write(&mut buf, MAX_PACKET).is_err() {
            return false;
        }
        self.stream.lock().write_all(&buf).is_ok()
    }

    fn pkid(&self) -> u16 {
        let mut p = self.next_pkid.lock();
        *p = if *p == u16::MAX { 1 } else { *p + 1 };
        *p
    }
}

#[derive(Default)]
struct Shared {
    sessions: Mutex<Vec<Arc<Session>>>,
    published: AtomicU64,
    next_id: AtomicU64,
    stopped: AtomicBool,
}

pub struct MiniBroker {
    addr: SocketAddr,
    shared: Arc<Shared>,
}

impl MiniBroker {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind broker");
        let addr = listener.local_addr().unwrap();
        let shared = Arc::new(Shared::default());
        let s = shared.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                if s.stopped.load(Ordering::Relaxed) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let s = s.clone();
                thread::spawn(move || serve(stream, s));
            }
        });
        MiniBroker { addr, shared }
    }

    pub fn url(&self) -> String {
        format!("mqtt://{}", self.addr)
    }

    /// PUBLISH packets received from clients.
    pub fn published(&self) -> u64 {
        self.shared.published.load(Ordering::Relaxed)
    }

    pub fn connections(&self) -> usize {
        self.shared.sessions.lock().len()
    }

    /// Drops every client connection, as a broker restart would.
    pub fn kick_all(&self) {
        for s in self.shared.sessions.lock().drain(..) {
            let _ = s.stream.lock().shutdown(Shutdown::Both);
        }
    }
}

impl Drop for MiniBroker {
    fn drop(&mut self) {
        self.shared.stopped.store(true, Ordering::Relaxed);
        self.kick_all();
        let _ = TcpStream::connect(self.addr);
    }
}

fn serve(mut stream: TcpStream, shared: Arc<Shared>) {
    let Ok(writer) = stream.try_clone() else { return };
    let session = Arc::new(Session {
        id: shared.next_id.fetch_add(1, Ordering::Relaxed),
        stream: Mutex::new(writer),
        filters: Mutex::new(Vec::new()),
        next_pkid: Mutex::new(0),
    });
    shared.sessions.lock().push(session.clone());
    let mut buf = BytesMut::new();
    let mut chunk = [0u8; 4096];
    'conn: loop {
        loop {
            match Packet::read(&mut buf, MAX_PACKET) {
                Ok(packet) => {
                    if !handle(packet, &session, &shared) {
                        break 'conn;
                    }
                }
                Err(rumqttc::Error::InsufficientBytes(_)) => break,
                Err(_) => break 'conn,
            }
        }
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
        }
    }
    shared.sessions.lock().retain(|s| s.id != session.id);
}

fn handle(packet: Packet, session: &Arc<Session>, shared: &Shared) -> bool {
    match packet {
        Packet::Connect(_) => session.send(Packet::ConnAck(ConnAck::new(ConnectReturnCode::Success, false))),
        Packet::Subscribe(sub) => {
            let codes = sub
                .filters
                .iter()
                .map(|f| {
                    let granted = if f.qos == QoS::AtMostOnce { QoS::AtMostOnce } else { QoS::AtLeastOnce };
                    SubscribeReasonCode::Success(granted)
                })
                .collect();
            session.filters.lock().extend(sub.filters.into_iter().map(|f| f.path));
            session.send(Packet::SubAck(SubAck::new(sub.pkid, codes)))
        }
        Packet::Publish(p) => {
            shared.published.fetch_add(1, Ordering::Relaxed);
            if p.qos == QoS::AtLeastOnce && !session.send(Packet::PubAck(PubAck::new(p.pkid))) {
                return false;
            }
            let targets: Vec<Arc<Session>> = shared
                .sessions
                .lock()
                .iter()
                .filter(|s| s.filters.lock().iter().any(|f| topic_matches(f, &p.topic)))
                .cloned()
                .collect();
            for t in targets {
                let mut out = Publish::new(p.topic.clone(), QoS::AtLeastOnce, p.payload.to_vec());
                out.pkid = t.pkid();
                t.send(Packet::Publish(out));
            }
            true
        }
        Packet::PingReq => session.send(Packet::PingResp),
        Packet::Disconnect => false,
        _ => true,
    }
}
