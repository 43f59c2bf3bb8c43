//! Key Provisioning Service: one pre-established key stream per peer node,
//! served to applications through a single REST-style GET on the hot path.
//!
//! REST binding (frozen): `GET /keys/{peer-node-id}` consumes the next
//! unconsumed chunk; `GET /keys/{peer-node-id}?index=N` fetches the chunk at
//! explicit coordinates (the responder path of a handshake). The response is
//! a JSON document:
//!
//! ```json
//! {"ksid": "<uuid>", "index": 0, "key": "<base64>", "status": 0}
//! ```
//!
//! `status` 0 is success; nonzero values reuse the key-delivery status codes
//! (1 = no provisioned stream for the peer, 5 = stream exhausted, ...). Each
//! successful GET triggers exactly one `get_key` against the local LKMS and
//! never an `open_connect`; those happened at deploy time.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::etsi004::{Etsi004Error, Ksid, Lkms, QoS};
use crate::qkd::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KpsError {
    #[error("no provisioned stream for peer {0}")]
    NoStream(NodeId),
    #[error(transparent)]
    Stream(#[from] Etsi004Error),
}

/// One provisioned stream toward a peer node.
#[derive(Debug, Clone)]
pub struct ProvisionedStream {
    pub peer: NodeId,
    pub ksid: Ksid,
    /// Next index this side expects to allocate; advances monotonically.
    pub next_index: u64,
    pub qos: QoS,
    pub opened_at: Instant,
}

/// A key served by the KPS, with the coordinates the TLS peer needs to fetch
/// the matching chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvisionedKey {
    pub key: Vec<u8>,
    pub ksid: Ksid,
    pub index: u64,
}

/// Maintenance events emitted by the replenish policy, also rendered as
/// structured log lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KpsEvent {
    LowWater { peer: NodeId, remaining: usize },
    Expired { peer: NodeId, ksid: Ksid },
    Reopened { peer: NodeId, ksid: Ksid },
}

impl KpsEvent {
    pub fn as_log_line(&self) -> String {
        match self {
            KpsEvent::LowWater { peer, remaining } => {
                format!("kps_event=low_water peer={peer} remaining={remaining}")
            }
            KpsEvent::Expired { peer, ksid } => {
                format!("kps_event=expired peer={peer} ksid={ksid}")
            }
            KpsEvent::Reopened { peer, ksid } => {
                format!("kps_event=reopened peer={peer} ksid={ksid}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KpsCounters {
    /// REST GETs served (successful or not).
    pub gets: u64,
}

/// JSON schema of the REST GET response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpsKeyDocument {
    pub ksid: String,
    pub index: u64,
    pub key: String,
    pub status: u8,
}

pub struct Kps {
    node: NodeId,
    lkms: Arc<Lkms>,
    streams: Mutex<BTreeMap<NodeId, ProvisionedStream>>,
    gets: AtomicU64,
    latency: Mutex<Duration>,
    /// Streams whose headroom drops below this emit a low-water event.
    low_water_chunks: AtomicU64,
}

impl Kps {
    pub fn new(node: NodeId, lkms: Arc<Lkms>) -> Self {
        Kps {
            node,
            lkms,
            streams: Mutex::new(BTreeMap::new()),
            gets: AtomicU64::new(0),
            latency: Mutex::new(Duration::ZERO),
            low_water_chunks: AtomicU64::new(4),
        }
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    /// The LKMS endpoint this service fronts.
    pub fn lkms(&self) -> &Arc<Lkms> {
        &self.lkms
    }

    pub fn set_latency(&self, latency: Duration) {
        *self.latency.lock().unwrap() = latency;
    }

    pub fn set_low_water(&self, chunks: u64) {
        self.low_water_chunks.store(chunks, Ordering::Relaxed);
    }

    fn simulate_latency(&self) {
        let l = *self.latency.lock().unwrap();
        if !l.is_zero() {
            std::thread::sleep(l);
        }
    }

    /// Installs a stream established at deploy time.
    pub fn install_stream(&self, peer: NodeId, ksid: Ksid, qos: QoS) {
        self.streams.lock().unwrap().insert(
            peer.clone(),
            ProvisionedStream {
                peer,
                ksid,
                next_index: 0,
                qos,
                opened_at: Instant::now(),
            },
        );
    }

    pub fn stream_for_peer(&self, peer: &NodeId) -> Option<ProvisionedStream> {
        self.streams.lock().unwrap().get(peer).cloned()
    }

    /// Reverse lookup used by the responder path of a handshake.
    pub fn peer_of_ksid(&self, ksid: Ksid) -> Option<NodeId> {
        self.streams
            .lock()
            .unwrap()
            .values()
            .find(|s| s.ksid == ksid)
            .map(|s| s.peer.clone())
    }

    pub fn remove_stream_by_ksid(&self, ksid: Ksid) {
        self.streams.lock().unwrap().retain(|_, s| s.ksid != ksid);
    }

    /// Serves the next unconsumed chunk toward `peer`. Exactly one LKMS
    /// `get_key` per call; the hot path contains no `open_connect`.
    pub fn get_provisioned_key(&self, peer: &NodeId) -> Result<ProvisionedKey, KpsError> {
        self.gets.fetch_add(1, Ordering::Relaxed);
        self.simulate_latency();
        let ksid = {
            let streams = self.streams.lock().unwrap();
            streams
                .get(peer)
                .ok_or_else(|| KpsError::NoStream(peer.clone()))?
                .ksid
        };
        let (index, key) = self.lkms.get_key_next(ksid)?;
        let mut streams = self.streams.lock().unwrap();
        if let Some(s) = streams.get_mut(peer) {
            s.next_index = s.next_index.max(index + 1);
        }
        Ok(ProvisionedKey { key, ksid, index })
    }

    /// Serves the chunk at explicit coordinates, keeping the allocation
    /// counter in lockstep with the peer.
    pub fn get_provisioned_key_at(
        &self,
        peer: &NodeId,
        index: u64,
    ) -> Result<ProvisionedKey, KpsError> {
        self.gets.fetch_add(1, Ordering::Relaxed);
        self.simulate_latency();
        let ksid = {
            let streams = self.streams.lock().unwrap();
            streams
                .get(peer)
                .ok_or_else(|| KpsError::NoStream(peer.clone()))?
                .ksid
        };
        let key = self.lkms.get_key(ksid, index)?;
        let mut streams = self.streams.lock().unwrap();
        if let Some(s) = streams.get_mut(peer) {
            s.next_index = s.next_index.max(index + 1);
        }
        Ok(ProvisionedKey { key, ksid, index })
    }

    /// One maintenance pass: low-water warnings for streams running out of
    /// buffered material and expiry events for streams past their TTL. The
    /// network layer re-opens expired streams.
    pub fn replenish_policy_tick(&self) -> Vec<KpsEvent> {
        let low_water = self.low_water_chunks.load(Ordering::Relaxed) as usize;
        let mut events = Vec::new();
        let streams = self.streams.lock().unwrap();
        for s in streams.values() {
            if let Some(headroom) = self.lkms.hub().stream_headroom(s.ksid) {
                if headroom < low_water {
                    events.push(KpsEvent::LowWater {
                        peer: s.peer.clone(),
                        remaining: headroom,
                    });
                }
            }
            if s.opened_at.elapsed() >= Duration::from_secs(s.qos.ttl_secs) {
                events.push(KpsEvent::Expired {
                    peer: s.peer.clone(),
                    ksid: s.ksid,
                });
            }
        }
        events
    }

    pub fn counters(&self) -> KpsCounters {
        KpsCounters {
            gets: self.gets.load(Ordering::Relaxed),
        }
    }

    /// Handles `GET /keys/{peer}[?index=N]`, returning the HTTP status code
    /// and the JSON document.
    pub fn handle_http_get(&self, path_and_query: &str) -> (u16, KpsKeyDocument) {
        let (path, query) = match path_and_query.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (path_and_query, None),
        };
        let Some(peer) = path.strip_prefix("/keys/").filter(|p| !p.is_empty()) else {
            return (
                404,
                KpsKeyDocument {
                    ksid: String::new(),
                    index: 0,
                    key: String::new(),
                    status: 7,
                },
            );
        };
        let peer = NodeId::new(peer);
        let index = query.and_then(|q| {
            q.split('&')
                .find_map(|kv| kv.strip_prefix("index="))
                .and_then(|v| v.parse::<u64>().ok())
        });
        let result = match index {
            Some(i) => self.get_provisioned_key_at(&peer, i),
            None => self.get_provisioned_key(&peer),
        };
        match result {
            Ok(k) => (
                200,
                KpsKeyDocument {
                    ksid: k.ksid.to_string(),
                    index: k.index,
                    key: BASE64.encode(&k.key),
                    status: 0,
                },
            ),
            Err(KpsError::NoStream(_)) => (
                404,
                KpsKeyDocument {
                    ksid: String::new(),
                    index: 0,
                    key: String::new(),
                    status: 1,
                },
            ),
            Err(KpsError::Stream(e)) => (
                503,
                KpsKeyDocument {
                    ksid: String::new(),
                    index: 0,
                    key: String::new(),
                    status: e.status(),
                },
            ),
        }
    }

    /// Minimal HTTP/1.1 server loop for one connection.
    pub fn serve_http<S: std::io::Read + std::io::Write>(
        &self,
        mut stream: S,
    ) -> std::io::Result<()> {
        let mut buf = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            buf.clear();
            // Read the request head.
            loop {
                match stream.read(&mut byte) {
                    Ok(0) => return Ok(()),
                    Ok(_) => buf.push(byte[0]),
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
                    Err(e) => return Err(e),
                }
                if buf.ends_with(b"\r\n\r\n") {
                    break;
                }
            }
            let head = String::from_utf8_lossy(&buf);
            let request_line = head.lines().next().unwrap_or_default();
            let mut parts = request_line.split_whitespace();
            let (m, target) = (parts.next().unwrap_or(""), parts.next().unwrap_or("/"));
            let (code, doc) = if m == "GET" {
                self.handle_http_get(target)
            } else {
                (
                    405,
                    KpsKeyDocument {
                        ksid: String::new(),
                        index: 0,
                        key: String::new(),
                        status: 7,
                    },
                )
            };
            let body = serde_json::to_string(&doc).expect("document serializes");
            let reason = match code {
                200 => "OK",
                404 => "Not Found",
                405 => "Method Not Allowed",
                _ => "Service Unavailable",
            };
            write!(
                stream,
                "HTTP/1.1 {code} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
                body.len()
            )?;
            stream.flush()?;
        }
    }
}
