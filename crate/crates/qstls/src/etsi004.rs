//! ETSI GS QKD 004-style key delivery: session establishment
//! (`open_connect` → KSID), indexed key retrieval (`get_key`), and teardown
//! (`close`), plus the frozen wire binding for running the interface over a
//! reliable byte stream.
//!
//! Application identifiers follow the `app@node.domain` convention. A key
//! stream is synchronized between the two LKMS endpoints of a node pair:
//! chunk `i` has the same value on both sides, each side consumes an index at
//! most once, and `open_connect` is the only call that blocks on the peer
//! (`get_key` blocks only up to the stream's QoS timeout).
//!
//! Wire binding (all integers big-endian): each message is
//! `u32 length || method (u8) || fields`, with responses tagged
//! `method | 0x80`. Parameters are TLVs (`tag u8 || len u16 || value`).
//! Status codes: 0 = success, 1 = peer unknown, 2 = no path, 3 = timeout,
//! 4 = unknown KSID, 5 = stream exhausted, 6 = index consumed,
//! 7 = malformed, 8 = invalid QoS.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand_core::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::SessionRng;
use crate::qkd::{NodeId, PathRoute, QkdFabric};
use crate::wire::{Reader, WireError};

/// URI-style identifier of a destination application at a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QkdAppId(pub String);

impl QkdAppId {
    pub fn new(id: impl Into<String>) -> Self {
        QkdAppId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QkdAppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Key Stream ID: a 16-byte identifier shared by the two peers of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ksid([u8; 16]);

impl Ksid {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Ksid(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// Random KSID with UUIDv4 version and variant bits.
    pub fn random(rng: &mut SessionRng) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        b[6] = (b[6] & 0x0F) | 0x40;
        b[8] = (b[8] & 0x3F) | 0x80;
        Ksid(b)
    }
}

impl fmt::Display for Ksid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        for (i, byte) in b.iter().enumerate() {
            if matches!(i, 4 | 6 | 8 | 10) {
                write!(f, "-")?;
            }
            write!(f, "{byte:02x}")?;
        }
        Ok(())
    }
}

/// Quality-of-service parameters of a key stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QoS {
    /// Key chunk size in bytes; 16, 24 or 32.
    pub key_chunk_size: usize,
    /// How long `get_key` may block waiting for material, in milliseconds.
    pub timeout_ms: u64,
    /// Stream time-to-live in seconds (enforced by the provisioning layer).
    pub ttl_secs: u64,
}

impl QoS {
    pub fn new(key_chunk_size: usize, timeout_ms: u64, ttl_secs: u64) -> Self {
        QoS {
            key_chunk_size,
            timeout_ms,
            ttl_secs,
        }
    }

    pub fn valid(&self) -> bool {
        matches!(self.key_chunk_size, 16 | 24 | 32)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Etsi004Error {
    #[error("peer application unknown")]
    PeerUnknown,
    #[error("no QKD path between the endpoints")]
    NoPath,
    #[error("timed out waiting for the peer to open the stream")]
    Timeout,
    #[error("unknown key stream id")]
    UnknownKsid,
    #[error("key stream exhausted within the QoS timeout")]
    StreamExhausted,
    #[error("key index already consumed on this side")]
    IndexConsumed,
    #[error("malformed request: {0}")]
    Malformed(WireError),
    #[error("invalid QoS parameters")]
    InvalidQos,
}

impl Etsi004Error {
    pub fn status(&self) -> u8 {
        match self {
            Etsi004Error::PeerUnknown => 1,
            Etsi004Error::NoPath => 2,
            Etsi004Error::Timeout => 3,
            Etsi004Error::UnknownKsid => 4,
            Etsi004Error::StreamExhausted => 5,
            Etsi004Error::IndexConsumed => 6,
            Etsi004Error::Malformed(_) => 7,
            Etsi004Error::InvalidQos => 8,
        }
    }

    pub fn from_status(status: u8) -> Option<Self> {
        Some(match status {
            1 => Etsi004Error::PeerUnknown,
            2 => Etsi004Error::NoPath,
            3 => Etsi004Error::Timeout,
            4 => Etsi004Error::UnknownKsid,
            5 => Etsi004Error::StreamExhausted,
            6 => Etsi004Error::IndexConsumed,
            7 => Etsi004Error::Malformed(WireError::Truncated),
            8 => Etsi004Error::InvalidQos,
            _ => return None,
        })
    }
}

/// Resolves application ids to nodes and node pairs to QKD routes. The SDN
/// controller implements this; tests may substitute fixed tables.
pub trait PathResolver: Send + Sync {
    fn node_of_app(&self, app: &QkdAppId) -> Option<NodeId>;
    fn route(&self, a: &NodeId, b: &NodeId) -> Option<PathRoute>;
}

// ---------------------------------------------------------------------------
// Stream hub shared by all LKMS endpoints of a deployment.
// ---------------------------------------------------------------------------

struct StreamState {
    nodes: (NodeId, NodeId),
    qos: QoS,
    route: PathRoute,
    materialized: Vec<Vec<u8>>,
    delivered: [BTreeSet<u64>; 2],
    opened_at: Instant,
}

impl StreamState {
    fn side_of(&self, node: &NodeId) -> Option<usize> {
        if &self.nodes.0 == node {
            Some(0)
        } else if &self.nodes.1 == node {
            Some(1)
        } else {
            None
        }
    }
}

enum PendingState {
    Waiting,
    Matched,
}

struct PendingOpen {
    pair: (QkdAppId, QkdAppId),
    opener: NodeId,
    ksid: Ksid,
    state: PendingState,
}

struct HubState {
    streams: HashMap<Ksid, StreamState>,
    pendings: Vec<PendingOpen>,
    rng: SessionRng,
}

/// Shared LKMS substrate: stream table plus the `open_connect` rendezvous.
pub struct LkmsHub {
    fabric: Arc<QkdFabric>,
    resolver: Arc<dyn PathResolver>,
    state: Mutex<HubState>,
    opened: Condvar,
}

fn unordered(a: &QkdAppId, b: &QkdAppId) -> (QkdAppId, QkdAppId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl LkmsHub {
    pub fn new(fabric: Arc<QkdFabric>, resolver: Arc<dyn PathResolver>, seed: Option<u64>) -> Self {
        use rand_chacha::rand_core::SeedableRng;
        let rng = match seed {
            Some(s) => SessionRng::seed_from_u64(s),
            None => crate::provider::os_rng(),
        };
        LkmsHub {
            fabric,
            resolver,
            state: Mutex::new(HubState {
                streams: HashMap::new(),
                pendings: Vec::new(),
                rng,
            }),
            opened: Condvar::new(),
        }
    }

    pub fn fabric(&self) -> &Arc<QkdFabric> {
        &self.fabric
    }

    fn open_connect(
        &self,
        local: &NodeId,
        source: &QkdAppId,
        destination: &QkdAppId,
        qos: &QoS,
    ) -> Result<Ksid, Etsi004Error> {
        if !qos.valid() {
            return Err(Etsi004Error::InvalidQos);
        }
        if self.resolver.node_of_app(source).as_ref() != Some(local) {
            return Err(Etsi004Error::PeerUnknown);
        }
        let peer_node = self
            .resolver
            .node_of_app(destination)
            .ok_or(Etsi004Error::PeerUnknown)?;
        let route = self
            .resolver
            .route(local, &peer_node)
            .ok_or(Etsi004Error::NoPath)?;
        for link in route.links() {
            let cfg = self.fabric.link_config(link).ok_or(Etsi004Error::NoPath)?;
            if cfg.chunk_size != qos.key_chunk_size {
                return Err(Etsi004Error::NoPath);
            }
        }

        let pair = unordered(source, destination);
        let deadline = Instant::now() + Duration::from_millis(qos.timeout_ms);
        let mut st = self.state.lock().unwrap();

        // A waiting open from the peer side completes the rendezvous.
        if let Some(pos) = st
            .pendings
            .iter()
            .position(|p| p.pair == pair && p.opener != *local && matches!(p.state, PendingState::Waiting))
        {
            let ksid = st.pendings[pos].ksid;
            let opener = st.pendings[pos].opener.clone();
            st.pendings[pos].state = PendingState::Matched;
            st.streams.insert(
                ksid,
                StreamState {
                    nodes: (opener, local.clone()),
                    qos: qos.clone(),
                    route,
                    materialized: Vec::new(),
                    delivered: [BTreeSet::new(), BTreeSet::new()],
                    opened_at: Instant::now(),
                },
            );
            self.opened.notify_all();
            return Ok(ksid);
        }

        // First side in: publish a pending open and block until matched.
        let ksid = Ksid::random(&mut st.rng);
        st.pendings.push(PendingOpen {
            pair: pair.clone(),
            opener: local.clone(),
            ksid,
            state: PendingState::Waiting,
        });
        loop {
            if let Some(pos) = st
                .pendings
                .iter()
                .position(|p| p.ksid == ksid && matches!(p.state, PendingState::Matched))
            {
                st.pendings.remove(pos);
                return Ok(ksid);
            }
            let now = Instant::now();
            if now >= deadline {
                st.pendings.retain(|p| p.ksid != ksid);
                return Err(Etsi004Error::Timeout);
            }
            let (guard, _) = self.opened.wait_timeout(st, deadline - now).unwrap();
            st = guard;
        }
    }

    /// Attempts to materialize chunks up to `index`; Ok(false) means more
    /// production is needed.
    fn try_materialize(&self, st: &mut HubState, ksid: Ksid, index: u64) -> Result<bool, Etsi004Error> {
        let stream = st.streams.get_mut(&ksid).ok_or(Etsi004Error::UnknownKsid)?;
        while (stream.materialized.len() as u64) <= index {
            match &stream.route {
                PathRoute::Direct(link) => match self.fabric.consume_chunk(*link) {
                    Some(chunk) => stream.materialized.push(chunk),
                    None => return Ok(false),
                },
                PathRoute::Relay(path) => {
                    let k_enc = self.fabric.qrng_generate(stream.qos.key_chunk_size);
                    match self.fabric.relay_transport(path, &k_enc) {
                        Ok(outcome) => stream.materialized.push(outcome.recovered),
                        Err(_) => return Ok(false),
                    }
                }
            }
        }
        Ok(true)
    }

    fn get_key(&self, local: &NodeId, ksid: Ksid, index: u64) -> Result<Vec<u8>, Etsi004Error> {
        let deadline = {
            let st = self.state.lock().unwrap();
            let stream = st.streams.get(&ksid).ok_or(Etsi004Error::UnknownKsid)?;
            stream.side_of(local).ok_or(Etsi004Error::UnknownKsid)?;
            Instant::now() + Duration::from_millis(stream.qos.timeout_ms)
        };
        loop {
            {
                let mut st = self.state.lock().unwrap();
                let stream = st.streams.get(&ksid).ok_or(Etsi004Error::UnknownKsid)?;
                let side = stream.side_of(local).ok_or(Etsi004Error::UnknownKsid)?;
                if stream.delivered[side].contains(&index) {
                    return Err(Etsi004Error::IndexConsumed);
                }
                if self.try_materialize(&mut st, ksid, index)? {
                    let stream = st.streams.get_mut(&ksid).expect("checked above");
                    stream.delivered[side].insert(index);
                    return Ok(stream.materialized[index as usize].clone());
                }
            }
            if Instant::now() >= deadline {
                return Err(Etsi004Error::StreamExhausted);
            }
            self.fabric.wait_for_production(deadline);
        }
    }

    /// Consumes the lowest unconsumed index on this side.
    fn get_key_next(&self, local: &NodeId, ksid: Ksid) -> Result<(u64, Vec<u8>), Etsi004Error> {
        let index = {
            let st = self.state.lock().unwrap();
            let stream = st.streams.get(&ksid).ok_or(Etsi004Error::UnknownKsid)?;
            let side = stream.side_of(local).ok_or(Etsi004Error::UnknownKsid)?;
            let mut i = 0u64;
            while stream.delivered[side].contains(&i) {
                i += 1;
            }
            i
        };
        let chunk = self.get_key(local, ksid, index)?;
        Ok((index, chunk))
    }

    fn close(&self, ksid: Ksid) -> Result<(), Etsi004Error> {
        let removed = {
            let mut st = self.state.lock().unwrap();
            st.streams.remove(&ksid).is_some()
        };
        if !removed {
            return Err(Etsi004Error::UnknownKsid);
        }
        // An in-flight get_key on the peer may be waiting for production;
        // wake it so it observes the teardown now rather than at timeout.
        self.fabric.nudge_waiters();
        Ok(())
    }

    pub fn stream_nodes(&self, ksid: Ksid) -> Option<(NodeId, NodeId)> {
        self.state
            .lock()
            .unwrap()
            .streams
            .get(&ksid)
            .map(|s| s.nodes.clone())
    }

    pub fn stream_age(&self, ksid: Ksid) -> Option<Duration> {
        self.state
            .lock()
            .unwrap()
            .streams
            .get(&ksid)
            .map(|s| s.opened_at.elapsed())
    }

    /// Chunks the stream could still serve without new production.
    pub fn stream_headroom(&self, ksid: Ksid) -> Option<usize> {
        let st = self.state.lock().unwrap();
        let stream = st.streams.get(&ksid)?;
        Some(
            stream
                .route
                .links()
                .iter()
                .map(|l| self.fabric.buffered_chunks(*l))
                .min()
                .unwrap_or(0),
        )
    }

    /// Closes every stream whose route traverses `link`; returns their ids.
    pub fn close_streams_using(&self, link: crate::qkd::LinkId) -> Vec<Ksid> {
        let mut st = self.state.lock().unwrap();
        let doomed: Vec<Ksid> = st
            .streams
            .iter()
            .filter(|(_, s)| s.route.links().contains(&link))
            .map(|(k, _)| *k)
            .collect();
        for k in &doomed {
            st.streams.remove(k);
        }
        doomed
    }

    pub fn open_stream_count(&self) -> usize {
        self.state.lock().unwrap().streams.len()
    }
}

// ---------------------------------------------------------------------------
// Per-node LKMS endpoint.
// ---------------------------------------------------------------------------

/// Instrumentation snapshot of one LKMS endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LkmsCounters {
    pub open_connect: u64,
    pub get_key: u64,
    pub close: u64,
}

/// The ETSI 004 northbound of one node's local key management system.
pub struct Lkms {
    node: NodeId,
    hub: Arc<LkmsHub>,
    open_connect_calls: AtomicU64,
    get_key_calls: AtomicU64,
    close_calls: AtomicU64,
    /// Injectable per-request transport latency for controlled benchmarks.
    latency: Mutex<Duration>,
}

impl Lkms {
    pub fn new(node: NodeId, hub: Arc<LkmsHub>) -> Self {
        Lkms {
            node,
            hub,
            open_connect_calls: AtomicU64::new(0),
            get_key_calls: AtomicU64::new(0),
            close_calls: AtomicU64::new(0),
            latency: Mutex::new(Duration::ZERO),
        }
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    pub fn hub(&self) -> &Arc<LkmsHub> {
        &self.hub
    }

    pub fn set_latency(&self, latency: Duration) {
        *self.latency.lock().unwrap() = latency;
    }

    fn simulate_latency(&self) {
        let l = *self.latency.lock().unwrap();
        if !l.is_zero() {
            std::thread::sleep(l);
        }
    }

    /// Establishes a synchronized key stream with the peer application,
    /// blocking until the peer's own `open_connect` arrives or the QoS
    /// timeout passes.
    pub fn open_connect(
        &self,
        source: &QkdAppId,
        destination: &QkdAppId,
        qos: &QoS,
    ) -> Result<Ksid, Etsi004Error> {
        self.open_connect_calls.fetch_add(1, Ordering::Relaxed);
        self.simulate_latency();
        self.hub.open_connect(&self.node, source, destination, qos)
    }

    /// Retrieves the `index`-th chunk of the stream. The same `(ksid, index)`
    /// returns identical bytes on the two peers and is delivered at most once
    /// per side.
    pub fn get_key(&self, ksid: Ksid, index: u64) -> Result<Vec<u8>, Etsi004Error> {
        self.get_key_calls.fetch_add(1, Ordering::Relaxed);
        self.simulate_latency();
        self.hub.get_key(&self.node, ksid, index)
    }

    /// Consumes the lowest unconsumed index on this side.
    pub fn get_key_next(&self, ksid: Ksid) -> Result<(u64, Vec<u8>), Etsi004Error> {
        self.get_key_calls.fetch_add(1, Ordering::Relaxed);
        self.simulate_latency();
        self.hub.get_key_next(&self.node, ksid)
    }

    pub fn close(&self, ksid: Ksid) -> Result<(), Etsi004Error> {
        self.close_calls.fetch_add(1, Ordering::Relaxed);
        self.hub.close(ksid)
    }

    pub fn counters(&self) -> LkmsCounters {
        LkmsCounters {
            open_connect: self.open_connect_calls.load(Ordering::Relaxed),
            get_key: self.get_key_calls.load(Ordering::Relaxed),
            close: self.close_calls.load(Ordering::Relaxed),
        }
    }
}

// ---------------------------------------------------------------------------
// Wire binding.
// ---------------------------------------------------------------------------

pub mod method {
    pub const OPEN_CONNECT: u8 = 0x01;
    pub const GET_KEY: u8 = 0x02;
    pub const CLOSE: u8 = 0x03;
    pub const RESPONSE: u8 = 0x80;
}

mod param_tag {
    pub const SOURCE: u8 = 0x01;
    pub const DESTINATION: u8 = 0x02;
    pub const QOS: u8 = 0x03;
    pub const INDEX: u8 = 0x04;
    pub const KEY: u8 = 0x05;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Etsi004Request {
    OpenConnect {
        source: QkdAppId,
        destination: QkdAppId,
        qos: QoS,
    },
    GetKey {
        ksid: Ksid,
        index: u64,
    },
    Close {
        ksid: Ksid,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Etsi004Response {
    OpenConnect { status: u8, ksid: Option<Ksid> },
    GetKey { status: u8, key: Option<Vec<u8>> },
    Close { status: u8 },
}

fn put_tlv(out: &mut Vec<u8>, tag: u8, value: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(value.len() as u16).to_be_bytes());
    out.extend_from_slice(value);
}

impl Etsi004Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Etsi004Request::OpenConnect {
                source,
                destination,
                qos,
            } => {
                out.push(method::OPEN_CONNECT);
                put_tlv(&mut out, param_tag::SOURCE, source.as_str().as_bytes());
                put_tlv(
                    &mut out,
                    param_tag::DESTINATION,
                    destination.as_str().as_bytes(),
                );
                let mut q = Vec::with_capacity(10);
                q.extend_from_slice(&(qos.key_chunk_size as u16).to_be_bytes());
                q.extend_from_slice(&(qos.timeout_ms as u32).to_be_bytes());
                q.extend_from_slice(&(qos.ttl_secs as u32).to_be_bytes());
                put_tlv(&mut out, param_tag::QOS, &q);
            }
            Etsi004Request::GetKey { ksid, index } => {
                out.push(method::GET_KEY);
                out.extend_from_slice(ksid.as_bytes());
                put_tlv(&mut out, param_tag::INDEX, &index.to_be_bytes());
            }
            Etsi004Request::Close { ksid } => {
                out.push(method::CLOSE);
                out.extend_from_slice(ksid.as_bytes());
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let m = r.u8()?;
        match m {
            method::OPEN_CONNECT => {
                let mut source = None;
                let mut destination = None;
                let mut qos = None;
                while r.remaining() > 0 {
                    let tag = r.u8()?;
                    let value = r.vec16()?;
                    let mut vr = Reader::new(&value);
                    match tag {
                        param_tag::SOURCE => {
                            source = Some(QkdAppId::new(
                                String::from_utf8(value.clone()).map_err(|_| WireError::BadText)?,
                            ))
                        }
                        param_tag::DESTINATION => {
                            destination = Some(QkdAppId::new(
                                String::from_utf8(value.clone()).map_err(|_| WireError::BadText)?,
                            ))
                        }
                        param_tag::QOS => {
                            let chunk = vr.u16()? as usize;
                            let timeout = u32::from_be_bytes(vr.take(4)?.try_into().unwrap());
                            let ttl = u32::from_be_bytes(vr.take(4)?.try_into().unwrap());
                            vr.finish()?;
                            qos = Some(QoS::new(chunk, timeout as u64, ttl as u64));
                        }
                        other => {
                            return Err(WireError::BadTag {
                                context: "open_connect param",
                                tag: other,
                            })
                        }
                    }
                }
                match (source, destination, qos) {
                    (Some(source), Some(destination), Some(qos)) => Ok(Etsi004Request::OpenConnect {
                        source,
                        destination,
                        qos,
                    }),
                    _ => Err(WireError::Truncated),
                }
            }
            method::GET_KEY => {
                let ksid = Ksid::from_bytes(r.take(16)?.try_into().unwrap());
                let tag = r.u8()?;
                if tag != param_tag::INDEX {
                    return Err(WireError::BadTag {
                        context: "get_key param",
                        tag,
                    });
                }
                let value = r.vec16()?;
                r.finish()?;
                let mut vr = Reader::new(&value);
                let index = vr.u64()?;
                vr.finish()?;
                Ok(Etsi004Request::GetKey { ksid, index })
            }
            method::CLOSE => {
                let ksid = Ksid::from_bytes(r.take(16)?.try_into().unwrap());
                r.finish()?;
                Ok(Etsi004Request::Close { ksid })
            }
            other => Err(WireError::BadTag {
                context: "etsi004 method",
                tag: other,
            }),
        }
    }
}

impl Etsi004Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Etsi004Response::OpenConnect { status, ksid } => {
                out.push(method::OPEN_CONNECT | method::RESPONSE);
                out.push(*status);
                if let Some(k) = ksid {
                    out.extend_from_slice(k.as_bytes());
                }
            }
            Etsi004Response::GetKey { status, key } => {
                out.push(method::GET_KEY | method::RESPONSE);
                out.push(*status);
                if let Some(k) = key {
                    put_tlv(&mut out, param_tag::KEY, k);
                }
            }
            Etsi004Response::Close { status } => {
                out.push(method::CLOSE | method::RESPONSE);
                out.push(*status);
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let m = r.u8()?;
        let status = r.u8()?;
        match m {
            m if m == method::OPEN_CONNECT | method::RESPONSE => {
                let ksid = if r.remaining() > 0 {
                    Some(Ksid::from_bytes(r.take(16)?.try_into().unwrap()))
                } else {
                    None
                };
                r.finish()?;
                Ok(Etsi004Response::OpenConnect { status, ksid })
            }
            m if m == method::GET_KEY | method::RESPONSE => {
                let key = if r.remaining() > 0 {
                    let tag = r.u8()?;
                    if tag != param_tag::KEY {
                        return Err(WireError::BadTag {
                            context: "get_key response param",
                            tag,
                        });
                    }
                    Some(r.vec16()?)
                } else {
                    None
                };
                r.finish()?;
                Ok(Etsi004Response::GetKey { status, key })
            }
            m if m == method::CLOSE | method::RESPONSE => {
                r.finish()?;
                Ok(Etsi004Response::Close { status })
            }
            other => Err(WireError::BadTag {
                context: "etsi004 response method",
                tag: other,
            }),
        }
    }
}

/// Writes one length-prefixed frame.
pub fn write_frame(w: &mut impl Write, body: &[u8]) -> std::io::Result<()> {
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)
}

/// Reads one length-prefixed frame.
pub fn read_frame(r: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut body = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut body)?;
    Ok(body)
}

/// Server side of the wire binding, fronting one LKMS endpoint.
pub struct Etsi004Server {
    lkms: Arc<Lkms>,
}

impl Etsi004Server {
    pub fn new(lkms: Arc<Lkms>) -> Self {
        Etsi004Server { lkms }
    }

    /// Handles one encoded request frame and returns the response frame body.
    pub fn handle(&self, frame: &[u8]) -> Vec<u8> {
        match Etsi004Request::decode(frame) {
            Ok(Etsi004Request::OpenConnect {
                source,
                destination,
                qos,
            }) => match self.lkms.open_connect(&source, &destination, &qos) {
                Ok(ksid) => Etsi004Response::OpenConnect {
                    status: 0,
                    ksid: Some(ksid),
                },
                Err(e) => Etsi004Response::OpenConnect {
                    status: e.status(),
                    ksid: None,
                },
            }
            .encode(),
            Ok(Etsi004Request::GetKey { ksid, index }) => match self.lkms.get_key(ksid, index) {
                Ok(key) => Etsi004Response::GetKey {
                    status: 0,
                    key: Some(key),
                },
                Err(e) => Etsi004Response::GetKey {
                    status: e.status(),
                    key: None,
                },
            }
            .encode(),
            Ok(Etsi004Request::Close { ksid }) => match self.lkms.close(ksid) {
                Ok(()) => Etsi004Response::Close { status: 0 },
                Err(e) => Etsi004Response::Close { status: e.status() },
            }
            .encode(),
            Err(e) => Etsi004Response::Close {
                status: Etsi004Error::Malformed(e).status(),
            }
            .encode(),
        }
    }

    /// Serves frames from a byte stream until it closes.
    pub fn serve_stream<S: Read + Write>(&self, mut stream: S) -> std::io::Result<()> {
        loop {
            let frame = match read_frame(&mut stream) {
                Ok(f) => f,
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
                Err(e) => return Err(e),
            };
            let resp = self.handle(&frame);
            write_frame(&mut stream, &resp)?;
        }
    }
}

/// Client side of the wire binding over any reliable byte stream.
pub struct Etsi004Client<S: Read + Write> {
    stream: S,
}

impl<S: Read + Write> Etsi004Client<S> {
    pub fn new(stream: S) -> Self {
        Etsi004Client { stream }
    }

    fn roundtrip(&mut self, req: &Etsi004Request) -> Result<Etsi004Response, Etsi004Error> {
        write_frame(&mut self.stream, &req.encode())
            .map_err(|_| Etsi004Error::Malformed(WireError::Truncated))?;
        let frame = read_frame(&mut self.stream)
            .map_err(|_| Etsi004Error::Malformed(WireError::Truncated))?;
        Etsi004Response::decode(&frame).map_err(Etsi004Error::Malformed)
    }

    pub fn open_connect(
        &mut self,
        source: &QkdAppId,
        destination: &QkdAppId,
        qos: &QoS,
    ) -> Result<Ksid, Etsi004Error> {
        match self.roundtrip(&Etsi004Request::OpenConnect {
            source: source.clone(),
            destination: destination.clone(),
            qos: qos.clone(),
        })? {
            Etsi004Response::OpenConnect {
                status: 0,
                ksid: Some(ksid),
            } => Ok(ksid),
            Etsi004Response::OpenConnect { status, .. } => Err(Etsi004Error::from_status(status)
                .unwrap_or(Etsi004Error::Malformed(WireError::Truncated))),
            _ => Err(Etsi004Error::Malformed(WireError::Truncated)),
        }
    }

    pub fn get_key(&mut self, ksid: Ksid, index: u64) -> Result<Vec<u8>, Etsi004Error> {
        match self.roundtrip(&Etsi004Request::GetKey { ksid, index })? {
            Etsi004Response::GetKey {
                status: 0,
                key: Some(key),
            } => Ok(key),
            Etsi004Response::GetKey { status, .. } => Err(Etsi004Error::from_status(status)
                .unwrap_or(Etsi004Error::Malformed(WireError::Truncated))),
            _ => Err(Etsi004Error::Malformed(WireError::Truncated)),
        }
    }

    pub fn close(&mut self, ksid: Ksid) -> Result<(), Etsi004Error> {
        match self.roundtrip(&Etsi004Request::Close { ksid })? {
            Etsi004Response::Close { status: 0 } => Ok(()),
            Etsi004Response::Close { status } => Err(Etsi004Error::from_status(status)
                .unwrap_or(Etsi004Error::Malformed(WireError::Truncated))),
            _ => Err(Etsi004Error::Malformed(WireError::Truncated)),
        }
    }
}
