//! Simulated quantum layer: paired QKD link endpoints feeding synchronized
//! key buffers, a QRNG, the hop-by-hop trusted-node key relay engine, and an
//! audit log of which nodes handled key material in plaintext.
//!
//! Key synchronization between the two ends of a link is modeled by a shared
//! seeded generator: both ends observe the identical chunk sequence. Relay
//! transport re-encrypts at every node — node `i` recovers `K_ENC` from
//! `KN_{i-1} ⊕ CK_{i-1}` and forwards `KN_i = K_ENC ⊕ CK_i` — so every
//! intermediate node sees the transported key in the clear, which the audit
//! log records.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_core::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::SessionRng;

/// Identifier of an SD-QKD node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Handle to one QKD link in the fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub(crate) usize);

/// Static configuration of one QKD link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkdLinkConfig {
    pub a: NodeId,
    pub b: NodeId,
    /// Simulated key production rate in chunks per second.
    pub key_rate: f64,
    /// Buffer capacity in chunks at each end; production pauses when full.
    pub buffer_capacity: usize,
    /// Seed of the shared deterministic generator.
    pub seed: u64,
    /// Chunk size in bytes.
    pub chunk_size: usize,
}

/// A route between two nodes: one shared link, or a trusted-node relay path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathRoute {
    Direct(LinkId),
    Relay(RelayPath),
}

impl PathRoute {
    pub fn links(&self) -> Vec<LinkId> {
        match self {
            PathRoute::Direct(l) => vec![*l],
            PathRoute::Relay(p) => p.links.clone(),
        }
    }

    pub fn hop_count(&self) -> usize {
        match self {
            PathRoute::Direct(_) => 1,
            PathRoute::Relay(p) => p.links.len(),
        }
    }
}

/// An ordered multi-hop path; consecutive nodes share a link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayPath {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl RelayPath {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

/// One hop's encrypted key in transit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayParcel {
    pub hop_index: usize,
    pub payload: Vec<u8>,
}

/// Result of a relay transport: the key recovered at the destination plus the
/// parcel trail for inspection.
#[derive(Debug, Clone)]
pub struct RelayOutcome {
    pub recovered: Vec<u8>,
    pub parcels: Vec<RelayParcel>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelayError {
    #[error("no key chunk available at hop {0}")]
    HopExhausted(usize),
    #[error("link chunk size does not match the transported key length")]
    ChunkSizeMismatch,
}

/// Something a node did with plaintext key material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEvent {
    pub node: NodeId,
    pub kind: AuditKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditKind {
    /// The node recovered a transported key in plaintext while relaying.
    PlaintextKeyExposure { bytes: usize },
}

struct LinkState {
    cfg: QkdLinkConfig,
    producer: SessionRng,
    /// Buffers at each end; mirrored by construction.
    ends: [VecDeque<Vec<u8>>; 2],
    removed: bool,
}

impl LinkState {
    fn buffered(&self) -> usize {
        debug_assert_eq!(self.ends[0].len(), self.ends[1].len());
        self.ends[0].len()
    }
}

struct FabricState {
    links: Vec<LinkState>,
    by_pair: HashMap<(NodeId, NodeId), LinkId>,
    audit: Vec<AuditEvent>,
    qrng: SessionRng,
    /// Bumped on every production round; get_key waiters watch it.
    production_epoch: u64,
}

/// The shared quantum substrate of a deployment.
pub struct QkdFabric {
    state: Mutex<FabricState>,
    produced: Condvar,
}

fn pair_key(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl QkdFabric {
    /// `qrng_seed` fixes the QRNG for reproducible runs; `None` seeds it from
    /// the operating system.
    pub fn new(qrng_seed: Option<u64>) -> Self {
        let qrng = match qrng_seed {
            Some(s) => SessionRng::seed_from_u64(s),
            None => crate::provider::os_rng(),
        };
        QkdFabric {
            state: Mutex::new(FabricState {
                links: Vec::new(),
                by_pair: HashMap::new(),
                audit: Vec::new(),
                qrng,
                production_epoch: 0,
            }),
            produced: Condvar::new(),
        }
    }

    pub fn add_link(&self, cfg: QkdLinkConfig) -> LinkId {
        let mut st = self.state.lock().unwrap();
        let id = LinkId(st.links.len());
        st.by_pair.insert(pair_key(&cfg.a, &cfg.b), id);
        st.links.push(LinkState {
            producer: SessionRng::seed_from_u64(cfg.seed),
            cfg,
            ends: [VecDeque::new(), VecDeque::new()],
            removed: false,
        });
        id
    }

    pub fn remove_link(&self, id: LinkId) {
        let mut st = self.state.lock().unwrap();
        if let Some(link) = st.links.get_mut(id.0) {
            link.removed = true;
            link.ends = [VecDeque::new(), VecDeque::new()];
            let key = pair_key(&link.cfg.a, &link.cfg.b);
            st.by_pair.remove(&key);
        }
    }

    pub fn link_between(&self, a: &NodeId, b: &NodeId) -> Option<LinkId> {
        self.state
            .lock()
            .unwrap()
            .by_pair
            .get(&pair_key(a, b))
            .copied()
    }

    pub fn link_config(&self, id: LinkId) -> Option<QkdLinkConfig> {
        let st = self.state.lock().unwrap();
        st.links.get(id.0).filter(|l| !l.removed).map(|l| l.cfg.clone())
    }

    pub fn link_pairs(&self) -> Vec<(NodeId, NodeId, LinkId)> {
        let st = self.state.lock().unwrap();
        st.by_pair
            .iter()
            .map(|((a, b), id)| (a.clone(), b.clone(), *id))
            .collect()
    }

    /// Advances simulated production on one link by `dt` seconds: appends
    /// `floor(key_rate * dt)` chunks, bounded by the remaining capacity,
    /// identically at both ends.
    pub fn produce_keys(&self, id: LinkId, dt: f64) {
        let mut st = self.state.lock().unwrap();
        let Some(link) = st.links.get_mut(id.0) else {
            return;
        };
        if link.removed {
            return;
        }
        let want = (link.cfg.key_rate * dt).floor() as usize;
        let room = link.cfg.buffer_capacity.saturating_sub(link.buffered());
        let n = want.min(room);
        for _ in 0..n {
            let mut chunk = vec![0u8; link.cfg.chunk_size];
            link.producer.fill_bytes(&mut chunk);
            link.ends[0].push_back(chunk.clone());
            link.ends[1].push_back(chunk);
        }
        if n > 0 {
            st.production_epoch += 1;
            self.produced.notify_all();
        }
    }

    /// Advances production on every link.
    pub fn produce_all(&self, dt: f64) {
        let ids: Vec<LinkId> = {
            let st = self.state.lock().unwrap();
            (0..st.links.len()).map(LinkId).collect()
        };
        for id in ids {
            self.produce_keys(id, dt);
        }
    }

    /// Chunks currently buffered at each end of the link.
    pub fn buffered_chunks(&self, id: LinkId) -> usize {
        let st = self.state.lock().unwrap();
        st.links.get(id.0).map(|l| l.buffered()).unwrap_or(0)
    }

    /// Inspects the chunk sequence at one end of a link without consuming.
    pub fn peek_end(&self, id: LinkId, end: usize) -> Vec<Vec<u8>> {
        let st = self.state.lock().unwrap();
        st.links
            .get(id.0)
            .map(|l| l.ends[end].iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Consumes the next chunk of a link from both ends, returning its value.
    pub fn consume_chunk(&self, id: LinkId) -> Option<Vec<u8>> {
        let mut st = self.state.lock().unwrap();
        Self::consume_locked(&mut st, id)
    }

    /// Appends an explicit chunk value at both ends of a link, bypassing the
    /// producer. A simulation fixture for deterministic scenarios.
    pub fn inject_chunk(&self, id: LinkId, chunk: Vec<u8>) {
        let mut st = self.state.lock().unwrap();
        if let Some(link) = st.links.get_mut(id.0) {
            link.ends[0].push_back(chunk.clone());
            link.ends[1].push_back(chunk);
        }
    }

    fn consume_locked(st: &mut FabricState, id: LinkId) -> Option<Vec<u8>> {
        let link = st.links.get_mut(id.0)?;
        if link.removed {
            return None;
        }
        let a = link.ends[0].pop_front()?;
        let b = link.ends[1].pop_front()?;
        debug_assert_eq!(a, b, "link ends must stay synchronized");
        Some(a)
    }

    /// Transports `k_enc` across `path` hop by hop, consuming exactly one
    /// chunk per hop. Fails atomically: if any hop lacks a chunk no chunk is
    /// consumed anywhere.
    pub fn relay_transport(
        &self,
        path: &RelayPath,
        k_enc: &[u8],
    ) -> Result<RelayOutcome, RelayError> {
        let mut st = self.state.lock().unwrap();
        // Pre-check every hop so failure rolls back to a clean state.
        for (i, link) in path.links.iter().enumerate() {
            let l = st
                .links
                .get(link.0)
                .filter(|l| !l.removed)
                .ok_or(RelayError::HopExhausted(i))?;
            if l.buffered() == 0 {
                return Err(RelayError::HopExhausted(i));
            }
            if l.cfg.chunk_size != k_enc.len() {
                return Err(RelayError::ChunkSizeMismatch);
            }
        }
        let mut parcels = Vec::with_capacity(path.links.len());
        let mut recovered = k_enc.to_vec();
        for (i, link) in path.links.iter().enumerate() {
            let ck = Self::consume_locked(&mut st, *link).expect("pre-checked chunk");
            // Sender of hop i encrypts the key it holds; the receiver's copy
            // of the same link chunk decrypts it.
            let parcel: Vec<u8> = recovered.iter().zip(&ck).map(|(k, c)| k ^ c).collect();
            parcels.push(RelayParcel {
                hop_index: i,
                payload: parcel.clone(),
            });
            recovered = parcel.iter().zip(&ck).map(|(p, c)| p ^ c).collect();
            // Every node past the first recovers the key in plaintext; all but
            // the destination are trusted intermediaries, and the destination
            // is the legitimate receiver. Record the intermediaries.
            if i + 1 < path.links.len() {
                let node = path.nodes[i + 1].clone();
                st.audit.push(AuditEvent {
                    node,
                    kind: AuditKind::PlaintextKeyExposure {
                        bytes: k_enc.len(),
                    },
                });
            }
        }
        Ok(RelayOutcome { recovered, parcels })
    }

    /// Wakes blocked `get_key` waiters so they re-check stream state, e.g.
    /// after a close.
    pub fn nudge_waiters(&self) {
        let mut st = self.state.lock().unwrap();
        st.production_epoch += 1;
        self.produced.notify_all();
    }

    /// Draws `len` bytes from the simulated QRNG.
    pub fn qrng_generate(&self, len: usize) -> Vec<u8> {
        assert!(len > 0, "qrng length must be positive");
        let mut st = self.state.lock().unwrap();
        let mut out = vec![0u8; len];
        st.qrng.fill_bytes(&mut out);
        out
    }

    pub fn audit_log(&self) -> Vec<AuditEvent> {
        self.state.lock().unwrap().audit.clone()
    }

    /// Blocks until a production round happens or `deadline` passes. Returns
    /// false on timeout.
    pub fn wait_for_production(&self, deadline: Instant) -> bool {
        let st = self.state.lock().unwrap();
        let epoch = st.production_epoch;
        let mut st = st;
        loop {
            let now = Instant::now();
            if st.production_epoch != epoch {
                return true;
            }
            if now >= deadline {
                return false;
            }
            let (guard, timeout) = self
                .produced
                .wait_timeout(st, deadline - now)
                .unwrap();
            st = guard;
            if timeout.timed_out() {
                return st.production_epoch != epoch;
            }
        }
    }
}

/// Spawns a background producer that advances all links every `tick`.
/// Production stops when the returned handle is dropped.
pub struct ProductionPump {
    stop: std::sync::Arc<std::sync::atomic::AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl ProductionPump {
    pub fn start(fabric: std::sync::Arc<QkdFabric>, tick: Duration) -> Self {
        let stop = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
        let stop2 = stop.clone();
        let handle = std::thread::spawn(move || {
            let mut last = Instant::now();
            while !stop2.load(std::sync::atomic::Ordering::Relaxed) {
                std::thread::sleep(tick);
                let now = Instant::now();
                fabric.produce_all(now.duration_since(last).as_secs_f64());
                last = now;
            }
        });
        ProductionPump {
            stop,
            handle: Some(handle),
        }
    }
}

impl Drop for ProductionPump {
    fn drop(&mut self) {
        self.stop.store(true, std::sync::atomic::Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn fabric_with_link(rate: f64, capacity: usize) -> (QkdFabric, LinkId) {
        let fabric = QkdFabric::new(Some(1));
        let id = fabric.add_link(QkdLinkConfig {
            a: "n1".into(),
            b: "n2".into(),
            key_rate: rate,
            buffer_capacity: capacity,
            seed: 99,
            chunk_size: 16,
        });
        (fabric, id)
    }

    #[test]
    fn production_arithmetic() {
        let (fabric, id) = fabric_with_link(10.0, 100);
        fabric.produce_keys(id, 1.0);
        assert_eq!(fabric.buffered_chunks(id), 10);
    }

    #[test]
    fn zero_rate_produces_nothing() {
        let (fabric, id) = fabric_with_link(0.0, 100);
        fabric.produce_keys(id, 1.0);
        assert_eq!(fabric.buffered_chunks(id), 0);
    }

    #[test]
    fn production_saturates_at_capacity() {
        let (fabric, id) = fabric_with_link(10.0, 5);
        fabric.produce_keys(id, 1.0);
        assert_eq!(fabric.buffered_chunks(id), 5);
        fabric.produce_keys(id, 1.0);
        assert_eq!(fabric.buffered_chunks(id), 5);
    }

    #[test]
    fn link_ends_observe_identical_sequences() {
        let (fabric, id) = fabric_with_link(8.0, 64);
        fabric.produce_keys(id, 1.0);
        assert_eq!(fabric.peek_end(id, 0), fabric.peek_end(id, 1));

        // Same seed on a second fabric reproduces the sequence.
        let (fabric2, id2) = fabric_with_link(8.0, 64);
        fabric2.produce_keys(id2, 1.0);
        assert_eq!(fabric.peek_end(id, 0), fabric2.peek_end(id2, 0));
    }

    fn relay_fixture(chunks: &[&[Vec<u8>]]) -> (QkdFabric, RelayPath) {
        // Builds a chain n0 - n1 - ... with the given per-link chunk queues.
        let fabric = QkdFabric::new(Some(2));
        let mut nodes = vec![NodeId::new("n0")];
        let mut links = Vec::new();
        for (i, link_chunks) in chunks.iter().enumerate() {
            let a = NodeId::new(format!("n{i}"));
            let b = NodeId::new(format!("n{}", i + 1));
            nodes.push(b.clone());
            let id = fabric.add_link(QkdLinkConfig {
                a,
                b,
                key_rate: 0.0,
                buffer_capacity: 64,
                seed: 0,
                chunk_size: link_chunks.first().map(|c| c.len()).unwrap_or(1),
            });
            {
                let mut st = fabric.state.lock().unwrap();
                for c in link_chunks.iter() {
                    st.links[id.0].ends[0].push_back(c.clone());
                    st.links[id.0].ends[1].push_back(c.clone());
                }
            }
            links.push(id);
        }
        (fabric, RelayPath { nodes, links })
    }

    #[test]
    fn relay_two_hops_reference_algebra() {
        // K = 0x5A, CK0 = 0x3C, CK1 = 0xF0: the first parcel is 0x66, the
        // trusted node recovers 0x5A, re-encrypts to 0xAA, and the
        // destination recovers 0x5A.
        let (fabric, path) = relay_fixture(&[&[vec![0x3C]], &[vec![0xF0]]]);
        let out = fabric.relay_transport(&path, &[0x5A]).unwrap();
        assert_eq!(out.parcels[0].payload, vec![0x66]);
        assert_eq!(out.parcels[1].payload, vec![0xAA]);
        assert_eq!(out.recovered, vec![0x5A]);
        // Destination recovery is the last parcel XOR the last hop chunk.
        assert_eq!(out.parcels[1].payload[0] ^ 0xF0, 0x5A);
    }

    #[test]
    fn relay_equal_hop_chunks_still_delivers() {
        let k = vec![0b1010_1010];
        let (fabric, path) = relay_fixture(&[&[vec![0x77]], &[vec![0x77]]]);
        let out = fabric.relay_transport(&path, &k).unwrap();
        assert_eq!(out.recovered, k);
    }

    #[test]
    fn relay_exhausted_hop_rolls_back() {
        let (fabric, path) = relay_fixture(&[&[vec![0x3C], vec![0x3D]], &[]]);
        let err = fabric.relay_transport(&path, &[0x5A]).unwrap_err();
        assert_eq!(err, RelayError::HopExhausted(1));
        // Hop 0 must not have consumed anything.
        assert_eq!(fabric.buffered_chunks(path.links[0]), 2);
    }

    #[test]
    fn relay_consumes_one_chunk_per_hop() {
        let (fabric, path) = relay_fixture(&[
            &[vec![1u8; 4], vec![2u8; 4]],
            &[vec![3u8; 4], vec![4u8; 4]],
            &[vec![5u8; 4], vec![6u8; 4]],
        ]);
        fabric.relay_transport(&path, &[9u8; 4]).unwrap();
        for l in &path.links {
            assert_eq!(fabric.buffered_chunks(*l), 1);
        }
    }

    #[test]
    fn relay_records_intermediate_exposure() {
        let (fabric, path) = relay_fixture(&[&[vec![1u8; 8]], &[vec![2u8; 8]]]);
        fabric.relay_transport(&path, &[7u8; 8]).unwrap();
        let log = fabric.audit_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].node, NodeId::new("n1"));
        assert_eq!(log[0].kind, AuditKind::PlaintextKeyExposure { bytes: 8 });
    }

    #[test]
    fn one_hop_relay_has_no_exposure() {
        let (fabric, path) = relay_fixture(&[&[vec![1u8; 8]]]);
        let out = fabric.relay_transport(&path, &[7u8; 8]).unwrap();
        assert_eq!(out.recovered, vec![7u8; 8]);
        assert!(fabric.audit_log().is_empty());
    }

    #[test]
    fn qrng_lengths_and_reproducibility() {
        let fabric = QkdFabric::new(Some(5));
        assert_eq!(fabric.qrng_generate(16).len(), 16);
        let a = QkdFabric::new(Some(6)).qrng_generate(32);
        let b = QkdFabric::new(Some(6)).qrng_generate(32);
        assert_eq!(a, b);
    }

    #[test]
    fn qrng_birthday_sanity() {
        let fabric = QkdFabric::new(Some(7));
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            assert!(seen.insert(fabric.qrng_generate(16)), "duplicate draw");
        }
    }

    #[test]
    fn production_pump_fills_buffers() {
        let fabric = std::sync::Arc::new(QkdFabric::new(Some(8)));
        let id = fabric.add_link(QkdLinkConfig {
            a: "n1".into(),
            b: "n2".into(),
            key_rate: 2000.0,
            buffer_capacity: 100,
            seed: 3,
            chunk_size: 16,
        });
        let pump = ProductionPump::start(fabric.clone(), Duration::from_millis(5));
        let deadline = Instant::now() + Duration::from_secs(2);
        while fabric.buffered_chunks(id) < 10 && Instant::now() < deadline {
            fabric.wait_for_production(Instant::now() + Duration::from_millis(50));
        }
        drop(pump);
        assert!(fabric.buffered_chunks(id) >= 10);
    }
}
