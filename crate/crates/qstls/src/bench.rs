//! Benchmark harness: runs handshakes and rekeys for every key-exchange
//! combination over direct and key-relay topologies, attributes wall-clock
//! time to the per-operation taxonomy, and emits CSV or markdown reports.
//!
//! Row taxonomy (client / server):
//!
//! ```text
//! client: ML-KEM KP | DH KP | ECDH KP | QKD Request | ML-KEM Decap
//!         | DH SS | ECDH SS | ML-DSA Verify
//! server: ML-KEM Encap | DH KP & SS | ECDH KP & SS | QKD Request | ML-DSA Sign
//! etsi:   Open Connect | Get Key            (per role)
//! ```
//!
//! Each row value is the per-handshake total time spent in that operation
//! class; the server's key-pair-generation and shared-secret work appears as
//! one combined row, matching how the server performs them back to back. The
//! per-combination totals count the two concurrent QKD requests once, as the
//! maximum of the client and server means. Network latency is injectable and
//! applied identically everywhere so topology comparisons stay controlled.
//!
//! Scenarios run sequentially for clean timing; [`run_scenarios_stress`]
//! runs them concurrently as a correctness stress and reports no timings.
//! Long-running alternation between topologies, as a field campaign would
//! do to decorrelate network drift, is collapsed into per-scenario runs over
//! the same simulated fabric — a methodological simplification, since the
//! simulation has no drift to decorrelate.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::etsi004::{QkdAppId, QoS};
use crate::handshake::{
    client_begin, exchange_qkd_keys, server_respond, CertificateAuthority, ClientConfig,
    ClientQkdConfig, HandshakeError, ServerConfig, ServerIdentity, ServerQkdConfig,
};
use crate::provider::{
    CryptoProvider, KemProvider, KeyExchange, KeyPair, ProviderError, SessionRng,
    SignatureProvider,
};
use crate::qkd::NodeId;
use crate::record::{InitiateOutcome, RecordError, Side};
use crate::sdn::{
    AppConfig, DeployOptions, LinkConfig, Network, NodeConfig, ProvisionConfig, SdnError,
    TopologyConfig,
};
use crate::suite::{self, Ciphersuite, KexMethod, SecurityLevel};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("handshake failed at iteration {iteration}: {source}")]
    Handshake {
        iteration: u32,
        source: HandshakeError,
    },
    #[error("rekey failed at iteration {iteration}: {source}")]
    Rekey {
        iteration: u32,
        source: RecordError,
    },
    #[error("traffic keys disagree at iteration {0}")]
    KeyMismatch(u32),
    #[error("no timings to report")]
    EmptyReport,
    #[error(transparent)]
    Deploy(#[from] SdnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Direct,
    KeyRelay,
}

impl TopologyKind {
    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Direct => "direct",
            TopologyKind::KeyRelay => "key_relay",
        }
    }
}

/// One benchmark scenario.
#[derive(Debug, Clone)]
pub struct BenchScenario {
    pub topology: TopologyKind,
    /// Hybrid suite code point selecting the key-exchange combination.
    pub kex: u16,
    pub iterations: u32,
    pub level: SecurityLevel,
    pub rekeys_per_conn: u32,
}

impl BenchScenario {
    fn validate(&self) -> Result<&'static Ciphersuite, BenchError> {
        if self.iterations == 0 {
            return Err(BenchError::Scenario("iterations must be >= 1".into()));
        }
        let suite = suite::lookup(self.kex)
            .map_err(|e| BenchError::Scenario(e.to_string()))?;
        if !suite.is_hybrid() {
            return Err(BenchError::Scenario(format!(
                "{:#06x} is not a key-exchange combination suite",
                self.kex
            )));
        }
        Ok(suite)
    }
}

/// Harness knobs shared across scenarios.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Deploy-time key provisioning (the optimized hot path) vs. on-path
    /// stream establishment.
    pub provisioning: bool,
    /// Injected per-request network latency (applied to LKMS and KPS
    /// endpoints alike).
    pub latency: Duration,
    pub seed: u64,
    /// Replaces the built-in three-node topology; must register the
    /// `tls-client@norte.telco-a` / `tls-server@concepcion.telco-a` pair.
    pub topology_config: Option<TopologyConfig>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            provisioning: true,
            latency: Duration::ZERO,
            seed: 1,
            topology_config: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Operation taxonomy.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpName {
    MlKemKp,
    DhKp,
    EcdhKp,
    QkdRequest,
    MlKemDecap,
    DhSs,
    EcdhSs,
    MlDsaVerify,
    MlKemEncap,
    DhKpSs,
    EcdhKpSs,
    MlDsaSign,
    OpenConnect,
    GetKey,
}

impl OpName {
    pub fn as_str(self) -> &'static str {
        match self {
            OpName::MlKemKp => "ML-KEM KP",
            OpName::DhKp => "DH KP",
            OpName::EcdhKp => "ECDH KP",
            OpName::QkdRequest => "QKD Request",
            OpName::MlKemDecap => "ML-KEM Decap",
            OpName::DhSs => "DH SS",
            OpName::EcdhSs => "ECDH SS",
            OpName::MlDsaVerify => "ML-DSA Verify",
            OpName::MlKemEncap => "ML-KEM Encap",
            OpName::DhKpSs => "DH KP & SS",
            OpName::EcdhKpSs => "ECDH KP & SS",
            OpName::MlDsaSign => "ML-DSA Sign",
            OpName::OpenConnect => "Open Connect",
            OpName::GetKey => "Get Key",
        }
    }
}

/// Client rows then server rows, in table order.
pub const CLIENT_ROWS: &[OpName] = &[
    OpName::MlKemKp,
    OpName::DhKp,
    OpName::EcdhKp,
    OpName::QkdRequest,
    OpName::MlKemDecap,
    OpName::DhSs,
    OpName::EcdhSs,
    OpName::MlDsaVerify,
];
pub const SERVER_ROWS: &[OpName] = &[
    OpName::MlKemEncap,
    OpName::DhKpSs,
    OpName::EcdhKpSs,
    OpName::QkdRequest,
    OpName::MlDsaSign,
];

/// One aggregated taxonomy row.
#[derive(Debug, Clone, PartialEq)]
pub struct OpTiming {
    pub op: OpName,
    pub side: Side,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum RawKind {
    DhKeygen,
    DhShared,
    EcdhKeygen,
    EcdhShared,
    KemKeygen,
    KemEncap,
    KemDecap,
    Sign,
    Verify,
    QkdRequest,
    OpenConnect,
    GetKey,
}

#[derive(Debug, Clone, Copy)]
struct RawSample {
    kind: RawKind,
    side: Side,
    iteration: u32,
    dur: Duration,
}

/// Shared sample sink. The gate confines attribution to the handshake path.
#[derive(Clone)]
pub struct Tracer {
    samples: Arc<Mutex<Vec<RawSample>>>,
    iteration: Arc<AtomicU32>,
    gate: Arc<AtomicBool>,
}

impl Tracer {
    pub fn new() -> Self {
        Tracer {
            samples: Arc::new(Mutex::new(Vec::new())),
            iteration: Arc::new(AtomicU32::new(0)),
            gate: Arc::new(AtomicBool::new(false)),
        }
    }

    fn set_iteration(&self, i: u32) {
        self.iteration.store(i, Ordering::Relaxed);
    }

    fn enable(&self, on: bool) {
        self.gate.store(on, Ordering::Relaxed);
    }

    fn record(&self, kind: RawKind, side: Side, dur: Duration) {
        if !self.gate.load(Ordering::Relaxed) {
            return;
        }
        self.samples.lock().unwrap().push(RawSample {
            kind,
            side,
            iteration: self.iteration.load(Ordering::Relaxed),
            dur,
        });
    }

    /// Raw sample count, for attribution checks.
    pub fn sample_count(&self) -> usize {
        self.samples.lock().unwrap().len()
    }
}

impl Default for Tracer {
    fn default() -> Self {
        Self::new()
    }
}

// Timing decorators: every provider call on the handshake path passes through
// one of these, so each call is attributed to exactly one taxonomy row.

struct TimedKx {
    inner: Arc<dyn KeyExchange>,
    tracer: Tracer,
    side: Side,
    keygen: RawKind,
    shared: RawKind,
}

impl KeyExchange for TimedKx {
    fn group_id(&self) -> crate::provider::GroupId {
        self.inner.group_id()
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        let t = Instant::now();
        let out = self.inner.generate_keypair(rng);
        self.tracer.record(self.keygen, self.side, t.elapsed());
        out
    }

    fn shared_secret(&self, private: &[u8], peer_public: &[u8]) -> Result<Vec<u8>, ProviderError> {
        let t = Instant::now();
        let out = self.inner.shared_secret(private, peer_public);
        self.tracer.record(self.shared, self.side, t.elapsed());
        out
    }
}

struct TimedKem {
    inner: Arc<dyn KemProvider>,
    tracer: Tracer,
    side: Side,
}

impl KemProvider for TimedKem {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        let t = Instant::now();
        let out = self.inner.generate_keypair(rng);
        self.tracer.record(RawKind::KemKeygen, self.side, t.elapsed());
        out
    }

    fn encapsulate(
        &self,
        peer_public: &[u8],
        rng: &mut SessionRng,
    ) -> Result<(Vec<u8>, Vec<u8>), ProviderError> {
        let t = Instant::now();
        let out = self.inner.encapsulate(peer_public, rng);
        self.tracer.record(RawKind::KemEncap, self.side, t.elapsed());
        out
    }

    fn decapsulate(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, ProviderError> {
        let t = Instant::now();
        let out = self.inner.decapsulate(private, ciphertext);
        self.tracer.record(RawKind::KemDecap, self.side, t.elapsed());
        out
    }
}

struct TimedSig {
    inner: Arc<dyn SignatureProvider>,
    tracer: Tracer,
    side: Side,
}

impl SignatureProvider for TimedSig {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        self.inner.generate_keypair(rng)
    }

    fn sign(&self, private: &[u8], message: &[u8]) -> Result<Vec<u8>, ProviderError> {
        let t = Instant::now();
        let out = self.inner.sign(private, message);
        self.tracer.record(RawKind::Sign, self.side, t.elapsed());
        out
    }

    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let t = Instant::now();
        let out = self.inner.verify(public, message, signature);
        self.tracer.record(RawKind::Verify, self.side, t.elapsed());
        out
    }
}

/// Wraps a provider bundle so every call lands in the tracer with the given
/// side tag.
pub fn instrument_provider(inner: &CryptoProvider, tracer: &Tracer, side: Side) -> CryptoProvider {
    CryptoProvider {
        dh: Arc::new(TimedKx {
            inner: inner.dh.clone(),
            tracer: tracer.clone(),
            side,
            keygen: RawKind::DhKeygen,
            shared: RawKind::DhShared,
        }),
        ecdh: Arc::new(TimedKx {
            inner: inner.ecdh.clone(),
            tracer: tracer.clone(),
            side,
            keygen: RawKind::EcdhKeygen,
            shared: RawKind::EcdhShared,
        }),
        kem: Arc::new(TimedKem {
            inner: inner.kem.clone(),
            tracer: tracer.clone(),
            side,
        }),
        sig: Arc::new(TimedSig {
            inner: inner.sig.clone(),
            tracer: tracer.clone(),
            side,
        }),
    }
}

// ---------------------------------------------------------------------------
// Scenario execution.
// ---------------------------------------------------------------------------

/// Cumulative message timestamps, mean microseconds from handshake start.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MessageTimings {
    pub client_hello_send_us: f64,
    pub server_hello_recv_us: f64,
    pub finished_recv_us: f64,
}

/// Aggregated result of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub topology: TopologyKind,
    pub kex_label: String,
    pub level: SecurityLevel,
    pub iterations: u32,
    pub rekeys_per_conn: u32,
    pub rows: Vec<OpTiming>,
    pub etsi_rows: Vec<OpTiming>,
    /// Per-method aggregate means plus the grand total, with the concurrent
    /// QKD requests counted once as the max of the two sides.
    pub method_totals: Vec<(String, f64)>,
    pub total_ms: f64,
    pub handshake_mean_ms: f64,
    pub handshake_stddev_ms: f64,
    pub messages: MessageTimings,
}

impl ScenarioReport {
    pub fn row(&self, op: OpName, side: Side) -> Option<&OpTiming> {
        self.rows
            .iter()
            .chain(self.etsi_rows.iter())
            .find(|r| r.op == op && r.side == side)
    }
}

fn builtin_topology(kind: TopologyKind, scenario_chunks: usize, chunk_size: usize, provisioning: bool)
    -> TopologyConfig
{
    let rate = (scenario_chunks as f64).max(64.0);
    let capacity = scenario_chunks + 64;
    let mk_link = |a: &str, b: &str, seed: u64| LinkConfig {
        a: a.into(),
        b: b.into(),
        key_rate: rate,
        buffer_capacity: capacity,
        seed,
        chunk_size,
    };
    let links = match kind {
        TopologyKind::Direct => vec![mk_link("norte", "concepcion", 41)],
        TopologyKind::KeyRelay => vec![
            mk_link("norte", "distrito", 42),
            mk_link("distrito", "concepcion", 43),
        ],
    };
    TopologyConfig {
        nodes: ["norte", "distrito", "concepcion"]
            .into_iter()
            .map(|id| NodeConfig {
                id: id.into(),
                domain: "telco-a".into(),
            })
            .collect(),
        links,
        apps: vec![
            AppConfig {
                id: QkdAppId::new("tls-client@norte.telco-a"),
                node: "norte".into(),
            },
            AppConfig {
                id: QkdAppId::new("tls-server@concepcion.telco-a"),
                node: "concepcion".into(),
            },
        ],
        provision: if provisioning {
            vec![ProvisionConfig {
                a: QkdAppId::new("tls-client@norte.telco-a"),
                b: QkdAppId::new("tls-server@concepcion.telco-a"),
                timeout_ms: 5000,
                ttl_secs: 86_400,
            }]
        } else {
            vec![]
        },
    }
}

struct Rig {
    net: Network,
    client_cfg: ClientConfig,
    server_cfg: ServerConfig,
    tracer: Tracer,
}

fn build_rig(scenario: &BenchScenario, cfg: &BenchConfig) -> Result<Rig, BenchError> {
    let chunk_size = scenario.level.qkd_key_bytes();
    let needed = (scenario.iterations as usize) * (scenario.rekeys_per_conn as usize + 2);
    let topo = match &cfg.topology_config {
        Some(t) => t.clone(),
        None => builtin_topology(scenario.topology, needed, chunk_size, cfg.provisioning),
    };
    let net = Network::deploy(
        topo,
        DeployOptions {
            seed: Some(cfg.seed),
            prefill_secs: 1.5,
        },
    )?;
    net.set_latency(cfg.latency);

    let tracer = Tracer::new();
    let base = CryptoProvider::for_level(scenario.level);
    let client_provider = instrument_provider(&base, &tracer, Side::Client);
    let server_provider = instrument_provider(&base, &tracer, Side::Server);

    let mut rng = crate::provider::seeded_rng(cfg.seed ^ 0x5EED);
    let ca = CertificateAuthority::new(base.sig.clone(), &mut rng)
        .map_err(|e| BenchError::Scenario(e.to_string()))?;
    let identity = ServerIdentity::issue(&ca, base.sig.as_ref(), "concepcion.telco-a", &mut rng)
        .map_err(|e| BenchError::Scenario(e.to_string()))?;

    let client_app = QkdAppId::new("tls-client@norte.telco-a");
    let server_app = QkdAppId::new("tls-server@concepcion.telco-a");
    let qos = QoS::new(chunk_size, 5000, 86_400);
    let (client_qkd, server_qkd) = if cfg.provisioning {
        (
            ClientQkdConfig::Provisioned {
                kps: net.kps(&NodeId::new("norte")),
                server_node: NodeId::new("concepcion"),
            },
            ServerQkdConfig::Provisioned {
                kps: net.kps(&NodeId::new("concepcion")),
            },
        )
    } else {
        (
            ClientQkdConfig::Direct {
                lkms: net.lkms(&NodeId::new("norte")),
                app_id: client_app,
                qos: qos.clone(),
            },
            ServerQkdConfig::Direct {
                lkms: net.lkms(&NodeId::new("concepcion")),
                app_id: server_app,
                qos,
            },
        )
    };

    let client_cfg = ClientConfig {
        offered_suites: vec![scenario.kex],
        level: scenario.level,
        provider: client_provider,
        qkd: client_qkd,
        expected_hostname: "concepcion.telco-a".into(),
        ca_public: ca.public_key().to_vec(),
        rng_seed: None,
    };
    let server_cfg = ServerConfig {
        supported_suites: vec![scenario.kex],
        level: scenario.level,
        provider: server_provider,
        qkd: server_qkd,
        identity,
        rng_seed: None,
    };
    Ok(Rig {
        net,
        client_cfg,
        server_cfg,
        tracer,
    })
}

fn mean_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / values.len() as f64;
    (mean, var.sqrt())
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Executes one scenario: `iterations` handshakes with `rekeys_per_conn` Key
/// Update rounds each, recording per-operation wall-clock time and the
/// message timestamps.
pub fn run_scenario(scenario: &BenchScenario, cfg: &BenchConfig) -> Result<ScenarioReport, BenchError> {
    let suite = scenario.validate()?;
    let rig = build_rig(scenario, cfg)?;
    let latency = cfg.latency;

    let mut totals: Vec<f64> = Vec::with_capacity(scenario.iterations as usize);
    let mut msg_marks: Vec<[f64; 3]> = Vec::with_capacity(scenario.iterations as usize);

    for i in 0..scenario.iterations {
        rig.tracer.set_iteration(i);
        rig.tracer.enable(true);
        let flight = |by: Duration| {
            if !by.is_zero() {
                std::thread::sleep(by);
            }
        };
        let t0 = Instant::now();
        let (ch, mut client) =
            client_begin(&rig.client_cfg).map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        let ch_sent = t0.elapsed();
        flight(latency);
        let (sh, mut server) =
            server_respond(&rig.server_cfg, &ch).map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        flight(latency);
        client
            .process_server_hello(&sh)
            .map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        let sh_received = t0.elapsed();
        exchange_qkd_keys(&mut client, &mut server).map_err(|source| BenchError::Handshake {
            iteration: i,
            source,
        })?;
        let flight3 = server
            .server_authenticate()
            .map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        flight(latency);
        let fin = client
            .client_finish(&flight3.certificate, &flight3.finished)
            .map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        flight(latency);
        server
            .server_verify_finish(&fin)
            .map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        let fin_received = t0.elapsed();
        totals.push(ms(t0.elapsed()));
        msg_marks.push([
            ch_sent.as_secs_f64() * 1e6,
            sh_received.as_secs_f64() * 1e6,
            fin_received.as_secs_f64() * 1e6,
        ]);

        // QKD request spans, recorded by the sessions themselves.
        if let Some(t) = client.qkd_timing() {
            rig.tracer.record(RawKind::QkdRequest, Side::Client, t.request);
            if let Some(d) = t.open_connect {
                rig.tracer.record(RawKind::OpenConnect, Side::Client, d);
            }
            if let Some(d) = t.get_key {
                rig.tracer.record(RawKind::GetKey, Side::Client, d);
            }
        }
        if let Some(t) = server.qkd_timing() {
            rig.tracer.record(RawKind::QkdRequest, Side::Server, t.request);
            if let Some(d) = t.open_connect {
                rig.tracer.record(RawKind::OpenConnect, Side::Server, d);
            }
            if let Some(d) = t.get_key {
                rig.tracer.record(RawKind::GetKey, Side::Server, d);
            }
        }
        rig.tracer.enable(false);

        let cs = client.schedule().cloned();
        let ss = server.schedule().cloned();
        if cs != ss || cs.is_none() {
            return Err(BenchError::KeyMismatch(i));
        }

        // Rekey rounds, outside the handshake taxonomy.
        let mut c = client
            .into_connection()
            .map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        let mut s = server
            .into_connection()
            .map_err(|source| BenchError::Handshake {
                iteration: i,
                source,
            })?;
        for r in 0..scenario.rekeys_per_conn {
            let outcome = c
                .initiate_key_update()
                .map_err(|source| BenchError::Rekey {
                    iteration: i,
                    source,
                })?;
            debug_assert_eq!(outcome, InitiateOutcome::Sent);
            for record in c.take_outbox() {
                s.open(&record).map_err(|source| BenchError::Rekey {
                    iteration: i,
                    source,
                })?;
            }
            for record in s.take_outbox() {
                c.open(&record).map_err(|source| BenchError::Rekey {
                    iteration: i,
                    source,
                })?;
            }
            if c.generation() != u64::from(r) + 1 || c.schedule() != s.schedule() {
                return Err(BenchError::KeyMismatch(i));
            }
        }
    }
    drop(rig.net);

    // Aggregate raw samples: per-iteration sums per (kind, side).
    let samples = rig.tracer.samples.lock().unwrap().clone();
    let mut per_iter: BTreeMap<(RawKind, Side, u32), f64> = BTreeMap::new();
    for sample in &samples {
        *per_iter
            .entry((sample.kind, sample.side, sample.iteration))
            .or_insert(0.0) += ms(sample.dur);
    }
    let collect = |kind: RawKind, side: Side| -> Vec<f64> {
        per_iter
            .iter()
            .filter(|((k, s, _), _)| *k == kind && *s == side)
            .map(|(_, v)| *v)
            .collect()
    };
    let combined = |a: RawKind, b: RawKind, side: Side| -> Vec<f64> {
        // Sum the two kinds per iteration (server KP & SS rows).
        let mut by_iter: BTreeMap<u32, f64> = BTreeMap::new();
        for ((k, s, i), v) in per_iter.iter() {
            if *s == side && (*k == a || *k == b) {
                *by_iter.entry(*i).or_insert(0.0) += v;
            }
        }
        by_iter.into_values().collect()
    };

    let mut rows = Vec::new();
    let push_row = |op: OpName, side: Side, values: Vec<f64>, rows: &mut Vec<OpTiming>| {
        if values.is_empty() {
            return;
        }
        let (mean, sd) = mean_stddev(&values);
        rows.push(OpTiming {
            op,
            side,
            mean_ms: mean,
            stddev_ms: sd,
            n: values.len() as u32,
        });
    };
    push_row(OpName::MlKemKp, Side::Client, collect(RawKind::KemKeygen, Side::Client), &mut rows);
    push_row(OpName::DhKp, Side::Client, collect(RawKind::DhKeygen, Side::Client), &mut rows);
    push_row(OpName::EcdhKp, Side::Client, collect(RawKind::EcdhKeygen, Side::Client), &mut rows);
    push_row(OpName::QkdRequest, Side::Client, collect(RawKind::QkdRequest, Side::Client), &mut rows);
    push_row(OpName::MlKemDecap, Side::Client, collect(RawKind::KemDecap, Side::Client), &mut rows);
    push_row(OpName::DhSs, Side::Client, collect(RawKind::DhShared, Side::Client), &mut rows);
    push_row(OpName::EcdhSs, Side::Client, collect(RawKind::EcdhShared, Side::Client), &mut rows);
    push_row(OpName::MlDsaVerify, Side::Client, collect(RawKind::Verify, Side::Client), &mut rows);
    push_row(OpName::MlKemEncap, Side::Server, collect(RawKind::KemEncap, Side::Server), &mut rows);
    push_row(OpName::DhKpSs, Side::Server, combined(RawKind::DhKeygen, RawKind::DhShared, Side::Server), &mut rows);
    push_row(OpName::EcdhKpSs, Side::Server, combined(RawKind::EcdhKeygen, RawKind::EcdhShared, Side::Server), &mut rows);
    push_row(OpName::QkdRequest, Side::Server, collect(RawKind::QkdRequest, Side::Server), &mut rows);
    push_row(OpName::MlDsaSign, Side::Server, collect(RawKind::Sign, Side::Server), &mut rows);

    let mut etsi_rows = Vec::new();
    for side in [Side::Client, Side::Server] {
        push_row(OpName::OpenConnect, side, collect(RawKind::OpenConnect, side), &mut etsi_rows);
        push_row(OpName::GetKey, side, collect(RawKind::GetKey, side), &mut etsi_rows);
    }

    // Per-method aggregates; the two concurrent QKD requests count once, as
    // the larger of the two means.
    let row_mean = |rows: &[OpTiming], op: OpName, side: Side| -> Option<f64> {
        rows.iter()
            .find(|r| r.op == op && r.side == side)
            .map(|r| r.mean_ms)
    };
    let mut method_totals: Vec<(String, f64)> = Vec::new();
    if suite.has_kex(KexMethod::Dh) {
        let total = row_mean(&rows, OpName::DhKp, Side::Client).unwrap_or(0.0)
            + row_mean(&rows, OpName::DhSs, Side::Client).unwrap_or(0.0)
            + row_mean(&rows, OpName::DhKpSs, Side::Server).unwrap_or(0.0);
        method_totals.push(("DH".into(), total));
    }
    if suite.has_kex(KexMethod::Ecdh) {
        let total = row_mean(&rows, OpName::EcdhKp, Side::Client).unwrap_or(0.0)
            + row_mean(&rows, OpName::EcdhSs, Side::Client).unwrap_or(0.0)
            + row_mean(&rows, OpName::EcdhKpSs, Side::Server).unwrap_or(0.0);
        method_totals.push(("ECDH".into(), total));
    }
    if suite.has_kex(KexMethod::Pqc) {
        let total = row_mean(&rows, OpName::MlKemKp, Side::Client).unwrap_or(0.0)
            + row_mean(&rows, OpName::MlKemDecap, Side::Client).unwrap_or(0.0)
            + row_mean(&rows, OpName::MlKemEncap, Side::Server).unwrap_or(0.0);
        method_totals.push(("ML-KEM".into(), total));
    }
    if suite.has_kex(KexMethod::Qkd) {
        let c = row_mean(&rows, OpName::QkdRequest, Side::Client).unwrap_or(0.0);
        let s = row_mean(&rows, OpName::QkdRequest, Side::Server).unwrap_or(0.0);
        method_totals.push(("QKD".into(), c.max(s)));
    }
    let mldsa = row_mean(&rows, OpName::MlDsaVerify, Side::Client).unwrap_or(0.0)
        + row_mean(&rows, OpName::MlDsaSign, Side::Server).unwrap_or(0.0);
    method_totals.push(("ML-DSA".into(), mldsa));
    let total_ms = method_totals.iter().map(|(_, v)| v).sum();

    let (hs_mean, hs_sd) = mean_stddev(&totals);
    let marks = |idx: usize| -> f64 {
        let vals: Vec<f64> = msg_marks.iter().map(|m| m[idx]).collect();
        mean_stddev(&vals).0
    };
    Ok(ScenarioReport {
        topology: scenario.topology,
        kex_label: suite.kex_label(),
        level: scenario.level,
        iterations: scenario.iterations,
        rekeys_per_conn: scenario.rekeys_per_conn,
        rows,
        etsi_rows,
        method_totals,
        total_ms,
        handshake_mean_ms: hs_mean,
        handshake_stddev_ms: hs_sd,
        messages: MessageTimings {
            client_hello_send_us: marks(0),
            server_hello_recv_us: marks(1),
            finished_recv_us: marks(2),
        },
    })
}

/// Opt-in stress mode: runs every scenario concurrently on its own thread,
/// checking correctness only. Timings from concurrent runs are meaningless,
/// so none are returned.
pub fn run_scenarios_stress(
    scenarios: &[BenchScenario],
    cfg: &BenchConfig,
) -> Result<(), BenchError> {
    let results: Vec<Result<ScenarioReport, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|scenario| {
                let cfg = cfg.clone();
                s.spawn(move || run_scenario(scenario, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread"))
            .collect()
    });
    for r in results {
        r?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(ReportFormat::Csv),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Client => "client",
        Side::Server => "server",
    }
}

/// Writes the aggregated reports. Column order in CSV is fixed:
/// operation, kex, side, mean, stddev, n.
pub fn emit_report(
    reports: &[ScenarioReport],
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<(), BenchError> {
    if reports.is_empty() || reports.iter().all(|r| r.rows.is_empty()) {
        return Err(BenchError::EmptyReport);
    }
    match format {
        ReportFormat::Csv => {
            writeln!(out, "operation,kex,side,mean_ms,stddev_ms,n")?;
            for r in reports {
                let kex = format!("{} ({})", r.kex_label, r.topology.name());
                for row in r.rows.iter().chain(r.etsi_rows.iter()) {
                    writeln!(
                        out,
                        "{},{},{},{:.2},{:.2},{}",
                        row.op.as_str(),
                        kex,
                        side_name(row.side),
                        row.mean_ms,
                        row.stddev_ms,
                        row.n
                    )?;
                }
                writeln!(
                    out,
                    "Total,{},both,{:.2},,{}",
                    kex, r.total_ms, r.iterations
                )?;
            }
        }
        ReportFormat::Markdown => {
            let header: Vec<String> = reports
                .iter()
                .map(|r| format!("{} ({})", r.kex_label, r.topology.name()))
                .collect();
            let cell = |r: &ScenarioReport, op: OpName, side: Side| -> String {
                match r.row(op, side) {
                    Some(t) => format!("{:.2} ± {:.2}", t.mean_ms, t.stddev_ms),
                    None => "—".into(),
                }
            };
            writeln!(out, "### Per-operation timings (ms)\n")?;
            writeln!(out, "| Operation | {} |", header.join(" | "))?;
            writeln!(
                out,
                "|---|{}|",
                header.iter().map(|_| "---").collect::<Vec<_>>().join("|")
            )?;
            for &op in CLIENT_ROWS {
                let cells: Vec<String> =
                    reports.iter().map(|r| cell(r, op, Side::Client)).collect();
                writeln!(out, "| {} | {} |", op.as_str(), cells.join(" | "))?;
            }
            for &op in SERVER_ROWS {
                let cells: Vec<String> =
                    reports.iter().map(|r| cell(r, op, Side::Server)).collect();
                writeln!(out, "| {} | {} |", op.as_str(), cells.join(" | "))?;
            }
            writeln!(out, "\n### Key-exchange and authentication totals (ms)\n")?;
            writeln!(out, "| Method | {} |", header.join(" | "))?;
            writeln!(
                out,
                "|---|{}|",
                header.iter().map(|_| "---").collect::<Vec<_>>().join("|")
            )?;
            let methods: Vec<&str> = vec!["DH", "ECDH", "ML-KEM", "QKD", "ML-DSA"];
            for m in methods {
                let cells: Vec<String> = reports
                    .iter()
                    .map(|r| {
                        r.method_totals
                            .iter()
                            .find(|(name, _)| name == m)
                            .map(|(_, v)| format!("{v:.2}"))
                            .unwrap_or_else(|| "—".into())
                    })
                    .collect();
                writeln!(out, "| {m} | {} |", cells.join(" | "))?;
            }
            let totals: Vec<String> = reports
                .iter()
                .map(|r| format!("**{:.2}**", r.total_ms))
                .collect();
            writeln!(out, "| Total | {} |", totals.join(" | "))?;
            writeln!(out, "\n### ETSI 004 requests (ms)\n")?;
            writeln!(out, "| Operation | Role | {} |", header.join(" | "))?;
            writeln!(
                out,
                "|---|---|{}|",
                header.iter().map(|_| "---").collect::<Vec<_>>().join("|")
            )?;
            for op in [OpName::OpenConnect, OpName::GetKey] {
                for side in [Side::Client, Side::Server] {
                    let cells: Vec<String> = reports.iter().map(|r| cell(r, op, side)).collect();
                    writeln!(
                        out,
                        "| {} | {} | {} |",
                        op.as_str(),
                        side_name(side),
                        cells.join(" | ")
                    )?;
                }
            }
            writeln!(out, "\n### Message timing (µs from handshake start)\n")?;
            writeln!(out, "| Mark | {} |", header.join(" | "))?;
            writeln!(
                out,
                "|---|{}|",
                header.iter().map(|_| "---").collect::<Vec<_>>().join("|")
            )?;
            for (label, get) in [
                ("Client Hello sent", 0usize),
                ("Server Hello received", 1),
                ("Finished received", 2),
            ] {
                let cells: Vec<String> = reports
                    .iter()
                    .map(|r| {
                        let v = match get {
                            0 => r.messages.client_hello_send_us,
                            1 => r.messages.server_hello_recv_us,
                            _ => r.messages.finished_recv_us,
                        };
                        format!("{v:.1}")
                    })
                    .collect();
                writeln!(out, "| {label} | {} |", cells.join(" | "))?;
            }
            writeln!(out, "\n### Handshake wall clock (ms)\n")?;
            writeln!(out, "| | {} |", header.join(" | "))?;
            writeln!(
                out,
                "|---|{}|",
                header.iter().map(|_| "---").collect::<Vec<_>>().join("|")
            )?;
            let cells: Vec<String> = reports
                .iter()
                .map(|r| format!("{:.2} ± {:.2}", r.handshake_mean_ms, r.handshake_stddev_ms))
                .collect();
            writeln!(out, "| Total | {} |", cells.join(" | "))?;
        }
    }
    Ok(())
}

/// Writes a report file; nothing is created when there is nothing to report.
pub fn emit_report_to_path(
    reports: &[ScenarioReport],
    format: ReportFormat,
    path: &std::path::Path,
) -> Result<(), BenchError> {
    if reports.is_empty() || reports.iter().all(|r| r.rows.is_empty()) {
        return Err(BenchError::EmptyReport);
    }
    let mut buf = Vec::new();
    emit_report(reports, format, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
