//! Client and server state machines for the quantum-safe handshake and its
//! key-provisioned variant, including negotiation, key-share exchange, QKD
//! retrieval orchestration, the session key schedule, ML-DSA server
//! authentication, and Finished verification.
//!
//! Message flow: ClientHello → ServerHello → (QKD retrieval on both sides)
//! → encrypted Certificate + Finished from the server → encrypted Finished
//! from the client. In provisioned mode the QKD chunk coordinates ride in
//! the Hello messages and the retrieval is a single local provisioning GET
//! per side; no stream establishment happens on the handshake path.
//!
//! Key schedule (all derivations over the suite hash; `th` is the hash of
//! ClientHello ‖ ServerHello):
//!
//! ```text
//! pre_master = HKDF(salt = th, ikm = dhke ‖ qkd ‖ pqc, info = suite name)
//! master     = expand_label(HKDF-Extract(th, pre_master), "master", "")
//! c_ts / s_ts = expand_label(master, "c ap traffic" / "s ap traffic", th)
//! write key / iv = expand_label(ts, "key" / "iv", "")
//! ```

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_core::Rng as _;
use thiserror::Error;

use crate::etsi004::{Etsi004Error, Ksid, Lkms, QkdAppId, QoS};
use crate::kdf;
use crate::kps::{Kps, KpsError};
use crate::provider::{CryptoProvider, KeyPair, ProviderError, SessionRng, SignatureProvider};
use crate::qkd::NodeId;
use crate::record::{open_record_payload, seal_record_payload, Connection, QkdStreamHandle, Side};
use crate::suite::{self, Ciphersuite, KexMethod, SecurityLevel, SharedSecretSet, SuiteError};
use crate::wire::{
    self, content_type, msg_type, CertificatePayload, ClientHello, Finished, KeyShareExtension,
    PqcShare, QkdShare, ServerHello, WireError,
};

#[derive(Debug, Error)]
pub enum HandshakeError {
    #[error("no mutually supported ciphersuite")]
    NoCommonSuite,
    #[error("certificate rejected: {0}")]
    BadCertificate(&'static str),
    #[error("record failed to decrypt")]
    DecryptError,
    #[error("transcript hash mismatch")]
    TranscriptMismatch,
    #[error("unexpected handshake input: {0}")]
    Unexpected(&'static str),
    #[error("hello lacks key-share material for {0}")]
    MissingShare(&'static str),
    #[error("shared secrets incomplete for the negotiated suite")]
    MissingSecret,
    #[error("offered suites mix finite-field and elliptic-curve DHKE")]
    ConflictingDhkeGroups,
    #[error("QKD binding mode does not match the peer hello")]
    QkdModeMismatch,
    #[error("key provisioning service unavailable: {0}")]
    KpsUnavailable(KpsError),
    #[error("QKD key delivery failed: {0}")]
    Qkd(#[from] Etsi004Error),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// The three alerts this stack emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alert {
    HandshakeFailure,
    BadCertificate,
    DecryptError,
}

impl Alert {
    pub fn code(self) -> u8 {
        match self {
            Alert::HandshakeFailure => 40,
            Alert::BadCertificate => 42,
            Alert::DecryptError => 51,
        }
    }
}

impl HandshakeError {
    /// The alert a peer should be sent for this failure, if any.
    pub fn alert(&self) -> Option<Alert> {
        Some(match self {
            HandshakeError::NoCommonSuite
            | HandshakeError::TranscriptMismatch
            | HandshakeError::MissingShare(_)
            | HandshakeError::QkdModeMismatch
            | HandshakeError::Unexpected(_) => Alert::HandshakeFailure,
            HandshakeError::BadCertificate(_) => Alert::BadCertificate,
            HandshakeError::DecryptError => Alert::DecryptError,
            _ => return None,
        })
    }
}

/// Encodes a fatal alert record.
pub fn alert_record(alert: Alert) -> Vec<u8> {
    wire::frame_record(content_type::ALERT, &[2, alert.code()]).expect("tiny payload")
}

/// First mutually supported suite in client preference order.
pub fn negotiate(client_offer: &[u16], server_support: &[u16]) -> Option<u16> {
    client_offer
        .iter()
        .copied()
        .find(|c| server_support.contains(c))
}

// ---------------------------------------------------------------------------
// Key schedule.
// ---------------------------------------------------------------------------

/// Pre-master/master secrets and directional traffic keys, generation-counted
/// for rekeying.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKeySchedule {
    pub suite: &'static Ciphersuite,
    pub pre_master_secret: Vec<u8>,
    pub master_secret: Vec<u8>,
    pub client_traffic_secret: Vec<u8>,
    pub server_traffic_secret: Vec<u8>,
    pub client_write_key: Vec<u8>,
    pub client_write_iv: Vec<u8>,
    pub server_write_key: Vec<u8>,
    pub server_write_iv: Vec<u8>,
    pub generation: u64,
}

fn traffic_keys(suite: &Ciphersuite, ts: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let key = kdf::expand_label(suite.hash, ts, "key", b"", suite.aead.key_len());
    let iv = kdf::expand_label(suite.hash, ts, "iv", b"", crate::provider::AEAD_NONCE_LEN);
    (key, iv)
}

pub(crate) fn schedule_from_pre_master(
    suite: &'static Ciphersuite,
    pre_master: Vec<u8>,
    transcript_hash: &[u8],
    generation: u64,
) -> SessionKeySchedule {
    let hash_len = suite.hash.output_len();
    let prk = kdf::hkdf_extract(suite.hash, transcript_hash, &pre_master);
    let master = kdf::expand_label(suite.hash, &prk, "master", b"", hash_len);
    let c_ts = kdf::expand_label(suite.hash, &master, "c ap traffic", transcript_hash, hash_len);
    let s_ts = kdf::expand_label(suite.hash, &master, "s ap traffic", transcript_hash, hash_len);
    let (c_key, c_iv) = traffic_keys(suite, &c_ts);
    let (s_key, s_iv) = traffic_keys(suite, &s_ts);
    SessionKeySchedule {
        suite,
        pre_master_secret: pre_master,
        master_secret: master,
        client_traffic_secret: c_ts,
        server_traffic_secret: s_ts,
        client_write_key: c_key,
        client_write_iv: c_iv,
        server_write_key: s_key,
        server_write_iv: s_iv,
        generation,
    }
}

/// Derives the generation-0 schedule from the combined secrets and the two
/// Hello messages.
pub fn derive_schedule_parts(
    suite: &'static Ciphersuite,
    secrets: &SharedSecretSet,
    client_hello: &[u8],
    server_hello: &[u8],
) -> Result<SessionKeySchedule, SuiteError> {
    let th = suite.hash.hash(&[client_hello, server_hello]);
    let pre_master = suite.hybrid_combine(secrets, &th, suite.hash.output_len())?;
    Ok(schedule_from_pre_master(suite, pre_master, &th, 0))
}

impl SessionKeySchedule {
    /// The traffic-update derivation of the next generation: each traffic
    /// secret expands into its successor and fresh keys follow. This is the
    /// derived path a rekey must NOT take; it exists as the comparison
    /// baseline for the non-derived hybrid rekey.
    pub fn derived_next_generation(&self) -> SessionKeySchedule {
        let hash_len = self.suite.hash.output_len();
        let c_ts = kdf::expand_label(
            self.suite.hash,
            &self.client_traffic_secret,
            "traffic upd",
            b"",
            hash_len,
        );
        let s_ts = kdf::expand_label(
            self.suite.hash,
            &self.server_traffic_secret,
            "traffic upd",
            b"",
            hash_len,
        );
        let (c_key, c_iv) = traffic_keys(self.suite, &c_ts);
        let (s_key, s_iv) = traffic_keys(self.suite, &s_ts);
        SessionKeySchedule {
            suite: self.suite,
            pre_master_secret: self.pre_master_secret.clone(),
            master_secret: self.master_secret.clone(),
            client_traffic_secret: c_ts,
            server_traffic_secret: s_ts,
            client_write_key: c_key,
            client_write_iv: c_iv,
            server_write_key: s_key,
            server_write_iv: s_iv,
            generation: self.generation + 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Certificates.
// ---------------------------------------------------------------------------

fn ca_binding(hostname: &str, longterm_public: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(2 + hostname.len() + longterm_public.len());
    m.extend_from_slice(&(hostname.len() as u16).to_be_bytes());
    m.extend_from_slice(hostname.as_bytes());
    m.extend_from_slice(longterm_public);
    m
}

/// Single-level certificate authority issuing hostname bindings.
pub struct CertificateAuthority {
    sig: Arc<dyn SignatureProvider>,
    keypair: KeyPair,
}

impl CertificateAuthority {
    pub fn new(sig: Arc<dyn SignatureProvider>, rng: &mut SessionRng) -> Result<Self, ProviderError> {
        let keypair = sig.generate_keypair(rng)?;
        Ok(CertificateAuthority { sig, keypair })
    }

    pub fn public_key(&self) -> &[u8] {
        &self.keypair.public
    }

    /// Signs the (hostname, long-term public key) binding.
    pub fn issue(&self, hostname: &str, longterm_public: &[u8]) -> Result<Vec<u8>, ProviderError> {
        self.sig
            .sign(&self.keypair.private, &ca_binding(hostname, longterm_public))
    }
}

/// The server's long-term identity and its CA endorsement.
#[derive(Clone)]
pub struct ServerIdentity {
    pub hostname: String,
    pub longterm: KeyPair,
    pub ca_sig: Vec<u8>,
}

impl ServerIdentity {
    pub fn issue(
        ca: &CertificateAuthority,
        sig: &dyn SignatureProvider,
        hostname: &str,
        rng: &mut SessionRng,
    ) -> Result<Self, ProviderError> {
        let longterm = sig.generate_keypair(rng)?;
        let ca_sig = ca.issue(hostname, &longterm.public)?;
        Ok(ServerIdentity {
            hostname: hostname.to_string(),
            longterm,
            ca_sig,
        })
    }
}

fn ephemeral_binding(client_random: &[u8; 32], server_random: &[u8; 32], key_share: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(64 + key_share.len());
    m.extend_from_slice(client_random);
    m.extend_from_slice(server_random);
    m.extend_from_slice(key_share);
    m
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

/// How a client reaches QKD key material.
#[derive(Clone)]
pub enum ClientQkdConfig {
    /// No QKD binding; only suites without the QKD method can be offered.
    Disabled,
    /// Standard flow: stream establishment and retrieval on the handshake
    /// path, once the peer application id is known.
    Direct {
        lkms: Arc<Lkms>,
        app_id: QkdAppId,
        qos: QoS,
    },
    /// Key-provisioned flow: one provisioning GET, no stream establishment.
    Provisioned { kps: Arc<Kps>, server_node: NodeId },
}

#[derive(Clone)]
pub enum ServerQkdConfig {
    Disabled,
    Direct {
        lkms: Arc<Lkms>,
        app_id: QkdAppId,
        qos: QoS,
    },
    Provisioned { kps: Arc<Kps> },
}

#[derive(Clone)]
pub struct ClientConfig {
    /// Preference-ordered code points.
    pub offered_suites: Vec<u16>,
    pub level: SecurityLevel,
    pub provider: CryptoProvider,
    pub qkd: ClientQkdConfig,
    pub expected_hostname: String,
    pub ca_public: Vec<u8>,
    /// Fixed seed for reproducible runs; `None` uses OS entropy.
    pub rng_seed: Option<u64>,
}

#[derive(Clone)]
pub struct ServerConfig {
    pub supported_suites: Vec<u16>,
    pub level: SecurityLevel,
    pub provider: CryptoProvider,
    pub qkd: ServerQkdConfig,
    pub identity: ServerIdentity,
    pub rng_seed: Option<u64>,
}

fn make_rng(seed: Option<u64>) -> SessionRng {
    match seed {
        Some(s) => crate::provider::seeded_rng(s),
        None => crate::provider::os_rng(),
    }
}

/// Durations of the QKD retrieval on one side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QkdTiming {
    /// The whole retrieval as seen by the handshake.
    pub request: Duration,
    /// Stream establishment, when it happened on the handshake path.
    pub open_connect: Option<Duration>,
    /// Indexed retrieval, when issued directly against the LKMS.
    pub get_key: Option<Duration>,
}

// ---------------------------------------------------------------------------
// Client session.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClientState {
    AwaitingServerHello,
    AwaitingQkd,
    AwaitingServerFlight,
    Complete,
}

pub struct ClientSession {
    rng: SessionRng,
    provider: CryptoProvider,
    qkd: ClientQkdConfig,
    expected_hostname: String,
    ca_public: Vec<u8>,
    offered: Vec<u16>,
    client_random: [u8; 32],
    transcript: Vec<u8>,
    dhke_private: Option<KeyPair>,
    kem_private: Option<KeyPair>,
    secrets: SharedSecretSet,
    suite: Option<&'static Ciphersuite>,
    server_app_id: Option<QkdAppId>,
    qkd_session: Option<(Ksid, u64)>,
    schedule: Option<SessionKeySchedule>,
    state: ClientState,
    qkd_timing: Option<QkdTiming>,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("state", &self.state)
            .field("suite", &self.suite.map(|s| s.name))
            .finish_non_exhaustive()
    }
}

/// Starts a handshake: emits the ClientHello carrying fresh key-share
/// material for every method any offered suite needs. In provisioned mode
/// the QKD chunk is fetched here (one local GET) and its coordinates ride in
/// the hello; nothing blocks on the peer.
pub fn client_begin(cfg: &ClientConfig) -> Result<(Vec<u8>, ClientSession), HandshakeError> {
    if cfg.offered_suites.is_empty() {
        return Err(HandshakeError::Unexpected("no ciphersuites offered"));
    }
    let mut rng = make_rng(cfg.rng_seed);
    let mut offered_methods: Vec<KexMethod> = Vec::new();
    for cp in &cfg.offered_suites {
        let s = suite::lookup(*cp)?;
        for m in s.kex_methods {
            if !offered_methods.contains(m) {
                offered_methods.push(*m);
            }
        }
    }
    if offered_methods.contains(&KexMethod::Dh) && offered_methods.contains(&KexMethod::Ecdh) {
        return Err(HandshakeError::ConflictingDhkeGroups);
    }

    let mut share = KeyShareExtension::default();
    let mut session = ClientSession {
        rng: make_rng(None),
        provider: cfg.provider.clone(),
        qkd: cfg.qkd.clone(),
        expected_hostname: cfg.expected_hostname.clone(),
        ca_public: cfg.ca_public.clone(),
        offered: cfg.offered_suites.clone(),
        client_random: [0u8; 32],
        transcript: Vec::new(),
        dhke_private: None,
        kem_private: None,
        secrets: SharedSecretSet::default(),
        suite: None,
        server_app_id: None,
        qkd_session: None,
        schedule: None,
        state: ClientState::AwaitingServerHello,
        qkd_timing: None,
    };
    rng.fill_bytes(&mut session.client_random);

    if let Some(variant) = offered_methods.iter().copied().find(|m| m.is_dhke()) {
        let kx = match variant {
            KexMethod::Dh => &cfg.provider.dh,
            _ => &cfg.provider.ecdh,
        };
        let kp = kx.generate_keypair(&mut rng)?;
        share.dhke_public = Some((kx.group_id(), kp.public.clone()));
        session.dhke_private = Some(kp);
    }
    if offered_methods.contains(&KexMethod::Pqc) {
        let kp = cfg.provider.kem.generate_keypair(&mut rng)?;
        share.pqc = Some(PqcShare::PublicKey(kp.public.clone()));
        session.kem_private = Some(kp);
    }
    if offered_methods.contains(&KexMethod::Qkd) {
        match &cfg.qkd {
            ClientQkdConfig::Direct { app_id, .. } => {
                share.qkd = Some(QkdShare::AppId(app_id.as_str().to_string()));
            }
            ClientQkdConfig::Provisioned { kps, server_node } => {
                let t0 = Instant::now();
                let key = kps
                    .get_provisioned_key(server_node)
                    .map_err(HandshakeError::KpsUnavailable)?;
                session.qkd_timing = Some(QkdTiming {
                    request: t0.elapsed(),
                    open_connect: None,
                    get_key: None,
                });
                share.qkd = Some(QkdShare::Provisioned {
                    ksid: key.ksid,
                    index: key.index,
                });
                session.qkd_session = Some((key.ksid, key.index));
                session.secrets.qkd = Some(key.key);
            }
            ClientQkdConfig::Disabled => {
                return Err(HandshakeError::MissingShare("qkd binding"));
            }
        }
    }

    let hello = ClientHello {
        protocol_version: wire::PROTOCOL_VERSION,
        client_random: session.client_random,
        offered_suites: cfg.offered_suites.clone(),
        key_share: share,
    };
    let msg = hello.encode()?;
    session.transcript.extend_from_slice(&msg);
    session.rng = rng;
    let record = wire::frame_record(content_type::HANDSHAKE, &msg)?;
    Ok((record, session))
}

impl ClientSession {
    pub fn suite(&self) -> Option<&'static Ciphersuite> {
        self.suite
    }

    pub fn qkd_timing(&self) -> Option<QkdTiming> {
        self.qkd_timing
    }

    pub fn schedule(&self) -> Option<&SessionKeySchedule> {
        self.schedule.as_ref()
    }

    /// Processes the ServerHello: pins the negotiated suite, computes the
    /// DHKE shared secret and decapsulates the PQC ciphertext as the suite
    /// requires, and stages the QKD retrieval.
    pub fn process_server_hello(&mut self, record: &[u8]) -> Result<(), HandshakeError> {
        if self.state != ClientState::AwaitingServerHello {
            return Err(HandshakeError::Unexpected("server hello out of order"));
        }
        let (header, payload) = wire::parse_record(record)?;
        if header.content_type != content_type::HANDSHAKE {
            return Err(HandshakeError::Unexpected("expected handshake record"));
        }
        let (t, body) = wire::parse_handshake(payload)?;
        if t != msg_type::SERVER_HELLO {
            return Err(HandshakeError::Unexpected("expected server hello"));
        }
        let sh = ServerHello::decode_body(body)?;
        if !self.offered.contains(&sh.selected_suite) {
            return Err(HandshakeError::Unexpected("selected suite was not offered"));
        }
        let suite = suite::lookup(sh.selected_suite)?;
        self.suite = Some(suite);

        if let Some(variant) = suite.dhke_variant() {
            let (group, server_public) = sh
                .key_share
                .dhke_public
                .as_ref()
                .ok_or(HandshakeError::MissingShare("dhke"))?;
            let kx = match variant {
                KexMethod::Dh => &self.provider.dh,
                _ => &self.provider.ecdh,
            };
            if *group != kx.group_id() {
                return Err(HandshakeError::Unexpected("dhke group mismatch"));
            }
            let private = self
                .dhke_private
                .as_ref()
                .ok_or(HandshakeError::MissingShare("dhke"))?;
            self.secrets.dhke = Some(kx.shared_secret(&private.private, server_public)?);
        }
        if suite.has_kex(KexMethod::Pqc) {
            let pqc = sh
                .key_share
                .pqc
                .as_ref()
                .ok_or(HandshakeError::MissingShare("pqc"))?;
            let PqcShare::Ciphertext(ct) = pqc else {
                return Err(HandshakeError::Unexpected(
                    "server pqc share must be a ciphertext",
                ));
            };
            let private = self
                .kem_private
                .as_ref()
                .ok_or(HandshakeError::MissingShare("pqc"))?;
            self.secrets.pqc = Some(self.provider.kem.decapsulate(&private.private, ct)?);
        }
        if suite.has_kex(KexMethod::Qkd) {
            match sh
                .key_share
                .qkd
                .as_ref()
                .ok_or(HandshakeError::MissingShare("qkd"))?
            {
                QkdShare::AppId(id) => {
                    if !matches!(self.qkd, ClientQkdConfig::Direct { .. }) {
                        return Err(HandshakeError::QkdModeMismatch);
                    }
                    self.server_app_id = Some(QkdAppId::new(id.clone()));
                }
                QkdShare::Provisioned { ksid, index } => {
                    if self.qkd_session != Some((*ksid, *index)) {
                        return Err(HandshakeError::Unexpected("qkd coordinates mismatch"));
                    }
                }
            }
        }

        self.transcript.extend_from_slice(&wire::frame_handshake(t, body)?);
        self.state = if suite.has_kex(KexMethod::Qkd) && self.secrets.qkd.is_none() {
            ClientState::AwaitingQkd
        } else {
            ClientState::AwaitingServerFlight
        };
        Ok(())
    }

    /// Direct-mode QKD retrieval: the blocking stream establishment followed
    /// by one indexed `get_key`.
    pub fn fetch_qkd(&mut self) -> Result<(), HandshakeError> {
        if self.state != ClientState::AwaitingQkd {
            return Ok(());
        }
        let ClientQkdConfig::Direct { lkms, app_id, qos } = &self.qkd else {
            return Err(HandshakeError::QkdModeMismatch);
        };
        let server_app = self
            .server_app_id
            .clone()
            .ok_or(HandshakeError::Unexpected("qkd fetch before server hello"))?;
        let t0 = Instant::now();
        let ksid = lkms.open_connect(app_id, &server_app, qos)?;
        let t_open = t0.elapsed();
        let t1 = Instant::now();
        let key = lkms.get_key(ksid, 0)?;
        let t_get = t1.elapsed();
        self.qkd_timing = Some(QkdTiming {
            request: t0.elapsed(),
            open_connect: Some(t_open),
            get_key: Some(t_get),
        });
        self.secrets.qkd = Some(key);
        self.qkd_session = Some((ksid, 0));
        self.state = ClientState::AwaitingServerFlight;
        Ok(())
    }

    /// Derives the generation-0 schedule once every suite secret is present.
    pub fn derive_schedule(&mut self) -> Result<&SessionKeySchedule, HandshakeError> {
        if self.schedule.is_none() {
            let suite = self.suite.ok_or(HandshakeError::MissingSecret)?;
            let schedule = derive_schedule_from_transcript(suite, &self.secrets, &self.transcript)
                .map_err(|_| HandshakeError::MissingSecret)?;
            self.schedule = Some(schedule);
        }
        Ok(self.schedule.as_ref().expect("just derived"))
    }

    /// Verifies the server's encrypted Certificate and Finished records and
    /// emits the client Finished. Completes the client side.
    pub fn client_finish(
        &mut self,
        certificate_record: &[u8],
        finished_record: &[u8],
    ) -> Result<Vec<u8>, HandshakeError> {
        if self.state != ClientState::AwaitingServerFlight {
            return Err(HandshakeError::Unexpected("server flight out of order"));
        }
        self.derive_schedule()?;
        let suite = self.suite.expect("schedule derived");
        let schedule = self.schedule.clone().expect("schedule derived");

        // Certificate, sealed under the server's generation-0 keys, seq 0.
        let (ct_type, cert_msg) = open_record_payload(
            suite.aead,
            &schedule.server_write_key,
            &schedule.server_write_iv,
            0,
            certificate_record,
        )
        .map_err(|_| HandshakeError::DecryptError)?;
        if ct_type != content_type::HANDSHAKE {
            return Err(HandshakeError::Unexpected("expected handshake record"));
        }
        let (t, body) = wire::parse_handshake(&cert_msg)?;
        if t != msg_type::CERTIFICATE {
            return Err(HandshakeError::Unexpected("expected certificate"));
        }
        let cert = CertificatePayload::decode_body(body)?;
        if !self.provider.sig.verify(
            &self.ca_public,
            &ca_binding(&cert.hostname, &cert.server_longterm_public),
            &cert.ca_sig,
        ) {
            return Err(HandshakeError::BadCertificate("CA signature invalid"));
        }
        if cert.hostname != self.expected_hostname {
            return Err(HandshakeError::BadCertificate("hostname mismatch"));
        }
        // The ephemeral signature binds both randoms and the server key share.
        let sh_body = {
            let (_, sh_msg) = split_transcript_two(&self.transcript)?;
            let (_, body) = wire::parse_handshake(sh_msg)?;
            ServerHello::decode_body(body)?
        };
        let binding = ephemeral_binding(
            &self.client_random,
            &sh_body.server_random,
            &sh_body.key_share.encode()?,
        );
        if !self
            .provider
            .sig
            .verify(&cert.server_longterm_public, &binding, &cert.ephemeral_sig)
        {
            return Err(HandshakeError::BadCertificate("ephemeral signature invalid"));
        }
        self.transcript.extend_from_slice(&cert_msg);

        // Server Finished, seq 1, carries the hash of everything before it.
        let (ct_type, fin_msg) = open_record_payload(
            suite.aead,
            &schedule.server_write_key,
            &schedule.server_write_iv,
            1,
            finished_record,
        )
        .map_err(|_| HandshakeError::DecryptError)?;
        if ct_type != content_type::HANDSHAKE {
            return Err(HandshakeError::Unexpected("expected handshake record"));
        }
        let (t, body) = wire::parse_handshake(&fin_msg)?;
        if t != msg_type::FINISHED {
            return Err(HandshakeError::Unexpected("expected finished"));
        }
        let fin = Finished::decode_body(body)?;
        let expected = suite.hash.hash(&[&self.transcript]);
        if fin.verify_data != expected {
            return Err(HandshakeError::TranscriptMismatch);
        }
        self.transcript.extend_from_slice(&fin_msg);

        // Client Finished over the transcript including the server Finished.
        let verify_data = suite.hash.hash(&[&self.transcript]);
        let fin_msg = Finished { verify_data }.encode()?;
        self.transcript.extend_from_slice(&fin_msg);
        let record = seal_record_payload(
            suite.aead,
            &schedule.client_write_key,
            &schedule.client_write_iv,
            0,
            content_type::HANDSHAKE,
            &fin_msg,
        )
        .map_err(|_| HandshakeError::DecryptError)?;
        self.state = ClientState::Complete;
        Ok(record)
    }

    pub fn is_complete(&self) -> bool {
        self.state == ClientState::Complete
    }

    /// Converts the completed session into a record-layer connection.
    pub fn into_connection(self) -> Result<Connection, HandshakeError> {
        if self.state != ClientState::Complete {
            return Err(HandshakeError::Unexpected("handshake incomplete"));
        }
        let schedule = self.schedule.expect("complete implies schedule");
        let qkd = self.qkd_session.map(|(ksid, base)| QkdStreamHandle {
            lkms: match &self.qkd {
                ClientQkdConfig::Direct { lkms, .. } => lkms.clone(),
                ClientQkdConfig::Provisioned { kps, .. } => kps.lkms().clone(),
                ClientQkdConfig::Disabled => unreachable!("qkd session without binding"),
            },
            ksid,
            base_index: base,
        });
        Ok(Connection::new(
            Side::Client,
            self.provider,
            schedule,
            self.rng,
            qkd,
            1, // client Finished consumed sequence 0
            2, // server Certificate and Finished consumed 0 and 1
        ))
    }
}

fn derive_schedule_from_transcript(
    suite: &'static Ciphersuite,
    secrets: &SharedSecretSet,
    transcript: &[u8],
) -> Result<SessionKeySchedule, SuiteError> {
    let (ch, sh) = split_transcript_two(transcript).map_err(|_| SuiteError::EmptySecretSet)?;
    // A client that offered richer suites may hold secrets the negotiated
    // suite does not use (a provisioned QKD chunk before a classical
    // fallback, say); only the negotiated methods feed the combiner.
    let pruned = SharedSecretSet {
        dhke: secrets
            .dhke
            .clone()
            .filter(|_| suite.dhke_variant().is_some()),
        qkd: secrets.qkd.clone().filter(|_| suite.has_kex(KexMethod::Qkd)),
        pqc: secrets.pqc.clone().filter(|_| suite.has_kex(KexMethod::Pqc)),
    };
    derive_schedule_parts(suite, &pruned, ch, sh)
}

/// Splits a transcript prefix into the ClientHello and ServerHello messages.
fn split_transcript_two(transcript: &[u8]) -> Result<(&[u8], &[u8]), WireError> {
    if transcript.len() < 4 {
        return Err(WireError::Truncated);
    }
    let ch_len = 4 + u32::from_be_bytes([0, transcript[1], transcript[2], transcript[3]]) as usize;
    if transcript.len() < ch_len + 4 {
        return Err(WireError::Truncated);
    }
    let rest = &transcript[ch_len..];
    let sh_len = 4 + u32::from_be_bytes([0, rest[1], rest[2], rest[3]]) as usize;
    if rest.len() < sh_len {
        return Err(WireError::Truncated);
    }
    Ok((&transcript[..ch_len], &rest[..sh_len]))
}

// ---------------------------------------------------------------------------
// Server session.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ServerState {
    AwaitingQkd,
    ReadyToAuthenticate,
    AwaitingClientFinished,
    Complete,
}

pub struct ServerSession {
    rng: SessionRng,
    provider: CryptoProvider,
    qkd: ServerQkdConfig,
    identity: ServerIdentity,
    suite: &'static Ciphersuite,
    client_random: [u8; 32],
    server_random: [u8; 32],
    server_key_share: Vec<u8>,
    transcript: Vec<u8>,
    secrets: SharedSecretSet,
    client_app_id: Option<QkdAppId>,
    qkd_session: Option<(Ksid, u64)>,
    schedule: Option<SessionKeySchedule>,
    state: ServerState,
    qkd_timing: Option<QkdTiming>,
}

impl std::fmt::Debug for ServerSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerSession")
            .field("state", &self.state)
            .field("suite", &self.suite.name)
            .finish_non_exhaustive()
    }
}

/// Handles a ClientHello: negotiates the suite, performs the server's key
/// exchange steps (KEM encapsulation, DHKE key pair and shared secret), and
/// emits the ServerHello.
pub fn server_respond(
    cfg: &ServerConfig,
    client_hello_record: &[u8],
) -> Result<(Vec<u8>, ServerSession), HandshakeError> {
    let mut rng = make_rng(cfg.rng_seed);
    let (header, payload) = wire::parse_record(client_hello_record)?;
    if header.content_type != content_type::HANDSHAKE {
        return Err(HandshakeError::Unexpected("expected handshake record"));
    }
    let (t, body) = wire::parse_handshake(payload)?;
    if t != msg_type::CLIENT_HELLO {
        return Err(HandshakeError::Unexpected("expected client hello"));
    }
    let ch = ClientHello::decode_body(body)?;
    let selected =
        negotiate(&ch.offered_suites, &cfg.supported_suites).ok_or(HandshakeError::NoCommonSuite)?;
    let suite = suite::lookup(selected)?;

    let mut session = ServerSession {
        rng: make_rng(None),
        provider: cfg.provider.clone(),
        qkd: cfg.qkd.clone(),
        identity: cfg.identity.clone(),
        suite,
        client_random: ch.client_random,
        server_random: [0u8; 32],
        server_key_share: Vec::new(),
        transcript: Vec::new(),
        secrets: SharedSecretSet::default(),
        client_app_id: None,
        qkd_session: None,
        schedule: None,
        state: ServerState::ReadyToAuthenticate,
        qkd_timing: None,
    };
    rng.fill_bytes(&mut session.server_random);
    session.transcript.extend_from_slice(&wire::frame_handshake(t, body)?);

    let mut share = KeyShareExtension::default();
    if let Some(variant) = suite.dhke_variant() {
        let (group, client_public) = ch
            .key_share
            .dhke_public
            .as_ref()
            .ok_or(HandshakeError::MissingShare("dhke"))?;
        let kx = match variant {
            KexMethod::Dh => &cfg.provider.dh,
            _ => &cfg.provider.ecdh,
        };
        if *group != kx.group_id() {
            return Err(HandshakeError::Unexpected("dhke group mismatch"));
        }
        let kp = kx.generate_keypair(&mut rng)?;
        session.secrets.dhke = Some(kx.shared_secret(&kp.private, client_public)?);
        share.dhke_public = Some((kx.group_id(), kp.public));
    }
    if suite.has_kex(KexMethod::Pqc) {
        let pqc = ch
            .key_share
            .pqc
            .as_ref()
            .ok_or(HandshakeError::MissingShare("pqc"))?;
        let PqcShare::PublicKey(pk) = pqc else {
            return Err(HandshakeError::Unexpected(
                "client pqc share must be a public key",
            ));
        };
        let (ct, ss) = cfg.provider.kem.encapsulate(pk, &mut rng)?;
        session.secrets.pqc = Some(ss);
        share.pqc = Some(PqcShare::Ciphertext(ct));
    }
    if suite.has_kex(KexMethod::Qkd) {
        match ch
            .key_share
            .qkd
            .as_ref()
            .ok_or(HandshakeError::MissingShare("qkd"))?
        {
            QkdShare::AppId(client_app) => {
                let ServerQkdConfig::Direct { app_id, .. } = &cfg.qkd else {
                    return Err(HandshakeError::QkdModeMismatch);
                };
                session.client_app_id = Some(QkdAppId::new(client_app.clone()));
                share.qkd = Some(QkdShare::AppId(app_id.as_str().to_string()));
                session.state = ServerState::AwaitingQkd;
            }
            QkdShare::Provisioned { ksid, index } => {
                let t0 = Instant::now();
                let key = match &cfg.qkd {
                    ServerQkdConfig::Provisioned { kps } => {
                        let peer = kps
                            .peer_of_ksid(*ksid)
                            .ok_or(HandshakeError::Qkd(Etsi004Error::UnknownKsid))?;
                        kps.get_provisioned_key_at(&peer, *index)
                            .map_err(|e| match e {
                                KpsError::Stream(s) => HandshakeError::Qkd(s),
                                other => HandshakeError::KpsUnavailable(other),
                            })?
                            .key
                    }
                    ServerQkdConfig::Direct { lkms, .. } => lkms.get_key(*ksid, *index)?,
                    ServerQkdConfig::Disabled => return Err(HandshakeError::QkdModeMismatch),
                };
                session.qkd_timing = Some(QkdTiming {
                    request: t0.elapsed(),
                    open_connect: None,
                    get_key: None,
                });
                session.secrets.qkd = Some(key);
                session.qkd_session = Some((*ksid, *index));
                share.qkd = Some(QkdShare::Provisioned {
                    ksid: *ksid,
                    index: *index,
                });
            }
        }
    }

    let sh = ServerHello {
        protocol_version: wire::PROTOCOL_VERSION,
        server_random: session.server_random,
        selected_suite: selected,
        key_share: share,
    };
    session.server_key_share = sh.key_share.encode()?;
    let msg = sh.encode()?;
    session.transcript.extend_from_slice(&msg);
    session.rng = rng;
    let record = wire::frame_record(content_type::HANDSHAKE, &msg)?;
    Ok((record, session))
}

impl ServerSession {
    pub fn suite(&self) -> &'static Ciphersuite {
        self.suite
    }

    pub fn qkd_timing(&self) -> Option<QkdTiming> {
        self.qkd_timing
    }

    pub fn schedule(&self) -> Option<&SessionKeySchedule> {
        self.schedule.as_ref()
    }

    /// Direct-mode QKD retrieval for the server side.
    pub fn fetch_qkd(&mut self) -> Result<(), HandshakeError> {
        if self.state != ServerState::AwaitingQkd {
            return Ok(());
        }
        let ServerQkdConfig::Direct { lkms, app_id, qos } = &self.qkd else {
            return Err(HandshakeError::QkdModeMismatch);
        };
        let client_app = self
            .client_app_id
            .clone()
            .ok_or(HandshakeError::Unexpected("qkd fetch before client hello"))?;
        let t0 = Instant::now();
        let ksid = lkms.open_connect(app_id, &client_app, qos)?;
        let t_open = t0.elapsed();
        let t1 = Instant::now();
        let key = lkms.get_key(ksid, 0)?;
        let t_get = t1.elapsed();
        self.qkd_timing = Some(QkdTiming {
            request: t0.elapsed(),
            open_connect: Some(t_open),
            get_key: Some(t_get),
        });
        self.secrets.qkd = Some(key);
        self.qkd_session = Some((ksid, 0));
        self.state = ServerState::ReadyToAuthenticate;
        Ok(())
    }

    pub fn derive_schedule(&mut self) -> Result<&SessionKeySchedule, HandshakeError> {
        if self.schedule.is_none() {
            let schedule =
                derive_schedule_from_transcript(self.suite, &self.secrets, &self.transcript)
                    .map_err(|_| HandshakeError::MissingSecret)?;
            self.schedule = Some(schedule);
        }
        Ok(self.schedule.as_ref().expect("just derived"))
    }

    /// Builds the encrypted Certificate and Finished flight: the long-term
    /// key signs the ephemeral key-share binding, the CA signature endorses
    /// the hostname, and the Finished pins the transcript so far.
    pub fn server_authenticate(&mut self) -> Result<ServerFlight, HandshakeError> {
        if self.state == ServerState::AwaitingQkd {
            return Err(HandshakeError::MissingSecret);
        }
        if self.state != ServerState::ReadyToAuthenticate {
            return Err(HandshakeError::Unexpected("authenticate out of order"));
        }
        self.derive_schedule()?;
        let suite = self.suite;
        let schedule = self.schedule.clone().expect("schedule derived");

        let binding = ephemeral_binding(
            &self.client_random,
            &self.server_random,
            &self.server_key_share,
        );
        let ephemeral_sig = self
            .provider
            .sig
            .sign(&self.identity.longterm.private, &binding)?;
        let cert = CertificatePayload {
            hostname: self.identity.hostname.clone(),
            server_longterm_public: self.identity.longterm.public.clone(),
            ephemeral_sig,
            ca_sig: self.identity.ca_sig.clone(),
        };
        let cert_msg = cert.encode()?;
        self.transcript.extend_from_slice(&cert_msg);
        let certificate = seal_record_payload(
            suite.aead,
            &schedule.server_write_key,
            &schedule.server_write_iv,
            0,
            content_type::HANDSHAKE,
            &cert_msg,
        )
        .map_err(|_| HandshakeError::DecryptError)?;

        let verify_data = suite.hash.hash(&[&self.transcript]);
        let fin_msg = Finished { verify_data }.encode()?;
        self.transcript.extend_from_slice(&fin_msg);
        let finished = seal_record_payload(
            suite.aead,
            &schedule.server_write_key,
            &schedule.server_write_iv,
            1,
            content_type::HANDSHAKE,
            &fin_msg,
        )
        .map_err(|_| HandshakeError::DecryptError)?;

        self.state = ServerState::AwaitingClientFinished;
        Ok(ServerFlight {
            certificate,
            finished,
        })
    }

    /// Verifies the client Finished; the handshake completes on success.
    pub fn server_verify_finish(&mut self, record: &[u8]) -> Result<(), HandshakeError> {
        if self.state != ServerState::AwaitingClientFinished {
            return Err(HandshakeError::Unexpected("client finished out of order"));
        }
        let schedule = self.schedule.as_ref().expect("authenticated implies schedule");
        let (ct_type, fin_msg) = open_record_payload(
            self.suite.aead,
            &schedule.client_write_key,
            &schedule.client_write_iv,
            0,
            record,
        )
        .map_err(|_| HandshakeError::DecryptError)?;
        if ct_type != content_type::HANDSHAKE {
            return Err(HandshakeError::Unexpected("expected handshake record"));
        }
        let (t, body) = wire::parse_handshake(&fin_msg)?;
        if t != msg_type::FINISHED {
            return Err(HandshakeError::Unexpected("expected finished"));
        }
        let fin = Finished::decode_body(body)?;
        let expected = self.suite.hash.hash(&[&self.transcript]);
        if fin.verify_data != expected {
            return Err(HandshakeError::TranscriptMismatch);
        }
        self.transcript.extend_from_slice(&fin_msg);
        self.state = ServerState::Complete;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.state == ServerState::Complete
    }

    pub fn into_connection(self) -> Result<Connection, HandshakeError> {
        if self.state != ServerState::Complete {
            return Err(HandshakeError::Unexpected("handshake incomplete"));
        }
        let schedule = self.schedule.expect("complete implies schedule");
        let qkd = self.qkd_session.map(|(ksid, base)| QkdStreamHandle {
            lkms: match &self.qkd {
                ServerQkdConfig::Direct { lkms, .. } => lkms.clone(),
                ServerQkdConfig::Provisioned { kps } => kps.lkms().clone(),
                ServerQkdConfig::Disabled => unreachable!("qkd session without binding"),
            },
            ksid,
            base_index: base,
        });
        Ok(Connection::new(
            Side::Server,
            self.provider,
            schedule,
            self.rng,
            qkd,
            2, // Certificate and Finished consumed sequences 0 and 1
            1, // client Finished consumed sequence 0
        ))
    }
}

/// The server's encrypted Certificate + Finished records.
pub struct ServerFlight {
    pub certificate: Vec<u8>,
    pub finished: Vec<u8>,
}

/// Runs both sides' QKD retrievals concurrently: neither side's `get_key`
/// serializes behind the peer's, and in direct mode the two blocking
/// `open_connect` calls rendezvous with each other.
pub fn exchange_qkd_keys(
    client: &mut ClientSession,
    server: &mut ServerSession,
) -> Result<(), HandshakeError> {
    let (cr, sr) = std::thread::scope(|s| {
        let ch = s.spawn(|| client.fetch_qkd());
        let sh = s.spawn(|| server.fetch_qkd());
        (ch.join().expect("client fetch"), sh.join().expect("server fetch"))
    });
    cr?;
    sr?;
    Ok(())
}

/// Drives a complete handshake and returns the two connected record layers.
pub fn run_handshake(
    client_cfg: &ClientConfig,
    server_cfg: &ServerConfig,
) -> Result<(Connection, Connection), HandshakeError> {
    let (ch_record, mut client) = client_begin(client_cfg)?;
    let (sh_record, mut server) = server_respond(server_cfg, &ch_record)?;
    client.process_server_hello(&sh_record)?;
    exchange_qkd_keys(&mut client, &mut server)?;
    let flight = server.server_authenticate()?;
    let fin = client.client_finish(&flight.certificate, &flight.finished)?;
    server.server_verify_finish(&fin)?;
    Ok((client.into_connection()?, server.into_connection()?))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::etsi004::QkdAppId;
    use crate::sdn::{
        AppConfig, DeployOptions, LinkConfig, Network, NodeConfig, ProvisionConfig, TopologyConfig,
    };
    use crate::suite::DHKE_QKD_PQC_SUITE;

    fn decode_hex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    #[test]
    fn schedule_pinned_vectors() {
        // Pinned from the independent HKDF-SHA384 oracle: fixed synthetic
        // secrets and fixed hello bytes.
        let suite = suite::lookup(DHKE_QKD_PQC_SUITE).unwrap();
        let secrets = SharedSecretSet {
            dhke: Some(vec![0xAA; 32]),
            qkd: Some(vec![0xBB; 16]),
            pqc: Some(vec![0xCC; 32]),
        };
        let ch = [0x01u8; 64];
        let sh = [0x02u8; 64];
        let s = derive_schedule_parts(suite, &secrets, &ch, &sh).unwrap();
        assert_eq!(
            s.pre_master_secret,
            decode_hex(
                "baf58ba2fa8f0eeb1b42571e58a724b44b3c8c51c1e454e8c890673036ddc128\
                 48e9d284e830f132dc077c20cdacb37c"
            )
        );
        assert_eq!(
            s.master_secret,
            decode_hex(
                "6e30c3d8ae2f8e9ca3b6086f4a876ccc05e3eba2714e94262e60148272ebd425\
                 5b9f5ef604cd8890682255b3f9489e66"
            )
        );
        assert_eq!(
            s.client_write_key,
            decode_hex("8f9587e16039bdaf4e51351e677ddb46d8d71e8d4d5488c00fc5ff8b39bfda17")
        );
        assert_eq!(s.client_write_iv, decode_hex("de6211690b45257e0d679c8f"));
        assert_eq!(
            s.server_write_key,
            decode_hex("3e77c47ecdda1c65fca2d5a59f3c43e9a2fd9e661a8b409004440c4f4f9606ae")
        );
        assert_eq!(s.server_write_iv, decode_hex("f20f7307bc0ca74bd6290a65"));
        assert_eq!(s.generation, 0);

        // The derived next generation matches the oracle's traffic-update
        // expansion.
        let next = s.derived_next_generation();
        assert_eq!(
            next.client_write_key,
            decode_hex("88575d23479d8b34b41443ea359e5b3a1d1d365da1b0a579c58cfe02ce9739e6")
        );
        assert_eq!(next.generation, 1);
    }

    #[test]
    fn schedule_differs_with_server_random() {
        let suite = suite::lookup(DHKE_QKD_PQC_SUITE).unwrap();
        let secrets = SharedSecretSet {
            dhke: Some(vec![0xAA; 32]),
            qkd: Some(vec![0xBB; 16]),
            pqc: Some(vec![0xCC; 32]),
        };
        let a = derive_schedule_parts(suite, &secrets, &[0x01; 64], &[0x02; 64]).unwrap();
        let b = derive_schedule_parts(suite, &secrets, &[0x01; 64], &[0x03; 64]).unwrap();
        assert_ne!(a.client_write_key, b.client_write_key);
        assert_ne!(a.master_secret, b.master_secret);
    }

    #[test]
    fn negotiation_rule() {
        assert_eq!(negotiate(&[0xFF0A, 0x1302], &[0x1302, 0xFF0A]), Some(0xFF0A));
        assert_eq!(negotiate(&[0x1302, 0xFF0A], &[0xFF0A, 0x1302]), Some(0x1302));
        assert_eq!(negotiate(&[0xFF0A], &[0x1302]), None);
        assert_eq!(negotiate(&[], &[0x1302]), None);
    }

    pub(crate) fn test_network() -> Network {
        let cfg = TopologyConfig {
            nodes: vec![
                NodeConfig {
                    id: "norte".into(),
                    domain: "telco-a".into(),
                },
                NodeConfig {
                    id: "concepcion".into(),
                    domain: "telco-a".into(),
                },
            ],
            links: vec![LinkConfig {
                a: "norte".into(),
                b: "concepcion".into(),
                key_rate: 1000.0,
                buffer_capacity: 4096,
                seed: 77,
                chunk_size: 16,
            }],
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
            provision: vec![ProvisionConfig {
                a: QkdAppId::new("tls-client@norte.telco-a"),
                b: QkdAppId::new("tls-server@concepcion.telco-a"),
                timeout_ms: 2000,
                ttl_secs: 3600,
            }],
        };
        Network::deploy(
            cfg,
            DeployOptions {
                seed: Some(42),
                prefill_secs: 2.0,
            },
        )
        .unwrap()
    }

    pub(crate) fn test_configs(
        net: &Network,
        offered: Vec<u16>,
        supported: Vec<u16>,
        provisioned: bool,
        seed: u64,
    ) -> (ClientConfig, ServerConfig) {
        let level = SecurityLevel::Level1;
        let provider = CryptoProvider::for_level(level);
        let mut rng = crate::provider::seeded_rng(seed);
        let ca = CertificateAuthority::new(provider.sig.clone(), &mut rng).unwrap();
        let identity =
            ServerIdentity::issue(&ca, provider.sig.as_ref(), "concepcion.telco-a", &mut rng)
                .unwrap();
        let qos = QoS::new(16, 2000, 3600);
        let client_qkd = if provisioned {
            ClientQkdConfig::Provisioned {
                kps: net.kps(&"norte".into()),
                server_node: "concepcion".into(),
            }
        } else {
            ClientQkdConfig::Direct {
                lkms: net.lkms(&"norte".into()),
                app_id: QkdAppId::new("tls-client@norte.telco-a"),
                qos: qos.clone(),
            }
        };
        let server_qkd = if provisioned {
            ServerQkdConfig::Provisioned {
                kps: net.kps(&"concepcion".into()),
            }
        } else {
            ServerQkdConfig::Direct {
                lkms: net.lkms(&"concepcion".into()),
                app_id: QkdAppId::new("tls-server@concepcion.telco-a"),
                qos,
            }
        };
        (
            ClientConfig {
                offered_suites: offered,
                level,
                provider: provider.clone(),
                qkd: client_qkd,
                expected_hostname: "concepcion.telco-a".into(),
                ca_public: ca.public_key().to_vec(),
                rng_seed: Some(seed),
            },
            ServerConfig {
                supported_suites: supported,
                level,
                provider,
                qkd: server_qkd,
                identity,
                rng_seed: Some(seed.wrapping_add(1)),
            },
        )
    }

    #[test]
    fn client_hello_share_presence_matches_offer() {
        let net = test_network();
        // Hybrid offer: all three share fields present.
        let (cfg, _) = test_configs(&net, vec![DHKE_QKD_PQC_SUITE], vec![], false, 1);
        let (record, _) = client_begin(&cfg).unwrap();
        let (_, payload) = wire::parse_record(&record).unwrap();
        let (_, body) = wire::parse_handshake(payload).unwrap();
        let ch = ClientHello::decode_body(body).unwrap();
        assert!(ch.key_share.dhke_public.is_some());
        assert!(ch.key_share.qkd.is_some());
        assert!(ch.key_share.pqc.is_some());

        // Classical-only offer: only the DHKE share.
        let (cfg, _) = test_configs(&net, vec![0x1302], vec![], false, 2);
        let (record, _) = client_begin(&cfg).unwrap();
        let (_, payload) = wire::parse_record(&record).unwrap();
        let (_, body) = wire::parse_handshake(payload).unwrap();
        let ch = ClientHello::decode_body(body).unwrap();
        assert!(ch.key_share.dhke_public.is_some());
        assert!(ch.key_share.qkd.is_none());
        assert!(ch.key_share.pqc.is_none());

        // Hybrid-first preference order is preserved.
        let (cfg, _) = test_configs(&net, vec![DHKE_QKD_PQC_SUITE, 0x1302], vec![], false, 3);
        let (record, _) = client_begin(&cfg).unwrap();
        let (_, payload) = wire::parse_record(&record).unwrap();
        let (_, body) = wire::parse_handshake(payload).unwrap();
        let ch = ClientHello::decode_body(body).unwrap();
        assert_eq!(ch.offered_suites, vec![DHKE_QKD_PQC_SUITE, 0x1302]);
    }

    #[test]
    fn empty_offer_rejected() {
        let net = test_network();
        let (mut cfg, _) = test_configs(&net, vec![0x1302], vec![], false, 16);
        cfg.offered_suites.clear();
        assert!(matches!(
            client_begin(&cfg),
            Err(HandshakeError::Unexpected(_))
        ));
    }

    #[test]
    fn conflicting_dhke_variants_rejected() {
        let net = test_network();
        // 0xFF00 uses finite-field DH, 0x1302 uses ECDH.
        let (cfg, _) = test_configs(&net, vec![0xFF00, 0x1302], vec![], false, 4);
        assert!(matches!(
            client_begin(&cfg),
            Err(HandshakeError::ConflictingDhkeGroups)
        ));
    }

    #[test]
    fn full_direct_handshake_agrees() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            false,
            5,
        );
        let (c, s) = run_handshake(&ccfg, &scfg).unwrap();
        assert_eq!(c.schedule().client_write_key, s.schedule().client_write_key);
        assert_eq!(c.schedule().server_write_key, s.schedule().server_write_key);
        assert_eq!(c.schedule().generation, 0);
    }

    #[test]
    fn provisioned_handshake_has_no_open_connect() {
        let net = test_network();
        let before_c = net.lkms(&"norte".into()).counters();
        let before_s = net.lkms(&"concepcion".into()).counters();
        let (ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            true,
            6,
        );
        let (c, s) = run_handshake(&ccfg, &scfg).unwrap();
        assert_eq!(c.schedule().client_write_key, s.schedule().client_write_key);
        let after_c = net.lkms(&"norte".into()).counters();
        let after_s = net.lkms(&"concepcion".into()).counters();
        assert_eq!(after_c.open_connect, before_c.open_connect);
        assert_eq!(after_s.open_connect, before_s.open_connect);
        assert_eq!(after_c.get_key, before_c.get_key + 1);
        assert_eq!(after_s.get_key, before_s.get_key + 1);
    }

    #[test]
    fn fallback_to_classical_when_server_lacks_hybrid() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE, 0x1302],
            vec![0x1302],
            false,
            7,
        );
        let (c, _s) = run_handshake(&ccfg, &scfg).unwrap();
        assert_eq!(c.schedule().suite.code_point, 0x1302);
    }

    #[test]
    fn no_common_suite_fails() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(&net, vec![DHKE_QKD_PQC_SUITE], vec![0x1302], false, 8);
        let err = run_handshake(&ccfg, &scfg).unwrap_err();
        assert!(matches!(err, HandshakeError::NoCommonSuite));
        assert_eq!(err.alert(), Some(Alert::HandshakeFailure));
    }

    #[test]
    fn tampered_ca_signature_rejected() {
        let net = test_network();
        let (ccfg, mut scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            true,
            9,
        );
        scfg.identity.ca_sig[0] ^= 1;
        let err = run_handshake(&ccfg, &scfg).unwrap_err();
        assert!(matches!(err, HandshakeError::BadCertificate(_)));
        assert_eq!(err.alert(), Some(Alert::BadCertificate));
    }

    #[test]
    fn wrong_hostname_rejected() {
        let net = test_network();
        let (mut ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            true,
            10,
        );
        ccfg.expected_hostname = "evil.example".into();
        assert!(matches!(
            run_handshake(&ccfg, &scfg),
            Err(HandshakeError::BadCertificate("hostname mismatch"))
        ));
    }

    #[test]
    fn transcript_mutation_aborts() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            true,
            11,
        );
        // Flip one byte of the ClientHello after the client built it; the
        // server sees a different transcript and the client's Finished check
        // fails (or the share is garbled and an earlier step errors).
        let (mut ch_record, mut client) = client_begin(&ccfg).unwrap();
        let idx = ch_record.len() - 1;
        ch_record[idx] ^= 0x01;
        let result = (|| -> Result<(), HandshakeError> {
            let (sh_record, mut server) = server_respond(&scfg, &ch_record)?;
            client.process_server_hello(&sh_record)?;
            exchange_qkd_keys(&mut client, &mut server)?;
            let flight = server.server_authenticate()?;
            let fin = client.client_finish(&flight.certificate, &flight.finished)?;
            server.server_verify_finish(&fin)?;
            Ok(())
        })();
        assert!(result.is_err());
    }

    #[test]
    fn stale_provisioned_coordinates_abort() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            true,
            12,
        );
        let (ch_record, _client) = client_begin(&ccfg).unwrap();
        // Close the provisioned stream between hello emission and the
        // server's fetch; replaying the hello must abort.
        let ksid = net
            .kps(&"norte".into())
            .stream_for_peer(&"concepcion".into())
            .unwrap()
            .ksid;
        net.lkms(&"norte".into()).close(ksid).unwrap();
        let err = server_respond(&scfg, &ch_record).unwrap_err();
        assert!(matches!(
            err,
            HandshakeError::Qkd(Etsi004Error::UnknownKsid)
                | HandshakeError::Qkd(Etsi004Error::StreamExhausted)
        ));
    }

    #[test]
    fn classical_fallback_triggers_no_qkd_or_pqc_calls() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(&net, vec![0x1302], vec![0xFF0A, 0x1302], false, 13);
        let before = net.lkms(&"norte".into()).counters();
        let (c, _s) = run_handshake(&ccfg, &scfg).unwrap();
        assert_eq!(c.schedule().suite.code_point, 0x1302);
        let after = net.lkms(&"norte".into()).counters();
        assert_eq!(before, after);
    }

    #[test]
    fn finished_under_wrong_generation_fails() {
        let net = test_network();
        let (ccfg, scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            true,
            14,
        );
        let (ch_record, mut client) = client_begin(&ccfg).unwrap();
        let (sh_record, mut server) = server_respond(&scfg, &ch_record).unwrap();
        client.process_server_hello(&sh_record).unwrap();
        exchange_qkd_keys(&mut client, &mut server).unwrap();
        let flight = server.server_authenticate().unwrap();
        let fin = client.client_finish(&flight.certificate, &flight.finished).unwrap();
        // Re-seal the Finished under next-generation keys; the server must
        // reject it.
        let schedule = client.schedule().unwrap().clone();
        let next = schedule.derived_next_generation();
        let (_, plaintext) = open_record_payload(
            schedule.suite.aead,
            &schedule.client_write_key,
            &schedule.client_write_iv,
            0,
            &fin,
        )
        .unwrap();
        let resealed = seal_record_payload(
            schedule.suite.aead,
            &next.client_write_key,
            &next.client_write_iv,
            0,
            content_type::HANDSHAKE,
            &plaintext,
        )
        .unwrap();
        assert!(matches!(
            server.server_verify_finish(&resealed),
            Err(HandshakeError::DecryptError)
        ));
    }

    #[test]
    fn empty_buffer_exhausts_on_handshake_path() {
        // Rate-zero links with nothing prefilled: the stream opens but the
        // key retrieval exhausts within the QoS timeout and the handshake
        // aborts.
        let cfg = TopologyConfig {
            nodes: vec![
                NodeConfig {
                    id: "norte".into(),
                    domain: "telco-a".into(),
                },
                NodeConfig {
                    id: "concepcion".into(),
                    domain: "telco-a".into(),
                },
            ],
            links: vec![LinkConfig {
                a: "norte".into(),
                b: "concepcion".into(),
                key_rate: 0.0,
                buffer_capacity: 16,
                seed: 1,
                chunk_size: 16,
            }],
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
            provision: vec![],
        };
        let net = Network::deploy(
            cfg,
            DeployOptions {
                seed: Some(15),
                prefill_secs: 0.0,
            },
        )
        .unwrap();
        let (mut ccfg, mut scfg) = test_configs(
            &net,
            vec![DHKE_QKD_PQC_SUITE],
            vec![DHKE_QKD_PQC_SUITE],
            false,
            15,
        );
        let qos = QoS::new(16, 150, 3600);
        ccfg.qkd = ClientQkdConfig::Direct {
            lkms: net.lkms(&"norte".into()),
            app_id: QkdAppId::new("tls-client@norte.telco-a"),
            qos: qos.clone(),
        };
        scfg.qkd = ServerQkdConfig::Direct {
            lkms: net.lkms(&"concepcion".into()),
            app_id: QkdAppId::new("tls-server@concepcion.telco-a"),
            qos,
        };
        let err = run_handshake(&ccfg, &scfg).unwrap_err();
        assert!(matches!(
            err,
            HandshakeError::Qkd(Etsi004Error::StreamExhausted)
        ));
    }

    #[test]
    fn alert_record_encoding() {
        let rec = alert_record(Alert::HandshakeFailure);
        let (h, payload) = wire::parse_record(&rec).unwrap();
        assert_eq!(h.content_type, content_type::ALERT);
        assert_eq!(payload, &[2, 40]);
    }
}
