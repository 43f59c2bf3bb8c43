//! Application-data record protection and the extended Key Update rekeying
//! protocol, including rekey-threshold accounting.
//!
//! Records are sealed with the suite AEAD; nonces are the write IV XORed
//! with the per-generation sequence number, and the 5-byte record header is
//! the associated data. A Key Update round replaces the whole schedule with
//! a fresh, non-derived hybrid combination: the initiator sends fresh DHKE
//! and KEM public material under the old keys, the responder answers with
//! its own fresh material (request_update = 0) under the old keys and
//! switches, and both sides fetch the next chunk of the same QKD stream.
//! QKD application identifiers never appear in Key Update messages.
//!
//! Concurrent initiations from both ends merge into a single round: both
//! answer with request_update = 0 and the new generation combines both
//! exchanges' secrets (client-initiated material first), so generations
//! advance by exactly one with no update storm.

use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::etsi004::{Etsi004Error, Ksid, Lkms};
use crate::handshake::{schedule_from_pre_master, SessionKeySchedule};
use crate::provider::{AeadAlg, CryptoProvider, KeyPair, ProviderError, SessionRng, AEAD_NONCE_LEN, AEAD_TAG_LEN};
use crate::suite::{KexMethod, SharedSecretSet};
use crate::wire::{
    self, content_type, msg_type, KeyUpdateMessage, PqcShare, RecordHeader, WireError,
    MAX_RECORD_PLAINTEXT,
};

/// Default rekey threshold: the floor of the AES-GCM single-key record
/// bound, 2^24.5 full-size records.
pub const DEFAULT_REKEY_THRESHOLD: u64 = 23_726_566;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("plaintext of {0} bytes exceeds the per-record bound")]
    RecordOverflow(usize),
    #[error("record failed to decrypt")]
    DecryptError,
    #[error("key update message out of protocol order")]
    UnexpectedKeyUpdate,
    #[error("malformed key update: {0}")]
    MalformedKeyUpdate(&'static str),
    #[error("peer alert {0}")]
    AlertReceived(u8),
    #[error("unexpected handshake message in the record stream")]
    UnexpectedHandshake,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("QKD retrieval failed: {0}")]
    Qkd(#[from] Etsi004Error),
}

/// Connection endpoint role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Client,
    Server,
}

/// Rekey trigger configuration: a record-count threshold, an optional timer,
/// or both.
#[derive(Debug, Clone)]
pub struct RekeyPolicy {
    pub max_records: u64,
    pub max_age: Option<Duration>,
}

impl Default for RekeyPolicy {
    fn default() -> Self {
        RekeyPolicy {
            max_records: DEFAULT_REKEY_THRESHOLD,
            max_age: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RekeyAdvice {
    Ok,
    UpdateRecommended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitiateOutcome {
    /// The Key Update record to transmit.
    Sent,
    /// A round is already outstanding; the request fires when it completes.
    Queued,
}

/// Handle to the QKD stream a connection keeps consuming across rekeys; the
/// application identifiers and KSID stay fixed for the connection lifetime.
#[derive(Clone)]
pub struct QkdStreamHandle {
    pub lkms: Arc<Lkms>,
    pub ksid: Ksid,
    /// Index the handshake consumed; rekey r consumes `base_index + r`.
    pub base_index: u64,
}

// ---------------------------------------------------------------------------
// Raw record sealing.
// ---------------------------------------------------------------------------

pub(crate) fn build_nonce(iv: &[u8], seq: u64) -> [u8; AEAD_NONCE_LEN] {
    let mut nonce = [0u8; AEAD_NONCE_LEN];
    nonce.copy_from_slice(iv);
    for (i, b) in seq.to_be_bytes().iter().enumerate() {
        nonce[AEAD_NONCE_LEN - 8 + i] ^= b;
    }
    nonce
}

/// Seals one record under explicit keys.
pub fn seal_record_payload(
    aead: AeadAlg,
    key: &[u8],
    iv: &[u8],
    seq: u64,
    record_type: u8,
    plaintext: &[u8],
) -> Result<Vec<u8>, RecordError> {
    if plaintext.len() > MAX_RECORD_PLAINTEXT {
        return Err(RecordError::RecordOverflow(plaintext.len()));
    }
    let header = RecordHeader::new(record_type, (plaintext.len() + AEAD_TAG_LEN) as u16);
    let aad = header.encode();
    let nonce = build_nonce(iv, seq);
    let ciphertext = aead.seal(key, &nonce, &aad, plaintext)?;
    let mut record = Vec::with_capacity(aad.len() + ciphertext.len());
    record.extend_from_slice(&aad);
    record.extend_from_slice(&ciphertext);
    Ok(record)
}

/// Opens one record under explicit keys, returning its content type and
/// plaintext.
pub fn open_record_payload(
    aead: AeadAlg,
    key: &[u8],
    iv: &[u8],
    seq: u64,
    record: &[u8],
) -> Result<(u8, Vec<u8>), RecordError> {
    let (header, ciphertext) = wire::parse_record(record)?;
    let nonce = build_nonce(iv, seq);
    let plaintext = aead
        .open(key, &nonce, &header.encode(), ciphertext)?
        .ok_or(RecordError::DecryptError)?;
    Ok((header.content_type, plaintext))
}

// ---------------------------------------------------------------------------
// Connection.
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct DirectionKeys {
    key: Vec<u8>,
    iv: Vec<u8>,
    seq: u64,
}

struct PendingRekey {
    dhke: Option<KeyPair>,
    kem: Option<KeyPair>,
    qkd_chunk: Option<Vec<u8>>,
    init_msg: Vec<u8>,
}

struct ResponderLeg {
    secrets: SharedSecretSet,
    peer_init_msg: Vec<u8>,
    reply_msg: Vec<u8>,
}

enum RekeyState {
    Idle,
    AwaitingReply(PendingRekey),
    /// We initiated and then received the peer's initiation: both legs run
    /// and merge into one generation bump.
    Crossed {
        ours: PendingRekey,
        responder: ResponderLeg,
    },
}

/// One side of an established connection in the application-data phase.
pub struct Connection {
    side: Side,
    provider: CryptoProvider,
    schedule: SessionKeySchedule,
    rng: SessionRng,
    qkd: Option<QkdStreamHandle>,
    send: DirectionKeys,
    recv: DirectionKeys,
    /// Previous-generation receive keys kept alive until the first record of
    /// the new generation opens.
    prev_recv: Option<DirectionKeys>,
    sealed_this_generation: u64,
    generation_started: Instant,
    policy: RekeyPolicy,
    rekey: RekeyState,
    queued_initiation: bool,
    outbox: Vec<Vec<u8>>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("side", &self.side)
            .field("suite", &self.schedule.suite.name)
            .field("generation", &self.schedule.generation)
            .finish_non_exhaustive()
    }
}

impl Connection {
    pub(crate) fn new(
        side: Side,
        provider: CryptoProvider,
        schedule: SessionKeySchedule,
        rng: SessionRng,
        qkd: Option<QkdStreamHandle>,
        send_seq: u64,
        recv_seq: u64,
    ) -> Self {
        let (send, recv) = directional_keys(side, &schedule, send_seq, recv_seq);
        Connection {
            side,
            provider,
            schedule,
            rng,
            qkd,
            send,
            recv,
            prev_recv: None,
            sealed_this_generation: 0,
            generation_started: Instant::now(),
            policy: RekeyPolicy::default(),
            rekey: RekeyState::Idle,
            queued_initiation: false,
            outbox: Vec::new(),
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn schedule(&self) -> &SessionKeySchedule {
        &self.schedule
    }

    pub fn generation(&self) -> u64 {
        self.schedule.generation
    }

    pub fn records_sealed_this_generation(&self) -> u64 {
        self.sealed_this_generation
    }

    pub fn set_rekey_policy(&mut self, policy: RekeyPolicy) {
        self.policy = policy;
    }

    /// Records this connection needs transmitted to the peer (Key Update
    /// replies and queued initiations).
    pub fn take_outbox(&mut self) -> Vec<Vec<u8>> {
        std::mem::take(&mut self.outbox)
    }

    /// True while a Key Update round is outstanding.
    pub fn rekey_in_progress(&self) -> bool {
        !matches!(self.rekey, RekeyState::Idle)
    }

    /// Recommends an update once the sealed-record count reaches the policy
    /// threshold or the generation outlives the policy timer.
    pub fn rekey_threshold_check(&self) -> RekeyAdvice {
        if self.sealed_this_generation >= self.policy.max_records {
            return RekeyAdvice::UpdateRecommended;
        }
        if let Some(age) = self.policy.max_age {
            if self.generation_started.elapsed() >= age {
                return RekeyAdvice::UpdateRecommended;
            }
        }
        RekeyAdvice::Ok
    }

    /// Seals one application-data record under the current send keys.
    pub fn seal(&mut self, plaintext: &[u8]) -> Result<Vec<u8>, RecordError> {
        let record = seal_record_payload(
            self.schedule.suite.aead,
            &self.send.key,
            &self.send.iv,
            self.send.seq,
            content_type::APPLICATION_DATA,
            plaintext,
        )?;
        self.send.seq += 1;
        self.sealed_this_generation += 1;
        Ok(record)
    }

    /// Opens one record. Application data comes back as `Some(plaintext)`;
    /// Key Update handling happens internally (responses land in the
    /// outbox) and yields `None`.
    pub fn open(&mut self, record: &[u8]) -> Result<Option<Vec<u8>>, RecordError> {
        let aead = self.schedule.suite.aead;
        let attempt = open_record_payload(aead, &self.recv.key, &self.recv.iv, self.recv.seq, record);
        let (ct_type, plaintext, from_prev) = match attempt {
            Ok((t, p)) => {
                self.recv.seq += 1;
                // The first record of the new generation retires the old
                // receive window.
                self.prev_recv = None;
                (t, p, false)
            }
            Err(RecordError::DecryptError) => {
                let Some(prev) = self.prev_recv.as_mut() else {
                    return Err(RecordError::DecryptError);
                };
                let (t, p) = open_record_payload(aead, &prev.key, &prev.iv, prev.seq, record)
                    .map_err(|_| RecordError::DecryptError)?;
                prev.seq += 1;
                (t, p, true)
            }
            Err(e) => return Err(e),
        };
        match ct_type {
            content_type::APPLICATION_DATA => Ok(Some(plaintext)),
            content_type::HANDSHAKE => {
                let (t, body) = wire::parse_handshake(&plaintext)?;
                if t != msg_type::KEY_UPDATE {
                    return Err(RecordError::UnexpectedHandshake);
                }
                let msg = KeyUpdateMessage::decode_body(body)?;
                let msg_bytes = wire::frame_handshake(t, body)?;
                let _ = from_prev;
                self.handle_key_update(msg, msg_bytes)?;
                Ok(None)
            }
            content_type::ALERT => Err(RecordError::AlertReceived(
                plaintext.get(1).copied().unwrap_or(0),
            )),
            _ => Err(RecordError::UnexpectedHandshake),
        }
    }

    /// Starts a Key Update round: fresh DHKE and KEM pairs, the next QKD
    /// chunk of the connection stream, and a request_update=1 message sealed
    /// under the current keys. A second initiation while one is outstanding
    /// queues instead of interleaving.
    pub fn initiate_key_update(&mut self) -> Result<InitiateOutcome, RecordError> {
        if !matches!(self.rekey, RekeyState::Idle) {
            self.queued_initiation = true;
            return Ok(InitiateOutcome::Queued);
        }
        let suite = self.schedule.suite;
        let dhke = match suite.dhke_variant() {
            Some(KexMethod::Dh) => Some(self.provider.dh.generate_keypair(&mut self.rng)?),
            Some(_) => Some(self.provider.ecdh.generate_keypair(&mut self.rng)?),
            None => None,
        };
        let kem = if suite.has_kex(KexMethod::Pqc) {
            Some(self.provider.kem.generate_keypair(&mut self.rng)?)
        } else {
            None
        };
        let qkd_chunk = self.fetch_next_chunk()?;
        let msg = KeyUpdateMessage {
            request_update: 1,
            new_pqc: kem.as_ref().map(|kp| PqcShare::PublicKey(kp.public.clone())),
            new_dhke_public: dhke.as_ref().map(|kp| {
                let group = match suite.dhke_variant() {
                    Some(KexMethod::Dh) => self.provider.dh.group_id(),
                    _ => self.provider.ecdh.group_id(),
                };
                (group, kp.public.clone())
            }),
        };
        let init_msg = msg.encode()?;
        let record = self.seal_handshake(&init_msg)?;
        self.rekey = RekeyState::AwaitingReply(PendingRekey {
            dhke,
            kem,
            qkd_chunk,
            init_msg,
        });
        self.outbox.push(record);
        Ok(InitiateOutcome::Sent)
    }

    fn seal_handshake(&mut self, msg: &[u8]) -> Result<Vec<u8>, RecordError> {
        let record = seal_record_payload(
            self.schedule.suite.aead,
            &self.send.key,
            &self.send.iv,
            self.send.seq,
            content_type::HANDSHAKE,
            msg,
        )?;
        self.send.seq += 1;
        self.sealed_this_generation += 1;
        Ok(record)
    }

    /// Next chunk of the connection's QKD stream: rekey r consumes index
    /// `base + r`, the same index on both peers.
    fn fetch_next_chunk(&mut self) -> Result<Option<Vec<u8>>, RecordError> {
        if !self.schedule.suite.has_kex(KexMethod::Qkd) {
            return Ok(None);
        }
        let handle = self
            .qkd
            .as_ref()
            .ok_or(RecordError::MalformedKeyUpdate("no QKD stream bound"))?;
        let index = handle.base_index + self.schedule.generation + 1;
        Ok(Some(handle.lkms.get_key(handle.ksid, index)?))
    }

    fn handle_key_update(
        &mut self,
        msg: KeyUpdateMessage,
        msg_bytes: Vec<u8>,
    ) -> Result<(), RecordError> {
        match msg.request_update {
            1 => self.handle_peer_initiation(msg, msg_bytes),
            0 => self.handle_reply(msg, msg_bytes),
            _ => Err(RecordError::MalformedKeyUpdate("bad request_update flag")),
        }
    }

    /// Computes the responder-side secrets for a peer-initiated leg.
    fn responder_secrets(
        &mut self,
        msg: &KeyUpdateMessage,
        qkd_chunk: Option<Vec<u8>>,
    ) -> Result<(SharedSecretSet, KeyUpdateMessage), RecordError> {
        let suite = self.schedule.suite;
        let mut secrets = SharedSecretSet::default();
        let mut reply = KeyUpdateMessage {
            request_update: 0,
            new_pqc: None,
            new_dhke_public: None,
        };
        if let Some(variant) = suite.dhke_variant() {
            let (group, peer_public) = msg
                .new_dhke_public
                .as_ref()
                .ok_or(RecordError::MalformedKeyUpdate("missing DHKE share"))?;
            let kx = match variant {
                KexMethod::Dh => &self.provider.dh,
                _ => &self.provider.ecdh,
            };
            if *group != kx.group_id() {
                return Err(RecordError::MalformedKeyUpdate("DHKE group mismatch"));
            }
            let kp = kx.generate_keypair(&mut self.rng)?;
            secrets.dhke = Some(kx.shared_secret(&kp.private, peer_public)?);
            reply.new_dhke_public = Some((kx.group_id(), kp.public));
        } else if msg.new_dhke_public.is_some() {
            return Err(RecordError::MalformedKeyUpdate("unexpected DHKE share"));
        }
        if suite.has_kex(KexMethod::Pqc) {
            let share = msg
                .new_pqc
                .as_ref()
                .ok_or(RecordError::MalformedKeyUpdate("missing PQC share"))?;
            let PqcShare::PublicKey(pk) = share else {
                return Err(RecordError::MalformedKeyUpdate(
                    "initiator PQC share must be a public key",
                ));
            };
            let (ct, ss) = self.provider.kem.encapsulate(pk, &mut self.rng)?;
            secrets.pqc = Some(ss);
            reply.new_pqc = Some(PqcShare::Ciphertext(ct));
        } else if msg.new_pqc.is_some() {
            return Err(RecordError::MalformedKeyUpdate("unexpected PQC share"));
        }
        secrets.qkd = qkd_chunk;
        Ok((secrets, reply))
    }

    fn handle_peer_initiation(
        &mut self,
        msg: KeyUpdateMessage,
        msg_bytes: Vec<u8>,
    ) -> Result<(), RecordError> {
        match std::mem::replace(&mut self.rekey, RekeyState::Idle) {
            RekeyState::Idle => {
                let chunk = self.fetch_next_chunk()?;
                let (secrets, reply) = self.responder_secrets(&msg, chunk)?;
                let reply_msg = reply.encode()?;
                let record = self.seal_handshake(&reply_msg)?;
                self.outbox.push(record);
                // Reply is out under the old keys; switch now. The peer's
                // old-generation records may still be in flight, so the old
                // receive keys stay alive until new-generation traffic
                // arrives.
                let th = self
                    .schedule
                    .suite
                    .hash
                    .hash(&[&msg_bytes, &reply_msg]);
                self.install_generation(&secrets, &th, true)?;
                self.try_fire_queued()
            }
            RekeyState::AwaitingReply(ours) => {
                // Crossed initiations: answer the peer's leg and wait for its
                // answer to ours; the single QKD chunk serves the merged
                // round.
                let chunk = ours.qkd_chunk.clone();
                let (secrets, reply) = self.responder_secrets(&msg, chunk)?;
                let reply_msg = reply.encode()?;
                let record = self.seal_handshake(&reply_msg)?;
                self.outbox.push(record);
                self.rekey = RekeyState::Crossed {
                    ours,
                    responder: ResponderLeg {
                        secrets,
                        peer_init_msg: msg_bytes,
                        reply_msg,
                    },
                };
                Ok(())
            }
            state @ RekeyState::Crossed { .. } => {
                self.rekey = state;
                Err(RecordError::UnexpectedKeyUpdate)
            }
        }
    }

    /// Completes the initiator leg: recover both fresh secrets from the
    /// reply and switch generations.
    fn initiator_secrets(
        &mut self,
        ours: &PendingRekey,
        msg: &KeyUpdateMessage,
    ) -> Result<SharedSecretSet, RecordError> {
        let suite = self.schedule.suite;
        let mut secrets = SharedSecretSet::default();
        if let Some(variant) = suite.dhke_variant() {
            let (group, peer_public) = msg
                .new_dhke_public
                .as_ref()
                .ok_or(RecordError::MalformedKeyUpdate("missing DHKE share"))?;
            let kx = match variant {
                KexMethod::Dh => &self.provider.dh,
                _ => &self.provider.ecdh,
            };
            if *group != kx.group_id() {
                return Err(RecordError::MalformedKeyUpdate("DHKE group mismatch"));
            }
            let private = ours
                .dhke
                .as_ref()
                .ok_or(RecordError::MalformedKeyUpdate("missing DHKE key pair"))?;
            secrets.dhke = Some(kx.shared_secret(&private.private, peer_public)?);
        }
        if suite.has_kex(KexMethod::Pqc) {
            let share = msg
                .new_pqc
                .as_ref()
                .ok_or(RecordError::MalformedKeyUpdate("missing PQC share"))?;
            let PqcShare::Ciphertext(ct) = share else {
                return Err(RecordError::MalformedKeyUpdate(
                    "responder PQC share must be a ciphertext",
                ));
            };
            let private = ours
                .kem
                .as_ref()
                .ok_or(RecordError::MalformedKeyUpdate("missing KEM key pair"))?;
            secrets.pqc = Some(self.provider.kem.decapsulate(&private.private, ct)?);
        }
        secrets.qkd = ours.qkd_chunk.clone();
        Ok(secrets)
    }

    fn handle_reply(&mut self, msg: KeyUpdateMessage, msg_bytes: Vec<u8>) -> Result<(), RecordError> {
        match std::mem::replace(&mut self.rekey, RekeyState::Idle) {
            RekeyState::AwaitingReply(ours) => {
                let secrets = self.initiator_secrets(&ours, &msg)?;
                let th = self
                    .schedule
                    .suite
                    .hash
                    .hash(&[&ours.init_msg, &msg_bytes]);
                // Everything the responder sent after its reply is already
                // new-generation; the old receive keys can drop immediately.
                self.install_generation(&secrets, &th, false)?;
                self.try_fire_queued()
            }
            RekeyState::Crossed { ours, responder } => {
                let initiator_secrets = self.initiator_secrets(&ours, &msg)?;
                // Merge both legs deterministically: the client-initiated
                // leg's material comes first in each slot.
                let (client_leg, server_leg) = match self.side {
                    Side::Client => (&initiator_secrets, &responder.secrets),
                    Side::Server => (&responder.secrets, &initiator_secrets),
                };
                let merge = |a: &Option<Vec<u8>>, b: &Option<Vec<u8>>| match (a, b) {
                    (Some(x), Some(y)) => {
                        let mut m = x.clone();
                        m.extend_from_slice(y);
                        Some(m)
                    }
                    _ => None,
                };
                let secrets = SharedSecretSet {
                    dhke: merge(&client_leg.dhke, &server_leg.dhke),
                    qkd: ours.qkd_chunk.clone(),
                    pqc: merge(&client_leg.pqc, &server_leg.pqc),
                };
                // Transcript over all four messages in client-first order.
                let (c_init, s_init, c_reply, s_reply) = match self.side {
                    Side::Client => (
                        &ours.init_msg,
                        &responder.peer_init_msg,
                        &responder.reply_msg,
                        &msg_bytes,
                    ),
                    Side::Server => (
                        &responder.peer_init_msg,
                        &ours.init_msg,
                        &msg_bytes,
                        &responder.reply_msg,
                    ),
                };
                let th = self
                    .schedule
                    .suite
                    .hash
                    .hash(&[c_init, s_init, c_reply, s_reply]);
                self.install_generation(&secrets, &th, true)?;
                self.try_fire_queued()
            }
            state @ RekeyState::Idle => {
                self.rekey = state;
                Err(RecordError::UnexpectedKeyUpdate)
            }
        }
    }

    fn try_fire_queued(&mut self) -> Result<(), RecordError> {
        if self.queued_initiation {
            self.queued_initiation = false;
            self.initiate_key_update()?;
        }
        Ok(())
    }

    /// Installs generation g+1 from freshly combined secrets.
    fn install_generation(
        &mut self,
        secrets: &SharedSecretSet,
        transcript_hash: &[u8],
        keep_old_recv: bool,
    ) -> Result<(), RecordError> {
        let suite = self.schedule.suite;
        let pre_master = suite
            .hybrid_combine(secrets, transcript_hash, suite.hash.output_len())
            .map_err(|_| RecordError::MalformedKeyUpdate("secret set mismatch"))?;
        let next = schedule_from_pre_master(
            suite,
            pre_master,
            transcript_hash,
            self.schedule.generation + 1,
        );
        let (send, recv) = directional_keys(self.side, &next, 0, 0);
        let old_recv = std::mem::replace(&mut self.recv, recv);
        self.prev_recv = keep_old_recv.then_some(old_recv);
        self.send = send;
        self.schedule = next;
        self.sealed_this_generation = 0;
        self.generation_started = Instant::now();
        Ok(())
    }
}

fn directional_keys(
    side: Side,
    schedule: &SessionKeySchedule,
    send_seq: u64,
    recv_seq: u64,
) -> (DirectionKeys, DirectionKeys) {
    let client = DirectionKeys {
        key: schedule.client_write_key.clone(),
        iv: schedule.client_write_iv.clone(),
        seq: 0,
    };
    let server = DirectionKeys {
        key: schedule.server_write_key.clone(),
        iv: schedule.server_write_iv.clone(),
        seq: 0,
    };
    let (mut send, mut recv) = match side {
        Side::Client => (client, server),
        Side::Server => (server, client),
    };
    send.seq = send_seq;
    recv.seq = recv_seq;
    (send, recv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handshake::tests::{test_configs, test_network};
    use crate::handshake::run_handshake;
    use crate::suite::DHKE_QKD_PQC_SUITE;
    use proptest::prelude::*;

    fn connected_pair(suite: u16, seed: u64) -> (Connection, Connection) {
        let net = test_network();
        let (ccfg, scfg) = test_configs(&net, vec![suite], vec![suite], true, seed);
        run_handshake(&ccfg, &scfg).unwrap()
    }

    /// Delivers every record one side queued to the other.
    fn pump(from: &mut Connection, to: &mut Connection) {
        for record in from.take_outbox() {
            to.open(&record).unwrap();
        }
    }

    #[test]
    fn default_threshold_is_floor_of_the_record_bound() {
        assert_eq!(DEFAULT_REKEY_THRESHOLD, (2f64.powf(24.5)).floor() as u64);
    }

    #[test]
    fn seal_open_roundtrip_and_bounds() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 100);
        for len in [0usize, 1, 1000, MAX_RECORD_PLAINTEXT] {
            let msg = vec![0xA5u8; len];
            let rec = c.seal(&msg).unwrap();
            assert_eq!(s.open(&rec).unwrap().unwrap(), msg);
        }
        let too_big = vec![0u8; MAX_RECORD_PLAINTEXT + 1];
        assert!(matches!(
            c.seal(&too_big),
            Err(RecordError::RecordOverflow(_))
        ));
    }

    #[test]
    fn sequence_numbers_advance_and_bind() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 101);
        let r1 = c.seal(b"one").unwrap();
        let r2 = c.seal(b"two").unwrap();
        // Out-of-order delivery fails the nonce binding.
        assert!(matches!(s.open(&r2), Err(RecordError::DecryptError)));
        assert_eq!(s.open(&r1).unwrap().unwrap(), b"one");
        assert_eq!(s.open(&r2).unwrap().unwrap(), b"two");
    }

    #[test]
    fn cross_generation_records_fail() {
        let (c, _s) = connected_pair(DHKE_QKD_PQC_SUITE, 102);
        let g0 = c.schedule().clone();
        let g1 = g0.derived_next_generation();
        let sealed = seal_record_payload(
            g1.suite.aead,
            &g1.client_write_key,
            &g1.client_write_iv,
            0,
            content_type::APPLICATION_DATA,
            b"generation one",
        )
        .unwrap();
        assert!(matches!(
            open_record_payload(
                g0.suite.aead,
                &g0.client_write_key,
                &g0.client_write_iv,
                0,
                &sealed
            ),
            Err(RecordError::DecryptError)
        ));
    }

    #[test]
    fn threshold_check_boundary() {
        let (mut c, _s) = connected_pair(DHKE_QKD_PQC_SUITE, 103);
        c.set_rekey_policy(RekeyPolicy {
            max_records: 4,
            max_age: None,
        });
        for _ in 0..3 {
            c.seal(b"x").unwrap();
        }
        assert_eq!(c.rekey_threshold_check(), RekeyAdvice::Ok);
        c.seal(b"x").unwrap();
        assert_eq!(c.rekey_threshold_check(), RekeyAdvice::UpdateRecommended);
    }

    #[test]
    fn timer_trigger() {
        let (mut c, _s) = connected_pair(DHKE_QKD_PQC_SUITE, 104);
        c.set_rekey_policy(RekeyPolicy {
            max_records: u64::MAX,
            max_age: Some(Duration::from_millis(5)),
        });
        assert_eq!(c.rekey_threshold_check(), RekeyAdvice::Ok);
        std::thread::sleep(Duration::from_millis(10));
        assert_eq!(c.rekey_threshold_check(), RekeyAdvice::UpdateRecommended);
    }

    fn full_update_round(c: &mut Connection, s: &mut Connection) {
        assert_eq!(c.initiate_key_update().unwrap(), InitiateOutcome::Sent);
        pump(c, s); // KU(1) to the server
        pump(s, c); // KU(0) back
    }

    #[test]
    fn key_update_round_agrees_and_bumps_generation() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 105);
        full_update_round(&mut c, &mut s);
        assert_eq!(c.generation(), 1);
        assert_eq!(s.generation(), 1);
        assert_eq!(
            c.schedule().client_write_key,
            s.schedule().client_write_key
        );
        // Traffic flows under the new generation, both directions.
        let r = c.seal(b"post-rekey").unwrap();
        assert_eq!(s.open(&r).unwrap().unwrap(), b"post-rekey");
        let r = s.seal(b"echo").unwrap();
        assert_eq!(c.open(&r).unwrap().unwrap(), b"echo");
    }

    #[test]
    fn key_update_messages_seal_under_old_keys_only() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 106);
        let old = c.schedule().clone();
        c.initiate_key_update().unwrap();
        let init_record = c.take_outbox().remove(0);
        // Old client keys open it (sequence 1: the Finished used 0).
        let (t, _) = open_record_payload(
            old.suite.aead,
            &old.client_write_key,
            &old.client_write_iv,
            1,
            &init_record,
        )
        .unwrap();
        assert_eq!(t, content_type::HANDSHAKE);
        // Server processes it and replies under ITS old keys.
        s.open(&init_record).unwrap();
        let reply_record = s.take_outbox().remove(0);
        // The server's flight used sequences 0 and 1; the reply is next.
        let (t, _) = open_record_payload(
            old.suite.aead,
            &old.server_write_key,
            &old.server_write_iv,
            2,
            &reply_record,
        )
        .unwrap();
        assert_eq!(t, content_type::HANDSHAKE);
        // New-generation keys do NOT open either message.
        c.open(&reply_record).unwrap();
        let new = c.schedule().clone();
        assert!(open_record_payload(
            new.suite.aead,
            &new.client_write_key,
            &new.client_write_iv,
            0,
            &init_record
        )
        .is_err());
    }

    #[test]
    fn rekeyed_schedule_is_not_the_derived_one() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 107);
        let derived = c.schedule().derived_next_generation();
        full_update_round(&mut c, &mut s);
        assert_eq!(c.generation(), derived.generation);
        assert_ne!(c.schedule().client_write_key, derived.client_write_key);
        assert_ne!(c.schedule().master_secret, derived.master_secret);
    }

    #[test]
    fn key_update_reply_carries_no_app_ids() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 108);
        c.initiate_key_update().unwrap();
        let init_record = c.take_outbox().remove(0);
        s.open(&init_record).unwrap();
        let reply_record = s.take_outbox().remove(0);
        let old = c.schedule().clone();
        let (_, plaintext) = open_record_payload(
            old.suite.aead,
            &old.server_write_key,
            &old.server_write_iv,
            2,
            &reply_record,
        )
        .unwrap();
        let (_, body) = wire::parse_handshake(&plaintext).unwrap();
        let msg = KeyUpdateMessage::decode_body(body).unwrap();
        assert_eq!(msg.request_update, 0);
        assert!(matches!(msg.new_pqc, Some(PqcShare::Ciphertext(_))));
        // No QKD field exists in the message type; the raw bytes must not
        // contain either application id.
        let raw = String::from_utf8_lossy(&plaintext);
        assert!(!raw.contains("tls-client@"));
        assert!(!raw.contains("tls-server@"));
        c.open(&reply_record).unwrap();
    }

    #[test]
    fn app_data_between_update_messages_flows_under_old_keys() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 109);
        c.initiate_key_update().unwrap();
        let init_record = c.take_outbox().remove(0);
        // Initiator keeps sending under the old keys until the reply lands.
        let in_flight = c.seal(b"old generation data").unwrap();
        s.open(&init_record).unwrap();
        let reply = s.take_outbox().remove(0);
        // The responder has already switched; the straggler still opens via
        // the previous-generation window.
        assert_eq!(s.open(&in_flight).unwrap().unwrap(), b"old generation data");
        c.open(&reply).unwrap();
        // After the round, old-generation records are rejected: once the
        // responder has seen new-generation traffic, the old receive window
        // is retired.
        let (mut c2, mut s2) = connected_pair(DHKE_QKD_PQC_SUITE, 110);
        let old = c2.schedule().clone();
        full_update_round(&mut c2, &mut s2);
        let post = c2.seal(b"fresh").unwrap();
        assert_eq!(s2.open(&post).unwrap().unwrap(), b"fresh");
        let stale = seal_record_payload(
            old.suite.aead,
            &old.client_write_key,
            &old.client_write_iv,
            2,
            content_type::APPLICATION_DATA,
            b"stale",
        )
        .unwrap();
        assert!(s2.open(&stale).is_err());
    }

    #[test]
    fn second_initiation_queues() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 111);
        assert_eq!(c.initiate_key_update().unwrap(), InitiateOutcome::Sent);
        assert_eq!(c.initiate_key_update().unwrap(), InitiateOutcome::Queued);
        pump(&mut c, &mut s);
        pump(&mut s, &mut c);
        // Completing the first round fired the queued one.
        assert!(c.rekey_in_progress());
        pump(&mut c, &mut s);
        pump(&mut s, &mut c);
        assert_eq!(c.generation(), 2);
        assert_eq!(s.generation(), 2);
        assert_eq!(c.schedule().client_write_key, s.schedule().client_write_key);
    }

    #[test]
    fn crossed_initiations_merge_into_one_generation() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 112);
        c.initiate_key_update().unwrap();
        s.initiate_key_update().unwrap();
        let c_init = c.take_outbox().remove(0);
        let s_init = s.take_outbox().remove(0);
        // Cross delivery.
        c.open(&s_init).unwrap();
        s.open(&c_init).unwrap();
        let c_reply = c.take_outbox().remove(0);
        let s_reply = s.take_outbox().remove(0);
        c.open(&s_reply).unwrap();
        s.open(&c_reply).unwrap();
        assert_eq!(c.generation(), 1);
        assert_eq!(s.generation(), 1);
        assert_eq!(c.schedule().client_write_key, s.schedule().client_write_key);
        let r = c.seal(b"merged").unwrap();
        assert_eq!(s.open(&r).unwrap().unwrap(), b"merged");
        let r = s.seal(b"back").unwrap();
        assert_eq!(c.open(&r).unwrap().unwrap(), b"back");
    }

    #[test]
    fn rekey_works_without_optional_methods() {
        // QKD-only suite: the Key Update body carries the flag alone.
        let (mut c, mut s) = connected_pair(0xFF02, 113);
        full_update_round(&mut c, &mut s);
        assert_eq!(c.generation(), 1);
        assert_eq!(c.schedule().client_write_key, s.schedule().client_write_key);
        // PQC-only suite.
        let (mut c, mut s) = connected_pair(0xFF01, 114);
        full_update_round(&mut c, &mut s);
        assert_eq!(c.schedule().client_write_key, s.schedule().client_write_key);
    }

    #[test]
    fn unexpected_reply_is_an_error() {
        let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 115);
        c.initiate_key_update().unwrap();
        let init = c.take_outbox().remove(0);
        s.open(&init).unwrap();
        let reply = s.take_outbox().remove(0);
        c.open(&reply).unwrap();
        // Replaying the reply: it was sealed under the retired generation.
        assert!(c.open(&reply).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn roundtrip_random_payloads(data in proptest::collection::vec(any::<u8>(), 0..2048)) {
            let (mut c, mut s) = connected_pair(DHKE_QKD_PQC_SUITE, 116);
            let rec = c.seal(&data).unwrap();
            prop_assert_eq!(s.open(&rec).unwrap().unwrap(), data);
        }
    }
}
