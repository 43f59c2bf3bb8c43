//! Wire formats: record framing, handshake message encoding, and the
//! per-method TLV key-share layout. Frozen by golden-vector tests.
//!
//! Record framing (5-byte header, big-endian lengths):
//!
//! ```text
//! record        = type (u8) || version (u16 = 0x0304) || length (u16) || payload
//! ```
//!
//! Handshake messages carry a 4-byte header inside HANDSHAKE records:
//!
//! ```text
//! message       = msg_type (u8) || length (u24) || body
//! ```
//!
//! Message bodies:
//!
//! ```text
//! ClientHello   = version (u16) || client_random (32) || n_suites (u8) || n*u16
//!                 || key_share_len (u16) || key_share TLVs
//! ServerHello   = version (u16) || server_random (32) || selected_suite (u16)
//!                 || key_share_len (u16) || key_share TLVs
//! Certificate   = hostname (u16-prefixed UTF-8) || longterm_public (u16-prefixed)
//!                 || ephemeral_sig (u16-prefixed) || ca_sig (u16-prefixed)
//! Finished      = verify_data (u8-prefixed)
//! KeyUpdate     = request_update (u8) || [PQC TLV] || [DHKE TLV]
//! ```
//!
//! Key-share TLVs are `method_tag (u8) || length (u16) || value`:
//!
//! ```text
//! DHKE (0x01)   = group (u16) || public key
//! QKD  (0x02)   = 0x00 || application id (UTF-8)         direct mode
//!               | 0x01 || ksid (16) || key index (u64)   provisioned mode
//! PQC  (0x03)   = 0x00 || public key | 0x01 || ciphertext
//! ```

use thiserror::Error;

use crate::etsi004::Ksid;
use crate::provider::GroupId;

pub const PROTOCOL_VERSION: u16 = 0x0304;

pub const RECORD_HEADER_LEN: usize = 5;
/// Maximum plaintext bytes per record.
pub const MAX_RECORD_PLAINTEXT: usize = (1 << 14) - 1;

pub mod content_type {
    pub const ALERT: u8 = 21;
    pub const HANDSHAKE: u8 = 22;
    pub const APPLICATION_DATA: u8 = 23;
}

pub mod msg_type {
    pub const CLIENT_HELLO: u8 = 1;
    pub const SERVER_HELLO: u8 = 2;
    pub const CERTIFICATE: u8 = 11;
    pub const FINISHED: u8 = 20;
    pub const KEY_UPDATE: u8 = 24;
}

pub mod share_tag {
    pub const DHKE: u8 = 0x01;
    pub const QKD: u8 = 0x02;
    pub const PQC: u8 = 0x03;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("{0} bytes left over after message")]
    TrailingBytes(usize),
    #[error("unknown tag {tag:#04x} in {context}")]
    BadTag { context: &'static str, tag: u8 },
    #[error("field too long for its length prefix")]
    Overflow,
    #[error("invalid UTF-8 in text field")]
    BadText,
    #[error("record payload length mismatch")]
    BadRecordLength,
    #[error("unsupported protocol version {0:#06x}")]
    BadVersion(u16),
}

// ---------------------------------------------------------------------------
// Primitive readers/writers.
// ---------------------------------------------------------------------------

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub fn u24(&mut self) -> Result<usize, WireError> {
        let b = self.take(3)?;
        Ok(((b[0] as usize) << 16) | ((b[1] as usize) << 8) | b[2] as usize)
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn vec16(&mut self) -> Result<Vec<u8>, WireError> {
        let n = self.u16()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.remaining() != 0 {
            return Err(WireError::TrailingBytes(self.remaining()));
        }
        Ok(())
    }
}

fn put_vec16(out: &mut Vec<u8>, v: &[u8]) -> Result<(), WireError> {
    let len: u16 = v.len().try_into().map_err(|_| WireError::Overflow)?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(v);
    Ok(())
}

fn put_tlv(out: &mut Vec<u8>, tag: u8, value: &[u8]) -> Result<(), WireError> {
    out.push(tag);
    put_vec16(out, value)
}

// ---------------------------------------------------------------------------
// Record framing.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub content_type: u8,
    pub version: u16,
    pub length: u16,
}

impl RecordHeader {
    pub fn new(content_type: u8, length: u16) -> Self {
        RecordHeader {
            content_type,
            version: PROTOCOL_VERSION,
            length,
        }
    }

    pub fn encode(&self) -> [u8; RECORD_HEADER_LEN] {
        let v = self.version.to_be_bytes();
        let l = self.length.to_be_bytes();
        [self.content_type, v[0], v[1], l[0], l[1]]
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < RECORD_HEADER_LEN {
            return Err(WireError::Truncated);
        }
        Ok(RecordHeader {
            content_type: buf[0],
            version: u16::from_be_bytes([buf[1], buf[2]]),
            length: u16::from_be_bytes([buf[3], buf[4]]),
        })
    }
}

/// Frames `payload` into a complete record.
pub fn frame_record(content_type: u8, payload: &[u8]) -> Result<Vec<u8>, WireError> {
    let len: u16 = payload.len().try_into().map_err(|_| WireError::Overflow)?;
    let mut out = Vec::with_capacity(RECORD_HEADER_LEN + payload.len());
    out.extend_from_slice(&RecordHeader::new(content_type, len).encode());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Splits a record into its header and payload, checking the length field.
pub fn parse_record(record: &[u8]) -> Result<(RecordHeader, &[u8]), WireError> {
    let header = RecordHeader::decode(record)?;
    let payload = &record[RECORD_HEADER_LEN..];
    if payload.len() != header.length as usize {
        return Err(WireError::BadRecordLength);
    }
    Ok((header, payload))
}

/// Prepends the 4-byte handshake header to a message body.
pub fn frame_handshake(msg_type: u8, body: &[u8]) -> Result<Vec<u8>, WireError> {
    if body.len() > 0xFF_FFFF {
        return Err(WireError::Overflow);
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.push(msg_type);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
    out.extend_from_slice(body);
    Ok(out)
}

/// Splits a handshake message into its type and body.
pub fn parse_handshake(msg: &[u8]) -> Result<(u8, &[u8]), WireError> {
    let mut r = Reader::new(msg);
    let msg_type = r.u8()?;
    let len = r.u24()?;
    let body = r.take(len)?;
    r.finish()?;
    Ok((msg_type, body))
}

// ---------------------------------------------------------------------------
// Key share.
// ---------------------------------------------------------------------------

/// QKD slot of a key share: the application identifier in direct mode, or the
/// provisioned stream coordinates when a key-provisioning service fronts the
/// LKMS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QkdShare {
    AppId(String),
    Provisioned { ksid: Ksid, index: u64 },
}

/// PQC slot of a key share: a KEM public key from the initiating side, a
/// ciphertext from the responding side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PqcShare {
    PublicKey(Vec<u8>),
    Ciphertext(Vec<u8>),
}

impl PqcShare {
    pub fn bytes(&self) -> &[u8] {
        match self {
            PqcShare::PublicKey(b) | PqcShare::Ciphertext(b) => b,
        }
    }

    pub fn is_public_key(&self) -> bool {
        matches!(self, PqcShare::PublicKey(_))
    }
}

/// Per-method public material carried by the Hello messages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyShareExtension {
    pub dhke_public: Option<(GroupId, Vec<u8>)>,
    pub qkd: Option<QkdShare>,
    pub pqc: Option<PqcShare>,
}

impl KeyShareExtension {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        if let Some((group, public)) = &self.dhke_public {
            let mut v = Vec::with_capacity(2 + public.len());
            v.extend_from_slice(&group.code().to_be_bytes());
            v.extend_from_slice(public);
            put_tlv(&mut out, share_tag::DHKE, &v)?;
        }
        if let Some(qkd) = &self.qkd {
            let mut v = Vec::new();
            match qkd {
                QkdShare::AppId(id) => {
                    v.push(0x00);
                    v.extend_from_slice(id.as_bytes());
                }
                QkdShare::Provisioned { ksid, index } => {
                    v.push(0x01);
                    v.extend_from_slice(ksid.as_bytes());
                    v.extend_from_slice(&index.to_be_bytes());
                }
            }
            put_tlv(&mut out, share_tag::QKD, &v)?;
        }
        if let Some(pqc) = &self.pqc {
            let mut v = Vec::with_capacity(1 + pqc.bytes().len());
            v.push(if pqc.is_public_key() { 0x00 } else { 0x01 });
            v.extend_from_slice(pqc.bytes());
            put_tlv(&mut out, share_tag::PQC, &v)?;
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(buf);
        let mut share = KeyShareExtension::default();
        while r.remaining() > 0 {
            let tag = r.u8()?;
            let value = r.vec16()?;
            let mut vr = Reader::new(&value);
            match tag {
                share_tag::DHKE => {
                    let code = vr.u16()?;
                    let group = GroupId::from_code(code).ok_or(WireError::BadTag {
                        context: "dhke group",
                        tag: code as u8,
                    })?;
                    share.dhke_public = Some((group, vr.take(vr.remaining())?.to_vec()));
                }
                share_tag::QKD => {
                    let mode = vr.u8()?;
                    share.qkd = Some(match mode {
                        0x00 => {
                            let text = vr.take(vr.remaining())?;
                            QkdShare::AppId(
                                String::from_utf8(text.to_vec())
                                    .map_err(|_| WireError::BadText)?,
                            )
                        }
                        0x01 => {
                            let ksid = Ksid::from_bytes(
                                vr.take(16)?.try_into().expect("16 bytes taken"),
                            );
                            let index = vr.u64()?;
                            vr.finish()?;
                            QkdShare::Provisioned { ksid, index }
                        }
                        other => {
                            return Err(WireError::BadTag {
                                context: "qkd share mode",
                                tag: other,
                            })
                        }
                    });
                }
                share_tag::PQC => {
                    let kind = vr.u8()?;
                    let body = vr.take(vr.remaining())?.to_vec();
                    share.pqc = Some(match kind {
                        0x00 => PqcShare::PublicKey(body),
                        0x01 => PqcShare::Ciphertext(body),
                        other => {
                            return Err(WireError::BadTag {
                                context: "pqc share kind",
                                tag: other,
                            })
                        }
                    });
                }
                other => {
                    return Err(WireError::BadTag {
                        context: "key share method",
                        tag: other,
                    })
                }
            }
        }
        r.finish()?;
        Ok(share)
    }
}

// ---------------------------------------------------------------------------
// Handshake messages.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub protocol_version: u16,
    pub client_random: [u8; 32],
    pub offered_suites: Vec<u16>,
    pub key_share: KeyShareExtension,
}

impl ClientHello {
    /// Complete handshake message (header + body).
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.protocol_version.to_be_bytes());
        body.extend_from_slice(&self.client_random);
        let n: u8 = self
            .offered_suites
            .len()
            .try_into()
            .map_err(|_| WireError::Overflow)?;
        body.push(n);
        for s in &self.offered_suites {
            body.extend_from_slice(&s.to_be_bytes());
        }
        put_vec16(&mut body, &self.key_share.encode()?)?;
        frame_handshake(msg_type::CLIENT_HELLO, &body)
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        let protocol_version = r.u16()?;
        if protocol_version != PROTOCOL_VERSION {
            return Err(WireError::BadVersion(protocol_version));
        }
        let client_random: [u8; 32] = r.take(32)?.try_into().expect("32 bytes taken");
        let n = r.u8()? as usize;
        let mut offered_suites = Vec::with_capacity(n);
        for _ in 0..n {
            offered_suites.push(r.u16()?);
        }
        let share = r.vec16()?;
        r.finish()?;
        Ok(ClientHello {
            protocol_version,
            client_random,
            offered_suites,
            key_share: KeyShareExtension::decode(&share)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    pub protocol_version: u16,
    pub server_random: [u8; 32],
    pub selected_suite: u16,
    pub key_share: KeyShareExtension,
}

impl ServerHello {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.protocol_version.to_be_bytes());
        body.extend_from_slice(&self.server_random);
        body.extend_from_slice(&self.selected_suite.to_be_bytes());
        put_vec16(&mut body, &self.key_share.encode()?)?;
        frame_handshake(msg_type::SERVER_HELLO, &body)
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        let protocol_version = r.u16()?;
        if protocol_version != PROTOCOL_VERSION {
            return Err(WireError::BadVersion(protocol_version));
        }
        let server_random: [u8; 32] = r.take(32)?.try_into().expect("32 bytes taken");
        let selected_suite = r.u16()?;
        let share = r.vec16()?;
        r.finish()?;
        Ok(ServerHello {
            protocol_version,
            server_random,
            selected_suite,
            key_share: KeyShareExtension::decode(&share)?,
        })
    }
}

/// Structured certificate: a hostname bound to the server's long-term ML-DSA
/// key by one CA signature, plus the server's signature over its ephemeral
/// key-share material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificatePayload {
    pub hostname: String,
    pub server_longterm_public: Vec<u8>,
    pub ephemeral_sig: Vec<u8>,
    pub ca_sig: Vec<u8>,
}

impl CertificatePayload {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut body = Vec::new();
        put_vec16(&mut body, self.hostname.as_bytes())?;
        put_vec16(&mut body, &self.server_longterm_public)?;
        put_vec16(&mut body, &self.ephemeral_sig)?;
        put_vec16(&mut body, &self.ca_sig)?;
        frame_handshake(msg_type::CERTIFICATE, &body)
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        let hostname =
            String::from_utf8(r.vec16()?).map_err(|_| WireError::BadText)?;
        let server_longterm_public = r.vec16()?;
        let ephemeral_sig = r.vec16()?;
        let ca_sig = r.vec16()?;
        r.finish()?;
        Ok(CertificatePayload {
            hostname,
            server_longterm_public,
            ephemeral_sig,
            ca_sig,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finished {
    pub verify_data: Vec<u8>,
}

impl Finished {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut body = Vec::with_capacity(1 + self.verify_data.len());
        let len: u8 = self
            .verify_data
            .len()
            .try_into()
            .map_err(|_| WireError::Overflow)?;
        body.push(len);
        body.extend_from_slice(&self.verify_data);
        frame_handshake(msg_type::FINISHED, &body)
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        let n = r.u8()? as usize;
        let verify_data = r.take(n)?.to_vec();
        r.finish()?;
        Ok(Finished { verify_data })
    }
}

/// Extended Key Update: the rekey request flag plus fresh PQC and DHKE
/// material. QKD application identifiers never appear here; the stream
/// established at handshake time keeps serving chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyUpdateMessage {
    pub request_update: u8,
    pub new_pqc: Option<PqcShare>,
    pub new_dhke_public: Option<(GroupId, Vec<u8>)>,
}

impl KeyUpdateMessage {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut body = vec![self.request_update];
        if let Some(pqc) = &self.new_pqc {
            let mut v = Vec::with_capacity(1 + pqc.bytes().len());
            v.push(if pqc.is_public_key() { 0x00 } else { 0x01 });
            v.extend_from_slice(pqc.bytes());
            put_tlv(&mut body, share_tag::PQC, &v)?;
        }
        if let Some((group, public)) = &self.new_dhke_public {
            let mut v = Vec::with_capacity(2 + public.len());
            v.extend_from_slice(&group.code().to_be_bytes());
            v.extend_from_slice(public);
            put_tlv(&mut body, share_tag::DHKE, &v)?;
        }
        frame_handshake(msg_type::KEY_UPDATE, &body)
    }

    pub fn decode_body(body: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(body);
        let request_update = r.u8()?;
        let mut msg = KeyUpdateMessage {
            request_update,
            new_pqc: None,
            new_dhke_public: None,
        };
        while r.remaining() > 0 {
            let tag = r.u8()?;
            let value = r.vec16()?;
            let mut vr = Reader::new(&value);
            match tag {
                share_tag::PQC => {
                    let kind = vr.u8()?;
                    let bytes = vr.take(vr.remaining())?.to_vec();
                    msg.new_pqc = Some(match kind {
                        0x00 => PqcShare::PublicKey(bytes),
                        0x01 => PqcShare::Ciphertext(bytes),
                        other => {
                            return Err(WireError::BadTag {
                                context: "key update pqc kind",
                                tag: other,
                            })
                        }
                    });
                }
                share_tag::DHKE => {
                    let code = vr.u16()?;
                    let group = GroupId::from_code(code).ok_or(WireError::BadTag {
                        context: "key update dhke group",
                        tag: code as u8,
                    })?;
                    msg.new_dhke_public = Some((group, vr.take(vr.remaining())?.to_vec()));
                }
                other => {
                    return Err(WireError::BadTag {
                        context: "key update field",
                        tag: other,
                    })
                }
            }
        }
        r.finish()?;
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn record_roundtrip() {
        let rec = frame_record(content_type::HANDSHAKE, b"hello").unwrap();
        assert_eq!(rec.len(), RECORD_HEADER_LEN + 5);
        let (h, payload) = parse_record(&rec).unwrap();
        assert_eq!(h.content_type, content_type::HANDSHAKE);
        assert_eq!(h.version, PROTOCOL_VERSION);
        assert_eq!(payload, b"hello");
    }

    #[test]
    fn record_length_mismatch_detected() {
        let mut rec = frame_record(content_type::ALERT, b"abc").unwrap();
        rec.pop();
        assert_eq!(parse_record(&rec), Err(WireError::BadRecordLength));
    }

    #[test]
    fn handshake_header_roundtrip() {
        let msg = frame_handshake(msg_type::FINISHED, &[1, 2, 3]).unwrap();
        let (t, body) = parse_handshake(&msg).unwrap();
        assert_eq!(t, msg_type::FINISHED);
        assert_eq!(body, &[1, 2, 3]);
        assert_eq!(parse_handshake(&msg[..5]), Err(WireError::Truncated));
    }

    fn sample_share() -> KeyShareExtension {
        KeyShareExtension {
            dhke_public: Some((GroupId::P256, vec![4u8; 65])),
            qkd: Some(QkdShare::AppId("tls-client@norte.telco-a".into())),
            pqc: Some(PqcShare::PublicKey(vec![7u8; 800])),
        }
    }

    #[test]
    fn key_share_roundtrip() {
        let share = sample_share();
        let enc = share.encode().unwrap();
        assert_eq!(KeyShareExtension::decode(&enc).unwrap(), share);
    }

    #[test]
    fn key_share_provisioned_roundtrip() {
        let share = KeyShareExtension {
            dhke_public: None,
            qkd: Some(QkdShare::Provisioned {
                ksid: Ksid::from_bytes([9u8; 16]),
                index: 7,
            }),
            pqc: Some(PqcShare::Ciphertext(vec![1u8; 768])),
        };
        let enc = share.encode().unwrap();
        assert_eq!(KeyShareExtension::decode(&enc).unwrap(), share);
    }

    #[test]
    fn key_share_rejects_unknown_method() {
        let mut enc = sample_share().encode().unwrap();
        enc[0] = 0x7F;
        assert!(matches!(
            KeyShareExtension::decode(&enc),
            Err(WireError::BadTag { .. })
        ));
    }

    #[test]
    fn client_hello_roundtrip() {
        let ch = ClientHello {
            protocol_version: PROTOCOL_VERSION,
            client_random: [3u8; 32],
            offered_suites: vec![0xFF0A, 0x1302],
            key_share: sample_share(),
        };
        let msg = ch.encode().unwrap();
        let (t, body) = parse_handshake(&msg).unwrap();
        assert_eq!(t, msg_type::CLIENT_HELLO);
        assert_eq!(ClientHello::decode_body(body).unwrap(), ch);
    }

    #[test]
    fn client_hello_rejects_wrong_version() {
        let ch = ClientHello {
            protocol_version: PROTOCOL_VERSION,
            client_random: [3u8; 32],
            offered_suites: vec![0xFF0A],
            key_share: KeyShareExtension::default(),
        };
        let msg = ch.encode().unwrap();
        let (_, body) = parse_handshake(&msg).unwrap();
        let mut bad = body.to_vec();
        bad[1] = 0x03;
        assert_eq!(
            ClientHello::decode_body(&bad),
            Err(WireError::BadVersion(0x0303))
        );
    }

    #[test]
    fn key_update_roundtrip_and_optional_fields() {
        let full = KeyUpdateMessage {
            request_update: 1,
            new_pqc: Some(PqcShare::PublicKey(vec![5u8; 800])),
            new_dhke_public: Some((GroupId::Modp3072, vec![6u8; 384])),
        };
        let msg = full.encode().unwrap();
        let (t, body) = parse_handshake(&msg).unwrap();
        assert_eq!(t, msg_type::KEY_UPDATE);
        assert_eq!(KeyUpdateMessage::decode_body(body).unwrap(), full);

        let bare = KeyUpdateMessage {
            request_update: 0,
            new_pqc: None,
            new_dhke_public: None,
        };
        let msg = bare.encode().unwrap();
        let (_, body) = parse_handshake(&msg).unwrap();
        assert_eq!(body, &[0]);
        assert_eq!(KeyUpdateMessage::decode_body(body).unwrap(), bare);
    }

    proptest! {
        #[test]
        fn certificate_roundtrip(
            hostname in "[a-z][a-z0-9.-]{0,40}",
            longterm in proptest::collection::vec(any::<u8>(), 0..2000),
            sig1 in proptest::collection::vec(any::<u8>(), 0..4000),
            sig2 in proptest::collection::vec(any::<u8>(), 0..4000),
        ) {
            let cert = CertificatePayload {
                hostname,
                server_longterm_public: longterm,
                ephemeral_sig: sig1,
                ca_sig: sig2,
            };
            let msg = cert.encode().unwrap();
            let (t, body) = parse_handshake(&msg).unwrap();
            prop_assert_eq!(t, msg_type::CERTIFICATE);
            prop_assert_eq!(CertificatePayload::decode_body(body).unwrap(), cert);
        }

        #[test]
        fn truncation_never_panics(
            msg in proptest::collection::vec(any::<u8>(), 0..256),
            cut in 0usize..256,
        ) {
            let cut = cut.min(msg.len());
            let _ = parse_handshake(&msg[..cut]);
            let _ = KeyShareExtension::decode(&msg[..cut]);
            let _ = KeyUpdateMessage::decode_body(&msg[..cut]);
        }
    }
}
