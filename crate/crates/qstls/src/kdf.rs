//! Hash and HKDF plumbing shared by the key schedule and the suite combiner.
//!
//! Every derivation in this crate is HKDF extract-then-expand over the
//! negotiated suite hash. Labeled expansions use an `HkdfLabel`-shaped info
//! block with the `"qstls "` prefix:
//!
//! ```text
//! info = out_len (u16 BE) || len(prefix+label) (u8) || "qstls " label || len(ctx) (u8) || ctx
//! ```

use hkdf::Hkdf;
use sha2::{Digest, Sha256, Sha384};

/// Prefix for all labeled key-schedule expansions.
pub const LABEL_PREFIX: &[u8] = b"qstls ";

/// Hash algorithm tag carried by a ciphersuite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashAlg {
    Sha256,
    Sha384,
}

impl HashAlg {
    pub fn output_len(self) -> usize {
        match self {
            HashAlg::Sha256 => 32,
            HashAlg::Sha384 => 48,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HashAlg::Sha256 => "SHA-256",
            HashAlg::Sha384 => "SHA-384",
        }
    }

    /// Hash the concatenation of `parts`.
    pub fn hash(self, parts: &[&[u8]]) -> Vec<u8> {
        match self {
            HashAlg::Sha256 => {
                let mut h = Sha256::new();
                for p in parts {
                    h.update(p);
                }
                h.finalize().to_vec()
            }
            HashAlg::Sha384 => {
                let mut h = Sha384::new();
                for p in parts {
                    h.update(p);
                }
                h.finalize().to_vec()
            }
        }
    }
}

/// HKDF extract-then-expand with an arbitrary info string.
pub fn hkdf(hash: HashAlg, salt: &[u8], ikm: &[u8], info: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = vec![0u8; out_len];
    match hash {
        HashAlg::Sha256 => Hkdf::<Sha256>::new(Some(salt), ikm)
            .expand(info, &mut out)
            .expect("output length within HKDF bounds"),
        HashAlg::Sha384 => Hkdf::<Sha384>::new(Some(salt), ikm)
            .expand(info, &mut out)
            .expect("output length within HKDF bounds"),
    }
    out
}

/// HKDF-Expand from an existing pseudorandom key.
pub fn hkdf_expand(hash: HashAlg, prk: &[u8], info: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = vec![0u8; out_len];
    match hash {
        HashAlg::Sha256 => Hkdf::<Sha256>::from_prk(prk)
            .expect("prk length")
            .expand(info, &mut out)
            .expect("output length within HKDF bounds"),
        HashAlg::Sha384 => Hkdf::<Sha384>::from_prk(prk)
            .expect("prk length")
            .expand(info, &mut out)
            .expect("output length within HKDF bounds"),
    }
    out
}

/// HKDF-Extract alone; returns a pseudorandom key of the hash length.
pub fn hkdf_extract(hash: HashAlg, salt: &[u8], ikm: &[u8]) -> Vec<u8> {
    match hash {
        HashAlg::Sha256 => Hkdf::<Sha256>::extract(Some(salt), ikm).0.to_vec(),
        HashAlg::Sha384 => Hkdf::<Sha384>::extract(Some(salt), ikm).0.to_vec(),
    }
}

/// Labeled expansion used by the traffic-key schedule.
pub fn expand_label(
    hash: HashAlg,
    secret: &[u8],
    label: &str,
    context: &[u8],
    out_len: usize,
) -> Vec<u8> {
    let mut info = Vec::with_capacity(4 + LABEL_PREFIX.len() + label.len() + context.len());
    info.extend_from_slice(&(out_len as u16).to_be_bytes());
    info.push((LABEL_PREFIX.len() + label.len()) as u8);
    info.extend_from_slice(LABEL_PREFIX);
    info.extend_from_slice(label.as_bytes());
    info.push(context.len() as u8);
    info.extend_from_slice(context);
    hkdf_expand(hash, secret, &info, out_len)
}
