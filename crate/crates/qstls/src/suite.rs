//! Ciphersuites, the security-level parameter registry, and the hybrid
//! key-combination functions.
//!
//! The registry holds the five TLS 1.3 baseline code points as classical
//! fallbacks plus one hybrid suite per key-exchange combination (private-use
//! code points 0xFF00..=0xFF0A). `DHKE_QKD_PQC_TLS_AES_256_GCM_SHA_384` is
//! the flagship hybrid: elliptic-curve DHKE, a QKD-delivered key, and an
//! ML-KEM secret, combined into one pre-master secret.

use thiserror::Error;

use crate::kdf::{self, HashAlg};
use crate::provider::{AeadAlg, GroupId, MlDsaParam, MlKemParam};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SuiteError {
    #[error("no shared secret present")]
    EmptySecretSet,
    #[error("unsupported output length {0} (expected 32 or 48)")]
    LengthError(usize),
    #[error("present secrets differ in length")]
    LengthMismatch,
    #[error("secret for {0} is shorter than 16 bytes")]
    SecretTooShort(&'static str),
    #[error("secret presence does not match the negotiated suite")]
    PresenceMismatch,
    #[error("unknown ciphersuite code point {0:#06x}")]
    NotFound(u16),
}

/// One key-exchange method inside a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KexMethod {
    /// Finite-field Diffie-Hellman.
    Dh,
    /// Elliptic-curve Diffie-Hellman.
    Ecdh,
    /// QKD-delivered symmetric key.
    Qkd,
    /// Post-quantum KEM (ML-KEM).
    Pqc,
}

impl KexMethod {
    /// True for the two DHKE variants.
    pub fn is_dhke(self) -> bool {
        matches!(self, KexMethod::Dh | KexMethod::Ecdh)
    }
}

/// A negotiable algorithm bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ciphersuite {
    pub code_point: u16,
    pub name: &'static str,
    /// Duplicate-free, non-empty, in presentation order.
    pub kex_methods: &'static [KexMethod],
    pub aead: AeadAlg,
    pub hash: HashAlg,
}

impl Ciphersuite {
    pub fn has_kex(&self, m: KexMethod) -> bool {
        self.kex_methods.contains(&m)
    }

    /// The DHKE variant used by this suite, if any.
    pub fn dhke_variant(&self) -> Option<KexMethod> {
        self.kex_methods.iter().copied().find(|m| m.is_dhke())
    }

    pub fn is_hybrid(&self) -> bool {
        (0xFF00..=0xFF0A).contains(&self.code_point)
    }

    /// Short key-exchange label ("ECDH-QKD-PQC" style) used by reports.
    pub fn kex_label(&self) -> String {
        self.kex_methods
            .iter()
            .map(|m| match m {
                KexMethod::Dh => "DH",
                KexMethod::Ecdh => "ECDH",
                KexMethod::Qkd => "QKD",
                KexMethod::Pqc => "PQC",
            })
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Combines the shared secrets of this suite into `out_len` bytes of
    /// pre-master secret: HKDF extract-then-expand over the suite hash with
    /// input keying material `dhke || qkd || pqc` (absent fields skipped),
    /// salt `transcript_hash`, and the suite name as the info label.
    pub fn hybrid_combine(
        &self,
        secrets: &SharedSecretSet,
        transcript_hash: &[u8],
        out_len: usize,
    ) -> Result<Vec<u8>, SuiteError> {
        if !matches!(out_len, 32 | 48) {
            return Err(SuiteError::LengthError(out_len));
        }
        secrets.validate_for(self)?;
        let ikm = secrets.concat();
        Ok(kdf::hkdf(
            self.hash,
            transcript_hash,
            &ikm,
            self.name.as_bytes(),
            out_len,
        ))
    }
}

/// Shared secrets gathered during one exchange, one slot per method family.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharedSecretSet {
    pub dhke: Option<Vec<u8>>,
    pub qkd: Option<Vec<u8>>,
    pub pqc: Option<Vec<u8>>,
}

impl SharedSecretSet {
    pub fn is_empty(&self) -> bool {
        self.dhke.is_none() && self.qkd.is_none() && self.pqc.is_none()
    }

    fn present(&self) -> impl Iterator<Item = (&'static str, &[u8])> {
        [
            ("dhke", self.dhke.as_deref()),
            ("qkd", self.qkd.as_deref()),
            ("pqc", self.pqc.as_deref()),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
    }

    /// Fixed-order concatenation `dhke || qkd || pqc` of the present fields.
    pub fn concat(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (_, v) in self.present() {
            out.extend_from_slice(v);
        }
        out
    }

    /// Checks the basic invariants and that the presence pattern matches the
    /// suite's key-exchange methods exactly.
    pub fn validate_for(&self, suite: &Ciphersuite) -> Result<(), SuiteError> {
        if self.is_empty() {
            return Err(SuiteError::EmptySecretSet);
        }
        for (name, v) in self.present() {
            if v.len() < 16 {
                return Err(SuiteError::SecretTooShort(match name {
                    "dhke" => "dhke",
                    "qkd" => "qkd",
                    _ => "pqc",
                }));
            }
        }
        let want_dhke = suite.dhke_variant().is_some();
        if self.dhke.is_some() != want_dhke
            || self.qkd.is_some() != suite.has_kex(KexMethod::Qkd)
            || self.pqc.is_some() != suite.has_kex(KexMethod::Pqc)
        {
            return Err(SuiteError::PresenceMismatch);
        }
        Ok(())
    }
}

/// Bytewise XOR of all present secrets. Preserves the information-theoretic
/// character of the QKD component; requires equal lengths.
pub fn xor_combine(secrets: &SharedSecretSet) -> Result<Vec<u8>, SuiteError> {
    let mut fields = secrets.present().map(|(_, v)| v);
    let first = fields.next().ok_or(SuiteError::EmptySecretSet)?;
    let mut out = first.to_vec();
    for f in fields {
        if f.len() != out.len() {
            return Err(SuiteError::LengthMismatch);
        }
        for (o, b) in out.iter_mut().zip(f) {
            *o ^= b;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Registry.
// ---------------------------------------------------------------------------

use KexMethod::{Dh, Ecdh, Pqc, Qkd};

/// Code point of the flagship hybrid suite (elliptic-curve DHKE variant).
pub const DHKE_QKD_PQC_SUITE: u16 = 0xFF0A;

/// Registered suites: TLS 1.3 baselines first, then the eleven hybrid
/// combinations in their evaluation-table column order.
pub const REGISTRY: &[Ciphersuite] = &[
    Ciphersuite {
        code_point: 0x1301,
        name: "TLS_AES_128_GCM_SHA256",
        kex_methods: &[Ecdh],
        aead: AeadAlg::Aes128Gcm,
        hash: HashAlg::Sha256,
    },
    Ciphersuite {
        code_point: 0x1302,
        name: "TLS_AES_256_GCM_SHA384",
        kex_methods: &[Ecdh],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0x1303,
        name: "TLS_CHACHA20_POLY1305_SHA256",
        kex_methods: &[Ecdh],
        aead: AeadAlg::ChaCha20Poly1305,
        hash: HashAlg::Sha256,
    },
    Ciphersuite {
        code_point: 0x1304,
        name: "TLS_AES_128_CCM_SHA256",
        kex_methods: &[Ecdh],
        aead: AeadAlg::Aes128Ccm,
        hash: HashAlg::Sha256,
    },
    Ciphersuite {
        code_point: 0x1305,
        name: "TLS_AES_128_CCM_8_SHA256",
        kex_methods: &[Ecdh],
        aead: AeadAlg::Aes128Ccm8,
        hash: HashAlg::Sha256,
    },
    Ciphersuite {
        code_point: 0xFF00,
        name: "DH_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Dh],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF01,
        name: "PQC_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Pqc],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF02,
        name: "QKD_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Qkd],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF03,
        name: "ECDH_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Ecdh],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF04,
        name: "DH_QKD_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Dh, Qkd],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF05,
        name: "DH_PQC_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Dh, Pqc],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF06,
        name: "ECDH_QKD_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Ecdh, Qkd],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF07,
        name: "ECDH_PQC_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Ecdh, Pqc],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF08,
        name: "QKD_PQC_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Qkd, Pqc],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF09,
        name: "DH_QKD_PQC_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Dh, Qkd, Pqc],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
    Ciphersuite {
        code_point: 0xFF0A,
        name: "DHKE_QKD_PQC_TLS_AES_256_GCM_SHA_384",
        kex_methods: &[Ecdh, Qkd, Pqc],
        aead: AeadAlg::Aes256Gcm,
        hash: HashAlg::Sha384,
    },
];

pub fn lookup(code_point: u16) -> Result<&'static Ciphersuite, SuiteError> {
    REGISTRY
        .iter()
        .find(|s| s.code_point == code_point)
        .ok_or(SuiteError::NotFound(code_point))
}

/// The eleven hybrid key-exchange combinations, in evaluation order.
pub fn hybrid_combinations() -> impl Iterator<Item = &'static Ciphersuite> {
    REGISTRY.iter().filter(|s| s.is_hybrid())
}

/// Finds a hybrid suite by its key-exchange label ("ECDH-QKD-PQC" style).
pub fn hybrid_by_label(label: &str) -> Option<&'static Ciphersuite> {
    hybrid_combinations().find(|s| s.kex_label().eq_ignore_ascii_case(label))
}

// ---------------------------------------------------------------------------
// Security levels (asymmetric-cryptography parameter registry).
// ---------------------------------------------------------------------------

/// NIST security level selecting one row of the parameter registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SecurityLevel {
    #[default]
    Level1,
    Level3,
    Level5,
}

impl SecurityLevel {
    pub fn nist_level(self) -> u8 {
        match self {
            SecurityLevel::Level1 => 1,
            SecurityLevel::Level3 => 3,
            SecurityLevel::Level5 => 5,
        }
    }

    pub fn from_nist_level(level: u8) -> Option<Self> {
        Some(match level {
            1 => SecurityLevel::Level1,
            3 => SecurityLevel::Level3,
            5 => SecurityLevel::Level5,
            _ => return None,
        })
    }

    /// Registry size of the finite-field DH modulus in bits.
    pub fn dh_bits(self) -> usize {
        match self {
            SecurityLevel::Level1 => 3072,
            SecurityLevel::Level3 => 7680,
            SecurityLevel::Level5 => 15360,
        }
    }

    /// The MODP group the DH provider actually runs. Level 1 has an exact
    /// standard group; no standardized group exists at 7680 or 15360 bits,
    /// so higher levels use the largest standardized group (8192-bit).
    pub fn dh_group(self) -> GroupId {
        match self {
            SecurityLevel::Level1 => GroupId::Modp3072,
            SecurityLevel::Level3 | SecurityLevel::Level5 => GroupId::Modp8192,
        }
    }

    pub fn ecdh_curve_bits(self) -> usize {
        match self {
            SecurityLevel::Level1 => 256,
            SecurityLevel::Level3 => 384,
            SecurityLevel::Level5 => 521,
        }
    }

    pub fn ecdh_group(self) -> GroupId {
        match self {
            SecurityLevel::Level1 => GroupId::P256,
            SecurityLevel::Level3 => GroupId::P384,
            SecurityLevel::Level5 => GroupId::P521,
        }
    }

    pub fn mlkem_param(self) -> MlKemParam {
        match self {
            SecurityLevel::Level1 => MlKemParam::MlKem512,
            SecurityLevel::Level3 => MlKemParam::MlKem768,
            SecurityLevel::Level5 => MlKemParam::MlKem1024,
        }
    }

    pub fn qkd_key_bits(self) -> usize {
        match self {
            SecurityLevel::Level1 => 128,
            SecurityLevel::Level3 => 192,
            SecurityLevel::Level5 => 256,
        }
    }

    pub fn qkd_key_bytes(self) -> usize {
        self.qkd_key_bits() / 8
    }

    /// ML-DSA parameter for server authentication. Levels 1 and 3 use
    /// ML-DSA-65, the balance point used in the evaluation; level 5 uses
    /// ML-DSA-87.
    pub fn mldsa_param(self) -> MlDsaParam {
        match self {
            SecurityLevel::Level1 | SecurityLevel::Level3 => MlDsaParam::MlDsa65,
            SecurityLevel::Level5 => MlDsaParam::MlDsa87,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_code_points_unique() {
        let mut seen = HashSet::new();
        for s in REGISTRY {
            assert!(seen.insert(s.code_point), "duplicate {:#06x}", s.code_point);
        }
        assert_eq!(REGISTRY.len(), 16); // 5 baselines + 11 hybrids
    }

    #[test]
    fn registry_kex_methods_nonempty_and_duplicate_free() {
        for s in REGISTRY {
            assert!(!s.kex_methods.is_empty(), "{}", s.name);
            let set: HashSet<_> = s.kex_methods.iter().collect();
            assert_eq!(set.len(), s.kex_methods.len(), "{}", s.name);
        }
    }

    #[test]
    fn registry_roundtrip() {
        for s in REGISTRY {
            assert_eq!(lookup(s.code_point).unwrap(), s);
        }
    }

    #[test]
    fn flagship_hybrid_suite_contents() {
        let s = lookup(DHKE_QKD_PQC_SUITE).unwrap();
        assert_eq!(s.name, "DHKE_QKD_PQC_TLS_AES_256_GCM_SHA_384");
        assert_eq!(s.kex_methods, &[Ecdh, Qkd, Pqc]);
        assert_eq!(s.aead, AeadAlg::Aes256Gcm);
        assert_eq!(s.hash, HashAlg::Sha384);
    }

    #[test]
    fn baseline_lookup() {
        let s = lookup(0x1302).unwrap();
        assert_eq!(s.name, "TLS_AES_256_GCM_SHA384");
    }

    #[test]
    fn unknown_code_point() {
        assert_eq!(lookup(0xAAAA), Err(SuiteError::NotFound(0xAAAA)));
    }

    #[test]
    fn eleven_hybrid_combinations() {
        let labels: Vec<String> = hybrid_combinations().map(|s| s.kex_label()).collect();
        assert_eq!(
            labels,
            [
                "DH",
                "PQC",
                "QKD",
                "ECDH",
                "DH-QKD",
                "DH-PQC",
                "ECDH-QKD",
                "ECDH-PQC",
                "QKD-PQC",
                "DH-QKD-PQC",
                "ECDH-QKD-PQC"
            ]
        );
        assert_eq!(
            hybrid_by_label("ECDH-QKD-PQC").unwrap().code_point,
            DHKE_QKD_PQC_SUITE
        );
    }

    fn flagship() -> &'static Ciphersuite {
        lookup(DHKE_QKD_PQC_SUITE).unwrap()
    }

    #[test]
    fn hybrid_combine_pinned_vector() {
        // Pinned from an independent HKDF-SHA384 oracle: all-zero secrets,
        // salt = SHA-384(""), info = suite name, 48-byte output.
        let secrets = SharedSecretSet {
            dhke: Some(vec![0u8; 32]),
            qkd: Some(vec![0u8; 16]),
            pqc: Some(vec![0u8; 32]),
        };
        let th = HashAlg::Sha384.hash(&[b""]);
        let out = flagship().hybrid_combine(&secrets, &th, 48).unwrap();
        assert_eq!(
            out,
            decode_hex(
                "2af0c8fa346c044a220200ef4c58ed5be0aa19561dcd45963d553b102f7a882b\
                 9d48dfb8f2bba9181d3af8b794abc634"
            )
        );
        // Determinism.
        assert_eq!(out, flagship().hybrid_combine(&secrets, &th, 48).unwrap());
    }

    #[test]
    fn hybrid_combine_sensitive_to_qkd_bit_flip() {
        let mut secrets = SharedSecretSet {
            dhke: Some(vec![0u8; 32]),
            qkd: Some(vec![0u8; 16]),
            pqc: Some(vec![0u8; 32]),
        };
        secrets.qkd.as_mut().unwrap()[0] ^= 0x01;
        let th = HashAlg::Sha384.hash(&[b""]);
        let out = flagship().hybrid_combine(&secrets, &th, 48).unwrap();
        // Same oracle, bit 0 of the QKD secret flipped.
        assert_eq!(
            out,
            decode_hex(
                "2d104499701bf9f1838fbcba5f79559c994eac0c8516f4b08c8a6ccad73e0f60\
                 919204572bd3a33e5544e3e87a185acb"
            )
        );
    }

    #[test]
    fn hybrid_combine_rejects_bad_inputs() {
        let secrets = SharedSecretSet::default();
        let th = [0u8; 48];
        assert_eq!(
            flagship().hybrid_combine(&secrets, &th, 48),
            Err(SuiteError::EmptySecretSet)
        );
        let full = SharedSecretSet {
            dhke: Some(vec![1; 32]),
            qkd: Some(vec![2; 16]),
            pqc: Some(vec![3; 32]),
        };
        assert_eq!(
            flagship().hybrid_combine(&full, &th, 40),
            Err(SuiteError::LengthError(40))
        );
        // Presence pattern must match the suite.
        let missing_qkd = SharedSecretSet {
            dhke: Some(vec![1; 32]),
            qkd: None,
            pqc: Some(vec![3; 32]),
        };
        assert_eq!(
            flagship().hybrid_combine(&missing_qkd, &th, 48),
            Err(SuiteError::PresenceMismatch)
        );
        let short = SharedSecretSet {
            dhke: Some(vec![1; 32]),
            qkd: Some(vec![2; 8]),
            pqc: Some(vec![3; 32]),
        };
        assert!(matches!(
            flagship().hybrid_combine(&short, &th, 48),
            Err(SuiteError::SecretTooShort(_))
        ));
    }

    #[test]
    fn xor_combine_identity_and_cancellation() {
        let k = vec![0xDE, 0xAD, 0xBE, 0xEF, 0x00, 0x11, 0x22, 0x33];
        let only_qkd = SharedSecretSet {
            qkd: Some(k.clone()),
            ..Default::default()
        };
        assert_eq!(xor_combine(&only_qkd).unwrap(), k);

        let cancel = SharedSecretSet {
            dhke: Some(k.clone()),
            qkd: Some(k.clone()),
            ..Default::default()
        };
        assert_eq!(xor_combine(&cancel).unwrap(), vec![0u8; k.len()]);
    }

    #[test]
    fn xor_combine_one_byte_arithmetic() {
        let s = SharedSecretSet {
            dhke: Some(vec![0x0F]),
            qkd: Some(vec![0xF0]),
            pqc: Some(vec![0xFF]),
        };
        assert_eq!(xor_combine(&s).unwrap(), vec![0x00]);
    }

    #[test]
    fn xor_combine_length_mismatch() {
        let s = SharedSecretSet {
            dhke: Some(vec![0x0F, 0x0F]),
            qkd: Some(vec![0xF0]),
            pqc: None,
        };
        assert_eq!(xor_combine(&s), Err(SuiteError::LengthMismatch));
    }

    #[test]
    fn xor_combine_exhaustive_one_byte_algebra() {
        // Associative, commutative, self-inverse over all 1-byte values.
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                let ab = xor_combine(&SharedSecretSet {
                    dhke: Some(vec![a]),
                    qkd: Some(vec![b]),
                    pqc: None,
                })
                .unwrap();
                let ba = xor_combine(&SharedSecretSet {
                    dhke: Some(vec![b]),
                    qkd: Some(vec![a]),
                    pqc: None,
                })
                .unwrap();
                assert_eq!(ab, ba);
                // Repeating a component cancels it.
                let back = xor_combine(&SharedSecretSet {
                    dhke: Some(ab.clone()),
                    qkd: Some(vec![b]),
                    pqc: None,
                })
                .unwrap();
                assert_eq!(back, vec![a]);
            }
        }
    }

    #[test]
    fn level_parameter_rows() {
        let l1 = SecurityLevel::Level1;
        assert_eq!(
            (
                l1.dh_bits(),
                l1.ecdh_curve_bits(),
                l1.mlkem_param(),
                l1.qkd_key_bits()
            ),
            (3072, 256, MlKemParam::MlKem512, 128)
        );
        let l3 = SecurityLevel::Level3;
        assert_eq!(
            (
                l3.dh_bits(),
                l3.ecdh_curve_bits(),
                l3.mlkem_param(),
                l3.qkd_key_bits()
            ),
            (7680, 384, MlKemParam::MlKem768, 192)
        );
        let l5 = SecurityLevel::Level5;
        assert_eq!(
            (
                l5.dh_bits(),
                l5.ecdh_curve_bits(),
                l5.mlkem_param(),
                l5.qkd_key_bits()
            ),
            (15360, 521, MlKemParam::MlKem1024, 256)
        );
        // QKD key bytes divide the permitted LKMS chunk sizes.
        for l in [l1, l3, l5] {
            assert!(matches!(l.qkd_key_bytes(), 16 | 24 | 32));
        }
    }

    fn decode_hex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }
}
