//! Pluggable cryptographic backends: finite-field DH, NIST-curve ECDH,
//! ML-KEM encapsulation, ML-DSA signatures, and the record AEADs.
//!
//! The protocol engine composes vetted primitive implementations; it never
//! implements primitive cryptography itself. Each backend is behind a trait
//! so tests can substitute deterministic fakes, and all key handles are
//! opaque byte strings so session state stays plain data.

use std::sync::Arc;

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes128Gcm, Aes256Gcm, KeyInit};
use num_bigint::BigUint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_core::Rng as _;
use thiserror::Error;

use crate::suite::SecurityLevel;

/// Deterministic, seedable RNG used throughout the stack. Seeding it from a
/// fixed value reproduces an entire protocol run bit for bit.
pub type SessionRng = ChaCha20Rng;

/// RNG seeded from the operating system.
pub fn os_rng() -> SessionRng {
    let mut seed = [0u8; 32];
    getrandom::fill(&mut seed).expect("operating system entropy");
    SessionRng::from_seed(seed)
}

/// RNG seeded from a fixed value, for reproducible runs.
pub fn seeded_rng(seed: u64) -> SessionRng {
    SessionRng::seed_from_u64(seed)
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider failure: {0}")]
    Failure(String),
    #[error("invalid peer public key for {0}")]
    InvalidPublicKey(&'static str),
    #[error("invalid private key material for {0}")]
    InvalidPrivateKey(&'static str),
    #[error("malformed ciphertext for {0}")]
    InvalidCiphertext(&'static str),
    #[error("algorithm {0} is registered but not enabled in this build")]
    UnsupportedAlgorithm(&'static str),
}

/// Public/private key pair with opaque encodings.
///
/// For ML-KEM the private half is the 64-byte seed; for ML-DSA the 32-byte
/// seed; for DH the exponent bytes; for ECDH the scalar bytes.
#[derive(Clone)]
pub struct KeyPair {
    pub public: Vec<u8>,
    pub private: Vec<u8>,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &format_args!("[{} bytes]", self.public.len()))
            .field("private", &"[redacted]")
            .finish()
    }
}

/// Named key-exchange groups. Numbers follow the IKE group registry the
/// security table references (15 = MODP-3072, 19 = P-256, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupId {
    Modp3072,
    Modp8192,
    P256,
    P384,
    P521,
}

impl GroupId {
    pub fn code(self) -> u16 {
        match self {
            GroupId::Modp3072 => 15,
            GroupId::Modp8192 => 18,
            GroupId::P256 => 19,
            GroupId::P384 => 20,
            GroupId::P521 => 21,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Some(match code {
            15 => GroupId::Modp3072,
            18 => GroupId::Modp8192,
            19 => GroupId::P256,
            20 => GroupId::P384,
            21 => GroupId::P521,
            _ => return None,
        })
    }
}

/// Two-sided key exchange (DH over prime fields or NIST curves).
pub trait KeyExchange: Send + Sync {
    fn group_id(&self) -> GroupId;
    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError>;
    fn shared_secret(&self, private: &[u8], peer_public: &[u8]) -> Result<Vec<u8>, ProviderError>;
}

/// Key encapsulation (ML-KEM).
pub trait KemProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError>;
    /// Returns `(ciphertext, shared_secret)`.
    fn encapsulate(
        &self,
        peer_public: &[u8],
        rng: &mut SessionRng,
    ) -> Result<(Vec<u8>, Vec<u8>), ProviderError>;
    fn decapsulate(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, ProviderError>;
}

/// Digital signatures (ML-DSA).
pub trait SignatureProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError>;
    fn sign(&self, private: &[u8], message: &[u8]) -> Result<Vec<u8>, ProviderError>;
    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

// ---------------------------------------------------------------------------
// Finite-field Diffie-Hellman over the RFC 3526 MODP groups.
// ---------------------------------------------------------------------------

// Safe primes, generator 2. Values re-derived from the defining pi formula and
// verified prime (and safe-prime) before embedding.
const MODP_3072_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA051015728E5A8AAAC42DAD33170D04507A33A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864D87602733EC86A64521F2B18177B200CBBE117577A615D6C770988C0BAD946E208E24FA074E5AB3143DB5BFCE0FD108E4B82D120A93AD2CAFFFFFFFFFFFFFFFF";
const MODP_8192_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA051015728E5A8AAAC42DAD33170D04507A33A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864D87602733EC86A64521F2B18177B200CBBE117577A615D6C770988C0BAD946E208E24FA074E5AB3143DB5BFCE0FD108E4B82D120A92108011A723C12A787E6D788719A10BDBA5B2699C327186AF4E23C1A946834B6150BDA2583E9CA2AD44CE8DBBBC2DB04DE8EF92E8EFC141FBECAA6287C59474E6BC05D99B2964FA090C3A2233BA186515BE7ED1F612970CEE2D7AFB81BDD762170481CD0069127D5B05AA993B4EA988D8FDDC186FFB7DC90A6C08F4DF435C93402849236C3FAB4D27C7026C1D4DCB2602646DEC9751E763DBA37BDF8FF9406AD9E530EE5DB382F413001AEB06A53ED9027D831179727B0865A8918DA3EDBEBCF9B14ED44CE6CBACED4BB1BDB7F1447E6CC254B332051512BD7AF426FB8F401378CD2BF5983CA01C64B92ECF032EA15D1721D03F482D7CE6E74FEF6D55E702F46980C82B5A84031900B1C9E59E7C97FBEC7E8F323A97A7E36CC88BE0F1D45B7FF585AC54BD407B22B4154AACC8F6D7EBF48E1D814CC5ED20F8037E0A79715EEF29BE32806A1D58BB7C5DA76F550AA3D8A1FBFF0EB19CCB1A313D55CDA56C9EC2EF29632387FE8D76E3C0468043E8F663F4860EE12BF2D5B0B7474D6E694F91E6DBE115974A3926F12FEE5E438777CB6A932DF8CD8BEC4D073B931BA3BC832B68D9DD300741FA7BF8AFC47ED2576F6936BA424663AAB639C5AE4F5683423B4742BF1C978238F16CBE39D652DE3FDB8BEFC848AD922222E04A4037C0713EB57A81A23F0C73473FC646CEA306B4BCBC8862F8385DDFA9D4B7FA2C087E879683303ED5BDD3A062B3CF5B3A278A66D2A13F83F44F82DDF310EE074AB6A364597E899A0255DC164F31CC50846851DF9AB48195DED7EA1B1D510BD7EE74D73FAF36BC31ECFA268359046F4EB879F924009438B481C6CD7889A002ED5EE382BC9190DA6FC026E479558E4475677E9AA9E3050E2765694DFC81F56E880B96E7160C980DD98EDD3DFFFFFFFFFFFFFFFFF";

struct ModpGroup {
    id: GroupId,
    prime: BigUint,
    /// Private exponents are twice the target security strength, the usual
    /// short-exponent practice for safe-prime groups.
    exponent_bits: usize,
}

impl ModpGroup {
    fn new(id: GroupId) -> Self {
        let (hex, exponent_bits) = match id {
            GroupId::Modp3072 => (MODP_3072_HEX, 256),
            GroupId::Modp8192 => (MODP_8192_HEX, 384),
            _ => unreachable!("not a MODP group"),
        };
        let prime = BigUint::parse_bytes(hex.as_bytes(), 16).expect("embedded prime parses");
        ModpGroup {
            id,
            prime,
            exponent_bits,
        }
    }

    fn byte_len(&self) -> usize {
        (self.prime.bits() as usize).div_ceil(8)
    }
}

/// Diffie-Hellman over a MODP group.
pub struct ModpDh {
    group: ModpGroup,
}

impl ModpDh {
    pub fn new(id: GroupId) -> Self {
        ModpDh {
            group: ModpGroup::new(id),
        }
    }

    fn fixed_width(&self, n: &BigUint) -> Vec<u8> {
        let mut out = n.to_bytes_be();
        let width = self.group.byte_len();
        while out.len() < width {
            out.insert(0, 0);
        }
        out
    }

    fn check_peer(&self, y: &BigUint) -> Result<(), ProviderError> {
        let one = BigUint::from(1u8);
        let p_minus_1 = &self.group.prime - &one;
        if y <= &one || y >= &p_minus_1 {
            return Err(ProviderError::InvalidPublicKey("DH"));
        }
        Ok(())
    }
}

impl KeyExchange for ModpDh {
    fn group_id(&self) -> GroupId {
        self.group.id
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        let mut exp = vec![0u8; self.group.exponent_bits / 8];
        rng.fill_bytes(&mut exp);
        exp[0] |= 0x80; // keep the full exponent width
        let x = BigUint::from_bytes_be(&exp);
        let g = BigUint::from(2u8);
        let public = g.modpow(&x, &self.group.prime);
        Ok(KeyPair {
            public: self.fixed_width(&public),
            private: exp,
        })
    }

    fn shared_secret(&self, private: &[u8], peer_public: &[u8]) -> Result<Vec<u8>, ProviderError> {
        if peer_public.len() != self.group.byte_len() {
            return Err(ProviderError::InvalidPublicKey("DH"));
        }
        let y = BigUint::from_bytes_be(peer_public);
        self.check_peer(&y)?;
        let x = BigUint::from_bytes_be(private);
        let ss = y.modpow(&x, &self.group.prime);
        Ok(self.fixed_width(&ss))
    }
}

// ---------------------------------------------------------------------------
// ECDH over the NIST curves (SEC1 uncompressed points).
// ---------------------------------------------------------------------------

/// ECDH over P-256, P-384 or P-521.
pub struct NistEcdh {
    id: GroupId,
}

impl NistEcdh {
    pub fn new(id: GroupId) -> Self {
        debug_assert!(matches!(id, GroupId::P256 | GroupId::P384 | GroupId::P521));
        NistEcdh { id }
    }
}

macro_rules! ecdh_dispatch {
    ($self:ident, $curve:ident, $body:block) => {
        match $self.id {
            GroupId::P256 => {
                use p256 as $curve;
                $body
            }
            GroupId::P384 => {
                use p384 as $curve;
                $body
            }
            GroupId::P521 => {
                use p521 as $curve;
                $body
            }
            _ => unreachable!("not an ECDH group"),
        }
    };
}

impl KeyExchange for NistEcdh {
    fn group_id(&self) -> GroupId {
        self.id
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        use p256::elliptic_curve::Generate as _;
        ecdh_dispatch!(self, c, {
            let sk = c::SecretKey::generate_from_rng(rng);
            let public = sk.public_key().to_sec1_bytes().to_vec();
            Ok(KeyPair {
                public,
                private: sk.to_bytes().to_vec(),
            })
        })
    }

    fn shared_secret(&self, private: &[u8], peer_public: &[u8]) -> Result<Vec<u8>, ProviderError> {
        ecdh_dispatch!(self, c, {
            let sk = c::SecretKey::from_slice(private)
                .map_err(|_| ProviderError::InvalidPrivateKey("ECDH"))?;
            let pk = c::PublicKey::from_sec1_bytes(peer_public)
                .map_err(|_| ProviderError::InvalidPublicKey("ECDH"))?;
            let ss = c::ecdh::diffie_hellman(sk.to_nonzero_scalar(), pk.as_affine());
            Ok(ss.raw_secret_bytes().to_vec())
        })
    }
}

// ---------------------------------------------------------------------------
// ML-KEM (PQClean backend). Key handles are the encoded key bytes. The
// backend draws encapsulation and key-generation randomness from its own
// system entropy; the session RNG governs protocol-level randoms only.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlKemParam {
    MlKem512,
    MlKem768,
    MlKem1024,
}

impl MlKemParam {
    pub fn name(self) -> &'static str {
        match self {
            MlKemParam::MlKem512 => "ML-KEM-512",
            MlKemParam::MlKem768 => "ML-KEM-768",
            MlKemParam::MlKem1024 => "ML-KEM-1024",
        }
    }
}

/// ML-KEM at a fixed parameter set.
pub struct MlKemProvider {
    param: MlKemParam,
}

impl MlKemProvider {
    pub fn new(param: MlKemParam) -> Self {
        MlKemProvider { param }
    }
}

macro_rules! mlkem_dispatch {
    ($self:ident, $m:ident, $body:block) => {
        match $self.param {
            MlKemParam::MlKem512 => {
                use pqcrypto_mlkem::mlkem512 as $m;
                $body
            }
            MlKemParam::MlKem768 => {
                use pqcrypto_mlkem::mlkem768 as $m;
                $body
            }
            MlKemParam::MlKem1024 => {
                use pqcrypto_mlkem::mlkem1024 as $m;
                $body
            }
        }
    };
}

impl KemProvider for MlKemProvider {
    fn name(&self) -> &'static str {
        self.param.name()
    }

    fn generate_keypair(&self, _rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        use pqcrypto_traits::kem::{PublicKey as _, SecretKey as _};
        mlkem_dispatch!(self, m, {
            let (pk, sk) = m::keypair();
            Ok(KeyPair {
                public: pk.as_bytes().to_vec(),
                private: sk.as_bytes().to_vec(),
            })
        })
    }

    fn encapsulate(
        &self,
        peer_public: &[u8],
        _rng: &mut SessionRng,
    ) -> Result<(Vec<u8>, Vec<u8>), ProviderError> {
        use pqcrypto_traits::kem::{Ciphertext as _, PublicKey as _, SharedSecret as _};
        mlkem_dispatch!(self, m, {
            let pk = m::PublicKey::from_bytes(peer_public)
                .map_err(|_| ProviderError::InvalidPublicKey(self.param.name()))?;
            let (ss, ct) = m::encapsulate(&pk);
            Ok((ct.as_bytes().to_vec(), ss.as_bytes().to_vec()))
        })
    }

    fn decapsulate(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, ProviderError> {
        use pqcrypto_traits::kem::{Ciphertext as _, SecretKey as _, SharedSecret as _};
        mlkem_dispatch!(self, m, {
            let sk = m::SecretKey::from_bytes(private)
                .map_err(|_| ProviderError::InvalidPrivateKey(self.param.name()))?;
            let ct = m::Ciphertext::from_bytes(ciphertext)
                .map_err(|_| ProviderError::InvalidCiphertext(self.param.name()))?;
            Ok(m::decapsulate(&ct, &sk).as_bytes().to_vec())
        })
    }
}

// ---------------------------------------------------------------------------
// ML-DSA (PQClean backend), detached signatures.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlDsaParam {
    MlDsa44,
    MlDsa65,
    MlDsa87,
}

impl MlDsaParam {
    pub fn name(self) -> &'static str {
        match self {
            MlDsaParam::MlDsa44 => "ML-DSA-44",
            MlDsaParam::MlDsa65 => "ML-DSA-65",
            MlDsaParam::MlDsa87 => "ML-DSA-87",
        }
    }
}

/// ML-DSA at a fixed parameter set.
pub struct MlDsaProvider {
    param: MlDsaParam,
}

impl MlDsaProvider {
    pub fn new(param: MlDsaParam) -> Self {
        MlDsaProvider { param }
    }
}

macro_rules! mldsa_dispatch {
    ($self:ident, $m:ident, $body:block) => {
        match $self.param {
            MlDsaParam::MlDsa44 => {
                use pqcrypto_mldsa::mldsa44 as $m;
                $body
            }
            MlDsaParam::MlDsa65 => {
                use pqcrypto_mldsa::mldsa65 as $m;
                $body
            }
            MlDsaParam::MlDsa87 => {
                use pqcrypto_mldsa::mldsa87 as $m;
                $body
            }
        }
    };
}

impl SignatureProvider for MlDsaProvider {
    fn name(&self) -> &'static str {
        self.param.name()
    }

    fn generate_keypair(&self, _rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        use pqcrypto_traits::sign::{PublicKey as _, SecretKey as _};
        mldsa_dispatch!(self, m, {
            let (pk, sk) = m::keypair();
            Ok(KeyPair {
                public: pk.as_bytes().to_vec(),
                private: sk.as_bytes().to_vec(),
            })
        })
    }

    fn sign(&self, private: &[u8], message: &[u8]) -> Result<Vec<u8>, ProviderError> {
        use pqcrypto_traits::sign::{DetachedSignature as _, SecretKey as _};
        mldsa_dispatch!(self, m, {
            let sk = m::SecretKey::from_bytes(private)
                .map_err(|_| ProviderError::InvalidPrivateKey(self.param.name()))?;
            Ok(m::detached_sign(message, &sk).as_bytes().to_vec())
        })
    }

    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool {
        use pqcrypto_traits::sign::{DetachedSignature as _, PublicKey as _};
        mldsa_dispatch!(self, m, {
            let Ok(pk) = m::PublicKey::from_bytes(public) else {
                return false;
            };
            let Ok(sig) = m::DetachedSignature::from_bytes(signature) else {
                return false;
            };
            m::verify_detached_signature(&sig, message, &pk).is_ok()
        })
    }
}

// ---------------------------------------------------------------------------
// Record AEADs.
// ---------------------------------------------------------------------------

/// AEAD algorithm tag carried by a ciphersuite.
///
/// The engine implements the GCM modes. The CHACHA20-POLY1305 and CCM code
/// points exist in the registry for negotiation completeness but are not
/// enabled in this build; selecting them for traffic fails with
/// [`ProviderError::UnsupportedAlgorithm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AeadAlg {
    Aes256Gcm,
    Aes128Gcm,
    ChaCha20Poly1305,
    Aes128Ccm,
    Aes128Ccm8,
}

pub const AEAD_NONCE_LEN: usize = 12;
pub const AEAD_TAG_LEN: usize = 16;

impl AeadAlg {
    pub fn name(self) -> &'static str {
        match self {
            AeadAlg::Aes256Gcm => "AES-256-GCM",
            AeadAlg::Aes128Gcm => "AES-128-GCM",
            AeadAlg::ChaCha20Poly1305 => "CHACHA20-POLY1305",
            AeadAlg::Aes128Ccm => "AES-128-CCM",
            AeadAlg::Aes128Ccm8 => "AES-128-CCM-8",
        }
    }

    pub fn key_len(self) -> usize {
        match self {
            AeadAlg::Aes256Gcm | AeadAlg::ChaCha20Poly1305 => 32,
            AeadAlg::Aes128Gcm | AeadAlg::Aes128Ccm | AeadAlg::Aes128Ccm8 => 16,
        }
    }

    pub fn seal(
        self,
        key: &[u8],
        nonce: &[u8; AEAD_NONCE_LEN],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, ProviderError> {
        let payload = Payload {
            msg: plaintext,
            aad,
        };
        match self {
            AeadAlg::Aes256Gcm => Aes256Gcm::new_from_slice(key)
                .map_err(|_| ProviderError::InvalidPrivateKey("AES-256-GCM"))?
                .encrypt(nonce.into(), payload)
                .map_err(|_| ProviderError::Failure("seal".into())),
            AeadAlg::Aes128Gcm => Aes128Gcm::new_from_slice(key)
                .map_err(|_| ProviderError::InvalidPrivateKey("AES-128-GCM"))?
                .encrypt(nonce.into(), payload)
                .map_err(|_| ProviderError::Failure("seal".into())),
            other => Err(ProviderError::UnsupportedAlgorithm(other.name())),
        }
    }

    /// Returns `None` on authentication failure.
    pub fn open(
        self,
        key: &[u8],
        nonce: &[u8; AEAD_NONCE_LEN],
        aad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Option<Vec<u8>>, ProviderError> {
        let payload = Payload {
            msg: ciphertext,
            aad,
        };
        match self {
            AeadAlg::Aes256Gcm => Ok(Aes256Gcm::new_from_slice(key)
                .map_err(|_| ProviderError::InvalidPrivateKey("AES-256-GCM"))?
                .decrypt(nonce.into(), payload)
                .ok()),
            AeadAlg::Aes128Gcm => Ok(Aes128Gcm::new_from_slice(key)
                .map_err(|_| ProviderError::InvalidPrivateKey("AES-128-GCM"))?
                .decrypt(nonce.into(), payload)
                .ok()),
            other => Err(ProviderError::UnsupportedAlgorithm(other.name())),
        }
    }
}

// ---------------------------------------------------------------------------
// Bundle.
// ---------------------------------------------------------------------------

/// The backend set a session runs against. Cheap to clone and safe to share
/// between concurrent sessions.
#[derive(Clone)]
pub struct CryptoProvider {
    pub dh: Arc<dyn KeyExchange>,
    pub ecdh: Arc<dyn KeyExchange>,
    pub kem: Arc<dyn KemProvider>,
    pub sig: Arc<dyn SignatureProvider>,
}

impl CryptoProvider {
    /// Backends matching the parameter registry row for `level`.
    pub fn for_level(level: SecurityLevel) -> Self {
        CryptoProvider {
            dh: Arc::new(ModpDh::new(level.dh_group())),
            ecdh: Arc::new(NistEcdh::new(level.ecdh_group())),
            kem: Arc::new(MlKemProvider::new(level.mlkem_param())),
            sig: Arc::new(MlDsaProvider::new(level.mldsa_param())),
        }
    }
}
