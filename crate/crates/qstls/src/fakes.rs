//! Deterministic fake providers. They satisfy the provider contracts with
//! trivially agreeing secrets, so protocol tests, golden vectors and call
//! attribution checks stay independent of real cryptographic backends.
//! Nothing here is secure.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand_core::Rng as _;

use crate::kdf::HashAlg;
use crate::provider::{
    GroupId, KemProvider, KeyExchange, KeyPair, ProviderError, SessionRng, SignatureProvider,
};

fn xor16(a: &[u8], b: &[u8]) -> Vec<u8> {
    (0..16).map(|i| a[i % a.len()] ^ b[i % b.len()]).collect()
}

#[derive(Default)]
pub struct CallCounts {
    pub keygen: AtomicU64,
    pub derive: AtomicU64,
}

/// Key exchange where the public key equals the private key and the shared
/// secret is the XOR of the two; both sides trivially agree.
pub struct FakeKeyExchange {
    group: GroupId,
    pub calls: Arc<CallCounts>,
}

impl FakeKeyExchange {
    pub fn new(group: GroupId) -> Self {
        FakeKeyExchange {
            group,
            calls: Arc::new(CallCounts::default()),
        }
    }
}

impl KeyExchange for FakeKeyExchange {
    fn group_id(&self) -> GroupId {
        self.group
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        self.calls.keygen.fetch_add(1, Ordering::Relaxed);
        let mut x = vec![0u8; 16];
        rng.fill_bytes(&mut x);
        Ok(KeyPair {
            public: x.clone(),
            private: x,
        })
    }

    fn shared_secret(&self, private: &[u8], peer_public: &[u8]) -> Result<Vec<u8>, ProviderError> {
        self.calls.derive.fetch_add(1, Ordering::Relaxed);
        Ok(xor16(private, peer_public))
    }
}

#[derive(Default)]
pub struct KemCallCounts {
    pub keygen: AtomicU64,
    pub encapsulate: AtomicU64,
    pub decapsulate: AtomicU64,
}

/// KEM whose ciphertext is a random blind and whose shared secret is
/// `public XOR blind`.
pub struct FakeKem {
    pub calls: Arc<KemCallCounts>,
}

impl FakeKem {
    pub fn new() -> Self {
        FakeKem {
            calls: Arc::new(KemCallCounts::default()),
        }
    }
}

impl Default for FakeKem {
    fn default() -> Self {
        Self::new()
    }
}

impl KemProvider for FakeKem {
    fn name(&self) -> &'static str {
        "FAKE-KEM"
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        self.calls.keygen.fetch_add(1, Ordering::Relaxed);
        let mut x = vec![0u8; 16];
        rng.fill_bytes(&mut x);
        Ok(KeyPair {
            public: x.clone(),
            private: x,
        })
    }

    fn encapsulate(
        &self,
        peer_public: &[u8],
        rng: &mut SessionRng,
    ) -> Result<(Vec<u8>, Vec<u8>), ProviderError> {
        self.calls.encapsulate.fetch_add(1, Ordering::Relaxed);
        let mut blind = vec![0u8; 16];
        rng.fill_bytes(&mut blind);
        let ss = xor16(peer_public, &blind);
        Ok((blind, ss))
    }

    fn decapsulate(&self, private: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, ProviderError> {
        self.calls.decapsulate.fetch_add(1, Ordering::Relaxed);
        Ok(xor16(private, ciphertext))
    }
}

#[derive(Default)]
pub struct SigCallCounts {
    pub keygen: AtomicU64,
    pub sign: AtomicU64,
    pub verify: AtomicU64,
}

/// Signature scheme where the signature is a hash over key and message.
pub struct FakeSignature {
    pub calls: Arc<SigCallCounts>,
}

impl FakeSignature {
    pub fn new() -> Self {
        FakeSignature {
            calls: Arc::new(SigCallCounts::default()),
        }
    }

    fn tag(key: &[u8], message: &[u8]) -> Vec<u8> {
        HashAlg::Sha256.hash(&[b"fake-signature", key, message])
    }
}

impl Default for FakeSignature {
    fn default() -> Self {
        Self::new()
    }
}

impl SignatureProvider for FakeSignature {
    fn name(&self) -> &'static str {
        "FAKE-DSA"
    }

    fn generate_keypair(&self, rng: &mut SessionRng) -> Result<KeyPair, ProviderError> {
        self.calls.keygen.fetch_add(1, Ordering::Relaxed);
        let mut x = vec![0u8; 16];
        rng.fill_bytes(&mut x);
        Ok(KeyPair {
            public: x.clone(),
            private: x,
        })
    }

    fn sign(&self, private: &[u8], message: &[u8]) -> Result<Vec<u8>, ProviderError> {
        self.calls.sign.fetch_add(1, Ordering::Relaxed);
        Ok(Self::tag(private, message))
    }

    fn verify(&self, public: &[u8], message: &[u8], signature: &[u8]) -> bool {
        self.calls.verify.fetch_add(1, Ordering::Relaxed);
        Self::tag(public, message) == signature
    }
}

/// A complete fake provider bundle (elliptic-curve flavored group ids).
pub fn fake_provider() -> crate::provider::CryptoProvider {
    crate::provider::CryptoProvider {
        dh: Arc::new(FakeKeyExchange::new(GroupId::Modp3072)),
        ecdh: Arc::new(FakeKeyExchange::new(GroupId::P256)),
        kem: Arc::new(FakeKem::new()),
        sig: Arc::new(FakeSignature::new()),
    }
}
