//! Quantum-safe hybrid TLS 1.3-style stack over a simulated SD-QKD network.
//!
//! The stack hybridizes classical Diffie-Hellman, QKD-delivered keys, and
//! post-quantum KEM secrets through ciphersuite-driven negotiation, with an
//! ETSI 004-style key-delivery interface, a key provisioning service for the
//! accelerated handshake path, trusted-node key relay across multi-hop
//! topologies, and a benchmark harness for the per-operation latency
//! taxonomy.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example handshake_direct        # standard hybrid handshake
//! cargo run --example handshake_provisioned   # key-provisioned hot path
//! cargo run --example classical_fallback      # ciphersuite negotiation
//! cargo run --example key_relay               # hop-by-hop trusted-node relay
//! cargo run --example rekeying                # extended Key Update rounds
//! cargo run --example deploy_topology         # SDN controller and config
//! cargo run --example etsi004_session         # key delivery over TCP
//! cargo run --example kps_service             # provisioning REST endpoint
//! ```
//!
//! The `qstls-bench` binary runs handshake benchmarks across key-exchange
//! combinations and topologies and emits CSV or markdown reports.

pub mod bench;
pub mod etsi004;
pub mod fakes;
pub mod handshake;
pub mod kdf;
pub mod kps;
pub mod provider;
pub mod qkd;
pub mod record;
pub mod sdn;
pub mod suite;
pub mod wire;

pub use etsi004::{Etsi004Error, Ksid, Lkms, QkdAppId, QoS};
pub use handshake::{
    client_begin, exchange_qkd_keys, run_handshake, server_respond, CertificateAuthority,
    ClientConfig, ClientQkdConfig, ClientSession, HandshakeError, ServerConfig, ServerIdentity,
    ServerQkdConfig, ServerSession, SessionKeySchedule,
};
pub use provider::CryptoProvider;
pub use qkd::{NodeId, QkdFabric, RelayPath};
pub use record::{Connection, RecordError, RekeyAdvice, RekeyPolicy, Side};
pub use sdn::{Controller, DeployOptions, Network, TopologyConfig};
pub use suite::{
    hybrid_combinations, lookup as suite_lookup, Ciphersuite, KexMethod, SecurityLevel,
    SharedSecretSet,
};
