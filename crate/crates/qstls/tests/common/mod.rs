//! Shared test support: an HKDF-SHA384 oracle written from scratch on top of
//! the raw SHA-384 compression (independent of the hkdf/hmac crates the
//! implementation uses), plus network rig builders.

// Each integration-test target compiles its own copy of this module and
// uses a different slice of it.
#![allow(dead_code)]

use qstls::etsi004::{QkdAppId, QoS};
use qstls::handshake::{
    CertificateAuthority, ClientConfig, ClientQkdConfig, ServerConfig, ServerIdentity,
    ServerQkdConfig,
};
use qstls::provider::CryptoProvider;
use qstls::qkd::NodeId;
use qstls::sdn::{
    AppConfig, DeployOptions, LinkConfig, Network, NodeConfig, ProvisionConfig, TopologyConfig,
};
use qstls::suite::SecurityLevel;
use sha2::{Digest, Sha384};

// ---------------------------------------------------------------------------
// Hand-rolled HMAC-SHA-384 and HKDF (the oracle side of the dual route).
// ---------------------------------------------------------------------------

const BLOCK: usize = 128;

pub fn hmac_sha384(key: &[u8], message: &[u8]) -> Vec<u8> {
    let mut k = [0u8; BLOCK];
    if key.len() > BLOCK {
        let d = Sha384::digest(key);
        k[..d.len()].copy_from_slice(&d);
    } else {
        k[..key.len()].copy_from_slice(key);
    }
    let mut inner = Sha384::new();
    inner.update(k.map(|b| b ^ 0x36));
    inner.update(message);
    let inner = inner.finalize();
    let mut outer = Sha384::new();
    outer.update(k.map(|b| b ^ 0x5c));
    outer.update(inner);
    outer.finalize().to_vec()
}

pub fn oracle_extract(salt: &[u8], ikm: &[u8]) -> Vec<u8> {
    hmac_sha384(salt, ikm)
}

pub fn oracle_expand(prk: &[u8], info: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut t: Vec<u8> = Vec::new();
    let mut counter = 1u8;
    while out.len() < len {
        let mut block = t.clone();
        block.extend_from_slice(info);
        block.push(counter);
        t = hmac_sha384(prk, &block);
        out.extend_from_slice(&t);
        counter += 1;
    }
    out.truncate(len);
    out
}

pub fn oracle_hkdf(salt: &[u8], ikm: &[u8], info: &[u8], len: usize) -> Vec<u8> {
    oracle_expand(&oracle_extract(salt, ikm), info, len)
}

/// The labeled expansion contract the schedule documents.
pub fn oracle_expand_label(secret: &[u8], label: &str, context: &[u8], len: usize) -> Vec<u8> {
    let full = [b"qstls ".as_slice(), label.as_bytes()].concat();
    let mut info = Vec::new();
    info.extend_from_slice(&(len as u16).to_be_bytes());
    info.push(full.len() as u8);
    info.extend_from_slice(&full);
    info.push(context.len() as u8);
    info.extend_from_slice(context);
    oracle_expand(secret, &info, len)
}

/// Oracle mirror of the whole generation-0 schedule derivation.
pub struct OracleSchedule {
    pub pre_master: Vec<u8>,
    pub master: Vec<u8>,
    pub client_key: Vec<u8>,
    pub client_iv: Vec<u8>,
    pub server_key: Vec<u8>,
    pub server_iv: Vec<u8>,
}

pub fn oracle_schedule(
    suite_name: &str,
    key_len: usize,
    secrets_concat: &[u8],
    client_hello: &[u8],
    server_hello: &[u8],
) -> OracleSchedule {
    let th = Sha384::digest([client_hello, server_hello].concat()).to_vec();
    let pre_master = oracle_hkdf(&th, secrets_concat, suite_name.as_bytes(), 48);
    let master = oracle_expand_label(&oracle_extract(&th, &pre_master), "master", b"", 48);
    let c_ts = oracle_expand_label(&master, "c ap traffic", &th, 48);
    let s_ts = oracle_expand_label(&master, "s ap traffic", &th, 48);
    OracleSchedule {
        pre_master,
        master,
        client_key: oracle_expand_label(&c_ts, "key", b"", key_len),
        client_iv: oracle_expand_label(&c_ts, "iv", b"", 12),
        server_key: oracle_expand_label(&s_ts, "key", b"", key_len),
        server_iv: oracle_expand_label(&s_ts, "iv", b"", 12),
    }
}

/// The oracle itself is validated against the published HMAC-SHA-384 test
/// vectors (RFC 4231, cases 1 and 2) before anything trusts it.
pub fn oracle_self_test() {
    assert_eq!(
        hex::encode(hmac_sha384(&[0x0b; 20], b"Hi There")),
        "afd03944d84895626b0825f4ab46907f15f9dadbe4101ec682aa034c7cebc59c\
         faea9ea9076ede7f4af152e8b2fa9cb6"
    );
    assert_eq!(
        hex::encode(hmac_sha384(b"Jefe", b"what do ya want for nothing?")),
        "af45d2e376484031617f78d2b58a6b1b9c7ef464f5a01b47e42ec3736322445e\
         8e2240ca5e69e2c78b3239ecfab21649"
    );
}

// ---------------------------------------------------------------------------
// Network rigs.
// ---------------------------------------------------------------------------

pub const CLIENT_APP: &str = "tls-client@norte.telco-a";
pub const SERVER_APP: &str = "tls-server@concepcion.telco-a";

/// Three-node deployment. `direct` links norte—concepcion; otherwise the
/// only QKD path runs through distrito as a trusted relay.
pub fn deploy_pair(
    direct: bool,
    chunk_size: usize,
    provision: bool,
    seed: u64,
    capacity: usize,
) -> Network {
    let rate = capacity as f64;
    let mk_link = |a: &str, b: &str, s: u64| LinkConfig {
        a: a.into(),
        b: b.into(),
        key_rate: rate,
        buffer_capacity: capacity,
        seed: s,
        chunk_size,
    };
    let links = if direct {
        vec![mk_link("norte", "concepcion", seed ^ 1)]
    } else {
        vec![
            mk_link("norte", "distrito", seed ^ 2),
            mk_link("distrito", "concepcion", seed ^ 3),
        ]
    };
    let cfg = TopologyConfig {
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
                id: QkdAppId::new(CLIENT_APP),
                node: "norte".into(),
            },
            AppConfig {
                id: QkdAppId::new(SERVER_APP),
                node: "concepcion".into(),
            },
        ],
        provision: if provision {
            vec![ProvisionConfig {
                a: QkdAppId::new(CLIENT_APP),
                b: QkdAppId::new(SERVER_APP),
                timeout_ms: 10_000,
                ttl_secs: 86_400,
            }]
        } else {
            vec![]
        },
    };
    Network::deploy(
        cfg,
        DeployOptions {
            seed: Some(seed),
            prefill_secs: 1.0,
        },
    )
    .expect("deploy")
}

pub struct Endpoints {
    pub client: ClientConfig,
    pub server: ServerConfig,
}

/// Client/server configs over `net`, sharing a CA and a provider for
/// `level`. `provisioned` picks the KPS hot path instead of on-path stream
/// establishment.
pub fn endpoint_configs(
    net: &Network,
    level: SecurityLevel,
    offered: Vec<u16>,
    supported: Vec<u16>,
    provisioned: bool,
    seed: u64,
) -> Endpoints {
    let provider = CryptoProvider::for_level(level);
    let mut rng = qstls::provider::seeded_rng(seed);
    let ca = CertificateAuthority::new(provider.sig.clone(), &mut rng).expect("ca");
    let identity = ServerIdentity::issue(&ca, provider.sig.as_ref(), "concepcion.telco-a", &mut rng)
        .expect("identity");
    let qos = QoS::new(level.qkd_key_bytes(), 10_000, 86_400);
    let (client_qkd, server_qkd) = if provisioned {
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
                app_id: QkdAppId::new(CLIENT_APP),
                qos: qos.clone(),
            },
            ServerQkdConfig::Direct {
                lkms: net.lkms(&NodeId::new("concepcion")),
                app_id: QkdAppId::new(SERVER_APP),
                qos,
            },
        )
    };
    Endpoints {
        client: ClientConfig {
            offered_suites: offered,
            level,
            provider: provider.clone(),
            qkd: client_qkd,
            expected_hostname: "concepcion.telco-a".into(),
            ca_public: ca.public_key().to_vec(),
            rng_seed: Some(seed),
        },
        server: ServerConfig {
            supported_suites: supported,
            level,
            provider,
            qkd: server_qkd,
            identity,
            rng_seed: Some(seed.wrapping_add(0x9E37_79B9)),
        },
    }
}
