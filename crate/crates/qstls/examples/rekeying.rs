//! Extended Key Update rounds: threshold-triggered rekeying where every new
//! generation is a fresh, non-derived combination of new DHKE, QKD, and
//! ML-KEM secrets. The Key Update messages travel under the old keys; all
//! later traffic uses the new ones.
//!
//! ```bash
//! cargo run --example rekeying
//! ```

use qstls::handshake::{
    run_handshake, CertificateAuthority, ClientConfig, ClientQkdConfig, ServerConfig,
    ServerIdentity, ServerQkdConfig,
};
use qstls::provider::CryptoProvider;
use qstls::qkd::NodeId;
use qstls::record::{RekeyAdvice, RekeyPolicy};
use qstls::sdn::{DeployOptions, Network, TopologyConfig};
use qstls::suite::{SecurityLevel, DHKE_QKD_PQC_SUITE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = Network::deploy(
        TopologyConfig::from_toml(
            r#"
            [[nodes]]
            id = "norte"
            [[nodes]]
            id = "concepcion"
            [[links]]
            a = "norte"
            b = "concepcion"
            key_rate = 100.0
            seed = 5
            [[apps]]
            id = "tls-client@norte.default"
            node = "norte"
            [[apps]]
            id = "tls-server@concepcion.default"
            node = "concepcion"
            [[provision]]
            a = "tls-client@norte.default"
            b = "tls-server@concepcion.default"
        "#,
        )?,
        DeployOptions {
            seed: Some(5),
            prefill_secs: 1.0,
        },
    )?;

    let level = SecurityLevel::Level1;
    let provider = CryptoProvider::for_level(level);
    let mut rng = qstls::provider::os_rng();
    let ca = CertificateAuthority::new(provider.sig.clone(), &mut rng)?;
    let identity =
        ServerIdentity::issue(&ca, provider.sig.as_ref(), "concepcion.telco-a", &mut rng)?;
    let client = ClientConfig {
        offered_suites: vec![DHKE_QKD_PQC_SUITE],
        level,
        provider: provider.clone(),
        qkd: ClientQkdConfig::Provisioned {
            kps: net.kps(&NodeId::new("norte")),
            server_node: NodeId::new("concepcion"),
        },
        expected_hostname: "concepcion.telco-a".into(),
        ca_public: ca.public_key().to_vec(),
        rng_seed: None,
    };
    let server = ServerConfig {
        supported_suites: vec![DHKE_QKD_PQC_SUITE],
        level,
        provider,
        qkd: ServerQkdConfig::Provisioned {
            kps: net.kps(&NodeId::new("concepcion")),
        },
        identity,
        rng_seed: None,
    };

    let (mut c, mut s) = run_handshake(&client, &server)?;
    // A tiny threshold so the demo rekeys quickly; the default is the
    // 2^24.5-record AES-GCM bound.
    c.set_rekey_policy(RekeyPolicy {
        max_records: 4,
        max_age: None,
    });
    println!(
        "default policy threshold: {} records",
        qstls::record::DEFAULT_REKEY_THRESHOLD
    );

    let mut sent = 0u32;
    while c.generation() < 3 {
        let record = c.seal(format!("message {sent}").as_bytes())?;
        s.open(&record)?;
        sent += 1;
        if c.rekey_threshold_check() == RekeyAdvice::UpdateRecommended && !c.rekey_in_progress() {
            let old = c.schedule().clone();
            let derived = old.derived_next_generation();
            c.initiate_key_update()?;
            for rec in c.take_outbox() {
                s.open(&rec)?;
            }
            for rec in s.take_outbox() {
                c.open(&rec)?;
            }
            assert_eq!(c.schedule(), s.schedule());
            let fresh = c.schedule();
            println!(
                "rekeyed to generation {} after {sent} records; \
                 fresh key {}.. (derived path would have been {}..)",
                fresh.generation,
                hex_prefix(&fresh.client_write_key),
                hex_prefix(&derived.client_write_key),
            );
            assert_ne!(fresh.client_write_key, derived.client_write_key);
        }
    }

    let record = c.seal(b"still in sync")?;
    println!(
        "final generation {}: {}",
        c.generation(),
        String::from_utf8_lossy(&s.open(&record)?.expect("data"))
    );
    Ok(())
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
