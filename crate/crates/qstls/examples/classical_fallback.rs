//! Ciphersuite negotiation and backward compatibility: a hybrid-capable
//! client against servers of varying capability, the suite-intersection
//! rule, and the handshake_failure path when nothing overlaps.
//!
//! ```bash
//! cargo run --example classical_fallback
//! ```

use qstls::handshake::{
    run_handshake, CertificateAuthority, ClientConfig, ClientQkdConfig, HandshakeError,
    ServerConfig, ServerIdentity, ServerQkdConfig,
};
use qstls::provider::CryptoProvider;
use qstls::qkd::NodeId;
use qstls::sdn::{DeployOptions, Network, TopologyConfig};
use qstls::suite::{self, SecurityLevel, DHKE_QKD_PQC_SUITE};

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
            seed = 3
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
            seed: Some(3),
            prefill_secs: 1.0,
        },
    )?;

    let level = SecurityLevel::Level1;
    let provider = CryptoProvider::for_level(level);
    let mut rng = qstls::provider::os_rng();
    let ca = CertificateAuthority::new(provider.sig.clone(), &mut rng)?;
    let identity =
        ServerIdentity::issue(&ca, provider.sig.as_ref(), "concepcion.telco-a", &mut rng)?;

    // The client prefers the full hybrid, then the QKD-only hybrid, then the
    // classical baseline.
    let offered = vec![DHKE_QKD_PQC_SUITE, 0xFF02, 0x1302];
    let client = ClientConfig {
        offered_suites: offered.clone(),
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
    let server_for = |supported: Vec<u16>| ServerConfig {
        supported_suites: supported,
        level,
        provider: provider.clone(),
        qkd: ServerQkdConfig::Provisioned {
            kps: net.kps(&NodeId::new("concepcion")),
        },
        identity: identity.clone(),
        rng_seed: None,
    };

    println!(
        "client offers: {:?}",
        offered
            .iter()
            .map(|cp| suite::lookup(*cp).unwrap().kex_label())
            .collect::<Vec<_>>()
    );
    let scenarios: &[(&str, Vec<u16>)] = &[
        ("quantum-safe server", vec![DHKE_QKD_PQC_SUITE, 0x1302]),
        ("QKD-only server", vec![0xFF02]),
        ("classical-only server", vec![0x1302, 0x1301]),
    ];
    for (label, supported) in scenarios {
        let (c, _s) = run_handshake(&client, &server_for(supported.clone()))?;
        println!(
            "{label:<22} -> negotiated {} ({})",
            c.schedule().suite.name,
            c.schedule().suite.kex_label()
        );
    }

    // No overlap at all: the handshake fails with a handshake_failure alert.
    match run_handshake(&client, &server_for(vec![0x1303])) {
        Err(e @ HandshakeError::NoCommonSuite) => {
            println!(
                "incompatible server    -> {} (alert {:?})",
                e,
                e.alert().unwrap()
            );
        }
        other => panic!("expected NoCommonSuite, got {other:?}"),
    }
    Ok(())
}
