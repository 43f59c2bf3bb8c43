//! Key-provisioned handshake: streams are established at deploy time, so the
//! handshake path issues no blocking `open_connect` — each endpoint fetches
//! its QKD chunk with a single provisioning GET and the Hello messages carry
//! the chunk coordinates.
//!
//! ```bash
//! cargo run --example handshake_provisioned
//! ```

use qstls::handshake::{
    run_handshake, CertificateAuthority, ClientConfig, ClientQkdConfig, ServerConfig,
    ServerIdentity, ServerQkdConfig,
};
use qstls::provider::CryptoProvider;
use qstls::qkd::NodeId;
use qstls::sdn::{DeployOptions, Network, TopologyConfig};
use qstls::suite::{SecurityLevel, DHKE_QKD_PQC_SUITE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = TopologyConfig::from_toml(
        r#"
        [[nodes]]
        id = "norte"
        domain = "telco-a"

        [[nodes]]
        id = "concepcion"
        domain = "telco-a"

        [[links]]
        a = "norte"
        b = "concepcion"
        key_rate = 200.0
        buffer_capacity = 256
        seed = 11
        chunk_size = 16

        [[apps]]
        id = "tls-client@norte.telco-a"
        node = "norte"

        [[apps]]
        id = "tls-server@concepcion.telco-a"
        node = "concepcion"

        # Deploy-time provisioning: the open_connect happens here, not on the
        # handshake path.
        [[provision]]
        a = "tls-client@norte.telco-a"
        b = "tls-server@concepcion.telco-a"
    "#,
    )?;
    let net = Network::deploy(
        config,
        DeployOptions {
            seed: Some(2),
            prefill_secs: 1.0,
        },
    )?;
    let after_deploy = net.lkms(&NodeId::new("norte")).counters();
    println!(
        "deploy-time calls : open_connect={} (stream pre-established)",
        after_deploy.open_connect
    );

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

    for round in 0..3 {
        let before = net.lkms(&NodeId::new("norte")).counters();
        let (c, s) = run_handshake(&client, &server)?;
        assert_eq!(c.schedule(), s.schedule());
        let after = net.lkms(&NodeId::new("norte")).counters();
        println!(
            "handshake {round}       : suite {} agreed; hot path open_connect +{}, get_key +{}",
            c.schedule().suite.kex_label(),
            after.open_connect - before.open_connect,
            after.get_key - before.get_key,
        );
    }

    let kps = net.kps(&NodeId::new("norte"));
    println!(
        "provisioning GETs : {} (one per handshake)",
        kps.counters().gets
    );
    for event in kps.replenish_policy_tick() {
        println!("maintenance       : {}", event.as_log_line());
    }
    Ok(())
}
