//! Full quantum-safe handshake over a direct QKD link: ciphersuite
//! negotiation, DHKE + QKD + ML-KEM key shares, stream establishment on the
//! handshake path, ML-DSA server authentication, and Finished verification.
//!
//! ```bash
//! cargo run --example handshake_direct
//! ```

use qstls::etsi004::{QkdAppId, QoS};
use qstls::handshake::{
    run_handshake, CertificateAuthority, ClientConfig, ClientQkdConfig, ServerConfig,
    ServerIdentity, ServerQkdConfig,
};
use qstls::provider::CryptoProvider;
use qstls::qkd::NodeId;
use qstls::sdn::{DeployOptions, Network, TopologyConfig};
use qstls::suite::{SecurityLevel, DHKE_QKD_PQC_SUITE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two SD-QKD nodes joined by one QKD link.
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
        seed = 7
        chunk_size = 16

        [[apps]]
        id = "tls-client@norte.telco-a"
        node = "norte"

        [[apps]]
        id = "tls-server@concepcion.telco-a"
        node = "concepcion"
    "#,
    )?;
    let net = Network::deploy(
        config,
        DeployOptions {
            seed: Some(1),
            prefill_secs: 1.0,
        },
    )?;

    // Certificate authority and the server's endorsed identity.
    let level = SecurityLevel::Level1;
    let provider = CryptoProvider::for_level(level);
    let mut rng = qstls::provider::os_rng();
    let ca = CertificateAuthority::new(provider.sig.clone(), &mut rng)?;
    let identity =
        ServerIdentity::issue(&ca, provider.sig.as_ref(), "concepcion.telco-a", &mut rng)?;

    let qos = QoS::new(level.qkd_key_bytes(), 2000, 3600);
    let client = ClientConfig {
        offered_suites: vec![DHKE_QKD_PQC_SUITE],
        level,
        provider: provider.clone(),
        qkd: ClientQkdConfig::Direct {
            lkms: net.lkms(&NodeId::new("norte")),
            app_id: QkdAppId::new("tls-client@norte.telco-a"),
            qos: qos.clone(),
        },
        expected_hostname: "concepcion.telco-a".into(),
        ca_public: ca.public_key().to_vec(),
        rng_seed: None,
    };
    let server = ServerConfig {
        supported_suites: vec![DHKE_QKD_PQC_SUITE],
        level,
        provider,
        qkd: ServerQkdConfig::Direct {
            lkms: net.lkms(&NodeId::new("concepcion")),
            app_id: QkdAppId::new("tls-server@concepcion.telco-a"),
            qos,
        },
        identity,
        rng_seed: None,
    };

    let (mut c, mut s) = run_handshake(&client, &server)?;
    let schedule = c.schedule();
    println!("negotiated suite : {}", schedule.suite.name);
    println!("key exchanges    : {}", schedule.suite.kex_label());
    println!("generation       : {}", schedule.generation);
    println!(
        "traffic keys     : client {}.. / server {}..",
        hex_prefix(&schedule.client_write_key),
        hex_prefix(&schedule.server_write_key)
    );
    assert_eq!(c.schedule(), s.schedule());

    // Application data flows both ways under the agreed keys.
    let record = c.seal(b"hello over hybrid keys")?;
    let plaintext = s.open(&record)?.expect("application data");
    println!("server received  : {}", String::from_utf8_lossy(&plaintext));
    let record = s.seal(b"ack")?;
    println!(
        "client received  : {}",
        String::from_utf8_lossy(&c.open(&record)?.expect("application data"))
    );

    let counters = net.lkms(&NodeId::new("norte")).counters();
    println!(
        "client LKMS calls: open_connect={} get_key={}",
        counters.open_connect, counters.get_key
    );
    Ok(())
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
