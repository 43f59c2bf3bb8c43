//! Hop-by-hop key transport across a trusted node: a three-node network
//! where the endpoints share no direct link, so the transported key is
//! XOR-encrypted per hop and the middle node handles it in plaintext — which
//! the audit log records.
//!
//! ```bash
//! cargo run --example key_relay
//! ```

use qstls::etsi004::{QkdAppId, QoS};
use qstls::qkd::NodeId;
use qstls::sdn::{ComputedPath, DeployOptions, Network, TopologyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = Network::deploy(
        TopologyConfig::from_toml(
            r#"
            [[nodes]]
            id = "norte"
            domain = "telco-a"
            [[nodes]]
            id = "distrito"
            domain = "telco-a"
            [[nodes]]
            id = "concepcion"
            domain = "telco-a"

            [[links]]
            a = "norte"
            b = "distrito"
            key_rate = 100.0
            seed = 41
            [[links]]
            a = "distrito"
            b = "concepcion"
            key_rate = 100.0
            seed = 42

            [[apps]]
            id = "app@norte.telco-a"
            node = "norte"
            [[apps]]
            id = "app@concepcion.telco-a"
            node = "concepcion"
        "#,
        )?,
        DeployOptions {
            seed: Some(4),
            prefill_secs: 1.0,
        },
    )?;

    // The controller routes the pair through the trusted node.
    let path = net
        .controller
        .compute_path(&NodeId::new("norte"), &NodeId::new("concepcion"))?;
    match &path {
        ComputedPath::Relay(p) => println!(
            "computed path : {} ({} hops)",
            p.nodes
                .iter()
                .map(|n| n.as_str())
                .collect::<Vec<_>>()
                .join(" -> "),
            p.hops()
        ),
        ComputedPath::Direct(_) => println!("computed path : direct link"),
    }

    // Raw relay algebra on one-byte values (K=0x5A, CK0=0x3C, CK1=0xF0),
    // shown on a scratch fabric with 1-byte chunks.
    {
        use qstls::qkd::{QkdFabric, QkdLinkConfig, RelayPath};
        let demo = QkdFabric::new(Some(99));
        let mut links = Vec::new();
        for (a, b, s) in [("n1", "n2", 1u64), ("n2", "n3", 2)] {
            links.push(demo.add_link(QkdLinkConfig {
                a: a.into(),
                b: b.into(),
                key_rate: 0.0,
                buffer_capacity: 4,
                seed: s,
                chunk_size: 1,
            }));
        }
        demo.inject_chunk(links[0], vec![0x3C]);
        demo.inject_chunk(links[1], vec![0xF0]);
        let path = RelayPath {
            nodes: vec!["n1".into(), "n2".into(), "n3".into()],
            links,
        };
        let out = demo.relay_transport(&path, &[0x5A])?;
        println!(
            "relay algebra : K=0x5a; KN_0 = {:#04x}, trusted node recovers K, KN_1 = {:#04x}, destination recovers {:#04x}",
            out.parcels[0].payload[0], out.parcels[1].payload[0], out.recovered[0]
        );
    }

    // The end-to-end service view: a key stream between the two endpoints is
    // path-transparent; both sides read identical chunks while the relay
    // runs underneath.
    let a = net.lkms(&NodeId::new("norte"));
    let b = net.lkms(&NodeId::new("concepcion"));
    let app_a = QkdAppId::new("app@norte.telco-a");
    let app_b = QkdAppId::new("app@concepcion.telco-a");
    let qos = QoS::new(16, 2000, 3600);
    let (ksid, _) = std::thread::scope(|s| {
        let ha = s.spawn(|| a.open_connect(&app_a, &app_b, &qos));
        let hb = s.spawn(|| b.open_connect(&app_b, &app_a, &qos));
        (ha.join().unwrap().unwrap(), hb.join().unwrap().unwrap())
    });
    println!("stream        : KSID {ksid}");
    for index in 0..3 {
        let ka = a.get_key(ksid, index)?;
        let kb = b.get_key(ksid, index)?;
        assert_eq!(ka, kb);
        println!(
            "chunk {index}       : {} (identical at both ends)",
            ka.iter().take(8).map(|x| format!("{x:02x}")).collect::<String>()
        );
    }

    println!("audit log     :");
    for event in net.fabric.audit_log() {
        println!("  node {:<10} {:?}", event.node.as_str(), event.kind);
    }
    Ok(())
}
