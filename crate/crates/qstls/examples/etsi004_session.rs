//! The key-delivery wire binding over a real TCP loopback: a server fronts
//! one node's LKMS, a client runs the open_connect / get_key / close
//! lifecycle through length-prefixed frames.
//!
//! ```bash
//! cargo run --example etsi004_session
//! ```

use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use qstls::etsi004::{Etsi004Client, Etsi004Server, QkdAppId, QoS};
use qstls::qkd::NodeId;
use qstls::sdn::{DeployOptions, Network, TopologyConfig};

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
            seed = 8
            [[apps]]
            id = "app@norte.default"
            node = "norte"
            [[apps]]
            id = "app@concepcion.default"
            node = "concepcion"
        "#,
        )?,
        DeployOptions {
            seed: Some(8),
            prefill_secs: 1.0,
        },
    )?;

    // Serve norte's LKMS over TCP.
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server = Arc::new(Etsi004Server::new(net.lkms(&NodeId::new("norte"))));
    let server_thread = std::thread::spawn({
        let server = server.clone();
        move || {
            if let Ok((stream, _)) = listener.accept() {
                let _ = server.serve_stream(stream);
            }
        }
    });

    // The peer endpoint opens its side in-process while our client drives
    // the wire protocol.
    let app_a = QkdAppId::new("app@norte.default");
    let app_b = QkdAppId::new("app@concepcion.default");
    let qos = QoS::new(16, 2000, 3600);
    let peer = std::thread::spawn({
        let lkms = net.lkms(&NodeId::new("concepcion"));
        let (app_a, app_b, qos) = (app_a.clone(), app_b.clone(), qos.clone());
        move || lkms.open_connect(&app_b, &app_a, &qos)
    });

    let mut client = Etsi004Client::new(TcpStream::connect(addr)?);
    let ksid = client.open_connect(&app_a, &app_b, &qos)?;
    let peer_ksid = peer.join().unwrap()?;
    println!("session        : KSID {ksid} (peer agrees: {})", ksid == peer_ksid);

    for index in 0..3 {
        let key = client.get_key(ksid, index)?;
        let peer_key = net
            .lkms(&NodeId::new("concepcion"))
            .get_key(ksid, index)?;
        println!(
            "get_key({index})     : {} bytes, peer symmetric: {}",
            key.len(),
            key == peer_key
        );
    }

    // Lifecycle errors over the wire: re-delivery, then teardown.
    match client.get_key(ksid, 0) {
        Err(e) => println!("replay index 0 : status {} ({e})", e.status()),
        Ok(_) => unreachable!("chunk must not be re-delivered"),
    }
    client.close(ksid)?;
    match client.get_key(ksid, 3) {
        Err(e) => println!("after close    : status {} ({e})", e.status()),
        Ok(_) => unreachable!("closed stream must not serve keys"),
    }

    drop(client);
    server_thread.join().unwrap();
    Ok(())
}
