//! The provisioning REST endpoint over TCP: `GET /keys/{peer}` serves the
//! next chunk of the deploy-time stream as a JSON document, and the two
//! endpoints fetch matching chunks by coordinate.
//!
//! ```bash
//! cargo run --example kps_service
//! ```

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};

use qstls::qkd::NodeId;
use qstls::sdn::{DeployOptions, Network, TopologyConfig};

fn http_get(addr: std::net::SocketAddr, path: &str) -> std::io::Result<String> {
    let mut stream = TcpStream::connect(addr)?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: kps\r\n\r\n")?;
    stream.flush()?;
    let mut response = String::new();
    stream.shutdown(std::net::Shutdown::Write)?;
    stream.read_to_string(&mut response)?;
    Ok(response)
}

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
            seed = 9
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
            seed: Some(9),
            prefill_secs: 1.0,
        },
    )?;

    // Serve norte's KPS over HTTP.
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let kps = net.kps(&NodeId::new("norte"));
    let server = std::thread::spawn({
        let kps = kps.clone();
        move || {
            for _ in 0..3 {
                if let Ok((stream, _)) = listener.accept() {
                    let _ = kps.serve_http(stream);
                }
            }
        }
    });

    // The application hot path: one GET, no open_connect.
    let response = http_get(addr, "/keys/concepcion")?;
    let (head, body) = response.split_once("\r\n\r\n").unwrap();
    println!("-> GET /keys/concepcion");
    println!("   {}", head.lines().next().unwrap());
    println!("   {body}");

    // The peer fetches the matching chunk at the same coordinates.
    let doc: qstls::kps::KpsKeyDocument = serde_json::from_str(body)?;
    let peer = net
        .kps(&NodeId::new("concepcion"))
        .get_provisioned_key_at(&NodeId::new("norte"), doc.index)?;
    use base64::Engine as _;
    let ours = base64::engine::general_purpose::STANDARD.decode(&doc.key)?;
    println!(
        "   peer chunk at index {} matches: {}",
        doc.index,
        ours == peer.key
    );

    // Explicit coordinates and the not-provisioned error, over the wire.
    let response = http_get(addr, "/keys/concepcion?index=5")?;
    println!("-> GET /keys/concepcion?index=5");
    println!("   {}", response.split_once("\r\n\r\n").unwrap().1);
    let response = http_get(addr, "/keys/fantasma")?;
    println!("-> GET /keys/fantasma");
    println!("   {}", response.lines().next().unwrap());

    server.join().unwrap();
    println!("provisioning GETs served: {}", kps.counters().gets);
    Ok(())
}
