//! SDN control plane: deploying a multi-domain topology from a config file,
//! querying paths through the controller API, and a differential re-deploy
//! that removes a link and closes exactly the streams that crossed it.
//!
//! ```bash
//! cargo run --example deploy_topology
//! ```

use qstls::qkd::NodeId;
use qstls::sdn::{
    ControllerRequest, ControllerResponse, DeployOptions, Network, TopologyConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toml_text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/topology.toml"),
    )?;
    let config = TopologyConfig::from_toml(&toml_text)?;
    let net = Network::deploy(
        config.clone(),
        DeployOptions {
            seed: Some(6),
            prefill_secs: 1.0,
        },
    )?;
    println!(
        "deployed {} nodes, {} links, {} provisioned streams",
        net.controller.nodes().len(),
        net.controller.links().len(),
        net.hub.open_stream_count()
    );

    // Controller API over JSON requests.
    for request in [
        r#"{"op":"get_topology"}"#.to_string(),
        r#"{"op":"compute_path","src":"norte","dst":"concepcion"}"#.to_string(),
        r#"{"op":"compute_path","src":"norte","dst":"remoto"}"#.to_string(),
        r#"{"op":"register_node","id":"norte","domain":"telco-a"}"#.to_string(),
    ] {
        let req: ControllerRequest = serde_json::from_str(&request)?;
        let resp = net.handle_controller_request(req);
        println!("  {request}");
        println!("  -> {}", serde_json::to_string(&resp)?);
    }

    // Differential re-deploy: drop the direct norte-concepcion link. The
    // provisioned stream that crossed it closes; the others survive.
    let mut trimmed = config.clone();
    trimmed
        .links
        .retain(|l| !(l.a == NodeId::new("norte") && l.b == NodeId::new("concepcion")));
    net.redeploy(trimmed)?;
    println!(
        "after removing the direct link: {} streams remain",
        net.hub.open_stream_count()
    );
    let resp = net.handle_controller_request(ControllerRequest::ComputePath {
        src: NodeId::new("norte"),
        dst: NodeId::new("concepcion"),
    });
    if let ControllerResponse::Path { direct, nodes } = &resp {
        println!(
            "norte -> concepcion now routes {} via {:?}",
            if *direct { "directly" } else { "as a relay" },
            nodes.iter().map(|n| n.as_str()).collect::<Vec<_>>()
        );
    }
    Ok(())
}
