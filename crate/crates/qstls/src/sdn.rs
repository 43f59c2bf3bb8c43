//! Logically centralized SDN controller: topology and application registry,
//! deterministic path computation, deploy-time provisioning, and the
//! request/response control API.
//!
//! Routing is hop-count shortest path with ties broken toward the
//! lexicographically smallest node sequence; a direct link always wins.
//! Deployment reads a declarative TOML config (nodes, links, application
//! registrations, and the app pairs to pre-provision) and leaves every listed
//! pair with an established key stream so the provisioning hot path needs no
//! further `open_connect`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::etsi004::{Etsi004Error, Ksid, Lkms, LkmsHub, PathResolver, QkdAppId, QoS};
use crate::kps::Kps;
use crate::qkd::{LinkId, NodeId, PathRoute, QkdFabric, QkdLinkConfig, RelayPath};

#[derive(Debug, Error)]
pub enum SdnError {
    #[error("node {0} is already registered")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no QKD path between {0} and {1}")]
    NoPath(NodeId, NodeId),
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("provisioning {a} <-> {b} failed: {source}")]
    Provision {
        a: QkdAppId,
        b: QkdAppId,
        source: Etsi004Error,
    },
}

/// Descriptor of one SD-QKD node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: NodeId,
    pub domain: String,
}

/// Result of a path query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComputedPath {
    Direct(LinkId),
    Relay(RelayPath),
}

impl ComputedPath {
    pub fn route(&self) -> PathRoute {
        match self {
            ComputedPath::Direct(l) => PathRoute::Direct(*l),
            ComputedPath::Relay(p) => PathRoute::Relay(p.clone()),
        }
    }

    pub fn hop_count(&self) -> usize {
        match self {
            ComputedPath::Direct(_) => 1,
            ComputedPath::Relay(p) => p.hops(),
        }
    }
}

struct ControllerState {
    nodes: BTreeMap<NodeId, NodeInfo>,
    links: BTreeMap<(NodeId, NodeId), LinkId>,
    apps: BTreeMap<QkdAppId, NodeId>,
}

/// The controller holds the global network view. Reads (path queries, app
/// resolution) may run concurrently; updates serialize on the state lock.
pub struct Controller {
    fabric: Arc<QkdFabric>,
    state: Mutex<ControllerState>,
}

fn pair(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl Controller {
    pub fn new(fabric: Arc<QkdFabric>) -> Self {
        Controller {
            fabric,
            state: Mutex::new(ControllerState {
                nodes: BTreeMap::new(),
                links: BTreeMap::new(),
                apps: BTreeMap::new(),
            }),
        }
    }

    pub fn register_node(&self, info: NodeInfo) -> Result<NodeId, SdnError> {
        let mut st = self.state.lock().unwrap();
        if st.nodes.contains_key(&info.id) {
            return Err(SdnError::DuplicateNode(info.id));
        }
        let id = info.id.clone();
        st.nodes.insert(id.clone(), info);
        Ok(id)
    }

    pub fn deregister_node(&self, id: &NodeId) -> Result<(), SdnError> {
        let mut st = self.state.lock().unwrap();
        st.nodes
            .remove(id)
            .ok_or_else(|| SdnError::UnknownNode(id.clone()))?;
        let doomed: Vec<(NodeId, NodeId)> = st
            .links
            .keys()
            .filter(|(a, b)| a == id || b == id)
            .cloned()
            .collect();
        for key in doomed {
            if let Some(link) = st.links.remove(&key) {
                self.fabric.remove_link(link);
            }
        }
        st.apps.retain(|_, node| node != id);
        Ok(())
    }

    /// Adds a link to the fabric and topology; both endpoints must exist.
    pub fn register_link(&self, cfg: QkdLinkConfig) -> Result<LinkId, SdnError> {
        let mut st = self.state.lock().unwrap();
        for n in [&cfg.a, &cfg.b] {
            if !st.nodes.contains_key(n) {
                return Err(SdnError::UnknownNode(n.clone()));
            }
        }
        let key = pair(&cfg.a, &cfg.b);
        let id = self.fabric.add_link(cfg);
        st.links.insert(key, id);
        Ok(id)
    }

    pub fn remove_link_between(&self, a: &NodeId, b: &NodeId) -> Option<LinkId> {
        let mut st = self.state.lock().unwrap();
        let id = st.links.remove(&pair(a, b))?;
        self.fabric.remove_link(id);
        Some(id)
    }

    pub fn register_app(&self, app: QkdAppId, node: NodeId) -> Result<(), SdnError> {
        let mut st = self.state.lock().unwrap();
        if !st.nodes.contains_key(&node) {
            return Err(SdnError::UnknownNode(node));
        }
        st.apps.insert(app, node);
        Ok(())
    }

    pub fn nodes(&self) -> Vec<NodeInfo> {
        self.state.lock().unwrap().nodes.values().cloned().collect()
    }

    pub fn links(&self) -> Vec<(NodeId, NodeId)> {
        self.state.lock().unwrap().links.keys().cloned().collect()
    }

    /// Hop-count shortest path, deterministic: a direct link is preferred,
    /// ties resolve to the lexicographically smallest node sequence.
    pub fn compute_path(&self, src: &NodeId, dst: &NodeId) -> Result<ComputedPath, SdnError> {
        let st = self.state.lock().unwrap();
        for n in [src, dst] {
            if !st.nodes.contains_key(n) {
                return Err(SdnError::UnknownNode(n.clone()));
            }
        }
        if src == dst {
            return Err(SdnError::NoPath(src.clone(), dst.clone()));
        }
        if let Some(link) = st.links.get(&pair(src, dst)) {
            return Ok(ComputedPath::Direct(*link));
        }

        let mut adjacency: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
        for (a, b) in st.links.keys() {
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }
        let bfs = |start: &NodeId| -> HashMap<NodeId, usize> {
            let mut dist = HashMap::new();
            dist.insert(start.clone(), 0usize);
            let mut queue = VecDeque::from([start.clone()]);
            while let Some(n) = queue.pop_front() {
                let d = dist[&n];
                if let Some(neigh) = adjacency.get(&n) {
                    for m in neigh {
                        if !dist.contains_key(*m) {
                            dist.insert((*m).clone(), d + 1);
                            queue.push_back((*m).clone());
                        }
                    }
                }
            }
            dist
        };
        let dist_src = bfs(src);
        let dist_dst = bfs(dst);
        let Some(&total) = dist_src.get(dst) else {
            return Err(SdnError::NoPath(src.clone(), dst.clone()));
        };

        // Greedy forward walk over shortest-path nodes; BTreeSet iteration
        // yields neighbors in ascending id order, so the first admissible
        // neighbor is the lexicographic tie-break.
        let mut nodes = vec![src.clone()];
        let mut links = Vec::new();
        let mut cur = src.clone();
        while cur != *dst {
            let d = dist_src[&cur];
            let next = adjacency
                .get(&cur)
                .and_then(|neigh| {
                    neigh.iter().find(|m| {
                        dist_src.get(**m) == Some(&(d + 1))
                            && dist_dst.get(**m).map(|dd| dd + d + 1) == Some(total)
                    })
                })
                .expect("shortest path exists")
                .to_owned()
                .clone();
            links.push(st.links[&pair(&cur, &next)]);
            nodes.push(next.clone());
            cur = next;
        }
        Ok(ComputedPath::Relay(RelayPath { nodes, links }))
    }
}

impl PathResolver for Controller {
    fn node_of_app(&self, app: &QkdAppId) -> Option<NodeId> {
        self.state.lock().unwrap().apps.get(app).cloned()
    }

    fn route(&self, a: &NodeId, b: &NodeId) -> Option<PathRoute> {
        self.compute_path(a, b).ok().map(|p| p.route())
    }
}

// ---------------------------------------------------------------------------
// Declarative topology config.
// ---------------------------------------------------------------------------

/// Topology configuration document. See `config/` in the repository for a
/// complete example.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    #[serde(default)]
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub apps: Vec<AppConfig>,
    #[serde(default)]
    pub provision: Vec<ProvisionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: NodeId,
    #[serde(default = "default_domain")]
    pub domain: String,
}

fn default_domain() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default = "default_rate")]
    pub key_rate: f64,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

fn default_rate() -> f64 {
    100.0
}
fn default_capacity() -> usize {
    1024
}
fn default_chunk() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppConfig {
    pub id: QkdAppId,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionConfig {
    pub a: QkdAppId,
    pub b: QkdAppId,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_ttl")]
    pub ttl_secs: u64,
}

fn default_timeout() -> u64 {
    2000
}
fn default_ttl() -> u64 {
    86_400
}

impl TopologyConfig {
    pub fn from_toml(text: &str) -> Result<Self, SdnError> {
        let cfg: TopologyConfig = toml::from_str(text).map_err(|e| SdnError::Config {
            field: "document".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SdnError> {
        let mut node_ids = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !node_ids.insert(&n.id) {
                return Err(SdnError::Config {
                    field: format!("nodes[{i}].id"),
                    message: format!("duplicate node '{}'", n.id),
                });
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            for (side, n) in [("a", &l.a), ("b", &l.b)] {
                if !node_ids.contains(n) {
                    return Err(SdnError::Config {
                        field: format!("links[{i}].{side}"),
                        message: format!("unknown node '{n}'"),
                    });
                }
            }
            if !matches!(l.chunk_size, 16 | 24 | 32) {
                return Err(SdnError::Config {
                    field: format!("links[{i}].chunk_size"),
                    message: format!("chunk size {} not in {{16, 24, 32}}", l.chunk_size),
                });
            }
        }
        let mut app_ids = BTreeMap::new();
        for (i, a) in self.apps.iter().enumerate() {
            if !node_ids.contains(&a.node) {
                return Err(SdnError::Config {
                    field: format!("apps[{i}].node"),
                    message: format!("unknown node '{}'", a.node),
                });
            }
            app_ids.insert(&a.id, &a.node);
        }
        for (i, p) in self.provision.iter().enumerate() {
            for (side, app) in [("a", &p.a), ("b", &p.b)] {
                if !app_ids.contains_key(app) {
                    return Err(SdnError::Config {
                        field: format!("provision[{i}].{side}"),
                        message: format!("unknown application '{app}'"),
                    });
                }
            }
            if app_ids[&p.a] == app_ids[&p.b] {
                return Err(SdnError::Config {
                    field: format!("provision[{i}]"),
                    message: "both applications live on the same node".into(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Deployed network.
// ---------------------------------------------------------------------------

/// Knobs that are not part of the declarative topology.
#[derive(Debug, Clone)]
pub struct DeployOptions {
    /// Seed for the QRNG and KSID generation; `None` uses OS entropy.
    pub seed: Option<u64>,
    /// Run this many seconds of key production right after deploy.
    pub prefill_secs: f64,
}

impl Default for DeployOptions {
    fn default() -> Self {
        DeployOptions {
            seed: None,
            prefill_secs: 0.0,
        }
    }
}

/// One node's service endpoints.
pub struct SdQkdNode {
    pub lkms: Arc<Lkms>,
    pub kps: Arc<Kps>,
}

/// A deployed SD-QKD network: controller, fabric, and per-node services.
pub struct Network {
    pub controller: Arc<Controller>,
    pub fabric: Arc<QkdFabric>,
    pub hub: Arc<LkmsHub>,
    nodes: BTreeMap<NodeId, SdQkdNode>,
    config: Mutex<TopologyConfig>,
}

impl Network {
    /// Builds the network from a validated config: registers nodes, links and
    /// applications, then pre-establishes a key stream for every provisioned
    /// application pair (the deploy-time `open_connect` calls).
    pub fn deploy(config: TopologyConfig, options: DeployOptions) -> Result<Network, SdnError> {
        config.validate()?;
        let fabric = Arc::new(QkdFabric::new(options.seed));
        let controller = Arc::new(Controller::new(fabric.clone()));
        // Decorrelate the KSID generator from the fabric QRNG.
        let hub = Arc::new(LkmsHub::new(
            fabric.clone(),
            controller.clone() as Arc<dyn PathResolver>,
            options.seed.map(|s| s ^ 0x4B53_4944),
        ));

        let mut nodes = BTreeMap::new();
        for n in &config.nodes {
            controller.register_node(NodeInfo {
                id: n.id.clone(),
                domain: n.domain.clone(),
            })?;
            let lkms = Arc::new(Lkms::new(n.id.clone(), hub.clone()));
            let kps = Arc::new(Kps::new(n.id.clone(), lkms.clone()));
            nodes.insert(n.id.clone(), SdQkdNode { lkms, kps });
        }
        for l in &config.links {
            controller.register_link(QkdLinkConfig {
                a: l.a.clone(),
                b: l.b.clone(),
                key_rate: l.key_rate,
                buffer_capacity: l.buffer_capacity,
                seed: l.seed,
                chunk_size: l.chunk_size,
            })?;
        }
        for a in &config.apps {
            controller.register_app(a.id.clone(), a.node.clone())?;
        }
        if options.prefill_secs > 0.0 {
            fabric.produce_all(options.prefill_secs);
        }

        let network = Network {
            controller,
            fabric,
            hub,
            nodes,
            config: Mutex::new(config.clone()),
        };
        for p in &config.provision {
            network.provision_pair(p)?;
        }
        Ok(network)
    }

    fn provision_pair(&self, p: &ProvisionConfig) -> Result<Ksid, SdnError> {
        let node_a = self
            .controller
            .node_of_app(&p.a)
            .ok_or_else(|| SdnError::Config {
                field: "provision.a".into(),
                message: format!("unknown application '{}'", p.a),
            })?;
        let node_b = self
            .controller
            .node_of_app(&p.b)
            .ok_or_else(|| SdnError::Config {
                field: "provision.b".into(),
                message: format!("unknown application '{}'", p.b),
            })?;
        let path = self
            .controller
            .compute_path(&node_a, &node_b)
            .map_err(|_| SdnError::NoPath(node_a.clone(), node_b.clone()))?;
        let chunk = self
            .fabric
            .link_config(path.route().links()[0])
            .map(|c| c.chunk_size)
            .unwrap_or(16);
        let qos = QoS::new(chunk, p.timeout_ms, p.ttl_secs);

        let a = &self.nodes[&node_a];
        let b = &self.nodes[&node_b];
        // The two blocking open_connect legs rendezvous on their own threads,
        // exactly as the two endpoints would at deploy time.
        let (ka, kb) = std::thread::scope(|s| {
            let ha = s.spawn(|| a.lkms.open_connect(&p.a, &p.b, &qos));
            let hb = s.spawn(|| b.lkms.open_connect(&p.b, &p.a, &qos));
            (ha.join().unwrap(), hb.join().unwrap())
        });
        let ksid = ka.map_err(|e| SdnError::Provision {
            a: p.a.clone(),
            b: p.b.clone(),
            source: e,
        })?;
        let ksid_b = kb.map_err(|e| SdnError::Provision {
            a: p.a.clone(),
            b: p.b.clone(),
            source: e,
        })?;
        debug_assert_eq!(ksid, ksid_b);
        a.kps.install_stream(node_b.clone(), ksid, qos.clone());
        b.kps.install_stream(node_a.clone(), ksid, qos);
        Ok(ksid)
    }

    /// Applies a new config differentially: removed links close exactly the
    /// streams whose routes traverse them; new nodes, links, apps and
    /// provision entries are added. Surviving streams are untouched.
    pub fn redeploy(&self, new_config: TopologyConfig) -> Result<(), SdnError> {
        new_config.validate()?;
        let old = self.config.lock().unwrap().clone();

        let old_links: BTreeMap<(NodeId, NodeId), &LinkConfig> = old
            .links
            .iter()
            .map(|l| (pair(&l.a, &l.b), l))
            .collect();
        let new_links: BTreeMap<(NodeId, NodeId), &LinkConfig> = new_config
            .links
            .iter()
            .map(|l| (pair(&l.a, &l.b), l))
            .collect();

        for (key, _) in old_links.iter().filter(|(k, _)| !new_links.contains_key(*k)) {
            if let Some(link) = self.controller.remove_link_between(&key.0, &key.1) {
                for ksid in self.hub.close_streams_using(link) {
                    for node in self.nodes.values() {
                        node.kps.remove_stream_by_ksid(ksid);
                    }
                }
            }
        }
        for (key, cfg) in new_links.iter().filter(|(k, _)| !old_links.contains_key(*k)) {
            let _ = key;
            self.controller.register_link(QkdLinkConfig {
                a: cfg.a.clone(),
                b: cfg.b.clone(),
                key_rate: cfg.key_rate,
                buffer_capacity: cfg.buffer_capacity,
                seed: cfg.seed,
                chunk_size: cfg.chunk_size,
            })?;
        }
        for a in &new_config.apps {
            if !old.apps.contains(a) {
                self.controller.register_app(a.id.clone(), a.node.clone())?;
            }
        }
        for p in &new_config.provision {
            if !old.provision.contains(p) {
                self.provision_pair(p)?;
            }
        }
        *self.config.lock().unwrap() = new_config;
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Option<&SdQkdNode> {
        self.nodes.get(id)
    }

    pub fn lkms(&self, id: &NodeId) -> Arc<Lkms> {
        self.nodes[id].lkms.clone()
    }

    pub fn kps(&self, id: &NodeId) -> Arc<Kps> {
        self.nodes[id].kps.clone()
    }

    /// Injects the same simulated transport latency into every LKMS and KPS
    /// endpoint.
    pub fn set_latency(&self, latency: Duration) {
        for node in self.nodes.values() {
            node.lkms.set_latency(latency);
            node.kps.set_latency(latency);
        }
    }

    /// Runs one provisioning maintenance pass on every node and re-opens
    /// TTL-expired streams with fresh KSIDs.
    pub fn replenish(&self) -> Vec<(NodeId, crate::kps::KpsEvent)> {
        let mut events = Vec::new();
        let mut expired: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for (id, node) in &self.nodes {
            for ev in node.kps.replenish_policy_tick() {
                if let crate::kps::KpsEvent::Expired { peer, .. } = &ev {
                    expired.insert(pair(id, peer));
                }
                events.push((id.clone(), ev));
            }
        }
        let provisions = self.config.lock().unwrap().provision.clone();
        for (a, b) in expired {
            // Close the old stream and re-provision the pair.
            if let Some(entry) = provisions.iter().find(|p| {
                let (Some(na), Some(nb)) = (
                    self.controller.node_of_app(&p.a),
                    self.controller.node_of_app(&p.b),
                ) else {
                    return false;
                };
                pair(&na, &nb) == pair(&a, &b)
            }) {
                let node_a = self.controller.node_of_app(&entry.a).unwrap();
                if let Some(old) = self.nodes[&node_a].kps.stream_for_peer(&b) {
                    let _ = self.nodes[&node_a].lkms.close(old.ksid);
                    for node in self.nodes.values() {
                        node.kps.remove_stream_by_ksid(old.ksid);
                    }
                }
                if let Ok(new_ksid) = self.provision_pair(entry) {
                    events.push((
                        node_a.clone(),
                        crate::kps::KpsEvent::Reopened {
                            peer: b.clone(),
                            ksid: new_ksid,
                        },
                    ));
                }
            }
        }
        events
    }

    /// Serves the controller API: register/deregister node, topology, path
    /// queries and differential deploys.
    pub fn handle_controller_request(&self, req: ControllerRequest) -> ControllerResponse {
        match req {
            ControllerRequest::RegisterNode { id, domain } => {
                match self.controller.register_node(NodeInfo {
                    id: id.clone(),
                    domain,
                }) {
                    Ok(id) => ControllerResponse::NodeRegistered { id },
                    Err(e) => ControllerResponse::Error {
                        message: e.to_string(),
                    },
                }
            }
            ControllerRequest::DeregisterNode { id } => match self.controller.deregister_node(&id)
            {
                Ok(()) => ControllerResponse::Ok,
                Err(e) => ControllerResponse::Error {
                    message: e.to_string(),
                },
            },
            ControllerRequest::GetTopology => ControllerResponse::Topology {
                nodes: self.controller.nodes(),
                links: self.controller.links(),
            },
            ControllerRequest::ComputePath { src, dst } => {
                match self.controller.compute_path(&src, &dst) {
                    Ok(ComputedPath::Direct(_)) => ControllerResponse::Path {
                        direct: true,
                        nodes: vec![src, dst],
                    },
                    Ok(ComputedPath::Relay(p)) => ControllerResponse::Path {
                        direct: false,
                        nodes: p.nodes,
                    },
                    Err(e) => ControllerResponse::Error {
                        message: e.to_string(),
                    },
                }
            }
            ControllerRequest::Deploy { config } => match self.redeploy(config) {
                Ok(()) => ControllerResponse::Ok,
                Err(e) => ControllerResponse::Error {
                    message: e.to_string(),
                },
            },
        }
    }
}

/// Controller API request, JSON-serializable for the endpoint binding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ControllerRequest {
    RegisterNode { id: NodeId, domain: String },
    DeregisterNode { id: NodeId },
    GetTopology,
    ComputePath { src: NodeId, dst: NodeId },
    Deploy { config: TopologyConfig },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ControllerResponse {
    Ok,
    NodeRegistered {
        id: NodeId,
    },
    Topology {
        nodes: Vec<NodeInfo>,
        links: Vec<(NodeId, NodeId)>,
    },
    Path {
        direct: bool,
        nodes: Vec<NodeId>,
    },
    Error {
        message: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_node_config() -> TopologyConfig {
        TopologyConfig {
            nodes: vec![
                NodeConfig {
                    id: "norte".into(),
                    domain: "telco-a".into(),
                },
                NodeConfig {
                    id: "distrito".into(),
                    domain: "telco-a".into(),
                },
                NodeConfig {
                    id: "concepcion".into(),
                    domain: "telco-a".into(),
                },
            ],
            links: vec![
                LinkConfig {
                    a: "norte".into(),
                    b: "distrito".into(),
                    key_rate: 100.0,
                    buffer_capacity: 256,
                    seed: 1,
                    chunk_size: 16,
                },
                LinkConfig {
                    a: "distrito".into(),
                    b: "concepcion".into(),
                    key_rate: 100.0,
                    buffer_capacity: 256,
                    seed: 2,
                    chunk_size: 16,
                },
            ],
            apps: vec![
                AppConfig {
                    id: QkdAppId::new("tls-client@norte.telco-a"),
                    node: "norte".into(),
                },
                AppConfig {
                    id: QkdAppId::new("tls-server@concepcion.telco-a"),
                    node: "concepcion".into(),
                },
                AppConfig {
                    id: QkdAppId::new("monitor@distrito.telco-a"),
                    node: "distrito".into(),
                },
            ],
            provision: vec![],
        }
    }

    #[test]
    fn register_three_nodes_two_links() {
        let net = Network::deploy(three_node_config(), DeployOptions::default()).unwrap();
        assert_eq!(net.controller.nodes().len(), 3);
        assert_eq!(net.controller.links().len(), 2);
        let path = net
            .controller
            .compute_path(&"norte".into(), &"concepcion".into())
            .unwrap();
        assert_eq!(path.hop_count(), 2);
    }

    #[test]
    fn duplicate_node_rejected() {
        let fabric = Arc::new(QkdFabric::new(Some(1)));
        let c = Controller::new(fabric);
        c.register_node(NodeInfo {
            id: "n".into(),
            domain: "d".into(),
        })
        .unwrap();
        assert!(matches!(
            c.register_node(NodeInfo {
                id: "n".into(),
                domain: "d".into(),
            }),
            Err(SdnError::DuplicateNode(_))
        ));
    }

    #[test]
    fn direct_link_preferred() {
        let mut cfg = three_node_config();
        cfg.links.push(LinkConfig {
            a: "norte".into(),
            b: "concepcion".into(),
            key_rate: 100.0,
            buffer_capacity: 256,
            seed: 3,
            chunk_size: 16,
        });
        let net = Network::deploy(cfg, DeployOptions::default()).unwrap();
        assert!(matches!(
            net.controller
                .compute_path(&"norte".into(), &"concepcion".into()),
            Ok(ComputedPath::Direct(_))
        ));
    }

    #[test]
    fn relay_path_via_trusted_node() {
        let net = Network::deploy(three_node_config(), DeployOptions::default()).unwrap();
        let ComputedPath::Relay(p) = net
            .controller
            .compute_path(&"norte".into(), &"concepcion".into())
            .unwrap()
        else {
            panic!("expected relay");
        };
        assert_eq!(
            p.nodes,
            vec![
                NodeId::new("norte"),
                NodeId::new("distrito"),
                NodeId::new("concepcion")
            ]
        );
    }

    #[test]
    fn disconnected_pair_is_no_path() {
        let mut cfg = three_node_config();
        cfg.links.clear();
        let net = Network::deploy(cfg, DeployOptions::default()).unwrap();
        assert!(matches!(
            net.controller
                .compute_path(&"norte".into(), &"concepcion".into()),
            Err(SdnError::NoPath(_, _))
        ));
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // Two equal-length routes src -> {m1|m2} -> dst; m1 must win.
        let cfg = TopologyConfig {
            nodes: ["dst", "m2", "m1", "src"]
                .into_iter()
                .map(|id| NodeConfig {
                    id: id.into(),
                    domain: "d".into(),
                })
                .collect(),
            links: [("src", "m1"), ("src", "m2"), ("m1", "dst"), ("m2", "dst")]
                .into_iter()
                .map(|(a, b)| LinkConfig {
                    a: a.into(),
                    b: b.into(),
                    key_rate: 1.0,
                    buffer_capacity: 16,
                    seed: 0,
                    chunk_size: 16,
                })
                .collect(),
            apps: vec![],
            provision: vec![],
        };
        let net = Network::deploy(cfg, DeployOptions::default()).unwrap();
        let ComputedPath::Relay(p) = net
            .controller
            .compute_path(&"src".into(), &"dst".into())
            .unwrap()
        else {
            panic!("expected relay");
        };
        assert_eq!(p.nodes[1], NodeId::new("m1"));
        // Deterministic on repeat queries.
        for _ in 0..5 {
            let ComputedPath::Relay(q) = net
                .controller
                .compute_path(&"src".into(), &"dst".into())
                .unwrap()
            else {
                panic!()
            };
            assert_eq!(q.nodes, p.nodes);
        }
    }

    #[test]
    fn cross_domain_path_via_border_link() {
        let mut cfg = three_node_config();
        cfg.nodes.push(NodeConfig {
            id: "remoto".into(),
            domain: "telco-b".into(),
        });
        cfg.links.push(LinkConfig {
            a: "concepcion".into(),
            b: "remoto".into(),
            key_rate: 10.0,
            buffer_capacity: 64,
            seed: 9,
            chunk_size: 16,
        });
        let net = Network::deploy(cfg, DeployOptions::default()).unwrap();
        let path = net
            .controller
            .compute_path(&"norte".into(), &"remoto".into())
            .unwrap();
        assert_eq!(path.hop_count(), 3);
    }

    #[test]
    fn deploy_provisions_listed_pairs() {
        let mut cfg = three_node_config();
        cfg.apps.push(AppConfig {
            id: QkdAppId::new("ops@distrito.telco-a"),
            node: "distrito".into(),
        });
        cfg.provision = vec![
            ProvisionConfig {
                a: QkdAppId::new("tls-client@norte.telco-a"),
                b: QkdAppId::new("tls-server@concepcion.telco-a"),
                timeout_ms: 2000,
                ttl_secs: 3600,
            },
            ProvisionConfig {
                a: QkdAppId::new("monitor@distrito.telco-a"),
                b: QkdAppId::new("tls-server@concepcion.telco-a"),
                timeout_ms: 2000,
                ttl_secs: 3600,
            },
        ];
        let net = Network::deploy(
            cfg,
            DeployOptions {
                seed: Some(7),
                prefill_secs: 1.0,
            },
        )
        .unwrap();
        assert_eq!(net.hub.open_stream_count(), 2);
        // Both KPS sides hold the same KSID.
        let ks_client = net
            .kps(&"norte".into())
            .stream_for_peer(&"concepcion".into())
            .unwrap();
        let ks_server = net
            .kps(&"concepcion".into())
            .stream_for_peer(&"norte".into())
            .unwrap();
        assert_eq!(ks_client.ksid, ks_server.ksid);
    }

    #[test]
    fn config_unknown_node_diagnostic() {
        let mut cfg = three_node_config();
        cfg.links.push(LinkConfig {
            a: "norte".into(),
            b: "fantasma".into(),
            key_rate: 1.0,
            buffer_capacity: 1,
            seed: 0,
            chunk_size: 16,
        });
        let err = cfg.validate().unwrap_err();
        let SdnError::Config { field, message } = err else {
            panic!("expected config error");
        };
        assert_eq!(field, "links[2].b");
        assert!(message.contains("fantasma"));
    }

    #[test]
    fn redeploy_with_removed_link_closes_only_affected_streams() {
        let mut cfg = three_node_config();
        // Add a direct norte-concepcion link so two disjoint streams exist.
        cfg.links.push(LinkConfig {
            a: "norte".into(),
            b: "concepcion".into(),
            key_rate: 100.0,
            buffer_capacity: 256,
            seed: 4,
            chunk_size: 16,
        });
        cfg.provision = vec![
            // Uses the direct link.
            ProvisionConfig {
                a: QkdAppId::new("tls-client@norte.telco-a"),
                b: QkdAppId::new("tls-server@concepcion.telco-a"),
                timeout_ms: 2000,
                ttl_secs: 3600,
            },
            // norte-distrito single hop.
            ProvisionConfig {
                a: QkdAppId::new("tls-client@norte.telco-a"),
                b: QkdAppId::new("monitor@distrito.telco-a"),
                timeout_ms: 2000,
                ttl_secs: 3600,
            },
        ];
        let net = Network::deploy(
            cfg.clone(),
            DeployOptions {
                seed: Some(8),
                prefill_secs: 1.0,
            },
        )
        .unwrap();
        assert_eq!(net.hub.open_stream_count(), 2);
        let surviving = net
            .kps(&"norte".into())
            .stream_for_peer(&"distrito".into())
            .unwrap()
            .ksid;

        // Remove the direct link; only the stream over it must close.
        let mut new_cfg = cfg.clone();
        new_cfg.links.retain(|l| {
            !(l.a == NodeId::new("norte") && l.b == NodeId::new("concepcion"))
        });
        net.redeploy(new_cfg).unwrap();
        assert_eq!(net.hub.open_stream_count(), 1);
        assert!(net
            .kps(&"norte".into())
            .stream_for_peer(&"concepcion".into())
            .is_none());
        assert_eq!(
            net.kps(&"norte".into())
                .stream_for_peer(&"distrito".into())
                .unwrap()
                .ksid,
            surviving
        );
    }

    #[test]
    fn controller_api_roundtrip() {
        let net = Network::deploy(three_node_config(), DeployOptions::default()).unwrap();
        let req: ControllerRequest = serde_json::from_str(
            r#"{"op":"compute_path","src":"norte","dst":"concepcion"}"#,
        )
        .unwrap();
        let resp = net.handle_controller_request(req);
        let json = serde_json::to_string(&resp).unwrap();
        assert!(json.contains("\"direct\":false"));
        assert!(json.contains("distrito"));

        let resp = net.handle_controller_request(ControllerRequest::RegisterNode {
            id: "norte".into(),
            domain: "telco-a".into(),
        });
        assert!(matches!(resp, ControllerResponse::Error { .. }));
    }

    #[test]
    fn toml_config_parses() {
        let text = r#"
            [[nodes]]
            id = "norte"
            domain = "telco-a"

            [[nodes]]
            id = "concepcion"
            domain = "telco-a"

            [[links]]
            a = "norte"
            b = "concepcion"
            key_rate = 50.0
            buffer_capacity = 128
            seed = 11
            chunk_size = 16

            [[apps]]
            id = "tls-client@norte.telco-a"
            node = "norte"

            [[apps]]
            id = "tls-server@concepcion.telco-a"
            node = "concepcion"

            [[provision]]
            a = "tls-client@norte.telco-a"
            b = "tls-server@concepcion.telco-a"
        "#;
        let cfg = TopologyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.nodes.len(), 2);
        assert_eq!(cfg.provision[0].timeout_ms, 2000);
        let net = Network::deploy(cfg, DeployOptions::default()).unwrap();
        assert_eq!(net.hub.open_stream_count(), 1);
    }
}
