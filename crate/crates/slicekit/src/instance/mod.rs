//! Substrate network and service request domain types.
//!
//! An [`Instance`] couples a directed substrate network (nodes, some of which
//! are cloud nodes able to host functions, and capacitated links) with a set
//! of [`Service`] requests. Each service carries an ordered function chain,
//! per-stage data rates, per-(node, stage) processing delays, and end-to-end
//! delay/reliability budgets.

mod generate;
mod io;
mod paths;

pub use generate::{generate_instance, qos_budgets, GenConfig, TopologyConfig};
pub use io::{load_instance, save_instance};
pub use paths::{most_reliable_path, shortest_path_delay, PathError};

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Validation error for instance data, carrying the path of the offending field.
#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("instance document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("disconnected instance: no path from {src} to {dst} after {attempts} attempts")]
    Disconnected {
        src: String,
        dst: String,
        attempts: usize,
    },
    #[error("invalid generator config: {0}")]
    Config(String),
}

impl InstanceError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        InstanceError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// What role a node plays in the substrate network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Transit-only node: cannot host functions, not eligible as a service endpoint.
    Plain,
    /// Cloud node: can host service functions.
    Cloud,
    /// Endpoint node: eligible as a service source or destination.
    Endpoint,
}

/// Capacity and reliability attributes of a cloud node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudNodeAttr {
    /// Computational capacity in rate units; processing one unit of data rate
    /// consumes one unit of capacity.
    pub capacity: f64,
    /// Probability in (0, 1] that the node is operational.
    pub reliability: f64,
}

/// A substrate network node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Present iff `kind == NodeKind::Cloud`.
    pub cloud: Option<CloudNodeAttr>,
}

impl Node {
    pub fn plain(id: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Plain,
            cloud: None,
        }
    }

    pub fn endpoint(id: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Endpoint,
            cloud: None,
        }
    }

    pub fn cloud(id: impl Into<String>, capacity: f64, reliability: f64) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Cloud,
            cloud: Some(CloudNodeAttr {
                capacity,
                reliability,
            }),
        }
    }

    pub fn is_cloud(&self) -> bool {
        self.kind == NodeKind::Cloud
    }
}

/// A directed substrate link.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Tail node id.
    pub tail: String,
    /// Head node id.
    pub head: String,
    /// Expected communication delay in time units.
    pub delay: f64,
    /// Probability in (0, 1] that the link is operational.
    pub reliability: f64,
    /// Total data rate capacity in rate units.
    pub capacity: f64,
}

/// A service request: an ordered function chain between two endpoint nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Service {
    pub id: String,
    /// Source node id; must not be a cloud node.
    pub source: String,
    /// Destination node id; must not be a cloud node.
    pub destination: String,
    /// Ordered function names; length defines the number of stages.
    pub chain: Vec<String>,
    /// Data rates: `rates[s]` is the rate after stage `s`, with `rates[0]` the
    /// ingress rate. Length is `chain.len() + 1`.
    pub rates: Vec<f64>,
    /// Processing delay of stage `s` (1-based) when hosted at cloud node `v`.
    /// Must cover every (cloud node, stage) pair.
    pub nfv_delay: BTreeMap<(String, usize), f64>,
    /// End-to-end delay budget.
    pub delay_budget: f64,
    /// End-to-end reliability budget in [0, 1].
    pub reliability_budget: f64,
}

impl Service {
    /// Number of function stages in the chain.
    pub fn num_stages(&self) -> usize {
        self.chain.len()
    }

    /// Flow stage indices `0..=num_stages()`: flow `s` runs from the host of
    /// stage `s` (the source when `s == 0`) to the host of stage `s + 1`
    /// (the destination when `s == num_stages()`).
    pub fn flow_stages(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.num_stages()
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub services: Vec<Service>,
    /// Maximum number of paths usable to route each flow.
    pub path_count: usize,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl Instance {
    /// Index of a node by id.
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Ids of all cloud nodes, in node order.
    pub fn cloud_ids(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.is_cloud())
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Check every structural invariant, returning the first violation with a
    /// field path such as `services[2].nfv_delay`.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let mut ids = HashSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let path = format!("nodes[{i}]");
            if !valid_id(&node.id) {
                return Err(InstanceError::schema(
                    format!("{path}.id"),
                    format!(
                        "id {:?} must be nonempty and contain only [A-Za-z0-9_.-]",
                        node.id
                    ),
                ));
            }
            if !ids.insert(node.id.clone()) {
                return Err(InstanceError::schema(
                    format!("{path}.id"),
                    format!("duplicate node id {:?}", node.id),
                ));
            }
            match (node.kind, &node.cloud) {
                (NodeKind::Cloud, Some(attr)) => {
                    if !(attr.capacity >= 0.0) {
                        return Err(InstanceError::schema(
                            format!("{path}.capacity"),
                            format!("cloud node {:?} capacity must be >= 0", node.id),
                        ));
                    }
                    if !(attr.reliability > 0.0 && attr.reliability <= 1.0) {
                        return Err(InstanceError::schema(
                            format!("{path}.reliability"),
                            format!("cloud node {:?} reliability must be in (0, 1]", node.id),
                        ));
                    }
                }
                (NodeKind::Cloud, None) => {
                    return Err(InstanceError::schema(
                        format!("{path}.reliability"),
                        format!("cloud node {:?} is missing capacity/reliability", node.id),
                    ));
                }
                (_, Some(_)) => {
                    return Err(InstanceError::schema(
                        path,
                        format!("non-cloud node {:?} carries cloud attributes", node.id),
                    ));
                }
                (_, None) => {}
            }
        }

        let mut link_keys = HashSet::new();
        for (i, link) in self.links.iter().enumerate() {
            let path = format!("links[{i}]");
            for (end, field) in [(&link.tail, "i"), (&link.head, "j")] {
                if !ids.contains(end.as_str()) {
                    return Err(InstanceError::schema(
                        format!("{path}.{field}"),
                        format!("unknown node id {end:?}"),
                    ));
                }
            }
            if link.tail == link.head {
                return Err(InstanceError::schema(path, "self-loop link"));
            }
            if !link_keys.insert((link.tail.clone(), link.head.clone())) {
                return Err(InstanceError::schema(
                    path,
                    format!("duplicate link ({:?}, {:?})", link.tail, link.head),
                ));
            }
            if !(link.delay >= 0.0) {
                return Err(InstanceError::schema(
                    format!("{path}.delay"),
                    "delay must be >= 0",
                ));
            }
            if !(link.reliability > 0.0 && link.reliability <= 1.0) {
                return Err(InstanceError::schema(
                    format!("{path}.reliability"),
                    "reliability must be in (0, 1]",
                ));
            }
            if !(link.capacity >= 0.0) {
                return Err(InstanceError::schema(
                    format!("{path}.capacity"),
                    "capacity must be >= 0",
                ));
            }
        }

        if self.path_count < 1 {
            return Err(InstanceError::schema("P", "path count must be >= 1"));
        }

        let cloud: Vec<&str> = self.cloud_ids();
        let kind_of: HashMap<&str, NodeKind> =
            self.nodes.iter().map(|n| (n.id.as_str(), n.kind)).collect();
        let mut service_ids = HashSet::new();
        for (i, svc) in self.services.iter().enumerate() {
            let path = format!("services[{i}]");
            if !valid_id(&svc.id) {
                return Err(InstanceError::schema(
                    format!("{path}.id"),
                    format!("id {:?} must be nonempty and contain only [A-Za-z0-9_.-]", svc.id),
                ));
            }
            if !service_ids.insert(svc.id.clone()) {
                return Err(InstanceError::schema(
                    format!("{path}.id"),
                    format!("duplicate service id {:?}", svc.id),
                ));
            }
            for (end, field) in [(&svc.source, "source"), (&svc.destination, "destination")] {
                match kind_of.get(end.as_str()) {
                    None => {
                        return Err(InstanceError::schema(
                            format!("{path}.{field}"),
                            format!("unknown node id {end:?}"),
                        ));
                    }
                    Some(NodeKind::Cloud) => {
                        return Err(InstanceError::schema(
                            format!("{path}.{field}"),
                            format!("{end:?} is a cloud node; endpoints must be non-cloud"),
                        ));
                    }
                    Some(_) => {}
                }
            }
            if svc.chain.is_empty() {
                return Err(InstanceError::schema(
                    format!("{path}.chain"),
                    "chain must contain at least one function",
                ));
            }
            if svc.rates.len() != svc.chain.len() + 1 {
                return Err(InstanceError::schema(
                    format!("{path}.rates"),
                    format!(
                        "expected {} rates for a {}-function chain, got {}",
                        svc.chain.len() + 1,
                        svc.chain.len(),
                        svc.rates.len()
                    ),
                ));
            }
            if let Some(r) = svc.rates.iter().find(|r| !(**r >= 0.0)) {
                return Err(InstanceError::schema(
                    format!("{path}.rates"),
                    format!("rate {r} must be >= 0"),
                ));
            }
            for v in &cloud {
                for s in 1..=svc.num_stages() {
                    match svc.nfv_delay.get(&(v.to_string(), s)) {
                        None => {
                            return Err(InstanceError::schema(
                                format!("{path}.nfv_delay"),
                                format!("missing processing delay for node {v:?}, stage {s}"),
                            ));
                        }
                        Some(d) if !(*d >= 0.0) => {
                            return Err(InstanceError::schema(
                                format!("{path}.nfv_delay"),
                                format!("delay for node {v:?}, stage {s} must be >= 0"),
                            ));
                        }
                        Some(_) => {}
                    }
                }
            }
            if !(svc.delay_budget >= 0.0) {
                return Err(InstanceError::schema(
                    format!("{path}.theta"),
                    "delay budget must be >= 0",
                ));
            }
            if !(svc.reliability_budget >= 0.0 && svc.reliability_budget <= 1.0) {
                return Err(InstanceError::schema(
                    format!("{path}.gamma"),
                    "reliability budget must be in [0, 1]",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::test_fixtures::tiny3;

    #[test]
    fn tiny3_is_valid() {
        tiny3().validate().unwrap();
    }

    #[test]
    fn duplicate_node_id_rejected() {
        let mut inst = tiny3();
        inst.nodes.push(Node::plain("S"));
        let err = inst.validate().unwrap_err();
        assert!(err.to_string().contains("duplicate node id"), "{err}");
    }

    #[test]
    fn cloud_endpoint_rejected() {
        let mut inst = tiny3();
        inst.services[0].source = "v".into();
        let err = inst.validate().unwrap_err();
        assert!(err.to_string().contains("cloud node"), "{err}");
    }

    #[test]
    fn missing_nfv_delay_names_node_and_stage() {
        let mut inst = tiny3();
        inst.services[0].nfv_delay.clear();
        let err = inst.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nfv_delay") && msg.contains("\"v\""), "{msg}");
    }

    #[test]
    fn rate_length_mismatch_rejected() {
        let mut inst = tiny3();
        inst.services[0].rates.push(1.0);
        assert!(inst.validate().is_err());
    }

    #[test]
    fn id_with_comma_rejected() {
        let mut inst = tiny3();
        inst.nodes[0].id = "a,b".into();
        assert!(inst.validate().is_err());
    }
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;

    /// Three-node chain S -> v -> D with one service and a single function.
    ///
    /// The only feasible placement hosts the function at `v`; the only routing
    /// sends flow 0 over (S, v) and flow 1 over (v, D).
    pub fn tiny3() -> Instance {
        tiny3_with(0.9, 10.0)
    }

    /// One service of rate 10 whose second flow must split 0.6/0.4 over two
    /// parallel two-hop routes with capacities 6 and 4.
    pub fn split46() -> Instance {
        let mk_link = |tail: &str, head: &str, capacity: f64| Link {
            tail: tail.into(),
            head: head.into(),
            delay: 1.0,
            reliability: 0.999,
            capacity,
        };
        let mut nfv_delay = BTreeMap::new();
        nfv_delay.insert(("v".to_string(), 1), 3.0);
        Instance {
            nodes: vec![
                Node::endpoint("S"),
                Node::cloud("v", 50.0, 0.995),
                Node::plain("a"),
                Node::plain("b"),
                Node::endpoint("D"),
            ],
            links: vec![
                mk_link("S", "v", 10.0),
                mk_link("v", "a", 6.0),
                mk_link("a", "D", 6.0),
                mk_link("v", "b", 4.0),
                mk_link("b", "D", 4.0),
            ],
            services: vec![Service {
                id: "k0".into(),
                source: "S".into(),
                destination: "D".into(),
                chain: vec!["f1".into()],
                rates: vec![10.0, 10.0],
                nfv_delay,
                delay_budget: 50.0,
                reliability_budget: 0.5,
            }],
            path_count: 2,
        }
    }

    pub fn tiny3_with(reliability_budget: f64, delay_budget: f64) -> Instance {
        let mut nfv_delay = BTreeMap::new();
        nfv_delay.insert(("v".to_string(), 1), 3.0);
        Instance {
            nodes: vec![
                Node::endpoint("S"),
                Node::cloud("v", 50.0, 0.995),
                Node::endpoint("D"),
            ],
            links: vec![
                Link {
                    tail: "S".into(),
                    head: "v".into(),
                    delay: 1.0,
                    reliability: 0.999,
                    capacity: 10.0,
                },
                Link {
                    tail: "v".into(),
                    head: "D".into(),
                    delay: 1.0,
                    reliability: 0.999,
                    capacity: 10.0,
                },
            ],
            services: vec![Service {
                id: "k0".into(),
                source: "S".into(),
                destination: "D".into(),
                chain: vec!["f1".into()],
                rates: vec![1.0, 1.0],
                nfv_delay,
                delay_budget,
                reliability_budget,
            }],
            path_count: 2,
        }
    }
}
