//! Instance document I/O.
//!
//! The on-disk format is a UTF-8 JSON object with top-level keys `nodes`,
//! `links`, `services`, and `P`. Links are records `{i, j, delay,
//! reliability, capacity}`; services are records `{id, source, destination,
//! chain, rates, nfv_delay, theta, gamma}` where `nfv_delay` maps `"v,s"`
//! keys (cloud node id, 1-based stage) to processing delays. Loading
//! validates every invariant and reports violations with a field path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CloudNodeAttr, Instance, InstanceError, Link, Node, NodeKind, Service};

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reliability: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinkDoc {
    i: String,
    j: String,
    delay: f64,
    reliability: f64,
    capacity: f64,
}

#[derive(Serialize, Deserialize)]
struct ServiceDoc {
    id: String,
    source: String,
    destination: String,
    chain: Vec<String>,
    rates: Vec<f64>,
    nfv_delay: BTreeMap<String, f64>,
    theta: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    nodes: Vec<NodeDoc>,
    links: Vec<LinkDoc>,
    services: Vec<ServiceDoc>,
    #[serde(rename = "P")]
    path_count: usize,
}

/// Parse an instance document and validate all invariants.
pub fn load_instance(text: &str) -> Result<Instance, InstanceError> {
    let doc: InstanceDoc = serde_json::from_str(text)?;

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (idx, nd) in doc.nodes.into_iter().enumerate() {
        let cloud = match nd.kind {
            NodeKind::Cloud => {
                let capacity = nd.capacity.ok_or_else(|| {
                    InstanceError::schema(
                        format!("nodes[{idx}].capacity"),
                        format!("cloud node {:?} is missing its capacity", nd.id),
                    )
                })?;
                let reliability = nd.reliability.ok_or_else(|| {
                    InstanceError::schema(
                        format!("nodes[{idx}].reliability"),
                        format!("cloud node {:?} is missing its reliability", nd.id),
                    )
                })?;
                Some(CloudNodeAttr {
                    capacity,
                    reliability,
                })
            }
            _ => {
                if nd.capacity.is_some() || nd.reliability.is_some() {
                    return Err(InstanceError::schema(
                        format!("nodes[{idx}]"),
                        format!("non-cloud node {:?} carries cloud attributes", nd.id),
                    ));
                }
                None
            }
        };
        nodes.push(Node {
            id: nd.id,
            kind: nd.kind,
            cloud,
        });
    }

    let links = doc
        .links
        .into_iter()
        .map(|l| Link {
            tail: l.i,
            head: l.j,
            delay: l.delay,
            reliability: l.reliability,
            capacity: l.capacity,
        })
        .collect();

    let mut services = Vec::with_capacity(doc.services.len());
    for (idx, sd) in doc.services.into_iter().enumerate() {
        let mut nfv_delay = BTreeMap::new();
        for (key, value) in sd.nfv_delay {
            let (v, s) = key.rsplit_once(',').ok_or_else(|| {
                InstanceError::schema(
                    format!("services[{idx}].nfv_delay"),
                    format!("key {key:?} must have the form \"node,stage\""),
                )
            })?;
            let stage: usize = s.trim().parse().map_err(|_| {
                InstanceError::schema(
                    format!("services[{idx}].nfv_delay"),
                    format!("stage in key {key:?} is not an integer"),
                )
            })?;
            nfv_delay.insert((v.to_string(), stage), value);
        }
        services.push(Service {
            id: sd.id,
            source: sd.source,
            destination: sd.destination,
            chain: sd.chain,
            rates: sd.rates,
            nfv_delay,
            delay_budget: sd.theta,
            reliability_budget: sd.gamma,
        });
    }

    let instance = Instance {
        nodes,
        links,
        services,
        path_count: doc.path_count,
    };
    instance.validate()?;
    Ok(instance)
}

/// Serialize an instance to its JSON document form.
pub fn save_instance(instance: &Instance) -> String {
    let doc = InstanceDoc {
        nodes: instance
            .nodes
            .iter()
            .map(|n| NodeDoc {
                id: n.id.clone(),
                kind: n.kind,
                capacity: n.cloud.map(|c| c.capacity),
                reliability: n.cloud.map(|c| c.reliability),
            })
            .collect(),
        links: instance
            .links
            .iter()
            .map(|l| LinkDoc {
                i: l.tail.clone(),
                j: l.head.clone(),
                delay: l.delay,
                reliability: l.reliability,
                capacity: l.capacity,
            })
            .collect(),
        services: instance
            .services
            .iter()
            .map(|s| ServiceDoc {
                id: s.id.clone(),
                source: s.source.clone(),
                destination: s.destination.clone(),
                chain: s.chain.clone(),
                rates: s.rates.clone(),
                nfv_delay: s
                    .nfv_delay
                    .iter()
                    .map(|((v, stage), d)| (format!("{v},{stage}"), *d))
                    .collect(),
                theta: s.delay_budget,
                gamma: s.reliability_budget,
            })
            .collect(),
        path_count: instance.path_count,
    };
    serde_json::to_string_pretty(&doc).expect("instance serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::test_fixtures::tiny3;
    use crate::instance::{generate_instance, GenConfig, TopologyConfig};

    #[test]
    fn round_trip_identity() {
        let inst = tiny3();
        let text = save_instance(&inst);
        let back = load_instance(&text).unwrap();
        assert_eq!(inst, back);
        // Saving again reproduces the exact same document.
        assert_eq!(text, save_instance(&back));
    }

    #[test]
    fn generated_instance_round_trips_bit_identical() {
        let cfg = GenConfig {
            topology: TopologyConfig {
                nodes: 12,
                layers: 3,
                links: 30,
                cloud_nodes: 3,
            },
            services: 2,
            ..GenConfig::default()
        };
        let inst = generate_instance(&cfg, 3).unwrap();
        let back = load_instance(&save_instance(&inst)).unwrap();
        assert_eq!(inst, back);
        for (a, b) in inst.links.iter().zip(&back.links) {
            assert!(a.reliability.to_bits() == b.reliability.to_bits());
            assert!(a.capacity.to_bits() == b.capacity.to_bits());
        }
    }

    #[test]
    fn missing_cloud_reliability_names_the_node() {
        let text = r#"{
            "nodes": [
                {"id": "S", "kind": "endpoint"},
                {"id": "v", "kind": "cloud", "capacity": 10.0},
                {"id": "D", "kind": "endpoint"}
            ],
            "links": [],
            "services": [],
            "P": 1
        }"#;
        let err = load_instance(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"v\"") && msg.contains("reliability"), "{msg}");
    }

    #[test]
    fn malformed_nfv_delay_key_rejected() {
        let mut text = save_instance(&tiny3());
        text = text.replace("\"v,1\"", "\"v1\"");
        let err = load_instance(&text).unwrap_err();
        assert!(err.to_string().contains("node,stage"), "{err}");
    }
}
