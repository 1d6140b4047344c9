//! Independent semantic validation of decoded solutions.
//!
//! The validator never looks at the model: it recomputes every requirement
//! directly on the instance from the decoded placement/routing view. The
//! reliability check deliberately uses the product form (not the model's
//! log-linear rows) so the two encodings cross-check each other; the
//! numerical identity between them is exposed via [`reliability_log_gap`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::solver::{DecodedSolution, USE_TOL};

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("decoded solution is structurally incomplete: {0}")]
    Structural(String),
}

/// Validation tolerances.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Feasibility slack for capacities, conservation, and delay.
    pub feasibility: f64,
    /// Slack for the reliability product and the log/product identity.
    pub reliability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-6,
            reliability: 1e-9,
        }
    }
}

/// Parameters the checks depend on.
#[derive(Debug, Clone, Copy)]
pub struct ValidateParams {
    /// Objective weight of the link-consumption term (used to recompute the
    /// reported objective).
    pub sigma: f64,
    /// Maximum number of paths a flow may use.
    pub paths: usize,
    pub tolerances: Tolerances,
}

/// The semantic requirement families checked by the validator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckFamily {
    Placement,
    NodeCapacity,
    ChainOrder,
    RateConservation,
    LinkCapacity,
    Delay,
    Reliability,
    PathCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: CheckFamily,
    pub pass: bool,
    /// Largest violation magnitude over the family (0 when passing).
    pub worst_violation: f64,
    /// Human-readable witness of the worst violation, if any.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceQos {
    pub service: String,
    pub e2e_delay: f64,
    pub delay_budget: f64,
    pub e2e_reliability: f64,
    pub reliability_budget: f64,
}

/// Full validation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub families: Vec<FamilyReport>,
    pub services: Vec<ServiceQos>,
    /// Objective recomputed from the decoded view: activated hosts plus
    /// `sigma` times the total routed fraction.
    pub objective_recomputed: f64,
}

struct FamilyTracker {
    family: CheckFamily,
    worst: f64,
    witness: Option<String>,
}

impl FamilyTracker {
    fn new(family: CheckFamily) -> Self {
        FamilyTracker {
            family,
            worst: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, violation: f64, witness: impl FnOnce() -> String) {
        if violation > self.worst {
            self.worst = violation;
            self.witness = Some(witness());
        }
    }

    fn report(self, tol: f64) -> FamilyReport {
        FamilyReport {
            family: self.family,
            pass: self.worst <= tol,
            worst_violation: self.worst,
            witness: if self.worst > tol { self.witness } else { None },
        }
    }
}

/// Validate a decoded solution against the instance semantics.
pub fn validate(
    instance: &Instance,
    decoded: &DecodedSolution,
    params: &ValidateParams,
) -> Result<ValidationReport, ValidatorError> {
    check_structure(instance, decoded)?;
    let tol = params.tolerances;

    let mut placement = FamilyTracker::new(CheckFamily::Placement);
    let mut node_cap = FamilyTracker::new(CheckFamily::NodeCapacity);
    let mut chain_order = FamilyTracker::new(CheckFamily::ChainOrder);
    let mut conservation = FamilyTracker::new(CheckFamily::RateConservation);
    let mut link_cap = FamilyTracker::new(CheckFamily::LinkCapacity);
    let mut delay = FamilyTracker::new(CheckFamily::Delay);
    let mut reliability = FamilyTracker::new(CheckFamily::Reliability);
    let mut path_count = FamilyTracker::new(CheckFamily::PathCount);

    let cloud: BTreeMap<&str, &crate::instance::CloudNodeAttr> = instance
        .nodes
        .iter()
        .filter_map(|n| n.cloud.as_ref().map(|c| (n.id.as_str(), c)))
        .collect();
    let link_attr: BTreeMap<(&str, &str), &crate::instance::Link> = instance
        .links
        .iter()
        .map(|l| ((l.tail.as_str(), l.head.as_str()), l))
        .collect();

    // Placement: every host must be a cloud node (hosting multiplicity is
    // structural, enforced by the decoder).
    for ds in &decoded.services {
        for (s, host) in ds.hosts.iter().enumerate() {
            if !cloud.contains_key(host.as_str()) {
                placement.record(1.0, || {
                    format!("service {}, stage {}: host {host} is not a cloud node", ds.service, s + 1)
                });
            }
        }
    }

    // Node capacity: one unit of hosted rate consumes one unit of capacity.
    let mut node_load: BTreeMap<&str, f64> = BTreeMap::new();
    for (svc, ds) in instance.services.iter().zip(&decoded.services) {
        for (s, host) in ds.hosts.iter().enumerate() {
            *node_load.entry(host.as_str()).or_insert(0.0) += svc.rates[s + 1];
        }
    }
    for (node, load) in &node_load {
        let capacity = cloud.get(node).map(|c| c.capacity).unwrap_or(0.0);
        if *load > capacity {
            node_cap.record(load - capacity, || {
                format!("node {node}: hosted rate {load} exceeds capacity {capacity}")
            });
        }
    }

    // Chain order: flow s must run from the host of stage s to the host of
    // stage s + 1, and every used path must actually connect those nodes
    // over existing links.
    for (svc, ds) in instance.services.iter().zip(&decoded.services) {
        let stages = svc.num_stages();
        for flow in &ds.flows {
            let expect_origin = if flow.stage == 0 {
                &svc.source
            } else {
                &ds.hosts[flow.stage - 1]
            };
            let expect_terminus = if flow.stage == stages {
                &svc.destination
            } else {
                &ds.hosts[flow.stage]
            };
            if &flow.origin != expect_origin || &flow.terminus != expect_terminus {
                chain_order.record(1.0, || {
                    format!(
                        "service {}, flow {}: routes {} -> {} but the chain requires {} -> {}",
                        ds.service, flow.stage, flow.origin, flow.terminus, expect_origin, expect_terminus
                    )
                });
                continue;
            }
            for path in &flow.paths {
                if path.fraction <= USE_TOL {
                    continue;
                }
                let mut at = flow.origin.as_str();
                let mut ok = true;
                for (tail, head) in &path.links {
                    if tail != at || !link_attr.contains_key(&(tail.as_str(), head.as_str())) {
                        ok = false;
                        break;
                    }
                    at = head;
                }
                if !ok || at != flow.terminus {
                    chain_order.record(1.0, || {
                        format!(
                            "service {}, flow {}, path {}: link sequence does not run {} -> {}",
                            ds.service, flow.stage, path.path, flow.origin, flow.terminus
                        )
                    });
                }
            }
        }
    }

    // Rate conservation from per-link fractions: unit out of the origin,
    // unit into the terminus, balance elsewhere.
    for ds in &decoded.services {
        for flow in &ds.flows {
            let mut net: BTreeMap<&str, f64> = BTreeMap::new();
            for ((tail, head), fraction) in &flow.link_fractions {
                *net.entry(tail.as_str()).or_insert(0.0) -= fraction;
                *net.entry(head.as_str()).or_insert(0.0) += fraction;
            }
            let colocated = flow.origin == flow.terminus;
            for node in instance.nodes.iter().map(|n| n.id.as_str()) {
                let expected = if colocated {
                    0.0
                } else if node == flow.origin {
                    -1.0
                } else if node == flow.terminus {
                    1.0
                } else {
                    0.0
                };
                let got = net.get(node).copied().unwrap_or(0.0);
                let gap = (got - expected).abs();
                if gap > 0.0 {
                    conservation.record(gap, || {
                        format!(
                            "service {}, flow {}: net inflow at {node} is {got}, expected {expected}",
                            ds.service, flow.stage
                        )
                    });
                }
            }
        }
    }

    // Link capacity: rates weighted by per-link fractions.
    let mut link_load: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for (svc, ds) in instance.services.iter().zip(&decoded.services) {
        for flow in &ds.flows {
            let rate = svc.rates[flow.stage];
            for ((tail, head), fraction) in &flow.link_fractions {
                *link_load
                    .entry((tail.as_str(), head.as_str()))
                    .or_insert(0.0) += rate * fraction;
            }
        }
    }
    for ((tail, head), load) in &link_load {
        let capacity = link_attr
            .get(&(*tail, *head))
            .map(|l| l.capacity)
            .unwrap_or(0.0);
        if *load > capacity {
            link_cap.record(load - capacity, || {
                format!("link ({tail}, {head}): load {load} exceeds capacity {capacity}")
            });
        }
    }

    // Path count within the routing budget.
    for ds in &decoded.services {
        for flow in &ds.flows {
            let used = flow
                .paths
                .iter()
                .filter(|p| p.fraction > USE_TOL)
                .count();
            if used > params.paths {
                path_count.record((used - params.paths) as f64, || {
                    format!(
                        "service {}, flow {}: {used} used paths exceed the budget {}",
                        ds.service, flow.stage, params.paths
                    )
                });
            }
        }
    }

    // Delay and reliability per service.
    let mut services_qos = Vec::new();
    for (svc, ds) in instance.services.iter().zip(&decoded.services) {
        let e2e = e2e_delay_inner(instance, svc, ds)?;
        if e2e > svc.delay_budget {
            delay.record(e2e - svc.delay_budget, || {
                format!(
                    "service {}: end-to-end delay {e2e} exceeds budget {}",
                    ds.service, svc.delay_budget
                )
            });
        }
        let rel = e2e_reliability_inner(instance, ds);
        if rel < svc.reliability_budget {
            reliability.record(svc.reliability_budget - rel, || {
                format!(
                    "service {}: end-to-end reliability {rel} below budget {}",
                    ds.service, svc.reliability_budget
                )
            });
        }
        services_qos.push(ServiceQos {
            service: ds.service.clone(),
            e2e_delay: e2e,
            delay_budget: svc.delay_budget,
            e2e_reliability: rel,
            reliability_budget: svc.reliability_budget,
        });
    }

    // Recomputed objective: distinct activated hosts + sigma * total fraction.
    let activated: BTreeSet<&str> = decoded
        .services
        .iter()
        .flat_map(|ds| ds.hosts.iter().map(|h| h.as_str()))
        .collect();
    let total_fraction: f64 = decoded
        .services
        .iter()
        .flat_map(|ds| &ds.flows)
        .flat_map(|f| f.link_fractions.values())
        .sum();
    let objective_recomputed = activated.len() as f64 + params.sigma * total_fraction;

    let families = vec![
        placement.report(0.0),
        node_cap.report(tol.feasibility),
        chain_order.report(0.0),
        conservation.report(tol.feasibility),
        link_cap.report(tol.feasibility),
        delay.report(tol.feasibility),
        reliability.report(tol.reliability),
        path_count.report(0.0),
    ];
    let pass = families.iter().all(|f| f.pass);
    Ok(ValidationReport {
        pass,
        families,
        services: services_qos,
        objective_recomputed,
    })
}

fn check_structure(
    instance: &Instance,
    decoded: &DecodedSolution,
) -> Result<(), ValidatorError> {
    if decoded.services.len() != instance.services.len() {
        return Err(ValidatorError::Structural(format!(
            "expected {} services, found {}",
            instance.services.len(),
            decoded.services.len()
        )));
    }
    for (svc, ds) in instance.services.iter().zip(&decoded.services) {
        if ds.service != svc.id {
            return Err(ValidatorError::Structural(format!(
                "service order mismatch: expected {:?}, found {:?}",
                svc.id, ds.service
            )));
        }
        if ds.hosts.len() != svc.num_stages() {
            return Err(ValidatorError::Structural(format!(
                "service {}: expected {} hosts, found {}",
                svc.id,
                svc.num_stages(),
                ds.hosts.len()
            )));
        }
        if ds.flows.len() != svc.num_stages() + 1 {
            return Err(ValidatorError::Structural(format!(
                "service {}: expected {} flows, found {}",
                svc.id,
                svc.num_stages() + 1,
                ds.flows.len()
            )));
        }
    }
    Ok(())
}

/// End-to-end delay of service `k`: processing delay at each stage's host
/// plus, per flow, the largest delay over its used paths.
pub fn e2e_delay(
    instance: &Instance,
    decoded: &DecodedSolution,
    k: usize,
) -> Result<f64, ValidatorError> {
    check_structure(instance, decoded)?;
    e2e_delay_inner(instance, &instance.services[k], &decoded.services[k])
}

fn e2e_delay_inner(
    instance: &Instance,
    svc: &crate::instance::Service,
    ds: &crate::solver::DecodedService,
) -> Result<f64, ValidatorError> {
    let link_delay: BTreeMap<(&str, &str), f64> = instance
        .links
        .iter()
        .map(|l| ((l.tail.as_str(), l.head.as_str()), l.delay))
        .collect();
    let mut processing = 0.0;
    for (s, host) in ds.hosts.iter().enumerate() {
        processing += svc
            .nfv_delay
            .get(&(host.clone(), s + 1))
            .copied()
            .ok_or_else(|| {
                ValidatorError::Structural(format!(
                    "service {}: no processing delay for host {host}, stage {}",
                    svc.id,
                    s + 1
                ))
            })?;
    }
    let mut communication = 0.0;
    for flow in &ds.flows {
        if flow.origin == flow.terminus {
            continue;
        }
        let used: Vec<&crate::solver::DecodedPath> = flow
            .paths
            .iter()
            .filter(|p| p.fraction > USE_TOL)
            .collect();
        if used.is_empty() {
            return Err(ValidatorError::Structural(format!(
                "service {}, flow {}: no used path",
                svc.id, flow.stage
            )));
        }
        let worst = used
            .iter()
            .map(|p| {
                p.links
                    .iter()
                    .map(|(t, h)| link_delay.get(&(t.as_str(), h.as_str())).copied().unwrap_or(0.0))
                    .sum::<f64>()
            })
            .fold(0.0f64, f64::max);
        communication += worst;
    }
    Ok(processing + communication)
}

/// End-to-end reliability of service `k`: the product over distinct hosting
/// nodes and distinct rate-carrying links. A node hosting several stages
/// counts once.
pub fn e2e_reliability(instance: &Instance, decoded: &DecodedSolution, k: usize) -> f64 {
    e2e_reliability_inner(instance, &decoded.services[k])
}

fn e2e_reliability_inner(instance: &Instance, ds: &crate::solver::DecodedService) -> f64 {
    let node_rel: BTreeMap<&str, f64> = instance
        .nodes
        .iter()
        .filter_map(|n| n.cloud.as_ref().map(|c| (n.id.as_str(), c.reliability)))
        .collect();
    let link_rel: BTreeMap<(&str, &str), f64> = instance
        .links
        .iter()
        .map(|l| ((l.tail.as_str(), l.head.as_str()), l.reliability))
        .collect();

    let hosts: BTreeSet<&str> = ds.hosts.iter().map(|h| h.as_str()).collect();
    let mut used_links: BTreeSet<(&str, &str)> = BTreeSet::new();
    for flow in &ds.flows {
        for ((tail, head), fraction) in &flow.link_fractions {
            if *fraction > USE_TOL {
                used_links.insert((tail.as_str(), head.as_str()));
            }
        }
    }

    let mut product = 1.0;
    for host in hosts {
        product *= node_rel.get(host).copied().unwrap_or(1.0);
    }
    for link in &used_links {
        product *= link_rel.get(link).copied().unwrap_or(1.0);
    }
    product
}

/// Gap between the product-form reliability and its log-linear counterpart
/// evaluated on the same usage indicators:
/// `|ln(product) - (sum of ln over used nodes and links)|`.
pub fn reliability_log_gap(instance: &Instance, decoded: &DecodedSolution, k: usize) -> f64 {
    let ds = &decoded.services[k];
    let node_rel: BTreeMap<&str, f64> = instance
        .nodes
        .iter()
        .filter_map(|n| n.cloud.as_ref().map(|c| (n.id.as_str(), c.reliability)))
        .collect();
    let link_rel: BTreeMap<(&str, &str), f64> = instance
        .links
        .iter()
        .map(|l| ((l.tail.as_str(), l.head.as_str()), l.reliability))
        .collect();
    let hosts: BTreeSet<&str> = ds.hosts.iter().map(|h| h.as_str()).collect();
    let mut used_links: BTreeSet<(&str, &str)> = BTreeSet::new();
    for flow in &ds.flows {
        for ((tail, head), fraction) in &flow.link_fractions {
            if *fraction > USE_TOL {
                used_links.insert((tail.as_str(), head.as_str()));
            }
        }
    }
    let log_sum: f64 = hosts
        .iter()
        .map(|h| node_rel.get(h).copied().unwrap_or(1.0).ln())
        .chain(
            used_links
                .iter()
                .map(|l| link_rel.get(l).copied().unwrap_or(1.0).ln()),
        )
        .sum();
    (e2e_reliability(instance, decoded, k).ln() - log_sum).abs()
}

/// Whether every used path of every flow is a simple path (no repeated node)
/// with no stray rate-carrying links off the walked path.
pub fn paths_are_simple(decoded: &DecodedSolution) -> bool {
    for ds in &decoded.services {
        for flow in &ds.flows {
            for path in &flow.paths {
                if path.fraction <= USE_TOL {
                    continue;
                }
                if !path.stray_rate_links.is_empty() {
                    return false;
                }
                let mut seen = BTreeSet::new();
                if let Some((first, _)) = path.links.first() {
                    seen.insert(first.clone());
                }
                for (_, head) in &path.links {
                    if !seen.insert(head.clone()) {
                        return false;
                    }
                }
            }
        }
    }
    true
}
