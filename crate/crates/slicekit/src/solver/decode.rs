//! Decoding model solutions into placement and routing views.
//!
//! The decoder reads hosting decisions from the `x` variables and, per flow
//! and path, walks the `z` link indicators from the flow's origin to its
//! terminus. Path rate fractions come from the net `r` outflow at the
//! origin, so the view is meaningful for both formulations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{Model, VarKind};
use crate::instance::Instance;

use super::INT_TOL;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("solution is not integer-feasible: {name} = {value}")]
    NotIntegral { name: String, value: f64 },
    #[error("solution is structurally incomplete: missing value for {0}")]
    Missing(String),
    #[error("stage {stage} of service {service} is hosted by {count} nodes")]
    HostCount {
        service: String,
        stage: usize,
        count: usize,
    },
    #[error(
        "flow {stage} of service {service}, path {path}: link indicators do not form a path \
         from {origin} to {terminus}"
    )]
    BrokenPath {
        service: String,
        stage: usize,
        path: usize,
        origin: String,
        terminus: String,
    },
    #[error("unknown variable {0:?} in solution")]
    UnknownVariable(String),
}

/// One routed path of a flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedPath {
    /// 1-based path index.
    pub path: usize,
    /// Ordered links from the flow origin to its terminus.
    pub links: Vec<(String, String)>,
    /// Fraction of the flow's rate carried by this path (net origin outflow).
    pub fraction: f64,
    /// Links of this path layer carrying rate above threshold but not on the
    /// walked path (cycles or stray indicators); empty at clean optima.
    pub stray_rate_links: Vec<(String, String, f64)>,
}

/// One flow of a service: traffic between the hosts of adjacent stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedFlow {
    /// Flow stage in `0..=chain_length`.
    pub stage: usize,
    /// Origin node (source for stage 0, otherwise the host of `stage`).
    pub origin: String,
    /// Terminus node (destination for the last stage, otherwise the host of
    /// `stage + 1`).
    pub terminus: String,
    /// Per-path routing; empty when origin and terminus coincide.
    pub paths: Vec<DecodedPath>,
    /// Total rate fraction per link, summed over paths. Serialized as a map
    /// with `"tail,head"` keys.
    #[serde(with = "link_key_map")]
    pub link_fractions: BTreeMap<(String, String), f64>,
}

/// Serde adapter: `(tail, head)` keys as `"tail,head"` strings in JSON.
mod link_key_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(String, String), f64>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        ser.collect_map(map.iter().map(|((t, h), v)| (format!("{t},{h}"), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<(String, String), f64>, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(de)?;
        raw.into_iter()
            .map(|(key, v)| {
                let (t, h) = key
                    .split_once(',')
                    .ok_or_else(|| D::Error::custom(format!("link key {key:?} is not \"tail,head\"")))?;
                Ok(((t.to_string(), h.to_string()), v))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedService {
    pub service: String,
    /// Host of stage `s` at `hosts[s - 1]`.
    pub hosts: Vec<String>,
    pub flows: Vec<DecodedFlow>,
}

/// Placement and routing view of an integer-feasible solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSolution {
    pub services: Vec<DecodedService>,
    pub objective: f64,
}

/// Threshold above which a path or link counts as used.
pub const USE_TOL: f64 = 1e-6;

/// Decode a solution given as values indexed like the model's variables.
pub fn decode_solution(
    instance: &Instance,
    model: &Model,
    values: &[f64],
) -> Result<DecodedSolution, DecodeError> {
    if values.len() != model.num_vars() {
        return Err(DecodeError::Missing(format!(
            "expected {} values, got {}",
            model.num_vars(),
            values.len()
        )));
    }
    for v in &model.variables {
        let x = values[v.index];
        if v.kind == VarKind::Binary && (x - x.round()).abs() > INT_TOL {
            return Err(DecodeError::NotIntegral {
                name: v.name.clone(),
                value: x,
            });
        }
    }

    let lookup = model.name_index_map();
    let value = |name: &str| -> Result<f64, DecodeError> {
        lookup
            .get(name)
            .map(|&j| values[j])
            .ok_or_else(|| DecodeError::Missing(name.to_string()))
    };

    let cloud_ids: Vec<String> = instance.cloud_ids().iter().map(|s| s.to_string()).collect();
    let paths = effective_paths(model);

    let mut services = Vec::new();
    for svc in &instance.services {
        let stages = svc.num_stages();
        let mut hosts = Vec::with_capacity(stages);
        for s in 1..=stages {
            let mut found = Vec::new();
            for v in &cloud_ids {
                if value(&format!("x[{v},{s},{}]", svc.id))? > 0.5 {
                    found.push(v.clone());
                }
            }
            if found.len() != 1 {
                return Err(DecodeError::HostCount {
                    service: svc.id.clone(),
                    stage: s,
                    count: found.len(),
                });
            }
            hosts.push(found.remove(0));
        }

        let mut flows = Vec::new();
        for s in 0..=stages {
            let origin = if s == 0 {
                svc.source.clone()
            } else {
                hosts[s - 1].clone()
            };
            let terminus = if s == stages {
                svc.destination.clone()
            } else {
                hosts[s].clone()
            };

            let mut flow = DecodedFlow {
                stage: s,
                origin: origin.clone(),
                terminus: terminus.clone(),
                paths: Vec::new(),
                link_fractions: BTreeMap::new(),
            };

            for p in 1..=paths {
                let mut z_links = Vec::new(); // (tail, head, link idx)
                let mut r_by_link = BTreeMap::new();
                for link in &instance.links {
                    let suffix = format!("[{},{},{},{s},{p}]", link.tail, link.head, svc.id);
                    if value(&format!("z{suffix}"))? > 0.5 {
                        z_links.push((link.tail.clone(), link.head.clone()));
                    }
                    let r = value(&format!("r{suffix}"))?;
                    if r > USE_TOL {
                        r_by_link.insert((link.tail.clone(), link.head.clone()), r);
                        *flow
                            .link_fractions
                            .entry((link.tail.clone(), link.head.clone()))
                            .or_insert(0.0) += r;
                    }
                }

                if origin == terminus {
                    // Co-located hosts: a clean layer routes nothing.
                    if !r_by_link.is_empty() {
                        flow.paths.push(DecodedPath {
                            path: p,
                            links: Vec::new(),
                            fraction: 0.0,
                            stray_rate_links: r_by_link
                                .iter()
                                .map(|((t, h), r)| (t.clone(), h.clone(), *r))
                                .collect(),
                        });
                    }
                    continue;
                }

                if z_links.is_empty() {
                    // Unit-flow conservation forces every layer to route when
                    // the endpoints differ.
                    return Err(DecodeError::BrokenPath {
                        service: svc.id.clone(),
                        stage: s,
                        path: p,
                        origin: origin.clone(),
                        terminus: terminus.clone(),
                    });
                }

                // Walk from the origin, preferring the rate-carrying arc
                // where the layer offers more than one outgoing link.
                let mut walk = Vec::new();
                let mut at = origin.clone();
                let mut remaining: Vec<(String, String)> = z_links.clone();
                let budget = remaining.len();
                for _ in 0..budget {
                    let mut outs: Vec<usize> = remaining
                        .iter()
                        .enumerate()
                        .filter(|(_, (t, _))| *t == at)
                        .map(|(i, _)| i)
                        .collect();
                    if outs.is_empty() {
                        break;
                    }
                    if outs.len() > 1 {
                        outs.sort_by(|&a, &b| {
                            let ra = r_by_link
                                .get(&remaining[a])
                                .copied()
                                .unwrap_or(0.0);
                            let rb = r_by_link
                                .get(&remaining[b])
                                .copied()
                                .unwrap_or(0.0);
                            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
                        });
                    }
                    let chosen = remaining.remove(outs[0]);
                    at = chosen.1.clone();
                    walk.push(chosen);
                    if at == terminus {
                        break;
                    }
                }
                if at != terminus {
                    return Err(DecodeError::BrokenPath {
                        service: svc.id.clone(),
                        stage: s,
                        path: p,
                        origin: origin.clone(),
                        terminus: terminus.clone(),
                    });
                }

                let net_out: f64 = r_by_link
                    .iter()
                    .map(|((t, h), r)| {
                        if *t == origin {
                            *r
                        } else if *h == origin {
                            -*r
                        } else {
                            0.0
                        }
                    })
                    .sum();
                let on_walk: std::collections::HashSet<&(String, String)> = walk.iter().collect();
                let stray: Vec<(String, String, f64)> = r_by_link
                    .iter()
                    .filter(|(l, _)| !on_walk.contains(l))
                    .map(|((t, h), r)| (t.clone(), h.clone(), *r))
                    .collect();

                flow.paths.push(DecodedPath {
                    path: p,
                    links: walk,
                    fraction: net_out.max(0.0),
                    stray_rate_links: stray,
                });
            }
            flows.push(flow);
        }

        services.push(DecodedService {
            service: svc.id.clone(),
            hosts,
            flows,
        });
    }

    Ok(DecodedSolution {
        services,
        objective: model.objective_value(values),
    })
}

/// Decode from a name-to-value map (for example a parsed solution file).
pub fn decode_solution_map(
    instance: &Instance,
    model: &Model,
    map: &BTreeMap<String, f64>,
) -> Result<DecodedSolution, DecodeError> {
    let names = model.name_index_map();
    let mut values = vec![0.0; model.num_vars()];
    for v in &model.variables {
        values[v.index] = *map
            .get(&v.name)
            .ok_or_else(|| DecodeError::Missing(v.name.clone()))?;
    }
    for name in map.keys() {
        if !names.contains_key(name.as_str()) {
            return Err(DecodeError::UnknownVariable(name.clone()));
        }
    }
    decode_solution(instance, model, &values)
}

/// Largest path index named by the model's routing variables.
fn effective_paths(model: &Model) -> usize {
    use crate::formulation::{parse_var_name, IndexValue, Symbol};
    model
        .variables
        .iter()
        .filter_map(|v| {
            let parsed = parse_var_name(&v.name).ok()?;
            if parsed.symbol != Symbol::PathLink {
                return None;
            }
            parsed.indices.iter().find_map(|ix| match ix {
                IndexValue::Path(p) => Some(*p),
                _ => None,
            })
        })
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{build_milp, VariantFlags};
    use crate::instance::test_fixtures::tiny3;
    use crate::solver::{branch_and_bound, SolveLimits};

    fn tiny3_solved() -> (crate::instance::Instance, Model, Vec<f64>) {
        let inst = tiny3();
        let model = build_milp(&inst, 0.005, VariantFlags::default()).unwrap();
        let limits = SolveLimits {
            time_limit: 30.0,
            rel_gap: 0.0,
            node_limit: u64::MAX,
        };
        let r = branch_and_bound(&model, &limits);
        let sol = r.solution.unwrap();
        (inst, model, sol)
    }

    #[test]
    fn tiny3_decodes_to_unique_routing() {
        let (inst, model, sol) = tiny3_solved();
        let decoded = decode_solution(&inst, &model, &sol).unwrap();
        assert_eq!(decoded.services.len(), 1);
        let svc = &decoded.services[0];
        assert_eq!(svc.hosts, vec!["v".to_string()]);
        assert_eq!(svc.flows.len(), 2);
        let f0 = &svc.flows[0];
        assert_eq!(f0.origin, "S");
        assert_eq!(f0.terminus, "v");
        let total: f64 = f0.paths.iter().map(|p| p.fraction).sum();
        assert!((total - 1.0).abs() < 1e-6);
        for p in &f0.paths {
            assert_eq!(p.links, vec![("S".to_string(), "v".to_string())]);
            assert!(p.stray_rate_links.is_empty());
        }
        assert!((decoded.objective - 1.01).abs() < 1e-9);
    }

    #[test]
    fn fractional_binary_rejected() {
        let (inst, model, mut sol) = tiny3_solved();
        let j = model
            .variables
            .iter()
            .find(|v| v.name.starts_with("x["))
            .unwrap()
            .index;
        sol[j] = 0.5;
        let err = decode_solution(&inst, &model, &sol).unwrap_err();
        assert!(matches!(err, DecodeError::NotIntegral { .. }));
    }

    #[test]
    fn all_zero_link_layer_is_a_broken_path() {
        let (inst, model, mut sol) = tiny3_solved();
        for v in &model.variables {
            if v.name.starts_with("z[") || v.name.starts_with("r[") {
                sol[v.index] = 0.0;
            }
        }
        let err = decode_solution(&inst, &model, &sol).unwrap_err();
        assert!(matches!(err, DecodeError::BrokenPath { .. }), "{err}");
    }

    #[test]
    fn forced_split_decodes_to_two_fractional_paths() {
        let inst = crate::instance::test_fixtures::split46();
        let model = build_milp(&inst, 0.005, VariantFlags::default()).unwrap();
        let limits = SolveLimits {
            time_limit: 30.0,
            rel_gap: 0.0,
            node_limit: u64::MAX,
        };
        let r = branch_and_bound(&model, &limits);
        let decoded = decode_solution(&inst, &model, &r.solution.unwrap()).unwrap();
        let flow1 = &decoded.services[0].flows[1];
        let mut fractions: Vec<f64> = flow1
            .paths
            .iter()
            .filter(|p| p.fraction > USE_TOL)
            .map(|p| p.fraction)
            .collect();
        fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(fractions.len(), 2, "{fractions:?}");
        assert!((fractions[0] - 0.4).abs() < 1e-6);
        assert!((fractions[1] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn missing_variable_in_map_is_structural_error() {
        let (inst, model, sol) = tiny3_solved();
        let mut map = std::collections::BTreeMap::new();
        for v in &model.variables {
            map.insert(v.name.clone(), sol[v.index]);
        }
        map.remove("y[v]");
        let err = decode_solution_map(&inst, &model, &map).unwrap_err();
        assert!(matches!(err, DecodeError::Missing(_)));
    }
}
