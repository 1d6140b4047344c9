//! Seeded random instance generation.
//!
//! Topologies come from a layered generator: nodes are spread evenly over a
//! configurable number of layers, every node is attached bidirectionally to
//! the previous layer (the first layer forms a bidirectional chain), and
//! random intra/adjacent-layer links are added until the target link count is
//! reached. The backbone guarantees strong connectivity, so endpoint pairs
//! are always reachable; the retry path below is kept for file-loaded or
//! custom topologies.
//!
//! Service QoS budgets are derived from the substrate: the delay budget is
//! `20 + 3 * dist + alpha` where `dist` is the minimum-delay path value from
//! source to destination and `alpha` is drawn uniformly from a configurable
//! range, and the reliability budget is `0.99^2 * dist'^4` where `dist'` is
//! the link-reliability product of the most reliable path.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use super::paths::{most_reliable_path, shortest_path_delay};
use super::{Instance, InstanceError, Link, Node, Service};

/// Maximum redraws of a service source before giving up on a topology.
const ENDPOINT_RETRY_LIMIT: usize = 100;

/// Layered random topology parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyConfig {
    /// Total node count.
    pub nodes: usize,
    /// Number of layers the nodes are spread over.
    pub layers: usize,
    /// Target number of directed links (must allow the connectivity backbone,
    /// i.e. at least `2 * (nodes - 1)`).
    pub links: usize,
    /// Number of cloud nodes.
    pub cloud_nodes: usize,
}

/// Full generator configuration. Ranges are inclusive `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub topology: TopologyConfig,
    /// Number of services to generate.
    pub services: usize,
    /// Functions per service chain.
    pub sfc_length: usize,
    /// Size of the function pool chains are drawn from.
    pub function_pool: usize,
    /// Maximum number of paths per flow (the instance's `P`).
    pub paths: usize,
    pub node_capacity: (f64, f64),
    pub link_capacity: (f64, f64),
    /// Discrete choices for per-(node, stage) processing delays.
    pub nfv_delay_choices: Vec<f64>,
    /// Discrete choices for link delays.
    pub link_delay_choices: Vec<f64>,
    pub node_reliability: (f64, f64),
    pub link_reliability: (f64, f64),
    /// Integer data rate range; one value is drawn per service and applied to
    /// all of its stages.
    pub rate_range: (u32, u32),
    /// Range of the additive jitter in the delay budget.
    pub alpha_range: (f64, f64),
    /// Base seed; `generate_instance` takes an explicit seed that overrides it.
    pub seed: u64,
}

impl Default for GenConfig {
    /// Reference configuration: 112-node, 440-link, 6-cloud substrate with
    /// 3-function chains from a pool of 4, capacities in [50, 100] and
    /// [7, 77], processing delays from {3..6}, link delays from {1, 2},
    /// reliabilities in [0.991, 0.995] and [0.995, 0.999], and integer rates
    /// in [1, 11].
    fn default() -> Self {
        GenConfig {
            topology: TopologyConfig {
                nodes: 112,
                layers: 4,
                links: 440,
                cloud_nodes: 6,
            },
            services: 3,
            sfc_length: 3,
            function_pool: 4,
            paths: 2,
            node_capacity: (50.0, 100.0),
            link_capacity: (7.0, 77.0),
            nfv_delay_choices: vec![3.0, 4.0, 5.0, 6.0],
            link_delay_choices: vec![1.0, 2.0],
            node_reliability: (0.991, 0.995),
            link_reliability: (0.995, 0.999),
            rate_range: (1, 11),
            alpha_range: (0.0, 5.0),
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Desk-scale configuration: a small substrate the embedded solver handles
    /// comfortably, with the same attribute distributions as the reference
    /// configuration except for link capacities tight enough relative to the
    /// rates that multi-path routing matters.
    pub fn desk() -> Self {
        GenConfig {
            topology: TopologyConfig {
                nodes: 10,
                layers: 3,
                links: 22,
                cloud_nodes: 3,
            },
            services: 3,
            sfc_length: 2,
            link_capacity: (10.0, 40.0),
            rate_range: (2, 9),
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let t = &self.topology;
        let cfg = |msg: String| Err(InstanceError::Config(msg));
        if t.nodes < 2 {
            return cfg("topology.nodes must be >= 2".into());
        }
        if t.layers < 1 || t.layers > t.nodes {
            return cfg("topology.layers must be in [1, nodes]".into());
        }
        if t.links < 2 * (t.nodes - 1) {
            return cfg(format!(
                "topology.links must be >= 2 * (nodes - 1) = {} for the connectivity backbone",
                2 * (t.nodes - 1)
            ));
        }
        if t.cloud_nodes < 1 || t.cloud_nodes + 2 > t.nodes {
            return cfg("topology.cloud_nodes must leave at least two non-cloud nodes".into());
        }
        if self.services < 1 {
            return cfg("services must be >= 1".into());
        }
        if self.sfc_length < 1 {
            return cfg("sfc_length must be >= 1".into());
        }
        if self.function_pool < 1 {
            return cfg("function_pool must be >= 1".into());
        }
        if self.paths < 1 {
            return cfg("paths must be >= 1".into());
        }
        for (name, (lo, hi)) in [
            ("node_capacity", self.node_capacity),
            ("link_capacity", self.link_capacity),
            ("alpha_range", self.alpha_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return cfg(format!("{name} must be a nonempty nonnegative range"));
            }
        }
        for (name, (lo, hi)) in [
            ("node_reliability", self.node_reliability),
            ("link_reliability", self.link_reliability),
        ] {
            if !(lo > 0.0 && hi <= 1.0 && lo <= hi) {
                return cfg(format!("{name} must be a nonempty range within (0, 1]"));
            }
        }
        for (name, choices) in [
            ("nfv_delay_choices", &self.nfv_delay_choices),
            ("link_delay_choices", &self.link_delay_choices),
        ] {
            if choices.is_empty() || choices.iter().any(|d| !(*d >= 0.0)) {
                return cfg(format!("{name} must be nonempty with nonnegative values"));
            }
        }
        if self.rate_range.0 > self.rate_range.1 {
            return cfg("rate_range must be nonempty".into());
        }
        Ok(())
    }
}

/// QoS budgets of service `service_idx` recomputed from the substrate:
/// `theta = 20 + 3 * dist + alpha`, `gamma = 0.99^2 * dist'^4`.
///
/// `alpha` is the additive jitter the generator draws uniformly from the
/// configured range. Errors if source and destination are not connected.
pub fn qos_budgets(
    instance: &Instance,
    service_idx: usize,
    alpha: f64,
) -> Result<(f64, f64), super::PathError> {
    let svc = &instance.services[service_idx];
    qos_budgets_for(instance, &svc.source, &svc.destination, alpha)
}

fn qos_budgets_for(
    instance: &Instance,
    src: &str,
    dst: &str,
    alpha: f64,
) -> Result<(f64, f64), super::PathError> {
    let dist = shortest_path_delay(instance, src, dst)?;
    let dist_rel = most_reliable_path(instance, src, dst)?;
    let theta = 20.0 + 3.0 * dist + alpha;
    let gamma = 0.99f64.powi(2) * dist_rel.powi(4);
    Ok((theta, gamma))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn choice(rng: &mut ChaCha8Rng, choices: &[f64]) -> f64 {
    choices[rng.gen_range(0..choices.len())]
}

/// Generate a deterministic instance for `(config, seed)`.
pub fn generate_instance(config: &GenConfig, seed: u64) -> Result<Instance, InstanceError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = &config.topology;
    let n = t.nodes;

    // Layer assignment: node i sits in layer floor(i * layers / n).
    let layer_of: Vec<usize> = (0..n).map(|i| i * t.layers / n).collect();

    // Directed links as index pairs; attributes drawn at creation time.
    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    let mut raw_links: Vec<(usize, usize, f64, f64, f64)> = Vec::new(); // tail, head, delay, rel, cap
    let add_pair = |rng: &mut ChaCha8Rng,
                        raw: &mut Vec<(usize, usize, f64, f64, f64)>,
                        pairs: &mut HashSet<(usize, usize)>,
                        a: usize,
                        b: usize|
     -> bool {
        if a == b || !pairs.insert((a, b)) {
            return false;
        }
        let delay = choice(rng, &config.link_delay_choices);
        let rel = uniform(rng, config.link_reliability);
        let cap = uniform(rng, config.link_capacity);
        raw.push((a, b, delay, rel, cap));
        true
    };

    // Backbone: chain through layer 0, then attach every later node to a
    // random node of the previous layer; every backbone edge goes both ways.
    let layer0: Vec<usize> = (0..n).filter(|&i| layer_of[i] == 0).collect();
    for w in layer0.windows(2) {
        add_pair(&mut rng, &mut raw_links, &mut pairs, w[0], w[1]);
        add_pair(&mut rng, &mut raw_links, &mut pairs, w[1], w[0]);
    }
    for i in 0..n {
        if layer_of[i] == 0 {
            continue;
        }
        let prev: Vec<usize> = (0..n).filter(|&j| layer_of[j] == layer_of[i] - 1).collect();
        let j = prev[rng.gen_range(0..prev.len())];
        add_pair(&mut rng, &mut raw_links, &mut pairs, i, j);
        add_pair(&mut rng, &mut raw_links, &mut pairs, j, i);
    }

    // Extra links between same-layer or adjacent-layer nodes.
    let mut attempts = 0usize;
    let attempt_cap = 100 * t.links.max(1);
    while raw_links.len() < t.links && attempts < attempt_cap {
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if layer_of[a].abs_diff(layer_of[b]) > 1 {
            continue;
        }
        add_pair(&mut rng, &mut raw_links, &mut pairs, a, b);
    }

    // Cloud nodes: distinct uniform indices via partial Fisher-Yates.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..t.cloud_nodes {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let cloud_set: HashSet<usize> = order[..t.cloud_nodes].iter().copied().collect();

    // Common destination among non-cloud nodes.
    let non_cloud: Vec<usize> = (0..n).filter(|i| !cloud_set.contains(i)).collect();
    let dest_idx = non_cloud[rng.gen_range(0..non_cloud.len())];

    // Ids: clouds are v0, v1, ... and the rest n0, n1, ..., in index order.
    let mut ids = vec![String::new(); n];
    let (mut vc, mut nc) = (0usize, 0usize);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        if cloud_set.contains(&i) {
            ids[i] = format!("v{vc}");
            vc += 1;
            let capacity = uniform(&mut rng, config.node_capacity);
            let reliability = uniform(&mut rng, config.node_reliability);
            nodes.push(Node::cloud(ids[i].clone(), capacity, reliability));
        } else {
            ids[i] = format!("n{nc}");
            nc += 1;
            nodes.push(Node::endpoint(ids[i].clone()));
        }
    }

    let links: Vec<Link> = raw_links
        .iter()
        .map(|&(a, b, delay, reliability, capacity)| Link {
            tail: ids[a].clone(),
            head: ids[b].clone(),
            delay,
            reliability,
            capacity,
        })
        .collect();

    let mut instance = Instance {
        nodes,
        links,
        services: Vec::new(),
        path_count: config.paths,
    };

    let dest_id = ids[dest_idx].clone();
    let source_pool: Vec<&String> = non_cloud
        .iter()
        .filter(|&&i| i != dest_idx)
        .map(|&i| &ids[i])
        .collect();
    if source_pool.is_empty() {
        return Err(InstanceError::Config(
            "no eligible source nodes besides the destination".into(),
        ));
    }
    let cloud_ids: Vec<String> = instance.cloud_ids().iter().map(|s| s.to_string()).collect();

    for k in 0..config.services {
        let source =
            draw_connected_source(&mut rng, &instance, &source_pool, &dest_id, ENDPOINT_RETRY_LIMIT)?;

        let chain = draw_chain(&mut rng, config.sfc_length, config.function_pool);
        let rate = if config.rate_range.0 == config.rate_range.1 {
            config.rate_range.0
        } else {
            rng.gen_range(config.rate_range.0..=config.rate_range.1)
        } as f64;
        let rates = vec![rate; config.sfc_length + 1];

        let mut nfv_delay = BTreeMap::new();
        for v in &cloud_ids {
            for s in 1..=config.sfc_length {
                nfv_delay.insert((v.clone(), s), choice(&mut rng, &config.nfv_delay_choices));
            }
        }

        let alpha = uniform(&mut rng, config.alpha_range);
        let (theta, gamma) = qos_budgets_for(&instance, &source, &dest_id, alpha)
            .expect("source drawn connected");

        instance.services.push(Service {
            id: format!("k{k}"),
            source,
            destination: dest_id.clone(),
            chain,
            rates,
            nfv_delay,
            delay_budget: theta,
            reliability_budget: gamma,
        });
    }

    instance.validate()?;
    Ok(instance)
}

/// Draw a source node connected to `dest`, retrying up to `limit` times.
fn draw_connected_source(
    rng: &mut ChaCha8Rng,
    instance: &Instance,
    pool: &[&String],
    dest: &str,
    limit: usize,
) -> Result<String, InstanceError> {
    for _ in 0..limit {
        let cand = pool[rng.gen_range(0..pool.len())];
        if shortest_path_delay(instance, cand, dest).is_ok() {
            return Ok(cand.clone());
        }
    }
    Err(InstanceError::Disconnected {
        src: "<any eligible source>".into(),
        dst: dest.to_string(),
        attempts: limit,
    })
}

/// Draw a chain of `len` functions from a pool of `pool` names, without
/// replacement when the pool is large enough.
fn draw_chain(rng: &mut ChaCha8Rng, len: usize, pool: usize) -> Vec<String> {
    if len <= pool {
        let mut idx: Vec<usize> = (0..pool).collect();
        for i in 0..len {
            let j = rng.gen_range(i..pool);
            idx.swap(i, j);
        }
        idx[..len].iter().map(|i| format!("f{}", i + 1)).collect()
    } else {
        (0..len)
            .map(|_| format!("f{}", rng.gen_range(0..pool) + 1))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GenConfig {
        GenConfig {
            topology: TopologyConfig {
                nodes: 10,
                layers: 3,
                links: 26,
                cloud_nodes: 3,
            },
            services: 2,
            ..GenConfig::default()
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = small_config();
        let a = generate_instance(&cfg, 7).unwrap();
        let b = generate_instance(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_instance(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_instances_satisfy_invariants_over_many_seeds() {
        let cfg = small_config();
        for seed in 0..1000 {
            let inst = generate_instance(&cfg, seed).unwrap();
            inst.validate().unwrap();
            assert_eq!(inst.services.len(), 2);
            assert_eq!(inst.cloud_ids().len(), 3);
        }
    }

    #[test]
    fn attribute_ranges_respected() {
        let cfg = small_config();
        let inst = generate_instance(&cfg, 41).unwrap();
        for node in &inst.nodes {
            if let Some(attr) = &node.cloud {
                assert!((50.0..=100.0).contains(&attr.capacity));
                assert!((0.991..=0.995).contains(&attr.reliability));
            }
        }
        for link in &inst.links {
            assert!((7.0..=77.0).contains(&link.capacity));
            assert!((0.995..=0.999).contains(&link.reliability));
            assert!(link.delay == 1.0 || link.delay == 2.0);
        }
        for svc in &inst.services {
            assert_eq!(svc.chain.len(), 3);
            assert!(svc.chain.iter().all(|f| ["f1", "f2", "f3", "f4"].contains(&f.as_str())));
            let r = svc.rates[0];
            assert!((1.0..=11.0).contains(&r) && r.fract() == 0.0);
            assert!(svc.rates.iter().all(|x| *x == r));
            for d in svc.nfv_delay.values() {
                assert!([3.0, 4.0, 5.0, 6.0].contains(d));
            }
        }
    }

    #[test]
    fn qos_budget_bounds_hold_for_generated_services() {
        let cfg = small_config();
        for seed in 0..200 {
            let inst = generate_instance(&cfg, seed).unwrap();
            for svc in &inst.services {
                let dist = shortest_path_delay(&inst, &svc.source, &svc.destination).unwrap();
                assert!(svc.delay_budget >= 20.0 + 3.0 * dist - 1e-12);
                assert!(svc.delay_budget <= 25.0 + 3.0 * dist + 1e-12);
                assert!(svc.reliability_budget > 0.0);
                assert!(svc.reliability_budget <= 0.9801 + 1e-12);
            }
        }
    }

    #[test]
    fn qos_budget_formula_examples() {
        // dist = 2, alpha = 0 gives theta = 26; dist' = 1 gives gamma = 0.9801.
        let inst = crate::instance::test_fixtures::tiny3();
        let (theta, gamma) = qos_budgets(&inst, 0, 0.0).unwrap();
        assert_eq!(theta, 26.0);
        assert!((gamma - 0.99f64.powi(2) * (0.999f64 * 0.999).powi(4)).abs() < 1e-15);

        // Hand evaluation: best path reliability 0.998^2 gives
        // gamma = 0.99^2 * 0.998^8 ~= 0.96454.
        let mut inst2 = inst.clone();
        for l in &mut inst2.links {
            l.reliability = 0.998;
        }
        let (_, gamma2) = qos_budgets(&inst2, 0, 0.0).unwrap();
        assert!((gamma2 - 0.99f64.powi(2) * 0.998f64.powi(8)).abs() < 1e-15);
        assert!((gamma2 - 0.96454).abs() < 5e-5, "gamma2 = {gamma2}");
    }

    #[test]
    fn retry_exhaustion_reports_disconnected() {
        // Destination with no incoming links at all.
        let mut inst = crate::instance::test_fixtures::tiny3();
        inst.nodes.push(Node::endpoint("iso"));
        let pool_owned = vec!["S".to_string()];
        let pool: Vec<&String> = pool_owned.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = draw_connected_source(&mut rng, &inst, &pool, "iso", 5).unwrap_err();
        assert!(matches!(err, InstanceError::Disconnected { attempts: 5, .. }));
    }

    #[test]
    fn config_validation_rejects_bad_ranges() {
        let mut cfg = small_config();
        cfg.node_reliability = (0.0, 0.5);
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.topology.links = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.topology.cloud_nodes = 9;
        assert!(cfg.validate().is_err());
    }
}
