//! Shortest-delay and most-reliable path queries on the substrate network.
//!
//! Both queries run Dijkstra on nonnegative weights: link delays directly, or
//! `-ln(reliability)` for the most reliable path. The returned value is
//! recomputed along the reconstructed path (a plain sum or product over its
//! links) so it matches exhaustive enumeration to the last bits.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::Instance;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("no path from {src:?} to {dst:?}")]
    NoPath { src: String, dst: String },
}

/// Minimum total delay over directed paths from `src` to `dst`.
///
/// Returns 0 for `src == dst` (the empty path).
pub fn shortest_path_delay(instance: &Instance, src: &str, dst: &str) -> Result<f64, PathError> {
    dijkstra(instance, src, dst, |l| l.delay).map(|path| {
        path.iter()
            .map(|&l| instance.links[l].delay)
            .sum()
    })
}

/// Maximum product of link reliabilities over directed paths from `src` to
/// `dst`, computed as a shortest path under weights `-ln(reliability)`.
///
/// Returns 1 for `src == dst` (the empty product).
pub fn most_reliable_path(instance: &Instance, src: &str, dst: &str) -> Result<f64, PathError> {
    dijkstra(instance, src, dst, |l| -l.reliability.ln()).map(|path| {
        path.iter()
            .map(|&l| instance.links[l].reliability)
            .product()
    })
}

/// Heap entry ordered by smallest distance first; ties broken by node index
/// for determinism.
#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over link indices; returns the link sequence of an optimal path.
fn dijkstra(
    instance: &Instance,
    src: &str,
    dst: &str,
    weight: impl Fn(&super::Link) -> f64,
) -> Result<Vec<usize>, PathError> {
    let src_idx = instance
        .node_index(src)
        .ok_or_else(|| PathError::UnknownNode(src.to_string()))?;
    let dst_idx = instance
        .node_index(dst)
        .ok_or_else(|| PathError::UnknownNode(dst.to_string()))?;

    let n = instance.nodes.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (link idx, head idx)
    for (l, link) in instance.links.iter().enumerate() {
        let tail = instance.node_index(&link.tail).expect("validated");
        let head = instance.node_index(&link.head).expect("validated");
        adj[tail].push((l, head));
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n]; // incoming link on best path
    dist[src_idx] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        dist: 0.0,
        node: src_idx,
    });

    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        if node == dst_idx {
            break;
        }
        for &(l, head) in &adj[node] {
            let cand = d + weight(&instance.links[l]);
            if cand < dist[head] {
                dist[head] = cand;
                pred[head] = Some(l);
                heap.push(Entry {
                    dist: cand,
                    node: head,
                });
            }
        }
    }

    if dist[dst_idx].is_infinite() {
        return Err(PathError::NoPath {
            src: src.to_string(),
            dst: dst.to_string(),
        });
    }

    let mut path = Vec::new();
    let mut cur = dst_idx;
    while cur != src_idx {
        let l = pred[cur].expect("finite distance implies predecessor");
        path.push(l);
        cur = instance.node_index(&instance.links[l].tail).expect("validated");
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::test_fixtures::tiny3;
    use crate::instance::{Link, Node};

    fn two_route_instance() -> Instance {
        // a -> b direct (delay 5, rel 0.995) and a -> m -> b (delays 2+1, rel 0.999 each)
        let mut inst = tiny3();
        inst.nodes = vec![Node::endpoint("a"), Node::plain("m"), Node::endpoint("b")];
        inst.links = vec![
            Link {
                tail: "a".into(),
                head: "b".into(),
                delay: 5.0,
                reliability: 0.995,
                capacity: 1.0,
            },
            Link {
                tail: "a".into(),
                head: "m".into(),
                delay: 2.0,
                reliability: 0.999,
                capacity: 1.0,
            },
            Link {
                tail: "m".into(),
                head: "b".into(),
                delay: 1.0,
                reliability: 0.999,
                capacity: 1.0,
            },
        ];
        inst.services.clear();
        inst
    }

    #[test]
    fn picks_cheaper_of_two_routes() {
        let inst = two_route_instance();
        assert_eq!(shortest_path_delay(&inst, "a", "b").unwrap(), 3.0);
    }

    #[test]
    fn src_equals_dst_is_zero() {
        let inst = two_route_instance();
        assert_eq!(shortest_path_delay(&inst, "a", "a").unwrap(), 0.0);
        assert_eq!(most_reliable_path(&inst, "a", "a").unwrap(), 1.0);
    }

    #[test]
    fn reliable_two_hop_beats_single_weak_link() {
        let inst = two_route_instance();
        // 0.999 * 0.999 = 0.998001 > 0.995
        assert_eq!(most_reliable_path(&inst, "a", "b").unwrap(), 0.999 * 0.999);
    }

    #[test]
    fn single_link_reliability() {
        let inst = tiny3();
        assert_eq!(most_reliable_path(&inst, "S", "v").unwrap(), 0.999);
    }

    #[test]
    fn disconnected_pair_reports_no_path() {
        let inst = two_route_instance();
        let err = shortest_path_delay(&inst, "b", "a").unwrap_err();
        assert_eq!(
            err,
            PathError::NoPath {
                src: "b".into(),
                dst: "a".into()
            }
        );
        assert!(most_reliable_path(&inst, "b", "a").is_err());
    }

    #[test]
    fn unknown_node_rejected() {
        let inst = two_route_instance();
        assert_eq!(
            shortest_path_delay(&inst, "zz", "a").unwrap_err(),
            PathError::UnknownNode("zz".into())
        );
    }
}
