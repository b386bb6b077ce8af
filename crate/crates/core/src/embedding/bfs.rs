use std::collections::VecDeque;

use crate::substrate::{NodeId, SubstrateNetwork};

/// Work done by one breadth-first search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BfsCounter {
    /// Links whose bandwidth was checked. Each link is checked at most once.
    pub links_examined: usize,
    pub nodes_dequeued: usize,
}

/// Minimum-hop path from `src` to `dst` using only links with at least
/// `bw` available. Among equal-hop paths the lexicographically smallest
/// node sequence wins.
pub fn bfs_link_map(network: &SubstrateNetwork, src: NodeId, dst: NodeId, bw: u64) -> Option<Vec<NodeId>> {
    bfs_link_map_counted(network, src, dst, bw, &mut BfsCounter::default())
}

pub fn bfs_link_map_counted(
    network: &SubstrateNetwork,
    src: NodeId,
    dst: NodeId,
    bw: u64,
    counter: &mut BfsCounter,
) -> Option<Vec<NodeId>> {
    debug_assert_ne!(src, dst);
    // Neighbors are scanned in ascending id order and a node keeps the
    // parent that discovered it first, so each level of the queue is in
    // lexicographic order of paths and the first path found to `dst` is
    // the smallest among the shortest.
    let mut parent = vec![usize::MAX; network.node_count()];
    parent[src] = src;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        counter.nodes_dequeued += 1;
        for &(v, link) in network.incident(u) {
            if parent[v] != usize::MAX {
                continue;
            }
            counter.links_examined += 1;
            if network.link(link).bw_available < bw {
                continue;
            }
            parent[v] = u;
            if v == dst {
                let mut path = vec![dst];
                let mut cur = dst;
                while cur != src {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(v);
        }
    }
    None
}
