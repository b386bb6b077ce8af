//! Exhaustive feasibility oracle for tiny instances. It shares no code
//! with the engine: it copies the residual capacities into its own
//! tables, enumerates every injective candidate-respecting node map and,
//! for each, backtracks over every simple bandwidth-feasible path of every
//! request link.

use crate::substrate::{NodeId, SubstrateNetwork};
use crate::workload::FunctionRequest;

pub const MAX_SUBSTRATE_NODES: usize = 8;
pub const MAX_REQUEST_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    /// Host of each request node, by local id.
    pub node_map: Vec<NodeId>,
    /// Path of each request link, by link index.
    pub paths: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    Feasible(Witness),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("instance too large for the oracle: {substrate} substrate nodes, {request} request nodes")]
pub struct TooLarge {
    pub substrate: usize,
    pub request: usize,
}

struct Residual {
    domain: Vec<u8>,
    cpu: Vec<u64>,
    sto: Vec<u64>,
    // bw[a][b], symmetric; None where there is no link.
    bw: Vec<Vec<Option<u64>>>,
}

impl Residual {
    fn copy_of(network: &SubstrateNetwork) -> Self {
        let n = network.node_count();
        let mut bw = vec![vec![None; n]; n];
        for l in network.links() {
            bw[l.endpoint_a][l.endpoint_b] = Some(l.bw_available);
            bw[l.endpoint_b][l.endpoint_a] = Some(l.bw_available);
        }
        Self {
            domain: network.nodes().iter().map(|x| x.domain as u8).collect(),
            cpu: network.nodes().iter().map(|x| x.cpu_available).collect(),
            sto: network.nodes().iter().map(|x| x.sto_available).collect(),
            bw,
        }
    }

    fn simple_paths(&self, src: NodeId, dst: NodeId, demand: u64) -> Vec<Vec<NodeId>> {
        let mut out = Vec::new();
        let mut stack = vec![src];
        let mut on_path = vec![false; self.cpu.len()];
        on_path[src] = true;
        self.extend(dst, demand, &mut stack, &mut on_path, &mut out);
        out
    }

    fn extend(
        &self,
        dst: NodeId,
        demand: u64,
        stack: &mut Vec<NodeId>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let u = *stack.last().unwrap();
        if u == dst {
            out.push(stack.clone());
            return;
        }
        for v in 0..self.cpu.len() {
            if on_path[v] || !matches!(self.bw[u][v], Some(b) if b >= demand) {
                continue;
            }
            on_path[v] = true;
            stack.push(v);
            self.extend(dst, demand, stack, on_path, out);
            stack.pop();
            on_path[v] = false;
        }
    }

    fn debit(&mut self, path: &[NodeId], demand: u64, sign: bool) {
        for w in path.windows(2) {
            for (x, y) in [(w[0], w[1]), (w[1], w[0])] {
                let b = self.bw[x][y].as_mut().unwrap();
                if sign {
                    *b -= demand;
                } else {
                    *b += demand;
                }
            }
        }
    }
}

fn check_size(network: &SubstrateNetwork, request: &FunctionRequest) -> Result<(), TooLarge> {
    if network.node_count() > MAX_SUBSTRATE_NODES || request.nodes.len() > MAX_REQUEST_NODES {
        return Err(TooLarge {
            substrate: network.node_count(),
            request: request.nodes.len(),
        });
    }
    Ok(())
}

/// Decides whether `request` can be embedded on `network` as it stands.
pub fn brute_force_oracle(network: &SubstrateNetwork, request: &FunctionRequest) -> Result<OracleVerdict, TooLarge> {
    check_size(network, request)?;
    let mut residual = Residual::copy_of(network);
    let mut hosts = Vec::with_capacity(request.nodes.len());
    Ok(match map_nodes(&mut residual, request, &mut hosts) {
        Some(witness) => OracleVerdict::Feasible(witness),
        None => OracleVerdict::Infeasible,
    })
}

fn map_nodes(res: &mut Residual, request: &FunctionRequest, hosts: &mut Vec<NodeId>) -> Option<Witness> {
    let k = hosts.len();
    if k == request.nodes.len() {
        let mut paths = Vec::new();
        return route_links(res, request, hosts, &mut paths).then(|| Witness {
            node_map: hosts.clone(),
            paths,
        });
    }
    let rn = &request.nodes[k];
    for p in 0..res.cpu.len() {
        if hosts.contains(&p)
            || res.domain[p] != rn.candi as u8
            || res.cpu[p] < rn.cpu_demand
            || res.sto[p] < rn.sto_demand
        {
            continue;
        }
        hosts.push(p);
        if let Some(w) = map_nodes(res, request, hosts) {
            return Some(w);
        }
        hosts.pop();
    }
    None
}

fn route_links(res: &mut Residual, request: &FunctionRequest, hosts: &[NodeId], paths: &mut Vec<Vec<NodeId>>) -> bool {
    let k = paths.len();
    if k == request.links.len() {
        return true;
    }
    let link = &request.links[k];
    let (src, dst) = (hosts[link.endpoint_a], hosts[link.endpoint_b]);
    for path in res.simple_paths(src, dst, link.bw_demand) {
        res.debit(&path, link.bw_demand, true);
        paths.push(path);
        if route_links(res, request, hosts, paths) {
            return true;
        }
        let path = paths.pop().unwrap();
        res.debit(&path, link.bw_demand, false);
    }
    false
}

/// Fewest hops over all simple paths whose every link has at least `bw`
/// available.
pub fn min_feasible_hops(network: &SubstrateNetwork, src: NodeId, dst: NodeId, bw: u64) -> Option<usize> {
    Residual::copy_of(network)
        .simple_paths(src, dst, bw)
        .iter()
        .map(|p| p.len() - 1)
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::{DomainId, LinkSpec, NodeSpec};
    use crate::workload::{RequestLink, RequestNode};

    fn two_node_request(a: DomainId, b: DomainId, bw: u64) -> FunctionRequest {
        FunctionRequest {
            id: 0,
            arrival_time: 0.0,
            lifetime: 1.0,
            nodes: vec![
                RequestNode {
                    id: 0,
                    cpu_demand: 5,
                    sto_demand: 5,
                    candi: a,
                },
                RequestNode {
                    id: 1,
                    cpu_demand: 5,
                    sto_demand: 5,
                    candi: b,
                },
            ],
            links: vec![RequestLink {
                endpoint_a: 0,
                endpoint_b: 1,
                bw_demand: bw,
            }],
        }
    }

    fn spec(domain: DomainId) -> NodeSpec {
        NodeSpec { domain, cpu: 10, sto: 10 }
    }

    #[test]
    fn disconnected_domains_are_infeasible() {
        let net = SubstrateNetwork::new(
            &[spec(DomainId::Space), spec(DomainId::Space), spec(DomainId::Ground), spec(DomainId::Ground)],
            &[LinkSpec { a: 0, b: 1, bw: 50 }, LinkSpec { a: 2, b: 3, bw: 50 }],
        )
        .unwrap();
        let r = two_node_request(DomainId::Space, DomainId::Ground, 1);
        assert_eq!(brute_force_oracle(&net, &r).unwrap(), OracleVerdict::Infeasible);
    }

    #[test]
    fn finds_witness_requiring_detour() {
        let net = SubstrateNetwork::new(
            &[spec(DomainId::Space), spec(DomainId::Air), spec(DomainId::Ground)],
            &[
                LinkSpec { a: 0, b: 2, bw: 3 },
                LinkSpec { a: 0, b: 1, bw: 20 },
                LinkSpec { a: 1, b: 2, bw: 20 },
            ],
        )
        .unwrap();
        let r = two_node_request(DomainId::Space, DomainId::Ground, 10);
        let OracleVerdict::Feasible(w) = brute_force_oracle(&net, &r).unwrap() else { panic!() };
        assert_eq!(w.node_map, vec![0, 2]);
        assert_eq!(w.paths, vec![vec![0, 1, 2]]);
        assert_eq!(min_feasible_hops(&net, 0, 2, 10), Some(2));
        assert_eq!(min_feasible_hops(&net, 0, 2, 3), Some(1));
        assert_eq!(min_feasible_hops(&net, 0, 2, 21), None);
    }

    #[test]
    fn size_bound() {
        let net = SubstrateNetwork::new(&[spec(DomainId::Ground); 9], &[]).unwrap();
        let r = two_node_request(DomainId::Ground, DomainId::Ground, 1);
        assert!(brute_force_oracle(&net, &r).is_err());
    }
}
