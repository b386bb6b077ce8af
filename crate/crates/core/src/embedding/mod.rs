//! Request embedding: one-shot node placement through a pluggable
//! selector, then bandwidth-feasible BFS routing of every request link.
//! Either the whole request is placed or the substrate is rolled back.

mod bfs;
pub mod oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use bfs::{bfs_link_map, bfs_link_map_counted, BfsCounter};

use crate::error::ResourceError;
use crate::metrics::{record_cost, request_revenue};
use crate::substrate::{NodeId, SubstrateNetwork};
use crate::workload::FunctionRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMapping {
    pub request_node: usize,
    pub substrate_node: NodeId,
    pub cpu: u64,
    pub sto: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkMapping {
    pub request_link: usize,
    pub path: Vec<NodeId>,
    pub bw: u64,
}

impl LinkMapping {
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// A realized embedding. Both maps are kept in the order they were
/// placed, and carry the debited amounts so the record alone suffices to
/// release it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingRecord {
    pub request_id: usize,
    pub node_map: Vec<NodeMapping>,
    pub link_map: Vec<LinkMapping>,
    pub revenue: u64,
    pub cost: u64,
}

impl EmbeddingRecord {
    pub fn host_of(&self, request_node: usize) -> Option<NodeId> {
        self.node_map
            .iter()
            .find(|m| m.request_node == request_node)
            .map(|m| m.substrate_node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Unused nodes of the candidate domain exist but none has enough CPU
    /// and storage.
    NoFeasibleNode { request_node: usize },
    /// No path with enough bandwidth between the chosen hosts.
    NoFeasiblePath { request_link: usize },
    /// The candidate domain has no node left that this request is not
    /// already using.
    EmptyCandidateSet { request_node: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingOutcome {
    Accepted(EmbeddingRecord),
    Rejected(Rejection),
}

impl EmbeddingOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, EmbeddingOutcome::Accepted(_))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("resource accounting failed: {0}")]
    Accounting(#[from] ResourceError),
    #[error("selector returned node {node}, which is not a candidate")]
    InvalidSelection { node: NodeId },
    #[error("selector failed: {0}")]
    Selector(String),
    #[error("request {0} is not active")]
    UnknownRecord(usize),
    #[error("request {0} is already active")]
    DuplicateRecord(usize),
}

/// What the engine hands to a selector for one request node.
pub struct SelectionContext<'a> {
    pub network: &'a SubstrateNetwork,
    pub request: &'a FunctionRequest,
    pub request_node: usize,
    /// Feasible, unused nodes of the candidate domain, ascending.
    pub candidates: &'a [NodeId],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub node: NodeId,
    /// Feature rows scored to make this choice.
    pub rows_touched: usize,
}

/// Node-choice strategy plugged into [`embed_request`].
pub trait NodeSelector {
    /// Order in which request nodes are placed.
    fn node_order(&self, request: &FunctionRequest) -> Vec<usize> {
        (0..request.nodes.len()).collect()
    }

    /// Order in which request links are routed.
    fn link_order(&self, request: &FunctionRequest) -> Vec<usize> {
        (0..request.links.len()).collect()
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<Selection, EmbedError>;

    /// Called once the request is accepted or rejected.
    fn finish(&mut self, _accepted: bool) {}
}

/// Work counters for one embedding attempt.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EmbedStats {
    pub selections: usize,
    pub max_rows_per_selection: usize,
    pub bfs_calls: usize,
    pub max_links_per_bfs: usize,
    pub links_examined: usize,
}

pub fn embed_request(
    network: &mut SubstrateNetwork,
    request: &FunctionRequest,
    selector: &mut dyn NodeSelector,
) -> Result<EmbeddingOutcome, EmbedError> {
    embed_request_with_stats(network, request, selector, &mut EmbedStats::default())
}

pub fn embed_request_with_stats(
    network: &mut SubstrateNetwork,
    request: &FunctionRequest,
    selector: &mut dyn NodeSelector,
    stats: &mut EmbedStats,
) -> Result<EmbeddingOutcome, EmbedError> {
    let mut placed: Vec<NodeMapping> = Vec::with_capacity(request.nodes.len());
    let mut routed: Vec<LinkMapping> = Vec::with_capacity(request.links.len());
    let result = place_and_route(network, request, selector, stats, &mut placed, &mut routed);
    let outcome = match result {
        Ok(None) => {
            let mut record = EmbeddingRecord {
                request_id: request.id,
                node_map: placed,
                link_map: routed,
                revenue: request_revenue(request),
                cost: 0,
            };
            record.cost = record_cost(&record);
            EmbeddingOutcome::Accepted(record)
        }
        Ok(Some(rejection)) => {
            rollback(network, &placed, &routed)?;
            EmbeddingOutcome::Rejected(rejection)
        }
        Err(e) => {
            rollback(network, &placed, &routed)?;
            return Err(e);
        }
    };
    selector.finish(outcome.is_accepted());
    Ok(outcome)
}

fn place_and_route(
    network: &mut SubstrateNetwork,
    request: &FunctionRequest,
    selector: &mut dyn NodeSelector,
    stats: &mut EmbedStats,
    placed: &mut Vec<NodeMapping>,
    routed: &mut Vec<LinkMapping>,
) -> Result<Option<Rejection>, EmbedError> {
    let mut host = vec![usize::MAX; request.nodes.len()];
    for idx in selector.node_order(request) {
        let rn = &request.nodes[idx];
        let unused: Vec<NodeId> = network
            .nodes()
            .iter()
            .filter(|n| n.domain == rn.candi && !placed.iter().any(|m| m.substrate_node == n.id))
            .map(|n| n.id)
            .collect();
        if unused.is_empty() {
            return Ok(Some(Rejection::EmptyCandidateSet { request_node: idx }));
        }
        let candidates: Vec<NodeId> = unused
            .into_iter()
            .filter(|&id| {
                let n = &network.nodes()[id];
                n.cpu_available >= rn.cpu_demand && n.sto_available >= rn.sto_demand
            })
            .collect();
        if candidates.is_empty() {
            return Ok(Some(Rejection::NoFeasibleNode { request_node: idx }));
        }
        let selection = selector.select(&SelectionContext {
            network,
            request,
            request_node: idx,
            candidates: &candidates,
        })?;
        stats.selections += 1;
        stats.max_rows_per_selection = stats.max_rows_per_selection.max(selection.rows_touched);
        if candidates.binary_search(&selection.node).is_err() {
            return Err(EmbedError::InvalidSelection {
                node: selection.node,
            });
        }
        network.allocate_node(selection.node, rn.cpu_demand, rn.sto_demand)?;
        host[idx] = selection.node;
        placed.push(NodeMapping {
            request_node: idx,
            substrate_node: selection.node,
            cpu: rn.cpu_demand,
            sto: rn.sto_demand,
        });
    }
    for idx in selector.link_order(request) {
        let link = &request.links[idx];
        let (src, dst) = (host[link.endpoint_a], host[link.endpoint_b]);
        let mut counter = BfsCounter::default();
        let path = bfs_link_map_counted(network, src, dst, link.bw_demand, &mut counter);
        stats.bfs_calls += 1;
        stats.links_examined += counter.links_examined;
        stats.max_links_per_bfs = stats.max_links_per_bfs.max(counter.links_examined);
        let Some(path) = path else {
            return Ok(Some(Rejection::NoFeasiblePath { request_link: idx }));
        };
        network.allocate_path(&path, link.bw_demand)?;
        routed.push(LinkMapping {
            request_link: idx,
            path,
            bw: link.bw_demand,
        });
    }
    Ok(None)
}

fn rollback(
    network: &mut SubstrateNetwork,
    placed: &[NodeMapping],
    routed: &[LinkMapping],
) -> Result<(), EmbedError> {
    for m in routed.iter().rev() {
        network.release_path(&m.path, m.bw)?;
    }
    for m in placed.iter().rev() {
        network.release_node(m.substrate_node, m.cpu, m.sto)?;
    }
    Ok(())
}

/// Reverses every debit of `record`. If any step fails the steps already
/// taken are re-applied, so the network is unchanged on error.
pub fn release_request(network: &mut SubstrateNetwork, record: &EmbeddingRecord) -> Result<(), EmbedError> {
    for (i, m) in record.link_map.iter().enumerate() {
        if let Err(e) = network.release_path(&m.path, m.bw) {
            for done in &record.link_map[..i] {
                network.allocate_path(&done.path, done.bw)?;
            }
            return Err(e.into());
        }
    }
    for (i, m) in record.node_map.iter().enumerate() {
        if let Err(e) = network.release_node(m.substrate_node, m.cpu, m.sto) {
            for done in &record.node_map[..i] {
                network.allocate_node(done.substrate_node, done.cpu, done.sto)?;
            }
            for done in &record.link_map {
                network.allocate_path(&done.path, done.bw)?;
            }
            return Err(e.into());
        }
    }
    Ok(())
}

/// Embeddings currently holding substrate resources, keyed by request id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveEmbeddings {
    records: BTreeMap<usize, EmbeddingRecord>,
}

impl ActiveEmbeddings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<(), EmbedError> {
        if self.records.contains_key(&record.request_id) {
            return Err(EmbedError::DuplicateRecord(record.request_id));
        }
        self.records.insert(record.request_id, record);
        Ok(())
    }

    pub fn contains(&self, request_id: usize) -> bool {
        self.records.contains_key(&request_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.values()
    }

    /// Releases and forgets the embedding of `request_id`.
    pub fn release(&mut self, network: &mut SubstrateNetwork, request_id: usize) -> Result<EmbeddingRecord, EmbedError> {
        let record = self
            .records
            .get(&request_id)
            .ok_or(EmbedError::UnknownRecord(request_id))?;
        release_request(network, record)?;
        Ok(self.records.remove(&request_id).expect("present"))
    }

    /// Releases everything still active, in request-id order.
    pub fn release_all(&mut self, network: &mut SubstrateNetwork) -> Result<(), EmbedError> {
        let ids: Vec<usize> = self.records.keys().copied().collect();
        for id in ids {
            self.release(network, id)?;
        }
        Ok(())
    }
}

/// Uniform choice among the candidates.
#[derive(Debug, Clone)]
pub struct RandomSelector {
    rng: ChaCha8Rng,
}

impl RandomSelector {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl NodeSelector for RandomSelector {
    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<Selection, EmbedError> {
        let pick = self.rng.random_range(0..ctx.candidates.len());
        Ok(Selection {
            node: ctx.candidates[pick],
            rows_touched: ctx.candidates.len(),
        })
    }
}

/// Node resource metric used by the heuristic baseline:
/// `(cpu_available + sto_available) * incident bandwidth available`.
pub fn nrmvne_metric(network: &SubstrateNetwork, node: NodeId) -> u64 {
    let n = &network.nodes()[node];
    (n.cpu_available + n.sto_available) * network.incident_bw_available(node)
}

/// Heuristic baseline: place the most demanding request nodes first on the
/// highest-metric candidates, then route links in descending bandwidth
/// order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Nrmvne;

impl NodeSelector for Nrmvne {
    fn node_order(&self, request: &FunctionRequest) -> Vec<usize> {
        let mut order: Vec<usize> = (0..request.nodes.len()).collect();
        order.sort_by_key(|&i| {
            let n = &request.nodes[i];
            (std::cmp::Reverse(n.cpu_demand + n.sto_demand), i)
        });
        order
    }

    fn link_order(&self, request: &FunctionRequest) -> Vec<usize> {
        let mut order: Vec<usize> = (0..request.links.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(request.links[i].bw_demand), i));
        order
    }

    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<Selection, EmbedError> {
        // Candidates are ascending, so the first maximum is the smallest id.
        let mut best = ctx.candidates[0];
        let mut best_metric = nrmvne_metric(ctx.network, best);
        for &c in &ctx.candidates[1..] {
            let m = nrmvne_metric(ctx.network, c);
            if m > best_metric {
                best = c;
                best_metric = m;
            }
        }
        Ok(Selection {
            node: best,
            rows_touched: ctx.candidates.len(),
        })
    }
}

/// Embeds with the heuristic baseline.
pub fn nrmvne_select(network: &mut SubstrateNetwork, request: &FunctionRequest) -> Result<EmbeddingOutcome, EmbedError> {
    embed_request(network, request, &mut Nrmvne)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::{DomainId, LinkSpec, NodeSpec};
    use crate::workload::{RequestLink, RequestNode};

    fn node(domain: DomainId, cpu: u64, sto: u64) -> NodeSpec {
        NodeSpec { domain, cpu, sto }
    }

    fn req(nodes: &[(u64, u64, DomainId)], links: &[(usize, usize, u64)]) -> FunctionRequest {
        FunctionRequest {
            id: 3,
            arrival_time: 0.0,
            lifetime: 1.0,
            nodes: nodes
                .iter()
                .enumerate()
                .map(|(id, &(cpu, sto, candi))| RequestNode {
                    id,
                    cpu_demand: cpu,
                    sto_demand: sto,
                    candi,
                })
                .collect(),
            links: links
                .iter()
                .map(|&(a, b, bw)| RequestLink {
                    endpoint_a: a,
                    endpoint_b: b,
                    bw_demand: bw,
                })
                .collect(),
        }
    }

    /// Always picks the largest candidate id.
    struct Last;
    impl NodeSelector for Last {
        fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<Selection, EmbedError> {
            Ok(Selection {
                node: *ctx.candidates.last().unwrap(),
                rows_touched: ctx.candidates.len(),
            })
        }
    }

    #[test]
    fn smallest_request() {
        let mut net = SubstrateNetwork::new(&[node(DomainId::Ground, 50, 50)], &[]).unwrap();
        let r = req(&[(10, 5, DomainId::Ground)], &[]);
        let EmbeddingOutcome::Accepted(rec) = embed_request(&mut net, &r, &mut Last).unwrap() else {
            panic!("rejected");
        };
        assert_eq!((net.nodes()[0].cpu_available, net.nodes()[0].sto_available), (40, 45));
        assert_eq!((rec.revenue, rec.cost), (15, 15));
        release_request(&mut net, &rec).unwrap();
        assert!(net.is_fully_available());
    }

    #[test]
    fn exhausted_domain_rejects() {
        let mut net = SubstrateNetwork::new(
            &[node(DomainId::Space, 0, 50), node(DomainId::Ground, 50, 50)],
            &[LinkSpec { a: 0, b: 1, bw: 10 }],
        )
        .unwrap();
        let before = net.clone();
        let r = req(&[(1, 1, DomainId::Ground), (1, 1, DomainId::Space)], &[(0, 1, 1)]);
        let out = embed_request(&mut net, &r, &mut Last).unwrap();
        assert_eq!(out, EmbeddingOutcome::Rejected(Rejection::NoFeasibleNode { request_node: 1 }));
        assert_eq!(net, before);

        let r = req(&[(1, 1, DomainId::Ground), (1, 1, DomainId::Ground)], &[]);
        let out = embed_request(&mut net, &r, &mut Last).unwrap();
        assert_eq!(out, EmbeddingOutcome::Rejected(Rejection::EmptyCandidateSet { request_node: 1 }));
        assert_eq!(net, before);
    }

    #[test]
    fn link_failure_rolls_back_nodes() {
        // Two ground hosts joined only through a thin link.
        let mut net = SubstrateNetwork::new(
            &[node(DomainId::Ground, 50, 50), node(DomainId::Air, 50, 50)],
            &[LinkSpec { a: 0, b: 1, bw: 4 }],
        )
        .unwrap();
        let before = net.clone();
        let r = req(&[(10, 10, DomainId::Ground), (20, 5, DomainId::Air)], &[(0, 1, 5)]);
        assert_eq!(
            oracle::brute_force_oracle(&net, &r).unwrap(),
            oracle::OracleVerdict::Infeasible
        );
        let out = embed_request(&mut net, &r, &mut Last).unwrap();
        assert_eq!(out, EmbeddingOutcome::Rejected(Rejection::NoFeasiblePath { request_link: 0 }));
        assert_eq!(net, before);
    }

    #[test]
    fn invalid_selection_is_rolled_back() {
        struct Bogus;
        impl NodeSelector for Bogus {
            fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<Selection, EmbedError> {
                let node = if ctx.request_node == 0 { ctx.candidates[0] } else { 99 };
                Ok(Selection { node, rows_touched: 0 })
            }
        }
        let mut net = SubstrateNetwork::new(&[node(DomainId::Ground, 50, 50); 2], &[]).unwrap();
        let before = net.clone();
        let r = req(&[(1, 1, DomainId::Ground), (1, 1, DomainId::Ground)], &[]);
        let err = embed_request(&mut net, &r, &mut Bogus).unwrap_err();
        assert_eq!(err, EmbedError::InvalidSelection { node: 99 });
        assert_eq!(net, before);
    }

    #[test]
    fn multi_hop_cost_and_shared_links() {
        // Path 0-1-2, hosts at both ends; two request links share both hops.
        let mut net = SubstrateNetwork::new(
            &[node(DomainId::Ground, 50, 50), node(DomainId::Air, 50, 50), node(DomainId::Space, 50, 50)],
            &[LinkSpec { a: 0, b: 1, bw: 30 }, LinkSpec { a: 1, b: 2, bw: 30 }],
        )
        .unwrap();
        let r = req(
            &[(1, 1, DomainId::Ground), (1, 1, DomainId::Space), (1, 1, DomainId::Air)],
            &[(0, 1, 7), (0, 2, 4)],
        );
        let EmbeddingOutcome::Accepted(rec) = embed_request(&mut net, &r, &mut Last).unwrap() else {
            panic!("rejected");
        };
        assert_eq!(rec.link_map[0].path, vec![0, 1, 2]);
        assert_eq!(rec.revenue, 6 + 11);
        assert_eq!(rec.cost, 6 + 7 * 2 + 4);
        assert_eq!(net.links()[0].bw_available, 30 - 7 - 4);
        assert_eq!(net.links()[1].bw_available, 30 - 7);
    }

    #[test]
    fn active_set_detects_double_release() {
        let mut net = SubstrateNetwork::new(&[node(DomainId::Ground, 50, 50)], &[]).unwrap();
        let r = req(&[(10, 5, DomainId::Ground)], &[]);
        let EmbeddingOutcome::Accepted(rec) = embed_request(&mut net, &r, &mut Last).unwrap() else {
            panic!()
        };
        let mut active = ActiveEmbeddings::new();
        active.insert(rec.clone()).unwrap();
        assert_eq!(active.insert(rec), Err(EmbedError::DuplicateRecord(3)));
        active.release(&mut net, 3).unwrap();
        assert!(net.is_fully_available());
        assert_eq!(active.release(&mut net, 3), Err(EmbedError::UnknownRecord(3)));
    }

    #[test]
    fn release_failure_leaves_network_unchanged() {
        let mut net = SubstrateNetwork::new(
            &[node(DomainId::Ground, 50, 50), node(DomainId::Ground, 50, 50)],
            &[LinkSpec { a: 0, b: 1, bw: 30 }],
        )
        .unwrap();
        net.allocate_path(&[0, 1], 5).unwrap();
        let before = net.clone();
        // Claims node debits that were never made.
        let bogus = EmbeddingRecord {
            request_id: 0,
            node_map: vec![NodeMapping {
                request_node: 0,
                substrate_node: 0,
                cpu: 1,
                sto: 1,
            }],
            link_map: vec![LinkMapping {
                request_link: 0,
                path: vec![0, 1],
                bw: 5,
            }],
            revenue: 0,
            cost: 0,
        };
        assert!(release_request(&mut net, &bogus).is_err());
        assert_eq!(net, before);
    }

    #[test]
    fn nrmvne_orders() {
        let r = req(&[(5, 5, DomainId::Ground), (40, 40, DomainId::Ground)], &[(0, 1, 3)]);
        assert_eq!(Nrmvne.node_order(&r), vec![1, 0]);
        let r = req(
            &[(1, 1, DomainId::Ground); 3],
            &[(0, 1, 3), (1, 2, 9), (0, 2, 3)],
        );
        assert_eq!(Nrmvne.link_order(&r), vec![1, 0, 2]);
    }

    #[test]
    fn nrmvne_prefers_higher_metric_then_smaller_id() {
        // Node metrics: 0 -> (10+10)*20 = 400, 1 -> (20+25)*20 = 900.
        let mut net = SubstrateNetwork::new(
            &[node(DomainId::Ground, 10, 10), node(DomainId::Ground, 20, 25)],
            &[LinkSpec { a: 0, b: 1, bw: 20 }],
        )
        .unwrap();
        assert_eq!((nrmvne_metric(&net, 0), nrmvne_metric(&net, 1)), (400, 900));
        let r = req(&[(1, 1, DomainId::Ground)], &[]);
        let EmbeddingOutcome::Accepted(rec) = nrmvne_select(&mut net, &r).unwrap() else { panic!() };
        assert_eq!(rec.node_map[0].substrate_node, 1);

        let mut tie = SubstrateNetwork::new(
            &[node(DomainId::Ground, 10, 10), node(DomainId::Ground, 10, 10)],
            &[LinkSpec { a: 0, b: 1, bw: 20 }],
        )
        .unwrap();
        let EmbeddingOutcome::Accepted(rec) = nrmvne_select(&mut tie, &r).unwrap() else { panic!() };
        assert_eq!(rec.node_map[0].substrate_node, 0);
    }

    #[test]
    fn nrmvne_places_big_node_first() {
        // Only one ground node can host the (40,40) node.
        let mut net = SubstrateNetwork::new(
            &[node(DomainId::Ground, 45, 45), node(DomainId::Ground, 100, 100)],
            &[LinkSpec { a: 0, b: 1, bw: 20 }],
        )
        .unwrap();
        let r = req(&[(5, 5, DomainId::Ground), (40, 40, DomainId::Ground)], &[(0, 1, 3)]);
        let EmbeddingOutcome::Accepted(rec) = nrmvne_select(&mut net, &r).unwrap() else { panic!() };
        assert_eq!(rec.node_map[0].request_node, 1);
        assert_eq!(rec.host_of(1), Some(1));
        assert_eq!(rec.host_of(0), Some(0));
    }

    use crate::workload::{generate_substrate, generate_workload, Range, SegmentConfig, SubstrateConfig, WorkloadConfig};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn release_restores_every_resource(seed in any::<u64>(), counts in prop::array::uniform3(1usize..=5), cap in 10u64..=100, count in 1usize..=30, heuristic in any::<bool>()) {
            let seg = |count| SegmentConfig {
                count,
                cpu: Range::new(cap / 2, cap),
                sto: Range::new(cap / 2, cap),
                bw: Range::new(cap / 2, cap),
            };
            let fresh = generate_substrate(&SubstrateConfig {
                space: seg(counts[0]),
                air: seg(counts[1]),
                ground: seg(counts[2]),
                space_air_links: 1,
                air_ground_links: 1,
                inter_bw: Range::new(cap / 2, cap),
                seed,
                ..SubstrateConfig::default()
            })
            .unwrap();
            let workload = generate_workload(&WorkloadConfig {
                count,
                node_count: Range::new(1, 5),
                cpu: Range::new(1, cap / 2),
                sto: Range::new(1, cap / 2),
                bw: Range::new(1, cap / 2),
                seed,
                ..WorkloadConfig::default()
            })
            .unwrap();
            let mut net = fresh.clone();
            let mut active = ActiveEmbeddings::new();
            let mut random = RandomSelector::new(seed);
            for r in &workload {
                let before = net.clone();
                let selector: &mut dyn NodeSelector = if heuristic { &mut Nrmvne } else { &mut random };
                match embed_request(&mut net, r, selector).unwrap() {
                    EmbeddingOutcome::Accepted(rec) => active.insert(rec).unwrap(),
                    EmbeddingOutcome::Rejected(_) => prop_assert_eq!(&net, &before),
                }
                prop_assert!(net.check_invariants().is_ok());
            }
            active.release_all(&mut net).unwrap();
            prop_assert!(net.is_fully_available());
            prop_assert_eq!(net, fresh);
        }
    }
}
