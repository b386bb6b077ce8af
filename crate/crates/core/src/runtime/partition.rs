use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::ParseError;
use crate::substrate::{content_lines, DomainId, NodeId, SubstrateNetwork};

pub type EdgeDomainId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeDomain {
    pub id: EdgeDomainId,
    pub segment: DomainId,
    /// Ascending.
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {0} is assigned twice")]
    DuplicateAssignment(NodeId),
    #[error("node {0} has no edge domain")]
    Unassigned(NodeId),
    #[error("edge domain {0} spans more than one segment")]
    MixedSegments(EdgeDomainId),
    #[error("edge domain {0} is not connected")]
    Disconnected(EdgeDomainId),
}

/// Assignment of every substrate node to exactly one edge domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    domains: Vec<EdgeDomain>,
    index_of_node: Vec<usize>,
}

impl Partition {
    /// One edge domain per non-empty segment, numbered by segment code.
    pub fn per_segment(network: &SubstrateNetwork) -> Result<Self, PartitionError> {
        let pairs: Vec<(NodeId, EdgeDomainId)> = network
            .nodes()
            .iter()
            .map(|n| (n.id, n.domain.code() as EdgeDomainId))
            .collect();
        Self::from_assignment(network, &pairs)
    }

    pub fn from_assignment(network: &SubstrateNetwork, pairs: &[(NodeId, EdgeDomainId)]) -> Result<Self, PartitionError> {
        let n = network.node_count();
        let mut owner: Vec<Option<EdgeDomainId>> = vec![None; n];
        for &(node, domain) in pairs {
            let slot = owner.get_mut(node).ok_or(PartitionError::UnknownNode(node))?;
            if slot.replace(domain).is_some() {
                return Err(PartitionError::DuplicateAssignment(node));
            }
        }
        let mut members: BTreeMap<EdgeDomainId, Vec<NodeId>> = BTreeMap::new();
        for (node, d) in owner.iter().enumerate() {
            members
                .entry(d.ok_or(PartitionError::Unassigned(node))?)
                .or_default()
                .push(node);
        }
        let mut domains = Vec::with_capacity(members.len());
        let mut index_of_node = vec![0; n];
        for (idx, (id, nodes)) in members.into_iter().enumerate() {
            let segment = network.nodes()[nodes[0]].domain;
            if nodes.iter().any(|&x| network.nodes()[x].domain != segment) {
                return Err(PartitionError::MixedSegments(id));
            }
            if !network.is_connected_within(&nodes) {
                return Err(PartitionError::Disconnected(id));
            }
            for &x in &nodes {
                index_of_node[x] = idx;
            }
            domains.push(EdgeDomain { id, segment, nodes });
        }
        Ok(Self { domains, index_of_node })
    }

    /// Reads `<node_id> <edge_domain_id>` lines.
    pub fn load<R: BufRead>(source: R, network: &SubstrateNetwork) -> Result<Self, PartitionError> {
        let mut pairs = Vec::new();
        for (line, text) in content_lines(source)? {
            let parts: Vec<&str> = text.split_whitespace().collect();
            let pair = match parts[..] {
                [a, b] => a.parse::<NodeId>().ok().zip(b.parse::<EdgeDomainId>().ok()),
                _ => None,
            };
            pairs.push(pair.ok_or_else(|| ParseError::new(line, "expected `<node_id> <edge_domain_id>`"))?);
        }
        Self::from_assignment(network, &pairs)
    }

    /// Sorted by id.
    pub fn domains(&self) -> &[EdgeDomain] {
        &self.domains
    }

    /// Position in [`Partition::domains`] of the domain owning `node`.
    pub fn index_of(&self, node: NodeId) -> usize {
        self.index_of_node[node]
    }

    pub fn domain_of(&self, node: NodeId) -> &EdgeDomain {
        &self.domains[self.index_of_node[node]]
    }
}
