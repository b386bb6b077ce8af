//! The three-segment physical network and its resource accounting.
//!
//! Resources are plain integer units. Every mutation is a single atomic
//! step: it either applies completely or leaves the network untouched.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{ParseError, Resource, ResourceError, TopologyError};

pub type NodeId = usize;
pub type LinkId = usize;

/// Network segment a physical node belongs to. The integer codes are the
/// segment ids used in every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DomainId {
    Space = 0,
    Air = 1,
    Ground = 2,
}

impl DomainId {
    pub const ALL: [DomainId; 3] = [DomainId::Space, DomainId::Air, DomainId::Ground];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DomainId::Space),
            1 => Some(DomainId::Air),
            2 => Some(DomainId::Ground),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainId::Space => "space",
            DomainId::Air => "air",
            DomainId::Ground => "ground",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateNode {
    pub id: NodeId,
    pub domain: DomainId,
    pub cpu_capacity: u64,
    pub cpu_available: u64,
    pub sto_capacity: u64,
    pub sto_available: u64,
}

/// An undirected link, stored once with `endpoint_a < endpoint_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateLink {
    pub endpoint_a: NodeId,
    pub endpoint_b: NodeId,
    pub bw_capacity: u64,
    pub bw_available: u64,
    pub inter_domain: bool,
}

impl SubstrateLink {
    /// The endpoint that is not `node`.
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.endpoint_a == node {
            self.endpoint_b
        } else {
            self.endpoint_a
        }
    }
}

/// Node description used when building a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSpec {
    pub domain: DomainId,
    pub cpu: u64,
    pub sto: u64,
}

/// Link description used when building a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub bw: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateNetwork {
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
    // Per node: (neighbor, link) sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
}

impl SubstrateNetwork {
    /// Builds a network with every resource fully available. Node `i` of
    /// `nodes` gets id `i`.
    pub fn new(nodes: &[NodeSpec], links: &[LinkSpec]) -> Result<Self, TopologyError> {
        let nodes: Vec<SubstrateNode> = nodes
            .iter()
            .enumerate()
            .map(|(id, spec)| SubstrateNode {
                id,
                domain: spec.domain,
                cpu_capacity: spec.cpu,
                cpu_available: spec.cpu,
                sto_capacity: spec.sto,
                sto_available: spec.sto,
            })
            .collect();
        let mut network = SubstrateNetwork {
            adjacency: vec![Vec::new(); nodes.len()],
            nodes,
            links: Vec::with_capacity(links.len()),
        };
        for spec in links {
            network.push_link(*spec)?;
        }
        for adj in &mut network.adjacency {
            adj.sort_unstable();
        }
        Ok(network)
    }

    fn push_link(&mut self, spec: LinkSpec) -> Result<(), TopologyError> {
        let n = self.nodes.len();
        for id in [spec.a, spec.b] {
            if id >= n {
                return Err(TopologyError::UnknownNode(id));
            }
        }
        if spec.a == spec.b {
            return Err(TopologyError::SelfLoop(spec.a));
        }
        let (a, b) = (spec.a.min(spec.b), spec.a.max(spec.b));
        if self.adjacency[a].iter().any(|&(nb, _)| nb == b) {
            return Err(TopologyError::DuplicateLink(a, b));
        }
        let id = self.links.len();
        self.links.push(SubstrateLink {
            endpoint_a: a,
            endpoint_b: b,
            bw_capacity: spec.bw,
            bw_available: spec.bw,
            inter_domain: self.nodes[a].domain != self.nodes[b].domain,
        });
        self.adjacency[a].push((b, id));
        self.adjacency[b].push((a, id));
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[SubstrateNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[SubstrateLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> Result<&SubstrateNode, ResourceError> {
        self.nodes.get(id).ok_or(ResourceError::UnknownNode(id))
    }

    pub fn link(&self, id: LinkId) -> &SubstrateLink {
        &self.links[id]
    }

    /// `(neighbor, link)` pairs of `id` in ascending neighbor order.
    pub fn incident(&self, id: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[id]
    }

    /// Nodes directly connected to `id`, ascending.
    pub fn neighbors(&self, id: NodeId) -> Result<Vec<NodeId>, ResourceError> {
        self.node(id)?;
        Ok(self.adjacency[id].iter().map(|&(nb, _)| nb).collect())
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        let adj = self.adjacency.get(a)?;
        adj.binary_search_by_key(&b, |&(nb, _)| nb)
            .ok()
            .map(|pos| adj[pos].1)
    }

    /// Node ids of one segment, ascending.
    pub fn domain_nodes(&self, domain: DomainId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.domain == domain)
            .map(|n| n.id)
            .collect()
    }

    /// Sum of available bandwidth over the links incident to `id`.
    pub fn incident_bw_available(&self, id: NodeId) -> u64 {
        self.adjacency[id]
            .iter()
            .map(|&(_, link)| self.links[link].bw_available)
            .sum()
    }

    pub fn allocate_node(&mut self, id: NodeId, cpu: u64, sto: u64) -> Result<(), ResourceError> {
        let node = self.nodes.get_mut(id).ok_or(ResourceError::UnknownNode(id))?;
        if cpu > node.cpu_available {
            return Err(ResourceError::InsufficientNode {
                node: id,
                resource: Resource::Cpu,
                requested: cpu,
                available: node.cpu_available,
            });
        }
        if sto > node.sto_available {
            return Err(ResourceError::InsufficientNode {
                node: id,
                resource: Resource::Storage,
                requested: sto,
                available: node.sto_available,
            });
        }
        node.cpu_available -= cpu;
        node.sto_available -= sto;
        Ok(())
    }

    pub fn release_node(&mut self, id: NodeId, cpu: u64, sto: u64) -> Result<(), ResourceError> {
        let node = self.nodes.get_mut(id).ok_or(ResourceError::UnknownNode(id))?;
        if node.cpu_available + cpu > node.cpu_capacity {
            return Err(ResourceError::NodeOverRelease {
                node: id,
                resource: Resource::Cpu,
            });
        }
        if node.sto_available + sto > node.sto_capacity {
            return Err(ResourceError::NodeOverRelease {
                node: id,
                resource: Resource::Storage,
            });
        }
        node.cpu_available += cpu;
        node.sto_available += sto;
        Ok(())
    }

    /// Resolves consecutive node pairs of `path` to link ids, with the
    /// total demand placed on each distinct link.
    fn path_links(&self, path: &[NodeId], bw: u64) -> Result<Vec<(LinkId, u64)>, ResourceError> {
        if path.len() < 2 {
            return Err(ResourceError::PathTooShort);
        }
        let mut hops = Vec::with_capacity(path.len() - 1);
        for pair in path.windows(2) {
            self.node(pair[0])?;
            self.node(pair[1])?;
            let link = self
                .link_between(pair[0], pair[1])
                .ok_or(ResourceError::BrokenPath {
                    a: pair[0],
                    b: pair[1],
                })?;
            hops.push(link);
        }
        hops.sort_unstable();
        let mut merged: Vec<(LinkId, u64)> = Vec::with_capacity(hops.len());
        for link in hops {
            match merged.last_mut() {
                Some((last, total)) if *last == link => *total += bw,
                _ => merged.push((link, bw)),
            }
        }
        Ok(merged)
    }

    /// Debits `bw` on every hop of `path`. All-or-nothing.
    pub fn allocate_path(&mut self, path: &[NodeId], bw: u64) -> Result<(), ResourceError> {
        let hops = self.path_links(path, bw)?;
        for &(link, amount) in &hops {
            let l = &self.links[link];
            if amount > l.bw_available {
                return Err(ResourceError::InsufficientBandwidth {
                    a: l.endpoint_a,
                    b: l.endpoint_b,
                    requested: amount,
                    available: l.bw_available,
                });
            }
        }
        for (link, amount) in hops {
            self.links[link].bw_available -= amount;
        }
        Ok(())
    }

    /// Inverse of [`allocate_path`](Self::allocate_path).
    pub fn release_path(&mut self, path: &[NodeId], bw: u64) -> Result<(), ResourceError> {
        let hops = self.path_links(path, bw)?;
        for &(link, amount) in &hops {
            let l = &self.links[link];
            if l.bw_available + amount > l.bw_capacity {
                return Err(ResourceError::LinkOverRelease {
                    a: l.endpoint_a,
                    b: l.endpoint_b,
                });
            }
        }
        for (link, amount) in hops {
            self.links[link].bw_available += amount;
        }
        Ok(())
    }

    /// True when every resource is back at capacity.
    pub fn is_fully_available(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.cpu_available == n.cpu_capacity && n.sto_available == n.sto_capacity)
            && self.links.iter().all(|l| l.bw_available == l.bw_capacity)
    }

    /// Checks `0 <= available <= capacity` everywhere and that adjacency
    /// agrees with the link list.
    pub fn check_invariants(&self) -> Result<(), TopologyError> {
        for n in &self.nodes {
            for (available, capacity) in [
                (n.cpu_available, n.cpu_capacity),
                (n.sto_available, n.sto_capacity),
            ] {
                if available > capacity {
                    return Err(TopologyError::AvailableExceedsCapacity {
                        available,
                        capacity,
                    });
                }
            }
        }
        for (id, l) in self.links.iter().enumerate() {
            if l.bw_available > l.bw_capacity {
                return Err(TopologyError::AvailableExceedsCapacity {
                    available: l.bw_available,
                    capacity: l.bw_capacity,
                });
            }
            if l.endpoint_a >= l.endpoint_b {
                return Err(TopologyError::SelfLoop(l.endpoint_a));
            }
            if self.link_between(l.endpoint_a, l.endpoint_b) != Some(id)
                || self.link_between(l.endpoint_b, l.endpoint_a) != Some(id)
            {
                return Err(TopologyError::DuplicateLink(l.endpoint_a, l.endpoint_b));
            }
        }
        let degree_sum: usize = self.adjacency.iter().map(Vec::len).sum();
        if degree_sum != 2 * self.links.len() {
            return Err(TopologyError::DuplicateLink(0, 0));
        }
        Ok(())
    }

    /// Whether the subgraph induced by `members` is connected (an empty or
    /// single-node set counts as connected).
    pub fn is_connected_within(&self, members: &[NodeId]) -> bool {
        let Some(&start) = members.first() else {
            return true;
        };
        let mut inside = vec![false; self.nodes.len()];
        for &m in members {
            inside[m] = true;
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if inside[v] && !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == members.len()
    }

    pub fn is_connected(&self) -> bool {
        let all: Vec<NodeId> = (0..self.nodes.len()).collect();
        self.is_connected_within(&all)
    }

    /// Reads the line-oriented substrate format.
    pub fn load<R: BufRead>(source: R) -> Result<Self, ParseError> {
        let mut lines = content_lines(source)?.into_iter();

        let (line, header) = lines
            .next()
            .ok_or_else(|| ParseError::new(0, "missing NODES header"))?;
        let node_count = parse_header(&header, "NODES", line)?;
        let mut nodes = Vec::with_capacity(node_count);
        for expected in 0..node_count {
            let (line, text) = lines
                .next()
                .ok_or_else(|| ParseError::new(line, "unexpected end of file in node section"))?;
            let fields = fields::<4>(&text, line)?;
            if fields[0] as usize != expected {
                let message = if (fields[0] as usize) < expected {
                    format!("duplicate node id {}", fields[0])
                } else {
                    format!("expected node id {expected}, found {}", fields[0])
                };
                return Err(ParseError::new(line, message));
            }
            let code = u8::try_from(fields[1]).ok().and_then(DomainId::from_code);
            let domain = code
                .ok_or_else(|| ParseError::new(line, format!("unknown domain code {}", fields[1])))?;
            nodes.push(NodeSpec {
                domain,
                cpu: fields[2],
                sto: fields[3],
            });
        }

        let (line, header) = lines
            .next()
            .ok_or_else(|| ParseError::new(0, "missing LINKS header"))?;
        let link_count = parse_header(&header, "LINKS", line)?;
        let mut network = SubstrateNetwork::new(&nodes, &[]).expect("nodes alone are valid");
        for _ in 0..link_count {
            let (line, text) = lines
                .next()
                .ok_or_else(|| ParseError::new(line, "unexpected end of file in link section"))?;
            let [a, b, bw] = fields::<3>(&text, line)?;
            network
                .push_link(LinkSpec {
                    a: a as usize,
                    b: b as usize,
                    bw,
                })
                .map_err(|e| ParseError::new(line, e.to_string()))?;
        }
        if let Some((line, _)) = lines.next() {
            return Err(ParseError::new(line, "trailing content after link section"));
        }
        for adj in &mut network.adjacency {
            adj.sort_unstable();
        }
        Ok(network)
    }

    /// Writes capacities in the canonical substrate format.
    pub fn save<W: Write>(&self, sink: &mut W) -> std::io::Result<()> {
        writeln!(sink, "NODES {}", self.nodes.len())?;
        for n in &self.nodes {
            writeln!(
                sink,
                "{} {} {} {}",
                n.id,
                n.domain.code(),
                n.cpu_capacity,
                n.sto_capacity
            )?;
        }
        writeln!(sink, "LINKS {}", self.links.len())?;
        for l in &self.links {
            writeln!(sink, "{} {} {}", l.endpoint_a, l.endpoint_b, l.bw_capacity)?;
        }
        Ok(())
    }
}

/// Non-empty, comment-stripped lines with 1-based line numbers.
pub(crate) fn content_lines<R: BufRead>(source: R) -> Result<Vec<(usize, String)>, ParseError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ParseError::new(line_no, e.to_string()))?;
        let text = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let text = text.trim();
        if !text.is_empty() {
            out.push((line_no, text.to_string()));
        }
    }
    Ok(out)
}

fn parse_header(text: &str, keyword: &str, line: usize) -> Result<usize, ParseError> {
    let mut parts = text.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(ParseError::new(line, format!("expected `{keyword} <count>`")));
    }
    let count = parts
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| ParseError::new(line, format!("invalid {keyword} count")))?;
    if parts.next().is_some() {
        return Err(ParseError::new(line, "unexpected trailing fields"));
    }
    Ok(count)
}

fn fields<const N: usize>(text: &str, line: usize) -> Result<[u64; N], ParseError> {
    let mut out = [0u64; N];
    let mut parts = text.split_whitespace();
    for slot in out.iter_mut() {
        let field = parts
            .next()
            .ok_or_else(|| ParseError::new(line, format!("expected {N} fields")))?;
        *slot = field
            .parse()
            .map_err(|_| ParseError::new(line, format!("invalid integer `{field}`")))?;
    }
    if parts.next().is_some() {
        return Err(ParseError::new(line, format!("expected {N} fields")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(domain: DomainId, cpu: u64, sto: u64) -> NodeSpec {
        NodeSpec { domain, cpu, sto }
    }

    fn line_graph(bw: &[u64]) -> SubstrateNetwork {
        let nodes: Vec<_> = (0..=bw.len()).map(|_| spec(DomainId::Ground, 50, 50)).collect();
        let links: Vec<_> = bw
            .iter()
            .enumerate()
            .map(|(i, &bw)| LinkSpec { a: i, b: i + 1, bw })
            .collect();
        SubstrateNetwork::new(&nodes, &links).unwrap()
    }

    const THREE_NODES: &str = "# tiny\nNODES 3\n0 0 50 60\n1 1 70 80\n2 2 90 100\nLINKS 2\n0 1 30\n2 1 40 # reversed\n";

    #[test]
    fn load_three_node_file() {
        let net = SubstrateNetwork::load(THREE_NODES.as_bytes()).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.link_count(), 2);
        assert_eq!(net.neighbors(1).unwrap(), vec![0, 2]);
        assert_eq!(net.neighbors(2).unwrap(), vec![1]);
        let l = &net.links()[1];
        assert_eq!((l.endpoint_a, l.endpoint_b), (1, 2));
        assert!(l.inter_domain);
        assert!(net.is_fully_available());
        net.check_invariants().unwrap();
    }

    #[test]
    fn load_rejects_self_loop_with_line() {
        let text = "NODES 8\n0 2 1 1\n1 2 1 1\n2 2 1 1\n3 2 1 1\n4 2 1 1\n5 2 1 1\n6 2 1 1\n7 2 1 1\nLINKS 1\n7 7 50\n";
        let err = SubstrateNetwork::load(text.as_bytes()).unwrap_err();
        assert_eq!(err.line, 11);
        assert!(err.message.contains("self-loop"), "{err}");
    }

    #[test]
    fn load_errors() {
        let cases = [
            ("NODES 1\n0 3 1 1\nLINKS 0\n", 2, "unknown domain"),
            ("NODES 2\n0 0 1 1\n0 0 1 1\nLINKS 0\n", 3, "duplicate node"),
            ("NODES 2\n0 0 1 1\n1 0 1 1\nLINKS 1\n0 5 3\n", 5, "unknown node"),
            ("NODES 1\n0 0 x 1\nLINKS 0\n", 2, "invalid integer"),
            ("NODES 2\n0 0 1 1\n1 0 1 1\nLINKS 2\n0 1 3\n1 0 3\n", 6, "duplicate link"),
        ];
        for (text, line, needle) in cases {
            let err = SubstrateNetwork::load(text.as_bytes()).unwrap_err();
            assert_eq!(err.line, line, "{text}");
            assert!(err.message.contains(needle), "{err}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let net = SubstrateNetwork::load(THREE_NODES.as_bytes()).unwrap();
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        assert_eq!(SubstrateNetwork::load(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn allocate_and_release_node() {
        let mut net = line_graph(&[]);
        net.allocate_node(0, 10, 5).unwrap();
        assert_eq!((net.nodes()[0].cpu_available, net.nodes()[0].sto_available), (40, 45));
        net.allocate_node(0, 0, 0).unwrap();
        assert_eq!(net.nodes()[0].cpu_available, 40);
        net.release_node(0, 10, 5).unwrap();
        assert!(net.is_fully_available());
        net.release_node(0, 0, 0).unwrap();
        assert!(net.is_fully_available());
    }

    #[test]
    fn allocate_node_insufficient_cpu_is_atomic() {
        let mut net = SubstrateNetwork::new(&[spec(DomainId::Air, 10, 50)], &[]).unwrap();
        let before = net.clone();
        let err = net.allocate_node(0, 11, 1).unwrap_err();
        assert!(matches!(
            err,
            ResourceError::InsufficientNode {
                resource: Resource::Cpu,
                ..
            }
        ));
        assert_eq!(net, before);
        let err = net.allocate_node(0, 1, 51).unwrap_err();
        assert!(matches!(
            err,
            ResourceError::InsufficientNode {
                resource: Resource::Storage,
                ..
            }
        ));
        assert_eq!(net, before);
    }

    #[test]
    fn over_release_is_rejected() {
        let mut net = line_graph(&[]);
        let before = net.clone();
        assert!(matches!(
            net.release_node(0, 1, 0),
            Err(ResourceError::NodeOverRelease { .. })
        ));
        assert_eq!(net, before);
        assert_eq!(net.release_node(9, 0, 0), Err(ResourceError::UnknownNode(9)));
    }

    #[test]
    fn path_allocation_per_hop() {
        let mut net = line_graph(&[20, 20]);
        net.allocate_path(&[0, 1, 2], 7).unwrap();
        assert!(net.links().iter().all(|l| l.bw_available == 13));
        net.release_path(&[0, 1, 2], 7).unwrap();
        assert!(net.is_fully_available());
    }

    #[test]
    fn path_allocation_is_atomic() {
        let mut net = line_graph(&[20, 5]);
        let before = net.clone();
        let err = net.allocate_path(&[0, 1, 2], 7).unwrap_err();
        assert!(matches!(err, ResourceError::InsufficientBandwidth { a: 1, b: 2, .. }));
        assert_eq!(net, before);
        let err = net.allocate_path(&[0, 2], 1).unwrap_err();
        assert_eq!(err, ResourceError::BrokenPath { a: 0, b: 2 });
        assert_eq!(net.allocate_path(&[0], 1), Err(ResourceError::PathTooShort));
        assert!(matches!(
            net.release_path(&[0, 1], 1),
            Err(ResourceError::LinkOverRelease { .. })
        ));
        assert_eq!(net, before);
    }

    #[test]
    fn non_simple_path_accounts_total_demand() {
        let mut net = line_graph(&[20]);
        let before = net.clone();
        assert!(net.allocate_path(&[0, 1, 0], 11).is_err());
        assert_eq!(net, before);
        net.allocate_path(&[0, 1, 0], 10).unwrap();
        assert_eq!(net.links()[0].bw_available, 0);
    }

    #[test]
    fn neighbor_sets() {
        let nodes = [spec(DomainId::Ground, 1, 1); 4];
        let tri = [
            LinkSpec { a: 0, b: 1, bw: 1 },
            LinkSpec { a: 1, b: 2, bw: 1 },
            LinkSpec { a: 0, b: 2, bw: 1 },
        ];
        let net = SubstrateNetwork::new(&nodes, &tri).unwrap();
        assert_eq!(net.neighbors(0).unwrap(), vec![1, 2]);
        assert_eq!(net.neighbors(2).unwrap(), vec![0, 1]);
        assert!(net.neighbors(3).unwrap().is_empty());
        assert_eq!(net.neighbors(4), Err(ResourceError::UnknownNode(4)));
        assert_eq!(line_graph(&[1, 1]).neighbors(1).unwrap(), vec![0, 2]);
    }

    #[test]
    fn connectivity() {
        let net = line_graph(&[1, 1, 1]);
        assert!(net.is_connected());
        assert!(!net.is_connected_within(&[0, 2]));
        assert!(net.is_connected_within(&[1, 2]));
    }
}
