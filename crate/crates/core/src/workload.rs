//! Seeded generators for substrates and request workloads, the workload
//! text format, and the arrival/departure event stream.
//!
//! Every random attribute is drawn from its own ChaCha stream so that
//! changing one range (say the storage upper bound) leaves every other
//! attribute of the output untouched. Integer demands are drawn as
//! `lo + floor(u * (hi - lo + 1))` from a uniform `u`, which makes them
//! pointwise monotone in the bounds for a fixed seed.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::ParseError;
use crate::substrate::{content_lines, DomainId, LinkSpec, NodeSpec, SubstrateNetwork};

/// Invalid generator configuration.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range {
    pub lo: u64,
    pub hi: u64,
}

impl Range {
    pub const fn new(lo: u64, hi: u64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: u64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    fn check(&self, what: &str) -> Result<(), ConfigError> {
        if self.lo > self.hi {
            return Err(invalid(format!("{what} range [{}, {}] is empty", self.lo, self.hi)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.random();
        let span = (self.hi - self.lo + 1) as f64;
        (self.lo + (u * span) as u64).min(self.hi)
    }
}

// Stream ids. Each random attribute draws from its own stream.
const STREAM_STRUCTURE: u64 = 1;
const STREAM_CPU: u64 = 2;
const STREAM_STO: u64 = 3;
const STREAM_BW: u64 = 4;
const STREAM_TIME: u64 = 5;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-segment node count and capacity ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentConfig {
    pub count: usize,
    pub cpu: Range,
    pub sto: Range,
    pub bw: Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstrateConfig {
    pub space: SegmentConfig,
    pub air: SegmentConfig,
    pub ground: SegmentConfig,
    /// Probability of a link between any two nodes of the same segment.
    pub intra_p: f64,
    /// Air neighbors drawn for each space node.
    pub space_air_links: usize,
    /// Ground neighbors drawn for each air node.
    pub air_ground_links: usize,
    pub inter_bw: Range,
    pub seed: u64,
}

impl Default for SubstrateConfig {
    fn default() -> Self {
        let small = SegmentConfig {
            count: 0,
            cpu: Range::new(50, 80),
            sto: Range::new(50, 80),
            bw: Range::new(50, 80),
        };
        Self {
            space: SegmentConfig { count: 10, ..small },
            air: SegmentConfig { count: 30, ..small },
            ground: SegmentConfig {
                count: 60,
                cpu: Range::new(50, 100),
                sto: Range::new(50, 100),
                bw: Range::new(50, 100),
            },
            intra_p: 0.5,
            space_air_links: 2,
            air_ground_links: 2,
            inter_bw: Range::new(50, 80),
            seed: 1,
        }
    }
}

impl SubstrateConfig {
    pub fn segment(&self, domain: DomainId) -> &SegmentConfig {
        match domain {
            DomainId::Space => &self.space,
            DomainId::Air => &self.air,
            DomainId::Ground => &self.ground,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for domain in DomainId::ALL {
            let seg = self.segment(domain);
            if seg.count == 0 {
                return Err(invalid(format!("{domain} node count must be positive")));
            }
            seg.cpu.check(&format!("{domain} cpu"))?;
            seg.sto.check(&format!("{domain} storage"))?;
            seg.bw.check(&format!("{domain} bandwidth"))?;
        }
        self.inter_bw.check("inter-domain bandwidth")?;
        if !(0.0..=1.0).contains(&self.intra_p) {
            return Err(invalid("intra-domain link probability must lie in [0, 1]"));
        }
        if self.space_air_links == 0 || self.air_ground_links == 0 {
            return Err(invalid(
                "inter-domain link counts must be positive, otherwise segments are disconnected",
            ));
        }
        Ok(())
    }
}

/// Builds a connected three-segment substrate. Node ids are assigned
/// space first, then air, then ground.
pub fn generate_substrate(config: &SubstrateConfig) -> Result<SubstrateNetwork, ConfigError> {
    config.validate()?;
    let mut structure = stream(config.seed, STREAM_STRUCTURE);
    let mut cpu_rng = stream(config.seed, STREAM_CPU);
    let mut sto_rng = stream(config.seed, STREAM_STO);
    let mut bw_rng = stream(config.seed, STREAM_BW);

    let mut nodes = Vec::new();
    let mut members: [Vec<usize>; 3] = Default::default();
    for domain in DomainId::ALL {
        let seg = config.segment(domain);
        for _ in 0..seg.count {
            members[domain.index()].push(nodes.len());
            nodes.push(NodeSpec {
                domain,
                cpu: seg.cpu.sample(&mut cpu_rng),
                sto: seg.sto.sample(&mut sto_rng),
            });
        }
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut bws: Vec<u64> = Vec::new();
    for domain in DomainId::ALL {
        let seg = config.segment(domain);
        let ids = &members[domain.index()];
        let mut local = random_graph(ids.len(), config.intra_p, &mut structure);
        connect_components(ids.len(), &mut local, &mut structure);
        for (a, b) in local {
            pairs.push((ids[a], ids[b]));
            bws.push(seg.bw.sample(&mut bw_rng));
        }
    }
    for (upper, lower, per_node) in [
        (DomainId::Space, DomainId::Air, config.space_air_links),
        (DomainId::Air, DomainId::Ground, config.air_ground_links),
    ] {
        let lower_ids = &members[lower.index()];
        let k = per_node.min(lower_ids.len());
        for &u in &members[upper.index()] {
            for pick in rand::seq::index::sample(&mut structure, lower_ids.len(), k) {
                pairs.push((u, lower_ids[pick]));
                bws.push(config.inter_bw.sample(&mut bw_rng));
            }
        }
    }
    let links: Vec<LinkSpec> = pairs
        .into_iter()
        .zip(bws)
        .map(|((a, b), bw)| LinkSpec { a, b, bw })
        .collect();
    let network = SubstrateNetwork::new(&nodes, &links).expect("generated topology is valid");
    debug_assert!(network.is_connected());
    Ok(network)
}

/// Erdős–Rényi edges over `n` local vertices, as `(a, b)` with `a < b`.
fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Adds the minimum number of edges (components - 1) to make the graph
/// connected, joining consecutive components at random members. Leaves
/// `edges` sorted.
fn connect_components(n: usize, edges: &mut Vec<(usize, usize)>, rng: &mut ChaCha8Rng) {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges.iter() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = components.len();
            components.push(Vec::new());
        }
        components[slot_of_root[r]].push(v);
    }
    for pair in components.windows(2) {
        let a = pair[0][rng.random_range(0..pair[0].len())];
        let b = pair[1][rng.random_range(0..pair[1].len())];
        edges.push((a.min(b), a.max(b)));
    }
    edges.sort_unstable();
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestNode {
    pub id: usize,
    pub cpu_demand: u64,
    pub sto_demand: u64,
    pub candi: DomainId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLink {
    pub endpoint_a: usize,
    pub endpoint_b: usize,
    pub bw_demand: u64,
}

/// An end-user function request graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionRequest {
    pub id: usize,
    pub arrival_time: f64,
    pub lifetime: f64,
    pub nodes: Vec<RequestNode>,
    pub links: Vec<RequestLink>,
}

impl FunctionRequest {
    pub fn departure_time(&self) -> f64 {
        self.arrival_time + self.lifetime
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for l in &self.links {
            let (ra, rb) = (
                find(&mut parent, l.endpoint_a),
                find(&mut parent, l.endpoint_b),
            );
            parent[ra] = rb;
        }
        (0..n).map(|v| find(&mut parent, v)).collect::<std::collections::BTreeSet<_>>().len() <= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub count: usize,
    pub node_count: Range,
    pub cpu: Range,
    pub sto: Range,
    pub bw: Range,
    pub link_p: f64,
    /// Relative weights of candidate domains, indexed by domain code.
    pub candi_weights: [f64; 3],
    /// Poisson arrival rate per time unit.
    pub arrival_rate: f64,
    /// Mean of the exponential lifetime; `f64::INFINITY` disables departures.
    pub mean_lifetime: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            count: 1000,
            node_count: Range::new(2, 10),
            cpu: Range::new(1, 50),
            sto: Range::new(1, 50),
            bw: Range::new(1, 50),
            link_p: 0.5,
            candi_weights: [1.0, 1.0, 1.0],
            arrival_rate: 0.04,
            mean_lifetime: 500.0,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.count == 0 {
            return Err(invalid("request count must be at least 1"));
        }
        self.node_count.check("node count")?;
        if self.node_count.lo < 1 {
            return Err(invalid("requests need at least one node"));
        }
        for (range, what) in [(self.cpu, "cpu"), (self.sto, "storage"), (self.bw, "bandwidth")] {
            range.check(what)?;
            if range.lo < 1 {
                return Err(invalid(format!("{what} demands must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.link_p) {
            return Err(invalid("link probability must lie in [0, 1]"));
        }
        if self.candi_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.candi_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(invalid("candidate-domain weights must be non-negative and not all zero"));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(invalid("arrival rate must be positive"));
        }
        if !(self.mean_lifetime > 0.0) {
            return Err(invalid("mean lifetime must be positive"));
        }
        Ok(())
    }
}

pub fn generate_workload(config: &WorkloadConfig) -> Result<Vec<FunctionRequest>, ConfigError> {
    config.validate()?;
    let mut structure = stream(config.seed, STREAM_STRUCTURE);
    let mut cpu_rng = stream(config.seed, STREAM_CPU);
    let mut sto_rng = stream(config.seed, STREAM_STO);
    let mut bw_rng = stream(config.seed, STREAM_BW);
    let mut time_rng = stream(config.seed, STREAM_TIME);
    let inter_arrival = Exp::new(config.arrival_rate).expect("validated rate");
    let lifetime = config
        .mean_lifetime
        .is_finite()
        .then(|| Exp::new(1.0 / config.mean_lifetime).expect("validated lifetime"));
    let weight_total: f64 = config.candi_weights.iter().sum();

    let mut clock = 0.0;
    let mut requests = Vec::with_capacity(config.count);
    for id in 0..config.count {
        let n = config.node_count.sample(&mut structure) as usize;
        let nodes = (0..n)
            .map(|local| {
                let mut pick = structure.random::<f64>() * weight_total;
                let mut candi = DomainId::Ground;
                for domain in DomainId::ALL {
                    let w = config.candi_weights[domain.index()];
                    if pick < w {
                        candi = domain;
                        break;
                    }
                    pick -= w;
                }
                RequestNode {
                    id: local,
                    cpu_demand: config.cpu.sample(&mut cpu_rng),
                    sto_demand: config.sto.sample(&mut sto_rng),
                    candi,
                }
            })
            .collect();
        let mut pairs = random_graph(n, config.link_p, &mut structure);
        connect_components(n, &mut pairs, &mut structure);
        let links = pairs
            .into_iter()
            .map(|(a, b)| RequestLink {
                endpoint_a: a,
                endpoint_b: b,
                bw_demand: config.bw.sample(&mut bw_rng),
            })
            .collect();
        clock += inter_arrival.sample(&mut time_rng);
        let life = match &lifetime {
            Some(dist) => dist.sample(&mut time_rng).max(f64::MIN_POSITIVE),
            None => f64::INFINITY,
        };
        requests.push(FunctionRequest {
            id,
            arrival_time: clock,
            lifetime: life,
            nodes,
            links,
        });
    }
    Ok(requests)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    // Declaration order is the tie-break order.
    Departure,
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadEvent {
    pub time: f64,
    pub kind: EventKind,
    pub request_id: usize,
}

impl WorkloadEvent {
    /// Canonical order: time, then departures before arrivals, then id.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.request_id.cmp(&other.request_id))
    }
}

/// One arrival and one departure per request, in canonical order.
pub fn event_stream(requests: &[FunctionRequest]) -> Vec<WorkloadEvent> {
    let mut events: Vec<WorkloadEvent> = requests
        .iter()
        .flat_map(|r| {
            [
                WorkloadEvent {
                    time: r.arrival_time,
                    kind: EventKind::Arrival,
                    request_id: r.id,
                },
                WorkloadEvent {
                    time: r.departure_time(),
                    kind: EventKind::Departure,
                    request_id: r.id,
                },
            ]
        })
        .collect();
    events.sort_by(WorkloadEvent::canonical_cmp);
    events
}

pub fn save_workload<W: Write>(requests: &[FunctionRequest], sink: &mut W) -> std::io::Result<()> {
    for r in requests {
        writeln!(
            sink,
            "REQ {} {} {} {} {}",
            r.id,
            r.arrival_time,
            r.lifetime,
            r.nodes.len(),
            r.links.len()
        )?;
        for n in &r.nodes {
            writeln!(sink, "{} {} {} {}", n.id, n.cpu_demand, n.sto_demand, n.candi.code())?;
        }
        for l in &r.links {
            writeln!(sink, "{} {} {}", l.endpoint_a, l.endpoint_b, l.bw_demand)?;
        }
    }
    Ok(())
}

pub fn parse_workload<R: BufRead>(source: R) -> Result<Vec<FunctionRequest>, ParseError> {
    let lines = content_lines(source)?;
    let mut iter = lines.into_iter();
    let mut requests = Vec::new();
    while let Some((line, text)) = iter.next() {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "REQ" {
            return Err(ParseError::new(
                line,
                "expected `REQ <id> <arrival> <lifetime> <node_count> <link_count>`",
            ));
        }
        let id: usize = parse_int(parts[1], line)?;
        let arrival_time = parse_time(parts[2], line)?;
        let lifetime = parse_time(parts[3], line)?;
        if !arrival_time.is_finite() {
            return Err(ParseError::new(line, "arrival time must be finite"));
        }
        if lifetime <= 0.0 {
            return Err(ParseError::new(line, "lifetime must be positive"));
        }
        let node_count: usize = parse_int(parts[4], line)?;
        let link_count: usize = parse_int(parts[5], line)?;
        if node_count == 0 {
            return Err(ParseError::new(line, "request has no nodes"));
        }

        let mut next = |what: &str| {
            iter.next()
                .ok_or_else(|| ParseError::new(line, format!("request {id}: missing {what} line")))
        };
        let mut nodes = Vec::with_capacity(node_count);
        for expected in 0..node_count {
            let (line, text) = next("node")?;
            let f = split_n::<4>(&text, line)?;
            let local: usize = parse_int(f[0], line)?;
            if local != expected {
                return Err(ParseError::new(
                    line,
                    format!("expected local node id {expected}, found {local}"),
                ));
            }
            let code: u8 = parse_int(f[3], line)?;
            let candi = DomainId::from_code(code)
                .ok_or_else(|| ParseError::new(line, format!("unknown domain code {code}")))?;
            nodes.push(RequestNode {
                id: local,
                cpu_demand: parse_int(f[1], line)?,
                sto_demand: parse_int(f[2], line)?,
                candi,
            });
        }
        let mut links: Vec<RequestLink> = Vec::with_capacity(link_count);
        for _ in 0..link_count {
            let (line, text) = next("link")?;
            let f = split_n::<3>(&text, line)?;
            let a: usize = parse_int(f[0], line)?;
            let b: usize = parse_int(f[1], line)?;
            for end in [a, b] {
                if end >= node_count {
                    return Err(ParseError::new(
                        line,
                        format!("link references undefined local node {end}"),
                    ));
                }
            }
            if a == b {
                return Err(ParseError::new(line, format!("self-loop on local node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if links
                .iter()
                .any(|l| (l.endpoint_a.min(l.endpoint_b), l.endpoint_a.max(l.endpoint_b)) == key)
            {
                return Err(ParseError::new(line, format!("duplicate link {a}-{b}")));
            }
            links.push(RequestLink {
                endpoint_a: a,
                endpoint_b: b,
                bw_demand: parse_int(f[2], line)?,
            });
        }
        requests.push(FunctionRequest {
            id,
            arrival_time,
            lifetime,
            nodes,
            links,
        });
    }
    Ok(requests)
}

fn split_n<const N: usize>(text: &str, line: usize) -> Result<[&str; N], ParseError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    parts
        .try_into()
        .map_err(|_| ParseError::new(line, format!("expected {N} fields")))
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new(line, format!("invalid integer `{s}`")))
}

fn parse_time(s: &str, line: usize) -> Result<f64, ParseError> {
    match s.parse::<f64>() {
        Ok(t) if t >= 0.0 => Ok(t),
        _ => Err(ParseError::new(line, format!("invalid time `{s}`"))),
    }
}
