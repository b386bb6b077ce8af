//! Independent re-check of embedding records against the placement,
//! capacity and routing constraints, and of the substrate transitions
//! they cause. Nothing here calls into the engine.

use std::collections::BTreeMap;

use crate::embedding::{EmbeddingOutcome, EmbeddingRecord};
use crate::metrics::{record_cost, request_revenue};
use crate::runtime::{evaluate_observed, Algorithm, Partition, RuntimeError, StepResult};
use crate::substrate::{NodeId, SubstrateNetwork};
use crate::workload::FunctionRequest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("request node {request_node} is placed outside its candidate domain")]
    CandidateDomain { request_node: usize },
    #[error("request node {request_node} is mapped {times} times")]
    NodeMapCount { request_node: usize, times: usize },
    #[error("substrate node {node} hosts more than one node of the request")]
    SharedHost { node: NodeId },
    #[error("substrate node {node} does not exist")]
    UnknownHost { node: NodeId },
    #[error("request node {request_node} mapped with wrong demand")]
    DemandMismatch { request_node: usize },
    #[error("node {node} lacks CPU: {requested} requested, {available} available")]
    Cpu { node: NodeId, requested: u64, available: u64 },
    #[error("node {node} lacks storage: {requested} requested, {available} available")]
    Storage { node: NodeId, requested: u64, available: u64 },
    #[error("request link {request_link} is mapped {times} times")]
    LinkMapCount { request_link: usize, times: usize },
    #[error("request link {request_link} has a path that does not join its hosts")]
    PathEndpoints { request_link: usize },
    #[error("request link {request_link} uses a missing substrate link {a}-{b}")]
    MissingLink { request_link: usize, a: NodeId, b: NodeId },
    #[error("request link {request_link} path revisits a node")]
    PathNotSimple { request_link: usize },
    #[error("request link {request_link} mapped with wrong bandwidth")]
    BandwidthMismatch { request_link: usize },
    #[error("link {a}-{b} lacks bandwidth: {requested} requested, {available} available")]
    Bandwidth { a: NodeId, b: NodeId, requested: u64, available: u64 },
    #[error("recorded revenue or cost disagrees with recomputation")]
    Accounting,
    #[error("substrate after the event differs from the expected state")]
    Transition,
}

/// Checks an accepted record against the substrate as it was before the
/// request was embedded.
pub fn validate_record(pre: &SubstrateNetwork, request: &FunctionRequest, record: &EmbeddingRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut hosts: Vec<Option<NodeId>> = vec![None; request.nodes.len()];
    let mut counts = vec![0usize; request.nodes.len()];
    let mut used = BTreeMap::new();
    for m in &record.node_map {
        let Some(rn) = request.nodes.get(m.request_node) else {
            out.push(Violation::NodeMapCount {
                request_node: m.request_node,
                times: 1,
            });
            continue;
        };
        counts[m.request_node] += 1;
        hosts[m.request_node] = Some(m.substrate_node);
        let Some(node) = pre.nodes().get(m.substrate_node) else {
            out.push(Violation::UnknownHost { node: m.substrate_node });
            continue;
        };
        if *used.entry(m.substrate_node).and_modify(|c| *c += 1).or_insert(1) == 2 {
            out.push(Violation::SharedHost { node: m.substrate_node });
        }
        if node.domain != rn.candi {
            out.push(Violation::CandidateDomain {
                request_node: m.request_node,
            });
        }
        if m.cpu != rn.cpu_demand || m.sto != rn.sto_demand {
            out.push(Violation::DemandMismatch {
                request_node: m.request_node,
            });
        }
        if rn.cpu_demand > node.cpu_available {
            out.push(Violation::Cpu {
                node: node.id,
                requested: rn.cpu_demand,
                available: node.cpu_available,
            });
        }
        if rn.sto_demand > node.sto_available {
            out.push(Violation::Storage {
                node: node.id,
                requested: rn.sto_demand,
                available: node.sto_available,
            });
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        if c != 1 {
            out.push(Violation::NodeMapCount {
                request_node: i,
                times: c,
            });
        }
    }

    let mut link_counts = vec![0usize; request.links.len()];
    let mut demand: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    for m in &record.link_map {
        let Some(rl) = request.links.get(m.request_link) else {
            out.push(Violation::LinkMapCount {
                request_link: m.request_link,
                times: 1,
            });
            continue;
        };
        link_counts[m.request_link] += 1;
        if m.bw != rl.bw_demand {
            out.push(Violation::BandwidthMismatch {
                request_link: m.request_link,
            });
        }
        let ends = (hosts[rl.endpoint_a], hosts[rl.endpoint_b]);
        if m.path.len() < 2 || ends != (m.path.first().copied(), m.path.last().copied()) {
            out.push(Violation::PathEndpoints {
                request_link: m.request_link,
            });
        }
        let mut seen = m.path.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != m.path.len() {
            out.push(Violation::PathNotSimple {
                request_link: m.request_link,
            });
        }
        for w in m.path.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            if pre.link_between(key.0, key.1).is_none() {
                out.push(Violation::MissingLink {
                    request_link: m.request_link,
                    a: key.0,
                    b: key.1,
                });
                continue;
            }
            *demand.entry(key).or_default() += rl.bw_demand;
        }
    }
    for (i, &c) in link_counts.iter().enumerate() {
        if c != 1 {
            out.push(Violation::LinkMapCount {
                request_link: i,
                times: c,
            });
        }
    }
    for ((a, b), requested) in demand {
        let available = pre.link(pre.link_between(a, b).expect("checked above")).bw_available;
        if requested > available {
            out.push(Violation::Bandwidth {
                a,
                b,
                requested,
                available,
            });
        }
    }

    if record.revenue != request_revenue(request) || record.cost != record_cost(record) {
        out.push(Violation::Accounting);
    }
    out
}

/// Whether `post` is `pre` with the record's resources debited (`sign`
/// 1) or credited (`sign` -1) and nothing else changed. With no record the
/// two must be equal.
pub fn transition_matches(
    pre: &SubstrateNetwork,
    post: &SubstrateNetwork,
    record: Option<&EmbeddingRecord>,
    sign: i64,
) -> bool {
    if pre.node_count() != post.node_count() || pre.link_count() != post.link_count() {
        return false;
    }
    let mut cpu = vec![0i64; pre.node_count()];
    let mut sto = vec![0i64; pre.node_count()];
    let mut bw = vec![0i64; pre.link_count()];
    for m in record.iter().flat_map(|r| &r.node_map) {
        let Some(i) = (m.substrate_node < cpu.len()).then_some(m.substrate_node) else {
            return false;
        };
        cpu[i] += sign * m.cpu as i64;
        sto[i] += sign * m.sto as i64;
    }
    for m in record.iter().flat_map(|r| &r.link_map) {
        for w in m.path.windows(2) {
            let Some(l) = pre.link_between(w[0], w[1]) else {
                return false;
            };
            bw[l] += sign * m.bw as i64;
        }
    }
    let nodes_ok = pre.nodes().iter().zip(post.nodes()).enumerate().all(|(i, (a, b))| {
        a.id == b.id
            && a.domain == b.domain
            && a.cpu_capacity == b.cpu_capacity
            && a.sto_capacity == b.sto_capacity
            && a.cpu_available as i64 - cpu[i] == b.cpu_available as i64
            && a.sto_available as i64 - sto[i] == b.sto_available as i64
    });
    let links_ok = pre.links().iter().zip(post.links()).enumerate().all(|(i, (a, b))| {
        a.endpoint_a == b.endpoint_a
            && a.endpoint_b == b.endpoint_b
            && a.bw_capacity == b.bw_capacity
            && a.bw_available as i64 - bw[i] == b.bw_available as i64
    });
    nodes_ok && links_ok
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub arrivals: usize,
    pub accepted: usize,
    pub departures: usize,
    pub violations: Vec<(usize, Violation)>,
    /// Every availability equals capacity once all requests have left.
    pub conserved: bool,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.conserved
    }
}

/// Runs `algorithm` over the workload and audits every event.
pub fn audit_run(
    substrate: &SubstrateNetwork,
    workload: &[FunctionRequest],
    partition: &Partition,
    algorithm: Algorithm<'_>,
) -> Result<AuditReport, RuntimeError> {
    let mut report = AuditReport::default();
    let mut records: BTreeMap<usize, EmbeddingRecord> = BTreeMap::new();
    let outcome = evaluate_observed(substrate, workload, partition, algorithm, true, &mut |obs| {
        let pre = obs.pre.expect("pre-state requested");
        let id = obs.request.id;
        match obs.result {
            StepResult::Arrival { outcome, .. } => {
                report.arrivals += 1;
                match outcome {
                    EmbeddingOutcome::Accepted(rec) => {
                        report.accepted += 1;
                        for v in validate_record(pre, obs.request, rec) {
                            report.violations.push((id, v));
                        }
                        if !transition_matches(pre, obs.post, Some(rec), 1) {
                            report.violations.push((id, Violation::Transition));
                        }
                        records.insert(id, rec.clone());
                    }
                    EmbeddingOutcome::Rejected(_) => {
                        if !transition_matches(pre, obs.post, None, 1) {
                            report.violations.push((id, Violation::Transition));
                        }
                    }
                }
            }
            StepResult::Departure { released, .. } => {
                report.departures += 1;
                let ok = match records.remove(&id) {
                    Some(rec) => *released && transition_matches(pre, obs.post, Some(&rec), -1),
                    None => !released && transition_matches(pre, obs.post, None, 1),
                };
                if !ok {
                    report.violations.push((id, Violation::Transition));
                }
            }
        }
    })?;
    let all_left = workload.iter().all(|r| r.departure_time().is_finite());
    report.conserved = !all_left || outcome.final_network.is_fully_available();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_request, LinkMapping, NodeMapping, Nrmvne};
    use crate::substrate::{DomainId, LinkSpec, NodeSpec};
    use crate::workload::{RequestLink, RequestNode};

    fn net() -> SubstrateNetwork {
        let spec = |domain| NodeSpec { domain, cpu: 20, sto: 20 };
        SubstrateNetwork::new(
            &[spec(DomainId::Ground), spec(DomainId::Ground), spec(DomainId::Ground), spec(DomainId::Air)],
            &[
                LinkSpec { a: 0, b: 1, bw: 10 },
                LinkSpec { a: 1, b: 2, bw: 10 },
                LinkSpec { a: 0, b: 2, bw: 10 },
                LinkSpec { a: 2, b: 3, bw: 10 },
            ],
        )
        .unwrap()
    }

    fn request() -> FunctionRequest {
        let node = |id, candi| RequestNode {
            id,
            cpu_demand: 5,
            sto_demand: 5,
            candi,
        };
        FunctionRequest {
            id: 0,
            arrival_time: 0.0,
            lifetime: 1.0,
            nodes: vec![node(0, DomainId::Ground), node(1, DomainId::Air)],
            links: vec![RequestLink {
                endpoint_a: 0,
                endpoint_b: 1,
                bw_demand: 6,
            }],
        }
    }

    fn record(hosts: [NodeId; 2], path: Vec<NodeId>) -> EmbeddingRecord {
        let mut r = EmbeddingRecord {
            request_id: 0,
            node_map: hosts
                .iter()
                .enumerate()
                .map(|(i, &h)| NodeMapping {
                    request_node: i,
                    substrate_node: h,
                    cpu: 5,
                    sto: 5,
                })
                .collect(),
            link_map: vec![LinkMapping {
                request_link: 0,
                path,
                bw: 6,
            }],
            revenue: 0,
            cost: 0,
        };
        r.revenue = request_revenue(&request());
        r.cost = record_cost(&r);
        r
    }

    #[test]
    fn engine_record_is_clean() {
        let pre = net();
        let mut post = pre.clone();
        let EmbeddingOutcome::Accepted(rec) = embed_request(&mut post, &request(), &mut Nrmvne).unwrap() else {
            panic!()
        };
        assert_eq!(validate_record(&pre, &request(), &rec), vec![]);
        assert!(transition_matches(&pre, &post, Some(&rec), 1));
        assert!(transition_matches(&post, &pre, Some(&rec), -1));
        assert!(!transition_matches(&pre, &post, None, 1));
        assert!(!transition_matches(&post, &pre, Some(&rec), 1));
    }

    #[test]
    fn detects_placement_faults() {
        let pre = net();
        let v = validate_record(&pre, &request(), &record([0, 2], vec![0, 2]));
        assert!(v.contains(&Violation::CandidateDomain { request_node: 1 }));
        let v = validate_record(&pre, &request(), &record([3, 3], vec![3, 3]));
        assert!(v.contains(&Violation::SharedHost { node: 3 }));
        let mut pre2 = pre.clone();
        pre2.allocate_node(2, 18, 0).unwrap();
        let v = validate_record(&pre2, &request(), &record([2, 3], vec![2, 3]));
        assert_eq!(
            v,
            vec![Violation::Cpu {
                node: 2,
                requested: 5,
                available: 2
            }]
        );
    }

    #[test]
    fn detects_routing_faults() {
        let pre = net();
        let v = validate_record(&pre, &request(), &record([0, 3], vec![0, 3]));
        assert!(v.contains(&Violation::MissingLink { request_link: 0, a: 0, b: 3 }));
        let v = validate_record(&pre, &request(), &record([1, 3], vec![1, 3]));
        assert!(v.iter().any(|x| matches!(x, Violation::MissingLink { .. })));
        let v = validate_record(&pre, &request(), &record([0, 3], vec![0, 1, 3]));
        assert!(v.contains(&Violation::MissingLink { request_link: 0, a: 1, b: 3 }));
        let v = validate_record(&pre, &request(), &record([0, 3], vec![1, 2, 3]));
        assert!(v.contains(&Violation::PathEndpoints { request_link: 0 }));
        let mut pre2 = pre.clone();
        pre2.allocate_path(&[2, 3], 5).unwrap();
        let v = validate_record(&pre2, &request(), &record([0, 3], vec![0, 2, 3]));
        assert_eq!(
            v,
            vec![Violation::Bandwidth {
                a: 2,
                b: 3,
                requested: 6,
                available: 5
            }]
        );
    }

    #[test]
    fn detects_accounting_faults() {
        let pre = net();
        let mut r = record([0, 3], vec![0, 2, 3]);
        r.cost -= 1;
        assert_eq!(validate_record(&pre, &request(), &r), vec![Violation::Accounting]);
        let mut r = record([0, 3], vec![0, 2, 3]);
        r.node_map.pop();
        assert!(validate_record(&pre, &request(), &r).contains(&Violation::NodeMapCount {
            request_node: 1,
            times: 0
        }));
    }
}
