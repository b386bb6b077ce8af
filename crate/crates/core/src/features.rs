//! Per-domain feature extraction: one `(CPU, STO, BW, AD)` row per
//! physical node of an edge domain.

use std::collections::VecDeque;

use crate::substrate::{NodeId, SubstrateNetwork};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("feature scope is empty")]
    EmptyScope,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not in the feature scope")]
    NotInScope(NodeId),
    #[error("node {to} is unreachable from {from} within the scope")]
    Unreachable { from: NodeId, to: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub cpu: f64,
    pub sto: f64,
    pub bw_sum: f64,
    pub ad: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.cpu, self.sto, self.bw_sum, self.ad]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            cpu: v[0],
            sto: v[1],
            bw_sum: v[2],
            ad: v[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    pub node_order: Vec<NodeId>,
    pub normalized: bool,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row index of `node`, if it belongs to this matrix.
    pub fn row_of(&self, node: NodeId) -> Option<usize> {
        self.node_order.binary_search(&node).ok()
    }

    /// Divides each column by its maximum; all-zero columns stay zero.
    pub fn normalized(&self) -> FeatureMatrix {
        let mut max = [0.0f64; 4];
        for row in &self.rows {
            for (m, v) in max.iter_mut().zip(row.as_array()) {
                *m = m.max(v);
            }
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut v = row.as_array();
                for (x, m) in v.iter_mut().zip(max) {
                    if m > 0.0 {
                        *x /= m;
                    }
                }
                FeatureVector::from_array(v)
            })
            .collect();
        FeatureMatrix {
            rows,
            node_order: self.node_order.clone(),
            normalized: true,
        }
    }
}

fn sorted_scope(network: &SubstrateNetwork, scope: &[NodeId]) -> Result<Vec<NodeId>, FeatureError> {
    if scope.is_empty() {
        return Err(FeatureError::EmptyScope);
    }
    let mut sorted = scope.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&id| id >= network.node_count()) {
        return Err(FeatureError::UnknownNode(bad));
    }
    Ok(sorted)
}

/// Hop distances from `from` to every scope node over scope-internal links.
fn scope_hops(
    network: &SubstrateNetwork,
    scope: &[NodeId],
    from: NodeId,
) -> Result<Vec<usize>, FeatureError> {
    let mut inside = vec![false; network.node_count()];
    for &n in scope {
        inside[n] = true;
    }
    if !inside[from] {
        return Err(FeatureError::NotInScope(from));
    }
    let mut dist = vec![usize::MAX; network.node_count()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in network.incident(u) {
            if inside[v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    scope
        .iter()
        .map(|&n| match dist[n] {
            usize::MAX => Err(FeatureError::Unreachable { from, to: n }),
            d => Ok(d),
        })
        .collect()
}

/// Average hop distance from `node` to the other nodes of `scope`. The sum
/// runs over the other `|scope| - 1` nodes and is divided by `|scope|`.
pub fn avg_distance(
    network: &SubstrateNetwork,
    node: NodeId,
    scope: &[NodeId],
) -> Result<f64, FeatureError> {
    network.node(node).map_err(|_| FeatureError::UnknownNode(node))?;
    let scope = sorted_scope(network, scope)?;
    let hops = scope_hops(network, &scope, node)?;
    Ok(hops.iter().sum::<usize>() as f64 / scope.len() as f64)
}

fn vector(network: &SubstrateNetwork, node: NodeId, ad: f64) -> FeatureVector {
    let n = &network.nodes()[node];
    FeatureVector {
        cpu: n.cpu_available as f64,
        sto: n.sto_available as f64,
        bw_sum: network.incident_bw_available(node) as f64,
        ad,
    }
}

pub fn node_feature(
    network: &SubstrateNetwork,
    node: NodeId,
    scope: &[NodeId],
) -> Result<FeatureVector, FeatureError> {
    let ad = avg_distance(network, node, scope)?;
    Ok(vector(network, node, ad))
}

/// Feature matrix of `scope` in ascending node order.
pub fn feature_matrix(
    network: &SubstrateNetwork,
    scope: &[NodeId],
    normalize: bool,
) -> Result<FeatureMatrix, FeatureError> {
    ScopeFeatures::new(network, scope).map(|f| f.matrix(network, normalize))
}

/// Feature extraction for a fixed scope with the topology-only AD column
/// computed once. Valid for any network state sharing the topology it was
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeFeatures {
    nodes: Vec<NodeId>,
    ad: Vec<f64>,
}

impl ScopeFeatures {
    pub fn new(network: &SubstrateNetwork, scope: &[NodeId]) -> Result<Self, FeatureError> {
        let nodes = sorted_scope(network, scope)?;
        let ad = nodes
            .iter()
            .map(|&n| {
                scope_hops(network, &nodes, n)
                    .map(|hops| hops.iter().sum::<usize>() as f64 / nodes.len() as f64)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { nodes, ad })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matrix(&self, network: &SubstrateNetwork, normalize: bool) -> FeatureMatrix {
        let raw = FeatureMatrix {
            rows: self
                .nodes
                .iter()
                .zip(&self.ad)
                .map(|(&n, &ad)| vector(network, n, ad))
                .collect(),
            node_order: self.nodes.clone(),
            normalized: false,
        };
        if normalize {
            raw.normalized()
        } else {
            raw
        }
    }
}
