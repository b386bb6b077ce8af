use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbedError, NodeSelector, Selection, SelectionContext};
use crate::features::{FeatureMatrix, ScopeFeatures};
use crate::policy::{self, GradientAccumulator, LogProbGradient, PolicyParameters};
use crate::substrate::{DomainId, NodeId, SubstrateNetwork};

use super::registry::StrategyTable;
use super::{EdgeDomain, EdgeDomainId, Partition, RuntimeError};

/// The learner serving one edge domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainAgent {
    pub domain: EdgeDomainId,
    pub segment: DomainId,
    pub params: PolicyParameters,
    pub accumulator: GradientAccumulator,
    pub strategy_table: StrategyTable,
    /// Number of parameter updates applied.
    pub updates: u64,
    features: ScopeFeatures,
}

impl DomainAgent {
    pub fn new(network: &SubstrateNetwork, domain: &EdgeDomain, params: PolicyParameters) -> Result<Self, RuntimeError> {
        let features = ScopeFeatures::new(network, &domain.nodes)?;
        let table = StrategyTable::new(domain.id, features.matrix(network, false), 0.0);
        Ok(Self {
            domain: domain.id,
            segment: domain.segment,
            params,
            accumulator: GradientAccumulator::default(),
            strategy_table: table,
            updates: 0,
            features,
        })
    }

    pub fn nodes(&self) -> &[NodeId] {
        self.features.nodes()
    }

    /// Refreshes the strategy table and returns the normalized matrix the
    /// policy consumes.
    pub fn extract(&mut self, network: &SubstrateNetwork, time: f64) -> FeatureMatrix {
        let raw = self.features.matrix(network, false);
        let normalized = raw.normalized();
        self.strategy_table.refresh(raw, time);
        normalized
    }
}

/// One agent per domain of `partition`, in the same order.
pub fn build_agents(
    network: &SubstrateNetwork,
    partition: &Partition,
    mut params_for: impl FnMut(&EdgeDomain) -> Result<PolicyParameters, RuntimeError>,
) -> Result<Vec<DomainAgent>, RuntimeError> {
    partition
        .domains()
        .iter()
        .map(|d| DomainAgent::new(network, d, params_for(d)?))
        .collect()
}

/// Node selection by the agents' policies. Samples when given a random
/// stream and records the log-probability gradient of every choice;
/// otherwise picks the most probable node.
pub struct DdrlSelector<'a> {
    agents: &'a mut [DomainAgent],
    partition: &'a Partition,
    rng: Option<&'a mut ChaCha8Rng>,
    time: f64,
    pending: Vec<(usize, LogProbGradient)>,
}

impl<'a> DdrlSelector<'a> {
    pub fn sampling(agents: &'a mut [DomainAgent], partition: &'a Partition, rng: &'a mut ChaCha8Rng, time: f64) -> Self {
        Self {
            agents,
            partition,
            rng: Some(rng),
            time,
            pending: Vec::new(),
        }
    }

    pub fn greedy(agents: &'a mut [DomainAgent], partition: &'a Partition, time: f64) -> Self {
        Self {
            agents,
            partition,
            rng: None,
            time,
            pending: Vec::new(),
        }
    }

    /// Gradients of this request's choices, tagged with the agent index.
    pub fn into_gradients(self) -> Vec<(usize, LogProbGradient)> {
        self.pending
    }

    /// Domain serving this placement: the one holding most candidates,
    /// smallest id on ties.
    fn serving_domain(&self, candidates: &[NodeId]) -> usize {
        let mut counts = vec![0usize; self.partition.domains().len()];
        for &c in candidates {
            counts[self.partition.index_of(c)] += 1;
        }
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }
}

impl NodeSelector for DdrlSelector<'_> {
    fn select(&mut self, ctx: &SelectionContext<'_>) -> Result<Selection, EmbedError> {
        let idx = self.serving_domain(ctx.candidates);
        let agent = &mut self.agents[idx];
        let fm = agent.extract(ctx.network, self.time);
        let mask: Vec<bool> = fm
            .node_order
            .iter()
            .map(|n| ctx.candidates.binary_search(n).is_ok())
            .collect();
        let dist = policy::forward(&agent.params, &fm, &mask).map_err(|e| EmbedError::Selector(e.to_string()))?;
        let node = match self.rng.as_deref_mut() {
            Some(rng) => {
                let node = policy::sample_node(&dist, rng);
                let row = fm.row_of(node).expect("sampled node is a row");
                self.pending.push((idx, policy::gradient_from(&dist, &fm, row)));
                node
            }
            None => policy::argmax_node(&dist),
        };
        Ok(Selection {
            node,
            rows_touched: fm.len(),
        })
    }
}
