//! Event-driven orchestration of the per-domain agents: joint state,
//! the training and testing loops, and uploads to the central servers.

mod agent;
mod partition;
pub mod registry;

use std::collections::{BTreeMap, HashMap};

pub use agent::{build_agents, DdrlSelector, DomainAgent};
pub use partition::{EdgeDomain, EdgeDomainId, Partition, PartitionError};
pub use registry::{sync_to_central, CentralRegistry, StrategyTable};

use crate::embedding::{
    embed_request_with_stats, ActiveEmbeddings, EmbedError, EmbedStats, EmbeddingOutcome, NodeSelector, Nrmvne,
    RandomSelector,
};
use crate::features::FeatureError;
use crate::metrics::{request_revenue, MetricSample, MetricsLedger, Outcome, TimeRegression};
use crate::policy::{self, PolicyError, PolicyParameters, DEFAULT_ALPHA};
use crate::substrate::{NodeId, SubstrateNetwork};
use crate::workload::{event_stream, stream, EventKind, FunctionRequest, WorkloadEvent};

const INIT_STREAM: u64 = 11;
const SAMPLE_STREAM: u64 = 12;
const BASELINE_RATE: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metrics(#[from] TimeRegression),
    #[error("agent {domain}, epoch {epoch}: {source}")]
    Policy {
        domain: EdgeDomainId,
        epoch: usize,
        source: PolicyError,
    },
    #[error("departure of unknown request {0}")]
    UnknownRequest(usize),
    #[error("event for request {request} at {time} is out of canonical order")]
    OutOfOrder { request: usize, time: f64 },
    #[error("no parameters for edge domain {0}")]
    MissingAgent(EdgeDomainId),
    #[error("parameters for edge domain {0}, which the partition does not have")]
    UnknownAgent(EdgeDomainId),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Resources of one edge domain at an instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainState {
    pub domain: EdgeDomainId,
    pub nodes: Vec<NodeId>,
    pub cpu: Vec<u64>,
    pub sto: Vec<u64>,
    /// Available bandwidth of every link touching the domain, keyed by
    /// ordered endpoints.
    pub bw: BTreeMap<(NodeId, NodeId), u64>,
    /// Neighbors inside the domain, per node in `nodes` order.
    pub adjacency: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub time: f64,
    pub domains: Vec<DomainState>,
}

impl JointState {
    pub fn observe(network: &SubstrateNetwork, partition: &Partition, time: f64) -> Self {
        let domains = partition
            .domains()
            .iter()
            .map(|d| {
                let inside = |n: NodeId| d.nodes.binary_search(&n).is_ok();
                let mut bw = BTreeMap::new();
                for &n in &d.nodes {
                    for &(_, l) in network.incident(n) {
                        let link = network.link(l);
                        bw.insert((link.endpoint_a, link.endpoint_b), link.bw_available);
                    }
                }
                DomainState {
                    domain: d.id,
                    cpu: d.nodes.iter().map(|&n| network.nodes()[n].cpu_available).collect(),
                    sto: d.nodes.iter().map(|&n| network.nodes()[n].sto_available).collect(),
                    adjacency: d
                        .nodes
                        .iter()
                        .map(|&n| network.incident(n).iter().map(|&(v, _)| v).filter(|&v| inside(v)).collect())
                        .collect(),
                    nodes: d.nodes.clone(),
                    bw,
                }
            })
            .collect();
        Self { time, domains }
    }
}

/// Work counters over a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStats {
    pub selections: usize,
    pub max_rows_per_selection: usize,
    pub bfs_calls: usize,
    pub max_links_per_bfs: usize,
    pub links_examined: usize,
}

impl RunStats {
    fn absorb(&mut self, s: &EmbedStats) {
        self.selections += s.selections;
        self.max_rows_per_selection = self.max_rows_per_selection.max(s.max_rows_per_selection);
        self.bfs_calls += s.bfs_calls;
        self.max_links_per_bfs = self.max_links_per_bfs.max(s.max_links_per_bfs);
        self.links_examined += s.links_examined;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Arrival {
        request_id: usize,
        outcome: EmbeddingOutcome,
        sample: MetricSample,
    },
    Departure { request_id: usize, released: bool },
}

/// Single writer of the substrate and the ledger.
#[derive(Debug, Clone)]
pub struct Orchestrator<'w> {
    pub network: SubstrateNetwork,
    pub active: ActiveEmbeddings,
    pub ledger: MetricsLedger,
    pub stats: RunStats,
    requests: HashMap<usize, &'w FunctionRequest>,
    last: Option<WorkloadEvent>,
}

impl<'w> Orchestrator<'w> {
    pub fn new(network: SubstrateNetwork, workload: &'w [FunctionRequest]) -> Self {
        Self {
            network,
            active: ActiveEmbeddings::new(),
            ledger: MetricsLedger::new(),
            stats: RunStats::default(),
            requests: workload.iter().map(|r| (r.id, r)).collect(),
            last: None,
        }
    }

    pub fn request(&self, id: usize) -> Option<&'w FunctionRequest> {
        self.requests.get(&id).copied()
    }

    /// Applies one event. Arrivals are embedded with `selector`.
    pub fn step(&mut self, event: &WorkloadEvent, selector: &mut dyn NodeSelector) -> Result<StepResult, RuntimeError> {
        if self.last.is_some_and(|l| l.canonical_cmp(event).is_gt()) {
            return Err(RuntimeError::OutOfOrder {
                request: event.request_id,
                time: event.time,
            });
        }
        let request = self
            .request(event.request_id)
            .ok_or(RuntimeError::UnknownRequest(event.request_id))?;
        let result = match event.kind {
            EventKind::Departure => {
                let released = self.active.contains(request.id);
                if released {
                    self.active.release(&mut self.network, request.id)?;
                }
                StepResult::Departure {
                    request_id: request.id,
                    released,
                }
            }
            EventKind::Arrival => {
                let mut s = EmbedStats::default();
                let outcome = embed_request_with_stats(&mut self.network, request, selector, &mut s)?;
                self.stats.absorb(&s);
                let o = match &outcome {
                    EmbeddingOutcome::Accepted(rec) => {
                        self.active.insert(rec.clone())?;
                        Outcome::Accepted {
                            revenue: rec.revenue,
                            cost: rec.cost,
                        }
                    }
                    EmbeddingOutcome::Rejected(_) => Outcome::Rejected,
                };
                let sample = self.ledger.observe(o, event.time)?;
                StepResult::Arrival {
                    request_id: request.id,
                    outcome,
                    sample,
                }
            }
        };
        self.last = Some(*event);
        Ok(result)
    }
}

/// How each request's choices are weighted into the batch update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Choices are stacked unweighted and the batch is applied with the
    /// objective recorded at the request closing the batch.
    Objective,
    /// Each request's choices are weighted by the objective gain its
    /// acceptance brings, signed by whether the request fared better than
    /// the running acceptance rate. The batch applies the weighted sum.
    Advantage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub reward: RewardMode,
    /// Divide the revenue term of the training reward by the running mean
    /// request revenue. Recorded metrics are unaffected.
    pub normalize_reward: bool,
    /// Replace every agent's weights with the registry mean after each
    /// upload.
    pub fuse: bool,
    /// Discount factor. Carried in configuration, not used by the update.
    pub gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 100,
            alpha: DEFAULT_ALPHA,
            seed: 1,
            reward: RewardMode::Advantage,
            normalize_reward: true,
            fuse: false,
            gamma: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let err = |m: &str| Err(RuntimeError::Config(m.to_string()));
        if self.batch_size == 0 {
            return err("batch size must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return err("learning rate must be positive and finite");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err("discount factor must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_ar: f64,
    pub mean_rc: f64,
    pub mean_acr: f64,
    pub mean_objective: f64,
    pub last: MetricSample,
}

impl EpochSummary {
    fn of(epoch: usize, ledger: &MetricsLedger) -> Self {
        let n = ledger.series.len().max(1) as f64;
        let mean = |f: fn(&MetricSample) -> f64| ledger.series.iter().map(f).sum::<f64>() / n;
        Self {
            epoch,
            mean_ar: mean(|s| s.ar),
            mean_rc: mean(|s| s.rc),
            mean_acr: mean(|s| s.acr),
            mean_objective: mean(|s| s.objective),
            last: ledger.sample(),
        }
    }
}

pub const EPOCH_HEADER: &str = "epoch,mean_ar,mean_rc,mean_acr,mean_objective,final_ar,final_rc,final_acr,final_objective";

pub fn write_epochs_csv<W: std::io::Write>(epochs: &[EpochSummary], sink: &mut W) -> std::io::Result<()> {
    writeln!(sink, "{EPOCH_HEADER}")?;
    for e in epochs {
        writeln!(
            sink,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            e.epoch,
            e.mean_ar,
            e.mean_rc,
            e.mean_acr,
            e.mean_objective,
            e.last.ar,
            e.last.rc,
            e.last.acr,
            e.last.objective
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: Vec<(EdgeDomainId, PolicyParameters)>,
    pub params: Vec<(EdgeDomainId, PolicyParameters)>,
    pub epochs: Vec<EpochSummary>,
    pub registry: CentralRegistry,
    /// Updates applied per agent, in partition order.
    pub updates: Vec<(EdgeDomainId, u64)>,
}

fn check_sorted(workload: &[FunctionRequest]) -> Result<(), RuntimeError> {
    if workload.windows(2).any(|w| w[0].arrival_time > w[1].arrival_time) {
        return Err(RuntimeError::Config("workload is not sorted by arrival time".into()));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Counters {
    revenue: u64,
    cost: u64,
    accepted: u64,
    arrived: u64,
}

impl Counters {
    fn of(l: &MetricsLedger) -> Self {
        Self {
            revenue: l.cumulative_revenue,
            cost: l.cumulative_cost,
            accepted: l.accepted_count,
            arrived: l.arrived_count,
        }
    }
}

fn objective(c: Counters, time: f64, revenue_scale: f64) -> f64 {
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    ratio(c.revenue as f64, time) / revenue_scale + ratio(c.revenue as f64, c.cost as f64) + ratio(c.accepted as f64, c.arrived as f64)
}

/// Gain in the objective from accepting the request rather than rejecting
/// it, at the same instant, times the arrival count. A rejected request's
/// cost is estimated from the running cost-to-revenue ratio.
fn acceptance_gain(before: Counters, after: Counters, revenue: u64, time: f64, revenue_scale: f64) -> f64 {
    let rejected = Counters {
        arrived: after.arrived,
        ..before
    };
    let accepted = if after.accepted > before.accepted {
        after
    } else {
        let ratio = if before.revenue == 0 {
            1.0
        } else {
            before.cost as f64 / before.revenue as f64
        };
        Counters {
            revenue: before.revenue + revenue,
            cost: before.cost + (revenue as f64 * ratio).round() as u64,
            accepted: before.accepted + 1,
            arrived: after.arrived,
        }
    };
    (objective(accepted, time, revenue_scale) - objective(rejected, time, revenue_scale)) * after.arrived as f64
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    agents: Vec<DomainAgent>,
    partition: &'a Partition,
    registry: CentralRegistry,
    placed: Vec<bool>,
    in_batch: usize,
    /// Running acceptance rate.
    acceptance: f64,
}

impl Trainer<'_> {
    fn stack(&mut self, grads: &[(usize, policy::LogProbGradient)], gain: f64, accepted: bool) {
        let weight = match self.config.reward {
            RewardMode::Objective => 1.0,
            RewardMode::Advantage => {
                let a = if accepted { 1.0 } else { 0.0 };
                let weight = (a - self.acceptance) * gain;
                self.acceptance += BASELINE_RATE * (a - self.acceptance);
                weight
            }
        };
        for (idx, g) in grads {
            self.agents[*idx].accumulator.add_scaled(g, weight);
            self.placed[*idx] = true;
        }
        self.in_batch += 1;
    }

    fn flush(&mut self, epoch: usize, objective: f64) -> Result<(), RuntimeError> {
        if self.in_batch == 0 {
            return Ok(());
        }
        let reward = match self.config.reward {
            RewardMode::Objective => objective,
            RewardMode::Advantage => 1.0,
        };
        for (agent, placed) in self.agents.iter_mut().zip(&mut self.placed) {
            if std::mem::take(placed) {
                policy::apply_update(&mut agent.params, &mut agent.accumulator, reward).map_err(|source| {
                    RuntimeError::Policy {
                        domain: agent.domain,
                        epoch,
                        source,
                    }
                })?;
                agent.updates += 1;
            }
        }
        self.in_batch = 0;
        self.upload();
        Ok(())
    }

    fn upload(&mut self) {
        for agent in &self.agents {
            sync_to_central(agent, &mut self.registry);
        }
        self.registry.exchange_all();
        if self.config.fuse {
            if let Some(fused) = self.registry.fused_parameters() {
                for agent in &mut self.agents {
                    agent.params.omega = fused.omega;
                    agent.params.bias = fused.bias;
                }
            }
        }
    }

    fn params(&self) -> Vec<(EdgeDomainId, PolicyParameters)> {
        self.agents.iter().map(|a| (a.domain, a.params)).collect()
    }
}

/// Trains one agent per edge domain by replaying `workload` against a
/// fresh copy of `substrate` each epoch.
pub fn train(
    substrate: &SubstrateNetwork,
    workload: &[FunctionRequest],
    partition: &Partition,
    config: &TrainConfig,
) -> Result<TrainOutcome, RuntimeError> {
    config.validate()?;
    check_sorted(workload)?;
    let mut init_rng = stream(config.seed, INIT_STREAM);
    let agents = build_agents(substrate, partition, |_| {
        Ok(PolicyParameters::random(&mut init_rng, config.alpha))
    })?;
    let mut t = Trainer {
        config,
        placed: vec![false; agents.len()],
        agents,
        partition,
        registry: CentralRegistry::new(),
        in_batch: 0,
        acceptance: 0.5,
    };
    let initial = t.params();
    let mut rng = stream(config.seed, SAMPLE_STREAM);
    let events = event_stream(workload);
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut orch = Orchestrator::new(substrate.clone(), workload);
        let mut reward = 0.0;
        let mut revenue_seen = 0u64;
        for event in &events {
            let before = Counters::of(&orch.ledger);
            let mut selector = DdrlSelector::sampling(&mut t.agents, t.partition, &mut rng, event.time);
            let result = orch.step(event, &mut selector)?;
            let grads = selector.into_gradients();
            if let StepResult::Arrival { request_id, outcome, .. } = &result {
                let revenue = orch.request(*request_id).map_or(0, request_revenue);
                revenue_seen += revenue;
                let after = Counters::of(&orch.ledger);
                let scale = if config.normalize_reward {
                    (revenue_seen as f64 / after.arrived as f64).max(1.0)
                } else {
                    1.0
                };
                reward = objective(after, event.time, scale);
                let gain = acceptance_gain(before, after, revenue, event.time, scale);
                t.stack(&grads, gain, outcome.is_accepted());
                if t.in_batch == config.batch_size {
                    t.flush(epoch, reward)?;
                }
            }
        }
        t.flush(epoch, reward)?;
        epochs.push(EpochSummary::of(epoch, &orch.ledger));
    }
    Ok(TrainOutcome {
        initial,
        params: t.params(),
        epochs,
        updates: t.agents.iter().map(|a| (a.domain, a.updates)).collect(),
        registry: t.registry,
    })
}

/// Node-selection strategy for [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub enum Algorithm<'p> {
    Ddrl(&'p [(EdgeDomainId, PolicyParameters)]),
    Nrmvne,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub series: Vec<MetricSample>,
    pub summary: MetricSample,
    pub stats: RunStats,
    /// Substrate after every event, including the final departures.
    pub final_network: SubstrateNetwork,
}

/// What an observer of [`evaluate_observed`] sees after each event.
pub struct Observation<'a> {
    pub event: &'a WorkloadEvent,
    pub request: &'a FunctionRequest,
    /// State before the event, when requested.
    pub pre: Option<&'a SubstrateNetwork>,
    pub post: &'a SubstrateNetwork,
    pub result: &'a StepResult,
}

pub fn evaluate(
    substrate: &SubstrateNetwork,
    workload: &[FunctionRequest],
    partition: &Partition,
    algorithm: Algorithm<'_>,
) -> Result<EvalOutcome, RuntimeError> {
    evaluate_observed(substrate, workload, partition, algorithm, false, &mut |_| {})
}

/// Single pass over the event stream. DDRL agents pick the most probable
/// node.
pub fn evaluate_observed(
    substrate: &SubstrateNetwork,
    workload: &[FunctionRequest],
    partition: &Partition,
    algorithm: Algorithm<'_>,
    keep_pre: bool,
    observer: &mut dyn FnMut(&Observation<'_>),
) -> Result<EvalOutcome, RuntimeError> {
    check_sorted(workload)?;
    let mut agents = match algorithm {
        Algorithm::Ddrl(params) => {
            if let Some((d, _)) = params
                .iter()
                .find(|(d, _)| !partition.domains().iter().any(|x| x.id == *d))
            {
                return Err(RuntimeError::UnknownAgent(*d));
            }
            build_agents(substrate, partition, |d| {
                params
                    .iter()
                    .find(|(id, _)| *id == d.id)
                    .map(|(_, p)| *p)
                    .ok_or(RuntimeError::MissingAgent(d.id))
            })?
        }
        _ => Vec::new(),
    };
    let mut random = match algorithm {
        Algorithm::Random { seed } => Some(RandomSelector::new(seed)),
        _ => None,
    };
    let mut orch = Orchestrator::new(substrate.clone(), workload);
    for event in event_stream(workload) {
        let pre = keep_pre.then(|| orch.network.clone());
        let result = match algorithm {
            Algorithm::Ddrl(_) => orch.step(&event, &mut DdrlSelector::greedy(&mut agents, partition, event.time))?,
            Algorithm::Nrmvne => orch.step(&event, &mut Nrmvne)?,
            Algorithm::Random { .. } => orch.step(&event, random.as_mut().expect("random selector"))?,
        };
        observer(&Observation {
            event: &event,
            request: orch.request(event.request_id).expect("stepped request exists"),
            pre: pre.as_ref(),
            post: &orch.network,
            result: &result,
        });
    }
    Ok(EvalOutcome {
        summary: orch.ledger.sample(),
        series: orch.ledger.series,
        stats: orch.stats,
        final_network: orch.network,
    })
}
