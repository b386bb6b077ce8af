//! Revenue, cost and the running long-term indexes: average revenue (AR),
//! revenue-to-cost ratio (R/C), acceptance rate (ACR) and their sum O.

use std::io::Write;

use crate::embedding::EmbeddingRecord;
use crate::workload::FunctionRequest;

/// Total demanded resources: node CPU and storage plus link bandwidth.
pub fn request_revenue(request: &FunctionRequest) -> u64 {
    let nodes: u64 = request.nodes.iter().map(|n| n.cpu_demand + n.sto_demand).sum();
    let links: u64 = request.links.iter().map(|l| l.bw_demand).sum();
    nodes + links
}

/// Like revenue, but each link's bandwidth is paid once per hop.
pub fn record_cost(record: &EmbeddingRecord) -> u64 {
    let nodes: u64 = record.node_map.iter().map(|m| m.cpu + m.sto).sum();
    let links: u64 = record
        .link_map
        .iter()
        .map(|m| m.bw * m.hops() as u64)
        .sum();
    nodes + links
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Accepted { revenue: u64, cost: u64 },
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub time: f64,
    pub ar: f64,
    pub rc: f64,
    pub acr: f64,
    pub objective: f64,
    pub accepted: u64,
    pub arrived: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("time regression: ledger at {current}, event at {event}")]
pub struct TimeRegression {
    pub current: f64,
    pub event: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLedger {
    pub cumulative_revenue: u64,
    pub cumulative_cost: u64,
    pub accepted_count: u64,
    pub arrived_count: u64,
    pub current_time: f64,
    pub series: Vec<MetricSample>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl MetricsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the conclusion of one arrival at `time` and appends a sample.
    pub fn observe(&mut self, outcome: Outcome, time: f64) -> Result<MetricSample, TimeRegression> {
        if time < self.current_time {
            return Err(TimeRegression {
                current: self.current_time,
                event: time,
            });
        }
        self.current_time = time;
        self.arrived_count += 1;
        if let Outcome::Accepted { revenue, cost } = outcome {
            self.accepted_count += 1;
            self.cumulative_revenue += revenue;
            self.cumulative_cost += cost;
        }
        let sample = self.sample();
        self.series.push(sample);
        Ok(sample)
    }

    pub fn ar(&self) -> f64 {
        ratio(self.cumulative_revenue as f64, self.current_time)
    }

    pub fn rc(&self) -> f64 {
        ratio(self.cumulative_revenue as f64, self.cumulative_cost as f64)
    }

    pub fn acr(&self) -> f64 {
        ratio(self.accepted_count as f64, self.arrived_count as f64)
    }

    pub fn objective(&self) -> f64 {
        self.ar() + self.rc() + self.acr()
    }

    /// Current values without recording anything.
    pub fn sample(&self) -> MetricSample {
        MetricSample {
            time: self.current_time,
            ar: self.ar(),
            rc: self.rc(),
            acr: self.acr(),
            objective: self.objective(),
            accepted: self.accepted_count,
            arrived: self.arrived_count,
        }
    }
}

pub const SERIES_HEADER: &str = "time,ar,rc,acr,objective,accepted,arrived";

pub fn write_series_csv<W: Write>(series: &[MetricSample], sink: &mut W) -> std::io::Result<()> {
    writeln!(sink, "{SERIES_HEADER}")?;
    for s in series {
        writeln!(
            sink,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            s.time, s.ar, s.rc, s.acr, s.objective, s.accepted, s.arrived
        )?;
    }
    Ok(())
}

/// Acceptance rate of the arrivals recorded in `series[range]`.
pub fn windowed_acceptance(series: &[MetricSample], range: std::ops::Range<usize>) -> f64 {
    if range.is_empty() {
        return 0.0;
    }
    let (acc0, arr0) = match range.start {
        0 => (0, 0),
        i => (series[i - 1].accepted, series[i - 1].arrived),
    };
    let last = &series[range.end - 1];
    ratio((last.accepted - acc0) as f64, (last.arrived - arr0) as f64)
}
