//! Strategy tables and the per-segment central servers that collect
//! agent parameters and tables. Only parameter and feature payloads ever
//! enter the registry.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::ParseError;
use crate::features::FeatureMatrix;
use crate::policy::{self, PolicyParameters, FEATURES};
use crate::substrate::{content_lines, DomainId};

use super::{DomainAgent, EdgeDomainId};

/// Raw feature snapshot of one edge domain, refreshed on every extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    pub domain: EdgeDomainId,
    pub snapshot: FeatureMatrix,
    pub version: u64,
    pub timestamp: f64,
}

impl StrategyTable {
    pub fn new(domain: EdgeDomainId, snapshot: FeatureMatrix, timestamp: f64) -> Self {
        Self {
            domain,
            snapshot,
            version: 1,
            timestamp,
        }
    }

    pub fn refresh(&mut self, snapshot: FeatureMatrix, timestamp: f64) {
        debug_assert!(!snapshot.normalized);
        self.snapshot = snapshot;
        self.version += 1;
        self.timestamp = timestamp;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub domain: EdgeDomainId,
    pub params: PolicyParameters,
    pub table: StrategyTable,
    pub version: u64,
}

/// Central server of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentServer {
    pub segment: DomainId,
    pub entries: BTreeMap<EdgeDomainId, RegistryEntry>,
    /// Latest tables received from other segments' servers.
    pub shared: BTreeMap<EdgeDomainId, StrategyTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub from: DomainId,
    pub to: DomainId,
    pub domains: Vec<EdgeDomainId>,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralRegistry {
    pub servers: [SegmentServer; 3],
    pub version: u64,
    pub exchange_log: Vec<Exchange>,
}

impl Default for CentralRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl CentralRegistry {
    pub fn new() -> Self {
        let server = |segment| SegmentServer {
            segment,
            entries: BTreeMap::new(),
            shared: BTreeMap::new(),
        };
        Self {
            servers: DomainId::ALL.map(server),
            version: 0,
            exchange_log: Vec::new(),
        }
    }

    pub fn server(&self, segment: DomainId) -> &SegmentServer {
        &self.servers[segment.index()]
    }

    pub fn entry(&self, domain: EdgeDomainId) -> Option<&RegistryEntry> {
        self.servers.iter().find_map(|s| s.entries.get(&domain))
    }

    /// Copies the latest tables of `from`'s server into `to`'s server.
    pub fn exchange(&mut self, from: DomainId, to: DomainId) {
        let tables: Vec<StrategyTable> = self.servers[from.index()]
            .entries
            .values()
            .map(|e| e.table.clone())
            .collect();
        let domains = tables.iter().map(|t| t.domain).collect();
        let target = &mut self.servers[to.index()];
        for t in tables {
            target.shared.insert(t.domain, t);
        }
        self.exchange_log.push(Exchange {
            from,
            to,
            domains,
            version: self.version,
        });
    }

    /// Every server shares with every other.
    pub fn exchange_all(&mut self) {
        for from in DomainId::ALL {
            for to in DomainId::ALL {
                if from != to {
                    self.exchange(from, to);
                }
            }
        }
    }

    /// Mean of every registered agent's weights, with the first entry's
    /// learning rate.
    pub fn fused_parameters(&self) -> Option<PolicyParameters> {
        let entries: Vec<&RegistryEntry> = self.servers.iter().flat_map(|s| s.entries.values()).collect();
        let first = entries.first()?;
        let mut omega = [0.0; FEATURES];
        let mut bias = 0.0;
        for e in &entries {
            for (acc, w) in omega.iter_mut().zip(e.params.omega) {
                *acc += w;
            }
            bias += e.params.bias;
        }
        let n = entries.len() as f64;
        omega.iter_mut().for_each(|w| *w /= n);
        Some(PolicyParameters {
            omega,
            bias: bias / n,
            alpha: first.params.alpha,
        })
    }

    /// Text dump: per segment, each agent's parameter section followed by
    /// its raw strategy table.
    pub fn dump<W: Write>(&self, sink: &mut W) -> std::io::Result<()> {
        writeln!(sink, "REGISTRY {}", self.version)?;
        for server in &self.servers {
            writeln!(sink, "SEGMENT {}", server.segment.code())?;
            for e in server.entries.values() {
                writeln!(sink, "AGENT {} VERSION {}", e.domain, e.version)?;
                policy::write_section(&e.params, sink)?;
                write_table(&e.table, sink)?;
            }
            for t in server.shared.values() {
                writeln!(sink, "SHARED {}", t.domain)?;
                write_table(t, sink)?;
            }
        }
        Ok(())
    }
}

fn write_table<W: Write>(t: &StrategyTable, sink: &mut W) -> std::io::Result<()> {
    writeln!(
        sink,
        "TABLE {} {} {:.16e} {}",
        t.domain,
        t.version,
        t.timestamp,
        t.snapshot.len()
    )?;
    for (node, row) in t.snapshot.node_order.iter().zip(&t.snapshot.rows) {
        writeln!(
            sink,
            "{} {} {} {} {:.16e}",
            node, row.cpu, row.sto, row.bw_sum, row.ad
        )?;
    }
    Ok(())
}

/// Stores copies of the agent's parameters and strategy table.
pub fn sync_to_central(agent: &DomainAgent, registry: &mut CentralRegistry) {
    registry.version += 1;
    let entry = RegistryEntry {
        domain: agent.domain,
        params: agent.params,
        table: agent.strategy_table.clone(),
        version: registry.version,
    };
    registry.servers[agent.segment.index()]
        .entries
        .insert(agent.domain, entry);
}

/// Checks that a registry dump contains nothing but registry headers,
/// parameter sections and feature rows.
pub fn validate_dump(text: &str) -> Result<(), ParseError> {
    let lines = content_lines(text.as_bytes())?;
    let mut iter = lines.iter().peekable();
    let number = |s: &str, line: usize| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ParseError::new(line, format!("invalid number `{s}`")))
    };
    let Some((line, first)) = iter.next() else {
        return Err(ParseError::new(0, "empty registry dump"));
    };
    match first.split_whitespace().collect::<Vec<_>>()[..] {
        ["REGISTRY", v] if v.parse::<u64>().is_ok() => {}
        _ => return Err(ParseError::new(*line, "expected `REGISTRY <version>`")),
    }
    while let Some((line, text)) = iter.next() {
        let parts: Vec<&str> = text.split_whitespace().collect();
        match parts[..] {
            ["SEGMENT", code] if code.parse::<u8>().ok().and_then(DomainId::from_code).is_some() => {}
            ["AGENT", d, "VERSION", v] if d.parse::<u32>().is_ok() && v.parse::<u64>().is_ok() => {
                policy::read_section(&mut iter, *line)?;
            }
            ["SHARED", d] if d.parse::<u32>().is_ok() => {}
            ["TABLE", d, v, t, rows] => {
                d.parse::<u32>()
                    .ok()
                    .and(v.parse::<u64>().ok())
                    .ok_or_else(|| ParseError::new(*line, "invalid TABLE header"))?;
                number(t, *line)?;
                let rows: usize = rows
                    .parse()
                    .map_err(|_| ParseError::new(*line, "invalid TABLE row count"))?;
                for _ in 0..rows {
                    let (line, row) = iter
                        .next()
                        .ok_or_else(|| ParseError::new(*line, "truncated TABLE"))?;
                    let fields: Vec<&str> = row.split_whitespace().collect();
                    if fields.len() != 1 + FEATURES || fields[0].parse::<usize>().is_err() {
                        return Err(ParseError::new(*line, "TABLE rows are `<node> <cpu> <sto> <bw> <ad>`"));
                    }
                    for f in &fields[1..] {
                        number(f, *line)?;
                    }
                }
            }
            _ => return Err(ParseError::new(*line, format!("unexpected registry content `{text}`"))),
        }
    }
    Ok(())
}
