use std::fmt;

use crate::substrate::{DomainId, NodeId};

/// A malformed line in one of the text interchange formats.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Structural problems with a substrate graph.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("node ids must be consecutive from 0: expected {expected}, found {found}")]
    NonConsecutiveNode { expected: NodeId, found: NodeId },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate link {0}-{1}")]
    DuplicateLink(NodeId, NodeId),
    #[error("link references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("available {available} exceeds capacity {capacity}")]
    AvailableExceedsCapacity { available: u64, capacity: u64 },
    #[error("{0} domain induced subgraph is not connected")]
    Disconnected(DomainId),
}

/// Which resource an accounting operation failed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Cpu,
    Storage,
    Bandwidth,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Storage => "storage",
            Resource::Bandwidth => "bandwidth",
        })
    }
}

/// Failures of single-step allocate/release operations. The network is
/// never modified when one of these is returned.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResourceError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("insufficient {resource} on node {node}: requested {requested}, available {available}")]
    InsufficientNode {
        node: NodeId,
        resource: Resource,
        requested: u64,
        available: u64,
    },
    #[error("insufficient bandwidth on link {a}-{b}: requested {requested}, available {available}")]
    InsufficientBandwidth {
        a: NodeId,
        b: NodeId,
        requested: u64,
        available: u64,
    },
    #[error("over-release of {resource} on node {node}")]
    NodeOverRelease { node: NodeId, resource: Resource },
    #[error("over-release of bandwidth on link {a}-{b}")]
    LinkOverRelease { a: NodeId, b: NodeId },
    #[error("broken path: {a} and {b} are not adjacent")]
    BrokenPath { a: NodeId, b: NodeId },
    #[error("path must contain at least two nodes")]
    PathTooShort,
}
