use alloc::string::String;

use crate::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown capability `{0}`")]
    UnknownCapability(String),
    #[error("node index {0} is not part of this hypergraph")]
    UnknownNode(NodeId),
    #[error("duplicate capability `{0}`")]
    DuplicateCapability(String),
    #[error("hyperarc {arc} has no sources")]
    EmptySources { arc: usize },
    #[error("hyperarc {arc} has no targets")]
    EmptyTargets { arc: usize },
    #[error("hyperarc {arc} has rate {rate} outside [0, 1]")]
    RateOutOfRange { arc: usize, rate: f64 },
    #[error("capability {0} is not derivable")]
    NotDerivable(NodeId),
    #[error("certificate was issued for hypergraph version {cert:#x}, not {graph:#x}")]
    VersionMismatch { cert: u64, graph: u64 },
    #[error("closure intersects the forbidden set; refusing to build pre-answers")]
    GateViolation,
    #[error("no template for capability `{0}`")]
    MissingTemplate(String),
    #[error("hypergraph has {nodes} nodes; brute force is capped at {cap}")]
    TooManyNodes { nodes: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
