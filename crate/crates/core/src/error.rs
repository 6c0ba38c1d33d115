use thiserror::Error;

use crate::lattice::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {message} (node {node:?})")]
    Validation { message: String, node: Option<NodeId> },

    #[error("stage index error: ({i}, {j}) with {stages} stages")]
    StageIndex { i: usize, j: usize, stages: usize },

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("payoff table has no entry for node {0}")]
    MissingPayoff(NodeId),

    #[error("policy space too large: {free_nodes} decision nodes exceed cap {cap}")]
    Capacity { free_nodes: usize, cap: u64 },

    #[error("singular hedge at node {node}: E[a'dF^2] = {value} is below the threshold")]
    Singular { node: NodeId, value: f64 },

    #[error("degenerate quadratic weight a = {value} at node {node}")]
    DegenerateWeight { node: NodeId, value: f64 },

    #[error("degenerate variance-optimal measure at node {node}: normalizer {value}")]
    DegenerateMeasure { node: NodeId, value: f64 },

    #[error("node {node} is not {expected}")]
    NodeState { node: NodeId, expected: &'static str },

    #[error("coefficient table does not match the lattice/policy (node {0})")]
    CoefficientMismatch(NodeId),

    #[error("risk-neutral measure invalid: {0}")]
    RiskNeutral(String),

    #[error("arbitrage in model at node {0}: child prices do not straddle the node price")]
    Arbitrage(NodeId),
}
