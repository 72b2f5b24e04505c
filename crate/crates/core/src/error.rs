use thiserror::Error;

use crate::tree::NodeId;

/// Errors raised by the tree, policy, and runtime layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("modeled SRAM footprint {required} bytes exceeds cap of {cap} bytes")]
    CapacityOverflow { required: u128, cap: u128 },

    #[error("node budget of {budget} nodes exhausted")]
    BudgetExhausted { budget: usize },

    #[error("edge {edge} of node {parent} is already expanded")]
    EdgeAlreadyExpanded { parent: NodeId, edge: usize },

    #[error("level bank (group {group}, level {level}) is full")]
    BankFull { group: usize, level: usize },

    #[error("node {0} does not exist")]
    UnknownNode(NodeId),

    #[error("edge index {edge} out of range for fanout {fanout}")]
    EdgeOutOfRange { edge: usize, fanout: usize },

    #[error("root has no expanded child with visits")]
    NoExpandedChild,

    #[error("state table slot {0} is empty")]
    EmptyStateSlot(NodeId),

    #[error("state table slot {0} is already occupied")]
    OccupiedStateSlot(NodeId),

    #[error("state has {got} bytes, table expects {expected}")]
    StateLength { expected: usize, got: usize },

    #[error("backup on edge without a pending virtual loss")]
    UnmatchedBackup,

    #[error("argmax over an empty eligible set")]
    EmptyEligibleSet,

    #[error("{traces} traces paired with {rewards} rewards")]
    RewardMismatch { traces: usize, rewards: usize },

    #[error("CLUT fan-in {0} outside supported range 2..=6")]
    ClutFanIn(usize),

    #[error("environment: {0}")]
    Env(#[from] crate::env::EnvError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
