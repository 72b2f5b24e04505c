//! Environment abstraction and the bundled toy environments.
//!
//! The runtime stores states as fixed-size byte records in the State Table,
//! so environments are used through the byte-level [`StateEnv`] trait; the
//! typed [`Environment`] trait is what each game implements.

mod bandit;
mod counting;
mod gomoku;

use std::fmt::Debug;
use std::sync::Arc;

use thiserror::Error;

pub use bandit::{BanditConfig, BanditState, BanditTree};
pub use counting::{CountingGame, CountingState};
pub use gomoku::{Gomoku, GomokuState, BOARD_CELLS, BOARD_SIDE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action} outside [0, {count})")]
    InvalidAction { action: usize, count: usize },
    #[error("malformed state encoding: {0}")]
    Malformed(String),
    #[error("unknown environment `{0}`")]
    Unknown(String),
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    /// Fanout F.
    pub action_count: usize,
    /// Encoded state size gamma, in bytes.
    pub state_bytes: usize,
    pub reward_bounds: (f64, f64),
    pub horizon: usize,
    /// Two-player zero-sum: rewards flip sign at alternate tree levels.
    pub alternating: bool,
}

impl EnvSpec {
    pub fn reward_magnitude(&self) -> f64 {
        self.reward_bounds.0.abs().max(self.reward_bounds.1.abs())
    }
}

pub trait Environment: Send + Sync {
    type State: Clone + PartialEq + Debug;

    fn spec(&self) -> &EnvSpec;
    fn reset(&self, seed: u64) -> Self::State;
    /// Deterministic transition. Terminal states are absorbing.
    fn step(&self, state: &Self::State, action: usize) -> Result<Self::State, EnvError>;
    fn is_terminal(&self, state: &Self::State) -> bool;
    /// Play to termination with a generator seeded from `seed`. For
    /// alternating games the reward is from the first player's point of view.
    fn rollout(&self, state: &Self::State, seed: u64) -> f64;
    fn encode(&self, state: &Self::State) -> Vec<u8>;
    fn decode(&self, bytes: &[u8]) -> Result<Self::State, EnvError>;

    /// +1 if the first player is to move, -1 otherwise.
    fn player_sign(&self, _state: &Self::State) -> f64 {
        1.0
    }

    fn check_action(&self, action: usize) -> Result<(), EnvError> {
        let count = self.spec().action_count;
        if action < count {
            Ok(())
        } else {
            Err(EnvError::InvalidAction { action, count })
        }
    }
}

/// Byte-level view of an environment, as seen through the State Table.
pub trait StateEnv: Send + Sync {
    fn spec(&self) -> &EnvSpec;
    fn initial_state(&self, seed: u64) -> Vec<u8>;
    fn step_bytes(&self, state: &[u8], action: usize) -> Result<Vec<u8>, EnvError>;
    fn rollout_bytes(&self, state: &[u8], seed: u64) -> Result<f64, EnvError>;
    fn player_sign_bytes(&self, state: &[u8]) -> Result<f64, EnvError>;
    fn is_terminal_bytes(&self, state: &[u8]) -> Result<bool, EnvError>;
}

impl<E: Environment> StateEnv for E {
    fn spec(&self) -> &EnvSpec {
        Environment::spec(self)
    }

    fn initial_state(&self, seed: u64) -> Vec<u8> {
        self.encode(&self.reset(seed))
    }

    fn step_bytes(&self, state: &[u8], action: usize) -> Result<Vec<u8>, EnvError> {
        let s = self.decode(state)?;
        Ok(self.encode(&self.step(&s, action)?))
    }

    fn rollout_bytes(&self, state: &[u8], seed: u64) -> Result<f64, EnvError> {
        Ok(self.rollout(&self.decode(state)?, seed))
    }

    fn player_sign_bytes(&self, state: &[u8]) -> Result<f64, EnvError> {
        Ok(self.player_sign(&self.decode(state)?))
    }

    fn is_terminal_bytes(&self, state: &[u8]) -> Result<bool, EnvError> {
        Ok(self.is_terminal(&self.decode(state)?))
    }
}

/// Adds a fixed amount of CPU work to every rollout, to model expensive
/// simulators without changing rewards.
pub struct BusyWork {
    inner: Arc<dyn StateEnv>,
    rounds: u64,
}

impl BusyWork {
    pub fn new(inner: Arc<dyn StateEnv>, rounds: u64) -> Self {
        BusyWork { inner, rounds }
    }
}

/// Spin through `rounds` rounds of integer mixing.
pub fn burn(rounds: u64, seed: u64) -> u64 {
    let mut x = seed;
    for i in 0..rounds {
        x = splitmix64(std::hint::black_box(x ^ i));
    }
    std::hint::black_box(x)
}

impl StateEnv for BusyWork {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }
    fn initial_state(&self, seed: u64) -> Vec<u8> {
        self.inner.initial_state(seed)
    }
    fn step_bytes(&self, state: &[u8], action: usize) -> Result<Vec<u8>, EnvError> {
        self.inner.step_bytes(state, action)
    }
    fn rollout_bytes(&self, state: &[u8], seed: u64) -> Result<f64, EnvError> {
        burn(self.rounds, seed);
        self.inner.rollout_bytes(state, seed)
    }
    fn player_sign_bytes(&self, state: &[u8]) -> Result<f64, EnvError> {
        self.inner.player_sign_bytes(state)
    }
    fn is_terminal_bytes(&self, state: &[u8]) -> Result<bool, EnvError> {
        self.inner.is_terminal_bytes(state)
    }
}

/// Environment selection as it appears in a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvChoice {
    Counting { horizon: usize },
    Bandit(BanditConfig),
    Gomoku,
}

impl EnvChoice {
    pub fn by_name(name: &str) -> Result<Self, EnvError> {
        match name {
            "counting" | "counting-game" => Ok(EnvChoice::Counting { horizon: 3 }),
            "bandit" | "bandit-tree" => Ok(EnvChoice::Bandit(BanditConfig::default())),
            "gomoku" | "gomoku6" => Ok(EnvChoice::Gomoku),
            other => Err(EnvError::Unknown(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvChoice::Counting { .. } => "counting",
            EnvChoice::Bandit(_) => "bandit",
            EnvChoice::Gomoku => "gomoku",
        }
    }

    pub fn build(&self, busy_work: u64) -> Arc<dyn StateEnv> {
        let env: Arc<dyn StateEnv> = match self {
            EnvChoice::Counting { horizon } => Arc::new(CountingGame::new(*horizon)),
            EnvChoice::Bandit(cfg) => Arc::new(BanditTree::new(cfg.clone())),
            EnvChoice::Gomoku => Arc::new(Gomoku::new()),
        };
        if busy_work == 0 {
            env
        } else {
            Arc::new(BusyWork::new(env, busy_work))
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn check_padding(bytes: &[u8], from: usize) -> Result<(), EnvError> {
    if bytes[from..].iter().any(|&b| b != 0) {
        Err(EnvError::Malformed("non-zero padding".into()))
    } else {
        Ok(())
    }
}

pub(crate) fn check_len(bytes: &[u8], expected: usize) -> Result<(), EnvError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(EnvError::Malformed(format!("expected {expected} bytes, got {}", bytes.len())))
    }
}
