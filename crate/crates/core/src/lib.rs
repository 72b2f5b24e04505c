//! Tree-parallel Monte-Carlo Tree Search with a cycle-level model of an
//! SRAM-based in-tree operation accelerator.
//!
//! The tree ([`tree::UctTree`]) holds only statistics and cached fixed-point
//! edge weights; environment states live in a host-side
//! [`state_table::StateTable`]. Three engines drive the same search and are
//! required to agree bit for bit: the serialized [`reference`] engine, the
//! [`accel`] simulator, and the mutex-based CPU baseline in [`bsp`].

pub mod accel;
pub mod bench;
pub mod bsp;
pub mod config;
pub mod env;
pub mod error;
pub mod fixed;
pub mod host;
pub mod policy;
pub mod reference;
pub mod state_table;
pub mod tree;

pub use error::{Error, Result};
pub use fixed::{FixedFormat, FixedWeight};
pub use policy::{UctParams, VirtualLoss};
pub use reference::{SearchConfig, SelectionTrace};
pub use state_table::StateTable;
pub use tree::{NodeId, TreeConfig, UctTree};
