//! Cycle-level model of the SRAM in-tree operation accelerator.

pub mod clut;
pub mod ledger;
mod sim;

pub use clut::{Clut, ClutHierarchy, Comparator};
pub use ledger::{audit, Access, BankAccess, Conflict, CycleLedger, Phase, StageVisit};
pub use sim::{Accelerator, BACKUP_CYCLES, FLUSH_CYCLES};

/// Largest CLUT fan-in used by default.
pub const DEFAULT_F_MAX: usize = 6;
