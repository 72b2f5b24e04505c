//! Host-side table of serialized environment states, indexed by node id.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::tree::NodeId;

/// Fixed-capacity table of `gamma`-byte state records.
///
/// Slots are write-once between flushes, so `write` takes `&self` and
/// concurrent contexts may fill distinct slots without locking. A second
/// write to the same slot is rejected rather than overwriting.
#[derive(Debug)]
pub struct StateTable {
    slots: Vec<OnceLock<Box<[u8]>>>,
    gamma: usize,
}

impl StateTable {
    pub fn new(capacity: usize, gamma: usize) -> Self {
        StateTable { slots: (0..capacity).map(|_| OnceLock::new()).collect(), gamma }
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    fn slot(&self, id: NodeId) -> Result<&OnceLock<Box<[u8]>>> {
        self.slots.get(id.index()).ok_or(Error::UnknownNode(id))
    }

    pub fn read(&self, id: NodeId) -> Result<&[u8]> {
        self.slot(id)?.get().map(|b| &b[..]).ok_or(Error::EmptyStateSlot(id))
    }

    pub fn write(&self, id: NodeId, bytes: &[u8]) -> Result<()> {
        if bytes.len() != self.gamma {
            return Err(Error::StateLength { expected: self.gamma, got: bytes.len() });
        }
        self.slot(id)?
            .set(bytes.to_vec().into_boxed_slice())
            .map_err(|_| Error::OccupiedStateSlot(id))
    }

    pub fn is_occupied(&self, id: NodeId) -> bool {
        self.slots.get(id.index()).is_some_and(|s| s.get().is_some())
    }

    pub fn erase(&mut self, id: NodeId) {
        if let Some(s) = self.slots.get_mut(id.index()) {
            s.take();
        }
    }

    pub fn occupancy(&self) -> usize {
        self.slots.iter().filter(|s| s.get().is_some()).count()
    }

    /// Keep only the state of `keep`, moved to slot `root`.
    pub fn flush_to(&mut self, keep: NodeId, root: NodeId) -> Result<()> {
        let kept = self
            .slots
            .get_mut(keep.index())
            .ok_or(Error::UnknownNode(keep))?
            .take()
            .ok_or(Error::EmptyStateSlot(keep))?;
        for s in &mut self.slots {
            s.take();
        }
        self.slot(root)?.set(kept).map_err(|_| Error::OccupiedStateSlot(root))
    }
}
