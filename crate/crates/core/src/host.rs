//! Host-side work of one simulation context: State Table access, the 1-step
//! transition into the new node, and the rollout.

use std::time::{Duration, Instant};

use crate::env::{splitmix64, StateEnv};
use crate::error::{Error, Result};
use crate::reference::SelectionTrace;
use crate::state_table::StateTable;
use crate::tree::NodeId;

/// 24-bit node-id sentinel meaning "no expansion".
pub const NO_NODE: u32 = 0x00FF_FFFF;

/// What the accelerator tells context `j` through its receive-buffer slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub leaf: NodeId,
    /// First inserted node, if any.
    pub first_new: Option<NodeId>,
    /// Expanded action in single mode, inserted-child count in expand-all mode.
    pub low: u8,
}

impl Assignment {
    pub fn from_trace(t: &SelectionTrace, expand_all: bool) -> Self {
        match t.inserted.first() {
            None => Assignment { leaf: t.leaf, first_new: None, low: 0 },
            Some(&id) => {
                debug_assert!(t.inserted.windows(2).all(|w| w[1].0 == w[0].0 + 1), "expand-all ids must be contiguous");
                let low = if expand_all { t.inserted.len() } else { t.claimed[0] };
                Assignment { leaf: t.leaf, first_new: Some(id), low: low as u8 }
            }
        }
    }

    /// Two 32-bit words: leaf id, then `first_new << 8 | low`.
    pub fn to_words(self) -> [u32; 2] {
        let first = self.first_new.map_or(NO_NODE, |n| n.0);
        debug_assert!(first <= NO_NODE);
        [self.leaf.0, (first << 8) | self.low as u32]
    }

    pub fn from_words(w: [u32; 2]) -> Self {
        let first = w[1] >> 8;
        Assignment {
            leaf: NodeId(w[0]),
            first_new: (first != NO_NODE).then_some(NodeId(first)),
            low: (w[1] & 0xFF) as u8,
        }
    }
}

/// Seed of the rollout run by `worker` in a given step and iteration.
pub fn rollout_seed(run_seed: u64, step: u64, iteration: u64, worker: u64) -> u64 {
    let mut h = splitmix64(run_seed);
    for x in [step, iteration, worker] {
        h = splitmix64(h ^ x);
    }
    h
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WorkerTiming {
    /// State Table reads and writes plus the 1-step transitions.
    pub st: Duration,
    pub rollout: Duration,
}

/// CPU time consumed by the calling thread; unaffected by preemption.
#[cfg(unix)]
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[cfg(not(unix))]
pub fn thread_cpu_time() -> Duration {
    use std::sync::OnceLock;
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed()
}

/// State Table half of a context's work: read the leaf state and, when the
/// context expanded, step into each new child and store it. Returns the state
/// the rollout starts from.
pub fn prepare_worker(env: &dyn StateEnv, st: &StateTable, job: Assignment, expand_all: bool) -> Result<Vec<u8>> {
    let leaf = st.read(job.leaf)?;
    let Some(first) = job.first_new else {
        return Ok(leaf.to_vec());
    };
    let (action, count) = if expand_all { (0usize, job.low as usize) } else { (job.low as usize, 1) };
    if count == 0 {
        return Err(Error::Config("expansion with zero children".into()));
    }
    let mut first_state = None;
    for k in 0..count {
        let child = env.step_bytes(leaf, action + k)?;
        st.write(NodeId(first.0 + k as u32), &child)?;
        first_state.get_or_insert(child);
    }
    Ok(first_state.expect("count > 0"))
}

/// Run one context's share of an iteration and return its reward from the
/// root player's point of view.
pub fn simulate_worker(
    env: &dyn StateEnv,
    st: &StateTable,
    job: Assignment,
    expand_all: bool,
    seed: u64,
    root_sign: f64,
) -> Result<(f64, WorkerTiming)> {
    let t0 = Instant::now();
    let start = prepare_worker(env, st, job, expand_all)?;
    let t1 = Instant::now();
    let v = env.rollout_bytes(&start, seed)?;
    let t2 = Instant::now();
    Ok((v * root_sign, WorkerTiming { st: t1 - t0, rollout: t2 - t1 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, Gomoku};

    #[test]
    fn words_round_trip() {
        let a = Assignment { leaf: NodeId(77), first_new: Some(NodeId(0x00AB_CDEF)), low: 35 };
        assert_eq!(Assignment::from_words(a.to_words()), a);
        let none = Assignment { leaf: NodeId(3), first_new: None, low: 0 };
        assert_eq!(none.to_words()[1] >> 8, NO_NODE);
        assert_eq!(Assignment::from_words(none.to_words()), none);
    }

    #[test]
    fn expansion_writes_child_state() {
        let g = Gomoku::new();
        let st = StateTable::new(8, 432);
        st.write(NodeId(0), &g.encode(&g.reset(0))).unwrap();
        let job = Assignment { leaf: NodeId(0), first_new: Some(NodeId(1)), low: 7 };
        let (v, _) = simulate_worker(&g, &st, job, false, 9, 1.0).unwrap();
        let child = g.decode(st.read(NodeId(1)).unwrap()).unwrap();
        assert_eq!(child.board[7], 1);
        assert_eq!(v, g.rollout(&child, 9));
    }

    #[test]
    fn expand_all_writes_every_child() {
        let g = Gomoku::new();
        let st = StateTable::new(8, 432);
        st.write(NodeId(0), &g.encode(&g.reset(0))).unwrap();
        let job = Assignment { leaf: NodeId(0), first_new: Some(NodeId(2)), low: 4 };
        simulate_worker(&g, &st, job, true, 1, -1.0).unwrap();
        for k in 0..4 {
            let s = g.decode(st.read(NodeId(2 + k)).unwrap()).unwrap();
            assert_eq!(s.board[k as usize], 1);
        }
        assert!(!st.is_occupied(NodeId(6)));
    }

    #[test]
    fn seeds_differ_per_coordinate() {
        let base = rollout_seed(1, 2, 3, 4);
        assert_ne!(base, rollout_seed(1, 2, 3, 5));
        assert_ne!(base, rollout_seed(1, 2, 4, 4));
        assert_ne!(base, rollout_seed(1, 3, 3, 4));
        assert_ne!(base, rollout_seed(2, 2, 3, 4));
        assert_eq!(base, rollout_seed(1, 2, 3, 4));
    }
}
