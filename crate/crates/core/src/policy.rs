//! UCT edge scoring, virtual loss, and BackUp edge updates.
//!
//! Edge weights are cached: an edge's weight is recomputed only when that
//! edge receives a virtual loss or a BackUp, so sibling edges keep the
//! exploration term computed from the parent visit count they last saw.

use crate::error::{Error, Result};
use crate::fixed::{integer_bits, FixedFormat, FixedWeight};
use crate::tree::EdgeSlot;

/// How a traversing worker penalizes the edges on its path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VirtualLoss {
    /// Subtract a fixed amount from the stored weight.
    Constant(f64),
    /// Count in-flight visits in both UCT denominators.
    VisitTracking,
}

/// Search parameters shared by every in-tree operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UctParams {
    pub beta: f64,
    pub virtual_loss: VirtualLoss,
    /// Upper bound on reward magnitude.
    pub v_max: f64,
    pub budget: usize,
    /// Negate the reward at every other tree level (two-player zero-sum games).
    pub alternate_sign: bool,
    format: FixedFormat,
}

impl UctParams {
    pub fn new(beta: f64, virtual_loss: VirtualLoss, v_max: f64, budget: usize) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a non-negative real, got {beta}")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::Config(format!("v_max must be positive, got {v_max}")));
        }
        if let VirtualLoss::Constant(vl) = virtual_loss {
            if !(vl > 0.0 && vl <= v_max) {
                return Err(Error::Config(format!("virtual loss {vl} outside (0, {v_max}]")));
            }
        }
        if budget < 2 {
            return Err(Error::Config("node budget must be at least 2".into()));
        }
        let format = FixedFormat::new(integer_bits(v_max, beta, budget));
        Ok(UctParams { beta, virtual_loss, v_max, budget, alternate_sign: false, format })
    }

    /// Default parameters: beta 1, constant virtual loss of 10% of `v_max`.
    pub fn with_defaults(v_max: f64, budget: usize) -> Result<Self> {
        Self::new(1.0, VirtualLoss::Constant(0.1 * v_max), v_max, budget)
    }

    pub fn alternating(mut self, on: bool) -> Self {
        self.alternate_sign = on;
        self
    }

    pub fn format(&self) -> FixedFormat {
        self.format
    }

    /// Weight given to an inserted edge before its first BackUp.
    pub fn forced_exploration(&self) -> FixedWeight {
        self.format.max()
    }

    fn vl_step(&self) -> FixedWeight {
        match self.virtual_loss {
            VirtualLoss::Constant(vl) => self.format.to_fixed(vl),
            VirtualLoss::VisitTracking => FixedWeight::ZERO,
        }
    }
}

/// `W/N + beta * sqrt(ln(N_s) / N)`.
pub fn uct_value(value_sum: f64, visits: u32, parent_visits: u32, beta: f64) -> f64 {
    debug_assert!(visits >= 1 && parent_visits >= 1);
    let n = visits as f64;
    value_sum / n + beta * ((parent_visits as f64).ln() / n).sqrt()
}

/// Weight an edge should hold given its statistics, its outstanding virtual
/// losses, and the parent's visit count.
pub fn fresh_weight(edge: &EdgeSlot, parent_visits: u32, params: &UctParams) -> FixedWeight {
    let fmt = params.format;
    match params.virtual_loss {
        VirtualLoss::Constant(_) => {
            let base = if edge.visits == 0 {
                params.forced_exploration()
            } else {
                fmt.to_fixed(uct_value(edge.value_sum, edge.visits, parent_visits, params.beta))
            };
            let penalty = params.vl_step().raw().saturating_mul(edge.pending_vl as i64);
            fmt.saturating_sub(base, FixedWeight::from_raw(penalty))
        }
        VirtualLoss::VisitTracking => {
            let effective = edge.visits + edge.pending_vl;
            if effective == 0 {
                params.forced_exploration()
            } else {
                fmt.to_fixed(uct_value(edge.value_sum, effective, parent_visits, params.beta))
            }
        }
    }
}

/// Apply one unit of virtual loss to a traversed edge.
pub fn apply_vl(edge: &mut EdgeSlot, parent_visits: u32, params: &UctParams) {
    debug_assert!(edge.child.is_some(), "virtual loss on an unexpanded edge");
    edge.pending_vl += 1;
    edge.weight = match params.virtual_loss {
        VirtualLoss::Constant(_) => params.format.saturating_sub(edge.weight, params.vl_step()),
        VirtualLoss::VisitTracking => fresh_weight(edge, parent_visits, params),
    };
}

/// Fold reward `v` into a traversed edge, recovering one virtual loss.
///
/// The caller has already incremented the parent's visit count to
/// `parent_visits`.
pub fn backup_edge(edge: &mut EdgeSlot, v: f64, parent_visits: u32, params: &UctParams) -> Result<()> {
    if edge.pending_vl == 0 {
        return Err(Error::UnmatchedBackup);
    }
    edge.pending_vl -= 1;
    edge.visits += 1;
    edge.value_sum += v;
    edge.weight = fresh_weight(edge, parent_visits, params);
    Ok(())
}

/// First BackUp of a freshly inserted edge; it carries no virtual loss.
pub fn init_edge(edge: &mut EdgeSlot, v: f64, parent_visits: u32, params: &UctParams) {
    debug_assert_eq!(edge.visits, 0);
    debug_assert!(edge.child.is_some());
    edge.visits = 1;
    edge.value_sum = v;
    edge.weight = fresh_weight(edge, parent_visits, params);
}

/// Reward credited to an edge at tree `level` (root edges are level 1).
pub fn level_reward(v_root: f64, level: usize, params: &UctParams) -> f64 {
    if params.alternate_sign && level % 2 == 0 {
        -v_root
    } else {
        v_root
    }
}

/// Index of the largest eligible weight; ties go to the lowest index.
pub fn argmax_edges(weights: &[FixedWeight], eligible: u64) -> Result<usize> {
    let mut best: Option<(usize, FixedWeight)> = None;
    for (i, &w) in weights.iter().enumerate().take(64) {
        if eligible & (1u64 << i) == 0 {
            continue;
        }
        match best {
            Some((_, bw)) if w <= bw => {}
            _ => best = Some((i, w)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyEligibleSet)
}

/// Agent action at the end of a step: the visited root edge with the highest
/// mean value (the exploitation term), compared in fixed point. Ties go to the
/// edge with more visits, then the lower index.
pub fn best_root_action(edges: &[EdgeSlot], params: &UctParams) -> Result<usize> {
    let mut best: Option<(usize, FixedWeight, u32)> = None;
    for (i, e) in edges.iter().enumerate() {
        if e.child.is_none() || e.visits == 0 {
            continue;
        }
        let mean = params.format.to_fixed(e.value_sum / e.visits as f64);
        let better = match best {
            None => true,
            Some((_, bm, bn)) => mean > bm || (mean == bm && e.visits > bn),
        };
        if better {
            best = Some((i, mean, e.visits));
        }
    }
    best.map(|(i, _, _)| i).ok_or(Error::NoExpandedChild)
}
