//! Serialized Tree-Parallel MCTS.
//!
//! Every in-tree critical region runs atomically in worker order: Selection
//! for workers `0..p`, then node insertion for `0..p`, then the simulations,
//! then BackUp for `0..p`. The accelerator model and the CPU baseline are both
//! required to reproduce these outputs exactly.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::policy::{apply_vl, argmax_edges, backup_edge, best_root_action, init_edge, level_reward, UctParams};
use crate::tree::{NodeEntry, NodeId, TreeConfig, UctTree};

/// Everything that shapes one search, independent of the execution engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub tree: TreeConfig,
    pub uct: UctParams,
    /// Insert every unexpanded child of a selected leaf instead of one.
    pub expand_all: bool,
    /// Safety cap on iterations per step, for trees that cannot reach `X`.
    pub max_iterations: usize,
}

impl SearchConfig {
    pub fn new(tree: TreeConfig, uct: UctParams) -> Result<Self> {
        if uct.budget != tree.budget {
            return Err(Error::Config(format!(
                "policy budget {} differs from tree budget {}",
                uct.budget, tree.budget
            )));
        }
        Ok(SearchConfig { tree, uct, expand_all: false, max_iterations: 2 * tree.budget })
    }

    pub fn with_expand_all(mut self, on: bool) -> Self {
        self.expand_all = on;
        self
    }

    pub fn workers(&self) -> usize {
        self.tree.workers
    }
}

/// Path walked by one worker during Selection, plus its Expansion outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionTrace {
    pub worker: usize,
    /// Traversed `(parent, edge)` pairs from the root down; at most `D`.
    pub edges: Vec<(NodeId, usize)>,
    pub leaf: NodeId,
    /// Edges of `leaf` claimed for Expansion, ascending. Empty means NONE.
    pub claimed: Vec<usize>,
    /// Nodes created for `claimed`, in the same order. Shorter than `claimed`
    /// when the node budget ran out during insertion.
    pub inserted: Vec<NodeId>,
}

impl SelectionTrace {
    /// Level of the edge that leads to a newly inserted child.
    pub fn expansion_level(&self) -> usize {
        self.edges.len() + 1
    }

    /// Tree words a software engine reads or writes for this worker's
    /// Selection, Expansion, and BackUp.
    pub fn memory_touches(&self, fanout: usize) -> u64 {
        let f = fanout as u64 + 1;
        let select = (self.edges.len() as u64 + 1) * f;
        let insert = 2 * self.inserted.len() as u64;
        let backup = 2 * self.edges.len() as u64 + if self.inserted.is_empty() { 0 } else { 2 };
        select + insert + backup
    }
}

/// Per-iteration record of edges already claimed for Expansion.
#[derive(Debug, Default, Clone)]
pub struct Claims(HashMap<NodeId, u64>);

impl Claims {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mask(&self, node: NodeId) -> u64 {
        self.0.get(&node).copied().unwrap_or(0)
    }

    pub fn mark(&mut self, node: NodeId, edges: &[usize]) {
        let m = self.0.entry(node).or_default();
        for &e in edges {
            *m |= 1u64 << e;
        }
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }
}

/// Edges a worker stopping at `leaf` claims: the lowest unexpanded,
/// unclaimed edge, or all of them in expand-all mode. Nothing at depth `D`.
pub fn choose_claims(leaf: &NodeEntry, claimed: u64, config: &SearchConfig) -> Vec<usize> {
    if leaf.depth >= config.tree.depth_limit {
        return Vec::new();
    }
    let taken = leaf.expanded_mask() | claimed;
    let free = (0..config.tree.fanout).filter(|&e| taken & (1u64 << e) == 0);
    if config.expand_all {
        free.collect()
    } else {
        free.take(1).collect()
    }
}

/// Selection for one worker: descend by stored weight through non-leaf
/// nodes, applying a virtual loss to each traversed edge, then claim.
pub fn select(tree: &mut UctTree, config: &SearchConfig, claims: &mut Claims, worker: usize) -> Result<SelectionTrace> {
    let mut edges = Vec::new();
    let mut node = tree.root_id();
    loop {
        let entry = tree.node(node)?;
        if tree.is_leaf(entry) {
            break;
        }
        let weights: Vec<_> = entry.edges.iter().map(|e| e.weight).collect();
        let k = argmax_edges(&weights, entry.expanded_mask())?;
        let entry = tree.node_mut(node)?;
        let parent_visits = entry.visits;
        apply_vl(&mut entry.edges[k], parent_visits, &config.uct);
        edges.push((node, k));
        node = entry.edges[k].child.expect("non-leaf nodes are fully expanded");
    }
    let claimed = choose_claims(tree.node(node)?, claims.mask(node), config);
    claims.mark(node, &claimed);
    Ok(SelectionTrace { worker, edges, leaf: node, claimed, inserted: Vec::new() })
}

/// Insert the claimed children of one trace while budget remains.
pub fn insert_for(tree: &mut UctTree, config: &SearchConfig, trace: &mut SelectionTrace) -> Result<()> {
    let init = config.uct.forced_exploration();
    for &e in &trace.claimed {
        if tree.is_full() {
            break;
        }
        trace.inserted.push(tree.insert_node(trace.leaf, e, init)?);
    }
    Ok(())
}

/// Insert the claimed children of every trace in worker order. Returns true
/// once the node budget is exhausted; later claims are dropped.
pub fn insert_expansions(tree: &mut UctTree, config: &SearchConfig, traces: &mut [SelectionTrace]) -> Result<bool> {
    for t in traces.iter_mut() {
        insert_for(tree, config, t)?;
    }
    Ok(tree.is_full())
}

/// BackUp for one worker with reward `v_root`, from the root player's view.
pub fn backup(tree: &mut UctTree, config: &SearchConfig, trace: &SelectionTrace, v_root: f64) -> Result<()> {
    let params = &config.uct;
    for (i, &(node, k)) in trace.edges.iter().enumerate() {
        let entry = tree.node_mut(node)?;
        entry.visits += 1;
        let ns = entry.visits;
        backup_edge(&mut entry.edges[k], level_reward(v_root, i + 1, params), ns, params)?;
    }
    if !trace.inserted.is_empty() {
        let leaf = tree.node_mut(trace.leaf)?;
        leaf.visits += 1;
        let ns = leaf.visits;
        let v = level_reward(v_root, trace.expansion_level(), params);
        init_edge(&mut leaf.edges[trace.claimed[0]], v, ns, params);
    }
    Ok(())
}

/// Pair rewards with traces and apply every BackUp in worker order.
pub fn backup_all(tree: &mut UctTree, config: &SearchConfig, traces: &[SelectionTrace], rewards: &[f64]) -> Result<()> {
    if traces.len() != rewards.len() {
        return Err(Error::RewardMismatch { traces: traces.len(), rewards: rewards.len() });
    }
    for (t, &v) in traces.iter().zip(rewards) {
        backup(tree, config, t, v)?;
    }
    Ok(())
}

/// Agent action at the end of a step.
pub fn best_action(tree: &UctTree, config: &SearchConfig) -> Result<usize> {
    best_root_action(&tree.root().edges, &config.uct)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub traces: Vec<SelectionTrace>,
    pub rewards: Vec<f64>,
    /// The budget filled up during this iteration; the step ends after it.
    pub budget_hit: bool,
}

/// One full iteration for `p` workers. `simulate` receives each trace after
/// insertion and returns the worker's reward from the root player's view.
pub fn run_iteration_serial<S>(tree: &mut UctTree, config: &SearchConfig, mut simulate: S) -> Result<IterationOutcome>
where
    S: FnMut(&SelectionTrace) -> Result<f64>,
{
    let mut claims = Claims::new();
    let mut traces = (0..config.workers())
        .map(|j| select(tree, config, &mut claims, j))
        .collect::<Result<Vec<_>>>()?;
    let budget_hit = insert_expansions(tree, config, &mut traces)?;
    let rewards = traces.iter().map(&mut simulate).collect::<Result<Vec<_>>>()?;
    backup_all(tree, config, &traces, &rewards)?;
    Ok(IterationOutcome { traces, rewards, budget_hit })
}
