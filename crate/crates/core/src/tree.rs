//! Banked adjacency-list UCT.
//!
//! Storage mirrors the accelerator's SRAM layout: a root bank holding one
//! node entry whose edges are fully partitioned, then `n` subtree groups,
//! each an array of `D` level banks. Child `k` of the root belongs to group
//! `k mod n`; every descendant stays in its ancestor's group, and a node at
//! depth `i` lives in level bank `i` of that group. Node ids come from a
//! per-step monotone counter and double as State Table indices.

use std::fmt;

use crate::error::{Error, Result};
use crate::fixed::FixedWeight;
use crate::state_table::StateTable;

/// Node index; also the node's State Table slot.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Default cap on the modeled SRAM footprint of the level banks.
pub const DEFAULT_MEMORY_CAP: u128 = 256 << 20;

/// Largest fanout representable in the 64-bit eligibility masks.
pub const MAX_FANOUT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeConfig {
    /// Actions per state (F).
    pub fanout: usize,
    /// Maximum Selection depth (D).
    pub depth_limit: usize,
    /// Maximum nodes per MCTS step (X).
    pub budget: usize,
    /// Worker count (p).
    pub workers: usize,
    /// Subtree pipelines, `min(p, F)`.
    pub pipelines: usize,
    pub memory_cap: u128,
}

impl TreeConfig {
    pub fn new(fanout: usize, depth_limit: usize, budget: usize, workers: usize) -> Result<Self> {
        if !(2..=MAX_FANOUT).contains(&fanout) {
            return Err(Error::Config(format!("fanout must be in 2..={MAX_FANOUT}, got {fanout}")));
        }
        if depth_limit < 1 {
            return Err(Error::Config("depth limit must be at least 1".into()));
        }
        if budget < 1 || budget > u32::MAX as usize / 2 {
            return Err(Error::Config(format!("node budget {budget} out of range")));
        }
        if workers < 1 {
            return Err(Error::Config("at least one worker is required".into()));
        }
        Ok(TreeConfig {
            fanout,
            depth_limit,
            budget,
            workers,
            pipelines: workers.min(fanout),
            memory_cap: DEFAULT_MEMORY_CAP,
        })
    }

    pub fn with_memory_cap(mut self, cap: u128) -> Self {
        self.memory_cap = cap;
        self
    }

    /// Entries reserved for tree level `level` across all groups: `min(F^level, X)`.
    pub fn level_capacity(&self, level: usize) -> usize {
        capped_pow(self.fanout, level, self.budget)
    }

    /// Root children mapped to subtree group `group`.
    pub fn root_children_in_group(&self, group: usize) -> usize {
        let n = self.pipelines;
        self.fanout / n + usize::from(group < self.fanout % n)
    }

    /// Entries reserved in level bank `level` of `group`.
    pub fn bank_capacity(&self, group: usize, level: usize) -> usize {
        let roots = self.root_children_in_group(group);
        roots.saturating_mul(capped_pow(self.fanout, level - 1, self.budget)).min(self.budget)
    }

    /// Modeled bytes per node entry: a node word plus four words per edge.
    pub fn entry_bytes(&self) -> u128 {
        8 + 16 * self.fanout as u128
    }

    /// Modeled SRAM footprint of the statically allocated banks.
    pub fn sram_bytes(&self) -> u128 {
        let entries: u128 = (1..=self.depth_limit).map(|l| self.level_capacity(l) as u128).sum::<u128>() + 1;
        entries * self.entry_bytes()
    }
}

fn capped_pow(base: usize, exp: usize, cap: usize) -> usize {
    let mut acc = 1usize;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
        if acc >= cap {
            return cap;
        }
    }
    acc.min(cap)
}

/// One edge of a node entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeSlot {
    pub child: Option<NodeId>,
    /// Cached UCT weight.
    pub weight: FixedWeight,
    pub visits: u32,
    pub value_sum: f64,
    pub pending_vl: u32,
}

impl EdgeSlot {
    pub fn is_empty(&self) -> bool {
        self.child.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEntry {
    pub id: NodeId,
    pub depth: usize,
    /// Subtree group; `None` for the root.
    pub group: Option<usize>,
    pub visits: u32,
    /// Reward sum carried over from the parent edge when this node became root.
    pub value_sum: f64,
    pub expanded: usize,
    pub edges: Vec<EdgeSlot>,
}

impl NodeEntry {
    fn new(id: NodeId, depth: usize, group: Option<usize>, fanout: usize) -> Self {
        NodeEntry { id, depth, group, visits: 1, value_sum: 0.0, expanded: 0, edges: vec![EdgeSlot::default(); fanout] }
    }

    /// Mask of edges that already have a child.
    pub fn expanded_mask(&self) -> u64 {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.child.is_some())
            .fold(0, |m, (i, _)| m | (1u64 << i))
    }
}

/// Physical location of a node entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeLoc {
    Root,
    Sub { group: usize, level: usize, slot: usize },
}

/// SRAM bank identifier. Root edges are individually partitioned registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BankId {
    Root { edge: usize },
    Level { group: usize, level: usize },
}

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BankId::Root { edge } => write!(f, "root.{edge}"),
            BankId::Level { group, level } => write!(f, "g{group}.l{level}"),
        }
    }
}

#[derive(Debug, Clone)]
struct LevelBank {
    capacity: usize,
    entries: Vec<NodeEntry>,
}

/// The decision tree without environment states.
#[derive(Debug, Clone)]
pub struct UctTree {
    config: TreeConfig,
    root_id: NodeId,
    root: NodeEntry,
    /// `groups[g][level - 1]`
    groups: Vec<Vec<LevelBank>>,
    locations: Vec<Option<NodeLoc>>,
    next_id: u32,
    node_count: usize,
}

impl UctTree {
    pub fn new(config: TreeConfig, root_id: NodeId) -> Result<Self> {
        let required = config.sram_bytes();
        if required > config.memory_cap {
            return Err(Error::CapacityOverflow { required, cap: config.memory_cap });
        }
        if root_id.index() >= config.budget {
            return Err(Error::Config(format!("root id {root_id} outside budget {}", config.budget)));
        }
        let groups = (0..config.pipelines)
            .map(|g| {
                (1..=config.depth_limit)
                    .map(|l| LevelBank { capacity: config.bank_capacity(g, l), entries: Vec::new() })
                    .collect()
            })
            .collect();
        let mut tree = UctTree {
            config,
            root_id,
            root: NodeEntry::new(root_id, 0, None, config.fanout),
            groups,
            locations: vec![None; config.budget],
            next_id: 0,
            node_count: 1,
        };
        tree.locations[root_id.index()] = Some(NodeLoc::Root);
        Ok(tree)
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn root_id(&self) -> NodeId {
        self.root_id
    }

    pub fn root(&self) -> &NodeEntry {
        &self.root
    }

    pub fn root_mut(&mut self) -> &mut NodeEntry {
        &mut self.root
    }

    pub fn is_full(&self) -> bool {
        self.node_count >= self.config.budget
    }

    pub fn locate(&self, id: NodeId) -> Option<NodeLoc> {
        self.locations.get(id.index()).copied().flatten()
    }

    pub fn entry(&self, loc: NodeLoc) -> &NodeEntry {
        match loc {
            NodeLoc::Root => &self.root,
            NodeLoc::Sub { group, level, slot } => &self.groups[group][level - 1].entries[slot],
        }
    }

    pub fn entry_mut(&mut self, loc: NodeLoc) -> &mut NodeEntry {
        match loc {
            NodeLoc::Root => &mut self.root,
            NodeLoc::Sub { group, level, slot } => &mut self.groups[group][level - 1].entries[slot],
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeEntry> {
        let loc = self.locate(id).ok_or(Error::UnknownNode(id))?;
        Ok(self.entry(loc))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut NodeEntry> {
        let loc = self.locate(id).ok_or(Error::UnknownNode(id))?;
        Ok(self.entry_mut(loc))
    }

    /// Bank that stores the entry at `loc`; root entries report edge 0's bank.
    pub fn bank_of(&self, loc: NodeLoc) -> BankId {
        match loc {
            NodeLoc::Root => BankId::Root { edge: 0 },
            NodeLoc::Sub { group, level, .. } => BankId::Level { group, level },
        }
    }

    /// Subtree group serving root edge `edge`.
    pub fn group_of_root_edge(&self, edge: usize) -> usize {
        edge % self.config.pipelines
    }

    /// A node is a leaf if some child is unexpanded or it sits at depth `D`.
    pub fn is_leaf(&self, node: &NodeEntry) -> bool {
        node.expanded < self.config.fanout || node.depth >= self.config.depth_limit
    }

    /// Entries currently stored in level bank `level` of `group`.
    pub fn bank_len(&self, group: usize, level: usize) -> usize {
        self.groups[group][level - 1].entries.len()
    }

    pub fn bank_capacity(&self, group: usize, level: usize) -> usize {
        self.groups[group][level - 1].capacity
    }

    /// Id the next insertion will receive.
    pub fn next_node_id(&self) -> NodeId {
        let mut id = self.next_id;
        if id == self.root_id.0 {
            id += 1;
        }
        NodeId(id)
    }

    /// Create a child under `edge` of `parent`; the new edge starts at `init_weight`.
    pub fn insert_node(&mut self, parent: NodeId, edge: usize, init_weight: FixedWeight) -> Result<NodeId> {
        let fanout = self.config.fanout;
        if edge >= fanout {
            return Err(Error::EdgeOutOfRange { edge, fanout });
        }
        let parent_loc = self.locate(parent).ok_or(Error::UnknownNode(parent))?;
        let p = self.entry(parent_loc);
        if p.edges[edge].child.is_some() {
            return Err(Error::EdgeAlreadyExpanded { parent, edge });
        }
        if self.node_count >= self.config.budget {
            return Err(Error::BudgetExhausted { budget: self.config.budget });
        }
        let depth = p.depth + 1;
        if depth > self.config.depth_limit {
            return Err(Error::Config(format!("insertion below depth limit {}", self.config.depth_limit)));
        }
        let group = p.group.unwrap_or_else(|| self.group_of_root_edge(edge));
        let id = self.next_node_id();
        let bank = &mut self.groups[group][depth - 1];
        if bank.entries.len() >= bank.capacity {
            return Err(Error::BankFull { group, level: depth });
        }
        self.next_id = id.0 + 1;
        let slot = bank.entries.len();
        bank.entries.push(NodeEntry::new(id, depth, Some(group), fanout));
        self.locations[id.index()] = Some(NodeLoc::Sub { group, level: depth, slot });
        let p = self.entry_mut(parent_loc);
        p.edges[edge] = EdgeSlot { child: Some(id), weight: init_weight, ..EdgeSlot::default() };
        p.expanded += 1;
        self.node_count += 1;
        Ok(id)
    }

    /// End the step: the child under root edge `edge` becomes the new root and
    /// everything else, including its subtree and their states, is discarded.
    /// Returns the id the chosen child had before the flush.
    pub fn flush(&mut self, edge: usize, st: &mut StateTable) -> Result<NodeId> {
        let fanout = self.config.fanout;
        if edge >= fanout {
            return Err(Error::EdgeOutOfRange { edge, fanout });
        }
        let chosen = self.root.edges[edge].clone();
        let child = chosen.child.ok_or(Error::NoExpandedChild)?;
        let visits = self.node(child)?.visits;
        st.flush_to(child, self.root_id)?;

        for bank in self.groups.iter_mut().flatten() {
            bank.entries.clear();
        }
        self.locations.iter_mut().for_each(|l| *l = None);
        self.root = NodeEntry::new(self.root_id, 0, None, fanout);
        self.root.visits = visits;
        self.root.value_sum = chosen.value_sum;
        self.locations[self.root_id.index()] = Some(NodeLoc::Root);
        self.next_id = 0;
        self.node_count = 1;
        Ok(child)
    }

    /// All live nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeEntry> + '_ {
        self.locations.iter().filter_map(move |l| l.map(|loc| self.entry(loc)))
    }

    pub fn pending_vl_total(&self) -> u64 {
        self.nodes().flat_map(|n| n.edges.iter()).map(|e| e.pending_vl as u64).sum()
    }

    /// Check the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut seen = 0usize;
        for node in self.nodes() {
            seen += 1;
            let expanded = node.edges.iter().filter(|e| e.child.is_some()).count();
            if expanded != node.expanded {
                return Err(format!("node {}: expanded counter {} but {} children", node.id, node.expanded, expanded));
            }
            let mut child_visits = 0u64;
            for (k, e) in node.edges.iter().enumerate() {
                match e.child {
                    None => {
                        if e.visits != 0 || e.value_sum != 0.0 || e.pending_vl != 0 {
                            return Err(format!("node {}: empty edge {k} carries statistics", node.id));
                        }
                    }
                    Some(c) => {
                        let child = self.node(c).map_err(|e| e.to_string())?;
                        if child.depth != node.depth + 1 {
                            return Err(format!("node {c}: depth {} under parent depth {}", child.depth, node.depth));
                        }
                        let want_group = node.group.unwrap_or(k % self.config.pipelines);
                        if child.group != Some(want_group) {
                            return Err(format!("node {c}: in group {:?}, expected {want_group}", child.group));
                        }
                        if e.pending_vl as usize > self.config.workers {
                            return Err(format!("node {}: edge {k} has {} pending virtual losses", node.id, e.pending_vl));
                        }
                        child_visits += e.visits as u64;
                    }
                }
            }
            if (node.visits as u64) < child_visits {
                return Err(format!("node {}: N_s {} below child visit sum {child_visits}", node.id, node.visits));
            }
        }
        if seen != self.node_count {
            return Err(format!("node_count {} but {seen} reachable entries", self.node_count));
        }
        if self.node_count > self.config.budget {
            return Err(format!("node_count {} exceeds budget {}", self.node_count, self.config.budget));
        }
        for (g, banks) in self.groups.iter().enumerate() {
            for (l, bank) in banks.iter().enumerate() {
                if bank.entries.len() > bank.capacity {
                    return Err(format!("bank g{g}.l{} over capacity", l + 1));
                }
                for e in &bank.entries {
                    if e.group != Some(g) || e.depth != l + 1 {
                        return Err(format!("node {} stored in wrong bank g{g}.l{}", e.id, l + 1));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical text dump, one node per line in id order:
    /// `id depth group N expanded [child:weight_raw:N:W ...]`, with `-` for an
    /// empty edge slot and for the root's group.
    pub fn dump<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        for node in self.nodes() {
            write!(out, "{} {} ", node.id, node.depth)?;
            match node.group {
                Some(g) => write!(out, "{g}")?,
                None => out.write_char('-')?,
            }
            write!(out, " {} {} [", node.visits, node.expanded)?;
            for (k, e) in node.edges.iter().enumerate() {
                if k > 0 {
                    out.write_char(' ')?;
                }
                match e.child {
                    Some(c) => write!(out, "{c}:{}:{}:{:?}", e.weight.raw(), e.visits, e.value_sum)?,
                    None => out.write_char('-')?,
                }
            }
            out.write_str("]\n")?;
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut s = String::new();
        self.dump(&mut s).expect("writing to a String");
        s
    }

    /// 64-bit FNV-1a hash of the canonical dump.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv1a::default();
        self.dump(&mut h).expect("hashing never fails");
        h.0
    }
}

struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl fmt::Write for Fnv1a {
    fn write_str(&mut self, s: &str) -> fmt::Result {
        for b in s.bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
        Ok(())
    }
}
