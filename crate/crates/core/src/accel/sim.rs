use crate::accel::clut::{ClutHierarchy, Comparator};
use crate::accel::ledger::{Access, CycleLedger, Phase, StageVisit};
use crate::error::{Error, Result};
use crate::fixed::FixedWeight;
use crate::policy::{apply_vl, argmax_edges, backup_edge, init_edge, level_reward};
use crate::reference::{choose_claims, insert_expansions, Claims, SearchConfig, SelectionTrace};
use crate::state_table::StateTable;
use crate::tree::{BankId, NodeId, UctTree};

/// Cycles per BackUp: read every memoized entry, then write them back.
pub const BACKUP_CYCLES: u64 = 2;
pub const FLUSH_CYCLES: u64 = 2;

#[derive(Debug, Clone, Default)]
struct Memo {
    root_edge: Option<usize>,
    /// Edges below the root, at most `D - 1`.
    subtree: Vec<(BankId, NodeId, usize)>,
}

#[derive(Debug)]
struct Token {
    worker: usize,
    node: NodeId,
    group: usize,
    edges: Vec<(NodeId, usize)>,
    memo: Memo,
    claimed: Vec<usize>,
    retire: bool,
}

#[derive(Debug)]
struct Unit {
    tok: Token,
    ops: usize,
    total: usize,
    enter: u64,
    leaf: bool,
    best: Option<(usize, FixedWeight)>,
}

impl Unit {
    fn new(tok: Token, total: usize, enter: u64) -> Self {
        Unit { tok, ops: 0, total, enter, leaf: false, best: None }
    }

    fn done(&self) -> bool {
        self.ops == self.total
    }
}

/// Cycle-level model of the in-tree accelerator.
///
/// Selection runs through a worker distributor (a CLUT hierarchy over the
/// root edges) feeding `n` subtree pipelines with one stage per tree level.
/// Each stage owns a single level bank of its group, so workers in different
/// stages never touch the same bank.
#[derive(Debug, Clone)]
pub struct Accelerator {
    config: SearchConfig,
    hierarchy: ClutHierarchy,
    pub ledger: CycleLedger,
    claims: Claims,
    memos: Vec<Memo>,
    clock: u64,
}

impl Accelerator {
    pub fn new(config: SearchConfig, f_max: usize) -> Result<Self> {
        Self::with_comparator(config, f_max, Comparator::GreaterEqual)
    }

    pub fn with_comparator(config: SearchConfig, f_max: usize, comparator: Comparator) -> Result<Self> {
        let hierarchy = ClutHierarchy::build_with(config.tree.fanout, f_max, comparator)?;
        Ok(Accelerator { config, hierarchy, ledger: CycleLedger::new(), claims: Claims::new(), memos: Vec::new(), clock: 0 })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &ClutHierarchy {
        &self.hierarchy
    }

    /// Distributor latency and initiation interval: one cycle per CLUT layer
    /// plus the root virtual-loss write.
    pub fn issue_interval(&self) -> usize {
        self.hierarchy.depth() + 1
    }

    /// Cycles a worker spends in one pipeline stage.
    pub fn stage_latency(&self) -> usize {
        self.config.tree.fanout + 1
    }

    /// Current simulated cycle.
    pub fn now(&self) -> u64 {
        self.clock
    }

    /// Selection for workers `0..p`, issued in worker order.
    pub fn run_selection(&mut self, tree: &mut UctTree) -> Result<Vec<SelectionTrace>> {
        let p = self.config.workers();
        let n = self.config.tree.pipelines;
        let depth = self.config.tree.depth_limit;
        let start = self.clock;
        self.claims.clear();
        self.ledger.last_visits.clear();
        self.ledger.last_issue.clear();

        let mut results: Vec<Option<SelectionTrace>> = (0..p).map(|_| None).collect();
        self.memos = vec![Memo::default(); p];
        let mut dist: Option<Unit> = None;
        let mut latch: Vec<Option<Token>> = (0..n).map(|_| None).collect();
        let mut stages: Vec<Vec<Option<Unit>>> = (0..n).map(|_| (0..depth).map(|_| None).collect()).collect();
        let mut next = 0usize;
        let mut cycle = start;

        loop {
            for (g, pipe) in stages.iter_mut().enumerate() {
                for l in (0..depth).rev() {
                    if !pipe[l].as_ref().is_some_and(Unit::done) {
                        continue;
                    }
                    if pipe[l].as_ref().unwrap().tok.retire {
                        let u = pipe[l].take().unwrap();
                        self.visit(&u, Some(g), l + 1, cycle);
                        self.retire(u.tok, &mut results);
                    } else {
                        debug_assert!(l + 1 < depth, "depth-limit nodes are leaves");
                        if pipe[l + 1].is_none() {
                            let u = pipe[l].take().unwrap();
                            self.visit(&u, Some(g), l + 1, cycle);
                            pipe[l + 1] = Some(Unit::new(u.tok, self.stage_latency(), cycle));
                        }
                    }
                }
            }
            if dist.as_ref().is_some_and(Unit::done) {
                let u = dist.take().unwrap();
                if u.tok.retire {
                    self.visit(&u, None, 0, cycle);
                    self.retire(u.tok, &mut results);
                } else if latch[u.tok.group].is_none() {
                    self.visit(&u, None, 0, cycle);
                    let g = u.tok.group;
                    latch[g] = Some(u.tok);
                } else {
                    dist = Some(u);
                }
            }
            for (g, pipe) in stages.iter_mut().enumerate() {
                if pipe[0].is_none() {
                    if let Some(tok) = latch[g].take() {
                        pipe[0] = Some(Unit::new(tok, self.stage_latency(), cycle));
                    }
                }
            }
            if dist.is_none() && next < p {
                let tok = Token {
                    worker: next,
                    node: tree.root_id(),
                    group: 0,
                    edges: Vec::new(),
                    memo: Memo::default(),
                    claimed: Vec::new(),
                    retire: false,
                };
                self.ledger.last_issue.push(cycle);
                dist = Some(Unit::new(tok, self.issue_interval(), cycle));
                next += 1;
            }
            let busy = dist.is_some()
                || latch.iter().any(Option::is_some)
                || stages.iter().flatten().any(Option::is_some);
            if !busy {
                break;
            }

            if let Some(u) = dist.as_mut() {
                if !u.done() {
                    self.distributor_op(tree, u, cycle)?;
                }
            }
            for (g, pipe) in stages.iter_mut().enumerate() {
                for (l, slot) in pipe.iter_mut().enumerate() {
                    if let Some(u) = slot.as_mut() {
                        if !u.done() {
                            self.stage_op(tree, u, g, l + 1, cycle)?;
                        }
                    }
                }
            }
            cycle += 1;
        }

        let cycles = cycle - start;
        self.clock = cycle;
        self.ledger.close_phase(Phase::Selection, cycles, p);
        Ok(results.into_iter().map(|t| t.expect("every worker retires")).collect())
    }

    fn visit(&mut self, u: &Unit, group: Option<usize>, level: usize, exit: u64) {
        self.ledger.last_visits.push(StageVisit { worker: u.tok.worker, group, level, enter: u.enter, exit });
    }

    fn retire(&mut self, tok: Token, results: &mut [Option<SelectionTrace>]) {
        debug_assert!(tok.memo.subtree.len() < self.config.tree.depth_limit.max(1));
        self.memos[tok.worker] = tok.memo;
        results[tok.worker] = Some(SelectionTrace {
            worker: tok.worker,
            edges: tok.edges,
            leaf: tok.node,
            claimed: tok.claimed,
            inserted: Vec::new(),
        });
    }

    fn distributor_op(&mut self, tree: &mut UctTree, u: &mut Unit, cycle: u64) -> Result<()> {
        let fanout = self.config.tree.fanout;
        let worker = u.tok.worker;
        if u.ops == 0 {
            for k in 0..fanout {
                self.ledger.record(cycle, BankId::Root { edge: k }, worker, Access::Read);
            }
            let root = tree.root();
            u.leaf = tree.is_leaf(root);
            if !u.leaf {
                let weights: Vec<FixedWeight> = root.edges.iter().map(|e| e.weight).collect();
                let k = self.hierarchy.lookup(&weights);
                self.ledger.clut_lookups += 1;
                if argmax_edges(&weights, root.expanded_mask())? != k {
                    self.ledger.clut_mismatches += 1;
                }
                u.best = Some((k, weights[k]));
            }
        }
        if u.ops + 1 == u.total {
            let root_id = tree.root_id();
            if u.leaf {
                let claimed = choose_claims(tree.root(), self.claims.mask(root_id), &self.config);
                self.claims.mark(root_id, &claimed);
                for &e in &claimed {
                    self.ledger.record(cycle, BankId::Root { edge: e }, worker, Access::Write);
                }
                u.tok.claimed = claimed;
                u.tok.retire = true;
            } else {
                let (k, _) = u.best.expect("winner chosen on the first cycle");
                let root = tree.root_mut();
                let ns = root.visits;
                apply_vl(&mut root.edges[k], ns, &self.config.uct);
                self.ledger.record(cycle, BankId::Root { edge: k }, worker, Access::Write);
                u.tok.edges.push((root_id, k));
                u.tok.memo.root_edge = Some(k);
                u.tok.node = root.edges[k].child.expect("non-leaf root is fully expanded");
                u.tok.group = tree.group_of_root_edge(k);
            }
        }
        u.ops += 1;
        Ok(())
    }

    fn stage_op(&mut self, tree: &mut UctTree, u: &mut Unit, group: usize, level: usize, cycle: u64) -> Result<()> {
        let fanout = self.config.tree.fanout;
        let bank = BankId::Level { group, level };
        let worker = u.tok.worker;
        let id = u.tok.node;
        if u.ops < fanout {
            let node = tree.node(id)?;
            debug_assert_eq!((node.group, node.depth), (Some(group), level));
            self.ledger.record(cycle, bank, worker, Access::Read);
            if u.ops == 0 {
                u.leaf = tree.is_leaf(node);
            }
            if !u.leaf {
                let w = node.edges[u.ops].weight;
                if u.best.map_or(true, |(_, b)| w > b) {
                    u.best = Some((u.ops, w));
                }
            }
        } else if u.leaf {
            let claimed = choose_claims(tree.node(id)?, self.claims.mask(id), &self.config);
            if !claimed.is_empty() {
                self.ledger.record(cycle, bank, worker, Access::Write);
            }
            self.claims.mark(id, &claimed);
            u.tok.claimed = claimed;
            u.tok.retire = true;
        } else {
            let (k, _) = u.best.expect("fanout reads done");
            let node = tree.node_mut(id)?;
            let ns = node.visits;
            apply_vl(&mut node.edges[k], ns, &self.config.uct);
            self.ledger.record(cycle, bank, worker, Access::Write);
            u.tok.edges.push((id, k));
            u.tok.memo.subtree.push((bank, id, k));
            u.tok.node = node.edges[k].child.expect("non-leaf nodes are fully expanded");
        }
        u.ops += 1;
        Ok(())
    }

    /// Allocate claimed nodes in worker order. Insertions in different groups
    /// share a cycle; insertions in one group serialize. Returns true once the
    /// node budget is exhausted.
    pub fn run_insertion(&mut self, tree: &mut UctTree, traces: &mut [SelectionTrace]) -> Result<bool> {
        let base = self.clock;
        let hit = insert_expansions(tree, &self.config, traces)?;
        let mut per_group = vec![0u64; self.config.tree.pipelines];
        for t in traces.iter() {
            for (i, &id) in t.inserted.iter().enumerate() {
                let node = tree.node(id)?;
                let g = node.group.expect("inserted nodes belong to a group");
                let c = base + per_group[g];
                per_group[g] += 1;
                self.ledger.record(c, BankId::Level { group: g, level: node.depth }, t.worker, Access::Write);
                let parent_bank = if node.depth == 1 {
                    BankId::Root { edge: t.claimed[i] }
                } else {
                    BankId::Level { group: g, level: node.depth - 1 }
                };
                self.ledger.record(c, parent_bank, t.worker, Access::Write);
            }
        }
        let cycles = per_group.into_iter().max().unwrap_or(0);
        self.clock += cycles;
        self.ledger.close_phase(Phase::Insertion, cycles, traces.len());
        Ok(hit)
    }

    /// BackUp from the memoization buffers, two cycles per worker.
    pub fn run_backup(&mut self, tree: &mut UctTree, traces: &[SelectionTrace], rewards: &[f64]) -> Result<()> {
        if traces.len() != rewards.len() || traces.len() != self.memos.len() {
            return Err(Error::RewardMismatch { traces: traces.len(), rewards: rewards.len() });
        }
        let params = self.config.uct;
        let base = self.clock;
        for (j, (t, &v)) in traces.iter().zip(rewards).enumerate() {
            let memo = std::mem::take(&mut self.memos[j]);
            let mut banks = Vec::with_capacity(memo.subtree.len() + 2);
            if let Some(k) = memo.root_edge {
                banks.push(BankId::Root { edge: k });
                let root = tree.root_mut();
                root.visits += 1;
                let ns = root.visits;
                backup_edge(&mut root.edges[k], level_reward(v, 1, &params), ns, &params)?;
            }
            for (i, &(bank, id, k)) in memo.subtree.iter().enumerate() {
                banks.push(bank);
                let node = tree.node_mut(id)?;
                node.visits += 1;
                let ns = node.visits;
                backup_edge(&mut node.edges[k], level_reward(v, i + 2, &params), ns, &params)?;
            }
            if !t.inserted.is_empty() {
                let e = t.claimed[0];
                let leaf_loc = tree.locate(t.leaf).ok_or(Error::UnknownNode(t.leaf))?;
                banks.push(match tree.bank_of(leaf_loc) {
                    BankId::Root { .. } => BankId::Root { edge: e },
                    b => b,
                });
                let leaf = tree.node_mut(t.leaf)?;
                leaf.visits += 1;
                let ns = leaf.visits;
                init_edge(&mut leaf.edges[e], level_reward(v, t.expansion_level(), &params), ns, &params);
            }
            let c = base + BACKUP_CYCLES * j as u64;
            for &b in &banks {
                self.ledger.record(c, b, t.worker, Access::Read);
                self.ledger.record(c + 1, b, t.worker, Access::Write);
            }
        }
        let cycles = BACKUP_CYCLES * traces.len() as u64;
        self.clock += cycles;
        self.ledger.close_phase(Phase::Backup, cycles, traces.len());
        Ok(())
    }

    /// End-of-step flush; returns the chosen child's pre-flush id.
    pub fn flush(&mut self, tree: &mut UctTree, st: &mut StateTable, edge: usize) -> Result<NodeId> {
        let old = tree.flush(edge, st)?;
        self.clock += FLUSH_CYCLES;
        self.ledger.close_phase(Phase::Flush, FLUSH_CYCLES, 0);
        Ok(old)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::UctParams;
    use crate::reference::{self, run_iteration_serial};
    use crate::tree::TreeConfig;

    fn config(f: usize, d: usize, x: usize, p: usize) -> SearchConfig {
        let tree = TreeConfig::new(f, d, x, p).unwrap();
        SearchConfig::new(tree, UctParams::with_defaults(1.0, x).unwrap()).unwrap()
    }

    /// Complete tree of the given depth where every root edge except 0 has
    /// the minimum weight, so every worker lands in pipeline 0.
    fn funnel_tree(cfg: &SearchConfig) -> UctTree {
        let mut tree = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let w = cfg.uct.format().to_fixed(0.5);
        let mut frontier = vec![NodeId(0)];
        for _ in 0..cfg.tree.depth_limit {
            let mut next = Vec::new();
            for &n in &frontier {
                for e in 0..cfg.tree.fanout {
                    next.push(tree.insert_node(n, e, w).unwrap());
                }
            }
            frontier = next;
        }
        let min = cfg.uct.format().min();
        for e in 1..cfg.tree.fanout {
            tree.root_mut().edges[e].weight = min;
        }
        tree
    }

    #[test]
    fn single_worker_single_level() {
        let cfg = config(6, 1, 50, 1);
        let mut tree = funnel_tree(&cfg);
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        let t = acc.run_selection(&mut tree).unwrap();
        assert_eq!(t[0].edges.len(), 1);
        let stage = acc.ledger.last_visits.iter().find(|v| v.level == 1).unwrap();
        assert_eq!(stage.exit - stage.enter, 7);
        assert_eq!(acc.ledger.selection, 2 + 7);
    }

    #[test]
    fn single_pipeline_closed_form() {
        for &(f, d, p) in &[(2usize, 4usize, 1usize), (2, 4, 2), (2, 4, 5), (3, 3, 7), (6, 2, 4)] {
            let x = 2 * (0..=d).map(|l| f.pow(l as u32)).sum::<usize>();
            let cfg = config(f, d, x, p);
            let mut tree = funnel_tree(&cfg);
            let mut acc = Accelerator::new(cfg, 6).unwrap();
            let traces = acc.run_selection(&mut tree).unwrap();
            assert!(traces.iter().all(|t| t.edges.len() == d && t.edges[0].1 == 0));
            let l = acc.issue_interval() as u64;
            let (f, d, p) = (f as u64, d as u64, p as u64);
            assert_eq!(acc.ledger.selection, d * (f + 1) + (p - 1) * (f + 1) + l, "F={f} D={d} p={p}");
            let firsts: Vec<u64> =
                acc.ledger.last_visits.iter().filter(|v| v.level == 1).map(|v| v.enter).collect();
            for w in firsts.windows(2) {
                assert_eq!(w[1] - w[0], f + 1);
            }
            assert!(acc.ledger.conflicts.is_empty());
        }
    }

    #[test]
    fn distributor_interval_by_fanout() {
        assert_eq!(Accelerator::new(config(6, 2, 50, 1), 6).unwrap().issue_interval(), 2);
        assert_eq!(Accelerator::new(config(36, 2, 50, 1), 6).unwrap().issue_interval(), 3);
    }

    #[test]
    fn insertion_cycles_follow_groups() {
        // four workers claim root edges 0..4 on a fresh root, n = 4 groups
        let cfg = config(4, 2, 50, 4);
        let mut tree = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        let mut t = acc.run_selection(&mut tree).unwrap();
        acc.run_insertion(&mut tree, &mut t).unwrap();
        assert_eq!(acc.ledger.insertion, 1);
        // one worker, one insertion
        let cfg = config(4, 2, 50, 1);
        let mut tree = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        let mut t = acc.run_selection(&mut tree).unwrap();
        acc.run_insertion(&mut tree, &mut t).unwrap();
        assert_eq!(acc.ledger.insertion, 1);
        // with a single group, expand-all insertions serialize
        let cfg = config(2, 3, 50, 1).with_expand_all(true);
        let mut tree = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        for _ in 0..2 {
            let mut t = acc.run_selection(&mut tree).unwrap();
            acc.run_insertion(&mut tree, &mut t).unwrap();
            acc.run_backup(&mut tree, &t, &[0.5]).unwrap();
        }
        assert_eq!(acc.ledger.records.iter().filter(|r| r.phase == Phase::Insertion).map(|r| r.cycles).collect::<Vec<_>>(), vec![2, 2]);
    }

    #[test]
    fn backup_is_two_cycles_per_worker() {
        let cfg = config(3, 4, 500, 16);
        let mut tree = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        for _ in 0..5 {
            let mut t = acc.run_selection(&mut tree).unwrap();
            acc.run_insertion(&mut tree, &mut t).unwrap();
            let before = acc.ledger.backup;
            acc.run_backup(&mut tree, &t, &vec![0.25; 16]).unwrap();
            assert_eq!(acc.ledger.backup - before, 32);
        }
    }

    #[test]
    fn matches_reference_iteration_by_iteration() {
        for &(f, d, x, p) in &[(2, 3, 15, 1), (3, 4, 120, 2), (6, 4, 400, 8), (4, 3, 84, 32)] {
            let cfg = config(f, d, x, p);
            let mut a = UctTree::new(cfg.tree, NodeId(0)).unwrap();
            let mut b = a.clone();
            let mut acc = Accelerator::new(cfg, 6).unwrap();
            let reward = |t: &SelectionTrace| ((t.leaf.0 * 7 + t.worker as u32) % 11) as f64 / 10.0;
            for _ in 0..cfg.max_iterations {
                if a.is_full() {
                    break;
                }
                let out = run_iteration_serial(&mut a, &cfg, |t| Ok(reward(t))).unwrap();
                let mut t = acc.run_selection(&mut b).unwrap();
                let hit = acc.run_insertion(&mut b, &mut t).unwrap();
                assert_eq!(t, out.traces);
                assert_eq!(hit, out.budget_hit);
                acc.run_backup(&mut b, &t, &out.rewards).unwrap();
                assert_eq!(a.digest(), b.digest());
            }
            assert!(acc.ledger.conflicts.is_empty());
            assert_eq!(acc.ledger.clut_mismatches, 0);
            assert_eq!(reference::best_action(&a, &cfg).unwrap(), reference::best_action(&b, &cfg).unwrap());
        }
    }

    #[test]
    fn faulty_clut_is_detected() {
        let cfg = config(6, 2, 100, 4);
        let mut tree = UctTree::new(cfg.tree, NodeId(0)).unwrap();
        let mut acc = Accelerator::with_comparator(cfg, 6, Comparator::Greater).unwrap();
        for _ in 0..10 {
            let mut t = acc.run_selection(&mut tree).unwrap();
            acc.run_insertion(&mut tree, &mut t).unwrap();
            acc.run_backup(&mut tree, &t, &[0.0; 4]).unwrap();
        }
        assert!(acc.ledger.clut_mismatches > 0);
    }
}
