use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accel::{Accelerator, Clut, ClutHierarchy, Comparator, BACKUP_CYCLES, FLUSH_CYCLES};
use crate::bsp::{Mode, System};
use crate::config::RunConfig;
use crate::env::{BanditConfig, EnvChoice};
use crate::fixed::FixedWeight;
use crate::host::{rollout_seed, simulate_worker, Assignment};
use crate::policy::UctParams;
use crate::reference::SearchConfig;
use crate::state_table::StateTable;
use crate::tree::{NodeId, TreeConfig, UctTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    OracleEquivalence,
    Clut,
    CycleContracts,
    VirtualLoss,
    BankAudit,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::OracleEquivalence, Suite::Clut, Suite::CycleContracts, Suite::VirtualLoss, Suite::BankAudit];

    pub fn name(self) -> &'static str {
        match self {
            Suite::OracleEquivalence => "oracle-equivalence",
            Suite::Clut => "clut-exhaustive",
            Suite::CycleContracts => "cycle-contracts",
            Suite::VirtualLoss => "vl-conservation",
            Suite::BankAudit => "bank-audit",
        }
    }

    /// Process exit code when this suite fails.
    pub fn exit_code(self) -> i32 {
        match self {
            Suite::OracleEquivalence => 10,
            Suite::Clut => 11,
            Suite::CycleContracts => 12,
            Suite::VirtualLoss => 13,
            Suite::BankAudit => 14,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: u64,
    /// First violated invariant, if any.
    pub failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "PASS {} ({} checks)", self.suite, self.checks),
            Some(m) => write!(f, "FAIL {} after {} checks: {m}", self.suite, self.checks),
        }
    }
}

/// Exit code for a set of suite results: 0, or the first failing suite's code.
pub fn exit_code(reports: &[SuiteReport]) -> i32 {
    reports.iter().find(|r| !r.passed()).map_or(0, |r| r.suite.exit_code())
}

/// What the suites sweep over.
#[derive(Debug, Clone)]
pub struct VerifyPlan {
    pub base: RunConfig,
    pub workers: Vec<usize>,
    pub envs: Vec<EnvChoice>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    /// Comparator wired into every CLUT; anything but `GreaterEqual` is a fault.
    pub comparator: Comparator,
}

impl VerifyPlan {
    pub fn from_config(base: &RunConfig) -> Self {
        VerifyPlan {
            base: base.clone(),
            workers: vec![1, 2, 8, 32],
            envs: vec![EnvChoice::Counting { horizon: 3 }, EnvChoice::Bandit(BanditConfig::default()), EnvChoice::Gomoku],
            seeds: vec![base.seed, base.seed + 1],
            steps: 2,
            comparator: Comparator::GreaterEqual,
        }
    }

    /// Desk-scale run configuration for one sweep point.
    pub fn case(&self, env: &EnvChoice, p: usize, seed: u64, mode: Mode, expand_all: bool) -> RunConfig {
        let (budget, depth) = match env {
            EnvChoice::Counting { horizon } => ((1usize << (horizon + 1)) - 1, *horizon),
            EnvChoice::Bandit(b) => (400, b.horizon.min(8)),
            EnvChoice::Gomoku => (400, 6),
        };
        RunConfig {
            env: env.clone(),
            workers: p,
            fanout: None,
            depth: Some(depth),
            budget,
            seed,
            mode,
            expand_all,
            busy_work: 0,
            tmem: std::time::Duration::ZERO,
            ..self.base.clone()
        }
    }
}

struct Checker {
    checks: u64,
    failure: Option<String>,
}

impl Checker {
    fn new() -> Self {
        Checker { checks: 0, failure: None }
    }

    /// Record a check; returns false once anything has failed.
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) -> bool {
        self.checks += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(what());
        }
        self.failure.is_none()
    }

    fn fail(&mut self, what: String) {
        self.check(false, || what);
    }

    fn report(self, suite: Suite) -> SuiteReport {
        SuiteReport { suite, checks: self.checks, failure: self.failure }
    }
}

pub fn verify(plan: &VerifyPlan) -> Vec<SuiteReport> {
    Suite::ALL.iter().map(|&s| run_suite(plan, s)).collect()
}

pub fn run_suite(plan: &VerifyPlan, suite: Suite) -> SuiteReport {
    let mut c = Checker::new();
    match suite {
        Suite::OracleEquivalence => oracle_equivalence(plan, &mut c),
        Suite::Clut => clut_exhaustive(plan, &mut c),
        Suite::CycleContracts => cycle_contracts(plan, &mut c),
        Suite::VirtualLoss => vl_conservation(plan, &mut c),
        Suite::BankAudit => bank_audit(plan, &mut c),
    }
    c.report(suite)
}

type StepKey = (u64, usize, usize);

fn run_steps(cfg: &RunConfig, steps: usize, comparator: Comparator) -> crate::Result<(Vec<StepKey>, u64)> {
    let mut rt = cfg.runtime()?;
    rt.comparator = comparator;
    let mut sys = System::new(rt, cfg.build_env())?;
    let mut out = Vec::new();
    for _ in 0..steps {
        if sys.root_is_terminal()? {
            break;
        }
        let r = sys.run_step()?;
        out.push((r.digest, r.action, r.iteration_count()));
    }
    let mismatches = sys.accelerator().map_or(0, |a| a.ledger.clut_mismatches);
    Ok((out, mismatches))
}

fn oracle_equivalence(plan: &VerifyPlan, c: &mut Checker) {
    for env in &plan.envs {
        let expand_modes: &[bool] = if matches!(env, EnvChoice::Gomoku) { &[false, true] } else { &[false] };
        for &expand_all in expand_modes {
            for &p in &plan.workers {
                for &seed in &plan.seeds {
                    let at = format!("env={} p={p} seed={seed} expand_all={expand_all}", env.name());
                    let oracle = match run_steps(&plan.case(env, p, seed, Mode::Oracle, expand_all), plan.steps, Comparator::GreaterEqual) {
                        Ok((s, _)) => s,
                        Err(e) => return c.fail(format!("oracle run failed ({at}): {e}")),
                    };
                    for mode in [Mode::Accel, Mode::Cpu] {
                        match run_steps(&plan.case(env, p, seed, mode, expand_all), plan.steps, plan.comparator) {
                            Err(e) => return c.fail(format!("{mode} run failed ({at}): {e}")),
                            Ok((steps, mismatches)) => {
                                if !c.check(mismatches == 0, || format!("CLUT argmax agreement: {mismatches} lookups disagreed ({at} mode={mode})")) {
                                    return;
                                }
                                for (k, (a, b)) in oracle.iter().zip(&steps).enumerate() {
                                    if !c.check(a.0 == b.0, || format!("tree digest equality at step {k} ({at} mode={mode})"))
                                        || !c.check(a.1 == b.1, || format!("root action equality at step {k} ({at} mode={mode})"))
                                        || !c.check(a.2 == b.2, || format!("iteration count equality at step {k} ({at} mode={mode})"))
                                    {
                                        return;
                                    }
                                }
                                if !c.check(oracle.len() == steps.len(), || format!("step count equality ({at} mode={mode})")) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn brute_argmax(w: &[FixedWeight]) -> usize {
    let mut best = 0;
    for (i, x) in w.iter().enumerate() {
        if *x > w[best] {
            best = i;
        }
    }
    best
}

fn clut_exhaustive(plan: &VerifyPlan, c: &mut Checker) {
    for f in [2usize, 3, 4, 6] {
        let clut = match Clut::build_with(f, plan.comparator) {
            Ok(t) => t,
            Err(e) => return c.fail(format!("building the f={f} table: {e}")),
        };
        let total = f.pow(f as u32);
        let mut w = vec![FixedWeight::ZERO; f];
        for code in 0..total {
            let mut x = code;
            for slot in w.iter_mut() {
                *slot = FixedWeight::from_raw((x % f) as i64);
                x /= f;
            }
            let (got, want) = (clut.lookup(&w), brute_argmax(&w));
            if !c.check(got == want, || format!("CLUT lowest-index argmax: f={f} weights {w:?} gave {got}, expected {want}")) {
                return;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.base.seed);
    for fanout in [7usize, 36] {
        let h = match ClutHierarchy::build_with(fanout, plan.base.f_max, plan.comparator) {
            Ok(h) => h,
            Err(e) => return c.fail(format!("building the F={fanout} hierarchy: {e}")),
        };
        for _ in 0..5000 {
            let w: Vec<FixedWeight> = (0..fanout).map(|_| FixedWeight::from_raw(rng.gen_range(0..8))).collect();
            let (got, want) = (h.lookup(&w), brute_argmax(&w));
            if !c.check(got == want, || format!("CLUT hierarchy argmax: F={fanout} weights {w:?} gave {got}, expected {want}")) {
                return;
            }
        }
    }
}

fn search(f: usize, d: usize, x: usize, p: usize) -> crate::Result<SearchConfig> {
    SearchConfig::new(TreeConfig::new(f, d, x, p)?, UctParams::with_defaults(1.0, x)?)
}

/// Full tree whose root weights steer every worker into pipeline 0.
fn funnel_tree(cfg: &SearchConfig) -> crate::Result<UctTree> {
    let mut tree = UctTree::new(cfg.tree, NodeId(0))?;
    let w = cfg.uct.format().to_fixed(0.5);
    let mut frontier = vec![NodeId(0)];
    for _ in 0..cfg.tree.depth_limit {
        let mut next = Vec::new();
        for &n in &frontier {
            for e in 0..cfg.tree.fanout {
                next.push(tree.insert_node(n, e, w)?);
            }
        }
        frontier = next;
    }
    let min = cfg.uct.format().min();
    for e in 1..cfg.tree.fanout {
        tree.root_mut().edges[e].weight = min;
    }
    Ok(tree)
}

fn cycle_contracts(plan: &VerifyPlan, c: &mut Checker) {
    let res = (|| -> crate::Result<()> {
        let f_max = plan.base.f_max;
        for (f, want) in [(6usize, 2u64), (36, 3)] {
            let acc = Accelerator::with_comparator(search(f, 2, 64, 1)?, f_max, plan.comparator)?;
            let got = acc.issue_interval() as u64;
            if !c.check(got == want, || format!("distributor interval for F={f}: {got} cycles, expected {want}")) {
                return Ok(());
            }
        }
        for &(f, d, p) in &[(2usize, 4usize, 1usize), (2, 4, 6), (3, 3, 7), (6, 2, 4), (6, 2, 32)] {
            let x = 2 * (0..=d).map(|l| f.pow(l as u32)).sum::<usize>();
            let cfg = search(f, d, x, p)?;
            let mut tree = funnel_tree(&cfg)?;
            let mut acc = Accelerator::with_comparator(cfg, f_max, plan.comparator)?;
            let traces = acc.run_selection(&mut tree)?;
            let (fu, du, pu, l) = (f as u64, d as u64, p as u64, acc.issue_interval() as u64);
            let want = du * (fu + 1) + (pu - 1) * (fu + 1) + l;
            let got = acc.ledger.selection;
            if !c.check(got == want, || format!("single-pipeline selection closed form F={f} D={d} p={p}: {got} != {want}")) {
                return Ok(());
            }
            for v in acc.ledger.last_visits.iter().filter(|v| v.group.is_some()) {
                let lat = v.exit - v.enter;
                if !c.check(lat == fu + 1, || format!("stage latency F+1 (one cycle per memory access): F={f} saw {lat}")) {
                    return Ok(());
                }
            }
            let before = acc.ledger.backup;
            acc.run_backup(&mut tree, &traces, &vec![0.5; p])?;
            let got = acc.ledger.backup - before;
            if !c.check(got == BACKUP_CYCLES * pu, || format!("BackUp cycles per worker: p={p} took {got}")) {
                return Ok(());
            }
        }
        let cfg = search(6, 3, 200, 8)?;
        let mut tree = UctTree::new(cfg.tree, NodeId(0))?;
        let mut st = StateTable::new(200, 8);
        st.write(NodeId(0), &[0; 8])?;
        let mut acc = Accelerator::with_comparator(cfg, f_max, plan.comparator)?;
        let mut t = acc.run_selection(&mut tree)?;
        acc.run_insertion(&mut tree, &mut t)?;
        for tr in &t {
            for &id in &tr.inserted {
                st.write(id, &[1; 8])?;
            }
        }
        acc.run_backup(&mut tree, &t, &[0.5; 8])?;
        acc.flush(&mut tree, &mut st, 0)?;
        c.check(acc.ledger.flush == FLUSH_CYCLES, || format!("flush cycles: {}", acc.ledger.flush));
        c.check(acc.ledger.conflicts.is_empty(), || "bank conflicts during cycle checks".into());
        Ok(())
    })();
    if let Err(e) = res {
        c.fail(format!("cycle contract run failed: {e}"));
    }
}

/// Drive one accelerated step with explicit per-iteration checks.
fn vl_conservation(plan: &VerifyPlan, c: &mut Checker) {
    for env_choice in &plan.envs {
        for &p in &plan.workers {
            let at = format!("env={} p={p}", env_choice.name());
            let res = (|| -> crate::Result<()> {
                let cfg = plan.case(env_choice, p, plan.base.seed, Mode::Accel, false);
                let rt = cfg.runtime()?;
                let env = cfg.build_env();
                let search = rt.search;
                let mut tree = UctTree::new(search.tree, NodeId(0))?;
                let st = StateTable::new(search.tree.budget, env.spec().state_bytes);
                st.write(NodeId(0), &env.initial_state(rt.seed))?;
                let sign = env.player_sign_bytes(st.read(NodeId(0))?)?;
                let mut acc = Accelerator::with_comparator(search, rt.f_max, plan.comparator)?;
                for it in 0..search.max_iterations as u64 {
                    if tree.is_full() {
                        break;
                    }
                    let mut traces = acc.run_selection(&mut tree)?;
                    acc.run_insertion(&mut tree, &mut traces)?;
                    let ids: Vec<NodeId> = traces.iter().flat_map(|t| t.inserted.iter().copied()).collect();
                    let distinct: HashSet<NodeId> = ids.iter().copied().collect();
                    if !c.check(distinct.len() == ids.len(), || format!("expanded node ids pairwise distinct ({at} iteration {it})")) {
                        return Ok(());
                    }
                    let reads: HashSet<NodeId> = traces.iter().map(|t| t.leaf).collect();
                    if !c.check(reads.is_disjoint(&distinct), || format!("State Table read/write sets disjoint ({at} iteration {it})")) {
                        return Ok(());
                    }
                    let mut rewards = Vec::with_capacity(p);
                    for t in &traces {
                        let seed = rollout_seed(rt.seed, 0, it, t.worker as u64);
                        let job = Assignment::from_trace(t, search.expand_all);
                        rewards.push(simulate_worker(&*env, &st, job, search.expand_all, seed, sign)?.0);
                    }
                    acc.run_backup(&mut tree, &traces, &rewards)?;
                    let pending = tree.pending_vl_total();
                    if !c.check(pending == 0, || format!("pending virtual loss is zero after BackUp ({at} iteration {it}: {pending})")) {
                        return Ok(());
                    }
                    if let Err(e) = tree.check_invariants() {
                        c.fail(format!("tree invariants ({at} iteration {it}): {e}"));
                        return Ok(());
                    }
                }
                Ok(())
            })();
            if let Err(e) = res {
                return c.fail(format!("run failed ({at}): {e}"));
            }
            if c.failure.is_some() {
                return;
            }
        }
    }
}

fn bank_audit(plan: &VerifyPlan, c: &mut Checker) {
    let p = plan.workers.iter().copied().max().unwrap_or(1);
    let mut cfg = plan.case(&EnvChoice::Gomoku, p, plan.base.seed, Mode::Accel, false);
    cfg.budget = 4000;
    let res = (|| -> crate::Result<()> {
        let mut rt = cfg.runtime()?;
        rt.comparator = plan.comparator;
        let mut sys = System::new(rt, cfg.build_env())?;
        sys.run_step()?;
        let ledger = &sys.accelerator().expect("accel mode").ledger;
        c.check(ledger.accesses_audited > 0, || "bank log is empty".into());
        c.check(ledger.conflicts.is_empty(), || {
            let k = ledger.conflicts[0];
            format!("bank conflict-free: {} conflicts, first at cycle {} on {:?} (workers {} and {})", ledger.conflicts.len(), k.cycle, k.bank, k.first, k.second)
        });
        Ok(())
    })();
    if let Err(e) = res {
        c.fail(format!("audit run failed: {e}"));
    }
}
