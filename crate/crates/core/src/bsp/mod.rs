//! Bulk-synchronous host runtime.
//!
//! Each iteration has three phases separated by barriers: in-tree Selection
//! and insertion, the `p` concurrent simulations, and BackUp. Contexts talk to
//! the tree only through their own slot of the exchange buffers, and only
//! node indices and rewards cross the modeled interconnect.

mod cpu;
mod exchange;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use crate::accel::{Accelerator, Comparator, DEFAULT_F_MAX};
use crate::env::StateEnv;
use crate::error::{Error, Result};
use crate::host::{prepare_worker, rollout_seed, simulate_worker, thread_cpu_time, Assignment};
use crate::reference::{self, best_action, Claims, SearchConfig};
use crate::state_table::StateTable;
use crate::tree::{NodeId, UctTree};

pub use exchange::{Context, ExchangeBuffers, InterconnectModel, RECEIVE_SLOT_BYTES, SEND_SLOT_BYTES};

pub const DEFAULT_CLOCK_HZ: f64 = 200.0e6;
/// Default modeled cost of one host tree-memory touch.
pub const DEFAULT_TMEM: Duration = Duration::from_nanos(45);

/// Which engine performs the in-tree operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Simulated accelerator; host threads only simulate.
    Accel,
    /// Host threads share the tree under one lock.
    Cpu,
    /// Single-threaded serialized reference.
    Oracle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Accel => "accel",
            Mode::Cpu => "cpu",
            Mode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accel" => Ok(Mode::Accel),
            "cpu" | "cpu-baseline" | "baseline" => Ok(Mode::Cpu),
            "oracle" => Ok(Mode::Oracle),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeConfig {
    pub search: SearchConfig,
    pub mode: Mode,
    pub seed: u64,
    pub clock_hz: f64,
    pub interconnect: InterconnectModel,
    /// Spin per tree touch in the CPU baseline.
    pub tmem: Duration,
    pub f_max: usize,
    pub comparator: Comparator,
}

impl RuntimeConfig {
    pub fn new(search: SearchConfig, mode: Mode, seed: u64) -> Self {
        RuntimeConfig {
            search,
            mode,
            seed,
            clock_hz: DEFAULT_CLOCK_HZ,
            interconnect: InterconnectModel::default(),
            tmem: DEFAULT_TMEM,
            f_max: DEFAULT_F_MAX,
            comparator: Comparator::GreaterEqual,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

/// Timing of one iteration. The three phase durations are contiguous, so
/// they sum to the iteration's wall time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationReport {
    pub iteration: u64,
    pub inserted: usize,
    /// Selection and insertion, including the receive transfer in accel mode.
    pub select_s: f64,
    /// Concurrent State Table access, 1-step simulation, and rollouts.
    pub sim_phase_s: f64,
    /// BackUp, including the send transfer in accel mode.
    pub backup_s: f64,
    pub interconnect_s: f64,
    /// State Table accesses and 1-step transitions: per-context thread CPU
    /// time, summed and spread over the usable cores.
    pub st_s: f64,
    pub accel_cycles: u64,
    pub payload_bytes: u64,
    /// Environment-state bytes crossing the interconnect; always zero.
    pub state_bytes_transferred: u64,
}

impl IterationReport {
    pub fn wall_s(&self) -> f64 {
        self.select_s + self.sim_phase_s + self.backup_s
    }

    /// Latency of the in-tree operations as seen by the host.
    pub fn intree_s(&self) -> f64 {
        self.select_s + self.backup_s + self.st_s
    }

    pub fn simulation_s(&self) -> f64 {
        (self.sim_phase_s - self.st_s).max(0.0)
    }

    pub fn other_s(&self) -> f64 {
        self.wall_s() - self.simulation_s()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub mode: Mode,
    pub workers: usize,
    pub action: usize,
    /// Digest of the tree right before the flush.
    pub digest: u64,
    pub nodes: usize,
    pub flush_cycles: u64,
    pub iterations: Vec<IterationReport>,
}

impl StepReport {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    pub fn simulations(&self) -> u64 {
        (self.iterations.len() * self.workers) as u64
    }

    fn sum(&self, f: impl Fn(&IterationReport) -> f64) -> f64 {
        self.iterations.iter().map(f).sum()
    }

    pub fn wall_s(&self) -> f64 {
        self.sum(IterationReport::wall_s)
    }

    pub fn intree_s(&self) -> f64 {
        self.sum(IterationReport::intree_s)
    }

    pub fn simulation_s(&self) -> f64 {
        self.sum(IterationReport::simulation_s)
    }

    pub fn other_s(&self) -> f64 {
        self.sum(IterationReport::other_s)
    }

    pub fn interconnect_s(&self) -> f64 {
        self.sum(|r| r.interconnect_s)
    }

    pub fn st_s(&self) -> f64 {
        self.sum(|r| r.st_s)
    }

    pub fn accel_cycles(&self) -> u64 {
        self.iterations.iter().map(|r| r.accel_cycles).sum::<u64>() + self.flush_cycles
    }
}

/// Simulation requests served per second across `steps`.
pub fn throughput(steps: &[StepReport]) -> f64 {
    let sims: u64 = steps.iter().map(StepReport::simulations).sum();
    let wall: f64 = steps.iter().map(StepReport::wall_s).sum();
    if wall > 0.0 {
        sims as f64 / wall
    } else {
        0.0
    }
}

/// Usable hardware threads on this machine.
pub fn host_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Per-context State Table CPU time, written by contexts and read after a barrier.
struct StTimes(Vec<AtomicU64>);

impl StTimes {
    fn new(p: usize) -> Self {
        StTimes((0..p).map(|_| AtomicU64::new(0)).collect())
    }

    /// Run `f` on context `j`, recording the thread CPU time it used.
    fn measure<T>(&self, j: usize, f: impl FnOnce() -> T) -> T {
        let t0 = thread_cpu_time();
        let out = f();
        self.0[j].store((thread_cpu_time().saturating_sub(t0)).as_nanos() as u64, Ordering::Relaxed);
        out
    }

    /// Summed CPU time spread over the cores that can run contexts at once.
    fn seconds(&self) -> f64 {
        let total: u64 = self.0.iter().map(|s| s.swap(0, Ordering::Relaxed)).sum();
        let lanes = self.0.len().min(host_cores()).max(1);
        total as f64 * 1e-9 / lanes as f64
    }
}

/// One search agent: tree, State Table, and the engine that drives them.
pub struct System {
    cfg: RuntimeConfig,
    env: Arc<dyn StateEnv>,
    tree: Option<UctTree>,
    st: StateTable,
    accel: Option<Accelerator>,
    step: u64,
}

impl System {
    pub fn new(cfg: RuntimeConfig, env: Arc<dyn StateEnv>) -> Result<Self> {
        let spec = env.spec();
        if spec.action_count != cfg.search.tree.fanout {
            return Err(Error::Config(format!(
                "environment `{}` has {} actions but the tree fanout is {}",
                spec.name, spec.action_count, cfg.search.tree.fanout
            )));
        }
        if cfg.search.tree.budget > crate::host::NO_NODE as usize {
            return Err(Error::Config("node budget exceeds the 24-bit receive-buffer id field".into()));
        }
        if !(cfg.clock_hz > 0.0) {
            return Err(Error::Config("clock must be positive".into()));
        }
        let root = NodeId(0);
        let tree = UctTree::new(cfg.search.tree, root)?;
        let st = StateTable::new(cfg.search.tree.budget, spec.state_bytes);
        st.write(root, &env.initial_state(cfg.seed))?;
        let accel = match cfg.mode {
            Mode::Accel => Some(Accelerator::with_comparator(cfg.search, cfg.f_max, cfg.comparator)?),
            _ => None,
        };
        Ok(System { cfg, env, tree: Some(tree), st, accel, step: 0 })
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &UctTree {
        self.tree.as_ref().expect("tree present between steps")
    }

    pub fn state_table(&self) -> &StateTable {
        &self.st
    }

    pub fn accelerator(&self) -> Option<&Accelerator> {
        self.accel.as_ref()
    }

    pub fn root_state(&self) -> Result<&[u8]> {
        self.st.read(self.tree().root_id())
    }

    pub fn root_is_terminal(&self) -> Result<bool> {
        Ok(self.env.is_terminal_bytes(self.root_state()?)?)
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Run iterations until the node budget is reached, pick the action,
    /// and flush the tree and State Table.
    pub fn run_step(&mut self) -> Result<StepReport> {
        let root_sign = self.env.player_sign_bytes(self.root_state()?)?;
        let iterations = match self.cfg.mode {
            Mode::Oracle => self.step_oracle(root_sign)?,
            Mode::Accel => self.step_accel(root_sign)?,
            Mode::Cpu => cpu::run_step(self, root_sign)?,
        };
        let tree = self.tree.as_mut().expect("tree present between steps");
        let action = best_action(tree, &self.cfg.search)?;
        let digest = tree.digest();
        let nodes = tree.node_count();
        let flush_cycles = match self.accel.as_mut() {
            Some(acc) => {
                let before = acc.ledger.flush;
                acc.flush(tree, &mut self.st, action)?;
                acc.ledger.flush - before
            }
            None => {
                tree.flush(action, &mut self.st)?;
                0
            }
        };
        let report = StepReport {
            step: self.step,
            mode: self.cfg.mode,
            workers: self.cfg.search.workers(),
            action,
            digest,
            nodes,
            flush_cycles,
            iterations,
        };
        self.step += 1;
        Ok(report)
    }

    fn step_oracle(&mut self, root_sign: f64) -> Result<Vec<IterationReport>> {
        let cfg = self.cfg.search;
        let mut reports = Vec::new();
        let mut claims = Claims::new();
        let tree = self.tree.as_mut().expect("tree present between steps");
        for it in 0..cfg.max_iterations as u64 {
            if tree.is_full() {
                break;
            }
            let t0 = Instant::now();
            claims.clear();
            let mut traces = (0..cfg.workers())
                .map(|j| reference::select(tree, &cfg, &mut claims, j))
                .collect::<Result<Vec<_>>>()?;
            reference::insert_expansions(tree, &cfg, &mut traces)?;
            let t1 = Instant::now();
            let mut rewards = Vec::with_capacity(traces.len());
            let mut st_total = Duration::ZERO;
            for t in &traces {
                let seed = rollout_seed(self.cfg.seed, self.step, it, t.worker as u64);
                let job = Assignment::from_trace(t, cfg.expand_all);
                let (v, timing) = simulate_worker(&*self.env, &self.st, job, cfg.expand_all, seed, root_sign)?;
                st_total += timing.st;
                rewards.push(v);
            }
            let t2 = Instant::now();
            reference::backup_all(tree, &cfg, &traces, &rewards)?;
            let t3 = Instant::now();
            reports.push(IterationReport {
                iteration: it,
                inserted: traces.iter().map(|t| t.inserted.len()).sum(),
                select_s: (t1 - t0).as_secs_f64(),
                sim_phase_s: (t2 - t1).as_secs_f64(),
                backup_s: (t3 - t2).as_secs_f64(),
                st_s: st_total.as_secs_f64(),
                ..IterationReport::default()
            });
        }
        Ok(reports)
    }

    fn step_accel(&mut self, root_sign: f64) -> Result<Vec<IterationReport>> {
        let cfg = self.cfg.search;
        let p = cfg.workers();
        let clock = self.cfg.clock_hz;
        let link = self.cfg.interconnect;
        let buffers = ExchangeBuffers::new(p);
        let barrier = Barrier::new(p + 1);
        let st_times = StTimes::new(p);
        let stop = AtomicBool::new(false);
        let iteration = AtomicU64::new(0);
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let (run_seed, step) = (self.cfg.seed, self.step);
        let env = &*self.env;
        let st = &self.st;
        let tree = self.tree.as_mut().expect("tree present between steps");
        let acc = self.accel.as_mut().expect("accel mode owns an accelerator");

        std::thread::scope(|s| {
            for j in 0..p {
                let (buffers, barrier, stop, iteration, failure, st_times) =
                    (&buffers, &barrier, &stop, &iteration, &failure, &st_times);
                s.spawn(move || loop {
                    barrier.wait();
                    if stop.load(Ordering::Acquire) {
                        break;
                    }
                    let ctx = buffers.context(j);
                    let start = st_times.measure(j, || prepare_worker(env, st, ctx.receive(), cfg.expand_all));
                    barrier.wait();
                    let seed = rollout_seed(run_seed, step, iteration.load(Ordering::Acquire), j as u64);
                    match start.and_then(|s| Ok(env.rollout_bytes(&s, seed)?)) {
                        Ok(v) => ctx.send(v * root_sign),
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(e);
                            ctx.send(0.0);
                        }
                    }
                    barrier.wait();
                });
            }

            let mut reports = Vec::new();
            let result = (|| -> Result<()> {
                for it in 0..cfg.max_iterations as u64 {
                    if tree.is_full() {
                        break;
                    }
                    let c0 = acc.now();
                    let mut traces = acc.run_selection(tree)?;
                    acc.run_insertion(tree, &mut traces)?;
                    let c1 = acc.now();
                    for t in &traces {
                        buffers.post(t.worker, Assignment::from_trace(t, cfg.expand_all));
                    }
                    iteration.store(it, Ordering::Release);
                    barrier.wait();
                    let tb = Instant::now();
                    barrier.wait();
                    barrier.wait();
                    let sim_phase = tb.elapsed().as_secs_f64();
                    if let Some(e) = failure.lock().unwrap().take() {
                        return Err(e);
                    }
                    let rewards = buffers.collect()?;
                    acc.run_backup(tree, &traces, &rewards)?;
                    let c2 = acc.now();
                    let (rx, tx) = buffers.payload_bytes();
                    let (rx_s, tx_s) = (link.transfer(rx), link.transfer(tx));
                    reports.push(IterationReport {
                        iteration: it,
                        inserted: traces.iter().map(|t| t.inserted.len()).sum(),
                        select_s: (c1 - c0) as f64 / clock + rx_s,
                        sim_phase_s: sim_phase,
                        backup_s: (c2 - c1) as f64 / clock + tx_s,
                        interconnect_s: rx_s + tx_s,
                        st_s: st_times.seconds(),
                        accel_cycles: c2 - c0,
                        payload_bytes: rx + tx,
                        state_bytes_transferred: 0,
                    });
                }
                Ok(())
            })();
            stop.store(true, Ordering::Release);
            barrier.wait();
            result.map(|_| reports)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CountingGame, EnvChoice};
    use crate::policy::UctParams;
    use crate::tree::TreeConfig;

    fn runtime(f: usize, d: usize, x: usize, p: usize, mode: Mode, alternating: bool) -> RuntimeConfig {
        let tree = TreeConfig::new(f, d, x, p).unwrap();
        let uct = UctParams::with_defaults(1.0, x).unwrap().alternating(alternating);
        RuntimeConfig::new(SearchConfig::new(tree, uct).unwrap(), mode, 7)
    }

    #[test]
    fn five_node_budget_takes_four_iterations() {
        let env = Arc::new(CountingGame::new(3));
        for mode in [Mode::Oracle, Mode::Accel, Mode::Cpu] {
            let mut sys = System::new(runtime(2, 3, 5, 1, mode, false), env.clone()).unwrap();
            let r = sys.run_step().unwrap();
            assert_eq!(r.iteration_count(), 4, "{mode}");
            assert_eq!(sys.tree().node_count(), 1);
            assert_eq!(sys.state_table().occupancy(), 1);
        }
    }

    #[test]
    fn modes_agree_on_gomoku() {
        let env = EnvChoice::Gomoku.build(0);
        let mut out = Vec::new();
        for mode in [Mode::Oracle, Mode::Accel, Mode::Cpu] {
            let mut sys = System::new(runtime(36, 5, 400, 8, mode, true), env.clone()).unwrap();
            let steps: Vec<_> = (0..2).map(|_| sys.run_step().unwrap()).collect();
            out.push(steps.iter().map(|r| (r.digest, r.action, r.iteration_count())).collect::<Vec<_>>());
        }
        assert_eq!(out[0], out[1]);
        assert_eq!(out[0], out[2]);
    }

    #[test]
    fn payload_is_independent_of_state_size() {
        let env = EnvChoice::Gomoku.build(0);
        let mut sys = System::new(runtime(36, 5, 200, 32, Mode::Accel, true), env).unwrap();
        let r = sys.run_step().unwrap();
        for it in &r.iterations {
            assert_eq!(it.payload_bytes, 32 * 16);
            assert_eq!(it.state_bytes_transferred, 0);
            assert!((it.interconnect_s - 8.0e-5).abs() < 1e-12);
            let sum = it.select_s + it.sim_phase_s + it.backup_s;
            assert!((it.wall_s() - sum).abs() < 1e-12);
        }
        assert!(r.accel_cycles() > 0);
    }

    #[test]
    fn more_workers_need_fewer_iterations() {
        let env = EnvChoice::by_name("bandit").unwrap().build(0);
        let counts: Vec<usize> = [1, 4, 16]
            .iter()
            .map(|&p| System::new(runtime(6, 9, 300, p, Mode::Oracle, false), env.clone()).unwrap().run_step().unwrap().iteration_count())
            .collect();
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    }

    #[test]
    fn throughput_arithmetic() {
        let it = IterationReport { select_s: 0.05, sim_phase_s: 0.1, backup_s: 0.05, ..Default::default() };
        let r = StepReport {
            step: 0,
            mode: Mode::Oracle,
            workers: 8,
            action: 0,
            digest: 0,
            nodes: 1,
            flush_cycles: 0,
            iterations: vec![it; 10],
        };
        assert!((throughput(&[r]) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn fanout_must_match_environment() {
        let env = Arc::new(CountingGame::new(3));
        assert!(System::new(runtime(3, 3, 10, 1, Mode::Oracle, false), env).is_err());
    }
}
