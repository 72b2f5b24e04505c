use std::io;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::bsp::{throughput, Mode, StepReport, System};
use crate::config::RunConfig;
use crate::env::burn;
use crate::error::Result;

/// Per-iteration in-tree latency at one worker count. Columns ending in `_s`
/// other than the modeled ones are measured wall time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntreeRow {
    pub p: usize,
    #[serde(rename = "F")]
    pub fanout: usize,
    #[serde(rename = "D")]
    pub depth: usize,
    #[serde(rename = "X")]
    pub budget: usize,
    pub accel_iterations: usize,
    pub baseline_iterations: usize,
    pub accel_cycles: f64,
    /// Cycles over the clock plus both transfers.
    pub accel_intree_s: f64,
    pub interconnect_s: f64,
    /// Measured.
    pub baseline_intree_s: f64,
    /// Measured.
    pub st_s: f64,
    pub speedup: f64,
}

/// Throughput and time breakdown for one mode at one worker count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub p: usize,
    pub mode: String,
    pub steps: usize,
    pub iterations: usize,
    pub wall_s: f64,
    pub simulation_s: f64,
    pub other_s: f64,
    pub other_fraction: f64,
    pub intree_s: f64,
    pub interconnect_s: f64,
    pub accel_cycles: u64,
    pub throughput: f64,
}

/// One row per MCTS step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub p: usize,
    #[serde(rename = "F")]
    pub fanout: usize,
    #[serde(rename = "D")]
    pub depth: usize,
    #[serde(rename = "X")]
    pub budget: usize,
    pub mode: String,
    pub iterations: usize,
    pub wall_s: f64,
    pub accel_cycles: u64,
    pub interconnect_s: f64,
    pub throughput: f64,
}

impl StepRow {
    pub fn new(cfg: &RunConfig, r: &StepReport) -> Result<Self> {
        let tree = cfg.runtime()?.search.tree;
        Ok(StepRow {
            p: r.workers,
            fanout: tree.fanout,
            depth: tree.depth_limit,
            budget: tree.budget,
            mode: r.mode.name().to_string(),
            iterations: r.iteration_count(),
            wall_s: r.wall_s(),
            accel_cycles: r.accel_cycles(),
            interconnect_s: r.interconnect_s(),
            throughput: throughput(std::slice::from_ref(r)),
        })
    }
}

pub fn write_csv<W: io::Write, R: Serialize>(out: W, rows: &[R]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Run `cfg.steps` steps (fewer if the game ends) in `mode` at `p` workers.
pub fn run_steps(cfg: &RunConfig, mode: Mode, p: usize) -> Result<Vec<StepReport>> {
    let cfg = RunConfig { mode, workers: p, ..cfg.clone() };
    let mut sys = System::new(cfg.runtime()?, cfg.build_env())?;
    let mut out = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        if sys.root_is_terminal()? {
            break;
        }
        out.push(sys.run_step()?);
    }
    Ok(out)
}

fn per_iteration(steps: &[StepReport], f: impl Fn(&StepReport) -> f64) -> f64 {
    let n: usize = steps.iter().map(StepReport::iteration_count).sum();
    steps.iter().map(f).sum::<f64>() / n.max(1) as f64
}

fn iterations(steps: &[StepReport]) -> usize {
    steps.iter().map(StepReport::iteration_count).sum()
}

pub fn bench_intree(cfg: &RunConfig, workers: &[usize]) -> Result<Vec<IntreeRow>> {
    let tree = cfg.runtime()?.search.tree;
    let mut rows = Vec::with_capacity(workers.len());
    for &p in workers {
        let accel = run_steps(cfg, Mode::Accel, p)?;
        let base = run_steps(cfg, Mode::Cpu, p)?;
        let accel_intree = per_iteration(&accel, |s| s.intree_s());
        let base_intree = per_iteration(&base, |s| s.intree_s());
        rows.push(IntreeRow {
            p,
            fanout: tree.fanout,
            depth: tree.depth_limit,
            budget: tree.budget,
            accel_iterations: iterations(&accel),
            baseline_iterations: iterations(&base),
            accel_cycles: per_iteration(&accel, |s| s.accel_cycles() as f64),
            accel_intree_s: accel_intree,
            interconnect_s: per_iteration(&accel, StepReport::interconnect_s),
            baseline_intree_s: base_intree,
            st_s: per_iteration(&accel, StepReport::st_s),
            speedup: base_intree / accel_intree,
        });
    }
    Ok(rows)
}

pub fn throughput_row(p: usize, mode: Mode, steps: &[StepReport]) -> ThroughputRow {
    let sum = |f: fn(&StepReport) -> f64| steps.iter().map(f).sum::<f64>();
    let wall = sum(StepReport::wall_s);
    let other = sum(StepReport::other_s);
    ThroughputRow {
        p,
        mode: mode.name().to_string(),
        steps: steps.len(),
        iterations: iterations(steps),
        wall_s: wall,
        simulation_s: sum(StepReport::simulation_s),
        other_s: other,
        other_fraction: if wall > 0.0 { other / wall } else { 0.0 },
        intree_s: sum(StepReport::intree_s),
        interconnect_s: sum(StepReport::interconnect_s),
        accel_cycles: steps.iter().map(StepReport::accel_cycles).sum(),
        throughput: throughput(steps),
    }
}

pub fn bench_throughput(cfg: &RunConfig, workers: &[usize]) -> Result<Vec<ThroughputRow>> {
    let mut rows = Vec::with_capacity(2 * workers.len());
    for &p in workers {
        for mode in [Mode::Accel, Mode::Cpu] {
            rows.push(throughput_row(p, mode, &run_steps(cfg, mode, p)?));
        }
    }
    Ok(rows)
}

/// Mixing rounds that take roughly `target` on this machine.
pub fn calibrate_busy_work(target: Duration) -> u64 {
    let mut rounds = 1u64 << 12;
    loop {
        let t = Instant::now();
        burn(rounds, rounds);
        let el = t.elapsed();
        if el >= Duration::from_millis(5) || rounds >= 1 << 34 {
            let per_round = el.as_secs_f64() / rounds as f64;
            return ((target.as_secs_f64() / per_round).round() as u64).max(1);
        }
        rounds *= 4;
    }
}
