//! Software baseline: the in-tree operations run on host threads that take
//! turns on one lock around the shared tree.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Barrier, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::{IterationReport, StTimes, System};
use crate::error::{Error, Result};
use crate::host::{prepare_worker, rollout_seed, Assignment};
use crate::reference::{self, Claims, SelectionTrace};
use crate::tree::UctTree;

struct Shared {
    tree: UctTree,
    claims: Claims,
    traces: Vec<Option<SelectionTrace>>,
    turn: usize,
    error: Option<Error>,
}

impl Shared {
    fn fail(&mut self, e: Error) {
        self.error.get_or_insert(e);
    }
}

/// Busy-wait for `touches` modeled tree-memory accesses.
fn spin(tmem: Duration, touches: u64) {
    let until = Instant::now() + tmem * touches as u32;
    while Instant::now() < until {
        std::hint::spin_loop();
    }
}

fn wait_turn<'a>(lock: &'a Mutex<Shared>, cv: &Condvar, turn: usize) -> MutexGuard<'a, Shared> {
    let mut g = lock.lock().unwrap();
    while g.turn != turn {
        g = cv.wait(g).unwrap();
    }
    g
}

fn pass_turn(mut g: MutexGuard<'_, Shared>, cv: &Condvar) {
    g.turn += 1;
    drop(g);
    cv.notify_all();
}

pub(super) fn run_step(sys: &mut System, root_sign: f64) -> Result<Vec<IterationReport>> {
    let cfg = sys.cfg.search;
    let p = cfg.workers();
    let fanout = cfg.tree.fanout as u64 + 1;
    let tmem = sys.cfg.tmem;
    let (run_seed, step) = (sys.cfg.seed, sys.step);
    let env = &*sys.env;
    let st = &sys.st;
    let tree = sys.tree.take().expect("tree present between steps");
    let shared = Mutex::new(Shared { tree, claims: Claims::new(), traces: vec![None; p], turn: 0, error: None });
    let cv = Condvar::new();
    let barrier = Barrier::new(p + 1);
    let stop = AtomicBool::new(false);
    let iteration = AtomicU64::new(0);
    let st_times = StTimes::new(p);

    let result = std::thread::scope(|s| {
        for j in 0..p {
            let (shared, cv, barrier, stop, iteration, st_times) = (&shared, &cv, &barrier, &stop, &iteration, &st_times);
            s.spawn(move || loop {
                barrier.wait();
                if stop.load(Ordering::Acquire) {
                    break;
                }
                let mut g = wait_turn(shared, cv, j);
                if g.error.is_none() {
                    let sh = &mut *g;
                    match reference::select(&mut sh.tree, &cfg, &mut sh.claims, j) {
                        Ok(t) => {
                            spin(tmem, (t.edges.len() as u64 + 1) * fanout);
                            sh.traces[j] = Some(t);
                        }
                        Err(e) => sh.fail(e),
                    }
                }
                pass_turn(g, cv);

                let mut g = wait_turn(shared, cv, p + j);
                let sh = &mut *g;
                if let (None, Some(t)) = (&sh.error, sh.traces[j].as_mut()) {
                    match reference::insert_for(&mut sh.tree, &cfg, t) {
                        Ok(()) => spin(tmem, 2 * t.inserted.len() as u64),
                        Err(e) => sh.error = Some(e),
                    }
                }
                let job = sh.traces[j].as_ref().map(|t| Assignment::from_trace(t, cfg.expand_all));
                pass_turn(g, cv);
                barrier.wait();

                let start = job.map(|job| st_times.measure(j, || prepare_worker(env, st, job, cfg.expand_all)));
                barrier.wait();
                let mut reward = None;
                if let Some(start) = start {
                    let seed = rollout_seed(run_seed, step, iteration.load(Ordering::Acquire), j as u64);
                    match start.and_then(|s| Ok(env.rollout_bytes(&s, seed)?)) {
                        Ok(v) => reward = Some(v * root_sign),
                        Err(e) => shared.lock().unwrap().fail(e),
                    }
                }
                barrier.wait();

                let mut g = wait_turn(shared, cv, 2 * p + j);
                let sh = &mut *g;
                if let (None, Some(t), Some(v)) = (&sh.error, sh.traces[j].as_ref(), reward) {
                    match reference::backup(&mut sh.tree, &cfg, t, v) {
                        Ok(()) => {
                            let extra = if t.inserted.is_empty() { 0 } else { 2 };
                            spin(tmem, 2 * t.edges.len() as u64 + extra);
                        }
                        Err(e) => sh.error = Some(e),
                    }
                }
                pass_turn(g, cv);
                barrier.wait();
            });
        }

        let mut reports = Vec::new();
        let outcome = (|| -> Result<()> {
            for it in 0..cfg.max_iterations as u64 {
                {
                    let mut g = shared.lock().unwrap();
                    if let Some(e) = g.error.take() {
                        return Err(e);
                    }
                    if g.tree.is_full() {
                        break;
                    }
                    g.turn = 0;
                    g.claims.clear();
                    g.traces.iter_mut().for_each(|t| *t = None);
                }
                iteration.store(it, Ordering::Release);
                barrier.wait();
                let t0 = Instant::now();
                barrier.wait();
                let t1 = Instant::now();
                barrier.wait();
                barrier.wait();
                let t2 = Instant::now();
                barrier.wait();
                let t3 = Instant::now();
                let g = shared.lock().unwrap();
                reports.push(IterationReport {
                    iteration: it,
                    inserted: g.traces.iter().flatten().map(|t| t.inserted.len()).sum(),
                    select_s: (t1 - t0).as_secs_f64(),
                    sim_phase_s: (t2 - t1).as_secs_f64(),
                    backup_s: (t3 - t2).as_secs_f64(),
                    st_s: st_times.seconds(),
                    ..IterationReport::default()
                });
            }
            Ok(())
        })();
        stop.store(true, Ordering::Release);
        barrier.wait();
        outcome.map(|_| reports)
    });

    let sh = shared.into_inner().unwrap();
    sys.tree = Some(sh.tree);
    let reports = result?;
    match sh.error {
        Some(e) => Err(e),
        None => Ok(reports),
    }
}
