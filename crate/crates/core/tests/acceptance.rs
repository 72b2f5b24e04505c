//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treepar_core::accel::{Accelerator, Clut, ClutHierarchy, Phase, BACKUP_CYCLES};
use treepar_core::bsp::{Mode, RuntimeConfig, StepReport, System};
use treepar_core::env::{burn, EnvChoice, StateEnv};
use treepar_core::host::{rollout_seed, simulate_worker, Assignment};
use treepar_core::policy::{argmax_edges, UctParams};
use treepar_core::{FixedWeight, NodeId, SearchConfig, StateTable, TreeConfig, UctTree};

type Outcome = Result<String, String>;

fn search(env: &dyn StateEnv, depth: usize, budget: usize, p: usize) -> SearchConfig {
    let spec = env.spec();
    let uct = UctParams::with_defaults(spec.reward_magnitude(), budget).unwrap().alternating(spec.alternating);
    SearchConfig::new(TreeConfig::new(spec.action_count, depth, budget, p).unwrap(), uct).unwrap()
}

fn system(env: &Arc<dyn StateEnv>, cfg: SearchConfig, mode: Mode, seed: u64, tmem: Duration) -> System {
    let mut rt = RuntimeConfig::new(cfg, mode, seed);
    rt.tmem = tmem;
    System::new(rt, env.clone()).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equivalence() -> Outcome {
    let cases: [(EnvChoice, usize, usize); 3] = [
        (EnvChoice::Counting { horizon: 3 }, 3, 15),
        (EnvChoice::by_name("bandit").unwrap(), 8, 2000),
        (EnvChoice::Gomoku, 5, 3000),
    ];
    let mut compared = 0;
    for (choice, depth, budget) in cases {
        let env = choice.build(0);
        for p in [1, 2, 8, 32] {
            let cfg = search(&*env, depth, budget, p);
            for seed in 0..5u64 {
                let mut systems: Vec<System> =
                    [Mode::Oracle, Mode::Accel, Mode::Cpu].iter().map(|&m| system(&env, cfg, m, seed, Duration::ZERO)).collect();
                for step in 0..2 {
                    if systems[0].root_is_terminal().map_err(|e| e.to_string())? {
                        break;
                    }
                    let r: Vec<StepReport> = systems.iter_mut().map(|s| s.run_step().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
                    for other in &r[1..] {
                        ensure(other.digest == r[0].digest && other.action == r[0].action, || {
                            format!("{} p={p} seed={seed} step={step}: {} differs from oracle", choice.name(), other.mode)
                        })?;
                        compared += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{compared} accel/cpu steps bit-identical to the oracle (3 envs, p in 1/2/8/32, 5 seeds)"))
}

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

fn unit_search(f: usize, d: usize, x: usize, p: usize) -> SearchConfig {
    SearchConfig::new(TreeConfig::new(f, d, x, p).unwrap(), UctParams::with_defaults(1.0, x).unwrap()).unwrap()
}

fn cycle_contracts() -> Outcome {
    let i6 = Accelerator::new(unit_search(6, 2, 64, 1), 6).unwrap().issue_interval();
    let i36 = Accelerator::new(unit_search(36, 2, 64, 1), 6).unwrap().issue_interval();
    ensure(i6 == 2 && i36 == 3, || format!("distributor interval F=6: {i6}, F=36: {i36}"))?;
    let mut closed = 0;
    for &(f, d, p) in &[(2usize, 4usize, 1usize), (2, 4, 9), (3, 3, 5), (4, 3, 16), (6, 2, 8), (6, 3, 40)] {
        let x = 2 * (0..=d).map(|l| f.pow(l as u32)).sum::<usize>();
        let cfg = unit_search(f, d, x, p);
        let mut tree = funnel_tree(&cfg);
        let mut acc = Accelerator::new(cfg, 6).unwrap();
        acc.ledger.keep_log(true);
        let traces = acc.run_selection(&mut tree).unwrap();
        let (fu, du, pu, l) = (f as u64, d as u64, p as u64, acc.issue_interval() as u64);
        let want = du * (fu + 1) + (pu - 1) * (fu + 1) + l;
        ensure(acc.ledger.selection == want, || format!("closed form F={f} D={d} p={p}: {} vs {want}", acc.ledger.selection))?;
        for v in acc.ledger.last_visits.iter().filter(|v| v.group.is_some()) {
            ensure(v.exit - v.enter == fu + 1, || format!("stage latency {} at F={f}", v.exit - v.enter))?;
        }
        // one memory access per cycle: no worker touches two words of a bank in one cycle
        let mut seen = HashSet::new();
        for a in acc.ledger.kept_log() {
            ensure(seen.insert((a.cycle, a.bank, a.worker)), || format!("two accesses in cycle {} on {:?}", a.cycle, a.bank))?;
        }
        let before = acc.ledger.backup;
        acc.run_backup(&mut tree, &traces, &vec![0.25; p]).unwrap();
        ensure(acc.ledger.backup - before == BACKUP_CYCLES * pu && BACKUP_CYCLES == 2, || {
            format!("BackUp for p={p} took {} cycles", acc.ledger.backup - before)
        })?;
        ensure(acc.ledger.records.iter().any(|r| r.phase == Phase::Backup), || "no backup record".into())?;
        closed += 1;
    }
    Ok(format!("intervals 2/3 cycles, stage latency F+1, T_mem 1, BackUp 2 cycles/worker, closed form exact on {closed} configs"))
}

fn brute_argmax(w: &[FixedWeight]) -> usize {
    (0..w.len()).fold(0, |b, i| if w[i] > w[b] { i } else { b })
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| v[i] < v[i + 1]) else { return false };
    let j = (i + 1..n).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

fn clut_exhaustive() -> Outcome {
    let mut vectors = 0u64;
    for f in [2usize, 3, 4, 6] {
        let clut = Clut::build(f).map_err(|e| e.to_string())?;
        let mut w = vec![FixedWeight::ZERO; f];
        for code in 0..f.pow(f as u32) {
            let mut x = code;
            for s in w.iter_mut() {
                *s = FixedWeight::from_raw((x % f) as i64);
                x /= f;
            }
            ensure(clut.lookup(&w) == brute_argmax(&w), || format!("f={f} {w:?}"))?;
            vectors += 1;
        }
    }
    let clut = Clut::build(6).unwrap();
    let mut perm: Vec<usize> = (0..6).collect();
    let mut perms = 0;
    loop {
        let w: Vec<FixedWeight> = perm.iter().map(|&r| FixedWeight::from_raw(r as i64)).collect();
        ensure(clut.lookup(&w) == brute_argmax(&w), || format!("permutation {perm:?}"))?;
        perms += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    ensure(perms == 720, || format!("{perms} permutations"))?;
    let h = ClutHierarchy::build(36, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..20_000 {
        let w: Vec<FixedWeight> = (0..36).map(|_| FixedWeight::from_raw(rng.gen_range(0..12))).collect();
        ensure(h.lookup(&w) == brute_argmax(&w), || format!("F=36 hierarchy {w:?}"))?;
    }
    Ok(format!("{vectors} weak orderings over f in 2/3/4/6 plus all 720 strict orderings at f=6 match lowest-index argmax"))
}

fn fixed_point_fidelity() -> Outcome {
    let params = UctParams::with_defaults(1.0, 56_000).unwrap();
    let fmt = params.format();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf1ed);
    let (mut sum_rel, mut max_rel, mut max_abs) = (0.0f64, 0.0f64, 0.0f64);
    let samples = 10_000;
    for _ in 0..samples {
        let ns: u32 = rng.gen_range(2..=56_000);
        let n = (rng.gen_range(0.0..(ns as f64).ln()).exp() as u32).clamp(1, ns);
        let x = params.beta * ((ns as f64).ln() / n as f64).sqrt();
        let q = fmt.to_fixed(x).to_f64();
        let abs = (q - x).abs();
        max_abs = max_abs.max(abs);
        let rel = abs / x;
        sum_rel += rel;
        max_rel = max_rel.max(rel);
    }
    let mean_rel = sum_rel / samples as f64;
    ensure(mean_rel < 1e-4, || format!("mean relative error {mean_rel:.3e}"))?;
    ensure(max_abs <= 1.0 / (1u64 << 17) as f64, || format!("absolute error {max_abs:.3e} above half an ulp"))?;

    let mut agreed = 0;
    for _ in 0..10_000 {
        let f = rng.gen_range(2..=36);
        let ns: u32 = rng.gen_range(2..=56_000);
        let real: Vec<f64> = (0..f)
            .map(|_| {
                let n = rng.gen_range(1..=ns);
                let mean = rng.gen_range(-1.0..1.0);
                mean + params.beta * ((ns as f64).ln() / n as f64).sqrt()
            })
            .collect();
        let mut s = real.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        if s[0] - s[1] <= 1.0 / (1u64 << 15) as f64 {
            continue;
        }
        let best = (0..f).fold(0, |b, i| if real[i] > real[b] { i } else { b });
        let q: Vec<FixedWeight> = real.iter().map(|&x| fmt.to_fixed(x)).collect();
        ensure(argmax_edges(&q, (1u64 << f) - 1).unwrap() == best, || format!("argmax disagreement on {real:?}"))?;
        agreed += 1;
    }
    Ok(format!(
        "exploration term mean relative error {mean_rel:.2e} (max {max_rel:.2e}), max abs error {max_abs:.2e} <= 2^-17; argmax agreed on {agreed} wide-gap vectors"
    ))
}

fn conservation() -> Outcome {
    let env = EnvChoice::Gomoku.build(0);
    let (p, budget) = (128, 48_000);
    let cfg = search(&*env, 5, budget, p);
    let mut tree = UctTree::new(cfg.tree, NodeId(0)).map_err(|e| e.to_string())?;
    let st = StateTable::new(budget, env.spec().state_bytes);
    st.write(NodeId(0), &env.initial_state(0)).unwrap();
    let mut acc = Accelerator::new(cfg, 6).unwrap();
    let mut iterations = 0;
    while !tree.is_full() && iterations < cfg.max_iterations as u64 {
        let mut traces = acc.run_selection(&mut tree).map_err(|e| e.to_string())?;
        acc.run_insertion(&mut tree, &mut traces).map_err(|e| e.to_string())?;
        let ids: Vec<NodeId> = traces.iter().flat_map(|t| t.inserted.iter().copied()).collect();
        let distinct: HashSet<NodeId> = ids.iter().copied().collect();
        ensure(distinct.len() == ids.len(), || format!("duplicate expanded id in iteration {iterations}"))?;
        let rewards: Vec<f64> = traces
            .iter()
            .map(|t| {
                let seed = rollout_seed(0, 0, iterations, t.worker as u64);
                simulate_worker(&*env, &st, Assignment::from_trace(t, false), false, seed, 1.0).map(|r| r.0)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        acc.run_backup(&mut tree, &traces, &rewards).map_err(|e| e.to_string())?;
        ensure(tree.pending_vl_total() == 0, || format!("pending virtual loss {} after iteration {iterations}", tree.pending_vl_total()))?;
        iterations += 1;
    }
    ensure(tree.is_full(), || "budget not reached".into())?;
    ensure(acc.ledger.conflicts.is_empty(), || format!("{} bank conflicts", acc.ledger.conflicts.len()))?;
    ensure(acc.ledger.accesses_audited > 0, || "nothing audited".into())?;
    tree.check_invariants()?;
    Ok(format!(
        "Gomoku X=48000 p=128: {iterations} iterations, {} bank accesses audited, 0 conflicts, VL balanced every iteration, ids distinct",
        acc.ledger.accesses_audited
    ))
}

struct Trend {
    p: usize,
    speedup: f64,
    base_other: f64,
    accel_other: f64,
    interconnect: f64,
}

fn fraction_other(steps: &[StepReport]) -> f64 {
    let wall: f64 = steps.iter().map(StepReport::wall_s).sum();
    steps.iter().map(StepReport::other_s).sum::<f64>() / wall
}

fn per_iter(steps: &[StepReport], f: fn(&StepReport) -> f64) -> f64 {
    steps.iter().map(f).sum::<f64>() / steps.iter().map(StepReport::iteration_count).sum::<usize>() as f64
}

fn trends() -> Outcome {
    // rollouts of about 250 us dominate the iteration at p = 8
    let target = Duration::from_micros(250);
    let probe = Instant::now();
    burn(1 << 20, 1);
    let per_round = probe.elapsed().as_secs_f64() / (1u64 << 20) as f64;
    let rounds = (target.as_secs_f64() / per_round) as u64;
    let env = EnvChoice::Gomoku.build(rounds);
    let mut rows = Vec::new();
    for p in [8, 32, 128] {
        let cfg = search(&*env, 5, 4000, p);
        let run = |mode| {
            let mut sys = system(&env, cfg, mode, 3, treepar_core::bsp::DEFAULT_TMEM);
            (0..2).map(|_| sys.run_step().unwrap()).collect::<Vec<_>>()
        };
        let accel = run(Mode::Accel);
        let base = run(Mode::Cpu);
        rows.push(Trend {
            p,
            speedup: per_iter(&base, StepReport::intree_s) / per_iter(&accel, StepReport::intree_s),
            base_other: fraction_other(&base),
            accel_other: fraction_other(&accel),
            interconnect: per_iter(&accel, StepReport::interconnect_s),
        });
    }
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("p={} speedup {:.2} other {:.0}%/{:.0}%", r.p, r.speedup, 100.0 * r.base_other, 100.0 * r.accel_other))
        .collect();
    let table = table.join(", ");
    for w in rows.windows(2) {
        ensure(w[1].speedup >= w[0].speedup, || format!("(a) in-tree speedup fell: {table}"))?;
        ensure(w[1].base_other > w[0].base_other, || format!("(b) baseline other share did not grow: {table}"))?;
    }
    ensure(rows[0].base_other < 0.5, || format!("rollouts do not dominate at p=8: {table}"))?;
    for r in &rows {
        ensure(r.accel_other < r.base_other, || format!("(b) accel other share not below baseline: {table}"))?;
    }
    let (lo, hi) = rows.iter().fold((f64::MAX, 0.0f64), |(lo, hi), r| (lo.min(r.interconnect), hi.max(r.interconnect)));
    ensure((hi - lo) / lo < 0.10, || format!("(c) interconnect time varies {:.1}%", 100.0 * (hi - lo) / lo))?;
    Ok(format!("{table}; interconnect {:.1} us/iteration at every p", 1e6 * lo))
}

fn policy_sanity() -> Outcome {
    let counting = EnvChoice::Counting { horizon: 4 }.build(0);
    let cfg = search(&*counting, 4, 31, 4);
    let mut right = 0;
    for seed in 0..100 {
        if system(&counting, cfg, Mode::Accel, seed, Duration::ZERO).run_step().unwrap().action == 1 {
            right += 1;
        }
    }
    ensure(right == 100, || format!("CountingGame correct in {right}/100 seeds"))?;
    let bandit = EnvChoice::by_name("bandit").unwrap().build(0);
    let cfg = search(&*bandit, 8, 5000, 8);
    let mut optimal = 0;
    for seed in 0..100 {
        if system(&bandit, cfg, Mode::Accel, seed, Duration::ZERO).run_step().unwrap().action == 3 {
            optimal += 1;
        }
    }
    ensure(optimal >= 95, || format!("BanditTree optimal arm in {optimal}/100 runs"))?;
    Ok(format!("CountingGame 100/100, BanditTree optimal arm {optimal}/100 at X=5000"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("cycle contracts", cycle_contracts),
        ("CLUT exhaustive correctness", clut_exhaustive),
        ("fixed-point fidelity", fixed_point_fidelity),
        ("conservation and race freedom", conservation),
        ("trend reproduction", trends),
        ("policy sanity", policy_sanity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
