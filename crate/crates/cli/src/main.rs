use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use treepar_core::accel::Comparator;
use treepar_core::bench::{self, StepRow, VerifyPlan};
use treepar_core::bsp::{throughput, Mode};
use treepar_core::config::RunConfig;
use treepar_core::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "treepar", version, about = "Tree-parallel MCTS with a simulated in-tree accelerator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// CSV output path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker count override.
    #[arg(long, global = true)]
    p: Option<usize>,
    /// Extra `key=value` assignments applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Accel,
    Cpu,
    Oracle,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Accel => Mode::Accel,
            ModeArg::Cpu => Mode::Cpu,
            ModeArg::Oracle => Mode::Oracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    /// CLUT comparators use a strict compare, breaking lowest-index ties.
    ClutTie,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the correctness suites; exits nonzero on the first failing suite.
    Verify {
        /// Worker counts to sweep.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        #[arg(long, default_value_t = 2)]
        seeds: u64,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// In-tree latency per iteration, accelerator against the CPU baseline.
    BenchIntree {
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
    },
    /// Throughput and time breakdown over worker counts.
    BenchThroughput {
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
    },
    /// Play `steps` MCTS steps and emit one CSV row per step.
    Run,
}

fn load_config(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.mode {
        cfg.mode = m.into();
    }
    if let Some(p) = c.p {
        cfg.workers = p;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    cfg.runtime()?;
    Ok(cfg)
}

fn sweep(cfg: &RunConfig, explicit: Option<Vec<usize>>, p_flag: Option<usize>) -> Vec<usize> {
    match (explicit, p_flag) {
        (Some(v), _) => v,
        (None, Some(_)) => vec![cfg.workers],
        (None, None) => vec![1, 2, 4, 8, 16, 32],
    }
}

fn output(cfg: &RunConfig) -> anyhow::Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli, cfg: RunConfig) -> anyhow::Result<u8> {
    match cli.cmd {
        Cmd::Verify { sweep: s, seeds, inject_fault } => {
            let mut plan = VerifyPlan::from_config(&cfg);
            plan.workers = sweep(&cfg, s.or(Some(plan.workers.clone())), None);
            plan.seeds = (0..seeds.max(1)).map(|k| cfg.seed + k).collect();
            if let Some(Fault::ClutTie) = inject_fault {
                plan.comparator = Comparator::Greater;
            }
            let mut reports = Vec::new();
            for suite in bench::Suite::ALL {
                let r = bench::run_suite(&plan, suite);
                println!("{r}");
                reports.push(r);
            }
            Ok(bench::exit_code(&reports) as u8)
        }
        Cmd::BenchIntree { sweep: s } => {
            let rows = bench::bench_intree(&cfg, &sweep(&cfg, s, cli.common.p))?;
            bench::write_csv(output(&cfg)?, &rows)?;
            for r in &rows {
                eprintln!("p={:<4} accel {:.3e} s  baseline {:.3e} s  speedup {:.2}", r.p, r.accel_intree_s, r.baseline_intree_s, r.speedup);
            }
            Ok(0)
        }
        Cmd::BenchThroughput { sweep: s } => {
            let rows = bench::bench_throughput(&cfg, &sweep(&cfg, s, cli.common.p))?;
            bench::write_csv(output(&cfg)?, &rows)?;
            for pair in rows.chunks(2) {
                if let [a, b] = pair {
                    eprintln!(
                        "p={:<4} accel {:.1} sims/s (other {:.0}%)  baseline {:.1} sims/s (other {:.0}%)  ratio {:.2}",
                        a.p,
                        a.throughput,
                        100.0 * a.other_fraction,
                        b.throughput,
                        100.0 * b.other_fraction,
                        a.throughput / b.throughput
                    );
                }
            }
            Ok(0)
        }
        Cmd::Run => {
            let steps = bench::run_steps(&cfg, cfg.mode, cfg.workers)?;
            let rows = steps.iter().map(|s| StepRow::new(&cfg, s)).collect::<Result<Vec<_>, _>>()?;
            bench::write_csv(output(&cfg)?, &rows)?;
            let actions: Vec<String> = steps.iter().map(|s| s.action.to_string()).collect();
            eprintln!("{} steps, actions [{}], {:.1} sims/s", steps.len(), actions.join(" "), throughput(&steps));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli, cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let config = e.downcast_ref::<Error>().is_some_and(|e| matches!(e, Error::Config(_)));
            eprintln!("error: {e:#}");
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
