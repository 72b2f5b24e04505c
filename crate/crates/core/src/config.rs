//! Run configuration files.
//!
//! One `key = value` pair per line. `#` starts a comment, and
//! `include PATH` splices another file in place, resolved relative to the
//! including file. Later assignments override earlier ones.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::accel::{Comparator, DEFAULT_F_MAX};
use crate::bsp::{InterconnectModel, Mode, RuntimeConfig, System, DEFAULT_CLOCK_HZ, DEFAULT_TMEM};
use crate::env::{EnvChoice, StateEnv};
use crate::error::{Error, Result};
use crate::policy::{UctParams, VirtualLoss};
use crate::reference::SearchConfig;
use crate::tree::TreeConfig;

const MAX_INCLUDE_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VlSetting {
    /// Constant loss as a fraction of the reward bound.
    Constant(f64),
    Visit,
}

impl FromStr for VlSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visit" | "visit-tracking" => Ok(VlSetting::Visit),
            _ => {
                let x = s
                    .strip_prefix("constant:")
                    .ok_or_else(|| Error::Config(format!("vl must be `visit` or `constant:<fraction>`, got `{s}`")))?;
                Ok(VlSetting::Constant(parse_num(x, "vl")?))
            }
        }
    }
}

/// Everything needed to build and drive a [`System`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvChoice,
    pub workers: usize,
    /// Must equal the environment's action count when set.
    pub fanout: Option<usize>,
    pub depth: Option<usize>,
    pub budget: usize,
    pub vl: VlSetting,
    pub beta: f64,
    pub seed: u64,
    pub mode: Mode,
    pub clock_hz: f64,
    pub interconnect: InterconnectModel,
    pub expand_all: bool,
    /// Extra mixing rounds per rollout.
    pub busy_work: u64,
    pub steps: usize,
    pub tmem: Duration,
    pub f_max: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvChoice::Gomoku,
            workers: 8,
            fanout: None,
            depth: None,
            budget: 2000,
            vl: VlSetting::Constant(0.1),
            beta: 1.0,
            seed: 0,
            mode: Mode::Accel,
            clock_hz: DEFAULT_CLOCK_HZ,
            interconnect: InterconnectModel::default(),
            expand_all: false,
            busy_work: 0,
            steps: 1,
            tmem: DEFAULT_TMEM,
            f_max: DEFAULT_F_MAX,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn parse_bool(v: &str, key: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{v}` for `{key}`"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_file(path, &mut HashSet::new(), 0)?;
        Ok(cfg)
    }

    /// Parse text with includes resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, base, "<input>", &mut HashSet::new(), 0)?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path, seen: &mut HashSet<PathBuf>, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!("includes nested deeper than {MAX_INCLUDE_DEPTH}")));
        }
        let canon = path
            .canonicalize()
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        if !seen.insert(canon.clone()) {
            return Err(Error::Config(format!("include cycle through {}", path.display())));
        }
        let text = std::fs::read_to_string(&canon)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = canon.parent().unwrap_or(Path::new(".")).to_path_buf();
        self.apply_text(&text, &base, &path.display().to_string(), seen, depth)?;
        seen.remove(&canon);
        Ok(())
    }

    fn apply_text(&mut self, text: &str, base: &Path, name: &str, seen: &mut HashSet<PathBuf>, depth: usize) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let located = |e: Error| match e {
                Error::Config(m) => Error::Config(format!("{name}:{}: {m}", n + 1)),
                other => other,
            };
            if let Some(rest) = line.strip_prefix("include ") {
                self.apply_file(&base.join(rest.trim()), seen, depth + 1).map_err(located)?;
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{name}:{}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(located)?;
        }
        Ok(())
    }

    /// Assign one key, as from a config line or a command-line override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "env" => {
                let horizon = self.horizon();
                self.env = EnvChoice::by_name(v)?;
                if let Some(h) = horizon {
                    self.set_horizon(h)?;
                }
            }
            "horizon" => self.set_horizon(parse_num(v, key)?)?,
            "p" | "workers" => self.workers = parse_num(v, key)?,
            "fanout" | "F" => self.fanout = Some(parse_num(v, key)?),
            "depth" | "D" => self.depth = Some(parse_num(v, key)?),
            "budget" | "X" => self.budget = parse_num(v, key)?,
            "vl" => self.vl = v.parse()?,
            "beta" => self.beta = parse_num(v, key)?,
            "seed" => self.seed = parse_num(v, key)?,
            "mode" => self.mode = v.parse()?,
            "clock_hz" => self.clock_hz = parse_num(v, key)?,
            "interconnect_latency" => self.interconnect.init_latency = parse_num(v, key)?,
            "interconnect_per_byte" => self.interconnect.per_byte = parse_num(v, key)?,
            "expand_all" => self.expand_all = parse_bool(v, key)?,
            "busy_work" => self.busy_work = parse_num(v, key)?,
            "steps" => self.steps = parse_num(v, key)?,
            "tmem_ns" => self.tmem = Duration::from_nanos(parse_num(v, key)?),
            "f_max" => self.f_max = parse_num(v, key)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn horizon(&self) -> Option<usize> {
        match &self.env {
            EnvChoice::Counting { horizon } => Some(*horizon),
            EnvChoice::Bandit(b) => Some(b.horizon),
            EnvChoice::Gomoku => None,
        }
    }

    fn set_horizon(&mut self, h: usize) -> Result<()> {
        match &mut self.env {
            EnvChoice::Counting { horizon } => {
                if h == 0 || h > 60 {
                    return Err(Error::Config(format!("counting horizon {h} outside 1..=60")));
                }
                *horizon = h;
            }
            EnvChoice::Bandit(b) => {
                if !(2..=255).contains(&h) {
                    return Err(Error::Config(format!("bandit horizon {h} outside 2..=255")));
                }
                b.horizon = h;
            }
            EnvChoice::Gomoku => return Err(Error::Config("gomoku has no horizon setting".into())),
        }
        Ok(())
    }

    pub fn build_env(&self) -> Arc<dyn StateEnv> {
        self.env.build(self.busy_work)
    }

    /// Validate every field and produce the runtime configuration.
    pub fn runtime(&self) -> Result<RuntimeConfig> {
        let env = self.env.build(0);
        let spec = env.spec();
        let fanout = self.fanout.unwrap_or(spec.action_count);
        if fanout != spec.action_count {
            return Err(Error::Config(format!(
                "fanout {fanout} does not match the {} actions of `{}`",
                spec.action_count, spec.name
            )));
        }
        let depth = self.depth.unwrap_or(spec.horizon.min(8));
        let tree = TreeConfig::new(fanout, depth, self.budget, self.workers)?;
        let v_max = spec.reward_magnitude();
        let vl = match self.vl {
            VlSetting::Visit => VirtualLoss::VisitTracking,
            VlSetting::Constant(frac) => VirtualLoss::Constant(frac * v_max),
        };
        let uct = UctParams::new(self.beta, vl, v_max, self.budget)?.alternating(spec.alternating);
        let search = SearchConfig::new(tree, uct)?.with_expand_all(self.expand_all);
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(Error::Config(format!("clock_hz must be positive, got {}", self.clock_hz)));
        }
        let ic = self.interconnect;
        if !(ic.init_latency >= 0.0 && ic.per_byte >= 0.0 && ic.init_latency.is_finite() && ic.per_byte.is_finite()) {
            return Err(Error::Config("interconnect costs must be non-negative".into()));
        }
        if !(2..=crate::accel::clut::MAX_CLUT_FANIN).contains(&self.f_max) {
            return Err(Error::Config(format!("f_max must be in 2..={}", crate::accel::clut::MAX_CLUT_FANIN)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        Ok(RuntimeConfig {
            search,
            mode: self.mode,
            seed: self.seed,
            clock_hz: self.clock_hz,
            interconnect: ic,
            tmem: self.tmem,
            f_max: self.f_max,
            comparator: Comparator::GreaterEqual,
        })
    }

    pub fn build_system(&self) -> Result<System> {
        System::new(self.runtime()?, self.build_env())
    }
}
