use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_len, check_padding, splitmix64, EnvError, EnvSpec, Environment};

const GAMMA: usize = 256;
const NO_ARM: u8 = u8::MAX;

/// Parameters of the synthetic bandit tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditConfig {
    /// Payout weight of the first action; the largest entry is the optimal arm.
    pub arm_bias: Vec<f64>,
    pub horizon: usize,
    pub table_seed: u64,
    /// Half-width of the uniform rollout noise.
    pub noise: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            arm_bias: vec![0.30, 0.45, 0.20, 0.80, 0.50, 0.35],
            horizon: 9,
            table_seed: 0x5eed_ba4d_17,
            noise: 0.05,
        }
    }
}

/// Deep single-agent tree whose terminal payout is half a per-arm bias and
/// half the mean of hashed, path-dependent step scores, plus seeded noise.
#[derive(Debug, Clone)]
pub struct BanditTree {
    spec: EnvSpec,
    cfg: BanditConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditState {
    pub depth: u8,
    pub first_action: Option<u8>,
    /// Hash of the action prefix.
    pub key: u64,
    pub score_sum: f64,
}

impl BanditTree {
    pub fn new(cfg: BanditConfig) -> Self {
        assert!((2..=64).contains(&cfg.arm_bias.len()), "bandit needs 2..=64 arms");
        assert!((2..=255).contains(&cfg.horizon), "bandit horizon must be in 2..=255");
        BanditTree {
            spec: EnvSpec {
                name: "bandit",
                action_count: cfg.arm_bias.len(),
                state_bytes: GAMMA,
                reward_bounds: (0.0, 1.0),
                horizon: cfg.horizon,
                alternating: false,
            },
            cfg,
        }
    }

    pub fn config(&self) -> &BanditConfig {
        &self.cfg
    }

    /// Score in [0, 1) for taking `action` after the prefix hashed as `key`.
    fn step_score(&self, key: u64, action: usize) -> f64 {
        let h = splitmix64(self.cfg.table_seed ^ key ^ (action as u64).wrapping_mul(0x9e37_79b9));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn advance(&self, s: &BanditState, action: usize) -> BanditState {
        let mut next = *s;
        if s.depth == 0 {
            next.first_action = Some(action as u8);
        } else {
            next.score_sum += self.step_score(s.key, action);
        }
        next.key = splitmix64(s.key ^ (action as u64 + 1).wrapping_mul(0xd6e8_feb8_6659_fd93));
        next.depth += 1;
        next
    }

    /// Deterministic payout of a terminal state.
    pub fn payout(&self, s: &BanditState) -> f64 {
        let bias = s.first_action.map_or(0.0, |a| self.cfg.arm_bias[a as usize]);
        0.5 * bias + 0.5 * s.score_sum / (self.cfg.horizon - 1) as f64
    }
}

impl Environment for BanditTree {
    type State = BanditState;

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _seed: u64) -> BanditState {
        BanditState { depth: 0, first_action: None, key: self.cfg.table_seed, score_sum: 0.0 }
    }

    fn step(&self, s: &BanditState, action: usize) -> Result<BanditState, EnvError> {
        self.check_action(action)?;
        if self.is_terminal(s) {
            return Ok(*s);
        }
        Ok(self.advance(s, action))
    }

    fn is_terminal(&self, s: &BanditState) -> bool {
        s.depth as usize >= self.cfg.horizon
    }

    fn rollout(&self, s: &BanditState, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = *s;
        while !self.is_terminal(&s) {
            let a = rng.gen_range(0..self.spec.action_count);
            s = self.advance(&s, a);
        }
        let noise = if self.cfg.noise > 0.0 { rng.gen_range(-self.cfg.noise..=self.cfg.noise) } else { 0.0 };
        (self.payout(&s) + noise).clamp(0.0, 1.0)
    }

    fn encode(&self, s: &BanditState) -> Vec<u8> {
        let mut b = vec![0; GAMMA];
        b[0] = s.depth;
        b[1] = s.first_action.unwrap_or(NO_ARM);
        b[2..10].copy_from_slice(&s.key.to_le_bytes());
        b[10..18].copy_from_slice(&s.score_sum.to_bits().to_le_bytes());
        b
    }

    fn decode(&self, b: &[u8]) -> Result<BanditState, EnvError> {
        check_len(b, GAMMA)?;
        check_padding(b, 18)?;
        let depth = b[0];
        let first_action = match b[1] {
            NO_ARM => None,
            a if (a as usize) < self.spec.action_count => Some(a),
            a => return Err(EnvError::Malformed(format!("arm {a} out of range"))),
        };
        if depth as usize > self.cfg.horizon || (depth == 0) != first_action.is_none() {
            return Err(EnvError::Malformed("inconsistent bandit depth".into()));
        }
        let key = u64::from_le_bytes(b[2..10].try_into().unwrap());
        let score_sum = f64::from_bits(u64::from_le_bytes(b[10..18].try_into().unwrap()));
        if !(score_sum.is_finite() && score_sum >= 0.0) {
            return Err(EnvError::Malformed("bad score sum".into()));
        }
        Ok(BanditState { depth, first_action, key, score_sum })
    }
}
