use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_len, check_padding, EnvError, EnvSpec, Environment};

const GAMMA: usize = 8;

/// Binary-choice game of fixed horizon: reward 1 iff every action is 1.
#[derive(Debug, Clone)]
pub struct CountingGame {
    spec: EnvSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountingState {
    pub depth: u8,
    pub all_ones: bool,
}

impl CountingGame {
    pub fn new(horizon: usize) -> Self {
        assert!((1..=255).contains(&horizon));
        CountingGame {
            spec: EnvSpec {
                name: "counting",
                action_count: 2,
                state_bytes: GAMMA,
                reward_bounds: (0.0, 1.0),
                horizon,
                alternating: false,
            },
        }
    }

    fn reward(&self, s: &CountingState) -> f64 {
        if s.all_ones {
            1.0
        } else {
            0.0
        }
    }
}

impl Environment for CountingGame {
    type State = CountingState;

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _seed: u64) -> CountingState {
        CountingState { depth: 0, all_ones: true }
    }

    fn step(&self, s: &CountingState, action: usize) -> Result<CountingState, EnvError> {
        self.check_action(action)?;
        if self.is_terminal(s) {
            return Ok(*s);
        }
        Ok(CountingState { depth: s.depth + 1, all_ones: s.all_ones && action == 1 })
    }

    fn is_terminal(&self, s: &CountingState) -> bool {
        s.depth as usize >= self.spec.horizon
    }

    fn rollout(&self, s: &CountingState, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = *s;
        while !self.is_terminal(&s) {
            s = CountingState { depth: s.depth + 1, all_ones: s.all_ones && rng.gen_range(0..2) == 1 };
        }
        self.reward(&s)
    }

    fn encode(&self, s: &CountingState) -> Vec<u8> {
        let mut b = vec![0; GAMMA];
        b[0] = s.depth;
        b[1] = s.all_ones as u8;
        b
    }

    fn decode(&self, b: &[u8]) -> Result<CountingState, EnvError> {
        check_len(b, GAMMA)?;
        check_padding(b, 2)?;
        if b[0] as usize > self.spec.horizon || b[1] > 1 {
            return Err(EnvError::Malformed("counting state out of range".into()));
        }
        Ok(CountingState { depth: b[0], all_ones: b[1] == 1 })
    }
}
