use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_len, check_padding, EnvError, EnvSpec, Environment};

pub const BOARD_SIDE: usize = 6;
pub const BOARD_CELLS: usize = BOARD_SIDE * BOARD_SIDE;
const IN_A_ROW: usize = 5;
const GAMMA: usize = 432;

const EMPTY: u8 = 0;
const BLACK: u8 = 1;
const WHITE: u8 = 2;
const DRAW: u8 = 3;

/// Free-style gomoku on a 6x6 board, five in a row wins.
///
/// Every cell is an action. Playing an occupied cell forfeits the game, so
/// the tree keeps a constant fanout of 36. Rollouts play uniformly random
/// legal moves.
#[derive(Debug, Clone)]
pub struct Gomoku {
    spec: EnvSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GomokuState {
    pub board: [u8; BOARD_CELLS],
    pub to_move: u8,
    /// 0 while in play, then BLACK, WHITE or DRAW.
    pub winner: u8,
    pub moves: u8,
}

impl Default for Gomoku {
    fn default() -> Self {
        Self::new()
    }
}

impl Gomoku {
    pub fn new() -> Self {
        Gomoku {
            spec: EnvSpec {
                name: "gomoku",
                action_count: BOARD_CELLS,
                state_bytes: GAMMA,
                reward_bounds: (-1.0, 1.0),
                horizon: BOARD_CELLS,
                alternating: true,
            },
        }
    }

    fn play(s: &GomokuState, cell: usize) -> GomokuState {
        let mut next = *s;
        let mover = s.to_move;
        let other = if mover == BLACK { WHITE } else { BLACK };
        next.to_move = other;
        next.moves += 1;
        if s.board[cell] != EMPTY {
            next.winner = other;
            return next;
        }
        next.board[cell] = mover;
        if five_through(&next.board, cell) {
            next.winner = mover;
        } else if next.board.iter().all(|&c| c != EMPTY) {
            next.winner = DRAW;
        }
        next
    }

    fn outcome(s: &GomokuState) -> f64 {
        match s.winner {
            BLACK => 1.0,
            WHITE => -1.0,
            _ => 0.0,
        }
    }
}

fn five_through(board: &[u8; BOARD_CELLS], cell: usize) -> bool {
    let stone = board[cell];
    let (r, c) = ((cell / BOARD_SIDE) as isize, (cell % BOARD_SIDE) as isize);
    let at = |r: isize, c: isize| -> bool {
        (0..BOARD_SIDE as isize).contains(&r)
            && (0..BOARD_SIDE as isize).contains(&c)
            && board[r as usize * BOARD_SIDE + c as usize] == stone
    };
    [(0, 1), (1, 0), (1, 1), (1, -1)].iter().any(|&(dr, dc)| {
        let mut run = 1;
        for sign in [1, -1] {
            let mut k = 1;
            while at(r + sign * k * dr, c + sign * k * dc) {
                run += 1;
                k += 1;
            }
        }
        run >= IN_A_ROW
    })
}

impl Environment for Gomoku {
    type State = GomokuState;

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _seed: u64) -> GomokuState {
        GomokuState { board: [EMPTY; BOARD_CELLS], to_move: BLACK, winner: 0, moves: 0 }
    }

    fn step(&self, s: &GomokuState, action: usize) -> Result<GomokuState, EnvError> {
        self.check_action(action)?;
        if self.is_terminal(s) {
            return Ok(*s);
        }
        Ok(Self::play(s, action))
    }

    fn is_terminal(&self, s: &GomokuState) -> bool {
        s.winner != 0
    }

    fn rollout(&self, s: &GomokuState, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = *s;
        let mut free: Vec<usize> = (0..BOARD_CELLS).filter(|&c| s.board[c] == EMPTY).collect();
        while !self.is_terminal(&s) {
            let k = rng.gen_range(0..free.len());
            let cell = free.swap_remove(k);
            s = Self::play(&s, cell);
        }
        Self::outcome(&s)
    }

    fn encode(&self, s: &GomokuState) -> Vec<u8> {
        let mut b = vec![0; GAMMA];
        b[..BOARD_CELLS].copy_from_slice(&s.board);
        b[BOARD_CELLS] = s.to_move;
        b[BOARD_CELLS + 1] = s.winner;
        b[BOARD_CELLS + 2] = s.moves;
        b
    }

    fn decode(&self, b: &[u8]) -> Result<GomokuState, EnvError> {
        check_len(b, GAMMA)?;
        check_padding(b, BOARD_CELLS + 3)?;
        let mut board = [EMPTY; BOARD_CELLS];
        board.copy_from_slice(&b[..BOARD_CELLS]);
        let (to_move, winner, moves) = (b[BOARD_CELLS], b[BOARD_CELLS + 1], b[BOARD_CELLS + 2]);
        if board.iter().any(|&c| c > WHITE) || !(to_move == BLACK || to_move == WHITE) || winner > DRAW {
            return Err(EnvError::Malformed("gomoku field out of range".into()));
        }
        let stones = board.iter().filter(|&&c| c != EMPTY).count();
        if stones > moves as usize {
            return Err(EnvError::Malformed("more stones than moves".into()));
        }
        Ok(GomokuState { board, to_move, winner, moves })
    }

    fn player_sign(&self, s: &GomokuState) -> f64 {
        if s.to_move == BLACK {
            1.0
        } else {
            -1.0
        }
    }
}
