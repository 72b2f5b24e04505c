//! Comparison look-up tables and their multi-level hierarchy.
//!
//! A table over `f` inputs is indexed by the `C(f,2)` comparator outputs for
//! the pairs `(a, b)`, `a < b`, in lexicographic order; pair `q` is bit `q`.
//! A comparator outputs 1 iff `w[a] >= w[b]`, so the lowest index wins ties.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::fixed::FixedWeight;

pub const MAX_CLUT_FANIN: usize = 6;

/// Comparator used when forming the index bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    /// `w[a] >= w[b]`, the correct rule.
    GreaterEqual,
    /// `w[a] > w[b]`; flips every tie toward the higher index. Fault injection only.
    Greater,
}

#[derive(Debug, Clone)]
pub struct Clut {
    f: usize,
    table: Vec<u8>,
    comparator: Comparator,
}

/// `C(f, 2)`.
pub fn comparator_count(f: usize) -> usize {
    f * (f - 1) / 2
}

fn pairs(f: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..f).flat_map(move |a| (a + 1..f).map(move |b| (a, b)))
}

impl Clut {
    pub fn build(f: usize) -> Result<Self> {
        Self::build_with(f, Comparator::GreaterEqual)
    }

    pub fn build_with(f: usize, comparator: Comparator) -> Result<Self> {
        if !(2..=MAX_CLUT_FANIN).contains(&f) {
            return Err(Error::ClutFanIn(f));
        }
        let c = comparator_count(f);
        let table = (0..1usize << c).map(|bits| winner_of(f, bits) as u8).collect();
        Ok(Clut { f, table, comparator })
    }

    pub fn fanin(&self) -> usize {
        self.f
    }

    pub fn comparators(&self) -> usize {
        comparator_count(self.f)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entry(&self, bits: usize) -> usize {
        self.table[bits] as usize
    }

    /// Comparator outputs for `w`, packed as table index.
    pub fn comparison_bits(&self, w: &[FixedWeight]) -> usize {
        debug_assert_eq!(w.len(), self.f);
        pairs(self.f).enumerate().fold(0, |bits, (q, (a, b))| {
            let hit = match self.comparator {
                Comparator::GreaterEqual => w[a] >= w[b],
                Comparator::Greater => w[a] > w[b],
            };
            bits | (usize::from(hit) << q)
        })
    }

    pub fn lookup(&self, w: &[FixedWeight]) -> usize {
        self.entry(self.comparison_bits(w))
    }
}

/// Index that beats every other index under `bits`; for vectors no weight
/// assignment can produce, the index with the most wins, lowest first.
fn winner_of(f: usize, bits: usize) -> usize {
    let mut wins = vec![0usize; f];
    for (q, (a, b)) in pairs(f).enumerate() {
        if bits >> q & 1 == 1 {
            wins[a] += 1;
        } else {
            wins[b] += 1;
        }
    }
    if let Some(i) = wins.iter().position(|&w| w == f - 1) {
        return i;
    }
    let best = *wins.iter().max().expect("f >= 2");
    wins.iter().position(|&w| w == best).expect("max exists")
}

/// Layers of CLUTs reducing `F` weights to one winner.
#[derive(Debug, Clone)]
pub struct ClutHierarchy {
    fanout: usize,
    /// Per layer, contiguous index ranges over that layer's inputs.
    layers: Vec<Vec<Range<usize>>>,
    /// `tables[f - 2]` is the table for fan-in `f`.
    tables: Vec<Clut>,
}

impl ClutHierarchy {
    /// Minimal-depth hierarchy with per-table fan-in at most `f_max`.
    pub fn build(fanout: usize, f_max: usize) -> Result<Self> {
        Self::build_with(fanout, f_max, Comparator::GreaterEqual)
    }

    pub fn build_with(fanout: usize, f_max: usize, comparator: Comparator) -> Result<Self> {
        if !(2..=MAX_CLUT_FANIN).contains(&f_max) {
            return Err(Error::ClutFanIn(f_max));
        }
        if fanout < 2 {
            return Err(Error::Config(format!("fanout {fanout} below 2")));
        }
        let mut depth = 1;
        while f_max.pow(depth as u32) < fanout {
            depth += 1;
        }
        let mut layers = Vec::with_capacity(depth);
        let mut m = fanout;
        for r in (1..=depth).rev() {
            let g = groups_for(m, r);
            layers.push(split_even(m, g));
            m = g;
        }
        debug_assert_eq!(m, 1);
        let tables = (2..=f_max).map(|f| Clut::build_with(f, comparator)).collect::<Result<_>>()?;
        Ok(ClutHierarchy { fanout, layers, tables })
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Group sizes per layer; size 1 means a pass-through.
    pub fn shape(&self) -> Vec<Vec<usize>> {
        self.layers.iter().map(|l| l.iter().map(|r| r.len()).collect()).collect()
    }

    pub fn lookup(&self, weights: &[FixedWeight]) -> usize {
        debug_assert_eq!(weights.len(), self.fanout);
        let mut cand: Vec<usize> = (0..self.fanout).collect();
        let mut buf = Vec::with_capacity(MAX_CLUT_FANIN);
        for layer in &self.layers {
            cand = layer
                .iter()
                .map(|r| {
                    let members = &cand[r.clone()];
                    if members.len() == 1 {
                        return members[0];
                    }
                    buf.clear();
                    buf.extend(members.iter().map(|&i| weights[i]));
                    members[self.tables[members.len() - 2].lookup(&buf)]
                })
                .collect();
        }
        cand[0]
    }
}

/// Smallest `g` with `g^r >= m^(r-1)`: the outputs of a layer with `r`
/// layers remaining, leaving evenly sized groups for the rest.
fn groups_for(m: usize, r: usize) -> usize {
    let target = (m as u128).pow(r as u32 - 1);
    let mut g = 1usize;
    while (g as u128).pow(r as u32) < target {
        g += 1;
    }
    g
}

fn split_even(m: usize, g: usize) -> Vec<Range<usize>> {
    let (base, extra) = (m / g, m % g);
    let mut start = 0;
    (0..g)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}
