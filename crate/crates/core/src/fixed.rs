//! Signed fixed-point edge weights with 16 fractional bits.
//!
//! The integer width is a per-tree constant chosen from the largest value the
//! UCT formula can produce under the node budget, so single-cycle integer
//! comparison can replace floating point comparison.

use std::fmt;

/// Number of fractional bits in every [`FixedWeight`].
pub const FRAC_BITS: u32 = 16;

const SCALE: f64 = (1u64 << FRAC_BITS) as f64;

/// Raw fixed-point weight; the represented value is `raw / 2^16`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FixedWeight(i64);

impl FixedWeight {
    pub const ZERO: FixedWeight = FixedWeight(0);

    pub const fn from_raw(raw: i64) -> Self {
        FixedWeight(raw)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }
}

impl fmt::Debug for FixedWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FixedWeight({} = {})", self.0, self.to_f64())
    }
}

/// Result of quantizing a real value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub weight: FixedWeight,
    /// Set when the input was outside `(-2^I, 2^I)` and had to be clamped.
    pub saturated: bool,
}

/// Fixed-point format: `int_bits` integer bits, 16 fractional bits, one sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedFormat {
    int_bits: u32,
}

impl FixedFormat {
    /// Largest supported integer width; keeps `raw` well inside an `i64`.
    pub const MAX_INT_BITS: u32 = 40;

    pub fn new(int_bits: u32) -> Self {
        assert!(
            (1..=Self::MAX_INT_BITS).contains(&int_bits),
            "integer bit count {int_bits} out of range"
        );
        FixedFormat { int_bits }
    }

    pub fn int_bits(self) -> u32 {
        self.int_bits
    }

    /// Total storage width including the sign bit.
    pub fn total_bits(self) -> u32 {
        self.int_bits + FRAC_BITS + 1
    }

    /// Largest representable weight, `2^I - 2^-16`.
    pub fn max(self) -> FixedWeight {
        FixedWeight((1i64 << (self.int_bits + FRAC_BITS)) - 1)
    }

    /// Smallest representable weight, `-(2^I - 2^-16)`.
    pub fn min(self) -> FixedWeight {
        FixedWeight(-self.max().0)
    }

    /// Round-to-nearest-even onto the `2^-16` grid, saturating out-of-range input.
    pub fn quantize(self, x: f64) -> Quantized {
        let max = self.max().0;
        if x.is_nan() {
            return Quantized { weight: FixedWeight::ZERO, saturated: true };
        }
        let scaled = (x * SCALE).round_ties_even();
        if scaled > max as f64 {
            Quantized { weight: FixedWeight(max), saturated: true }
        } else if scaled < -(max as f64) {
            Quantized { weight: FixedWeight(-max), saturated: true }
        } else {
            Quantized { weight: FixedWeight(scaled as i64), saturated: false }
        }
    }

    /// Quantize, silently saturating.
    pub fn to_fixed(self, x: f64) -> FixedWeight {
        self.quantize(x).weight
    }

    pub fn from_fixed(self, w: FixedWeight) -> f64 {
        w.to_f64()
    }

    /// `a - b`, clamped to the representable range.
    pub fn saturating_sub(self, a: FixedWeight, b: FixedWeight) -> FixedWeight {
        self.clamp(a.0.saturating_sub(b.0))
    }

    pub fn saturating_add(self, a: FixedWeight, b: FixedWeight) -> FixedWeight {
        self.clamp(a.0.saturating_add(b.0))
    }

    fn clamp(self, raw: i64) -> FixedWeight {
        let max = self.max().0;
        FixedWeight(raw.clamp(-max, max))
    }
}

/// Integer bit count for the UCT weight given reward magnitude bound `v_max`,
/// exploration coefficient `beta`, and node budget `budget`.
///
/// Evaluates the UCT formula at its maximum (`V = v_max`, `N_s = X`,
/// `N_child = 1`) and picks the smallest `I >= 1` with `bound < 2^I`.
pub fn integer_bits(v_max: f64, beta: f64, budget: usize) -> u32 {
    let budget = budget.max(2) as f64;
    let bound = v_max.abs() + beta * budget.ln().sqrt();
    if bound <= 0.0 || !bound.is_finite() {
        return 1;
    }
    let bits = bound.log2().floor() as i64 + 1;
    bits.clamp(1, FixedFormat::MAX_INT_BITS as i64) as u32
}
