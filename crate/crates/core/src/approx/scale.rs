//! Exact integer arithmetic for approximate scores.
//!
//! The factor f = 1 + ε/2, as an f64, is a dyadic rational M / 2^t. Scaling
//! every contribution ζ = N − f·r↓ + 1 by 2^t makes it the integer
//! (N+1)·2^t − M·r↓, so window sums and gains compare exactly and the
//! incremental engine can agree bit-for-bit with a from-scratch evaluation.

use crate::error::{invalid, Result};

/// Masses are window sums of scaled contributions.
pub type Mass = i128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    n: i128,
    factor: f64,
    num: i128,
    shift: u32,
}

impl Scale {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return invalid(format!("epsilon must be finite and >= 0, got {epsilon}"));
        }
        let factor = 1.0 + epsilon / 2.0;
        let (num, shift) = dyadic(factor).ok_or_else(|| crate::Error::Invalid(format!("epsilon {epsilon} too large")))?;
        Ok(Scale { n: n as i128, factor, num, shift })
    }

    /// f = 1 + ε/2.
    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// 2^t, the value of one unit of score.
    pub fn unit(&self) -> i128 {
        1i128 << self.shift
    }

    /// Scaled ζ for an object whose lower rank bound is `lower_rank`.
    #[inline]
    pub fn zeta(&self, lower_rank: u32) -> Mass {
        (self.n + 1) * self.unit() - self.num * lower_rank as i128
    }

    /// r̂ = f·r↓ strictly below the integer rank `rank`.
    #[inline]
    pub fn below(&self, lower_rank: u32, rank: u32) -> bool {
        self.num * (lower_rank as i128) < (rank as i128) * self.unit()
    }

    /// Popularity value of a mass over a window of `len` queries.
    pub fn score(&self, mass: Mass, len: usize) -> f64 {
        if len == 0 {
            return 0.0;
        }
        mass as f64 / (self.unit() as f64 * len as f64)
    }

    /// Largest rank R with `slack + (N+1−R)·2^t ≥ need`, i.e.
    /// `N + 1 − ⌈(need − slack)/2^t⌉`, clamped to `[1, N+1]`.
    pub fn safe_rank(&self, need_minus_slack: Mass) -> u32 {
        let top = self.n + 1;
        if need_minus_slack <= 0 {
            return top as u32;
        }
        let u = self.unit();
        let c = (need_minus_slack + u - 1) / u;
        (top - c).clamp(1, top) as u32
    }

    /// Pessimistic gain when nothing better is known: ζ = N, nothing removed.
    pub fn naive_gain(&self) -> Mass {
        self.n * self.unit()
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }
}

/// `(M, t)` with `x = M / 2^t` and M odd (or t = 0).
fn dyadic(x: f64) -> Option<(i128, u32)> {
    if !(x >= 1.0 && x.is_finite()) {
        return None;
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32 - 1075;
    let mut mant = ((bits & ((1u64 << 52) - 1)) | (1u64 << 52)) as i128;
    let mut e = exp;
    while e < 0 && mant % 2 == 0 {
        mant /= 2;
        e += 1;
    }
    if e >= 0 {
        // Integers beyond 2^60 would overflow the mass arithmetic.
        if e > 60 {
            return None;
        }
        Some((mant << e, 0))
    } else {
        Some((mant, (-e) as u32))
    }
}
