use std::ops::AddAssign;

use serde::Serialize;

/// Arithmetic-operation tally for one solve.
///
/// Every scalar multiply (divisions and square roots included), add/subtract
/// and comparison executed by solver code is counted. Random number
/// generation and I/O are not.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CostCounter {
    pub multiplies: u64,
    pub additions: u64,
    pub comparisons: u64,
}

impl CostCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.multiplies + self.additions + self.comparisons
    }

    #[inline]
    pub fn mul(&mut self, n: usize) {
        self.multiplies += n as u64;
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.additions += n as u64;
    }

    #[inline]
    pub fn cmp(&mut self, n: usize) {
        self.comparisons += n as u64;
    }

    /// A length-n dot product: n multiplies and n additions.
    #[inline]
    pub fn dot(&mut self, n: usize) {
        self.mul(n);
        self.add(n);
    }
}

impl AddAssign for CostCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.multiplies += rhs.multiplies;
        self.additions += rhs.additions;
        self.comparisons += rhs.comparisons;
    }
}
