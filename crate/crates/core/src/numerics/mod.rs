//! Dense linear algebra, operation counting and deterministic random streams.
//!
//! Everything here is sized for desk-scale problems (d ≤ 256): matrices are
//! dense, row-major `f64` storage and singular values come from one-sided
//! Jacobi rotations.

mod cost;
mod io;
mod linalg;
mod matrix;
mod rng;

pub use cost::CostCounter;
pub use io::{
    load_matrix, load_vector, parse_matrix, parse_matrix_block, save_matrix, save_vector,
    write_matrix, write_vector,
};
pub use linalg::{
    jacobi_svd, least_squares, least_squares_counted, smallest_singular_pair,
    smallest_singular_value, Svd,
};
pub use matrix::{Matrix, Vector};
pub use rng::{gaussian, RandomStream};

/// Numerical policy shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `least_squares` refuses systems with σ_min < rank_relative · σ_max.
    pub rank_relative: f64,
    /// Relative threshold τ under which a coefficient counts as zero.
    pub zero_threshold: f64,
    /// γ below gamma_zero · (largest column norm) is reported as exactly 0.
    pub gamma_zero: f64,
    /// Maximum entrywise deviation of ΨᵀΨ from the identity.
    pub orthonormal: f64,
    /// Maximum deviation of a column norm from 1 for "normalized" matrices.
    pub unit_norm: f64,
    /// Kernel witnesses satisfy ‖A w‖ ≤ witness · ‖w‖.
    pub witness: f64,
    /// Relative slack allowed when checking the perturbation inequality.
    pub perturbation_relative: f64,
    /// Absolute slack added to ε in the ℓ0 feasibility test.
    pub feasibility_slack: f64,
    /// OMP stalls when every remaining correlation is below this.
    pub stall_correlation: f64,
    /// BP coefficients below this fraction of the largest are dropped from the support.
    pub bp_support_relative: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    rank_relative: 1e-12,
    zero_threshold: 1e-8,
    gamma_zero: 1e-10,
    orthonormal: 1e-10,
    unit_norm: 1e-10,
    witness: 1e-10,
    perturbation_relative: 1e-9,
    feasibility_slack: 1e-10,
    stall_correlation: 1e-12,
    bp_support_relative: 1e-6,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}

/// Number of r-subsets of an n-set, saturating at `u128::MAX`.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Iterator over the r-subsets of {0, .., n-1} in colexicographic order.
///
/// Colex order lists {0,1}, {0,2}, {1,2}, {0,3}, ...: a subset precedes another
/// when its largest differing element is smaller.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, r: usize) -> Self {
        Self {
            n,
            current: (0..r).collect(),
            done: r > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let r = self.current.len();
        // Find the lowest position that can be bumped without colliding with its right neighbour.
        let mut i = 0;
        loop {
            if i == r {
                self.done = true;
                break;
            }
            let limit = if i + 1 < r { self.current[i + 1] } else { self.n };
            if self.current[i] + 1 < limit {
                self.current[i] += 1;
                for (j, slot) in self.current[..i].iter_mut().enumerate() {
                    *slot = j;
                }
                break;
            }
            i += 1;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(12, 2), 66);
        assert_eq!(binomial(64, 6), 74_974_368);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(5, 0), 1);
    }

    #[test]
    fn colex_order_of_pairs() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![1, 2],
                vec![0, 3],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn combination_counts_match_binomial() {
        for n in 0..9 {
            for r in 0..=n + 1 {
                assert_eq!(Combinations::new(n, r).count() as u128, binomial(n, r), "n={n} r={r}");
            }
        }
    }

    #[test]
    fn empty_subset_is_enumerated_once() {
        assert_eq!(Combinations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
    }
}
