//! Overlap matrix and agreement of two assignments.

use serde::{Deserialize, Serialize};

use super::instance::Assignment;
use crate::error::{param, Error, Result};
use crate::model::all_permutations;

/// Largest q for which the agreement maximizes over all q! permutations.
pub const MAX_OVERLAP_Q: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    /// ρ_ij = |σ⁻¹(i) ∩ τ⁻¹(j)| / n.
    pub rho: Vec<Vec<f64>>,
    /// A = (−1 + max_κ (q/n)·#{v : σ(v) = κ(τ(v))}) / (q − 1).
    pub agreement: f64,
    /// The maximizing κ, as `kappa[j]` = image of τ-spin j.
    pub best_permutation: Vec<usize>,
}

pub fn overlap(sigma: &Assignment, tau: &Assignment, q: usize) -> Result<OverlapStats> {
    if sigma.len() != tau.len() || sigma.is_empty() {
        return param("assignments must be non-empty and of equal length");
    }
    if q < 2 {
        return param("q must be >= 2");
    }
    if q > MAX_OVERLAP_Q {
        let required: u128 = (1..=q as u128).product();
        let budget: u128 = (1..=MAX_OVERLAP_Q as u128).product();
        return Err(Error::Budget { required, budget });
    }
    if sigma.spins.iter().chain(&tau.spins).any(|&s| s >= q) {
        return param(format!("spins must lie in 0..{q}"));
    }
    let n = sigma.len() as f64;
    let mut counts = vec![vec![0usize; q]; q];
    for (&s, &t) in sigma.spins.iter().zip(&tau.spins) {
        counts[s][t] += 1;
    }
    let mut best = (0usize, Vec::new());
    for kappa in all_permutations(q) {
        let matches: usize = (0..q).map(|j| counts[kappa[j]][j]).sum();
        if matches > best.0 || best.1.is_empty() {
            best = (matches, kappa);
        }
    }
    let rho = counts.iter().map(|row| row.iter().map(|&c| c as f64 / n).collect()).collect();
    let agreement = (q as f64 * best.0 as f64 / n - 1.0) / (q as f64 - 1.0);
    Ok(OverlapStats { rho, agreement, best_permutation: best.1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(v: &[usize]) -> Assignment {
        Assignment::new(v.to_vec())
    }

    #[test]
    fn self_agreement_is_one() {
        let s = a(&[0, 1, 1, 2, 0]);
        let o = overlap(&s, &s, 3).unwrap();
        assert_eq!(o.agreement, 1.0);
        assert_eq!(o.rho[0][0], 0.4);
        assert_eq!(o.rho[1][1], 0.4);
        assert_eq!(o.rho[2][2], 0.2);
    }

    #[test]
    fn cyclic_relabelling_agrees_fully() {
        assert_eq!(overlap(&a(&[0, 1, 2]), &a(&[1, 2, 0]), 3).unwrap().agreement, 1.0);
    }

    #[test]
    fn orthogonal_binary_assignments() {
        assert_eq!(overlap(&a(&[0, 0, 1, 1]), &a(&[0, 1, 0, 1]), 2).unwrap().agreement, 0.0);
    }

    #[test]
    fn large_q_is_refused() {
        let s = a(&[0, 1]);
        assert!(matches!(overlap(&s, &s, 9), Err(Error::Budget { .. })));
    }
}
