use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rng::{stream, tag};

/// A point of the probability simplex over `0..q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVec(pub Vec<f64>);

impl ProbVec {
    pub fn uniform(q: usize) -> Self {
        ProbVec(vec![1.0 / q as f64; q])
    }

    pub fn point_mass(q: usize, spin: usize) -> Self {
        let mut v = vec![0.0; q];
        v[spin] = 1.0;
        ProbVec(v)
    }

    /// Normalizes non-negative weights; `None` when they sum to zero.
    pub fn from_weights(weights: Vec<f64>) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        Some(ProbVec(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|&x| x >= 0.0) && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// A finite sample of N messages standing in for a distribution on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    q: usize,
    generation: u64,
    /// Members stored back to back, `q` entries each.
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Trivial,
    Planted,
}

impl std::str::FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trivial" => Ok(InitKind::Trivial),
            "planted" => Ok(InitKind::Planted),
            other => Err(format!("unknown init kind `{other}` (expected trivial or planted)")),
        }
    }
}

impl Population {
    pub fn from_members(q: usize, members: &[ProbVec]) -> Result<Self> {
        if q < 2 {
            return param("populations need q >= 2");
        }
        let mut data = Vec::with_capacity(q * members.len());
        for m in members {
            if m.q() != q {
                return param(format!("member has {} entries, expected {q}", m.q()));
            }
            data.extend_from_slice(m.as_slice());
        }
        Ok(Self { q, generation: 0, data })
    }

    pub(crate) fn from_raw(q: usize, generation: u64, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % q, 0);
        Self { q, generation, data }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    #[inline]
    pub fn member(&self, i: usize) -> &[f64] {
        &self.data[i * self.q..(i + 1) * self.q]
    }

    pub fn members(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.q)
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Empirical mean message.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.q];
        for m in self.members() {
            for (a, &b) in mean.iter_mut().zip(m) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|a| *a /= n);
        mean
    }

    /// Sup-norm distance of the empirical mean from the uniform vector.
    pub fn mean_deviation(&self) -> f64 {
        let u = 1.0 / self.q as f64;
        self.mean().iter().map(|m| (m - u).abs()).fold(0.0, f64::max)
    }

    /// Mean of Σ_σ μ(σ)² over members; 1/q at the trivial point.
    pub fn order_parameter(&self) -> f64 {
        let total: f64 = self.members().map(|m| m.iter().map(|x| x * x).sum::<f64>()).sum();
        total / self.len() as f64
    }
}

/// Initial population: all-uniform (trivial) or smoothed point masses (planted).
pub fn init_population(kind: InitKind, q: usize, n: usize, epsilon: f64, seed: u64) -> Result<Population> {
    if n == 0 {
        return param("population size must be >= 1");
    }
    if q < 2 {
        return param("q must be >= 2");
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return param(format!("epsilon must lie in [0, 1], got {epsilon}"));
    }
    let u = 1.0 / q as f64;
    let data = match kind {
        InitKind::Trivial => vec![u; q * n],
        InitKind::Planted => {
            let mut rng = stream(seed, &[tag::INIT]);
            let mut data = vec![epsilon * u; q * n];
            for i in 0..n {
                let omega = rng.gen_range(0..q);
                data[i * q + omega] = (1.0 - epsilon) + epsilon * u;
            }
            data
        }
    };
    Ok(Population { q, generation: 0, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_init_is_uniform() {
        let p = init_population(InitKind::Trivial, 3, 4, 0.0, 1).unwrap();
        assert_eq!(p.len(), 4);
        for m in p.members() {
            assert_eq!(m, &[1.0 / 3.0; 3]);
        }
    }

    #[test]
    fn planted_init_smoothing() {
        let p = init_population(InitKind::Planted, 3, 50, 0.05, 9).unwrap();
        for m in p.members() {
            let big = m.iter().cloned().fold(0.0, f64::max);
            assert!((big - 58.0 / 60.0).abs() < 1e-15);
            let small: Vec<_> = m.iter().filter(|&&x| x < 0.5).collect();
            assert_eq!(small.len(), 2);
            for s in small {
                assert!((s - 1.0 / 60.0).abs() < 1e-15);
            }
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_init_mean_tends_to_uniform() {
        let n = 40_000;
        let p = init_population(InitKind::Planted, 2, n, 0.0, 3).unwrap();
        assert!(p.members().all(|m| m == [1.0, 0.0] || m == [0.0, 1.0]));
        assert!(p.mean_deviation() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(init_population(InitKind::Trivial, 3, 0, 0.0, 1).is_err());
        assert!(init_population(InitKind::Planted, 3, 10, 1.5, 1).is_err());
    }
}
