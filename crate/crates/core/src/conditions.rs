//! Numerical checks of the three hypotheses on the weight-function prior:
//! SYM (exact), BAL (grid plus random points) and POS (Monte Carlo over a
//! stress family of mean-uniform message laws).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::model::{decode_into, Model};
use crate::popdyn::ProbVec;
use crate::rng::{derive_key, stream, tag, StreamRng};
use crate::stats::EstimateWithError;

/// Exact-sum tolerance for SYM.
pub const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Sym,
    Bal,
    Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A counterexample. Spins and slots are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// S(spin, slot) differs from S(other_spin, other_slot).
    Sym { spin: usize, slot: usize, value: f64, other_spin: usize, other_slot: usize, other_value: f64 },
    /// F(mu) exceeds F(uniform).
    BalMaximum { mu: ProbVec, value: f64, uniform_value: f64 },
    /// F((mu + nu)/2) < (F(mu) + F(nu))/2.
    BalConcavity { mu: ProbVec, nu: ProbVec, midpoint_value: f64, chord_value: f64 },
    /// The POS expectation is significantly negative for this (π, π′, l).
    Pos { pi: MessageLaw, pi_prime: MessageLaw, l: u32, seed: u64, samples: usize, estimate: f64, stderr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub verdict: Verdict,
    /// SYM: max |S − S′|. BAL: largest violation (0 when none). POS: largest
    /// −estimate/stderr over all cells.
    pub max_residual: f64,
    pub witness: Option<Witness>,
    pub samples_used: u64,
    /// What was tested, e.g. the POS stress family.
    pub notes: String,
}

/// S(σ, i) = Σ_τ E[Ψ(τ)]·1{τ_i = σ}, indexed `[i][σ]`.
pub fn sym_sums(model: &Model) -> Vec<Vec<f64>> {
    let (q, k) = (model.q(), model.k());
    let mean = model.mean_table();
    let mut sums = vec![vec![0.0; q]; k];
    let mut tau = vec![0; k];
    for (idx, &m) in mean.iter().enumerate() {
        decode_into(idx, q, &mut tau);
        for (i, &s) in tau.iter().enumerate() {
            sums[i][s] += m;
        }
    }
    sums
}

pub fn check_sym(model: &Model) -> ConditionReport {
    let sums = sym_sums(model);
    let mut hi = (f64::NEG_INFINITY, 0, 0);
    let mut lo = (f64::INFINITY, 0, 0);
    for (slot, row) in sums.iter().enumerate() {
        for (spin, &v) in row.iter().enumerate() {
            if v > hi.0 {
                hi = (v, spin, slot);
            }
            if v < lo.0 {
                lo = (v, spin, slot);
            }
        }
    }
    let residual = hi.0 - lo.0;
    let pass = residual < SYM_TOL;
    ConditionReport {
        condition: Condition::Sym,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        max_residual: residual,
        witness: (!pass).then(|| Witness::Sym {
            spin: hi.1,
            slot: hi.2,
            value: hi.0,
            other_spin: lo.1,
            other_slot: lo.2,
            other_value: lo.0,
        }),
        samples_used: 0,
        notes: "exact summation over all (spin, slot) pairs".into(),
    }
}

/// F(μ) = Σ_σ E[Ψ(σ)]·∏ μ(σ_i), given the mean table.
pub fn bal_value(mean_table: &[f64], q: usize, k: usize, mu: &[f64]) -> f64 {
    let mut tau = vec![0; k];
    mean_table
        .iter()
        .enumerate()
        .map(|(idx, &m)| {
            decode_into(idx, q, &mut tau);
            m * tau.iter().map(|&s| mu[s]).product::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalOptions {
    pub grid_resolution: usize,
    pub random_trials: usize,
    #[serde(default = "default_bal_tol")]
    pub tol: f64,
}

fn default_bal_tol() -> f64 {
    1e-10
}

impl Default for BalOptions {
    fn default() -> Self {
        Self { grid_resolution: 10, random_trials: 1000, tol: default_bal_tol() }
    }
}

/// Work cap (grid points × table entries) beyond which BAL is inconclusive.
const BAL_WORK_CAP: f64 = 2e8;

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All points of the simplex with coordinates in {0, 1/r, …, 1}.
fn simplex_grid(q: usize, r: usize) -> Vec<Vec<f64>> {
    fn rec(q: usize, r: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() == q - 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&c| c as f64 / r as f64).collect());
            prefix.pop();
            return;
        }
        for c in (0..=left).rev() {
            prefix.push(c);
            rec(q, r, left - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(q, r, r, &mut Vec::with_capacity(q), &mut out);
    out
}

/// A uniform point of the simplex, optionally pulled towards its centre.
fn random_simplex_point(q: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..q).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    if rng.gen::<bool>() {
        let t: f64 = rng.gen();
        v.iter_mut().for_each(|x| *x = t * *x + (1.0 - t) / q as f64);
    }
    v
}

pub fn check_bal(model: &Model, opts: &BalOptions, seed: u64) -> Result<ConditionReport> {
    if opts.grid_resolution < 10 {
        return param(format!("grid_resolution must be >= 10, got {}", opts.grid_resolution));
    }
    if opts.random_trials < 100 {
        return param(format!("random_trials must be >= 100, got {}", opts.random_trials));
    }
    let (q, k) = (model.q(), model.k());
    let grid_size = binomial(opts.grid_resolution + q - 1, q - 1);
    let notes = format!(
        "simplex grid at resolution {} plus {} random points; {} random midpoint pairs",
        opts.grid_resolution, opts.random_trials, opts.random_trials
    );
    if (grid_size + opts.random_trials as f64) * model.table_len() as f64 > BAL_WORK_CAP {
        return Ok(ConditionReport {
            condition: Condition::Bal,
            verdict: Verdict::Inconclusive,
            max_residual: f64::NAN,
            witness: None,
            samples_used: 0,
            notes: format!("{notes}; grid of {grid_size:.0} points is beyond the work cap"),
        });
    }
    let mean = model.mean_table();
    let f = |mu: &[f64]| bal_value(&mean, q, k, mu);
    let uniform = vec![1.0 / q as f64; q];
    let f_uniform = f(&uniform);

    let mut points = simplex_grid(q, opts.grid_resolution);
    let mut rng = stream(seed, &[tag::BAL, 0]);
    for _ in 0..opts.random_trials {
        points.push(random_simplex_point(q, &mut rng));
    }
    let values: Vec<f64> = points.par_iter().map(|p| f(p)).collect();
    let mut samples_used = points.len() as u64;

    // (a) maximum at the uniform distribution
    let (worst, excess) = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (i, v - f_uniform))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    if excess > opts.tol {
        return Ok(ConditionReport {
            condition: Condition::Bal,
            verdict: Verdict::Fail,
            max_residual: excess,
            witness: Some(Witness::BalMaximum {
                mu: ProbVec(points[worst].clone()),
                value: values[worst],
                uniform_value: f_uniform,
            }),
            samples_used,
            notes,
        });
    }

    // (b) midpoint concavity on random pairs of tested points
    let mut worst_gap = (0.0, None);
    for _ in 0..opts.random_trials {
        let (a, b) = (rng.gen_range(0..points.len()), rng.gen_range(0..points.len()));
        let mid: Vec<f64> = points[a].iter().zip(&points[b]).map(|(x, y)| 0.5 * (x + y)).collect();
        let fm = f(&mid);
        let chord = 0.5 * (values[a] + values[b]);
        samples_used += 1;
        if chord - fm > worst_gap.0 {
            worst_gap = (chord - fm, Some((a, b, fm, chord)));
        }
    }
    let residual = excess.max(0.0).max(worst_gap.0);
    if worst_gap.0 > opts.tol {
        let (a, b, fm, chord) = worst_gap.1.expect("recorded with the gap");
        return Ok(ConditionReport {
            condition: Condition::Bal,
            verdict: Verdict::Fail,
            max_residual: residual,
            witness: Some(Witness::BalConcavity {
                mu: ProbVec(points[a].clone()),
                nu: ProbVec(points[b].clone()),
                midpoint_value: fm,
                chord_value: chord,
            }),
            samples_used,
            notes,
        });
    }
    Ok(ConditionReport {
        condition: Condition::Bal,
        verdict: Verdict::Pass,
        max_residual: residual,
        witness: None,
        samples_used,
        notes,
    })
}

/// A finitely supported law on messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageLaw {
    pub label: String,
    pub weights: Vec<f64>,
    pub atoms: Vec<ProbVec>,
}

impl MessageLaw {
    /// Checks normalization and that the mean message is uniform within 1e-9.
    pub fn validate(&self, q: usize) -> Result<()> {
        if self.atoms.is_empty() || self.atoms.len() != self.weights.len() {
            return param(format!("law '{}' needs one weight per atom", self.label));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return param(format!("law '{}' weights must be >= 0 and sum to 1", self.label));
        }
        let mut mean = vec![0.0; q];
        for (w, a) in self.weights.iter().zip(&self.atoms) {
            if a.q() != q || !a.is_valid(1e-12) {
                return param(format!("law '{}' has an atom that is not a distribution on {q} spins", self.label));
            }
            for (m, &x) in mean.iter_mut().zip(a.as_slice()) {
                *m += w * x;
            }
        }
        let dev = mean.iter().map(|m| (m - 1.0 / q as f64).abs()).fold(0.0, f64::max);
        if dev > 1e-9 {
            return param(format!("law '{}' is not mean-uniform (deviation {dev:.3e})", self.label));
        }
        Ok(())
    }

    fn sample<'a>(&'a self, cumulative: &[f64], rng: &mut StreamRng) -> &'a [f64] {
        let u = rng.gen::<f64>() * cumulative.last().copied().unwrap_or(1.0);
        let i = cumulative.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
        self.atoms[i].as_slice()
    }

    fn cumulative(&self) -> Vec<f64> {
        self.weights
            .iter()
            .scan(0.0, |acc, &w| {
                *acc += w;
                Some(*acc)
            })
            .collect()
    }

    pub fn uniform_atom(q: usize) -> Self {
        Self { label: "uniform atom".into(), weights: vec![1.0], atoms: vec![ProbVec::uniform(q)] }
    }

    /// All cyclic shifts of each base vector, equally weighted.
    fn cyclic(label: String, q: usize, bases: &[Vec<f64>]) -> Self {
        let mut atoms = Vec::with_capacity(bases.len() * q);
        for b in bases {
            for shift in 0..q {
                atoms.push(ProbVec((0..q).map(|s| b[(s + shift) % q]).collect()));
            }
        }
        let w = 1.0 / atoms.len() as f64;
        Self { label, weights: vec![w; atoms.len()], atoms }
    }

    /// (1 − ε)·δ_σ + ε·uniform for every σ.
    pub fn polarized(q: usize, epsilon: f64) -> Self {
        let base: Vec<f64> = (0..q).map(|s| (if s == 0 { 1.0 - epsilon } else { 0.0 }) + epsilon / q as f64).collect();
        Self::cyclic(format!("polarized(eps={epsilon:.4})"), q, &[base])
    }

    /// Weight t on the uniform atom, 1 − t spread over the polarized atoms.
    pub fn two_point(q: usize, t: f64, epsilon: f64) -> Self {
        let pol = Self::polarized(q, epsilon);
        let mut weights = vec![t];
        weights.extend(pol.weights.iter().map(|w| w * (1.0 - t)));
        let mut atoms = vec![ProbVec::uniform(q)];
        atoms.extend(pol.atoms);
        Self { label: format!("two-point(t={t:.4}, eps={epsilon:.4})"), weights, atoms }
    }

    /// Cyclic symmetrization of `m` Dirichlet(1) draws.
    pub fn dirichlet(q: usize, m: usize, rng: &mut StreamRng) -> Self {
        let bases: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let v: Vec<f64> = (0..q).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let total: f64 = v.iter().sum();
                v.into_iter().map(|x| x / total).collect()
            })
            .collect();
        Self::cyclic(format!("dirichlet-mixture(m={m})"), q, &bases)
    }

    fn stress(kind: usize, q: usize, rng: &mut StreamRng) -> Self {
        match kind % 4 {
            0 => Self::uniform_atom(q),
            1 => Self::polarized(q, rng.gen()),
            2 => Self::dirichlet(q, 1 + rng.gen_range(0..4), rng),
            _ => Self::two_point(q, rng.gen(), rng.gen()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosOptions {
    pub l_max: u32,
    pub outer_samples: usize,
    pub family_size: usize,
    #[serde(default = "default_pass_sigma")]
    pub pass_sigma: f64,
    #[serde(default = "default_fail_sigma")]
    pub fail_sigma: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_pass_sigma() -> f64 {
    3.0
}
fn default_fail_sigma() -> f64 {
    5.0
}
fn default_batches() -> usize {
    20
}

impl Default for PosOptions {
    fn default() -> Self {
        Self {
            l_max: 6,
            outer_samples: 10_000,
            family_size: 12,
            pass_sigma: default_pass_sigma(),
            fail_sigma: default_fail_sigma(),
            batches: default_batches(),
        }
    }
}

/// Absolute floor under the σ-bands, so roundoff-level negatives of exactly
/// computed zero terms are not read as violations.
const POS_FLOOR: f64 = 1e-12;

/// Estimates the POS expectation for l = 2..=l_max. The average over Ψ is
/// taken exactly; only the messages are sampled.
pub fn pos_estimate(
    model: &Model,
    pi: &MessageLaw,
    pi_prime: &MessageLaw,
    l_max: u32,
    samples: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<EstimateWithError>> {
    let (q, k) = (model.q(), model.k());
    pi.validate(q)?;
    pi_prime.validate(q)?;
    if l_max < 2 {
        return param("l_max must be >= 2");
    }
    if samples < 2 {
        return param("need at least 2 samples");
    }
    let (cum, cum_prime) = (pi.cumulative(), pi_prime.cumulative());
    let levels = (l_max - 1) as usize;
    let len = model.table_len();
    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[tag::POS, i as u64]);
            let mus: Vec<&[f64]> = (0..k).map(|_| pi.sample(&cum, &mut rng)).collect();
            let primes: Vec<&[f64]> = (0..k).map(|_| pi_prime.sample(&cum_prime, &mut rng)).collect();
            let mut tau = vec![0; k];
            let mut out = vec![0.0; levels];
            for (w, &p) in model.weights().iter().zip(model.priors()) {
                if p == 0.0 {
                    continue;
                }
                // s_all: all from π; s_prime: all from π′; s_mixed[i]: slot i from π
                let (mut s_all, mut s_prime) = (0.0, 0.0);
                let mut s_mixed = vec![0.0; k];
                for idx in 0..len {
                    decode_into(idx, q, &mut tau);
                    let v = w.at(idx);
                    let a: f64 = tau.iter().zip(&mus).map(|(&t, m)| m[t]).product();
                    let b: f64 = tau.iter().zip(&primes).map(|(&t, m)| m[t]).product();
                    s_all += v * a;
                    s_prime += v * b;
                    for (slot, sm) in s_mixed.iter_mut().enumerate() {
                        let mut prod = mus[slot][tau[slot]];
                        for (j, m) in primes.iter().enumerate() {
                            if j != slot {
                                prod *= m[tau[j]];
                            }
                        }
                        *sm += v * prod;
                    }
                }
                let (x, y) = (1.0 - s_all, 1.0 - s_prime);
                for (li, o) in out.iter_mut().enumerate() {
                    let l = li as i32 + 2;
                    let mixed: f64 = s_mixed.iter().map(|s| (1.0 - s).powi(l)).sum();
                    *o += p * (x.powi(l) + (k as f64 - 1.0) * y.powi(l) - mixed);
                }
            }
            out
        })
        .collect();
    Ok((0..levels)
        .map(|li| {
            let column: Vec<f64> = rows.iter().map(|r| r[li]).collect();
            EstimateWithError::from_samples(&column, batches)
        })
        .collect())
}

pub fn check_pos(model: &Model, opts: &PosOptions, seed: u64) -> Result<ConditionReport> {
    if opts.l_max < 2 {
        return param(format!("l_max must be >= 2, got {}", opts.l_max));
    }
    if opts.outer_samples < 10_000 {
        return param(format!("outer_samples must be >= 10000, got {}", opts.outer_samples));
    }
    if opts.family_size == 0 {
        return param("family_size must be >= 1");
    }
    let q = model.q();
    let mut worst: Option<(f64, Witness)> = None;
    let mut any_fail = false;
    let mut all_pass = true;
    let mut max_residual = f64::NEG_INFINITY;
    for pair in 0..opts.family_size {
        let mut rng = stream(seed, &[tag::POS, u64::MAX, pair as u64]);
        let pi = MessageLaw::stress(pair / 2, q, &mut rng);
        // even pairs are matched (π = π′), odd pairs mix two families
        let pi_prime = if pair % 2 == 0 { pi.clone() } else { MessageLaw::stress(pair / 2 + 1 + pair / 8, q, &mut rng) };
        let cell_seed = derive_key(seed, &[tag::POS, pair as u64]);
        let estimates = pos_estimate(model, &pi, &pi_prime, opts.l_max, opts.outer_samples, opts.batches, cell_seed)?;
        for (li, e) in estimates.iter().enumerate() {
            let l = li as u32 + 2;
            let z = if e.stderr > 0.0 { -e.mean / e.stderr } else if e.mean < -POS_FLOOR { f64::INFINITY } else { 0.0 };
            max_residual = max_residual.max(z);
            if e.mean < -(opts.pass_sigma * e.stderr).max(POS_FLOOR) {
                all_pass = false;
            }
            if e.mean < -(opts.fail_sigma * e.stderr).max(POS_FLOOR) {
                any_fail = true;
            }
            if e.mean < -(opts.pass_sigma * e.stderr).max(POS_FLOOR) && worst.as_ref().is_none_or(|(wz, _)| z > *wz) {
                worst = Some((
                    z,
                    Witness::Pos {
                        pi: pi.clone(),
                        pi_prime: pi_prime.clone(),
                        l,
                        seed: cell_seed,
                        samples: opts.outer_samples,
                        estimate: e.mean,
                        stderr: e.stderr,
                    },
                ));
            }
        }
    }
    let verdict = if any_fail {
        Verdict::Fail
    } else if all_pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(ConditionReport {
        condition: Condition::Pos,
        verdict,
        max_residual,
        witness: if verdict == Verdict::Pass { None } else { worst.map(|(_, w)| w) },
        samples_used: (opts.outer_samples * opts.family_size) as u64,
        notes: format!(
            "stress family of {} (pi, pi') pairs cycling uniform atom, polarized, Dirichlet mixture and two-point laws, \
             all cyclically symmetrized; even pairs matched; l = 2..={}; pass means no violation found",
            opts.family_size, opts.l_max
        ),
    })
}

/// Re-evaluates a witness and reports whether the violation reproduces.
pub fn witness_reproduces(model: &Model, witness: &Witness, tol: f64) -> Result<bool> {
    let (q, k) = (model.q(), model.k());
    Ok(match witness {
        Witness::Sym { spin, slot, other_spin, other_slot, .. } => {
            let s = sym_sums(model);
            (s[*slot][*spin] - s[*other_slot][*other_spin]).abs() >= SYM_TOL
        }
        Witness::BalMaximum { mu, .. } => {
            let mean = model.mean_table();
            bal_value(&mean, q, k, mu.as_slice()) - bal_value(&mean, q, k, &vec![1.0 / q as f64; q]) > tol
        }
        Witness::BalConcavity { mu, nu, .. } => {
            let mean = model.mean_table();
            let mid: Vec<f64> = mu.as_slice().iter().zip(nu.as_slice()).map(|(a, b)| 0.5 * (a + b)).collect();
            let chord = 0.5 * (bal_value(&mean, q, k, mu.as_slice()) + bal_value(&mean, q, k, nu.as_slice()));
            chord - bal_value(&mean, q, k, &mid) > tol
        }
        Witness::Pos { pi, pi_prime, l, seed, samples, estimate, .. } => {
            let e = pos_estimate(model, pi, pi_prime, *l, *samples, default_batches(), *seed)?;
            e.last().is_some_and(|x| x.mean == *estimate)
        }
    })
}
