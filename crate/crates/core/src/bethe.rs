//! Monte-Carlo evaluation of the Bethe functional B(d, π).
//!
//! Each sample draws γ ~ Po(d), the child constraints with uniform slots and
//! prior-drawn weight functions, and plain (not size-biased) population
//! members. The root term is evaluated in log space. Every estimator also
//! subtracts the zero-mean control variate (γ − d)·ln ξ, which removes the
//! Poisson fluctuation of the root term at the uniform point. The Potts
//! evaluator further regresses on second-order message-deviation controls.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::model::{decode_into, lambda, xi, Model};
use crate::popdyn::Population;
use crate::rng::{stream, tag, StreamRng};
use crate::stats::{poisson, EstimateWithError};

pub const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetheOptions {
    pub samples: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_batches() -> usize {
    20
}

impl Default for BetheOptions {
    fn default() -> Self {
        Self { samples: 100_000, batches: 20 }
    }
}

impl BetheOptions {
    pub fn with_samples(samples: usize) -> Self {
        Self { samples, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return param(format!("need at least {MIN_SAMPLES} Monte-Carlo samples, got {}", self.samples));
        }
        if self.batches < 10 {
            return param(format!("need at least 10 batches, got {}", self.batches));
        }
        Ok(())
    }
}

/// A field θ = μ(+1) − μ(−1) ∈ [−1, 1] of a Boolean message.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymField(f64);

impl SymField {
    pub fn new(value: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&value) {
            return param(format!("field {value} outside [-1, 1]"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// θ = 2μ(+1) − 1, with spin 0 standing for +1.
    pub fn from_message(mu: &[f64]) -> Self {
        Self((2.0 * mu[0] - 1.0).clamp(-1.0, 1.0))
    }
}

/// The fields of a Boolean population.
pub fn fields_of(population: &Population) -> Vec<SymField> {
    assert_eq!(population.q(), 2, "fields need a Boolean population");
    population.members().map(SymField::from_message).collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// e^{L − shift}·L, i.e. Λ(e^L)·e^{−shift}, with Λ(0) = 0.
#[inline]
fn scaled_lambda_from_log(log_x: f64, shift: f64) -> f64 {
    if log_x == f64::NEG_INFINITY {
        0.0
    } else {
        (log_x - shift).exp() * log_x
    }
}

fn estimate(opts: &BetheOptions, seed: u64, f: impl Fn(&mut StreamRng) -> f64 + Sync) -> EstimateWithError {
    let values: Vec<f64> = (0..opts.samples)
        .into_par_iter()
        .map(|i| f(&mut stream(seed, &[tag::BETHE, i as u64])))
        .collect();
    EstimateWithError::from_samples(&values, opts.batches)
}

struct GenericSampler<'a> {
    model: &'a Model,
    pop: &'a Population,
    d: f64,
    ln_xi: f64,
    second_scale: f64,
}

impl GenericSampler<'_> {
    /// One Monte-Carlo sample of the integrand; `log_space` selects how the
    /// root term is assembled.
    fn sample(&self, rng: &mut StreamRng, log_space: bool) -> f64 {
        let (q, k) = (self.model.q(), self.model.k());
        let n = self.pop.len();
        let len = self.model.table_len();
        let gamma = poisson(rng, self.d);
        let mut tau = vec![0usize; k];
        let mut members = vec![0usize; k];
        let mut logs = vec![0.0; q];
        let mut direct = vec![1.0; q];
        let mut factor = vec![0.0; q];
        for _ in 0..gamma {
            let h = rng.gen_range(0..k);
            let w = &self.model.weights()[self.model.draw_weight(rng)];
            for (j, m) in members.iter_mut().enumerate() {
                if j != h {
                    *m = rng.gen_range(0..n);
                }
            }
            factor.iter_mut().for_each(|f| *f = 0.0);
            for idx in 0..len {
                decode_into(idx, q, &mut tau);
                let mut prod = w.at(idx);
                for j in 0..k {
                    if j != h {
                        prod *= self.pop.member(members[j])[tau[j]];
                    }
                }
                factor[tau[h]] += prod;
            }
            for s in 0..q {
                logs[s] += factor[s].ln();
                direct[s] *= factor[s];
            }
        }
        let root = if log_space {
            scaled_lambda_from_log(log_sum_exp(&logs), gamma as f64 * self.ln_xi + (q as f64).ln())
        } else {
            let x: f64 = direct.iter().sum();
            self.ln_xi.exp().powi(-(gamma as i32)) * lambda(x) / q as f64
        };
        // second term: one constraint with all k members drawn from π
        let w = &self.model.weights()[self.model.draw_weight(rng)];
        for m in members.iter_mut() {
            *m = rng.gen_range(0..n);
        }
        let mut s = 0.0;
        for idx in 0..len {
            decode_into(idx, q, &mut tau);
            let mut prod = w.at(idx);
            for j in 0..k {
                prod *= self.pop.member(members[j])[tau[j]];
            }
            s += prod;
        }
        root - self.second_scale * lambda(s) - (gamma as f64 - self.d) * self.ln_xi
    }
}

fn check_population(pop: &Population, q: usize, d: f64) -> Result<()> {
    if pop.is_empty() {
        return param("population is empty");
    }
    if pop.q() != q {
        return param(format!("population has q = {}, expected {q}", pop.q()));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return param(format!("d must be finite and >= 0, got {d}"));
    }
    if pop.raw().iter().any(|x| x.is_nan()) {
        return param("population contains NaN entries");
    }
    Ok(())
}

/// Monte-Carlo estimate of B(d, π) for a strictly positive model.
pub fn bethe_functional(
    population: &Population,
    model: &Model,
    d: f64,
    opts: &BetheOptions,
    seed: u64,
) -> Result<EstimateWithError> {
    bethe_functional_impl(population, model, d, opts, seed, true)
}

pub(crate) fn bethe_functional_impl(
    population: &Population,
    model: &Model,
    d: f64,
    opts: &BetheOptions,
    seed: u64,
    log_space: bool,
) -> Result<EstimateWithError> {
    model.require_soft("bethe_functional")?;
    opts.validate()?;
    check_population(population, model.q(), d)?;
    let xi = xi(model);
    let k = model.k() as f64;
    let sampler = GenericSampler {
        model,
        pop: population,
        d,
        ln_xi: xi.ln(),
        second_scale: d * (k - 1.0) / (k * xi),
    };
    Ok(estimate(opts, seed, |rng| sampler.sample(rng, log_space)))
}

/// Closed-form Potts evaluator; accepts c = 1 (graph coloring).
pub fn bethe_potts(
    q: usize,
    d: f64,
    c: f64,
    population: &Population,
    opts: &BetheOptions,
    seed: u64,
) -> Result<EstimateWithError> {
    if q < 2 {
        return param("q must be >= 2");
    }
    if !(c > 0.0 && c <= 1.0) {
        return param(format!("c must lie in (0, 1], got {c}"));
    }
    opts.validate()?;
    check_population(population, q, d)?;
    let n = population.len();
    let ln_xi = (1.0 - c / q as f64).ln();
    let ln_q = (q as f64).ln();
    let second_scale = d / (2.0 * (1.0 - c / q as f64));
    // Deviations δ = μ − u from the uniform message enter the controls below;
    // their exact population moments make the controls mean-zero.
    let u = 1.0 / q as f64;
    let mean_dev: Vec<f64> = population.mean().iter().map(|m| m - u).collect();
    let mean_sq: f64 = mean_dev.iter().map(|x| x * x).sum();
    let second_moment: f64 =
        population.members().map(|m| m.iter().map(|x| (x - u) * (x - u)).sum::<f64>()).sum::<f64>() / n as f64;
    let draws: Vec<(f64, [f64; 6])> = (0..opts.samples)
        .into_par_iter()
        .map(|i| {
            let rng = &mut stream(seed, &[tag::BETHE, i as u64]);
            let gamma = poisson(rng, d);
            let mut logs = vec![0.0; q];
            let mut dev_sum = vec![0.0; q];
            let mut diag = 0.0;
            for _ in 0..gamma {
                let mu = population.member(rng.gen_range(0..n));
                for ((l, s), &m) in logs.iter_mut().zip(dev_sum.iter_mut()).zip(mu) {
                    *l += (1.0 - c * m).ln();
                    *s += m - u;
                    diag += (m - u) * (m - u);
                }
            }
            let root = scaled_lambda_from_log(log_sum_exp(&logs), gamma as f64 * ln_xi + ln_q);
            let m1 = population.member(rng.gen_range(0..n));
            let m2 = population.member(rng.gen_range(0..n));
            let overlap: f64 = m1.iter().zip(m2).map(|(a, b)| a * b).sum();
            let s = (1.0 - c * overlap).max(0.0);
            let value = root - second_scale * lambda(s) - (gamma as f64 - d) * ln_xi;
            let g = gamma as f64;
            let cross = 0.5 * (dev_sum.iter().map(|x| x * x).sum::<f64>() - diag);
            let pair_cross: f64 = m1.iter().zip(m2).map(|(a, b)| (a - u) * (b - u)).sum();
            let pair_diag: f64 = m1.iter().chain(m2).map(|a| (a - u) * (a - u)).sum();
            let cross = cross - 0.5 * g * (g - 1.0) * mean_sq;
            let diag = diag - g * second_moment;
            let controls = [cross, g * cross, diag, g * diag, pair_cross - mean_sq, pair_diag - 2.0 * second_moment];
            (value, controls)
        })
        .collect();
    let (values, controls): (Vec<f64>, Vec<[f64; 6]>) = draws.into_iter().unzip();
    Ok(EstimateWithError::from_controlled_samples(&values, &controls, opts.batches))
}

/// The θ-parametrized LDGM functional.
pub fn ldgm_bethe(
    k: usize,
    d: f64,
    eta: f64,
    fields: &[SymField],
    opts: &BetheOptions,
    seed: u64,
) -> Result<EstimateWithError> {
    if k < 2 {
        return param("k must be >= 2");
    }
    if !(eta > 0.0 && eta < 1.0) {
        return param(format!("eta must lie in (0, 1), got {eta}"));
    }
    if fields.is_empty() {
        return param("field population is empty");
    }
    if !(d >= 0.0 && d.is_finite()) {
        return param(format!("d must be finite and >= 0, got {d}"));
    }
    opts.validate()?;
    let n = fields.len();
    let g = 1.0 - 2.0 * eta;
    let scale = d * (k as f64 - 1.0) / k as f64;
    let sign = |rng: &mut StreamRng| if rng.gen::<bool>() { 1.0 } else { -1.0 };
    Ok(estimate(opts, seed, |rng| {
        let gamma = poisson(rng, d);
        let (mut lp, mut lm) = (0.0, 0.0);
        for _ in 0..gamma {
            let j = sign(rng);
            let prod: f64 = (0..k - 1).map(|_| fields[rng.gen_range(0..n)].0).product();
            lp += (1.0 + j * g * prod).ln();
            lm += (1.0 - j * g * prod).ln();
        }
        let root = 0.5 * scaled_lambda_from_log(log_sum_exp(&[lp, lm]), 0.0);
        let j = sign(rng);
        let prod: f64 = (0..k).map(|_| fields[rng.gen_range(0..n)].0).product();
        root - scale * lambda(1.0 + j * g * prod)
    }))
}

/// ln q + d/(kξq^k)·Σ_τ E[Λ(Ψ(τ))] − sup B, with the stderr of `sup_bethe`.
pub fn mutual_info(model: &Model, d: f64, sup_bethe: &EstimateWithError) -> EstimateWithError {
    let q = model.q() as f64;
    let entropy = if d == 0.0 {
        0.0
    } else {
        d / (model.k() as f64 * xi(model) * model.table_len() as f64) * model.entropy_sum()
    };
    EstimateWithError { mean: q.ln() + entropy - sup_bethe.mean, ..*sup_bethe }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, rs_value, ModelSpec};
    use crate::popdyn::{init_population, InitKind, ProbVec};

    fn potts(q: usize, c: f64) -> Model {
        make_model(&ModelSpec::Potts { q, beta: None, c: Some(c) }).unwrap()
    }

    fn opts(samples: usize) -> BetheOptions {
        BetheOptions::with_samples(samples)
    }

    fn within(e: &EstimateWithError, target: f64, sigmas: f64) -> bool {
        (e.mean - target).abs() <= sigmas * e.stderr + 1e-12
    }

    #[test]
    fn potts_trivial_matches_rs() {
        let m = potts(3, 0.5);
        let pop = init_population(InitKind::Trivial, 3, 100, 0.0, 0).unwrap();
        let e = bethe_functional(&pop, &m, 2.0, &opts(20_000), 1).unwrap();
        let target = 3f64.ln() + (5.0f64 / 6.0).ln();
        assert!((target - 0.916_290_731_874_155).abs() < 1e-12);
        assert!(within(&e, target, 3.0), "{e:?}");
    }

    #[test]
    fn ldgm_trivial_is_ln2() {
        for k in [2, 3, 4] {
            let m = make_model(&ModelSpec::Ldgm { k, eta: 0.2 }).unwrap();
            let pop = init_population(InitKind::Trivial, 2, 10, 0.0, 0).unwrap();
            let e = bethe_functional(&pop, &m, 1.7, &opts(10_000), 2).unwrap();
            assert!(within(&e, 2f64.ln(), 3.0), "{e:?}");
            let f = ldgm_bethe(k, 1.7, 0.2, &fields_of(&pop), &opts(10_000), 2).unwrap();
            assert!(within(&f, 2f64.ln(), 3.0), "{f:?}");
        }
    }

    #[test]
    fn zero_degree_is_ln_q() {
        let m = make_model(&ModelSpec::Ksat { k: 3, beta: Some(1.0), c: None }).unwrap();
        let pop = init_population(InitKind::Planted, 2, 100, 0.1, 0).unwrap();
        let e = bethe_functional(&pop, &m, 0.0, &opts(10_000), 3).unwrap();
        assert!((e.mean - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn potts_closed_form_trivial() {
        let pop = init_population(InitKind::Trivial, 3, 10, 0.0, 0).unwrap();
        for (c, d) in [(0.3, 1.0), (0.7, 5.0), (1.0, 4.0)] {
            let e = bethe_potts(3, d, c, &pop, &opts(10_000), 4).unwrap();
            let target = 3f64.ln() + d / 2.0 * (1.0 - c / 3.0).ln();
            assert!(within(&e, target, 3.0), "c={c} d={d} {e:?}");
        }
        let e = bethe_potts(3, 4.0, 1.0, &pop, &opts(10_000), 4).unwrap();
        assert!((3f64.ln() + 2.0 * (2.0f64 / 3.0).ln() - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert!(within(&e, 0.287_682_072_451_780_9, 3.0));
    }

    #[test]
    fn potts_paths_agree_on_planted_population() {
        let m = potts(3, 0.6);
        let pop = init_population(InitKind::Planted, 3, 2_000, 0.3, 5).unwrap();
        let a = bethe_functional(&pop, &m, 3.0, &opts(40_000), 7).unwrap();
        let b = bethe_potts(3, 3.0, 0.6, &pop, &opts(40_000), 8).unwrap();
        let diff = a.minus(&b);
        assert!(diff.mean.abs() <= 3.0 * diff.stderr, "{a:?} vs {b:?}");
    }

    #[test]
    fn ldgm_paths_agree() {
        let m = make_model(&ModelSpec::Ldgm { k: 3, eta: 0.1 }).unwrap();
        let members: Vec<ProbVec> = (0..1000)
            .map(|i| {
                let x = 0.5 + 0.45 * ((i as f64 * 0.37).sin());
                ProbVec(vec![x, 1.0 - x])
            })
            .collect();
        let pop = Population::from_members(2, &members).unwrap();
        let a = bethe_functional(&pop, &m, 2.0, &opts(40_000), 9).unwrap();
        let b = ldgm_bethe(3, 2.0, 0.1, &fields_of(&pop), &opts(40_000), 10).unwrap();
        let diff = a.minus(&b);
        assert!(diff.mean.abs() <= 3.0 * diff.stderr, "{a:?} vs {b:?}");
    }

    #[test]
    fn ldgm_half_noise_is_ln2() {
        let fields: Vec<SymField> = (0..100).map(|i| SymField::new(if i % 2 == 0 { 0.9 } else { -0.9 }).unwrap()).collect();
        let e = ldgm_bethe(3, 2.5, 0.5, &fields, &opts(10_000), 1).unwrap();
        assert!((e.mean - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_space_matches_direct_at_moderate_degree() {
        let m = potts(3, 0.5);
        let pop = init_population(InitKind::Planted, 3, 500, 0.2, 1).unwrap();
        let a = bethe_functional_impl(&pop, &m, 5.0, &opts(10_000), 3, true).unwrap();
        let b = bethe_functional_impl(&pop, &m, 5.0, &opts(10_000), 3, false).unwrap();
        assert!(((a.mean - b.mean) / a.mean).abs() < 1e-10);
        let far = bethe_functional(&pop, &m, 30.0, &opts(10_000), 3).unwrap();
        assert!(far.mean.is_finite() && far.stderr.is_finite());
    }

    #[test]
    fn mutual_info_examples() {
        let m = make_model(&ModelSpec::Ldgm { k: 3, eta: 0.1 }).unwrap();
        let sup = EstimateWithError::exact(2f64.ln());
        let i = mutual_info(&m, 0.5, &sup);
        let middle = 0.5 / 3.0 * (2f64.ln() + 0.1 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
        assert!((i.mean - middle).abs() < 1e-12);
        assert!((middle - 0.061_34).abs() < 1e-4);
        let p = potts(3, 0.5);
        assert_eq!(mutual_info(&p, 0.0, &EstimateWithError::exact(3f64.ln())).mean, 0.0);
        let half = make_model(&ModelSpec::Ldgm { k: 3, eta: 0.5 - 1e-12 }).unwrap();
        assert!(mutual_info(&half, 2.0, &sup).mean.abs() < 1e-9);
    }

    #[test]
    fn rejects_coloring_and_small_m() {
        let col = make_model(&ModelSpec::ColoringClosedForm { q: 3 }).unwrap();
        let pop = init_population(InitKind::Trivial, 3, 10, 0.0, 0).unwrap();
        assert!(bethe_functional(&pop, &col, 1.0, &opts(10_000), 0).is_err());
        assert!(bethe_functional(&pop, &potts(3, 0.5), 1.0, &opts(100), 0).is_err());
        let _ = rs_value(&col, 1.0);
    }
}
