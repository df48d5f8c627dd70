//! Exhaustive oracles: partition function and marginals of one instance, and
//! first-moment quantities of the null model on tiny (n, m).

use serde::{Deserialize, Serialize};

use super::instance::FactorGraphInstance;
use crate::error::{Error, Result};
use crate::model::{decode_into, Model};
use crate::popdyn::ProbVec;

/// Largest number of configurations enumerated.
pub const ENUMERATION_BUDGET: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    /// ln Z; `null` in JSON when Z = 0.
    #[serde(with = "crate::stats::open_float")]
    pub log_z: f64,
    pub marginals: Vec<ProbVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_marginals: Option<Vec<Vec<f64>>>,
    /// Every configuration has weight zero; marginals are then uniform placeholders.
    pub zero_partition: bool,
}

fn check_budget(required: u128) -> Result<()> {
    if required > ENUMERATION_BUDGET {
        return Err(Error::Budget { required, budget: ENUMERATION_BUDGET });
    }
    Ok(())
}

fn pow(q: usize, n: usize) -> u128 {
    (0..n).try_fold(1u128, |acc, _| acc.checked_mul(q as u128)).unwrap_or(u128::MAX)
}

/// Odometer over Ω^n, first variable most significant.
fn advance(sigma: &mut [usize], q: usize) {
    for s in sigma.iter_mut().rev() {
        *s += 1;
        if *s < q {
            return;
        }
        *s = 0;
    }
}

/// Z(G) = Σ_σ ψ_G(σ) by enumeration in log space, with pins as 0/1 factors.
pub fn exact_partition(instance: &FactorGraphInstance, model: &Model) -> Result<ExactResult> {
    instance.validate(model)?;
    let (q, n) = (model.q(), instance.n);
    let total = pow(q, n);
    check_budget(total)?;
    let total = total as usize;
    let mut sigma = vec![0; n];
    let mut logs = Vec::with_capacity(total);
    for _ in 0..total {
        logs.push(instance.log_weight(model, &sigma));
        advance(&mut sigma, q);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(ExactResult {
            log_z: f64::NEG_INFINITY,
            marginals: vec![ProbVec::uniform(q); n],
            pair_marginals: None,
            zero_partition: true,
        });
    }
    let mut z = 0.0;
    let mut marg = vec![vec![0.0; q]; n];
    sigma.iter_mut().for_each(|s| *s = 0);
    for &l in &logs {
        let w = (l - max).exp();
        z += w;
        for (m, &s) in marg.iter_mut().zip(&sigma) {
            m[s] += w;
        }
        advance(&mut sigma, q);
    }
    let marginals = marg.into_iter().map(|m| ProbVec(m.into_iter().map(|x| x / z).collect())).collect();
    Ok(ExactResult { log_z: max + z.ln(), marginals, pair_marginals: None, zero_partition: false })
}

/// f(σ) = n^{−k} Σ_{y ∈ [n]^k} E[Ψ(σ(y))], the mean weight one null constraint gives σ.
pub fn mean_constraint_weight(model: &Model, sigma: &[usize]) -> f64 {
    let (q, k, n) = (model.q(), model.k(), sigma.len());
    let mut counts = vec![0.0; q];
    for &s in sigma {
        counts[s] += 1.0;
    }
    let mean = model.mean_table();
    let mut tau = vec![0; k];
    let total: f64 = mean
        .iter()
        .enumerate()
        .map(|(idx, &m)| {
            decode_into(idx, q, &mut tau);
            m * tau.iter().map(|&s| counts[s]).product::<f64>()
        })
        .sum();
    total / (n as f64).powi(k as i32)
}

/// Number of (graph, assignment) pairs the Nishimori check enumerates.
pub fn graph_count(n: usize, m: usize, model: &Model) -> u128 {
    let per = (model.weights().len() as u128).saturating_mul(pow(n, model.k()));
    (0..m).fold(1u128, |acc, _| acc.saturating_mul(per))
}

/// E[Z(G(n, m, p))] = Σ_σ f(σ)^m, summed over assignments.
pub fn first_moment_by_assignments(n: usize, m: usize, model: &Model) -> Result<f64> {
    let q = model.q();
    let total = pow(q, n);
    check_budget(total)?;
    let mut sigma = vec![0; n];
    let mut sum = 0.0;
    for _ in 0..total {
        sum += mean_constraint_weight(model, &sigma).powi(m as i32);
        advance(&mut sigma, q);
    }
    Ok(sum)
}

/// Visits every null graph on n variables with m constraints together with
/// its probability P[G(n, m, p) = G].
pub(crate) fn for_each_graph(n: usize, m: usize, model: &Model, mut visit: impl FnMut(&FactorGraphInstance, f64)) {
    let k = model.k();
    let tuples = n.pow(k as u32);
    let per = model.weights().len() * tuples;
    let slot_prob = 1.0 / tuples as f64;
    let mut code = vec![0usize; m];
    let mut graph = FactorGraphInstance::new(n, vec![super::instance::Constraint(0, vec![0; k]); m]);
    loop {
        let mut prob = 1.0;
        for (c, &x) in graph.constraints.iter_mut().zip(&code) {
            let (psi, tuple) = (x / tuples, x % tuples);
            c.0 = psi;
            decode_into(tuple, n, &mut c.1);
            prob *= model.priors()[psi] * slot_prob;
        }
        if prob > 0.0 {
            visit(&graph, prob);
        }
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            code[i] += 1;
            if code[i] < per {
                break;
            }
            code[i] = 0;
        }
    }
}

/// E[Z(G(n, m, p))] by enumerating every null graph and summing Z exactly.
pub fn first_moment_by_graphs(n: usize, m: usize, model: &Model) -> Result<f64> {
    check_budget(graph_count(n, m, model).saturating_mul(pow(model.q(), n)))?;
    let mut sum = 0.0;
    let mut err = None;
    for_each_graph(n, m, model, |g, p| match exact_partition(g, model) {
        Ok(r) if !r.zero_partition => sum += p * r.log_z.exp(),
        Ok(_) => {}
        Err(e) => err = err.take().or(Some(e)),
    });
    match err {
        Some(e) => Err(e),
        None => Ok(sum),
    }
}

/// q^n ξ^m; equals the exact first moment when τ ↦ E[Ψ(τ)] is constant.
pub fn first_moment_formula(n: usize, m: usize, model: &Model) -> f64 {
    (model.q() as f64).powi(n as i32) * crate::model::xi(model).powi(m as i32)
}
