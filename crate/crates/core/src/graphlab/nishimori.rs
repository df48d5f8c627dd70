//! Exact check of the Nishimori identity
//! P[σ̂ = σ, G*(σ̂) = G] = P[Ĝ = G]·μ_G(σ) on tiny (n, m).

use serde::{Deserialize, Serialize};

use super::exact::{exact_partition, for_each_graph, graph_count, mean_constraint_weight};
use crate::error::{Error, Result};
use crate::model::Model;

/// Largest number of (graph, assignment) pairs enumerated.
pub const NISHIMORI_BUDGET: u128 = 1 << 22;
pub const NISHIMORI_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NishimoriReport {
    pub n: usize,
    pub m: usize,
    pub graphs: u64,
    pub assignments: u64,
    pub tv_distance: f64,
    pub pass: bool,
}

/// Computes both joint laws on (graph, assignment) pairs exactly and returns
/// their total-variation distance.
///
/// Law (i): σ̂ with P ∝ E[ψ_G(σ)], then G with P[G | σ] = P_null(G)ψ_G(σ)/E[ψ_G(σ)].
/// Law (ii): Ĝ with P ∝ P_null(G)Z(G), then σ from the Gibbs measure μ_G.
pub fn nishimori_exact_check(n: usize, m: usize, model: &Model) -> Result<NishimoriReport> {
    let q = model.q();
    let assignments = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    let required = graph_count(n, m, model).saturating_mul(assignments);
    if required > NISHIMORI_BUDGET || n == 0 {
        return Err(Error::Budget { required, budget: NISHIMORI_BUDGET });
    }
    let configs: Vec<Vec<usize>> = (0..assignments as usize)
        .map(|mut x| {
            let mut s = vec![0; n];
            for v in (0..n).rev() {
                s[v] = x % q;
                x /= q;
            }
            s
        })
        .collect();
    // law (i), first stage
    let avg_weight: Vec<f64> = configs.iter().map(|s| mean_constraint_weight(model, s).powi(m as i32)).collect();
    let first_moment_i: f64 = avg_weight.iter().sum();
    // law (ii) normalizer E[Z] by graph enumeration
    let mut first_moment_ii = 0.0;
    let mut failure = None;
    for_each_graph(n, m, model, |g, p| match exact_partition(g, model) {
        Ok(r) if !r.zero_partition => first_moment_ii += p * r.log_z.exp(),
        Ok(_) => {}
        Err(e) => failure = failure.take().or(Some(e)),
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut tv = 0.0;
    let mut graphs = 0u64;
    for_each_graph(n, m, model, |g, p_null| {
        graphs += 1;
        let weights: Vec<f64> = configs.iter().map(|s| g.log_weight(model, s).exp()).collect();
        let z: f64 = weights.iter().sum();
        let p_graph_ii = p_null * z / first_moment_ii;
        for ((w, avg), _) in weights.iter().zip(&avg_weight).zip(&configs) {
            let p_i = if *avg > 0.0 { (avg / first_moment_i) * (p_null * w / avg) } else { 0.0 };
            let p_ii = if z > 0.0 { p_graph_ii * (w / z) } else { 0.0 };
            tv += (p_i - p_ii).abs();
        }
    });
    let tv_distance = 0.5 * tv;
    Ok(NishimoriReport {
        n,
        m,
        graphs,
        assignments: assignments as u64,
        tv_distance,
        pass: tv_distance < NISHIMORI_TOL,
    })
}
