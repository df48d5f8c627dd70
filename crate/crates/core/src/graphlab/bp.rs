//! Belief propagation on a single instance with the Bethe log-partition.
//! Pins enter as 0/1 variable priors.

use serde::{Deserialize, Serialize};

use super::instance::FactorGraphInstance;
use crate::error::{param, Result};
use crate::model::{decode_into, Model};
use crate::popdyn::ProbVec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpOptions {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self { max_iters: 1000, damping: 0.0, tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    /// Bethe approximation of ln Z; `null` in JSON when not finite.
    #[serde(with = "crate::stats::open_float")]
    pub log_z: f64,
    pub marginals: Vec<ProbVec>,
    pub converged: bool,
    pub iterations: usize,
    /// Messages were reset to uniform after a vanishing normalizer.
    pub reinitialized: bool,
}

fn normalize(v: &mut [f64]) -> bool {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= total);
    true
}

struct Graph<'a> {
    model: &'a Model,
    instance: &'a FactorGraphInstance,
    q: usize,
    k: usize,
    /// Edge e = a·k + h joins constraint a and its h-th neighbor.
    var_edges: Vec<Vec<usize>>,
    prior: Vec<Vec<f64>>,
}

impl Graph<'_> {
    fn var_of(&self, e: usize) -> usize {
        self.instance.constraints[e / self.k].vars()[e % self.k]
    }

    /// m̂_e(σ) ∝ Σ_τ 1{τ_h = σ} ψ_a(τ) ∏_{g≠h} ν_{a,g}(τ_g)
    fn factor_update(&self, e: usize, nu: &[Vec<f64>], out: &mut [f64], tau: &mut [usize]) -> bool {
        let (a, h) = (e / self.k, e % self.k);
        let w = &self.model.weights()[self.instance.constraints[a].psi()];
        out.iter_mut().for_each(|x| *x = 0.0);
        for idx in 0..self.model.table_len() {
            decode_into(idx, self.q, tau);
            let mut prod = w.at(idx);
            for (g, &t) in tau.iter().enumerate() {
                if g != h {
                    prod *= nu[a * self.k + g][t];
                }
            }
            out[tau[h]] += prod;
        }
        normalize(out)
    }

    /// ν_e(σ) ∝ prior_x(σ) ∏_{e′∋x, e′≠e} m̂_{e′}(σ)
    fn variable_update(&self, e: usize, mhat: &[Vec<f64>], out: &mut [f64]) -> bool {
        let x = self.var_of(e);
        out.copy_from_slice(&self.prior[x]);
        for &f in &self.var_edges[x] {
            if f != e {
                out.iter_mut().zip(&mhat[f]).for_each(|(o, m)| *o *= m);
            }
        }
        normalize(out)
    }
}

/// Runs flooding BP to convergence or `max_iters`.
pub fn bp_run(instance: &FactorGraphInstance, model: &Model, opts: &BpOptions) -> Result<BpResult> {
    instance.validate(model)?;
    if opts.max_iters == 0 {
        return param("max_iters must be >= 1");
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return param(format!("damping must lie in [0, 1), got {}", opts.damping));
    }
    let (q, k, n) = (model.q(), model.k(), instance.n);
    let mut prior = vec![vec![1.0; q]; n];
    for p in &instance.pinned {
        prior[p.0].iter_mut().enumerate().for_each(|(s, x)| {
            if s != p.1 {
                *x = 0.0
            }
        });
    }
    let mut var_edges = vec![Vec::new(); n];
    for (a, c) in instance.constraints.iter().enumerate() {
        for (h, &v) in c.vars().iter().enumerate() {
            var_edges[v].push(a * k + h);
        }
    }
    let g = Graph { model, instance, q, k, var_edges, prior };
    let edges = instance.constraints.len() * k;
    let uniform = vec![1.0 / q as f64; q];
    let initial_nu = |e: usize| {
        let mut p = g.prior[g.var_of(e)].clone();
        if normalize(&mut p) {
            p
        } else {
            uniform.clone()
        }
    };
    let mut nu: Vec<Vec<f64>> = (0..edges).map(initial_nu).collect();
    let mut mhat = vec![uniform.clone(); edges];
    let mut next = vec![0.0; q];
    let mut tau = vec![0; k];
    let mut converged = edges == 0;
    let mut reinitialized = false;
    let mut iterations = 0;
    let mut failed = false;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut delta: f64 = 0.0;
        let mut ok = true;
        for e in 0..edges {
            if !g.factor_update(e, &nu, &mut next, &mut tau) {
                ok = false;
                break;
            }
            delta = delta.max(next.iter().zip(&mhat[e]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            mhat[e].copy_from_slice(&next);
        }
        if ok {
            for e in 0..edges {
                if !g.variable_update(e, &mhat, &mut next) {
                    ok = false;
                    break;
                }
                for (o, &x) in nu[e].iter_mut().zip(&next) {
                    let v = (1.0 - opts.damping) * x + opts.damping * *o;
                    delta = delta.max((v - *o).abs());
                    *o = v;
                }
            }
        }
        if !ok {
            if reinitialized {
                failed = true;
                break;
            }
            reinitialized = true;
            nu.iter_mut().for_each(|m| m.copy_from_slice(&uniform));
            mhat.iter_mut().for_each(|m| m.copy_from_slice(&uniform));
            continue;
        }
        converged = delta < opts.tol;
    }

    let mut log_z = 0.0;
    for (a, c) in instance.constraints.iter().enumerate() {
        let w = &model.weights()[c.psi()];
        let mut z = 0.0;
        for idx in 0..model.table_len() {
            decode_into(idx, q, &mut tau);
            z += w.at(idx) * tau.iter().enumerate().map(|(h, &t)| nu[a * k + h][t]).product::<f64>();
        }
        log_z += z.ln();
    }
    let mut marginals = Vec::with_capacity(n);
    for x in 0..n {
        let mut b = g.prior[x].clone();
        for &e in &g.var_edges[x] {
            b.iter_mut().zip(&mhat[e]).for_each(|(o, m)| *o *= m);
        }
        log_z += b.iter().sum::<f64>().ln();
        if !normalize(&mut b) {
            b = uniform.clone();
        }
        marginals.push(ProbVec(b));
    }
    for e in 0..edges {
        log_z -= nu[e].iter().zip(&mhat[e]).map(|(a, b)| a * b).sum::<f64>().ln();
    }
    Ok(BpResult {
        log_z: if failed { f64::NAN } else { log_z },
        marginals,
        converged: converged && !failed,
        iterations,
        reinitialized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphlab::exact::exact_partition;
    use crate::graphlab::instance::{Constraint, Pin};
    use crate::model::{make_model, ModelSpec};

    fn path(n: usize) -> FactorGraphInstance {
        FactorGraphInstance::new(n, (0..n - 1).map(|i| Constraint(0, vec![i, i + 1])).collect())
    }

    fn assert_matches_exact(g: &FactorGraphInstance, model: &Model) {
        let bp = bp_run(g, model, &BpOptions::default()).unwrap();
        let ex = exact_partition(g, model).unwrap();
        assert!(bp.converged);
        assert!((bp.log_z - ex.log_z).abs() < 1e-8, "{} vs {}", bp.log_z, ex.log_z);
        for (a, b) in bp.marginals.iter().zip(&ex.marginals) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn exact_on_a_path() {
        let model = make_model(&ModelSpec::Potts { q: 3, beta: None, c: Some(0.5) }).unwrap();
        assert_matches_exact(&path(5), &model);
    }

    #[test]
    fn exact_on_a_pinned_path() {
        let model = make_model(&ModelSpec::Potts { q: 3, beta: None, c: Some(0.5) }).unwrap();
        let mut g = path(5);
        g.pinned.push(Pin(4, 2));
        assert_matches_exact(&g, &model);
    }

    #[test]
    fn single_free_variable() {
        let model = make_model(&ModelSpec::Potts { q: 4, beta: Some(1.0), c: None }).unwrap();
        let r = bp_run(&FactorGraphInstance::new(1, vec![]), &model, &BpOptions::default()).unwrap();
        assert!((r.log_z - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn contradictory_pins_do_not_converge() {
        let model = make_model(&ModelSpec::Potts { q: 2, beta: Some(1.0), c: None }).unwrap();
        let mut g = path(2);
        g.pinned = vec![Pin(0, 0), Pin(0, 1)];
        let r = bp_run(&g, &model, &BpOptions::default()).unwrap();
        assert!(!r.converged);
        assert!(r.reinitialized);
    }

    #[test]
    fn bad_options_are_rejected() {
        let model = make_model(&ModelSpec::Potts { q: 2, beta: Some(1.0), c: None }).unwrap();
        assert!(bp_run(&path(2), &model, &BpOptions { max_iters: 0, ..Default::default() }).is_err());
        assert!(bp_run(&path(2), &model, &BpOptions { damping: 1.0, ..Default::default() }).is_err());
    }
}
