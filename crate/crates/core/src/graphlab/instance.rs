//! Factor-graph instances and their generators: null model, teacher-student
//! scheme and pinning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::model::{decode_into, Model};
use crate::rng::{stream, tag};
use crate::stats::poisson;

/// A constraint node: weight-function index and ordered neighbor tuple.
/// Serializes as `[psi, [v1, …, vk]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint(pub usize, pub Vec<usize>);

impl Constraint {
    pub fn psi(&self) -> usize {
        self.0
    }

    pub fn vars(&self) -> &[usize] {
        &self.1
    }
}

/// A hard pin `[variable, spin]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pin(pub usize, pub usize);

/// Spins of all variables, values in `0..q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    pub spins: Vec<usize>,
}

impl Assignment {
    pub fn new(spins: Vec<usize>) -> Self {
        Self { spins }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn uniform<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Self {
        Self { spins: (0..n).map(|_| rng.gen_range(0..q)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorGraphInstance {
    pub n: usize,
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub pinned: Vec<Pin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Assignment>,
    /// Pinning intensity θ when the pins came from the pinning experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl FactorGraphInstance {
    pub fn new(n: usize, constraints: Vec<Constraint>) -> Self {
        Self { n, constraints, pinned: Vec::new(), truth: None, theta: None }
    }

    /// Checks indices, arities and spin ranges against `model`.
    pub fn validate(&self, model: &Model) -> Result<()> {
        let (q, k) = (model.q(), model.k());
        for (j, c) in self.constraints.iter().enumerate() {
            if c.psi() >= model.weights().len() {
                return param(format!("constraint {j}: weight index {} out of range", c.psi()));
            }
            if c.vars().len() != k {
                return param(format!("constraint {j}: expected {k} neighbors, got {}", c.vars().len()));
            }
            if let Some(&v) = c.vars().iter().find(|&&v| v >= self.n) {
                return param(format!("constraint {j}: variable {v} out of range (n = {})", self.n));
            }
        }
        for p in &self.pinned {
            if p.0 >= self.n || p.1 >= q {
                return param(format!("pin ({}, {}) out of range", p.0, p.1));
            }
        }
        if let Some(t) = &self.truth {
            if t.len() != self.n || t.spins.iter().any(|&s| s >= q) {
                return param("truth must have n spins in 0..q");
            }
        }
        Ok(())
    }

    /// ln ψ_G(σ), −∞ when a weight or a pin vanishes.
    pub fn log_weight(&self, model: &Model, sigma: &[usize]) -> f64 {
        if self.pinned.iter().any(|p| sigma[p.0] != p.1) {
            return f64::NEG_INFINITY;
        }
        let q = model.q();
        self.constraints
            .iter()
            .map(|c| {
                let idx = c.vars().iter().fold(0, |acc, &v| acc * q + sigma[v]);
                model.weights()[c.psi()].at(idx).ln()
            })
            .sum()
    }
}

/// Number of constraints: fixed, or Poisson(dn/k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCount {
    Fixed(usize),
    Rate(f64),
}

impl EdgeCount {
    fn draw<R: Rng + ?Sized>(self, n: usize, k: usize, rng: &mut R) -> Result<usize> {
        match self {
            EdgeCount::Fixed(m) => Ok(m),
            EdgeCount::Rate(d) if d >= 0.0 && d.is_finite() => Ok(poisson(rng, d * n as f64 / k as f64)),
            EdgeCount::Rate(d) => param(format!("d must be finite and >= 0, got {d}")),
        }
    }
}

/// G(n, m, p): uniform ordered neighborhoods, prior-drawn weight functions.
pub fn gen_null(n: usize, edges: EdgeCount, model: &Model, seed: u64) -> Result<FactorGraphInstance> {
    if n == 0 {
        return param("n must be >= 1");
    }
    let k = model.k();
    let mut rng = stream(seed, &[tag::GRAPH, 0]);
    let m = edges.draw(n, k, &mut rng)?;
    let constraints = (0..m)
        .map(|_| {
            let psi = model.draw_weight(&mut rng);
            Constraint(psi, (0..k).map(|_| rng.gen_range(0..n)).collect())
        })
        .collect();
    Ok(FactorGraphInstance::new(n, constraints))
}

/// G*(n, m, p, σ*): each constraint's (neighbors, ψ) is drawn with
/// probability ∝ p(ψ)·ψ(σ*(y_1), …, σ*(y_k)).
///
/// The draw first picks (ψ, spin pattern τ) with weight p(ψ)ψ(τ)∏ n_{τ_i},
/// n_s being the size of spin class s under σ*, then picks each y_i
/// uniformly from class τ_i. Summing the target law over the tuples with
/// pattern τ gives exactly that weight, so the two-stage draw is exact.
pub fn gen_teacher(
    n: usize,
    edges: EdgeCount,
    model: &Model,
    truth: Option<Assignment>,
    seed: u64,
) -> Result<FactorGraphInstance> {
    if n == 0 {
        return param("n must be >= 1");
    }
    let (q, k) = (model.q(), model.k());
    let mut rng = stream(seed, &[tag::GRAPH, 1]);
    let truth = match truth {
        Some(t) => {
            if t.len() != n || t.spins.iter().any(|&s| s >= q) {
                return param("truth must have n spins in 0..q");
            }
            t
        }
        None => Assignment::uniform(n, q, &mut rng),
    };
    let mut classes = vec![Vec::new(); q];
    for (v, &s) in truth.spins.iter().enumerate() {
        classes[s].push(v);
    }
    let len = model.table_len();
    let mut cells = Vec::with_capacity(model.weights().len() * len);
    let mut cumulative = Vec::with_capacity(cells.capacity());
    let mut acc = 0.0;
    let mut tau = vec![0; k];
    for (pi, (w, &p)) in model.weights().iter().zip(model.priors()).enumerate() {
        for idx in 0..len {
            decode_into(idx, q, &mut tau);
            let mult: f64 = tau.iter().map(|&s| classes[s].len() as f64).product();
            let weight = p * w.at(idx) * mult;
            if weight > 0.0 {
                acc += weight;
                cells.push((pi, idx));
                cumulative.push(acc);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::InfeasibleTruth(
            "no weight function gives positive weight to any spin pattern of the truth".into(),
        ));
    }
    let m = edges.draw(n, k, &mut rng)?;
    let constraints = (0..m)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u).min(cells.len() - 1);
            let (psi, idx) = cells[i];
            decode_into(idx, q, &mut tau);
            let vars = tau.iter().map(|&s| classes[s][rng.gen_range(0..classes[s].len())]).collect();
            Constraint(psi, vars)
        })
        .collect();
    Ok(FactorGraphInstance { n, constraints, pinned: Vec::new(), truth: Some(truth), theta: None })
}

/// The pinning experiment: θ ~ U[0, T], then each variable is pinned to its
/// truth spin independently with probability θ/n.
pub fn pin(instance: &FactorGraphInstance, truth: &Assignment, t_max: f64, seed: u64) -> Result<FactorGraphInstance> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return param(format!("T must be finite and >= 0, got {t_max}"));
    }
    let mut rng = stream(seed, &[tag::PIN, 0]);
    let theta = if t_max == 0.0 { 0.0 } else { rng.gen::<f64>() * t_max };
    pin_with_theta(instance, truth, theta, seed)
}

/// The second stage of [`pin`] at a given θ.
pub fn pin_with_theta(
    instance: &FactorGraphInstance,
    truth: &Assignment,
    theta: f64,
    seed: u64,
) -> Result<FactorGraphInstance> {
    if truth.len() != instance.n {
        return param("truth length differs from n");
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return param(format!("theta must be finite and >= 0, got {theta}"));
    }
    let mut rng = stream(seed, &[tag::PIN, 1]);
    let prob = (theta / instance.n as f64).min(1.0);
    let mut out = instance.clone();
    for v in 0..instance.n {
        if rng.gen::<f64>() < prob {
            out.pinned.push(Pin(v, truth.spins[v]));
        }
    }
    out.truth = Some(truth.clone());
    out.theta = Some(theta);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelSpec};

    #[test]
    fn json_layout() {
        let mut g = FactorGraphInstance::new(3, vec![Constraint(1, vec![0, 2])]);
        g.pinned.push(Pin(1, 0));
        g.truth = Some(Assignment::new(vec![0, 0, 1]));
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":3,"constraints":[[1,[0,2]]],"pinned":[[1,0]],"truth":[0,0,1]}"#);
        let back: FactorGraphInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn null_model_with_zero_rate_is_empty() {
        let m = make_model(&ModelSpec::Potts { q: 3, beta: Some(1.0), c: None }).unwrap();
        for seed in 0..20 {
            assert!(gen_null(10, EdgeCount::Rate(0.0), &m, seed).unwrap().constraints.is_empty());
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let m = make_model(&ModelSpec::Ksat { k: 3, beta: Some(1.0), c: None }).unwrap();
        assert_eq!(gen_null(20, EdgeCount::Rate(3.0), &m, 4).unwrap(), gen_null(20, EdgeCount::Rate(3.0), &m, 4).unwrap());
        assert_eq!(
            gen_teacher(20, EdgeCount::Fixed(30), &m, None, 4).unwrap(),
            gen_teacher(20, EdgeCount::Fixed(30), &m, None, 4).unwrap()
        );
    }

    #[test]
    fn teacher_avoids_zero_weights() {
        let m = make_model(&ModelSpec::ColoringClosedForm { q: 3 }).unwrap();
        let g = gen_teacher(30, EdgeCount::Fixed(200), &m, None, 1).unwrap();
        let t = g.truth.as_ref().unwrap();
        for c in &g.constraints {
            assert_ne!(t.spins[c.vars()[0]], t.spins[c.vars()[1]]);
        }
    }

    #[test]
    fn infeasible_truth_is_reported() {
        let m = make_model(&ModelSpec::ColoringClosedForm { q: 3 }).unwrap();
        let err = gen_teacher(3, EdgeCount::Fixed(1), &m, Some(Assignment::new(vec![1, 1, 1])), 0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTruth(_)));
    }

    #[test]
    fn pin_extremes() {
        let m = make_model(&ModelSpec::Potts { q: 2, beta: Some(1.0), c: None }).unwrap();
        let g = gen_null(6, EdgeCount::Fixed(4), &m, 0).unwrap();
        let truth = Assignment::new(vec![0, 1, 0, 1, 1, 0]);
        assert!(pin(&g, &truth, 0.0, 3).unwrap().pinned.is_empty());
        let all = pin_with_theta(&g, &truth, 6.0, 3).unwrap();
        assert_eq!(all.pinned.len(), 6);
        for p in &all.pinned {
            assert_eq!(truth.spins[p.0], p.1);
        }
    }
}
