//! Spin sets, weight-function families and the model zoo.
//!
//! Spins are `0..q`. For the Boolean models (LDGM, k-SAT, k-NAESAT) spin `0`
//! stands for `+1` and spin `1` for `-1`. A weight function of arity `k` is a
//! dense table of `q^k` entries indexed with the first coordinate most
//! significant.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Λ(x) = x ln x with Λ(0) = 0.
#[inline]
pub fn lambda(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Parameters of a model, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Potts antiferromagnet, ψ(σ,τ) = 1 − c·1{σ=τ} with c = 1 − e^{−β}.
    Potts {
        q: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    /// Graph q-coloring, the c = 1 Potts model. Only the closed-form Potts
    /// evaluators accept it.
    #[serde(alias = "coloring")]
    ColoringClosedForm { q: usize },
    /// Disassortative stochastic block model, mapped onto the planted Potts
    /// antiferromagnet.
    #[serde(alias = "sbm-potts", alias = "sbm_potts")]
    Sbm {
        q: usize,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<f64>,
    },
    /// Noisy k-XOR checks with flip probability η.
    Ldgm { k: usize, eta: f64 },
    Ksat {
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    Naesat {
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    HypergraphPotts {
        q: usize,
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    Custom {
        q: usize,
        k: usize,
        weights: Vec<CustomWeight>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomWeight {
    pub table: Vec<f64>,
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Potts,
    ColoringClosedForm,
    Sbm,
    Ldgm,
    Ksat,
    Naesat,
    HypergraphPotts,
    Custom,
}

/// A weight function Ω^k → (0, 2), stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    table: Vec<f64>,
}

impl WeightFunction {
    pub fn new(table: Vec<f64>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.table[index]
    }
}

/// Spin permutations κ under which the law of Ψ is invariant, i.e. Ψ∘κ has
/// the same distribution as Ψ.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryGroup {
    /// The full symmetric group on `0..q`.
    Full { q: usize },
    /// An explicit list of permutations (always containing the identity).
    List(Vec<Vec<usize>>),
}

impl SymmetryGroup {
    /// True when the group moves every spin to every other spin.
    pub fn is_transitive(&self) -> bool {
        match self {
            SymmetryGroup::Full { .. } => true,
            SymmetryGroup::List(perms) => {
                let q = perms[0].len();
                (0..q).all(|t| perms.iter().any(|p| p[0] == t))
            }
        }
    }

    pub fn order(&self) -> usize {
        match self {
            SymmetryGroup::Full { q } => (1..=*q).product(),
            SymmetryGroup::List(perms) => perms.len(),
        }
    }
}

/// An immutable model: spin count, arity, weight functions and their prior.
#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    q: usize,
    k: usize,
    weights: Vec<WeightFunction>,
    priors: Vec<f64>,
    spec: ModelSpec,
    potts_c: Option<f64>,
    symmetry: SymmetryGroup,
}

/// Largest q for which the symmetry group is found by trying all q! permutations.
const BRUTE_FORCE_SYMMETRY_Q: usize = 7;

fn permutations(q: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for s in 0..used.len() {
            if !used[s] {
                used[s] = true;
                prefix.push(s);
                rec(prefix, used, out);
                prefix.pop();
                used[s] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(q), &mut vec![false; q], &mut out);
    out
}

/// All permutations of `0..q` in lexicographic order.
pub fn all_permutations(q: usize) -> Vec<Vec<usize>> {
    permutations(q)
}

fn find_symmetries(q: usize, k: usize, weights: &[WeightFunction], priors: &[f64]) -> Vec<Vec<usize>> {
    let len = q.pow(k as u32);
    let mass_of = |table: &[f64]| -> f64 {
        weights
            .iter()
            .zip(priors)
            .filter(|(w, _)| w.table() == table)
            .map(|(_, &p)| p)
            .sum()
    };
    let mut spins = vec![0usize; k];
    let mut image = vec![0usize; k];
    permutations(q)
        .into_iter()
        .filter(|perm| {
            weights.iter().zip(priors).all(|(w, _)| {
                let moved: Vec<f64> = (0..len)
                    .map(|idx| {
                        decode_into(idx, q, &mut spins);
                        for (im, &s) in image.iter_mut().zip(&spins) {
                            *im = perm[s];
                        }
                        w.at(encode(&image, q))
                    })
                    .collect();
                (mass_of(&moved) - mass_of(w.table())).abs() < 1e-15
            })
        })
        .collect()
}

fn coupling(beta: Option<f64>, c: Option<f64>, what: &str) -> Result<f64> {
    match (beta, c) {
        (Some(b), None) => {
            if !(b.is_finite() && b > 0.0) {
                return param(format!("{what}: beta must be finite and > 0, got {b}"));
            }
            Ok(-(-b).exp_m1())
        }
        (None, Some(c)) => {
            if c == 1.0 {
                return Err(Error::Unsupported(format!(
                    "{what}: c = 1 is only available through coloring_closed_form"
                )));
            }
            if !(c > 0.0 && c < 1.0) {
                return param(format!("{what}: c must lie in (0, 1), got {c}"));
            }
            Ok(c)
        }
        (Some(_), Some(_)) => param(format!("{what}: give either beta or c, not both")),
        (None, None) => param(format!("{what}: missing beta or c")),
    }
}

fn check_q(q: usize) -> Result<()> {
    if q < 2 {
        return param(format!("q must be >= 2, got {q}"));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return param(format!("k must be >= 2, got {k}"));
    }
    Ok(())
}

/// Table size guard; q^k must stay small for the dense representation.
fn table_len(q: usize, k: usize) -> Result<usize> {
    let mut len: usize = 1;
    for _ in 0..k {
        len = len
            .checked_mul(q)
            .filter(|&l| l <= 1 << 24)
            .ok_or_else(|| Error::Parameter(format!("q^k too large (q={q}, k={k})")))?;
    }
    Ok(len)
}

fn tabulate(q: usize, k: usize, f: impl Fn(&[usize]) -> f64) -> Result<WeightFunction> {
    let len = table_len(q, k)?;
    let mut spins = vec![0usize; k];
    let table = (0..len)
        .map(|idx| {
            decode_into(idx, q, &mut spins);
            f(&spins)
        })
        .collect();
    Ok(WeightFunction::new(table))
}

/// Decodes a table index into a spin tuple (first coordinate most significant).
pub fn decode_into(mut index: usize, q: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = index % q;
        index /= q;
    }
}

pub fn encode(spins: &[usize], q: usize) -> usize {
    spins.iter().fold(0, |acc, &s| acc * q + s)
}

/// ±1 value of a Boolean spin index.
#[inline]
fn pm(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}

/// All sign patterns J ∈ {±1}^k as spin tuples, in table order.
fn sign_patterns(k: usize) -> Vec<Vec<usize>> {
    (0..1usize << k)
        .map(|idx| {
            let mut v = vec![0; k];
            decode_into(idx, 2, &mut v);
            v
        })
        .collect()
}

/// d_in and d_out of the block model whose expected degree is `d`.
pub fn sbm_degrees(q: usize, d: f64, beta: f64) -> (f64, f64) {
    let e = (-beta).exp();
    let denom = q as f64 - 1.0 + e;
    (d * q as f64 * e / denom, d * q as f64 / denom)
}

impl Model {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let (kind, q, k, weights, priors, potts_c) = match spec {
            ModelSpec::Potts { q, beta, c } => {
                check_q(*q)?;
                let c = coupling(*beta, *c, "potts")?;
                let w = tabulate(*q, 2, |s| if s[0] == s[1] { 1.0 - c } else { 1.0 })?;
                (ModelKind::Potts, *q, 2, vec![w], vec![1.0], Some(c))
            }
            ModelSpec::ColoringClosedForm { q } => {
                check_q(*q)?;
                let w = tabulate(*q, 2, |s| if s[0] == s[1] { 0.0 } else { 1.0 })?;
                (ModelKind::ColoringClosedForm, *q, 2, vec![w], vec![1.0], Some(1.0))
            }
            ModelSpec::Sbm { q, beta, d } => {
                check_q(*q)?;
                if let Some(d) = d {
                    if !(d.is_finite() && *d >= 0.0) {
                        return param(format!("sbm: d must be >= 0, got {d}"));
                    }
                }
                let c = coupling(Some(*beta), None, "sbm")?;
                let w = tabulate(*q, 2, |s| if s[0] == s[1] { 1.0 - c } else { 1.0 })?;
                (ModelKind::Sbm, *q, 2, vec![w], vec![1.0], Some(c))
            }
            ModelSpec::Ldgm { k, eta } => {
                check_k(*k)?;
                if !(*eta > 0.0 && *eta < 1.0) {
                    return param(format!("ldgm: eta must lie in (0, 1), got {eta}"));
                }
                let g = 1.0 - 2.0 * eta;
                let make = |j: f64| {
                    tabulate(2, *k, move |s| 1.0 + g * j * s.iter().map(|&x| pm(x)).product::<f64>())
                };
                (ModelKind::Ldgm, 2, *k, vec![make(1.0)?, make(-1.0)?], vec![0.5, 0.5], None)
            }
            ModelSpec::Ksat { k, beta, c } => {
                check_k(*k)?;
                let c = coupling(*beta, *c, "ksat")?;
                let pats = sign_patterns(*k);
                let weights = pats
                    .iter()
                    .map(|j| tabulate(2, *k, |s| if s == j.as_slice() { 1.0 - c } else { 1.0 }))
                    .collect::<Result<Vec<_>>>()?;
                let n = weights.len();
                (ModelKind::Ksat, 2, *k, weights, vec![1.0 / n as f64; n], None)
            }
            ModelSpec::Naesat { k, beta, c } => {
                check_k(*k)?;
                let c = coupling(*beta, *c, "naesat")?;
                let pats = sign_patterns(*k);
                let weights = pats
                    .iter()
                    .map(|j| {
                        tabulate(2, *k, |s| {
                            let all_eq = s == j.as_slice();
                            let all_opp = s.iter().zip(j).all(|(a, b)| a != b);
                            1.0 - c * (all_eq as u8 as f64) - c * (all_opp as u8 as f64)
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let n = weights.len();
                (ModelKind::Naesat, 2, *k, weights, vec![1.0 / n as f64; n], None)
            }
            ModelSpec::HypergraphPotts { q, k, beta, c } => {
                check_q(*q)?;
                check_k(*k)?;
                let c = coupling(*beta, *c, "hypergraph_potts")?;
                let w = tabulate(*q, *k, |s| {
                    if s.iter().all(|&x| x == s[0]) {
                        1.0 - c
                    } else {
                        1.0
                    }
                })?;
                (ModelKind::HypergraphPotts, *q, *k, vec![w], vec![1.0], None)
            }
            ModelSpec::Custom { q, k, weights } => {
                check_q(*q)?;
                check_k(*k)?;
                if weights.is_empty() {
                    return param("custom: at least one weight function is required");
                }
                let len = table_len(*q, *k)?;
                let mut ws = Vec::with_capacity(weights.len());
                let mut ps = Vec::with_capacity(weights.len());
                for (i, w) in weights.iter().enumerate() {
                    if w.table.len() != len {
                        return param(format!(
                            "custom: weight function {i} has {} entries, expected q^k = {len}",
                            w.table.len()
                        ));
                    }
                    ws.push(WeightFunction::new(w.table.clone()));
                    ps.push(w.prior);
                }
                (ModelKind::Custom, *q, *k, ws, ps, None)
            }
        };
        let symmetry = if q <= BRUTE_FORCE_SYMMETRY_Q {
            SymmetryGroup::List(find_symmetries(q, k, &weights, &priors))
        } else if matches!(kind, ModelKind::Potts | ModelKind::Sbm | ModelKind::ColoringClosedForm | ModelKind::HypergraphPotts) {
            SymmetryGroup::Full { q }
        } else {
            SymmetryGroup::List(vec![(0..q).collect()])
        };
        let model = Model {
            kind,
            q,
            k,
            weights,
            priors,
            spec: spec.clone(),
            potts_c,
            symmetry,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let total: f64 = self.priors.iter().sum();
        if self.priors.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return param(format!("prior masses must be >= 0 and sum to 1 (sum = {total})"));
        }
        let hard_ok = self.kind == ModelKind::ColoringClosedForm;
        for (i, w) in self.weights.iter().enumerate() {
            for &v in w.table() {
                let ok = if hard_ok {
                    (0.0..2.0).contains(&v)
                } else {
                    v > 0.0 && v < 2.0
                };
                if !ok {
                    return param(format!(
                        "weight function {i} has entry {v} outside the open interval (0, 2)"
                    ));
                }
            }
        }
        if self.kind == ModelKind::Ldgm && (self.priors[0] != 0.5 || self.priors[1] != 0.5) {
            return param("ldgm: both check signs need prior mass 1/2");
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[WeightFunction] {
        &self.weights
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Number of entries per weight table, q^k.
    pub fn table_len(&self) -> usize {
        self.q.pow(self.k as u32)
    }

    /// The Potts coupling c for Potts-type models (potts, sbm, coloring).
    pub fn potts_c(&self) -> Option<f64> {
        self.potts_c
    }

    /// Index of a weight function drawn from the prior.
    pub fn draw_weight<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.priors.len() == 1 {
            return 0;
        }
        let mut u: f64 = rng.gen();
        for (i, &p) in self.priors.iter().enumerate() {
            if u < p {
                return i;
            }
            u -= p;
        }
        self.priors.len() - 1
    }

    pub fn symmetry(&self) -> &SymmetryGroup {
        &self.symmetry
    }

    /// False only for the hard-constraint coloring model.
    pub fn is_soft(&self) -> bool {
        self.kind != ModelKind::ColoringClosedForm
    }

    pub(crate) fn require_soft(&self, what: &str) -> Result<()> {
        if self.is_soft() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{what} requires strictly positive weights; coloring_closed_form is only \
                 accepted by the closed-form Potts evaluators"
            )))
        }
    }

    /// τ ↦ E[Ψ(τ)], the prior-averaged weight table.
    pub fn mean_table(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.table_len()];
        for (w, &p) in self.weights.iter().zip(&self.priors) {
            for (m, &v) in mean.iter_mut().zip(w.table()) {
                *m += p * v;
            }
        }
        mean
    }

    /// Exact Σ_τ E[Λ(Ψ(τ))].
    pub fn entropy_sum(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.priors)
            .map(|(w, &p)| p * w.table().iter().map(|&v| lambda(v)).sum::<f64>())
            .sum()
    }
}

/// Builds a model from its JSON description.
pub fn make_model(spec: &ModelSpec) -> Result<Model> {
    Model::from_spec(spec)
}

/// ξ = q^{−k} Σ_τ E[Ψ(τ)].
pub fn xi(model: &Model) -> f64 {
    model.mean_table().iter().sum::<f64>() / model.table_len() as f64
}

/// The replica-symmetric value (1 − d) ln q + (d/k) ln Σ_τ E[Ψ(τ)].
pub fn rs_value(model: &Model, d: f64) -> f64 {
    let q = model.q() as f64;
    let total: f64 = model.mean_table().iter().sum();
    if d == 0.0 {
        return q.ln();
    }
    (1.0 - d) * q.ln() + d / model.k() as f64 * total.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn potts_beta(q: usize, beta: f64) -> Model {
        make_model(&ModelSpec::Potts { q, beta: Some(beta), c: None }).unwrap()
    }

    fn potts_c(q: usize, c: f64) -> Model {
        make_model(&ModelSpec::Potts { q, beta: None, c: Some(c) }).unwrap()
    }

    #[test]
    fn potts_table_matches_formula() {
        let m = potts_beta(3, 2f64.ln());
        let w = &m.weights()[0];
        assert!((w.at(encode(&[0, 0], 3)) - 0.5).abs() < 1e-15);
        assert_eq!(w.at(encode(&[0, 1], 3)), 1.0);
    }

    #[test]
    fn ldgm_table_matches_formula() {
        let m = make_model(&ModelSpec::Ldgm { k: 3, eta: 0.1 }).unwrap();
        let plus = encode(&[0, 0, 0], 2);
        assert!((m.weights()[0].at(plus) - 1.8).abs() < 1e-15);
        assert!((m.weights()[1].at(plus) - 0.2).abs() < 1e-15);
        assert_eq!(m.priors(), &[0.5, 0.5]);
    }

    #[test]
    fn sbm_degree_mapping() {
        let (din, dout) = sbm_degrees(3, 5.0, 3f64.ln());
        assert!((din - 15.0 / 7.0).abs() < 1e-12);
        assert!((dout - 45.0 / 7.0).abs() < 1e-12);
        // expected degree is d
        assert!(((din + 2.0 * dout) / 3.0 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn xi_examples() {
        assert!((xi(&potts_c(3, 0.5)) - 5.0 / 6.0).abs() < 1e-15);
        for k in 2..=5 {
            let m = make_model(&ModelSpec::Ldgm { k, eta: 0.17 }).unwrap();
            assert!((xi(&m) - 1.0).abs() < 1e-15);
        }
        let ks = make_model(&ModelSpec::Ksat { k: 3, beta: None, c: Some(0.5) }).unwrap();
        assert!((xi(&ks) - 0.9375).abs() < 1e-15);
    }

    #[test]
    fn ksat_mean_table_is_constant() {
        let ks = make_model(&ModelSpec::Ksat { k: 3, beta: None, c: Some(0.5) }).unwrap();
        for v in ks.mean_table() {
            assert!((v - (1.0 - 0.5 / 8.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn rs_value_examples() {
        let m = potts_c(3, 0.5);
        assert!((rs_value(&m, 2.0) - 0.916_290_731_874_155).abs() < 1e-12);
        assert_eq!(rs_value(&m, 0.0), 3f64.ln());
        let l = make_model(&ModelSpec::Ldgm { k: 3, eta: 0.1 }).unwrap();
        assert!((rs_value(&l, 3.0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rs_value_equals_xi_form() {
        let m = make_model(&ModelSpec::HypergraphPotts { q: 3, k: 3, beta: Some(1.3), c: None }).unwrap();
        for d in [0.5, 1.0, 4.0] {
            let alt = 3f64.ln() + d / 3.0 * xi(&m).ln();
            assert!((rs_value(&m, d) - alt).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            make_model(&ModelSpec::Potts { q: 1, beta: Some(1.0), c: None }),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            make_model(&ModelSpec::Potts { q: 3, beta: None, c: Some(1.0) }),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            make_model(&ModelSpec::Ksat { k: 3, beta: None, c: Some(1.0) }),
            Err(Error::Unsupported(_))
        ));
        assert!(make_model(&ModelSpec::Ldgm { k: 3, eta: 1.0 }).is_err());
        assert!(make_model(&ModelSpec::Potts { q: 3, beta: Some(-1.0), c: None }).is_err());
        let bad = ModelSpec::Custom {
            q: 2,
            k: 2,
            weights: vec![CustomWeight { table: vec![1.0, 2.5, 1.0, 1.0], prior: 1.0 }],
        };
        assert!(make_model(&bad).is_err());
        let bad_prior = ModelSpec::Custom {
            q: 2,
            k: 2,
            weights: vec![CustomWeight { table: vec![1.0; 4], prior: 0.9 }],
        };
        assert!(make_model(&bad_prior).is_err());
    }

    #[test]
    fn symmetry_groups() {
        assert_eq!(potts_c(3, 0.5).symmetry().order(), 6);
        let big = potts_c(9, 0.5);
        assert_eq!(big.symmetry(), &SymmetryGroup::Full { q: 9 });
        for spec in [
            ModelSpec::Ldgm { k: 3, eta: 0.2 },
            ModelSpec::Ldgm { k: 4, eta: 0.2 },
            ModelSpec::Ksat { k: 3, beta: Some(1.0), c: None },
            ModelSpec::Naesat { k: 4, beta: Some(1.0), c: None },
        ] {
            let m = make_model(&spec).unwrap();
            assert_eq!(m.symmetry().order(), 2, "{spec:?}");
            assert!(m.symmetry().is_transitive());
        }
        // ψ(0,0) raised: no symmetry besides the identity
        let lopsided = make_model(&ModelSpec::Custom {
            q: 2,
            k: 2,
            weights: vec![CustomWeight { table: vec![1.5, 1.0, 1.0, 1.0], prior: 1.0 }],
        })
        .unwrap();
        assert_eq!(lopsided.symmetry().order(), 1);
        assert!(!lopsided.symmetry().is_transitive());
    }

    #[test]
    fn coloring_allows_zero_weights() {
        let m = make_model(&ModelSpec::ColoringClosedForm { q: 3 }).unwrap();
        assert_eq!(m.weights()[0].at(0), 0.0);
        assert!(!m.is_soft());
        assert_eq!(m.potts_c(), Some(1.0));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: ModelSpec =
            serde_json::from_str(r#"{"kind": "potts", "q": 3, "beta": 0.693147}"#).unwrap();
        assert_eq!(spec, ModelSpec::Potts { q: 3, beta: Some(0.693147), c: None });
        let weird = ModelSpec::Ldgm { k: 3, eta: 0.1 + 0.2 };
        let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&weird).unwrap()).unwrap();
        match back {
            ModelSpec::Ldgm { eta, .. } => assert_eq!(eta.to_bits(), (0.1f64 + 0.2).to_bits()),
            _ => unreachable!(),
        }
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind": "potts", "q": 3, "beta": 1, "x": 2}"#).is_err());
        let col: ModelSpec = serde_json::from_str(r#"{"kind": "coloring", "q": 3}"#).unwrap();
        assert_eq!(col, ModelSpec::ColoringClosedForm { q: 3 });
    }
}
