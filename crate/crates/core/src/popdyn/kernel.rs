//! One draw of the distributional BP operator: root spin, Poisson number of
//! child constraints, planted child spins, size-biased child messages, and the
//! BP product at the root.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::population::{Population, ProbVec};
use crate::error::{param, Error, Result};
use crate::model::{decode_into, Model, SymmetryGroup};
use crate::stats::poisson;

pub(crate) const MAX_REDRAWS: usize = 100;
const TINY: f64 = 1e-300;

/// Full record of one cavity draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavitySample {
    pub root_spin: usize,
    pub degree: usize,
    /// Position h_i of the root inside each child constraint.
    pub slots: Vec<usize>,
    pub weight_draws: Vec<usize>,
    /// Spins of the k−1 children of each constraint, in slot order with h_i skipped.
    pub child_spins: Vec<Vec<usize>>,
    pub child_messages: Vec<Vec<ProbVec>>,
    pub factor_messages: Vec<ProbVec>,
    pub output: ProbVec,
}

/// Conditional law of (weight function, full spin tuple) given the root's
/// slot and spin, as a cumulative table.
#[derive(Debug, Clone)]
struct PlantedTable {
    psi: Vec<u32>,
    tuple: Vec<u32>,
    cumulative: Vec<f64>,
}

impl PlantedTable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let total = *self.cumulative.last().expect("nonempty table");
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        (self.psi[i] as usize, self.tuple[i] as usize)
    }
}

/// The message update rule used by a sweep.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    rule: Rule<'a>,
    /// Group used to relabel sweep outputs; `None` disables relabelling.
    symmetry: Option<SymmetryGroup>,
}

#[derive(Debug, Clone)]
enum Rule<'a> {
    /// Any strictly positive model, via its weight tables.
    Generic {
        model: &'a Model,
        /// Indexed by `h * q + root_spin`.
        tables: Vec<PlantedTable>,
    },
    /// Pairwise Potts with coupling c ∈ (0, 1]; the only path that accepts c = 1.
    Potts { q: usize, c: f64 },
}

impl<'a> Kernel<'a> {
    pub fn generic(model: &'a Model) -> Result<Self> {
        model.require_soft("the generic BP kernel")?;
        let (q, k) = (model.q(), model.k());
        let len = model.table_len();
        let mut spins = vec![0usize; k];
        let mut tables = Vec::with_capacity(k * q);
        for h in 0..k {
            for root in 0..q {
                let mut t = PlantedTable { psi: Vec::new(), tuple: Vec::new(), cumulative: Vec::new() };
                let mut acc = 0.0;
                for (pi, (w, &p)) in model.weights().iter().zip(model.priors()).enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for idx in 0..len {
                        decode_into(idx, q, &mut spins);
                        if spins[h] != root {
                            continue;
                        }
                        acc += p * w.at(idx);
                        t.psi.push(pi as u32);
                        t.tuple.push(idx as u32);
                        t.cumulative.push(acc);
                    }
                }
                tables.push(t);
            }
        }
        let symmetry = Some(model.symmetry().clone());
        Ok(Kernel { rule: Rule::Generic { model, tables }, symmetry })
    }

    pub fn potts(q: usize, c: f64) -> Result<Self> {
        if q < 2 {
            return param("potts kernel needs q >= 2");
        }
        if !(c > 0.0 && c <= 1.0) {
            return param(format!("potts kernel needs c in (0, 1], got {c}"));
        }
        Ok(Kernel { rule: Rule::Potts { q, c }, symmetry: Some(SymmetryGroup::Full { q }) })
    }

    /// Closed-form Potts kernel for potts/sbm/coloring models, generic otherwise.
    pub fn preferred(model: &'a Model) -> Result<Self> {
        match model.potts_c() {
            Some(c) => Self::potts(model.q(), c),
            None => Self::generic(model),
        }
    }

    pub fn q(&self) -> usize {
        match &self.rule {
            Rule::Generic { model, .. } => model.q(),
            Rule::Potts { q, .. } => *q,
        }
    }

    /// Turns the random symmetry relabelling of sweep outputs on or off.
    pub fn with_symmetrization(mut self, on: bool) -> Self {
        self.symmetry = match (on, self.symmetry.take()) {
            (false, _) => None,
            (true, Some(g)) => Some(g),
            (true, None) => Some(match &self.rule {
                Rule::Generic { model, .. } => model.symmetry().clone(),
                Rule::Potts { q, .. } => SymmetryGroup::Full { q: *q },
            }),
        };
        self
    }

    pub fn symmetrizes(&self) -> bool {
        self.symmetry.as_ref().is_some_and(|g| g.order() > 1)
    }

    /// Writes `src` relabelled by a uniformly drawn group element into `dst`.
    pub(crate) fn relabel<R: Rng + ?Sized>(&self, src: &[f64], dst: &mut [f64], perm: &mut Vec<usize>, rng: &mut R) {
        match &self.symmetry {
            None => dst.copy_from_slice(src),
            Some(SymmetryGroup::Full { q }) => {
                perm.clear();
                perm.extend(0..*q);
                for i in (1..*q).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                for (s, &x) in src.iter().enumerate() {
                    dst[perm[s]] = x;
                }
            }
            Some(SymmetryGroup::List(perms)) => {
                let p = &perms[rng.gen_range(0..perms.len())];
                for (s, &x) in src.iter().enumerate() {
                    dst[p[s]] = x;
                }
            }
        }
    }

    fn arity(&self) -> usize {
        match &self.rule {
            Rule::Generic { model, .. } => model.k(),
            Rule::Potts { .. } => 2,
        }
    }
}

/// Scratch space reused across draws on one thread.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    spins: Vec<usize>,
    tau: Vec<usize>,
    children: Vec<usize>,
    factor: Vec<f64>,
    out: Vec<f64>,
    pub(crate) perm: Vec<usize>,
}

/// Draws a member index with probability proportional to μ(spin).
fn size_biased<R: Rng + ?Sized>(pop: &Population, spin: usize, rng: &mut R) -> Result<usize> {
    let n = pop.len();
    let attempts = 1000 * pop.q();
    for _ in 0..attempts {
        let i = rng.gen_range(0..n);
        if rng.gen::<f64>() < pop.member(i)[spin] {
            return Ok(i);
        }
    }
    Err(Error::DegeneratePopulation { spin, attempts })
}

/// One attempt at a draw. `Ok(false)` signals a vanishing BP5 normalizer.
fn attempt<R: Rng + ?Sized>(
    pop: &Population,
    kernel: &Kernel<'_>,
    d: f64,
    rng: &mut R,
    scratch: &mut Scratch,
    mut trace: Option<&mut CavitySample>,
) -> Result<bool> {
    let q = kernel.q();
    let k = kernel.arity();
    let root = rng.gen_range(0..q);
    let gamma = poisson(rng, d);
    scratch.out.clear();
    scratch.out.resize(q, 1.0 / q as f64);
    scratch.factor.resize(q, 0.0);
    scratch.spins.resize(k, 0);
    if let Some(t) = trace.as_deref_mut() {
        *t = CavitySample {
            root_spin: root,
            degree: gamma,
            slots: Vec::with_capacity(gamma),
            weight_draws: Vec::with_capacity(gamma),
            child_spins: Vec::with_capacity(gamma),
            child_messages: Vec::with_capacity(gamma),
            factor_messages: Vec::with_capacity(gamma),
            output: ProbVec(Vec::new()),
        };
    }
    let mut ok = true;
    for _ in 0..gamma {
        let h = rng.gen_range(0..k);
        scratch.children.clear();
        let psi_index = match &kernel.rule {
            Rule::Generic { model, tables } => {
                let (psi, tuple) = tables[h * q + root].sample(rng);
                decode_into(tuple, q, &mut scratch.spins);
                for j in 0..k {
                    if j != h {
                        let member = size_biased(pop, scratch.spins[j], rng)?;
                        scratch.children.push(member);
                    }
                }
                // μ_a(σ) = Σ_τ 1{τ_h = σ} ψ(τ) ∏_{j≠h} μ_j(τ_j)
                scratch.factor.iter_mut().for_each(|x| *x = 0.0);
                let w = &model.weights()[psi];
                scratch.tau.resize(k, 0);
                for idx in 0..model.table_len() {
                    decode_into(idx, q, &mut scratch.tau);
                    let mut prod = w.at(idx);
                    let mut c = 0;
                    for j in 0..k {
                        if j != h {
                            prod *= pop.member(scratch.children[c])[scratch.tau[j]];
                            c += 1;
                        }
                    }
                    scratch.factor[scratch.tau[h]] += prod;
                }
                psi
            }
            Rule::Potts { c, .. } => {
                // child spin ∝ 1 − c·1{t = root}
                let child = if *c >= 1.0 {
                    let t = rng.gen_range(0..q - 1);
                    if t >= root {
                        t + 1
                    } else {
                        t
                    }
                } else {
                    let total = q as f64 - c;
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = q - 1;
                    for t in 0..q {
                        let w = if t == root { 1.0 - c } else { 1.0 };
                        if u < w {
                            pick = t;
                            break;
                        }
                        u -= w;
                    }
                    pick
                };
                scratch.spins[h] = root;
                scratch.spins[1 - h] = child;
                let member = size_biased(pop, child, rng)?;
                scratch.children.push(member);
                let mu = pop.member(member);
                for (f, &m) in scratch.factor.iter_mut().zip(mu) {
                    *f = 1.0 - c * m;
                }
                0
            }
        };
        let mut total = 0.0;
        for (o, &f) in scratch.out.iter_mut().zip(&scratch.factor) {
            *o *= f;
            total += *o;
        }
        if !(total > TINY) {
            ok = false;
        } else {
            scratch.out.iter_mut().for_each(|o| *o /= total);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.slots.push(h);
            t.weight_draws.push(psi_index);
            t.child_spins
                .push((0..k).filter(|&j| j != h).map(|j| scratch.spins[j]).collect());
            t.child_messages
                .push(scratch.children.iter().map(|&i| ProbVec(pop.member(i).to_vec())).collect());
            let fm = ProbVec::from_weights(scratch.factor.clone())
                .unwrap_or_else(|| ProbVec(scratch.factor.clone()));
            t.factor_messages.push(fm);
        }
        if !ok {
            break;
        }
    }
    if let Some(t) = trace {
        t.output = ProbVec(scratch.out.clone());
    }
    Ok(ok)
}

/// Draws one output message into `scratch.out`, redrawing on degenerate products.
pub(crate) fn draw<R: Rng + ?Sized>(
    pop: &Population,
    kernel: &Kernel<'_>,
    d: f64,
    rng: &mut R,
    scratch: &mut Scratch,
    mut trace: Option<&mut CavitySample>,
) -> Result<()> {
    for _ in 0..MAX_REDRAWS {
        if attempt(pop, kernel, d, rng, scratch, trace.as_deref_mut())? {
            return Ok(());
        }
    }
    Err(Error::DegenerateMessage { redraws: MAX_REDRAWS })
}

impl Scratch {
    pub(crate) fn split_output(&mut self) -> (&[f64], &mut Vec<usize>) {
        (&self.out, &mut self.perm)
    }
}

pub(crate) fn check_inputs(pop: &Population, q: usize, d: f64) -> Result<()> {
    if pop.is_empty() {
        return param("population is empty");
    }
    if pop.q() != q {
        return param(format!("population has q = {}, model has q = {q}", pop.q()));
    }
    if !(d > 0.0 && d.is_finite()) {
        return param(format!("d must be finite and > 0, got {d}"));
    }
    Ok(())
}

/// One cavity draw against `population`, with its full trace.
pub fn cavity_sample<R: Rng + ?Sized>(
    population: &Population,
    model: &Model,
    d: f64,
    rng: &mut R,
) -> Result<CavitySample> {
    let kernel = Kernel::generic(model)?;
    cavity_sample_with(population, &kernel, d, rng)
}

pub fn cavity_sample_with<R: Rng + ?Sized>(
    population: &Population,
    kernel: &Kernel<'_>,
    d: f64,
    rng: &mut R,
) -> Result<CavitySample> {
    check_inputs(population, kernel.q(), d)?;
    let mut scratch = Scratch::default();
    let mut trace = CavitySample {
        root_spin: 0,
        degree: 0,
        slots: vec![],
        weight_draws: vec![],
        child_spins: vec![],
        child_messages: vec![],
        factor_messages: vec![],
        output: ProbVec(vec![]),
    };
    draw(population, kernel, d, rng, &mut scratch, Some(&mut trace))?;
    Ok(trace)
}
