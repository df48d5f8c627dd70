//! Population dynamics for the density-evolution operator.

mod distance;
mod kernel;
mod population;

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use distance::{w1_1d, w1_distance};
pub use kernel::{cavity_sample, cavity_sample_with, CavitySample, Kernel};
pub use population::{init_population, InitKind, Population, ProbVec};

use crate::error::{param, Error, Result};
use crate::model::Model;
use crate::rng::{derive_key, stream, tag};
use kernel::{check_inputs, draw, Scratch};

/// One synchronous application of the BP operator: N independent cavity
/// draws against the frozen input population. Each output is relabelled by a
/// uniformly random symmetry of the model, which leaves symmetric laws
/// unchanged and damps finite-N drift of the population mean.
pub fn sweep(population: &Population, model: &Model, d: f64, seed: u64) -> Result<Population> {
    let kernel = Kernel::generic(model)?;
    sweep_with(population, &kernel, d, seed)
}

pub fn sweep_with(population: &Population, kernel: &Kernel<'_>, d: f64, seed: u64) -> Result<Population> {
    let q = kernel.q();
    check_inputs(population, q, d)?;
    let generation = population.generation();
    let mut data = vec![0.0; population.raw().len()];
    let failure = data
        .par_chunks_mut(q)
        .enumerate()
        .map_init(Scratch::default, |scratch, (i, out)| {
            let mut rng = stream(seed, &[tag::SWEEP, generation, i as u64]);
            match draw(population, kernel, d, &mut rng, scratch, None) {
                Ok(()) => {
                    let (src, perm) = scratch.split_output();
                    kernel.relabel(src, out, perm, &mut rng);
                    None
                }
                Err(e) => Some((i, e)),
            }
        })
        .flatten()
        .min_by_key(|(i, _)| *i);
    if let Some((index, source)) = failure {
        return Err(Error::Sample { index, source: Box::new(source) });
    }
    Ok(Population::from_raw(q, generation + 1, data))
}

/// Options for [`run_to_fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    pub n: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub window: usize,
    /// Smoothing of the planted initialization.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_projections")]
    pub projections: usize,
}

fn default_projections() -> usize {
    16
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { n: 10_000, max_sweeps: 200, tol: 1e-3, window: 10, epsilon: 0.0, projections: 16 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub population: Population,
    pub init_kind: InitKind,
    pub converged: bool,
    pub sweeps: usize,
    /// W1 between the population after sweep t and after sweep t − window
    /// (or the initial population while t < window).
    pub distance_trace: Vec<f64>,
    pub order_param_trace: Vec<f64>,
}

/// Iterates sweeps from the chosen initialization until the order parameter
/// and the W1 distance settle, or `max_sweeps` is reached.
pub fn run_to_fixed_point(
    init_kind: InitKind,
    model: &Model,
    d: f64,
    opts: &FixedPointOptions,
    seed: u64,
) -> Result<FixedPointResult> {
    let kernel = Kernel::generic(model)?;
    run_to_fixed_point_with(init_kind, &kernel, d, opts, seed)
}

pub fn run_to_fixed_point_with(
    init_kind: InitKind,
    kernel: &Kernel<'_>,
    d: f64,
    opts: &FixedPointOptions,
    seed: u64,
) -> Result<FixedPointResult> {
    if opts.window < 2 || opts.max_sweeps < opts.window {
        return param(format!(
            "need max_sweeps >= window >= 2 (max_sweeps = {}, window = {})",
            opts.max_sweeps, opts.window
        ));
    }
    if !(opts.tol >= 0.0) {
        return param("tol must be >= 0");
    }
    let init_seed = derive_key(seed, &[tag::INIT, init_kind as u64]);
    let sweep_seed = derive_key(seed, &[tag::FIXED_POINT, init_kind as u64]);
    let mut pop = init_population(init_kind, kernel.q(), opts.n, opts.epsilon, init_seed)?;
    let mut history: VecDeque<Population> = VecDeque::with_capacity(opts.window + 1);
    history.push_back(pop.clone());
    let mut distance_trace = Vec::new();
    let mut order_param_trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        pop = sweep_with(&pop, kernel, d, sweep_seed)?;
        sweeps += 1;
        let reference = history.front().expect("history holds the initial population");
        let w1_seed = derive_key(sweep_seed, &[sweeps as u64]);
        distance_trace.push(w1_distance(&pop, reference, opts.projections, w1_seed));
        order_param_trace.push(pop.order_parameter());
        history.push_back(pop.clone());
        if history.len() > opts.window {
            history.pop_front();
        }
        if sweeps >= opts.window {
            let tail = &order_param_trace[sweeps - opts.window..];
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            let w1 = *distance_trace.last().expect("nonempty");
            if hi - lo < opts.tol && w1 < 5.0 * opts.tol {
                converged = true;
                break;
            }
        }
    }
    Ok(FixedPointResult {
        population: pop,
        init_kind,
        converged,
        sweeps,
        distance_trace,
        order_param_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decode_into, make_model, ModelSpec};
    use crate::rng::stream;

    fn potts(q: usize, c: f64) -> Model {
        make_model(&ModelSpec::Potts { q, beta: None, c: Some(c) }).unwrap()
    }

    fn ldgm(k: usize, eta: f64) -> Model {
        make_model(&ModelSpec::Ldgm { k, eta }).unwrap()
    }

    /// BP5 recomputed from the recorded trace.
    fn replay(sample: &CavitySample, model: &Model) -> Vec<f64> {
        let (q, k) = (model.q(), model.k());
        let mut out = vec![1.0; q];
        let mut tau = vec![0; k];
        for i in 0..sample.degree {
            let h = sample.slots[i];
            let w = &model.weights()[sample.weight_draws[i]];
            let mut factor = vec![0.0; q];
            for idx in 0..model.table_len() {
                decode_into(idx, q, &mut tau);
                let mut prod = w.at(idx);
                let mut c = 0;
                for j in 0..k {
                    if j != h {
                        prod *= sample.child_messages[i][c].0[tau[j]];
                        c += 1;
                    }
                }
                factor[tau[h]] += prod;
            }
            out.iter_mut().zip(&factor).for_each(|(o, f)| *o *= f);
        }
        let total: f64 = out.iter().sum();
        out.iter().map(|o| o / total).collect()
    }

    #[test]
    fn uniform_population_gives_uniform_output() {
        for model in [potts(3, 0.5), ldgm(3, 0.2), ldgm(4, 0.1)] {
            let q = model.q();
            let pop = init_population(InitKind::Trivial, q, 10, 0.0, 0).unwrap();
            let mut rng = stream(5, &[1]);
            for _ in 0..200 {
                let s = cavity_sample(&pop, &model, 3.0, &mut rng).unwrap();
                for &x in &s.output.0 {
                    assert!((x - 1.0 / q as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_degree_gives_uniform() {
        let model = potts(3, 0.5);
        let pop = init_population(InitKind::Planted, 3, 50, 0.0, 2).unwrap();
        let mut rng = stream(8, &[0]);
        let mut seen = 0;
        for _ in 0..500 {
            let s = cavity_sample(&pop, &model, 0.3, &mut rng).unwrap();
            if s.degree == 0 {
                seen += 1;
                assert_eq!(s.output.0, vec![1.0 / 3.0; 3]);
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn trace_replays_to_output() {
        let specs = [
            ModelSpec::Potts { q: 3, beta: None, c: Some(0.7) },
            ModelSpec::Ksat { k: 3, beta: Some(1.0), c: None },
            ModelSpec::HypergraphPotts { q: 3, k: 3, beta: Some(2.0), c: None },
        ];
        for spec in &specs {
            let model = make_model(spec).unwrap();
            let pop = init_population(InitKind::Planted, model.q(), 100, 0.1, 3).unwrap();
            let mut rng = stream(11, &[2]);
            for _ in 0..100 {
                let s = cavity_sample(&pop, &model, 2.5, &mut rng).unwrap();
                assert_eq!(s.slots.len(), s.degree);
                assert!(s.output.is_valid(1e-9));
                for f in &s.factor_messages {
                    assert!(f.is_valid(1e-9));
                }
                for cs in &s.child_spins {
                    assert_eq!(cs.len(), model.k() - 1);
                }
                let r = replay(&s, &model);
                for (a, b) in r.iter().zip(&s.output.0) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn generic_rejects_coloring() {
        let m = make_model(&ModelSpec::ColoringClosedForm { q: 3 }).unwrap();
        let pop = init_population(InitKind::Trivial, 3, 4, 0.0, 0).unwrap();
        let mut rng = stream(0, &[0]);
        assert!(matches!(cavity_sample(&pop, &m, 1.0, &mut rng), Err(Error::Unsupported(_))));
        assert!(Kernel::preferred(&m).is_ok());
    }

    #[test]
    fn degenerate_population_is_reported() {
        // every member is δ_0, so a child needing spin 1 is never accepted
        let m = potts(2, 0.5);
        let pop = Population::from_members(2, &[ProbVec(vec![1.0, 0.0])]).unwrap();
        let mut rng = stream(0, &[0]);
        let mut hit = false;
        for _ in 0..50 {
            if let Err(e) = cavity_sample(&pop, &m, 5.0, &mut rng) {
                assert!(matches!(e, Error::DegeneratePopulation { .. }));
                hit = true;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn hard_potts_kernel_never_zero_in_planted_draws() {
        let kernel = Kernel::potts(3, 1.0).unwrap();
        let pop = init_population(InitKind::Planted, 3, 200, 0.0, 1).unwrap();
        let mut rng = stream(4, &[4]);
        for _ in 0..300 {
            let s = cavity_sample_with(&pop, &kernel, 4.0, &mut rng).unwrap();
            assert!(s.output.is_valid(1e-9));
            for (i, cs) in s.child_spins.iter().enumerate() {
                assert_ne!(cs[0], s.root_spin, "hard constraint child {i} shares the root's color");
            }
        }
    }

    #[test]
    fn sweep_of_trivial_is_trivial() {
        for model in [potts(3, 0.5), ldgm(3, 0.3)] {
            let pop = init_population(InitKind::Trivial, model.q(), 500, 0.0, 0).unwrap();
            let out = sweep(&pop, &model, 4.0, 1).unwrap();
            assert_eq!(out.generation(), 1);
            for m in out.members() {
                for &x in m {
                    assert!((x - 1.0 / model.q() as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sweep_single_member_and_determinism() {
        let model = potts(3, 0.6);
        let pop = init_population(InitKind::Planted, 3, 1, 0.2, 0).unwrap();
        let out = sweep(&pop, &model, 2.0, 5).unwrap();
        assert_eq!(out.len(), 1);
        let pop = init_population(InitKind::Planted, 3, 300, 0.2, 0).unwrap();
        let a = sweep(&pop, &model, 2.0, 5).unwrap();
        let b = sweep(&pop, &model, 2.0, 5).unwrap();
        assert_eq!(a, b);
        let c = sweep(&pop, &model, 2.0, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trivial_fixed_point_converges_at_window() {
        let model = potts(3, 0.5);
        let opts = FixedPointOptions { n: 200, max_sweeps: 50, tol: 1e-6, window: 4, ..Default::default() };
        let r = run_to_fixed_point(InitKind::Trivial, &model, 2.0, &opts, 1).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps, 4);
        for &op in &r.order_param_trace {
            assert!((op - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_tolerance_converges_trivially() {
        let model = potts(3, 0.5);
        let opts = FixedPointOptions { n: 100, max_sweeps: 3, tol: f64::INFINITY, window: 3, ..Default::default() };
        let r = run_to_fixed_point(InitKind::Planted, &model, 2.0, &opts, 1).unwrap();
        assert!(r.converged);
        assert_eq!(r.sweeps, 3);
        assert_eq!(r.distance_trace.len(), 3);
    }

    #[test]
    fn rejects_bad_window() {
        let model = potts(3, 0.5);
        let opts = FixedPointOptions { n: 10, max_sweeps: 3, tol: 1.0, window: 5, ..Default::default() };
        assert!(run_to_fixed_point(InitKind::Trivial, &model, 1.0, &opts, 0).is_err());
    }

    #[test]
    fn planted_init_collapses_below_threshold() {
        let model = potts(3, 0.5);
        let opts = FixedPointOptions { n: 5_000, max_sweeps: 200, tol: 2e-3, window: 5, ..Default::default() };
        let r = run_to_fixed_point(InitKind::Planted, &model, 1.0, &opts, 3).unwrap();
        assert!(r.converged, "did not converge: {:?}", &r.order_param_trace);
        let op = *r.order_param_trace.last().unwrap();
        assert!((op - 1.0 / 3.0).abs() < 2e-3, "order parameter {op}");
    }
}
