//! Threshold location by a statistical sign test on
//! gap(d) = max_π B(d, π) − RS(d), where the max runs over the fixed points
//! reached from the trivial and the planted initialization.

use serde::{Deserialize, Serialize};

use crate::bethe::{bethe_functional, bethe_potts, BetheOptions};
use crate::error::{param, Error, Result};
use crate::model::{rs_value, Model};
use crate::popdyn::{run_to_fixed_point_with, FixedPointOptions, InitKind, Kernel, Population};
use crate::rng::{derive_key, tag};
use crate::stats::EstimateWithError;

/// Number of standard errors a gap must clear to count as positive.
pub const SIGMA_RULE: f64 = 3.0;
/// Absolute floor below which a gap is never called positive. Populations
/// that relax to near-uniform messages give gaps of order 1e-9 at N ~ 1e3
/// with very small stderr.
pub const GAP_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapOptions {
    pub popdyn: FixedPointOptions,
    pub bethe: BetheOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { popdyn: FixedPointOptions::default(), bethe: BetheOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Positive,
    Negative,
    Undecided,
}

impl Decision {
    pub fn of(estimate: &EstimateWithError) -> Self {
        let band = (SIGMA_RULE * estimate.stderr).max(GAP_FLOOR);
        if estimate.mean > band {
            Decision::Positive
        } else if estimate.mean < -band {
            Decision::Negative
        } else {
            Decision::Undecided
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gap: EstimateWithError,
    pub fixed_point_kind: InitKind,
    pub bethe_trivial: EstimateWithError,
    pub bethe_planted: EstimateWithError,
    pub rs: f64,
    pub converged_trivial: bool,
    pub converged_planted: bool,
}

/// Which Bethe evaluator a gap computation uses.
#[derive(Debug, Clone, Copy)]
enum Evaluator<'a> {
    Generic(&'a Model),
    /// Closed-form Potts with coupling c; also serves c = 1.
    Potts { q: usize, c: f64 },
}

fn evaluator(model: &Model) -> Evaluator<'_> {
    match model.potts_c() {
        Some(c) => Evaluator::Potts { q: model.q(), c },
        None => Evaluator::Generic(model),
    }
}

/// The fixed points reached at one parameter value, ready for Bethe
/// evaluation at any sample size.
pub struct GapPoint<'a> {
    eval: Evaluator<'a>,
    rs: f64,
    d: f64,
    seed: u64,
    /// (population, converged) for the trivial then the planted start; empty at d = 0.
    fixed: Vec<(Population, bool)>,
}

fn prepare<'a>(eval: Evaluator<'a>, rs: f64, d: f64, opts: &FixedPointOptions, seed: u64) -> Result<GapPoint<'a>> {
    if !(d >= 0.0 && d.is_finite()) {
        return param(format!("d must be finite and >= 0, got {d}"));
    }
    let mut fixed = Vec::with_capacity(2);
    if d > 0.0 {
        let kernel = match eval {
            Evaluator::Generic(m) => Kernel::generic(m)?,
            Evaluator::Potts { q, c } => Kernel::potts(q, c)?,
        };
        for kind in [InitKind::Trivial, InitKind::Planted] {
            let fp = run_to_fixed_point_with(kind, &kernel, d, opts, seed)?;
            fixed.push((fp.population, fp.converged));
        }
    }
    Ok(GapPoint { eval, rs, d, seed, fixed })
}

/// Something that yields a gap estimate at a requested Monte-Carlo size.
pub trait GapQuery {
    fn estimate(&self, bethe: &BetheOptions) -> Result<GapEstimate>;
}

impl GapQuery for GapPoint<'_> {
    fn estimate(&self, bethe: &BetheOptions) -> Result<GapEstimate> {
        let rs = self.rs;
        if self.fixed.is_empty() {
            let exact = EstimateWithError::exact(rs);
            return Ok(GapEstimate {
                gap: EstimateWithError::exact(0.0),
                fixed_point_kind: InitKind::Trivial,
                bethe_trivial: exact,
                bethe_planted: exact,
                rs,
                converged_trivial: true,
                converged_planted: true,
            });
        }
        let mut values = Vec::with_capacity(2);
        for (kind, (pop, _)) in [InitKind::Trivial, InitKind::Planted].into_iter().zip(&self.fixed) {
            let bseed = derive_key(self.seed, &[tag::BETHE, kind as u64]);
            values.push(match self.eval {
                Evaluator::Generic(m) => bethe_functional(pop, m, self.d, bethe, bseed)?,
                Evaluator::Potts { q, c } => bethe_potts(q, self.d, c, pop, bethe, bseed)?,
            });
        }
        let (bt, bp) = (values[0], values[1]);
        let (best, kind) = if bp.mean > bt.mean { (bp, InitKind::Planted) } else { (bt, InitKind::Trivial) };
        Ok(GapEstimate {
            gap: best.shift(-rs),
            fixed_point_kind: kind,
            bethe_trivial: bt,
            bethe_planted: bp,
            rs,
            converged_trivial: self.fixed[0].1,
            converged_planted: self.fixed[1].1,
        })
    }
}

/// Fixed points of `model` at degree d, for repeated gap evaluation.
pub fn prepare_gap<'a>(model: &'a Model, d: f64, opts: &FixedPointOptions, seed: u64) -> Result<GapPoint<'a>> {
    prepare(evaluator(model), rs_value(model, d), d, opts, seed)
}

/// Closed-form Potts counterpart of [`prepare_gap`].
pub fn prepare_potts_gap(q: usize, d: f64, c: f64, opts: &FixedPointOptions, seed: u64) -> Result<GapPoint<'static>> {
    let rs = (q as f64).ln() + d / 2.0 * (1.0 - c / q as f64).ln();
    prepare(Evaluator::Potts { q, c }, rs, d, opts, seed)
}

/// max over discovered fixed points of B(d, π), minus RS(d).
pub fn gap(model: &Model, d: f64, opts: &GapOptions, seed: u64) -> Result<GapEstimate> {
    prepare_gap(model, d, &opts.popdyn, seed)?.estimate(&opts.bethe)
}

/// Closed-form Potts gap at coupling c = 1 − e^{−β}; accepts c = 1.
pub fn potts_gap(q: usize, d: f64, c: f64, opts: &GapOptions, seed: u64) -> Result<GapEstimate> {
    prepare_potts_gap(q, d, c, &opts.popdyn, seed)?.estimate(&opts.bethe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    SignChange,
    RangeExhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub parameter: f64,
    pub gap: f64,
    pub stderr: f64,
    pub fixed_point_kind: InitKind,
    pub decision: Decision,
    pub samples: usize,
    pub seed: u64,
    /// `scan` or `bisect`
    pub phase: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub location: f64,
    pub ci_lo: f64,
    /// `null` in JSON when the range was exhausted (open-ended interval).
    #[serde(with = "crate::stats::open_float")]
    pub ci_hi: f64,
    pub scan_trace: Vec<TraceEntry>,
    pub decided_by: DecidedBy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub scan_steps: usize,
    pub bisect_iters: usize,
    pub gap: GapOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { scan_steps: 12, bisect_iters: 4, gap: GapOptions::default() }
    }
}

/// Seed of the query at `parameter`; independent of query order.
pub fn point_seed(seed: u64, parameter: f64) -> u64 {
    derive_key(seed, &[tag::THRESHOLD, parameter.to_bits()])
}

/// Evaluates the gap at one parameter value, doubling M once when undecided.
fn query<Q: GapQuery>(
    f: &dyn Fn(f64, &FixedPointOptions, u64) -> Result<Q>,
    x: f64,
    opts: &GapOptions,
    seed: u64,
    phase: &str,
    trace: &mut Vec<TraceEntry>,
) -> Result<Decision> {
    let s = point_seed(seed, x);
    let point = f(x, &opts.popdyn, s)?;
    let mut est = point.estimate(&opts.bethe)?;
    let mut decision = Decision::of(&est.gap);
    let mut samples = opts.bethe.samples;
    if decision == Decision::Undecided && est.gap.stderr > 0.0 {
        let doubled = BetheOptions { samples: 2 * opts.bethe.samples, ..opts.bethe };
        samples = doubled.samples;
        est = point.estimate(&doubled)?;
        decision = Decision::of(&est.gap);
    }
    trace.push(TraceEntry {
        parameter: x,
        gap: est.gap.mean,
        stderr: est.gap.stderr,
        fixed_point_kind: est.fixed_point_kind,
        decision,
        samples,
        seed: s,
        phase: phase.to_string(),
    });
    Ok(decision)
}

/// Scan then bisect for the first parameter with a significantly positive gap.
///
/// Undecided queries (after one doubling of M) count as non-positive, so the
/// reported bracket is [last point not shown positive, first point shown
/// positive].
pub fn locate<Q: GapQuery>(
    f: &dyn Fn(f64, &FixedPointOptions, u64) -> Result<Q>,
    lo: f64,
    hi: f64,
    opts: &SearchOptions,
    seed: u64,
) -> Result<ThresholdResult> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return param(format!("need a finite range with lo < hi, got [{lo}, {hi}]"));
    }
    if opts.scan_steps < 4 {
        return param(format!("scan_steps must be >= 4, got {}", opts.scan_steps));
    }
    let mut trace = Vec::new();
    let step = (hi - lo) / opts.scan_steps as f64;
    let mut bracket = None;
    let mut last_non_positive = None;
    for i in 0..=opts.scan_steps {
        let x = if i == opts.scan_steps { hi } else { lo + step * i as f64 };
        match query(f, x, &opts.gap, seed, "scan", &mut trace)? {
            Decision::Positive => {
                let below = last_non_positive.ok_or_else(|| {
                    Error::Threshold(format!("gap is already positive at the lower end {lo}"))
                })?;
                bracket = Some((below, x));
                break;
            }
            _ => last_non_positive = Some(x),
        }
    }
    let Some((mut a, mut b)) = bracket else {
        return Ok(ThresholdResult {
            location: hi,
            ci_lo: hi,
            ci_hi: f64::INFINITY,
            scan_trace: trace,
            decided_by: DecidedBy::RangeExhausted,
        });
    };
    for _ in 0..opts.bisect_iters {
        let mid = 0.5 * (a + b);
        match query(f, mid, &opts.gap, seed, "bisect", &mut trace)? {
            Decision::Positive => b = mid,
            _ => a = mid,
        }
    }
    Ok(ThresholdResult {
        location: 0.5 * (a + b),
        ci_lo: a,
        ci_hi: b,
        scan_trace: trace,
        decided_by: DecidedBy::SignChange,
    })
}

/// d_inf: first d in [d_lo, d_hi] where the gap is significantly positive.
pub fn find_d_inf(model: &Model, d_lo: f64, d_hi: f64, opts: &SearchOptions, seed: u64) -> Result<ThresholdResult> {
    let f = |d: f64, o: &FixedPointOptions, s: u64| prepare_gap(model, d, o, s);
    locate(&f, d_lo, d_hi, opts, seed)
}

/// β_cond at fixed d for the Potts model, via the closed-form evaluator.
pub fn find_beta_cond(
    q: usize,
    d: f64,
    beta_lo: f64,
    beta_hi: f64,
    opts: &SearchOptions,
    seed: u64,
) -> Result<ThresholdResult> {
    if !(beta_lo > 0.0) {
        return param("beta range must be positive");
    }
    let f = |beta: f64, o: &FixedPointOptions, s: u64| prepare_potts_gap(q, d, -(-beta).exp_m1(), o, s);
    locate(&f, beta_lo, beta_hi, opts, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelSpec};

    /// Gap slope·max(0, x − at) with stderr noise/√(M/1e4), no randomness.
    struct Synthetic {
        x: f64,
        at: f64,
        slope: f64,
        noise: f64,
    }

    impl GapQuery for Synthetic {
        fn estimate(&self, bethe: &BetheOptions) -> Result<GapEstimate> {
            let stderr = self.noise / (bethe.samples as f64 / 1e4).sqrt();
            let gap = EstimateWithError { mean: self.slope * (self.x - self.at).max(0.0), stderr, batches: 20, samples: bethe.samples };
            Ok(GapEstimate {
                gap,
                fixed_point_kind: if gap.mean > 0.0 { InitKind::Planted } else { InitKind::Trivial },
                bethe_trivial: EstimateWithError::exact(0.0),
                bethe_planted: gap,
                rs: 0.0,
                converged_trivial: true,
                converged_planted: true,
            })
        }
    }

    fn synthetic(at: f64) -> impl Fn(f64, &FixedPointOptions, u64) -> Result<Synthetic> {
        move |x, _, _| Ok(Synthetic { x, at, slope: 1.0, noise: 1e-3 })
    }

    fn quick() -> SearchOptions {
        SearchOptions {
            scan_steps: 8,
            bisect_iters: 5,
            gap: GapOptions {
                popdyn: FixedPointOptions { n: 2000, max_sweeps: 60, tol: 1e-3, window: 5, ..Default::default() },
                bethe: BetheOptions::with_samples(10_000),
            },
        }
    }

    #[test]
    fn decision_rule() {
        let e = |mean, stderr| EstimateWithError { mean, stderr, batches: 20, samples: 100 };
        assert_eq!(Decision::of(&e(0.31, 0.1)), Decision::Positive);
        assert_eq!(Decision::of(&e(0.29, 0.1)), Decision::Undecided);
        assert_eq!(Decision::of(&e(-0.31, 0.1)), Decision::Negative);
        assert_eq!(Decision::of(&e(1e-12, 0.0)), Decision::Undecided);
    }

    #[test]
    fn gap_at_zero_degree_is_exactly_zero() {
        for spec in [
            ModelSpec::Potts { q: 3, beta: Some(1.0), c: None },
            ModelSpec::Ldgm { k: 3, eta: 0.1 },
            ModelSpec::ColoringClosedForm { q: 3 },
        ] {
            let m = make_model(&spec).unwrap();
            let g = gap(&m, 0.0, &quick().gap, 1).unwrap();
            assert_eq!(g.gap.mean, 0.0);
            assert_eq!(g.gap.stderr, 0.0);
        }
    }

    #[test]
    fn synthetic_threshold_is_bracketed() {
        let r = locate(&synthetic(4.13), 2.0, 8.0, &quick(), 0).unwrap();
        assert_eq!(r.decided_by, DecidedBy::SignChange);
        assert!(r.ci_lo <= 4.13 + 0.01 && 4.13 <= r.ci_hi + 0.01, "{r:?}");
        assert!(r.ci_lo <= r.location && r.location <= r.ci_hi);
        for t in &r.scan_trace {
            let e = EstimateWithError { mean: t.gap, stderr: t.stderr, batches: 20, samples: t.samples };
            assert_eq!(Decision::of(&e), t.decision);
        }
    }

    #[test]
    fn refinement_gives_nested_interval() {
        let opts = quick();
        let r = locate(&synthetic(5.3), 2.0, 8.0, &opts, 7).unwrap();
        let again = locate(&synthetic(5.3), r.ci_lo, r.ci_hi, &opts, 7).unwrap();
        assert!(r.ci_lo <= again.ci_lo && again.ci_hi <= r.ci_hi, "{r:?} then {again:?}");
    }

    #[test]
    fn positive_lower_end_is_an_error() {
        assert!(matches!(locate(&synthetic(1.0), 2.0, 8.0, &quick(), 0), Err(Error::Threshold(_))));
    }

    #[test]
    fn no_sign_change_exhausts_the_range() {
        let r = locate(&synthetic(10.0), 2.0, 8.0, &quick(), 0).unwrap();
        assert_eq!(r.decided_by, DecidedBy::RangeExhausted);
        assert_eq!(r.location, 8.0);
        assert!(r.ci_hi.is_infinite());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["ci_hi"].is_null());
    }

    #[test]
    fn potts_below_threshold_exhausts_the_range() {
        let m = make_model(&ModelSpec::Potts { q: 3, beta: Some(1.0), c: None }).unwrap();
        let opts = SearchOptions { scan_steps: 4, ..quick() };
        let r = find_d_inf(&m, 0.1, 0.5, &opts, 3).unwrap();
        assert_eq!(r.decided_by, DecidedBy::RangeExhausted);
        for t in &r.scan_trace {
            assert!(t.gap.abs() < 1e-3, "{t:?}");
        }
    }

    #[test]
    fn coloring_gap_is_positive_well_above_first_moment_bound() {
        let g = potts_gap(3, 8.0, 1.0, &quick().gap, 5).unwrap();
        assert_eq!(Decision::of(&g.gap), Decision::Positive, "{g:?}");
        assert_eq!(g.fixed_point_kind, InitKind::Planted);
    }

    #[test]
    fn trace_entries_replay_from_their_seed() {
        let m = make_model(&ModelSpec::Potts { q: 3, beta: Some(1.0), c: None }).unwrap();
        let opts = SearchOptions { scan_steps: 4, ..quick() };
        let r = find_d_inf(&m, 0.1, 0.5, &opts, 3).unwrap();
        let t = &r.scan_trace[2];
        let gap_opts = GapOptions { bethe: BetheOptions { samples: t.samples, ..opts.gap.bethe }, ..opts.gap };
        let again = gap(&m, t.parameter, &gap_opts, t.seed).unwrap();
        assert_eq!(again.gap.mean, t.gap);
        assert_eq!(again.gap.stderr, t.stderr);
    }
}
