//! Scripted experiments. Each recipe returns pass/fail checks against the
//! acceptance tolerances, CSV tables and a JSON data block.

use cavity_core::bethe::{bethe_functional, bethe_potts, fields_of, ldgm_bethe, mutual_info, BetheOptions};
use cavity_core::conditions::{check_bal, check_pos, check_sym, witness_reproduces, BalOptions, PosOptions, Verdict};
use cavity_core::graphlab::{
    bp_run, exact_partition, first_moment_by_assignments, first_moment_by_graphs, first_moment_formula, gen_teacher,
    nishimori_exact_check, Assignment, BpOptions, Constraint, EdgeCount, FactorGraphInstance, Pin,
};
use cavity_core::model::{decode_into, encode, CustomWeight};
use cavity_core::popdyn::{init_population, run_to_fixed_point, FixedPointOptions, InitKind};
use cavity_core::rng::{derive_key, stream};
use cavity_core::thresholds::{find_d_inf, gap, GapOptions, SearchOptions, ThresholdResult};
use cavity_core::{make_model, rs_value, Error, EstimateWithError, Model, ModelSpec};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{default_coloring_range, write_csv, write_json};
use crate::config::{Recipe, RunConfig, Scale};
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeOutcome {
    pub recipe: Recipe,
    pub scale: Scale,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub data: Value,
    /// Known deviations that explain a failing check.
    pub notes: Vec<String>,
}

impl RecipeOutcome {
    fn new(recipe: Recipe, scale: Scale) -> Self {
        Self { recipe, scale, checks: Vec::new(), tables: Vec::new(), data: json!({}), notes: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn summary(&self) -> Value {
        json!({
            "recipe": self.recipe,
            "scale": self.scale,
            "all_pass": self.all_pass(),
            "passed": self.checks.iter().filter(|c| c.pass).count(),
            "failed": self.checks.iter().filter(|c| !c.pass).count(),
            "checks": self.checks,
            "notes": self.notes,
            "data": self.data,
            "tables": self.tables.iter().map(|t| t.file.clone()).collect::<Vec<_>>(),
        })
    }
}

/// Writes `config.json`, `summary.json` and every table into `dir`.
pub fn write_bundle(dir: &str, config: &RunConfig, outcome: &RecipeOutcome) -> CliResult<()> {
    write_json(&format!("{dir}/config.json"), config)?;
    write_json(&format!("{dir}/summary.json"), &outcome.summary())?;
    for t in &outcome.tables {
        write_csv(&format!("{dir}/{}", t.file), &t.header, &t.rows)?;
    }
    Ok(())
}

pub fn run_recipe(recipe: Recipe, scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let seed = derive_key(seed, &[recipe as u64]);
    match recipe {
        Recipe::PottsRsCheck => potts_rs_check(scale, seed),
        Recipe::SbmQ2Threshold => sbm_q2_threshold(scale, seed),
        Recipe::ColoringQ3Cond => coloring_cond(scale, seed),
        Recipe::LdgmInfoCurve => ldgm_info_curve(scale, seed),
        Recipe::ConditionMatrix => condition_matrix(scale, seed),
        Recipe::OracleSuite => oracle_suite(scale, seed),
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// The JSON name of a unit enum variant.
fn label_of<T: Serialize>(x: &T) -> String {
    json!(x).as_str().unwrap_or_default().to_string()
}

fn potts(q: usize, c: f64) -> ModelSpec {
    ModelSpec::Potts { q, beta: None, c: Some(c) }
}

fn potts_rs_check(scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let mut out = RecipeOutcome::new(Recipe::PottsRsCheck, scale);
    let (n, m) = match scale {
        Scale::Full => (100_000, 100_000),
        Scale::Quick => (2_000, 10_000),
    };
    let opts = BetheOptions::with_samples(m);
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for q in [2usize, 3, 4] {
        for c in [0.3, 0.7] {
            for d in [0.5, 2.0, 5.0] {
                cell += 1;
                let model = make_model(&potts(q, c))?;
                let pop = init_population(InitKind::Trivial, q, n, 0.0, derive_key(seed, &[1, cell]))?;
                let generic = bethe_functional(&pop, &model, d, &opts, derive_key(seed, &[2, cell]))?;
                let closed = bethe_potts(q, d, c, &pop, &opts, derive_key(seed, &[3, cell]))?;
                let target = (q as f64).ln() + 0.5 * d * (1.0 - c / q as f64).ln();
                let ok = |e: &EstimateWithError| (e.mean - target).abs() <= (3.0 * e.stderr).max(2e-3);
                let pass = ok(&generic) && ok(&closed);
                out.check(
                    format!("q={q} c={c} d={d}"),
                    pass,
                    format!("B = {:.6} ± {:.1e} (closed form {:.6}), RS = {target:.6}", generic.mean, generic.stderr, closed.mean),
                );
                rows.push(vec![
                    q.to_string(),
                    f(c),
                    f(d),
                    f(target),
                    f(generic.mean),
                    f(generic.stderr),
                    f(closed.mean),
                    f(closed.stderr),
                    pass.to_string(),
                ]);
            }
        }
    }
    out.data = json!({ "population_size": n, "samples": m });
    out.tables.push(Table {
        file: "potts_rs.csv".into(),
        header: vec!["q", "c", "d", "rs", "bethe", "stderr", "bethe_closed_form", "stderr_closed_form", "pass"],
        rows,
    });
    Ok(out)
}

fn threshold_table(file: &str, r: &ThresholdResult) -> Table {
    Table {
        file: file.into(),
        header: vec!["param", "gap", "stderr", "fp_kind", "decision", "samples", "phase"],
        rows: r
            .scan_trace
            .iter()
            .map(|t| {
                vec![
                    f(t.parameter),
                    f(t.gap),
                    f(t.stderr),
                    label_of(&t.fixed_point_kind),
                    label_of(&t.decision),
                    t.samples.to_string(),
                    t.phase.clone(),
                ]
            })
            .collect(),
    }
}

fn search(n: usize, max_sweeps: usize, samples: usize, scan_steps: usize, bisect_iters: usize) -> SearchOptions {
    SearchOptions {
        scan_steps,
        bisect_iters,
        gap: GapOptions {
            popdyn: FixedPointOptions { n, max_sweeps, tol: 1e-4, window: 10, epsilon: 0.0, projections: 8 },
            bethe: BetheOptions::with_samples(samples),
        },
    }
}

fn sbm_q2_threshold(scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let mut out = RecipeOutcome::new(Recipe::SbmQ2Threshold, scale);
    let opts = match scale {
        Scale::Full => search(100_000, 200, 1_000_000, 12, 5),
        Scale::Quick => search(5_000, 40, 20_000, 4, 1),
    };
    let spec = ModelSpec::Sbm { q: 2, beta: 3f64.ln(), d: None };
    let r = find_d_inf(&make_model(&spec)?, 2.0, 8.0, &opts, seed)?;
    out.check(
        "d_inf in [3.8, 4.2]",
        (3.8..=4.2).contains(&r.location),
        format!("location {:.4}, bracket [{:.4}, {:.4}], exact 4", r.location, r.ci_lo, r.ci_hi),
    );
    out.tables.push(threshold_table("trace.csv", &r));
    out.data = json!({ "model": spec, "range": [2.0, 8.0], "search": opts, "result": r });
    Ok(out)
}

fn coloring_cond(scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let mut out = RecipeOutcome::new(Recipe::ColoringQ3Cond, scale);
    let (opts3, opts10) = match scale {
        Scale::Full => (search(100_000, 200, 1_000_000, 8, 4), search(10_000, 100, 100_000, 4, 3)),
        Scale::Quick => (search(5_000, 40, 20_000, 4, 1), search(2_000, 20, 10_000, 4, 0)),
    };
    let q3 = ModelSpec::ColoringClosedForm { q: 3 };
    let r3 = find_d_inf(&make_model(&q3)?, 3.0, 5.0, &opts3, derive_key(seed, &[3]))?;
    out.check(
        "q=3: d_cond in [3.7, 4.3]",
        (3.7..=4.3).contains(&r3.location),
        format!("location {:.4}, bracket [{:.4}, {:.4}], conjectured 4", r3.location, r3.ci_lo, r3.ci_hi),
    );
    let q10 = ModelSpec::ColoringClosedForm { q: 10 };
    let [lo, hi] = default_coloring_range(10);
    let anchor = 19.0 * 10f64.ln() - 2.0 * 2f64.ln();
    let r10 = find_d_inf(&make_model(&q10)?, lo, hi, &opts10, derive_key(seed, &[10]))?;
    out.check(
        "q=10: d_cond within 2 of (2q-1)ln q - 2ln 2",
        (r10.location - anchor).abs() <= 2.0,
        format!("location {:.4}, bracket [{:.4}, {:.4}], anchor {anchor:.4}", r10.location, r10.ci_lo, r10.ci_hi),
    );
    out.tables.push(threshold_table("trace_q3.csv", &r3));
    out.tables.push(threshold_table("trace_q10.csv", &r10));
    out.data = json!({
        "q3": { "range": [3.0, 5.0], "search": opts3, "result": r3 },
        "q10": { "range": [lo, hi], "anchor": anchor, "search": opts10, "result": r10 },
    });
    Ok(out)
}

/// Accumulated rounding of a mean over 1e5 samples of size O(1).
const ROUNDOFF: f64 = 1e-10;

/// H(η) = −η ln η − (1−η) ln(1−η).
fn binary_entropy(eta: f64) -> f64 {
    -eta * eta.ln() - (1.0 - eta) * (1.0 - eta).ln()
}

fn ldgm_info_curve(scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let mut out = RecipeOutcome::new(Recipe::LdgmInfoCurve, scale);
    let k = 3;
    let (n, sweeps, m) = match scale {
        Scale::Full => (10_000, 100, 100_000),
        Scale::Quick => (1_000, 20, 10_000),
    };
    let popdyn = FixedPointOptions { n, max_sweeps: sweeps, tol: 1e-4, window: 10, epsilon: 0.0, projections: 8 };
    let bethe = BetheOptions::with_samples(m);
    let etas = [0.05, 0.1, 0.2, 0.3, 0.5];
    let degrees = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let mut rows = Vec::new();
    let (mut zero_ok, mut half_ok, mut agree_ok, mut nonneg_ok, mut displayed_ok) = (true, true, true, true, true);
    let (mut worst_agree, mut worst_half) = (0.0f64, 0.0f64);
    let mut cell = 0u64;
    for &eta in &etas {
        let model = make_model(&ModelSpec::Ldgm { k, eta })?;
        for &d in &degrees {
            cell += 1;
            let s = derive_key(seed, &[cell]);
            let (sup, kind, pair) = if d == 0.0 {
                let g = gap(&model, 0.0, &GapOptions { popdyn, bethe }, s)?;
                (g.bethe_trivial, InitKind::Trivial, None)
            } else {
                let mut best: Option<(EstimateWithError, InitKind, EstimateWithError)> = None;
                for init in [InitKind::Trivial, InitKind::Planted] {
                    let fp = run_to_fixed_point(init, &model, d, &popdyn, s)?;
                    let generic = bethe_functional(&fp.population, &model, d, &bethe, derive_key(s, &[1]))?;
                    let theta = ldgm_bethe(k, d, eta, &fields_of(&fp.population), &bethe, derive_key(s, &[2]))?;
                    let diff = (generic.mean - theta.mean).abs();
                    let se = generic.stderr.hypot(theta.stderr);
                    if diff > (3.0 * se).max(1e-12) {
                        agree_ok = false;
                    }
                    if se > 0.0 {
                        worst_agree = worst_agree.max(diff / se);
                    }
                    if best.as_ref().is_none_or(|b| generic.mean > b.0.mean) {
                        best = Some((generic, init, theta));
                    }
                }
                let (g, kind, t) = best.expect("two fixed points");
                (g, kind, Some(t))
            };
            let info = mutual_info(&model, d, &sup);
            let displayed = (1.0 + d / k as f64) * 2f64.ln() - binary_entropy(eta) - sup.mean;
            if d == 0.0 {
                zero_ok &= info.mean == 0.0;
                displayed_ok &= (displayed + binary_entropy(eta)).abs() < 1e-12;
            }
            if eta == 0.5 {
                worst_half = worst_half.max(info.mean.abs());
                half_ok &= info.mean.abs() <= (3.0 * info.stderr).max(ROUNDOFF);
            }
            nonneg_ok &= info.mean >= -(3.0 * info.stderr).max(ROUNDOFF);
            let theta_mean = pair.map(|t| t.mean).unwrap_or(sup.mean);
            let theta_se = pair.map(|t| t.stderr).unwrap_or(0.0);
            rows.push(vec![
                f(eta),
                f(d),
                f(info.mean),
                f(info.stderr),
                f(sup.mean),
                f(sup.stderr),
                f(theta_mean),
                f(theta_se),
                label_of(&kind),
                f(rs_value(&model, d)),
                f(displayed),
            ]);
        }
    }
    out.check("I(d=0) = 0 exactly", zero_ok, "implemented mutual-information form at zero degree");
    out.check("|I(eta=0.5)| <= max(3 stderr, 1e-10)", half_ok, format!("max |I| at eta = 0.5: {worst_half:.3e}"));
    out.check(
        "generic and theta evaluators agree within 3 combined stderr",
        agree_ok,
        format!("largest discrepancy {worst_agree:.2} combined stderr"),
    );
    out.check("I >= -max(3 stderr, 1e-10) everywhere", nonneg_ok, "mutual information is nonnegative");
    out.check(
        "displayed closed form gives -H(eta) at d=0",
        displayed_ok,
        "(1 + d/k) ln 2 + eta ln eta + (1-eta) ln(1-eta) - sup B evaluated at d = 0",
    );
    out.data = json!({ "k": k, "etas": etas, "degrees": degrees, "popdyn": popdyn, "bethe": bethe });
    out.tables.push(Table {
        file: "info_curve.csv".into(),
        header: vec![
            "eta", "d", "mutual_info", "stderr", "bethe_generic", "stderr_generic", "bethe_theta", "stderr_theta",
            "fp_kind", "rs", "mutual_info_displayed_form",
        ],
        rows,
    });
    Ok(out)
}

fn ferromagnet() -> ModelSpec {
    let mut table = vec![1.0; 9];
    for s in 0..3 {
        table[s * 3 + s] = 1.5;
    }
    ModelSpec::Custom { q: 3, k: 2, weights: vec![CustomWeight { table, prior: 1.0 }] }
}

fn condition_matrix(scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let mut out = RecipeOutcome::new(Recipe::ConditionMatrix, scale);
    let pos = match scale {
        Scale::Full => PosOptions::default(),
        Scale::Quick => PosOptions { l_max: 4, outer_samples: 10_000, family_size: 4, ..Default::default() },
    };
    let bal = BalOptions::default();
    let models = [
        ("potts q=3 beta=1", ModelSpec::Potts { q: 3, beta: Some(1.0), c: None }),
        ("potts q=4 beta=2", ModelSpec::Potts { q: 4, beta: Some(2.0), c: None }),
        ("hypergraph potts q=3 k=3 beta=1", ModelSpec::HypergraphPotts { q: 3, k: 3, beta: Some(1.0), c: None }),
        ("ksat k=3 beta=1", ModelSpec::Ksat { k: 3, beta: Some(1.0), c: None }),
        ("naesat k=4 beta=1", ModelSpec::Naesat { k: 4, beta: Some(1.0), c: None }),
        ("ldgm k=3 eta=0.2", ModelSpec::Ldgm { k: 3, eta: 0.2 }),
        ("ldgm k=2 eta=0.3", ModelSpec::Ldgm { k: 2, eta: 0.3 }),
    ];
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, (label, spec)) in models.iter().enumerate() {
        let model = make_model(spec)?;
        let s = derive_key(seed, &[i as u64]);
        let rs = [check_sym(&model), check_bal(&model, &bal, s)?, check_pos(&model, &pos, s)?];
        for r in &rs {
            let name = label_of(&r.condition);
            let verdict = label_of(&r.verdict);
            out.check(
                format!("{label}: {name} passes"),
                r.verdict == Verdict::Pass,
                format!("verdict {verdict}, max residual {:.3e}", r.max_residual),
            );
            rows.push(vec![label.to_string(), name, verdict, f(r.max_residual), r.samples_used.to_string()]);
        }
        reports.push(json!({ "model": spec, "reports": rs }));
    }
    let ferro = make_model(&ferromagnet())?;
    let r = check_bal(&ferro, &bal, derive_key(seed, &[99]))?;
    let reproduces = match &r.witness {
        Some(w) => witness_reproduces(&ferro, w, bal.tol)?,
        None => false,
    };
    out.check(
        "ferromagnetic potts: BAL fails with a reproducible witness",
        r.verdict == Verdict::Fail && reproduces,
        format!("verdict {}, witness reproduces: {reproduces}", label_of(&r.verdict)),
    );
    rows.push(vec![
        "ferromagnetic potts q=3 c=0.5".into(),
        "BAL".into(),
        label_of(&r.verdict),
        f(r.max_residual),
        r.samples_used.to_string(),
    ]);
    reports.push(json!({ "model": ferromagnet(), "reports": [r] }));
    out.data = json!({ "bal": bal, "pos": pos, "reports": reports });
    out.tables.push(Table {
        file: "conditions.csv".into(),
        header: vec!["model", "condition", "verdict", "max_residual", "samples_used"],
        rows,
    });
    Ok(out)
}

/// The zoo used by the oracle suite.
/// One representative of every model family.
pub fn zoo() -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("potts", ModelSpec::Potts { q: 3, beta: Some(1.0), c: None }),
        ("coloring", ModelSpec::ColoringClosedForm { q: 3 }),
        ("sbm", ModelSpec::Sbm { q: 2, beta: 3f64.ln(), d: None }),
        ("ldgm", ModelSpec::Ldgm { k: 3, eta: 0.1 }),
        ("ksat", ModelSpec::Ksat { k: 3, beta: Some(1.0), c: None }),
        ("naesat", ModelSpec::Naesat { k: 3, beta: Some(1.0), c: None }),
        ("hypergraph_potts", ModelSpec::HypergraphPotts { q: 3, k: 3, beta: Some(1.0), c: None }),
        ("custom", ferromagnet()),
    ]
}

/// A random factor tree on at most `max_n` variables with random pins.
pub fn random_tree(model: &Model, max_n: usize, pin_prob: f64, rng: &mut impl Rng) -> FactorGraphInstance {
    let (q, k) = (model.q(), model.k());
    let factors = rng.gen_range(0..=(max_n - 1) / (k - 1));
    let mut n = 1;
    let mut constraints = Vec::with_capacity(factors);
    for _ in 0..factors {
        let anchor = rng.gen_range(0..n);
        let slot = rng.gen_range(0..k);
        let vars = (0..k)
            .map(|h| {
                if h == slot {
                    anchor
                } else {
                    n += 1;
                    n - 1
                }
            })
            .collect();
        constraints.push(Constraint(model.draw_weight(rng), vars));
    }
    let mut g = FactorGraphInstance::new(n, constraints);
    for v in 0..n {
        if rng.gen::<f64>() < pin_prob {
            g.pinned.push(Pin(v, rng.gen_range(0..q)));
        }
    }
    g
}

/// Pearson χ² of teacher constraint draws against the exact teacher law,
/// as a z-score (χ² − df)/√(2 df). Infinite when a zero-probability cell occurs.
pub fn teacher_chi_square(model: &Model, truth: &[usize], draws: usize, seed: u64) -> CliResult<(f64, usize)> {
    let (k, n) = (model.k(), truth.len());
    let tuples = n.pow(k as u32);
    let mut expected = vec![0.0; model.weights().len() * tuples];
    let mut y = vec![0; k];
    let mut spins = vec![0; k];
    for (psi, (w, &p)) in model.weights().iter().zip(model.priors()).enumerate() {
        for t in 0..tuples {
            decode_into(t, n, &mut y);
            y.iter().zip(spins.iter_mut()).for_each(|(&v, s)| *s = truth[v]);
            expected[psi * tuples + t] = p * w.at(encode(&spins, model.q()));
        }
    }
    let total: f64 = expected.iter().sum();
    let g = gen_teacher(n, EdgeCount::Fixed(draws), model, Some(Assignment::new(truth.to_vec())), seed)?;
    let mut observed = vec![0usize; expected.len()];
    for c in &g.constraints {
        observed[c.psi() * tuples + encode(c.vars(), n)] += 1;
    }
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (&e, &o) in expected.iter().zip(&observed) {
        if e > 0.0 {
            let mean = e / total * draws as f64;
            chi2 += (o as f64 - mean).powi(2) / mean;
            cells += 1;
        } else if o > 0 {
            return Ok((f64::INFINITY, cells));
        }
    }
    let df = (cells - 1) as f64;
    Ok(((chi2 - df) / (2.0 * df).sqrt(), cells - 1))
}

fn oracle_suite(scale: Scale, seed: u64) -> CliResult<RecipeOutcome> {
    let mut out = RecipeOutcome::new(Recipe::OracleSuite, scale);
    let (trees, draws) = match scale {
        Scale::Full => (100, 100_000),
        Scale::Quick => (10, 10_000),
    };

    // (a) Nishimori identity on every budget-feasible (n <= 3, m <= 2).
    let nishimori_models = [
        ("potts q=2 c=0.5", ModelSpec::Potts { q: 2, beta: None, c: Some(0.5) }),
        ("potts q=3 beta=1", ModelSpec::Potts { q: 3, beta: Some(1.0), c: None }),
        ("ldgm k=2 eta=0.2", ModelSpec::Ldgm { k: 2, eta: 0.2 }),
        ("ldgm k=3 eta=0.1", ModelSpec::Ldgm { k: 3, eta: 0.1 }),
    ];
    let mut rows = Vec::new();
    let mut worst_tv = 0.0f64;
    let mut all_ok = true;
    let mut skipped = Vec::new();
    for (label, spec) in &nishimori_models {
        let model = make_model(spec)?;
        for n in 1..=3 {
            for m in 0..=2 {
                match nishimori_exact_check(n, m, &model) {
                    Ok(r) => {
                        worst_tv = worst_tv.max(r.tv_distance);
                        all_ok &= r.pass;
                        rows.push(vec![label.to_string(), n.to_string(), m.to_string(), r.graphs.to_string(), f(r.tv_distance)]);
                    }
                    Err(Error::Budget { .. }) => skipped.push(format!("{label} n={n} m={m}")),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    out.check("(a) Nishimori tv < 1e-10", all_ok, format!("{} cases, max tv {worst_tv:.2e}", rows.len()));
    out.tables.push(Table { file: "nishimori.csv".into(), header: vec!["model", "n", "m", "graphs", "tv"], rows });

    // (b) BP is exact on trees.
    let tree_models: Vec<_> = zoo().into_iter().filter(|(l, _)| *l != "coloring").collect();
    let mut rows = Vec::new();
    let (mut worst_z, mut worst_marg) = (0.0f64, 0.0f64);
    let mut rng = stream(seed, &[2]);
    for t in 0..trees {
        let (label, spec) = &tree_models[t % tree_models.len()];
        let model = make_model(spec)?;
        let g = random_tree(&model, 12, 0.15, &mut rng);
        let ex = exact_partition(&g, &model)?;
        let bp = bp_run(&g, &model, &BpOptions::default())?;
        let (dz, dm) = if ex.zero_partition {
            (if bp.converged { f64::INFINITY } else { 0.0 }, 0.0)
        } else {
            let dm = bp
                .marginals
                .iter()
                .zip(&ex.marginals)
                .flat_map(|(a, b)| a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            ((bp.log_z - ex.log_z).abs(), dm)
        };
        worst_z = worst_z.max(dz);
        worst_marg = worst_marg.max(dm);
        rows.push(vec![t.to_string(), label.to_string(), g.n.to_string(), g.constraints.len().to_string(), g.pinned.len().to_string(), f(dz), f(dm)]);
    }
    out.check(
        format!("(b) tree BP exact to 1e-8 on {trees} random trees"),
        worst_z < 1e-8 && worst_marg < 1e-8,
        format!("max |log Z error| {worst_z:.2e}, max marginal error {worst_marg:.2e}"),
    );
    out.tables.push(Table {
        file: "tree_bp.csv".into(),
        header: vec!["tree", "model", "n", "m", "pins", "log_z_error", "marginal_error"],
        rows,
    });

    // (c) First-moment identity on fully enumerated tiny null models.
    let mut rows = Vec::new();
    let mut constant_mean_failures = Vec::new();
    for (label, spec) in zoo() {
        let model = make_model(&spec)?;
        let constant_mean = {
            let mt = model.mean_table();
            mt.iter().all(|&x| (x - mt[0]).abs() < 1e-15)
        };
        let mut worst = 0.0f64;
        let mut cross = 0.0f64;
        for (n, m) in [(2, 1), (3, 1), (3, 2)] {
            let by_graphs = first_moment_by_graphs(n, m, &model)?;
            let by_sigma = first_moment_by_assignments(n, m, &model)?;
            let formula = first_moment_formula(n, m, &model);
            let rel = (by_graphs - formula).abs() / formula;
            worst = worst.max(rel);
            cross = cross.max((by_graphs - by_sigma).abs() / by_sigma);
            rows.push(vec![label.into(), n.to_string(), m.to_string(), f(by_graphs), f(by_sigma), f(formula), f(rel), constant_mean.to_string()]);
        }
        out.check(
            format!("(c) first moment q^n xi^m [{label}]"),
            worst < 1e-12,
            format!("max relative residual {worst:.3e}; enumeration cross-check {cross:.1e}; constant mean table: {constant_mean}"),
        );
        out.check(format!("(c) first-moment enumerations agree [{label}]"), cross < 1e-12, format!("{cross:.1e}"));
        if constant_mean && worst >= 1e-12 {
            constant_mean_failures.push(label);
        }
    }
    out.check(
        "(c) identity exact for every constant-mean model",
        constant_mean_failures.is_empty(),
        format!("failures: {constant_mean_failures:?}"),
    );
    out.notes.push(
        "E[Z] = q^n xi^m holds exactly only when tau -> E[Psi(tau)] is constant (ldgm, ksat, naesat). For Potts-type \
         models the enumerated first moment is sum_sigma f(sigma)^m with f depending on the colour-class sizes of sigma, \
         which matches q^n xi^m only to leading exponential order; e.g. potts q=2 c=0.5, n=3, m=2 gives 3.6296 vs 4.5."
            .into(),
    );
    out.tables.push(Table {
        file: "first_moment.csv".into(),
        header: vec!["model", "n", "m", "by_graphs", "by_assignments", "q_n_xi_m", "relative_residual", "constant_mean"],
        rows,
    });

    // (d) Teacher law χ² at 4σ.
    let mut rows = Vec::new();
    for (i, (label, spec)) in zoo().into_iter().enumerate() {
        let model = make_model(&spec)?;
        let n = 4;
        let truth: Vec<usize> = (0..n).map(|v| v % model.q()).collect();
        let (z, df) = teacher_chi_square(&model, &truth, draws, derive_key(seed, &[4, i as u64]))?;
        out.check(format!("(d) teacher law chi-square [{label}]"), z < 4.0, format!("z = {z:.2} with {df} degrees of freedom"));
        rows.push(vec![label.into(), n.to_string(), draws.to_string(), df.to_string(), f(z)]);
    }
    out.tables.push(Table { file: "teacher.csv".into(), header: vec!["model", "n", "draws", "df", "z"], rows });
    out.data = json!({ "trees": trees, "teacher_draws": draws, "nishimori_skipped_over_budget": skipped });
    Ok(out)
}
