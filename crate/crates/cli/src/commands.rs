//! One function per subcommand. Each returns the JSON result and whether the
//! run counts as a success for the exit code.

use cavity_core::bethe::{bethe_functional, bethe_potts, mutual_info};
use cavity_core::conditions::{check_bal, check_pos, check_sym, Condition, Verdict};
use cavity_core::graphlab::{
    bp_run, exact_partition, gen_null, gen_teacher, nishimori_exact_check, pin, Assignment, EdgeCount,
    FactorGraphInstance,
};
use cavity_core::popdyn::{run_to_fixed_point_with, InitKind, Kernel, Population, ProbVec};
use cavity_core::thresholds::{find_beta_cond, find_d_inf, gap, GapOptions, ThresholdResult};
use cavity_core::{make_model, EstimateWithError, Model, ModelKind};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::experiments;

pub struct Outcome {
    /// The configuration with every default filled in.
    pub config: RunConfig,
    pub result: Value,
    pub success: bool,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

pub fn write_text(path: &str, text: &str) -> CliResult<()> {
    if let Some(dir) = std::path::Path::new(path).parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &str, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_csv(path: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Reads a graph instance, either bare or wrapped in a run record's `result`.
pub fn read_instance(path: &str) -> CliResult<FactorGraphInstance> {
    let mut v = read_json(path)?;
    if let Some(inner) = v.get_mut("result") {
        v = inner.take();
    }
    serde_json::from_value(v).map_err(|e| CliError::usage(format!("{path}: not a graph instance: {e}")))
}

pub fn execute(cfg: &RunConfig) -> CliResult<Outcome> {
    match cfg.command {
        CommandKind::Check => check(cfg),
        CommandKind::Popdyn => popdyn(cfg),
        CommandKind::Bethe => bethe(cfg),
        CommandKind::MutualInfo => mutual_information(cfg),
        CommandKind::Threshold => threshold(cfg),
        CommandKind::Generate => generate(cfg),
        CommandKind::Exact => exact(cfg),
        CommandKind::Bp => bp(cfg),
        CommandKind::Nishimori => nishimori(cfg),
        CommandKind::Experiment => experiment(cfg),
    }
}

fn check(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: CheckParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let mut reports = Vec::with_capacity(p.conditions.len());
    for c in &p.conditions {
        reports.push(match c {
            Condition::Sym => check_sym(&model),
            Condition::Bal => check_bal(&model, &p.bal, cfg.seed)?,
            Condition::Pos => check_pos(&model, &p.pos, cfg.seed)?,
        });
    }
    let all_pass = reports.iter().all(|r| r.verdict == Verdict::Pass);
    Ok(Outcome {
        config: cfg.resolved_with(&p),
        result: json!({ "reports": reports, "all_pass": all_pass }),
        success: all_pass,
    })
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn popdyn(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: PopdynParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let kernel = Kernel::preferred(&model)?;
    let fp = run_to_fixed_point_with(p.init, &kernel, p.d, &p.fixed_point, cfg.seed)?;
    if let Some(path) = &p.trace_csv {
        let rows: Vec<Vec<String>> = fp
            .order_param_trace
            .iter()
            .zip(&fp.distance_trace)
            .enumerate()
            .map(|(t, (op, w1))| vec![(t + 1).to_string(), fmt(*op), fmt(*w1)])
            .collect();
        write_csv(path, &["sweep", "order_param", "w1"], &rows)?;
    }
    if let Some(path) = &p.population_out {
        write_json(path, &fp.population)?;
    }
    let result = json!({
        "init_kind": fp.init_kind,
        "converged": fp.converged,
        "sweeps": fp.sweeps,
        "population_size": fp.population.len(),
        "mean": fp.population.mean(),
        "order_parameter": fp.population.order_parameter(),
        "distance_trace": fp.distance_trace,
        "order_param_trace": fp.order_param_trace,
    });
    Ok(Outcome { config: cfg.resolved_with(&p), result, success: true })
}

/// B(d, π) with the closed-form evaluator for Potts-type models.
pub fn evaluate_bethe(
    model: &Model,
    d: f64,
    pop: &Population,
    opts: &cavity_core::bethe::BetheOptions,
    seed: u64,
) -> CliResult<EstimateWithError> {
    Ok(match model.potts_c() {
        Some(c) => bethe_potts(model.q(), d, c, pop, opts, seed)?,
        None => bethe_functional(pop, model, d, opts, seed)?,
    })
}

fn estimate_record(e: &EstimateWithError, model: &Model, d: f64) -> Value {
    json!({
        "mean": e.mean,
        "stderr": e.stderr,
        "batches": e.batches,
        "samples": e.samples,
        "model": model.spec(),
        "d": d,
    })
}

fn bethe(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: BetheParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let pop = match &p.population {
        Some(path) => {
            let v = read_json(path)?;
            serde_json::from_value::<Population>(v)
                .map_err(|e| CliError::usage(format!("{path}: not a population: {e}")))?
        }
        None => {
            let kernel = Kernel::preferred(&model)?;
            run_to_fixed_point_with(p.init, &kernel, p.d, &p.fixed_point, cfg.seed)?.population
        }
    };
    let est = evaluate_bethe(&model, p.d, &pop, &p.bethe, cfg.seed)?;
    Ok(Outcome { config: cfg.resolved_with(&p), result: estimate_record(&est, &model, p.d), success: true })
}

fn mutual_information(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: MutualInfoParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let g = gap(&model, p.d, &GapOptions { popdyn: p.fixed_point, bethe: p.bethe }, cfg.seed)?;
    let sup = match g.fixed_point_kind {
        InitKind::Trivial => g.bethe_trivial,
        InitKind::Planted => g.bethe_planted,
    };
    let info = mutual_info(&model, p.d, &sup);
    let mut result = estimate_record(&info, &model, p.d);
    result["fixed_point_kind"] = to_value(&g.fixed_point_kind);
    result["bethe_sup"] = to_value(&sup);
    Ok(Outcome { config: cfg.resolved_with(&p), result, success: true })
}

/// [(2q−1)ln q − 3, (2q−1)ln q + 1]
pub fn default_coloring_range(q: usize) -> [f64; 2] {
    let anchor = (2.0 * q as f64 - 1.0) * (q as f64).ln();
    [anchor - 3.0, anchor + 1.0]
}

pub fn write_trace_csv(path: &str, r: &ThresholdResult) -> CliResult<()> {
    let rows: Vec<Vec<String>> = r
        .scan_trace
        .iter()
        .map(|t| vec![fmt(t.parameter), fmt(t.gap), fmt(t.stderr), to_value(&t.fixed_point_kind).as_str().unwrap_or("").to_string()])
        .collect();
    write_csv(path, &["param", "gap", "stderr", "fp_kind"], &rows)
}

fn threshold(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut p: ThresholdParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let result = match p.target {
        Target::DInf => {
            let [lo, hi] = p.range.ok_or_else(|| CliError::usage("threshold d_inf needs --range"))?;
            find_d_inf(&model, lo, hi, &p.search, cfg.seed)?
        }
        Target::BetaCond => {
            if !matches!(model.kind(), ModelKind::Potts | ModelKind::Sbm) {
                return Err(CliError::usage("beta_cond needs a potts model (its q is used; beta is scanned)"));
            }
            let d = p.d.ok_or_else(|| CliError::usage("beta_cond needs --d"))?;
            let [lo, hi] = p.range.ok_or_else(|| CliError::usage("beta_cond needs --range"))?;
            find_beta_cond(model.q(), d, lo, hi, &p.search, cfg.seed)?
        }
        Target::DCondColoring => {
            if model.kind() != ModelKind::ColoringClosedForm {
                return Err(CliError::usage("d_cond_coloring needs a coloring model"));
            }
            let [lo, hi] = *p.range.get_or_insert(default_coloring_range(model.q()));
            find_d_inf(&model, lo, hi, &p.search, cfg.seed)?
        }
    };
    if let Some(path) = &p.trace_csv {
        write_trace_csv(path, &result)?;
    }
    Ok(Outcome { config: cfg.resolved_with(&p), result: to_value(&result), success: true })
}

fn generate(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: GenerateParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let edges = match (p.m, p.d) {
        (Some(m), None) => EdgeCount::Fixed(m),
        (None, Some(d)) => EdgeCount::Rate(d),
        _ => return Err(CliError::usage("generate needs exactly one of --m and --d")),
    };
    let instance = match p.kind {
        GraphKind::Null => {
            if p.truth.is_some() || p.pin_t.is_some() {
                return Err(CliError::usage("truth and pinning apply to teacher graphs only"));
            }
            gen_null(p.n, edges, &model, cfg.seed)?
        }
        GraphKind::Teacher => {
            let g = gen_teacher(p.n, edges, &model, p.truth.clone().map(Assignment::new), cfg.seed)?;
            match p.pin_t {
                Some(t) => {
                    let truth = g.truth.clone().expect("teacher graphs carry their truth");
                    pin(&g, &truth, t, cfg.seed)?
                }
                None => g,
            }
        }
    };
    Ok(Outcome { config: cfg.resolved_with(&p), result: to_value(&instance), success: true })
}

fn write_marginals(path: &str, marginals: &[ProbVec]) -> CliResult<()> {
    let rows: Vec<Vec<String>> = marginals
        .iter()
        .enumerate()
        .flat_map(|(v, m)| m.0.iter().enumerate().map(move |(s, x)| vec![v.to_string(), s.to_string(), fmt(*x)]))
        .collect();
    write_csv(path, &["variable", "spin", "probability"], &rows)
}

fn exact(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: ExactParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let r = exact_partition(&read_instance(&p.instance)?, &model)?;
    if let Some(path) = &p.marginals_csv {
        write_marginals(path, &r.marginals)?;
    }
    Ok(Outcome { config: cfg.resolved_with(&p), result: to_value(&r), success: true })
}

fn bp(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: BpParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let r = bp_run(&read_instance(&p.instance)?, &model, &p.bp)?;
    if let Some(path) = &p.marginals_csv {
        write_marginals(path, &r.marginals)?;
    }
    Ok(Outcome { config: cfg.resolved_with(&p), result: to_value(&r), success: true })
}

fn nishimori(cfg: &RunConfig) -> CliResult<Outcome> {
    let p: NishimoriParams = cfg.params()?;
    let model = make_model(&p.model)?;
    let r = nishimori_exact_check(p.n, p.m, &model)?;
    Ok(Outcome { config: cfg.resolved_with(&p), success: r.pass, result: to_value(&r) })
}

fn experiment(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut p: ExperimentParams = cfg.params()?;
    let dir = p.bundle.get_or_insert_with(|| format!("bundle-{}", p.recipe.name())).clone();
    let outcome = experiments::run_recipe(p.recipe, p.scale, cfg.seed)?;
    let config = cfg.resolved_with(&p);
    experiments::write_bundle(&dir, &config, &outcome)?;
    Ok(Outcome { config, success: outcome.all_pass(), result: to_value(&outcome.summary()) })
}
