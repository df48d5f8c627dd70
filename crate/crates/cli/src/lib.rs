//! The `cavity` command-line front end: argument parsing, configuration
//! resolution, dispatch and result emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::config::{model_value, read_json, set_path, CommandKind, GraphKind, Recipe, RunConfig, Scale, Target, VERSION};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cavity", version, about = "Replica-symmetric cavity predictions for random factor graphs")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "CAVITY_THREADS")]
    pub threads: Option<usize>,
    /// Result file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<String>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check SYM, BAL and POS for a model.
    Check(CheckArgs),
    /// Run population dynamics to a fixed point.
    Popdyn(PopdynArgs),
    /// Estimate the Bethe functional on a population.
    Bethe(BetheArgs),
    /// Mutual information from the maximal Bethe value over both fixed points.
    MutualInfo(MutualInfoArgs),
    /// Locate a threshold by a noisy sign test on the Bethe gap.
    Threshold(ThresholdArgs),
    /// Generate a null or teacher graph instance.
    Generate(GenerateArgs),
    /// Exact partition function and marginals by enumeration.
    Exact(InstanceArgs),
    /// Belief propagation on an instance.
    Bp(BpArgs),
    /// Exact Nishimori identity check on tiny graphs.
    Nishimori(NishimoriArgs),
    /// Run a scripted experiment and write a result bundle.
    Experiment(ExperimentArgs),
}

/// Flag values collected into a JSON patch over `params`.
#[derive(Default)]
struct Patch(Map<String, Value>);

impl Patch {
    fn put<T: serde::Serialize>(&mut self, path: &str, value: &Option<T>) {
        if let Some(v) = value {
            set_path(&mut self.0, path, json!(v));
        }
    }

    fn model(&mut self, arg: &Option<String>) -> CliResult<()> {
        if let Some(m) = arg {
            self.0.insert("model".into(), model_value(m)?);
        }
        Ok(())
    }
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok([p(a)?, p(b)?])
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|x| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"))).collect()
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Model spec: a JSON file or inline JSON.
    #[arg(long)]
    model: Option<String>,
    /// Subset of conditions, e.g. SYM,BAL.
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<String>>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    l_max: Option<u32>,
    #[arg(long)]
    outer_samples: Option<usize>,
    #[arg(long)]
    family_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FixedPointArgs {
    /// Population size.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Maximum number of sweeps.
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    /// Planted smoothing ε.
    #[arg(long)]
    eps: Option<f64>,
}

impl FixedPointArgs {
    fn patch(&self, p: &mut Patch, prefix: &str) {
        p.put(&format!("{prefix}.n"), &self.n);
        p.put(&format!("{prefix}.max_sweeps"), &self.sweeps);
        p.put(&format!("{prefix}.tol"), &self.tol);
        p.put(&format!("{prefix}.window"), &self.window);
        p.put(&format!("{prefix}.epsilon"), &self.eps);
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Monte-Carlo samples for the Bethe functional.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
}

impl SampleArgs {
    fn patch(&self, p: &mut Patch, prefix: &str) {
        p.put(&format!("{prefix}.samples"), &self.m);
        p.put(&format!("{prefix}.batches"), &self.batches);
    }
}

#[derive(Debug, Args)]
pub struct PopdynArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    d: Option<f64>,
    /// trivial or planted
    #[arg(long)]
    init: Option<String>,
    #[command(flatten)]
    fp: FixedPointArgs,
    /// CSV of sweep, order_param, w1.
    #[arg(long)]
    trace_csv: Option<String>,
    /// JSON file for the final population.
    #[arg(long)]
    population_out: Option<String>,
}

#[derive(Debug, Args)]
pub struct BetheArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    d: Option<f64>,
    /// Population file written by `popdyn --population-out`.
    #[arg(long)]
    population: Option<String>,
    #[arg(long)]
    init: Option<String>,
    #[command(flatten)]
    fp: FixedPointArgs,
    #[command(flatten)]
    samples: SampleArgs,
}

#[derive(Debug, Args)]
pub struct MutualInfoArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    d: Option<f64>,
    #[command(flatten)]
    fp: FixedPointArgs,
    #[command(flatten)]
    samples: SampleArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long, value_enum)]
    target: Option<Target>,
    #[arg(long)]
    model: Option<String>,
    /// Search interval lo:hi.
    #[arg(long, value_parser = parse_range)]
    range: Option<[f64; 2]>,
    /// Scan steps before bisection.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    bisect: Option<usize>,
    /// Average degree (beta_cond only).
    #[arg(long)]
    d: Option<f64>,
    #[command(flatten)]
    fp: FixedPointArgs,
    #[command(flatten)]
    samples: SampleArgs,
    /// CSV of param, gap, stderr, fp_kind.
    #[arg(long)]
    trace_csv: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<GraphKind>,
    /// Comma-separated truth spins for a teacher graph.
    #[arg(long, value_parser = parse_list)]
    truth: Option<Vec<usize>>,
    /// Pin with θ ~ U[0, T].
    #[arg(long)]
    pin_t: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    model: Option<String>,
    /// Instance file written by `generate`, or a bare instance.
    #[arg(long)]
    instance: Option<String>,
    /// CSV of variable, spin, probability.
    #[arg(long)]
    marginals_csv: Option<String>,
}

#[derive(Debug, Args)]
pub struct BpArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct NishimoriArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    recipe: Option<Recipe>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    /// Bundle directory.
    #[arg(long)]
    bundle: Option<String>,
}

fn init_kind(arg: &Option<String>) -> CliResult<Option<String>> {
    match arg.as_deref() {
        None => Ok(None),
        Some(s @ ("trivial" | "planted")) => Ok(Some(s.to_string())),
        Some(other) => Err(CliError::usage(format!("--init must be trivial or planted, got `{other}`"))),
    }
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Check(_) => CommandKind::Check,
            Command::Popdyn(_) => CommandKind::Popdyn,
            Command::Bethe(_) => CommandKind::Bethe,
            Command::MutualInfo(_) => CommandKind::MutualInfo,
            Command::Threshold(_) => CommandKind::Threshold,
            Command::Generate(_) => CommandKind::Generate,
            Command::Exact(_) => CommandKind::Exact,
            Command::Bp(_) => CommandKind::Bp,
            Command::Nishimori(_) => CommandKind::Nishimori,
            Command::Experiment(_) => CommandKind::Experiment,
        }
    }

    fn params_patch(&self) -> CliResult<Map<String, Value>> {
        let mut p = Patch::default();
        match self {
            Command::Check(a) => {
                p.model(&a.model)?;
                if let Some(c) = &a.conditions {
                    let names: Vec<String> = c.iter().map(|s| s.trim().to_uppercase()).collect();
                    p.put("conditions", &Some(names));
                }
                p.put("bal.grid_resolution", &a.grid);
                p.put("bal.random_trials", &a.trials);
                p.put("pos.l_max", &a.l_max);
                p.put("pos.outer_samples", &a.outer_samples);
                p.put("pos.family_size", &a.family_size);
            }
            Command::Popdyn(a) => {
                p.model(&a.model)?;
                p.put("d", &a.d);
                p.put("init", &init_kind(&a.init)?);
                a.fp.patch(&mut p, "fixed_point");
                p.put("trace_csv", &a.trace_csv);
                p.put("population_out", &a.population_out);
            }
            Command::Bethe(a) => {
                p.model(&a.model)?;
                p.put("d", &a.d);
                p.put("population", &a.population);
                p.put("init", &init_kind(&a.init)?);
                a.fp.patch(&mut p, "fixed_point");
                a.samples.patch(&mut p, "bethe");
            }
            Command::MutualInfo(a) => {
                p.model(&a.model)?;
                p.put("d", &a.d);
                a.fp.patch(&mut p, "fixed_point");
                a.samples.patch(&mut p, "bethe");
            }
            Command::Threshold(a) => {
                p.put("target", &a.target);
                p.model(&a.model)?;
                p.put("range", &a.range);
                p.put("d", &a.d);
                p.put("search.scan_steps", &a.steps);
                p.put("search.bisect_iters", &a.bisect);
                a.fp.patch(&mut p, "search.gap.popdyn");
                a.samples.patch(&mut p, "search.gap.bethe");
                p.put("trace_csv", &a.trace_csv);
            }
            Command::Generate(a) => {
                p.model(&a.model)?;
                p.put("n", &a.n);
                p.put("m", &a.m);
                p.put("d", &a.d);
                p.put("kind", &a.kind);
                p.put("truth", &a.truth);
                p.put("pin_t", &a.pin_t);
            }
            Command::Exact(a) => a.patch(&mut p)?,
            Command::Bp(a) => {
                a.instance.patch(&mut p)?;
                p.put("bp.max_iters", &a.max_iters);
                p.put("bp.damping", &a.damping);
                p.put("bp.tol", &a.tol);
            }
            Command::Nishimori(a) => {
                p.model(&a.model)?;
                p.put("n", &a.n);
                p.put("m", &a.m);
            }
            Command::Experiment(a) => {
                p.put("recipe", &a.recipe);
                p.put("scale", &a.scale);
                p.put("bundle", &a.bundle);
            }
        }
        Ok(p.0)
    }
}

impl InstanceArgs {
    fn patch(&self, p: &mut Patch) -> CliResult<()> {
        p.model(&self.model)?;
        p.put("instance", &self.instance);
        p.put("marginals_csv", &self.marginals_csv);
        Ok(())
    }
}

/// Resolves the configuration from the parsed arguments.
pub fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let file = cli.config.as_deref().map(read_json).transpose()?;
    let mut patch = Map::new();
    if let Some(cmd) = &cli.command {
        let kind = cmd.kind();
        if let Some(existing) = file.as_ref().and_then(|f| f.get("command")) {
            if existing != &json!(kind) {
                return Err(CliError::usage(format!(
                    "config file is for `{}` but the command line asks for `{}`",
                    existing.as_str().unwrap_or("?"),
                    config::command_name(kind)
                )));
            }
        }
        patch.insert("command".into(), json!(kind));
        patch.insert("params".into(), Value::Object(cmd.params_patch()?));
    } else if file.is_none() {
        return Err(CliError::usage("no command given (pass a subcommand or --config)"));
    }
    if let Some(seed) = cli.seed {
        patch.insert("seed".into(), json!(seed));
    }
    if let Some(out) = &cli.output {
        patch.insert("output".into(), json!(out));
    }
    RunConfig::resolve(file, Value::Object(patch))
}

/// Runs a resolved configuration and writes its record; returns the exit code.
pub fn run(cfg: &RunConfig) -> CliResult<i32> {
    let outcome = commands::execute(cfg)?;
    let record = json!({ "version": VERSION, "config": outcome.config, "result": outcome.result });
    let mut text = serde_json::to_string_pretty(&record).expect("records serialize");
    text.push('\n');
    match &cfg.output {
        Some(path) => commands::write_text(path, &text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(if outcome.success { 0 } else { 1 })
}

fn run_with_threads(cli: &Cli) -> CliResult<i32> {
    let cfg = resolve(cli)?;
    match cli.threads {
        Some(0) => Err(CliError::usage("--threads must be >= 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
            pool.install(|| run(&cfg))
        }
        None => run(&cfg),
    }
}

/// Parses arguments, runs, reports errors as JSON on stderr and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", CliError::usage(e.to_string().trim_end()).to_json());
            return 2;
        }
    };
    match run_with_threads(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
