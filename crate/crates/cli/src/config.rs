//! Run configuration: a JSON file, a JSON patch built from flags, and the
//! per-command parameter records both resolve into.

use std::path::Path;

use cavity_core::bethe::BetheOptions;
use cavity_core::conditions::{BalOptions, Condition, PosOptions};
use cavity_core::graphlab::BpOptions;
use cavity_core::popdyn::{FixedPointOptions, InitKind};
use cavity_core::thresholds::SearchOptions;
use cavity_core::ModelSpec;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Check,
    Popdyn,
    Bethe,
    MutualInfo,
    Threshold,
    Generate,
    Exact,
    Bp,
    Nishimori,
    Experiment,
}

/// The resolved run configuration. `params` holds the command's own record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

fn default_init() -> InitKind {
    InitKind::Trivial
}

fn all_conditions() -> Vec<Condition> {
    vec![Condition::Sym, Condition::Bal, Condition::Pos]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    pub model: ModelSpec,
    #[serde(default = "all_conditions")]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub bal: BalOptions,
    #[serde(default)]
    pub pos: PosOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopdynParams {
    pub model: ModelSpec,
    pub d: f64,
    #[serde(default = "default_init")]
    pub init: InitKind,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetheParams {
    pub model: ModelSpec,
    pub d: f64,
    /// Population file; when absent the population is the fixed point reached from `init`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<String>,
    #[serde(default = "default_init")]
    pub init: InitKind,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
    #[serde(default)]
    pub bethe: BetheOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualInfoParams {
    pub model: ModelSpec,
    pub d: f64,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
    #[serde(default)]
    pub bethe: BetheOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[value(name = "d_inf")]
    DInf,
    #[value(name = "beta_cond")]
    BetaCond,
    #[value(name = "d_cond_coloring")]
    DCondColoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdParams {
    pub target: Target,
    pub model: ModelSpec,
    /// Search interval; d_cond_coloring defaults to [(2q−1)ln q − 3, (2q−1)ln q + 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Average degree for beta_cond.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default)]
    pub search: SearchOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    #[default]
    Null,
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateParams {
    pub model: ModelSpec,
    pub n: usize,
    #[serde(default)]
    pub kind: GraphKind,
    /// Exact number of constraints; otherwise Poisson(dn/k) with `d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Teacher truth; drawn uniformly when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<usize>>,
    /// Pinning with θ ~ U[0, pin_t]; teacher graphs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactParams {
    pub model: ModelSpec,
    pub instance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpParams {
    pub model: ModelSpec,
    pub instance: String,
    #[serde(default)]
    pub bp: BpOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NishimoriParams {
    pub model: ModelSpec,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    PottsRsCheck,
    SbmQ2Threshold,
    ColoringQ3Cond,
    LdgmInfoCurve,
    ConditionMatrix,
    OracleSuite,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::PottsRsCheck => "potts-rs-check",
            Recipe::SbmQ2Threshold => "sbm-q2-threshold",
            Recipe::ColoringQ3Cond => "coloring-q3-cond",
            Recipe::LdgmInfoCurve => "ldgm-info-curve",
            Recipe::ConditionMatrix => "condition-matrix",
            Recipe::OracleSuite => "oracle-suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// The sizes the acceptance tolerances are pinned to.
    #[default]
    Full,
    /// Small sizes for smoke runs; checks are not meaningful.
    Quick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub recipe: Recipe,
    #[serde(default)]
    pub scale: Scale,
    /// Bundle directory; defaults to `bundle-<recipe>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<String>,
}

/// Recursively merges `patch` into `base`; non-object values replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Sets a dotted path such as `fixed_point.n` in a JSON object.
pub fn set_path(root: &mut Map<String, Value>, path: &str, value: Value) {
    match path.split_once('.') {
        None => {
            root.insert(path.to_string(), value);
        }
        Some((head, rest)) => {
            let child = root.entry(head.to_string()).or_insert_with(empty_object);
            if !child.is_object() {
                *child = empty_object();
            }
            set_path(child.as_object_mut().expect("object"), rest, value);
        }
    }
}

pub fn read_json(path: &str) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{path}: invalid JSON: {e}")))
}

/// A `--model` argument: inline JSON when it starts with `{`, else a file path.
pub fn model_value(arg: &str) -> CliResult<Value> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| CliError::usage(format!("--model: invalid JSON: {e}")))
    } else if Path::new(arg).exists() {
        read_json(arg)
    } else {
        Err(CliError::usage(format!("--model: no such file `{arg}` and not inline JSON")))
    }
}

impl RunConfig {
    /// Builds the configuration from an optional file value and a flag patch.
    pub fn resolve(file: Option<Value>, patch: Value) -> CliResult<Self> {
        let mut value = file.unwrap_or_else(empty_object);
        if !value.is_object() {
            return Err(CliError::usage("config file must hold a JSON object"));
        }
        merge(&mut value, patch);
        if let Some(Value::String(path)) = value.pointer("/params/model").cloned() {
            let resolved = model_value(&path)?;
            value["params"]["model"] = resolved;
        }
        serde_json::from_value(value).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn params<T: DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| CliError::usage(format!("{} parameters: {e}", command_name(self.command))))
    }

    /// The same configuration with `params` replaced by its fully defaulted form.
    pub fn resolved_with<T: Serialize>(&self, params: &T) -> RunConfig {
        RunConfig { params: serde_json::to_value(params).expect("parameters serialize"), ..self.clone() }
    }
}

pub fn command_name(kind: CommandKind) -> &'static str {
    match kind {
        CommandKind::Check => "check",
        CommandKind::Popdyn => "popdyn",
        CommandKind::Bethe => "bethe",
        CommandKind::MutualInfo => "mutual-info",
        CommandKind::Threshold => "threshold",
        CommandKind::Generate => "generate",
        CommandKind::Exact => "exact",
        CommandKind::Bp => "bp",
        CommandKind::Nishimori => "nishimori",
        CommandKind::Experiment => "experiment",
    }
}
