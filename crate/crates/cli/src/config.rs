//! Experiment configuration files.
//!
//! Configs are TOML with keys mirroring the simulator and policy fields.
//! Every key except `master_seed` is optional; missing keys take
//! scenario-specific defaults, and the fully resolved config is echoed next
//! to the results so each run describes itself.

use std::fmt;
use std::path::{Path, PathBuf};

use gainsched_core::{
    max_stepsize, random_task, GainMode, PolicyConfig, PolicyKind, RngStream, SimConfig, TaskSpec,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File name of the resolved-config echo.
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Tradeoff,
    BiasHist,
    Compare,
    Bounds,
    Simulate,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Tradeoff => "tradeoff",
            Scenario::BiasHist => "bias-hist",
            Scenario::Compare => "compare",
            Scenario::Bounds => "bounds",
            Scenario::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Rows of `E xx^T`.
    pub second_moment: Vec<Vec<f64>>,
    pub true_weights: Vec<f64>,
    pub noise_variance: f64,
    pub initial_weights: Vec<f64>,
    pub stepsize: f64,
}

impl TaskConfig {
    pub fn from_task(task: &TaskSpec, stepsize: f64) -> Self {
        let h = task.second_moment();
        Self {
            second_moment: h.row_iter().map(|r| r.iter().copied().collect()).collect(),
            true_weights: task.true_weights().iter().copied().collect(),
            noise_variance: task.noise_variance(),
            initial_weights: vec![0.0; task.dim()],
            stepsize,
        }
    }

    pub fn to_task(&self) -> gainsched_core::Result<TaskSpec> {
        let n = self.second_moment.len();
        let cols = self.second_moment.first().map_or(0, Vec::len);
        if self.second_moment.iter().any(|r| r.len() != cols) {
            return Err(gainsched_core::Error::DimensionMismatch {
                what: "second moment row",
                expected: cols,
                found: self.second_moment.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(0),
            });
        }
        let h = DMatrix::from_row_iterator(n, cols, self.second_moment.iter().flatten().copied());
        TaskSpec::new(DVector::from_row_slice(&self.true_weights), h, self.noise_variance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub stepsize: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Threshold values (tradeoff, bounds).
    pub lambdas: Vec<f64>,
    /// `(stepsize, batch_size)` pairs (tradeoff).
    pub settings: Vec<Setting>,
    /// Stepsizes (compare).
    pub stepsizes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub bins: usize,
    /// Defaults to the range of the pooled data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub runs: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub stepsize: f64,
    pub allow_unstable: bool,
    pub exact_gradient: bool,
    pub shared_task_stream: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub policy: PolicyConfig,
    pub sweep: SweepConfig,
    pub histogram: HistogramConfig,
    pub tasks: Vec<TaskConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    second_moment: Vec<Vec<f64>>,
    true_weights: Vec<f64>,
    noise_variance: Option<f64>,
    initial_weights: Option<Vec<f64>>,
    stepsize: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    lambdas: Option<Vec<f64>>,
    settings: Option<Vec<Setting>>,
    stepsizes: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHistogram {
    bins: Option<usize>,
    range: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    master_seed: Option<u64>,
    runs: Option<usize>,
    horizon: Option<usize>,
    batch_size: Option<usize>,
    stepsize: Option<f64>,
    allow_unstable: Option<bool>,
    exact_gradient: Option<bool>,
    shared_task_stream: Option<bool>,
    output_dir: Option<PathBuf>,
    policy: Option<PolicyConfig>,
    sweep: Option<RawSweep>,
    histogram: Option<RawHistogram>,
    tasks: Option<Vec<RawTask>>,
}

struct Defaults {
    runs: usize,
    horizon: usize,
    batch_size: usize,
    stepsize: f64,
    policy: PolicyConfig,
    lambdas: Option<Vec<f64>>,
    settings: Option<Vec<Setting>>,
    stepsizes: Option<Vec<f64>>,
    tasks: Vec<TaskSpec>,
}

/// Seed of the generator behind the default bias-histogram tasks.
const BIAS_TASK_SEED: u64 = 2020;

fn setup_a() -> TaskSpec {
    TaskSpec::setup_a(TaskSpec::DEFAULT_NOISE_VARIANCE).expect("valid task")
}

fn defaults(scenario: Scenario) -> Defaults {
    match scenario {
        Scenario::Tradeoff => Defaults {
            runs: 1000,
            horizon: 20,
            batch_size: 20,
            stepsize: 0.1,
            policy: PolicyConfig::threshold(0.0, GainMode::Estimated),
            lambdas: Some(vec![0.0, 0.2, 0.5, 1.0, 2.0, 5.0, 20.0]),
            settings: Some(vec![
                Setting { stepsize: 0.1, batch_size: 20 },
                Setting { stepsize: 0.15, batch_size: 2 },
            ]),
            stepsizes: None,
            tasks: vec![setup_a()],
        },
        Scenario::BiasHist => {
            let mut rng = RngStream::new(BIAS_TASK_SEED, 0);
            let tasks = (0..2)
                .map(|_| random_task(2, TaskSpec::DEFAULT_NOISE_VARIANCE, &mut rng).expect("valid task"))
                .collect();
            Defaults {
                runs: 5000,
                horizon: 1,
                batch_size: 5,
                stepsize: 0.1,
                policy: PolicyConfig::greedy(1, GainMode::Estimated),
                lambdas: None,
                settings: None,
                stepsizes: None,
                tasks,
            }
        }
        Scenario::Compare => Defaults {
            runs: 2000,
            horizon: 20,
            batch_size: 5,
            stepsize: 0.1,
            policy: PolicyConfig::greedy(1, GainMode::Estimated),
            lambdas: None,
            settings: None,
            stepsizes: Some(vec![0.1, 0.2]),
            tasks: vec![setup_a(), setup_a()],
        },
        Scenario::Bounds => Defaults {
            runs: 2000,
            horizon: 200,
            batch_size: 20,
            stepsize: 0.1,
            policy: PolicyConfig::threshold(1.0, GainMode::Oracle),
            lambdas: Some(vec![1.0, 2.0]),
            settings: None,
            stepsizes: None,
            tasks: vec![setup_a()],
        },
        Scenario::Simulate => Defaults {
            runs: 1000,
            horizon: 20,
            batch_size: 20,
            stepsize: 0.1,
            policy: PolicyConfig::threshold(1.0, GainMode::Estimated),
            lambdas: None,
            settings: None,
            stepsizes: None,
            tasks: vec![setup_a()],
        },
    }
}

impl ExperimentConfig {
    /// Scenario defaults with the given seed.
    pub fn default_for(scenario: Scenario, master_seed: u64) -> Result<Self, ConfigError> {
        resolve(RawConfig::default(), Some(scenario), Some(master_seed))
    }

    /// Parses TOML text. `scenario` and `seed` (when given) take precedence
    /// over the file.
    pub fn from_toml_str(
        text: &str,
        scenario: Option<Scenario>,
        seed: Option<u64>,
    ) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(path, e.into_inner().message().trim_end())
        })?;
        resolve(raw, scenario, seed)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("resolved configs always serialize")
    }

    pub fn task_specs(&self) -> Vec<TaskSpec> {
        self.tasks
            .iter()
            .map(|t| t.to_task().expect("validated at parse time"))
            .collect()
    }

    /// Simulator config with every task's stepsize and the batch size
    /// overridden.
    pub fn sim_config_with(&self, policy: PolicyConfig, stepsize: Option<f64>, batch_size: usize) -> SimConfig {
        let tasks = self.task_specs();
        SimConfig {
            initial_weights: self
                .tasks
                .iter()
                .map(|t| DVector::from_row_slice(&t.initial_weights))
                .collect(),
            stepsizes: self.tasks.iter().map(|t| stepsize.unwrap_or(t.stepsize)).collect(),
            tasks,
            batch_size,
            horizon: self.horizon,
            policy,
            master_seed: self.master_seed,
            allow_unstable: self.allow_unstable,
            exact_gradient: self.exact_gradient,
            shared_task_stream: self.shared_task_stream,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        self.sim_config_with(self.policy, None, self.batch_size)
    }
}

/// Reads and resolves a config file; see [`ExperimentConfig::from_toml_str`].
pub fn parse_config(
    path: &Path,
    scenario: Option<Scenario>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text, scenario, seed)
}

fn resolve(
    raw: RawConfig,
    scenario_override: Option<Scenario>,
    seed_override: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let scenario = match (scenario_override, raw.scenario) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid("scenario", format!("config is for `{b}` but `{a}` was requested")))
        }
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(invalid("scenario", "missing; set it in the config or use a subcommand")),
    };
    let master_seed = seed_override
        .or(raw.master_seed)
        .ok_or_else(|| invalid("master_seed", "missing (required; or pass --seed)"))?;
    let d = defaults(scenario);

    let stepsize = raw.stepsize.unwrap_or(d.stepsize);
    let batch_size = raw.batch_size.unwrap_or(d.batch_size);
    let policy = raw.policy.unwrap_or(d.policy);

    let tasks = match raw.tasks {
        Some(tasks) => tasks
            .into_iter()
            .map(|t| {
                let dim = t.true_weights.len();
                TaskConfig {
                    second_moment: t.second_moment,
                    true_weights: t.true_weights,
                    noise_variance: t.noise_variance.unwrap_or(TaskSpec::DEFAULT_NOISE_VARIANCE),
                    initial_weights: t.initial_weights.unwrap_or_else(|| vec![0.0; dim]),
                    stepsize: t.stepsize.unwrap_or(stepsize),
                }
            })
            .collect(),
        None => d.tasks.iter().map(|t| TaskConfig::from_task(t, stepsize)).collect(),
    };

    let sweep = raw.sweep.unwrap_or_default();
    let sweep = SweepConfig {
        lambdas: sweep.lambdas.or(d.lambdas).unwrap_or_else(|| vec![policy.lambda]),
        settings: sweep
            .settings
            .or(d.settings)
            .unwrap_or_else(|| vec![Setting { stepsize, batch_size }]),
        stepsizes: sweep.stepsizes.or(d.stepsizes).unwrap_or_else(|| vec![stepsize]),
    };
    let histogram = raw.histogram.unwrap_or_default();
    let histogram = HistogramConfig {
        bins: histogram.bins.unwrap_or(40),
        range: histogram.range,
    };

    let config = ExperimentConfig {
        scenario,
        master_seed,
        runs: raw.runs.unwrap_or(d.runs),
        horizon: raw.horizon.unwrap_or(d.horizon),
        batch_size,
        stepsize,
        allow_unstable: raw.allow_unstable.unwrap_or(false),
        exact_gradient: raw.exact_gradient.unwrap_or(false),
        shared_task_stream: raw.shared_task_stream.unwrap_or(false),
        output_dir: raw.output_dir,
        policy,
        sweep,
        histogram,
        tasks,
    };
    validate(&config)?;
    Ok(config)
}

fn check_stepsize(path: String, stepsize: f64, task: &TaskSpec, allow_unstable: bool) -> Result<(), ConfigError> {
    if !(stepsize.is_finite() && stepsize > 0.0) {
        return Err(invalid(path, format!("stepsize must be finite and positive, got {stepsize}")));
    }
    let limit = max_stepsize(task);
    if !allow_unstable && stepsize >= limit {
        return Err(invalid(
            path,
            format!(
                "stepsize {stepsize} is unstable: max_stepsize is {limit} (2/lambda_max); \
                 set allow_unstable = true to run anyway"
            ),
        ));
    }
    Ok(())
}

fn validate(c: &ExperimentConfig) -> Result<(), ConfigError> {
    // TOML integers are signed 64-bit, so larger seeds could not be echoed.
    if c.master_seed > i64::MAX as u64 {
        return Err(invalid("master_seed", format!("must be at most {}", i64::MAX)));
    }
    for (key, value) in [("runs", c.runs), ("horizon", c.horizon), ("batch_size", c.batch_size)] {
        if value == 0 {
            return Err(invalid(key, "must be at least 1"));
        }
    }
    if c.histogram.bins < 2 {
        return Err(invalid("histogram.bins", "must be at least 2"));
    }
    if let Some([lo, hi]) = c.histogram.range {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("histogram.range", "must be [lo, hi] with lo < hi"));
        }
    }
    if c.tasks.is_empty() {
        return Err(invalid("tasks", "at least one task is required"));
    }

    let mut specs = Vec::with_capacity(c.tasks.len());
    for (j, t) in c.tasks.iter().enumerate() {
        let spec = t.to_task().map_err(|e| invalid(format!("tasks[{j}]"), e))?;
        if t.initial_weights.len() != spec.dim() {
            return Err(invalid(
                format!("tasks[{j}].initial_weights"),
                format!("expected {} entries, found {}", spec.dim(), t.initial_weights.len()),
            ));
        }
        check_stepsize(format!("tasks[{j}].stepsize"), t.stepsize, &spec, c.allow_unstable)?;
        specs.push(spec);
    }
    let m = specs.len();
    c.policy.validate(m).map_err(|e| invalid("policy", e))?;

    let sweeps_lambda = matches!(c.scenario, Scenario::Tradeoff | Scenario::Bounds);
    if sweeps_lambda && c.sweep.lambdas.is_empty() {
        return Err(invalid("sweep.lambdas", "must not be empty"));
    }
    for (i, &l) in c.sweep.lambdas.iter().enumerate() {
        if !(l.is_finite() && l >= 0.0) {
            return Err(invalid(format!("sweep.lambdas[{i}]"), format!("must be finite and >= 0, got {l}")));
        }
        if c.scenario == Scenario::Bounds && l == 0.0 {
            return Err(invalid(
                format!("sweep.lambdas[{i}]"),
                "the communication budget needs lambda > 0",
            ));
        }
    }
    if c.scenario == Scenario::Tradeoff {
        if c.sweep.settings.is_empty() {
            return Err(invalid("sweep.settings", "must not be empty"));
        }
        for (i, s) in c.sweep.settings.iter().enumerate() {
            if s.batch_size == 0 {
                return Err(invalid(format!("sweep.settings[{i}].batch_size"), "must be at least 1"));
            }
            for spec in &specs {
                check_stepsize(format!("sweep.settings[{i}].stepsize"), s.stepsize, spec, c.allow_unstable)?;
            }
        }
    }
    if c.scenario == Scenario::Compare {
        if c.sweep.stepsizes.is_empty() {
            return Err(invalid("sweep.stepsizes", "must not be empty"));
        }
        for (i, &s) in c.sweep.stepsizes.iter().enumerate() {
            for spec in &specs {
                check_stepsize(format!("sweep.stepsizes[{i}]"), s, spec, c.allow_unstable)?;
            }
        }
    }

    match c.scenario {
        Scenario::Tradeoff | Scenario::Bounds if m != 1 => {
            Err(invalid("tasks", format!("the {} scenario takes exactly one task, found {m}", c.scenario)))
        }
        Scenario::BiasHist if m != 2 => {
            Err(invalid("tasks", format!("the bias-hist scenario takes exactly two tasks, found {m}")))
        }
        Scenario::Compare if m < 2 => Err(invalid("tasks", "the compare scenario needs at least two tasks")),
        Scenario::Tradeoff if c.policy.kind != PolicyKind::Threshold => {
            Err(invalid("policy.kind", "the tradeoff scenario sweeps the threshold policy"))
        }
        Scenario::Bounds if c.policy.kind != PolicyKind::Threshold => {
            Err(invalid("policy.kind", "bounds hold for the threshold policy only"))
        }
        _ => Ok(()),
    }
}
