//! Versioned JSON experiment configuration with dotted-path overrides.

use std::path::Path;

use magnon_core::analysis::ProtocolSource;
use magnon_core::dynamics::StepScheme;
use magnon_core::optimize::{default_lr_grid, BatchSchedule, OptimizerConfig, HOLDOUT_SEED_OFFSET};
use magnon_core::protocols::Ansatz;
use magnon_core::{ChainSpec, TransportTask};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CleanOptimize,
    DisorderSingle,
    DisorderBatch,
    SpeedLimit,
    Localization,
    Evaluate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Names the run directory; letters, digits, `-`, `_` and `.` only.
    pub name: String,
    pub experiment: ExperimentKind,
    #[serde(default = "ChainSpec::standard")]
    pub chain: ChainSpec,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub ansatz: Option<Ansatz>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Plain-GD learning-rate scan run before the main optimization; its best μ
    /// replaces `optimizer.learning_rate`.
    #[serde(default)]
    pub lr_scan: Option<LrScanConfig>,
    #[serde(default)]
    pub disorder: DisorderConfig,
    #[serde(default)]
    pub schedule: BatchSchedule,
    #[serde(default)]
    pub holdout: HoldoutConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Protocol to score in `evaluate` runs.
    #[serde(default)]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default)]
    pub scheme: StepScheme,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Sites between start and target.
    pub distance: f64,
    /// τ in units of 1/J.
    pub duration: f64,
    pub bin_width: f64,
    /// Defaults to √(2J/ω₀).
    pub packet_width: Option<f64>,
    /// Defaults to the centered window.
    pub x_start: Option<f64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            distance: 50.0,
            duration: 100.0,
            bin_width: 0.1,
            packet_width: None,
            x_start: None,
        }
    }
}

impl TaskConfig {
    pub fn resolve(&self, chain: &ChainSpec) -> CliResult<TransportTask> {
        let mut task = TransportTask::centered(chain, self.distance, self.duration)
            .map_err(|e| CliError::config(format!("task: {e}")))?;
        task.bin_width = self.bin_width;
        if let Some(w) = self.packet_width {
            task.packet_width = w;
        }
        if let Some(x) = self.x_start {
            task.x_start = x;
            task.x_end = x + self.distance;
        }
        task.validate(chain).map_err(|e| CliError::config(format!("task: {e}")))?;
        Ok(task)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrScanConfig {
    pub grid: Vec<f64>,
    /// GD updates per candidate.
    pub budget: usize,
}

impl Default for LrScanConfig {
    fn default() -> Self {
        LrScanConfig {
            grid: default_lr_grid(),
            budget: 20,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderConfig {
    /// Δ values; a batch run takes exactly one.
    pub magnitudes: Vec<f64>,
    /// Pattern seeds for per-pattern optimization.
    pub seeds: Vec<u64>,
    /// First seed of a sampled ensemble (training set or evaluation set).
    pub base_seed: u64,
    /// Ensemble size for `evaluate`.
    pub n_patterns: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoldoutConfig {
    pub n_patterns: usize,
    /// Defaults to `disorder.base_seed + 2³²`.
    pub seed: Option<u64>,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig {
            n_patterns: 100,
            seed: None,
        }
    }
}

impl HoldoutConfig {
    pub fn resolved_seed(&self, base_seed: u64) -> u64 {
        self.seed.unwrap_or(base_seed.wrapping_add(HOLDOUT_SEED_OFFSET))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub speed_limit: SpeedLimitConfig,
    pub localization: LocalizationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedLimitConfig {
    pub source: ProtocolSource,
    pub distances: Vec<f64>,
    pub durations: Vec<f64>,
}

impl Default for SpeedLimitConfig {
    fn default() -> Self {
        SpeedLimitConfig {
            source: ProtocolSource::StaReference {
                variant: Default::default(),
            },
            distances: vec![50.0],
            durations: (2..=10).map(|k| 10.0 * k as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationConfig {
    pub magnitudes: Vec<f64>,
    pub n_realizations: usize,
    pub base_seed: u64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            magnitudes: vec![0.05, 0.1, 0.2, 0.35, 0.5],
            n_realizations: 200,
            base_seed: 0,
        }
    }
}

/// A protocol given directly rather than optimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSpec {
    Linear,
    StaReference {
        #[serde(default)]
        variant: magnon_core::protocols::StaVariant,
    },
    Ansatz {
        ansatz: Ansatz,
        params: Vec<f64>,
    },
    /// X₀(t_k) for k = 0..=M.
    Samples {
        samples: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { plots: true }
    }
}

/// Reads `path`, applies `overrides` (`a.b.c=value`) and validates.
pub fn load(path: &Path, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Sets one leaf. The value is parsed as JSON and falls back to a plain string,
/// so `name=run1` and `task.duration=60` both work. Missing objects are created;
/// numeric segments index into arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{assignment}` is not of the form key.path=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::config(format!("override path `{path}` has an empty segment")));
    }
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), new);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| CliError::config(format!("override `{path}`: `{key}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::config(format!("override `{path}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::config(format!(
                    "override `{path}`: `{}` is not an object",
                    keys[..i].join(".")
                )))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

fn nonnegative(values: &[f64], what: &str) -> CliResult<()> {
    match values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(CliError::config(format!("{what} must be finite and >= 0, got {v}"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty()
            || self.name.starts_with('.')
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(CliError::config(format!("name `{}` is not a valid directory name", self.name)));
        }
        self.chain.validate().map_err(|e| CliError::config(format!("chain: {e}")))?;
        let task = self.task.resolve(&self.chain)?;
        self.optimizer
            .validate()
            .map_err(|e| CliError::config(format!("optimizer: {e}")))?;
        if let Some(scan) = &self.lr_scan {
            if scan.grid.is_empty() || scan.grid.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return Err(CliError::config("lr_scan.grid must hold positive learning rates"));
            }
            if scan.budget == 0 {
                return Err(CliError::config("lr_scan.budget must be >= 1"));
            }
        }
        nonnegative(&self.disorder.magnitudes, "disorder.magnitudes")?;
        match self.experiment {
            ExperimentKind::CleanOptimize => {
                self.check_ansatz(&task)?;
            }
            ExperimentKind::DisorderSingle => {
                self.check_ansatz(&task)?;
                if self.disorder.magnitudes.is_empty() || self.disorder.seeds.is_empty() {
                    return Err(CliError::config(
                        "disorder-single needs disorder.magnitudes and disorder.seeds",
                    ));
                }
            }
            ExperimentKind::DisorderBatch => {
                self.check_ansatz(&task)?;
                if self.disorder.magnitudes.len() != 1 {
                    return Err(CliError::config("disorder-batch needs exactly one disorder magnitude"));
                }
                self.schedule
                    .validate()
                    .map_err(|e| CliError::config(format!("schedule: {e}")))?;
                if self.holdout.n_patterns == 0 {
                    return Err(CliError::config("holdout.n_patterns must be >= 1"));
                }
                let train_end = self.disorder.base_seed as u128
                    + 2 * self.schedule.n_train_patterns as u128;
                let hold = self.holdout.resolved_seed(self.disorder.base_seed) as u128;
                if hold < train_end && (self.disorder.base_seed as u128) < hold + self.holdout.n_patterns as u128 {
                    return Err(CliError::config("holdout seeds overlap the training seeds"));
                }
            }
            ExperimentKind::SpeedLimit => {
                let s = &self.analysis.speed_limit;
                if s.distances.is_empty() || s.durations.is_empty() {
                    return Err(CliError::config("speed_limit needs distances and durations"));
                }
                for &d in &s.distances {
                    for &t in &s.durations {
                        TransportTask::centered(&self.chain, d, t)
                            .map_err(|e| CliError::config(format!("speed_limit (d = {d}, τ = {t}): {e}")))?;
                    }
                }
                if let ProtocolSource::FourierOptimized { cutoff, optimizer } = &s.source {
                    if *cutoff == 0 {
                        return Err(CliError::config("speed_limit.source.cutoff must be >= 1"));
                    }
                    optimizer
                        .validate()
                        .map_err(|e| CliError::config(format!("speed_limit.source.optimizer: {e}")))?;
                }
            }
            ExperimentKind::Localization => {
                let l = &self.analysis.localization;
                if l.magnitudes.is_empty() || l.n_realizations == 0 {
                    return Err(CliError::config("localization needs magnitudes and n_realizations >= 1"));
                }
                nonnegative(&l.magnitudes, "localization.magnitudes")?;
            }
            ExperimentKind::Evaluate => {
                let spec = self
                    .protocol
                    .as_ref()
                    .ok_or_else(|| CliError::config("evaluate needs a `protocol`"))?;
                spec.build(&self.chain, &task)?;
                if !self.disorder.magnitudes.is_empty() && self.disorder.n_patterns == 0 {
                    return Err(CliError::config("disorder.n_patterns must be >= 1 to evaluate under disorder"));
                }
            }
        }
        Ok(())
    }

    pub fn task(&self) -> CliResult<TransportTask> {
        self.task.resolve(&self.chain)
    }

    pub fn ansatz(&self) -> CliResult<&Ansatz> {
        self.ansatz
            .as_ref()
            .ok_or_else(|| CliError::config(format!("{:?} needs an `ansatz`", self.experiment)))
    }

    fn check_ansatz(&self, task: &TransportTask) -> CliResult<()> {
        let ansatz = self.ansatz()?;
        if let Ansatz::Fourier { cutoff: 0 } = ansatz {
            return Err(CliError::config("ansatz.cutoff must be >= 1"));
        }
        let init = ansatz.initial_params(&self.chain, task);
        ansatz
            .lower(&self.chain, task, &init)
            .map_err(|e| CliError::config(format!("ansatz: {e}")))?;
        Ok(())
    }
}

impl ProtocolSpec {
    pub fn build(
        &self,
        chain: &ChainSpec,
        task: &TransportTask,
    ) -> CliResult<magnon_core::ControlProtocol> {
        use magnon_core::protocols::{linear_protocol, sta_reference};
        let protocol = match self {
            ProtocolSpec::Linear => linear_protocol(task),
            ProtocolSpec::StaReference { variant } => sta_reference(task, chain, *variant),
            ProtocolSpec::Ansatz { ansatz, params } => ansatz
                .lower(chain, task, params)
                .map_err(|e| CliError::config(format!("protocol: {e}")))?
                .0,
            ProtocolSpec::Samples { samples } => magnon_core::ControlProtocol {
                samples: samples.clone(),
                duration: task.duration,
                bin_width: task.step_width(),
            },
        };
        protocol
            .check_task(task)
            .map_err(|e| CliError::config(format!("protocol: {e}")))?;
        Ok(protocol)
    }
}
