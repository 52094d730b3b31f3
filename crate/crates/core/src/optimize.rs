//! Gradient-based drivers: plain gradient descent, ADAM, learning-rate scans and
//! the two disorder workflows (per-pattern and cyclic mini-batches).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ensemble_gradient, ensemble_infidelity, EnsembleInfidelity, StepScheme, TransferProblem};
use crate::model::{sample_disorder, ChainSpec, DisorderPattern, TransportTask};
use crate::protocols::{param_gradient, Ansatz, ControlProtocol};
use crate::{Error, Result};

/// Offset between training and held-out disorder seeds.
pub const HOLDOUT_SEED_OFFSET: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateScheme {
    Gd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub scheme: UpdateScheme,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_steps: usize,
    pub stop_infidelity: f64,
    /// μ_i = μ₀ γ^i; 1 disables decay.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            scheme: UpdateScheme::Adam,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_steps: 500,
            stop_infidelity: 1e-5,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// Gradient descent with at most 200 updates, stopping below 10⁻³.
    pub fn clean_gd(learning_rate: f64) -> Self {
        OptimizerConfig {
            scheme: UpdateScheme::Gd,
            learning_rate,
            max_steps: 200,
            stop_infidelity: 1e-3,
            ..Default::default()
        }
    }

    /// ADAM with at most 500 updates, stopping below 10⁻⁵.
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("adam_epsilon must be > 0"));
        }
        if self.max_steps < 1 {
            return Err(Error::invalid("max_steps must be >= 1"));
        }
        if !(self.stop_infidelity >= 0.0) {
            return Err(Error::invalid("stop_infidelity must be >= 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1]"));
        }
        Ok(())
    }

    fn learning_rate_at(&self, update: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(update as i32)
    }
}

/// params − μ·grad.
pub fn gd_step(params: &[f64], grad: &[f64], learning_rate: f64) -> Vec<f64> {
    params.iter().zip(grad).map(|(p, g)| p - learning_rate * g).collect()
}

/// First and second moment accumulators of ADAM.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }
}

/// One bias-corrected ADAM update; `step_index` starts at 1.
pub fn adam_step(
    params: &[f64],
    grad: &[f64],
    state: &AdamState,
    config: &OptimizerConfig,
    step_index: usize,
) -> (Vec<f64>, AdamState) {
    assert!(step_index >= 1, "ADAM step index starts at 1");
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let lr = config.learning_rate_at(step_index - 1);
    let c1 = 1.0 - b1.powi(step_index as i32);
    let c2 = 1.0 - b2.powi(step_index as i32);
    let mut next = AdamState::new(params.len());
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let m = b1 * state.first[i] + (1.0 - b1) * grad[i];
        let v = b2 * state.second[i] + (1.0 - b2) * grad[i] * grad[i];
        next.first[i] = m;
        next.second[i] = v;
        out.push(params[i] - lr * (m / c1) / ((v / c2).sqrt() + config.adam_epsilon));
    }
    (out, next)
}

/// Something with a value and a gradient in parameter space.
pub trait Objective {
    fn value_and_gradient(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value_and_gradient(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingReason {
    Threshold,
    MaxSteps,
}

/// Raw output of [`minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// history[i] is the objective after i updates.
    pub history: Vec<f64>,
    pub final_params: Vec<f64>,
    pub best_value: f64,
    pub best_params: Vec<f64>,
    pub steps: usize,
    pub stopping_reason: StoppingReason,
    pub gradient_norm: f64,
}

/// Iterates the configured update until the objective drops to
/// `stop_infidelity` or `max_steps` updates have been made.
pub fn minimize<O: Objective>(objective: &mut O, init: &[f64], config: &OptimizerConfig) -> Result<Trace> {
    config.validate()?;
    let mut params = init.to_vec();
    let mut adam = AdamState::new(params.len());
    let (mut value, mut grad) = objective.value_and_gradient(&params)?;
    let mut history = vec![value];
    let mut best_value = value;
    let mut best_params = params.clone();
    let mut steps = 0;
    while steps < config.max_steps && value > config.stop_infidelity {
        params = match config.scheme {
            UpdateScheme::Gd => gd_step(&params, &grad, config.learning_rate_at(steps)),
            UpdateScheme::Adam => {
                let (p, s) = adam_step(&params, &grad, &adam, config, steps + 1);
                adam = s;
                p
            }
        };
        steps += 1;
        (value, grad) = objective
            .value_and_gradient(&params)
            .map_err(|e| e.context(format!("optimizer step {steps}")))?;
        history.push(value);
        if value < best_value {
            best_value = value;
            best_params = params.clone();
        }
    }
    let stopping_reason = if value <= config.stop_infidelity {
        StoppingReason::Threshold
    } else {
        StoppingReason::MaxSteps
    };
    Ok(Trace {
        history,
        final_params: params,
        best_value,
        best_params,
        steps,
        stopping_reason,
        gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

/// Result of a learning-rate scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrScan {
    pub best: f64,
    /// (μ, final value) for every candidate; non-finite runs report +∞.
    pub finals: Vec<(f64, f64)>,
}

/// Log-spaced grid 10⁻⁴ … 10¹, one point per decade.
pub fn default_lr_grid() -> Vec<f64> {
    (-4..=1).map(|e| 10f64.powi(e)).collect()
}

/// Runs `budget` gradient-descent updates per candidate μ and keeps the one with
/// the lowest final value; ties go to the smaller μ.
pub fn lr_scan<O: Objective>(
    objective: &mut O,
    init: &[f64],
    grid: &[f64],
    budget: usize,
    stop_infidelity: f64,
) -> Result<LrScan> {
    if grid.is_empty() {
        return Err(Error::invalid("learning-rate grid is empty"));
    }
    let mut finals = Vec::with_capacity(grid.len());
    for &mu in grid {
        let config = OptimizerConfig {
            scheme: UpdateScheme::Gd,
            learning_rate: mu,
            max_steps: budget.max(1),
            stop_infidelity,
            ..Default::default()
        };
        let value = match minimize(objective, init, &config) {
            Ok(trace) => *trace.history.last().expect("history is never empty"),
            Err(Error::Numerical(_)) | Err(Error::InvalidInput(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        finals.push((mu, if value.is_finite() { value } else { f64::INFINITY }));
    }
    let best = finals
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("grid is not empty")
        .0;
    Ok(LrScan { best, finals })
}

/// Serializable summary of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub ansatz: Ansatz,
    pub infidelity_history: Vec<f64>,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub final_infidelity: f64,
    pub best_params: Vec<f64>,
    pub best_infidelity: f64,
    pub final_protocol: ControlProtocol,
    pub stopping_reason: StoppingReason,
    pub steps: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    pub gradient_norm: f64,
    /// Not part of the deterministic output.
    #[serde(default)]
    pub wall_time_seconds: f64,
}

impl OptimizationReport {
    /// Copy with the timing field cleared, for bitwise comparisons.
    pub fn without_timing(&self) -> Self {
        OptimizationReport {
            wall_time_seconds: 0.0,
            ..self.clone()
        }
    }
}

struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.0.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Infidelity of one transfer problem as a function of ansatz parameters.
pub struct AnsatzObjective<'a> {
    pub problem: &'a TransferProblem,
    pub ansatz: &'a Ansatz,
}

impl Objective for AnsatzObjective<'_> {
    fn value_and_gradient(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (protocol, jac) = self.ansatz.lower(self.problem.chain(), self.problem.task(), params)?;
        let (value, bins) = self.problem.infidelity_gradient(&protocol)?;
        Ok((value, param_gradient(&bins.values, &jac)?))
    }
}

/// Optimizes `ansatz` on a prepared transfer problem (clean or with a frozen pattern).
pub fn optimize_problem(
    problem: &TransferProblem,
    ansatz: &Ansatz,
    init: Option<&[f64]>,
    config: &OptimizerConfig,
) -> Result<OptimizationReport> {
    let clock = Stopwatch::start();
    let initial_params = match init {
        Some(p) => p.to_vec(),
        None => ansatz.initial_params(problem.chain(), problem.task()),
    };
    let mut objective = AnsatzObjective { problem, ansatz };
    let trace = minimize(&mut objective, &initial_params, config)?;
    let (final_protocol, _) = ansatz.lower(problem.chain(), problem.task(), &trace.final_params)?;
    let mut seeds = vec![config.seed];
    if let Some(p) = problem.pattern() {
        seeds.push(p.seed);
    }
    Ok(OptimizationReport {
        ansatz: ansatz.clone(),
        final_infidelity: *trace.history.last().expect("history is never empty"),
        infidelity_history: trace.history,
        initial_params,
        final_params: trace.final_params,
        best_params: trace.best_params,
        best_infidelity: trace.best_value,
        final_protocol,
        stopping_reason: trace.stopping_reason,
        steps: trace.steps,
        learning_rate: config.learning_rate,
        seeds,
        gradient_norm: trace.gradient_norm,
        wall_time_seconds: clock.seconds(),
    })
}

pub fn optimize_clean(
    chain: &ChainSpec,
    task: &TransportTask,
    ansatz: &Ansatz,
    config: &OptimizerConfig,
) -> Result<OptimizationReport> {
    optimize_problem(&TransferProblem::new(chain, task, None)?, ansatz, None, config)
}

/// Same as [`optimize_clean`] with `pattern` added to the field in every evaluation.
pub fn optimize_fixed_disorder(
    chain: &ChainSpec,
    task: &TransportTask,
    ansatz: &Ansatz,
    pattern: &DisorderPattern,
    config: &OptimizerConfig,
) -> Result<OptimizationReport> {
    optimize_problem(&TransferProblem::new(chain, task, Some(pattern))?, ansatz, None, config)
}

/// ⟨𝓘⟩_s: mean final infidelity of separately optimized patterns.
pub fn mean_separately_optimized(reports: &[OptimizationReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::invalid("no optimization reports to average"));
    }
    Ok(reports.iter().map(|r| r.final_infidelity).sum::<f64>() / reports.len() as f64)
}

/// Cyclic mini-batch schedule over a fixed training set of disorder patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSchedule {
    pub n_train_patterns: usize,
    pub batch_size: usize,
    /// Full passes over the training set; fractions stop mid-cycle.
    pub episodes: f64,
    /// After this many episodes the training set is replaced once by fresh patterns.
    pub refresh_after_episodes: Option<f64>,
}

impl Default for BatchSchedule {
    fn default() -> Self {
        BatchSchedule {
            n_train_patterns: 200,
            batch_size: 10,
            episodes: 49.5,
            refresh_after_episodes: Some(24.5),
        }
    }
}

impl BatchSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_train_patterns == 0 {
            return Err(Error::invalid("batch size and training-set size must be positive"));
        }
        if self.n_train_patterns % self.batch_size != 0 {
            return Err(Error::invalid(format!(
                "{} training patterns do not split into batches of {}",
                self.n_train_patterns, self.batch_size
            )));
        }
        if !(self.episodes >= 0.0 && self.episodes.is_finite()) {
            return Err(Error::invalid("episodes must be a finite non-negative number"));
        }
        if let Some(r) = self.refresh_after_episodes {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid("refresh_after_episodes must be > 0"));
            }
        }
        Ok(())
    }

    pub fn n_batches(&self) -> usize {
        self.n_train_patterns / self.batch_size
    }

    /// floor(episodes · n_batches).
    pub fn total_updates(&self) -> usize {
        (self.episodes * self.n_batches() as f64 + 1e-9).floor() as usize
    }

    fn refresh_update(&self) -> Option<usize> {
        self.refresh_after_episodes
            .map(|r| (r * self.n_batches() as f64 + 1e-9).floor() as usize)
            .filter(|&u| u < self.total_updates())
    }
}

/// Seeds of training set `set` (0 before the refresh, 1 after).
pub fn training_seeds(base_seed: u64, schedule: &BatchSchedule, set: u64) -> Range<u64> {
    let n = schedule.n_train_patterns as u64;
    let start = base_seed.wrapping_add(set * n);
    start..start + n
}

fn sample_patterns(chain: &ChainSpec, magnitude: f64, seeds: Range<u64>) -> Result<Vec<DisorderPattern>> {
    seeds.map(|s| sample_disorder(chain, magnitude, s)).collect()
}

/// Batch gradient descent on the disorder-averaged infidelity.
///
/// Each update uses the mean gradient of one batch; batches are visited
/// cyclically and one full cycle is an episode. `stop_infidelity` is not used:
/// the schedule fixes the number of updates. The reported `final_infidelity`
/// is the mean over the training set in use at the end.
pub fn optimize_batch(
    chain: &ChainSpec,
    task: &TransportTask,
    ansatz: &Ansatz,
    magnitude: f64,
    base_seed: u64,
    schedule: &BatchSchedule,
    config: &OptimizerConfig,
    scheme: StepScheme,
) -> Result<OptimizationReport> {
    schedule.validate()?;
    config.validate()?;
    let clock = Stopwatch::start();
    let initial_params = ansatz.initial_params(chain, task);
    let mut params = initial_params.clone();
    let mut adam = AdamState::new(params.len());
    let mut set = 0u64;
    let mut patterns = sample_patterns(chain, magnitude, training_seeds(base_seed, schedule, set))?;
    let mut seeds: Vec<u64> = vec![config.seed];
    seeds.extend(training_seeds(base_seed, schedule, set));
    let refresh_at = schedule.refresh_update();
    let mut cycle_start = 0;
    let mut history = Vec::with_capacity(schedule.total_updates());
    let mut best_value = f64::INFINITY;
    let mut best_params = params.clone();
    let mut gradient_norm = 0.0;
    for update in 0..schedule.total_updates() {
        if Some(update) == refresh_at {
            set += 1;
            patterns = sample_patterns(chain, magnitude, training_seeds(base_seed, schedule, set))?;
            seeds.extend(training_seeds(base_seed, schedule, set));
            cycle_start = update;
        }
        let b = (update - cycle_start) % schedule.n_batches();
        let batch = &patterns[b * schedule.batch_size..(b + 1) * schedule.batch_size];
        let (protocol, jac) = ansatz.lower(chain, task, &params)?;
        let (ens, bins) = ensemble_gradient(chain, task, &protocol, batch, scheme)
            .map_err(|e| e.context(format!("batch update {}", update + 1)))?;
        let grad = param_gradient(&bins.values, &jac)?;
        gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        history.push(ens.mean);
        if ens.mean < best_value {
            best_value = ens.mean;
            best_params = params.clone();
        }
        params = match config.scheme {
            UpdateScheme::Gd => gd_step(&params, &grad, config.learning_rate_at(update)),
            UpdateScheme::Adam => {
                let (p, s) = adam_step(&params, &grad, &adam, config, update + 1);
                adam = s;
                p
            }
        };
    }
    let (final_protocol, _) = ansatz.lower(chain, task, &params)?;
    let final_infidelity = ensemble_infidelity(chain, task, &final_protocol, &patterns, scheme)?.mean;
    history.push(final_infidelity);
    if final_infidelity < best_value {
        best_value = final_infidelity;
        best_params = params.clone();
    }
    Ok(OptimizationReport {
        ansatz: ansatz.clone(),
        infidelity_history: history,
        initial_params,
        final_params: params,
        final_infidelity,
        best_params,
        best_infidelity: best_value,
        final_protocol,
        stopping_reason: StoppingReason::MaxSteps,
        steps: schedule.total_updates(),
        learning_rate: config.learning_rate,
        seeds,
        gradient_norm,
        wall_time_seconds: clock.seconds(),
    })
}

/// ⟨𝓘⟩ over `n_patterns` fresh patterns with seeds `seed..seed + n_patterns`.
///
/// When `training` seeds are given, overlapping ranges are rejected.
pub fn evaluate_holdout(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    n_patterns: usize,
    magnitude: f64,
    seed: u64,
    training: Option<Range<u64>>,
    scheme: StepScheme,
) -> Result<EnsembleInfidelity> {
    let holdout = seed..seed.wrapping_add(n_patterns as u64);
    if let Some(train) = training {
        if holdout.start < train.end && train.start < holdout.end {
            return Err(Error::invalid(format!(
                "held-out seeds {holdout:?} overlap training seeds {train:?}"
            )));
        }
    }
    let patterns = sample_patterns(chain, magnitude, holdout)?;
    ensemble_infidelity(chain, task, protocol, &patterns, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(weights: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |p: &[f64]| {
            let v = p.iter().zip(&weights).map(|(x, w)| 0.5 * w * x * x).sum();
            let g = p.iter().zip(&weights).map(|(x, w)| w * x).collect();
            Ok((v, g))
        }
    }

    #[test]
    fn gd_step_basics() {
        assert_eq!(gd_step(&[1.0, 2.0], &[0.0, 0.0], 0.3), vec![1.0, 2.0]);
        assert_eq!(gd_step(&[1.0, 2.0], &[0.0, 1.0], 1.0), vec![1.0, 1.0]);
        let g = [0.5, -1.5];
        let twice = gd_step(&gd_step(&[0.0, 0.0], &g, 0.1), &g, 0.1);
        let once = gd_step(&[0.0, 0.0], &g, 0.2);
        for (a, b) in twice.iter().zip(&once) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = OptimizerConfig::adam(0.01);
        let (p, _) = adam_step(&[1.0, 1.0, 1.0], &[3.0, -0.2, 1e3], &AdamState::new(3), &cfg, 1);
        assert!((p[0] - 0.99).abs() < 1e-8);
        assert!((p[1] - 1.01).abs() < 1e-7);
        assert!((p[2] - 0.99).abs() < 1e-8);
        let (q, _) = adam_step(&[1.0, 2.0], &[0.0, 0.0], &AdamState::new(2), &cfg, 1);
        assert_eq!(q, vec![1.0, 2.0]);
    }

    /// Hand-written ADAM on f = x² + 10 y², written out step by step.
    #[test]
    fn adam_matches_reference_trace() {
        let cfg = OptimizerConfig::adam(0.1);
        let grad = |p: &[f64]| vec![2.0 * p[0], 20.0 * p[1]];
        let mut p = vec![1.0, -0.5];
        let mut state = AdamState::new(2);
        let (mut rx, mut ry) = (1.0f64, -0.5f64);
        let (mut mx, mut my, mut vx, mut vy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for t in 1..=5 {
            let g = grad(&p);
            (p, state) = adam_step(&p, &g, &state, &cfg, t);
            let (gx, gy) = (2.0 * rx, 20.0 * ry);
            mx = 0.9 * mx + 0.1 * gx;
            my = 0.9 * my + 0.1 * gy;
            vx = 0.999 * vx + 0.001 * gx * gx;
            vy = 0.999 * vy + 0.001 * gy * gy;
            let b1 = 1.0 - 0.9f64.powi(t as i32);
            let b2 = 1.0 - 0.999f64.powi(t as i32);
            rx -= 0.1 * (mx / b1) / ((vx / b2).sqrt() + 1e-8);
            ry -= 0.1 * (my / b1) / ((vy / b2).sqrt() + 1e-8);
            assert!((p[0] - rx).abs() < 1e-14 && (p[1] - ry).abs() < 1e-14, "step {t}");
        }
        // First step moves both coordinates by μ toward the origin.
        assert!(rx < 1.0 && ry > -0.5);
    }

    #[test]
    fn minimize_stops_at_threshold() {
        let mut f = quadratic(vec![1.0, 2.0]);
        let cfg = OptimizerConfig {
            scheme: UpdateScheme::Gd,
            learning_rate: 0.3,
            max_steps: 1000,
            stop_infidelity: 1e-8,
            ..Default::default()
        };
        let t = minimize(&mut f, &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(t.stopping_reason, StoppingReason::Threshold);
        assert!(*t.history.last().unwrap() <= 1e-8);
        assert_eq!(t.history.len(), t.steps + 1);
    }

    #[test]
    fn minimize_reports_max_steps() {
        let mut f = quadratic(vec![1.0]);
        let cfg = OptimizerConfig {
            scheme: UpdateScheme::Gd,
            learning_rate: 1e-3,
            max_steps: 7,
            stop_infidelity: 0.0,
            ..Default::default()
        };
        let t = minimize(&mut f, &[1.0], &cfg).unwrap();
        assert_eq!(t.stopping_reason, StoppingReason::MaxSteps);
        assert_eq!(t.steps, 7);
        assert_eq!(t.best_value, *t.history.last().unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = [
            OptimizerConfig { learning_rate: 0.0, ..Default::default() },
            OptimizerConfig { adam_beta1: 1.0, ..Default::default() },
            OptimizerConfig { adam_beta2: -0.1, ..Default::default() },
            OptimizerConfig { max_steps: 0, ..Default::default() },
            OptimizerConfig { stop_infidelity: -1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidInput(_))), "{c:?}");
        }
    }

    #[test]
    fn lr_decay_shrinks_rate() {
        let cfg = OptimizerConfig { lr_decay: 0.5, learning_rate: 1.0, ..Default::default() };
        assert_eq!(cfg.learning_rate_at(0), 1.0);
        assert_eq!(cfg.learning_rate_at(3), 0.125);
    }

    #[test]
    fn lr_scan_beats_neighbors_on_quadratic() {
        let grid = default_lr_grid();
        assert_eq!(grid.len(), 6);
        let mut f = quadratic(vec![1.5]);
        let scan = lr_scan(&mut f, &[2.0], &grid, 20, 0.0).unwrap();
        // Exhaustive evaluation: x_20 = (1 − 1.5μ)²⁰ x_0.
        let exact: Vec<f64> = grid.iter().map(|mu| 0.5 * 1.5 * (2.0 * (1.0f64 - 1.5 * mu).powi(20)).powi(2)).collect();
        let k = grid.iter().position(|&m| m == scan.best).unwrap();
        for j in [k.wrapping_sub(1), k + 1] {
            if j < grid.len() {
                assert!(exact[k] < exact[j]);
            }
        }
        let argmin = (0..grid.len()).min_by(|&a, &b| exact[a].total_cmp(&exact[b])).unwrap();
        assert_eq!(k, argmin);
    }

    #[test]
    fn lr_scan_single_and_order_independent() {
        let mut f = quadratic(vec![1.0]);
        assert_eq!(lr_scan(&mut f, &[1.0], &[0.05], 20, 0.0).unwrap().best, 0.05);
        let mut g = quadratic(vec![1.0, 4.0]);
        let a = lr_scan(&mut g, &[1.0, 1.0], &[1e-3, 1e-2, 0.1, 0.4], 20, 0.0).unwrap().best;
        let b = lr_scan(&mut g, &[1.0, 1.0], &[0.4, 0.1, 1e-2, 1e-3], 20, 0.0).unwrap().best;
        assert_eq!(a, b);
        assert!(lr_scan(&mut g, &[1.0, 1.0], &[], 20, 0.0).is_err());
    }

    #[test]
    fn lr_scan_ties_prefer_smaller_rate() {
        let mut flat = |p: &[f64]| Ok((0.25, vec![0.0; p.len()]));
        assert_eq!(lr_scan(&mut flat, &[0.0], &[1.0, 0.01, 0.1], 5, 0.0).unwrap().best, 0.01);
    }

    #[test]
    fn divergent_rates_score_infinite() {
        let mut f = quadratic(vec![1.0]);
        let scan = lr_scan(&mut f, &[1.0], &[0.5, 1e200], 20, 0.0).unwrap();
        assert_eq!(scan.best, 0.5);
        assert_eq!(scan.finals[1].1, f64::INFINITY);
    }

    #[test]
    fn schedule_accounting() {
        let s = BatchSchedule { episodes: 1.0, refresh_after_episodes: None, ..Default::default() };
        assert_eq!(s.n_batches(), 20);
        assert_eq!(s.total_updates(), 20);
        let d = BatchSchedule::default();
        assert_eq!(d.total_updates(), 990);
        assert_eq!(d.refresh_update(), Some(490));
        let half = BatchSchedule { episodes: 0.5, ..Default::default() };
        assert_eq!(half.total_updates(), 10);
        assert_eq!(half.refresh_update(), None);
        assert!(BatchSchedule { batch_size: 7, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn training_and_holdout_seeds_are_disjoint() {
        let s = BatchSchedule::default();
        let a = training_seeds(5, &s, 0);
        let b = training_seeds(5, &s, 1);
        assert_eq!(a, 5..205);
        assert_eq!(b, 205..405);
        assert!(5 + HOLDOUT_SEED_OFFSET >= b.end);
    }

    #[test]
    fn mean_of_reports() {
        assert!(mean_separately_optimized(&[]).is_err());
    }

    proptest! {
        #[test]
        fn gd_decreases_below_stability_limit(
            w in prop::collection::vec(0.1f64..5.0, 1..5),
            x0 in prop::collection::vec(-3.0f64..3.0, 5),
            frac in 0.05f64..0.95,
        ) {
            let lmax = w.iter().cloned().fold(0.0, f64::max);
            let init: Vec<f64> = x0[..w.len()].iter().map(|x| x + 0.1).collect();
            let mut f = quadratic(w);
            let cfg = OptimizerConfig {
                scheme: UpdateScheme::Gd,
                learning_rate: frac * 2.0 / lmax,
                max_steps: 30,
                stop_infidelity: 0.0,
                ..Default::default()
            };
            let t = minimize(&mut f, &init, &cfg).unwrap();
            for pair in t.history.windows(2) {
                prop_assert!(pair[1] < pair[0] || pair[0] == 0.0);
            }
        }

        #[test]
        fn stop_reason_is_consistent(stop in 0.0f64..0.5, steps in 1usize..40, mu in 0.01f64..0.5) {
            let mut f = quadratic(vec![1.0, 0.3]);
            let cfg = OptimizerConfig {
                learning_rate: mu,
                max_steps: steps,
                stop_infidelity: stop,
                ..Default::default()
            };
            let t = minimize(&mut f, &[1.0, -1.0], &cfg).unwrap();
            match t.stopping_reason {
                StoppingReason::Threshold => prop_assert!(*t.history.last().unwrap() <= stop),
                StoppingReason::MaxSteps => prop_assert_eq!(t.steps, steps),
            }
            prop_assert!(t.best_value <= *t.history.last().unwrap());
        }
    }
}
