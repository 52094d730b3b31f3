//! One function per experiment kind; each returns an in-memory [`Outcome`].

use magnon_core::analysis::{amplitude_spectrum, fit_power_law, localization, protocol_peak_frequency, speed_limit_scan};
use magnon_core::dynamics::{ensemble_infidelity, StepScheme, TransferProblem};
use magnon_core::model::sample_disorder;
use magnon_core::optimize::{
    lr_scan, mean_separately_optimized, optimize_batch, optimize_problem, training_seeds, evaluate_holdout,
    AnsatzObjective, LrScan, OptimizationReport, OptimizerConfig,
};
use magnon_core::protocols::{linear_protocol, velocity, Ansatz};
use magnon_core::{ChainSpec, ControlProtocol, Error, TransportTask};

use crate::config::{ExperimentConfig, ExperimentKind, LrScanConfig};
use crate::error::CliResult;
use crate::output::{history_table, protocol_table, Cell, Outcome, Table};
use crate::plot::PlotSpec;

pub fn execute(config: &ExperimentConfig) -> CliResult<Outcome> {
    match config.experiment {
        ExperimentKind::CleanOptimize => clean_optimize(config),
        ExperimentKind::DisorderSingle => disorder_single(config),
        ExperimentKind::DisorderBatch => disorder_batch(config),
        ExperimentKind::SpeedLimit => speed_limit(config),
        ExperimentKind::Localization => localization_scan(config),
        ExperimentKind::Evaluate => evaluate(config),
    }
}

/// Optimizes on a prepared problem, first picking μ by a GD scan when requested.
pub fn optimize_with_scan(
    problem: &TransferProblem,
    ansatz: &Ansatz,
    optimizer: &OptimizerConfig,
    scan: Option<&LrScanConfig>,
) -> CliResult<(OptimizationReport, Option<LrScan>)> {
    let mut optimizer = optimizer.clone();
    let scan = match scan {
        Some(s) => {
            let init = ansatz.initial_params(problem.chain(), problem.task());
            let mut objective = AnsatzObjective { problem, ansatz };
            let result = lr_scan(&mut objective, &init, &s.grid, s.budget, optimizer.stop_infidelity)?;
            optimizer.learning_rate = result.best;
            Some(result)
        }
        None => None,
    };
    Ok((optimize_problem(problem, ansatz, None, &optimizer)?, scan))
}

/// Peak frequency of the velocity, or `None` for a protocol without oscillations.
pub fn peak_frequency_or_none(protocol: &ControlProtocol) -> CliResult<Option<f64>> {
    match protocol_peak_frequency(protocol) {
        Ok(w) => Ok(Some(w)),
        Err(Error::NoPeak(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Columns `omega` (rad·J) and `amplitude` of the velocity spectrum.
pub fn spectrum_table(file_name: &str, protocol: &ControlProtocol) -> CliResult<Table> {
    let mut table = Table::new(file_name, &["omega", "amplitude"]);
    for (w, a) in amplitude_spectrum(&velocity(protocol)?, protocol.bin_width)? {
        table.push(vec![w.into(), a.into()]);
    }
    Ok(table)
}

/// Velocity columns of several protocols on the common time grid t_1..t_M.
pub fn velocity_table(file_name: &str, protocols: &[(String, &ControlProtocol)]) -> CliResult<Table> {
    let mut headers = vec!["t".to_string()];
    headers.extend(protocols.iter().map(|(n, _)| n.clone()));
    let mut table = Table {
        file_name: file_name.to_string(),
        headers,
        rows: Vec::new(),
    };
    let columns: Vec<Vec<f64>> = protocols.iter().map(|(_, p)| velocity(p)).collect::<Result<_, _>>()?;
    let times = protocols[0].1.times();
    for k in 0..columns[0].len() {
        let mut row: Vec<Cell> = vec![times[k + 1].into()];
        row.extend(columns.iter().map(|c| c.get(k).copied().into()));
        table.push(row);
    }
    Ok(table)
}

fn scan_metric(scan: &Option<LrScan>) -> serde_json::Value {
    match scan {
        Some(s) => serde_json::json!({ "best": s.best, "finals": s.finals }),
        None => serde_json::Value::Null,
    }
}

fn clean_optimize(config: &ExperimentConfig) -> CliResult<Outcome> {
    let task = config.task()?;
    let ansatz = config.ansatz()?;
    let problem = TransferProblem::new(&config.chain, &task, None)?.with_scheme(config.scheme);
    let (report, scan) = optimize_with_scan(&problem, ansatz, &config.optimizer, config.lr_scan.as_ref())?;
    let mut out = Outcome::default();
    out.seeds = vec![config.optimizer.seed];
    out.metric("final_infidelity", report.final_infidelity);
    out.metric("best_infidelity", report.best_infidelity);
    out.metric("steps", report.steps);
    out.metric("stopping_reason", report.stopping_reason);
    out.metric("learning_rate", report.learning_rate);
    out.metric("lr_scan", scan_metric(&scan));
    out.metric("linear_infidelity", problem.infidelity(&linear_protocol(&task))?);
    out.metric("peak_frequency", peak_frequency_or_none(&report.final_protocol)?);
    out.tables.push(protocol_table("protocol.csv", &report.final_protocol));
    out.tables.push(history_table("history.csv", &report));
    out.tables.push(spectrum_table("spectrum.csv", &report.final_protocol)?);
    out.plots.push(
        PlotSpec::new("history.svg", "infidelity during optimization", "history.csv", "step", &["infidelity"])
            .labels("step", "infidelity")
            .log_y(),
    );
    out.plots.push(PlotSpec::new("protocol.svg", "trap centre", "protocol.csv", "t", &["x0"]).labels("t (1/J)", "X0 (sites)"));
    out.plots.push(
        PlotSpec::new("velocity.svg", "trap velocity", "protocol.csv", "t", &["velocity"]).labels("t (1/J)", "dX0/dt (sites J)"),
    );
    out.plots.push(
        PlotSpec::new("spectrum.svg", "velocity spectrum", "spectrum.csv", "omega", &["amplitude"]).labels("omega (J)", "|FFT|"),
    );
    out.report(ansatz.name(), report);
    Ok(out)
}

fn disorder_single(config: &ExperimentConfig) -> CliResult<Outcome> {
    let task = config.task()?;
    let ansatz = config.ansatz()?;
    let mut out = Outcome::default();
    out.seeds = vec![config.optimizer.seed];
    out.seeds.extend(&config.disorder.seeds);
    let mut table = Table::new(
        "per_pattern.csv",
        &["magnitude", "seed", "initial_infidelity", "final_infidelity"],
    );
    let mut means = Vec::new();
    let mut protocols = Vec::new();
    for &delta in &config.disorder.magnitudes {
        let mut reports = Vec::new();
        for &seed in &config.disorder.seeds {
            let pattern = sample_disorder(&config.chain, delta, seed)?;
            let problem = TransferProblem::new(&config.chain, &task, Some(&pattern))?.with_scheme(config.scheme);
            let (report, _) = optimize_with_scan(&problem, ansatz, &config.optimizer, config.lr_scan.as_ref())?;
            table.push(vec![
                delta.into(),
                seed.into(),
                report.infidelity_history[0].into(),
                report.final_infidelity.into(),
            ]);
            protocols.push((format!("delta{delta}_seed{seed}"), report.final_protocol.clone()));
            reports.push(report);
        }
        let mean = mean_separately_optimized(&reports)?;
        means.push(serde_json::json!({ "magnitude": delta, "mean_final_infidelity": mean }));
        for (r, seed) in reports.into_iter().zip(&config.disorder.seeds) {
            out.report(format!("delta{delta}_seed{seed}"), r);
        }
    }
    out.metric("per_magnitude", means);
    out.tables.push(table);
    let named: Vec<(String, &ControlProtocol)> = protocols.iter().map(|(n, p)| (n.clone(), p)).collect();
    let headers: Vec<&str> = protocols.iter().map(|(n, _)| n.as_str()).collect();
    out.tables.push(velocity_table("velocities.csv", &named)?);
    out.plots.push(
        PlotSpec::new("velocities.svg", "per-pattern optimal velocities", "velocities.csv", "t", &headers)
            .labels("t (1/J)", "dX0/dt (sites J)"),
    );
    Ok(out)
}

fn disorder_batch(config: &ExperimentConfig) -> CliResult<Outcome> {
    let task = config.task()?;
    let ansatz = config.ansatz()?;
    let delta = config.disorder.magnitudes[0];
    let base = config.disorder.base_seed;
    let schedule = &config.schedule;
    let report = optimize_batch(&config.chain, &task, ansatz, delta, base, schedule, &config.optimizer, config.scheme)?;
    let holdout_seed = config.holdout.resolved_seed(base);
    let n_hold = config.holdout.n_patterns;
    let train = training_seeds(base, schedule, 0).start..training_seeds(base, schedule, 1).end;
    let held = evaluate_holdout(&config.chain, &task, &report.final_protocol, n_hold, delta, holdout_seed, Some(train.clone()), config.scheme)?;
    let (initial, _) = ansatz.lower(&config.chain, &task, &report.initial_params)?;
    let held_initial = evaluate_holdout(&config.chain, &task, &initial, n_hold, delta, holdout_seed, Some(train), config.scheme)?;

    let mut out = Outcome::default();
    out.seeds = report.seeds.clone();
    out.seeds.extend((0..n_hold as u64).map(|i| holdout_seed + i));
    out.metric("updates", schedule.total_updates());
    out.metric("training_final_infidelity", report.final_infidelity);
    out.metric("holdout_mean_infidelity", held.mean);
    out.metric("holdout_standard_error", held.standard_error());
    out.metric("holdout_initial_mean_infidelity", held_initial.mean);
    let mut hist = Table::new("history.csv", &["update", "batch_mean_infidelity"]);
    for (k, v) in report.infidelity_history.iter().enumerate() {
        hist.push(vec![k.into(), (*v).into()]);
    }
    let mut hold = Table::new("holdout.csv", &["seed", "infidelity"]);
    for (i, v) in held.per_pattern.iter().enumerate() {
        hold.push(vec![(holdout_seed + i as u64).into(), (*v).into()]);
    }
    out.tables.push(protocol_table("protocol.csv", &report.final_protocol));
    out.tables.push(hist);
    out.tables.push(hold);
    out.plots.push(
        PlotSpec::new("history.svg", "batch mean infidelity", "history.csv", "update", &["batch_mean_infidelity"])
            .labels("update", "infidelity")
            .log_y(),
    );
    out.plots.push(
        PlotSpec::new("velocity.svg", "batch-optimized velocity", "protocol.csv", "t", &["velocity"])
            .labels("t (1/J)", "dX0/dt (sites J)"),
    );
    out.report("batch", report);
    Ok(out)
}

fn speed_limit(config: &ExperimentConfig) -> CliResult<Outcome> {
    let s = &config.analysis.speed_limit;
    let grid = speed_limit_scan(&config.chain, &s.source, &s.distances, &s.durations)?;
    let mut out = Outcome::default();
    out.seeds = match &s.source {
        magnon_core::analysis::ProtocolSource::FourierOptimized { optimizer, .. } => vec![optimizer.seed],
        _ => Vec::new(),
    };
    let mut long = Table::new("fidelity.csv", &["distance", "duration", "fidelity"]);
    for (i, d) in grid.distances.iter().enumerate() {
        for (j, t) in grid.durations.iter().enumerate() {
            long.push(vec![(*d).into(), (*t).into(), grid.fidelity[i][j].into()]);
        }
    }
    let names: Vec<String> = grid.distances.iter().map(|d| format!("d{d}")).collect();
    let mut headers = vec!["duration"];
    headers.extend(names.iter().map(String::as_str));
    let mut wide = Table::new("fidelity_curves.csv", &headers);
    for (j, t) in grid.durations.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*t).into()];
        row.extend(grid.fidelity.iter().map(|r| Cell::from(r[j])));
        wide.push(row);
    }
    let mut contour = Table::new("contour.csv", &["distance", "tau_half"]);
    for (d, t) in grid.distances.iter().zip(&grid.contour_tau_half) {
        contour.push(vec![(*d).into(), (*t).into()]);
    }
    out.metric("contour_tau_half", &grid.contour_tau_half);
    out.metric("distances", &grid.distances);
    out.tables.extend([long, wide, contour]);
    out.plots.push(
        PlotSpec::new("fidelity.svg", "fidelity vs duration", "fidelity_curves.csv", "duration", &headers[1..])
            .labels("tau (1/J)", "fidelity"),
    );
    Ok(out)
}

fn localization_scan(config: &ExperimentConfig) -> CliResult<Outcome> {
    let l = &config.analysis.localization;
    let results = l
        .magnitudes
        .iter()
        .map(|&d| localization(&config.chain, d, l.n_realizations, l.base_seed))
        .collect::<magnon_core::Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    out.seeds = (0..l.n_realizations as u64).map(|i| l.base_seed + i).collect();
    let xis: Vec<f64> = results.iter().map(|r| r.xi).collect();
    let mut xi_table = Table::new("xi.csv", &["magnitude", "xi", "fit_residual"]);
    for r in &results {
        xi_table.push(vec![r.magnitude.into(), r.xi.into(), r.fit_residual.into()]);
    }
    let names: Vec<String> = l.magnitudes.iter().map(|d| format!("delta{d}")).collect();
    let mut headers = vec!["offset"];
    headers.extend(names.iter().map(String::as_str));
    let mut profiles = Table::new("profiles.csv", &headers);
    let center = config.chain.n_sites / 2;
    for k in 0..config.chain.n_sites {
        let mut row: Vec<Cell> = vec![Cell::Num(k as f64 - center as f64)];
        row.extend(results.iter().map(|r| Cell::from(r.profile[k])));
        profiles.push(row);
    }
    out.metric("magnitudes", &l.magnitudes);
    out.metric("xi", &xis);
    let positive = l.magnitudes.iter().zip(&xis).filter(|(d, _)| **d > 0.0).count();
    if positive >= 2 {
        let (d, x): (Vec<f64>, Vec<f64>) = l.magnitudes.iter().zip(&xis).filter(|(d, _)| **d > 0.0).unzip();
        out.metric("power_law", fit_power_law(&d, &x)?);
    }
    out.tables.extend([xi_table, profiles]);
    out.plots.push(
        PlotSpec::new("profiles.svg", "averaged ground-state amplitude", "profiles.csv", "offset", &headers[1..])
            .labels("x - x0 (sites)", "|psi|")
            .log_y(),
    );
    out.plots.push(PlotSpec::new("xi.svg", "localization length", "xi.csv", "magnitude", &["xi"]).labels("Delta (J)", "xi (sites)"));
    Ok(out)
}

/// Mean and standard error of ⟨𝓘⟩ over `n` patterns with seeds `base..base + n`.
pub fn ensemble_mean(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    delta: f64,
    n: usize,
    base: u64,
    scheme: StepScheme,
) -> CliResult<(f64, f64)> {
    let patterns = (0..n as u64)
        .map(|i| sample_disorder(chain, delta, base + i))
        .collect::<magnon_core::Result<Vec<_>>>()?;
    let e = ensemble_infidelity(chain, task, protocol, &patterns, scheme)?;
    Ok((e.mean, e.standard_error()))
}

fn evaluate(config: &ExperimentConfig) -> CliResult<Outcome> {
    let task = config.task()?;
    let protocol = config
        .protocol
        .as_ref()
        .expect("validated config has a protocol")
        .build(&config.chain, &task)?;
    let problem = TransferProblem::new(&config.chain, &task, None)?.with_scheme(config.scheme);
    let mut out = Outcome::default();
    out.metric("clean_infidelity", problem.infidelity(&protocol)?);
    out.metric("peak_frequency", peak_frequency_or_none(&protocol)?);
    let d = &config.disorder;
    if !d.magnitudes.is_empty() {
        out.seeds = (0..d.n_patterns as u64).map(|i| d.base_seed + i).collect();
        let mut table = Table::new("ensemble.csv", &["magnitude", "mean_infidelity", "standard_error"]);
        let mut means = Vec::new();
        for &delta in &d.magnitudes {
            let (mean, se) = ensemble_mean(&config.chain, &task, &protocol, delta, d.n_patterns, d.base_seed, config.scheme)?;
            table.push(vec![delta.into(), mean.into(), se.into()]);
            means.push(mean);
        }
        out.metric("ensemble_mean_infidelity", means);
        out.tables.push(table);
        out.plots.push(
            PlotSpec::new("ensemble.svg", "disorder-averaged infidelity", "ensemble.csv", "magnitude", &["mean_infidelity"])
                .labels("Delta (J)", "mean infidelity"),
        );
    }
    out.tables.push(protocol_table("protocol.csv", &protocol));
    out.plots.push(
        PlotSpec::new("velocity.svg", "trap velocity", "protocol.csv", "t", &["velocity"]).labels("t (1/J)", "dX0/dt (sites J)"),
    );
    Ok(out)
}
