//! Adjoint gradients against central finite differences.

use magnon_core::dynamics::{StepScheme, TransferProblem};
use magnon_core::model::sample_disorder;
use magnon_core::protocols::{param_gradient, Ansatz, FreeInit};
use magnon_core::{ChainSpec, TransportTask};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub chain: ChainSpec,
    pub task: TransportTask,
    pub ansatzes: Vec<Ansatz>,
    pub schemes: Vec<StepScheme>,
    /// Disorder magnitude and seed; `None` checks the clean chain only.
    pub disorder: Option<(f64, u64)>,
    pub step: f64,
    pub tolerance: f64,
    /// A component passes when |fd − g| ≤ tolerance·|g| + abs_floor.
    pub abs_floor: f64,
}

impl GradCheckOptions {
    /// N = 31, ω₀ = 3, d = 2, τ = 2 (20 bins): every gradient component sits far
    /// above the round-off floor of a 10⁻⁶ central difference.
    pub fn default_instance() -> Self {
        let chain = ChainSpec::new(31, 1.0, 3.0).expect("valid chain");
        let task = TransportTask::centered(&chain, 2.0, 2.0).expect("valid task");
        GradCheckOptions {
            chain,
            task,
            ansatzes: vec![
                Ansatz::Free { init: FreeInit::Random { seed: 3 } },
                Ansatz::Free { init: FreeInit::Linear },
                Ansatz::Sta,
                Ansatz::Fourier { cutoff: 6 },
            ],
            schemes: vec![StepScheme::WindowedChebyshev, StepScheme::Eigen],
            disorder: Some((0.2, 1)),
            step: 1e-6,
            tolerance: 1e-6,
            abs_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub ansatz: String,
    pub scheme: StepScheme,
    pub disordered: bool,
    pub n_params: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub abs_floor: f64,
    pub cases: Vec<GradCheckCase>,
    pub pass: bool,
}

/// Fourier coefficients start at zero, where the sine terms vanish; a fixed
/// non-trivial point exercises them properly.
fn check_point(ansatz: &Ansatz, chain: &ChainSpec, task: &TransportTask) -> Vec<f64> {
    match ansatz {
        Ansatz::Fourier { cutoff } => (0..*cutoff)
            .map(|n| 0.8 * (-0.6f64).powi(n as i32))
            .collect(),
        _ => ansatz.initial_params(chain, task),
    }
}

pub fn run(opts: &GradCheckOptions) -> CliResult<GradCheckReport> {
    if !(opts.step > 0.0 && opts.tolerance > 0.0 && opts.abs_floor >= 0.0) {
        return Err(CliError::config("step and tolerance must be > 0, abs_floor >= 0"));
    }
    let pattern = match opts.disorder {
        Some((delta, seed)) => Some(sample_disorder(&opts.chain, delta, seed)?),
        None => None,
    };
    let mut cases = Vec::new();
    for &scheme in &opts.schemes {
        let patterns: Vec<Option<&magnon_core::DisorderPattern>> = match &pattern {
            Some(p) => vec![None, Some(p)],
            None => vec![None],
        };
        for pat in patterns {
            let problem = TransferProblem::new(&opts.chain, &opts.task, pat)?.with_scheme(scheme);
            for ansatz in &opts.ansatzes {
                let params = check_point(ansatz, &opts.chain, &opts.task);
                let (protocol, jac) = ansatz.lower(&opts.chain, &opts.task, &params)?;
                let (_, bins) = problem.infidelity_gradient(&protocol)?;
                let grad = param_gradient(&bins.values, &jac)?;
                let f = |p: &[f64]| -> CliResult<f64> {
                    Ok(problem.infidelity(&ansatz.lower(&opts.chain, &opts.task, p)?.0)?)
                };
                let (mut rel, mut abs, mut pass) = (0.0f64, 0.0f64, true);
                for i in 0..params.len() {
                    let mut up = params.clone();
                    let mut dn = params.clone();
                    up[i] += opts.step;
                    dn[i] -= opts.step;
                    let fd = (f(&up)? - f(&dn)?) / (2.0 * opts.step);
                    let err = (fd - grad[i]).abs();
                    abs = abs.max(err);
                    rel = rel.max(if grad[i] != 0.0 { err / grad[i].abs() } else { err });
                    pass &= err <= opts.tolerance * grad[i].abs() + opts.abs_floor;
                }
                cases.push(GradCheckCase {
                    ansatz: serde_json::to_string(ansatz).expect("ansatz serializes"),
                    scheme,
                    disordered: pat.is_some(),
                    n_params: params.len(),
                    max_relative_error: rel,
                    max_absolute_error: abs,
                    pass,
                });
            }
        }
    }
    let pass = cases.iter().all(|c| c.pass);
    Ok(GradCheckReport {
        step: opts.step,
        tolerance: opts.tolerance,
        abs_floor: opts.abs_floor,
        cases,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_passes_for_every_case() {
        let report = run(&GradCheckOptions::default_instance()).unwrap();
        assert_eq!(report.cases.len(), 16);
        for c in &report.cases {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn a_tight_tolerance_is_reported_as_failure() {
        let mut opts = GradCheckOptions::default_instance();
        opts.tolerance = 1e-15;
        opts.schemes = vec![StepScheme::Eigen];
        opts.ansatzes = vec![Ansatz::Sta];
        opts.disorder = None;
        let report = run(&opts).unwrap();
        assert!(!report.pass);
    }
}
