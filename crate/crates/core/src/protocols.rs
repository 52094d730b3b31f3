//! Pulse ansatzes for the trap centre X₀(t) and their lowering onto the time grid.
//!
//! Every ansatz is affine in its parameters, so each lowering also returns the
//! constant Jacobian ∂X₀(t_k)/∂p used to pull bin gradients back to parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::solve_dense;
use crate::model::{splitmix64_word, unit_interval, ChainSpec, TransportTask};
use crate::{Error, Result};

/// Trap-centre samples X₀(t_k) for k = 0..=M on the grid t_k = k·Δt.
///
/// Bin k (1-based) holds `samples[k]` over ((k−1)Δt, kΔt]; `samples[0]` is the
/// starting position and is not used by the propagation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlProtocol {
    pub samples: Vec<f64>,
    pub duration: f64,
    pub bin_width: f64,
}

impl ControlProtocol {
    pub fn n_bins(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    /// Positions held in bins 1..=M.
    pub fn bins(&self) -> &[f64] {
        &self.samples[1..]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|k| k as f64 * self.bin_width).collect()
    }

    /// Constant trap at `position` for the whole task.
    pub fn constant(task: &TransportTask, position: f64) -> Self {
        ControlProtocol {
            samples: vec![position; task.n_bins() + 1],
            duration: task.duration,
            bin_width: task.step_width(),
        }
    }

    /// Protocol in the mirrored chain, X₀ → N + 1 − X₀.
    pub fn mirrored(&self, chain: &ChainSpec) -> Self {
        ControlProtocol {
            samples: self.samples.iter().map(|&x| chain.mirror(x)).collect(),
            ..self.clone()
        }
    }

    pub fn check_task(&self, task: &TransportTask) -> Result<()> {
        let m = task.n_bins();
        if self.samples.len() != m + 1 {
            return Err(Error::invalid(format!(
                "protocol has {} bins, task needs {m}",
                self.n_bins()
            )));
        }
        if let Some(bad) = self.samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite protocol sample {bad}")));
        }
        Ok(())
    }
}

/// Coefficients A_1..A_Nc of the sine series on top of the linear ramp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierParams {
    pub coefficients: Vec<f64>,
}

impl FourierParams {
    pub fn zeros(cutoff: usize) -> Self {
        FourierParams {
            coefficients: vec![0.0; cutoff],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.coefficients.len()
    }
}

/// Trap positions C₁ = X₀(τ/4) and C₂ = X₀(3τ/4) selecting a member of the STA family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaParams {
    pub c1: f64,
    pub c2: f64,
}

/// Free trap positions for bins 1..=M.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeParams {
    pub bins: Vec<f64>,
}

impl FreeParams {
    pub fn linear(task: &TransportTask) -> Self {
        FreeParams {
            bins: linear_protocol(task).bins().to_vec(),
        }
    }

    /// Uniformly random positions in [x_A, x_B].
    pub fn random(task: &TransportTask, seed: u64) -> Self {
        let (lo, hi) = (task.x_start.min(task.x_end), task.x_start.max(task.x_end));
        FreeParams {
            bins: (0..task.n_bins() as u64)
                .map(|k| lo + (hi - lo) * unit_interval(splitmix64_word(seed, k)))
                .collect(),
        }
    }
}

/// ∂X₀(t_k)/∂p with rows = bins 1..=M and columns = parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamJacobian {
    Identity(usize),
    Dense {
        rows: usize,
        cols: usize,
        /// Row-major.
        data: Vec<f64>,
    },
}

impl ParamJacobian {
    pub fn rows(&self) -> usize {
        match self {
            ParamJacobian::Identity(n) => *n,
            ParamJacobian::Dense { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ParamJacobian::Identity(n) => *n,
            ParamJacobian::Dense { cols, .. } => *cols,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        match self {
            ParamJacobian::Identity(_) => f64::from(u8::from(row == col)),
            ParamJacobian::Dense { cols, data, .. } => data[row * cols + col],
        }
    }

    /// Jᵀ v.
    pub fn transpose_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows() {
            return Err(Error::invalid(format!(
                "bin gradient has {} entries, jacobian has {} rows",
                v.len(),
                self.rows()
            )));
        }
        Ok(match self {
            ParamJacobian::Identity(_) => v.to_vec(),
            ParamJacobian::Dense { cols, data, .. } => {
                let mut out = vec![0.0; *cols];
                for (row, &g) in data.chunks_exact(*cols).zip(v) {
                    for (o, &j) in out.iter_mut().zip(row) {
                        *o += g * j;
                    }
                }
                out
            }
        })
    }
}

/// Chain rule ∂𝓘/∂p = Jᵀ ∂𝓘/∂X₀(t_k).
pub fn param_gradient(bin_grad: &[f64], jac: &ParamJacobian) -> Result<Vec<f64>> {
    jac.transpose_mul(bin_grad)
}

fn grid(task: &TransportTask) -> (usize, Vec<f64>) {
    let m = task.n_bins();
    let s = (0..=m)
        .map(|k| if m == 0 { 0.0 } else { k as f64 / m as f64 })
        .collect();
    (m, s)
}

/// X₀(t) = x_A + (x_B − x_A) t/τ.
pub fn linear_protocol(task: &TransportTask) -> ControlProtocol {
    let (_, s) = grid(task);
    let d = task.distance();
    ControlProtocol {
        samples: s.iter().map(|s| task.x_start + d * s).collect(),
        duration: task.duration,
        bin_width: task.step_width(),
    }
}

// sin(nπk/M) with exact zeros at multiples of π
fn grid_sine(n: usize, k: usize, m: usize) -> f64 {
    let j = (n * k) % (2 * m);
    if j % m == 0 {
        0.0
    } else {
        (PI * j as f64 / m as f64).sin()
    }
}

/// Linear ramp plus Σ_n A_n sin(nπ t/τ).
pub fn fourier_protocol(
    task: &TransportTask,
    params: &FourierParams,
) -> Result<(ControlProtocol, ParamJacobian)> {
    let nc = params.cutoff();
    if nc == 0 {
        return Err(Error::invalid("Fourier cutoff must be >= 1"));
    }
    let mut protocol = linear_protocol(task);
    let m = protocol.n_bins();
    let mut data = vec![0.0; m * nc];
    for k in 1..=m {
        let row = &mut data[(k - 1) * nc..k * nc];
        for (n, (entry, a)) in row.iter_mut().zip(&params.coefficients).enumerate() {
            *entry = grid_sine(n + 1, k, m);
            protocol.samples[k] += a * *entry;
        }
    }
    Ok((protocol, ParamJacobian::Dense { rows: m, cols: nc, data }))
}

/// Samples are the parameters for bins 1..=M; `samples[0]` stays at x_A.
pub fn free_protocol(
    task: &TransportTask,
    params: &FreeParams,
) -> Result<(ControlProtocol, ParamJacobian)> {
    let m = task.n_bins();
    if params.bins.len() != m {
        return Err(Error::invalid(format!(
            "free ansatz has {} bins, task needs {m}",
            params.bins.len()
        )));
    }
    let mut samples = Vec::with_capacity(m + 1);
    samples.push(task.x_start);
    samples.extend_from_slice(&params.bins);
    Ok((
        ControlProtocol {
            samples,
            duration: task.duration,
            bin_width: task.step_width(),
        },
        ParamJacobian::Identity(m),
    ))
}

/// Forward-difference velocity (X₀(t_k) − X₀(t_{k−1}))/Δt for k = 1..=M.
pub fn velocity(protocol: &ControlProtocol) -> Result<Vec<f64>> {
    if protocol.n_bins() == 0 {
        return Err(Error::invalid("velocity needs at least one bin"));
    }
    Ok(protocol
        .samples
        .windows(2)
        .map(|w| (w[1] - w[0]) / protocol.bin_width)
        .collect())
}

/// Which printing of the reference shortcut protocol to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StaVariant {
    /// Correction term s(1 − 3s + 2s²)/(ω₀²τ²), as commonly printed.
    Verbatim,
    /// Correction 60 s(1 − 3s + 2s²)/(ω₀²τ²), from X₀ = α + α̈/ω₀² with the quintic α.
    #[default]
    Derived,
}

/// Closed-form shortcut protocol built on α(s) = x_A + d(10s³ − 15s⁴ + 6s⁵).
pub fn sta_reference_position(task: &TransportTask, chain: &ChainSpec, variant: StaVariant, t: f64) -> f64 {
    let s = t / task.duration;
    let w2t2 = chain.trap_frequency.powi(2) * task.duration.powi(2);
    let factor = match variant {
        StaVariant::Verbatim => 1.0,
        StaVariant::Derived => 60.0,
    };
    let quintic = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let correction = factor * s * (1.0 - 3.0 * s + 2.0 * s * s) / w2t2;
    task.x_start + task.distance() * (quintic + correction)
}

pub fn sta_reference(task: &TransportTask, chain: &ChainSpec, variant: StaVariant) -> ControlProtocol {
    let (_, s) = grid(task);
    ControlProtocol {
        samples: s
            .iter()
            .map(|s| sta_reference_position(task, chain, variant, s * task.duration))
            .collect(),
        duration: task.duration,
        bin_width: task.step_width(),
    }
}

/// (C₁, C₂) of the derived reference protocol; the natural seed for STA optimization.
pub fn sta_reference_params(task: &TransportTask, chain: &ChainSpec) -> StaParams {
    StaParams {
        c1: sta_reference_position(task, chain, StaVariant::Derived, 0.25 * task.duration),
        c2: sta_reference_position(task, chain, StaVariant::Derived, 0.75 * task.duration),
    }
}

const STA_DEGREE: usize = 7;

/// Solution α(t) = x_A + Σ_{n=1}^{7} b_n tⁿ of the shortcut constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct StaPolynomial {
    /// b_1..b_7 in physical time units.
    pub coefficients: [f64; STA_DEGREE],
    pub x_start: f64,
    pub duration: f64,
    pub trap_frequency: f64,
    /// Same polynomial in s = t/τ: α = x_A + Σ β_n sⁿ.
    scaled: [f64; STA_DEGREE],
    /// ∂β/∂C₁ and ∂β/∂C₂.
    scaled_sensitivity: [[f64; STA_DEGREE]; 2],
}

impl StaPolynomial {
    pub fn alpha(&self, t: f64) -> f64 {
        let s = t / self.duration;
        self.x_start + (1..=STA_DEGREE).map(|n| self.scaled[n - 1] * s.powi(n as i32)).sum::<f64>()
    }

    pub fn alpha_dot(&self, t: f64) -> f64 {
        let s = t / self.duration;
        (1..=STA_DEGREE)
            .map(|n| n as f64 * self.scaled[n - 1] * s.powi(n as i32 - 1))
            .sum::<f64>()
            / self.duration
    }

    pub fn alpha_ddot(&self, t: f64) -> f64 {
        let s = t / self.duration;
        (2..=STA_DEGREE)
            .map(|n| (n * (n - 1)) as f64 * self.scaled[n - 1] * s.powi(n as i32 - 2))
            .sum::<f64>()
            / (self.duration * self.duration)
    }

    /// X₀(t) = α + α̈/ω₀².
    pub fn trap_position(&self, t: f64) -> f64 {
        self.alpha(t) + self.alpha_ddot(t) / self.trap_frequency.powi(2)
    }

    fn basis(&self, s: f64) -> [f64; STA_DEGREE] {
        sta_basis(s, self.trap_frequency * self.trap_frequency * self.duration * self.duration)
    }
}

// φ_n(s) = sⁿ + n(n−1)s^{n−2}/(ω₀²τ²): contribution of β_n to X₀ − x_A
fn sta_basis(s: f64, w2t2: f64) -> [f64; STA_DEGREE] {
    let mut phi = [0.0; STA_DEGREE];
    for (i, p) in phi.iter_mut().enumerate() {
        let n = (i + 1) as i32;
        *p = s.powi(n);
        if n >= 2 {
            *p += (n * (n - 1)) as f64 * s.powi(n - 2) / w2t2;
        }
    }
    phi
}

/// Solves the seven shortcut conditions α'(0) = α''(0) = 0, α(τ) = x_B,
/// α'(τ) = α''(τ) = 0, X₀(τ/4) = C₁, X₀(3τ/4) = C₂ for b_1..b_7.
pub fn sta_solve(task: &TransportTask, chain: &ChainSpec, params: &StaParams) -> Result<StaPolynomial> {
    let tau = task.duration;
    if !(tau > 0.0) {
        return Err(Error::invalid("shortcut protocol needs tau > 0"));
    }
    let w2t2 = chain.trap_frequency.powi(2) * tau * tau;
    let mut a = DMatrix::zeros(STA_DEGREE, STA_DEGREE);
    for i in 0..STA_DEGREE {
        let n = (i + 1) as f64;
        // derivatives at s = 0 select β_1 and β_2
        a[(0, i)] = if i == 0 { 1.0 } else { 0.0 };
        a[(1, i)] = if i == 1 { 2.0 } else { 0.0 };
        a[(2, i)] = 1.0;
        a[(3, i)] = n;
        a[(4, i)] = n * (n - 1.0);
    }
    for (row, s) in [(5, 0.25), (6, 0.75)] {
        let phi = sta_basis(s, w2t2);
        for i in 0..STA_DEGREE {
            a[(row, i)] = phi[i];
        }
    }
    let mut rhs = DVector::zeros(STA_DEGREE);
    rhs[2] = task.distance();
    rhs[5] = params.c1 - task.x_start;
    rhs[6] = params.c2 - task.x_start;
    let beta = solve_dense(a.clone(), rhs).map_err(|e| e.context("shortcut constraint system"))?;
    let mut unit1 = DVector::zeros(STA_DEGREE);
    unit1[5] = 1.0;
    let mut unit2 = DVector::zeros(STA_DEGREE);
    unit2[6] = 1.0;
    let d1 = solve_dense(a.clone(), unit1)?;
    let d2 = solve_dense(a, unit2)?;

    let mut scaled = [0.0; STA_DEGREE];
    let mut coefficients = [0.0; STA_DEGREE];
    let mut scaled_sensitivity = [[0.0; STA_DEGREE]; 2];
    for i in 0..STA_DEGREE {
        scaled[i] = beta[i];
        coefficients[i] = beta[i] / tau.powi(i as i32 + 1);
        scaled_sensitivity[0][i] = d1[i];
        scaled_sensitivity[1][i] = d2[i];
    }
    Ok(StaPolynomial {
        coefficients,
        x_start: task.x_start,
        duration: tau,
        trap_frequency: chain.trap_frequency,
        scaled,
        scaled_sensitivity,
    })
}

/// Lowers the (C₁, C₂) shortcut family onto the grid.
pub fn sta_protocol(
    task: &TransportTask,
    chain: &ChainSpec,
    params: &StaParams,
) -> Result<(ControlProtocol, ParamJacobian)> {
    let poly = sta_solve(task, chain, params)?;
    let (m, s) = grid(task);
    let mut samples = Vec::with_capacity(m + 1);
    let mut data = Vec::with_capacity(2 * m);
    for (k, &sk) in s.iter().enumerate() {
        let phi = poly.basis(sk);
        let dot = |c: &[f64; STA_DEGREE]| c.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>();
        samples.push(task.x_start + dot(&poly.scaled));
        if k > 0 {
            data.push(dot(&poly.scaled_sensitivity[0]));
            data.push(dot(&poly.scaled_sensitivity[1]));
        }
    }
    Ok((
        ControlProtocol {
            samples,
            duration: task.duration,
            bin_width: task.step_width(),
        },
        ParamJacobian::Dense { rows: m, cols: 2, data },
    ))
}

/// How a free-bin ansatz is seeded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FreeInit {
    #[default]
    Linear,
    Random {
        seed: u64,
    },
}

/// Parameterized pulse families accepted by the optimizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Ansatz {
    /// One free position per time bin.
    Free {
        #[serde(default)]
        init: FreeInit,
    },
    /// Shortcut family parameterized by (C₁, C₂), seeded from the reference protocol.
    Sta,
    /// Linear ramp plus `cutoff` sine harmonics, seeded at zero.
    Fourier { cutoff: usize },
}

impl Ansatz {
    pub fn name(&self) -> &'static str {
        match self {
            Ansatz::Free { .. } => "free",
            Ansatz::Sta => "sta",
            Ansatz::Fourier { .. } => "fourier",
        }
    }

    pub fn initial_params(&self, chain: &ChainSpec, task: &TransportTask) -> Vec<f64> {
        match self {
            Ansatz::Free { init: FreeInit::Linear } => FreeParams::linear(task).bins,
            Ansatz::Free {
                init: FreeInit::Random { seed },
            } => FreeParams::random(task, *seed).bins,
            Ansatz::Sta => {
                let p = sta_reference_params(task, chain);
                vec![p.c1, p.c2]
            }
            Ansatz::Fourier { cutoff } => vec![0.0; *cutoff],
        }
    }

    pub fn lower(
        &self,
        chain: &ChainSpec,
        task: &TransportTask,
        params: &[f64],
    ) -> Result<(ControlProtocol, ParamJacobian)> {
        match self {
            Ansatz::Free { .. } => free_protocol(task, &FreeParams { bins: params.to_vec() }),
            Ansatz::Sta => {
                if params.len() != 2 {
                    return Err(Error::invalid("shortcut ansatz takes exactly (C1, C2)"));
                }
                sta_protocol(task, chain, &StaParams { c1: params[0], c2: params[1] })
            }
            Ansatz::Fourier { cutoff } => {
                if params.len() != *cutoff {
                    return Err(Error::invalid(format!(
                        "Fourier ansatz expects {cutoff} coefficients, got {}",
                        params.len()
                    )));
                }
                fourier_protocol(task, &FourierParams { coefficients: params.to_vec() })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(tau: f64) -> (ChainSpec, TransportTask) {
        let chain = ChainSpec::standard();
        let task = TransportTask::centered(&chain, 50.0, tau).unwrap();
        (chain, task)
    }

    #[test]
    fn linear_endpoints_midpoint_velocity() {
        let (_, task) = setup(60.0);
        let p = linear_protocol(&task);
        assert_eq!(p.samples[0], task.x_start);
        assert!((p.samples[600] - task.x_end).abs() < 1e-12);
        assert!((p.samples[300] - 0.5 * (task.x_start + task.x_end)).abs() < 1e-12);
        let v = velocity(&p).unwrap();
        assert!(v.iter().all(|v| (v - 50.0 / 60.0).abs() < 1e-9));
    }

    #[test]
    fn fourier_reduces_to_linear_and_pins_ends() {
        let (_, task) = setup(40.0);
        let (zero, _) = fourier_protocol(&task, &FourierParams::zeros(5)).unwrap();
        assert_eq!(zero, linear_protocol(&task));
        let (p, _) = fourier_protocol(
            &task,
            &FourierParams {
                coefficients: vec![1.3, -2.0, 0.7],
            },
        )
        .unwrap();
        assert_eq!(p.samples[0], task.x_start);
        assert!((p.samples[400] - task.x_end).abs() < 1e-12);
        let (one, _) = fourier_protocol(&task, &FourierParams { coefficients: vec![1.0] }).unwrap();
        let mid = 0.5 * (task.x_start + task.x_end);
        assert!((one.samples[200] - (mid + 1.0)).abs() < 1e-12);
        assert!(fourier_protocol(&task, &FourierParams::zeros(0)).is_err());
    }

    #[test]
    fn fourier_cutoff_padding_is_consistent() {
        let (_, task) = setup(20.0);
        let (a, _) = fourier_protocol(&task, &FourierParams { coefficients: vec![0.4, -0.2] }).unwrap();
        let (b, _) = fourier_protocol(
            &task,
            &FourierParams {
                coefficients: vec![0.4, -0.2, 0.0, 0.0, 0.0],
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sta_constraints_hold() {
        let (chain, task) = setup(50.0);
        for (c1, c2) in [(105.0, 140.0), (110.0, 120.0), (100.0, 160.0)] {
            let params = StaParams { c1, c2 };
            let poly = sta_solve(&task, &chain, &params).unwrap();
            let tau = task.duration;
            let residuals = [
                poly.alpha(0.0) - task.x_start,
                poly.alpha_dot(0.0),
                poly.alpha_ddot(0.0),
                poly.alpha(tau) - task.x_end,
                poly.alpha_dot(tau),
                poly.alpha_ddot(tau),
                poly.trap_position(0.25 * tau) - c1,
                poly.trap_position(0.75 * tau) - c2,
            ];
            for r in residuals {
                assert!(r.abs() < 1e-9, "residual {r}");
            }
            assert_eq!(poly.coefficients[0], 0.0);
            assert_eq!(poly.coefficients[1], 0.0);
            let (p, _) = sta_protocol(&task, &chain, &params).unwrap();
            assert!((p.samples[0] - task.x_start).abs() < 1e-9);
            assert!((p.samples[500] - task.x_end).abs() < 1e-9);
            assert!((p.samples[125] - c1).abs() < 1e-9);
            assert!((p.samples[375] - c2).abs() < 1e-9);
        }
    }

    #[test]
    fn sta_family_contains_the_reference() {
        for tau in [30.0, 50.0, 100.0] {
            let (chain, task) = setup(tau);
            let reference = sta_reference(&task, &chain, StaVariant::Derived);
            let (p, _) = sta_protocol(&task, &chain, &sta_reference_params(&task, &chain)).unwrap();
            for (a, b) in p.samples.iter().zip(&reference.samples) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sta_reference_variants_agree_at_special_points() {
        let (chain, task) = setup(40.0);
        for variant in [StaVariant::Verbatim, StaVariant::Derived] {
            let p = sta_reference(&task, &chain, variant);
            assert!((p.samples[0] - task.x_start).abs() < 1e-12);
            assert!((p.samples[400] - task.x_end).abs() < 1e-12);
            assert!((p.samples[200] - (task.x_start + 25.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sta_jacobian_is_constant_and_matches_differences() {
        let (chain, task) = setup(40.0);
        let p0 = StaParams { c1: 108.0, c2: 141.0 };
        let (base, jac) = sta_protocol(&task, &chain, &p0).unwrap();
        let (_, jac2) = sta_protocol(&task, &chain, &StaParams { c1: 97.0, c2: 160.0 }).unwrap();
        for r in 0..jac.rows() {
            for c in 0..2 {
                assert!((jac.get(r, c) - jac2.get(r, c)).abs() < 1e-12);
            }
        }
        // X₀ is affine in (C₁, C₂), so a large step only reduces round-off.
        let h = 0.5;
        for (col, shifted) in [
            StaParams { c1: p0.c1 + h, ..p0 },
            StaParams { c2: p0.c2 + h, ..p0 },
        ]
        .iter()
        .enumerate()
        {
            let (p, _) = sta_protocol(&task, &chain, shifted).unwrap();
            for k in 1..=task.n_bins() {
                let fd = (p.samples[k] - base.samples[k]) / h;
                assert!((fd - jac.get(k - 1, col)).abs() < 1e-8, "bin {k}: {fd} vs {}", jac.get(k - 1, col));
            }
        }
        // bin at τ/4 moves one-for-one with C₁
        assert!((jac.get(99, 0) - 1.0).abs() < 1e-9);
        assert!(jac.get(99, 1).abs() < 1e-9);
    }

    #[test]
    fn sta_mirror_is_time_reversal() {
        let (chain, task) = setup(60.0);
        let params = StaParams { c1: 111.0, c2: 137.0 };
        let (p, _) = sta_protocol(&task, &chain, &params).unwrap();
        let back = TransportTask {
            x_start: task.x_end,
            x_end: task.x_start,
            ..task.clone()
        };
        let (q, _) = sta_protocol(&back, &chain, &StaParams { c1: params.c2, c2: params.c1 }).unwrap();
        let m = task.n_bins();
        for k in 0..=m {
            assert!((p.samples[k] - q.samples[m - k]).abs() < 1e-9);
        }
    }

    #[test]
    fn free_ansatz() {
        let (_, task) = setup(10.0);
        let lin = FreeParams::linear(&task);
        let (p, jac) = free_protocol(&task, &lin).unwrap();
        assert_eq!(p, linear_protocol(&task));
        assert_eq!(jac, ParamJacobian::Identity(100));
        let mut bumped = lin.clone();
        bumped.bins[10] += 1.0;
        let (q, _) = free_protocol(&task, &bumped).unwrap();
        let changed: Vec<usize> = (0..=100).filter(|&k| p.samples[k] != q.samples[k]).collect();
        assert_eq!(changed, vec![11]);
        assert!(free_protocol(&task, &FreeParams { bins: vec![0.0; 3] }).is_err());
        let r = FreeParams::random(&task, 5);
        assert!(r.bins.iter().all(|&x| (task.x_start..=task.x_end).contains(&x)));
    }

    #[test]
    fn param_gradient_chain_rule() {
        let g = vec![0.5, -1.0, 2.0];
        assert_eq!(param_gradient(&g, &ParamJacobian::Identity(3)).unwrap(), g);
        let jac = ParamJacobian::Dense {
            rows: 3,
            cols: 2,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(param_gradient(&[0.0; 3], &jac).unwrap(), vec![0.0, 0.0]);
        assert_eq!(param_gradient(&g, &jac).unwrap(), vec![7.5, 9.0]);
        assert!(param_gradient(&[1.0], &jac).is_err());
    }

    #[test]
    fn velocity_edge_cases() {
        let (_, task) = setup(5.0);
        let flat = ControlProtocol::constant(&task, 120.0);
        assert!(velocity(&flat).unwrap().iter().all(|&v| v == 0.0));
        let p = sta_reference(&task, &ChainSpec::standard(), StaVariant::Derived);
        let v = velocity(&p).unwrap();
        let travelled: f64 = v.iter().map(|v| v * p.bin_width).sum();
        assert!((travelled - task.distance()).abs() < 1e-9);
        let empty = ControlProtocol {
            samples: vec![1.0],
            duration: 0.01,
            bin_width: 0.1,
        };
        assert!(velocity(&empty).is_err());
    }
}
