//! Piecewise-constant propagation, the transfer infidelity and its adjoint gradient.
//!
//! Bin k ∈ 1..=M holds the Hamiltonian at X₀(t_k) over ((k−1)Δt, kΔt]. The
//! gradient differentiates exactly this discrete map: a forward sweep stores
//! every ψ_k, a backward sweep carries χ_k = U_{k+1}†…U_M†ψ_B, and each bin
//! contributes −2 Re[z̄ ⟨χ_k|∂U_k/∂X₀|ψ_{k−1}⟩] with z = ⟨ψ_B|ψ_M⟩.

mod propagator;

pub use propagator::{StepScheme, Window, WINDOW_AMPLITUDE_CUTOFF, WINDOW_MARGIN};

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::model::{
    fill_diagonal, gaussian_state, trap_field_slope, ChainSpec, DisorderPattern, SymTridiagonal,
    TransportTask, WaveState,
};
use crate::protocols::ControlProtocol;
use crate::{Error, Result};
use propagator::{Chebyshev, EigenStep};

/// exp(−iHΔt)ψ via the eigendecomposition of the tridiagonal `h`.
pub fn step(h: &SymTridiagonal, psi: &WaveState, dt: f64) -> Result<WaveState> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be > 0, got {dt}")));
    }
    if psi.len() != h.dim() {
        return Err(Error::invalid("state and Hamiltonian dimensions differ"));
    }
    let mut out = psi.amplitudes.clone();
    EigenStep::new(h, dt)
        .map_err(|e| e.context(format!("step with dt = {dt}")))?
        .apply(&mut out, false);
    Ok(WaveState::new(out))
}

/// States ψ_0..ψ_M of one propagation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<WaveState>,
    pub protocol: ControlProtocol,
    /// Coupled window used by each bin (whole chain unless the scheme is windowed).
    pub windows: Vec<Window>,
}

impl Trajectory {
    pub fn final_state(&self) -> &WaveState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// ∂𝓘/∂X₀(t_k) for bins k = 1..=M.
#[derive(Clone, Debug, PartialEq)]
pub struct BinGradient {
    pub values: Vec<f64>,
}

impl BinGradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

// One bin's propagator, built once and used for forward, adjoint and tangent actions.
struct BinOperator {
    diagonal: Vec<f64>,
    dt: f64,
    window: Window,
    kernel: Kernel,
}

enum Kernel {
    Eigen(EigenStep),
    Chebyshev(Chebyshev),
}

impl BinOperator {
    fn apply(&self, psi: &mut [Complex64], adjoint: bool) {
        let Window { lo, hi } = self.window;
        match &self.kernel {
            Kernel::Eigen(e) => e.apply(psi, adjoint),
            Kernel::Chebyshev(c) => c.apply(&self.diagonal[lo..=hi], &mut psi[lo..=hi], adjoint),
        }
        let sign = if adjoint { 1.0 } else { -1.0 };
        for i in (0..lo).chain(hi + 1..psi.len()) {
            if psi[i] != Complex64::new(0.0, 0.0) {
                psi[i] *= Complex64::from_polar(1.0, sign * self.diagonal[i] * self.dt);
            }
        }
    }

    fn tangent(&self, slope: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
        let Window { lo, hi } = self.window;
        let mut out = match &self.kernel {
            Kernel::Eigen(e) => e.tangent(slope, psi),
            Kernel::Chebyshev(c) => {
                let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
                let inner = c.tangent(&self.diagonal[lo..=hi], &slope[lo..=hi], &psi[lo..=hi]);
                out[lo..=hi].copy_from_slice(&inner);
                out
            }
        };
        for i in (0..lo).chain(hi + 1..psi.len()) {
            if psi[i] != Complex64::new(0.0, 0.0) {
                let phase = Complex64::from_polar(1.0, -self.diagonal[i] * self.dt);
                out[i] = Complex64::new(0.0, -self.dt * slope[i]) * phase * psi[i];
            }
        }
        out
    }
}

/// One transfer problem: chain, task, optional frozen disorder and the packets at
/// both ends.
#[derive(Clone, Debug)]
pub struct TransferProblem {
    chain: ChainSpec,
    task: TransportTask,
    pattern: Option<DisorderPattern>,
    scheme: StepScheme,
    initial: WaveState,
    target: WaveState,
}

impl TransferProblem {
    pub fn new(chain: &ChainSpec, task: &TransportTask, pattern: Option<&DisorderPattern>) -> Result<Self> {
        chain.validate()?;
        task.validate(chain)?;
        if let Some(p) = pattern {
            if p.len() != chain.n_sites {
                return Err(Error::invalid(format!(
                    "disorder pattern has {} sites, chain has {}",
                    p.len(),
                    chain.n_sites
                )));
            }
        }
        Ok(TransferProblem {
            chain: chain.clone(),
            task: task.clone(),
            pattern: pattern.cloned(),
            scheme: StepScheme::default(),
            initial: gaussian_state(chain, task.x_start, task.packet_width)?,
            target: gaussian_state(chain, task.x_end, task.packet_width)?,
        })
    }

    pub fn with_scheme(mut self, scheme: StepScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn chain(&self) -> &ChainSpec {
        &self.chain
    }

    pub fn task(&self) -> &TransportTask {
        &self.task
    }

    pub fn pattern(&self) -> Option<&DisorderPattern> {
        self.pattern.as_ref()
    }

    pub fn scheme(&self) -> StepScheme {
        self.scheme
    }

    pub fn initial_state(&self) -> &WaveState {
        &self.initial
    }

    pub fn target_state(&self) -> &WaveState {
        &self.target
    }

    fn operator(&self, center: f64, dt: f64, window: Window) -> Result<BinOperator> {
        let mut diagonal = vec![0.0; self.chain.n_sites];
        let eps = self.pattern.as_ref().map(|p| p.epsilons.as_slice());
        fill_diagonal(&self.chain, center, eps, &mut diagonal);
        let kernel = match self.scheme {
            StepScheme::Eigen => {
                let h = SymTridiagonal {
                    diagonal: diagonal.clone(),
                    off_diagonal: vec![self.chain.coupling; self.chain.n_sites - 1],
                };
                Kernel::Eigen(EigenStep::new(&h, dt).map_err(|e| e.context(format!("bin at X0 = {center}")))?)
            }
            StepScheme::Chebyshev | StepScheme::WindowedChebyshev => Kernel::Chebyshev(Chebyshev::new(
                &diagonal[window.lo..=window.hi],
                self.chain.coupling,
                dt,
            )),
        };
        Ok(BinOperator {
            diagonal,
            dt,
            window,
            kernel,
        })
    }

    fn window_for(&self, psi: &[Complex64]) -> Window {
        match self.scheme {
            StepScheme::WindowedChebyshev => Window::around(psi),
            _ => Window::full(psi.len()),
        }
    }

    fn check(&self, protocol: &ControlProtocol, psi0: &WaveState) -> Result<()> {
        protocol.check_task(&self.task)?;
        if psi0.len() != self.chain.n_sites {
            return Err(Error::invalid("initial state length does not match chain"));
        }
        Ok(())
    }

    /// Propagates `psi0`, keeping every intermediate state.
    pub fn evolve_from(&self, protocol: &ControlProtocol, psi0: &WaveState) -> Result<Trajectory> {
        self.check(protocol, psi0)?;
        let dt = self.task.step_width();
        let mut states = Vec::with_capacity(protocol.samples.len());
        let mut windows = Vec::with_capacity(protocol.n_bins());
        states.push(psi0.clone());
        let mut psi = psi0.amplitudes.clone();
        for (k, &center) in protocol.bins().iter().enumerate() {
            let window = self.window_for(&psi);
            self.operator(center, dt, window)
                .map_err(|e| e.context(format!("bin {}", k + 1)))?
                .apply(&mut psi, false);
            windows.push(window);
            states.push(WaveState::new(psi.clone()));
        }
        Ok(Trajectory {
            states,
            protocol: protocol.clone(),
            windows,
        })
    }

    pub fn evolve(&self, protocol: &ControlProtocol) -> Result<Trajectory> {
        self.evolve_from(protocol, &self.initial)
    }

    /// ψ(τ) without storing the trajectory.
    pub fn final_state(&self, protocol: &ControlProtocol) -> Result<WaveState> {
        self.check(protocol, &self.initial)?;
        let dt = self.task.step_width();
        let mut psi = self.initial.amplitudes.clone();
        for (k, &center) in protocol.bins().iter().enumerate() {
            let window = self.window_for(&psi);
            self.operator(center, dt, window)
                .map_err(|e| e.context(format!("bin {}", k + 1)))?
                .apply(&mut psi, false);
        }
        Ok(WaveState::new(psi))
    }

    /// Applies the adjoint bins in reverse to the last state of `trajectory`.
    pub fn unevolve(&self, trajectory: &Trajectory) -> Result<WaveState> {
        let dt = self.task.step_width();
        let mut psi = trajectory.final_state().amplitudes.clone();
        for (center, window) in trajectory.protocol.bins().iter().zip(&trajectory.windows).rev() {
            self.operator(*center, dt, *window)?.apply(&mut psi, true);
        }
        Ok(WaveState::new(psi))
    }

    /// 𝓘 = 1 − |⟨ψ_B|ψ(τ)⟩|².
    pub fn infidelity(&self, protocol: &ControlProtocol) -> Result<f64> {
        let psi = self.final_state(protocol)?;
        Ok(infidelity_from_overlap(self.target.overlap(&psi)))
    }

    /// Infidelity and its exact gradient with respect to every bin position.
    pub fn infidelity_gradient(&self, protocol: &ControlProtocol) -> Result<(f64, BinGradient)> {
        let trajectory = self.evolve(protocol)?;
        let z = self.target.overlap(trajectory.final_state());
        let dt = self.task.step_width();
        let m = protocol.n_bins();
        let mut values = vec![0.0; m];
        let mut chi = self.target.amplitudes.clone();
        for k in (1..=m).rev() {
            let center = protocol.samples[k];
            let op = self
                .operator(center, dt, trajectory.windows[k - 1])
                .map_err(|e| e.context(format!("adjoint bin {k}")))?;
            let slope = trap_field_slope(&self.chain, center);
            let dpsi = op.tangent(&slope, &trajectory.states[k - 1].amplitudes);
            let dz: Complex64 = chi.iter().zip(&dpsi).map(|(c, d)| c.conj() * d).sum();
            values[k - 1] = -2.0 * (z.conj() * dz).re;
            op.apply(&mut chi, true);
        }
        if let Some(bad) = values.iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical(format!("non-finite gradient in bin {}", bad + 1)));
        }
        Ok((infidelity_from_overlap(z), BinGradient { values }))
    }
}

fn infidelity_from_overlap(z: Complex64) -> f64 {
    (1.0 - z.norm_sqr()).clamp(0.0, 1.0)
}

pub fn evolve(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    pattern: Option<&DisorderPattern>,
    psi0: &WaveState,
) -> Result<Trajectory> {
    TransferProblem::new(chain, task, pattern)?.evolve_from(protocol, psi0)
}

pub fn infidelity(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    pattern: Option<&DisorderPattern>,
) -> Result<f64> {
    TransferProblem::new(chain, task, pattern)?.infidelity(protocol)
}

pub fn infidelity_gradient(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    pattern: Option<&DisorderPattern>,
) -> Result<(f64, BinGradient)> {
    TransferProblem::new(chain, task, pattern)?.infidelity_gradient(protocol)
}

/// Disorder-averaged infidelity with the per-pattern values in pattern order.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleInfidelity {
    pub mean: f64,
    pub per_pattern: Vec<f64>,
}

impl EnsembleInfidelity {
    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        let n = self.per_pattern.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let var = self.per_pattern.iter().map(|x| (x - self.mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

fn map_patterns<T, F>(patterns: &[DisorderPattern], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DisorderPattern) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        patterns.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        patterns.iter().map(f).collect()
    }
}

/// Mean infidelity over `patterns`, reduced in pattern order so the result does
/// not depend on the number of worker threads.
pub fn ensemble_infidelity(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    patterns: &[DisorderPattern],
    scheme: StepScheme,
) -> Result<EnsembleInfidelity> {
    if patterns.is_empty() {
        return Err(Error::invalid("ensemble needs at least one disorder pattern"));
    }
    let per_pattern = map_patterns(patterns, |p| {
        TransferProblem::new(chain, task, Some(p))?
            .with_scheme(scheme)
            .infidelity(protocol)
    })?;
    let mean = per_pattern.iter().sum::<f64>() / per_pattern.len() as f64;
    Ok(EnsembleInfidelity { mean, per_pattern })
}

/// Mean infidelity and mean bin gradient over `patterns` (fixed-order reduction).
pub fn ensemble_gradient(
    chain: &ChainSpec,
    task: &TransportTask,
    protocol: &ControlProtocol,
    patterns: &[DisorderPattern],
    scheme: StepScheme,
) -> Result<(EnsembleInfidelity, BinGradient)> {
    if patterns.is_empty() {
        return Err(Error::invalid("ensemble needs at least one disorder pattern"));
    }
    let results = map_patterns(patterns, |p| {
        TransferProblem::new(chain, task, Some(p))?
            .with_scheme(scheme)
            .infidelity_gradient(protocol)
    })?;
    let n = results.len() as f64;
    let mut values = vec![0.0; protocol.n_bins()];
    let mut per_pattern = Vec::with_capacity(results.len());
    for (inf, grad) in &results {
        per_pattern.push(*inf);
        for (acc, g) in values.iter_mut().zip(&grad.values) {
            *acc += g;
        }
    }
    values.iter_mut().for_each(|g| *g /= n);
    let mean = per_pattern.iter().sum::<f64>() / n;
    Ok((EnsembleInfidelity { mean, per_pattern }, BinGradient { values }))
}
