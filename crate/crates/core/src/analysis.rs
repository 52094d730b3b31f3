//! Post-processing: ground-state localization, speed-limit grids and the
//! dominant frequency of a protocol.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::dynamics::infidelity;
use crate::linalg::lowest_eigenpair;
use crate::model::{hamiltonian_from_fields, sample_disorder, ChainSpec, SymTridiagonal, TransportTask, WaveState};
use crate::optimize::{optimize_clean, OptimizerConfig};
use crate::protocols::{sta_reference, velocity, Ansatz, ControlProtocol, StaVariant};
use crate::{Error, Result};

/// Lowest eigenpair, normalized, largest-magnitude component positive.
pub fn ground_state(h: &SymTridiagonal) -> Result<(f64, WaveState)> {
    let (energy, v) = lowest_eigenpair(h)?;
    Ok((energy, WaveState::new(v.into_iter().map(|x| x.into()).collect())))
}

/// Disorder-averaged ground-state amplitude |ψ|, each realization shifted so that
/// its peak sits on the central site (index ⌊N/2⌋, zero-based) before averaging.
///
/// The field is the disorder alone: B_n = ε_n. Realization i uses seed `base_seed + i`.
pub fn averaged_ground_amplitude(
    chain: &ChainSpec,
    magnitude: f64,
    n_realizations: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    chain.validate()?;
    if n_realizations == 0 {
        return Err(Error::invalid("need at least one disorder realization"));
    }
    let n = chain.n_sites;
    let center = n / 2;
    let one = |i: usize| -> Result<Vec<f64>> {
        let pattern = sample_disorder(chain, magnitude, base_seed.wrapping_add(i as u64))?;
        let h = hamiltonian_from_fields(chain, &pattern.epsilons)?;
        let (_, psi) = ground_state(&h)?;
        let amp: Vec<f64> = psi.amplitudes.iter().map(|a| a.norm()).collect();
        let peak = argmax(&amp);
        let mut shifted = vec![0.0; n];
        for (k, a) in amp.iter().enumerate() {
            let target = k as isize + center as isize - peak as isize;
            if (0..n as isize).contains(&target) {
                shifted[target as usize] = *a;
            }
        }
        Ok(shifted)
    };
    #[cfg(feature = "parallel")]
    let profiles: Vec<Vec<f64>> = (0..n_realizations).into_par_iter().map(one).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let profiles: Vec<Vec<f64>> = (0..n_realizations).map(one).collect::<Result<_>>()?;
    let mut mean = vec![0.0; n];
    for p in &profiles {
        for (m, a) in mean.iter_mut().zip(p) {
            *m += a;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_realizations as f64);
    Ok(mean)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Least-squares fit of log p(x) = a − |x − x₀|/ξ with x₀ at the peak.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceFit {
    pub xi: f64,
    /// Zero-based index of the peak.
    pub peak: usize,
    /// Fitted log-amplitude a.
    pub log_amplitude: f64,
    /// RMS residual of the log profile over the fitted points.
    pub residual: f64,
    pub n_points: usize,
}

/// Points below 10⁻³ of the peak are excluded; at least five must remain.
pub fn fit_localization_length(profile: &[f64]) -> Result<LaplaceFit> {
    if profile.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("profile contains non-finite values"));
    }
    let peak = argmax(profile);
    let top = profile.get(peak).copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::invalid("profile has no positive peak"));
    }
    let points: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= 1e-3 * top)
        .map(|(i, &p)| ((i as f64 - peak as f64).abs(), p.ln()))
        .collect();
    if points.len() < 5 {
        return Err(Error::invalid(format!(
            "only {} usable profile points, need at least 5",
            points.len()
        )));
    }
    let (intercept, slope) = linear_fit(&points)?;
    if !(slope < 0.0) {
        return Err(Error::numerical(format!("profile does not decay (log slope {slope:.3e})")));
    }
    let residual = (points
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(LaplaceFit {
        xi: -1.0 / slope,
        peak,
        log_amplitude: intercept,
        residual,
        n_points: points.len(),
    })
}

/// Ordinary least squares y = a + b x; returns (a, b).
fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("fit abscissae are all equal"));
    }
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// Averaged profile at one disorder magnitude together with its Laplace fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub magnitude: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
    pub profile: Vec<f64>,
    pub xi: f64,
    pub fit_residual: f64,
}

pub fn localization(chain: &ChainSpec, magnitude: f64, n_realizations: usize, base_seed: u64) -> Result<LocalizationResult> {
    let profile = averaged_ground_amplitude(chain, magnitude, n_realizations, base_seed)?;
    let fit = fit_localization_length(&profile).map_err(|e| e.context(format!("Δ = {magnitude}")))?;
    Ok(LocalizationResult {
        magnitude,
        n_realizations,
        base_seed,
        profile,
        xi: fit.xi,
        fit_residual: fit.residual,
    })
}

/// y ≈ c xᵖ fitted in log-log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLaw> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("power-law fit needs at least two (x, y) pairs"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("power-law fit needs positive data"));
    }
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let (a, b) = linear_fit(&pts)?;
    Ok(PowerLaw {
        exponent: b,
        prefactor: a.exp(),
        r_squared: r_squared(&pts, |u| a + b * u),
    })
}

/// y ≈ a x² through the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub coefficient: f64,
    pub r_squared: f64,
}

/// R² is measured against the mean of y.
pub fn fit_quadratic(x: &[f64], y: &[f64]) -> Result<QuadraticFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("quadratic fit needs at least two (x, y) pairs"));
    }
    let sx4: f64 = x.iter().map(|v| v.powi(4)).sum();
    if !(sx4 > 0.0) {
        return Err(Error::invalid("quadratic fit needs a nonzero abscissa"));
    }
    let a = x.iter().zip(y).map(|(u, v)| u * u * v).sum::<f64>() / sx4;
    let pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    Ok(QuadraticFit {
        coefficient: a,
        r_squared: r_squared(&pts, |u| a * u * u),
    })
}

fn r_squared(points: &[(f64, f64)], model: impl Fn(f64) -> f64) -> f64 {
    let n = points.len() as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - model(p.0)).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Where the protocols of a speed-limit scan come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSource {
    StaReference {
        #[serde(default)]
        variant: StaVariant,
    },
    FourierOptimized {
        #[serde(default = "default_speed_cutoff")]
        cutoff: usize,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
}

fn default_speed_cutoff() -> usize {
    50
}

impl ProtocolSource {
    /// Fourier ansatz with 50 coefficients and ADAM for 500 steps.
    pub fn fourier_default() -> Self {
        ProtocolSource::FourierOptimized {
            cutoff: default_speed_cutoff(),
            optimizer: OptimizerConfig::adam(0.01),
        }
    }

    /// Fidelity 1 − 𝓘 achieved for the centered task (d, τ).
    pub fn fidelity(&self, chain: &ChainSpec, distance: f64, duration: f64) -> Result<f64> {
        let task = TransportTask::centered(chain, distance, duration)?;
        let protocol = self.protocol(chain, &task)?;
        Ok(1.0 - infidelity(chain, &task, &protocol, None)?)
    }

    pub fn protocol(&self, chain: &ChainSpec, task: &TransportTask) -> Result<ControlProtocol> {
        match self {
            ProtocolSource::StaReference { variant } => Ok(sta_reference(task, chain, *variant)),
            ProtocolSource::FourierOptimized { cutoff, optimizer } => {
                let ansatz = Ansatz::Fourier { cutoff: *cutoff };
                Ok(optimize_clean(chain, task, &ansatz, optimizer)?.final_protocol)
            }
        }
    }
}

/// Fidelity over a (d, τ) grid; `fidelity[i][j]` belongs to `distances[i]`, `durations[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimitGrid {
    pub distances: Vec<f64>,
    pub durations: Vec<f64>,
    pub fidelity: Vec<Vec<f64>>,
    /// First τ (linear interpolation) at which 𝓕 rises through 0.5, per distance.
    pub contour_tau_half: Vec<Option<f64>>,
}

pub fn speed_limit_scan(
    chain: &ChainSpec,
    source: &ProtocolSource,
    distances: &[f64],
    durations: &[f64],
) -> Result<SpeedLimitGrid> {
    if distances.is_empty() || durations.is_empty() {
        return Err(Error::invalid("speed-limit scan needs at least one distance and one duration"));
    }
    let cells: Vec<(f64, f64)> = distances
        .iter()
        .flat_map(|&d| durations.iter().map(move |&t| (d, t)))
        .collect();
    let eval = |&(d, t): &(f64, f64)| {
        source
            .fidelity(chain, d, t)
            .map_err(|e| e.context(format!("d = {d}, τ = {t}")))
    };
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = cells.par_iter().map(eval).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = cells.iter().map(eval).collect::<Result<_>>()?;
    let fidelity: Vec<Vec<f64>> = values.chunks(durations.len()).map(|r| r.to_vec()).collect();
    let contour_tau_half = fidelity.iter().map(|row| half_crossing(durations, row)).collect();
    Ok(SpeedLimitGrid {
        distances: distances.to_vec(),
        durations: durations.to_vec(),
        fidelity,
        contour_tau_half,
    })
}

fn half_crossing(taus: &[f64], f: &[f64]) -> Option<f64> {
    if f.first().is_some_and(|&v| v >= 0.5) {
        return Some(taus[0]);
    }
    for k in 1..f.len() {
        if f[k - 1] < 0.5 && f[k] >= 0.5 {
            let w = (0.5 - f[k - 1]) / (f[k] - f[k - 1]);
            return Some(taus[k - 1] + w * (taus[k] - taus[k - 1]));
        }
    }
    None
}

/// Angular frequency of the strongest non-zero DFT component of the mean-subtracted
/// velocity, refined by a parabola through the peak bin and its neighbours.
///
/// Returns [`Error::NoPeak`] when the velocity is constant.
pub fn protocol_peak_frequency(protocol: &ControlProtocol) -> Result<f64> {
    if protocol.n_bins() < 8 {
        return Err(Error::invalid("peak frequency needs at least 8 bins"));
    }
    peak_frequency(&velocity(protocol)?, protocol.bin_width)
}

/// One-sided DFT magnitudes of the mean-subtracted `signal` as (ω, |X(ω)|) for
/// bins 0..=M/2, with ω = 2πk/(M dt).
pub fn amplitude_spectrum(signal: &[f64], dt: f64) -> Result<Vec<(f64, f64)>> {
    let m = signal.len();
    if m == 0 || !(dt > 0.0) {
        return Err(Error::invalid("spectrum needs samples and a positive spacing"));
    }
    let mean = signal.iter().sum::<f64>() / m as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let step = 2.0 * std::f64::consts::PI / (m as f64 * dt);
    Ok(buf[..=m / 2].iter().enumerate().map(|(k, c)| (k as f64 * step, c.norm())).collect())
}

/// [`protocol_peak_frequency`] for a raw signal sampled every `dt`.
pub fn peak_frequency(signal: &[f64], dt: f64) -> Result<f64> {
    let m = signal.len();
    if m < 8 {
        return Err(Error::invalid("peak frequency needs at least 8 samples"));
    }
    let mean = signal.iter().sum::<f64>() / m as f64;
    let scale = signal.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if signal.iter().all(|v| (v - mean).abs() <= 1e-12 * scale) {
        return Err(Error::NoPeak("signal is constant".into()));
    }
    let mag: Vec<f64> = amplitude_spectrum(signal, dt)?.into_iter().map(|(_, a)| a).collect();
    let half = m / 2;
    let mut k = 1;
    for i in 2..=half {
        if mag[i] > mag[k] {
            k = i;
        }
    }
    let mut offset = 0.0;
    if k > 1 && k < half {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(2.0 * std::f64::consts::PI * (k as f64 + offset) / (m as f64 * dt))
}
