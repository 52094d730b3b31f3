//! Static description of the chain: couplings, trap fields, disorder and packets.

mod oracle;

pub use oracle::{full_hamiltonian, oracle_full_projection, total_sz, ORACLE_MAX_SITES};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Static chain parameters. Site labels run from 1 to `n_sites`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n_sites: usize,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_trap_frequency")]
    pub trap_frequency: f64,
    #[serde(default = "default_lattice_spacing")]
    pub lattice_spacing: f64,
}

fn default_coupling() -> f64 {
    1.0
}

fn default_trap_frequency() -> f64 {
    0.5
}

fn default_lattice_spacing() -> f64 {
    1.0
}

impl ChainSpec {
    pub fn new(n_sites: usize, coupling: f64, trap_frequency: f64) -> Result<Self> {
        let chain = ChainSpec {
            n_sites,
            coupling,
            trap_frequency,
            lattice_spacing: 1.0,
        };
        chain.validate()?;
        Ok(chain)
    }

    /// The 251-site, J = 1, ω₀ = 0.5 chain used throughout the experiments.
    pub fn standard() -> Self {
        ChainSpec::new(251, 1.0, 0.5).expect("standard chain is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 3 {
            return Err(Error::invalid(format!("n_sites must be >= 3, got {}", self.n_sites)));
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(Error::invalid(format!("coupling must be > 0, got {}", self.coupling)));
        }
        if !(self.trap_frequency > 0.0 && self.trap_frequency.is_finite()) {
            return Err(Error::invalid(format!(
                "trap_frequency must be > 0, got {}",
                self.trap_frequency
            )));
        }
        if self.lattice_spacing != 1.0 {
            return Err(Error::invalid(format!(
                "lattice_spacing is fixed to 1, got {}",
                self.lattice_spacing
            )));
        }
        Ok(())
    }

    /// ω₀²/4J, the curvature of the parabolic field.
    pub fn trap_curvature(&self) -> f64 {
        self.trap_frequency * self.trap_frequency / (4.0 * self.coupling)
    }

    /// Ground-state width √(2J/ω₀) of the continuum trap with effective mass 1/2J.
    pub fn default_packet_width(&self) -> f64 {
        (2.0 * self.coupling / self.trap_frequency).sqrt()
    }

    /// Mirror image of a position under n → N + 1 − n.
    pub fn mirror(&self, x: f64) -> f64 {
        (self.n_sites + 1) as f64 - x
    }
}

/// One frozen realization of on-site disorder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderPattern {
    pub epsilons: Vec<f64>,
    pub magnitude: f64,
    pub seed: u64,
}

impl DisorderPattern {
    pub fn clean(n_sites: usize) -> Self {
        DisorderPattern {
            epsilons: vec![0.0; n_sites],
            magnitude: 0.0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }

    /// Pattern seen from the other end of the chain.
    pub fn reversed(&self) -> Self {
        let mut epsilons = self.epsilons.clone();
        epsilons.reverse();
        DisorderPattern {
            epsilons,
            magnitude: self.magnitude,
            seed: self.seed,
        }
    }
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The `index`-th output word (0-based) of a SplitMix64 stream started at `seed`.
///
/// The stream is indexable, so site `i` gets the same word regardless of how many
/// sites are requested.
pub fn splitmix64_word(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(SPLITMIX_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a 64-bit word onto [0, 1) using its top 53 bits.
pub fn unit_interval(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws ε_i uniform on [−Δ, Δ] for every site from the seeded stream.
pub fn sample_disorder(chain: &ChainSpec, magnitude: f64, seed: u64) -> Result<DisorderPattern> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::invalid(format!("disorder magnitude must be >= 0, got {magnitude}")));
    }
    let epsilons = (0..chain.n_sites as u64)
        .map(|i| magnitude * (2.0 * unit_interval(splitmix64_word(seed, i)) - 1.0))
        .collect();
    Ok(DisorderPattern {
        epsilons,
        magnitude,
        seed,
    })
}

/// Geometry and timing of one transfer: move a packet of width σ from x_A to x_B in time τ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportTask {
    pub x_start: f64,
    pub x_end: f64,
    pub duration: f64,
    pub packet_width: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
}

fn default_bin_width() -> f64 {
    0.1
}

impl TransportTask {
    /// Transfer over `distance` sites centred in the chain, with the default packet width
    /// and Δt = 0.1. The window is symmetric under n → N + 1 − n.
    pub fn centered(chain: &ChainSpec, distance: f64, duration: f64) -> Result<Self> {
        let x_start = ((chain.n_sites + 1) as f64 - distance) / 2.0;
        let task = TransportTask {
            x_start,
            x_end: x_start + distance,
            duration,
            packet_width: chain.default_packet_width(),
            bin_width: default_bin_width(),
        };
        task.validate(chain)?;
        Ok(task)
    }

    pub fn validate(&self, chain: &ChainSpec) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.packet_width > 0.0 && self.packet_width.is_finite()) {
            return Err(Error::invalid(format!(
                "packet_width must be > 0, got {}",
                self.packet_width
            )));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::invalid(format!("bin_width must be > 0, got {}", self.bin_width)));
        }
        let top = chain.n_sites as f64;
        for (name, x) in [("x_start", self.x_start), ("x_end", self.x_end)] {
            if !(1.0..=top).contains(&x) {
                return Err(Error::invalid(format!("{name} = {x} outside [1, {top}]")));
            }
        }
        Ok(())
    }

    pub fn distance(&self) -> f64 {
        self.x_end - self.x_start
    }

    /// Number of piecewise-constant bins, M = round(τ/Δt).
    pub fn n_bins(&self) -> usize {
        (self.duration / self.bin_width).round() as usize
    }

    /// Width of one bin as actually propagated (τ/M, so the bins tile [0, τ] exactly).
    pub fn step_width(&self) -> f64 {
        match self.n_bins() {
            0 => self.bin_width,
            m => self.duration / m as f64,
        }
    }

    /// The same transfer seen in the mirrored chain (start and end swap sides).
    pub fn mirrored(&self, chain: &ChainSpec) -> Self {
        TransportTask {
            x_start: chain.mirror(self.x_start),
            x_end: chain.mirror(self.x_end),
            ..self.clone()
        }
    }
}

/// Complex amplitudes over the N single-excitation basis states |n⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub amplitudes: Vec<Complex64>,
}

impl WaveState {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        WaveState { amplitudes }
    }

    /// Excitation localized on a single site (1-based label).
    pub fn site(n_sites: usize, site: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n_sites];
        amplitudes[site - 1] = Complex64::new(1.0, 0.0);
        WaveState { amplitudes }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &WaveState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// ⟨n⟩ = Σ n |c_n|² with 1-based site labels.
    pub fn mean_position(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| (i + 1) as f64 * a.norm_sqr())
            .sum::<f64>()
            / self.norm().powi(2)
    }

    pub fn normalize(&mut self) {
        let norm = self.norm();
        for a in &mut self.amplitudes {
            *a /= norm;
        }
    }

    /// Relabels n → N + 1 − n.
    pub fn mirrored(&self) -> Self {
        let mut amplitudes = self.amplitudes.clone();
        amplitudes.reverse();
        WaveState { amplitudes }
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiagonal {
    pub diagonal: Vec<f64>,
    pub off_diagonal: Vec<f64>,
}

impl SymTridiagonal {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal[i];
        }
        for (i, &t) in self.off_diagonal.iter().enumerate() {
            m[(i, i + 1)] = t;
            m[(i + 1, i)] = t;
        }
        m
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut acc = v[i] * self.diagonal[i];
                if i > 0 {
                    acc += v[i - 1] * self.off_diagonal[i - 1];
                }
                if i + 1 < n {
                    acc += v[i + 1] * self.off_diagonal[i];
                }
                acc
            })
            .collect()
    }

    /// ⟨φ|H|φ⟩ for a real-or-complex vector.
    pub fn expectation(&self, v: &[Complex64]) -> f64 {
        self.apply(v)
            .iter()
            .zip(v)
            .map(|(hv, x)| (x.conj() * hv).re)
            .sum()
    }
}

/// Parabolic trap B_n = −(ω₀²/4J)(n − X₀)² for n = 1..N.
pub fn trap_field(chain: &ChainSpec, center: f64) -> Vec<f64> {
    let curvature = chain.trap_curvature();
    (1..=chain.n_sites)
        .map(|n| {
            let r = n as f64 - center;
            -curvature * r * r
        })
        .collect()
}

/// ∂B_n/∂X₀ = (ω₀²/2J)(n − X₀).
pub fn trap_field_slope(chain: &ChainSpec, center: f64) -> Vec<f64> {
    let slope = 2.0 * chain.trap_curvature();
    (1..=chain.n_sites).map(|n| slope * (n as f64 - center)).collect()
}

/// Single-excitation Hamiltonian for arbitrary on-site fields B_n:
/// diagonal B_n − 2J (+J on the two end sites), uniform hopping J.
pub fn hamiltonian_from_fields(chain: &ChainSpec, fields: &[f64]) -> Result<SymTridiagonal> {
    if fields.len() != chain.n_sites {
        return Err(Error::invalid(format!(
            "field length {} does not match chain length {}",
            fields.len(),
            chain.n_sites
        )));
    }
    let j = chain.coupling;
    let mut diagonal: Vec<f64> = fields.iter().map(|b| b - 2.0 * j).collect();
    diagonal[0] += j;
    diagonal[chain.n_sites - 1] += j;
    Ok(SymTridiagonal {
        diagonal,
        off_diagonal: vec![j; chain.n_sites - 1],
    })
}

/// Hamiltonian with the trap centred at `center` and optional static disorder.
pub fn hamiltonian(
    chain: &ChainSpec,
    center: f64,
    pattern: Option<&DisorderPattern>,
) -> Result<SymTridiagonal> {
    let mut fields = trap_field(chain, center);
    if let Some(p) = pattern {
        if p.len() != chain.n_sites {
            return Err(Error::invalid(format!(
                "disorder pattern has {} sites, chain has {}",
                p.len(),
                chain.n_sites
            )));
        }
        for (b, e) in fields.iter_mut().zip(&p.epsilons) {
            *b += e;
        }
    }
    hamiltonian_from_fields(chain, &fields)
}

/// Writes the Hamiltonian diagonal at trap position `center` into `out`.
///
/// Hot-path twin of [`hamiltonian`]; both produce bit-identical diagonals.
pub(crate) fn fill_diagonal(chain: &ChainSpec, center: f64, epsilons: Option<&[f64]>, out: &mut [f64]) {
    let curvature = chain.trap_curvature();
    let j = chain.coupling;
    for (i, d) in out.iter_mut().enumerate() {
        let r = (i + 1) as f64 - center;
        let mut b = -curvature * r * r;
        if let Some(eps) = epsilons {
            b += eps[i];
        }
        *d = b - 2.0 * j;
    }
    out[0] += j;
    let last = out.len() - 1;
    out[last] += j;
}

/// Normalized Gaussian packet c_n ∝ exp(−(n − x)²/2σ²).
pub fn gaussian_state(chain: &ChainSpec, center: f64, width: f64) -> Result<WaveState> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::invalid(format!("packet width must be > 0, got {width}")));
    }
    let raw: Vec<f64> = (1..=chain.n_sites)
        .map(|n| {
            let r = n as f64 - center;
            (-r * r / (2.0 * width * width)).exp()
        })
        .collect();
    let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid(format!(
            "packet at {center} with width {width} has no weight on the chain"
        )));
    }
    Ok(WaveState {
        amplitudes: raw.into_iter().map(|c| Complex64::new(c / norm, 0.0)).collect(),
    })
}
