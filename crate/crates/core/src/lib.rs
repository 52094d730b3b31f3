//! Control-pulse design for moving a single spin excitation (a magnon) along a
//! Heisenberg chain with a parabolic trap.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] builds the single-excitation Hamiltonian, trap fields, disorder
//!   patterns and Gaussian packets.
//! * [`dynamics`] propagates packets under piecewise-constant trap positions and
//!   computes exact adjoint gradients of the transfer infidelity.
//! * [`protocols`] lowers the pulse ansatzes (linear, free bins, shortcut to
//!   adiabaticity, Fourier) onto the time grid together with their Jacobians.
//! * [`optimize`] runs gradient descent / ADAM for clean, fixed-disorder and
//!   batched disorder-ensemble objectives.
//! * [`analysis`] covers localization lengths, speed-limit scans and spectral
//!   analysis of optimized protocols.

pub mod analysis;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod protocols;

pub use error::{Error, Result};
pub use model::{ChainSpec, DisorderPattern, SymTridiagonal, TransportTask, WaveState};
pub use protocols::ControlProtocol;

/// Reference velocity used only for plot annotations: the Lieb-Robinson bound in units of J.
pub const LIEB_ROBINSON_VELOCITY: f64 = 6.0;
