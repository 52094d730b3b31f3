//! Brute-force many-body construction used to check the single-excitation model.

use nalgebra::DMatrix;

use super::ChainSpec;
use crate::{Error, Result};

/// Exponential construction guard.
pub const ORACLE_MAX_SITES: usize = 8;

fn guard(chain: &ChainSpec, fields: &[f64]) -> Result<()> {
    if chain.n_sites > ORACLE_MAX_SITES {
        return Err(Error::invalid(format!(
            "full-space oracle refused for N = {} > {ORACLE_MAX_SITES}",
            chain.n_sites
        )));
    }
    if fields.len() != chain.n_sites {
        return Err(Error::invalid("field length does not match chain"));
    }
    Ok(())
}

/// The 2^N Heisenberg Hamiltonian −(J/2) Σ σᵢ·σᵢ₊₁ + Σ Bᵢ σᶻᵢ with open ends.
///
/// Basis index bit `i` set means site `i + 1` is up (σᶻ = +1).
pub fn full_hamiltonian(chain: &ChainSpec, fields: &[f64]) -> Result<DMatrix<f64>> {
    guard(chain, fields)?;
    let n = chain.n_sites;
    let j = chain.coupling;
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    let spin = |state: usize, i: usize| if state >> i & 1 == 1 { 1.0 } else { -1.0 };
    for state in 0..dim {
        let mut diag = 0.0;
        for (i, b) in fields.iter().enumerate() {
            diag += b * spin(state, i);
        }
        for i in 0..n - 1 {
            let zz = spin(state, i) * spin(state, i + 1);
            diag -= 0.5 * j * zz;
            if zz < 0.0 {
                // σˣσˣ + σʸσʸ = 2(σ⁺σ⁻ + σ⁻σ⁺) swaps the antiparallel pair
                let flipped = state ^ (0b11 << i);
                h[(flipped, state)] -= j;
            }
        }
        h[(state, state)] = diag;
    }
    Ok(h)
}

/// Total S_z = Σ σᶻᵢ, diagonal in the computational basis.
pub fn total_sz(n_sites: usize) -> DMatrix<f64> {
    let dim = 1usize << n_sites;
    DMatrix::from_fn(dim, dim, |r, c| {
        if r == c {
            let up = r.count_ones() as f64;
            2.0 * up - n_sites as f64
        } else {
            0.0
        }
    })
}

/// Single-excitation block of [`full_hamiltonian`], ordered by excitation site.
pub fn oracle_full_projection(chain: &ChainSpec, fields: &[f64]) -> Result<DMatrix<f64>> {
    let full = full_hamiltonian(chain, fields)?;
    let n = chain.n_sites;
    Ok(DMatrix::from_fn(n, n, |a, b| full[(1 << a, 1 << b)]))
}
