//! Single-bin propagators exp(∓iHΔt) for the single-excitation Hamiltonian and
//! their exact derivatives with respect to the trap position.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{bessel_j_sequence, gershgorin_bounds, tridiagonal_eigen};
use crate::model::SymTridiagonal;
use crate::Result;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Amplitudes below this magnitude count as outside the packet support.
pub const WINDOW_AMPLITUDE_CUTOFF: f64 = 1e-15;
/// Extra sites kept on each side of the packet support.
pub const WINDOW_MARGIN: usize = 8;
/// Chebyshev terms are kept while |J_k(z)| exceeds this (for k beyond z).
const CHEBYSHEV_TOLERANCE: f64 = 1e-20;

/// How each piecewise-constant bin is exponentiated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepScheme {
    /// Dense eigendecomposition of the tridiagonal Hamiltonian per bin (O(N³)).
    Eigen,
    /// Chebyshev expansion of the exponential on the whole chain.
    Chebyshev,
    /// Chebyshev expansion restricted to the packet support plus a margin. Sites
    /// outside the window only pick up their diagonal phase, so each step is
    /// still exactly unitary.
    #[default]
    WindowedChebyshev,
}

/// Inclusive range of 0-based sites propagated with the full coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
}

impl Window {
    pub fn full(n: usize) -> Self {
        Window { lo: 0, hi: n - 1 }
    }

    pub fn len(&self) -> usize {
        self.hi + 1 - self.lo
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Support of `psi` (amplitudes above the cutoff) widened by the margin.
    pub fn around(psi: &[Complex64]) -> Self {
        let n = psi.len();
        let cut = WINDOW_AMPLITUDE_CUTOFF * WINDOW_AMPLITUDE_CUTOFF;
        let first = psi.iter().position(|a| a.norm_sqr() > cut);
        let last = psi.iter().rposition(|a| a.norm_sqr() > cut);
        match (first, last) {
            (Some(f), Some(l)) => Window {
                lo: f.saturating_sub(WINDOW_MARGIN),
                hi: (l + WINDOW_MARGIN).min(n - 1),
            },
            _ => Window::full(n),
        }
    }
}

/// exp(−iHΔt)ψ, or exp(+iHΔt)ψ when `adjoint`, by Chebyshev expansion of a
/// uniform-hopping tridiagonal block.
pub(crate) struct Chebyshev {
    center: f64,
    radius: f64,
    hopping: f64,
    /// Weights J_k(RΔt), with the factor 2 folded in for k ≥ 1.
    weights: Vec<f64>,
    dt: f64,
}

impl Chebyshev {
    pub(crate) fn new(diagonal: &[f64], hopping: f64, dt: f64) -> Self {
        let off = vec![hopping; diagonal.len().saturating_sub(1)];
        let (lo, hi) = gershgorin_bounds(diagonal, &off);
        let center = 0.5 * (lo + hi);
        let radius = (0.5 * (hi - lo)).max(1e-300);
        let z = radius * dt;
        let kmax = (z + 10.0 * z.cbrt() + 30.0).ceil() as usize;
        let mut weights = bessel_j_sequence(z, kmax);
        let mut keep = weights.len();
        while keep > 1 && (keep - 1) as f64 > z && weights[keep - 1].abs() < CHEBYSHEV_TOLERANCE {
            keep -= 1;
        }
        weights.truncate(keep);
        for w in weights.iter_mut().skip(1) {
            *w *= 2.0;
        }
        Chebyshev {
            center,
            radius,
            hopping,
            weights,
            dt,
        }
    }

    #[cfg(test)]
    pub(crate) fn n_terms(&self) -> usize {
        self.weights.len()
    }

    // out = (H − c)/R · v
    fn scaled_apply(&self, diagonal: &[f64], v: &[Complex64], out: &mut [Complex64]) {
        let n = v.len();
        let inv = 1.0 / self.radius;
        let t = self.hopping * inv;
        for i in 0..n {
            let mut acc = v[i] * ((diagonal[i] - self.center) * inv);
            if i > 0 {
                acc += v[i - 1] * t;
            }
            if i + 1 < n {
                acc += v[i + 1] * t;
            }
            out[i] = acc;
        }
    }

    fn phase(&self, adjoint: bool) -> (Complex64, Complex64) {
        // (global phase e^{∓icΔt}, per-order factor ∓i)
        let s = if adjoint { 1.0 } else { -1.0 };
        (
            Complex64::from_polar(1.0, s * self.center * self.dt),
            Complex64::new(0.0, s),
        )
    }

    /// Applies the propagator in place.
    pub(crate) fn apply(&self, diagonal: &[f64], psi: &mut [Complex64], adjoint: bool) {
        let n = psi.len();
        let (global, unit) = self.phase(adjoint);
        let mut prev = psi.to_vec();
        let mut cur = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        let mut acc: Vec<Complex64> = prev.iter().map(|v| v * self.weights[0]).collect();
        let mut factor = Complex64::new(1.0, 0.0);
        for k in 1..self.weights.len() {
            if k == 1 {
                self.scaled_apply(diagonal, &prev, &mut cur);
            } else {
                self.scaled_apply(diagonal, &cur, &mut next);
                for (x, p) in next.iter_mut().zip(&prev) {
                    *x = 2.0 * *x - p;
                }
                std::mem::swap(&mut prev, &mut cur);
                std::mem::swap(&mut cur, &mut next);
            }
            factor *= unit;
            let w = factor * self.weights[k];
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += w * c;
            }
        }
        for (p, a) in psi.iter_mut().zip(&acc) {
            *p = global * a;
        }
    }

    /// ∂/∂X₀ exp(−iHΔt) ψ for a diagonal perturbation with entries `slope`,
    /// by differentiating the Chebyshev recurrence. Centre and radius are held
    /// fixed, which leaves the exponential itself unchanged.
    pub(crate) fn tangent(&self, diagonal: &[f64], slope: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        let (global, unit) = self.phase(false);
        let inv = 1.0 / self.radius;
        // value recurrence v_k = T_k(H̃)ψ and tangent recurrence w_k = dT_k ψ
        let mut v_prev = psi.to_vec();
        let mut v_cur = vec![ZERO; n];
        let mut v_next = vec![ZERO; n];
        let mut w_prev = vec![ZERO; n];
        let mut w_cur = vec![ZERO; n];
        let mut w_next = vec![ZERO; n];
        let mut acc = vec![ZERO; n];
        let mut factor = Complex64::new(1.0, 0.0);
        for k in 1..self.weights.len() {
            if k == 1 {
                self.scaled_apply(diagonal, &v_prev, &mut v_cur);
                for i in 0..n {
                    w_cur[i] = v_prev[i] * (slope[i] * inv);
                }
            } else {
                self.scaled_apply(diagonal, &w_cur, &mut w_next);
                for i in 0..n {
                    w_next[i] = 2.0 * (w_next[i] + v_cur[i] * (slope[i] * inv)) - w_prev[i];
                }
                self.scaled_apply(diagonal, &v_cur, &mut v_next);
                for (x, p) in v_next.iter_mut().zip(&v_prev) {
                    *x = 2.0 * *x - p;
                }
                std::mem::swap(&mut v_prev, &mut v_cur);
                std::mem::swap(&mut v_cur, &mut v_next);
                std::mem::swap(&mut w_prev, &mut w_cur);
                std::mem::swap(&mut w_cur, &mut w_next);
            }
            factor *= unit;
            let w = factor * self.weights[k];
            for (a, c) in acc.iter_mut().zip(&w_cur) {
                *a += w * c;
            }
        }
        acc.iter_mut().for_each(|a| *a *= global);
        acc
    }
}

/// Eigendecomposition H = V Λ Vᵀ of one bin's Hamiltonian.
pub(crate) struct EigenStep {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    dt: f64,
}

impl EigenStep {
    pub(crate) fn new(h: &SymTridiagonal, dt: f64) -> Result<Self> {
        let eig = tridiagonal_eigen(h)?;
        Ok(EigenStep {
            values: eig.values,
            vectors: eig.vectors,
            dt,
        })
    }

    fn to_eigenbasis(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let col = self.vectors.column(i);
                (0..n).map(|r| v[r] * col[r]).sum()
            })
            .collect()
    }

    fn from_eigenbasis(&self, a: &[Complex64]) -> Vec<Complex64> {
        let n = a.len();
        let mut out = vec![ZERO; n];
        for (i, ai) in a.iter().enumerate() {
            let col = self.vectors.column(i);
            for r in 0..n {
                out[r] += ai * col[r];
            }
        }
        out
    }

    pub(crate) fn apply(&self, psi: &mut [Complex64], adjoint: bool) {
        let s = if adjoint { 1.0 } else { -1.0 };
        let mut a = self.to_eigenbasis(psi);
        for (ai, &l) in a.iter_mut().zip(&self.values) {
            *ai *= Complex64::from_polar(1.0, s * l * self.dt);
        }
        psi.copy_from_slice(&self.from_eigenbasis(&a));
    }

    /// Fréchet derivative V (Γ ∘ VᵀDV) Vᵀ ψ with
    /// Γ_ij = (e^{−iλ_iΔt} − e^{−iλ_jΔt})/(λ_i − λ_j).
    pub(crate) fn tangent(&self, slope: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        let dt = self.dt;
        let scale = self.values.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1.0);
        let exps: Vec<Complex64> = self
            .values
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * dt))
            .collect();
        let a = self.to_eigenbasis(psi);
        // (VᵀDV)_ij
        let dv = DMatrix::from_fn(n, n, |r, c| slope[r] * self.vectors[(r, c)]);
        let projected = self.vectors.transpose() * dv;
        let mut b = vec![ZERO; n];
        for i in 0..n {
            for j in 0..n {
                let gap = self.values[i] - self.values[j];
                let gamma = if gap.abs() < 1e-12 * scale {
                    Complex64::new(0.0, -dt) * exps[i]
                } else {
                    (exps[i] - exps[j]) / gap
                };
                b[i] += gamma * projected[(i, j)] * a[j];
            }
        }
        self.from_eigenbasis(&b)
    }
}
