//! Small numerical kernels: Bessel sequences for Chebyshev propagation, symmetric
//! tridiagonal eigensolvers and a tiny dense solve.

use nalgebra::{DMatrix, DVector};

use crate::model::SymTridiagonal;
use crate::{Error, Result};

/// J_0(z), …, J_kmax(z) for z ≥ 0 by Miller's downward recurrence, normalized with
/// J_0 + 2 Σ J_2k = 1.
pub fn bessel_j_sequence(z: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = kmax.max(z.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / z * cur - next;
        next = cur;
        cur = prev;
        // `cur` now holds J_{k-1}
        if k - 1 <= kmax {
            out[k - 1] = cur;
        }
        if k <= kmax {
            out[k] = next;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Full eigendecomposition of a symmetric tridiagonal matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct TridiagonalEigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn tridiagonal_eigen(h: &SymTridiagonal) -> Result<TridiagonalEigen> {
    let n = h.dim();
    let dense = h.to_dense();
    let eig = nalgebra::SymmetricEigen::try_new(dense, f64::EPSILON, 100 * n.max(10)).ok_or_else(|| {
        Error::numerical(format!("symmetric eigensolver did not converge (dim {n})"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(TridiagonalEigen { values, vectors })
}

/// Gershgorin interval containing the spectrum.
pub fn gershgorin_bounds(diagonal: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diagonal.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < n {
            r += off[i].abs();
        }
        lo = lo.min(diagonal[i] - r);
        hi = hi.max(diagonal[i] + r);
    }
    (lo, hi)
}

/// Number of eigenvalues strictly below `x` (Sturm sequence count).
pub fn sturm_count(h: &SymTridiagonal, x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..h.dim() {
        let coupling = if i == 0 { 0.0 } else { h.off_diagonal[i - 1] };
        q = h.diagonal[i] - x - if i == 0 { 0.0 } else { coupling * coupling / q };
        if q == 0.0 {
            q = -f64::EPSILON * (x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves (H − σ)x = b for symmetric tridiagonal H by LDLᵀ without pivoting.
/// Only stable when H − σ is definite, which is how it is used.
fn ldl_solve(h: &SymTridiagonal, shift: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = h.dim();
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    d[0] = h.diagonal[0] - shift;
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            return Err(Error::numerical("singular pivot in tridiagonal solve"));
        }
        l[i] = h.off_diagonal[i] / d[i];
        d[i + 1] = h.diagonal[i + 1] - shift - l[i] * h.off_diagonal[i];
    }
    let mut y = b.to_vec();
    for i in 1..n {
        y[i] -= l[i - 1] * y[i - 1];
    }
    for i in 0..n {
        if d[i] == 0.0 {
            return Err(Error::numerical("singular pivot in tridiagonal solve"));
        }
        y[i] /= d[i];
    }
    for i in (0..n - 1).rev() {
        y[i] -= l[i] * y[i + 1];
    }
    Ok(y)
}

/// Lowest eigenpair of a symmetric tridiagonal matrix: Sturm bisection for the value,
/// shifted inverse iteration for the vector. The vector is normalized with its
/// largest-magnitude component positive.
pub fn lowest_eigenpair(h: &SymTridiagonal) -> Result<(f64, Vec<f64>)> {
    let n = h.dim();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let (mut lo, mut hi) = gershgorin_bounds(&h.diagonal, &h.off_diagonal);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(h, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // strictly below the lowest eigenvalue so that H − σ stays positive definite
    let shift = lo - 1e-13 * scale;
    let mut v = vec![1.0; n];
    let mut energy = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let mut w = ldl_solve(h, shift, &v)?;
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::numerical("inverse iteration broke down"));
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let hw = apply_real(h, &w);
        energy = hw.iter().zip(&w).map(|(a, b)| a * b).sum();
        residual = hw
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - energy * b).powi(2))
            .sum::<f64>()
            .sqrt();
        v = w;
        if residual <= 1e-13 * scale {
            break;
        }
    }
    if residual > 1e-10 * scale {
        return Err(Error::numerical(format!(
            "inverse iteration residual {residual:.3e} did not converge"
        )));
    }
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((energy, v))
}

pub(crate) fn apply_real(h: &SymTridiagonal, v: &[f64]) -> Vec<f64> {
    let n = h.dim();
    (0..n)
        .map(|i| {
            let mut acc = h.diagonal[i] * v[i];
            if i > 0 {
                acc += h.off_diagonal[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += h.off_diagonal[i] * v[i + 1];
            }
            acc
        })
        .collect()
}

/// Dense solve with partial pivoting; errors when the system is numerically singular.
pub fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let norm = a.amax();
    let lu = a.lu();
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-14 * norm) {
        return Err(Error::numerical(format!(
            "linear system is singular to working precision (min pivot {min_pivot:.3e})"
        )));
    }
    lu.solve(&b)
        .ok_or_else(|| Error::numerical("linear solve failed"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_matches_known_values() {
        // J_0(1), J_1(1), J_5(1), J_0(10), J_3(10)
        let s = bessel_j_sequence(1.0, 8);
        assert!((s[0] - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((s[1] - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((s[5] - 2.497_577_302_112_344e-4).abs() < 1e-18);
        let t = bessel_j_sequence(10.0, 40);
        assert!((t[0] - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((t[3] - 0.058_379_379_305_186_81).abs() < 1e-14);
        assert!(t[40].abs() < 1e-15);
        assert_eq!(bessel_j_sequence(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bessel_large_argument_is_finite() {
        let s = bessel_j_sequence(120.0, 200);
        assert!(s.iter().all(|v| v.is_finite()));
        let norm: f64 = s[0] + 2.0 * s.iter().skip(2).step_by(2).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lowest_pair_of_three_site_chain() {
        let h = SymTridiagonal {
            diagonal: vec![-1.0, -2.0, -1.0],
            off_diagonal: vec![1.0, 1.0],
        };
        let (e, v) = lowest_eigenpair(&h).unwrap();
        // det(H − λ) = (−1 − λ)(λ² + 3λ): roots −3, −1, 0
        assert!((e - (-3.0)).abs() < 1e-10);
        let hv = apply_real(&h, &v);
        let res: f64 = hv.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-10);
    }

    #[test]
    fn lowest_pair_agrees_with_dense() {
        let n = 40;
        let h = SymTridiagonal {
            diagonal: (0..n).map(|i| ((i * 7919) % 13) as f64 * 0.1 - 0.6).collect(),
            off_diagonal: vec![1.0; n - 1],
        };
        let (e, v) = lowest_eigenpair(&h).unwrap();
        let dense = tridiagonal_eigen(&h).unwrap();
        assert!((e - dense.values[0]).abs() < 1e-12);
        let dot: f64 = (0..n).map(|i| v[i] * dense.vectors[(i, 0)]).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10);
        assert_eq!(sturm_count(&h, e - 1e-9), 0);
        assert_eq!(sturm_count(&h, e + 1e-9), 1);
    }

    #[test]
    fn singular_dense_system_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve_dense(a, DVector::from_vec(vec![1.0, 1.0])).is_err());
    }
}
