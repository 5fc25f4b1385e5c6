//! Symmetric eigendecomposition by cyclic Jacobi rotations, and the graph
//! Fourier transform built on it.

use alloc::vec::Vec;

use crate::math;
use crate::matrix::Matrix;
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues ascending; column `k` of `eigenvectors` pairs with
/// `eigenvalues[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_N`.
    pub fn largest(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Decomposes a symmetric matrix as `U Σ Uᵀ`.
///
/// Sweeps rotate every off-diagonal pair in row order until the off-diagonal
/// Frobenius norm drops below `1e-12 · max(1, ‖A‖_F)`.
pub fn eigendecompose(a: &Matrix) -> Result<Spectrum> {
    let asym = a.asymmetry().ok_or(Error::ShapeMismatch {
        op: "eigendecompose",
        lhs: a.shape(),
        rhs: (a.rows(), a.rows()),
    })?;
    let scale = a.max_abs().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let n = a.rows();
    // Work on the exactly symmetrized copy.
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);
    let threshold = OFF_DIAGONAL_TOL * m.frobenius_norm().max(1.0);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) < threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                // signum(0.0) == 1.0, so equal diagonals rotate by π/4
                let t = theta.signum() / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += m[(i, j)] * m[(i, j)];
            }
        }
    }
    math::sqrt(sum)
}

/// Applies `Jᵀ M J` with the (p, q) plane rotation and accumulates `V ← V J`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// `x̂ = Uᵀ x`.
pub fn gft(spec: &Spectrum, x: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            context: "gft",
            expected: n,
            actual: x.len(),
        });
    }
    let u = &spec.eigenvectors;
    Ok((0..n)
        .map(|k| (0..n).map(|i| u[(i, k)] * x[i]).sum())
        .collect())
}

/// `x = U x̂`.
pub fn igft(spec: &Spectrum, xhat: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim();
    if xhat.len() != n {
        return Err(Error::DimensionMismatch {
            context: "igft",
            expected: n,
            actual: xhat.len(),
        });
    }
    spec.eigenvectors.matvec(xhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian_of, Topology};
    use alloc::vec;

    fn reconstruction_error(a: &Matrix, s: &Spectrum) -> f64 {
        let u = &s.eigenvectors;
        let rebuilt = u
            .matmul(&Matrix::diagonal(&s.eigenvalues))
            .unwrap()
            .matmul(&u.transpose())
            .unwrap();
        rebuilt.sub(a).unwrap().frobenius_norm() / a.frobenius_norm().max(1e-300)
    }

    #[test]
    fn identity_spectrum() {
        let s = eigendecompose(&Matrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
        let utu = s.eigenvectors.transpose().matmul(&s.eigenvectors).unwrap();
        assert!(utu.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn complete_k3() {
        let topo = Topology::from_edges(3, &[(0, 1), (1, 2), (0, 2)], 1.0).unwrap();
        let l = laplacian_of(&topo);
        let s = eigendecompose(&l).unwrap();
        let expected = [0.0, 3.0, 3.0];
        for (got, want) in s.eigenvalues.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(reconstruction_error(&l, &s) < 1e-8);
    }

    #[test]
    fn connected_path_has_single_zero_eigenvalue() {
        let topo = Topology::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], 1.0).unwrap();
        let s = eigendecompose(&laplacian_of(&topo)).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-12);
        assert!(s.eigenvalues[1] > 1e-3);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]);
        assert!(matches!(eigendecompose(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn gft_examples() {
        let topo = Topology::from_edges(3, &[(0, 1), (1, 2), (0, 2)], 1.0).unwrap();
        let s = eigendecompose(&laplacian_of(&topo)).unwrap();
        for k in 0..3 {
            let uk = s.eigenvectors.column_values(k);
            let xhat = gft(&s, &uk).unwrap();
            for (j, v) in xhat.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
        assert_eq!(gft(&s, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let x = [0.3, -1.7, 2.2];
        let back = igft(&s, &gft(&s, &x).unwrap()).unwrap();
        let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(err < 1e-9);
        assert!(gft(&s, &[1.0]).is_err());
        assert!(igft(&s, &[1.0, 2.0]).is_err());
    }
}
