use serde::{Deserialize, Serialize};

use super::{DenseMatrix, LinalgError};

/// Default cap on cyclic Jacobi sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Eigenpairs sorted by ascending eigenvalue; column `i` of `eigenvectors`
/// belongs to `eigenvalues[i]` and has unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    /// Number of eigenvalues with `|λ| <= tol`.
    pub fn count_near_zero(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|v| v.abs() <= tol).count()
    }

    fn sorted(values: Vec<f64>, vectors: DenseMatrix) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut out = DenseMatrix::zeros(vectors.rows(), n);
        for (dst, &src) in order.iter().enumerate() {
            for r in 0..vectors.rows() {
                out[(r, dst)] = vectors[(r, src)];
            }
        }
        Self {
            eigenvalues: order.iter().map(|&i| values[i]).collect(),
            eigenvectors: out,
        }
    }
}

/// Full eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// `tol` is the target residual `‖M v − λ v‖∞ / ‖M‖∞`; sweeps continue until the
/// off-diagonal mass is three orders of magnitude below it (or at machine precision).
pub fn symmetric_eig(m: &DenseMatrix, tol: f64) -> Result<EigenResult, LinalgError> {
    symmetric_eig_with(m, tol, DEFAULT_MAX_SWEEPS)
}

pub fn symmetric_eig_with(
    m: &DenseMatrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<EigenResult, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(LinalgError::InvalidArgument("tol must be positive".into()));
    }
    if !m.is_symmetric(1e-12) {
        return Err(LinalgError::NonSymmetric);
    }
    let n = m.rows();
    let mut a = m.clone();
    // symmetrize exactly so rotations see a consistent matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = (tol * 1e-3).max(4.0 * f64::EPSILON) * a.norm_frobenius();

    let mut converged = false;
    for _ in 0..=max_sweeps {
        let off = off_diagonal_norm(&a);
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: max_sweeps });
    }

    let values = a.diagonal();
    Ok(EigenResult::sorted(values, v))
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating `a[p][q]`.
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    // signum(0.0) is 1.0, so theta == 0 gives t = 1 (45° rotation)
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows();

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Solves `L x = λ D x` for symmetric `L` and nonnegative diagonal `D`.
///
/// Rows with positive degree are reduced to the symmetric problem
/// `D^{-1/2} L D^{-1/2} y = λ y`, `x = D^{-1/2} y`. A zero-degree row must be a
/// zero row of `L` (an isolated vertex); it contributes eigenvalue 0 with the
/// matching standard basis vector. Eigenvectors are rescaled to unit norm.
pub fn generalized_eig(
    l: &DenseMatrix,
    d: &DenseMatrix,
    tol: f64,
) -> Result<EigenResult, LinalgError> {
    if !l.is_square() {
        return Err(LinalgError::NotSquare {
            rows: l.rows(),
            cols: l.cols(),
        });
    }
    let n = l.rows();
    if d.rows() != n || d.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            found: d.rows() * d.cols(),
        });
    }
    if !l.is_symmetric(1e-12) {
        return Err(LinalgError::NonSymmetric);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && d[(i, j)] != 0.0 {
                return Err(LinalgError::NotDiagonal);
            }
        }
        if d[(i, i)] < 0.0 {
            return Err(LinalgError::NegativeDegree { index: i });
        }
    }

    let active: Vec<usize> = (0..n).filter(|&i| d[(i, i)] > 0.0).collect();
    if active.is_empty() {
        return Err(LinalgError::SingularDegree);
    }
    for i in (0..n).filter(|&i| d[(i, i)] == 0.0) {
        if l.row(i).iter().any(|&x| x != 0.0) {
            return Err(LinalgError::ZeroDegreeCoupling { index: i });
        }
    }

    let m = active.len();
    let inv_sqrt: Vec<f64> = active.iter().map(|&i| 1.0 / d[(i, i)].sqrt()).collect();
    let mut reduced = DenseMatrix::zeros(m, m);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            reduced[(a, b)] = inv_sqrt[a] * l[(i, j)] * inv_sqrt[b];
        }
    }
    let inner = symmetric_eig(&reduced, tol)?;

    let mut values = Vec::with_capacity(n);
    let mut vectors = DenseMatrix::zeros(n, n);
    for col in 0..m {
        values.push(inner.eigenvalues[col]);
        let mut norm = 0.0;
        for (a, &i) in active.iter().enumerate() {
            let x = inv_sqrt[a] * inner.eigenvectors[(a, col)];
            vectors[(i, col)] = x;
            norm += x * x;
        }
        let norm = norm.sqrt();
        for &i in &active {
            vectors[(i, col)] /= norm;
        }
    }
    for (offset, i) in (0..n).filter(|&i| d[(i, i)] == 0.0).enumerate() {
        values.push(0.0);
        vectors[(i, m + offset)] = 1.0;
    }
    Ok(EigenResult::sorted(values, vectors))
}
