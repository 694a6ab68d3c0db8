//! Dense order-3 tensor algebra: unfoldings, mode products, Kronecker
//! products, truncated SVD and subspace distances.
//!
//! Storage is a single `Vec<f64>` in mode-1-major layout: element
//! `(i1, i2, i3)` of an `n1 x n2 x n3` tensor lives at linear index
//! `i1 + n1*i2 + n1*n2*i3`. With that layout the mode-1 unfolding is a
//! plain column-major reshape, and each frontal slice `(:,:,l)` is a
//! contiguous block.
//!
//! Matricization follows the Kolda–Bader column ordering, so for
//! conformable `A`, `B`, `C`:
//!
//! ```text
//! unfold(T x1 A x2 B x3 C, 1) = A * unfold(T, 1) * (C kron B)^T
//! unfold(T x1 A x2 B x3 C, 3) = C * unfold(T, 3) * (B kron A)^T
//! ```
//!
//! All arithmetic is f64; operations are pure functions of immutable
//! inputs.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

/// Dense column-major matrix of `f64`.
pub type DenseMatrix = DMatrix<f64>;

/// Entrywise tolerance for the orthonormality invariant `|M^T M - I|`.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Dense order-3 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    values: Vec<f64>,
}

impl Tensor3 {
    /// Wraps a value buffer laid out as documented on the module.
    ///
    /// Panics if the buffer length does not equal `n1 * n2 * n3`.
    pub fn new(dims: (usize, usize, usize), values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            dims.0 * dims.1 * dims.2,
            "tensor buffer length must equal n1*n2*n3"
        );
        Self { dims, values }
    }

    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self::new((n1, n2, n3), vec![0.0; n1 * n2 * n3])
    }

    /// Builds an `n x n x L` tensor from frontal slices.
    pub fn from_slices(slices: &[DenseMatrix]) -> Self {
        assert!(!slices.is_empty(), "need at least one slice");
        let (n1, n2) = (slices[0].nrows(), slices[0].ncols());
        let mut values = Vec::with_capacity(n1 * n2 * slices.len());
        for s in slices {
            assert_eq!((s.nrows(), s.ncols()), (n1, n2), "slice shapes must agree");
            values.extend_from_slice(s.as_slice());
        }
        Self::new((n1, n2, slices.len()), values)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        let (n1, n2, n3) = self.dims;
        assert!(i1 < n1 && i2 < n2 && i3 < n3, "tensor index out of range");
        self.values[i1 + n1 * (i2 + n2 * i3)]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: f64) {
        let (n1, n2, n3) = self.dims;
        assert!(i1 < n1 && i2 < n2 && i3 < n3, "tensor index out of range");
        self.values[i1 + n1 * (i2 + n2 * i3)] = v;
    }

    /// Zero-copy view of the frontal slice `(:,:,l)`.
    pub fn slice(&self, l: usize) -> DMatrixView<'_, f64> {
        let (n1, n2, n3) = self.dims;
        assert!(l < n3, "slice index out of range");
        DMatrixView::from_slice(&self.values[n1 * n2 * l..n1 * n2 * (l + 1)], n1, n2)
    }

    /// Sum of all frontal slices, an `n1 x n2` matrix.
    pub fn slice_sum(&self) -> DenseMatrix {
        let (n1, n2, n3) = self.dims;
        let mut acc = DenseMatrix::zeros(n1, n2);
        for l in 0..n3 {
            acc += self.slice(l);
        }
        acc
    }

    /// Mode-`mode` matricization, shape `d_mode x (d1*d2*d3/d_mode)`.
    pub fn unfold(&self, mode: usize) -> DenseMatrix {
        let (n1, n2, n3) = self.dims;
        match mode {
            1 => DenseMatrix::from_column_slice(n1, n2 * n3, &self.values),
            2 => {
                let mut m = DenseMatrix::zeros(n2, n1 * n3);
                for i3 in 0..n3 {
                    for i2 in 0..n2 {
                        for i1 in 0..n1 {
                            m[(i2, i1 + n1 * i3)] = self.values[i1 + n1 * (i2 + n2 * i3)];
                        }
                    }
                }
                m
            }
            3 => {
                let mut m = DenseMatrix::zeros(n3, n1 * n2);
                for i3 in 0..n3 {
                    for c in 0..n1 * n2 {
                        m[(i3, c)] = self.values[c + n1 * n2 * i3];
                    }
                }
                m
            }
            _ => panic!("unfold mode must be 1, 2 or 3 (got {mode})"),
        }
    }

    /// Inverse of [`Tensor3::unfold`]: rebuilds the tensor of shape `dims`
    /// from its mode-`mode` matricization.
    pub fn fold(m: &DenseMatrix, mode: usize, dims: (usize, usize, usize)) -> Self {
        let (n1, n2, n3) = dims;
        let expected = match mode {
            1 => (n1, n2 * n3),
            2 => (n2, n1 * n3),
            3 => (n3, n1 * n2),
            _ => panic!("fold mode must be 1, 2 or 3 (got {mode})"),
        };
        assert_eq!(
            (m.nrows(), m.ncols()),
            expected,
            "matricization shape does not match target dims"
        );
        match mode {
            1 => Self::new(dims, m.as_slice().to_vec()),
            2 => {
                let mut t = Self::zeros(n1, n2, n3);
                for i3 in 0..n3 {
                    for i2 in 0..n2 {
                        for i1 in 0..n1 {
                            t.values[i1 + n1 * (i2 + n2 * i3)] = m[(i2, i1 + n1 * i3)];
                        }
                    }
                }
                t
            }
            3 => {
                let mut t = Self::zeros(n1, n2, n3);
                for i3 in 0..n3 {
                    for c in 0..n1 * n2 {
                        t.values[c + n1 * n2 * i3] = m[(i3, c)];
                    }
                }
                t
            }
            _ => unreachable!(),
        }
    }

    /// Mode-`mode` product with a matrix: contracts dimension `d_mode`
    /// against `m.ncols()` and replaces it by `m.nrows()`.
    ///
    /// `result(.., j, ..) = sum_i m(j, i) * t(.., i, ..)`.
    pub fn mode_product(&self, m: &DenseMatrix, mode: usize) -> Tensor3 {
        let (n1, n2, n3) = self.dims;
        match mode {
            1 => {
                assert_eq!(m.ncols(), n1, "mode-1 product dimension mismatch");
                let unf = DMatrixView::from_slice(&self.values, n1, n2 * n3);
                let prod = m * unf;
                Tensor3::new((m.nrows(), n2, n3), prod.as_slice().to_vec())
            }
            2 => {
                assert_eq!(m.ncols(), n2, "mode-2 product dimension mismatch");
                let p = m.nrows();
                let mt = m.transpose();
                let mut out = Tensor3::zeros(n1, p, n3);
                for l in 0..n3 {
                    let prod = self.slice(l) * &mt;
                    out.values[n1 * p * l..n1 * p * (l + 1)].copy_from_slice(prod.as_slice());
                }
                out
            }
            3 => {
                assert_eq!(m.ncols(), n3, "mode-3 product dimension mismatch");
                // Treat the buffer as an (n1*n2) x n3 column-major matrix.
                let flat = DMatrixView::from_slice(&self.values, n1 * n2, n3);
                let prod = flat * m.transpose();
                Tensor3::new((n1, n2, m.nrows()), prod.as_slice().to_vec())
            }
            _ => panic!("mode_product mode must be 1, 2 or 3 (got {mode})"),
        }
    }

    /// Gram matrix of the mode-`mode` unfolding, `M_mode * M_mode^T`,
    /// computed without materializing the wide unfolding.
    pub fn mode_gram(&self, mode: usize) -> DenseMatrix {
        let (n1, n2, n3) = self.dims;
        match mode {
            1 => {
                let mut g = DenseMatrix::zeros(n1, n1);
                for l in 0..n3 {
                    let s = self.slice(l);
                    g += s * s.transpose();
                }
                g
            }
            2 => {
                let mut g = DenseMatrix::zeros(n2, n2);
                for l in 0..n3 {
                    let s = self.slice(l);
                    g += s.transpose() * s;
                }
                g
            }
            3 => {
                let mut g = DenseMatrix::zeros(n3, n3);
                let block = n1 * n2;
                for a in 0..n3 {
                    for b in a..n3 {
                        let dot: f64 = self.values[block * a..block * (a + 1)]
                            .iter()
                            .zip(&self.values[block * b..block * (b + 1)])
                            .map(|(x, y)| x * y)
                            .sum();
                        g[(a, b)] = dot;
                        g[(b, a)] = dot;
                    }
                }
                g
            }
            _ => panic!("mode_gram mode must be 1, 2 or 3 (got {mode})"),
        }
    }

    /// Largest absolute entrywise difference between two tensors of the
    /// same shape.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Reorders both row and column indices of every frontal slice by
    /// `perm`, where `perm[i]` is the new position of node `i`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Tensor3 {
        let (n1, n2, n3) = self.dims;
        assert_eq!(n1, n2, "node permutation requires square slices");
        assert_eq!(perm.len(), n1, "permutation length mismatch");
        let mut out = Tensor3::zeros(n1, n2, n3);
        for l in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    out.values[perm[i1] + n1 * (perm[i2] + n2 * l)] =
                        self.values[i1 + n1 * (i2 + n2 * l)];
                }
            }
        }
        out
    }
}

/// Matrix with orthonormal columns (`max |M^T M - I| <= 1e-10`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFactor {
    matrix: DenseMatrix,
}

impl OrthonormalFactor {
    /// Validates the orthonormality invariant and wraps the matrix.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        assert!(
            matrix.nrows() >= matrix.ncols(),
            "orthonormal factor must be tall: rows >= cols"
        );
        let defect = orthonormality_defect(&matrix);
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::Degenerate(format!(
                "columns are not orthonormal (defect {defect:.3e} > {ORTHONORMALITY_TOL:.0e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest Euclidean row norm; the incoherence parameter of the factor.
    pub fn max_row_norm(&self) -> f64 {
        max_row_norm(&self.matrix)
    }
}

/// `max |M^T M - I|` entrywise.
pub fn orthonormality_defect(m: &DenseMatrix) -> f64 {
    let gram = m.transpose() * m;
    let mut worst = 0.0f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn max_row_norm(m: &DenseMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).norm())
        .fold(0.0, f64::max)
}

/// Standard Kronecker product: block `(i, j)` of the result is
/// `a(i, j) * b`.
pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.kronecker(b)
}

/// Fixes column signs so the entry of largest absolute value in each
/// column (lowest index on ties) is positive. Optionally applies the same
/// flips to the columns of a companion matrix, preserving products like
/// `U * D * R^T`.
fn canonicalize_signs(u: &mut DenseMatrix, companion: Option<&mut DenseMatrix>) {
    let mut flips = Vec::new();
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            flips.push(j);
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
    if let Some(v) = companion {
        for &j in &flips {
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}

/// One-sided Jacobi SVD of a square matrix: rotates column pairs until
/// all are mutually orthogonal, so the final columns are `sigma_j * u_j`
/// and the accumulated rotations form `v`. Slow for large inputs but
/// accurate even at exact rank deficiency, where bidiagonalization-based
/// solvers can return vectors inconsistent with their singular values.
fn jacobi_svd_square(r: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let k = r.nrows();
    assert_eq!(k, r.ncols(), "Jacobi SVD expects a square matrix");
    let mut a = r.clone();
    let mut v = DenseMatrix::identity(k, k);
    // Columns at rounding level have no direction left to recover;
    // rotating them against each other would never converge, so they are
    // frozen and handed to the basis completion below.
    let floor = (0..k).map(|j| a.column(j).norm()).fold(0.0, f64::max) * 1e-15;
    let mut converged = false;
    for _ in 0..64 {
        let mut rotated = false;
        for p in 0..k.saturating_sub(1) {
            for q in (p + 1)..k {
                let app = a.column(p).norm_squared();
                let aqq = a.column(q).norm_squared();
                if app.sqrt() <= floor || aqq.sqrt() <= floor {
                    continue;
                }
                let apq = a.column(p).dot(&a.column(q));
                // Converged when the correlation is below the pair's own
                // rounding level or below the rounding floor injected by
                // rotations against the largest columns.
                if apq.abs() <= 1e-15 * (app * aqq).sqrt()
                    || apq.abs() <= floor * app.sqrt().min(aqq.sqrt())
                {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in 0..k {
                    let (ap, aq) = (a[(row, p)], a[(row, q)]);
                    a[(row, p)] = c * ap - s * aq;
                    a[(row, q)] = s * ap + c * aq;
                    let (vp, vq) = (v[(row, p)], v[(row, q)]);
                    v[(row, p)] = c * vp - s * vq;
                    v[(row, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Degenerate("Jacobi SVD did not converge in 64 sweeps".into()));
    }

    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = (0..k).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| {
        norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y))
    });
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut v_sorted = DenseMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.set_column(dst, &v.column(src));
    }

    // Left vectors: normalized rotated columns where the singular value
    // carries a direction, completed to an orthonormal basis otherwise.
    // A final Gram-Schmidt pass keeps the factor orthonormal to machine
    // precision even when trailing singular values are at noise level.
    let tiny = sigma[0] * 1e-15;
    let mut u = DenseMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > tiny {
            u.set_column(dst, &(a.column(src) / norms[src]));
        }
    }
    orthonormalize_columns(&mut u);
    Ok((u, sigma, v_sorted))
}

/// In-place modified Gram-Schmidt over the columns in order; a column
/// whose residual collapses (including all-zero columns) is replaced by
/// the first basis vector with a stable residual.
fn orthonormalize_columns(u: &mut DenseMatrix) {
    let (m, k) = (u.nrows(), u.ncols());
    assert!(k <= m, "cannot orthonormalize more columns than rows");
    for j in 0..k {
        for pass in 0..2 {
            for i in 0..j {
                let proj = u.column(i).dot(&u.column(j));
                let ci = u.column(i).into_owned();
                u.column_mut(j).axpy(-proj, &ci, 1.0);
            }
            let norm = u.column(j).norm();
            if norm > 0.5 {
                u.column_mut(j).scale_mut(1.0 / norm);
                break;
            }
            if pass == 0 {
                // Rebuild from the first standard basis vector that keeps
                // a stable residual against the accepted columns.
                'candidates: for e in 0..m {
                    let mut cand = nalgebra::DVector::zeros(m);
                    cand[e] = 1.0;
                    for i in 0..j {
                        let proj = u.column(i).dot(&cand);
                        cand.axpy(-proj, &u.column(i).into_owned(), 1.0);
                    }
                    if cand.norm() > 0.5 {
                        cand.scale_mut(1.0 / cand.norm());
                        u.set_column(j, &cand);
                        break 'candidates;
                    }
                }
            }
        }
    }
}

/// Thin SVD with singular values sorted in descending order and column
/// signs canonicalized on `u` (and mirrored on `v` so `u * diag(s) * v^T`
/// is unchanged).
///
/// Reduces to a small square factor by Householder QR (transposing wide
/// input first) and runs a one-sided Jacobi SVD on it. Direct
/// bidiagonalized SVD is avoided: on exactly rank-deficient input it can
/// return a left factor whose columns do not span the column space.
pub fn thin_svd(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    assert!(m.nrows() > 0 && m.ncols() > 0, "cannot factor an empty matrix");
    if m.nrows() < m.ncols() {
        let (ut, sigma, vt) = thin_svd(&m.transpose())?;
        return Ok((vt, sigma, ut));
    }
    let qr = m.clone().qr();
    let (u_small, sigma, v) = jacobi_svd_square(&qr.r())?;
    let mut u = qr.q() * u_small;
    let mut v = v;
    canonicalize_signs(&mut u, Some(&mut v));
    Ok((u, sigma, v))
}

/// Top `r` left singular vectors of `m`, with the deterministic sign
/// convention of [`thin_svd`]. When the spectral gap at `r` vanishes any
/// orthonormal basis of a valid top-`r` subspace may be returned.
pub fn top_left_singular_vectors(m: &DenseMatrix, r: usize) -> Result<OrthonormalFactor> {
    let k = m.nrows().min(m.ncols());
    assert!(r >= 1 && r <= k, "rank r={} out of range 1..={}", r, k);
    let (u, _, _) = thin_svd(m)?;
    OrthonormalFactor::new(u.columns(0, r).into_owned())
}

/// Top `k` eigenvectors of a symmetric matrix ordered by decreasing
/// absolute eigenvalue; for symmetric input these span the same subspace
/// as the top-`k` left singular vectors.
pub fn top_eigenvectors_by_magnitude(s: &DenseMatrix, k: usize) -> Result<OrthonormalFactor> {
    assert_eq!(s.nrows(), s.ncols(), "expected a square symmetric matrix");
    assert!(k >= 1 && k <= s.nrows(), "rank k={} out of range", k);
    let eig = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut u = DenseMatrix::zeros(s.nrows(), k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_signs(&mut u, None);
    OrthonormalFactor::new(u)
}

/// Top `r` left singular vectors of the mode-`mode` unfolding, computed
/// through the unfolding's Gram matrix. Used where the unfolding is too
/// wide to factor directly.
pub fn gram_left_singular_vectors(t: &Tensor3, mode: usize, r: usize) -> Result<OrthonormalFactor> {
    top_eigenvectors_by_magnitude(&t.mode_gram(mode), r)
}

/// Number of singular values above `rel_tol * sigma_1`.
pub fn numeric_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    if s1 <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s / s1 > rel_tol).count()
}

/// Spectral norm via SVD.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Distance between the column spaces of two orthonormal factors:
/// `min_O ||a - b O||` over r x r orthogonal `O`, in spectral norm.
///
/// The minimizer is the polar factor of `b^T a`; the value lies in
/// `[0, 2]` and equals `sqrt(2)` for orthogonal subspaces.
pub fn subspace_distance(a: &OrthonormalFactor, b: &OrthonormalFactor) -> f64 {
    assert_eq!(
        (a.nrows(), a.ncols()),
        (b.nrows(), b.ncols()),
        "factors must have identical shape"
    );
    let m = b.matrix().transpose() * a.matrix();
    let (u, _, v) = thin_svd(&m).expect("aligning rotation");
    let o = u * v.transpose();
    spectral_norm(&(a.matrix() - b.matrix() * o))
}
