//! Regularized tensor power iteration: row-norm truncation followed by
//! re-orthonormalization (`P_delta`), data-driven threshold heuristics,
//! spectral warm starts, and the alternating factor updates.

use crate::error::{Error, Result};
use crate::tensor::{
    gram_left_singular_vectors, max_row_norm, orthonormality_defect, subspace_distance, thin_svd,
    top_eigenvectors_by_magnitude, top_left_singular_vectors, DenseMatrix, OrthonormalFactor,
    Tensor3,
};

/// Regularization threshold: fixed, or derived from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    Auto,
    Fixed(f64),
}

/// Warm-start choice for the node factor.
///
/// `LayerSum` uses the dominant subspace of the summed slices; it is the
/// default but is blind to structure that cancels under summation.
/// `Hosvd` uses the dominant subspace of the mode-1 unfolding (computed
/// through its Gram matrix, the sum of squared slices), which survives
/// such cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    LayerSum,
    Hosvd,
}

/// Configuration of the power iteration.
#[derive(Debug, Clone)]
pub struct TwistConfig {
    /// Target rank of the node factor.
    pub r: usize,
    /// Target rank of the layer factor; at most `r`.
    pub m: usize,
    pub iter_max: usize,
    pub delta1: DeltaSpec,
    pub delta2: DeltaSpec,
    /// Early-stop threshold on the successive subspace distances.
    pub tol: f64,
    pub init: InitMethod,
}

impl TwistConfig {
    pub fn new(r: usize, m: usize) -> Self {
        Self {
            r,
            m,
            iter_max: 30,
            delta1: DeltaSpec::Auto,
            delta2: DeltaSpec::Auto,
            tol: 1e-8,
            init: InitMethod::LayerSum,
        }
    }

    fn validate(&self, n: usize, l: usize) {
        assert!(
            1 <= self.m && self.m <= self.r && self.r <= n,
            "ranks must satisfy 1 <= m <= r <= n (m={}, r={}, n={n})",
            self.m,
            self.r
        );
        assert!(self.m <= l, "layer rank m={} exceeds layer count {l}", self.m);
        assert!(self.iter_max >= 1, "iter_max must be at least 1");
        assert!(self.tol >= 0.0, "tol must be non-negative");
    }
}

/// Estimated factors plus iteration diagnostics.
#[derive(Debug, Clone)]
pub struct EmbeddingPair {
    /// Node factor, `n x r`.
    pub u: OrthonormalFactor,
    /// Layer factor, `L x m`.
    pub w: OrthonormalFactor,
    pub iterations_run: usize,
    /// Successive subspace distances `(node, layer)` per iteration.
    pub trace: Vec<(f64, f64)>,
    /// Largest `max_row_norm(regularized) / delta` seen in any
    /// regularization step; bounded by `sqrt(2)` by construction.
    pub max_regularized_row_ratio: f64,
    /// Largest orthonormality defect of any iterate.
    pub max_orthonormality_defect: f64,
}

/// Rescales every row of `u` to Euclidean norm at most `delta`; shorter
/// rows are untouched.
pub fn truncate_rows(u: &DenseMatrix, delta: f64) -> DenseMatrix {
    assert!(delta > 0.0, "truncation threshold must be positive");
    let mut out = u.clone();
    for i in 0..out.nrows() {
        let norm = out.row(i).norm();
        if norm > delta {
            out.row_mut(i).scale_mut(delta / norm);
        }
    }
    out
}

/// Row-norm truncation to `delta` followed by re-orthonormalization via
/// the top-`r` left singular vectors of the truncated matrix
/// (`r` = column count of `u`).
pub fn regularize(u: &OrthonormalFactor, delta: f64) -> Result<OrthonormalFactor> {
    assert!(delta > 0.0, "regularization threshold must be positive");
    let truncated = truncate_rows(u.matrix(), delta);
    let r = u.ncols();
    let (left, s, _) = thin_svd(&truncated)?;
    if s[r - 1] < 1e-12 {
        return Err(Error::Degenerate(format!(
            "regularization threshold delta={delta} is too small: the truncated matrix is \
             numerically rank-deficient (singular value {} at rank {r})",
            s[r - 1]
        )));
    }
    OrthonormalFactor::new(left.columns(0, r).into_owned())
}

/// Data-driven thresholds: `2*sqrt(r) * max_i deg_i / ||deg||` over node
/// degrees summed across all layers, and `2*sqrt(m) * max_l e_l / ||e||`
/// over per-layer edge totals.
pub fn auto_deltas(a: &Tensor3, r: usize, m: usize) -> Result<(f64, f64)> {
    let (n1, n2, n3) = a.dims();
    let mut deg = vec![0.0f64; n1];
    let mut layer_total = vec![0.0f64; n3];
    for i3 in 0..n3 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let v = a.get(i1, i2, i3);
                deg[i1] += v;
                layer_total[i3] += v;
            }
        }
    }
    let deg_norm = deg.iter().map(|d| d * d).sum::<f64>().sqrt();
    let layer_norm = layer_total.iter().map(|e| e * e).sum::<f64>().sqrt();
    if deg_norm == 0.0 || layer_norm == 0.0 {
        return Err(Error::Degenerate(
            "cannot derive regularization thresholds from an all-zero tensor".into(),
        ));
    }
    let max_deg = deg.iter().fold(0.0f64, |m, &d| m.max(d));
    let max_layer = layer_total.iter().fold(0.0f64, |m, &e| m.max(e));
    let delta1 = 2.0 * (r as f64).sqrt() * max_deg / deg_norm;
    let delta2 = 2.0 * (m as f64).sqrt() * max_layer / layer_norm;
    Ok((delta1, delta2))
}

/// Warm start for the node factor: dominant rank-`r` subspace of the
/// summed slices. The sum is symmetric, so its top eigenvectors by
/// absolute eigenvalue span the top left singular subspace.
pub fn warm_init_u(a: &Tensor3, r: usize) -> Result<OrthonormalFactor> {
    top_eigenvectors_by_magnitude(&a.slice_sum(), r)
}

/// Alternative node-factor start: dominant rank-`r` subspace of the
/// mode-1 unfolding, obtained from its Gram matrix (the sum of squared
/// slices). Survives structure that cancels in the plain layer sum.
pub fn hosvd_init_u(a: &Tensor3, r: usize) -> Result<OrthonormalFactor> {
    gram_left_singular_vectors(a, 1, r)
}

/// HOSVD-style layer start: dominant rank-`m` subspace of the raw
/// mode-3 unfolding, from its Gram matrix.
pub fn gram_init_w(a: &Tensor3, m: usize) -> Result<OrthonormalFactor> {
    gram_left_singular_vectors(a, 3, m)
}

/// Layer-factor start of the mode-3 unfolding: regularizes `u0` at
/// `delta1`, projects both node modes onto it, and takes the top-`m`
/// left singular vectors of the resulting `L x r^2` unfolding.
pub fn warm_init_w(
    a: &Tensor3,
    u0: &OrthonormalFactor,
    m: usize,
    delta1: f64,
) -> Result<OrthonormalFactor> {
    assert!(m <= u0.ncols(), "layer rank m={m} exceeds node rank {}", u0.ncols());
    let u_reg = regularize(u0, delta1)?;
    let ut = u_reg.matrix().transpose();
    let projected = a.mode_product(&ut, 1).mode_product(&ut, 2);
    top_left_singular_vectors(&projected.unfold(3), m)
}

/// Alternating regularized updates: each iteration regularizes both
/// factors, then refreshes the node factor from the slice tensor
/// projected onto the regularized pair, and the layer factor from the
/// tensor projected onto the regularized node factor along both node
/// modes. Stops at `iter_max` or when both successive subspace distances
/// drop below `tol`. `Auto` thresholds are resolved from `a` on entry.
pub fn power_iterate(
    a: &Tensor3,
    config: &TwistConfig,
    u0: &OrthonormalFactor,
    w0: &OrthonormalFactor,
) -> Result<EmbeddingPair> {
    let (n, n2, l) = a.dims();
    assert_eq!(n, n2, "adjacency tensor must have square slices");
    config.validate(n, l);
    assert_eq!((u0.nrows(), u0.ncols()), (n, config.r), "node start has wrong shape");
    assert_eq!((w0.nrows(), w0.ncols()), (l, config.m), "layer start has wrong shape");
    let (auto1, auto2) = match (config.delta1, config.delta2) {
        (DeltaSpec::Fixed(_), DeltaSpec::Fixed(_)) => (0.0, 0.0),
        _ => auto_deltas(a, config.r, config.m)?,
    };
    let delta1 = match config.delta1 {
        DeltaSpec::Fixed(d) => d,
        DeltaSpec::Auto => auto1,
    };
    let delta2 = match config.delta2 {
        DeltaSpec::Fixed(d) => d,
        DeltaSpec::Auto => auto2,
    };

    let mut u = u0.clone();
    let mut w = w0.clone();
    let mut trace = Vec::new();
    let mut iterations_run = 0;
    let mut max_ratio: f64 = 0.0;
    let mut max_defect: f64 = orthonormality_defect(u.matrix()).max(orthonormality_defect(w.matrix()));
    for _ in 0..config.iter_max {
        let u_reg = regularize(&u, delta1)?;
        let w_reg = regularize(&w, delta2)?;
        max_ratio = max_ratio
            .max(u_reg.max_row_norm() / delta1)
            .max(w_reg.max_row_norm() / delta2);
        max_defect = max_defect
            .max(orthonormality_defect(u_reg.matrix()))
            .max(orthonormality_defect(w_reg.matrix()));

        let ut = u_reg.matrix().transpose();
        let wt = w_reg.matrix().transpose();
        // Node update: project the non-target modes and refactor.
        let node_view = a.mode_product(&ut, 2).mode_product(&wt, 3);
        let u_next = top_left_singular_vectors(&node_view.unfold(1), config.r)?;
        // Layer update: project both node modes onto the regularized
        // node factor.
        let layer_view = a.mode_product(&ut, 1).mode_product(&ut, 2);
        let w_next = top_left_singular_vectors(&layer_view.unfold(3), config.m)?;

        let du = subspace_distance(&u_next, &u);
        let dw = subspace_distance(&w_next, &w);
        max_defect = max_defect
            .max(orthonormality_defect(u_next.matrix()))
            .max(orthonormality_defect(w_next.matrix()));
        u = u_next;
        w = w_next;
        iterations_run += 1;
        trace.push((du, dw));
        if du < config.tol && dw < config.tol {
            break;
        }
    }
    Ok(EmbeddingPair {
        u,
        w,
        iterations_run,
        trace,
        max_regularized_row_ratio: max_ratio,
        max_orthonormality_defect: max_defect,
    })
}

/// Convenience: warm starts per `config.init`, then `power_iterate`.
pub fn estimate_embedding(a: &Tensor3, config: &TwistConfig) -> Result<EmbeddingPair> {
    let (n, _, l) = a.dims();
    config.validate(n, l);
    let (auto1, _) = match config.delta1 {
        DeltaSpec::Fixed(_) => (0.0, 0.0),
        DeltaSpec::Auto => auto_deltas(a, config.r, config.m)?,
    };
    let delta1 = match config.delta1 {
        DeltaSpec::Fixed(d) => d,
        DeltaSpec::Auto => auto1,
    };
    let u0 = match config.init {
        InitMethod::LayerSum => warm_init_u(a, config.r)?,
        InitMethod::Hosvd => hosvd_init_u(a, config.r)?,
    };
    let w0 = warm_init_w(a, &u0, config.m, delta1)?;
    power_iterate(a, config, &u0, &w0)
}

/// Largest row norm of `m` divided by `delta`: the quantity the
/// regularization contract bounds by `sqrt(2)`.
pub fn row_ratio(m: &DenseMatrix, delta: f64) -> f64 {
    max_row_norm(m) / delta
}
