//! Reference methods for comparison: spectral clustering of the summed
//! adjacency (Sum-Adj), unregularized power iteration from HOSVD starts
//! (HOSVD-Tucker), and spectral clustering of the mode-3 unfolding
//! (M3-SC).

use crate::clustering::{kmeans, spectral_cluster, KmeansConfig, Partition};
use crate::error::Result;
use crate::power::{gram_init_w, hosvd_init_u, power_iterate, DeltaSpec, EmbeddingPair, TwistConfig};
use crate::tensor::Tensor3;

/// Spectral clustering on the sum of all slices: k-means on the rows of
/// the top-`kbar` eigenvector basis (largest absolute eigenvalue).
pub fn sum_adj(a: &Tensor3, kbar: usize, config: &KmeansConfig) -> Result<Partition> {
    spectral_cluster(&a.slice_sum(), kbar, config)
}

/// Plain higher-order orthogonal iteration: node factor started from the
/// dominant subspace of the mode-1 unfolding, layer factor from the
/// mode-3 unfolding, and power iterations with both thresholds fixed at
/// 1 (row norms of orthonormal factors never exceed 1, so truncation
/// never fires and regularization reduces to re-orthonormalization).
pub fn hosvd_tucker(a: &Tensor3, config: &TwistConfig) -> Result<EmbeddingPair> {
    let unregularized = TwistConfig {
        delta1: DeltaSpec::Fixed(1.0),
        delta2: DeltaSpec::Fixed(1.0),
        ..config.clone()
    };
    let u0 = hosvd_init_u(a, config.r)?;
    let w0 = gram_init_w(a, config.m)?;
    power_iterate(a, &unregularized, &u0, &w0)
}

/// Layer clustering from the raw tensor: k-means on the rows of the
/// top-`m` left singular vectors of the mode-3 unfolding, computed
/// through its Gram matrix (slice-by-slice inner products).
pub fn m3_spectral(a: &Tensor3, m: usize, config: &KmeansConfig) -> Result<Partition> {
    let (_, _, l) = a.dims();
    assert!(m >= 1 && m <= l, "layer rank m={m} out of range 1..={l}");
    let basis = crate::tensor::gram_left_singular_vectors(a, 3, m)?;
    Ok(kmeans(basis.matrix(), m, config))
}
