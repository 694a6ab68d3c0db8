//! End-to-end community detection on an adjacency tensor: estimate the
//! node and layer factors by regularized power iteration, cluster node
//! embedding rows into global communities, cluster layer embedding rows
//! into layer classes, then run spectral clustering per class on the
//! summed slices for the local communities.

use crate::clustering::{kmeans, spectral_cluster, supnorm_cluster, KmeansConfig, Partition};
use crate::error::Result;
use crate::power::{estimate_embedding, EmbeddingPair, TwistConfig};
use crate::rng::derive_seed;
use crate::tensor::{DenseMatrix, Tensor3};

/// How layer labels are extracted from the rows of the layer factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerClusterMethod {
    /// K-means with exactly `m` clusters.
    Kmeans,
    /// Greedy representative scan with self-adjusting radius; `None`
    /// starts from `0.5 * sqrt(m / L)`, the scale of the expected
    /// row separation.
    Supnorm { epsilon0: Option<f64> },
}

/// Everything the pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// Node partition into `kbar` global communities.
    pub global: Partition,
    /// Layer partition into `m` classes.
    pub layers: Partition,
    /// Per recovered layer class, the local node partition; `None` for a
    /// class that ended up with no layers.
    pub locals: Vec<Option<Partition>>,
    pub embedding: EmbeddingPair,
}

/// Runs the full procedure. `k_local[j]` is the community count used for
/// the local clustering of recovered layer class `j+1`, so it must have
/// exactly `config.m` entries. K-means seeds for the three clustering
/// stages are derived from `kmeans.seed`, so the whole run is
/// deterministic.
pub fn twist_pipeline(
    a: &Tensor3,
    config: &TwistConfig,
    layer_method: LayerClusterMethod,
    kbar: usize,
    k_local: &[usize],
    kmeans_config: &KmeansConfig,
) -> Result<PipelineResult> {
    let (n, n2, l) = a.dims();
    assert_eq!(n, n2, "adjacency tensor must have square slices");
    assert!(kbar >= 1 && kbar <= n, "global community count out of range");
    assert_eq!(
        k_local.len(),
        config.m,
        "need one local community count per layer class"
    );

    let embedding = estimate_embedding(a, config)?;

    let global_cfg = KmeansConfig {
        seed: derive_seed(kmeans_config.seed, 1, 0),
        ..kmeans_config.clone()
    };
    let global = kmeans(embedding.u.matrix(), kbar, &global_cfg);

    let layers = match layer_method {
        LayerClusterMethod::Kmeans => {
            let layer_cfg = KmeansConfig {
                seed: derive_seed(kmeans_config.seed, 2, 0),
                ..kmeans_config.clone()
            };
            kmeans(embedding.w.matrix(), config.m, &layer_cfg)
        }
        LayerClusterMethod::Supnorm { epsilon0 } => {
            let eps = epsilon0
                .unwrap_or_else(|| 0.5 * (config.m as f64 / l as f64).sqrt())
                .clamp(1e-9, 1.0 - 1e-9);
            supnorm_cluster(embedding.w.matrix(), config.m, eps)?
        }
    };

    let mut locals = Vec::with_capacity(layers.k());
    for class in 1..=layers.k() {
        let members = layers.members(class);
        if members.is_empty() {
            log::warn!("layer class {class} has no layers; skipping its local clustering");
            locals.push(None);
            continue;
        }
        let mut sum = DenseMatrix::zeros(n, n);
        for &l_idx in &members {
            sum += a.slice(l_idx);
        }
        let local_cfg = KmeansConfig {
            seed: derive_seed(kmeans_config.seed, 3, class as u64),
            ..kmeans_config.clone()
        };
        locals.push(Some(spectral_cluster(&sum, k_local[class - 1], &local_cfg)?));
    }

    Ok(PipelineResult { global, layers, locals, embedding })
}
