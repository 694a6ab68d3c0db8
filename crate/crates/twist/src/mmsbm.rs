//! The mixture multi-layer stochastic block model: every layer of an
//! `n`-node multi-layer network is drawn from one of `m` stochastic block
//! models, chosen i.i.d. from a mixture weight vector. The module builds
//! parameters, samples adjacency tensors, and computes the exact
//! low-rank structure of the expected tensor for tests and diagnostics.

use nalgebra::DVector;
use rand::distributions::WeightedIndex;
use rand::prelude::*;

use crate::clustering::Partition;
use crate::error::{Error, Result};
use crate::rng::{seeded, substream};
use crate::tensor::{thin_svd, DenseMatrix, OrthonormalFactor, Tensor3};

/// Parameters of the mixture multi-layer stochastic block model.
///
/// Class `j` has a binary membership matrix `z[j]` (`n` rows, one 1 per
/// row over `k[j]` communities) and a symmetric connection probability
/// matrix `b[j]`; `pi[j]` is the probability that a layer is drawn from
/// class `j`.
#[derive(Debug, Clone)]
pub struct MmsbmParams {
    n: usize,
    k: Vec<usize>,
    z: Vec<DenseMatrix>,
    b: Vec<DenseMatrix>,
    pi: Vec<f64>,
}

impl MmsbmParams {
    pub fn new(z: Vec<DenseMatrix>, b: Vec<DenseMatrix>, pi: Vec<f64>) -> Result<Self> {
        let m = z.len();
        if m == 0 || b.len() != m || pi.len() != m {
            return Err(Error::InvalidParameter(format!(
                "need matching non-empty class lists: |Z|={}, |B|={}, |pi|={}",
                z.len(),
                b.len(),
                pi.len()
            )));
        }
        let n = z[0].nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("node count must be positive".into()));
        }
        let mut k = Vec::with_capacity(m);
        for (j, zj) in z.iter().enumerate() {
            if zj.nrows() != n {
                return Err(Error::InvalidParameter(format!(
                    "membership matrix {j} has {} rows, expected {n}",
                    zj.nrows()
                )));
            }
            let kj = zj.ncols();
            if kj == 0 {
                return Err(Error::InvalidParameter(format!(
                    "membership matrix {j} has no communities"
                )));
            }
            for i in 0..n {
                let row = zj.row(i);
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || zeros != kj - 1 {
                    return Err(Error::InvalidParameter(format!(
                        "membership matrix {j}, row {i}: rows must have exactly one 1 and zeros elsewhere"
                    )));
                }
            }
            k.push(kj);
        }
        for (j, bj) in b.iter().enumerate() {
            if bj.nrows() != k[j] || bj.ncols() != k[j] {
                return Err(Error::InvalidParameter(format!(
                    "connection matrix {j} must be {0}x{0}",
                    k[j]
                )));
            }
            for r in 0..k[j] {
                for c in 0..k[j] {
                    let v = bj[(r, c)];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidParameter(format!(
                            "connection matrix {j} entry ({r},{c}) = {v} outside [0,1]"
                        )));
                    }
                    if (bj[(r, c)] - bj[(c, r)]).abs() > 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "connection matrix {j} is not symmetric at ({r},{c})"
                        )));
                    }
                }
            }
        }
        if pi.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParameter("mixture weights must lie in [0,1]".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { n, k, z, b, pi })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of layer classes.
    pub fn m(&self) -> usize {
        self.z.len()
    }

    /// Community counts per class.
    pub fn k(&self) -> &[usize] {
        &self.k
    }

    pub fn membership(&self, class: usize) -> &DenseMatrix {
        &self.z[class]
    }

    pub fn connection(&self, class: usize) -> &DenseMatrix {
        &self.b[class]
    }

    pub fn mixture(&self) -> &[f64] {
        &self.pi
    }

    /// Total community count summed over classes.
    pub fn total_communities(&self) -> usize {
        self.k.iter().sum()
    }

    /// 0-based community index of every node under class `class`.
    fn community_of(&self, class: usize) -> Vec<usize> {
        let zj = &self.z[class];
        (0..self.n)
            .map(|i| (0..zj.ncols()).find(|&c| zj[(i, c)] == 1.0).unwrap())
            .collect()
    }
}

/// Class assignment of each layer, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLabels {
    labels: Vec<usize>,
}

impl LayerLabels {
    pub fn new(labels: Vec<usize>, m: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("need at least one layer".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < 1 || l > m) {
            return Err(Error::InvalidParameter(format!(
                "layer label {bad} outside 1..={m}"
            )));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Layer counts per class, indexed by class label minus one.
    pub fn counts(&self, m: usize) -> Vec<usize> {
        let mut c = vec![0usize; m];
        for &l in &self.labels {
            c[l - 1] += 1;
        }
        c
    }

    pub fn as_partition(&self, m: usize) -> Partition {
        Partition::new(self.labels.clone(), m)
    }
}

/// Exact low-rank structure of the expected adjacency tensor given the
/// layer labels: the expected tensor factors through a rank-`r` node
/// factor applied to both node modes and an orthonormal layer factor.
#[derive(Debug, Clone)]
pub struct OracleDecomposition {
    /// Expected adjacency tensor, `n x n x L`, diagonal included.
    pub expected_tensor: Tensor3,
    /// Horizontal stack of the class membership matrices (classes absent
    /// from the labels dropped), `n x sum(k_j)`.
    pub zbar: DenseMatrix,
    /// Top-`r` left singular factor of `zbar`.
    pub ubar: OrthonormalFactor,
    /// Layer factor: the one-hot class indicator matrix with columns
    /// scaled to unit norm.
    pub wbar: OrthonormalFactor,
    /// Core tensor, `r x r x m_present`.
    pub core: Tensor3,
    /// Smallest positive singular value over the three unfoldings of the
    /// core at Tucker ranks `(r, r, m_present)`.
    pub sigma_min_core: f64,
    /// Largest row norm of `ubar`.
    pub delta1: f64,
    /// Largest row norm of `wbar`.
    pub delta2: f64,
    /// Rank of `zbar`.
    pub r: usize,
    /// Singular values of `zbar` (all, descending).
    pub zbar_singular_values: Vec<f64>,
}

/// Assortative planted-partition parameters: every class shares the
/// connection matrix `B = p*I + q*(J - I)` with `q = out_in_ratio * p`
/// and `p` solved from the expected average degree
/// `d = (n/K)*p + n*(K-1)/K*q`; memberships are uniform i.i.d. over `K`
/// communities per class, and the mixture is uniform over `m` classes.
pub fn planted_params(
    n: usize,
    m: usize,
    k: usize,
    avg_degree: f64,
    out_in_ratio: f64,
    seed: u64,
) -> Result<MmsbmParams> {
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::InvalidParameter("n, m and K must be positive".into()));
    }
    if !(0.0..=1.0).contains(&out_in_ratio) {
        return Err(Error::InvalidParameter(format!(
            "out-in ratio {out_in_ratio} outside [0,1]"
        )));
    }
    if !(avg_degree > 0.0) {
        return Err(Error::InvalidParameter("average degree must be positive".into()));
    }
    let denom = n as f64 * (1.0 + (k as f64 - 1.0) * out_in_ratio);
    let p = avg_degree * k as f64 / denom;
    if p > 1.0 {
        let max_degree = denom / k as f64;
        return Err(Error::InvalidParameter(format!(
            "average degree {avg_degree} needs within-community probability {p:.4} > 1; \
             the maximum feasible average degree is {max_degree:.4}"
        )));
    }
    let q = out_in_ratio * p;
    let b_common = DenseMatrix::from_fn(k, k, |r, c| if r == c { p } else { q });
    let mut z = Vec::with_capacity(m);
    for j in 0..m {
        let mut rng = substream(seed, j as u64);
        let mut zj = DenseMatrix::zeros(n, k);
        for i in 0..n {
            zj[(i, rng.gen_range(0..k))] = 1.0;
        }
        z.push(zj);
    }
    let b = vec![b_common; m];
    let pi = vec![1.0 / m as f64; m];
    MmsbmParams::new(z, b, pi)
}

/// Draws `L` i.i.d. layer labels from the mixture weights.
pub fn sample_labels(params: &MmsbmParams, l: usize, seed: u64) -> LayerLabels {
    assert!(l >= 1, "need at least one layer");
    let mut rng = seeded(seed);
    let dist = WeightedIndex::new(params.mixture()).expect("mixture weights validated");
    let labels = (0..l).map(|_| dist.sample(&mut rng) + 1).collect();
    LayerLabels::new(labels, params.m()).expect("labels in range by construction")
}

/// Samples the adjacency tensor: layer `l` is an undirected Bernoulli
/// graph whose edge probability between nodes `i1` and `i2` is the
/// connection probability of their communities under the layer's class.
/// The diagonal is sampled the same way when `self_loops` is set and is
/// zero otherwise. Each layer uses its own RNG substream, so layers are
/// independent and order-insensitive.
pub fn sample_tensor(
    params: &MmsbmParams,
    labels: &LayerLabels,
    seed: u64,
    self_loops: bool,
) -> Tensor3 {
    let n = params.n();
    let communities: Vec<Vec<usize>> = (0..params.m()).map(|j| params.community_of(j)).collect();
    let l_total = labels.len();
    let mut t = Tensor3::zeros(n, n, l_total);
    for (l, &class) in labels.labels().iter().enumerate() {
        let mut rng = substream(seed, l as u64);
        let com = &communities[class - 1];
        let bj = params.connection(class - 1);
        for i1 in 0..n {
            let start = if self_loops { i1 } else { i1 + 1 };
            for i2 in start..n {
                let p = bj[(com[i1], com[i2])];
                if rng.gen_bool(p) {
                    t.set(i1, i2, l, 1.0);
                    t.set(i2, i1, l, 1.0);
                }
            }
        }
    }
    t
}

/// Horizontal stack `(Z_1 ... Z_m)` of all membership matrices,
/// `n x total_communities`.
pub fn stacked_membership(params: &MmsbmParams) -> DenseMatrix {
    stacked_membership_of(params, &(0..params.m()).collect::<Vec<_>>())
}

fn stacked_membership_of(params: &MmsbmParams, classes: &[usize]) -> DenseMatrix {
    let n = params.n();
    let total: usize = classes.iter().map(|&j| params.k()[j]).sum();
    let mut zbar = DenseMatrix::zeros(n, total);
    let mut offset = 0;
    for &j in classes {
        let kj = params.k()[j];
        zbar.view_mut((0, offset), (n, kj)).copy_from(params.membership(j));
        offset += kj;
    }
    zbar
}

/// Thin SVD of the stacked membership matrix with its numeric rank.
pub struct MembershipSvd {
    /// Left factor restricted to the top `rank` columns, `n x rank`.
    pub factor: OrthonormalFactor,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Right factor restricted to the top `rank` columns.
    pub right: DenseMatrix,
    pub rank: usize,
}

/// Ratio cutoff for the numeric rank of the stacked membership matrix.
const RANK_REL_CUTOFF: f64 = 1e-10;

fn membership_svd_of(zbar: &DenseMatrix) -> Result<MembershipSvd> {
    let (u, s, v) = thin_svd(zbar)?;
    let s1 = s[0];
    if s1 <= 0.0 {
        return Err(Error::Degenerate("stacked membership matrix is zero".into()));
    }
    // A ratio near the cutoff from either side means the rank decision is
    // not numerically trustworthy.
    if s.iter().any(|&sv| {
        let ratio = sv / s1;
        ratio > 1e-13 && ratio < 1e-7
    }) {
        return Err(Error::Degenerate(format!(
            "rank of the stacked membership matrix is numerically ambiguous: \
             singular value ratios {:?}",
            s.iter().map(|&sv| sv / s1).collect::<Vec<_>>()
        )));
    }
    let rank = s.iter().filter(|&&sv| sv / s1 > RANK_REL_CUTOFF).count();
    let factor = OrthonormalFactor::new(u.columns(0, rank).into_owned())?;
    Ok(MembershipSvd {
        factor,
        singular_values: s,
        right: v.columns(0, rank).into_owned(),
        rank,
    })
}

/// Thin SVD of the stacked membership matrix of all classes.
pub fn membership_svd(params: &MmsbmParams) -> Result<MembershipSvd> {
    membership_svd_of(&stacked_membership(params))
}

/// Builds the exact factorization of the expected adjacency tensor for
/// the given labels. Classes that never occur in `labels` are dropped
/// with a warning (the expected tensor does not depend on them).
pub fn oracle_decomposition(
    params: &MmsbmParams,
    labels: &LayerLabels,
) -> Result<OracleDecomposition> {
    let counts = labels.counts(params.m());
    let present: Vec<usize> = (0..params.m()).filter(|&j| counts[j] > 0).collect();
    for j in 0..params.m() {
        if counts[j] == 0 {
            log::warn!("class {} has no layers in the sample; dropping it from the oracle", j + 1);
        }
    }
    let m_eff = present.len();
    let l_total = labels.len();

    // Stacked membership and block-diagonal probability tensor over the
    // present classes.
    let zbar = stacked_membership_of(params, &present);
    let total: usize = present.iter().map(|&j| params.k()[j]).sum();
    let mut prob = Tensor3::zeros(total, total, m_eff);
    let mut offset = 0;
    for (slot, &j) in present.iter().enumerate() {
        let kj = params.k()[j];
        let bj = params.connection(j);
        for r in 0..kj {
            for c in 0..kj {
                prob.set(offset + r, offset + c, slot, bj[(r, c)]);
            }
        }
        offset += kj;
    }

    // One-hot layer-class indicator over the present classes.
    let slot_of: Vec<usize> = {
        let mut map = vec![usize::MAX; params.m()];
        for (slot, &j) in present.iter().enumerate() {
            map[j] = slot;
        }
        map
    };
    let mut w = DenseMatrix::zeros(l_total, m_eff);
    for (l, &class) in labels.labels().iter().enumerate() {
        w[(l, slot_of[class - 1])] = 1.0;
    }

    let expected_tensor = prob
        .mode_product(&zbar, 1)
        .mode_product(&zbar, 2)
        .mode_product(&w, 3);

    let svd = membership_svd_of(&zbar)?;
    let r = svd.rank;
    let ubar = svd.factor;

    // Column-normalized indicator: columns are orthonormal because the
    // class supports are disjoint.
    let layer_counts: Vec<f64> = present.iter().map(|&j| counts[j] as f64).collect();
    let mut wbar = w.clone();
    for (slot, &cnt) in layer_counts.iter().enumerate() {
        wbar.column_mut(slot).scale_mut(1.0 / cnt.sqrt());
    }
    let wbar = OrthonormalFactor::new(wbar)?;

    // Core: fold the remaining factors into the probability tensor so the
    // expected tensor reconstructs from (core, ubar, ubar, wbar).
    let dr: DenseMatrix = DenseMatrix::from_diagonal(&DVector::from_row_slice(
        &svd.singular_values[..r],
    )) * svd.right.transpose();
    let scale = DenseMatrix::from_diagonal(&DVector::from_iterator(
        m_eff,
        layer_counts.iter().map(|&c| c.sqrt()),
    ));
    let core = prob
        .mode_product(&dr, 1)
        .mode_product(&dr, 2)
        .mode_product(&scale, 3);

    let sigma_min_core = core_min_singular_value(&core, r, m_eff)?;
    let delta1 = ubar.max_row_norm();
    let delta2 = wbar.max_row_norm();
    Ok(OracleDecomposition {
        expected_tensor,
        zbar,
        ubar,
        wbar,
        core,
        sigma_min_core,
        delta1,
        delta2,
        r,
        zbar_singular_values: svd.singular_values,
    })
}

/// Smallest singular value over the three unfoldings at Tucker ranks
/// `(r, r, m)`.
fn core_min_singular_value(core: &Tensor3, r: usize, m: usize) -> Result<f64> {
    let mut smallest = f64::INFINITY;
    for (mode, rank) in [(1usize, r), (2, r), (3, m)] {
        let (_, s, _) = thin_svd(&core.unfold(mode))?;
        smallest = smallest.min(s[rank - 1]);
    }
    Ok(smallest)
}

/// Partition of the nodes by distinct rows of the stacked membership
/// matrix: two nodes share a global community exactly when they share a
/// community under every class.
pub fn global_membership(params: &MmsbmParams) -> Partition {
    let zbar = stacked_membership(params);
    let n = params.n();
    let mut reps: Vec<usize> = Vec::new();
    let mut labels = vec![0usize; n];
    for i in 0..n {
        let found = reps.iter().position(|&r| zbar.row(r) == zbar.row(i));
        match found {
            Some(c) => labels[i] = c + 1,
            None => {
                reps.push(i);
                labels[i] = reps.len();
            }
        }
    }
    let k = reps.len();
    Partition::new(labels, k)
}

/// Two layer classes over one shared balanced two-community membership
/// whose connection matrices swap the within and between probabilities.
/// The expected summed adjacency is then proportional to the all-ones
/// matrix (rank one), while each class alone carries a full-rank signal:
/// a worst case for any method that aggregates layers by summation.
pub fn complementary_pair_params(n: usize, avg_degree: f64, out_in_ratio: f64) -> Result<MmsbmParams> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParameter("node count must be even and at least 2".into()));
    }
    if !(0.0..1.0).contains(&out_in_ratio) {
        return Err(Error::InvalidParameter(format!(
            "out-in ratio {out_in_ratio} outside [0,1)"
        )));
    }
    let p = 2.0 * avg_degree / (n as f64 * (1.0 + out_in_ratio));
    if p > 1.0 {
        let max_degree = n as f64 * (1.0 + out_in_ratio) / 2.0;
        return Err(Error::InvalidParameter(format!(
            "average degree {avg_degree} needs probability {p:.4} > 1; \
             the maximum feasible average degree is {max_degree:.4}"
        )));
    }
    let q = out_in_ratio * p;
    let half = n / 2;
    let z = DenseMatrix::from_fn(n, 2, |i, c| if (i < half) == (c == 0) { 1.0 } else { 0.0 });
    let b1 = DenseMatrix::from_row_slice(2, 2, &[p, q, q, p]);
    let b2 = DenseMatrix::from_row_slice(2, 2, &[q, p, p, q]);
    MmsbmParams::new(vec![z.clone(), z], vec![b1, b2], vec![0.5, 0.5])
}

/// Small two-class example over four equal node groups: both classes
/// keep the first group as its own community, but class 1 merges groups
/// 2 and 3 while class 2 merges groups 3 and 4. The distinct-row
/// partition of the stacked memberships therefore has four global
/// communities even though each class has only three.
pub fn split_merge_example(group: usize) -> MmsbmParams {
    assert!(group >= 1, "group size must be positive");
    let n = 4 * group;
    let quarter = |i: usize| i / group;
    // Class 1 communities: {0}, {1,2}, {3}; class 2: {0}, {1}, {2,3}.
    let com1 = [0usize, 1, 1, 2];
    let com2 = [0usize, 1, 2, 2];
    let z1 = DenseMatrix::from_fn(n, 3, |i, c| if com1[quarter(i)] == c { 1.0 } else { 0.0 });
    let z2 = DenseMatrix::from_fn(n, 3, |i, c| if com2[quarter(i)] == c { 1.0 } else { 0.0 });
    let b = DenseMatrix::from_fn(3, 3, |r, c| if r == c { 0.6 } else { 0.1 });
    MmsbmParams::new(vec![z1, z2], vec![b.clone(), b], vec![0.5, 0.5]).expect("valid by construction")
}

/// Expected adjacency of a single layer of class `class` (1-based),
/// diagonal included: `Z_j B_j Z_j^T`.
pub fn expected_slice(params: &MmsbmParams, class: usize) -> DenseMatrix {
    let zj = params.membership(class - 1);
    zj * params.connection(class - 1) * zj.transpose()
}

/// Largest within-community connection probability over all classes.
pub fn max_connection_probability(params: &MmsbmParams) -> f64 {
    (0..params.m())
        .map(|j| params.connection(j).max())
        .fold(0.0, f64::max)
}
