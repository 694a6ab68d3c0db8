//! K-means (Lloyd with k-means++ seeding), greedy representative-based
//! layer clustering with automatic radius adjustment, adjacency spectral
//! clustering, and the misclustering metric (minimal Hamming disagreement
//! over label permutations).

use itertools::Itertools;
use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::{top_eigenvectors_by_magnitude, DenseMatrix};

/// Hard assignment of `N` items to clusters `1..=K`. Clusters may be
/// empty; labels are always in range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Panics unless every label lies in `1..=k` and `k >= 1`.
    pub fn new(labels: Vec<usize>, k: usize) -> Self {
        assert!(k >= 1, "cluster count must be at least 1");
        assert!(
            labels.iter().all(|&l| (1..=k).contains(&l)),
            "labels must lie in 1..={k}"
        );
        Self { labels, k }
    }

    /// Infers `k` as the largest label present.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().copied().max().unwrap_or(1).max(1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Item counts per cluster, indexed by label minus one.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.k];
        for &l in &self.labels {
            s[l - 1] += 1;
        }
        s
    }

    /// Indices assigned to cluster `label`.
    pub fn members(&self, label: usize) -> Vec<usize> {
        assert!((1..=self.k).contains(&label), "label out of range");
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// Knobs for Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KmeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 100, tol: 1e-8, seed: 0 }
    }
}

fn row_sq_dist(points: &DenseMatrix, i: usize, center: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..points.ncols() {
        let d = points[(i, j)] - center[j];
        acc += d * d;
    }
    acc
}

fn count_distinct_rows(points: &DenseMatrix) -> usize {
    let mut seen: Vec<Vec<u64>> = (0..points.nrows())
        .map(|i| points.row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    seen.sort();
    seen.dedup();
    seen.len()
}

/// k-means++ seeding: first center uniform, each further center drawn
/// with probability proportional to squared distance from the nearest
/// chosen center.
fn seed_centers(points: &DenseMatrix, k: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let n = points.nrows();
    let mut centers = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centers.push(points.row(first).transpose());
    let mut d2: Vec<f64> = (0..n).map(|i| row_sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        // Positive as long as k does not exceed the distinct-row count.
        let mut target = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                pick = i;
                break;
            }
        }
        let c = points.row(pick).transpose();
        for i in 0..n {
            d2[i] = d2[i].min(row_sq_dist(points, i, &c));
        }
        centers.push(c);
    }
    centers
}

/// One Lloyd run. Returns 0-based labels, the final within-cluster sum of
/// squares, and the WCSS recorded after every assignment step.
fn lloyd_single(
    points: &DenseMatrix,
    k: usize,
    max_iters: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, f64, Vec<f64>) {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centers = seed_centers(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut wcss;
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        // Assignment; ties go to the lowest cluster index.
        wcss = 0.0;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = row_sq_dist(points, i, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            labels[i] = best;
            wcss += best_d;
        }
        trace.push(wcss);
        // Update step.
        let mut sums = vec![DVector::<f64>::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums[labels[i]] += points.row(i).transpose();
            counts[labels[i]] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an emptied cluster at the point farthest from its
                // current center (lowest index on ties).
                let far = (0..n)
                    .max_by(|&a, &b| {
                        row_sq_dist(points, a, &centers[labels[a]])
                            .partial_cmp(&row_sq_dist(points, b, &centers[labels[b]]))
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                let new_c = points.row(far).transpose();
                shift = shift.max((&new_c - &centers[c]).norm());
                centers[c] = new_c;
            } else {
                let new_c = &sums[c] / counts[c] as f64;
                shift = shift.max((&new_c - &centers[c]).norm());
                centers[c] = new_c;
            }
        }
        if shift < tol {
            break;
        }
    }
    // Final assignment so labels are consistent with the last centers.
    wcss = 0.0;
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = row_sq_dist(points, i, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        wcss += best_d;
    }
    trace.push(wcss);
    (labels, wcss, trace)
}

/// Renames cluster ids to 1-based labels in order of first appearance,
/// dropping empty clusters.
fn compact_labels(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<Option<usize>> = vec![None; raw.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0usize;
    let labels = raw
        .iter()
        .map(|&r| {
            *map[r].get_or_insert_with(|| {
                next += 1;
                next
            })
        })
        .collect();
    (labels, next)
}

/// Lloyd's algorithm on the rows of `points`, k-means++ seeded, best of
/// `config.restarts` runs by within-cluster sum of squares. Deterministic
/// given `config.seed`. If the inputs contain fewer than `k` distinct
/// rows, as many clusters as distinct rows are returned with a warning.
pub fn kmeans(points: &DenseMatrix, k: usize, config: &KmeansConfig) -> Partition {
    let n = points.nrows();
    assert!(n >= 1, "need at least one point");
    assert!(k >= 1 && k <= n, "cluster count k={k} out of range 1..={n}");
    assert!(config.restarts >= 1 && config.max_iters >= 1, "invalid kmeans config");
    let distinct = count_distinct_rows(points);
    let k_eff = if distinct < k {
        log::warn!("kmeans: only {distinct} distinct rows for k={k}; returning {distinct} clusters");
        distinct
    } else {
        k
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..config.restarts {
        let mut rng = substream(config.seed, restart as u64);
        let (labels, wcss, _) = lloyd_single(points, k_eff, config.max_iters, config.tol, &mut rng);
        if best.as_ref().map_or(true, |(_, w)| wcss < *w) {
            best = Some((labels, wcss));
        }
    }
    let (raw, _) = best.unwrap();
    let (labels, k_used) = compact_labels(&raw);
    Partition::new(labels, k_used)
}

/// One greedy scan: walk rows in order, joining the nearest existing
/// representative if within `eps`, otherwise opening a new cluster with
/// this row as representative. Returns 0-based cluster ids.
fn representative_scan(w: &DenseMatrix, eps: f64) -> Vec<usize> {
    let l = w.nrows();
    let mut reps: Vec<usize> = Vec::new();
    let mut labels = vec![0usize; l];
    for row in 0..l {
        let mut best: Option<(usize, f64)> = None;
        for (c, &r) in reps.iter().enumerate() {
            let d = (w.row(row) - w.row(r)).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        match best {
            Some((c, d)) if d <= eps => labels[row] = c,
            _ => {
                labels[row] = reps.len();
                reps.push(row);
            }
        }
    }
    labels
}

/// Clusters the rows of `w` into exactly `m` groups by greedy
/// representative scanning with threshold `eps`, starting from
/// `epsilon0` and adjusting: too many clusters doubles `eps`, too few
/// halves it, switching to bisection once the two regimes bracket the
/// target. Fails after 64 scans, reporting the closest cluster count
/// achieved.
pub fn supnorm_cluster(w: &DenseMatrix, m: usize, epsilon0: f64) -> Result<Partition> {
    assert!(w.nrows() >= 1, "need at least one row");
    assert!(m >= 1, "target cluster count must be at least 1");
    assert!(
        epsilon0 > 0.0 && epsilon0 < 1.0,
        "initial threshold must lie in (0,1)"
    );
    let mut eps = epsilon0;
    // lo: threshold known to give too many clusters; hi: too few.
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut closest: Option<usize> = None;
    for _ in 0..64 {
        let raw = representative_scan(w, eps);
        let k = raw.iter().max().unwrap() + 1;
        if k == m {
            let labels = raw.into_iter().map(|c| c + 1).collect();
            return Ok(Partition::new(labels, m));
        }
        if closest.map_or(true, |c| k.abs_diff(m) < c.abs_diff(m)) {
            closest = Some(k);
        }
        if k > m {
            lo = Some(eps);
            eps = match hi {
                Some(h) => (eps + h) / 2.0,
                None => eps * 2.0,
            };
        } else {
            hi = Some(eps);
            eps = match lo {
                Some(l) => (eps + l) / 2.0,
                None => eps / 2.0,
            };
        }
    }
    Err(Error::ClusterCountUnreachable {
        target: m,
        closest: closest.unwrap(),
        attempts: 64,
    })
}

/// Adjacency spectral clustering: k-means on the rows of the top-`k`
/// eigenvector basis (by absolute eigenvalue) of the symmetric matrix `s`.
pub fn spectral_cluster(s: &DenseMatrix, k: usize, config: &KmeansConfig) -> Result<Partition> {
    let basis = top_eigenvectors_by_magnitude(s, k)?;
    Ok(kmeans(basis.matrix(), k, config))
}

fn agreement_matrix(est: &Partition, truth: &Partition) -> Vec<Vec<usize>> {
    let k = est.k().max(truth.k());
    let mut c = vec![vec![0usize; k]; k];
    for (&a, &b) in est.labels().iter().zip(truth.labels()) {
        c[a - 1][b - 1] += 1;
    }
    c
}

fn max_agreement_exact(c: &[Vec<usize>]) -> usize {
    let k = c.len();
    (0..k)
        .permutations(k)
        .map(|perm| (0..k).map(|b| c[perm[b]][b]).sum())
        .max()
        .unwrap()
}

/// Minimum-cost square assignment (Kuhn–Munkres with potentials).
fn min_cost_assignment(cost: &[Vec<i64>]) -> i64 {
    let n = cost.len();
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

fn max_agreement_hungarian(c: &[Vec<usize>]) -> usize {
    let k = c.len();
    let m = c.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = c
        .iter()
        .map(|row| row.iter().map(|&v| m - v as i64).collect())
        .collect();
    ((k as i64) * m - min_cost_assignment(&cost)) as usize
}

fn misclustering_impl(est: &Partition, truth: &Partition, force_hungarian: bool) -> (usize, f64) {
    assert_eq!(est.len(), truth.len(), "partitions must cover the same items");
    let n = est.len();
    let c = agreement_matrix(est, truth);
    let agree = if c.len() <= 8 && !force_hungarian {
        max_agreement_exact(&c)
    } else {
        max_agreement_hungarian(&c)
    };
    let count = n - agree;
    (count, count as f64 / n as f64)
}

/// Minimal Hamming disagreement between two partitions over all
/// relabelings, as a count and a rate in `[0,1]`. Exact permutation
/// search up to 8 clusters, Hungarian assignment beyond.
pub fn misclustering(est: &Partition, truth: &Partition) -> (usize, f64) {
    misclustering_impl(est, truth, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    /// Standard normal via Box-Muller.
    fn normal(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn wcss_of(points: &DenseMatrix, p: &Partition) -> f64 {
        let mut acc = 0.0;
        for c in 1..=p.k() {
            let members = p.members(c);
            if members.is_empty() {
                continue;
            }
            let mut center = DVector::zeros(points.ncols());
            for &i in &members {
                center += points.row(i).transpose();
            }
            center /= members.len() as f64;
            for &i in &members {
                acc += row_sq_dist(points, i, &center);
            }
        }
        acc
    }

    #[test]
    fn kmeans_singletons_when_k_equals_n() {
        let pts = DenseMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let p = kmeans(&pts, 4, &KmeansConfig::default());
        assert_eq!(p.k(), 4);
        assert!(wcss_of(&pts, &p) <= 1e-15);
        assert_eq!(p.sizes(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn kmeans_separates_two_gaussian_blobs() {
        let mut rng = seeded(7);
        let sigma = 0.5;
        let sep = 10.0 * sigma;
        let mut rows = Vec::new();
        for _ in 0..40 {
            rows.push([normal(&mut rng) * sigma, normal(&mut rng) * sigma]);
        }
        for _ in 0..40 {
            rows.push([sep + normal(&mut rng) * sigma, sep + normal(&mut rng) * sigma]);
        }
        let pts = DenseMatrix::from_fn(80, 2, |i, j| rows[i][j]);
        let p = kmeans(&pts, 2, &KmeansConfig::default());
        let truth = Partition::new(
            (0..80).map(|i| if i < 40 { 1 } else { 2 }).collect(),
            2,
        );
        assert_eq!(misclustering(&p, &truth).0, 0);
    }

    #[test]
    fn kmeans_exact_on_repeated_distinct_rows() {
        // Four distinct rows, each duplicated: zero-variance clusters.
        let base = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let pts = DenseMatrix::from_fn(12, 2, |i, j| base[i % 4][j]);
        let p = kmeans(&pts, 4, &KmeansConfig::default());
        assert_eq!(p.k(), 4);
        assert!(wcss_of(&pts, &p) <= 1e-15);
        for i in 0..12 {
            for l in 0..12 {
                if i % 4 == l % 4 {
                    assert_eq!(p.labels()[i], p.labels()[l]);
                }
            }
        }
    }

    #[test]
    fn kmeans_caps_clusters_at_distinct_rows() {
        let pts = DenseMatrix::from_row_slice(6, 1, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let p = kmeans(&pts, 5, &KmeansConfig::default());
        assert_eq!(p.k(), 3);
    }

    #[test]
    fn kmeans_is_deterministic_for_a_fixed_seed() {
        let mut rng = seeded(21);
        let pts = DenseMatrix::from_fn(30, 3, |_, _| rng.gen_range(-1.0..1.0));
        let cfg = KmeansConfig { seed: 99, ..KmeansConfig::default() };
        let a = kmeans(&pts, 3, &cfg);
        let b = kmeans(&pts, 3, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn kmeans_rejects_k_above_n() {
        let pts = DenseMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        kmeans(&pts, 3, &KmeansConfig::default());
    }

    #[test]
    fn lloyd_wcss_trace_is_non_increasing() {
        let mut rng = seeded(5);
        let pts = DenseMatrix::from_fn(60, 2, |_, _| rng.gen_range(-1.0..1.0));
        for restart in 0..5u64 {
            let mut r = substream(42, restart);
            let (_, _, trace) = lloyd_single(&pts, 4, 100, 1e-8, &mut r);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "WCSS increased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn supnorm_single_cluster_of_identical_rows() {
        let w = DenseMatrix::from_element(5, 2, 0.3);
        let p = supnorm_cluster(&w, 1, 0.5).unwrap();
        assert_eq!(p.k(), 1);
        assert!(p.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn supnorm_singletons_at_mutual_distance_one() {
        // Rows e_i / sqrt(2) are at pairwise distance exactly 1.
        let l = 5;
        let w = DenseMatrix::from_fn(l, l, |i, j| if i == j { 1.0 / 2f64.sqrt() } else { 0.0 });
        let p = supnorm_cluster(&w, l, 0.5).unwrap();
        assert_eq!(p.k(), l);
        assert_eq!(p.sizes(), vec![1; l]);
    }

    fn three_group_rows(spread: f64, sep: f64) -> (DenseMatrix, Partition) {
        let anchors = [[0.0, 0.0], [sep, 0.0], [0.0, sep]];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (g, a) in anchors.iter().enumerate() {
            for t in 0..4 {
                let jitter = spread / 2.0 * (t as f64 / 3.0);
                rows.push([a[0] + jitter, a[1] - jitter]);
                truth.push(g + 1);
            }
        }
        let m = DenseMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        (m, Partition::new(truth, 3))
    }

    #[test]
    fn supnorm_recovers_three_separated_groups() {
        let (w, truth) = three_group_rows(0.01, 0.5);
        let p = supnorm_cluster(&w, 3, 0.1).unwrap();
        assert_eq!(misclustering(&p, &truth).0, 0);
    }

    #[test]
    fn supnorm_threshold_adjustment_reaches_target() {
        let (w, truth) = three_group_rows(0.01, 0.5);
        // Starting radius merges everything; halving must recover m=3.
        let p = supnorm_cluster(&w, 3, 0.9).unwrap();
        assert_eq!(misclustering(&p, &truth).0, 0);
        // Starting radius splits groups; doubling must recover m=3.
        let p2 = supnorm_cluster(&w, 3, 1e-4).unwrap();
        assert_eq!(misclustering(&p2, &truth).0, 0);
    }

    #[test]
    fn supnorm_reports_closest_count_when_target_unreachable() {
        let w = DenseMatrix::from_element(4, 2, 1.0 / 2f64.sqrt());
        match supnorm_cluster(&w, 3, 0.5) {
            Err(Error::ClusterCountUnreachable { target, closest, attempts }) => {
                assert_eq!(target, 3);
                assert_eq!(closest, 1);
                assert_eq!(attempts, 64);
            }
            other => panic!("expected unreachable-count error, got {other:?}"),
        }
    }

    #[test]
    fn misclustering_basic_cases() {
        let t = Partition::new(vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2], 2);
        assert_eq!(misclustering(&t, &t), (0, 0.0));
        // Renaming labels costs nothing.
        let renamed = Partition::new(t.labels().iter().map(|&l| 3 - l).collect(), 2);
        assert_eq!(misclustering(&renamed, &t), (0, 0.0));
        // Flipping exactly one item costs one.
        let mut flipped = t.labels().to_vec();
        flipped[0] = 2;
        let est = Partition::new(flipped, 2);
        assert_eq!(misclustering(&est, &t), (1, 0.1));
    }

    #[test]
    fn misclustering_handles_unequal_cluster_counts() {
        let truth = Partition::new(vec![1, 1, 2, 2, 3, 3], 3);
        let est = Partition::new(vec![1, 1, 1, 1, 2, 2], 2);
        // Best match: est 1 -> truth 1 (or 2), est 2 -> truth 3.
        assert_eq!(misclustering(&est, &truth).0, 2);
    }

    #[test]
    #[should_panic(expected = "same items")]
    fn misclustering_rejects_length_mismatch() {
        let a = Partition::new(vec![1, 2], 2);
        let b = Partition::new(vec![1, 2, 1], 2);
        misclustering(&a, &b);
    }

    #[test]
    fn hungarian_matches_exact_search() {
        let mut rng = seeded(33);
        for _ in 0..50 {
            let n = 40;
            let k = rng.gen_range(2..=6);
            let est = Partition::new((0..n).map(|_| rng.gen_range(1..=k)).collect(), k);
            let truth = Partition::new((0..n).map(|_| rng.gen_range(1..=k)).collect(), k);
            assert_eq!(
                misclustering_impl(&est, &truth, false),
                misclustering_impl(&est, &truth, true)
            );
        }
    }

    #[test]
    fn spectral_cluster_on_block_diagonal_matrix() {
        // Two disconnected cliques: exact split.
        let n = 10;
        let s = DenseMatrix::from_fn(n, n, |i, j| {
            if i != j && (i < 5) == (j < 5) { 1.0 } else { 0.0 }
        });
        let p = spectral_cluster(&s, 2, &KmeansConfig::default()).unwrap();
        let truth = Partition::new((0..n).map(|i| if i < 5 { 1 } else { 2 }).collect(), 2);
        assert_eq!(misclustering(&p, &truth).0, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Misclustering is symmetric when the cluster counts agree, and
        /// zero exactly when the partitions match up to relabeling.
        #[test]
        fn misclustering_symmetry_and_zero_law(seed in 0u64..500) {
            let mut rng = seeded(seed);
            let n = 30;
            let k = rng.gen_range(2..=4usize);
            let a = Partition::new((0..n).map(|_| rng.gen_range(1..=k)).collect(), k);
            let b = Partition::new((0..n).map(|_| rng.gen_range(1..=k)).collect(), k);
            let (ab, _) = misclustering(&a, &b);
            let (ba, _) = misclustering(&b, &a);
            prop_assert_eq!(ab, ba);
            // Relabeled copy is at distance zero.
            let shift = Partition::new(a.labels().iter().map(|&l| l % k + 1).collect(), k);
            prop_assert_eq!(misclustering(&shift, &a).0, 0);
        }

        /// Row distances are rotation invariant, so the greedy layer
        /// clustering is unchanged by any orthogonal right factor.
        #[test]
        fn supnorm_invariant_under_row_rotation(seed in 0u64..500) {
            let (w, _) = three_group_rows(0.01, 0.5);
            let mut rng = seeded(seed);
            let raw = DenseMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
            let q = raw.qr().q();
            let rotated = &w * q;
            let a = supnorm_cluster(&w, 3, 0.1).unwrap();
            let b = supnorm_cluster(&rotated, 3, 0.1).unwrap();
            prop_assert_eq!(a, b);
        }

        /// With within-group diameter below s and separation above 3s,
        /// any starting radius in (s, 3s) recovers the exact grouping.
        #[test]
        fn supnorm_exact_within_separation_window(seed in 0u64..500) {
            let mut rng = seeded(seed);
            let s = 0.05;
            let (w, truth) = three_group_rows(s, 3.5 * s);
            let eps0 = rng.gen_range(1.001 * s..2.999 * s);
            let p = supnorm_cluster(&w, 3, eps0).unwrap();
            prop_assert_eq!(misclustering(&p, &truth).0, 0);
        }
    }
}
