//! Grouping of rooms by `[area, median set point]`.
//!
//! Features are z-scored across rooms, clustered by Lloyd's k-means with
//! k-means++ seeding and restarts, polished by single-point (Hartigan)
//! moves, and `k` is chosen by the largest mean
//! silhouette.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::RoomDataset;
use crate::math::sqrt;
use crate::rng::StreamKey;
use crate::stats;
use crate::{Error, Result};

pub type Point = [f64; 2];

pub const MAX_LLOYD_ITERS: usize = 300;
pub const RESTARTS: u64 = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomFeature {
    pub room_id: String,
    pub area: f64,
    pub median_set: f64,
    pub normalized: Point,
}

/// Area and lower median of historical set points, z-scored across rooms.
pub fn build_features(rooms: &[RoomDataset]) -> Result<Vec<RoomFeature>> {
    let raw: Vec<(String, f64, f64)> = rooms
        .iter()
        .map(|r| {
            let sets: Vec<f64> = r.segments.iter().map(|s| s.t_set).collect();
            Ok((r.meta.room_id.clone(), r.meta.area, stats::median_lower(&sets)?))
        })
        .collect::<Result<_>>()?;
    let areas: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let sets: Vec<f64> = raw.iter().map(|r| r.2).collect();
    let z = |xs: &[f64], v: f64| {
        let sd = stats::sample_std(xs);
        if sd > 0.0 {
            (v - stats::mean(xs)) / sd
        } else {
            0.0
        }
    };
    Ok(raw
        .iter()
        .map(|(id, a, m)| RoomFeature {
            room_id: id.clone(),
            area: *a,
            median_set: *m,
            normalized: [z(&areas, *a), z(&sets, *m)],
        })
        .collect())
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// 0-based cluster index per point.
    pub labels: Vec<usize>,
    pub centroids: Vec<Point>,
    pub inertia: f64,
    /// Inertia after every update of the winning restart.
    pub history: Vec<f64>,
}

pub fn inertia(points: &[Point], labels: &[usize], centroids: &[Point]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| dist2(p, &centroids[l])).sum()
}

fn plus_plus_seeds<R: Rng>(points: &[Point], k: usize, rng: &mut R) -> Vec<Point> {
    let mut centres = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            // rounding can leave `chosen` on a zero-weight tail point
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|w| *w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(p, &c));
        }
        centres.push(c);
    }
    centres
}

fn assign(points: &[Point], centroids: &[Point]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centre) in centroids.iter().enumerate() {
                let d = dist2(p, centre);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn update_centroids(points: &[Point], labels: &mut [usize], k: usize, prev: &[Point]) -> Vec<Point> {
    loop {
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(labels.iter()) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums
                .iter()
                .zip(&counts)
                .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64])
                .collect();
        };
        // repair: move the point farthest from its centroid into the empty cluster
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                dist2(&points[a], &prev[labels[a]])
                    .total_cmp(&dist2(&points[b], &prev[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two or more points");
        labels[far] = empty;
    }
}

fn lloyd(points: &[Point], k: usize, seeds: Vec<Point>) -> KMeansFit {
    let mut centroids = seeds;
    let mut labels = assign(points, &centroids);
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        centroids = update_centroids(points, &mut labels, k, &centroids);
        history.push(inertia(points, &labels, &centroids));
        let next = assign(points, &centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    hartigan(points, &mut labels, &mut centroids, &mut history);
    let inertia = inertia(points, &labels, &centroids);
    KMeansFit { labels, centroids, inertia, history }
}

/// Single-point moves that strictly lower the inertia, applied until none is
/// left. Escapes Lloyd fixed points that are not Hartigan optimal.
fn hartigan(points: &[Point], labels: &mut [usize], centroids: &mut [Point], history: &mut Vec<f64>) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    for _ in 0..MAX_LLOYD_ITERS {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let a = labels[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let loss = na / (na - 1.0) * dist2(p, &centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let gain = nb / (nb + 1.0) * dist2(p, &centroids[b]);
                if gain < loss * (1.0 - 1e-12) && best.is_none_or(|(_, g)| gain < g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                let (na, nb) = (counts[a] as f64, counts[b] as f64);
                for d in 0..2 {
                    centroids[a][d] = (centroids[a][d] * na - p[d]) / (na - 1.0);
                    centroids[b][d] = (centroids[b][d] * nb + p[d]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                labels[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        // recompute exactly so incremental updates do not drift
        for c in centroids.iter_mut() {
            *c = [0.0; 2];
        }
        for (p, &l) in points.iter().zip(labels.iter()) {
            centroids[l][0] += p[0];
            centroids[l][1] += p[1];
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            c[0] /= n as f64;
            c[1] /= n as f64;
        }
        history.push(inertia(points, labels, centroids));
    }
}

/// Best of [`RESTARTS`] k-means++ seeded Lloyd runs; ties go to the earliest
/// restart.
pub fn kmeans(points: &[Point], k: usize, key: StreamKey) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::KExceedsN { k, n: points.len() });
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..RESTARTS {
        let mut rng = key.with_u64(r).rng();
        let fit = lloyd(points, k, plus_plus_seeds(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// score 0, as does `a = b = 0`.
pub fn silhouette_mean(points: &[Point], labels: &[usize]) -> Result<f64> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        if sizes[labels[i]] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sqrt(dist2(&points[i], &points[j]));
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub silhouette: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    /// 1-based.
    pub id: usize,
    pub members: Vec<String>,
    /// Centroid in z-scored feature space.
    pub centroid: Point,
    /// Mean `[area, median set point]` of the members.
    pub centroid_raw: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    /// 1-based label per room, in input order.
    pub labels: Vec<usize>,
    pub clusters: Vec<ClusterInfo>,
    pub silhouette: f64,
    pub table: Vec<KScore>,
}

impl Clustering {
    pub fn cluster_of(&self, room_id: &str) -> Option<&ClusterInfo> {
        self.clusters.iter().find(|c| c.members.iter().any(|m| m == room_id))
    }
}

/// Relabel so that cluster ids follow the first appearance in input order.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 1;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn assemble(features: &[RoomFeature], labels: &[usize], silhouette: f64, table: Vec<KScore>) -> Clustering {
    let labels = canonical_labels(labels);
    let k = labels.iter().copied().max().unwrap_or(0);
    let clusters = (1..=k)
        .map(|id| {
            let members: Vec<&RoomFeature> =
                features.iter().zip(&labels).filter(|(_, &l)| l == id).map(|(f, _)| f).collect();
            let n = members.len() as f64;
            let mean = |g: fn(&RoomFeature) -> f64| members.iter().map(|f| g(f)).sum::<f64>() / n;
            ClusterInfo {
                id,
                members: members.iter().map(|f| f.room_id.clone()).collect(),
                centroid: [mean(|f| f.normalized[0]), mean(|f| f.normalized[1])],
                centroid_raw: [mean(|f| f.area), mean(|f| f.median_set)],
            }
        })
        .collect();
    Clustering { k, labels, clusters, silhouette, table }
}

/// Try every `k` in `k_min..=k_max` and keep the best mean silhouette;
/// ties go to the smaller `k`.
pub fn select_k(features: &[RoomFeature], k_min: usize, k_max: usize, key: StreamKey) -> Result<Clustering> {
    let n = features.len();
    if k_max > n {
        return Err(Error::KExceedsN { k: k_max, n });
    }
    if k_min < 2 || k_min > k_max {
        return Err(Error::InvalidConfig(alloc::format!("invalid k range {k_min}..={k_max}")));
    }
    let points: Vec<Point> = features.iter().map(|f| f.normalized).collect();
    let mut table = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in k_min..=k_max {
        let fit = kmeans(&points, k, key.with_u64(k as u64))?;
        let s = silhouette_mean(&points, &fit.labels)?;
        table.push(KScore { k, silhouette: s, inertia: fit.inertia });
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, fit.labels));
        }
    }
    let (s, labels) = best.expect("non-empty k range");
    Ok(assemble(features, &labels, s, table))
}

/// [`select_k`] with the range clipped to `n - 1` (at `k = n` every point is
/// a singleton and scores 0). Fewer than three rooms form a single cluster.
pub fn cluster_rooms(features: &[RoomFeature], k_min: usize, k_max: usize, key: StreamKey) -> Result<Clustering> {
    let n = features.len();
    if n < 3 || k_min > n - 1 {
        let labels = vec![0; n];
        return Ok(assemble(features, &labels, 0.0, Vec::new()));
    }
    select_k(features, k_min, k_max.min(n - 1), key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn feats(points: &[Point]) -> Vec<RoomFeature> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| RoomFeature { room_id: alloc::format!("r{i}"), area: p[0], median_set: p[1], normalized: *p })
            .collect()
    }

    fn brute_force_k2(points: &[Point]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut c = [[0.0; 2]; 2];
            let mut cnt = [0.0; 2];
            for (p, &l) in points.iter().zip(&labels) {
                c[l][0] += p[0];
                c[l][1] += p[1];
                cnt[l] += 1.0;
            }
            for l in 0..2 {
                c[l] = [c[l][0] / cnt[l], c[l][1] / cnt[l]];
            }
            best = best.min(inertia(points, &labels, &c));
        }
        best
    }

    #[test]
    fn two_pairs_split() {
        let pts = [[0.0, 0.0], [0.0, 0.1], [10.0, 10.0], [10.0, 10.1]];
        let fit = kmeans(&pts, 2, StreamKey::new(1)).unwrap();
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[2], fit.labels[3]);
        assert_ne!(fit.labels[0], fit.labels[2]);
        assert!((fit.inertia - brute_force_k2(&pts)).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts = [[0.0, 1.0], [2.0, 0.5], [3.0, 3.0], [-1.0, 4.0], [0.3, 0.3]];
        let fit = kmeans(&pts, 5, StreamKey::new(2)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert_eq!(kmeans(&pts, 6, StreamKey::new(2)).unwrap_err(), Error::KExceedsN { k: 6, n: 5 });
    }

    #[test]
    fn duplicated_dataset_same_centroids() {
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.5, 0.9], [8.0, 8.0], [9.0, 8.5], [8.2, 9.4]];
        let doubled: Vec<Point> = pts.iter().chain(pts.iter()).copied().collect();
        let mut a = kmeans(&pts, 2, StreamKey::new(3)).unwrap().centroids;
        let mut b = kmeans(&doubled, 2, StreamKey::new(3)).unwrap().centroids;
        a.sort_by(|x, y| x[0].total_cmp(&y[0]));
        b.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn silhouette_line_fixture() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]];
        let s = silhouette_mean(&pts, &[0, 0, 1, 1]).unwrap();
        // ((1 - 1/10.5) + (1 - 1/9.5)) / 2
        assert!((s - 0.899_749_373_433_584).abs() < 1e-12, "{s}");
    }

    #[test]
    fn silhouette_edge_cases() {
        let same = [[1.0, 1.0]; 4];
        assert_eq!(silhouette_mean(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(silhouette_mean(&same, &[0, 0, 0, 0]), Err(Error::SingleCluster));
        let blobs = [[0.0, 0.0], [0.0, 0.01], [0.01, 0.0], [50.0, 50.0], [50.0, 50.01], [50.01, 50.0]];
        assert!(silhouette_mean(&blobs, &[0, 0, 0, 1, 1, 1]).unwrap() > 0.95);
        // singleton scores zero
        let s = silhouette_mean(&[[0.0, 0.0], [0.0, 1.0], [9.0, 9.0]], &[0, 0, 1]).unwrap();
        let s0 = 1.0 - 1.0 / (9.0f64 * 2f64.sqrt());
        let s1 = 1.0 - 1.0 / (81.0f64 + 64.0).sqrt();
        assert!((s - (s0 + s1) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn planted_three_blobs() {
        let mut pts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (6.0, 0.0), (3.0, 6.0)] {
            for d in [[0.0, 0.0], [0.2, 0.1], [-0.1, 0.2], [0.1, -0.2], [-0.2, -0.1]] {
                pts.push([cx + d[0], cy + d[1]]);
            }
        }
        let c = select_k(&feats(&pts), 2, 10, StreamKey::new(4)).unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.table.len(), 9);
        assert!(c.clusters.iter().all(|cl| cl.members.len() == 5));
    }

    #[test]
    fn planted_pair() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]];
        let c = select_k(&feats(&pts), 2, 5, StreamKey::new(5)).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.labels, vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn small_fleets_form_one_cluster() {
        let c = cluster_rooms(&feats(&[[0.0, 0.0], [1.0, 1.0]]), 2, 10, StreamKey::new(0)).unwrap();
        assert_eq!(c.k, 1);
        assert_eq!(c.clusters[0].members, vec!["r0".to_string(), "r1".to_string()]);
    }

    #[test]
    fn feature_medians_and_scaling() {
        use crate::ingest::{OperationSegment, RoomMeta};
        let room = |id: &str, area: f64, sets: &[f64]| RoomDataset {
            meta: RoomMeta { room_id: id.to_string(), area, orientation: None },
            segments: sets
                .iter()
                .map(|&t| OperationSegment {
                    room_id: id.to_string(),
                    start: 0,
                    end: 1,
                    t_seg: 1.0,
                    epi: 1.0,
                    t_a: 0.0,
                    h_a: 50.0,
                    p_si: 0.0,
                    t_ri: 0.0,
                    t_r: 0.0,
                    t_set: t,
                })
                .collect(),
        };
        let one = build_features(&[room("a", 12.0, &[24.0, 25.0, 26.0])]).unwrap();
        assert_eq!(one[0].median_set, 25.0);
        assert_eq!(one[0].normalized, [0.0, 0.0]);
        let two = build_features(&[room("a", 10.0, &[24.0, 25.0, 26.0, 27.0]), room("b", 20.0, &[26.0])]).unwrap();
        assert_eq!(two[0].median_set, 25.0);
        let d = 1.0 / 2f64.sqrt();
        assert!((two[0].normalized[0] + d).abs() < 1e-12 && (two[1].normalized[1] - d).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn inertia_never_increases(raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30), k in 2usize..5, seed in 0u64..1000) {
            let pts: Vec<Point> = raw.iter().map(|&(a, b)| [a, b]).collect();
            prop_assume!(k <= pts.len());
            let fit = kmeans(&pts, k, StreamKey::new(seed)).unwrap();
            for w in fit.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
        }

        #[test]
        fn brute_force_optimum_small(raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..=8), seed in 0u64..1000) {
            let pts: Vec<Point> = raw.iter().map(|&(a, b)| [a, b]).collect();
            let fit = kmeans(&pts, 2, StreamKey::new(seed)).unwrap();
            prop_assert!((fit.inertia - brute_force_k2(&pts)).abs() <= 1e-9 * fit.inertia.max(1.0));
        }

        #[test]
        fn silhouette_bounded_and_label_invariant(raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..20), k in 2usize..4) {
            let pts: Vec<Point> = raw.iter().map(|&(a, b)| [a, b]).collect();
            let fit = kmeans(&pts, k, StreamKey::new(1)).unwrap();
            let s = silhouette_mean(&pts, &fit.labels).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            let permuted: Vec<usize> = fit.labels.iter().map(|l| (l + 1) % k).collect();
            prop_assert_eq!(s, silhouette_mean(&pts, &permuted).unwrap());
        }
    }
}
