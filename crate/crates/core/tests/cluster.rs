use approx::assert_abs_diff_eq;
use gdoe_core::cluster::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sse(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|c| {
            let m: Vec<[f64; 2]> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect();
            if m.is_empty() {
                return f64::INFINITY;
            }
            let cx = m.iter().map(|p| p[0]).sum::<f64>() / m.len() as f64;
            let cy = m.iter().map(|p| p[1]).sum::<f64>() / m.len() as f64;
            m.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Relabels clusters by first appearance so partitions compare directly.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Every labelling of `n` points into exactly `k` non-empty clusters.
fn all_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, k: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        for l in 0..(used + 1).min(k) {
            cur.push(l);
            rec(i + 1, n, k, used.max(l + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, 0, &mut Vec::new(), &mut out);
    out
}

fn brute_force_optimum(points: &[[f64; 2]], k: usize) -> (Vec<usize>, f64) {
    all_partitions(points.len(), k)
        .into_iter()
        .map(|p| {
            let v = sse(points, &p, k);
            (p, v)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Direct minimum-variance agglomeration: merge the pair whose union adds
/// the least within-cluster sum of squares, recomputed from members.
fn naive_ward(points: &[[f64; 2]], k: usize) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let cost = |c: &[usize]| {
        let pts: Vec<[f64; 2]> = c.iter().map(|&i| points[i]).collect();
        sse(&pts, &vec![0; pts.len()], 1)
    };
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut u = clusters[a].clone();
                u.extend(&clusters[b]);
                let d = cost(&u) - cost(&clusters[a]) - cost(&clusters[b]);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let moved = clusters.remove(best.2);
        clusters[best.1].extend(moved);
    }
    let mut labels = vec![0; points.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = c;
        }
    }
    labels
}

fn blobs(rng: &mut ChaCha8Rng, k: usize, per: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    for c in 0..k {
        let centre = [0.15 + 0.7 * (c % 2) as f64, 0.15 + 0.35 * (c / 2) as f64];
        for _ in 0..per {
            pts.push([centre[0] + rng.random_range(-0.01..0.01), centre[1] + rng.random_range(-0.01..0.01)]);
        }
    }
    pts
}

#[test]
fn kmeans_examples() {
    let p = [[0.1, 0.2], [0.3, 0.6], [0.8, 0.1]];
    let one = kmeans(&p, 1, 0, DEFAULT_MAX_ITER).unwrap();
    assert_abs_diff_eq!(one.centroids[0][0], 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(one.centroids[0][1], 0.3, epsilon = 1e-12);

    let pairs = [[0.1, 0.1], [0.12, 0.1], [0.9, 0.8], [0.9, 0.82]];
    let c = kmeans(&pairs, 2, 3, DEFAULT_MAX_ITER).unwrap();
    let (opt, v) = brute_force_optimum(&pairs, 2);
    assert_eq!(canonical(&c.assignments), opt);
    assert_abs_diff_eq!(c.inertia, v, epsilon = 1e-12);
    let mut cents = c.centroids.clone();
    cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_abs_diff_eq!(cents[0][0], 0.11, epsilon = 1e-12);
    assert_abs_diff_eq!(cents[1][1], 0.81, epsilon = 1e-12);

    let all = kmeans(&p, 3, 1, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(all.inertia, 0.0);
    assert!(kmeans(&[[0.5, 0.5], [0.5, 0.5], [0.2, 0.2]], 3, 0, 10).is_err());
    assert!(kmeans(&p, 0, 0, 10).is_err());
    assert!(kmeans(&[[f64::NAN, 0.5]], 1, 0, 10).is_err());
}

#[test]
fn kmeans_matches_brute_force_on_separated_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 1..=4 {
        for _ in 0..10 {
            let per = 8 / k;
            let pts = blobs(&mut rng, k, per);
            let (opt, v) = brute_force_optimum(&pts, k);
            for seed in 0..3 {
                let c = kmeans(&pts, k, seed, DEFAULT_MAX_ITER).unwrap();
                assert_eq!(canonical(&c.assignments), opt);
                assert_abs_diff_eq!(c.inertia, v, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn kmeans_inertia_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..20 {
        let pts: Vec<[f64; 2]> = (0..200).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let c = kmeans(&pts, 7, seed, DEFAULT_MAX_ITER).unwrap();
        assert!(!c.inertia_history.is_empty());
        for w in c.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", c.inertia_history);
        }
        assert_abs_diff_eq!(*c.inertia_history.last().unwrap(), c.inertia, epsilon = 1e-9);
        assert_eq!(c, kmeans(&pts, 7, seed, DEFAULT_MAX_ITER).unwrap());
    }
}

#[test]
fn ward_examples() {
    let line = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]];
    let w = ward(&line, 2).unwrap();
    assert_eq!(canonical(&w.assignments), vec![0, 0, 1, 1]);
    assert_eq!(canonical(&w.assignments), brute_force_optimum(&line, 2).0);
    let singles = ward(&line, 4).unwrap();
    assert_eq!(canonical(&singles.assignments), vec![0, 1, 2, 3]);
    assert_eq!(singles.inertia, 0.0);
    let one = ward(&line, 1).unwrap();
    assert!(one.assignments.iter().all(|&a| a == 0));
    assert_abs_diff_eq!(one.centroids[0][0], 5.5, epsilon = 1e-12);
    assert!(ward(&line, 5).is_err());
    assert_eq!(w.method, ClusterMethod::Ward);
}

#[test]
fn ward_matches_direct_agglomeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        for k in 1..=n {
            let w = ward(&pts, k).unwrap();
            assert_eq!(canonical(&w.assignments), canonical(&naive_ward(&pts, k)));
        }
    }
}

fn centroids_are_member_means(c: &Clustering<f64>, pts: &[[f64; 2]]) {
    for (i, cent) in c.centroids.iter().enumerate() {
        let m = c.members(i);
        assert!(!m.is_empty());
        let mx = m.iter().map(|&j| pts[j][0]).sum::<f64>() / m.len() as f64;
        let my = m.iter().map(|&j| pts[j][1]).sum::<f64>() / m.len() as f64;
        assert_abs_diff_eq!(cent[0], mx, epsilon = 1e-12);
        assert_abs_diff_eq!(cent[1], my, epsilon = 1e-12);
        assert!(cent.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn clusters_are_nonempty_with_mean_centroids(
        raw in prop::collection::vec((0.001f64..0.999, 0.001f64..0.999), 4..40),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let pts: Vec<[f64; 2]> = raw.into_iter().map(|(a, b)| [a, b]).collect();
        centroids_are_member_means(&kmeans(&pts, k, seed, DEFAULT_MAX_ITER).unwrap(), &pts);
        centroids_are_member_means(&ward(&pts, k).unwrap(), &pts);
    }

    #[test]
    fn relabeling_points_keeps_the_partition(
        raw in prop::collection::vec((0.001f64..0.999, 0.001f64..0.999), 3..9),
        k in 1usize..3,
    ) {
        let pts: Vec<[f64; 2]> = raw.into_iter().map(|(a, b)| [a, b]).collect();
        let n = pts.len();
        let rev: Vec<[f64; 2]> = pts.iter().rev().copied().collect();
        let a = ward(&pts, k).unwrap();
        let b = ward(&rev, k).unwrap();
        let back: Vec<usize> = (0..n).map(|i| b.assignments[n - 1 - i]).collect();
        prop_assert_eq!(canonical(&a.assignments), canonical(&back));
    }
}
