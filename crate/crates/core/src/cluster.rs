//! K-means and Ward clustering of uniformed latent points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans,
    Ward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Clustering<T: Scalar> {
    pub method: ClusterMethod,
    pub k: usize,
    /// Cluster index of every input point.
    pub assignments: Vec<usize>,
    /// Member means.
    pub centroids: Vec<[T; 2]>,
    /// Total within-cluster squared distance.
    pub inertia: T,
    /// Inertia after each Lloyd assignment (k-means only).
    pub inertia_history: Vec<T>,
}

impl<T: Scalar> Clustering<T> {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

#[inline]
fn dist2<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn distinct_count<T: Scalar>(points: &[[T; 2]]) -> usize {
    let mut v: Vec<[T; 2]> = points.to_vec();
    v.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a[1].partial_cmp(&b[1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    v.dedup();
    v.len()
}

fn check_points<T: Scalar>(points: &[[T; 2]], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            parameter: "cluster points".into(),
        });
    }
    Ok(())
}

/// Means and total squared deviation for a labelling.
fn summarize<T: Scalar>(points: &[[T; 2]], assign: &[usize], k: usize) -> (Vec<[T; 2]>, Vec<usize>, T) {
    let mut sums = vec![[T::zero(); 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assign) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    let centroids: Vec<[T; 2]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let c = T::from_usize_lossy(c.max(1));
            [s[0] / c, s[1] / c]
        })
        .collect();
    let inertia = points
        .iter()
        .zip(assign)
        .map(|(&p, &a)| dist2(p, centroids[a]))
        .sum();
    (centroids, counts, inertia)
}

fn nearest<T: Scalar>(p: [T; 2], centers: &[[T; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = dist2(p, centers[0]);
    for (c, &q) in centers.iter().enumerate().skip(1) {
        let d = dist2(p, q);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans<T: Scalar>(points: &[[T; 2]], k: usize, seed: u64, max_iter: usize) -> Result<Clustering<T>> {
    check_points(points, k)?;
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centers[0]).as_f64()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            if target < d {
                pick = Some(i);
                break;
            }
            target -= d;
        }
        // rounding can run off the end; take the last candidate
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("k <= distinct"));
        let c = points[pick];
        centers.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, c).as_f64());
        }
    }

    let mut assign: Vec<usize> = points.iter().map(|&p| nearest(p, &centers)).collect();
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        repair_empty(points, &mut assign, k);
        let (c, _, inertia) = summarize(points, &assign, k);
        history.push(inertia);
        centers = c;
        let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    repair_empty(points, &mut assign, k);
    let (centroids, _, inertia) = summarize(points, &assign, k);
    Ok(Clustering {
        method: ClusterMethod::Kmeans,
        k,
        assignments: assign,
        centroids,
        inertia,
        inertia_history: history,
    })
}

/// Moves the point farthest from its centroid in the largest cluster into
/// each empty cluster.
fn repair_empty<T: Scalar>(points: &[[T; 2]], assign: &mut [usize], k: usize) {
    loop {
        let (centroids, counts, _) = summarize(points, assign, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).expect("k >= 1");
        let far = (0..points.len())
            .filter(|&i| assign[i] == largest)
            .max_by(|&a, &b| {
                dist2(points[a], centroids[largest])
                    .partial_cmp(&dist2(points[b], centroids[largest]))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        assign[far] = empty;
    }
}

/// Agglomerative clustering with Ward linkage down to `k` clusters.
///
/// Merge cost is the increase in total within-cluster squared deviation,
/// updated by Lance–Williams. Ties go to the lowest pair of slot indices; a
/// merged cluster keeps the lower slot.
pub fn ward<T: Scalar>(points: &[[T; 2]], k: usize) -> Result<Clustering<T>> {
    check_points(points, k)?;
    let n = points.len();
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the {n} points")));
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    // upper triangle, d[i*n + j] for i < j
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            d[i * n + j] = 0.5 * dist2(points[i], points[j]).as_f64();
        }
    }
    let at = |d: &[f64], i: usize, j: usize| if i < j { d[i * n + j] } else { d[j * n + i] };
    let row_min = |d: &[f64], active: &[bool], i: usize| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..n {
            if active[j] && d[i * n + j] < best.1 {
                best = (j, d[i * n + j]);
            }
        }
        best
    };
    let mut nn: Vec<(usize, f64)> = (0..n).map(|i| row_min(&d, &active, i)).collect();

    let mut clusters = n;
    while clusters > k {
        let mut a = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if active[i] && nn[i].0 != usize::MAX && nn[i].1 < best {
                a = i;
                best = nn[i].1;
            }
        }
        let b = nn[a].0;
        let dab = at(&d, a, b);
        let (na, nb) = (size[a] as f64, size[b] as f64);
        active[b] = false;
        for m in 0..n {
            if !active[m] || m == a {
                continue;
            }
            let nm = size[m] as f64;
            let v = ((nm + na) * at(&d, m, a) + (nm + nb) * at(&d, m, b) - nm * dab) / (nm + na + nb);
            if m < a {
                d[m * n + a] = v;
            } else {
                d[a * n + m] = v;
            }
        }
        size[a] += size[b];
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        clusters -= 1;
        nn[a] = row_min(&d, &active, a);
        for m in 0..a {
            if !active[m] {
                continue;
            }
            if nn[m].0 == a || nn[m].0 == b {
                nn[m] = row_min(&d, &active, m);
            } else {
                let v = d[m * n + a];
                if v < nn[m].1 || (v == nn[m].1 && a < nn[m].0) {
                    nn[m] = (a, v);
                }
            }
        }
        for m in a + 1..b {
            if active[m] && nn[m].0 == b {
                nn[m] = row_min(&d, &active, m);
            }
        }
    }

    let slots: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    let assign: Vec<usize> = owner
        .iter()
        .map(|o| slots.binary_search(o).expect("owner is an active slot"))
        .collect();
    let (centroids, _, inertia) = summarize(points, &assign, k);
    Ok(Clustering {
        method: ClusterMethod::Ward,
        k,
        assignments: assign,
        centroids,
        inertia,
        inertia_history: Vec::new(),
    })
}
