//! Mass-weighted k-means in RGB space.
//!
//! Points carry a nonnegative mass so that a pixel histogram (distinct colors
//! with their pixel counts) and a bag of per-image centroids (with their
//! signature weights) go through the same code. Two assignment strategies are
//! provided: a plain Lloyd scan and an Elkan-style scan that skips distance
//! evaluations using triangle-inequality bounds. From the same initial
//! centroids both produce the same assignments and centroids.

use rand::Rng;

pub type Point = [f64; 3];

/// Hard cap on Lloyd iterations.
pub const MAX_ITERATIONS: usize = 100;

// Absolute slack (in color units) applied before trusting a bound to prune a
// candidate. Bounds accumulate rounding error across iterations; pruning must
// only drop centroids that are strictly farther than the incumbent.
const BOUND_SLACK: f64 = 1e-7;

#[inline]
pub fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dr = a[0] - b[0];
    let dg = a[1] - b[1];
    let db = a[2] - b[2];
    dr * dr + dg * dg + db * db
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Point>,
    pub assignments: Vec<usize>,
    /// Number of centroid updates performed.
    pub iterations: usize,
}

impl Clustering {
    /// Total mass assigned to each centroid.
    pub fn cluster_masses(&self, masses: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.centroids.len()];
        for (&a, &m) in self.assignments.iter().zip(masses) {
            out[a] += m;
        }
        out
    }
}

/// k-means++ seeding with probabilities proportional to `mass * D^2`.
///
/// Stops early once every point coincides with a chosen center, so fewer
/// than `k` centers come back when there are fewer than `k` distinct points.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(points: &[Point], masses: &[f64], k: usize, rng: &mut R) -> Vec<Point> {
    assert_eq!(points.len(), masses.len());
    let mut centers = Vec::with_capacity(k);
    if k == 0 || points.is_empty() {
        return centers;
    }
    let total: f64 = masses.iter().sum();
    let first = if total > 0.0 {
        sample_index(masses.iter().copied(), total, rng)
    } else {
        rng.random_range(0..points.len())
    };
    centers.push(points[first]);

    let mut best: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centers.len() < k {
        let potential: f64 = best.iter().zip(masses).map(|(d, m)| d * m).sum();
        if !(potential > 0.0) {
            break;
        }
        let idx = sample_index(best.iter().zip(masses).map(|(d, m)| d * m), potential, rng);
        let c = points[idx];
        centers.push(c);
        for (b, p) in best.iter_mut().zip(points) {
            let d = sq_dist(p, &c);
            if d < *b {
                *b = d;
            }
        }
    }
    centers
}

fn sample_index<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, total: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

/// Index of the nearest centroid; ties go to the lowest index.
#[inline]
pub fn nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = sq_dist(p, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Mass-weighted means. Clusters with no mass keep their previous position.
fn update_centroids(points: &[Point], masses: &[f64], assignments: &[usize], centroids: &mut [Point]) {
    let k = centroids.len();
    let mut sums = vec![[0.0f64; 3]; k];
    let mut mass = vec![0.0f64; k];
    for ((p, &m), &a) in points.iter().zip(masses).zip(assignments) {
        sums[a][0] += m * p[0];
        sums[a][1] += m * p[1];
        sums[a][2] += m * p[2];
        mass[a] += m;
    }
    for ((c, s), &m) in centroids.iter_mut().zip(&sums).zip(&mass) {
        if m > 0.0 {
            *c = [s[0] / m, s[1] / m, s[2] / m];
        }
    }
}

/// Textbook Lloyd iteration from `init`.
pub fn lloyd_naive(points: &[Point], masses: &[f64], init: Vec<Point>, max_iter: usize) -> Clustering {
    assert!(!init.is_empty(), "at least one initial centroid required");
    let mut centroids = init;
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        update_centroids(points, masses, &assignments, &mut centroids);
        iterations += 1;
        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (j, _) = nearest(p, &centroids);
            if j != *a {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Clustering {
        centroids,
        assignments,
        iterations,
    }
}

/// Lloyd iteration with Elkan's bounds: one upper bound per point, one lower
/// bound per (point, centroid), and half the distance from each centroid to
/// its nearest neighbour.
pub fn lloyd_elkan(points: &[Point], masses: &[f64], init: Vec<Point>, max_iter: usize) -> Clustering {
    assert!(!init.is_empty(), "at least one initial centroid required");
    let k = init.len();
    let n = points.len();
    let mut centroids = init;

    let mut lower = vec![0.0f64; n * k];
    let mut upper = vec![0.0f64; n];
    // exact squared distance to the assigned centroid, valid while !stale
    let mut best_sq = vec![0.0f64; n];
    let mut stale = vec![false; n];
    let mut assignments = vec![0usize; n];

    for (i, p) in points.iter().enumerate() {
        let row = &mut lower[i * k..(i + 1) * k];
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = sq_dist(p, c);
            row[j] = d.sqrt();
            if d < bd {
                best = j;
                bd = d;
            }
        }
        assignments[i] = best;
        best_sq[i] = bd;
        upper[i] = bd.sqrt();
    }

    let mut half_cc = vec![0.0f64; k * k];
    let mut half_min = vec![0.0f64; k];
    let mut iterations = 0;
    while iterations < max_iter {
        let previous = centroids.clone();
        update_centroids(points, masses, &assignments, &mut centroids);
        iterations += 1;

        let drift: Vec<f64> = previous
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .collect();
        for i in 0..n {
            for (l, d) in lower[i * k..(i + 1) * k].iter_mut().zip(&drift) {
                *l = (*l - d).max(0.0);
            }
            let dd = drift[assignments[i]];
            if dd > 0.0 {
                upper[i] += dd;
                stale[i] = true;
            }
        }

        for a in 0..k {
            let mut m = f64::INFINITY;
            for b in 0..k {
                let h = 0.5 * sq_dist(&centroids[a], &centroids[b]).sqrt();
                half_cc[a * k + b] = h;
                if a != b && h < m {
                    m = h;
                }
            }
            half_min[a] = m;
        }

        let mut changed = false;
        for i in 0..n {
            let p = &points[i];
            let mut a = assignments[i];
            if upper[i] + BOUND_SLACK < half_min[a] {
                continue;
            }
            for j in 0..k {
                if j == a {
                    continue;
                }
                let bound = lower[i * k + j].max(half_cc[a * k + j]);
                if upper[i] + BOUND_SLACK < bound {
                    continue;
                }
                if stale[i] {
                    let d = sq_dist(p, &centroids[a]);
                    best_sq[i] = d;
                    upper[i] = d.sqrt();
                    lower[i * k + a] = upper[i];
                    stale[i] = false;
                    if upper[i] + BOUND_SLACK < bound {
                        continue;
                    }
                }
                let d = sq_dist(p, &centroids[j]);
                lower[i * k + j] = d.sqrt();
                if d < best_sq[i] || (d == best_sq[i] && j < a) {
                    a = j;
                    best_sq[i] = d;
                    upper[i] = d.sqrt();
                }
            }
            if a != assignments[i] {
                assignments[i] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Clustering {
        centroids,
        assignments,
        iterations,
    }
}

/// Mass-weighted sum of squared distances to the nearest centroid.
pub fn weighted_rss(points: &[Point], masses: &[f64], centroids: &[Point]) -> f64 {
    points
        .iter()
        .zip(masses)
        .map(|(p, &m)| m * nearest(p, centroids).1)
        .sum()
}
