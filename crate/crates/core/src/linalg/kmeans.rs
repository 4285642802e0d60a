use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{squared_distance, Matrix};
use crate::error::{bail, Result};
use crate::rng;

/// Fitted k-means clustering.
#[derive(Clone, Debug)]
pub struct KMeansModel {
    pub k: usize,
    /// `k × d`.
    pub centroids: Matrix,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    /// Final cluster index of each input point.
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step, first to last.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Stops when an assignment step changes nothing or after `max_iter`
/// assignment steps. A cluster left empty is re-seeded at the point
/// farthest from its current centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansModel> {
    let n = points.rows();
    if k == 0 || n < k {
        bail!(Config, "k-means needs 1 <= k <= n, got k={} with n={}", k, n);
    }
    if max_iter == 0 {
        bail!(Config, "k-means needs max_iter >= 1");
    }
    if !points.is_finite() {
        bail!(Data, "k-means input has non-finite entries");
    }
    let mut centroids = plus_plus(points, k, seed);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let (changed, inertia) = assign(points, &centroids, &mut assignments);
        iterations += 1;
        history.push(inertia);
        if !changed || iterations >= max_iter {
            break;
        }
        update(points, &mut centroids, &mut assignments);
    }
    let inertia = (0..n).map(|i| squared_distance(points.row(i), centroids.row(assignments[i]))).sum();
    Ok(KMeansModel { k, centroids, inertia, assignments, history, iterations })
}

fn plus_plus(points: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = points.rows();
    let mut r = rng::stream(seed, &[0x6b6d]);
    let mut chosen = vec![r.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // every point coincides with a chosen centre
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn assign(points: &Matrix, centroids: &Matrix, assignments: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for i in 0..points.rows() {
        let (c, dist) = nearest_centroid(points.row(i), centroids);
        inertia += dist;
        if assignments[i] != c {
            assignments[i] = c;
            changed = true;
        }
    }
    (changed, inertia)
}

fn update(points: &Matrix, centroids: &mut Matrix, assignments: &mut [usize]) {
    let (k, d) = (centroids.rows(), centroids.cols());
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        sums.row_mut(c).iter_mut().zip(points.row(i)).for_each(|(s, &x)| *s += x);
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            centroids.row_mut(c).iter_mut().zip(sums.row(c)).for_each(|(m, &s)| *m = s * inv);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = 0;
        let mut best = -1.0;
        for i in 0..points.rows() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            let dist = squared_distance(points.row(i), centroids.row(assignments[i]));
            if dist > best {
                best = dist;
                far = i;
            }
        }
        counts[assignments[far]] -= 1;
        counts[c] = 1;
        assignments[far] = c;
        centroids.row_mut(c).copy_from_slice(points.row(far));
    }
}

/// Index and squared distance of the closest centroid; ties go to the
/// lower index.
pub fn nearest_centroid(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let dist = squared_distance(x, centroids.row(c));
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// Class of the nearest centroid through `label_map[cluster]`.
pub fn nearest_centroid_classify(x: &[f64], model: &KMeansModel, label_map: &[usize]) -> Result<usize> {
    if x.len() != model.centroids.cols() {
        bail!(Data, "point of dimension {} against {}-dimensional centroids", x.len(), model.centroids.cols());
    }
    if label_map.len() != model.k {
        bail!(Config, "label map has {} entries for {} clusters", label_map.len(), model.k);
    }
    Ok(label_map[nearest_centroid(x, &model.centroids).0])
}
