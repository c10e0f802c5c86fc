use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Outcome of a Lloyd run.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// `k × d` centroids.
    pub centroids: Matrix,
    /// Within-cluster sum of squares after every assignment step.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

/// Lloyd's k-means on the rows of `points`, seeded with k-means++.
///
/// Deterministic for a fixed `seed`. Ties in the seeding draw and in the
/// assignment step go to the lowest index.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::Argument("k-means needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::Cardinality(format!("k-means with k = {k} but only {n} points")));
    }
    if max_iter == 0 {
        return Err(Error::Argument("k-means needs max_iter >= 1".into()));
    }

    let mut centroids = plus_plus_init(points, k, seed);
    let mut labels = vec![0; n];
    let mut objective_history = Vec::new();
    objective_history.push(assign(points, &centroids, &mut labels));

    let mut converged = false;
    for _ in 0..max_iter {
        update_centroids(points, &mut labels, &mut centroids);
        let mut next = labels.clone();
        let obj = assign(points, &centroids, &mut next);
        objective_history.push(obj);
        let unchanged = next == labels;
        labels = next;
        if unchanged {
            converged = true;
            break;
        }
    }

    Ok(KMeansFit {
        labels,
        centroids,
        objective_history,
        converged,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = points.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));

    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` a hair below `target`
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a chosen centroid
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }

    let d = points.cols();
    let mut centroids = Matrix::zeros(k, d);
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let p = points.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = sq_dist(p, centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *label = best;
        total += best_d;
    }
    total
}

/// Recomputes centroids as cluster means. An empty cluster takes over the
/// point farthest from its current centroid.
fn update_centroids(points: &Matrix, labels: &mut [usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let d = points.cols();
    let old = centroids.clone();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let dist = sq_dist(points.row(i), old.row(l));
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[labels[i]] -= 1;
            labels[i] = c;
            counts[c] = 1;
            centroids.row_mut(c).copy_from_slice(points.row(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_column_mean() {
        let pts = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]]);
        let fit = kmeans(&pts, 1, 3, 10).unwrap();
        assert_eq!(fit.labels, vec![0, 0, 0]);
        assert!((fit.centroids.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((fit.centroids.get(0, 1) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn separated_clouds() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let e = i as f64 * 0.01;
            rows.push([e, -e]);
            rows.push([100.0 + e, 100.0 - e]);
        }
        let pts = Matrix::from_rows(&rows);
        let fit = kmeans(&pts, 2, 0, 50).unwrap();
        for i in (0..20).step_by(2) {
            assert_eq!(fit.labels[i], fit.labels[0]);
            assert_eq!(fit.labels[i + 1], fit.labels[1]);
        }
        assert_ne!(fit.labels[0], fit.labels[1]);
    }

    #[test]
    fn argument_errors() {
        let pts = Matrix::zeros(3, 2);
        assert!(matches!(kmeans(&pts, 0, 0, 5), Err(Error::Argument(_))));
        assert!(matches!(kmeans(&pts, 4, 0, 5), Err(Error::Cardinality(_))));
        assert!(matches!(kmeans(&pts, 2, 0, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn duplicate_points_still_give_k_distinct_seeds() {
        let pts = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]);
        let fit = kmeans(&pts, 3, 9, 10).unwrap();
        assert!(fit.labels.iter().all(|&l| l < 3));
    }
}
