//! Spherical mini-batch k-means with k-means++ seeding.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vector::{normalize_in_place, Embeddings};

pub const BATCH: usize = 256;
pub const MAX_EPOCHS: usize = 100;
/// An epoch whose largest centroid displacement is below this ends the run.
pub const SHIFT_TOL: f64 = 1e-4;
/// Consecutive mini-batches without a new low of the smoothed batch inertia
/// that end the run.
pub const MAX_NO_IMPROVEMENT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Embeddings,
    pub assignments: Vec<usize>,
    pub epochs: usize,
    /// Empty clusters re-seeded from the worst-fitting point.
    pub reseeded: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// D²-weighted seeding; the first centre is uniform.
fn plus_plus(emb: &Embeddings, k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = emb.n_rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = emb.rows().map(|r| sq_dist(r, emb.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // round-off can land on an already chosen (zero-weight) point
            if best[pick] == 0.0 {
                (0..n).filter(|&i| best[i] > 0.0).last().unwrap_or(pick)
            } else {
                pick
            }
        } else {
            // every point coincides with a centre: take unchosen points in order
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        let c = emb.row(next).to_vec();
        for (b, r) in best.iter_mut().zip(emb.rows()) {
            *b = b.min(sq_dist(r, &c));
        }
    }
    chosen
}

/// Index of the highest-dot centroid per row; ties to the lower index.
fn assign(x: &DMatrix<f64>, centroids: &Embeddings) -> Vec<(usize, f64)> {
    let s = x * centroids.to_dmatrix().transpose();
    (0..s.nrows())
        .map(|i| {
            let mut best = (0, s[(i, 0)]);
            for j in 1..s.ncols() {
                if s[(i, j)] > best.1 {
                    best = (j, s[(i, j)]);
                }
            }
            best
        })
        .collect()
}

/// Compress unit rows into `k` unit centroids.
///
/// Each mini-batch moves its assigned centroids towards the batch points
/// with per-centroid rate `1 / count`, then renormalizes them. The run ends
/// after [`MAX_EPOCHS`], after an epoch moving no centroid by more than
/// [`SHIFT_TOL`], or once the smoothed batch inertia has not improved for
/// [`MAX_NO_IMPROVEMENT`] batches. After the
/// last epoch every point is assigned to its nearest centroid; a centroid
/// left without members is moved onto the point that fits its own centroid
/// worst, and assignment repeats.
pub fn kmeans_compress(emb: &Embeddings, k: usize, rng: &mut Rng) -> Result<KMeansResult> {
    let n = emb.n_rows();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!("need 1 <= k <= n (k={k}, n={n})")));
    }
    let seeds = plus_plus(emb, k, rng);
    let mut centroids = emb.select(&seeds);
    let mut counts = vec![0usize; k];
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = 0;
    // exponentially weighted batch inertia, weight proportional to batch share
    let alpha = (2.0 * BATCH as f64 / n as f64).min(1.0);
    let (mut ewa, mut best, mut stale) = (f64::NAN, f64::INFINITY, 0usize);
    'epochs: for _ in 0..MAX_EPOCHS {
        epochs += 1;
        let before = centroids.clone();
        order.shuffle(rng);
        for batch in order.chunks(BATCH) {
            let xb = emb.select(batch).to_dmatrix();
            let labels = assign(&xb, &centroids);
            // squared distance between unit vectors is 2 - 2 cos
            let inertia = labels.iter().map(|l| 2.0 - 2.0 * l.1).sum::<f64>() / batch.len() as f64;
            ewa = if ewa.is_nan() { inertia } else { ewa * (1.0 - alpha) + inertia * alpha };
            if ewa < best {
                best = ewa;
                stale = 0;
            } else {
                stale += 1;
            }
            for (&row, &(c, _)) in batch.iter().zip(&labels) {
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f64;
                let x = emb.row(row);
                for (cj, xj) in centroids.row_mut(c).iter_mut().zip(x) {
                    *cj += eta * (xj - *cj);
                }
            }
            let mut touched: Vec<usize> = labels.iter().map(|l| l.0).collect();
            touched.sort_unstable();
            touched.dedup();
            for c in touched {
                normalize_in_place(centroids.row_mut(c))?;
            }
            if stale >= MAX_NO_IMPROVEMENT {
                break 'epochs;
            }
        }
        let shift = (0..k).map(|c| sq_dist(before.row(c), centroids.row(c)).sqrt()).fold(0.0, f64::max);
        if shift < SHIFT_TOL {
            break;
        }
    }
    let x = emb.to_dmatrix();
    let mut reseeded = 0;
    loop {
        let labels = assign(&x, &centroids);
        let mut members = vec![0usize; k];
        for l in &labels {
            members[l.0] += 1;
        }
        let Some(empty) = members.iter().position(|&m| m == 0) else {
            return Ok(KMeansResult { centroids, assignments: labels.iter().map(|l| l.0).collect(), epochs, reseeded });
        };
        if reseeded >= k * 4 {
            return Err(Error::Degenerate("could not fill every cluster".into()));
        }
        // farthest point from its own centroid, among clusters that can spare one
        let worst = (0..n)
            .filter(|&i| members[labels[i].0] > 1)
            .min_by(|&a, &b| labels[a].1.total_cmp(&labels[b].1).then(a.cmp(&b)))
            .ok_or_else(|| Error::Degenerate("no point available to re-seed an empty cluster".into()))?;
        centroids.row_mut(empty).copy_from_slice(emb.row(worst));
        reseeded += 1;
    }
}
