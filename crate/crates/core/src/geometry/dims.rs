//! Effective-dimensionality estimators.
//!
//! Three views of the same embedding set: the participation ratio of the
//! covariance spectrum (global), the Levina–Bickel maximum-likelihood
//! estimate from nearest-neighbour distances (local), and the number of
//! principal components needed for a given share of variance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Embeddings;

const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimReport {
    pub d_nom: usize,
    pub participation_ratio: f64,
    pub levina_bickel: f64,
    pub d95: usize,
    pub d99: usize,
    /// Covariance spectrum, descending, padded with zeros to `d_nom`.
    pub eigenvalues: Vec<f64>,
}

/// Column-centred copy of the embedding matrix.
pub fn centered(emb: &Embeddings) -> DMatrix<f64> {
    let mut m = emb.to_dmatrix();
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    m
}

/// Eigenvalues of the centred sample covariance (divisor `n - 1`), sorted
/// descending and padded with zeros to the nominal dimension.
///
/// When `n - 1 < d` the nonzero spectrum is taken from the smaller Gram
/// matrix, which shares it.
pub fn covariance_eigenvalues(emb: &Embeddings) -> Result<Vec<f64>> {
    let (n, d) = (emb.n_rows(), emb.dim());
    if n < 2 {
        return Err(Error::InsufficientData(format!("covariance needs at least 2 rows (got {n})")));
    }
    let xc = centered(emb);
    let denom = (n - 1) as f64;
    let small = if n <= d {
        (&xc * xc.transpose()) / denom
    } else {
        (xc.transpose() * &xc) / denom
    };
    let mut eig: Vec<f64> = small.symmetric_eigenvalues().iter().map(|&l| l.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.resize(d, 0.0);
    Ok(eig)
}

/// `(sum l)^2 / sum l^2` of a spectrum.
pub fn participation_ratio_of(eigenvalues: &[f64]) -> Result<f64> {
    if eigenvalues.iter().all(|&l| l < EIGEN_FLOOR) {
        return Err(Error::DegenerateCovariance);
    }
    let s: f64 = eigenvalues.iter().sum();
    let s2: f64 = eigenvalues.iter().map(|l| l * l).sum();
    Ok(s * s / s2)
}

pub fn participation_ratio(emb: &Embeddings) -> Result<f64> {
    participation_ratio_of(&covariance_eigenvalues(emb)?)
}

/// Smallest `m` whose leading eigenvalues carry at least `fraction` of the
/// total variance.
pub fn variance_dims_of(eigenvalues: &[f64], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!("variance fraction must lie in (0, 1) (got {fraction})")));
    }
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCovariance);
    }
    let mut cum = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        cum += l;
        if cum / total >= fraction {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

pub fn pca_variance_dims(emb: &Embeddings, fraction: f64) -> Result<usize> {
    variance_dims_of(&covariance_eigenvalues(emb)?, fraction)
}

/// Number of eigenvalues strictly above `gamma`.
pub fn spectral_effective_rank(eigenvalues: &[f64], gamma: f64) -> usize {
    eigenvalues.iter().filter(|&&l| l > gamma).count()
}

/// Which nearest-neighbour intrinsic-dimension estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalDimEstimator {
    /// Levina–Bickel MLE with `k` neighbours, pooled as the inverse of the
    /// mean inverse per-point estimate.
    LevinaBickel { k: usize },
    /// Two-nearest-neighbour ratio estimator: slope of `-ln(1 - F(mu))`
    /// against `ln mu` through the origin, top 10% of ratios discarded.
    TwoNn,
}

/// Sorted distances from every row to its `k` nearest other rows.
///
/// Candidates are screened with Gram-matrix distances and the survivors'
/// distances recomputed exactly, so near-duplicates are not lost to
/// cancellation.
pub fn knn_distances(emb: &Embeddings, k: usize) -> Result<Vec<Vec<f64>>> {
    let (n, d) = (emb.n_rows(), emb.dim());
    if k == 0 || n <= k {
        return Err(Error::Precondition(format!("need n > k >= 1 (n={n}, k={k})")));
    }
    let sq_norms: Vec<f64> = emb.rows().map(|r| crate::vector::dot(r, r)).collect();
    let all = emb.to_dmatrix();
    let screen = (k + 8).min(n - 1);
    const BLOCK: usize = 256;
    let blocks: Vec<usize> = (0..n).step_by(BLOCK).collect();
    let out: Vec<Vec<Vec<f64>>> = blocks
        .par_iter()
        .map(|&start| {
            let end = (start + BLOCK).min(n);
            let rows = all.rows(start, end - start);
            let dots = rows * all.transpose();
            let mut res = Vec::with_capacity(end - start);
            let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
            for (bi, i) in (start..end).enumerate() {
                cand.clear();
                for j in 0..n {
                    if j != i {
                        let d2 = (sq_norms[i] + sq_norms[j] - 2.0 * dots[(bi, j)]).max(0.0);
                        cand.push((d2, j));
                    }
                }
                cand.select_nth_unstable_by(screen - 1, |a, b| a.0.total_cmp(&b.0));
                let xi = emb.row(i);
                let mut exact: Vec<f64> = cand[..screen]
                    .iter()
                    .map(|&(_, j)| {
                        let xj = emb.row(j);
                        (0..d).map(|c| (xi[c] - xj[c]).powi(2)).sum::<f64>().sqrt()
                    })
                    .collect();
                exact.sort_by(f64::total_cmp);
                exact.truncate(k);
                res.push(exact);
            }
            res
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

pub fn levina_bickel(emb: &Embeddings, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Precondition(format!("Levina–Bickel needs k >= 2 (got {k})")));
    }
    let nn = knn_distances(emb, k)?;
    let mut inv_sum = 0.0;
    for (row, t) in nn.iter().enumerate() {
        if t[0] <= 0.0 {
            return Err(Error::DuplicatePoints { row });
        }
        let tk = t[k - 1];
        let inv: f64 = t[..k - 1].iter().map(|tj| (tk / tj).ln()).sum::<f64>() / (k - 1) as f64;
        inv_sum += inv;
    }
    let mean_inv = inv_sum / nn.len() as f64;
    if !(mean_inv > 0.0) {
        return Err(Error::Degenerate("all neighbour distances equal".into()));
    }
    Ok(1.0 / mean_inv)
}

pub fn two_nn(emb: &Embeddings) -> Result<f64> {
    let nn = knn_distances(emb, 2)?;
    let mut mu = Vec::with_capacity(nn.len());
    for (row, t) in nn.iter().enumerate() {
        if t[0] <= 0.0 {
            return Err(Error::DuplicatePoints { row });
        }
        mu.push(t[1] / t[0]);
    }
    mu.sort_by(f64::total_cmp);
    let n = mu.len();
    let keep = ((n as f64) * 0.9).floor() as usize;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &m) in mu.iter().take(keep).enumerate() {
        let x = m.ln();
        let y = -(1.0 - (i + 1) as f64 / n as f64).ln();
        sxy += x * y;
        sxx += x * x;
    }
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all neighbour ratios equal one".into()));
    }
    Ok(sxy / sxx)
}

pub fn local_dimension(emb: &Embeddings, est: LocalDimEstimator) -> Result<f64> {
    match est {
        LocalDimEstimator::LevinaBickel { k } => levina_bickel(emb, k),
        LocalDimEstimator::TwoNn => two_nn(emb),
    }
}

pub fn dim_report(emb: &Embeddings, est: LocalDimEstimator) -> Result<DimReport> {
    let eigenvalues = covariance_eigenvalues(emb)?;
    Ok(DimReport {
        d_nom: emb.dim(),
        participation_ratio: participation_ratio_of(&eigenvalues)?,
        levina_bickel: local_dimension(emb, est)?,
        d95: variance_dims_of(&eigenvalues, 0.95)?,
        d99: variance_dims_of(&eigenvalues, 0.99)?,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> Embeddings {
        let mut rng = seeded(seed);
        Embeddings::new(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn line_has_unit_participation_ratio() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let e = Embeddings::from_rows(&rows).unwrap();
        assert_relative_eq!(participation_ratio(&e).unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn two_equal_eigenvalues_give_two() {
        assert_eq!(participation_ratio_of(&[3.0, 3.0, 0.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn constant_rows_are_degenerate() {
        let e = Embeddings::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(participation_ratio(&e), Err(Error::DegenerateCovariance)));
    }

    #[test]
    fn isotropic_participation_ratio_near_dimension() {
        let pr = participation_ratio(&gaussian(10_000, 50, 1)).unwrap();
        assert!((pr - 50.0).abs() <= 2.5, "{pr}");
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // 30 rows in 40 dims goes through the Gram matrix; transposing the
        // problem size by padding rows would not, so compare with a direct
        // covariance build instead.
        let e = gaussian(30, 40, 2);
        let eig = covariance_eigenvalues(&e).unwrap();
        let xc = centered(&e);
        let cov = (xc.transpose() * &xc) / 29.0;
        let mut direct: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|&l| l.max(0.0)).collect();
        direct.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in eig.iter().zip(&direct).take(29) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn variance_dims_cases() {
        let iso = gaussian(5000, 10, 3);
        assert_eq!(pca_variance_dims(&iso, 0.95).unwrap(), 10);
        assert_eq!(variance_dims_of(&[99.0, 0.5, 0.5], 0.95).unwrap(), 1);
        // rank-3 data in 6 dims
        let mut rng = seeded(4);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                vec![z[0], z[1], z[2], z[0] + z[1], z[1] - z[2], 0.0]
            })
            .collect();
        let e = Embeddings::from_rows(&rows).unwrap();
        assert_eq!(pca_variance_dims(&e, 1.0 - 1e-12).unwrap(), 3);
        assert!(matches!(variance_dims_of(&[1.0], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn effective_rank_counts() {
        let spec = [4.0, 2.0, 1.0, 0.5];
        assert_eq!(spectral_effective_rank(&spec, 1.0), 2);
        assert_eq!(spectral_effective_rank(&spec, 4.0), 0);
        assert_eq!(spectral_effective_rank(&spec, 0.0), 4);
    }

    #[test]
    fn circle_has_dimension_one() {
        let mut rng = seeded(5);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let a: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let mut v = vec![0.0; 10];
                v[3] = a.cos();
                v[7] = a.sin();
                v
            })
            .collect();
        let e = Embeddings::from_rows(&rows).unwrap();
        let lb = levina_bickel(&e, 10).unwrap();
        assert!((lb - 1.0).abs() <= 0.3, "{lb}");
        let tn = two_nn(&e).unwrap();
        assert!((tn - 1.0).abs() <= 0.3, "{tn}");
    }

    #[test]
    fn levina_bickel_preconditions() {
        let e = gaussian(5, 3, 6);
        assert!(matches!(levina_bickel(&e, 5), Err(Error::Precondition(_))));
        assert!(matches!(levina_bickel(&e, 1), Err(Error::Precondition(_))));
        let dup = Embeddings::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.5], vec![0.3, 2.0]]).unwrap();
        assert!(matches!(levina_bickel(&dup, 2), Err(Error::DuplicatePoints { .. })));
    }

    #[test]
    fn levina_bickel_is_scale_invariant() {
        let e = gaussian(400, 4, 7);
        let scaled = Embeddings::new(400, 4, e.as_slice().iter().map(|x| x * 37.5).collect()).unwrap();
        assert_relative_eq!(levina_bickel(&e, 10).unwrap(), levina_bickel(&scaled, 10).unwrap(), max_relative = 1e-9);
    }
}
