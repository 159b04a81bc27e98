//! Mitigations that trade retrieval usefulness for interference immunity:
//! dimensional padding or reduction, orthogonalization, random projection,
//! and centroid compression.

pub mod kmeans;
pub mod pareto;

pub use kmeans::{kmeans_compress, KMeansResult};
pub use pareto::{pareto_sweep, run_solutions, ParetoPoint, SolutionsConfig, SolutionsReport};

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vector::{dot, norm, Embeddings};

/// Cosine ties within this distance count as the same nearest neighbour.
pub const NN_TIE_TOL: f64 = 1e-12;
/// Residual norm below which a row is treated as linearly dependent.
pub const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformDiagnostics {
    pub mean_abs_offdiag_cosine: f64,
    /// Fraction of rows whose nearest neighbour survives the transform.
    pub nn_accuracy: f64,
}

/// Append zero columns up to `d_target`.
pub fn zero_pad(emb: &Embeddings, d_target: usize) -> Result<Embeddings> {
    let d = emb.dim();
    if d_target < d {
        return Err(Error::ShrinkRequest { from: d, to: d_target });
    }
    let mut data = Vec::with_capacity(emb.n_rows() * d_target);
    for r in emb.rows() {
        data.extend_from_slice(r);
        data.resize(data.len() + d_target - d, 0.0);
    }
    Embeddings::new(emb.n_rows(), d_target, data)
}

/// Principal axes of the uncentred second-moment matrix, strongest first,
/// together with the numerical rank of the data.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// `d_nom × d`, orthonormal columns.
    pub axes: DMatrix<f64>,
    pub rank: usize,
}

impl PcaBasis {
    pub fn fit(emb: &Embeddings, d: usize) -> Result<Self> {
        if emb.is_empty() {
            return Err(Error::InsufficientData("PCA needs data".into()));
        }
        let x = emb.to_dmatrix();
        let (n, dn) = x.shape();
        // eigenpairs of X^T X, via the smaller Gram matrix when n < d_nom
        let (vals, vecs) = if n < dn {
            let e = (&x * x.transpose()).symmetric_eigen();
            let vecs = x.transpose() * &e.eigenvectors;
            (e.eigenvalues, vecs)
        } else {
            let e = (x.transpose() * &x).symmetric_eigen();
            (e.eigenvalues, e.eigenvectors)
        };
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        let top = vals[order[0]].max(0.0);
        let rank = order.iter().filter(|&&i| vals[i] > top * 1e-20 && vals[i] > 0.0).count();
        if d == 0 || d > rank {
            return Err(Error::RankDeficient { requested: d, rank });
        }
        let mut axes = DMatrix::zeros(dn, d);
        for (c, &i) in order.iter().take(d).enumerate() {
            let v = vecs.column(i);
            axes.set_column(c, &(v / v.norm()));
        }
        Ok(Self { axes, rank })
    }

    /// Coordinates of each row on the axes, rows renormalized.
    pub fn project(&self, emb: &Embeddings) -> Result<Embeddings> {
        let mut out = Embeddings::from_dmatrix(&(emb.to_dmatrix() * &self.axes));
        out.normalize_rows()?;
        Ok(out)
    }

    pub fn project_row(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p: Vec<f64> = (0..self.axes.ncols()).map(|c| dot(self.axes.column(c).as_slice(), v)).collect();
        crate::vector::normalize(&p)
    }
}

/// Projection onto the top-`d` principal axes, rows renormalized.
pub fn pca_reduce(emb: &Embeddings, d: usize) -> Result<Embeddings> {
    PcaBasis::fit(emb, d)?.project(emb)
}

/// Modified Gram–Schmidt over row vectors, in order.
pub fn gram_schmidt_rows(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let mut v = r.clone();
        for b in &out {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let residual = norm(&v);
        if residual < DEPENDENCE_TOL {
            return Err(Error::NearDependence { row: i, residual });
        }
        out.push(v.into_iter().map(|x| x / residual).collect());
    }
    Ok(out)
}

/// Mean absolute cosine over distinct pairs of unit rows.
pub fn mean_abs_offdiag(emb: &Embeddings) -> f64 {
    let n = emb.n_rows();
    if n < 2 {
        return 0.0;
    }
    let x = emb.to_dmatrix();
    let g = &x * x.transpose();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += g[(i, j)].abs();
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// Fraction of rows whose transformed nearest neighbour is one of the
/// original nearest neighbours. Scores within [`NN_TIE_TOL`] of the best tie
/// on both sides.
pub fn nn_accuracy(original: &Embeddings, transformed: &Embeddings) -> Result<f64> {
    let n = original.n_rows();
    if transformed.n_rows() != n {
        return Err(Error::LengthMismatch { left: n, right: transformed.n_rows() });
    }
    if n < 2 {
        return Ok(1.0);
    }
    let go = original.cross_dots(original);
    let gt = transformed.cross_dots(transformed);
    let mut kept = 0usize;
    for i in 0..n {
        let best_orig = (0..n).filter(|&j| j != i).map(|j| go[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        // transformed scores within the tolerance of the best are a tie: the
        // lowest index wins, so round-off noise cannot carry neighbour signal
        let best_t = (0..n).filter(|&j| j != i).map(|j| gt[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let nn_t = (0..n).find(|&j| j != i && gt[(i, j)] >= best_t - NN_TIE_TOL).expect("n >= 2");
        if go[(i, nn_t)] >= best_orig - NN_TIE_TOL {
            kept += 1;
        }
    }
    Ok(kept as f64 / n as f64)
}

pub fn diagnostics(original: &Embeddings, transformed: &Embeddings) -> Result<TransformDiagnostics> {
    Ok(TransformDiagnostics {
        mean_abs_offdiag_cosine: mean_abs_offdiag(transformed),
        nn_accuracy: nn_accuracy(original, transformed)?,
    })
}

/// Orthonormalize rows in order by modified Gram–Schmidt.
pub fn orthogonalize(emb: &Embeddings) -> Result<(Embeddings, TransformDiagnostics)> {
    let (n, d) = (emb.n_rows(), emb.dim());
    if n > d {
        return Err(Error::TooManyVectors { n, d });
    }
    let rows: Vec<Vec<f64>> = emb.rows().map(<[f64]>::to_vec).collect();
    let out = if rows.is_empty() { Embeddings::empty(d) } else { Embeddings::from_rows(&gram_schmidt_rows(&rows)?)? };
    let diag = diagnostics(emb, &out)?;
    Ok((out, diag))
}

/// Gaussian map with `N(0, 1/k)` entries.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    /// `d_nom × k`.
    pub matrix: DMatrix<f64>,
}

impl RandomProjection {
    pub fn new(d: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("projection dimension must be at least 1".into()));
        }
        let normal = Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("positive scale");
        Ok(Self { matrix: DMatrix::from_fn(d, k, |_, _| normal.sample(rng)) })
    }

    pub fn apply(&self, emb: &Embeddings) -> Result<Embeddings> {
        let mut out = Embeddings::from_dmatrix(&(emb.to_dmatrix() * &self.matrix));
        out.normalize_rows()?;
        Ok(out)
    }

    pub fn apply_row(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p: Vec<f64> = (0..self.matrix.ncols()).map(|c| dot(self.matrix.column(c).as_slice(), v)).collect();
        crate::vector::normalize(&p)
    }
}

pub fn random_project(emb: &Embeddings, k: usize, rng: &mut Rng) -> Result<(Embeddings, TransformDiagnostics)> {
    let out = RandomProjection::new(emb.dim(), k, rng)?.apply(emb)?;
    let diag = diagnostics(emb, &out)?;
    Ok((out, diag))
}
