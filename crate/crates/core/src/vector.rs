//! Embedding vectors and row-major embedding matrices.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;
/// Tolerance for the unit-norm invariant.
pub const UNIT_TOL: f64 = 1e-9;

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = u.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += u[j] * v[j];
        acc[1] += u[j + 1] * v[j + 1];
        acc[2] += u[j + 2] * v[j + 2];
        acc[3] += u[j + 3] * v[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..u.len() {
        s += u[j] * v[j];
    }
    s
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn is_unit(v: &[f64]) -> bool {
    (norm(v) - 1.0).abs() <= UNIT_TOL
}

/// Scale `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n >= ZERO_NORM) {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub fn normalize_in_place(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if !(n >= ZERO_NORM) {
        return Err(Error::ZeroVector { norm: n });
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Cosine of two unit vectors, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    Ok(dot(u, v).clamp(-1.0, 1.0))
}

/// Cosine of two arbitrary nonzero vectors.
pub fn cosine_unnormalized(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu < ZERO_NORM {
        return Err(Error::ZeroVector { norm: nu });
    }
    if nv < ZERO_NORM {
        return Err(Error::ZeroVector { norm: nv });
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Uniform draw from the unit sphere in `d` dimensions.
pub fn random_unit(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = normalize(&v) {
            return u;
        }
    }
}

/// Dense row-major `n × d` matrix of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: data.len() });
        }
        Ok(Self { n, d, data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    /// Empty set of `d`-dimensional embeddings.
    pub fn empty(d: usize) -> Self {
        Self { n: 0, d, data: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n: rows.len(), d, data })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let d = self.d.max(1);
        self.data.chunks_exact(d).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.n > 0 && row.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: row.len() });
        }
        if self.n == 0 {
            self.d = row.len();
        }
        self.data.extend_from_slice(row);
        self.n += 1;
        Ok(())
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { n: idx.len(), d: self.d, data }
    }

    /// Vertical concatenation.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.n > 0 && other.n > 0 && self.d != other.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: other.d });
        }
        let d = if self.n > 0 { self.d } else { other.d };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { n: self.n + other.n, d, data })
    }

    pub fn normalize_rows(&mut self) -> Result<()> {
        let d = self.d;
        for i in 0..self.n {
            normalize_in_place(&mut self.data[i * d..(i + 1) * d])?;
        }
        Ok(())
    }

    pub fn all_unit(&self) -> bool {
        self.rows().all(is_unit)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Self { n, d, data }
    }

    /// Gram matrix of inner products between the rows of `self` and `other`.
    pub fn cross_dots(&self, other: &Self) -> DMatrix<f64> {
        self.to_dmatrix() * other.to_dmatrix().transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalize_scales_to_unit() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn normalize_is_identity_on_unit_vectors() {
        let u = [0.0, 1.0, 0.0];
        assert_eq!(normalize(&u).unwrap(), u.to_vec());
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn cosine_reference_cases() {
        let u = normalize(&[1.0, 2.0, 2.0]).unwrap();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(cosine(&u, &u).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine(&u, &neg).unwrap(), -1.0, epsilon = 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn dot_matches_naive_sum() {
        let u: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(dot(&u, &v), naive, epsilon = 1e-12);
    }

    #[test]
    fn embeddings_select_and_stack() {
        let a = Embeddings::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = a.select(&[1]);
        assert_eq!(b.row(0), &[0.0, 1.0]);
        let c = a.stack(&b).unwrap();
        assert_eq!(c.n_rows(), 3);
        assert_eq!(c.row(2), &[0.0, 1.0]);
        assert_eq!(Embeddings::empty(4).rows().count(), 0);
    }
}
