//! Memory traces and kernel-threshold retrieval.
//!
//! A trace is scored against a query as `decay(age) * cosine(query, trace)`,
//! where age is measured from the trace's most recent repetition. Query
//! noise grows with the age of the probed item; stored traces stay clean.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vector::{self, dot, is_unit, Embeddings};

/// Power-law temporal decay `S(t) = (1 + beta t)^(-psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub beta: f64,
    pub psi: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self { beta: 0.20, psi: 0.5 }
    }
}

impl DecayParams {
    pub fn new(beta: f64, psi: f64) -> Result<Self> {
        if !(beta >= 0.0 && psi >= 0.0 && beta.is_finite() && psi.is_finite()) {
            return Err(Error::Domain(format!("decay parameters must be finite and >= 0 (beta={beta}, psi={psi})")));
        }
        Ok(Self { beta, psi })
    }

    /// No decay at any age.
    pub fn none() -> Self {
        Self { beta: 0.0, psi: 0.0 }
    }
}

/// Age-proportional query noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub sigma: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { sigma: 0.5 }
    }
}

impl NoiseParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("noise sigma must be finite and >= 0 (got {sigma})")));
        }
        Ok(Self { sigma })
    }
}

pub fn decay_factor(age: f64, p: &DecayParams) -> Result<f64> {
    if age < 0.0 || age.is_nan() {
        return Err(Error::NegativeAge(age));
    }
    Ok((1.0 + p.beta * age).powf(-p.psi))
}

/// Noisy copy of `v`: `normalize(v + eps)` with
/// `eps = sigma * sqrt(age + 0.01) / sqrt(d) * z`, `z` standard normal.
pub fn perturb(v: &[f64], age: f64, p: &NoiseParams, rng: &mut Rng) -> Result<Vec<f64>> {
    if age < 0.0 || age.is_nan() {
        return Err(Error::NegativeAge(age));
    }
    if p.sigma == 0.0 {
        return Ok(v.to_vec());
    }
    let scale = noise_scale(v.len(), age, p);
    let noisy: Vec<f64> = v
        .iter()
        .map(|x| x + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    vector::normalize(&noisy)
}

/// Per-coordinate standard deviation of the perturbation.
pub fn noise_scale(d: usize, age: f64, p: &NoiseParams) -> f64 {
    p.sigma * (age + 0.01).sqrt() / (d as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryTrace {
    pub id: u64,
    pub vec: Vec<f64>,
    pub encode_time: f64,
    /// Repetition times in days, nondecreasing. The first entry, when
    /// present, equals `encode_time`.
    pub repetition_times: Vec<f64>,
}

impl MemoryTrace {
    pub fn new(id: u64, vec: Vec<f64>, encode_time: f64) -> Self {
        Self { id, vec, encode_time, repetition_times: vec![encode_time] }
    }

    pub fn with_repetitions(id: u64, vec: Vec<f64>, mut times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Precondition("a trace needs at least one encoding time".into()));
        }
        times.sort_by(f64::total_cmp);
        Ok(Self { id, vec, encode_time: times[0], repetition_times: times })
    }

    /// Time from which decay is measured: the most recent repetition.
    pub fn age_origin(&self) -> f64 {
        self.repetition_times.last().copied().unwrap_or(self.encode_time)
    }
}

/// Immutable collection of traces plus the retrieval rule.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    traces: Vec<MemoryTrace>,
    decay: DecayParams,
    noise: NoiseParams,
    threshold: f64,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    /// `(id, score)` sorted by descending score, ties by ascending id.
    pub ranked: Vec<(u64, f64)>,
    /// Ranked ids whose score reaches the threshold.
    pub accepted: Vec<u64>,
}

impl RetrievalOutcome {
    pub fn top(&self) -> Option<u64> {
        self.ranked.first().map(|&(id, _)| id)
    }
}

impl MemoryStore {
    pub fn new(traces: Vec<MemoryTrace>, decay: DecayParams, noise: NoiseParams, threshold: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(Error::Domain(format!("threshold {threshold} outside [-1, 1]")));
        }
        let dim = traces.first().map_or(0, |t| t.vec.len());
        let mut ids = HashSet::with_capacity(traces.len());
        for t in &traces {
            if !ids.insert(t.id) {
                return Err(Error::InvalidStore(format!("duplicate trace id {}", t.id)));
            }
            if t.vec.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: t.vec.len() });
            }
            if !is_unit(&t.vec) {
                return Err(Error::InvalidStore(format!("trace {} is not unit-norm", t.id)));
            }
            if t.encode_time < 0.0 || t.repetition_times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidStore(format!("trace {} has invalid times", t.id)));
            }
        }
        Ok(Self { traces, decay, noise, threshold, dim })
    }

    pub fn traces(&self) -> &[MemoryTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decay(&self) -> &DecayParams {
        &self.decay
    }

    pub fn noise(&self) -> &NoiseParams {
        &self.noise
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Decayed score of every trace, in storage order.
    pub fn scores(&self, query: &[f64], now: f64) -> Result<Vec<f64>> {
        if self.traces.is_empty() {
            return Err(Error::EmptyStore);
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: query.len() });
        }
        self.traces
            .iter()
            .map(|t| {
                let age = now - t.age_origin();
                Ok(decay_factor(age, &self.decay)? * dot(query, &t.vec).clamp(-1.0, 1.0))
            })
            .collect()
    }
    /// Decayed score matrix (`queries × traces`) computed as one dense
    /// product.
    pub fn score_matrix(&self, queries: &Embeddings, now: f64) -> Result<DMatrix<f64>> {
        if self.traces.is_empty() {
            return Err(Error::EmptyStore);
        }
        if queries.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: queries.dim() });
        }
        let weights = self
            .traces
            .iter()
            .map(|t| decay_factor(now - t.age_origin(), &self.decay))
            .collect::<Result<Vec<f64>>>()?;
        let mut stored = DMatrix::zeros(self.dim, self.traces.len());
        for (j, t) in self.traces.iter().enumerate() {
            stored.column_mut(j).copy_from_slice(&t.vec);
        }
        let mut s = queries.to_dmatrix() * stored;
        for (j, w) in weights.iter().enumerate() {
            s.column_mut(j).apply(|x| *x = w * x.clamp(-1.0, 1.0));
        }
        Ok(s)
    }

    /// Top-ranked trace id for each query row, with the same ordering rule
    /// as [`retrieve`].
    pub fn top1_batch(&self, queries: &Embeddings, now: f64) -> Result<Vec<u64>> {
        let s = self.score_matrix(queries, now)?;
        Ok((0..s.nrows())
            .map(|i| {
                let mut best = (self.traces[0].id, s[(i, 0)]);
                for (j, t) in self.traces.iter().enumerate().skip(1) {
                    let cand = (t.id, s[(i, j)]);
                    if rank_order(&cand, &best).is_lt() {
                        best = cand;
                    }
                }
                best.0
            })
            .collect())
    }
}

fn rank_order(a: &(u64, f64), b: &(u64, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Sort `(id, score)` pairs and keep the best `top_k`.
pub fn rank_scores(mut pairs: Vec<(u64, f64)>, top_k: usize) -> Vec<(u64, f64)> {
    let k = top_k.min(pairs.len());
    if k == 0 {
        return Vec::new();
    }
    if k < pairs.len() {
        pairs.select_nth_unstable_by(k - 1, rank_order);
        pairs.truncate(k);
    }
    pairs.sort_unstable_by(rank_order);
    pairs
}

pub fn retrieve(store: &MemoryStore, query: &[f64], now: f64, top_k: usize) -> Result<RetrievalOutcome> {
    if !is_unit(query) {
        return Err(Error::Precondition("query must be unit-norm".into()));
    }
    let scores = store.scores(query, now)?;
    let pairs = store.traces.iter().zip(scores).map(|(t, s)| (t.id, s)).collect();
    let ranked = rank_scores(pairs, top_k);
    let accepted = ranked
        .iter()
        .filter(|&&(_, s)| s >= store.threshold)
        .map(|&(id, _)| id)
        .collect();
    Ok(RetrievalOutcome { ranked, accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::vector::random_unit;
    use approx::assert_abs_diff_eq;

    fn store(traces: Vec<MemoryTrace>) -> MemoryStore {
        MemoryStore::new(traces, DecayParams::default(), NoiseParams::default(), 0.5).unwrap()
    }

    #[test]
    fn decay_reference_values() {
        let p = DecayParams::default();
        assert_eq!(decay_factor(0.0, &p).unwrap(), 1.0);
        assert_abs_diff_eq!(decay_factor(30.0, &p).unwrap(), 7f64.powf(-0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(decay_factor(30.0, &p).unwrap(), 0.37796, epsilon = 1e-5);
        let flat = DecayParams::new(0.3, 0.0).unwrap();
        for age in [0.0, 1.0, 1e6] {
            assert_eq!(decay_factor(age, &flat).unwrap(), 1.0);
        }
        assert!(matches!(decay_factor(-1.0, &p), Err(Error::NegativeAge(_))));
    }

    #[test]
    fn zero_noise_perturb_is_identity() {
        let mut rng = seeded(1);
        let v = random_unit(16, &mut rng);
        let out = perturb(&v, 12.0, &NoiseParams { sigma: 0.0 }, &mut rng).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn perturb_is_deterministic_per_seed_and_unit() {
        let v = random_unit(32, &mut seeded(3));
        let p = NoiseParams { sigma: 0.5 };
        let a = perturb(&v, 5.0, &p, &mut seeded(9)).unwrap();
        let b = perturb(&v, 5.0, &p, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(is_unit(&a));
    }

    #[test]
    fn single_matching_trace_scores_one() {
        let v = random_unit(8, &mut seeded(4));
        let s = store(vec![MemoryTrace::new(7, v.clone(), 10.0)]);
        let out = retrieve(&s, &v, 10.0, 5).unwrap();
        assert_eq!(out.ranked.len(), 1);
        assert_eq!(out.top(), Some(7));
        assert_abs_diff_eq!(out.ranked[0].1, 1.0, epsilon = 1e-12);
        assert_eq!(out.accepted, vec![7]);
    }

    #[test]
    fn younger_identical_trace_ranks_first() {
        let v = random_unit(8, &mut seeded(5));
        let s = store(vec![MemoryTrace::new(1, v.clone(), 0.0), MemoryTrace::new(2, v.clone(), 30.0)]);
        let out = retrieve(&s, &v, 30.0, 2).unwrap();
        assert_eq!(out.ranked[0].0, 2);
        assert_abs_diff_eq!(out.ranked[0].1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.ranked[1].1, 7f64.powf(-0.5), epsilon = 1e-12);
        assert_eq!(out.accepted, vec![2]);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let v = random_unit(8, &mut seeded(6));
        let s = store(vec![
            MemoryTrace::new(9, v.clone(), 0.0),
            MemoryTrace::new(3, v.clone(), 0.0),
            MemoryTrace::new(5, v.clone(), 0.0),
        ]);
        let out = retrieve(&s, &v, 1.0, 3).unwrap();
        let ids: Vec<u64> = out.ranked.iter().map(|r| r.0).collect();
        assert_eq!(ids, vec![3, 5, 9]);
        let top1 = retrieve(&s, &v, 1.0, 1).unwrap();
        assert_eq!(top1.top(), Some(3));
    }

    #[test]
    fn repetition_sets_age_origin() {
        let v = random_unit(4, &mut seeded(7));
        let t = MemoryTrace::with_repetitions(1, v, vec![5.0, 0.0, 2.0]).unwrap();
        assert_eq!(t.encode_time, 0.0);
        assert_eq!(t.age_origin(), 5.0);
    }

    #[test]
    fn store_validation() {
        let v = random_unit(4, &mut seeded(8));
        let dup = vec![MemoryTrace::new(1, v.clone(), 0.0), MemoryTrace::new(1, v.clone(), 0.0)];
        assert!(matches!(
            MemoryStore::new(dup, DecayParams::default(), NoiseParams::default(), 0.5),
            Err(Error::InvalidStore(_))
        ));
        let bad = vec![MemoryTrace::new(1, vec![1.0, 1.0, 0.0, 0.0], 0.0)];
        assert!(MemoryStore::new(bad, DecayParams::default(), NoiseParams::default(), 0.5).is_err());
        let empty = MemoryStore::new(vec![], DecayParams::default(), NoiseParams::default(), 0.5).unwrap();
        assert!(matches!(retrieve(&empty, &v, 0.0, 1), Err(Error::EmptyStore)));
    }

    #[test]
    fn batched_top1_matches_single_retrieval() {
        let mut rng = seeded(9);
        let traces: Vec<MemoryTrace> =
            (0..60).map(|i| MemoryTrace::new(59 - i, random_unit(16, &mut rng), (i % 7) as f64)).collect();
        let s = store(traces);
        let queries = Embeddings::from_rows(&(0..25).map(|_| random_unit(16, &mut rng)).collect::<Vec<_>>()).unwrap();
        let batch = s.top1_batch(&queries, 10.0).unwrap();
        for (q, &top) in queries.rows().zip(&batch) {
            assert_eq!(retrieve(&s, q, 10.0, 1).unwrap().top(), Some(top));
        }
    }
}
