//! Tip-of-tongue: the correct item is close to the top but not on it, while
//! something else matches the probe well.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::forgetting::DEFAULT_SEEDS;
use crate::rng::substream;
use crate::solutions::PcaBasis;
use crate::synth::ForgettingPool;
use crate::vector::{cosine_unnormalized, dot, Embeddings};

const TAG_DISTRACTORS: u64 = 31;
const TAG_QUERY: u64 = 32;

/// Smallest store for which ranks up to the window's upper end exist.
pub const MIN_STORE: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TotConfig {
    pub n_queries: usize,
    pub n_distractors: usize,
    pub pca_dim: usize,
    /// Per-coordinate standard deviation of the probe noise in the reduced
    /// space.
    pub noise_sigma: f64,
    pub rank_lo: usize,
    pub rank_hi: usize,
    pub sim_gate: f64,
    pub seeds: Vec<u64>,
}

impl Default for TotConfig {
    fn default() -> Self {
        Self {
            n_queries: 100,
            n_distractors: 2000,
            pca_dim: 96,
            noise_sigma: 1.5 / 96f64.sqrt(),
            rank_lo: 2,
            rank_hi: 20,
            sim_gate: 0.5,
            seeds: DEFAULT_SEEDS.to_vec(),
        }
    }
}

impl TotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.n_queries == 0 {
            return Err(Error::Config("tot needs seeds and queries".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("tot noise must be finite and nonnegative".into()));
        }
        if self.rank_lo < 2 || self.rank_hi < self.rank_lo {
            return Err(Error::Config("tot rank window must satisfy 2 <= lo <= hi".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotRecord {
    pub seed: u64,
    pub item: usize,
    /// 1-based rank of the correct item; ties go to the lower index.
    pub rank: usize,
    pub top1_similarity: f64,
    pub tot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotResult {
    pub tot_rate: f64,
    pub recall_rate: f64,
    pub records: Vec<TotRecord>,
}

impl TotResult {
    pub fn from_records(records: Vec<TotRecord>) -> Self {
        let n = records.len().max(1) as f64;
        let tot_rate = records.iter().filter(|r| r.tot).count() as f64 / n;
        let recall_rate = records.iter().filter(|r| r.rank == 1).count() as f64 / n;
        Self { tot_rate, recall_rate, records }
    }
}

/// Probes for one seed: the first `n_queries` targets against themselves
/// plus sampled distractors, all reduced by PCA fitted on the store.
pub fn tot_seed(cfg: &TotConfig, pool: &ForgettingPool, seed: u64) -> Result<Vec<TotRecord>> {
    let nq = cfg.n_queries;
    if pool.targets.n_rows() < nq {
        return Err(Error::PoolTooSmall { available: pool.targets.n_rows(), needed: nq });
    }
    if pool.competitors.n_rows() < cfg.n_distractors {
        return Err(Error::PoolTooSmall { available: pool.competitors.n_rows(), needed: cfg.n_distractors });
    }
    let n_store = nq + cfg.n_distractors;
    if n_store < MIN_STORE.max(cfg.rank_hi + 1) {
        return Err(Error::StoreTooSmall { found: n_store, needed: MIN_STORE.max(cfg.rank_hi + 1) });
    }
    let mut rows =
        rand::seq::index::sample(&mut substream(seed, &[TAG_DISTRACTORS]), pool.competitors.n_rows(), cfg.n_distractors)
            .into_vec();
    rows.sort_unstable();
    let store = pool.targets.select(&(0..nq).collect::<Vec<_>>()).stack(&pool.competitors.select(&rows))?;
    let basis = PcaBasis::fit(&store, cfg.pca_dim)?;
    let reduced = basis.project(&store)?;
    (0..nq)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[TAG_QUERY, i as u64]);
            let q: Vec<f64> =
                reduced.row(i).iter().map(|x| x + cfg.noise_sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            record(cfg, &reduced, &q, seed, i)
        })
        .collect()
}

fn record(cfg: &TotConfig, store: &Embeddings, q: &[f64], seed: u64, item: usize) -> Result<TotRecord> {
    // store rows are unit, so the cosine only needs the probe norm
    let qn = crate::vector::norm(q);
    let sims: Vec<f64> = if qn > 0.0 {
        store.rows().map(|r| dot(r, q) / qn).collect()
    } else {
        store.rows().map(|r| cosine_unnormalized(r, q).unwrap_or(0.0)).collect()
    };
    let own = sims[item];
    let rank = 1 + sims.iter().enumerate().filter(|&(j, &s)| s > own || (s == own && j < item)).count();
    let top1_similarity = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tot = (cfg.rank_lo..=cfg.rank_hi).contains(&rank) && top1_similarity > cfg.sim_gate;
    Ok(TotRecord { seed, item, rank, top1_similarity, tot })
}

/// `pools` holds one pool shared by all seeds or one per seed.
pub fn run_tot(cfg: &TotConfig, pools: &[ForgettingPool]) -> Result<TotResult> {
    cfg.validate()?;
    if pools.len() != 1 && pools.len() != cfg.seeds.len() {
        return Err(Error::Config(format!("{} pools for {} seeds", pools.len(), cfg.seeds.len())));
    }
    let per_seed = cfg
        .seeds
        .iter()
        .enumerate()
        .map(|(k, &s)| tot_seed(cfg, if pools.len() == 1 { &pools[0] } else { &pools[k] }, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(TotResult::from_records(per_seed.into_iter().flatten().collect()))
}
