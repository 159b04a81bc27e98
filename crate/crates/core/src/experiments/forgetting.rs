//! Interference-driven forgetting: targets stored at graded ages among near
//! competitors, probed with age-scaled query noise, accuracy fitted by a
//! power law over age bins.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::bm25::{bm25_build, tokenize, DEFAULT_B, DEFAULT_K1};
use crate::backends::graph::{build_graph, graph_retrieve};
use crate::error::{Error, Result};
use crate::hazard::RetentionCurve;
use crate::memory::{perturb, DecayParams, MemoryStore, MemoryTrace, NoiseParams};
use crate::rng::{substream, Rng};
use crate::stats::fit::{fit_power, floor_zero_bins, FitResult};
use crate::stats::inference::{bootstrap_ci, mean, Interval};
use crate::synth::ForgettingPool;
use crate::vector::Embeddings;

pub const DEFAULT_SEEDS: [u64; 5] = [42, 123, 456, 789, 1024];

// substream tags
const TAG_LAYOUT: u64 = 1;
const TAG_QUERY: u64 = 2;
const TAG_BOOT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Vector,
    Graph,
    Bm25,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Vector => "vector",
            Backend::Graph => "graph",
            Backend::Bm25 => "bm25",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgettingConfig {
    pub n_targets: usize,
    pub n_near_levels: Vec<usize>,
    pub horizon_days: f64,
    pub n_age_bins: usize,
    pub decay: DecayParams,
    pub noise: NoiseParams,
    pub seeds: Vec<u64>,
    pub edge_threshold: f64,
    pub damping: f64,
    pub bootstrap_resamples: usize,
}

impl Default for ForgettingConfig {
    fn default() -> Self {
        Self {
            n_targets: 100,
            n_near_levels: vec![0, 100, 1000, 10_000],
            horizon_days: 30.0,
            n_age_bins: 10,
            decay: DecayParams::default(),
            noise: NoiseParams::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            edge_threshold: 0.7,
            damping: 0.85,
            bootstrap_resamples: 10_000,
        }
    }
}

impl ForgettingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("forgetting needs at least one seed".into()));
        }
        if self.n_age_bins == 0 || self.n_targets < self.n_age_bins {
            return Err(Error::Config(format!(
                "need n_targets ({}) >= n_age_bins ({}) > 0",
                self.n_targets, self.n_age_bins
            )));
        }
        if !(self.horizon_days > 0.0 && self.horizon_days.is_finite()) {
            return Err(Error::Config("horizon_days must be positive".into()));
        }
        if self.n_near_levels.is_empty() {
            return Err(Error::Config("n_near_levels is empty".into()));
        }
        Ok(())
    }

    /// Bin centres; the first is `horizon / (2 n_bins)`.
    pub fn bin_midpoints(&self) -> Vec<f64> {
        let w = self.horizon_days / self.n_age_bins as f64;
        (0..self.n_age_bins).map(|b| (b as f64 + 0.5) * w).collect()
    }
}

/// Ages and competitor selection for one (seed, level) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub target_age: Vec<f64>,
    pub target_bin: Vec<usize>,
    pub competitor_rows: Vec<usize>,
    pub competitor_age: Vec<f64>,
}

/// Targets split into equal contiguous groups, one per age bin, aged
/// uniformly within their bin; `n_near` competitors drawn without
/// replacement and aged uniformly over the horizon.
pub fn layout(cfg: &ForgettingConfig, n_available: usize, n_near: usize, rng: &mut Rng) -> Result<Layout> {
    if n_near > n_available {
        return Err(Error::PoolTooSmall { available: n_available, needed: n_near });
    }
    let w = cfg.horizon_days / cfg.n_age_bins as f64;
    let target_bin: Vec<usize> = (0..cfg.n_targets).map(|i| i * cfg.n_age_bins / cfg.n_targets).collect();
    let target_age = target_bin.iter().map(|&b| (b as f64 + rng.random::<f64>()) * w).collect();
    let mut competitor_rows = rand::seq::index::sample(rng, n_available, n_near).into_vec();
    competitor_rows.sort_unstable();
    let competitor_age = (0..n_near).map(|_| rng.random::<f64>() * cfg.horizon_days).collect();
    Ok(Layout { target_age, target_bin, competitor_rows, competitor_age })
}

/// Age-scaled noisy probes, one per target; row `i` uses its own substream so
/// probes are identical across levels and backends.
pub fn noisy_queries(targets: &Embeddings, ages: &[f64], noise: &NoiseParams, seed: u64) -> Result<Embeddings> {
    let rows = (0..ages.len())
        .into_par_iter()
        .map(|i| perturb(targets.row(i), ages[i], noise, &mut substream(seed, &[TAG_QUERY, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Embeddings::empty(targets.dim()));
    }
    Embeddings::from_rows(&rows)
}

/// Everything a backend needs to answer one cell's probes.
pub struct Trial<'a> {
    /// Stored items; row index doubles as trace id.
    pub stored: &'a Embeddings,
    pub stored_age: &'a [f64],
    pub queries: &'a Embeddings,
    /// Stored row each probe should retrieve.
    pub answers: &'a [usize],
    /// Keyword documents for stored rows and probes (BM25 only).
    pub docs: Option<(&'a [String], &'a [String])>,
}

/// Per-probe top-1 correctness.
pub fn run_trial(trial: &Trial, backend: Backend, cfg: &ForgettingConfig) -> Result<Vec<bool>> {
    let now = cfg.horizon_days;
    let build_store = || {
        let traces = trial
            .stored
            .rows()
            .zip(trial.stored_age)
            .enumerate()
            .map(|(i, (v, &age))| MemoryTrace::new(i as u64, v.to_vec(), now - age))
            .collect();
        MemoryStore::new(traces, cfg.decay, cfg.noise, cfg.edge_threshold)
    };
    match backend {
        Backend::Vector => {
            let top = build_store()?.top1_batch(trial.queries, now)?;
            Ok(top.iter().zip(trial.answers).map(|(&t, &a)| t as usize == a).collect())
        }
        Backend::Graph => {
            let store = build_store()?;
            let g = build_graph(trial.stored, cfg.edge_threshold)?;
            let s = store.score_matrix(trial.queries, now)?;
            (0..s.nrows())
                .into_par_iter()
                .map(|i| {
                    let row: Vec<f64> = s.row(i).iter().copied().collect();
                    Ok(graph_retrieve(&g, &row, cfg.edge_threshold, cfg.damping)? == trial.answers[i])
                })
                .collect()
        }
        Backend::Bm25 => {
            let (stored_docs, query_docs) =
                trial.docs.ok_or_else(|| Error::Data("keyword backend needs documents".into()))?;
            let corpus: Vec<Vec<String>> = stored_docs.iter().map(|d| tokenize(d)).collect();
            let index = bm25_build(&corpus, DEFAULT_K1, DEFAULT_B)?;
            Ok(query_docs
                .iter()
                .zip(trial.answers)
                .map(|(q, &a)| {
                    let r = crate::backends::bm25::bm25_query(&index, &tokenize(q), 1);
                    r.first().is_some_and(|&(doc, _)| doc == a)
                })
                .collect())
        }
    }
}

pub fn bin_accuracy(successes: &[bool], bins: &[usize], n_bins: usize) -> Vec<f64> {
    let mut hit = vec![0usize; n_bins];
    let mut tot = vec![0usize; n_bins];
    for (&s, &b) in successes.iter().zip(bins) {
        tot[b] += 1;
        hit[b] += usize::from(s);
    }
    hit.iter().zip(&tot).map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 }).collect()
}

/// Power law on bin midpoints with empty bins floored at half a query.
pub fn fit_accuracy(cfg: &ForgettingConfig, acc: &[f64], per_bin: usize) -> Result<FitResult> {
    let (floored, flags) = floor_zero_bins(acc, per_bin);
    let mut fit = fit_power(&cfg.bin_midpoints(), &floored)?;
    let n = flags.iter().filter(|&&f| f).count();
    if n > 0 {
        fit.warnings.push(format!("{n} zero-accuracy bins floored at 0.5/{per_bin}"));
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub accuracy: Vec<f64>,
    pub b: f64,
    pub overall_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub n_near: usize,
    /// Seed-averaged accuracy per bin midpoint.
    pub curve: RetentionCurve,
    pub seeds: Vec<SeedRun>,
    pub b_mean: f64,
    /// Bootstrap interval of the mean per-seed exponent.
    pub b_ci: Interval,
    /// Power-law fit of the seed-averaged curve.
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub backend: Backend,
    pub levels: Vec<LevelResult>,
}

impl ForgettingReport {
    /// Exponent rises with competitor count, allowing a drop only where the
    /// adjacent intervals overlap.
    pub fn b_nondecreasing_up_to_ci(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].b_mean >= w[0].b_mean || w[1].b_ci.hi >= w[0].b_ci.lo)
    }
}

fn pool_for<'a>(pools: &'a [ForgettingPool], seed_idx: usize) -> &'a ForgettingPool {
    if pools.len() == 1 {
        &pools[0]
    } else {
        &pools[seed_idx]
    }
}

/// One (seed, level) cell of the standard protocol.
pub fn forgetting_cell(
    cfg: &ForgettingConfig,
    pool: &ForgettingPool,
    seed: u64,
    level_idx: usize,
    backend: Backend,
) -> Result<SeedRun> {
    let n_near = cfg.n_near_levels[level_idx];
    if pool.targets.n_rows() < cfg.n_targets {
        return Err(Error::PoolTooSmall { available: pool.targets.n_rows(), needed: cfg.n_targets });
    }
    let lay = layout(cfg, pool.competitors.n_rows(), n_near, &mut substream(seed, &[TAG_LAYOUT, level_idx as u64]))?;
    let target_rows: Vec<usize> = (0..cfg.n_targets).collect();
    let targets = pool.targets.select(&target_rows);
    let stored = targets.stack(&pool.competitors.select(&lay.competitor_rows))?;
    let stored_age: Vec<f64> = lay.target_age.iter().chain(&lay.competitor_age).copied().collect();
    let queries = noisy_queries(&targets, &lay.target_age, &cfg.noise, seed)?;
    let stored_docs: Vec<String> = pool.target_docs[..cfg.n_targets]
        .iter()
        .chain(lay.competitor_rows.iter().map(|&r| &pool.competitor_docs[r]))
        .cloned()
        .collect();
    let trial = Trial {
        stored: &stored,
        stored_age: &stored_age,
        queries: &queries,
        answers: &target_rows,
        docs: Some((&stored_docs, &pool.target_docs[..cfg.n_targets])),
    };
    let ok = run_trial(&trial, backend, cfg)?;
    seed_run(cfg, seed, &ok, &lay.target_bin)
}

pub fn seed_run(cfg: &ForgettingConfig, seed: u64, ok: &[bool], bins: &[usize]) -> Result<SeedRun> {
    let accuracy = bin_accuracy(ok, bins, cfg.n_age_bins);
    let per_bin = (cfg.n_targets / cfg.n_age_bins).max(1);
    let b = fit_accuracy(cfg, &accuracy, per_bin)?.param("b").unwrap_or(f64::NAN);
    let overall_accuracy = ok.iter().filter(|&&s| s).count() as f64 / ok.len().max(1) as f64;
    Ok(SeedRun { seed, accuracy, b, overall_accuracy })
}

/// Combine per-seed runs of one level.
pub fn aggregate_level(cfg: &ForgettingConfig, n_near: usize, level_idx: usize, seeds: Vec<SeedRun>) -> Result<LevelResult> {
    let n_bins = cfg.n_age_bins;
    let mean_acc: Vec<f64> = (0..n_bins).map(|b| mean(&seeds.iter().map(|s| s.accuracy[b]).collect::<Vec<_>>())).collect();
    let per_bin = (cfg.n_targets / n_bins).max(1) * seeds.len();
    let fit = fit_accuracy(cfg, &mean_acc, per_bin)?;
    let bs: Vec<f64> = seeds.iter().map(|s| s.b).collect();
    let mut boot_rng = substream(cfg.seeds[0], &[TAG_BOOT, level_idx as u64]);
    let b_ci = bootstrap_ci(&bs, mean, cfg.bootstrap_resamples.max(1), 0.95, &mut boot_rng)?;
    Ok(LevelResult {
        n_near,
        curve: RetentionCurve { times: cfg.bin_midpoints(), retention: mean_acc, n_items: cfg.n_targets * seeds.len() },
        b_mean: mean(&bs),
        b_ci,
        fit,
        seeds,
    })
}

/// Full protocol over every (seed, level) cell. `pools` holds either one
/// pool shared by all seeds or one pool per seed.
pub fn run_forgetting(cfg: &ForgettingConfig, pools: &[ForgettingPool], backend: Backend) -> Result<ForgettingReport> {
    cfg.validate()?;
    if pools.len() != 1 && pools.len() != cfg.seeds.len() {
        return Err(Error::Config(format!("{} pools for {} seeds", pools.len(), cfg.seeds.len())));
    }
    let max_level = cfg.n_near_levels.iter().copied().max().unwrap_or(0);
    for p in pools {
        if p.competitors.n_rows() < max_level {
            return Err(Error::PoolTooSmall { available: p.competitors.n_rows(), needed: max_level });
        }
    }
    let cells: Vec<(usize, usize)> =
        (0..cfg.n_near_levels.len()).flat_map(|l| (0..cfg.seeds.len()).map(move |s| (l, s))).collect();
    let runs = cells
        .par_iter()
        .map(|&(l, s)| forgetting_cell(cfg, pool_for(pools, s), cfg.seeds[s], l, backend))
        .collect::<Result<Vec<_>>>()?;
    let mut runs = runs.into_iter();
    let levels = cfg
        .n_near_levels
        .iter()
        .enumerate()
        .map(|(l, &n_near)| aggregate_level(cfg, n_near, l, runs.by_ref().take(cfg.seeds.len()).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForgettingReport { backend, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::synth::{sample_forgetting_pool, ManifoldConfig, PoolConfig};

    fn small_pool(n_comp: usize, seed: u64) -> ForgettingPool {
        let cfg = PoolConfig {
            manifold: ManifoldConfig::new(12, 128, 1.0, 0),
            n_targets: 40,
            n_competitors: n_comp,
            competitor_radius: 0.8,
        };
        sample_forgetting_pool(&cfg, &mut seeded(seed)).unwrap()
    }

    fn small_cfg() -> ForgettingConfig {
        ForgettingConfig {
            n_targets: 40,
            n_near_levels: vec![0, 200],
            seeds: vec![1, 2],
            bootstrap_resamples: 200,
            ..Default::default()
        }
    }

    #[test]
    fn midpoints_and_layout() {
        let cfg = ForgettingConfig::default();
        let m = cfg.bin_midpoints();
        assert_eq!(m.len(), 10);
        assert!((m[0] - 1.5).abs() < 1e-12 && (m[9] - 28.5).abs() < 1e-12);
        let lay = layout(&cfg, 500, 300, &mut seeded(1)).unwrap();
        assert_eq!(lay.competitor_rows.len(), 300);
        for (a, b) in lay.target_age.iter().zip(&lay.target_bin) {
            assert!(*a >= *b as f64 * 3.0 && *a < (*b + 1) as f64 * 3.0);
        }
        assert!(matches!(layout(&cfg, 10, 11, &mut seeded(1)), Err(Error::PoolTooSmall { .. })));
    }

    #[test]
    fn noiseless_competitor_free_is_perfect() {
        let cfg = ForgettingConfig { noise: NoiseParams { sigma: 0.0 }, n_near_levels: vec![0], ..small_cfg() };
        let pools = [small_pool(0, 3)];
        for backend in [Backend::Vector, Backend::Graph, Backend::Bm25] {
            let r = run_forgetting(&cfg, &pools, backend).unwrap();
            assert!(r.levels[0].curve.retention.iter().all(|&a| a == 1.0), "{backend:?}");
            assert_eq!(r.levels[0].b_mean, 0.0);
        }
    }

    #[test]
    fn keyword_backend_ignores_age() {
        let cfg = small_cfg();
        let r = run_forgetting(&cfg, &[small_pool(300, 4)], Backend::Bm25).unwrap();
        for l in &r.levels {
            assert!(l.b_mean.abs() <= 0.01);
        }
    }

    #[test]
    fn cells_are_deterministic() {
        let cfg = small_cfg();
        let pools = [small_pool(300, 5)];
        let a = run_forgetting(&cfg, &pools, Backend::Vector).unwrap();
        let b = run_forgetting(&cfg, &pools, Backend::Vector).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_pool_rejected() {
        let cfg = ForgettingConfig { n_near_levels: vec![1000], ..small_cfg() };
        assert!(matches!(
            run_forgetting(&cfg, &[small_pool(10, 6)], Backend::Vector),
            Err(Error::PoolTooSmall { .. })
        ));
    }
}
