//! Spacing: three study repetitions spread over windows of increasing
//! length, one retrieval test long after.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::forgetting::{noisy_queries, DEFAULT_SEEDS};
use crate::memory::{DecayParams, MemoryStore, MemoryTrace, NoiseParams};
use crate::rng::substream;
use crate::stats::inference::{cohens_d, mean, wilcoxon_one_sided};
use crate::synth::ForgettingPool;

const TAG_DISTRACTORS: u64 = 11;
const TAG_REPS: u64 = 12;
const TAG_QUERY_SEED: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacingWindow {
    pub name: String,
    /// Width of the repetition window, days.
    pub days: f64,
}

pub fn default_windows() -> Vec<SpacingWindow> {
    [("massed", 120.0 / 86_400.0), ("short", 2.0 / 24.0), ("medium", 2.0), ("long", 14.0)]
        .into_iter()
        .map(|(n, d)| SpacingWindow { name: n.into(), days: d })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpacingConfig {
    pub n_items: usize,
    pub n_distractors: usize,
    pub noise: NoiseParams,
    pub decay: DecayParams,
    pub test_day: f64,
    pub repetitions: usize,
    pub windows: Vec<SpacingWindow>,
    pub seeds: Vec<u64>,
}

impl Default for SpacingConfig {
    fn default() -> Self {
        Self {
            n_items: 100,
            n_distractors: 10_000,
            noise: NoiseParams { sigma: 0.25 },
            decay: DecayParams::default(),
            test_day: 30.0,
            repetitions: 3,
            windows: default_windows(),
            seeds: DEFAULT_SEEDS.to_vec(),
        }
    }
}

impl SpacingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.windows.is_empty() || self.repetitions == 0 || self.n_items == 0 {
            return Err(Error::Config("spacing needs seeds, windows, items and at least one repetition".into()));
        }
        if let Some(w) = self.windows.iter().find(|w| !(w.days >= 0.0 && w.days <= self.test_day)) {
            return Err(Error::Config(format!("window {} must lie within [0, test_day]", w.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingResult {
    pub condition: String,
    pub retention: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingReport {
    pub conditions: Vec<SpacingResult>,
    /// Effect size of the widest window over the narrowest.
    pub cohens_d: Option<f64>,
    /// One-sided Wilcoxon p for widest > narrowest over seeds.
    pub wilcoxon_p: Option<f64>,
    pub warnings: Vec<String>,
}

/// Retention for one (seed, window) cell.
///
/// Distractor selection, repetition fractions and query noise depend only on
/// the seed, so windows differ only in how far repetitions spread.
pub fn spacing_cell(cfg: &SpacingConfig, pool: &ForgettingPool, seed: u64, window_days: f64) -> Result<f64> {
    let n = cfg.n_items;
    if pool.targets.n_rows() < n {
        return Err(Error::PoolTooSmall { available: pool.targets.n_rows(), needed: n });
    }
    if pool.competitors.n_rows() < cfg.n_distractors {
        return Err(Error::PoolTooSmall { available: pool.competitors.n_rows(), needed: cfg.n_distractors });
    }
    let mut drng = substream(seed, &[TAG_DISTRACTORS]);
    let mut rows = rand::seq::index::sample(&mut drng, pool.competitors.n_rows(), cfg.n_distractors).into_vec();
    rows.sort_unstable();
    let mut rrng = substream(seed, &[TAG_REPS]);
    let reps = cfg.repetitions;
    let mut traces = Vec::with_capacity(n * reps + rows.len());
    let mut last = Vec::with_capacity(n);
    for i in 0..n {
        let mut times: Vec<f64> = (0..reps).map(|_| rrng.random::<f64>() * window_days).collect();
        times.sort_by(f64::total_cmp);
        last.push(times[reps - 1]);
        for (r, &t) in times.iter().enumerate() {
            traces.push(MemoryTrace::new((i * reps + r) as u64, pool.targets.row(i).to_vec(), t));
        }
    }
    for (k, &row) in rows.iter().enumerate() {
        let t = drng.random::<f64>() * cfg.test_day;
        traces.push(MemoryTrace::new((n * reps + k) as u64, pool.competitors.row(row).to_vec(), t));
    }
    let store = MemoryStore::new(traces, cfg.decay, cfg.noise, 0.0)?;
    let targets = pool.targets.select(&(0..n).collect::<Vec<_>>());
    let ages: Vec<f64> = last.iter().map(|t| cfg.test_day - t).collect();
    let queries = noisy_queries(&targets, &ages, &cfg.noise, seed ^ TAG_QUERY_SEED)?;
    let top = store.top1_batch(&queries, cfg.test_day)?;
    let hits = top.iter().enumerate().filter(|&(i, &id)| (id as usize) < n * reps && id as usize / reps == i).count();
    Ok(hits as f64 / n as f64)
}

/// `pools` holds one pool shared by all seeds or one pool per seed.
pub fn run_spacing(cfg: &SpacingConfig, pools: &[ForgettingPool]) -> Result<SpacingReport> {
    cfg.validate()?;
    if pools.len() != 1 && pools.len() != cfg.seeds.len() {
        return Err(Error::Config(format!("{} pools for {} seeds", pools.len(), cfg.seeds.len())));
    }
    let cells: Vec<(usize, usize)> =
        (0..cfg.windows.len()).flat_map(|w| (0..cfg.seeds.len()).map(move |s| (w, s))).collect();
    let values = cells
        .par_iter()
        .map(|&(w, s)| {
            let pool = if pools.len() == 1 { &pools[0] } else { &pools[s] };
            spacing_cell(cfg, pool, cfg.seeds[s], cfg.windows[w].days)
        })
        .collect::<Result<Vec<f64>>>()?;
    let conditions: Vec<SpacingResult> = cfg
        .windows
        .iter()
        .zip(values.chunks(cfg.seeds.len()))
        .map(|(w, v)| SpacingResult { condition: w.name.clone(), retention: mean(v), per_seed: v.to_vec() })
        .collect();
    let mut warnings = Vec::new();
    let (mut d, mut p) = (None, None);
    if conditions.len() >= 2 && cfg.seeds.len() >= 2 {
        let narrow = &conditions[0].per_seed;
        let wide = &conditions[conditions.len() - 1].per_seed;
        match cohens_d(wide, narrow) {
            Ok(v) => d = Some(v),
            Err(e) => warnings.push(format!("effect size undefined: {e}")),
        }
        match wilcoxon_one_sided(wide, narrow) {
            Ok(v) => p = Some(v),
            Err(e) => warnings.push(format!("Wilcoxon test undefined: {e}")),
        }
    }
    Ok(SpacingReport { conditions, cohens_d: d, wilcoxon_p: p, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::synth::{sample_forgetting_pool, ManifoldConfig, PoolConfig};

    fn pool(n_comp: usize) -> ForgettingPool {
        let cfg = PoolConfig {
            manifold: ManifoldConfig::new(12, 128, 1.0, 0),
            n_targets: 30,
            n_competitors: n_comp,
            competitor_radius: 0.8,
        };
        sample_forgetting_pool(&cfg, &mut seeded(21)).unwrap()
    }

    #[test]
    fn windows_in_days() {
        let w = default_windows();
        assert!((w[0].days * 86_400.0 - 120.0).abs() < 1e-9);
        assert!((w[1].days * 24.0 - 2.0).abs() < 1e-12);
        assert_eq!((w[2].days, w[3].days), (2.0, 14.0));
    }

    #[test]
    fn noiseless_distractor_free_is_perfect() {
        let cfg = SpacingConfig {
            n_items: 30,
            n_distractors: 0,
            noise: NoiseParams { sigma: 0.0 },
            seeds: vec![1, 2],
            ..Default::default()
        };
        let r = run_spacing(&cfg, &[pool(0)]).unwrap();
        assert!(r.conditions.iter().all(|c| c.retention == 1.0));
    }

    #[test]
    fn collapsed_schedules_are_identical() {
        let windows = default_windows().into_iter().map(|w| SpacingWindow { days: 0.0, ..w }).collect();
        let cfg = SpacingConfig { n_items: 30, n_distractors: 300, repetitions: 1, windows, seeds: vec![1, 2, 3], ..Default::default() };
        let r = run_spacing(&cfg, &[pool(300)]).unwrap();
        for c in &r.conditions[1..] {
            assert_eq!(c.per_seed, r.conditions[0].per_seed);
        }
    }
}
