//! Forgetting and usefulness of each mitigation, and the frontier they
//! trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::bm25::{bm25_build, bm25_query, tokenize, DEFAULT_B, DEFAULT_K1};
use crate::backends::retrieval_agreement;
use crate::error::{Error, Result};
use crate::experiments::forgetting::{
    aggregate_level, layout, noisy_queries, run_trial, seed_run, Backend, ForgettingConfig, Layout, SeedRun, Trial,
};
use crate::geometry::dims::{dim_report, participation_ratio, DimReport, LocalDimEstimator};
use crate::memory::perturb;
use crate::rng::substream;
use crate::solutions::{gram_schmidt_rows, kmeans_compress, nn_accuracy, zero_pad, PcaBasis, RandomProjection};
use crate::stats::inference::{bootstrap_ci, mean};
use crate::synth::ForgettingPool;
use crate::vector::Embeddings;

const TAG_LAYOUT: u64 = 21;
const TAG_PROJECTION: u64 = 22;
const TAG_KMEANS: u64 = 23;
const TAG_ORTHO_QUERY: u64 = 24;
const TAG_USEFULNESS_BOOT: u64 = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub solution: String,
    pub config: String,
    pub forgetting_b: f64,
    pub b_ci: (f64, f64),
    pub usefulness: f64,
    /// Bootstrap interval of the mean per-seed usefulness.
    pub usefulness_ci: (f64, f64),
    pub usefulness_metric: String,
    /// Participation ratio of the stored set after the transform.
    pub d_eff_after: f64,
    pub n_competitors: usize,
    pub dominated: bool,
}

/// Label each point dominated iff another has strictly lower `b` and
/// strictly higher usefulness.
pub fn pareto_sweep(mut points: Vec<ParetoPoint>) -> Vec<ParetoPoint> {
    let snapshot: Vec<(f64, f64)> = points.iter().map(|p| (p.forgetting_b, p.usefulness)).collect();
    for p in &mut points {
        p.dominated = snapshot.iter().any(|&(b, u)| b < p.forgetting_b && u > p.usefulness);
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolutionsConfig {
    /// Competitors stored alongside the targets.
    pub n_competitors: usize,
    pub pad_dim: usize,
    pub pca_dims: Vec<usize>,
    pub projection_dims: Vec<usize>,
    /// Competitors for the orthogonalized store, which must fit in `d_nom`.
    pub ortho_competitors: usize,
    pub kmeans_ks: Vec<usize>,
    /// Rows sampled for dimensionality estimates.
    pub deff_sample: usize,
    pub lb_k: usize,
}

impl Default for SolutionsConfig {
    fn default() -> Self {
        Self {
            n_competitors: 5000,
            pad_dim: 4096,
            pca_dims: vec![64],
            projection_dims: vec![256],
            ortho_competitors: 400,
            kmeans_ks: vec![50, 500, 2500],
            deff_sample: 1000,
            lb_k: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solution {
    Original,
    ZeroPad { dim: usize },
    Pca { dim: usize },
    Keyword,
    Orthogonalize,
    RandomProjection { dim: usize },
    KMeans { k: usize },
}

impl Solution {
    fn labels(&self) -> (&'static str, String, &'static str) {
        match *self {
            Solution::Original => ("original", "unchanged".into(), "nn_accuracy"),
            Solution::ZeroPad { dim } => ("zero_pad", format!("d={dim}"), "nn_accuracy"),
            Solution::Pca { dim } => ("pca", format!("d={dim}"), "nn_accuracy"),
            Solution::Keyword => ("bm25", "k1=1.5,b=0.75".into(), "agreement"),
            Solution::Orthogonalize => ("gram_schmidt", "modified".into(), "nn_accuracy"),
            Solution::RandomProjection { dim } => ("random_projection", format!("k={dim}"), "nn_accuracy"),
            Solution::KMeans { k } => ("kmeans", format!("k={k}"), "centroid_accuracy"),
        }
    }
}

struct CellOut {
    run: SeedRun,
    usefulness: f64,
    d_eff: f64,
}

fn sample_rows(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        (0..n).collect()
    } else {
        (0..max).map(|i| i * n / max).collect()
    }
}

fn pr_of(e: &Embeddings, max_rows: usize) -> Result<f64> {
    participation_ratio(&e.select(&sample_rows(e.n_rows(), max_rows)))
}

/// Cosine nearest neighbour of every row but itself, ties to lower index.
fn cosine_nn(e: &Embeddings) -> Vec<Vec<usize>> {
    let g = e.cross_dots(e);
    (0..e.n_rows())
        .map(|i| {
            (0..e.n_rows())
                .filter(|&j| j != i)
                .max_by(|&a, &b| g[(i, a)].total_cmp(&g[(i, b)]).then(b.cmp(&a)))
                .into_iter()
                .collect()
        })
        .collect()
}

fn solution_cell(
    fcfg: &ForgettingConfig,
    scfg: &SolutionsConfig,
    pool: &ForgettingPool,
    seed: u64,
    sol: Solution,
) -> Result<CellOut> {
    let nt = fcfg.n_targets;
    let n_near = if sol == Solution::Orthogonalize { scfg.ortho_competitors } else { scfg.n_competitors };
    let lay: Layout = layout(fcfg, pool.competitors.n_rows(), n_near, &mut substream(seed, &[TAG_LAYOUT]))?;
    let target_rows: Vec<usize> = (0..nt).collect();
    let targets = pool.targets.select(&target_rows);
    let stored = targets.stack(&pool.competitors.select(&lay.competitor_rows))?;
    let stored_age: Vec<f64> = lay.target_age.iter().chain(&lay.competitor_age).copied().collect();
    let raw_queries = || noisy_queries(&targets, &lay.target_age, &fcfg.noise, seed);
    let plain = |stored_t: &Embeddings, queries: &Embeddings, backend: Backend| -> Result<SeedRun> {
        let trial = Trial { stored: stored_t, stored_age: &stored_age, queries, answers: &target_rows, docs: None };
        seed_run(fcfg, seed, &run_trial(&trial, backend, fcfg)?, &lay.target_bin)
    };
    let map_rows = |q: &Embeddings, f: &dyn Fn(&[f64]) -> Result<Vec<f64>>| -> Result<Embeddings> {
        Embeddings::from_rows(&q.rows().map(f).collect::<Result<Vec<_>>>()?)
    };
    match sol {
        Solution::Original => {
            let run = plain(&stored, &raw_queries()?, Backend::Vector)?;
            Ok(CellOut { run, usefulness: 1.0, d_eff: pr_of(&stored, scfg.deff_sample)? })
        }
        Solution::ZeroPad { dim } => {
            let padded = zero_pad(&stored, dim)?;
            let q = zero_pad(&raw_queries()?, dim)?;
            let run = plain(&padded, &q, Backend::Vector)?;
            let usefulness = nn_accuracy(&stored, &padded)?;
            Ok(CellOut { run, usefulness, d_eff: pr_of(&padded, scfg.deff_sample)? })
        }
        Solution::Pca { dim } => {
            let basis = PcaBasis::fit(&stored, dim)?;
            let reduced = basis.project(&stored)?;
            let q = map_rows(&raw_queries()?, &|r| basis.project_row(r))?;
            let run = plain(&reduced, &q, Backend::Vector)?;
            let usefulness = nn_accuracy(&stored, &reduced)?;
            Ok(CellOut { run, usefulness, d_eff: pr_of(&reduced, scfg.deff_sample)? })
        }
        Solution::RandomProjection { dim } => {
            let proj = RandomProjection::new(stored.dim(), dim, &mut substream(seed, &[TAG_PROJECTION]))?;
            let projected = proj.apply(&stored)?;
            let q = map_rows(&raw_queries()?, &|r| proj.apply_row(r))?;
            let run = plain(&projected, &q, Backend::Vector)?;
            let usefulness = nn_accuracy(&stored, &projected)?;
            Ok(CellOut { run, usefulness, d_eff: pr_of(&projected, scfg.deff_sample)? })
        }
        Solution::Orthogonalize => {
            let (n, d) = (stored.n_rows(), stored.dim());
            if n > d {
                return Err(Error::TooManyVectors { n, d });
            }
            let rows: Vec<Vec<f64>> = stored.rows().map(<[f64]>::to_vec).collect();
            let ortho = Embeddings::from_rows(&gram_schmidt_rows(&rows)?)?;
            // the transform has no meaning off the stored set: probes perturb
            // the orthogonalized targets themselves
            let q = Embeddings::from_rows(
                &(0..nt)
                    .map(|i| {
                        perturb(ortho.row(i), lay.target_age[i], &fcfg.noise, &mut substream(seed, &[TAG_ORTHO_QUERY, i as u64]))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )?;
            let run = plain(&ortho, &q, Backend::Vector)?;
            let usefulness = nn_accuracy(&stored, &ortho)?;
            Ok(CellOut { run, usefulness, d_eff: pr_of(&ortho, scfg.deff_sample)? })
        }
        Solution::Keyword => {
            let docs: Vec<String> = pool.target_docs[..nt]
                .iter()
                .chain(lay.competitor_rows.iter().map(|&r| &pool.competitor_docs[r]))
                .cloned()
                .collect();
            let trial = Trial {
                stored: &stored,
                stored_age: &stored_age,
                queries: &targets,
                answers: &target_rows,
                docs: Some((&docs, &pool.target_docs[..nt])),
            };
            let run = seed_run(fcfg, seed, &run_trial(&trial, Backend::Bm25, fcfg)?, &lay.target_bin)?;
            let corpus: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
            let index = bm25_build(&corpus, DEFAULT_K1, DEFAULT_B)?;
            let keyword_nn: Vec<Vec<usize>> = corpus
                .par_iter()
                .enumerate()
                .map(|(i, q)| {
                    bm25_query(&index, q, 2).into_iter().map(|r| r.0).filter(|&j| j != i).take(1).collect()
                })
                .collect();
            let usefulness = retrieval_agreement(&keyword_nn, &cosine_nn(&stored))?;
            Ok(CellOut { run, usefulness, d_eff: pr_of(&stored, scfg.deff_sample)? })
        }
        Solution::KMeans { k } => {
            let km = kmeans_compress(&stored, k, &mut substream(seed, &[TAG_KMEANS]))?;
            let mut age_sum = vec![0.0; k];
            let mut members = vec![0usize; k];
            for (&a, &age) in km.assignments.iter().zip(&stored_age) {
                age_sum[a] += age;
                members[a] += 1;
            }
            let centroid_age: Vec<f64> = age_sum.iter().zip(&members).map(|(s, &m)| s / m as f64).collect();
            let answers: Vec<usize> = km.assignments[..nt].to_vec();
            let q = raw_queries()?;
            let trial =
                Trial { stored: &km.centroids, stored_age: &centroid_age, queries: &q, answers: &answers, docs: None };
            let run = seed_run(fcfg, seed, &run_trial(&trial, Backend::Vector, fcfg)?, &lay.target_bin)?;
            let usefulness = run.overall_accuracy;
            let d_eff = if k > 1 { pr_of(&km.centroids, scfg.deff_sample)? } else { 1.0 };
            Ok(CellOut { run, usefulness, d_eff })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionsReport {
    pub points: Vec<ParetoPoint>,
    /// Dimensionality of the first seed's stored set before and after
    /// zero-padding.
    pub padding_dims: Option<(DimReport, DimReport)>,
    pub warnings: Vec<String>,
}

impl SolutionsReport {
    pub fn point(&self, solution: &str, config: &str) -> Option<&ParetoPoint> {
        self.points.iter().find(|p| p.solution == solution && p.config == config)
    }
}

pub fn solution_list(cfg: &SolutionsConfig) -> Vec<Solution> {
    let mut s = vec![Solution::Original, Solution::ZeroPad { dim: cfg.pad_dim }];
    s.extend(cfg.pca_dims.iter().map(|&dim| Solution::Pca { dim }));
    s.push(Solution::Keyword);
    s.push(Solution::Orthogonalize);
    s.extend(cfg.projection_dims.iter().map(|&dim| Solution::RandomProjection { dim }));
    s.extend(cfg.kmeans_ks.iter().map(|&k| Solution::KMeans { k }));
    s
}

fn padding_dims(fcfg: &ForgettingConfig, scfg: &SolutionsConfig, pool: &ForgettingPool) -> Result<(DimReport, DimReport)> {
    let lay = layout(fcfg, pool.competitors.n_rows(), scfg.n_competitors, &mut substream(fcfg.seeds[0], &[TAG_LAYOUT]))?;
    let stored = pool.targets.select(&(0..fcfg.n_targets).collect::<Vec<_>>()).stack(&pool.competitors.select(&lay.competitor_rows))?;
    let sample = stored.select(&sample_rows(stored.n_rows(), scfg.deff_sample));
    let est = LocalDimEstimator::LevinaBickel { k: scfg.lb_k };
    Ok((dim_report(&sample, est)?, dim_report(&zero_pad(&sample, scfg.pad_dim)?, est)?))
}

/// Every solution on every seed. `pools` holds one pool shared by all seeds
/// or one per seed.
pub fn run_solutions(fcfg: &ForgettingConfig, scfg: &SolutionsConfig, pools: &[ForgettingPool]) -> Result<SolutionsReport> {
    fcfg.validate()?;
    if pools.len() != 1 && pools.len() != fcfg.seeds.len() {
        return Err(Error::Config(format!("{} pools for {} seeds", pools.len(), fcfg.seeds.len())));
    }
    let sols = solution_list(scfg);
    let cells: Vec<(usize, usize)> = (0..sols.len()).flat_map(|s| (0..fcfg.seeds.len()).map(move |k| (s, k))).collect();
    let outs = cells
        .par_iter()
        .map(|&(s, k)| {
            let pool = if pools.len() == 1 { &pools[0] } else { &pools[k] };
            solution_cell(fcfg, scfg, pool, fcfg.seeds[k], sols[s])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let mut points = Vec::with_capacity(sols.len());
    for (s, (sol, chunk)) in sols.iter().zip(outs.chunks(fcfg.seeds.len())).enumerate() {
        let (name, config, metric) = sol.labels();
        let runs: Vec<SeedRun> = chunk.iter().map(|c| c.run.clone()).collect();
        let level = aggregate_level(fcfg, 0, 1000 + s, runs)?;
        if let Solution::KMeans { k: 1 } = sol {
            warnings.push("kmeans k=1 stores a single memory: its exponent is degenerate".into());
        }
        let n_competitors = if *sol == Solution::Orthogonalize { scfg.ortho_competitors } else { scfg.n_competitors };
        let uses: Vec<f64> = chunk.iter().map(|c| c.usefulness).collect();
        let mut boot = substream(fcfg.seeds[0], &[TAG_USEFULNESS_BOOT, s as u64]);
        let u_ci = bootstrap_ci(&uses, mean, fcfg.bootstrap_resamples.max(1), 0.95, &mut boot)?;
        points.push(ParetoPoint {
            solution: name.into(),
            config,
            forgetting_b: level.b_mean,
            b_ci: (level.b_ci.lo, level.b_ci.hi),
            usefulness: mean(&uses),
            usefulness_ci: (u_ci.lo, u_ci.hi),
            usefulness_metric: metric.into(),
            d_eff_after: chunk[0].d_eff,
            n_competitors,
            dominated: false,
        });
    }
    let points = pareto_sweep(points);
    let padding_dims = Some(padding_dims(fcfg, scfg, &pools[0])?);
    Ok(SolutionsReport { points, padding_dims, warnings })
}
