//! Experiment configuration: one TOML document with a section per
//! experiment. Unknown keys are rejected at every level.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::drm::default_theta_grid;
use crate::experiments::forgetting::{Backend, ForgettingConfig, DEFAULT_SEEDS};
use crate::experiments::spacing::SpacingConfig;
use crate::experiments::tot::TotConfig;
use crate::hazard::{ArrivalConfig, MixtureConfig};
use crate::memory::{DecayParams, NoiseParams};
use crate::solutions::SolutionsConfig;
use crate::synth::{ClusterSpec, ManifoldConfig, PoolConfig};

/// Directory searched for data files the config leaves unset.
pub const DATA_DIR_ENV: &str = "KERNMEM_DATA_DIR";
pub const DEFAULT_EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const DEFAULT_DRM_EMBEDDINGS_FILE: &str = "drm_embeddings.bin";
pub const DEFAULT_DRM_LISTS_FILE: &str = "drm_lists.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub d_loc: usize,
    pub d_nom: usize,
    pub curvature_mix: f64,
    pub bandwidth: f64,
    pub competitor_radius: f64,
    pub n_targets: usize,
    pub n_competitors: usize,
    /// Draw a separate pool for every seed instead of sharing the first.
    pub pool_per_seed: bool,
    pub drm_lists: usize,
    pub drm_spread: f64,
    pub drm_delta: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d_loc: 12,
            d_nom: 1024,
            curvature_mix: 1.0,
            bandwidth: 0.7,
            competitor_radius: 0.8,
            n_targets: 100,
            n_competitors: 10_000,
            pool_per_seed: true,
            drm_lists: 24,
            drm_spread: 0.5,
            drm_delta: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn manifold(&self) -> ManifoldConfig {
        ManifoldConfig { bandwidth: self.bandwidth, ..ManifoldConfig::new(self.d_loc, self.d_nom, self.curvature_mix, 0) }
    }

    pub fn pool(&self) -> PoolConfig {
        PoolConfig {
            manifold: self.manifold(),
            n_targets: self.n_targets,
            n_competitors: self.n_competitors,
            competitor_radius: self.competitor_radius,
        }
    }

    pub fn drm_manifold(&self) -> ManifoldConfig {
        ManifoldConfig {
            cluster_spec: Some(ClusterSpec { n_clusters: self.drm_lists, spread: self.drm_spread }),
            ..self.manifold()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Embedding dump used as the target and competitor pool: the first
    /// `n_targets` rows are targets.
    pub embeddings: Option<PathBuf>,
    /// Labelled embedding dump that DRM words resolve against.
    pub drm_embeddings: Option<PathBuf>,
    pub drm_lists: Option<PathBuf>,
    /// Rescale loaded rows to unit norm.
    pub renormalize: Option<bool>,
    pub synth: SynthConfig,
}

impl DataConfig {
    pub fn renormalize(&self) -> bool {
        self.renormalize.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SppConfig {
    pub n_pairs: usize,
    pub paired: bool,
}

impl Default for SppConfig {
    fn default() -> Self {
        Self { n_pairs: 143, paired: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapmassConfig {
    pub n_samples: u64,
    pub seed: u64,
}

impl Default for CapmassConfig {
    fn default() -> Self {
        Self { n_samples: 1_000_000, seed: DEFAULT_SEEDS[0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimsConfig {
    /// Rows sampled from the pool for the estimates.
    pub sample: usize,
    pub lb_k: usize,
    /// Eigenvalue threshold of the spectral effective rank.
    pub rank_gamma: f64,
}

impl Default for DimsConfig {
    fn default() -> Self {
        Self { sample: 2000, lb_k: 10, rank_gamma: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HazardConfig {
    pub arrivals: ArrivalConfig,
    /// Interfering-arrival cap mass.
    pub mu_cap: f64,
    pub n_items: usize,
    pub n_times: usize,
    pub mixture: MixtureConfig,
    pub population_t_min: f64,
    pub population_t_max: f64,
    pub population_points: usize,
    /// Simulated concept streams fed back to the inter-arrival estimator.
    pub n_streams: usize,
    pub seed: u64,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            arrivals: ArrivalConfig { lambda0: 10.0, alpha: 0.5, horizon: 100.0 },
            mu_cap: 0.01,
            n_items: 10_000,
            n_times: 40,
            mixture: MixtureConfig { beta_shape: 1.0, alpha: 0.5, c_scale: 1.0 },
            population_t_min: 1.0,
            population_t_max: 1e5,
            population_points: 41,
            n_streams: 200,
            seed: DEFAULT_SEEDS[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrmConfig {
    pub theta_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for DrmConfig {
    fn default() -> Self {
        Self { theta_grid: default_theta_grid(), seed: DEFAULT_SEEDS[0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Replaces the seed list of every section when set.
    pub seeds: Option<Vec<u64>>,
    /// Replaces the decay of every section when set.
    pub decay: Option<DecayParams>,
    /// Replaces the probe noise of the forgetting and spacing sections when
    /// set.
    pub noise: Option<NoiseParams>,
    pub backends: Vec<Backend>,
    pub data: DataConfig,
    pub spp: SppConfig,
    pub capmass: CapmassConfig,
    pub dims: DimsConfig,
    pub hazard: HazardConfig,
    pub forgetting: ForgettingConfig,
    pub drm: DrmConfig,
    pub spacing: SpacingConfig,
    pub tot: TotConfig,
    pub solutions: SolutionsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: None,
            decay: None,
            noise: None,
            backends: vec![Backend::Vector, Backend::Graph, Backend::Bm25],
            data: DataConfig::default(),
            spp: SppConfig::default(),
            capmass: CapmassConfig::default(),
            dims: DimsConfig::default(),
            hazard: HazardConfig::default(),
            forgetting: ForgettingConfig::default(),
            drm: DrmConfig::default(),
            spacing: SpacingConfig::default(),
            tot: TotConfig::default(),
            solutions: SolutionsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse `path`; relative data paths are taken relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.embeddings, &mut cfg.data.drm_embeddings, &mut cfg.data.drm_lists].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Push the shared overrides into every section and fill unset data
    /// paths from `data_dir` when the files exist there.
    pub fn resolved(&self, data_dir: Option<&Path>) -> Self {
        let mut c = self.clone();
        if let Some(s) = &c.seeds {
            c.forgetting.seeds = s.clone();
            c.spacing.seeds = s.clone();
            c.tot.seeds = s.clone();
        }
        if let Some(d) = c.decay {
            c.forgetting.decay = d;
            c.spacing.decay = d;
        }
        if let Some(n) = c.noise {
            c.forgetting.noise = n;
            c.spacing.noise = n;
        }
        if let Some(dir) = data_dir {
            let fill = |slot: &mut Option<PathBuf>, name: &str| {
                let p = dir.join(name);
                if slot.is_none() && p.exists() {
                    *slot = Some(p);
                }
            };
            fill(&mut c.data.embeddings, DEFAULT_EMBEDDINGS_FILE);
            fill(&mut c.data.drm_embeddings, DEFAULT_DRM_EMBEDDINGS_FILE);
            fill(&mut c.data.drm_lists, DEFAULT_DRM_LISTS_FILE);
        }
        c
    }

    /// [`Self::resolved`] with the data directory taken from the environment.
    pub fn resolved_from_env(&self) -> Self {
        let dir = env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        self.resolved(dir.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        self.forgetting.validate()?;
        self.spacing.validate()?;
        self.tot.validate()?;
        self.hazard.arrivals.validate()?;
        self.hazard.mixture.validate()?;
        self.data.synth.manifold().validate()?;
        if self.backends.is_empty() {
            return Err(Error::Config("at least one backend is required".into()));
        }
        if self.drm.theta_grid.is_empty() {
            return Err(Error::Config("theta grid is empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}
