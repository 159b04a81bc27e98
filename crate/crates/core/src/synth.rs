//! Synthetic embeddings with a known intrinsic dimension.
//!
//! Latent points `z ~ N(0, I_{d_loc})` are pushed through a fixed random
//! smooth map into `d_nom` dimensions and projected onto the unit sphere.
//! The map blends a linear isometric chart with random Fourier features;
//! both are smooth and injective on bounded latent regions, so local
//! dimension stays `d_loc`.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::drm::DrmList;
use crate::rng::Rng;
use crate::vector::{dot, norm, normalize, random_unit, Embeddings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    /// Tangent scatter of cluster members around the centre.
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub d_loc: usize,
    pub d_nom: usize,
    /// 0 is a flat chart, 1 is pure Fourier-feature lift.
    pub curvature_mix: f64,
    pub n: usize,
    #[serde(default)]
    pub cluster_spec: Option<ClusterSpec>,
    /// Frequency scale of the Fourier features.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
}

fn default_bandwidth() -> f64 {
    0.7
}

impl ManifoldConfig {
    pub fn new(d_loc: usize, d_nom: usize, curvature_mix: f64, n: usize) -> Self {
        Self { d_loc, d_nom, curvature_mix, n, cluster_spec: None, bandwidth: default_bandwidth() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_loc == 0 || self.d_nom < 2 || self.d_loc > self.d_nom {
            return Err(Error::Config(format!(
                "need 1 <= d_loc <= d_nom and d_nom >= 2 (got d_loc={}, d_nom={})",
                self.d_loc, self.d_nom
            )));
        }
        if !(0.0..=1.0).contains(&self.curvature_mix) {
            return Err(Error::Config(format!("curvature_mix {} outside [0, 1]", self.curvature_mix)));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        Ok(())
    }
}

fn gaussian_matrix(r: usize, c: usize, scale: f64, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// A fixed draw of the latent-to-sphere map.
#[derive(Debug, Clone)]
pub struct ManifoldMap {
    d_loc: usize,
    d_nom: usize,
    mix: f64,
    /// Offset direction keeping the flat chart away from the origin; absent
    /// when the chart already spans the whole space.
    offset: Option<DMatrix<f64>>,
    /// `d_loc × d_nom`, orthonormal rows.
    chart: DMatrix<f64>,
    /// `d_loc × d_nom` Fourier frequencies.
    freqs: DMatrix<f64>,
    phases: Vec<f64>,
}

impl ManifoldMap {
    pub fn new(cfg: &ManifoldConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (d_loc, d_nom) = (cfg.d_loc, cfg.d_nom);
        let extra = usize::from(d_loc < d_nom);
        let q = gaussian_matrix(d_nom, d_loc + extra, 1.0, rng).qr().q();
        let offset = (extra == 1).then(|| q.columns(0, 1).transpose());
        let chart = q.columns(extra, d_loc).transpose();
        let freqs = gaussian_matrix(d_loc, d_nom, cfg.bandwidth, rng);
        let phases = (0..d_nom).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        Ok(Self { d_loc, d_nom, mix: cfg.curvature_mix, offset, chart, freqs, phases })
    }

    pub fn d_loc(&self) -> usize {
        self.d_loc
    }

    pub fn d_nom(&self) -> usize {
        self.d_nom
    }

    /// Map latent rows (`n × d_loc`) to unit rows (`n × d_nom`).
    pub fn map(&self, latent: &DMatrix<f64>) -> Result<Embeddings> {
        if latent.ncols() != self.d_loc {
            return Err(Error::DimensionMismatch { expected: self.d_loc, found: latent.ncols() });
        }
        let n = latent.nrows();
        let mut lin = latent * &self.chart / (self.d_loc as f64).sqrt();
        if let Some(e0) = &self.offset {
            for mut row in lin.row_iter_mut() {
                row += e0;
            }
        }
        let mut out = Embeddings::zeros(n, self.d_nom);
        let rff = if self.mix > 0.0 { Some(latent * &self.freqs) } else { None };
        let amp = (2.0 / self.d_nom as f64).sqrt();
        for i in 0..n {
            let l: Vec<f64> = lin.row(i).iter().copied().collect();
            let ln = norm(&l);
            let row = out.row_mut(i);
            for j in 0..self.d_nom {
                row[j] = (1.0 - self.mix) * l[j] / ln;
            }
            if let Some(r) = &rff {
                for j in 0..self.d_nom {
                    row[j] += self.mix * amp * (r[(i, j)] + self.phases[j]).cos();
                }
            }
        }
        out.normalize_rows()?;
        Ok(out)
    }
}

/// `n × d` standard-normal latent draws.
pub fn latent_normal(n: usize, d: usize, rng: &mut Rng) -> DMatrix<f64> {
    gaussian_matrix(n, d, 1.0, rng)
}

/// Draw `cfg.n` points from a fresh random manifold.
pub fn sample_manifold(cfg: &ManifoldConfig, rng: &mut Rng) -> Result<Embeddings> {
    let map = ManifoldMap::new(cfg, rng)?;
    if cfg.n == 0 {
        return Ok(Embeddings::empty(cfg.d_nom));
    }
    map.map(&latent_normal(cfg.n, cfg.d_loc, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub manifold: ManifoldConfig,
    pub n_targets: usize,
    pub n_competitors: usize,
    /// Latent-space scatter of competitors around their anchor target.
    pub competitor_radius: f64,
}

/// Targets plus near competitors scattered around randomly chosen targets,
/// each with a token document for keyword retrieval.
#[derive(Debug, Clone)]
pub struct ForgettingPool {
    pub targets: Embeddings,
    pub competitors: Embeddings,
    /// Target index each competitor was scattered around.
    pub anchors: Vec<usize>,
    pub target_docs: Vec<String>,
    pub competitor_docs: Vec<String>,
}

/// Topic words shared by a target and its competitors.
const TOPIC_WORDS: usize = 3;
/// Words unique to each document.
const OWN_WORDS: usize = 4;

fn doc(topic: usize, kind: &str, idx: usize) -> String {
    let mut words: Vec<String> = (0..TOPIC_WORDS).map(|j| format!("topic{topic}w{j}")).collect();
    words.extend((0..OWN_WORDS).map(|j| format!("{kind}{idx}w{j}")));
    words.join(" ")
}

pub fn sample_forgetting_pool(cfg: &PoolConfig, rng: &mut Rng) -> Result<ForgettingPool> {
    if cfg.n_targets == 0 {
        return Err(Error::Config("pool needs at least one target".into()));
    }
    let map = ManifoldMap::new(&cfg.manifold, rng)?;
    let d_loc = cfg.manifold.d_loc;
    let zt = latent_normal(cfg.n_targets, d_loc, rng);
    let targets = map.map(&zt)?;
    let anchors: Vec<usize> = (0..cfg.n_competitors).map(|_| rng.random_range(0..cfg.n_targets)).collect();
    let mut zc = latent_normal(cfg.n_competitors, d_loc, rng) * cfg.competitor_radius;
    for (i, &a) in anchors.iter().enumerate() {
        for j in 0..d_loc {
            zc[(i, j)] += zt[(a, j)];
        }
    }
    let competitors = if cfg.n_competitors == 0 { Embeddings::empty(cfg.manifold.d_nom) } else { map.map(&zc)? };
    let target_docs = (0..cfg.n_targets).map(|i| doc(i, "target", i)).collect();
    let competitor_docs = anchors.iter().enumerate().map(|(i, &a)| doc(a, "comp", i)).collect();
    Ok(ForgettingPool { targets, competitors, anchors, target_docs, competitor_docs })
}

/// Number of studied items per synthetic list.
pub const DRM_LIST_LEN: usize = 15;

/// Unit vector orthogonal to every row of `basis` (assumed orthonormal).
fn orthogonal_direction(basis: &[Vec<f64>], d: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    for _ in 0..16 {
        let mut u = random_unit(d, rng);
        for b in basis {
            let c = dot(&u, b);
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        if norm(&u) > 1e-6 {
            return normalize(&u);
        }
    }
    Err(Error::Degenerate("no direction orthogonal to the studied span".into()))
}

fn orthonormal_basis(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = norm(&v);
        if n > 1e-10 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Clustered lists in the shape of the DRM paradigm.
///
/// Studied items scatter tangentially around a random centre. The lure is a
/// random convex combination of the studied items displaced by `delta_true`
/// along a direction orthogonal to their span; it is not renormalized, so its
/// distance to the hull is exactly `delta_true`. The unrelated probe is an
/// independent uniform direction.
pub fn sample_drm_clusters(cfg: &ManifoldConfig, delta_true: f64, rng: &mut Rng) -> Result<Vec<DrmList>> {
    let spec = cfg
        .cluster_spec
        .ok_or_else(|| Error::Config("DRM clusters need a cluster_spec".into()))?;
    let d = cfg.d_nom;
    if d <= DRM_LIST_LEN {
        return Err(Error::Config(format!("d_nom must exceed {DRM_LIST_LEN} for orthogonal lure offsets")));
    }
    if !(delta_true >= 0.0) {
        return Err(Error::Domain(format!("delta_true must be nonnegative (got {delta_true})")));
    }
    let tangent_scale = spec.spread / (d as f64).sqrt();
    (0..spec.n_clusters)
        .map(|list_id| {
            let centre = random_unit(d, rng);
            let studied = (0..DRM_LIST_LEN)
                .map(|_| {
                    let mut g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let c = dot(&g, &centre);
                    g.iter_mut().zip(&centre).for_each(|(x, y)| *x -= c * y);
                    let v: Vec<f64> = centre.iter().zip(&g).map(|(a, b)| a + tangent_scale * b).collect();
                    normalize(&v)
                })
                .collect::<Result<Vec<_>>>()?;
            let w: Vec<f64> = (0..DRM_LIST_LEN).map(|_| Exp1.sample(rng)).collect();
            let wsum: f64 = w.iter().sum();
            let mut lure = vec![0.0; d];
            for (wi, s) in w.iter().zip(&studied) {
                lure.iter_mut().zip(s).for_each(|(l, x)| *l += wi / wsum * x);
            }
            if delta_true > 0.0 {
                let u = orthogonal_direction(&orthonormal_basis(&studied), d, rng)?;
                lure.iter_mut().zip(&u).for_each(|(l, x)| *l += delta_true * x);
            }
            let unrelated = random_unit(d, rng);
            Ok(DrmList { list_id: format!("synth{list_id}"), studied, lure, unrelated })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dims::{levina_bickel, participation_ratio};
    use crate::rng::seeded;
    use crate::stats::fit::ols;

    #[test]
    fn zero_count_is_empty() {
        let e = sample_manifold(&ManifoldConfig::new(3, 10, 0.5, 0), &mut seeded(1)).unwrap();
        assert!(e.is_empty());
        assert_eq!(e.dim(), 10);
    }

    #[test]
    fn rows_are_unit_and_deterministic() {
        let cfg = ManifoldConfig::new(4, 32, 0.6, 200);
        let a = sample_manifold(&cfg, &mut seeded(9)).unwrap();
        let b = sample_manifold(&cfg, &mut seeded(9)).unwrap();
        assert!(a.all_unit());
        assert_eq!(a, b);
        assert_ne!(a, sample_manifold(&cfg, &mut seeded(10)).unwrap());
    }

    #[test]
    fn flat_chart_has_local_dimension() {
        let e = sample_manifold(&ManifoldConfig::new(5, 64, 0.0, 3000), &mut seeded(5)).unwrap();
        let lb = levina_bickel(&e, 10).unwrap();
        assert!((lb - 5.0).abs() <= 1.0, "{lb}");
    }

    #[test]
    fn full_rank_flat_chart_is_isotropic() {
        let e = sample_manifold(&ManifoldConfig::new(50, 50, 0.0, 20_000), &mut seeded(6)).unwrap();
        let pr = participation_ratio(&e).unwrap();
        assert!((pr - 50.0).abs() <= 2.5, "{pr}");
    }

    #[test]
    fn neighbour_counts_scale_with_local_dimension() {
        let d_loc = 2;
        let e = sample_manifold(&ManifoldConfig::new(d_loc, 16, 0.3, 20_000), &mut seeded(8)).unwrap();
        let radii: Vec<f64> = (0..6).map(|i| 0.02 * 10f64.powf(i as f64 / 5.0)).collect();
        let mut counts = vec![0usize; radii.len()];
        for a in 0..50 {
            let anchor = e.row(a * 37);
            for x in e.rows() {
                let dist = anchor.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                for (c, r) in counts.iter_mut().zip(&radii) {
                    if dist > 0.0 && dist <= *r {
                        *c += 1;
                    }
                }
            }
        }
        let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
        let slope = ols(&x, &y).1;
        assert!((slope - d_loc as f64).abs() <= 1.0, "{slope} from {counts:?}");
    }

    #[test]
    fn pool_competitors_sit_near_anchors() {
        let cfg = PoolConfig {
            manifold: ManifoldConfig { bandwidth: 0.7, ..ManifoldConfig::new(12, 256, 1.0, 0) },
            n_targets: 20,
            n_competitors: 200,
            competitor_radius: 0.8,
        };
        let p = sample_forgetting_pool(&cfg, &mut seeded(3)).unwrap();
        assert_eq!(p.competitors.n_rows(), 200);
        let mut near = 0.0;
        let mut far = 0.0;
        for (i, &a) in p.anchors.iter().enumerate() {
            near += dot(p.competitors.row(i), p.targets.row(a));
            far += dot(p.competitors.row(i), p.targets.row((a + 1) % 20));
        }
        assert!(near > far + 0.1 * 200.0, "{near} vs {far}");
        assert!(p.target_docs[0].contains("topic0w0"));
    }

    #[test]
    fn drm_lure_offset_is_orthogonal_to_studied() {
        let cfg = ManifoldConfig {
            cluster_spec: Some(ClusterSpec { n_clusters: 3, spread: 0.5 }),
            ..ManifoldConfig::new(8, 64, 0.0, 0)
        };
        let lists = sample_drm_clusters(&cfg, 0.1, &mut seeded(4)).unwrap();
        assert_eq!(lists.len(), 3);
        for l in &lists {
            assert_eq!(l.studied.len(), DRM_LIST_LEN);
            assert!(l.studied.iter().all(|s| (norm(s) - 1.0).abs() < 1e-12));
        }
        assert!(sample_drm_clusters(&ManifoldConfig::new(8, 64, 0.0, 0), 0.1, &mut seeded(4)).is_err());
    }
}
