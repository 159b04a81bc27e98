//! Associative false recall: studied lists, a critical lure, a threshold
//! sweep, and the hull-distance account of lure acceptance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{cosine_unnormalized, dot, normalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmList {
    pub list_id: String,
    pub studied: Vec<Vec<f64>>,
    pub lure: Vec<f64>,
    pub unrelated: Vec<f64>,
}

impl DrmList {
    pub fn validate(&self) -> Result<()> {
        let d = self.lure.len();
        if self.studied.is_empty() {
            return Err(Error::Data(format!("list {} has no studied items", self.list_id)));
        }
        for v in self.studied.iter().chain([&self.lure, &self.unrelated]) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Data(format!("list {} has a non-finite coordinate", self.list_id)));
            }
        }
        Ok(())
    }

    /// Unit direction of the studied centroid.
    pub fn centroid(&self) -> Result<Vec<f64>> {
        let d = self.lure.len();
        let mut c = vec![0.0; d];
        for s in &self.studied {
            c.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        normalize(&c)
    }
}

/// Theta grid from 0.50 to 0.95 in steps of 0.01.
pub fn default_theta_grid() -> Vec<f64> {
    (50..=95).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrmSweepRow {
    pub theta: f64,
    /// Mean over lists of the fraction of studied items accepted.
    pub hit_rate: f64,
    pub lure_fa: f64,
    pub unrelated_fa: f64,
}

/// Probe scores of one list against its studied centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListScores {
    pub list_id: String,
    pub studied: Vec<f64>,
    pub lure: f64,
    pub unrelated: f64,
}

pub fn list_scores(list: &DrmList) -> Result<ListScores> {
    list.validate()?;
    let c = list.centroid()?;
    Ok(ListScores {
        list_id: list.list_id.clone(),
        studied: list.studied.iter().map(|s| cosine_unnormalized(s, &c)).collect::<Result<_>>()?,
        lure: cosine_unnormalized(&list.lure, &c)?,
        unrelated: cosine_unnormalized(&list.unrelated, &c)?,
    })
}

/// Hull-distance solution for one lure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullFit {
    pub delta_star: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Norm of the simplex-projected gradient at the returned weights.
    pub residual: f64,
}

pub const HULL_TOL: f64 = 1e-8;
pub const HULL_MAX_ITER: usize = 10_000;

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Minimize `‖lure − Σ aᵢ studiedᵢ‖` over the simplex by projected gradient
/// with step `1/L` (`L` the top Gram eigenvalue), Nesterov momentum and
/// gradient-based restart. Stops when the projected-gradient step, scaled by
/// `L`, has norm below `HULL_TOL`.
pub fn hull_distance(lure: &[f64], studied: &[Vec<f64>]) -> Result<HullFit> {
    let k = studied.len();
    if k < 2 {
        return Err(Error::InsufficientData("hull distance needs at least 2 studied vectors".into()));
    }
    let d = lure.len();
    if let Some(s) = studied.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: s.len() });
    }
    let gram = DMatrix::from_fn(k, k, |i, j| dot(&studied[i], &studied[j]));
    let lin = DVector::from_iterator(k, studied.iter().map(|s| dot(s, lure)));
    let l = gram.clone().symmetric_eigenvalues().max().max(1e-300);
    let grad = |a: &DVector<f64>| &gram * a - &lin;
    let step = |a: &DVector<f64>| -> DVector<f64> {
        let g = grad(a);
        let moved: Vec<f64> = a.iter().zip(g.iter()).map(|(x, gi)| x - gi / l).collect();
        DVector::from_vec(project_simplex(&moved))
    };
    let mut a = DVector::from_element(k, 1.0 / k as f64);
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < HULL_MAX_ITER {
        iterations += 1;
        let next = step(&y);
        // restart momentum when it points uphill
        if (&y - &next).dot(&(&next - &a)) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &a) * ((t - 1.0) / t_next);
        a = next;
        t = t_next;
        residual = (&a - step(&a)).norm() * l;
        if residual < HULL_TOL {
            break;
        }
    }
    if residual >= HULL_TOL {
        return Err(Error::NonConvergence { iterations, residual });
    }
    let mut r = lure.to_vec();
    for (ai, s) in a.iter().zip(studied) {
        r.iter_mut().zip(s).for_each(|(x, y)| *x -= ai * y);
    }
    let delta_star = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(HullFit { delta_star, weights: a.iter().copied().collect(), iterations, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub delta_star: f64,
    pub weights: Vec<f64>,
    /// `min studied score − tau`.
    pub margin: f64,
    pub tau: f64,
    /// Linear score of the lure against the unit studied centroid.
    pub lure_score: f64,
    /// `tau + margin − delta_star`.
    pub lure_bound: f64,
    pub accepted: bool,
}

/// Hull distance of `lure` plus its kernel-threshold consequences at
/// threshold `tau`, scoring by inner product with the unit studied
/// centroid.
pub fn delta_convexity(lure: &[f64], studied: &[Vec<f64>], tau: f64) -> Result<ConvexityReport> {
    let fit = hull_distance(lure, studied)?;
    let mut c = vec![0.0; lure.len()];
    for s in studied {
        c.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let q = normalize(&c)?;
    let min_studied = studied.iter().map(|s| dot(&q, s)).fold(f64::INFINITY, f64::min);
    let margin = min_studied - tau;
    let lure_score = dot(&q, lure);
    Ok(ConvexityReport {
        delta_star: fit.delta_star,
        weights: fit.weights,
        margin,
        tau,
        lure_score,
        lure_bound: tau + margin - fit.delta_star,
        accepted: lure_score >= tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LureStatus {
    /// `delta_star < margin`: acceptance is forced.
    Guaranteed,
    /// The premise fails; acceptance may still happen.
    NotGuaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LureBoundCheck {
    /// `lure_score >= tau + margin − delta_star` (up to 1e-9).
    pub bound_holds: bool,
    pub premise_holds: bool,
    pub status: LureStatus,
}

pub fn lure_bound_check(r: &ConvexityReport) -> LureBoundCheck {
    let premise_holds = r.delta_star < r.margin;
    LureBoundCheck {
        bound_holds: r.lure_score >= r.lure_bound - 1e-9,
        premise_holds,
        status: if premise_holds { LureStatus::Guaranteed } else { LureStatus::NotGuaranteed },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListDiagnostics {
    pub scores: ListScores,
    pub convexity: ConvexityReport,
    pub check: LureBoundCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmReport {
    pub sweep: Vec<DrmSweepRow>,
    /// Smallest grid threshold with no unrelated false alarm.
    pub calibrated_theta: Option<f64>,
    /// Per-list hull diagnostics at the calibrated threshold.
    pub lists: Vec<ListDiagnostics>,
    pub warnings: Vec<String>,
}

pub fn sweep_row(scores: &[ListScores], theta: f64) -> DrmSweepRow {
    let n = scores.len() as f64;
    let frac = |v: &[f64]| v.iter().filter(|&&s| s >= theta).count() as f64 / v.len() as f64;
    DrmSweepRow {
        theta,
        hit_rate: scores.iter().map(|s| frac(&s.studied)).sum::<f64>() / n,
        lure_fa: scores.iter().filter(|s| s.lure >= theta).count() as f64 / n,
        unrelated_fa: scores.iter().filter(|s| s.unrelated >= theta).count() as f64 / n,
    }
}

pub fn run_drm(lists: &[DrmList], theta_grid: &[f64]) -> Result<DrmReport> {
    if lists.is_empty() {
        return Err(Error::InsufficientData("DRM needs at least one list".into()));
    }
    let scores = lists.iter().map(list_scores).collect::<Result<Vec<_>>>()?;
    let sweep: Vec<DrmSweepRow> = theta_grid.iter().map(|&t| sweep_row(&scores, t)).collect();
    let mut warnings = Vec::new();
    let max_unrelated = scores.iter().map(|s| s.unrelated).fold(f64::NEG_INFINITY, f64::max);
    let min_studied = scores.iter().flat_map(|s| s.studied.iter().copied()).fold(f64::INFINITY, f64::min);
    if max_unrelated >= min_studied {
        warnings.push(format!(
            "unrelated probes overlap studied items (max unrelated {max_unrelated:.4} >= min studied {min_studied:.4})"
        ));
    }
    let calibrated_theta = sweep.iter().find(|r| r.unrelated_fa == 0.0).map(|r| r.theta);
    if calibrated_theta.is_none() {
        warnings.push("no grid threshold rejects every unrelated probe".into());
    }
    let lists_diag = match calibrated_theta {
        Some(tau) => lists
            .iter()
            .zip(&scores)
            .map(|(l, s)| {
                let convexity = delta_convexity(&l.lure, &l.studied, tau)?;
                let check = lure_bound_check(&convexity);
                Ok(ListDiagnostics { scores: s.clone(), convexity, check })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let failed: Vec<&str> = lists_diag.iter().filter(|d| !d.check.premise_holds).map(|d| d.scores.list_id.as_str()).collect();
    if !failed.is_empty() {
        warnings.push(format!(
            "{} of {} lists have hull distance at or above the margin; lure acceptance is not guaranteed for: {}",
            failed.len(),
            lists_diag.len(),
            failed.join(", ")
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DrmReport { sweep, calibrated_theta, lists: lists_diag, warnings })
}

/// Brute-force hull distance for three studied vectors: a `1e-3` grid over
/// the 2-simplex, then successively finer local grids around the best cell.
pub fn hull_distance_grid3(lure: &[f64], studied: &[Vec<f64>]) -> f64 {
    assert_eq!(studied.len(), 3);
    let g: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| dot(&studied[i], &studied[j])).collect()).collect();
    let c: Vec<f64> = studied.iter().map(|s| dot(s, lure)).collect();
    let ll = dot(lure, lure);
    let f = |a: [f64; 3]| {
        let mut v = ll;
        for i in 0..3 {
            v -= 2.0 * a[i] * c[i];
            for j in 0..3 {
                v += a[i] * a[j] * g[i][j];
            }
        }
        v.max(0.0)
    };
    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    const N: usize = 1000;
    for i in 0..=N {
        for j in 0..=N - i {
            let a = [i as f64 / N as f64, j as f64 / N as f64, (N - i - j) as f64 / N as f64];
            let v = f(a);
            if v < best.1 {
                best = (a, v);
            }
        }
    }
    let mut h = 1e-4;
    for _ in 0..3 {
        let centre = best.0;
        for i in -10i32..=10 {
            for j in -10i32..=10 {
                let a0 = centre[0] + i as f64 * h;
                let a1 = centre[1] + j as f64 * h;
                let a = [a0, a1, 1.0 - a0 - a1];
                if a.iter().all(|&x| x >= 0.0) {
                    let v = f(a);
                    if v < best.1 {
                        best = (a, v);
                    }
                }
            }
        }
        h /= 10.0;
    }
    best.1.sqrt()
}
