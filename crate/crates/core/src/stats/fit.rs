//! Least-squares fits of retention laws.
//!
//! Power law `R(t) = a t^(-b)` and stretched exponential
//! `R(t) = exp(-c t^e)` are fitted by ordinary least squares on their
//! linearizing transforms; the logistic collapse curve
//! `R(n) = 1 / (1 + exp(k (n - n0)))` by Levenberg–Marquardt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::inference::{median, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Power,
    StretchedExp,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Named parameters: `a, b` (power), `c, exponent` (stretched),
    /// `n0, k` (logistic).
    pub params: Vec<(String, f64)>,
    /// Coefficient of determination on the fitting scale.
    pub r_squared: f64,
    /// Coefficient of determination of the fitted curve on the raw scale.
    pub r_squared_linear: f64,
    /// Per-parameter bootstrap interval, same order as `params`; empty
    /// until computed.
    pub ci: Vec<(f64, f64)>,
    pub n_points: usize,
    /// Indices of input points left out of the fit.
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Evaluate the fitted curve.
    pub fn predict(&self, x: f64) -> f64 {
        let p = |i: usize| self.params[i].1;
        match self.model {
            FitModel::Power => p(0) * x.powf(-p(1)),
            FitModel::StretchedExp => (-p(0) * x.powf(p(1))).exp(),
            FitModel::Logistic => logistic(x, p(0), p(1)),
        }
    }
}

pub(crate) fn r_squared(y: &[f64], fitted: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Ordinary least squares `y = intercept + slope x`.
pub(crate) fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (my - slope * mx, slope)
}

fn check_pairs(x: &[f64], y: &[f64], needed: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < needed {
        return Err(Error::TooFewPoints { found: x.len(), needed });
    }
    Ok(())
}

pub fn fit_power(t: &[f64], r: &[f64]) -> Result<FitResult> {
    check_pairs(t, r, 3)?;
    for (index, &v) in t.iter().chain(r).enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonpositiveInput { index: index % t.len(), value: v });
        }
    }
    let lx: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let (icpt, slope) = ols(&lx, &ly);
    let fitted: Vec<f64> = lx.iter().map(|x| icpt + slope * x).collect();
    let a = icpt.exp();
    let b = -slope;
    let lin: Vec<f64> = t.iter().map(|x| a * x.powf(-b)).collect();
    Ok(FitResult {
        model: FitModel::Power,
        params: vec![("a".into(), a), ("b".into(), b)],
        r_squared: r_squared(&ly, &fitted),
        r_squared_linear: r_squared(r, &lin),
        ci: Vec::new(),
        n_points: t.len(),
        excluded: Vec::new(),
        warnings: Vec::new(),
    })
}

pub fn fit_stretched(t: &[f64], r: &[f64]) -> Result<FitResult> {
    check_pairs(t, r, 3)?;
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    let (mut lx, mut ly, mut keep_t, mut keep_r) = (vec![], vec![], vec![], vec![]);
    for (i, (&ti, &ri)) in t.iter().zip(r).enumerate() {
        if !(ti > 0.0) {
            return Err(Error::NonpositiveInput { index: i, value: ti });
        }
        if !(ri > 0.0 && ri <= 1.0) {
            return Err(Error::RetentionOutOfRange { index: i, value: ri });
        }
        if ri == 1.0 {
            excluded.push(i);
            warnings.push(format!("point {i} has retention 1 and was excluded"));
            continue;
        }
        lx.push(ti.ln());
        ly.push((-ri.ln()).ln());
        keep_t.push(ti);
        keep_r.push(ri);
    }
    if lx.len() < 3 {
        return Err(Error::TooFewPoints { found: lx.len(), needed: 3 });
    }
    for w in &warnings {
        log::warn!("stretched-exponential fit: {w}");
    }
    let (icpt, slope) = ols(&lx, &ly);
    let fitted: Vec<f64> = lx.iter().map(|x| icpt + slope * x).collect();
    let c = icpt.exp();
    let lin: Vec<f64> = keep_t.iter().map(|x| (-c * x.powf(slope)).exp()).collect();
    Ok(FitResult {
        model: FitModel::StretchedExp,
        params: vec![("c".into(), c), ("exponent".into(), slope)],
        r_squared: r_squared(&ly, &fitted),
        r_squared_linear: r_squared(&keep_r, &lin),
        ci: Vec::new(),
        n_points: lx.len(),
        excluded,
        warnings,
    })
}

fn logistic(n: f64, n0: f64, k: f64) -> f64 {
    1.0 / (1.0 + (k * (n - n0)).exp())
}

const LM_TOL: f64 = 1e-10;
const LM_MAX_ITER: usize = 1000;

/// Initial slope near the median abscissa, from the nearest grid points on
/// either side; falls back to the end-to-end secant when that is flat.
fn midpoint_slope(n: &[f64], acc: &[f64], n0: f64) -> f64 {
    let mut idx: Vec<usize> = (0..n.len()).collect();
    idx.sort_by(|&i, &j| n[i].total_cmp(&n[j]));
    let below = idx.iter().rev().find(|&&i| n[i] < n0).or(idx.first()).copied().unwrap_or(0);
    let above = idx.iter().find(|&&i| n[i] > n0).or(idx.last()).copied().unwrap_or(0);
    let local = if n[above] != n[below] { (acc[above] - acc[below]) / (n[above] - n[below]) } else { 0.0 };
    if local != 0.0 {
        return local;
    }
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    if n[last] == n[first] {
        0.0
    } else {
        (acc[last] - acc[first]) / (n[last] - n[first])
    }
}

pub fn fit_logistic(n: &[f64], acc: &[f64]) -> Result<FitResult> {
    check_pairs(n, acc, 3)?;
    for (i, &a) in acc.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::RetentionOutOfRange { index: i, value: a });
        }
    }
    let (lo, hi) = acc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    if hi - lo < 0.2 {
        return Err(Error::NoTransition { range: hi - lo });
    }
    let mut n0 = median(n);
    let slope = midpoint_slope(n, acc, n0);
    let span = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - n.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut k = if slope != 0.0 { -4.0 * slope } else { 4.0 / span };

    let cost = |n0: f64, k: f64| -> f64 { n.iter().zip(acc).map(|(&x, &y)| (y - logistic(x, n0, k)).powi(2)).sum() };
    let mut c = cost(n0, k);
    let mut lambda = 1e-3;
    let mut warnings = Vec::new();
    let mut converged = false;
    for _ in 0..LM_MAX_ITER {
        // normal equations of the 2-parameter problem
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in n.iter().zip(acc) {
            let r = logistic(x, n0, k);
            let s = r * (1.0 - r);
            let j1 = k * s;
            let j2 = -(x - n0) * s;
            let res = y - r;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * res;
            g2 += j2 * res;
        }
        if g1.abs() + g2.abs() < 1e-300 {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let (b11, b22) = (a11 * (1.0 + lambda) + 1e-300, a22 * (1.0 + lambda) + 1e-300);
            let det = b11 * b22 - a12 * a12;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let d1 = (b22 * g1 - a12 * g2) / det;
            let d2 = (b11 * g2 - a12 * g1) / det;
            let (cn0, ck) = (n0 + d1, k + d2);
            let cc = cost(cn0, ck);
            if cc.is_finite() && cc <= c {
                let rel_step = (d1.abs() / (n0.abs() + 1e-12)).max(d2.abs() / (k.abs() + 1e-12));
                let rel_cost = (c - cc) / c.max(1e-300);
                n0 = cn0;
                k = ck;
                c = cc;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_step < LM_TOL || rel_cost < LM_TOL || c < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("Levenberg–Marquardt stopped after {LM_MAX_ITER} iterations"));
    }
    if k < 0.0 {
        warnings.push(format!("negative steepness k = {k}: response increases with n"));
    }
    for w in &warnings {
        log::warn!("logistic fit: {w}");
    }
    let fitted: Vec<f64> = n.iter().map(|&x| logistic(x, n0, k)).collect();
    let r2 = r_squared(acc, &fitted);
    Ok(FitResult {
        model: FitModel::Logistic,
        params: vec![("n0".into(), n0), ("k".into(), k)],
        r_squared: r2,
        r_squared_linear: r2,
        ci: Vec::new(),
        n_points: n.len(),
        excluded: Vec::new(),
        warnings,
    })
}

/// Replace zero-accuracy bins by `0.5 / n_queries` so they can enter a log
/// fit. Returns the adjusted values and which entries were floored.
pub fn floor_zero_bins(acc: &[f64], n_queries: usize) -> (Vec<f64>, Vec<bool>) {
    let floor = 0.5 / n_queries.max(1) as f64;
    acc.iter().map(|&a| if a <= 0.0 { (floor, true) } else { (a, false) }).unzip()
}

/// Pairs bootstrap of a fit's parameters; fills `fit.ci`.
///
/// Resamples whose fit fails are skipped. The interval is widened if needed
/// so that it contains the point estimate.
pub fn bootstrap_fit_ci<F>(
    fit: &mut FitResult,
    x: &[f64],
    y: &[f64],
    fitter: F,
    n_resamples: usize,
    level: f64,
    rng: &mut Rng,
) -> Result<()>
where
    F: Fn(&[f64], &[f64]) -> Result<FitResult>,
{
    use rand::Rng as _;
    let n = x.len();
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(n_resamples); fit.params.len()];
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..n_resamples {
        for i in 0..n {
            let j = rng.random_range(0..n);
            bx[i] = x[j];
            by[i] = y[j];
        }
        if let Ok(f) = fitter(&bx, &by) {
            if f.params.iter().all(|p| p.1.is_finite()) {
                for (d, p) in draws.iter_mut().zip(&f.params) {
                    d.push(p.1);
                }
            }
        }
    }
    if draws[0].is_empty() {
        return Err(Error::Degenerate("every bootstrap resample failed to fit".into()));
    }
    let alpha = (1.0 - level) / 2.0;
    fit.ci = draws
        .iter_mut()
        .zip(&fit.params)
        .map(|(d, &(_, point))| {
            d.sort_by(f64::total_cmp);
            let lo = quantile_sorted(d, alpha).min(point);
            let hi = quantile_sorted(d, 1.0 - alpha).max(point);
            (lo, hi)
        })
        .collect();
    Ok(())
}
