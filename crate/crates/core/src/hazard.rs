//! Competitor arrivals and the retention laws they induce.
//!
//! Competitors arrive as an inhomogeneous Poisson process with intensity
//! `lambda0 * t^(-alpha)`; each arrival lands inside the item's retrieval cap
//! with probability equal to the cap mass. An item survives until its first
//! in-cap arrival, so its retention is a stretched exponential. Mixing
//! stretched exponentials over a Gamma-distributed scale yields a population
//! power law with exponent `beta * (1 - alpha)`.

use rand::Rng as _;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::rng::{substream, Rng};
use crate::special::ln_gamma;
use crate::stats::fit::{ols, r_squared};

/// Arrivals are generated on `(T_MIN, horizon]`; the intensity is singular
/// at zero.
pub const T_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalConfig {
    /// Rate scale, events per day at `t = 1`.
    pub lambda0: f64,
    pub alpha: f64,
    /// Days.
    pub horizon: f64,
}

impl ArrivalConfig {
    pub fn new(lambda0: f64, alpha: f64, horizon: f64) -> Result<Self> {
        let cfg = Self { lambda0, alpha, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::Domain(format!("lambda0 must be positive (got {})", self.lambda0)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0, 1) (got {})", self.alpha)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive (got {})", self.horizon)));
        }
        Ok(())
    }

    /// Cumulative intensity `lambda0 t^(1-alpha) / (1-alpha)`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let e = 1.0 - self.alpha;
        self.lambda0 * t.max(0.0).powf(e) / e
    }

    /// Inverse of [`Self::cumulative`].
    pub fn inverse_cumulative(&self, u: f64) -> f64 {
        let e = 1.0 - self.alpha;
        (e * u / self.lambda0).powf(1.0 / e)
    }
}

/// Gamma-distributed per-item hazard scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    /// Gamma shape: the heterogeneity exponent.
    pub beta_shape: f64,
    pub alpha: f64,
    /// Gamma scale.
    pub c_scale: f64,
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_shape > 0.0 && self.c_scale > 0.0) {
            return Err(Error::Domain("mixture shape and scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0, 1) (got {})", self.alpha)));
        }
        Ok(())
    }

    /// Asymptotic population forgetting exponent.
    pub fn population_exponent(&self) -> f64 {
        self.beta_shape * (1.0 - self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionCurve {
    pub times: Vec<f64>,
    pub retention: Vec<f64>,
    /// Simulated items behind each point; 0 for analytic curves.
    pub n_items: usize,
}

impl RetentionCurve {
    /// Least-squares slope of log retention against log time over
    /// `[t_lo, t_hi]`.
    pub fn loglog_slope(&self, t_lo: f64, t_hi: f64) -> Result<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.retention)
            .filter(|(t, r)| **t >= t_lo && **t <= t_hi && **r > 0.0)
            .map(|(t, r)| (t.ln(), r.ln()))
            .unzip();
        if x.len() < 2 {
            return Err(Error::TooFewPoints { found: x.len(), needed: 2 });
        }
        Ok(ols(&x, &y).1)
    }
}

/// Event times of one realization on `(T_MIN, horizon]`, ascending, by
/// time-change inversion of unit-rate Poisson points.
pub fn simulate_arrivals(cfg: &ArrivalConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut events = Vec::new();
    if cfg.horizon <= T_MIN {
        return Ok(events);
    }
    let end = cfg.cumulative(cfg.horizon);
    let mut u = cfg.cumulative(T_MIN);
    loop {
        u += rng.sample::<f64, _>(Exp1);
        if u > end {
            break;
        }
        events.push(cfg.inverse_cumulative(u));
    }
    Ok(events)
}

/// `exp(-mu_cap * Lambda(t))`.
pub fn retention_analytic(t: f64, mu_cap: f64, cfg: &ArrivalConfig) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NegativeAge(t));
    }
    if !(0.0..=1.0).contains(&mu_cap) {
        return Err(Error::Domain(format!("cap mass must lie in [0, 1] (got {mu_cap})")));
    }
    Ok((-mu_cap * cfg.cumulative(t)).exp())
}

/// Rate constant `c` of the equivalent stretched exponential
/// `exp(-c t^(1-alpha))`.
pub fn stretched_rate(mu_cap: f64, cfg: &ArrivalConfig) -> f64 {
    mu_cap * cfg.lambda0 / (1.0 - cfg.alpha)
}

/// Time of the first in-cap arrival, or infinity if none before the horizon.
fn first_kill(cfg: &ArrivalConfig, mu_cap: f64, rng: &mut Rng) -> f64 {
    if mu_cap <= 0.0 || cfg.horizon <= T_MIN {
        return f64::INFINITY;
    }
    let end = cfg.cumulative(cfg.horizon);
    let mut u = cfg.cumulative(T_MIN);
    loop {
        u += rng.sample::<f64, _>(Exp1);
        if u > end {
            return f64::INFINITY;
        }
        if rng.random::<f64>() < mu_cap {
            return cfg.inverse_cumulative(u);
        }
    }
}

/// Survival fraction of `n_items` simulated items on `t_grid`.
pub fn retention_empirical(
    mu_cap: f64,
    cfg: &ArrivalConfig,
    n_items: usize,
    t_grid: &[f64],
    rng: &mut Rng,
) -> Result<RetentionCurve> {
    cfg.validate()?;
    if n_items < 100 {
        return Err(Error::Precondition(format!("need at least 100 items (got {n_items})")));
    }
    if !(0.0..=1.0).contains(&mu_cap) {
        return Err(Error::Domain(format!("cap mass must lie in [0, 1] (got {mu_cap})")));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| !(t >= 0.0 && t <= cfg.horizon)) {
        return Err(Error::Domain(format!("grid time {t} outside [0, horizon]")));
    }
    let base: u64 = rng.random();
    let kills: Vec<f64> = (0..n_items as u64)
        .into_par_iter()
        .map(|i| first_kill(cfg, mu_cap, &mut substream(base, &[i])))
        .collect();
    let retention = t_grid
        .iter()
        .map(|&t| kills.iter().filter(|&&k| k > t).count() as f64 / n_items as f64)
        .collect();
    Ok(RetentionCurve { times: t_grid.to_vec(), retention, n_items })
}

/// Closed form `(1 + c_scale t^(1-alpha))^(-beta)` of the Gamma mixture.
pub fn population_retention_closed_form(mix: &MixtureConfig, t: f64) -> f64 {
    (1.0 + mix.c_scale * t.powf(1.0 - mix.alpha)).powf(-mix.beta_shape)
}

const POP_REL_TOL: f64 = 1e-8;

/// Mixture of stretched exponentials over `c ~ Gamma(beta, c_scale)`,
/// integrated numerically.
///
/// Substituting `c = c_scale * v^(1/beta)` turns the Gamma density into a
/// constant, leaving `exp(-(1 + c_scale s) v^(1/beta)) / Gamma(beta + 1)`
/// with `s = t^(1-alpha)`, integrated over the `v` range where it is above
/// double-precision underflow.
pub fn population_retention(mix: &MixtureConfig, t_grid: &[f64]) -> Result<RetentionCurve> {
    mix.validate()?;
    let norm = (-ln_gamma(mix.beta_shape + 1.0)).exp();
    let mut retention = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t >= 0.0) {
            return Err(Error::NegativeAge(t));
        }
        let rate = 1.0 + mix.c_scale * t.powf(1.0 - mix.alpha);
        let inv_beta = 1.0 / mix.beta_shape;
        let upper = (700.0 / rate).powf(mix.beta_shape);
        let v = integrate(|v| (-rate * v.powf(inv_beta)).exp(), 0.0, upper, POP_REL_TOL, 0.0)?;
        retention.push(v * norm);
    }
    Ok(RetentionCurve { times: t_grid.to_vec(), retention, n_items: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterarrivalFit {
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub n_lags: usize,
    pub n_bins: usize,
}

/// Minimum pooled lag count.
pub const MIN_LAGS: usize = 100;
const LAG_BINS: usize = 20;
const MIN_BIN_COUNT: usize = 5;

/// Power-law exponent of the recurrence-lag density.
///
/// Each stream lists occurrence times of one concept measured from its
/// origin (first exposure at time 0). Lags are pooled, histogrammed on
/// logarithmic bins, and `log density` is regressed on `log lag`; the
/// exponent is minus the slope, so a `lambda0 t^(-alpha)` stream yields
/// `alpha`.
pub fn interarrival_alpha(event_streams: &[Vec<f64>]) -> Result<InterarrivalFit> {
    let lags: Vec<f64> = event_streams.iter().flatten().copied().filter(|&t| t > 0.0).collect();
    if lags.len() < MIN_LAGS {
        return Err(Error::InsufficientEvents { found: lags.len(), needed: MIN_LAGS });
    }
    let lo = lags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo * (1.0 + 1e-9)) {
        return Err(Error::Degenerate("all lags fall in a single bin".into()));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let width = (lhi - llo) / LAG_BINS as f64;
    let mut counts = [0usize; LAG_BINS];
    for &l in &lags {
        let b = (((l.ln() - llo) / width) as usize).min(LAG_BINS - 1);
        counts[b] += 1;
    }
    let n = lags.len() as f64;
    let (x, y): (Vec<f64>, Vec<f64>) = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= MIN_BIN_COUNT)
        .map(|(b, &c)| {
            let a = (llo + b as f64 * width).exp();
            let z = (llo + (b + 1) as f64 * width).exp();
            let centre = 0.5 * ((a.ln()) + (z.ln()));
            (centre, (c as f64 / ((z - a) * n)).ln())
        })
        .unzip();
    if x.len() < 3 {
        return Err(Error::Degenerate(format!("only {} populated lag bins", x.len())));
    }
    let (icpt, slope) = ols(&x, &y);
    let fitted: Vec<f64> = x.iter().map(|v| icpt + slope * v).collect();
    Ok(InterarrivalFit { alpha_hat: -slope, r_squared: r_squared(&y, &fitted), n_lags: lags.len(), n_bins: x.len() })
}
