//! Spherical cap mass: the fraction of the unit sphere lying within a given
//! angle of an anchor direction.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::special::ln_beta_reg;

/// Below this many expected hits a Monte Carlo estimate is flagged rather
/// than compared.
pub const MIN_EXPECTED_HITS: f64 = 20.0;
const MC_SHARDS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapEstimate {
    pub d: usize,
    pub theta: f64,
    pub analytic_fraction: f64,
    pub mc_fraction: f64,
    pub mc_stderr: f64,
    pub n_samples: u64,
    /// Fewer than [`MIN_EXPECTED_HITS`] expected hits.
    pub low_signal: bool,
}

impl CapEstimate {
    pub fn ratio(&self) -> f64 {
        self.mc_fraction / self.analytic_fraction
    }
}

fn check_args(d: usize, theta: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!("sphere dimension must be >= 2 (got {d})")));
    }
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::Domain(format!("cap angle must lie in (0, pi) (got {theta})")));
    }
    Ok(())
}

/// Natural log of the cap fraction; finite for every `0 < theta < pi`.
pub fn ln_cap_fraction_analytic(d: usize, theta: f64) -> Result<f64> {
    check_args(d, theta)?;
    if theta > FRAC_PI_2 {
        let complement = ln_cap_fraction_analytic(d, PI - theta)?.exp();
        return Ok((1.0 - complement).ln());
    }
    let s2 = theta.sin().powi(2);
    Ok((0.5f64).ln() + ln_beta_reg((d as f64 - 1.0) / 2.0, 0.5, s2)?)
}

/// Cap fraction `1/2 * I_{sin^2 theta}((d-1)/2, 1/2)` for `theta <= pi/2`,
/// reflected for wider caps.
pub fn cap_fraction_analytic(d: usize, theta: f64) -> Result<f64> {
    check_args(d, theta)?;
    if theta == FRAC_PI_2 {
        return Ok(0.5);
    }
    Ok(ln_cap_fraction_analytic(d, theta)?.exp())
}

/// Count of uniform sphere samples within `theta` of the first basis vector.
/// Returns `(estimate, stderr)`.
pub fn cap_fraction_mc(d: usize, theta: f64, n: u64, rng: &mut Rng) -> Result<(f64, f64)> {
    if d < 2 {
        return Err(Error::Domain(format!("sphere dimension must be >= 2 (got {d})")));
    }
    if !(theta > 0.0 && theta <= PI) {
        return Err(Error::Domain(format!("cap angle must lie in (0, pi] (got {theta})")));
    }
    if n == 0 {
        return Err(Error::Precondition("Monte Carlo needs at least one sample".into()));
    }
    let cos_theta = theta.cos();
    let whole = theta >= PI;
    let base: u64 = rng.random();
    let hits: u64 = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = n / MC_SHARDS + u64::from(shard < n % MC_SHARDS);
            let mut r = substream(base, &[shard]);
            let mut hits = 0u64;
            let mut buf = vec![0.0f64; d];
            for _ in 0..count {
                if whole {
                    hits += 1;
                    continue;
                }
                let mut sq = 0.0;
                for x in buf.iter_mut() {
                    *x = r.sample(StandardNormal);
                    sq += *x * *x;
                }
                if buf[0] >= cos_theta * sq.sqrt() {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let p = hits as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Analytic and Monte Carlo cap mass side by side.
pub fn cap_estimate(d: usize, theta: f64, n: u64, rng: &mut Rng) -> Result<CapEstimate> {
    let analytic = cap_fraction_analytic(d, theta)?;
    let (mc, se) = cap_fraction_mc(d, theta, n, rng)?;
    Ok(CapEstimate {
        d,
        theta,
        analytic_fraction: analytic,
        mc_fraction: mc,
        mc_stderr: se,
        n_samples: n,
        low_signal: analytic * (n as f64) < MIN_EXPECTED_HITS,
    })
}

/// Dimensions and half-angles (degrees) of the verification grid.
pub const CAP_GRID_DIMS: [usize; 3] = [8, 16, 32];
pub const CAP_GRID_DEGREES: [f64; 5] = [10.0, 20.0, 30.0, 45.0, 60.0];

/// The `(d, theta)` cells of the verification grid whose expected Monte
/// Carlo hit count at `n` samples reaches [`MIN_EXPECTED_HITS`].
pub fn cap_verification_cells(n: u64) -> Vec<(usize, f64)> {
    let mut cells = Vec::new();
    for &d in &CAP_GRID_DIMS {
        for &deg in &CAP_GRID_DEGREES {
            let theta = deg.to_radians();
            let f = cap_fraction_analytic(d, theta).expect("grid cells are in domain");
            if f * n as f64 >= MIN_EXPECTED_HITS {
                cells.push((d, theta));
            }
        }
    }
    cells
}
