//! Semantic proximity test: are related pairs closer than unrelated ones?

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::inference::{cohens_d, mean, paired_t, std_dev, welch_t, Sided};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SppReport {
    pub t_stat: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub cohens_d: f64,
    /// Differences have zero spread; `t_stat` is infinite and `p_value` 0.
    pub degenerate: bool,
    pub n: usize,
}

/// Paired (or Welch) t-test of related vs unrelated similarities. Cohen's d
/// is taken on the paired differences, or pooled for unpaired samples.
pub fn spp_test(related: &[f64], unrelated: &[f64], paired: bool) -> Result<SppReport> {
    if related.len() < 2 || unrelated.len() < 2 {
        return Err(Error::InsufficientData("SPP test needs at least 2 values per group".into()));
    }
    if paired {
        if related.len() != unrelated.len() {
            return Err(Error::LengthMismatch { left: related.len(), right: unrelated.len() });
        }
        let diffs: Vec<f64> = related.iter().zip(unrelated).map(|(a, b)| a - b).collect();
        let md = mean(&diffs);
        let sd = std_dev(&diffs);
        match paired_t(related, unrelated, Sided::TwoSided) {
            Ok(t) => Ok(SppReport {
                t_stat: t.t,
                p_value: t.p,
                cohens_d: if sd == 0.0 { 0.0 } else { md / sd },
                degenerate: false,
                n: diffs.len(),
            }),
            Err(Error::ZeroVariance(_)) => Ok(SppReport {
                t_stat: md.signum() * f64::INFINITY,
                p_value: 0.0,
                cohens_d: md.signum() * f64::INFINITY,
                degenerate: true,
                n: diffs.len(),
            }),
            Err(e) => Err(e),
        }
    } else {
        let t = welch_t(related, unrelated, Sided::TwoSided)?;
        Ok(SppReport {
            t_stat: t.t,
            p_value: t.p,
            cohens_d: cohens_d(related, unrelated)?,
            degenerate: false,
            n: related.len() + unrelated.len(),
        })
    }
}
