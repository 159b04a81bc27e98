//! Effect sizes, parametric and rank tests, and the percentile bootstrap.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

/// Alternative hypothesis of a test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    TwoSided,
    /// First sample larger.
    Greater,
    /// First sample smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Cohen's d with pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("Cohen's d needs at least 2 values per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        if diff == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::ZeroVariance(format!("pooled SD is zero with mean difference {diff}")));
    }
    Ok(diff / pooled)
}

fn t_p_value(t: f64, df: f64, sided: Sided) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    match sided {
        Sided::TwoSided => (2.0 * dist.cdf(-t.abs())).min(1.0),
        Sided::Greater => dist.sf(t),
        Sided::Less => dist.cdf(t),
    }
}

/// Paired t-test on `a - b` with `n - 1` degrees of freedom.
pub fn paired_t(a: &[f64], b: &[f64], sided: Sided) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let md = mean(&diffs);
    let sd = std_dev(&diffs);
    let df = n - 1.0;
    if sd == 0.0 {
        if md == 0.0 {
            let p = if sided == Sided::TwoSided { 1.0 } else { 0.5 };
            return Ok(TTest { t: 0.0, df, p });
        }
        return Err(Error::ZeroVariance(format!("paired differences are constant ({md})")));
    }
    let t = md / (sd / n.sqrt());
    Ok(TTest { t, df, p: t_p_value(t, df, sided) })
}

/// Welch's unequal-variance t-test.
pub fn welch_t(a: &[f64], b: &[f64], sided: Sided) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("Welch t-test needs at least 2 values per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    if va + vb == 0.0 {
        if diff == 0.0 {
            let p = if sided == Sided::TwoSided { 1.0 } else { 0.5 };
            return Ok(TTest { t: 0.0, df: na + nb - 2.0, p });
        }
        return Err(Error::ZeroVariance("both groups are constant".into()));
    }
    let t = diff / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(TTest { t, df, p: t_p_value(t, df, sided) })
}

/// Largest number of nonzero differences handled by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Average ranks (1-based) of `values`, with the tie-correction term
/// `sum(t^3 - t)`.
fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// One-sided Wilcoxon signed-rank test of `a > b` on paired samples.
///
/// Zero differences are dropped. Exact null distribution (by enumeration of
/// sign patterns over doubled ranks, so tied half-ranks stay integral) for at
/// most [`WILCOXON_EXACT_MAX`] nonzero differences; otherwise the normal
/// approximation with continuity and tie corrections.
pub fn wilcoxon_one_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("Wilcoxon test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(1.0);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    if n <= WILCOXON_EXACT_MAX {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        // counts[s] = number of sign patterns whose positive doubled-rank sum is s
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (2.0 * w_plus).round() as usize;
        let tail: f64 = counts[observed..].iter().sum();
        Ok((tail / 2f64.powi(n as i32)).min(1.0))
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            return Err(Error::ZeroVariance("signed-rank statistic has zero variance".into()));
        }
        let z = (w_plus - mu - 0.5) / var.sqrt();
        Ok(Normal::standard().sf(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Fewer than two samples or zero spread.
    pub degenerate: bool,
}

const BOOT_SHARD: usize = 1000;

/// Percentile bootstrap interval for `statistic`.
pub fn bootstrap_ci<F>(samples: &[f64], statistic: F, n_resamples: usize, level: f64, rng: &mut Rng) -> Result<Interval>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples.is_empty() {
        return Err(Error::InsufficientData("bootstrap needs at least one sample".into()));
    }
    if !(level > 0.0 && level < 1.0) || n_resamples == 0 {
        return Err(Error::Domain(format!("bootstrap level {level} / resamples {n_resamples} invalid")));
    }
    let first = samples[0];
    if samples.len() == 1 || samples.iter().all(|&x| x == first) {
        if samples.len() == 1 {
            log::warn!("bootstrap on a single sample: interval is degenerate");
        }
        let v = statistic(samples);
        return Ok(Interval { lo: v, hi: v, degenerate: true });
    }
    let base: u64 = rng.random();
    let n = samples.len();
    let shards = n_resamples.div_ceil(BOOT_SHARD);
    let mut stats: Vec<f64> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut r = substream(base, &[s as u64]);
            let count = BOOT_SHARD.min(n_resamples - s * BOOT_SHARD);
            let mut buf = vec![0.0; n];
            (0..count)
                .map(|_| {
                    for x in buf.iter_mut() {
                        *x = samples[r.random_range(0..n)];
                    }
                    statistic(&buf)
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval {
        lo: quantile_sorted(&stats, alpha),
        hi: quantile_sorted(&stats, 1.0 - alpha),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    #[test]
    fn cohens_d_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
        let mut rng = seeded(1);
        let b: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = b.iter().map(|x| x + 1.0).collect();
        assert_relative_eq!(cohens_d(&a, &b).unwrap(), 1.0, max_relative = 0.03);
        assert!(matches!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn paired_t_null_and_reference() {
        let a = [0.3, 0.5, 0.1, 0.9];
        let r = paired_t(&a, &a, Sided::TwoSided).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        // differences 1,2,3,4,5: mean 3, sd sqrt(2.5), t = 3 / (sqrt(2.5)/sqrt 5) = 3 sqrt 2
        let a = [2.0, 4.0, 6.0, 8.0, 10.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t(&a, &b, Sided::TwoSided).unwrap();
        assert_relative_eq!(r.t, 3.0 * 2f64.sqrt(), max_relative = 1e-12);
        // two-sided p from the incomplete beta identity
        let x = r.df / (r.df + r.t * r.t);
        let p = crate::special::beta_reg(r.df / 2.0, 0.5, x).unwrap();
        assert_relative_eq!(r.p, p, max_relative = 1e-8);
        assert!(matches!(paired_t(&[2.0, 3.0], &[1.0, 2.0], Sided::TwoSided), Err(Error::ZeroVariance(_))));
        assert!(matches!(paired_t(&[1.0], &[1.0, 2.0], Sided::TwoSided), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn wilcoxon_all_positive_five() {
        let a = [1.1, 2.3, 3.2, 4.8, 5.5];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(wilcoxon_one_sided(&a, &b).unwrap(), 1.0 / 32.0);
        assert_eq!(wilcoxon_one_sided(&b, &a).unwrap(), 1.0);
    }

    #[test]
    fn wilcoxon_exact_matches_brute_force() {
        let d = [0.5, -1.0, 2.0, 2.0, -0.25, 3.0, 1.5];
        let a: Vec<f64> = d.to_vec();
        let b = vec![0.0; d.len()];
        let abs: Vec<f64> = d.iter().map(|x: &f64| x.abs()).collect();
        let (ranks, _) = average_ranks(&abs);
        let w_obs: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
        let n = d.len();
        let mut hits = 0;
        for mask in 0..(1u32 << n) {
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if w >= w_obs - 1e-12 {
                hits += 1;
            }
        }
        let brute = hits as f64 / (1u32 << n) as f64;
        assert_relative_eq!(wilcoxon_one_sided(&a, &b).unwrap(), brute, max_relative = 1e-12);
    }

    #[test]
    fn wilcoxon_normal_branch_is_reasonable() {
        let mut rng = seeded(3);
        let b: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = b.iter().map(|x| x + 0.8 + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(wilcoxon_one_sided(&a, &b).unwrap() < 1e-6);
        assert!(wilcoxon_one_sided(&b, &a).unwrap() > 0.99);
    }

    #[test]
    fn bootstrap_constant_and_single() {
        let c = [2.5; 10];
        let i = bootstrap_ci(&c, mean, 1000, 0.95, &mut seeded(1)).unwrap();
        assert_eq!((i.lo, i.hi), (2.5, 2.5));
        let s = bootstrap_ci(&[7.0], mean, 1000, 0.95, &mut seeded(1)).unwrap();
        assert_eq!((s.lo, s.hi, s.degenerate), (7.0, 7.0, true));
    }

    #[test]
    fn bootstrap_mean_interval_width() {
        let mut rng = seeded(11);
        let x: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let i = bootstrap_ci(&x, mean, 10_000, 0.95, &mut seeded(12)).unwrap();
        let half = (i.hi - i.lo) / 2.0;
        let expected = 1.96 / 1000f64.sqrt();
        assert!((half - expected).abs() <= 0.15 * expected, "{half} vs {expected}");
        let again = bootstrap_ci(&x, mean, 10_000, 0.95, &mut seeded(12)).unwrap();
        assert_eq!(i, again);
    }

    proptest! {
        #[test]
        fn wilcoxon_label_swap_consistency(d in proptest::collection::vec(-5.0f64..5.0, 2..20)) {
            let zeros = vec![0.0; d.len()];
            let p1 = wilcoxon_one_sided(&d, &zeros).unwrap();
            let p2 = wilcoxon_one_sided(&zeros, &d).unwrap();
            prop_assert!((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2));
            prop_assert!(p1 + p2 >= 1.0 - 1e-12);
        }

        #[test]
        fn t_p_values_in_unit_interval(a in proptest::collection::vec(-5.0f64..5.0, 3..30)) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.5 + i as f64 * 0.01).collect();
            if let Ok(r) = paired_t(&a, &b, Sided::TwoSided) {
                prop_assert!((0.0..=1.0).contains(&r.p));
            }
        }
    }
}
