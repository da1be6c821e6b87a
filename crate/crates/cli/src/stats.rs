//! Two-sample Kolmogorov-Smirnov test and small sample summaries.

use std::cmp::Ordering;

use sandpile_core::Real;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Significance level used throughout the experiments.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult<F> {
    /// `sup |F_a - F_b|`, in `[0, 1]`.
    pub statistic: F,
    pub n_a: usize,
    pub n_b: usize,
    /// Asymptotic p-value from the Kolmogorov distribution.
    pub p_value: F,
    pub level: F,
    pub reject: bool,
}

/// Two-sample KS test at level [`KS_LEVEL`].
pub fn ks_two_sample<F: Real>(a: &[F], b: &[F]) -> Result<KsResult<F>, StatsError> {
    ks_two_sample_at(a, b, F::lit(KS_LEVEL))
}

pub fn ks_two_sample_at<F: Real>(a: &[F], b: &[F], level: F) -> Result<KsResult<F>, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let sorted = |s: &[F]| {
        let mut v = s.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = F::zero();
    while i < na && j < nb {
        // step both empirical CDFs past the smaller value, ties together
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        let gap = (F::lit(i as f64) / F::lit(na as f64) - F::lit(j as f64) / F::lit(nb as f64)).abs();
        d = d.max(gap);
    }
    let n_eff = F::lit((na * nb) as f64 / (na + nb) as f64);
    let p_value = kolmogorov_survival(n_eff.sqrt() * d);
    Ok(KsResult {
        statistic: d,
        n_a: na,
        n_b: nb,
        p_value,
        level,
        reject: p_value < level,
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival<F: Real>(lambda: F) -> F {
    if lambda <= F::zero() {
        return F::one();
    }
    let two = F::lit(2.0);
    let p = if lambda < F::lit(1.18) {
        // theta-function form of the CDF converges fast for small lambda
        let pi2 = F::PI() * F::PI();
        let mut sum = F::zero();
        for k in 1..=8 {
            let m = F::lit((2 * k - 1) as f64);
            sum = sum + (-(m * m) * pi2 / (F::lit(8.0) * lambda * lambda)).exp();
        }
        F::one() - (two * F::PI()).sqrt() / lambda * sum
    } else {
        let mut sum = F::zero();
        for k in 1..=100 {
            let kf = F::lit(k as f64);
            let term = (-two * kf * kf * lambda * lambda).exp();
            sum = if k % 2 == 1 { sum + term } else { sum - term };
            if term < F::epsilon() {
                break;
            }
        }
        two * sum
    };
    p.max(F::zero()).min(F::one())
}

/// Sample mean and unbiased variance (variance 0 for a single value).
pub fn mean_variance<F: Real>(xs: &[F]) -> Result<(F, F), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = F::lit(xs.len() as f64);
    let mean = xs.iter().fold(F::zero(), |a, &b| a + b) / n;
    if xs.len() == 1 {
        return Ok((mean, F::zero()));
    }
    let ss = xs.iter().fold(F::zero(), |a, &x| a + (x - mean) * (x - mean));
    Ok((mean, ss / (n - F::one())))
}

/// `n^{-1/2} * sum (h - 1)` over the heights of `[-n, n]`.
pub fn scaled_excess<F: Real>(heights: &[u64], n: u64) -> F {
    let excess: i128 = heights.iter().map(|&h| h as i128 - 1).sum();
    F::lit(excess as f64) / F::lit(n as f64).sqrt()
}

/// Median of a nonempty sample (lower middle for even sizes).
pub fn median_u64(xs: &[u64]) -> Option<u64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 2.0, 5.0, 7.5];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn disjoint_samples() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[11.0, 12.0, 13.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn statistic_by_brute_force() {
        // direct sup over a grid of evaluation points
        let a = [0.3, 1.0, 1.0, 2.5, 4.0, 4.0, 4.0];
        let b = [1.0, 2.0, 2.5, 2.5, 3.0];
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let mut want: f64 = 0.0;
        for &x in a.iter().chain(&b) {
            want = want.max((cdf(&a, x) - cdf(&b, x)).abs());
        }
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - want).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // critical values of the Kolmogorov distribution: 1.3581 (5%), 1.6276 (1%)
        assert!((kolmogorov_survival(1.3581f64) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276f64) - 0.01).abs() < 1e-4);
        // both branches agree where they meet
        let lo = kolmogorov_survival(1.18f64 - 1e-12);
        let hi = kolmogorov_survival(1.18f64);
        assert!((lo - hi).abs() < 1e-10);
        assert_eq!(kolmogorov_survival(0.0f64), 1.0);
        assert!(kolmogorov_survival(0.05f64) > 0.999_999);
    }

    #[test]
    fn shifted_sample_is_rejected() {
        let a: Vec<f64> = (0..500).map(|i| (i % 37) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        assert!(ks_two_sample(&a, &b).unwrap().reject);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert_eq!(ks_two_sample::<f64>(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    #[test]
    fn works_in_single_precision() {
        let r = ks_two_sample(&[1.0f32, 2.0], &[1.0f32, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.5);
    }

    #[test]
    fn mean_variance_and_scaled_excess() {
        let (m, v) = mean_variance(&[1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(scaled_excess::<f64>(&[1; 21], 10), 0.0);
        assert_eq!(scaled_excess::<f64>(&[2, 1, 1, 1, 0, 1, 3, 1, 1], 4), 1.0);
        assert_eq!(median_u64(&[5, 1, 3, 2]), Some(2));
    }
}
