//! Random-sensitivity distributions for the mixture-of-Gaussians dominating
//! pairs of DP-SGD.
//!
//! Poisson sampling with rate `q` yields sensitivities `Binom(k, q)`; fixed
//! batches of size `B` drawn from at least `n` examples yield twice
//! `Hypergeom(B, n + k, k)`. Both PMFs are evaluated in log space and the
//! support is enumerated exactly.

use crate::error::{domain, Error, Result};
use crate::numeric::log_sum_exp;

/// Tolerance on the total probability of a [`SensitivitySpec`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// A finite distribution over nonnegative scalar sensitivities.
///
/// Entries are `(sensitivity, probability)` pairs with strictly increasing
/// sensitivities and probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySpec {
    entries: Vec<(f64, f64)>,
}

impl SensitivitySpec {
    /// Validates and wraps a list of `(sensitivity, probability)` entries.
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return domain("sensitivity spec must have at least one entry");
        }
        let mut total = 0.0;
        for (i, &(c, p)) in entries.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return domain(format!("sensitivity {c} must be finite and nonnegative"));
            }
            if !(0.0..=1.0).contains(&p) {
                return domain(format!("probability {p} outside [0, 1]"));
            }
            if i > 0 && c <= entries[i - 1].0 {
                return domain("sensitivities must be strictly increasing");
            }
            total += p;
        }
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return domain(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { entries })
    }

    /// The degenerate distribution at `sensitivity`.
    pub fn point_mass(sensitivity: f64) -> Result<Self> {
        Self::new(vec![(sensitivity, 1.0)])
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sensitivities(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    /// Probability of sensitivity exactly zero.
    pub fn zero_mass(&self) -> f64 {
        match self.entries.first() {
            Some(&(0.0, p)) => p,
            _ => 0.0,
        }
    }

    pub fn max_sensitivity(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.0)
    }

    /// Smallest strictly positive sensitivity, if any.
    pub fn min_positive_sensitivity(&self) -> Option<f64> {
        self.sensitivities().find(|&c| c > 0.0)
    }

    /// True when every sensitivity is zero, i.e. the pair is two identical
    /// Gaussians and the privacy loss is identically zero.
    pub fn is_constant_zero(&self) -> bool {
        self.max_sensitivity() == 0.0
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(c, p)| c * p).sum()
    }

    /// `Pr[C <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.entries
            .iter()
            .take_while(|e| e.0 <= x)
            .map(|e| e.1)
            .sum::<f64>()
            .min(1.0)
    }

    /// Drops entries whose probability is below `floor` and renormalizes the
    /// rest. Returns the new spec together with the dropped mass.
    pub fn truncated(&self, floor: f64) -> Result<(Self, f64)> {
        let (kept, dropped): (Vec<_>, Vec<_>) =
            self.entries.iter().copied().partition(|e| e.1 >= floor);
        if kept.is_empty() {
            return domain(format!("truncation floor {floor} drops every entry"));
        }
        let dropped_mass: f64 = dropped.iter().map(|e| e.1).sum();
        let scale = 1.0 / (1.0 - dropped_mass);
        let entries = kept.into_iter().map(|(c, p)| (c, p * scale)).collect();
        Ok((Self::new(entries)?, dropped_mass))
    }

    /// Builds a spec from log-probabilities, dropping entries that underflow
    /// to zero and renormalizing away rounding drift.
    fn from_log_pmf(support: impl Iterator<Item = (f64, f64)>) -> Result<Self> {
        let entries: Vec<(f64, f64)> = support
            .map(|(c, log_p)| (c, log_p.exp()))
            .filter(|e| e.1 > 0.0)
            .collect();
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Internal(format!(
                "log-space pmf sums to {total}, drift exceeds {NORMALIZATION_TOLERANCE}"
            )));
        }
        let entries = entries.into_iter().map(|(c, p)| (c, p / total)).collect();
        Self::new(entries)
    }
}

/// `ln C(n, r)` as a sum of `ln(1 + (n - r) / i)`, which keeps full relative
/// precision for large `n` where log-gamma differences cancel.
pub fn ln_choose(n: u64, r: u64) -> f64 {
    if r > n {
        return f64::NEG_INFINITY;
    }
    let r = r.min(n - r);
    let rest = (n - r) as f64;
    (1..=r).map(|i| (rest / i as f64).ln_1p()).sum()
}

/// Sensitivities `m = 0..=k` with `Pr[m] = C(k, m) q^m (1 - q)^(k - m)`.
pub fn binomial_sensitivities(k: u32, q: f64) -> Result<SensitivitySpec> {
    if !(0.0..=1.0).contains(&q) {
        return domain(format!("sampling probability {q} outside [0, 1]"));
    }
    if q == 0.0 {
        return SensitivitySpec::point_mass(0.0);
    }
    if q == 1.0 {
        return SensitivitySpec::point_mass(f64::from(k));
    }
    let k64 = u64::from(k);
    let (ln_q, ln_1mq) = (q.ln(), (-q).ln_1p());
    SensitivitySpec::from_log_pmf((0..=k64).map(|m| {
        let log_p = ln_choose(k64, m) + m as f64 * ln_q + (k64 - m) as f64 * ln_1mq;
        (m as f64, log_p)
    }))
}

/// Sensitivities `2m` with `m ~ Hypergeom(B, n + k, k)`: the number of the
/// `k` marked items in a uniform batch of `B` drawn from `n + k`.
pub fn hypergeometric_sensitivities(
    batch_size: u64,
    dataset_size: u64,
    k: u32,
) -> Result<SensitivitySpec> {
    let k = u64::from(k);
    if batch_size == 0 {
        return domain("batch size must be positive");
    }
    if dataset_size == 0 {
        return domain("dataset size must be positive");
    }
    let population = dataset_size + k;
    if batch_size > population {
        return domain(format!(
            "batch size {batch_size} exceeds population {population}"
        ));
    }
    let lo = batch_size.saturating_sub(dataset_size);
    let hi = k.min(batch_size);
    // Successive pmf ratios keep every log weight to a few ulps; the
    // absolute normalizer ln C(n + k, B) is large and loses ~1e-11.
    let mut log_weights = Vec::with_capacity((hi - lo + 1) as usize);
    let mut log_w = 0.0;
    for m in lo..=hi {
        log_weights.push(log_w);
        let num = (k - m) as f64 * (batch_size - m) as f64;
        let den = (m + 1) as f64 * (dataset_size + m + 1 - batch_size) as f64;
        log_w += (num / den).ln();
    }
    let log_norm = log_sum_exp(&log_weights);
    SensitivitySpec::from_log_pmf(
        (lo..=hi)
            .zip(log_weights)
            .map(|(m, log_w)| (2.0 * m as f64, log_w - log_norm)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prob_of(spec: &SensitivitySpec, c: f64) -> f64 {
        spec.entries()
            .iter()
            .find(|e| e.0 == c)
            .map_or(0.0, |e| e.1)
    }

    #[test]
    fn binomial_half() {
        let spec = binomial_sensitivities(2, 0.5).unwrap();
        assert_eq!(spec.len(), 3);
        for (c, p) in [(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)] {
            assert!((prob_of(&spec, c) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn binomial_degenerate() {
        let spec = binomial_sensitivities(5, 0.0).unwrap();
        assert_eq!(spec.entries(), &[(0.0, 1.0)]);
        assert_eq!(
            binomial_sensitivities(0, 0.3).unwrap().entries(),
            &[(0.0, 1.0)]
        );
        assert_eq!(
            binomial_sensitivities(4, 1.0).unwrap().entries(),
            &[(4.0, 1.0)]
        );
    }

    #[test]
    fn binomial_zero_mass_matches_high_precision() {
        // 0.99^9 evaluated with 40-digit arithmetic.
        let spec = binomial_sensitivities(9, 0.01).unwrap();
        assert!((spec.zero_mass() - 0.913_517_247_483_640_9).abs() < 1e-15);
    }

    #[test]
    fn binomial_rejects_bad_rate() {
        assert!(matches!(
            binomial_sensitivities(3, 1.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            binomial_sensitivities(3, -0.1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            binomial_sensitivities(3, f64::NAN),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn binomial_large_k_stays_normalized() {
        for (k, q) in [(500, 0.01), (1000, 0.3), (800, 1e-4)] {
            let spec = binomial_sensitivities(k, q).unwrap();
            let total: f64 = spec.probabilities().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mean = f64::from(k) * q;
            assert!((spec.mean() - mean).abs() <= 1e-9 * mean);
        }
    }

    #[test]
    fn hypergeometric_single_draw() {
        let spec = hypergeometric_sensitivities(1, 1, 1).unwrap();
        assert_eq!(spec.len(), 2);
        assert!((prob_of(&spec, 0.0) - 0.5).abs() < 1e-15);
        assert!((prob_of(&spec, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hypergeometric_training_grid_k1() {
        let spec = hypergeometric_sensitivities(500, 50_000, 1).unwrap();
        // B k / (n + k) for k = 1.
        assert!((prob_of(&spec, 2.0) - 0.009_999_800_003_999_92).abs() < 1e-15);
    }

    #[test]
    fn hypergeometric_support_bounds() {
        // B > n forces at least B - n marked items into the batch.
        let spec = hypergeometric_sensitivities(10, 8, 4).unwrap();
        assert_eq!(spec.entries()[0].0, 4.0);
        assert_eq!(spec.max_sensitivity(), 8.0);
        let spec = hypergeometric_sensitivities(12, 8, 4).unwrap();
        assert_eq!(spec.entries(), &[(8.0, 1.0)]);
    }

    #[test]
    fn hypergeometric_rejects_bad_sizes() {
        assert!(matches!(
            hypergeometric_sensitivities(0, 10, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            hypergeometric_sensitivities(12, 10, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            hypergeometric_sensitivities(5, 0, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(SensitivitySpec::new(vec![]).is_err());
        assert!(SensitivitySpec::new(vec![(1.0, 0.5), (1.0, 0.5)]).is_err());
        assert!(SensitivitySpec::new(vec![(2.0, 0.5), (1.0, 0.5)]).is_err());
        assert!(SensitivitySpec::new(vec![(-1.0, 1.0)]).is_err());
        assert!(SensitivitySpec::new(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(SensitivitySpec::new(vec![(0.0, 0.5), (1.0, 0.5)]).is_ok());
    }

    #[test]
    fn truncation_reports_dropped_mass() {
        let spec = binomial_sensitivities(4, 0.1).unwrap();
        let (cut, dropped) = spec.truncated(1e-3).unwrap();
        // Pr[3] = 0.0036 stays, Pr[4] = 1e-4 goes.
        assert_eq!(cut.len(), 4);
        assert!((dropped - 1e-4).abs() < 1e-15);
        assert!((cut.probabilities().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(spec.truncated(2.0).is_err());
    }

    #[test]
    fn ln_choose_small_cases() {
        assert_eq!(ln_choose(5, 0), 0.0);
        assert!((ln_choose(5, 2) - 10f64.ln()).abs() < 1e-15);
        assert!((ln_choose(52, 5) - 2_598_960f64.ln()).abs() < 1e-13);
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn binomial_normalized_with_exact_mean(k in 0u32..300, q in 0.0f64..=1.0) {
            let spec = binomial_sensitivities(k, q).unwrap();
            let total: f64 = spec.probabilities().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mean = f64::from(k) * q;
            prop_assert!((spec.mean() - mean).abs() <= 1e-9 * mean.max(1e-300));
        }

        #[test]
        fn hypergeometric_normalized_with_exact_mean(
            n in 1u64..100_000,
            k in 0u32..40,
            frac in 0.0f64..=1.0,
        ) {
            let population = n + u64::from(k);
            let b = 1 + ((population - 1) as f64 * frac) as u64;
            let spec = hypergeometric_sensitivities(b, n, k).unwrap();
            let total: f64 = spec.probabilities().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mean = 2.0 * b as f64 * f64::from(k) / population as f64;
            prop_assert!((spec.mean() - mean).abs() <= 1e-9 * mean.max(1e-300));
        }

        #[test]
        fn binomial_stochastically_increasing_in_k(
            k in 1u32..60,
            dk in 0u32..20,
            q in 0.0f64..=1.0,
        ) {
            let small = binomial_sensitivities(k, q).unwrap();
            let large = binomial_sensitivities(k + dk, q).unwrap();
            for x in 0..=(k + dk) {
                let x = f64::from(x);
                prop_assert!(small.cdf(x) >= large.cdf(x) - 1e-12);
            }
        }
    }
}
