//! Small numerical kernels shared by the accounting modules.

use libm::erfc;
use std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal survival function, `1 - normal_cdf(z)` without cancellation.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// Both tails of the standard normal at `z`, each computed directly.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NormalTails {
    pub cdf: f64,
    pub sf: f64,
    z: f64,
}

impl NormalTails {
    pub fn at(z: f64) -> Self {
        Self {
            cdf: normal_cdf(z),
            sf: normal_sf(z),
            z,
        }
    }

    /// Mass of the standard normal on `[self, upper]`, picking whichever tail
    /// representation avoids cancellation.
    pub fn mass_to(&self, upper: &NormalTails) -> f64 {
        let mass = if upper.z <= 0.0 {
            upper.cdf - self.cdf
        } else if self.z >= 0.0 {
            self.sf - upper.sf
        } else {
            1.0 - self.cdf - upper.sf
        };
        mass.max(0.0)
    }
}

/// Standard normal mass on `[a, b]`.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    NormalTails::at(a).mass_to(&NormalTails::at(b))
}

/// `ln(sum(exp(terms)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn stable_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value()
}

/// Bisection for the point where a monotone predicate flips from `false` to
/// `true`. Requires `pred(lo) == false` and `pred(hi) == true`; returns the
/// smallest bracket end known to satisfy the predicate.
pub fn bisect_flip<F>(mut lo: f64, mut hi: f64, tol: f64, mut pred: F) -> f64
where
    F: FnMut(f64) -> bool,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
