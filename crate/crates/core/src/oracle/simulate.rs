//! Monte-Carlo simulation of the worst-case DP-SGD instances.
//!
//! Both instances run one-dimensional DP-SGD with sum-of-clipped-gradients
//! updates `theta_i = theta_(i-1) - eta (sum of gradients + sigma L z)`:
//!
//! - Poisson: every example has loss 0 except the `k` group members, whose
//!   loss is `-theta` (gradient `-1`). Each member joins a batch with
//!   probability `q`.
//! - Fixed batch: every example has loss `theta` except the group members,
//!   whose loss is `-theta`. A batch is `B` distinct examples; the released
//!   increment is shifted by `B` before scoring.
//!
//! With `eta = L = 1` the rescaled increments are `m + sigma z` (or
//! `2m - sigma z` for fixed batches) with the group present and `sigma z`
//! without it. The estimator averages `max(1 - alpha e^(-loss), 0)` over
//! runs drawn from the first distribution of the pair, where `loss` is the
//! exact log likelihood ratio of the whole transcript.

use crate::accountant::SamplingScheme;
use crate::distributions::{binomial_sensitivities, hypergeometric_sensitivities, SensitivitySpec};
use crate::error::{domain, Result};
use crate::loss::Direction;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Number of independent streams; fixed so results do not depend on the
/// thread count.
pub const SHARDS: u64 = 16;
/// Upper limit on `samples * rounds`.
pub const MAX_DRAWS: u64 = 100_000_000;
/// Step size of the simulated instance. Any positive value gives the same
/// rescaled increments.
const STEP_SIZE: f64 = 1.0;
/// Clipping norm of the simulated instance; all gradients have norm one.
const CLIP_NORM: f64 = 1.0;

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// One-dimensional DP-SGD instance whose group-level privacy loss is exactly
/// that of the mixture-of-Gaussians pair.
struct Instance {
    group_size: u32,
    scheme: SamplingScheme,
    sigma: f64,
    /// `(center, ln p)` of the group-present increment distribution.
    log_weights: Vec<(f64, f64)>,
}

impl Instance {
    fn new(group_size: u32, scheme: SamplingScheme, sigma: f64) -> Result<Self> {
        scheme.validate()?;
        let spec: SensitivitySpec = match scheme {
            SamplingScheme::Poisson { q } => binomial_sensitivities(group_size, q)?,
            SamplingScheme::FixedBatch {
                batch_size,
                dataset_size,
            } => hypergeometric_sensitivities(batch_size, dataset_size, group_size)?,
        };
        let log_weights = spec
            .entries()
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|&(c, p)| (c, p.ln()))
            .collect();
        Ok(Self {
            group_size,
            scheme,
            sigma,
            log_weights,
        })
    }

    /// One released increment, rescaled so the noise-only run is
    /// `N(0, sigma^2)`.
    fn increment<R: Rng>(&self, rng: &mut R, group_present: bool) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let noise = self.sigma * CLIP_NORM * z;
        match self.scheme {
            SamplingScheme::Poisson { q } => {
                let members = if group_present {
                    (0..self.group_size).filter(|_| rng.random_bool(q)).count()
                } else {
                    0
                };
                // Gradients are -1 for sampled members, 0 otherwise.
                let gradient_sum = -(members as f64);
                let step = -STEP_SIZE * (gradient_sum + noise);
                step / (STEP_SIZE * CLIP_NORM)
            }
            SamplingScheme::FixedBatch {
                batch_size,
                dataset_size,
            } => {
                let members = if group_present {
                    let population = dataset_size + u64::from(self.group_size);
                    // Group members occupy random distinct slots; the batch
                    // is the first `batch_size` slots.
                    sample(rng, population as usize, self.group_size as usize)
                        .iter()
                        .filter(|&slot| (slot as u64) < batch_size)
                        .count()
                } else {
                    0
                };
                let gradient_sum = (batch_size as f64 - members as f64) - members as f64;
                let step = -STEP_SIZE * (gradient_sum + noise);
                step / (STEP_SIZE * CLIP_NORM) + batch_size as f64
            }
        }
    }

    /// `ln(p_present(y) / p_absent(y))` for one rescaled increment.
    fn log_ratio(&self, y: f64) -> f64 {
        let var = self.sigma * self.sigma;
        let top = self
            .log_weights
            .iter()
            .map(|&(c, lp)| lp + (c * y - 0.5 * c * c) / var)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self
            .log_weights
            .iter()
            .map(|&(c, lp)| (lp + (c * y - 0.5 * c * c) / var - top).exp())
            .sum();
        top + sum.ln()
    }
}

/// Estimates the hockey-stick divergence at `alpha = e^epsilon` between the
/// transcripts of `rounds` DP-SGD steps with and without a group of `k`
/// examples, by simulating the worst-case instance. `direction` selects
/// which transcript distribution comes first: `Remove` scores
/// `H(with group, without)` and `Add` scores `H(without, with)`.
///
/// Deterministic for a given `seed`: samples are split over [`SHARDS`]
/// ChaCha8 streams and combined in stream order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tightness(
    k: u32,
    scheme: SamplingScheme,
    sigma: f64,
    rounds: u64,
    epsilon: f64,
    samples: u64,
    seed: u64,
    direction: Direction,
) -> Result<TightnessEstimate> {
    if k == 0 {
        return domain("group size must be positive");
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return domain(format!("noise multiplier must be positive, got {sigma}"));
    }
    if rounds == 0 || samples < 2 {
        return domain("need at least one round and two samples");
    }
    if samples.saturating_mul(rounds) > MAX_DRAWS {
        return domain(format!(
            "samples * rounds = {} exceeds {MAX_DRAWS}",
            samples as u128 * rounds as u128
        ));
    }
    if epsilon.is_nan() {
        return domain("epsilon must not be NaN");
    }
    let instance = Instance::new(k, scheme, sigma)?;
    let group_first = direction == Direction::Remove;

    let partials: Vec<(f64, f64)> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = samples / SHARDS + u64::from(shard < samples % SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let mut log_ratio = 0.0;
                for _ in 0..rounds {
                    let y = instance.increment(&mut rng, group_first);
                    log_ratio += instance.log_ratio(y);
                }
                // Privacy loss of the first distribution against the second.
                let loss = if group_first { log_ratio } else { -log_ratio };
                let value = (-(epsilon - loss).exp_m1()).max(0.0);
                sum += value;
                sum_sq += value * value;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = samples as f64;
    let mean = sum / n;
    let variance = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(TightnessEstimate {
        estimate: mean,
        std_error: (variance / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TV: f64 = 0.191_462_461_274_013_1;

    #[test]
    fn half_sampling_matches_total_variation() {
        let scheme = SamplingScheme::Poisson { q: 0.5 };
        for direction in Direction::BOTH {
            let r = simulate_tightness(1, scheme, 1.0, 1, 0.0, 200_000, 3, direction).unwrap();
            assert!(
                (r.estimate - TV).abs() < 3.0 * r.std_error,
                "{direction}: {r:?}"
            );
            assert!(r.std_error < 1e-3);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let scheme = SamplingScheme::FixedBatch {
            batch_size: 5,
            dataset_size: 20,
        };
        let a = simulate_tightness(2, scheme, 1.5, 3, 0.5, 10_001, 11, Direction::Add).unwrap();
        let b = simulate_tightness(2, scheme, 1.5, 3, 0.5, 10_001, 11, Direction::Add).unwrap();
        let c = simulate_tightness(2, scheme, 1.5, 3, 0.5, 10_001, 12, Direction::Add).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert_ne!(a.estimate.to_bits(), c.estimate.to_bits());
    }

    #[test]
    fn huge_noise_hides_the_group() {
        let scheme = SamplingScheme::Poisson { q: 0.5 };
        let r = simulate_tightness(1, scheme, 1e3, 1, 0.5, 100_000, 5, Direction::Remove).unwrap();
        assert!(r.estimate.abs() <= 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn fixed_batch_instance_matches_the_doubled_hypergeometric_pair() {
        use crate::oracle::quadrature::hockey_stick_quadrature;
        let scheme = SamplingScheme::FixedBatch {
            batch_size: 3,
            dataset_size: 6,
        };
        let spec = hypergeometric_sensitivities(3, 6, 2).unwrap();
        let gaussian = SensitivitySpec::point_mass(0.0).unwrap();
        let exact = hockey_stick_quadrature(&spec, &gaussian, 2.0, 1f64.exp()).unwrap();
        let r = simulate_tightness(2, scheme, 2.0, 1, 1.0, 400_000, 9, Direction::Remove).unwrap();
        assert!(
            (r.estimate - exact).abs() < 3.5 * r.std_error,
            "{r:?} vs {exact}"
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        let scheme = SamplingScheme::Poisson { q: 0.5 };
        assert!(simulate_tightness(0, scheme, 1.0, 1, 0.0, 100, 1, Direction::Add).is_err());
        assert!(simulate_tightness(1, scheme, 0.0, 1, 0.0, 100, 1, Direction::Add).is_err());
        assert!(simulate_tightness(1, scheme, 1.0, 0, 0.0, 100, 1, Direction::Add).is_err());
        assert!(
            simulate_tightness(1, scheme, 1.0, 1000, 0.0, 1_000_000, 1, Direction::Add).is_err()
        );
        let bad = SamplingScheme::Poisson { q: 2.0 };
        assert!(simulate_tightness(1, bad, 1.0, 1, 0.0, 100, 1, Direction::Add).is_err());
    }
}
