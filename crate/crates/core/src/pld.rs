//! Discretized privacy loss distributions (PLDs).
//!
//! A [`DiscretePld`] stores probability mass on the uniform loss grid
//! `index * grid_spacing` plus a separate mass at `+inf`. Construction rounds
//! every loss up to the next grid point, so any `delta` computed from the
//! grid is an upper bound on the `delta` of the continuous distribution.

use crate::distributions::SensitivitySpec;
use crate::error::{domain, Error, Result};
use crate::loss::{Direction, MixtureLogRatio, NoiseScale};
use crate::numeric::{bisect_flip, normal_cdf, normal_sf, stable_sum, CompensatedSum, NormalTails};

pub const DEFAULT_GRID_SPACING: f64 = 1e-4;
pub const DEFAULT_TAIL_MASS: f64 = 1e-12;
/// Allowed deviation of `sum(pmf) + infinity_mass` from one.
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance of [`DiscretePld::epsilon_for_delta`].
pub const EPSILON_TOLERANCE: f64 = 1e-9;
/// Refuse grids longer than this many points.
pub const MAX_GRID_POINTS: usize = 200_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePld {
    grid_spacing: f64,
    min_loss_index: i64,
    pmf: Vec<f64>,
    infinity_mass: f64,
    direction: Direction,
    pessimistic: bool,
}

impl DiscretePld {
    /// Validates the mass invariants and builds a pessimistic PLD.
    pub fn new(
        grid_spacing: f64,
        min_loss_index: i64,
        pmf: Vec<f64>,
        infinity_mass: f64,
        direction: Direction,
    ) -> Result<Self> {
        if !(grid_spacing.is_finite() && grid_spacing > 0.0) {
            return domain(format!("grid spacing must be positive, got {grid_spacing}"));
        }
        if !(0.0..=1.0).contains(&infinity_mass) {
            return domain(format!("infinity mass {infinity_mass} outside [0, 1]"));
        }
        if pmf.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return domain("pmf entries must be finite and nonnegative");
        }
        let total = stable_sum(&pmf) + infinity_mass;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return domain(format!("pmf plus infinity mass sums to {total}, not 1"));
        }
        let mut pld = Self {
            grid_spacing,
            min_loss_index,
            pmf,
            infinity_mass,
            direction,
            pessimistic: true,
        };
        pld.trim_zeros();
        Ok(pld)
    }

    pub(crate) fn from_parts(
        grid_spacing: f64,
        min_loss_index: i64,
        pmf: Vec<f64>,
        infinity_mass: f64,
        direction: Direction,
    ) -> Self {
        let mut pld = Self {
            grid_spacing,
            min_loss_index,
            pmf,
            infinity_mass,
            direction,
            pessimistic: true,
        };
        pld.trim_zeros();
        pld
    }

    /// All mass at loss zero: the PLD of two identical distributions.
    pub fn point_mass_at_zero(grid_spacing: f64, direction: Direction) -> Result<Self> {
        Self::new(grid_spacing, 0, vec![1.0], 0.0, direction)
    }

    fn trim_zeros(&mut self) {
        let Some(first) = self.pmf.iter().position(|&p| p > 0.0) else {
            self.pmf = vec![0.0];
            self.min_loss_index = 0;
            return;
        };
        let last = self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(first);
        if first > 0 || last + 1 < self.pmf.len() {
            self.pmf.truncate(last + 1);
            self.pmf.drain(..first);
            self.min_loss_index += first as i64;
        }
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn min_loss_index(&self) -> i64 {
        self.min_loss_index
    }

    pub fn max_loss_index(&self) -> i64 {
        self.min_loss_index + self.pmf.len() as i64 - 1
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub(crate) fn into_pmf(self) -> Vec<f64> {
        self.pmf
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_pessimistic(&self) -> bool {
        self.pessimistic
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Loss value of grid point `i` (an offset into [`Self::pmf`]).
    pub fn loss_at(&self, i: usize) -> f64 {
        (self.min_loss_index + i as i64) as f64 * self.grid_spacing
    }

    pub fn min_loss(&self) -> f64 {
        self.loss_at(0)
    }

    pub fn max_loss(&self) -> f64 {
        self.loss_at(self.pmf.len() - 1)
    }

    /// Total finite mass plus infinity mass.
    pub fn total_mass(&self) -> f64 {
        stable_sum(&self.pmf) + self.infinity_mass
    }

    /// Mean of the finite part, normalized by its mass.
    pub fn finite_mean(&self) -> f64 {
        let finite = stable_sum(&self.pmf);
        let weighted: CompensatedSum = self
            .pmf
            .iter()
            .enumerate()
            .map(|(i, &p)| p * self.loss_at(i))
            .collect();
        weighted.value() / finite
    }

    /// Hockey-stick divergence at `alpha = e^epsilon`:
    /// `infinity_mass + sum_l pmf(l) * max(1 - e^(epsilon - l), 0)`.
    pub fn delta_for_epsilon(&self, epsilon: f64) -> f64 {
        if epsilon.is_nan() {
            return f64::NAN;
        }
        let mut acc = CompensatedSum::default();
        acc.add(self.infinity_mass);
        let start = if epsilon == f64::NEG_INFINITY {
            0
        } else {
            let first = (epsilon / self.grid_spacing).floor() - self.min_loss_index as f64;
            first.clamp(0.0, self.pmf.len() as f64) as usize
        };
        for (i, &p) in self.pmf.iter().enumerate().skip(start) {
            let gap = epsilon - self.loss_at(i);
            if gap < 0.0 {
                acc.add(p * -gap.exp_m1());
            }
        }
        acc.value().clamp(0.0, 1.0)
    }

    /// Smallest `epsilon >= 0` with `delta_for_epsilon(epsilon) <= delta`,
    /// within [`EPSILON_TOLERANCE`]. Returns `+inf` when `delta` does not
    /// exceed the infinity mass.
    pub fn epsilon_for_delta(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta < 1.0) {
            return domain(format!("delta must lie in (0, 1), got {delta}"));
        }
        if delta <= self.infinity_mass {
            return Ok(f64::INFINITY);
        }
        if self.delta_for_epsilon(0.0) <= delta {
            return Ok(0.0);
        }
        // At the largest finite loss only the infinity mass remains.
        let hi = self.max_loss();
        Ok(bisect_flip(0.0, hi, EPSILON_TOLERANCE, |eps| {
            self.delta_for_epsilon(eps) <= delta
        }))
    }
}

/// Point where the tail mass of the output distribution reaches `mass`.
/// `upper` selects the right tail. The output is `N(0, sigma^2)` when
/// `mixture` is false and the Gaussian mixture of `spec` otherwise.
fn output_tail_point(
    spec: &SensitivitySpec,
    sigma: f64,
    mixture: bool,
    mass: f64,
    upper: bool,
) -> f64 {
    let tail = |x: f64| -> f64 {
        let one = |c: f64| {
            let z = (x - c) / sigma;
            if upper {
                normal_sf(z)
            } else {
                normal_cdf(z)
            }
        };
        if mixture {
            spec.entries().iter().map(|&(c, p)| p * one(c)).sum()
        } else {
            one(0.0)
        }
    };
    let (lo, hi) = (-40.0 * sigma, spec.max_sensitivity() + 40.0 * sigma);
    // The tail mass is monotone in x; find where it crosses `mass`.
    if upper {
        bisect_flip(lo, hi, 1e-10 * sigma, |x| tail(x) <= mass)
    } else {
        -bisect_flip(-hi, -lo, 1e-10 * sigma, |neg_x| tail(-neg_x) <= mass)
    }
}

/// Pessimistic PLD of one mixture-of-Gaussians pair.
///
/// The loss CDF comes from the Gaussian CDF of the output at the inverted
/// loss; each grid cell `(t - spacing, t]` is assigned to `t`. Mass above the
/// upper grid end (less than `tail_mass`) becomes infinity mass and mass below
/// the lower end is moved up to the lowest grid point.
pub fn mog_pld(
    spec: &SensitivitySpec,
    sigma: f64,
    direction: Direction,
    grid_spacing: f64,
    tail_mass: f64,
) -> Result<DiscretePld> {
    let noise = NoiseScale::new(sigma)?;
    if !(grid_spacing.is_finite() && grid_spacing > 0.0) {
        return domain(format!("grid spacing must be positive, got {grid_spacing}"));
    }
    if !(tail_mass > 0.0 && tail_mass < 1.0) {
        return domain(format!("tail mass must lie in (0, 1), got {tail_mass}"));
    }
    let ratio = MixtureLogRatio::new(spec, noise);
    if ratio.is_constant() {
        return DiscretePld::point_mass_at_zero(grid_spacing, direction);
    }

    let half_tail = 0.5 * tail_mass;
    let mixture_output = direction == Direction::Remove;
    let right = output_tail_point(spec, sigma, mixture_output, half_tail, true);
    let left = output_tail_point(spec, sigma, mixture_output, half_tail, false);
    let bound = ratio.value(f64::NEG_INFINITY);
    // Loss range, before the supremum/infimum cap from the zero sensitivity.
    let (loss_lo, loss_hi) = match direction {
        // Add losses are capped by a finite supremum; covering up to it
        // leaves no infinity mass.
        Direction::Add if bound.is_finite() => (-ratio.value(right), -bound),
        Direction::Add => (-ratio.value(right), -ratio.value(left)),
        Direction::Remove => (ratio.value(left).max(bound), ratio.value(right)),
    };
    let cells = (loss_hi - loss_lo) / grid_spacing;
    if !(cells.is_finite() && cells < MAX_GRID_POINTS as f64) {
        return domain(format!(
            "loss range [{loss_lo}, {loss_hi}] needs {cells:e} grid points at spacing {grid_spacing}"
        ));
    }
    let lo_index = (loss_lo / grid_spacing).floor() as i64;
    let hi_index = ((loss_hi / grid_spacing).ceil() as i64).max(lo_index);
    let n = (hi_index - lo_index + 1) as usize;
    if n > MAX_GRID_POINTS {
        return domain(format!(
            "loss range [{loss_lo}, {loss_hi}] needs {n} grid points at spacing {grid_spacing}"
        ));
    }

    // Outputs where the loss equals each grid point.
    let mut xs = Vec::with_capacity(n);
    let mut hint = None;
    for j in lo_index..=hi_index {
        let t = j as f64 * grid_spacing;
        let target = match direction {
            Direction::Add => -t,
            Direction::Remove => t,
        };
        let x = ratio.solve(target, hint);
        hint = x.is_finite().then_some(x);
        xs.push(x);
    }

    let mut pmf = Vec::with_capacity(n);
    let infinity_mass = match direction {
        Direction::Add => {
            // Loss decreases in x: the cell (t_{j-1}, t_j] is x in [x_j, x_{j-1}).
            let tails: Vec<NormalTails> = xs.iter().map(|&x| NormalTails::at(x / sigma)).collect();
            pmf.push(tails[0].sf);
            for w in tails.windows(2) {
                pmf.push(w[1].mass_to(&w[0]));
            }
            tails[n - 1].cdf
        }
        Direction::Remove => {
            // Loss increases in x: the cell (t_{j-1}, t_j] is x in (x_{j-1}, x_j].
            let entries = spec.entries();
            let tails_at = |x: f64| -> Vec<NormalTails> {
                entries
                    .iter()
                    .map(|&(c, _)| NormalTails::at((x - c) / sigma))
                    .collect()
            };
            let mut prev = tails_at(xs[0]);
            pmf.push(entries.iter().zip(&prev).map(|(e, t)| e.1 * t.cdf).sum());
            for &x in &xs[1..] {
                let cur = tails_at(x);
                let mass = entries
                    .iter()
                    .zip(prev.iter().zip(&cur))
                    .map(|(e, (a, b))| e.1 * a.mass_to(b))
                    .sum();
                pmf.push(mass);
                prev = cur;
            }
            entries.iter().zip(&prev).map(|(e, t)| e.1 * t.sf).sum()
        }
    };

    let total = stable_sum(&pmf) + infinity_mass;
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::Internal(format!(
            "discretized loss distribution has total mass {total}"
        )));
    }
    DiscretePld::new(grid_spacing, lo_index, pmf, infinity_mass, direction)
}
