//! Privacy loss of a scalar mixture-of-Gaussians pair and its inverse.
//!
//! For sensitivities `c_i` with weights `p_i` and noise `sigma`, write
//! `g(x) = ln sum_i p_i exp((2 c_i x - c_i^2) / (2 sigma^2))`, the log
//! likelihood ratio of the mixture against `N(0, sigma^2)`. The add-direction
//! loss is `-g(x)` (outputs drawn from the plain Gaussian) and the
//! remove-direction loss is `g(x)` (outputs drawn from the mixture). `g` is a
//! log-sum-exp of affine functions, so it is convex and nondecreasing.

use crate::distributions::SensitivitySpec;
use crate::error::{domain, Result};

/// Absolute tolerance on the loss value reached by [`invert_loss`].
pub const INVERSION_TOLERANCE: f64 = 1e-12;

/// Which member of the adjacent pair the outputs are drawn from.
///
/// `Add` is the pair `(N(0, sigma^2), sum_i p_i N(c_i, sigma^2))`; `Remove`
/// is the same pair reversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Add,
    Remove,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Add, Direction::Remove];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Add => "add",
            Direction::Remove => "remove",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gaussian noise standard deviation in units of the clip norm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Self(sigma))
        } else {
            domain(format!(
                "noise scale must be positive and finite, got {sigma}"
            ))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Precomputed log-likelihood-ratio terms `g(x) = lse_i(intercept_i + slope_i x)`.
#[derive(Debug, Clone)]
pub(crate) struct MixtureLogRatio {
    intercepts: Vec<f64>,
    slopes: Vec<f64>,
    /// `ln p_0` when sensitivity zero is in the support; the infimum of `g`.
    floor: f64,
    max_slope_index: usize,
}

impl MixtureLogRatio {
    pub fn new(spec: &SensitivitySpec, sigma: NoiseScale) -> Self {
        let var = sigma.get() * sigma.get();
        let mut intercepts = Vec::with_capacity(spec.len());
        let mut slopes = Vec::with_capacity(spec.len());
        for &(c, p) in spec.entries() {
            if p <= 0.0 {
                continue;
            }
            intercepts.push(p.ln() - c * c / (2.0 * var));
            slopes.push(c / var);
        }
        let floor = match slopes.first() {
            Some(&0.0) => intercepts[0],
            _ => f64::NEG_INFINITY,
        };
        let max_slope_index = slopes.len() - 1;
        Self {
            intercepts,
            slopes,
            floor,
            max_slope_index,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.slopes[self.max_slope_index] == 0.0
    }

    pub fn value(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return self.floor;
        }
        if x == f64::INFINITY {
            return if self.is_constant() {
                0.0
            } else {
                f64::INFINITY
            };
        }
        let max = self
            .intercepts
            .iter()
            .zip(&self.slopes)
            .map(|(a, b)| a + b * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self
            .intercepts
            .iter()
            .zip(&self.slopes)
            .map(|(a, b)| (a + b * x - max).exp())
            .sum();
        max + sum.ln()
    }

    /// `g(x)` and `g'(x)`.
    pub fn value_and_slope(&self, x: f64) -> (f64, f64) {
        let max = self
            .intercepts
            .iter()
            .zip(&self.slopes)
            .map(|(a, b)| a + b * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut sum, mut weighted) = (0.0, 0.0);
        for (a, b) in self.intercepts.iter().zip(&self.slopes) {
            let w = (a + b * x - max).exp();
            sum += w;
            weighted += w * b;
        }
        (max + sum.ln(), weighted / sum)
    }

    /// Solves `g(x) = target`, returning `-inf` when `target` is at or below
    /// the infimum of `g`. `hint` seeds the search; otherwise the search
    /// starts from the closed-form inverse of the largest component, which is
    /// an upper bracket because `g` dominates every single term.
    pub fn solve(&self, target: f64, hint: Option<f64>) -> f64 {
        debug_assert!(!self.is_constant());
        if target <= self.floor {
            return f64::NEG_INFINITY;
        }
        if target == f64::INFINITY {
            return f64::INFINITY;
        }
        let i = self.max_slope_index;
        let mut x = hint
            .filter(|h| h.is_finite())
            .unwrap_or((target - self.intercepts[i]) / self.slopes[i]);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut step = 1.0_f64;
        for _ in 0..500 {
            let (g, slope) = self.value_and_slope(x);
            let residual = g - target;
            if residual.abs() <= INVERSION_TOLERANCE {
                return x;
            }
            if residual > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - residual / slope;
            x = if slope > 0.0 && newton > lo && newton < hi && newton.is_finite() {
                newton
            } else if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if hi.is_finite() {
                step *= 2.0;
                hi - step
            } else {
                step *= 2.0;
                lo + step
            };
            if lo.is_finite() && hi.is_finite() && (x <= lo || x >= hi) {
                // Bracket collapsed to adjacent floats; the residual is at
                // rounding level.
                return 0.5 * (lo + hi);
            }
        }
        x
    }
}

/// Privacy loss `ln(P(x) / Q(x))` of the pair selected by `direction`, at
/// output `x`. Total on the extended reals; `sigma` must be positive.
pub fn privacy_loss(x: f64, spec: &SensitivitySpec, sigma: f64, direction: Direction) -> f64 {
    let sigma = NoiseScale::new(sigma).expect("privacy_loss requires sigma > 0");
    let g = MixtureLogRatio::new(spec, sigma).value(x);
    match direction {
        Direction::Add => -g,
        Direction::Remove => g,
    }
}

/// The output `x` at which the privacy loss equals `t`.
///
/// Returns `-inf` when no finite output attains `t`: the add-direction loss
/// is bounded above by `-ln p_0` and the remove-direction loss is bounded
/// below by `ln p_0` whenever sensitivity zero has mass `p_0 > 0`.
pub fn invert_loss(
    t: f64,
    spec: &SensitivitySpec,
    sigma: f64,
    direction: Direction,
) -> Result<f64> {
    let ratio = MixtureLogRatio::new(spec, NoiseScale::new(sigma)?);
    if ratio.is_constant() {
        return domain("privacy loss is identically zero; inversion is undefined");
    }
    let target = match direction {
        Direction::Add => -t,
        Direction::Remove => t,
    };
    Ok(ratio.solve(target, None))
}
