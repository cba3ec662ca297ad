//! Comparison curves for group-level epsilon.
//!
//! - The black-box group conversion: an `(e, d)` example-level guarantee
//!   implies `(k e, k e^(k e) d)` for groups of size `k`.
//! - The linear curve `k * epsilon_1`, reported as a heuristic lower bound.

use crate::accountant::{AccountantConfig, ComposedPlds, EPSILON_CAP};
use crate::error::{domain, Result};
use crate::numeric::bisect_flip;
use crate::pld::EPSILON_TOLERANCE;

/// Step of the upward scan for the first feasible group epsilon.
const SCAN_STEP: f64 = 0.25;

/// Result of converting one example-level point to a group guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupConversion {
    pub epsilon: f64,
    /// `ln(k e^(k e) d)`; kept in log space because the delta term overflows.
    pub log_delta: f64,
    /// Set when the delta term is at least one, i.e. the guarantee is vacuous.
    pub saturated: bool,
}

impl GroupConversion {
    /// The delta term; may be `>= 1` or `+inf` when saturated.
    pub fn delta(&self) -> f64 {
        self.log_delta.exp()
    }
}

/// `(k e_1, k e^(k e_1) d_1)` for groups of size `k`.
pub fn vadhan_forward(epsilon1: f64, delta1: f64, k: u32) -> GroupConversion {
    let k = f64::from(k);
    let epsilon = k * epsilon1;
    let log_delta = k.ln() + epsilon + delta1.ln();
    GroupConversion {
        epsilon,
        log_delta,
        saturated: log_delta >= 0.0,
    }
}

/// Smallest group epsilon reachable through [`vadhan_forward`] from the
/// example-level curve of `config`, or `+inf`.
pub fn vadhan_group_epsilon(config: &AccountantConfig, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if config.group_size == 0 {
        config.validate()?;
        return Ok(0.0);
    }
    let single = ComposedPlds::build(&config.with_group_size(1))?;
    vadhan_group_epsilon_from(&single, config.group_size, delta)
}

/// [`vadhan_group_epsilon`] from already composed single-example PLDs.
///
/// Searches for the smallest `e` with `delta_1(e / k) <= delta e^(-e) / k`.
/// The required example-level delta shrinks like `e^(-e)`; once it falls
/// below the PLD's resolvable floor (infinity mass plus one ulp) the
/// conversion reports `+inf`.
pub fn vadhan_group_epsilon_from(single: &ComposedPlds, k: u32, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if k == 0 {
        return Ok(0.0);
    }
    let kf = f64::from(k);
    let floor = single.infinity_mass() + f64::EPSILON;
    let feasible = |eps: f64| single.delta_for_epsilon(eps / kf) <= delta * (-eps).exp() / kf;
    // Past this the required example-level delta is below the floor.
    let limit = (delta / (kf * floor)).ln().min(EPSILON_CAP);
    if limit < 0.0 {
        return Ok(f64::INFINITY);
    }
    if feasible(0.0) {
        return Ok(0.0);
    }
    let mut prev = 0.0;
    loop {
        let next = (prev + SCAN_STEP).min(limit);
        if feasible(next) {
            return Ok(bisect_flip(prev, next, EPSILON_TOLERANCE, feasible));
        }
        if next >= limit {
            return Ok(f64::INFINITY);
        }
        prev = next;
    }
}

/// `k * epsilon_1`, the single-example epsilon scaled linearly.
pub fn linear_lower_bound(config: &AccountantConfig, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if config.group_size == 0 {
        config.validate()?;
        return Ok(0.0);
    }
    let single = ComposedPlds::build(&config.with_group_size(1))?;
    linear_lower_bound_from(&single, config.group_size, delta)
}

/// [`linear_lower_bound`] from already composed single-example PLDs.
pub fn linear_lower_bound_from(single: &ComposedPlds, k: u32, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if k == 0 {
        return Ok(0.0);
    }
    Ok(f64::from(k) * single.epsilon_for_delta(delta)?.epsilon)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        domain(format!("delta must lie in (0, 1), got {delta}"))
    }
}
