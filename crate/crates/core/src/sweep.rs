//! Epsilon as a function of group size, for all three methods at once.

use crate::accountant::{AccountantConfig, ComposedPlds, EpsilonReport};
use crate::baselines::{linear_lower_bound_from, vadhan_group_epsilon_from};
use crate::error::{domain, Result};
use rayon::prelude::*;

/// One row of a group-size sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: u32,
    pub epsilon_mog: f64,
    pub epsilon_vadhan: f64,
    pub epsilon_lower_lb: f64,
    pub mog: EpsilonReport,
}

/// Rows for `k = 1..=k_max`. The single-example PLDs are composed once and
/// shared by the baselines; rows are computed in parallel and returned in
/// `k` order.
pub fn sweep(config: &AccountantConfig, delta: f64, k_max: u32) -> Result<Vec<SweepRow>> {
    if k_max == 0 {
        return domain("k-max must be at least 1");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    let single = ComposedPlds::build(&config.with_group_size(1))?;
    (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let mog = if k == 1 {
                single.epsilon_for_delta(delta)?
            } else {
                ComposedPlds::build(&config.with_group_size(k))?.epsilon_for_delta(delta)?
            };
            Ok(SweepRow {
                k,
                epsilon_mog: mog.epsilon,
                epsilon_vadhan: vadhan_group_epsilon_from(&single, k, delta)?,
                epsilon_lower_lb: linear_lower_bound_from(&single, k, delta)?,
                mog,
            })
        })
        .collect()
}
