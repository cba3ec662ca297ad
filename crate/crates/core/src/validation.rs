//! The oracle check suite behind `mogdp validate`.
//!
//! Every check runs on a fixed parameter grid and is deterministic given the
//! seed, so two runs with the same options print the same report.

use crate::accountant::SamplingScheme;
use crate::composition::{self_compose, DEFAULT_TRUNCATION_MASS};
use crate::distributions::{binomial_sensitivities, SensitivitySpec};
use crate::error::Result;
use crate::loss::Direction;
use crate::oracle::{
    hockey_stick_quadrature, simulate_tightness, ComposeOracle, ORACLE_LOSS_SPACING,
};
use crate::pld::{mog_pld, DiscretePld, DEFAULT_GRID_SPACING, DEFAULT_TAIL_MASS};
use std::fmt;

/// Largest accepted excess of the accountant's delta over an oracle.
pub const TIGHTNESS_LIMIT: f64 = 1e-4;
/// Slack for the oracles' own numerical error when checking pessimism.
pub const ORACLE_SLACK: f64 = 1e-9;
/// Epsilons probed by the deterministic checks.
pub const EPSILONS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub grid_spacing: f64,
    pub seed: u64,
    pub samples: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            grid_spacing: DEFAULT_GRID_SPACING,
            seed: 0,
            samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(f, "{check}")?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        write!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

/// Gaps `accountant - oracle` over [`EPSILONS`].
fn gaps(accountant: &DiscretePld, oracle: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    EPSILONS
        .iter()
        .map(|&eps| Ok(accountant.delta_for_epsilon(eps) - oracle(eps)?))
        .collect()
}

fn gap_checks(label: &str, gaps: &[f64]) -> [Check; 2] {
    let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let listed = gaps
        .iter()
        .zip(EPSILONS)
        .map(|(g, e)| format!("eps={e}:{g:.3e}"))
        .collect::<Vec<_>>()
        .join(" ");
    [
        Check {
            name: format!("pessimism {label}"),
            passed: min >= -ORACLE_SLACK,
            detail: format!("min gap {min:.3e} (>= -{ORACLE_SLACK:e}); {listed}"),
        },
        Check {
            name: format!("tightness {label}"),
            passed: max < TIGHTNESS_LIMIT,
            detail: format!("max gap {max:.3e} (< {TIGHTNESS_LIMIT:e})"),
        },
    ]
}

/// Runs the suite:
/// - single-round PLDs against quadrature of the mixture densities;
/// - two-round composed PLDs against the fine-grid composition oracle;
/// - the simulated worst-case DP-SGD instance against quadrature.
pub fn run_validation(options: &ValidationOptions) -> Result<ValidationReport> {
    let spec = binomial_sensitivities(2, 0.3)?;
    let gaussian = SensitivitySpec::point_mass(0.0)?;
    let sigma = 1.0;
    let mut checks = Vec::new();

    for direction in Direction::BOTH {
        let pld = mog_pld(
            &spec,
            sigma,
            direction,
            options.grid_spacing,
            DEFAULT_TAIL_MASS,
        )?;
        let (p, q) = match direction {
            Direction::Add => (&gaussian, &spec),
            Direction::Remove => (&spec, &gaussian),
        };
        let single = gaps(&pld, |eps| hockey_stick_quadrature(p, q, sigma, eps.exp()))?;
        checks.extend(gap_checks(
            &format!("T=1 {direction} vs quadrature (Binom(2, 0.3), sigma=1)"),
            &single,
        ));

        let composed = self_compose(&pld, 2, DEFAULT_TRUNCATION_MASS)?;
        let oracle = ComposeOracle::new(&spec, sigma, 2, direction, ORACLE_LOSS_SPACING)?;
        let double = gaps(&composed, |eps| Ok(oracle.delta(eps)))?;
        checks.extend(gap_checks(
            &format!("T=2 {direction} vs composition oracle (Binom(2, 0.3), sigma=1)"),
            &double,
        ));
    }

    let half = SensitivitySpec::new(vec![(0.0, 0.5), (1.0, 0.5)])?;
    let exact = hockey_stick_quadrature(&half, &gaussian, 1.0, 1.0)?;
    let sim = simulate_tightness(
        1,
        SamplingScheme::Poisson { q: 0.5 },
        1.0,
        1,
        0.0,
        options.samples,
        options.seed,
        Direction::Remove,
    )?;
    let z = (sim.estimate - exact) / sim.std_error;
    checks.push(Check {
        name: "monte-carlo T=1 remove (k=1, q=0.5, sigma=1, eps=0)".into(),
        passed: z.abs() <= 3.0,
        detail: format!(
            "estimate {:.6} +- {:.2e} vs quadrature {exact:.6} ({z:+.2} standard errors, seed {})",
            sim.estimate, sim.std_error, options.seed
        ),
    });

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_grid_stays_pessimistic_but_loses_tightness() {
        let options = ValidationOptions {
            grid_spacing: 0.5,
            samples: 20_000,
            ..ValidationOptions::default()
        };
        let report = run_validation(&options).unwrap();
        for check in &report.checks {
            if check.name.starts_with("pessimism") {
                assert!(check.passed, "{check}");
            }
            if check.name.starts_with("tightness") {
                assert!(!check.passed, "{check}");
            }
        }
        assert!(!report.all_passed());
    }
}
