//! Group-level accounting for DP-SGD.
//!
//! Each round of DP-SGD, viewed against a group of `k` examples, is dominated
//! by a mixture-of-Gaussians pair whose sensitivity distribution depends on
//! the sampling scheme. The accountant builds the PLD of that pair in both
//! adjacency directions, composes it over the rounds and answers
//! `delta(epsilon)` and `epsilon(delta)` as the worst case over directions.

use crate::composition::{self_compose, DEFAULT_TRUNCATION_MASS};
use crate::distributions::{binomial_sensitivities, hypergeometric_sensitivities, SensitivitySpec};
use crate::error::{domain, Result};
use crate::loss::Direction;
use crate::pld::{mog_pld, DiscretePld, DEFAULT_GRID_SPACING, DEFAULT_TAIL_MASS};

/// Epsilons above this are reported as `+inf`.
pub const EPSILON_CAP: f64 = 5000.0;

/// How each round's batch is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingScheme {
    /// Every example joins the batch independently with probability `q`.
    Poisson { q: f64 },
    /// A uniformly random batch of `batch_size` out of `dataset_size`.
    FixedBatch { batch_size: u64, dataset_size: u64 },
}

impl SamplingScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplingScheme::Poisson { q } if !(0.0..=1.0).contains(&q) => {
                domain(format!("sampling probability {q} outside [0, 1]"))
            }
            SamplingScheme::FixedBatch {
                batch_size,
                dataset_size,
            } if batch_size == 0 || batch_size > dataset_size => domain(format!(
                "batch size must satisfy 1 <= B <= n, got B = {batch_size}, n = {dataset_size}"
            )),
            _ => Ok(()),
        }
    }
}

/// Parameters of one accounting query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountantConfig {
    /// Noise multiplier.
    pub sigma: f64,
    /// Number of training rounds `T`.
    pub rounds: u64,
    /// Group size `k`.
    pub group_size: u32,
    pub scheme: SamplingScheme,
    pub grid_spacing: f64,
    pub tail_mass: f64,
    pub truncation_mass: f64,
}

impl AccountantConfig {
    /// Config with the default discretization parameters.
    pub fn new(sigma: f64, rounds: u64, group_size: u32, scheme: SamplingScheme) -> Result<Self> {
        let config = Self {
            sigma,
            rounds,
            group_size,
            scheme,
            grid_spacing: DEFAULT_GRID_SPACING,
            tail_mass: DEFAULT_TAIL_MASS,
            truncation_mass: DEFAULT_TRUNCATION_MASS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return domain(format!(
                "noise multiplier must be positive, got {}",
                self.sigma
            ));
        }
        if self.rounds == 0 {
            return domain("number of rounds must be at least 1");
        }
        if !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) {
            return domain(format!(
                "grid spacing must be positive, got {}",
                self.grid_spacing
            ));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass < 1.0) {
            return domain(format!(
                "tail mass must lie in (0, 1), got {}",
                self.tail_mass
            ));
        }
        if !(0.0..1.0).contains(&self.truncation_mass) {
            return domain(format!(
                "truncation mass must lie in [0, 1), got {}",
                self.truncation_mass
            ));
        }
        self.scheme.validate()
    }

    pub fn with_group_size(&self, group_size: u32) -> Self {
        Self {
            group_size,
            ..*self
        }
    }

    pub fn with_grid_spacing(&self, grid_spacing: f64) -> Self {
        Self {
            grid_spacing,
            ..*self
        }
    }
}

/// Sensitivity distribution of the dominating pair for one round.
pub fn dominating_spec(config: &AccountantConfig) -> Result<SensitivitySpec> {
    config.validate()?;
    match config.scheme {
        SamplingScheme::Poisson { q } => binomial_sensitivities(config.group_size, q),
        SamplingScheme::FixedBatch {
            batch_size,
            dataset_size,
        } => hypergeometric_sensitivities(batch_size, dataset_size, config.group_size),
    }
}

/// An epsilon together with the direction that attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub dominant: Direction,
}

/// Composed PLDs of both adjacency directions.
#[derive(Debug, Clone)]
pub struct ComposedPlds {
    add: DiscretePld,
    remove: DiscretePld,
}

impl ComposedPlds {
    pub fn build(config: &AccountantConfig) -> Result<Self> {
        let spec = dominating_spec(config)?;
        let composed = |direction| -> Result<DiscretePld> {
            let base = mog_pld(
                &spec,
                config.sigma,
                direction,
                config.grid_spacing,
                config.tail_mass,
            )?;
            self_compose(&base, config.rounds, config.truncation_mass)
        };
        Ok(Self {
            add: composed(Direction::Add)?,
            remove: composed(Direction::Remove)?,
        })
    }

    pub fn get(&self, direction: Direction) -> &DiscretePld {
        match direction {
            Direction::Add => &self.add,
            Direction::Remove => &self.remove,
        }
    }

    pub fn infinity_mass(&self) -> f64 {
        self.add.infinity_mass().max(self.remove.infinity_mass())
    }

    pub fn delta_for_epsilon(&self, epsilon: f64) -> f64 {
        self.add
            .delta_for_epsilon(epsilon)
            .max(self.remove.delta_for_epsilon(epsilon))
    }

    /// Worst-case epsilon over both directions; `+inf` past [`EPSILON_CAP`].
    pub fn epsilon_for_delta(&self, delta: f64) -> Result<EpsilonReport> {
        let add = self.add.epsilon_for_delta(delta)?;
        let remove = self.remove.epsilon_for_delta(delta)?;
        let (epsilon, dominant) = if add > remove {
            (add, Direction::Add)
        } else {
            (remove, Direction::Remove)
        };
        let epsilon = if epsilon > EPSILON_CAP {
            f64::INFINITY
        } else {
            epsilon
        };
        Ok(EpsilonReport { epsilon, dominant })
    }
}

/// Group-level delta at `epsilon`.
pub fn group_delta(config: &AccountantConfig, epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() {
        return domain("epsilon must not be NaN");
    }
    Ok(ComposedPlds::build(config)?.delta_for_epsilon(epsilon))
}

/// Smallest group-level epsilon with `group_delta <= delta`, or `+inf`.
pub fn group_epsilon(config: &AccountantConfig, delta: f64) -> Result<f64> {
    Ok(group_epsilon_report(config, delta)?.epsilon)
}

/// [`group_epsilon`] plus the direction attaining it.
pub fn group_epsilon_report(config: &AccountantConfig, delta: f64) -> Result<EpsilonReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    ComposedPlds::build(config)?.epsilon_for_delta(delta)
}
