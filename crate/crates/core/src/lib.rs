//! Group-level differential privacy accounting for DP-SGD with Poisson or
//! fixed-batch sampling.
//!
//! A group of `k` examples in DP-SGD is dominated, round by round, by a
//! scalar mixture-of-Gaussians (MoG) pair whose random sensitivity is
//! `Binom(k, q)` (Poisson sampling) or twice `Hypergeom(B, n + k, k)` (fixed
//! batches). The accountant discretizes the privacy loss distribution of that
//! pair in both adjacency directions, composes it over the training rounds
//! and reads off `(epsilon, delta)` through the hockey-stick divergence.
//!
//! Modules:
//! - [`distributions`]: the sensitivity distributions.
//! - [`loss`] and [`pld`]: privacy loss, its inverse and pessimistic PLDs.
//! - [`composition`]: convolution and `T`-fold self-composition.
//! - [`accountant`]: group-level `epsilon(delta)` and `delta(epsilon)`.
//! - [`baselines`]: the black-box group conversion and the linear bound.
//! - [`oracle`]: independent validators (quadrature, fine-grid composition,
//!   Monte-Carlo simulation of worst-case DP-SGD instances).
//! - [`sweep`] and [`validation`]: batch drivers used by the CLI.

pub mod accountant;
pub mod baselines;
pub mod composition;
pub mod distributions;
pub mod error;
pub mod loss;
pub mod numeric;
pub mod oracle;
pub mod pld;
pub mod sweep;
pub mod validation;

pub use accountant::{
    dominating_spec, group_delta, group_epsilon, group_epsilon_report, AccountantConfig,
    ComposedPlds, EpsilonReport, SamplingScheme,
};
pub use baselines::{
    linear_lower_bound, linear_lower_bound_from, vadhan_forward, vadhan_group_epsilon,
    vadhan_group_epsilon_from, GroupConversion,
};
pub use composition::{convolve, self_compose};
pub use distributions::{binomial_sensitivities, hypergeometric_sensitivities, SensitivitySpec};
pub use error::{Error, Result};
pub use loss::{invert_loss, privacy_loss, Direction, NoiseScale};
pub use pld::{mog_pld, DiscretePld};
pub use sweep::{sweep, SweepRow};
pub use validation::{run_validation, ValidationOptions, ValidationReport};
