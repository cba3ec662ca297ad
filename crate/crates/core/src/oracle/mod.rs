//! Independent validators for the accountant.
//!
//! Nothing here shares code with the PLD construction or composition
//! modules: the quadrature integrates mixture densities directly, the
//! composition oracle builds its own loss grid and FFT power, and the
//! simulator runs the worst-case DP-SGD instances.

pub mod compose;
pub mod quadrature;
pub mod simulate;

pub use compose::{compose_oracle, ComposeOracle, ORACLE_LOSS_SPACING};
pub use quadrature::{hockey_stick_quadrature, QUADRATURE_TOLERANCE};
pub use simulate::{simulate_tightness, TightnessEstimate};
