//! Brute-force `T`-fold composition for tiny `T`.
//!
//! The output distribution is sampled on a fine midpoint grid in `x`; each
//! cell's mass is split linearly between the two loss grid points around its
//! loss (no rounding up), and the loss distribution is raised to the `T`-th
//! power with one complex FFT.

use crate::distributions::SensitivitySpec;
use crate::error::{domain, Result};
use crate::loss::Direction;
use crate::numeric::CompensatedSum;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Loss grid spacing used by [`compose_oracle`]: a twentieth of the default
/// accountant spacing.
pub const ORACLE_LOSS_SPACING: f64 = 5e-6;
/// Largest supported number of compositions.
pub const ORACLE_MAX_ROUNDS: u32 = 3;
/// Output range, in units of sigma beyond the outermost centers.
const HALF_WIDTH: f64 = 10.0;
const MAX_CELLS: f64 = 2e7;

/// Loss distribution of a `T`-fold product pair on a uniform grid.
#[derive(Debug, Clone)]
pub struct ComposeOracle {
    spacing: f64,
    min_loss: f64,
    pmf: Vec<f64>,
}

impl ComposeOracle {
    pub fn new(
        spec: &SensitivitySpec,
        sigma: f64,
        rounds: u32,
        direction: Direction,
        spacing: f64,
    ) -> Result<Self> {
        if !(1..=ORACLE_MAX_ROUNDS).contains(&rounds) {
            return domain(format!(
                "the composition oracle supports 1 to {ORACLE_MAX_ROUNDS} rounds, got {rounds}"
            ));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return domain(format!("noise scale must be positive, got {sigma}"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return domain(format!("loss spacing must be positive, got {spacing}"));
        }
        let (min_loss, single) = single_round(spec, sigma, direction, spacing);
        let pmf = power(&single, rounds as usize);
        Ok(Self {
            spacing,
            min_loss: min_loss * f64::from(rounds),
            pmf,
        })
    }

    /// `sum pmf(l) max(1 - e^(epsilon - l), 0)`.
    pub fn delta(&self, epsilon: f64) -> f64 {
        let mut acc = CompensatedSum::default();
        for (i, &p) in self.pmf.iter().enumerate() {
            let gap = epsilon - (self.min_loss + i as f64 * self.spacing);
            if gap < 0.0 {
                acc.add(p * -gap.exp_m1());
            }
        }
        acc.value().clamp(0.0, 1.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().copied().collect::<CompensatedSum>().value()
    }
}

/// `delta(epsilon)` of the `T`-fold product of the pair described by `spec`,
/// `sigma` and `direction`, at loss spacing [`ORACLE_LOSS_SPACING`].
pub fn compose_oracle(
    spec: &SensitivitySpec,
    sigma: f64,
    rounds: u32,
    epsilon: f64,
    direction: Direction,
) -> Result<f64> {
    Ok(ComposeOracle::new(spec, sigma, rounds, direction, ORACLE_LOSS_SPACING)?.delta(epsilon))
}

/// One round's loss pmf starting at the returned minimum loss.
fn single_round(
    spec: &SensitivitySpec,
    sigma: f64,
    direction: Direction,
    spacing: f64,
) -> (f64, Vec<f64>) {
    let entries: Vec<(f64, f64)> = spec
        .entries()
        .iter()
        .copied()
        .filter(|e| e.1 > 0.0)
        .collect();
    let var = sigma * sigma;
    let max_c = entries.iter().map(|e| e.0).fold(0.0, f64::max);
    // ln(mixture(x) / N(x; 0, sigma^2)).
    let log_ratio = |x: f64| -> f64 {
        let terms = entries
            .iter()
            .map(|&(c, p)| p.ln() + (c * x - 0.5 * c * c) / var);
        let terms: Vec<f64> = terms.collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    };
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let density = |x: f64| -> f64 {
        match direction {
            Direction::Add => norm * (-0.5 * x * x / var).exp(),
            Direction::Remove => entries
                .iter()
                .map(|&(c, p)| p * norm * (-0.5 * (x - c) * (x - c) / var).exp())
                .sum(),
        }
    };

    let (a, b) = (-HALF_WIDTH * sigma, max_c + HALF_WIDTH * sigma);
    // Keep the loss change across one x cell near two loss cells.
    let dx = if max_c > 0.0 {
        (2.0 * spacing * var / max_c).max((b - a) / MAX_CELLS)
    } else {
        (b - a) / 1024.0
    };
    let cells = ((b - a) / dx).ceil() as usize;
    let dx = (b - a) / cells as f64;

    let samples: Vec<(f64, f64)> = (0..cells)
        .map(|i| {
            let x = a + (i as f64 + 0.5) * dx;
            let g = log_ratio(x);
            let loss = match direction {
                Direction::Add => -g,
                Direction::Remove => g,
            };
            (loss, density(x) * dx)
        })
        .collect();
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_loss = (lo / spacing).floor() * spacing;
    let len = ((hi - min_loss) / spacing).floor() as usize + 2;
    let mut pmf = vec![0.0; len];
    for (loss, mass) in samples {
        let pos = (loss - min_loss) / spacing;
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        pmf[i] += mass * (1.0 - w);
        pmf[i + 1] += mass * w;
    }
    (min_loss, pmf)
}

/// Smallest `2^a 3^b >= n`.
fn smooth_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < best {
        let mut len = p3;
        while len < n {
            len *= 2;
        }
        best = best.min(len);
        p3 *= 3;
    }
    best
}

/// `pmf` convolved with itself `rounds - 1` times.
fn power(pmf: &[f64], rounds: usize) -> Vec<f64> {
    if rounds == 1 {
        return pmf.to_vec();
    }
    let out_len = rounds * (pmf.len() - 1) + 1;
    let len = smooth_len(out_len);
    let mut buffer: Vec<Complex<f64>> = pmf
        .iter()
        .map(|&p| Complex::new(p, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buffer);
    buffer.iter_mut().for_each(|z| *z = z.powu(rounds as u32));
    planner.plan_fft_inverse(len).process(&mut buffer);
    let scale = 1.0 / len as f64;
    buffer[..out_len].iter().map(|z| z.re * scale).collect()
}
