//! Composition of privacy loss distributions.
//!
//! The PLD of a product of independent pairs is the convolution of their
//! PLDs; infinity masses combine through the complement product.
//! [`self_compose`] computes `T`-fold powers by repeated squaring and trims
//! both tails after every convolution, always in the pessimistic direction.

use crate::error::{domain, Error, Result};
use crate::pld::DiscretePld;
use realfft::num_complex::Complex;
use realfft::RealFftPlanner;

/// Below this many points (in either operand) convolution is done directly.
pub const FFT_THRESHOLD: usize = 1024;
/// Default tail mass moved per side after each convolution in [`self_compose`].
pub const DEFAULT_TRUNCATION_MASS: f64 = 1e-15;
/// Largest tolerated drift of the total mass after FFT round-off clamping.
pub const MAX_CONVOLUTION_DRIFT: f64 = 1e-10;

fn check_compatible(a: &DiscretePld, b: &DiscretePld) -> Result<()> {
    if a.grid_spacing() != b.grid_spacing() {
        return domain(format!(
            "grid spacings differ: {} vs {}",
            a.grid_spacing(),
            b.grid_spacing()
        ));
    }
    if a.direction() != b.direction() {
        return domain(format!(
            "directions differ: {} vs {}",
            a.direction(),
            b.direction()
        ));
    }
    Ok(())
}

/// Smallest even length `>= n` whose only prime factors are 2, 3 and 5.
fn fast_fft_len(n: usize) -> usize {
    let mut best = n.next_power_of_two().max(2);
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut len = p35 * 2;
            while len < n {
                len *= 2;
            }
            best = best.min(len);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

fn direct_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

fn fft_convolve(a: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let b_len = b.map_or(a.len(), <[f64]>::len);
    let out_len = a.len() + b_len - 1;
    let len = fast_fft_len(out_len);
    let mut planner = RealFftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);

    let spectrum_of = |values: &[f64]| -> Vec<Complex<f64>> {
        let mut input = forward.make_input_vec();
        input[..values.len()].copy_from_slice(values);
        let mut spectrum = forward.make_output_vec();
        forward
            .process(&mut input, &mut spectrum)
            .expect("buffer lengths come from the plan");
        spectrum
    };

    let mut spectrum = spectrum_of(a);
    match b {
        Some(b) => {
            let other = spectrum_of(b);
            spectrum.iter_mut().zip(&other).for_each(|(x, y)| *x *= y);
        }
        None => spectrum.iter_mut().for_each(|x| *x = *x * *x),
    }
    // The inverse transform expects purely real DC and Nyquist bins.
    spectrum[0].im = 0.0;
    if let Some(last) = spectrum.last_mut() {
        last.im = 0.0;
    }
    let mut out = inverse.make_output_vec();
    inverse
        .process(&mut spectrum, &mut out)
        .expect("buffer lengths come from the plan");
    let scale = 1.0 / len as f64;
    out.truncate(out_len);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Linear convolution of two mass vectors, clamped at zero and checked for
/// mass drift.
fn convolve_masses(a: &[f64], b: Option<&[f64]>) -> Result<Vec<f64>> {
    let b_slice = b.unwrap_or(a);
    let mut out = if a.len().min(b_slice.len()) < FFT_THRESHOLD {
        direct_convolve(a, b_slice)
    } else {
        fft_convolve(a, b)
    };
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    let expected = a.iter().sum::<f64>() * b_slice.iter().sum::<f64>();
    let actual: f64 = out.iter().sum();
    let drift = (actual - expected).abs();
    if drift > MAX_CONVOLUTION_DRIFT {
        return Err(Error::Internal(format!(
            "convolution mass drifted by {drift:e}"
        )));
    }
    if actual > 0.0 && drift > 0.0 {
        let scale = expected / actual;
        out.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

fn combine_infinity(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// PLD of the product of two independent pairs.
pub fn convolve(a: &DiscretePld, b: &DiscretePld) -> Result<DiscretePld> {
    check_compatible(a, b)?;
    let pmf = convolve_masses(a.pmf(), Some(b.pmf()))?;
    Ok(DiscretePld::from_parts(
        a.grid_spacing(),
        a.min_loss_index() + b.min_loss_index(),
        pmf,
        combine_infinity(a.infinity_mass(), b.infinity_mass()),
        a.direction(),
    ))
}

fn square(a: &DiscretePld) -> Result<DiscretePld> {
    let pmf = convolve_masses(a.pmf(), None)?;
    Ok(DiscretePld::from_parts(
        a.grid_spacing(),
        2 * a.min_loss_index(),
        pmf,
        combine_infinity(a.infinity_mass(), a.infinity_mass()),
        a.direction(),
    ))
}

/// Chernoff bounds on the tails of `j`-fold sums of one PLD's finite part.
///
/// FFT round-off leaves a floor of tiny spurious masses across the whole
/// support, so scanning cumulative tail mass alone never finds a cut. The
/// Chernoff window bounds where the true mass can be, independent of that
/// noise.
struct TailBounds {
    /// `(lambda, ln E[e^{lambda L}], ln E[e^{-lambda L}])` on the finite part.
    log_mgf: Vec<(f64, f64, f64)>,
    log_half_mass: f64,
}

impl TailBounds {
    /// Block size used to coarsen the PMF before evaluating MGFs. Each block
    /// is placed at its largest loss for the upper bound and its smallest
    /// loss for the lower bound, which only loosens the bounds.
    const BLOCK: usize = 64;

    fn new(p: &DiscretePld, truncation_mass: f64) -> Self {
        let blocks: Vec<(f64, f64, f64)> = p
            .pmf()
            .chunks(Self::BLOCK)
            .enumerate()
            .filter_map(|(b, chunk)| {
                let mass: f64 = chunk.iter().sum();
                (mass > 0.0).then(|| {
                    let first = b * Self::BLOCK;
                    (
                        mass.ln(),
                        p.loss_at(first),
                        p.loss_at(first + chunk.len() - 1),
                    )
                })
            })
            .collect();
        let lse = |f: &dyn Fn(&(f64, f64, f64)) -> f64| -> f64 {
            let max = blocks.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            max + blocks.iter().map(|b| (f(b) - max).exp()).sum::<f64>().ln()
        };
        let log_mgf = (0..=80)
            .map(|i| {
                let lambda = 10f64.powf(-3.0 + 0.1 * f64::from(i));
                let up = lse(&|b| b.0 + lambda * b.2);
                let down = lse(&|b| b.0 - lambda * b.1);
                (lambda, up, down)
            })
            .collect();
        Self {
            log_mgf,
            log_half_mass: (0.5 * truncation_mass).ln(),
        }
    }

    /// Loss window outside of which a `j`-fold sum has at most half the
    /// truncation mass on each side.
    fn window(&self, j: u64) -> (f64, f64) {
        let j = j as f64;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for &(lambda, up, down) in &self.log_mgf {
            hi = hi.min((j * up - self.log_half_mass) / lambda);
            lo = lo.max(-(j * down - self.log_half_mass) / lambda);
        }
        (lo, hi)
    }
}

/// Moves tail mass out of `pld`: the upper tail into infinity, the lower tail
/// onto the smallest retained grid point. Everything outside `window` goes,
/// then up to `half_mass` more per side by cumulative scan.
fn truncate_tails(pld: DiscretePld, window: (f64, f64), half_mass: f64) -> DiscretePld {
    let spacing = pld.grid_spacing();
    let min_index = pld.min_loss_index();
    let mut infinity = pld.infinity_mass();
    let direction = pld.direction();
    let mut pmf = pld.into_pmf();
    let n = pmf.len();

    let index_of = |loss: f64| ((loss / spacing) - min_index as f64).clamp(-1.0, n as f64);
    let mut hi = if window.1.is_finite() {
        let h = index_of(window.1).floor();
        if h < 0.0 {
            0
        } else {
            (h as usize).min(n - 1)
        }
    } else {
        n - 1
    };
    let mut lo = if window.0.is_finite() {
        (index_of(window.0).ceil().max(0.0) as usize).min(hi)
    } else {
        0
    };

    let mut upper: f64 = pmf[hi + 1..].iter().sum();
    let window_upper = upper;
    while hi > lo && upper - window_upper + pmf[hi] <= half_mass {
        upper += pmf[hi];
        hi -= 1;
    }
    infinity += upper;

    let mut lower: f64 = pmf[..lo].iter().sum();
    let window_lower = lower;
    while lo < hi && lower - window_lower + pmf[lo] <= half_mass {
        lower += pmf[lo];
        lo += 1;
    }
    pmf[lo] += lower;
    pmf.truncate(hi + 1);
    pmf.drain(..lo);
    DiscretePld::from_parts(
        spacing,
        min_index + lo as i64,
        pmf,
        infinity.min(1.0),
        direction,
    )
}

/// `p` composed with itself `rounds` times.
///
/// Uses exponentiation by squaring; after each convolution at most
/// `truncation_mass` per tail is moved pessimistically.
pub fn self_compose(p: &DiscretePld, rounds: u64, truncation_mass: f64) -> Result<DiscretePld> {
    if rounds == 0 {
        return domain("number of compositions must be at least 1");
    }
    if !(0.0..1.0).contains(&truncation_mass) {
        return domain(format!(
            "truncation mass must lie in [0, 1), got {truncation_mass}"
        ));
    }
    if rounds == 1 {
        return Ok(p.clone());
    }
    let bounds = (truncation_mass > 0.0).then(|| TailBounds::new(p, truncation_mass));
    let half = 0.5 * truncation_mass;
    let trim = |pld: DiscretePld, count: u64| -> DiscretePld {
        match &bounds {
            Some(b) => truncate_tails(pld, b.window(count), half),
            None => pld,
        }
    };

    let mut result: Option<(DiscretePld, u64)> = None;
    let mut base = (p.clone(), 1u64);
    let mut remaining = rounds;
    loop {
        if remaining & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some((acc, count)) => {
                    let total = count + base.1;
                    (trim(convolve(&acc, &base.0)?, total), total)
                }
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        let count = 2 * base.1;
        base = (trim(square(&base.0)?, count), count);
    }
    let (composed, count) = result.expect("rounds >= 1 sets at least one bit");
    debug_assert_eq!(count, rounds);
    Ok(composed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{binomial_sensitivities, SensitivitySpec};
    use crate::loss::Direction;
    use crate::numeric::normal_cdf;
    use crate::pld::{mog_pld, DEFAULT_TAIL_MASS};
    use proptest::prelude::*;

    fn gaussian_delta(eps: f64, sigma: f64) -> f64 {
        normal_cdf(0.5 / sigma - eps * sigma) - eps.exp() * normal_cdf(-0.5 / sigma - eps * sigma)
    }

    fn gaussian(sigma: f64, direction: Direction, spacing: f64) -> DiscretePld {
        let spec = SensitivitySpec::point_mass(1.0).unwrap();
        mog_pld(&spec, sigma, direction, spacing, DEFAULT_TAIL_MASS).unwrap()
    }

    #[test]
    fn fft_lengths_are_smooth() {
        for n in [1, 2, 3, 7, 100, 1023, 1025, 4_000_001] {
            let len = fast_fft_len(n);
            assert!(len >= n && len.is_multiple_of(2));
            let mut m = len;
            for p in [2, 3, 5] {
                while m.is_multiple_of(p) {
                    m /= p;
                }
            }
            assert_eq!(m, 1, "{n} -> {len}");
        }
        assert_eq!(fast_fft_len(1025), 1080);
    }

    #[test]
    fn fft_matches_direct() {
        let a: Vec<f64> = (0..3000).map(|i| ((i * 7919) % 101) as f64 / 1e5).collect();
        let b: Vec<f64> = (0..2100)
            .map(|i| ((i * 104_729) % 89) as f64 / 1e5)
            .collect();
        let direct = direct_convolve(&a, &b);
        let fft = fft_convolve(&a, Some(&b));
        let squared = fft_convolve(&a, None);
        let direct_sq = direct_convolve(&a, &a);
        for (x, y) in direct.iter().zip(&fft) {
            assert!((x - y).abs() < 1e-15);
        }
        for (x, y) in direct_sq.iter().zip(&squared) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn point_mass_is_identity() {
        let p = mog_pld(
            &binomial_sensitivities(3, 0.2).unwrap(),
            1.0,
            Direction::Remove,
            1e-3,
            1e-12,
        )
        .unwrap();
        let id = DiscretePld::point_mass_at_zero(1e-3, Direction::Remove).unwrap();
        let c = convolve(&p, &id).unwrap();
        assert_eq!(c, p);
        let c = convolve(&id, &p).unwrap();
        assert_eq!(c, p);
    }

    #[test]
    fn infinity_masses_combine() {
        let a = DiscretePld::new(1e-3, 0, vec![0.9], 0.1, Direction::Add).unwrap();
        let b = DiscretePld::new(1e-3, 5, vec![0.8], 0.2, Direction::Add).unwrap();
        let c = convolve(&a, &b).unwrap();
        assert!((c.infinity_mass() - 0.28).abs() < 1e-15);
        assert_eq!(c.min_loss_index(), 5);
        assert!((c.pmf()[0] - 0.72).abs() < 1e-15);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = DiscretePld::point_mass_at_zero(1e-3, Direction::Add).unwrap();
        let b = DiscretePld::point_mass_at_zero(1e-4, Direction::Add).unwrap();
        let c = DiscretePld::point_mass_at_zero(1e-3, Direction::Remove).unwrap();
        assert!(matches!(convolve(&a, &b), Err(Error::Domain(_))));
        assert!(matches!(convolve(&a, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn two_gaussians_compose_to_smaller_sigma() {
        // Two N(1/2, 1) losses sum to N(1, 2): the sigma = 1/sqrt(2) curve.
        let p = gaussian(1.0, Direction::Add, 1e-4);
        let c = convolve(&p, &p).unwrap();
        let mean = c.finite_mean();
        assert!((1.0..=1.0 + 2e-4).contains(&mean), "{mean}");
        for eps in [0.0, 0.5, 1.0, 2.0] {
            let exact = gaussian_delta(eps, std::f64::consts::FRAC_1_SQRT_2);
            let got = c.delta_for_epsilon(eps);
            assert!(
                got >= exact - 1e-12 && got - exact < 2e-4,
                "eps={eps}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn self_compose_edge_cases() {
        let p = gaussian(1.0, Direction::Remove, 1e-3);
        assert_eq!(self_compose(&p, 1, 1e-15).unwrap(), p);
        assert!(matches!(self_compose(&p, 0, 1e-15), Err(Error::Domain(_))));
        assert!(self_compose(&p, 2, 1.5).is_err());
    }

    #[test]
    fn self_compose_gaussian_four_rounds() {
        let p = gaussian(1.0, Direction::Add, 1e-4);
        let c = self_compose(&p, 4, DEFAULT_TRUNCATION_MASS).unwrap();
        for eps in [0.0, 1.0, 2.0] {
            let exact = gaussian_delta(eps, 0.5);
            let got = c.delta_for_epsilon(eps);
            assert!(
                got >= exact - 1e-12 && got - exact < 1e-3,
                "eps={eps}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn truncation_moves_mass_pessimistically() {
        let p = gaussian(0.5, Direction::Remove, 1e-3);
        let loose = self_compose(&p, 64, 0.0).unwrap();
        let tight = self_compose(&p, 64, 1e-6).unwrap();
        assert!(tight.len() < loose.len());
        assert!((tight.total_mass() - 1.0).abs() < 1e-9);
        for eps in [0.0, 5.0, 20.0, 40.0] {
            assert!(tight.delta_for_epsilon(eps) >= loose.delta_for_epsilon(eps) - 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn composition_laws(
            k in 1u32..4,
            q in 0.05f64..0.9,
            sigma in 0.6f64..2.0,
            a in 1u64..6,
            b in 1u64..6,
            remove in any::<bool>(),
        ) {
            let direction = if remove { Direction::Remove } else { Direction::Add };
            let spec = binomial_sensitivities(k, q).unwrap();
            let p = mog_pld(&spec, sigma, direction, 1e-3, 1e-12).unwrap();
            let whole = self_compose(&p, a + b, DEFAULT_TRUNCATION_MASS).unwrap();
            let split = convolve(
                &self_compose(&p, a, DEFAULT_TRUNCATION_MASS).unwrap(),
                &self_compose(&p, b, DEFAULT_TRUNCATION_MASS).unwrap(),
            ).unwrap();
            let fewer = self_compose(&p, a + b - 1, DEFAULT_TRUNCATION_MASS).unwrap();
            prop_assert!((whole.total_mass() - 1.0).abs() < 1e-9);
            prop_assert!((split.total_mass() - 1.0).abs() < 1e-9);
            for eps in [0.0, 0.5, 1.0, 3.0] {
                let d = whole.delta_for_epsilon(eps);
                prop_assert!((d - split.delta_for_epsilon(eps)).abs() < 1e-9);
                prop_assert!(d >= fewer.delta_for_epsilon(eps) - 1e-12);
            }
        }
    }
}
