//! Hockey-stick divergence of two Gaussian mixtures by adaptive quadrature.

use crate::distributions::SensitivitySpec;
use crate::error::{domain, Result};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Absolute error target of [`hockey_stick_quadrature`].
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
/// Half-width of the integration range, in units of sigma, beyond the
/// outermost centers.
pub const QUADRATURE_HALF_WIDTH: f64 = 12.0;
const INITIAL_PIECES: usize = 64;
const MAX_PIECES: usize = 200_000;

// 15-point Kronrod nodes on [0, 1] (symmetric) with Kronrod and embedded
// 7-point Gauss weights.
#[allow(clippy::excessive_precision)]
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// `(kronrod, |kronrod - gauss|)` on `[a, b]`.
fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over the pieces
/// between consecutive `breaks`: the piece with the largest error estimate is
/// bisected until the summed estimate meets `tolerance`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tolerance: f64) -> f64 {
    let per_gap = INITIAL_PIECES.div_ceil(breaks.len().saturating_sub(1).max(1));
    let mut heap = BinaryHeap::new();
    for gap in breaks.windows(2) {
        let width = (gap[1] - gap[0]) / per_gap as f64;
        for i in 0..per_gap {
            let a = gap[0] + i as f64 * width;
            let b = if i + 1 == per_gap { gap[1] } else { a + width };
            let (value, error) = gauss_kronrod(&f, a, b);
            heap.push(Piece { a, b, value, error });
        }
    }
    let mut total_error: f64 = heap.iter().map(|p| p.error).sum();
    while total_error > tolerance && heap.len() < MAX_PIECES {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gauss_kronrod(&f, worst.a, mid);
        let (rv, re) = gauss_kronrod(&f, mid, worst.b);
        total_error += le + re - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        // Refresh occasionally so the running error does not drift.
        if heap.len() % 4096 == 0 {
            total_error = heap.iter().map(|p| p.error).sum();
        }
    }
    let mut values: Vec<f64> = heap.into_iter().map(|p| p.value).collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    values.iter().sum()
}

/// `[a, b]` plus the sign changes of `h` found on a uniform scan, refined by
/// bisection. These are the kinks of `max(h, 0)`.
fn sign_changes<H: Fn(f64) -> f64>(h: H, a: f64, b: f64) -> Vec<f64> {
    const SCAN: usize = 4096;
    let step = (b - a) / SCAN as f64;
    let mut breaks = vec![a];
    let mut prev = (a, h(a));
    for i in 1..=SCAN {
        let x = if i == SCAN { b } else { a + i as f64 * step };
        let hx = h(x);
        if (prev.1 > 0.0) != (hx > 0.0) {
            let (mut lo, mut hi) = (prev.0, x);
            let positive_lo = prev.1 > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (h(mid) > 0.0) == positive_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        prev = (x, hx);
    }
    breaks.push(b);
    breaks
}

fn mixture_density(spec: &SensitivitySpec, sigma: f64) -> impl Fn(f64) -> f64 + '_ {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    move |x| {
        spec.entries()
            .iter()
            .map(|&(c, p)| {
                let z = (x - c) / sigma;
                p * norm * (-0.5 * z * z).exp()
            })
            .sum()
    }
}

/// `H_alpha(P, Q) = integral of max(P(x) - alpha Q(x), 0)` for the mixtures
/// `P = sum p_i N(c_i, sigma^2)` and `Q` likewise, over
/// `[min c - 12 sigma, max c + 12 sigma]`, to absolute error about `1e-10`.
pub fn hockey_stick_quadrature(
    p_spec: &SensitivitySpec,
    q_spec: &SensitivitySpec,
    sigma: f64,
    alpha: f64,
) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return domain(format!("noise scale must be positive, got {sigma}"));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return domain(format!("alpha must be nonnegative, got {alpha}"));
    }
    Ok(hockey_stick_with_tolerance(
        p_spec,
        q_spec,
        sigma,
        alpha,
        QUADRATURE_TOLERANCE,
    ))
}

pub(crate) fn hockey_stick_with_tolerance(
    p_spec: &SensitivitySpec,
    q_spec: &SensitivitySpec,
    sigma: f64,
    alpha: f64,
    tolerance: f64,
) -> f64 {
    let centers = p_spec.sensitivities().chain(q_spec.sensitivities());
    let (lo, hi) = centers.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c), hi.max(c))
    });
    let p = mixture_density(p_spec, sigma);
    let q = mixture_density(q_spec, sigma);
    let a = lo - QUADRATURE_HALF_WIDTH * sigma;
    let b = hi + QUADRATURE_HALF_WIDTH * sigma;
    let h = |x: f64| p(x) - alpha * q(x);
    let breaks = sign_changes(h, a, b);
    integrate(|x| h(x).max(0.0), &breaks, tolerance).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(entries: &[(f64, f64)]) -> SensitivitySpec {
        SensitivitySpec::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn integrates_smooth_functions() {
        let v = integrate(|x| x.sin(), &[0.0, PI], 1e-13);
        assert!((v - 2.0).abs() < 1e-13);
        let v = integrate(|x| (x - 0.3).abs(), &[0.0, 0.3, 1.0], 1e-13);
        assert!((v - 0.29).abs() < 1e-12);
    }

    #[test]
    fn identity_examples() {
        let mixture = spec(&[(0.0, 0.5), (1.0, 0.5)]);
        let gaussian = spec(&[(0.0, 1.0)]);
        assert!(
            hockey_stick_quadrature(&mixture, &mixture, 1.0, 1.0)
                .unwrap()
                .abs()
                < 1e-10
        );
        assert!(
            (hockey_stick_quadrature(&mixture, &gaussian, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-10
        );
        let tv = hockey_stick_quadrature(&gaussian, &mixture, 1.0, 1.0).unwrap();
        assert!((tv - 0.191_462_461_274_013_1).abs() < 1e-10, "{tv}");
    }

    #[test]
    fn gaussian_curve() {
        let p = spec(&[(1.0, 1.0)]);
        let q = spec(&[(0.0, 1.0)]);
        let table = [
            (
                0.5,
                [
                    0.682_689_492_137_085_9,
                    0.599_185_618_533_933_3,
                    0.509_861_660_054_670_2,
                    0.331_897_998_776_829_4,
                ],
            ),
            (
                1.0,
                [
                    0.382_924_922_548_026_2,
                    0.238_421_708_134_876_62,
                    0.126_936_737_506_643_94,
                    0.020_923_635_821_113_732,
                ],
            ),
            (
                2.0,
                [
                    0.197_412_651_365_847_46,
                    0.052_440_323_287_669_66,
                    0.006_829_594_983_114_575_5,
                    9.439_168_634_947_234e-6,
                ],
            ),
        ];
        for (sigma, deltas) in table {
            for (eps, expected) in [0.0f64, 0.5, 1.0, 2.0].iter().zip(deltas) {
                let got = hockey_stick_quadrature(&p, &q, sigma, eps.exp()).unwrap();
                assert!(
                    (got - expected).abs() < 1e-10,
                    "{sigma} {eps}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = spec(&[(0.0, 1.0)]);
        assert!(hockey_stick_quadrature(&g, &g, 0.0, 1.0).is_err());
        assert!(hockey_stick_quadrature(&g, &g, 1.0, -1.0).is_err());
        assert!(hockey_stick_quadrature(&g, &g, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn halving_tolerance_is_self_consistent() {
        let p = spec(&[(0.0, 0.49), (1.0, 0.42), (2.0, 0.09)]);
        let q = spec(&[(0.0, 1.0)]);
        for eps in [0.0f64, 0.5, 1.0, 2.0] {
            let a = hockey_stick_with_tolerance(&p, &q, 1.0, eps.exp(), QUADRATURE_TOLERANCE);
            let b = hockey_stick_with_tolerance(&p, &q, 1.0, eps.exp(), 0.5 * QUADRATURE_TOLERANCE);
            assert!((a - b).abs() < QUADRATURE_TOLERANCE);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonincreasing_in_alpha(q in 0.01f64..0.99, sigma in 0.3f64..3.0, alpha in 0.0f64..5.0, bump in 0.01f64..2.0) {
            let p = spec(&[(0.0, 1.0 - q), (1.0, q)]);
            let g = spec(&[(0.0, 1.0)]);
            for (a, b) in [(&p, &g), (&g, &p)] {
                let lo = hockey_stick_quadrature(a, b, sigma, alpha).unwrap();
                let hi = hockey_stick_quadrature(a, b, sigma, alpha + bump).unwrap();
                prop_assert!(hi <= lo + 2.0 * QUADRATURE_TOLERANCE);
            }
        }
    }
}
