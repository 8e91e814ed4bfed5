//! Standard normal density, tail and inverse-tail functions.
//!
//! Tail probabilities go through the complementary error function so that
//! values far out in the tail keep full relative precision.

use libm::erfc;
use statrs::function::erf::erfc_inv;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(x).
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail Φ̄(x) = 1 − Φ(x).
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse upper tail: the `x` with Φ̄(x) = p, for `p` in (0, 1).
pub fn inv_sf(p: f64) -> f64 {
    let mut x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // Halley polish against the accurate tail; the closed-form start is only
    // good to roughly 1e-10 relative.
    for _ in 0..3 {
        if !x.is_finite() {
            break;
        }
        let f = sf(x) - p;
        let d = pdf(x);
        if d == 0.0 {
            break;
        }
        let step = -f / d;
        x -= step / (1.0 + 0.5 * x * step);
    }
    x
}

/// Probability mass of [a, b] under N(0, 1), computed on the side of the
/// interval with the smaller tail.
pub fn interval_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        sf(a) - sf(b)
    } else if b <= 0.0 {
        sf(-b) - sf(-a)
    } else {
        1.0 - sf(-a) - sf(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_values() {
        assert!((sf(0.0) - 0.5).abs() < 1e-15);
        assert!((sf(2.0) / 2.275_013_194_817_921e-2 - 1.0).abs() < 1e-14);
        // Φ̄(5) from a 30-digit reference.
        assert!((sf(5.0) / 2.866_515_718_791_939e-7 - 1.0).abs() < 1e-13);
        assert!((cdf(1.0) + sf(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_tail_round_trips() {
        for &p in &[0.4, 1e-3, 2.5e-7, 4e-8, 1e-15] {
            let x = inv_sf(p);
            assert!((sf(x) / p - 1.0).abs() < 1e-10, "p={p} x={x}");
        }
    }

    #[test]
    fn interval_mass_matches_tails() {
        assert!((interval_mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        assert!((interval_mass(6.0, 7.0) - (sf(6.0) - sf(7.0))).abs() < 1e-25);
        assert_eq!(interval_mass(1.0, 1.0), 0.0);
    }
}
