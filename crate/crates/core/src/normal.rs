//! Standard normal building blocks.
//!
//! `cdf` is evaluated through `erfc` so that both tails keep full relative
//! precision; `interval_prob` picks the tail that avoids cancellation.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Phi(x), with Phi(-inf) = 0 and Phi(+inf) = 1.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    }
}

/// 1 - Phi(x).
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Phi'(x); zero at both infinities.
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// log Phi'(x).
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// P(lo < Z < hi) = Phi(hi) - Phi(lo) without catastrophic cancellation.
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    if lo >= 0.0 {
        sf(lo) - sf(hi)
    } else if hi <= 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - sf(hi) - cdf(lo)
    }
}

/// log(1 - Phi(x)), finite far into the upper tail.
pub fn ln_sf(x: f64) -> f64 {
    if x < 30.0 {
        sf(x).ln()
    } else {
        // Asymptotic Mills ratio.
        let x2 = x * x;
        ln_pdf(x) - x.ln() + (-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln_1p()
    }
}

/// log P(lo < Z < hi), accurate when both ends sit deep in one tail.
pub fn ln_interval_prob(lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        f64::NEG_INFINITY
    } else if lo >= 0.0 {
        let (a, b) = (ln_sf(lo), ln_sf(hi));
        a + (-(b - a).exp()).ln_1p()
    } else if hi <= 0.0 {
        ln_interval_prob(-hi, -lo)
    } else {
        interval_prob(lo, hi).ln()
    }
}

/// Inverse of Phi on (0, 1).
pub fn quantile(p: f64) -> f64 {
    // Parameters are valid constants; construction cannot fail.
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        // Values from high-precision tables.
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-1.96) - 0.024_997_895_148_220_435).abs() < 1e-16);
        let t = cdf(-8.0);
        assert!(((t - 6.220_960_574_271_785e-16) / t).abs() < 1e-13);
    }

    #[test]
    fn interval_prob_tails() {
        let p = interval_prob(9.0, 10.0);
        assert!(p > 0.0 && p < 1.2e-19);
        assert_eq!(interval_prob(1.0, 1.0), 0.0);
        assert_eq!(interval_prob(f64::NEG_INFINITY, f64::INFINITY), 1.0);
        assert!((interval_prob(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
    }

    #[test]
    fn log_tails() {
        assert!((ln_sf(2.0) - sf(2.0).ln()).abs() < 1e-14);
        // Continuity across the switch to the asymptotic form.
        let (a, b) = (sf(30.0).ln(), ln_sf(30.0));
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} {b}");
        assert!(ln_sf(60.0).is_finite());
        assert!((ln_interval_prob(-1.0, 1.0) - interval_prob(-1.0, 1.0).ln()).abs() < 1e-15);
        assert!((ln_interval_prob(-40.0, -39.0) - ln_interval_prob(39.0, 40.0)).abs() < 1e-12);
        assert_eq!(ln_interval_prob(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-9] {
            let x = quantile(p);
            assert!(((cdf(x) - p) / p).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn ln_pdf_matches_pdf() {
        for &x in &[-5.0, -0.3, 0.0, 2.5] {
            assert!((ln_pdf(x).exp() - pdf(x)).abs() < 1e-16);
        }
    }
}
