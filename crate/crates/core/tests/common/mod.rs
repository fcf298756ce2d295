#![allow(dead_code)]

use phara::concavify::concave_envelope;
use phara::market::{build_market, MarketParams};
use phara::phara::{builders, Anchor, HaraKind, PharaPiece, PharaUtility};
use phara::rng::PathRng;

/// r = 0.05, sigma = 0.3, mu = 0.086, T = 10.
pub fn base_market() -> MarketParams {
    build_market(0.05, &[0.086], &[vec![0.3]], 10.0).unwrap()
}

pub fn demo_envelope() -> PharaUtility {
    concave_envelope(&builders::demo()).unwrap().envelope
}

pub fn participating_raw() -> PharaUtility {
    builders::participating_raw(0.5, 0.4, 0.3, 1.0).unwrap()
}

pub fn participating_envelope() -> PharaUtility {
    concave_envelope(&participating_raw()).unwrap().envelope
}

/// Random concave utility alternating power pieces with risk aversion `r` and
/// linear pieces, with slopes shrinking at every junction.
pub fn random_envelope(rng: &mut PathRng, r: f64) -> PharaUtility {
    let n = 2 + (rng.uniform() * 5.0) as usize;
    let mut x = -2.0 + 6.0 * rng.uniform();
    let mut u = 0.0;
    let mut slope = 0.2 + 2.0 * rng.uniform();
    let mut pieces = Vec::with_capacity(n);
    for k in 0..n {
        let last = k + 1 == n;
        let hi = if last { f64::INFINITY } else { x + 0.3 + 5.0 * rng.uniform() };
        let piece = if !last && k % 2 == 1 && rng.uniform() < 0.8 {
            PharaPiece::linear(x, hi, u, slope)
        } else {
            let a = x - (0.1 + 6.0 * rng.uniform());
            PharaPiece { a_lo: x, a_hi: hi, kind: HaraKind::Power { r, a }, anchor: Anchor { x, u, gamma: slope } }
        };
        if !last {
            u = piece.value(hi);
            slope = piece.slope(hi) * (0.3 + 0.7 * rng.uniform());
        }
        pieces.push(piece);
        x = hi;
    }
    PharaUtility::new(pieces).unwrap()
}
