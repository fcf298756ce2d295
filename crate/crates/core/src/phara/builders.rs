//! Ready-made utilities used by tests, scenarios and the CLI.

use super::compose::{compose, PiecewiseLinearPayoff, Preference, SShaped};
use super::{Anchor, HaraKind, PharaPiece, PharaUtility};
use crate::error::Result;

/// One piece on `[a_lo, inf)` anchored at `a_lo`.
pub fn single_piece(kind: HaraKind, a_lo: f64, u: f64, gamma: f64) -> PharaUtility {
    PharaUtility::new(vec![PharaPiece::anchored_left(a_lo, f64::INFINITY, kind, u, gamma)]).expect("valid single piece")
}

/// `x^(1-R)/(1-R)` (or `log x`) on `(0, inf)`, with `U'(x) = x^(-R)`.
pub fn crra(r: f64) -> PharaUtility {
    let u = if r == 1.0 { 0.0 } else { 1.0 / (1.0 - r) };
    let piece = PharaPiece {
        a_lo: 0.0,
        a_hi: f64::INFINITY,
        kind: HaraKind::Power { r, a: 0.0 },
        anchor: Anchor { x: 1.0, u, gamma: 1.0 },
    };
    PharaUtility::new(vec![piece]).expect("valid CRRA")
}

/// `-exp(-alpha (x - a0)) / alpha` on `[a0, inf)`.
pub fn cara(alpha: f64, a0: f64) -> PharaUtility {
    single_piece(HaraKind::Exponential { alpha }, a0, -1.0 / alpha, 1.0)
}

/// The non-concave, non-smooth two-kink example with a flat, a convex and a
/// steeper-then-flatter power part.
pub fn demo() -> PharaUtility {
    let k1 = 0.24f64.sqrt();
    let k2 = 0.02;
    let lambda = 1.01;
    let low = -lambda * 3.04f64.sqrt();
    let top = k1 * 20f64.sqrt();
    let pw = |a: f64| HaraKind::Power { r: 0.5, a };
    let pieces = vec![
        PharaPiece { a_lo: 4.0, a_hi: 4.4, kind: pw(4.0), anchor: Anchor { x: 4.4, u: low, gamma: 0.5 * k1 / 0.4f64.sqrt() } },
        PharaPiece::linear(4.4, 8.96, low, 0.0),
        PharaPiece::anchored_left(8.96, 12.0, pw(12.0), low, 0.5 * lambda / 3.04f64.sqrt()),
        PharaPiece::linear(12.0, 20.0, 0.0, 0.0),
        PharaPiece { a_lo: 20.0, a_hi: 40.0, kind: pw(20.0), anchor: Anchor { x: 40.0, u: top, gamma: 0.5 * k1 / 20f64.sqrt() } },
        PharaPiece::anchored_left(40.0, f64::INFINITY, pw(20.0), top, 0.5 * k2 / 20f64.sqrt()),
    ];
    PharaUtility::new(pieces).expect("valid example utility")
}

/// Participating-contract payoff with guarantee `l`, bonus share `delta` and
/// break-even ratio `alpha`.
pub fn participating_payoff(alpha: f64, delta: f64, l: f64) -> Result<PiecewiseLinearPayoff> {
    PiecewiseLinearPayoff::new(vec![0.0, l, l / alpha], vec![0.0, 1.0, 1.0 - delta * alpha], vec![0.0, 0.0, l / alpha - l])
}

/// S-shaped `y^gamma` preference composed with [`participating_payoff`].
pub fn participating_raw(gamma: f64, alpha: f64, delta: f64, l: f64) -> Result<PharaUtility> {
    compose(&Preference::SShaped(SShaped::new(gamma, gamma, 2.25)), &participating_payoff(alpha, delta, l)?)
}

/// Manager payoff: own share `omega`, management fee `alpha`, incentive rate
/// `beta` above the benchmark `c x0 e^{rT}`, liquidation at `b x0 e^{rT}`.
#[allow(clippy::too_many_arguments)]
pub fn hedge_fund_payoff(omega: f64, alpha: f64, beta: f64, b: f64, c: f64, x0: f64, horizon: f64, r: f64) -> Result<PiecewiseLinearPayoff> {
    let growth = (r * horizon).exp();
    let floor = b * x0 * growth;
    let bench = c * x0 * growth;
    let s1 = omega + alpha * (1.0 - omega);
    let s2 = s1 + beta * (1.0 - omega);
    PiecewiseLinearPayoff::new(vec![floor, bench], vec![s1, s2], vec![s1 * floor, s1 * bench])
}

/// Typical fund setting with an S-shaped preference (exponents 0.88, loss
/// aversion 2.25).
pub fn hedge_fund_default() -> Result<(PharaUtility, PiecewiseLinearPayoff)> {
    let payoff = hedge_fund_payoff(0.1, 0.2, 0.4, 0.7, 2.0, 1.0, 10.0, 0.05)?;
    let u = compose(&Preference::SShaped(SShaped::new(0.88, 0.88, 2.25)), &payoff)?;
    Ok((u, payoff))
}

/// Concave utility with a power piece followed by an exponential tail,
/// differentiable at the junction.
pub fn mixed_crra_cara() -> PharaUtility {
    let p0 = PharaPiece { a_lo: 1.0, a_hi: 3.0, kind: HaraKind::Power { r: 2.0, a: 0.0 }, anchor: Anchor { x: 1.0, u: 0.0, gamma: 1.0 } };
    let g = p0.slope(3.0);
    let p1 = PharaPiece::anchored_left(3.0, f64::INFINITY, HaraKind::Exponential { alpha: 0.8 }, p0.value(3.0), g);
    PharaUtility::new(vec![p0, p1]).expect("valid mixed utility")
}
