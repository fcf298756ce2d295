//! Preferences composed with piecewise-linear payoffs.

use super::{Anchor, HaraKind, PharaPiece, PharaUtility, UtilitySpec};
use crate::error::{PharaError, Result};
use serde::{Deserialize, Serialize};

/// Continuous nondecreasing payoff, linear between breakpoints. Segment `k`
/// covers `[breakpoints[k], breakpoints[k+1])`, the last one is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearPayoff {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Payoff at each breakpoint (right limit).
    pub values: Vec<f64>,
    /// Liquidation floor; must equal the first breakpoint.
    pub floor: f64,
}

impl PiecewiseLinearPayoff {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let floor = breakpoints.first().copied().unwrap_or(f64::NAN);
        let p = PiecewiseLinearPayoff { breakpoints, slopes, values, floor };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(floor: f64) -> Self {
        PiecewiseLinearPayoff { breakpoints: vec![floor], slopes: vec![1.0], values: vec![floor], floor }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.breakpoints.len();
        let bad = |m: String| Err(PharaError::InvalidUtility(format!("payoff: {m}")));
        if n == 0 || self.slopes.len() != n || self.values.len() != n {
            return bad("breakpoints, slopes and values must be nonempty and of equal length".into());
        }
        if self.floor != self.breakpoints[0] {
            return bad(format!("floor {} differs from the first breakpoint {}", self.floor, self.breakpoints[0]));
        }
        if self.breakpoints.iter().chain(&self.slopes).chain(&self.values).any(|v| !v.is_finite()) {
            return bad("entries must be finite".into());
        }
        if self.slopes.iter().any(|&s| s < 0.0) {
            return bad("decreasing segments are not supported".into());
        }
        for k in 1..n {
            let (b0, b1) = (self.breakpoints[k - 1], self.breakpoints[k]);
            if !(b1 > b0) {
                return bad("breakpoints must increase".into());
            }
            let left = self.values[k - 1] + self.slopes[k - 1] * (b1 - b0);
            if self.values[k] < left - 1e-12 * (1.0 + left.abs()) {
                return bad(format!("payoff decreases at {b1}"));
            }
        }
        Ok(())
    }

    fn segment(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x).saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        self.values[k] + self.slopes[k] * (x - self.breakpoints[k])
    }
}

/// Two-branch power preference around a reference point:
/// `k (y - ref)^p` for gains and `-lambda (ref - y)^q` for losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SShaped {
    pub gain_exponent: f64,
    pub loss_exponent: f64,
    #[serde(default = "one")]
    pub gain_scale: f64,
    pub loss_aversion: f64,
    #[serde(default)]
    pub reference: f64,
}

fn one() -> f64 {
    1.0
}

impl SShaped {
    pub fn new(p: f64, q: f64, lambda: f64) -> Self {
        SShaped { gain_exponent: p, loss_exponent: q, gain_scale: 1.0, loss_aversion: lambda, reference: 0.0 }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let d = y - self.reference;
        if d >= 0.0 {
            self.gain_scale * d.powf(self.gain_exponent)
        } else {
            -self.loss_aversion * (-d).powf(self.loss_exponent)
        }
    }

    /// The two branches as pieces on `(-inf, ref)` and `[ref, inf)`.
    fn pieces(&self) -> Result<Vec<PharaPiece>> {
        let (p, q) = (self.gain_exponent, self.loss_exponent);
        if !(p > 0.0 && p <= 1.0 && q > 0.0 && q <= 1.0) || !(self.gain_scale > 0.0 && self.loss_aversion > 0.0) {
            return Err(PharaError::InvalidUtility(format!(
                "S-shaped preference needs exponents in (0, 1] and positive scales, got p = {p}, q = {q}"
            )));
        }
        let r0 = self.reference;
        let branch = |r: f64, x: f64, u: f64, gamma: f64, lo: f64, hi: f64| {
            let kind = if r == 0.0 { HaraKind::Linear } else { HaraKind::Power { r, a: r0 } };
            PharaPiece { a_lo: lo, a_hi: hi, kind, anchor: Anchor { x, u, gamma } }
        };
        Ok(vec![
            branch(1.0 - q, r0 - 1.0, -self.loss_aversion, self.loss_aversion * q, f64::NEG_INFINITY, r0),
            branch(1.0 - p, r0 + 1.0, self.gain_scale, self.gain_scale * p, r0, f64::INFINITY),
        ])
    }
}

/// Preference applied to the payoff.
#[derive(Debug, Clone, PartialEq)]
pub enum Preference {
    Phara(PharaUtility),
    SShaped(SShaped),
}

/// File form of a preference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreferenceSpec {
    SShaped(SShaped),
    Phara(UtilitySpec),
}

impl PreferenceSpec {
    pub fn build(&self) -> Result<Preference> {
        Ok(match self {
            PreferenceSpec::SShaped(s) => Preference::SShaped(*s),
            PreferenceSpec::Phara(u) => Preference::Phara(u.build()?),
        })
    }
}

/// Value of a piece list at `y`, taking the larger one-sided limit at junctions.
fn eval_pieces(pieces: &[PharaPiece], y: f64) -> f64 {
    let k = pieces.partition_point(|p| p.a_lo <= y).saturating_sub(1);
    let v = pieces[k].value(y);
    if k > 0 && y == pieces[k].a_lo {
        v.max(pieces[k - 1].right_value())
    } else {
        v
    }
}

/// `U = preference o payoff` as a piecewise HARA utility on `[floor, inf)`.
pub fn compose(preference: &Preference, payoff: &PiecewiseLinearPayoff) -> Result<PharaUtility> {
    payoff.validate()?;
    let pref = match preference {
        Preference::Phara(u) => u.pieces().to_vec(),
        Preference::SShaped(s) => s.pieces()?,
    };
    let y_min = payoff.values[0];
    let pref_lo = pref[0].a_lo;
    if y_min < pref_lo || (y_min == pref_lo && !pref[0].left_value().is_finite()) {
        return Err(PharaError::NotPhara(format!(
            "payoff value {y_min} at the floor lies outside the preference domain"
        )));
    }
    let n = payoff.breakpoints.len();
    let mut out: Vec<PharaPiece> = Vec::new();
    for k in 0..n {
        let lo = payoff.breakpoints[k];
        let hi = payoff.breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let c = payoff.slopes[k];
        let e = payoff.values[k] - c * lo;
        if c == 0.0 {
            let v = eval_pieces(&pref, payoff.values[k]);
            out.push(PharaPiece::linear(lo, hi, v, 0.0));
            continue;
        }
        let y_lo = payoff.values[k];
        let y_hi = if hi.is_finite() { c * hi + e } else { f64::INFINITY };
        for piece in &pref {
            if piece.a_hi <= y_lo || piece.a_lo >= y_hi {
                continue;
            }
            let x_lo = if piece.a_lo <= y_lo { lo } else { (piece.a_lo - e) / c };
            let x_hi = if piece.a_hi >= y_hi { hi } else { (piece.a_hi - e) / c };
            if !(x_hi > x_lo) {
                continue;
            }
            let kind = match piece.kind {
                HaraKind::Linear => HaraKind::Linear,
                HaraKind::Power { r, a } => HaraKind::Power { r, a: (a - e) / c },
                HaraKind::Exponential { alpha } => HaraKind::Exponential { alpha: alpha * c },
            };
            let anchor = Anchor { x: (piece.anchor.x - e) / c, u: piece.anchor.u, gamma: piece.anchor.gamma * c };
            let a_lo = out.last().map_or(x_lo, |p| p.a_hi);
            out.push(PharaPiece { a_lo, a_hi: x_hi, kind, anchor });
        }
    }
    PharaUtility::new(out)
}

#[cfg(test)]
mod tests {
    use super::super::builders;
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn participating_composition_matches_pointwise() {
        let (g, a, d, l) = (0.5, 0.4, 0.3, 1.0);
        let u = builders::participating_raw(g, a, d, l).unwrap();
        let pref = SShaped::new(g, g, 2.25);
        let payoff = builders::participating_payoff(a, d, l).unwrap();
        for x in grid(0.0, 30.0, 1000) {
            let direct = pref.eval(payoff.eval(x));
            let v = u.eval(x).unwrap();
            assert!((v - direct).abs() <= 1e-12 * (1.0 + direct.abs()), "x = {x}: {v} vs {direct}");
        }
        // Branch values by hand.
        let x = 5.0;
        let expect = (1.0 - d * a).powf(g) * (x - (1.0 - d) * l / (1.0 - d * a)).powf(g);
        assert!((u.eval(x).unwrap() - expect).abs() < 1e-14);
        assert!((u.eval(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(u.eval(0.5).unwrap(), 0.0);
    }

    #[test]
    fn identity_payoff_returns_preference() {
        for u in [builders::demo(), builders::crra(0.5), builders::cara(1.5, -3.0)] {
            let c = compose(&Preference::Phara(u.clone()), &PiecewiseLinearPayoff::identity(u.a0())).unwrap();
            assert_eq!(c, u);
        }
    }

    #[test]
    fn hedge_fund_kinks() {
        let (u, payoff) = builders::hedge_fund_default().unwrap();
        let floor = 0.7 * 0.5f64.exp();
        let b = 2.0 * 0.5f64.exp();
        assert!((payoff.floor - floor).abs() < 1e-15);
        let kinks = u.kinks();
        assert_eq!(kinks.len(), 2);
        assert!((kinks[0] - floor).abs() < 1e-15);
        assert!((kinks[1] - b).abs() < 1e-14);
        let pref = SShaped::new(0.88, 0.88, 2.25);
        for x in grid(floor, 40.0, 1000) {
            let direct = pref.eval(payoff.eval(x));
            assert!((u.eval(x).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn loss_region_is_convex_and_crosses_reference() {
        let pref = SShaped::new(0.5, 0.5, 2.0);
        let payoff = PiecewiseLinearPayoff::new(vec![0.0], vec![1.0], vec![-3.0]).unwrap();
        let u = compose(&Preference::SShaped(pref), &payoff).unwrap();
        assert_eq!(u.pieces().len(), 2);
        assert!(!u.pieces()[0].is_concave());
        assert_eq!(u.kinks(), vec![0.0, 3.0]);
        for x in grid(0.0, 10.0, 1000) {
            let direct = pref.eval(x - 3.0);
            assert!((u.eval(x).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn rejects_bad_payoffs() {
        assert!(PiecewiseLinearPayoff::new(vec![0.0, 1.0], vec![1.0, -1.0], vec![0.0, 1.0]).is_err());
        assert!(PiecewiseLinearPayoff::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.5]).is_err());
        let mut p = PiecewiseLinearPayoff::identity(0.0);
        p.floor = 1.0;
        assert!(p.validate().is_err());
    }
}
