//! Piecewise HARA utilities.
//!
//! Every piece carries one HARA closed form (linear, power/log, exponential)
//! written relative to an anchor point where its value and slope are known.
//! Pieces are anchored at their left endpoint unless the slope is infinite
//! there (a power piece whose benchmark equals the endpoint), in which case
//! any other point of the piece serves as anchor.

pub mod builders;
pub mod compose;

use crate::error::{PharaError, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance used when comparing slopes at partition points.
pub const SLOPE_TOL: f64 = 1e-9;

/// True when two slopes (possibly infinite) differ beyond [`SLOPE_TOL`].
pub fn slopes_differ(a: f64, b: f64) -> bool {
    if a == b {
        false
    } else if a.is_infinite() || b.is_infinite() {
        true
    } else {
        (a - b).abs() > SLOPE_TOL * a.abs().max(b.abs())
    }
}

/// Benchmark level of a HARA piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Benchmark {
    Finite(f64),
    NegInf,
}

impl Benchmark {
    pub fn value(self) -> f64 {
        match self {
            Benchmark::Finite(a) => a,
            Benchmark::NegInf => f64::NEG_INFINITY,
        }
    }
}

/// Closed-form family of a piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HaraKind {
    /// `R = 0`.
    Linear,
    /// `R` in `(0, inf)` with benchmark `a`; `r == 1` is the log case.
    Power { r: f64, a: f64 },
    /// `R = inf`, benchmark `-inf`, absolute risk aversion `alpha`.
    Exponential { alpha: f64 },
}

/// Point where a piece's closed form is pinned: value `u` and slope `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub x: f64,
    pub u: f64,
    pub gamma: f64,
}

/// `U~(x; R, A, x_hat, u, gamma, alpha)`. `r` may be `f64::INFINITY` for the
/// exponential case, which then requires `benchmark = NegInf`.
pub fn eval_template(r: f64, benchmark: Benchmark, x_hat: f64, u: f64, gamma: f64, alpha: f64, x: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(PharaError::IllegalCase(format!("slope must be in (0, inf), got {gamma}")));
    }
    let kind = kind_from_parts(r, benchmark, alpha)?;
    if let HaraKind::Power { a, .. } = kind {
        if x_hat == a {
            return Err(PharaError::IllegalCase("anchor coincides with the benchmark".into()));
        }
        if (x - a) * (x_hat - a) < 0.0 {
            return Err(PharaError::IllegalCase(format!("x = {x} lies across the benchmark {a}")));
        }
    }
    Ok(kind_value(kind, Anchor { x: x_hat, u, gamma }, x))
}

fn kind_from_parts(r: f64, benchmark: Benchmark, alpha: f64) -> Result<HaraKind> {
    if r == 0.0 {
        Ok(HaraKind::Linear)
    } else if r == f64::INFINITY {
        match benchmark {
            Benchmark::NegInf if alpha > 0.0 && alpha.is_finite() => Ok(HaraKind::Exponential { alpha }),
            Benchmark::NegInf => Err(PharaError::IllegalCase(format!("CARA needs alpha in (0, inf), got {alpha}"))),
            Benchmark::Finite(a) => Err(PharaError::IllegalCase(format!("R = inf needs A = -inf, got {a}"))),
        }
    } else if r > 0.0 && r.is_finite() {
        match benchmark {
            Benchmark::Finite(a) if a.is_finite() => Ok(HaraKind::Power { r, a }),
            _ => Err(PharaError::IllegalCase(format!("R = {r} needs a finite benchmark"))),
        }
    } else {
        Err(PharaError::IllegalCase(format!("R must lie in [0, inf], got {r}")))
    }
}

/// `ln((x - a) / (x_hat - a))`, accurate when `x` is close to the anchor.
fn ln_ratio(a: f64, x_hat: f64, x: f64) -> f64 {
    ((x - x_hat) / (x_hat - a)).ln_1p()
}

fn kind_value(kind: HaraKind, anchor: Anchor, x: f64) -> f64 {
    let Anchor { x: xh, u, gamma } = anchor;
    match kind {
        HaraKind::Linear => u + gamma * (x - xh),
        HaraKind::Power { r, a } => {
            if x == a {
                return if r < 1.0 {
                    u - gamma * (xh - a) / (1.0 - r)
                } else if xh > a {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                };
            }
            let lz = ln_ratio(a, xh, x);
            if r == 1.0 {
                u + gamma * (xh - a) * lz
            } else {
                u + gamma * (xh - a) / (1.0 - r) * ((1.0 - r) * lz).exp_m1()
            }
        }
        HaraKind::Exponential { alpha } => u - gamma / alpha * (-alpha * (x - xh)).exp_m1(),
    }
}

fn kind_slope(kind: HaraKind, anchor: Anchor, x: f64) -> f64 {
    match kind {
        HaraKind::Linear => anchor.gamma,
        HaraKind::Power { r, a } => {
            if x == a {
                f64::INFINITY
            } else {
                anchor.gamma * (-r * ln_ratio(a, anchor.x, x)).exp()
            }
        }
        HaraKind::Exponential { alpha } => anchor.gamma * (-alpha * (x - anchor.x)).exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PharaPiece {
    pub a_lo: f64,
    pub a_hi: f64,
    pub kind: HaraKind,
    pub anchor: Anchor,
}

impl PharaPiece {
    /// A piece anchored at its left endpoint by value `u_plus` and slope `gamma_plus`.
    pub fn anchored_left(a_lo: f64, a_hi: f64, kind: HaraKind, u_plus: f64, gamma_plus: f64) -> Self {
        PharaPiece { a_lo, a_hi, kind, anchor: Anchor { x: a_lo, u: u_plus, gamma: gamma_plus } }
    }

    pub fn linear(a_lo: f64, a_hi: f64, u_plus: f64, slope: f64) -> Self {
        Self::anchored_left(a_lo, a_hi, HaraKind::Linear, u_plus, slope)
    }

    /// Relative risk aversion: 0 for linear, infinity for exponential.
    pub fn risk_aversion(&self) -> f64 {
        match self.kind {
            HaraKind::Linear => 0.0,
            HaraKind::Power { r, .. } => r,
            HaraKind::Exponential { .. } => f64::INFINITY,
        }
    }

    pub fn benchmark(&self) -> Option<Benchmark> {
        match self.kind {
            HaraKind::Linear => None,
            HaraKind::Power { a, .. } => Some(Benchmark::Finite(a)),
            HaraKind::Exponential { .. } => Some(Benchmark::NegInf),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            HaraKind::Exponential { alpha } => Some(alpha),
            _ => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        kind_value(self.kind, self.anchor, x)
    }

    pub fn slope(&self, x: f64) -> f64 {
        kind_slope(self.kind, self.anchor, x)
    }

    /// Value limit at `a_hi` from the left (`+inf` growth shows up as such).
    pub fn right_value(&self) -> f64 {
        if self.a_hi.is_finite() {
            self.value(self.a_hi)
        } else {
            match self.kind {
                HaraKind::Exponential { alpha } => self.anchor.u + self.anchor.gamma / alpha,
                HaraKind::Power { r, a } if r > 1.0 => self.anchor.u + self.anchor.gamma * (self.anchor.x - a) / (r - 1.0),
                _ if self.anchor.gamma == 0.0 => self.anchor.u,
                _ => f64::INFINITY,
            }
        }
    }

    pub fn left_value(&self) -> f64 {
        self.value(self.a_lo)
    }

    pub fn left_slope(&self) -> f64 {
        self.slope(self.a_lo)
    }

    /// Slope limit at `a_hi` from the left (0 at infinity for curved pieces).
    pub fn right_slope(&self) -> f64 {
        if self.a_hi.is_finite() {
            self.slope(self.a_hi)
        } else {
            match self.kind {
                HaraKind::Linear => self.anchor.gamma,
                _ => 0.0,
            }
        }
    }

    pub fn is_concave(&self) -> bool {
        match self.kind {
            HaraKind::Power { a, .. } => self.anchor.x > a,
            _ => true,
        }
    }

    pub fn is_strictly_concave(&self) -> bool {
        !matches!(self.kind, HaraKind::Linear) && self.is_concave()
    }

    /// Inverse of the marginal utility of a curved concave piece, unclipped.
    pub fn inverse_marginal(&self, s: f64) -> f64 {
        let Anchor { x, gamma, .. } = self.anchor;
        match self.kind {
            HaraKind::Power { r, a } => a + (x - a) * ((gamma / s).ln() / r).exp(),
            HaraKind::Exponential { alpha } => x + (gamma / s).ln() / alpha,
            HaraKind::Linear => f64::NAN,
        }
    }

    /// Absolute risk aversion `-U''/U'` inside the piece.
    pub fn ara(&self, x: f64) -> f64 {
        match self.kind {
            HaraKind::Linear => 0.0,
            HaraKind::Power { r, a } => 1.0 / (x / r - a / r),
            HaraKind::Exponential { alpha } => alpha,
        }
    }

    /// Moves the anchor to `x` (inside the piece, finite slope there).
    pub fn reanchored(&self, x: f64) -> Self {
        PharaPiece { anchor: Anchor { x, u: self.value(x), gamma: self.slope(x) }, ..self.clone() }
    }

    /// Restriction to `[lo, hi]`, re-anchored at `lo` when the slope there is finite.
    pub fn restricted(&self, lo: f64, hi: f64) -> Self {
        let mut p = PharaPiece { a_lo: lo, a_hi: hi, ..self.clone() };
        if self.slope(lo).is_finite() && self.value(lo).is_finite() {
            p = p.reanchored(lo);
        } else if hi.is_finite() {
            p = p.reanchored(hi);
        }
        p
    }

    fn validate(&self, index: usize, first: bool) -> Result<()> {
        let bad = |msg: String| Err(PharaError::InvalidUtility(format!("piece {index}: {msg}")));
        let Anchor { x, u, gamma } = self.anchor;
        if !(self.a_lo < self.a_hi) || !self.a_lo.is_finite() {
            return bad(format!("empty or unbounded-below interval [{}, {})", self.a_lo, self.a_hi));
        }
        if !x.is_finite() || !u.is_finite() || !gamma.is_finite() {
            return bad("anchor must be finite".into());
        }
        match self.kind {
            HaraKind::Linear => {
                if gamma < 0.0 {
                    return bad(format!("negative slope {gamma}"));
                }
            }
            HaraKind::Power { r, a } => {
                if !(r > 0.0 && r.is_finite()) || !a.is_finite() {
                    return bad(format!("power piece needs R in (0, inf) and finite A, got R = {r}, A = {a}"));
                }
                if !(gamma > 0.0) {
                    return bad(format!("slope must be positive, got {gamma}"));
                }
                if a > self.a_lo && a < self.a_hi {
                    return bad(format!("benchmark {a} inside ({}, {})", self.a_lo, self.a_hi));
                }
                if (x - a) * (self.a_lo + self.a_hi.min(self.a_lo + 1.0) - 2.0 * a) <= 0.0 {
                    return bad("anchor on the wrong side of the benchmark".into());
                }
                if a == self.a_lo && r >= 1.0 && !first {
                    return bad("value -inf at an interior partition point".into());
                }
                if a >= self.a_hi && a == self.a_hi && r >= 1.0 {
                    return bad("value +inf at a partition point".into());
                }
            }
            HaraKind::Exponential { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return bad(format!("alpha must be in (0, inf), got {alpha}"));
                }
                if !(gamma > 0.0) {
                    return bad(format!("slope must be positive, got {gamma}"));
                }
            }
        }
        Ok(())
    }
}

/// A piecewise HARA utility on `[a0, inf)` (or `(a0, inf)` when the value at
/// `a0` is `-inf`).
#[derive(Debug, Clone, PartialEq)]
pub struct PharaUtility {
    pieces: Vec<PharaPiece>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl PharaUtility {
    pub fn new(pieces: Vec<PharaPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(PharaError::InvalidUtility("no pieces".into()));
        }
        for (k, p) in pieces.iter().enumerate() {
            p.validate(k, k == 0)?;
            if k + 1 < pieces.len() && p.a_hi != pieces[k + 1].a_lo {
                return Err(PharaError::InvalidUtility(format!("gap or overlap between pieces {k} and {}", k + 1)));
            }
        }
        let last = pieces.last().expect("nonempty");
        if last.a_hi != f64::INFINITY {
            return Err(PharaError::InvalidUtility("last piece must extend to infinity".into()));
        }
        for k in 1..pieces.len() {
            let left = pieces[k - 1].right_value();
            let right = pieces[k].left_value();
            let scale = 1.0 + left.abs().max(right.abs());
            if !(right >= left - 1e-12 * scale) {
                return Err(PharaError::InvalidUtility(format!(
                    "utility decreases across a_{k} = {}: {left} -> {right}",
                    pieces[k].a_lo
                )));
            }
        }
        Ok(PharaUtility { pieces })
    }

    pub fn pieces(&self) -> &[PharaPiece] {
        &self.pieces
    }

    /// Number of pieces minus one (the `n` of the partition `a_0 < ... < a_{n+1}`).
    pub fn n(&self) -> usize {
        self.pieces.len() - 1
    }

    pub fn a0(&self) -> f64 {
        self.pieces[0].a_lo
    }

    pub fn value_at_a0(&self) -> f64 {
        self.pieces[0].left_value()
    }

    pub fn a0_included(&self) -> bool {
        self.value_at_a0().is_finite()
    }

    /// Partition points `a_0, ..., a_n` (the finite ones).
    pub fn partition(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.a_lo).collect()
    }

    /// `gamma_k^+ = U'(a_k+)` for `k = 0..=n`.
    pub fn gamma_plus(&self, k: usize) -> f64 {
        self.pieces[k].left_slope()
    }

    /// `gamma_k^- = U'(a_k-)` for `k = 0..=n+1`, with `gamma_0^- = inf` and
    /// `gamma_{n+1}^- = 0`.
    pub fn gamma_minus(&self, k: usize) -> f64 {
        if k == 0 {
            f64::INFINITY
        } else if k == self.pieces.len() {
            0.0
        } else {
            self.pieces[k - 1].right_slope()
        }
    }

    /// `(U(a_k-), U(a_k+))` for interior partition points `k = 1..=n`.
    pub fn junction_values(&self, k: usize) -> (f64, f64) {
        (self.pieces[k - 1].right_value(), self.pieces[k].left_value())
    }

    fn locate(&self, x: f64) -> usize {
        self.pieces.partition_point(|p| p.a_lo <= x).saturating_sub(1)
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let a0 = self.a0();
        if x.is_nan() || x < a0 || (x == a0 && !self.a0_included()) {
            return Err(PharaError::OutOfDomain { x, a0 });
        }
        Ok(())
    }

    /// `U(x)`; at interior partition points the larger one-sided limit.
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let k = self.locate(x);
        let p = &self.pieces[k];
        if k > 0 && x == p.a_lo {
            return Ok(self.pieces[k - 1].right_value().max(p.left_value()));
        }
        Ok(p.value(x))
    }

    /// One-sided derivative.
    pub fn eval_deriv(&self, x: f64, side: Side) -> Result<f64> {
        if x.is_nan() || x < self.a0() {
            return Err(PharaError::OutOfDomain { x, a0: self.a0() });
        }
        let k = self.locate(x);
        let p = &self.pieces[k];
        if x == p.a_lo && side == Side::Left {
            return Ok(self.gamma_minus(k));
        }
        Ok(p.slope(x))
    }

    /// Absolute risk aversion inside a piece.
    pub fn ara(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let k = self.locate(x);
        let p = &self.pieces[k];
        if x == p.a_lo {
            return Err(PharaError::AtKink(x));
        }
        Ok(p.ara(x))
    }

    /// `a U + b` for `a > 0`.
    pub fn scale_shift(&self, a_scale: f64, b_shift: f64) -> Result<Self> {
        if !(a_scale > 0.0) {
            return Err(PharaError::InvalidUtility(format!("scale must be positive, got {a_scale}")));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| PharaPiece {
                anchor: Anchor { x: p.anchor.x, u: a_scale * p.anchor.u + b_shift, gamma: a_scale * p.anchor.gamma },
                ..p.clone()
            })
            .collect();
        Ok(PharaUtility { pieces })
    }

    /// `a_0` followed by every interior partition point where the one-sided
    /// slopes or values differ.
    pub fn kinks(&self) -> Vec<f64> {
        let mut out = vec![self.a0()];
        for k in 1..self.pieces.len() {
            let (gm, gp) = (self.gamma_minus(k), self.gamma_plus(k));
            let (vm, vp) = self.junction_values(k);
            let slope_gap = slopes_differ(gm, gp) || gm.is_infinite();
            let value_gap = (vm - vp).abs() > 1e-12 * (1.0 + vm.abs().max(vp.abs()));
            if slope_gap || value_gap {
                out.push(self.pieces[k].a_lo);
            }
        }
        out
    }

    /// Intervals `[a_k, a_{k+1}]` on which the utility is linear.
    pub fn linear_intervals(&self) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .filter(|p| matches!(p.kind, HaraKind::Linear))
            .map(|p| (p.a_lo, p.a_hi))
            .collect()
    }

    /// True when the utility satisfies every condition the closed-form
    /// solver needs: concave pieces, continuity, nonincreasing slopes,
    /// positive slopes, and a curved last piece.
    pub fn check_solver_ready(&self) -> Result<()> {
        for (k, p) in self.pieces.iter().enumerate() {
            if !p.is_concave() {
                return Err(PharaError::InvalidUtility(format!("piece {k} is convex")));
            }
            if matches!(p.kind, HaraKind::Linear) && !(p.anchor.gamma > 0.0) {
                return Err(PharaError::InvalidUtility(format!("piece {k} is flat")));
            }
        }
        if matches!(self.pieces.last().map(|p| p.kind), Some(HaraKind::Linear)) {
            return Err(PharaError::UnboundedEnvelope("last piece is linear".into()));
        }
        for k in 1..self.pieces.len() {
            let (vm, vp) = self.junction_values(k);
            if (vm - vp).abs() > 1e-9 * (1.0 + vm.abs().max(vp.abs())) {
                return Err(PharaError::InvalidUtility(format!("jump at a_{k}: {vm} -> {vp}")));
            }
            let (gm, gp) = (self.gamma_minus(k), self.gamma_plus(k));
            if gp > gm * (1.0 + SLOPE_TOL) {
                return Err(PharaError::InvalidUtility(format!("slope increases at a_{k}: {gm} -> {gp}")));
            }
        }
        Ok(())
    }
}

/// Extended real used in scenario files: a number or one of
/// `"inf"`, `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtReal {
    Num(f64),
    Tag(ExtTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtTag {
    #[serde(rename = "inf", alias = "+inf", alias = "infinity")]
    Inf,
    #[serde(rename = "-inf", alias = "−inf", alias = "-infinity")]
    NegInf,
}

impl ExtReal {
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Num(v) => v,
            ExtReal::Tag(ExtTag::Inf) => f64::INFINITY,
            ExtReal::Tag(ExtTag::NegInf) => f64::NEG_INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::Tag(ExtTag::Inf)
        } else if v == f64::NEG_INFINITY {
            ExtReal::Tag(ExtTag::NegInf)
        } else {
            ExtReal::Num(v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub x: f64,
    pub u: f64,
    pub gamma: f64,
}

/// File form of one piece. Either `gamma_plus`/`u_plus` (anchor at `a_lo`) or
/// an explicit `anchor` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSpec {
    pub a_lo: f64,
    #[serde(rename = "R")]
    pub r: ExtReal,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<ExtReal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub a0: f64,
    pub pieces: Vec<PieceSpec>,
}

impl UtilitySpec {
    pub fn build(&self) -> Result<PharaUtility> {
        if self.pieces.first().map(|p| p.a_lo) != Some(self.a0) {
            return Err(PharaError::Scenario("first piece must start at a0".into()));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (k, spec) in self.pieces.iter().enumerate() {
            let a_hi = self.pieces.get(k + 1).map_or(f64::INFINITY, |n| n.a_lo);
            let r = spec.r.to_f64();
            let benchmark = match spec.a.map(ExtReal::to_f64) {
                Some(v) if v == f64::NEG_INFINITY => Benchmark::NegInf,
                Some(v) => Benchmark::Finite(v),
                None if r == f64::INFINITY => Benchmark::NegInf,
                None => Benchmark::Finite(f64::NAN),
            };
            let kind = kind_from_parts(r, benchmark, spec.alpha.unwrap_or(f64::NAN))?;
            let anchor = match (spec.anchor, spec.gamma_plus, spec.u_plus) {
                (Some(a), _, _) => Anchor { x: a.x, u: a.u, gamma: a.gamma },
                (None, Some(g), Some(u)) => Anchor { x: spec.a_lo, u, gamma: g },
                _ => return Err(PharaError::Scenario(format!("piece {k}: need anchor or gamma_plus/u_plus"))),
            };
            pieces.push(PharaPiece { a_lo: spec.a_lo, a_hi, kind, anchor });
        }
        PharaUtility::new(pieces)
    }

    pub fn from_utility(u: &PharaUtility) -> Self {
        let pieces = u
            .pieces()
            .iter()
            .map(|p| {
                let (r, a, alpha) = match p.kind {
                    HaraKind::Linear => (ExtReal::Num(0.0), None, None),
                    HaraKind::Power { r, a } => (ExtReal::Num(r), Some(ExtReal::Num(a)), None),
                    HaraKind::Exponential { alpha } => {
                        (ExtReal::Tag(ExtTag::Inf), Some(ExtReal::Tag(ExtTag::NegInf)), Some(alpha))
                    }
                };
                let left_anchor = p.anchor.x == p.a_lo;
                PieceSpec {
                    a_lo: p.a_lo,
                    r,
                    a,
                    alpha,
                    gamma_plus: left_anchor.then_some(p.anchor.gamma),
                    u_plus: left_anchor.then_some(p.anchor.u),
                    anchor: (!left_anchor).then_some(AnchorSpec { x: p.anchor.x, u: p.anchor.u, gamma: p.anchor.gamma }),
                }
            })
            .collect();
        UtilitySpec { a0: u.a0(), pieces }
    }
}
