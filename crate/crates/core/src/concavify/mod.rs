//! Concave envelope of a piecewise HARA utility.
//!
//! The utility is split into elements: strictly concave arcs are kept whole,
//! while linear and convex pieces only contribute their endpoints (their
//! envelope is spanned by those). A Graham-style scan then keeps the elements
//! on the upper hull. The bridge between two consecutive elements is the line
//! of slope `s` supporting both, found as the root of
//! `g(s) = v_P(s) - v_Q(s)` where `v_E(s) = sup_{x in E} U(x) - s x`. Since
//! `g' = x_Q*(s) - x_P*(s) >= 0`, the root is unique and easy to bracket.

mod sampled;

pub use sampled::{sampled_envelope_fallback, SampleGrid};

use crate::error::{PharaError, Result};
use crate::phara::{HaraKind, PharaPiece, PharaUtility};
use crate::root::{bracket_increasing_positive, find_root_log, RootOptions};

/// A linear stretch of the envelope.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Chord {
    pub x_left: f64,
    pub x_right: f64,
    pub slope: f64,
    /// False when the original utility is already linear with this slope on
    /// the whole interval.
    pub introduced: bool,
}

#[derive(Debug, Clone)]
pub struct EnvelopeResult {
    pub envelope: PharaUtility,
    pub chords: Vec<Chord>,
    /// Chord endpoints lying strictly inside a concave piece.
    pub tangency_points: Vec<f64>,
}

impl EnvelopeResult {
    pub fn new_chords(&self) -> impl Iterator<Item = &Chord> {
        self.chords.iter().filter(|c| c.introduced)
    }

    /// True where the envelope coincides with the original utility.
    pub fn equals_original(&self, x: f64) -> bool {
        !self.new_chords().any(|c| x > c.x_left && x < c.x_right)
    }
}

#[derive(Debug, Clone)]
enum Elem {
    Point { x: f64, v: f64 },
    Arc(PharaPiece),
}

impl Elem {
    fn lo(&self) -> f64 {
        match self {
            Elem::Point { x, .. } => *x,
            Elem::Arc(p) => p.a_lo,
        }
    }

    fn hi(&self) -> f64 {
        match self {
            Elem::Point { x, .. } => *x,
            Elem::Arc(p) => p.a_hi,
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            Elem::Point { v, .. } => *v,
            Elem::Arc(p) => p.value(x),
        }
    }

    fn unbounded(&self) -> bool {
        matches!(self, Elem::Arc(p) if p.a_hi == f64::INFINITY)
    }

    /// Maximiser and maximum of `U(x) - s x` over the element.
    fn support(&self, s: f64) -> (f64, f64) {
        match self {
            Elem::Point { x, v } => (*x, v - s * x),
            Elem::Arc(p) => {
                let x = if s <= 0.0 { p.a_hi } else { p.inverse_marginal(s).clamp(p.a_lo, p.a_hi) };
                if x.is_infinite() {
                    (x, f64::INFINITY)
                } else {
                    (x, p.value(x) - s * x)
                }
            }
        }
    }
}

struct Bridge {
    /// Slope used to decide whether the left element survives.
    s_pop: f64,
    /// Slope of the bridge as seen from the right element.
    s_next: f64,
    xp: f64,
    xq: f64,
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

fn bridge(p: &Elem, q: &Elem) -> Result<Bridge> {
    match (p, q) {
        (Elem::Arc(a), Elem::Arc(b)) if a.a_hi == b.a_lo => {
            let (sa, sb) = (a.right_slope(), b.left_slope());
            if close(a.right_value(), b.left_value(), 1e-12) && sa >= sb * (1.0 - 1e-12) {
                return Ok(Bridge { s_pop: sb, s_next: sa, xp: a.a_hi, xq: b.a_lo });
            }
        }
        (Elem::Point { x: x1, v: v1 }, Elem::Point { x: x2, v: v2 }) => {
            let s = (v2 - v1) / (x2 - x1);
            return Ok(Bridge { s_pop: s, s_next: s, xp: *x1, xq: *x2 });
        }
        _ => {}
    }
    if !q.unbounded() {
        let (xp0, vp0) = p.support(0.0);
        let (xq0, vq0) = q.support(0.0);
        if vp0 >= vq0 - 1e-13 * (1.0 + vq0.abs()) {
            return Ok(Bridge { s_pop: 0.0, s_next: 0.0, xp: xp0, xq: xq0 });
        }
    }
    let g = |s: f64| p.support(s).1 - q.support(s).1;
    let (xa, xb) = (p.hi(), q.lo());
    let start = (q.value(xb) - p.value(xa)) / (xb - xa);
    let (lo, hi) = bracket_increasing_positive(g, start, 4.0, 200)?;
    let opts = RootOptions { x_tol: 1e-15, f_tol: 0.0, max_iter: 400 };
    let s = find_root_log(g, lo, hi, opts)?;
    Ok(Bridge { s_pop: s, s_next: s, xp: p.support(s).0, xq: q.support(s).0 })
}

/// Hull candidates in increasing `x`.
fn elements(u: &PharaUtility) -> Result<Vec<Elem>> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut arcs: Vec<PharaPiece> = Vec::new();
    for p in u.pieces() {
        if p.is_strictly_concave() {
            arcs.push(p.clone());
        } else if p.a_hi.is_infinite() {
            return Err(PharaError::UnboundedEnvelope(format!(
                "last piece on [{}, inf) is linear; the envelope has no curved tail",
                p.a_lo
            )));
        } else {
            points.push((p.a_lo, p.left_value()));
            points.push((p.a_hi, p.right_value()));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (x, v) in points {
        match merged.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.max(v),
            _ => merged.push((x, v)),
        }
    }
    let dominated = |x: f64, v: f64| {
        arcs.iter().any(|a| {
            let lim = if x == a.a_lo {
                a.left_value()
            } else if x == a.a_hi {
                a.right_value()
            } else {
                return false;
            };
            v <= lim + 1e-12 * (1.0 + lim.abs())
        })
    };
    let mut out: Vec<Elem> = merged
        .into_iter()
        .filter(|&(x, v)| !dominated(x, v))
        .map(|(x, v)| Elem::Point { x, v })
        .collect();
    out.extend(arcs.into_iter().map(Elem::Arc));
    // Points sort before an arc starting at the same place.
    out.sort_by(|a, b| {
        a.lo().total_cmp(&b.lo()).then_with(|| match (a, b) {
            (Elem::Point { .. }, Elem::Arc(_)) => std::cmp::Ordering::Less,
            (Elem::Arc(_), Elem::Point { .. }) => std::cmp::Ordering::Greater,
            _ => std::cmp::Ordering::Equal,
        })
    });
    Ok(out)
}

fn covers_linear(u: &PharaUtility, xa: f64, xb: f64, slope: f64) -> bool {
    // Re-solved tangencies may shift by rounding; ignore slivers.
    let eps = 1e-10 * xa.abs().max(xb.abs()).max(1.0);
    let mut inside = u.pieces().iter().filter(|p| p.a_lo < xb - eps && p.a_hi > xa + eps).peekable();
    inside.peek().is_some()
        && inside.all(|p| matches!(p.kind, HaraKind::Linear) && !crate::phara::slopes_differ(p.anchor.gamma, slope))
        && u.pieces().windows(2).all(|w| {
            let x = w[1].a_lo;
            !(x > xa && x < xb) || close(w[0].right_value(), w[1].left_value(), 1e-12)
        })
}

struct Kept {
    elem: Elem,
    s_left: f64,
    x_left: f64,
    x_right: f64,
}

/// Smallest concave majorant of `u`, returned as another piecewise HARA
/// utility with its chord intervals and tangency points.
pub fn concave_envelope(u: &PharaUtility) -> Result<EnvelopeResult> {
    let elems = elements(u)?;
    let mut stack: Vec<Kept> = Vec::with_capacity(elems.len());
    for e in elems {
        loop {
            let Some(top) = stack.last_mut() else {
                stack.push(Kept { s_left: f64::INFINITY, x_left: e.lo(), x_right: e.hi(), elem: e });
                break;
            };
            let b = bridge(&top.elem, &e)?;
            if b.s_pop >= top.s_left * (1.0 - 1e-12) {
                stack.pop();
                continue;
            }
            top.x_right = b.xp.max(top.x_left);
            stack.push(Kept { s_left: b.s_next, x_left: b.xq, x_right: e.hi(), elem: e });
            break;
        }
    }
    if !stack.last().is_some_and(|k| k.elem.unbounded()) {
        return Err(PharaError::UnboundedEnvelope("hull does not end on an unbounded concave piece".into()));
    }

    let mut pieces = Vec::new();
    let mut chords = Vec::new();
    let mut tangency_points = Vec::new();
    for i in 0..stack.len() {
        if i > 0 {
            let (xa, xb) = (stack[i - 1].x_right, stack[i].x_left);
            if xb > xa {
                let va = stack[i - 1].elem.value(xa);
                let vb = stack[i].elem.value(xb);
                let slope = (vb - va) / (xb - xa);
                pieces.push(PharaPiece::linear(xa, xb, va, slope));
                chords.push(Chord { x_left: xa, x_right: xb, slope, introduced: !covers_linear(u, xa, xb, slope) });
                if let Elem::Arc(p) = &stack[i - 1].elem {
                    if xa > p.a_lo && xa < p.a_hi {
                        tangency_points.push(xa);
                    }
                }
                if let Elem::Arc(p) = &stack[i].elem {
                    if xb > p.a_lo && xb < p.a_hi {
                        tangency_points.push(xb);
                    }
                }
            }
        }
        if let Elem::Arc(p) = &stack[i].elem {
            let (xl, xr) = (stack[i].x_left, stack[i].x_right);
            if xr > xl {
                let mut piece = p.restricted(xl, xr);
                piece.a_lo = pieces.last().map_or(xl, |q: &PharaPiece| q.a_hi);
                pieces.push(piece);
            }
        }
    }
    let envelope = PharaUtility::new(pieces)?;
    Ok(EnvelopeResult { envelope, chords, tangency_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phara::{builders, Side};
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn demo_envelope_shape() {
        let res = concave_envelope(&builders::demo()).unwrap();
        assert_eq!(res.tangency_points.len(), 1);
        assert!((res.tangency_points[0] - 28.0).abs() < 1e-10, "{:?}", res.tangency_points);
        assert_eq!(res.envelope.kinks(), vec![4.0, 4.4, 12.0, 40.0]);
        let c = &res.chords;
        assert_eq!(c.len(), 2);
        let low = -1.01 * 3.04f64.sqrt();
        assert!((c[0].slope - (-low / 7.6)).abs() < 1e-14);
        assert!((c[1].slope - 0.24f64.sqrt() * 8f64.sqrt() / 16.0).abs() < 1e-14);
        assert!(c.iter().all(|c| c.introduced));
        assert_eq!(res.envelope.gamma_plus(0), f64::INFINITY);
    }

    #[test]
    fn participating_envelope_shape() {
        let res = concave_envelope(&builders::participating_raw(0.5, 0.4, 0.3, 1.0).unwrap()).unwrap();
        assert_eq!(res.tangency_points.len(), 1);
        assert!((res.tangency_points[0] - 2.0).abs() < 1e-12);
        assert_eq!(res.envelope.kinks(), vec![0.0, 2.5]);
        let env = &res.envelope;
        assert!((env.gamma_plus(0) - 0.5).abs() < 1e-14);
        let m = 0.5 / 1.5f64.sqrt();
        let k = env.kinks();
        assert!((env.eval_deriv(k[1], Side::Left).unwrap() - m).abs() < 1e-14);
        assert!((env.eval_deriv(k[1], Side::Right).unwrap() - 0.88 * m).abs() < 1e-14);
    }

    #[test]
    fn analytic_tangency_from_a_point() {
        // Chord from (p, 0) to c (x - A)^g touches at (A - g p) / (1 - g).
        for &(p, a, g) in &[(0.0, 1.0, 0.5), (12.0, 20.0, 0.5), (1.0, 3.0, 0.3), (-2.0, 0.5, 0.7)] {
            let flat = PharaPiece::linear(p, a, 0.0, 0.0);
            let curve = PharaPiece {
                a_lo: a,
                a_hi: f64::INFINITY,
                kind: HaraKind::Power { r: 1.0 - g, a },
                anchor: crate::phara::Anchor { x: a + 1.0, u: 1.0, gamma: g },
            };
            let u = PharaUtility::new(vec![flat, curve]).unwrap();
            let res = concave_envelope(&u).unwrap();
            let expect = (a - g * p) / (1.0 - g);
            assert!((res.tangency_points[0] - expect).abs() < 1e-11 * (1.0 + expect.abs()), "{p} {a} {g}");
        }
    }

    #[test]
    fn concave_input_is_fixed_point() {
        for u in [builders::crra(0.5), builders::crra(3.0), builders::cara(2.0, 0.0), builders::mixed_crra_cara()] {
            let res = concave_envelope(&u).unwrap();
            assert!(res.chords.is_empty());
            assert!(res.tangency_points.is_empty());
            for x in grid(u.a0() + 0.01, 50.0, 300) {
                assert!(close(res.envelope.eval(x).unwrap(), u.eval(x).unwrap(), 1e-13));
            }
        }
    }

    #[test]
    fn idempotent() {
        for u in [builders::demo(), builders::participating_raw(0.5, 0.4, 0.3, 1.0).unwrap(), builders::hedge_fund_default().unwrap().0] {
            let once = concave_envelope(&u).unwrap();
            let twice = concave_envelope(&once.envelope).unwrap();
            assert_eq!(twice.new_chords().count(), 0, "{:?}\n{:?}", once.chords, twice.chords);
            assert_eq!(once.envelope.kinks(), twice.envelope.kinks());
            for x in grid(u.a0(), 100.0, 500) {
                let (a, b) = (once.envelope.eval(x).unwrap(), twice.envelope.eval(x).unwrap());
                assert!(close(a, b, 1e-12), "x = {x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn majorant_concave_and_tight() {
        let u = builders::demo();
        let res = concave_envelope(&u).unwrap();
        let env = &res.envelope;
        let xs = grid(4.0, 120.0, 2000);
        let ev: Vec<f64> = xs.iter().map(|&x| env.eval(x).unwrap()).collect();
        for (i, &x) in xs.iter().enumerate() {
            let ux = u.eval(x).unwrap();
            assert!(ev[i] >= ux - 1e-12, "below original at {x}");
            if res.equals_original(x) {
                assert!(close(ev[i], ux, 1e-12), "differs off chords at {x}");
            }
        }
        for i in 1..xs.len() - 1 {
            let interp = 0.5 * (ev[i - 1] + ev[i + 1]);
            assert!(ev[i] >= interp - 1e-10, "not concave at {}", xs[i]);
        }
    }

    #[test]
    fn linear_tail_is_rejected() {
        let u = PharaUtility::new(vec![PharaPiece::linear(0.0, f64::INFINITY, 0.0, 1.0)]).unwrap();
        assert!(matches!(concave_envelope(&u), Err(PharaError::UnboundedEnvelope(_))));
    }

    #[test]
    fn hedge_fund_envelope_is_ready() {
        let (u, _) = builders::hedge_fund_default().unwrap();
        let res = concave_envelope(&u).unwrap();
        res.envelope.check_solver_ready().unwrap();
        assert_eq!(res.new_chords().count(), 1);
    }

    fn biconjugate_check(u: &PharaUtility, env: &PharaUtility, seed: u64) {
        let xs = grid(u.a0(), 80.0, 1500);
        let mut rng = crate::rng::PathRng::new(seed, 0);
        for _ in 0..100 {
            // A line through a random envelope point with a random slope in its superdifferential-ish range.
            let x0 = xs[(rng.uniform() * xs.len() as f64) as usize % xs.len()];
            let c = env.eval_deriv(x0, Side::Right).unwrap().min(10.0) * (0.5 + rng.uniform());
            let d = env.eval(x0).unwrap() - c * x0 + 0.05 * rng.uniform();
            let env_below = xs.iter().any(|&x| env.eval(x).unwrap() <= c * x + d);
            if env_below {
                for &x in &xs {
                    let line = c * x + d;
                    if env.eval(x).unwrap() <= line {
                        assert!(u.eval(x).unwrap() <= line + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn biconjugate_bound() {
        for u in [builders::demo(), builders::participating_raw(0.5, 0.4, 0.3, 1.0).unwrap()] {
            let env = concave_envelope(&u).unwrap().envelope;
            biconjugate_check(&u, &env, 99);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn affine_equivariance(a in 0.05f64..20.0, b in -10.0f64..10.0) {
            let u = builders::demo();
            let lhs = concave_envelope(&u.scale_shift(a, b).unwrap()).unwrap();
            let rhs = concave_envelope(&u).unwrap().envelope.scale_shift(a, b).unwrap();
            prop_assert_eq!(lhs.envelope.kinks(), rhs.kinks());
            for x in grid(4.0, 90.0, 400) {
                let (p, q) = (lhs.envelope.eval(x).unwrap(), rhs.eval(x).unwrap());
                prop_assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()), "x = {}: {} vs {}", x, p, q);
            }
        }
    }
}
