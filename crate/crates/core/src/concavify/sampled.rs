//! Envelope of a black-box utility from samples.
//!
//! Upper hull (monotone chain) over a grid, refined around chord endpoints
//! until they settle. Concave stretches of the hull are fitted back to a
//! power piece when the fit reproduces the samples, otherwise they are kept
//! as linear interpolation between hull vertices.

use super::{Chord, EnvelopeResult};
use crate::error::{PharaError, Result};
use crate::phara::{Anchor, HaraKind, PharaPiece, PharaUtility};
use crate::root::{find_root, RootOptions};

const MAX_ROUNDS: usize = 20;
const REFINE_POINTS: usize = 64;

#[derive(Debug, Clone, Copy)]
pub struct SampleGrid {
    /// Right end of the sampled range; beyond it the function is assumed
    /// concave with relative risk aversion `tail_r`.
    pub x_max: f64,
    pub n: usize,
    pub tail_r: f64,
}

fn upper_hull(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    let mut h: Vec<usize> = Vec::new();
    for i in 0..xs.len() {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross >= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(i);
    }
    h
}

/// Largest gap between the hull segment `(i, j)` and the samples it skips.
fn deviation(xs: &[f64], ys: &[f64], i: usize, j: usize) -> f64 {
    let s = (ys[j] - ys[i]) / (xs[j] - xs[i]);
    (i + 1..j).map(|k| ys[i] + s * (xs[k] - xs[i]) - ys[k]).fold(0.0, f64::max)
}

struct Hull {
    vertices: Vec<usize>,
    /// Per hull segment: true when it bridges over samples that lie strictly below.
    chord: Vec<bool>,
}

fn classify(xs: &[f64], ys: &[f64], noise: f64) -> Hull {
    let vertices = upper_hull(xs, ys);
    let chord = vertices.windows(2).map(|w| w[1] > w[0] + 1 && deviation(xs, ys, w[0], w[1]) > noise).collect();
    Hull { vertices, chord }
}

fn chord_ends(h: &Hull) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, &c) in h.chord.iter().enumerate() {
        if c {
            out.push(h.vertices[k]);
            out.push(h.vertices[k + 1]);
        }
    }
    out.dedup();
    out
}

fn fd_slope<F: Fn(f64) -> f64>(f: &F, x: f64, dir: f64) -> f64 {
    let h = 1e-7 * x.abs().max(1.0);
    dir * (f(x + dir * h) - f(x)) / h
}

/// Power piece through `(xa, f(xa))` with slopes `ga`, `gb` at the ends and
/// value `yb` at `xb`, found by a search over the benchmark.
fn fit_power(xa: f64, xb: f64, ya: f64, yb: f64, ga: f64, gb: f64) -> Option<PharaPiece> {
    if !(ga > gb && gb > 0.0 && ga.is_finite()) {
        return None;
    }
    let width = xb - xa;
    let lr = (ga / gb).ln();
    let make = |w: f64| {
        let r = lr / ((width + w) / w).ln();
        PharaPiece { a_lo: xa, a_hi: xb, kind: HaraKind::Power { r, a: xa - w }, anchor: Anchor { x: xa, u: ya, gamma: ga } }
    };
    let resid = |lw: f64| make(lw.exp()).value(xb) - yb;
    let lws: Vec<f64> = (0..=60).map(|i| (width * 1e-6).ln() + i as f64 * (1e12f64).ln() / 60.0).collect();
    let mut prev = (lws[0], resid(lws[0]));
    for &lw in &lws[1..] {
        let r = resid(lw);
        if r.is_finite() && prev.1.is_finite() && r.signum() != prev.1.signum() {
            let opts = RootOptions { x_tol: 1e-15, f_tol: 0.0, max_iter: 300 };
            let root = find_root(resid, prev.0, lw, opts).ok()?;
            return Some(make(root.exp()));
        }
        prev = (lw, r);
    }
    None
}

fn fits_samples(p: &PharaPiece, xs: &[f64], ys: &[f64]) -> bool {
    xs.iter().zip(ys).all(|(&x, &y)| (p.value(x) - y).abs() <= 1e-7 * (1.0 + y.abs()))
}

/// Envelope of `f` on `[a0, inf)` from samples on `[a0, x_max]`.
pub fn sampled_envelope_fallback<F: Fn(f64) -> f64>(f: F, a0: f64, grid: SampleGrid) -> Result<EnvelopeResult> {
    if !(grid.x_max > a0) || grid.n < 3 || !(grid.tail_r > 0.0) {
        return Err(PharaError::InvalidUtility("sample grid needs x_max > a0, n >= 3 and tail_r > 0".into()));
    }
    let scale = a0.abs().max(grid.x_max.abs()).max(1.0);
    let mut xs: Vec<f64> = (0..grid.n).map(|i| a0 + (grid.x_max - a0) * i as f64 / (grid.n - 1) as f64).collect();
    if !f(a0).is_finite() {
        xs[0] = a0 + 1e-9 * scale;
    }
    let mut ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut prev: Option<Vec<f64>> = None;
    let mut round = 0;
    let hull = loop {
        let noise = 1e-12 * (1.0 + ys.iter().fold(0.0f64, |m, y| m.max(y.abs())));
        let hull = classify(&xs, &ys, noise);
        let ends = chord_ends(&hull);
        let est: Vec<f64> = ends.iter().map(|&i| xs[i]).collect();
        let settled = prev.as_ref().is_some_and(|p| {
            p.len() == est.len() && p.iter().zip(&est).all(|(a, b)| (a - b).abs() < 1e-8 * b.abs().max(1.0))
        });
        let spacing_floor = ends.iter().all(|&i| {
            let left = if i > 0 { xs[i] - xs[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < xs.len() { xs[i + 1] - xs[i] } else { f64::INFINITY };
            left.min(right) < 1e-9 * scale
        });
        if settled || spacing_floor || ends.is_empty() {
            break hull;
        }
        round += 1;
        if round > MAX_ROUNDS {
            return Err(PharaError::NoConvergence(format!("chord endpoints still moving after {MAX_ROUNDS} rounds")));
        }
        let mut extra = Vec::new();
        for &i in &ends {
            let lo = if i > 0 { xs[i - 1] } else { xs[i] };
            let hi = if i + 1 < xs.len() { xs[i + 1] } else { xs[i] };
            for k in 1..=REFINE_POINTS {
                extra.push(lo + (hi - lo) * k as f64 / (REFINE_POINTS + 1) as f64);
            }
        }
        let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        pts.extend(extra.into_iter().map(|x| (x, f(x))));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        xs = pts.iter().map(|p| p.0).collect();
        ys = pts.iter().map(|p| p.1).collect();
        prev = Some(est);
    };

    let v = &hull.vertices;
    let mut pieces: Vec<PharaPiece> = Vec::new();
    let mut chords = Vec::new();
    let mut tangency_points = Vec::new();
    let linear = |i: usize, j: usize| PharaPiece::linear(xs[i], xs[j], ys[i], (ys[j] - ys[i]) / (xs[j] - xs[i]));
    let mut k = 0;
    while k + 1 < v.len() {
        let (i, j) = (v[k], v[k + 1]);
        if hull.chord[k] {
            let slope = (ys[j] - ys[i]) / (xs[j] - xs[i]);
            chords.push(Chord { x_left: xs[i], x_right: xs[j], slope, introduced: true });
            for &x in &[xs[i], xs[j]] {
                if x > xs[0] && x < grid.x_max {
                    let (l, r) = (fd_slope(&f, x, -1.0), fd_slope(&f, x, 1.0));
                    if (l - slope).abs() < 1e-3 * slope.abs() && (r - slope).abs() < 1e-3 * slope.abs() {
                        tangency_points.push(x);
                    }
                }
            }
            pieces.push(linear(i, j));
            k += 1;
            continue;
        }
        let mut m = k;
        while m + 1 < v.len() && !hull.chord[m] {
            m += 1;
        }
        let (ia, ib) = (v[k], v[m]);
        let ga = fd_slope(&f, xs[ia], 1.0);
        let gb = fd_slope(&f, xs[ib], -1.0);
        match fit_power(xs[ia], xs[ib], ys[ia], ys[ib], ga, gb) {
            Some(p) if fits_samples(&p, &xs[ia..=ib], &ys[ia..=ib]) => pieces.push(p),
            _ => pieces.extend(v[k..=m].windows(2).map(|w| linear(w[0], w[1]))),
        }
        k = m;
    }

    // Tail: power with the given risk aversion, benchmark from the slope
    // ratio over one sampled width.
    let xa = grid.x_max;
    let xb = xa + (grid.x_max - a0);
    let (ga, gb) = (fd_slope(&f, xa, 1.0), fd_slope(&f, xb, -1.0));
    let rho = (ga / gb).powf(1.0 / grid.tail_r);
    if !(rho > 1.0) {
        return Err(PharaError::UnboundedEnvelope("sampled slopes do not decrease beyond x_max".into()));
    }
    let a = (rho * xa - xb) / (rho - 1.0);
    let last = *v.last().expect("nonempty hull");
    pieces.push(PharaPiece {
        a_lo: xs[last],
        a_hi: f64::INFINITY,
        kind: HaraKind::Power { r: grid.tail_r, a: a.min(xs[last] - 1e-12 * scale) },
        anchor: Anchor { x: xs[last], u: ys[last], gamma: ga },
    });
    for w in 1..pieces.len() {
        pieces[w].a_lo = pieces[w - 1].a_hi;
    }
    let envelope = PharaUtility::new(pieces)?;
    Ok(EnvelopeResult { envelope, chords, tangency_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concavify::concave_envelope;
    use crate::phara::builders;

    fn grid(x_max: f64, n: usize, tail_r: f64) -> SampleGrid {
        SampleGrid { x_max, n, tail_r }
    }

    #[test]
    fn hull_of_convex_then_concave() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 5.0 { 0.1 * x * x } else { 2.5 + (x - 5.0).sqrt() }).collect();
        let h = upper_hull(&xs, &ys);
        assert_eq!(h[0], 0);
        assert!(h.iter().all(|&i| i == 0 || i >= 5));
    }

    #[test]
    fn demo_tangency_from_samples() {
        let u = builders::demo();
        let res = sampled_envelope_fallback(|x| u.eval(x).unwrap(), 4.0, grid(100.0, 2001, 0.5)).unwrap();
        let t: Vec<f64> = res.tangency_points.iter().copied().filter(|&x| x > 20.0).collect();
        assert_eq!(t.len(), 1, "{:?}", res.tangency_points);
        assert!((t[0] - 28.0).abs() < 1e-6, "{}", t[0]);
        let exact = concave_envelope(&u).unwrap().envelope;
        for i in 0..300 {
            let x = 4.0 + i as f64 * 0.3;
            let (a, b) = (res.envelope.eval(x).unwrap(), exact.eval(x).unwrap());
            assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()), "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn participating_tangency_from_samples() {
        let u = builders::participating_raw(0.5, 0.4, 0.3, 1.0).unwrap();
        let res = sampled_envelope_fallback(|x| u.eval(x).unwrap(), 0.0, grid(20.0, 2001, 0.5)).unwrap();
        assert_eq!(res.tangency_points.len(), 1, "{:?}", res.tangency_points);
        assert!((res.tangency_points[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn concave_samples_have_no_chords() {
        let u = builders::crra(0.5);
        let res = sampled_envelope_fallback(|x| u.eval(x).unwrap(), 0.5, grid(30.0, 500, 0.5)).unwrap();
        assert!(res.chords.is_empty());
        for i in 0..100 {
            let x = 0.5 + i as f64 * 0.5;
            assert!((res.envelope.eval(x).unwrap() - u.eval(x).unwrap()).abs() < 1e-5);
        }
    }
}
