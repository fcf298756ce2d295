//! Bracketed scalar root finding (bisection safeguarded secant / inverse
//! quadratic steps, in the style of Brent).

use crate::error::{PharaError, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { x_tol: 1e-15, f_tol: 1e-12, max_iter: 200 }
    }
}

/// Finds a root of `f` in `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
/// Returns as soon as `|f(x)| <= f_tol` or the bracket is narrower than
/// `x_tol * max(1, |x|)`.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(PharaError::NoConvergence(format!(
            "root not bracketed on [{lo}, {hi}]: f = ({fa}, {fb})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 0.5 * opts.x_tol * b.abs().max(1.0);
        let m = 0.5 * (c - b);
        if fb.abs() <= opts.f_tol || m.abs() <= tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            return Err(PharaError::NoConvergence(format!("function returned NaN at {b}")));
        }
    }
    Err(PharaError::NoConvergence(format!(
        "root finder exhausted {} iterations near {b}",
        opts.max_iter
    )))
}

/// Geometric bracket search for a function that increases with its argument
/// on `(0, inf)`: returns `(lo, hi)` with `f(lo) <= 0 <= f(hi)`.
/// [`find_root`] on `log x` for a positive bracket; the endpoints are
/// evaluated at their exact values.
pub fn find_root_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let (ll, lh) = (lo.ln(), hi.ln());
    let map = |t: f64| if t == ll { lo } else if t == lh { hi } else { t.exp() };
    Ok(map(find_root(|t| f(map(t)), ll, lh, opts)?))
}

pub fn bracket_increasing_positive<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    factor: f64,
    max_expansions: usize,
) -> Result<(f64, f64)> {
    let start = if start.is_finite() && start > 0.0 { start } else { 1.0 };
    let (mut lo, mut hi) = (start, start);
    let mut n = 0;
    while f(lo) > 0.0 {
        hi = lo;
        lo /= factor;
        n += 1;
        if n > max_expansions || lo == 0.0 {
            return Err(PharaError::NoConvergence("lower bracket not found".into()));
        }
    }
    n = 0;
    while f(hi) < 0.0 {
        lo = lo.max(hi);
        hi *= factor;
        n += 1;
        if n > max_expansions || !hi.is_finite() {
            return Err(PharaError::NoConvergence("upper bracket not found".into()));
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, RootOptions { f_tol: 0.0, ..Default::default() }).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unbracketed() {
        assert!(find_root(|x| x * x + 1.0, -1.0, 1.0, RootOptions::default()).is_err());
    }

    #[test]
    fn handles_steep_functions() {
        let r = find_root(|x: f64| (x - 3.0).powi(3) * 1e6, 0.0, 10.0, RootOptions { f_tol: 0.0, ..Default::default() })
            .unwrap();
        assert!((r - 3.0).abs() < 1e-5);
    }

    #[test]
    fn bracket_expands_both_ways() {
        let (lo, hi) = bracket_increasing_positive(|y: f64| y.ln() - 20.0, 1.0, 4.0, 200).unwrap();
        assert!(lo <= 20f64.exp() && hi >= 20f64.exp());
        let (lo, hi) = bracket_increasing_positive(|y: f64| y.ln() + 20.0, 1.0, 4.0, 200).unwrap();
        assert!(lo <= (-20f64).exp() && hi >= (-20f64).exp());
    }
}
