//! Independent numerical oracles for the closed forms: grid argmax, Monte
//! Carlo expectations, finite differences and forward simulation of the
//! wealth equation.

use crate::concavify::concave_envelope;
use crate::error::{PharaError, Result};
use crate::market::MarketParams;
use crate::phara::{builders, PharaUtility, Side};
use crate::rng::PathRng;
use crate::solver::{self, Horizon};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub computed: Vec<f64>,
    pub oracle: Vec<f64>,
    /// One tolerance per entry.
    pub tolerance: Vec<f64>,
    /// Tolerances scale with `|oracle|` when set.
    pub relative: bool,
    pub pass: bool,
    pub samples: usize,
    pub seed: Option<u64>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>, computed: Vec<f64>, oracle: Vec<f64>, tolerance: Vec<f64>, relative: bool, samples: usize, seed: Option<u64>) -> Self {
        let pass = computed.len() == oracle.len()
            && tolerance.len() == oracle.len()
            && computed.iter().zip(&oracle).zip(&tolerance).all(|((c, o), t)| {
                let bound = if relative { t * o.abs() } else { *t };
                (c - o).abs() <= bound
            });
        VerificationReport { name: name.into(), computed, oracle, tolerance, relative, pass, samples, seed }
    }

    pub fn max_error(&self) -> f64 {
        self.computed.iter().zip(&self.oracle).map(|(c, o)| (c - o).abs()).fold(0.0, f64::max)
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

const GOLDEN_STEPS: usize = 40;
pub const ARGMAX_GRID: usize = 10_000;

/// Upper end of the search grid: beyond every partition point and far enough
/// that the marginal utility is below a tenth of `s`.
pub fn argmax_upper(u: &PharaUtility, s: f64) -> f64 {
    let a0 = u.a0();
    let last = u.partition().iter().copied().filter(|x| x.is_finite()).fold(a0, f64::max);
    let mut x = last + 1.0 + last.abs();
    for _ in 0..400 {
        match u.eval_deriv(x, Side::Right) {
            Ok(g) if g < 0.1 * s => break,
            _ => x = a0 + 2.0 * (x - a0),
        }
    }
    x
}

/// Grid nodes on `[a0, x_max]`, log-spaced in distance from `a0`, with the
/// partition points added.
fn argmax_grid(u: &PharaUtility, x_max: f64, n: usize) -> Vec<f64> {
    let a0 = u.a0();
    let span = (x_max - a0).max(1e-12);
    let unit = (span / 1e4).min(1e-3 * (1.0 + a0.abs()));
    let top = (span / unit).ln_1p();
    let mut xs: Vec<f64> = (0..n).map(|i| a0 + unit * (top * i as f64 / (n - 1) as f64).exp_m1()).collect();
    xs.extend(u.partition().iter().copied().filter(|x| x.is_finite() && *x <= x_max));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// `argmax_x U(x) - s x` on a grid plus golden-section refinement, with the
/// local grid spacing at the maximiser.
pub fn argmax_with_spacing(u: &PharaUtility, s: f64, x_max: f64, n: usize) -> (f64, f64) {
    let obj = |x: f64| u.eval(x).map_or(f64::NEG_INFINITY, |v| v - s * x);
    let xs = argmax_grid(u, x_max, n);
    let vals: Vec<f64> = xs.iter().map(|&x| obj(x)).collect();
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    let (lo, hi) = (xs[best.saturating_sub(1)], xs[(best + 1).min(xs.len() - 1)]);
    let spacing = hi - lo;
    let (mut a, mut b) = (lo, hi);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - ratio * (b - a), a + ratio * (b - a));
    let (mut fc, mut fd) = (obj(c), obj(d));
    for _ in 0..GOLDEN_STEPS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = obj(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut x = xs[best];
    let mut v = best_v;
    for cand in [mid, c, d] {
        let w = obj(cand);
        if w > v {
            x = cand;
            v = w;
        }
    }
    (x, spacing)
}

pub fn argmax_oracle(u: &PharaUtility, y: f64, xi_t: f64) -> f64 {
    let s = y * xi_t;
    argmax_with_spacing(u, s, argmax_upper(u, s), ARGMAX_GRID).0
}

/// Closed-form terminal wealth vs grid argmax of `target` (raw or envelope)
/// for `n_draws` random multiplier states, skipping chord tie slopes.
pub fn argmax_check(name: &str, target: &PharaUtility, env: &PharaUtility, n_draws: usize, seed: u64) -> VerificationReport {
    let ties: Vec<f64> = (0..env.pieces().len())
        .filter(|&k| matches!(env.pieces()[k].kind, crate::phara::HaraKind::Linear))
        .map(|k| env.gamma_plus(k))
        .collect();
    let mut rng = PathRng::new(seed, 0);
    let mut states = Vec::with_capacity(n_draws);
    // Slopes spread over the range the envelope actually uses.
    let (s_hi, s_lo) = {
        let first = env.gamma_plus(0);
        let last_kink = env.partition().iter().copied().filter(|x| x.is_finite()).fold(env.a0(), f64::max);
        let tail = env.eval_deriv(last_kink + 1.0 + last_kink.abs(), Side::Right).unwrap_or(1e-3);
        (if first.is_finite() { 4.0 * first } else { 1e3 }, 0.25 * tail)
    };
    while states.len() < n_draws {
        let s = (s_lo.ln() + (s_hi / s_lo).ln() * rng.uniform()).exp();
        if ties.iter().all(|g| (s / g - 1.0).abs() > 1e-6) {
            states.push(s);
        }
    }
    let rows: Vec<(f64, f64, f64)> = states
        .par_iter()
        .map(|&s| {
            let (x, spacing) = argmax_with_spacing(target, s, argmax_upper(target, s), ARGMAX_GRID);
            (solver::terminal_at(env, s), x, spacing)
        })
        .collect();
    VerificationReport::new(
        name,
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
        false,
        n_draws,
        Some(seed),
    )
}

/// Monte Carlo `E[xi_T X_T*]` against the closed-form budget.
pub fn mc_budget_check(env: &PharaUtility, market: &MarketParams, y: f64, n_paths: usize, seed: u64) -> Result<VerificationReport> {
    let draws = market.sample_kernel_terminal(0.0, 1.0, n_paths, seed)?;
    let vals: Vec<f64> = draws.par_iter().map(|&xi| xi * solver::optimal_terminal_wealth(env, y, xi)).collect();
    let (mean, se) = mean_se(&vals);
    Ok(VerificationReport::new("mc_budget", vec![mean], vec![solver::budget(env, market, y)], vec![3.0 * se], false, n_paths, Some(seed)))
}

/// Monte Carlo `E[xi_t X_t*]` against `target` (the initial wealth).
pub fn martingale_check(env: &PharaUtility, market: &MarketParams, y: f64, target: f64, t: f64, n_paths: usize, seed: u64) -> Result<VerificationReport> {
    let h = Horizon::new(market, t)?;
    let drift = -(market.r + 0.5 * market.theta_norm.powi(2)) * t;
    let vol = market.theta_norm * t.sqrt();
    let vals: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let ln_xi = drift - vol * PathRng::new(seed, i as u64).normal();
            ln_xi.exp() * solver::wealth_at(env, &h, y.ln() + ln_xi).total
        })
        .collect();
    let (mean, se) = mean_se(&vals);
    Ok(VerificationReport::new(format!("martingale_t{t}"), vec![mean], vec![target], vec![3.0 * se], false, n_paths, Some(seed)))
}

/// Kernel-weighted mass of terminal wealth sitting exactly on each kink,
/// `E[e^{rT} xi_T 1{X_T* = a_k}]`, vs the kink weights `p_k` at `t = 0`.
pub fn atom_mass_check(env: &PharaUtility, market: &MarketParams, y: f64, n_paths: usize, seed: u64) -> Result<VerificationReport> {
    let draws = market.sample_kernel_terminal(0.0, 1.0, n_paths, seed)?;
    let w = solver::weights(env, market, y, 0.0, 1.0)?;
    let growth = (market.r * market.horizon).exp();
    let (mut computed, mut oracle, mut tol) = (Vec::new(), Vec::new(), Vec::new());
    for (k, p) in env.pieces().iter().enumerate() {
        if w.p[k] == 0.0 {
            continue;
        }
        let a = p.a_lo;
        let vals: Vec<f64> = draws
            .par_iter()
            .map(|&xi| if solver::optimal_terminal_wealth(env, y, xi) == a { growth * xi } else { 0.0 })
            .collect();
        let (mean, se) = mean_se(&vals);
        computed.push(mean);
        oracle.push(w.p[k]);
        tol.push(3.0 * se + 1.0 / n_paths as f64);
    }
    Ok(VerificationReport::new("atom_mass", computed, oracle, tol, false, n_paths, Some(seed)))
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;
pub const FD_TOL_NEAR_KINK: f64 = 1e-4;
pub const FD_NOISE: f64 = 1e-9;

/// Portfolio scale `c` from a central difference of wealth in `log xi`.
fn fd_scale(env: &PharaUtility, h: &Horizon, ln_z: f64, step: f64) -> f64 {
    let up = solver::wealth_at(env, h, ln_z + step).total;
    let down = solver::wealth_at(env, h, ln_z - step).total;
    -(up - down) / (2.0 * step)
}

/// Closed-form portfolio vs `-(sigma^T)^{-1} theta xi dX/dxi` by finite
/// differences. Points where the two-step truncation estimate exceeds
/// `0.1 FD_TOL` are declared near-kink and use the looser tolerance. The
/// bound is `tol |fd| + FD_NOISE |X_t|` per asset, the second term covering
/// cancellation in the difference quotient.
pub fn fd_portfolio_check(env: &PharaUtility, market: &MarketParams, y: f64, t: f64, xi_t: f64, step: f64) -> Result<VerificationReport> {
    let h = Horizon::new(market, t)?;
    let ln_z = y.ln() + xi_t.ln();
    let closed = solver::portfolio_scale_at(env, &h, ln_z);
    let fd = fd_scale(env, &h, ln_z, step);
    let coarse = fd_scale(env, &h, ln_z, 2.0 * step);
    let wealth = solver::wealth_at(env, &h, ln_z).total;
    let near_kink = (coarse - fd).abs() > 0.1 * FD_TOL * fd.abs() + FD_NOISE * wealth.abs();
    let tol = if near_kink { FD_TOL_NEAR_KINK } else { FD_TOL };
    let computed: Vec<f64> = market.direction.iter().map(|d| d * closed).collect();
    let oracle: Vec<f64> = market.direction.iter().map(|d| d * fd).collect();
    let bounds = market.direction.iter().map(|d| d.abs() * (tol * fd.abs() + FD_NOISE * wealth.abs())).collect();
    let name = format!("fd_portfolio_t{t}_xi{xi_t}{}", if near_kink { "_near_kink" } else { "" });
    Ok(VerificationReport::new(name, computed, oracle, bounds, false, 1, None))
}

/// Euler scheme for the wealth equation under the closed-form feedback
/// strategy, compared pathwise with the optimal terminal wealth driven by the
/// same Brownian increments. The portfolio is evaluated at the exact kernel
/// state. Reports the RMS gap (computed) against zero.
pub fn simulate_strategy(env: &PharaUtility, market: &MarketParams, x0: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<VerificationReport> {
    if n_steps < 10 {
        return Err(PharaError::StepTooCoarse(n_steps));
    }
    let sol = solver::solve_multiplier(env, market, x0)?;
    let ln_y = sol.y_star.ln();
    let dt = market.horizon / n_steps as f64;
    let th = market.theta_norm;
    let horizons: Vec<Horizon> = (0..n_steps).map(|i| Horizon::from_tau(market, market.horizon - i as f64 * dt)).collect();
    let gaps: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(seed, p as u64);
            let (mut x, mut ln_xi) = (x0, 0.0);
            for h in &horizons {
                let db = dt.sqrt() * rng.normal();
                let c = solver::portfolio_scale_at(env, h, ln_y + ln_xi);
                x += (market.r * x + c * th * th) * dt + c * th * db;
                ln_xi += -(market.r + 0.5 * th * th) * dt - th * db;
            }
            let target = solver::terminal_at(env, (ln_y + ln_xi).exp());
            (x - target).powi(2)
        })
        .collect();
    let rms = (gaps.iter().sum::<f64>() / n_paths as f64).sqrt();
    Ok(VerificationReport::new(format!("simulate_steps{n_steps}"), vec![rms], vec![0.0], vec![f64::INFINITY], false, n_paths, Some(seed)))
}

/// Ratio of RMS gaps when the step count is quadrupled; expected near 2.
pub fn simulation_order_check(env: &PharaUtility, market: &MarketParams, x0: f64, n_paths: usize, coarse: usize, seed: u64) -> Result<VerificationReport> {
    let a = simulate_strategy(env, market, x0, n_paths, coarse, seed)?.computed[0];
    let b = simulate_strategy(env, market, x0, n_paths, 4 * coarse, seed)?.computed[0];
    Ok(VerificationReport::new("simulation_order", vec![a / b], vec![2.0], vec![0.3], true, n_paths, Some(seed)))
}

/// Checks for one utility: budget and martingale Monte Carlo, kink atoms,
/// finite-difference portfolios and the argmax oracle.
pub fn utility_suite(label: &str, raw: &PharaUtility, market: &MarketParams, x0: f64, n_paths: usize, seed: u64) -> Result<Vec<VerificationReport>> {
    let env = concave_envelope(raw)?.envelope;
    let sol = solver::solve_multiplier(&env, market, x0)?;
    let y = sol.y_star;
    let tag = |mut r: VerificationReport| {
        r.name = format!("{label}/{}", r.name);
        r
    };
    let mut out = vec![tag(mc_budget_check(&env, market, y, n_paths, seed)?)];
    for frac in [0.25, 0.5, 0.75] {
        out.push(tag(martingale_check(&env, market, y, x0, frac * market.horizon, n_paths, seed)?));
    }
    out.push(tag(atom_mass_check(&env, market, y, n_paths, seed)?));
    for &t in &[0.0, 0.5 * market.horizon, 0.9 * market.horizon] {
        for &xi in &[0.5, 1.0, 2.0] {
            out.push(tag(fd_portfolio_check(&env, market, y, t, xi, FD_STEP)?));
        }
    }
    out.push(tag(argmax_check("argmax_raw", raw, &env, 200, seed)));
    Ok(out)
}

/// The default suite over the built-in fixtures.
pub fn default_suite(market: &MarketParams, n_paths: usize, seed: u64) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    out.extend(utility_suite("crra", &builders::crra(0.5), market, 10.0, n_paths, seed)?);
    out.extend(utility_suite("demo", &builders::demo(), market, 10.0, n_paths, seed)?);
    out.extend(utility_suite("participating", &builders::participating_raw(0.5, 0.4, 0.3, 1.0)?, market, 1.5, n_paths, seed)?);
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
