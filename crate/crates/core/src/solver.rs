//! Closed forms for the optimal terminal wealth, the wealth process and the
//! optimal portfolio under a concave piecewise HARA utility.
//!
//! Everything is expressed through `z = y xi_t`: wealth and portfolio depend on
//! the state only through this product. Probabilities use the `d`-transform
//! `d(w, s) = -(log w + (r + |theta|^2/2) tau) / (|theta| sqrt(tau)) + s |theta| sqrt(tau)`
//! evaluated at `w = gamma / z`.

use crate::error::{PharaError, Result};
use crate::market::MarketParams;
use crate::normal::{interval_prob, ln_interval_prob, pdf};
use crate::phara::{HaraKind, PharaUtility, Side};
use crate::root::{bracket_increasing_positive, find_root, find_root_log, RootOptions};
use serde::Serialize;

/// Date-dependent constants of the closed forms.
#[derive(Debug, Clone, Copy)]
pub struct Horizon {
    pub tau: f64,
    pub r: f64,
    pub theta: f64,
    /// `|theta| sqrt(tau)`.
    pub vol: f64,
    /// `exp(-r tau)`.
    pub disc: f64,
}

impl Horizon {
    pub fn new(m: &MarketParams, t: f64) -> Result<Self> {
        let tau = m.time_to_go(t)?;
        Ok(Self::from_tau(m, tau))
    }

    pub fn from_tau(m: &MarketParams, tau: f64) -> Self {
        Horizon { tau, r: m.r, theta: m.theta_norm, vol: m.theta_norm * tau.sqrt(), disc: (-m.r * tau).exp() }
    }

    /// `d(w, s)` with `w` given by its logarithm; `log w = +inf` maps to `-inf`.
    pub fn d_ln(&self, ln_w: f64, s: f64) -> f64 {
        if ln_w == f64::INFINITY {
            f64::NEG_INFINITY
        } else if ln_w == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            -(ln_w + (self.r + 0.5 * self.theta * self.theta) * self.tau) / self.vol + s * self.vol
        }
    }

    fn d1(&self, gamma: f64, ln_z: f64) -> f64 {
        self.d_ln(ln_ratio(gamma, ln_z), 1.0)
    }
}

/// `log(gamma / z)` with the conventions `gamma = inf` and `gamma = 0`.
fn ln_ratio(gamma: f64, ln_z: f64) -> f64 {
    if gamma == f64::INFINITY {
        f64::INFINITY
    } else if gamma == 0.0 {
        f64::NEG_INFINITY
    } else {
        gamma.ln() - ln_z
    }
}

/// `d(z, s)` at date `t`.
pub fn d_transform(z: f64, s: f64, market: &MarketParams, t: f64) -> Result<f64> {
    Ok(Horizon::new(market, t)?.d_ln(z.ln(), s))
}

/// `d_1` written directly: `-(log z + (r - |theta|^2/2) tau) / (|theta| sqrt(tau))`.
pub fn d1_direct(z: f64, market: &MarketParams, t: f64) -> Result<f64> {
    let h = Horizon::new(market, t)?;
    Ok(-(z.ln() + (h.r - 0.5 * h.theta * h.theta) * h.tau) / h.vol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelMoments {
    /// `E[xi_T 1] / xi_t`.
    pub first: f64,
    /// `E[xi_T^(1 - 1/R) 1] / xi_t`.
    pub power: f64,
    /// `E[xi_T log xi_T 1] / xi_t`.
    pub log: f64,
}

/// Moments of the terminal kernel restricted to `{y xi_T in (a, b)}`,
/// conditional on `xi_t`.
pub fn truncated_kernel_moments(a: f64, b: f64, market: &MarketParams, t: f64, xi_t: f64, y: f64, r_k: f64) -> Result<KernelMoments> {
    let h = Horizon::new(market, t)?;
    if !(b > a) {
        return Ok(KernelMoments { first: 0.0, power: 0.0, log: 0.0 });
    }
    let ln_z = y.ln() + xi_t.ln();
    let (da, db) = (h.d1(a, ln_z), h.d1(b, ln_z));
    let prob1 = interval_prob(db, da);
    let first = h.disc * prob1;
    let p = 1.0 - 1.0 / r_k;
    let mu = (h.r + 0.5 * h.theta * h.theta) * h.tau;
    let (pa, pb) = (h.d_ln(ln_ratio(a, ln_z), p), h.d_ln(ln_ratio(b, ln_z), p));
    let power = ((p - 1.0) * xi_t.ln() - p * mu + 0.5 * p * p * h.vol * h.vol + ln_interval_prob(pb, pa)).exp();
    let log = (xi_t.ln() - mu) * first - h.vol * h.disc * (pdf(db) - pdf(da) - h.vol * prob1);
    Ok(KernelMoments { first, power, log })
}

/// `X_T*` for `y xi_T = s`; on ties the left end of the argmax set.
pub fn optimal_terminal_wealth(env: &PharaUtility, y: f64, xi_t: f64) -> f64 {
    terminal_at(env, y * xi_t)
}

pub fn terminal_at(env: &PharaUtility, s: f64) -> f64 {
    let pieces = env.pieces();
    for (k, p) in pieces.iter().enumerate() {
        if s >= env.gamma_plus(k) {
            return p.a_lo;
        }
        if s > env.gamma_minus(k + 1) {
            return p.inverse_marginal(s).clamp(p.a_lo, p.a_hi);
        }
    }
    pieces.last().map_or(f64::NAN, |p| p.a_hi)
}

/// The five wealth terms of one piece.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PieceWealth {
    pub xd: f64,
    pub xa: f64,
    pub xabar: f64,
    pub xr: f64,
    pub xrbar: f64,
}

impl PieceWealth {
    pub fn sum(&self) -> f64 {
        self.xd + self.xa + self.xabar + self.xr + self.xrbar
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthDecomposition {
    pub pieces: Vec<PieceWealth>,
    pub total: f64,
}

/// Kink weights `p_k` and interval weights `q_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

pub fn weights_at(env: &PharaUtility, h: &Horizon, ln_z: f64) -> WeightVector {
    let n = env.pieces().len();
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for k in 0..n {
        let (gp, gm, gnext) = (env.gamma_plus(k), env.gamma_minus(k), env.gamma_minus(k + 1));
        p.push(interval_prob(h.d1(gm, ln_z), h.d1(gp, ln_z)));
        q.push(interval_prob(h.d1(gp, ln_z), h.d1(gnext, ln_z)));
    }
    WeightVector { p, q }
}

pub fn weights(env: &PharaUtility, market: &MarketParams, y: f64, t: f64, xi_t: f64) -> Result<WeightVector> {
    Ok(weights_at(env, &Horizon::new(market, t)?, y.ln() + xi_t.ln()))
}

pub fn wealth_at(env: &PharaUtility, h: &Horizon, ln_z: f64) -> WealthDecomposition {
    let w = weights_at(env, h, ln_z);
    let mut pieces = Vec::with_capacity(env.pieces().len());
    for (k, piece) in env.pieces().iter().enumerate() {
        let (gp, gnext) = (env.gamma_plus(k), env.gamma_minus(k + 1));
        let mut term = PieceWealth::default();
        if w.p[k] > 0.0 {
            term.xd = h.disc * piece.a_lo * w.p[k];
        }
        match piece.kind {
            HaraKind::Linear => {}
            HaraKind::Power { r, a } => {
                term.xa = h.disc * a * w.q[k];
                let s = 1.0 - 1.0 / r;
                let lo = h.d_ln(ln_ratio(gp, ln_z), s);
                let hi = h.d_ln(ln_ratio(gnext, ln_z), s);
                let growth = -s * (h.r + 0.5 * h.theta * h.theta) * h.tau + 0.5 * s * s * h.vol * h.vol;
                let ln_mag = (piece.anchor.gamma.ln() - ln_z) / r + growth + ln_interval_prob(lo, hi);
                term.xr = (piece.anchor.x - a) * ln_mag.exp();
            }
            HaraKind::Exponential { alpha } => {
                let shift = (ln_ratio(gp, ln_z) + (h.r - 0.5 * h.theta * h.theta) * h.tau) / alpha;
                term.xabar = h.disc * (piece.a_lo + shift) * w.q[k];
                term.xrbar = h.disc * (-h.vol / alpha) * (pdf(h.d1(gnext, ln_z)) - pdf(h.d1(gp, ln_z)));
            }
        }
        pieces.push(term);
    }
    let total = pieces.iter().map(PieceWealth::sum).sum();
    WealthDecomposition { pieces, total }
}

pub fn wealth_process(env: &PharaUtility, market: &MarketParams, y: f64, t: f64, xi_t: f64) -> Result<WealthDecomposition> {
    Ok(wealth_at(env, &Horizon::new(market, t)?, y.ln() + xi_t.ln()))
}

/// Scalar `c` with `pi = (sigma^T)^{-1} theta c`.
pub fn portfolio_scale_at(env: &PharaUtility, h: &Horizon, ln_z: f64) -> f64 {
    let wealth = wealth_at(env, h, ln_z);
    let w = weights_at(env, h, ln_z);
    let mut c = 0.0;
    for (k, piece) in env.pieces().iter().enumerate() {
        c += match piece.kind {
            HaraKind::Power { r, .. } => wealth.pieces[k].xr / r,
            HaraKind::Linear => h.disc * (piece.a_hi - piece.a_lo) / h.vol * pdf(h.d1(env.gamma_plus(k), ln_z)),
            HaraKind::Exponential { alpha } => h.disc * w.q[k] / alpha,
        };
    }
    c
}

fn along(market: &MarketParams, c: f64) -> Vec<f64> {
    market.direction.iter().map(|d| d * c).collect()
}

pub fn portfolio_general(env: &PharaUtility, market: &MarketParams, y: f64, t: f64, xi_t: f64) -> Result<Vec<f64>> {
    let h = Horizon::new(market, t)?;
    Ok(along(market, portfolio_scale_at(env, &h, y.ln() + xi_t.ln())))
}

/// Four-term split of the optimal portfolio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioDecomposition {
    pub merton: Vec<f64>,
    pub risk_seeking: Vec<f64>,
    pub loss_aversion: Vec<f64>,
    pub first_order_ra: Vec<f64>,
    pub total: Vec<f64>,
    pub wealth: f64,
    /// `total / wealth`, absent at zero wealth.
    pub percentage: Option<Vec<f64>>,
}

/// Scalar coefficients of the four terms along `(sigma^T)^{-1} theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnifiedScales {
    pub merton: f64,
    pub risk_seeking: f64,
    pub loss_aversion: f64,
    pub first_order_ra: f64,
    pub wealth: f64,
}

impl UnifiedScales {
    pub fn total(&self) -> f64 {
        self.merton + self.risk_seeking + self.loss_aversion + self.first_order_ra
    }
}

/// The common relative risk aversion of all curved pieces.
pub fn common_risk_aversion(env: &PharaUtility) -> Result<f64> {
    let mut common: Option<f64> = None;
    for (k, p) in env.pieces().iter().enumerate() {
        match p.kind {
            HaraKind::Linear => {}
            HaraKind::Exponential { .. } => {
                return Err(PharaError::HeterogeneousRisk(format!("piece {k} is exponential")));
            }
            HaraKind::Power { r, .. } => match common {
                None => common = Some(r),
                Some(c) if c == r => {}
                Some(c) => {
                    return Err(PharaError::HeterogeneousRisk(format!("risk aversions {c} and {r} both present")));
                }
            },
        }
    }
    common.ok_or_else(|| PharaError::HeterogeneousRisk("no curved piece".into()))
}

pub fn unified_scales_at(env: &PharaUtility, h: &Horizon, ln_z: f64) -> Result<UnifiedScales> {
    let r = common_risk_aversion(env)?;
    let wealth = wealth_at(env, h, ln_z).total;
    let w = weights_at(env, h, ln_z);
    let (mut rs, mut la, mut fo) = (0.0, 0.0, 0.0);
    for (k, piece) in env.pieces().iter().enumerate() {
        match piece.kind {
            HaraKind::Linear => rs += (piece.a_hi - piece.a_lo) * pdf(h.d1(env.gamma_plus(k), ln_z)),
            HaraKind::Power { a, .. } => la += a * w.q[k],
            HaraKind::Exponential { .. } => {}
        }
        if w.p[k] > 0.0 {
            fo += piece.a_lo * w.p[k];
        }
    }
    Ok(UnifiedScales {
        merton: wealth / r,
        risk_seeking: h.disc / (h.tau.sqrt() * h.theta) * rs,
        loss_aversion: -h.disc / r * la,
        first_order_ra: -h.disc / r * fo,
        wealth,
    })
}

pub fn portfolio_unified(env: &PharaUtility, market: &MarketParams, y: f64, t: f64, xi_t: f64) -> Result<PortfolioDecomposition> {
    let h = Horizon::new(market, t)?;
    let s = unified_scales_at(env, &h, y.ln() + xi_t.ln())?;
    let total = along(market, s.total());
    let percentage = (s.wealth != 0.0).then(|| total.iter().map(|v| v / s.wealth).collect());
    Ok(PortfolioDecomposition {
        merton: along(market, s.merton),
        risk_seeking: along(market, s.risk_seeking),
        loss_aversion: along(market, s.loss_aversion),
        first_order_ra: along(market, s.first_order_ra),
        total,
        wealth: s.wealth,
        percentage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualSolution {
    pub y_star: f64,
    pub budget_residual: f64,
    pub bracket: (f64, f64),
    pub x0: f64,
    pub feasible_floor: f64,
}

/// Initial cost of the optimal claim for multiplier `y`.
pub fn budget(env: &PharaUtility, market: &MarketParams, y: f64) -> f64 {
    wealth_at(env, &Horizon::from_tau(market, market.horizon), y.ln()).total
}

/// The multiplier `y*` with `E[xi_T X_T*] = x0`.
pub fn solve_multiplier(env: &PharaUtility, market: &MarketParams, x0: f64) -> Result<DualSolution> {
    env.check_solver_ready()?;
    let floor = (-market.r * market.horizon).exp() * env.a0();
    if !(x0 > floor + 1e-12) {
        return Err(PharaError::InfeasibleBudget { x0, floor });
    }
    let gap = |y: f64| x0 - budget(env, market, y);
    let grown = x0 * (market.r * market.horizon).exp();
    let start = env
        .eval_deriv(grown.max(env.a0()), Side::Right)
        .ok()
        .filter(|s| s.is_finite() && *s > 0.0)
        .unwrap_or(1.0);
    let (lo, hi) = bracket_increasing_positive(gap, start, 4.0, 200).map_err(|e| match e {
        PharaError::NoConvergence(m) if m.contains("lower") => {
            PharaError::UnboundedDemand(format!("budget stays below {x0} as y -> 0"))
        }
        other => other,
    })?;
    let tol = 1e-10 * x0.abs().max(1.0);
    let opts = RootOptions { x_tol: 1e-15, f_tol: 0.25 * tol, max_iter: 400 };
    let y_star = find_root_log(gap, lo, hi, opts)?;
    let residual = budget(env, market, y_star) - x0;
    if residual.abs() > tol {
        return Err(PharaError::NoConvergence(format!("budget residual {residual:e} at y = {y_star}")));
    }
    Ok(DualSolution { y_star, budget_residual: residual, bracket: (lo, hi), x0, feasible_floor: floor })
}

/// `log z` at which the optimal wealth equals `x`, or `None` at or below
/// the discounted floor.
pub fn state_for_wealth(env: &PharaUtility, h: &Horizon, x: f64) -> Result<Option<f64>> {
    if !(x > h.disc * env.a0()) {
        return Ok(None);
    }
    // Wealth decreases in z; search on log z.
    let f = |lz: f64| wealth_at(env, h, lz).total - x;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut n = 0;
    while f(lo) < 0.0 {
        lo -= 2.0 * (hi - lo);
        n += 1;
        if n > 60 {
            return Err(PharaError::NoConvergence(format!("no state reaches wealth {x}")));
        }
    }
    while f(hi) > 0.0 {
        hi += 2.0 * (hi - lo);
        n += 1;
        if n > 120 {
            return Err(PharaError::NoConvergence(format!("no state reaches wealth {x}")));
        }
    }
    let opts = RootOptions { x_tol: 1e-15, f_tol: 1e-13 * x.abs().max(1.0), max_iter: 400 };
    Ok(Some(find_root(f, lo, hi, opts)?))
}

/// Portfolio scale at wealth `x`; zero at or below the discounted floor.
pub fn portfolio_scale_at_wealth(env: &PharaUtility, h: &Horizon, x: f64) -> Result<f64> {
    Ok(match state_for_wealth(env, h, x)? {
        Some(ln_z) => portfolio_scale_at(env, h, ln_z),
        None => 0.0,
    })
}

/// SAHARA comparison portfolio (one risky asset).
pub fn sahara_portfolio(market: &MarketParams, alpha: f64, beta: f64, t: f64, x: f64) -> Result<Vec<f64>> {
    if market.dim() != 1 {
        return Err(PharaError::BadDimension("SAHARA comparison needs one risky asset".into()));
    }
    let tau = market.time_to_go(t)?;
    let theta = market.theta[0];
    let b = beta * (-(market.r - theta * theta / (2.0 * alpha * alpha)) * tau).exp();
    Ok(vec![theta / (alpha * market.sigma[(0, 0)]) * x.hypot(b)])
}
