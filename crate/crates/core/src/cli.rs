//! Command-line front end: reads a scenario, runs one command and writes
//! JSON and CSV files into the output directory.

use crate::concavify::{concave_envelope, Chord};
use crate::error::{PharaError, Result};
use crate::market::MarketParams;
use crate::phara::{PharaUtility, UtilitySpec};
use crate::scenario::Scenario;
use crate::solver::{self, Horizon, PortfolioDecomposition, WealthDecomposition, WeightVector};
use crate::verify::{self, VerificationReport};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "phara", version, about = "Optimal portfolios for piecewise HARA utilities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Output directory; overrides the scenario's `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo path count.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Number of grid points for curves and surfaces.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Concave envelope table and curve.
    Envelope,
    /// Lagrange multiplier of the budget equation.
    Solve,
    /// Portfolio decomposition swept over wealth.
    Surface,
    /// Portfolio and wealth decomposition at one point.
    Decompose,
    /// Oracle checks of the closed forms.
    Verify,
    /// Forward simulation under the optimal strategy.
    Simulate,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

const SIM_STEPS: usize = 250;
const SIM_PATHS: usize = 10_000;

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

struct Job {
    scenario: Scenario,
    market: MarketParams,
    raw: PharaUtility,
    out: PathBuf,
    paths_overridden: bool,
}

impl Job {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)?;
        println!("{}", path.display());
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn envelope(&self) -> Result<PharaUtility> {
        Ok(concave_envelope(&self.raw)?.envelope)
    }

    fn wealth_max(&self) -> f64 {
        self.scenario.grids.wealth_max.unwrap_or_else(|| default_wealth_max(&self.raw, self.scenario.x0, self.market.r * self.market.horizon))
    }
}

fn default_wealth_max(u: &PharaUtility, x0: f64, growth: f64) -> f64 {
    let a0 = u.a0();
    let last = u.partition().iter().copied().filter(|x| x.is_finite()).fold(a0, f64::max);
    let reach = (x0 * growth.exp()).max(last);
    a0 + 2.0 * (reach - a0).max(1.0)
}

pub fn execute(cli: &Cli) -> Result<bool> {
    let path = cli.scenario.as_ref().ok_or_else(|| PharaError::Scenario("--scenario is required".into()))?;
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    if let Some(paths) = cli.paths {
        if paths < 2 {
            return Err(PharaError::Scenario("--paths must be at least 2".into()));
        }
        scenario.paths = paths;
    }
    if let Some(grid) = cli.grid {
        if grid < 2 {
            return Err(PharaError::Scenario("--grid must be at least 2".into()));
        }
        scenario.grids.points = grid;
    }
    let out = cli.out.clone().or_else(|| scenario.out_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let job = Job { market: scenario.market()?, raw: scenario.utility()?, scenario, out, paths_overridden: cli.paths.is_some() };
    match cli.command {
        Command::Envelope => cmd_envelope(&job),
        Command::Solve => cmd_solve(&job),
        Command::Surface => cmd_surface(&job),
        Command::Decompose => cmd_decompose(&job),
        Command::Verify => cmd_verify(&job),
        Command::Simulate => cmd_simulate(&job),
    }
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_row(out: &mut String, vals: &[f64]) {
    let row: Vec<String> = vals.iter().map(|&v| fmt_num(v)).collect();
    let _ = writeln!(out, "{}", row.join(","));
}

#[derive(Serialize)]
struct EnvelopeFile {
    kinks: Vec<f64>,
    tangency_points: Vec<f64>,
    chords: Vec<Chord>,
    envelope: UtilitySpec,
}

fn cmd_envelope(job: &Job) -> Result<bool> {
    let res = concave_envelope(&job.raw)?;
    job.write_json(
        "envelope.json",
        &EnvelopeFile {
            kinks: res.envelope.kinks(),
            tangency_points: res.tangency_points.clone(),
            chords: res.new_chords().copied().collect(),
            envelope: UtilitySpec::from_utility(&res.envelope),
        },
    )?;
    let (a0, hi) = (job.raw.a0(), job.wealth_max());
    let n = job.scenario.grids.points;
    let mut csv = String::from("x,U,U_envelope\n");
    for i in 0..n {
        let x = a0 + (hi - a0) * i as f64 / (n - 1) as f64;
        csv_row(&mut csv, &[x, job.raw.eval(x)?, res.envelope.eval(x)?]);
    }
    job.write("envelope_curve.csv", &csv)?;
    Ok(true)
}

fn cmd_solve(job: &Job) -> Result<bool> {
    let sol = solver::solve_multiplier(&job.envelope()?, &job.market, job.scenario.x0)?;
    job.write_json("solution.json", &sol)?;
    Ok(true)
}

pub const SURFACE_HEADER: &str = "t,x,xi,percentage,merton,risk_seeking,loss_aversion,first_order_ra,x_undiscounted";

/// One surface row. Amounts are summed over the risky assets. At the
/// discounted floor the portfolio is set to zero.
fn surface_row(env: &PharaUtility, market: &MarketParams, y: f64, h: &Horizon, t: f64, x_term: f64) -> Result<[f64; 9]> {
    let x = h.disc * x_term;
    let weight: f64 = market.direction.iter().sum();
    let Some(ln_z) = solver::state_for_wealth(env, h, x)? else {
        return Ok([t, x, f64::INFINITY, 0.0, 0.0, 0.0, 0.0, 0.0, x_term]);
    };
    let xi = (ln_z - y.ln()).exp();
    let row = match solver::unified_scales_at(env, h, ln_z) {
        Ok(s) => [t, x, xi, weight * s.total() / x, weight * s.merton, weight * s.risk_seeking, weight * s.loss_aversion, weight * s.first_order_ra, x_term],
        Err(PharaError::HeterogeneousRisk(_)) => {
            let c = solver::portfolio_scale_at(env, h, ln_z);
            [t, x, xi, weight * c / x, f64::NAN, f64::NAN, f64::NAN, f64::NAN, x_term]
        }
        Err(e) => return Err(e),
    };
    Ok(row)
}

fn cmd_surface(job: &Job) -> Result<bool> {
    let env = job.envelope()?;
    let y = solver::solve_multiplier(&env, &job.market, job.scenario.x0)?.y_star;
    let (a0, hi) = (env.a0(), job.wealth_max());
    let n = job.scenario.grids.points;
    let mut csv = String::from(SURFACE_HEADER);
    csv.push('\n');
    for &t in &job.scenario.grids.times {
        let h = Horizon::new(&job.market, t)?;
        let rows: Vec<[f64; 9]> = (0..n)
            .into_par_iter()
            .map(|i| surface_row(&env, &job.market, y, &h, t, a0 + (hi - a0) * i as f64 / (n - 1) as f64))
            .collect::<Result<_>>()?;
        for row in &rows {
            csv_row(&mut csv, row);
        }
    }
    job.write("surface.csv", &csv)?;
    Ok(true)
}

#[derive(Serialize)]
struct DecomposeFile {
    t: f64,
    x: f64,
    xi: f64,
    y_star: f64,
    portfolio: Vec<f64>,
    unified: Option<PortfolioDecomposition>,
    wealth: WealthDecomposition,
    weights: WeightVector,
    sahara: Option<Vec<f64>>,
}

fn cmd_decompose(job: &Job) -> Result<bool> {
    let env = job.envelope()?;
    let y = solver::solve_multiplier(&env, &job.market, job.scenario.x0)?.y_star;
    let p = job.scenario.grids.decompose_at.unwrap_or(crate::scenario::Point { t: 0.0, x: job.scenario.x0 });
    let h = Horizon::new(&job.market, p.t)?;
    let ln_z = solver::state_for_wealth(&env, &h, p.x)?
        .ok_or_else(|| PharaError::Scenario(format!("wealth {} is at or below the discounted floor", p.x)))?;
    let xi = (ln_z - y.ln()).exp();
    let unified = match solver::portfolio_unified(&env, &job.market, y, p.t, xi) {
        Ok(d) => Some(d),
        Err(PharaError::HeterogeneousRisk(_)) => None,
        Err(e) => return Err(e),
    };
    let sahara = match job.scenario.sahara {
        Some(s) if job.market.dim() == 1 => Some(solver::sahara_portfolio(&job.market, s.alpha, s.beta, p.t, p.x)?),
        _ => None,
    };
    job.write_json(
        "decompose.json",
        &DecomposeFile {
            t: p.t,
            x: p.x,
            xi,
            y_star: y,
            portfolio: solver::portfolio_general(&env, &job.market, y, p.t, xi)?,
            unified,
            wealth: solver::wealth_at(&env, &h, ln_z),
            weights: solver::weights_at(&env, &h, ln_z),
            sahara,
        },
    )?;
    Ok(true)
}

fn finish(job: &Job, name: &str, reports: &[VerificationReport]) -> Result<bool> {
    job.write_json(name, reports)?;
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!("FAIL {} (max error {:e})", r.name, r.max_error());
    }
    Ok(reports.iter().all(|r| r.pass))
}

fn cmd_verify(job: &Job) -> Result<bool> {
    let label = if job.scenario.name.is_empty() { "scenario" } else { &job.scenario.name };
    let reports = verify::utility_suite(label, &job.raw, &job.market, job.scenario.x0, job.scenario.paths, job.scenario.seed)?;
    finish(job, "verify.json", &reports)
}

fn cmd_simulate(job: &Job) -> Result<bool> {
    let env = job.envelope()?;
    let paths = if job.paths_overridden { job.scenario.paths } else { SIM_PATHS };
    let (x0, seed) = (job.scenario.x0, job.scenario.seed);
    let reports = vec![
        verify::simulate_strategy(&env, &job.market, x0, paths, SIM_STEPS, seed)?,
        verify::simulate_strategy(&env, &job.market, x0, paths, 4 * SIM_STEPS, seed)?,
        verify::simulation_order_check(&env, &job.market, x0, paths, SIM_STEPS, seed)?,
    ];
    finish(job, "simulate.json", &reports)
}

/// Caps the global thread pool from `PHARA_THREADS` when set.
pub fn init_threads() {
    if let Some(n) = std::env::var("PHARA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
