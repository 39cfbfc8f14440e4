//! Least-squares / damped Newton iteration for the semilinear control
//! problem `y_tt - y_xx + g(y) = f 1_omega`, `(y, y_t)(0) = init`,
//! `(y, y_t)(T) = target`.
//!
//! Pairs `(y, f)` that meet both end conditions are driven towards a zero of
//!
//! ```text
//! E(y, f) = 1/2 |y_tt - y_xx + g(y) - f 1_omega|^2_{L^2(Q_T)}
//! ```
//!
//! along the descent direction `(Y, F)`: the minimal-norm null control of
//! `Y_tt - Y_xx + g'(y) Y = F 1_omega + residual(y, f)`. Since `E'(y,f)(Y,F)
//! = 2E(y,f)`, a line search over `(0, m]` gives a globally convergent
//! iteration which turns quadratic (rate `1+s`) once `lambda` reaches 1.
//!
//! The residual is the leapfrog stencil of [`crate::wave`], so a pair made by
//! a forward solve has residual zero up to rounding at every level `n < nt`.
//! Level `nt` carries no quadrature weight and its residual is stored as 0.

use crate::field::{SpaceTimeField, StatePair};
use crate::grid::Grid;
use crate::hum::{self, HumError, HumOptions, LinearControlProblem};
use crate::nonlinearity::Nonlinearity;
use crate::norms;
use crate::wave::{self, second_difference};
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum LsError {
    #[error("initial pair could not be constructed: {0}")]
    Initialization(#[source] HumError),
    #[error("descent direction failed at iteration {k}: {source}")]
    DescentFailure {
        k: usize,
        #[source]
        source: HumError,
        log: Vec<IterateRecord>,
    },
    #[error("stagnation: E = {e:e} decreased by less than 1% over the last {window} iterations")]
    Stagnation {
        e: f64,
        window: usize,
        log: Vec<IterateRecord>,
    },
    #[error("blow-up at iteration {k}: |y|_inf = {sup:e} exceeds the guard")]
    BlowUp {
        k: usize,
        sup: f64,
        log: Vec<IterateRecord>,
    },
    #[error("{0}")]
    Dimension(String),
    #[error("initial level of y differs from the prescribed initial position")]
    InitialMismatch,
    #[error("rate diagnostics need at least 3 records, got {0}")]
    InsufficientData(usize),
}

impl LsError {
    /// Iterate log collected before the failure, if any.
    pub fn log(&self) -> &[IterateRecord] {
        match self {
            LsError::DescentFailure { log, .. } | LsError::Stagnation { log, .. } | LsError::BlowUp { log, .. } => log,
            _ => &[],
        }
    }
}

/// A state `y` with control `f`, together with the end conditions it is
/// meant to satisfy.
#[derive(Debug, Clone)]
pub struct TrajectoryControlPair {
    pub y: SpaceTimeField,
    pub f: SpaceTimeField,
    pub init: StatePair,
    pub target: StatePair,
}

impl TrajectoryControlPair {
    /// Checks shapes and `y(0) = init.pos`; `f` is restricted to `omega`.
    pub fn new(y: SpaceTimeField, mut f: SpaceTimeField, init: StatePair, target: StatePair) -> Result<Self, LsError> {
        let g = *y.grid();
        if !f.conforms(&y) || !init.conforms(&g) || !target.conforms(&g) {
            return Err(LsError::Dimension("pair components do not conform to one grid".into()));
        }
        if y.level(0) != init.pos.as_slice() {
            return Err(LsError::InitialMismatch);
        }
        f.restrict_to_omega();
        Ok(TrajectoryControlPair { y, f, init, target })
    }

    pub fn grid(&self) -> &Grid {
        self.y.grid()
    }

    /// `V`-norm of `(y(T), y_t(T)) - target`.
    pub fn terminal_miss(&self) -> f64 {
        let end = wave::terminal_state(&self.y);
        norms::v_norm(self.grid(), &end.sub(&self.target))
    }

    pub fn is_admissible(&self, tol: f64) -> bool {
        self.terminal_miss() <= tol
    }

    /// `self - lambda (Y, F)`.
    pub fn step(&self, lambda: f64, d: &Descent) -> TrajectoryControlPair {
        TrajectoryControlPair {
            y: self.y.add_scaled(-lambda, &d.y),
            f: self.f.add_scaled(-lambda, &d.f),
            init: self.init.clone(),
            target: self.target.clone(),
        }
    }
}

/// Linear part of the stencil: `(2/dt^2)(y^1 - y^0) - D y^0` at level 0,
/// `(y^{n+1} - 2y^n + y^{n-1})/dt^2 - D y^n` after, 0 at the last level.
pub fn wave_stencil(y: &SpaceTimeField) -> SpaceTimeField {
    let g = *y.grid();
    let (nx, nt, dt, dx) = (g.nx(), g.nt(), g.dt(), g.dx());
    let mut out = SpaceTimeField::zeros(&g);
    let mut lap = vec![0.0; nx];
    let inv = 1.0 / (dt * dt);
    for n in 0..nt {
        second_difference(y.level(n), dx, &mut lap);
        let cur = y.level(n);
        let next = y.level(n + 1);
        let row = out.level_mut(n);
        if n == 0 {
            for i in 0..nx {
                row[i] = 2.0 * inv * (next[i] - cur[i]) - lap[i];
            }
        } else {
            let prev = y.level(n - 1);
            for i in 0..nx {
                row[i] = inv * (next[i] - 2.0 * cur[i] + prev[i]) - lap[i];
            }
        }
    }
    out
}

/// Everything in the residual that is affine in `(y, f)`, i.e. without `g(y)`.
fn affine_residual(pair: &TrajectoryControlPair) -> SpaceTimeField {
    let g = *pair.grid();
    let mut r = wave_stencil(&pair.y);
    let c = 2.0 / g.dt();
    for (v, u1) in r.level_mut(0).iter_mut().zip(&pair.init.vel) {
        *v -= c * u1;
    }
    let mut f = pair.f.clone();
    f.restrict_to_omega();
    r.axpy(-1.0, &f);
    r.level_mut(g.nt()).iter_mut().for_each(|v| *v = 0.0);
    r
}

/// The field `y_tt - y_xx + g(y) - f 1_omega`.
pub fn residual(pair: &TrajectoryControlPair, nl: &Nonlinearity) -> SpaceTimeField {
    let nt = pair.grid().nt();
    let nx = pair.grid().nx();
    let mut r = affine_residual(pair);
    for (v, y) in r.values_mut()[..nt * nx].iter_mut().zip(pair.y.values()) {
        *v += nl.g(*y);
    }
    r
}

/// `E = 1/2 |residual|^2_{L^2(Q_T)}`.
pub fn error_functional(pair: &TrajectoryControlPair, nl: &Nonlinearity) -> f64 {
    0.5 * norms::l2_qt(&residual(pair, nl)).powi(2)
}

/// Descent direction `(Y, F)` with diagnostics of the inner control solve.
#[derive(Debug, Clone)]
pub struct Descent {
    pub y: SpaceTimeField,
    pub f: SpaceTimeField,
    pub cg_iterations: usize,
    pub terminal_residual: f64,
}

impl Descent {
    /// `(|Y|^2 + |Y_tt - Y_xx|^2 + |F|^2_{q_T})^{1/2}`.
    pub fn norm(&self) -> f64 {
        (norms::l2_qt(&self.y).powi(2)
            + norms::l2_qt(&wave_stencil(&self.y)).powi(2)
            + norms::l2_qt_omega(&self.f).powi(2))
        .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.y.sup_norm() == 0.0 && self.f.sup_norm() == 0.0
    }
}

/// Minimal-norm null control `(Y, F)` of the equation linearized at `y`,
/// driven by the residual of the pair.
pub fn descent_pair(pair: &TrajectoryControlPair, nl: &Nonlinearity, opts: &HumOptions) -> Result<Descent, HumError> {
    let g = pair.grid();
    let problem = LinearControlProblem::new(
        g,
        nl.apply_gprime(&pair.y),
        residual(pair, nl),
        StatePair::zeros(g),
        StatePair::zeros(g),
    )?;
    let sol = hum::minimal_norm_control(&problem, opts)?;
    Ok(Descent {
        y: sol.state,
        f: sol.control,
        cg_iterations: sol.cg_iterations,
        terminal_residual: sol.terminal_residual,
    })
}

/// Parameters of the step-length search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSearchOptions {
    /// Largest admissible step.
    pub m: f64,
    pub grid_points: usize,
    pub golden_iters: usize,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        LineSearchOptions {
            m: 2.0,
            grid_points: 25,
            golden_iters: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub lambda: f64,
    pub e: f64,
    /// The scanned `(lambda, E)` values, in increasing `lambda`.
    pub samples: Vec<(f64, f64)>,
}

/// `lambda -> E(pair - lambda d)` with the affine parts precomputed.
pub struct StepProfile<'a> {
    nl: &'a Nonlinearity,
    grid: Grid,
    base: Vec<f64>,
    slope: Vec<f64>,
    y: &'a [f64],
    dy: &'a [f64],
}

impl<'a> StepProfile<'a> {
    pub fn new(pair: &'a TrajectoryControlPair, nl: &'a Nonlinearity, d: &'a Descent) -> Self {
        let g = *pair.grid();
        let len = g.nt() * g.nx();
        let mut base = affine_residual(pair).into_values();
        base.truncate(len);
        let mut slope = wave_stencil(&d.y);
        let mut f = d.f.clone();
        f.restrict_to_omega();
        slope.axpy(-1.0, &f);
        let mut slope = slope.into_values();
        slope.truncate(len);
        StepProfile {
            nl,
            grid: g,
            base,
            slope,
            y: &pair.y.values()[..len],
            dy: &d.y.values()[..len],
        }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let nx = self.grid.nx();
        let mut total = 0.0;
        for n in 0..self.grid.nt() {
            let w = self.grid.time_weight(n);
            let r = n * nx..(n + 1) * nx;
            let mut s = 0.0;
            for i in r {
                let v = self.base[i] - lambda * self.slope[i] + self.nl.g(self.y[i] - lambda * self.dy[i]);
                s += v * v;
            }
            total += w * s;
        }
        0.5 * self.grid.dx() * total
    }
}

/// Scans `lambda` on a log-spaced grid over `(0, m]` (1 always included) and
/// refines the best bracket by golden section.
///
/// Samples are evaluated in parallel and reduced in index order; exact ties
/// go to the `lambda` closest to 1.
pub fn line_search(
    pair: &TrajectoryControlPair,
    nl: &Nonlinearity,
    d: &Descent,
    opts: &LineSearchOptions,
) -> LineSearchResult {
    let profile = StepProfile::new(pair, nl, d);
    let m = opts.m;
    let n = opts.grid_points.max(2);
    let mut lambdas: Vec<f64> = (0..n)
        .map(|k| m * 10f64.powf(-3.0 * (1.0 - k as f64 / (n - 1) as f64)))
        .collect();
    if !lambdas.contains(&1.0) && m >= 1.0 {
        lambdas.push(1.0);
        lambdas.sort_by(f64::total_cmp);
    }
    let values: Vec<f64> = lambdas.par_iter().map(|&l| profile.eval(l)).collect();
    let samples: Vec<(f64, f64)> = lambdas.iter().copied().zip(values.iter().copied()).collect();

    let better =
        |a: (f64, f64), b: (f64, f64)| -> bool { a.1 < b.1 || (a.1 == b.1 && (a.0 - 1.0).abs() < (b.0 - 1.0).abs()) };
    let mut best_idx = 0;
    for (i, &s) in samples.iter().enumerate().skip(1) {
        if better(s, samples[best_idx]) || samples[best_idx].1.is_nan() {
            best_idx = i;
        }
    }
    let mut best = samples[best_idx];

    let lo = if best_idx == 0 { 0.0 } else { lambdas[best_idx - 1] };
    let hi = if best_idx + 1 < lambdas.len() {
        lambdas[best_idx + 1]
    } else {
        m
    };
    if let Some(g) = golden_section(|l| profile.eval(l), lo, hi, opts.golden_iters) {
        if g.1 < best.1 {
            best = g;
        }
    }
    if best.0 >= 0.99 * m {
        log::warn!("line search saturates at lambda = {} (cap m = {m})", best.0);
    }
    LineSearchResult {
        lambda: best.0,
        e: best.1,
        samples,
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> Option<(f64, f64)> {
    if iters == 0 || !(b > a) {
        return None;
    }
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let best = if fc <= fd { (c, fc) } else { (d, fd) };
    (best.0 > 0.0).then_some(best)
}

/// How the first pair is built.
#[derive(Debug, Clone)]
pub enum InitMode {
    /// Minimal-norm controlled pair of the linear wave equation (`g = 0`).
    LinearStar,
    /// Minimal-norm controlled pair of the equation linearized at 0:
    /// potential `g'(0)`, source `-g(0)`.
    AffineStar,
    User(Box<TrajectoryControlPair>),
}

impl InitMode {
    pub fn name(&self) -> &'static str {
        match self {
            InitMode::LinearStar => "linear_star",
            InitMode::AffineStar => "affine_star",
            InitMode::User(_) => "user",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsConfig {
    pub line_search: LineSearchOptions,
    /// `None` selects `max(1e-12, hum.tol^2)`.
    pub e_tol: Option<f64>,
    pub max_outer: usize,
    pub hum: HumOptions,
    pub init: InitMode,
    /// Bound on `|y_k|_inf` beyond which the run is declared blown up.
    pub blowup_guard: f64,
    /// Forces every step to this length instead of searching (Newton with 1).
    pub fixed_step: Option<f64>,
    /// Increment threshold `|y_{k+1} - y_k|_inf` of the fixed-point baselines.
    pub increment_tol: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        LsConfig {
            line_search: LineSearchOptions::default(),
            e_tol: None,
            max_outer: 50,
            hum: HumOptions::default(),
            init: InitMode::LinearStar,
            blowup_guard: 1e6,
            fixed_step: None,
            increment_tol: 1e-10,
        }
    }
}

impl LsConfig {
    pub fn effective_e_tol(&self) -> f64 {
        self.e_tol.unwrap_or_else(|| (self.hum.tol * self.hum.tol).max(1e-12))
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    #[serde(rename = "E")]
    pub e: f64,
    /// Step taken from this iterate; `None` on the final record.
    pub lambda: Option<f64>,
    pub descent_norm: Option<f64>,
    /// `log E_{k+1} / log E_k` when both are below 1.
    pub rate: Option<f64>,
    pub terminal_miss: f64,
    /// Seconds since the start of the run.
    pub wallclock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LsRun {
    pub pair: TrajectoryControlPair,
    pub log: Vec<IterateRecord>,
    pub outcome: Outcome,
    pub e_tol: f64,
}

/// Builds the starting pair for `mode`.
pub fn initial_pair(
    grid: &Grid,
    init: &StatePair,
    target: &StatePair,
    nl: &Nonlinearity,
    mode: &InitMode,
    opts: &HumOptions,
) -> Result<TrajectoryControlPair, LsError> {
    let (potential, source) = match mode {
        InitMode::User(p) => {
            if !p.grid().same_shape(grid) || p.init != *init || p.target != *target {
                return Err(LsError::Dimension("user pair does not match the scenario".into()));
            }
            return Ok(p.as_ref().clone());
        }
        InitMode::LinearStar => (SpaceTimeField::zeros(grid), SpaceTimeField::zeros(grid)),
        InitMode::AffineStar => (
            SpaceTimeField::constant(grid, nl.gprime(0.0)),
            SpaceTimeField::constant(grid, -nl.g(0.0)),
        ),
    };
    let problem = LinearControlProblem::new(grid, potential, source, init.clone(), target.clone())
        .map_err(LsError::Initialization)?;
    let sol = hum::minimal_norm_control(&problem, opts).map_err(LsError::Initialization)?;
    TrajectoryControlPair::new(sol.state, sol.control, init.clone(), target.clone())
}

const STAGNATION_WINDOW: usize = 5;

/// Runs the least-squares iteration from the pair selected by `cfg.init`.
pub fn solve(
    grid: &Grid,
    init: &StatePair,
    target: &StatePair,
    nl: &Nonlinearity,
    cfg: &LsConfig,
) -> Result<LsRun, LsError> {
    if !grid.t_exceeds_geometric() {
        log::warn!("T does not exceed 2 max(l1, 1 - l2); inner control problems may not converge");
    }
    let start = Instant::now();
    let pair = initial_pair(grid, init, target, nl, &cfg.init, &cfg.hum)?;
    iterate_from(pair, nl, cfg, start)
}

/// Runs the iteration from a given pair.
pub fn iterate_from(
    mut pair: TrajectoryControlPair,
    nl: &Nonlinearity,
    cfg: &LsConfig,
    start: Instant,
) -> Result<LsRun, LsError> {
    let e_tol = cfg.effective_e_tol();
    let mut log: Vec<IterateRecord> = Vec::new();
    let mut e = error_functional(&pair, nl);
    let mut k = 0;
    loop {
        let sup = pair.y.sup_norm();
        if !e.is_finite() || !(sup <= cfg.blowup_guard) {
            push_record(&mut log, k, e, None, None, pair.terminal_miss(), start);
            return Err(LsError::BlowUp { k, sup, log });
        }
        if e <= e_tol || k == cfg.max_outer {
            push_record(&mut log, k, e, None, None, pair.terminal_miss(), start);
            let outcome = if e <= e_tol {
                Outcome::Converged
            } else {
                Outcome::MaxIterations
            };
            return Ok(LsRun {
                pair,
                log,
                outcome,
                e_tol,
            });
        }
        let d = match descent_pair(&pair, nl, &cfg.hum) {
            Ok(d) => d,
            Err(source) => {
                push_record(&mut log, k, e, None, None, pair.terminal_miss(), start);
                return Err(LsError::DescentFailure { k, source, log });
            }
        };
        let (lambda, e_new) = match cfg.fixed_step {
            Some(step) => (step, StepProfile::new(&pair, nl, &d).eval(step)),
            None => {
                let ls = line_search(&pair, nl, &d, &cfg.line_search);
                debug_assert!(ls.e <= e * (1.0 + 1e-14) + 1e-300, "E increased: {} -> {}", e, ls.e);
                (ls.lambda, ls.e)
            }
        };
        log::debug!("k = {k}: E = {e:e}, lambda = {lambda}, cg = {}", d.cg_iterations);
        push_record(
            &mut log,
            k,
            e,
            Some(lambda),
            Some(d.norm()),
            pair.terminal_miss(),
            start,
        );
        pair = pair.step(lambda, &d);
        e = e_new;
        k += 1;
        if cfg.fixed_step.is_none() && k >= STAGNATION_WINDOW && e > e_tol {
            let past = log[k - STAGNATION_WINDOW].e;
            if e > 0.99 * past {
                push_record(&mut log, k, e, None, None, pair.terminal_miss(), start);
                return Err(LsError::Stagnation {
                    e,
                    window: STAGNATION_WINDOW,
                    log,
                });
            }
        }
    }
}

fn push_record(
    log: &mut Vec<IterateRecord>,
    k: usize,
    e: f64,
    lambda: Option<f64>,
    descent_norm: Option<f64>,
    terminal_miss: f64,
    start: Instant,
) {
    if let Some(prev) = log.last_mut() {
        if prev.e > 0.0 && prev.e < 1.0 && e > 0.0 && e < 1.0 {
            prev.rate = Some(e.ln() / prev.e.ln());
        }
    }
    log.push(IterateRecord {
        k,
        e,
        lambda,
        descent_norm,
        rate: None,
        terminal_miss,
        wallclock: start.elapsed().as_secs_f64(),
    });
}

// E values this close to eps^2 E_0 are roundoff, not convergence
const FLOOR_FACTOR: f64 = 1e3;

/// Convergence-order summary of an iterate log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// `log(E_{k+1}/E_k) / log(E_k/E_{k-1})`, indexed by `k`. Entry 0, the
    /// last entry and estimates reaching the roundoff floor are `None`.
    pub orders: Vec<Option<f64>>,
    /// Start of the trailing run of order estimates that are all at least
    /// `1 + s/2`.
    pub k0: Option<usize>,
    pub lambdas: Vec<f64>,
    /// Partial sums of `lambda_n |(Y_n, F_n)|`.
    pub cumulative_step: Vec<f64>,
}

/// Order estimates of the `E` sequence of `log` for a nonlinearity of
/// Hölder exponent `s`.
pub fn rate_diagnostics(log: &[IterateRecord], s: f64) -> Result<RateReport, LsError> {
    if log.len() < 3 {
        return Err(LsError::InsufficientData(log.len()));
    }
    let e: Vec<f64> = log.iter().map(|r| r.e).collect();
    let mut orders = vec![None; e.len()];
    let floor = FLOOR_FACTOR * f64::EPSILON * f64::EPSILON * e[0];
    for k in 1..e.len() - 1 {
        if e[k + 1] <= floor {
            continue;
        }
        let num = (e[k + 1] / e[k]).ln();
        let den = (e[k] / e[k - 1]).ln();
        if num.is_finite() && den.is_finite() && den != 0.0 {
            orders[k] = Some(num / den);
        }
    }
    let threshold = 1.0 + s / 2.0;
    let mut k0 = None;
    let last = orders.iter().rposition(Option::is_some).unwrap_or(0);
    for k in (1..=last).rev() {
        match orders[k] {
            Some(o) if o >= threshold => k0 = Some(k),
            _ => break,
        }
    }
    let lambdas: Vec<f64> = log.iter().filter_map(|r| r.lambda).collect();
    let mut acc = 0.0;
    let cumulative_step = log
        .iter()
        .filter_map(|r| Some(r.lambda? * r.descent_norm?))
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    Ok(RateReport {
        orders,
        k0,
        lambdas,
        cumulative_step,
    })
}

pub const CSV_HEADER: &str = "k,E,lambda,descent_norm,rate,terminal_miss,wallclock";

/// Writes the iterate log as CSV; `method` adds a trailing column.
pub fn write_iterates_csv<W: Write>(mut w: W, log: &[IterateRecord], method: Option<&str>) -> io::Result<()> {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
    match method {
        Some(_) => writeln!(w, "{CSV_HEADER},method")?,
        None => writeln!(w, "{CSV_HEADER}")?,
    }
    for r in log {
        write!(
            w,
            "{},{:e},{},{},{},{:e},{:e}",
            r.k,
            r.e,
            opt(r.lambda),
            opt(r.descent_norm),
            opt(r.rate),
            r.terminal_miss,
            r.wallclock
        )?;
        match method {
            Some(m) => writeln!(w, ",{m}")?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(40, 1.0, 0.2, 0.8).unwrap()
    }

    fn simulated_pair(g: &Grid, nl: &Nonlinearity, f: &SpaceTimeField) -> TrajectoryControlPair {
        // y_tt - y_xx + g(y) = f 1_omega via the potential form g(y) = hat_g(y) y + g(0)
        let init = StatePair::from_fns(g, |x| 0.3 * (PI * x).sin(), |x| x * (1.0 - x));
        let mut f = f.clone();
        f.restrict_to_omega();
        let y = if nl.is_zero() {
            wave::solve_forward(g, &SpaceTimeField::zeros(g), &f, &init).unwrap()
        } else {
            let c = match nl.kind() {
                crate::nonlinearity::Kind::Linear { c } => *c,
                _ => panic!("linear only"),
            };
            wave::solve_forward(g, &SpaceTimeField::constant(g, c), &f, &init).unwrap()
        };
        let target = wave::terminal_state(&y);
        TrajectoryControlPair::new(y, f, init, target).unwrap()
    }

    #[test]
    fn simulated_pairs_have_zero_residual() {
        let g = grid();
        let f = SpaceTimeField::from_fn(&g, |x, t| (3.0 * x + t).sin());
        for nl in [Nonlinearity::zero(), Nonlinearity::linear(2.0)] {
            let p = simulated_pair(&g, &nl, &f);
            let r = residual(&p, &nl);
            assert!(r.sup_norm() < 1e-10, "{nl}: {}", r.sup_norm());
            assert!(error_functional(&p, &nl) < 1e-20);
            assert!(p.terminal_miss() < 1e-12);
        }
    }

    #[test]
    fn linear_term_enters_additively() {
        let g = grid();
        let p = simulated_pair(&g, &Nonlinearity::zero(), &SpaceTimeField::zeros(&g));
        let r0 = residual(&p, &Nonlinearity::zero());
        let r1 = residual(&p, &Nonlinearity::linear(1.5));
        let diff = r1.add_scaled(-1.0, &r0);
        for n in 0..g.nt() {
            for i in 0..g.nx() {
                assert!((diff[(n, i)] - 1.5 * p.y[(n, i)]).abs() < 1e-14);
            }
        }
        assert!(diff.level(g.nt()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perturbation_changes_residual_by_its_stencil() {
        let g = grid();
        let nl = Nonlinearity::linear(0.7);
        let p = simulated_pair(&g, &nl, &SpaceTimeField::zeros(&g));
        let delta = 1e-2;
        let bump = SpaceTimeField::from_fn(&g, |x, t| delta * (PI * x).sin() * (PI * t / g.horizon()).sin());
        let mut q = p.clone();
        q.y.axpy(1.0, &bump);
        let change = residual(&q, &nl).add_scaled(-1.0, &residual(&p, &nl));
        let mut expect = wave_stencil(&bump);
        expect.axpy(0.7, &bump);
        expect.level_mut(g.nt()).iter_mut().for_each(|v| *v = 0.0);
        assert!(change.add_scaled(-1.0, &expect).sup_norm() < 1e-9);
        // doubling the perturbation doubles the residual: E scales by 4
        let mut q2 = p.clone();
        q2.y.axpy(2.0, &bump);
        let ratio = error_functional(&q2, &nl) / error_functional(&q, &nl);
        assert!((ratio - 4.0).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn user_pair_must_start_at_init() {
        let g = grid();
        let init = StatePair::from_fns(&g, |x| (PI * x).sin(), |_| 0.0);
        let y = SpaceTimeField::zeros(&g);
        let err = TrajectoryControlPair::new(y, SpaceTimeField::zeros(&g), init, StatePair::zeros(&g));
        assert!(matches!(err, Err(LsError::InitialMismatch)));
    }

    #[test]
    fn zero_residual_gives_zero_descent() {
        let g = grid();
        let z = SpaceTimeField::zeros(&g);
        let p = TrajectoryControlPair::new(z.clone(), z, StatePair::zeros(&g), StatePair::zeros(&g)).unwrap();
        let d = descent_pair(&p, &Nonlinearity::sine(1.0, 0.5), &HumOptions::default()).unwrap();
        assert!(d.is_zero());
        assert_eq!(d.cg_iterations, 0);
        let near = simulated_pair(&g, &Nonlinearity::zero(), &SpaceTimeField::zeros(&g));
        let d = descent_pair(&near, &Nonlinearity::zero(), &HumOptions::default()).unwrap();
        assert!(d.y.sup_norm() < 1e-10 && d.f.sup_norm() < 1e-10);
    }

    #[test]
    fn zero_direction_prefers_unit_step() {
        let g = grid();
        let nl = Nonlinearity::sine(1.0, 0.5);
        let p = simulated_pair(&g, &Nonlinearity::zero(), &SpaceTimeField::zeros(&g));
        let d = Descent {
            y: SpaceTimeField::zeros(&g),
            f: SpaceTimeField::zeros(&g),
            cg_iterations: 0,
            terminal_residual: 0.0,
        };
        let ls = line_search(&p, &nl, &d, &LineSearchOptions::default());
        assert_eq!(ls.lambda, 1.0);
        let e = error_functional(&p, &nl);
        assert!((ls.e - e).abs() <= 1e-14 * e);
        assert!(ls.samples.iter().all(|s| s.1 == ls.e));
        assert_eq!(ls.samples.len(), 26);
    }

    #[test]
    fn profile_matches_direct_evaluation() {
        let g = grid();
        let nl = Nonlinearity::sine(1.0, 0.5);
        let p = simulated_pair(&g, &Nonlinearity::zero(), &SpaceTimeField::zeros(&g));
        let d = descent_pair(&p, &nl, &HumOptions::default()).unwrap();
        let prof = StepProfile::new(&p, &nl, &d);
        let e0 = error_functional(&p, &nl);
        for l in [0.0, 0.3, 1.0, 1.7] {
            let direct = error_functional(&p.step(l, &d), &nl);
            assert!((prof.eval(l) - direct).abs() <= 1e-12 * e0, "{l}");
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|l| (l - 0.37).powi(2), 0.0, 1.0, 40).unwrap();
        assert!((x - 0.37).abs() < 1e-6 && fx < 1e-12);
    }

    fn records(es: &[f64]) -> Vec<IterateRecord> {
        es.iter()
            .enumerate()
            .map(|(k, &e)| IterateRecord {
                k,
                e,
                lambda: Some(1.0),
                descent_norm: Some(2.0),
                rate: None,
                terminal_miss: 0.0,
                wallclock: 0.0,
            })
            .collect()
    }

    #[test]
    fn geometric_sequence_has_order_one() {
        let es: Vec<f64> = (0..8).map(|k| 10f64.powi(-k)).collect();
        let rep = rate_diagnostics(&records(&es), 1.0).unwrap();
        for o in rep.orders[1..7].iter() {
            assert!((o.unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(rep.k0, None);
        assert_eq!(rep.cumulative_step.last(), Some(&16.0));
    }

    #[test]
    fn doubly_exponential_sequence_has_order_two() {
        let es: Vec<f64> = (0..5).map(|k| 10f64.powf(-(2f64.powi(k)))).collect();
        let rep = rate_diagnostics(&records(&es), 1.0).unwrap();
        for o in rep.orders[1..4].iter() {
            assert!((o.unwrap() - 2.0).abs() < 1e-9);
        }
        assert_eq!(rep.k0, Some(1));
    }

    #[test]
    fn roundoff_floor_is_not_an_order() {
        let es = [1.0, 1e-3, 1e-7, 1e-15, 1e-33];
        let rep = rate_diagnostics(&records(&es), 1.0).unwrap();
        assert_eq!(rep.orders[3], None);
        assert!(rep.orders[2].unwrap() >= 1.5);
        assert_eq!(rep.k0, Some(2));
    }

    #[test]
    fn rate_diagnostics_needs_three_records() {
        assert!(matches!(
            rate_diagnostics(&records(&[1.0, 0.1]), 1.0),
            Err(LsError::InsufficientData(2))
        ));
    }

    #[test]
    fn csv_layout() {
        let mut log = records(&[0.5, 0.01]);
        log[1].lambda = None;
        log[1].descent_norm = None;
        let mut buf = Vec::new();
        write_iterates_csv(&mut buf, &log, Some("ls")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,E,lambda,descent_norm,rate,terminal_miss,wallclock,method");
        assert_eq!(lines[1], "0,5e-1,1e0,2e0,,0e0,0e0,ls");
        assert_eq!(lines[2], "1,1e-2,,,,0e0,0e0,ls");
    }
}
