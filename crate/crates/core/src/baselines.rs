//! Competitor schemes: Picard iteration of the fixed-point map `K` and two
//! undamped Newton variants.
//!
//! * `picard`: `y_{k+1}` is the minimal-norm controlled solution of
//!   `y_tt - y_xx + hat_g(y_k) y = f 1_omega - g(0)`, from `y_0 = 0`.
//! * `newton`: the least-squares iteration with every step forced to 1.
//! * `newton_alt`: `y_{k+1}` is the minimal-norm controlled solution of
//!   `y_tt - y_xx + g'(y_k) y = f 1_omega + g'(y_k) y_k - g(y_k)`, from the
//!   linear controlled pair.
//!
//! `picard` and `newton_alt` stop when `|y_{k+1} - y_k|_inf <= increment_tol`
//! or `E(y_k, f_k) <= E_tol`; `newton` stops on `E <= E_tol` only.

use crate::field::SpaceTimeField;
use crate::grid::Grid;
use crate::hum::{self, HumError, LinearControlProblem};
use crate::least_squares::{self as ls, InitMode, IterateRecord, LsConfig, LsError, Outcome, TrajectoryControlPair};
use crate::nonlinearity::Nonlinearity;
use crate::StatePair;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Picard,
    Newton,
    NewtonAlt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Picard => "picard",
            Method::Newton => "newton",
            Method::NewtonAlt => "newton_alt",
        }
    }

    /// Stopping rule, as reported alongside the outputs.
    pub fn stopping_rule(self) -> &'static str {
        match self {
            Method::Newton => "E <= E_tol",
            Method::Picard | Method::NewtonAlt => "|y_{k+1} - y_k|_inf <= increment_tol or E <= E_tol",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "picard" => Ok(Method::Picard),
            "newton" => Ok(Method::Newton),
            "newton_alt" => Ok(Method::NewtonAlt),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineOutcome {
    Converged,
    Diverged,
    MaxIter,
}

/// Result of a baseline run. `log` follows the least-squares record layout;
/// for `picard` and `newton_alt` its `descent_norm` column holds
/// `|y_{k+1} - y_k|_inf`.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub method: Method,
    pub log: Vec<IterateRecord>,
    /// `|y_{k+1} - y_k|_inf` per step (empty for `newton`).
    pub increments: Vec<f64>,
    /// Successive increment ratios.
    pub contraction_ratios: Vec<f64>,
    pub outcome: BaselineOutcome,
    /// Last iterate; `None` only when the run diverged before producing one.
    pub pair: Option<TrajectoryControlPair>,
}

#[derive(Debug, Error, Clone)]
pub enum BaselineError {
    #[error("{method}: control solve failed at iteration {k}: {source}")]
    Control {
        method: Method,
        k: usize,
        #[source]
        source: HumError,
        log: Vec<IterateRecord>,
    },
    #[error(transparent)]
    LeastSquares(#[from] LsError),
}

impl BaselineError {
    pub fn log(&self) -> &[IterateRecord] {
        match self {
            BaselineError::Control { log, .. } => log,
            BaselineError::LeastSquares(e) => e.log(),
        }
    }
}

/// Runs `method`.
pub fn run(
    method: Method,
    grid: &Grid,
    init: &StatePair,
    target: &StatePair,
    nl: &Nonlinearity,
    cfg: &LsConfig,
) -> Result<BaselineRun, BaselineError> {
    match method {
        Method::Picard => picard_iterate(grid, init, target, nl, cfg),
        Method::Newton | Method::NewtonAlt => newton_iterate(grid, init, target, nl, cfg, method),
    }
}

/// Picard iteration `y_{k+1} = K(y_k)` from `y_0 = 0`.
pub fn picard_iterate(
    grid: &Grid,
    init: &StatePair,
    target: &StatePair,
    nl: &Nonlinearity,
    cfg: &LsConfig,
) -> Result<BaselineRun, BaselineError> {
    let source = SpaceTimeField::constant(grid, -nl.g(0.0));
    fixed_point(Method::Picard, grid, init, target, nl, cfg, None, |y| {
        (nl.apply_hat_g(y), source.clone())
    })
}

/// Undamped Newton: `newton` runs the least-squares iteration with unit
/// steps, `newton_alt` re-solves the linearized equation at each iterate.
pub fn newton_iterate(
    grid: &Grid,
    init: &StatePair,
    target: &StatePair,
    nl: &Nonlinearity,
    cfg: &LsConfig,
    variant: Method,
) -> Result<BaselineRun, BaselineError> {
    match variant {
        Method::Newton => {
            let cfg = LsConfig {
                fixed_step: Some(1.0),
                ..cfg.clone()
            };
            match ls::solve(grid, init, target, nl, &cfg) {
                Ok(run) => Ok(BaselineRun {
                    method: Method::Newton,
                    log: run.log,
                    increments: Vec::new(),
                    contraction_ratios: Vec::new(),
                    outcome: match run.outcome {
                        Outcome::Converged => BaselineOutcome::Converged,
                        Outcome::MaxIterations => BaselineOutcome::MaxIter,
                    },
                    pair: Some(run.pair),
                }),
                Err(LsError::BlowUp { log, .. }) => Ok(BaselineRun {
                    method: Method::Newton,
                    log,
                    increments: Vec::new(),
                    contraction_ratios: Vec::new(),
                    outcome: BaselineOutcome::Diverged,
                    pair: None,
                }),
                Err(e) => Err(e.into()),
            }
        }
        Method::NewtonAlt => {
            let first = ls::initial_pair(grid, init, target, nl, &InitMode::LinearStar, &cfg.hum)?;
            fixed_point(Method::NewtonAlt, grid, init, target, nl, cfg, Some(first), |y| {
                let gp = nl.apply_gprime(y);
                let mut b = SpaceTimeField::zeros(grid);
                for ((b, &a), &v) in b.values_mut().iter_mut().zip(gp.values()).zip(y.values()) {
                    *b = a * v - nl.g(v);
                }
                (gp, b)
            })
        }
        Method::Picard => picard_iterate(grid, init, target, nl, cfg),
    }
}

/// Shared loop of `picard` and `newton_alt`: `linearize(y_k)` gives the
/// potential and source of the next control problem. Without a first pair
/// the iteration starts from `y_0 = 0`.
#[allow(clippy::too_many_arguments)]
fn fixed_point(
    method: Method,
    grid: &Grid,
    init: &StatePair,
    target: &StatePair,
    nl: &Nonlinearity,
    cfg: &LsConfig,
    first: Option<TrajectoryControlPair>,
    linearize: impl Fn(&SpaceTimeField) -> (SpaceTimeField, SpaceTimeField),
) -> Result<BaselineRun, BaselineError> {
    let start = Instant::now();
    let e_tol = cfg.effective_e_tol();
    let mut log = Vec::new();
    let mut increments: Vec<f64> = Vec::new();
    let mut y = match &first {
        Some(p) => {
            push(&mut log, 0, ls::error_functional(p, nl), None, p.terminal_miss(), start);
            p.y.clone()
        }
        None => SpaceTimeField::zeros(grid),
    };
    let mut pair = first;
    let finish = |log, increments: Vec<f64>, outcome, pair| {
        let contraction_ratios = increments.windows(2).map(|w: &[f64]| w[1] / w[0]).collect();
        Ok(BaselineRun {
            method,
            log,
            increments,
            contraction_ratios,
            outcome,
            pair,
        })
    };
    if let Some(p) = &pair {
        if ls::error_functional(p, nl) <= e_tol {
            return finish(log, increments, BaselineOutcome::Converged, pair);
        }
    }
    for k in 1..=cfg.max_outer {
        let (potential, source) = linearize(&y);
        let problem =
            LinearControlProblem::new(grid, potential, source, init.clone(), target.clone()).map_err(|source| {
                BaselineError::Control {
                    method,
                    k,
                    source,
                    log: log.clone(),
                }
            })?;
        let sol = hum::minimal_norm_control(&problem, &cfg.hum).map_err(|source| BaselineError::Control {
            method,
            k,
            source,
            log: log.clone(),
        })?;
        let inc = sol.state.add_scaled(-1.0, &y).sup_norm();
        let next = TrajectoryControlPair::new(sol.state, sol.control, init.clone(), target.clone())?;
        let e = ls::error_functional(&next, nl);
        if let Some(prev) = log.last_mut() {
            prev.descent_norm = Some(inc);
        }
        increments.push(inc);
        push(&mut log, k, e, None, next.terminal_miss(), start);
        y = next.y.clone();
        let sup = y.sup_norm();
        pair = Some(next);
        if !e.is_finite() || !(sup <= cfg.blowup_guard) {
            return finish(log, increments, BaselineOutcome::Diverged, pair);
        }
        if e <= e_tol || inc <= cfg.increment_tol {
            return finish(log, increments, BaselineOutcome::Converged, pair);
        }
    }
    finish(log, increments, BaselineOutcome::MaxIter, pair)
}

fn push(log: &mut Vec<IterateRecord>, k: usize, e: f64, lambda: Option<f64>, terminal_miss: f64, start: Instant) {
    if let Some(prev) = log.last_mut() {
        if prev.e > 0.0 && prev.e < 1.0 && e > 0.0 && e < 1.0 {
            prev.rate = Some(e.ln() / prev.e.ln());
        }
    }
    log.push(IterateRecord {
        k,
        e,
        lambda,
        descent_norm: None,
        rate: None,
        terminal_miss,
        wallclock: start.elapsed().as_secs_f64(),
    });
}
