//! Minimal `L^2(q_T)`-norm controls for the linear wave equation with
//! potential, by conjugate gradient on the dual (HUM) functional.
//!
//! For `z_tt - z_xx + A z = u 1_omega + B`, `(z, z_t)(0) = init`, the control
//! of minimal norm reaching `target` at `T` is `u = phi 1_omega`, where `phi`
//! solves the homogeneous equation from adjoint data `(phi0, phi1)` at `t = 0`
//! and the data minimize
//!
//! ```text
//! J(phi0, phi1) = 1/2 |phi|^2_{L^2(q_T)} + (B, phi)_{L^2(Q_T)} - <z, (phi0, phi1)>
//! <z, (phi0, phi1)> = <z0, phi1> - (z1, phi0)
//! ```
//!
//! over `H = L^2 x H^{-1}`. A general target is folded into the data `z` by
//! carrying it back to `t = 0` along the homogeneous flow.
//!
//! Everything is formulated on the discrete level: the Gramian is assembled
//! from the conserved leapfrog pairing (see [`crate::wave`]), so the Euler
//! equation of `J` is exactly the discrete duality identity, and the returned
//! control is the exact minimal-norm control of the discrete problem up to
//! the CG tolerance.

use crate::field::{SpaceTimeField, StatePair};
use crate::grid::Grid;
use crate::norms::{self, dot};
use crate::wave::{self, second_difference, TimeEnd, WaveError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HumError {
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(
        "CG did not converge in {max_iter} iterations (last relative residual {last:.3e}){}",
        geometric_hint(*.geometric_ok)
    )]
    NoConvergence {
        max_iter: usize,
        residual_history: Vec<f64>,
        last: f64,
        geometric_ok: bool,
    },
    #[error("non-positive CG curvature {curvature:e} at iteration {iteration}")]
    BreakdownPD { iteration: usize, curvature: f64 },
}

fn geometric_hint(ok: bool) -> &'static str {
    if ok {
        "; the grid may be too coarse for the requested tolerance"
    } else {
        "; T <= 2 max(l1, 1 - l2): the geometric control condition fails"
    }
}

/// Solves `-v_xx = w` with homogeneous Dirichlet conditions on the grid.
///
/// The discrete `H^{-1}` inner product is `(w, u)_{H^{-1}} = dx sum(riesz(w) u)`.
pub fn riesz_hminus1(grid: &Grid, w: &[f64]) -> Result<Vec<f64>, HumError> {
    if w.len() != grid.nx() {
        return Err(WaveError::Dimension(format!(
            "riesz input has length {}, grid has nx = {}",
            w.len(),
            grid.nx()
        ))
        .into());
    }
    Ok(solve_dirichlet_laplacian(grid.dx(), w))
}

/// Thomas algorithm for `(1/dx^2) tridiag(-1, 2, -1) v = w`.
fn solve_dirichlet_laplacian(dx: f64, w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let h2 = dx * dx;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = 2.0;
    c[0] = -1.0 / denom;
    d[0] = w[0] * h2 / denom;
    for i in 1..n {
        denom = 2.0 + c[i - 1];
        c[i] = -1.0 / denom;
        d[i] = (w[i] * h2 + d[i - 1]) / denom;
    }
    let mut v = vec![0.0; n];
    v[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        v[i] = d[i] - c[i] * v[i + 1];
    }
    v
}

/// Adjoint data `(phi0, phi1)` in `H = L^2 x H^{-1}`; `phi1` is stored as a
/// grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointData {
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
}

impl AdjointData {
    pub fn zeros(grid: &Grid) -> Self {
        AdjointData {
            phi0: vec![0.0; grid.nx()],
            phi1: vec![0.0; grid.nx()],
        }
    }

    /// Random data with independent entries uniform in `(-1, 1)`.
    pub fn random(grid: &Grid, rng: &mut impl Rng) -> Self {
        let mut draw = || (0..grid.nx()).map(|_| rng.random_range(-1.0..1.0)).collect();
        AdjointData {
            phi0: draw(),
            phi1: draw(),
        }
    }

    /// The data as initial state `(phi(0), phi_t(0))` of the adjoint equation.
    pub fn to_state(&self) -> StatePair {
        StatePair::new(self.phi0.clone(), self.phi1.clone())
    }

    /// `(self, other)_H`.
    pub fn h_inner(&self, grid: &Grid, other: &AdjointData) -> f64 {
        let r = solve_dirichlet_laplacian(grid.dx(), &self.phi1);
        grid.dx() * (dot(&self.phi0, &other.phi0) + dot(&r, &other.phi1))
    }

    pub fn h_norm(&self, grid: &Grid) -> f64 {
        self.h_inner(grid, self).max(0.0).sqrt()
    }

    fn axpy(&mut self, s: f64, other: &AdjointData) {
        for (a, b) in self.phi0.iter_mut().zip(&other.phi0) {
            *a += s * b;
        }
        for (a, b) in self.phi1.iter_mut().zip(&other.phi1) {
            *a += s * b;
        }
    }

    fn is_zero(&self) -> bool {
        self.phi0.iter().chain(&self.phi1).all(|&v| v == 0.0)
    }
}

/// Steering problem `z_tt - z_xx + A z = u 1_omega + B` from `init` to `target`.
#[derive(Debug, Clone)]
pub struct LinearControlProblem {
    pub grid: Grid,
    pub potential: SpaceTimeField,
    pub source: SpaceTimeField,
    pub init: StatePair,
    pub target: StatePair,
}

impl LinearControlProblem {
    pub fn new(
        grid: &Grid,
        potential: SpaceTimeField,
        source: SpaceTimeField,
        init: StatePair,
        target: StatePair,
    ) -> Result<Self, HumError> {
        let dim =
            |what: &str| -> HumError { WaveError::Dimension(format!("{what} does not conform to the grid")).into() };
        if !grid.same_shape(potential.grid()) {
            return Err(dim("potential"));
        }
        if !grid.same_shape(source.grid()) {
            return Err(dim("source"));
        }
        if !init.conforms(grid) {
            return Err(dim("initial state"));
        }
        if !target.conforms(grid) {
            return Err(dim("target state"));
        }
        Ok(LinearControlProblem {
            grid: *grid,
            potential,
            source,
            init,
            target,
        })
    }

    /// No potential, no source.
    pub fn free(grid: &Grid, init: StatePair, target: StatePair) -> Result<Self, HumError> {
        Self::new(
            grid,
            SpaceTimeField::zeros(grid),
            SpaceTimeField::zeros(grid),
            init,
            target,
        )
    }

    /// Initial data of the equivalent null-control problem: `init` minus the
    /// target carried back to `t = 0` by the homogeneous flow.
    pub fn effective_data(&self) -> Result<StatePair, HumError> {
        let (prev, last) = wave::terminal_levels(&self.grid, &self.target);
        let back = wave::transport_to_initial(&self.grid, Some(&self.potential), &prev, &last)?;
        Ok(self.init.sub(&back))
    }
}

/// Tuning of the CG iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HumOptions {
    /// Relative tolerance on the `H` residual and absolute tolerance on the
    /// terminal `V` miss.
    pub tol: f64,
    pub max_iter: usize,
    /// Tikhonov weight `eps` added as `eps |ad|_H^2 / 2` to `J`.
    pub tikhonov: f64,
}

impl Default for HumOptions {
    fn default() -> Self {
        HumOptions {
            tol: 1e-8,
            max_iter: 500,
            tikhonov: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    /// `phi 1_omega`.
    pub control: SpaceTimeField,
    /// Controlled state.
    pub state: SpaceTimeField,
    pub adjoint: AdjointData,
    pub cg_iterations: usize,
    /// `V`-norm of the terminal miss `(z(T), z_t(T)) - target`.
    pub terminal_residual: f64,
    /// Relative `H` residual after each CG iteration.
    pub residual_history: Vec<f64>,
}

impl ControlSolution {
    pub fn control_norm(&self) -> f64 {
        norms::l2_qt_omega(&self.control)
    }
}

/// One-line diagnostics record written next to a control solution.
#[derive(Debug, Clone, Serialize)]
pub struct ControlDiagnostics {
    pub cg_iterations: usize,
    pub terminal_residual: f64,
    pub control_norm: f64,
}

impl From<&ControlSolution> for ControlDiagnostics {
    fn from(s: &ControlSolution) -> Self {
        ControlDiagnostics {
            cg_iterations: s.cg_iterations,
            terminal_residual: s.terminal_residual,
            control_norm: s.control_norm(),
        }
    }
}

/// Result of one Gramian application: `Lambda ad` and the terminal levels of
/// the state driven by `phi 1_omega` from rest.
struct GramianImage {
    image: AdjointData,
    prev: Vec<f64>,
    last: Vec<f64>,
}

fn apply_gramian(grid: &Grid, potential: &SpaceTimeField, ad: &AdjointData) -> Result<GramianImage, HumError> {
    let mut phi = wave::solve_free(grid, Some(potential), &ad.to_state())?;
    phi.restrict_to_omega();
    let w = wave::solve_source(grid, Some(potential), &phi)?;
    let prev = w.level(grid.nt() - 1).to_vec();
    let last = w.level(grid.nt()).to_vec();
    let back = wave::transport_to_initial(grid, Some(potential), &prev, &last)?;
    Ok(GramianImage {
        image: state_to_h(grid, &back),
        prev,
        last,
    })
}

/// The `H` representative of a state `s` under the pairing
/// `<s, ad> = dx (<s1, phi0> - <s0, phi1>)`: `(s1, D s0)`.
fn state_to_h(grid: &Grid, s: &StatePair) -> AdjointData {
    let mut lap = vec![0.0; grid.nx()];
    second_difference(&s.pos, grid.dx(), &mut lap);
    AdjointData {
        phi0: s.vel.clone(),
        phi1: lap,
    }
}

/// `Lambda ad`, characterized by `(Lambda a, b)_H = (phi_a, phi_b)_{L^2(q_T)}`.
///
/// Only the grid and the potential of `problem` enter.
pub fn gramian_apply(problem: &LinearControlProblem, ad: &AdjointData) -> Result<AdjointData, HumError> {
    check_adjoint(&problem.grid, ad)?;
    Ok(apply_gramian(&problem.grid, &problem.potential, ad)?.image)
}

fn check_adjoint(grid: &Grid, ad: &AdjointData) -> Result<(), HumError> {
    if ad.phi0.len() != grid.nx() || ad.phi1.len() != grid.nx() {
        return Err(WaveError::Dimension("adjoint data does not conform to the grid".into()).into());
    }
    Ok(())
}

/// Value of the dual functional `J` at `ad`.
pub fn dual_functional(problem: &LinearControlProblem, ad: &AdjointData) -> Result<f64, HumError> {
    check_adjoint(&problem.grid, ad)?;
    let g = &problem.grid;
    let z = problem.effective_data()?;
    let phi = wave::solve_adjoint(g, &problem.potential, &ad.to_state(), TimeEnd::Initial)?;
    let pairing = g.dx() * (dot(&z.pos, &ad.phi1) - dot(&z.vel, &ad.phi0));
    Ok(0.5 * norms::l2_qt_omega(&phi).powi(2) + norms::inner_qt(&problem.source, &phi) - pairing)
}

/// Gradient of `J` at `ad` in the `H` metric, `Lambda ad + eps ad - b`.
pub fn dual_gradient(problem: &LinearControlProblem, ad: &AdjointData, tikhonov: f64) -> Result<AdjointData, HumError> {
    check_adjoint(&problem.grid, ad)?;
    let mut g = apply_gramian(&problem.grid, &problem.potential, ad)?.image;
    if tikhonov > 0.0 {
        g.axpy(tikhonov, ad);
    }
    g.axpy(-1.0, &assemble_rhs(problem)?.b);
    Ok(g)
}

/// Right-hand side `b` of `Lambda ad = b`, together with the terminal levels
/// of the uncontrolled miss.
struct Rhs {
    b: AdjointData,
    miss_prev: Vec<f64>,
    miss_last: Vec<f64>,
}

fn assemble_rhs(problem: &LinearControlProblem) -> Result<Rhs, HumError> {
    let g = &problem.grid;
    let free = wave::solve_general(g, Some(&problem.potential), Some(&problem.source), &problem.init)?;
    let (tp, tl) = wave::terminal_levels(g, &problem.target);
    let miss_prev: Vec<f64> = free.level(g.nt() - 1).iter().zip(&tp).map(|(a, b)| a - b).collect();
    let miss_last: Vec<f64> = free.level(g.nt()).iter().zip(&tl).map(|(a, b)| a - b).collect();
    let s = wave::transport_to_initial(g, Some(&problem.potential), &miss_prev, &miss_last)?;
    let mut b = state_to_h(g, &s);
    b.phi0.iter_mut().chain(b.phi1.iter_mut()).for_each(|v| *v = -*v);
    Ok(Rhs {
        b,
        miss_prev,
        miss_last,
    })
}

fn miss_norm(grid: &Grid, prev: &[f64], last: &[f64]) -> f64 {
    let mut f = SpaceTimeField::zeros(&Grid::clone(grid));
    f.level_mut(grid.nt() - 1).copy_from_slice(prev);
    f.level_mut(grid.nt()).copy_from_slice(last);
    norms::v_norm(grid, &wave::terminal_state(&f))
}

fn miss_norm_fast(grid: &Grid, prev: &[f64], last: &[f64]) -> f64 {
    let (dt, dx) = (grid.dt(), grid.dx());
    let mut lap = vec![0.0; grid.nx()];
    second_difference(last, dx, &mut lap);
    let vel: Vec<f64> = last
        .iter()
        .zip(prev)
        .zip(&lap)
        .map(|((a, b), l)| (a - b) / dt + 0.5 * dt * l)
        .collect();
    (norms::h1_seminorm(grid, last).powi(2) + norms::l2_space(grid, &vel).powi(2)).sqrt()
}

/// Minimal-norm control by CG from zero adjoint data.
pub fn minimal_norm_control(problem: &LinearControlProblem, opts: &HumOptions) -> Result<ControlSolution, HumError> {
    minimal_norm_control_from(problem, opts, None)
}

/// Minimal-norm control by CG from the given starting adjoint data.
pub fn minimal_norm_control_from(
    problem: &LinearControlProblem,
    opts: &HumOptions,
    start: Option<&AdjointData>,
) -> Result<ControlSolution, HumError> {
    let g = &problem.grid;
    if let Some(s) = start {
        check_adjoint(g, s)?;
    }
    if !g.t_exceeds_geometric() {
        log::warn!(
            "T = {} does not exceed 2 max(l1, 1 - l2) = {}; expect slow or no CG convergence",
            g.final_time(),
            g.geometric_time()
        );
    }
    let Rhs {
        b,
        mut miss_prev,
        mut miss_last,
    } = assemble_rhs(problem)?;
    let b_norm = b.h_norm(g);

    let mut x = AdjointData::zeros(g);
    let mut r = b.clone();
    if let Some(s) = start {
        if !s.is_zero() {
            let img = apply_gramian(g, &problem.potential, s)?;
            x = s.clone();
            r.axpy(-1.0, &img.image);
            if opts.tikhonov > 0.0 {
                r.axpy(-opts.tikhonov, s);
            }
            axpy_slice(&mut miss_prev, 1.0, &img.prev);
            axpy_slice(&mut miss_last, 1.0, &img.last);
        }
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    if b_norm == 0.0 && x.is_zero() {
        return finish(problem, x, 0, history);
    }
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut rr = r.h_inner(g, &r);
    let converged = |rr: f64, prev: &[f64], last: &[f64]| {
        rr.max(0.0).sqrt() <= opts.tol * scale || miss_norm_fast(g, prev, last) <= opts.tol
    };
    if converged(rr, &miss_prev, &miss_last) {
        return finish(problem, x, 0, history);
    }
    let mut p = r.clone();
    while iterations < opts.max_iter {
        let img = apply_gramian(g, &problem.potential, &p)?;
        let mut ap = img.image;
        if opts.tikhonov > 0.0 {
            ap.axpy(opts.tikhonov, &p);
        }
        let curvature = ap.h_inner(g, &p);
        iterations += 1;
        if !(curvature > 0.0) {
            return Err(HumError::BreakdownPD {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        axpy_slice(&mut miss_prev, alpha, &img.prev);
        axpy_slice(&mut miss_last, alpha, &img.last);
        let rr_new = r.h_inner(g, &r);
        history.push(rr_new.max(0.0).sqrt() / scale);
        if converged(rr_new, &miss_prev, &miss_last) {
            return finish(problem, x, iterations, history);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
    }
    let last = history.last().copied().unwrap_or(f64::NAN);
    Err(HumError::NoConvergence {
        max_iter: opts.max_iter,
        residual_history: history,
        last,
        geometric_ok: g.t_exceeds_geometric(),
    })
}

fn axpy_slice(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

fn finish(
    problem: &LinearControlProblem,
    adjoint: AdjointData,
    cg_iterations: usize,
    residual_history: Vec<f64>,
) -> Result<ControlSolution, HumError> {
    let g = &problem.grid;
    let mut control = if adjoint.is_zero() {
        SpaceTimeField::zeros(g)
    } else {
        wave::solve_free(g, Some(&problem.potential), &adjoint.to_state())?
    };
    control.restrict_to_omega();
    let rhs = control.add_scaled(1.0, &problem.source);
    let state = wave::solve_general(g, Some(&problem.potential), Some(&rhs), &problem.init)?;
    let (prev, last) = (state.level(g.nt() - 1), state.level(g.nt()));
    let (tp, tl) = wave::terminal_levels(g, &problem.target);
    let dp: Vec<f64> = prev.iter().zip(&tp).map(|(a, b)| a - b).collect();
    let dl: Vec<f64> = last.iter().zip(&tl).map(|(a, b)| a - b).collect();
    let terminal_residual = miss_norm(g, &dp, &dl);
    Ok(ControlSolution {
        control,
        state,
        adjoint,
        cg_iterations,
        terminal_residual,
        residual_history,
    })
}

/// One row of the observability probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub magnitude: f64,
    pub sample: usize,
    /// The constant potential actually used (`+-magnitude`).
    pub potential: f64,
    pub data_norm: f64,
    pub control_norm: f64,
    pub ratio: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// Least-squares fit `log(ratio) ~ intercept + slope sqrt(|A|_inf)`.
    pub slope: f64,
    pub intercept: f64,
}

/// Random initial state with `|state|_V = 1`, spanned by the first five sine
/// modes.
pub fn random_unit_state(grid: &Grid, rng: &mut impl Rng) -> StatePair {
    let modes = 5;
    let cp: Vec<f64> = (0..modes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cv: Vec<f64> = (0..modes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eval = |c: &[f64], x: f64| -> f64 {
        c.iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
            .sum()
    };
    let s = StatePair::from_fns(grid, |x| eval(&cp, x), |x| eval(&cv, x));
    let n = norms::v_norm(grid, &s);
    s.scaled(1.0 / n)
}

/// Seed of sample `index` of a probe run.
pub fn probe_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Controls random unit data to rest under a constant potential of the given
/// magnitude (random sign) and records `|u|_{L^2(q_T)} / |data|_V`.
pub fn probe_sample(
    grid: &Grid,
    magnitude: f64,
    sample: usize,
    sample_seed: u64,
    opts: &HumOptions,
) -> Result<ProbeRow, HumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let data = random_unit_state(grid, &mut rng);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let potential = sign * magnitude;
    let problem = LinearControlProblem::new(
        grid,
        SpaceTimeField::constant(grid, potential),
        SpaceTimeField::zeros(grid),
        data.clone(),
        StatePair::zeros(grid),
    )?;
    let sol = minimal_norm_control(&problem, opts)?;
    let data_norm = norms::v_norm(grid, &data);
    let control_norm = sol.control_norm();
    Ok(ProbeRow {
        magnitude,
        sample,
        potential,
        data_norm,
        control_norm,
        ratio: control_norm / data_norm,
        cg_iterations: sol.cg_iterations,
    })
}

/// Empirical probe of the growth of control cost with `|A|_inf`.
///
/// Samples run in parallel; rows come back ordered by (magnitude, sample).
pub fn observability_probe(
    grid: &Grid,
    magnitudes: &[f64],
    samples: usize,
    seed: u64,
    opts: &HumOptions,
) -> Result<ProbeReport, HumError> {
    let jobs: Vec<(f64, usize, usize)> = magnitudes
        .iter()
        .enumerate()
        .flat_map(|(mi, &m)| (0..samples).map(move |s| (m, s, mi * samples + s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(m, s, idx)| probe_sample(grid, m.abs(), s, probe_seed(seed, idx), opts))
        .collect::<Result<Vec<_>, _>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.magnitude.sqrt(), r.ratio.ln())).collect();
    let (slope, intercept) = linear_fit(&pts);
    Ok(ProbeReport { rows, slope, intercept })
}

/// Ordinary least squares `y ~ a + b x`; returns `(b, a)`. A degenerate
/// abscissa gives slope 0.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
