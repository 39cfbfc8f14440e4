//! Explicit leapfrog solver for `y_tt - y_xx + A y = rhs` on `(0,1)` with
//! homogeneous Dirichlet conditions.
//!
//! The scheme is
//!
//! ```text
//! y^1     = y^0 + dt v + dt^2/2 (D y^0 - A^0 y^0 + r^0)
//! y^{n+1} = 2 y^n - y^{n-1} + dt^2 (D y^n - A^n y^n + r^n),   1 <= n < nt
//! ```
//!
//! with `D` the standard second difference. For `A = 0` and `dt = dx` it
//! reproduces d'Alembert's solution at the nodes.
//!
//! Two solutions `y`, `p` of the homogeneous recursion conserve the pairing
//! `W^n = dx/dt (<y^{n+1}, p^n> - <y^n, p^{n+1}>)`. With a source `r` in the
//! `y` equation, `W^{nt-1} - W^0` equals the space-time integral of `r p`
//! under the time weights of [`Grid::time_weight`]. Everything in
//! [`crate::hum`] is built on that identity.

use crate::field::{SpaceTimeField, StatePair};
use crate::grid::Grid;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("CFL violated: dt = {dt} exceeds dx = {dx}")]
    Cfl { dt: f64, dx: f64 },
    #[error("non-finite value produced at time level {level}")]
    NonFinite { level: usize },
}

/// Which end of `[0, T]` carries the prescribed data of a homogeneous solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeEnd {
    Initial,
    Terminal,
}

/// `out = D u` with zero Dirichlet values outside the interior.
pub fn second_difference(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (dx * dx);
    for i in 0..n {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * u[i] + right) * inv;
    }
}

/// Solves `y_tt - y_xx + A y = rhs` forward from `init` at `t = 0`.
pub fn solve_forward(
    grid: &Grid,
    potential: &SpaceTimeField,
    rhs: &SpaceTimeField,
    init: &StatePair,
) -> Result<SpaceTimeField, WaveError> {
    check_field(grid, potential, "potential")?;
    check_field(grid, rhs, "rhs")?;
    check_state(grid, init, "initial data")?;
    Stepper::new(grid, Some(potential), Some(rhs), false).march(init)
}

/// Homogeneous solve (`rhs = 0`) with data prescribed at one end of `[0, T]`.
///
/// With [`TimeEnd::Terminal`] the solve runs backward from `T`: it is the
/// forward solve, under the reflection `t -> T - t`, of the data
/// `(pos, -vel)` with the reflected potential.
pub fn solve_adjoint(
    grid: &Grid,
    potential: &SpaceTimeField,
    data: &StatePair,
    end: TimeEnd,
) -> Result<SpaceTimeField, WaveError> {
    check_field(grid, potential, "potential")?;
    check_state(grid, data, "adjoint data")?;
    match end {
        TimeEnd::Initial => Stepper::new(grid, Some(potential), None, false).march(data),
        TimeEnd::Terminal => {
            let reflected = StatePair::new(data.pos.clone(), data.vel.iter().map(|v| -v).collect());
            Stepper::new(grid, Some(potential), None, true).march(&reflected)
        }
    }
}

/// Homogeneous forward solve, optional potential.
pub(crate) fn solve_free(
    grid: &Grid,
    potential: Option<&SpaceTimeField>,
    data: &StatePair,
) -> Result<SpaceTimeField, WaveError> {
    Stepper::new(grid, potential, None, false).march(data)
}

/// Forward solve from zero data, optional potential.
pub(crate) fn solve_source(
    grid: &Grid,
    potential: Option<&SpaceTimeField>,
    rhs: &SpaceTimeField,
) -> Result<SpaceTimeField, WaveError> {
    Stepper::new(grid, potential, Some(rhs), false).march(&StatePair::zeros(grid))
}

/// Generic forward solve with optional potential and source.
pub(crate) fn solve_general(
    grid: &Grid,
    potential: Option<&SpaceTimeField>,
    rhs: Option<&SpaceTimeField>,
    init: &StatePair,
) -> Result<SpaceTimeField, WaveError> {
    Stepper::new(grid, potential, rhs, false).march(init)
}

/// Terminal state `(y(T), y_t(T))` of a field.
///
/// The velocity inverts the pure-wave backward Taylor start,
/// `v = (y^N - y^{N-1})/dt + dt/2 D y^N`, so [`terminal_levels`] is its exact
/// inverse and the map does not depend on the potential.
pub fn terminal_state(field: &SpaceTimeField) -> StatePair {
    let g = field.grid();
    let (dt, dx, nt) = (g.dt(), g.dx(), g.nt());
    let last = field.level(nt);
    let prev = field.level(nt - 1);
    let mut lap = vec![0.0; g.nx()];
    second_difference(last, dx, &mut lap);
    let vel = last
        .iter()
        .zip(prev)
        .zip(&lap)
        .map(|((a, b), l)| (a - b) / dt + 0.5 * dt * l)
        .collect();
    StatePair::new(last.to_vec(), vel)
}

/// Levels `(y^{N-1}, y^N)` whose [`terminal_state`] is `state`.
pub fn terminal_levels(grid: &Grid, state: &StatePair) -> (Vec<f64>, Vec<f64>) {
    let (dt, dx) = (grid.dt(), grid.dx());
    let mut lap = vec![0.0; grid.nx()];
    second_difference(&state.pos, dx, &mut lap);
    let prev = state
        .pos
        .iter()
        .zip(&state.vel)
        .zip(&lap)
        .map(|((p, v), l)| p - dt * v + 0.5 * dt * dt * l)
        .collect();
    (prev, state.pos.clone())
}

/// Initial state `(y(0), y_t(0))` of a homogeneous solution, inverting the
/// forward Taylor start with the potential at level 0.
pub fn initial_state(field: &SpaceTimeField, potential: Option<&SpaceTimeField>) -> StatePair {
    initial_state_from_levels(field.grid(), potential, field.level(0), field.level(1))
}

pub(crate) fn initial_state_from_levels(
    grid: &Grid,
    potential: Option<&SpaceTimeField>,
    l0: &[f64],
    l1: &[f64],
) -> StatePair {
    let (dt, dx) = (grid.dt(), grid.dx());
    let mut acc = vec![0.0; grid.nx()];
    second_difference(l0, dx, &mut acc);
    if let Some(a) = potential {
        for ((acc, a), y) in acc.iter_mut().zip(a.level(0)).zip(l0) {
            *acc -= a * y;
        }
    }
    let vel = l1
        .iter()
        .zip(l0)
        .zip(&acc)
        .map(|((y1, y0), acc)| (y1 - y0 - 0.5 * dt * dt * acc) / dt)
        .collect();
    StatePair::new(l0.to_vec(), vel)
}

/// Carries terminal levels `(y^{N-1}, y^N)` of a homogeneous solution back to
/// `t = 0` and returns the corresponding initial state.
///
/// This is the discrete flow map `S(0, T)` of the homogeneous equation; the
/// pairing `W` is invariant under it.
pub(crate) fn transport_to_initial(
    grid: &Grid,
    potential: Option<&SpaceTimeField>,
    prev: &[f64],
    last: &[f64],
) -> Result<StatePair, WaveError> {
    let stepper = Stepper::new(grid, potential, None, true);
    let (l1, l0) = stepper.march_levels(last, prev)?;
    Ok(initial_state_from_levels(grid, potential, &l0, &l1))
}

fn check_field(grid: &Grid, f: &SpaceTimeField, what: &str) -> Result<(), WaveError> {
    if !grid.same_shape(f.grid()) {
        return Err(WaveError::Dimension(format!(
            "{what} is {}x{}, grid is {}x{}",
            f.grid().nt() + 1,
            f.grid().nx(),
            grid.nt() + 1,
            grid.nx()
        )));
    }
    Ok(())
}

fn check_state(grid: &Grid, s: &StatePair, what: &str) -> Result<(), WaveError> {
    if !s.conforms(grid) {
        return Err(WaveError::Dimension(format!(
            "{what} has lengths ({}, {}), grid has nx = {}",
            s.pos.len(),
            s.vel.len(),
            grid.nx()
        )));
    }
    Ok(())
}

/// One leapfrog march. In reverse mode step `m` sits at physical level
/// `nt - m`.
struct Stepper<'a> {
    grid: &'a Grid,
    potential: Option<&'a SpaceTimeField>,
    rhs: Option<&'a SpaceTimeField>,
    reverse: bool,
}

impl<'a> Stepper<'a> {
    fn new(
        grid: &'a Grid,
        potential: Option<&'a SpaceTimeField>,
        rhs: Option<&'a SpaceTimeField>,
        reverse: bool,
    ) -> Self {
        Stepper {
            grid,
            potential,
            rhs,
            reverse,
        }
    }

    fn physical(&self, m: usize) -> usize {
        if self.reverse {
            self.grid.nt() - m
        } else {
            m
        }
    }

    /// `out = D y - A y + r` at step `m`.
    fn accel(&self, m: usize, y: &[f64], out: &mut [f64]) {
        second_difference(y, self.grid.dx(), out);
        let n = self.physical(m);
        if let Some(a) = self.potential {
            for ((o, a), y) in out.iter_mut().zip(a.level(n)).zip(y) {
                *o -= a * y;
            }
        }
        if let Some(r) = self.rhs {
            for (o, r) in out.iter_mut().zip(r.level(n)) {
                *o += r;
            }
        }
    }

    fn check(&self, m: usize, y: &[f64]) -> Result<(), WaveError> {
        if y.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(WaveError::NonFinite {
                level: self.physical(m),
            })
        }
    }

    fn start(&self, init: &StatePair) -> Vec<f64> {
        let dt = self.grid.dt();
        let mut acc = vec![0.0; self.grid.nx()];
        self.accel(0, &init.pos, &mut acc);
        init.pos
            .iter()
            .zip(&init.vel)
            .zip(&acc)
            .map(|((y, v), a)| y + dt * v + 0.5 * dt * dt * a)
            .collect()
    }

    fn march(&self, init: &StatePair) -> Result<SpaceTimeField, WaveError> {
        let dt = self.grid.dt();
        let dx = self.grid.dx();
        if dt > dx * (1.0 + 1e-12) {
            return Err(WaveError::Cfl { dt, dx });
        }
        self.check(0, &init.pos)?;
        let first = self.start(init);
        self.check(1, &first)?;

        let nx = self.grid.nx();
        let nt = self.grid.nt();
        let mut out = SpaceTimeField::zeros(self.grid);
        out.level_mut(self.physical(0)).copy_from_slice(&init.pos);
        out.level_mut(self.physical(1)).copy_from_slice(&first);

        let mut prev = init.pos.clone();
        let mut cur = first;
        let mut next = vec![0.0; nx];
        let mut acc = vec![0.0; nx];
        let dt2 = dt * dt;
        for m in 1..nt {
            self.accel(m, &cur, &mut acc);
            for i in 0..nx {
                next[i] = 2.0 * cur[i] - prev[i] + dt2 * acc[i];
            }
            self.check(m + 1, &next)?;
            out.level_mut(self.physical(m + 1)).copy_from_slice(&next);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(out)
    }

    /// Marches from two given levels (steps 0 and 1) to the end without
    /// storing intermediate levels; returns the levels at steps `nt - 1` and
    /// `nt`.
    fn march_levels(&self, l0: &[f64], l1: &[f64]) -> Result<(Vec<f64>, Vec<f64>), WaveError> {
        let nx = self.grid.nx();
        let dt2 = self.grid.dt() * self.grid.dt();
        let mut prev = l0.to_vec();
        let mut cur = l1.to_vec();
        let mut next = vec![0.0; nx];
        let mut acc = vec![0.0; nx];
        for m in 1..self.grid.nt() {
            self.accel(m, &cur, &mut acc);
            for i in 0..nx {
                next[i] = 2.0 * cur[i] - prev[i] + dt2 * acc[i];
            }
            self.check(m + 1, &next)?;
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok((prev, cur))
    }
}
