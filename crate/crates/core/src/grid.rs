//! Space-time grid of `Q_T = (0,1) x (0,T)` with a control window `omega`.

use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

/// Relative slack when comparing `dt` against `dx` for the CFL condition.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("nx must be at least 3 (got {0})")]
    TooFewNodes(usize),
    #[error("horizon T must be positive and finite (got {0})")]
    BadHorizon(f64),
    #[error("control window must satisfy 0 <= l1 < l2 <= 1 (got ({0}, {1}))")]
    BadWindow(f64, f64),
    #[error("time step must be positive and finite (got {0})")]
    BadStep(f64),
    #[error("CFL violated: dt = {dt} exceeds dx = {dx}")]
    Cfl { dt: f64, dx: f64 },
    #[error("control window ({0}, {1}) contains no interior grid node")]
    EmptyWindow(f64, f64),
}

/// Uniform grid on `(0,1) x (0,T)`.
///
/// Space nodes are `x_j = j dx`, `j = 0..=nx+1`; only the `nx` interior nodes
/// are stored, the Dirichlet boundary values are implicit zeros. Time levels
/// are `t_n = n dt`, `n = 0..=nt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    nt: usize,
    dx: f64,
    dt: f64,
    horizon: f64,
    l1: f64,
    l2: f64,
}

impl Grid {
    /// Grid with the default time step `dt = dx`.
    pub fn new(nx: usize, horizon: f64, l1: f64, l2: f64) -> Result<Self, GridError> {
        let dx = 1.0 / (nx as f64 + 1.0);
        Self::with_dt(nx, horizon, l1, l2, dx)
    }

    pub fn with_dt(nx: usize, horizon: f64, l1: f64, l2: f64, dt: f64) -> Result<Self, GridError> {
        if nx < 3 {
            return Err(GridError::TooFewNodes(nx));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(GridError::BadHorizon(horizon));
        }
        if !(l1.is_finite() && l2.is_finite() && 0.0 <= l1 && l1 < l2 && l2 <= 1.0) {
            return Err(GridError::BadWindow(l1, l2));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(GridError::BadStep(dt));
        }
        let dx = 1.0 / (nx as f64 + 1.0);
        if dt > dx * (1.0 + CFL_SLACK) {
            return Err(GridError::Cfl { dt, dx });
        }
        let nt = ((horizon / dt).round() as usize).max(1);
        let grid = Grid {
            nx,
            nt,
            dx,
            dt,
            horizon,
            l1,
            l2,
        };
        if grid.omega_nodes().is_empty() {
            return Err(GridError::EmptyWindow(l1, l2));
        }
        Ok(grid)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Requested horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time actually reached by the scheme, `nt * dt`.
    pub fn final_time(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn omega(&self) -> (f64, f64) {
        (self.l1, self.l2)
    }

    /// Coordinate of interior node `i` (storage index, `0..nx`).
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Interior coordinates in storage order.
    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Storage indices of the interior nodes inside `omega`.
    ///
    /// Node indices `j` with `ceil(l1/dx) <= j < floor(l2/dx)`, clipped to the
    /// interior, shifted to storage indices `j - 1`.
    pub fn omega_nodes(&self) -> Range<usize> {
        let lo = ((self.l1 / self.dx) - 1e-9).ceil().max(1.0) as usize;
        let hi = ((self.l2 / self.dx) + 1e-9).floor().min(self.nx as f64 + 1.0) as usize;
        if hi <= lo {
            return 0..0;
        }
        (lo - 1)..(hi - 1)
    }

    /// Indicator of `omega` on the interior nodes.
    pub fn omega_mask(&self) -> Vec<bool> {
        let r = self.omega_nodes();
        (0..self.nx).map(|i| r.contains(&i)).collect()
    }

    /// Quadrature weight of time level `n` for space-time integrals.
    ///
    /// Left-rectangle rule with a half weight on the first level; the last
    /// level carries no weight. These are exactly the weights with which a
    /// source enters the leapfrog scheme, which makes the discrete duality
    /// identity between forward and adjoint solves exact.
    pub fn time_weight(&self, n: usize) -> f64 {
        if n == 0 {
            0.5 * self.dt
        } else if n < self.nt {
            self.dt
        } else {
            0.0
        }
    }

    /// `T > 2 max(l1, 1 - l2)`.
    pub fn t_exceeds_geometric(&self) -> bool {
        self.final_time() > self.geometric_time()
    }

    /// The critical time `2 max(l1, 1 - l2)`.
    pub fn geometric_time(&self) -> f64 {
        2.0 * self.l1.max(1.0 - self.l2)
    }

    pub(crate) fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.nt == other.nt
    }
}

/// Geometric control check on the raw parameters.
pub fn t_exceeds_geometric(grid: &Grid) -> bool {
    grid.t_exceeds_geometric()
}
