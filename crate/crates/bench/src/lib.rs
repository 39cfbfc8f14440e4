//! Shared fixtures for the solver benchmarks.

use std::f64::consts::PI;
use wavecontrol_core::least_squares::{self as ls, InitMode, TrajectoryControlPair};
use wavecontrol_core::{AdjointData, Grid, HumOptions, LinearControlProblem, Nonlinearity, StatePair};

/// `omega = (0.2, 0.8)`, `T = 1`, `dt = dx`.
pub fn reference_grid(nx: usize) -> Grid {
    Grid::new(nx, 1.0, 0.2, 0.8).expect("valid reference grid")
}

pub fn sine_state(grid: &Grid, amp: f64) -> StatePair {
    StatePair::from_fns(grid, |x| amp * (PI * x).sin(), |_| 0.0)
}

/// Drive `(sin(pi x), 0)` to rest with no potential.
pub fn free_problem(grid: &Grid) -> LinearControlProblem {
    LinearControlProblem::free(grid, sine_state(grid, 1.0), StatePair::zeros(grid)).expect("conforming data")
}

/// Starting pair of the least-squares iteration for `sine(1, 0.5)`.
pub fn sine_start(grid: &Grid) -> (TrajectoryControlPair, Nonlinearity) {
    let nl = Nonlinearity::sine(1.0, 0.5);
    let pair = ls::initial_pair(
        grid,
        &sine_state(grid, 0.3),
        &StatePair::zeros(grid),
        &nl,
        &InitMode::LinearStar,
        &HumOptions::default(),
    )
    .expect("linear control exists for T = 1");
    (pair, nl)
}

/// Broadband adjoint data: a few sine modes with decaying weights.
pub fn adjoint_data(grid: &Grid) -> AdjointData {
    let modes = |x: f64, phase: f64| {
        (1..=8)
            .map(|k| ((k as f64) * PI * x + phase).sin() / k as f64)
            .sum::<f64>()
    };
    let xs = grid.xs();
    AdjointData {
        phi0: xs.iter().map(|&x| modes(x, 0.0) * (PI * x).sin()).collect(),
        phi1: xs.iter().map(|&x| modes(x, 1.0) * (PI * x).sin()).collect(),
    }
}
