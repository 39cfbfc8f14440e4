//! Discrete norms of `L^2(Q_T)`, `L^2(q_T)`, `V = H^1_0 x L^2` and the wave
//! energy.
//!
//! Space integrals use the trapezoid rule over interior and boundary nodes
//! (boundary values vanish), time integrals the weights of
//! [`Grid::time_weight`].

use crate::field::{SpaceTimeField, StatePair};
use crate::grid::Grid;
use crate::wave::second_difference;

/// `(a, b)_{L^2(Q_T)}`.
pub fn inner_qt(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let g = a.grid();
    a.levels()
        .zip(b.levels())
        .enumerate()
        .map(|(n, (ra, rb))| g.time_weight(n) * dot(ra, rb))
        .sum::<f64>()
        * g.dx()
}

/// `(a, b)_{L^2(q_T)}`: the same quadrature restricted to the nodes of `omega`.
pub fn inner_qt_omega(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let g = a.grid();
    let r = g.omega_nodes();
    a.levels()
        .zip(b.levels())
        .enumerate()
        .map(|(n, (ra, rb))| g.time_weight(n) * dot(&ra[r.clone()], &rb[r.clone()]))
        .sum::<f64>()
        * g.dx()
}

pub fn l2_qt(field: &SpaceTimeField) -> f64 {
    inner_qt(field, field).sqrt()
}

pub fn l2_qt_omega(field: &SpaceTimeField) -> f64 {
    inner_qt_omega(field, field).sqrt()
}

/// `dx * sum(a b)` over the interior nodes.
pub fn inner_space(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.dx() * dot(a, b)
}

pub fn l2_space(grid: &Grid, a: &[f64]) -> f64 {
    inner_space(grid, a, a).sqrt()
}

/// `||u_x||_{L^2(0,1)}` from forward differences, boundary zeros included.
pub fn h1_seminorm(grid: &Grid, u: &[f64]) -> f64 {
    let dx = grid.dx();
    let n = u.len();
    let mut s = 0.0;
    for j in 0..=n {
        let right = if j < n { u[j] } else { 0.0 };
        let left = if j > 0 { u[j - 1] } else { 0.0 };
        s += (right - left).powi(2);
    }
    (s / dx).sqrt()
}

/// `(||pos_x||^2 + ||vel||^2)^{1/2}`.
pub fn v_norm(grid: &Grid, state: &StatePair) -> f64 {
    (h1_seminorm(grid, &state.pos).powi(2) + l2_space(grid, &state.vel).powi(2)).sqrt()
}

/// Discrete energy between levels `n` and `n + 1` of a solution of the pure
/// wave equation,
/// `1/2 ||(y^{n+1} - y^n)/dt||^2 + 1/2 <-D y^{n+1}, y^n>`.
///
/// Exactly conserved by the leapfrog scheme when `A = 0` and `rhs = 0`.
pub fn energy(field: &SpaceTimeField, n: usize) -> f64 {
    let g = field.grid();
    let (a, b) = (field.level(n), field.level(n + 1));
    let dt = g.dt();
    let kinetic: f64 = a.iter().zip(b).map(|(a, b)| ((b - a) / dt).powi(2)).sum();
    let mut lap = vec![0.0; g.nx()];
    second_difference(b, g.dx(), &mut lap);
    let potential = -dot(&lap, a);
    0.5 * g.dx() * (kinetic + potential)
}

/// `max_n ||(y^n, (y^{n+1} - y^n)/dt)||_V`.
pub fn sup_v_norm(field: &SpaceTimeField) -> f64 {
    let g = field.grid();
    (0..g.nt())
        .map(|n| {
            let a = field.level(n);
            let b = field.level(n + 1);
            let vel: Vec<f64> = a.iter().zip(b).map(|(a, b)| (b - a) / g.dt()).collect();
            (h1_seminorm(g, a).powi(2) + l2_space(g, &vel).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::solve_forward;
    use std::f64::consts::PI;

    #[test]
    fn zero_field_has_zero_norm() {
        let g = Grid::new(20, 1.0, 0.2, 0.8).unwrap();
        assert_eq!(l2_qt(&SpaceTimeField::zeros(&g)), 0.0);
        assert_eq!(l2_qt_omega(&SpaceTimeField::zeros(&g)), 0.0);
    }

    #[test]
    fn v_norm_of_first_mode() {
        let g = Grid::new(400, 1.0, 0.2, 0.8).unwrap();
        let s = StatePair::from_fns(&g, |x| (PI * x).sin(), |_| 0.0);
        let v = v_norm(&g, &s);
        let exact = PI / 2f64.sqrt();
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
    }

    #[test]
    fn constant_field_norms() {
        let g = Grid::new(99, 1.0, 0.25, 0.75).unwrap();
        let one = SpaceTimeField::constant(&g, 1.0);
        let t_eff = g.final_time() - 0.5 * g.dt();
        let space = g.nx() as f64 * g.dx();
        assert!((l2_qt(&one).powi(2) - t_eff * space).abs() < 1e-12);
        let w = g.omega_nodes().len() as f64 * g.dx();
        assert!((l2_qt_omega(&one).powi(2) - t_eff * w).abs() < 1e-12);
        assert!((w - 0.5).abs() < 0.02);
    }

    #[test]
    fn energy_is_conserved_for_free_waves() {
        let g = Grid::new(200, 1.0, 0.2, 0.8).unwrap();
        let z = SpaceTimeField::zeros(&g);
        let init = StatePair::from_fns(&g, |x| (PI * x).sin() + 0.3 * (5.0 * PI * x).sin(), |x| x * (1.0 - x));
        let y = solve_forward(&g, &z, &z, &init).unwrap();
        let e0 = energy(&y, 0);
        let drift = (0..g.nt()).map(|n| (energy(&y, n) - e0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-12 * e0, "drift {drift} e0 {e0}");
    }
}
