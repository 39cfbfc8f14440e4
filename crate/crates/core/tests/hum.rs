use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use wavecontrol_core::hum::{
    dual_functional, dual_gradient, gramian_apply, minimal_norm_control, minimal_norm_control_from,
    observability_probe, probe_sample, probe_seed, random_unit_state,
};
use wavecontrol_core::{norms, wave, AdjointData, Grid, HumOptions, LinearControlProblem, SpaceTimeField, StatePair};

fn reference_grid(nx: usize) -> Grid {
    Grid::new(nx, 1.0, 0.2, 0.8).unwrap()
}

fn sine_problem(g: &Grid) -> LinearControlProblem {
    let init = StatePair::from_fns(g, |x| (PI * x).sin(), |_| 0.0);
    LinearControlProblem::free(g, init, StatePair::zeros(g)).unwrap()
}

fn tight(tol: f64) -> HumOptions {
    HumOptions {
        tol,
        ..HumOptions::default()
    }
}

#[test]
fn gramian_is_symmetric_with_potential() {
    let g = reference_grid(60);
    let pot = SpaceTimeField::from_fn(&g, |x, t| 3.0 * (2.0 * x + t).sin());
    let p = LinearControlProblem::new(
        &g,
        pot,
        SpaceTimeField::zeros(&g),
        StatePair::zeros(&g),
        StatePair::zeros(&g),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let a = AdjointData::random(&g, &mut rng);
        let b = AdjointData::random(&g, &mut rng);
        let ab = gramian_apply(&p, &a).unwrap().h_inner(&g, &b);
        let ba = gramian_apply(&p, &b).unwrap().h_inner(&g, &a);
        assert!((ab - ba).abs() <= 1e-10 * ab.abs().max(ba.abs()), "{ab} {ba}");
    }
}

#[test]
fn gramian_curvature_is_observed_energy() {
    let g = reference_grid(50);
    let p = sine_problem(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = AdjointData::random(&g, &mut rng);
    let curv = gramian_apply(&p, &a).unwrap().h_inner(&g, &a);
    let phi = wave::solve_adjoint(&g, &p.potential, &a.to_state(), wave::TimeEnd::Initial).unwrap();
    let obs = norms::l2_qt_omega(&phi).powi(2);
    assert!((curv - obs).abs() <= 1e-10 * obs, "{curv} vs {obs}");
}

#[test]
fn dual_gradient_matches_finite_differences() {
    let g = reference_grid(40);
    let init = StatePair::from_fns(&g, |x| (PI * x).sin(), |x| x * (1.0 - x));
    let target = StatePair::from_fns(&g, |x| 0.2 * (2.0 * PI * x).sin(), |_| 0.0);
    let pot = SpaceTimeField::from_fn(&g, |x, _| 1.0 + x);
    let src = SpaceTimeField::from_fn(&g, |x, t| (x - t).cos());
    let p = LinearControlProblem::new(&g, pot, src, init, target).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let ad = AdjointData::random(&g, &mut rng);
        let dir = AdjointData::random(&g, &mut rng);
        let h = 1e-3;
        let shifted = |s: f64| AdjointData {
            phi0: ad.phi0.iter().zip(&dir.phi0).map(|(a, d)| a + s * d).collect(),
            phi1: ad.phi1.iter().zip(&dir.phi1).map(|(a, d)| a + s * d).collect(),
        };
        let fd = (dual_functional(&p, &shifted(h)).unwrap() - dual_functional(&p, &shifted(-h)).unwrap()) / (2.0 * h);
        let exact = dual_gradient(&p, &ad, 0.0).unwrap().h_inner(&g, &dir);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} vs {exact}");
    }
}

#[test]
fn sine_example_reaches_rest() {
    let g = reference_grid(200);
    let p = sine_problem(&g);
    let sol = minimal_norm_control(&p, &tight(1e-8)).unwrap();
    let init_norm = norms::v_norm(&g, &p.init);
    assert!(sol.terminal_residual <= 1e-6 * init_norm, "{}", sol.terminal_residual);
    assert!(sol.control.supported_in_omega());
    assert!(sol.control_norm().is_finite() && sol.control_norm() > 0.0);

    // one more CG sweep from the returned adjoint data changes nothing
    let again = minimal_norm_control_from(&p, &tight(1e-8), Some(&sol.adjoint)).unwrap();
    let diff = again.control.add_scaled(-1.0, &sol.control);
    assert!(norms::l2_qt_omega(&diff) <= 1e-6 * sol.control_norm());
}

#[test]
fn random_starts_give_the_same_control() {
    let g = reference_grid(100);
    let p = sine_problem(&g);
    let tol = 1e-10;
    let base = minimal_norm_control(&p, &tight(tol)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..2 {
        let start = AdjointData::random(&g, &mut rng);
        let sol = minimal_norm_control_from(&p, &tight(tol), Some(&start)).unwrap();
        let rel = (sol.control_norm() - base.control_norm()).abs() / base.control_norm();
        assert!(rel <= 10.0 * tol.max(1e-9), "{rel}");
    }
}

#[test]
fn duality_consistency_for_random_adjoints() {
    let g = reference_grid(80);
    let p = sine_problem(&g);
    let sol = minimal_norm_control(&p, &tight(1e-8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (dx, dt, nt) = (g.dx(), g.dt(), g.nt());
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
    for _ in 0..3 {
        let ad = AdjointData::random(&g, &mut rng);
        let phi = wave::solve_adjoint(&g, &p.potential, &ad.to_state(), wave::TimeEnd::Initial).unwrap();
        let direct = norms::inner_qt_omega(&sol.control, &phi);
        let z = &sol.state;
        let pairing = |n: usize| dx / dt * (dot(z.level(n + 1), phi.level(n)) - dot(z.level(n), phi.level(n + 1)));
        let initial = dx * (dot(&p.init.vel, &ad.phi0) - dot(&p.init.pos, &ad.phi1));
        let via_ends = pairing(nt - 1) - initial;
        assert!(
            (direct - via_ends).abs() <= 1e-9 * direct.abs().max(1e-300),
            "{direct} vs {via_ends}"
        );
    }
}

#[test]
fn control_difference_is_linear_in_potential_perturbation() {
    let g = reference_grid(100);
    let p = sine_problem(&g);
    let z = minimal_norm_control(&p, &tight(1e-10)).unwrap().state;
    let shape = SpaceTimeField::from_fn(&g, |x, t| (3.0 * x).cos() * (1.0 + t));
    let shape_sup = shape.sup_norm();
    let mut pts = Vec::new();
    for a in [1e-3, 1e-2, 1e-1] {
        let mut pert = p.clone();
        pert.potential = shape.map(|v| a * v / shape_sup);
        let y = minimal_norm_control(&pert, &tight(1e-10)).unwrap().state;
        pts.push((a.ln(), y.add_scaled(-1.0, &z).sup_norm().ln()));
    }
    let (slope, _) = wavecontrol_core::hum::linear_fit(&pts);
    assert!((slope - 1.0).abs() <= 0.15, "slope {slope}");
}

#[test]
fn probe_zero_row_matches_direct_solve() {
    let g = reference_grid(60);
    let opts = HumOptions::default();
    let seed = 7;
    let report = observability_probe(&g, &[0.0], 2, seed, &opts).unwrap();
    let row = &report.rows[1];
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed(seed, 1));
    let data = random_unit_state(&g, &mut rng);
    let p = LinearControlProblem::free(&g, data.clone(), StatePair::zeros(&g)).unwrap();
    let sol = minimal_norm_control(&p, &opts).unwrap();
    let direct = sol.control_norm() / norms::v_norm(&g, &data);
    assert!((row.ratio - direct).abs() <= 1e-12 * direct);
    assert_eq!(row, &probe_sample(&g, 0.0, 1, probe_seed(seed, 1), &opts).unwrap());
}

#[test]
fn probe_zero_magnitudes_have_comparable_ratios() {
    let g = reference_grid(60);
    let report = observability_probe(&g, &[0.0, 0.0], 3, 1, &HumOptions::default()).unwrap();
    let ratios: Vec<f64> = report.rows.iter().map(|r| r.ratio).collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 5.0, "{ratios:?}");
    assert_eq!(report.slope, 0.0);
}

#[test]
fn probe_cost_grows_with_potential() {
    let g = reference_grid(60);
    let report = observability_probe(&g, &[0.0, 10.0, 40.0], 3, 2, &HumOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 9);
    assert!(report.slope >= 0.0, "slope {}", report.slope);
}
