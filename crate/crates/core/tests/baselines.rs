use std::f64::consts::PI;
use wavecontrol_core::baselines::{self, BaselineOutcome, Method};
use wavecontrol_core::least_squares::{self as ls, LsConfig, Outcome};
use wavecontrol_core::{Grid, Nonlinearity, StatePair};

fn grid(nx: usize) -> Grid {
    Grid::new(nx, 1.0, 0.2, 0.8).unwrap()
}

fn sine_init(g: &Grid, amp: f64) -> StatePair {
    StatePair::from_fns(g, |x| amp * (PI * x).sin(), |_| 0.0)
}

#[test]
fn picard_contracts_and_slows_with_lipschitz_constant() {
    let g = grid(100);
    let cfg = LsConfig {
        e_tol: Some(1e-24),
        ..LsConfig::default()
    };
    let mut firsts = Vec::new();
    for b in [0.05, 0.1, 0.2] {
        let run = baselines::run(
            Method::Picard,
            &g,
            &sine_init(&g, 1.0),
            &StatePair::zeros(&g),
            &Nonlinearity::sine(0.0, b),
            &cfg,
        )
        .unwrap();
        assert_eq!(run.outcome, BaselineOutcome::Converged, "b={b}");
        assert!(!run.contraction_ratios.is_empty());
        assert!(
            run.contraction_ratios.iter().all(|&r| r < 1.0),
            "b={b}: {:?}",
            run.contraction_ratios
        );
        firsts.push(run.contraction_ratios[0]);
    }
    assert!(firsts.windows(2).all(|w| w[1] > w[0]), "{firsts:?}");
}

#[test]
fn newton_matches_least_squares_while_steps_are_unit() {
    let g = grid(100);
    let nl = Nonlinearity::sine(1.0, 0.5);
    let init = sine_init(&g, 0.05);
    let target = StatePair::zeros(&g);
    let cfg = LsConfig {
        e_tol: Some(1e-26),
        ..LsConfig::default()
    };
    let damped = ls::solve(&g, &init, &target, &nl, &cfg).unwrap();
    let newton = baselines::run(Method::Newton, &g, &init, &target, &nl, &cfg).unwrap();
    assert_eq!(newton.outcome, BaselineOutcome::Converged);
    assert_eq!(damped.log[0].e, newton.log[0].e);
    for (a, b) in damped.log.iter().zip(&newton.log).skip(1) {
        if damped.log[a.k - 1].lambda != Some(1.0) {
            break;
        }
        assert_eq!(a.e, b.e, "k={}", a.k);
    }
    // ln E_{k+1} / ln E_k, leaving out the step that lands on the roundoff floor
    let floor = 1e3 * f64::EPSILON * f64::EPSILON * newton.log[0].e;
    let rates: Vec<f64> = newton
        .log
        .windows(2)
        .filter(|w| w[1].e > floor)
        .filter_map(|w| w[0].rate)
        .collect();
    assert!(!rates.is_empty());
    assert!(rates.iter().all(|&r| r >= 1.5), "{rates:?}");
}

#[test]
fn damped_least_squares_converges_where_fixed_point_baselines_do_not() {
    let g = grid(100);
    let nl = Nonlinearity::sine(0.0, 50.0);
    let init = sine_init(&g, 20.0);
    let target = StatePair::zeros(&g);
    let cfg = LsConfig {
        max_outer: 40,
        ..LsConfig::default()
    };
    let damped = ls::solve(&g, &init, &target, &nl, &cfg).unwrap();
    assert_eq!(damped.outcome, Outcome::Converged);
    for m in [Method::Picard, Method::NewtonAlt] {
        let outcome = match baselines::run(m, &g, &init, &target, &nl, &cfg) {
            Ok(run) => run.outcome,
            Err(_) => continue,
        };
        assert_ne!(outcome, BaselineOutcome::Converged, "{m}");
    }
}

#[test]
fn newton_alt_agrees_with_newton_on_mild_problem() {
    let g = grid(100);
    let nl = Nonlinearity::sine(1.0, 0.5);
    let init = sine_init(&g, 0.3);
    let target = StatePair::zeros(&g);
    let cfg = LsConfig::default();
    for m in [Method::Picard, Method::Newton, Method::NewtonAlt] {
        let run = baselines::run(m, &g, &init, &target, &nl, &cfg).unwrap();
        assert_eq!(run.outcome, BaselineOutcome::Converged, "{m}");
        let pair = run.pair.unwrap();
        assert!(ls::error_functional(&pair, &nl) <= cfg.effective_e_tol(), "{m}");
        assert!(pair.terminal_miss() <= 1e-6, "{m}");
    }
}
