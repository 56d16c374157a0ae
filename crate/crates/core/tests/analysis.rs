use dynmaxent::analysis::{
    covariance_sweep, entropy_gradient_check, entropy_hessian_diagonal, nu_limit_check, relative_entropy,
    solve_moment_equation, AnalysisError,
};
use dynmaxent::fp_solver::{project_density, DiscreteDensity, Grid1D};
use dynmaxent::special::beta_moments as beta;
use dynmaxent::{ModelParams, ObservableSet, QuadratureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn relative_entropy_is_nonnegative_on_random_pairs() {
    let spec = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = Grid1D::new(128).unwrap();
    for _ in 0..50 {
        let u: Vec<f64> = (0..g.n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let mut u = DiscreteDensity::new(g, u).unwrap();
        u.normalize();
        let p = ModelParams::scalar(1.0, rng.gen_range(0.2..5.0));
        assert!(relative_entropy(&u, &p, &spec).unwrap() > 0.0);
        let at = project_density(&p, g, &spec).unwrap();
        assert!(relative_entropy(&at, &p, &spec).unwrap().abs() < 1e-10);
    }
}

#[test]
fn moment_equation_round_trips() {
    let spec = QuadratureSpec::default();
    for &a in &[0.3_f64, 1.0, 2.0, 5.0, 20.0] {
        let got = solve_moment_equation(beta::mean_ln_xi(a), 1e-10, &spec).unwrap();
        assert!((got - a).abs() < 1e-8 * a, "{a}: {got}");
    }
    for t in [0.25_f64.ln(), -1.0, 0.0] {
        assert!(matches!(solve_moment_equation(t, 1e-10, &spec), Err(AnalysisError::OutOfRange(_))));
    }
}

#[test]
fn covariance_sweep_follows_closed_form() {
    let spec = QuadratureSpec::default();
    let alphas: Vec<f64> = (0..=30).map(|k| 0.2 * 1000f64.powf(k as f64 / 30.0)).collect();
    let pts = covariance_sweep(&alphas, &spec);
    let vals: Vec<f64> = pts.iter().map(|p| *p.covariance.as_ref().unwrap()).collect();
    for (p, v) in pts.iter().zip(&vals) {
        assert!(*v > 0.0);
        assert!((v - beta::cov_xi_ln_xi(p.alpha)).abs() < 1e-9 * v);
    }
    // decreasing on the whole range: no interior maximum
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
    assert!(covariance_sweep(&[0.0_f64], &spec)[0].covariance.is_err());
}

#[test]
fn nu_limit_examples() {
    let spec = QuadratureSpec::default();
    for s in [1e-3_f64, 0.5, 7.0, 1e3] {
        assert!((nu_limit_check(|_| 1.0, s, &spec).unwrap() - 1.0).abs() < 1e-12);
    }
    assert!((nu_limit_check(|x| x, 1e3_f64, &spec).unwrap() - 0.5).abs() < 1e-3);
    assert!((nu_limit_check(|x| x * x, 1e-3_f64, &spec).unwrap() - 0.5).abs() < 2e-2);
}

#[test]
fn gradient_matches_finite_differences() {
    let spec = QuadratureSpec::default();
    let g = Grid1D::new(1024).unwrap();
    let u = project_density(&ModelParams::scalar(1.0, 3.0), g, &spec).unwrap();
    let theta = ModelParams::scalar(1.0, 2.0).natural();
    let (a, fd) = entropy_gradient_check(&u, &theta, &ObservableSet::ln_xi(), 0, 1e-5, &spec).unwrap();
    assert!((a - fd).abs() < 1e-6 * a.abs(), "{a} vs {fd}");
    let p = ModelParams::vector(1.0, 0.4, -0.2, 0.3);
    let h = entropy_hessian_diagonal(&p.natural(), &ObservableSet::generic(), &spec).unwrap();
    assert!(h.iter().all(|&v| v >= 0.0));
}
