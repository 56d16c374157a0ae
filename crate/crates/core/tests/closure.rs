use dynmaxent::analysis::error_indicator;
use dynmaxent::dynmaxent::{integrate, Closure, ClosureError, ClosureSpec, IntegrateOptions};
use dynmaxent::fp_solver::{project_density, solve, ChangCooper, Grid1D, SolveOptions};
use dynmaxent::quadrature::{moments, second_order_theta};
use dynmaxent::special::beta_moments as beta;
use dynmaxent::{ModelParams, ObservableSet, QuadratureSpec, TimeScale};

#[test]
fn consistent_scale_matches_fp_moment_derivative_at_start() {
    // B = ξ under u0 = discrete equilibrium of α0, pushed by the target scheme
    let spec = QuadratureSpec::default();
    let init = ModelParams::scalar(1.0, 2.0);
    let target = ModelParams::scalar(1.0, 3.0);
    let g = Grid1D::new(4096).unwrap();
    let u0 = ChangCooper::new(&init, g).unwrap().discrete_stationary();
    let cc = ChangCooper::new(&target, g).unwrap();
    let dt = cc.max_stable_dt(0.01);
    let mut u1 = u0.u.clone();
    cc.step(&mut u1, dt).unwrap();
    let obs = ObservableSet::xi();
    let m0 = u0.moments(&obs)[0];
    let m1 = dynmaxent::DiscreteDensity::new(g, u1).unwrap().moments(&obs)[0];
    let fp_rate = (m1 - m0) / dt;

    let cspec = ClosureSpec::scalar_modified().with_time_scale(TimeScale::Consistent);
    let c = Closure::for_model(cspec, &target).unwrap();
    let dtheta = c.rhs(&init.natural(), &target.natural()).unwrap()[0];
    let so = second_order_theta(&init.natural(), &obs, &ObservableSet::ln_xi(), &spec).unwrap();
    let closure_rate = so.covariance[(0, 0)] * dtheta;
    assert!(
        (fp_rate - closure_rate).abs() < 1e-3 * closure_rate.abs(),
        "{fp_rate} vs {closure_rate}"
    );
    // d⟨ξ⟩/dt = κ⟨(ξ′)²⟩(α − α*) in closed form
    let exact = 0.25 * beta::mean_xi_prime_squared(2.0) * 1.0;
    assert!((closure_rate - exact).abs() < 1e-10);
}

#[test]
fn modified_scalar_below_one_exists_and_tracks_fp() {
    let init = ModelParams::scalar(1.0, 2.0);
    let target = ModelParams::scalar(1.0, 0.5);
    let c = Closure::for_model(ClosureSpec::scalar_modified(), &target).unwrap();
    let obs = ObservableSet::ln_xi();
    let mut opts = IntegrateOptions::new(6.0, 1e-3, obs.clone());
    opts.sample_every = 5;
    let tr = integrate(&c, &init.natural(), &target.natural(), &opts).unwrap();
    let a: Vec<f64> = tr.theta.iter().map(|t| t.ln_xi).collect();
    assert!(a.windows(2).all(|w| w[1] <= w[0]));
    assert!(a.iter().all(|&v| (0.5..=2.0).contains(&v)));
    assert!((a.last().unwrap() - 0.5).abs() < 1e-2);

    let g = Grid1D::new(512).unwrap();
    let u0 = project_density(&init, g, &QuadratureSpec::default()).unwrap();
    let mut fo = SolveOptions::fixed(6.0);
    fo.sample_every = 20;
    let fp = solve(&target, &u0, &obs, &fo).unwrap();
    let e = error_indicator(&fp.times, &fp.series(0), &tr.times, &tr.series(0)).unwrap();
    assert!(e < 0.1, "{e}");
}

#[test]
fn original_refuses_and_modified_accepts_small_target() {
    let init = ModelParams::scalar(1.0, 2.0);
    let target = ModelParams::scalar(1.0, 0.7);
    let c = Closure::for_model(ClosureSpec::scalar_original(), &target).unwrap();
    let opts = IntegrateOptions::new(1.0, 1e-2, ObservableSet::ln_xi());
    assert!(matches!(
        integrate(&c, &init.natural(), &target.natural(), &opts),
        Err(ClosureError::NotApplicable { .. })
    ));
}

#[test]
fn vector_modified_reaches_target_moments() {
    let spec = QuadratureSpec::default();
    let init = ModelParams::vector(1.0, 2.0, -1.0, 0.5);
    let target = ModelParams::vector(1.0, 0.0, 1.0, 0.275);
    let obs = ObservableSet::generic();
    let c = Closure::for_model(ClosureSpec::vector_modified(), &target).unwrap();
    let mut opts = IntegrateOptions::new(40.0, 1e-2, obs.clone());
    opts.sample_every = 100;
    let tr = integrate(&c, &init.natural(), &target.natural(), &opts).unwrap();
    let want = moments(&target, &obs, &spec).unwrap().finite_values().unwrap();
    let got = tr.moments.last().unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-6, "{g} vs {w}");
    }
}

#[test]
fn vector_original_matches_modified_at_fixed_point() {
    let target = ModelParams::vector(1.0, 0.3, 1.0, 0.4);
    for spec in [ClosureSpec::vector_original(), ClosureSpec::vector_modified()] {
        let c = Closure::for_model(spec, &target).unwrap();
        let r = c.rhs(&target.natural(), &target.natural()).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn oversized_steps_are_halved_not_failed() {
    let init = ModelParams::scalar(1.0, 2.0);
    let target = ModelParams::scalar(1.0, 1.1);
    let c = Closure::for_model(ClosureSpec::scalar_original(), &target).unwrap();
    let opts = IntegrateOptions::new(20.0, 4.0, ObservableSet::ln_xi());
    let tr = integrate(&c, &init.natural(), &target.natural(), &opts).unwrap();
    assert!(!tr.halvings.is_empty());
    assert!(tr.theta.iter().all(|t| t.ln_xi > 1.0));
}
