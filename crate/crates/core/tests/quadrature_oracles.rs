use approx::assert_relative_eq;
use dynmaxent::model::{Observable, Point as GenericPoint};
use dynmaxent::quadrature::{covariance, integrate, mobility, moments, Moment};
use dynmaxent::special::{beta_moments as beta, digamma, trigamma};
use dynmaxent::{ModelParams, ObservableSet, QuadratureSpec};
use proptest::prelude::*;

type Point = GenericPoint<f64>;

const GRID: [f64; 7] = [0.3, 0.5, 1.0, 1.1, 2.0, 3.0, 10.0];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Closed forms for `ν_σ = Beta(σ, σ)`; ξ ln ξ and ξ(ξ′)² go through σ+1.
fn oracles(s: f64) -> Vec<(&'static str, Box<dyn Fn(&Point) -> f64>, f64)> {
    let m1 = beta::mean_xi(s);
    let ln = beta::mean_ln_xi(s);
    vec![
        ("1", Box::new(|_: &Point| 1.0), 1.0),
        ("xi", Box::new(|p: &Point| p.xi()), m1),
        ("xi^2", Box::new(|p: &Point| p.xi().powi(2)), beta::mean_xi_squared(s)),
        ("ln xi", Box::new(|p: &Point| p.ln_xi()), ln),
        (
            "ln xi^2",
            Box::new(|p: &Point| p.ln_xi().powi(2)),
            beta::var_ln_xi(s) + ln * ln,
        ),
        (
            "xi ln xi",
            Box::new(|p: &Point| p.xi() * p.ln_xi()),
            beta::cov_xi_ln_xi(s) + m1 * ln,
        ),
        ("xi'^2", Box::new(|p: &Point| p.xi_prime().powi(2)), beta::mean_xi_prime_squared(s)),
        (
            "xi xi'^2",
            Box::new(|p: &Point| p.xi() * p.xi_prime().powi(2)),
            m1 * beta::mean_xi_prime_squared(s + 1.0),
        ),
    ]
}

#[test]
fn integrals_match_beta_oracles_on_grid() {
    let spec = QuadratureSpec::default();
    for &s in &GRID {
        let p = ModelParams::scalar(1.0, s);
        for (name, f, want) in oracles(s) {
            let got = integrate(&f, &p, &spec).unwrap();
            assert!(rel(got, want) < 1e-8, "alpha={s} f={name}: {got} vs {want}");
        }
    }
}

#[test]
fn composite_method_matches_too() {
    let spec = QuadratureSpec::composite();
    for &s in &[0.5, 2.0] {
        let p = ModelParams::scalar(1.0, s);
        for (name, f, want) in oracles(s) {
            let got = integrate(&f, &p, &spec).unwrap();
            assert!(rel(got, want) < 1e-8, "alpha={s} f={name}: {got} vs {want}");
        }
    }
}

#[test]
fn oracle_identities_are_consistent() {
    // ⟨ξ⟩ and ⟨(ξ′)²⟩ are tied by ξ′² = 1 − 4ξ
    for &s in &GRID {
        assert_relative_eq!(beta::mean_xi_prime_squared(s), 1.0 - 4.0 * beta::mean_xi(s), max_relative = 1e-14);
    }
    // Legendre duplication gives ψ(1) − ψ(2) = −1
    assert_relative_eq!(beta::mean_ln_xi(1.0_f64), -2.0, epsilon = 1e-14);
    assert_relative_eq!(digamma(1.0_f64), -0.577_215_664_901_532_9, epsilon = 1e-14);
    assert_relative_eq!(trigamma(1.0_f64), std::f64::consts::PI.powi(2) / 6.0, epsilon = 1e-13);
}

#[test]
fn spec_examples() {
    let spec = QuadratureSpec::default();
    let m = moments(&ModelParams::scalar(1.0, 1.0), &ObservableSet::xi(), &spec).unwrap();
    assert_relative_eq!(m.finite_values().unwrap()[0], 1.0 / 6.0, max_relative = 1e-12);
    let m = moments(
        &ModelParams::scalar(1.0, 2.0),
        &ObservableSet::new(vec![Observable::XiPrime]).unwrap(),
        &spec,
    )
    .unwrap();
    assert!(m.finite_values().unwrap()[0].abs() < 1e-14);
    let c = covariance(&ModelParams::scalar(1.0, 1.0), &ObservableSet::xi(), &ObservableSet::ln_xi(), &spec).unwrap();
    assert_relative_eq!(c[(0, 0)], 1.0 / 18.0, max_relative = 1e-10);
    let mob = mobility(&ModelParams::scalar(1.0, 2.0), &ObservableSet::ln_xi(), &ObservableSet::ln_xi(), &spec).unwrap();
    assert_relative_eq!(mob.get(0, 0).finite().unwrap(), 2.0, max_relative = 1e-10);
    let mob = mobility(&ModelParams::scalar(1.0, 1.0), &ObservableSet::xi(), &ObservableSet::ln_xi(), &spec).unwrap();
    assert_relative_eq!(mob.get(0, 0).finite().unwrap(), 1.0 / 3.0, max_relative = 1e-10);
    let mob = mobility(&ModelParams::scalar(1.0, 0.5), &ObservableSet::ln_xi(), &ObservableSet::ln_xi(), &spec).unwrap();
    assert_eq!(mob.get(0, 0), Moment::Divergent);
}

#[test]
fn large_exponent_covariance_vanishes() {
    let spec = QuadratureSpec::default();
    let mut last = f64::INFINITY;
    for &s in &[10.0, 50.0, 200.0] {
        let c = covariance(&ModelParams::scalar(1.0, s), &ObservableSet::xi(), &ObservableSet::ln_xi(), &spec).unwrap()
            [(0, 0)];
        assert!(c > 0.0 && c < last);
        assert!(rel(c, beta::cov_xi_ln_xi(s)) < 1e-8);
        last = c;
    }
    assert!(last < 1e-5);
}

#[test]
fn ln_xi_moment_is_strictly_increasing() {
    let spec = QuadratureSpec::default();
    let obs = ObservableSet::ln_xi();
    let vals: Vec<f64> = (0..=40)
        .map(|k| 0.2 * 100f64.powf(k as f64 / 40.0))
        .map(|a| moments(&ModelParams::scalar(1.0, a), &obs, &spec).unwrap().finite_values().unwrap()[0])
        .collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
    assert!(vals.iter().all(|&v| v < 0.25_f64.ln()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_exponents_match_oracles(s in 0.25f64..40.0) {
        let spec = QuadratureSpec::default();
        let p = ModelParams::scalar(1.0, s);
        let obs = ObservableSet::new(vec![Observable::Xi, Observable::LnXi]).unwrap();
        let m = moments(&p, &obs, &spec).unwrap().finite_values().unwrap();
        prop_assert!(rel(m[0], beta::mean_xi(s)) < 1e-8);
        prop_assert!(rel(m[1], beta::mean_ln_xi(s)) < 1e-8);
    }

    #[test]
    fn vector_moments_respect_ranges_and_psd(
        gamma in -3.0f64..3.0,
        eta in -3.0f64..3.0,
        four_mu in 0.2f64..4.0,
    ) {
        let spec = QuadratureSpec::default();
        let p = ModelParams::vector(1.0, gamma, eta, four_mu / 4.0);
        let obs = ObservableSet::generic();
        let m = moments(&p, &obs, &spec).unwrap().finite_values().unwrap();
        prop_assert!(m[0] > -1.0 && m[0] < 1.0);
        prop_assert!(m[1] > 0.0 && m[1] < 0.25);
        prop_assert!(m[2] < 0.25_f64.ln());
        let c = covariance(&p, &obs, &obs, &spec).unwrap();
        prop_assert!(c.is_positive_semidefinite(1e-12));
    }
}
