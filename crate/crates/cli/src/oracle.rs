//! Closed-form reference values that the tests check the numerics against.

use dynmaxent::special::beta_moments as beta;
use dynmaxent::special::digamma;

/// `(name, value)` pairs, in a fixed order.
pub fn values() -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = vec![
        ("partition(alpha=2) = B(2,2)".into(), beta::partition(2.0)),
        ("partition(alpha=3) = B(3,3)".into(), beta::partition(3.0)),
        ("mean_xi(alpha=2)".into(), beta::mean_xi(2.0)),
        ("mean_xi(alpha=1)".into(), beta::mean_xi(1.0)),
        ("mean_ln_xi(alpha=1)".into(), beta::mean_ln_xi(1.0)),
        ("mean_ln_xi(alpha=3) = 2(psi(3)-psi(6))".into(), 2.0 * (digamma(3.0) - digamma(6.0))),
        ("var_ln_xi(alpha=2)".into(), beta::var_ln_xi(2.0)),
        ("cov_xi_ln_xi(alpha=1)".into(), beta::cov_xi_ln_xi(1.0)),
        ("mean_xi_prime_squared(alpha=1)".into(), beta::mean_xi_prime_squared(1.0)),
        ("mean_xi_prime_squared_over_xi(alpha=2)".into(), beta::mean_xi_prime_squared_over_xi(2.0)),
        (
            "closure_rhs(ln_xi, alpha 2 -> 3)".into(),
            0.5 * beta::mean_xi_prime_squared_over_xi(2.0) / beta::var_ln_xi(2.0),
        ),
        (
            "closure_rhs(xi vs ln_xi, alpha 1 -> 2)".into(),
            0.5 * beta::mean_xi_prime_squared(1.0) / beta::cov_xi_ln_xi(1.0),
        ),
    ];
    // neutral symmetric model, N = 1: λ_k = k(k − 1 + 4Nμ)/(4N)
    for a in [1.5, 2.0, 3.0] {
        for k in 1..=3 {
            let kf = k as f64;
            v.push((format!("jacobi_eigenvalue(k={k}, 4Nmu={a}, N=1)"), kf * (kf - 1.0 + 2.0 * a) / 4.0));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_values_are_exact_enough() {
        let v = values();
        let get = |prefix: &str| v.iter().find(|(n, _)| n.starts_with(prefix)).unwrap().1;
        assert!((get("partition(alpha=2)") - 1.0 / 6.0).abs() < 1e-13);
        assert!((get("partition(alpha=3)") - 1.0 / 30.0).abs() < 1e-13);
        assert!((get("mean_ln_xi(alpha=1)") + 2.0).abs() < 1e-13);
        assert!((get("cov_xi_ln_xi(alpha=1)") - 1.0 / 18.0).abs() < 1e-15);
        assert!((get("mean_xi_prime_squared_over_xi(alpha=2)") - 2.0).abs() < 1e-12);
        assert!((get("closure_rhs(xi") - 3.0).abs() < 1e-12);
    }
}
