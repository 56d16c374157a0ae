//! Gamma-family special functions for positive real arguments.
//!
//! All three functions shift the argument up past [`SHIFT`] with the
//! recurrence relations and then sum an asymptotic (Stirling-type) series,
//! which at that distance is accurate to a few ulps in `f64`. These are the
//! closed forms every moment of the symmetric Beta family reduces to, so the
//! quadrature layer is checked against them.

use crate::real::Real;

const SHIFT: f64 = 10.0;

/// `ln Γ(x)` for `x > 0`. Returns NaN outside the domain.
pub fn ln_gamma<F: Real>(x: F) -> F {
    if !(x > F::zero()) {
        return F::nan();
    }
    let shift = F::lit(SHIFT);
    let mut z = x;
    let mut log_prod = F::zero();
    while z < shift {
        log_prod = log_prod + z.ln();
        z = z + F::one();
    }
    let inv = z.recip();
    let inv2 = inv * inv;
    // Bernoulli terms B_{2k} / (2k (2k-1) z^{2k-1})
    let series = inv
        * (F::lit(1.0 / 12.0)
            + inv2
                * (F::lit(-1.0 / 360.0)
                    + inv2
                        * (F::lit(1.0 / 1260.0)
                            + inv2
                                * (F::lit(-1.0 / 1680.0)
                                    + inv2
                                        * (F::lit(1.0 / 1188.0)
                                            + inv2
                                                * (F::lit(-691.0 / 360360.0)
                                                    + inv2 * F::lit(1.0 / 156.0)))))));
    let half_ln_two_pi = F::lit(0.918_938_533_204_672_7);
    (z - F::lit(0.5)) * z.ln() - z + half_ln_two_pi + series - log_prod
}

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b)`.
pub fn ln_beta<F: Real>(a: F, b: F) -> F {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma<F: Real>(x: F) -> F {
    if !(x > F::zero()) {
        return F::nan();
    }
    let shift = F::lit(SHIFT);
    let mut z = x;
    let mut acc = F::zero();
    while z < shift {
        acc = acc - z.recip();
        z = z + F::one();
    }
    let inv = z.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (F::lit(-1.0 / 12.0)
            + inv2
                * (F::lit(1.0 / 120.0)
                    + inv2
                        * (F::lit(-1.0 / 252.0)
                            + inv2
                                * (F::lit(1.0 / 240.0)
                                    + inv2
                                        * (F::lit(-1.0 / 132.0)
                                            + inv2 * F::lit(691.0 / 32760.0))))));
    acc + z.ln() - F::lit(0.5) * inv + series
}

/// Trigamma `ψ′(x)` for `x > 0`.
pub fn trigamma<F: Real>(x: F) -> F {
    if !(x > F::zero()) {
        return F::nan();
    }
    let shift = F::lit(SHIFT);
    let mut z = x;
    let mut acc = F::zero();
    while z < shift {
        acc = acc + (z * z).recip();
        z = z + F::one();
    }
    let inv = z.recip();
    let inv2 = inv * inv;
    let series = inv
        + inv2 * F::lit(0.5)
        + inv2
            * inv
            * (F::lit(1.0 / 6.0)
                + inv2
                    * (F::lit(-1.0 / 30.0)
                        + inv2
                            * (F::lit(1.0 / 42.0)
                                + inv2
                                    * (F::lit(-1.0 / 30.0)
                                        + inv2
                                            * (F::lit(5.0 / 66.0)
                                                + inv2 * F::lit(-691.0 / 2730.0))))));
    acc + series
}

/// Closed-form moments of the symmetric Beta density `ν_σ ∝ ξ^{σ−1}`.
///
/// These are the identities the scalar model reduces to; they are kept in
/// one place so the CLI `oracle` command and the tests print the same
/// numbers.
pub mod beta_moments {
    use super::{digamma, ln_beta, trigamma};
    use crate::real::Real;

    /// `⟨ξ⟩ = σ / (2(2σ+1))`.
    pub fn mean_xi<F: Real>(sigma: F) -> F {
        sigma / (F::lit(2.0) * (F::lit(2.0) * sigma + F::one()))
    }

    /// `⟨ξ²⟩ = ⟨ξ⟩_σ · ⟨ξ⟩_{σ+1}`.
    pub fn mean_xi_squared<F: Real>(sigma: F) -> F {
        mean_xi(sigma) * mean_xi(sigma + F::one())
    }

    /// `⟨ln ξ⟩ = 2(ψ(σ) − ψ(2σ))`.
    pub fn mean_ln_xi<F: Real>(sigma: F) -> F {
        F::lit(2.0) * (digamma(sigma) - digamma(F::lit(2.0) * sigma))
    }

    /// `Var(ln ξ) = 2ψ′(σ) − 4ψ′(2σ)`.
    pub fn var_ln_xi<F: Real>(sigma: F) -> F {
        F::lit(2.0) * trigamma(sigma) - F::lit(4.0) * trigamma(F::lit(2.0) * sigma)
    }

    /// `⟨ξ ln ξ⟩ − ⟨ξ⟩⟨ln ξ⟩ = 1 / (2(2σ+1)²)`.
    pub fn cov_xi_ln_xi<F: Real>(sigma: F) -> F {
        let q = F::lit(2.0) * sigma + F::one();
        (F::lit(2.0) * q * q).recip()
    }

    /// `⟨(ξ′)²⟩ = 1 − 4⟨ξ⟩ = 1/(2σ+1)`.
    pub fn mean_xi_prime_squared<F: Real>(sigma: F) -> F {
        (F::lit(2.0) * sigma + F::one()).recip()
    }

    /// `⟨(ξ′)²/ξ⟩ = B(σ−1,σ−1)/B(σ,σ) − 4`, finite only for `σ > 1`.
    pub fn mean_xi_prime_squared_over_xi<F: Real>(sigma: F) -> F {
        if sigma <= F::one() {
            return F::infinity();
        }
        (ln_beta(sigma - F::one(), sigma - F::one()) - ln_beta(sigma, sigma)).exp() - F::lit(4.0)
    }

    /// Normalising constant `B(σ, σ) = ∫ ξ^{σ−1} dx`.
    pub fn partition<F: Real>(sigma: F) -> F {
        ln_beta(sigma, sigma).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_at_integers_and_half() {
        assert_relative_eq!(ln_gamma(1.0_f64), 0.0, epsilon = 1e-15);
        assert_relative_eq!(ln_gamma(5.0_f64), 24.0_f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            ln_gamma(0.5_f64),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-14
        );
        assert!(ln_gamma(-1.0_f64).is_nan());
    }

    #[test]
    fn digamma_known_values() {
        let euler = 0.577_215_664_901_532_9_f64;
        assert_relative_eq!(digamma(1.0_f64), -euler, max_relative = 1e-14);
        assert_relative_eq!(digamma(2.0_f64), 1.0 - euler, max_relative = 1e-14);
        assert_relative_eq!(
            digamma(0.5_f64),
            -euler - 2.0 * 2.0_f64.ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert_relative_eq!(trigamma(1.0_f64), pi2_6, max_relative = 1e-14);
        assert_relative_eq!(trigamma(2.0_f64), pi2_6 - 1.0, max_relative = 1e-14);
        assert_relative_eq!(trigamma(0.5_f64), 3.0 * pi2_6, max_relative = 1e-14);
    }

    #[test]
    fn agrees_with_statrs() {
        for &x in &[0.01, 0.2, 0.7, 1.3, 3.5, 9.99, 10.0, 47.0, 400.0] {
            assert_relative_eq!(
                ln_gamma(x),
                statrs::function::gamma::ln_gamma(x),
                epsilon = 1e-13,
                max_relative = 1e-13
            );
            assert_relative_eq!(
                digamma(x),
                statrs::function::gamma::digamma(x),
                epsilon = 1e-13,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for &x in &[0.3_f64, 1.0, 2.5, 12.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert_relative_eq!(trigamma(x), fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn beta_identities() {
        use beta_moments::*;
        assert_relative_eq!(partition(2.0_f64), 1.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(partition(3.0_f64), 1.0 / 30.0, max_relative = 1e-13);
        assert_relative_eq!(mean_ln_xi(1.0_f64), -2.0, max_relative = 1e-14);
        assert_relative_eq!(cov_xi_ln_xi(1.0_f64), 1.0 / 18.0, max_relative = 1e-15);
        assert_relative_eq!(
            mean_xi_prime_squared_over_xi(2.0_f64),
            2.0,
            max_relative = 1e-13
        );
        assert!(mean_xi_prime_squared_over_xi(0.5_f64).is_infinite());
    }

    #[test]
    fn single_precision_instantiation() {
        assert!((ln_gamma(5.0_f32) - 24.0_f32.ln()).abs() < 1e-5);
        assert!((digamma(1.0_f32) + 0.577_215_7).abs() < 1e-6);
    }
}
