//! Model functions of the one-locus diffusion: the heterozygosity factor
//! `ξ(x) = x(1−x)`, the observables built from it, and the stationary
//! density `u_α ∝ exp(α·A)/ξ`.
//!
//! Every parameterisation used by the crate reduces to three natural
//! coefficients `θ` of the exponential family `ξ·u ∝ exp(θ_{ξ′}ξ′ + θ_ξ ξ + θ_{ln} ln ξ)`.
//! The density is integrable iff `θ_{ln} > 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("population size must be positive and finite, got {0}")]
    PopulationSize(f64),
    #[error("scalar model needs alpha > 0 for an integrable density, got {0}")]
    ScalarExponent(f64),
    #[error("mutation rate must be positive for an integrable density, got mu = {0}")]
    MutationRate(f64),
    #[error("non-finite model parameter")]
    NonFinite,
    #[error("x = {0} is outside the open interval (0, 1)")]
    OutsideDomain(f64),
    #[error("observable set contains {0:?} more than once")]
    DuplicateObservable(Observable),
    #[error("observable set is empty")]
    EmptyObservableSet,
    #[error("{0:?} has no coefficient in the stationary density")]
    NotAParameter(Observable),
}

/// `ξ(x) = x(1−x)`.
#[inline]
pub fn xi<F: Real>(x: F) -> F {
    x * (F::one() - x)
}

/// `ξ′(x) = 1 − 2x`.
#[inline]
pub fn xi_prime<F: Real>(x: F) -> F {
    F::one() - x - x
}

/// A location in `[0, 1]` carried together with its complement and both
/// logarithms, so that `ξ`, `ln ξ` and `ξ′` stay accurate at either end of
/// the interval (quadrature nodes get within `e^{-10^5}` of the boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<F> {
    pub x: F,
    pub one_minus_x: F,
    pub ln_x: F,
    pub ln_one_minus_x: F,
}

impl<F: Real> Point<F> {
    pub fn new(x: F) -> Self {
        let one_minus_x = F::one() - x;
        Self {
            x,
            one_minus_x,
            ln_x: x.ln(),
            ln_one_minus_x: (-x).ln_1p(),
        }
    }

    /// Builds a point from `ln x` and `ln(1−x)`, trusting both.
    pub fn from_logs(ln_x: F, ln_one_minus_x: F) -> Self {
        Self {
            x: ln_x.exp(),
            one_minus_x: ln_one_minus_x.exp(),
            ln_x,
            ln_one_minus_x,
        }
    }

    #[inline]
    pub fn xi(&self) -> F {
        if self.x < self.one_minus_x {
            self.x * self.one_minus_x
        } else {
            self.one_minus_x * self.x
        }
    }

    #[inline]
    pub fn ln_xi(&self) -> F {
        self.ln_x + self.ln_one_minus_x
    }

    /// `1 − 2x`, formed from whichever of `x`, `1−x` is small.
    #[inline]
    pub fn xi_prime(&self) -> F {
        if self.x < self.one_minus_x {
            F::one() - self.x - self.x
        } else {
            self.one_minus_x + self.one_minus_x - F::one()
        }
    }
}

/// Observables drawn from `{ξ′, ξ, ln ξ, ξ²}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    XiPrime,
    Xi,
    LnXi,
    XiSquared,
}

impl Observable {
    pub const ALL: [Observable; 4] = [
        Observable::XiPrime,
        Observable::Xi,
        Observable::LnXi,
        Observable::XiSquared,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Observable::XiPrime => "xi_prime",
            Observable::Xi => "xi",
            Observable::LnXi => "ln_xi",
            Observable::XiSquared => "xi_squared",
        }
    }

    pub fn value<F: Real>(self, x: F) -> F {
        self.value_at(&Point::new(x))
    }

    pub fn derivative<F: Real>(self, x: F) -> F {
        let p = Point::new(x);
        let (power, smooth) = self.derivative_factored(&p);
        smooth * p.xi().powi(power)
    }

    pub fn value_at<F: Real>(self, p: &Point<F>) -> F {
        match self {
            Observable::XiPrime => p.xi_prime(),
            Observable::Xi => p.xi(),
            Observable::LnXi => p.ln_xi(),
            Observable::XiSquared => {
                let xi = p.xi();
                xi * xi
            }
        }
    }

    /// `dA/dx` written as `ξ^k · g(x)` with bounded `g`; returns `(k, g)`.
    ///
    /// Keeping the power of `ξ` separate lets integrals such as
    /// `⟨ξ (∂ ln ξ)²⟩ = ⟨(ξ′)²/ξ⟩` be evaluated in log space and lets
    /// divergence be decided from the exponent alone.
    pub fn derivative_factored<F: Real>(self, p: &Point<F>) -> (i32, F) {
        match self {
            Observable::XiPrime => (0, F::lit(-2.0)),
            Observable::Xi => (0, p.xi_prime()),
            Observable::LnXi => (-1, p.xi_prime()),
            Observable::XiSquared => (1, F::lit(2.0) * p.xi_prime()),
        }
    }

    /// Power of `ξ` in the factored derivative, see [`derivative_factored`](Self::derivative_factored).
    pub fn derivative_power(self) -> i32 {
        match self {
            Observable::LnXi => -1,
            Observable::XiSquared => 1,
            Observable::XiPrime | Observable::Xi => 0,
        }
    }
}

/// Ordered list of pairwise distinct observables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Observable>", into = "Vec<Observable>")]
pub struct ObservableSet {
    members: Vec<Observable>,
}

impl ObservableSet {
    pub fn new(members: Vec<Observable>) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::EmptyObservableSet);
        }
        for (i, a) in members.iter().enumerate() {
            if members[..i].contains(a) {
                return Err(ModelError::DuplicateObservable(*a));
            }
        }
        Ok(Self { members })
    }

    /// `A = (ln ξ)`.
    pub fn ln_xi() -> Self {
        Self { members: vec![Observable::LnXi] }
    }

    /// `B = (ξ)`.
    pub fn xi() -> Self {
        Self { members: vec![Observable::Xi] }
    }

    /// `A = (ξ′, ξ, ln ξ)`, conjugate to `(−γ, 2η, 2μ)`.
    pub fn generic() -> Self {
        Self {
            members: vec![Observable::XiPrime, Observable::Xi, Observable::LnXi],
        }
    }

    /// `B = (ξ′, ξ, ξ²)`.
    pub fn generic_test_functions() -> Self {
        Self {
            members: vec![Observable::XiPrime, Observable::Xi, Observable::XiSquared],
        }
    }

    pub fn members(&self) -> &[Observable] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = Observable> + '_ {
        self.members.iter().copied()
    }

    pub fn position(&self, obs: Observable) -> Option<usize> {
        self.members.iter().position(|&m| m == obs)
    }
}

impl TryFrom<Vec<Observable>> for ObservableSet {
    type Error = ModelError;
    fn try_from(v: Vec<Observable>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ObservableSet> for Vec<Observable> {
    fn from(s: ObservableSet) -> Self {
        s.members
    }
}

/// Sign convention of the `γξ′` term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSign {
    /// `α·A = −γξ′ + 2ηξ + 2μ ln ξ`.
    #[default]
    Standard,
    /// `+γξ′` in the exponent.
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind<F> {
    /// Neutral single locus with `u_α = ξ^{α−1}/B(α,α)`.
    ScalarToy { alpha: F },
    /// Directional selection, dominance and symmetric mutation.
    Vector { gamma: F, eta: F, mu: F },
}

/// Population size together with the drift parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<F> {
    pub population_size: F,
    pub kind: ModelKind<F>,
    pub gamma_sign: GammaSign,
}

impl<F: Real> ModelParams<F> {
    pub fn scalar(population_size: F, alpha: F) -> Self {
        Self {
            population_size,
            kind: ModelKind::ScalarToy { alpha },
            gamma_sign: GammaSign::Standard,
        }
    }

    pub fn vector(population_size: F, gamma: F, eta: F, mu: F) -> Self {
        Self {
            population_size,
            kind: ModelKind::Vector { gamma, eta, mu },
            gamma_sign: GammaSign::Standard,
        }
    }

    pub fn with_gamma_sign(mut self, sign: GammaSign) -> Self {
        self.gamma_sign = sign;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.population_size;
        if !(n > F::zero()) || !n.is_finite() {
            return Err(ModelError::PopulationSize(n.as_f64()));
        }
        match self.kind {
            ModelKind::ScalarToy { alpha } => {
                if !alpha.is_finite() {
                    return Err(ModelError::NonFinite);
                }
                if !(alpha > F::zero()) {
                    return Err(ModelError::ScalarExponent(alpha.as_f64()));
                }
            }
            ModelKind::Vector { gamma, eta, mu } => {
                if !(gamma.is_finite() && eta.is_finite() && mu.is_finite()) {
                    return Err(ModelError::NonFinite);
                }
                if !(mu > F::zero()) {
                    return Err(ModelError::MutationRate(mu.as_f64()));
                }
            }
        }
        Ok(())
    }

    /// Diffusion constant `1/(4N)` of the flux `∂x(ξu)/(4N)`.
    pub fn diffusion(&self) -> F {
        (F::lit(4.0) * self.population_size).recip()
    }

    /// Coefficients `θ` with `ξ u_α ∝ exp(θ·A)`.
    pub fn natural(&self) -> NaturalParams<F> {
        let two_n = F::lit(2.0) * self.population_size;
        match self.kind {
            ModelKind::ScalarToy { alpha } => NaturalParams {
                xi_prime: F::zero(),
                xi: F::zero(),
                ln_xi: alpha,
            },
            ModelKind::Vector { gamma, eta, mu } => {
                let signed_gamma = match self.gamma_sign {
                    GammaSign::Standard => -gamma,
                    GammaSign::Flipped => gamma,
                };
                NaturalParams {
                    xi_prime: two_n * signed_gamma,
                    xi: two_n * F::lit(2.0) * eta,
                    ln_xi: two_n * F::lit(2.0) * mu,
                }
            }
        }
    }

    /// Inverse of [`natural`](Self::natural), keeping `self`'s kind, size and sign.
    pub fn with_natural(&self, theta: &NaturalParams<F>) -> Self {
        let two_n = F::lit(2.0) * self.population_size;
        let kind = match self.kind {
            ModelKind::ScalarToy { .. } => ModelKind::ScalarToy { alpha: theta.ln_xi },
            ModelKind::Vector { .. } => {
                let signed_gamma = theta.xi_prime / two_n;
                ModelKind::Vector {
                    gamma: match self.gamma_sign {
                        GammaSign::Standard => -signed_gamma,
                        GammaSign::Flipped => signed_gamma,
                    },
                    eta: theta.xi / (two_n * F::lit(2.0)),
                    mu: theta.ln_xi / (two_n * F::lit(2.0)),
                }
            }
        };
        Self { kind, ..*self }
    }

    /// Logarithm of `exp(2N α·A)/ξ` (unnormalised stationary density).
    pub fn log_unnormalized_density(&self, x: F) -> Result<F, ModelError> {
        self.validate()?;
        if !(x > F::zero() && x < F::one()) {
            return Err(ModelError::OutsideDomain(x.as_f64()));
        }
        Ok(self.natural().log_unnormalized_density(&Point::new(x)))
    }
}

/// Natural coefficients of `ξ u ∝ exp(θ_{ξ′} ξ′ + θ_ξ ξ + θ_{ln} ln ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NaturalParams<F> {
    pub xi_prime: F,
    pub xi: F,
    pub ln_xi: F,
}

impl<F: Real> NaturalParams<F> {
    pub fn is_admissible(&self) -> bool {
        self.ln_xi > F::zero()
            && self.ln_xi.is_finite()
            && self.xi.is_finite()
            && self.xi_prime.is_finite()
    }

    /// `θ·A(x)`, the log of `ξ u` up to normalisation.
    #[inline]
    pub fn exponent(&self, p: &Point<F>) -> F {
        let mut e = self.ln_xi * p.ln_xi();
        if self.xi != F::zero() {
            e = e + self.xi * p.xi();
        }
        if self.xi_prime != F::zero() {
            e = e + self.xi_prime * p.xi_prime();
        }
        e
    }

    #[inline]
    pub fn log_unnormalized_density(&self, p: &Point<F>) -> F {
        self.exponent(p) - p.ln_xi()
    }

    /// `d(θ·A)/dx`.
    pub fn exponent_derivative(&self, x: F) -> F {
        let p = Point::new(x);
        let xp = p.xi_prime();
        self.xi_prime * F::lit(-2.0) + self.xi * xp + self.ln_xi * xp / p.xi()
    }

    /// `d²(θ·A)/dx²`.
    pub fn exponent_second_derivative(&self, x: F) -> F {
        let p = Point::new(x);
        let xi = p.xi();
        let xp = p.xi_prime();
        // (ξ′/ξ)′ = (−2ξ − ξ′²)/ξ²
        self.xi * F::lit(-2.0) + self.ln_xi * (F::lit(-2.0) * xi - xp * xp) / (xi * xi)
    }

    /// Coefficient attached to an observable, if it has one.
    pub fn get(&self, obs: Observable) -> Result<F, ModelError> {
        match obs {
            Observable::XiPrime => Ok(self.xi_prime),
            Observable::Xi => Ok(self.xi),
            Observable::LnXi => Ok(self.ln_xi),
            Observable::XiSquared => Err(ModelError::NotAParameter(obs)),
        }
    }

    pub fn set(&mut self, obs: Observable, value: F) -> Result<(), ModelError> {
        match obs {
            Observable::XiPrime => self.xi_prime = value,
            Observable::Xi => self.xi = value,
            Observable::LnXi => self.ln_xi = value,
            Observable::XiSquared => return Err(ModelError::NotAParameter(obs)),
        }
        Ok(())
    }

    /// Components aligned with `set`.
    pub fn project(&self, set: &ObservableSet) -> Result<Vec<F>, ModelError> {
        set.iter().map(|o| self.get(o)).collect()
    }

    /// Copy of `self` with the components in `set` replaced by `values`.
    pub fn with_components(&self, set: &ObservableSet, values: &[F]) -> Result<Self, ModelError> {
        let mut out = *self;
        for (o, &v) in set.iter().zip(values) {
            out.set(o, v)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn xi_values() {
        assert_eq!(xi(0.0_f64), 0.0);
        assert_eq!(xi(0.5_f64), 0.25);
        assert_eq!(xi(0.25_f64), 0.1875);
        assert_eq!(xi_prime(0.5_f64), 0.0);
    }

    #[test]
    fn point_is_accurate_near_one() {
        let p = Point::from_logs((-1e-30_f64).ln_1p(), -69.0);
        assert_relative_eq!(p.xi(), (-69.0_f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(p.xi_prime(), -1.0, max_relative = 1e-15);
    }

    #[test]
    fn observable_derivatives_match_finite_differences() {
        for obs in Observable::ALL {
            for &x in &[0.1_f64, 0.3, 0.5, 0.77] {
                let h = 1e-6;
                let fd = (obs.value(x + h) - obs.value(x - h)) / (2.0 * h);
                assert_relative_eq!(obs.derivative(x), fd, epsilon = 1e-8, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn observable_set_rejects_duplicates() {
        let err = ObservableSet::new(vec![Observable::Xi, Observable::Xi]).unwrap_err();
        assert_eq!(err, ModelError::DuplicateObservable(Observable::Xi));
        assert_eq!(ObservableSet::new(vec![]), Err(ModelError::EmptyObservableSet));
    }

    #[test]
    fn log_density_examples() {
        let p = ModelParams::scalar(1.0_f64, 1.0);
        assert_eq!(p.log_unnormalized_density(0.3).unwrap(), 0.0);
        let p = ModelParams::scalar(1.0_f64, 3.0);
        assert_relative_eq!(
            p.log_unnormalized_density(0.5).unwrap(),
            2.0 * 0.25_f64.ln(),
            max_relative = 1e-15
        );
        // exponent 4Nμ − 1 = 1 → ln ξ(1/2)
        let p = ModelParams::vector(1.0_f64, 0.0, 0.0, 0.5);
        assert_relative_eq!(
            p.log_unnormalized_density(0.5).unwrap(),
            0.25_f64.ln(),
            max_relative = 1e-15
        );
        assert_eq!(
            p.log_unnormalized_density(0.0),
            Err(ModelError::OutsideDomain(0.0))
        );
        assert!(ModelParams::scalar(1.0_f64, 0.0).log_unnormalized_density(0.5).is_err());
    }

    #[test]
    fn vector_density_termwise() {
        // exp(2N α·A)/ξ with α·A = −γξ′ + 2ηξ + 2μ ln ξ
        let (n, g, e, m) = (1.5_f64, 0.7, -0.4, 0.3);
        let params = ModelParams::vector(n, g, e, m);
        for &x in &[0.05_f64, 0.4, 0.9] {
            let a_dot = -g * xi_prime(x) + 2.0 * e * xi(x) + 2.0 * m * xi(x).ln();
            let direct = (2.0 * n * a_dot).exp() / xi(x);
            assert_relative_eq!(
                params.log_unnormalized_density(x).unwrap(),
                direct.ln(),
                max_relative = 1e-13
            );
        }
        let flipped = params.with_gamma_sign(GammaSign::Flipped).natural();
        assert_relative_eq!(flipped.xi_prime, 2.0 * n * g);
    }

    #[test]
    fn natural_round_trip() {
        let p = ModelParams::vector(2.0_f64, 1.25, -0.5, 0.125);
        let back = p.with_natural(&p.natural());
        assert_eq!(back, p);
    }

    #[test]
    fn admissibility() {
        assert!(ModelParams::vector(1.0_f64, 0.0, 0.0, 0.0).validate().is_err());
        assert!(ModelParams::scalar(-1.0_f64, 1.0).validate().is_err());
        assert!(ModelParams::scalar(1.0_f64, 0.2).validate().is_ok());
    }
}
