//! Entropy, moment matching and error diagnostics.

use rayon::prelude::*;
use thiserror::Error;

use crate::fp_solver::{project_theta, DiscreteDensity, SolverError};
use crate::model::{ModelError, ModelParams, NaturalParams, ObservableSet, Point};
use crate::quadrature::{
    expectations_theta, integrate_theta, ln_partition_theta, moments_theta, second_order_theta,
    Integrand, QuadratureError, QuadratureSpec,
};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("relative entropy undefined: cell {0} carries mass where the reference vanishes")]
    UndefinedEntropy(usize),
    #[error("time ranges of the two trajectories do not overlap")]
    EmptyOverlap,
    #[error("moment target {0} is outside the range (-inf, ln(1/4))")]
    OutOfRange(f64),
    #[error("moment equation did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `h Σ u_i ln(u_i/ū_i)` against the cell-averaged stationary density `ū`.
pub fn relative_entropy<F: Real>(
    u: &DiscreteDensity<F>,
    params: &ModelParams<F>,
    spec: &QuadratureSpec,
) -> Result<F, AnalysisError> {
    params.validate()?;
    let reference = project_theta(&params.natural(), u.grid, spec)?;
    discrete_relative_entropy(u, &reference.u)
}

/// `h Σ u_i ln(u_i/v_i)` with the convention `0 ln 0 = 0`.
pub fn discrete_relative_entropy<F: Real>(u: &DiscreteDensity<F>, v: &[F]) -> Result<F, AnalysisError> {
    let mut acc = F::zero();
    for (i, (&a, &b)) in u.u.iter().zip(v).enumerate() {
        if a == F::zero() {
            continue;
        }
        if !(b > F::zero()) {
            return Err(AnalysisError::UndefinedEntropy(i));
        }
        acc = acc + a * (a / b).ln();
    }
    Ok(acc * u.grid.h)
}

fn interpolate<F: Real>(times: &[F], values: &[F], t: F) -> F {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return values[0];
    }
    if k >= times.len() {
        return values[times.len() - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] + w * (values[k] - values[k - 1])
}

/// `∫(m_ref − m)² dt / ∫ m_ref² dt` by the trapezoid rule on the reference
/// sample times, with the other series interpolated linearly.
pub fn error_indicator<F: Real>(
    ref_times: &[F],
    ref_values: &[F],
    times: &[F],
    values: &[F],
) -> Result<F, AnalysisError> {
    if ref_times.len() != ref_values.len() || times.len() != values.len() {
        return Err(AnalysisError::Input("times and values differ in length".into()));
    }
    let (Some(&lo), Some(&hi)) = (times.first(), times.last()) else {
        return Err(AnalysisError::EmptyOverlap);
    };
    let slack = F::epsilon() * F::lit(64.0) * hi.abs().max(F::one());
    let idx: Vec<usize> = (0..ref_times.len())
        .filter(|&i| ref_times[i] >= lo - slack && ref_times[i] <= hi + slack)
        .collect();
    if idx.len() < 2 {
        return Err(AnalysisError::EmptyOverlap);
    }
    let mut num = F::zero();
    let mut den = F::zero();
    let half = F::lit(0.5);
    let dev = |i: usize| {
        let d = ref_values[i] - interpolate(times, values, ref_times[i]);
        d * d
    };
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dt = ref_times[b] - ref_times[a];
        num = num + half * dt * (dev(a) + dev(b));
        den = den + half * dt * (ref_values[a] * ref_values[a] + ref_values[b] * ref_values[b]);
    }
    Ok(num / den)
}

/// `⟨ln ξ⟩` and `Var(ln ξ)` under `ν_α ∝ ξ^{α−1}`.
fn ln_xi_mean_var<F: Real>(alpha: F, spec: &QuadratureSpec) -> Result<(F, F), AnalysisError> {
    let theta = ModelParams::scalar(F::one(), alpha).natural();
    let so = second_order_theta(&theta, &ObservableSet::ln_xi(), &ObservableSet::ln_xi(), spec)?;
    Ok((so.mean_cols[0], so.covariance[(0, 0)]))
}

/// Solves `⟨ln ξ⟩_{ν_α} = target` for `α > 0`.
///
/// The map is strictly increasing with derivative `Var(ln ξ)`, so Newton
/// steps are taken inside a bracket that is maintained by bisection.
pub fn solve_moment_equation<F: Real>(target: F, tol: F, spec: &QuadratureSpec) -> Result<F, AnalysisError> {
    let upper = F::lit(0.25).ln();
    if !target.is_finite() || target >= upper {
        return Err(AnalysisError::OutOfRange(target.as_f64()));
    }
    let m = |a: F| ln_xi_mean_var(a, spec);
    let (mut lo, mut hi) = (F::lit(1e-3), F::one());
    let min_alpha = F::lit(1e-7);
    let max_alpha = F::lit(1e8);
    while m(lo)?.0 > target {
        lo = lo * F::lit(0.1);
        if lo < min_alpha {
            return Err(AnalysisError::NoConvergence(format!(
                "target {target} needs alpha below {min_alpha}"
            )));
        }
    }
    while m(hi)?.0 < target {
        hi = hi * F::lit(4.0);
        if hi > max_alpha {
            return Err(AnalysisError::NoConvergence(format!(
                "target {target} needs alpha above {max_alpha}"
            )));
        }
    }
    let mut a = (lo * hi).sqrt();
    for _ in 0..200 {
        let (val, var) = m(a)?;
        let r = val - target;
        if r == F::zero() {
            return Ok(a);
        }
        if r < F::zero() {
            lo = a;
        } else {
            hi = a;
        }
        let newton = a - r / var;
        let next = if newton > lo && newton < hi && var > F::zero() {
            newton
        } else {
            (lo * hi).sqrt()
        };
        if (next - a).abs() <= tol * a * F::lit(1e-2) || (hi - lo) <= tol * a * F::lit(1e-2) {
            return Ok(next);
        }
        a = next;
    }
    Err(AnalysisError::NoConvergence("iteration limit".into()))
}

/// One point of [`covariance_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<F> {
    pub alpha: F,
    pub covariance: Result<F, QuadratureError>,
}

/// `⟨ξ ln ξ⟩ − ⟨ξ⟩⟨ln ξ⟩` under `ν_α` for each `α`, evaluated in parallel.
pub fn covariance_sweep<F: Real>(alphas: &[F], spec: &QuadratureSpec) -> Vec<SweepPoint<F>> {
    alphas
        .par_iter()
        .map(|&alpha| {
            let covariance = if alpha > F::zero() {
                let theta = ModelParams::scalar(F::one(), alpha).natural();
                second_order_theta(&theta, &ObservableSet::xi(), &ObservableSet::ln_xi(), spec)
                    .map(|so| so.covariance[(0, 0)])
            } else {
                Err(QuadratureError::Model(ModelError::ScalarExponent(alpha.as_f64())))
            };
            SweepPoint { alpha, covariance }
        })
        .collect()
}

/// `∫ φ dν_σ` with `ν_σ ∝ ξ^{σ−1}`.
pub fn nu_limit_check<F: Real>(
    phi: impl Fn(F) -> F,
    sigma: F,
    spec: &QuadratureSpec,
) -> Result<F, AnalysisError> {
    let params = ModelParams::scalar(F::one(), sigma);
    params.validate()?;
    Ok(integrate_theta(|p: &Point<F>| phi(p.x), &params.natural(), spec)?)
}

/// `H(θ) = h Σ u_i ln(u_i / u_θ(x_i))` with the pointwise normalised density.
pub fn pointwise_relative_entropy<F: Real>(
    u: &DiscreteDensity<F>,
    theta: &NaturalParams<F>,
    spec: &QuadratureSpec,
) -> Result<F, AnalysisError> {
    let ln_z = ln_partition_theta(theta, spec)?;
    let mut acc = F::zero();
    for (i, &ui) in u.u.iter().enumerate() {
        if ui == F::zero() {
            continue;
        }
        let p = u.grid.center_point(i);
        let ln_ref = theta.log_unnormalized_density(&p) - ln_z;
        acc = acc + ui * (ui.ln() - ln_ref);
    }
    Ok(acc * u.grid.h)
}

/// Analytic and finite-difference derivative of `θ_j ↦ H(θ)`.
///
/// The analytic value is `⟨A_j⟩_{u_θ} − h Σ u_i A_j(x_i)` (times the mass of
/// `u`); the second entry is a central difference with step `step`.
pub fn entropy_gradient_check<F: Real>(
    u: &DiscreteDensity<F>,
    theta: &NaturalParams<F>,
    obs: &ObservableSet,
    component: usize,
    step: F,
    spec: &QuadratureSpec,
) -> Result<(F, F), AnalysisError> {
    let Some(o) = obs.members().get(component).copied() else {
        return Err(AnalysisError::Input(format!("component {component} out of range")));
    };
    let model_mean = moments_theta(theta, &ObservableSet::new(vec![o])?, spec)?.finite_values()?[0];
    let data_mean = u.moments(&ObservableSet::new(vec![o])?)[0];
    let analytic = model_mean * u.mass() - data_mean;
    let base = theta.get(o)?;
    let mut plus = *theta;
    plus.set(o, base + step)?;
    let mut minus = *theta;
    minus.set(o, base - step)?;
    let hp = pointwise_relative_entropy(u, &plus, spec)?;
    let hm = pointwise_relative_entropy(u, &minus, spec)?;
    Ok((analytic, (hp - hm) / (step + step)))
}

/// Hessian diagonal entry `⟨A_j²⟩ − ⟨A_j⟩²` of `H` in `θ`.
pub fn entropy_hessian_diagonal<F: Real>(
    theta: &NaturalParams<F>,
    obs: &ObservableSet,
    spec: &QuadratureSpec,
) -> Result<Vec<F>, AnalysisError> {
    let so = second_order_theta(theta, obs, obs, spec)?;
    Ok((0..obs.dim()).map(|i| so.covariance[(i, i)]).collect())
}

/// `⟨ξ^k f⟩` for a single integrand, exposed for ad-hoc checks.
pub fn expectation<F: Real>(
    power: i32,
    f: impl Fn(&Point<F>) -> F,
    theta: &NaturalParams<F>,
    spec: &QuadratureSpec,
) -> Result<Option<F>, AnalysisError> {
    let out = expectations_theta(&[Integrand::new(power, f)], theta, spec)?;
    Ok(out[0].finite())
}
