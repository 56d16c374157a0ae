//! DynMaxEnt closures: the density is replaced by a stationary density
//! `u_{θ*(t)}` whose parameters move so that the test moments `⟨B⟩` follow
//! the exact moment equations.
//!
//! Substituting `u = u_{θ*}` into `d⟨B⟩/dt = −⟨B′ J⟩` gives, in natural
//! coordinates,
//!
//! ```text
//! (⟨B⊗A⟩ − ⟨B⟩⊗⟨A⟩) dθ*/dt = κ ⟨ξ ∇B : ∇A⟩ (θ − θ*),
//! ```
//!
//! with `κ = 1/(4N)`. The original method takes `B = A`; the modified one
//! picks `B` with bounded derivatives so that the mobility stays finite for
//! small mutation. The method is usually stated with `κ = ½`, which is the
//! default ([`TimeScale::Literal`]); [`TimeScale::Consistent`] uses `1/(4N)`.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{ModelError, ModelParams, NaturalParams, Observable, ObservableSet};
use crate::quadrature::{
    mobility_is_finite, moments_theta, second_order_theta, QuadratureError, QuadratureSpec,
    SecondOrder,
};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosureError {
    #[error("method not applicable: mobility entry <xi {row:?}' {col:?}'> diverges at ln-xi coefficient {ln_xi}")]
    NotApplicable {
        row: Observable,
        col: Observable,
        ln_xi: f64,
    },
    #[error("covariance is singular (1-norm condition number {condition:e})")]
    SingularCovariance { condition: f64 },
    #[error("step at t = {t} rejected after {halvings} halvings")]
    StepRejected { t: f64, halvings: usize },
    #[error("inconsistent closure spec: {0}")]
    Spec(String),
    #[error("invalid time stepping: {0}")]
    Time(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Modified,
}

/// Mobility used by a one-dimensional modified closure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarRhsConvention {
    /// `⟨ξ ∂B ∂A⟩`, what the derivation produces.
    #[default]
    CrossAb,
    /// `⟨ξ (∂B)²⟩`.
    LiteralBb,
}

/// Prefactor `κ` of the mobility term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    /// `κ = 1/(4N)`: the closure is exact whenever `u(t)` is stationary-shaped.
    Consistent,
    /// `κ = ½`, as the method is usually stated.
    #[default]
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureSpec {
    pub variant: Variant,
    pub obs_a: ObservableSet,
    pub obs_b: ObservableSet,
    #[serde(default)]
    pub scalar_rhs_convention: ScalarRhsConvention,
    #[serde(default)]
    pub time_scale: TimeScale,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    /// Largest tolerated 1-norm condition number of the covariance.
    #[serde(default = "default_condition_cap")]
    pub condition_cap: f64,
}

fn default_condition_cap() -> f64 {
    1e12
}

impl ClosureSpec {
    pub fn original(obs_a: ObservableSet) -> Self {
        Self {
            variant: Variant::Original,
            obs_b: obs_a.clone(),
            obs_a,
            scalar_rhs_convention: ScalarRhsConvention::CrossAb,
            time_scale: TimeScale::Literal,
            quadrature: QuadratureSpec::default(),
            condition_cap: default_condition_cap(),
        }
    }

    pub fn modified(obs_a: ObservableSet, obs_b: ObservableSet) -> Self {
        Self {
            variant: Variant::Modified,
            obs_b,
            ..Self::original(obs_a)
        }
    }

    /// `A = (ln ξ)`.
    pub fn scalar_original() -> Self {
        Self::original(ObservableSet::ln_xi())
    }

    /// `A = (ln ξ)`, `B = (ξ)`.
    pub fn scalar_modified() -> Self {
        Self::modified(ObservableSet::ln_xi(), ObservableSet::xi())
    }

    /// `A = (ξ′, ξ, ln ξ)`.
    pub fn vector_original() -> Self {
        Self::original(ObservableSet::generic())
    }

    /// `A = (ξ′, ξ, ln ξ)`, `B = (ξ′, ξ, ξ²)`.
    pub fn vector_modified() -> Self {
        Self::modified(ObservableSet::generic(), ObservableSet::generic_test_functions())
    }

    pub fn with_time_scale(mut self, ts: TimeScale) -> Self {
        self.time_scale = ts;
        self
    }

    pub fn with_convention(mut self, c: ScalarRhsConvention) -> Self {
        self.scalar_rhs_convention = c;
        self
    }

    pub fn with_quadrature(mut self, q: QuadratureSpec) -> Self {
        self.quadrature = q;
        self
    }

    /// Test observables actually used.
    pub fn test_observables(&self) -> &ObservableSet {
        match self.variant {
            Variant::Original => &self.obs_a,
            Variant::Modified => &self.obs_b,
        }
    }

    pub fn validate(&self) -> Result<(), ClosureError> {
        for o in self.obs_a.iter() {
            if o == Observable::XiSquared {
                return Err(ClosureError::Spec(
                    "xi^2 has no parameter in the stationary density and cannot be in A".into(),
                ));
            }
        }
        if self.obs_a.position(Observable::LnXi).is_none() {
            return Err(ClosureError::Spec(
                "A must contain ln xi, otherwise u is not normalisable".into(),
            ));
        }
        if self.test_observables().dim() != self.obs_a.dim() {
            return Err(ClosureError::Spec(format!(
                "B has {} members but A has {}",
                self.test_observables().dim(),
                self.obs_a.dim()
            )));
        }
        if self.variant == Variant::Original && self.obs_b != self.obs_a {
            return Err(ClosureError::Spec("the original method uses B = A".into()));
        }
        self.quadrature.validate()?;
        if !(self.condition_cap > 1.0) {
            return Err(ClosureError::Spec("condition cap must exceed 1".into()));
        }
        Ok(())
    }

    fn kappa<F: Real>(&self, diffusion: F) -> F {
        match self.time_scale {
            TimeScale::Consistent => diffusion,
            TimeScale::Literal => F::lit(0.5),
        }
    }

    /// Whether every mobility entry the method needs is finite at `θ`.
    pub fn is_applicable<F: Real>(&self, theta: &NaturalParams<F>) -> Result<(), ClosureError> {
        let rows = self.test_observables();
        let cols = self.mobility_cols();
        for r in rows.iter() {
            for c in cols.iter() {
                if !mobility_is_finite(theta, r, c) {
                    return Err(ClosureError::NotApplicable {
                        row: r,
                        col: c,
                        ln_xi: theta.ln_xi.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    fn mobility_cols(&self) -> &ObservableSet {
        if self.variant == Variant::Modified
            && self.obs_a.dim() == 1
            && self.scalar_rhs_convention == ScalarRhsConvention::LiteralBb
        {
            &self.obs_b
        } else {
            &self.obs_a
        }
    }
}

/// Right-hand side evaluator with a small memo of quadrature results.
pub struct Closure<F> {
    spec: ClosureSpec,
    template: NaturalParams<F>,
    diffusion: F,
    cache: Mutex<HashMap<[i64; 3], (Matrix<F>, Matrix<F>)>>,
}

const CACHE_CAP: usize = 4096;

impl<F: Real> Closure<F> {
    /// `template` fixes the coefficients not in `A` (they stay constant).
    pub fn new(spec: ClosureSpec, template: NaturalParams<F>, diffusion: F) -> Result<Self, ClosureError> {
        spec.validate()?;
        if !(diffusion > F::zero()) {
            return Err(ClosureError::Spec("diffusion must be positive".into()));
        }
        Ok(Self {
            spec,
            template,
            diffusion,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn for_model(spec: ClosureSpec, params: &ModelParams<F>) -> Result<Self, ClosureError> {
        params.validate()?;
        Self::new(spec, params.natural(), params.diffusion())
    }

    pub fn spec(&self) -> &ClosureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.obs_a.dim()
    }

    /// Components of `θ` conjugate to `A`.
    pub fn coords(&self, theta: &NaturalParams<F>) -> Vec<F> {
        self.spec
            .obs_a
            .iter()
            .map(|o| theta.get(o).unwrap_or_else(|_| F::nan()))
            .collect()
    }

    pub fn theta_of(&self, coords: &[F]) -> NaturalParams<F> {
        self.template
            .with_components(&self.spec.obs_a, coords)
            .unwrap_or(self.template)
    }

    fn key(theta: &NaturalParams<F>) -> [i64; 3] {
        let q = |v: F| (v.as_f64() * 1e12).round() as i64;
        [q(theta.xi_prime), q(theta.xi), q(theta.ln_xi)]
    }

    /// `(covariance, mobility)` at `θ`.
    pub fn matrices(&self, theta: &NaturalParams<F>) -> Result<(Matrix<F>, Matrix<F>), ClosureError> {
        if !theta.is_admissible() {
            return Err(QuadratureError::Divergent(format!(
                "stationary density at ln-xi coefficient {}",
                theta.ln_xi
            ))
            .into());
        }
        self.spec.is_applicable(theta)?;
        let key = Self::key(theta);
        if let Some(hit) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let q = &self.spec.quadrature;
        let rows = self.spec.test_observables();
        let cov_part: SecondOrder<F> = second_order_theta(theta, rows, &self.spec.obs_a, q)?;
        let mob = if self.spec.mobility_cols() == &self.spec.obs_a {
            cov_part.mobility
        } else {
            second_order_theta(theta, rows, self.spec.mobility_cols(), q)?.mobility
        };
        let mob = mob.to_finite().ok_or_else(|| {
            let (r, c) = mob.divergent_entries()[0];
            ClosureError::NotApplicable {
                row: rows.members()[r],
                col: self.spec.mobility_cols().members()[c],
                ln_xi: theta.ln_xi.as_f64(),
            }
        })?;
        let out = (cov_part.covariance, mob);
        if let Ok(mut c) = self.cache.lock() {
            if c.len() >= CACHE_CAP {
                c.clear();
            }
            c.insert(key, out.clone());
        }
        Ok(out)
    }

    /// `dθ*/dt` in the coordinates of `A`.
    pub fn rhs(&self, theta: &NaturalParams<F>, target: &NaturalParams<F>) -> Result<Vec<F>, ClosureError> {
        let (cov, mob) = self.matrices(theta)?;
        let cond = cov.condition_number_1();
        if !(cond <= F::lit(self.spec.condition_cap)) {
            return Err(ClosureError::SingularCovariance {
                condition: cond.as_f64(),
            });
        }
        let here = self.coords(theta);
        let there = self.coords(target);
        let diff: Vec<F> = there.iter().zip(&here).map(|(&a, &b)| a - b).collect();
        if diff.iter().all(|d| *d == F::zero()) {
            return Ok(vec![F::zero(); diff.len()]);
        }
        let kappa = self.spec.kappa(self.diffusion);
        let force: Vec<F> = mob
            .mul_vec(&diff)
            .map_err(|e| ClosureError::Spec(e.to_string()))?
            .into_iter()
            .map(|v| kappa * v)
            .collect();
        cov.solve(&force).map_err(|_| ClosureError::SingularCovariance {
            condition: f64::INFINITY,
        })
    }
}

pub fn rhs_original<F: Real>(
    theta: &NaturalParams<F>,
    target: &NaturalParams<F>,
    diffusion: F,
    spec: &ClosureSpec,
) -> Result<Vec<F>, ClosureError> {
    if spec.variant != Variant::Original {
        return Err(ClosureError::Spec("rhs_original needs an Original spec".into()));
    }
    Closure::new(spec.clone(), *theta, diffusion)?.rhs(theta, target)
}

pub fn rhs_modified<F: Real>(
    theta: &NaturalParams<F>,
    target: &NaturalParams<F>,
    diffusion: F,
    spec: &ClosureSpec,
) -> Result<Vec<F>, ClosureError> {
    if spec.variant != Variant::Modified {
        return Err(ClosureError::Spec("rhs_modified needs a Modified spec".into()));
    }
    Closure::new(spec.clone(), *theta, diffusion)?.rhs(theta, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions<F> {
    pub t_end: F,
    pub dt: F,
    pub sample_every: usize,
    /// Moments recorded at sample times.
    pub report: ObservableSet,
    pub max_halvings: usize,
}

impl<F: Real> IntegrateOptions<F> {
    pub fn new(t_end: F, dt: F, report: ObservableSet) -> Self {
        Self {
            t_end,
            dt,
            sample_every: 10,
            report,
            max_halvings: 20,
        }
    }
}

/// Recorded forward-Euler trajectory of `θ*(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureTrajectory<F> {
    pub variant: Variant,
    pub report: ObservableSet,
    pub times: Vec<F>,
    pub theta: Vec<NaturalParams<F>>,
    /// `moments[k][m]`: `⟨report_m⟩` at `times[k]`.
    pub moments: Vec<Vec<F>>,
    /// `(t, halvings)` for every step that had to be shortened.
    pub halvings: Vec<(F, usize)>,
    pub steps: usize,
}

impl<F: Real> ClosureTrajectory<F> {
    pub fn series(&self, m: usize) -> Vec<F> {
        self.moments.iter().map(|row| row[m]).collect()
    }

    pub fn final_theta(&self) -> NaturalParams<F> {
        *self.theta.last().expect("trajectory has at least one sample")
    }
}

/// Forward Euler from `theta0` towards `target`.
pub fn integrate<F: Real>(
    closure: &Closure<F>,
    theta0: &NaturalParams<F>,
    target: &NaturalParams<F>,
    options: &IntegrateOptions<F>,
) -> Result<ClosureTrajectory<F>, ClosureError> {
    if !(options.dt > F::zero()) || !(options.t_end >= F::zero()) || options.sample_every == 0 {
        return Err(ClosureError::Time(
            "need dt > 0, t_end >= 0 and sample_every > 0".into(),
        ));
    }
    if !target.is_admissible() {
        return Err(ModelError::MutationRate(target.ln_xi.as_f64()).into());
    }
    closure.spec.is_applicable(target)?;
    let q = &closure.spec.quadrature;
    let record = |theta: &NaturalParams<F>| -> Result<Vec<F>, ClosureError> {
        Ok(moments_theta(theta, &options.report, q)?.finite_values()?)
    };
    let mut coords = closure.coords(theta0);
    let mut theta = closure.theta_of(&coords);
    let mut f = closure.rhs(&theta, target)?;
    let mut out = ClosureTrajectory {
        variant: closure.spec.variant,
        report: options.report.clone(),
        times: vec![F::zero()],
        theta: vec![theta],
        moments: vec![record(&theta)?],
        halvings: Vec::new(),
        steps: 0,
    };
    let n_steps = (options.t_end / options.dt).ceil().to_usize().unwrap_or(0);
    let mut t = F::zero();
    for step in 1..=n_steps {
        let t_next = (F::from_usize_lossy(step) * options.dt).min(options.t_end);
        let full = t_next - t;
        let mut covered = F::zero();
        let mut halved = 0usize;
        // sub-steps of size full/2^k until the interval is covered
        while covered < full {
            let mut h = (full - covered).min(full / F::from_usize_lossy(1 << halved));
            loop {
                let cand: Vec<F> = coords.iter().zip(&f).map(|(&c, &d)| c + h * d).collect();
                let cand_theta = closure.theta_of(&cand);
                let next = if cand_theta.is_admissible() {
                    closure.rhs(&cand_theta, target)
                } else {
                    Err(ClosureError::StepRejected {
                        t: t.as_f64(),
                        halvings: halved,
                    })
                };
                match next {
                    Ok(df) => {
                        coords = cand;
                        theta = cand_theta;
                        f = df;
                        covered = covered + h;
                        break;
                    }
                    Err(ClosureError::SingularCovariance { .. })
                    | Err(ClosureError::NotApplicable { .. })
                    | Err(ClosureError::StepRejected { .. })
                        if halved < options.max_halvings =>
                    {
                        halved += 1;
                        h = h * F::lit(0.5);
                    }
                    Err(ClosureError::SingularCovariance { .. })
                    | Err(ClosureError::NotApplicable { .. })
                    | Err(ClosureError::StepRejected { .. }) => {
                        return Err(ClosureError::StepRejected {
                            t: t.as_f64(),
                            halvings: halved,
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if halved > 0 {
            out.halvings.push((t, halved));
        }
        t = t_next;
        out.steps = step;
        if step % options.sample_every == 0 || step == n_steps {
            out.times.push(t);
            out.theta.push(theta);
            out.moments.push(record(&theta)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::beta_moments as beta;
    use approx::assert_relative_eq;

    fn scalar_theta(a: f64) -> NaturalParams<f64> {
        ModelParams::scalar(1.0, a).natural()
    }

    #[test]
    fn fixed_point_is_exact() {
        for spec in [ClosureSpec::scalar_original(), ClosureSpec::scalar_modified()] {
            let th = scalar_theta(2.0);
            let c = Closure::new(spec, th, 0.25).unwrap();
            assert_eq!(c.rhs(&th, &th).unwrap(), vec![0.0]);
        }
        let p = ModelParams::vector(1.0, 0.5, -0.2, 0.6);
        let c = Closure::for_model(ClosureSpec::vector_modified(), &p).unwrap();
        assert_eq!(c.rhs(&p.natural(), &p.natural()).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn literal_examples() {
        let spec = ClosureSpec::scalar_original().with_time_scale(TimeScale::Literal);
        let d = rhs_original(&scalar_theta(2.0), &scalar_theta(3.0), 0.25, &spec).unwrap();
        assert_relative_eq!(d[0], 1.0 / beta::var_ln_xi(2.0), max_relative = 1e-9);
        let spec = ClosureSpec::scalar_modified().with_time_scale(TimeScale::Literal);
        let d = rhs_modified(&scalar_theta(1.0), &scalar_theta(2.0), 0.25, &spec).unwrap();
        assert_relative_eq!(d[0], 3.0, max_relative = 1e-9);
    }

    #[test]
    fn consistent_scale_is_literal_over_2n() {
        let lit = ClosureSpec::scalar_modified().with_time_scale(TimeScale::Literal);
        let con = ClosureSpec::scalar_modified().with_time_scale(TimeScale::Consistent);
        let a = rhs_modified(&scalar_theta(1.0), &scalar_theta(2.0), 0.25, &lit).unwrap()[0];
        let b = rhs_modified(&scalar_theta(1.0), &scalar_theta(2.0), 0.25, &con).unwrap()[0];
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-12);
    }

    #[test]
    fn original_refuses_small_exponent() {
        let err = rhs_original(&scalar_theta(0.9), &scalar_theta(2.0), 0.25, &ClosureSpec::scalar_original())
            .unwrap_err();
        assert!(matches!(err, ClosureError::NotApplicable { .. }));
        let ok = rhs_modified(&scalar_theta(0.3), &scalar_theta(2.0), 0.25, &ClosureSpec::scalar_modified())
            .unwrap();
        assert!(ok[0].is_finite() && ok[0] > 0.0);
    }

    #[test]
    fn literal_bb_uses_test_function_mobility() {
        // ⟨ξ(ξ′)²⟩ against ν_1: ⟨ξ⟩ − 4⟨ξ²⟩ = 1/6 − 4/30
        let spec = ClosureSpec::scalar_modified()
            .with_convention(ScalarRhsConvention::LiteralBb)
            .with_time_scale(TimeScale::Literal);
        let d = rhs_modified(&scalar_theta(1.0), &scalar_theta(2.0), 0.25, &spec).unwrap();
        let mob = 1.0 / 6.0 - 4.0 / 30.0;
        assert_relative_eq!(d[0], 0.5 * 18.0 * mob, max_relative = 1e-9);
    }

    #[test]
    fn spec_validation() {
        let bad = ClosureSpec::modified(ObservableSet::ln_xi(), ObservableSet::generic_test_functions());
        assert!(bad.validate().is_err());
        let bad = ClosureSpec::original(ObservableSet::xi());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_trajectory_at_fixed_point() {
        let th = scalar_theta(2.0);
        let c = Closure::new(ClosureSpec::scalar_modified(), th, 0.25).unwrap();
        let tr = integrate(&c, &th, &th, &IntegrateOptions::new(0.5, 0.01, ObservableSet::ln_xi())).unwrap();
        let first = tr.moments[0][0];
        assert!(tr.moments.iter().all(|m| m[0] == first));
    }

    #[test]
    fn scalar_original_is_monotone() {
        let spec = ClosureSpec::scalar_original().with_time_scale(TimeScale::Consistent);
        let c = Closure::new(spec, scalar_theta(2.0), 0.25).unwrap();
        let opts = IntegrateOptions::new(3.0, 0.01, ObservableSet::ln_xi());
        let tr = integrate(&c, &scalar_theta(2.0), &scalar_theta(3.0), &opts).unwrap();
        let a: Vec<f64> = tr.theta.iter().map(|t| t.ln_xi).collect();
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!(a.iter().all(|&v| v < 3.0));
        assert!((a.last().unwrap() - 3.0).abs() < 1e-3);
    }
}
