//! Expectations against the stationary family `u_θ ∝ exp(θ·A)/ξ`.
//!
//! The densities have integrable power singularities `ξ^{θ_ln − 1}` at both
//! ends, with `θ_ln` as small as 0.01 in the covariance sweep. Everything is
//! therefore done in log space: nodes carry `ln x` and `ln(1−x)` separately,
//! weights are accumulated with a log-sum-exp shift, and an integrand of the
//! form `ξ^k · f` keeps its power of `ξ` apart from the bounded factor `f`.
//!
//! Two rules are available. [`Method::DoubleExponential`] (tanh-sinh) is the
//! default. [`Method::CompositeRefined`] runs Gauss-Legendre panels in the
//! variable `ln x` (resp. `ln(1−x)`) and serves as an independent cross-check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{ModelError, ModelParams, NaturalParams, Observable, ObservableSet, Point};
use crate::real::Real;

/// Log-magnitude below the running maximum at which a tail is dropped.
const TAIL_MARGIN: f64 = 60.0;
/// Largest `|t|` visited by the tanh-sinh walk before declaring divergence.
const T_CAP: f64 = 20.0;
/// Panels per half-interval before the composite rule declares divergence.
const PANEL_CAP: usize = 90;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("no convergence after {levels} refinement levels (last change {change:e})")]
    NonConvergent { levels: usize, change: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DoubleExponential,
    CompositeRefined,
}

/// Refinement controls. `levels` bounds the number of halvings of the node
/// spacing; `points` is the Gauss-Legendre order per panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: Method,
    pub levels: usize,
    pub points: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: Method::DoubleExponential,
            levels: 12,
            points: 20,
            abs_tol: 1e-14,
            rel_tol: 1e-12,
        }
    }
}

impl QuadratureSpec {
    pub fn composite() -> Self {
        Self {
            method: Method::CompositeRefined,
            levels: 7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(QuadratureError::InvalidSpec(
                "abs_tol and rel_tol must be positive".into(),
            ));
        }
        if self.points < 15 {
            return Err(QuadratureError::InvalidSpec(format!(
                "at least 15 points per panel required, got {}",
                self.points
            )));
        }
        if self.levels < 2 {
            return Err(QuadratureError::InvalidSpec(
                "at least two refinement levels are needed to judge convergence".into(),
            ));
        }
        Ok(())
    }
}

/// An expectation that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment<F> {
    Finite(F),
    Divergent,
}

impl<F: Real> Moment<F> {
    pub fn finite(self) -> Option<F> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Moment::Divergent)
    }
}

/// `⟨A_i⟩` for each member of an observable set.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector<F> {
    pub observables: Vec<Observable>,
    pub values: Vec<Moment<F>>,
}

impl<F: Real> MomentVector<F> {
    pub fn finite_values(&self) -> Result<Vec<F>, QuadratureError> {
        self.values
            .iter()
            .zip(&self.observables)
            .map(|(m, o)| {
                m.finite()
                    .ok_or_else(|| QuadratureError::Divergent(format!("<{}>", o.label())))
            })
            .collect()
    }
}

/// Matrix whose entries may individually diverge.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix<F> {
    rows: usize,
    cols: usize,
    entries: Vec<Moment<F>>,
}

impl<F: Real> MomentMatrix<F> {
    pub fn get(&self, i: usize, j: usize) -> Moment<F> {
        self.entries[i * self.cols + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn divergent_entries(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j).is_divergent())
            .collect()
    }

    pub fn to_finite(&self) -> Option<Matrix<F>> {
        if self.entries.iter().any(|m| m.is_divergent()) {
            return None;
        }
        Some(Matrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).finite().unwrap_or_else(F::nan)
        }))
    }
}

/// Integrand `ξ^power · f(x)` against the (normalised) stationary density.
pub struct Integrand<'a, F> {
    pub power: i32,
    pub f: Box<dyn Fn(&Point<F>) -> F + 'a>,
}

impl<'a, F> Integrand<'a, F> {
    pub fn new(power: i32, f: impl Fn(&Point<F>) -> F + 'a) -> Self {
        Self {
            power,
            f: Box::new(f),
        }
    }
}

/// Nodes of one refinement level with integrand values stored node-major.
struct Sample<F> {
    ln_w: Vec<F>,
    ln_xi: Vec<F>,
    vals: Vec<F>,
    powers: Vec<i32>,
    divergent: Vec<bool>,
}

impl<F: Real> Sample<F> {
    fn width(&self) -> usize {
        self.powers.len()
    }

    fn val(&self, node: usize, m: usize) -> F {
        self.vals[node * self.width() + m]
    }

    /// `(M, S)` with `Σ w_j = e^M S`.
    fn normaliser(&self) -> (F, F) {
        let m = self.ln_w.iter().copied().fold(F::neg_infinity(), F::max);
        let s = self.ln_w.iter().map(|&l| (l - m).exp()).sum();
        (m, s)
    }

    fn ln_mass(&self) -> F {
        let (m, s) = self.normaliser();
        m + s.ln()
    }

    /// `⟨ξ^k f_m⟩` under the normalised weights.
    fn expect(&self, m: usize) -> F {
        let (m0, s0) = self.normaliser();
        let k = F::from_i32(self.powers[m]).unwrap_or_else(F::zero);
        let scale = self
            .ln_w
            .iter()
            .zip(&self.ln_xi)
            .map(|(&l, &x)| if k == F::zero() { l } else { l + k * x })
            .fold(F::neg_infinity(), F::max);
        let mut acc = F::zero();
        for j in 0..self.ln_w.len() {
            let v = self.val(j, m);
            if v == F::zero() {
                continue;
            }
            let l = if k == F::zero() {
                self.ln_w[j]
            } else {
                self.ln_w[j] + k * self.ln_xi[j]
            };
            acc = acc + (l - scale).exp() * v;
        }
        acc * (scale - m0).exp() / s0
    }

    /// `⟨(f_a − μ_a)(f_b − μ_b)⟩` for two power-zero integrands.
    fn centered(&self, a: usize, b: usize, mu_a: F, mu_b: F) -> F {
        let (m0, s0) = self.normaliser();
        let mut acc = F::zero();
        for j in 0..self.ln_w.len() {
            let w = (self.ln_w[j] - m0).exp();
            acc = acc + w * (self.val(j, a) - mu_a) * (self.val(j, b) - mu_b);
        }
        acc / s0
    }
}

/// Per-integrand tail tracker shared by both rules.
struct Tails<F> {
    running_max: Vec<F>,
}

impl<F: Real> Tails<F> {
    fn new(width: usize) -> Self {
        Self {
            running_max: vec![F::neg_infinity(); width + 1],
        }
    }

    fn log_sizes<'s>(
        ln_w: F,
        ln_xi: F,
        vals: &'s [F],
        powers: &'s [i32],
    ) -> impl Iterator<Item = F> + 's {
        std::iter::once(ln_w).chain(vals.iter().zip(powers).map(move |(&v, &k)| {
            ln_w + F::from_i32(k).unwrap_or_else(F::zero) * ln_xi + v.abs().ln()
        }))
    }

    fn update(&mut self, ln_w: F, ln_xi: F, vals: &[F], powers: &[i32]) {
        for (r, l) in self
            .running_max
            .iter_mut()
            .zip(Self::log_sizes(ln_w, ln_xi, vals, powers))
        {
            if l > *r {
                *r = l;
            }
        }
    }

    /// Indices (0 = normaliser, m+1 = integrand m) whose tail is still significant.
    fn significant(&self, ln_w: F, ln_xi: F, vals: &[F], powers: &[i32], skip: &[bool]) -> Vec<usize> {
        let margin = F::lit(TAIL_MARGIN);
        Self::log_sizes(ln_w, ln_xi, vals, powers)
            .enumerate()
            .filter(|&(i, l)| {
                let skipped = i > 0 && skip[i - 1];
                !skipped && (l.is_nan() || l >= self.running_max[i] - margin)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Coordinates and log-Jacobian of the tanh-sinh map onto `[a, b] ⊂ [0, 1]`.
fn tanh_sinh_map<F: Real>(a: F, b: F, t: F) -> (Point<F>, F) {
    let s = F::FRAC_PI_2() * t.sinh();
    // λ = (1 + tanh s)/2, ln λ = −softplus(−2s), ln(1 − λ) = −softplus(2s)
    let ln_lambda = -softplus(-(s + s));
    let ln_one_minus_lambda = -softplus(s + s);
    let ln_dlambda = (F::PI() * t.cosh()).ln() + ln_lambda + ln_one_minus_lambda;
    let width = b - a;
    let ln_width = width.ln();
    let ln_x = if a == F::zero() {
        ln_width + ln_lambda
    } else {
        (a + width * ln_lambda.exp()).ln()
    };
    let ln_one_minus_x = if b == F::one() {
        ln_width + ln_one_minus_lambda
    } else {
        ((F::one() - b) + width * ln_one_minus_lambda.exp()).ln()
    };
    (Point::from_logs(ln_x, ln_one_minus_x), ln_width + ln_dlambda)
}

fn softplus<F: Real>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

struct Walk<'a, 'b, F> {
    theta: &'a NaturalParams<F>,
    fns: &'a [Integrand<'b, F>],
    powers: Vec<i32>,
    skip: Vec<bool>,
}

impl<'a, 'b, F: Real> Walk<'a, 'b, F> {
    fn new(theta: &'a NaturalParams<F>, fns: &'a [Integrand<'b, F>], skip: Vec<bool>) -> Self {
        Self {
            theta,
            fns,
            powers: fns.iter().map(|f| f.power).collect(),
            skip,
        }
    }

    fn eval(&self, p: &Point<F>, out: &mut Vec<F>) {
        out.clear();
        for (f, &s) in self.fns.iter().zip(&self.skip) {
            out.push(if s { F::zero() } else { (f.f)(p) });
        }
    }

    fn empty_sample(&self) -> Sample<F> {
        Sample {
            ln_w: Vec::new(),
            ln_xi: Vec::new(),
            vals: Vec::new(),
            powers: self.powers.clone(),
            divergent: self.skip.clone(),
        }
    }

    fn push(&self, sample: &mut Sample<F>, p: &Point<F>, ln_w: F, vals: &[F]) {
        sample.ln_w.push(ln_w);
        sample.ln_xi.push(p.ln_xi());
        sample.vals.extend_from_slice(vals);
    }

    /// One tanh-sinh level on `[a, b]` with step `h`.
    fn tanh_sinh(&self, a: F, b: F, h: F) -> Sample<F> {
        let mut sample = self.empty_sample();
        let mut tails = Tails::new(self.fns.len());
        let mut vals = Vec::with_capacity(self.fns.len());
        let ln_h = h.ln();
        let t_cap = F::lit(T_CAP);
        let node = |t: F, vals: &mut Vec<F>| {
            let (p, ln_dx) = tanh_sinh_map(a, b, t);
            self.eval(&p, vals);
            let ln_w = self.theta.log_unnormalized_density(&p) + ln_dx + ln_h;
            (p, ln_w)
        };
        let (p, ln_w) = node(F::zero(), &mut vals);
        tails.update(ln_w, p.ln_xi(), &vals, &self.powers);
        self.push(&mut sample, &p, ln_w, &vals);
        for sign in [F::one(), -F::one()] {
            let mut j = 1usize;
            loop {
                let t = sign * h * F::from_usize_lossy(j);
                let (p, ln_w) = node(t, &mut vals);
                tails.update(ln_w, p.ln_xi(), &vals, &self.powers);
                self.push(&mut sample, &p, ln_w, &vals);
                if t.abs() >= F::one() {
                    let live = tails.significant(ln_w, p.ln_xi(), &vals, &self.powers, &sample.divergent);
                    if live.is_empty() {
                        break;
                    }
                    if t.abs() >= t_cap {
                        for i in live {
                            if i == 0 {
                                sample.ln_w.push(F::infinity());
                            } else {
                                sample.divergent[i - 1] = true;
                            }
                        }
                        break;
                    }
                }
                j += 1;
            }
        }
        sample
    }

    /// One composite Gauss-Legendre level on `(0, 1)` with each base panel split `split` times.
    fn composite(&self, gl: &(Vec<F>, Vec<F>), split: usize) -> Sample<F> {
        let mut sample = self.empty_sample();
        let mut vals = Vec::with_capacity(self.fns.len());
        let (nodes, weights) = gl;
        let half = F::lit(0.5);
        for left in [true, false] {
            let mut tails = Tails::new(self.fns.len());
            let mut hi = half.ln();
            let mut width = F::lit(0.25);
            let mut panel = 0;
            loop {
                let lo = hi - width;
                let sub = width / F::from_usize_lossy(split);
                let mut live = vec![false; self.fns.len() + 1];
                for s in 0..split {
                    let b = hi - sub * F::from_usize_lossy(s);
                    let a = b - sub;
                    let c = half * (a + b);
                    let r = half * sub;
                    for (&z, &w) in nodes.iter().zip(weights) {
                        let v = c + r * z;
                        let ln_other = (-v.exp()).ln_1p();
                        let p = if left {
                            Point::from_logs(v, ln_other)
                        } else {
                            Point::from_logs(ln_other, v)
                        };
                        self.eval(&p, &mut vals);
                        // dx = e^v dv
                        let ln_w = self.theta.log_unnormalized_density(&p) + v + (w * r).ln();
                        tails.update(ln_w, p.ln_xi(), &vals, &self.powers);
                        for i in tails.significant(ln_w, p.ln_xi(), &vals, &self.powers, &sample.divergent) {
                            live[i] = true;
                        }
                        self.push(&mut sample, &p, ln_w, &vals);
                    }
                }
                panel += 1;
                hi = lo;
                width = width * F::lit(1.5);
                if lo < F::lit(-2.0) && !live.iter().any(|&l| l) {
                    break;
                }
                if panel >= PANEL_CAP {
                    for (i, &l) in live.iter().enumerate() {
                        if !l {
                            continue;
                        }
                        if i == 0 {
                            sample.ln_w.push(F::infinity());
                        } else {
                            sample.divergent[i - 1] = true;
                        }
                    }
                    break;
                }
            }
        }
        sample
    }
}

/// Gauss-Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre<F: Real>(n: usize) -> (Vec<F>, Vec<F>) {
    let mut nodes = vec![0.0_f64; n];
    let mut weights = vec![0.0_f64; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (
        nodes.into_iter().map(F::lit).collect(),
        weights.into_iter().map(F::lit).collect(),
    )
}

/// Runs successive refinement levels of `spec` until every finite entry of
/// `reduce` stabilises.
fn refine<F: Real, R>(
    theta: &NaturalParams<F>,
    fns: &[Integrand<'_, F>],
    skip: Vec<bool>,
    spec: &QuadratureSpec,
    reduce: R,
) -> Result<Vec<Moment<F>>, QuadratureError>
where
    R: Fn(&Sample<F>) -> Vec<Moment<F>>,
{
    spec.validate()?;
    if !theta.is_admissible() {
        return Err(QuadratureError::Divergent(format!(
            "partition integral with ln-xi coefficient {}",
            theta.ln_xi
        )));
    }
    let walk = Walk::new(theta, fns, skip);
    let gl = match spec.method {
        Method::CompositeRefined => Some(gauss_legendre::<F>(spec.points)),
        Method::DoubleExponential => None,
    };
    let abs_tol = F::lit(spec.abs_tol);
    let rel_tol = F::lit(spec.rel_tol);
    let mut prev: Option<Vec<Moment<F>>> = None;
    let mut change = F::infinity();
    for level in 0..spec.levels {
        let sample = match &gl {
            None => walk.tanh_sinh(F::zero(), F::one(), F::lit(0.5).powi(level as i32)),
            Some(gl) => walk.composite(gl, 1 << level),
        };
        if !sample.ln_mass().is_finite() {
            return Err(QuadratureError::Divergent("partition integral".into()));
        }
        let cur = reduce(&sample);
        if let Some(p) = &prev {
            let mut ok = true;
            change = F::zero();
            for (a, b) in cur.iter().zip(p) {
                match (a, b) {
                    (Moment::Finite(a), Moment::Finite(b)) => {
                        let d = (*a - *b).abs();
                        if !(d <= abs_tol.max(rel_tol * a.abs())) {
                            ok = false;
                        }
                        if !(d <= change) {
                            change = d;
                        }
                    }
                    (Moment::Divergent, Moment::Divergent) => {}
                    _ => ok = false,
                }
            }
            if ok && level >= 2 {
                return Ok(cur);
            }
        }
        prev = Some(cur);
    }
    Err(QuadratureError::NonConvergent {
        levels: spec.levels,
        change: change.as_f64(),
    })
}

fn moment_of<F: Real>(s: &Sample<F>, m: usize) -> Moment<F> {
    if s.divergent[m] {
        Moment::Divergent
    } else {
        Moment::Finite(s.expect(m))
    }
}

/// `ln Z_θ = ln ∫ exp(θ·A)/ξ dx`.
pub fn ln_partition_theta<F: Real>(
    theta: &NaturalParams<F>,
    spec: &QuadratureSpec,
) -> Result<F, QuadratureError> {
    let out = refine(theta, &[], vec![], spec, |s| vec![Moment::Finite(s.ln_mass())])?;
    Ok(out[0].finite().unwrap_or_else(F::nan))
}

/// `Z_α = ∫ exp(2N α·A)/ξ dx`.
pub fn partition_function<F: Real>(
    params: &ModelParams<F>,
    spec: &QuadratureSpec,
) -> Result<F, QuadratureError> {
    params.validate()?;
    Ok(ln_partition_theta(&params.natural(), spec)?.exp())
}

/// Normalised stationary density `u_α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDensity<F> {
    pub theta: NaturalParams<F>,
    pub ln_partition: F,
}

impl<F: Real> StationaryDensity<F> {
    pub fn from_theta(theta: NaturalParams<F>, spec: &QuadratureSpec) -> Result<Self, QuadratureError> {
        let ln_partition = ln_partition_theta(&theta, spec)?;
        Ok(Self { theta, ln_partition })
    }

    pub fn ln_density_at(&self, p: &Point<F>) -> F {
        self.theta.log_unnormalized_density(p) - self.ln_partition
    }

    pub fn ln_density(&self, x: F) -> F {
        self.ln_density_at(&Point::new(x))
    }

    pub fn density(&self, x: F) -> F {
        self.ln_density(x).exp()
    }
}

pub fn stationary_density<F: Real>(
    params: &ModelParams<F>,
    spec: &QuadratureSpec,
) -> Result<StationaryDensity<F>, QuadratureError> {
    params.validate()?;
    StationaryDensity::from_theta(params.natural(), spec)
}

/// `ln ∫_a^b exp(θ·A)/ξ dx` for a subinterval, by tanh-sinh on `[a, b]`.
pub fn ln_integral_on<F: Real>(
    theta: &NaturalParams<F>,
    a: F,
    b: F,
    spec: &QuadratureSpec,
) -> Result<F, QuadratureError> {
    spec.validate()?;
    if !(F::zero() <= a && a < b && b <= F::one()) {
        return Err(QuadratureError::InvalidSpec(format!(
            "interval [{a}, {b}] not inside [0, 1]"
        )));
    }
    if !theta.is_admissible() {
        return Err(QuadratureError::Divergent("cell integral".into()));
    }
    let walk = Walk::new(theta, &[], vec![]);
    let mut prev = F::nan();
    let tol = F::lit(spec.rel_tol).max(F::epsilon() * F::lit(8.0));
    let mut change = F::infinity();
    for level in 0..spec.levels {
        let s = walk.tanh_sinh(a, b, F::lit(0.5).powi(level as i32));
        let cur = s.ln_mass();
        if !cur.is_finite() {
            return Err(QuadratureError::Divergent("cell integral".into()));
        }
        change = (cur - prev).abs();
        // ln-space difference is a relative error on the integral
        if level >= 2 && change <= tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(QuadratureError::NonConvergent {
        levels: spec.levels,
        change: change.as_f64(),
    })
}

/// `∫ f u_θ dx` for an arbitrary integrand.
pub fn integrate_theta<F: Real>(
    f: impl Fn(&Point<F>) -> F,
    theta: &NaturalParams<F>,
    spec: &QuadratureSpec,
) -> Result<F, QuadratureError> {
    let fns = [Integrand::new(0, f)];
    let out = refine(theta, &fns, vec![false], spec, |s| vec![moment_of(s, 0)])?;
    out[0]
        .finite()
        .ok_or_else(|| QuadratureError::Divergent("integrand tail does not decay".into()))
}

/// `∫ f u_α dx` for the stationary density of `params`.
pub fn integrate<F: Real>(
    f: impl Fn(&Point<F>) -> F,
    params: &ModelParams<F>,
    spec: &QuadratureSpec,
) -> Result<F, QuadratureError> {
    params.validate()?;
    integrate_theta(f, &params.natural(), spec)
}

/// Several expectations `⟨ξ^k f⟩` sharing one set of nodes.
pub fn expectations_theta<F: Real>(
    fns: &[Integrand<'_, F>],
    theta: &NaturalParams<F>,
    spec: &QuadratureSpec,
) -> Result<Vec<Moment<F>>, QuadratureError> {
    let skip = vec![false; fns.len()];
    refine(theta, fns, skip, spec, |s| {
        (0..fns.len()).map(|m| moment_of(s, m)).collect()
    })
}

pub fn moments_theta<F: Real>(
    theta: &NaturalParams<F>,
    obs: &ObservableSet,
    spec: &QuadratureSpec,
) -> Result<MomentVector<F>, QuadratureError> {
    let fns: Vec<_> = obs
        .iter()
        .map(|o| Integrand::new(0, move |p: &Point<F>| o.value_at(p)))
        .collect();
    Ok(MomentVector {
        observables: obs.members().to_vec(),
        values: expectations_theta(&fns, theta, spec)?,
    })
}

pub fn moments<F: Real>(
    params: &ModelParams<F>,
    obs: &ObservableSet,
    spec: &QuadratureSpec,
) -> Result<MomentVector<F>, QuadratureError> {
    params.validate()?;
    moments_theta(&params.natural(), obs, spec)
}

/// Everything the closure right-hand sides need at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrder<F> {
    pub mean_rows: Vec<F>,
    pub mean_cols: Vec<F>,
    /// `⟨R_i C_k⟩ − ⟨R_i⟩⟨C_k⟩`.
    pub covariance: Matrix<F>,
    /// `⟨ξ ∂R_i ∂C_k⟩`.
    pub mobility: MomentMatrix<F>,
}

/// Whether `⟨ξ ∂R ∂C⟩` is finite: the integrand behaves like `ξ^{θ_ln + k − 1}`.
pub fn mobility_is_finite<F: Real>(theta: &NaturalParams<F>, row: Observable, col: Observable) -> bool {
    let k = 1 + row.derivative_power() + col.derivative_power();
    theta.ln_xi + F::from_i32(k).unwrap_or_else(F::zero) > F::zero()
}

pub fn second_order_theta<F: Real>(
    theta: &NaturalParams<F>,
    rows: &ObservableSet,
    cols: &ObservableSet,
    spec: &QuadratureSpec,
) -> Result<SecondOrder<F>, QuadratureError> {
    let (nr, nc) = (rows.dim(), cols.dim());
    let mut fns: Vec<Integrand<'_, F>> = Vec::with_capacity(nr + nc + nr * nc);
    let mut skip = Vec::new();
    for o in rows.iter().chain(cols.iter()) {
        fns.push(Integrand::new(0, move |p: &Point<F>| o.value_at(p)));
        skip.push(false);
    }
    for r in rows.iter() {
        for c in cols.iter() {
            let k = 1 + r.derivative_power() + c.derivative_power();
            fns.push(Integrand::new(k, move |p: &Point<F>| {
                r.derivative_factored(p).1 * c.derivative_factored(p).1
            }));
            skip.push(!mobility_is_finite(theta, r, c));
        }
    }
    let out = refine(theta, &fns, skip, spec, |s| {
        let means: Vec<F> = (0..nr + nc).map(|m| s.expect(m)).collect();
        let mut v: Vec<Moment<F>> = means.iter().map(|&m| Moment::Finite(m)).collect();
        for i in 0..nr {
            for k in 0..nc {
                v.push(Moment::Finite(s.centered(i, nr + k, means[i], means[nr + k])));
            }
        }
        for m in nr + nc..nr + nc + nr * nc {
            v.push(moment_of(s, m));
        }
        v
    })?;
    let fin = |m: Moment<F>| m.finite().unwrap_or_else(F::nan);
    let mean_rows = out[..nr].iter().map(|&m| fin(m)).collect();
    let mean_cols = out[nr..nr + nc].iter().map(|&m| fin(m)).collect();
    let cov_off = nr + nc;
    let covariance = Matrix::from_fn(nr, nc, |i, k| fin(out[cov_off + i * nc + k]));
    let mob_off = cov_off + nr * nc;
    let mobility = MomentMatrix {
        rows: nr,
        cols: nc,
        entries: out[mob_off..].to_vec(),
    };
    Ok(SecondOrder {
        mean_rows,
        mean_cols,
        covariance,
        mobility,
    })
}

/// Centered second moments `⟨R_i C_k⟩ − ⟨R_i⟩⟨C_k⟩`.
pub fn covariance<F: Real>(
    params: &ModelParams<F>,
    rows: &ObservableSet,
    cols: &ObservableSet,
    spec: &QuadratureSpec,
) -> Result<Matrix<F>, QuadratureError> {
    params.validate()?;
    Ok(second_order_theta(&params.natural(), rows, cols, spec)?.covariance)
}

/// `⟨ξ ∂R_i ∂C_k⟩` with per-entry divergence flags.
pub fn mobility<F: Real>(
    params: &ModelParams<F>,
    rows: &ObservableSet,
    cols: &ObservableSet,
    spec: &QuadratureSpec,
) -> Result<MomentMatrix<F>, QuadratureError> {
    params.validate()?;
    Ok(second_order_theta(&params.natural(), rows, cols, spec)?.mobility)
}
