//! Chang-Cooper finite volumes for the degenerate Fokker-Planck equation.
//!
//! The equation is written for `w = ξu` as
//!
//! ```text
//! ∂t u = ∂x J,   J = C w + D ∂x w,   D = 1/(4N),   C = −D (θ·A)′,
//! ```
//!
//! so that `J = 0` exactly when `w ∝ exp(θ·A)`. With the Péclet number
//! `P = hC/D` at a face and `B(z) = z/(e^z − 1)` the fitted flux is
//! `J = (D/h)[B(−P) w_{i+1} − B(P) w_i]`, which is the Chang-Cooper flux
//! `C[(1−δ)w_{i+1} + δw_i] + D(w_{i+1} − w_i)/h` rearranged. Both
//! coefficients keep their sign for any `P`, so forward Euler preserves
//! positivity under the diagonal bound returned by [`ChangCooper::max_stable_dt`].

use thiserror::Error;

use crate::model::{ModelError, ModelParams, NaturalParams, ObservableSet, Point};
use crate::quadrature::{ln_integral_on, QuadratureError, QuadratureSpec};
use crate::real::{log_add_exp, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("negative density {value:e} in cell {cell} after step {step}; reduce dt")]
    StabilityViolated { step: usize, cell: usize, value: f64 },
    #[error("grid needs at least 2 cells, got {0}")]
    Grid(usize),
    #[error("invalid time stepping: {0}")]
    Time(String),
    #[error("initial density has {got} cells, grid has {expected}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Uniform cell-centred grid on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D<F> {
    pub n: usize,
    pub h: F,
}

impl<F: Real> Grid1D<F> {
    pub fn new(n: usize) -> Result<Self, SolverError> {
        if n < 2 {
            return Err(SolverError::Grid(n));
        }
        Ok(Self {
            n,
            h: F::from_usize_lossy(n).recip(),
        })
    }

    /// `x_i = (i + ½)h`, 0-based.
    pub fn center(&self, i: usize) -> F {
        (F::from_usize_lossy(i) + F::lit(0.5)) * self.h
    }

    /// Cell centre as a [`Point`] with both logs accurate.
    pub fn center_point(&self, i: usize) -> Point<F> {
        let n = F::from_usize_lossy(self.n);
        let two_n = n + n;
        let lo = F::from_usize_lossy(2 * i + 1);
        let hi = F::from_usize_lossy(2 * (self.n - i) - 1);
        Point {
            x: lo / two_n,
            one_minus_x: hi / two_n,
            ln_x: lo.ln() - two_n.ln(),
            ln_one_minus_x: hi.ln() - two_n.ln(),
        }
    }

    /// Face between cells `i` and `i+1`, at `(i+1)h`.
    pub fn face(&self, i: usize) -> F {
        F::from_usize_lossy(i + 1) * self.h
    }

    pub fn centers(&self) -> Vec<F> {
        (0..self.n).map(|i| self.center(i)).collect()
    }
}

/// Cell averages of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity<F> {
    pub grid: Grid1D<F>,
    pub u: Vec<F>,
}

impl<F: Real> DiscreteDensity<F> {
    pub fn new(grid: Grid1D<F>, u: Vec<F>) -> Result<Self, SolverError> {
        if u.len() != grid.n {
            return Err(SolverError::Shape {
                expected: grid.n,
                got: u.len(),
            });
        }
        Ok(Self { grid, u })
    }

    pub fn uniform(grid: Grid1D<F>) -> Self {
        Self {
            grid,
            u: vec![F::one(); grid.n],
        }
    }

    /// `h Σ u_i`.
    pub fn mass(&self) -> F {
        self.grid.h * self.u.iter().copied().sum::<F>()
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        self.u.iter_mut().for_each(|v| *v = *v / m);
    }

    /// `h Σ A(x_i) u_i` for each observable.
    pub fn moments(&self, obs: &ObservableSet) -> Vec<F> {
        obs.iter()
            .map(|o| {
                self.u
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| o.value_at(&self.grid.center_point(i)) * u)
                    .sum::<F>()
                    * self.grid.h
            })
            .collect()
    }

    /// `h Σ |u_i − v_i|`.
    pub fn l1_distance(&self, other: &[F]) -> F {
        self.u
            .iter()
            .zip(other)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<F>()
            * self.grid.h
    }
}

/// `C(x) = −(1/(4N)) d(θ·A)/dx`, the advection acting on `w = ξu`.
pub fn drift_coefficient<F: Real>(params: &ModelParams<F>, x: F) -> F {
    drift_from_theta(&params.natural(), params.diffusion(), x)
}

fn drift_from_theta<F: Real>(theta: &NaturalParams<F>, diffusion: F, x: F) -> F {
    -diffusion * theta.exponent_derivative(x)
}

/// `δ(P) = 1/P − 1/(e^P − 1)`, with the limit `½` at `P = 0`.
pub fn chang_cooper_weight<F: Real>(p: F) -> F {
    if p.abs() < F::lit(1e-4) {
        return F::lit(0.5) - p / F::lit(12.0);
    }
    p.recip() - p.exp_m1().recip()
}

/// `B(z) = z/(e^z − 1)`.
fn bernoulli<F: Real>(z: F) -> F {
    if z.abs() < F::lit(1e-4) {
        return F::one() - z * F::lit(0.5) + z * z / F::lit(12.0);
    }
    z / z.exp_m1()
}

/// Assembled scheme for one target parameter set on one grid.
#[derive(Debug, Clone)]
pub struct ChangCooper<F> {
    grid: Grid1D<F>,
    theta: NaturalParams<F>,
    diffusion: F,
    xi: Vec<F>,
    /// `J_{i+½} = a_i w_{i+1} + b_i w_i` for interior faces `i = 0..n−2`.
    a: Vec<F>,
    b: Vec<F>,
    peclet: Vec<F>,
}

impl<F: Real> ChangCooper<F> {
    pub fn new(params: &ModelParams<F>, grid: Grid1D<F>) -> Result<Self, SolverError> {
        params.validate()?;
        Ok(Self::from_theta(params.natural(), params.diffusion(), grid))
    }

    pub fn from_theta(theta: NaturalParams<F>, diffusion: F, grid: Grid1D<F>) -> Self {
        let n = grid.n;
        let xi = (0..n).map(|i| grid.center_point(i).xi()).collect();
        let scale = diffusion / grid.h;
        let mut a = Vec::with_capacity(n - 1);
        let mut b = Vec::with_capacity(n - 1);
        let mut peclet = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let c = drift_from_theta(&theta, diffusion, grid.face(i));
            let p = grid.h * c / diffusion;
            peclet.push(p);
            a.push(scale * bernoulli(-p));
            b.push(-scale * bernoulli(p));
        }
        Self {
            grid,
            theta,
            diffusion,
            xi,
            a,
            b,
            peclet,
        }
    }

    pub fn grid(&self) -> Grid1D<F> {
        self.grid
    }

    pub fn theta(&self) -> NaturalParams<F> {
        self.theta
    }

    pub fn diffusion(&self) -> F {
        self.diffusion
    }

    /// Face Péclet numbers `hC/D`.
    pub fn peclet(&self) -> &[F] {
        &self.peclet
    }

    /// Face coefficients `(a, b)` of `J = a w_{i+1} + b w_i`.
    pub fn face_coefficients(&self, face: usize) -> (F, F) {
        (self.a[face], self.b[face])
    }

    /// `max_i |L_ii|` of the semi-discrete operator acting on `u`.
    pub fn max_diagonal(&self) -> F {
        let n = self.grid.n;
        (0..n)
            .map(|i| {
                let out_right = if i + 1 < n { -self.b[i] } else { F::zero() };
                let out_left = if i > 0 { self.a[i - 1] } else { F::zero() };
                self.xi[i] * (out_right + out_left) / self.grid.h
            })
            .fold(F::zero(), F::max)
    }

    /// Largest step keeping forward Euler positivity preserving, scaled by `cfl ≤ 1`.
    pub fn max_stable_dt(&self, cfl: F) -> F {
        cfl / self.max_diagonal()
    }

    /// One forward-Euler step in place.
    pub fn step(&self, u: &mut [F], dt: F) -> Result<(), usize> {
        let n = self.grid.n;
        let r = dt / self.grid.h;
        let mut flux_left = F::zero();
        let mut w_here = self.xi[0] * u[0];
        let mut bad = None;
        for i in 0..n {
            let (flux_right, w_next) = if i + 1 < n {
                let w_next = self.xi[i + 1] * u[i + 1];
                (self.a[i] * w_next + self.b[i] * w_here, w_next)
            } else {
                (F::zero(), F::zero())
            };
            u[i] = u[i] + r * (flux_right - flux_left);
            if u[i] < F::zero() && bad.is_none() {
                bad = Some(i);
            }
            flux_left = flux_right;
            w_here = w_next;
        }
        bad.map_or(Ok(()), Err)
    }

    /// The discrete density annihilated by the scheme: `w_{i+1} = w_i e^{−P}`, normalised.
    pub fn discrete_stationary(&self) -> DiscreteDensity<F> {
        let n = self.grid.n;
        let mut ln_u = Vec::with_capacity(n);
        let mut ln_w = F::zero();
        for i in 0..n {
            if i > 0 {
                ln_w = ln_w - self.peclet[i - 1];
            }
            ln_u.push(ln_w - self.xi[i].ln());
        }
        let ln_sum = ln_u.iter().copied().fold(F::neg_infinity(), log_add_exp);
        let ln_norm = ln_sum + self.grid.h.ln();
        DiscreteDensity {
            grid: self.grid,
            u: ln_u.into_iter().map(|l| (l - ln_norm).exp()).collect(),
        }
    }
}

/// Convenience wrapper matching the single-step operation of the scheme.
pub fn chang_cooper_step<F: Real>(
    state: &DiscreteDensity<F>,
    params: &ModelParams<F>,
    dt: F,
) -> Result<DiscreteDensity<F>, SolverError> {
    let cc = ChangCooper::new(params, state.grid)?;
    let mut u = state.u.clone();
    cc.step(&mut u, dt).map_err(|cell| SolverError::StabilityViolated {
        step: 0,
        cell,
        value: u[cell].as_f64(),
    })?;
    Ok(DiscreteDensity { grid: state.grid, u })
}

/// Cell averages of `u_θ`, renormalised so that `h Σ u_i = 1`.
pub fn project_theta<F: Real>(
    theta: &NaturalParams<F>,
    grid: Grid1D<F>,
    spec: &QuadratureSpec,
) -> Result<DiscreteDensity<F>, SolverError> {
    let ln_cells = (0..grid.n)
        .map(|i| {
            let lo = F::from_usize_lossy(i) * grid.h;
            let hi = if i + 1 == grid.n { F::one() } else { grid.face(i) };
            ln_integral_on(theta, lo, hi, spec)
        })
        .collect::<Result<Vec<F>, _>>()?;
    let ln_total = ln_cells.iter().copied().fold(F::neg_infinity(), log_add_exp);
    let ln_h = grid.h.ln();
    Ok(DiscreteDensity {
        grid,
        u: ln_cells.into_iter().map(|l| (l - ln_total - ln_h).exp()).collect(),
    })
}

pub fn project_density<F: Real>(
    params: &ModelParams<F>,
    grid: Grid1D<F>,
    spec: &QuadratureSpec,
) -> Result<DiscreteDensity<F>, SolverError> {
    params.validate()?;
    project_theta(&params.natural(), grid, spec)
}

/// When to stop a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon<F> {
    /// Integrate to exactly this time.
    Fixed(F),
    /// Stop at the first sample where every recorded moment has covered all
    /// but `tolerance` of its distance to the discrete stationary moment, or
    /// at `max_time`.
    Settle { tolerance: F, max_time: F },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<F> {
    pub horizon: Horizon<F>,
    /// `None` picks `cfl · max_stable_dt`.
    pub dt: Option<F>,
    pub cfl: F,
    pub sample_every: usize,
    pub keep_snapshots: bool,
}

impl<F: Real> SolveOptions<F> {
    pub fn fixed(t_end: F) -> Self {
        Self {
            horizon: Horizon::Fixed(t_end),
            dt: None,
            cfl: F::lit(0.9),
            sample_every: 100,
            keep_snapshots: false,
        }
    }

    pub fn settle(tolerance: F, max_time: F) -> Self {
        Self {
            horizon: Horizon::Settle {
                tolerance,
                max_time,
            },
            ..Self::fixed(max_time)
        }
    }
}

/// Sampled output of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FpTrajectory<F> {
    pub observables: ObservableSet,
    pub times: Vec<F>,
    /// `moments[k][m]`: observable `m` at `times[k]`.
    pub moments: Vec<Vec<F>>,
    /// `h Σ |u − u_∞|` against the scheme's discrete stationary state.
    pub l1_distance: Vec<F>,
    pub snapshots: Option<Vec<Vec<F>>>,
    /// Moments of the discrete stationary state.
    pub stationary_moments: Vec<F>,
    pub dt: F,
    pub steps: usize,
    pub grid: Grid1D<F>,
    pub final_state: DiscreteDensity<F>,
}

impl<F: Real> FpTrajectory<F> {
    pub fn end_time(&self) -> F {
        *self.times.last().unwrap_or(&F::zero())
    }

    pub fn series(&self, m: usize) -> Vec<F> {
        self.moments.iter().map(|row| row[m]).collect()
    }
}

fn settled<F: Real>(initial: &[F], current: &[F], target: &[F], tolerance: F) -> bool {
    initial
        .iter()
        .zip(current)
        .zip(target)
        .all(|((&m0, &m), &m_inf)| (m - m_inf).abs() <= tolerance * (m0 - m_inf).abs())
}

/// Integrates from `u0` towards the stationary state of `params_target`.
pub fn solve<F: Real>(
    params_target: &ModelParams<F>,
    u0: &DiscreteDensity<F>,
    obs: &ObservableSet,
    options: &SolveOptions<F>,
) -> Result<FpTrajectory<F>, SolverError> {
    let cc = ChangCooper::new(params_target, u0.grid)?;
    solve_with(&cc, u0, obs, options)
}

pub fn solve_with<F: Real>(
    cc: &ChangCooper<F>,
    u0: &DiscreteDensity<F>,
    obs: &ObservableSet,
    options: &SolveOptions<F>,
) -> Result<FpTrajectory<F>, SolverError> {
    if u0.grid != cc.grid() {
        return Err(SolverError::Shape {
            expected: cc.grid().n,
            got: u0.grid.n,
        });
    }
    if options.sample_every == 0 {
        return Err(SolverError::Time("sample_every must be positive".into()));
    }
    let dt = options.dt.unwrap_or_else(|| cc.max_stable_dt(options.cfl));
    if !(dt > F::zero()) || !dt.is_finite() {
        return Err(SolverError::Time(format!("dt = {dt} is not positive")));
    }
    let (t_end, settle_tol) = match options.horizon {
        Horizon::Fixed(t) => (t, None),
        Horizon::Settle {
            tolerance,
            max_time,
        } => (max_time, Some(tolerance)),
    };
    if !(t_end >= F::zero()) || !t_end.is_finite() {
        return Err(SolverError::Time(format!("horizon {t_end} is not finite and nonnegative")));
    }
    let stationary = cc.discrete_stationary();
    let stationary_moments = stationary.moments(obs);
    let mut state = u0.clone();
    let m0 = state.moments(obs);
    let mut times = vec![F::zero()];
    let mut moments = vec![m0.clone()];
    let mut l1 = vec![state.l1_distance(&stationary.u)];
    let mut snapshots = options.keep_snapshots.then(|| vec![state.u.clone()]);
    let mut t = F::zero();
    let mut steps = 0usize;
    let eps = F::epsilon() * F::lit(16.0);
    while t < t_end * (F::one() - eps) {
        let remaining = t_end - t;
        // last step lands exactly on the fixed horizon
        let this_dt = if matches!(options.horizon, Horizon::Fixed(_)) && remaining < dt {
            remaining
        } else {
            dt
        };
        cc.step(&mut state.u, this_dt)
            .map_err(|cell| SolverError::StabilityViolated {
                step: steps,
                cell,
                value: state.u[cell].as_f64(),
            })?;
        steps += 1;
        t = F::from_usize_lossy(steps) * dt;
        if this_dt < dt {
            t = t_end;
        }
        let last = t >= t_end * (F::one() - eps);
        if steps % options.sample_every == 0 || last {
            let m = state.moments(obs);
            times.push(t);
            l1.push(state.l1_distance(&stationary.u));
            if let Some(s) = snapshots.as_mut() {
                s.push(state.u.clone());
            }
            let done = settle_tol.map_or(false, |tol| settled(&m0, &m, &stationary_moments, tol));
            moments.push(m);
            if done {
                break;
            }
        }
    }
    Ok(FpTrajectory {
        observables: obs.clone(),
        times,
        moments,
        l1_distance: l1,
        snapshots,
        stationary_moments,
        dt,
        steps,
        grid: cc.grid(),
        final_state: state,
    })
}
