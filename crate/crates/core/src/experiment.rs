//! Protocols that run the Fokker-Planck solver and the closures side by side.
//!
//! A case starts both from the stationary state of `initial` (cell-averaged
//! for the solver, exact for the closure) and relaxes towards `target`. The
//! closure is integrated up to the solver's end time and compared moment by
//! moment with [`error_indicator`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{error_indicator, AnalysisError};
use crate::dynmaxent::{
    integrate, Closure, ClosureError, ClosureSpec, ClosureTrajectory, IntegrateOptions, ScalarRhsConvention,
    TimeScale, Variant,
};
use crate::fp_solver::{project_density, solve, FpTrajectory, Grid1D, Horizon, SolveOptions, SolverError};
use crate::model::{ModelKind, ModelParams, Observable, ObservableSet};
use crate::quadrature::QuadratureSpec;
use crate::real::Real;
use crate::spectral::{decay_rate, spectral_gap, SpectralError, SpectralResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("initial and target models differ in kind")]
    KindMismatch,
}

/// Numerical knobs shared by every case of a protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings<F> {
    pub grid_n: usize,
    pub horizon: Horizon<F>,
    /// Solver step; `None` picks `cfl` times the stability limit.
    pub fp_dt: Option<F>,
    pub cfl: F,
    pub fp_sample_every: usize,
    pub closure_dt: F,
    pub closure_sample_every: usize,
    pub convention: ScalarRhsConvention,
    pub time_scale: TimeScale,
    pub quadrature: QuadratureSpec,
}

impl<F: Real> Default for Settings<F> {
    fn default() -> Self {
        Self {
            grid_n: 512,
            horizon: Horizon::Settle {
                tolerance: F::lit(0.01),
                max_time: F::lit(200.0),
            },
            fp_dt: None,
            cfl: F::lit(0.9),
            fp_sample_every: 20,
            closure_dt: F::lit(1e-3),
            closure_sample_every: 1,
            convention: ScalarRhsConvention::CrossAb,
            time_scale: TimeScale::Literal,
            quadrature: QuadratureSpec::default(),
        }
    }
}

/// Closure spec matching the model kind.
pub fn closure_spec(kind_is_scalar: bool, variant: Variant) -> ClosureSpec {
    match (kind_is_scalar, variant) {
        (true, Variant::Original) => ClosureSpec::scalar_original(),
        (true, Variant::Modified) => ClosureSpec::scalar_modified(),
        (false, Variant::Original) => ClosureSpec::vector_original(),
        (false, Variant::Modified) => ClosureSpec::vector_modified(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun<F> {
    pub variant: Variant,
    /// Error per reported observable, or the reason the method refused.
    pub errors: Result<Vec<F>, ExperimentError>,
    pub trajectory: Option<ClosureTrajectory<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRun<F> {
    pub initial: ModelParams<F>,
    pub target: ModelParams<F>,
    pub report: ObservableSet,
    pub fp: FpTrajectory<F>,
    pub methods: Vec<MethodRun<F>>,
}

impl<F: Real> CaseRun<F> {
    pub fn method(&self, variant: Variant) -> Option<&MethodRun<F>> {
        self.methods.iter().find(|m| m.variant == variant)
    }
}

fn run_method<F: Real>(
    initial: &ModelParams<F>,
    target: &ModelParams<F>,
    report: &ObservableSet,
    fp: &FpTrajectory<F>,
    variant: Variant,
    settings: &Settings<F>,
) -> Result<(Vec<F>, ClosureTrajectory<F>), ExperimentError> {
    let scalar = matches!(target.kind, ModelKind::ScalarToy { .. });
    let spec = closure_spec(scalar, variant)
        .with_convention(settings.convention)
        .with_time_scale(settings.time_scale)
        .with_quadrature(settings.quadrature.clone());
    let theta0 = initial.natural();
    spec.is_applicable(&theta0)?;
    let closure = Closure::for_model(spec, target)?;
    let mut opts = IntegrateOptions::new(fp.end_time(), settings.closure_dt, report.clone());
    opts.sample_every = settings.closure_sample_every;
    let traj = integrate(&closure, &theta0, &target.natural(), &opts)?;
    let errors = (0..report.dim())
        .map(|m| error_indicator(&fp.times, &fp.series(m), &traj.times, &traj.series(m)))
        .collect::<Result<Vec<F>, _>>()?;
    Ok((errors, traj))
}

/// Solver run plus one closure run per requested variant.
pub fn run_case<F: Real>(
    initial: &ModelParams<F>,
    target: &ModelParams<F>,
    report: &ObservableSet,
    variants: &[Variant],
    settings: &Settings<F>,
) -> Result<CaseRun<F>, ExperimentError> {
    let same_kind = matches!(
        (&initial.kind, &target.kind),
        (ModelKind::ScalarToy { .. }, ModelKind::ScalarToy { .. })
            | (ModelKind::Vector { .. }, ModelKind::Vector { .. })
    );
    if !same_kind {
        return Err(ExperimentError::KindMismatch);
    }
    let grid = Grid1D::new(settings.grid_n)?;
    let u0 = project_density(initial, grid, &settings.quadrature)?;
    let options = SolveOptions {
        horizon: settings.horizon,
        dt: settings.fp_dt,
        cfl: settings.cfl,
        sample_every: settings.fp_sample_every,
        keep_snapshots: false,
    };
    let fp = solve(target, &u0, report, &options)?;
    let methods = variants
        .par_iter()
        .map(|&variant| match run_method(initial, target, report, &fp, variant, settings) {
            Ok((errors, traj)) => MethodRun {
                variant,
                errors: Ok(errors),
                trajectory: Some(traj),
            },
            Err(e) => MethodRun {
                variant,
                errors: Err(e),
                trajectory: None,
            },
        })
        .collect();
    Ok(CaseRun {
        initial: *initial,
        target: *target,
        report: report.clone(),
        fp,
        methods,
    })
}

/// The four published error tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Table {
    One,
    Two,
    Three,
    Four,
}

/// Published values, row by row.
pub struct Reference {
    pub rows: &'static [(Variant, &'static [f64])],
}

impl Table {
    pub const ALL: [Table; 4] = [Table::One, Table::Two, Table::Three, Table::Four];

    pub fn number(self) -> u8 {
        match self {
            Table::One => 1,
            Table::Two => 2,
            Table::Three => 3,
            Table::Four => 4,
        }
    }

    pub fn is_scalar(self) -> bool {
        matches!(self, Table::One | Table::Two)
    }

    /// Variants the table reports, in row order.
    pub fn variants(self) -> &'static [Variant] {
        match self {
            Table::One | Table::Three => &[Variant::Original, Variant::Modified],
            Table::Two | Table::Four => &[Variant::Modified],
        }
    }

    /// Target exponents of the scalar tables.
    pub fn scalar_targets(self) -> &'static [f64] {
        match self {
            Table::One => &[1.1, 1.5, 2.5, 3.0],
            Table::Two => &[0.7, 0.5, 0.3, 0.2],
            _ => &[],
        }
    }

    /// Reported moments of the vector tables.
    pub fn vector_observables() -> ObservableSet {
        ObservableSet::new(vec![Observable::LnXi, Observable::Xi, Observable::XiPrime])
            .expect("distinct observables")
    }

    pub fn reference(self) -> Reference {
        match self {
            Table::One => Reference {
                rows: &[
                    (Variant::Original, &[1.45e-2, 4.09e-3, 1.42e-3, 1.37e-3]),
                    (Variant::Modified, &[3.78e-3, 1.30e-3, 3.65e-4, 3.41e-4]),
                ],
            },
            Table::Two => Reference {
                rows: &[(Variant::Modified, &[1.42e-2, 2.81e-2, 5.79e-2, 8.88e-2])],
            },
            Table::Three => Reference {
                rows: &[
                    (Variant::Original, &[9.24e-3, 1.30e-2, 5.03e-2]),
                    (Variant::Modified, &[6.79e-3, 1.01e-2, 4.14e-2]),
                ],
            },
            Table::Four => Reference {
                rows: &[(Variant::Modified, &[2.45e-2, 2.55e-2, 1.24e-1])],
            },
        }
    }

    pub fn column_labels(self) -> Vec<String> {
        if self.is_scalar() {
            self.scalar_targets().iter().map(|a| format!("alpha={a}")).collect()
        } else {
            Self::vector_observables().iter().map(|o| o.label().to_string()).collect()
        }
    }

    /// `(initial, target)` for each case; the vector tables have a single case.
    pub fn cases<F: Real>(self) -> Vec<(ModelParams<F>, ModelParams<F>)> {
        let one = F::one();
        if self.is_scalar() {
            self.scalar_targets()
                .iter()
                .map(|&a| (ModelParams::scalar(one, F::lit(2.0)), ModelParams::scalar(one, F::lit(a))))
                .collect()
        } else {
            let four_mu = match self {
                Table::Three => 1.1,
                _ => 0.5,
            };
            vec![(
                ModelParams::vector(one, F::lit(2.0), F::lit(-1.0), F::lit(0.5)),
                ModelParams::vector(one, F::zero(), F::one(), F::lit(four_mu / 4.0)),
            )]
        }
    }
}

/// Computed table: `cells[row][col]` follows [`Table::variants`] and
/// [`Table::column_labels`]; refusals are kept as errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRun<F> {
    pub table: Table,
    pub cells: Vec<Vec<Result<F, ExperimentError>>>,
    pub cases: Vec<CaseRun<F>>,
}

/// Runs every case of `table`, with the Original method also attempted where
/// the table only lists Modified so that its refusal is recorded.
pub fn run_table<F: Real>(table: Table, settings: &Settings<F>) -> Result<TableRun<F>, ExperimentError> {
    let report = if table.is_scalar() {
        ObservableSet::ln_xi()
    } else {
        Table::vector_observables()
    };
    let variants = [Variant::Original, Variant::Modified];
    let cases = table
        .cases::<F>()
        .par_iter()
        .map(|(init, target)| run_case(init, target, &report, &variants, settings))
        .collect::<Result<Vec<_>, _>>()?;
    let cells = table
        .variants()
        .iter()
        .map(|&v| {
            if table.is_scalar() {
                cases
                    .iter()
                    .map(|c| c.method(v).expect("variant was run").errors.clone().map(|e| e[0]))
                    .collect()
            } else {
                let m = cases[0].method(v).expect("variant was run");
                (0..report.dim())
                    .map(|k| m.errors.clone().map(|e| e[k]))
                    .collect()
            }
        })
        .collect();
    Ok(TableRun { table, cells, cases })
}

impl<F: Real> TableRun<F> {
    /// Outcome of a variant the table does not list.
    pub fn unlisted(&self, variant: Variant) -> Vec<Result<(), ExperimentError>> {
        self.cases
            .iter()
            .map(|c| c.method(variant).map_or(Ok(()), |m| m.errors.clone().map(|_| ())))
            .collect()
    }
}

/// Spectral gap next to the fitted decay rate of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCheck<F> {
    pub spectral: SpectralResult<F>,
    pub decay_rate: F,
    pub horizon: F,
}

/// Relaxes the stationary state of the same model tilted by `γ = ½` towards
/// `params` and fits the decay of the L1 distance.
///
/// The tilt makes the initial perturbation asymmetric, so the slowest mode is
/// excited even when `params` is symmetric.
pub fn gap_versus_decay<F: Real>(
    params: &ModelParams<F>,
    n_spectral: usize,
    n_fp: usize,
    quadrature: &QuadratureSpec,
) -> Result<GapCheck<F>, ExperimentError> {
    let spectral = spectral_gap(params, n_spectral)?;
    let initial = match params.kind {
        ModelKind::Vector { eta, mu, gamma } => ModelParams {
            kind: ModelKind::Vector {
                gamma: gamma + F::lit(0.5),
                eta,
                mu,
            },
            ..*params
        },
        ModelKind::ScalarToy { .. } => *params,
    };
    let grid = Grid1D::new(n_fp)?;
    let u0 = project_density(&initial, grid, quadrature)?;
    // about eight decades at the slowest rate
    let horizon = F::lit(18.0) / spectral.gap;
    let mut options = SolveOptions::fixed(horizon);
    options.sample_every = 50;
    let fp = solve(params, &u0, &ObservableSet::ln_xi(), &options)?;
    let rate = decay_rate(&fp)?;
    Ok(GapCheck {
        spectral,
        decay_rate: rate,
        horizon,
    })
}
