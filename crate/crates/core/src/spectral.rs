//! The Fokker-Planck operator in the variable `y = 4√N arcsin √x`.
//!
//! In `y` the diffusion coefficient is constant and equal to one, and with
//! `ū` the stationary density expressed in `y` the substitution `z = u/√ū`
//! turns the flow into `∂t z = −H z` with the nonnegative self-adjoint
//!
//! ```text
//! H z = −(1/√ū) ∂y( ū ∂y(z/√ū) ) = −∂yy z + V z,   V = (∂yy √ū)/√ū.
//! ```
//!
//! Its eigenvalues are therefore decay rates in the original time units.
//! The divergence form is discretised directly, which makes `√ū` an exact
//! null vector of the matrix.

use serde::Serialize;
use thiserror::Error;

use crate::fp_solver::FpTrajectory;
use crate::linalg::{LinalgError, SymTridiagonal};
use crate::model::{ModelError, ModelParams, NaturalParams, Point};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("potential is not bounded below for 4N*mu = {0} < 3/2; the spectral gap is only defined from 3/2 on")]
    NotBoundedBelow(f64),
    #[error("grid needs at least 64 cells, got {0}")]
    Grid(usize),
    #[error("distance to equilibrium does not decay enough to fit a rate ({0})")]
    InsufficientDecay(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Domain length `Y_N = 2π√N`.
pub fn domain_length<F: Real>(population_size: F) -> F {
    F::lit(2.0) * F::PI() * population_size.sqrt()
}

/// `y(x) = 4√N arcsin √x`.
pub fn transform_y<F: Real>(x: F, population_size: F) -> F {
    F::lit(4.0) * population_size.sqrt() * x.sqrt().asin()
}

/// Inverse of [`transform_y`].
pub fn inverse_y<F: Real>(y: F, population_size: F) -> F {
    inverse_point(y, population_size).x
}

/// `x(y)` with `1 − x` computed from the distance to the far end.
pub fn inverse_point<F: Real>(y: F, population_size: F) -> Point<F> {
    let scale = F::lit(4.0) * population_size.sqrt();
    let y_max = domain_length(population_size);
    let s = (y / scale).sin();
    let c = ((y_max - y) / scale).sin();
    Point {
        x: s * s,
        one_minus_x: c * c,
        ln_x: F::lit(2.0) * s.ln(),
        ln_one_minus_x: F::lit(2.0) * c.ln(),
    }
}

/// `ln ū` up to a constant: `θ·A − ½ ln ξ`.
fn ln_ubar<F: Real>(theta: &NaturalParams<F>, p: &Point<F>) -> F {
    theta.exponent(p) - F::lit(0.5) * p.ln_xi()
}

/// `V = (∂yy √ū)/√ū` at `y`.
pub fn potential_v<F: Real>(y: F, params: &ModelParams<F>) -> Result<F, ModelError> {
    params.validate()?;
    let n = params.population_size;
    let p = inverse_point(y, n);
    let x = p.x;
    let theta = params.natural();
    let xi = p.xi();
    let xp = p.xi_prime();
    // g = ln ū as a function of x
    let half = F::lit(0.5);
    let g_x = theta.exponent_derivative(x) - half * xp / xi;
    let g_xx = theta.exponent_second_derivative(x) - half * (F::lit(-2.0) * xi - xp * xp) / (xi * xi);
    // x_y² = ξ/(4N), x_yy = ξ′/(8N)
    let eight_n = F::lit(8.0) * n;
    Ok((xi * g_xx + half * xp * g_x) / eight_n + xi * g_x * g_x / (F::lit(2.0) * eight_n))
}

/// Coefficient `(4Nμ − ½)(4Nμ − 3/2)/(16N)` of the `(ξ′)²/ξ` singularity of `V`.
pub fn singular_coefficient<F: Real>(params: &ModelParams<F>) -> F {
    let a = params.natural().ln_xi;
    (a - F::lit(0.5)) * (a - F::lit(1.5)) / (F::lit(16.0) * params.population_size)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult<F> {
    /// Lowest eigenvalues, ascending.
    pub eigenvalues: Vec<F>,
    pub gap: F,
    pub n_grid: usize,
    /// Cell centres in `y`.
    pub nodes: Vec<F>,
    /// Unit eigenvector of the lowest eigenvalue.
    pub ground_state: Vec<F>,
}

/// Cell-centred discretisation of `H` on `(0, Y_N)`.
pub fn hamiltonian<F: Real>(
    params: &ModelParams<F>,
    n_grid: usize,
) -> Result<(SymTridiagonal<F>, Vec<F>, Vec<F>), SpectralError> {
    params.validate()?;
    if n_grid < 64 {
        return Err(SpectralError::Grid(n_grid));
    }
    let theta = params.natural();
    let big_n = params.population_size;
    let h = domain_length(big_n) / F::from_usize_lossy(n_grid);
    let inv_h2 = (h * h).recip();
    let nodes: Vec<F> = (0..n_grid)
        .map(|i| (F::from_usize_lossy(i) + F::lit(0.5)) * h)
        .collect();
    let g_cell: Vec<F> = nodes
        .iter()
        .map(|&y| ln_ubar(&theta, &inverse_point(y, big_n)))
        .collect();
    let g_face: Vec<F> = (1..n_grid)
        .map(|i| ln_ubar(&theta, &inverse_point(F::from_usize_lossy(i) * h, big_n)))
        .collect();
    let half = F::lit(0.5);
    let mut diag = vec![F::zero(); n_grid];
    let mut off = vec![F::zero(); n_grid - 1];
    for f in 0..n_grid - 1 {
        let (l, r) = (g_cell[f], g_cell[f + 1]);
        off[f] = -(g_face[f] - half * (l + r)).exp() * inv_h2;
        diag[f] = diag[f] + (g_face[f] - l).exp() * inv_h2;
        diag[f + 1] = diag[f + 1] + (g_face[f] - r).exp() * inv_h2;
    }
    Ok((SymTridiagonal::new(diag, off)?, nodes, g_cell))
}

/// Lowest two eigenvalues of `H` and the gap between them.
pub fn spectral_gap<F: Real>(params: &ModelParams<F>, n_grid: usize) -> Result<SpectralResult<F>, SpectralError> {
    params.validate()?;
    let a = params.natural().ln_xi;
    if a < F::lit(1.5) {
        return Err(SpectralError::NotBoundedBelow(a.as_f64()));
    }
    let (t, nodes, _) = hamiltonian(params, n_grid)?;
    let l0 = t.eigenvalue(0)?;
    let l1 = t.eigenvalue(1)?;
    let ground_state = t.eigenvector(l0);
    Ok(SpectralResult {
        eigenvalues: vec![l0, l1],
        gap: l1 - l0,
        n_grid,
        nodes,
        ground_state,
    })
}

/// Exponential rate of `‖u(t) − u_∞‖₁`, fitted over the last decade of the record.
pub fn decay_rate<F: Real>(trajectory: &FpTrajectory<F>) -> Result<F, SpectralError> {
    let d = &trajectory.l1_distance;
    let t = &trajectory.times;
    let (Some(&first), Some(&last)) = (d.first(), d.last()) else {
        return Err(SpectralError::InsufficientDecay("empty trajectory".into()));
    };
    if !(last < F::lit(1e-3)) {
        return Err(SpectralError::InsufficientDecay(format!(
            "final distance {last:e} is not below 1e-3"
        )));
    }
    if !(first >= F::lit(100.0) * last) || !(last > F::zero()) {
        return Err(SpectralError::InsufficientDecay(format!(
            "distance goes from {first:e} to {last:e}, less than two decades"
        )));
    }
    let floor = F::lit(10.0) * last;
    let start = d.iter().rposition(|&v| v > floor).map_or(0, |i| i + 1);
    let pts: Vec<(F, F)> = (start..d.len()).map(|i| (t[i], d[i].ln())).collect();
    if pts.len() < 3 {
        return Err(SpectralError::InsufficientDecay(
            "fewer than three samples in the final decade".into(),
        ));
    }
    let n = F::from_usize_lossy(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<F>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<F>() / n;
    let sxy: F = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: F = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    Ok(-sxy / sxx)
}
