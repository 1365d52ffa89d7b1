//! Stationary critical points of the constrained energy.
//!
//! After eliminating the Lagrange multipliers, a critical point is given by
//! a scalar Neumann problem for `u_0`,
//!
//! ```text
//! -ε Δu_0 = f(u_0) - mean(f(u_0)),   f(v) = ln((1 - v)/v) - β (1 - 2v),
//! ```
//!
//! and the other species are proportional to `1 - u_0`:
//! `u_i = m_i / (|Ω| - m_0) · (1 - u_0)`. The Laplacian is the same
//! two-point operator as in the time-dependent scheme, so scheme steady
//! states have a vanishing residual.
//!
//! Solutions are critical points; nothing here certifies that they are
//! minimisers.

use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::solvers::Solve;

use crate::error::{Error, NewtonFailure, Result};
use crate::mesh::{CellField, Mesh};
use crate::model::ModelParams;
use crate::state::State;

/// Distance kept from the singular endpoints 0 and 1 by damping.
const BOX_MARGIN: f64 = 1e-12;
const MAX_ITER: usize = 100;
const RESIDUAL_TOL: f64 = 1e-10;
/// Fraction of the distance to the box boundary a damped step may cover.
const FRACTION_TO_BOUNDARY: f64 = 0.99;

#[inline]
fn nonlinearity(v: f64, beta: f64) -> f64 {
    ((1.0 - v) / v).ln() - beta * (1.0 - 2.0 * v)
}

#[inline]
fn nonlinearity_derivative(v: f64, beta: f64) -> f64 {
    -1.0 / (1.0 - v) - 1.0 / v + 2.0 * beta
}

fn check_open_unit(u0: &[f64]) -> Result<()> {
    match u0.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
        Some((k, &v)) => Err(Error::OutOfRange {
            cell: k,
            value: v,
            range: "(0, 1)",
        }),
        None => Ok(()),
    }
}

/// Residual `-ε Δ_T u_0 - f(u_0) + mean_m f(u_0)` per cell; its
/// `m_K`-weighted mean vanishes.
pub fn el_residual_field(mesh: &Mesh, params: &ModelParams, u0: &[f64]) -> Result<CellField> {
    if u0.len() != mesh.n_cells() {
        return Err(Error::Shape("u0 does not match the mesh".into()));
    }
    check_open_unit(u0)?;
    let f: Vec<f64> = u0.iter().map(|&v| nonlinearity(v, params.beta)).collect();
    let mean = mesh.integrate(&f) / mesh.domain_measure();
    let mut r = mesh.laplacian(u0);
    for (rk, fk) in r.iter_mut().zip(&f) {
        *rk = -params.epsilon * *rk - fk + mean;
    }
    Ok(r)
}

/// ∞-norm of [`el_residual_field`].
pub fn el_residual_norm(mesh: &Mesh, params: &ModelParams, u0: &[f64]) -> Result<f64> {
    Ok(el_residual_field(mesh, params, u0)?
        .iter()
        .fold(0.0, |m, v| m.max(v.abs())))
}

/// `u_i = m_i / (|Ω| - m_0) · (1 - u_0)` for `i ≥ 1`, using the masses of `params`.
pub fn reconstruct_species(u0: &[f64], params: &ModelParams, domain_measure: f64) -> Result<State> {
    let masses = &params.masses;
    if masses.len() != params.n_species() {
        return Err(Error::InvalidParams("masses are not set".into()));
    }
    check_open_unit(u0)?;
    let rest = domain_measure - masses[0];
    if !(rest > 0.0) {
        return Err(Error::InvalidParams(format!("m_0 = {} exceeds |Ω|", masses[0])));
    }
    let mut fields = vec![CellField(u0.to_vec())];
    let ns = params.n_species();
    // the last species takes the complement so that per-cell sums are exact
    for &mi in &masses[1..ns - 1] {
        fields.push(CellField(u0.iter().map(|v| mi / rest * (1.0 - v)).collect()));
    }
    let last: Vec<f64> = (0..u0.len())
        .map(|k| 1.0 - fields.iter().map(|f| f[k]).sum::<f64>())
        .collect();
    fields.push(CellField(last));
    State::new(fields, 0.0)
}

/// `max_{i≥1} max_K |u_i - m_i/(|Ω| - m_0) (1 - u_0)|` with the masses
/// measured on the state itself.
pub fn proportionality_defect(mesh: &Mesh, state: &State) -> f64 {
    let masses = state.masses(mesh);
    let rest = mesh.domain_measure() - masses[0];
    let u0 = state.species(0);
    (1..state.n_species())
        .flat_map(|i| {
            let c = masses[i] / rest;
            state.species(i).iter().zip(u0).map(move |(ui, v)| (ui - c * (1.0 - v)).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub u0: CellField,
    /// Multiplier `λ_0 = mean_m f(u_0)`.
    pub multiplier: f64,
    pub species: State,
    /// ∞-norm of the mean-subtracted residual.
    pub residual_norm: f64,
    /// Observed `min_K min(u_0, 1 - u_0)`.
    pub delta: f64,
    pub iterations: usize,
}

/// Damped Newton on `(u_0, λ_0)`:
/// `-ε Δ_T u_0 - f(u_0) + λ_0 = 0` per cell and `Σ m_K u_0,K = m_0`.
pub fn solve_stationary(mesh: &Mesh, params: &ModelParams, m0: f64, guess: &[f64]) -> Result<StationarySolution> {
    let n = mesh.n_cells();
    let omega = mesh.domain_measure();
    if !(m0 > 0.0 && m0 < omega) {
        return Err(Error::InvalidParams(format!("m_0 = {m0} must lie in (0, {omega})")));
    }
    if guess.len() != n {
        return Err(Error::Shape("guess does not match the mesh".into()));
    }
    check_open_unit(guess)?;
    let (eps, beta) = (params.epsilon, params.beta);
    let lo = BOX_MARGIN;
    let hi = 1.0 - BOX_MARGIN;
    let mut u: Vec<f64> = guess.iter().map(|v| v.clamp(lo * 2.0, 1.0 - lo * 2.0)).collect();
    let f: Vec<f64> = u.iter().map(|&v| nonlinearity(v, beta)).collect();
    let mut lambda = mesh.integrate(&f) / omega;

    let diag_lap: Vec<f64> = (0..n)
        .map(|k| {
            mesh.neighbors(k)
                .iter()
                .map(|&(e, _)| mesh.interior_edges()[e].transmissibility)
                .sum::<f64>()
                / mesh.measure(k)
        })
        .collect();

    let system_residual = |u: &[f64], lambda: f64| -> Vec<f64> {
        let mut r = mesh.laplacian(u).into_inner();
        for (k, rk) in r.iter_mut().enumerate() {
            *rk = -eps * *rk - nonlinearity(u[k], beta) + lambda;
        }
        r.push(mesh.integrate(u) - m0);
        r
    };

    let mut iterations = 0;
    loop {
        let r = system_residual(&u, lambda);
        let el = el_residual_norm(mesh, params, &u)?;
        let mass_gap = r[n].abs();
        if el <= RESIDUAL_TOL && mass_gap <= 1e-12 * omega {
            let f: Vec<f64> = u.iter().map(|&v| nonlinearity(v, beta)).collect();
            let multiplier = mesh.integrate(&f) / omega;
            let rebound = ModelParams {
                masses: {
                    let mut m = vec![m0];
                    let rest: Vec<f64> = params.masses.get(1..).map(<[f64]>::to_vec).unwrap_or_default();
                    m.extend(rest);
                    m
                },
                ..params.clone()
            };
            let species = if rebound.masses.len() == params.n_species() {
                reconstruct_species(&u, &rebound, omega)?
            } else {
                State::new(vec![CellField(u.clone()), CellField(u.iter().map(|v| 1.0 - v).collect())], 0.0)?
            };
            let delta = u.iter().map(|&v| v.min(1.0 - v)).fold(f64::INFINITY, f64::min);
            return Ok(StationarySolution {
                u0: CellField(u),
                multiplier,
                species,
                residual_norm: el,
                delta,
                iterations,
            });
        }
        if iterations == MAX_ITER {
            return Err(Error::Newton(NewtonFailure::MaxIterations {
                iterations,
                last_update: f64::NAN,
                residual: el,
            }));
        }
        iterations += 1;

        let mut trip = Vec::with_capacity(6 * n);
        for k in 0..n {
            trip.push(Triplet::new(k, k, eps * diag_lap[k] - nonlinearity_derivative(u[k], beta)));
            for &(e, l) in mesh.neighbors(k) {
                let t = mesh.interior_edges()[e].transmissibility;
                trip.push(Triplet::new(k, l, -eps * t / mesh.measure(k)));
            }
            trip.push(Triplet::new(k, n, 1.0));
            trip.push(Triplet::new(n, k, mesh.measure(k)));
        }
        let jac = SparseColMat::<usize, f64>::try_new_from_triplets(n + 1, n + 1, &trip)
            .map_err(|e| Error::Shape(format!("{e:?}")))?;
        let singular = || Error::Newton(NewtonFailure::Singular { residual: el });
        let lu = jac.sp_lu().map_err(|_| singular())?;
        let rhs = faer::Col::from_fn(n + 1, |i| -r[i]);
        let delta = lu.solve(&rhs);
        if (0..=n).any(|i| !delta[i].is_finite()) {
            return Err(singular());
        }
        // largest step keeping every cell inside (lo, hi)
        let mut alpha: f64 = 1.0;
        for k in 0..n {
            let d = delta[k];
            if d < 0.0 {
                alpha = alpha.min(FRACTION_TO_BOUNDARY * (u[k] - lo) / -d);
            } else if d > 0.0 {
                alpha = alpha.min(FRACTION_TO_BOUNDARY * (hi - u[k]) / d);
            }
        }
        for k in 0..n {
            u[k] += alpha * delta[k];
        }
        lambda += alpha * delta[n];
    }
}
