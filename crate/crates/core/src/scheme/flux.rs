//! Edge fractions, discrete fluxes, the conservation residual and its
//! exact Jacobian.

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::mesh::{CellField, Mesh};
use crate::model::{chemical_potentials, log_mean, log_mean_partial, w0_half, ModelParams};
use crate::state::State;

/// Log-mean edge values `U_{i,σ}` for every interior edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFractions {
    n_species: usize,
    values: Vec<f64>,
}

impl EdgeFractions {
    pub fn get(&self, edge: usize, species: usize) -> f64 {
        self.values[edge * self.n_species + species]
    }

    /// Fractions of all species on one edge.
    pub fn edge(&self, edge: usize) -> &[f64] {
        &self.values[edge * self.n_species..(edge + 1) * self.n_species]
    }

    pub fn n_edges(&self) -> usize {
        self.values.len() / self.n_species
    }
}

/// Oriented fluxes `J_{i,Kσ}` on interior edges, seen from the owner cell
/// `edge.cells.0`; the other cell sees the negation.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSet {
    n_species: usize,
    values: Vec<f64>,
}

impl FluxSet {
    pub fn get(&self, edge: usize, species: usize) -> f64 {
        self.values[edge * self.n_species + species]
    }

    pub fn edge(&self, edge: usize) -> &[f64] {
        &self.values[edge * self.n_species..(edge + 1) * self.n_species]
    }

    /// Flux of `species` across `edge` seen from `cell`.
    pub fn from_cell(&self, mesh: &Mesh, edge: usize, species: usize, cell: usize) -> f64 {
        let j = self.get(edge, species);
        if mesh.interior_edges()[edge].cells.0 == cell {
            j
        } else {
            -j
        }
    }

    pub fn n_edges(&self) -> usize {
        self.values.len() / self.n_species
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn edge_fractions(state: &State, mesh: &Mesh) -> EdgeFractions {
    let ns = state.n_species();
    let mut values = Vec::with_capacity(ns * mesh.interior_edges().len());
    for edge in mesh.interior_edges() {
        let (k, l) = edge.cells;
        for f in &state.fields {
            values.push(log_mean(f[k], f[l]));
        }
    }
    EdgeFractions { n_species: ns, values }
}

/// Coefficient `s_i` multiplying `τ_σ D_{Kσ}W_0` in the flux of species `i`:
/// `K_i0 a_i a_0` for `i ≥ 1`, and minus their sum for `i = 0`.
fn ch_coefficients(params: &ModelParams, a: &[f64], s: &mut [f64]) {
    s[0] = 0.0;
    for i in 1..a.len() {
        s[i] = params.k(i, 0) * a[i] * a[0];
        s[0] -= s[i];
    }
}

/// Flux kernel on one edge: `a` edge fractions, `d` oriented jumps of `U`,
/// `dw` oriented jump of `W_0`.
fn edge_flux(params: &ModelParams, tau: f64, a: &[f64], d: &[f64], dw: f64, s: &mut [f64], out: &mut [f64]) {
    let ns = a.len();
    ch_coefficients(params, a, s);
    for i in 0..ns {
        let mut cross = 0.0;
        for j in 0..ns {
            if j != i {
                cross += params.k(i, j) * (a[j] * d[i] - a[i] * d[j]);
            }
        }
        out[i] = -tau * cross + tau * s[i] * dw;
    }
}

fn check_pair(mesh: &Mesh, params: &ModelParams, next: &State, prev: &State) -> Result<()> {
    next.check_compatible(mesh, params.n_species())?;
    prev.check_compatible(mesh, params.n_species())
}

/// Discrete fluxes of the scheme at `U^{p+1} = next`, with `W_0^{p+1/2}`
/// built from `next` and `prev`.
pub fn fluxes(mesh: &Mesh, params: &ModelParams, next: &State, prev: &State) -> Result<FluxSet> {
    check_pair(mesh, params, next, prev)?;
    let ns = params.n_species();
    let w0 = w0_half(mesh, params, next.species(0), prev.species(0));
    let mut a = vec![0.0; ns];
    let mut d = vec![0.0; ns];
    let mut s = vec![0.0; ns];
    let mut j = vec![0.0; ns];
    let mut values = Vec::with_capacity(ns * mesh.interior_edges().len());
    for edge in mesh.interior_edges() {
        let (k, l) = edge.cells;
        for i in 0..ns {
            let f = &next.fields[i];
            a[i] = log_mean(f[k], f[l]);
            d[i] = f[l] - f[k];
        }
        edge_flux(params, edge.transmissibility, &a, &d, w0[l] - w0[k], &mut s, &mut j);
        values.extend_from_slice(&j);
    }
    Ok(FluxSet { n_species: ns, values })
}

/// Fluxes in entropic form `-τ Σ_{j≠i} K_ij U_{i,σ} U_{j,σ} D(μ_i - μ_j)`.
/// Requires strictly positive `next`.
pub fn fluxes_entropic(mesh: &Mesh, params: &ModelParams, next: &State, prev: &State) -> Result<FluxSet> {
    check_pair(mesh, params, next, prev)?;
    let mu = chemical_potentials(mesh, params, next, prev)?;
    let ns = params.n_species();
    let fr = edge_fractions(next, mesh);
    let mut values = Vec::with_capacity(ns * mesh.interior_edges().len());
    for (e, edge) in mesh.interior_edges().iter().enumerate() {
        let (k, l) = edge.cells;
        let a = fr.edge(e);
        for i in 0..ns {
            let dmu_i = mu[i][l] - mu[i][k];
            let mut sum = 0.0;
            for j in 0..ns {
                if j != i {
                    sum += params.k(i, j) * a[i] * a[j] * (dmu_i - (mu[j][l] - mu[j][k]));
                }
            }
            values.push(-edge.transmissibility * sum);
        }
    }
    Ok(FluxSet { n_species: ns, values })
}

/// Residual of the backward-Euler conservation law in unknown layout
/// (`K * (n+1) + i`).
pub fn residual_unknowns(
    mesh: &Mesh,
    params: &ModelParams,
    next: &[f64],
    prev: &[f64],
    dt: f64,
    out: &mut Vec<f64>,
) {
    let ns = params.n_species();
    let n = mesh.n_cells();
    out.clear();
    out.resize(ns * n, 0.0);
    for k in 0..n {
        let m = mesh.measure(k) / dt;
        for i in 0..ns {
            out[k * ns + i] = m * (next[k * ns + i] - prev[k * ns + i]);
        }
    }
    let u0_next: Vec<f64> = (0..n).map(|k| next[k * ns]).collect();
    let u0_prev: Vec<f64> = (0..n).map(|k| prev[k * ns]).collect();
    let w0 = w0_half(mesh, params, &u0_next, &u0_prev);
    let mut a = vec![0.0; ns];
    let mut d = vec![0.0; ns];
    let mut s = vec![0.0; ns];
    let mut j = vec![0.0; ns];
    for edge in mesh.interior_edges() {
        let (k, l) = edge.cells;
        for i in 0..ns {
            let (xk, xl) = (next[k * ns + i], next[l * ns + i]);
            a[i] = log_mean(xk, xl);
            d[i] = xl - xk;
        }
        edge_flux(params, edge.transmissibility, &a, &d, w0[l] - w0[k], &mut s, &mut j);
        for i in 0..ns {
            out[k * ns + i] += j[i];
            out[l * ns + i] -= j[i];
        }
    }
}

/// `m_K (U^{p+1} - U^p)/Δt + Σ_σ J_{i,Kσ}` per species and cell.
pub fn residual(mesh: &Mesh, params: &ModelParams, next: &State, prev: &State, dt: f64) -> Result<Vec<CellField>> {
    check_pair(mesh, params, next, prev)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt = {dt}")));
    }
    let mut r = Vec::new();
    residual_unknowns(mesh, params, &next.to_unknowns(), &prev.to_unknowns(), dt, &mut r);
    Ok(State::from_unknowns(&r, params.n_species(), 0.0).fields)
}

/// Jacobian of [`residual_unknowns`] with respect to `next`, emitted as
/// `(row, col, value)` triplets. The sequence of `(row, col)` pairs depends
/// only on the mesh and the species count, so a symbolic factorisation can
/// be reused across Newton iterations. Duplicate entries are to be summed.
pub fn jacobian_triplets(
    mesh: &Mesh,
    params: &ModelParams,
    next: &[f64],
    prev: &[f64],
    dt: f64,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let ns = params.n_species();
    let n = mesh.n_cells();
    let eps = params.epsilon;
    out.clear();
    for k in 0..n {
        let m = mesh.measure(k) / dt;
        for i in 0..ns {
            out.push((k * ns + i, k * ns + i, m));
        }
    }
    let u0_next: Vec<f64> = (0..n).map(|k| next[k * ns]).collect();
    let u0_prev: Vec<f64> = (0..n).map(|k| prev[k * ns]).collect();
    let w0 = w0_half(mesh, params, &u0_next, &u0_prev);
    // ∂W_M/∂U_0,M
    let w_diag: Vec<f64> = (0..n)
        .map(|k| {
            let t: f64 = mesh
                .neighbors(k)
                .iter()
                .map(|&(e, _)| mesh.interior_edges()[e].transmissibility)
                .sum();
            eps * t / mesh.measure(k)
        })
        .collect();

    let mut a = vec![0.0; ns];
    let mut ax = vec![0.0; ns];
    let mut ay = vec![0.0; ns];
    let mut d = vec![0.0; ns];
    let mut s = vec![0.0; ns];
    let mut ds = vec![0.0; ns * ns];
    let mut dja = vec![0.0; ns * ns];
    let mut jdx = vec![0.0; ns * ns];
    let mut jdy = vec![0.0; ns * ns];

    for edge in mesh.interior_edges() {
        let (k, l) = edge.cells;
        let tau = edge.transmissibility;
        for i in 0..ns {
            let (xk, xl) = (next[k * ns + i], next[l * ns + i]);
            a[i] = log_mean(xk, xl);
            ax[i] = log_mean_partial(xk, xl);
            ay[i] = log_mean_partial(xl, xk);
            d[i] = xl - xk;
        }
        let dw = w0[l] - w0[k];
        ch_coefficients(params, &a, &mut s);
        // ∂s_i/∂a_m
        ds.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..ns {
            let kk = params.k(i, 0);
            ds[i * ns + i] = kk * a[0];
            ds[i * ns] = kk * a[i];
            ds[i] = -kk * a[0];
            ds[0] -= kk * a[i];
        }
        for i in 0..ns {
            for m in 0..ns {
                let (da, dd) = if m == i {
                    let mut cross_a = 0.0;
                    let mut cross_d = 0.0;
                    for j in 0..ns {
                        if j != i {
                            cross_a += params.k(i, j) * d[j];
                            cross_d += params.k(i, j) * a[j];
                        }
                    }
                    (tau * cross_a, -tau * cross_d)
                } else {
                    (-tau * params.k(i, m) * d[i], tau * params.k(i, m) * a[i])
                };
                dja[i * ns + m] = da + tau * ds[i * ns + m] * dw;
                jdx[i * ns + m] = dja[i * ns + m] * ax[m] - dd;
                jdy[i * ns + m] = dja[i * ns + m] * ay[m] + dd;
            }
        }
        for i in 0..ns {
            for m in 0..ns {
                let (vx, vy) = (jdx[i * ns + m], jdy[i * ns + m]);
                out.push((k * ns + i, k * ns + m, vx));
                out.push((k * ns + i, l * ns + m, vy));
                out.push((l * ns + i, k * ns + m, -vx));
                out.push((l * ns + i, l * ns + m, -vy));
            }
        }
        // W_0 coupling: dW = W_L - W_K, each W_M depends on U_0 on M and its neighbours.
        for i in 0..ns {
            let g = tau * s[i];
            for (cell, sign) in [(l, 1.0), (k, -1.0)] {
                let v = sign * g * w_diag[cell];
                out.push((k * ns + i, cell * ns, v));
                out.push((l * ns + i, cell * ns, -v));
                let inv_m = 1.0 / mesh.measure(cell);
                for &(e2, nb) in mesh.neighbors(cell) {
                    let dwd = -eps * mesh.interior_edges()[e2].transmissibility * inv_m;
                    let v = sign * g * dwd;
                    out.push((k * ns + i, nb * ns, v));
                    out.push((l * ns + i, nb * ns, -v));
                }
            }
        }
    }
}

/// Sparse Jacobian `∂R/∂U^{p+1}` over the `(n+1)·|T|` unknowns, rows and
/// columns in the `K * (n+1) + i` layout.
pub fn jacobian(
    mesh: &Mesh,
    params: &ModelParams,
    next: &State,
    prev: &State,
    dt: f64,
) -> Result<SparseColMat<usize, f64>> {
    check_pair(mesh, params, next, prev)?;
    let mut t = Vec::new();
    jacobian_triplets(mesh, params, &next.to_unknowns(), &prev.to_unknowns(), dt, &mut t);
    let n = params.n_species() * mesh.n_cells();
    let trip: Vec<Triplet<usize, usize, f64>> = t.into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| Error::Shape(format!("{e:?}")))
}
