//! Implicit two-point finite-volume scheme.
//!
//! One time step solves, for every species `i` and cell `K`,
//!
//! ```text
//! m_K (U_{i,K}^{p+1} - U_{i,K}^p) / Δt + Σ_{σ ∈ E_K,int} J_{i,Kσ}^{p+1} = 0
//! ```
//!
//! with log-mean edge fractions and the convex-concave split of `w_0`
//! (implicit Laplacian, explicit `β(1 - 2U_0)`). All `n+1` species are
//! unknowns; the per-cell sum is never imposed, only checked.

mod flux;
mod newton;
mod stepping;

pub use flux::{
    edge_fractions, fluxes, fluxes_entropic, jacobian, jacobian_triplets, residual, residual_unknowns,
    EdgeFractions, FluxSet,
};
pub use newton::{newton_solve, NewtonReport, NewtonStepper, StepSolver};
pub use stepping::{advance, run, run_with, Reference, RunOptions, StepOutcome, Trajectory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{CellField, Mesh, Point};
use crate::state::State;

/// Newton tolerance and adaptive time-step policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// ∞-norm of the Newton update below which an iterate is accepted.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt_max: f64,
    pub dt_min: f64,
    pub dt_grow: f64,
    pub dt_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            dt_max: 1e-3,
            dt_min: 1e-12,
            dt_grow: 1.2,
            dt_shrink: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn with_dt_max(dt_max: f64) -> Self {
        SolverConfig {
            dt_max,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.newton_tol > 0.0
            && self.newton_max_iter > 0
            && self.dt_min > 0.0
            && self.dt_min <= self.dt_max
            && self.dt_shrink > 0.0
            && self.dt_shrink < 1.0
            && self.dt_grow > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver configuration {self:?}")))
        }
    }
}

/// Cell averages of pointwise initial profiles by the midpoint rule.
pub fn project_initial(profiles: &[&dyn Fn(Point) -> f64], mesh: &Mesh) -> Result<State> {
    let mut fields = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let mut values = Vec::with_capacity(mesh.n_cells());
        for (k, cell) in mesh.cells().iter().enumerate() {
            let v = profile(cell.center);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    cell: k,
                    value: v,
                    range: "[0, 1]",
                });
            }
            values.push(v);
        }
        fields.push(CellField(values));
    }
    State::new(fields, 0.0)
}
