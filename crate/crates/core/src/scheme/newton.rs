//! Newton iteration for one implicit step, with a direct sparse LU whose
//! symbolic analysis is computed once per sparsity pattern.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::Col;

use super::flux::{jacobian_triplets, residual_unknowns};
use super::SolverConfig;
use crate::error::NewtonFailure;
use crate::mesh::Mesh;
use crate::model::ModelParams;
use crate::state::State;

/// Iterates leaving this box are rejected.
const GUARD_LO: f64 = -0.1;
const GUARD_HI: f64 = 1.1;

struct Pattern {
    pairs: Vec<(usize, usize)>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

/// Sparse direct solver for a sequence of matrices sharing one pattern.
#[derive(Default)]
pub(crate) struct SparseLu {
    pattern: Option<Pattern>,
}

impl SparseLu {
    /// Solves `A x = rhs` for `A` given as triplets (duplicates summed).
    /// Returns `None` when the factorisation fails or the solution is not finite.
    pub(crate) fn solve(&mut self, n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Option<Vec<f64>> {
        let same = self.pattern.as_ref().is_some_and(|p| {
            p.pairs.len() == triplets.len()
                && p.pairs.iter().zip(triplets).all(|(a, b)| a.0 == b.0 && a.1 == b.1)
        });
        if !same {
            let pairs: Vec<(usize, usize)> = triplets.iter().map(|t| (t.0, t.1)).collect();
            let idx: Vec<Pair<usize, usize>> = pairs.iter().map(|&(r, c)| Pair::new(r, c)).collect();
            let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &idx).ok()?;
            let lu = SymbolicLu::try_new(symbolic.as_ref()).ok()?;
            self.pattern = Some(Pattern {
                pairs,
                symbolic,
                argsort,
                lu,
            });
        }
        let p = self.pattern.as_ref()?;
        let values: Vec<f64> = triplets.iter().map(|t| t.2).collect();
        let mat = SparseColMat::new_from_argsort(p.symbolic.clone(), &p.argsort, &values).ok()?;
        let lu = Lu::try_new_with_symbolic(p.lu.clone(), mat.as_ref()).ok()?;
        let b = Col::from_fn(n, |i| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..n).map(|i| x[i]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Outcome of a converged Newton solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    /// Number of linear solves performed.
    pub iterations: usize,
    /// ∞-norm of the last update.
    pub last_update: f64,
    /// ∞-norm of the residual at the accepted iterate.
    pub residual: f64,
}

/// Computes one implicit step `U^p -> U^{p+1}`.
pub trait StepSolver {
    fn solve(
        &mut self,
        mesh: &Mesh,
        params: &ModelParams,
        prev: &State,
        dt: f64,
        config: &SolverConfig,
    ) -> Result<(State, NewtonReport), NewtonFailure>;
}

/// Plain Newton (no line search) started from `U^p`, reusing the symbolic
/// factorisation across iterations and steps.
#[derive(Default)]
pub struct NewtonStepper {
    lu: SparseLu,
    residual: Vec<f64>,
    triplets: Vec<(usize, usize, f64)>,
}

impl NewtonStepper {
    pub fn new() -> Self {
        Self::default()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl StepSolver for NewtonStepper {
    fn solve(
        &mut self,
        mesh: &Mesh,
        params: &ModelParams,
        prev: &State,
        dt: f64,
        config: &SolverConfig,
    ) -> Result<(State, NewtonReport), NewtonFailure> {
        let ns = params.n_species();
        let xp = prev.to_unknowns();
        let n = xp.len();
        let mut x = xp.clone();
        residual_unknowns(mesh, params, &x, &xp, dt, &mut self.residual);
        let mut res = inf_norm(&self.residual);
        if res == 0.0 {
            return Ok((
                State::from_unknowns(&x, ns, prev.time + dt),
                NewtonReport {
                    iterations: 0,
                    last_update: 0.0,
                    residual: 0.0,
                },
            ));
        }
        let mut last_update = f64::INFINITY;
        for it in 1..=config.newton_max_iter {
            jacobian_triplets(mesh, params, &x, &xp, dt, &mut self.triplets);
            let rhs: Vec<f64> = self.residual.iter().map(|r| -r).collect();
            let Some(delta) = self.lu.solve(n, &self.triplets, &rhs) else {
                return Err(NewtonFailure::Singular { residual: res });
            };
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi += di;
            }
            last_update = inf_norm(&delta);
            if let Some(&bad) = x.iter().find(|v| !(GUARD_LO..=GUARD_HI).contains(*v)) {
                return Err(NewtonFailure::Diverged {
                    value: bad,
                    residual: res,
                });
            }
            residual_unknowns(mesh, params, &x, &xp, dt, &mut self.residual);
            res = inf_norm(&self.residual);
            if !res.is_finite() {
                return Err(NewtonFailure::Diverged {
                    value: f64::NAN,
                    residual: res,
                });
            }
            if last_update <= config.newton_tol {
                return Ok((
                    State::from_unknowns(&x, ns, prev.time + dt),
                    NewtonReport {
                        iterations: it,
                        last_update,
                        residual: res,
                    },
                ));
            }
        }
        Err(NewtonFailure::MaxIterations {
            iterations: config.newton_max_iter,
            last_update,
            residual: res,
        })
    }
}

/// One Newton solve of the implicit step from `prev` with time step `dt`.
pub fn newton_solve(
    mesh: &Mesh,
    params: &ModelParams,
    prev: &State,
    dt: f64,
    config: &SolverConfig,
) -> Result<(State, NewtonReport), NewtonFailure> {
    NewtonStepper::new().solve(mesh, params, prev, dt, config)
}
