//! Adaptive time stepping and the run driver.

use super::newton::{NewtonReport, NewtonStepper, StepSolver};
use super::SolverConfig;
use crate::diagnostics::{Monitor, StepDiagnostics, Thresholds};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{discrete_energy, ModelParams};
use crate::state::State;

/// Result of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    pub dt_used: f64,
    /// Proposal for the following step: `dt_used · dt_grow`, capped at `dt_max`.
    pub next_dt: f64,
    pub newton: NewtonReport,
    /// Failed attempts before the accepted one.
    pub rejections: usize,
}

/// Takes one step of size at most `dt`, shrinking it after each Newton
/// failure. Aborts once the step would fall below `dt_min`.
pub fn advance<S: StepSolver + ?Sized>(
    state: &State,
    mesh: &Mesh,
    params: &ModelParams,
    config: &SolverConfig,
    dt: f64,
    solver: &mut S,
) -> Result<StepOutcome> {
    let mut dt = dt.min(config.dt_max);
    let mut rejections = 0;
    loop {
        if !(dt >= config.dt_min) {
            return Err(Error::Abort {
                time: state.time,
                dt,
                last_residual: f64::NAN,
            });
        }
        match solver.solve(mesh, params, state, dt, config) {
            Ok((next, newton)) => {
                return Ok(StepOutcome {
                    state: next,
                    dt_used: dt,
                    next_dt: (dt * config.dt_grow).min(config.dt_max),
                    newton,
                    rejections,
                })
            }
            Err(failure) => {
                rejections += 1;
                let smaller = dt * config.dt_shrink;
                if smaller < config.dt_min {
                    return Err(Error::Abort {
                        time: state.time,
                        dt: smaller,
                        last_residual: failure.residual(),
                    });
                }
                dt = smaller;
            }
        }
    }
}

/// Reference state for the relative energy column.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Reference {
    #[default]
    None,
    /// A constant steady state; RE is its Bregman divergence.
    Constant(State),
    /// The last state of the run; RE is `E(U^p) - E(U^final)`, filled in at the end.
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    /// Times at which states are kept. Empty means initial and final state.
    pub snapshot_times: Vec<f64>,
    pub reference: Reference,
    pub thresholds: Thresholds,
}

impl RunOptions {
    pub fn until(t_end: f64) -> Self {
        RunOptions {
            t_end,
            snapshot_times: Vec::new(),
            reference: Reference::None,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// One record per accepted step; entry 0 describes the initial state.
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<State>,
    pub final_state: State,
    /// Newton failures that led to a smaller step.
    pub rejections: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.diagnostics.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.time).collect()
    }

    pub fn is_clean(&self) -> bool {
        self.diagnostics.iter().all(StepDiagnostics::is_clean)
    }
}

/// Two times closer than this (relative) are treated as equal.
const TIME_EPS: f64 = 1e-12;

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS * a.abs().max(b.abs()).max(1.0)
}

/// Integrates from `initial` to `options.t_end` with Newton steps, landing
/// exactly on every snapshot time. `hook` sees every accepted state and its
/// record, starting with the initial one.
pub fn run(
    initial: &State,
    mesh: &Mesh,
    params: &ModelParams,
    config: &SolverConfig,
    options: &RunOptions,
    hook: &mut dyn FnMut(&State, &StepDiagnostics),
) -> Result<Trajectory> {
    run_with(&mut NewtonStepper::new(), initial, mesh, params, config, options, hook)
}

/// [`run`] with a caller-supplied step solver.
pub fn run_with<S: StepSolver + ?Sized>(
    solver: &mut S,
    initial: &State,
    mesh: &Mesh,
    params: &ModelParams,
    config: &SolverConfig,
    options: &RunOptions,
    hook: &mut dyn FnMut(&State, &StepDiagnostics),
) -> Result<Trajectory> {
    config.validate()?;
    initial.check_compatible(mesh, params.n_species())?;
    let t0 = initial.time;
    let t_end = options.t_end;
    if !(t_end >= t0) {
        return Err(Error::Config(format!("t_end {t_end} precedes the initial time {t0}")));
    }
    let mut snapshot_times: Vec<f64> = if options.snapshot_times.is_empty() {
        vec![t0, t_end]
    } else {
        options.snapshot_times.clone()
    };
    snapshot_times.retain(|&t| t >= t0 - TIME_EPS && t <= t_end + TIME_EPS);
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup_by(|a, b| same_time(*a, *b));
    // step targets: snapshot times after t0, then t_end
    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| !same_time(t, t0)).collect();
    if targets.last().is_none_or(|&t| !same_time(t, t_end)) && !same_time(t0, t_end) {
        targets.push(t_end);
    }

    let reference = match &options.reference {
        Reference::Constant(s) => Some(s.clone()),
        _ => None,
    };
    let monitor = Monitor::new(mesh, params, initial, reference, options.thresholds);
    let mut diagnostics = vec![monitor.initial(initial)];
    hook(initial, &diagnostics[0]);
    let mut snapshots = Vec::new();
    if snapshot_times.first().is_some_and(|&t| same_time(t, t0)) {
        snapshots.push(initial.clone());
    }

    let mut state = initial.clone();
    let mut dt = config.dt_max;
    let mut rejections = 0;
    for &target in &targets {
        while !same_time(state.time, target) {
            let remaining = target - state.time;
            let clipped = remaining <= dt;
            let outcome = advance(&state, mesh, params, config, dt.min(remaining), solver)?;
            rejections += outcome.rejections;
            let mut next = outcome.state;
            if clipped && outcome.rejections == 0 {
                next.time = target;
            }
            let d = monitor.check_step(
                &state,
                diagnostics.last().expect("initial record"),
                &next,
                outcome.dt_used,
                outcome.newton.iterations,
            );
            hook(&next, &d);
            diagnostics.push(d);
            state = next;
            // a step shortened only to hit the target does not shrink the proposal
            dt = if clipped && outcome.rejections == 0 {
                dt.max(outcome.next_dt)
            } else {
                outcome.next_dt
            };
        }
        state.time = target;
        if diagnostics.len() > 1 {
            diagnostics.last_mut().expect("nonempty").time = target;
        }
        if snapshot_times.iter().any(|&t| same_time(t, target)) {
            snapshots.push(state.clone());
        }
    }

    if options.reference == Reference::Final {
        let e_final = discrete_energy(mesh, params, &state)?.e_total;
        for d in &mut diagnostics {
            d.relative_energy = Some(d.energy.e_total - e_final);
        }
    }
    Ok(Trajectory {
        diagnostics,
        snapshots,
        final_state: state,
        rejections,
    })
}
