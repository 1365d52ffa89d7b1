//! Per-step measurements of the discrete invariants, rate fitting and the
//! CSV formats for diagnostics series and snapshots.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{CellField, Mesh};
use crate::model::{bregman_divergence, chemical_potentials, discrete_energy, EnergyBreakdown, ModelParams};
use crate::scheme::edge_fractions;
use crate::state::State;
use crate::stationary::el_residual_norm;

/// Dissipation `Σ_σ τ_σ (Dμ)ᵀ M(U_σ) Dμ` at `next`, evaluated as
/// `Σ_σ τ_σ Σ_{i<j} K_ij U_{i,σ} U_{j,σ} (Dμ_i - Dμ_j)²`, so every term is
/// nonnegative. `None` when some value of `next` is not positive.
pub fn dissipation(mesh: &Mesh, params: &ModelParams, next: &State, prev: &State) -> Option<f64> {
    let mu = chemical_potentials(mesh, params, next, prev).ok()?;
    let fr = edge_fractions(next, mesh);
    let ns = params.n_species();
    let mut dmu = vec![0.0; ns];
    let mut total = 0.0;
    for (e, edge) in mesh.interior_edges().iter().enumerate() {
        let (k, l) = edge.cells;
        for (d, m) in dmu.iter_mut().zip(&mu) {
            *d = m[l] - m[k];
        }
        let a = fr.edge(e);
        let mut q = 0.0;
        for i in 0..ns {
            for j in i + 1..ns {
                q += params.k(i, j) * a[i] * a[j] * (dmu[i] - dmu[j]).powi(2);
            }
        }
        total += edge.transmissibility * q;
    }
    Some(total)
}

/// Least-squares fit of `ln(values) ≈ c - rate · t`. Returns `(rate, r²)`;
/// `r² = 1` for exactly constant data.
pub fn fit_exponential_rate(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if times.len() != values.len() {
        return Err(Error::Shape(format!("{} times, {} values", times.len(), values.len())));
    }
    if times.len() < 3 {
        return Err(Error::InvalidParams("rate fit needs at least 3 points".into()));
    }
    if let Some((k, &v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::OutOfRange {
            cell: k,
            value: v,
            range: "(0, ∞)",
        });
    }
    let n = times.len() as f64;
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in times.iter().zip(&ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if stt == 0.0 {
        return Err(Error::InvalidParams("rate fit needs distinct times".into()));
    }
    let slope = sty / stt;
    let r2 = if syy == 0.0 { 1.0 } else { (sty * sty) / (stt * syy) };
    Ok((-slope, r2))
}

/// Fit restricted to the samples with `t_a ≤ t ≤ t_b`.
pub fn fit_exponential_rate_window(times: &[f64], values: &[f64], t_a: f64, t_b: f64) -> Result<(f64, f64)> {
    let (t, v): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_a && **t <= t_b)
        .map(|(t, v)| (*t, *v))
        .unzip();
    fit_exponential_rate(&t, &v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Invariant {
    MassConservation,
    VolumeFilling,
    Positivity,
    EnergyDissipation,
    NonnegativeDissipation,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Invariant::MassConservation => "mass conservation",
            Invariant::VolumeFilling => "volume filling",
            Invariant::Positivity => "positivity",
            Invariant::EnergyDissipation => "energy dissipation",
            Invariant::NonnegativeDissipation => "nonnegative dissipation",
        };
        f.write_str(s)
    }
}

/// A violated invariant and by how much (defect, not margin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub invariant: Invariant,
    pub magnitude: f64,
}

/// Tolerances applied by [`Monitor`] and [`verify_series`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Absolute per-species mass drift from the initial state.
    pub mass_drift: f64,
    /// `max_K |Σ_i U_{i,K} - 1|`.
    pub volume_filling: f64,
    /// Slack `c` in `E^{p+1} - E^p + Δt D ≤ c (1 + |E^p|)`.
    pub energy_slack: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            mass_drift: 1e-9,
            volume_filling: 1e-9,
            energy_slack: 1e-10,
        }
    }
}

impl Thresholds {
    /// Volume-filling threshold `10 · newton_tol`; mass and energy keep their defaults.
    pub fn for_newton_tol(newton_tol: f64) -> Self {
        Thresholds {
            volume_filling: 10.0 * newton_tol,
            ..Default::default()
        }
    }
}

/// Measurements after one accepted step (or of the initial state, step 0).
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub energy: EnergyBreakdown,
    /// `D^{p+1}`; `None` for the initial record or non-positive states.
    pub dissipation: Option<f64>,
    pub masses: Vec<f64>,
    pub min_u: f64,
    pub max_u: f64,
    pub volume_filling_defect: f64,
    /// ∞-norm of the Euler–Lagrange residual of `u_0`; `None` outside (0, 1).
    pub el_residual: Option<f64>,
    pub relative_energy: Option<f64>,
    pub newton_iters: usize,
    pub violations: Vec<Violation>,
}

impl StepDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates [`StepDiagnostics`] along a run with fixed initial masses and
/// an optional constant reference state.
pub struct Monitor<'a> {
    mesh: &'a Mesh,
    params: &'a ModelParams,
    initial_masses: Vec<f64>,
    reference: Option<State>,
    pub thresholds: Thresholds,
}

impl<'a> Monitor<'a> {
    /// `reference` is used for the relative energy, measured as the Bregman
    /// divergence (equal to the energy difference for a constant reference of
    /// equal mass, without its cancellation error).
    pub fn new(
        mesh: &'a Mesh,
        params: &'a ModelParams,
        initial: &State,
        reference: Option<State>,
        thresholds: Thresholds,
    ) -> Self {
        Monitor {
            mesh,
            params,
            initial_masses: initial.masses(mesh),
            reference,
            thresholds,
        }
    }

    fn measure(&self, state: &State, step: usize, dt: f64, newton_iters: usize) -> StepDiagnostics {
        let energy = discrete_energy(self.mesh, self.params, state).unwrap_or(EnergyBreakdown {
            e_conv: f64::NAN,
            e_conc: f64::NAN,
            e_total: f64::NAN,
        });
        let masses = state.masses(self.mesh);
        let min_u = state.min_value();
        let volume_filling_defect = state.volume_filling_defect();
        let mut violations = Vec::new();
        let drift = masses
            .iter()
            .zip(&self.initial_masses)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !(drift <= self.thresholds.mass_drift) {
            violations.push(Violation {
                invariant: Invariant::MassConservation,
                magnitude: drift,
            });
        }
        if !(volume_filling_defect <= self.thresholds.volume_filling) {
            violations.push(Violation {
                invariant: Invariant::VolumeFilling,
                magnitude: volume_filling_defect,
            });
        }
        if !(min_u > 0.0) {
            violations.push(Violation {
                invariant: Invariant::Positivity,
                magnitude: -min_u,
            });
        }
        StepDiagnostics {
            step,
            time: state.time,
            dt,
            energy,
            dissipation: None,
            masses,
            min_u,
            max_u: state.max_value(),
            volume_filling_defect,
            el_residual: el_residual_norm(self.mesh, self.params, state.species(0)).ok(),
            relative_energy: self
                .reference
                .as_ref()
                .and_then(|r| bregman_divergence(self.mesh, self.params, state, r).ok()),
            newton_iters,
            violations,
        }
    }

    /// Record for the initial state (step 0, `dt = 0`, no dissipation).
    pub fn initial(&self, state: &State) -> StepDiagnostics {
        self.measure(state, 0, 0.0, 0)
    }

    /// Measures `next`, reached from `prev` (whose record is `prev_diag`) with
    /// step `dt`, and flags every violated invariant.
    pub fn check_step(
        &self,
        prev: &State,
        prev_diag: &StepDiagnostics,
        next: &State,
        dt: f64,
        newton_iters: usize,
    ) -> StepDiagnostics {
        let mut d = self.measure(next, prev_diag.step + 1, dt, newton_iters);
        d.dissipation = dissipation(self.mesh, self.params, next, prev);
        if let Some(dis) = d.dissipation {
            if dis < 0.0 {
                d.violations.push(Violation {
                    invariant: Invariant::NonnegativeDissipation,
                    magnitude: -dis,
                });
            }
        }
        let e_prev = prev_diag.energy.e_total;
        let excess = d.energy.e_total - e_prev + dt * d.dissipation.unwrap_or(0.0);
        let slack = self.thresholds.energy_slack * (1.0 + e_prev.abs());
        if !(excess <= slack) {
            d.violations.push(Violation {
                invariant: Invariant::EnergyDissipation,
                magnitude: excess,
            });
        }
        d
    }
}

const SIG17: usize = 16;

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.SIG17$e}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Io(format!("cannot parse `{s}` as a number")))
}

/// Column names of the diagnostics series for `n_species` species.
pub fn series_header(n_species: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "time", "dt", "E_total", "E_conv", "E_conc", "dissipation", "RE"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..n_species).map(|i| format!("mass_{i}")));
    h.extend(["min_u", "max_u", "el_residual", "newton_iters"].iter().map(|s| s.to_string()));
    h
}

/// One row of the diagnostics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub e_total: f64,
    pub e_conv: f64,
    pub e_conc: f64,
    pub dissipation: f64,
    pub relative_energy: f64,
    pub masses: Vec<f64>,
    pub min_u: f64,
    pub max_u: f64,
    pub el_residual: f64,
    pub newton_iters: usize,
}

impl From<&StepDiagnostics> for SeriesRow {
    fn from(d: &StepDiagnostics) -> Self {
        SeriesRow {
            step: d.step,
            time: d.time,
            dt: d.dt,
            e_total: d.energy.e_total,
            e_conv: d.energy.e_conv,
            e_conc: d.energy.e_conc,
            dissipation: d.dissipation.unwrap_or(f64::NAN),
            relative_energy: d.relative_energy.unwrap_or(f64::NAN),
            masses: d.masses.clone(),
            min_u: d.min_u,
            max_u: d.max_u,
            el_residual: d.el_residual.unwrap_or(f64::NAN),
            newton_iters: d.newton_iters,
        }
    }
}

pub fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let ns = rows.first().map_or(0, |r| r.masses.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(series_header(ns))?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            fmt_f64(r.time),
            fmt_f64(r.dt),
            fmt_f64(r.e_total),
            fmt_f64(r.e_conv),
            fmt_f64(r.e_conc),
            fmt_f64(r.dissipation),
            fmt_f64(r.relative_energy),
        ];
        rec.extend(r.masses.iter().map(|&m| fmt_f64(m)));
        rec.extend([fmt_f64(r.min_u), fmt_f64(r.max_u), fmt_f64(r.el_residual), r.newton_iters.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let ns = header.iter().filter(|h| h.starts_with("mass_")).count();
    let expected = series_header(ns);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Io(format!("unexpected series header in {}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| parse_f64(&rec[i]);
        let int = |i: usize| {
            rec[i]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Io(format!("cannot parse `{}` as an integer", &rec[i])))
        };
        rows.push(SeriesRow {
            step: int(0)?,
            time: f(1)?,
            dt: f(2)?,
            e_total: f(3)?,
            e_conv: f(4)?,
            e_conc: f(5)?,
            dissipation: f(6)?,
            relative_energy: f(7)?,
            masses: (0..ns).map(|i| f(8 + i)).collect::<Result<_>>()?,
            min_u: f(8 + ns)?,
            max_u: f(9 + ns)?,
            el_residual: f(10 + ns)?,
            newton_iters: int(11 + ns)?,
        });
    }
    Ok(rows)
}

/// Re-checks a stored series: mass drift against the first row, positivity,
/// nonnegative dissipation and the energy inequality between consecutive rows.
/// Returns `(step, violation)` pairs.
pub fn verify_series(rows: &[SeriesRow], thresholds: &Thresholds) -> Vec<(usize, Violation)> {
    let mut out = Vec::new();
    let Some(first) = rows.first() else {
        return out;
    };
    for (p, r) in rows.iter().enumerate() {
        let drift = r
            .masses
            .iter()
            .zip(&first.masses)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let mut flag = |invariant, magnitude| out.push((r.step, Violation { invariant, magnitude }));
        if !(drift <= thresholds.mass_drift) {
            flag(Invariant::MassConservation, drift);
        }
        if !(r.min_u > 0.0) {
            flag(Invariant::Positivity, -r.min_u);
        }
        if r.dissipation < 0.0 {
            flag(Invariant::NonnegativeDissipation, -r.dissipation);
        }
        if p > 0 {
            let e_prev = rows[p - 1].e_total;
            let d = if r.dissipation.is_nan() { 0.0 } else { r.dissipation };
            let excess = r.e_total - e_prev + r.dt * d;
            if !(excess <= thresholds.energy_slack * (1.0 + e_prev.abs())) {
                flag(Invariant::EnergyDissipation, excess);
            }
        }
    }
    out
}

/// Writes `cell_id,x[,y],u_0..u_n`.
pub fn write_snapshot(path: &Path, mesh: &Mesh, state: &State) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let coords = ["x", "y"];
    let mut header = vec!["cell_id".to_string()];
    header.extend(coords[..mesh.dim()].iter().map(|s| s.to_string()));
    header.extend((0..state.n_species()).map(|i| format!("u_{i}")));
    w.write_record(&header)?;
    for (k, cell) in mesh.cells().iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(cell.center[..mesh.dim()].iter().map(|&c| fmt_f64(c)));
        rec.extend(state.fields.iter().map(|f| fmt_f64(f[k])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]; the time is not stored
/// in the file and is set to `time`.
pub fn read_snapshot(path: &Path, time: f64) -> Result<State> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("u_"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(Error::Io(format!("no species columns in {}", path.display())));
    }
    let mut fields = vec![Vec::new(); cols.len()];
    for rec in r.records() {
        let rec = rec?;
        for (f, &c) in fields.iter_mut().zip(&cols) {
            f.push(parse_f64(&rec[c])?);
        }
    }
    State::new(fields.into_iter().map(CellField).collect(), time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::fluxes;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::three_species(0.1, 10.0, 0.2, 1.0, 0.1).unwrap()
    }

    fn state_from(values: &[f64], n: usize) -> State {
        // values holds unnormalised weights for 3 species per cell
        let mut fields = vec![Vec::new(); 3];
        for k in 0..n {
            let w = &values[3 * k..3 * k + 3];
            let s: f64 = w.iter().sum();
            for i in 0..3 {
                fields[i].push(w[i] / s);
            }
        }
        State::new(fields.into_iter().map(CellField).collect(), 0.0).unwrap()
    }

    #[test]
    fn exact_exponential_fit() {
        let t = [0.0, 0.5, 1.0];
        let v: Vec<f64> = t.iter().map(|t: &f64| (-2.0 * t).exp()).collect();
        let (rate, r2) = fit_exponential_rate(&t, &v).unwrap();
        assert!((rate - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_fit_has_zero_rate() {
        let (rate, r2) = fit_exponential_rate(&[0.0, 1.0, 2.0], &[3.0; 3]).unwrap();
        assert_eq!(rate, 0.0);
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_exponential_rate(&[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(fit_exponential_rate(&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0]).is_err());
        assert!(fit_exponential_rate(&[0.0, 1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn window_fit() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let v: Vec<f64> = t.iter().map(|&t| if t < 1.0 { 5.0 } else { (-0.7 * t).exp() }).collect();
        let (rate, r2) = fit_exponential_rate_window(&t, &v, 1.0, 5.0).unwrap();
        assert!((rate - 0.7).abs() < 1e-12 && r2 > 1.0 - 1e-12);
    }

    #[test]
    fn constant_step_is_clean() {
        let mesh = Mesh::interval(8, 1.0).unwrap();
        let p = params();
        let s = State::constant(8, &[0.25, 0.25, 0.5], 0.0);
        let m = Monitor::new(&mesh, &p, &s, Some(s.clone()), Thresholds::default());
        let d0 = m.initial(&s);
        let d1 = m.check_step(&s, &d0, &s, 1e-3, 0);
        assert!(d1.is_clean());
        assert_eq!(d1.dissipation, Some(0.0));
        assert_eq!(d1.volume_filling_defect, 0.0);
        assert_eq!(d1.relative_energy, Some(0.0));
        assert_eq!(d1.step, 1);
    }

    #[test]
    fn volume_filling_violation_is_measured() {
        let mesh = Mesh::interval(4, 1.0).unwrap();
        let p = params();
        let s = State::constant(4, &[0.25, 0.25, 0.5], 0.0);
        let mut bad = s.clone();
        bad.fields[2][1] += 0.1;
        let m = Monitor::new(&mesh, &p, &s, None, Thresholds::default());
        let d = m.check_step(&s, &m.initial(&s), &bad, 1e-3, 1);
        assert!((d.volume_filling_defect - 0.1).abs() < 1e-15);
        assert!(d
            .violations
            .iter()
            .any(|v| v.invariant == Invariant::VolumeFilling && (v.magnitude - 0.1).abs() < 1e-15));
    }

    #[test]
    fn dissipation_undefined_on_zero_values() {
        let mesh = Mesh::interval(2, 1.0).unwrap();
        let s = State::constant(2, &[0.0, 0.5, 0.5], 0.0);
        assert_eq!(dissipation(&mesh, &params(), &s, &s), None);
    }

    #[test]
    fn two_cell_dissipation() {
        // two species, K_01 = 1, ε = 0 so μ_0 = ln U_0 + β(1 - 2 U_0^prev)
        let mesh = Mesh::interval(2, 1.0).unwrap();
        let p = ModelParams::new(0.0, 1.0, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = State::new(vec![vec![0.2, 0.6].into(), vec![0.8, 0.4].into()], 0.0).unwrap();
        let a0 = 0.4 / 3f64.ln();
        let a1 = 0.4 / 2f64.ln();
        let dmu0 = 3f64.ln() - 0.8;
        let dmu1 = -(2f64.ln());
        let expected = 2.0 * a0 * a1 * (dmu0 - dmu1).powi(2);
        let d = dissipation(&mesh, &p, &s, &s).unwrap();
        assert!((d - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let rows = vec![
            SeriesRow {
                step: 0,
                time: 0.0,
                dt: 0.0,
                e_total: 1.0 / 3.0,
                e_conv: 0.1,
                e_conc: 1.0 / 3.0 - 0.1,
                dissipation: f64::NAN,
                relative_energy: 1e-300,
                masses: vec![0.25, 0.25, 0.5],
                min_u: 0.1,
                max_u: 0.9,
                el_residual: std::f64::consts::PI,
                newton_iters: 0,
            },
            SeriesRow {
                step: 1,
                newton_iters: 3,
                dissipation: 0.123_456_789_012_345_68,
                ..SeriesRow {
                    step: 0,
                    time: 1e-3,
                    dt: 1e-3,
                    e_total: 0.3,
                    e_conv: 0.1,
                    e_conc: 0.2,
                    dissipation: 0.0,
                    relative_energy: f64::NAN,
                    masses: vec![0.25, 0.25, 0.5],
                    min_u: 0.1,
                    max_u: 0.9,
                    el_residual: f64::NAN,
                    newton_iters: 0,
                }
            },
        ];
        write_series(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "step,time,dt,E_total,E_conv,E_conc,dissipation,RE,mass_0,mass_1,mass_2,min_u,max_u,el_residual,newton_iters\n"
        ));
        let back = read_series(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].e_total.to_bits(), rows[0].e_total.to_bits());
        assert_eq!(back[0].el_residual.to_bits(), rows[0].el_residual.to_bits());
        assert!(back[0].dissipation.is_nan());
        assert_eq!(back[1].dissipation.to_bits(), rows[1].dissipation.to_bits());
        assert_eq!(back[1].newton_iters, 3);
        assert!(verify_series(&back, &Thresholds::default()).is_empty());

        let mut tampered = back.clone();
        tampered[1].masses[0] += 1e-6;
        let v = verify_series(&tampered, &Thresholds::default());
        assert!(v.iter().any(|(s, v)| *s == 1 && v.invariant == Invariant::MassConservation));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::rectangle(3, 2, 1.0, 1.0).unwrap();
        let s = state_from(&(0..18).map(|k| 1.0 + (k as f64 * 0.37).sin().abs()).collect::<Vec<_>>(), 6);
        let path = dir.path().join("snap.csv");
        write_snapshot(&path, &mesh, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("cell_id,x,y,u_0,u_1,u_2\n"));
        assert_eq!(read_snapshot(&path, 0.0).unwrap(), s);
    }

    proptest! {
        #[test]
        fn dissipation_is_nonnegative_and_matches_pairing(
            w in proptest::collection::vec(0.01f64..1.0, 30),
            wp in proptest::collection::vec(0.01f64..1.0, 30),
        ) {
            let mesh = Mesh::interval(10, 1.0).unwrap();
            let p = params();
            let next = state_from(&w, 10);
            let prev = state_from(&wp, 10);
            let d = dissipation(&mesh, &p, &next, &prev).unwrap();
            prop_assert!(d >= 0.0);
            // D = Σ_σ Σ_i J_{i,Kσ} (μ_{i,K} - μ_{i,L}) for the owner orientation
            let j = fluxes(&mesh, &p, &next, &prev).unwrap();
            let mu = chemical_potentials(&mesh, &p, &next, &prev).unwrap();
            let mut pairing = 0.0;
            for (e, edge) in mesh.interior_edges().iter().enumerate() {
                let (k, l) = edge.cells;
                for i in 0..3 {
                    pairing += j.get(e, i) * (mu[i][l] - mu[i][k]);
                }
            }
            prop_assert!((d + pairing).abs() <= 1e-9 * d.max(1e-300), "D = {d}, pairing = {pairing}");
        }
    }
}
