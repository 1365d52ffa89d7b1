//! Experiment configuration (TOML), presets and initial data.
//!
//! A configuration file looks like
//!
//! ```toml
//! name = "stable-1d"
//! t_end = 10.0
//! snapshots = [0.0, 1.0, 10.0]
//! reference = "constant"
//! c_p = 1.0
//! c_sob = 1.0
//!
//! [mesh]
//! kind = "interval"
//! cells = 100
//! length = 1.0
//!
//! [model]
//! epsilon = 4.0
//! beta = 1.0
//! coeffs = [[0.0, 0.2, 1.0], [0.2, 0.0, 0.1], [1.0, 0.1, 0.0]]
//!
//! [initial]
//! kind = "cosine"
//! kappa = 1.0
//! frequency = 1
//!
//! [solver]
//! dt_max = 0.001
//! ```
//!
//! Other mesh kinds: `rectangle` (`nx`, `ny`, `lx`, `ly`). Other initial
//! kinds: `random` (`base`, `kappa`, `seed`), `constant` (`fractions`),
//! `file` (`path`, a snapshot CSV). Omitted `[solver]` keys take their
//! defaults; `reference` is `constant` or `final`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::read_snapshot;
use crate::error::{Error, Result};
use crate::mesh::{CellField, Mesh, Point};
use crate::model::{stability_report, ModelParams, StabilityReport};
use crate::scheme::{project_initial, SolverConfig};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    Interval { cells: usize, length: f64 },
    Rectangle { nx: usize, ny: usize, lx: f64, ly: f64 },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            MeshSpec::Interval { cells, length } => Mesh::interval(cells, length),
            MeshSpec::Rectangle { nx, ny, lx, ly } => Mesh::rectangle(nx, ny, lx, ly),
        }
    }

    /// Extent in the first coordinate direction.
    fn length_x(&self) -> f64 {
        match *self {
            MeshSpec::Interval { length, .. } => length,
            MeshSpec::Rectangle { lx, .. } => lx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub epsilon: f64,
    pub beta: f64,
    /// Symmetric matrix `K_ij`; the diagonal is ignored.
    pub coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `u_0 = u_1 = (1 + κ cos(kπx/L))/4`; the remaining species share the rest equally.
    Cosine { kappa: f64, frequency: u32 },
    /// `u_i = base_i + 2κ(η - 1/2)` per cell for every species but the last,
    /// which takes the complement. Draws run over all cells of species 0,
    /// then all cells of species 1, and so on (ChaCha8, `seed_from_u64`).
    Random { base: Vec<f64>, kappa: f64, seed: u64 },
    Constant { fractions: Vec<f64> },
    /// Snapshot CSV as written by `run`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceChoice {
    /// Constant steady state with the initial masses.
    #[default]
    Constant,
    /// Final state of the run.
    Final,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub reference: ReferenceChoice,
    #[serde(default = "one")]
    pub c_p: f64,
    #[serde(default = "one")]
    pub c_sob: f64,
    /// Window `[t_a, t_b]` for fitting exponential decay of the relative energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshSpec,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Cross-diffusion coefficients shared by all presets.
fn paper_coeffs() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.2, 1.0], vec![0.2, 0.0, 0.1], vec![1.0, 0.1, 0.0]]
}

pub const PRESETS: [&str; 6] = [
    "stable-1d",
    "weak-1d",
    "nonconvex-1d-k1",
    "nonconvex-1d-k2",
    "spinodal-2d",
    "spinodal-2d-small",
];

fn cosine_1d(name: &str, epsilon: f64, beta: f64, frequency: u32, t_end: f64, reference: ReferenceChoice) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        t_end,
        snapshots: vec![0.0, 0.1, 1.0, t_end],
        reference,
        c_p: 1.0,
        c_sob: 1.0,
        fit_window: Some(match reference {
            ReferenceChoice::Constant => [1.0, 5.0],
            ReferenceChoice::Final => [0.5 * t_end, 0.9 * t_end],
        }),
        output_dir: None,
        mesh: MeshSpec::Interval {
            cells: 100,
            length: 1.0,
        },
        model: ModelSpec {
            epsilon,
            beta,
            coeffs: paper_coeffs(),
        },
        initial: InitialSpec::Cosine { kappa: 1.0, frequency },
        solver: SolverConfig::with_dt_max(1e-3),
    }
}

fn spinodal(name: &str, cells: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        t_end: 1.5,
        snapshots: vec![0.0, 0.06, 0.13, 0.49, 1.5],
        reference: ReferenceChoice::Final,
        c_p: 1.0,
        c_sob: 1.0,
        fit_window: None,
        output_dir: None,
        mesh: MeshSpec::Rectangle {
            nx: cells,
            ny: cells,
            lx: 1.0,
            ly: 1.0,
        },
        model: ModelSpec {
            epsilon: 1e-3,
            beta: 5.0,
            coeffs: paper_coeffs(),
        },
        initial: InitialSpec::Random {
            base: vec![0.5, 0.4, 0.1],
            kappa: 1e-2,
            seed: 1,
        },
        solver: SolverConfig::with_dt_max(5e-3),
    }
}

/// Named experiment setups.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    use ReferenceChoice::{Constant, Final};
    match name {
        "stable-1d" => Ok(cosine_1d(name, 4.0, 1.0, 1, 10.0, Constant)),
        "weak-1d" => Ok(cosine_1d(name, 0.5, 2.0, 1, 10.0, Constant)),
        "nonconvex-1d-k1" => Ok(cosine_1d(name, 0.1, 10.0, 1, 8.0, Final)),
        "nonconvex-1d-k2" => Ok(cosine_1d(name, 0.1, 10.0, 2, 2.0, Final)),
        "spinodal-2d" => Ok(spinodal(name, 150)),
        "spinodal-2d-small" => Ok(spinodal(name, 64)),
        _ => Err(Error::Config(format!(
            "unknown preset `{name}` (known: {})",
            PRESETS.join(", ")
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn n_species(&self) -> usize {
        self.model.coeffs.len()
    }

    /// Replaces the seed of a random initial condition; other kinds are unaffected.
    pub fn set_seed(&mut self, new_seed: u64) {
        if let InitialSpec::Random { seed, .. } = &mut self.initial {
            *seed = new_seed;
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.initial {
            InitialSpec::Random { seed, .. } => Some(seed),
            _ => None,
        }
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        self.mesh.build()
    }

    /// Parameters without masses.
    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.epsilon, self.model.beta, self.model.coeffs.clone())
    }

    /// Mesh, initial state, and parameters carrying the masses of that state.
    pub fn setup(&self) -> Result<(Mesh, State, ModelParams)> {
        self.solver.validate()?;
        let mesh = self.build_mesh()?;
        let initial = build_initial(self, &mesh)?;
        let params = self.model_params()?.with_masses(initial.masses(&mesh))?;
        Ok((mesh, initial, params))
    }

    pub fn stability(&self) -> Result<StabilityReport> {
        let (mesh, _, params) = self.setup()?;
        stability_report(&params, mesh.domain_measure(), self.c_p, self.c_sob)
    }
}

fn complete_with_last(mut fields: Vec<Vec<f64>>, n_cells: usize) -> Result<State> {
    let last: Vec<f64> = (0..n_cells)
        .map(|k| 1.0 - fields.iter().map(|f| f[k]).sum::<f64>())
        .collect();
    fields.push(last);
    check_unit_range(&fields)?;
    State::new(fields.into_iter().map(CellField).collect(), 0.0)
}

fn check_unit_range(fields: &[Vec<f64>]) -> Result<()> {
    for f in fields {
        if let Some((k, &v)) = f.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange {
                cell: k,
                value: v,
                range: "[0, 1]",
            });
        }
    }
    Ok(())
}

/// Initial cell values for `config` on `mesh`, at time 0.
pub fn build_initial(config: &ExperimentConfig, mesh: &Mesh) -> Result<State> {
    let ns = config.n_species();
    let n = mesh.n_cells();
    match &config.initial {
        InitialSpec::Cosine { kappa, frequency } => {
            if ns < 3 {
                return Err(Error::Config("cosine initial data needs at least 3 species".into()));
            }
            let (kappa, k) = (*kappa, *frequency as f64);
            let lx = config.mesh.length_x();
            let u = move |p: Point| 0.25 * (1.0 + kappa * (k * PI * p[0] / lx).cos());
            let rest = move |p: Point| (1.0 - 2.0 * u(p)) / (ns - 2) as f64;
            let mut profiles: Vec<&dyn Fn(Point) -> f64> = vec![&u, &u];
            for _ in 2..ns - 1 {
                profiles.push(&rest);
            }
            let projected = project_initial(&profiles, mesh)?;
            let fields = projected.fields.into_iter().map(CellField::into_inner).collect();
            complete_with_last(fields, n)
        }
        InitialSpec::Random { base, kappa, seed } => {
            if base.len() != ns {
                return Err(Error::Config(format!("{} base fractions for {ns} species", base.len())));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let fields: Vec<Vec<f64>> = base[..ns - 1]
                .iter()
                .map(|&b| (0..n).map(|_| b + 2.0 * kappa * (rng.random::<f64>() - 0.5)).collect())
                .collect();
            complete_with_last(fields, n)
        }
        InitialSpec::Constant { fractions } => {
            if fractions.len() != ns {
                return Err(Error::Config(format!("{} fractions for {ns} species", fractions.len())));
            }
            let fields = fractions[..ns - 1].iter().map(|&u| vec![u; n]).collect();
            complete_with_last(fields, n)
        }
        InitialSpec::File { path } => {
            let s = read_snapshot(path, 0.0)?;
            if s.n_species() != ns || s.n_cells() != n {
                return Err(Error::Shape(format!(
                    "{} holds {} species on {} cells",
                    path.display(),
                    s.n_species(),
                    s.n_cells()
                )));
            }
            let fields: Vec<Vec<f64>> = s.fields.into_iter().map(CellField::into_inner).collect();
            check_unit_range(&fields)?;
            State::new(fields.into_iter().map(CellField).collect(), 0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c, "{name}:\n{text}");
        }
    }

    #[test]
    fn stable_preset() {
        let c = preset("stable-1d").unwrap();
        let (mesh, s, p) = c.setup().unwrap();
        assert_eq!((p.epsilon, p.beta, p.n_species()), (4.0, 1.0, 3));
        assert_eq!(mesh.n_cells(), 100);
        for (m, e) in p.masses.iter().zip([0.25, 0.25, 0.5]) {
            assert!((m - e).abs() < 1e-12, "{m}");
        }
        assert!(s.volume_filling_defect() < 1e-15);
        assert!(s.min_value() > 0.0);
    }

    #[test]
    fn spinodal_preset() {
        let c = preset("spinodal-2d").unwrap();
        assert_eq!(c.build_mesh().unwrap().n_cells(), 22500);
        assert_eq!(c.solver.dt_max, 5e-3);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn cosine_without_amplitude_is_constant() {
        let mut c = preset("stable-1d").unwrap();
        c.initial = InitialSpec::Cosine { kappa: 0.0, frequency: 1 };
        let (_, s, _) = c.setup().unwrap();
        assert_eq!(s, State::constant(100, &[0.25, 0.25, 0.5], 0.0));
    }

    #[test]
    fn cosine_profile_at_left_end() {
        let c = preset("stable-1d").unwrap();
        let mesh = Mesh::interval(1000, 1.0).unwrap();
        let s = build_initial(&c, &mesh).unwrap();
        // first cell centre is 5e-4, so the values are close to (0.5, 0.5, 0)
        assert!((s.value(0, 0) - 0.5).abs() < 1e-6);
        assert!(s.value(2, 0) > 0.0 && s.value(2, 0) < 1e-6);
    }

    #[test]
    fn random_initial_is_deterministic() {
        let c = preset("spinodal-2d-small").unwrap();
        let mesh = c.build_mesh().unwrap();
        let a = build_initial(&c, &mesh).unwrap();
        let b = build_initial(&c, &mesh).unwrap();
        assert_eq!(a, b);
        let osc = a.fields[0].max() - a.fields[0].min();
        assert!(osc > 0.0 && osc <= 4.0 * 1e-2);
        assert!(a.volume_filling_defect() < 1e-15);
        let mut other = c.clone();
        other.set_seed(2);
        assert_ne!(build_initial(&other, &mesh).unwrap(), a);
    }

    #[test]
    fn random_stream_order() {
        let c = ExperimentConfig {
            mesh: MeshSpec::Interval { cells: 3, length: 1.0 },
            initial: InitialSpec::Random {
                base: vec![0.5, 0.4, 0.1],
                kappa: 0.01,
                seed: 7,
            },
            ..preset("stable-1d").unwrap()
        };
        let s = build_initial(&c, &c.build_mesh().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        for k in 0..3 {
            assert_eq!(s.value(0, k), 0.5 + 0.02 * (draws[k] - 0.5));
            assert_eq!(s.value(1, k), 0.4 + 0.02 * (draws[3 + k] - 0.5));
        }
    }

    #[test]
    fn out_of_range_initial_data() {
        let mut c = preset("stable-1d").unwrap();
        c.initial = InitialSpec::Constant {
            fractions: vec![0.7, 0.7, -0.4],
        };
        assert!(matches!(c.setup(), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn report_for_nonconvex_preset() {
        let r = preset("nonconvex-1d-k1").unwrap().stability().unwrap();
        assert!((r.convexity_margin + 7.95).abs() < 1e-9, "{}", r.convexity_margin);
        assert!(!r.globally_stable);
        assert_eq!(r.lambda, None);
    }

    #[test]
    fn parse_minimal_config() {
        let text = r#"
            name = "tiny"
            t_end = 0.01
            [mesh]
            kind = "interval"
            cells = 4
            length = 1.0
            [model]
            epsilon = 1.0
            beta = 1.0
            coeffs = [[0.0, 1.0], [1.0, 0.0]]
            [initial]
            kind = "constant"
            fractions = [0.3, 0.7]
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.reference, ReferenceChoice::Constant);
        assert_eq!(c.c_sob, 1.0);
        let (_, s, p) = c.setup().unwrap();
        assert_eq!(p.n_species(), 2);
        assert!((s.value(1, 2) - 0.7).abs() < 1e-15);
        assert!(ExperimentConfig::from_toml(&text.replace("t_end", "t_stop")).is_err());
    }
}
