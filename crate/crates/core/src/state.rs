//! Discrete volume fractions at one time level.

use crate::error::{Error, Result};
use crate::mesh::{CellField, Mesh};

/// Per-species, per-cell volume fractions `U_{i,K}` (species-major) at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub fields: Vec<CellField>,
    pub time: f64,
}

impl State {
    pub fn new(fields: Vec<CellField>, time: f64) -> Result<State> {
        let Some(first) = fields.first() else {
            return Err(Error::Shape("state without species".into()));
        };
        let n = first.len();
        if fields.iter().any(|f| f.len() != n) {
            return Err(Error::Shape("species fields differ in length".into()));
        }
        Ok(State { fields, time })
    }

    /// Spatially constant state with the given per-species fractions.
    pub fn constant(n_cells: usize, fractions: &[f64], time: f64) -> State {
        State {
            fields: fractions
                .iter()
                .map(|&u| CellField::constant(n_cells, u))
                .collect(),
            time,
        }
    }

    pub fn n_species(&self) -> usize {
        self.fields.len()
    }

    pub fn n_cells(&self) -> usize {
        self.fields[0].len()
    }

    pub fn species(&self, i: usize) -> &[f64] {
        &self.fields[i]
    }

    #[inline]
    pub fn value(&self, species: usize, cell: usize) -> f64 {
        self.fields[species][cell]
    }

    /// Fractions of all species in one cell.
    pub fn cell_values(&self, cell: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f[cell]).collect()
    }

    /// `Σ_K m_K U_{i,K}` for every species.
    pub fn masses(&self, mesh: &Mesh) -> Vec<f64> {
        self.fields.iter().map(|f| mesh.integrate(f)).collect()
    }

    /// `max_K |Σ_i U_{i,K} - 1|`.
    pub fn volume_filling_defect(&self) -> f64 {
        (0..self.n_cells())
            .map(|k| (self.fields.iter().map(|f| f[k]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.fields.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.fields.iter().map(|f| f.max()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Unknown vector in cell-major order: entry `K * (n+1) + i` holds `U_{i,K}`.
    pub fn to_unknowns(&self) -> Vec<f64> {
        let ns = self.n_species();
        let mut x = vec![0.0; ns * self.n_cells()];
        for (i, f) in self.fields.iter().enumerate() {
            for (k, v) in f.iter().enumerate() {
                x[k * ns + i] = *v;
            }
        }
        x
    }

    pub fn from_unknowns(x: &[f64], n_species: usize, time: f64) -> State {
        let n = x.len() / n_species;
        let fields = (0..n_species)
            .map(|i| CellField((0..n).map(|k| x[k * n_species + i]).collect()))
            .collect();
        State { fields, time }
    }

    /// `max |U - V|` over all species and cells.
    pub fn distance_inf(&self, other: &State) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_compatible(&self, mesh: &Mesh, n_species: usize) -> Result<()> {
        if self.n_species() != n_species {
            return Err(Error::Shape(format!(
                "state has {} species, parameters describe {n_species}",
                self.n_species()
            )));
        }
        if self.n_cells() != mesh.n_cells() {
            return Err(Error::Shape(format!(
                "state has {} cells, mesh has {}",
                self.n_cells(),
                mesh.n_cells()
            )));
        }
        Ok(())
    }
}
