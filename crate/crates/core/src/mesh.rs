//! Admissible two-point meshes and their discrete calculus.
//!
//! A mesh is a set of cells with centers, interior faces `K|L` and boundary
//! faces. Every interior face is orthogonal to the segment joining the two
//! adjacent centers, so the normal derivative across it is approximated by
//! `(V_L - V_K) / d_σ` and the face flux coefficient is the transmissibility
//! `τ_σ = m_σ / d_σ`.
//!
//! Only uniform intervals and Cartesian grids are generated here; any other
//! admissible mesh can be supplied through [`Mesh::from_parts`], which checks
//! the orthogonality condition.

use std::io::Write;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use crate::error::{Error, Result};

/// Cell centers and face normals are stored in two components; 1D meshes
/// leave the second one at zero.
pub type Point = [f64; 2];

const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// d-dimensional measure `m_K`.
    pub measure: f64,
    pub center: Point,
}

/// Interior face `K|L`, stored with an orientation: `cells.0` owns the face.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub cells: (usize, usize),
    /// (d-1)-dimensional measure `m_σ`.
    pub measure: f64,
    /// `|x_K - x_L|`.
    pub distance: f64,
    pub transmissibility: f64,
}

/// Face on the domain boundary. Carries geometry only: no flux crosses it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub cell: usize,
    pub measure: f64,
    /// `|x_K - x_σ|`.
    pub distance: f64,
    pub transmissibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeId {
    Interior(usize),
    Boundary(usize),
}

/// Raw description of an interior face for [`Mesh::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSpec {
    pub cells: (usize, usize),
    pub measure: f64,
    /// Unit (or any nonzero) normal of the face.
    pub normal: Point,
}

/// Raw description of a boundary face for [`Mesh::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFaceSpec {
    pub cell: usize,
    pub measure: f64,
    /// Point `x_σ` on the face used to define `d_σ`.
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    cells: Vec<Cell>,
    interior: Vec<InteriorEdge>,
    boundary: Vec<BoundaryEdge>,
    adjacency: Vec<Vec<EdgeId>>,
    /// Per cell: (interior edge index, neighbouring cell).
    neighbors: Vec<Vec<(usize, usize)>>,
    domain_measure: f64,
    shape: Vec<usize>,
}

fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    /// Uniform mesh of `(0, length)` with `n_cells` cells.
    pub fn interval(n_cells: usize, length: f64) -> Result<Mesh> {
        if n_cells == 0 {
            return Err(Error::InvalidMesh("interval mesh needs at least one cell".into()));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidMesh(format!("non-positive length {length}")));
        }
        let h = length / n_cells as f64;
        let cells = (0..n_cells)
            .map(|k| Cell {
                measure: h,
                center: [(k as f64 + 0.5) * h, 0.0],
            })
            .collect();
        let interior = (0..n_cells - 1)
            .map(|k| InteriorEdge {
                cells: (k, k + 1),
                measure: 1.0,
                distance: h,
                transmissibility: 1.0 / h,
            })
            .collect();
        let half = 0.5 * h;
        let boundary = vec![
            BoundaryEdge {
                cell: 0,
                measure: 1.0,
                distance: half,
                transmissibility: 1.0 / half,
            },
            BoundaryEdge {
                cell: n_cells - 1,
                measure: 1.0,
                distance: half,
                transmissibility: 1.0 / half,
            },
        ];
        Ok(Mesh::assemble(1, cells, interior, boundary, length, vec![n_cells]))
    }

    /// Uniform Cartesian mesh of `(0, lx) x (0, ly)`; cell `(i, j)` has index `j * nx + i`.
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!("zero cell count ({nx} x {ny})")));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidMesh(format!("non-positive lengths ({lx}, {ly})")));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let idx = |i: usize, j: usize| j * nx + i;
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                cells.push(Cell {
                    measure: hx * hy,
                    center: [(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy],
                });
            }
        }
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let bnd = |cell, measure: f64, distance: f64| BoundaryEdge {
            cell,
            measure,
            distance,
            transmissibility: measure / distance,
        };
        for j in 0..ny {
            for i in 0..nx {
                let k = idx(i, j);
                if i + 1 < nx {
                    interior.push(InteriorEdge {
                        cells: (k, idx(i + 1, j)),
                        measure: hy,
                        distance: hx,
                        transmissibility: hy / hx,
                    });
                }
                if j + 1 < ny {
                    interior.push(InteriorEdge {
                        cells: (k, idx(i, j + 1)),
                        measure: hx,
                        distance: hy,
                        transmissibility: hx / hy,
                    });
                }
                if i == 0 {
                    boundary.push(bnd(k, hy, 0.5 * hx));
                }
                if i + 1 == nx {
                    boundary.push(bnd(k, hy, 0.5 * hx));
                }
                if j == 0 {
                    boundary.push(bnd(k, hx, 0.5 * hy));
                }
                if j + 1 == ny {
                    boundary.push(bnd(k, hx, 0.5 * hy));
                }
            }
        }
        Ok(Mesh::assemble(2, cells, interior, boundary, lx * ly, vec![nx, ny]))
    }

    /// Builds a mesh from externally supplied geometry, checking admissibility:
    /// positive measures, valid cell references and `x_L - x_K` parallel to the
    /// face normal (relative tolerance 1e-10).
    pub fn from_parts(
        dim: usize,
        cells: Vec<Cell>,
        faces: Vec<FaceSpec>,
        boundary_faces: Vec<BoundaryFaceSpec>,
    ) -> Result<Mesh> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMesh(format!("unsupported dimension {dim}")));
        }
        if cells.is_empty() {
            return Err(Error::InvalidMesh("no cells".into()));
        }
        if let Some((k, c)) = cells.iter().enumerate().find(|(_, c)| !(c.measure > 0.0)) {
            return Err(Error::InvalidMesh(format!("cell {k} has measure {}", c.measure)));
        }
        let n = cells.len();
        let mut interior = Vec::with_capacity(faces.len());
        for (e, f) in faces.iter().enumerate() {
            let (k, l) = f.cells;
            if k >= n || l >= n || k == l {
                return Err(Error::InvalidMesh(format!("face {e} references cells {k}, {l}")));
            }
            if !(f.measure > 0.0) {
                return Err(Error::InvalidMesh(format!("face {e} has measure {}", f.measure)));
            }
            let xk = cells[k].center;
            let xl = cells[l].center;
            let d = distance(xk, xl);
            if !(d > 0.0) {
                return Err(Error::InvalidMesh(format!("face {e}: coincident centers")));
            }
            let nrm = (f.normal[0].powi(2) + f.normal[1].powi(2)).sqrt();
            if !(nrm > 0.0) {
                return Err(Error::InvalidMesh(format!("face {e}: zero normal")));
            }
            let v = [xl[0] - xk[0], xl[1] - xk[1]];
            let cross = (v[0] * f.normal[1] - v[1] * f.normal[0]).abs() / (d * nrm);
            if cross > ORTHOGONALITY_TOL {
                return Err(Error::InvalidMesh(format!(
                    "face {e}: center-to-center vector not orthogonal to the face (defect {cross:e})"
                )));
            }
            interior.push(InteriorEdge {
                cells: (k, l),
                measure: f.measure,
                distance: d,
                transmissibility: f.measure / d,
            });
        }
        let mut boundary = Vec::with_capacity(boundary_faces.len());
        for (e, f) in boundary_faces.iter().enumerate() {
            if f.cell >= n {
                return Err(Error::InvalidMesh(format!("boundary face {e} references cell {}", f.cell)));
            }
            let d = distance(cells[f.cell].center, f.point);
            if !(d > 0.0) || !(f.measure > 0.0) {
                return Err(Error::InvalidMesh(format!("boundary face {e} is degenerate")));
            }
            boundary.push(BoundaryEdge {
                cell: f.cell,
                measure: f.measure,
                distance: d,
                transmissibility: f.measure / d,
            });
        }
        let total = cells.iter().map(|c| c.measure).sum();
        Ok(Mesh::assemble(dim, cells, interior, boundary, total, vec![n]))
    }

    fn assemble(
        dim: usize,
        cells: Vec<Cell>,
        interior: Vec<InteriorEdge>,
        boundary: Vec<BoundaryEdge>,
        domain_measure: f64,
        shape: Vec<usize>,
    ) -> Mesh {
        let n = cells.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut neighbors = vec![Vec::new(); n];
        for (e, edge) in interior.iter().enumerate() {
            let (k, l) = edge.cells;
            adjacency[k].push(EdgeId::Interior(e));
            adjacency[l].push(EdgeId::Interior(e));
            neighbors[k].push((e, l));
            neighbors[l].push((e, k));
        }
        for (e, edge) in boundary.iter().enumerate() {
            adjacency[edge.cell].push(EdgeId::Boundary(e));
        }
        Mesh {
            dim,
            cells,
            interior,
            boundary,
            adjacency,
            neighbors,
            domain_measure,
            shape,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell counts per direction for generated meshes (`[n]` otherwise).
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, k: usize) -> &Cell {
        &self.cells[k]
    }

    pub fn measure(&self, k: usize) -> f64 {
        self.cells[k].measure
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    /// `|Ω|`.
    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    /// All faces of cell `k` (interior first, then boundary).
    pub fn edges_of(&self, k: usize) -> &[EdgeId] {
        &self.adjacency[k]
    }

    /// `(interior edge, neighbour)` pairs of cell `k`.
    pub fn neighbors(&self, k: usize) -> &[(usize, usize)] {
        &self.neighbors[k]
    }

    /// Oriented jump `D_{Kσ}V = V_{Kσ} - V_K`; zero on boundary faces.
    pub fn jump(&self, field: &[f64], cell: usize, edge: EdgeId) -> Result<f64> {
        if field.len() != self.n_cells() {
            return Err(Error::Shape(format!(
                "field has {} values, mesh has {} cells",
                field.len(),
                self.n_cells()
            )));
        }
        if cell >= self.n_cells() {
            return Err(Error::NotIncident { cell, edge });
        }
        match edge {
            EdgeId::Interior(e) => {
                let (k, l) = self
                    .interior
                    .get(e)
                    .map(|s| s.cells)
                    .ok_or(Error::NotIncident { cell, edge })?;
                if cell == k {
                    Ok(field[l] - field[k])
                } else if cell == l {
                    Ok(field[k] - field[l])
                } else {
                    Err(Error::NotIncident { cell, edge })
                }
            }
            EdgeId::Boundary(e) => match self.boundary.get(e) {
                Some(b) if b.cell == cell => Ok(0.0),
                _ => Err(Error::NotIncident { cell, edge }),
            },
        }
    }

    /// Two-point Laplacian `(1/m_K) Σ_σ τ_σ D_{Kσ}V` with homogeneous Neumann data.
    pub fn laplacian(&self, field: &[f64]) -> CellField {
        let mut out = vec![0.0; self.n_cells()];
        for edge in &self.interior {
            let (k, l) = edge.cells;
            let flux = edge.transmissibility * (field[l] - field[k]);
            out[k] += flux;
            out[l] -= flux;
        }
        for (k, v) in out.iter_mut().enumerate() {
            *v /= self.cells[k].measure;
        }
        CellField(out)
    }

    /// `Σ_K m_K V_K`.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.cells.iter().zip(field).map(|(c, v)| c.measure * v).sum()
    }

    /// Writes `cells.csv` (cell_id, x[, y], measure) and `edges.csv`
    /// (edge_id, cell_a, cell_b, tau) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("cells.csv"))?);
        if self.dim == 1 {
            writeln!(f, "cell_id,x,measure")?;
        } else {
            writeln!(f, "cell_id,x,y,measure")?;
        }
        for (k, c) in self.cells.iter().enumerate() {
            if self.dim == 1 {
                writeln!(f, "{k},{:.16e},{:.16e}", c.center[0], c.measure)?;
            } else {
                writeln!(f, "{k},{:.16e},{:.16e},{:.16e}", c.center[0], c.center[1], c.measure)?;
            }
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("edges.csv"))?);
        writeln!(f, "edge_id,cell_a,cell_b,tau")?;
        for (e, s) in self.interior.iter().enumerate() {
            writeln!(f, "{e},{},{},{:.16e}", s.cells.0, s.cells.1, s.transmissibility)?;
        }
        Ok(())
    }
}

/// One scalar per cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellField(pub Vec<f64>);

impl CellField {
    pub fn constant(n: usize, value: f64) -> Self {
        CellField(vec![value; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for CellField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CellField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for CellField {
    fn from(v: Vec<f64>) -> Self {
        CellField(v)
    }
}
