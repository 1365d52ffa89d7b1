//! Model parameters and the algebra derived from the free energy
//!
//! `E(u) = ∫ Σ_i (u_i ln u_i - u_i + 1) + ε/2 |∇u_0|² + β u_0 (1 - u_0)`
//!
//! discretised on a two-point mesh, together with the degenerate mobility,
//! the logarithmic mean used for edge fractions, chemical potentials with the
//! convex-concave split of `w_0`, the constant steady state and the
//! convexity / global-stability conditions.

use std::fmt;

use crate::error::{Error, Result};
use crate::mesh::{CellField, Mesh};
use crate::state::State;

/// Below this relative gap the logarithmic mean is evaluated by its Taylor
/// expansion around the arithmetic mean.
const LOG_MEAN_SERIES_GAP: f64 = 1e-8;
/// Below this relative gap the partial derivative uses its Taylor expansion.
const LOG_MEAN_PARTIAL_SERIES_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Gradient-energy coefficient ε.
    pub epsilon: f64,
    /// Demixing coefficient β.
    pub beta: f64,
    /// Symmetric cross-diffusion coefficients `K_ij`; the diagonal is ignored.
    pub coeffs: Vec<Vec<f64>>,
    /// Target masses `m_i` (may be empty until bound to an initial state).
    pub masses: Vec<f64>,
}

impl ModelParams {
    pub fn new(epsilon: f64, beta: f64, coeffs: Vec<Vec<f64>>) -> Result<ModelParams> {
        let ns = coeffs.len();
        if ns < 2 {
            return Err(Error::InvalidParams("at least two species are required".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta = {beta}")));
        }
        for (i, row) in coeffs.iter().enumerate() {
            if row.len() != ns {
                return Err(Error::InvalidParams(format!("coefficient row {i} has length {}", row.len())));
            }
            for j in 0..ns {
                if i == j {
                    continue;
                }
                if !(row[j] > 0.0) || !row[j].is_finite() {
                    return Err(Error::InvalidParams(format!("K[{i}][{j}] = {} must be positive", row[j])));
                }
                if row[j] != coeffs[j][i] {
                    return Err(Error::InvalidParams(format!(
                        "K[{i}][{j}] = {} differs from K[{j}][{i}] = {}",
                        row[j], coeffs[j][i]
                    )));
                }
            }
        }
        Ok(ModelParams {
            epsilon,
            beta,
            coeffs,
            masses: Vec::new(),
        })
    }

    /// Three-species coefficients `K_01`, `K_02`, `K_12`.
    pub fn three_species(epsilon: f64, beta: f64, k01: f64, k02: f64, k12: f64) -> Result<ModelParams> {
        ModelParams::new(
            epsilon,
            beta,
            vec![vec![0.0, k01, k02], vec![k01, 0.0, k12], vec![k02, k12, 0.0]],
        )
    }

    pub fn with_masses(mut self, masses: Vec<f64>) -> Result<ModelParams> {
        if masses.len() != self.n_species() {
            return Err(Error::InvalidParams(format!(
                "{} masses for {} species",
                masses.len(),
                self.n_species()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::InvalidParams(format!("mass {m} must be positive")));
        }
        self.masses = masses;
        Ok(self)
    }

    pub fn n_species(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i][j]
    }

    /// `min_{i≠j} K_ij`.
    pub fn k_min(&self) -> f64 {
        let ns = self.n_species();
        (0..ns)
            .flat_map(|i| (0..ns).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.coeffs[i][j])
            .fold(f64::INFINITY, f64::min)
    }

    /// Degenerate mobility `M_ij = -K_ij u_i u_j`, `M_ii = Σ_{k≠i} K_ik u_i u_k`.
    pub fn mobility(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let ns = self.n_species();
        let mut m = vec![vec![0.0; ns]; ns];
        for i in 0..ns {
            for j in 0..ns {
                if i != j {
                    let (lo, hi) = (i.min(j), i.max(j));
                    let v = self.coeffs[lo][hi] * u[lo] * u[hi];
                    m[i][j] = -v;
                    m[i][i] += v;
                }
            }
        }
        m
    }
}

/// Logarithmic mean with the degenerate extension: 0 as soon as one argument
/// is non-positive. Propagates NaN.
#[inline]
pub fn log_mean(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    if a.min(b) <= 0.0 {
        return 0.0;
    }
    if a == b {
        return a;
    }
    // fixed argument order makes the result exactly symmetric
    let (a, b) = if a > b { (a, b) } else { (b, a) };
    let gap = a - b;
    let hi = a.max(b);
    if gap.abs() <= LOG_MEAN_SERIES_GAP * hi {
        let mid = 0.5 * (a + b);
        let r = gap / mid;
        return mid * (1.0 - r * r / 12.0);
    }
    gap / log_ratio(a, b)
}

/// NaN-rejecting variant of [`log_mean`].
pub fn checked_log_mean(a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::NaN);
    }
    Ok(log_mean(a, b))
}

/// `ln a - ln b`, accurate when `a ≈ b`.
#[inline]
fn log_ratio(a: f64, b: f64) -> f64 {
    if a <= 2.0 * b && b <= 2.0 * a {
        ((a - b) / b).ln_1p()
    } else {
        a.ln() - b.ln()
    }
}

/// `∂ log_mean(a, b) / ∂a`; 1/2 on the diagonal and 0 where the mean is
/// identically zero.
#[inline]
pub fn log_mean_partial(a: f64, b: f64) -> f64 {
    if !(a > 0.0 && b > 0.0) {
        return 0.0;
    }
    let h = (a - b) / b;
    if h.abs() < LOG_MEAN_PARTIAL_SERIES_GAP {
        // d/dt [(t-1)/ln t] at t = 1 + h
        return 0.5 + h * (-1.0 / 6.0 + h * (1.0 / 8.0 + h * (-19.0 / 180.0 + h * (3.0 / 32.0))));
    }
    let l = log_ratio(a, b);
    (l - (a - b) / a) / (l * l)
}

/// `x ln x - x + 1` with the continuous extension at 0.
#[inline]
fn boltzmann(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x * x.ln() - x + 1.0
    }
}

/// Convex / concave split of the discrete free energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// Boltzmann entropy plus gradient term.
    pub e_conv: f64,
    /// `β Σ m_K U_0 (1 - U_0)`.
    pub e_conc: f64,
    pub e_total: f64,
}

impl EnergyBreakdown {
    pub fn zero() -> Self {
        EnergyBreakdown {
            e_conv: 0.0,
            e_conc: 0.0,
            e_total: 0.0,
        }
    }
}

fn check_nonnegative(state: &State) -> Result<()> {
    for (i, f) in state.fields.iter().enumerate() {
        if let Some((k, &v)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeFraction {
                species: i,
                cell: k,
                value: v,
            });
        }
    }
    Ok(())
}

fn check_positive(state: &State) -> Result<()> {
    for (i, f) in state.fields.iter().enumerate() {
        if let Some((k, &v)) = f.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveFraction {
                species: i,
                cell: k,
                value: v,
            });
        }
    }
    Ok(())
}

/// Gradient part `ε/2 Σ_σ τ_σ |D_σ V|²` of the energy.
pub fn gradient_energy(mesh: &Mesh, params: &ModelParams, u0: &[f64]) -> f64 {
    let sum: f64 = mesh
        .interior_edges()
        .iter()
        .map(|e| e.transmissibility * (u0[e.cells.1] - u0[e.cells.0]).powi(2))
        .sum();
    0.5 * params.epsilon * sum
}

/// Discrete free energy. Fails on negative fractions.
pub fn discrete_energy(mesh: &Mesh, params: &ModelParams, state: &State) -> Result<EnergyBreakdown> {
    state.check_compatible(mesh, params.n_species())?;
    check_nonnegative(state)?;
    let mut entropy = 0.0;
    let mut conc = 0.0;
    let u0 = state.species(0);
    for (k, cell) in mesh.cells().iter().enumerate() {
        let local: f64 = state.fields.iter().map(|f| boltzmann(f[k])).sum();
        entropy += cell.measure * local;
        conc += cell.measure * u0[k] * (1.0 - u0[k]);
    }
    let e_conv = entropy + gradient_energy(mesh, params, u0);
    let e_conc = params.beta * conc;
    Ok(EnergyBreakdown {
        e_conv,
        e_conc,
        e_total: e_conv + e_conc,
    })
}

/// `E_T(U) - E_T(U_ref)`.
pub fn relative_energy(mesh: &Mesh, params: &ModelParams, state: &State, reference: &State) -> Result<f64> {
    Ok(discrete_energy(mesh, params, state)?.e_total - discrete_energy(mesh, params, reference)?.e_total)
}

/// `u ln(u/v) - u + v` for `u ≥ 0`, `v > 0`, written as `v g(h)` with
/// `h = u/v - 1`, `g(h) = (1 + h) ln(1 + h) - h`, to keep relative accuracy
/// when `u ≈ v`.
fn relative_entropy(u: f64, v: f64) -> f64 {
    if u == 0.0 {
        return v;
    }
    let h = (u - v) / v;
    if h.abs() < 1e-3 {
        v * h * h * (0.5 - h * (1.0 / 6.0 - h * (1.0 / 12.0 - h / 20.0)))
    } else {
        u * h.ln_1p() - (u - v)
    }
}

/// Discrete Bregman divergence `E(U) - E(V) - DE(V)·(U - V)`:
///
/// `Σ m_K Σ_i (U ln(U/V) - U + V) + ε/2 Σ τ |D(U_0 - V_0)|² - β Σ m_K (U_0 - V_0)²`.
///
/// `V` must be strictly positive.
pub fn bregman_divergence(mesh: &Mesh, params: &ModelParams, state: &State, reference: &State) -> Result<f64> {
    state.check_compatible(mesh, params.n_species())?;
    reference.check_compatible(mesh, params.n_species())?;
    check_nonnegative(state)?;
    check_positive(reference)?;
    let mut entropy = 0.0;
    let mut quad = 0.0;
    for (k, cell) in mesh.cells().iter().enumerate() {
        let mut local = 0.0;
        for (u, v) in state.fields.iter().zip(&reference.fields) {
            let (u, v) = (u[k], v[k]);
            local += relative_entropy(u, v);
        }
        entropy += cell.measure * local;
        let d = state.value(0, k) - reference.value(0, k);
        quad += cell.measure * d * d;
    }
    let diff: Vec<f64> = state
        .species(0)
        .iter()
        .zip(reference.species(0))
        .map(|(u, v)| u - v)
        .collect();
    Ok(entropy + gradient_energy(mesh, params, &diff) - params.beta * quad)
}

/// `W_0^{p+1/2} = -ε Δ_T U_0^{p+1} + β (1 - 2 U_0^p)`: implicit Laplacian,
/// explicit concave part.
pub fn w0_half(mesh: &Mesh, params: &ModelParams, u0_next: &[f64], u0_prev: &[f64]) -> CellField {
    let mut w = mesh.laplacian(u0_next);
    for (wk, up) in w.iter_mut().zip(u0_prev) {
        *wk = -params.epsilon * *wk + params.beta * (1.0 - 2.0 * up);
    }
    w
}

/// Discrete chemical potentials `μ_i = ln U_i` (i ≥ 1), `μ_0 = ln U_0 + W_0^{p+1/2}`.
pub fn chemical_potentials(
    mesh: &Mesh,
    params: &ModelParams,
    next: &State,
    prev: &State,
) -> Result<Vec<CellField>> {
    next.check_compatible(mesh, params.n_species())?;
    prev.check_compatible(mesh, params.n_species())?;
    check_positive(next)?;
    let w0 = w0_half(mesh, params, next.species(0), prev.species(0));
    let mut mu: Vec<CellField> = next
        .fields
        .iter()
        .map(|f| CellField(f.iter().map(|v| v.ln()).collect()))
        .collect();
    for (m, w) in mu[0].iter_mut().zip(w0.iter()) {
        *m += w;
    }
    Ok(mu)
}

/// Constant state `u_i = m_i / |Ω|` carrying the masses of `params`.
pub fn constant_steady_state(mesh: &Mesh, params: &ModelParams) -> Result<State> {
    let masses = &params.masses;
    if masses.len() != params.n_species() {
        return Err(Error::InvalidParams("masses are not set".into()));
    }
    if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::InvalidParams(format!("mass {m} must be positive")));
    }
    let omega = mesh.domain_measure();
    let total: f64 = masses.iter().sum();
    if (total - omega).abs() > 1e-10 * omega {
        return Err(Error::InvalidParams(format!(
            "masses sum to {total}, domain measure is {omega}"
        )));
    }
    let fractions: Vec<f64> = masses.iter().map(|m| m / omega).collect();
    Ok(State::constant(mesh.n_cells(), &fractions, 0.0))
}

/// Convexity margins, global stability and the exponential decay rate
/// towards the constant steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// `1/(2 m_0) + (ε/(2 C_p) - β)/|Ω|`.
    pub convexity_margin: f64,
    /// Two-species variant `|Ω|/(2 m_0 (|Ω| - m_0)) + (ε/(2 C_p) - β)/|Ω|`.
    pub convexity_margin_binary: f64,
    /// `ε/(2 C_p) - β > 0`.
    pub globally_stable: bool,
    /// `4 k min(1/C_sob, 1/C_p - 2β/ε)`; only defined in the globally stable regime.
    pub lambda: Option<f64>,
    pub k_min: f64,
    pub c_p: f64,
    pub c_sob: f64,
}

pub fn stability_report(params: &ModelParams, domain_measure: f64, c_p: f64, c_sob: f64) -> Result<StabilityReport> {
    if !(c_p > 0.0 && c_sob > 0.0) {
        return Err(Error::InvalidParams(format!("C_p = {c_p}, C_sob = {c_sob} must be positive")));
    }
    let Some(&m0) = params.masses.first() else {
        return Err(Error::InvalidParams("masses are not set".into()));
    };
    let (eps, beta) = (params.epsilon, params.beta);
    let slack = eps / (2.0 * c_p) - beta;
    let convexity_margin = 1.0 / (2.0 * m0) + slack / domain_measure;
    let convexity_margin_binary =
        domain_measure / (2.0 * m0 * (domain_measure - m0)) + slack / domain_measure;
    let globally_stable = slack > 0.0;
    let k_min = params.k_min();
    let lambda = globally_stable.then(|| 4.0 * k_min * (1.0 / c_sob).min(1.0 / c_p - 2.0 * beta / eps));
    Ok(StabilityReport {
        convexity_margin,
        convexity_margin_binary,
        globally_stable,
        lambda,
        k_min,
        c_p,
        c_sob,
    })
}

impl StabilityReport {
    pub fn is_convex(&self) -> bool {
        self.convexity_margin >= 0.0
    }
}

/// Flat `name = value` block.
impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "convexity_margin = {}", self.convexity_margin)?;
        writeln!(f, "convexity_margin_binary = {}", self.convexity_margin_binary)?;
        writeln!(f, "convex = {}", self.is_convex())?;
        writeln!(f, "globally_stable = {}", self.globally_stable)?;
        match self.lambda {
            Some(l) => writeln!(f, "lambda = {l}")?,
            None => writeln!(f, "lambda = undefined")?,
        }
        writeln!(f, "k_min = {}", self.k_min)?;
        writeln!(f, "c_p = {}", self.c_p)?;
        write!(f, "c_sob = {}", self.c_sob)
    }
}
