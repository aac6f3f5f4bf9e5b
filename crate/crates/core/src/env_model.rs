//! Bath description: spectral densities, mode grids, coupling coefficients
//! and thermal states of the environment register.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::qmath::{ComplexMatrix, DensityMatrix, DEFAULT_MAX_DIM};

/// Below this value of `|τ(ω-ω0)|` the δ-approximant uses its series expansion.
const DELTA_SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `J(ω) = 2π α ω exp(-ω/ω_c)`
    Ohmic { alpha: f64, omega_c: f64 },
    /// Piecewise-linear interpolation through `(omega[i], values[i])`.
    Tabulated { omega: Vec<f64>, values: Vec<f64> },
}

impl SpectralDensity {
    pub fn ohmic(alpha: f64, omega_c: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if !(omega_c > 0.0) {
            return Err(invalid("omega_c", format!("must be positive, got {omega_c}")));
        }
        Ok(SpectralDensity::Ohmic { alpha, omega_c })
    }

    pub fn tabulated(omega: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if omega.len() != values.len() || omega.len() < 2 {
            return Err(invalid(
                "tabulated",
                "need at least two (ω, J) samples of equal length",
            ));
        }
        if omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulated", "ω samples must be strictly increasing"));
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeSpectralDensity {
                omega: omega[i],
                value: v,
            });
        }
        Ok(SpectralDensity::Tabulated { omega, values })
    }

    /// Parses two numeric columns `ω J(ω)` separated by whitespace or commas.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_tabulated(text: &str) -> Result<Self> {
        let mut omega = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    reason: format!("expected 2 columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    reason: e.to_string(),
                })
            };
            omega.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        Self::tabulated(omega, values)
    }

    pub fn load_tabulated(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tabulated(&std::fs::read_to_string(path)?)
    }

    pub fn value(&self, omega: f64) -> Result<f64> {
        match self {
            SpectralDensity::Ohmic { alpha, omega_c } => {
                if omega < 0.0 {
                    return Err(Error::OutOfDomain {
                        omega,
                        min: 0.0,
                        max: f64::INFINITY,
                    });
                }
                Ok(2.0 * PI * alpha * omega * (-omega / omega_c).exp())
            }
            SpectralDensity::Tabulated { omega: xs, values } => {
                let (min, max) = (xs[0], xs[xs.len() - 1]);
                if !(omega >= min && omega <= max) {
                    return Err(Error::OutOfDomain { omega, min, max });
                }
                let hi = xs.partition_point(|&x| x < omega).max(1);
                let lo = hi - 1;
                let f = (omega - xs[lo]) / (xs[hi] - xs[lo]);
                Ok(values[lo] + f * (values[hi] - values[lo]))
            }
        }
    }
}

/// Uniformly spaced environment mode frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    frequencies: Vec<f64>,
    spacing: f64,
}

impl ModeGrid {
    /// `ω_k = ω_min + k Δω` for `k = 0..d`.
    pub fn new(omega_min: f64, spacing: f64, d: usize) -> Result<Self> {
        if !(omega_min > 0.0) {
            return Err(invalid("omega_min", format!("must be positive, got {omega_min}")));
        }
        if !(spacing > 0.0) {
            return Err(invalid("d_omega", format!("must be positive, got {spacing}")));
        }
        if d == 0 {
            return Err(invalid("d", "need at least one mode"));
        }
        Ok(Self {
            frequencies: (0..d).map(|k| omega_min + k as f64 * spacing).collect(),
            spacing,
        })
    }

    /// Splits `[omega_min, omega_max]` into `d` bins of width
    /// `(omega_max - omega_min)/d` and places one mode at each bin centre.
    pub fn from_window(omega_min: f64, omega_max: f64, d: usize) -> Result<Self> {
        if !(omega_max > omega_min) || d == 0 {
            return Err(invalid("window", format!("invalid window [{omega_min}, {omega_max}] with d = {d}")));
        }
        let spacing = (omega_max - omega_min) / d as f64;
        Self::new(omega_min + 0.5 * spacing, spacing, d)
    }

    /// Grid over an explicit subset of modes (used by sequential channels).
    pub fn subset(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > self.len() {
            return Err(invalid("subset", format!("range {range:?} invalid for {} modes", self.len())));
        }
        Ok(Self {
            frequencies: self.frequencies[range].to_vec(),
            spacing: self.spacing,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Free-function form of [`ModeGrid::new`].
pub fn make_grid(omega_min: f64, spacing: f64, d: usize) -> Result<ModeGrid> {
    ModeGrid::new(omega_min, spacing, d)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingMethod {
    Naive,
    Improved { tau: f64 },
    ImprovedNonNegative { tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    values: Vec<f64>,
    method: CouplingMethod,
    diagnostics: Vec<String>,
}

impl CouplingSet {
    pub fn new(values: Vec<f64>, method: CouplingMethod) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(invalid("couplings", format!("coupling {v} is negative or NaN")));
        }
        Ok(Self {
            values,
            method,
            diagnostics: Vec::new(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> &CouplingMethod {
        &self.method
    }

    /// Notes produced by the solver (e.g. which modes a constrained fit switched off).
    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|c| c * factor).collect(),
            method: self.method.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            values: self.values[range].to_vec(),
            method: self.method.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

fn sample_density(j: &SpectralDensity, grid: &ModeGrid) -> Result<Vec<f64>> {
    grid.frequencies()
        .iter()
        .map(|&w| {
            let v = j.value(w)?;
            if v < 0.0 {
                Err(Error::NegativeSpectralDensity { omega: w, value: v })
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// `c_k = sqrt(J(ω_k) Δω / π)`: each bin's spectral weight on one mode.
pub fn couplings_naive(j: &SpectralDensity, grid: &ModeGrid) -> Result<CouplingSet> {
    let js = sample_density(j, grid)?;
    CouplingSet::new(
        js.iter().map(|&v| (v * grid.spacing() / PI).sqrt()).collect(),
        CouplingMethod::Naive,
    )
}

/// Finite-time δ-function approximant `(1 - cos[τ(ω-ω0)]) / (π τ (ω-ω0)²)`.
///
/// Its peak value is `τ/(2π)` and it integrates to one over the real line.
pub fn delta_approximant(omega: f64, omega0: f64, tau: f64) -> f64 {
    let x = omega - omega0;
    let phase = tau * x;
    if phase.abs() < DELTA_SERIES_THRESHOLD {
        // 1 - cos(u) = u²/2 - u⁴/24 + …
        return tau / (2.0 * PI) * (1.0 - phase * phase / 12.0);
    }
    // 1 - cos(u) = 2 sin²(u/2) avoids cancellation for small u
    let s = (0.5 * phase).sin();
    2.0 * s * s / (PI * tau * x * x)
}

/// Spectral density represented by the discrete modes: `π Σ_k c_k² δ_τ(ω - ω_k)`.
pub fn effective_spectral_density(c: &CouplingSet, grid: &ModeGrid, tau: f64, omega: f64) -> f64 {
    PI * c
        .values()
        .iter()
        .zip(grid.frequencies())
        .map(|(ck, &wk)| ck * ck * delta_approximant(omega, wk, tau))
        .sum::<f64>()
}

fn kernel_matrix(grid: &ModeGrid, tau: f64) -> DMatrix<f64> {
    let w = grid.frequencies();
    DMatrix::from_fn(w.len(), w.len(), |j, k| PI * delta_approximant(w[j], w[k], tau))
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    Ok(())
}

/// Couplings whose effective spectral density interpolates `J` at every grid
/// node: solves `Σ_k π δ_τ(ω_j - ω_k) c_k² = J(ω_j)`.
///
/// Fails with [`Error::NegativeCoupling`] if any `c_k²` comes out negative.
pub fn couplings_improved(j: &SpectralDensity, grid: &ModeGrid, tau: f64) -> Result<CouplingSet> {
    check_tau(tau)?;
    let rhs = DVector::from_vec(sample_density(j, grid)?);
    let kernel = kernel_matrix(grid, tau);
    let c2 = kernel.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if c2.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let negative: Vec<usize> = (0..c2.len()).filter(|&k| c2[k] < 0.0).collect();
    if !negative.is_empty() {
        return Err(Error::NegativeCoupling {
            values: negative.iter().map(|&k| c2[k]).collect(),
            modes: negative,
        });
    }
    CouplingSet::new(c2.iter().map(|v| v.sqrt()).collect(), CouplingMethod::Improved { tau })
}

/// Same node system as [`couplings_improved`], solved under the constraint
/// `c_k² ≥ 0` (Lawson–Hanson NNLS). Identical to the unconstrained solve
/// when that solution is nonnegative; otherwise the modes that were switched
/// off and the node residual are reported in [`CouplingSet::diagnostics`].
pub fn couplings_improved_nonneg(
    j: &SpectralDensity,
    grid: &ModeGrid,
    tau: f64,
) -> Result<CouplingSet> {
    check_tau(tau)?;
    let rhs = DVector::from_vec(sample_density(j, grid)?);
    let kernel = kernel_matrix(grid, tau);
    let c2 = nnls(&kernel, &rhs)?;
    let residual = (&kernel * &c2 - &rhs).norm();
    let zeroed: Vec<usize> = (0..c2.len()).filter(|&k| c2[k] == 0.0).collect();
    let mut set = CouplingSet::new(
        c2.iter().map(|v| v.sqrt()).collect(),
        CouplingMethod::ImprovedNonNegative { tau },
    )?;
    if !zeroed.is_empty() {
        let worst = (0..c2.len())
            .map(|n| {
                let jeff = (kernel.row(n) * &c2)[0];
                (jeff / rhs[n] - 1.0).abs()
            })
            .fold(0.0f64, f64::max);
        set.diagnostics.push(format!(
            "nonnegativity constraint active: modes {zeroed:?} decoupled; node residual {residual:.3e}, \
             worst relative node mismatch {worst:.3e}"
        ));
    }
    Ok(set)
}

/// Dispatches to the solver named by `method`.
pub fn compute_couplings(j: &SpectralDensity, grid: &ModeGrid, method: &CouplingMethod) -> Result<CouplingSet> {
    match *method {
        CouplingMethod::Naive => couplings_naive(j, grid),
        CouplingMethod::Improved { tau } => couplings_improved(j, grid, tau),
        CouplingMethod::ImprovedNonNegative { tau } => couplings_improved_nonneg(j, grid, tau),
    }
}

/// Lawson–Hanson active-set solver for `min ‖A x - b‖₂` subject to `x ≥ 0`.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    let tol = 1e-12 * a.norm() * b.norm().max(1e-300);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let z = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .map_err(|e| Error::Numerical(format!("NNLS subproblem: {e}")))?;
        let mut full = DVector::zeros(n);
        for (c, &k) in idx.iter().enumerate() {
            full[k] = z[c];
        }
        Ok(full)
    };
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&k| !passive[k] && w[k] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]));
        let Some(k) = candidate else {
            return Ok(x);
        };
        passive[k] = true;
        loop {
            let z = solve_passive(&passive)?;
            if (0..n).all(|k| !passive[k] || z[k] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..n)
                .filter(|&k| passive[k] && z[k] <= 0.0)
                .map(|k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            x = &x + (&z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= 1e-15 * x.amax().max(1e-300) {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    Err(Error::Numerical("NNLS did not converge".into()))
}

/// Thermal populations of the environment qubits at inverse temperature β.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalEnvState {
    beta: f64,
    frequencies: Vec<f64>,
    excitation: Vec<f64>,
}

/// Excited-state probability `1/(1 + e^{βω})`, evaluated without overflow.
fn excitation_probability(beta: f64, omega: f64) -> f64 {
    let x = beta * omega;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

impl ThermalEnvState {
    /// Explicit per-mode excitation probabilities (e.g. for time-dependent
    /// environment schedules). `beta` is informational only.
    pub fn from_probabilities(beta: f64, frequencies: Vec<f64>, excitation: Vec<f64>) -> Result<Self> {
        if frequencies.len() != excitation.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies vs {} probabilities",
                frequencies.len(),
                excitation.len()
            )));
        }
        if let Some(p) = excitation.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid("excitation", format!("probability {p} outside [0, 1]")));
        }
        Ok(Self {
            beta,
            frequencies,
            excitation,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `p_k` for each mode.
    pub fn excitation(&self) -> &[f64] {
        &self.excitation
    }

    pub fn len(&self) -> usize {
        self.excitation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excitation.is_empty()
    }

    /// Restriction to a subset of modes.
    pub fn subset(&self, modes: &[usize]) -> Result<Self> {
        if let Some(&bad) = modes.iter().find(|&&k| k >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.len(),
            });
        }
        Ok(Self {
            beta: self.beta,
            frequencies: modes.iter().map(|&k| self.frequencies[k]).collect(),
            excitation: modes.iter().map(|&k| self.excitation[k]).collect(),
        })
    }

    /// Probabilities of all `2^d` computational basis states, mode 0 most significant.
    pub fn basis_probabilities(&self) -> Vec<f64> {
        let mut probs = vec![1.0];
        for &p in &self.excitation {
            probs = probs.iter().flat_map(|&q| [q * (1.0 - p), q * p]).collect();
        }
        probs
    }
}

pub fn thermal_env(grid: &ModeGrid, beta: f64) -> Result<ThermalEnvState> {
    if !(beta >= 0.0) {
        return Err(invalid("beta", format!("must be nonnegative, got {beta}")));
    }
    Ok(ThermalEnvState {
        beta,
        frequencies: grid.frequencies().to_vec(),
        excitation: grid
            .frequencies()
            .iter()
            .map(|&w| excitation_probability(beta, w))
            .collect(),
    })
}

/// Diagonal `2^d`-dimensional density matrix `⊗_k [(1-p_k)|0⟩⟨0| + p_k|1⟩⟨1|]`.
pub fn thermal_density(env: &ThermalEnvState) -> Result<DensityMatrix> {
    let dim = 1usize
        .checked_shl(env.len() as u32)
        .filter(|&d| d <= DEFAULT_MAX_DIM)
        .ok_or(Error::DimensionOverflow {
            dim: 1usize.checked_shl(env.len() as u32).unwrap_or(usize::MAX),
            max: DEFAULT_MAX_DIM,
        })?;
    let probs = env.basis_probabilities();
    debug_assert_eq!(probs.len(), dim);
    let diag = DVector::from_iterator(dim, probs.into_iter().map(|p| Complex64::new(p, 0.0)));
    Ok(DensityMatrix::from_matrix_unchecked(ComplexMatrix::from_diagonal(&diag)))
}

/// One independent Bernoulli(p_k) draw per mode; `true` means `|1⟩`.
pub fn sample_thermal_bits<R: Rng + ?Sized>(env: &ThermalEnvState, rng: &mut R) -> Vec<bool> {
    env.excitation.iter().map(|&p| rng.random::<f64>() < p).collect()
}

pub fn sample_thermal_bits_seeded(env: &ThermalEnvState, seed: u64) -> Vec<bool> {
    sample_thermal_bits(env, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked_grid() -> ModeGrid {
        make_grid(0.80, 0.05, 8).unwrap()
    }

    fn worked_density() -> SpectralDensity {
        SpectralDensity::ohmic(2e-4, 100.0).unwrap()
    }

    #[test]
    fn grid_matches_explicit_mode_list() {
        let g = worked_grid();
        let want = [0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.15];
        for (a, b) in g.frequencies().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.frequencies()[7] - g.frequencies()[0] - 0.35).abs() < 1e-12);
        assert_eq!(make_grid(1.0, 0.1, 1).unwrap().frequencies(), &[1.0]);
        assert!(make_grid(0.0, 0.1, 3).is_err());
        assert!(make_grid(1.0, -0.1, 3).is_err());
        assert!(make_grid(1.0, 0.1, 0).is_err());
    }

    #[test]
    fn window_constructor_uses_bin_centres() {
        let g = ModeGrid::from_window(0.8, 1.15, 8).unwrap();
        assert!((g.spacing() - 0.04375).abs() < 1e-15);
        assert!((g.frequencies()[0] - 0.821875).abs() < 1e-12);
    }

    #[test]
    fn naive_coupling_single_mode_value() {
        let g = make_grid(1.0, 0.05, 1).unwrap();
        let c = couplings_naive(&worked_density(), &g).unwrap();
        let j1 = 2.0 * PI * 2e-4 * (-0.01f64).exp();
        assert!((j1 - 1.2441e-3).abs() < 1e-7);
        assert!((c.values()[0] - 4.450e-3).abs() < 1e-6);
        // bin weight: integrate J over the bin with Simpson's rule
        let (a, b) = (0.975, 1.025);
        let n = 200;
        let h = (b - a) / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * worked_density().value(a + i as f64 * h).unwrap()
            })
            .sum::<f64>()
            * h
            / 3.0;
        let c_int = (integral / PI).sqrt();
        assert!((c_int / c.values()[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn naive_couplings_zero_density() {
        let j = SpectralDensity::tabulated(vec![0.0, 2.0], vec![0.0, 0.0]).unwrap();
        let c = couplings_naive(&j, &worked_grid()).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_approximant_limits_and_zeros() {
        let peak = delta_approximant(1.0, 1.0, 30.0);
        assert!((peak - 30.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((peak - 4.7746).abs() < 1e-4);
        for k in 1..5 {
            let w = 1.0 + 2.0 * PI * k as f64 / 30.0;
            assert!(delta_approximant(w, 1.0, 30.0).abs() < 1e-15);
        }
        // continuity across the series switch
        let eps = 1e-6 / 30.0;
        let a = delta_approximant(1.0 + 0.999 * eps, 1.0, 30.0);
        let b = delta_approximant(1.0 + 1.001 * eps, 1.0, 30.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn delta_approximant_has_unit_weight() {
        // ∫ over [-W, W] misses a tail ≈ 2/(π τ W); trapezoid on a fine grid
        let (tau, w) = (30.0, 2000.0);
        let n = 4_000_000;
        let h = 2.0 * w / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let f = delta_approximant(1.0 - w + i as f64 * h, 1.0, tau);
                if i == 0 || i == n {
                    0.5 * f
                } else {
                    f
                }
            })
            .sum::<f64>()
            * h;
        assert!((integral - 1.0).abs() < 1e-3, "integral = {integral}");
    }

    #[test]
    fn effective_density_examples() {
        let g = worked_grid();
        let zero = CouplingSet::new(vec![0.0; 8], CouplingMethod::Naive).unwrap();
        assert_eq!(effective_spectral_density(&zero, &g, 30.0, 1.0), 0.0);

        let one = make_grid(1.0, 0.05, 1).unwrap();
        let c = CouplingSet::new(vec![0.01], CouplingMethod::Naive).unwrap();
        let v = effective_spectral_density(&c, &one, 30.0, 1.0);
        assert!((v - 0.01f64.powi(2) * 30.0 / 2.0).abs() < 1e-15);

        let naive = couplings_naive(&worked_density(), &g).unwrap();
        let ratio = effective_spectral_density(&naive, &g, 30.0, 1.0) / worked_density().value(1.0).unwrap();
        // frozen from an independent numpy evaluation
        assert!((ratio - 0.9017459293791458).abs() < 1e-10, "ratio = {ratio}");
    }

    #[test]
    fn improved_single_mode() {
        let g = make_grid(1.0, 0.05, 1).unwrap();
        let j = worked_density();
        let c = couplings_improved(&j, &g, 30.0).unwrap();
        let want = 2.0 * j.value(1.0).unwrap() / 30.0;
        assert!((c.values()[0].powi(2) - want).abs() < 1e-15);
    }

    #[test]
    fn improved_interpolates_on_a_well_conditioned_grid() {
        // wide spacing relative to 2π/τ keeps the kernel diagonally dominant
        let g = make_grid(0.5, 0.5, 4).unwrap();
        let j = worked_density();
        let c = couplings_improved(&j, &g, 30.0).unwrap();
        for &w in g.frequencies() {
            let jeff = effective_spectral_density(&c, &g, 30.0, w);
            assert!((jeff / j.value(w).unwrap() - 1.0).abs() < 1e-9);
        }
        let nn = couplings_improved_nonneg(&j, &g, 30.0).unwrap();
        for (a, b) in c.values().iter().zip(nn.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(nn.diagnostics().is_empty());
    }

    #[test]
    fn improved_fails_loudly_on_worked_example() {
        match couplings_improved(&worked_density(), &worked_grid(), 30.0) {
            Err(Error::NegativeCoupling { modes, .. }) => assert_eq!(modes, vec![2, 4, 6]),
            other => panic!("expected NegativeCoupling, got {other:?}"),
        }
    }

    #[test]
    fn nonneg_solution_matches_reference_nnls() {
        // reference values from scipy.optimize.nnls on the same 8x8 system
        let want = [
            5.68699175e-05,
            0.0,
            0.0,
            3.91304409e-05,
            3.81626059e-05,
            0.0,
            0.0,
            8.56436036e-05,
        ];
        let c = couplings_improved_nonneg(&worked_density(), &worked_grid(), 30.0).unwrap();
        for (ck, w) in c.values().iter().zip(want) {
            assert!((ck * ck - w).abs() < 1e-12, "{} vs {w}", ck * ck);
        }
        assert_eq!(c.diagnostics().len(), 1);
        let g = worked_grid();
        let r = effective_spectral_density(&c, &g, 30.0, 1.0) / worked_density().value(1.0).unwrap();
        assert!((r - 0.9748027551352278).abs() < 1e-8);
    }

    #[test]
    fn thermal_probabilities() {
        let g = make_grid(1.0, 0.5, 2).unwrap();
        let env = thermal_env(&g, 1.0).unwrap();
        assert!((env.excitation()[0] - 0.2689414213699951).abs() < 1e-12);
        assert!((env.excitation()[0] - 0.26894).abs() < 1e-5);
        let cold = thermal_env(&g, 1e6).unwrap();
        assert!(cold.excitation().iter().all(|&p| p == 0.0));
        let hot = thermal_env(&g, 0.0).unwrap();
        assert!(hot.excitation().iter().all(|&p| p == 0.5));
        assert!(thermal_env(&g, -1.0).is_err());
    }

    #[test]
    fn thermal_density_matches_partition_function() {
        let one = ThermalEnvState::from_probabilities(1.0, vec![1.0], vec![0.25]).unwrap();
        let rho = thermal_density(&one).unwrap();
        assert_eq!(rho.matrix()[(0, 0)].re, 0.75);
        assert_eq!(rho.matrix()[(1, 1)].re, 0.25);

        let (beta, w1, w2) = (0.7, 0.9, 1.3);
        let g = ModeGrid::new(w1, w2 - w1, 2).unwrap();
        let rho = thermal_density(&thermal_env(&g, beta).unwrap()).unwrap();
        // E_j for H_B = -½ Σ ω_k σ_k^z: |0⟩ has -ω/2, |1⟩ has +ω/2
        let energies: Vec<f64> = (0..4)
            .map(|j| {
                let e1 = if j & 2 == 0 { -w1 / 2.0 } else { w1 / 2.0 };
                let e2 = if j & 1 == 0 { -w2 / 2.0 } else { w2 / 2.0 };
                e1 + e2
            })
            .collect();
        let z: f64 = energies.iter().map(|e| (-beta * e).exp()).sum();
        for (j, e) in energies.iter().enumerate() {
            assert!((rho.matrix()[(j, j)].re - (-beta * e).exp() / z).abs() < 1e-14);
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn thermal_bits_statistics() {
        let env = ThermalEnvState::from_probabilities(1.0, vec![1.0, 2.0], vec![0.3, 0.05]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            for (k, b) in sample_thermal_bits(&env, &mut rng).into_iter().enumerate() {
                counts[k] += b as usize;
            }
        }
        for (k, &p) in env.excitation().iter().enumerate() {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[k] as f64 / n as f64 - p).abs() < 3.0 * sigma);
        }
        let cold = thermal_env(&worked_grid(), 1e6).unwrap();
        assert!(sample_thermal_bits_seeded(&cold, 3).iter().all(|b| !b));
        assert_eq!(
            sample_thermal_bits_seeded(&thermal_env(&worked_grid(), 1.0).unwrap(), 99),
            sample_thermal_bits_seeded(&thermal_env(&worked_grid(), 1.0).unwrap(), 99)
        );
    }

    #[test]
    fn tabulated_parsing_and_interpolation() {
        let j = SpectralDensity::parse_tabulated("# w J\n0.5, 1.0\n1.0 3.0\n\n2.0 1.0\n").unwrap();
        assert!((j.value(0.75).unwrap() - 2.0).abs() < 1e-15);
        assert!((j.value(1.5).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(j.value(2.0).unwrap(), 1.0);
        assert!(matches!(j.value(2.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(
            SpectralDensity::parse_tabulated("1 2 3\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(SpectralDensity::parse_tabulated("0 1\n1 -1\n").is_err());
        assert!(SpectralDensity::parse_tabulated("1 1\n0.5 1\n").is_err());
    }

    proptest! {
        #[test]
        fn naive_coupling_identity(alpha in 1e-5f64..1e-2, wc in 1.0f64..200.0, dw in 0.01f64..0.2) {
            let j = SpectralDensity::ohmic(alpha, wc).unwrap();
            let g = make_grid(0.5, dw, 5).unwrap();
            let c = couplings_naive(&j, &g).unwrap();
            for (ck, &w) in c.values().iter().zip(g.frequencies()) {
                let lhs = PI * ck * ck;
                let rhs = j.value(w).unwrap() * dw;
                prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1e-300));
            }
        }

        #[test]
        fn delta_is_nonnegative_and_symmetric(x in -5.0f64..5.0, w0 in 0.1f64..3.0, tau in 0.1f64..100.0) {
            let a = delta_approximant(w0 + x, w0, tau);
            let b = delta_approximant(w0 - x, w0, tau);
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
        }
    }
}
