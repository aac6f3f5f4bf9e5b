//! Reading out the system register: direct matrix elements, and the SWAP-test
//! estimator emulated at the level of its outcome probability.
//!
//! With the index qubit measured after a Hadamard, controlled-SWAP, Hadamard
//! sequence, `P(0) = ½(1 + ⟨φ|ρ|φ⟩)`. Matrix elements follow from probe
//! states `φ₊ = (|m⟩+|n⟩)/√2` and `φ_i = (|m⟩+i|n⟩)/√2`:
//!
//! * `⟨φ₊|ρ|φ₊⟩ = (ρ_mm + ρ_nn)/2 + Re ρ_mn`
//! * `⟨φ_i|ρ|φ_i⟩ = (ρ_mm + ρ_nn)/2 - Im ρ_mn`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{invalid, Error, Result};
use crate::qmath::{ensure_hermitian, ComplexMatrix, DensityMatrix, QuantumState};
use crate::Complex64;

pub fn matrix_element(rho: &DensityMatrix, m: usize, n: usize) -> Result<Complex64> {
    let dim = rho.dim();
    for i in [m, n] {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, len: dim });
        }
    }
    Ok(rho.matrix()[(m, n)])
}

/// `⟨φ|ρ|φ⟩`
pub fn overlap(rho: &DensityMatrix, phi: &QuantumState) -> Result<f64> {
    if phi.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "probe has dimension {}, state has {}",
            phi.dim(),
            rho.dim()
        )));
    }
    let v = phi.amplitudes();
    Ok((v.adjoint() * rho.matrix() * v)[(0, 0)].re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapTestOutcome {
    /// Exact `P(0)`.
    pub probability: f64,
    /// Fraction of `0` outcomes over the requested shots.
    pub estimate: Option<f64>,
}

/// Shot sampling for the SWAP test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shots {
    pub count: u64,
    pub seed: u64,
}

pub fn swap_test_probability(rho: &DensityMatrix, phi: &QuantumState, shots: Option<Shots>) -> Result<SwapTestOutcome> {
    let p0 = (0.5 * (1.0 + overlap(rho, phi)?)).clamp(0.5, 1.0);
    let estimate = match shots {
        None => None,
        Some(Shots { count, seed }) => {
            if count == 0 {
                return Err(invalid("shots", "must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = Binomial::new(count, p0)
                .map_err(|e| invalid("shots", e.to_string()))?
                .sample(&mut rng);
            Some(k as f64 / count as f64)
        }
    };
    Ok(SwapTestOutcome {
        probability: p0,
        estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutMode {
    Expectation,
    /// Every SWAP test gets `count` shots; the probes use seeds
    /// `seed`, `seed + 1`, … in a fixed order.
    Shots { count: u64, seed: u64 },
}

/// `⟨φ|ρ|φ⟩ = 2P(0) - 1` from one SWAP test.
fn probe(rho: &DensityMatrix, phi: &QuantumState, mode: ReadoutMode, k: u64) -> Result<f64> {
    let shots = match mode {
        ReadoutMode::Expectation => None,
        ReadoutMode::Shots { count, seed } => Some(Shots {
            count,
            seed: seed.wrapping_add(k),
        }),
    };
    let out = swap_test_probability(rho, phi, shots)?;
    Ok(2.0 * out.estimate.unwrap_or(out.probability) - 1.0)
}

/// Rebuilds `ρ_mn` from SWAP-test probabilities alone.
pub fn reconstruct_element(rho: &DensityMatrix, m: usize, n: usize, mode: ReadoutMode) -> Result<Complex64> {
    let dim = rho.dim();
    for i in [m, n] {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, len: dim });
        }
    }
    let basis = |i| QuantumState::basis(dim, i);
    if m == n {
        return Ok(Complex64::new(probe(rho, &basis(m)?, mode, 0)?, 0.0));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut plus = vec![Complex64::new(0.0, 0.0); dim];
    plus[m] = Complex64::new(s, 0.0);
    plus[n] = Complex64::new(s, 0.0);
    let mut imag = plus.clone();
    imag[n] = Complex64::new(0.0, s);

    let rho_mm = probe(rho, &basis(m)?, mode, 0)?;
    let rho_nn = probe(rho, &basis(n)?, mode, 1)?;
    let half = 0.5 * (rho_mm + rho_nn);
    let re = probe(rho, &QuantumState::new(plus)?, mode, 2)? - half;
    let im = half - probe(rho, &QuantumState::new(imag)?, mode, 3)?;
    Ok(Complex64::new(re, im))
}

/// `Tr(ρF)` for Hermitian `F`.
pub fn expectation(rho: &DensityMatrix, f: &ComplexMatrix) -> Result<f64> {
    if f.nrows() != rho.dim() || f.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observable is {}x{}, state has dimension {}",
            f.nrows(),
            f.ncols(),
            rho.dim()
        )));
    }
    ensure_hermitian(f)?;
    let tr = (rho.matrix() * f).trace();
    debug_assert!(tr.im.abs() < 1e-10 * (1.0 + tr.re.abs()));
    Ok(tr.re)
}
