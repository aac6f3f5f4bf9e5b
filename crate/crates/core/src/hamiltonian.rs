//! Spin-bath model Hamiltonians, stored as an ordered list of local terms.
//!
//! Every term is kept as a small operator plus the qubits it acts on, which
//! is what the Trotter product needs; [`GlobalHamiltonianTerms::term_matrix`]
//! and [`GlobalHamiltonianTerms::total`] give the full-space matrices.

use std::ops::Range;

use crate::env_model::{CouplingSet, ModeGrid};
use crate::error::{invalid, Error, Result};
use crate::qmath::{self, embed_operator, ensure_hermitian, kron, ComplexMatrix, Pauli};

/// Markovian-validity guard: warn when `coupling · τ` exceeds this.
pub const COUPLING_TAU_WARN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    System,
    Bath(usize),
    Interaction(usize),
}

#[derive(Debug, Clone)]
pub struct LocalTerm {
    pub kind: TermKind,
    pub op: ComplexMatrix,
    pub qubits: Vec<usize>,
}

/// Ordered `{H_S, H_B1, H_I1, …, H_Bd, H_Id}` on `n_system + n_env` qubits.
#[derive(Debug, Clone)]
pub struct GlobalHamiltonianTerms {
    n_system_qubits: usize,
    n_env_qubits: usize,
    terms: Vec<LocalTerm>,
}

impl GlobalHamiltonianTerms {
    /// Validates that each term is Hermitian and fits the register.
    pub fn new(n_system_qubits: usize, n_env_qubits: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        let n = n_system_qubits + n_env_qubits;
        for t in &terms {
            ensure_hermitian(&t.op)?;
            if t.op.nrows() != 1 << t.qubits.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{:?} term is {}x{} on {} qubits",
                    t.kind,
                    t.op.nrows(),
                    t.op.ncols(),
                    t.qubits.len()
                )));
            }
            if let Some(&q) = t.qubits.iter().find(|&&q| q >= n) {
                return Err(Error::IndexOutOfRange { index: q, len: n });
            }
        }
        Ok(Self {
            n_system_qubits,
            n_env_qubits,
            terms,
        })
    }

    pub fn n_system_qubits(&self) -> usize {
        self.n_system_qubits
    }

    pub fn n_env_qubits(&self) -> usize {
        self.n_env_qubits
    }

    pub fn n_qubits(&self) -> usize {
        self.n_system_qubits + self.n_env_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_matrix(&self, index: usize) -> Result<ComplexMatrix> {
        let t = self.terms.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.terms.len(),
        })?;
        embed_operator(&t.op, &t.qubits, self.n_qubits())
    }

    /// Sum of all terms on the full space.
    pub fn total(&self) -> Result<ComplexMatrix> {
        let dim = self.dim();
        if dim > qmath::DEFAULT_MAX_DIM {
            return Err(Error::DimensionOverflow {
                dim,
                max: qmath::DEFAULT_MAX_DIM,
            });
        }
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for i in 0..self.terms.len() {
            sum += self.term_matrix(i)?;
        }
        Ok(sum)
    }
}

#[derive(Debug, Clone)]
pub enum CouplingOps {
    /// One operator `Ã` shared by every mode.
    Shared(ComplexMatrix),
    PerMode(Vec<ComplexMatrix>),
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub n_system_qubits: usize,
    pub h_s: ComplexMatrix,
    pub coupling: CouplingOps,
    /// Transverse weight.
    pub g_r: f64,
    /// Longitudinal weight.
    pub g_phi: f64,
}

impl SystemSpec {
    /// Two-level system `-½ ω_s σ^z` coupled through `σ^x`, transverse only.
    pub fn two_level(omega_s: f64) -> Self {
        Self {
            n_system_qubits: 1,
            h_s: Pauli::Z.matrix().scale(-0.5 * omega_s),
            coupling: CouplingOps::Shared(Pauli::X.matrix()),
            g_r: 1.0,
            g_phi: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_system_qubits
    }

    pub fn coupling_op(&self, mode: usize) -> Option<&ComplexMatrix> {
        match &self.coupling {
            CouplingOps::Shared(op) => Some(op),
            CouplingOps::PerMode(ops) => ops.get(mode),
        }
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        let dim = self.dim();
        if self.h_s.nrows() != dim || self.h_s.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "H_S is {}x{}, system has dimension {dim}",
                self.h_s.nrows(),
                self.h_s.ncols()
            )));
        }
        ensure_hermitian(&self.h_s)?;
        let ops: Vec<&ComplexMatrix> = match &self.coupling {
            CouplingOps::Shared(op) => vec![op],
            CouplingOps::PerMode(ops) => {
                if ops.len() != n_modes {
                    return Err(Error::DimensionMismatch(format!(
                        "{} coupling operators for {n_modes} modes",
                        ops.len()
                    )));
                }
                ops.iter().collect()
            }
        };
        for op in ops {
            if op.nrows() != dim || op.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "coupling operator is {}x{}, system has dimension {dim}",
                    op.nrows(),
                    op.ncols()
                )));
            }
            ensure_hermitian(op)?;
        }
        if self.g_r * self.g_r + self.g_phi * self.g_phi <= 0.0 {
            return Err(invalid("g_r, g_phi", "at least one coupling weight must be nonzero"));
        }
        Ok(())
    }
}

/// `H_Bk = -½ ω_k σ_k^z`, `H_Ik = ½ c_k Ã_k ⊗ (g_r σ_k^x + g_φ σ_k^z)`.
pub fn build_spin_bath_terms(
    sys: &SystemSpec,
    grid: &ModeGrid,
    c: &CouplingSet,
) -> Result<GlobalHamiltonianTerms> {
    let d = grid.len();
    if c.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} couplings for {d} modes",
            c.len()
        )));
    }
    sys.validate(d)?;
    let ns = sys.n_system_qubits;
    let system_qubits: Vec<usize> = (0..ns).collect();
    let env_op = Pauli::X.matrix().scale(sys.g_r) + Pauli::Z.matrix().scale(sys.g_phi);

    let mut terms = Vec::with_capacity(2 * d + 1);
    terms.push(LocalTerm {
        kind: TermKind::System,
        op: sys.h_s.clone(),
        qubits: system_qubits.clone(),
    });
    for (k, (&w, &ck)) in grid.frequencies().iter().zip(c.values()).enumerate() {
        let env_qubit = ns + k;
        terms.push(LocalTerm {
            kind: TermKind::Bath(k),
            op: Pauli::Z.matrix().scale(-0.5 * w),
            qubits: vec![env_qubit],
        });
        let a = sys.coupling_op(k).expect("validated above");
        let mut qubits = system_qubits.clone();
        qubits.push(env_qubit);
        terms.push(LocalTerm {
            kind: TermKind::Interaction(k),
            op: kron(a, &env_op)?.scale(0.5 * ck),
            qubits,
        });
    }
    GlobalHamiltonianTerms::new(ns, d, terms)
}

/// `H = -½ω_s σ^z - ½Σ ω_k σ_k^z + ½ σ^x ⊗ Σ c_k σ_k^x`.
pub fn build_two_level_example(
    omega_s: f64,
    grid: &ModeGrid,
    c: &CouplingSet,
) -> Result<GlobalHamiltonianTerms> {
    build_spin_bath_terms(&SystemSpec::two_level(omega_s), grid, c)
}

/// Per-subset Hamiltonians for sequential application of the dissipation channels.
#[derive(Debug, Clone)]
pub struct SequentialTerms {
    pub subsets: Vec<GlobalHamiltonianTerms>,
    /// Which modes of the full grid each subset carries.
    pub mode_ranges: Vec<Range<usize>>,
    /// Coupling rescale factor `sqrt(d / d_i)`.
    pub factor: f64,
    pub warnings: Vec<String>,
}

impl SequentialTerms {
    pub fn subset_size(&self) -> usize {
        self.mode_ranges.first().map_or(0, |r| r.len())
    }

    pub fn n_modes(&self) -> usize {
        self.mode_ranges.last().map_or(0, |r| r.end)
    }
}

/// Split the modes into consecutive subsets of `subset_size`, each coupled
/// with strength scaled by `sqrt(d / subset_size)`.
pub fn rescale_for_sequential(
    sys: &SystemSpec,
    grid: &ModeGrid,
    c: &CouplingSet,
    subset_size: usize,
    tau: f64,
) -> Result<SequentialTerms> {
    let d = grid.len();
    if subset_size == 0 || !d.is_multiple_of(subset_size) {
        return Err(invalid(
            "subset_size",
            format!("{subset_size} does not divide the mode count {d}"),
        ));
    }
    if c.len() != d {
        return Err(Error::DimensionMismatch(format!("{} couplings for {d} modes", c.len())));
    }
    let factor = (d as f64 / subset_size as f64).sqrt();
    let mut subsets = Vec::new();
    let mut mode_ranges = Vec::new();
    for i in 0..d / subset_size {
        let range = i * subset_size..(i + 1) * subset_size;
        let sub_sys = SystemSpec {
            coupling: match &sys.coupling {
                CouplingOps::Shared(op) => CouplingOps::Shared(op.clone()),
                CouplingOps::PerMode(ops) => CouplingOps::PerMode(ops[range.clone()].to_vec()),
            },
            ..sys.clone()
        };
        subsets.push(build_spin_bath_terms(
            &sub_sys,
            &grid.subset(range.clone())?,
            &c.subset(range.clone()).scaled(factor),
        )?);
        mode_ranges.push(range);
    }
    Ok(SequentialTerms {
        subsets,
        mode_ranges,
        factor,
        warnings: markovian_warnings(c, factor, tau, grid.spacing()),
    })
}

/// Timescale checks for the evolve-reset approximation. Never fatal.
pub fn markovian_warnings(c: &CouplingSet, factor: f64, tau: f64, spacing: f64) -> Vec<String> {
    let mut out = Vec::new();
    let cmax = c.values().iter().fold(0.0f64, |a, &b| a.max(b)) * factor;
    if cmax * tau > COUPLING_TAU_WARN {
        out.push(format!(
            "largest (rescaled) coupling × τ = {:.3} exceeds {COUPLING_TAU_WARN}; the reset interval may be too long for the Markovian limit",
            cmax * tau
        ));
    }
    if spacing * tau > 2.0 * std::f64::consts::PI {
        out.push(format!(
            "mode spacing × τ = {:.3} exceeds 2π; neighbouring δ-peaks barely overlap",
            spacing * tau
        ));
    }
    out
}
