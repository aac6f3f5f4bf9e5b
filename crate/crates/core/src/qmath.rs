//! Dense complex linear algebra for few-qubit Hilbert spaces.
//!
//! Operators are plain `nalgebra` matrices of `Complex64`. Pure and mixed
//! states are thin validated wrappers. Qubit 0 is always the most
//! significant tensor factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Default cap on the Hilbert-space dimension of any operator we build (12 qubits).
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Tolerance used when checking that an input operator is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> ComplexMatrix {
        match self {
            Pauli::X => ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }
}

/// Lowering operator `|g⟩⟨e| = |0⟩⟨1|`.
pub fn sigma_minus() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// Raising operator `|e⟩⟨g| = |1⟩⟨0|`.
pub fn sigma_plus() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Number of qubits for a power-of-two dimension.
pub fn qubit_count(dim: usize) -> Result<usize> {
    if !is_power_of_two(dim) {
        return Err(Error::DimensionMismatch(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Kronecker product `a ⊗ b`, capped at [`DEFAULT_MAX_DIM`].
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_capped(a, b, DEFAULT_MAX_DIM)
}

pub fn kron_capped(a: &ComplexMatrix, b: &ComplexMatrix, max_dim: usize) -> Result<ComplexMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DimensionMismatch("kron of an empty matrix".into()));
    }
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= max_dim && c <= max_dim => Ok(a.kronecker(b)),
        (r, c) => Err(Error::DimensionOverflow {
            dim: r.unwrap_or(usize::MAX).max(c.unwrap_or(usize::MAX)),
            max: max_dim,
        }),
    }
}

/// Largest entry of `|m - m†|`.
pub fn hermiticity_deviation(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Errors unless `m` is square and Hermitian to [`HERMITIAN_TOL`] (relative to its largest entry).
pub fn ensure_hermitian(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let deviation = hermiticity_deviation(m);
    if deviation > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

fn is_diagonal(m: &ComplexMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == ZERO))
}

/// Unitary `exp(-i h t)` of a Hermitian `h` via its eigendecomposition.
pub fn expm_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    ensure_hermitian(h)?;
    let n = h.nrows();
    if t == 0.0 {
        return Ok(identity(n));
    }
    if is_diagonal(h) {
        return Ok(ComplexMatrix::from_diagonal(&DVector::from_fn(n, |i, _| {
            Complex64::from_polar(1.0, -h[(i, i)].re * t)
        })));
    }
    if n == 2 {
        return Ok(expm_hermitian_2x2(h, t));
    }
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let phases = DVector::from_fn(n, |i, _| Complex64::from_polar(1.0, -eig.eigenvalues[i] * t));
    let v = &eig.eigenvectors;
    let mut vd = v.clone();
    for (j, mut col) in vd.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(matmul(&vd, &v.adjoint()))
}

/// Closed form for `h = a0 I + a·σ`: `exp(-iht) = e^{-i a0 t}[cos(|a|t) I - i sin(|a|t) â·σ]`.
fn expm_hermitian_2x2(h: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let a0 = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let az = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let off = 0.5 * (h[(0, 1)] + h[(1, 0)].conj());
    let (ax, ay) = (off.re, -off.im);
    let r = (ax * ax + ay * ay + az * az).sqrt();
    let global = Complex64::from_polar(1.0, -a0 * t);
    let c = (r * t).cos();
    let s = if r > 0.0 { (r * t).sin() / r } else { t };
    // a·σ = [[az, ax - i ay], [ax + i ay, -az]]
    let m00 = Complex64::new(c, -s * az);
    let m11 = Complex64::new(c, s * az);
    let m01 = -I * s * Complex64::new(ax, -ay);
    let m10 = -I * s * Complex64::new(ax, ay);
    ComplexMatrix::from_row_slice(2, 2, &[m00, m01, m10, m11]) * global
}

/// `I ⊗ … ⊗ σ ⊗ … ⊗ I` with `σ` acting on `qubit`.
pub fn embed_pauli(kind: Pauli, qubit: usize, n_qubits: usize) -> Result<ComplexMatrix> {
    embed_operator(&kind.matrix(), &[qubit], n_qubits)
}

/// Embed an operator on `targets` (first target = most significant local bit)
/// into the full `n_qubits` space.
pub fn embed_operator(op: &ComplexMatrix, targets: &[usize], n_qubits: usize) -> Result<ComplexMatrix> {
    check_targets(op, targets, n_qubits)?;
    let dim = 1usize << n_qubits;
    if dim > DEFAULT_MAX_DIM {
        return Err(Error::DimensionOverflow {
            dim,
            max: DEFAULT_MAX_DIM,
        });
    }
    let mut m = identity(dim);
    apply_local_left(&mut m, op, targets, n_qubits)?;
    Ok(m)
}

fn check_targets(op: &ComplexMatrix, targets: &[usize], n_qubits: usize) -> Result<()> {
    for (i, &q) in targets.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::IndexOutOfRange {
                index: q,
                len: n_qubits,
            });
        }
        if targets[..i].contains(&q) {
            return Err(Error::DimensionMismatch(format!("repeated target qubit {q}")));
        }
    }
    let local = 1usize << targets.len();
    if op.nrows() != local || op.ncols() != local {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but acts on {} qubits",
            op.nrows(),
            op.ncols(),
            targets.len()
        )));
    }
    Ok(())
}

/// Offsets of each local basis state inside the full index, and the list of
/// "base" indices with all target bits cleared.
fn local_layout(targets: &[usize], n_qubits: usize) -> (Vec<usize>, Vec<usize>) {
    let k = targets.len();
    let offsets: Vec<usize> = (0..1usize << k)
        .map(|l| {
            targets.iter().enumerate().fold(0, |acc, (i, &q)| {
                let bit = (l >> (k - 1 - i)) & 1;
                acc | (bit << (n_qubits - 1 - q))
            })
        })
        .collect();
    let mask = offsets.iter().fold(0, |acc, &o| acc | o);
    let bases = (0..1usize << n_qubits).filter(|i| i & mask == 0).collect();
    (offsets, bases)
}

/// In-place `m ← G m` where `G` is `op` acting on `targets`.
pub fn apply_local_left(
    m: &mut ComplexMatrix,
    op: &ComplexMatrix,
    targets: &[usize],
    n_qubits: usize,
) -> Result<()> {
    check_targets(op, targets, n_qubits)?;
    let dim = 1usize << n_qubits;
    if m.nrows() != dim {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, expected {dim}",
            m.nrows()
        )));
    }
    let (offsets, bases) = local_layout(targets, n_qubits);
    let mut buf = vec![ZERO; offsets.len()];
    for mut col in m.column_iter_mut() {
        for &base in &bases {
            for (l, &o) in offsets.iter().enumerate() {
                buf[l] = col[base + o];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (l, &b) in buf.iter().enumerate() {
                    acc += op[(r, l)] * b;
                }
                col[base + o] = acc;
            }
        }
    }
    Ok(())
}

/// Dense product; large products are split over column blocks when the
/// `parallel` feature is enabled.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    #[cfg(feature = "parallel")]
    if a.nrows() >= 128 && b.ncols() >= 128 {
        use rayon::prelude::*;
        let n = b.ncols();
        let blocks = rayon::current_num_threads().max(1).min(n);
        let width = n.div_ceil(blocks);
        let parts: Vec<ComplexMatrix> = (0..n.div_ceil(width))
            .into_par_iter()
            .map(|blk| {
                let start = blk * width;
                let len = width.min(n - start);
                a * b.columns(start, len)
            })
            .collect();
        let mut out = ComplexMatrix::zeros(a.nrows(), n);
        for (blk, part) in parts.iter().enumerate() {
            out.columns_mut(blk * width, part.ncols()).copy_from(part);
        }
        return out;
    }
    a * b
}

/// `m^n` by binary exponentiation.
pub fn matrix_power(m: &ComplexMatrix, mut n: usize) -> ComplexMatrix {
    let mut result: Option<ComplexMatrix> = None;
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => matmul(&r, &base),
            });
        }
        n >>= 1;
        if n > 0 {
            base = matmul(&base, &base);
        }
    }
    result.unwrap_or_else(|| identity(m.nrows()))
}

/// Largest singular value.
pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

/// Partial trace of a raw matrix over the complement of `keep`.
///
/// `subsystem_dims` lists the factor dimensions (most significant first); the
/// kept factors appear in the result in ascending index order.
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    subsystem_dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    let total: usize = subsystem_dims.iter().product();
    if !m.is_square() || m.nrows() != total {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, subsystem dims {:?} give {total}",
            m.nrows(),
            m.ncols(),
            subsystem_dims
        )));
    }
    if keep.is_empty() {
        return Err(Error::DimensionMismatch("nothing to keep".into()));
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= subsystem_dims.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: subsystem_dims.len(),
        });
    }
    let n = subsystem_dims.len();
    let mut strides = vec![1usize; n];
    for s in (0..n.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * subsystem_dims[s + 1];
    }
    let traced: Vec<usize> = (0..n).filter(|s| !kept.contains(s)).collect();
    let offsets = |subs: &[usize]| -> Vec<usize> {
        let mut out = vec![0usize];
        for &s in subs {
            let mut next = Vec::with_capacity(out.len() * subsystem_dims[s]);
            for &o in &out {
                for i in 0..subsystem_dims[s] {
                    next.push(o + i * strides[s]);
                }
            }
            out = next;
        }
        out
    };
    let ko = offsets(&kept);
    let to = offsets(&traced);
    let dk = ko.len();
    Ok(ComplexMatrix::from_fn(dk, dk, |a, b| {
        to.iter()
            .map(|&t| m[(ko[a] + t, ko[b] + t)])
            .fold(ZERO, |acc, z| acc + z)
    }))
}

/// Reduced density matrix over the subsystems in `keep`.
pub fn partial_trace(
    rho: &DensityMatrix,
    subsystem_dims: &[usize],
    keep: &[usize],
) -> Result<DensityMatrix> {
    partial_trace_matrix(rho.matrix(), subsystem_dims, keep).map(DensityMatrix::from_matrix_unchecked)
}

/// Normalized pure state on a power-of-two Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<Complex64>,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if !is_power_of_two(amplitudes.len()) {
            return Err(Error::InvalidState(format!(
                "dimension {} is not a power of two",
                amplitudes.len()
            )));
        }
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("squared norm {norm2} != 1")));
        }
        Ok(Self {
            amplitudes: DVector::from_vec(amplitudes),
        })
    }

    /// Rescales `amplitudes` to unit norm first.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite norm".into()));
        }
        Self::new(amplitudes.into_iter().map(|a| a / norm).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, len: dim });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// Tolerances for the density-matrix invariants.
#[derive(Debug, Clone, Copy)]
pub struct StateTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerance {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            trace: 1e-10,
            min_eigenvalue: -1e-8,
        }
    }
}

impl StateTolerance {
    /// Bounds applied to every snapshot of a simulated CPTP evolution.
    pub fn cptp() -> Self {
        Self {
            hermitian: 1e-9,
            trace: 1e-9,
            min_eigenvalue: -1e-7,
        }
    }
}

/// Mixed state: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(matrix);
        rho.validate(StateTolerance::default())?;
        Ok(rho)
    }

    /// Wraps a matrix without validation. Used for results of maps that are
    /// CPTP by construction; call [`DensityMatrix::validate`] to check.
    pub fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn from_pure(psi: &QuantumState) -> Self {
        let v = psi.amplitudes();
        Self {
            matrix: v * v.adjoint(),
        }
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(populations.len(), populations.iter().map(|&p| Complex64::new(p, 0.0)));
        Self::new(ComplexMatrix::from_diagonal(&d))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, &x| acc.min(x))
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn validate(&self, tol: StateTolerance) -> Result<()> {
        let m = &self.matrix;
        if !m.is_square() || m.is_empty() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm = hermiticity_deviation(m);
        if herm > tol.hermitian {
            return Err(Error::InvalidState(format!("Hermiticity deviation {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol.trace {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < tol.min_eigenvalue {
            return Err(Error::InvalidState(format!("negative eigenvalue {lmin:.3e}")));
        }
        Ok(())
    }

    /// `ρ_a ⊗ ρ_b`
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        kron(&self.matrix, &other.matrix).map(Self::from_matrix_unchecked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let a = random_matrix(rng, n);
        (&a + a.adjoint()).scale(0.5)
    }

    fn random_density(rng: &mut impl Rng, n: usize) -> DensityMatrix {
        let a = random_matrix(rng, n);
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m / tr).unwrap()
    }

    fn max_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    /// Independent oracle: truncated Taylor series of exp(-iht).
    fn expm_taylor(h: &ComplexMatrix, t: f64, terms: usize) -> ComplexMatrix {
        let n = h.nrows();
        let a = h * c(0.0, -t);
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..terms {
            term = &term * &a / c(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn kron_identities_and_diagonal() {
        let i4 = kron(&identity(2), &identity(2)).unwrap();
        assert_eq!(i4, identity(4));
        let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix()).unwrap();
        let expected = [1.0, -1.0, -1.0, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { expected[i] } else { 0.0 };
                assert_eq!(zz[(i, j)], c(want, 0.0));
            }
        }
    }

    #[test]
    fn kron_mixed_product_matches_dense_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b, cc, d) = (
            random_matrix(&mut rng, 2),
            random_matrix(&mut rng, 2),
            random_matrix(&mut rng, 2),
            random_matrix(&mut rng, 2),
        );
        let lhs = kron(&a, &b).unwrap() * kron(&cc, &d).unwrap();
        let rhs = kron(&(&a * &cc), &(&b * &d)).unwrap();
        assert!(max_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn kron_respects_cap() {
        let big = identity(64);
        assert!(matches!(
            kron_capped(&big, &big, 1024),
            Err(Error::DimensionOverflow { .. })
        ));
        assert!(kron(&ComplexMatrix::zeros(0, 0), &identity(2)).is_err());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rs = random_density(&mut rng, 2);
        let rb = random_density(&mut rng, 4);
        let joint = rs.tensor(&rb).unwrap();
        let back = partial_trace(&joint, &[2, 4], &[0]).unwrap();
        assert!(max_diff(back.matrix(), rs.matrix()) < 1e-12);
        let env = partial_trace(&joint, &[2, 4], &[1]).unwrap();
        assert!(max_diff(env.matrix(), rb.matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = QuantumState::new(vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]).unwrap();
        let rho = DensityMatrix::from_pure(&bell);
        let red = partial_trace(&rho, &[2, 2], &[0]).unwrap();
        assert!(max_diff(red.matrix(), &identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 4);
        let m = rho.matrix();
        // ρ_A[a, a'] = Σ_b ⟨a,b|ρ|a',b⟩ and ρ_B[b, b'] = Σ_a ⟨a,b|ρ|a,b'⟩
        let mut ra = ComplexMatrix::zeros(2, 2);
        let mut rb = ComplexMatrix::zeros(2, 2);
        for a in 0..2 {
            for ap in 0..2 {
                for b in 0..2 {
                    ra[(a, ap)] += m[(2 * a + b, 2 * ap + b)];
                    rb[(a, ap)] += m[(2 * b + a, 2 * b + ap)];
                }
            }
        }
        assert!(max_diff(partial_trace(&rho, &[2, 2], &[0]).unwrap().matrix(), &ra) < 1e-14);
        assert!(max_diff(partial_trace(&rho, &[2, 2], &[1]).unwrap().matrix(), &rb) < 1e-14);
    }

    #[test]
    fn partial_trace_keeps_middle_factor_of_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b, cc) = (
            random_density(&mut rng, 2),
            random_density(&mut rng, 2),
            random_density(&mut rng, 2),
        );
        let abc = a.tensor(&b).unwrap().tensor(&cc).unwrap();
        let mid = partial_trace(&abc, &[2, 2, 2], &[1]).unwrap();
        assert!(max_diff(mid.matrix(), b.matrix()) < 1e-14);
        let outer = partial_trace(&abc, &[2, 2, 2], &[2, 0]).unwrap();
        let ac = a.tensor(&cc).unwrap();
        assert!(max_diff(outer.matrix(), ac.matrix()) < 1e-14);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(partial_trace(&rho, &[2, 3], &[0]).is_err());
        assert!(partial_trace(&rho, &[2, 2], &[]).is_err());
        assert!(partial_trace(&rho, &[2, 2], &[2]).is_err());
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let z = ComplexMatrix::zeros(3, 3);
        assert_eq!(expm_hermitian(&z, 1.3).unwrap(), identity(3));
        let u = expm_hermitian(&Pauli::Z.matrix(), std::f64::consts::PI).unwrap();
        assert!(max_diff(&u, &(-identity(2))) < 1e-15);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 4] {
            let h = random_hermitian(&mut rng, n);
            let u = expm_hermitian(&h, 0.3).unwrap();
            assert!(max_diff(&u, &expm_taylor(&h, 0.3, 30)) < 1e-8);
        }
        // 2x2 closed form over a longer time, against the generic eigen path
        let h = random_hermitian(&mut rng, 2);
        let via_eig = {
            let eig = h.clone().symmetric_eigen();
            let d = DVector::from_fn(2, |i, _| Complex64::from_polar(1.0, -eig.eigenvalues[i] * 7.0));
            &eig.eigenvectors * ComplexMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
        };
        assert!(max_diff(&expm_hermitian(&h, 7.0).unwrap(), &via_eig) < 1e-12);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!(matches!(expm_hermitian(&m, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn embed_pauli_placement() {
        assert_eq!(embed_pauli(Pauli::Z, 0, 1).unwrap(), Pauli::Z.matrix());
        let x1 = embed_pauli(Pauli::X, 1, 2).unwrap();
        assert_eq!(x1, kron(&identity(2), &Pauli::X.matrix()).unwrap());
        let z0 = embed_pauli(Pauli::Z, 0, 2).unwrap();
        assert_eq!(z0, kron(&Pauli::Z.matrix(), &identity(2)).unwrap());
        let z2 = embed_pauli(Pauli::Z, 2, 3).unwrap();
        assert!(max_diff(&(&z2 * &z2), &identity(8)) < 1e-15);
        assert!(matches!(
            embed_pauli(Pauli::Y, 3, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn embed_operator_handles_non_adjacent_targets() {
        let xz = kron(&Pauli::X.matrix(), &Pauli::Z.matrix()).unwrap();
        let full = embed_operator(&xz, &[2, 0], 3).unwrap();
        // qubit 2 gets X, qubit 0 gets Z
        let want = kron(
            &kron(&Pauli::Z.matrix(), &identity(2)).unwrap(),
            &Pauli::X.matrix(),
        )
        .unwrap();
        assert_eq!(full, want);
    }

    #[test]
    fn matrix_power_matches_repeated_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = expm_hermitian(&random_hermitian(&mut rng, 4), 0.2).unwrap();
        let mut want = identity(4);
        for n in 0..12 {
            assert!(max_diff(&matrix_power(&u, n), &want) < 1e-12);
            want = &want * &u;
        }
    }

    #[test]
    fn parallel_matmul_matches_serial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 160);
        let b = random_matrix(&mut rng, 160);
        assert!(max_diff(&matmul(&a, &b), &(&a * &b)) < 1e-10);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::diagonal(&[0.75, 0.25]).is_ok());
        assert!(DensityMatrix::diagonal(&[0.75, 0.35]).is_err());
        assert!(DensityMatrix::diagonal(&[1.25, -0.25]).is_err());
        assert!(QuantumState::new(vec![ONE, ONE]).is_err());
        assert!(QuantumState::new(vec![ONE, ZERO, ZERO]).is_err());
    }

    proptest! {
        #[test]
        fn expm_forward_backward_is_identity(seed in any::<u64>(), t in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(&mut rng, 4);
            let prod = expm_hermitian(&h, t).unwrap() * expm_hermitian(&h, -t).unwrap();
            prop_assert!(max_diff(&prod, &identity(4)) < 1e-9);
        }

        #[test]
        fn partial_trace_preserves_trace_and_hermiticity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(&mut rng, 8);
            for keep in [vec![0], vec![1], vec![2], vec![0, 2]] {
                let red = partial_trace(&rho, &[2, 2, 2], &keep).unwrap();
                prop_assert!((red.trace() - ONE).norm() < 1e-12);
                prop_assert!(hermiticity_deviation(red.matrix()) < 1e-12);
            }
        }

        #[test]
        fn kron_is_associative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, cc) = (random_matrix(&mut rng, 2), random_matrix(&mut rng, 3), random_matrix(&mut rng, 2));
            let left = kron(&kron(&a, &b).unwrap(), &cc).unwrap();
            let right = kron(&a, &kron(&b, &cc).unwrap()).unwrap();
            prop_assert!(max_diff(&left, &right) < 1e-12);
        }
    }
}
