//! Trotterized evolution and the evolve-reset loop.
//!
//! One evolve-reset step maps the kept register `ρ_K` (system plus any
//! persistent environment qubits) to
//! `Tr_R[U (ρ_K ⊗ ρ_R^th) U†]`, where `R` are the environment qubits that are
//! reset every step. Since `ρ_R^th` is diagonal, the step is
//! `Σ_r P_r Σ_r' K_{r'r} ρ_K K_{r'r}†` with Kraus blocks
//! `K_{r'r} = ⟨r'|U|r⟩`. The blocks are extracted once per unitary, so the
//! per-step cost is independent of the environment size.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env_model::{CouplingSet, ModeGrid, ThermalEnvState};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::hamiltonian::{self, GlobalHamiltonianTerms, SequentialTerms, SystemSpec};
use crate::qmath::{
    apply_local_left, expm_hermitian, identity, matrix_power, partial_trace_matrix, ComplexMatrix,
    DensityMatrix, StateTolerance, DEFAULT_MAX_DIM,
};

/// Kept-register dimension up to which step superoperators are cached.
const SUPEROP_MAX_KEPT_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrotterPlan {
    pub n0: usize,
}

impl TrotterPlan {
    pub fn new(n0: usize) -> Result<Self> {
        if n0 == 0 {
            return Err(invalid("n0", "Trotter subdivisions must be at least 1"));
        }
        Ok(Self { n0 })
    }
}

impl Default for TrotterPlan {
    /// 64 slices: relaxation times agree with 256 and 1024 slices to 1e-3
    /// for the two-level example.
    fn default() -> Self {
        Self { n0: 64 }
    }
}

/// One first-order slice `U_S·U_B1·U_I1⋯U_Bd·U_Id` at time `dt`; the
/// rightmost factor acts first.
pub fn trotter_slice(terms: &GlobalHamiltonianTerms, dt: f64) -> Result<ComplexMatrix> {
    let n = terms.n_qubits();
    let dim = terms.dim();
    if dim > DEFAULT_MAX_DIM {
        return Err(Error::DimensionOverflow {
            dim,
            max: DEFAULT_MAX_DIM,
        });
    }
    let mut m = identity(dim);
    for t in terms.terms().iter().rev() {
        let u = expm_hermitian(&t.op, dt)?;
        apply_local_left(&mut m, &u, &t.qubits, n)?;
    }
    Ok(m)
}

/// `[slice(τ/n0)]^{n0}`.
pub fn trotter_unitary(terms: &GlobalHamiltonianTerms, tau: f64, n0: usize) -> Result<ComplexMatrix> {
    TrotterPlan::new(n0)?;
    let slice = trotter_slice(terms, tau / n0 as f64)?;
    Ok(matrix_power(&slice, n0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Joint,
    /// Modes applied in consecutive groups of `subset_size`.
    Sequential { subset_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    DensityMatrix,
    /// Environment bit strings sampled per step; trajectory `i` uses stream
    /// `i` of a generator seeded with `seed`.
    Trajectories { count: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct EvolveResetConfig {
    pub tau: f64,
    /// Joint steps, or full sweeps in sequential mode.
    pub steps: usize,
    pub mode: Mode,
    pub backend: Backend,
    /// Environment modes that are never reset and travel with the system.
    pub persistent: Vec<usize>,
    /// Per-step environment override; step `k` (from 1) uses entry
    /// `min(k, len) - 1`.
    pub env_schedule: Option<Vec<ThermalEnvState>>,
    /// Record every `stride`-th step (the initial state is always recorded).
    pub stride: usize,
    pub exec: Execution,
}

impl EvolveResetConfig {
    pub fn new(tau: f64, steps: usize) -> Self {
        Self {
            tau,
            steps,
            mode: Mode::Joint,
            backend: Backend::DensityMatrix,
            persistent: Vec::new(),
            env_schedule: None,
            stride: 1,
            exec: Execution::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_persistent(mut self, modes: Vec<usize>) -> Self {
        self.persistent = modes;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        for (i, &k) in self.persistent.iter().enumerate() {
            if k >= n_modes {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    len: n_modes,
                });
            }
            if self.persistent[..i].contains(&k) {
                return Err(invalid("persistent", format!("mode {k} listed twice")));
            }
        }
        if let Mode::Sequential { subset_size } = self.mode {
            if !self.persistent.is_empty() {
                return Err(invalid(
                    "persistent",
                    "persistent modes are only supported in joint mode",
                ));
            }
            if subset_size == 0 || !n_modes.is_multiple_of(subset_size) {
                return Err(invalid(
                    "subset_size",
                    format!("{subset_size} does not divide the mode count {n_modes}"),
                ));
            }
        }
        if let Backend::Trajectories { count, .. } = self.backend {
            if count == 0 {
                return Err(invalid("trajectories", "count must be at least 1"));
            }
        }
        if let Some(schedule) = &self.env_schedule {
            if schedule.is_empty() {
                return Err(invalid("env_schedule", "must not be empty"));
            }
            if let Some(e) = schedule.iter().find(|e| e.len() != n_modes) {
                return Err(Error::DimensionMismatch(format!(
                    "schedule entry has {} modes, bath has {n_modes}",
                    e.len()
                )));
            }
        }
        Ok(())
    }

    fn env_at<'a>(&'a self, base: &'a ThermalEnvState, step: usize) -> &'a ThermalEnvState {
        match &self.env_schedule {
            Some(s) => &s[step.min(s.len()) - 1],
            None => base,
        }
    }

    fn env_index(&self, step: usize) -> usize {
        self.env_schedule.as_ref().map_or(0, |s| step.min(s.len()) - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub tau: f64,
    pub steps: usize,
    pub mode: Mode,
    pub backend: Backend,
    pub n0: usize,
    pub persistent: Vec<usize>,
    /// Simulated time advanced by one recorded step or sweep.
    pub time_per_step: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SimulationRecord {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    /// Reduced system state at each recorded time.
    pub system: Vec<DensityMatrix>,
    /// System plus persistent qubits; empty when nothing persists.
    pub kept: Vec<DensityMatrix>,
    pub metadata: RunMetadata,
}

impl SimulationRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn element(&self, m: usize, n: usize) -> Vec<Complex64> {
        self.system.iter().map(|r| r.matrix()[(m, n)]).collect()
    }

    pub fn population(&self, n: usize) -> Vec<f64> {
        self.element(n, n).into_iter().map(|z| z.re).collect()
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.system.last().expect("records always hold the initial state")
    }

    /// Checks every snapshot against the CPTP tolerances.
    pub fn validate(&self) -> Result<()> {
        for (rho, t) in self.system.iter().chain(&self.kept).zip(self.times.iter().cycle()) {
            rho.validate(StateTolerance::cptp())
                .map_err(|e| Error::InvalidState(format!("snapshot at t = {t}: {e}")))?;
        }
        Ok(())
    }
}

/// Which qubits survive a step and how they sit inside the full index.
#[derive(Debug, Clone)]
struct Layout {
    n_system: usize,
    n_kept: usize,
    reset_modes: Vec<usize>,
    kept_offsets: Vec<usize>,
    reset_offsets: Vec<usize>,
}

impl Layout {
    fn new(n_system: usize, n_env: usize, persistent: &[usize]) -> Self {
        let n = n_system + n_env;
        let mut persistent = persistent.to_vec();
        persistent.sort_unstable();
        let kept: Vec<usize> = (0..n_system).chain(persistent.iter().map(|k| n_system + k)).collect();
        let reset_modes: Vec<usize> = (0..n_env).filter(|k| !persistent.contains(k)).collect();
        let reset: Vec<usize> = reset_modes.iter().map(|k| n_system + k).collect();
        let offsets = |qubits: &[usize]| -> Vec<usize> {
            let k = qubits.len();
            (0..1usize << k)
                .map(|l| {
                    qubits.iter().enumerate().fold(0, |acc, (i, &q)| {
                        acc | (((l >> (k - 1 - i)) & 1) << (n - 1 - q))
                    })
                })
                .collect()
        };
        Self {
            n_system,
            n_kept: kept.len(),
            reset_modes,
            kept_offsets: offsets(&kept),
            reset_offsets: offsets(&reset),
        }
    }

    fn dk(&self) -> usize {
        self.kept_offsets.len()
    }

    fn dr(&self) -> usize {
        self.reset_offsets.len()
    }

    fn reset_probabilities(&self, env: &ThermalEnvState) -> Result<Vec<f64>> {
        Ok(env.subset(&self.reset_modes)?.basis_probabilities())
    }

    fn sample_reset_index<R: Rng>(&self, env: &ThermalEnvState, rng: &mut R) -> usize {
        self.reset_modes.iter().fold(0, |acc, &k| {
            (acc << 1) | usize::from(rng.random::<f64>() < env.excitation()[k])
        })
    }

    fn system_part(&self, kept: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.n_kept == self.n_system {
            return Ok(kept.clone());
        }
        let keep: Vec<usize> = (0..self.n_system).collect();
        partial_trace_matrix(kept, &vec![2; self.n_kept], &keep)
    }
}

fn vec_row_major(m: &ComplexMatrix) -> DVector<Complex64> {
    let n = m.nrows();
    DVector::from_fn(n * n, |i, _| m[(i / n, i % n)])
}

fn unvec_row_major(v: &DVector<Complex64>, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |i, j| v[i * n + j])
}

/// Kraus blocks of one step unitary, plus cached per-basis superoperators
/// when the kept register is small.
#[derive(Debug, Clone)]
pub struct StepChannel {
    dk: usize,
    dr: usize,
    /// `kraus[r' * dr + r] = ⟨r'|U|r⟩`
    kraus: Vec<ComplexMatrix>,
    /// `superops[r] = Σ_r' K_{r'r} ⊗ conj(K_{r'r})` on row-major vectorized states.
    superops: Option<Vec<ComplexMatrix>>,
}

impl StepChannel {
    fn from_unitary(u: &ComplexMatrix, layout: &Layout, exec: Execution) -> Self {
        let (dk, dr) = (layout.dk(), layout.dr());
        let kraus: Vec<ComplexMatrix> = (0..dr * dr)
            .map(|idx| {
                let (rp, r) = (idx / dr, idx % dr);
                let (orp, or) = (layout.reset_offsets[rp], layout.reset_offsets[r]);
                ComplexMatrix::from_fn(dk, dk, |a, b| {
                    u[(layout.kept_offsets[a] | orp, layout.kept_offsets[b] | or)]
                })
            })
            .collect();
        let superops = (dk <= SUPEROP_MAX_KEPT_DIM).then(|| {
            map_indexed(dr, exec, |r| {
                let mut s = ComplexMatrix::zeros(dk * dk, dk * dk);
                for rp in 0..dr {
                    let k = &kraus[rp * dr + r];
                    let kc = k.map(|z| z.conj());
                    s += k.kronecker(&kc);
                }
                s
            })
        });
        Self {
            dk,
            dr,
            kraus,
            superops,
        }
    }

    /// `Σ_r' K_{r'r} ρ K_{r'r}†` for reset basis state `r`.
    fn apply_basis(&self, r: usize, rho: &ComplexMatrix) -> ComplexMatrix {
        match &self.superops {
            Some(s) => unvec_row_major(&(&s[r] * vec_row_major(rho)), self.dk),
            None => {
                let mut out = ComplexMatrix::zeros(self.dk, self.dk);
                for rp in 0..self.dr {
                    let k = &self.kraus[rp * self.dr + r];
                    out += k * rho * k.adjoint();
                }
                out
            }
        }
    }

    /// Superoperator of the thermally averaged step, when cached.
    fn averaged(&self, probs: &[f64]) -> Option<ComplexMatrix> {
        let s = self.superops.as_ref()?;
        let mut avg = ComplexMatrix::zeros(self.dk * self.dk, self.dk * self.dk);
        for (sr, &p) in s.iter().zip(probs) {
            if p > 0.0 {
                avg += sr.scale(p);
            }
        }
        Some(avg)
    }

    fn apply_mixture(&self, probs: &[f64], rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dk, self.dk);
        for (r, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                out += self.apply_basis(r, rho).scale(p);
            }
        }
        out
    }
}

/// A step channel together with the mode bookkeeping it was built for.
struct StageChannel {
    layout: Layout,
    channel: StepChannel,
    /// Maps this stage's local modes to indices of the full bath.
    modes: Vec<usize>,
}

impl StageChannel {
    fn new(u: &ComplexMatrix, n_sys: usize, modes: Vec<usize>, persistent: &[usize], exec: Execution) -> Self {
        let layout = Layout::new(n_sys, modes.len(), persistent);
        let channel = StepChannel::from_unitary(u, &layout, exec);
        Self {
            layout,
            channel,
            modes,
        }
    }

    fn local_env(&self, env: &ThermalEnvState) -> Result<ThermalEnvState> {
        env.subset(&self.modes)
    }
}

/// A precomputed propagator for one sweep: a single stage in joint mode,
/// `d/d_i` stages in sequential mode.
struct Sweep {
    stages: Vec<StageChannel>,
}

impl Sweep {
    /// Averaged superoperator of the whole sweep, when every stage is cached.
    fn averaged(&self, env: &ThermalEnvState) -> Result<Option<ComplexMatrix>> {
        let mut total: Option<ComplexMatrix> = None;
        for st in &self.stages {
            let probs = st.layout.reset_probabilities(&st.local_env(env)?)?;
            let Some(s) = st.channel.averaged(&probs) else {
                return Ok(None);
            };
            total = Some(match total {
                None => s,
                Some(t) => &s * t,
            });
        }
        Ok(total)
    }

    fn apply_mixture(&self, env: &ThermalEnvState, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut rho = rho.clone();
        for st in &self.stages {
            let probs = st.layout.reset_probabilities(&st.local_env(env)?)?;
            rho = st.channel.apply_mixture(&probs, &rho);
        }
        Ok(rho)
    }

    fn apply_sampled<R: Rng>(&self, env: &ThermalEnvState, rho: &ComplexMatrix, rng: &mut R) -> Result<ComplexMatrix> {
        let mut rho = rho.clone();
        for st in &self.stages {
            let r = st.layout.sample_reset_index(&st.local_env(env)?, rng);
            rho = st.channel.apply_basis(r, &rho);
        }
        Ok(rho)
    }
}

fn check_initial(rho0: &DensityMatrix, dk: usize) -> Result<()> {
    if rho0.dim() != dk {
        return Err(Error::DimensionMismatch(format!(
            "initial state has dimension {}, kept register has {dk}",
            rho0.dim()
        )));
    }
    rho0.validate(StateTolerance::default())
}

fn propagate(
    sweep: &Sweep,
    env: &ThermalEnvState,
    rho0: &DensityMatrix,
    cfg: &EvolveResetConfig,
    metadata: RunMetadata,
) -> Result<SimulationRecord> {
    let first = &sweep.stages[0].layout;
    check_initial(rho0, first.dk())?;
    let recorded: Vec<usize> = (0..=cfg.steps)
        .filter(|s| s % cfg.stride == 0 || *s == cfg.steps)
        .collect();

    let kept_series: Vec<ComplexMatrix> = match cfg.backend {
        Backend::DensityMatrix => {
            let mut cache: Vec<Option<Option<ComplexMatrix>>> =
                vec![None; cfg.env_schedule.as_ref().map_or(1, |s| s.len())];
            let mut rho = rho0.matrix().clone();
            let mut out = vec![rho.clone()];
            for step in 1..=cfg.steps {
                let env_k = cfg.env_at(env, step);
                let slot = &mut cache[cfg.env_index(step)];
                if slot.is_none() {
                    *slot = Some(sweep.averaged(env_k)?);
                }
                rho = match slot.as_ref().expect("filled above") {
                    Some(s) => unvec_row_major(&(s * vec_row_major(&rho)), first.dk()),
                    None => sweep.apply_mixture(env_k, &rho)?,
                };
                if recorded.binary_search(&step).is_ok() {
                    out.push(rho.clone());
                }
            }
            out
        }
        Backend::Trajectories { count, seed } => {
            let runs = map_indexed(count, cfg.exec, |i| -> Result<Vec<ComplexMatrix>> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let mut rho = rho0.matrix().clone();
                let mut out = vec![rho.clone()];
                for step in 1..=cfg.steps {
                    rho = sweep.apply_sampled(cfg.env_at(env, step), &rho, &mut rng)?;
                    if recorded.binary_search(&step).is_ok() {
                        out.push(rho.clone());
                    }
                }
                Ok(out)
            });
            let mut mean: Vec<ComplexMatrix> = vec![ComplexMatrix::zeros(first.dk(), first.dk()); recorded.len()];
            for run in runs {
                for (acc, r) in mean.iter_mut().zip(run?) {
                    *acc += r;
                }
            }
            mean.into_iter().map(|m| m.unscale(count as f64)).collect()
        }
    };

    let mut system = Vec::with_capacity(kept_series.len());
    for k in &kept_series {
        system.push(DensityMatrix::from_matrix_unchecked(first.system_part(k)?));
    }
    let kept = if first.n_kept > first.n_system {
        kept_series.into_iter().map(DensityMatrix::from_matrix_unchecked).collect()
    } else {
        Vec::new()
    };
    Ok(SimulationRecord {
        times: recorded.iter().map(|&s| s as f64 * metadata.time_per_step).collect(),
        steps: recorded,
        system,
        kept,
        metadata,
    })
}

fn check_env(env: &ThermalEnvState, n_modes: usize) -> Result<()> {
    if env.len() != n_modes {
        return Err(Error::DimensionMismatch(format!(
            "environment state has {} modes, Hamiltonian has {n_modes}",
            env.len()
        )));
    }
    Ok(())
}

/// Joint-mode evolve-reset with a caller-supplied step unitary on
/// `n_system + n_env` qubits (e.g. an exact propagator).
pub fn evolve_reset_with_unitary(
    u: &ComplexMatrix,
    n_system: usize,
    env: &ThermalEnvState,
    rho0: &DensityMatrix,
    cfg: &EvolveResetConfig,
) -> Result<SimulationRecord> {
    let n_env = env.len();
    let dim = 1usize << (n_system + n_env);
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {}x{}, register has dimension {dim}",
            u.nrows(),
            u.ncols()
        )));
    }
    cfg.validate(n_env)?;
    if cfg.mode != Mode::Joint {
        return Err(invalid("mode", "a single unitary describes joint mode only"));
    }
    let sweep = Sweep {
        stages: vec![StageChannel::new(u, n_system, (0..n_env).collect(), &cfg.persistent, cfg.exec)],
    };
    let metadata = RunMetadata {
        tau: cfg.tau,
        steps: cfg.steps,
        mode: cfg.mode,
        backend: cfg.backend,
        n0: 0,
        persistent: cfg.persistent.clone(),
        time_per_step: cfg.tau,
        warnings: Vec::new(),
    };
    propagate(&sweep, env, rho0, cfg, metadata)
}

/// Joint-mode evolve-reset: every step evolves the full register for `τ`
/// under the Trotterized unitary, then resets the non-persistent modes.
pub fn evolve_reset_run(
    terms: &GlobalHamiltonianTerms,
    env: &ThermalEnvState,
    rho0: &DensityMatrix,
    cfg: &EvolveResetConfig,
    plan: TrotterPlan,
) -> Result<SimulationRecord> {
    check_env(env, terms.n_env_qubits())?;
    cfg.validate(terms.n_env_qubits())?;
    if cfg.mode != Mode::Joint {
        return Err(invalid("mode", "use sequential_run for sequential mode"));
    }
    let u = trotter_unitary(terms, cfg.tau, plan.n0)?;
    let mut rec = evolve_reset_with_unitary(&u, terms.n_system_qubits(), env, rho0, cfg)?;
    rec.metadata.n0 = plan.n0;
    Ok(rec)
}

/// Sequential-mode evolve-reset: each sweep applies every subset for `τ`
/// with its rescaled couplings, advancing simulated time by `τ·d/d_i`.
pub fn sequential_run(
    subsets: &SequentialTerms,
    env: &ThermalEnvState,
    rho0: &DensityMatrix,
    cfg: &EvolveResetConfig,
    plan: TrotterPlan,
) -> Result<SimulationRecord> {
    let d = subsets.n_modes();
    check_env(env, d)?;
    cfg.validate(d)?;
    match cfg.mode {
        Mode::Sequential { subset_size } if subset_size == subsets.subset_size() => {}
        Mode::Sequential { subset_size } => {
            return Err(invalid(
                "subset_size",
                format!(
                    "configured {subset_size}, terms were split into groups of {}",
                    subsets.subset_size()
                ),
            ))
        }
        Mode::Joint => return Err(invalid("mode", "use evolve_reset_run for joint mode")),
    }
    let n_sys = subsets.subsets[0].n_system_qubits();
    let unitaries = map_indexed(subsets.subsets.len(), Execution::Sequential, |i| {
        trotter_unitary(&subsets.subsets[i], cfg.tau, plan.n0)
    });
    let mut stages = Vec::with_capacity(unitaries.len());
    for (u, range) in unitaries.into_iter().zip(&subsets.mode_ranges) {
        stages.push(StageChannel::new(&u?, n_sys, range.clone().collect(), &[], cfg.exec));
    }
    let metadata = RunMetadata {
        tau: cfg.tau,
        steps: cfg.steps,
        mode: cfg.mode,
        backend: cfg.backend,
        n0: plan.n0,
        persistent: Vec::new(),
        time_per_step: cfg.tau * subsets.subsets.len() as f64,
        warnings: subsets.warnings.clone(),
    };
    propagate(&Sweep { stages }, env, rho0, cfg, metadata)
}

/// Builds the Hamiltonian for the configured mode and runs it.
pub fn simulate(
    sys: &SystemSpec,
    grid: &ModeGrid,
    couplings: &CouplingSet,
    env: &ThermalEnvState,
    rho0: &DensityMatrix,
    cfg: &EvolveResetConfig,
    plan: TrotterPlan,
) -> Result<SimulationRecord> {
    match cfg.mode {
        Mode::Joint => {
            let terms = hamiltonian::build_spin_bath_terms(sys, grid, couplings)?;
            let mut rec = evolve_reset_run(&terms, env, rho0, cfg, plan)?;
            rec.metadata.warnings =
                hamiltonian::markovian_warnings(couplings, 1.0, cfg.tau, grid.spacing());
            Ok(rec)
        }
        Mode::Sequential { subset_size } => {
            let subsets = hamiltonian::rescale_for_sequential(sys, grid, couplings, subset_size, cfg.tau)?;
            sequential_run(&subsets, env, rho0, cfg, plan)
        }
    }
}

/// `ρ_S ⊗ ρ_th` over the given persistent modes, in the kept-register order.
pub fn with_persistent_ancillas(
    rho_s: &DensityMatrix,
    env: &ThermalEnvState,
    persistent: &[usize],
) -> Result<DensityMatrix> {
    let mut modes = persistent.to_vec();
    modes.sort_unstable();
    let anc = crate::env_model::thermal_density(&env.subset(&modes)?)?;
    rho_s.tensor(&anc)
}

/// One step done the long way: build `ρ_K ⊗ ρ_R^th` on the full register,
/// conjugate by `U`, and trace out the reset modes.
pub fn evolve_reset_step_literal(
    u: &ComplexMatrix,
    n_system: usize,
    env: &ThermalEnvState,
    persistent: &[usize],
    rho_kept: &DensityMatrix,
) -> Result<DensityMatrix> {
    let n_env = env.len();
    let n = n_system + n_env;
    let layout = Layout::new(n_system, n_env, persistent);
    check_initial(rho_kept, layout.dk())?;
    let probs = layout.reset_probabilities(env)?;
    let dim = 1usize << n;
    let mut full = ComplexMatrix::zeros(dim, dim);
    for (r, &p) in probs.iter().enumerate() {
        let or = layout.reset_offsets[r];
        for a in 0..layout.dk() {
            for b in 0..layout.dk() {
                full[(layout.kept_offsets[a] | or, layout.kept_offsets[b] | or)] =
                    rho_kept.matrix()[(a, b)] * p;
            }
        }
    }
    let evolved = u * full * u.adjoint();
    let mut keep: Vec<usize> = (0..n_system).chain(persistent.iter().map(|k| n_system + k)).collect();
    keep.sort_unstable();
    Ok(DensityMatrix::from_matrix_unchecked(partial_trace_matrix(
        &evolved,
        &vec![2; n],
        &keep,
    )?))
}
