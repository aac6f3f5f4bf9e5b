//! Experiments and acceptance checks shared by the test suite and the CLI.
//!
//! Relaxation protocol: from `|e⟩`, fit `ρ_ee(t) = a + b·e^{-t/T1}` with a
//! free asymptote; from `(|g⟩+|e⟩)/√2`, fit `|ρ_ge(t)| = b·e^{-t/T2}`.

use std::fmt;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{self, Backend, EvolveResetConfig, Mode, SimulationRecord, TrotterPlan};
use crate::env_model::{
    compute_couplings, effective_spectral_density, make_grid, thermal_env, CouplingMethod, CouplingSet, ModeGrid,
    SpectralDensity,
};
use crate::error::{invalid, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::hamiltonian::{rescale_for_sequential, GlobalHamiltonianTerms, LocalTerm, SystemSpec, TermKind};
use crate::noise::{self, Fluctuator, SpectrumOptions};
use crate::oracle::{self, fit_exponential, FitResult};
use crate::qmath::{spectral_norm, ComplexMatrix, DensityMatrix, QuantumState, StateTolerance};
use crate::readout::{self, ReadoutMode};
use crate::Complex64;

/// Two-level system in an eight-mode Ohmic spin bath.
#[derive(Debug, Clone)]
pub struct WorkedExample {
    pub omega_s: f64,
    pub density: SpectralDensity,
    pub beta: f64,
    pub grid: ModeGrid,
    pub tau: f64,
}

impl WorkedExample {
    /// `ω_s = 1`, `α = 2e-4`, `ω_c = 100`, `β = 1`, `ω_k = 0.80 + 0.05k` for
    /// `k = 0..8`, `τ = 30`.
    pub fn standard() -> Self {
        Self {
            omega_s: 1.0,
            density: SpectralDensity::Ohmic {
                alpha: 2e-4,
                omega_c: 100.0,
            },
            beta: 1.0,
            grid: make_grid(0.80, 0.05, 8).expect("valid grid"),
            tau: 30.0,
        }
    }

    /// `T1 = 2/J(ω_s)`.
    pub fn t1_exact(&self) -> Result<f64> {
        Ok(2.0 / self.density.value(self.omega_s)?)
    }

    pub fn couplings(&self, method: &CouplingMethod) -> Result<CouplingSet> {
        compute_couplings(&self.density, &self.grid, method)
    }
}

#[derive(Debug, Clone)]
pub struct RelaxationExperiment {
    pub omega_s: f64,
    pub beta: f64,
    pub grid: ModeGrid,
    pub couplings: CouplingSet,
    pub tau: f64,
    pub mode: Mode,
    pub backend: Backend,
    /// Simulated time covered by both runs.
    pub horizon: f64,
    pub stride: usize,
    pub plan: TrotterPlan,
    pub exec: Execution,
}

impl RelaxationExperiment {
    pub fn time_per_step(&self) -> f64 {
        match self.mode {
            Mode::Joint => self.tau,
            Mode::Sequential { subset_size } => self.tau * (self.grid.len() / subset_size.max(1)) as f64,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.time_per_step()).ceil().max(4.0) as usize
    }

    fn config(&self) -> EvolveResetConfig {
        EvolveResetConfig::new(self.tau, self.steps())
            .with_mode(self.mode)
            .with_backend(self.backend)
            .with_stride(self.stride)
            .with_exec(self.exec)
    }
}

#[derive(Debug, Clone)]
pub struct RelaxationOutcome {
    pub relax: SimulationRecord,
    pub dephase: SimulationRecord,
    pub t1_fit: FitResult,
    pub t2_fit: FitResult,
}

impl RelaxationOutcome {
    pub fn t1(&self) -> f64 {
        self.t1_fit.time_constant()
    }

    pub fn t2(&self) -> f64 {
        self.t2_fit.time_constant()
    }

    pub fn rho_ee(&self) -> Vec<f64> {
        self.relax.population(1)
    }

    pub fn coherence(&self) -> Vec<f64> {
        self.dephase.element(0, 1).iter().map(|z| z.norm()).collect()
    }
}

pub fn excited_state() -> DensityMatrix {
    DensityMatrix::from_pure(&QuantumState::basis(2, 1).expect("2-dim basis"))
}

pub fn plus_state() -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::from_pure(
        &QuantumState::new(vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).expect("normalized"),
    )
}

/// Runs the `|e⟩` and `|+⟩` evolutions and fits `T1` and `T2`.
pub fn run_relaxation(exp: &RelaxationExperiment) -> Result<RelaxationOutcome> {
    let sys = SystemSpec::two_level(exp.omega_s);
    let env = thermal_env(&exp.grid, exp.beta)?;
    let cfg = exp.config();
    let relax = engine::simulate(&sys, &exp.grid, &exp.couplings, &env, &excited_state(), &cfg, exp.plan)?;
    let dephase = engine::simulate(&sys, &exp.grid, &exp.couplings, &env, &plus_state(), &cfg, exp.plan)?;
    let t1_fit = fit_exponential(&relax.times, &relax.population(1), true)?;
    let coh: Vec<f64> = dephase.element(0, 1).iter().map(|z| z.norm()).collect();
    let t2_fit = fit_exponential(&dephase.times, &coh, false)?;
    Ok(RelaxationOutcome {
        relax,
        dephase,
        t1_fit,
        t2_fit,
    })
}

/// Relaxation rate `1/T1` from the `|e⟩` run alone.
pub fn relaxation_rate(exp: &RelaxationExperiment) -> Result<(f64, SimulationRecord)> {
    let sys = SystemSpec::two_level(exp.omega_s);
    let env = thermal_env(&exp.grid, exp.beta)?;
    let rec = engine::simulate(&sys, &exp.grid, &exp.couplings, &env, &excited_state(), &exp.config(), exp.plan)?;
    let fit = fit_exponential(&rec.times, &rec.population(1), true)?;
    Ok((fit.rate, rec))
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

/// Collects CPTP checks over every snapshot produced during a suite run.
#[derive(Debug, Default)]
pub struct CptpLedger {
    inner: Mutex<(usize, Vec<String>)>,
}

impl CptpLedger {
    pub fn check(&self, label: &str, states: &[DensityMatrix]) {
        let mut g = self.inner.lock().expect("ledger lock");
        for (i, rho) in states.iter().enumerate() {
            g.0 += 1;
            if let Err(e) = rho.validate(StateTolerance::cptp()) {
                g.1.push(format!("{label} snapshot {i}: {e}"));
            }
        }
    }

    pub fn check_record(&self, label: &str, rec: &SimulationRecord) {
        self.check(label, &rec.system);
        self.check(label, &rec.kept);
    }

    pub fn snapshots(&self) -> usize {
        self.inner.lock().expect("ledger lock").0
    }

    pub fn failures(&self) -> Vec<String> {
        self.inner.lock().expect("ledger lock").1.clone()
    }
}

fn report(id: u8, name: &'static str, result: Result<(bool, String)>) -> CriterionReport {
    match result {
        Ok((passed, detail)) => CriterionReport {
            id,
            name,
            passed,
            detail,
        },
        Err(e) => CriterionReport {
            id,
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn worked_experiment(ex: &WorkedExample, couplings: CouplingSet, mode: Mode, exec: Execution) -> Result<RelaxationExperiment> {
    Ok(RelaxationExperiment {
        omega_s: ex.omega_s,
        beta: ex.beta,
        grid: ex.grid.clone(),
        couplings,
        tau: ex.tau,
        mode,
        backend: Backend::DensityMatrix,
        horizon: 3.0 * ex.t1_exact()?,
        stride: 1,
        plan: TrotterPlan::default(),
        exec,
    })
}

pub const WORKED_T1_BAND: (f64, f64) = (0.95, 1.05);
pub const WORKED_T2_BAND: (f64, f64) = (1.90, 2.10);

/// Sequential runs with subsets of 1, 2, 4 and 8 modes, improved couplings.
pub fn criterion_worked_example(exec: Execution, ledger: &CptpLedger) -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let ex = WorkedExample::standard();
        let t1_exact = ex.t1_exact()?;
        let c = ex.couplings(&CouplingMethod::ImprovedNonNegative { tau: ex.tau })?;
        let mut ok = true;
        let mut parts = Vec::new();
        for d_i in [1, 2, 4, 8] {
            let exp = worked_experiment(&ex, c.clone(), Mode::Sequential { subset_size: d_i }, exec)?;
            let out = run_relaxation(&exp)?;
            ledger.check_record("worked relax", &out.relax);
            ledger.check_record("worked dephase", &out.dephase);
            let (r1, r2) = (out.t1() / t1_exact, out.t2() / t1_exact);
            ok &= (WORKED_T1_BAND.0..=WORKED_T1_BAND.1).contains(&r1);
            ok &= (WORKED_T2_BAND.0..=WORKED_T2_BAND.1).contains(&r2);
            parts.push(format!("d_i={d_i}: T1/T1ex={r1:.4} T2/T1ex={r2:.4}"));
        }
        Ok((ok, parts.join("; ")))
    };
    report(1, "worked-example relaxation times", run())
}

pub const DISCREPANCY_SCAN: [f64; 6] = [0.85, 0.90, 0.95, 1.00, 1.05, 1.10];

/// Naive couplings: simulated `1/T1` tracks `½J_eff(ω_s)`, not `½J(ω_s)`.
pub fn criterion_naive_discrepancy(exec: Execution, ledger: &CptpLedger) -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let ex = WorkedExample::standard();
        let c = ex.couplings(&CouplingMethod::Naive)?;
        let rows = try_map_indexed(DISCREPANCY_SCAN.len(), Execution::Sequential, |i| -> Result<_> {
            let w = DISCREPANCY_SCAN[i];
            let mut exp = worked_experiment(&ex, c.clone(), Mode::Joint, exec)?;
            exp.omega_s = w;
            let (rate, rec) = relaxation_rate(&exp)?;
            ledger.check_record("naive scan", &rec);
            let eff = 0.5 * effective_spectral_density(&c, &ex.grid, ex.tau, w);
            let smooth = 0.5 * ex.density.value(w)?;
            Ok((w, rate, eff, smooth))
        })?;
        let mut ok = true;
        let mut worst = 0.0f64;
        let mut center = String::new();
        for &(w, rate, eff, smooth) in &rows {
            let dev = (rate / eff - 1.0).abs();
            worst = worst.max(dev);
            ok &= dev <= 0.10;
            // the offset from the smooth rate is the one J_eff/J predicts
            ok &= ((rate / smooth) / (eff / smooth) - 1.0).abs() <= 0.10;
            if (w - 1.0).abs() < 1e-12 {
                center = format!(
                    "at ω_s=1: sim/½J={:.4}, J_eff/J={:.4}",
                    rate / smooth,
                    eff / smooth
                );
                ok &= (eff / smooth - 1.0).abs() > 0.05;
            }
        }
        Ok((ok, format!("max |sim/½J_eff - 1| = {worst:.4} over {} ω_s; {center}", rows.len())))
    };
    report(2, "naive-coupling discrepancy", run())
}

/// Improved couplings recover `½J(1)` at `ω_s = 1`.
pub fn criterion_improved_fix(exec: Execution, ledger: &CptpLedger) -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let ex = WorkedExample::standard();
        let c = ex.couplings(&CouplingMethod::ImprovedNonNegative { tau: ex.tau })?;
        let exp = worked_experiment(&ex, c, Mode::Joint, exec)?;
        let (rate, rec) = relaxation_rate(&exp)?;
        ledger.check_record("improved joint", &rec);
        let exact = 0.5 * ex.density.value(1.0)?;
        let dev = rate / exact - 1.0;
        Ok((
            dev.abs() <= 0.05,
            format!("1/T1 = {rate:.4e}, ½J(1) = {exact:.4e}, deviation {:+.2}%", 100.0 * dev),
        ))
    };
    report(3, "improved couplings at ω_s = 1", run())
}

/// Single resonant mode, cold bath, fixed `Γ`, `τ` at zeros of the
/// counter-rotating term. Returns `(τ, max |ρ_ee^sim - ρ_ee^Lindblad|)`.
pub fn oracle_deviation_sweep(gamma: f64, taus: &[f64], ledger: &CptpLedger) -> Result<Vec<(f64, f64)>> {
    let omega = 1.0;
    let grid = make_grid(omega, 1.0, 1)?;
    let env = thermal_env(&grid, f64::INFINITY)?;
    let model = oracle::thermal_two_level_model(omega, gamma, f64::INFINITY)?;
    let mut out = Vec::new();
    for &tau in taus {
        // resonant kernel peak is τ/(2π), so Γ = ½J_eff(ω) = c²τ/4
        let c = CouplingSet::new(vec![(4.0 * gamma / tau).sqrt()], CouplingMethod::Naive)?;
        let steps = (3.0 / gamma / tau).ceil() as usize;
        let cfg = EvolveResetConfig::new(tau, steps);
        let rec = engine::simulate(
            &SystemSpec::two_level(omega),
            &grid,
            &c,
            &env,
            &excited_state(),
            &cfg,
            TrotterPlan::default(),
        )?;
        ledger.check_record("oracle sweep", &rec);
        let reference = oracle::lindblad_integrate(&model, &excited_state(), &rec.times)?;
        ledger.check("lindblad", &reference);
        let dev = rec
            .population(1)
            .iter()
            .zip(oracle::populations(&reference, 1))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.push((tau, dev));
    }
    Ok(out)
}

pub fn criterion_oracle_equivalence(ledger: &CptpLedger) -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let pi = std::f64::consts::PI;
        let taus = [pi, 2.0 * pi, 4.0 * pi, 8.0 * pi];
        let sweep = oracle_deviation_sweep(1e-3, &taus, ledger)?;
        let devs: Vec<f64> = sweep.iter().map(|p| p.1).collect();
        let within = devs.iter().all(|&d| d <= 0.01);
        let shrinking = devs.windows(2).all(|w| w[0] < w[1]);
        let slope = oracle::loglog_slope(&taus, &devs)?;
        let first_order = (0.7..=1.3).contains(&slope);
        let listing: Vec<String> = sweep.iter().map(|(t, d)| format!("τ={:.2}: {d:.2e}", t)).collect();
        Ok((
            within && shrinking && first_order,
            format!("{}; log-log slope {slope:.2}", listing.join(", ")),
        ))
    };
    report(4, "Lindblad oracle equivalence", run())
}

/// One system qubit and two environment qubits with random Hermitian terms.
pub fn random_three_qubit_terms(seed: u64) -> Result<GlobalHamiltonianTerms> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut herm = |k: usize| {
        let n = 1 << k;
        let a = ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&a + a.adjoint()).scale(0.5)
    };
    let terms = vec![
        LocalTerm { kind: TermKind::System, op: herm(1), qubits: vec![0] },
        LocalTerm { kind: TermKind::Bath(0), op: herm(1), qubits: vec![1] },
        LocalTerm { kind: TermKind::Interaction(0), op: herm(2), qubits: vec![0, 1] },
        LocalTerm { kind: TermKind::Bath(1), op: herm(1), qubits: vec![2] },
        LocalTerm { kind: TermKind::Interaction(1), op: herm(2), qubits: vec![0, 2] },
    ];
    GlobalHamiltonianTerms::new(1, 2, terms)
}

pub fn trotter_errors(terms: &GlobalHamiltonianTerms, tau: f64, n0s: &[usize]) -> Result<Vec<f64>> {
    let exact = oracle::exact_unitary_reference(terms, tau)?;
    n0s.iter()
        .map(|&n0| Ok(spectral_norm(&(&exact - engine::trotter_unitary(terms, tau, n0)?))))
        .collect()
}

pub fn criterion_trotter_convergence() -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let terms = random_three_qubit_terms(2024)?;
        let n0s = [16, 32, 64, 128];
        let errs = trotter_errors(&terms, 1.0, &n0s)?;
        let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
        let ok = ratios.iter().all(|r| (1.7..=2.3).contains(r));
        let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
        Ok((ok, format!("n0 = {n0s:?}, error ratios per doubling [{}]", shown.join(", "))))
    };
    report(5, "Trotter convergence", run())
}

/// Difference in `ρ_ee` between two joint steps and one single-mode
/// sequential sweep. Two modes at `1 ± detuning` with per-mode rates
/// `gammas` held fixed through `c_k² = 4Γ_k/τ`. Equal rates cancel the `τ²`
/// term exactly; unequal rates leave `(Γ_1 - Γ_2)²τ²/3` at zero temperature.
pub fn sequential_error_sweep(gammas: [f64; 2], detuning: f64, taus: &[f64], ledger: &CptpLedger) -> Result<Vec<(f64, f64)>> {
    let omega_s = 1.0;
    let grid = make_grid(omega_s - detuning, 2.0 * detuning, 2)?;
    let env = thermal_env(&grid, 1.0)?;
    let sys = SystemSpec::two_level(omega_s);
    let plan = TrotterPlan::new(1 << 16)?;
    let mut out = Vec::new();
    for &tau in taus {
        let c = CouplingSet::new(gammas.iter().map(|g| (4.0 * g / tau).sqrt()).collect(), CouplingMethod::Naive)?;
        let joint_cfg = EvolveResetConfig::new(tau, 2);
        let joint = engine::simulate(&sys, &grid, &c, &env, &excited_state(), &joint_cfg, plan)?;
        let seq_cfg = EvolveResetConfig::new(tau, 1).with_mode(Mode::Sequential { subset_size: 1 });
        let subsets = rescale_for_sequential(&sys, &grid, &c, 1, tau)?;
        let seq = engine::sequential_run(&subsets, &env, &excited_state(), &seq_cfg, plan)?;
        ledger.check_record("joint", &joint);
        ledger.check_record("sequential", &seq);
        let diff = (joint.population(1)[2] - seq.population(1)[1]).abs();
        out.push((tau, diff));
    }
    Ok(out)
}

pub fn criterion_sequential_scaling(ledger: &CptpLedger) -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let pi = std::f64::consts::PI;
        let taus: Vec<f64> = [10.0, 20.0, 40.0, 100.0].iter().map(|n| n * pi).collect();
        let sweep = sequential_error_sweep([1e-5, 4e-5], 1e-4, &taus, ledger)?;
        let diffs: Vec<f64> = sweep.iter().map(|p| p.1).collect();
        let slope = oracle::loglog_slope(&taus, &diffs)?;
        Ok((
            (slope - 2.0).abs() <= 0.3,
            format!(
                "τ ∈ [{:.2}, {:.2}], differences {:.2e}..{:.2e}, log-log slope {slope:.3}",
                taus[0],
                taus[taus.len() - 1],
                diffs[0],
                diffs[diffs.len() - 1]
            ),
        ))
    };
    report(6, "sequential-channel error scaling", run())
}

/// Worst relative deviation of an estimated single-fluctuator spectrum
/// from its Lorentzian over `[γ/10, 10γ]`.
pub fn telegraph_spectrum_deviation(f: Fluctuator, duration: f64, dt: f64, max_lag: usize, seed: u64) -> Result<f64> {
    let signal = noise::generate_telegraph(&[f], duration, dt, seed)?;
    let omegas: Vec<f64> = (0..=20).map(|i| f.gamma * 10f64.powf(-1.0 + 0.1 * i as f64)).collect();
    let est = noise::estimate_spectrum(
        &signal,
        &SpectrumOptions {
            max_lag: Some(max_lag),
            omegas: Some(omegas.clone()),
        },
    )?;
    omegas
        .iter()
        .zip(&est.values)
        .map(|(&w, s)| Ok((s / noise::lorentzian_spectrum(&f, w)? - 1.0).abs()))
        .try_fold(0.0f64, |acc, d: Result<f64>| Ok(acc.max(d?)))
}

pub fn criterion_telegraph_spectra() -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let f = Fluctuator::new(1.0, 1.0)?;
        let worst = telegraph_spectrum_deviation(f, 2e5, 0.05, 1000, 7)?;
        let fs = noise::sample_one_over_f(1e-3, 1e1, 200, 0.01, 11)?;
        let omegas: Vec<f64> = (0..=40).map(|i| 10f64.powf(-2.0 + 0.05 * i as f64)).collect();
        let s = omegas
            .iter()
            .map(|&w| noise::ensemble_spectrum(&fs, w))
            .collect::<Result<Vec<_>>>()?;
        let slope = oracle::loglog_slope(&omegas, &s)?;
        Ok((
            worst <= 0.10 && (slope + 1.0).abs() <= 0.1,
            format!(
                "single fluctuator: worst deviation {:.1}% over [γ/10, 10γ]; 200-fluctuator slope {slope:.3}",
                100.0 * worst
            ),
        ))
    };
    report(7, "telegraph noise spectra", run())
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> Result<DensityMatrix> {
    let a = ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr)
}

/// rms error of `Re ρ_01` reconstructed with `shots` per SWAP test.
pub fn shot_standard_error(rho: &DensityMatrix, shots: u64, repeats: u64) -> Result<f64> {
    let exact = readout::matrix_element(rho, 0, 1)?.re;
    let mut acc = 0.0;
    for k in 0..repeats {
        let est = readout::reconstruct_element(rho, 0, 1, ReadoutMode::Shots { count: shots, seed: 1000 + 7 * k })?;
        acc += (est.re - exact).powi(2);
    }
    Ok((acc / repeats as f64).sqrt())
}

pub fn criterion_estimator_identities(ledger: &CptpLedger) -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        for i in 0..100 {
            let n = 1 << (1 + i % 3);
            let rho = random_density(&mut rng, n)?;
            ledger.check("random state", std::slice::from_ref(&rho));
            for m in 0..n {
                for k in 0..n {
                    let r = readout::reconstruct_element(&rho, m, k, ReadoutMode::Expectation)?;
                    worst = worst.max((r - readout::matrix_element(&rho, m, k)?).norm());
                }
            }
        }
        let rho = random_density(&mut rng, 2)?;
        let (e1, e2) = (shot_standard_error(&rho, 100, 400)?, shot_standard_error(&rho, 1600, 400)?);
        let ratio = e1 / e2;
        Ok((
            worst <= 1e-12 && (ratio / 4.0 - 1.0).abs() <= 0.2,
            format!("max reconstruction error {worst:.1e}; error ratio for 16× shots {ratio:.3} (ideal 4)"),
        ))
    };
    report(8, "estimator identities", run())
}

pub fn criterion_cptp(ledger: &CptpLedger) -> CriterionReport {
    let failures = ledger.failures();
    let n = ledger.snapshots();
    CriterionReport {
        id: 9,
        name: "CPTP invariants",
        passed: failures.is_empty() && n > 0,
        detail: if failures.is_empty() {
            format!("{n} snapshots within 1e-9 / 1e-9 / -1e-7")
        } else {
            format!("{} of {n} snapshots failed, first: {}", failures.len(), failures[0])
        },
    }
}

pub fn criterion_resources() -> CriterionReport {
    let run = || -> Result<(bool, String)> {
        let mut ok = true;
        let mut checked = 0;
        for n in 1..=64u64 {
            let s = (n as f64).log2().ceil() as u32;
            for d in 1..=16u64 {
                for di in (1..=d).filter(|di| d % di == 0) {
                    let r = oracle::resource_estimate(n, d, Some(di), 10, 4)?;
                    let a2 = r.approach2.as_ref().ok_or_else(|| invalid("d_i", "missing"))?;
                    ok &= r.approach1_qubits == 2 * s + d as u32 + 1;
                    ok &= a2.qubits == 2 * s + di as u32 + 1;
                    ok &= r.reduced_qubits == (s + d as u32).max(2 * s + 1);
                    checked += 1;
                }
            }
        }
        let a = oracle::resource_estimate(2, 8, None, 100, 10)?;
        let b = oracle::resource_estimate(2, 8, Some(1), 100, 10)?;
        let b_qubits = b.approach2.map(|x| x.qubits).unwrap_or(0);
        ok &= a.approach1_qubits == 11 && b_qubits == 4;
        Ok((
            ok,
            format!(
                "{checked} (N, d, d_i) combinations; N=2,d=8 → {} qubits; N=2,d_i=1 → {b_qubits} qubits",
                a.approach1_qubits
            ),
        ))
    };
    report(10, "resource formulas", run())
}

/// All ten criteria in order; the CPTP check covers every run before it.
pub fn run_all(exec: Execution) -> Vec<CriterionReport> {
    let ledger = CptpLedger::default();
    let mut out = vec![
        criterion_worked_example(exec, &ledger),
        criterion_naive_discrepancy(exec, &ledger),
        criterion_improved_fix(exec, &ledger),
        criterion_oracle_equivalence(&ledger),
        criterion_trotter_convergence(),
        criterion_sequential_scaling(&ledger),
        criterion_telegraph_spectra(),
        criterion_estimator_identities(&ledger),
    ];
    out.push(criterion_cptp(&ledger));
    out.push(criterion_resources());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_line_carries_verdict() {
        let r = CriterionReport { id: 3, name: "x", passed: false, detail: "d".into() };
        assert_eq!(r.to_string(), "[FAIL]  3. x: d");
    }

    #[test]
    fn ledger_flags_non_physical_snapshot() {
        let ledger = CptpLedger::default();
        let bad = DensityMatrix::from_matrix_unchecked(ComplexMatrix::from_diagonal_element(2, 2, Complex64::new(0.7, 0.0)));
        ledger.check("ok", &[excited_state(), plus_state()]);
        assert!(ledger.failures().is_empty());
        ledger.check("bad", &[bad]);
        assert_eq!(ledger.snapshots(), 3);
        assert_eq!(ledger.failures().len(), 1);
    }

    #[test]
    fn worked_example_t1() {
        // J(1) = 2π·2e-4·e^{-1/100}, T1 ≈ 1607.6
        let t1 = WorkedExample::standard().t1_exact().unwrap();
        assert!((t1 - 1.0 / (std::f64::consts::PI * 2e-4 * (-0.01f64).exp())).abs() < 1e-9);
        assert!((t1 - 1607.6).abs() < 0.1);
    }

    #[test]
    fn random_model_is_deterministic() {
        let a = random_three_qubit_terms(5).unwrap().total().unwrap();
        let b = random_three_qubit_terms(5).unwrap().total().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.nrows(), 8);
    }
}
