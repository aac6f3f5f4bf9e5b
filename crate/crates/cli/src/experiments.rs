//! Subcommand bodies. Each returns the data files it produced and a JSON
//! summary; writing them is left to the caller.

use std::fmt::Write as _;

use serde_json::{json, Value};

use oqsim_core::engine::{Backend, Mode, SimulationRecord, TrotterPlan};
use oqsim_core::env_model::{effective_spectral_density, make_grid, CouplingSet};
use oqsim_core::exec::{try_map_indexed, Execution};
use oqsim_core::noise::{self, DephasingConfig, Fluctuator, NoiseChannel, SpectrumOptions};
use oqsim_core::oracle::{self, fit_exponential, FitResult};
use oqsim_core::qmath::{DensityMatrix, Pauli, StateTolerance};
use oqsim_core::readout::{self, ReadoutMode};
use oqsim_core::verify::{self, RelaxationExperiment};
use oqsim_core::Error;

use crate::config::{BackendKind, Config, ModeKind, ReadoutKind};

/// Why a subcommand stopped.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2: a configuration value the core rejected.
    Schema(String),
    /// Exit 3: the computation itself failed.
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::OutOfDomain { .. } | Error::Parse { .. } | Error::Io(_) => {
                Failure::Schema(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

pub struct Outcome {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub summary: Value,
    /// Console report.
    pub report: String,
    pub accepted: bool,
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.12e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn fit_json(f: &FitResult) -> Value {
    json!({
        "rate": f.rate,
        "time_constant": f.time_constant(),
        "asymptote": f.asymptote,
        "amplitude": f.amplitude,
        "residual": f.residual,
    })
}

fn check_physical(label: &str, states: &[DensityMatrix]) -> Result<(), Failure> {
    for (i, rho) in states.iter().enumerate() {
        rho.validate(StateTolerance::cptp())
            .map_err(|e| Failure::Numerical(format!("{label} snapshot {i}: {e}")))?;
    }
    Ok(())
}

fn check_record(label: &str, rec: &SimulationRecord) -> Result<(), Failure> {
    check_physical(label, &rec.system)?;
    check_physical(label, &rec.kept)
}

fn experiment(cfg: &Config, omega_s: f64, exec: Execution) -> Result<RelaxationExperiment, Failure> {
    let b = &cfg.bath;
    let e = &cfg.evolution;
    let j = cfg.spectral_density()?;
    let grid = make_grid(b.omega_min, b.spacing, b.modes)?;
    let couplings = oqsim_core::env_model::compute_couplings(&j, &grid, &cfg.coupling_method())?;
    let mode = match e.mode {
        ModeKind::Joint => Mode::Joint,
        ModeKind::Sequential => Mode::Sequential {
            subset_size: e.subset_size,
        },
    };
    let backend = match e.backend {
        BackendKind::DensityMatrix => Backend::DensityMatrix,
        BackendKind::Trajectories => Backend::Trajectories {
            count: e.trajectories,
            seed: e.seed,
        },
    };
    let mut exp = RelaxationExperiment {
        omega_s,
        beta: b.beta,
        grid,
        couplings,
        tau: e.tau,
        mode,
        backend,
        horizon: 0.0,
        stride: e.stride,
        plan: TrotterPlan::new(e.n0)?,
        exec,
    };
    exp.horizon = match e.steps {
        Some(m) => m as f64 * exp.time_per_step(),
        None => e.horizon_t1 * 2.0 / j.value(omega_s)?,
    };
    Ok(exp)
}

fn readout_mode(cfg: &Config, probe: u64) -> ReadoutMode {
    match cfg.readout.mode {
        ReadoutKind::Expectation => ReadoutMode::Expectation,
        ReadoutKind::Shots => ReadoutMode::Shots {
            count: cfg.readout.shots,
            // four probes per element, disjoint across snapshots
            seed: cfg.evolution.seed.wrapping_add(4 * probe),
        },
    }
}

fn couplings_json(c: &CouplingSet) -> Value {
    json!({ "values": c.values(), "diagnostics": c.diagnostics() })
}

pub fn relax(cfg: &Config, exec: Execution) -> Result<Outcome, Failure> {
    let omega_s = cfg.system.omega_s;
    let exp = experiment(cfg, omega_s, exec)?;
    let out = verify::run_relaxation(&exp)?;
    check_record("relaxation", &out.relax)?;
    check_record("dephasing", &out.dephase)?;

    let j = cfg.spectral_density()?;
    let gamma = 0.5 * j.value(omega_s)?;
    let t1_exact = 1.0 / gamma;
    let model = oracle::thermal_two_level_model(omega_s, gamma, cfg.bath.beta)?;
    let relax_ref = oracle::lindblad_integrate(&model, &verify::excited_state(), &out.relax.times)?;
    let dephase_ref = oracle::lindblad_integrate(&model, &verify::plus_state(), &out.dephase.times)?;

    let n = out.relax.len();
    let mut ee_rows = Vec::with_capacity(n);
    for (i, rho) in out.relax.system.iter().enumerate() {
        let read = readout::reconstruct_element(rho, 1, 1, readout_mode(cfg, i as u64))?;
        ee_rows.push(vec![
            out.relax.times[i],
            rho.matrix()[(1, 1)].re,
            relax_ref[i].matrix()[(1, 1)].re,
            read.re,
            out.t1_fit.eval(out.relax.times[i]),
        ]);
    }
    let mut ge_rows = Vec::with_capacity(out.dephase.len());
    for (i, rho) in out.dephase.system.iter().enumerate() {
        let read = readout::reconstruct_element(rho, 0, 1, readout_mode(cfg, (n + i) as u64))?;
        ge_rows.push(vec![
            out.dephase.times[i],
            rho.matrix()[(0, 1)].norm(),
            dephase_ref[i].matrix()[(0, 1)].norm(),
            read.norm(),
            out.t2_fit.eval(out.dephase.times[i]),
        ]);
    }

    let (r1, r2) = (out.t1() / t1_exact, out.t2() / t1_exact);
    let md = &out.relax.metadata;
    let summary = json!({
        "omega_s": omega_s,
        "t1": out.t1(),
        "t2": out.t2(),
        "t1_exact": t1_exact,
        "t1_ratio": r1,
        "t2_ratio": r2,
        "fit_t1": fit_json(&out.t1_fit),
        "fit_t2": fit_json(&out.t2_fit),
        "steps": md.steps,
        "time_per_step": md.time_per_step,
        "n0": md.n0,
        "couplings": couplings_json(&exp.couplings),
        "warnings": md.warnings,
    });
    let prefix = &cfg.output.prefix;
    Ok(Outcome {
        files: vec![
            (
                format!("{prefix}relax_rho_ee.csv"),
                csv(&["t", "rho_ee", "rho_ee_oracle", "rho_ee_readout", "rho_ee_fit"], ee_rows),
            ),
            (
                format!("{prefix}relax_rho_ge.csv"),
                csv(&["t", "rho_ge_abs", "rho_ge_abs_oracle", "rho_ge_abs_readout", "rho_ge_abs_fit"], ge_rows),
            ),
        ],
        summary,
        report: format!("T1 = {:.2} (T1/T1_exact = {r1:.4}), T2 = {:.2} (T2/T1_exact = {r2:.4})", out.t1(), out.t2()),
        accepted: true,
    })
}

pub fn rate_scan(cfg: &Config, exec: Execution) -> Result<Outcome, Failure> {
    let s = &cfg.system;
    let n = s.scan_points;
    let omegas: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                s.scan_min
            } else {
                s.scan_min + (s.scan_max - s.scan_min) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let j = cfg.spectral_density()?;
    // the engine propagates one density matrix sequentially; fan out over ω_s
    let rows = try_map_indexed(n, exec, |i| -> Result<Vec<f64>, Failure> {
        let exp = experiment(cfg, omegas[i], Execution::Sequential)?;
        let (rate, rec) = verify::relaxation_rate(&exp)?;
        check_record("rate scan", &rec)?;
        let eff = 0.5 * effective_spectral_density(&exp.couplings, &exp.grid, exp.tau, omegas[i]);
        Ok(vec![omegas[i], rate, eff, 0.5 * j.value(omegas[i])?])
    })?;
    let worst = |k: usize| rows.iter().map(|r| (r[1] / r[k] - 1.0).abs()).fold(0.0, f64::max);
    let (dev_eff, dev_exact) = (worst(2), worst(3));
    let summary = json!({
        "omega_s": omegas,
        "rate_sim": rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
        "rate_eff": rows.iter().map(|r| r[2]).collect::<Vec<_>>(),
        "rate_exact": rows.iter().map(|r| r[3]).collect::<Vec<_>>(),
        "max_rel_dev_from_eff": dev_eff,
        "max_rel_dev_from_exact": dev_exact,
    });
    Ok(Outcome {
        files: vec![(
            format!("{}rate_scan.csv", cfg.output.prefix),
            csv(&["omega_s", "rate_sim", "rate_eff", "rate_exact"], rows),
        )],
        summary,
        report: format!(
            "{n} points: max |sim/½J_eff - 1| = {dev_eff:.4}, max |sim/½J - 1| = {dev_exact:.4}"
        ),
        accepted: true,
    })
}

fn fluctuators(cfg: &Config) -> Result<Vec<Fluctuator>, Failure> {
    let n = &cfg.noise;
    if n.fluctuators.is_empty() {
        Ok(noise::sample_one_over_f(n.gamma_min, n.gamma_max, n.count, n.v, cfg.evolution.seed)?)
    } else {
        Ok(n.fluctuators
            .iter()
            .map(|f| Fluctuator::new(f.v, f.gamma))
            .collect::<oqsim_core::Result<Vec<_>>>()?)
    }
}

pub fn dephase(cfg: &Config, exec: Execution) -> Result<Outcome, Failure> {
    let n = &cfg.noise;
    let seed = cfg.evolution.seed;
    let fs = fluctuators(cfg)?;
    let h_s = Pauli::Z.matrix().scale(-0.5 * cfg.system.omega_s);
    let channel = NoiseChannel {
        op: Pauli::Z.matrix(),
        fluctuators: fs.clone(),
    };
    let rec = noise::dephasing_run(
        &h_s,
        &[channel],
        &verify::plus_state(),
        &DephasingConfig {
            duration: n.duration,
            dt: n.dt,
            realizations: n.realizations,
            seed,
            stride: n.stride,
            exec,
        },
    )?;
    check_physical("dephasing", &rec.states)?;
    // independent fluctuators: the average phase factor is a product
    let exact: Vec<f64> = rec
        .times
        .iter()
        .map(|&t| fs.iter().map(|f| oracle::telegraph_coherence(f.v, f.gamma, t)).product())
        .collect();
    let coherence: Vec<f64> = rec.element(0, 1).iter().map(|z| 2.0 * z.norm()).collect();
    let fit_sim = fit_exponential(&rec.times, &coherence, false)?;
    let fit_exact = fit_exponential(&rec.times, &exact, false)?;

    let signal = noise::generate_telegraph(&fs, n.spectrum_duration, n.dt, seed ^ 0x5eed)?;
    // a decade either side of the switching rates, inside what the lag
    // window resolves and clear of aliasing near the Nyquist frequency
    let (g_lo, g_hi) = fs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), f| (a.min(f.gamma), b.max(f.gamma)));
    let lo = (2.0 * std::f64::consts::PI / (n.max_lag as f64 * n.dt)).max(0.1 * g_lo);
    let hi = (0.5 * std::f64::consts::PI / n.dt).min(10.0 * g_hi).max(lo);
    let omegas: Vec<f64> = (0..=40).map(|i| lo * (hi / lo).powf(i as f64 / 40.0)).collect();
    let est = noise::estimate_spectrum(
        &signal,
        &SpectrumOptions {
            max_lag: Some(n.max_lag),
            omegas: Some(omegas.clone()),
        },
    )?;
    let analytic = omegas
        .iter()
        .map(|&w| noise::ensemble_spectrum(&fs, w))
        .collect::<oqsim_core::Result<Vec<_>>>()?;
    let spec_dev = est
        .values
        .iter()
        .zip(&analytic)
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max);

    let summary = json!({
        "fluctuators": fs.len(),
        "fit_coherence": fit_json(&fit_sim),
        "fit_coherence_exact": fit_json(&fit_exact),
        "rate_ratio": fit_sim.rate / fit_exact.rate,
        "spectrum_max_rel_dev": spec_dev,
        "spectrum_omega_range": [lo, hi],
        "warnings": rec.warnings,
    });
    let prefix = &cfg.output.prefix;
    Ok(Outcome {
        files: vec![
            (
                format!("{prefix}dephase_coherence.csv"),
                csv(
                    &["t", "coherence", "coherence_exact"],
                    rec.times.iter().zip(coherence.iter().zip(&exact)).map(|(&t, (&c, &e))| vec![t, c, e]),
                ),
            ),
            (
                format!("{prefix}dephase_spectrum.csv"),
                csv(
                    &["omega", "s_estimated", "s_analytic"],
                    omegas.iter().zip(est.values.iter().zip(&analytic)).map(|(&w, (&s, &a))| vec![w, s, a]),
                ),
            ),
        ],
        summary,
        report: format!(
            "coherence rate {:.4e} (analytic {:.4e}); spectrum max deviation {:.1}%",
            fit_sim.rate,
            fit_exact.rate,
            100.0 * spec_dev
        ),
        accepted: true,
    })
}

pub fn resources(cfg: &Config) -> Result<Outcome, Failure> {
    let e = &cfg.evolution;
    let d = cfg.bath.modes as u64;
    let d_i = (e.mode == ModeKind::Sequential).then_some(e.subset_size as u64);
    let m = match e.steps {
        Some(m) => m as u64,
        None => experiment(cfg, cfg.system.omega_s, Execution::Sequential)?.steps() as u64,
    };
    // a single two-level system
    let r = oracle::resource_estimate(2, d, d_i, m, e.n0 as u64)?;
    let mut report = format!(
        "approach 1: {} qubits, ops ≈ 10^{:.2}",
        r.approach1_qubits, r.approach1_ops_table_log10
    );
    let a2 = r.approach2.as_ref().map(|a| {
        let _ = write!(report, "; approach 2 (d_i = {}): {} qubits", a.subset_size, a.qubits);
        json!({
            "subset_size": a.subset_size,
            "qubits": a.qubits,
            "ops_table": a.ops_table.map(|x| x.to_string()),
            "ops_table_log10": a.ops_table_log10,
            "ops_per_factor": a.ops_per_factor.to_string(),
        })
    });
    let summary = json!({
        "n": 2,
        "d": d,
        "d_i": d_i,
        "m": m,
        "n0": e.n0,
        "system_qubits": r.system_qubits,
        "approach1_qubits": r.approach1_qubits,
        "reduced_qubits": r.reduced_qubits,
        "approach1_ops_table": r.approach1_ops_table.map(|x| x.to_string()),
        "approach1_ops_table_log10": r.approach1_ops_table_log10,
        "approach1_ops_per_factor": r.approach1_ops_per_factor.to_string(),
        "approach2": a2,
    });
    Ok(Outcome {
        files: Vec::new(),
        summary,
        report,
        accepted: true,
    })
}

pub fn verify_all(exec: Execution) -> Outcome {
    let reports = verify::run_all(exec);
    let report = reports.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n");
    let accepted = reports.iter().all(|r| r.passed);
    let summary = json!({
        "criteria": reports
            .iter()
            .map(|r| json!({ "id": r.id, "name": r.name, "passed": r.passed, "detail": r.detail }))
            .collect::<Vec<_>>(),
        "passed": accepted,
    });
    Outcome {
        files: Vec::new(),
        summary,
        report,
        accepted,
    }
}
