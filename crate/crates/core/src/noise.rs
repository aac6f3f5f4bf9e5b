//! Classical random telegraph noise for pure dephasing.
//!
//! A fluctuator contributes `v·ξ(t)` with `ξ = ±½`, flipping at Poisson rate
//! `γ/2`, so `⟨ξ(t)ξ(0)⟩ = ¼e^{-γ|t|}` and its spectrum is the Lorentzian
//! `v²γ / (4π(ω² + γ²))`. Spectra use the one-sided convention
//! `S(ω) = (1/π)∫_0^∞ cos(ωt) C(t) dt`, so `∫_0^∞ S dω = ⟨χ²⟩/2`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::qmath::{ensure_hermitian, expm_hermitian, ComplexMatrix, DensityMatrix};

/// Warn when `dt·max|χ|` reaches this.
pub const PIECEWISE_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fluctuator {
    pub v: f64,
    pub gamma: f64,
}

impl Fluctuator {
    pub fn new(v: f64, gamma: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(invalid("v", "must be finite"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be nonnegative, got {gamma}")));
        }
        Ok(Self { v, gamma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelegraphSignal {
    dt: f64,
    values: Vec<f64>,
    /// Initial `ξ_i ∈ {±½}` per fluctuator.
    initial: Vec<f64>,
    /// Exact flip times per fluctuator.
    switch_times: Vec<Vec<f64>>,
}

impl TelegraphSignal {
    /// A sampled series with no fluctuator bookkeeping.
    pub fn from_samples(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(Self {
            dt,
            values,
            initial: Vec::new(),
            switch_times: Vec::new(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn initial_states(&self) -> &[f64] {
        &self.initial
    }

    pub fn switch_times(&self) -> &[Vec<f64>] {
        &self.switch_times
    }

    /// `t χ` rows, one per sample.
    pub fn to_two_column(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        out.push_str("# t chi\n");
        for (j, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{} {}", self.time(j), v);
        }
        out
    }
}

/// SplitMix64 finalizer; derives independent seeds from `(seed, index)`.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn telegraph_track<R: Rng>(f: &Fluctuator, duration: f64, rng: &mut R) -> (f64, Vec<f64>) {
    let initial = if rng.random::<bool>() { 0.5 } else { -0.5 };
    let mut flips = Vec::new();
    if f.gamma > 0.0 {
        let exp = Exp::new(f.gamma / 2.0).expect("positive rate");
        let mut t = exp.sample(rng);
        while t <= duration {
            flips.push(t);
            t += exp.sample(rng);
        }
    }
    (initial, flips)
}

/// `χ(t_j) = Σ_i v_i ξ_i(t_j)` on `t_j = j·dt`, `0 ≤ t_j ≤ T`.
/// Fluctuator `i` draws from stream `i` of a generator seeded with `seed`.
pub fn generate_telegraph(fluctuators: &[Fluctuator], duration: f64, dt: f64, seed: u64) -> Result<TelegraphSignal> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration", format!("must be positive, got {duration}")));
    }
    if !(dt > 0.0 && dt <= duration) {
        return Err(invalid("dt", format!("must lie in (0, T], got {dt}")));
    }
    let n = (duration / dt + 1e-9).floor() as usize + 1;
    let mut values = vec![0.0; n];
    let mut initial = Vec::with_capacity(fluctuators.len());
    let mut switch_times = Vec::with_capacity(fluctuators.len());
    for (i, f) in fluctuators.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (xi0, flips) = telegraph_track(f, duration, &mut rng);
        let mut xi = xi0;
        let mut next = 0;
        for (j, slot) in values.iter_mut().enumerate() {
            let t = j as f64 * dt;
            while next < flips.len() && flips[next] <= t {
                xi = -xi;
                next += 1;
            }
            *slot += f.v * xi;
        }
        initial.push(xi0);
        switch_times.push(flips);
    }
    Ok(TelegraphSignal {
        dt,
        values,
        initial,
        switch_times,
    })
}

/// `v²γ / (4π(ω² + γ²))`
pub fn lorentzian_spectrum(f: &Fluctuator, omega: f64) -> Result<f64> {
    if !(f.gamma > 0.0) {
        return Err(invalid("gamma", "Lorentzian needs a positive switching rate"));
    }
    Ok(f.v * f.v * f.gamma / (4.0 * std::f64::consts::PI * (omega * omega + f.gamma * f.gamma)))
}

pub fn ensemble_spectrum(fluctuators: &[Fluctuator], omega: f64) -> Result<f64> {
    fluctuators.iter().map(|f| lorentzian_spectrum(f, omega)).sum()
}

/// `n` fluctuators with `γ` log-uniform on `[γ_min, γ_max]` (density ∝ 1/γ).
pub fn sample_one_over_f(gamma_min: f64, gamma_max: f64, n: usize, v: f64, seed: u64) -> Result<Vec<Fluctuator>> {
    if !(gamma_min > 0.0 && gamma_max > gamma_min && gamma_max.is_finite()) {
        return Err(invalid(
            "gamma range",
            format!("need 0 < γ_min < γ_max, got [{gamma_min}, {gamma_max}]"),
        ));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (gamma_min.ln(), gamma_max.ln());
    (0..n)
        .map(|_| Fluctuator::new(v, rng.random_range(lo..hi).exp()))
        .collect()
}

/// `ω·S(ω)` at each frequency; constant across frequencies for a `G/ω` spectrum.
pub fn one_over_f_constant(fluctuators: &[Fluctuator], omegas: &[f64]) -> Result<Vec<f64>> {
    omegas.iter().map(|&w| Ok(w * ensemble_spectrum(fluctuators, w)?)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SpectrumOptions {
    /// Largest lag `M` kept by the Tukey window; default `N/10`.
    pub max_lag: Option<usize>,
    /// Evaluation frequencies; default `ω_i = iπ/(M·dt)`, `i = 0..=M`.
    pub omegas: Option<Vec<f64>>,
}

/// Biased autocovariance `C_k = (1/N) Σ_j x_j x_{j+k}` of the mean-removed
/// series, for `k = 0..=max_lag`, via zero-padded FFT.
pub fn autocovariance(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<FftComplex<f64>> = values
        .iter()
        .map(|&x| FftComplex::new(x - mean, 0.0))
        .chain(std::iter::repeat(FftComplex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for z in buf.iter_mut() {
        *z = FftComplex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let norm = (len * n) as f64;
    buf.iter().take(max_lag.min(n - 1) + 1).map(|z| z.re / norm).collect()
}

/// Lag-window estimate `(dt/π)[½C_0 + Σ_{k=1}^{M} w_k C_k cos(ωk·dt)]` with
/// Tukey weights `w_k = ½(1 + cos(πk/M))`.
pub fn estimate_spectrum(signal: &TelegraphSignal, options: &SpectrumOptions) -> Result<Spectrum> {
    let n = signal.len();
    if n < 2 {
        return Err(invalid("signal", "need at least 2 samples"));
    }
    let m = options.max_lag.unwrap_or((n / 10).max(1)).clamp(1, n - 1);
    let c = autocovariance(signal.values(), m);
    let dt = signal.dt();
    let omega = options
        .omegas
        .clone()
        .unwrap_or_else(|| (0..=m).map(|i| i as f64 * std::f64::consts::PI / (m as f64 * dt)).collect());
    let values = lag_window_spectrum(&c, dt, &omega);
    Ok(Spectrum { omega, values })
}

/// Tukey-windowed cosine sum over `C_0..=C_M` at each `ω`.
pub fn lag_window_spectrum(c: &[f64], dt: f64, omegas: &[f64]) -> Vec<f64> {
    let m = c.len().saturating_sub(1).max(1) as f64;
    let weighted: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(k, ck)| {
            if k == 0 {
                0.5 * ck
            } else {
                0.5 * (1.0 + (std::f64::consts::PI * k as f64 / m).cos()) * ck
            }
        })
        .collect();
    omegas
        .iter()
        .map(|&w| {
            let s: f64 = weighted
                .iter()
                .enumerate()
                .map(|(k, wc)| wc * (w * k as f64 * dt).cos())
                .sum();
            s * dt / std::f64::consts::PI
        })
        .collect()
}

/// One noise channel: operator `Ã_k` driven by `χ_k(t)` from its fluctuators.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    pub op: ComplexMatrix,
    pub fluctuators: Vec<Fluctuator>,
}

#[derive(Debug, Clone)]
pub struct DephasingConfig {
    pub duration: f64,
    pub dt: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Record every `stride`-th sample.
    pub stride: usize,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct DephasingRecord {
    pub times: Vec<f64>,
    /// Realization-averaged states.
    pub states: Vec<DensityMatrix>,
    pub warnings: Vec<String>,
}

impl DephasingRecord {
    pub fn element(&self, m: usize, n: usize) -> Vec<crate::Complex64> {
        self.states.iter().map(|r| r.matrix()[(m, n)]).collect()
    }
}

/// Averages `ρ(t)` over independent noise realizations, each evolved under
/// the piecewise-constant `H(t_j) = H_S + Σ_k χ_k(t_j) Ã_k` for `dt`.
pub fn dephasing_run(
    h_s: &ComplexMatrix,
    channels: &[NoiseChannel],
    rho0: &DensityMatrix,
    cfg: &DephasingConfig,
) -> Result<DephasingRecord> {
    ensure_hermitian(h_s)?;
    let dim = h_s.nrows();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, H_S has {dim}",
            rho0.dim()
        )));
    }
    for ch in channels {
        if ch.op.shape() != h_s.shape() {
            return Err(Error::DimensionMismatch("noise operator shape differs from H_S".into()));
        }
        ensure_hermitian(&ch.op)?;
    }
    if cfg.realizations == 0 {
        return Err(invalid("realizations", "must be at least 1"));
    }
    if cfg.stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }

    let mut warnings = Vec::new();
    let chi_max = channels
        .iter()
        .map(|ch| ch.fluctuators.iter().map(|f| 0.5 * f.v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if cfg.dt * chi_max >= PIECEWISE_GUARD {
        warnings.push(format!(
            "dt·max|χ| = {:.3} is not small compared with {PIECEWISE_GUARD}; the piecewise-constant propagator may be inaccurate",
            cfg.dt * chi_max
        ));
    }

    let n_samples = (cfg.duration / cfg.dt + 1e-9).floor() as usize + 1;
    if n_samples < 2 {
        return Err(invalid("duration", "must cover at least one step"));
    }
    let recorded: Vec<usize> = (0..n_samples)
        .filter(|j| j % cfg.stride == 0 || *j == n_samples - 1)
        .collect();

    let runs = map_indexed(cfg.realizations, cfg.exec, |r| -> Result<Vec<ComplexMatrix>> {
        let signals = channels
            .iter()
            .enumerate()
            .map(|(k, ch)| {
                let seed = derive_seed(cfg.seed, (r * channels.len() + k) as u64);
                generate_telegraph(&ch.fluctuators, cfg.duration, cfg.dt, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cache: HashMap<Vec<u64>, ComplexMatrix> = HashMap::new();
        let mut rho = rho0.matrix().clone();
        let mut out = vec![rho.clone()];
        for j in 0..n_samples - 1 {
            let chis: Vec<f64> = signals.iter().map(|s| s.values()[j]).collect();
            let key: Vec<u64> = chis.iter().map(|c| c.to_bits()).collect();
            if !cache.contains_key(&key) {
                let mut h = h_s.clone();
                for (ch, &x) in channels.iter().zip(&chis) {
                    h += ch.op.scale(x);
                }
                cache.insert(key.clone(), expm_hermitian(&h, cfg.dt)?);
            }
            let u = &cache[&key];
            rho = u * rho * u.adjoint();
            if recorded.binary_search(&(j + 1)).is_ok() {
                out.push(rho.clone());
            }
        }
        Ok(out)
    });

    let mut mean = vec![ComplexMatrix::zeros(dim, dim); recorded.len()];
    for run in runs {
        for (acc, rho) in mean.iter_mut().zip(run?) {
            *acc += rho;
        }
    }
    Ok(DephasingRecord {
        times: recorded.iter().map(|&j| j as f64 * cfg.dt).collect(),
        states: mean
            .into_iter()
            .map(|m| DensityMatrix::from_matrix_unchecked(m.unscale(cfg.realizations as f64)))
            .collect(),
        warnings,
    })
}
