//! Independent references for checking the simulator: analytic Markovian
//! rates, a Lindblad integrator, exact propagators, exponential fits and
//! resource counts.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::env_model::SpectralDensity;
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::GlobalHamiltonianTerms;
use crate::qmath::{
    ensure_hermitian, expm_hermitian, hermiticity_deviation, sigma_minus, sigma_plus, spectral_norm,
    ComplexMatrix, DensityMatrix, Pauli, DEFAULT_MAX_DIM,
};
use crate::Complex64;

/// RK4 step as a fraction of the fastest generator timescale.
const STEP_FRACTION: f64 = 0.01;

/// `(1/T1, 1/T2) = (½J(ω_s), ¼J(ω_s))`.
pub fn markovian_rates(j: &SpectralDensity, omega_s: f64) -> Result<(f64, f64)> {
    let jw = j.value(omega_s)?;
    Ok((0.5 * jw, 0.25 * jw))
}

/// `dρ/dt = -i[H,ρ] + Σ γ_j (L_j ρ L_j† - ½{L_j†L_j, ρ})`
#[derive(Debug, Clone)]
pub struct LindbladModel {
    h: ComplexMatrix,
    channels: Vec<(ComplexMatrix, f64)>,
}

impl LindbladModel {
    pub fn new(h: ComplexMatrix, channels: Vec<(ComplexMatrix, f64)>) -> Result<Self> {
        ensure_hermitian(&h)?;
        for (l, rate) in &channels {
            if l.shape() != h.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator is {}x{}, H is {}x{}",
                    l.nrows(),
                    l.ncols(),
                    h.nrows(),
                    h.ncols()
                )));
            }
            if !(*rate >= 0.0 && rate.is_finite()) {
                return Err(invalid("rate", format!("must be nonnegative, got {rate}")));
            }
        }
        Ok(Self { h, channels })
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn channels(&self) -> &[(ComplexMatrix, f64)] {
        &self.channels
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn generator(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        let mut out = (&self.h * rho - rho * &self.h) * (-i);
        for (l, g) in &self.channels {
            if *g == 0.0 {
                continue;
            }
            let ld = l.adjoint();
            let ldl = &ld * l;
            out += (l * rho * &ld - (&ldl * rho + rho * &ldl).scale(0.5)).scale(*g);
        }
        out
    }

    /// `min(0.01/‖H‖, 0.01/max γ)`, a tenth of the coarsest stable step;
    /// infinity for a trivial generator.
    pub fn default_step(&self) -> f64 {
        let hn = spectral_norm(&self.h);
        let gmax = self.channels.iter().map(|(l, g)| g * spectral_norm(l).powi(2)).fold(0.0, f64::max);
        let mut h = f64::INFINITY;
        if hn > 0.0 {
            h = h.min(STEP_FRACTION / hn);
        }
        if gmax > 0.0 {
            h = h.min(STEP_FRACTION / gmax);
        }
        h
    }
}

/// Two-level thermal pair: `σ⁻` at `Γ(1-p∞)`, `σ⁺` at `Γp∞`, with
/// `H = -½ω_s σ^z` and `p∞ = 1/(1+e^{βω_s})`.
pub fn thermal_two_level_model(omega_s: f64, gamma: f64, beta: f64) -> Result<LindbladModel> {
    let x = beta * omega_s;
    let p_inf = if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    };
    LindbladModel::new(
        Pauli::Z.matrix().scale(-0.5 * omega_s),
        vec![(sigma_minus(), gamma * (1.0 - p_inf)), (sigma_plus(), gamma * p_inf)],
    )
}

fn rk4_step(model: &LindbladModel, rho: &ComplexMatrix, h: f64) -> ComplexMatrix {
    let k1 = model.generator(rho);
    let k2 = model.generator(&(rho + k1.scale(h / 2.0)));
    let k3 = model.generator(&(rho + k2.scale(h / 2.0)));
    let k4 = model.generator(&(rho + k3.scale(h)));
    rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0)
}

/// Fixed-step RK4 at the model's default step.
pub fn lindblad_integrate(model: &LindbladModel, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    lindblad_integrate_with_step(model, rho0, times, model.default_step())
}

/// Fixed-step RK4; each output interval is split into equal steps no
/// longer than `max_step`.
pub fn lindblad_integrate_with_step(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    times: &[f64],
    max_step: f64,
) -> Result<Vec<DensityMatrix>> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, model has {}",
            rho0.dim(),
            model.dim()
        )));
    }
    if !(max_step > 0.0) {
        return Err(invalid("max_step", "must be positive"));
    }
    let mut rho = rho0.matrix().clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(invalid("times", "must be nondecreasing from 0"));
        }
        let span = target - t;
        if span > 0.0 {
            let n = (span / max_step).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                rho = rk4_step(model, &rho, h);
            }
            if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical(format!("non-finite state at t = {target}")));
            }
            t = target;
        }
        out.push(DensityMatrix::from_matrix_unchecked(rho.clone()));
    }
    Ok(out)
}

/// `|⟨e^{-i∫s dt}⟩|` for a telegraph frequency `s = ±v` that flips at rate
/// `λ = γ/2` from a random initial sign:
/// `e^{-λt}[cosh μt + (λ/μ) sinh μt]`, `μ = sqrt(λ² - v²)`.
pub fn telegraph_coherence(v: f64, gamma: f64, t: f64) -> f64 {
    let lambda = gamma / 2.0;
    let mu2 = lambda * lambda - v * v;
    if mu2 > 0.0 {
        let mu = mu2.sqrt();
        // e^{-λt}cosh(μt) written with decaying exponentials only
        let (a, b) = ((-(lambda - mu) * t).exp(), (-(lambda + mu) * t).exp());
        0.5 * (a + b) + lambda / mu * 0.5 * (a - b)
    } else if mu2 < 0.0 {
        let nu = (-mu2).sqrt();
        (-lambda * t).exp() * ((nu * t).cos() + lambda / nu * (nu * t).sin())
    } else {
        (-lambda * t).exp() * (1.0 + lambda * t)
    }
}

/// `exp(-i Σ terms · τ)` without splitting.
pub fn exact_unitary_reference(terms: &GlobalHamiltonianTerms, tau: f64) -> Result<ComplexMatrix> {
    if terms.dim() > DEFAULT_MAX_DIM {
        return Err(Error::DimensionOverflow {
            dim: terms.dim(),
            max: DEFAULT_MAX_DIM,
        });
    }
    let h = terms.total()?;
    debug_assert!(hermiticity_deviation(&h) < 1e-9);
    expm_hermitian(&h, tau)
}

/// `a + b·e^{-rt}` (or `b·e^{-rt}` when fitted without asymptote).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub rate: f64,
    pub asymptote: f64,
    pub amplitude: f64,
    /// Root-sum-square residual.
    pub residual: f64,
}

impl FitResult {
    pub fn time_constant(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.asymptote + self.amplitude * (-self.rate * t).exp()
    }
}

/// Linear part for fixed `r` on shifted times; returns `(a, b, rss)`.
fn linear_solve(t: &[f64], y: &[f64], r: f64, with_asymptote: bool) -> (f64, f64, f64) {
    let e: Vec<f64> = t.iter().map(|&ti| (-r * ti).exp()).collect();
    let (a, b) = if with_asymptote {
        let n = t.len() as f64;
        let se: f64 = e.iter().sum();
        let see: f64 = e.iter().map(|x| x * x).sum();
        let sy: f64 = y.iter().sum();
        let sey: f64 = e.iter().zip(y).map(|(x, v)| x * v).sum();
        let det = n * see - se * se;
        if det.abs() <= 1e-14 * n * see {
            (sy / n, 0.0)
        } else {
            ((see * sy - se * sey) / det, (n * sey - se * sy) / det)
        }
    } else {
        let see: f64 = e.iter().map(|x| x * x).sum();
        let sey: f64 = e.iter().zip(y).map(|(x, v)| x * v).sum();
        (0.0, if see > 0.0 { sey / see } else { 0.0 })
    };
    let rss = e.iter().zip(y).map(|(x, v)| (a + b * x - v).powi(2)).sum();
    (a, b, rss)
}

/// Least-squares fit of `a + b·e^{-rt}` with `r ≥ 0`.
///
/// The rate is located by a log-spaced scan of the variable-projection
/// residual, refined by golden-section search and polished with
/// Gauss-Newton on all parameters.
pub fn fit_exponential(times: &[f64], values: &[f64], with_asymptote: bool) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 4 {
        return Err(Error::FitFailed(format!("need at least 4 points, got {}", times.len())));
    }
    if times.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(Error::FitFailed("non-finite input".into()));
    }
    let t0 = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t0;
    if !(span > 0.0) {
        return Err(Error::FitFailed("times span zero length".into()));
    }
    let t: Vec<f64> = times.iter().map(|&x| x - t0).collect();
    let y = values;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);

    let constant = y.iter().all(|v| (v - mean).abs() <= 1e-13 * scale.max(1.0));
    if constant && with_asymptote {
        return Ok(FitResult {
            rate: 0.0,
            asymptote: mean,
            amplitude: 0.0,
            residual: 0.0,
        });
    }

    let rss = |r: f64| linear_solve(&t, y, r, with_asymptote).2;
    // scan r·span over [1e-4, 1e3] plus r = 0
    let mut grid: Vec<f64> = vec![0.0];
    let n_scan = 241;
    for i in 0..n_scan {
        grid.push(10f64.powf(-4.0 + 7.0 * i as f64 / (n_scan - 1) as f64) / span);
    }
    let vals: Vec<f64> = grid.iter().map(|&r| rss(r)).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("grid is nonempty");
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    if best == 0 {
        lo = 0.0;
        hi = grid[1];
    }

    // golden section on [lo, hi]
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (rss(x1), rss(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = rss(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = rss(x2);
        }
    }
    let mut r = 0.5 * (lo + hi);
    let (mut a, mut b, mut cur) = linear_solve(&t, y, r, with_asymptote);

    // Gauss-Newton polish on (a, b, r)
    for _ in 0..50 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let e = (-r * ti).exp();
            let res = a + b * e - yi;
            let g = Vector3::new(if with_asymptote { 1.0 } else { 0.0 }, e, -b * ti * e);
            jtj += g * g.transpose();
            jtr += g * res;
        }
        if !with_asymptote {
            jtj[(0, 0)] = 1.0;
        }
        let Some(step) = jtj.lu().solve(&jtr) else { break };
        let (na, nb, nr) = (a - step[0], b - step[1], (r - step[2]).max(0.0));
        let trial: f64 = t
            .iter()
            .zip(y)
            .map(|(&ti, &yi)| (na + nb * (-nr * ti).exp() - yi).powi(2))
            .sum();
        if !(trial <= cur) {
            break;
        }
        let done = (nr - r).abs() <= 1e-15 * r.max(1e-300);
        a = na;
        b = nb;
        r = nr;
        cur = trial;
        if done {
            break;
        }
    }
    if !(r.is_finite() && a.is_finite() && b.is_finite()) {
        return Err(Error::FitFailed("fit diverged".into()));
    }
    Ok(FitResult {
        rate: r,
        asymptote: a,
        amplitude: b * (r * t0).exp(),
        residual: cur.sqrt(),
    })
}

/// Qubit and operation counts for both implementation approaches.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceReport {
    pub system_qubits: u32,
    /// `2⌈log₂N⌉ + d + 1`
    pub approach1_qubits: u32,
    /// `max[⌈log₂N⌉ + d, 2⌈log₂N⌉ + 1]`, reusing environment qubits for readout.
    pub reduced_qubits: u32,
    /// `m·(2d+1)^{n0}`, `None` on overflow.
    pub approach1_ops_table: Option<u128>,
    pub approach1_ops_table_log10: f64,
    /// `m·(2d+1)·n0` primitive exponentials in the Trotter product.
    pub approach1_ops_per_factor: u128,
    pub approach2: Option<Approach2Report>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Approach2Report {
    pub subset_size: u32,
    /// `2⌈log₂N⌉ + d_i + 1`
    pub qubits: u32,
    /// `m·(d/d_i)·(2d_i+1)^{n0}`
    pub ops_table: Option<u128>,
    pub ops_table_log10: f64,
    /// `m·(d/d_i)·(2d_i+1)·n0`
    pub ops_per_factor: u128,
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

fn table_count(prefactor: u128, base: u128, n0: u64) -> (Option<u128>, f64) {
    let exact = u32::try_from(n0)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .and_then(|p| p.checked_mul(prefactor));
    let log10 = (prefactor as f64).log10() + n0 as f64 * (base as f64).log10();
    (exact, log10)
}

pub fn resource_estimate(n: u64, d: u64, d_i: Option<u64>, m: u64, n0: u64) -> Result<ResourceReport> {
    for (name, v) in [("N", n), ("d", d), ("m", m), ("n0", n0)] {
        if v == 0 {
            return Err(invalid(name, "must be positive"));
        }
    }
    let s = ceil_log2(n);
    let d32 = u32::try_from(d).map_err(|_| invalid("d", "too large"))?;
    let (table, log10) = table_count(m as u128, 2 * d as u128 + 1, n0);
    let approach2 = match d_i {
        None => None,
        Some(di) => {
            if di == 0 || !d.is_multiple_of(di) {
                return Err(invalid("d_i", format!("{di} does not divide d = {d}")));
            }
            let sets = (d / di) as u128;
            let (ops_table, ops_table_log10) = table_count(m as u128 * sets, 2 * di as u128 + 1, n0);
            Some(Approach2Report {
                subset_size: di as u32,
                qubits: 2 * s + di as u32 + 1,
                ops_table,
                ops_table_log10,
                ops_per_factor: m as u128 * sets * (2 * di as u128 + 1) * n0 as u128,
            })
        }
    };
    Ok(ResourceReport {
        system_qubits: s,
        approach1_qubits: 2 * s + d32 + 1,
        reduced_qubits: (s + d32).max(2 * s + 1),
        approach1_ops_table: table,
        approach1_ops_table_log10: log10,
        approach1_ops_per_factor: m as u128 * (2 * d as u128 + 1) * n0 as u128,
        approach2,
    })
}

/// Populations along the diagonal of each state.
pub fn populations(states: &[DensityMatrix], index: usize) -> Vec<f64> {
    states.iter().map(|r| r.matrix()[(index, index)].re).collect()
}

/// Dense least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("loglog_slope", "need two or more paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid("loglog_slope", "values must be positive"));
    }
    let a = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i].ln() });
    let b = DVector::from_iterator(y.len(), y.iter().map(|v| v.ln()));
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(sol[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{QuantumState, StateTolerance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn excited() -> DensityMatrix {
        DensityMatrix::from_pure(&QuantumState::basis(2, 1).unwrap())
    }

    #[test]
    fn ohmic_rates_at_unit_frequency() {
        let j = SpectralDensity::ohmic(2e-4, 100.0).unwrap();
        let (r1, r2) = markovian_rates(&j, 1.0).unwrap();
        // J(1) = 2π·2e-4·e^{-0.01}
        let jw = 2.0 * std::f64::consts::PI * 2e-4 * (-0.01f64).exp();
        assert!((jw - 1.2441e-3).abs() < 1e-7);
        assert!((r1 - 0.5 * jw).abs() < 1e-18);
        assert!((1.0 / r1 - 1607.5).abs() < 0.1);
        assert!((r2 - r1 / 2.0).abs() < 1e-18);
        let (z1, z2) = markovian_rates(&j, 0.0).unwrap();
        assert_eq!((z1, z2), (0.0, 0.0));
    }

    #[test]
    fn rates_scale_linearly_with_density() {
        let j1 = SpectralDensity::ohmic(1e-4, 10.0).unwrap();
        let j3 = SpectralDensity::ohmic(3e-4, 10.0).unwrap();
        let (a, b) = markovian_rates(&j1, 0.7).unwrap();
        let (c, d) = markovian_rates(&j3, 0.7).unwrap();
        assert!((c / a - 3.0).abs() < 1e-12 && (d / b - 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_channels_is_unitary() {
        let h = Pauli::X.matrix().scale(0.8) + Pauli::Z.matrix().scale(0.3);
        let model = LindbladModel::new(h.clone(), vec![]).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
        let out = lindblad_integrate(&model, &excited(), &times).unwrap();
        for (t, rho) in times.iter().zip(&out) {
            let u = expm_hermitian(&h, *t).unwrap();
            let want = &u * excited().matrix() * u.adjoint();
            assert!((rho.matrix() - want).iter().all(|z| z.norm() < 1e-8));
        }
    }

    #[test]
    fn amplitude_damping_is_exponential() {
        let g = 0.3;
        let model = LindbladModel::new(Pauli::Z.matrix().scale(-0.5), vec![(sigma_minus(), g)]).unwrap();
        let times: Vec<f64> = (0..=30).map(|i| i as f64 * 0.5).collect();
        let out = lindblad_integrate(&model, &excited(), &times).unwrap();
        for (t, rho) in times.iter().zip(&out) {
            assert!((rho.matrix()[(1, 1)].re - (-g * t).exp()).abs() < 1e-6);
            rho.validate(StateTolerance::cptp()).unwrap();
        }
    }

    #[test]
    fn thermal_pair_relaxes_to_thermal_population() {
        let (w, g, beta) = (1.0, 0.05, 1.0);
        let model = thermal_two_level_model(w, g, beta).unwrap();
        let p_inf = 1.0 / (1.0 + f64::exp(beta * w));
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 5.0).collect();
        let out = lindblad_integrate(&model, &excited(), &times).unwrap();
        for (t, rho) in times.iter().zip(&out) {
            let want = p_inf + (1.0 - p_inf) * (-g * t).exp();
            assert!((rho.matrix()[(1, 1)].re - want).abs() < 1e-7);
        }
    }

    #[test]
    fn step_halving_changes_little() {
        let model = thermal_two_level_model(1.0, 0.2, 0.5).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::from_pure(
            &QuantumState::new(vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap(),
        );
        let times: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let h = model.default_step();
        let a = lindblad_integrate_with_step(&model, &plus, &times, h).unwrap();
        let b = lindblad_integrate_with_step(&model, &plus, &times, h / 2.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.matrix() - y.matrix()).iter().all(|z| z.norm() < 1e-7));
            assert!((x.trace().re - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn integrator_rejects_bad_input() {
        let model = thermal_two_level_model(1.0, 0.2, 0.5).unwrap();
        assert!(lindblad_integrate(&model, &excited(), &[1.0, 0.5]).is_err());
        assert!(LindbladModel::new(Pauli::Z.matrix(), vec![(sigma_minus(), -1.0)]).is_err());
        assert!(lindblad_integrate(&model, &DensityMatrix::maximally_mixed(4), &[1.0]).is_err());
    }

    #[test]
    fn fit_recovers_exact_exponentials() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 30.0).collect();
        let y: Vec<f64> = t.iter().map(|&x| 0.27 + 0.73 * (-x / 1607.5).exp()).collect();
        let f = fit_exponential(&t, &y, true).unwrap();
        assert!((f.rate * 1607.5 - 1.0).abs() < 1e-8, "{f:?}");
        assert!((f.asymptote - 0.27).abs() < 1e-8 && (f.amplitude - 0.73).abs() < 1e-8);

        let y: Vec<f64> = t.iter().map(|&x| 0.5 * (-x / 800.0).exp()).collect();
        let f = fit_exponential(&t, &y, false).unwrap();
        assert!((f.rate * 800.0 - 1.0).abs() < 1e-8 && (f.amplitude - 0.5).abs() < 1e-8);
        assert_eq!(f.asymptote, 0.0);

        // shifted time origin
        let t2: Vec<f64> = t.iter().map(|x| x + 100.0).collect();
        let y: Vec<f64> = t2.iter().map(|&x| 0.1 + 2.0 * (-x / 500.0).exp()).collect();
        let f = fit_exponential(&t2, &y, true).unwrap();
        assert!((f.rate * 500.0 - 1.0).abs() < 1e-8 && (f.amplitude - 2.0).abs() < 1e-8);
    }

    #[test]
    fn fit_constant_series_has_zero_rate() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = vec![0.4; 10];
        assert_eq!(fit_exponential(&t, &y, true).unwrap().rate, 0.0);
        let f = fit_exponential(&t, &y, false).unwrap();
        assert!(f.rate < 1e-12 && (f.amplitude - 0.4).abs() < 1e-12);
    }

    #[test]
    fn fit_with_noise_within_three_percent() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        let normal = Normal::new(0.0, 0.01).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = t.iter().map(|&x| (-x).exp() + normal.sample(&mut rng)).collect();
            let f = fit_exponential(&t, &y, false).unwrap();
            assert!((f.rate - 1.0).abs() < 0.03, "seed {seed}: {}", f.rate);
        }
    }

    #[test]
    fn fit_rejects_unusable_data() {
        assert!(fit_exponential(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.2], true).is_err());
        assert!(fit_exponential(&[0.0, 1.0, 2.0, 3.0], &[1.0, f64::NAN, 0.2, 0.1], true).is_err());
        assert!(fit_exponential(&[1.0; 4], &[1.0, 0.5, 0.2, 0.1], true).is_err());
    }

    #[test]
    fn resource_table_examples() {
        let r = resource_estimate(2, 8, Some(1), 100, 10).unwrap();
        assert_eq!(r.approach1_qubits, 11);
        assert_eq!(r.approach2.as_ref().unwrap().qubits, 4);
        assert_eq!(r.reduced_qubits, 9);
        assert_eq!(r.approach1_ops_table, Some(100 * 17u128.pow(10)));
        assert_eq!(r.approach1_ops_per_factor, 100 * 17 * 10);
        let a2 = r.approach2.unwrap();
        assert_eq!(a2.ops_table, Some(100 * 8 * 3u128.pow(10)));
        assert_eq!(a2.ops_per_factor, 100 * 8 * 3 * 10);
    }

    #[test]
    fn resource_grid_matches_formulas() {
        for n in 1..=40u64 {
            let s = (n as f64).log2().ceil() as u32;
            for d in [1u64, 2, 4, 6, 8, 12] {
                for di in (1..=d).filter(|di| d % di == 0) {
                    let r = resource_estimate(n, d, Some(di), 3, 2).unwrap();
                    assert_eq!(r.system_qubits, s);
                    assert_eq!(r.approach1_qubits, 2 * s + d as u32 + 1);
                    assert_eq!(r.approach2.unwrap().qubits, 2 * s + di as u32 + 1);
                    assert_eq!(r.reduced_qubits, (s + d as u32).max(2 * s + 1));
                }
            }
        }
    }

    #[test]
    fn resource_overflow_and_errors() {
        let r = resource_estimate(2, 8, None, 100, 1000).unwrap();
        assert_eq!(r.approach1_ops_table, None);
        assert!((r.approach1_ops_table_log10 - (2.0 + 1000.0 * 17f64.log10())).abs() < 1e-9);
        assert!(resource_estimate(2, 8, Some(3), 1, 1).is_err());
        assert!(resource_estimate(0, 8, None, 1, 1).is_err());
    }

    #[test]
    fn exact_reference_identity_at_zero() {
        let g = crate::env_model::make_grid(0.9, 0.1, 2).unwrap();
        let c = crate::env_model::CouplingSet::new(vec![0.1, 0.2], crate::env_model::CouplingMethod::Naive).unwrap();
        let terms = crate::hamiltonian::build_two_level_example(1.0, &g, &c).unwrap();
        let u = exact_unitary_reference(&terms, 0.0).unwrap();
        assert!((u - crate::qmath::identity(8)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x: Vec<f64> = (1..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 1.5).abs() < 1e-12);
    }
}
