//! State propagation: exact spectral evolution for static Hamiltonians and a
//! fixed-step fourth-order Runge-Kutta integrator, refined by step halving,
//! for detuning schedules.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::basis::{Configuration, SectorBasis};
use crate::error::{Error, Result};
use crate::hamiltonian::{ChainSpec, DetuningSchedule, SectorMatrix};

/// Tolerance on ‖ψ‖ for a state to count as normalized.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Largest accepted integrator norm drift, per unit time.
pub const MAX_NORM_DRIFT_RATE: f64 = 1e-9;

/// Complex amplitudes over a sector basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    basis: Arc<SectorBasis>,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized.
    pub fn new(basis: Arc<SectorBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        let state = Self::unchecked(basis, amplitudes)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::domain(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    /// Rescales to unit norm.
    pub fn normalized(basis: Arc<SectorBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        let mut state = Self::unchecked(basis, amplitudes)?;
        let norm = state.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::domain("cannot normalize a zero or non-finite state"));
        }
        state.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(state)
    }

    fn unchecked(basis: Arc<SectorBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::domain(format!(
                "{} amplitudes for a basis of {} states",
                amplitudes.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, amplitudes })
    }

    /// The basis state `config`.
    pub fn basis_state(basis: Arc<SectorBasis>, config: &Configuration) -> Result<Self> {
        let i = basis
            .index_of(config)
            .ok_or_else(|| Error::domain(format!("{config} is not in the basis")))?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
        amplitudes[i] = Complex64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    /// The basis state `φ(sites...)`.
    pub fn localized(basis: Arc<SectorBasis>, sites: &[i64]) -> Result<Self> {
        let c = Configuration::from_sites(sites, basis.num_sites())?;
        Self::basis_state(basis, &c)
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, config: &Configuration) -> Complex64 {
        self.basis
            .index_of(config)
            .map(|i| self.amplitudes[i])
            .unwrap_or_default()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.check_same_basis(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub(crate) fn check_same_basis(&self, other: &StateVector) -> Result<()> {
        if !Arc::ptr_eq(&self.basis, &other.basis) && *self.basis != *other.basis {
            return Err(Error::domain("states live on different bases"));
        }
        Ok(())
    }

    /// Re-expresses the state over `target`, which must contain every
    /// configuration carrying weight.
    pub fn embed(&self, target: Arc<SectorBasis>) -> Result<StateVector> {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); target.len()];
        for (c, a) in self.basis.states().iter().zip(&self.amplitudes) {
            match target.index_of(c) {
                Some(j) => amplitudes[j] = *a,
                None if a.norm_sqr() == 0.0 => {}
                None => return Err(Error::domain(format!("{c} missing from target basis"))),
            }
        }
        Ok(StateVector {
            basis: target,
            amplitudes,
        })
    }

    pub(crate) fn renormalize(&mut self) {
        let n = self.norm();
        self.amplitudes.iter_mut().for_each(|a| *a /= n);
    }
}

/// Full spectral decomposition of a sector Hamiltonian.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub basis: Arc<SectorBasis>,
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl EigenSystem {
    /// `‖HV − VE‖_F`.
    pub fn residual(&self, h: &SectorMatrix) -> f64 {
        let hv = &h.matrix * &self.vectors;
        let ve = &self.vectors * DMatrix::from_diagonal(&self.values);
        (hv - ve).norm()
    }

    /// `‖VᵀV − 1‖_max`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.vectors.ncols();
        (self.vectors.transpose() * &self.vectors - DMatrix::identity(n, n)).amax()
    }
}

pub fn diagonalize(h: &SectorMatrix) -> Result<EigenSystem> {
    let dim = h.dim();
    let norm = h.matrix.norm();
    if !h.is_symmetric() {
        return Err(Error::domain("Hamiltonian is not symmetric"));
    }
    let fail = |residual: f64, condition: f64| Error::Eigen {
        dim,
        norm,
        condition,
        residual,
    };
    let eig = SymmetricEigen::try_new(h.matrix.clone(), f64::EPSILON, 0)
        .ok_or_else(|| fail(f64::NAN, f64::NAN))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(dim, dim);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    let sys = EigenSystem {
        basis: h.basis.clone(),
        values,
        vectors,
    };
    let residual = sys.residual(h);
    let ortho = sys.orthonormality_error();
    if residual > 1e-10 * norm.max(f64::MIN_POSITIVE) || ortho > 1e-12 * (dim as f64).max(1.0) {
        let abs: Vec<f64> = sys.values.iter().map(|v| v.abs()).collect();
        let max = abs.iter().copied().fold(0.0, f64::max);
        let min = abs.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(fail(residual, max / min));
    }
    Ok(sys)
}

/// `ψ(t) = V e^{−iEt} Vᵀ ψ₀`.
pub fn propagate_static(eig: &EigenSystem, psi0: &StateVector, t: f64) -> Result<StateVector> {
    if *eig.basis != **psi0.basis() {
        return Err(Error::domain("state and eigensystem use different bases"));
    }
    let n = eig.values.len();
    let v = &eig.vectors;
    let mut coeff = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in coeff.iter_mut().enumerate() {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            s += v[(i, k)] * psi0.amplitudes[i];
        }
        *c = s * Complex64::from_polar(1.0, -eig.values[k] * t);
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..n).map(|k| v[(i, k)] * coeff[k]).sum();
    }
    Ok(StateVector {
        basis: psi0.basis.clone(),
        amplitudes: out,
    })
}

/// `⟨ψ|H|ψ⟩`.
pub fn energy_expectation(h: &SectorMatrix, psi: &StateVector) -> Result<f64> {
    if *h.basis != **psi.basis() {
        return Err(Error::domain("state and Hamiltonian use different bases"));
    }
    let a = &psi.amplitudes;
    let mut e = Complex64::new(0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..a.len() {
            e += a[i].conj() * h.matrix[(i, j)] * a[j];
        }
    }
    Ok(e.re)
}

/// Probability of one configuration, `|⟨c|ψ⟩|²`.
pub fn basis_probability(psi: &StateVector, config: &Configuration) -> Result<f64> {
    if config.num_sites() != psi.basis.num_sites() {
        return Err(Error::domain("configuration has a different site count"));
    }
    Ok(psi.amplitude(config).norm_sqr())
}

/// Occupation probability of every site; entry `n − 1` is site `n`.
pub fn site_probabilities(psi: &StateVector) -> Vec<f64> {
    let mut p = vec![0.0; psi.basis.num_sites()];
    for (c, a) in psi.basis.states().iter().zip(&psi.amplitudes) {
        let w = a.norm_sqr();
        for s in c.excited_sites() {
            p[s - 1] += w;
        }
    }
    p
}

/// Sampled observables on a shared time grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>) -> Self {
        Self {
            times,
            channels: Vec::new(),
        }
    }

    pub fn push_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(Error::domain("channel length does not match time grid"));
        }
        self.channels.push((name.into(), values));
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn is_increasing(&self) -> bool {
        self.times.windows(2).all(|w| w[0] < w[1])
    }
}

/// `count` evenly spaced times covering `[start, end]`.
pub fn time_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![end],
        _ => (0..count)
            .map(|k| start + (end - start) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `H(t) = H_static + Σ_n δ_n(t) P_n`, with `P_n` the projector on
/// configurations that have site `n` excited. A constant `reference` energy
/// is removed before integrating; it changes only a global phase.
#[derive(Clone, Debug)]
pub struct ScheduledHamiltonian {
    basis: Arc<SectorBasis>,
    schedule: DetuningSchedule,
    reference: f64,
    diagonal: Vec<f64>,
    off_diagonal: Vec<(usize, usize, f64)>,
    /// Basis indices affected by each schedule entry.
    targets: Vec<Vec<usize>>,
}

impl ScheduledHamiltonian {
    pub fn new(base: &SectorMatrix, schedule: DetuningSchedule) -> Self {
        let n = base.dim();
        let diagonal: Vec<f64> = (0..n).map(|i| base.matrix[(i, i)]).collect();
        let (lo, hi) = diagonal
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let reference = if n == 0 { 0.0 } else { 0.5 * (lo + hi) };
        let mut off_diagonal = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = base.matrix[(i, j)];
                if i != j && v != 0.0 {
                    off_diagonal.push((i, j, v));
                }
            }
        }
        let targets = schedule
            .entries
            .iter()
            .map(|e| {
                base.basis
                    .states()
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_excited(e.site))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Self {
            basis: base.basis.clone(),
            schedule,
            reference,
            diagonal,
            off_diagonal,
            targets,
        }
    }

    /// Full chain `H(t)` built from `spec`.
    pub fn for_chain(spec: &ChainSpec, schedule: DetuningSchedule, excitations: usize) -> Result<Self> {
        schedule.validate(spec.sites)?;
        let base = crate::hamiltonian::build_static(spec, excitations)?;
        Ok(Self::new(&base, schedule))
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn schedule(&self) -> &DetuningSchedule {
        &self.schedule
    }

    fn shifted_diagonal(&self, t: f64, out: &mut [f64]) {
        for (o, d) in out.iter_mut().zip(&self.diagonal) {
            *o = d - self.reference;
        }
        for (entry, idx) in self.schedule.entries.iter().zip(&self.targets) {
            let delta = entry.offset(t);
            if delta != 0.0 {
                for &i in idx {
                    out[i] += delta;
                }
            }
        }
    }

    /// Gershgorin bound on the spectral radius of the shifted `H(t)`.
    pub fn spectral_bound(&self, t: f64) -> f64 {
        let mut diag = vec![0.0; self.diagonal.len()];
        self.shifted_diagonal(t, &mut diag);
        let mut rows: Vec<f64> = diag.iter().map(|d| d.abs()).collect();
        for &(i, _, v) in &self.off_diagonal {
            rows[i] += v.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// `out = −i (H(t) − reference) ψ`.
    fn derivative(&self, t: f64, psi: &[Complex64], diag: &mut [f64], out: &mut [Complex64]) {
        self.shifted_diagonal(t, diag);
        for ((o, p), d) in out.iter_mut().zip(psi).zip(diag.iter()) {
            *o = p * *d;
        }
        for &(i, j, v) in &self.off_diagonal {
            out[i] += psi[j] * v;
        }
        for o in out.iter_mut() {
            *o = Complex64::new(o.im, -o.re);
        }
    }
}

/// Output of a fixed-step integration.
#[derive(Clone, Debug)]
pub struct FixedStepRun {
    pub states: Vec<StateVector>,
    /// Largest `|‖ψ‖ − 1|` seen at an output time.
    pub max_norm_deviation: f64,
}

/// Classical RK4 from `(t_start, psi0)` through each of `times`, which must be
/// non-decreasing and not before `t_start`. Each interval is split into equal
/// substeps no longer than `step`.
pub fn integrate_fixed(
    h: &ScheduledHamiltonian,
    psi0: &StateVector,
    t_start: f64,
    times: &[f64],
    step: f64,
) -> Result<FixedStepRun> {
    if **psi0.basis() != *h.basis {
        return Err(Error::domain("state and Hamiltonian use different bases"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!("step must be positive, got {step}")));
    }
    if times.first().is_some_and(|&t| t < t_start) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("output times must be sorted and not before the start"));
    }
    let n = psi0.amplitudes.len();
    let mut psi = psi0.amplitudes.clone();
    let zero = Complex64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut diag = vec![0.0; n];
    let mut t = t_start;
    let mut states = Vec::with_capacity(times.len());
    let mut max_dev: f64 = 0.0;
    for &target in times {
        let span = target - t;
        let substeps = if span > 0.0 { (span / step).ceil() as usize } else { 0 };
        let dt = if substeps > 0 { span / substeps as f64 } else { 0.0 };
        for s in 0..substeps {
            let t0 = t + s as f64 * dt;
            h.derivative(t0, &psi, &mut diag, &mut k1);
            axpy(&psi, &k1, 0.5 * dt, &mut tmp);
            h.derivative(t0 + 0.5 * dt, &tmp, &mut diag, &mut k2);
            axpy(&psi, &k2, 0.5 * dt, &mut tmp);
            h.derivative(t0 + 0.5 * dt, &tmp, &mut diag, &mut k3);
            axpy(&psi, &k3, dt, &mut tmp);
            h.derivative(t0 + dt, &tmp, &mut diag, &mut k4);
            for i in 0..n {
                psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            }
        }
        t = target;
        let state = StateVector {
            basis: h.basis.clone(),
            amplitudes: psi.clone(),
        };
        let norm = state.norm();
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("state diverged at t = {t}")));
        }
        max_dev = max_dev.max((norm - 1.0).abs());
        states.push(state);
    }
    Ok(FixedStepRun {
        states,
        max_norm_deviation: max_dev,
    })
}

fn axpy(x: &[Complex64], y: &[Complex64], a: f64, out: &mut [Complex64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegratorOptions {
    /// Largest change of any observable between successive refinements.
    pub tolerance: f64,
    pub max_norm_drift_rate: f64,
    pub max_refinements: usize,
    /// Overrides the step estimated from the spectral bound.
    pub initial_step: Option<f64>,
}

impl IntegratorOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_norm_drift_rate: MAX_NORM_DRIFT_RATE,
            max_refinements: 14,
            initial_step: None,
        }
    }
}

/// Snapshots of a converged scheduled integration.
#[derive(Clone, Debug)]
pub struct ScheduledRun {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Step of the accepted (finest) run.
    pub step: f64,
    pub refinements: usize,
    /// Observable change between the last two refinements.
    pub observable_change: f64,
    /// `max |‖ψ‖ − 1|` over the run divided by its duration.
    pub norm_drift_rate: f64,
    pub renormalized: bool,
}

/// Step for which the RK4 norm loss `z⁶/72` per step stays below the drift
/// budget at angular frequency `omega` (`z = ω h`).
fn drift_limited_step(omega: f64, drift_rate: f64) -> f64 {
    let omega = omega.max(1e-3);
    let z = (0.5 * 72.0 * drift_rate / omega).powf(0.2).min(0.5);
    z / omega
}

/// Integrates `i dψ/dt = H(t) ψ` from `t_start` to every time in `times`,
/// halving a fixed step until every observable changes by less than the
/// tolerance between refinements and the norm drift is within budget.
pub fn propagate_scheduled(
    h: &ScheduledHamiltonian,
    psi0: &StateVector,
    t_start: f64,
    times: &[f64],
    options: &IntegratorOptions,
    observe: &dyn Fn(&StateVector) -> Vec<f64>,
) -> Result<ScheduledRun> {
    if options.tolerance.is_nan() || options.tolerance <= 0.0 {
        return Err(Error::domain("tolerance must be positive"));
    }
    let t_end = match times.last() {
        Some(&t) if t > t_start => t,
        Some(_) => return Err(Error::domain("end time must be after start time")),
        None => return Err(Error::domain("no output times")),
    };
    let duration = t_end - t_start;
    let omega = (0..=16)
        .map(|k| h.spectral_bound(t_start + duration * k as f64 / 16.0))
        .fold(0.0, f64::max);
    let mut step = options
        .initial_step
        .unwrap_or_else(|| drift_limited_step(omega, options.max_norm_drift_rate))
        .min(duration);
    let min_step = duration * 1e-12;

    let observe_all = |run: &FixedStepRun| -> Vec<Vec<f64>> { run.states.iter().map(observe).collect() };
    let mut coarse: Option<(FixedStepRun, Vec<Vec<f64>>)> = None;
    let mut last_stable = f64::NAN;
    let mut last_change = f64::INFINITY;
    for refinement in 0..=options.max_refinements {
        if step < min_step {
            break;
        }
        let fine = match integrate_fixed(h, psi0, t_start, times, step) {
            Ok(run) => run,
            Err(Error::Numerical(_)) => {
                step *= 0.5;
                coarse = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        last_stable = step;
        let obs = observe_all(&fine);
        let drift = fine.max_norm_deviation / duration;
        if let Some((_, prev)) = &coarse {
            last_change = max_difference(prev, &obs);
            if last_change < options.tolerance && drift <= options.max_norm_drift_rate {
                return Ok(finish(times, fine, step, refinement, last_change, drift, false));
            }
            if last_change < options.tolerance && refinement == options.max_refinements {
                log::warn!(
                    "norm drift {drift:.3e}/time exceeds {:.3e} at step {step:.3e}; renormalizing",
                    options.max_norm_drift_rate
                );
                return Ok(finish(times, fine, step, refinement, last_change, drift, true));
            }
        }
        coarse = Some((fine, obs));
        step *= 0.5;
    }
    log::debug!("refinement stalled: last observable change {last_change:.3e}");
    Err(Error::StepUnderflow {
        last_stable_step: last_stable,
        tolerance: options.tolerance,
    })
}

fn finish(
    times: &[f64],
    mut run: FixedStepRun,
    step: f64,
    refinements: usize,
    change: f64,
    drift: f64,
    renormalize: bool,
) -> ScheduledRun {
    if renormalize {
        run.states.iter_mut().for_each(StateVector::renormalize);
    }
    ScheduledRun {
        times: times.to_vec(),
        states: run.states,
        step,
        refinements,
        observable_change: change,
        norm_drift_rate: drift,
        renormalized: renormalize,
    }
}

fn max_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// All configuration probabilities; the default refinement observable.
pub fn basis_probabilities(psi: &StateVector) -> Vec<f64> {
    psi.amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// Full-chain scheduled propagation sampled at `snapshots` evenly spaced
/// times in `(t_start, t_end]`; channels are the site probabilities.
pub fn propagate_chain(
    spec: &ChainSpec,
    schedule: &DetuningSchedule,
    psi0: &StateVector,
    t_start: f64,
    t_end: f64,
    tolerance: f64,
    snapshots: usize,
) -> Result<(TimeSeries, ScheduledRun)> {
    let h = ScheduledHamiltonian::for_chain(spec, schedule.clone(), psi0.basis().excitations())?;
    let psi0 = psi0.embed(h.basis().clone())?;
    let times: Vec<f64> = time_grid(t_start, t_end, snapshots.max(2) + 1)
        .into_iter()
        .skip(1)
        .collect();
    let run = propagate_scheduled(
        &h,
        &psi0,
        t_start,
        &times,
        &IntegratorOptions::with_tolerance(tolerance),
        &basis_probabilities,
    )?;
    let mut series = TimeSeries::new(times);
    for site in 1..=spec.sites {
        let values = run
            .states
            .iter()
            .map(|s| site_probabilities(s)[site - 1])
            .collect();
        series.push_channel(format!("P_site_{site}"), values)?;
    }
    Ok((series, run))
}
