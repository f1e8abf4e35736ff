//! Create-then-freeze experiments: evolve to the instant an effective model
//! predicts the target state, switch on a detuning ramp there and record how
//! well the state is maintained.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SectorBasis;
use crate::entanglement::{fidelity, global_entanglement, pair_concurrence, phase_maximized_fidelity};
use crate::error::{Error, Result};
use crate::evolve::{
    basis_probabilities, diagonalize, propagate_scheduled, propagate_static, site_probabilities,
    time_grid, IntegratorOptions, ScheduledHamiltonian, StateVector, TimeSeries,
};
use crate::hamiltonian::{build_static, ChainSpec, DetuningSchedule, ScheduleShape, SectorMatrix};
use crate::perturbation::{
    bell_times, bound_pair_model, bound_pair_times, three_defect_model, two_defect_model, w_times,
    EffectiveModel,
};

/// Fraction of the horizon, counted from its end, that is scored.
pub const FINAL_WINDOW: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Bell,
    W,
    BoundPair,
}

/// Hamiltonian used for the evolution. Creation instants always come from
/// the effective model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// The few-level effective Hamiltonian.
    #[default]
    Effective,
    /// The whole excitation sector of the chain.
    FullChain,
}

impl FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(Frame::Effective),
            "full" | "full_chain" => Ok(Frame::FullChain),
            _ => Err(Error::domain(format!(
                "unknown frame '{s}', expected effective or full"
            ))),
        }
    }
}

/// Detuning ramps applied from the creation instant on.
///
/// `D` drives the defect `n1` for Bell runs and the chosen neighbor for bound
/// pairs; `D1`, `D2` drive `n1` and `n2` of a W run. Rates are energy/time
/// for linear ramps and energy/time² for quadratic ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detuning {
    #[serde(default)]
    pub shape: ScheduleShape,
    #[serde(default, rename = "D")]
    pub rate: f64,
    #[serde(default, rename = "D1")]
    pub rate1: f64,
    #[serde(default, rename = "D2")]
    pub rate2: f64,
    /// Bound pair only: `n1 − 1` (default) or `n1 + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
}

fn default_snapshots() -> usize {
    200
}

fn default_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub chain: ChainSpec,
    /// Bell: `[n1, n2]`; W: `[n1, n1+1, n1+2]`; bound pair: `[n1]`.
    pub sites: Vec<usize>,
    #[serde(default)]
    pub detuning: Detuning,
    #[serde(default)]
    pub frame: Frame,
    /// Total simulated time, starting at 0.
    pub horizon: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Largest change of any configuration probability accepted between
    /// integrator refinements.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn wrap(site: i64, l: usize) -> usize {
    ((site - 1).rem_euclid(l as i64) + 1) as usize
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, chain: ChainSpec, sites: Vec<usize>, horizon: f64) -> Self {
        Self {
            kind,
            chain,
            sites,
            detuning: Detuning::default(),
            frame: Frame::default(),
            horizon,
            snapshots: default_snapshots(),
            tolerance: default_tolerance(),
        }
    }

    pub fn with_detuning(mut self, detuning: Detuning) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn excitations(&self) -> usize {
        match self.kind {
            ProtocolKind::BoundPair => 2,
            _ => 1,
        }
    }

    fn expect_sites(&self, n: usize) -> Result<()> {
        if self.sites.len() != n {
            return Err(Error::domain(format!(
                "{:?} protocol takes {n} site(s), got {}",
                self.kind,
                self.sites.len()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain("horizon must be positive"));
        }
        if self.snapshots < 2 {
            return Err(Error::domain("need at least 2 snapshots"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::domain("tolerance must be positive"));
        }
        let l = self.chain.sites;
        let det = &self.detuning;
        for (name, r) in [("D", det.rate), ("D1", det.rate1), ("D2", det.rate2)] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::domain(format!("{name} must be non-negative, got {r}")));
            }
        }
        match self.kind {
            ProtocolKind::Bell => {
                self.expect_sites(2)?;
                if det.rate1 != 0.0 || det.rate2 != 0.0 || det.site.is_some() {
                    return Err(Error::domain("Bell runs take D only"));
                }
            }
            ProtocolKind::W => {
                self.expect_sites(3)?;
                let n1 = self.sites[0];
                let want: Vec<usize> = (0..3).map(|k| wrap(n1 as i64 + k, l)).collect();
                if self.sites != want {
                    return Err(Error::domain(format!(
                        "W sites must be three adjacent sites {want:?}, got {:?}",
                        self.sites
                    )));
                }
                if self.chain.defects.len() != 3 {
                    return Err(Error::domain("W runs need exactly three defects"));
                }
                if det.rate != 0.0 || det.site.is_some() {
                    return Err(Error::domain("W runs take D1 and D2"));
                }
            }
            ProtocolKind::BoundPair => {
                self.expect_sites(1)?;
                if self.chain.defects.len() != 1 {
                    return Err(Error::domain("bound pair runs need exactly one defect"));
                }
                if det.rate1 != 0.0 || det.rate2 != 0.0 {
                    return Err(Error::domain("bound pair runs take D only"));
                }
                self.bound_pair_detuned_site()?;
            }
        }
        for &s in &self.sites {
            if s == 0 || s > l {
                return Err(Error::domain(format!("site {s} outside 1..={l}")));
            }
        }
        Ok(())
    }

    fn bound_pair_detuned_site(&self) -> Result<usize> {
        let l = self.chain.sites;
        let n1 = self.sites[0] as i64;
        let (left, right) = (wrap(n1 - 1, l), wrap(n1 + 1, l));
        match self.detuning.site {
            None => Ok(left),
            Some(s) if s == left || s == right => Ok(s),
            Some(s) => Err(Error::domain(format!(
                "bound pair detuning must act on site {left} or {right}, got {s}"
            ))),
        }
    }

    /// The effective model whose predictions set the creation instant.
    pub fn model(&self) -> Result<EffectiveModel> {
        match self.kind {
            ProtocolKind::Bell => two_defect_model(&self.chain, self.sites[0], self.sites[1]),
            ProtocolKind::W => three_defect_model(&self.chain, self.sites[0]),
            ProtocolKind::BoundPair => bound_pair_model(&self.chain, self.sites[0]),
        }
    }

    /// Detuning schedule switched on at `start`.
    pub fn schedule(&self, start: f64) -> Result<DetuningSchedule> {
        let det = &self.detuning;
        let s = DetuningSchedule::none();
        let schedule = match self.kind {
            ProtocolKind::Bell => s.with(self.sites[0], det.shape, det.rate, start),
            ProtocolKind::W => s
                .with(self.sites[0], det.shape, det.rate1, start)
                .with(self.sites[1], det.shape, det.rate2, start),
            ProtocolKind::BoundPair => {
                s.with(self.bound_pair_detuned_site()?, det.shape, det.rate, start)
            }
        };
        schedule.validate(self.chain.sites)?;
        Ok(schedule)
    }

    /// Sites whose probabilities are recorded.
    pub fn tracked_sites(&self) -> Vec<usize> {
        match self.kind {
            ProtocolKind::BoundPair => {
                let n = self.sites[0] as i64;
                (n - 1..=n + 1).map(|s| wrap(s, self.chain.sites)).collect()
            }
            _ => self.sites.clone(),
        }
    }

    /// Site pair whose concurrence is recorded.
    pub fn concurrence_pair(&self) -> (usize, usize) {
        match self.kind {
            ProtocolKind::BoundPair => {
                let t = self.tracked_sites();
                (t[0], t[2])
            }
            _ => (self.sites[0], self.sites[1]),
        }
    }

    /// Sites scored against their target probability, with that probability.
    pub fn target_sites(&self) -> (Vec<usize>, f64) {
        match self.kind {
            ProtocolKind::Bell => (self.sites.clone(), 0.5),
            ProtocolKind::W => (self.sites.clone(), 1.0 / 3.0),
            ProtocolKind::BoundPair => {
                let (a, b) = self.concurrence_pair();
                (vec![a, b], 0.5)
            }
        }
    }
}

/// First creation instant predicted by the effective model.
pub fn creation_time(model: &EffectiveModel) -> Result<f64> {
    let times = match model.kind {
        crate::perturbation::ModelKind::TwoDefect { .. } => bell_times(model, 1)?,
        crate::perturbation::ModelKind::ThreeDefect => w_times(model, 0)?,
        crate::perturbation::ModelKind::BoundPair => bound_pair_times(model, 1)?,
    };
    times
        .first()
        .copied()
        .ok_or_else(|| Error::Numerical("no creation instant".into()))
}

/// Mean, minimum and maximum of one channel over the final window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelScore {
    pub channel: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Observables evaluated at the creation instant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CreationValues {
    pub fid_raw: f64,
    pub fid_phase: f64,
    pub concurrence: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Probabilities of [`ProtocolSpec::tracked_sites`].
    pub site_probabilities: Vec<f64>,
}

/// Integrator diagnostics of the detuned segment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub step: f64,
    pub refinements: usize,
    pub observable_change: f64,
    pub norm_drift_rate: f64,
    pub renormalized: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolResult {
    pub kind: ProtocolKind,
    pub frame: Frame,
    #[serde(skip)]
    pub series: TimeSeries,
    pub creation_time: f64,
    /// Phases of the target configurations at creation relative to the first,
    /// in radians. They identify which Bell branch was created.
    pub branch_phases: Vec<f64>,
    pub at_creation: CreationValues,
    pub window_start: f64,
    pub scores: Vec<ChannelScore>,
    /// Largest `|P_site − P_target|` over the final window and target sites.
    pub target_deviation: f64,
    /// Absent when the run needed no integration (no detuning).
    pub diagnostics: Option<RunDiagnostics>,
    pub warnings: Vec<String>,
}

impl ProtocolResult {
    pub fn score(&self, channel: &str) -> Option<&ChannelScore> {
        self.scores.iter().find(|s| s.channel == channel)
    }
}

struct Observer<'a> {
    pspec: &'a ProtocolSpec,
    full: Arc<SectorBasis>,
    target: StateVector,
}

impl Observer<'_> {
    /// `[P_site..., fid_raw, fid_phase, concurrence, Q]`.
    fn observe(&self, psi: &StateVector) -> Result<Vec<f64>> {
        let psi = psi.embed(self.full.clone())?;
        let probs = site_probabilities(&psi);
        let mut row: Vec<f64> = self
            .pspec
            .tracked_sites()
            .iter()
            .map(|&s| probs[s - 1])
            .collect();
        let (a, b) = self.pspec.concurrence_pair();
        row.push(fidelity(&psi, &self.target)?);
        row.push(phase_maximized_fidelity(&psi, &self.target)?);
        row.push(pair_concurrence(&psi, a, b)?);
        row.push(global_entanglement(&psi)?);
        Ok(row)
    }
}

/// Runs one protocol: static evolution up to the predicted creation instant,
/// scheduled evolution after it.
pub fn run(pspec: &ProtocolSpec) -> Result<ProtocolResult> {
    pspec.validate()?;
    let model = pspec.model()?;
    let t_c = creation_time(&model)?;
    if pspec.horizon <= t_c {
        return Err(Error::domain(format!(
            "horizon {} does not extend past the creation instant {t_c}",
            pspec.horizon
        )));
    }
    let n = pspec.excitations();
    let full = Arc::new(SectorBasis::enumerate(pspec.chain.sites, n)?);

    // target: the model's own state at t_c
    let model_eig = diagonalize(&model.matrix)?;
    let start_config = model.configurations()[model.initial_index()];
    let model_psi0 = StateVector::basis_state(model.basis().clone(), &start_config)?;
    let model_at_c = propagate_static(&model_eig, &model_psi0, t_c)?;
    let target = StateVector::normalized(model.basis().clone(), model_at_c.amplitudes().to_vec())?
        .embed(full.clone())?;
    let a0 = model_at_c.amplitudes()[0];
    let branch_phases = model_at_c
        .amplitudes()
        .iter()
        .map(|a| (a / a0).arg())
        .collect();

    let frame_matrix: SectorMatrix = match pspec.frame {
        Frame::Effective => model.matrix.clone(),
        Frame::FullChain => build_static(&pspec.chain, n)?,
    };
    let frame_basis = frame_matrix.basis.clone();
    let psi0 = StateVector::basis_state(frame_basis.clone(), &start_config)?;
    let eig = diagonalize(&frame_matrix)?;
    let psi_c = propagate_static(&eig, &psi0, t_c)?;

    let observer = Observer {
        pspec,
        full: full.clone(),
        target,
    };
    let times = time_grid(0.0, pspec.horizon, pspec.snapshots);
    let schedule = pspec.schedule(t_c)?;
    let split = times.partition_point(|&t| t <= t_c);
    let mut states: Vec<StateVector> = times[..split]
        .iter()
        .map(|&t| propagate_static(&eig, &psi0, t))
        .collect::<Result<_>>()?;
    let diagnostics = if schedule.is_static() {
        for &t in &times[split..] {
            states.push(propagate_static(&eig, &psi0, t)?);
        }
        None
    } else {
        let h = ScheduledHamiltonian::new(&frame_matrix, schedule);
        let run = propagate_scheduled(
            &h,
            &psi_c,
            t_c,
            &times[split..],
            &IntegratorOptions::with_tolerance(pspec.tolerance),
            &basis_probabilities,
        )?;
        states.extend(run.states);
        Some(RunDiagnostics {
            step: run.step,
            refinements: run.refinements,
            observable_change: run.observable_change,
            norm_drift_rate: run.norm_drift_rate,
            renormalized: run.renormalized,
        })
    };

    let rows: Vec<Vec<f64>> = states
        .iter()
        .map(|s| observer.observe(s))
        .collect::<Result<_>>()?;
    let tracked = pspec.tracked_sites();
    let mut names: Vec<String> = tracked.iter().map(|s| format!("P_site_{s}")).collect();
    names.extend(["fid_raw", "fid_phase", "concurrence", "Q"].map(String::from));
    let mut series = TimeSeries::new(times.clone());
    for (k, name) in names.iter().enumerate() {
        series.push_channel(name.clone(), rows.iter().map(|r| r[k]).collect())?;
    }

    let creation_row = observer.observe(&psi_c)?;
    let m = tracked.len();
    let at_creation = CreationValues {
        site_probabilities: creation_row[..m].to_vec(),
        fid_raw: creation_row[m],
        fid_phase: creation_row[m + 1],
        concurrence: creation_row[m + 2],
        q: creation_row[m + 3],
    };

    let window_start = pspec.horizon * (1.0 - FINAL_WINDOW);
    let first = times.partition_point(|&t| t < window_start);
    let scores = series
        .channels
        .iter()
        .map(|(name, v)| {
            let w = &v[first..];
            ChannelScore {
                channel: name.clone(),
                mean: w.iter().sum::<f64>() / w.len() as f64,
                min: w.iter().copied().fold(f64::INFINITY, f64::min),
                max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let (target_sites, p_target) = pspec.target_sites();
    let target_deviation = target_sites
        .iter()
        .flat_map(|s| series.channel(&format!("P_site_{s}")).unwrap()[first..].iter())
        .map(|p| (p - p_target).abs())
        .fold(0.0, f64::max);

    let mut warnings = model.warnings.clone();
    warnings.dedup();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ProtocolResult {
        kind: pspec.kind,
        frame: pspec.frame,
        series,
        creation_time: t_c,
        branch_phases,
        at_creation,
        window_start,
        scores,
        target_deviation,
        diagnostics,
        warnings,
    })
}

/// Quantity varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SweepParameter {
    /// Detuning rate of Bell and bound-pair runs.
    D,
    D1,
    D2,
    /// Offset of every defect.
    #[serde(rename = "d")]
    Offset,
    Delta,
    /// Sites between the two Bell defects; moves `n2`.
    #[serde(rename = "mu")]
    Mu,
}

impl SweepParameter {
    pub const NAMES: [&'static str; 6] = ["D", "D1", "D2", "d", "Delta", "mu"];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::D => "D",
            SweepParameter::D1 => "D1",
            SweepParameter::D2 => "D2",
            SweepParameter::Offset => "d",
            SweepParameter::Delta => "Delta",
            SweepParameter::Mu => "mu",
        }
    }

    /// `pspec` with this parameter set to `value`.
    pub fn apply(self, pspec: &ProtocolSpec, value: f64) -> Result<ProtocolSpec> {
        let mut p = pspec.clone();
        match self {
            SweepParameter::D => p.detuning.rate = value,
            SweepParameter::D1 => p.detuning.rate1 = value,
            SweepParameter::D2 => p.detuning.rate2 = value,
            SweepParameter::Offset => p.chain.defects.values_mut().for_each(|d| *d = value),
            SweepParameter::Delta => p.chain.anisotropy = value,
            SweepParameter::Mu => {
                if p.kind != ProtocolKind::Bell {
                    return Err(Error::domain("mu sweeps apply to Bell runs only"));
                }
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(Error::domain(format!("mu must be a non-negative integer, got {value}")));
                }
                let l = p.chain.sites;
                let n1 = p.sites[0];
                let n2 = wrap(n1 as i64 + value as i64 + 1, l);
                let d = p.chain.defect_offset(n1);
                p.chain.defects.remove(&p.sites[1]);
                p.chain.defects.insert(n2, d);
                p.sites[1] = n2;
            }
        }
        Ok(p)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "D" => SweepParameter::D,
            "D1" => SweepParameter::D1,
            "D2" => SweepParameter::D2,
            "d" => SweepParameter::Offset,
            "Delta" => SweepParameter::Delta,
            "mu" => SweepParameter::Mu,
            _ => {
                return Err(Error::domain(format!(
                    "unknown sweep parameter '{s}', expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(p)
    }
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub creation_time: f64,
    pub concurrence_at_creation: f64,
    pub concurrence_mean: f64,
    pub concurrence_min: f64,
    pub fid_phase_mean: f64,
    pub fid_phase_min: f64,
    pub q_mean: f64,
    pub target_deviation: f64,
}

impl SweepRow {
    pub const HEADER: [&'static str; 9] = [
        "value",
        "creation_time",
        "concurrence_at_creation",
        "concurrence_mean",
        "concurrence_min",
        "fid_phase_mean",
        "fid_phase_min",
        "Q_mean",
        "target_deviation",
    ];

    pub fn from_result(value: f64, r: &ProtocolResult) -> Self {
        let c = r.score("concurrence").unwrap();
        let f = r.score("fid_phase").unwrap();
        Self {
            value,
            creation_time: r.creation_time,
            concurrence_at_creation: r.at_creation.concurrence,
            concurrence_mean: c.mean,
            concurrence_min: c.min,
            fid_phase_mean: f.mean,
            fid_phase_min: f.min,
            q_mean: r.score("Q").unwrap().mean,
            target_deviation: r.target_deviation,
        }
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.value,
            self.creation_time,
            self.concurrence_at_creation,
            self.concurrence_mean,
            self.concurrence_min,
            self.fid_phase_mean,
            self.fid_phase_min,
            self.q_mean,
            self.target_deviation,
        ]
    }
}

/// Runs `pspec` once per value, in parallel, keeping the input order.
pub fn sweep(pspec: &ProtocolSpec, parameter: SweepParameter, values: &[f64]) -> Result<Vec<SweepRow>> {
    let specs = values
        .iter()
        .map(|&v| parameter.apply(pspec, v))
        .collect::<Result<Vec<_>>>()?;
    for p in &specs {
        p.validate()?;
    }
    specs
        .par_iter()
        .zip(values.par_iter())
        .map(|(p, &v)| run(p).map(|r| SweepRow::from_result(v, &r)))
        .collect()
}
