//! Few-level effective models for resonant defect configurations, their
//! closed-form eigenpairs and the oscillation periods, creation instants and
//! band layout they predict.
//!
//! All formulas assume the defect offsets `d` are large compared to `J` and,
//! for two excitations, `JΔ ≫ d ≫ J`. Violations are reported as warnings on
//! the model rather than errors.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{Configuration, SectorBasis};
use crate::error::{Error, Result};
use crate::evolve::{diagonalize, EigenSystem};
use crate::hamiltonian::{build_static, ChainSpec, SectorMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    /// Two equal defects with `mu` sites between them.
    TwoDefect { mu: usize },
    /// Three adjacent equal defects.
    ThreeDefect,
    /// Two adjacent excitations sharing a single defect.
    BoundPair,
}

/// A perturbative few-level Hamiltonian with its analytic eigenpairs.
#[derive(Clone, Debug)]
pub struct EffectiveModel {
    pub kind: ModelKind,
    /// Effective Hamiltonian over the participating configurations.
    pub matrix: SectorMatrix,
    /// Analytic eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Analytic eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Splitting that sets the oscillation frequency.
    pub frequency: f64,
    /// Order of perturbation theory of the effective coupling.
    pub order: usize,
    /// True when the coupling goes beyond the closed forms (μ ≥ 2).
    pub extrapolated: bool,
    pub warnings: Vec<String>,
}

impl EffectiveModel {
    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.matrix.basis
    }

    pub fn configurations(&self) -> &[Configuration] {
        self.matrix.basis.states()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn coupling(&self) -> f64 {
        self.matrix.matrix[(0, 1)]
    }

    /// Index (in [`Self::configurations`]) of the state the protocol starts from.
    pub fn initial_index(&self) -> usize {
        match self.kind {
            ModelKind::ThreeDefect => 1,
            _ => 0,
        }
    }

    /// Closed-form probabilities of each configuration at time `t`, starting
    /// from the configuration at [`Self::initial_index`].
    pub fn predicted_probabilities(&self, t: f64) -> Vec<f64> {
        let c = (self.frequency * t).cos();
        match self.kind {
            ModelKind::ThreeDefect => vec![(1.0 - c) / 4.0, (1.0 + c) / 2.0, (1.0 - c) / 4.0],
            _ => vec![(1.0 + c) / 2.0, (1.0 - c) / 2.0],
        }
    }

    /// Largest difference between the analytic eigenpairs and a numerical
    /// diagonalization of [`Self::matrix`]. Eigenvectors are compared up to sign.
    pub fn numerical_discrepancy(&self) -> Result<f64> {
        let eig = diagonalize(&self.matrix)?;
        let mut worst: f64 = 0.0;
        for k in 0..self.dim() {
            worst = worst.max((eig.values[k] - self.eigenvalues[k]).abs());
            let analytic = self.eigenvectors.column(k);
            let numeric = eig.vectors.column(k);
            let sign = analytic.dot(&numeric).signum();
            worst = worst.max((analytic - numeric * sign).amax());
        }
        Ok(worst)
    }

    /// Creation instants: Bell times for two-level defect models, W times
    /// for the three-defect model, bound-pair Bell times otherwise.
    pub fn creation_times(&self, count: usize) -> Result<Vec<f64>> {
        let times = match self.kind {
            ModelKind::TwoDefect { .. } => bell_times(self, 2 * count)?,
            ModelKind::ThreeDefect => w_times(self, count.saturating_sub(1))?,
            ModelKind::BoundPair => bound_pair_times(self, 2 * count)?,
        };
        Ok(times.into_iter().take(count).collect())
    }
}

fn uniform_offset(spec: &ChainSpec, sites: &[usize]) -> Result<f64> {
    let d = spec.defect_offset(sites[0]);
    for &s in sites {
        if s == 0 || s > spec.sites {
            return Err(Error::domain(format!("site {s} outside 1..={}", spec.sites)));
        }
        let ds = spec.defect_offset(s);
        if ds <= 0.0 {
            return Err(Error::domain(format!("site {s} is not a defect")));
        }
        if ds != d {
            return Err(Error::domain(format!(
                "defects must share one offset: site {} has {d}, site {s} has {ds}",
                sites[0]
            )));
        }
    }
    Ok(d)
}

fn wrap(site: i64, l: usize) -> usize {
    ((site - 1).rem_euclid(l as i64) + 1) as usize
}

/// Sites strictly between two sites along the shorter arc (periodic) or the
/// chain (open).
pub fn separation(spec: &ChainSpec, n1: usize, n2: usize) -> Result<usize> {
    if n1 == n2 {
        return Err(Error::domain("defect sites coincide"));
    }
    let diff = n1.abs_diff(n2);
    let dist = if spec.periodic() {
        diff.min(spec.sites - diff)
    } else {
        diff
    };
    Ok(dist - 1)
}

fn sub_matrix(configs: Vec<Configuration>, values: &[f64]) -> Result<SectorMatrix> {
    let n = configs.len();
    let basis = Arc::new(SectorBasis::from_configurations(configs)?);
    SectorMatrix::new(basis, DMatrix::from_row_slice(n, n, values))
}

fn validity_warnings(spec: &ChainSpec, d: f64) -> Vec<String> {
    let mut w = spec.warnings();
    if d <= 5.0 * spec.coupling {
        w.push(format!(
            "defect offset {d} ≤ 5J: perturbative predictions are unreliable"
        ));
    }
    w
}

/// Effective model of two equal defects at `n1`, `n2`.
///
/// Adjacent defects couple at first order (`J/2`), next-nearest at second
/// order (`J²/4d`, with diagonal shift `J²/2d`). For μ ≥ 2 the coupling
/// `(J/2)(J/2d)^μ` continues the period law and is marked extrapolated; its
/// diagonal carries no shift.
pub fn two_defect_model(spec: &ChainSpec, n1: usize, n2: usize) -> Result<EffectiveModel> {
    spec.validate()?;
    let d = uniform_offset(spec, &[n1, n2])?;
    let mu = separation(spec, n1, n2)?;
    let j = spec.coupling;
    let e1 = spec.single_excitation_energy();
    let (diag, off) = match mu {
        0 => (e1 + d, j / 2.0),
        1 => (e1 + d + j * j / (2.0 * d), j * j / (4.0 * d)),
        _ => (e1 + d, j / 2.0 * (j / (2.0 * d)).powi(mu as i32)),
    };
    let configs = vec![
        Configuration::from_sites(&[n1 as i64], spec.sites)?,
        Configuration::from_sites(&[n2 as i64], spec.sites)?,
    ];
    let matrix = sub_matrix(configs, &[diag, off, off, diag])?;
    let mut warnings = validity_warnings(spec, d);
    if mu >= 2 {
        warnings.push(format!("coupling for μ = {mu} is extrapolated from the period law"));
    }
    Ok(EffectiveModel {
        kind: ModelKind::TwoDefect { mu },
        matrix,
        eigenvalues: vec![diag - off, diag + off],
        eigenvectors: DMatrix::from_row_slice(
            2,
            2,
            &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        ),
        frequency: 2.0 * off,
        order: mu + 1,
        extrapolated: mu >= 2,
        warnings,
    })
}

/// `T_μ = T₀ (2d/J)^μ` with `T₀ = 2π/J`.
pub fn period_law(coupling: f64, offset: f64, mu: usize) -> f64 {
    2.0 * PI / coupling * (2.0 * offset / coupling).powi(mu as i32)
}

/// Oscillation period for defects `mu` sites apart, using the chain's common
/// defect offset.
pub fn oscillation_period(spec: &ChainSpec, mu: usize) -> Result<f64> {
    let sites: Vec<usize> = spec.defects.keys().copied().collect();
    if sites.is_empty() {
        return Err(Error::domain("chain has no defects"));
    }
    let d = uniform_offset(spec, &sites)?;
    Ok(period_law(spec.coupling, d, mu))
}

fn require_two_level(model: &EffectiveModel) -> Result<()> {
    if model.dim() != 2 {
        return Err(Error::domain("expected a two-level model"));
    }
    Ok(())
}

/// `t_B = πk / [2(E₊ − E₋)]` for odd `k ≤ k_max`.
pub fn bell_times(model: &EffectiveModel, k_max: usize) -> Result<Vec<f64>> {
    require_two_level(model)?;
    Ok((1..=k_max)
        .step_by(2)
        .map(|k| PI * k as f64 / (2.0 * model.frequency))
        .collect())
}

/// Effective model of three adjacent equal defects `n1, n1+1, n1+2`.
pub fn three_defect_model(spec: &ChainSpec, n1: usize) -> Result<EffectiveModel> {
    spec.validate()?;
    let sites: Vec<usize> = (0..3).map(|k| wrap(n1 as i64 + k, spec.sites)).collect();
    let d = uniform_offset(spec, &sites)?;
    let j = spec.coupling;
    let e = spec.single_excitation_energy() + d;
    let h = j / 2.0;
    let configs = sites
        .iter()
        .map(|&s| Configuration::from_sites(&[s as i64], spec.sites))
        .collect::<Result<Vec<_>>>()?;
    let matrix = sub_matrix(configs, &[e, h, 0.0, h, e, h, 0.0, h, e])?;
    let r2 = 2f64.sqrt();
    let split = j / r2;
    // columns: ψ_c, ψ_b, ψ_a
    let vectors = DMatrix::from_columns(&[
        DVector::from_vec(vec![0.5, -r2 / 2.0, 0.5]),
        DVector::from_vec(vec![-FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2]),
        DVector::from_vec(vec![0.5, r2 / 2.0, 0.5]),
    ]);
    Ok(EffectiveModel {
        kind: ModelKind::ThreeDefect,
        matrix,
        eigenvalues: vec![e - split, e, e + split],
        eigenvectors: vectors,
        frequency: 2.0 * split,
        order: 1,
        extrapolated: false,
        warnings: validity_warnings(spec, d),
    })
}

/// W-state instants, indexed as
/// `t_W = [(−1)^k arccos(−1/3) + 2π(k − ⌊k/2⌋)] / (E_a − E_c)` for `k = 0..=k_max`.
pub fn w_times(model: &EffectiveModel, k_max: usize) -> Result<Vec<f64>> {
    if model.kind != ModelKind::ThreeDefect {
        return Err(Error::domain("W times need the three-defect model"));
    }
    let a = (-1.0f64 / 3.0).acos();
    Ok((0..=k_max)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (sign * a + 2.0 * PI * (k - k / 2) as f64) / model.frequency
        })
        .collect())
}

/// First `count` roots of `cos(ω t) = level` for `t > 0`, located by scanning
/// and bisection. Independent of the closed forms above.
pub fn cosine_crossings(frequency: f64, level: f64, count: usize) -> Vec<f64> {
    let f = |t: f64| (frequency * t).cos() - level;
    let dt = 2.0 * PI / frequency / 256.0;
    let mut out = Vec::with_capacity(count);
    let mut lo = 0.0;
    while out.len() < count {
        let hi = lo + dt;
        if f(lo) == 0.0 && lo > 0.0 {
            out.push(lo);
        } else if f(lo) * f(hi) < 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if f(a) * f(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        lo = hi;
    }
    out
}

/// Two-level model of a bound pair on a single defect `n1`:
/// `φ(n1−1, n1)` and `φ(n1, n1+1)` couple at second order through
/// `φ(n1−1, n1+1)`.
pub fn bound_pair_model(spec: &ChainSpec, n1: usize) -> Result<EffectiveModel> {
    spec.validate()?;
    if spec.sites < 4 {
        return Err(Error::domain("bound pair model needs at least 4 sites"));
    }
    let d = uniform_offset(spec, &[n1])?;
    if spec.anisotropy <= 0.0 {
        return Err(Error::domain("bound pairs need Δ > 0"));
    }
    let j = spec.coupling;
    let jd = j * spec.anisotropy;
    let e1 = spec.single_excitation_energy();
    let off = j * j / (4.0 * (jd + d));
    let diag = 2.0 * e1 + d + jd + j / (4.0 * spec.anisotropy) + off;
    let n = n1 as i64;
    let configs = vec![
        Configuration::from_sites(&[n - 1, n], spec.sites)?,
        Configuration::from_sites(&[n, n + 1], spec.sites)?,
    ];
    let matrix = sub_matrix(configs, &[diag, off, off, diag])?;
    let mut warnings = validity_warnings(spec, d);
    if jd < 3.0 * d {
        warnings.push(format!("JΔ = {jd} is not large compared to d = {d}"));
    }
    if spec.defects.len() != 1 {
        warnings.push("bound pair model assumes a single defect".into());
    }
    Ok(EffectiveModel {
        kind: ModelKind::BoundPair,
        matrix,
        eigenvalues: vec![diag - off, diag + off],
        eigenvectors: DMatrix::from_row_slice(
            2,
            2,
            &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        ),
        frequency: 2.0 * off,
        order: 2,
        extrapolated: false,
        warnings,
    })
}

/// `t_BP = 2(JΔ + d)[π/2 + kπ]/J²` for odd `k ≤ k_max`, as stated.
///
/// With `E₊ − E₋ = J²/[2(JΔ + d)]` every integer `k ≥ 0` gives equal
/// populations; the odd-`k` instants are every second one of
/// [`half_population_times`].
pub fn bound_pair_times(model: &EffectiveModel, k_max: usize) -> Result<Vec<f64>> {
    if model.kind != ModelKind::BoundPair {
        return Err(Error::domain("bound-pair times need the bound-pair model"));
    }
    Ok((1..=k_max)
        .step_by(2)
        .map(|k| (PI / 2.0 + k as f64 * PI) / model.frequency)
        .collect())
}

/// Every instant at which a two-level model started in one configuration has
/// equal populations: `cos((E₊ − E₋) t) = 0`.
pub fn half_population_times(model: &EffectiveModel, count: usize) -> Result<Vec<f64>> {
    require_two_level(model)?;
    Ok((0..count)
        .map(|m| (PI / 2.0 + m as f64 * PI) / model.frequency)
        .collect())
}

/// Exact levels of the full sector that continue the model's levels: the
/// eigenstates carrying the most weight on the model configurations.
#[derive(Clone, Debug, Serialize)]
pub struct ExactComparison {
    pub predicted: Vec<f64>,
    pub exact: Vec<f64>,
    /// Weight of each selected eigenstate inside the model subspace.
    pub weights: Vec<f64>,
}

impl ExactComparison {
    pub fn exact_splitting(&self) -> f64 {
        self.exact.last().unwrap() - self.exact[0]
    }

    pub fn predicted_splitting(&self) -> f64 {
        self.predicted.last().unwrap() - self.predicted[0]
    }
}

pub fn compare_with_exact(model: &EffectiveModel, spec: &ChainSpec) -> Result<ExactComparison> {
    let h = build_static(spec, model.basis().excitations())?;
    let eig = diagonalize(&h)?;
    Ok(compare_with_eigensystem(model, &eig))
}

pub fn compare_with_eigensystem(model: &EffectiveModel, eig: &EigenSystem) -> ExactComparison {
    let idx: Vec<usize> = model
        .configurations()
        .iter()
        .filter_map(|c| eig.basis.index_of(c))
        .collect();
    let mut scored: Vec<(usize, f64)> = (0..eig.values.len())
        .map(|k| (k, idx.iter().map(|&i| eig.vectors[(i, k)].powi(2)).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut chosen: Vec<(usize, f64)> = scored.into_iter().take(model.dim()).collect();
    chosen.sort_by_key(|c| c.0);
    ExactComparison {
        predicted: model.eigenvalues.clone(),
        exact: chosen.iter().map(|&(k, _)| eig.values[k]).collect(),
        weights: chosen.iter().map(|&(_, w)| w).collect(),
    }
}

/// Predicted energy band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandPrediction {
    pub label: String,
    pub center: f64,
    pub half_width: f64,
    pub expected_count: usize,
}

impl BandPrediction {
    fn new(label: &str, center: f64, half_width: f64, expected_count: usize) -> Self {
        Self {
            label: label.to_string(),
            center,
            half_width,
            expected_count,
        }
    }

    pub fn contains(&self, energy: f64, tolerance: f64) -> bool {
        (energy - self.center).abs() <= self.half_width + tolerance
    }
}

/// Band membership tolerance `3J² / (JΔ + d)`, `d` the largest defect offset.
pub fn default_band_tolerance(spec: &ChainSpec) -> f64 {
    let d = spec.defects.values().copied().fold(0.0, f64::max);
    let j = spec.coupling;
    3.0 * j * j / (j * spec.anisotropy + d)
}

/// Predicted bands for one or two excitations on a periodic chain.
pub fn band_layout(spec: &ChainSpec, excitations: usize) -> Result<Vec<BandPrediction>> {
    spec.validate()?;
    if !spec.periodic() {
        return Err(Error::domain("band layout assumes a periodic chain"));
    }
    let l = spec.sites;
    let j = spec.coupling;
    let e1 = spec.single_excitation_energy();
    let n_def = spec.defects.len();
    match excitations {
        1 => {
            let mut bands = vec![BandPrediction::new("bulk", e1, j, l - n_def)];
            let mut offsets: Vec<f64> = spec.defects.values().copied().collect();
            offsets.sort_by(f64::total_cmp);
            offsets.dedup();
            for d in offsets {
                let count = spec.defects.values().filter(|&&x| x == d).count();
                let label = if n_def == count { "defect".to_string() } else { format!("defect_d{d}") };
                bands.push(BandPrediction::new(&label, e1 + d, j, count));
            }
            if n_def == l {
                bands.remove(0);
            }
            Ok(bands)
        }
        2 => {
            if spec.anisotropy <= 0.0 {
                return Err(Error::domain("two-excitation bands need Δ > 0"));
            }
            if l < 5 {
                return Err(Error::domain("two-excitation band layout needs at least 5 sites"));
            }
            let delta = spec.anisotropy;
            let jd = j * delta;
            let bound_center = 2.0 * e1 + jd + j / (2.0 * delta);
            let bound_hw = j / (2.0 * delta);
            match n_def {
                0 => Ok(vec![
                    BandPrediction::new("free", 2.0 * e1, 2.0 * j, l * (l - 3) / 2),
                    BandPrediction::new("bound_pair", bound_center, bound_hw, l),
                ]),
                1 => {
                    let d = *spec.defects.values().next().unwrap();
                    let off = j * j / (4.0 * (jd + d));
                    Ok(vec![
                        BandPrediction::new("free", 2.0 * e1, 2.0 * j, (l - 2) * (l - 3) / 2),
                        BandPrediction::new("trapped", 2.0 * e1 + d, 2.0 * j, l - 3),
                        BandPrediction::new("bound_pair", bound_center, bound_hw, l - 2),
                        BandPrediction::new(
                            "defect_pair",
                            2.0 * e1 + d + jd + j / (4.0 * delta) + off,
                            off,
                            2,
                        ),
                    ])
                }
                _ => Err(Error::domain(
                    "two-excitation band layout supports at most one defect",
                )),
            }
        }
        n => Err(Error::domain(format!("band layout supports 1 or 2 excitations, got {n}"))),
    }
}

/// Band membership of one predicted band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandMembers {
    pub band: BandPrediction,
    pub members: Vec<f64>,
    /// Largest `|E − center|` among members.
    pub max_deviation: f64,
}

impl BandMembers {
    /// Half the spread of the member energies.
    pub fn measured_half_width(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        let lo = self.members.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (hi - lo)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandAssignment {
    pub bands: Vec<BandMembers>,
    /// Energies outside every band.
    pub unassigned: Vec<f64>,
    /// Energies inside more than one band.
    pub ambiguous: Vec<f64>,
}

impl BandAssignment {
    pub fn is_complete(&self) -> bool {
        self.unassigned.is_empty() && self.ambiguous.is_empty()
    }
}

pub fn assign_bands(energies: &[f64], bands: &[BandPrediction], tolerance: f64) -> BandAssignment {
    let mut out: Vec<BandMembers> = bands
        .iter()
        .map(|b| BandMembers {
            band: b.clone(),
            members: Vec::new(),
            max_deviation: 0.0,
        })
        .collect();
    let mut unassigned = Vec::new();
    let mut ambiguous = Vec::new();
    for &e in energies {
        let hits: Vec<usize> = (0..bands.len())
            .filter(|&i| bands[i].contains(e, tolerance))
            .collect();
        match hits.as_slice() {
            [] => unassigned.push(e),
            [i] => {
                let m = &mut out[*i];
                m.max_deviation = m.max_deviation.max((e - m.band.center).abs());
                m.members.push(e);
            }
            _ => ambiguous.push(e),
        }
    }
    BandAssignment {
        bands: out,
        unassigned,
        ambiguous,
    }
}
