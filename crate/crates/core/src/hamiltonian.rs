//! Sector-restricted XXZ + Zeeman Hamiltonian.
//!
//! ```text
//! H = Σ_n ε_n/2 σᶻ_n + Σ_n [ JΔ/4 σᶻ_n σᶻ_{n+1} + J/8 (σ⁺_n σ⁻_{n+1} + h.c.) ]
//! ```
//!
//! The ladder operators are taken as `σ± = σˣ ± iσʸ` (no factor 1/2), so a
//! single nearest-neighbor hop has matrix element `J/2` and the
//! single-excitation band is `E₁ ± J`. The normalization is not fixed by the
//! Hamiltonian alone; it is the one that makes two resonant neighbors couple
//! with strength `J/2`.
//!
//! Energies are measured from the all-down ground state, i.e. the builder
//! returns `H - E₀` with `E₀ = -Σ ε_n/2 + (bonds) JΔ/4`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{Configuration, SectorBasis};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

/// Static chain parameters. Energies share the unit of `coupling` (J).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub sites: usize,
    /// Hopping integral J.
    #[serde(default = "unit")]
    pub coupling: f64,
    /// Dimensionless anisotropy Δ.
    #[serde(default = "unit")]
    pub anisotropy: f64,
    /// Base level spacing ε.
    #[serde(default = "default_level_spacing")]
    pub level_spacing: f64,
    /// Site (1-based) to level-spacing offset d_n.
    #[serde(default)]
    pub defects: BTreeMap<usize, f64>,
    #[serde(default)]
    pub boundary: Boundary,
}

fn unit() -> f64 {
    1.0
}

fn default_level_spacing() -> f64 {
    1000.0
}

impl ChainSpec {
    /// Homogeneous periodic chain with `J = 1`, `ε = 1000 J`.
    pub fn new(sites: usize) -> Self {
        Self {
            sites,
            coupling: unit(),
            anisotropy: unit(),
            level_spacing: default_level_spacing(),
            defects: BTreeMap::new(),
            boundary: Boundary::Periodic,
        }
    }

    pub fn with_anisotropy(mut self, anisotropy: f64) -> Self {
        self.anisotropy = anisotropy;
        self
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_level_spacing(mut self, level_spacing: f64) -> Self {
        self.level_spacing = level_spacing;
        self
    }

    pub fn with_defect(mut self, site: usize, offset: f64) -> Self {
        self.defects.insert(site, offset);
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 || self.sites > crate::basis::MAX_SITES {
            return Err(Error::domain(format!(
                "site count {} outside 2..={}",
                self.sites,
                crate::basis::MAX_SITES
            )));
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(Error::domain(format!("J must be positive, got {}", self.coupling)));
        }
        if !(self.anisotropy >= 0.0 && self.anisotropy.is_finite()) {
            return Err(Error::domain(format!(
                "anisotropy must be non-negative, got {}",
                self.anisotropy
            )));
        }
        if !self.level_spacing.is_finite() {
            return Err(Error::domain("level spacing must be finite"));
        }
        for (&site, &d) in &self.defects {
            if site == 0 || site > self.sites {
                return Err(Error::domain(format!(
                    "defect site {site} outside 1..={}",
                    self.sites
                )));
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::domain(format!(
                    "defect offset on site {site} must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }

    /// Regime notes: ε should dominate J, JΔ and every d_n.
    pub fn warnings(&self) -> Vec<String> {
        let scale = self
            .defects
            .values()
            .copied()
            .fold(self.coupling.max(self.coupling * self.anisotropy), f64::max);
        if self.level_spacing < 10.0 * scale {
            vec![format!(
                "level spacing {} is not large compared to J, JΔ, d (max {scale}); \
                 the all-down state may not be the ground state",
                self.level_spacing
            )]
        } else {
            Vec::new()
        }
    }

    /// Level spacing ε_n = ε + d_n of 1-based `site`.
    pub fn site_level(&self, site: usize) -> f64 {
        self.level_spacing + self.defects.get(&site).copied().unwrap_or(0.0)
    }

    pub fn defect_offset(&self, site: usize) -> f64 {
        self.defects.get(&site).copied().unwrap_or(0.0)
    }

    /// Single-excitation bulk energy E₁ = ε − JΔ.
    pub fn single_excitation_energy(&self) -> f64 {
        self.level_spacing - self.coupling * self.anisotropy
    }

    fn bond_count(&self) -> usize {
        if self.periodic() {
            self.sites
        } else {
            self.sites - 1
        }
    }

    /// Energy of the all-down state, `E₀ = -Σ ε_n/2 + (bonds) JΔ/4`.
    pub fn ground_energy(&self) -> f64 {
        let zeeman: f64 = (1..=self.sites).map(|n| self.site_level(n)).sum();
        -zeeman / 2.0 + self.bond_count() as f64 * self.coupling * self.anisotropy / 4.0
    }

    /// Diagonal element of `H - E₀` for one configuration.
    pub fn diagonal_energy(&self, config: &Configuration) -> f64 {
        let zeeman: f64 = config.excited_sites().iter().map(|&n| self.site_level(n)).sum();
        let anti = config.anti_aligned_bonds(self.periodic()) as f64;
        zeeman - self.coupling * self.anisotropy / 2.0 * anti
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleShape {
    #[default]
    None,
    Linear,
    Quadratic,
}

/// Level-spacing ramp on one site: `δ(t) = D (t − t₀)^p` for `t ≥ t₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSchedule {
    pub site: usize,
    pub shape: ScheduleShape,
    /// Rate D, energy/time (linear) or energy/time² (quadratic).
    pub rate: f64,
    pub start: f64,
}

impl SiteSchedule {
    pub fn offset(&self, t: f64) -> f64 {
        let dt = t - self.start;
        if dt < 0.0 {
            return 0.0;
        }
        match self.shape {
            ScheduleShape::None => 0.0,
            ScheduleShape::Linear => self.rate * dt,
            ScheduleShape::Quadratic => self.rate * dt * dt,
        }
    }
}

/// Time-dependent offsets δ_n(t) added to the site level spacings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetuningSchedule {
    pub entries: Vec<SiteSchedule>,
}

impl DetuningSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, site: usize, shape: ScheduleShape, rate: f64, start: f64) -> Self {
        self.entries.push(SiteSchedule {
            site,
            shape,
            rate,
            start,
        });
        self
    }

    pub fn validate(&self, sites: usize) -> Result<()> {
        for e in &self.entries {
            if e.site == 0 || e.site > sites {
                return Err(Error::domain(format!(
                    "schedule site {} outside 1..={sites}",
                    e.site
                )));
            }
            if !(e.rate >= 0.0 && e.rate.is_finite()) {
                return Err(Error::domain(format!(
                    "detuning rate must be non-negative, got {}",
                    e.rate
                )));
            }
        }
        Ok(())
    }

    /// δ_n(t) for 1-based `site`.
    pub fn offset(&self, site: usize, t: f64) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.site == site)
            .map(|e| e.offset(t))
            .sum()
    }

    pub fn is_static(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.shape == ScheduleShape::None || e.rate == 0.0)
    }

    pub fn sites(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.entries.iter().map(|e| e.site).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Real symmetric Hamiltonian over a (sub-)sector basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorMatrix {
    pub basis: Arc<SectorBasis>,
    pub matrix: DMatrix<f64>,
}

impl SectorMatrix {
    pub fn new(basis: Arc<SectorBasis>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = basis.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::domain(format!(
                "matrix is {}x{}, basis has {n} states",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { basis, matrix })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Adds δ_n(t) to the diagonal of every configuration with site n excited.
    pub fn with_detuning(&self, schedule: &DetuningSchedule, t: f64) -> SectorMatrix {
        let mut out = self.clone();
        for (i, c) in self.basis.states().iter().enumerate() {
            out.matrix[(i, i)] += detuning_shift(schedule, c, t);
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }
}

pub(crate) fn detuning_shift(schedule: &DetuningSchedule, config: &Configuration, t: f64) -> f64 {
    schedule
        .entries
        .iter()
        .filter(|e| config.is_excited(e.site))
        .map(|e| e.offset(t))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EnergyReference {
    /// Measured from the all-down state.
    #[default]
    Ground,
    /// Bare eigenvalues of the Hamiltonian, for debugging.
    Raw,
}

/// `H − E₀` restricted to the sector with `excitations` up spins.
pub fn build_static(spec: &ChainSpec, excitations: usize) -> Result<SectorMatrix> {
    build_static_with(spec, excitations, EnergyReference::Ground)
}

pub fn build_static_with(
    spec: &ChainSpec,
    excitations: usize,
    reference: EnergyReference,
) -> Result<SectorMatrix> {
    spec.validate()?;
    let basis = Arc::new(SectorBasis::enumerate(spec.sites, excitations)?);
    let shift = match reference {
        EnergyReference::Ground => 0.0,
        EnergyReference::Raw => spec.ground_energy(),
    };
    let matrix = assemble(spec, &basis, shift);
    Ok(SectorMatrix { basis, matrix })
}

fn assemble(spec: &ChainSpec, basis: &SectorBasis, shift: f64) -> DMatrix<f64> {
    let n = basis.len();
    let l = spec.sites;
    let hop = spec.coupling / 2.0;
    let bonds = if spec.periodic() { l } else { l - 1 };
    let mut h = DMatrix::zeros(n, n);
    for (i, c) in basis.states().iter().enumerate() {
        h[(i, i)] = spec.diagonal_energy(c) + shift;
        for b in 0..bonds {
            let (p, q) = (b, (b + 1) % l);
            let bits = c.bits();
            if (bits >> p) & 1 != (bits >> q) & 1 {
                let target = bits ^ (1 << p) ^ (1 << q);
                let cfg = Configuration::from_bits(target, l).expect("hop stays in range");
                if let Some(j) = basis.index_of(&cfg) {
                    h[(j, i)] += hop;
                }
            }
        }
    }
    h
}

/// [`build_static`] with `ε_n → ε_n + δ_n(t)`.
pub fn build_at_time(
    spec: &ChainSpec,
    schedule: &DetuningSchedule,
    excitations: usize,
    t: f64,
) -> Result<SectorMatrix> {
    if t < 0.0 {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    schedule.validate(spec.sites)?;
    Ok(build_static(spec, excitations)?.with_detuning(schedule, t))
}

/// Single-excitation Hamiltonian restricted to excitations sitting on the
/// listed defect sites, in the order given.
pub fn defect_block(spec: &ChainSpec, defect_sites: &[usize]) -> Result<SectorMatrix> {
    spec.validate()?;
    let first = *defect_sites
        .first()
        .ok_or_else(|| Error::domain("no defect sites given"))?;
    let d = spec.defect_offset(first);
    for &s in defect_sites {
        if s == 0 || s > spec.sites {
            return Err(Error::domain(format!("site {s} outside 1..={}", spec.sites)));
        }
        if spec.defect_offset(s) != d {
            return Err(Error::domain(format!(
                "defect offsets differ: site {first} has {d}, site {s} has {}",
                spec.defect_offset(s)
            )));
        }
    }
    let configs = defect_sites
        .iter()
        .map(|&s| Configuration::from_sites(&[s as i64], spec.sites))
        .collect::<Result<Vec<_>>>()?;
    let basis = Arc::new(SectorBasis::from_configurations(configs)?);
    let matrix = assemble(spec, &basis, 0.0);
    Ok(SectorMatrix { basis, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn homogeneous_single_excitation_diagonal_is_e1() {
        let spec = ChainSpec::new(6).with_anisotropy(2.5);
        let h = build_static(&spec, 1).unwrap();
        let e1 = spec.single_excitation_energy();
        for i in 0..6 {
            assert!((h.matrix[(i, i)] - e1).abs() < TOL);
        }
    }

    #[test]
    fn adjacent_defect_pair_block() {
        let d = 10.0;
        let spec = ChainSpec::new(8).with_defect(3, d).with_defect(4, d);
        let h = build_static(&spec, 1).unwrap();
        let (i, j) = (
            h.basis.index_of_sites(&[3]).unwrap(),
            h.basis.index_of_sites(&[4]).unwrap(),
        );
        let e1 = spec.single_excitation_energy();
        assert!((h.matrix[(i, i)] - (e1 + d)).abs() < TOL);
        assert!((h.matrix[(j, j)] - (e1 + d)).abs() < TOL);
        assert_eq!(h.matrix[(i, j)], 0.5);
    }

    #[test]
    fn two_excitation_diagonals() {
        let spec = ChainSpec::new(8).with_anisotropy(4.0);
        let h = build_static(&spec, 2).unwrap();
        let e1 = spec.single_excitation_energy();
        let jd = spec.coupling * spec.anisotropy;
        let adj = h.basis.index_of_sites(&[2, 3]).unwrap();
        let far = h.basis.index_of_sites(&[2, 6]).unwrap();
        assert!((h.matrix[(adj, adj)] - (2.0 * e1 + jd)).abs() < TOL);
        assert!((h.matrix[(far, far)] - 2.0 * e1).abs() < TOL);
    }

    #[test]
    fn empty_sector_is_zero() {
        let h = build_static(&ChainSpec::new(5).with_defect(2, 3.0), 0).unwrap();
        assert_eq!(h.matrix[(0, 0)], 0.0);
    }

    #[test]
    fn off_diagonals_are_single_hops() {
        let spec = ChainSpec::new(7).with_anisotropy(3.0).with_defect(2, 5.0);
        for n in 0..=7 {
            let h = build_static(&spec, n).unwrap();
            assert!(h.is_symmetric());
            for (i, a) in h.basis.states().iter().enumerate() {
                for (j, b) in h.basis.states().iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let v = h.matrix[(i, j)];
                    if a.hops(true).contains(b) {
                        assert_eq!(v, 0.5);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn open_boundary_drops_wrap_bond() {
        let spec = ChainSpec::new(5).with_boundary(Boundary::Open);
        let h = build_static(&spec, 1).unwrap();
        let (a, b) = (
            h.basis.index_of_sites(&[1]).unwrap(),
            h.basis.index_of_sites(&[5]).unwrap(),
        );
        assert_eq!(h.matrix[(a, b)], 0.0);
        // end sites have one bond to flip instead of two
        let e = spec.level_spacing - spec.coupling * spec.anisotropy / 2.0;
        assert!((h.matrix[(a, a)] - e).abs() < TOL);
    }

    #[test]
    fn raw_reference_adds_ground_energy() {
        let spec = ChainSpec::new(4).with_defect(1, 2.0);
        let shifted = build_static(&spec, 2).unwrap();
        let raw = build_static_with(&spec, 2, EnergyReference::Raw).unwrap();
        let diff = &raw.matrix - &shifted.matrix;
        for i in 0..shifted.dim() {
            assert!((diff[(i, i)] - spec.ground_energy()).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_inactive_before_start() {
        let spec = ChainSpec::new(6).with_defect(2, 10.0).with_defect(3, 10.0);
        let sched = DetuningSchedule::none().with(2, ScheduleShape::Linear, 3.0, 5.0);
        let a = build_at_time(&spec, &sched, 1, 4.9).unwrap();
        assert_eq!(a, build_static(&spec, 1).unwrap());
    }

    #[test]
    fn linear_and_quadratic_offsets() {
        let spec = ChainSpec::new(6).with_defect(2, 10.0).with_defect(3, 10.0);
        let base = build_static(&spec, 2).unwrap();
        let d = 0.7;
        let t0 = 1.5;
        let lin = DetuningSchedule::none().with(2, ScheduleShape::Linear, d, t0);
        let quad = DetuningSchedule::none().with(2, ScheduleShape::Quadratic, d, t0);
        let hl = build_at_time(&spec, &lin, 2, t0 + 1.0).unwrap();
        let hq = build_at_time(&spec, &quad, 2, t0 + 2.0).unwrap();
        for (i, c) in base.basis.states().iter().enumerate() {
            let want = if c.is_excited(2) { 1.0 } else { 0.0 };
            assert!((hl.matrix[(i, i)] - base.matrix[(i, i)] - d * want).abs() < 1e-12);
            assert!((hq.matrix[(i, i)] - base.matrix[(i, i)] - 4.0 * d * want).abs() < 1e-12);
        }
    }

    #[test]
    fn defect_blocks() {
        let d = 10.0;
        let spec = ChainSpec::new(9)
            .with_defect(4, d)
            .with_defect(5, d)
            .with_defect(6, d);
        let e = spec.single_excitation_energy() + d;
        let b3 = defect_block(&spec, &[4, 5, 6]).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[e, 0.5, 0.0, 0.5, e, 0.5, 0.0, 0.5, e]);
        assert!((b3.matrix - want).abs().max() < TOL);
        let b2 = defect_block(&spec, &[4, 5]).unwrap();
        assert_eq!(b2.matrix[(0, 1)], 0.5);
        let b1 = defect_block(&spec, &[5]).unwrap();
        assert!((b1.matrix[(0, 0)] - e).abs() < TOL);
        let uneven = spec.clone().with_defect(6, 11.0);
        assert!(defect_block(&uneven, &[4, 5, 6]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ChainSpec::new(4).with_coupling(0.0).validate().is_err());
        assert!(ChainSpec::new(4).with_defect(5, 1.0).validate().is_err());
        assert!(ChainSpec::new(4).with_defect(2, -1.0).validate().is_err());
        assert!(ChainSpec::new(4).with_anisotropy(-0.1).validate().is_err());
        assert!(ChainSpec::new(4).warnings().is_empty());
        assert!(!ChainSpec::new(4).with_level_spacing(5.0).warnings().is_empty());
    }
}
