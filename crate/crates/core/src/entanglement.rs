//! Reduced density matrices, Wootters concurrence, Meyer-Wallach global
//! entanglement and overlap fidelities for sector states.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{Configuration, SectorBasis};
use crate::error::{Error, Result};
use crate::evolve::StateVector;

/// Largest subset `reduce` accepts.
pub const MAX_REDUCED_QUBITS: usize = 4;

/// Eigenvalues down to this negative value are treated as round-off and
/// clipped to zero.
pub const PSD_FLOOR: f64 = -1e-12;

/// Density matrix of a few qubits. Index bit `m − 1 − k` holds the state of
/// `sites[k]`, so the first listed site is the leftmost qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDensity {
    pub sites: Vec<usize>,
    pub matrix: DMatrix<Complex64>,
}

impl ReducedDensity {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Eigenvalues, ascending, with round-off negativity clipped.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        clip_psd(&mut ev)?;
        Ok(ev)
    }
}

fn clip_psd(values: &mut [f64]) -> Result<()> {
    for v in values.iter_mut() {
        if *v < PSD_FLOOR {
            return Err(Error::domain(format!(
                "matrix is not positive semidefinite (eigenvalue {v:.3e})"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Partial trace of `|ψ⟩⟨ψ|` over every site outside `subset`.
pub fn reduce(psi: &StateVector, subset: &[usize]) -> Result<ReducedDensity> {
    let l = psi.basis().num_sites();
    if subset.is_empty() || subset.len() > MAX_REDUCED_QUBITS {
        return Err(Error::domain(format!(
            "subset size {} outside 1..={MAX_REDUCED_QUBITS}",
            subset.len()
        )));
    }
    let mut mask = 0u64;
    for &s in subset {
        if s == 0 || s > l {
            return Err(Error::domain(format!("site {s} outside 1..={l}")));
        }
        let bit = 1u64 << (s - 1);
        if mask & bit != 0 {
            return Err(Error::domain(format!("site {s} listed twice")));
        }
        mask |= bit;
    }
    let m = subset.len();
    let local_index = |c: &Configuration| -> usize {
        subset
            .iter()
            .enumerate()
            .filter(|(_, &s)| c.is_excited(s))
            .map(|(k, _)| 1usize << (m - 1 - k))
            .sum()
    };
    // configurations sharing the environment bits contribute coherently
    let mut groups: HashMap<u64, Vec<(usize, Complex64)>> = HashMap::new();
    for (c, a) in psi.basis().states().iter().zip(psi.amplitudes()) {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        groups
            .entry(c.bits() & !mask)
            .or_default()
            .push((local_index(c), *a));
    }
    let dim = 1usize << m;
    let mut rho = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    let mut keys: Vec<u64> = groups.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let members = &groups[&key];
        for &(i, ai) in members {
            for &(j, aj) in members {
                rho[(i, j)] += ai * aj.conj();
            }
        }
    }
    Ok(ReducedDensity {
        sites: subset.to_vec(),
        matrix: rho,
    })
}

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)` of a two-qubit state.
///
/// The λᵢ (square roots of the eigenvalues of `ρ(σʸ⊗σʸ)ρ*(σʸ⊗σʸ)`) are the
/// singular values of `Wᵀ(σʸ⊗σʸ)W` for any factorization `ρ = WW†`. Taking
/// `W` from the eigendecomposition keeps round-off linear instead of passing
/// it through a square root.
pub fn concurrence(rho: &ReducedDensity) -> Result<f64> {
    if rho.matrix.nrows() != 4 || rho.matrix.ncols() != 4 {
        return Err(Error::domain(format!(
            "concurrence needs a two-qubit density matrix, got {}x{}",
            rho.matrix.nrows(),
            rho.matrix.ncols()
        )));
    }
    let eig = SymmetricEigen::new(rho.matrix.clone());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    clip_psd(&mut ev)?;
    let kept: Vec<usize> = (0..4).filter(|&k| ev[k] > RANK_CUTOFF).collect();
    if kept.is_empty() {
        return Err(Error::domain("density matrix is zero"));
    }
    let mut w = DMatrix::from_element(4, kept.len(), Complex64::new(0.0, 0.0));
    for (col, &k) in kept.iter().enumerate() {
        w.set_column(col, &(eig.eigenvectors.column(k) * Complex64::new(ev[k].sqrt(), 0.0)));
    }
    // σʸ⊗σʸ is real: anti-diagonal (−1, 1, 1, −1)
    let mut yy = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
    for (i, s) in [-1.0, 1.0, 1.0, -1.0].into_iter().enumerate() {
        yy[(i, 3 - i)] = Complex64::new(s, 0.0);
    }
    let tau = w.transpose() * yy * &w;
    let mut lambda: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    let c = lambda[0] - lambda[1..].iter().sum::<f64>();
    Ok(c.clamp(0.0, 1.0))
}

/// Density-matrix eigenvalues at or below this are dropped from the
/// factorization used by [`concurrence`].
const RANK_CUTOFF: f64 = 1e-14;

/// Concurrence between two sites of a chain state.
pub fn pair_concurrence(psi: &StateVector, a: usize, b: usize) -> Result<f64> {
    concurrence(&reduce(psi, &[a, b])?)
}

/// Meyer-Wallach `Q = 2 − (2/L) Σₙ tr ρₙ²`.
pub fn global_entanglement(psi: &StateVector) -> Result<f64> {
    let l = psi.basis().num_sites();
    let mut sum = 0.0;
    for n in 1..=l {
        sum += reduce(psi, &[n])?.purity();
    }
    Ok((2.0 - 2.0 / l as f64 * sum).clamp(0.0, 1.0))
}

/// `|⟨target|ψ⟩|²`.
pub fn fidelity(psi: &StateVector, target: &StateVector) -> Result<f64> {
    Ok(target.inner(psi)?.norm_sqr())
}

/// `max_θ |⟨target_θ|ψ⟩|²` over single-site z rotations, which multiply each
/// configuration amplitude by `exp(i Σ_{n excited} θₙ)`.
///
/// When the rotations can set the phase of every configuration in the
/// target's support independently the maximum is `(Σ |tᵢ| |ψᵢ|)²`; targets
/// without that property are rejected.
pub fn phase_maximized_fidelity(psi: &StateVector, target: &StateVector) -> Result<f64> {
    psi.check_same_basis(target)?;
    let support: Vec<usize> = (0..target.amplitudes().len())
        .filter(|&i| target.amplitudes()[i].norm_sqr() > 0.0)
        .collect();
    let rows: Vec<Vec<f64>> = support
        .iter()
        .map(|&i| {
            let c = target.basis().states()[i];
            (1..=c.num_sites())
                .map(|s| if c.is_excited(s) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    if rank(rows) < support.len() {
        return Err(Error::domain(
            "z rotations cannot set the target's configuration phases independently",
        ));
    }
    let overlap: f64 = support
        .iter()
        .map(|&i| target.amplitudes()[i].norm() * psi.amplitudes()[i].norm())
        .sum();
    Ok(overlap * overlap)
}

fn rank(mut rows: Vec<Vec<f64>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c].abs() > 1e-12) else {
            continue;
        };
        rows.swap(r, p);
        let pivot = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c] / pivot[c];
                for (x, p) in row[c..cols].iter_mut().zip(&pivot[c..cols]) {
                    *x -= f * p;
                }
            }
        }
        r += 1;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellSign {
    Plus,
    Minus,
}

impl BellSign {
    fn value(self) -> f64 {
        match self {
            BellSign::Plus => 1.0,
            BellSign::Minus => -1.0,
        }
    }
}

/// Normalized `Σ cᵢ φ(sitesᵢ)` over `basis`.
pub fn superposition(basis: Arc<SectorBasis>, terms: &[(&[i64], Complex64)]) -> Result<StateVector> {
    let mut amps = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (sites, c) in terms {
        let i = basis.index_of_sites(sites)?;
        if amps[i] != Complex64::new(0.0, 0.0) {
            return Err(Error::domain("configuration repeated in superposition"));
        }
        amps[i] = *c;
    }
    StateVector::normalized(basis, amps)
}

fn distinct(sites: &[usize], l: usize) -> Result<()> {
    for (i, &a) in sites.iter().enumerate() {
        if a == 0 || a > l {
            return Err(Error::domain(format!("site {a} outside 1..={l}")));
        }
        if sites[..i].contains(&a) {
            return Err(Error::domain(format!("site {a} repeated")));
        }
    }
    Ok(())
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `ψ± = [φ(n1) ± φ(n2)]/√2`.
pub fn bell_target(basis: Arc<SectorBasis>, n1: usize, n2: usize, sign: BellSign) -> Result<StateVector> {
    bell_target_with_phase(basis, n1, n2, if sign == BellSign::Plus { 0.0 } else { std::f64::consts::PI })
}

/// `[φ(n1) + e^{iχ} φ(n2)]/√2`: the Bell pair up to a local z rotation.
pub fn bell_target_with_phase(
    basis: Arc<SectorBasis>,
    n1: usize,
    n2: usize,
    relative_phase: f64,
) -> Result<StateVector> {
    distinct(&[n1, n2], basis.num_sites())?;
    superposition(
        basis,
        &[
            (&[n1 as i64], real(FRAC_1_SQRT_2)),
            (&[n2 as i64], Complex64::from_polar(FRAC_1_SQRT_2, relative_phase)),
        ],
    )
}

/// `W = [φ(n1) + φ(n2) + φ(n3)]/√3`.
pub fn w_target(basis: Arc<SectorBasis>, n1: usize, n2: usize, n3: usize) -> Result<StateVector> {
    distinct(&[n1, n2, n3], basis.num_sites())?;
    let a = real(1.0 / 3f64.sqrt());
    superposition(
        basis,
        &[(&[n1 as i64], a), (&[n2 as i64], a), (&[n3 as i64], a)],
    )
}

/// `ψ± = [φ(n1−1, n1) ± φ(n1, n1+1)]/√2`, sites taken cyclically.
pub fn bound_pair_bell_target(basis: Arc<SectorBasis>, n1: usize, sign: BellSign) -> Result<StateVector> {
    let l = basis.num_sites();
    if l < 3 {
        return Err(Error::domain("bound pair needs at least 3 sites"));
    }
    distinct(&[n1], l)?;
    let n = n1 as i64;
    superposition(
        basis,
        &[
            (&[n - 1, n], real(FRAC_1_SQRT_2)),
            (&[n, n + 1], real(FRAC_1_SQRT_2 * sign.value())),
        ],
    )
}

/// Eigenvectors of the three-adjacent-defect block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletState {
    /// `½[φ(n1) + √2 φ(n2) + φ(n3)]`
    A,
    /// `[−φ(n1) + φ(n3)]/√2`
    B,
    /// `½[φ(n1) − √2 φ(n2) + φ(n3)]`
    C,
}

pub fn triplet_state(
    basis: Arc<SectorBasis>,
    sites: [usize; 3],
    which: TripletState,
) -> Result<StateVector> {
    distinct(&sites, basis.num_sites())?;
    let labels = sites.map(|s| [s as i64]);
    let r2 = 2f64.sqrt();
    let coeffs = match which {
        TripletState::A => [0.5, r2 / 2.0, 0.5],
        TripletState::B => [-FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2],
        TripletState::C => [0.5, -r2 / 2.0, 0.5],
    };
    let terms: Vec<(&[i64], Complex64)> = labels
        .iter()
        .map(|l| &l[..])
        .zip(coeffs)
        .filter(|(_, x)| *x != 0.0)
        .map(|(s, x)| (s, real(x)))
        .collect();
    superposition(basis, &terms)
}
