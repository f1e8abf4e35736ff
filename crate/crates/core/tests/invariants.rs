mod support;

use std::sync::Arc;

use proptest::prelude::*;
use support::pauli_hamiltonian;
use xxz_defects::basis::{Configuration, SectorBasis};
use xxz_defects::entanglement::reduce;
use xxz_defects::evolve::{diagonalize, propagate_static, site_probabilities, StateVector};
use xxz_defects::hamiltonian::{
    build_static, Boundary, ChainSpec, DetuningSchedule, ScheduleShape,
};
use xxz_defects::perturbation::{band_layout, bound_pair_model, three_defect_model, two_defect_model};

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn chain() -> impl Strategy<Value = ChainSpec> {
    (
        3usize..=8,
        0.2f64..3.0,
        0.0f64..5.0,
        prop::collection::vec(0.5f64..20.0, 3),
        any::<bool>(),
    )
        .prop_map(|(l, j, delta, offsets, open)| {
            let mut spec = ChainSpec::new(l).with_coupling(j).with_anisotropy(delta);
            for (k, d) in offsets.into_iter().enumerate() {
                spec = spec.with_defect(1 + (3 * k) % l, d);
            }
            if open {
                spec = spec.with_boundary(Boundary::Open);
            }
            spec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sector_basis_is_ordered_and_indexed(l in 1usize..=14, n in 0usize..=14) {
        prop_assume!(n <= l);
        let basis = SectorBasis::enumerate(l, n).unwrap();
        prop_assert_eq!(basis.len(), binomial(l, n));
        let states = basis.states();
        prop_assert!(states.windows(2).all(|w| w[0].bits() < w[1].bits()));
        for (i, c) in states.iter().enumerate() {
            prop_assert_eq!(c.excitations(), n);
            prop_assert_eq!(basis.index_of(c), Some(i));
        }
    }

    #[test]
    fn site_labels_wrap(l in 2usize..=20, site in 1i64..=20, turns in -3i64..=3) {
        prop_assume!(site as usize <= l);
        let a = Configuration::from_sites(&[site], l).unwrap();
        let b = Configuration::from_sites(&[site + turns * l as i64], l).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sector_matrix_is_symmetric_hop_structured(spec in chain(), n in 0usize..=8) {
        prop_assume!(n <= spec.sites);
        let h = build_static(&spec, n).unwrap();
        let states = h.basis.states();
        for i in 0..h.dim() {
            for k in 0..h.dim() {
                let v = h.matrix[(i, k)];
                prop_assert!((v - h.matrix[(k, i)]).abs() <= 1e-15 * v.abs().max(1.0));
                if i != k && v != 0.0 {
                    let diff = states[i].bits() ^ states[k].bits();
                    prop_assert_eq!(diff.count_ones(), 2);
                    let hop = states[i].hops(spec.periodic());
                    prop_assert!(hop.contains(&states[k]));
                    prop_assert!((v - spec.coupling / 2.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn oracle_never_couples_sectors(spec in chain()) {
        prop_assume!(spec.sites <= 6);
        let full = pauli_hamiltonian(&spec);
        let dim = 1usize << spec.sites;
        for a in 0..dim {
            for b in 0..dim {
                if a.count_ones() != b.count_ones() {
                    prop_assert_eq!(full[(a, b)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn schedule_shapes(rate in 0.0f64..50.0, start in 0.0f64..10.0, t in 0.0f64..20.0) {
        let lin = DetuningSchedule::none().with(2, ScheduleShape::Linear, rate, start);
        let quad = DetuningSchedule::none().with(2, ScheduleShape::Quadratic, rate, start);
        let dt = t - start;
        if dt < 0.0 {
            prop_assert_eq!(lin.offset(2, t), 0.0);
            prop_assert_eq!(quad.offset(2, t), 0.0);
        } else {
            prop_assert!((lin.offset(2, t) - rate * dt).abs() <= 1e-12 * (1.0 + rate * dt));
            prop_assert!((quad.offset(2, t) - rate * dt * dt).abs() <= 1e-12 * (1.0 + rate * dt * dt));
        }
        prop_assert_eq!(lin.offset(1, t), 0.0);
    }

    #[test]
    fn eigensystem_and_static_evolution(spec in chain(), n in 1usize..=3, t in 0.0f64..200.0) {
        prop_assume!(n < spec.sites);
        let h = build_static(&spec, n).unwrap();
        let eig = diagonalize(&h).unwrap();
        prop_assert!(eig.residual(&h) <= 1e-10 * h.matrix.norm());
        prop_assert!(eig.orthonormality_error() <= 1e-12 * h.dim() as f64);
        let start = h.basis.states()[0];
        let psi0 = StateVector::basis_state(h.basis.clone(), &start).unwrap();
        let psi = propagate_static(&eig, &psi0, t).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() <= 1e-9);
        for p in site_probabilities(&psi) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        }
        let rho = reduce(&psi, &[1, 2]).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() <= 1e-12);
        prop_assert!(rho.eigenvalues().unwrap().iter().all(|&e| e >= -1e-12));
    }

    #[test]
    fn effective_models_agree_with_own_diagonalization(
        d in 5.0f64..100.0,
        delta in 0.0f64..50.0,
        j in 0.2f64..2.0,
    ) {
        let spec = ChainSpec::new(10).with_coupling(j).with_anisotropy(delta);
        let two = spec.clone().with_defect(2, d).with_defect(4, d);
        let three = spec.clone().with_defect(2, d).with_defect(3, d).with_defect(4, d);
        let one = spec.clone().with_defect(5, d);
        let models = [
            two_defect_model(&two, 2, 4).unwrap(),
            three_defect_model(&three, 2).unwrap(),
        ];
        for m in &models {
            let scale = m.matrix.matrix.amax();
            prop_assert!(m.numerical_discrepancy().unwrap() <= 1e-12 * scale.max(1.0));
        }
        if delta > 0.0 {
            let m = bound_pair_model(&one, 5).unwrap();
            let scale = m.matrix.matrix.amax();
            prop_assert!(m.numerical_discrepancy().unwrap() <= 1e-12 * scale.max(1.0));
        }
        for n in 1..=2 {
            if let Ok(bands) = band_layout(&one, n) {
                prop_assert!(bands.iter().all(|b| b.half_width >= 0.0));
            }
        }
    }
}

#[test]
fn reduced_state_of_basis_state_is_pure() {
    let basis = Arc::new(SectorBasis::enumerate(5, 2).unwrap());
    let psi = StateVector::localized(basis, &[1, 3]).unwrap();
    let rho = reduce(&psi, &[1, 2, 3]).unwrap();
    assert!((rho.purity() - 1.0).abs() < 1e-12);
}
