mod support;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use support::{pauli_hamiltonian, report};
use xxz_defects::basis::SectorBasis;
use xxz_defects::entanglement::{
    bell_target, global_entanglement, pair_concurrence, w_target, BellSign,
};
use xxz_defects::evolve::{
    basis_probability, diagonalize, integrate_fixed, propagate_static, ScheduledHamiltonian,
    StateVector,
};
use xxz_defects::hamiltonian::{build_static, Boundary, ChainSpec, DetuningSchedule, ScheduleShape};
use xxz_defects::perturbation::{
    assign_bands, band_layout, bound_pair_model, compare_with_exact, cosine_crossings,
    default_band_tolerance, three_defect_model, two_defect_model, w_times,
};
use xxz_defects::protocols::{
    creation_time, run, Detuning, Frame, ProtocolKind, ProtocolResult, ProtocolSpec,
};

const J: f64 = 1.0;

fn bell_chain(n2: usize, d: f64) -> ChainSpec {
    ChainSpec::new(8).with_defect(1, d).with_defect(n2, d)
}

fn w_chain() -> ChainSpec {
    ChainSpec::new(8)
        .with_defect(1, 10.0)
        .with_defect(2, 10.0)
        .with_defect(3, 10.0)
}

fn bound_pair_chain() -> ChainSpec {
    ChainSpec::new(10).with_anisotropy(40.0).with_defect(5, 10.0)
}

fn detuning(shape: ScheduleShape, rate: f64) -> Detuning {
    Detuning {
        shape,
        rate,
        ..Detuning::default()
    }
}

fn bell_run(shape: ScheduleShape, rate: f64, after: f64, frame: Frame) -> ProtocolResult {
    let base = ProtocolSpec::new(ProtocolKind::Bell, bell_chain(3, 10.0), vec![1, 3], 1.0);
    let t_b = creation_time(&base.model().unwrap()).unwrap();
    let pspec = ProtocolSpec {
        horizon: t_b + after,
        ..base
    }
    .with_detuning(detuning(shape, rate))
    .with_frame(frame);
    run(&pspec).unwrap()
}

fn w_run(d1: f64, d2: f64, frame: Frame) -> ProtocolResult {
    let base = ProtocolSpec::new(ProtocolKind::W, w_chain(), vec![1, 2, 3], 1.0);
    let t_w = creation_time(&base.model().unwrap()).unwrap();
    let pspec = ProtocolSpec {
        horizon: t_w + 2.0,
        ..base
    }
    .with_detuning(Detuning {
        shape: ScheduleShape::Linear,
        rate1: d1,
        rate2: d2,
        ..Detuning::default()
    })
    .with_frame(frame);
    run(&pspec).unwrap()
}

fn bound_pair_run(rate: f64) -> ProtocolResult {
    let base = ProtocolSpec::new(ProtocolKind::BoundPair, bound_pair_chain(), vec![5], 1.0);
    let t_bp = creation_time(&base.model().unwrap()).unwrap();
    let pspec = ProtocolSpec {
        horizon: t_bp + 50.0,
        ..base
    }
    .with_detuning(detuning(ScheduleShape::Linear, rate))
    .with_frame(Frame::FullChain);
    run(&pspec).unwrap()
}

fn score_mean(r: &ProtocolResult, channel: &str) -> f64 {
    r.score(channel).unwrap().mean
}

#[test]
fn criterion_01_oracle_equivalence() {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let specs = [
        ChainSpec::new(2),
        ChainSpec::new(2).with_coupling(1.3).with_anisotropy(0.7),
        ChainSpec::new(2).with_defect(2, 3.0),
    ];
    for l in 2..=8 {
        let variants = [
            ChainSpec::new(l),
            ChainSpec::new(l)
                .with_coupling(1.3)
                .with_anisotropy(0.7)
                .with_level_spacing(40.0)
                .with_defect(1, 10.0)
                .with_defect(l, 2.5),
        ];
        for spec in variants.iter().chain(if l == 2 { &specs[..] } else { &[] }) {
            for boundary in [Boundary::Periodic, Boundary::Open] {
                let spec = spec.clone().with_boundary(boundary);
                let full = pauli_hamiltonian(&spec);
                for n in 0..=l {
                    let h = build_static(&spec, n).unwrap();
                    let states = h.basis.states();
                    for (i, a) in states.iter().enumerate() {
                        for (k, b) in states.iter().enumerate() {
                            let want = full[(a.bits() as usize, b.bits() as usize)];
                            let got = Complex64::new(h.matrix[(i, k)], 0.0);
                            worst = worst.max((got - want).norm() / spec.coupling);
                        }
                    }
                    checked += 1;
                }
            }
        }
    }
    report(
        1,
        worst <= 1e-12,
        &format!("{checked} sectors, max entry deviation {worst:.3e} J (tol 1e-12 J)"),
    );
}

#[test]
fn criterion_02_single_excitation_band() {
    let l = 12;
    let spec = ChainSpec::new(l);
    let eig = diagonalize(&build_static(&spec, 1).unwrap()).unwrap();
    let e1 = spec.level_spacing - J * spec.anisotropy;
    let mut want: Vec<f64> = (0..l)
        .map(|k| e1 + J * (2.0 * PI * k as f64 / l as f64).cos())
        .collect();
    want.sort_by(f64::total_cmp);
    let worst = eig
        .values
        .iter()
        .zip(&want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    report(2, worst <= 1e-10, &format!("max deviation {worst:.3e} J (tol 1e-10 J)"));
}

#[test]
fn criterion_03_adjacent_defect_oscillation() {
    let d = 10.0;
    let spec = bell_chain(2, d);
    let model = two_defect_model(&spec, 1, 2).unwrap();
    let cmp = compare_with_exact(&model, &spec).unwrap();
    let split_err = (cmp.exact_splitting() - J).abs() / J;

    let h = build_static(&spec, 1).unwrap();
    let eig = diagonalize(&h).unwrap();
    let psi0 = StateVector::localized(h.basis.clone(), &[1]).unwrap();
    let start = h.basis.states()[h.basis.index_of_sites(&[1]).unwrap()];
    let horizon = 2.0 * PI / J;
    let mut worst: f64 = 0.0;
    for k in 0..=2000 {
        let t = horizon * k as f64 / 2000.0;
        let psi = propagate_static(&eig, &psi0, t).unwrap();
        let p = basis_probability(&psi, &start).unwrap();
        worst = worst.max((p - (1.0 + (J * t).cos()) / 2.0).abs());
    }
    let pass = split_err <= 2.0 * J / d && worst <= 3e-3;
    report(
        3,
        pass,
        &format!(
            "splitting relative error {split_err:.4} (tol {:.2}), max P deviation {worst:.4e} (tol 3e-3)",
            2.0 * J / d
        ),
    );
}

#[test]
fn criterion_04_period_law() {
    let spec = bell_chain(3, 10.0);
    let model = two_defect_model(&spec, 1, 3).unwrap();
    let split = compare_with_exact(&model, &spec).unwrap().exact_splitting();
    let period = 2.0 * PI / split;
    let want = 40.0 * PI / J;
    let period_err = (period - want).abs() / want;

    let ds = [10.0, 20.0, 50.0];
    let pts: Vec<(f64, f64)> = ds
        .iter()
        .map(|&d| {
            let spec = bell_chain(3, d);
            let model = two_defect_model(&spec, 1, 3).unwrap();
            let s = compare_with_exact(&model, &spec).unwrap().exact_splitting();
            (d.ln(), s.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let pass = period_err <= 0.05 && (slope + 1.0).abs() <= 0.1;
    report(
        4,
        pass,
        &format!("period {period:.4} vs {want:.4} (rel err {period_err:.4}, tol 0.05), slope {slope:.4} (want -1 +/- 0.1)"),
    );
}

#[test]
fn criterion_05_bell_creation_quality() {
    let r = bell_run(ScheduleShape::None, 0.0, 1.0, Frame::FullChain);
    let c = r.at_creation.concurrence;
    report(
        5,
        c >= 0.99,
        &format!("concurrence at t_B = {:.4}: {c:.5} (tol >= 0.99)", r.creation_time),
    );
}

#[test]
fn criterion_06_detuning_maintenance() {
    let grids = [
        (ScheduleShape::Linear, [0.01, 0.1, 1.0, 10.0], 40.0),
        (ScheduleShape::Quadratic, [1e-3, 1e-2, 1e-1, 1.0], 20.0),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (shape, rates, after) in grids {
        let eff: Vec<f64> = rates
            .iter()
            .map(|&d| score_mean(&bell_run(shape, d, after, Frame::Effective), "concurrence"))
            .collect();
        let full: Vec<f64> = rates
            .iter()
            .map(|&d| score_mean(&bell_run(shape, d, after, Frame::FullChain), "concurrence"))
            .collect();
        let monotone = eff.windows(2).all(|w| w[1] >= w[0]);
        let top = *eff.last().unwrap();
        let gap = eff
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pass &= monotone && top > 0.98 && gap <= 0.01;
        detail.push(format!(
            "{shape:?}: C = {eff:.4?}, monotone {monotone}, top {top:.4} (> 0.98), frame gap {gap:.4} (tol 0.01)"
        ));
    }
    report(6, pass, &detail.join("; "));
}

#[test]
fn criterion_07_w_state() {
    let base = ProtocolSpec::new(ProtocolKind::W, w_chain(), vec![1, 2, 3], 1.0);
    let model = base.model().unwrap();
    let t_w = creation_time(&model).unwrap();
    let pspec = ProtocolSpec {
        horizon: t_w + 1.0,
        ..base
    }
    .with_frame(Frame::FullChain);
    let r = run(&pspec).unwrap();
    let probs = &r.at_creation.site_probabilities;
    let prob_dev = probs
        .iter()
        .map(|p| (p - 1.0 / 3.0).abs())
        .fold(0.0, f64::max);

    let model = three_defect_model(&w_chain(), 1).unwrap();
    let closed = w_times(&model, 5).unwrap();
    let direct = cosine_crossings(model.frequency, -1.0 / 3.0, 6);
    let time_err = closed
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    let pass = prob_dev <= 0.01 && time_err <= 1e-12;
    report(
        7,
        pass,
        &format!(
            "P at t_W = {probs:.4?} (max dev {prob_dev:.4}, tol 0.01), closed-form vs crossings rel err {time_err:.2e} (tol 1e-12)"
        ),
    );
}

#[test]
fn criterion_08_w_detuning_asymmetry() {
    let dev = |d1: f64, d2: f64| w_run(d1, d2, Frame::Effective).target_deviation;
    let (small, large) = (dev(10.0, 100.0), dev(50.0, 500.0));
    let (small_swap, large_swap) = (dev(100.0, 10.0), dev(500.0, 50.0));
    let pass = large < small && small < small_swap && large < large_swap;
    report(
        8,
        pass,
        &format!(
            "deviation (10,100) {small:.4e}, (50,500) {large:.4e}, (100,10) {small_swap:.4e}, (500,50) {large_swap:.4e}"
        ),
    );
}

#[test]
fn criterion_09_two_excitation_bands() {
    let spec = bound_pair_chain();
    let eig = diagonalize(&build_static(&spec, 2).unwrap()).unwrap();
    let energies: Vec<f64> = eig.values.iter().copied().collect();
    let bands = band_layout(&spec, 2).unwrap();
    let tol = default_band_tolerance(&spec);
    let a = assign_bands(&energies, &bands, tol);
    let counts_ok = a
        .bands
        .iter()
        .all(|m| m.members.len() == m.band.expected_count);
    let narrow = a.bands.iter().find(|m| m.band.label == "bound_pair").unwrap();
    let want = J / (2.0 * spec.anisotropy);
    let width = narrow.measured_half_width();
    let width_err = (width - want).abs() / want;
    let pass = a.is_complete() && counts_ok && width_err <= 0.25;
    let counts: Vec<String> = a
        .bands
        .iter()
        .map(|m| format!("{} {}/{}", m.band.label, m.members.len(), m.band.expected_count))
        .collect();
    report(
        9,
        pass,
        &format!(
            "{} (unassigned {}, ambiguous {}), narrow half-width {width:.5} vs {want:.5} (rel err {width_err:.3}, tol 0.25)",
            counts.join(", "),
            a.unassigned.len(),
            a.ambiguous.len()
        ),
    );
}

#[test]
fn criterion_10_bound_pair_bell() {
    let spec = bound_pair_chain();
    let model = bound_pair_model(&spec, 5).unwrap();
    let split = compare_with_exact(&model, &spec).unwrap().exact_splitting();
    let period = 2.0 * PI / split;
    let d = spec.defect_offset(5);
    let want = 2.0 * PI * 2.0 * (J * spec.anisotropy + d) / (J * J);
    let period_err = (period - want).abs() / want;
    let r = bound_pair_run(0.0);
    let c = r.at_creation.concurrence;
    let pass = period_err <= 0.1 && c >= 0.95;
    report(
        10,
        pass,
        &format!(
            "period {period:.2} vs {want:.2} (rel err {period_err:.4}, tol 0.1), concurrence at t_BP {c:.4} (tol >= 0.95)"
        ),
    );
}

#[test]
fn criterion_11_entanglement_measures() {
    let basis = |l: usize, n: usize| Arc::new(SectorBasis::enumerate(l, n).unwrap());
    let bell = bell_target(basis(4, 1), 1, 2, BellSign::Plus).unwrap();
    let c_bell = pair_concurrence(&bell, 1, 2).unwrap();
    let product = StateVector::localized(basis(4, 1), &[1]).unwrap();
    let c_product = pair_concurrence(&product, 1, 2).unwrap();
    let w = w_target(basis(3, 1), 1, 2, 3).unwrap();
    let c_w = pair_concurrence(&w, 1, 2).unwrap();
    let q_w = global_entanglement(&w).unwrap();
    let mut q_err: f64 = 0.0;
    for l in [2, 4, 8] {
        let state = bell_target(basis(l, 1), 1, 2, BellSign::Plus).unwrap();
        let q = global_entanglement(&state).unwrap();
        q_err = q_err.max((q - 2.0 / l as f64).abs());
    }
    let pass = (c_bell - 1.0).abs() <= 1e-12
        && c_product.abs() <= 1e-12
        && (c_w - 2.0 / 3.0).abs() <= 1e-9
        && q_err <= 1e-12
        && (q_w - 8.0 / 9.0).abs() <= 1e-9;
    report(
        11,
        pass,
        &format!(
            "C(Bell) {c_bell:.12}, C(product) {c_product:.1e}, C(W pair) {c_w:.12}, max |Q(Bell) - 2/L| {q_err:.1e}, Q(W) {q_w:.12}"
        ),
    );
}

#[test]
fn criterion_12_numerics_hygiene() {
    let runs = [
        bell_run(ScheduleShape::Linear, 1.0, 40.0, Frame::Effective),
        bell_run(ScheduleShape::Linear, 10.0, 40.0, Frame::FullChain),
        bell_run(ScheduleShape::Quadratic, 0.1, 20.0, Frame::Effective),
        bell_run(ScheduleShape::Quadratic, 1.0, 20.0, Frame::FullChain),
        w_run(50.0, 500.0, Frame::Effective),
        w_run(10.0, 100.0, Frame::FullChain),
        bound_pair_run(0.1),
    ];
    let drift = runs
        .iter()
        .map(|r| r.diagnostics.as_ref().unwrap())
        .map(|d| if d.renormalized { f64::INFINITY } else { d.norm_drift_rate })
        .fold(0.0, f64::max);

    // two-level model with a linear ramp on one defect
    let spec = bell_chain(3, 10.0);
    let model = two_defect_model(&spec, 1, 3).unwrap();
    let schedule = DetuningSchedule::none().with(1, ScheduleShape::Linear, 1.0, 0.0);
    let h = ScheduledHamiltonian::new(&model.matrix, schedule);
    let start = model.configurations()[0];
    let psi0 = StateVector::basis_state(model.basis().clone(), &start).unwrap();
    let t_end = [10.0];
    let finish = |step: f64| integrate_fixed(&h, &psi0, 0.0, &t_end, step).unwrap().states[0].clone();
    let reference = finish(0.1 / 256.0);
    let error = |step: f64| {
        let psi = finish(step);
        psi.amplitudes()
            .iter()
            .zip(reference.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    let errors: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&s| error(s)).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (r - 16.0).abs() <= 4.0);
    let pass = drift <= 1e-9 && order_ok;
    report(
        12,
        pass,
        &format!(
            "max norm drift {drift:.2e}/time over {} scheduled runs (tol 1e-9), RK4 errors {errors:?}, ratios {ratios:.2?} (want 16 +/- 4)",
            runs.len()
        ),
    );
}
