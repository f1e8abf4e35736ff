//! Brute-force reference Hamiltonian built from Pauli tensor products on the
//! full 2^L space. Bit `n − 1` of a basis index is site `n`, set = spin up.

#![allow(dead_code)]

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use xxz_defects::hamiltonian::ChainSpec;

type CMatrix = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(-1.0), c(0.0), c(0.0), c(1.0)])
}

/// `σ⁺ = σˣ + iσʸ`, mapping down (0) to up (1) with weight 2.
fn raise() -> CMatrix {
    let x = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
    let i = Complex64::new(0.0, 1.0);
    let y = CMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)]);
    x + y * i
}

fn lower() -> CMatrix {
    raise().adjoint()
}

/// `op` acting on 1-based `site` of an `l`-site chain.
fn on_site(op: &CMatrix, site: usize, l: usize) -> CMatrix {
    let id = CMatrix::identity(2, 2);
    let mut m = CMatrix::identity(1, 1);
    for k in (1..=l).rev() {
        m = m.kronecker(if k == site { op } else { &id });
    }
    m
}

/// Full Hamiltonian minus the all-down energy.
pub fn pauli_hamiltonian(spec: &ChainSpec) -> CMatrix {
    let l = spec.sites;
    let dim = 1 << l;
    let j = spec.coupling;
    let mut h = CMatrix::zeros(dim, dim);
    let z: Vec<CMatrix> = (1..=l).map(|n| on_site(&pauli_z(), n, l)).collect();
    let up: Vec<CMatrix> = (1..=l).map(|n| on_site(&raise(), n, l)).collect();
    let down: Vec<CMatrix> = (1..=l).map(|n| on_site(&lower(), n, l)).collect();
    for n in 1..=l {
        h += &z[n - 1] * c(spec.site_level(n) / 2.0);
    }
    let bonds: Vec<(usize, usize)> = if spec.periodic() {
        (1..=l).map(|n| (n, n % l + 1)).collect()
    } else {
        (1..l).map(|n| (n, n + 1)).collect()
    };
    for (a, b) in bonds {
        let (a, b) = (a - 1, b - 1);
        h += &z[a] * &z[b] * c(j * spec.anisotropy / 4.0);
        let hop = &up[a] * &down[b];
        h += (&hop + hop.adjoint()) * c(j / 8.0);
    }
    let e0 = h[(0, 0)];
    for i in 0..dim {
        h[(i, i)] -= e0;
    }
    h
}

/// Writes straight to the process stdout so the line survives test capture.
pub fn report(criterion: usize, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion}: {status} {detail}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}
