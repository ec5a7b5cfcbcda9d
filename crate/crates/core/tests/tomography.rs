// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ququart::gates::standard_gate;
use ququart::linalg::{self, ONE};
use ququart::sim::Channel;
use ququart::tomography::{self, BasisTag, MeasModel, ProcessMatrix};
use ququart::Unitary;

fn reconstruct(u: &Unitary, basis: BasisTag, meas: &MeasModel, seed: u64) -> ProcessMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tomography::qpt(&Channel::from_unitary(u.matrix()), basis, meas, &mut rng).unwrap()
}

#[test]
fn exact_statistics_reconstruct_unitaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gates: Vec<Unitary> = ["I4", "H4", "X4", "S4", "HxH", "CX(0,1)", "CX(1,0)"]
        .iter()
        .map(|g| standard_gate(g).unwrap())
        .collect();
    for _ in 0..5 {
        gates.push(Unitary::new(linalg::haar_unitary(4, &mut rng)).unwrap());
    }
    for basis in [BasisTag::Ququart, BasisTag::TwoQubit] {
        for u in &gates {
            let chi = reconstruct(u, basis, &MeasModel::ideal(), 0);
            let f = tomography::process_fidelity(&chi, &ProcessMatrix::from_unitary(u, basis).unwrap()).unwrap();
            assert!(f >= 1.0 - 1e-6, "{} {f}", basis.name());
        }
    }
}

#[test]
fn readout_error_is_corrected() {
    let u = standard_gate("H4").unwrap();
    let meas = MeasModel::synthetic(0.04).unwrap();
    let chi = reconstruct(&u, BasisTag::Ququart, &meas, 0);
    let f = tomography::process_fidelity(&chi, &ProcessMatrix::from_unitary(&u, BasisTag::Ququart).unwrap()).unwrap();
    assert!(f >= 1.0 - 1e-6, "{f}");
}

#[test]
fn finite_shots_give_physical_estimates() {
    let u = standard_gate("HxH").unwrap();
    let meas = MeasModel::synthetic(0.02).unwrap().with_shots(2000);
    for seed in 0..3 {
        let chi = reconstruct(&u, BasisTag::TwoQubit, &meas, seed);
        assert!((chi.trace() - 1.0).abs() < 1e-9);
        assert!(linalg::is_hermitian(&chi.chi, 1e-9));
        let eig = chi.chi.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|e| *e > -1e-9));
        let f = tomography::process_fidelity(&chi, &ProcessMatrix::from_unitary(&u, BasisTag::TwoQubit).unwrap()).unwrap();
        assert!(f > 0.9 && f <= 1.0 + 1e-9, "{f}");
    }
}

#[test]
fn identity_chi_is_concentrated() {
    let chi = reconstruct(&standard_gate("I4").unwrap(), BasisTag::Ququart, &MeasModel::ideal(), 0);
    assert!((chi.chi[(0, 0)] - ONE).norm() < 1e-6);
    let rest: f64 = chi.chi.iter().map(|c| c.norm()).sum::<f64>() - chi.chi[(0, 0)].norm();
    assert!(rest < 1e-5);
}
