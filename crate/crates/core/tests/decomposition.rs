// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use ququart::decompose::{decompose, sequence_to_unitary, DecomposeConfig};
use ququart::device::DurationForm;
use ququart::gates::{gate_infidelity, standard_gate};
use ququart::DeviceModel;

#[test]
fn reference_sequences_rebuild_their_targets() {
    let dev = DeviceModel::reference_device();
    for (label, name, p, ns) in common::reference_sequences() {
        let target = standard_gate(name).unwrap();
        let inf = gate_infidelity(&target, &sequence_to_unitary(&p)).unwrap();
        assert!(inf <= 1e-8, "{label}: {inf:e}");
        let t = ququart::decompose::sequence_duration(&p, &dev, DurationForm::Exact).unwrap() * 1e9;
        assert!((t - ns).abs() <= 1.0, "{label}: {t} ns");
    }
}

#[test]
fn cube_root_anchor() {
    let z = num_complex::Complex64::from_polar(1.0, common::T1 / 2.0);
    let w = num_complex::Complex64::new(0.5, 3f64.sqrt() / 2.0);
    assert!((z - w).norm() < 1e-4);
}

#[test]
fn optimized_durations_match_reference_sequences() {
    let dev = DeviceModel::reference_device();
    for (name, ns) in [("H4", 343.0), ("HxH", 365.0), ("CX(0,1)", 176.0)] {
        let start = Instant::now();
        let r = decompose(&standard_gate(name).unwrap(), &dev, &DecomposeConfig::default()).unwrap();
        let t = r.duration_exact * 1e9;
        eprintln!("{name}: {t:.2} ns, infidelity {:.1e}, {:.1?}", r.infidelity, start.elapsed());
        assert!((t - ns).abs() <= 1.0, "{name}: {t} ns");
        assert!(r.infidelity <= 1e-8);
        assert!(r.params.is_canonical());
        assert!(r.params.theta.iter().all(|t| (0.0..=PI).contains(t)));
    }
}
