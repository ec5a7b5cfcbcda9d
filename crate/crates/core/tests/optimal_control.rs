// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ququart::gates::standard_gate;
use ququart::optctrl::{self, ControlProblem, Evaluator};
use ququart::pulse::{self, PulseProgram};
use ququart::DeviceModel;

fn problem(gate: &str, t: f64) -> ControlProblem {
    ControlProblem::new(standard_gate(gate).unwrap(), t, DeviceModel::reference_device()).unwrap()
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let p = problem("H4", 100e-9);
    let ev = Evaluator::new(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        // amplitudes large enough to exercise the power penalty
        let mut x = optctrl::initial_guess(&p, &mut rng);
        for v in x.iter_mut().take(6 * p.n_splines()) {
            *v *= rng.random_range(5.0..25.0);
        }
        let g = ev.gradient(&x);
        let fd = ev.gradient_fd(&x, 1e-6);
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(num / den < 1e-5, "relative error {:e}", num / den);
    }
}

fn constant_program(t: f64, mhz: [f64; 3]) -> PulseProgram {
    let mut p = PulseProgram::zeros(t, 1e-9).unwrap();
    for j in 0..3 {
        p.coeff_i[j].iter_mut().for_each(|c| *c = mhz[j]);
    }
    p
}

#[test]
fn amplitude_penalty_limits() {
    let dev = DeviceModel::reference_device();
    let a = 0.95;
    let t = 200e-9;
    let r = dev.drive_response;
    // 0.5 AWG everywhere: no penalty
    let low = constant_program(t, [0.5 * r[0], 0.0, 0.0]);
    assert!(optctrl::amp_penalty(&low, &dev, a, 1e-9).unwrap() < 1e-12);
    // 2a everywhere: excess a over the whole duration (AWG·µs)
    let high = constant_program(t, [2.0 * a * r[0], 0.0, 0.0]);
    let pen = optctrl::amp_penalty(&high, &dev, a, 1e-9).unwrap();
    let flat = pulse::max_awg_load(&high, &dev, 1e-9);
    assert!((flat - 2.0 * a).abs() < 1e-9);
    assert!((pen - a * t * 1e6).abs() < 1e-6, "{pen}");
}

#[test]
fn constant_envelope_passes_filter() {
    let p = constant_program(400e-9, [2.0, 1.0, 0.5]);
    let f = optctrl::filter_penalty(&p, 25e6, 1e-9).unwrap();
    assert!(f < 1e-3, "{f}");
}

#[test]
fn rescaling_preserves_envelope_shape() {
    let mut p = PulseProgram::zeros(300e-9, 1e-9).unwrap();
    let n = p.n_splines as f64;
    for j in 0..3 {
        for s in 0..p.n_splines {
            let x = std::f64::consts::PI * s as f64 / (n - 1.0);
            p.coeff_i[j][s] = (j as f64 + 1.0) * x.sin();
            p.coeff_q[j][s] = (2.0 * x).cos();
        }
    }
    let same = optctrl::rescale_program(&p, 300e-9).unwrap();
    for (a, b) in same.flat_coefficients().iter().zip(p.flat_coefficients()) {
        assert!((a - b).abs() < 1e-9);
    }
    let shorter = optctrl::rescale_program(&p, 280e-9).unwrap();
    assert_eq!(shorter.n_splines, pulse::n_splines_for(280e-9));
    for f in [0.2, 0.5, 0.8] {
        let (i0, q0) = p.quadratures(2, f * 300e-9);
        let (i1, q1) = shorter.quadratures(2, f * 280e-9);
        assert!((i0 - i1).abs() < 0.05 * i0.abs().max(0.5), "{f}: {i0} vs {i1}");
        assert!((q0 - q1).abs() < 0.05 * q0.abs().max(0.5), "{f}: {q0} vs {q1}");
    }
}

#[test]
fn short_identity_converges() {
    let mut p = problem("I4", 80e-9);
    p.restarts = 1;
    p.max_iter = 500;
    let r = optctrl::optimize(&p).unwrap();
    assert!(r.converged, "{:?}", r.breakdown);
    let check = optctrl::verify(&p, &r).unwrap();
    assert!((check - r.breakdown.infidelity).abs() < 1e-8);
    assert!(r.max_awg <= 1.0);
}

#[test]
fn warm_start_rejects_wrong_dimension() {
    let p = problem("H4", 100e-9);
    assert!(optctrl::optimize_from(&p, &[0.0; 5]).is_err());
}
