// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails. Expect well over an hour on one core.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ququart::benchmark::{self, Backend, GroupTag, NoisyBackend, RbConfig};
use ququart::clifford;
use ququart::decompose::{self, sequence_to_unitary, DecomposeConfig};
use ququart::gates::{gate_infidelity, standard_gate};
use ququart::linalg::{self, ONE};
use ququart::optctrl::{self, ControlProblem, ControlResult, Evaluator};
use ququart::sim::{self, Channel, Drive, NoiseSpec};
use ququart::tomography::{self, BasisTag, MeasModel, ProcessMatrix};
use ququart::{DeviceModel, Unitary};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dev() -> DeviceModel {
    DeviceModel::reference_device()
}

fn decomposition_durations() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, ns) in [("H4", 343.0), ("HxH", 365.0), ("CX(0,1)", 176.0)] {
        let start = Instant::now();
        let r = decompose::decompose(&standard_gate(name).unwrap(), &dev(), &DecomposeConfig::default())
            .map_err(|e| format!("{name}: {e}"))?;
        let t = r.duration_exact * 1e9;
        let secs = start.elapsed().as_secs_f64();
        ok &= (t - ns).abs() <= 1.0 && r.infidelity <= 1e-8 && secs < 60.0;
        notes.push(format!("{name} {t:.1} ns ({secs:.1} s)"));
    }
    check(ok, notes.join(", "))
}

fn decomposition_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for (_, name, p, _) in common::reference_sequences() {
        worst = worst.max(gate_infidelity(&standard_gate(name).unwrap(), &sequence_to_unitary(&p)).unwrap());
    }
    let anchor = (Complex64::from_polar(1.0, common::T1 / 2.0) - Complex64::new(0.5, 3f64.sqrt() / 2.0)).norm();
    check(
        worst <= 1e-8 && anchor < 1e-4,
        format!("worst rebuilt infidelity {worst:.1e}, anchor deviation {anchor:.1e}"),
    )
}

fn haar_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let u = Unitary::new(linalg::haar_unitary(4, &mut rng)).unwrap();
        let cfg = DecomposeConfig {
            seed: k,
            ..DecomposeConfig::default()
        };
        let r = decompose::decompose(&u, &dev(), &cfg).map_err(|e| format!("unitary {k}: {e}"))?;
        let rebuilt = gate_infidelity(&u, &sequence_to_unitary(&r.params)).unwrap();
        worst = worst.max(rebuilt);
    }
    check(worst <= 1e-8, format!("100 unitaries, worst infidelity {worst:.1e}"))
}

fn clifford_groups() -> Outcome {
    let c4 = clifford::ququart_clifford_group().map_err(|e| e.to_string())?;
    let c22 = clifford::two_qubit_clifford_group().map_err(|e| e.to_string())?;
    let h4_in = c22.contains(standard_gate("H4").unwrap().matrix()).is_some();
    let n4 = clifford::normalizer_check(&c4, &clifford::ququart_paulis()).unwrap();
    let n22 = clifford::normalizer_check(&c22, &clifford::two_qubit_paulis()).unwrap();
    check(
        c4.len() == 768 && c22.len() == 11520 && !h4_in && n4 && n22,
        format!(
            "|C4| = {}, |C2x2| = {}, H4 in C2x2: {h4_in}, normalizers: {n4}/{n22}",
            c4.len(),
            c22.len()
        ),
    )
}

struct Pulses {
    h4_vz: ControlResult,
    hh: ControlResult,
    lines: Vec<String>,
    ok: bool,
}

fn summary(label: &str, r: &ControlResult, secs: f64) -> String {
    format!(
        "{label}: 1-F {:.1e}, max AWG {:.3}, leakage {:.1e}, converged {} ({:.0} s)",
        r.breakdown.infidelity, r.max_awg, r.leakage, r.converged, secs
    )
}

fn optimize(gate: &str, ns: f64, vz: bool) -> (ControlResult, f64) {
    let mut p = ControlProblem::new(standard_gate(gate).unwrap(), ns * 1e-9, dev()).unwrap();
    p.optimize_trailing_phase = vz;
    let start = Instant::now();
    let r = optctrl::optimize(&p).unwrap();
    (r, start.elapsed().as_secs_f64())
}

fn pulses() -> &'static Pulses {
    static CELL: OnceLock<Pulses> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut lines = Vec::new();
        let (h4_vz, s) = optimize("H4", 350.0, true);
        let mut ok = h4_vz.converged && h4_vz.breakdown.infidelity <= 1e-4 && h4_vz.max_awg <= 1.0 && h4_vz.leakage < 1e-4;
        lines.push(summary("H4 350 ns +VZ", &h4_vz, s));
        let (short, s) = optimize("H4", 350.0, false);
        ok &= !short.converged;
        lines.push(summary("H4 350 ns no VZ", &short, s));
        let (long, s) = optimize("H4", 420.0, false);
        ok &= long.converged;
        lines.push(summary("H4 420 ns no VZ", &long, s));
        let (hh, s) = optimize("HxH", 380.0, false);
        ok &= hh.converged;
        lines.push(summary("HxH 380 ns no VZ", &hh, s));
        Pulses { h4_vz, hh, lines, ok }
    })
}

fn optimal_control() -> Outcome {
    let p = pulses();
    check(p.ok, p.lines.join("; "))
}

fn gradient_check() -> Outcome {
    let p = ControlProblem::new(standard_gate("H4").unwrap(), 100e-9, dev()).unwrap();
    let ev = Evaluator::new(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut x = optctrl::initial_guess(&p, &mut rng);
        for v in x.iter_mut().take(6 * p.n_splines()) {
            *v *= rng.random_range(1.0..25.0);
        }
        let g = ev.gradient(&x);
        let fd = ev.gradient_fd(&x, 1e-6);
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    check(worst < 1e-5, format!("20 points, worst relative error {worst:.1e}"))
}

fn error_budget() -> Outcome {
    let d = dev();
    let noise = NoiseSpec::from_device(&d);
    let dt = 0.01e-9;
    let mut ok = true;
    let mut notes = Vec::new();
    let mut record = |label: &str, inf: f64, want: f64, tol: f64| {
        let pass = (100.0 * inf - want).abs() <= tol;
        ok &= pass;
        notes.push(format!("{label} {:.2}% (ref {want}%{})", 100.0 * inf, if pass { "" } else { " MISS" }));
    };
    for (label, free, noisy) in [("H4", 0.42, 4.53), ("HxH", 0.41, 4.78)] {
        let (target, p) = common::reference(label);
        let u = sim::propagate_native(&p, &d, dt).unwrap();
        record(&format!("{label} DEC"), 1.0 - u.channel().process_fidelity(target.matrix()), free, 0.15);
        let n = sim::propagate_lindblad(Drive::Native(&p), &d, &noise, dt).unwrap();
        record(&format!("{label} DEC+noise"), 1.0 - n.channel().process_fidelity(target.matrix()), noisy, 0.5);
    }
    let p = pulses();
    for (label, r, free, noisy) in [("H4", &p.h4_vz, 0.08, 4.28), ("HxH", &p.hh, 0.26, 4.81)] {
        let target = standard_gate(label).unwrap();
        let u = Channel::from_unitary(&sim::pulse_gate(&r.pulse, &d, dt).unwrap());
        record(&format!("{label} QOC"), 1.0 - u.process_fidelity(target.matrix()), free, 0.15);
        let n = sim::propagate_lindblad(Drive::Pulse(&r.pulse), &d, &noise, dt).unwrap();
        record(&format!("{label} QOC+noise"), 1.0 - n.channel().process_fidelity(target.matrix()), noisy, 0.5);
    }
    check(ok, notes.join(", "))
}

fn rb_identities() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for tag in [GroupTag::Ququart, GroupTag::TwoQubit] {
        let mut cfg = RbConfig::new(tag);
        cfg.sequences = 3;
        let q = 0.985;
        let d = benchmark::run_rb(&cfg, Backend::Depolarizing { q }).map_err(|e| e.to_string())?;
        ok &= (d.fit.p - q).abs() <= 1e-6;
        notes.push(format!("{} p-q = {:.1e}", tag.name(), d.fit.p - q));
    }
    let (r, f) = benchmark::fidelity_from_p(0.9, 4);
    ok &= r == 3.0 / 4.0 * (1.0 - 0.9) && f == 1.0 - r;
    let g = benchmark::irb_fidelity(0.96, 0.93, 4).unwrap();
    ok &= g == 1.0 - 3.0 / 4.0 * (1.0 - 0.93 / 0.96);
    notes.push("closed forms exact".into());
    check(ok, notes.join(", "))
}

fn noisy_rb() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (tag, want) in [(GroupTag::Ququart, 96.22), (GroupTag::TwoQubit, 95.84)] {
        let start = Instant::now();
        let cfg = RbConfig::new(tag);
        let d = benchmark::run_rb(&cfg, Backend::Noisy(NoisyBackend::new(dev()))).map_err(|e| e.to_string())?;
        let f = 100.0 * d.fidelity;
        ok &= (f - want).abs() <= 1.5;
        notes.push(format!(
            "{} F = {f:.2}(±{:.2})% vs {want}% ({:.0} s)",
            tag.name(),
            100.0 * d.fidelity_err,
            start.elapsed().as_secs_f64()
        ));
    }
    check(ok, notes.join(", "))
}

fn qpt_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 1.0;
    let mut gates: Vec<Unitary> = ["H4", "X4", "S4", "HxH", "CX(0,1)", "SWAP"]
        .iter()
        .map(|g| standard_gate(g).unwrap())
        .collect();
    for _ in 0..10 {
        gates.push(Unitary::new(linalg::haar_unitary(4, &mut rng)).unwrap());
    }
    for basis in [BasisTag::Ququart, BasisTag::TwoQubit] {
        for u in &gates {
            let chi = tomography::qpt(&Channel::from_unitary(u.matrix()), basis, &MeasModel::ideal(), &mut rng).unwrap();
            let f = tomography::process_fidelity(&chi, &ProcessMatrix::from_unitary(u, basis).unwrap()).unwrap();
            worst = worst.min(f);
        }
    }
    // MLE under finite shots and readout error
    let meas = MeasModel::synthetic(0.03).unwrap().with_shots(500);
    let mut min_eig: f64 = 0.0;
    let mut trace_dev: f64 = 0.0;
    for u in gates.iter().take(8) {
        let chi = tomography::qpt(&Channel::from_unitary(u.matrix()), BasisTag::Ququart, &meas, &mut rng).unwrap();
        trace_dev = trace_dev.max((chi.trace() - 1.0).abs());
        let e = chi.chi.clone().symmetric_eigen().eigenvalues;
        min_eig = min_eig.min(e.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let id = tomography::qpt(
        &Channel::from_unitary(standard_gate("I4").unwrap().matrix()),
        BasisTag::Ququart,
        &MeasModel::ideal(),
        &mut rng,
    )
    .unwrap();
    let chi00 = (id.chi[(0, 0)] - ONE).norm();
    check(
        worst >= 1.0 - 1e-6 && min_eig > -1e-9 && trace_dev < 1e-9 && chi00 < 1e-6,
        format!("worst F {worst:.9}, min eigenvalue {min_eig:.1e}, |Tr-1| {trace_dev:.1e}, |chi00-1| {chi00:.1e}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("decomposition durations", decomposition_durations),
        ("decomposition identities", decomposition_identities),
        ("Haar round trip", haar_round_trip),
        ("Clifford groups", clifford_groups),
        ("optimal control", optimal_control),
        ("gradient check", gradient_check),
        ("error budget", error_budget),
        ("RB identities", rb_identities),
        ("noisy RB", noisy_rb),
        ("QPT properties", qpt_suite),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        // bypass the test harness capture so the lines always show
        let mut out = std::io::stdout().lock();
        writeln!(out, "{tag} {}. {name}: {detail} [{:.0} s]", k + 1, start.elapsed().as_secs_f64()).unwrap();
        out.flush().unwrap();
        if outcome.is_err() {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
