// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Time evolution of the driven transmon.
//!
//! Unitary propagation uses the exponential of the midpoint Hamiltonian per
//! step. Open-system runs integrate the Lindblad equation with fixed-step RK4
//! in the interaction frame of the drift, where the dissipators keep their
//! form and only the (slow) drive couplings remain.

use std::io::Write;

use crate::decompose::{DecompositionParams, NativeOp};
use crate::device::{build_spectrum, DeviceModel, Spectrum};
use crate::error::{Error, Result};
use crate::gates::{virtual_z_levels, PhaseVector, Unitary};
use crate::linalg::{self, CMatrix, HermitianExp, C64, ONE, ZERO};
use crate::pulse::{NativePulse, PulseProgram, SplineBasis};

const TWO_PI_MHZ: f64 = std::f64::consts::TAU * 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    /// `e^{iω_rot t n̂}`: drift reduced to detunings `ε_n − nω_rot`.
    NumberOperator,
    /// `e^{iH₀t}`: no drift, all couplings oscillate at their detunings.
    Interaction,
    /// No frame change and no rotating-wave approximation (reference only).
    Lab,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSpec {
    pub omega_rot: f64,
    pub kind: FrameKind,
}

impl FrameSpec {
    /// Number-operator frame at the first transition frequency.
    pub fn rotating(dev: &DeviceModel) -> Self {
        Self {
            omega_rot: dev.omega[0],
            kind: FrameKind::NumberOperator,
        }
    }

    pub fn interaction() -> Self {
        Self {
            omega_rot: 0.0,
            kind: FrameKind::Interaction,
        }
    }

    /// Reference energies `R_n` subtracted by this frame.
    fn reference(&self, spec: &Spectrum) -> Vec<f64> {
        match self.kind {
            FrameKind::NumberOperator => (0..spec.levels()).map(|n| n as f64 * self.omega_rot).collect(),
            FrameKind::Interaction => spec.epsilon.clone(),
            FrameKind::Lab => vec![0.0; spec.levels()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DephasingModel {
    /// `√(γ_φ/2)(|j⟩⟨j| − |j−1⟩⟨j−1|)` on each subspace.
    #[default]
    Subspace,
    /// `√(2γ_φ)|j⟩⟨j|` on each upper level.
    PerLevel,
}

/// Decay and pure-dephasing rates (1/s) per subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub decay: [f64; 3],
    pub dephasing: [f64; 3],
    pub model: DephasingModel,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            decay: [0.0; 3],
            dephasing: [0.0; 3],
            model: DephasingModel::Subspace,
        }
    }

    pub fn from_device(dev: &DeviceModel) -> Self {
        Self {
            decay: dev.decay_rates(),
            dephasing: dev.dephasing_rates(),
            model: DephasingModel::Subspace,
        }
    }

    pub fn with_model(mut self, model: DephasingModel) -> Self {
        self.model = model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.decay.iter().chain(&self.dephasing).any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter("noise rates must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    /// Collapse operators on `levels` levels.
    pub fn collapse_operators(&self, levels: usize) -> Vec<CMatrix> {
        let mut out = Vec::new();
        for j in 1..=3 {
            if self.decay[j - 1] > 0.0 {
                let mut l = CMatrix::zeros(levels, levels);
                l[(j - 1, j)] = C64::new(self.decay[j - 1].sqrt(), 0.0);
                out.push(l);
            }
            let g = self.dephasing[j - 1];
            if g > 0.0 {
                let mut l = CMatrix::zeros(levels, levels);
                match self.model {
                    DephasingModel::Subspace => {
                        let a = (0.5 * g).sqrt();
                        l[(j, j)] = C64::new(a, 0.0);
                        l[(j - 1, j - 1)] = C64::new(-a, 0.0);
                    }
                    DephasingModel::PerLevel => l[(j, j)] = C64::new((2.0 * g).sqrt(), 0.0),
                }
                out.push(l);
            }
        }
        out
    }
}

/// A quantum channel restricted to computational inputs: the images of the
/// sixteen operators `|m⟩⟨n|` (index `4m + n`) on the full simulated space.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub levels: usize,
    pub images: Vec<CMatrix>,
}

impl Channel {
    pub fn from_unitary(u: &CMatrix) -> Self {
        let levels = u.nrows();
        let images = (0..16)
            .map(|k| {
                let (m, n) = (k / 4, k % 4);
                let (a, b) = (u.column(m), u.column(n));
                CMatrix::from_fn(levels, levels, |r, c| a[r] * b[c].conj())
            })
            .collect();
        Self { levels, images }
    }

    /// Applies the channel to a 4×4 input density matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.levels, self.levels);
        for m in 0..4 {
            for n in 0..4 {
                let c = rho[(m, n)];
                if c != ZERO {
                    out += &self.images[4 * m + n] * c;
                }
            }
        }
        out
    }

    /// Process (entanglement) fidelity against a 4×4 unitary,
    /// `(1/16) Σ_{mn} ⟨m|U† E(|m⟩⟨n|) U|n⟩`.
    pub fn process_fidelity(&self, target: &CMatrix) -> f64 {
        let mut total = ZERO;
        for m in 0..4 {
            for n in 0..4 {
                let e = &self.images[4 * m + n];
                for a in 0..4 {
                    for b in 0..4 {
                        total += target[(a, m)].conj() * e[(a, b)] * target[(b, n)];
                    }
                }
            }
        }
        total.re / 16.0
    }

    /// Average state fidelity `(dF + 1)/(d + 1)` with `d = 4`.
    pub fn average_fidelity(&self, target: &CMatrix) -> f64 {
        (4.0 * self.process_fidelity(target) + 1.0) / 5.0
    }

    /// Largest population found outside levels 0–3 for a basis input.
    pub fn leakage(&self) -> f64 {
        (0..4)
            .map(|k| {
                let e = &self.images[5 * k];
                (4..self.levels).map(|n| e[(n, n)].re).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Post-composes a diagonal phase gate on the computational levels.
    pub fn then_virtual_z(&self, phi: &PhaseVector) -> Self {
        let z = virtual_z_levels(phi, self.levels);
        let images = self.images.iter().map(|e| &z * e * z.adjoint()).collect();
        Self {
            levels: self.levels,
            images,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Evolution {
    Unitary(CMatrix),
    Channel(Channel),
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub evolution: Evolution,
    /// Largest population outside levels 0–3 over computational basis inputs.
    pub leakage: f64,
    pub steps: usize,
    pub duration: f64,
    pub frame: FrameKind,
}

impl PropagationResult {
    pub fn unitary(&self) -> Option<&CMatrix> {
        match &self.evolution {
            Evolution::Unitary(u) => Some(u),
            Evolution::Channel(_) => None,
        }
    }

    pub fn channel(&self) -> Channel {
        match &self.evolution {
            Evolution::Unitary(u) => Channel::from_unitary(u),
            Evolution::Channel(c) => c.clone(),
        }
    }

    /// Upper-left 4×4 block of the propagator.
    pub fn block(&self) -> Option<CMatrix> {
        self.unitary().map(|u| u.view((0, 0), (4, 4)).into_owned())
    }
}

fn unitary_leakage(u: &CMatrix) -> f64 {
    (0..4)
        .map(|k| (4..u.nrows()).map(|n| u[(n, k)].norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Target in the number-operator frame, `W_T U_T` with
/// `W_T = e^{iω_rot T n̂} e^{−iH₀T}`, embedded with zero guard rows/columns.
pub fn rotating_target(target: &Unitary, spec: &Spectrum, frame: &FrameSpec, duration: f64) -> CMatrix {
    let levels = spec.levels();
    let mut out = CMatrix::zeros(levels, levels);
    out.view_mut((0, 0), (4, 4)).copy_from(target.matrix());
    let phases: Vec<C64> = match frame.kind {
        FrameKind::NumberOperator => (0..levels)
            .map(|n| C64::from_polar(1.0, (n as f64 * frame.omega_rot - spec.epsilon[n]) * duration))
            .collect(),
        FrameKind::Interaction => vec![ONE; levels],
        FrameKind::Lab => (0..levels)
            .map(|n| C64::from_polar(1.0, -spec.epsilon[n] * duration))
            .collect(),
    };
    for r in 0..levels {
        for c in 0..levels {
            out[(r, c)] *= phases[r];
        }
    }
    out
}

/// Time-ordered drive: pulses on absolute time intervals and zero-duration
/// virtual phase gates.
enum Event {
    Phase(PhaseVector),
    Pulse { start: f64, shape: Shape },
}

enum Shape {
    Spline(Box<(PulseProgram, SplineBasis)>),
    Native(NativePulse),
}

impl Shape {
    fn duration(&self) -> f64 {
        match self {
            Shape::Spline(b) => b.0.duration,
            Shape::Native(np) => np.duration(),
        }
    }

    /// Complex drive `c_j = I_j + iQ_j` (rad/s) at local time.
    fn amplitudes(&self, t: f64) -> [C64; 3] {
        match self {
            Shape::Spline(b) => {
                let (p, basis) = (&b.0, &b.1);
                std::array::from_fn(|k| {
                    let (i, q) = p.quadratures_with(basis, k + 1, t);
                    C64::new(i, q) * TWO_PI_MHZ
                })
            }
            Shape::Native(np) => {
                let mut c = [ZERO; 3];
                c[np.subspace - 1] = C64::from_polar(np.envelope(t), np.phi);
                c
            }
        }
    }
}

fn spline_events(p: &PulseProgram) -> Result<Vec<Event>> {
    p.validate()?;
    Ok(vec![Event::Pulse {
        start: 0.0,
        shape: Shape::Spline(Box::new((p.clone(), p.basis()))),
    }])
}

fn native_events(seq: &DecompositionParams, dev: &DeviceModel) -> Result<Vec<Event>> {
    let mut t = 0.0;
    let mut out = Vec::new();
    for op in seq.schedule() {
        match op {
            NativeOp::Virtual(phi) => out.push(Event::Phase(phi)),
            NativeOp::Rotation { subspace, theta } => {
                if theta == 0.0 {
                    continue;
                }
                let np = NativePulse::new(dev, subspace, theta, 0.0)?;
                out.push(Event::Pulse {
                    start: t,
                    shape: Shape::Native(np),
                });
                t += np.duration();
            }
        }
    }
    Ok(out)
}

/// Builds the Hamiltonian at absolute time `t` in a given frame.
struct HamiltonianBuilder {
    levels: usize,
    detuning: Vec<f64>,
    /// transition frequency seen by coupling `n ↔ n+1` in this frame
    frame_transition: Vec<f64>,
    carriers: [f64; 3],
    lab: Option<(CMatrix, CMatrix)>,
}

impl HamiltonianBuilder {
    fn new(dev: &DeviceModel, spec: &Spectrum, frame: &FrameSpec) -> Self {
        let r = frame.reference(spec);
        let levels = spec.levels();
        let lab = (frame.kind == FrameKind::Lab).then(|| {
            let h0 = crate::device::drift_hamiltonian(spec);
            let (y, _) = crate::device::control_operators(levels);
            (h0, y)
        });
        Self {
            levels,
            detuning: (0..levels).map(|n| spec.epsilon[n] - r[n]).collect(),
            frame_transition: (0..levels - 1).map(|n| r[n + 1] - r[n]).collect(),
            carriers: dev.omega,
            lab,
        }
    }

    fn at(&self, c: &[C64; 3], t: f64) -> CMatrix {
        if let Some((h0, y)) = &self.lab {
            let gamma: f64 = (0..3).map(|j| (c[j] * C64::from_polar(1.0, self.carriers[j] * t)).re).sum();
            return h0 + y * C64::new(gamma, 0.0);
        }
        let mut h = CMatrix::zeros(self.levels, self.levels);
        for n in 0..self.levels {
            h[(n, n)] = C64::new(self.detuning[n], 0.0);
        }
        for n in 0..self.levels - 1 {
            let mut g = ZERO;
            for j in 0..3 {
                if c[j] != ZERO {
                    g += c[j] * C64::from_polar(1.0, (self.carriers[j] - self.frame_transition[n]) * t);
                }
            }
            let v = C64::new(0.0, -0.5 * ((n + 1) as f64).sqrt()) * g;
            h[(n, n + 1)] = v;
            h[(n + 1, n)] = v.conj();
        }
        h
    }

    /// Largest rate at which any coupling phase winds in this frame.
    fn max_winding(&self) -> f64 {
        let mut w: f64 = 0.0;
        for n in 0..self.levels - 1 {
            for j in 0..3 {
                w = w.max((self.carriers[j] - self.frame_transition[n]).abs());
            }
        }
        if self.lab.is_some() {
            w = w.max(self.carriers[0] * 2.0);
        }
        w
    }
}

fn steps_for(duration: f64, dt: f64) -> usize {
    ((duration / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn check_dt(dt: f64, builder: &HamiltonianBuilder) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    // the midpoint rule needs each coupling phase to turn by well under a radian
    let per_step = builder.max_winding() * dt;
    if per_step > 1.0 {
        return Err(Error::StepTooCoarse { dt, drift: per_step });
    }
    Ok(())
}

fn propagate_events(
    events: &[Event],
    dev: &DeviceModel,
    frame: &FrameSpec,
    dt: f64,
    mut observe: Option<&mut dyn FnMut(f64, &CMatrix)>,
) -> Result<PropagationResult> {
    let spec = build_spectrum(dev);
    let builder = HamiltonianBuilder::new(dev, &spec, frame);
    check_dt(dt, &builder)?;
    let levels = spec.levels();
    let mut u = linalg::identity(levels);
    let mut steps = 0;
    let mut clock = 0.0;
    if let Some(f) = observe.as_mut() {
        f(0.0, &u);
    }
    for ev in events {
        match ev {
            Event::Phase(phi) => u = virtual_z_levels(phi, levels) * u,
            Event::Pulse { start, shape } => {
                let total = shape.duration();
                let n = steps_for(total, dt);
                let h = total / n as f64;
                for k in 0..n {
                    let local = (k as f64 + 0.5) * h;
                    let ham = builder.at(&shape.amplitudes(local), start + local);
                    u = HermitianExp::new(&ham, h).propagator() * u;
                    if let Some(f) = observe.as_mut() {
                        f(start + (k + 1) as f64 * h, &u);
                    }
                }
                steps += n;
                clock = start + total;
            }
        }
    }
    let drift = linalg::unitarity_deviation(&u);
    if drift > 1e-6 {
        return Err(Error::StepTooCoarse { dt, drift });
    }
    Ok(PropagationResult {
        leakage: unitary_leakage(&u),
        evolution: Evolution::Unitary(u),
        steps,
        duration: clock,
        frame: frame.kind,
    })
}

/// Propagates a spline program. The trailing phase is not applied; compare
/// with `Z(φ)` explicitly (see [`pulse_infidelity`]).
pub fn propagate_pulse(p: &PulseProgram, dev: &DeviceModel, frame: &FrameSpec, dt: f64) -> Result<PropagationResult> {
    propagate_events(&spline_events(p)?, dev, frame, dt, None)
}

/// Propagates a native sequence in the interaction frame; virtual phase
/// gates are exact diagonal unitaries.
pub fn propagate_native(seq: &DecompositionParams, dev: &DeviceModel, dt: f64) -> Result<PropagationResult> {
    propagate_events(&native_events(seq, dev)?, dev, &FrameSpec::interaction(), dt, None)
}

/// `1 − |Tr(U'† Z(φ) V)|²/16` on the computational block, in the frame of
/// the propagation result.
pub fn pulse_infidelity(
    result: &PropagationResult,
    target: &Unitary,
    phase: &PhaseVector,
    dev: &DeviceModel,
    frame: &FrameSpec,
) -> Result<f64> {
    let u = result
        .unitary()
        .ok_or_else(|| Error::InvalidParameter("expected a unitary propagation result".into()))?;
    let spec = build_spectrum(dev);
    let target_frame = rotating_target(target, &spec, frame, result.duration);
    let z = virtual_z_levels(phase, spec.levels());
    let v = &z * u;
    let mut tr = ZERO;
    for a in 0..4 {
        for b in 0..4 {
            tr += target_frame[(a, b)].conj() * v[(a, b)];
        }
    }
    Ok((1.0 - tr.norm_sqr() / 16.0).clamp(0.0, 1.0))
}

/// What to evolve under the Lindblad equation.
pub enum Drive<'a> {
    Pulse(&'a PulseProgram),
    Native(&'a DecompositionParams),
}

/// Lindblad generator with tridiagonal Hamiltonian and sparse collapse operators.
struct Lindbladian {
    levels: usize,
    /// (row, col, value) of each collapse operator
    jumps: Vec<Vec<(usize, usize, C64)>>,
    /// `½ Σ L†L`
    half_kk: CMatrix,
}

impl Lindbladian {
    fn new(levels: usize, ops: &[CMatrix]) -> Self {
        let mut kk = CMatrix::zeros(levels, levels);
        let mut jumps = Vec::new();
        for l in ops {
            kk += l.adjoint() * l;
            let mut entries = Vec::new();
            for r in 0..levels {
                for c in 0..levels {
                    if l[(r, c)] != ZERO {
                        entries.push((r, c, l[(r, c)]));
                    }
                }
            }
            jumps.push(entries);
        }
        Self {
            levels,
            jumps,
            half_kk: kk * C64::new(0.5, 0.0),
        }
    }

    /// `dρ/dt` for the tridiagonal interaction-frame Hamiltonian `h`.
    fn apply(&self, h: &CMatrix, rho: &CMatrix, out: &mut CMatrix) {
        let d = self.levels;
        // −i[H, ρ] − ½{K, ρ}, using G = iH + ½K so that dρ = −Gρ − ρG† + jumps
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                let lo = r.saturating_sub(1);
                let hi = (r + 1).min(d - 1);
                for k in lo..=hi {
                    let g = C64::new(0.0, 1.0) * h[(r, k)] + self.half_kk[(r, k)];
                    acc -= g * rho[(k, c)];
                }
                let lo = c.saturating_sub(1);
                let hi = (c + 1).min(d - 1);
                for k in lo..=hi {
                    let g = C64::new(0.0, 1.0) * h[(c, k)] + self.half_kk[(c, k)];
                    acc -= rho[(r, k)] * g.conj();
                }
                out[(r, c)] = acc;
            }
        }
        for entries in &self.jumps {
            for &(a, b, la) in entries {
                for &(c, e, lc) in entries {
                    out[(a, c)] += la * rho[(b, e)] * lc.conj();
                }
            }
        }
    }
}

/// Classical RK4 over `[t0, t0 + total]` for a set of density matrices.
fn rk4_segment(
    lind: &Lindbladian,
    builder: &HamiltonianBuilder,
    shape: &Shape,
    start: f64,
    dt: f64,
    states: &mut [CMatrix],
) -> usize {
    let total = shape.duration();
    let n = steps_for(total, dt);
    let h = total / n as f64;
    let d = lind.levels;
    let mut k1 = CMatrix::zeros(d, d);
    let mut k2 = CMatrix::zeros(d, d);
    let mut k3 = CMatrix::zeros(d, d);
    let mut k4 = CMatrix::zeros(d, d);
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    for k in 0..n {
        let t = k as f64 * h;
        let h0 = builder.at(&shape.amplitudes(t), start + t);
        let hm = builder.at(&shape.amplitudes(t + 0.5 * h), start + t + 0.5 * h);
        let h1 = builder.at(&shape.amplitudes(t + h), start + t + h);
        for rho in states.iter_mut() {
            lind.apply(&h0, rho, &mut k1);
            let tmp = &*rho + &k1 * half;
            lind.apply(&hm, &tmp, &mut k2);
            let tmp = &*rho + &k2 * half;
            lind.apply(&hm, &tmp, &mut k3);
            let tmp = &*rho + &k3 * full;
            lind.apply(&h1, &tmp, &mut k4);
            *rho += (&k1 + &k2 * C64::new(2.0, 0.0) + &k3 * C64::new(2.0, 0.0) + &k4) * sixth;
        }
    }
    n
}

/// Evolves density matrices under the drive with the given noise, in the
/// interaction frame. Returns the number of RK4 steps and the end time.
pub fn evolve_density(
    drive: &Drive<'_>,
    dev: &DeviceModel,
    noise: &NoiseSpec,
    dt: f64,
    time_offset: f64,
    states: &mut [CMatrix],
) -> Result<(usize, f64)> {
    noise.validate()?;
    let events = match drive {
        Drive::Pulse(p) => spline_events(p)?,
        Drive::Native(s) => native_events(s, dev)?,
    };
    let spec = build_spectrum(dev);
    let frame = FrameSpec::interaction();
    let builder = HamiltonianBuilder::new(dev, &spec, &frame);
    check_dt(dt, &builder)?;
    let lind = Lindbladian::new(spec.levels(), &noise.collapse_operators(spec.levels()));
    let mut steps = 0;
    let mut clock = 0.0;
    for ev in &events {
        match ev {
            Event::Phase(phi) => {
                let z = virtual_z_levels(phi, spec.levels());
                for rho in states.iter_mut() {
                    *rho = &z * &*rho * z.adjoint();
                }
            }
            Event::Pulse { start, shape } => {
                steps += rk4_segment(&lind, &builder, shape, time_offset + start, dt, states);
                clock = start + shape.duration();
            }
        }
    }
    Ok((steps, clock))
}

/// Full process of a drive under Lindblad noise. For pulse programs the
/// trailing phase `Z(φ)` is appended so the channel targets the gate itself.
pub fn propagate_lindblad(drive: Drive<'_>, dev: &DeviceModel, noise: &NoiseSpec, dt: f64) -> Result<PropagationResult> {
    let levels = dev.levels;
    let mut states: Vec<CMatrix> = (0..16)
        .map(|k| {
            let mut m = CMatrix::zeros(levels, levels);
            m[(k / 4, k % 4)] = ONE;
            m
        })
        .collect();
    let (steps, duration) = evolve_density(&drive, dev, noise, dt, 0.0, &mut states)?;
    for k in 0..4 {
        let dev_trace = (linalg::trace(&states[5 * k]) - ONE).norm();
        if dev_trace > 1e-6 {
            return Err(Error::TraceDeviation { deviation: dev_trace });
        }
    }
    let mut channel = Channel { levels, images: states };
    if let Drive::Pulse(p) = drive {
        channel = channel.then_virtual_z(&p.trailing_phase);
    }
    Ok(PropagationResult {
        leakage: channel.leakage(),
        evolution: Evolution::Channel(channel),
        steps,
        duration,
        frame: FrameKind::Interaction,
    })
}

/// Interaction-frame unitary of a pulse program including its trailing phase.
pub fn pulse_gate(p: &PulseProgram, dev: &DeviceModel, dt: f64) -> Result<CMatrix> {
    let r = propagate_events(&spline_events(p)?, dev, &FrameSpec::interaction(), dt, None)?;
    let u = r.unitary().expect("unitary run");
    Ok(virtual_z_levels(&p.trailing_phase, dev.levels) * u)
}

/// Level populations over time for one initial state, with or without noise.
pub fn population_trace(
    drive: Drive<'_>,
    dev: &DeviceModel,
    noise: Option<&NoiseSpec>,
    initial: usize,
    dt: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let levels = dev.levels;
    let mut rows = Vec::new();
    match noise {
        None => {
            let events = match &drive {
                Drive::Pulse(p) => spline_events(p)?,
                Drive::Native(s) => native_events(s, dev)?,
            };
            let mut record = |t: f64, u: &CMatrix| {
                rows.push((t, (0..levels).map(|n| u[(n, initial)].norm_sqr()).collect()));
            };
            propagate_events(&events, dev, &FrameSpec::interaction(), dt, Some(&mut record))?;
        }
        Some(noise) => {
            // step pulse by pulse through a single density matrix; sample at pulse boundaries
            let mut rho = vec![CMatrix::zeros(levels, levels)];
            rho[0][(initial, initial)] = ONE;
            let pops = |r: &CMatrix| (0..levels).map(|n| r[(n, n)].re).collect::<Vec<_>>();
            rows.push((0.0, pops(&rho[0])));
            let (_, t) = evolve_density(&drive, dev, noise, dt, 0.0, &mut rho)?;
            rows.push((t, pops(&rho[0])));
        }
    }
    Ok(rows)
}

/// Idle evolution under noise only, sampled every `sample` seconds.
pub fn idle_populations(
    dev: &DeviceModel,
    noise: &NoiseSpec,
    rho0: &CMatrix,
    duration: f64,
    dt: f64,
    sample: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    noise.validate()?;
    if rho0.nrows() != dev.levels {
        return Err(Error::DimensionMismatch { expected: dev.levels, found: rho0.nrows() });
    }
    let spec = build_spectrum(dev);
    let builder = HamiltonianBuilder::new(dev, &spec, &FrameSpec::interaction());
    let lind = Lindbladian::new(spec.levels(), &noise.collapse_operators(spec.levels()));
    let mut rho = vec![rho0.clone()];
    let pops = |r: &CMatrix| (0..r.nrows()).map(|n| r[(n, n)].re).collect::<Vec<_>>();
    let mut rows = vec![(0.0, pops(&rho[0]))];
    let chunks = steps_for(duration, sample);
    let chunk = duration / chunks as f64;
    for k in 0..chunks {
        rk4_idle(&lind, &builder, chunk, dt, &mut rho);
        rows.push(((k + 1) as f64 * chunk, pops(&rho[0])));
    }
    Ok(rows)
}

fn rk4_idle(lind: &Lindbladian, builder: &HamiltonianBuilder, span: f64, dt: f64, states: &mut [CMatrix]) {
    let n = steps_for(span, dt);
    let h = span / n as f64;
    let ham = builder.at(&[ZERO; 3], 0.0);
    let d = lind.levels;
    let (mut k1, mut k2, mut k3, mut k4) = (
        CMatrix::zeros(d, d),
        CMatrix::zeros(d, d),
        CMatrix::zeros(d, d),
        CMatrix::zeros(d, d),
    );
    for _ in 0..n {
        for rho in states.iter_mut() {
            lind.apply(&ham, rho, &mut k1);
            lind.apply(&ham, &(&*rho + &k1 * C64::new(0.5 * h, 0.0)), &mut k2);
            lind.apply(&ham, &(&*rho + &k2 * C64::new(0.5 * h, 0.0)), &mut k3);
            lind.apply(&ham, &(&*rho + &k3 * C64::new(h, 0.0)), &mut k4);
            *rho += (&k1 + &k2 * C64::new(2.0, 0.0) + &k3 * C64::new(2.0, 0.0) + &k4) * C64::new(h / 6.0, 0.0);
        }
    }
}

/// Writes `t_ns, p0, p1, …` rows.
pub fn write_populations<W: Write>(out: &mut W, rows: &[(f64, Vec<f64>)]) -> Result<()> {
    let levels = rows.first().map_or(0, |r| r.1.len());
    let header: Vec<String> = (0..levels).map(|n| format!("p{n}")).collect();
    writeln!(out, "t_ns,{}", header.join(","))?;
    for (t, p) in rows {
        let vals: Vec<String> = p.iter().map(|x| format!("{x:.10}")).collect();
        writeln!(out, "{:.4},{}", t * 1e9, vals.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{standard_gate, subspace_y};

    fn dev() -> DeviceModel {
        DeviceModel::reference_device()
    }

    #[test]
    fn zero_pulse_is_diagonal_phase() {
        let d = dev();
        let p = PulseProgram::zeros(50e-9, 1e-9).unwrap();
        let r = propagate_pulse(&p, &d, &FrameSpec::rotating(&d), 0.1e-9).unwrap();
        let u = r.unitary().unwrap();
        let spec = build_spectrum(&d);
        for n in 0..d.levels {
            let want = C64::from_polar(1.0, -(spec.epsilon[n] - n as f64 * d.omega[0]) * 50e-9);
            assert!((u[(n, n)] - want).norm() < 1e-10);
        }
        assert!(r.leakage < 1e-20);
        // identity target in the rotating frame is exactly this phase pattern
        let inf = pulse_infidelity(&r, &Unitary::identity(4), &PhaseVector::zero(), &d, &FrameSpec::rotating(&d)).unwrap();
        assert!(inf < 1e-12, "{inf}");
    }

    #[test]
    fn native_pi_pulse_on_first_subspace() {
        let d = dev();
        let mut p = DecompositionParams::identity();
        p.theta[0] = std::f64::consts::PI;
        let r = propagate_native(&p, &d, 0.01e-9).unwrap();
        let block = r.block().unwrap();
        let target = subspace_y(1, std::f64::consts::PI).unwrap();
        let inf = crate::gates::matrix_infidelity(target.matrix(), &block).unwrap();
        // off-resonant dressing by the other transitions costs ~1e-3
        assert!(inf < 3e-3, "{inf}");
        assert!(r.leakage < 1e-3);
    }

    #[test]
    fn decay_of_first_level_is_exponential() {
        let d = dev();
        let noise = NoiseSpec::from_device(&d);
        let mut rho = CMatrix::zeros(d.levels, d.levels);
        rho[(1, 1)] = ONE;
        let rows = idle_populations(&d, &noise, &rho, 2e-6, 1e-9, 1e-6).unwrap();
        let (t, p) = rows.last().unwrap();
        let want = (-t / d.t1[0]).exp();
        assert!((p[1] - want).abs() < 1e-6, "{} vs {want}", p[1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ramsey_coherence_decays_at_ramsey_time() {
        let d = dev();
        let noise = NoiseSpec::from_device(&d);
        let spec = build_spectrum(&d);
        let builder = HamiltonianBuilder::new(&d, &spec, &FrameSpec::interaction());
        let lind = Lindbladian::new(d.levels, &noise.collapse_operators(d.levels));
        let mut rho = vec![CMatrix::zeros(d.levels, d.levels)];
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            rho[0][(r, c)] = C64::new(0.5, 0.0);
        }
        rk4_idle(&lind, &builder, 1e-6, 1e-9, &mut rho);
        // only the first subspace's own dephasing plus half the neighbour's σ_z term act
        let g = 1.0 / d.t_ramsey[0] + 0.25 * noise.dephasing[1];
        let want = 0.5 * (-1e-6 * g).exp();
        assert!((rho[0][(0, 1)].norm() - want).abs() < 1e-6);
    }

    #[test]
    fn noiseless_lindblad_matches_unitary() {
        let d = dev();
        let mut p = DecompositionParams::identity();
        p.theta[0] = 1.1;
        p.theta[1] = 0.7;
        p.theta[3] = 2.0;
        p.phi[1] = PhaseVector::new([0.3, 1.0, 2.0]);
        // the midpoint rule is second order; give it a finer grid than RK4
        let u = propagate_native(&p, &d, 0.001e-9).unwrap();
        let ch = propagate_lindblad(Drive::Native(&p), &d, &NoiseSpec::none(), 0.01e-9).unwrap();
        let want = Channel::from_unitary(u.unitary().unwrap());
        let got = ch.channel();
        for (a, b) in want.images.iter().zip(&got.images) {
            assert!((a - b).norm() < 1e-8, "{}", (a - b).norm());
        }
    }

    #[test]
    fn channel_fidelity_of_unitary_matches_trace_formula() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let u = crate::linalg::haar_unitary(4, &mut rng);
        let mut big = linalg::identity(5);
        big.view_mut((0, 0), (4, 4)).copy_from(&u);
        let ch = Channel::from_unitary(&big);
        let target = standard_gate("H4").unwrap();
        let tr = linalg::inner(target.matrix(), &u);
        let f = ch.process_fidelity(target.matrix());
        assert!((f - tr.norm_sqr() / 16.0).abs() < 1e-12);
        assert!((ch.process_fidelity(&u) - 1.0).abs() < 1e-12);
        assert!((ch.average_fidelity(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let d = dev();
        let p = PulseProgram::zeros(50e-9, 1e-9).unwrap();
        let err = propagate_pulse(&p, &d, &FrameSpec::rotating(&d), 5e-9).unwrap_err();
        assert!(matches!(err, Error::StepTooCoarse { .. }));
    }

    #[test]
    fn frames_agree_for_a_spline_pulse() {
        let d = dev();
        let mut p = PulseProgram::zeros(60e-9, 1e-9).unwrap();
        for s in 0..p.n_splines {
            p.coeff_i[0][s] = 2.0 * (s as f64 * 0.7).sin();
            p.coeff_q[1][s] = 1.5 * (s as f64 * 1.3).cos();
            p.coeff_i[2][s] = 0.8;
        }
        let dt = 0.02e-9;
        let rot = propagate_pulse(&p, &d, &FrameSpec::rotating(&d), dt).unwrap();
        let int = propagate_pulse(&p, &d, &FrameSpec::interaction(), dt).unwrap();
        let spec = build_spectrum(&d);
        let t = rot.duration;
        // U_rot = e^{iω n T} e^{−iH₀T} U_int
        let fix = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d.levels, |n, _| {
            C64::from_polar(1.0, n as f64 * d.omega[0] * t - spec.epsilon[n] * t)
        }));
        let lhs = fix * int.unitary().unwrap();
        let diff = (lhs - rot.unitary().unwrap()).norm();
        assert!(diff < 1e-4, "{diff}");
    }
}
