// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Open-loop pulse synthesis: penalized gate infidelity over spline
//! coefficients and trailing phases, with an exact adjoint gradient.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::{build_spectrum, control_operators, DeviceModel};
use crate::error::{Error, Result};
use crate::gates::{PhaseVector, Unitary};
use crate::linalg::{self, CMatrix, HermitianExp, C64, ZERO};
use crate::optim::{self, Options};
use crate::pulse::{n_splines_for, PulseProgram, SplineBasis};
use crate::sim::{self, FrameKind, FrameSpec};

const TWO_PI_MHZ: f64 = TAU * 1e6;

#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub target: Unitary,
    pub duration: f64,
    pub device: DeviceModel,
    pub frame: FrameSpec,
    pub c_amp: f64,
    pub c_fil: f64,
    /// Power threshold `a` in AWG units.
    pub amp_threshold: f64,
    /// Filter half-width in Hz.
    pub bandwidth: f64,
    pub feasibility: f64,
    pub optimize_trailing_phase: bool,
    /// Propagation step.
    pub dt: f64,
    /// Grid for the penalty integrals.
    pub penalty_dt: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl ControlProblem {
    pub fn new(target: Unitary, duration: f64, device: DeviceModel) -> Result<Self> {
        if target.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: target.dim(),
            });
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        Ok(Self {
            target,
            duration,
            frame: FrameSpec::rotating(&device),
            device,
            c_amp: 0.5,
            c_fil: 0.5,
            amp_threshold: 0.95,
            bandwidth: 25e6,
            feasibility: 1e-4,
            optimize_trailing_phase: true,
            dt: 0.1e-9,
            penalty_dt: 1e-9,
            max_iter: 4000,
            restarts: 4,
            seed: 0,
        })
    }

    pub fn n_splines(&self) -> usize {
        n_splines_for(self.duration)
    }

    /// Number of free parameters: `3·N_s·2` coefficients plus optional phases.
    pub fn dimension(&self) -> usize {
        6 * self.n_splines() + if self.optimize_trailing_phase { 3 } else { 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub infidelity: f64,
    pub amp_penalty: f64,
    pub filter_penalty: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlResult {
    pub pulse: PulseProgram,
    pub phases: PhaseVector,
    pub breakdown: Breakdown,
    pub leakage: f64,
    pub max_awg: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// `g(x) = 1 − (tanh(−1000x/a) + 1)/2`, a smooth step at zero.
pub fn smooth_step(x: f64, a: f64) -> f64 {
    0.5 * (1.0 + (1000.0 * x / a).tanh())
}

/// Suppressed load `f(x) = (1 − g(x−a))x + g(x−a)a`.
pub fn suppress(x: f64, a: f64) -> f64 {
    let g = smooth_step(x - a, a);
    (1.0 - g) * x + g * a
}

/// `|x − f(x)| = g(x−a)|x−a|` and its derivative.
fn excess(x: f64, a: f64) -> (f64, f64) {
    let u = x - a;
    let th = (1000.0 * u / a).tanh();
    let g = 0.5 * (1.0 + th);
    let dg = 0.5 * (1000.0 / a) * (1.0 - th * th);
    (g * u.abs(), dg * u.abs() + g * u.signum())
}

/// Blackman-windowed sinc low-pass with unit DC gain, sampled every `dt`.
pub fn sinc_kernel(halfwidth: f64, dt: f64) -> Vec<f64> {
    let length = 8.0 / halfwidth;
    let half = ((0.5 * length / dt).round() as usize).max(1);
    let n = 2 * half;
    let mut k: Vec<f64> = (0..=n)
        .map(|m| {
            let t = (m as f64 - half as f64) * dt;
            let x = 2.0 * halfwidth * t;
            let sinc = if x == 0.0 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
            let w = 0.42 - 0.5 * (TAU * m as f64 / n as f64).cos() + 0.08 * (2.0 * TAU * m as f64 / n as f64).cos();
            sinc * w
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Convolution with edge-clamped padding, so a constant envelope passes.
fn convolve(signal: &[C64], kernel: &[f64]) -> Vec<C64> {
    let n = signal.len() as isize;
    let half = (kernel.len() / 2) as isize;
    (0..n)
        .map(|k| {
            let mut acc = ZERO;
            for (m, w) in kernel.iter().enumerate() {
                let idx = (k + half - m as isize).clamp(0, n - 1);
                acc += signal[idx as usize] * *w;
            }
            acc
        })
        .collect()
}

fn convolve_adjoint(e: &[C64], kernel: &[f64]) -> Vec<C64> {
    let n = e.len() as isize;
    let half = (kernel.len() / 2) as isize;
    let mut out = vec![ZERO; e.len()];
    for k in 0..n {
        for (m, w) in kernel.iter().enumerate() {
            let idx = (k + half - m as isize).clamp(0, n - 1);
            out[idx as usize] += e[k as usize] * *w;
        }
    }
    out
}

fn trapezoid_weights(n: usize, dt_us: f64, last: f64) -> Vec<f64> {
    // uniform grid except possibly a shorter final interval of `last`
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = if k == n - 2 { last } else { dt_us };
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Penalty grid: sample times plus their spline locals and trapezoid weights (µs).
struct PenaltyGrid {
    locals: Vec<(usize, [f64; 3])>,
    weights: Vec<f64>,
    dt: f64,
}

impl PenaltyGrid {
    fn new(basis: &SplineBasis, dt: f64) -> Self {
        let times = crate::pulse::sample_times(basis.duration, dt);
        let last = if times.len() > 1 { times[times.len() - 1] - times[times.len() - 2] } else { 0.0 };
        Self {
            locals: times.iter().map(|&t| basis.local(t)).collect(),
            weights: trapezoid_weights(times.len(), dt * 1e6, last * 1e6),
            dt,
        }
    }

    /// Complex envelope `I_j + iQ_j` (MHz) on the grid.
    fn envelope(&self, p: &PulseProgram, j: usize) -> Vec<C64> {
        self.locals
            .iter()
            .map(|(first, b)| {
                let mut c = ZERO;
                for k in 0..3 {
                    c += C64::new(p.coeff_i[j][first + k], p.coeff_q[j][first + k]) * b[k];
                }
                c
            })
            .collect()
    }

    /// Scatters a per-sample complex gradient onto coefficient slots.
    fn scatter(&self, g: &[C64], j: usize, n_splines: usize, grad: &mut [f64]) {
        for ((first, b), gk) in self.locals.iter().zip(g) {
            for k in 0..3 {
                let s = first + k;
                grad[(j * n_splines + s) * 2] += gk.re * b[k];
                grad[(j * n_splines + s) * 2 + 1] += gk.im * b[k];
            }
        }
    }
}

/// `∫|Γ̃ − Γ̃^sup| dt` in AWG·µs on a grid of step `dt`.
pub fn amp_penalty(p: &PulseProgram, dev: &DeviceModel, a: f64, dt: f64) -> Result<f64> {
    check_positive(a, "amplitude threshold")?;
    let grid = PenaltyGrid::new(&p.basis(), dt);
    Ok(amp_terms(&grid, p, dev, a, None))
}

/// `Σ_j ∫|c_j − c_j^fil| dt` (MHz·µs) with `c_j = I_j + iQ_j` low-passed to ±`halfwidth`.
pub fn filter_penalty(p: &PulseProgram, halfwidth: f64, dt: f64) -> Result<f64> {
    check_positive(halfwidth, "filter half-width")?;
    let grid = PenaltyGrid::new(&p.basis(), dt);
    let kernel = sinc_kernel(halfwidth, grid.dt);
    Ok(filter_terms(&grid, &kernel, p, None))
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {x}")))
    }
}

fn amp_terms(grid: &PenaltyGrid, p: &PulseProgram, dev: &DeviceModel, a: f64, grad: Option<&mut [f64]>) -> f64 {
    let env: Vec<Vec<C64>> = (0..3).map(|j| grid.envelope(p, j)).collect();
    let r = dev.drive_response;
    let mut total = 0.0;
    let mut dloads = vec![0.0; grid.weights.len()];
    for (k, w) in grid.weights.iter().enumerate() {
        let load: f64 = (0..3).map(|j| env[j][k].norm() / r[j]).sum();
        let (v, dv) = excess(load, a);
        total += w * v;
        dloads[k] = w * dv;
    }
    if let Some(grad) = grad {
        for j in 0..3 {
            let g: Vec<C64> = env[j]
                .iter()
                .zip(&dloads)
                .map(|(c, d)| {
                    let n = c.norm();
                    if n > 0.0 {
                        c * (d / (n * r[j]))
                    } else {
                        ZERO
                    }
                })
                .collect();
            grid.scatter(&g, j, p.n_splines, grad);
        }
    }
    total
}

fn filter_terms(grid: &PenaltyGrid, kernel: &[f64], p: &PulseProgram, mut grad: Option<&mut [f64]>) -> f64 {
    // smoothed modulus keeps the gradient finite where the residual vanishes
    const EPS: f64 = 1e-9;
    let mut total = 0.0;
    for j in 0..3 {
        let c = grid.envelope(p, j);
        let filtered = convolve(&c, kernel);
        let mut e = vec![ZERO; c.len()];
        for k in 0..c.len() {
            let res = c[k] - filtered[k];
            let m = (res.norm_sqr() + EPS * EPS).sqrt();
            total += grid.weights[k] * (m - EPS);
            e[k] = res * (grid.weights[k] / m);
        }
        if let Some(grad) = grad.as_deref_mut() {
            let back = convolve_adjoint(&e, kernel);
            let g: Vec<C64> = e.iter().zip(&back).map(|(a, b)| a - b).collect();
            grid.scatter(&g, j, p.n_splines, grad);
        }
    }
    total
}

/// Precomputed state for repeated objective evaluations.
pub struct Evaluator<'a> {
    problem: &'a ControlProblem,
    basis: SplineBasis,
    steps: usize,
    h: f64,
    /// per step: spline locals and carrier phases `e^{i(ω_j − ω_rot)t}`
    step_locals: Vec<(usize, [f64; 3])>,
    step_carriers: Vec<[C64; 3]>,
    detuning: Vec<f64>,
    gx: CMatrix,
    gy: CMatrix,
    target: CMatrix,
    grid: PenaltyGrid,
    kernel: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a ControlProblem) -> Result<Self> {
        if problem.frame.kind != FrameKind::NumberOperator {
            return Err(Error::InvalidParameter(
                "pulse optimization runs in the number-operator frame".into(),
            ));
        }
        check_positive(problem.dt, "time step")?;
        check_positive(problem.penalty_dt, "penalty grid step")?;
        check_positive(problem.amp_threshold, "amplitude threshold")?;
        check_positive(problem.bandwidth, "filter half-width")?;
        let dev = &problem.device;
        let spec = build_spectrum(dev);
        let levels = spec.levels();
        let basis = SplineBasis::new(problem.duration, problem.n_splines())?;
        let steps = ((problem.duration / problem.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = problem.duration / steps as f64;
        let w = problem.frame.omega_rot;
        let mut step_locals = Vec::with_capacity(steps);
        let mut step_carriers = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = (k as f64 + 0.5) * h;
            step_locals.push(basis.local(t));
            step_carriers.push(std::array::from_fn(|j| C64::from_polar(TWO_PI_MHZ, (dev.omega[j] - w) * t)));
        }
        let (y, x) = control_operators(levels);
        let half = C64::new(0.5, 0.0);
        let target = sim::rotating_target(&problem.target, &spec, &problem.frame, problem.duration);
        let grid = PenaltyGrid::new(&basis, problem.penalty_dt);
        let kernel = sinc_kernel(problem.bandwidth, problem.penalty_dt);
        Ok(Self {
            problem,
            basis,
            steps,
            h,
            step_locals,
            step_carriers,
            detuning: (0..levels).map(|n| spec.epsilon[n] - n as f64 * w).collect(),
            gx: y * half,
            gy: x * half,
            target,
            grid,
            kernel,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Splits a parameter vector into a pulse program and trailing phases.
    pub fn unpack(&self, x: &[f64]) -> (PulseProgram, [f64; 3]) {
        let ns = self.basis.n;
        let mut p = PulseProgram::zeros(self.problem.duration, self.problem.dt).expect("valid problem");
        p.set_flat_coefficients(&x[..6 * ns]);
        let phases = if self.problem.optimize_trailing_phase {
            [x[6 * ns], x[6 * ns + 1], x[6 * ns + 2]]
        } else {
            [0.0; 3]
        };
        p.trailing_phase = PhaseVector::new(phases);
        (p, phases)
    }

    fn total_drive(&self, p: &PulseProgram, k: usize) -> C64 {
        let (first, b) = &self.step_locals[k];
        let mut c = ZERO;
        for j in 0..3 {
            let mut env = ZERO;
            for m in 0..3 {
                env += C64::new(p.coeff_i[j][first + m], p.coeff_q[j][first + m]) * b[m];
            }
            c += env * self.step_carriers[k][j];
        }
        c
    }

    fn hamiltonian(&self, c: C64) -> CMatrix {
        let levels = self.detuning.len();
        let mut h = CMatrix::zeros(levels, levels);
        for n in 0..levels {
            h[(n, n)] = C64::new(self.detuning[n], 0.0);
        }
        for n in 0..levels - 1 {
            let v = C64::new(0.0, -0.5 * ((n + 1) as f64).sqrt()) * c;
            h[(n, n + 1)] = v;
            h[(n + 1, n)] = v.conj();
        }
        h
    }

    /// Objective value and breakdown; fills `grad` when given.
    pub fn evaluate(&self, x: &[f64], grad: Option<&mut [f64]>) -> (f64, Breakdown, f64) {
        let pr = self.problem;
        let (p, phases) = self.unpack(x);
        let ns = self.basis.n;
        let levels = self.detuning.len();

        // forward sweep, keeping step exponentials and prefix products
        let mut exps = Vec::with_capacity(self.steps);
        let mut prefix = Vec::with_capacity(self.steps + 1);
        let mut v = linalg::identity(levels);
        for k in 0..self.steps {
            let e = HermitianExp::new(&self.hamiltonian(self.total_drive(&p, k)), self.h);
            prefix.push(v.clone());
            v = e.propagator() * v;
            exps.push(e);
        }
        let leakage = (0..4)
            .map(|k| (4..levels).map(|n| v[(n, k)].norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max);

        // o = Σ_{a,b<4} conj(T_ab) z_a V_ab
        let lp = [0.0, phases[0], phases[0] + phases[1], phases[0] + phases[1] + phases[2]];
        let z: Vec<C64> = lp.iter().map(|&a| C64::from_polar(1.0, a)).collect();
        let mut rows = [ZERO; 4];
        for a in 0..4 {
            for b in 0..4 {
                rows[a] += self.target[(a, b)].conj() * v[(a, b)];
            }
        }
        let o: C64 = (0..4).map(|a| z[a] * rows[a]).sum();
        let infidelity = 1.0 - o.norm_sqr() / 16.0;

        let mut g_amp = vec![0.0; 6 * ns];
        let mut g_fil = vec![0.0; 6 * ns];
        let want_grad = grad.is_some();
        let amp = amp_terms(&self.grid, &p, &pr.device, pr.amp_threshold, want_grad.then_some(&mut g_amp[..]));
        let fil = filter_terms(&self.grid, &self.kernel, &p, want_grad.then_some(&mut g_fil[..]));
        let total = infidelity + pr.c_amp * amp + pr.c_fil * fil;
        let breakdown = Breakdown {
            infidelity,
            amp_penalty: amp,
            filter_penalty: fil,
            total,
        };

        if let Some(grad) = grad {
            grad.iter_mut().for_each(|g| *g = 0.0);
            // M with Tr(M V) = o
            let mut m = CMatrix::zeros(levels, levels);
            for a in 0..4 {
                for b in 0..4 {
                    m[(b, a)] = self.target[(a, b)].conj() * z[a];
                }
            }
            // backward sweep: B_k = P_k M S_k, with S_k the product of later steps
            let mut suffix_m = m.clone();
            let scale = -2.0 / 16.0;
            for k in (0..self.steps).rev() {
                let b = &prefix[k] * &suffix_m;
                let d = exps[k].contract_derivatives(&b, &[&self.gx, &self.gy]);
                // dI/dRe c and dI/dIm c at this step
                let gre = scale * (o.conj() * d[0]).re;
                let gim = scale * (o.conj() * d[1]).re;
                let (first, bs) = &self.step_locals[k];
                for j in 0..3 {
                    let ph = self.step_carriers[k][j];
                    // ∂c/∂α^I = ph·B, ∂c/∂α^Q = i·ph·B
                    let di = gre * ph.re + gim * ph.im;
                    let dq = -gre * ph.im + gim * ph.re;
                    for mm in 0..3 {
                        let s = first + mm;
                        grad[(j * ns + s) * 2] += di * bs[mm];
                        grad[(j * ns + s) * 2 + 1] += dq * bs[mm];
                    }
                }
                suffix_m = suffix_m * exps[k].propagator();
            }
            for (g, (a, f)) in grad.iter_mut().zip(g_amp.iter().zip(&g_fil)) {
                *g += pr.c_amp * a + pr.c_fil * f;
            }
            if pr.optimize_trailing_phase {
                // ∂o/∂φ_m = Σ_{a ≥ m} i z_a rows_a
                for mphi in 0..3 {
                    let d: C64 = (mphi + 1..4).map(|a| C64::new(0.0, 1.0) * z[a] * rows[a]).sum();
                    grad[6 * ns + mphi] = scale * (o.conj() * d).re;
                }
            }
        }
        (total, breakdown, leakage)
    }

    /// Adjoint gradient of the full objective.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.evaluate(x, Some(&mut g));
        g
    }

    /// Central finite-difference gradient (fallback and oracle).
    pub fn gradient_fd(&self, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        optim::central_difference(|y| self.evaluate(y, None).0, x, h, &mut g);
        g
    }
}

/// Objective value and breakdown for explicit coefficients and phases.
pub fn objective(problem: &ControlProblem, pulse: &PulseProgram, phases: &PhaseVector) -> Result<(f64, Breakdown)> {
    let ev = Evaluator::new(problem)?;
    if pulse.n_splines != problem.n_splines() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_splines(),
            found: pulse.n_splines,
        });
    }
    let mut x = pulse.flat_coefficients();
    if problem.optimize_trailing_phase {
        x.extend(phases.components());
    }
    let (v, b, _) = ev.evaluate(&x, None);
    Ok((v, b))
}

/// Random small-amplitude start: coefficients uniform in ±0.05·r_j.
pub fn initial_guess(problem: &ControlProblem, rng: &mut impl Rng) -> Vec<f64> {
    let ns = problem.n_splines();
    let mut x = Vec::with_capacity(problem.dimension());
    for j in 0..3 {
        let r = problem.device.drive_response[j];
        for _ in 0..2 * ns {
            x.push(rng.random_range(-0.05..=0.05) * r);
        }
    }
    if problem.optimize_trailing_phase {
        x.extend([0.0; 3]);
    }
    x
}

/// Minimizes the objective with L-BFGS over several random starts; returns
/// the first converged run, or the best one otherwise.
pub fn optimize(problem: &ControlProblem) -> Result<ControlResult> {
    let ev = Evaluator::new(problem)?;
    let mut best: Option<ControlResult> = None;
    for restart in 0..problem.restarts.max(1) {
        let seed = problem.seed.wrapping_add(restart as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = initial_guess(problem, &mut rng);
        let result = run_lbfgs(problem, &ev, &x0, seed)?;
        let better = best.as_ref().is_none_or(|b| result.breakdown.total < b.breakdown.total);
        let done = result.converged;
        if better || done {
            best = Some(result);
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Single L-BFGS run from a given parameter vector.
pub fn optimize_from(problem: &ControlProblem, x0: &[f64]) -> Result<ControlResult> {
    if x0.len() != problem.dimension() {
        return Err(Error::DimensionMismatch {
            expected: problem.dimension(),
            found: x0.len(),
        });
    }
    let ev = Evaluator::new(problem)?;
    run_lbfgs(problem, &ev, x0, problem.seed)
}

fn run_lbfgs(problem: &ControlProblem, ev: &Evaluator<'_>, x0: &[f64], seed: u64) -> Result<ControlResult> {
    let opts = Options {
        max_iter: problem.max_iter,
        grad_tol: 1e-12,
        f_tol: 1e-13,
        f_target: 0.5 * problem.feasibility,
        memory: 20,
    };
    let out = optim::lbfgs(
        |x, g| {
            let (v, _, _) = ev.evaluate(x, Some(g));
            v
        },
        x0,
        &opts,
    );
    finish(problem, ev, &out.x, out.iterations, out.evaluations, seed)
}

/// Parameter vector of `pulse` (and its trailing phase, if free) for `problem`.
pub fn pack(problem: &ControlProblem, pulse: &PulseProgram) -> Result<Vec<f64>> {
    if pulse.n_splines != problem.n_splines() {
        return Err(Error::DimensionMismatch {
            expected: problem.n_splines(),
            found: pulse.n_splines,
        });
    }
    let mut x = pulse.flat_coefficients();
    if problem.optimize_trailing_phase {
        x.extend(pulse.trailing_phase.components());
    }
    Ok(x)
}

/// Refits a program onto a new duration: envelopes are stretched in time and
/// projected by least squares onto the spline basis for that duration.
pub fn rescale_program(p: &PulseProgram, duration: f64) -> Result<PulseProgram> {
    p.validate()?;
    let mut out = PulseProgram::zeros(duration, p.sample_dt.min(duration))?;
    out.trailing_phase = p.trailing_phase;
    let old = p.basis();
    let new = out.basis();
    let m = 8 * out.n_splines;
    let times: Vec<f64> = (0..m).map(|k| (k as f64 + 0.5) / m as f64 * duration).collect();
    let a = nalgebra::DMatrix::from_fn(m, out.n_splines, |r, c| new.value(c, times[r]));
    let svd = a.svd(true, true);
    for j in 1..=3 {
        let mut rhs = nalgebra::DMatrix::zeros(m, 2);
        for (r, &t) in times.iter().enumerate() {
            let (i, q) = p.quadratures_with(&old, j, t * p.duration / duration);
            rhs[(r, 0)] = i;
            rhs[(r, 1)] = q;
        }
        let sol = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::SingularSystem(e.to_string()))?;
        for s in 0..out.n_splines {
            out.coeff_i[j - 1][s] = sol[(s, 0)];
            out.coeff_q[j - 1][s] = sol[(s, 1)];
        }
    }
    Ok(out)
}

/// Approaches `problem.duration` from a longer `start`, warm-starting each
/// step from the previous solution stretched onto the shorter duration.
/// Returns every stage, longest first.
pub fn duration_continuation(problem: &ControlProblem, start: f64, step: f64) -> Result<Vec<(f64, ControlResult)>> {
    if !(step > 0.0) || start < problem.duration {
        return Err(Error::InvalidParameter("continuation needs step > 0 and start ≥ target duration".into()));
    }
    let mut p = problem.clone();
    p.duration = start;
    let mut stages = vec![(start, optimize(&p)?)];
    let mut t = start;
    while t > problem.duration {
        t = (t - step).max(problem.duration);
        let prev = &stages.last().expect("non-empty").1;
        p.duration = t;
        let x0 = pack(&p, &rescale_program(&prev.pulse, t)?)?;
        stages.push((t, optimize_from(&p, &x0)?));
    }
    Ok(stages)
}

fn finish(
    problem: &ControlProblem,
    ev: &Evaluator<'_>,
    x: &[f64],
    iterations: usize,
    evaluations: usize,
    seed: u64,
) -> Result<ControlResult> {
    let (_, breakdown, leakage) = ev.evaluate(x, None);
    let (pulse, phases) = ev.unpack(x);
    let max_awg = crate::pulse::max_awg_load(&pulse, &problem.device, problem.dt.min(problem.penalty_dt));
    let converged = breakdown.infidelity <= problem.feasibility
        && breakdown.amp_penalty < 1e-3
        && breakdown.filter_penalty < 1e-3
        && max_awg <= 1.0
        && leakage < 1e-4;
    Ok(ControlResult {
        phases: PhaseVector::new(phases),
        pulse,
        breakdown,
        leakage,
        max_awg,
        iterations,
        evaluations,
        converged,
        seed,
    })
}

/// Independent re-simulation of a result through the propagator.
pub fn verify(problem: &ControlProblem, result: &ControlResult) -> Result<f64> {
    let r = sim::propagate_pulse(&result.pulse, &problem.device, &problem.frame, problem.dt)?;
    sim::pulse_infidelity(&r, &problem.target, &result.pulse.trailing_phase, &problem.device, &problem.frame)
}

/// Optimizes at each duration in turn (longest first) and reports all runs.
pub fn duration_scan(problem: &ControlProblem, durations: &[f64]) -> Result<Vec<(f64, ControlResult)>> {
    let mut ds = durations.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    ds.into_iter()
        .map(|t| {
            let mut p = problem.clone();
            p.duration = t;
            optimize(&p).map(|r| (t, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::standard_gate;

    fn problem(gate: &str, t: f64) -> ControlProblem {
        ControlProblem::new(standard_gate(gate).unwrap(), t, DeviceModel::reference_device()).unwrap()
    }

    #[test]
    fn smooth_step_midpoint_and_suppression() {
        assert_eq!(smooth_step(0.0, 0.95), 0.5);
        assert!((suppress(0.5, 0.95) - 0.5).abs() < 1e-12);
        assert!((suppress(1.9, 0.95) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn amp_penalty_examples() {
        let dev = DeviceModel::reference_device();
        let mut p = PulseProgram::zeros(100e-9, 1e-9).unwrap();
        // constant load of 0.5 AWG on the first subspace
        p.coeff_i[0].iter_mut().for_each(|c| *c = 0.5 * dev.drive_response[0]);
        assert!(amp_penalty(&p, &dev, 0.95, 1e-9).unwrap() < 1e-12);
        // constant load 2a: excess a over 0.1 µs
        p.coeff_i[0].iter_mut().for_each(|c| *c = 1.9 * dev.drive_response[0]);
        let pen = amp_penalty(&p, &dev, 0.95, 1e-9).unwrap();
        assert!((pen - 0.95 * 0.1).abs() < 1e-9, "{pen}");
    }

    #[test]
    fn filter_passes_dc_and_rejects_ripple() {
        let dev = DeviceModel::reference_device();
        let _ = dev;
        let mut p = PulseProgram::zeros(400e-9, 1e-9).unwrap();
        p.coeff_q[1].iter_mut().for_each(|c| *c = 2.0);
        assert!(filter_penalty(&p, 25e6, 1e-9).unwrap() < 1e-9);

        // 100 MHz ripple sampled straight onto the grid
        let grid_dt = 1e-9;
        let n = 401;
        let ripple: Vec<C64> = (0..n).map(|k| C64::new((TAU * 100e6 * k as f64 * grid_dt).sin(), 0.0)).collect();
        let kernel = sinc_kernel(25e6, grid_dt);
        let filt = convolve(&ripple, &kernel);
        // away from the clamped edges the ripple is gone
        for k in 170..230 {
            assert!(filt[k].norm() < 1e-3, "{}", filt[k].norm());
        }
        let dc: Vec<C64> = vec![C64::new(1.0, 0.0); n];
        assert!(convolve(&dc, &kernel).iter().all(|c| (c - 1.0).norm() < 1e-12));
    }

    #[test]
    fn penalty_gradients_match_finite_differences() {
        let mut pr = problem("H4", 60e-9);
        pr.c_amp = 1.0;
        pr.c_fil = 1.0;
        pr.amp_threshold = 0.05;
        let ev = Evaluator::new(&pr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..pr.dimension()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = ev.gradient(&x);
        let b = ev.gradient_fd(&x, 1e-6);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, w) in a.iter().zip(&b) {
            assert!((u - w).abs() < 1e-5 * scale.max(1e-3), "{u} vs {w}");
        }
    }

    #[test]
    fn objective_matches_propagator() {
        let pr = problem("X4", 80e-9);
        let ev = Evaluator::new(&pr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = initial_guess(&pr, &mut rng);
        let n = x.len();
        x[n - 3..].copy_from_slice(&[0.4, -1.0, 2.5]);
        let (_, b, _) = ev.evaluate(&x, None);
        let (p, _) = ev.unpack(&x);
        let r = sim::propagate_pulse(&p, &pr.device, &pr.frame, pr.dt).unwrap();
        let inf = sim::pulse_infidelity(&r, &pr.target, &p.trailing_phase, &pr.device, &pr.frame).unwrap();
        assert!((inf - b.infidelity).abs() < 1e-10);
    }

    #[test]
    fn identity_target_converges_at_once() {
        let mut pr = problem("I4", 40e-9);
        pr.restarts = 1;
        let r = optimize(&pr).unwrap();
        assert!(r.converged, "{:?}", r.breakdown);
        assert!(r.max_awg < 0.2);
    }

    #[test]
    fn wrong_frame_is_rejected() {
        let mut pr = problem("H4", 50e-9);
        pr.frame = FrameSpec::interaction();
        assert!(Evaluator::new(&pr).is_err());
    }
}
