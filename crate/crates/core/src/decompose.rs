// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Factorization of a ququart unitary into six native subspace rotations
//! interleaved with four virtual phase gates:
//!
//! ```text
//! U ≃ Z(φ₄) Y₁(θ₆) Y₂(θ₅) Y₃(θ₄) Z(φ₃) Y₁(θ₃) Y₂(θ₂) Z(φ₂) Y₁(θ₁) Z(φ₁)
//! ```
//!
//! Angles are found by a penalty continuation: a quasi-Newton search on
//! infidelity plus a duration and phase regularizer whose weight is annealed
//! to zero, followed by sign folding, greedy pruning of short rotations and a
//! final infidelity-only polish.

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::{native_gate_duration, DeviceModel, DurationForm};
use crate::error::{Error, Result};
use crate::gates::{reduce_angle, PhaseVector, Unitary};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::optim::{self, Options};

/// Subspace driven by each rotation `θ₁ … θ₆`.
pub const SUBSPACE_MAP: [usize; 6] = [1, 2, 1, 3, 2, 1];

type M4 = Matrix4<C64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionParams {
    pub theta: [f64; 6],
    pub phi: [PhaseVector; 4],
}

/// One step of a native schedule, in time order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NativeOp {
    Virtual(PhaseVector),
    Rotation { subspace: usize, theta: f64 },
}

impl DecompositionParams {
    pub fn identity() -> Self {
        Self {
            theta: [0.0; 6],
            phi: [PhaseVector::zero(); 4],
        }
    }

    /// Builds parameters from raw phase triples (reduced into `[0, 2π)`).
    pub fn new(theta: [f64; 6], phi: [[f64; 3]; 4]) -> Self {
        Self {
            theta,
            phi: phi.map(PhaseVector::new),
        }
    }

    /// Builds from the fifteen free parameters `[θ₁..θ₆, φ₁₁, φ₂₁, φ₂₂, φ₃₁..φ₃₃, φ₄₁..φ₄₃]`.
    pub fn from_free(x: &[f64]) -> Self {
        assert_eq!(x.len(), 15, "decomposition has 15 free parameters");
        let mut theta = [0.0; 6];
        theta.copy_from_slice(&x[..6]);
        let p = &x[6..];
        Self::new(
            theta,
            [[p[0], 0.0, 0.0], [p[1], p[2], 0.0], [p[3], p[4], p[5]], [p[6], p[7], p[8]]],
        )
    }

    pub fn free_parameters(&self) -> Vec<f64> {
        let [a, b, c, d] = self.phi.map(|p| p.components());
        let mut x = self.theta.to_vec();
        x.extend([a[0], b[0], b[1], c[0], c[1], c[2], d[0], d[1], d[2]]);
        x
    }

    /// True when the fixed-zero phase slots are zero and all angles lie in `[0, π]`.
    pub fn is_canonical(&self) -> bool {
        let [a, b, _, _] = self.phi.map(|p| p.components());
        a[1] == 0.0 && a[2] == 0.0 && b[2] == 0.0 && self.theta.iter().all(|t| (0.0..=PI).contains(t))
    }

    /// Gate sequence in the order it is applied to a state.
    pub fn schedule(&self) -> Vec<NativeOp> {
        let rot = |i: usize| NativeOp::Rotation {
            subspace: SUBSPACE_MAP[i],
            theta: self.theta[i],
        };
        vec![
            NativeOp::Virtual(self.phi[0]),
            rot(0),
            NativeOp::Virtual(self.phi[1]),
            rot(1),
            rot(2),
            NativeOp::Virtual(self.phi[2]),
            rot(3),
            rot(4),
            rot(5),
            NativeOp::Virtual(self.phi[3]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub params: DecompositionParams,
    pub infidelity: f64,
    /// Rabi-time estimate `T*` (s).
    pub duration_est: f64,
    /// Sum of exact native-pulse durations (s).
    pub duration_exact: f64,
    /// Regularizer `T̃` in √µs.
    pub smooth_duration: f64,
    pub batches_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub batch_size: usize,
    pub max_batches: usize,
    pub duration_weight: f64,
    pub phase_weight: f64,
    /// Continuation weights multiplying the regularizer; should end with 0.
    pub schedule: Vec<f64>,
    pub feasibility: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            max_batches: 50,
            duration_weight: 0.2,
            phase_weight: 0.05,
            schedule: vec![1.0, 0.1, 1e-2, 1e-3, 1e-4, 0.0],
            feasibility: 1e-8,
            seed: 0,
            max_iter: 3000,
        }
    }
}

fn y_block(j: usize, theta: f64) -> M4 {
    let (s, c) = (0.5 * theta).sin_cos();
    let mut m = M4::identity();
    m[(j - 1, j - 1)] = C64::new(c, 0.0);
    m[(j - 1, j)] = C64::new(-s, 0.0);
    m[(j, j - 1)] = C64::new(s, 0.0);
    m[(j, j)] = C64::new(c, 0.0);
    m
}

fn dy_block(j: usize, theta: f64) -> M4 {
    let (s, c) = (0.5 * theta).sin_cos();
    let mut m = M4::zeros();
    m[(j - 1, j - 1)] = C64::new(-0.5 * s, 0.0);
    m[(j - 1, j)] = C64::new(-0.5 * c, 0.0);
    m[(j, j - 1)] = C64::new(0.5 * c, 0.0);
    m[(j, j)] = C64::new(-0.5 * s, 0.0);
    m
}

fn z_diag(phi: [f64; 3]) -> M4 {
    let p = [0.0, phi[0], phi[0] + phi[1], phi[0] + phi[1] + phi[2]];
    M4::from_diagonal(&nalgebra::Vector4::from_fn(|k, _| C64::from_polar(1.0, p[k])))
}

/// Positions of `θ₁..θ₆` and `φ⃗₁..φ⃗₄` in the left-to-right factor product.
const THETA_SLOT: [usize; 6] = [8, 6, 5, 3, 2, 1];
const PHI_SLOT: [usize; 4] = [9, 7, 4, 0];
/// Free phase parameters as (vector, component).
const FREE_PHASES: [(usize, usize); 9] = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2), (3, 0), (3, 1), (3, 2)];

fn raw_phases(x: &[f64]) -> [[f64; 3]; 4] {
    let mut phi = [[0.0; 3]; 4];
    for (k, &(v, c)) in FREE_PHASES.iter().enumerate() {
        phi[v][c] = x[6 + k];
    }
    phi
}

fn factors(theta: &[f64], phi: &[[f64; 3]; 4]) -> [M4; 10] {
    let mut f = [M4::identity(); 10];
    for i in 0..6 {
        f[THETA_SLOT[i]] = y_block(SUBSPACE_MAP[i], theta[i]);
    }
    for v in 0..4 {
        f[PHI_SLOT[v]] = z_diag(phi[v]);
    }
    f
}

fn product(f: &[M4; 10]) -> M4 {
    f.iter().fold(M4::identity(), |acc, m| acc * m)
}

fn to_m4(m: &CMatrix) -> M4 {
    M4::from_fn(|r, c| m[(r, c)])
}

fn to_dynamic(m: &M4) -> CMatrix {
    CMatrix::from_fn(4, 4, |r, c| m[(r, c)])
}

/// Evaluates the native sequence.
pub fn sequence_to_unitary(p: &DecompositionParams) -> Unitary {
    let phi = p.phi.map(|v| v.components());
    let u = product(&factors(&p.theta, &phi));
    Unitary::new(to_dynamic(&u)).expect("products of unitaries are unitary")
}

fn rabi_rates_per_us(dev: &DeviceModel) -> [f64; 6] {
    std::array::from_fn(|i| {
        let j = SUBSPACE_MAP[i];
        TAU * (j as f64).sqrt() * dev.drive_response[j - 1]
    })
}

/// `T* = Σ θᵢ/(2π√j r_j)` in seconds.
pub fn duration_cost(p: &DecompositionParams, dev: &DeviceModel) -> f64 {
    let k = rabi_rates_per_us(dev);
    p.theta.iter().zip(k).map(|(t, k)| t.abs() / k).sum::<f64>() * 1e-6
}

/// `T̃ = Σ √(θᵢ/(2π√j r_j))` with the Rabi time in µs.
pub fn smooth_duration_cost(p: &DecompositionParams, dev: &DeviceModel) -> f64 {
    let k = rabi_rates_per_us(dev);
    p.theta.iter().zip(k).map(|(t, k)| (t.abs() / k).sqrt()).sum()
}

/// `P = (1/12) Σ sin²(2φ)` over all twelve phase components.
pub fn phase_penalty(p: &DecompositionParams) -> f64 {
    p.phi
        .iter()
        .flat_map(|v| v.components())
        .map(|x| (2.0 * x).sin().powi(2))
        .sum::<f64>()
        / 12.0
}

/// Sum of exact native durations (s).
pub fn sequence_duration(p: &DecompositionParams, dev: &DeviceModel, form: DurationForm) -> Result<f64> {
    let mut total = 0.0;
    for (i, &t) in p.theta.iter().enumerate() {
        total += native_gate_duration(dev, SUBSPACE_MAP[i], t, form)?;
    }
    Ok(total)
}

fn wrap_angle(t: f64) -> f64 {
    // Y_j has period 4π
    (t + TAU).rem_euclid(2.0 * TAU) - TAU
}

/// Penalized objective on the free parameter vector with analytic gradient.
struct Objective<'a> {
    target_adj: M4,
    rates: [f64; 6],
    duration_weight: f64,
    phase_weight: f64,
    lambda: f64,
    fixed: &'a [bool; 6],
}

impl Objective<'_> {
    fn infidelity(&self, x: &[f64]) -> f64 {
        let f = factors(&x[..6], &raw_phases(x));
        let tr = (self.target_adj * product(&f)).trace();
        1.0 - tr.norm_sqr() / 16.0
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let phi = raw_phases(x);
        let f = factors(&x[..6], &phi);
        // prefix[k] = F0..F(k-1), suffix[k] = F(k+1)..F9
        let mut prefix = [M4::identity(); 10];
        for k in 1..10 {
            prefix[k] = prefix[k - 1] * f[k - 1];
        }
        let mut suffix = [M4::identity(); 10];
        for k in (0..9).rev() {
            suffix[k] = f[k + 1] * suffix[k + 1];
        }
        let v = prefix[9] * f[9];
        let tr = (self.target_adj * v).trace();
        let infid = 1.0 - tr.norm_sqr() / 16.0;
        // d infid = −(2/16) Re(conj(tr) · Tr(U† L dF R))
        let env = |k: usize| suffix[k] * self.target_adj * prefix[k];
        let d_infid = |k: usize, df: &M4| -> f64 {
            let m = env(k);
            let mut t = ZERO;
            for a in 0..4 {
                for b in 0..4 {
                    t += m[(b, a)] * df[(a, b)];
                }
            }
            -(tr.conj() * t).re / 8.0
        };
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..6 {
            if !self.fixed[i] {
                grad[i] = d_infid(THETA_SLOT[i], &dy_block(SUBSPACE_MAP[i], x[i]));
            }
        }
        for v in 0..4 {
            let slot = PHI_SLOT[v];
            let m = env(slot);
            let z = &f[slot];
            // dZ/dφ_c = i Z diag(levels ≥ c+1)
            for (k, &(vv, c)) in FREE_PHASES.iter().enumerate() {
                if vv != v {
                    continue;
                }
                let mut t = ZERO;
                for a in (c + 1)..4 {
                    t += m[(a, a)] * z[(a, a)] * C64::new(0.0, 1.0);
                }
                grad[6 + k] = -(tr.conj() * t).re / 8.0;
            }
        }
        if self.lambda == 0.0 {
            return infid;
        }
        let mut smooth = 0.0;
        for i in 0..6 {
            if self.fixed[i] {
                continue;
            }
            let w = wrap_angle(x[i]);
            let root = (w.abs() / self.rates[i] + 1e-14).sqrt();
            smooth += root;
            grad[i] += self.lambda * self.duration_weight * w.signum() / (2.0 * self.rates[i] * root);
        }
        let mut pen = 0.0;
        for k in 0..9 {
            let p = x[6 + k];
            pen += (2.0 * p).sin().powi(2) / 12.0;
            grad[6 + k] += self.lambda * self.phase_weight * (4.0 * p).sin() / 6.0;
        }
        infid + self.lambda * (self.duration_weight * smooth + self.phase_weight * pen)
    }
}

/// Replaces every negative (wrapped) angle by its magnitude, pushing the
/// required π phase flips into the neighbouring virtual gates. The sequence
/// unitary is unchanged.
fn fold_signs(x: &mut [f64]) {
    // (vector on the right in the product, vector on the left) per rotation
    const NEIGHBOURS: [(usize, usize); 6] = [(0, 1), (1, 2), (1, 2), (2, 3), (2, 3), (2, 3)];
    let mut phi = raw_phases(x);
    for i in 0..6 {
        let w = wrap_angle(x[i]);
        x[i] = w;
        if w < 0.0 {
            x[i] = -w;
            let c = SUBSPACE_MAP[i] - 1;
            let (a, b) = NEIGHBOURS[i];
            phi[a][c] += PI;
            phi[b][c] += PI;
        }
    }
    for (k, &(v, c)) in FREE_PHASES.iter().enumerate() {
        x[6 + k] = reduce_angle(phi[v][c]);
    }
}

fn bfgs_options(max_iter: usize) -> Options {
    Options {
        max_iter,
        grad_tol: 1e-13,
        f_tol: 1e-15,
        ..Options::default()
    }
}

struct Candidate {
    x: Vec<f64>,
    infidelity: f64,
    smooth: f64,
}

fn run_start(
    target_adj: &M4,
    dev: &DeviceModel,
    cfg: &DecomposeConfig,
    x0: Vec<f64>,
) -> Candidate {
    let rates = rabi_rates_per_us(dev);
    let mut fixed = [false; 6];
    let mut x = x0;
    let solve = |x: &[f64], lambda: f64, fixed: &[bool; 6]| -> Vec<f64> {
        let obj = Objective {
            target_adj: *target_adj,
            rates,
            duration_weight: cfg.duration_weight,
            phase_weight: cfg.phase_weight,
            lambda,
            fixed,
        };
        let mut x = optim::bfgs(|x, g| obj.eval(x, g), x, &bfgs_options(cfg.max_iter)).x;
        // the final infidelity-only stage should drive well below threshold
        if lambda == 0.0 && obj.infidelity(&x) > 1e-14 {
            x = optim::bfgs(|x, g| obj.eval(x, g), &x, &bfgs_options(cfg.max_iter)).x;
        }
        x
    };
    for &lambda in &cfg.schedule {
        x = solve(&x, lambda, &fixed);
    }
    if cfg.schedule.last() != Some(&0.0) {
        x = solve(&x, 0.0, &fixed);
    }
    fold_signs(&mut x);
    let infid = |x: &[f64]| {
        let obj = Objective {
            target_adj: *target_adj,
            rates,
            duration_weight: 0.0,
            phase_weight: 0.0,
            lambda: 0.0,
            fixed: &[false; 6],
        };
        obj.infidelity(x)
    };

    // greedy pruning of short rotations
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    for i in order {
        if x[i] == 0.0 {
            fixed[i] = true;
            continue;
        }
        let mut trial = x.clone();
        trial[i] = 0.0;
        let mut trial_fixed = fixed;
        trial_fixed[i] = true;
        let polished = solve(&trial, 0.0, &trial_fixed);
        if infid(&polished) <= 0.1 * cfg.feasibility {
            x = polished;
            fixed = trial_fixed;
            fold_signs(&mut x);
        }
    }
    x = solve(&x, 0.0, &fixed);
    fold_signs(&mut x);
    for i in 0..6 {
        if fixed[i] {
            x[i] = 0.0;
        }
    }
    let params = DecompositionParams::from_free(&x);
    let smooth = smooth_duration_cost(&params, dev);
    Candidate {
        infidelity: infid(&x),
        x,
        smooth,
    }
}

/// Finds a feasible native decomposition of `target` with short total duration.
pub fn decompose(target: &Unitary, dev: &DeviceModel, cfg: &DecomposeConfig) -> Result<DecompositionReport> {
    if target.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: target.dim(),
        });
    }
    if cfg.batch_size == 0 || cfg.max_batches == 0 {
        return Err(Error::InvalidParameter("batch size and batch limit must be positive".into()));
    }
    let target_adj = to_m4(target.matrix()).adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_any: Option<Candidate> = None;
    for batch in 1..=cfg.max_batches {
        let mut best: Option<Candidate> = None;
        for _ in 0..cfg.batch_size {
            let mut x0: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..PI)).collect();
            x0.extend((0..9).map(|_| rng.random_range(0.0..TAU)));
            let cand = run_start(&target_adj, dev, cfg, x0);
            let feasible = cand.infidelity <= cfg.feasibility && cand.x[..6].iter().all(|t| *t <= PI);
            if feasible && best.as_ref().is_none_or(|b| cand.smooth < b.smooth) {
                best = Some(cand);
            } else if best_any.as_ref().is_none_or(|b| cand.infidelity < b.infidelity) {
                best_any = Some(cand);
            }
        }
        if let Some(c) = best {
            return report(c, dev, batch);
        }
    }
    let best = best_any.expect("at least one start was run");
    Err(Error::DecompositionInfeasible {
        batches: cfg.max_batches,
        best: Box::new(report(best, dev, cfg.max_batches)?),
    })
}

fn report(c: Candidate, dev: &DeviceModel, batches_used: usize) -> Result<DecompositionReport> {
    let mut params = DecompositionParams::from_free(&c.x);
    params.theta = params.theta.map(|t| t.clamp(0.0, TAU));
    Ok(DecompositionReport {
        duration_est: duration_cost(&params, dev),
        duration_exact: sequence_duration(&params, dev, DurationForm::Exact)?,
        smooth_duration: smooth_duration_cost(&params, dev),
        params,
        infidelity: c.infidelity,
        batches_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{gate_infidelity, standard_gate};
    use crate::linalg::haar_unitary;
    use proptest::prelude::*;

    #[test]
    fn x4_from_three_flips() {
        let p = DecompositionParams::new(
            [0.0, 0.0, 0.0, PI, PI, PI],
            [[0.0; 3], [0.0; 3], [0.0; 3], [PI, 0.0, 0.0]],
        );
        let x4 = standard_gate("X4").unwrap();
        assert!(gate_infidelity(&x4, &sequence_to_unitary(&p)).unwrap() < 1e-15);
    }

    #[test]
    fn zero_parameters_give_identity() {
        let u = sequence_to_unitary(&DecompositionParams::identity());
        assert!((u.matrix() - crate::linalg::identity(4)).norm() < 1e-15);
    }

    #[test]
    fn cost_examples() {
        let dev = DeviceModel::reference_device();
        let zero = DecompositionParams::identity();
        assert_eq!(duration_cost(&zero, &dev), 0.0);
        assert_eq!(smooth_duration_cost(&zero, &dev), 0.0);
        let quarter = DecompositionParams::new([0.0; 6], [[PI / 2.0, PI, 1.5 * PI]; 4]);
        assert!(phase_penalty(&quarter) < 1e-30);

        let mut whole = DecompositionParams::identity();
        whole.theta[0] = 2.0;
        let mut split = DecompositionParams::identity();
        split.theta[0] = 1.0;
        split.theta[2] = 1.0;
        assert!(smooth_duration_cost(&split, &dev) > smooth_duration_cost(&whole, &dev));
        assert!((duration_cost(&split, &dev) - duration_cost(&whole, &dev)).abs() < 1e-20);
    }

    #[test]
    fn analytic_gradient_matches_finite_difference() {
        let dev = DeviceModel::reference_device();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = to_m4(&haar_unitary(4, &mut rng));
        let fixed = [false; 6];
        for lambda in [0.0, 0.3] {
            let obj = Objective {
                target_adj: target.adjoint(),
                rates: rabi_rates_per_us(&dev),
                duration_weight: 0.2,
                phase_weight: 0.05,
                lambda,
                fixed: &fixed,
            };
            let x: Vec<f64> = (0..15).map(|k| 0.3 + 0.37 * k as f64).collect();
            let mut g = vec![0.0; 15];
            obj.eval(&x, &mut g);
            let mut fd = vec![0.0; 15];
            let mut scratch = vec![0.0; 15];
            optim::central_difference(|y| obj.eval(y, &mut scratch), &x, 1e-6, &mut fd);
            for k in 0..15 {
                assert!((g[k] - fd[k]).abs() < 1e-8, "λ={lambda} k={k}: {} vs {}", g[k], fd[k]);
            }
        }
    }

    #[test]
    fn free_parameter_round_trip() {
        let x: Vec<f64> = (0..15).map(|k| 0.1 * k as f64).collect();
        let p = DecompositionParams::from_free(&x);
        let back = p.free_parameters();
        for k in 0..15 {
            assert!((back[k] - x[k]).abs() < 1e-15);
        }
        assert_eq!(p.schedule().len(), 10);
    }

    #[test]
    fn identity_target_needs_no_pulses() {
        let dev = DeviceModel::reference_device();
        let cfg = DecomposeConfig {
            batch_size: 3,
            ..Default::default()
        };
        let r = decompose(&Unitary::identity(4), &dev, &cfg).unwrap();
        assert_eq!(r.params.theta, [0.0; 6]);
        assert_eq!(r.duration_exact, 0.0);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let dev = DeviceModel::reference_device();
        let h = standard_gate("H").unwrap();
        assert!(decompose(&h, &dev, &DecomposeConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn folding_preserves_the_unitary(x in proptest::collection::vec(-12.0f64..12.0, 15)) {
            let before = sequence_to_unitary(&DecompositionParams::from_free(&x));
            let mut y = x.clone();
            fold_signs(&mut y);
            prop_assert!(y[..6].iter().all(|t| (0.0..=TAU).contains(t)));
            let after = sequence_to_unitary(&DecompositionParams::from_free(&y));
            prop_assert!(gate_infidelity(&before, &after).unwrap() < 1e-12);
        }
    }
}
