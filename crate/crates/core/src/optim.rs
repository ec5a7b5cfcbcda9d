// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Quasi-Newton minimizers (dense BFGS and L-BFGS) with an Armijo
//! backtracking line search. Objectives report value and fill the gradient.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct Options {
    pub max_iter: usize,
    /// Stop when `‖∇f‖∞` falls below this.
    pub grad_tol: f64,
    /// Stop after three consecutive iterations with relative decrease below this.
    pub f_tol: f64,
    /// Stop as soon as the objective reaches this value.
    pub f_target: f64,
    /// History length for L-BFGS.
    pub memory: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            grad_tol: 1e-10,
            f_tol: 1e-14,
            f_target: f64::NEG_INFINITY,
            memory: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64, grad: &mut [f64]) {
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let dn = f(&probe);
        probe[k] = x[k];
        grad[k] = (up - dn) / (2.0 * h);
    }
}

struct LineSearch {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    evaluations: usize,
}

/// Armijo backtracking with quadratic interpolation. Returns `None` when no
/// acceptable step was found.
fn backtrack<F>(obj: &mut F, x: &[f64], f0: f64, g0: &[f64], dir: &[f64]) -> Option<LineSearch>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let slope = dot(g0, dir);
    if !(slope < 0.0) {
        return None;
    }
    let n = x.len();
    let mut alpha = 1.0;
    let mut trial = vec![0.0; n];
    let mut g = vec![0.0; n];
    for evaluations in 1..=60 {
        for k in 0..n {
            trial[k] = x[k] + alpha * dir[k];
        }
        let f = obj(&trial, &mut g);
        if f.is_finite() && f <= f0 + 1e-4 * alpha * slope {
            return Some(LineSearch {
                x: trial,
                f,
                g,
                evaluations,
            });
        }
        let next = if f.is_finite() {
            -slope * alpha * alpha / (2.0 * (f - f0 - slope * alpha))
        } else {
            0.1 * alpha
        };
        alpha = next.clamp(0.1 * alpha, 0.5 * alpha);
    }
    None
}

struct Progress {
    stalls: usize,
}

impl Progress {
    fn stalled(&mut self, f_old: f64, f_new: f64, tol: f64) -> bool {
        if (f_old - f_new) <= tol * f_old.abs().max(f_new.abs()).max(1e-300) {
            self.stalls += 1;
        } else {
            self.stalls = 0;
        }
        self.stalls >= 3
    }
}

/// Dense BFGS; intended for a few dozen variables.
pub fn bfgs<F>(mut obj: F, x0: &[f64], opts: &Options) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj(&x, &mut g);
    let mut evaluations = 1;
    let mut h = identity(n);
    let mut progress = Progress { stalls: 0 };
    let mut converged = false;
    let mut iterations = 0;
    let mut fresh = true;
    while iterations < opts.max_iter {
        if inf_norm(&g) < opts.grad_tol || f <= opts.f_target {
            converged = true;
            break;
        }
        iterations += 1;
        let dir: Vec<f64> = (0..n).map(|r| -dot(&h[r * n..(r + 1) * n], &g)).collect();
        let Some(step) = backtrack(&mut obj, &x, f, &g, &dir) else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        evaluations += step.evaluations;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        let stalled = progress.stalled(f, step.f, opts.f_tol);
        x = step.x;
        f = step.f;
        g = step.g;
        if stalled {
            converged = true;
            break;
        }
    }
    Outcome {
        grad_norm: inf_norm(&g),
        x,
        f,
        iterations,
        evaluations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for k in 0..n {
        h[k * n + k] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|r| dot(&h[r * n..(r + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for r in 0..n {
        for c in 0..n {
            h[r * n + c] += -rho * (hy[r] * s[c] + s[r] * hy[c]) + (rho * rho * yhy + rho) * s[r] * s[c];
        }
    }
}

/// Limited-memory BFGS for large parameter vectors.
pub fn lbfgs<F>(mut obj: F, x0: &[f64], opts: &Options) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut progress = Progress { stalls: 0 };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if inf_norm(&g) < opts.grad_tol || f <= opts.f_target {
            converged = true;
            break;
        }
        iterations += 1;
        let dir = two_loop(&history, &g);
        let Some(step) = backtrack(&mut obj, &x, f, &g, &dir) else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        evaluations += step.evaluations;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let stalled = progress.stalled(f, step.f, opts.f_tol);
        x = step.x;
        f = step.f;
        g = step.g;
        if stalled {
            converged = true;
            break;
        }
    }
    Outcome {
        grad_norm: inf_norm(&g),
        x,
        f,
        iterations,
        evaluations,
        converged,
    }
}

fn two_loop(history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    } else {
        let norm = inf_norm(g).max(1e-300);
        q.iter_mut().for_each(|v| *v /= norm.max(1.0));
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let n = x.len();
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0.0;
        for k in 0..n - 1 {
            let a = x[k + 1] - x[k] * x[k];
            let b = 1.0 - x[k];
            f += 100.0 * a * a + b * b;
            g[k] += -400.0 * a * x[k] - 2.0 * b;
            g[k + 1] += 200.0 * a;
        }
        f
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let out = bfgs(rosenbrock, &[-1.2, 1.0, -0.5, 0.8], &Options::default());
        assert!(out.f < 1e-16, "{out:?}");
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-7));
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let x0: Vec<f64> = (0..20).map(|k| if k % 2 == 0 { -1.2 } else { 1.0 }).collect();
        let opts = Options {
            max_iter: 5000,
            ..Options::default()
        };
        let out = lbfgs(rosenbrock, &x0, &opts);
        assert!(out.f < 1e-14, "{}", out.f);
    }

    #[test]
    fn accepted_steps_decrease_objective() {
        let mut trace = Vec::new();
        let opts = Options::default();
        let _ = lbfgs(
            |x, g| {
                let f = rosenbrock(x, g);
                trace.push(f);
                f
            },
            &[-1.0, 2.0, 0.5],
            &opts,
        );
        // first evaluation is the start point; the running minimum must never rise
        let mut best = trace[0];
        for f in &trace {
            best = best.min(*f);
        }
        assert!(best < trace[0]);
    }

    #[test]
    fn central_difference_is_accurate() {
        let f = |x: &[f64]| x[0].sin() * x[1].exp();
        let mut g = [0.0; 2];
        central_difference(f, &[0.3, -0.2], 1e-5, &mut g);
        assert!((g[0] - 0.3f64.cos() * (-0.2f64).exp()).abs() < 1e-9);
        assert!((g[1] - 0.3f64.sin() * (-0.2f64).exp()).abs() < 1e-9);
    }
}
