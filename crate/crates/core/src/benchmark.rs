// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Randomized and interleaved randomized benchmarking.
//!
//! Sequences are drawn from a Clifford group, executed on a pluggable
//! backend and scored by the exact ground-state population of the final
//! state (optionally resampled with a finite number of shots). The decay
//! `A·pᵐ + B` is fitted by bounded Levenberg–Marquardt.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::clifford::{self, CliffordGroup};
use crate::decompose::{self, DecomposeConfig, DecompositionParams};
use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::gates::{virtual_z_levels, Unitary};
use crate::linalg::{CMatrix, C64, ONE};
use crate::pulse::PulseProgram;
use crate::sim::{self, Drive, NoiseSpec};

pub const DEFAULT_DEPTHS: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupTag {
    /// Single-ququart Clifford group (768 elements).
    Ququart,
    /// Two encoded qubits (11520 elements).
    TwoQubit,
}

impl GroupTag {
    pub fn name(&self) -> &'static str {
        match self {
            GroupTag::Ququart => "C4",
            GroupTag::TwoQubit => "C2x2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c4" | "ququart" => Ok(GroupTag::Ququart),
            "c2x2" | "c2" | "two-qubit" => Ok(GroupTag::TwoQubit),
            _ => Err(Error::Parse(format!("unknown group `{s}` (expected C4 or C2x2)"))),
        }
    }

    pub fn build(&self) -> Result<CliffordGroup> {
        match self {
            GroupTag::Ququart => clifford::ququart_clifford_group(),
            GroupTag::TwoQubit => clifford::two_qubit_clifford_group(),
        }
    }

    pub fn expected_size(&self) -> usize {
        match self {
            GroupTag::Ququart => 768,
            GroupTag::TwoQubit => 11520,
        }
    }
}

/// Gate inserted after every random Clifford.
#[derive(Clone, Debug)]
pub struct Interleaved {
    pub label: String,
    pub gate: Unitary,
    /// Optimized pulse realizing the gate; used by the noisy backend instead
    /// of the native decomposition when present.
    pub pulse: Option<PulseProgram>,
}

#[derive(Clone, Debug)]
pub struct RbConfig {
    pub group: GroupTag,
    pub depths: Vec<usize>,
    pub sequences: usize,
    /// `None` reads the exact survival probability.
    pub shots: Option<u64>,
    pub interleaved: Option<Interleaved>,
    pub seed: u64,
}

impl RbConfig {
    pub fn new(group: GroupTag) -> Self {
        Self {
            group,
            depths: DEFAULT_DEPTHS.to_vec(),
            sequences: 20,
            shots: None,
            interleaved: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths[0] == 0 {
            return Err(Error::InvalidParameter("depths must be non-empty and ≥ 1".into()));
        }
        if self.depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("depths must be strictly increasing".into()));
        }
        if self.sequences == 0 {
            return Err(Error::InvalidParameter("at least one sequence per depth is required".into()));
        }
        if self.shots == Some(0) {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        Ok(())
    }
}

/// Device, noise and integration settings for simulated execution.
#[derive(Clone, Debug)]
pub struct NoisyBackend {
    pub device: DeviceModel,
    pub noise: NoiseSpec,
    pub dt: f64,
    pub decompose: DecomposeConfig,
}

impl NoisyBackend {
    pub fn new(device: DeviceModel) -> Self {
        let noise = NoiseSpec::from_device(&device);
        Self {
            device,
            noise,
            dt: 0.05e-9,
            decompose: DecomposeConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Backend {
    /// Perfect gates.
    Ideal,
    /// Perfect gates each followed by `ρ → qρ + (1−q)·Tr ρ·I/d`.
    Depolarizing { q: f64 },
    /// Native decompositions (or a supplied pulse for the interleaved gate)
    /// under Lindblad noise.
    Noisy(NoisyBackend),
}

impl Backend {
    pub fn name(&self, interleaved: Option<&Interleaved>) -> String {
        match self {
            Backend::Ideal => "ideal".into(),
            Backend::Depolarizing { q } => format!("depolarizing(q={q})"),
            Backend::Noisy(_) => match interleaved {
                Some(Interleaved { pulse: Some(_), .. }) => "pulse+noise".into(),
                _ => "decomposed+noise".into(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbSample {
    pub depth: usize,
    pub sequence: usize,
    pub survival: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub a_err: f64,
    pub p_err: f64,
    pub b_err: f64,
    pub rss: f64,
    /// Data carry no information about `p` (e.g. constant survival).
    pub unidentifiable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RbDataset {
    pub group: GroupTag,
    pub backend: String,
    pub interleaved: Option<String>,
    pub samples: Vec<RbSample>,
    pub fit: DecayFit,
    /// Error per Clifford `r = (d−1)/d·(1−p)`.
    pub r: f64,
    pub fidelity: f64,
    pub fidelity_err: f64,
}

impl RbDataset {
    /// Mean survival per depth, in depth order.
    pub fn means(&self) -> Vec<(usize, f64)> {
        mean_by_depth(&self.samples)
    }

    pub fn write_table<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "depth,sequence,survival")?;
        for s in &self.samples {
            writeln!(out, "{},{},{:.12}", s.depth, s.sequence, s.survival)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrbResult {
    pub reference: RbDataset,
    pub interleaved: RbDataset,
    pub gate_fidelity: f64,
    pub gate_fidelity_err: f64,
}

/// `(r, F)` for decay parameter `p` in dimension `d`.
pub fn fidelity_from_p(p: f64, d: usize) -> (f64, f64) {
    let d = d as f64;
    let r = (d - 1.0) / d * (1.0 - p);
    (r, 1.0 - r)
}

/// Interleaved gate fidelity `1 − (d−1)/d·(1 − p_int/p_ref)`.
pub fn irb_fidelity(p_ref: f64, p_int: f64, d: usize) -> Result<f64> {
    if p_ref <= 0.0 || !p_ref.is_finite() {
        return Err(Error::InvalidParameter(format!("reference decay p = {p_ref} must be positive")));
    }
    let d = d as f64;
    Ok(1.0 - (d - 1.0) / d * (1.0 - p_int / p_ref))
}

fn irb_fidelity_err(p_ref: f64, e_ref: f64, p_int: f64, e_int: f64, d: usize) -> f64 {
    let k = (d as f64 - 1.0) / d as f64;
    let dref = k * p_int / (p_ref * p_ref) * e_ref;
    let dint = k / p_ref * e_int;
    dref.hypot(dint)
}

fn mean_by_depth(samples: &[RbSample]) -> Vec<(usize, f64)> {
    let mut acc: Vec<(usize, f64, usize)> = Vec::new();
    for s in samples {
        match acc.iter_mut().find(|(d, _, _)| *d == s.depth) {
            Some(e) => {
                e.1 += s.survival;
                e.2 += 1;
            }
            None => acc.push((s.depth, s.survival, 1)),
        }
    }
    acc.sort_by_key(|e| e.0);
    acc.into_iter().map(|(d, s, n)| (d, s / n as f64)).collect()
}

fn decay_residuals(data: &[(f64, f64)], x: &Vector3<f64>) -> f64 {
    data.iter()
        .map(|&(m, y)| {
            let r = x[0] * x[2].powf(m) + x[1] - y;
            r * r
        })
        .sum()
}

/// Least-squares `A, B` for fixed `p` with `B` clamped to `[0, 1]`.
fn linear_ab(data: &[(f64, f64)], p: f64) -> (f64, f64) {
    let n = data.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(m, y) in data {
        let x = p.powf(m);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    let (a, b) = if det.abs() > 1e-14 * n * sxx.max(1.0) {
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    } else {
        (sy / n, 0.0)
    };
    if (0.0..=1.0).contains(&b) {
        return (a, b);
    }
    let b = b.clamp(0.0, 1.0);
    let a = if sxx > 0.0 { (sxy - b * sx) / sxx } else { 0.0 };
    (a, b)
}

/// Fits `A·pᵐ + B` to the samples with `0 < p ≤ 1` and `0 ≤ B ≤ 1`.
pub fn fit_decay(samples: &[RbSample]) -> Result<DecayFit> {
    let depths = mean_by_depth(samples);
    if depths.len() < 3 {
        return Err(Error::IncompleteData(format!(
            "decay fit needs at least 3 distinct depths, got {}",
            depths.len()
        )));
    }
    let data: Vec<(f64, f64)> = samples.iter().map(|s| (s.depth as f64, s.survival)).collect();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    if hi - lo < 1e-12 {
        // Constant data: only A + B is determined.
        return Ok(DecayFit {
            a: hi,
            p: 1.0,
            b: 0.0,
            a_err: f64::INFINITY,
            p_err: f64::INFINITY,
            b_err: f64::INFINITY,
            rss: 0.0,
            unidentifiable: true,
        });
    }

    // Coarse scan over p, dense near 1, with A and B solved exactly.
    let mut best = (f64::INFINITY, Vector3::new(0.0, 0.0, 1.0));
    for k in 0..=400 {
        let p = if k == 400 { 1.0 } else { 1.0 - 10f64.powf(-6.0 * k as f64 / 400.0) };
        if p <= 0.0 {
            continue;
        }
        let (a, b) = linear_ab(&data, p);
        let x = Vector3::new(a, b, p);
        let f = decay_residuals(&data, &x);
        if f < best.0 {
            best = (f, x);
        }
    }

    // Projected Levenberg–Marquardt on (A, B, p).
    let project = |x: &mut Vector3<f64>| {
        x[1] = x[1].clamp(0.0, 1.0);
        x[2] = x[2].clamp(1e-12, 1.0);
    };
    let (mut cost, mut x) = best;
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (jtj, jtr) = normal_equations(&data, &x);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = x + step;
            project(&mut trial);
            let f = decay_residuals(&data, &trial);
            if f < cost {
                let done = cost - f <= 1e-15 * cost.max(1e-300) || (trial - x).norm() < 1e-15;
                x = trial;
                cost = f;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let n = data.len();
    let (jtj, _) = normal_equations(&data, &x);
    let s2 = if n > 3 { cost / (n - 3) as f64 } else { 0.0 };
    let (errs, singular) = match jtj.try_inverse() {
        Some(inv) => (
            Vector3::new(
                (s2 * inv[(0, 0)]).max(0.0).sqrt(),
                (s2 * inv[(1, 1)]).max(0.0).sqrt(),
                (s2 * inv[(2, 2)]).max(0.0).sqrt(),
            ),
            false,
        ),
        None => (Vector3::repeat(f64::INFINITY), true),
    };
    Ok(DecayFit {
        a: x[0],
        b: x[1],
        p: x[2],
        a_err: errs[0],
        b_err: errs[1],
        p_err: errs[2],
        rss: cost,
        unidentifiable: singular || !errs[2].is_finite() || x[0].abs() < 1e-9,
    })
}

fn normal_equations(data: &[(f64, f64)], x: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for &(m, y) in data {
        let pm = x[2].powf(m);
        let dp = if m > 0.0 { x[0] * m * x[2].powf(m - 1.0) } else { 0.0 };
        let j = Vector3::new(pm, 1.0, dp);
        let r = x[0] * pm + x[1] - y;
        jtj += j * j.transpose();
        jtr += j * r;
    }
    (jtj, jtr)
}

enum Op<'a> {
    Clifford(usize),
    Gate(&'a Interleaved),
}

/// A Clifford group bound to an execution backend, with a compilation cache
/// shared by all runs.
pub struct Benchmark {
    tag: GroupTag,
    group: CliffordGroup,
    backend: Backend,
    cache: HashMap<usize, DecompositionParams>,
    gate_cache: HashMap<String, DecompositionParams>,
}

impl Benchmark {
    pub fn new(tag: GroupTag, backend: Backend) -> Result<Self> {
        Self::with_group(tag, tag.build()?, backend)
    }

    pub fn with_group(tag: GroupTag, group: CliffordGroup, backend: Backend) -> Result<Self> {
        if group.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: group.dim(),
            });
        }
        match &backend {
            Backend::Depolarizing { q } if !(0.0..=1.0).contains(q) => {
                return Err(Error::InvalidParameter(format!("depolarizing q = {q} outside [0, 1]")));
            }
            Backend::Noisy(nb) => {
                nb.device.validate()?;
                nb.noise.validate()?;
                if !(nb.dt > 0.0) {
                    return Err(Error::InvalidParameter("time step must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(Self {
            tag,
            group,
            backend,
            cache: HashMap::new(),
            gate_cache: HashMap::new(),
        })
    }

    pub fn group(&self) -> &CliffordGroup {
        &self.group
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Number of group elements compiled so far.
    pub fn compiled(&self) -> usize {
        self.cache.len()
    }

    /// Draws the gate-id sequences for `cfg`; identical for every backend.
    pub fn sample_sequences(&self, cfg: &RbConfig) -> Result<Vec<(usize, usize, Vec<usize>, usize)>> {
        cfg.validate()?;
        let g = cfg.interleaved.as_ref().map(|i| i.gate.matrix());
        if let Some(g) = g {
            if self.group.contains(g).is_none() {
                return Err(Error::NotInGroup("interleaved gate is not a Clifford of this group".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut out = Vec::new();
        for &m in &cfg.depths {
            for s in 0..cfg.sequences {
                let ids: Vec<usize> = (0..m)
                    .map(|_| rand::Rng::random_range(&mut rng, 0..self.group.len()))
                    .collect();
                let mut total = crate::linalg::identity(4);
                for &id in &ids {
                    total = self.group.element(id).matrix() * total;
                    if let Some(g) = g {
                        total = g * total;
                    }
                }
                let t = self
                    .group
                    .contains(&total)
                    .ok_or_else(|| Error::NotInGroup("sequence product".into()))?;
                let inv = self.group.inverse_id(t);
                let check = self.group.element(inv).matrix() * total;
                if self.group.contains(&check) != Some(self.group.identity_id()) {
                    return Err(Error::Sequence {
                        depth: m,
                        index: s,
                        source: Box::new(Error::NotInGroup("inverted sequence is not the identity".into())),
                    });
                }
                out.push((m, s, ids, inv));
            }
        }
        Ok(out)
    }

    pub fn run(&mut self, cfg: &RbConfig) -> Result<RbDataset> {
        if cfg.group != self.tag {
            return Err(Error::InvalidParameter(format!(
                "config asks for group {} but the benchmark holds {}",
                cfg.group.name(),
                self.tag.name()
            )));
        }
        let sequences = self.sample_sequences(cfg)?;
        let mut shot_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5407);
        let mut samples = Vec::with_capacity(sequences.len());
        for (m, s, ids, inv) in sequences {
            let mut ops = Vec::with_capacity(2 * m + 1);
            for &id in &ids {
                ops.push(Op::Clifford(id));
                if let Some(g) = &cfg.interleaved {
                    ops.push(Op::Gate(g));
                }
            }
            ops.push(Op::Clifford(inv));
            let exact = self.execute(&ops).map_err(|e| Error::Sequence {
                depth: m,
                index: s,
                source: Box::new(e),
            })?;
            let exact = exact.clamp(0.0, 1.0);
            let survival = match cfg.shots {
                None => exact,
                Some(n) => {
                    let k = Binomial::new(n, exact).expect("probability in [0, 1]").sample(&mut shot_rng);
                    k as f64 / n as f64
                }
            };
            samples.push(RbSample {
                depth: m,
                sequence: s,
                survival,
            });
        }
        let fit = fit_decay(&samples)?;
        let (r, fidelity) = fidelity_from_p(fit.p, 4);
        Ok(RbDataset {
            group: self.tag,
            backend: self.backend.name(cfg.interleaved.as_ref()),
            interleaved: cfg.interleaved.as_ref().map(|g| g.label.clone()),
            samples,
            fit,
            r,
            fidelity,
            fidelity_err: 0.75 * fit.p_err,
        })
    }

    /// Reference and interleaved runs over the same Clifford draws.
    pub fn run_irb(&mut self, cfg: &RbConfig) -> Result<IrbResult> {
        if cfg.interleaved.is_none() {
            return Err(Error::InvalidParameter("interleaved RB needs a gate".into()));
        }
        let mut reference_cfg = cfg.clone();
        reference_cfg.interleaved = None;
        let reference = self.run(&reference_cfg)?;
        let interleaved = self.run(cfg)?;
        let (pr, pi) = (reference.fit.p, interleaved.fit.p);
        Ok(IrbResult {
            gate_fidelity: irb_fidelity(pr, pi, 4)?,
            gate_fidelity_err: irb_fidelity_err(pr, reference.fit.p_err, pi, interleaved.fit.p_err, 4),
            reference,
            interleaved,
        })
    }

    fn compiled_clifford(&mut self, id: usize) -> Result<DecompositionParams> {
        if let Some(p) = self.cache.get(&id) {
            return Ok(p.clone());
        }
        let Backend::Noisy(nb) = &self.backend else {
            unreachable!("compilation is only needed by the noisy backend")
        };
        let report = decompose::decompose(self.group.element(id), &nb.device, &nb.decompose)?;
        self.cache.insert(id, report.params.clone());
        Ok(report.params)
    }

    fn compiled_gate(&mut self, g: &Interleaved) -> Result<DecompositionParams> {
        if let Some(p) = self.gate_cache.get(&g.label) {
            return Ok(p.clone());
        }
        let Backend::Noisy(nb) = &self.backend else {
            unreachable!("compilation is only needed by the noisy backend")
        };
        let report = decompose::decompose(&g.gate, &nb.device, &nb.decompose)?;
        self.gate_cache.insert(g.label.clone(), report.params.clone());
        Ok(report.params)
    }

    /// Ground-state population after the operation list, starting in |0⟩.
    fn execute(&mut self, ops: &[Op<'_>]) -> Result<f64> {
        match self.backend.clone() {
            Backend::Ideal | Backend::Depolarizing { .. } => {
                let q = match self.backend {
                    Backend::Depolarizing { q } => q,
                    _ => 1.0,
                };
                let mut rho = CMatrix::zeros(4, 4);
                rho[(0, 0)] = ONE;
                let mixed = crate::linalg::identity(4) * C64::new(0.25, 0.0);
                for op in ops {
                    let u = match op {
                        Op::Clifford(id) => self.group.element(*id).matrix(),
                        Op::Gate(g) => g.gate.matrix(),
                    };
                    rho = u * rho * u.adjoint();
                    if q < 1.0 {
                        let tr = crate::linalg::trace(&rho);
                        rho = rho * C64::new(q, 0.0) + &mixed * (tr * (1.0 - q));
                    }
                }
                Ok(rho[(0, 0)].re)
            }
            Backend::Noisy(nb) => {
                let levels = nb.device.levels;
                let mut states = [CMatrix::zeros(levels, levels)];
                states[0][(0, 0)] = ONE;
                let mut clock = 0.0;
                for op in ops {
                    match op {
                        Op::Gate(Interleaved { pulse: Some(p), .. }) => {
                            // The pulse is played in its own frame; the
                            // equivalent carrier-phase bookkeeping is a
                            // virtual Z and therefore free.
                            sim::evolve_density(&Drive::Pulse(p), &nb.device, &nb.noise, nb.dt, 0.0, &mut states)?;
                            let z = virtual_z_levels(&p.trailing_phase, levels);
                            states[0] = &z * &states[0] * z.adjoint();
                            clock += p.duration;
                        }
                        _ => {
                            let params = match op {
                                Op::Clifford(id) => self.compiled_clifford(*id)?,
                                Op::Gate(g) => self.compiled_gate(g)?,
                            };
                            let (_, end) = sim::evolve_density(
                                &Drive::Native(&params),
                                &nb.device,
                                &nb.noise,
                                nb.dt,
                                clock,
                                &mut states,
                            )?;
                            clock += end;
                        }
                    }
                }
                let tr = crate::linalg::trace(&states[0]);
                if (tr - ONE).norm() > 1e-6 {
                    return Err(Error::TraceDeviation {
                        deviation: (tr - ONE).norm(),
                    });
                }
                Ok(states[0][(0, 0)].re)
            }
        }
    }
}

/// One-shot reference RB run.
pub fn run_rb(cfg: &RbConfig, backend: Backend) -> Result<RbDataset> {
    Benchmark::new(cfg.group, backend)?.run(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::standard_gate;

    fn model(a: f64, p: f64, b: f64, depths: &[usize]) -> Vec<RbSample> {
        depths
            .iter()
            .map(|&m| RbSample {
                depth: m,
                sequence: 0,
                survival: a * p.powi(m as i32) + b,
            })
            .collect()
    }

    #[test]
    fn exact_decay_is_recovered() {
        let f = fit_decay(&model(0.75, 0.9, 0.25, &DEFAULT_DEPTHS)).unwrap();
        assert!((f.a - 0.75).abs() < 1e-9, "{f:?}");
        assert!((f.p - 0.9).abs() < 1e-9, "{f:?}");
        assert!((f.b - 0.25).abs() < 1e-9, "{f:?}");
        assert!(!f.unidentifiable);
    }

    #[test]
    fn constant_data_is_flagged() {
        let f = fit_decay(&model(0.6, 1.0, 0.4, &DEFAULT_DEPTHS)).unwrap();
        assert!(f.unidentifiable);
        assert_eq!(f.p, 1.0);
        assert!((f.a + f.b - 1.0).abs() < 1e-12);
        assert!(fit_decay(&model(0.6, 0.9, 0.4, &[1, 2])).is_err());
    }

    #[test]
    fn fidelity_formulas() {
        assert_eq!(fidelity_from_p(1.0, 4), (0.0, 1.0));
        let (r, f) = fidelity_from_p(0.9, 4);
        assert!((r - 0.075).abs() < 1e-15 && (f - 0.925).abs() < 1e-15);
        assert_eq!(fidelity_from_p(0.0, 4).0, 0.75);
        assert_eq!(irb_fidelity(0.93, 0.93, 4).unwrap(), 1.0);
        let g = irb_fidelity(0.95, 0.94, 4).unwrap();
        assert!((g - (1.0 - 0.75 * (1.0 - 0.94 / 0.95))).abs() < 1e-15);
        assert!((g - 0.99211).abs() < 1e-5);
        assert!(irb_fidelity(0.0, 0.9, 4).is_err());
    }

    #[test]
    fn depolarizing_backend_recovers_q() {
        let mut cfg = RbConfig::new(GroupTag::Ququart);
        cfg.sequences = 3;
        cfg.seed = 5;
        let d = run_rb(&cfg, Backend::Depolarizing { q: 0.9 }).unwrap();
        assert!((d.fit.p - 0.9).abs() < 1e-6, "{:?}", d.fit);
        assert!((d.fit.b - 0.25).abs() < 1e-6);

        let ideal = run_rb(&cfg, Backend::Ideal).unwrap();
        assert!(ideal.samples.iter().all(|s| (s.survival - 1.0).abs() < 1e-12));
        assert_eq!(ideal.fit.p, 1.0);
        assert_eq!(ideal.fidelity, 1.0);
    }

    #[test]
    fn sequences_do_not_depend_on_backend() {
        let mut cfg = RbConfig::new(GroupTag::Ququart);
        cfg.depths = vec![1, 3, 5];
        cfg.sequences = 4;
        let a = Benchmark::new(GroupTag::Ququart, Backend::Ideal).unwrap();
        let b = Benchmark::new(GroupTag::Ququart, Backend::Depolarizing { q: 0.5 }).unwrap();
        let first = a.sample_sequences(&cfg).unwrap();
        assert_eq!(first, b.sample_sequences(&cfg).unwrap());
        cfg.seed = 1;
        assert_ne!(first, b.sample_sequences(&cfg).unwrap());
    }

    #[test]
    fn interleaved_depolarizing_gate() {
        let mut cfg = RbConfig::new(GroupTag::Ququart);
        cfg.sequences = 2;
        cfg.interleaved = Some(Interleaved {
            label: "H4".into(),
            gate: standard_gate("H4").unwrap(),
            pulse: None,
        });
        let mut b = Benchmark::new(GroupTag::Ququart, Backend::Depolarizing { q: 0.9 }).unwrap();
        let irb = b.run_irb(&cfg).unwrap();
        // Each interleaved gate carries the same channel as a Clifford.
        assert!((irb.interleaved.fit.p - 0.81).abs() < 1e-6);
        assert!((irb.gate_fidelity - fidelity_from_p(0.9, 4).1).abs() < 1e-6);

        cfg.interleaved.as_mut().unwrap().gate = standard_gate("H4").unwrap().with_global_phase(0.3);
        assert!(b.run_irb(&cfg).is_ok());
        cfg.interleaved.as_mut().unwrap().gate = crate::gates::subspace_y(1, 0.3).unwrap();
        assert!(b.run(&cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = RbConfig::new(GroupTag::Ququart);
        cfg.depths = vec![1, 4, 4];
        assert!(cfg.validate().is_err());
        cfg.depths = vec![1, 4];
        cfg.sequences = 0;
        assert!(cfg.validate().is_err());
        assert_eq!(GroupTag::parse("c2x2").unwrap(), GroupTag::TwoQubit);
    }
}
