// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Simulated state and process tomography of a ququart: rotation sets,
//! readout emulation, maximum-likelihood state estimates and χ matrices.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{encode_two_qubit, standard_gate, subspace_rotation, Unitary};
use crate::linalg::{self, CMatrix, C64, I, ONE, ZERO};
use crate::optim::{self, Options};
use crate::sim::Channel;

/// One rotation `R_j(φ, θ)`: (subspace, φ, θ).
pub type Rotation = (usize, f64, f64);

/// Pre- and post-rotation words, each listed in application order.
#[derive(Clone, Debug)]
pub struct RotationSet {
    pub pre: Vec<Vec<Rotation>>,
    pub post: Vec<Vec<Rotation>>,
}

fn word_unitary(word: &[Rotation]) -> CMatrix {
    let mut u = linalg::identity(4);
    for &(j, phi, theta) in word {
        u = subspace_rotation(j, theta, phi).expect("valid subspace").into_matrix() * u;
    }
    u
}

impl RotationSet {
    /// The 16 + 16 tomography rotations. Pre-rotations that start on an upper
    /// subspace first climb the ladder with π pulses so that they act on a
    /// populated level.
    pub fn standard() -> Self {
        let h = FRAC_PI_2;
        // written as operator products, rightmost first
        let table: [&[Rotation]; 16] = [
            &[],
            &[(1, 0.0, h)],
            &[(1, h, h)],
            &[(1, 0.0, PI)],
            &[(2, 0.0, h)],
            &[(2, h, h)],
            &[(2, 0.0, PI), (1, 0.0, h)],
            &[(2, 0.0, PI), (1, h, h)],
            &[(2, 0.0, PI), (1, 0.0, PI)],
            &[(3, 0.0, h)],
            &[(3, h, h)],
            &[(3, 0.0, PI), (2, 0.0, h)],
            &[(3, 0.0, PI), (2, h, h)],
            &[(3, 0.0, PI), (2, 0.0, PI), (1, 0.0, h)],
            &[(3, 0.0, PI), (2, 0.0, PI), (1, h, h)],
            &[(3, 0.0, PI), (2, 0.0, PI), (1, 0.0, PI)],
        ];
        let post_table: [&[Rotation]; 16] = [
            &[],
            &[(1, 0.0, h)],
            &[(1, h, h)],
            &[(1, 0.0, PI)],
            &[(2, 0.0, h)],
            &[(2, h, h)],
            &[(2, 0.0, h), (1, 0.0, PI)],
            &[(2, h, h), (1, 0.0, PI)],
            &[(2, 0.0, PI), (1, 0.0, PI)],
            &[(3, 0.0, h)],
            &[(3, h, h)],
            &[(3, 0.0, h), (2, 0.0, PI)],
            &[(3, h, h), (2, 0.0, PI)],
            &[(3, 0.0, h), (2, 0.0, PI), (1, 0.0, PI)],
            &[(3, h, h), (2, 0.0, PI), (1, 0.0, PI)],
            &[(3, 0.0, PI), (2, 0.0, PI), (1, 0.0, PI)],
        ];
        let in_order = |w: &[Rotation]| w.iter().rev().copied().collect::<Vec<_>>();
        let pre = table
            .iter()
            .map(|w| {
                let mut word = in_order(w);
                let lowest = word.iter().map(|r| r.0).min().unwrap_or(1);
                let ladder: Vec<Rotation> = (1..lowest).map(|j| (j, 0.0, PI)).collect();
                word.splice(0..0, ladder);
                word
            })
            .collect();
        let post = post_table.iter().map(|w| in_order(w)).collect();
        Self { pre, post }
    }

    pub fn pre_unitaries(&self) -> Vec<CMatrix> {
        self.pre.iter().map(|w| word_unitary(w)).collect()
    }

    pub fn post_unitaries(&self) -> Vec<CMatrix> {
        self.post.iter().map(|w| word_unitary(w)).collect()
    }

    /// Input density matrices prepared from `|0⟩` by the pre-rotations.
    pub fn prepared_states(&self) -> Vec<CMatrix> {
        self.pre_unitaries()
            .iter()
            .map(|u| {
                let c = u.column(0).into_owned();
                &c * c.adjoint()
            })
            .collect()
    }
}

/// `|k⟩`, `(|l⟩+|k⟩)/√2` and `(|l⟩−i|k⟩)/√2` for `k > l`.
pub fn qst_input_states() -> Vec<DVector<C64>> {
    let basis = |k: usize| {
        let mut v = DVector::from_element(4, ZERO);
        v[k] = ONE;
        v
    };
    let mut out: Vec<DVector<C64>> = (0..4).map(basis).collect();
    for k in 1..4 {
        for l in 0..k {
            out.push((basis(l) + basis(k)) * C64::new(FRAC_1_SQRT_2, 0.0));
            out.push((basis(l) - basis(k) * I) * C64::new(FRAC_1_SQRT_2, 0.0));
        }
    }
    out
}

/// Readout assignment: `confusion[(true, measured)]`, rows summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasModel {
    pub confusion: [[f64; 4]; 4],
    /// Shots per setting; `None` gives exact probabilities.
    pub shots: Option<u64>,
}

impl MeasModel {
    pub fn ideal() -> Self {
        Self {
            confusion: std::array::from_fn(|r| std::array::from_fn(|c| if r == c { 1.0 } else { 0.0 })),
            shots: None,
        }
    }

    pub fn with_shots(mut self, shots: u64) -> Self {
        self.shots = Some(shots);
        self
    }

    /// Synthetic readout in which level `k` is misread as a neighbour with
    /// probability `eps·(k+1)/2` per side.
    pub fn synthetic(eps: f64) -> Result<Self> {
        let mut c = [[0.0; 4]; 4];
        for k in 0..4usize {
            let p = eps * (k as f64 + 1.0) / 2.0;
            let mut stay = 1.0;
            for n in [k.wrapping_sub(1), k + 1] {
                if n < 4 {
                    c[k][n] = p;
                    stay -= p;
                }
            }
            c[k][k] = stay;
        }
        let m = Self {
            confusion: c,
            shots: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (r, row) in self.confusion.iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("confusion row {r} is not a probability vector")));
            }
        }
        if self.shots == Some(0) {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        Ok(())
    }

    /// Measured distribution for true populations `p`.
    pub fn mix(&self, p: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|j| (0..4).map(|i| p[i] * self.confusion[i][j]).sum())
    }

    /// Applies the inverse assignment matrix; clamps negatives and renormalizes.
    pub fn correct(&self, q: &[f64; 4]) -> Result<[f64; 4]> {
        let inv = nalgebra::Matrix4::from_fn(|r, c| self.confusion[r][c])
            .try_inverse()
            .ok_or_else(|| Error::SingularSystem("confusion matrix is not invertible".into()))?;
        let mut p: [f64; 4] = std::array::from_fn(|j| (0..4).map(|i| q[i] * inv[(i, j)]).sum::<f64>().max(0.0));
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
        }
        Ok(p)
    }
}

/// Outcome tables indexed `[pre][post]`; each entry holds counts (or exact
/// probabilities when `shots` is `None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub table: Vec<Vec<[f64; 4]>>,
    pub shots: Option<u64>,
}

impl Counts {
    fn frequencies(&self, pre: usize) -> Vec<[f64; 4]> {
        self.table[pre]
            .iter()
            .map(|c| {
                let s: f64 = c.iter().sum();
                if s > 0.0 {
                    c.map(|v| v / s)
                } else {
                    *c
                }
            })
            .collect()
    }
}

fn sample_counts<R: Rng + ?Sized>(q: &[f64; 4], shots: u64, rng: &mut R) -> [f64; 4] {
    // multinomial via conditional binomials
    let mut left = shots;
    let mut mass = 1.0;
    let mut out = [0.0; 4];
    for k in 0..4 {
        if k == 3 || left == 0 {
            out[k] = left as f64;
            break;
        }
        let p = if mass > 0.0 { (q[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let n = Binomial::new(left, p).expect("valid binomial").sample(rng);
        out[k] = n as f64;
        left -= n;
        mass -= q[k];
    }
    out
}

/// Populations of levels 0–3 after a post-rotation; leaked population is
/// read out as the highest level.
fn populations(rho: &CMatrix, post: &CMatrix) -> [f64; 4] {
    let d = rho.nrows();
    let mut u = linalg::identity(d);
    u.view_mut((0, 0), (4, 4)).copy_from(post);
    let r = &u * rho * u.adjoint();
    let mut p: [f64; 4] = std::array::from_fn(|k| r[(k, k)].re.max(0.0));
    p[3] += (4..d).map(|k| r[(k, k)].re.max(0.0)).sum::<f64>();
    let s: f64 = p.iter().sum();
    p.map(|v| v / s)
}

/// Emulates every (pre, post) setting on a channel.
pub fn simulate_measurements<R: Rng + ?Sized>(
    channel: &Channel,
    rotations: &RotationSet,
    meas: &MeasModel,
    rng: &mut R,
) -> Result<Counts> {
    meas.validate()?;
    let posts = rotations.post_unitaries();
    let table = rotations
        .prepared_states()
        .iter()
        .map(|rho_in| {
            let rho = channel.apply(rho_in);
            posts
                .iter()
                .map(|u| {
                    let q = meas.mix(&populations(&rho, u));
                    match meas.shots {
                        Some(n) => sample_counts(&q, n, rng),
                        None => q,
                    }
                })
                .collect()
        })
        .collect();
    Ok(Counts {
        table,
        shots: meas.shots,
    })
}

/// Hermitian basis for 4×4 matrices: diagonal units, then real and imaginary
/// off-diagonal pairs.
fn hermitian_basis() -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(16);
    for k in 0..4 {
        let mut m = CMatrix::zeros(4, 4);
        m[(k, k)] = ONE;
        out.push(m);
    }
    for a in 0..4 {
        for b in a + 1..4 {
            let mut m = CMatrix::zeros(4, 4);
            m[(a, b)] = ONE;
            m[(b, a)] = ONE;
            out.push(m);
            let mut m = CMatrix::zeros(4, 4);
            m[(a, b)] = -I;
            m[(b, a)] = I;
            out.push(m);
        }
    }
    out
}

/// Projectors `U†|o⟩⟨o|U` for each post-rotation and outcome.
fn effects(posts: &[CMatrix]) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(4 * posts.len());
    for u in posts {
        for o in 0..4 {
            let row = u.row(o).adjoint();
            out.push(&row * row.adjoint());
        }
    }
    out
}

fn linear_inversion(freqs: &[[f64; 4]], eff: &[CMatrix]) -> Result<CMatrix> {
    let basis = hermitian_basis();
    let rows = eff.len();
    let a = DMatrix::from_fn(rows, 16, |r, k| linalg::inner(&eff[r], &basis[k]).re);
    let b = DVector::from_fn(rows, |r, _| freqs[r / 4][r % 4]);
    let svd = a.svd(true, true);
    if svd.singular_values.iter().filter(|s| **s > 1e-10).count() < 16 {
        return Err(Error::IncompleteData("measurement settings are not tomographically complete".into()));
    }
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    let mut rho = CMatrix::zeros(4, 4);
    for (k, m) in basis.iter().enumerate() {
        rho += m * C64::new(x[k], 0.0);
    }
    Ok(rho)
}

fn clip_to_physical(rho: &CMatrix) -> CMatrix {
    let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = vals.iter().sum();
    let mut out = CMatrix::zeros(4, 4);
    for (k, v) in vals.iter().enumerate() {
        let c = eig.eigenvectors.column(k);
        out += (&c * c.adjoint()) * C64::new(v / s, 0.0);
    }
    out
}

/// Maximum-likelihood state from the outcome tables of one preparation.
/// Data that linear inversion already maps to a physical state are returned
/// directly; otherwise `ρ = T†T/Tr(T†T)` is optimized by L-BFGS.
pub fn mle_state(freqs: &[[f64; 4]], rotations: &RotationSet, meas: &MeasModel) -> Result<CMatrix> {
    let posts = rotations.post_unitaries();
    if freqs.len() != posts.len() {
        return Err(Error::IncompleteData(format!(
            "expected {} settings, got {}",
            posts.len(),
            freqs.len()
        )));
    }
    let corrected: Vec<[f64; 4]> = freqs.iter().map(|q| meas.correct(q)).collect::<Result<_>>()?;
    let eff = effects(&posts);
    let li = linear_inversion(&corrected, &eff)?;
    let li_h = (&li + li.adjoint()) * C64::new(0.5, 0.0);
    let min_eig = li_h.clone().symmetric_eigen().eigenvalues.min();
    if min_eig > -1e-12 {
        return Ok(clip_to_physical(&li_h));
    }

    let start = clip_to_physical(&li_h);
    // mix in a little of the maximally mixed state so the Cholesky factor exists
    let start = start * C64::new(0.99, 0.0) + linalg::identity(4) * C64::new(0.0025, 0.0);
    let t0 = start.cholesky().expect("positive definite start").l().adjoint();
    let mut x0 = Vec::with_capacity(20);
    for r in 0..4 {
        for c in r..4 {
            x0.push(t0[(r, c)].re);
            x0.push(t0[(r, c)].im);
        }
    }
    let unpack = |x: &[f64]| {
        let mut t = CMatrix::zeros(4, 4);
        let mut k = 0;
        for r in 0..4 {
            for c in r..4 {
                t[(r, c)] = C64::new(x[k], x[k + 1]);
                k += 2;
            }
        }
        t
    };
    let weights: Vec<f64> = corrected.iter().flatten().copied().collect();
    let nll = |x: &[f64], grad: &mut [f64]| {
        let t = unpack(x);
        let tt = t.adjoint() * &t;
        let tr = linalg::trace(&tt).re;
        let rho = &tt / C64::new(tr, 0.0);
        let mut f = 0.0;
        let mut g = CMatrix::zeros(4, 4);
        for (e, w) in eff.iter().zip(&weights) {
            if *w <= 0.0 {
                continue;
            }
            let p = linalg::inner(e, &rho).re.max(1e-300);
            f -= w * p.ln();
            g -= e * C64::new(w / p, 0.0);
        }
        // dL = (2/tr) Re Tr(K T† dT), K = G − Tr(Gρ)
        let gr = linalg::inner(&g, &rho).re;
        let k = g - linalg::identity(4) * C64::new(gr, 0.0);
        let kt = k * t.adjoint();
        let mut idx = 0;
        for r in 0..4 {
            for c in r..4 {
                let m = kt[(c, r)];
                grad[idx] = 2.0 / tr * m.re;
                grad[idx + 1] = -2.0 / tr * m.im;
                idx += 2;
            }
        }
        f
    };
    let out = optim::lbfgs(
        nll,
        &x0,
        &Options {
            max_iter: 2000,
            grad_tol: 1e-12,
            f_tol: 1e-15,
            f_target: f64::NEG_INFINITY,
            memory: 10,
        },
    );
    let t = unpack(&out.x);
    let tt = t.adjoint() * &t;
    let tr = linalg::trace(&tt);
    Ok(clip_to_physical(&(tt / tr)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    /// `Z₄ᵐX₄ⁿ`, index `4m + n`.
    Ququart,
    /// `σ_m ⊗ σ_n` with `σ = (𝟙, X, Y, Z)`, index `4m + n`.
    TwoQubit,
}

impl BasisTag {
    pub fn name(self) -> &'static str {
        match self {
            BasisTag::Ququart => "ququart",
            BasisTag::TwoQubit => "two-qubit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ququart" | "z4x4" | "c4" => Ok(Self::Ququart),
            "two-qubit" | "twoqubit" | "pauli" | "c2x2" => Ok(Self::TwoQubit),
            _ => Err(Error::InvalidParameter(format!("unknown basis `{s}`"))),
        }
    }
}

/// Operator basis with `Tr(B_i† B_j) = 4 δ_ij`.
pub fn operator_basis(tag: BasisTag) -> Vec<CMatrix> {
    match tag {
        BasisTag::Ququart => {
            let x = standard_gate("X4").expect("built-in").into_matrix();
            let z = standard_gate("Z4").expect("built-in").into_matrix();
            let mut out = Vec::with_capacity(16);
            let mut zm = linalg::identity(4);
            for _ in 0..4 {
                let mut xn = linalg::identity(4);
                for _ in 0..4 {
                    out.push(&zm * &xn);
                    xn = &x * xn;
                }
                zm = &z * zm;
            }
            out
        }
        BasisTag::TwoQubit => {
            let names = ["I", "X", "Y", "Z"];
            let mut out = Vec::with_capacity(16);
            for a in names {
                for b in names {
                    let u = encode_two_qubit(&standard_gate(a).unwrap(), &standard_gate(b).unwrap()).unwrap();
                    out.push(u.into_matrix());
                }
            }
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    pub basis: BasisTag,
    pub chi: CMatrix,
}

impl ProcessMatrix {
    /// χ of a unitary channel: `χ_ij = u_i ū_j` with `u_i = Tr(B_i† U)/4`.
    pub fn from_unitary(u: &Unitary, basis: BasisTag) -> Result<Self> {
        if u.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: u.dim(),
            });
        }
        let b = operator_basis(basis);
        let coeff: Vec<C64> = b.iter().map(|bi| linalg::inner(bi, u.matrix()) / 4.0).collect();
        let chi = CMatrix::from_fn(16, 16, |i, j| coeff[i] * coeff[j].conj());
        Ok(Self { basis, chi })
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.chi).re
    }

    /// Applies `Σ χ_ij B_i ρ B_j†`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let b = operator_basis(self.basis);
        let mut out = CMatrix::zeros(4, 4);
        for i in 0..16 {
            let left = &b[i] * rho;
            for j in 0..16 {
                let c = self.chi[(i, j)];
                if c != ZERO {
                    out += &left * b[j].adjoint() * c;
                }
            }
        }
        out
    }

    pub fn write_text<W: Write>(&self, out: &mut W, description: &str, shots: Option<u64>, seed: u64) -> Result<()> {
        writeln!(out, "# chi-matrix basis={}", self.basis.name())?;
        writeln!(out, "# channel={description}")?;
        match shots {
            Some(n) => writeln!(out, "# shots={n}")?,
            None => writeln!(out, "# shots=exact")?,
        }
        writeln!(out, "# seed={seed}")?;
        writeln!(out, "i,j,re,im")?;
        for i in 0..16 {
            for j in 0..16 {
                let c = self.chi[(i, j)];
                writeln!(out, "{i},{j},{:.12e},{:.12e}", c.re, c.im)?;
            }
        }
        Ok(())
    }
}

/// `F = |Tr(χ₁ χ₂)|` with both matrices normalized to unit trace.
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64> {
    if a.basis != b.basis {
        return Err(Error::InvalidParameter("process matrices use different bases".into()));
    }
    let prod = (&a.chi * &b.chi).trace();
    Ok(prod.norm() / (a.trace() * b.trace()))
}

/// Solves `ρ_out,k = Σ χ_ij B_i ρ_in,k B_j†` for χ.
pub fn chi_from_states(inputs: &[CMatrix], outputs: &[CMatrix], basis: BasisTag) -> Result<ProcessMatrix> {
    if inputs.len() != 16 || outputs.len() != 16 {
        return Err(Error::IncompleteData("need 16 input/output pairs".into()));
    }
    let b = operator_basis(basis);
    let mut a = CMatrix::zeros(256, 256);
    let mut rhs = DVector::from_element(256, ZERO);
    for (k, (rin, rout)) in inputs.iter().zip(outputs).enumerate() {
        let left: Vec<CMatrix> = b.iter().map(|bi| bi * rin).collect();
        for i in 0..16 {
            for j in 0..16 {
                let m = &left[i] * b[j].adjoint();
                for e in 0..16 {
                    a[(16 * k + e, 16 * i + j)] = m[(e / 4, e % 4)];
                }
            }
        }
        for e in 0..16 {
            rhs[16 * k + e] = rout[(e / 4, e % 4)];
        }
    }
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("process reconstruction system is singular".into()))?;
    let chi = CMatrix::from_fn(16, 16, |i, j| x[16 * i + j]);
    Ok(ProcessMatrix {
        basis,
        chi: physical_chi(&chi),
    })
}

/// Hermitian part with negative eigenvalues clipped, normalized to unit trace.
fn physical_chi(chi: &CMatrix) -> CMatrix {
    let h = (chi + chi.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= -1e-12 {
        let tr = linalg::trace(&h).re;
        return h / C64::new(tr, 0.0);
    }
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = vals.iter().sum();
    let mut out = CMatrix::zeros(16, 16);
    for (k, v) in vals.iter().enumerate() {
        if *v > 0.0 {
            let c = eig.eigenvectors.column(k);
            out += (&c * c.adjoint()) * C64::new(v / s, 0.0);
        }
    }
    out
}

/// Full process tomography of a channel: emulated measurements, MLE per
/// preparation, then linear inversion for χ.
pub fn qpt<R: Rng + ?Sized>(channel: &Channel, basis: BasisTag, meas: &MeasModel, rng: &mut R) -> Result<ProcessMatrix> {
    let rotations = RotationSet::standard();
    let counts = simulate_measurements(channel, &rotations, meas, rng)?;
    let outputs = (0..16)
        .map(|k| mle_state(&counts.frequencies(k), &rotations, meas))
        .collect::<Result<Vec<_>>>()?;
    chi_from_states(&rotations.prepared_states(), &outputs, basis)
}

/// State tomography of one prepared input through a channel.
pub fn qst<R: Rng + ?Sized>(channel: &Channel, pre: usize, meas: &MeasModel, rng: &mut R) -> Result<CMatrix> {
    let rotations = RotationSet::standard();
    let counts = simulate_measurements(channel, &rotations, meas, rng)?;
    let table = counts
        .table
        .get(pre)
        .ok_or_else(|| Error::InvalidParameter(format!("no preparation {pre}")))?;
    let sub = Counts {
        table: vec![table.clone()],
        shots: counts.shots,
    };
    mle_state(&sub.frequencies(0), &rotations, meas)
}
