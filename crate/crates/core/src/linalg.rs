// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Small dense complex linear algebra shared by every module.
//!
//! All matrices here are at most 8×8 (or 64×64 superoperators), so everything
//! is dense and allocated on the heap through [`nalgebra::DMatrix`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used whenever a unitary is rebuilt from computation.
pub const UNITARITY_TOL: f64 = 1e-10;

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries))
}

/// Frobenius norm of `U†U − 1`.
pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m.adjoint() * m - identity(m.nrows())).norm()
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().copied().sum()
}

/// `Tr(A† B)` without forming the product.
pub fn inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).norm() <= tol
}

/// Matrix exponential of a general square matrix.
pub fn expm(m: &CMatrix) -> CMatrix {
    m.clone().exp()
}

/// Rescale so that the first entry (row-major) with magnitude above `1e-9` is
/// real and positive.
pub fn canonicalize_phase(m: &CMatrix) -> CMatrix {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            if z.norm() > 1e-9 {
                let phase = z.conj() / z.norm();
                return m * phase;
            }
        }
    }
    m.clone()
}

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) / std::f64::consts::SQRT_2
    });
    let qr = z.qr();
    let (q, r) = qr.unpack();
    let mut q = q;
    for c in 0..dim {
        let d = r[(c, c)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for row in 0..dim {
            q[(row, c)] *= ph;
        }
    }
    q
}

/// Eigen-decomposition of a hermitian generator `H`, used to evaluate the
/// short-time propagator `exp(−i H dt)` and its directional derivatives.
pub struct HermitianExp {
    pub eigenvectors: CMatrix,
    pub eigenvalues: Vec<f64>,
    pub dt: f64,
    phases: Vec<C64>,
}

impl HermitianExp {
    pub fn new(h: &CMatrix, dt: f64) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let phases = eigenvalues
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * dt))
            .collect();
        Self {
            eigenvectors: eig.eigenvectors,
            eigenvalues,
            dt,
            phases,
        }
    }

    pub fn propagator(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (c, p) in self.phases.iter().enumerate() {
            for r in 0..v.nrows() {
                scaled[(r, c)] = v[(r, c)] * p;
            }
        }
        scaled * v.adjoint()
    }

    /// Divided differences of `exp(−iλdt)` in the eigenbasis.
    fn divided(&self, m: usize, n: usize) -> C64 {
        let (lm, ln) = (self.eigenvalues[m], self.eigenvalues[n]);
        let diff = lm - ln;
        if diff.abs() * self.dt < 1e-8 {
            // second-order expansion around the mean eigenvalue
            let mean = 0.5 * (lm + ln);
            C64::new(0.0, -self.dt)
                * C64::from_polar(1.0, -mean * self.dt)
                * (1.0 - (diff * self.dt).powi(2) / 24.0)
        } else {
            (self.phases[m] - self.phases[n]) / diff
        }
    }

    /// Returns `Tr(M · dU[G])` for each direction `G`, where `dU[G]` is the
    /// Fréchet derivative of `exp(−iH dt)` along the hermitian perturbation `G`.
    pub fn contract_derivatives(&self, m: &CMatrix, directions: &[&CMatrix]) -> Vec<C64> {
        let v = &self.eigenvectors;
        let vd = v.adjoint();
        let m_eig = &vd * m * v;
        let n = v.nrows();
        directions
            .iter()
            .map(|g| {
                let g_eig = &vd * *g * v;
                let mut acc = ZERO;
                for a in 0..n {
                    for b in 0..n {
                        let ga = g_eig[(a, b)];
                        if ga.norm_sqr() == 0.0 {
                            continue;
                        }
                        acc += m_eig[(b, a)] * self.divided(a, b) * ga;
                    }
                }
                acc
            })
            .collect()
    }
}
