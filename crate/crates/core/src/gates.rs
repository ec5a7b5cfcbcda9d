// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Standard ququart and encoded two-qubit gates, native subspace rotations,
//! virtual phase gates and the gate infidelity used throughout the crate.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, I, ONE, UNITARITY_TOL, ZERO};

/// Square complex matrix with `U†U = 1` to within [`UNITARITY_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct Unitary(CMatrix);

impl Unitary {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let deviation = linalg::unitarity_deviation(&m);
        if deviation > UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is unitary by construction.
    pub(crate) fn from_exact(m: CMatrix) -> Self {
        debug_assert!(linalg::unitarity_deviation(&m) < 1e-8);
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(linalg::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// Same operator rescaled so its first nonzero entry is real positive.
    pub fn canonical(&self) -> Self {
        Self(linalg::canonicalize_phase(&self.0))
    }

    pub fn with_global_phase(&self, alpha: f64) -> Self {
        Self(&self.0 * C64::from_polar(1.0, alpha))
    }
}

impl Mul for &Unitary {
    type Output = Unitary;

    fn mul(self, rhs: &Unitary) -> Unitary {
        Unitary(&self.0 * &rhs.0)
    }
}

impl Mul for Unitary {
    type Output = Unitary;

    fn mul(self, rhs: Unitary) -> Unitary {
        Unitary(self.0 * rhs.0)
    }
}

/// Relative phases `(φ₁, φ₂, φ₃)` applied to the three carrier waves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector([f64; 3]);

impl PhaseVector {
    pub fn new(phi: [f64; 3]) -> Self {
        Self(phi.map(reduce_angle))
    }

    pub const fn zero() -> Self {
        Self([0.0; 3])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    /// Cumulative level phases `(0, φ₁, φ₁+φ₂, φ₁+φ₂+φ₃)`.
    pub fn level_phases(&self) -> [f64; 4] {
        let [a, b, c] = self.0;
        [0.0, a, a + b, a + b + c]
    }
}

impl std::ops::Add for PhaseVector {
    type Output = PhaseVector;

    fn add(self, rhs: PhaseVector) -> PhaseVector {
        let [a, b, c] = self.0;
        let [x, y, z] = rhs.0;
        PhaseVector::new([a + x, b + y, c + z])
    }
}

/// Reduces an angle into `[0, 2π)`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Two-qubit computational label `|q0 q1⟩`, mapped to the ququart level `2·q0 + q1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TwoQubitLabel {
    pub q0: u8,
    pub q1: u8,
}

impl TwoQubitLabel {
    pub fn new(q0: u8, q1: u8) -> Result<Self> {
        if q0 > 1 || q1 > 1 {
            return Err(Error::InvalidParameter(format!(
                "qubit labels must be binary, got ({q0}, {q1})"
            )));
        }
        Ok(Self { q0, q1 })
    }

    pub fn from_level(level: usize) -> Result<Self> {
        if level > 3 {
            return Err(Error::InvalidParameter(format!("level {level} is not a ququart level")));
        }
        Ok(Self {
            q0: (level >> 1) as u8,
            q1: (level & 1) as u8,
        })
    }

    pub fn level(&self) -> usize {
        2 * self.q0 as usize + self.q1 as usize
    }
}

impl fmt::Display for TwoQubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}{}⟩", self.q0, self.q1)
    }
}

fn real_matrix(dim: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(dim, dim, entries.iter().map(|&x| C64::new(x, 0.0)))
}

fn single_qubit(name: &str) -> Option<CMatrix> {
    let h = FRAC_1_SQRT_2;
    Some(match name {
        "I" => linalg::identity(2),
        "X" => real_matrix(2, &[0.0, 1.0, 1.0, 0.0]),
        "Y" => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        "Z" => real_matrix(2, &[1.0, 0.0, 0.0, -1.0]),
        "H" => real_matrix(2, &[h, h, h, -h]),
        "S" => linalg::diag(&[ONE, I]),
        _ => return None,
    })
}

fn cx(control: usize, target: usize) -> Option<CMatrix> {
    if control > 1 || target > 1 || control == target {
        return None;
    }
    let mut m = CMatrix::zeros(4, 4);
    for level in 0..4 {
        let bits = [level >> 1, level & 1];
        let mut out = bits;
        if bits[control] == 1 {
            out[target] ^= 1;
        }
        m[(2 * out[0] + out[1], level)] = ONE;
    }
    Some(m)
}

/// Returns the named gate.
///
/// Ququart gates (`X4`, `Z4`, `H4`, `S4`, `I4`) and two-qubit gates
/// (`CX(c,t)`, `SWAP`, products like `HxH` or `IxS`) are 4×4; the single-qubit
/// names `I, H, S, X, Y, Z` return 2×2 matrices.
pub fn standard_gate(name: &str) -> Result<Unitary> {
    let key: String = name.chars().filter(|c| !c.is_whitespace()).collect();
    let m = match key.as_str() {
        "I4" => linalg::identity(4),
        "X4" => real_matrix(
            4,
            &[
                0.0, 0.0, 0.0, 1.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        ),
        "Z4" => linalg::diag(&[ONE, I, -ONE, -I]),
        "S4" => {
            // ζ^{j²} with ζ = √i; the (1, √i, i, √i) variant does not normalize the Paulis
            let sqrt_i = C64::from_polar(1.0, PI / 4.0);
            linalg::diag(&[ONE, sqrt_i, -ONE, sqrt_i])
        }
        "H4" => {
            let rows = [
                [ONE, ONE, ONE, ONE],
                [ONE, I, -ONE, -I],
                [ONE, -ONE, ONE, -ONE],
                [ONE, -I, -ONE, I],
            ];
            CMatrix::from_fn(4, 4, |r, c| rows[r][c] * 0.5)
        }
        "SWAP" => real_matrix(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        ),
        "CX01" | "CX(0,1)" | "CX(q0,q1)" => cx(0, 1).unwrap(),
        "CX10" | "CX(1,0)" | "CX(q1,q0)" => cx(1, 0).unwrap(),
        other => {
            if let Some(m) = single_qubit(other) {
                m
            } else if let Some((a, b)) = other.split_once(['x', '⊗']) {
                match (single_qubit(a), single_qubit(b)) {
                    (Some(a), Some(b)) => linalg::kron(&a, &b),
                    _ => return Err(Error::UnknownGate(name.to_string())),
                }
            } else {
                return Err(Error::UnknownGate(name.to_string()));
            }
        }
    };
    Ok(Unitary::from_exact(m))
}

fn check_subspace(j: usize) -> Result<()> {
    if (1..=3).contains(&j) {
        Ok(())
    } else {
        Err(Error::InvalidSubspace(j))
    }
}

/// `R_j(φ, θ) = Z_j†(φ) Y_j(θ) Z_j(φ)` acting on levels `{j−1, j}` of a ququart.
pub fn subspace_rotation(j: usize, theta: f64, phi: f64) -> Result<Unitary> {
    check_subspace(j)?;
    let (s, c) = (0.5 * theta).sin_cos();
    let mut m = linalg::identity(4);
    m[(j - 1, j - 1)] = C64::new(c, 0.0);
    m[(j - 1, j)] = -C64::from_polar(s, phi);
    m[(j, j - 1)] = C64::from_polar(s, -phi);
    m[(j, j)] = C64::new(c, 0.0);
    Ok(Unitary::from_exact(m))
}

/// `Y_j(θ) = R_j(0, θ)`.
pub fn subspace_y(j: usize, theta: f64) -> Result<Unitary> {
    subspace_rotation(j, theta, 0.0)
}

/// Single-carrier phase gate `Z_j(φ)`: phase `e^{iφ}` on level `j` only.
pub fn subspace_z(j: usize, phi: f64) -> Result<Unitary> {
    check_subspace(j)?;
    let mut m = linalg::identity(4);
    m[(j, j)] = C64::from_polar(1.0, phi);
    Ok(Unitary::from_exact(m))
}

/// `Z(φ⃗) = diag(1, e^{iφ₁}, e^{i(φ₁+φ₂)}, e^{i(φ₁+φ₂+φ₃)})`.
pub fn virtual_z(phi: &PhaseVector) -> Unitary {
    Unitary::from_exact(virtual_z_levels(phi, 4))
}

/// Virtual phase gate on `levels ≥ 4`; levels above 3 inherit the phase of level 3.
pub fn virtual_z_levels(phi: &PhaseVector, levels: usize) -> CMatrix {
    let p = phi.level_phases();
    let entries: Vec<C64> = (0..levels)
        .map(|n| C64::from_polar(1.0, p[n.min(3)]))
        .collect();
    linalg::diag(&entries)
}

/// Encodes `a ⊗ b` as a ququart gate with `|q0 q1⟩ ↦ |2·q0 + q1⟩`.
pub fn encode_two_qubit(a: &Unitary, b: &Unitary) -> Result<Unitary> {
    for u in [a, b] {
        if u.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: u.dim(),
            });
        }
    }
    Ok(Unitary::from_exact(linalg::kron(a.matrix(), b.matrix())))
}

/// Encodes a 2×2 or 4×4 raw matrix, rejecting non-unitary input.
pub fn encode_two_qubit_raw(a: &CMatrix, b: &CMatrix) -> Result<Unitary> {
    encode_two_qubit(&Unitary::new(a.clone())?, &Unitary::new(b.clone())?)
}

/// `1 − |Tr(U†V)|² / d²`, insensitive to the global phase of either argument.
pub fn gate_infidelity(target: &Unitary, actual: &Unitary) -> Result<f64> {
    matrix_infidelity(target.matrix(), actual.matrix())
}

/// [`gate_infidelity`] on raw matrices; `actual` may be a non-unitary block.
pub fn matrix_infidelity(target: &CMatrix, actual: &CMatrix) -> Result<f64> {
    if target.shape() != actual.shape() {
        return Err(Error::DimensionMismatch {
            expected: target.nrows(),
            found: actual.nrows(),
        });
    }
    let d = target.nrows() as f64;
    let overlap = linalg::inner(target, actual).norm_sqr();
    Ok((1.0 - overlap / (d * d)).clamp(0.0, 1.0))
}
