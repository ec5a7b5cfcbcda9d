// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Explicit Clifford groups for one ququart (C₄) and two encoded qubits
//! (C₂⊗²), stored as phase-canonical dense matrices with a hash index.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::gates::{standard_gate, Unitary};
use crate::linalg::{self, CMatrix, C64};

/// Default cap on the number of elements produced by closure.
pub const GROUP_CAP: usize = 1_000_000;

type Key = Vec<i64>;

/// Hash key: canonical phase, entries rounded to a 1e−9 grid.
fn key_of(m: &CMatrix) -> Key {
    let c = linalg::canonicalize_phase(m);
    let mut k = Vec::with_capacity(2 * c.len());
    for r in 0..c.nrows() {
        for col in 0..c.ncols() {
            let z = c[(r, col)];
            k.push((z.re * 1e9).round() as i64);
            k.push((z.im * 1e9).round() as i64);
        }
    }
    k
}

#[derive(Clone, Debug)]
pub struct CliffordGroup {
    elements: Vec<Unitary>,
    index: HashMap<Key, usize>,
    inverse: Vec<usize>,
    identity: usize,
}

impl CliffordGroup {
    fn from_elements(elements: Vec<Unitary>) -> Result<Self> {
        let mut index = HashMap::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            index.insert(key_of(e.matrix()), i);
        }
        let dim = elements.first().map_or(0, Unitary::dim);
        let identity = *index
            .get(&key_of(&linalg::identity(dim)))
            .ok_or_else(|| Error::NotInGroup("identity is missing".into()))?;
        let inverse = elements
            .iter()
            .map(|e| {
                index
                    .get(&key_of(&e.matrix().adjoint()))
                    .copied()
                    .ok_or_else(|| Error::NotInGroup("inverse is missing; the set is not closed".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            elements,
            index,
            inverse,
            identity,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn element(&self, id: usize) -> &Unitary {
        &self.elements[id]
    }

    pub fn elements(&self) -> &[Unitary] {
        &self.elements
    }

    pub fn identity_id(&self) -> usize {
        self.identity
    }

    pub fn inverse_id(&self, id: usize) -> usize {
        self.inverse[id]
    }

    /// Id of the element equal to `u` up to phase.
    pub fn contains(&self, u: &CMatrix) -> Option<usize> {
        if u.nrows() != self.dim() {
            return None;
        }
        self.index.get(&key_of(u)).copied()
    }

    /// Id of `a · b` (apply `b` first).
    pub fn multiply(&self, a: usize, b: usize) -> Result<usize> {
        let m = self.elements[a].matrix() * self.elements[b].matrix();
        self.contains(&m)
            .ok_or_else(|| Error::NotInGroup(format!("product of {a} and {b}")))
    }

    /// Element undoing the time-ordered sequence `ids` (first applied first).
    pub fn invert_sequence(&self, ids: &[usize]) -> Result<usize> {
        let mut total = linalg::identity(self.dim());
        for &id in ids {
            let e = self
                .elements
                .get(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown element id {id}")))?;
            total = e.matrix() * total;
        }
        let id = self
            .contains(&total)
            .ok_or_else(|| Error::NotInGroup("sequence product is not in the index".into()))?;
        Ok(self.inverse[id])
    }

    /// `m` uniform draws with replacement plus the inverting element.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<(Vec<usize>, usize)> {
        let ids: Vec<usize> = (0..m).map(|_| rng.random_range(0..self.len())).collect();
        let inv = self.invert_sequence(&ids)?;
        Ok((ids, inv))
    }

    /// Portable text form: a header line, then `id` and 2d² decimals per line.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# clifford-group dim={} size={}", self.dim(), self.len())?;
        for (i, e) in self.elements.iter().enumerate() {
            write!(out, "{i}")?;
            for r in 0..e.dim() {
                for c in 0..e.dim() {
                    let z = e.matrix()[(r, c)];
                    write!(out, " {:.17e} {:.17e}", z.re, z.im)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut elements = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .skip(1)
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1))))
                .collect::<Result<_>>()?;
            let dim = ((nums.len() / 2) as f64).sqrt().round() as usize;
            if dim == 0 || 2 * dim * dim != nums.len() {
                return Err(Error::Parse(format!("line {}: expected 2d² numbers", n + 1)));
            }
            let m = CMatrix::from_fn(dim, dim, |r, c| {
                let k = 2 * (r * dim + c);
                C64::new(nums[k], nums[k + 1])
            });
            elements.push(Unitary::new(m)?);
        }
        if elements.is_empty() {
            return Err(Error::Parse("no group elements found".into()));
        }
        Self::from_elements(elements)
    }
}

/// Breadth-first closure of the generators under left multiplication.
pub fn generate_group(generators: &[Unitary]) -> Result<CliffordGroup> {
    generate_group_capped(generators, GROUP_CAP)
}

pub fn generate_group_capped(generators: &[Unitary], cap: usize) -> Result<CliffordGroup> {
    let dim = generators
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one generator".into()))?
        .dim();
    if let Some(g) = generators.iter().find(|g| g.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: g.dim(),
        });
    }
    let id = Unitary::identity(dim);
    let mut seen: HashSet<Key> = HashSet::from([key_of(id.matrix())]);
    let mut elements = vec![id];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for g in generators {
            let prod = g * &elements[i];
            let canon = prod.canonical();
            if seen.insert(key_of(canon.matrix())) {
                if elements.len() >= cap {
                    return Err(Error::GroupTooLarge { cap });
                }
                elements.push(canon);
                queue.push_back(elements.len() - 1);
            }
        }
    }
    CliffordGroup::from_elements(elements)
}

/// `{H₄, Z₄, S₄}`.
pub fn ququart_generators() -> Vec<Unitary> {
    ["H4", "Z4", "S4"].iter().map(|n| standard_gate(n).expect("built-in gate")).collect()
}

/// `{H⊗𝟙, 𝟙⊗H, S⊗𝟙, 𝟙⊗S, CX}` in the ququart encoding.
pub fn two_qubit_generators() -> Vec<Unitary> {
    ["HxI", "IxH", "SxI", "IxS", "CX(0,1)"]
        .iter()
        .map(|n| standard_gate(n).expect("built-in gate"))
        .collect()
}

pub fn ququart_clifford_group() -> Result<CliffordGroup> {
    generate_group(&ququart_generators())
}

pub fn two_qubit_clifford_group() -> Result<CliffordGroup> {
    generate_group(&two_qubit_generators())
}

/// Generators of the generalized Pauli group of a ququart.
pub fn ququart_paulis() -> Vec<Unitary> {
    ["X4", "Z4"].iter().map(|n| standard_gate(n).expect("built-in gate")).collect()
}

/// Generators of the encoded two-qubit Pauli group.
pub fn two_qubit_paulis() -> Vec<Unitary> {
    ["XxI", "ZxI", "IxX", "IxZ"]
        .iter()
        .map(|n| standard_gate(n).expect("built-in gate"))
        .collect()
}

/// Whether every element maps each Pauli generator into the Pauli group
/// (up to phase) under conjugation.
pub fn normalizer_check(group: &CliffordGroup, paulis: &[Unitary]) -> Result<bool> {
    let pauli_group = generate_group(paulis)?;
    for c in group.elements() {
        for p in paulis {
            let conj = c.matrix() * p.matrix() * c.matrix().adjoint();
            if pauli_group.contains(&conj).is_none() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
