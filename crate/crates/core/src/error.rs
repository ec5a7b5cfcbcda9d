// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::decompose::DecompositionReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown gate `{0}`; expected one of X4, Z4, H4, S4, I4, H, S, X, Y, Z, I, CX(c,t), SWAP or a product such as HxH")]
    UnknownGate(String),

    #[error("subspace index {0} out of range (expected 1, 2 or 3)")]
    InvalidSubspace(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not unitary (‖U†U − 1‖ = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no feasible decomposition after {batches} batches (best infidelity {:.3e})", best.infidelity)]
    DecompositionInfeasible {
        batches: usize,
        best: Box<DecompositionReport>,
    },

    #[error("time step {dt:.3e} s too coarse (unitarity drift or per-step phase {drift:.3e}); reduce dt")]
    StepTooCoarse { dt: f64, drift: f64 },

    #[error("trace deviation {deviation:.3e} exceeds 1e-6 during Lindblad propagation")]
    TraceDeviation { deviation: f64 },

    #[error("group closure exceeded the safety cap of {cap} elements")]
    GroupTooLarge { cap: usize },

    #[error("element not found in group index: {0}")]
    NotInGroup(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("sequence {index} at depth {depth}: {source}")]
    Sequence {
        depth: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
