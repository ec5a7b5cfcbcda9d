// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::f64::consts::PI;

use ququart::decompose::DecompositionParams;
use ququart::gates::standard_gate;
use ququart::Unitary;

const P: f64 = PI;
pub const T1: f64 = 2.09440;
pub const T2: f64 = 1.91063;
pub const T3: f64 = 1.31812;
pub const P1: f64 = 5.17604;
pub const P2: f64 = 5.03414;

/// Reference native sequences: (label, gate name, parameters, duration in ns).
pub fn reference_sequences() -> Vec<(&'static str, &'static str, DecompositionParams, f64)> {
    vec![
        (
            "H4",
            "H4",
            DecompositionParams::new(
                [P / 2.0, T2, T3, T1, T2, P / 2.0],
                [[1.5 * P, 0.0, 0.0], [P1, 1.5 * P, 0.0], [P1, P2, 1.5 * P], [P / 2.0, P / 2.0, P / 2.0]],
            ),
            343.0,
        ),
        (
            "HxH",
            "HxH",
            DecompositionParams::new(
                [P / 2.0, T2, T1, T1, T2, P / 2.0],
                [[P, 0.0, 0.0], [P, 0.0, 0.0], [P, P, P], [0.0, P, 0.0]],
            ),
            365.0,
        ),
        (
            "IxH",
            "IxH",
            DecompositionParams::new(
                [P / 2.0, 0.0, 0.0, P / 2.0, 0.0, 0.0],
                [[P, 0.0, 0.0], [0.0; 3], [P / 2.0, P / 2.0, P], [1.5 * P, P / 2.0, 0.0]],
            ),
            139.0,
        ),
        (
            "HxI",
            "HxI",
            DecompositionParams::new(
                [0.0, P, P / 2.0, P / 2.0, P, 0.0],
                [[0.0; 3], [P, P, 0.0], [0.0, P, 0.0], [P, P, 0.0]],
            ),
            272.0,
        ),
        (
            "CX(c=q0,t=q1)",
            "CX(0,1)",
            DecompositionParams::new([0.0, 0.0, 0.0, P, 0.0, 0.0], [[0.0; 3], [0.0; 3], [0.0, 0.0, P], [0.0; 3]]),
            176.0,
        ),
        (
            "CX(c=q1,t=q0)",
            "CX(1,0)",
            DecompositionParams::new(
                [0.0, P, 0.0, P, P, 0.0],
                [[0.0; 3], [P, 1.5 * P, 0.0], [P, P, P / 2.0], [P, P / 2.0, 1.5 * P]],
            ),
            309.0,
        ),
    ]
}

pub fn reference(label: &str) -> (Unitary, DecompositionParams) {
    let (_, name, p, _) = reference_sequences()
        .into_iter()
        .find(|(l, ..)| *l == label)
        .expect("known label");
    (standard_gate(name).unwrap(), p)
}
