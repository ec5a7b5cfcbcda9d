// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Transmon ququart model: spectrum, drive calibration, coherence and the
//! native-gate duration rule.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};

/// Calibrated device parameters. Frequencies in rad/s, times in seconds,
/// drive responses in MHz per AWG unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub name: String,
    pub omega: [f64; 3],
    pub drive_response: [f64; 3],
    pub t1: [f64; 3],
    pub t_ramsey: [f64; 3],
    pub levels: usize,
    pub ramp_sigma: f64,
}

/// On-disk preset layout with explicit units in every key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePreset {
    #[serde(default)]
    pub name: Option<String>,
    pub omega_ghz: [f64; 3],
    pub r_mhz_per_awg: [f64; 3],
    pub t1_us: [f64; 3],
    pub t_ramsey_us: [f64; 3],
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_sigma_ns")]
    pub ramp_sigma_ns: f64,
}

fn default_levels() -> usize {
    5
}

fn default_sigma_ns() -> f64 {
    2.5
}

/// Which closed form of the native duration to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DurationForm {
    /// Plateau plus the exact Gaussian-edge correction.
    #[default]
    Exact,
    /// Rabi time plus a flat 4 ns.
    Approximate,
}

impl DeviceModel {
    /// The characterized device: three transitions near 3 GHz, 5 simulated levels.
    pub fn reference_device() -> Self {
        Self::from_preset(&DevicePreset {
            name: Some("reference-device".into()),
            omega_ghz: [3.2222, 3.1021, 2.9717],
            r_mhz_per_awg: [5.5528, 5.6712, 1.6749],
            t1_us: [22.62, 25.96, 10.19],
            t_ramsey_us: [40.60, 42.32, 2.68],
            levels: 5,
            ramp_sigma_ns: 2.5,
        })
        .expect("built-in preset is valid")
    }

    /// Looks up a built-in preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "reference-device" | "reference" => Ok(Self::reference_device()),
            other => Err(Error::InvalidParameter(format!("unknown device preset `{other}`"))),
        }
    }

    pub fn from_preset(p: &DevicePreset) -> Result<Self> {
        let dev = Self {
            name: p.name.clone().unwrap_or_else(|| "custom".into()),
            omega: p.omega_ghz.map(|f| TAU * f * 1e9),
            drive_response: p.r_mhz_per_awg,
            t1: p.t1_us.map(|t| t * 1e-6),
            t_ramsey: p.t_ramsey_us.map(|t| t * 1e-6),
            levels: p.levels,
            ramp_sigma: p.ramp_sigma_ns * 1e-9,
        };
        dev.validate()?;
        Ok(dev)
    }

    pub fn to_preset(&self) -> DevicePreset {
        DevicePreset {
            name: Some(self.name.clone()),
            omega_ghz: self.omega.map(|w| w / TAU * 1e-9),
            r_mhz_per_awg: self.drive_response,
            t1_us: self.t1.map(|t| t * 1e6),
            t_ramsey_us: self.t_ramsey.map(|t| t * 1e6),
            levels: self.levels,
            ramp_sigma_ns: self.ramp_sigma * 1e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.omega[0] > self.omega[1] && self.omega[1] > self.omega[2]) {
            return bad("transition frequencies must decrease (ω₁ > ω₂ > ω₃)".into());
        }
        if self.drive_response.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad("drive responses must be positive".into());
        }
        if self.t1.iter().chain(&self.t_ramsey).any(|&t| !(t > 0.0)) {
            return bad("coherence times must be positive".into());
        }
        if self.levels < 4 || self.levels > 8 {
            return bad(format!("levels must be in 4..=8, got {}", self.levels));
        }
        if !(self.ramp_sigma > 0.0) {
            return bad("ramp sigma must be positive".into());
        }
        Ok(())
    }

    /// Same device simulated with a different truncation.
    pub fn with_levels(&self, levels: usize) -> Result<Self> {
        let dev = Self {
            levels,
            ..self.clone()
        };
        dev.validate()?;
        Ok(dev)
    }

    /// `ξ = ω₃ − ω₂` (rad/s); negative for a transmon.
    pub fn anharmonicity(&self) -> f64 {
        self.omega[2] - self.omega[1]
    }

    /// Peak on-chip drive amplitude for subspace `j` at 1 AWG, in rad/s.
    pub fn max_drive(&self, j: usize) -> Result<f64> {
        check_subspace(j)?;
        Ok(TAU * self.drive_response[j - 1] * 1e6)
    }

    /// Pure-dephasing rates `1/T_φ = 1/T_R − 1/(2T₁)`, clamped at zero.
    pub fn dephasing_rates(&self) -> [f64; 3] {
        std::array::from_fn(|k| (1.0 / self.t_ramsey[k] - 0.5 / self.t1[k]).max(0.0))
    }

    pub fn decay_rates(&self) -> [f64; 3] {
        self.t1.map(|t| 1.0 / t)
    }

    /// Area of the two Gaussian edges in units of the peak amplitude,
    /// `√(2π)·erf(√2)·σ`.
    pub fn edge_area(&self) -> f64 {
        (2.0 * PI).sqrt() * libm::erf(2f64.sqrt()) * self.ramp_sigma
    }
}

fn check_subspace(j: usize) -> Result<()> {
    if (1..=3).contains(&j) {
        Ok(())
    } else {
        Err(Error::InvalidSubspace(j))
    }
}

/// Level energies `ε_n` (rad/s) with `ε₀ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub epsilon: Vec<f64>,
}

impl Spectrum {
    pub fn levels(&self) -> usize {
        self.epsilon.len()
    }

    /// Frequency of the `n → n+1` transition.
    pub fn transition(&self, n: usize) -> f64 {
        self.epsilon[n + 1] - self.epsilon[n]
    }
}

/// Cumulative transition sums up to level 3, quadratic extrapolation above.
pub fn build_spectrum(dev: &DeviceModel) -> Spectrum {
    let xi = dev.anharmonicity();
    let mut eps = vec![0.0; dev.levels.max(4)];
    for n in 1..=3 {
        eps[n] = eps[n - 1] + dev.omega[n - 1];
    }
    for n in 4..eps.len() {
        let k = (n - 3) as f64;
        eps[n] = eps[3] + k * dev.omega[2] + 0.5 * ((n - 2) * (n - 3)) as f64 * xi;
    }
    Spectrum { epsilon: eps }
}

/// `H₀ = diag(ε₀, …, ε_{d̃−1})`.
pub fn drift_hamiltonian(spec: &Spectrum) -> CMatrix {
    let d = spec.levels();
    CMatrix::from_fn(d, d, |r, c| {
        if r == c {
            C64::new(spec.epsilon[r], 0.0)
        } else {
            ZERO
        }
    })
}

/// Returns `(−i(a − a†), a + a†)` truncated to `dtilde` levels.
pub fn control_operators(dtilde: usize) -> (CMatrix, CMatrix) {
    let mut y = CMatrix::zeros(dtilde, dtilde);
    let mut x = CMatrix::zeros(dtilde, dtilde);
    for n in 0..dtilde.saturating_sub(1) {
        let s = ((n + 1) as f64).sqrt();
        // a|n+1⟩ = √(n+1)|n⟩
        y[(n, n + 1)] = C64::new(0.0, -s);
        y[(n + 1, n)] = C64::new(0.0, s);
        x[(n, n + 1)] = C64::new(s, 0.0);
        x[(n + 1, n)] = C64::new(s, 0.0);
    }
    (y, x)
}

/// Number operator `n̂` on `dtilde` levels.
pub fn number_operator(dtilde: usize) -> CMatrix {
    CMatrix::from_fn(dtilde, dtilde, |r, c| {
        if r == c {
            C64::new(r as f64, 0.0)
        } else {
            ZERO
        }
    })
}

/// Duration (s) of a native Gaussian flat-top rotation by `theta` on subspace `j`.
/// Zero-angle rotations are skipped and take no time.
pub fn native_gate_duration(dev: &DeviceModel, j: usize, theta: f64, form: DurationForm) -> Result<f64> {
    check_subspace(j)?;
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("rotation angle must be ≥ 0, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let rabi = theta / (TAU * (j as f64).sqrt() * dev.drive_response[j - 1] * 1e6);
    Ok(match form {
        Exact => rabi - dev.edge_area() + 4.0 * dev.ramp_sigma,
        Approximate => rabi + 4e-9,
    })
}

use DurationForm::{Approximate, Exact};

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn spectrum_of_characterized_device() {
        let dev = DeviceModel::reference_device();
        let s = build_spectrum(&dev);
        assert_relative_eq!(s.epsilon[3] / TAU * 1e-9, 9.2960, epsilon = 1e-9);
        assert_relative_eq!(s.epsilon[4] / TAU * 1e-9, 12.1373, epsilon = 1e-9);
        assert_relative_eq!(dev.anharmonicity() / TAU * 1e-6, -130.4, epsilon = 1e-6);
        for j in 0..3 {
            assert_relative_eq!(s.transition(j), dev.omega[j], max_relative = 1e-15);
        }
    }

    #[test]
    fn harmonic_spectrum_is_linear() {
        let mut dev = DeviceModel::reference_device();
        let w = TAU * 3e9;
        dev.omega = [w; 3];
        dev.levels = 7;
        let s = build_spectrum(&dev);
        for (n, e) in s.epsilon.iter().enumerate() {
            assert_relative_eq!(*e, n as f64 * w, max_relative = 1e-14);
        }
    }

    #[test]
    fn drift_is_diagonal_and_commutes_with_number() {
        let s = build_spectrum(&DeviceModel::reference_device());
        let h0 = drift_hamiltonian(&s);
        for n in 0..5 {
            assert_eq!(h0[(n, n)].re, s.epsilon[n]);
        }
        let n = number_operator(5);
        assert!((&h0 * &n - &n * &h0).norm() == 0.0);
        let zero = drift_hamiltonian(&Spectrum { epsilon: vec![0.0; 5] });
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn control_operators_structure() {
        let (y, x) = control_operators(2);
        assert_eq!(y[(0, 1)], C64::new(0.0, -1.0));
        assert_eq!(y[(1, 0)], C64::new(0.0, 1.0));
        assert_eq!(x[(0, 1)], C64::new(1.0, 0.0));
        let (y, x) = control_operators(5);
        for n in 0..4 {
            let s = ((n + 1) as f64).sqrt();
            assert_relative_eq!(x[(n, n + 1)].re, s);
            assert_relative_eq!(y[(n + 1, n)].im, s);
        }
        for m in [&x, &y] {
            assert!(crate::linalg::is_hermitian(m, 0.0));
            assert!(m.diagonal().iter().all(|z| *z == ZERO));
        }
    }

    #[test]
    fn native_durations() {
        let dev = DeviceModel::reference_device();
        let t1 = native_gate_duration(&dev, 1, PI, Approximate).unwrap();
        assert!((t1 * 1e9 - 94.0).abs() < 0.2, "{}", t1 * 1e9);
        let t3 = native_gate_duration(&dev, 3, PI, Approximate).unwrap();
        assert!((t3 * 1e9 - 176.0).abs() < 0.5, "{}", t3 * 1e9);
        let t3e = native_gate_duration(&dev, 3, PI, Exact).unwrap();
        assert!((t3e * 1e9 - 176.37).abs() < 0.01, "{}", t3e * 1e9);
        assert_eq!(native_gate_duration(&dev, 2, 0.0, Exact).unwrap(), 0.0);
        assert!(matches!(
            native_gate_duration(&dev, 4, 1.0, Exact),
            Err(Error::InvalidSubspace(4))
        ));
    }

    #[test]
    fn edge_constant_close_to_four_ns() {
        let dev = DeviceModel::reference_device();
        let extra = 4.0 * dev.ramp_sigma - dev.edge_area();
        assert!((extra * 1e9 - 4.018).abs() < 1e-3);
    }

    #[test]
    fn dephasing_rates_follow_ramsey_relation() {
        let dev = DeviceModel::reference_device();
        let g = dev.dephasing_rates();
        assert_relative_eq!(g[2], 1.0 / 2.68e-6 - 0.5 / 10.19e-6, max_relative = 1e-12);
        let mut fast = dev.clone();
        fast.t_ramsey = [100e-6; 3];
        fast.t1 = [10e-6; 3];
        assert_eq!(fast.dephasing_rates(), [0.0; 3]);
    }

    #[test]
    fn preset_round_trip_and_validation() {
        let dev = DeviceModel::reference_device();
        let back = DeviceModel::from_preset(&dev.to_preset()).unwrap();
        for k in 0..3 {
            assert_relative_eq!(back.omega[k], dev.omega[k], max_relative = 1e-14);
            assert_relative_eq!(back.t1[k], dev.t1[k], max_relative = 1e-14);
        }
        let mut p = dev.to_preset();
        p.omega_ghz = [2.9, 3.0, 3.1];
        assert!(DeviceModel::from_preset(&p).is_err());
        assert!(DeviceModel::preset("nope").is_err());
    }

    proptest! {
        #[test]
        fn duration_is_affine_and_increasing(j in 1usize..=3, a in 0.01f64..6.0, b in 0.01f64..6.0) {
            let dev = DeviceModel::reference_device();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            let tl = native_gate_duration(&dev, j, lo, Exact).unwrap();
            let th = native_gate_duration(&dev, j, hi, Exact).unwrap();
            prop_assert!(th > tl);
            let tm = native_gate_duration(&dev, j, 0.5 * (lo + hi), Exact).unwrap();
            prop_assert!((tm - 0.5 * (tl + th)).abs() < 1e-18);
        }
    }
}
