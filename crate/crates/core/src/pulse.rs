// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Control envelopes: clamped quadratic B-splines for optimized pulses and
//! Gaussian flat-top shapes for native rotations.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::device::DeviceModel;
use crate::error::{Error, Result};
use crate::gates::PhaseVector;

/// Spline spacing used when a program is sized from its duration.
pub const SPLINE_SPACING: f64 = 10e-9;

/// `N_s = ⌊T / 10 ns⌋`, at least 3 so the quadratic basis is well defined.
pub fn n_splines_for(duration: f64) -> usize {
    // nudge against representation error, e.g. 350e-9 / 10e-9 = 34.999…
    ((duration / SPLINE_SPACING) * (1.0 + 1e-12)).floor().max(3.0) as usize
}

/// Clamped uniform quadratic B-spline basis on `[0, T]`.
#[derive(Clone, Debug)]
pub struct SplineBasis {
    pub duration: f64,
    pub n: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(duration: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 splines, got {n}")));
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        let segments = n - 2;
        let mut knots = vec![0.0; 2];
        knots.extend((0..=segments).map(|k| duration * k as f64 / segments as f64));
        knots.extend([duration; 2]);
        Ok(Self { duration, n, knots })
    }

    /// Index of the first nonzero basis function at `t` and the (up to) three values.
    pub fn local(&self, t: f64) -> (usize, [f64; 3]) {
        let segments = self.n - 2;
        let h = self.duration / segments as f64;
        let seg = ((t / h).floor().max(0.0) as usize).min(segments - 1);
        // knot span index in the padded vector
        let span = seg + 2;
        let k = &self.knots;
        // Cox–de Boor, degree 2, on span [k[span], k[span+1])
        let left = |j: usize| t - k[span + 1 - j];
        let right = |j: usize| k[span + j] - t;
        let mut b = [1.0, 0.0, 0.0];
        for deg in 1..=2 {
            let mut saved = 0.0;
            for r in 0..deg {
                let denom = right(r + 1) + left(deg - r);
                let tmp = if denom != 0.0 { b[r] / denom } else { 0.0 };
                b[r] = saved + right(r + 1) * tmp;
                saved = left(deg - r) * tmp;
            }
            b[deg] = saved;
        }
        (seg, b)
    }

    /// `B_s(t)` for a 0-based index `s`; zero outside `[0, T]`.
    pub fn value(&self, s: usize, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) || s >= self.n {
            return 0.0;
        }
        let (first, b) = self.local(t);
        if s >= first && s < first + 3 {
            b[s - first]
        } else {
            0.0
        }
    }
}

/// `B_s(t)` with 1-based `s`.
pub fn bspline_basis(s: usize, t: f64, duration: f64, n: usize) -> f64 {
    match SplineBasis::new(duration, n) {
        Ok(b) if s >= 1 => b.value(s - 1, t),
        _ => 0.0,
    }
}

/// Spline-parametrized three-tone drive. Coefficients are in MHz of on-chip
/// Rabi rate (not angular), indexed `[subspace][spline]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    pub duration: f64,
    pub n_splines: usize,
    pub coeff_i: [Vec<f64>; 3],
    pub coeff_q: [Vec<f64>; 3],
    pub trailing_phase: PhaseVector,
    pub sample_dt: f64,
}

impl PulseProgram {
    pub fn zeros(duration: f64, sample_dt: f64) -> Result<Self> {
        let n = n_splines_for(duration);
        let p = Self {
            duration,
            n_splines: n,
            coeff_i: std::array::from_fn(|_| vec![0.0; n]),
            coeff_q: std::array::from_fn(|_| vec![0.0; n]),
            trailing_phase: PhaseVector::zero(),
            sample_dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.sample_dt > 0.0 && self.sample_dt <= self.duration) {
            return Err(Error::InvalidParameter("require T > 0 and 0 < Δt ≤ T".into()));
        }
        if self.n_splines < 3 {
            return Err(Error::InvalidParameter("need at least 3 splines".into()));
        }
        for c in self.coeff_i.iter().chain(&self.coeff_q) {
            if c.len() != self.n_splines {
                return Err(Error::DimensionMismatch {
                    expected: self.n_splines,
                    found: c.len(),
                });
            }
        }
        Ok(())
    }

    pub fn basis(&self) -> SplineBasis {
        SplineBasis::new(self.duration, self.n_splines).expect("validated program")
    }

    /// Flattened `[j][s][I, Q]` coefficient vector.
    pub fn flat_coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 * self.n_splines);
        for j in 0..3 {
            for s in 0..self.n_splines {
                out.push(self.coeff_i[j][s]);
                out.push(self.coeff_q[j][s]);
            }
        }
        out
    }

    pub fn set_flat_coefficients(&mut self, x: &[f64]) {
        assert_eq!(x.len(), 6 * self.n_splines);
        for j in 0..3 {
            for s in 0..self.n_splines {
                self.coeff_i[j][s] = x[(j * self.n_splines + s) * 2];
                self.coeff_q[j][s] = x[(j * self.n_splines + s) * 2 + 1];
            }
        }
    }

    /// `(I_j(t), Q_j(t))` in MHz for 1-based subspace `j`.
    pub fn quadratures(&self, j: usize, t: f64) -> (f64, f64) {
        self.quadratures_with(&self.basis(), j, t)
    }

    pub fn quadratures_with(&self, basis: &SplineBasis, j: usize, t: f64) -> (f64, f64) {
        if !(0.0..=self.duration).contains(&t) {
            return (0.0, 0.0);
        }
        let (first, b) = basis.local(t);
        let (ci, cq) = (&self.coeff_i[j - 1], &self.coeff_q[j - 1]);
        let mut out = (0.0, 0.0);
        for k in 0..3 {
            out.0 += ci[first + k] * b[k];
            out.1 += cq[first + k] * b[k];
        }
        out
    }

    /// Amplitude `Γ_j = √(I² + Q²)` in MHz.
    pub fn amplitude(&self, j: usize, t: f64) -> f64 {
        let (i, q) = self.quadratures(j, t);
        i.hypot(q)
    }

    /// Drive phase `atan2(Q, I)`.
    pub fn drive_phase(&self, j: usize, t: f64) -> f64 {
        let (i, q) = self.quadratures(j, t);
        q.atan2(i)
    }
}

/// Lab-frame signal `Re Σ (I_j + iQ_j) e^{iω_j t}` in MHz.
pub fn composite_signal(p: &PulseProgram, dev: &DeviceModel, t: f64) -> f64 {
    let basis = p.basis();
    (1..=3)
        .map(|j| {
            let (i, q) = p.quadratures_with(&basis, j, t);
            let (s, c) = (dev.omega[j - 1] * t).sin_cos();
            i * c - q * s
        })
        .sum()
}

/// Total drive in AWG units, `Σ Γ_j / r_j`.
pub fn awg_load(p: &PulseProgram, dev: &DeviceModel, t: f64) -> f64 {
    let basis = p.basis();
    (1..=3)
        .map(|j| {
            let (i, q) = p.quadratures_with(&basis, j, t);
            i.hypot(q) / dev.drive_response[j - 1]
        })
        .sum()
}

/// Peak AWG load sampled every `dt`.
pub fn max_awg_load(p: &PulseProgram, dev: &DeviceModel, dt: f64) -> f64 {
    sample_times(p.duration, dt)
        .into_iter()
        .map(|t| awg_load(p, dev, t))
        .fold(0.0, f64::max)
}

/// `0, dt, 2dt, …, T` with the end point always included.
pub fn sample_times(duration: f64, dt: f64) -> Vec<f64> {
    let n = (duration / dt * (1.0 - 1e-12)).ceil() as usize;
    (0..=n).map(|k| (k as f64 * dt).min(duration)).collect()
}

/// Gaussian flat-top rotation on one subspace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NativePulse {
    pub subspace: usize,
    pub theta: f64,
    pub phi: f64,
    pub sigma: f64,
    /// Plateau length `τ` (s).
    pub flat_duration: f64,
    /// Peak drive (rad/s).
    pub amplitude: f64,
}

impl NativePulse {
    /// Full-amplitude pulse with plateau length from the calibration rule.
    /// Angles too small for a plateau keep the 4σ shape at reduced amplitude.
    pub fn new(dev: &DeviceModel, subspace: usize, theta: f64, phi: f64) -> Result<Self> {
        let peak = dev.max_drive(subspace)?;
        if !(theta >= 0.0) {
            return Err(Error::InvalidParameter(format!("rotation angle must be ≥ 0, got {theta}")));
        }
        let rate = peak * (subspace as f64).sqrt();
        let sigma = dev.ramp_sigma;
        let edge = dev.edge_area();
        // ∫ envelope = A (τ + edge)
        let tau = theta / rate - edge;
        let (flat_duration, amplitude) = if tau >= 0.0 {
            (tau, peak)
        } else {
            (0.0, peak * (theta / rate) / edge)
        };
        Ok(Self {
            subspace,
            theta,
            phi,
            sigma,
            flat_duration,
            amplitude,
        })
    }

    pub fn duration(&self) -> f64 {
        if self.theta == 0.0 {
            0.0
        } else {
            self.flat_duration + 4.0 * self.sigma
        }
    }

    /// Envelope (rad/s) at local time `t`.
    pub fn envelope(&self, t: f64) -> f64 {
        let total = self.duration();
        if total == 0.0 || !(0.0..=total).contains(&t) {
            return 0.0;
        }
        let rise = 2.0 * self.sigma;
        let fall = total - 2.0 * self.sigma;
        let x = if t < rise {
            t - rise
        } else if t > fall {
            t - fall
        } else {
            0.0
        };
        self.amplitude * (-x * x / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Rotation angle from the analytic envelope area, `√j ∫ envelope`.
    pub fn rotation_angle(&self) -> f64 {
        if self.theta == 0.0 {
            return 0.0;
        }
        let area_edges = (2.0 * PI).sqrt() * libm::erf(2f64.sqrt()) * self.sigma;
        (self.subspace as f64).sqrt() * self.amplitude * (self.flat_duration + area_edges)
    }
}

/// Envelope samples `(t, value)` on a grid of spacing `dt`; empty for θ = 0.
pub fn native_envelope(np: &NativePulse, dt: f64) -> Vec<(f64, f64)> {
    if np.duration() == 0.0 {
        return Vec::new();
    }
    sample_times(np.duration(), dt)
        .into_iter()
        .map(|t| (t, np.envelope(t)))
        .collect()
}

/// Metadata written at the top of a waveform file.
#[derive(Clone, Debug)]
pub struct WaveformHeader<'a> {
    pub duration: f64,
    pub n_splines: usize,
    pub phase: PhaseVector,
    pub device: &'a str,
}

/// Writes `t_ns, I1, Q1, I2, Q2, I3, Q3` rows (MHz) with `#` header lines.
pub fn write_waveform<W: Write>(
    out: &mut W,
    header: &WaveformHeader<'_>,
    rows: &[[f64; 7]],
) -> Result<()> {
    let [a, b, c] = header.phase.components();
    writeln!(out, "# T_ns = {:.6}", header.duration * 1e9)?;
    writeln!(out, "# n_splines = {}", header.n_splines)?;
    writeln!(out, "# phi_rad = {a:.6} {b:.6} {c:.6}")?;
    writeln!(out, "# device = {}", header.device)?;
    writeln!(out, "t_ns,I1,Q1,I2,Q2,I3,Q3")?;
    for r in rows {
        writeln!(
            out,
            "{:.4},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            r[0], r[1], r[2], r[3], r[4], r[5], r[6]
        )?;
    }
    Ok(())
}

/// Samples a spline program for export (time in ns, amplitudes in MHz).
pub fn program_rows(p: &PulseProgram, dt: f64) -> Vec<[f64; 7]> {
    let basis = p.basis();
    sample_times(p.duration, dt)
        .into_iter()
        .map(|t| {
            let mut row = [t * 1e9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
            for j in 1..=3 {
                let (i, q) = p.quadratures_with(&basis, j, t);
                row[2 * j - 1] = i;
                row[2 * j] = q;
            }
            row
        })
        .collect()
}

/// Samples a native sequence with virtual phases folded into the carrier
/// phases, as an AWG would play it. The trailing frame update is returned.
pub fn native_rows(
    params: &crate::decompose::DecompositionParams,
    dev: &DeviceModel,
    dt: f64,
) -> Result<(Vec<[f64; 7]>, PhaseVector)> {
    use crate::decompose::NativeOp;
    let mut frame = PhaseVector::zero();
    let mut rows = Vec::new();
    let mut t0 = 0.0;
    for op in params.schedule() {
        match op {
            NativeOp::Virtual(phi) => frame = frame + phi,
            NativeOp::Rotation { subspace, theta } => {
                if theta == 0.0 {
                    continue;
                }
                let phase = frame.components()[subspace - 1];
                let np = NativePulse::new(dev, subspace, theta, phase)?;
                for (t, env) in native_envelope(&np, dt) {
                    let mhz = env / TAU * 1e-6;
                    let mut row = [(t0 + t) * 1e9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
                    row[2 * subspace - 1] = mhz * phase.cos();
                    row[2 * subspace] = mhz * phase.sin();
                    rows.push(row);
                }
                t0 += np.duration();
            }
        }
    }
    Ok((rows, frame))
}
