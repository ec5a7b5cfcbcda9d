// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! Run directories, manifests and the small text formats the CLI reads.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use ququart::decompose::DecompositionParams;
use ququart::device::DevicePreset;
use ququart::linalg::CMatrix;
use ququart::optctrl::ControlResult;
use ququart::{DeviceModel, Unitary};
use serde::{Deserialize, Serialize};

/// Parses a time with an optional unit suffix (`ns`, `us`, `µs`, `ms`, `s`).
/// A bare number is taken as nanoseconds.
pub fn parse_time(s: &str) -> Result<f64> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_ascii_alphabetic() || c == 'µ')
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let v: f64 = num.trim().parse().with_context(|| format!("bad time value `{s}`"))?;
    let scale = match unit.trim() {
        "" | "ns" => 1e-9,
        "us" | "µs" => 1e-6,
        "ms" => 1e-3,
        "s" => 1.0,
        u => bail!("unknown time unit `{u}` in `{s}`"),
    };
    Ok(v * scale)
}

/// `start:stop:step` with a shared unit suffix, e.g. `300:450:10ns`.
pub fn parse_scan(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("scan must look like start:stop:step[unit], got `{s}`");
    }
    let unit: String = parts[2].chars().filter(|c| c.is_ascii_alphabetic() || *c == 'µ').collect();
    let with_unit = |p: &str| {
        if p.chars().any(|c| c.is_ascii_alphabetic()) {
            parse_time(p)
        } else {
            parse_time(&format!("{p}{unit}"))
        }
    };
    let (a, b, step) = (with_unit(parts[0])?, with_unit(parts[1])?, with_unit(parts[2])?);
    if !(step > 0.0) || b < a {
        bail!("scan `{s}` is empty");
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

/// Built-in preset name or a TOML file with unit-suffixed keys.
pub fn load_device(spec: &str) -> Result<DeviceModel> {
    if let Ok(dev) = DeviceModel::preset(spec) {
        return Ok(dev);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("`{spec}` is neither a preset nor a readable file"))?;
    let preset: DevicePreset = toml::from_str(&text).with_context(|| format!("parsing device file `{spec}`"))?;
    Ok(DeviceModel::from_preset(&preset)?)
}

/// Reads a 4×4 matrix: four lines of `re im` pairs, `#` comments allowed.
pub fn read_matrix(path: &Path) -> Result<Unitary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| anyhow!("bad number `{t}`: {e}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != 2 * n) {
        bail!("{}: expected {n} rows of {} numbers (re im pairs)", path.display(), 2 * n);
    }
    let m = CMatrix::from_fn(n, n, |r, c| Complex64::new(rows[r][2 * c], rows[r][2 * c + 1]));
    Ok(Unitary::new(m)?)
}

pub fn write_matrix(path: &Path, u: &CMatrix) -> Result<()> {
    let mut s = String::new();
    for r in 0..u.nrows() {
        let row: Vec<String> = (0..u.ncols())
            .map(|c| format!("{:.15e} {:.15e}", u[(r, c)].re, u[(r, c)].im))
            .collect();
        s.push_str(&row.join("  "));
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Row-major `[re, im]` pairs for JSON.
pub fn matrix_to_json(u: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..u.nrows())
        .map(|r| (0..u.ncols()).map(|c| [u[(r, c)].re, u[(r, c)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<Unitary> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("matrix must be square");
    }
    Ok(Unitary::new(CMatrix::from_fn(n, n, |r, c| {
        Complex64::new(rows[r][c][0], rows[r][c][1])
    }))?)
}

/// Decomposition artifact: target plus native parameters.
#[derive(Serialize, Deserialize)]
pub struct SequenceFile {
    pub target: String,
    pub matrix: Vec<Vec<[f64; 2]>>,
    pub params: DecompositionParams,
    pub infidelity: f64,
    pub duration_ns: f64,
    pub duration_estimate_ns: f64,
    pub smooth_duration: f64,
    pub batches_used: usize,
}

/// Optimal-control artifact: target plus the optimized program.
#[derive(Serialize, Deserialize)]
pub struct PulseFile {
    pub target: String,
    pub matrix: Vec<Vec<[f64; 2]>>,
    pub duration_ns: f64,
    pub trailing_phase_free: bool,
    pub result: ControlResult,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Output directory for one run, collecting the files it writes.
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes `manifest.json`; only `created_unix` varies between identical runs.
    pub fn finish(self, command: &str, succeeded: bool, seed: u64, device: &DeviceModel, args: &[String]) -> Result<()> {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = serde_json::json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "succeeded": succeeded,
            "arguments": args,
            "seed": seed,
            "device": device.to_preset(),
            "outputs": self.outputs,
            "created_unix": created,
        });
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let p = self.root.join("manifest.json");
        fs::write(&p, s).with_context(|| format!("writing {}", p.display()))
    }
}
