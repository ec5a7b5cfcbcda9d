// Copyright 2026 The Ququart Developers
// SPDX-License-Identifier: Apache-2.0

//! `ququart` — decomposition, pulse optimization, simulation and
//! benchmarking of a transmon ququart from the command line.

mod artifacts;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ququart::benchmark::{self, Backend, Benchmark, GroupTag, Interleaved, NoisyBackend, RbConfig, RbDataset};
use ququart::clifford;
use ququart::decompose::{self, DecomposeConfig, DecompositionParams};
use ququart::gates::standard_gate;
use ququart::optctrl::{self, ControlProblem, ControlResult};
use ququart::pulse::{self, PulseProgram, WaveformHeader};
use ququart::sim::{self, Channel, DephasingModel, Drive, NoiseSpec};
use ququart::tomography::{self, BasisTag, MeasModel, ProcessMatrix};
use ququart::{DeviceModel, Error, Unitary};

use artifacts::{
    load_device, matrix_from_json, matrix_to_json, parse_scan, parse_time, read_json, read_matrix, write_matrix,
    PulseFile, RunDir, SequenceFile,
};

#[derive(Parser)]
#[command(name = "ququart", version, about = "Pulse-level control toolkit for a transmon ququart")]
struct Cli {
    /// Device preset name or TOML file with unit-suffixed keys.
    #[arg(long, global = true, default_value = "reference-device")]
    device: String,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "ququart-run")]
    out: PathBuf,
    /// Integration time step, e.g. `0.01ns` (command-specific default).
    #[arg(long, global = true)]
    dt: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a 4×4 unitary into native rotations and virtual phases.
    Decompose(DecomposeArgs),
    /// Optimize a spline pulse for a gate at a fixed duration or over a scan.
    Optimize(OptimizeArgs),
    /// Simulate a decomposed sequence or optimized pulse, with or without noise.
    Simulate(SimulateArgs),
    /// Randomized benchmarking.
    Rb(RbArgs),
    /// Interleaved randomized benchmarking of one gate.
    Irb(IrbArgs),
    /// Simulated quantum process tomography.
    Qpt(QptArgs),
    /// Generate and export a Clifford group.
    Group(GroupArgs),
    /// Sample a sequence or pulse program as I/Q waveforms.
    ExportWaveform(ExportArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Named gate: X4, Z4, H4, S4, I4, HxH, CX(0,1), SWAP, ...
    #[arg(long, conflicts_with = "matrix")]
    gate: Option<String>,
    /// Text file with four rows of `re im` pairs.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

impl TargetArgs {
    fn resolve(&self) -> Result<(String, Unitary)> {
        match (&self.gate, &self.matrix) {
            (Some(g), _) => Ok((g.clone(), standard_gate(g)?)),
            (None, Some(m)) => Ok((m.display().to_string(), read_matrix(m)?)),
            (None, None) => bail!("give a target with --gate or --matrix"),
        }
    }
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Also write the native I/Q waveform.
    #[arg(long)]
    waveform: bool,
    #[arg(long, default_value = "1ns")]
    sample_dt: String,
    #[arg(long, default_value_t = 50)]
    max_batches: usize,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Gate duration, e.g. `350ns`.
    #[arg(long = "T", conflicts_with = "scan")]
    duration: Option<String>,
    /// Duration scan `start:stop:step`, e.g. `300:450:10ns`.
    #[arg(long)]
    scan: Option<String>,
    /// Optimize the trailing virtual-Z phases (default).
    #[arg(long, overrides_with = "no_vz")]
    vz: bool,
    /// Fix the trailing phases to zero.
    #[arg(long)]
    no_vz: bool,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 4000)]
    max_iter: usize,
    #[arg(long, default_value = "1ns")]
    sample_dt: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    None,
    /// Relaxation and dephasing from the device T1 and Ramsey times.
    Device,
}

#[derive(Clone, Copy, ValueEnum)]
enum DephasingArg {
    Subspace,
    PerLevel,
}

#[derive(Args)]
struct SourceArgs {
    /// Decomposition file written by `decompose`.
    #[arg(long, conflicts_with_all = ["pulse", "gate"])]
    sequence: Option<PathBuf>,
    /// Control file written by `optimize`.
    #[arg(long, conflicts_with = "gate")]
    pulse: Option<PathBuf>,
    /// Named gate, decomposed on the fly.
    #[arg(long)]
    gate: Option<String>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value = "none")]
    noise: NoiseArg,
    #[arg(long, value_enum, default_value = "subspace")]
    dephasing: DephasingArg,
}

impl NoiseArgs {
    fn spec(&self, dev: &DeviceModel) -> Option<NoiseSpec> {
        let model = match self.dephasing {
            DephasingArg::Subspace => DephasingModel::Subspace,
            DephasingArg::PerLevel => DephasingModel::PerLevel,
        };
        match self.noise {
            NoiseArg::None => None,
            NoiseArg::Device => Some(NoiseSpec::from_device(dev).with_model(model)),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Also write the level populations over time for this initial level.
    #[arg(long)]
    populations: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Ideal,
    Depolarizing,
    Decomposed,
}

#[derive(Args)]
struct RbArgs {
    /// C4 or C2x2.
    #[arg(long, default_value = "C4")]
    group: String,
    #[arg(long, value_enum, default_value = "decomposed")]
    backend: BackendArg,
    /// Per-Clifford depolarizing parameter for `--backend depolarizing`.
    #[arg(long, default_value_t = 0.99)]
    q: f64,
    /// Comma-separated depths.
    #[arg(long, default_value = "1,2,4,8,16,32,64,100")]
    depths: String,
    #[arg(long, default_value_t = 20)]
    sequences: usize,
    /// Finite-shot readout; exact probabilities if omitted.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, value_enum, default_value = "subspace")]
    dephasing: DephasingArg,
}

#[derive(Args)]
struct IrbArgs {
    #[command(flatten)]
    rb: RbArgs,
    /// Interleaved gate (must be in the group).
    #[arg(long)]
    gate: String,
    /// Optimized pulse realizing the gate instead of its decomposition.
    #[arg(long)]
    pulse: Option<PathBuf>,
}

#[derive(Args)]
struct QptArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Operator basis of the χ matrix: ququart or two-qubit.
    #[arg(long, default_value = "ququart")]
    basis: String,
    #[arg(long)]
    shots: Option<u64>,
    /// Synthetic neighbour-misassignment probability of the readout.
    #[arg(long, default_value_t = 0.0)]
    readout_error: f64,
}

#[derive(Args)]
struct GroupArgs {
    /// C4 or C2x2.
    #[arg(long, default_value = "C4")]
    tag: String,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, conflicts_with = "pulse")]
    sequence: Option<PathBuf>,
    #[arg(long)]
    pulse: Option<PathBuf>,
    #[arg(long, default_value = "1ns")]
    sample_dt: String,
}

struct Ctx {
    device: DeviceModel,
    seed: u64,
    dt: Option<f64>,
    args: Vec<String>,
}

impl Ctx {
    fn dt_or(&self, default: f64) -> f64 {
        self.dt.unwrap_or(default)
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli, std::env::args().skip(1).collect()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let ctx = Ctx {
        device: load_device(&cli.device)?,
        seed: cli.seed,
        dt: cli.dt.as_deref().map(parse_time).transpose()?,
        args,
    };
    if let Some(dt) = ctx.dt {
        if !(dt > 0.0) {
            bail!("--dt must be positive");
        }
    }
    let mut dir = RunDir::create(&cli.out)?;
    let (name, outcome) = match &cli.command {
        Command::Decompose(a) => ("decompose", cmd_decompose(&ctx, a, &mut dir)),
        Command::Optimize(a) => ("optimize", cmd_optimize(&ctx, a, &mut dir)),
        Command::Simulate(a) => ("simulate", cmd_simulate(&ctx, a, &mut dir)),
        Command::Rb(a) => ("rb", cmd_rb(&ctx, a, &mut dir)),
        Command::Irb(a) => ("irb", cmd_irb(&ctx, a, &mut dir)),
        Command::Qpt(a) => ("qpt", cmd_qpt(&ctx, a, &mut dir)),
        Command::Group(a) => ("group", cmd_group(a, &mut dir)),
        Command::ExportWaveform(a) => ("export-waveform", cmd_export(&ctx, a, &mut dir)),
    };
    // written even on failure so partial runs stay traceable
    dir.finish(name, outcome.is_ok(), ctx.seed, &ctx.device, &ctx.args)?;
    outcome
}

fn sequence_file(label: &str, target: &Unitary, report: &decompose::DecompositionReport) -> SequenceFile {
    SequenceFile {
        target: label.to_string(),
        matrix: matrix_to_json(target.matrix()),
        params: report.params.clone(),
        infidelity: report.infidelity,
        duration_ns: report.duration_exact * 1e9,
        duration_estimate_ns: report.duration_est * 1e9,
        smooth_duration: report.smooth_duration,
        batches_used: report.batches_used,
    }
}

fn cmd_decompose(ctx: &Ctx, a: &DecomposeArgs, dir: &mut RunDir) -> Result<()> {
    let (label, target) = a.target.resolve()?;
    let cfg = DecomposeConfig {
        seed: ctx.seed,
        max_batches: a.max_batches,
        ..DecomposeConfig::default()
    };
    let report = match decompose::decompose(&target, &ctx.device, &cfg) {
        Ok(r) => r,
        Err(Error::DecompositionInfeasible { batches, best }) => {
            dir.write_json("decomposition_best.json", &sequence_file(&label, &target, &best))?;
            bail!(
                "no feasible decomposition of {label} after {batches} batches (best infidelity {:.3e})",
                best.infidelity
            );
        }
        Err(e) => return Err(e.into()),
    };
    dir.write_json("decomposition.json", &sequence_file(&label, &target, &report))?;
    if a.waveform {
        let (rows, frame) = pulse::native_rows(&report.params, &ctx.device, parse_time(&a.sample_dt)?)?;
        let header = WaveformHeader {
            duration: report.duration_exact,
            n_splines: 0,
            phase: frame,
            device: &ctx.device.name,
        };
        let mut buf = Vec::new();
        pulse::write_waveform(&mut buf, &header, &rows)?;
        dir.write("waveform.csv", &buf)?;
    }
    let rotations = report.params.theta.iter().filter(|t| **t > 0.0).count();
    println!(
        "{label}: {rotations} rotations, T = {:.1} ns, infidelity {:.2e}",
        report.duration_exact * 1e9,
        report.infidelity
    );
    Ok(())
}

fn pulse_file(label: &str, target: &Unitary, problem: &ControlProblem, result: &ControlResult) -> PulseFile {
    PulseFile {
        target: label.to_string(),
        matrix: matrix_to_json(target.matrix()),
        duration_ns: problem.duration * 1e9,
        trailing_phase_free: problem.optimize_trailing_phase,
        result: result.clone(),
    }
}

fn write_program(dir: &mut RunDir, name: &str, p: &PulseProgram, device: &str, sample_dt: f64) -> Result<()> {
    let header = WaveformHeader {
        duration: p.duration,
        n_splines: p.n_splines,
        phase: p.trailing_phase,
        device,
    };
    let mut buf = Vec::new();
    pulse::write_waveform(&mut buf, &header, &pulse::program_rows(p, sample_dt))?;
    dir.write(name, &buf)
}

fn cmd_optimize(ctx: &Ctx, a: &OptimizeArgs, dir: &mut RunDir) -> Result<()> {
    let (label, target) = a.target.resolve()?;
    let durations = match (&a.duration, &a.scan) {
        (Some(t), None) => vec![parse_time(t)?],
        (None, Some(s)) => parse_scan(s)?,
        _ => bail!("give either --T or --scan"),
    };
    let mut problem = ControlProblem::new(target.clone(), durations[0], ctx.device.clone())?;
    problem.optimize_trailing_phase = !a.no_vz;
    problem.restarts = a.restarts;
    problem.max_iter = a.max_iter;
    problem.seed = ctx.seed;
    if let Some(dt) = ctx.dt {
        problem.dt = dt;
    }
    let sample_dt = parse_time(&a.sample_dt)?;

    let runs = if durations.len() == 1 {
        vec![(durations[0], optctrl::optimize(&problem)?)]
    } else {
        let mut runs = optctrl::duration_scan(&problem, &durations)?;
        runs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut table = String::from("T_ns,converged,infidelity,amp_penalty,filter_penalty,max_awg,leakage,iterations\n");
        for (t, r) in &runs {
            table.push_str(&format!(
                "{:.3},{},{:.6e},{:.6e},{:.6e},{:.6},{:.6e},{}\n",
                t * 1e9,
                r.converged,
                r.breakdown.infidelity,
                r.breakdown.amp_penalty,
                r.breakdown.filter_penalty,
                r.max_awg,
                r.leakage,
                r.iterations
            ));
        }
        dir.write("scan.csv", table.as_bytes())?;
        runs
    };
    // shortest converged duration, else the lowest objective
    let best = runs
        .iter()
        .filter(|(_, r)| r.converged)
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .or_else(|| runs.iter().min_by(|x, y| x.1.breakdown.total.total_cmp(&y.1.breakdown.total)))
        .expect("at least one duration");
    problem.duration = best.0;
    dir.write_json("control.json", &pulse_file(&label, &target, &problem, &best.1))?;
    write_program(dir, "waveform.csv", &best.1.pulse, &ctx.device.name, sample_dt)?;
    let r = &best.1;
    println!(
        "{label} at T = {:.1} ns: infidelity {:.3e}, max AWG {:.3}, leakage {:.2e}, converged {}",
        best.0 * 1e9,
        r.breakdown.infidelity,
        r.max_awg,
        r.leakage,
        r.converged
    );
    if !r.converged {
        bail!("optimization did not converge at any requested duration (best result kept)");
    }
    Ok(())
}

/// What a source file or gate name resolves to.
enum Implementation {
    Native(DecompositionParams),
    Pulse(PulseProgram),
}

fn resolve_source(ctx: &Ctx, s: &SourceArgs) -> Result<(String, Unitary, Implementation)> {
    if let Some(path) = &s.sequence {
        let f: SequenceFile = read_json(path)?;
        return Ok((f.target, matrix_from_json(&f.matrix)?, Implementation::Native(f.params)));
    }
    if let Some(path) = &s.pulse {
        let f: PulseFile = read_json(path)?;
        return Ok((f.target, matrix_from_json(&f.matrix)?, Implementation::Pulse(f.result.pulse)));
    }
    let Some(g) = &s.gate else {
        bail!("give --sequence, --pulse or --gate");
    };
    let target = standard_gate(g)?;
    let cfg = DecomposeConfig {
        seed: ctx.seed,
        ..DecomposeConfig::default()
    };
    let report = decompose::decompose(&target, &ctx.device, &cfg).with_context(|| format!("decomposing {g}"))?;
    Ok((g.clone(), target, Implementation::Native(report.params)))
}

/// Interaction-frame channel of an implementation, including trailing phases.
fn channel_of(imp: &Implementation, dev: &DeviceModel, noise: Option<&NoiseSpec>, dt: f64) -> Result<(Channel, f64)> {
    let drive = match imp {
        Implementation::Native(p) => Drive::Native(p),
        Implementation::Pulse(p) => Drive::Pulse(p),
    };
    if let Some(noise) = noise {
        let r = sim::propagate_lindblad(drive, dev, noise, dt)?;
        return Ok((r.channel(), r.duration));
    }
    match imp {
        Implementation::Native(p) => {
            let r = sim::propagate_native(p, dev, dt)?;
            Ok((r.channel(), r.duration))
        }
        Implementation::Pulse(p) => Ok((Channel::from_unitary(&sim::pulse_gate(p, dev, dt)?), p.duration)),
    }
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs, dir: &mut RunDir) -> Result<()> {
    let (label, target, imp) = resolve_source(ctx, &a.source)?;
    let noise = a.noise.spec(&ctx.device);
    let dt = ctx.dt_or(0.01e-9);
    let (channel, duration) = channel_of(&imp, &ctx.device, noise.as_ref(), dt)?;
    let f = channel.process_fidelity(target.matrix());
    let summary = json!({
        "target": label,
        "noise": noise.is_some(),
        "dt_ns": dt * 1e9,
        "duration_ns": duration * 1e9,
        "process_infidelity": 1.0 - f,
        "average_infidelity": 1.0 - channel.average_fidelity(target.matrix()),
        "leakage": channel.leakage(),
    });
    dir.write_json("simulation.json", &summary)?;
    if let Some(level) = a.populations {
        if level >= ctx.device.levels {
            bail!("initial level {level} outside the {} simulated levels", ctx.device.levels);
        }
        let drive = match &imp {
            Implementation::Native(p) => Drive::Native(p),
            Implementation::Pulse(p) => Drive::Pulse(p),
        };
        let rows = sim::population_trace(drive, &ctx.device, noise.as_ref(), level, dt)?;
        let mut buf = Vec::new();
        sim::write_populations(&mut buf, &rows)?;
        dir.write("populations.csv", &buf)?;
    }
    println!(
        "{label}: process infidelity {:.4}% (noise {}), leakage {:.2e}, T = {:.1} ns",
        100.0 * (1.0 - f),
        if noise.is_some() { "on" } else { "off" },
        channel.leakage(),
        duration * 1e9
    );
    Ok(())
}

fn rb_setup(ctx: &Ctx, a: &RbArgs) -> Result<(Backend, RbConfig)> {
    let tag = GroupTag::parse(&a.group)?;
    let backend = match a.backend {
        BackendArg::Ideal => Backend::Ideal,
        BackendArg::Depolarizing => Backend::Depolarizing { q: a.q },
        BackendArg::Decomposed => {
            let mut nb = NoisyBackend::new(ctx.device.clone());
            if let DephasingArg::PerLevel = a.dephasing {
                nb.noise = nb.noise.with_model(DephasingModel::PerLevel);
            }
            nb.dt = ctx.dt_or(nb.dt);
            nb.decompose.seed = ctx.seed;
            Backend::Noisy(nb)
        }
    };
    let mut cfg = RbConfig::new(tag);
    cfg.depths = a
        .depths
        .split(',')
        .map(|d| d.trim().parse::<usize>().with_context(|| format!("bad depth `{d}`")))
        .collect::<Result<_>>()?;
    cfg.sequences = a.sequences;
    cfg.shots = a.shots;
    cfg.seed = ctx.seed;
    cfg.validate()?;
    Ok((backend, cfg))
}

fn rb_summary(d: &RbDataset) -> serde_json::Value {
    json!({
        "group": d.group.name(),
        "backend": d.backend,
        "interleaved": d.interleaved,
        "fit": d.fit,
        "r": d.r,
        "fidelity": d.fidelity,
        "fidelity_err": d.fidelity_err,
        "mean_survival": d.means().iter().map(|(m, p)| json!({"depth": m, "survival": p})).collect::<Vec<_>>(),
    })
}

fn table_bytes(d: &RbDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    d.write_table(&mut buf)?;
    Ok(buf)
}

fn cmd_rb(ctx: &Ctx, a: &RbArgs, dir: &mut RunDir) -> Result<()> {
    let (backend, cfg) = rb_setup(ctx, a)?;
    let d = benchmark::run_rb(&cfg, backend)?;
    dir.write("rb.csv", &table_bytes(&d)?)?;
    dir.write_json("summary.json", &rb_summary(&d))?;
    println!(
        "{} [{}]: p = {:.6} ± {:.6}, F = {:.4}% ± {:.4}%{}",
        d.group.name(),
        d.backend,
        d.fit.p,
        d.fit.p_err,
        100.0 * d.fidelity,
        100.0 * d.fidelity_err,
        if d.fit.unidentifiable { " (decay unidentifiable)" } else { "" }
    );
    Ok(())
}

fn cmd_irb(ctx: &Ctx, a: &IrbArgs, dir: &mut RunDir) -> Result<()> {
    let (backend, mut cfg) = rb_setup(ctx, &a.rb)?;
    let gate = standard_gate(&a.gate)?;
    let pulse = match &a.pulse {
        Some(p) => {
            let f: PulseFile = read_json(p)?;
            let u = matrix_from_json(&f.matrix)?;
            if ququart::gates::gate_infidelity(&gate, &u)? > 1e-9 {
                bail!("pulse file targets {} but --gate is {}", f.target, a.gate);
            }
            Some(f.result.pulse)
        }
        None => None,
    };
    cfg.interleaved = Some(Interleaved {
        label: a.gate.clone(),
        gate,
        pulse,
    });
    let mut bench = Benchmark::new(cfg.group, backend)?;
    let r = bench.run_irb(&cfg)?;
    dir.write("reference.csv", &table_bytes(&r.reference)?)?;
    dir.write("interleaved.csv", &table_bytes(&r.interleaved)?)?;
    dir.write_json(
        "summary.json",
        &json!({
            "gate": a.gate,
            "gate_fidelity": r.gate_fidelity,
            "gate_fidelity_err": r.gate_fidelity_err,
            "reference": rb_summary(&r.reference),
            "interleaved": rb_summary(&r.interleaved),
        }),
    )?;
    println!(
        "{} in {} [{}]: F = {:.4}% ± {:.4}% (reference F_C = {:.4}%)",
        a.gate,
        cfg.group.name(),
        r.interleaved.backend,
        100.0 * r.gate_fidelity,
        100.0 * r.gate_fidelity_err,
        100.0 * r.reference.fidelity
    );
    Ok(())
}

fn cmd_qpt(ctx: &Ctx, a: &QptArgs, dir: &mut RunDir) -> Result<()> {
    let basis = BasisTag::parse(&a.basis)?;
    let (label, target, imp) = resolve_source(ctx, &a.source)?;
    let noise = a.noise.spec(&ctx.device);
    let (channel, _) = channel_of(&imp, &ctx.device, noise.as_ref(), ctx.dt_or(0.01e-9))?;
    let mut meas = MeasModel::synthetic(a.readout_error)?;
    if let Some(n) = a.shots {
        meas = meas.with_shots(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let chi = tomography::qpt(&channel, basis, &meas, &mut rng)?;
    let ideal = ProcessMatrix::from_unitary(&target, basis)?;
    let f = tomography::process_fidelity(&chi, &ideal)?;
    let mut buf = Vec::new();
    chi.write_text(&mut buf, &label, a.shots, ctx.seed)?;
    dir.write("chi.txt", &buf)?;
    let mut buf = Vec::new();
    ideal.write_text(&mut buf, &format!("ideal {label}"), None, 0)?;
    dir.write("chi_ideal.txt", &buf)?;
    dir.write_json(
        "summary.json",
        &json!({
            "target": label,
            "basis": basis.name(),
            "noise": noise.is_some(),
            "shots": a.shots,
            "readout_error": a.readout_error,
            "process_fidelity": f,
            "channel_process_fidelity": channel.process_fidelity(target.matrix()),
        }),
    )?;
    println!("{label}: reconstructed process fidelity {:.4}%", 100.0 * f);
    Ok(())
}

fn cmd_group(a: &GroupArgs, dir: &mut RunDir) -> Result<()> {
    let tag = GroupTag::parse(&a.tag)?;
    let group = tag.build()?;
    let paulis = match tag {
        GroupTag::Ququart => clifford::ququart_paulis(),
        GroupTag::TwoQubit => clifford::two_qubit_paulis(),
    };
    let normalizes = clifford::normalizer_check(&group, &paulis)?;
    let mut buf = Vec::new();
    group.write_text(&mut buf)?;
    dir.write("group.txt", &buf)?;
    dir.write_json(
        "summary.json",
        &json!({ "tag": tag.name(), "size": group.len(), "normalizes_paulis": normalizes }),
    )?;
    println!("{}: {} elements, normalizer check {}", tag.name(), group.len(), normalizes);
    if !normalizes {
        bail!("generated group does not normalize the Pauli group");
    }
    Ok(())
}

fn cmd_export(ctx: &Ctx, a: &ExportArgs, dir: &mut RunDir) -> Result<()> {
    let sample_dt = parse_time(&a.sample_dt)?;
    if let Some(path) = &a.sequence {
        let f: SequenceFile = read_json(path)?;
        let (rows, frame) = pulse::native_rows(&f.params, &ctx.device, sample_dt)?;
        let header = WaveformHeader {
            duration: f.duration_ns * 1e-9,
            n_splines: 0,
            phase: frame,
            device: &ctx.device.name,
        };
        let mut buf = Vec::new();
        pulse::write_waveform(&mut buf, &header, &rows)?;
        dir.write("waveform.csv", &buf)?;
        write_matrix(&dir.path("target.txt"), matrix_from_json(&f.matrix)?.matrix())?;
    } else if let Some(path) = &a.pulse {
        let f: PulseFile = read_json(path)?;
        write_program(dir, "waveform.csv", &f.result.pulse, &ctx.device.name, sample_dt)?;
        write_matrix(&dir.path("target.txt"), matrix_from_json(&f.matrix)?.matrix())?;
    } else {
        bail!("give --sequence or --pulse");
    }
    println!("waveform written");
    Ok(())
}
