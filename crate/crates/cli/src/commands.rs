use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use dfl_core::config::Config;
use dfl_core::metrics::{write_results_csv, RunResult};
use dfl_core::pipeline::{
    evaluate_files, particle_rows, read_estimates_csv, read_particles_csv, track_trace, write_diagnostics_csv,
    write_estimates_csv, write_particles_csv, ParticleRow,
};
use dfl_core::simulator::synthesize_trace;
use dfl_core::sweep::{run_sweep, write_runs_csv, write_summary_csv, SweepSpec};
use dfl_core::trace::{read_trace_csv, read_truth_csv, write_trace_csv, write_truth_csv};
use dfl_core::DflError;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::manifest::{load_config_value, ManifestWriter};

const EXIT_CONFIG: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self { code: EXIT_FORMAT, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<DflError> for CliError {
    fn from(e: DflError) -> Self {
        let code = match e {
            DflError::InvalidConfig(_) => EXIT_CONFIG,
            DflError::Format { .. } | DflError::Csv(_) | DflError::Alignment(_) | DflError::LengthMismatch { .. } => {
                EXIT_FORMAT
            }
            _ => EXIT_RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses a config (or manifest snapshot), falling back to `T::default()`.
fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, Option<u64>)> {
    let Some(path) = path else {
        return Ok((T::default(), None));
    };
    let loaded = load_config_value(path)?;
    let value = serde_json::from_value(loaded.config)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok((value, loaded.seed))
}

fn load_config(path: Option<&Path>) -> Result<(Config, Option<u64>)> {
    let (cfg, seed) = load::<Config>(path)?;
    cfg.validate()?;
    Ok((cfg, seed))
}

fn snapshot<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::format(format!("cannot read {}: {e}", path.display())))
}

/// Tags a data-file error with the file it came from.
fn in_file(path: &Path) -> impl Fn(DflError) -> CliError + '_ {
    move |e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let (mut cfg, manifest_seed) = load_config(config)?;
    let seed = seed.or(manifest_seed).unwrap_or(cfg.scenario.seed);
    cfg.scenario.seed = seed;
    prepare_out(out)?;
    let trace_path = out.join("trace.csv");
    let truth_path = out.join("truth.csv");
    let manifest = ManifestWriter::start(
        out,
        "simulate",
        seed,
        snapshot(&cfg),
        config.map(Path::to_path_buf).into_iter().collect(),
        vec![trace_path.clone(), truth_path.clone()],
    )?;
    let trace = synthesize_trace(&cfg.scenario)?;
    write_trace_csv(&trace.rows, create(&trace_path)?)?;
    write_truth_csv(&trace.truth, create(&truth_path)?)?;
    eprintln!(
        "simulated {} samples on {} links, {} channels",
        trace.truth.len(),
        cfg.scenario.links.len(),
        cfg.scenario.channels
    );
    manifest.finish()
}

pub fn track(
    trace: &Path,
    config: Option<&Path>,
    use_freq: Option<bool>,
    particle_stride: usize,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let (mut cfg, manifest_seed) = load_config(config)?;
    if let Some(on) = use_freq {
        cfg.tracker.use_frequency = on;
    }
    let seed = seed.or(manifest_seed).unwrap_or(1);
    let rows = read_trace_csv(open(trace)?).map_err(in_file(trace))?;
    prepare_out(out)?;
    let estimates_path = out.join("estimates.csv");
    let diagnostics_path = out.join("diagnostics.csv");
    let particles_path = out.join("particles.csv");
    let mut outputs = vec![estimates_path.clone(), diagnostics_path.clone()];
    if particle_stride > 0 {
        outputs.push(particles_path.clone());
    }
    let mut inputs = vec![trace.to_path_buf()];
    inputs.extend(config.map(Path::to_path_buf));
    let manifest = ManifestWriter::start(out, "track", seed, snapshot(&cfg), inputs, outputs)?;

    let mut snapshots: Vec<ParticleRow> = Vec::new();
    let mut step = 0usize;
    let result = track_trace(&cfg, &rows, seed, |t, set| {
        if particle_stride > 0 && step % particle_stride == 0 {
            snapshots.extend(particle_rows(t, set));
        }
        step += 1;
    })
    .map_err(in_file(trace))?;

    write_estimates_csv(&result.estimates, create(&estimates_path)?)?;
    write_diagnostics_csv(&result.diagnostics, create(&diagnostics_path)?)?;
    if particle_stride > 0 {
        write_particles_csv(snapshots, create(&particles_path)?)?;
    }
    eprintln!(
        "{} estimates over {} frames (frequency {}), {} degenerate weight resets",
        result.estimates.len(),
        result.diagnostics.len(),
        if cfg.tracker.use_frequency { "on" } else { "off" },
        result.degenerate_resets
    );
    manifest.finish()
}

pub fn sweep(grid: &Path, jobs: usize, out: &Path, seed: Option<u64>) -> Result<()> {
    let (spec, manifest_seed) = load::<SweepSpec>(Some(grid))?;
    spec.validate()?;
    let seed = seed.or(manifest_seed).unwrap_or(1);
    prepare_out(out)?;
    let runs_path = out.join("runs.csv");
    let summary_path = out.join("summary.csv");
    let manifest = ManifestWriter::start(
        out,
        "sweep",
        seed,
        snapshot(&spec),
        vec![grid.to_path_buf()],
        vec![runs_path.clone(), summary_path.clone()],
    )?;
    let result = run_sweep(&spec, seed, jobs)?;
    write_runs_csv(&result, create(&runs_path)?)?;
    write_summary_csv(&result, create(&summary_path)?)?;

    println!("cell  heading  noise  N      freq   init    mid    eps_x[cm]  eps_y[cm]  eps_%");
    for s in &result.summaries {
        let c = &s.cell;
        println!(
            "{:<5} {:<8} {:<6} {:<6} {:<6} {:<7} {:<6} {:<10.1} {:<10.1} {:.1}",
            c.index,
            c.heading_deg,
            c.noise_std,
            c.particles,
            if c.use_frequency { "on" } else { "off" },
            c.init.map_or("base", |i| i.label()),
            c.midway_receiver.map_or("base".to_string(), |m| m.to_string()),
            s.eps_x.0,
            s.eps_y.0,
            s.eps_pct.0
        );
    }
    let failures: Vec<&String> = result.records.iter().filter_map(|r| r.outcome.as_ref().err()).collect();
    if !failures.is_empty() {
        eprintln!("{} of {} runs failed; first: {}", failures.len(), result.records.len(), failures[0]);
    }
    manifest.finish()?;
    if failures.len() == result.records.len() {
        return Err(CliError::runtime("every run failed"));
    }
    Ok(())
}

pub fn eval(
    estimates: &Path,
    truth: &Path,
    particles: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let (cfg, manifest_seed) = load_config(config)?;
    let seed = seed.or(manifest_seed).unwrap_or(0);
    let est = read_estimates_csv(open(estimates)?).map_err(in_file(estimates))?;
    let truth_rows = read_truth_csv(open(truth)?).map_err(in_file(truth))?;
    let snaps = match particles {
        Some(p) => read_particles_csv(open(p)?).map_err(in_file(p))?,
        None => Vec::new(),
    };
    prepare_out(out)?;
    let json_path = out.join("result.json");
    let csv_path = out.join("result.csv");
    let mut inputs: Vec<PathBuf> = vec![estimates.to_path_buf(), truth.to_path_buf()];
    inputs.extend(particles.map(Path::to_path_buf));
    inputs.extend(config.map(Path::to_path_buf));
    let manifest = ManifestWriter::start(
        out,
        "eval",
        seed,
        snapshot(&cfg),
        inputs,
        vec![json_path.clone(), csv_path.clone()],
    )?;
    let result: RunResult = evaluate_files(&est, &truth_rows, &snaps, cfg.scenario.ellipse, seed)?;
    let json = serde_json::to_string_pretty(&result).expect("result serializes");
    std::fs::write(&json_path, json + "\n").map_err(|e| CliError::runtime(format!("{}: {e}", json_path.display())))?;
    write_results_csv(&[result], create(&csv_path)?)?;
    println!(
        "eps_x = {:.1} ± {:.1} cm, eps_y = {:.1} ± {:.1} cm, eps_% = {:.1} (K = {})",
        result.eps_x, result.sigma_x, result.eps_y, result.sigma_y, result.eps_pct, result.k
    );
    manifest.finish()
}
