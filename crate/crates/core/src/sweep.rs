//! Monte Carlo sweeps over scenario and tracker settings.
//!
//! Runs that share a scenario cell (heading, noise, layout) and a run index see
//! the same synthesized trace and the same tracker seed, so tracker variants are
//! compared on common random numbers.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{DflError, Result};
use crate::metrics::{mean_std, RunResult};
use crate::pipeline::evaluate_trace;
use crate::simulator::{corridor_links, heading_from_degrees, synthesize_trace, TrajectoryConfig};
use crate::tracker::InitConfig;

/// Named initial speed/heading prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitChoice {
    /// v ~ U(0, 2) m/s, heading within ±π/4 of the hint.
    Wide,
    /// v ~ U(0, 1) m/s, heading within ±π/8 of the hint.
    Narrow,
}

impl InitChoice {
    pub fn label(self) -> &'static str {
        match self {
            InitChoice::Wide => "wide",
            InitChoice::Narrow => "narrow",
        }
    }

    /// Prior with this speed/heading spread, keeping the position spread of `base`.
    pub fn apply(self, base: &InitConfig) -> InitConfig {
        let shape = match self {
            InitChoice::Wide => InitConfig::default(),
            InitChoice::Narrow => InitConfig::narrow(),
        };
        InitConfig { perp_std: base.perp_std, ..shape }
    }
}

/// Axes of the sweep. An empty axis keeps the value from the base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    /// Walking directions in degrees; the walk keeps its midpoint.
    pub headings_deg: Vec<f64>,
    pub noise_stds: Vec<f64>,
    pub particle_counts: Vec<usize>,
    pub use_frequency: Vec<bool>,
    pub inits: Vec<InitChoice>,
    /// Rebuilds the corridor layout with or without the receiver between the outer two.
    pub midway_receiver: Vec<bool>,
    /// Corridor width used when `midway_receiver` is swept, m.
    pub corridor_width: f64,
    pub runs: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            headings_deg: Vec::new(),
            noise_stds: Vec::new(),
            particle_counts: Vec::new(),
            use_frequency: vec![true, false],
            inits: Vec::new(),
            midway_receiver: Vec::new(),
            corridor_width: 3.0,
            runs: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub base: Config,
    pub grid: SweepGrid,
}

/// One point of the grid, fully resolved against the base config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    /// Cells with equal scenario index share their traces.
    pub scenario_index: usize,
    pub heading_deg: f64,
    pub noise_std: f64,
    pub particles: usize,
    pub use_frequency: bool,
    pub init: Option<InitChoice>,
    pub midway_receiver: Option<bool>,
}

impl SweepCell {
    /// The base config with this cell's settings applied.
    pub fn config(&self, base: &Config, corridor_width: f64) -> Config {
        let mut cfg = base.clone();
        let tr = base.scenario.trajectory;
        let heading = heading_from_degrees(self.heading_deg);
        // An unchanged heading keeps the base walk bit-exact.
        if (heading - heading_from_degrees(tr.heading.to_degrees())).abs() > 1e-9 {
            let center = tr.start + tr.velocity().displacement(0.5 * tr.duration);
            cfg.scenario.trajectory = TrajectoryConfig::through(center, tr.speed, heading, tr.duration);
        }
        cfg.scenario.noise_std = self.noise_std;
        if let Some(mid) = self.midway_receiver {
            cfg.scenario.links = corridor_links(corridor_width, mid);
        }
        cfg.tracker.particles = self.particles;
        cfg.tracker.use_frequency = self.use_frequency;
        if let Some(init) = self.init {
            cfg.tracker.init = init.apply(&base.tracker.init);
        }
        cfg
    }
}

fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

fn opt_axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().cloned().map(Some).collect()
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DflError::config(format!("sweep spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let g = &self.grid;
        if g.runs == 0 {
            return Err(DflError::config("grid.runs must be >= 1"));
        }
        if g.headings_deg.iter().any(|h| !h.is_finite()) {
            return Err(DflError::config("grid.headings_deg must be finite"));
        }
        if g.noise_stds.iter().any(|s| !(*s >= 0.0)) {
            return Err(DflError::config("grid.noise_stds must be >= 0"));
        }
        if g.particle_counts.contains(&0) {
            return Err(DflError::config("grid.particle_counts must be >= 1"));
        }
        if !g.midway_receiver.is_empty() && !(g.corridor_width > 0.0) {
            return Err(DflError::config("grid.corridor_width must be > 0"));
        }
        for cell in self.cells() {
            cell.config(&self.base, g.corridor_width).validate()?;
        }
        Ok(())
    }

    /// Cartesian product of the axes, scenario axes outermost.
    pub fn cells(&self) -> Vec<SweepCell> {
        let g = &self.grid;
        let base = &self.base;
        let headings = axis(&g.headings_deg, base.scenario.trajectory.heading.to_degrees());
        let noises = axis(&g.noise_stds, base.scenario.noise_std);
        let layouts = opt_axis(&g.midway_receiver);
        let counts = axis(&g.particle_counts, base.tracker.particles);
        let freqs = axis(&g.use_frequency, base.tracker.use_frequency);
        let inits = opt_axis(&g.inits);
        let mut cells = Vec::new();
        let mut scenario_index = 0;
        for &heading_deg in &headings {
            for &noise_std in &noises {
                for &midway_receiver in &layouts {
                    for &particles in &counts {
                        for &use_frequency in &freqs {
                            for &init in &inits {
                                cells.push(SweepCell {
                                    index: cells.len(),
                                    scenario_index,
                                    heading_deg,
                                    noise_std,
                                    particles,
                                    use_frequency,
                                    init,
                                    midway_receiver,
                                });
                            }
                        }
                    }
                    scenario_index += 1;
                }
            }
        }
        cells
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for run `run` of random stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, run: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ run)
}

/// Scenario and tracker seeds for one run of a scenario cell.
pub fn run_seeds(master: u64, scenario_index: usize, run: usize) -> (u64, u64) {
    let s = 2 * scenario_index as u64;
    (derive_seed(master, s, run as u64), derive_seed(master, s + 1, run as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub cell: usize,
    pub run: usize,
    pub scenario_seed: u64,
    pub tracker_seed: u64,
    pub outcome: std::result::Result<RunResult, String>,
}

/// Per-cell statistics. Coordinate errors are averaged over tracked runs only;
/// ε_% counts untracked runs as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: SweepCell,
    pub runs: usize,
    pub failed: usize,
    pub tracked: usize,
    pub eps_x: (f64, f64),
    pub eps_y: (f64, f64),
    pub eps_pct: (f64, f64),
    /// Errors over all tracked estimates pooled, each run weighted by its K.
    pub pooled_eps_x: f64,
    pub pooled_eps_y: f64,
    pub mean_k: f64,
}

impl CellSummary {
    pub fn from_records(cell: &SweepCell, records: &[&RunRecord]) -> Self {
        let ok: Vec<&RunResult> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let tracked: Vec<&RunResult> = ok.iter().copied().filter(|r| r.k > 0).collect();
        let stat = |f: fn(&RunResult) -> f64| {
            let v: Vec<f64> = tracked.iter().map(|r| f(r)).collect();
            mean_std(&v)
        };
        let total_k: usize = tracked.iter().map(|r| r.k).sum();
        let pooled = |f: fn(&RunResult) -> f64| {
            tracked.iter().map(|r| f(r) * r.k as f64).sum::<f64>() / total_k as f64
        };
        let pct: Vec<f64> = ok.iter().map(|r| r.eps_pct).collect();
        Self {
            cell: cell.clone(),
            runs: records.len(),
            failed: records.len() - ok.len(),
            tracked: tracked.len(),
            eps_x: stat(|r| r.eps_x),
            eps_y: stat(|r| r.eps_y),
            eps_pct: mean_std(&pct),
            pooled_eps_x: pooled(|r| r.eps_x),
            pooled_eps_y: pooled(|r| r.eps_y),
            mean_k: ok.iter().map(|r| r.k as f64).sum::<f64>() / ok.len() as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub cells: Vec<SweepCell>,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<CellSummary>,
}

fn run_one(spec: &SweepSpec, cell: &SweepCell, run: usize, master: u64) -> RunRecord {
    let (scenario_seed, tracker_seed) = run_seeds(master, cell.scenario_index, run);
    let outcome = (|| {
        let mut cfg = cell.config(&spec.base, spec.grid.corridor_width);
        cfg.scenario.seed = scenario_seed;
        let trace = synthesize_trace(&cfg.scenario)?;
        evaluate_trace(&cfg, &trace, tracker_seed)
    })()
    .map_err(|e| e.to_string());
    RunRecord {
        cell: cell.index,
        run,
        scenario_seed,
        tracker_seed,
        outcome,
    }
}

/// Runs every cell `grid.runs` times on up to `jobs` threads (0 = all cores).
///
/// Only an invalid spec is an error; failures of single runs are recorded in
/// their [`RunRecord`].
pub fn run_sweep(spec: &SweepSpec, master_seed: u64, jobs: usize) -> Result<SweepOutput> {
    spec.validate()?;
    let cells = spec.cells();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.grid.runs).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| DflError::config(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, r)| run_one(spec, &cells[c], r, master_seed))
            .collect()
    });
    let summaries = cells
        .iter()
        .map(|cell| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.cell == cell.index).collect();
            CellSummary::from_records(cell, &mine)
        })
        .collect();
    Ok(SweepOutput {
        cells,
        records,
        summaries,
    })
}

struct Opt<T>(Option<T>);

impl<T: fmt::Display> fmt::Display for Opt<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(v) => v.fmt(f),
            None => f.write_str("base"),
        }
    }
}

const CELL_COLUMNS: [&str; 7] = [
    "cell",
    "heading_deg",
    "noise_std",
    "particles",
    "use_freq",
    "init",
    "midway_receiver",
];

fn cell_fields(c: &SweepCell) -> Vec<String> {
    vec![
        c.index.to_string(),
        c.heading_deg.to_string(),
        c.noise_std.to_string(),
        c.particles.to_string(),
        c.use_frequency.to_string(),
        Opt(c.init.map(InitChoice::label)).to_string(),
        Opt(c.midway_receiver).to_string(),
    ]
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// One row per (cell, run).
pub fn write_runs_csv<W: Write>(out: &SweepOutput, w: W) -> Result<()> {
    let mut w = writer(w);
    let mut header: Vec<&str> = CELL_COLUMNS.to_vec();
    header.extend([
        "run",
        "scenario_seed",
        "tracker_seed",
        "eps_x",
        "eps_y",
        "sigma_x",
        "sigma_y",
        "eps_pct",
        "k",
        "error",
    ]);
    w.write_record(&header)?;
    for rec in &out.records {
        let mut row = cell_fields(&out.cells[rec.cell]);
        row.extend([rec.run.to_string(), rec.scenario_seed.to_string(), rec.tracker_seed.to_string()]);
        match &rec.outcome {
            Ok(r) => row.extend([
                r.eps_x.to_string(),
                r.eps_y.to_string(),
                r.sigma_x.to_string(),
                r.sigma_y.to_string(),
                r.eps_pct.to_string(),
                r.k.to_string(),
                String::new(),
            ]),
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(e.clone());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per cell: mean and std across runs.
pub fn write_summary_csv<W: Write>(out: &SweepOutput, w: W) -> Result<()> {
    let mut w = writer(w);
    let mut header: Vec<&str> = CELL_COLUMNS.to_vec();
    header.extend([
        "runs",
        "failed",
        "tracked",
        "eps_x_mean",
        "eps_x_std",
        "eps_y_mean",
        "eps_y_std",
        "eps_pct_mean",
        "eps_pct_std",
        "pooled_eps_x",
        "pooled_eps_y",
        "mean_k",
    ]);
    w.write_record(&header)?;
    for s in &out.summaries {
        let mut row = cell_fields(&s.cell);
        row.extend(
            [s.runs, s.failed, s.tracked]
                .iter()
                .map(|v| v.to_string())
                .chain(
                    [
                        s.eps_x.0,
                        s.eps_x.1,
                        s.eps_y.0,
                        s.eps_y.1,
                        s.eps_pct.0,
                        s.eps_pct.1,
                        s.pooled_eps_x,
                        s.pooled_eps_y,
                        s.mean_k,
                    ]
                    .iter()
                    .map(|v| v.to_string()),
                ),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
