//! End-to-end runs: replay a trace through the tracker and score the result.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::config::Config;
use crate::error::{DflError, Result};
use crate::geometry::{Link, Point2};
use crate::link_state::GateEvent;
use crate::metrics::{mae, ParticleRatio, RunResult};
use crate::rss_model::{EllipseParams, PropagationState};
use crate::simulator::synthesize_trace;
use crate::spectral::FrequencyMeasurement;
use crate::trace::{replay, Calibration, MeasurementStream, RssTrace, TraceRow, TruthRow};
use crate::tracker::{KinematicState, ParticleFilter, ParticleSet, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackEvent {
    Start,
    Track,
    Stop,
}

impl TrackEvent {
    pub fn label(self) -> &'static str {
        match self {
            TrackEvent::Start => "start",
            TrackEvent::Track => "track",
            TrackEvent::Stop => "stop",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "start" => Some(TrackEvent::Start),
            "track" => Some(TrackEvent::Track),
            "stop" => Some(TrackEvent::Stop),
            _ => None,
        }
    }
}

/// One line of the estimate stream. Stop rows carry a `NaN` state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub state: KinematicState,
    pub event: TrackEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub states: Vec<PropagationState>,
    pub rss: Vec<Option<f64>>,
    pub freq: Vec<FrequencyMeasurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub calibration: Calibration,
    pub estimates: Vec<EstimateRow>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub degenerate_resets: usize,
}

pub fn build_tracker(cfg: &Config, links: Vec<Link>, calibration: &Calibration, seed: u64) -> Result<Tracker> {
    let hmm = cfg.hmm.resolve(calibration.noise_level())?;
    let filter = ParticleFilter::new(cfg.tracker.clone(), cfg.measurement_model(), links, seed)?;
    Tracker::new(filter, hmm, cfg.heading_hint())
}

/// Runs the tracker over a replayed stream.
///
/// `observer` sees the resampled particle set after every step that produced an
/// estimate, with the step's time.
pub fn track_stream(
    cfg: &Config,
    links: Vec<Link>,
    stream: &MeasurementStream,
    seed: u64,
    mut observer: impl FnMut(f64, &ParticleSet),
) -> Result<TrackOutput> {
    let mut tracker = build_tracker(cfg, links, &stream.calibration, seed)?;
    let mut estimates = Vec::new();
    let mut diagnostics = Vec::with_capacity(stream.frames.len());
    for frame in &stream.frames {
        let out = tracker.step(&frame.links)?;
        diagnostics.push(StepDiagnostics {
            t: frame.t,
            states: out.link_states.iter().map(|s| s.state).collect(),
            rss: frame.links.iter().map(|l| l.rss).collect(),
            freq: frame.links.iter().map(|l| l.freq).collect(),
        });
        match (out.estimate, out.event) {
            (Some(state), ev) => {
                let event = if ev == GateEvent::StartTracking { TrackEvent::Start } else { TrackEvent::Track };
                estimates.push(EstimateRow { t: frame.t, state, event });
                if let Some(set) = tracker.filter().particles() {
                    observer(frame.t, set);
                }
            }
            (None, GateEvent::StopTracking) => estimates.push(EstimateRow {
                t: frame.t,
                state: KinematicState {
                    px: f64::NAN,
                    vx: f64::NAN,
                    py: f64::NAN,
                    vy: f64::NAN,
                },
                event: TrackEvent::Stop,
            }),
            (None, _) => {}
        }
    }
    Ok(TrackOutput {
        calibration: stream.calibration.clone(),
        estimates,
        diagnostics,
        degenerate_resets: tracker.filter().degenerate_resets(),
    })
}

pub fn track_trace(
    cfg: &Config,
    rows: &[TraceRow],
    seed: u64,
    observer: impl FnMut(f64, &ParticleSet),
) -> Result<TrackOutput> {
    let links = cfg.scenario.build_links()?;
    let stream = replay(rows, links.len(), &cfg.spectral, cfg.calibration_window)?;
    track_stream(cfg, links, &stream, seed, observer)
}

/// Truth rows keyed by exact timestamp.
pub struct TruthIndex<'a> {
    rows: &'a [TruthRow],
    by_time: HashMap<u64, usize>,
}

impl<'a> TruthIndex<'a> {
    pub fn new(rows: &'a [TruthRow]) -> Self {
        let by_time = rows.iter().enumerate().map(|(i, r)| (r.t.to_bits(), i)).collect();
        Self { rows, by_time }
    }

    pub fn get(&self, t: f64) -> Result<&'a TruthRow> {
        self.by_time
            .get(&t.to_bits())
            .map(|&i| &self.rows[i])
            .ok_or_else(|| DflError::Alignment(format!("no truth sample at t={t}")))
    }
}

/// Accumulates scores while a track is running.
pub struct RunScorer<'a> {
    truth: TruthIndex<'a>,
    ellipse: EllipseParams,
    ratio: ParticleRatio,
    truth_pos: Vec<Point2>,
    est_pos: Vec<Point2>,
}

impl<'a> RunScorer<'a> {
    pub fn new(truth: &'a [TruthRow], ellipse: EllipseParams) -> Self {
        Self {
            truth: TruthIndex::new(truth),
            ellipse,
            ratio: ParticleRatio::default(),
            truth_pos: Vec::new(),
            est_pos: Vec::new(),
        }
    }

    /// Steps where nobody is present (false starts during calibration) are not scored.
    pub fn add_particles(&mut self, t: f64, particles: impl IntoIterator<Item = Point2>) -> Result<()> {
        let row = self.truth.get(t)?;
        if let Some(c) = row.position {
            self.ratio.add(particles, c, row.velocity.heading(), &self.ellipse);
        }
        Ok(())
    }

    pub fn add_estimate(&mut self, t: f64, estimate: Point2) -> Result<()> {
        let row = self.truth.get(t)?;
        if let Some(c) = row.position {
            self.truth_pos.push(c);
            self.est_pos.push(estimate);
        }
        Ok(())
    }

    pub fn finish(self, seed: u64) -> Result<RunResult> {
        if self.est_pos.is_empty() {
            return Ok(RunResult::untracked(seed));
        }
        let e = mae(&self.truth_pos, &self.est_pos)?;
        Ok(RunResult {
            eps_x: e.eps_x,
            eps_y: e.eps_y,
            sigma_x: e.sigma_x,
            sigma_y: e.sigma_y,
            eps_pct: self.ratio.percent(),
            k: e.count,
            seed,
        })
    }
}

/// Tracks a trace and scores it against its truth.
pub fn evaluate_trace(cfg: &Config, trace: &RssTrace, tracker_seed: u64) -> Result<RunResult> {
    let mut scorer = RunScorer::new(&trace.truth, cfg.scenario.ellipse);
    let mut err = None;
    let out = track_trace(cfg, &trace.rows, tracker_seed, |t, set| {
        if err.is_none() {
            err = scorer.add_particles(t, set.positions()).err();
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    for e in out.estimates.iter().filter(|e| e.event != TrackEvent::Stop) {
        scorer.add_estimate(e.t, e.state.position())?;
    }
    scorer.finish(tracker_seed)
}

/// Simulates the configured scenario and scores one tracker run on it.
pub fn simulate_and_evaluate(cfg: &Config, tracker_seed: u64) -> Result<RunResult> {
    let trace = synthesize_trace(&cfg.scenario)?;
    evaluate_trace(cfg, &trace, tracker_seed)
}

pub const ESTIMATE_HEADER: [&str; 6] = ["t", "px", "vx", "py", "vy", "event"];

pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for r in rows {
        let s = r.state;
        w.write_record([
            r.t.to_string(),
            s.px.to_string(),
            s.vx.to_string(),
            s.py.to_string(),
            s.vy.to_string(),
            r.event.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| DflError::Format { line, message: format!("cannot parse field {} from {raw:?}", i + 1) })
}

fn records<R: Read>(input: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let h = r.headers()?;
    if h.len() != header.len() || header.iter().zip(h.iter()).any(|(a, b)| *a != b.trim()) {
        return Err(DflError::Format {
            line: 1,
            message: format!("expected header {}", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(DflError::Format {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line, rec));
    }
    Ok(out)
}

pub fn read_estimates_csv<R: Read>(input: R) -> Result<Vec<EstimateRow>> {
    records(input, &ESTIMATE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let event = TrackEvent::from_label(rec[5].trim()).ok_or_else(|| DflError::Format {
                line,
                message: format!("unknown event {:?}", &rec[5]),
            })?;
            Ok(EstimateRow {
                t: parse(&rec, 0, line)?,
                state: KinematicState {
                    px: parse(&rec, 1, line)?,
                    vx: parse(&rec, 2, line)?,
                    py: parse(&rec, 3, line)?,
                    vy: parse(&rec, 4, line)?,
                },
                event,
            })
        })
        .collect()
}

pub const PARTICLE_HEADER: [&str; 6] = ["t", "particle", "px", "vx", "py", "vy"];

/// Particle snapshot rows, one per particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleRow {
    pub t: f64,
    pub index: usize,
    pub state: KinematicState,
}

pub fn particle_rows(t: f64, set: &ParticleSet) -> impl Iterator<Item = ParticleRow> + '_ {
    set.particles.iter().enumerate().map(move |(index, p)| ParticleRow { t, index, state: p.state })
}

pub fn write_particles_csv<W: Write>(rows: impl IntoIterator<Item = ParticleRow>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(PARTICLE_HEADER)?;
    for r in rows {
        let s = r.state;
        w.write_record([
            r.t.to_string(),
            r.index.to_string(),
            s.px.to_string(),
            s.vx.to_string(),
            s.py.to_string(),
            s.vy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_particles_csv<R: Read>(input: R) -> Result<Vec<ParticleRow>> {
    records(input, &PARTICLE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(ParticleRow {
                t: parse(&rec, 0, line)?,
                index: parse(&rec, 1, line)?,
                state: KinematicState {
                    px: parse(&rec, 2, line)?,
                    vx: parse(&rec, 3, line)?,
                    py: parse(&rec, 4, line)?,
                    vy: parse(&rec, 5, line)?,
                },
            })
        })
        .collect()
}

pub const DIAGNOSTICS_HEADER: [&str; 6] = ["t", "link", "state", "rss", "freq", "freq_valid"];

/// Per-step, per-link HMM state and measurements; a missing RSS sample is an empty field.
pub fn write_diagnostics_csv<W: Write>(rows: &[StepDiagnostics], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(DIAGNOSTICS_HEADER)?;
    for r in rows {
        for (link, ((state, rss), freq)) in r.states.iter().zip(&r.rss).zip(&r.freq).enumerate() {
            w.write_record([
                r.t.to_string(),
                link.to_string(),
                state.label().to_string(),
                rss.map_or(String::new(), |v| v.to_string()),
                freq.freq.to_string(),
                freq.valid.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Scores stored estimates and particle snapshots against truth.
///
/// The particle ratio covers only the snapshot times present in `particles`.
pub fn evaluate_files(
    estimates: &[EstimateRow],
    truth: &[TruthRow],
    particles: &[ParticleRow],
    ellipse: EllipseParams,
    seed: u64,
) -> Result<RunResult> {
    let mut scorer = RunScorer::new(truth, ellipse);
    for e in estimates.iter().filter(|e| e.event != TrackEvent::Stop) {
        scorer.add_estimate(e.t, e.state.position())?;
    }
    for chunk in particles.chunk_by(|a, b| a.t == b.t) {
        scorer.add_particles(chunk[0].t, chunk.iter().map(|p| p.state.position()))?;
    }
    scorer.finish(seed)
}
