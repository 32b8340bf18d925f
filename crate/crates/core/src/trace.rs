//! RSS traces on disk and their replay into per-step measurements.
//!
//! Trace CSV: `t,link,channel,rss_dbm`, rows in time order.
//! Truth CSV: `t,px,py,vx,vy,state_link0,...`; position fields are `NaN` while
//! the room is empty.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DflError, Result};
use crate::geometry::{Point2, Velocity2};
use crate::rss_model::{mean_remove_and_combine, PropagationState};
use crate::spectral::{FrequencyMeasurement, PsdEstimator, SpectralConfig};
use crate::tracker::LinkInput;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub link: usize,
    pub channel: usize,
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub t: f64,
    /// `None` while nobody is in the monitored area.
    pub position: Option<Point2>,
    pub velocity: Velocity2,
    pub states: Vec<PropagationState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RssTrace {
    pub rows: Vec<TraceRow>,
    pub truth: Vec<TruthRow>,
}

pub const TRACE_HEADER: [&str; 4] = ["t", "link", "channel", "rss_dbm"];

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([r.t.to_string(), r.link.to_string(), r.channel.to_string(), r.rss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| DflError::format(line, format!("missing column `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| DflError::format(line, format!("cannot parse `{name}` from {raw:?}")))
}

fn check_header(r: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<csv::StringRecord> {
    let h = r.headers()?.clone();
    if h.len() < expected.len() || expected.iter().zip(h.iter()).any(|(e, g)| *e != g.trim()) {
        return Err(DflError::format(1, format!("expected header starting with {}", expected.join(","))));
    }
    Ok(h)
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = reader(input);
    check_header(&mut r, &TRACE_HEADER)?;
    let mut rows = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != TRACE_HEADER.len() {
            return Err(DflError::format(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let row = TraceRow {
            t: field(&rec, 0, "t", line)?,
            link: field(&rec, 1, "link", line)?,
            channel: field(&rec, 2, "channel", line)?,
            rss: field(&rec, 3, "rss_dbm", line)?,
        };
        if !row.t.is_finite() || row.t < last_t {
            return Err(DflError::format(line, "timestamps must be finite and non-decreasing"));
        }
        if !row.rss.is_finite() {
            return Err(DflError::format(line, "rss must be finite"));
        }
        last_t = row.t;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_truth_csv<W: Write>(truth: &[TruthRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let links = truth.first().map_or(0, |r| r.states.len());
    let mut header: Vec<String> = ["t", "px", "py", "vx", "vy"].iter().map(|s| s.to_string()).collect();
    header.extend((0..links).map(|i| format!("state_link{i}")));
    w.write_record(&header)?;
    for r in truth {
        let (px, py) = r.position.map_or((f64::NAN, f64::NAN), |p| (p.x, p.y));
        let mut rec = vec![
            r.t.to_string(),
            px.to_string(),
            py.to_string(),
            r.velocity.vx.to_string(),
            r.velocity.vy.to_string(),
        ];
        rec.extend(r.states.iter().map(|s| s.label().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(input: R) -> Result<Vec<TruthRow>> {
    let mut r = reader(input);
    let header = check_header(&mut r, &["t", "px", "py", "vx", "vy"])?;
    let links = header.len() - 5;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(DflError::format(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let px: f64 = field(&rec, 1, "px", line)?;
        let py: f64 = field(&rec, 2, "py", line)?;
        let states = (0..links)
            .map(|i| {
                PropagationState::from_label(rec[5 + i].trim())
                    .ok_or_else(|| DflError::format(line, format!("bad state label {:?}", &rec[5 + i])))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(TruthRow {
            t: field(&rec, 0, "t", line)?,
            position: (px.is_finite() && py.is_finite()).then(|| Point2::new(px, py)),
            velocity: Velocity2::new(field(&rec, 3, "vx", line)?, field(&rec, 4, "vy", line)?),
            states,
        });
    }
    Ok(out)
}

/// Per-channel empty-room means and the noise level of the combined signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `means[link][channel]`; `None` for channels without calibration samples.
    pub means: Vec<Vec<Option<f64>>>,
    /// Std of the combined signal over the calibration window, per link, dB.
    pub combined_noise_std: Vec<f64>,
}

impl Calibration {
    /// Average combined noise std over links, used to scale the link-state emissions.
    pub fn noise_level(&self) -> f64 {
        let v: Vec<f64> = self.combined_noise_std.iter().copied().filter(|s| s.is_finite()).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// Measurements of all links at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    pub links: Vec<LinkInput>,
    /// Channels that reported on each link at this timestamp.
    pub channels_present: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStream {
    pub calibration: Calibration,
    pub frames: Vec<MeasurementFrame>,
}

/// Groups rows sharing a timestamp; each group maps (link, channel) -> rss.
fn group_by_time(rows: &[TraceRow], links: usize) -> Result<Vec<(f64, HashMap<(usize, usize), f64>)>> {
    let mut groups: Vec<(f64, HashMap<(usize, usize), f64>)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        // Row i sits on line i + 2 of a file with a header.
        let line = i as u64 + 2;
        if r.link >= links {
            return Err(DflError::format(line, format!("link {} not in configuration ({links} links)", r.link)));
        }
        match groups.last_mut() {
            Some((t, g)) if *t == r.t => {
                if g.insert((r.link, r.channel), r.rss).is_some() {
                    return Err(DflError::format(
                        line,
                        format!("duplicate sample for link {} channel {} at t={}", r.link, r.channel, r.t),
                    ));
                }
            }
            Some((t, _)) if r.t < *t => {
                return Err(DflError::format(line, "timestamps must be non-decreasing"));
            }
            _ => groups.push((r.t, HashMap::from([((r.link, r.channel), r.rss)]))),
        }
    }
    Ok(groups)
}

/// Turns a raw trace into per-timestamp combined RSS and windowed PSD peaks.
///
/// Calibration uses every sample within `calibration_window` seconds of the first
/// timestamp. Channels missing at a timestamp are left out of that step's average.
pub fn replay(rows: &[TraceRow], links: usize, spectral: &SpectralConfig, calibration_window: f64) -> Result<MeasurementStream> {
    let groups = group_by_time(rows, links)?;
    let channels = rows.iter().map(|r| r.channel + 1).max().unwrap_or(0);
    let t0 = groups.first().map_or(0.0, |g| g.0);

    let mut sums = vec![vec![(0.0, 0usize); channels]; links];
    for (t, g) in &groups {
        if *t - t0 >= calibration_window {
            break;
        }
        for (&(l, c), &rss) in g {
            sums[l][c].0 += rss;
            sums[l][c].1 += 1;
        }
    }
    let means: Vec<Vec<Option<f64>>> = sums
        .iter()
        .map(|row| row.iter().map(|&(s, n)| (n > 0).then(|| s / n as f64)).collect())
        .collect();

    let mut psd = PsdEstimator::new(spectral.clone())?;
    let n_f = spectral.window_len;
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); links];
    let mut frames = Vec::with_capacity(groups.len());
    let mut samples = Vec::with_capacity(channels);
    let mut cal_means = Vec::with_capacity(channels);
    for (t, g) in &groups {
        let mut inputs = Vec::with_capacity(links);
        let mut present = Vec::with_capacity(links);
        for l in 0..links {
            samples.clear();
            cal_means.clear();
            for (c, mean) in means[l].iter().enumerate() {
                if let (Some(&rss), Some(m)) = (g.get(&(l, c)), mean) {
                    samples.push(rss);
                    cal_means.push(*m);
                }
            }
            present.push(samples.len());
            let rss = if samples.is_empty() {
                None
            } else {
                Some(mean_remove_and_combine(&samples, &cal_means)?)
            };
            let h = &mut history[l];
            h.push(rss.unwrap_or(f64::NAN));
            let freq = if h.len() >= n_f {
                psd.estimate(&h[h.len() - n_f..])?
            } else {
                FrequencyMeasurement::INVALID
            };
            inputs.push(LinkInput { rss, freq });
        }
        frames.push(MeasurementFrame {
            t: *t,
            links: inputs,
            channels_present: present,
        });
    }

    let combined_noise_std = (0..links)
        .map(|l| {
            let cal: Vec<f64> = frames
                .iter()
                .take_while(|f| f.t - t0 < calibration_window)
                .filter_map(|f| f.links[l].rss)
                .collect();
            sample_std(&cal)
        })
        .collect();

    Ok(MeasurementStream {
        calibration: Calibration {
            means,
            combined_noise_std,
        },
        frames,
    })
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
