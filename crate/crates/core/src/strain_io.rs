//! Strain matrices, event logs, pick and track files.
//!
//! A strain file is a short text header of `key=value` lines followed by a
//! little-endian `f32` payload in time-major row order:
//!
//! ```text
//! das-strain v1
//! n_channels=204
//! n_samples=3000
//! channel_spacing=1
//! channel0_position=3963
//! sample_interval=0.2
//! t0=0
//! is_log_rms=true
//! gauge_length=10
//! end_header
//! <n_samples * n_channels little-endian f32 values>
//! ```
//!
//! Values are held as `f64` in memory. Saving narrows them to `f32`, so a
//! save/load round trip is exact for every value representable in `f32`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::picker::Pick;
use crate::tracker::TrackRecord;

const MAGIC: &str = "das-strain v1";
const END_HEADER: &str = "end_header";

/// Geometry and timing of a strain matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainMeta {
    /// Meters between consecutive channels.
    pub channel_spacing: f64,
    /// Fiber distance of channel 0, meters from the interrogator.
    pub channel0_position: f64,
    /// Seconds between consecutive rows.
    pub sample_interval: f64,
    /// Time of row 0 in seconds.
    pub t0: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    /// Informational only.
    pub gauge_length: f64,
    pub is_log_rms: bool,
}

impl StrainMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.channel_spacing > 0.0) || !self.channel_spacing.is_finite() {
            return Err(Error::Format(format!(
                "channel_spacing must be positive, got {}",
                self.channel_spacing
            )));
        }
        if !(self.sample_interval > 0.0) || !self.sample_interval.is_finite() {
            return Err(Error::Format(format!(
                "sample_interval must be positive, got {}",
                self.sample_interval
            )));
        }
        if self.n_channels == 0 || self.n_samples == 0 {
            return Err(Error::Format(format!(
                "matrix must be non-empty, got {} samples x {} channels",
                self.n_samples, self.n_channels
            )));
        }
        if !self.channel0_position.is_finite() || !self.t0.is_finite() {
            return Err(Error::Format("channel0_position and t0 must be finite".into()));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.sample_interval
    }

    pub fn channel_position(&self, channel: f64) -> f64 {
        self.channel0_position + channel * self.channel_spacing
    }

    pub fn sample_time(&self, sample: f64) -> f64 {
        self.t0 + sample * self.sample_interval
    }

    /// Fractional channel index of a fiber position.
    pub fn channel_of(&self, position: f64) -> f64 {
        (position - self.channel0_position) / self.channel_spacing
    }
}

/// A `n_samples x n_channels` matrix of strain or log-RMS values, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainBatch {
    pub meta: StrainMeta,
    values: Vec<f64>,
}

impl StrainBatch {
    pub fn new(meta: StrainMeta, values: Vec<f64>) -> Result<Self> {
        meta.validate()?;
        let expected = meta.n_samples * meta.n_channels;
        if values.len() != expected {
            return Err(Error::PayloadSize {
                expected,
                found: values.len(),
                first_bad_row: values.len() / meta.n_channels,
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / meta.n_channels,
                col: idx % meta.n_channels,
            });
        }
        Ok(StrainBatch { meta, values })
    }

    /// Builds a batch from `f(sample, channel)`.
    pub fn from_fn(meta: StrainMeta, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(meta.n_samples * meta.n_channels);
        for t in 0..meta.n_samples {
            for c in 0..meta.n_channels {
                values.push(f(t, c));
            }
        }
        Self::new(meta, values)
    }

    pub fn n_samples(&self) -> usize {
        self.meta.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.meta.n_channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, sample: usize, channel: usize) -> f64 {
        self.values[sample * self.meta.n_channels + channel]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        let n = self.meta.n_channels;
        &self.values[sample * n..(sample + 1) * n]
    }

    /// Copies one channel out as a time series.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        (0..self.meta.n_samples)
            .map(|t| self.get(t, channel))
            .collect()
    }

    /// Applies `f` to every channel's time series independently. `f` must
    /// return series of identical length; `meta` describes the result.
    pub(crate) fn map_channels(
        &self,
        meta: StrainMeta,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<Self> {
        let n_ch = self.meta.n_channels;
        let mut out = vec![0.0; meta.n_samples * n_ch];
        for c in 0..n_ch {
            let series = f(&self.channel(c))?;
            if series.len() != meta.n_samples {
                return Err(Error::Numeric(format!(
                    "channel transform produced {} samples, expected {}",
                    series.len(),
                    meta.n_samples
                )));
            }
            for (t, v) in series.into_iter().enumerate() {
                out[t * n_ch + c] = v;
            }
        }
        Self::new(meta, out)
    }

    /// Rows `[start, end)` as a new batch with shifted `t0`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.meta.n_samples);
        if start >= end {
            return Err(Error::Domain(format!("empty row range {start}..{end}")));
        }
        let n = self.meta.n_channels;
        let meta = StrainMeta {
            n_samples: end - start,
            t0: self.meta.sample_time(start as f64),
            ..self.meta.clone()
        };
        Self::new(meta, self.values[start * n..end * n].to_vec())
    }
}

fn write_header(w: &mut impl Write, meta: &StrainMeta) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n_channels={}", meta.n_channels)?;
    writeln!(w, "n_samples={}", meta.n_samples)?;
    writeln!(w, "channel_spacing={}", meta.channel_spacing)?;
    writeln!(w, "channel0_position={}", meta.channel0_position)?;
    writeln!(w, "sample_interval={}", meta.sample_interval)?;
    writeln!(w, "t0={}", meta.t0)?;
    writeln!(w, "is_log_rms={}", meta.is_log_rms)?;
    writeln!(w, "gauge_length={}", meta.gauge_length)?;
    writeln!(w, "{END_HEADER}")
}

fn read_header(r: &mut impl BufRead) -> Result<StrainMeta> {
    let mut line = String::new();
    let next_line = |r: &mut dyn BufRead, line: &mut String| -> Result<bool> {
        line.clear();
        let n = r
            .read_line(line)
            .map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
        Ok(n > 0)
    };

    if !next_line(r, &mut line)? || line.trim_end() != MAGIC {
        return Err(Error::Format(format!("missing '{MAGIC}' magic line")));
    }

    let mut fields: std::collections::HashMap<String, String> = Default::default();
    loop {
        if !next_line(r, &mut line)? {
            return Err(Error::Format(format!("header ended without '{END_HEADER}'")));
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed == END_HEADER {
            break;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header line '{trimmed}' is not key=value")))?;
        let key = key.trim().to_string();
        if fields.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Format(format!("duplicate header key '{key}'")));
        }
    }

    fn take<T: FromStr>(
        fields: &mut std::collections::HashMap<String, String>,
        key: &str,
    ) -> Result<T> {
        let raw = fields
            .remove(key)
            .ok_or_else(|| Error::Format(format!("header is missing '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::Format(format!("header '{key}' has unparseable value '{raw}'")))
    }

    let meta = StrainMeta {
        n_channels: take(&mut fields, "n_channels")?,
        n_samples: take(&mut fields, "n_samples")?,
        channel_spacing: take(&mut fields, "channel_spacing")?,
        channel0_position: take(&mut fields, "channel0_position")?,
        sample_interval: take(&mut fields, "sample_interval")?,
        t0: take(&mut fields, "t0")?,
        is_log_rms: take(&mut fields, "is_log_rms")?,
        gauge_length: take(&mut fields, "gauge_length")?,
    };
    if let Some(key) = fields.keys().min() {
        return Err(Error::Format(format!("unknown header key '{key}'")));
    }
    meta.validate()?;
    Ok(meta)
}

pub fn save_strain(batch: &StrainBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_header(&mut w, &batch.meta).map_err(|e| Error::io(path, e))?;
    for v in &batch.values {
        w.write_all(&(*v as f32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_strain(path: impl AsRef<Path>) -> Result<StrainBatch> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let meta = read_header(&mut r)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;

    let expected = meta.n_samples * meta.n_channels;
    let found = bytes.len() / 4;
    if bytes.len() % 4 != 0 || found != expected {
        return Err(Error::PayloadSize {
            expected,
            found,
            first_bad_row: found / meta.n_channels,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    StrainBatch::new(meta, values)
}

/// Reads a strain file a block of rows at a time, holding only one block.
pub struct StrainReader {
    meta: StrainMeta,
    reader: BufReader<File>,
    next_row: usize,
    path: std::path::PathBuf,
}

impl StrainReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let meta = read_header(&mut reader)?;
        Ok(StrainReader {
            meta,
            reader,
            next_row: 0,
            path: path.to_path_buf(),
        })
    }

    pub fn meta(&self) -> &StrainMeta {
        &self.meta
    }

    /// Returns the next `max_rows` rows (fewer at the end), or `None` once exhausted.
    pub fn next_block(&mut self, max_rows: usize) -> Result<Option<StrainBatch>> {
        let remaining = self.meta.n_samples - self.next_row;
        if remaining == 0 || max_rows == 0 {
            return Ok(None);
        }
        let rows = remaining.min(max_rows);
        let n_ch = self.meta.n_channels;
        let mut buf = vec![0u8; rows * n_ch * 4];
        let mut filled = 0;
        while filled < buf.len() {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io(&self.path, e)),
            }
        }
        if filled < buf.len() {
            let found = self.next_row * n_ch + filled / 4;
            return Err(Error::PayloadSize {
                expected: self.meta.n_samples * n_ch,
                found,
                first_bad_row: found / n_ch,
            });
        }
        let values: Vec<f64> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.next_row + idx / n_ch,
                col: idx % n_ch,
            });
        }
        let meta = StrainMeta {
            n_samples: rows,
            t0: self.meta.sample_time(self.next_row as f64),
            ..self.meta.clone()
        };
        self.next_row += rows;
        StrainBatch::new(meta, values).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Train,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 2] = [ObjectClass::Car, ObjectClass::Train];

    pub fn index(self) -> usize {
        match self {
            ObjectClass::Car => 0,
            ObjectClass::Train => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Train => "train",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Ok(ObjectClass::Car),
            "train" => Ok(ObjectClass::Train),
            other => Err(format!("unknown class label '{other}'")),
        }
    }
}

/// Travel direction. Positive velocity (increasing fiber distance, away from
/// the interrogator) is southbound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    North,
    South,
}

impl Direction {
    pub fn from_velocity(v: f64) -> Direction {
        if v >= 0.0 {
            Direction::South
        } else {
            Direction::North
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "north" => Ok(Direction::North),
            "south" => Ok(Direction::South),
            other => Err(format!("unknown direction '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub time: f64,
    pub class: ObjectClass,
    pub direction: Direction,
    pub count: u32,
}

/// Hand-logged passages at a reference site, sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub entries: Vec<LoggedEvent>,
}

impl EventLog {
    pub fn new(mut entries: Vec<LoggedEvent>) -> Self {
        entries.sort_by(|a, b| a.time.total_cmp(&b.time));
        EventLog { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.time).collect()
    }
}

pub fn load_events(path: impl AsRef<Path>) -> Result<EventLog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text)
}

pub fn parse_events(text: &str) -> Result<EventLog> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line_no == 1 && line.to_ascii_lowercase().starts_with("time") {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", cols.len())));
        }
        let time: f64 = cols[0]
            .parse()
            .map_err(|_| parse_err(format!("bad time '{}'", cols[0])))?;
        if !time.is_finite() {
            return Err(parse_err(format!("non-finite time '{}'", cols[0])));
        }
        let class = cols[1].parse().map_err(parse_err)?;
        let direction = cols[2].parse().map_err(parse_err)?;
        let count: u32 = cols[3]
            .parse()
            .map_err(|_| parse_err(format!("bad count '{}'", cols[3])))?;
        if count == 0 {
            return Err(parse_err("count must be at least 1".into()));
        }
        entries.push(LoggedEvent {
            time,
            class,
            direction,
            count,
        });
    }
    Ok(EventLog::new(entries))
}

pub fn save_events(log: &EventLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("time,class,direction,count\n");
    for e in &log.entries {
        out.push_str(&format!("{},{},{},{}\n", e.time, e.class, e.direction, e.count));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const PICK_CSV_HEADER: &str = "time_s,position_m,log_amplitude,cluster_id";

/// Appends picks as CSV rows; `first_id` numbers the first row's cluster.
pub fn write_pick_rows(w: &mut impl Write, picks: &[Pick], first_id: usize) -> std::io::Result<()> {
    for (i, p) in picks.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            p.time,
            p.position,
            p.log_amplitude,
            first_id + i
        )?;
    }
    Ok(())
}

pub fn save_picks(picks: &[Pick], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{PICK_CSV_HEADER}").map_err(|e| Error::io(path, e))?;
    write_pick_rows(&mut w, picks, 0).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pick CSV. Cluster sizes are not stored in the file and load as 1.
pub fn load_picks(path: impl AsRef<Path>) -> Result<Vec<Pick>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut picks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || (line_no == 1 && line.starts_with("time_s")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad number '{s}'"),
                })
        };
        picks.push(Pick {
            time: num(cols[0])?,
            position: num(cols[1])?,
            log_amplitude: num(cols[2])?,
            cluster_size: 1,
        });
    }
    Ok(picks)
}

pub fn write_track_records(w: &mut impl Write, records: &[TrackRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_track_records(records: &[TrackRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_track_records(&mut w, records).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_track_records(path: impl AsRef<Path>) -> Result<Vec<TrackRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Smallest spatial sampling interval an interrogator can resolve:
/// `delta_tau * c / (2 * n_g)` meters for pulse duration `delta_tau`
/// seconds, group index `n_g` and vacuum light speed `c` m/s.
pub fn spatial_sampling_interval(delta_tau: f64, n_g: f64, c: f64) -> Result<f64> {
    for (name, v) in [("delta_tau", delta_tau), ("n_g", n_g), ("c", c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(delta_tau * c / (2.0 * n_g))
}
