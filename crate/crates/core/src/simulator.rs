//! Ground-truth scenarios at two fidelities.
//!
//! [`simulate_picks`] emits the tracker's own measurement model: each object
//! in the field of view yields a noisy position pick with probability
//! `p_detect` per step, and Poisson clutter is scattered uniformly over the
//! field of view. [`simulate_field`] instead renders a log-RMS strain matrix
//! in which each object is a Gaussian ridge over background noise, for
//! exercising the full extraction pipeline.
//!
//! Everything is a pure function of the scenario (seed included).
//! Trajectories, pick noise and field noise use separate random streams, so
//! both fidelities share identical trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::picker::Pick;
use crate::strain_io::{Direction, EventLog, LoggedEvent, ObjectClass, StrainBatch, StrainMeta};
use crate::tracker::{MotionModel, TrackRecord, TrackStatus};

const TRAJECTORY_STREAM: u64 = 0;
const PICK_STREAM: u64 = 1;
const FIELD_STREAM: u64 = 2;

/// Greedy track-to-object matching radius, meters.
pub const MATCH_RADIUS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntrySide {
    /// Enters at the start of the field of view and moves outward.
    Lower,
    /// Enters at the end of the field of view and moves inward.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub birth_time: f64,
    pub entry_side: EntrySide,
    /// Initial speed, m/s. Must be positive.
    pub speed: f64,
    pub class: ObjectClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldParams {
    pub channel_spacing: f64,
    /// Gaussian ridge width (standard deviation) per class, channels.
    pub blob_width_channels: [f64; 2],
    /// Temporal standard deviation of each step's emission, seconds.
    pub blob_duration: f64,
    pub noise_floor: f64,
    pub noise_sigma: f64,
    /// Fiber rendered beyond each end of the field of view, meters. Objects
    /// continue at constant velocity through it before entering and after
    /// leaving the field of view.
    pub margin: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            channel_spacing: 1.0,
            blob_width_channels: [8.0, 16.0],
            blob_duration: 0.1,
            noise_floor: -10.0,
            noise_sigma: 0.3,
            margin: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub objects: Vec<ObjectSpec>,
    pub fov_start: f64,
    pub fov_end: f64,
    /// Scenario length, seconds.
    pub duration: f64,
    /// Step length, seconds.
    pub dt: f64,
    pub seed: u64,
    /// Clutter picks per meter per step.
    pub clutter_intensity: f64,
    pub p_detect: f64,
    /// Pick position noise variance, m^2.
    pub sigma_r2: f64,
    /// Process-noise intensity of the true trajectories.
    pub process_noise_q2: f64,
    /// Mean pick log-amplitude per class (car, train).
    pub alpha: [f64; 2],
    /// Pick log-amplitude variance per class.
    pub tau2: [f64; 2],
    /// Threshold the clutter amplitudes sit just above.
    pub amplitude_threshold: f64,
    pub clutter_amplitude_offset: f64,
    pub clutter_amplitude_var: f64,
    pub field: FieldParams,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            objects: Vec::new(),
            fov_start: 3963.0,
            fov_end: 4167.0,
            duration: 600.0,
            dt: 0.2,
            seed: 0,
            clutter_intensity: 1.0 / 200.0,
            p_detect: 0.9,
            sigma_r2: 15.0,
            process_noise_q2: 1.0,
            alpha: [-8.0, -5.5],
            tau2: [0.25, 0.25],
            amplitude_threshold: -8.8,
            clutter_amplitude_offset: 0.3,
            clutter_amplitude_var: 0.04,
            field: FieldParams::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_start < self.fov_end) {
            return Err(Error::Config("field of view is empty".into()));
        }
        if !(self.duration > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("duration and dt must be positive".into()));
        }
        if !(self.p_detect >= 0.0 && self.p_detect <= 1.0) {
            return Err(Error::Config(format!("p_detect {} is not a probability", self.p_detect)));
        }
        if !(self.clutter_intensity >= 0.0 && self.sigma_r2 >= 0.0 && self.process_noise_q2 >= 0.0) {
            return Err(Error::Config("noise and clutter parameters must be non-negative".into()));
        }
        if self.tau2.iter().any(|t| !(*t >= 0.0)) || !(self.clutter_amplitude_var >= 0.0) {
            return Err(Error::Config("amplitude variances must be non-negative".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.speed > 0.0) {
                return Err(Error::Config(format!(
                    "object {i} has speed {}; objects must move",
                    o.speed
                )));
            }
            if !(o.birth_time >= 0.0 && o.birth_time < self.duration) {
                return Err(Error::Config(format!(
                    "object {i} is born at {} s, outside the scenario",
                    o.birth_time
                )));
            }
        }
        let f = &self.field;
        if !(f.channel_spacing > 0.0
            && f.blob_width_channels.iter().all(|w| *w > 0.0)
            && f.blob_duration > 0.0
            && f.noise_sigma >= 0.0
            && f.margin >= 0.0)
        {
            return Err(Error::Config("field parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// One object's true state at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub step: usize,
    pub position: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTruth {
    pub id: usize,
    pub class: ObjectClass,
    pub direction: Direction,
    /// Consecutive in-view steps.
    pub samples: Vec<TruthSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dt: f64,
    pub objects: Vec<ObjectTruth>,
    /// Per step, `(object id, pick index)` for every object-originated pick.
    pub origins: Vec<Vec<(usize, usize)>>,
    /// Per step, number of clutter picks.
    pub clutter_counts: Vec<usize>,
}

impl GroundTruth {
    /// Ground truth as CSV `object_id,class,direction,step,t,position_m,velocity_mps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("object_id,class,direction,step,t,position_m,velocity_mps\n");
        for o in &self.objects {
            for s in &o.samples {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    o.id,
                    o.class,
                    o.direction,
                    s.step,
                    s.step as f64 * self.dt,
                    s.position,
                    s.velocity
                ));
            }
        }
        out
    }
}

impl GroundTruth {
    /// One log entry per object, at the first step where it is at or past
    /// `position` along its direction of travel.
    pub fn event_log(&self, position: f64) -> EventLog {
        EventLog::new(
            self.objects
                .iter()
                .filter_map(|o| {
                    let passed = |s: &&TruthSample| match o.direction {
                        Direction::South => s.position >= position,
                        Direction::North => s.position <= position,
                    };
                    o.samples.iter().find(passed).map(|s| LoggedEvent {
                        time: s.step as f64 * self.dt,
                        class: o.class,
                        direction: o.direction,
                        count: 1,
                    })
                })
                .collect(),
        )
    }

    /// Reads the CSV written by [`GroundTruth::to_csv`]. Pick origins and
    /// clutter counts are not part of the CSV and come back empty.
    pub fn from_csv(text: &str, dt: f64) -> Result<GroundTruth> {
        let mut objects: Vec<ObjectTruth> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if idx == 0 || line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(err(format!("expected 7 columns, found {}", cols.len())));
            }
            let num = |i: usize| -> Result<f64> {
                cols[i]
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad number '{}'", cols[i])))
            };
            let id: usize = cols[0].parse().map_err(|_| err(format!("bad object id '{}'", cols[0])))?;
            let class: ObjectClass = cols[1].parse().map_err(err)?;
            let direction: Direction = cols[2].parse().map_err(err)?;
            let step: usize = cols[3].parse().map_err(|_| err(format!("bad step '{}'", cols[3])))?;
            let sample = TruthSample {
                step,
                position: num(5)?,
                velocity: num(6)?,
            };
            match objects.iter_mut().find(|o| o.id == id) {
                Some(o) => o.samples.push(sample),
                None => objects.push(ObjectTruth {
                    id,
                    class,
                    direction,
                    samples: vec![sample],
                }),
            }
        }
        objects.sort_by_key(|o| o.id);
        if objects.iter().enumerate().any(|(i, o)| o.id != i) {
            return Err(Error::Format("object ids must run 0, 1, 2, ...".into()));
        }
        Ok(GroundTruth {
            dt,
            objects,
            origins: Vec::new(),
            clutter_counts: Vec::new(),
        })
    }
}

/// True trajectories. Each object starts at its entry boundary at its birth
/// time, follows the discretized white-acceleration model, and is dropped
/// for good once it leaves the field of view.
pub fn truth_trajectories(scn: &Scenario) -> Result<Vec<ObjectTruth>> {
    scn.validate()?;
    let model = MotionModel {
        dt: scn.dt,
        sigma_q2: scn.process_noise_q2,
        sigma_r2: scn.sigma_r2.max(f64::MIN_POSITIVE),
    };
    let g = model.transition();
    let chol = model
        .process_noise()
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(nalgebra::Matrix2::zeros);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = scn.rng(TRAJECTORY_STREAM);
    let n_steps = scn.n_steps();

    let mut out = Vec::with_capacity(scn.objects.len());
    for (id, spec) in scn.objects.iter().enumerate() {
        let (entry, velocity, direction) = match spec.entry_side {
            EntrySide::Lower => (scn.fov_start, spec.speed, Direction::South),
            EntrySide::Upper => (scn.fov_end, -spec.speed, Direction::North),
        };
        let first = (spec.birth_time / scn.dt).ceil() as usize;
        let lead = first as f64 * scn.dt - spec.birth_time;
        let mut state = nalgebra::Vector2::new(entry + velocity * lead, velocity);
        let mut samples = Vec::new();
        for step in first..n_steps {
            if step > first {
                let w = nalgebra::Vector2::new(std_normal.sample(&mut rng), std_normal.sample(&mut rng));
                state = g * state + chol * w;
            }
            if state[0] < scn.fov_start || state[0] > scn.fov_end {
                break;
            }
            samples.push(TruthSample {
                step,
                position: state[0],
                velocity: state[1],
            });
        }
        out.push(ObjectTruth {
            id,
            class: spec.class,
            direction,
            samples,
        });
    }
    Ok(out)
}

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.max(0.0).sqrt()).expect("finite normal parameters")
}

/// Pick-level simulation. Returns ground truth and one pick list per step,
/// with pick times on the step grid.
pub fn simulate_picks(scn: &Scenario) -> Result<(GroundTruth, Vec<Vec<Pick>>)> {
    let objects = truth_trajectories(scn)?;
    let n_steps = scn.n_steps();
    let mut rng = scn.rng(PICK_STREAM);
    let pos_noise = normal(0.0, scn.sigma_r2);
    let amp = [normal(scn.alpha[0], scn.tau2[0]), normal(scn.alpha[1], scn.tau2[1])];
    let clutter_amp = normal(
        scn.amplitude_threshold + scn.clutter_amplitude_offset,
        scn.clutter_amplitude_var,
    );
    let fov_len = scn.fov_end - scn.fov_start;
    let clutter_mean = scn.clutter_intensity * fov_len;
    let clutter_count = (clutter_mean > 0.0).then(|| Poisson::new(clutter_mean).expect("positive mean"));

    // per step, which objects are in view and where
    let mut in_view: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_steps];
    for o in &objects {
        for s in &o.samples {
            in_view[s.step].push((o.id, s.position));
        }
    }

    let mut picks = Vec::with_capacity(n_steps);
    let mut origins = Vec::with_capacity(n_steps);
    let mut clutter_counts = Vec::with_capacity(n_steps);
    for (k, present) in in_view.iter().enumerate() {
        let t = k as f64 * scn.dt;
        let mut step_picks = Vec::new();
        let mut step_origins = Vec::new();
        for &(id, position) in present {
            if rng.gen::<f64>() < scn.p_detect {
                let class = objects[id].class;
                step_origins.push((id, step_picks.len()));
                step_picks.push(Pick {
                    time: t,
                    position: position + pos_noise.sample(&mut rng),
                    log_amplitude: amp[class.index()].sample(&mut rng),
                    cluster_size: 1,
                });
            }
        }
        let n_clutter = clutter_count.map_or(0, |d| d.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            step_picks.push(Pick {
                time: t,
                position: scn.fov_start + fov_len * rng.gen::<f64>(),
                log_amplitude: clutter_amp.sample(&mut rng),
                cluster_size: 1,
            });
        }
        picks.push(step_picks);
        origins.push(step_origins);
        clutter_counts.push(n_clutter);
    }
    Ok((
        GroundTruth {
            dt: scn.dt,
            objects,
            origins,
            clutter_counts,
        },
        picks,
    ))
}

/// Renders the scenario as a log-RMS field over the field of view plus
/// `field.margin` on both sides, one row per step. Each object contributes,
/// at every step, a Gaussian bump in channel (class width) and time
/// (`blob_duration`) whose peak rises from the noise floor to the class
/// amplitude; overlapping bumps combine by maximum. Outside the field of view
/// objects move at their entry or exit velocity.
pub fn simulate_field(scn: &Scenario) -> Result<StrainBatch> {
    let objects = truth_trajectories(scn)?;
    let f = &scn.field;
    let n_steps = scn.n_steps();
    let start = scn.fov_start - f.margin;
    let end = scn.fov_end + f.margin;
    let n_channels = ((end - start) / f.channel_spacing).floor() as usize + 1;
    let meta = StrainMeta {
        channel_spacing: f.channel_spacing,
        channel0_position: start,
        sample_interval: scn.dt,
        t0: 0.0,
        n_channels,
        n_samples: n_steps,
        gauge_length: f.channel_spacing,
        is_log_rms: true,
    };

    let mut bump = vec![0.0f64; n_steps * n_channels];
    let reach_steps = (3.0 * f.blob_duration / scn.dt).ceil() as i64;
    for o in &objects {
        let (Some(first), Some(last)) = (o.samples.first(), o.samples.last()) else {
            continue;
        };
        let width = f.blob_width_channels[o.class.index()];
        let height = scn.alpha[o.class.index()] - f.noise_floor;
        let reach_ch = (4.0 * width).ceil() as i64;
        let lead = (f.margin / first.velocity.abs()).ceil() as usize + 1;
        let trail = (f.margin / last.velocity.abs()).ceil() as usize + 1;
        let path = (first.step.saturating_sub(lead)..first.step)
            .map(|k| (k, first.position - first.velocity * (first.step - k) as f64 * scn.dt))
            .chain(o.samples.iter().map(|s| (s.step, s.position)))
            .chain((last.step + 1..=last.step + trail).map(|k| {
                (k, last.position + last.velocity * (k - last.step) as f64 * scn.dt)
            }))
            .filter(|&(k, pos)| k < n_steps && pos >= start && pos <= end);
        for (step, position) in path {
            let center = (position - start) / f.channel_spacing;
            for dk in -reach_steps..=reach_steps {
                let row = step as i64 + dk;
                if row < 0 || row >= n_steps as i64 {
                    continue;
                }
                let dt = dk as f64 * scn.dt;
                let time_w = (-dt * dt / (2.0 * f.blob_duration.powi(2))).exp();
                let c0 = (center.round() as i64 - reach_ch).max(0);
                let c1 = (center.round() as i64 + reach_ch).min(n_channels as i64 - 1);
                for c in c0..=c1 {
                    let d = c as f64 - center;
                    let v = height * time_w * (-d * d / (2.0 * width * width)).exp();
                    let cell = &mut bump[row as usize * n_channels + c as usize];
                    if v > *cell {
                        *cell = v;
                    }
                }
            }
        }
    }

    let mut rng = scn.rng(FIELD_STREAM);
    let noise = normal(0.0, f.noise_sigma * f.noise_sigma);
    let values = bump
        .into_iter()
        .map(|b| f.noise_floor + b + noise.sample(&mut rng))
        .collect();
    StrainBatch::new(meta, values)
}

/// Per-track summary derived from its record stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub track_id: u64,
    pub first_t: f64,
    pub last_t: f64,
    pub confirmed: bool,
    /// Car probability at the last record.
    pub final_p_car: f64,
    /// Mean velocity over confirmed records, or all records if never confirmed.
    pub mean_velocity: f64,
    pub records: Vec<TrackRecord>,
}

impl TrackSummary {
    pub fn final_class(&self) -> ObjectClass {
        if self.final_p_car >= 0.5 {
            ObjectClass::Car
        } else {
            ObjectClass::Train
        }
    }

    pub fn direction(&self) -> Direction {
        Direction::from_velocity(self.mean_velocity)
    }
}

/// Groups records by track id, in order of first appearance.
pub fn summarize_tracks(records: &[TrackRecord]) -> Vec<TrackSummary> {
    let mut order: Vec<u64> = Vec::new();
    let mut by_id: std::collections::HashMap<u64, Vec<TrackRecord>> = Default::default();
    for r in records {
        by_id
            .entry(r.track_id)
            .or_insert_with(|| {
                order.push(r.track_id);
                Vec::new()
            })
            .push(r.clone());
    }
    order
        .into_iter()
        .map(|id| {
            let recs = by_id.remove(&id).unwrap_or_default();
            let confirmed = recs.iter().any(|r| r.status == TrackStatus::Confirmed);
            let pool: Vec<&TrackRecord> = if confirmed {
                recs.iter().filter(|r| r.status == TrackStatus::Confirmed).collect()
            } else {
                recs.iter().collect()
            };
            let mean_velocity = pool.iter().map(|r| r.vel_mean).sum::<f64>() / pool.len().max(1) as f64;
            TrackSummary {
                track_id: id,
                first_t: recs.first().map_or(0.0, |r| r.t),
                last_t: recs.last().map_or(0.0, |r| r.t),
                confirmed,
                final_p_car: recs.last().map_or(0.5, |r| r.p_car),
                mean_velocity,
                records: recs,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DirectionSpeeds {
    /// Mean estimated velocity of matched tracks, m/s.
    pub estimated: Option<f64>,
    /// Mean true velocity of the matched objects over the same steps, m/s.
    pub truth: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingMetrics {
    pub n_objects: usize,
    pub n_confirmed: usize,
    pub n_matched: usize,
    /// Fraction of matched tracks whose final class is correct; `None` when
    /// nothing matched.
    pub class_accuracy: Option<f64>,
    pub position_rmse: Option<f64>,
    /// Mean over matched pairs of estimated minus true mean velocity.
    pub velocity_mean_error: Option<f64>,
    pub south: DirectionSpeeds,
    pub north: DirectionSpeeds,
}

/// Matched track/object pair with the steps they share.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackMatch {
    pub track_id: u64,
    pub object_id: usize,
    pub mean_distance: f64,
}

/// Pairs confirmed tracks with objects greedily by mean position distance
/// over shared steps, accepting pairs within [`MATCH_RADIUS`] whose shared
/// steps cover at least half of the track's live records.
pub fn match_tracks(truth: &GroundTruth, tracks: &[TrackSummary]) -> Vec<TrackMatch> {
    let mut candidates = Vec::new();
    for tr in tracks.iter().filter(|t| t.confirmed) {
        for o in &truth.objects {
            let pairs = shared_steps(truth.dt, tr, o);
            let live = tr.records.iter().filter(|r| r.status != TrackStatus::Deleted).count();
            if pairs.is_empty() || 2 * pairs.len() < live {
                continue;
            }
            let mean = pairs.iter().map(|(r, s)| (r.pos_mean - s.position).abs()).sum::<f64>()
                / pairs.len() as f64;
            if mean <= MATCH_RADIUS {
                candidates.push(TrackMatch {
                    track_id: tr.track_id,
                    object_id: o.id,
                    mean_distance: mean,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.mean_distance
            .total_cmp(&b.mean_distance)
            .then(a.track_id.cmp(&b.track_id))
            .then(a.object_id.cmp(&b.object_id))
    });
    let mut used_tracks = std::collections::HashSet::new();
    let mut used_objects = std::collections::HashSet::new();
    candidates
        .into_iter()
        .filter(|m| {
            if used_tracks.contains(&m.track_id) || used_objects.contains(&m.object_id) {
                return false;
            }
            used_tracks.insert(m.track_id);
            used_objects.insert(m.object_id);
            true
        })
        .collect()
}

/// Live (non-deleted) records paired with the truth sample of the same step.
fn shared_steps<'a>(
    dt: f64,
    track: &'a TrackSummary,
    object: &'a ObjectTruth,
) -> Vec<(&'a TrackRecord, &'a TruthSample)> {
    let Some(first) = object.samples.first().map(|s| s.step) else {
        return Vec::new();
    };
    track
        .records
        .iter()
        .filter(|r| r.status != TrackStatus::Deleted)
        .filter_map(|r| {
            let step = (r.t / dt).round();
            if step < first as f64 {
                return None;
            }
            object.samples.get(step as usize - first).map(|s| (r, s))
        })
        .collect()
}

/// Scores tracker output against ground truth.
pub fn score_tracking(truth: &GroundTruth, records: &[TrackRecord]) -> TrackingMetrics {
    let tracks = summarize_tracks(records);
    let matches = match_tracks(truth, &tracks);
    let by_id: std::collections::HashMap<u64, &TrackSummary> =
        tracks.iter().map(|t| (t.track_id, t)).collect();

    let mut sq = 0.0;
    let mut n_sq = 0usize;
    let mut correct = 0usize;
    let mut vel_err = 0.0;
    let mut south = (0.0, 0.0, 0usize);
    let mut north = (0.0, 0.0, 0usize);
    for m in &matches {
        let tr = by_id[&m.track_id];
        let obj = &truth.objects[m.object_id];
        let pairs = shared_steps(truth.dt, tr, obj);
        for (r, s) in &pairs {
            sq += (r.pos_mean - s.position).powi(2);
            n_sq += 1;
        }
        if tr.final_class() == obj.class {
            correct += 1;
        }
        let n = pairs.len() as f64;
        let est = pairs.iter().map(|(r, _)| r.vel_mean).sum::<f64>() / n;
        let tru = pairs.iter().map(|(_, s)| s.velocity).sum::<f64>() / n;
        vel_err += est - tru;
        let acc = match obj.direction {
            Direction::South => &mut south,
            Direction::North => &mut north,
        };
        acc.0 += est;
        acc.1 += tru;
        acc.2 += 1;
    }
    let nm = matches.len();
    let speeds = |(e, t, n): (f64, f64, usize)| DirectionSpeeds {
        estimated: (n > 0).then(|| e / n as f64),
        truth: (n > 0).then(|| t / n as f64),
        n,
    };
    TrackingMetrics {
        n_objects: truth.objects.iter().filter(|o| !o.samples.is_empty()).count(),
        n_confirmed: tracks.iter().filter(|t| t.confirmed).count(),
        n_matched: nm,
        class_accuracy: (nm > 0).then(|| correct as f64 / nm as f64),
        position_rmse: (n_sq > 0).then(|| (sq / n_sq as f64).sqrt()),
        velocity_mean_error: (nm > 0).then(|| vel_err / nm as f64),
        south: speeds(south),
        north: speeds(north),
    }
}
