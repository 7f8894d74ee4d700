//! JPDA multi-object tracker over a fiber field of view.
//!
//! Each step predicts every live track, deletes tracks whose prediction left
//! the field of view or grew too uncertain, gates the step's picks, computes
//! association probabilities, applies the moment-matched update and the class
//! update, confirms tracks with enough updates, and opens holding tracks from
//! picks in the two boundary zones.

mod association;
mod kalman;

pub use association::{
    association_terms, chi2_1_quantile, enumerate_valid_das, gate, jpda_update,
    marginal_probabilities, refine_terms, AssociationHypothesis, DaMode, HypothesisOverflow,
    DEFAULT_HYPOTHESIS_CAP,
};
pub use kalman::{kf_predict, kf_update, GaussianState, MotionModel};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::classifier::{update_class_posterior, ClassModel, ClassPosterior};
use crate::error::{Error, Result};
use crate::picker::Pick;
use crate::strain_io::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Probability that an object yields a pick in a step.
    pub p_detect: f64,
    /// Clutter picks per meter per step.
    pub clutter_intensity: f64,
    /// Lower end of the field of view, meters.
    pub fov_start: f64,
    /// Upper end of the field of view, meters.
    pub fov_end: f64,
    /// Width of each boundary initiation zone, meters.
    pub init_zone: f64,
    /// Speed assigned to new tracks, m/s; the sign follows the entry side.
    pub init_speed: f64,
    pub init_pos_var: f64,
    pub init_vel_var: f64,
    /// Tracks whose predicted covariance trace exceeds this are deleted.
    pub cov_trace_threshold: f64,
    /// Updates needed to confirm a holding track.
    pub n_init: u32,
    /// Delete holding tracks whose prediction leaves their initiation zone.
    pub holding_zone_only: bool,
    /// Delete holding tracks after this many consecutive steps without a
    /// gated pick; `None` disables the rule.
    pub holding_miss_limit: Option<u32>,
    /// A holding track's step counts as an update only if one of its gated
    /// picks lies outside the gates of all older tracks.
    pub exclusive_holding_updates: bool,
    pub gate_probability: f64,
    pub da_mode: DaMode,
    pub hypothesis_cap: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            p_detect: 0.9,
            clutter_intensity: 1.0 / 200.0,
            fov_start: 3963.0,
            fov_end: 4167.0,
            init_zone: 60.0,
            init_speed: 10.0,
            init_pos_var: 10.0,
            init_vel_var: 2.0,
            cov_trace_threshold: 150.0,
            n_init: 5,
            holding_zone_only: true,
            holding_miss_limit: Some(1),
            exclusive_holding_updates: true,
            gate_probability: 0.99,
            da_mode: DaMode::Joint,
            hypothesis_cap: DEFAULT_HYPOTHESIS_CAP,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_detect > 0.0 && self.p_detect <= 1.0) {
            return Err(Error::Config(format!("p_detect must lie in (0, 1], got {}", self.p_detect)));
        }
        if !(self.clutter_intensity > 0.0) {
            return Err(Error::Config(format!(
                "clutter_intensity must be positive, got {}",
                self.clutter_intensity
            )));
        }
        if !(self.fov_start < self.fov_end) {
            return Err(Error::Config(format!(
                "field of view {}..{} is empty",
                self.fov_start, self.fov_end
            )));
        }
        if !(self.init_zone > 0.0 && self.init_zone < (self.fov_end - self.fov_start) / 2.0) {
            return Err(Error::Config(format!(
                "init_zone {} must be positive and under half the field of view",
                self.init_zone
            )));
        }
        if !(self.init_pos_var > 0.0 && self.init_vel_var > 0.0) {
            return Err(Error::Config("initial variances must be positive".into()));
        }
        if !(self.gate_probability > 0.0 && self.gate_probability < 1.0) {
            return Err(Error::Config(format!(
                "gate_probability must lie in (0, 1), got {}",
                self.gate_probability
            )));
        }
        if self.hypothesis_cap == 0 {
            return Err(Error::Config("hypothesis_cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Holding,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: GaussianState,
    pub status: TrackStatus,
    pub update_count: u32,
    /// Consecutive steps without a gated pick.
    pub misses: u32,
    pub class_posterior: ClassPosterior,
    pub birth_time: f64,
    pub direction_hint: Direction,
}

/// One line of tracker output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: u64,
    pub t: f64,
    pub pos_mean: f64,
    pub vel_mean: f64,
    pub pos_var: f64,
    pub vel_var: f64,
    pub p_car: f64,
    pub status: TrackStatus,
}

impl TrackRecord {
    fn of(track: &Track, t: f64) -> Self {
        TrackRecord {
            track_id: track.id,
            t,
            pos_mean: track.state.position(),
            vel_mean: track.state.velocity(),
            pos_var: track.state.cov[(0, 0)],
            vel_var: track.state.cov[(1, 1)],
            p_car: track.class_posterior.p_car(),
            status: track.status,
        }
    }
}

fn in_zone(position: f64, side: Direction, cfg: &TrackerConfig) -> bool {
    match side {
        Direction::South => position >= cfg.fov_start && position <= cfg.fov_start + cfg.init_zone,
        Direction::North => position <= cfg.fov_end && position >= cfg.fov_end - cfg.init_zone,
    }
}

/// Zone membership of a position, if any.
fn zone_of(position: f64, cfg: &TrackerConfig) -> Option<Direction> {
    if position >= cfg.fov_start && position <= cfg.fov_start + cfg.init_zone {
        Some(Direction::South)
    } else if position <= cfg.fov_end && position >= cfg.fov_end - cfg.init_zone {
        Some(Direction::North)
    } else {
        None
    }
}

/// Opens holding tracks from boundary-zone picks.
///
/// Picks inside the gate of any existing track are ignored. Remaining picks
/// in each zone are averaged; a track starts at the mean unless an existing
/// track's gate already covers it. Tracks entering at the lower end move
/// toward larger fiber distance (southbound), those at the upper end toward
/// smaller. `existing` must hold the predicted states of this step. New
/// tracks get ids from `next_id` upward.
pub fn init_candidates(
    picks: &[Pick],
    existing: &[Track],
    cfg: &TrackerConfig,
    model: &MotionModel,
    prior: [f64; 2],
    time: f64,
    next_id: u64,
) -> Vec<Track> {
    let threshold = chi2_1_quantile(cfg.gate_probability);
    let in_some_gate = |z: f64| {
        existing.iter().any(|t| {
            let s = t.state.innovation_variance(model);
            (z - t.state.position()).powi(2) / s <= threshold
        })
    };

    let mut out = Vec::new();
    for side in [Direction::South, Direction::North] {
        let zone: Vec<f64> = picks
            .iter()
            .map(|p| p.position)
            .filter(|&z| zone_of(z, cfg) == Some(side) && !in_some_gate(z))
            .collect();
        if zone.is_empty() {
            continue;
        }
        let mean = zone.iter().sum::<f64>() / zone.len() as f64;
        if in_some_gate(mean) {
            continue;
        }
        let velocity = match side {
            Direction::South => cfg.init_speed,
            Direction::North => -cfg.init_speed,
        };
        out.push(Track {
            id: next_id + out.len() as u64,
            state: GaussianState::new(
                mean,
                velocity,
                Matrix2::new(cfg.init_pos_var, 0.0, 0.0, cfg.init_vel_var),
            ),
            status: TrackStatus::Holding,
            update_count: 0,
            misses: 0,
            class_posterior: ClassPosterior::from_probabilities(prior),
            birth_time: time,
            direction_hint: side,
        });
    }
    out
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSummary {
    pub deleted: usize,
    pub initiated: usize,
    pub confirmed: usize,
    /// At least one coupled group exceeded the hypothesis cap and was
    /// handled per target.
    pub fell_back: bool,
}

/// Tracker state carried between steps.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    model: MotionModel,
    classes: ClassModel,
    gate_threshold: f64,
    live: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, model: MotionModel, classes: ClassModel) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        classes.validate()?;
        let gate_threshold = chi2_1_quantile(cfg.gate_probability);
        Ok(Tracker {
            cfg,
            model,
            classes,
            gate_threshold,
            live: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MotionModel {
        &self.model
    }

    pub fn tracks(&self) -> &[Track] {
        &self.live
    }

    /// Advances one step of length `dt` to time `t` with the step's picks.
    /// Picks outside the field of view are ignored.
    /// Records for every track alive at the start or end of the step
    /// (including tracks deleted in it) are appended to `records`.
    pub fn step(&mut self, t: f64, picks: &[Pick], records: &mut Vec<TrackRecord>) -> StepSummary {
        let mut summary = StepSummary::default();
        let in_view: Vec<Pick> = picks
            .iter()
            .filter(|p| p.position >= self.cfg.fov_start && p.position <= self.cfg.fov_end)
            .cloned()
            .collect();
        let picks = &in_view[..];

        let mut survivors = Vec::with_capacity(self.live.len());
        for mut track in self.live.drain(..) {
            track.state = kf_predict(&track.state, &self.model);
            let pos = track.state.position();
            let left_zone = self.cfg.holding_zone_only
                && track.status == TrackStatus::Holding
                && !in_zone(pos, track.direction_hint, &self.cfg);
            if pos < self.cfg.fov_start
                || pos > self.cfg.fov_end
                || track.state.cov.trace() > self.cfg.cov_trace_threshold
                || left_zone
            {
                track.status = TrackStatus::Deleted;
                records.push(TrackRecord::of(&track, t));
                summary.deleted += 1;
            } else {
                survivors.push(track);
            }
        }

        let gated: Vec<Vec<usize>> = survivors
            .iter()
            .map(|tr| gate(&tr.state, picks, self.gate_threshold, &self.model))
            .collect();
        let mut terms: Vec<Vec<f64>> = survivors
            .iter()
            .zip(&gated)
            .map(|(tr, g)| {
                association_terms(
                    &tr.state,
                    picks,
                    g,
                    self.cfg.p_detect,
                    self.cfg.clutter_intensity,
                    &self.model,
                )
            })
            .collect();
        if self.classes.use_amplitude_in_da {
            for (row, tr) in terms.iter_mut().zip(&survivors) {
                refine_terms(row, picks, &tr.class_posterior, &self.classes);
            }
        }
        let (beta, fell_back) =
            marginal_probabilities(&terms, &gated, self.cfg.da_mode, self.cfg.hypothesis_cap);
        summary.fell_back = fell_back;

        let newborn = init_candidates(
            picks,
            &survivors,
            &self.cfg,
            &self.model,
            self.classes.prior,
            t,
            self.next_id,
        );
        self.next_id += newborn.len() as u64;
        summary.initiated = newborn.len();

        // survivors are ordered by age, oldest first
        let updated: Vec<bool> = survivors
            .iter()
            .enumerate()
            .map(|(i, tr)| {
                if tr.status == TrackStatus::Holding && self.cfg.exclusive_holding_updates {
                    gated[i]
                        .iter()
                        .any(|j| !gated[..i].iter().any(|older| older.contains(j)))
                } else {
                    !gated[i].is_empty()
                }
            })
            .collect();

        let amplitudes: Vec<f64> = picks.iter().map(|p| p.log_amplitude).collect();
        for ((track, row), &updated) in survivors.iter_mut().zip(&beta).zip(&updated) {
            track.class_posterior =
                update_class_posterior(&track.class_posterior, &amplitudes, row, &self.classes);
            track.state = jpda_update(&track.state, picks, row, &self.model);
            if !updated {
                track.misses += 1;
            } else {
                track.update_count += 1;
                track.misses = 0;
            }
            if track.status == TrackStatus::Holding && track.update_count >= self.cfg.n_init {
                track.status = TrackStatus::Confirmed;
                summary.confirmed += 1;
            }
        }
        if let Some(limit) = self.cfg.holding_miss_limit {
            let (dropped, kept): (Vec<Track>, Vec<Track>) = survivors
                .into_iter()
                .partition(|tr| tr.status == TrackStatus::Holding && tr.misses > limit);
            for mut track in dropped {
                track.status = TrackStatus::Deleted;
                records.push(TrackRecord::of(&track, t));
                summary.deleted += 1;
            }
            survivors = kept;
        }

        survivors.extend(newborn);
        for track in &survivors {
            records.push(TrackRecord::of(track, t));
        }
        self.live = survivors;
        summary
    }

    /// Deletes every live track at time `t`, recording the deletion.
    pub fn finish(&mut self, t: f64, records: &mut Vec<TrackRecord>) {
        for mut track in self.live.drain(..) {
            track.status = TrackStatus::Deleted;
            records.push(TrackRecord::of(&track, t));
        }
    }
}

/// Groups picks into steps of `dt` starting at `start` (each pick goes to
/// the nearest step) and runs the tracker through the last step.
pub fn run_tracker(
    picks: &[Pick],
    start: f64,
    n_steps: Option<usize>,
    cfg: &TrackerConfig,
    model: &MotionModel,
    classes: &ClassModel,
) -> Result<Vec<TrackRecord>> {
    let mut tracker = Tracker::new(cfg.clone(), model.clone(), classes.clone())?;
    let step_of = |t: f64| ((t - start) / model.dt).round();
    let last = picks.iter().map(|p| step_of(p.time)).fold(-1.0, f64::max);
    let n_steps = n_steps.unwrap_or((last + 1.0).max(0.0) as usize);

    let mut buckets: Vec<Vec<Pick>> = vec![Vec::new(); n_steps];
    for p in picks {
        let k = step_of(p.time);
        if k >= 0.0 && (k as usize) < n_steps {
            buckets[k as usize].push(p.clone());
        }
    }
    let mut records = Vec::new();
    for (k, bucket) in buckets.iter().enumerate() {
        tracker.step(start + k as f64 * model.dt, bucket, &mut records);
    }
    Ok(records)
}
