//! Grid search over smoothing width, amplitude threshold and DBSCAN radius,
//! scoring pick times against logged event times with a count-penalized
//! Hausdorff distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::picker::{extract_picks_batched, PickerConfig};
use crate::preprocess::smooth_channels;
use crate::strain_io::{EventLog, StrainBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerConfig {
    pub kappa_grid: Vec<usize>,
    pub threshold_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    /// Weight on the pick/event count mismatch.
    pub penalty_xi: f64,
    /// Channel index of the site where events were logged.
    pub reference_channel: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            kappa_grid: vec![21, 25, 29, 31, 35],
            threshold_grid: (0..13).map(|i| -10.0 + 0.2 * i as f64).collect(),
            epsilon_grid: vec![0.02, 0.03, 0.05, 0.08],
            penalty_xi: 10.0,
            reference_channel: 0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_grid.is_empty() || self.threshold_grid.is_empty() || self.epsilon_grid.is_empty() {
            return Err(Error::Config("tuning grids must be non-empty".into()));
        }
        if !(self.penalty_xi >= 0.0) {
            return Err(Error::Config(format!(
                "penalty_xi must be non-negative, got {}",
                self.penalty_xi
            )));
        }
        if let Some(k) = self.kappa_grid.iter().find(|k| **k == 0 || **k % 2 == 0) {
            return Err(Error::Config(format!("kappa grid value {k} is not a positive odd number")));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::Config(format!("epsilon grid value {e} is not positive")));
        }
        Ok(())
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub kappa: usize,
    pub threshold: f64,
    pub epsilon: f64,
    /// Penalized objective; `f64::INFINITY` when no pick reached the site.
    /// JSON has no infinity, so it is written as `null`.
    #[serde(with = "infinite_as_null")]
    pub score: f64,
    pub n_picks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_kappa: usize,
    pub best_threshold: f64,
    pub best_epsilon: f64,
    pub objective_value: f64,
    pub objective_surface: Vec<SurfacePoint>,
}

/// Hausdorff distance between two finite sets of times. Either set empty
/// gives `f64::INFINITY`.
pub fn hausdorff(p: &[f64], e: &[f64]) -> f64 {
    if p.is_empty() || e.is_empty() {
        return f64::INFINITY;
    }
    directed(p, e).max(directed(e, p))
}

/// `max_{x in from} min_{y in to} |x - y|`, by binary search in sorted `to`.
fn directed(from: &[f64], to: &[f64]) -> f64 {
    let mut sorted = to.to_vec();
    sorted.sort_by(f64::total_cmp);
    from.iter()
        .map(|&x| {
            let i = sorted.partition_point(|&y| y < x);
            let right = sorted.get(i).map_or(f64::INFINITY, |y| (y - x).abs());
            let left = if i > 0 { (x - sorted[i - 1]).abs() } else { f64::INFINITY };
            right.min(left)
        })
        .fold(0.0, f64::max)
}

/// `hausdorff(p, e) + xi * | |p| - |e| |`; infinite when `p` is empty.
pub fn penalized_objective(p: &[f64], e: &[f64], xi: f64) -> f64 {
    let d = hausdorff(p, e);
    if !d.is_finite() {
        return f64::INFINITY;
    }
    d + xi * (p.len() as f64 - e.len() as f64).abs()
}

/// Pick times at the reference site for one grid point.
fn site_pick_times(
    batch: &StrainBatch,
    kappa: usize,
    threshold: f64,
    epsilon: f64,
    reference_channel: usize,
    picker: &PickerConfig,
) -> Result<Vec<f64>> {
    let smoothed = smooth_channels(batch, kappa)?;
    let cfg = PickerConfig {
        amplitude_threshold: threshold,
        dbscan_epsilon: epsilon,
        ..picker.clone()
    };
    let half_span = kappa as f64 / 2.0;
    let picks = extract_picks_batched(&smoothed, &cfg)?;
    Ok(picks
        .into_iter()
        .filter(|p| (batch.meta.channel_of(p.position) - reference_channel as f64).abs() <= half_span)
        .map(|p| p.time)
        .collect())
}

/// Evaluates every grid point on an (unsmoothed) log-RMS batch and returns
/// the minimizer. Ties resolve to the lexicographically smallest
/// `(threshold, epsilon, kappa)`. Each logged entry contributes one time,
/// whatever its count.
pub fn tune(
    batch: &StrainBatch,
    events: &EventLog,
    cfg: &TunerConfig,
    picker: &PickerConfig,
) -> Result<TuneResult> {
    cfg.validate()?;
    if !batch.meta.is_log_rms {
        return Err(Error::Domain("tune expects a log-RMS batch".into()));
    }
    if cfg.reference_channel >= batch.n_channels() {
        return Err(Error::Config(format!(
            "reference channel {} outside 0..{}",
            cfg.reference_channel,
            batch.n_channels()
        )));
    }
    let event_times = events.times();
    if event_times.is_empty() {
        return Err(Error::Domain("event log is empty".into()));
    }

    let mut surface = Vec::new();
    for &kappa in &cfg.kappa_grid {
        for &threshold in &cfg.threshold_grid {
            for &epsilon in &cfg.epsilon_grid {
                let times =
                    site_pick_times(batch, kappa, threshold, epsilon, cfg.reference_channel, picker)?;
                surface.push(SurfacePoint {
                    kappa,
                    threshold,
                    epsilon,
                    score: penalized_objective(&times, &event_times, cfg.penalty_xi),
                    n_picks: times.len(),
                });
            }
        }
    }

    let best = surface
        .iter()
        .filter(|s| s.score.is_finite())
        .min_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(a.threshold.total_cmp(&b.threshold))
                .then(a.epsilon.total_cmp(&b.epsilon))
                .then(a.kappa.cmp(&b.kappa))
        })
        .cloned();
    match best {
        Some(b) => Ok(TuneResult {
            best_kappa: b.kappa,
            best_threshold: b.threshold,
            best_epsilon: b.epsilon,
            objective_value: b.score,
            objective_surface: surface,
        }),
        None => Err(Error::TuningFailed { surface }),
    }
}

/// Surface rows as CSV with header `kappa,A,epsilon,score`.
pub fn surface_csv(surface: &[SurfacePoint]) -> String {
    let mut out = String::from("kappa,A,epsilon,score\n");
    for s in surface {
        out.push_str(&format!("{},{},{},{}\n", s.kappa, s.threshold, s.epsilon, s.score));
    }
    out
}
