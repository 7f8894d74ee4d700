//! Pipeline commands behind the `das-traffic` binary.
//!
//! Every command reads a JSON [`RunConfig`] (all sections optional), applies
//! command-line overrides, writes its outputs into an output directory and
//! echoes the effective configuration there as `effective_config.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use das_traffic::classifier::ClassModel;
use das_traffic::picker::{batch_rows, extract_picks, PickerConfig};
use das_traffic::preprocess::{smooth_channels, to_log_rms, PreprocessConfig};
use das_traffic::report::build_report;
use das_traffic::simulator::{score_tracking, simulate_field, simulate_picks, GroundTruth, Scenario};
use das_traffic::strain_io::{
    load_events, load_picks, load_strain, load_track_records, save_events, save_strain,
    save_track_records, write_pick_rows, StrainReader, PICK_CSV_HEADER,
};
use das_traffic::tracker::{run_tracker, MotionModel, TrackerConfig};
use das_traffic::tuner::{surface_csv, tune, TuneResult, TunerConfig};
use serde::{Deserialize, Serialize};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

/// Everything a run can be configured with. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub picker: PickerConfig,
    pub tuner: TunerConfig,
    pub tracker: TrackerConfig,
    pub motion: MotionModel,
    pub classes: ClassModel,
    /// Class model JSON to load instead of `classes`.
    pub class_model_path: Option<PathBuf>,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub bin_minutes: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { bin_minutes: 30.0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, Failure> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.preprocess.validate()?;
        self.picker.validate()?;
        self.tracker.validate()?;
        self.motion.validate()?;
        self.classes.validate()?;
        if !(self.report.bin_minutes > 0.0) {
            return Err(Failure::input("report.bin_minutes must be positive"));
        }
        Ok(())
    }

    /// The class model in effect, loading `class_model_path` if set.
    pub fn class_model(&self) -> Result<ClassModel, Failure> {
        let Some(path) = &self.class_model_path else {
            return Ok(self.classes.clone());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read class model {}: {e}", path.display())))?;
        let model: ClassModel = serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("invalid class model {}: {e}", path.display())))?;
        model.validate()?;
        Ok(model)
    }

    pub fn write_effective(&self, out: &Path) -> Result<(), Failure> {
        write_json(&out.join(EFFECTIVE_CONFIG), self)
    }
}

/// A failed command, carrying its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<das_traffic::Error> for Failure {
    fn from(e: das_traffic::Error) -> Self {
        match e {
            das_traffic::Error::Numeric(_) => Failure::internal(e.to_string()),
            other => Failure::input(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn create_dir(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::internal(format!("serializing {}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

/// Files written by [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOutputs {
    pub strain: PathBuf,
    pub picks: PathBuf,
    pub truth: PathBuf,
    pub events: PathBuf,
}

/// Simulates a scenario. Writes the log-RMS field (`strain.das`), the
/// pick-level stream (`picks.csv`), ground truth (`ground_truth.csv`) and
/// an event log of passages at `event_position` (`events.csv`, default the
/// middle of the field of view). `seed` overrides the scenario's seed.
pub fn cmd_simulate(
    scenario: &Path,
    out: &Path,
    seed: Option<u64>,
    event_position: Option<f64>,
) -> Result<SimulateOutputs, Failure> {
    let text = std::fs::read_to_string(scenario).map_err(|e| io_failure(scenario, e))?;
    let mut scn: Scenario = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("invalid scenario {}: {e}", scenario.display())))?;
    if let Some(seed) = seed {
        scn.seed = seed;
    }
    scn.validate()?;
    create_dir(out)?;

    let (truth, steps) = simulate_picks(&scn)?;
    let field = simulate_field(&scn)?;
    let outputs = SimulateOutputs {
        strain: out.join("strain.das"),
        picks: out.join("picks.csv"),
        truth: out.join("ground_truth.csv"),
        events: out.join("events.csv"),
    };
    save_strain(&field, &outputs.strain)?;
    let picks: Vec<_> = steps.into_iter().flatten().collect();
    das_traffic::strain_io::save_picks(&picks, &outputs.picks)?;
    write_text(&outputs.truth, &truth.to_csv())?;
    let site = event_position.unwrap_or((scn.fov_start + scn.fov_end) / 2.0);
    save_events(&truth.event_log(site), &outputs.events)?;
    write_json(&out.join("scenario.json"), &scn)?;
    Ok(outputs)
}

/// Streams a strain file through preprocessing and picking one batch at a
/// time and writes `picks.csv`. Raw input runs the full chain per batch;
/// log-RMS input is only smoothed. Cluster ids continue across batches.
pub fn cmd_extract(strain: &Path, cfg: &RunConfig, out: &Path) -> Result<PathBuf, Failure> {
    cfg.validate()?;
    create_dir(out)?;
    cfg.write_effective(out)?;

    let mut reader = StrainReader::open(strain)?;
    let meta = reader.meta().clone();
    let rows = batch_rows(cfg.picker.batch_span_seconds, meta.sample_interval);
    let path = out.join("picks.csv");
    let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{PICK_CSV_HEADER}").map_err(|e| io_failure(&path, e))?;
    let mut next_id = 0;
    while let Some(block) = reader.next_block(rows)? {
        let log_rms = if block.meta.is_log_rms {
            block
        } else {
            to_log_rms(&block, &cfg.preprocess)?
        };
        let smoothed = smooth_channels(&log_rms, cfg.preprocess.smoothing_window_kappa)?;
        let picks = extract_picks(&smoothed, &cfg.picker);
        write_pick_rows(&mut w, &picks, next_id).map_err(|e| io_failure(&path, e))?;
        next_id += picks.len();
    }
    w.flush().map_err(|e| io_failure(&path, e))?;
    Ok(path)
}

/// Applies a tuning result to the smoothing width and picker settings.
pub fn apply_tuned(cfg: &mut RunConfig, tuned: &TuneResult) {
    cfg.preprocess.smoothing_window_kappa = tuned.best_kappa;
    cfg.picker.amplitude_threshold = tuned.best_threshold;
    cfg.picker.dbscan_epsilon = tuned.best_epsilon;
}

pub fn load_tune_result(path: &Path) -> Result<TuneResult, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("invalid tune result {}: {e}", path.display())))
}

/// Grid-searches the extraction parameters against an event log and writes
/// `tune_result.json` and `surface.csv`. Raw input is converted to log-RMS
/// first. The surface is written even when no grid point scores finite.
pub fn cmd_tune(strain: &Path, events: &Path, cfg: &RunConfig, out: &Path) -> Result<TuneResult, Failure> {
    cfg.validate()?;
    cfg.tuner.validate()?;
    create_dir(out)?;
    cfg.write_effective(out)?;

    let batch = load_strain(strain)?;
    let batch = if batch.meta.is_log_rms {
        batch
    } else {
        to_log_rms(&batch, &cfg.preprocess)?
    };
    let log = load_events(events)?;
    match tune(&batch, &log, &cfg.tuner, &cfg.picker) {
        Ok(result) => {
            write_text(&out.join("surface.csv"), &surface_csv(&result.objective_surface))?;
            write_json(&out.join("tune_result.json"), &result)?;
            Ok(result)
        }
        Err(das_traffic::Error::TuningFailed { surface }) => {
            write_text(&out.join("surface.csv"), &surface_csv(&surface))?;
            Err(Failure::input("no grid point produced picks matching the event log"))
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the tracker over a pick CSV and writes `tracks.jsonl`. Steps start
/// at the first pick's step on the `motion.dt` grid. With `truth` (a ground
/// truth CSV) also writes `metrics.json`.
pub fn cmd_track(picks: &Path, cfg: &RunConfig, out: &Path, truth: Option<&Path>) -> Result<PathBuf, Failure> {
    cfg.validate()?;
    let classes = cfg.class_model()?;
    create_dir(out)?;
    cfg.write_effective(out)?;

    let picks = load_picks(picks)?;
    let dt = cfg.motion.dt;
    let start = picks
        .iter()
        .map(|p| p.time)
        .min_by(f64::total_cmp)
        .map_or(0.0, |t| (t / dt).round() * dt);
    let records = run_tracker(&picks, start, None, &cfg.tracker, &cfg.motion, &classes)?;
    let path = out.join("tracks.jsonl");
    save_track_records(&records, &path)?;

    if let Some(truth_path) = truth {
        let text = std::fs::read_to_string(truth_path).map_err(|e| io_failure(truth_path, e))?;
        let truth = GroundTruth::from_csv(&text, dt)?;
        write_json(&out.join("metrics.json"), &score_tracking(&truth, &records))?;
    }
    Ok(path)
}

/// Bins confirmed tracks and writes `counts.csv` and `velocities.csv`.
pub fn cmd_report(tracks: &Path, cfg: &RunConfig, out: &Path) -> Result<(PathBuf, PathBuf), Failure> {
    cfg.validate()?;
    create_dir(out)?;
    cfg.write_effective(out)?;

    let records = load_track_records(tracks)?;
    let report = build_report(&records, cfg.report.bin_minutes * 60.0);
    let counts = out.join("counts.csv");
    let velocities = out.join("velocities.csv");
    write_text(&counts, &report.counts_csv())?;
    write_text(&velocities, &report.velocities_csv())?;
    Ok((counts, velocities))
}
