//! Traffic summaries from track records.
//!
//! Only tracks that were confirmed at some point are reported. A track falls
//! into the bin containing its first record; its class is the final
//! posterior's most likely class and its direction is the sign of its mean
//! velocity (positive = southbound).

use serde::Serialize;

use crate::simulator::{summarize_tracks, TrackSummary};
use crate::strain_io::{Direction, ObjectClass};
use crate::tracker::TrackRecord;

pub const COUNTS_HEADER: &str = "bin_start_s,cars,trains";
pub const VELOCITIES_HEADER: &str = "bin_start_s,direction,mean_kmh,n_tracks";

const MPS_TO_KMH: f64 = 3.6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    pub bin_start: f64,
    pub cars: usize,
    pub trains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityRow {
    pub bin_start: f64,
    pub direction: Direction,
    pub mean_kmh: f64,
    pub n_tracks: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrafficReport {
    pub counts: Vec<CountRow>,
    pub velocities: Vec<VelocityRow>,
}

impl TrafficReport {
    pub fn total_tracks(&self) -> usize {
        self.counts.iter().map(|c| c.cars + c.trains).sum()
    }

    pub fn counts_csv(&self) -> String {
        let mut out = format!("{COUNTS_HEADER}\n");
        for c in &self.counts {
            out.push_str(&format!("{},{},{}\n", c.bin_start, c.cars, c.trains));
        }
        out
    }

    pub fn velocities_csv(&self) -> String {
        let mut out = format!("{VELOCITIES_HEADER}\n");
        for v in &self.velocities {
            out.push_str(&format!(
                "{},{},{},{}\n",
                v.bin_start, v.direction, v.mean_kmh, v.n_tracks
            ));
        }
        out
    }
}

/// Confirmed tracks in order of first appearance.
pub fn confirmed_tracks(records: &[TrackRecord]) -> Vec<TrackSummary> {
    summarize_tracks(records)
        .into_iter()
        .filter(|t| t.confirmed)
        .collect()
}

/// Bins confirmed tracks into `bin_seconds`-wide intervals starting at zero.
/// Bins with no confirmed track are omitted.
pub fn build_report(records: &[TrackRecord], bin_seconds: f64) -> TrafficReport {
    assert!(bin_seconds > 0.0, "bin width must be positive");
    let mut bins: std::collections::BTreeMap<i64, (usize, usize, [(f64, usize); 2])> =
        Default::default();
    for tr in confirmed_tracks(records) {
        let bin = (tr.first_t / bin_seconds).floor() as i64;
        let entry = bins.entry(bin).or_default();
        match tr.final_class() {
            ObjectClass::Car => {
                entry.0 += 1;
                let slot = match tr.direction() {
                    Direction::South => 0,
                    Direction::North => 1,
                };
                entry.2[slot].0 += tr.mean_velocity * MPS_TO_KMH;
                entry.2[slot].1 += 1;
            }
            ObjectClass::Train => entry.1 += 1,
        }
    }
    let mut report = TrafficReport::default();
    for (bin, (cars, trains, speeds)) in bins {
        let bin_start = bin as f64 * bin_seconds;
        report.counts.push(CountRow {
            bin_start,
            cars,
            trains,
        });
        for (direction, (sum, n)) in [Direction::South, Direction::North].into_iter().zip(speeds) {
            if n > 0 {
                report.velocities.push(VelocityRow {
                    bin_start,
                    direction,
                    mean_kmh: sum / n as f64,
                    n_tracks: n,
                });
            }
        }
    }
    report
}
