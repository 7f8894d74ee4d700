//! Thresholding and DBSCAN clustering of smoothed log-RMS batches into picks.
//!
//! Distances between cells are measured in batch-relative coordinates:
//! channel index over channel count, sample index over sample count. An
//! `epsilon` of 0.05 therefore means 5% of the batch extent along each axis.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::strain_io::StrainBatch;

/// Label for points that belong to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PickerConfig {
    /// Cells strictly above this log-RMS value are candidates.
    pub amplitude_threshold: f64,
    /// DBSCAN radius in batch-relative units.
    pub dbscan_epsilon: f64,
    pub min_pts: usize,
    /// Length of one processing batch, seconds.
    pub batch_span_seconds: f64,
}

impl Default for PickerConfig {
    fn default() -> Self {
        PickerConfig {
            amplitude_threshold: -8.8,
            dbscan_epsilon: 0.05,
            min_pts: 1,
            batch_span_seconds: 6.0,
        }
    }
}

impl PickerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.dbscan_epsilon > 0.0) {
            return Err(crate::Error::Config(format!(
                "dbscan_epsilon must be positive, got {}",
                self.dbscan_epsilon
            )));
        }
        if self.min_pts == 0 {
            return Err(crate::Error::Config("min_pts must be at least 1".into()));
        }
        if !(self.batch_span_seconds > 0.0) {
            return Err(crate::Error::Config(format!(
                "batch_span_seconds must be positive, got {}",
                self.batch_span_seconds
            )));
        }
        Ok(())
    }
}

/// A clustered detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    /// Mean member time, seconds.
    pub time: f64,
    /// Mean member position along the fiber, meters.
    pub position: f64,
    /// Mean smoothed log-RMS over members.
    pub log_amplitude: f64,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub sample: usize,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointSet {
    pub points: Vec<Cell>,
    /// Cluster id per point, [`NOISE`] for unclustered points. Ids are dense
    /// and numbered in order of each cluster's first point.
    pub labels: Vec<i64>,
}

impl LabeledPointSet {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().filter(|&&l| l >= 0).max().map_or(0, |&m| m as usize + 1)
    }
}

/// All cells whose value exceeds `threshold`, in (sample, channel) order.
pub fn threshold_exceedances(batch: &StrainBatch, threshold: f64) -> Vec<Cell> {
    let n_ch = batch.n_channels();
    batch
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(idx, _)| Cell {
            sample: idx / n_ch,
            channel: idx % n_ch,
        })
        .collect()
}

/// Maps cells to batch-relative `[channel, time]` coordinates.
pub fn normalize(cells: &[Cell], n_channels: usize, n_samples: usize) -> Vec<[f64; 2]> {
    cells
        .iter()
        .map(|c| {
            [
                c.channel as f64 / n_channels as f64,
                c.sample as f64 / n_samples as f64,
            ]
        })
        .collect()
}

/// Uniform grid over the plane with cell size `eps`; neighbour queries scan
/// the 3x3 block around the query cell.
struct GridIndex<'a> {
    points: &'a [[f64; 2]],
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        GridIndex { points, eps, cells }
    }

    fn key(p: &[f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    /// Indices within strict distance `eps` of point `i`, including `i`.
    fn neighbours(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.points[i];
        let (kx, ky) = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy)) {
                    for &j in bucket {
                        let q = self.points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 < eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// DBSCAN over 2-D points. A point is core when its open `epsilon`-ball
/// (itself included) holds at least `min_pts` points; clusters are the
/// density-connected sets grown from core points, and everything else is
/// [`NOISE`]. Border points reachable from several clusters join the
/// first one found, scanning points in input order.
pub fn dbscan(points: &[[f64; 2]], epsilon: f64, min_pts: usize) -> Vec<i64> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = points.len();
    let index = GridIndex::new(points, epsilon);
    let mut labels = vec![NOISE; n];
    let mut visited = vec![false; n];
    let mut next_label = 0i64;
    let mut nbrs = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..n {
        if visited[start] {
            continue;
        }
        index.neighbours(start, &mut nbrs);
        if nbrs.len() < min_pts {
            // may still be claimed later as a border point
            continue;
        }
        visited[start] = true;
        let label = next_label;
        next_label += 1;
        labels[start] = label;
        queue.clear();
        queue.extend(nbrs.iter().copied());
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = label;
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            index.neighbours(q, &mut nbrs);
            if nbrs.len() >= min_pts {
                for &r in &nbrs {
                    if !visited[r] || labels[r] == NOISE {
                        queue.push_back(r);
                    }
                }
            }
        }
    }
    relabel_in_order(&mut labels);
    labels
}

/// Renumbers cluster ids by first appearance.
fn relabel_in_order(labels: &mut [i64]) {
    let mut map = HashMap::new();
    for l in labels.iter_mut() {
        if *l >= 0 {
            let next = map.len() as i64;
            *l = *map.entry(*l).or_insert(next);
        }
    }
}

/// Clusters cells in batch-relative coordinates.
pub fn cluster_cells(
    cells: Vec<Cell>,
    n_channels: usize,
    n_samples: usize,
    epsilon: f64,
    min_pts: usize,
) -> LabeledPointSet {
    let coords = normalize(&cells, n_channels, n_samples);
    let labels = dbscan(&coords, epsilon, min_pts);
    LabeledPointSet {
        points: cells,
        labels,
    }
}

/// Threshold, cluster and reduce one smoothed log-RMS batch to picks,
/// one per cluster, sorted by time then position.
pub fn extract_picks(batch: &StrainBatch, cfg: &PickerConfig) -> Vec<Pick> {
    let cells = threshold_exceedances(batch, cfg.amplitude_threshold);
    if cells.is_empty() {
        return Vec::new();
    }
    let labeled = cluster_cells(
        cells,
        batch.n_channels(),
        batch.n_samples(),
        cfg.dbscan_epsilon,
        cfg.min_pts,
    );

    #[derive(Default, Clone)]
    struct Acc {
        sample: f64,
        channel: f64,
        value: f64,
        count: usize,
    }
    let mut acc = vec![Acc::default(); labeled.n_clusters()];
    for (cell, &label) in labeled.points.iter().zip(&labeled.labels) {
        if label < 0 {
            continue;
        }
        let a = &mut acc[label as usize];
        a.sample += cell.sample as f64;
        a.channel += cell.channel as f64;
        a.value += batch.get(cell.sample, cell.channel);
        a.count += 1;
    }

    let mut picks: Vec<Pick> = acc
        .into_iter()
        .map(|a| {
            let n = a.count as f64;
            Pick {
                time: batch.meta.sample_time(a.sample / n),
                position: batch.meta.channel_position(a.channel / n),
                log_amplitude: a.value / n,
                cluster_size: a.count,
            }
        })
        .collect();
    picks.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.position.total_cmp(&b.position)));
    picks
}

/// Splits `batch` into consecutive spans of `cfg.batch_span_seconds` and
/// extracts picks from each independently.
pub fn extract_picks_batched(batch: &StrainBatch, cfg: &PickerConfig) -> crate::Result<Vec<Pick>> {
    cfg.validate()?;
    let rows = batch_rows(cfg.batch_span_seconds, batch.meta.sample_interval);
    let mut out = Vec::new();
    let mut start = 0;
    while start < batch.n_samples() {
        let block = batch.slice_rows(start, start + rows)?;
        out.extend(extract_picks(&block, cfg));
        start += rows;
    }
    Ok(out)
}

/// Rows per processing batch, at least one.
pub fn batch_rows(span_seconds: f64, sample_interval: f64) -> usize {
    ((span_seconds / sample_interval).round() as usize).max(1)
}
