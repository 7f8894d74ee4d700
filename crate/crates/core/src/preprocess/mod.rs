//! Raw strain to smoothed log-RMS: resample, detrend, bandpass, rolling RMS,
//! log transform and channel-direction moving average.
//!
//! Every stage works on each channel independently except
//! [`smooth_channels`], which averages across channels at a fixed time.

mod butterworth;

pub use butterworth::{Biquad, Sos};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strain_io::{StrainBatch, StrainMeta};

/// Floor applied by [`log_transform`] to zero (or tiny) RMS values.
pub const LOG_FLOOR: f64 = -30.0;

/// Prototype order of the bandpass.
pub const BANDPASS_ORDER: usize = 4;

/// Order and relative cutoff of the anti-alias lowpass used by [`resample`].
const ANTI_ALIAS_ORDER: usize = 8;
const ANTI_ALIAS_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Rate after resampling, Hz.
    pub target_rate: f64,
    pub band_low: f64,
    pub band_high: f64,
    /// RMS window length, seconds.
    pub rms_window: f64,
    /// Fraction of each RMS window shared with the next.
    pub rms_overlap_fraction: f64,
    /// Channel-direction moving-average width. Must be odd.
    pub smoothing_window_kappa: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_rate: 1000.0,
            band_low: 15.0,
            band_high: 150.0,
            rms_window: 0.4,
            rms_overlap_fraction: 0.5,
            smoothing_window_kappa: 31,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_rate > 0.0) {
            return Err(Error::Config(format!(
                "target_rate must be positive, got {}",
                self.target_rate
            )));
        }
        if !(0.0 < self.band_low && self.band_low < self.band_high)
            || !(self.band_high < self.target_rate / 2.0)
        {
            return Err(Error::Config(format!(
                "band edges must satisfy 0 < {} < {} < {}",
                self.band_low,
                self.band_high,
                self.target_rate / 2.0
            )));
        }
        if !(self.rms_window > 0.0) {
            return Err(Error::Config(format!(
                "rms_window must be positive, got {}",
                self.rms_window
            )));
        }
        if !(0.0..1.0).contains(&self.rms_overlap_fraction) {
            return Err(Error::Config(format!(
                "rms_overlap_fraction must lie in [0, 1), got {}",
                self.rms_overlap_fraction
            )));
        }
        check_kappa(self.smoothing_window_kappa)?;
        Ok(())
    }
}

fn check_kappa(kappa: usize) -> Result<()> {
    if kappa == 0 || kappa % 2 == 0 {
        return Err(Error::Config(format!(
            "smoothing window must be a positive odd channel count, got {kappa}"
        )));
    }
    Ok(())
}

fn require_raw(batch: &StrainBatch, op: &str) -> Result<()> {
    if batch.meta.is_log_rms {
        return Err(Error::Domain(format!("{op} expects raw strain, got log-RMS")));
    }
    Ok(())
}

/// Decimates to `target_rate` after a zero-phase anti-alias lowpass at
/// 40% of the target rate. The rate ratio must be an integer.
pub fn resample(batch: &StrainBatch, target_rate: f64) -> Result<StrainBatch> {
    require_raw(batch, "resample")?;
    let rate = batch.meta.sample_rate();
    let ratio = rate / target_rate;
    let factor = ratio.round();
    if !(factor >= 1.0) || (ratio - factor).abs() > 1e-6 * ratio {
        return Err(Error::Config(format!(
            "cannot resample {rate} Hz to {target_rate} Hz: ratio is not an integer"
        )));
    }
    let factor = factor as usize;
    if factor == 1 {
        return Ok(batch.clone());
    }
    let lowpass = Sos::butter_lowpass(ANTI_ALIAS_ORDER, ANTI_ALIAS_FRACTION * target_rate, rate);
    let n_out = batch.n_samples().div_ceil(factor);
    let meta = StrainMeta {
        n_samples: n_out,
        sample_interval: batch.meta.sample_interval * factor as f64,
        ..batch.meta.clone()
    };
    batch.map_channels(meta, |x| {
        Ok(lowpass.filtfilt(x).into_iter().step_by(factor).collect())
    })
}

/// Removes each channel's least-squares line over time.
pub fn detrend(batch: &StrainBatch) -> Result<StrainBatch> {
    require_raw(batch, "detrend")?;
    let n = batch.n_samples();
    if n < 2 {
        return Err(Error::Domain(format!(
            "detrend needs at least 2 samples, got {n}"
        )));
    }
    // centered abscissa keeps the normal equations well conditioned
    let t_mean = (n - 1) as f64 / 2.0;
    let sxx: f64 = (0..n).map(|i| (i as f64 - t_mean).powi(2)).sum();
    batch.map_channels(batch.meta.clone(), |x| {
        let y_mean = x.iter().sum::<f64>() / n as f64;
        let sxy: f64 = x
            .iter()
            .enumerate()
            .map(|(i, y)| (i as f64 - t_mean) * (y - y_mean))
            .sum();
        let slope = sxy / sxx;
        Ok(x.iter()
            .enumerate()
            .map(|(i, y)| y - y_mean - slope * (i as f64 - t_mean))
            .collect())
    })
}

/// Zero-phase Butterworth bandpass between `cfg.band_low` and `cfg.band_high`.
pub fn bandpass(batch: &StrainBatch, cfg: &PreprocessConfig) -> Result<StrainBatch> {
    require_raw(batch, "bandpass")?;
    let fs = batch.meta.sample_rate();
    if !(0.0 < cfg.band_low && cfg.band_low < cfg.band_high && cfg.band_high < fs / 2.0) {
        return Err(Error::Config(format!(
            "band {}..{} Hz is not inside (0, {}) Hz",
            cfg.band_low,
            cfg.band_high,
            fs / 2.0
        )));
    }
    let sos = Sos::butter_bandpass(BANDPASS_ORDER, cfg.band_low, cfg.band_high, fs);
    batch.map_channels(batch.meta.clone(), |x| Ok(sos.filtfilt(x)))
}

/// Window and hop lengths in samples for the rolling RMS.
pub fn rms_window_samples(cfg: &PreprocessConfig, sample_interval: f64) -> (usize, usize) {
    let window = (cfg.rms_window / sample_interval).round() as usize;
    let hop = ((window as f64) * (1.0 - cfg.rms_overlap_fraction)).round().max(1.0) as usize;
    (window, hop)
}

/// Per-channel RMS over sliding windows. Output rows are stamped at window
/// centers and spaced by the hop.
pub fn rolling_rms(batch: &StrainBatch, cfg: &PreprocessConfig) -> Result<StrainBatch> {
    require_raw(batch, "rolling_rms")?;
    if !(0.0..1.0).contains(&cfg.rms_overlap_fraction) {
        return Err(Error::Config(format!(
            "rms_overlap_fraction must lie in [0, 1), got {}",
            cfg.rms_overlap_fraction
        )));
    }
    let (window, hop) = rms_window_samples(cfg, batch.meta.sample_interval);
    if window < 2 {
        return Err(Error::Config(format!(
            "RMS window of {} s spans {window} sample(s); at least 2 required",
            cfg.rms_window
        )));
    }
    let n = batch.n_samples();
    if n < window {
        return Err(Error::Domain(format!(
            "batch of {n} samples is shorter than one RMS window ({window})"
        )));
    }
    let n_out = (n - window) / hop + 1;
    let meta = StrainMeta {
        n_samples: n_out,
        sample_interval: batch.meta.sample_interval * hop as f64,
        t0: batch.meta.sample_time((window - 1) as f64 / 2.0),
        ..batch.meta.clone()
    };
    batch.map_channels(meta, |x| {
        Ok((0..n_out)
            .map(|j| {
                let w = &x[j * hop..j * hop + window];
                (w.iter().map(|v| v * v).sum::<f64>() / window as f64).sqrt()
            })
            .collect())
    })
}

/// Natural log with values below `exp(LOG_FLOOR)` clamped to [`LOG_FLOOR`].
pub fn log_transform(batch: &StrainBatch) -> Result<StrainBatch> {
    if batch.meta.is_log_rms {
        return Err(Error::Domain("batch is already log-RMS".into()));
    }
    let n_ch = batch.n_channels();
    let mut out = Vec::with_capacity(batch.values().len());
    for (idx, &v) in batch.values().iter().enumerate() {
        if v < 0.0 {
            return Err(Error::Domain(format!(
                "negative RMS value {v} at row {}, column {}",
                idx / n_ch,
                idx % n_ch
            )));
        }
        out.push(v.ln().max(LOG_FLOOR));
    }
    let meta = StrainMeta {
        is_log_rms: true,
        ..batch.meta.clone()
    };
    StrainBatch::new(meta, out)
}

/// Centered moving average across channels at each time, truncated at the
/// fiber ends. Uses prefix sums, so cost is independent of `kappa`.
pub fn smooth_channels(batch: &StrainBatch, kappa: usize) -> Result<StrainBatch> {
    check_kappa(kappa)?;
    let n_ch = batch.n_channels();
    if kappa > n_ch {
        return Err(Error::Config(format!(
            "smoothing window {kappa} exceeds {n_ch} channels"
        )));
    }
    let half = (kappa - 1) / 2;
    let mut out = Vec::with_capacity(batch.values().len());
    let mut prefix = vec![0.0; n_ch + 1];
    for t in 0..batch.n_samples() {
        let row = batch.row(t);
        for (c, v) in row.iter().enumerate() {
            prefix[c + 1] = prefix[c] + v;
        }
        for c in 0..n_ch {
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(n_ch - 1);
            out.push((prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64);
        }
    }
    StrainBatch::new(batch.meta.clone(), out)
}

/// Raw strain to (unsmoothed) log-RMS: resample, detrend, bandpass,
/// rolling RMS and log transform.
pub fn to_log_rms(batch: &StrainBatch, cfg: &PreprocessConfig) -> Result<StrainBatch> {
    cfg.validate()?;
    let resampled = resample(batch, cfg.target_rate)?;
    let detrended = detrend(&resampled)?;
    let filtered = bandpass(&detrended, cfg)?;
    let rms = rolling_rms(&filtered, cfg)?;
    log_transform(&rms)
}
