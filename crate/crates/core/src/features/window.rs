use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::{SensorRecord, StreamValue};
use super::stats::{excess_kurtosis, mean, median, population_std, quantile};
use super::{FeatureError, Label, Result};

pub const WINDOW_SECONDS: f64 = 300.0;

/// Every frame carries exactly these features, in this (sorted) order.
pub const FEATURE_NAMES: [&str; 21] = [
    "accel_axis_changes",
    "accel_mag_var",
    "battery_discharge_max",
    "battery_discharge_mean",
    "battery_discharge_min",
    "battery_discharge_std",
    "hr_excess_kurtosis",
    "hr_max",
    "hr_mean",
    "hr_median",
    "hr_min",
    "hr_q1",
    "hr_q3",
    "hr_std",
    "noise_max",
    "noise_mean",
    "steps_max",
    "steps_median",
    "steps_q1",
    "steps_q3",
    "steps_sum",
];

/// Raw records of one participant falling in `[window_start, window_start + window_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBucket {
    pub participant_id: String,
    pub window_index: u64,
    pub window_start: f64,
    pub window_s: f64,
    pub records: Vec<SensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFrame {
    pub participant_id: String,
    pub window_start: f64,
    pub window_end: f64,
    /// `None` marks a feature whose source stream had no samples in the window.
    pub features: BTreeMap<String, Option<f64>>,
    pub label: Option<Label>,
}

/// Partitions each participant's records into half-open windows anchored at
/// that participant's earliest timestamp. Empty windows are omitted; buckets
/// come out ordered by participant id, then time.
pub fn segment_windows(records: &[SensorRecord], window_s: f64) -> Result<Vec<WindowBucket>> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(FeatureError::InvalidWindow(window_s));
    }
    let mut by_participant: BTreeMap<&str, Vec<&SensorRecord>> = BTreeMap::new();
    for r in records {
        if !r.timestamp.is_finite() {
            return Err(FeatureError::NonFiniteTimestamp {
                participant_id: r.participant_id.clone(),
                timestamp: r.timestamp,
            });
        }
        by_participant.entry(r.participant_id.as_str()).or_default().push(r);
    }

    let mut out = Vec::new();
    for (pid, mut recs) in by_participant {
        recs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let origin = recs[0].timestamp;
        let mut buckets: BTreeMap<u64, Vec<SensorRecord>> = BTreeMap::new();
        for r in recs {
            let k = ((r.timestamp - origin) / window_s).floor() as u64;
            buckets.entry(k).or_default().push(r.clone());
        }
        out.extend(buckets.into_iter().map(|(k, records)| WindowBucket {
            participant_id: pid.to_string(),
            window_index: k,
            window_start: origin + k as f64 * window_s,
            window_s,
            records,
        }));
    }
    Ok(out)
}

fn dominant_axis(x: f64, y: f64, z: f64) -> u8 {
    let (ax, ay, az) = (x.abs(), y.abs(), z.abs());
    if ax >= ay && ax >= az {
        0
    } else if ay >= az {
        1
    } else {
        2
    }
}

/// Reduces one window of raw records to the canonical feature set. A feature
/// whose stream is absent (or has too few samples) is recorded as missing.
pub fn extract_features(bucket: &WindowBucket) -> WindowFrame {
    let mut records: Vec<&SensorRecord> = bucket.records.iter().collect();
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut hr = Vec::new();
    let mut steps = Vec::new();
    let mut accel = Vec::new();
    let mut battery = Vec::new();
    let mut noise = Vec::new();
    for r in &records {
        match r.value {
            StreamValue::HeartRate { bpm } => hr.push(bpm),
            StreamValue::StepCount { steps: s } => steps.push(s as f64),
            StreamValue::Accelerometer { x, y, z } => accel.push((x, y, z)),
            StreamValue::Battery { level } => battery.push((r.timestamp, level)),
            StreamValue::Noise { db } => noise.push(db),
            StreamValue::Gps { .. } => {}
        }
    }

    let mut f: BTreeMap<String, Option<f64>> = FEATURE_NAMES.iter().map(|n| (n.to_string(), None)).collect();
    let mut set = |name: &str, v: f64| {
        f.insert(name.to_string(), Some(v));
    };

    if !hr.is_empty() {
        set("hr_mean", mean(&hr));
        set("hr_median", median(&hr));
        set("hr_min", hr.iter().copied().fold(f64::INFINITY, f64::min));
        set("hr_max", hr.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        set("hr_q1", quantile(&hr, 0.25));
        set("hr_q3", quantile(&hr, 0.75));
        set("hr_std", population_std(&hr));
        set("hr_excess_kurtosis", excess_kurtosis(&hr));
    }
    if !steps.is_empty() {
        set("steps_sum", steps.iter().sum());
        set("steps_median", median(&steps));
        set("steps_max", steps.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        set("steps_q1", quantile(&steps, 0.25));
        set("steps_q3", quantile(&steps, 0.75));
    }
    if !accel.is_empty() {
        let mags: Vec<f64> = accel.iter().map(|(x, y, z)| (x * x + y * y + z * z).sqrt()).collect();
        let sd = population_std(&mags);
        set("accel_mag_var", sd * sd);
        let changes = accel
            .windows(2)
            .filter(|w| dominant_axis(w[0].0, w[0].1, w[0].2) != dominant_axis(w[1].0, w[1].1, w[1].2))
            .count();
        set("accel_axis_changes", changes as f64);
    }
    // discharge in percent per hour between consecutive readings
    let rates: Vec<f64> = battery
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| (w[0].1 - w[1].1) / (w[1].0 - w[0].0) * 3600.0)
        .collect();
    if !rates.is_empty() {
        set("battery_discharge_mean", mean(&rates));
        set("battery_discharge_std", population_std(&rates));
        set("battery_discharge_max", rates.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        set("battery_discharge_min", rates.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if !noise.is_empty() {
        set("noise_mean", mean(&noise));
        set("noise_max", noise.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    WindowFrame {
        participant_id: bucket.participant_id.clone(),
        window_start: bucket.window_start,
        window_end: bucket.window_start + bucket.window_s,
        features: f,
        label: None,
    }
}
