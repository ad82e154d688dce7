//! Deterministic synthetic cohorts: raw sensor streams plus self-report events
//! whose intoxicated windows show elevated heart rate and restless motion.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::label::UseEvent;
use super::record::{SensorRecord, StreamValue};
use super::{build_matrices, FeatureError, FeatureMatrix, Result, WINDOW_SECONDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub windows_per_participant: usize,
    pub seed: u64,
    /// Class ratio positives : negatives.
    pub positives: u32,
    pub negatives: u32,
    /// Fraction of windows in which the battery and noise streams drop out.
    pub dropout: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self { n_participants: 10, windows_per_participant: 100, seed: 7, positives: 1, negatives: 4, dropout: 0.05 }
    }
}

impl CohortConfig {
    pub fn positives_per_participant(&self) -> usize {
        let total = (self.positives + self.negatives).max(1) as f64;
        (self.windows_per_participant as f64 * self.positives as f64 / total).round() as usize
    }
}

/// Raw material of a study: sensor records and self-reports. Reports with
/// `intoxicated = false` double as reporting coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStudy {
    pub records: Vec<SensorRecord>,
    pub events: Vec<UseEvent>,
}

const EPOCH: f64 = 1_700_000_000.0;

pub fn generate_synthetic_study(config: &CohortConfig) -> SyntheticStudy {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::new();
    let mut events = Vec::new();
    let n_windows = config.windows_per_participant;

    for p in 0..config.n_participants {
        let pid = format!("P{:03}", p + 1);
        let t0 = EPOCH + p as f64 * 86_400.0;
        let base_hr: f64 = rng.random_range(62.0..78.0);
        let elevation = rng.random_range(12.0..20.0);
        let discharge = rng.random_range(2.0..8.0);

        let mut is_positive = vec![false; n_windows];
        for flag in is_positive.iter_mut().take(config.positives_per_participant().min(n_windows)) {
            *flag = true;
        }
        is_positive.shuffle(&mut rng);

        let mut battery = 100.0;
        let mut axis = 2usize;
        for (k, &intox) in is_positive.iter().enumerate() {
            let start = t0 + k as f64 * WINDOW_SECONDS;
            let window_hr = base_hr + if intox { elevation } else { 0.0 } + 4.0 * unit.sample(&mut rng);
            let hr_noise: f64 = if intox { 5.0 } else { 3.0 };
            for i in 0..30 {
                let bpm = (window_hr + hr_noise * unit.sample(&mut rng)).clamp(35.0, 220.0);
                records.push(SensorRecord::new(&pid, start + 10.0 * i as f64, StreamValue::HeartRate { bpm }));
            }

            let activity = rng.random_range(0.0..1.0f64);
            for i in 0..5 {
                let steps = (activity * 90.0 + 15.0 * unit.sample(&mut rng)).max(0.0).round() as u64;
                records.push(SensorRecord::new(&pid, start + 5.0 + 60.0 * i as f64, StreamValue::StepCount { steps }));
            }

            let (switch_p, mag_sd) = if intox { (0.4, 0.8) } else { (0.1, 0.3) };
            for i in 0..30 {
                if rng.random_bool(switch_p) {
                    axis = (axis + rng.random_range(1..3)) % 3;
                }
                let mag = 9.81 + mag_sd * unit.sample(&mut rng);
                let mut v = [0.4 * unit.sample(&mut rng), 0.4 * unit.sample(&mut rng), 0.4 * unit.sample(&mut rng)];
                v[axis] = mag;
                records.push(SensorRecord::new(
                    &pid,
                    start + 3.0 + 10.0 * i as f64,
                    StreamValue::Accelerometer { x: v[0], y: v[1], z: v[2] },
                ));
            }

            let battery_out = rng.random_bool(config.dropout);
            for i in 0..5 {
                battery -= discharge / 60.0 * (1.0 + 0.3 * unit.sample(&mut rng)).max(0.0);
                if battery < 15.0 {
                    battery = 100.0;
                }
                if !battery_out {
                    let level = (battery * 10.0).round() / 10.0;
                    records.push(SensorRecord::new(&pid, start + 7.0 + 60.0 * i as f64, StreamValue::Battery { level }));
                }
            }

            if !rng.random_bool(config.dropout) {
                let ambient = 45.0 + if intox { 4.0 } else { 0.0 };
                for i in 0..10 {
                    let db = ambient + 5.0 * unit.sample(&mut rng);
                    records.push(SensorRecord::new(&pid, start + 11.0 + 30.0 * i as f64, StreamValue::Noise { db }));
                }
            }
            records.push(SensorRecord::new(
                &pid,
                start + 13.0,
                StreamValue::Gps { lat: 42.28 + 0.01 * unit.sample(&mut rng), lon: -83.74 + 0.01 * unit.sample(&mut rng) },
            ));

            if intox {
                events.push(UseEvent { participant_id: pid.clone(), start: start + 30.0, end: start + 270.0, intoxicated: true });
            }
        }
        events.push(UseEvent {
            participant_id: pid.clone(),
            start: t0,
            end: t0 + n_windows as f64 * WINDOW_SECONDS,
            intoxicated: false,
        });
    }
    SyntheticStudy { records, events }
}

/// Synthetic study run through windowing, extraction and labelling: one
/// (not yet preprocessed) matrix per participant.
pub fn generate_synthetic_cohort(config: &CohortConfig) -> Result<Vec<FeatureMatrix>> {
    let study = generate_synthetic_study(config);
    build_matrices(&study.records, &study.events, &[])
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<UseEvent>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| {
            get(i).parse::<f64>().map_err(|e| FeatureError::InvalidRecord(format!("event column {i}: {e}")))
        };
        let intoxicated = match get(3).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "intoxicated" => true,
            "false" | "0" | "no" | "not_intoxicated" => false,
            other => return Err(FeatureError::InvalidRecord(format!("bad intoxicated flag {other:?}"))),
        };
        out.push(UseEvent { participant_id: get(0).to_string(), start: num(1)?, end: num(2)?, intoxicated });
    }
    Ok(out)
}

pub fn write_events_csv<W: Write>(writer: W, events: &[UseEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["participant_id", "start", "end", "intoxicated"])?;
    for e in events {
        wtr.write_record([e.participant_id.clone(), e.start.to_string(), e.end.to_string(), e.intoxicated.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
