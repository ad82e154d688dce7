//! End-to-end construction of per-participant matrices and the on-disk cohort
//! layout (`sensors.csv`, `events.csv`, optional `coverage.csv`).

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::label::{label_windows, CoverageSpan, UseEvent};
use super::matrix::{matrices_from_frames, FeatureMatrix};
use super::record::{read_records_csv, write_records_csv, SensorRecord};
use super::synthetic::{read_events_csv, write_events_csv, SyntheticStudy};
use super::window::{extract_features, segment_windows, WINDOW_SECONDS};
use super::{FeatureError, Result};

pub const SENSORS_FILE: &str = "sensors.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const COVERAGE_FILE: &str = "coverage.csv";

/// Windows, extracts and labels raw records, returning one matrix per
/// participant in id order.
pub fn build_matrices(records: &[SensorRecord], events: &[UseEvent], coverage: &[CoverageSpan]) -> Result<Vec<FeatureMatrix>> {
    let frames: Vec<_> = segment_windows(records, WINDOW_SECONDS)?.iter().map(extract_features).collect();
    let frames = label_windows(frames, events, coverage)?;
    Ok(matrices_from_frames(&frames))
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(dir.join(name))?))
}

pub fn load_cohort_dir(dir: &Path) -> Result<Vec<FeatureMatrix>> {
    let records = read_records_csv(open(dir, SENSORS_FILE)?)?;
    let events = read_events_csv(open(dir, EVENTS_FILE)?)?;
    let coverage = if dir.join(COVERAGE_FILE).exists() {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(dir, COVERAGE_FILE)?);
        let mut out = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let num = |i: usize| {
                row.get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| FeatureError::InvalidRecord(format!("coverage column {i}: {e}")))
            };
            out.push(CoverageSpan { participant_id: row.get(0).unwrap_or("").to_string(), start: num(1)?, end: num(2)? });
        }
        out
    } else {
        Vec::new()
    };
    build_matrices(&records, &events, &coverage)
}

pub fn write_study_dir(study: &SyntheticStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_records_csv(File::create(dir.join(SENSORS_FILE))?, &study.records)?;
    write_events_csv(File::create(dir.join(EVENTS_FILE))?, &study.events)?;
    Ok(())
}
