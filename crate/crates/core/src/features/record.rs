use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    HeartRate,
    StepCount,
    Accelerometer,
    Battery,
    Noise,
    Gps,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::HeartRate => "heart_rate",
            Stream::StepCount => "step_count",
            Stream::Accelerometer => "accelerometer",
            Stream::Battery => "battery",
            Stream::Noise => "noise",
            Stream::Gps => "gps",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "heart_rate" => Stream::HeartRate,
            "step_count" => Stream::StepCount,
            "accelerometer" => Stream::Accelerometer,
            "battery" => Stream::Battery,
            "noise" => Stream::Noise,
            "gps" => Stream::Gps,
            _ => return None,
        })
    }
}

/// Payload of one sensor reading. Units: bpm, steps, m/s², battery %, dB and
/// degrees respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stream", rename_all = "snake_case")]
pub enum StreamValue {
    HeartRate { bpm: f64 },
    StepCount { steps: u64 },
    Accelerometer { x: f64, y: f64, z: f64 },
    Battery { level: f64 },
    Noise { db: f64 },
    Gps { lat: f64, lon: f64 },
}

impl StreamValue {
    pub fn stream(&self) -> Stream {
        match self {
            StreamValue::HeartRate { .. } => Stream::HeartRate,
            StreamValue::StepCount { .. } => Stream::StepCount,
            StreamValue::Accelerometer { .. } => Stream::Accelerometer,
            StreamValue::Battery { .. } => Stream::Battery,
            StreamValue::Noise { .. } => Stream::Noise,
            StreamValue::Gps { .. } => Stream::Gps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub participant_id: String,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: f64,
    pub value: StreamValue,
}

impl SensorRecord {
    pub fn new(participant_id: impl Into<String>, timestamp: f64, value: StreamValue) -> Self {
        Self { participant_id: participant_id.into(), timestamp, value }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(FeatureError::NonFiniteTimestamp {
                participant_id: self.participant_id.clone(),
                timestamp: self.timestamp,
            });
        }
        if self.timestamp < 0.0 {
            return Err(FeatureError::InvalidRecord(format!("negative timestamp {}", self.timestamp)));
        }
        let ok = match self.value {
            StreamValue::HeartRate { bpm } => bpm > 0.0 && bpm < 300.0,
            StreamValue::StepCount { .. } => true,
            StreamValue::Accelerometer { x, y, z } => x.is_finite() && y.is_finite() && z.is_finite(),
            StreamValue::Battery { level } => (0.0..=100.0).contains(&level),
            StreamValue::Noise { db } => db.is_finite(),
            StreamValue::Gps { lat, lon } => (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon),
        };
        if ok {
            Ok(())
        } else {
            Err(FeatureError::InvalidRecord(format!("{:?} out of range", self.value)))
        }
    }
}

fn parse_f64(field: Option<&str>, what: &str, line: u64) -> Result<f64> {
    field
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| FeatureError::InvalidRecord(format!("line {line}: missing {what}")))?
        .parse::<f64>()
        .map_err(|e| FeatureError::InvalidRecord(format!("line {line}: bad {what}: {e}")))
}

/// Reads `participant_id,timestamp,stream,value[,value2,value3]` rows. Every
/// record is validated; the first invalid row aborts the read.
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<SensorRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let participant_id = row
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| FeatureError::InvalidRecord(format!("line {line}: missing participant_id")))?
            .to_string();
        let timestamp = parse_f64(row.get(1), "timestamp", line)?;
        let stream = row
            .get(2)
            .and_then(Stream::parse)
            .ok_or_else(|| FeatureError::InvalidRecord(format!("line {line}: unknown stream {:?}", row.get(2))))?;
        let v1 = parse_f64(row.get(3), "value", line)?;
        let value = match stream {
            Stream::HeartRate => StreamValue::HeartRate { bpm: v1 },
            Stream::StepCount => {
                if v1 < 0.0 || v1.fract() != 0.0 {
                    return Err(FeatureError::InvalidRecord(format!(
                        "line {line}: step_count must be a non-negative integer, got {v1}"
                    )));
                }
                StreamValue::StepCount { steps: v1 as u64 }
            }
            Stream::Accelerometer => StreamValue::Accelerometer {
                x: v1,
                y: parse_f64(row.get(4), "value2", line)?,
                z: parse_f64(row.get(5), "value3", line)?,
            },
            Stream::Battery => StreamValue::Battery { level: v1 },
            Stream::Noise => StreamValue::Noise { db: v1 },
            Stream::Gps => StreamValue::Gps { lat: v1, lon: parse_f64(row.get(4), "value2", line)? },
        };
        let record = SensorRecord { participant_id, timestamp, value };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records_csv<W: Write>(writer: W, records: &[SensorRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    wtr.write_record(["participant_id", "timestamp", "stream", "value", "value2", "value3"])?;
    for r in records {
        let ts = r.timestamp.to_string();
        let stream = r.value.stream().as_str();
        let mut fields = vec![r.participant_id.clone(), ts, stream.to_string()];
        match r.value {
            StreamValue::HeartRate { bpm } => fields.push(bpm.to_string()),
            StreamValue::StepCount { steps } => fields.push(steps.to_string()),
            StreamValue::Accelerometer { x, y, z } => fields.extend([x.to_string(), y.to_string(), z.to_string()]),
            StreamValue::Battery { level } => fields.push(level.to_string()),
            StreamValue::Noise { db } => fields.push(db.to_string()),
            StreamValue::Gps { lat, lon } => fields.extend([lat.to_string(), lon.to_string()]),
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let records = vec![
            SensorRecord::new("p1", 0.0, StreamValue::HeartRate { bpm: 61.5 }),
            SensorRecord::new("p1", 10.0, StreamValue::StepCount { steps: 12 }),
            SensorRecord::new("p1", 12.5, StreamValue::Accelerometer { x: 0.1, y: -9.8, z: 0.3 }),
            SensorRecord::new("p1", 60.0, StreamValue::Gps { lat: 42.4, lon: -83.1 }),
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &records).unwrap();
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn rejects_out_of_range_heart_rate() {
        let data = "participant_id,timestamp,stream,value\np1,0,heart_rate,350\n";
        assert!(matches!(read_records_csv(data.as_bytes()), Err(FeatureError::InvalidRecord(_))));
    }

    #[test]
    fn rejects_fractional_steps_and_nan_time() {
        let data = "participant_id,timestamp,stream,value\np1,0,step_count,1.5\n";
        assert!(read_records_csv(data.as_bytes()).is_err());
        let data = "participant_id,timestamp,stream,value\np1,NaN,heart_rate,60\n";
        assert!(matches!(read_records_csv(data.as_bytes()), Err(FeatureError::NonFiniteTimestamp { .. })));
    }
}
