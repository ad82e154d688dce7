use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::window::WindowFrame;
use super::{FeatureError, Label, Result};

/// A self-reported use interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseEvent {
    pub participant_id: String,
    pub start: f64,
    pub end: f64,
    pub intoxicated: bool,
}

/// Interval `[start, end)` during which the participant was answering
/// self-report prompts, so silence means "not intoxicated" rather than unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpan {
    pub participant_id: String,
    pub start: f64,
    pub end: f64,
}

fn overlaps(w_start: f64, w_end: f64, start: f64, end: f64) -> bool {
    if start == end {
        // a point report belongs to the window containing it
        return w_start <= start && start < w_end;
    }
    start < w_end && end > w_start
}

fn check_interval(pid: &str, start: f64, end: f64) -> Result<()> {
    if start.is_finite() && end.is_finite() && start <= end {
        Ok(())
    } else {
        Err(FeatureError::MalformedEvent { participant_id: pid.to_string(), start, end })
    }
}

/// Labels each frame: intoxicated if it overlaps any intoxicated event,
/// otherwise not intoxicated when it overlaps any event or coverage span, and
/// unlabeled when no report covers it.
pub fn label_windows(mut frames: Vec<WindowFrame>, events: &[UseEvent], coverage: &[CoverageSpan]) -> Result<Vec<WindowFrame>> {
    let known: BTreeSet<&str> = frames.iter().map(|f| f.participant_id.as_str()).collect();
    for e in events {
        check_interval(&e.participant_id, e.start, e.end)?;
        if !known.contains(e.participant_id.as_str()) {
            return Err(FeatureError::UnknownParticipant(e.participant_id.clone()));
        }
    }
    for c in coverage {
        check_interval(&c.participant_id, c.start, c.end)?;
    }

    for f in &mut frames {
        let mine = |pid: &str| pid == f.participant_id;
        let mut covered = false;
        let mut positive = false;
        for e in events.iter().filter(|e| mine(&e.participant_id)) {
            if overlaps(f.window_start, f.window_end, e.start, e.end) {
                covered = true;
                positive |= e.intoxicated;
            }
        }
        if !covered {
            covered = coverage
                .iter()
                .filter(|c| mine(&c.participant_id))
                .any(|c| overlaps(f.window_start, f.window_end, c.start, c.end));
        }
        f.label = covered.then(|| Label::from_positive(positive));
    }
    Ok(frames)
}
