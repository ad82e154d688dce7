//! Facial-emotion frames, text sentiment and their fusion into a response tone.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AffectError {
    #[error("invalid emotion distribution: {0}")]
    InvalidDistribution(String),
    #[error("no frames in the aggregation window")]
    EmptyWindow,
    #[error("invalid lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, AffectError>;

/// Tolerance on the sum of a frame distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 7] =
        [Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Happiness, Emotion::Sadness, Emotion::Surprise, Emotion::Neutral];

    /// Decision weight; negative, high-arousal emotions weigh most.
    pub fn priority(self) -> f64 {
        match self {
            Emotion::Anger => 1.6,
            Emotion::Fear => 1.5,
            Emotion::Disgust => 1.4,
            Emotion::Sadness => 1.3,
            Emotion::Surprise => 1.1,
            Emotion::Happiness => 1.0,
            Emotion::Neutral => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Picks the better of two candidates: higher value, then higher priority.
fn prefer(a: (Emotion, f64), b: (Emotion, f64)) -> (Emotion, f64) {
    if b.1 > a.1 || (b.1 == a.1 && b.0.priority() > a.0.priority()) {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Negative,
    Positive,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tone {
    EmpatheticSupportive,
    UpliftingAffirmative,
    NeutralProfessional,
}

impl Tone {
    pub fn as_str(self) -> &'static str {
        match self {
            Tone::EmpatheticSupportive => "empathetic_supportive",
            Tone::UpliftingAffirmative => "uplifting_affirmative",
            Tone::NeutralProfessional => "neutral_professional",
        }
    }

    pub fn from_valence(v: Valence) -> Tone {
        match v {
            Valence::Negative => Tone::EmpatheticSupportive,
            Valence::Positive => Tone::UpliftingAffirmative,
            Valence::Neutral => Tone::NeutralProfessional,
        }
    }
}

impl fmt::Display for Tone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectSource {
    Face,
    Text,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffectConfig {
    /// Same-emotion intensity changes below this keep the previous tone.
    pub hysteresis: f64,
    /// Text scores with smaller magnitude count as neutral.
    pub text_dead_zone: f64,
    /// Longest stretch of frames aggregated for one message, in seconds.
    pub window_cap_s: f64,
    pub surprise_positive: bool,
}

impl Default for AffectConfig {
    fn default() -> Self {
        Self { hysteresis: 0.10, text_dead_zone: 0.1, window_cap_s: 120.0, surprise_positive: true }
    }
}

impl AffectConfig {
    pub fn valence(&self, e: Emotion) -> Valence {
        match e {
            Emotion::Anger | Emotion::Disgust | Emotion::Fear | Emotion::Sadness => Valence::Negative,
            Emotion::Happiness => Valence::Positive,
            Emotion::Surprise if self.surprise_positive => Valence::Positive,
            Emotion::Surprise => Valence::Negative,
            Emotion::Neutral => Valence::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionObservation {
    pub session_id: String,
    pub timestamp: f64,
    /// Missing emotions count as 0.
    pub distribution: BTreeMap<Emotion, f64>,
}

impl EmotionObservation {
    pub fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(AffectError::InvalidDistribution("timestamp is not finite".into()));
        }
        if let Some((e, v)) = self.distribution.iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(AffectError::InvalidDistribution(format!("{e} = {v}")));
        }
        let sum: f64 = self.distribution.values().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(AffectError::InvalidDistribution(format!("proportions sum to {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedFrame {
    pub timestamp: f64,
    pub emotion: Emotion,
    pub intensity: f64,
}

/// Highest-proportion emotion of one frame; ties go to the higher priority.
pub fn classify_frame(obs: &EmotionObservation) -> Result<ClassifiedFrame> {
    obs.validate()?;
    let mut best = (Emotion::Neutral, f64::NEG_INFINITY);
    for e in Emotion::ALL {
        best = prefer(best, (e, obs.distribution.get(&e).copied().unwrap_or(0.0)));
    }
    Ok(ClassifiedFrame { timestamp: obs.timestamp, emotion: best.0, intensity: best.1 })
}

/// Weight and mean intensity of every non-neutral emotion in a window, where
/// weight = `frequency * mean intensity * priority` and frequency counts
/// against all frames, neutral ones included.
pub fn window_weights(frames: &[ClassifiedFrame]) -> BTreeMap<Emotion, (f64, f64)> {
    let total = frames.len() as f64;
    let mut acc: BTreeMap<Emotion, (usize, f64)> = BTreeMap::new();
    for f in frames.iter().filter(|f| f.emotion != Emotion::Neutral) {
        let e = acc.entry(f.emotion).or_default();
        e.0 += 1;
        e.1 += f.intensity;
    }
    acc.into_iter()
        .map(|(e, (count, sum))| {
            let mean = sum / count as f64;
            (e, ((count as f64 / total) * mean * e.priority(), mean))
        })
        .collect()
}

/// Dominant non-neutral emotion of a window and its mean intensity, by
/// highest weight with ties to the higher priority; `None` when every frame
/// is neutral.
pub fn aggregate_window(frames: &[ClassifiedFrame]) -> Result<Option<(Emotion, f64)>> {
    if frames.is_empty() {
        return Err(AffectError::EmptyWindow);
    }
    let mut best: Option<(Emotion, f64, f64)> = None;
    for (e, (weight, mean)) in window_weights(frames) {
        let take = match best {
            None => true,
            Some((be, bw, _)) => weight > bw || (weight == bw && e.priority() > be.priority()),
        };
        if take {
            best = Some((e, weight, mean));
        }
    }
    Ok(best.map(|(e, _, mean)| (e, mean)))
}

/// Frames in the aggregation window for a message: those after the previous
/// message and no older than `cap_s` before the newest frame.
pub fn window_frames(frames: &[ClassifiedFrame], since: Option<f64>, cap_s: f64) -> Vec<ClassifiedFrame> {
    let Some(newest) = frames.iter().map(|f| f.timestamp).reduce(f64::max) else { return Vec::new() };
    frames
        .iter()
        .filter(|f| since.is_none_or(|s| f.timestamp > s) && f.timestamp >= newest - cap_s)
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextSentiment {
    pub label: SentimentLabel,
    /// In `[-1, 1]`.
    pub score: f64,
}

impl TextSentiment {
    pub fn neutral() -> Self {
        Self { label: SentimentLabel::Neutral, score: 0.0 }
    }
}

const NEGATORS: &[&str] = &["not", "no", "never", "nothing", "neither", "nor", "without", "hardly", "dont", "doesnt", "isnt", "wasnt", "cant", "cannot", "wont", "didnt", "aren't", "don't", "doesn't", "isn't", "wasn't", "can't", "won't", "didn't"];
const NEGATION_WINDOW: usize = 3;

/// Word polarity lexicon; positive entries score > 0, negative < 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    words: HashMap<String, f64>,
}

impl Lexicon {
    /// Parses `word,score` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (w, s) = line.split_once(',').ok_or(AffectError::Lexicon { line: i + 1, reason: "expected word,score".into() })?;
            let score: f64 = s.trim().parse().map_err(|_| AffectError::Lexicon { line: i + 1, reason: format!("bad score {s:?}") })?;
            words.insert(w.trim().to_lowercase(), score);
        }
        Ok(Self { words })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(include_str!("../data/lexicon.txt")).expect("bundled lexicon parses"))
    }

    pub fn polarity(&self, word: &str) -> Option<f64> {
        self.words.get(word).map(|s| s.signum()).filter(|s| *s != 0.0)
    }

    /// `(positives - negatives) / max(1, matched)`, where a negator flips the
    /// polarity of lexicon words in the next three tokens.
    pub fn analyze(&self, text: &str, dead_zone: f64) -> TextSentiment {
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower.split(|c: char| !(c.is_alphanumeric() || c == '\'')).filter(|t| !t.is_empty()).collect();
        let mut matched = 0usize;
        let mut total = 0.0;
        let mut negate_until = 0usize;
        for (i, tok) in tokens.iter().enumerate() {
            if NEGATORS.contains(tok) {
                negate_until = i + NEGATION_WINDOW + 1;
                continue;
            }
            if let Some(p) = self.polarity(tok) {
                matched += 1;
                total += if i < negate_until { -p } else { p };
            }
        }
        let score = (total / matched.max(1) as f64).clamp(-1.0, 1.0);
        let label = if score.abs() < dead_zone {
            SentimentLabel::Neutral
        } else if score > 0.0 {
            SentimentLabel::Positive
        } else {
            SentimentLabel::Negative
        };
        TextSentiment { label, score }
    }
}

/// Sentiment of `text` under the bundled lexicon and default dead zone.
pub fn analyze_text(text: &str) -> TextSentiment {
    Lexicon::bundled().analyze(text, AffectConfig::default().text_dead_zone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectState {
    pub dominant_emotion: Option<Emotion>,
    pub dominant_intensity: f64,
    pub tone: Tone,
    pub source: AffectSource,
    pub previous: Option<(Emotion, f64)>,
}

impl AffectState {
    pub fn default_neutral() -> Self {
        Self {
            dominant_emotion: None,
            dominant_intensity: 0.0,
            tone: Tone::NeutralProfessional,
            source: AffectSource::Default,
            previous: None,
        }
    }
}

impl Default for AffectState {
    fn default() -> Self {
        Self::default_neutral()
    }
}

/// Face first, text as fallback, neutral by default; a small same-emotion
/// intensity change keeps the previous emotion and tone.
pub fn fuse(face: Option<(Emotion, f64)>, text: &TextSentiment, prev: Option<&AffectState>, cfg: &AffectConfig) -> AffectState {
    let previous = prev.and_then(|p| p.dominant_emotion.map(|e| (e, p.dominant_intensity)));
    let mut next = match (face, text.label) {
        (Some((e, i)), _) => AffectState {
            dominant_emotion: Some(e),
            dominant_intensity: i.clamp(0.0, 1.0),
            tone: Tone::from_valence(cfg.valence(e)),
            source: AffectSource::Face,
            previous,
        },
        (None, SentimentLabel::Negative) | (None, SentimentLabel::Positive) => AffectState {
            dominant_emotion: None,
            dominant_intensity: text.score.abs().min(1.0),
            tone: Tone::from_valence(if text.label == SentimentLabel::Negative { Valence::Negative } else { Valence::Positive }),
            source: AffectSource::Text,
            previous,
        },
        (None, SentimentLabel::Neutral) => AffectState { previous, ..AffectState::default_neutral() },
    };
    if let (Some(p), Some(e)) = (prev, next.dominant_emotion) {
        if p.dominant_emotion == Some(e) && (next.dominant_intensity - p.dominant_intensity).abs() < cfg.hysteresis {
            next.tone = p.tone;
            next.dominant_emotion = p.dominant_emotion;
        }
    }
    next
}
