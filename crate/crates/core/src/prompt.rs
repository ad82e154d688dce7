//! Prompt bundles: tone directive, qualitative facts drawn from explanations,
//! chart attachments, recent history and, on request, the precise values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{AffectState, Tone};
use crate::xai::{ExplainKind, Explanation, ExplanationArtifact, Op, ShapAttribution};

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
}

pub const HIGH_PROBABILITY: &str = "high probability";
pub const MEDIUM: &str = "medium";
pub const LOW: &str = "low";

pub const MORE_IMPORTANT: &str = "plays a more important role in the model decision";
pub const MODERATE: &str = "has a moderate influence";
pub const LITTLE: &str = "has little influence";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub high_threshold: f64,
    pub medium_threshold: f64,
    pub history_turns: usize,
    pub max_attachments: usize,
    /// Case-insensitive phrases that ask for exact values.
    pub precise_patterns: Vec<String>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            high_threshold: 0.7,
            medium_threshold: 0.4,
            history_turns: 20,
            max_attachments: 4,
            precise_patterns: ["exact", "precise", "numeric value", "numerical value", "actual number", "raw value"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl PromptConfig {
    pub fn quantize_probability(&self, p: f64) -> Result<&'static str, PromptError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(PromptError::OutOfRange(p));
        }
        Ok(if p >= self.high_threshold {
            HIGH_PROBABILITY
        } else if p >= self.medium_threshold {
            MEDIUM
        } else {
            LOW
        })
    }

    pub fn detect_precise_request(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        let hit = self.precise_patterns.iter().find(|p| lower.contains(&p.to_lowercase()));
        tracing::debug!(patterns = ?self.precise_patterns, matched = ?hit, "precise-value request check");
        hit.is_some()
    }
}

/// Band label for a probability under the default cutoffs.
pub fn quantize_probability(p: f64) -> Result<&'static str, PromptError> {
    PromptConfig::default().quantize_probability(p)
}

pub fn detect_precise_request(text: &str) -> bool {
    PromptConfig::default().detect_precise_request(text)
}

/// Readable, digit-free name for a feature column.
pub fn humanize_feature(name: &str) -> String {
    let known = match name {
        "accel_axis_changes" => Some("movement direction changes"),
        "accel_mag_var" => Some("movement intensity variability"),
        "battery_discharge_max" => Some("peak battery drain"),
        "battery_discharge_mean" => Some("average battery drain"),
        "battery_discharge_min" => Some("lowest battery drain"),
        "battery_discharge_std" => Some("battery drain variability"),
        "hr_excess_kurtosis" => Some("heart rate peakedness"),
        "hr_max" => Some("maximum heart rate"),
        "hr_mean" => Some("average heart rate"),
        "hr_median" => Some("median heart rate"),
        "hr_min" => Some("minimum heart rate"),
        "hr_q1" => Some("lower-quartile heart rate"),
        "hr_q3" => Some("upper-quartile heart rate"),
        "hr_std" => Some("heart rate variability"),
        "noise_max" => Some("peak ambient noise"),
        "noise_mean" => Some("average ambient noise"),
        "steps_max" => Some("peak step count"),
        "steps_median" => Some("median step count"),
        "steps_q1" => Some("lower-quartile step count"),
        "steps_q3" => Some("upper-quartile step count"),
        "steps_sum" => Some("total steps"),
        "intoxicated" => Some("intoxication"),
        _ => None,
    };
    match known {
        Some(s) => s.to_string(),
        None => {
            let cleaned: String = name.chars().map(|c| if c == '_' { ' ' } else { c }).filter(|c| !c.is_ascii_digit()).collect();
            cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// One statement per feature, banded by |phi| rank terciles: the first
/// `ceil(n/3)` ranks are most important, ranks up to `ceil(2n/3)` moderate.
pub fn quantize_importance(attr: &ShapAttribution) -> Vec<String> {
    let ranked = attr.ranked();
    let n = ranked.len();
    let top = n.div_ceil(3);
    let mid = (2 * n).div_ceil(3);
    ranked
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let band = if i < top {
                MORE_IMPORTANT
            } else if i < mid {
                MODERATE
            } else {
                LITTLE
            };
            format!("{} {band}.", capitalize(&humanize_feature(name)))
        })
        .collect()
}

pub fn tone_directive(state: &AffectState) -> String {
    let tone = match state.tone {
        Tone::EmpatheticSupportive => {
            "The user appears to be experiencing negative emotions. Convey empathy and support, avoid overly complex terminology, and keep the explanation gentle and simple."
        }
        Tone::UpliftingAffirmative => {
            "The user appears to be in a positive mood. Use an uplifting and affirmative tone that reinforces their understanding."
        }
        Tone::NeutralProfessional => "Use a professional and clear tone.",
    };
    format!(
        "{tone} Describe model results qualitatively, for example \"high probability\" or \"medium impact\", rather than with precise numbers, unless precise values are supplied. Refer to the attached charts where helpful."
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub kind: ExplainKind,
    pub participant_id: String,
    pub caption: String,
    pub img64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreciseFact {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub tone: Tone,
    pub system_directive: String,
    pub history: Vec<HistoryTurn>,
    pub user_message: String,
    pub attachments: Vec<Attachment>,
    pub qualitative_facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precise_facts: Option<Vec<PreciseFact>>,
}

fn qualitative(cfg: &PromptConfig, e: &Explanation) -> Vec<String> {
    let mut out = Vec::new();
    if let Ok(band) = cfg.quantize_probability(e.prediction.clamp(0.0, 1.0)) {
        out.push(format!("The estimated likelihood of intoxication for this window is {band}."));
    }
    match &e.artifact {
        ExplanationArtifact::Shap(a) => out.extend(quantize_importance(a)),
        ExplanationArtifact::Rules(rs) => {
            if rs.rules.is_empty() {
                out.push("No decision rule met the precision and recall requirements.".into());
            }
            for r in rs.rules.iter().take(3) {
                let conds: Vec<String> = r
                    .conjuncts
                    .iter()
                    .map(|c| format!("{} is {}", humanize_feature(&c.name), if c.op == Op::Gt { "high" } else { "low" }))
                    .collect();
                let band = cfg.quantize_probability(r.precision).unwrap_or(LOW);
                out.push(format!("A decision rule flags intoxication when {}; its precision is {band}.", conds.join(" and ")));
            }
        }
        ExplanationArtifact::Counterfactual(cf) => {
            if cf.changed_features.is_empty() {
                out.push("The window already has the alternative outcome; no change is needed.".into());
            }
            for d in &cf.changed_features {
                let dir = if d.delta > 0.0 { "higher" } else { "lower" };
                out.push(format!("The decision would change if {} were {dir}.", humanize_feature(&d.name)));
            }
        }
        ExplanationArtifact::Causal(g) => {
            let mut edges: Vec<_> = g.edges.iter().collect();
            edges.sort_by(|a, b| b.score_gain.total_cmp(&a.score_gain).then(a.from.cmp(&b.from)).then(a.to.cmp(&b.to)));
            if edges.is_empty() {
                out.push("The causal analysis found no clear dependencies among the selected features.".into());
            }
            for edge in edges.iter().take(5) {
                out.push(format!("The causal diagram suggests {} influences {}.", humanize_feature(&edge.from), humanize_feature(&edge.to)));
            }
        }
    }
    out
}

fn precise(e: &Explanation) -> Vec<PreciseFact> {
    let kind = e.kind.as_str();
    let fact = |name: String, value: f64| PreciseFact { name, value };
    let mut out = vec![fact(format!("{kind}:prediction"), e.prediction)];
    match &e.artifact {
        ExplanationArtifact::Shap(a) => {
            out.push(fact("shap:base_value".into(), a.base_value));
            out.push(fact("shap:output".into(), a.output));
            out.extend(a.ranked().into_iter().map(|(n, v)| fact(format!("shap:phi:{n}"), v)));
        }
        ExplanationArtifact::Rules(rs) => {
            for (i, r) in rs.rules.iter().enumerate() {
                out.push(fact(format!("rules:{i}:precision"), r.precision));
                out.push(fact(format!("rules:{i}:recall"), r.recall));
                for c in &r.conjuncts {
                    out.push(fact(format!("rules:{i}:{}:{}", c.name, if c.op == Op::Gt { ">" } else { "<=" }), c.threshold));
                }
            }
        }
        ExplanationArtifact::Counterfactual(cf) => {
            out.push(fact("cf:distance".into(), cf.distance));
            out.push(fact("cf:achieved_output".into(), cf.achieved_output));
            out.extend(cf.changed_features.iter().map(|d| fact(format!("cf:delta:{}", d.name), d.delta)));
        }
        ExplanationArtifact::Causal(g) => {
            out.push(fact("causal:total_score".into(), g.total_score));
            out.extend(g.edges.iter().map(|ed| fact(format!("causal:{}->{}", ed.from, ed.to), ed.score_gain)));
        }
    }
    out
}

/// Builds the bundle for one user message. `explanations` is ordered oldest
/// first; only the most recent ones are attached.
pub fn assemble(
    state: &AffectState,
    explanations: &[Explanation],
    history: &[HistoryTurn],
    user_message: &str,
    cfg: &PromptConfig,
) -> PromptBundle {
    let recent = &explanations[explanations.len().saturating_sub(cfg.max_attachments)..];
    let attachments = recent
        .iter()
        .map(|e| Attachment {
            kind: e.kind,
            participant_id: e.participant_id.clone(),
            caption: format!("{} explanation for participant {}", e.kind, e.participant_id),
            img64: e.img64.clone(),
        })
        .collect();
    let qualitative_facts = recent.iter().flat_map(|e| qualitative(cfg, e)).collect();
    let precise_facts = cfg.detect_precise_request(user_message).then(|| recent.iter().flat_map(precise).collect());
    PromptBundle {
        tone: state.tone,
        system_directive: tone_directive(state),
        history: history[history.len().saturating_sub(cfg.history_turns)..].to_vec(),
        user_message: user_message.to_string(),
        attachments,
        qualitative_facts,
        precise_facts,
    }
}
