//! Paired t-tests with Cohen's d, significance stars and the survey
//! comparison report.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{ChartSpec, Point, Series};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("score lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all paired differences are equal; the t statistic is undefined")]
    DegenerateSample,
    #[error("score {0} outside the 1-10 scale")]
    ScoreOutOfRange(f64),
    #[error("p-value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("question {question}: missing {condition} condition")]
    MissingCondition { question: String, condition: String },
    #[error("survey row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pub question_id: String,
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p: f64,
    pub cohens_d: f64,
    pub stars: String,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub n: usize,
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn stars(p: f64) -> Result<&'static str> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::OutOfRange(p));
    }
    Ok(if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn paired_ttest(scores: &PairedScores) -> Result<TTestResult> {
    let (a, b) = (&scores.scores_a, &scores.scores_b);
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diff.iter().all(|d| *d == diff[0]) {
        return Err(StatsError::DegenerateSample);
    }
    let md = mean(&diff);
    let sd = sample_sd(&diff);
    if !(sd > 0.0) {
        return Err(StatsError::DegenerateSample);
    }
    let t = md / (sd / (n as f64).sqrt());
    let df = n - 1;
    let p = t_two_sided_p(t, df as f64);
    Ok(TTestResult { t, df, p, cohens_d: md / sd, stars: stars(p)?.to_string(), mean_diff: md, sd_diff: sd, n })
}

/// A published `t(df) = t, p = p, d = d` triple, with the number of decimals
/// the values were printed to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedStat {
    pub label: String,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub p_decimals: u32,
    pub cohens_d: f64,
    pub d_decimals: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub reported: ReportedStat,
    pub computed_p: f64,
    /// `t / sqrt(df + 1)`.
    pub computed_d: f64,
    pub p_consistent: bool,
    pub d_consistent: bool,
}

fn matches_rounded(value: f64, reported: f64, decimals: u32) -> bool {
    (value - reported).abs() <= 0.5 * 10f64.powi(-(decimals as i32)) + 1e-12
}

/// Recomputes p and d from a reported t and flags values that do not round
/// to what was printed.
pub fn check_reported(r: &ReportedStat) -> ConsistencyCheck {
    let computed_p = t_two_sided_p(r.t, r.df as f64);
    let computed_d = r.t / ((r.df + 1) as f64).sqrt();
    ConsistencyCheck {
        computed_p,
        computed_d,
        p_consistent: matches_rounded(computed_p, r.p, r.p_decimals),
        d_consistent: matches_rounded(computed_d, r.cohens_d, r.d_decimals),
        reported: r.clone(),
    }
}

/// The three paired comparisons reported for the user study.
pub fn published_results() -> Vec<ReportedStat> {
    let r = |label: &str, t: f64, p: f64, d: f64| ReportedStat {
        label: label.into(),
        t,
        df: 11,
        p,
        p_decimals: 3,
        cohens_d: d,
        d_decimals: 2,
    };
    vec![
        r("personalization (question 2)", 2.57, 0.026, 0.74),
        r("clarity of system explanation (question 3)", 3.36, 0.063, 0.97),
        r("overall satisfaction", 3.35, 0.006, 0.97),
    ]
}

pub const CONDITION_A: &str = "optimized";
pub const CONDITION_B: &str = "basic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRow {
    pub participant: String,
    pub question_id: String,
    pub condition: String,
    pub score: f64,
}

/// Checks the score scale and the condition label of row number `row`.
pub fn validate_row(row: usize, r: &SurveyRow) -> Result<()> {
    if !(1.0..=10.0).contains(&r.score) {
        return Err(StatsError::ScoreOutOfRange(r.score));
    }
    if r.condition != CONDITION_A && r.condition != CONDITION_B {
        return Err(StatsError::BadRow { row, reason: format!("unknown condition {:?}", r.condition) });
    }
    Ok(())
}

/// Reads `participant,question_id,condition,score` rows; the delimiter is
/// detected from the header line (comma, semicolon or tab).
pub fn read_survey<R: Read>(mut reader: R) -> Result<Vec<SurveyRow>> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(csv::Error::from)?;
    let header = text.lines().next().unwrap_or("");
    let delim = [b'\t', b';', b','].into_iter().find(|d| header.contains(*d as char)).unwrap_or(b',');
    let mut rdr = csv::ReaderBuilder::new().delimiter(delim).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<SurveyRow>().enumerate() {
        let row = rec.map_err(|e| StatsError::BadRow { row: i + 1, reason: e.to_string() })?;
        validate_row(i + 1, &row)?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub n: usize,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    pub ttest: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub condition_a: String,
    pub condition_b: String,
    pub results: Vec<QuestionResult>,
    /// Questions that were skipped and why.
    pub warnings: Vec<String>,
    pub published_checks: Vec<ConsistencyCheck>,
    pub chart: ChartSpec,
}

/// Pairs scores by participant within each question, tests each question
/// and builds a grouped bar chart of mean and sd per condition.
pub fn compare_report(rows: &[SurveyRow]) -> CompareReport {
    let mut by_q: BTreeMap<&str, (BTreeMap<&str, f64>, BTreeMap<&str, f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_q.entry(&r.question_id).or_default();
        let side = if r.condition == CONDITION_A { &mut e.0 } else { &mut e.1 };
        side.insert(&r.participant, r.score);
    }
    let mut results = Vec::new();
    let mut warnings = Vec::new();
    for (q, (a, b)) in &by_q {
        let missing = if a.is_empty() {
            Some(CONDITION_A)
        } else if b.is_empty() {
            Some(CONDITION_B)
        } else {
            None
        };
        if let Some(cond) = missing {
            let e = StatsError::MissingCondition { question: q.to_string(), condition: cond.into() };
            tracing::warn!("{e}");
            warnings.push(e.to_string());
            continue;
        }
        let paired: Vec<&str> = a.keys().filter(|p| b.contains_key(*p)).copied().collect();
        let unpaired = a.len() + b.len() - 2 * paired.len();
        if unpaired > 0 {
            warnings.push(format!("question {q}: {unpaired} unpaired responses ignored"));
        }
        let scores = PairedScores {
            question_id: q.to_string(),
            scores_a: paired.iter().map(|p| a[p]).collect(),
            scores_b: paired.iter().map(|p| b[p]).collect(),
        };
        match paired_ttest(&scores) {
            Ok(ttest) => results.push(QuestionResult {
                question_id: q.to_string(),
                n: paired.len(),
                mean_a: mean(&scores.scores_a),
                sd_a: sample_sd(&scores.scores_a),
                mean_b: mean(&scores.scores_b),
                sd_b: sample_sd(&scores.scores_b),
                ttest,
            }),
            Err(e) => {
                tracing::warn!(question = q, "skipped: {e}");
                warnings.push(format!("question {q}: {e}"));
            }
        }
    }

    let series = |name: &str, pick: fn(&QuestionResult) -> (f64, f64), starred: bool| Series {
        name: name.into(),
        points: results
            .iter()
            .map(|r| {
                let (m, sd) = pick(r);
                Point {
                    label: r.question_id.clone(),
                    value: m,
                    error: Some(sd),
                    annotation: (starred && !r.ttest.stars.is_empty()).then(|| r.ttest.stars.clone()),
                }
            })
            .collect(),
    };
    let chart = ChartSpec::grouped_bar(
        "Survey scores by condition (mean and sd)",
        "question",
        "score (1-10)",
        vec![series(CONDITION_A, |r| (r.mean_a, r.sd_a), true), series(CONDITION_B, |r| (r.mean_b, r.sd_b), false)],
    );
    let published_checks = published_results().iter().map(check_reported).collect();
    CompareReport {
        condition_a: CONDITION_A.into(),
        condition_b: CONDITION_B.into(),
        results,
        warnings,
        published_checks,
        chart,
    }
}
