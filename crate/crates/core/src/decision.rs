//! Final answer decisions: fuse the two modules' no-answer evidence, search
//! the answerable threshold on a development set, aggregate overlapping
//! windows, and extract answer strings.
//!
//! Decision direction: the fused score `v` is a *no-answer* score, so the
//! prediction is the null string iff `v > delta`. The published worked
//! example (no-answer score 1.73 against delta -0.98 yielding null) pins this
//! down, even though prose descriptions sometimes state the opposite
//! inequality.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::char_slice;
use crate::error::{Error, Result};
use crate::intensive::TavScores;

/// Everything the decision stage knows about one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictScores {
    pub qid: String,
    pub score_diff: f64,
    pub score_ext: f64,
    pub v: f64,
    pub best_span: (usize, usize),
    pub answer_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneMetric {
    Em,
    F1,
}

impl std::str::FromStr for TuneMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<TuneMetric> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(TuneMetric::Em),
            "f1" => Ok(TuneMetric::F1),
            other => Err(Error::Config(format!("unknown tuning metric `{other}`"))),
        }
    }
}

/// A tuned answerable threshold. `delta` may be the +/- infinity sentinels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Threshold {
    pub delta: f64,
    pub tuned_metric: TuneMetric,
    pub tuned_on: String,
    /// Mean per-question metric achieved at `delta`, in [0, 1].
    pub achieved: f64,
}

/// Rear verification: linear fusion of the intensive module's `score_diff`
/// and the sketchy module's `score_ext`.
pub fn rear_verify(score_diff: f64, score_ext: f64, beta1: f64, beta2: f64) -> Result<f64> {
    if beta1 < 0.0 || beta2 < 0.0 {
        return Err(Error::Config(format!(
            "fusion weights must be nonnegative, got ({beta1}, {beta2})"
        )));
    }
    Ok(beta1 * score_diff + beta2 * score_ext)
}

/// Null string iff the no-answer score exceeds the threshold.
pub fn decide(v: f64, delta: f64, best_span_text: &str) -> String {
    if v > delta {
        String::new()
    } else {
        best_span_text.to_string()
    }
}

/// Scores of one feature window awaiting aggregation.
#[derive(Debug, Clone)]
pub struct WindowVerdict {
    pub window_index: usize,
    pub scores: TavScores,
    pub score_ext: f64,
    /// Best span in this window's input-token coordinates.
    pub best_span: (usize, usize),
}

/// One question's scores after window aggregation.
#[derive(Debug, Clone)]
pub struct AggregatedVerdict {
    pub score_diff: f64,
    pub score_ext: f64,
    /// Index into the window list whose span won.
    pub best_window: usize,
    pub best_span: (usize, usize),
}

/// Collapse overlapping windows of one question: the span comes from the
/// window with the greatest has-answer score, the no-answer difference is
/// recomputed from that window's null score against the global best
/// has-answer score, and the external score is averaged.
pub fn aggregate_windows(windows: &[WindowVerdict]) -> Result<AggregatedVerdict> {
    if windows.is_empty() {
        return Err(Error::Aggregation("no windows to aggregate".into()));
    }
    let mut best = 0usize;
    for (i, w) in windows.iter().enumerate() {
        if w.scores.score_has > windows[best].scores.score_has {
            best = i;
        }
    }
    let global_max_has = windows[best].scores.score_has;
    let score_ext = windows.iter().map(|w| w.score_ext).sum::<f64>() / windows.len() as f64;
    Ok(AggregatedVerdict {
        score_diff: windows[best].scores.score_null - global_max_has,
        score_ext,
        best_window: windows[best].window_index,
        best_span: windows[best].best_span,
    })
}

/// One dev question prepared for the threshold search: its fused no-answer
/// score and the metric payoff of each of the two possible decisions.
#[derive(Debug, Clone)]
pub struct DevPoint {
    pub qid: String,
    pub v: f64,
    pub em_if_answered: f64,
    pub f1_if_answered: f64,
    pub em_if_null: f64,
    pub f1_if_null: f64,
}

impl DevPoint {
    fn payoff(&self, delta: f64, metric: TuneMetric) -> f64 {
        let answered = self.v <= delta;
        match (metric, answered) {
            (TuneMetric::Em, true) => self.em_if_answered,
            (TuneMetric::Em, false) => self.em_if_null,
            (TuneMetric::F1, true) => self.f1_if_answered,
            (TuneMetric::F1, false) => self.f1_if_null,
        }
    }
}

fn mean_payoff(points: &[DevPoint], delta: f64, metric: TuneMetric) -> f64 {
    points.iter().map(|p| p.payoff(delta, metric)).sum::<f64>() / points.len() as f64
}

/// Pick the threshold maximizing the chosen metric over the candidate set:
/// midpoints between consecutive sorted distinct scores plus the two infinity
/// sentinels. Ties break toward the smaller threshold.
pub fn search_threshold(
    points: &[DevPoint],
    metric: TuneMetric,
    tuned_on: &str,
) -> Result<Threshold> {
    if points.is_empty() {
        return Err(Error::Search("empty dev set".into()));
    }
    let mut vs: Vec<f64> = points.iter().map(|p| p.v).collect();
    vs.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    vs.dedup();

    let mut candidates = vec![f64::NEG_INFINITY];
    candidates.extend(vs.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(f64::INFINITY);

    let mut best_delta = candidates[0];
    let mut best_value = mean_payoff(points, candidates[0], metric);
    for &delta in &candidates[1..] {
        let value = mean_payoff(points, delta, metric);
        if value > best_value {
            best_value = value;
            best_delta = delta;
        }
    }
    Ok(Threshold {
        delta: best_delta,
        tuned_metric: metric,
        tuned_on: tuned_on.to_string(),
        achieved: best_value,
    })
}

/// Recover the answer surface form from the passage. `span` indexes the
/// window's offset map (passage-token coordinates).
pub fn extract_answer_text(
    qid: &str,
    span: (usize, usize),
    offset_map: &[(usize, usize)],
    passage: &str,
) -> Result<String> {
    let (k, l) = span;
    if k > l || l >= offset_map.len() {
        return Err(Error::Extraction {
            qid: qid.to_string(),
            reason: format!(
                "span ({k}, {l}) outside mapped region of {} tokens",
                offset_map.len()
            ),
        });
    }
    Ok(char_slice(passage, offset_map[k].0, offset_map[l].1))
}

/// `qid -> answer string`, empty string for null. Matches the input format
/// of the reference evaluator.
pub fn write_predictions(path: impl AsRef<Path>, preds: &BTreeMap<String, String>) -> Result<()> {
    write_json(path, preds)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    read_json(path)
}

/// `qid -> v`, the per-question no-answer odds.
pub fn write_null_odds(path: impl AsRef<Path>, odds: &BTreeMap<String, f64>) -> Result<()> {
    write_json(path, odds)
}

pub fn read_null_odds(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    read_json(path)
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("map serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
#[path = "decision_tests.rs"]
mod tests;
