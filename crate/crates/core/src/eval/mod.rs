//! SQuAD-style scoring: answer normalization, EM/F1 with HasAns/NoAns
//! breakdown, unanswerable-detection metrics, and McNemar's paired
//! significance test.
//!
//! Normalization and scoring mirror the reference SQuAD2.0 evaluator
//! (lowercase, ASCII punctuation strip, whole-token article removal,
//! whitespace collapse; token-level F1 over multisets; unanswerable gold is
//! the empty string), so `predictions.json` scores identically here and
//! there.

mod mcnemar;

pub use mcnemar::{mcnemar_test, McNemarMethod, McNemarResult};

use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::SquadExample;
use crate::error::{Error, Result};

static ARTICLES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("article regex compiles"));

/// Lowercase, strip ASCII punctuation, drop whole-token articles, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punc: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punc, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Gold set the scorer compares against: answers whose normalization is
/// nonempty, or the single empty string when none qualify (the unanswerable
/// convention).
fn effective_golds(gold_answers: &[String]) -> Vec<String> {
    let filtered: Vec<String> = gold_answers
        .iter()
        .filter(|g| !normalize_answer(g).is_empty())
        .cloned()
        .collect();
    if filtered.is_empty() {
        vec![String::new()]
    } else {
        filtered
    }
}

/// Exact match after normalization, max over the gold set. For unanswerable
/// questions the only correct prediction normalizes to the empty string.
pub fn em_score(prediction: &str, gold_answers: &[String], is_impossible: bool) -> f64 {
    let golds = if is_impossible {
        vec![String::new()]
    } else {
        effective_golds(gold_answers)
    };
    let pred = normalize_answer(prediction);
    golds
        .iter()
        .map(|g| f64::from(normalize_answer(g) == pred))
        .fold(0.0, f64::max)
}

/// Token-level F1 over normalized multisets, max over the gold set. When
/// either side has no tokens, F1 is 1 only if both are empty.
pub fn f1_score(prediction: &str, gold_answers: &[String], is_impossible: bool) -> f64 {
    let golds = if is_impossible {
        vec![String::new()]
    } else {
        effective_golds(gold_answers)
    };
    let pred_toks = tokens(prediction);
    golds
        .iter()
        .map(|g| pair_f1(&tokens(g), &pred_toks))
        .fold(0.0, f64::max)
}

fn pair_f1(gold_toks: &[String], pred_toks: &[String]) -> f64 {
    if gold_toks.is_empty() || pred_toks.is_empty() {
        return f64::from(gold_toks == pred_toks);
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in gold_toks {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut num_same = 0i64;
    for t in pred_toks {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                num_same += 1;
            }
        }
    }
    if num_same == 0 {
        return 0.0;
    }
    let precision = num_same as f64 / pred_toks.len() as f64;
    let recall = num_same as f64 / gold_toks.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// All/HasAns/NoAns EM and F1 as percentages, with split counts and the
/// threshold that produced the predictions when known.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_em: f64,
    pub overall_f1: f64,
    pub hasans_em: f64,
    pub hasans_f1: f64,
    pub noans_em: f64,
    pub noans_f1: f64,
    pub n_total: usize,
    pub n_hasans: usize,
    pub n_noans: usize,
    pub delta: Option<f64>,
    /// Prediction keys that matched no dataset question (scored nowhere).
    pub unknown_qids: Vec<String>,
}

/// Score a prediction map against the dataset. Every question must have a
/// prediction; prediction keys with no matching question are collected as
/// warnings.
pub fn evaluate(
    predictions: &BTreeMap<String, String>,
    dataset: &[SquadExample],
    delta: Option<f64>,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Evaluation("empty dataset".into()));
    }
    let mut seen: BTreeMap<&str, bool> = predictions.keys().map(|k| (k.as_str(), false)).collect();
    let (mut em_has, mut f1_has, mut n_has) = (0.0, 0.0, 0usize);
    let (mut em_no, mut f1_no, mut n_no) = (0.0, 0.0, 0usize);
    for ex in dataset {
        let pred = predictions.get(&ex.qid).ok_or_else(|| {
            Error::Evaluation(format!("missing prediction for qid {}", ex.qid))
        })?;
        if let Some(s) = seen.get_mut(ex.qid.as_str()) {
            *s = true;
        }
        let golds: Vec<String> = ex.gold_answers.iter().map(|g| g.text.clone()).collect();
        let em = em_score(pred, &golds, ex.is_impossible);
        let f1 = f1_score(pred, &golds, ex.is_impossible);
        if ex.is_impossible {
            em_no += em;
            f1_no += f1;
            n_no += 1;
        } else {
            em_has += em;
            f1_has += f1;
            n_has += 1;
        }
    }
    let n_total = n_has + n_no;
    let pct = |sum: f64, n: usize| if n == 0 { 0.0 } else { 100.0 * sum / n as f64 };
    Ok(EvalReport {
        overall_em: pct(em_has + em_no, n_total),
        overall_f1: pct(f1_has + f1_no, n_total),
        hasans_em: pct(em_has, n_has),
        hasans_f1: pct(f1_has, n_has),
        noans_em: pct(em_no, n_no),
        noans_f1: pct(f1_no, n_no),
        n_total,
        n_hasans: n_has,
        n_noans: n_no,
        delta,
        unknown_qids: seen
            .into_iter()
            .filter(|(_, used)| !used)
            .map(|(k, _)| k.to_string())
            .collect(),
    })
}

/// Per-question EM vector in dataset order, for significance testing.
pub fn per_question_em(
    predictions: &BTreeMap<String, String>,
    dataset: &[SquadExample],
) -> Result<Vec<(String, u8)>> {
    let mut out = Vec::with_capacity(dataset.len());
    for ex in dataset {
        let pred = predictions.get(&ex.qid).ok_or_else(|| {
            Error::Alignment(format!("missing prediction for qid {}", ex.qid))
        })?;
        let golds: Vec<String> = ex.gold_answers.iter().map(|g| g.text.clone()).collect();
        let em = em_score(pred, &golds, ex.is_impossible);
        out.push((ex.qid.clone(), em as u8));
    }
    Ok(out)
}

/// Confusion-matrix metrics over the "predicted null" positive class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Set when a ratio had an empty denominator and was reported as 0.
    pub degenerate: bool,
}

/// How well null predictions line up with the unanswerable questions. The
/// positive class is "predicted the null string".
pub fn unanswerable_detection_metrics(
    predictions: &BTreeMap<String, String>,
    dataset: &[SquadExample],
) -> Result<DetectionMetrics> {
    if dataset.is_empty() {
        return Err(Error::Evaluation("empty dataset".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for ex in dataset {
        let pred = predictions.get(&ex.qid).ok_or_else(|| {
            Error::Evaluation(format!("missing prediction for qid {}", ex.qid))
        })?;
        let predicted_null = pred.is_empty();
        match (predicted_null, ex.is_impossible) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (tp + tn) as f64 / dataset.len() as f64;
    Ok(DetectionMetrics {
        precision,
        recall,
        f1,
        accuracy,
        degenerate,
    })
}

/// Aligned plain-text table of evaluation rows:
/// `Model | All EM/F1 | HasAns EM/F1 | NoAns EM/F1`.
pub fn render_report_table(rows: &[(String, EvalReport)]) -> String {
    let name_width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(["Model".len()])
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>7} {:>7}  {:>7} {:>7}  {:>7} {:>7}\n",
        "Model", "All EM", "All F1", "Has EM", "Has F1", "No EM", "No F1"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>7.2} {:>7.2}  {:>7.2} {:>7.2}  {:>7.2} {:>7.2}\n",
            name, r.overall_em, r.overall_f1, r.hasans_em, r.hasans_f1, r.noans_em, r.noans_f1
        ));
    }
    out
}

/// Aligned table of unanswerable-detection rows:
/// `Method | Prec. | Rec. | F1 | Acc.` (percentages).
pub fn render_detection_table(rows: &[(String, DetectionMetrics)]) -> String {
    let name_width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>6} {:>6} {:>6} {:>6}\n",
        "Method", "Prec.", "Rec.", "F1", "Acc."
    ));
    for (name, m) in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>6.2} {:>6.2} {:>6.2} {:>6.2}\n",
            name,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1,
            100.0 * m.accuracy
        ));
    }
    out
}
