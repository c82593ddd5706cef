//! SQuAD2.0-format JSON ingestion.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

use super::char_slice;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldAnswer {
    pub text: String,
    pub char_start: usize,
}

/// One (passage, question) record. Unanswerable questions carry an empty
/// gold set; answerable gold texts match the passage substring at their
/// character offset.
#[derive(Debug, Clone)]
pub struct SquadExample {
    pub qid: String,
    pub passage: String,
    pub question: String,
    pub gold_answers: Vec<GoldAnswer>,
    pub is_impossible: bool,
}

/// Load a SQuAD2.0 JSON file
/// (`{data: [{paragraphs: [{context, qas: [...]}]}]}`), one example per qa
/// entry, in file order, with answer character offsets preserved verbatim.
pub fn load_squad(path: impl AsRef<Path>) -> Result<Vec<SquadExample>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_squad(&root)
}

pub(crate) fn parse_squad(root: &Value) -> Result<Vec<SquadExample>> {
    let missing = |field: &str, qid: Option<&str>| Error::Schema {
        field: field.to_string(),
        qid: qid.map(str::to_string),
    };

    let data = root
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("data", None))?;

    let mut examples = Vec::new();
    for article in data {
        let paragraphs = article
            .get("paragraphs")
            .and_then(Value::as_array)
            .ok_or_else(|| missing("paragraphs", None))?;
        for para in paragraphs {
            let context = para
                .get("context")
                .and_then(Value::as_str)
                .ok_or_else(|| missing("context", None))?;
            let qas = para
                .get("qas")
                .and_then(Value::as_array)
                .ok_or_else(|| missing("qas", None))?;
            for qa in qas {
                let qid = qa
                    .get("id")
                    .and_then(Value::as_str)
                    .ok_or_else(|| missing("id", None))?;
                let question = qa
                    .get("question")
                    .and_then(Value::as_str)
                    .ok_or_else(|| missing("question", Some(qid)))?;
                let is_impossible = match qa.get("is_impossible") {
                    None => false,
                    Some(v) => v
                        .as_bool()
                        .ok_or_else(|| missing("is_impossible", Some(qid)))?,
                };
                let answers = qa
                    .get("answers")
                    .and_then(Value::as_array)
                    .ok_or_else(|| missing("answers", Some(qid)))?;
                let mut gold_answers = Vec::with_capacity(answers.len());
                for ans in answers {
                    let text = ans
                        .get("text")
                        .and_then(Value::as_str)
                        .ok_or_else(|| missing("answers.text", Some(qid)))?;
                    let char_start = ans
                        .get("answer_start")
                        .and_then(Value::as_u64)
                        .ok_or_else(|| missing("answers.answer_start", Some(qid)))?
                        as usize;
                    if !is_impossible {
                        let found =
                            char_slice(context, char_start, char_start + text.chars().count());
                        if found != text {
                            return Err(Error::Schema {
                                field: format!(
                                    "answers.answer_start (text `{text}` not at offset {char_start})"
                                ),
                                qid: Some(qid.to_string()),
                            });
                        }
                    }
                    gold_answers.push(GoldAnswer {
                        text: text.to_string(),
                        char_start,
                    });
                }
                examples.push(SquadExample {
                    qid: qid.to_string(),
                    passage: context.to_string(),
                    question: question.to_string(),
                    gold_answers,
                    is_impossible,
                });
            }
        }
    }
    Ok(examples)
}
