//! Seeded synthetic reading-comprehension data.
//!
//! Passages state simple facts ("Alice carried the lantern near the museum."),
//! answerable questions ask about a (subject, verb) pair that occurs in the
//! passage, and unanswerable ones ask about a pair that does not. Small
//! enough to train the desk-scale readers from scratch, structured enough
//! that answerability is learnable rather than memorized.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::data::{GoldAnswer, SquadExample};
use crate::error::{Error, Result};

const SUBJECTS: [&str; 8] = [
    "Alice", "Ben", "Carol", "David", "Erin", "Frank", "Grace", "Henry",
];
const VERBS: [&str; 8] = [
    "carried", "painted", "repaired", "borrowed", "found", "sold", "cleaned", "weighed",
];
const OBJECTS: [&str; 12] = [
    "lantern", "violin", "basket", "ladder", "candle", "mirror", "wagon", "kettle", "compass",
    "anchor", "barrel", "whistle",
];
const PLACES: [&str; 8] = [
    "museum", "garden", "harbor", "library", "market", "station", "bakery", "tower",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_examples: usize,
    pub unanswerable_fraction: f64,
    pub seed: u64,
    pub id_prefix: String,
}

impl SynthConfig {
    pub fn new(n_examples: usize, seed: u64, id_prefix: &str) -> SynthConfig {
        SynthConfig {
            n_examples,
            unanswerable_fraction: 0.5,
            seed,
            id_prefix: id_prefix.to_string(),
        }
    }
}

/// Generate a deterministic synthetic example set; the first
/// `unanswerable_fraction` rounds down and alternates so every prefix stays
/// roughly balanced.
pub fn generate(config: &SynthConfig) -> Vec<SquadExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.n_examples);
    let n_unanswerable = (config.n_examples as f64 * config.unanswerable_fraction) as usize;
    for i in 0..config.n_examples {
        // interleave the classes deterministically
        let impossible = i % 2 == 0 && i / 2 < n_unanswerable
            || i % 2 == 1 && config.n_examples - n_unanswerable <= i / 2;
        out.push(one_example(
            &format!("{}-{i:04}", config.id_prefix),
            impossible,
            &mut rng,
        ));
    }
    out
}

fn one_example(qid: &str, impossible: bool, rng: &mut ChaCha8Rng) -> SquadExample {
    // two facts with distinct fillers
    let subjects: Vec<&str> = pick_distinct(&SUBJECTS, 3, rng);
    let verbs: Vec<&str> = pick_distinct(&VERBS, 3, rng);
    let objects: Vec<&str> = pick_distinct(&OBJECTS, 2, rng);
    let places: Vec<&str> = pick_distinct(&PLACES, 2, rng);

    let mut passage = String::new();
    let mut answer_starts = [0usize; 2];
    let mut answer_texts = [String::new(), String::new()];
    for k in 0..2 {
        if k > 0 {
            passage.push(' ');
        }
        passage.push_str(subjects[k]);
        passage.push(' ');
        passage.push_str(verbs[k]);
        passage.push(' ');
        answer_starts[k] = passage.chars().count();
        answer_texts[k] = format!("the {}", objects[k]);
        passage.push_str(&answer_texts[k]);
        passage.push_str(" near the ");
        passage.push_str(places[k]);
        passage.push('.');
    }

    if impossible {
        // ask about a (subject, verb) pair the passage never states
        let question = format!(
            "what did {} {} near the {} ?",
            subjects[2].to_lowercase(),
            verbs[2],
            places[rng.gen_range(0..2)]
        );
        SquadExample {
            qid: qid.to_string(),
            passage,
            question,
            gold_answers: Vec::new(),
            is_impossible: true,
        }
    } else {
        let k = rng.gen_range(0..2);
        let question = format!(
            "what did {} {} near the {} ?",
            subjects[k].to_lowercase(),
            verbs[k],
            places[k]
        );
        SquadExample {
            qid: qid.to_string(),
            passage,
            question,
            gold_answers: vec![GoldAnswer {
                text: answer_texts[k].clone(),
                char_start: answer_starts[k],
            }],
            is_impossible: false,
        }
    }
}

fn pick_distinct<'a>(pool: &[&'a str], n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a str> {
    let mut items: Vec<&str> = pool.to_vec();
    items.shuffle(rng);
    items.truncate(n);
    items
}

/// Write examples as a SQuAD2.0-format JSON file that `load_squad` reads
/// back verbatim.
pub fn write_squad_json(
    path: impl AsRef<Path>,
    title: &str,
    examples: &[SquadExample],
) -> Result<()> {
    let paragraphs: Vec<serde_json::Value> = examples
        .iter()
        .map(|ex| {
            json!({
                "context": ex.passage,
                "qas": [{
                    "id": ex.qid,
                    "question": ex.question,
                    "is_impossible": ex.is_impossible,
                    "answers": ex.gold_answers.iter().map(|g| json!({
                        "text": g.text,
                        "answer_start": g.char_start,
                    })).collect::<Vec<_>>(),
                }]
            })
        })
        .collect();
    let doc = json!({"version": "v2.0", "data": [{"title": title, "paragraphs": paragraphs}]});
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serializes"))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// The 12-question metric-compatibility fixture: normalization, article and
/// punctuation handling, multi-gold max, token-multiset F1, and both null
/// conventions. Returns the dataset and the prediction map it is scored with.
pub fn metric_fixture() -> (Vec<SquadExample>, BTreeMap<String, String>) {
    let mut dataset = Vec::new();
    let mut predictions = BTreeMap::new();
    let mut push = |qid: &str, golds: &[&str], impossible: bool, pred: &str| {
        let mut passage = String::from("Context sentence mentioning ");
        let mut gold_answers = Vec::new();
        for g in golds {
            let at = passage.chars().count();
            passage.push_str(g);
            passage.push_str(" then ");
            gold_answers.push(GoldAnswer {
                text: g.to_string(),
                char_start: at,
            });
        }
        passage.push_str("the end.");
        dataset.push(SquadExample {
            qid: qid.to_string(),
            passage,
            question: format!("fixture question {qid} ?"),
            gold_answers,
            is_impossible: impossible,
        });
        predictions.insert(qid.to_string(), pred.to_string());
    };

    push("q01", &["the Great Lakes Megalopolis"], false, "great lakes megalopolis");
    push(
        "q02",
        &["mechanical application of mathematical steps"],
        false,
        "mechanical application",
    );
    push("q03", &[], true, "");
    push("q04", &[], true, "algorithm");
    push("q05", &["Riverside-San Bernardino"], false, "riversidesan bernardino,");
    push("q06", &["42 degrees"], false, "42");
    push("q07", &["an algorithm"], false, "algorithm");
    push("q08", &[], true, "the");
    push("q09", &["blue", "azure"], false, "azure");
    push("q10", &["New York City"], false, "York");
    push("q11", &["data base data"], false, "data data");
    push("q12", &["Confucius"], false, "Confucius");

    (dataset, predictions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_features, load_squad, Vocab};

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let cfg = SynthConfig::new(64, 7, "train");
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.len(), 64);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.qid, y.qid);
            assert_eq!(x.passage, y.passage);
            assert_eq!(x.question, y.question);
            assert_eq!(x.is_impossible, y.is_impossible);
        }
        let n_imp = a.iter().filter(|e| e.is_impossible).count();
        assert_eq!(n_imp, 32);
    }

    #[test]
    fn answer_offsets_are_verbatim_substrings() {
        for ex in generate(&SynthConfig::new(40, 3, "x")) {
            for g in &ex.gold_answers {
                let found = crate::data::char_slice(
                    &ex.passage,
                    g.char_start,
                    g.char_start + g.text.chars().count(),
                );
                assert_eq!(found, g.text, "qid {}", ex.qid);
            }
        }
    }

    #[test]
    fn written_json_round_trips_through_the_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.json");
        let examples = generate(&SynthConfig::new(12, 11, "rt"));
        write_squad_json(&path, "synthetic", &examples).unwrap();
        let loaded = load_squad(&path).unwrap();
        assert_eq!(loaded.len(), examples.len());
        for (a, b) in examples.iter().zip(&loaded) {
            assert_eq!(a.qid, b.qid);
            assert_eq!(a.passage, b.passage);
            assert_eq!(a.is_impossible, b.is_impossible);
            assert_eq!(a.gold_answers.len(), b.gold_answers.len());
        }
    }

    #[test]
    fn synthetic_examples_featurize_in_one_window() {
        let examples = generate(&SynthConfig::new(16, 5, "w"));
        let texts: Vec<String> = examples
            .iter()
            .flat_map(|e| [e.passage.clone(), e.question.clone()])
            .collect();
        let vocab = Vocab::build(texts.iter().map(String::as_str), 150).unwrap();
        for ex in &examples {
            let feats = build_features(ex, &vocab, 64, 8).unwrap();
            assert_eq!(feats.len(), 1, "qid {} needs windowing", ex.qid);
            if !ex.is_impossible {
                assert_eq!(feats[0].ans_label, 0, "gold span must be inside the window");
            }
        }
    }

    #[test]
    fn metric_fixture_round_trips_as_squad_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.json");
        let (dataset, _) = metric_fixture();
        write_squad_json(&path, "fixture", &dataset).unwrap();
        let loaded = load_squad(&path).unwrap();
        assert_eq!(loaded.len(), 12);
    }
}
