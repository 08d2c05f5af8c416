//! Readers for the public dataset formats.
//!
//! | source     | layout                                                              |
//! |------------|---------------------------------------------------------------------|
//! | `usmle`    | JSONL `{question, options: {A: ..} or [{key, value}], answer_idx}`   |
//! | `medmcqa`  | JSONL `{id, question, opa..opd, cop}`, `cop` zero-based              |
//! | `pubmedqa` | JSON `{pmid: {QUESTION, CONTEXTS, final_decision}}` or JSONL         |
//! | `careqa`   | JSONL `{id, question, op1..op4, cop}`, `cop` one-based               |
//! | other      | JSONL of already standardized question records                      |

use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use synapseroute_core::domain::{QuestionRecord, Source};
use synapseroute_core::standardize::{standardize_record, RawGold, RawQuestion, StandardizeError};

use crate::jsonl::{read_json, read_jsonl, FileError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("record {index}: {message}")]
    Shape { index: usize, message: String },
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub records: Vec<QuestionRecord>,
    pub rejected: Vec<StandardizeError>,
}

fn text(obj: &Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn shape(index: usize, message: impl Into<String>) -> IngestError {
    IngestError::Shape { index, message: message.into() }
}

fn record_id(obj: &Map<String, Value>, source: Source, index: usize) -> String {
    ["id", "unique_id", "pubid", "qid"]
        .iter()
        .find_map(|k| text(obj, k))
        .unwrap_or_else(|| format!("{}-{index:06}", source.as_str()))
}

fn usmle(obj: &Map<String, Value>, index: usize) -> Result<RawQuestion, IngestError> {
    let stem = text(obj, "question").ok_or_else(|| shape(index, "missing `question`"))?;
    let candidates = match obj.get("options") {
        Some(Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_owned())).collect(),
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|it| Some((it.get("key")?.as_str()?.to_owned(), it.get("value")?.as_str()?.to_owned())))
            .collect(),
        _ => return Err(shape(index, "missing `options`")),
    };
    let gold = text(obj, "answer_idx").map(RawGold::Key).or_else(|| text(obj, "answer").map(RawGold::Text));
    Ok(RawQuestion { id: record_id(obj, Source::Usmle, index), source: Source::Usmle, stem, candidates, gold })
}

fn lettered(
    obj: &Map<String, Value>,
    index: usize,
    source: Source,
    keys: &[&str],
    one_based: bool,
) -> Result<RawQuestion, IngestError> {
    let stem = text(obj, "question").ok_or_else(|| shape(index, "missing `question`"))?;
    let candidates: Vec<(String, String)> = keys
        .iter()
        .filter_map(|k| text(obj, k).filter(|t| !t.trim().is_empty()))
        .enumerate()
        .map(|(i, t)| (char::from(b'A' + i as u8).to_string(), t))
        .collect();
    let gold = obj.get("cop").and_then(Value::as_u64).and_then(|c| {
        let c = c as usize;
        if one_based {
            c.checked_sub(1)
        } else {
            Some(c)
        }
        .map(RawGold::Index)
    });
    Ok(RawQuestion { id: record_id(obj, source, index), source, stem, candidates, gold })
}

fn pubmedqa(id: String, obj: &Map<String, Value>, index: usize) -> Result<RawQuestion, IngestError> {
    let question = text(obj, "QUESTION")
        .or_else(|| text(obj, "question"))
        .ok_or_else(|| shape(index, "missing `QUESTION`"))?;
    let contexts = obj
        .get("CONTEXTS")
        .or_else(|| obj.get("context").and_then(|c| c.get("contexts")))
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect::<Vec<_>>().join(" "))
        .unwrap_or_default();
    let stem = if contexts.is_empty() { question } else { format!("Context: {contexts}\nQuestion: {question}") };
    let gold = text(obj, "final_decision").map(RawGold::Text);
    Ok(RawQuestion { id, source: Source::Pubmedqa, stem, candidates: Vec::new(), gold })
}

fn raw_records(source: Source, path: &Path) -> Result<Vec<RawQuestion>, IngestError> {
    if source == Source::Pubmedqa {
        // The original release is one JSON object keyed by PMID.
        if let Ok(Value::Object(map)) = read_json::<Value>(path) {
            if map.values().all(|v| v.get("QUESTION").is_some()) {
                return map
                    .iter()
                    .enumerate()
                    .map(|(i, (pmid, v))| pubmedqa(pmid.clone(), v.as_object().unwrap(), i))
                    .collect();
            }
        }
    }
    let rows: Vec<Value> = read_jsonl(path)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let obj = row.as_object().ok_or_else(|| shape(i, "not a JSON object"))?;
            match source {
                Source::Usmle => usmle(obj, i),
                Source::Medmcqa => lettered(obj, i, source, &["opa", "opb", "opc", "opd", "ope"], false),
                Source::Careqa => lettered(obj, i, source, &["op1", "op2", "op3", "op4", "op5"], true),
                Source::Pubmedqa => pubmedqa(record_id(obj, source, i), obj, i),
                Source::Synthetic => {
                    let q: QuestionRecord =
                        serde_json::from_value(row.clone()).map_err(|e| shape(i, e.to_string()))?;
                    Ok(RawQuestion::from(q))
                }
            }
        })
        .collect()
}

/// Reads `path` in the layout of `source` and standardizes every record.
/// Malformed records are collected rather than aborting the run.
pub fn ingest_file(source: Source, path: &Path) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    for raw in raw_records(source, path)? {
        match standardize_record(raw) {
            Ok(q) => report.records.push(q),
            Err(e) => report.rejected.push(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use synapseroute_core::domain::OptionLetter;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn pubmedqa_original_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "ori.json",
            r#"{"123": {"QUESTION": "Do statins help?", "CONTEXTS": ["Trial data."], "final_decision": "maybe"},
                "456": {"QUESTION": "Is it safe?", "CONTEXTS": [], "final_decision": "yes"}}"#,
        );
        let r = ingest_file(Source::Pubmedqa, &p).unwrap();
        assert_eq!(r.records.len(), 2);
        let q = &r.records[0];
        assert_eq!(q.id, "123");
        assert_eq!(q.gold, OptionLetter::C);
        assert_eq!(q.options[&OptionLetter::A], "yes");
        assert!(q.stem.contains("Trial data."));
    }

    #[test]
    fn medmcqa_and_careqa_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(&dir, "m.jsonl", r#"{"id":"m1","question":"Q?","opa":"a","opb":"b","opc":"c","opd":"d","cop":0}"#);
        assert_eq!(ingest_file(Source::Medmcqa, &m).unwrap().records[0].gold, OptionLetter::A);
        let c = write(&dir, "c.jsonl", r#"{"unique_id":7,"question":"Q?","op1":"a","op2":"b","op3":"c","op4":"d","cop":4}"#);
        let r = ingest_file(Source::Careqa, &c).unwrap();
        assert_eq!(r.records[0].gold, OptionLetter::D);
        assert_eq!(r.records[0].id, "7");
    }

    #[test]
    fn usmle_lowercase_keys_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "u.jsonl",
            concat!(
                r#"{"question":"Q1","options":{"a":"x","b":"y","c":"z","d":"w"},"answer_idx":"c"}"#,
                "\n",
                r#"{"question":"Q2","options":{"A":"1","B":"2","C":"3","D":"4","E":"5","F":"6"},"answer_idx":"A"}"#,
                "\n",
                r#"{"question":"Q3","options":[{"key":"A","value":"p"},{"key":"B","value":"q"}],"answer_idx":"B"}"#,
            ),
        );
        let r = ingest_file(Source::Usmle, &p).unwrap();
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.records[0].gold, OptionLetter::C);
        assert_eq!(r.records[0].id, "usmle-000000");
        assert_eq!(r.records[1].gold, OptionLetter::B);
    }
}
