//! Upstream benchmark adapters. Each pins the column layout it expects and
//! fails on any other header rather than guessing.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{sha8, DataError};
use crate::domain::{EvaluationRecord, FaithfulnessLabel, Granularity};

/// Benchmark CSV: one row per (document, claim) with a 0/1 support label.
pub const AGGREFACT_COLUMNS: [&str; 4] = ["dataset", "doc", "claim", "label"];
/// Per-sentence annotations; `sent_idx` is 0-based, `sent_label` is yes/no.
pub const TOFUEVAL_ANSWER_COLUMNS: [&str; 6] =
    ["doc_id", "topic", "model_name", "sent_idx", "summary_sentence", "sent_label"];
pub const TOFUEVAL_DOCUMENT_COLUMNS: [&str; 2] = ["doc_id", "document"];

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    let file = std::fs::File::open(path).map_err(DataError::io(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

/// Column positions of `required` in the header; a missing column is a schema error.
fn column_index(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    required: &[&str],
) -> Result<HashMap<String, usize>, DataError> {
    let headers = reader.headers().map_err(|e| DataError::schema(path, 1, e.to_string()))?.clone();
    let mut index = HashMap::new();
    for col in required {
        let pos = headers
            .iter()
            .position(|h| h.trim() == *col)
            .ok_or_else(|| DataError::schema(path, 1, format!("missing column {col:?}; expected {required:?}")))?;
        index.insert(col.to_string(), pos);
    }
    Ok(index)
}

/// Iterates data rows as (1-based file line, field lookup).
fn rows<'a>(
    path: &'a Path,
    reader: &'a mut csv::Reader<std::fs::File>,
    index: &'a HashMap<String, usize>,
) -> impl Iterator<Item = Result<(usize, BTreeMap<String, String>), DataError>> + 'a {
    reader.records().enumerate().map(move |(i, rec)| {
        let line = i + 2;
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(line);
            DataError::schema(path, line, e.to_string())
        })?;
        let fields = index
            .iter()
            .map(|(k, &pos)| (k.clone(), rec.get(pos).unwrap_or("").to_string()))
            .collect::<BTreeMap<_, _>>();
        Ok((line, fields))
    })
}

fn require<'a>(
    path: &Path,
    line: usize,
    fields: &'a BTreeMap<String, String>,
    col: &str,
) -> Result<&'a str, DataError> {
    let v = fields[col].trim();
    if v.is_empty() {
        return Err(DataError::schema(path, line, format!("empty {col}")));
    }
    Ok(v)
}

fn id_part(s: &str) -> String {
    s.trim().replace(['/', ':', ' '], "_")
}

pub(super) fn read_aggrefact(
    path: &Path,
    source_name: &str,
    dataset: &str,
) -> Result<Vec<EvaluationRecord>, DataError> {
    let mut reader = open_csv(path)?;
    let index = column_index(path, &mut reader, &AGGREFACT_COLUMNS)?;
    let mut out = Vec::new();
    for row in rows(path, &mut reader, &index) {
        let (line, f) = row?;
        if f["dataset"].trim() != source_name {
            continue;
        }
        let label = match f["label"].trim() {
            "1" | "1.0" => FaithfulnessLabel::Faithful,
            "0" | "0.0" => FaithfulnessLabel::Unfaithful,
            other => return Err(DataError::schema(path, line, format!("label {other:?} is not 0 or 1"))),
        };
        let mut r = EvaluationRecord::new(
            format!("{dataset}:{:05}", out.len()),
            require(path, line, &f, "doc")?,
            require(path, line, &f, "claim")?,
        );
        r.dataset = dataset.to_string();
        r.gold_label = Some(label);
        out.push(r);
    }
    Ok(out)
}

struct Sentence {
    idx: u32,
    text: String,
    label: FaithfulnessLabel,
}

pub(super) fn read_tofueval(dir: &Path, dataset: &str) -> Result<Vec<EvaluationRecord>, DataError> {
    let doc_path = dir.join("documents.csv");
    let mut reader = open_csv(&doc_path)?;
    let index = column_index(&doc_path, &mut reader, &TOFUEVAL_DOCUMENT_COLUMNS)?;
    let mut documents = HashMap::new();
    for row in rows(&doc_path, &mut reader, &index) {
        let (line, f) = row?;
        let id = require(&doc_path, line, &f, "doc_id")?.to_string();
        let text = require(&doc_path, line, &f, "document")?.to_string();
        if documents.insert(id.clone(), text).is_some() {
            return Err(DataError::schema(&doc_path, line, format!("duplicate doc_id {id}")));
        }
    }

    let ans_path = dir.join("answers.csv");
    let mut reader = open_csv(&ans_path)?;
    let index = column_index(&ans_path, &mut reader, &TOFUEVAL_ANSWER_COLUMNS)?;
    // (doc_id, topic, model) → sentences, in first-appearance order.
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: HashMap<(String, String, String), Vec<Sentence>> = HashMap::new();
    for row in rows(&ans_path, &mut reader, &index) {
        let (line, f) = row?;
        let doc_id = require(&ans_path, line, &f, "doc_id")?.to_string();
        if !documents.contains_key(&doc_id) {
            return Err(DataError::schema(&ans_path, line, format!("doc_id {doc_id} not in documents.csv")));
        }
        let idx: u32 = require(&ans_path, line, &f, "sent_idx")?.parse().map_err(|_| {
            DataError::schema(&ans_path, line, format!("sent_idx {:?} is not a non-negative integer", f["sent_idx"]))
        })?;
        let label = match f["sent_label"].trim().to_ascii_lowercase().as_str() {
            "yes" => FaithfulnessLabel::Faithful,
            "no" => FaithfulnessLabel::Unfaithful,
            other => return Err(DataError::schema(&ans_path, line, format!("sent_label {other:?} is not yes/no"))),
        };
        let key = (doc_id, f["topic"].trim().to_string(), require(&ans_path, line, &f, "model_name")?.to_string());
        let text = require(&ans_path, line, &f, "summary_sentence")?.to_string();
        let group = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Vec::new()
        });
        if group.iter().any(|s| s.idx == idx) {
            return Err(DataError::schema(&ans_path, line, format!("duplicate sentence {idx} for {key:?}")));
        }
        group.push(Sentence { idx, text, label });
    }

    let mut sentences = Vec::new();
    let mut summaries = Vec::new();
    for key in order {
        let mut group = groups.remove(&key).expect("group exists");
        group.sort_by_key(|s| s.idx);
        let (doc_id, topic, model) = &key;
        let document = &documents[doc_id];
        let base = format!("{dataset}:{}:{}:{}", id_part(doc_id), sha8(topic), id_part(model));
        for s in &group {
            let mut r = EvaluationRecord::new(format!("{base}:s{}", s.idx), document.clone(), s.text.clone());
            r.dataset = dataset.to_string();
            r.granularity = Granularity::Sentence;
            r.sentence_index = Some(s.idx);
            r.gold_label = Some(s.label);
            sentences.push(r);
        }
        let label = if group.iter().any(|s| s.label == FaithfulnessLabel::Unfaithful) {
            FaithfulnessLabel::Unfaithful
        } else {
            FaithfulnessLabel::Faithful
        };
        let text = group.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        let mut r = EvaluationRecord::new(base, document.clone(), text);
        r.dataset = dataset.to_string();
        r.gold_label = Some(label);
        summaries.push(r);
    }
    sentences.extend(summaries);
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::super::{ingest, Adapter, DataError};
    use crate::domain::{FaithfulnessLabel, Granularity};
    use std::fs;

    #[test]
    fn tofueval_groups_sentences_into_summaries() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("documents.csv"), "doc_id,document\nd1,\"Long, quoted document.\"\nd2,Other doc\n")
            .unwrap();
        fs::write(
            dir.path().join("answers.csv"),
            "doc_id,topic,model_name,sent_idx,summary_sentence,sent_label\n\
             d1,budget,m1,1,Second.,no\n\
             d1,budget,m1,0,First.,yes\n\
             d2,parks,m1,0,Only.,yes\n",
        )
        .unwrap();
        let recs = ingest(dir.path(), Adapter::TofuEvalMeetingBank).unwrap();
        let sent: Vec<_> = recs.iter().filter(|r| r.granularity == Granularity::Sentence).collect();
        let full: Vec<_> = recs.iter().filter(|r| r.granularity == Granularity::FullSummary).collect();
        assert_eq!((sent.len(), full.len()), (3, 2));
        assert_eq!(full[0].summary, "First. Second.");
        assert_eq!(full[0].gold_label, Some(FaithfulnessLabel::Unfaithful));
        assert_eq!(full[1].gold_label, Some(FaithfulnessLabel::Faithful));
        assert_eq!(full[0].document, "Long, quoted document.");
        assert!(sent[0].record_id.ends_with(":s0"));
        assert!(recs.iter().all(|r| r.dataset == "tofueval_meetingbank" && r.validate().is_ok()));
    }

    #[test]
    fn tofueval_rejects_bad_labels_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("documents.csv"), "doc_id,document\nd1,Doc\n").unwrap();
        fs::write(
            dir.path().join("answers.csv"),
            "doc_id,topic,model_name,sent_idx,summary_sentence,sent_label\nd1,t,m,0,S.,yes\nd1,t,m,1,S2.,maybe\n",
        )
        .unwrap();
        match ingest(dir.path(), Adapter::TofuEvalMediaSum) {
            Err(DataError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn aggrefact_filters_by_dataset_and_pins_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("aggrefact.csv");
        fs::write(
            &p,
            "dataset,doc,claim,label\nAggreFact-CNN,D1,C1,1\nAggreFact-XSum,D2,C2,0\nAggreFact-CNN,D3,C3,0\n",
        )
        .unwrap();
        let cnn = ingest(&p, Adapter::AggreFactCnn).unwrap();
        assert_eq!(cnn.len(), 2);
        assert_eq!(cnn[1].gold_label, Some(FaithfulnessLabel::Unfaithful));
        assert_eq!(ingest(&p, Adapter::AggreFactXsum).unwrap().len(), 1);
        fs::write(&p, "dataset,document,claim,label\n").unwrap();
        assert!(matches!(ingest(&p, Adapter::AggreFactCnn), Err(DataError::Schema { line: 1, .. })));
    }
}
