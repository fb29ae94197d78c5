//! Dataset ingestion, the canonical JSONL record format, ambiguity-annotation
//! joining and the run log.

mod adapters;
pub mod runlog;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ambiguity::taxonomy::{CoarseCategory, FineType};
use crate::domain::{AmbiguityAnnotation, DomainError, EvaluationRecord, FaithfulnessLabel, Granularity};

pub use adapters::{AGGREFACT_COLUMNS, TOFUEVAL_ANSWER_COLUMNS, TOFUEVAL_DOCUMENT_COLUMNS};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {path} line {line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("duplicate record_id {record_id} in {path}")]
    DuplicateId { path: PathBuf, record_id: String },
    #[error("{} annotation(s) reference unknown records: {}", orphans.len(), orphans.join(", "))]
    KeyMismatch { orphans: Vec<String> },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl DataError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
        move |source| DataError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn schema(path: &Path, line: usize, message: impl Into<String>) -> DataError {
        DataError::Schema { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// First 8 hex digits of the SHA-256 of `s`.
pub fn sha8(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().take(4).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adapter {
    TofuEvalMeetingBank,
    TofuEvalMediaSum,
    AggreFactCnn,
    AggreFactXsum,
    Canonical,
}

impl Adapter {
    /// Value written into each record's `dataset` field.
    pub fn dataset_name(self) -> &'static str {
        match self {
            Adapter::TofuEvalMeetingBank => "tofueval_meetingbank",
            Adapter::TofuEvalMediaSum => "tofueval_mediasum",
            Adapter::AggreFactCnn => "aggrefact_cnn",
            Adapter::AggreFactXsum => "aggrefact_xsum",
            Adapter::Canonical => "canonical",
        }
    }
}

/// Reads `path` with the given adapter.
///
/// * `Canonical`: a JSONL file in the canonical format.
/// * `AggreFact*`: the benchmark CSV; rows are filtered by the `dataset` column.
/// * `TofuEval*`: a directory holding `answers.csv` and `documents.csv`; emits
///   sentence-level records followed by full-summary records.
pub fn ingest(path: &Path, adapter: Adapter) -> Result<Vec<EvaluationRecord>, DataError> {
    let records = match adapter {
        Adapter::Canonical => read_canonical(path)?,
        Adapter::AggreFactCnn => adapters::read_aggrefact(path, "AggreFact-CNN", adapter.dataset_name())?,
        Adapter::AggreFactXsum => adapters::read_aggrefact(path, "AggreFact-XSum", adapter.dataset_name())?,
        Adapter::TofuEvalMeetingBank | Adapter::TofuEvalMediaSum => {
            adapters::read_tofueval(path, adapter.dataset_name())?
        }
    };
    check_unique(path, &records)?;
    Ok(records)
}

fn check_unique(path: &Path, records: &[EvaluationRecord]) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.record_id.as_str()) {
            return Err(DataError::DuplicateId { path: path.to_path_buf(), record_id: r.record_id.clone() });
        }
    }
    Ok(())
}

pub fn read_canonical(path: &Path) -> Result<Vec<EvaluationRecord>, DataError> {
    let text = fs::read_to_string(path).map_err(DataError::io(path))?;
    parse_canonical(path, &text)
}

pub fn parse_canonical(path: &Path, text: &str) -> Result<Vec<EvaluationRecord>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EvaluationRecord =
            serde_json::from_str(line).map_err(|e| DataError::schema(path, i + 1, e.to_string()))?;
        record.validate().map_err(|e| DataError::schema(path, i + 1, e.to_string()))?;
        out.push(record);
    }
    check_unique(path, &out)?;
    Ok(out)
}

pub fn to_canonical_jsonl(records: &[EvaluationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_canonical(path: &Path, records: &[EvaluationRecord]) -> Result<(), DataError> {
    let mut f = fs::File::create(path).map_err(DataError::io(path))?;
    f.write_all(to_canonical_jsonl(records).as_bytes()).map_err(DataError::io(path))
}

/// One line of an ambiguity annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub record_id: String,
    pub is_ambiguous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<CoarseCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<FineType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>, DataError> {
    let text = fs::read_to_string(path).map_err(DataError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row: AnnotationRow =
            serde_json::from_str(line).map_err(|e| DataError::schema(path, i + 1, e.to_string()))?;
        if row.coarse.is_none() {
            row.coarse = row.fine.map(FineType::parent);
        }
        out.push(row);
    }
    Ok(out)
}

/// Attaches annotations to records by id. Any annotation whose id matches no
/// record fails the join with the full orphan list.
pub fn join_ambiguity(
    mut records: Vec<EvaluationRecord>,
    annotations: &[AnnotationRow],
) -> Result<Vec<EvaluationRecord>, DataError> {
    let index: HashMap<&str, usize> = records.iter().enumerate().map(|(i, r)| (r.record_id.as_str(), i)).collect();
    let orphans: Vec<String> =
        annotations.iter().filter(|a| !index.contains_key(a.record_id.as_str())).map(|a| a.record_id.clone()).collect();
    if !orphans.is_empty() {
        return Err(DataError::KeyMismatch { orphans });
    }
    let mut updates = Vec::new();
    for a in annotations {
        let ann =
            AmbiguityAnnotation { is_ambiguous: a.is_ambiguous, coarse: a.coarse, fine: a.fine, note: a.note.clone() };
        ann.validate()?;
        updates.push((index[a.record_id.as_str()], ann));
    }
    for (i, ann) in updates {
        records[i].gold_ambiguity = Some(ann);
    }
    Ok(records)
}

pub fn join_ambiguity_file(records: Vec<EvaluationRecord>, path: &Path) -> Result<Vec<EvaluationRecord>, DataError> {
    join_ambiguity(records, &read_annotations(path)?)
}

/// Counts and class balance of a record set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub labeled: usize,
    pub unfaithful: usize,
}

impl DatasetStats {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a EvaluationRecord>) -> Self {
        let mut s = DatasetStats { records: 0, labeled: 0, unfaithful: 0 };
        for r in records {
            s.records += 1;
            if let Some(l) = r.gold_label {
                s.labeled += 1;
                if l == FaithfulnessLabel::Unfaithful {
                    s.unfaithful += 1;
                }
            }
        }
        s
    }

    pub fn unfaithful_share(&self) -> f64 {
        self.unfaithful as f64 / self.labeled.max(1) as f64
    }
}

pub fn by_granularity(records: &[EvaluationRecord], g: Granularity) -> Vec<EvaluationRecord> {
    records.iter().filter(|r| r.granularity == g).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str) -> EvaluationRecord {
        EvaluationRecord::new(id, "doc", "sum")
    }

    #[test]
    fn canonical_schema_uses_wire_labels() {
        let mut r = rec("a").with_gold(FaithfulnessLabel::Unfaithful);
        r.dataset = "x".into();
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"gold_label\":0"), "{line}");
        let bad = line.replace("\"gold_label\":0", "\"gold_label\":2");
        let err = parse_canonical(Path::new("f.jsonl"), &format!("{line}\n{bad}\n")).unwrap_err();
        assert!(matches!(err, DataError::Schema { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = to_canonical_jsonl(&[rec("a"), rec("a")]);
        assert!(matches!(parse_canonical(Path::new("f"), &text), Err(DataError::DuplicateId { .. })));
    }

    #[test]
    fn join_rules() {
        let recs = vec![rec("a"), rec("b")];
        assert_eq!(join_ambiguity(recs.clone(), &[]).unwrap(), recs);
        let row = |id: &str, amb| AnnotationRow {
            record_id: id.into(),
            is_ambiguous: amb,
            coarse: None,
            fine: None,
            note: None,
        };
        let joined = join_ambiguity(recs.clone(), &[row("a", true)]).unwrap();
        assert!(joined[0].gold_ambiguity.as_ref().unwrap().is_ambiguous);
        assert!(joined[1].gold_ambiguity.is_none());
        match join_ambiguity(recs, &[row("zzz", true), row("a", false)]) {
            Err(DataError::KeyMismatch { orphans }) => assert_eq!(orphans, vec!["zzz".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sha8_is_stable() {
        assert_eq!(sha8("abc"), "ba7816bf");
    }

    fn arb_record() -> impl Strategy<Value = EvaluationRecord> {
        (
            "[a-z0-9]{1,8}",
            "[ -~]{1,30}",
            "[ -~]{1,30}",
            proptest::option::of(0u32..20),
            proptest::option::of(any::<bool>()),
            proptest::option::of(any::<bool>()),
        )
            .prop_filter("non-blank text", |(_, d, s, ..)| !d.trim().is_empty() && !s.trim().is_empty())
            .prop_map(|(id, doc, sum, idx, gold, amb)| {
                let mut r = EvaluationRecord::new(id, doc, sum);
                r.dataset = "prop".into();
                if let Some(i) = idx {
                    r.granularity = Granularity::Sentence;
                    r.sentence_index = Some(i);
                }
                r.gold_label =
                    gold.map(|g| if g { FaithfulnessLabel::Faithful } else { FaithfulnessLabel::Unfaithful });
                r.gold_ambiguity = amb.map(|a| {
                    if a {
                        AmbiguityAnnotation::ambiguous(Some(FineType::Vagueness))
                    } else {
                        AmbiguityAnnotation::non_ambiguous()
                    }
                });
                r
            })
    }

    proptest! {
        #[test]
        fn canonical_round_trip_is_identity(records in proptest::collection::vec(arb_record(), 0..8)) {
            let mut seen = HashSet::new();
            let records: Vec<_> = records.into_iter().filter(|r| seen.insert(r.record_id.clone())).collect();
            let text = to_canonical_jsonl(&records);
            let back = parse_canonical(Path::new("p"), &text).unwrap();
            prop_assert_eq!(&back, &records);
            prop_assert_eq!(to_canonical_jsonl(&back), text);
        }
    }
}
