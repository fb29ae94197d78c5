//! Prompt templates, rendering and response parsing.
//!
//! Templates live in `assets/prompts/` as text files with a `#`-comment header
//! (kind, version, placeholders) terminated by a `---` line. Placeholders are
//! `{{name}}`; substitution is single-pass, so inserted text is never re-expanded.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::taxonomy::{AmbiguityTaxonomy, FineType};
use crate::domain::{label_to_wire, wire_to_label, Argument, EvaluationRecord, FaithfulnessLabel};
use crate::guidelines::GuidelineSet;

/// Appended to the evaluator task description once intervention is active.
pub const INTERVENTION_TEXT: &str = " The discussion has not reached an agreement yet. Reconsider the other agents' arguments with an open mind: if an argument is better supported by the document and the guidelines than your own, be willing to change your label.";

/// Appended to evaluator prompts during guideline learning.
pub const LEARNING_REQUEST_TEXT: &str = "\n\nAlso list every guideline you relied on for your evaluation between <guidelines_used></guidelines_used> XML tags, one guideline per line.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("{kind:?} prompt requires {what}")]
    MissingContext { kind: PromptKind, what: &'static str },
    #[error("invalid chat history: {0}")]
    InvalidHistory(String),
    #[error("template {kind:?} references unknown placeholder {name}")]
    UnknownPlaceholder { kind: PromptKind, name: String },
    #[error("malformed template asset {0}")]
    MalformedTemplate(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse failure: {reason}")]
pub struct ParseFailure {
    pub reason: String,
}

impl ParseFailure {
    fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    EvaluatorRound1,
    EvaluatorLater,
    Adjudicator,
    ZeroShot,
    ChainOfThought,
    AmbiguityZeroShot,
    AmbiguityWithArguments,
    NegateGuideline,
}

impl PromptKind {
    pub const ALL: [PromptKind; 8] = [
        PromptKind::EvaluatorRound1,
        PromptKind::EvaluatorLater,
        PromptKind::Adjudicator,
        PromptKind::ZeroShot,
        PromptKind::ChainOfThought,
        PromptKind::AmbiguityZeroShot,
        PromptKind::AmbiguityWithArguments,
        PromptKind::NegateGuideline,
    ];

    fn asset(self) -> (&'static str, &'static str) {
        match self {
            PromptKind::EvaluatorRound1 => {
                ("evaluator_round1.txt", include_str!("../assets/prompts/evaluator_round1.txt"))
            }
            PromptKind::EvaluatorLater => {
                ("evaluator_later.txt", include_str!("../assets/prompts/evaluator_later.txt"))
            }
            PromptKind::Adjudicator => ("adjudicator.txt", include_str!("../assets/prompts/adjudicator.txt")),
            PromptKind::ZeroShot => ("zero_shot.txt", include_str!("../assets/prompts/zero_shot.txt")),
            PromptKind::ChainOfThought => {
                ("chain_of_thought.txt", include_str!("../assets/prompts/chain_of_thought.txt"))
            }
            PromptKind::AmbiguityZeroShot => {
                ("ambiguity_zero_shot.txt", include_str!("../assets/prompts/ambiguity_zero_shot.txt"))
            }
            PromptKind::AmbiguityWithArguments => {
                ("ambiguity_with_arguments.txt", include_str!("../assets/prompts/ambiguity_with_arguments.txt"))
            }
            PromptKind::NegateGuideline => {
                ("negate_guideline.txt", include_str!("../assets/prompts/negate_guideline.txt"))
            }
        }
    }

    pub fn template(self) -> &'static Template {
        static CELL: OnceLock<BTreeMap<PromptKind, Template>> = OnceLock::new();
        let all = CELL.get_or_init(|| {
            PromptKind::ALL
                .iter()
                .map(|k| {
                    let (file, text) = k.asset();
                    (*k, Template::parse(*k, file, text).expect("bundled prompt template must parse"))
                })
                .collect()
        });
        &all[&self]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub kind: PromptKind,
    pub file: &'static str,
    pub version: String,
    pub placeholders: Vec<String>,
    pub body: String,
}

impl Template {
    fn parse(kind: PromptKind, file: &'static str, text: &str) -> Result<Self, PromptError> {
        let (header, body) = text.split_once("\n---\n").ok_or(PromptError::MalformedTemplate(file))?;
        let mut version = None;
        let mut placeholders = Vec::new();
        for line in header.lines() {
            let line = line.trim_start_matches('#').trim();
            if let Some(v) = line.strip_prefix("version:") {
                version = Some(v.trim().to_string());
            } else if let Some(p) = line.strip_prefix("placeholders:") {
                placeholders = p.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
        }
        Ok(Self {
            kind,
            file,
            version: version.ok_or(PromptError::MalformedTemplate(file))?,
            placeholders,
            body: body.trim_end_matches('\n').to_string(),
        })
    }

    /// Single-pass `{{name}}` substitution.
    pub fn fill(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() + values.values().map(String::len).sum::<usize>());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or(PromptError::MalformedTemplate(self.file))?;
            let name = after[..end].trim();
            let value = values
                .get(name)
                .ok_or_else(|| PromptError::UnknownPlaceholder { kind: self.kind, name: name.to_string() })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// One chat-history line: a pseudonymous speaker and the argument shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub display_name: String,
    pub argument: Argument,
}

/// The history one agent sees, already in display order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChatHistoryView {
    pub entries: Vec<HistoryEntry>,
    pub includes_initial_stances: bool,
}

impl ChatHistoryView {
    /// Round-1 view of the imposed stances, named "Agent 1".. in the given order.
    pub fn stances(ordered: Vec<Argument>) -> Result<Self, PromptError> {
        if ordered.iter().any(|a| !a.imposed) {
            return Err(PromptError::InvalidHistory("stance view holds a non-imposed argument".into()));
        }
        Ok(Self { entries: name_block(ordered), includes_initial_stances: true })
    }

    /// View of debate arguments, one block per round, each block already shuffled.
    /// Names restart at "Agent 1" in every block.
    pub fn rounds(blocks: Vec<Vec<Argument>>) -> Result<Self, PromptError> {
        let mut entries = Vec::new();
        for block in blocks {
            if block.iter().any(|a| a.imposed) {
                return Err(PromptError::InvalidHistory("imposed stance in a debate-round view".into()));
            }
            entries.extend(name_block(block));
        }
        Ok(Self { entries, includes_initial_stances: false })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Text placed between the chat_history tags.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut current_round = None;
        for e in &self.entries {
            let a = &e.argument;
            if a.imposed {
                out.push_str(&format!("{}: {}\n", e.display_name, a.label.stance_sentence()));
                continue;
            }
            if current_round != Some(a.round) {
                if current_round.is_some() {
                    out.push('\n');
                }
                out.push_str(&format!("[Round {}]\n", a.round));
                current_round = Some(a.round);
            }
            out.push_str(&format!("{}:\n{}\n", e.display_name, serialize_argument(a)));
        }
        out.trim_end().to_string()
    }
}

fn name_block(block: Vec<Argument>) -> Vec<HistoryEntry> {
    block
        .into_iter()
        .enumerate()
        .map(|(i, argument)| HistoryEntry { display_name: format!("Agent {}", i + 1), argument })
        .collect()
}

/// Wire form of an argument as it appears in chat histories.
pub fn serialize_argument(a: &Argument) -> String {
    format!("<label>{}</label>\n<explanation>{}</explanation>", label_to_wire(a.label), a.explanation)
}

/// Inputs beyond the record, guidelines, history and taxonomy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PromptExtras {
    /// The rendering agent's imposed stance (round 1 only).
    pub own_stance: Option<FaithfulnessLabel>,
    pub intervention: bool,
    pub learning_request: bool,
}

pub fn render_prompt(
    kind: PromptKind,
    record: &EvaluationRecord,
    guidelines: &GuidelineSet,
    history: Option<&ChatHistoryView>,
    taxonomy: Option<&AmbiguityTaxonomy>,
    extras: &PromptExtras,
) -> Result<String, PromptError> {
    let missing = |what| PromptError::MissingContext { kind, what };
    let mut v: BTreeMap<&str, String> = BTreeMap::new();
    v.insert("document", record.document.clone());
    v.insert("summary", record.summary.clone());
    match kind {
        PromptKind::ZeroShot | PromptKind::ChainOfThought => {}
        PromptKind::EvaluatorRound1 | PromptKind::EvaluatorLater => {
            let h = history.ok_or_else(|| missing("a chat history"))?;
            if kind == PromptKind::EvaluatorRound1 {
                if !h.includes_initial_stances {
                    return Err(PromptError::InvalidHistory("round-1 prompt needs the stance view".into()));
                }
                let own = extras.own_stance.ok_or_else(|| missing("the agent's own stance"))?;
                v.insert("own_stance", own.stance_sentence().to_string());
            } else if h.includes_initial_stances {
                return Err(PromptError::InvalidHistory("later rounds must not show initial stances".into()));
            }
            v.insert("guidelines", guidelines.render_block());
            v.insert("chat_history", h.render());
            v.insert("intervention", if extras.intervention { INTERVENTION_TEXT.into() } else { String::new() });
            v.insert(
                "learning_request",
                if extras.learning_request { LEARNING_REQUEST_TEXT.into() } else { String::new() },
            );
        }
        PromptKind::Adjudicator => {
            let h = history.ok_or_else(|| missing("the final-round arguments"))?;
            v.insert("guidelines", guidelines.render_block());
            v.insert("chat_history", h.render());
        }
        PromptKind::AmbiguityZeroShot => {
            let t = taxonomy.ok_or_else(|| missing("the ambiguity taxonomy"))?;
            v.insert("taxonomy", t.render_prompt_block());
        }
        PromptKind::AmbiguityWithArguments => {
            let h = history.ok_or_else(|| missing("the debate arguments"))?;
            let t = taxonomy.ok_or_else(|| missing("the ambiguity taxonomy"))?;
            if h.is_empty() {
                return Err(missing("at least one debate argument"));
            }
            v.insert("arguments", h.render());
            v.insert("guidelines", guidelines.render_block());
            v.insert("taxonomy", t.render_prompt_block());
        }
        PromptKind::NegateGuideline => return Err(missing("a guideline; use render_negation")),
    }
    kind.template().fill(&v)
}

pub fn render_negation(guideline: &str) -> Result<String, PromptError> {
    if guideline.trim().is_empty() {
        return Err(PromptError::MissingContext { kind: PromptKind::NegateGuideline, what: "a non-empty guideline" });
    }
    let mut v = BTreeMap::new();
    v.insert("guideline", guideline.trim().to_string());
    PromptKind::NegateGuideline.template().fill(&v)
}

/// Content of the first `<tag>…</tag>` pair (tag names match case-insensitively).
pub fn extract_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let lower = text.to_ascii_lowercase();
    let open = format!("<{}>", tag.to_ascii_lowercase());
    let close = format!("</{}>", tag.to_ascii_lowercase());
    let start = lower.find(&open)? + open.len();
    let end = start + lower[start..].find(&close)?;
    Some(&text[start..end])
}

/// Label, explanation and optional thinking of a faithfulness response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedVerdict {
    pub label: FaithfulnessLabel,
    pub explanation: String,
    pub thinking: Option<String>,
}

fn parse_binary(text: &str) -> Result<u8, ParseFailure> {
    let raw = extract_tag(text, "label").ok_or_else(|| ParseFailure::new("no <label> tag"))?;
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(ParseFailure::new(format!("label content {other:?} is not 0 or 1"))),
    }
}

pub fn parse_verdict(text: &str) -> Result<ParsedVerdict, ParseFailure> {
    let wire = parse_binary(text)?;
    let label = wire_to_label(wire as i64).map_err(|e| ParseFailure::new(e.to_string()))?;
    Ok(ParsedVerdict {
        label,
        explanation: extract_tag(text, "explanation").map(|s| s.trim().to_string()).unwrap_or_default(),
        thinking: extract_tag(text, "thinking").map(|s| s.trim().to_string()),
    })
}

pub fn parse_argument(text: &str, agent_id: u32, round: u32) -> Result<Argument, ParseFailure> {
    let v = parse_verdict(text)?;
    Ok(Argument {
        agent_id,
        round,
        label: v.label,
        explanation: v.explanation,
        thinking: v.thinking,
        imposed: false,
        reported_guidelines: parse_guidelines_used(text),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAmbiguity {
    pub is_ambiguous: bool,
    pub cited_type: Option<FineType>,
    pub explanation: String,
}

/// Label 1 means ambiguous in the ambiguity prompts. The cited type is looked
/// up in the explanation (or the whole text when there is none) for ambiguous verdicts.
pub fn parse_ambiguity_verdict(text: &str, taxonomy: &AmbiguityTaxonomy) -> Result<ParsedAmbiguity, ParseFailure> {
    let is_ambiguous = parse_binary(text)? == 1;
    let explanation = extract_tag(text, "explanation").map(|s| s.trim().to_string()).unwrap_or_default();
    let cited_type = if is_ambiguous {
        let source = if explanation.is_empty() { text } else { explanation.as_str() };
        taxonomy.match_cited_type(source)
    } else {
        None
    };
    Ok(ParsedAmbiguity { is_ambiguous, cited_type, explanation })
}

/// Lines of the first `<guidelines_used>` tag with list markers stripped.
pub fn parse_guidelines_used(text: &str) -> Vec<String> {
    let Some(block) = extract_tag(text, "guidelines_used") else {
        return Vec::new();
    };
    block.lines().map(strip_list_marker).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let line = line.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
    }
    line.trim()
}

pub fn parse_negated(text: &str) -> Result<String, ParseFailure> {
    let negated = extract_tag(text, "negated").ok_or_else(|| ParseFailure::new("no <negated> tag"))?.trim();
    if negated.is_empty() {
        return Err(ParseFailure::new("empty <negated> tag"));
    }
    Ok(negated.to_string())
}

#[cfg(test)]
/// Body of the `<tag>` block that sits on its own lines.
pub(crate) fn section<'a>(p: &'a str, tag: &str) -> &'a str {
    let open = format!("\n<{tag}>\n");
    let start = p.find(&open).unwrap() + open.len();
    let end = start + p[start..].find(&format!("\n</{tag}>")).unwrap();
    &p[start..end]
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::guidelines::default_guidelines;
    use proptest::prelude::*;

    fn record() -> EvaluationRecord {
        EvaluationRecord::new("r1", "The council met on Monday.", "The council met.")
    }

    fn arg(agent: u32, round: u32, label: FaithfulnessLabel, expl: &str) -> Argument {
        Argument {
            agent_id: agent,
            round,
            label,
            explanation: expl.into(),
            thinking: None,
            imposed: false,
            reported_guidelines: vec![],
        }
    }

    #[test]
    fn every_template_lists_exactly_its_placeholders() {
        for kind in PromptKind::ALL {
            let t = kind.template();
            assert_eq!(t.version, "1");
            let mut used: Vec<String> = t
                .body
                .match_indices("{{")
                .map(|(i, _)| {
                    let rest = &t.body[i + 2..];
                    rest[..rest.find("}}").unwrap()].trim().to_string()
                })
                .collect();
            used.sort();
            used.dedup();
            let mut declared = t.placeholders.clone();
            declared.sort();
            assert_eq!(used, declared, "{kind:?}");
        }
    }

    #[test]
    fn later_round_history_in_given_order() {
        let h = ChatHistoryView::rounds(vec![vec![
            arg(2, 1, FaithfulnessLabel::Faithful, "first explanation"),
            arg(1, 1, FaithfulnessLabel::Unfaithful, "second explanation"),
        ]])
        .unwrap();
        let p = render_prompt(
            PromptKind::EvaluatorLater,
            &record(),
            &default_guidelines(),
            Some(&h),
            None,
            &PromptExtras::default(),
        )
        .unwrap();
        let hist = section(&p, "chat_history");
        let a = hist.find("first explanation").unwrap();
        let b = hist.find("second explanation").unwrap();
        assert!(a < b);
        assert!(hist.contains("Agent 1:") && hist.contains("Agent 2:"));
        assert!(!p.contains("The summary is faithful") && !p.contains("The summary is unfaithful"));
    }

    #[test]
    fn round_one_carries_own_stance_and_all_stances() {
        let stances =
            vec![Argument::stance(1, FaithfulnessLabel::Faithful), Argument::stance(2, FaithfulnessLabel::Unfaithful)];
        let h = ChatHistoryView::stances(stances).unwrap();
        let extras = PromptExtras { own_stance: Some(FaithfulnessLabel::Unfaithful), ..Default::default() };
        let p = render_prompt(PromptKind::EvaluatorRound1, &record(), &default_guidelines(), Some(&h), None, &extras)
            .unwrap();
        assert!(p.contains("Your own initial belief is: \"The summary is unfaithful\""));
        let hist = section(&p, "chat_history");
        assert!(hist.contains("Agent 1: The summary is faithful"));
        assert!(hist.contains("Agent 2: The summary is unfaithful"));
    }

    #[test]
    fn missing_context_errors() {
        let g = default_guidelines();
        let x = PromptExtras::default();
        assert!(matches!(
            render_prompt(PromptKind::EvaluatorLater, &record(), &g, None, None, &x),
            Err(PromptError::MissingContext { .. })
        ));
        assert!(matches!(
            render_prompt(PromptKind::AmbiguityZeroShot, &record(), &g, None, None, &x),
            Err(PromptError::MissingContext { .. })
        ));
        let h = ChatHistoryView::stances(vec![Argument::stance(1, FaithfulnessLabel::Faithful)]).unwrap();
        assert!(matches!(
            render_prompt(PromptKind::EvaluatorRound1, &record(), &g, Some(&h), None, &x),
            Err(PromptError::MissingContext { .. })
        ));
        assert!(ChatHistoryView::rounds(vec![vec![Argument::stance(1, FaithfulnessLabel::Faithful)]]).is_err());
    }

    #[test]
    fn ambiguity_with_arguments_embeds_taxonomy_and_guidelines() {
        let tax = AmbiguityTaxonomy::builtin();
        let h = ChatHistoryView::rounds(vec![vec![arg(1, 1, FaithfulnessLabel::Faithful, "ok")]]).unwrap();
        let p = render_prompt(
            PromptKind::AmbiguityWithArguments,
            &record(),
            &default_guidelines(),
            Some(&h),
            Some(tax),
            &PromptExtras::default(),
        )
        .unwrap();
        let t = section(&p, "taxonomy");
        for n in 1..=15 {
            assert!(t.contains(&format!("\n{n}. ")) || t.starts_with(&format!("{n}. ")), "entry {n}");
        }
        assert!(!t.contains("16. "));
        let g = section(&p, "guidelines");
        assert!(g.contains("13. ") && !g.contains("14. "));
    }

    #[test]
    fn substitution_is_single_pass() {
        let mut r = record();
        r.summary = "{{document}}".into();
        let p = render_prompt(PromptKind::ZeroShot, &r, &default_guidelines(), None, None, &PromptExtras::default())
            .unwrap();
        assert!(p.contains("<summary>\n{{document}}\n</summary>"));
    }

    #[test]
    fn intervention_sentence_toggles() {
        let h = ChatHistoryView::rounds(vec![vec![arg(1, 1, FaithfulnessLabel::Faithful, "x")]]).unwrap();
        let g = default_guidelines();
        let off =
            render_prompt(PromptKind::EvaluatorLater, &record(), &g, Some(&h), None, &PromptExtras::default()).unwrap();
        let on = render_prompt(
            PromptKind::EvaluatorLater,
            &record(),
            &g,
            Some(&h),
            None,
            &PromptExtras { intervention: true, ..Default::default() },
        )
        .unwrap();
        assert!(!off.contains(INTERVENTION_TEXT) && on.contains(INTERVENTION_TEXT));
    }

    #[test]
    fn parse_examples() {
        let a = parse_argument(
            "<thinking>hmm</thinking><label>0</label><explanation>adds a date not in doc</explanation>",
            1,
            1,
        )
        .unwrap();
        assert_eq!(a.label, FaithfulnessLabel::Unfaithful);
        assert_eq!(a.explanation, "adds a date not in doc");
        assert_eq!(a.thinking.as_deref(), Some("hmm"));
        assert!(!a.imposed);
        let b = parse_argument("<label> 1 </label>", 1, 1).unwrap();
        assert_eq!((b.label, b.explanation.as_str()), (FaithfulnessLabel::Faithful, ""));
        assert!(parse_argument("I think it's fine.", 1, 1).is_err());
        assert!(parse_argument("<label>yes</label>", 1, 1).is_err());
        let first = parse_argument("<label>1</label><label>0</label>", 1, 1).unwrap();
        assert_eq!(first.label, FaithfulnessLabel::Faithful);
        let inside = parse_verdict("<thinking>maybe <label>0</label></thinking>").unwrap();
        assert_eq!(inside.label, FaithfulnessLabel::Unfaithful);
    }

    #[test]
    fn ambiguity_parse_examples() {
        let tax = AmbiguityTaxonomy::builtin();
        let v =
            parse_ambiguity_verdict("<label>1</label><explanation>structural ambiguity: two parses</explanation>", tax)
                .unwrap();
        assert!(v.is_ambiguous);
        assert_eq!(v.cited_type, Some(FineType::StructuralAmbiguity));
        let v = parse_ambiguity_verdict("<label>0</label><explanation>single reading</explanation>", tax).unwrap();
        assert!(!v.is_ambiguous && v.cited_type.is_none());
        let v = parse_ambiguity_verdict("<label>1</label><explanation>Vagueness</explanation>", tax).unwrap();
        assert_eq!(v.cited_type, Some(FineType::Vagueness));
        assert!(parse_ambiguity_verdict("<label>2</label>", tax).is_err());
    }

    #[test]
    fn guidelines_used_strip_markers() {
        let t = "<label>1</label><guidelines_used>\n1. First rule\n- Second rule\n  * Third\n2) Fourth\n\n</guidelines_used>";
        assert_eq!(parse_guidelines_used(t), vec!["First rule", "Second rule", "Third", "Fourth"]);
        assert!(parse_guidelines_used("<label>1</label>").is_empty());
    }

    #[test]
    fn negation_parsing_and_rendering() {
        assert_eq!(parse_negated("<negated> Omissions do not matter </negated>").unwrap(), "Omissions do not matter");
        assert!(parse_negated("nothing").is_err());
        assert!(render_negation("  ").is_err());
        assert!(render_negation("Rule").unwrap().contains("<guideline>\nRule\n</guideline>"));
    }

    proptest! {
        #[test]
        fn label_round_trips_through_serialized_form(faithful: bool, expl in "[a-zA-Z0-9 .,]{0,60}") {
            let label = if faithful { FaithfulnessLabel::Faithful } else { FaithfulnessLabel::Unfaithful };
            let a = arg(1, 2, label, &expl);
            let back = parse_argument(&serialize_argument(&a), 1, 2).unwrap();
            prop_assert_eq!(back.label, label);
            prop_assert_eq!(back.explanation, expl.trim());
        }

        #[test]
        fn rendering_is_pure(doc in "[a-z ]{1,40}", sum in "[a-z ]{1,20}") {
            let r = EvaluationRecord::new("x", doc, sum);
            let g = default_guidelines();
            let a = render_prompt(PromptKind::ChainOfThought, &r, &g, None, None, &PromptExtras::default()).unwrap();
            let b = render_prompt(PromptKind::ChainOfThought, &r, &g, None, None, &PromptExtras::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
