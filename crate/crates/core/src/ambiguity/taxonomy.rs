//! The ambiguity taxonomy, loaded from a versioned JSON asset.
//!
//! Two views ship in the asset: the 16 fine types with their full definitions,
//! and the 15 numbered entries embedded in the ambiguity prompts. Every prompt
//! entry maps onto one fine type.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TAXONOMY_JSON: &str = include_str!("../../assets/taxonomy.json");

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy asset is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseCategory {
    ImplicitReasoning,
    Meaning,
    Context,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineType {
    Deduction,
    CommonSenseInference,
    ValueBasedInference,
    OtherImplicitReasoning,
    Hypernymy,
    Hyponymy,
    Synonymy,
    StructuralAmbiguity,
    LexicalAmbiguity,
    Vagueness,
    NonAssertion,
    OtherMeaning,
    Decontextualization,
    Conflation,
    OtherContext,
    OtherEvaluabilityIssue,
}

impl FineType {
    pub const ALL: [FineType; 16] = [
        FineType::Deduction,
        FineType::CommonSenseInference,
        FineType::ValueBasedInference,
        FineType::OtherImplicitReasoning,
        FineType::Hypernymy,
        FineType::Hyponymy,
        FineType::Synonymy,
        FineType::StructuralAmbiguity,
        FineType::LexicalAmbiguity,
        FineType::Vagueness,
        FineType::NonAssertion,
        FineType::OtherMeaning,
        FineType::Decontextualization,
        FineType::Conflation,
        FineType::OtherContext,
        FineType::OtherEvaluabilityIssue,
    ];

    pub fn parent(self) -> CoarseCategory {
        use FineType::*;
        match self {
            Deduction | CommonSenseInference | ValueBasedInference | OtherImplicitReasoning => {
                CoarseCategory::ImplicitReasoning
            }
            Hypernymy | Hyponymy | Synonymy | StructuralAmbiguity | LexicalAmbiguity | Vagueness | NonAssertion
            | OtherMeaning => CoarseCategory::Meaning,
            Decontextualization | Conflation | OtherContext => CoarseCategory::Context,
            OtherEvaluabilityIssue => CoarseCategory::Other,
        }
    }

    /// 1-based position in the taxonomy.
    pub fn id(self) -> u32 {
        FineType::ALL.iter().position(|t| *t == self).map(|i| i as u32 + 1).unwrap_or(0)
    }
}

/// One of the 16 fine types with its definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyType {
    pub id: u32,
    #[serde(rename = "key")]
    pub fine: FineType,
    pub coarse: CoarseCategory,
    pub name: String,
    /// Longer display label used in annotation guides ("Linguistic ambiguity: Lexical").
    pub label: String,
    pub definition: String,
    pub example_id: String,
}

/// One numbered entry of the taxonomy list embedded in the ambiguity prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub number: u32,
    pub name: String,
    pub definition: String,
    pub maps_to: FineType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityTaxonomy {
    pub version: String,
    pub types: Vec<TaxonomyType>,
    pub prompt_entries: Vec<PromptEntry>,
}

impl AmbiguityTaxonomy {
    /// The bundled taxonomy. Parsed once and validated.
    pub fn builtin() -> &'static AmbiguityTaxonomy {
        static CELL: OnceLock<AmbiguityTaxonomy> = OnceLock::new();
        CELL.get_or_init(|| Self::from_json(TAXONOMY_JSON).expect("bundled taxonomy asset must be valid"))
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let tax: AmbiguityTaxonomy = serde_json::from_str(text).map_err(|e| TaxonomyError::Malformed(e.to_string()))?;
        tax.validate()?;
        Ok(tax)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        let bad = |m: String| Err(TaxonomyError::Malformed(m));
        if self.types.len() != 16 {
            return bad(format!("expected 16 fine types, found {}", self.types.len()));
        }
        for (i, (t, expected)) in self.types.iter().zip(FineType::ALL).enumerate() {
            if t.fine != expected || t.id != i as u32 + 1 {
                return bad(format!("type #{} is {:?}, expected {:?}", i + 1, t.fine, expected));
            }
            if t.coarse != t.fine.parent() {
                return bad(format!("{:?} listed under {:?}", t.fine, t.coarse));
            }
            if t.definition.trim().is_empty() {
                return bad(format!("{:?} has no definition", t.fine));
            }
        }
        for (i, e) in self.prompt_entries.iter().enumerate() {
            if e.number != i as u32 + 1 {
                return bad(format!("prompt entry {} is numbered {}", i + 1, e.number));
            }
        }
        Ok(())
    }

    pub fn get(&self, fine: FineType) -> &TaxonomyType {
        &self.types[fine.id() as usize - 1]
    }

    /// Numbered "N. Name: definition" list used inside the ambiguity prompts.
    pub fn render_prompt_block(&self) -> String {
        self.prompt_entries
            .iter()
            .map(|e| format!("{}. {}: {}", e.number, e.name, e.definition))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Finds the taxonomy type cited in free text.
    ///
    /// Candidate names are the prompt-entry names, the fine-type names and labels,
    /// and the slash-separated parts of each ("Hypernymy/Generalization" also
    /// matches "Generalization"). Matching is case-insensitive; the earliest
    /// occurrence in the text wins and, at the same position, the longer name.
    pub fn match_cited_type(&self, text: &str) -> Option<FineType> {
        let haystack = text.to_lowercase();
        let mut best: Option<(usize, usize, FineType)> = None;
        for (alias, fine) in self.aliases() {
            if let Some(pos) = find_word(&haystack, &alias) {
                let better = match best {
                    None => true,
                    Some((bpos, blen, _)) => pos < bpos || (pos == bpos && alias.len() > blen),
                };
                if better {
                    best = Some((pos, alias.len(), fine));
                }
            }
        }
        best.map(|(_, _, f)| f)
    }

    fn aliases(&self) -> Vec<(String, FineType)> {
        let mut out = Vec::new();
        let mut push = |name: &str, fine: FineType| {
            let lower = name.trim().to_lowercase();
            if lower.len() >= 4 {
                out.push((lower.clone(), fine));
            }
            if lower.contains('/') {
                for part in lower.split('/') {
                    if part.trim().len() >= 4 {
                        out.push((part.trim().to_string(), fine));
                    }
                }
            }
        };
        for e in &self.prompt_entries {
            push(&e.name, e.maps_to);
        }
        for t in &self.types {
            push(&t.name, t.fine);
            push(&t.label, t.fine);
        }
        out
    }
}

/// Byte offset of `needle` in `haystack` where the match is not embedded in a longer word.
fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let is_word = |c: char| c.is_alphanumeric();
    let mut start = 0;
    while let Some(off) = haystack[start..].find(needle) {
        let pos = start + off;
        let before_ok = haystack[..pos].chars().next_back().is_none_or(|c| !is_word(c));
        let end = pos + needle.len();
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return Some(pos);
        }
        start = pos + haystack[pos..].chars().next().map(char::len_utf8).unwrap_or(1);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_sixteen_types_and_fifteen_prompt_entries() {
        let t = AmbiguityTaxonomy::builtin();
        assert_eq!(t.types.len(), 16);
        assert_eq!(t.prompt_entries.len(), 15);
        let per_coarse = |c| t.types.iter().filter(|x| x.coarse == c).count();
        assert_eq!(per_coarse(CoarseCategory::ImplicitReasoning), 4);
        assert_eq!(per_coarse(CoarseCategory::Meaning), 8);
        assert_eq!(per_coarse(CoarseCategory::Context), 3);
        assert_eq!(per_coarse(CoarseCategory::Other), 1);
    }

    #[test]
    fn prompt_entries_name_the_expected_types() {
        let t = AmbiguityTaxonomy::builtin();
        assert_eq!(t.prompt_entries[10].name, "Vagueness");
        assert_eq!(t.prompt_entries[10].maps_to, FineType::Vagueness);
        assert_eq!(t.prompt_entries[13].name, "Conflation");
        assert!(t.prompt_entries[13].definition.starts_with("The summary joins"));
    }

    #[test]
    fn cited_type_matching() {
        let t = AmbiguityTaxonomy::builtin();
        assert_eq!(t.match_cited_type("Structural ambiguity: two parses"), Some(FineType::StructuralAmbiguity));
        assert_eq!(t.match_cited_type("this is a case of VAGUENESS"), Some(FineType::Vagueness));
        assert_eq!(t.match_cited_type("type 14, Conflation."), Some(FineType::Conflation));
        assert_eq!(t.match_cited_type("a generalization of the text"), Some(FineType::Hypernymy));
        assert_eq!(t.match_cited_type("Common-sense inference here"), Some(FineType::CommonSenseInference));
        assert_eq!(t.match_cited_type("single reading"), None);
    }

    #[test]
    fn json_round_trip_is_valid() {
        let t = AmbiguityTaxonomy::builtin();
        assert_eq!(&AmbiguityTaxonomy::from_json(&t.to_json()).unwrap(), t);
    }
}
