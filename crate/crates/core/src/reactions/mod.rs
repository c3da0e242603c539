//! Reaction templates: library loading, state-conditioned template matching
//! and deterministic template application.
//!
//! A library file holds one JSON record per line:
//!
//! ```text
//! {"id":"amide_coupling","name":"Amide coupling","arity":2,
//!  "reactant_smarts":["[C:1](=[O:2])[OX2H1]","[N&X3;H1,H2;!$(NC=O):3]"],
//!  "product_smarts":"[C:1](=[O:2])[N:3]","input_slot":"any"}
//! ```
//!
//! `input_slot` is either a reactant position or `"any"`; the current
//! molecule occupies that slot and the remaining slots are building blocks.

mod apply;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::molgraph::Molecule;
use crate::pattern::{has_substruct_match, parse_smarts, Pattern, PatternError};

pub use apply::apply_template;

/// Shipped default library.
pub const DEFAULT_LIBRARY: &str = include_str!("../../data/templates.jsonl");

#[derive(Debug, Error)]
pub enum ReactionError {
    #[error("template file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("template '{id}': {source}")]
    Unsupported {
        id: String,
        #[source]
        source: PatternError,
    },
    #[error("template '{id}' is invalid: {msg}")]
    InvalidTemplate { id: String, msg: String },
    #[error("duplicate template id '{0}'")]
    DuplicateId(String),
    #[error("template '{id}' takes {expected} reactants, got {got}")]
    Arity { id: String, expected: usize, got: usize },
    #[error("reactant in slot {slot} does not match template '{id}'")]
    NoEmbedding { id: String, slot: usize },
    #[error("template '{id}' produced no valid product")]
    NoValidProduct { id: String },
    #[error("reading template library: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSlot {
    Fixed(usize),
    Any,
}

impl Serialize for InputSlot {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InputSlot::Fixed(i) => s.serialize_u64(*i as u64),
            InputSlot::Any => s.serialize_str("any"),
        }
    }
}

impl<'de> Deserialize<'de> for InputSlot {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Index(i) => Ok(InputSlot::Fixed(i)),
            Raw::Word(w) if w == "any" => Ok(InputSlot::Any),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("input_slot must be an index or \"any\", got {w:?}"))),
        }
    }
}

/// One line of a template library file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateRecord {
    pub id: String,
    pub name: String,
    pub arity: usize,
    pub reactant_smarts: Vec<String>,
    pub product_smarts: String,
    pub input_slot: InputSlot,
}

#[derive(Debug, Clone)]
pub struct ReactionTemplate {
    record: TemplateRecord,
    reactants: Vec<Pattern>,
    plan: apply::ProductPlan,
}

impl ReactionTemplate {
    pub fn compile(record: TemplateRecord) -> Result<Self, ReactionError> {
        let id = record.id.clone();
        let invalid = |msg: String| ReactionError::InvalidTemplate { id: id.clone(), msg };
        if !(1..=3).contains(&record.arity) {
            return Err(invalid(format!("arity {} outside 1..=3", record.arity)));
        }
        if record.reactant_smarts.len() != record.arity {
            return Err(invalid(format!(
                "arity {} but {} reactant patterns",
                record.arity,
                record.reactant_smarts.len()
            )));
        }
        if let InputSlot::Fixed(i) = record.input_slot {
            if i >= record.arity {
                return Err(invalid(format!("input_slot {i} out of range")));
            }
        }
        let compile = |s: &str| parse_smarts(s).map_err(|source| ReactionError::Unsupported { id: id.clone(), source });
        let reactants = record.reactant_smarts.iter().map(|s| compile(s)).collect::<Result<Vec<_>, _>>()?;
        let product = compile(&record.product_smarts)?;
        let plan = apply::ProductPlan::new(&reactants, product).map_err(invalid)?;
        Ok(ReactionTemplate { record, reactants, plan })
    }

    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn name(&self) -> &str {
        &self.record.name
    }

    pub fn arity(&self) -> usize {
        self.record.arity
    }

    pub fn input_slot(&self) -> InputSlot {
        self.record.input_slot
    }

    pub fn record(&self) -> &TemplateRecord {
        &self.record
    }

    pub fn reactant_patterns(&self) -> &[Pattern] {
        &self.reactants
    }

    /// Reactant slot the molecule would occupy as the current state, if any.
    pub fn slot_for(&self, m: &Molecule) -> Option<usize> {
        match self.record.input_slot {
            InputSlot::Fixed(i) => has_substruct_match(m, &self.reactants[i]).then_some(i),
            InputSlot::Any => self.reactants.iter().position(|p| has_substruct_match(m, p)),
        }
    }

    /// Reactant slots filled by building blocks when the current molecule sits in `input`.
    pub fn block_slots(&self, input: usize) -> Vec<usize> {
        (0..self.arity()).filter(|&s| s != input).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TemplateLibrary {
    templates: Vec<Arc<ReactionTemplate>>,
    index: HashMap<String, usize>,
    digest: String,
}

impl TemplateLibrary {
    /// Parses a library from its line-delimited text. The digest covers the
    /// exact bytes so any edit yields a new cache scope.
    pub fn from_jsonl(text: &str) -> Result<Self, ReactionError> {
        let mut templates = Vec::new();
        let mut index = HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let record: TemplateRecord =
                serde_json::from_str(line).map_err(|e| ReactionError::Format { line: no + 1, msg: e.to_string() })?;
            if index.contains_key(&record.id) {
                return Err(ReactionError::DuplicateId(record.id));
            }
            let t = ReactionTemplate::compile(record)?;
            index.insert(t.id().to_string(), templates.len());
            templates.push(Arc::new(t));
        }
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(TemplateLibrary { templates, index, digest })
    }

    pub fn default_library() -> Self {
        Self::from_jsonl(DEFAULT_LIBRARY).expect("shipped template library compiles")
    }

    pub fn templates(&self) -> &[Arc<ReactionTemplate>] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<&Arc<ReactionTemplate>> {
        self.index.get(id).map(|&i| &self.templates[i])
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Hex SHA-256 of the source text.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<TemplateLibrary, ReactionError> {
    let text = std::fs::read_to_string(path)?;
    TemplateLibrary::from_jsonl(&text)
}

/// Templates applicable to `m`, in library order. An empty result means the
/// trajectory cannot continue from `m`.
pub fn match_templates(m: &Molecule, lib: &TemplateLibrary) -> Vec<Arc<ReactionTemplate>> {
    lib.templates().iter().filter(|t| t.slot_for(m).is_some()).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    #[test]
    fn empty_file_is_empty_library() {
        let lib = TemplateLibrary::from_jsonl("").unwrap();
        assert!(lib.is_empty());
        let lib = TemplateLibrary::from_jsonl("\n# comment only\n").unwrap();
        assert!(lib.is_empty());
    }

    #[test]
    fn default_library_compiles() {
        let lib = TemplateLibrary::default_library();
        assert_eq!(lib.len(), 21);
        assert_eq!(lib.digest().len(), 64);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let line =
            r#"{"id":"x","name":"X","arity":1,"reactant_smarts":["[C:1]#N"],"product_smarts":"[C:1]","input_slot":0}"#;
        let text = format!("{line}\n{line}\n");
        assert!(matches!(TemplateLibrary::from_jsonl(&text), Err(ReactionError::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn unsupported_smarts_names_the_template() {
        let line = r#"{"id":"bad","name":"Bad","arity":1,"reactant_smarts":["[C@:1]"],"product_smarts":"[C:1]","input_slot":0}"#;
        match TemplateLibrary::from_jsonl(line) {
            Err(ReactionError::Unsupported { id, .. }) => assert_eq!(id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        let text = "\n{\"id\": 3}\n";
        assert!(matches!(TemplateLibrary::from_jsonl(text), Err(ReactionError::Format { line: 2, .. })));
    }

    #[test]
    fn arity_must_match_patterns() {
        let line =
            r#"{"id":"a","name":"A","arity":2,"reactant_smarts":["[C:1]"],"product_smarts":"[C:1]","input_slot":0}"#;
        assert!(matches!(TemplateLibrary::from_jsonl(line), Err(ReactionError::InvalidTemplate { .. })));
    }

    #[test]
    fn methane_matches_nothing() {
        let lib = TemplateLibrary::default_library();
        assert!(match_templates(&parse_smiles("C").unwrap(), &lib).is_empty());
    }

    #[test]
    fn primary_amine_retains_n_alkylation() {
        let lib = TemplateLibrary::default_library();
        let m = parse_smiles("CCCN").unwrap();
        let matched: Vec<String> = match_templates(&m, &lib).iter().map(|t| t.id().to_string()).collect();
        assert!(matched.contains(&"n_alkylation".to_string()), "{matched:?}");
        let t = lib.get("n_alkylation").unwrap();
        assert!(has_substruct_match(&m, &t.reactant_patterns()[t.slot_for(&m).unwrap()]));
    }

    #[test]
    fn matched_subset_preserves_library_order() {
        let lib = TemplateLibrary::default_library();
        let m = parse_smiles("OC(=O)c1ccc(Br)cc1").unwrap();
        let matched = match_templates(&m, &lib);
        let positions: Vec<usize> =
            matched.iter().map(|t| lib.templates().iter().position(|u| u.id() == t.id()).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}
