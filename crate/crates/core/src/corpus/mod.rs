//! Synthetic annotated corpora: template-grammar sentences with exact
//! dependency triplets and knowledge-graph passages with entity-level
//! relation triplets. Generation is a pure function of (seed, config).

mod banks;
mod dependency;
mod kg;
mod practice;
mod vocab;

pub use banks::{plural, verb_3sg, verb_past, EXCLUDED_LETTERS, 
    ALLOWED_LETTERS, ANIMALS, ENTITY_NAMES, FRUITS, FURNITURE, MOD_NOUN_PAIRS, MONTHS, NOUNS,
    PART_WHOLE_PAIRS, PROFESSIONS, STOPWORDS, SUBJ_VERB_PAIRS, VERBS, VERB_OBJ_PAIRS,
};
pub use dependency::gen_dependency_corpus;
pub use kg::{gen_kg_corpus, strip_function_words, substitute_entities};
pub use practice::gen_format_practice;
pub use vocab::{Vocab, BOS, PAD};

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed relation label set: three syntactic dependencies plus the seven
/// knowledge-graph relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "subj")]
    Subj,
    #[serde(rename = "obj")]
    Obj,
    #[serde(rename = "mod")]
    Mod,
    #[serde(rename = "Part-of")]
    PartOf,
    #[serde(rename = "Compare")]
    Compare,
    #[serde(rename = "Used-for")]
    UsedFor,
    #[serde(rename = "Feature-of")]
    FeatureOf,
    #[serde(rename = "Hyponym-of")]
    HyponymOf,
    #[serde(rename = "Evaluate-for")]
    EvaluateFor,
    #[serde(rename = "Conjunction")]
    Conjunction,
}

impl Relation {
    pub const ALL: [Relation; 10] = [
        Relation::Subj,
        Relation::Obj,
        Relation::Mod,
        Relation::PartOf,
        Relation::Compare,
        Relation::UsedFor,
        Relation::FeatureOf,
        Relation::HyponymOf,
        Relation::EvaluateFor,
        Relation::Conjunction,
    ];

    pub const KG: [Relation; 7] = [
        Relation::PartOf,
        Relation::Compare,
        Relation::UsedFor,
        Relation::FeatureOf,
        Relation::HyponymOf,
        Relation::EvaluateFor,
        Relation::Conjunction,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Relation::Subj => "subj",
            Relation::Obj => "obj",
            Relation::Mod => "mod",
            Relation::PartOf => "Part-of",
            Relation::Compare => "Compare",
            Relation::UsedFor => "Used-for",
            Relation::FeatureOf => "Feature-of",
            Relation::HyponymOf => "Hyponym-of",
            Relation::EvaluateFor => "Evaluate-for",
            Relation::Conjunction => "Conjunction",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .iter()
            .find(|r| r.label().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::Input(format!("unknown relation label {s:?}")))
    }
}

/// One relation instance: head-token position `s`, tail-token position `o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub s: usize,
    pub o: usize,
    pub relation: Relation,
    #[serde(default)]
    pub reversed: bool,
}

impl Triplet {
    pub fn new(s: usize, o: usize, relation: Relation) -> Self {
        Self {
            s,
            o,
            relation,
            reversed: false,
        }
    }

    /// Swap head and tail roles.
    pub fn reverse(&self) -> Self {
        Self {
            s: self.o,
            o: self.s,
            relation: self.relation,
            reversed: !self.reversed,
        }
    }
}

/// A contiguous mention of a named entity, before letter substitution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub len: usize,
    /// Entity identity key; repeated mentions share it.
    pub entity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub tokens: Vec<u32>,
    pub surface: Vec<String>,
    pub triplets: Vec<Triplet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<EntityMention>,
}

impl AnnotatedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.surface.join(" ")
    }

    /// Triplet positions in range and s != o.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.surface.len() {
            return Err(Error::Input(format!(
                "token/surface length mismatch: {} vs {}",
                self.tokens.len(),
                self.surface.len()
            )));
        }
        for t in &self.triplets {
            if t.s >= self.len() || t.o >= self.len() {
                return Err(Error::Input(format!(
                    "triplet ({}, {}, {}) out of range for length {}",
                    t.s,
                    t.relation,
                    t.o,
                    self.len()
                )));
            }
            if t.s == t.o {
                return Err(Error::Input(format!(
                    "triplet head and tail coincide at {}",
                    t.s
                )));
            }
        }
        Ok(())
    }
}

/// Write a corpus as line-delimited JSON records.
pub fn save_corpus(sentences: &[AnnotatedSentence], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in sentences {
        serde_json::to_writer(&mut f, s)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: AnnotatedSentence = serde_json::from_str(&line)?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_labels_roundtrip() {
        for r in Relation::ALL {
            assert_eq!(r.label().parse::<Relation>().unwrap(), r);
        }
        assert!("nope".parse::<Relation>().is_err());
    }

    #[test]
    fn reverse_is_involution() {
        let t = Triplet::new(3, 1, Relation::UsedFor);
        assert_eq!(t.reverse().reverse(), t);
        assert!(t.reverse().reversed);
    }

    #[test]
    fn corpus_file_roundtrip() {
        let v = Vocab::standard();
        let sent = AnnotatedSentence {
            tokens: v.tokenize("the red fox chases the dog").unwrap(),
            surface: "the red fox chases the dog"
                .split(' ')
                .map(String::from)
                .collect(),
            triplets: vec![
                Triplet::new(3, 2, Relation::Subj),
                Triplet::new(3, 5, Relation::Obj),
                Triplet::new(2, 1, Relation::Mod),
            ],
            entities: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&[sent.clone()], &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded, vec![sent]);
    }
}
