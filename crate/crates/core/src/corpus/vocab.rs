//! Word-level vocabulary: one token per word, letter, digit, or
//! punctuation mark. Single-token entities are what makes the
//! letter-substitution trick and the relation metric work.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::banks;
use crate::error::{Error, Result};

pub const BOS: u32 = 0;
pub const PAD: u32 = 1;

#[derive(Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    letter_ids: Vec<u32>,
    digit_ids: Vec<u32>,
    newline: u32,
    comma: u32,
    colon: u32,
    period: u32,
    true_id: u32,
    false_id: u32,
}

// Words needed by the knowledge-graph verbalization templates that are
// not guaranteed to come in through the banks.
const KG_TEMPLATE_WORDS: [&str; 8] = [
    "part", "kind", "feature", "compared", "used", "evaluated", "use", "rescue",
];

impl Vocab {
    /// The shared toolkit vocabulary, built once from the banks.
    pub fn standard() -> &'static Vocab {
        static VOCAB: OnceLock<Vocab> = OnceLock::new();
        VOCAB.get_or_init(Vocab::build)
    }

    fn build() -> Vocab {
        let mut tokens: Vec<String> = Vec::with_capacity(1500);
        let mut ids: HashMap<String, u32> = HashMap::new();
        let push = |tokens: &mut Vec<String>, ids: &mut HashMap<String, u32>, t: &str| -> u32 {
            if let Some(&id) = ids.get(t) {
                return id;
            }
            let id = tokens.len() as u32;
            tokens.push(t.to_string());
            ids.insert(t.to_string(), id);
            id
        };

        push(&mut tokens, &mut ids, "<bos>");
        push(&mut tokens, &mut ids, "<pad>");
        let newline = push(&mut tokens, &mut ids, "\n");
        let comma = push(&mut tokens, &mut ids, ",");
        let colon = push(&mut tokens, &mut ids, ":");
        let period = push(&mut tokens, &mut ids, ".");
        let digit_ids: Vec<u32> = (0..10)
            .map(|d| push(&mut tokens, &mut ids, &d.to_string()))
            .collect();
        let letter_ids: Vec<u32> = banks::ALLOWED_LETTERS
            .iter()
            .map(|l| push(&mut tokens, &mut ids, l))
            .collect();
        let true_id = push(&mut tokens, &mut ids, "true");
        let false_id = push(&mut tokens, &mut ids, "false");

        for w in banks::STOPWORDS {
            push(&mut tokens, &mut ids, w);
        }
        for w in banks::MONTHS {
            push(&mut tokens, &mut ids, w);
        }
        for pool in [
            &banks::FRUITS[..],
            &banks::FURNITURE[..],
            &banks::PROFESSIONS[..],
            &banks::ANIMALS[..],
        ] {
            for w in pool {
                push(&mut tokens, &mut ids, w);
            }
        }
        for n in banks::NOUNS {
            push(&mut tokens, &mut ids, n);
            push(&mut tokens, &mut ids, &banks::plural(n));
        }
        let add_verb_forms = |tokens: &mut Vec<String>, ids: &mut HashMap<String, u32>, v: &str| {
            push(tokens, ids, v);
            push(tokens, ids, &banks::verb_3sg(v));
            push(tokens, ids, &banks::verb_past(v));
        };
        for v in banks::VERBS {
            add_verb_forms(&mut tokens, &mut ids, v);
        }
        for a in banks::ADJECTIVES {
            push(&mut tokens, &mut ids, a);
        }
        for a in banks::ADVERBS {
            push(&mut tokens, &mut ids, a);
        }
        for w in KG_TEMPLATE_WORDS {
            push(&mut tokens, &mut ids, w);
        }
        for name in banks::ENTITY_NAMES {
            for w in name.split(' ') {
                push(&mut tokens, &mut ids, w);
            }
        }
        for (s, v) in banks::SUBJ_VERB_PAIRS {
            push(&mut tokens, &mut ids, s);
            add_verb_forms(&mut tokens, &mut ids, v);
        }
        for (v, o) in banks::VERB_OBJ_PAIRS {
            add_verb_forms(&mut tokens, &mut ids, v);
            push(&mut tokens, &mut ids, o);
        }
        for (m, n) in banks::MOD_NOUN_PAIRS {
            push(&mut tokens, &mut ids, m);
            push(&mut tokens, &mut ids, n);
        }
        for (p, w) in banks::PART_WHOLE_PAIRS {
            push(&mut tokens, &mut ids, p);
            push(&mut tokens, &mut ids, w);
        }

        Vocab {
            tokens,
            ids,
            letter_ids,
            digit_ids,
            newline,
            comma,
            colon,
            period,
            true_id,
            false_id,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Panics on unknown tokens; use for bank words that are in the vocab
    /// by construction.
    pub fn id_of(&self, token: &str) -> u32 {
        self.ids[token]
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Split on single spaces; every generated sentence round-trips.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        text.split(' ')
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| Error::Input(format!("unknown token {w:?}")))
            })
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn reserved_letters(&self) -> &[u32] {
        &self.letter_ids
    }

    pub fn digits(&self) -> &[u32] {
        &self.digit_ids
    }

    pub fn is_digit(&self, id: u32) -> bool {
        self.digit_ids.contains(&id)
    }

    pub fn newline(&self) -> u32 {
        self.newline
    }

    pub fn comma(&self) -> u32 {
        self.comma
    }

    pub fn colon(&self) -> u32 {
        self.colon
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn true_id(&self) -> u32 {
        self.true_id
    }

    pub fn false_id(&self) -> u32 {
        self.false_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_unique() {
        let v = Vocab::standard();
        assert!(v.len() > 1000, "vocab unexpectedly small: {}", v.len());
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn special_letters_not_reserved() {
        let v = Vocab::standard();
        for ex in banks::EXCLUDED_LETTERS {
            assert!(v.id(ex).is_none(), "{ex} should not be in the vocab");
        }
        assert_eq!(v.reserved_letters().len(), 20);
    }

    #[test]
    fn tokenize_roundtrip_and_unknown() {
        let v = Vocab::standard();
        let s = "the red fox chases the dog";
        let ids = v.tokenize(s).unwrap();
        assert_eq!(v.detokenize(&ids), s);
        assert!(matches!(
            v.tokenize("the zzzunknown dog"),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn pools_and_labels_are_single_tokens() {
        let v = Vocab::standard();
        for w in banks::FRUITS.iter().chain(&banks::MONTHS).chain(&banks::ANIMALS) {
            assert!(v.id(w).is_some(), "pool word {w} missing");
        }
        assert!(v.is_digit(v.id("7").unwrap()));
        assert!(!v.is_digit(v.id("true").unwrap()));
    }
}
