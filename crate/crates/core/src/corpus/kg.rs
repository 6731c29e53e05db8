//! Knowledge-graph passages: verbalized (entity, relation, entity) edges,
//! entity-to-letter substitution, and function-word removal.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::banks::{ALLOWED_LETTERS, ENTITY_NAMES, STOPWORDS};
use super::vocab::Vocab;
use super::{AnnotatedSentence, EntityMention, Relation, Triplet};
use crate::error::{Error, Result};

const MAX_ENTITIES_PER_PASSAGE: usize = 20;

/// Deterministic passages verbalizing sampled knowledge-graph edges.
/// Annotations attach to the first token of each entity mention.
pub fn gen_kg_corpus(seed: u64, n_passages: usize) -> Result<Vec<AnnotatedSentence>> {
    gen_kg_corpus_with(seed, n_passages, 3, 6)
}

/// As `gen_kg_corpus` with an explicit entity-count range per passage.
pub fn gen_kg_corpus_with(
    seed: u64,
    n_passages: usize,
    min_entities: usize,
    max_entities: usize,
) -> Result<Vec<AnnotatedSentence>> {
    if max_entities > MAX_ENTITIES_PER_PASSAGE {
        return Err(Error::Config(format!(
            "at most {MAX_ENTITIES_PER_PASSAGE} distinct entities per passage \
             (only 20 usable letters exist), requested {max_entities}"
        )));
    }
    if min_entities < 2 || min_entities > max_entities {
        return Err(Error::Config(format!(
            "bad entity range {min_entities}..={max_entities}"
        )));
    }
    let vocab = Vocab::standard();
    (0..n_passages)
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(0x4b47_0000 ^ i as u64);
            Ok(gen_passage(&mut rng, vocab, min_entities, max_entities))
        })
        .collect()
}

fn gen_passage(
    rng: &mut ChaCha12Rng,
    vocab: &Vocab,
    min_entities: usize,
    max_entities: usize,
) -> AnnotatedSentence {
    let n_entities = rng.gen_range(min_entities..=max_entities);
    let mut pool: Vec<&'static str> = ENTITY_NAMES.to_vec();
    // Partial Fisher-Yates: pick n distinct names.
    for i in 0..n_entities {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let entities = &pool[..n_entities];

    let n_edges = rng.gen_range(2..=4usize);
    let mut surface: Vec<String> = Vec::new();
    let mut triplets = Vec::new();
    let mut mentions = Vec::new();

    for _ in 0..n_edges {
        let a = rng.gen_range(0..n_entities);
        let b = loop {
            let b = rng.gen_range(0..n_entities);
            if b != a {
                break b;
            }
        };
        let relation = Relation::KG[rng.gen_range(0..Relation::KG.len())];
        let s_pos = push_mention(&mut surface, &mut mentions, entities[a]);
        for w in relation_phrase(relation) {
            surface.push(w.to_string());
        }
        let o_pos = push_mention(&mut surface, &mut mentions, entities[b]);
        surface.push(".".to_string());
        triplets.push(Triplet::new(s_pos, o_pos, relation));
    }

    let tokens = surface.iter().map(|w| vocab.id_of(w)).collect();
    let s = AnnotatedSentence {
        tokens,
        surface,
        triplets,
        entities: mentions,
    };
    debug_assert!(s.validate().is_ok());
    s
}

fn push_mention(
    surface: &mut Vec<String>,
    mentions: &mut Vec<EntityMention>,
    name: &str,
) -> usize {
    let start = surface.len();
    let words: Vec<&str> = name.split(' ').collect();
    for w in &words {
        surface.push((*w).to_string());
    }
    mentions.push(EntityMention {
        start,
        len: words.len(),
        entity: name.to_string(),
    });
    start
}

/// The connective words between the two entity mentions of an edge.
fn relation_phrase(relation: Relation) -> &'static [&'static str] {
    match relation {
        Relation::PartOf => &["is", "part", "of"],
        Relation::Compare => &["is", "compared", "with"],
        Relation::UsedFor => &["is", "used", "for"],
        Relation::FeatureOf => &["is", "a", "feature", "of"],
        Relation::HyponymOf => &["is", "a", "kind", "of"],
        Relation::EvaluateFor => &["is", "evaluated", "for"],
        Relation::Conjunction => &["and"],
        other => unreachable!("not a KG relation: {other}"),
    }
}

/// Replace each distinct entity with one capital letter, assigned in the
/// fixed allowed-letter order by first mention. Triplet positions are
/// remapped; repeated mentions of one entity share the letter.
pub fn substitute_entities(passage: &AnnotatedSentence) -> Result<AnnotatedSentence> {
    if passage.entities.is_empty() {
        return Ok(passage.clone());
    }
    let vocab = Vocab::standard();
    let mut order: Vec<&str> = Vec::new();
    let mut mentions = passage.entities.clone();
    mentions.sort_by_key(|m| m.start);
    for m in &mentions {
        if !order.iter().any(|e| *e == m.entity) {
            order.push(&m.entity);
        }
    }
    if order.len() > ALLOWED_LETTERS.len() {
        return Err(Error::Input(format!(
            "{} distinct entities but only {} placeholder letters",
            order.len(),
            ALLOWED_LETTERS.len()
        )));
    }
    let letter_of = |entity: &str| -> &'static str {
        let idx = order.iter().position(|e| *e == entity).unwrap();
        ALLOWED_LETTERS[idx]
    };

    // old position -> new position (span members map to the letter slot)
    let mut pos_map: Vec<usize> = Vec::with_capacity(passage.len());
    let mut surface: Vec<String> = Vec::new();
    let mut new_mentions: Vec<EntityMention> = Vec::new();
    let mut i = 0usize;
    while i < passage.len() {
        if let Some(m) = mentions.iter().find(|m| m.start == i) {
            let new_pos = surface.len();
            surface.push(letter_of(&m.entity).to_string());
            new_mentions.push(EntityMention {
                start: new_pos,
                len: 1,
                entity: m.entity.clone(),
            });
            for _ in 0..m.len {
                pos_map.push(new_pos);
            }
            i += m.len;
        } else {
            pos_map.push(surface.len());
            surface.push(passage.surface[i].clone());
            i += 1;
        }
    }

    let triplets = passage
        .triplets
        .iter()
        .map(|t| Triplet {
            s: pos_map[t.s],
            o: pos_map[t.o],
            ..*t
        })
        .collect();
    let tokens = surface.iter().map(|w| vocab.id_of(w)).collect();
    let out = AnnotatedSentence {
        tokens,
        surface,
        triplets,
        entities: new_mentions,
    };
    out.validate()?;
    Ok(out)
}

/// Delete stopword tokens and remap triplet positions. Triplets whose head
/// or tail token was removed are dropped; the count is returned.
pub fn strip_function_words(passage: &AnnotatedSentence) -> (AnnotatedSentence, usize) {
    let vocab = Vocab::standard();
    let stop: HashSet<&str> = STOPWORDS.iter().copied().collect();
    let mut pos_map: Vec<Option<usize>> = Vec::with_capacity(passage.len());
    let mut surface = Vec::new();
    for w in &passage.surface {
        if stop.contains(w.as_str()) {
            pos_map.push(None);
        } else {
            pos_map.push(Some(surface.len()));
            surface.push(w.clone());
        }
    }
    let mut dropped = 0usize;
    let mut triplets = Vec::new();
    for t in &passage.triplets {
        match (pos_map[t.s], pos_map[t.o]) {
            (Some(s), Some(o)) => triplets.push(Triplet { s, o, ..*t }),
            _ => dropped += 1,
        }
    }
    let entities = passage
        .entities
        .iter()
        .filter_map(|m| {
            pos_map[m.start].map(|start| EntityMention {
                start,
                len: 1,
                entity: m.entity.clone(),
            })
        })
        .collect();
    let tokens = surface.iter().map(|w| vocab.id_of(w)).collect();
    (
        AnnotatedSentence {
            tokens,
            surface,
            triplets,
            entities,
        },
        dropped,
    )
}
