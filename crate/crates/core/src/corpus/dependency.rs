//! Template-grammar sentences with exact dependency triplets.
//!
//! Head tokens follow the governing-node convention: subj = (verb, subj,
//! subject noun), obj = (verb, obj, object noun), mod = (modified
//! noun/verb, mod, modifier).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::banks::{
    self, ADJECTIVES, ADVERBS, ANIMALS, FRUITS, FURNITURE, MOD_NOUN_PAIRS, MONTHS, NOUNS,
    PROFESSIONS, SUBJ_VERB_PAIRS, VERBS, VERB_OBJ_PAIRS,
};
use super::vocab::Vocab;
use super::{AnnotatedSentence, Relation, Triplet};
use crate::error::Result;

/// Deterministic corpus of annotated sentences. Sentence `i` depends only
/// on `(seed, i)`, so generation parallelizes without changing output.
pub fn gen_dependency_corpus(seed: u64, n_sentences: usize) -> Result<Vec<AnnotatedSentence>> {
    let vocab = Vocab::standard();
    (0..n_sentences)
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Ok(gen_sentence(&mut rng, vocab))
        })
        .collect()
}

fn gen_sentence(rng: &mut ChaCha12Rng, vocab: &Vocab) -> AnnotatedSentence {
    let mut b = SentenceBuilder::new(vocab);
    match rng.gen_range(0..7u32) {
        0 => transitive(rng, &mut b),
        1 => intransitive_adverb(rng, &mut b),
        2 => coordination(rng, &mut b),
        3 => relative_clause(rng, &mut b),
        4 => month_adjunct(rng, &mut b),
        5 => plural_transitive(rng, &mut b),
        _ => past_transitive(rng, &mut b),
    }
    let s = b.finish();
    debug_assert!(s.validate().is_ok());
    s
}

struct SentenceBuilder<'a> {
    vocab: &'a Vocab,
    surface: Vec<String>,
    triplets: Vec<Triplet>,
}

impl<'a> SentenceBuilder<'a> {
    fn new(vocab: &'a Vocab) -> Self {
        Self {
            vocab,
            surface: Vec::new(),
            triplets: Vec::new(),
        }
    }

    /// Append a word, returning its position.
    fn word(&mut self, w: &str) -> usize {
        self.surface.push(w.to_string());
        self.surface.len() - 1
    }

    fn triplet(&mut self, s: usize, rel: Relation, o: usize) {
        self.triplets.push(Triplet::new(s, o, rel));
    }

    fn finish(self) -> AnnotatedSentence {
        let tokens = self
            .surface
            .iter()
            .map(|w| self.vocab.id_of(w))
            .collect();
        AnnotatedSentence {
            tokens,
            surface: self.surface,
            triplets: self.triplets,
            entities: vec![],
        }
    }
}

fn choose<'x>(rng: &mut ChaCha12Rng, xs: &[&'x str]) -> &'x str {
    xs[rng.gen_range(0..xs.len())]
}

/// Subject noun and verb lemma, biased toward the plausible pair bank.
fn subject_and_verb(rng: &mut ChaCha12Rng) -> (&'static str, &'static str) {
    if rng.gen_bool(0.7) {
        SUBJ_VERB_PAIRS[rng.gen_range(0..SUBJ_VERB_PAIRS.len())]
    } else {
        let pool = match rng.gen_range(0..3u32) {
            0 => &ANIMALS[..],
            1 => &PROFESSIONS[..],
            _ => &NOUNS[..],
        };
        (choose(rng, pool), choose(rng, &VERBS))
    }
}

fn object_for(rng: &mut ChaCha12Rng, verb: &str) -> &'static str {
    if rng.gen_bool(0.6) {
        let fits: Vec<&'static str> = VERB_OBJ_PAIRS
            .iter()
            .filter(|(v, _)| *v == verb)
            .map(|(_, o)| *o)
            .collect();
        if !fits.is_empty() {
            return fits[rng.gen_range(0..fits.len())];
        }
    }
    match rng.gen_range(0..5u32) {
        0 => choose(rng, &FRUITS),
        1 => choose(rng, &FURNITURE),
        _ => choose(rng, &NOUNS),
    }
}

/// Optionally emit an adjective for `noun`; the caller adds the noun and
/// then the mod triplet pointing back at the adjective position.
fn maybe_adjective(rng: &mut ChaCha12Rng, noun: &str) -> Option<&'static str> {
    if !rng.gen_bool(0.5) {
        return None;
    }
    if rng.gen_bool(0.5) {
        let fits: Vec<&'static str> = MOD_NOUN_PAIRS
            .iter()
            .filter(|(_, n)| *n == noun)
            .map(|(m, _)| *m)
            .collect();
        if !fits.is_empty() {
            return Some(fits[rng.gen_range(0..fits.len())]);
        }
    }
    Some(choose(rng, &ADJECTIVES))
}

fn noun_phrase(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder, noun: &str) -> usize {
    b.word("the");
    let adj_pos = maybe_adjective(rng, noun).map(|a| b.word(a));
    let n_pos = b.word(noun);
    if let Some(a) = adj_pos {
        b.triplet(n_pos, Relation::Mod, a);
    }
    n_pos
}

/// "the [ADJ] N V3s the [ADJ] N"
fn transitive(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj, verb) = subject_and_verb(rng);
    let obj = object_for(rng, verb);
    let s_pos = noun_phrase(rng, b, subj);
    let v_pos = b.word(&banks::verb_3sg(verb));
    let o_pos = noun_phrase(rng, b, obj);
    b.triplet(v_pos, Relation::Subj, s_pos);
    b.triplet(v_pos, Relation::Obj, o_pos);
}

/// "the N V3s ADV"
fn intransitive_adverb(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj, verb) = subject_and_verb(rng);
    let s_pos = noun_phrase(rng, b, subj);
    let v_pos = b.word(&banks::verb_3sg(verb));
    let adv = b.word(choose(rng, &ADVERBS));
    b.triplet(v_pos, Relation::Subj, s_pos);
    b.triplet(v_pos, Relation::Mod, adv);
}

/// "the N1 and the N2 VERB the N3" — shared verb, two subj triplets.
fn coordination(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj1, verb) = subject_and_verb(rng);
    let (subj2, _) = subject_and_verb(rng);
    let obj = object_for(rng, verb);
    b.word("the");
    let s1 = b.word(subj1);
    b.word("and");
    b.word("the");
    let s2 = b.word(subj2);
    let v_pos = b.word(verb);
    b.word("the");
    let o_pos = b.word(obj);
    b.triplet(v_pos, Relation::Subj, s1);
    b.triplet(v_pos, Relation::Subj, s2);
    b.triplet(v_pos, Relation::Obj, o_pos);
}

/// "the N1 that V3s the N2 V3s the N3" — N1 is subject of both verbs.
fn relative_clause(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj, verb1) = subject_and_verb(rng);
    let (_, verb2) = subject_and_verb(rng);
    let obj1 = object_for(rng, verb1);
    let obj2 = object_for(rng, verb2);
    b.word("the");
    let s_pos = b.word(subj);
    b.word("that");
    let v1 = b.word(&banks::verb_3sg(verb1));
    b.word("the");
    let o1 = b.word(obj1);
    let v2 = b.word(&banks::verb_3sg(verb2));
    b.word("the");
    let o2 = b.word(obj2);
    b.triplet(v1, Relation::Subj, s_pos);
    b.triplet(v1, Relation::Obj, o1);
    b.triplet(v2, Relation::Subj, s_pos);
    b.triplet(v2, Relation::Obj, o2);
}

/// "in MONTH the N V3s" — the month modifies the verb.
fn month_adjunct(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj, verb) = subject_and_verb(rng);
    b.word("in");
    let m_pos = b.word(choose(rng, &MONTHS));
    b.word("the");
    let s_pos = b.word(subj);
    let v_pos = b.word(&banks::verb_3sg(verb));
    b.triplet(v_pos, Relation::Subj, s_pos);
    b.triplet(v_pos, Relation::Mod, m_pos);
}

/// "the Ns VERB the Ns" — plural agreement uses the base verb form.
fn plural_transitive(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj, verb) = loop {
        // Pool nouns are not guaranteed regular; restrict to the noun bank.
        let (s, v) = subject_and_verb(rng);
        if NOUNS.contains(&s) {
            break (s, v);
        }
    };
    let obj = loop {
        let o = object_for(rng, verb);
        if NOUNS.contains(&o) {
            break o;
        }
    };
    b.word("the");
    let s_pos = b.word(&banks::plural(subj));
    let v_pos = b.word(verb);
    b.word("the");
    let o_pos = b.word(&banks::plural(obj));
    b.triplet(v_pos, Relation::Subj, s_pos);
    b.triplet(v_pos, Relation::Obj, o_pos);
}

/// "the N VPAST the N"
fn past_transitive(rng: &mut ChaCha12Rng, b: &mut SentenceBuilder) {
    let (subj, verb) = subject_and_verb(rng);
    let obj = object_for(rng, verb);
    let s_pos = noun_phrase(rng, b, subj);
    let v_pos = b.word(&banks::verb_past(verb));
    let o_pos = noun_phrase(rng, b, obj);
    b.triplet(v_pos, Relation::Subj, s_pos);
    b.triplet(v_pos, Relation::Obj, o_pos);
}
