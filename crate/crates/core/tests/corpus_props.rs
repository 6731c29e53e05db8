//! Property tests over the corpus generators: tokenizer round-trips,
//! triplet-position validity through every transformation, and purity in
//! (seed, config).

use induction_lens_core::corpus::{
    gen_dependency_corpus, gen_kg_corpus, strip_function_words, substitute_entities, Vocab,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dependency_sentences_roundtrip_and_validate(seed in 0u64..10_000) {
        let corpus = gen_dependency_corpus(seed, 8).unwrap();
        let vocab = Vocab::standard();
        for s in &corpus {
            s.validate().unwrap();
            prop_assert_eq!(vocab.tokenize(&s.text()).unwrap(), s.tokens.clone());
            prop_assert_eq!(vocab.detokenize(&s.tokens), s.text());
        }
    }

    #[test]
    fn kg_pipeline_preserves_validity(seed in 0u64..10_000) {
        let corpus = gen_kg_corpus(seed, 4).unwrap();
        for p in &corpus {
            p.validate().unwrap();
            let sub = substitute_entities(p).unwrap();
            sub.validate().unwrap();
            // every entity became a single reserved letter
            for m in &sub.entities {
                prop_assert_eq!(m.len, 1);
                let tok = &sub.surface[m.start];
                prop_assert!(
                    induction_lens_core::corpus::ALLOWED_LETTERS.contains(&tok.as_str())
                );
            }
            let (stripped, _) = strip_function_words(&sub);
            stripped.validate().unwrap();
            // triplets survive: entity anchors are never stopwords
            prop_assert_eq!(stripped.triplets.len(), sub.triplets.len());
        }
    }

    #[test]
    fn generation_is_pure_in_seed(seed in 0u64..10_000) {
        prop_assert_eq!(
            gen_dependency_corpus(seed, 3).unwrap(),
            gen_dependency_corpus(seed, 3).unwrap()
        );
        prop_assert_eq!(
            gen_kg_corpus(seed, 2).unwrap(),
            gen_kg_corpus(seed, 2).unwrap()
        );
    }
}

#[test]
fn substitution_assigns_same_letter_to_repeats() {
    for p in gen_kg_corpus(17, 30).unwrap() {
        let sub = substitute_entities(&p).unwrap();
        let mut by_entity: std::collections::BTreeMap<&str, &str> = Default::default();
        for m in &sub.entities {
            let letter = sub.surface[m.start].as_str();
            if let Some(prev) = by_entity.insert(m.entity.as_str(), letter) {
                assert_eq!(prev, letter, "entity {} switched letters", m.entity);
            }
        }
    }
}
