//! The desk-scale reference recipe: model and training configuration plus
//! the mixed training corpus (dependency sentences, processed
//! knowledge-graph passages, and format-practice lines).

use induction_lens_core::corpus::{
    self, gen_dependency_corpus, gen_format_practice, gen_kg_corpus, strip_function_words,
    substitute_entities, AnnotatedSentence, Vocab,
};
use induction_lens_core::model::{ModelConfig, Variant};
use induction_lens_core::trainer::{pack_sequences, TrainConfig};
use induction_lens_core::Result;

/// L=4, H=4, d=128 over the standard vocabulary; CPU-trainable.
pub fn reference_model_config() -> ModelConfig {
    ModelConfig {
        n_layers: 4,
        n_heads: 4,
        d_model: 128,
        d_head: 32,
        vocab_size: Vocab::standard().len(),
        max_seq_len: 256,
        variant: Variant::Full,
    }
}

/// 1200 steps x 4096 tokens ~ 5M tokens, checkpoint every 100 steps.
pub fn reference_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        batch_tokens: 4096,
        warmup_steps: 100,
        peak_lr: 1e-3,
        floor_lr: 1e-4,
        total_steps: 1200,
        checkpoint_interval: 100,
        grad_clip: 1.0,
    }
}

/// Sizes of the mixed corpus, in documents.
#[derive(Debug, Clone, Copy)]
pub struct MixSpec {
    pub n_dependency: usize,
    pub n_kg: usize,
    pub n_format: usize,
}

impl MixSpec {
    pub fn reference() -> Self {
        // roughly 60% dependency / 25% kg / 15% format-practice by tokens
        Self {
            n_dependency: 36_000,
            n_kg: 5_000,
            n_format: 1_200,
        }
    }
}

/// Dependency sentences, processed KG passages (letters substituted,
/// function words stripped), and format-practice docs, interleaved
/// deterministically.
pub fn build_mixed_corpus(seed: u64, spec: MixSpec) -> Result<Vec<AnnotatedSentence>> {
    let mut docs = Vec::with_capacity(spec.n_dependency + spec.n_kg + spec.n_format);
    docs.extend(gen_dependency_corpus(seed, spec.n_dependency)?);
    for p in gen_kg_corpus(seed ^ 0x4b47, spec.n_kg)? {
        let (stripped, _) = strip_function_words(&substitute_entities(&p)?);
        if !stripped.is_empty() {
            docs.push(stripped);
        }
    }
    docs.extend(gen_format_practice(seed ^ 0x464d, spec.n_format)?);
    // deterministic interleave so packed sequences mix all three kinds
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x5348);
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    docs.shuffle(&mut rng);
    Ok(docs)
}

/// Pack corpus documents into full training sequences.
pub fn pack_corpus(docs: &[AnnotatedSentence], seq_len: usize) -> Vec<Vec<u32>> {
    let token_docs: Vec<Vec<u32>> = docs.iter().map(|d| d.tokens.clone()).collect();
    pack_sequences(&token_docs, corpus::BOS, seq_len)
}

/// Held-out packed texts for the loss-reduction measure.
pub fn eval_texts(seed: u64, n_texts: usize, seq_len: usize) -> Result<Vec<Vec<u32>>> {
    let docs = build_mixed_corpus(
        seed ^ 0xE7A1,
        MixSpec {
            n_dependency: n_texts * 12,
            n_kg: n_texts * 2,
            n_format: n_texts / 2,
        },
    )?;
    let mut packed = pack_corpus(&docs, seq_len);
    packed.truncate(n_texts);
    Ok(packed)
}

/// The analysis corpus for relation tables: raw dependency sentences plus
/// processed KG passages (both carry triplets).
pub fn analysis_corpus(seed: u64, n_dep: usize, n_kg: usize) -> Result<Vec<AnnotatedSentence>> {
    let mut out = gen_dependency_corpus(seed ^ 0xA11A, n_dep)?;
    for p in gen_kg_corpus(seed ^ 0xA22A, n_kg)? {
        let (stripped, _) = strip_function_words(&substitute_entities(&p)?);
        if stripped.len() >= 3 {
            out.push(stripped);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_configs_are_consistent() {
        let mc = reference_model_config();
        mc.validate().unwrap();
        assert!(mc.vocab_size > 1000);
        let tc = reference_train_config(7);
        tc.validate().unwrap();
        let tokens = tc.total_steps as usize * tc.batch_tokens;
        assert!((4_500_000..6_000_000).contains(&tokens), "{tokens} tokens");
    }

    #[test]
    fn mixed_corpus_is_deterministic_and_mixed() {
        let spec = MixSpec {
            n_dependency: 50,
            n_kg: 10,
            n_format: 5,
        };
        let a = build_mixed_corpus(3, spec).unwrap();
        let b = build_mixed_corpus(3, spec).unwrap();
        assert_eq!(a, b);
        let packed = pack_corpus(&a, 64);
        assert!(!packed.is_empty());
        assert!(packed.iter().all(|s| s.len() == 64));
    }
}
