//! Format-practice documents: "word , word : digit" lines with random
//! digits. Mixed into training corpora so the surface format of the
//! few-shot prompts (comma, colon, digit, newline) is in-distribution;
//! the digits carry no pattern, so label rules can only be learned from
//! a prompt's own examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::banks::{ANIMALS, FRUITS, FURNITURE, MONTHS, NOUNS, PROFESSIONS};
use super::vocab::Vocab;
use super::AnnotatedSentence;
use crate::error::Result;

pub fn gen_format_practice(seed: u64, n_docs: usize) -> Result<Vec<AnnotatedSentence>> {
    let vocab = Vocab::standard();
    (0..n_docs)
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(0x464d_0000 ^ i as u64);
            Ok(gen_doc(&mut rng, vocab))
        })
        .collect()
}

fn gen_doc(rng: &mut ChaCha12Rng, vocab: &Vocab) -> AnnotatedSentence {
    let pools: [&[&str]; 6] = [&FRUITS, &MONTHS, &FURNITURE, &PROFESSIONS, &ANIMALS, &NOUNS];
    let mut surface: Vec<String> = Vec::new();
    let lines = rng.gen_range(8..=14usize);
    for line in 0..lines {
        let pa = pools[rng.gen_range(0..pools.len())];
        let pb = pools[rng.gen_range(0..pools.len())];
        surface.push(pa[rng.gen_range(0..pa.len())].to_string());
        surface.push(",".to_string());
        surface.push(pb[rng.gen_range(0..pb.len())].to_string());
        surface.push(":".to_string());
        surface.push(rng.gen_range(0..10u32).to_string());
        if line + 1 < lines {
            surface.push("\n".to_string());
        }
    }
    let tokens = surface.iter().map(|w| vocab.id_of(w)).collect();
    AnnotatedSentence {
        tokens,
        surface,
        triplets: vec![],
        entities: vec![],
    }
}
