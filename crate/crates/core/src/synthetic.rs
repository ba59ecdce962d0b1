//! Seeded synthetic bitexts with known structure, used by tests and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawPair;

#[derive(Clone, Debug)]
pub struct PlantedLexicon {
    pub pairs: Vec<RawPair>,
    /// `(source type, true target type)` for every source type.
    pub lexicon: Vec<(String, String)>,
}

#[derive(Clone, Copy, Debug)]
pub struct PlantedConfig {
    pub pairs: usize,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a target token is replaced by a uniformly drawn type.
    pub noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig { pairs: 500, vocab: 30, min_len: 3, max_len: 8, noise: 0.10 }
    }
}

/// Every source type `sNN` translates to one target type; the mapping is a
/// random permutation, and target order is shuffled within each pair.
pub fn planted_lexicon(config: &PlantedConfig, seed: u64) -> PlantedLexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src: Vec<String> = (0..config.vocab).map(|k| format!("s{k:02}")).collect();
    let tgt: Vec<String> = (0..config.vocab).map(|k| format!("t{k:02}")).collect();
    let mut perm: Vec<usize> = (0..config.vocab).collect();
    perm.shuffle(&mut rng);

    let mut pairs = Vec::with_capacity(config.pairs);
    for line_no in 1..=config.pairs {
        let len = rng.gen_range(config.min_len..=config.max_len);
        let source_ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..config.vocab)).collect();
        let mut target: Vec<String> = source_ids
            .iter()
            .map(|&e| {
                if rng.gen_bool(config.noise) {
                    tgt[rng.gen_range(0..config.vocab)].clone()
                } else {
                    tgt[perm[e]].clone()
                }
            })
            .collect();
        target.shuffle(&mut rng);
        pairs.push(RawPair { line_no, source: source_ids.iter().map(|&e| src[e].clone()).collect(), target });
    }
    let lexicon = (0..config.vocab).map(|e| (src[e].clone(), tgt[perm[e]].clone())).collect();
    PlantedLexicon { pairs, lexicon }
}

/// Source side carries a stem plus a bound suffix for every target word, so
/// it has exactly twice as many tokens as the target side.
pub fn morpheme_rich(pairs: usize, stems: usize, suffixes: usize, seed: u64) -> Vec<RawPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=pairs)
        .map(|line_no| {
            let len = rng.gen_range(2..=6);
            let mut source = Vec::with_capacity(2 * len);
            let mut target = Vec::with_capacity(len);
            for _ in 0..len {
                let stem = rng.gen_range(0..stems);
                source.push(format!("r{stem:02}"));
                source.push(format!("-k{}", rng.gen_range(0..suffixes)));
                target.push(format!("w{stem:02}"));
            }
            RawPair { line_no, source, target }
        })
        .collect()
}

pub fn to_text(pairs: &[RawPair]) -> (String, String) {
    let mut src = String::new();
    let mut tgt = String::new();
    for p in pairs {
        src.push_str(&p.source.join(" "));
        src.push('\n');
        tgt.push_str(&p.target.join(" "));
        tgt.push('\n');
    }
    (src, tgt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_is_seeded() {
        let a = planted_lexicon(&PlantedConfig::default(), 7);
        let b = planted_lexicon(&PlantedConfig::default(), 7);
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.pairs.len(), 500);
        assert_eq!(a.lexicon.len(), 30);
        let c = planted_lexicon(&PlantedConfig::default(), 8);
        assert_ne!(a.pairs, c.pairs);
        for p in &a.pairs {
            assert_eq!(p.source.len(), p.target.len());
        }
    }

    #[test]
    fn morpheme_rich_doubles_source() {
        let pairs = morpheme_rich(50, 10, 4, 1);
        for p in &pairs {
            assert_eq!(p.source.len(), 2 * p.target.len());
        }
    }
}
