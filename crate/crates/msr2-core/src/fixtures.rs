//! Deterministic synthetic fixtures shaped like small legal corpora. Used by
//! tests, golden traces, and CLI examples; everything is seeded, so fixtures
//! regenerate identically everywhere.

use crate::retrieval::CorpusRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OFFENSES: [&str; 8] = [
    "theft", "fraud", "robbery", "bribery", "embezzlement", "smuggling", "extortion", "forgery",
];
const CIRCUMSTANCES: [&str; 8] = [
    "pickpocketing in a public place",
    "amount especially huge",
    "breaking into a residence",
    "confession and restitution",
    "recidivism within five years",
    "destructive means causing losses",
    "voluntary surrender",
    "forgiveness by the victim",
];
const REGIONS: [&str; 6] = ["hunan", "zhejiang", "sichuan", "guangdong", "shaanxi", "jilin"];

/// `n` synthetic statute-like records with ids `art-100..`, deterministic in
/// `seed`.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let offense = OFFENSES[rng.gen_range(0..OFFENSES.len())];
            let circumstance = CIRCUMSTANCES[rng.gen_range(0..CIRCUMSTANCES.len())];
            let region = REGIONS[rng.gen_range(0..REGIONS.len())];
            let amount = rng.gen_range(1..200) * 1000;
            let article = 100 + i;
            CorpusRecord::new(
                format!("art-{article}"),
                format!(
                    "article {article} on {offense} where {circumstance} applies in {region} \
                     with threshold amount {amount} yuan"
                ),
            )
        })
        .collect()
}

/// `n` short queries drawn from the same vocabulary as [`synthetic_corpus`].
pub fn synthetic_queries(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let offense = OFFENSES[rng.gen_range(0..OFFENSES.len())];
            match rng.gen_range(0..3) {
                0 => format!("{offense} threshold amount"),
                1 => {
                    let region = REGIONS[rng.gen_range(0..REGIONS.len())];
                    format!("{offense} {region} guideline")
                }
                _ => {
                    let circumstance = CIRCUMSTANCES[rng.gen_range(0..CIRCUMSTANCES.len())];
                    format!("{offense} {circumstance}")
                }
            }
        })
        .collect()
}
