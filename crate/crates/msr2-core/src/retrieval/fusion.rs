//! Reciprocal-rank fusion. Rank-based combination sidesteps calibrating
//! BM25 scores against cosine similarities.

/// Fuses ranked lists: `score(d) = Σ 1/(k_rrf + rank(d))` over every list
/// containing `d`, with ranks starting at 1. Output is ordered by descending
/// fused score, ties broken by ascending key.
pub fn fuse_rrf<K: Ord + Clone>(rankings: &[Vec<K>], k_rrf: usize) -> Vec<(K, f64)> {
    let mut fused: Vec<(K, f64)> = Vec::new();
    for ranking in rankings {
        for (pos, key) in ranking.iter().enumerate() {
            let contribution = 1.0 / (k_rrf + pos + 1) as f64;
            match fused.iter_mut().find(|(k, _)| k == key) {
                Some((_, score)) => *score += contribution,
                None => fused.push((key.clone(), contribution)),
            }
        }
    }
    fused.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    fused
}
