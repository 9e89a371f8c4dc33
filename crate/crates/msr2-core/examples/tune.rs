use msr2_core::retrieval::{dense_search, DenseMode, GraphParams, VectorStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

fn main() {
    let dim = 64;
    let vectors = random_unit_vectors(5_000, dim, 0xACC6);
    let queries = random_unit_vectors(100, dim, 0xACC7);

    for (m, ef_construction, ef_search) in [
        (16usize, 200usize, 64usize),
        (24, 200, 64),
        (32, 200, 64),
        (32, 400, 64),
        (16, 200, 96),
        (16, 200, 128),
        (24, 200, 96),
    ] {
        let params = GraphParams {
            m,
            ef_construction,
            ef_search,
            ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let store = VectorStore::build(vectors.clone(), dim, Some(params)).unwrap();
        let build = t0.elapsed();

        let mut hits = 0usize;
        let mut total = 0usize;
        let t1 = std::time::Instant::now();
        for q in &queries {
            let exact = dense_search(&store, q, 10, DenseMode::Exact).unwrap();
            let approx = dense_search(&store, q, 10, DenseMode::Approx).unwrap();
            let ids: Vec<u32> = approx.iter().map(|h| h.doc).collect();
            for e in &exact {
                total += 1;
                if ids.contains(&e.doc) {
                    hits += 1;
                }
            }
        }
        println!(
            "m={m:<3} efc={ef_construction:<4} efs={ef_search:<4} recall@10={:.4} build={build:.2?} query={:?}",
            hits as f64 / total as f64,
            t1.elapsed()
        );
    }
}
