//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured values. Every oracle here is an independent straight-line
//! reimplementation, kept apart from the library code paths it checks.
//!
//! Run with `cargo test -p msr2-core --test acceptance`.

use msr2_core::clients::mock::ScriptedGenerator;
use msr2_core::clients::{ClientError, Judge};
use msr2_core::eval::{accuracy, macro_prf, EvalRecord};
use msr2_core::grpo::toy_env::{uniform_policy_baseline, ToyEnv};
use msr2_core::grpo::{
    finite_difference_grad, group_advantages, grpo_loss, near_clip_kink, policy_grad, train_toy,
    Episode, EpisodeStep, GroupSample, GrpoConfig, KlEstimator, KlNorm, TokenRecord, ToyPolicy,
    ToyTrainConfig, TrajectorySample,
};
use msr2_core::retrieval::{
    bm25_search, build_lexical, build_source, dense_search, tokenize, Bm25Params, CorpusRecord,
    DenseMode, GraphParams, HashEmbedder, IndexStrategy, SourceConfig, SourceRegistry, VectorStore,
};
use msr2_core::reward::{
    outcome_reward, rank_correlations, total_reward, IntervalTable, SentenceValue,
};
use msr2_core::rollout::{run_rollout, RolloutConfig, Terminal, RETHINK_MESSAGE};
use msr2_core::{fixtures, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

// ---------------------------------------------------------------------------
// shared random-instance builders
// ---------------------------------------------------------------------------

fn random_policy(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> ToyPolicy {
    let weights: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.5..1.5))
        .collect();
    ToyPolicy::from_weights(n_states, n_actions, weights)
}

fn random_episodes(
    rng: &mut ChaCha8Rng,
    old_policy: &ToyPolicy,
    group: usize,
    n_states: usize,
    n_actions: usize,
) -> Vec<Episode> {
    (0..group)
        .map(|_| {
            let len = rng.gen_range(4..14);
            let mut tokens: Vec<TokenRecord> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        TokenRecord::Environment
                    } else {
                        let state = rng.gen_range(0..n_states);
                        let action = rng.gen_range(0..n_actions);
                        TokenRecord::Generated(EpisodeStep {
                            state,
                            action,
                            logp_old: old_policy.logp(state, action),
                        })
                    }
                })
                .collect();
            if !tokens
                .iter()
                .any(|t| matches!(t, TokenRecord::Generated(_)))
            {
                let state = rng.gen_range(0..n_states);
                let action = rng.gen_range(0..n_actions);
                tokens.push(TokenRecord::Generated(EpisodeStep {
                    state,
                    action,
                    logp_old: old_policy.logp(state, action),
                }));
            }
            Episode {
                reward: rng.gen_range(0.0..1.0),
                tokens,
            }
        })
        .collect()
}

fn random_group_sample(rng: &mut ChaCha8Rng, group: usize, with_kl_ref: bool) -> GroupSample {
    let trajectories = (0..group)
        .map(|_| {
            let n = rng.gen_range(3..16);
            let mut gen_mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
            if !gen_mask.iter().any(|&m| m) {
                gen_mask[0] = true;
            }
            TrajectorySample {
                reward: rng.gen_range(0.0..1.0),
                logp_new: (0..n).map(|_| -rng.gen_range(0.01..4.0)).collect(),
                logp_old: (0..n).map(|_| -rng.gen_range(0.01..4.0)).collect(),
                logp_ref: (0..n).map(|_| -rng.gen_range(0.01..4.0)).collect(),
                gen_mask,
                kl_ref: with_kl_ref.then(|| (0..n).map(|_| rng.gen_range(0.0..2.0)).collect()),
            }
        })
        .collect();
    GroupSample { trajectories }
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradient vs central finite differences
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_gradient_matches_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let config = GrpoConfig {
        kl_estimator: KlEstimator::Exact,
        ..Default::default()
    };

    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    while checked < 100 {
        let n_states = rng.gen_range(3..8);
        let n_actions = rng.gen_range(4..=32);
        let policy = random_policy(&mut rng, n_states, n_actions);
        let ref_policy = random_policy(&mut rng, n_states, n_actions);
        let old_policy = random_policy(&mut rng, n_states, n_actions);
        let episodes = random_episodes(&mut rng, &old_policy, 8, n_states, n_actions);
        // Finite differences are meaningless within a step of a clip kink.
        if near_clip_kink(&policy, &episodes, config.eps_clip, 1e-3) {
            continue;
        }

        let analytic = policy_grad(&policy, &ref_policy, &episodes, &config).unwrap();
        let fd = finite_difference_grad(&policy, &ref_policy, &episodes, &config, 1e-5).unwrap();
        let scale = analytic.iter().map(|g| g.abs()).fold(1e-8, f64::max);
        let err = analytic
            .iter()
            .zip(&fd)
            .map(|(a, f)| (a - f).abs() / scale)
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "instance {checked}: max relative error {err}");
        worst = worst.max(err);
        checked += 1;
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:.2?}, budget 60 s");
    println!(
        "PASS criterion 1: gradient check on {checked} random groups, \
         worst relative error {worst:.2e}, {elapsed:.2?}"
    );
}

// ---------------------------------------------------------------------------
// criterion 2: masking exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_environment_tokens_never_move_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let config = GrpoConfig::default();
    for trial in 0..1_000 {
        let group = random_group_sample(&mut rng, 8, false);
        let base = grpo_loss(&group, &config).unwrap().objective;

        let mut perturbed = group.clone();
        for sample in &mut perturbed.trajectories {
            for t in 0..sample.gen_mask.len() {
                if !sample.gen_mask[t] {
                    sample.logp_new[t] = rng.gen_range(-1e9..1e9);
                    sample.logp_old[t] = rng.gen_range(-1e9..1e9);
                    sample.logp_ref[t] = rng.gen_range(-1e9..1e9);
                }
            }
        }
        let after = grpo_loss(&perturbed, &config).unwrap().objective;
        assert_eq!(
            base.to_bits(),
            after.to_bits(),
            "trial {trial}: objective moved under environment-token perturbation"
        );
    }
    println!("PASS criterion 2: 1000 environment-token perturbations, objective bitwise equal");
}

// ---------------------------------------------------------------------------
// criterion 3: advantage normalization
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_advantages_center_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC3);
    for _ in 0..10_000 {
        let g = rng.gen_range(2..=16);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(0.0..1.0)).collect();
        let adv = group_advantages(&rewards, 1e-6).unwrap();
        let sum: f64 = adv.iter().sum();
        assert!(
            sum.abs() <= 1e-12 * g as f64,
            "group of {g}: advantage sum {sum}"
        );
    }
    // Degenerate all-equal groups yield exactly zero advantages.
    for value in [0.0, 0.25, 1.0] {
        let adv = group_advantages(&[value; 8], 1e-6).unwrap();
        assert!(adv.iter().all(|&a| a == 0.0));
    }
    println!("PASS criterion 3: 10000 groups centered within 1e-12*G; degenerate groups all-zero");
}

// ---------------------------------------------------------------------------
// criterion 4: objective equals an independent naive implementation
// ---------------------------------------------------------------------------

/// Straight-line reimplementation of the objective, kept deliberately naive.
fn naive_objective(group: &GroupSample, config: &GrpoConfig) -> f64 {
    let rewards: Vec<f64> = group.trajectories.iter().map(|t| t.reward).collect();
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let variance = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g;
    let denom = variance.sqrt() + config.eps_std;

    let mut surrogate = 0.0;
    let mut kl_total = 0.0;
    for traj in &group.trajectories {
        let advantage = (traj.reward - mean) / denom;
        let z = traj.gen_mask.iter().filter(|&&m| m).count() as f64;
        let mut inner = 0.0;
        let mut kl_inner = 0.0;
        for t in 0..traj.gen_mask.len() {
            if !traj.gen_mask[t] {
                continue;
            }
            let ratio = (traj.logp_new[t] - traj.logp_old[t]).exp();
            let lo = 1.0 - config.eps_clip;
            let hi = 1.0 + config.eps_clip;
            let clipped = if ratio < lo {
                lo
            } else if ratio > hi {
                hi
            } else {
                ratio
            };
            let a = ratio * advantage;
            let b = clipped * advantage;
            inner += if a < b { a } else { b };
            kl_inner += match config.kl_estimator {
                KlEstimator::Exact => traj.kl_ref.as_ref().unwrap()[t],
                KlEstimator::SampledK3 => {
                    let d = traj.logp_ref[t] - traj.logp_new[t];
                    d.exp() - d - 1.0
                }
            };
        }
        surrogate += inner / z;
        kl_total += match config.kl_norm {
            KlNorm::MaskedMean => kl_inner / z,
            KlNorm::MaskedSum => kl_inner,
        };
    }
    surrogate / g - config.beta_kl * (kl_total / g)
}

#[test]
fn acceptance_04_objective_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let mut worst: f64 = 0.0;
    for trial in 0..1_000 {
        let exact = trial % 2 == 0;
        let config = GrpoConfig {
            kl_estimator: if exact {
                KlEstimator::Exact
            } else {
                KlEstimator::SampledK3
            },
            kl_norm: if trial % 3 == 0 {
                KlNorm::MaskedSum
            } else {
                KlNorm::MaskedMean
            },
            beta_kl: if trial % 5 == 0 { 0.0 } else { 1e-3 },
            ..Default::default()
        };
        let group_size = rng.gen_range(2..=8);
        let group = random_group_sample(&mut rng, group_size, exact);
        let got = grpo_loss(&group, &config).unwrap().objective;
        let expected = naive_objective(&group, &config);
        let err = (got - expected).abs();
        assert!(err < 1e-10, "trial {trial}: |{got} - {expected}| = {err}");
        worst = worst.max(err);
    }
    println!("PASS criterion 4: 1000 instances vs naive objective, worst |diff| {worst:.2e}");
}

// ---------------------------------------------------------------------------
// criterion 5: BM25 vs brute-force oracle
// ---------------------------------------------------------------------------

/// Full-scan BM25 with the same idf variant, recomputed from raw tokens.
fn bm25_oracle(records: &[CorpusRecord], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let docs: Vec<Vec<String>> = records.iter().map(|r| tokenize(&r.text)).collect();
    let n = records.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();

    let mut out = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let mut score = 0.0;
        for term in &terms {
            let tf = docs[i].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let dl = docs[i].len() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if score > 0.0 {
            out.push((record.doc_id.clone(), score));
        }
    }
    out.sort_by(|a, b2| b2.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b2.0)));
    out
}

#[test]
fn acceptance_05_bm25_matches_brute_force_oracle() {
    let records = fixtures::synthetic_corpus(50, 20250501);
    let queries = fixtures::synthetic_queries(20, 20250502);
    let params = Bm25Params::default();
    let index = build_lexical(&records).unwrap();

    let mut compared = 0usize;
    for query in &queries {
        let hits = bm25_search(&index, params, query, records.len()).unwrap();
        let expected = bm25_oracle(&records, query, params.k1, params.b);
        assert_eq!(hits.len(), expected.len(), "query {query:?}: result count");
        for (hit, (doc_id, score)) in hits.iter().zip(&expected) {
            assert_eq!(&records[hit.doc as usize].doc_id, doc_id, "query {query:?}");
            assert!(
                (hit.score - score).abs() < 1e-9,
                "query {query:?}: {} vs {score}",
                hit.score
            );
            compared += 1;
        }
    }
    println!(
        "PASS criterion 5: 50-doc fixture, 20 queries, {compared} scored docs \
         match the oracle within 1e-9 in identical order"
    );
}

// ---------------------------------------------------------------------------
// criterion 6: dense search (exact equality + approximate recall)
// ---------------------------------------------------------------------------

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

#[test]
fn acceptance_06_dense_exact_equals_brute_force_and_graph_recall_holds() {
    let started = Instant::now();
    let dim = 64;
    let vectors = random_unit_vectors(5_000, dim, 0xACC6);
    let queries = random_unit_vectors(100, dim, 0xACC7);
    let store = VectorStore::build(vectors.clone(), dim, Some(GraphParams::default())).unwrap();

    // The store renormalizes; the oracle does the same so scores are
    // directly comparable.
    let renorm = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let normalized: Vec<Vec<f64>> = vectors.iter().map(|v| renorm(v)).collect();

    let mut recall_hits = 0usize;
    let mut recall_total = 0usize;
    for query in &queries {
        let qn = renorm(query);
        let mut oracle: Vec<(u32, f64)> = normalized
            .iter()
            .enumerate()
            .map(|(i, v)| (i as u32, v.iter().zip(&qn).map(|(a, b)| a * b).sum()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

        let exact = dense_search(&store, query, 10, DenseMode::Exact).unwrap();
        for (hit, (doc, score)) in exact.iter().zip(&oracle) {
            assert_eq!(hit.doc, *doc, "exact ranking diverged from brute force");
            assert_eq!(hit.score, *score);
        }

        let approx = dense_search(&store, query, 10, DenseMode::Approx).unwrap();
        let approx_ids: Vec<u32> = approx.iter().map(|h| h.doc).collect();
        for (doc, _) in oracle.iter().take(10) {
            recall_total += 1;
            if approx_ids.contains(doc) {
                recall_hits += 1;
            }
        }
    }
    let recall = recall_hits as f64 / recall_total as f64;
    assert!(recall >= 0.95, "recall@10 = {recall}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:.2?}, budget 120 s");
    println!(
        "PASS criterion 6: exact = brute force on 5000 vectors x 100 queries; \
         approximate recall@10 = {recall:.4}, {elapsed:.2?}"
    );
}

// ---------------------------------------------------------------------------
// criterion 7: rollout golden traces
// ---------------------------------------------------------------------------

fn golden_corpus_statutes() -> Vec<CorpusRecord> {
    vec![
        CorpusRecord::new(
            "art-196",
            "credit card fraud with especially huge amounts carries aggravated terms",
        ),
        CorpusRecord::new(
            "art-264",
            "theft of public or private property with threshold amounts by region",
        ),
        CorpusRecord::new(
            "art-266",
            "fraud of public or private property where amount huge raises the baseline term",
        ),
    ]
}

fn golden_corpus_guidelines() -> Vec<CorpusRecord> {
    vec![
        CorpusRecord::new(
            "hunan-fraud",
            "hunan guidance treats fraud amount huge at fifty thousand yuan",
        ),
        CorpusRecord::new(
            "zhejiang-theft",
            "zhejiang guidance on theft thresholds and repeated offenses",
        ),
    ]
}

fn golden_registry() -> SourceRegistry {
    let embedder = Arc::new(HashEmbedder::new(64));
    let statutes = build_source(
        SourceConfig::new("statutes", IndexStrategy::Lexical, 64),
        golden_corpus_statutes(),
        embedder.as_ref(),
    )
    .unwrap();
    let guidelines = build_source(
        SourceConfig::new("guidelines", IndexStrategy::Lexical, 64),
        golden_corpus_guidelines(),
        embedder.as_ref(),
    )
    .unwrap();
    SourceRegistry::builder("statutes", embedder)
        .alias("statute", "statutes")
        .alias("guideline", "guidelines")
        .source(statutes)
        .source(guidelines)
        .build()
        .unwrap()
}

const GOLDEN_FACT: &str =
    "the defendant obtained fifty thousand yuan by fabricating investment returns";

fn golden_scripts() -> [(&'static str, Vec<String>, bool); 3] {
    [
        (
            "answer_first",
            vec!["<reasoning>The baseline term follows directly.</reasoning><answer>36</answer>"
                .to_string()],
            false,
        ),
        (
            "search_then_answer",
            vec![
                "<reasoning>Check the fraud statute first.</reasoning><search><statute>fraud amount huge</statute></search>".to_string(),
                "<factors>1. amount huge\n2. confession</factors><answer>3 years</answer>"
                    .to_string(),
            ],
            false,
        ),
        (
            "never_valid",
            vec!["I keep thinking without ever acting.".to_string()],
            true,
        ),
    ]
}

fn run_golden(script: &[String], cycling: bool) -> Trajectory {
    let generator = if cycling {
        ScriptedGenerator::cycling(script.to_vec())
    } else {
        ScriptedGenerator::new(script.to_vec())
    };
    let registry = golden_registry();
    run_rollout(GOLDEN_FACT, &generator, &registry, &RolloutConfig::default()).unwrap()
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.trace"))
}

/// Regenerates the golden trace files. Run explicitly:
/// `cargo test -p msr2-core --test acceptance regenerate -- --ignored`
#[test]
#[ignore]
fn regenerate_golden_traces() {
    std::fs::create_dir_all(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")).unwrap();
    for (name, script, cycling) in golden_scripts() {
        let trace = serde_json::to_string(&run_golden(&script, cycling)).unwrap();
        std::fs::write(golden_path(name), trace).unwrap();
        println!("wrote {name}");
    }
}

#[test]
fn acceptance_07_rollout_golden_traces_replay_byte_identically() {
    for (name, script, cycling) in golden_scripts() {
        let first = serde_json::to_string(&run_golden(&script, cycling)).unwrap();
        let second = serde_json::to_string(&run_golden(&script, cycling)).unwrap();
        assert_eq!(first, second, "{name}: replay is not bit-reproducible");

        let golden = std::fs::read_to_string(golden_path(name))
            .unwrap_or_else(|e| panic!("{name}: golden trace missing ({e})"));
        assert_eq!(first, golden.trim_end(), "{name}: trace diverged from golden file");
    }

    // Substance checks on top of byte identity.
    let answer_first = run_golden(&golden_scripts()[0].1, false);
    assert_eq!(answer_first.terminal, Terminal::Answered);
    assert_eq!(answer_first.budget_used, 1);
    assert_eq!(answer_first.search_count, 0);

    let searched = run_golden(&golden_scripts()[1].1, false);
    assert_eq!(searched.terminal, Terminal::Answered);
    assert_eq!(searched.budget_used, 2);
    // Evidence must equal the independent BM25 oracle over the same corpus.
    let oracle = bm25_oracle(&golden_corpus_statutes(), "fraud amount huge", 1.2, 0.75);
    let expected_ids: Vec<&str> = oracle.iter().take(3).map(|(id, _)| id.as_str()).collect();
    let got_ids: Vec<&str> = searched.evidence[0].iter().map(|e| e.doc_id.as_str()).collect();
    assert_eq!(got_ids, expected_ids);
    for (evidence, (_, score)) in searched.evidence[0].iter().zip(&oracle) {
        assert!((evidence.score - score).abs() < 1e-9);
    }

    let exhausted = run_golden(&golden_scripts()[2].1, true);
    assert_eq!(exhausted.terminal, Terminal::BudgetExhausted);
    assert_eq!(exhausted.budget_used, 8);
    assert_eq!(
        exhausted.rendered().matches(RETHINK_MESSAGE).count(),
        8,
        "all eight turns must append the exact rethink message"
    );
    println!(
        "PASS criterion 7: three golden traces byte-identical; rethink message exact; budget 8"
    );
}

// ---------------------------------------------------------------------------
// criterion 8: reward algebra over the full grid
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_reward_algebra_grid() {
    let grid: Vec<f64> = (0..=20).map(|i| f64::from(i) * 0.05).collect();
    let mut checked = 0usize;
    for &lambda in &grid {
        for &process in &grid {
            for outcome in [0u8, 1u8] {
                let total = total_reward(outcome, process, lambda);
                let expected = (1.0 - lambda) * f64::from(outcome) + lambda * process;
                assert_eq!(total, expected);
                assert!((0.0..=1.0).contains(&total));
                // Monotone in the outcome.
                assert!(total_reward(1, process, lambda) >= total_reward(0, process, lambda));
                checked += 1;
            }
            // Monotone in the process reward.
            if process + 0.05 <= 1.0 + 1e-12 {
                assert!(
                    total_reward(1, (process + 0.05).min(1.0), lambda)
                        >= total_reward(1, process, lambda)
                );
            }
        }
    }
    // Named substitution: O=1, P=0.8, lambda=0.2 -> 0.96.
    assert!((total_reward(1, 0.8, 0.2) - 0.96).abs() < 1e-15);
    assert_eq!(total_reward(0, 0.0, 0.35), 0.0);
    assert_eq!(total_reward(1, 1.0, 0.8), 1.0);
    println!("PASS criterion 8: reward algebra grid, {checked} points at 0.05 resolution");
}

// ---------------------------------------------------------------------------
// criterion 9: toy end-to-end learning with ablation
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_toy_training_learns_to_route() {
    let started = Instant::now();
    let env = ToyEnv::default();
    let registry = env.build_registry().unwrap();

    let baseline = uniform_policy_baseline(&env, &registry, 2_000, 0xACC9).unwrap();
    assert!(
        (baseline - 0.25).abs() <= 0.05,
        "uniform baseline {baseline} outside 0.25 +/- 0.05"
    );

    let window = 20;
    let config = ToyTrainConfig::default();
    assert_eq!(config.grpo.group_size, 8);
    assert_eq!(config.lambda_r, 0.2);
    assert_eq!(config.steps, 500);

    let mut policy = env.fresh_policy();
    let curve = train_toy(&env, &mut policy, &registry, &config).unwrap();
    let reached = curve.first_step_reaching(0.9, window);
    assert!(
        reached.is_some(),
        "default run never reached trailing mean reward 0.9 within {} steps",
        config.steps
    );

    let ablation_config = ToyTrainConfig {
        lambda_r: 0.0,
        ..config.clone()
    };
    let ablation_env = ToyEnv::with_lambda(0.0);
    let mut ablation_policy = ablation_env.fresh_policy();
    let ablation_curve = train_toy(&ablation_env, &mut ablation_policy, &registry, &ablation_config)
        .unwrap();
    let ablation_reached = ablation_curve.first_step_reaching(0.9, window);

    // Archive both curves next to the test artifacts.
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("toy_training");
    std::fs::create_dir_all(&out_dir).unwrap();
    curve.write_csv(&out_dir.join("lambda_0.2.csv")).unwrap();
    ablation_curve.write_csv(&out_dir.join("lambda_0.0.csv")).unwrap();

    let slower_or_lower = match (reached, ablation_reached) {
        (Some(main), Some(ablation)) => ablation > main,
        (Some(_), None) => true,
        _ => false,
    };
    assert!(
        slower_or_lower,
        "process-reward ablation should converge slower or lower \
         (default reached at {reached:?}, ablation at {ablation_reached:?})"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:.2?}, budget 10 min");
    println!(
        "PASS criterion 9: uniform baseline {baseline:.4}; default run reached 0.9 at step \
         {:?} (final trailing {:.3}); no-process-reward ablation at {:?} (final trailing {:.3}); \
         curves in {}; {elapsed:.2?}",
        reached.unwrap(),
        curve.final_trailing_mean(window),
        ablation_reached,
        ablation_curve.final_trailing_mean(window),
        out_dir.display()
    );
}

// ---------------------------------------------------------------------------
// criterion 10: metrics cross-check
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_accuracy_equals_mean_outcome_reward() {
    let table = IntervalTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCA);
    let records: Vec<EvalRecord> = (0..500)
        .map(|i| {
            let gold = SentenceValue::new(rng.gen_range(0.5..240.0)).unwrap();
            let pred = if rng.gen_bool(0.1) {
                None
            } else if rng.gen_bool(0.5) {
                Some(gold)
            } else {
                Some(SentenceValue::new(rng.gen_range(0.5..240.0)).unwrap())
            };
            EvalRecord {
                case_id: format!("case-{i}"),
                gold_months: gold,
                pred_months: pred,
            }
        })
        .collect();

    let acc = accuracy(&records, &table).unwrap();
    let mean_outcome: f64 = records
        .iter()
        .map(|r| f64::from(outcome_reward(r.pred_months, r.gold_months, &table)))
        .sum::<f64>()
        / records.len() as f64;
    assert!(
        (acc - mean_outcome).abs() < 1e-12,
        "accuracy {acc} vs mean outcome {mean_outcome}"
    );

    // Hand-computed macro fixture: confusion [[2,1],[0,3]] padded to 10.
    let sv = |m: f64| SentenceValue::new(m).unwrap();
    let fixture = vec![
        ("a", sv(3.0), Some(sv(2.0))),
        ("b", sv(4.0), Some(sv(5.0))),
        ("c", sv(5.0), Some(sv(8.0))),
        ("d", sv(7.0), Some(sv(7.5))),
        ("e", sv(8.0), Some(sv(8.5))),
        ("f", sv(9.0), Some(sv(7.0))),
    ];
    let fixture: Vec<EvalRecord> = fixture
        .into_iter()
        .map(|(id, gold_months, pred_months)| EvalRecord {
            case_id: id.to_string(),
            gold_months,
            pred_months,
        })
        .collect();
    let prf = macro_prf(&fixture, &table).unwrap();
    assert!((prf.precision - (1.0 + 0.75) / 10.0).abs() < 1e-12);
    assert!((prf.recall - (2.0 / 3.0 + 1.0) / 10.0).abs() < 1e-12);
    assert!((prf.f1 - (0.8 + 6.0 / 7.0) / 10.0).abs() < 1e-12);
    println!(
        "PASS criterion 10: accuracy == mean outcome reward to 1e-12 on 500 records; \
         macro fixture matches hand computation"
    );
}

// ---------------------------------------------------------------------------
// criterion 11: rank correlations and the mock judge consistency protocol
// ---------------------------------------------------------------------------

/// Deterministic judge personas for the consistency re-enactment. Each one
/// reads the severity marker out of the rubric prompt and applies its own
/// deterministic distortion before replying in the answer-tag format.
struct PersonaJudge {
    distort: fn(i64) -> i64,
}

impl Judge for PersonaJudge {
    fn judge(&self, prompt: &str) -> Result<String, ClientError> {
        let severity = prompt
            .lines()
            .find_map(|line| line.strip_prefix("Case Facts: "))
            .and_then(|fact| fact.split("severity_").nth(1))
            .and_then(|rest| {
                rest.chars()
                    .take_while(char::is_ascii_digit)
                    .collect::<String>()
                    .parse::<i64>()
                    .ok()
            })
            .unwrap_or(0);
        let score = (self.distort)(severity).clamp(0, 10);
        Ok(format!("<answer>{score}</answer>"))
    }
}

#[test]
fn acceptance_11_rank_correlations_and_judge_consistency() {
    // Fixed five-element fixture.
    let (rho, tau) = rank_correlations(&[1, 2, 3, 4, 5], &[1, 3, 2, 5, 4]).unwrap();
    assert!((rho - 0.8).abs() < 1e-12, "rho {rho}");
    assert!((tau - 0.6).abs() < 1e-12, "tau {tau}");

    // Mock re-enactment of the judge consistency protocol: one factor list
    // scored by three personas over 100 cases, pairwise correlations
    // reported.
    let personas: [(&str, PersonaJudge); 3] = [
        ("judge-a", PersonaJudge { distort: |s| s }),
        (
            "judge-b",
            PersonaJudge {
                distort: |s| s + (s % 3) - 1,
            },
        ),
        (
            "judge-c",
            PersonaJudge {
                distort: |s| (s * 9) / 10 + (s % 2),
            },
        ),
    ];
    let factors = msr2_core::tag_protocol::extract_factors("- confession\n- restitution");
    let mut scores: Vec<Vec<i64>> = vec![Vec::new(); personas.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCB);
    for case in 0..100 {
        let severity = rng.gen_range(0..=10);
        let fact = format!("case {case} with severity_{severity} circumstances");
        for (idx, (_, judge)) in personas.iter().enumerate() {
            let score = msr2_core::reward::judge_factors(&fact, &factors, judge).unwrap();
            scores[idx].push(i64::from(score));
        }
    }
    println!("pairwise judge consistency over 100 mock cases:");
    for i in 0..personas.len() {
        for j in i + 1..personas.len() {
            let (rho, tau) = rank_correlations(&scores[i], &scores[j]).unwrap();
            println!(
                "  {} vs {}: rho={rho:.4} tau={tau:.4}",
                personas[i].0, personas[j].0
            );
            assert!(rho > 0.3, "{} vs {} rho {rho}", personas[i].0, personas[j].0);
            assert!(tau > 0.2, "{} vs {} tau {tau}", personas[i].0, personas[j].0);
        }
    }
    println!("PASS criterion 11: rho=0.8 tau=0.6 fixture exact; mock judges positively correlated");
}
