//! Acceptance suite: one test per release gate, each printing a
//! `[PASS] criterion N` line (run with `--nocapture` to see them all).
//!
//! The desk-scale protocol for the synthetic experiment: generate the desk
//! preset (1,000 queries, 100-200 token documents), train on the triples of
//! the first 80% of queries for at most 10 epochs, and evaluate mean
//! average precision on the held-out 20%.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use irlab_core::axioms::{
    run_suite, AxiomId, Bm25Scorer, LmJmScorer, MatcherScorer, PassageScorer, ProbeContext,
    SuiteConfig, TruncateScorer,
};
use irlab_core::classic::{Bm25Params, LmParams};
use irlab_core::diagnostics::{robustness_curve, FeatureSet};
use irlab_core::matchers::{
    pooling_words, train_pairwise, EmbeddingTable, IntConfig, IntModel, Matcher, RepConfig,
    RepModel, SimilarityKind, TrainHyper, Triple,
};
use irlab_core::metrics::{
    average_precision, evaluate_run, mean_average_precision, ndcg_at_k, precision_at_k,
    RankedList,
};
use irlab_core::rng::Rng;
use irlab_core::synthetic::{
    gen_density_match, gen_topic_match, uniform_corpus, SynthConfig, SyntheticDataset,
};
use irlab_core::tensor::grad_check;
use irlab_core::text::{Qrels, Vocabulary};

// ---- shared desk fixture: datasets and trained models ----

struct Encoded {
    vocab: Vocabulary,
    queries: Vec<(String, Vec<u32>)>,
    docs: BTreeMap<String, Vec<u32>>,
    triples: Vec<(String, String, String)>,
    data: SyntheticDataset,
}

fn encode(data: SyntheticDataset) -> Encoded {
    let token_docs: Vec<Vec<String>> = data.documents.iter().map(|(_, t)| t.clone()).collect();
    let vocab = Vocabulary::build(&token_docs, 1).unwrap();
    let queries =
        data.queries.iter().map(|(id, t)| (id.clone(), vocab.encode(t))).collect();
    let docs = data.documents.iter().map(|(id, t)| (id.clone(), vocab.encode(t))).collect();
    let triples = data.triples.clone();
    Encoded { vocab, queries, docs, triples, data }
}

fn train_query_ids(enc: &Encoded) -> BTreeSet<String> {
    let n_train = enc.queries.len() * 4 / 5;
    enc.queries.iter().take(n_train).map(|(id, _)| id.clone()).collect()
}

fn train_model<M: Matcher>(model: &mut M, enc: &Encoded, seed: u64) -> Duration {
    let train = train_query_ids(enc);
    let query_index: BTreeMap<&str, &Vec<u32>> =
        enc.queries.iter().map(|(id, t)| (id.as_str(), t)).collect();
    let triples: Vec<Triple> = enc
        .triples
        .iter()
        .filter(|(qid, _, _)| train.contains(qid))
        .map(|(qid, pos, neg)| Triple {
            query: query_index[qid.as_str()].as_slice(),
            positive: enc.docs[pos].as_slice(),
            negative: enc.docs[neg].as_slice(),
        })
        .collect();
    let hyper = TrainHyper { epochs: 8, rate: 0.01, seed, ..TrainHyper::default() };
    let started = Instant::now();
    train_pairwise(model, &triples, &hyper).expect("training converges");
    started.elapsed()
}

/// Mean average precision over the held-out 20% of queries.
fn heldout_map<M: Matcher>(model: &M, enc: &Encoded) -> f64 {
    let train = train_query_ids(enc);
    let mut run = Vec::new();
    for (qid, qtokens) in &enc.queries {
        if train.contains(qid) {
            continue;
        }
        let judged = enc.data.qrels.judged(qid).unwrap();
        let scored: Vec<(String, f64)> = judged
            .keys()
            .map(|did| (did.clone(), model.score(qtokens, &enc.docs[did]).unwrap()))
            .collect();
        run.push(RankedList::from_scores(qid.clone(), scored).unwrap());
    }
    mean_average_precision(&run, &enc.data.qrels)
}

struct Fixture {
    topic: Encoded,
    density: Encoded,
    int_on_density: IntModel,
    rep_on_topic: RepModel,
    int_on_topic: IntModel,
    rep_on_density: RepModel,
    int_density_time: Duration,
    rep_topic_time: Duration,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let topic = encode(gen_topic_match(&SynthConfig::desk(1001)));
        let density = encode(gen_density_match(&SynthConfig::desk(1002)));

        let mut rng = Rng::from_seed(2001);
        let mut int_on_density = IntModel::new(density.vocab.size(), IntConfig::default(), &mut rng);
        let int_density_time = train_model(&mut int_on_density, &density, 3001);

        let mut rep_on_topic = RepModel::new(topic.vocab.size(), RepConfig::default(), &mut rng);
        let rep_topic_time = train_model(&mut rep_on_topic, &topic, 3002);

        let mut int_on_topic = IntModel::new(topic.vocab.size(), IntConfig::default(), &mut rng);
        train_model(&mut int_on_topic, &topic, 3003);

        let mut rep_on_density = RepModel::new(density.vocab.size(), RepConfig::default(), &mut rng);
        train_model(&mut rep_on_density, &density, 3004);

        Fixture {
            topic,
            density,
            int_on_density,
            rep_on_topic,
            int_on_topic,
            rep_on_density,
            int_density_time,
            rep_topic_time,
        }
    })
}

/// Random-scorer MAP averaged over scoring seeds, on the full dataset.
fn random_baseline(enc: &Encoded, seeds: u64) -> f64 {
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut rng = Rng::from_seed(0xba5e ^ seed);
        let mut run = Vec::new();
        for (qid, _) in &enc.queries {
            let judged = enc.data.qrels.judged(qid).unwrap();
            let scored: Vec<(String, f64)> =
                judged.keys().map(|did| (did.clone(), rng.next_f64())).collect();
            run.push(RankedList::from_scores(qid.clone(), scored).unwrap());
        }
        total += mean_average_precision(&run, &enc.data.qrels);
    }
    total / seeds as f64
}

#[test]
fn criterion_1_synthetic_separation() {
    let fx = fixture();
    let int_density = heldout_map(&fx.int_on_density, &fx.density);
    let rep_topic = heldout_map(&fx.rep_on_topic, &fx.topic);
    let int_topic = heldout_map(&fx.int_on_topic, &fx.topic);
    let rep_density = heldout_map(&fx.rep_on_density, &fx.density);
    let random = (random_baseline(&fx.topic, 10) + random_baseline(&fx.density, 10)) / 2.0;

    assert!(
        fx.int_density_time < Duration::from_secs(900),
        "interaction model training took {:?}",
        fx.int_density_time
    );
    assert!(
        fx.rep_topic_time < Duration::from_secs(900),
        "representation model training took {:?}",
        fx.rep_topic_time
    );
    assert!(int_density >= 0.90, "interaction model on density: {int_density}");
    assert!(rep_topic >= 0.60, "representation model on topic: {rep_topic}");
    assert!(
        (int_topic - 0.457).abs() <= 0.08,
        "interaction model on topic should stay near random: {int_topic}"
    );
    assert!(
        (rep_density - 0.457).abs() <= 0.08,
        "representation model on density should stay near random: {rep_density}"
    );
    assert!((random - 0.457).abs() <= 0.01, "random baseline: {random}");

    println!(
        "[PASS] criterion 1: synthetic separation \
         (int/density {int_density:.3}, rep/topic {rep_topic:.3}, \
         int/topic {int_topic:.3}, rep/density {rep_density:.3}, random {random:.3}; \
         trained in {:?} / {:?})",
        fx.int_density_time, fx.rep_topic_time
    );
}

#[test]
fn trained_interaction_model_prefers_exact_query_copies() {
    // A document holding exact copies of the query terms must outscore the
    // same document with those positions rewritten to random non-query
    // tokens, once the model has learned the density task.
    let fx = fixture();
    let mut rng = Rng::from_seed(1234);
    let held_out: Vec<usize> = {
        let train = train_query_ids(&fx.density);
        fx.density
            .queries
            .iter()
            .enumerate()
            .filter(|(_, (qid, _))| !train.contains(qid))
            .map(|(i, _)| i)
            .collect()
    };
    let mut wins = 0usize;
    for &qi in held_out.iter().take(50) {
        let (_, qtokens) = &fx.density.queries[qi];
        let qset: BTreeSet<u32> = qtokens.iter().copied().collect();
        let doc = &fx.density.docs[&fx.density.data.records[qi].relevant_doc_id];
        let mut rewritten = doc.clone();
        for t in rewritten.iter_mut() {
            if qset.contains(t) {
                loop {
                    let candidate = 1 + rng.below(fx.density.vocab.size() - 1) as u32;
                    if !qset.contains(&candidate) {
                        *t = candidate;
                        break;
                    }
                }
            }
        }
        let with_copies = fx.int_on_density.score(qtokens, doc).unwrap();
        let without = fx.int_on_density.score(qtokens, &rewritten).unwrap();
        if with_copies > without {
            wins += 1;
        }
    }
    assert!(wins >= 48, "exact copies won only {wins}/50 comparisons");
}

// ---- criterion 2: gradient correctness ----

#[test]
fn criterion_2_gradient_correctness() {
    use irlab_core::tensor::{NodeId, ParamStore, Tape, Tensor, TensorError};

    type Forward = Box<dyn FnMut(&mut Tape) -> Result<NodeId, TensorError>>;

    let started = Instant::now();
    let tolerance = 1e-4;
    let eps = 1e-4;

    fn random_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect())
    }

    // Each target retries hazardous seeds (near-kink forward passes) and
    // must come out under tolerance within the retry budget.
    let check = |name: &str, build: &dyn Fn(&mut Rng) -> (ParamStore, Forward)| {
        for seed in 0..10u64 {
            let mut attempt = 0u64;
            loop {
                let mut rng = Rng::from_seed(seed.wrapping_add(attempt.wrapping_mul(7919)));
                let (mut store, mut forward) = build(&mut rng);
                let report = grad_check(&mut store, &mut forward, eps).expect("builds");
                if report.max_rel_error < tolerance {
                    break;
                }
                assert!(
                    report.tie_suspected(eps),
                    "{name} seed {seed}: error {} with no kink hazard",
                    report.max_rel_error
                );
                attempt += 1;
                assert!(attempt < 30, "{name} seed {seed}: no tie-free sample found");
            }
        }
    };

    check("dense_tanh", &|rng| {
        let mut store = ParamStore::new();
        let w = store.add("w", random_tensor(vec![3, 4], rng)).unwrap();
        let b = store.add("b", random_tensor(vec![3], rng)).unwrap();
        let x = store.add("x", random_tensor(vec![4], rng)).unwrap();
        (store, Box::new(move |tape: &mut Tape| {
            let xn = tape.read_param(x);
            let y = tape.dense(xn, w, b)?;
            let t = tape.tanh(y);
            Ok(tape.sum(t))
        }))
    });

    check("conv1d_relu_maxpool", &|rng| {
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(vec![9, 2], rng)).unwrap();
        let k = store.add("k", random_tensor(vec![3, 2, 2], rng)).unwrap();
        let kb = store.add("kb", random_tensor(vec![3], rng)).unwrap();
        (store, Box::new(move |tape: &mut Tape| {
            let xn = tape.read_param(x);
            let c = tape.conv1d(xn, k, Some(kb))?;
            let r = tape.relu(c);
            let p = tape.maxpool1d(r, 4)?;
            let t = tape.tanh(p);
            Ok(tape.sum(t))
        }))
    });

    check("conv2d_maxpool2d", &|rng| {
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(vec![6, 7, 1], rng)).unwrap();
        let k = store.add("k", random_tensor(vec![2, 3, 3, 1], rng)).unwrap();
        let kb = store.add("kb", random_tensor(vec![2], rng)).unwrap();
        (store, Box::new(move |tape: &mut Tape| {
            let xn = tape.read_param(x);
            let c = tape.conv2d(xn, k, Some(kb))?;
            let p = tape.maxpool2d(c, (2, 2))?;
            let t = tape.tanh(p);
            Ok(tape.sum(t))
        }))
    });

    check("dynamic_pools_and_row_max", &|rng| {
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(vec![5, 9, 2], rng)).unwrap();
        let m = store.add("m", random_tensor(vec![4, 6], rng)).unwrap();
        (store, Box::new(move |tape: &mut Tape| {
            let xn = tape.read_param(x);
            let p = tape.dyn_maxpool2d(xn, (3, 4))?;
            let f = tape.reshape(p, vec![24])?;
            let d = tape.dyn_maxpool1d(f, 5)?;
            let mn = tape.read_param(m);
            let r = tape.row_max(mn)?;
            let all = tape.concat(&[d, r])?;
            let t = tape.tanh(all);
            Ok(tape.sum(t))
        }))
    });

    for kind in [
        SimilarityKind::Dot,
        SimilarityKind::Cosine,
        SimilarityKind::Gaussian { sigma: 0.5 },
    ] {
        check("similarity_matrix", &|rng| {
            let mut store = ParamStore::new();
            let q = store.add("q", random_tensor(vec![3, 5], rng)).unwrap();
            let d = store.add("d", random_tensor(vec![4, 5], rng)).unwrap();
            (store, Box::new(move |tape: &mut Tape| {
                let qn = tape.read_param(q);
                let dn = tape.read_param(d);
                let s = tape.sim_matrix(qn, dn, kind)?;
                let p = tape.pad2d(s, 5, 6, kind.floor_value())?;
                let t = tape.tanh(p);
                Ok(tape.sum(t))
            }))
        });
    }

    check("embed_hinge_cosine", &|rng| {
        let mut store = ParamStore::new();
        let table = store.add("table", random_tensor(vec![7, 3], rng)).unwrap();
        let w = store.add("w", random_tensor(vec![2, 6], rng)).unwrap();
        let b = store.add("b", random_tensor(vec![2], rng)).unwrap();
        (store, Box::new(move |tape: &mut Tape| {
            let e = tape.embed(table, &[2, 5])?;
            let f = tape.reshape(e, vec![6])?;
            let y = tape.dense(f, w, b)?;
            let e2 = tape.embed(table, &[1, 6])?;
            let f2 = tape.reshape(e2, vec![6])?;
            let y2 = tape.dense(f2, w, b)?;
            let pos = tape.cosine(y, y2)?;
            let neg = tape.cosine(y2, y2)?;
            tape.hinge(pos, neg, 0.25)
        }))
    });

    check("rep_model_full", &|rng| {
        let config = RepConfig {
            embed_dim: 6,
            channels: 3,
            widths: vec![2, 3],
            hidden: 4,
            max_doc_len: 32,
        };
        let model = RepModel::new(14, config, rng);
        let store = model.store().clone();
        (store, Box::new(move |tape: &mut Tape| {
            model
                .build_score(tape, &[1, 2, 3], &[4, 5, 1, 6, 7, 2, 8, 9])
                .map_err(|e| match e {
                    irlab_core::matchers::MatchError::Tensor(t) => t,
                    other => panic!("unexpected {other}"),
                })
        }))
    });

    for row_pooling in [false, true] {
        check("int_model_full", &|rng| {
            let config = IntConfig {
                embed_dim: 6,
                channels: 2,
                kernel: 3,
                grid: (2, 3),
                hidden: 4,
                similarity: SimilarityKind::Cosine,
                row_pooling,
                max_doc_len: 32,
            };
            let model = IntModel::new(14, config, rng);
            let store = model.store().clone();
            (store, Box::new(move |tape: &mut Tape| {
                model
                    .build_score(tape, &[1, 2, 3], &[4, 5, 1, 6, 7, 2, 8, 9])
                    .map_err(|e| match e {
                        irlab_core::matchers::MatchError::Tensor(t) => t,
                        other => panic!("unexpected {other}"),
                    })
            }))
        });
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "gradient checks took {elapsed:?}");
    println!(
        "[PASS] criterion 2: gradient correctness < 1e-4 over all ops and both matchers, \
         10 seeds each ({elapsed:?})"
    );
}

// ---- criterion 3: classical rankers satisfy their constraints ----

#[test]
fn criterion_3_classical_axiom_suite() {
    for seed in [11u64, 12, 13] {
        let docs = uniform_corpus(150, 2000, (100, 200), seed);
        let ctx = ProbeContext::from_token_docs(&docs, 50, seed ^ 0xfeed);
        let config = SuiteConfig::new(200, seed ^ 0xabcd);

        let bm25 = Bm25Scorer { stats: ctx.stats.clone(), params: Bm25Params::default() };
        let report = run_suite(&bm25, &ctx, &config).unwrap();
        for axiom in [AxiomId::Tfc1, AxiomId::Tdc, AxiomId::Lnc1, AxiomId::TfLnc] {
            let s = report.for_axiom(axiom).unwrap();
            assert!(s.run >= 150, "{}: only {} probes ran", axiom.name(), s.run);
            assert_eq!(
                s.pass_rate(),
                1.0,
                "bm25 seed {seed} {}: {}/{} (tie {})",
                axiom.name(),
                s.pass,
                s.run,
                s.tie
            );
        }

        let lm = LmJmScorer { stats: ctx.stats.clone(), params: LmParams::default() };
        let report = run_suite(&lm, &ctx, &config).unwrap();
        for axiom in [AxiomId::Tfc1, AxiomId::Lnc1] {
            let s = report.for_axiom(axiom).unwrap();
            assert_eq!(
                s.pass_rate(),
                1.0,
                "lm_jm seed {seed} {}: {}/{}",
                axiom.name(),
                s.pass,
                s.run
            );
        }
    }
    println!(
        "[PASS] criterion 3: bm25 satisfies tfc1/tdc/lnc1/tf_lnc and lm_jm satisfies \
         tfc1/lnc1 at rate 1.0 (200 probes/axiom, 3 seeds)"
    );
}

// ---- criterion 4: truncation violation and passage recovery ----

#[test]
fn criterion_4_truncation_detector() {
    let docs = uniform_corpus(80, 2000, (520, 700), 21);
    let ctx = ProbeContext::from_token_docs(&docs, 50, 22);
    let mut config = SuiteConfig::new(200, 23);
    config.axioms = vec![AxiomId::Tfc1];
    config.options.edit_min_pos = 500;
    config.options.fresh_term = true;

    let truncated = TruncateScorer::new(
        Bm25Scorer { stats: ctx.stats.clone(), params: Bm25Params::default() },
        500,
    );
    let report = run_suite(&truncated, &ctx, &config).unwrap();
    let s = report.for_axiom(AxiomId::Tfc1).unwrap();
    assert!(s.run >= 150, "only {} probes ran", s.run);
    assert_eq!(s.pass_rate(), 0.0, "truncated scorer passed {} probes", s.pass);
    assert_eq!(s.tie, s.run, "expected all ties, got {} ties of {}", s.tie, s.run);

    let passage = PassageScorer::new(
        Bm25Scorer { stats: ctx.stats.clone(), params: Bm25Params::default() },
        500,
        500,
        false,
    );
    let report = run_suite(&passage, &ctx, &config).unwrap();
    let s = report.for_axiom(AxiomId::Tfc1).unwrap();
    assert!(s.run >= 150);
    assert_eq!(s.pass_rate(), 1.0, "passage scorer: {}/{}", s.pass, s.run);

    println!(
        "[PASS] criterion 4: truncation at 500 ties all beyond-cut edits (pass rate 0), \
         max passage aggregation restores pass rate 1.0"
    );
}

// ---- criterion 5: semantic-balance probes, dot vs gaussian ----

#[test]
fn criterion_5_tsfc_similarity_contrast() {
    let docs = uniform_corpus(150, 2000, (100, 200), 901);
    let ctx = ProbeContext::from_token_docs(&docs, 50, 902);

    // Untrained models over an embedding geometry with semantic clusters
    // and norm spread; same weights for both similarity functions.
    let mut fails = Vec::new();
    for kind in [SimilarityKind::Dot, SimilarityKind::Gaussian { sigma: 0.5 }] {
        let mut rng = Rng::from_seed(42);
        let table = EmbeddingTable::clustered(ctx.vocab.size(), 50, 40, &mut rng);
        let config = IntConfig { similarity: kind, ..IntConfig::default() };
        let model = IntModel::with_embeddings(table, config, &mut rng);
        let scorer = MatcherScorer { model, label: "int-untrained".to_string() };
        let mut sc = SuiteConfig::new(200, 903);
        sc.axioms = vec![AxiomId::Tsfc];
        let report = run_suite(&scorer, &ctx, &sc).unwrap();
        let s = report.for_axiom(AxiomId::Tsfc).unwrap();
        assert!(s.run >= 150, "only {} probes ran", s.run);
        fails.push((s.fail + s.tie, s.run));
    }
    let (dot_fails, dot_run) = fails[0];
    let (gauss_fails, _) = fails[1];
    assert!(
        2 * dot_fails > dot_run,
        "dot product should fail a majority: {dot_fails}/{dot_run}"
    );
    assert!(
        gauss_fails < dot_fails,
        "gaussian should fail strictly fewer: {gauss_fails} vs {dot_fails}"
    );
    println!(
        "[PASS] criterion 5: semantic-balance probes fail {dot_fails}/{dot_run} under dot \
         product and {gauss_fails} under gaussian sigma=0.5"
    );
}

// ---- criterion 6: metrics against a brute-force oracle ----

mod brute {
    //! Direct-definition evaluator, independent of the library path.
    use std::collections::BTreeMap;

    pub struct Instance {
        /// `(doc id, score)` as retrieved.
        pub retrieved: Vec<(String, f64)>,
        /// All judged docs and grades.
        pub grades: BTreeMap<String, u32>,
    }

    fn order(retrieved: &[(String, f64)]) -> Vec<(String, f64)> {
        let mut sorted = retrieved.to_vec();
        // Selection sort, spelled out: score descending, doc id ascending.
        for i in 0..sorted.len() {
            let mut best = i;
            for j in i + 1..sorted.len() {
                let better = sorted[j].1 > sorted[best].1
                    || (sorted[j].1 == sorted[best].1 && sorted[j].0 < sorted[best].0);
                if better {
                    best = j;
                }
            }
            sorted.swap(i, best);
        }
        sorted
    }

    pub fn p_at_k(inst: &Instance, k: usize) -> f64 {
        let sorted = order(&inst.retrieved);
        let mut hits = 0;
        for (i, (doc, _)) in sorted.iter().enumerate() {
            if i >= k {
                break;
            }
            if inst.grades.get(doc).copied().unwrap_or(0) > 0 {
                hits += 1;
            }
        }
        hits as f64 / k as f64
    }

    pub fn ndcg_at_k(inst: &Instance, k: usize) -> f64 {
        let sorted = order(&inst.retrieved);
        let mut dcg = 0.0;
        for (i, (doc, _)) in sorted.iter().take(k).enumerate() {
            let g = inst.grades.get(doc).copied().unwrap_or(0);
            dcg += (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2();
        }
        let mut ideal: Vec<u32> = inst.grades.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let mut idcg = 0.0;
        for (i, &g) in ideal.iter().take(k).enumerate() {
            idcg += (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2();
        }
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }

    pub fn average_precision(inst: &Instance) -> f64 {
        let n_rel = inst.grades.values().filter(|&&g| g > 0).count();
        if n_rel == 0 {
            return 0.0;
        }
        let sorted = order(&inst.retrieved);
        let mut hits = 0;
        let mut total = 0.0;
        for (i, (doc, _)) in sorted.iter().enumerate() {
            if inst.grades.get(doc).copied().unwrap_or(0) > 0 {
                hits += 1;
                total += hits as f64 / (i + 1) as f64;
            }
        }
        total / n_rel as f64
    }
}

#[test]
fn criterion_6_metrics_oracle() {
    let mut rng = Rng::from_seed(606);
    for case in 0..1000 {
        let n_judged = 1 + rng.below(5);
        let n_retrieved = 1 + rng.below(n_judged);
        let mut grades = BTreeMap::new();
        let mut qrels = Qrels::new();
        for d in 0..n_judged {
            let grade = rng.below(3) as u32;
            let doc = format!("d{d}");
            grades.insert(doc.clone(), grade);
            qrels.insert("q", &doc, grade);
        }
        let mut retrieved = Vec::new();
        let mut ids: Vec<usize> = (0..n_judged).collect();
        rng.shuffle(&mut ids);
        for &d in ids.iter().take(n_retrieved) {
            // Coarse scores so ties actually happen.
            let score = (rng.below(4) as f64) / 2.0;
            retrieved.push((format!("d{d}"), score));
        }

        let inst = brute::Instance { retrieved: retrieved.clone(), grades };
        let ranked = RankedList::from_scores("q".to_string(), retrieved).unwrap();
        for k in [1, 2, 3, 5, 10] {
            let lib = precision_at_k(&ranked, &qrels, k);
            let oracle = brute::p_at_k(&inst, k);
            assert!((lib - oracle).abs() <= 1e-12, "case {case} p@{k}: {lib} vs {oracle}");
            let lib = ndcg_at_k(&ranked, &qrels, k);
            let oracle = brute::ndcg_at_k(&inst, k);
            assert!((lib - oracle).abs() <= 1e-12, "case {case} ndcg@{k}: {lib} vs {oracle}");
        }
        let lib = average_precision(&ranked, &qrels);
        let oracle = brute::average_precision(&inst);
        assert!((lib - oracle).abs() <= 1e-12, "case {case} ap: {lib} vs {oracle}");
    }

    // Random-ranking MAP over the one-relevant-in-five setup.
    let mut rng = Rng::from_seed(607);
    let mut total = 0.0;
    let trials = 10_000;
    for _ in 0..trials {
        let relevant = rng.below(5);
        let mut qrels = Qrels::new();
        qrels.insert("q", &format!("d{relevant}"), 1);
        let scored: Vec<(String, f64)> =
            (0..5).map(|d| (format!("d{d}"), rng.next_f64())).collect();
        let ranked = RankedList::from_scores("q".to_string(), scored).unwrap();
        total += average_precision(&ranked, &qrels);
    }
    let map = total / trials as f64;
    assert!((map - 0.457).abs() <= 0.01, "random MAP over {trials} trials: {map}");

    println!(
        "[PASS] criterion 6: metrics match the direct-definition oracle on 1000 instances \
         (<= 1e-12) and random MAP is {map:.4}"
    );
}

// ---- criterion 7: robustness contrast ----

#[test]
fn criterion_7_robustness_contrast() {
    let mut rng = Rng::from_seed(707);
    let build = |informative: usize, noise: usize, rng: &mut Rng| -> FeatureSet {
        let mut names: Vec<String> = (0..informative).map(|i| format!("label{i}")).collect();
        names.extend((0..noise).map(|i| format!("noise{i}")));
        let mut set = FeatureSet::new(names);
        for qi in 0..300 {
            let relevant = rng.below(5);
            for di in 0..5 {
                let grade = u32::from(di == relevant);
                let mut row = vec![grade as f64; informative];
                row.extend((0..noise).map(|_| rng.uniform(-1.0, 1.0)));
                set.push_row(&format!("q{qi:04}"), &format!("q{qi:04}-d{di}"), grade, &row)
                    .unwrap();
            }
        }
        set
    };
    let split = |set: &FeatureSet| -> BTreeSet<String> {
        let all: Vec<String> = set.query_id_set().into_iter().collect();
        all[..all.len() / 2].iter().cloned().collect()
    };

    let concentrated = build(1, 9, &mut rng);
    let result = robustness_curve(&concentrated, &split(&concentrated), 1e-3, false).unwrap();
    let full = result.curve.y_at_index(0);
    let after_one = result.curve.y_at_index(1);
    assert!(full > 0.95, "concentrated full metric: {full}");
    assert!(
        full - after_one >= 0.4,
        "concentrated set should lose >= 0.4 after removing its top feature: \
         {full} -> {after_one}"
    );

    let redundant = build(10, 0, &mut rng);
    let result = robustness_curve(&redundant, &split(&redundant), 1e-3, false).unwrap();
    let full = result.curve.y_at_index(0);
    let after_five = result.curve.y_at_index(5);
    assert!(
        (full - after_five).abs() < 0.01,
        "redundant set should hold within 0.01 after five removals: {full} -> {after_five}"
    );

    println!(
        "[PASS] criterion 7: concentrated features collapse ({:.3} -> {after_one:.3}) while \
         redundant features hold within 0.01",
        result.curve.y_at_index(0)
    );
}

// ---- criterion 8: pooling-word dichotomy ----

#[test]
fn criterion_8_pooling_word_dichotomy() {
    let fx = fixture();

    // Interaction model on density data: rank pooled words by count; of the
    // top 50, each word counts as a query term when the majority of its
    // pooling events hit the pair's own query.
    let pairs: Vec<(&[u32], &[u32])> = fx
        .density
        .data
        .records
        .iter()
        .enumerate()
        .map(|(qi, r)| {
            (
                fx.density.queries[qi].1.as_slice(),
                fx.density.docs[&r.relevant_doc_id].as_slice(),
            )
        })
        .collect();
    let mut per_word: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (q, d) in &pairs {
        let qset: BTreeSet<u32> = q.iter().copied().collect();
        let trace = fx.int_on_density.score_traced(q, d).unwrap();
        for &pos in &trace.doc_pool_positions {
            let entry = per_word.entry(d[pos]).or_insert((0, 0));
            entry.0 += 1;
            if qset.contains(&d[pos]) {
                entry.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(u32, (u64, u64))> = per_word.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.0.cmp(&b.0)));
    let top50 = &ranked[..50.min(ranked.len())];
    let query_words =
        top50.iter().filter(|(_, (total, hits))| 2 * hits >= *total).count();
    let int_rate = query_words as f64 / top50.len() as f64;
    assert!(
        int_rate >= 0.70,
        "interaction model: only {query_words}/{} top pooling words are query terms",
        top50.len()
    );

    // Representation model on topic data: global top-50 overlap with the
    // planted topic vocabulary vs the per-event query-hit rate.
    let pairs: Vec<(&[u32], &[u32])> = fx
        .topic
        .data
        .records
        .iter()
        .enumerate()
        .map(|(qi, r)| {
            (
                fx.topic.queries[qi].1.as_slice(),
                fx.topic.docs[&r.relevant_doc_id].as_slice(),
            )
        })
        .collect();
    let ranked = pooling_words(&fx.rep_on_topic, &pairs).unwrap();
    let topic_vocab: BTreeSet<u32> = fx
        .topic
        .data
        .topic_vocabulary()
        .iter()
        .map(|t| fx.topic.vocab.id(t))
        .collect();
    let top50: Vec<u32> = ranked.iter().take(50).map(|&(w, _)| w).collect();
    let topic_rate =
        top50.iter().filter(|w| topic_vocab.contains(w)).count() as f64 / top50.len() as f64;
    let query_rate =
        irlab_core::matchers::pooling_query_rate(&fx.rep_on_topic, &pairs).unwrap();
    assert!(
        topic_rate >= 3.0 * query_rate,
        "representation model: topic overlap {topic_rate} not >= 3x query rate {query_rate}"
    );

    println!(
        "[PASS] criterion 8: pooling dichotomy (int top-50 query-term rate {int_rate:.2}; \
         rep topic overlap {topic_rate:.2} vs query rate {query_rate:.4})"
    );
}

// ---- criterion 9: topic recovery ----

#[test]
fn criterion_9_lda_recovery() {
    use irlab_core::topics::{fit_lda, top_words, LdaConfig};

    for seed in [91u64, 92, 93] {
        let half = 30u32;
        let mut rng = Rng::from_seed(seed);
        let docs: Vec<Vec<u32>> = (0..200)
            .map(|i| {
                let home = (i % 2) as u32;
                (0..60)
                    .map(|_| {
                        let side = if rng.next_f64() < 0.9 { home } else { 1 - home };
                        side * half + rng.below(half as usize) as u32
                    })
                    .collect()
            })
            .collect();
        let config = LdaConfig { n_topics: 2, iterations: 150, seed, ..LdaConfig::default() };
        let model = fit_lda(&docs, 2 * half as usize, &config);
        for (t, list) in top_words(&model, 10).iter().enumerate() {
            assert_eq!(list.len(), 10);
            let left = list.iter().filter(|&&w| w < half).count();
            let purity = left.max(10 - left) as f64 / 10.0;
            assert!(purity >= 0.9, "seed {seed} topic {t}: purity {purity}");
        }
    }
    println!(
        "[PASS] criterion 9: recovered topics stay within one planted vocabulary \
         (top-10 purity >= 0.9, 3 seeds)"
    );
}

// ---- criterion 10: byte-identical reruns of every command ----

fn run_cli(args: &[&str]) {
    let exe = env!("CARGO_BIN_EXE_irlab");
    let output = std::process::Command::new(exe)
        .args(args)
        .env("IRLAB_SEED", "99")
        .output()
        .expect("spawns");
    assert!(
        output.status.success(),
        "irlab {:?} failed:\n{}\n{}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Compares every file except manifest.json (which carries the timestamp).
fn assert_dirs_identical(a: &Path, b: &Path) {
    let list = |d: &Path| -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.json")
            .collect();
        names.sort();
        names
    };
    let names = list(a);
    assert_eq!(names, list(b), "directory listings differ: {a:?} vs {b:?}");
    for name in names {
        let fa = std::fs::read(a.join(&name)).unwrap();
        let fb = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between {a:?} and {b:?}");
    }
}

#[test]
fn criterion_10_cli_determinism() {
    let root = tempfile::tempdir().unwrap();
    let path = |s: &str| root.path().join(s).to_string_lossy().into_owned();

    for round in ["a", "b"] {
        let data = path(&format!("data-{round}"));
        run_cli(&[
            "gen-synthetic", "--preset", "desk-density", "--seed", "7", "--queries", "40",
            "--out", &data,
        ]);
        let topic_data = path(&format!("topic-{round}"));
        run_cli(&[
            "gen-synthetic", "--preset", "desk-topic", "--seed", "8", "--queries", "30",
            "--out", &topic_data,
        ]);

        let model = path(&format!("model-{round}"));
        run_cli(&[
            "train", "--model", "int",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--topics", &format!("{data}/topics.tsv"),
            "--triples", &format!("{data}/triples.tsv"),
            "--epochs", "2", "--seed", "5", "--out", &model,
        ]);

        let run_dir = path(&format!("run-{round}"));
        run_cli(&[
            "score",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--topics", &format!("{data}/topics.tsv"),
            "--qrels", &format!("{data}/qrels.txt"),
            "--model-dir", &model,
            "--out", &run_dir,
        ]);

        let eval_dir = path(&format!("eval-{round}"));
        run_cli(&[
            "eval",
            "--run", &format!("{run_dir}/run.txt"),
            "--qrels", &format!("{data}/qrels.txt"),
            "--cutoffs", "1,10",
            "--out", &eval_dir,
        ]);

        let ax_dir = path(&format!("axioms-{round}"));
        run_cli(&[
            "axioms", "--scorer", "bm25",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--n", "30", "--seed", "3", "--detail",
            "--out", &ax_dir,
        ]);

        let rob_dir = path(&format!("rob-{round}"));
        run_cli(&[
            "diagnose", "robustness",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--topics", &format!("{data}/topics.tsv"),
            "--qrels", &format!("{data}/qrels.txt"),
            "--features", "classic", "--seed", "4",
            "--out", &rob_dir,
        ]);

        let pool_dir = path(&format!("pool-{round}"));
        run_cli(&[
            "diagnose", "pooling",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--topics", &format!("{data}/topics.tsv"),
            "--qrels", &format!("{data}/qrels.txt"),
            "--model-dir", &model,
            "--out", &pool_dir,
        ]);

        let pos_dir = path(&format!("pos-{round}"));
        run_cli(&[
            "diagnose", "positions",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--topics", &format!("{data}/topics.tsv"),
            "--qrels", &format!("{data}/qrels.txt"),
            "--threshold", "100",
            "--out", &pos_dir,
        ]);

        let lda_dir = path(&format!("lda-{round}"));
        run_cli(&[
            "lda",
            "--corpus", &format!("{data}/corpus.tsv"),
            "--k", "2", "--iters", "20", "--seed", "6",
            "--out", &lda_dir,
        ]);

        let ov_dir = path(&format!("overlap-{round}"));
        run_cli(&[
            "diagnose", "overlap",
            "--ranked", &format!("{pool_dir}/pooling.csv"),
            "--reference", &format!("{lda_dir}/topics.json"),
            "--max-n", "100",
            "--out", &ov_dir,
        ]);

        let gc_dir = path(&format!("gc-{round}"));
        run_cli(&["grad-check", "--seeds", "2", "--seed", "9", "--out", &gc_dir]);
    }

    for dir in [
        "data", "topic", "model", "run", "eval", "axioms", "rob", "pool", "pos", "lda",
        "overlap", "gc",
    ] {
        assert_dirs_identical(
            &root.path().join(format!("{dir}-a")),
            &root.path().join(format!("{dir}-b")),
        );
    }
    println!(
        "[PASS] criterion 10: every command's rerun produced byte-identical data outputs"
    );
}

// ---- library-level sanity that the suite relies on ----

#[test]
fn evaluate_run_reports_the_table_layout() {
    let mut qrels = Qrels::new();
    qrels.insert("q1", "d1", 1);
    let run = vec![RankedList::from_scores(
        "q1".to_string(),
        vec![("d1".to_string(), 2.0), ("d2".to_string(), 1.0)],
    )
    .unwrap()];
    let report = evaluate_run(&run, &qrels, &[1, 10]).unwrap();
    assert_eq!(report.metric_names, vec!["ndcg@1", "ndcg@10", "p@1", "p@10", "ap"]);
}
