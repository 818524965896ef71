//! Latent topic model fitted by collapsed Gibbs sampling, supplying the
//! reference topic-word lists for the pooling-word overlap analysis.

use alloc::vec::Vec;

use crate::float;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct LdaConfig {
    pub n_topics: usize,
    /// Document-topic smoothing; `None` uses the conventional `50 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { n_topics: 50, alpha: None, beta: 0.01, iterations: 500, seed: 0 }
    }
}

/// Final-state counts of the sampler; no burn-in averaging.
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub n_topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// `K x V` topic-word counts, row-major.
    pub topic_word: Vec<u64>,
    /// Token total per topic.
    pub topic_totals: Vec<u64>,
    /// `D x K` document-topic counts, row-major.
    pub doc_topic: Vec<u64>,
    /// Corpus log-likelihood after each sweep, under the point estimates of
    /// the current counts.
    pub log_likelihood: Vec<f64>,
}

impl TopicModel {
    pub fn topic_word_count(&self, topic: usize, word: u32) -> u64 {
        self.topic_word[topic * self.vocab_size + word as usize]
    }
}

/// Collapsed Gibbs sampling: each token's topic is resampled from
/// `p(z = k) ~ (n_kw + beta) / (n_k + V beta) * (n_dk + alpha)` with that
/// token's assignment excluded from the counts. Deterministic given the
/// seed.
pub fn fit_lda(docs: &[Vec<u32>], vocab_size: usize, config: &LdaConfig) -> TopicModel {
    assert!(!docs.is_empty(), "corpus must be nonempty");
    assert!(config.n_topics >= 1);
    assert!(vocab_size >= 1);
    let k = config.n_topics;
    let v = vocab_size;
    let alpha = config.alpha.unwrap_or(50.0 / k as f64);
    let beta = config.beta;
    let mut rng = Rng::from_seed(config.seed);

    let mut topic_word = alloc::vec![0u64; k * v];
    let mut topic_totals = alloc::vec![0u64; k];
    let mut doc_topic = alloc::vec![0u64; docs.len() * k];
    let mut assignments: Vec<Vec<usize>> = Vec::with_capacity(docs.len());

    for (d, doc) in docs.iter().enumerate() {
        let mut z = Vec::with_capacity(doc.len());
        for &w in doc {
            debug_assert!((w as usize) < v);
            let topic = rng.below(k);
            z.push(topic);
            topic_word[topic * v + w as usize] += 1;
            topic_totals[topic] += 1;
            doc_topic[d * k + topic] += 1;
        }
        assignments.push(z);
    }

    let mut weights = alloc::vec![0.0; k];
    let mut log_likelihood = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = assignments[d][i];
                topic_word[old * v + w as usize] -= 1;
                topic_totals[old] -= 1;
                doc_topic[d * k + old] -= 1;

                let mut total = 0.0;
                for (t, weight) in weights.iter_mut().enumerate() {
                    let word_part = (topic_word[t * v + w as usize] as f64 + beta)
                        / (topic_totals[t] as f64 + v as f64 * beta);
                    *weight = word_part * (doc_topic[d * k + t] as f64 + alpha);
                    total += *weight;
                }
                let mut u = rng.next_f64() * total;
                let mut picked = k - 1;
                for (t, &weight) in weights.iter().enumerate() {
                    if u < weight {
                        picked = t;
                        break;
                    }
                    u -= weight;
                }

                assignments[d][i] = picked;
                topic_word[picked * v + w as usize] += 1;
                topic_totals[picked] += 1;
                doc_topic[d * k + picked] += 1;
            }
        }
        log_likelihood.push(corpus_log_likelihood(
            docs,
            &topic_word,
            &topic_totals,
            &doc_topic,
            k,
            v,
            alpha,
            beta,
        ));
    }

    TopicModel {
        n_topics: k,
        vocab_size: v,
        alpha,
        beta,
        iterations: config.iterations,
        seed: config.seed,
        topic_word,
        topic_totals,
        doc_topic,
        log_likelihood,
    }
}

#[allow(clippy::too_many_arguments)]
fn corpus_log_likelihood(
    docs: &[Vec<u32>],
    topic_word: &[u64],
    topic_totals: &[u64],
    doc_topic: &[u64],
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
) -> f64 {
    let mut ll = 0.0;
    for (d, doc) in docs.iter().enumerate() {
        let doc_len = doc.len() as f64;
        for &w in doc {
            let mut p = 0.0;
            for t in 0..k {
                let phi = (topic_word[t * v + w as usize] as f64 + beta)
                    / (topic_totals[t] as f64 + v as f64 * beta);
                let theta =
                    (doc_topic[d * k + t] as f64 + alpha) / (doc_len + k as f64 * alpha);
                p += phi * theta;
            }
            ll += float::ln(p);
        }
    }
    ll
}

/// Per-topic word lists ranked by topic-word count, ties by id ascending;
/// only words the topic actually holds are listed, up to `per_topic` each.
/// The same word may appear under several topics.
pub fn top_words(model: &TopicModel, per_topic: usize) -> Vec<Vec<u32>> {
    assert!(per_topic >= 1);
    let mut out = Vec::with_capacity(model.n_topics);
    for t in 0..model.n_topics {
        let row = &model.topic_word[t * model.vocab_size..(t + 1) * model.vocab_size];
        let mut ranked: Vec<(u64, u32)> = row
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(w, &c)| (c, w as u32))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.truncate(per_topic);
        out.push(ranked.into_iter().map(|(_, w)| w).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    /// Corpus with two disjoint planted vocabularies; each document mixes
    /// its home topic at 90% with 10% noise from the other.
    fn planted_corpus(n_docs: usize, doc_len: usize, half: u32, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = Rng::from_seed(seed);
        (0..n_docs)
            .map(|i| {
                let home = (i % 2) as u32;
                (0..doc_len)
                    .map(|_| {
                        let side = if rng.next_f64() < 0.9 { home } else { 1 - home };
                        side * half + rng.below(half as usize) as u32
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_topic_is_degenerate() {
        let docs = alloc::vec![alloc::vec![0, 1, 2], alloc::vec![2, 2, 3]];
        let config = LdaConfig { n_topics: 1, iterations: 5, seed: 3, ..LdaConfig::default() };
        let model = fit_lda(&docs, 4, &config);
        assert_eq!(model.topic_totals[0], 6);
        // Topic-word counts equal corpus frequencies.
        assert_eq!(model.topic_word, alloc::vec![1, 1, 3, 1]);
    }

    #[test]
    fn count_matrices_stay_consistent_with_the_corpus() {
        let docs = planted_corpus(60, 30, 20, 4);
        let config = LdaConfig { n_topics: 3, iterations: 20, seed: 5, ..LdaConfig::default() };
        let model = fit_lda(&docs, 40, &config);
        let mut corpus_freq = alloc::vec![0u64; 40];
        for doc in &docs {
            for &w in doc {
                corpus_freq[w as usize] += 1;
            }
        }
        for w in 0..40u32 {
            let total: u64 = (0..3).map(|t| model.topic_word_count(t, w)).sum();
            assert_eq!(total, corpus_freq[w as usize]);
        }
        let assigned: u64 = model.topic_totals.iter().sum();
        assert_eq!(assigned as usize, docs.iter().map(Vec::len).sum::<usize>());
    }

    #[test]
    fn recovers_two_planted_topics() {
        for seed in [11u64, 12, 13] {
            let half = 25u32;
            let docs = planted_corpus(200, 40, half, seed);
            let config =
                LdaConfig { n_topics: 2, iterations: 120, seed, ..LdaConfig::default() };
            let model = fit_lda(&docs, 2 * half as usize, &config);
            let lists = top_words(&model, 10);
            for list in &lists {
                let left = list.iter().filter(|&&w| w < half).count();
                let rate = left.max(10 - left) as f64 / 10.0;
                assert!(rate >= 0.9, "seed {seed}: purity {rate}");
            }
        }
    }

    #[test]
    fn log_likelihood_trend_is_nondecreasing() {
        let docs = planted_corpus(100, 30, 20, 21);
        let config = LdaConfig { n_topics: 2, iterations: 100, seed: 22, ..LdaConfig::default() };
        let model = fit_lda(&docs, 40, &config);
        let ll = &model.log_likelihood;
        assert_eq!(ll.len(), 100);
        let head: f64 = ll[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = ll[50..].iter().sum::<f64>() / 50.0;
        assert!(tail >= head, "head {head}, tail {tail}");
    }

    #[test]
    fn same_seed_same_model() {
        let docs = planted_corpus(40, 20, 15, 31);
        let config = LdaConfig { n_topics: 2, iterations: 15, seed: 32, ..LdaConfig::default() };
        let a = fit_lda(&docs, 30, &config);
        let b = fit_lda(&docs, 30, &config);
        assert_eq!(a.topic_word, b.topic_word);
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn top_words_per_topic_one_gives_modal_words() {
        let docs = planted_corpus(80, 30, 10, 41);
        let config = LdaConfig { n_topics: 2, iterations: 40, seed: 42, ..LdaConfig::default() };
        let model = fit_lda(&docs, 20, &config);
        let lists = top_words(&model, 1);
        assert_eq!(lists.len(), 2);
        for (t, list) in lists.iter().enumerate() {
            assert_eq!(list.len(), 1);
            let max = (0..20).map(|w| model.topic_word_count(t, w)).max().unwrap();
            assert_eq!(model.topic_word_count(t, list[0]), max);
        }
        // Duplicates across topics are allowed; the union is at most K * n.
        let union: BTreeSet<u32> = lists.iter().flatten().copied().collect();
        assert!(union.len() <= 2);
    }
}
