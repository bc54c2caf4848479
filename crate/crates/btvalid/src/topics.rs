//! Short-text topic clustering with a collapsed Gibbs sampler for the
//! Dirichlet multinomial mixture, plus fold-in classification of
//! backtranslated texts and permutation-null match baselines.
//!
//! Each document belongs to exactly one cluster. A Gibbs sweep removes a
//! document from the count tables, draws a new cluster from the conditional
//!
//! ```text
//! p(z_d = k | rest) ∝ (m_k + α) ·
//!     Π_{w ∈ doc} Π_{j=1..c_w} (n_k[w] + β + j - 1)
//!   / Π_{i=1..|doc|}            (n_k    + Vβ + i - 1)
//! ```
//!
//! (counts taken with the document removed; the document-count denominator
//! is cluster-independent and drops out), and reinserts it. The arithmetic
//! runs in log space so long documents cannot underflow.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{permute, RngStream};
use crate::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("cluster count must be >= 1 (got {0})")]
    BadClusterCount(usize),
    #[error("cannot fit a model on an empty document list")]
    NoDocuments,
    #[error("alpha and beta must be positive (got alpha={alpha}, beta={beta})")]
    BadHyperparameters { alpha: f64, beta: f64 },
    #[error("no back documents align with the model's training ids")]
    NoAlignedIds,
    #[error("cannot read stopword list {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file {path}: {message}")]
    BadModelFile { path: String, message: String },
}

/// A document reduced to its topic-relevant tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn pictographic_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{Extended_Pictographic}").unwrap())
}

/// Tokenize a cleaned text and drop stopwords and emoji-bearing tokens. May
/// yield an empty document; callers exclude (and count) those.
pub fn preprocess_for_topics(
    id: &str,
    cleaned_text: &str,
    stopwords: &HashSet<String>,
) -> TokenizedDoc {
    let tokens = tokenize(cleaned_text)
        .into_iter()
        .filter(|t| !stopwords.contains(t) && !pictographic_re().is_match(t))
        .collect();
    TokenizedDoc { id: id.to_string(), tokens }
}

/// Load a one-token-per-line stopword list.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, TopicsError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| TopicsError::Unreadable {
        path: display.clone(),
        source: e,
    })?;
    let mut words = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| TopicsError::Unreadable {
            path: display.clone(),
            source: e,
        })?;
        let token = line.trim();
        if !token.is_empty() && !token.starts_with('#') {
            words.insert(token.to_lowercase());
        }
    }
    Ok(words)
}

/// Fitted mixture state: count tables, assignments, and vocabulary.
///
/// Serializes to a flat JSON layout of `(k, alpha, beta, vocab, doc_ids,
/// assignments, m, n, nw)` where `nw[k]` is a sparse list of
/// `[word_index, count]` pairs sorted by word index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelOnDisk", into = "ModelOnDisk")]
pub struct TopicModel {
    k: usize,
    alpha: f64,
    beta: f64,
    vocab: Vec<String>,
    vocab_index: HashMap<String, u32>,
    doc_ids: Vec<String>,
    assignments: Vec<u32>,
    /// Documents per cluster.
    m: Vec<u32>,
    /// Total tokens per cluster.
    n: Vec<u64>,
    /// Token counts per cluster.
    nw: Vec<HashMap<u32, u32>>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelOnDisk {
    k: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    vocab: Vec<String>,
    doc_ids: Vec<String>,
    assignments: Vec<u32>,
    m: Vec<u32>,
    n: Vec<u64>,
    nw: Vec<Vec<(u32, u32)>>,
}

impl From<TopicModel> for ModelOnDisk {
    fn from(model: TopicModel) -> Self {
        let nw = model
            .nw
            .iter()
            .map(|counts| {
                let mut pairs: Vec<(u32, u32)> = counts.iter().map(|(&w, &c)| (w, c)).collect();
                pairs.sort_unstable();
                pairs
            })
            .collect();
        ModelOnDisk {
            k: model.k,
            alpha: model.alpha,
            beta: model.beta,
            seed: model.seed,
            vocab: model.vocab,
            doc_ids: model.doc_ids,
            assignments: model.assignments,
            m: model.m,
            n: model.n,
            nw,
        }
    }
}

impl TryFrom<ModelOnDisk> for TopicModel {
    type Error = String;
    fn try_from(disk: ModelOnDisk) -> Result<Self, String> {
        if disk.m.len() != disk.k || disk.n.len() != disk.k || disk.nw.len() != disk.k {
            return Err("count tables do not match cluster count".to_string());
        }
        if disk.assignments.len() != disk.doc_ids.len() {
            return Err("assignments do not match doc ids".to_string());
        }
        let vocab_index = disk
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(TopicModel {
            k: disk.k,
            alpha: disk.alpha,
            beta: disk.beta,
            vocab: disk.vocab,
            vocab_index,
            doc_ids: disk.doc_ids,
            assignments: disk.assignments,
            m: disk.m,
            n: disk.n,
            nw: disk.nw.into_iter().map(|pairs| pairs.into_iter().collect()).collect(),
            seed: disk.seed,
        })
    }
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn docs_per_cluster(&self) -> &[u32] {
        &self.m
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn assignment_of(&self, id: &str) -> Option<u32> {
        self.doc_ids.iter().position(|d| d == id).map(|i| self.assignments[i])
    }

    pub fn save(&self, path: &Path) -> Result<(), TopicsError> {
        let json = serde_json::to_vec(self).expect("model serializes");
        std::fs::write(path, json).map_err(|e| TopicsError::Unreadable {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TopicsError> {
        let bytes = std::fs::read(path).map_err(|e| TopicsError::Unreadable {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_slice(&bytes).map_err(|e| TopicsError::BadModelFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn index_doc(&self, doc: &TokenizedDoc) -> Vec<u32> {
        doc.tokens
            .iter()
            .filter_map(|t| self.vocab_index.get(t).copied())
            .collect()
    }

    /// Log of the cluster conditional for an indexed token multiset, with
    /// the cluster-independent normalizer dropped.
    fn log_conditional(&self, word_ids: &[u32], k: usize) -> f64 {
        let v_beta = self.vocab.len() as f64 * self.beta;
        let mut score = (self.m[k] as f64 + self.alpha).ln();
        let counts = &self.nw[k];
        let mut seen: HashMap<u32, u32> = HashMap::with_capacity(word_ids.len());
        for &w in word_ids {
            let j = seen.entry(w).or_insert(0);
            *j += 1;
            let base = counts.get(&w).copied().unwrap_or(0) as f64;
            score += (base + self.beta + (*j as f64 - 1.0)).ln();
        }
        for i in 1..=word_ids.len() {
            score -= (self.n[k] as f64 + v_beta + (i as f64 - 1.0)).ln();
        }
        score
    }

    fn remove_doc(&mut self, word_ids: &[u32], k: usize) {
        self.m[k] -= 1;
        self.n[k] -= word_ids.len() as u64;
        for &w in word_ids {
            let count = self.nw[k].get_mut(&w).expect("token present in its own cluster");
            *count -= 1;
            if *count == 0 {
                self.nw[k].remove(&w);
            }
        }
    }

    fn insert_doc(&mut self, word_ids: &[u32], k: usize) {
        self.m[k] += 1;
        self.n[k] += word_ids.len() as u64;
        for &w in word_ids {
            *self.nw[k].entry(w).or_insert(0) += 1;
        }
    }

    /// Count-conservation check: cluster doc counts sum to D, per-cluster
    /// token counts agree with the word tables, and rebuilding every table
    /// from the assignments reproduces it exactly.
    pub fn counts_consistent(&self, docs: &[Vec<u32>]) -> bool {
        if self.m.iter().map(|&x| x as u64).sum::<u64>() != docs.len() as u64 {
            return false;
        }
        for k in 0..self.k {
            if self.nw[k].values().map(|&c| c as u64).sum::<u64>() != self.n[k] {
                return false;
            }
        }
        let mut m = vec![0u32; self.k];
        let mut n = vec![0u64; self.k];
        let mut nw: Vec<HashMap<u32, u32>> = vec![HashMap::new(); self.k];
        for (doc, &z) in docs.iter().zip(&self.assignments) {
            let z = z as usize;
            m[z] += 1;
            n[z] += doc.len() as u64;
            for &w in doc {
                *nw[z].entry(w).or_insert(0) += 1;
            }
        }
        m == self.m && n == self.n && nw == self.nw
    }
}

/// Fit a mixture by collapsed Gibbs sampling: uniform random initial
/// assignments, then `iterations` full sweeps. Deterministic for a fixed
/// seed; sweeps visit documents in input order.
pub fn gsdmm_fit(
    docs: &[TokenizedDoc],
    k: usize,
    alpha: f64,
    beta: f64,
    iterations: usize,
    seed: u64,
) -> Result<TopicModel, TopicsError> {
    if k < 1 {
        return Err(TopicsError::BadClusterCount(k));
    }
    if docs.is_empty() {
        return Err(TopicsError::NoDocuments);
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(TopicsError::BadHyperparameters { alpha, beta });
    }

    let mut vocab: Vec<String> = Vec::new();
    let mut vocab_index: HashMap<String, u32> = HashMap::new();
    let indexed: Vec<Vec<u32>> = docs
        .iter()
        .map(|doc| {
            doc.tokens
                .iter()
                .map(|t| {
                    *vocab_index.entry(t.clone()).or_insert_with(|| {
                        vocab.push(t.clone());
                        (vocab.len() - 1) as u32
                    })
                })
                .collect()
        })
        .collect();

    let mut model = TopicModel {
        k,
        alpha,
        beta,
        vocab,
        vocab_index,
        doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
        assignments: vec![0; docs.len()],
        m: vec![0; k],
        n: vec![0; k],
        nw: vec![HashMap::new(); k],
        seed,
    };

    let mut rng = RngStream::new(seed, format!("gsdmm/k{k}")).rng();
    for (d, word_ids) in indexed.iter().enumerate() {
        let z = rng.random_range(0..k);
        model.assignments[d] = z as u32;
        model.insert_doc(word_ids, z);
    }

    let mut weights = vec![0.0f64; k];
    for _sweep in 0..iterations {
        for (d, word_ids) in indexed.iter().enumerate() {
            let z_old = model.assignments[d] as usize;
            model.remove_doc(word_ids, z_old);

            for (z, w) in weights.iter_mut().enumerate() {
                *w = model.log_conditional(word_ids, z);
            }
            let z_new = sample_from_log_weights(&weights, &mut rng);

            model.assignments[d] = z_new as u32;
            model.insert_doc(word_ids, z_new);
        }
        debug_assert!(model.counts_consistent(&indexed), "count tables drifted during sweep");
    }

    Ok(model)
}

fn sample_from_log_weights(log_weights: &[f64], rng: &mut impl Rng) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    log_weights.len() - 1
}

/// Fold-in classification: score the conditional for every cluster without
/// touching the model's counts and return the argmax, ties broken by lowest
/// cluster index. Tokens outside the model vocabulary are ignored; a fully
/// out-of-vocabulary document falls back to the cluster-size prior.
pub fn gsdmm_classify(model: &TopicModel, doc: &TokenizedDoc) -> u32 {
    let word_ids = model.index_doc(doc);
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..model.k {
        // With no in-vocabulary tokens this reduces to ln(m[k] + alpha).
        let score = model.log_conditional(&word_ids, k);
        if score > best_score {
            best_score = score;
            best = k;
        }
    }
    best as u32
}

/// Fraction of back documents classified into the cluster of their original.
/// Alignment is by id against the model's training documents.
pub fn match_rate(model: &TopicModel, back_docs: &[TokenizedDoc]) -> Result<f64, TopicsError> {
    let index: HashMap<&str, u32> = model
        .doc_ids
        .iter()
        .zip(&model.assignments)
        .map(|(id, &z)| (id.as_str(), z))
        .collect();
    let aligned: Vec<(&TokenizedDoc, u32)> = back_docs
        .iter()
        .filter_map(|doc| index.get(doc.id.as_str()).map(|&z| (doc, z)))
        .collect();
    if aligned.is_empty() {
        return Err(TopicsError::NoAlignedIds);
    }
    let matches: usize = aligned
        .par_iter()
        .map(|(doc, z)| usize::from(gsdmm_classify(model, doc) == *z))
        .sum();
    Ok(matches as f64 / aligned.len() as f64)
}

/// Chance-level match rate from uniformly permuting assignments. The
/// analytic mean is `Σ_k (m_k / D)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEstimate {
    pub mean: f64,
    pub samples: Vec<f64>,
}

impl NullEstimate {
    /// Standard error of the sample mean.
    pub fn std_err(&self) -> f64 {
        let n = self.samples.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.mean;
        let var = self.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    /// Spread of a single permutation draw, the Monte-Carlo yardstick for
    /// judging whether an observed match rate is at chance.
    pub fn sample_std_dev(&self) -> f64 {
        let n = self.samples.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.mean;
        (self.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}

pub fn permutation_null(
    assignments: &[u32],
    permutations: usize,
    stream: &RngStream,
) -> NullEstimate {
    assert!(!assignments.is_empty(), "cannot permute an empty assignment list");
    assert!(permutations >= 1, "need at least one permutation");
    let samples: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|p| {
            let permuted = permute(assignments, &stream.child(p.to_string()));
            let hits = permuted
                .iter()
                .zip(assignments)
                .filter(|(a, b)| a == b)
                .count();
            hits as f64 / assignments.len() as f64
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    NullEstimate { mean, samples }
}

/// One row of the cluster-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub match_rate: f64,
    pub null_mean: f64,
    pub null_std_err: f64,
}

/// Fit, classify, and baseline once per requested cluster count. Per-K
/// randomness derives from `(seed, K)`, so rows are independent of sweep
/// order.
pub fn k_sweep(
    docs: &[TokenizedDoc],
    back_docs: &[TokenizedDoc],
    ks: &[usize],
    alpha: f64,
    beta: f64,
    iterations: usize,
    permutations: usize,
    seed: u64,
) -> Result<Vec<KSweepRow>, TopicsError> {
    ks.iter()
        .map(|&k| {
            let model = gsdmm_fit(docs, k, alpha, beta, iterations, seed)?;
            let rate = match_rate(&model, back_docs)?;
            let null = permutation_null(
                model.assignments(),
                permutations,
                &RngStream::new(seed, format!("topics/null/k{k}")),
            );
            Ok(KSweepRow {
                k,
                match_rate: rate,
                null_mean: null.mean,
                null_std_err: null.std_err(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, tokens: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            id: id.to_string(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn preprocess_drops_stopwords_and_emoji() {
        let stops: HashSet<String> = ["the"].iter().map(|s| s.to_string()).collect();
        assert_eq!(preprocess_for_topics("1", "the cat sat", &stops).tokens, ["cat", "sat"]);
        let d = preprocess_for_topics("2", "the the the", &stops);
        assert!(d.is_empty());
        assert_eq!(preprocess_for_topics("3", "cat 😀 sat", &stops).tokens, ["cat", "sat"]);
        assert_eq!(preprocess_for_topics("4", "ca😀t sat", &stops).tokens, ["sat"]);
    }

    /// Two disjoint 50-word vocabularies, `docs_per_topic` docs of 8 tokens.
    fn synthetic_corpus(
        topics: usize,
        words_per_topic: usize,
        docs_per_topic: usize,
        seed: u64,
    ) -> (Vec<TokenizedDoc>, Vec<usize>) {
        let mut rng = RngStream::new(seed, "synthetic").rng();
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for topic in 0..topics {
            for d in 0..docs_per_topic {
                let tokens: Vec<String> = (0..8)
                    .map(|_| format!("t{topic}w{}", rng.random_range(0..words_per_topic)))
                    .collect();
                docs.push(TokenizedDoc { id: format!("{topic}-{d}"), tokens });
                labels.push(topic);
            }
        }
        (docs, labels)
    }

    fn purity(model: &TopicModel, labels: &[usize]) -> f64 {
        let mut by_cluster: HashMap<u32, HashMap<usize, usize>> = HashMap::new();
        for (z, &label) in model.assignments().iter().zip(labels) {
            *by_cluster.entry(*z).or_default().entry(label).or_default() += 1;
        }
        let correct: usize = by_cluster
            .values()
            .map(|counts| counts.values().copied().max().unwrap_or(0))
            .sum();
        correct as f64 / labels.len() as f64
    }

    #[test]
    fn single_cluster_degeneracy() {
        let docs = vec![doc("a", &["x", "y"]), doc("b", &["y", "z"]), doc("c", &["x"])];
        let model = gsdmm_fit(&docs, 1, 0.1, 0.1, 5, 0).unwrap();
        assert!(model.assignments().iter().all(|&z| z == 0));
        assert_eq!(model.docs_per_cluster(), &[3]);
        assert_eq!(model.n[0], 5);
        assert_eq!(gsdmm_classify(&model, &doc("q", &["x"])), 0);
    }

    #[test]
    fn single_doc_count_conservation() {
        let docs = vec![doc("only", &["a", "b", "a"])];
        for k in [1, 3, 7] {
            let model = gsdmm_fit(&docs, k, 0.1, 0.1, 5, 1).unwrap();
            assert_eq!(model.docs_per_cluster().iter().sum::<u32>(), 1);
            let z = model.assignments()[0] as usize;
            assert_eq!(model.n[z], 3);
        }
    }

    #[test]
    fn recovers_two_disjoint_topics() {
        let (docs, labels) = synthetic_corpus(2, 50, 200, 7);
        let model = gsdmm_fit(&docs, 2, 0.1, 0.1, 5, 7).unwrap();
        assert!(purity(&model, &labels) >= 0.95, "purity {}", purity(&model, &labels));
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let docs = vec![doc("a", &["x"])];
        assert!(matches!(gsdmm_fit(&docs, 0, 0.1, 0.1, 5, 0), Err(TopicsError::BadClusterCount(0))));
        assert!(matches!(gsdmm_fit(&[], 2, 0.1, 0.1, 5, 0), Err(TopicsError::NoDocuments)));
        assert!(matches!(
            gsdmm_fit(&docs, 2, 0.0, 0.1, 5, 0),
            Err(TopicsError::BadHyperparameters { .. })
        ));
    }

    #[test]
    fn fit_is_deterministic_for_fixed_seed() {
        let (docs, _) = synthetic_corpus(2, 20, 50, 3);
        let a = gsdmm_fit(&docs, 4, 0.1, 0.1, 5, 11).unwrap();
        let b = gsdmm_fit(&docs, 4, 0.1, 0.1, 5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classify_does_not_mutate_and_prefers_dominating_cluster() {
        let (docs, _) = synthetic_corpus(2, 50, 100, 5);
        let model = gsdmm_fit(&docs, 2, 0.1, 0.1, 5, 5).unwrap();
        let before = serde_json::to_string(&model).unwrap();

        // a training doc whose tokens are unique to its own cluster
        let z = gsdmm_classify(&model, &docs[0]);
        assert_eq!(z, model.assignments()[0]);

        let after = serde_json::to_string(&model).unwrap();
        assert_eq!(before, after, "classification must leave the model untouched");
    }

    #[test]
    fn classify_empty_doc_uses_prior() {
        let docs = vec![
            doc("a", &["x"]),
            doc("b", &["x"]),
            doc("c", &["x"]),
            doc("d", &["y"]),
        ];
        let model = gsdmm_fit(&docs, 2, 0.1, 0.1, 10, 2).unwrap();
        // argmax of m[k] + alpha, ties to the lowest index
        let mut expected = 0u32;
        let mut best = 0u32;
        for (i, &mi) in model.docs_per_cluster().iter().enumerate() {
            if mi > best {
                best = mi;
                expected = i as u32;
            }
        }
        assert_eq!(gsdmm_classify(&model, &doc("empty", &[])), expected);
        // all-OOV doc behaves the same way
        assert_eq!(gsdmm_classify(&model, &doc("oov", &["zzz", "qqq"])), expected);
    }

    #[test]
    fn match_rate_is_one_for_identity_backtranslation_on_separable_corpus() {
        let (docs, _) = synthetic_corpus(2, 50, 100, 9);
        let model = gsdmm_fit(&docs, 2, 0.1, 0.1, 5, 9).unwrap();
        assert_eq!(match_rate(&model, &docs).unwrap(), 1.0);
    }

    #[test]
    fn match_rate_requires_aligned_ids() {
        let (docs, _) = synthetic_corpus(2, 10, 10, 1);
        let model = gsdmm_fit(&docs, 2, 0.1, 0.1, 2, 1).unwrap();
        let foreign = vec![doc("nope", &["t0w0"])];
        assert!(matches!(match_rate(&model, &foreign), Err(TopicsError::NoAlignedIds)));
    }

    #[test]
    fn permutation_null_matches_analytic_mean() {
        // sizes (90, 10): analytic mean = 0.81 + 0.01 = 0.82
        let assignments: Vec<u32> = (0..100).map(|i| u32::from(i >= 90)).collect();
        let null = permutation_null(&assignments, 1000, &RngStream::new(4, "null"));
        assert!((null.mean - 0.82).abs() <= 3.0 * null.std_err(), "mean {}", null.mean);

        // two equal clusters: 0.5
        let assignments: Vec<u32> = (0..100).map(|i| u32::from(i % 2 == 0)).collect();
        let null = permutation_null(&assignments, 1000, &RngStream::new(4, "null2"));
        assert!((null.mean - 0.5).abs() <= 3.0 * null.std_err(), "mean {}", null.mean);
    }

    #[test]
    fn model_serialization_round_trips() {
        let (docs, _) = synthetic_corpus(2, 10, 20, 6);
        let model = gsdmm_fit(&docs, 3, 0.2, 0.3, 3, 6).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let loaded: TopicModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, loaded);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(TopicModel::load(&path).unwrap(), model);
    }

    #[test]
    fn rebuilt_counts_match_tables_exactly() {
        let (docs, _) = synthetic_corpus(3, 15, 40, 8);
        let model = gsdmm_fit(&docs, 5, 0.1, 0.1, 5, 8).unwrap();
        let indexed: Vec<Vec<u32>> = docs.iter().map(|d| model.index_doc(d)).collect();
        assert!(model.counts_consistent(&indexed));
    }

    #[test]
    fn k_sweep_produces_one_row_per_k() {
        let (docs, _) = synthetic_corpus(2, 20, 40, 10);
        let rows = k_sweep(&docs, &docs, &[1, 2, 4], 0.1, 0.1, 3, 100, 10).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].k, 1);
        assert_eq!(rows[0].match_rate, 1.0, "K=1 always matches");
        assert_eq!(rows[0].null_mean, 1.0, "K=1 null is 1 exactly");
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.match_rate));
            assert!((0.0..=1.0).contains(&row.null_mean));
        }
    }
}
