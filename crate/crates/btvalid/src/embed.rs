//! Word-embedding analytics: table loading, normalized-sum sentence
//! vectors, cosine distances between originals and backtranslations, and
//! peer-distance baselines.
//!
//! A sentence embeds as the unit-normalized sum of its in-vocabulary token
//! vectors; records with zero coverage are undefined and excluded (and
//! counted) downstream. Backtranslation drift is judged against two
//! baselines: the average per-record minimum and mean distance to sampled
//! peer records.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index::sample as index_sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::stats::RngStream;
use crate::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot read embeddings {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embeddings {path} line {line}: vector has {got} components, expected {expected}")]
    InconsistentDim { path: String, line: usize, got: usize, expected: usize },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("undefined sentence vector (no in-vocabulary tokens)")]
    UndefinedVector,
    #[error("all records were excluded (no embeddable text on both sides)")]
    AllExcluded,
    #[error("need at least 2 embeddable records for peer baselines (got {0})")]
    TooFewRecords(usize),
}

/// Token -> d-dimensional vector for one language.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, EmbedError> {
        let mut table = EmbeddingTable { dim: 0, vectors: HashMap::new() };
        for (token, vector) in entries {
            if table.vectors.is_empty() {
                table.dim = vector.len();
            } else if vector.len() != table.dim {
                return Err(EmbedError::DimMismatch(vector.len(), table.dim));
            }
            table.vectors.insert(token.to_lowercase(), vector);
        }
        if table.vectors.is_empty() {
            return Err(EmbedError::EmptyTable);
        }
        Ok(table)
    }
}

/// Load the text layout `token c1 c2 ... cd`, one token per line.
/// Inconsistent vector lengths are fatal (with the line number); lines whose
/// components fail to parse are skipped with a warning; a duplicate token
/// keeps its first vector.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| EmbedError::Unreadable {
        path: display.clone(),
        source: e,
    })?;
    let mut table = EmbeddingTable { dim: 0, vectors: HashMap::new() };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EmbedError::Unreadable {
            path: display.clone(),
            source: e,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let components: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let vector = match components {
            Ok(v) if !v.is_empty() => v,
            _ => {
                log::warn!("{display}:{}: unparseable embedding line skipped", idx + 1);
                continue;
            }
        };
        if table.vectors.is_empty() {
            table.dim = vector.len();
        } else if vector.len() != table.dim {
            return Err(EmbedError::InconsistentDim {
                path: display,
                line: idx + 1,
                got: vector.len(),
                expected: table.dim,
            });
        }
        let token = token.to_lowercase();
        if table.vectors.contains_key(&token) {
            log::warn!("{display}:{}: duplicate token {token:?} keeps first vector", idx + 1);
            continue;
        }
        table.vectors.insert(token, vector);
    }
    Ok(table)
}

/// Unit-normalized sum of in-vocabulary token vectors, or `Undefined` when
/// nothing embeds (including the degenerate exact-cancellation case).
#[derive(Debug, Clone, PartialEq)]
pub enum SentenceVector {
    Defined { vector: Vec<f64>, in_vocab: usize },
    Undefined,
}

impl SentenceVector {
    pub fn is_defined(&self) -> bool {
        matches!(self, SentenceVector::Defined { .. })
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            SentenceVector::Defined { vector, .. } => Some(vector),
            SentenceVector::Undefined => None,
        }
    }
}

/// Embed a token list against a table. Out-of-vocabulary tokens are
/// ignored; with zero in-vocabulary tokens the result is undefined.
/// Summation runs in sorted token order, so permuting the input yields a
/// bit-identical vector.
pub fn embed_sentence(tokens: &[String], table: &EmbeddingTable) -> SentenceVector {
    if table.is_empty() {
        return SentenceVector::Undefined;
    }
    let mut known: Vec<&String> = tokens.iter().filter(|t| table.get(t).is_some()).collect();
    known.sort_unstable();
    let in_vocab = known.len();
    let mut sum = vec![0.0f64; table.dim()];
    for token in known {
        let v = table.get(token).expect("filtered to in-vocabulary tokens");
        for (s, c) in sum.iter_mut().zip(v) {
            *s += c;
        }
    }
    if in_vocab == 0 {
        return SentenceVector::Undefined;
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        // opposing vectors cancelled exactly; no direction to report
        return SentenceVector::Undefined;
    }
    for x in &mut sum {
        *x /= norm;
    }
    SentenceVector::Defined { vector: sum, in_vocab }
}

/// Cosine distance `1 - u·v / (||u|| ||v||)`, in `[0, 2]`.
pub fn cosine_distance(u: &SentenceVector, v: &SentenceVector) -> Result<f64, EmbedError> {
    let (Some(u), Some(v)) = (u.vector(), v.vector()) else {
        return Err(EmbedError::UndefinedVector);
    };
    if u.len() != v.len() {
        return Err(EmbedError::DimMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(1.0 - dot / (nu * nv))
}

/// Original-vs-backtranslation distances for every record with both sides
/// embeddable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackDistances {
    /// id -> distance, in corpus order.
    pub per_id: Vec<(String, f64)>,
    pub mean: f64,
    pub excluded: usize,
}

pub fn backtranslation_distances(
    corpus: &Corpus,
    table: &EmbeddingTable,
) -> Result<BackDistances, EmbedError> {
    let mut per_id = Vec::new();
    let mut excluded = 0usize;
    for record in &corpus.records {
        let Some(back) = record.text_back.as_deref() else {
            excluded += 1;
            continue;
        };
        let u = embed_sentence(&tokenize(&record.text_original), table);
        let v = embed_sentence(&tokenize(back), table);
        match (u.is_defined(), v.is_defined()) {
            (true, true) => {
                let d = cosine_distance(&u, &v).expect("both defined, same table");
                per_id.push((record.id.clone(), d));
            }
            _ => excluded += 1,
        }
    }
    if per_id.is_empty() {
        return Err(EmbedError::AllExcluded);
    }
    let mean = per_id.iter().map(|(_, d)| d).sum::<f64>() / per_id.len() as f64;
    Ok(BackDistances { per_id, mean, excluded })
}

/// Distance thresholds from sampled peers: for each embeddable record,
/// sample `peers` distinct other records and take that record's minimum and
/// mean distance; the baselines average those over records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerBaselines {
    pub min_baseline: f64,
    pub mean_baseline: f64,
    /// Number of embeddable anchor records.
    pub anchors: usize,
    pub peers_used: usize,
    pub clamped: bool,
}

pub fn peer_baselines(
    corpus: &Corpus,
    table: &EmbeddingTable,
    peers: usize,
    seed: u64,
) -> Result<PeerBaselines, EmbedError> {
    let embedded: Vec<(usize, SentenceVector)> = corpus
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let v = embed_sentence(&tokenize(&r.text_original), table);
            v.is_defined().then_some((i, v))
        })
        .collect();
    let n = embedded.len();
    if n < 2 {
        return Err(EmbedError::TooFewRecords(n));
    }
    let clamped = peers > n - 1;
    let peers_used = peers.min(n - 1);
    if clamped {
        log::warn!(
            "peer_baselines: requested {peers} peers but only {} other records exist; clamping to {peers_used}",
            n - 1
        );
    }

    let stream = RngStream::new(seed, format!("embed/peers/{}", corpus.lang));
    let mut min_sum = 0.0f64;
    let mut mean_sum = 0.0f64;
    for (anchor_pos, (record_idx, anchor)) in embedded.iter().enumerate() {
        let mut rng = stream.child(corpus.records[*record_idx].id.as_str()).rng();
        // sample from the other n-1 embeddable records, skipping the anchor
        let picks = index_sample(&mut rng, n - 1, peers_used);
        let mut dmin = f64::INFINITY;
        let mut dsum = 0.0f64;
        for j in picks {
            let peer_pos = if j < anchor_pos { j } else { j + 1 };
            let d = cosine_distance(anchor, &embedded[peer_pos].1).expect("defined vectors");
            dmin = dmin.min(d);
            dsum += d;
        }
        min_sum += dmin;
        mean_sum += dsum / peers_used as f64;
    }
    Ok(PeerBaselines {
        min_baseline: min_sum / n as f64,
        mean_baseline: mean_sum / n as f64,
        anchors: n,
        peers_used,
        clamped,
    })
}

/// Pass/fail flags against the two baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingVerdict {
    pub passes_min: bool,
    pub passes_mean: bool,
}

pub fn embedding_verdict(mean_back_distance: f64, baselines: &PeerBaselines) -> EmbeddingVerdict {
    EmbeddingVerdict {
        passes_min: mean_back_distance < baselines.min_baseline,
        passes_mean: mean_back_distance < baselines.mean_baseline,
    }
}
