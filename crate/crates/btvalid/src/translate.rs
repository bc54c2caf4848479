//! Pluggable translation providers with on-disk caching, bounded
//! concurrency, retry with backoff, and corpus round-tripping through a
//! pivot language.
//!
//! Three providers are built in: a remote HTTP provider speaking the public
//! v2 translation REST API, an identity provider, and a seeded noise
//! provider that replaces tokens at a configurable rate. The identity and
//! noise providers carry the test suite; the remote provider carries real
//! runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{write_variant, Corpus, CorpusError, Lang, TextRecord, Variant};
use crate::stats::RngStream;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("source and target language are both {0}")]
    SamePivot(Lang),
    #[error("empty text at index {0}: translation requests must be non-empty")]
    EmptyText(usize),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transient failures exhausted {attempts} attempts: {message} (completed items are cached; rerun to resume)")]
    RateLimitExhausted { attempts: u32, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cache error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Provider-level failure classification. `Transient` triggers a retry;
/// `Auth` aborts the run; `Fatal` fails the batch's items and continues.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("authentication: {0}")]
    Auth(String),
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

/// Per-item outcome inside a successful batch call.
pub type ItemResult = Result<String, String>;

pub trait TranslationProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Translate a batch; the output must be parallel to the input.
    fn translate_batch(
        &self,
        texts: &[String],
        source: &Lang,
        target: &Lang,
    ) -> Result<Vec<ItemResult>, ProviderError>;
}

// ---------------------------------------------------------------------------
// Built-in providers
// ---------------------------------------------------------------------------

/// Returns every text unchanged. Downstream metrics become exact: zero
/// sentiment delta, full topic match, zero embedding distance.
pub struct IdentityProvider;

impl TranslationProvider for IdentityProvider {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate_batch(
        &self,
        texts: &[String],
        _source: &Lang,
        _target: &Lang,
    ) -> Result<Vec<ItemResult>, ProviderError> {
        Ok(texts.iter().cloned().map(Ok).collect())
    }
}

/// Replaces each whitespace token independently with probability `rate` by
/// a different token drawn from the replacement vocabulary. Per-item
/// randomness derives from the content hash, never from arrival order, so
/// results are schedule-independent.
pub struct NoiseProvider {
    rate: f64,
    seed: u64,
    vocab: Vec<String>,
}

impl NoiseProvider {
    pub fn new(rate: f64, seed: u64, vocab: Vec<String>) -> Self {
        assert!((0.0..=1.0).contains(&rate), "noise rate must be in [0,1]");
        Self { rate, seed, vocab }
    }

    /// Replacement vocabulary taken from a corpus's original texts.
    pub fn from_corpus(rate: f64, seed: u64, corpus: &Corpus) -> Self {
        let mut vocab: Vec<String> = corpus
            .records
            .iter()
            .flat_map(|r| r.text_original.split_whitespace())
            .map(|t| t.to_string())
            .collect();
        vocab.sort_unstable();
        vocab.dedup();
        Self::new(rate, seed, vocab)
    }

    fn item_rng(&self, text: &str, source: &Lang, target: &Lang) -> rand_chacha::ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(source.as_str().as_bytes());
        h.update(target.as_str().as_bytes());
        h.update(text.as_bytes());
        let digest = h.finalize();
        let label = hex::encode(&digest[..16]);
        RngStream::new(self.seed, format!("noise/{label}")).rng()
    }
}

impl TranslationProvider for NoiseProvider {
    fn name(&self) -> &str {
        "noise"
    }

    fn translate_batch(
        &self,
        texts: &[String],
        source: &Lang,
        target: &Lang,
    ) -> Result<Vec<ItemResult>, ProviderError> {
        let out = texts
            .iter()
            .map(|text| {
                let mut rng = self.item_rng(text, source, target);
                let tokens: Vec<&str> = text
                    .split_whitespace()
                    .map(|token| {
                        if self.rate > 0.0 && rng.random::<f64>() < self.rate {
                            // draw a replacement different from the current
                            // token whenever the vocabulary offers one
                            for _ in 0..64 {
                                let pick = &self.vocab[rng.random_range(0..self.vocab.len())];
                                if pick != token {
                                    return pick.as_str();
                                }
                            }
                        }
                        token
                    })
                    .collect();
                Ok(tokens.join(" "))
            })
            .collect();
        Ok(out)
    }
}

/// Remote provider speaking the public v2 translation REST endpoint: POST
/// with repeated `q` fields plus `source`, `target`, `format=text`, and the
/// API key as a query parameter; responses carry
/// `data.translations[].translatedText`.
pub struct GoogleProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
}

pub const GOOGLE_ENDPOINT: &str = "https://translation.googleapis.com/language/translate/v2";

impl GoogleProvider {
    pub fn new(api_key: String) -> Self {
        Self::with_endpoint(api_key, GOOGLE_ENDPOINT.to_string())
    }

    pub fn with_endpoint(api_key: String, endpoint: String) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client builds"),
            endpoint,
            api_key,
        }
    }

    /// Read the key from `TRANSLATE_API_KEY`.
    pub fn from_env() -> Result<Self, TranslateError> {
        match std::env::var("TRANSLATE_API_KEY") {
            Ok(key) if !key.is_empty() => Ok(Self::new(key)),
            _ => Err(TranslateError::Auth(
                "TRANSLATE_API_KEY is not set".to_string(),
            )),
        }
    }
}

/// Build the form body for one batch request.
fn google_request_form<'a>(
    texts: &'a [String],
    source: &'a Lang,
    target: &'a Lang,
) -> Vec<(&'static str, &'a str)> {
    let mut form: Vec<(&'static str, &str)> = texts.iter().map(|t| ("q", t.as_str())).collect();
    form.push(("source", source.as_str()));
    form.push(("target", target.as_str()));
    form.push(("format", "text"));
    form
}

/// Extract the translated texts from a v2 response body.
fn parse_google_response(body: &str, expected: usize) -> Result<Vec<String>, String> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let translations = value
        .get("data")
        .and_then(|d| d.get("translations"))
        .and_then(|t| t.as_array())
        .ok_or("response lacks data.translations")?;
    if translations.len() != expected {
        return Err(format!(
            "response has {} translations for {expected} inputs",
            translations.len()
        ));
    }
    translations
        .iter()
        .map(|t| {
            t.get("translatedText")
                .and_then(|x| x.as_str())
                .map(|s| s.to_string())
                .ok_or_else(|| "translation lacks translatedText".to_string())
        })
        .collect()
}

impl TranslationProvider for GoogleProvider {
    fn name(&self) -> &str {
        "google"
    }

    fn translate_batch(
        &self,
        texts: &[String],
        source: &Lang,
        target: &Lang,
    ) -> Result<Vec<ItemResult>, ProviderError> {
        let response = self
            .client
            .post(&self.endpoint)
            .query(&[("key", self.api_key.as_str())])
            .form(&google_request_form(texts, source, target))
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    ProviderError::Transient(e.to_string())
                } else {
                    ProviderError::Fatal(e.to_string())
                }
            })?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ProviderError::Auth(format!("{status}: {body}")));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient(format!("{status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Fatal(format!("{status}: {body}")));
        }
        let texts = parse_google_response(&body, texts.len()).map_err(ProviderError::Fatal)?;
        Ok(texts.into_iter().map(Ok).collect())
    }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

/// Identity of a cached translation: provider, direction, and the content
/// digest of the text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub provider: String,
    pub source: Lang,
    pub target: Lang,
    pub digest: String,
}

impl CacheKey {
    pub fn new(provider: &str, source: &Lang, target: &Lang, text: &str) -> Self {
        Self {
            provider: provider.to_string(),
            source: source.clone(),
            target: target.clone(),
            digest: hex::encode(Sha256::digest(text.as_bytes())),
        }
    }
}

/// On-disk key -> value store: one UTF-8 file per key at
/// `<root>/<provider>/<source>-<target>/<digest[..2]>/<digest>`. Writes go
/// through a temp file plus rename, so interrupted runs never leave partial
/// entries.
pub struct TranslationCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl TranslationCache {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    fn path_of(&self, key: &CacheKey) -> PathBuf {
        self.root
            .join(&key.provider)
            .join(format!("{}-{}", key.source, key.target))
            .join(&key.digest[..2])
            .join(&key.digest)
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        std::fs::read_to_string(self.path_of(key)).ok()
    }

    pub fn put(&self, key: &CacheKey, value: &str) -> Result<(), TranslateError> {
        let path = self.path_of(key);
        let _guard = self.write_lock.lock().expect("cache lock");
        let parent = path.parent().expect("cache paths have parents");
        let wrap = |source: std::io::Error| TranslateError::Cache {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(parent).map_err(wrap)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, value).map_err(wrap)?;
        std::fs::rename(&tmp, &path).map_err(wrap)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Translator: batching, retry, bounded concurrency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 5,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Orchestrates a provider: cache lookups, request deduplication, batch
/// splitting, bounded in-flight requests, retry with exponential backoff
/// and jitter, and input-order reassembly.
pub struct Translator {
    provider: Arc<dyn TranslationProvider>,
    cache: Option<Arc<TranslationCache>>,
    batch_size: usize,
    max_in_flight: usize,
    retry: RetryPolicy,
}

impl Translator {
    pub fn new(provider: Arc<dyn TranslationProvider>) -> Self {
        Self {
            provider,
            cache: None,
            batch_size: 100,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<TranslationCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        assert!(batch_size >= 1);
        self.batch_size = batch_size;
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        assert!(max_in_flight >= 1);
        self.max_in_flight = max_in_flight;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Translate texts, index-aligned with the input. Cached results never
    /// reach the provider; neither do duplicate texts within one call.
    /// Per-item failures come back as `Err` items; auth failures and
    /// exhausted retries abort the call.
    pub fn translate_batch(
        &self,
        texts: &[String],
        source: &Lang,
        target: &Lang,
    ) -> Result<Vec<ItemResult>, TranslateError> {
        for (i, text) in texts.iter().enumerate() {
            if text.is_empty() {
                return Err(TranslateError::EmptyText(i));
            }
        }

        let mut results: Vec<Option<ItemResult>> = vec![None; texts.len()];

        // cache hits first
        let mut misses: Vec<&String> = Vec::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for (i, text) in texts.iter().enumerate() {
            if let Some(cache) = &self.cache {
                let key = CacheKey::new(self.provider.name(), source, target, text);
                if let Some(hit) = cache.get(&key) {
                    results[i] = Some(Ok(hit));
                    continue;
                }
            }
            if results[i].is_none() && seen.insert(text.as_str(), ()).is_none() {
                misses.push(text);
            }
        }

        if !misses.is_empty() {
            let translated = self.fetch_unique(&misses, source, target)?;
            let by_text: HashMap<&str, &ItemResult> = misses
                .iter()
                .map(|t| t.as_str())
                .zip(translated.iter())
                .collect();
            for (i, text) in texts.iter().enumerate() {
                if results[i].is_none() {
                    results[i] = Some(by_text[text.as_str()].clone());
                }
            }
        }

        Ok(results.into_iter().map(|r| r.expect("every slot filled")).collect())
    }

    /// Fetch unique, uncached texts: split into batches, run them on up to
    /// `max_in_flight` worker threads, cache successes.
    fn fetch_unique(
        &self,
        unique: &[&String],
        source: &Lang,
        target: &Lang,
    ) -> Result<Vec<ItemResult>, TranslateError> {
        let batches: Vec<&[&String]> = unique.chunks(self.batch_size).collect();
        let n_batches = batches.len();
        let next_batch = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let outputs: Vec<Mutex<Option<Result<Vec<ItemResult>, TranslateError>>>> =
            (0..n_batches).map(|_| Mutex::new(None)).collect();

        let workers = self.max_in_flight.min(n_batches);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let b = next_batch.fetch_add(1, Ordering::SeqCst);
                    if b >= n_batches || abort.load(Ordering::SeqCst) {
                        return;
                    }
                    let texts: Vec<String> =
                        batches[b].iter().map(|t| t.to_string()).collect();
                    let outcome = self.call_with_retry(&texts, source, target, b as u64);
                    if matches!(
                        outcome,
                        Err(TranslateError::Auth(_)) | Err(TranslateError::RateLimitExhausted { .. })
                    ) {
                        abort.store(true, Ordering::SeqCst);
                    }
                    *outputs[b].lock().expect("batch slot") = Some(outcome);
                });
            }
        });

        let mut all = Vec::with_capacity(unique.len());
        for (b, slot) in outputs.into_iter().enumerate() {
            let outcome = slot
                .into_inner()
                .expect("batch slot")
                .unwrap_or_else(|| {
                    // worker exited early after another batch aborted
                    Ok(batches[b]
                        .iter()
                        .map(|_| Err("aborted before dispatch".to_string()))
                        .collect())
                });
            match outcome {
                Ok(items) => all.extend(items),
                Err(fatal) => return Err(fatal),
            }
        }

        if let Some(cache) = &self.cache {
            for (text, item) in unique.iter().zip(&all) {
                if let Ok(translated) = item {
                    let key = CacheKey::new(self.provider.name(), source, target, text);
                    cache.put(&key, translated)?;
                }
            }
        }
        Ok(all)
    }

    fn call_with_retry(
        &self,
        texts: &[String],
        source: &Lang,
        target: &Lang,
        batch_index: u64,
    ) -> Result<Vec<ItemResult>, TranslateError> {
        let mut last_message = String::new();
        for attempt in 0..self.retry.attempts {
            match self.provider.translate_batch(texts, source, target) {
                Ok(items) => {
                    debug_assert_eq!(items.len(), texts.len(), "provider broke alignment");
                    return Ok(items);
                }
                Err(ProviderError::Auth(message)) => {
                    return Err(TranslateError::Auth(message));
                }
                Err(ProviderError::Fatal(message)) => {
                    log::warn!("batch failed non-transiently, items marked failed: {message}");
                    return Ok(texts.iter().map(|_| Err(message.clone())).collect());
                }
                Err(ProviderError::Transient(message)) => {
                    last_message = message;
                    if attempt + 1 < self.retry.attempts {
                        let backoff = self.retry.base_delay.as_millis() as u64 * (1 << attempt);
                        // jitter only affects sleep timing, never results
                        let mut rng = RngStream::new(
                            batch_index,
                            format!("retry/{attempt}"),
                        )
                        .rng();
                        let jitter = rng.random_range(0..=backoff / 2 + 1);
                        log::warn!(
                            "transient failure (attempt {}/{}), retrying in {} ms: {last_message}",
                            attempt + 1,
                            self.retry.attempts,
                            backoff + jitter
                        );
                        std::thread::sleep(Duration::from_millis(backoff + jitter));
                    }
                }
            }
        }
        Err(TranslateError::RateLimitExhausted {
            attempts: self.retry.attempts,
            message: last_message,
        })
    }

    /// Round-trip a corpus: original -> pivot -> back. Records whose
    /// translation failed on either leg are dropped from the result and
    /// counted in the provenance under `translation_failed`.
    pub fn backtranslate_corpus(
        &self,
        corpus: &Corpus,
        pivot: &Lang,
    ) -> Result<Corpus, TranslateError> {
        if &corpus.lang == pivot {
            return Err(TranslateError::SamePivot(pivot.clone()));
        }
        let originals: Vec<String> =
            corpus.records.iter().map(|r| r.text_original.clone()).collect();
        let to_pivot = self.translate_batch(&originals, &corpus.lang, pivot)?;

        // only successful pivots go back
        let forward: Vec<(usize, String)> = to_pivot
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().ok().map(|t| (i, t.clone())))
            .collect();
        let pivot_texts: Vec<String> = forward.iter().map(|(_, t)| t.clone()).collect();
        let to_back = self.translate_batch(&pivot_texts, pivot, &corpus.lang)?;

        let mut records: Vec<TextRecord> = Vec::with_capacity(corpus.len());
        let mut failed = 0u64;
        let mut back_iter = forward.iter().zip(to_back);
        let mut next = back_iter.next();
        for (i, record) in corpus.records.iter().enumerate() {
            let mut this = None;
            if let Some(((fi, pivot_text), back)) = &next {
                if *fi == i {
                    this = Some((pivot_text.clone(), back.clone()));
                    next = back_iter.next();
                }
            }
            match this {
                Some((pivot_text, Ok(back_text))) => {
                    let mut r = record.clone();
                    r.text_pivot = Some(pivot_text);
                    r.text_back = Some(back_text);
                    records.push(r);
                }
                _ => {
                    failed += 1;
                    log::warn!("record {} dropped: translation failed", record.id);
                }
            }
        }

        let mut provenance = corpus.provenance.clone();
        if failed > 0 {
            *provenance.dropped.entry("translation_failed".to_string()).or_default() += failed;
            provenance.kept = provenance.kept.saturating_sub(failed);
        }
        Ok(Corpus {
            lang: corpus.lang.clone(),
            records,
            provenance,
        })
    }

    /// Repeated round trips: cycle 1 backtranslates the original, cycle
    /// `i+1` backtranslates cycle `i`'s result. Every returned corpus keeps
    /// the true original text so per-cycle analytics compare against it.
    /// With `checkpoint_dir` set, each cycle is written to disk as soon as
    /// it completes (`<lang>.back.jsonl`, then `<lang>.cycle<N>.jsonl`).
    pub fn iterated_backtranslate(
        &self,
        corpus: &Corpus,
        pivot: &Lang,
        cycles: u32,
        checkpoint_dir: Option<&Path>,
    ) -> Result<Vec<Corpus>, TranslateError> {
        assert!(cycles >= 1, "cycles must be >= 1");
        let mut out: Vec<Corpus> = Vec::with_capacity(cycles as usize);
        for cycle in 1..=cycles {
            let input = match out.last() {
                None => corpus.clone(),
                Some(prev) => {
                    // feed the previous back text in as the text to round-trip
                    let records = prev
                        .records
                        .iter()
                        .map(|r| TextRecord {
                            text_original: r.text_back.clone().expect("cycle records have back text"),
                            text_pivot: None,
                            text_back: None,
                            ..r.clone()
                        })
                        .collect();
                    Corpus {
                        lang: prev.lang.clone(),
                        records,
                        provenance: prev.provenance.clone(),
                    }
                }
            };
            let translated = self.backtranslate_corpus(&input, pivot)?;
            // restore the true originals
            let originals: HashMap<&str, &TextRecord> =
                corpus.records.iter().map(|r| (r.id.as_str(), r)).collect();
            let records = translated
                .records
                .into_iter()
                .map(|mut r| {
                    r.text_original = originals[r.id.as_str()].text_original.clone();
                    r
                })
                .collect();
            let result = Corpus {
                lang: translated.lang,
                records,
                provenance: translated.provenance,
            };
            if let Some(dir) = checkpoint_dir {
                let variant = if cycle == 1 { Variant::Back } else { Variant::Cycle(cycle) };
                let path = dir.join(format!("{}.{}.jsonl", result.lang, variant));
                if cycle == 1 {
                    let pivot_path = dir.join(format!("{}.pivot.jsonl", result.lang));
                    write_variant(&result, Variant::Pivot, &pivot_path)?;
                }
                write_variant(&result, variant, &path)?;
            }
            out.push(result);
        }
        Ok(out)
    }
}
