//! End-to-end pipeline orchestration and report emission.
//!
//! A single config drives ingest -> sample -> backtranslate -> analytics,
//! with every stage checkpointed under the output directory. Stage markers
//! are content-hashed, so rerunning with an unchanged config is a no-op and
//! stale checkpoints are recomputed. Results merge into a
//! [`ValidationReport`] that serializes to one JSON file, one CSV per
//! analytic, and five SVG plots whose rendered values match the CSVs.

pub mod svg;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    self, load_corpus, sample_corpus, write_provenance, write_variant, Adapter, Corpus, Lang,
    Provenance, Variant,
};
use crate::embed::{
    backtranslation_distances, embedding_verdict, load_embeddings, peer_baselines,
};
use crate::sentiment::{sentiment_report, LexiconSet, SentimentReport};
use crate::stats::{derive_seed, PRNG_ID};
use crate::topics::{k_sweep, load_stopwords, preprocess_for_topics, KSweepRow};
use crate::translate::{
    GoogleProvider, IdentityProvider, NoiseProvider, TranslateError, TranslationCache,
    TranslationProvider, Translator,
};

/// Cleaning-rule version; part of the ingest checkpoint hash so rule
/// changes invalidate old checkpoints.
const CLEAN_RULES_VERSION: &str = "clean/v1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("translation: {0}")]
    Provider(#[from] TranslateError),
    #[error("{0}")]
    Io(String),
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(context: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{context}: {e}"))
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub lang: String,
    pub input: PathBuf,
    #[serde(default = "default_adapter")]
    pub adapter: String,
    #[serde(default)]
    pub sample_size: Option<usize>,
}

fn default_adapter() -> String {
    "jsonl".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderConfig {
    Identity,
    Noise {
        rate: f64,
        /// Replacement vocabulary; defaults to the tokens of the corpus
        /// being translated.
        #[serde(default)]
        vocab: Option<Vec<String>>,
    },
    Google {
        /// Environment variable holding the API key.
        #[serde(default = "default_key_env")]
        api_key_env: String,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_key_env() -> String {
    "TRANSLATE_API_KEY".to_string()
}

fn default_batch_size() -> usize {
    100
}

fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    /// Stable identity used in checkpoint hashes.
    fn identity_string(&self, seed: u64) -> String {
        match self {
            ProviderConfig::Identity => "identity".to_string(),
            ProviderConfig::Noise { rate, vocab } => format!(
                "noise(rate={rate},seed={seed},vocab={})",
                vocab.as_ref().map_or("corpus".to_string(), |v| format!("explicit:{}", v.len()))
            ),
            ProviderConfig::Google { .. } => "google".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsToggles {
    #[serde(default = "default_true")]
    pub sentiment: bool,
    #[serde(default = "default_true")]
    pub topics: bool,
    #[serde(default = "default_true")]
    pub embedding: bool,
}

impl Default for AnalyticsToggles {
    fn default() -> Self {
        Self { sentiment: true, topics: true, embedding: true }
    }
}

fn default_true() -> bool {
    true
}

fn default_cycles() -> u32 {
    1
}

fn default_ks() -> Vec<usize> {
    vec![2, 5, 10, 15, 20, 50, 100, 150, 200]
}

fn default_alpha() -> f64 {
    0.1
}

fn default_beta() -> f64 {
    0.1
}

fn default_iterations() -> usize {
    5
}

fn default_replicates() -> usize {
    1000
}

fn default_permutations() -> usize {
    1000
}

fn default_peers() -> usize {
    5000
}

fn default_level() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub languages: Vec<LanguageSpec>,
    pub pivot: String,
    pub provider: ProviderConfig,
    #[serde(default = "default_cycles")]
    pub cycles: u32,
    #[serde(default)]
    pub analytics: AnalyticsToggles,
    #[serde(default)]
    pub lexicon_dir: Option<PathBuf>,
    #[serde(default)]
    pub stopword_dir: Option<PathBuf>,
    #[serde(default)]
    pub embedding_dir: Option<PathBuf>,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_peers")]
    pub peers: usize,
    #[serde(default = "default_true")]
    pub exclude_neutral: bool,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Root seed for every random draw in the run.
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Check every config invariant; collects all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.languages.is_empty() {
            problems.push("languages list is empty".to_string());
        }
        let pivot = match Lang::new(&self.pivot) {
            Ok(p) => Some(p),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        let mut seen = HashSet::new();
        for spec in &self.languages {
            match Lang::new(&spec.lang) {
                Ok(lang) => {
                    if Some(&lang) == pivot.as_ref() {
                        problems.push(format!("pivot language {lang} is among analyzed languages"));
                    }
                    if !seen.insert(lang.clone()) {
                        problems.push(format!("language {lang} listed twice"));
                    }
                }
                Err(e) => problems.push(e.to_string()),
            }
            if !spec.input.exists() {
                problems.push(format!("input {} does not exist", spec.input.display()));
            }
            if let Err(e) = Adapter::resolve(&spec.adapter) {
                problems.push(e.to_string());
            }
            if spec.sample_size == Some(0) {
                problems.push(format!("sample_size for {} must be >= 1", spec.lang));
            }
        }
        if let ProviderConfig::Noise { rate, .. } = &self.provider {
            if !(0.0..=1.0).contains(rate) {
                problems.push(format!("noise rate {rate} outside [0, 1]"));
            }
        }
        if self.cycles < 1 {
            problems.push("cycles must be >= 1".to_string());
        }
        if self.analytics.sentiment {
            match &self.lexicon_dir {
                Some(dir) if dir.is_dir() => {}
                Some(dir) => problems.push(format!("lexicon_dir {} is not a directory", dir.display())),
                None => problems.push("sentiment enabled but lexicon_dir is not set".to_string()),
            }
        }
        if self.analytics.topics {
            if self.ks.is_empty() {
                problems.push("topics enabled but ks is empty".to_string());
            }
            if self.ks.iter().any(|&k| k < 1) {
                problems.push("every K must be >= 1".to_string());
            }
            if self.iterations < 1 {
                problems.push("iterations must be >= 1".to_string());
            }
            if !(self.alpha > 0.0 && self.beta > 0.0) {
                problems.push("alpha and beta must be positive".to_string());
            }
            if self.permutations < 1 {
                problems.push("permutations must be >= 1".to_string());
            }
            if let Some(dir) = &self.stopword_dir {
                if !dir.is_dir() {
                    problems.push(format!("stopword_dir {} is not a directory", dir.display()));
                }
            }
        }
        if self.analytics.embedding {
            match &self.embedding_dir {
                Some(dir) if dir.is_dir() => {}
                Some(dir) => problems.push(format!("embedding_dir {} is not a directory", dir.display())),
                None => problems.push("embedding enabled but embedding_dir is not set".to_string()),
            }
            if self.peers < 1 {
                problems.push("peers must be >= 1".to_string());
            }
        }
        if self.replicates < 1 {
            problems.push("replicates must be >= 1".to_string());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            problems.push(format!("level {} outside (0, 1)", self.level));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// Outcome of one analytic section. A failed analytic never aborts the run;
/// it is recorded here and surfaces through the exit code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SectionOutcome<T> {
    Ok { data: T },
    Failed { error: String },
    Skipped,
}

impl<T> SectionOutcome<T> {
    pub fn data(&self) -> Option<&T> {
        match self {
            SectionOutcome::Ok { data } => Some(data),
            _ => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, SectionOutcome::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangTopics {
    pub rows: Vec<KSweepRow>,
    pub excluded_empty_original: u64,
    pub excluded_empty_back: u64,
    /// True when the language had no stopword list and proceeded without
    /// stopword removal.
    pub stopwords_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsSection {
    pub per_lang: BTreeMap<String, LangTopics>,
    /// Cross-language means per K; the source for the match-rate-vs-K plot.
    pub mean_rows: Vec<KSweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangEmbedding {
    /// Distances are reported rounded to 3 decimals.
    pub mean_back_distance: f64,
    pub min_baseline: f64,
    pub mean_baseline: f64,
    pub passes_min: bool,
    pub passes_mean: bool,
    pub excluded_records: usize,
    pub anchors: usize,
    pub peers_used: usize,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSection {
    pub per_lang: BTreeMap<String, LangEmbedding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub toolkit_version: String,
    pub prng: String,
    pub seed: u64,
    pub provider: String,
    pub pivot: String,
    pub languages: Vec<String>,
    pub cycles: u32,
    pub pooling: String,
    /// Cleaning/sampling/translation exclusion counts per language.
    pub per_lang_provenance: BTreeMap<String, Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub metadata: ReportMetadata,
    pub sentiment: SectionOutcome<SentimentReport>,
    pub topics: SectionOutcome<TopicsSection>,
    pub embedding: SectionOutcome<EmbeddingSection>,
}

impl ValidationReport {
    /// True when some requested section failed (exit code 3).
    pub fn partial_failure(&self) -> bool {
        self.sentiment.is_failed() || self.topics.is_failed() || self.embedding.is_failed()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| io_err(&format!("cannot read {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| io_err(&format!("cannot parse {}", path.display()), e))
    }
}

/// Number formatting shared by the CSV tables and the SVG plots, so plotted
/// values match table cells byte for byte.
pub fn fmt_rate(x: f64) -> String {
    format!("{x:.4}")
}

pub fn fmt_distance(x: f64) -> String {
    format!("{x:.3}")
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

// ---------------------------------------------------------------------------
// Checkpoint markers
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct StageMarker {
    stage: String,
    lang: String,
    params_hash: String,
    input_hash: String,
    /// Paths relative to the output root, with their content hashes.
    outputs: Vec<(String, String)>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| io_err(&format!("cannot hash {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_params<T: Serialize>(params: &T) -> String {
    let json = serde_json::to_vec(params).expect("params serialize");
    hex::encode(Sha256::digest(&json))
}

struct Checkpoints {
    root: PathBuf,
}

impl Checkpoints {
    fn new(root: &Path) -> Result<Self> {
        for sub in ["corpora", "markers", "reports", "reports/plots", "cache"] {
            std::fs::create_dir_all(root.join(sub))
                .map_err(|e| io_err(&format!("cannot create {}", root.join(sub).display()), e))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    fn corpora_dir(&self) -> PathBuf {
        self.root.join("corpora")
    }

    fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    fn corpus_path(&self, lang: &Lang, variant: Variant) -> PathBuf {
        self.corpora_dir().join(format!("{lang}.{variant}.jsonl"))
    }

    fn provenance_path(&self, lang: &Lang, variant: Variant) -> PathBuf {
        self.corpora_dir().join(format!("{lang}.{variant}.provenance.json"))
    }

    fn marker_path(&self, lang: &str, stage: &str) -> PathBuf {
        self.root.join("markers").join(format!("{lang}.{stage}.json"))
    }

    /// A stage is current when its marker exists and every recorded hash
    /// (parameters, input, outputs) still matches.
    fn stage_current(&self, lang: &str, stage: &str, params_hash: &str, input_hash: &str) -> bool {
        let path = self.marker_path(lang, stage);
        let Ok(text) = std::fs::read_to_string(&path) else { return false };
        let Ok(marker) = serde_json::from_str::<StageMarker>(&text) else { return false };
        if marker.params_hash != params_hash || marker.input_hash != input_hash {
            return false;
        }
        marker.outputs.iter().all(|(rel, hash)| {
            sha256_file(&self.root.join(rel)).map(|h| &h == hash).unwrap_or(false)
        })
    }

    fn write_marker(
        &self,
        lang: &str,
        stage: &str,
        params_hash: String,
        input_hash: String,
        outputs: &[PathBuf],
    ) -> Result<()> {
        let mut hashed = Vec::with_capacity(outputs.len());
        for path in outputs {
            let rel = path
                .strip_prefix(&self.root)
                .map_err(|e| io_err("marker output outside checkpoint root", e))?;
            hashed.push((rel.to_string_lossy().to_string(), sha256_file(path)?));
        }
        let marker = StageMarker {
            stage: stage.to_string(),
            lang: lang.to_string(),
            params_hash,
            input_hash,
            outputs: hashed,
        };
        let path = self.marker_path(lang, stage);
        let json = serde_json::to_vec_pretty(&marker).expect("marker serializes");
        std::fs::write(&path, json)
            .map_err(|e| io_err(&format!("cannot write {}", path.display()), e))
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

fn read_provenance(path: &Path) -> Result<Provenance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&format!("cannot parse {}", path.display()), e))
}

#[derive(Serialize)]
struct IngestParams<'a> {
    adapter: &'a str,
    lang: &'a str,
    pivot: &'a str,
    sample_size: Option<usize>,
    seed: u64,
    clean_rules: &'a str,
}

fn stage_ingest(
    config: &PipelineConfig,
    spec: &LanguageSpec,
    pivot: &Lang,
    checkpoints: &Checkpoints,
) -> Result<Corpus> {
    let lang = Lang::new(&spec.lang).map_err(|e| PipelineError::Config(e.to_string()))?;
    let params_hash = hash_params(&IngestParams {
        adapter: &spec.adapter,
        lang: lang.as_str(),
        pivot: pivot.as_str(),
        sample_size: spec.sample_size,
        seed: config.seed,
        clean_rules: CLEAN_RULES_VERSION,
    });
    let input_hash = sha256_file(&spec.input)?;
    let original = checkpoints.corpus_path(&lang, Variant::Original);
    let sidecar = checkpoints.provenance_path(&lang, Variant::Original);

    if checkpoints.stage_current(lang.as_str(), "ingest", &params_hash, &input_hash) {
        log::info!("{lang}: ingest checkpoint is current, skipping");
        let mut corpus = corpus::read_checkpoint(&original, None, None)
            .map_err(|e| io_err("reading ingest checkpoint", e))?;
        corpus.provenance = read_provenance(&sidecar)?;
        return Ok(corpus);
    }

    let adapter = Adapter::resolve(&spec.adapter).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut corpus = load_corpus(&spec.input, &adapter, Some(&lang), Some(pivot))
        .map_err(|e| io_err("ingest", e))?;
    if let Some(n) = spec.sample_size {
        corpus = sample_corpus(&corpus, n, config.seed).map_err(|e| io_err("sampling", e))?;
    }
    write_variant(&corpus, Variant::Original, &original).map_err(|e| io_err("checkpoint", e))?;
    write_provenance(&corpus.provenance, &sidecar).map_err(|e| io_err("checkpoint", e))?;
    checkpoints.write_marker(
        lang.as_str(),
        "ingest",
        params_hash,
        input_hash,
        &[original, sidecar],
    )?;
    Ok(corpus)
}

#[derive(Serialize)]
struct TranslateParams<'a> {
    provider: &'a str,
    provider_detail: String,
    pivot: &'a str,
    cycles: u32,
}

fn stage_translate(
    config: &PipelineConfig,
    corpus: &Corpus,
    pivot: &Lang,
    translator: &Translator,
    checkpoints: &Checkpoints,
) -> Result<Corpus> {
    let lang = &corpus.lang;
    let params_hash = hash_params(&TranslateParams {
        provider: translator.provider_name(),
        provider_detail: config.provider.identity_string(config.seed),
        pivot: pivot.as_str(),
        cycles: config.cycles,
    });
    let original = checkpoints.corpus_path(lang, Variant::Original);
    let input_hash = sha256_file(&original)?;
    let pivot_path = checkpoints.corpus_path(lang, Variant::Pivot);
    let back_path = checkpoints.corpus_path(lang, Variant::Back);
    let back_sidecar = checkpoints.provenance_path(lang, Variant::Back);

    if checkpoints.stage_current(lang.as_str(), "translate", &params_hash, &input_hash) {
        log::info!("{lang}: translate checkpoint is current, skipping");
        let mut merged = corpus::read_checkpoint(&original, Some(&pivot_path), Some(&back_path))
            .map_err(|e| io_err("reading translate checkpoint", e))?;
        merged.provenance = read_provenance(&back_sidecar)?;
        // records that failed translation are absent from the back file
        merged.records.retain(|r| r.text_back.is_some());
        return Ok(merged);
    }

    let cycles = translator.iterated_backtranslate(
        corpus,
        pivot,
        config.cycles,
        Some(&checkpoints.corpora_dir()),
    )?;
    let first = cycles.into_iter().next().expect("cycles >= 1");
    write_provenance(&first.provenance, &back_sidecar).map_err(|e| io_err("checkpoint", e))?;

    let mut outputs = vec![pivot_path, back_path, back_sidecar];
    for n in 2..=config.cycles {
        outputs.push(checkpoints.corpus_path(lang, Variant::Cycle(n)));
    }
    checkpoints.write_marker(lang.as_str(), "translate", params_hash, input_hash, &outputs)?;
    Ok(first)
}

// ---------------------------------------------------------------------------
// Analytics
// ---------------------------------------------------------------------------

/// Load every checkpointed corpus in a directory: each `<lang>.original.jsonl`
/// plus its pivot/back variants and provenance sidecar when present.
pub fn discover_corpora(dir: &Path) -> Result<Vec<Corpus>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| io_err(&format!("cannot read {}", dir.display()), e))?;
    let mut originals: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".original.jsonl"))
        })
        .collect();
    originals.sort();
    if originals.is_empty() {
        return Err(PipelineError::Io(format!(
            "no *.original.jsonl corpora under {}",
            dir.display()
        )));
    }
    let mut corpora = Vec::with_capacity(originals.len());
    for original in originals {
        let stem = original
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".original.jsonl"))
            .expect("filtered for suffix")
            .to_string();
        let optional = |variant: &str| {
            let path = dir.join(format!("{stem}.{variant}.jsonl"));
            path.exists().then_some(path)
        };
        let pivot = optional("pivot");
        let back = optional("back");
        let mut corpus = corpus::read_checkpoint(&original, pivot.as_deref(), back.as_deref())
            .map_err(|e| io_err("reading corpus checkpoint", e))?;
        let sidecar = dir.join(format!("{stem}.original.provenance.json"));
        if sidecar.exists() {
            corpus.provenance = read_provenance(&sidecar)?;
        }
        corpora.push(corpus);
    }
    Ok(corpora)
}

pub fn run_sentiment(corpora: &[Corpus], config: &PipelineConfig, pivot: &Lang) -> SectionOutcome<SentimentReport> {
    let Some(dir) = &config.lexicon_dir else {
        return SectionOutcome::Failed { error: "lexicon_dir not set".to_string() };
    };
    let lexicons = match LexiconSet::from_dir(dir) {
        Ok(l) => l,
        Err(e) => return SectionOutcome::Failed { error: e.to_string() },
    };
    let refs: Vec<&Corpus> = corpora.iter().collect();
    match sentiment_report(
        &refs,
        &lexicons,
        pivot,
        config.exclude_neutral,
        config.replicates,
        config.level,
        config.seed,
    ) {
        Ok(report) => SectionOutcome::Ok { data: report },
        Err(e) => SectionOutcome::Failed { error: e.to_string() },
    }
}

pub fn run_topics(corpora: &[Corpus], config: &PipelineConfig) -> SectionOutcome<TopicsSection> {
    let mut per_lang = BTreeMap::new();
    for corpus in corpora {
        let lang = corpus.lang.as_str().to_string();
        let stopword_file = config
            .stopword_dir
            .as_ref()
            .map(|d| d.join(format!("{lang}.txt")))
            .filter(|p| p.exists());
        let stopwords_missing = stopword_file.is_none();
        if stopwords_missing {
            log::warn!("{lang}: no stopword list, proceeding without stopword removal");
        }
        let stopwords = match &stopword_file {
            Some(path) => match load_stopwords(path) {
                Ok(s) => s,
                Err(e) => return SectionOutcome::Failed { error: e.to_string() },
            },
            None => HashSet::new(),
        };

        let mut excluded_original = 0u64;
        let docs: Vec<_> = corpus
            .records
            .iter()
            .map(|r| preprocess_for_topics(&r.id, &r.text_original, &stopwords))
            .filter(|d| {
                let keep = !d.is_empty();
                if !keep {
                    excluded_original += 1;
                }
                keep
            })
            .collect();
        let mut excluded_back = 0u64;
        let back_docs: Vec<_> = corpus
            .records
            .iter()
            .filter_map(|r| {
                r.text_back.as_deref().map(|t| preprocess_for_topics(&r.id, t, &stopwords))
            })
            .filter(|d| {
                let keep = !d.is_empty();
                if !keep {
                    excluded_back += 1;
                }
                keep
            })
            .collect();

        let seed = derive_seed(config.seed, &format!("topics/{lang}"));
        let rows = match k_sweep(
            &docs,
            &back_docs,
            &config.ks,
            config.alpha,
            config.beta,
            config.iterations,
            config.permutations,
            seed,
        ) {
            Ok(rows) => rows,
            Err(e) => return SectionOutcome::Failed { error: format!("{lang}: {e}") },
        };
        per_lang.insert(
            lang,
            LangTopics {
                rows,
                excluded_empty_original: excluded_original,
                excluded_empty_back: excluded_back,
                stopwords_missing,
            },
        );
    }

    let mean_rows = config
        .ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let n = per_lang.len().max(1) as f64;
            let sum = |f: &dyn Fn(&KSweepRow) -> f64| {
                per_lang.values().map(|l| f(&l.rows[i])).sum::<f64>() / n
            };
            KSweepRow {
                k,
                match_rate: sum(&|r| r.match_rate),
                null_mean: sum(&|r| r.null_mean),
                null_std_err: sum(&|r| r.null_std_err),
            }
        })
        .collect();

    SectionOutcome::Ok { data: TopicsSection { per_lang, mean_rows } }
}

pub fn run_embedding(corpora: &[Corpus], config: &PipelineConfig) -> SectionOutcome<EmbeddingSection> {
    let Some(dir) = &config.embedding_dir else {
        return SectionOutcome::Failed { error: "embedding_dir not set".to_string() };
    };
    let mut per_lang = BTreeMap::new();
    let mut skipped = Vec::new();
    for corpus in corpora {
        let lang = corpus.lang.as_str().to_string();
        let path = dir.join(format!("{lang}.vec"));
        if !path.exists() {
            log::warn!("{lang}: no embedding table at {}, skipped", path.display());
            skipped.push((lang, "missing embedding table".to_string()));
            continue;
        }
        let table = match load_embeddings(&path) {
            Ok(t) => t,
            Err(e) => return SectionOutcome::Failed { error: format!("{lang}: {e}") },
        };
        let distances = match backtranslation_distances(corpus, &table) {
            Ok(d) => d,
            Err(e) => return SectionOutcome::Failed { error: format!("{lang}: {e}") },
        };
        let baselines = match peer_baselines(corpus, &table, config.peers, config.seed) {
            Ok(b) => b,
            Err(e) => return SectionOutcome::Failed { error: format!("{lang}: {e}") },
        };
        let verdict = embedding_verdict(distances.mean, &baselines);
        per_lang.insert(
            lang,
            LangEmbedding {
                mean_back_distance: round3(distances.mean),
                min_baseline: round3(baselines.min_baseline),
                mean_baseline: round3(baselines.mean_baseline),
                passes_min: verdict.passes_min,
                passes_mean: verdict.passes_mean,
                excluded_records: distances.excluded,
                anchors: baselines.anchors,
                peers_used: baselines.peers_used,
                clamped: baselines.clamped,
            },
        );
    }
    SectionOutcome::Ok { data: EmbeddingSection { per_lang, skipped } }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

fn build_provider(
    config: &PipelineConfig,
    corpus: &Corpus,
) -> Result<Arc<dyn TranslationProvider>> {
    match &config.provider {
        ProviderConfig::Identity => Ok(Arc::new(IdentityProvider)),
        ProviderConfig::Noise { rate, vocab } => {
            let provider = match vocab {
                Some(v) => NoiseProvider::new(*rate, config.seed, v.clone()),
                None => NoiseProvider::from_corpus(*rate, config.seed, corpus),
            };
            Ok(Arc::new(provider))
        }
        ProviderConfig::Google { api_key_env, .. } => match std::env::var(api_key_env) {
            Ok(key) if !key.is_empty() => Ok(Arc::new(GoogleProvider::new(key))),
            _ => Err(PipelineError::Provider(TranslateError::Auth(format!(
                "{api_key_env} is not set"
            )))),
        },
    }
}

fn build_translator(
    config: &PipelineConfig,
    provider: Arc<dyn TranslationProvider>,
    cache_root: &Path,
) -> Translator {
    let mut translator =
        Translator::new(provider).with_cache(Arc::new(TranslationCache::open(cache_root)));
    if let ProviderConfig::Google { batch_size, max_in_flight, .. } = &config.provider {
        translator = translator
            .with_batch_size(*batch_size)
            .with_max_in_flight(*max_in_flight);
    }
    translator
}

/// Run the whole pipeline from a validated config. `provider_override`
/// substitutes the provider built from the config (tests use instrumented
/// providers); everything else, including caching and checkpoints, behaves
/// identically.
pub fn run_pipeline_with(
    config: &PipelineConfig,
    provider_override: Option<Arc<dyn TranslationProvider>>,
) -> Result<ValidationReport> {
    config.validate()?;
    let pivot = Lang::new(&config.pivot).map_err(|e| PipelineError::Config(e.to_string()))?;
    let checkpoints = Checkpoints::new(&config.out_dir)?;

    let mut corpora: Vec<Corpus> = Vec::with_capacity(config.languages.len());
    for spec in &config.languages {
        let corpus = stage_ingest(config, spec, &pivot, &checkpoints)?;
        let provider = match &provider_override {
            Some(p) => Arc::clone(p),
            None => build_provider(config, &corpus)?,
        };
        let translator = build_translator(config, provider, &config.out_dir.join("cache"));
        let translated = stage_translate(config, &corpus, &pivot, &translator, &checkpoints)?;
        corpora.push(translated);
    }

    let sentiment = if config.analytics.sentiment {
        run_sentiment(&corpora, config, &pivot)
    } else {
        SectionOutcome::Skipped
    };
    let topics = if config.analytics.topics {
        run_topics(&corpora, config)
    } else {
        SectionOutcome::Skipped
    };
    let embedding = if config.analytics.embedding {
        run_embedding(&corpora, config)
    } else {
        SectionOutcome::Skipped
    };

    let mut languages: Vec<String> =
        corpora.iter().map(|c| c.lang.as_str().to_string()).collect();
    languages.sort();
    let per_lang_provenance = corpora
        .iter()
        .map(|c| (c.lang.as_str().to_string(), c.provenance.clone()))
        .collect();

    let report = ValidationReport {
        metadata: ReportMetadata {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            prng: PRNG_ID.to_string(),
            seed: config.seed,
            provider: config.provider.identity_string(config.seed),
            pivot: pivot.as_str().to_string(),
            languages,
            cycles: config.cycles,
            pooling: "concatenate evaluable items across languages before bootstrap".to_string(),
            per_lang_provenance,
        },
        sentiment,
        topics,
        embedding,
    };

    let reports_dir = checkpoints.reports_dir();
    emit_tables(&report, &reports_dir)?;
    emit_plots(&report, &reports_dir.join("plots"))?;
    Ok(report)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<ValidationReport> {
    run_pipeline_with(config, None)
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| io_err(&format!("cannot create {}", parent.display()), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(&format!("cannot write {}", path.display()), e))
}

fn sentiment_csv(report: &ValidationReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["language".to_string()];
    for variant in ["original", "pivot", "back"] {
        for col in ["n", "median", "hci99_low", "hci99_high"] {
            header.push(format!("{variant}_{col}"));
        }
    }
    w.write_record(&header).expect("csv header");
    if let Some(data) = report.sentiment.data() {
        let mut write_row = |name: &str, summary: &crate::sentiment::LangSentiment| {
            let mut row = vec![name.to_string()];
            for variant in ["original", "pivot", "back"] {
                match summary.get(variant) {
                    Some(stat) => {
                        row.push(stat.n_evaluable.to_string());
                        row.push(fmt_rate(stat.median));
                        row.push(fmt_rate(stat.hci99_low));
                        row.push(fmt_rate(stat.hci99_high));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            w.write_record(&row).expect("csv row");
        };
        for (lang, summary) in &data.per_lang {
            write_row(lang, summary);
        }
        write_row("pooled", &data.pooled);
    }
    w.into_inner().expect("csv buffer")
}

fn topics_csv(report: &ValidationReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["language", "k", "match_rate", "null_mean", "null_std_err"])
        .expect("csv header");
    if let Some(data) = report.topics.data() {
        let mut write_row = |lang: &str, row: &KSweepRow| {
            w.write_record([
                lang.to_string(),
                row.k.to_string(),
                fmt_rate(row.match_rate),
                fmt_rate(row.null_mean),
                format!("{:.6}", row.null_std_err),
            ])
            .expect("csv row");
        };
        for (lang, topics) in &data.per_lang {
            for row in &topics.rows {
                write_row(lang, row);
            }
        }
        for row in &data.mean_rows {
            write_row("(mean)", row);
        }
    }
    w.into_inner().expect("csv buffer")
}

fn embedding_csv(report: &ValidationReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "language",
        "mean_back_distance",
        "min_baseline",
        "mean_baseline",
        "passes_min",
        "passes_mean",
        "excluded_records",
        "anchors",
        "peers_used",
        "clamped",
    ])
    .expect("csv header");
    if let Some(data) = report.embedding.data() {
        for (lang, e) in &data.per_lang {
            w.write_record([
                lang.to_string(),
                fmt_distance(e.mean_back_distance),
                fmt_distance(e.min_baseline),
                fmt_distance(e.mean_baseline),
                e.passes_min.to_string(),
                e.passes_mean.to_string(),
                e.excluded_records.to_string(),
                e.anchors.to_string(),
                e.peers_used.to_string(),
                e.clamped.to_string(),
            ])
            .expect("csv row");
        }
    }
    w.into_inner().expect("csv buffer")
}

/// Write the merged JSON report plus one CSV per analytic. Sections that
/// are failed or skipped produce header-only CSVs; their status is explicit
/// in the JSON. Returns the written paths.
pub fn emit_tables(report: &ValidationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    let paths = vec![
        (dir.join("report.json"), json),
        (dir.join("sentiment.csv"), sentiment_csv(report)),
        (dir.join("topics.csv"), topics_csv(report)),
        (dir.join("embedding.csv"), embedding_csv(report)),
    ];
    for (path, bytes) in &paths {
        write_bytes(path, bytes)?;
    }
    Ok(paths.into_iter().map(|(p, _)| p).collect())
}

/// Render the five SVG figures for the sections present in the report.
/// Missing sections skip their plots with a notice. Returns written paths.
pub fn emit_plots(report: &ValidationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        write_bytes(&path, content.as_bytes())?;
        written.push(path);
        Ok(())
    };

    match report.sentiment.data() {
        Some(data) => {
            emit("sentiment_pooled.svg", svg::sentiment_pooled_svg(&data.pooled))?;
            emit("sentiment_by_language.svg", svg::sentiment_by_language_svg(&data.per_lang))?;
        }
        None => log::warn!("sentiment section unavailable; skipping its plots"),
    }
    match report.topics.data() {
        Some(data) => {
            emit("topics_heatmap.svg", svg::topics_heatmap_svg(data))?;
            emit("topics_by_k.svg", svg::topics_by_k_svg(data))?;
        }
        None => log::warn!("topics section unavailable; skipping its plots"),
    }
    match report.embedding.data() {
        Some(data) => {
            emit("embedding_distances.svg", svg::embedding_distances_svg(data))?;
        }
        None => log::warn!("embedding section unavailable; skipping its plots"),
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::VariantStat;

    fn toy_report() -> ValidationReport {
        let mut per_lang = BTreeMap::new();
        let mut de = crate::sentiment::LangSentiment::new();
        de.insert(
            "original".to_string(),
            VariantStat { n_evaluable: 10, median: 0.9, hci99_low: 0.8, hci99_high: 1.0 },
        );
        de.insert(
            "back".to_string(),
            VariantStat { n_evaluable: 10, median: 0.7, hci99_low: 0.6, hci99_high: 0.8 },
        );
        per_lang.insert("de".to_string(), de.clone());
        let sentiment = SentimentReport {
            per_lang,
            pooled: de,
            exclude_neutral: true,
            replicates: 100,
            level: 0.99,
            skipped: vec![],
        };

        let mut topics_per_lang = BTreeMap::new();
        let rows = vec![
            KSweepRow { k: 2, match_rate: 0.78, null_mean: 0.52, null_std_err: 0.01 },
            KSweepRow { k: 5, match_rate: 0.61, null_mean: 0.2, null_std_err: 0.01 },
        ];
        topics_per_lang.insert(
            "de".to_string(),
            LangTopics {
                rows: rows.clone(),
                excluded_empty_original: 1,
                excluded_empty_back: 2,
                stopwords_missing: false,
            },
        );
        let topics = TopicsSection { per_lang: topics_per_lang, mean_rows: rows };

        let mut embed_per_lang = BTreeMap::new();
        embed_per_lang.insert(
            "de".to_string(),
            LangEmbedding {
                mean_back_distance: 0.065,
                min_baseline: 0.059,
                mean_baseline: 0.416,
                passes_min: false,
                passes_mean: true,
                excluded_records: 3,
                anchors: 7,
                peers_used: 5,
                clamped: true,
            },
        );
        let embedding = EmbeddingSection { per_lang: embed_per_lang, skipped: vec![] };

        ValidationReport {
            metadata: ReportMetadata {
                toolkit_version: "0.1.0".to_string(),
                prng: PRNG_ID.to_string(),
                seed: 42,
                provider: "identity".to_string(),
                pivot: "en".to_string(),
                languages: vec!["de".to_string()],
                cycles: 1,
                pooling: "concatenate evaluable items across languages before bootstrap".to_string(),
                per_lang_provenance: BTreeMap::new(),
            },
            sentiment: SectionOutcome::Ok { data: sentiment },
            topics: SectionOutcome::Ok { data: topics },
            embedding: SectionOutcome::Ok { data: embedding },
        }
    }

    #[test]
    fn report_json_round_trips() {
        let report = toy_report();
        let json = serde_json::to_string(&report).unwrap();
        let parsed: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn failed_and_skipped_sections_round_trip() {
        let mut report = toy_report();
        report.topics = SectionOutcome::Failed { error: "boom".to_string() };
        report.embedding = SectionOutcome::Skipped;
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"status\":\"failed\""));
        assert!(json.contains("\"status\":\"skipped\""));
        let parsed: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
        assert!(parsed.partial_failure());
    }

    #[test]
    fn sentiment_csv_has_one_row_per_language_plus_pooled() {
        let report = toy_report();
        let csv = String::from_utf8(sentiment_csv(&report)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3, "header + de + pooled:\n{csv}");
        assert!(lines[1].starts_with("de,"));
        assert!(lines[2].starts_with("pooled,"));
        // pivot columns are explicit empties, not absent
        assert_eq!(lines[1].split(',').count(), 13);
        assert!(lines[1].contains(",,,,"));
    }

    #[test]
    fn partial_report_emits_header_only_csv() {
        let mut report = toy_report();
        report.topics = SectionOutcome::Failed { error: "x".to_string() };
        let csv = String::from_utf8(topics_csv(&report)).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn plot_values_match_csv_values() {
        let report = toy_report();
        let csv = String::from_utf8(topics_csv(&report)).unwrap();
        let heatmap = svg::topics_heatmap_svg(report.topics.data().unwrap());
        for row in report.topics.data().unwrap().per_lang["de"].rows.iter() {
            let cell = fmt_rate(row.match_rate);
            let null = fmt_rate(row.null_mean);
            assert!(csv.contains(&cell) && heatmap.contains(&cell));
            assert!(csv.contains(&null) && heatmap.contains(&null));
        }

        let ecsv = String::from_utf8(embedding_csv(&report)).unwrap();
        let eplot = svg::embedding_distances_svg(report.embedding.data().unwrap());
        for value in [0.065, 0.059, 0.416] {
            let s = fmt_distance(value);
            assert!(ecsv.contains(&s) && eplot.contains(&s), "{s} missing");
        }
    }

    #[test]
    fn emit_tables_and_plots_write_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = toy_report();
        let tables = emit_tables(&report, dir.path()).unwrap();
        assert_eq!(tables.len(), 4);
        let loaded = ValidationReport::from_file(&dir.path().join("report.json")).unwrap();
        assert_eq!(loaded, report);

        let plots = emit_plots(&report, &dir.path().join("plots")).unwrap();
        assert_eq!(plots.len(), 5);
        for path in &plots {
            let content = std::fs::read_to_string(path).unwrap();
            assert!(content.starts_with("<svg"), "{} is not svg", path.display());
        }

        // single-language degenerate layout renders every plot
        let mut partial = report.clone();
        partial.sentiment = SectionOutcome::Skipped;
        let plots = emit_plots(&partial, &dir.path().join("plots2")).unwrap();
        assert_eq!(plots.len(), 3);
    }

    #[test]
    fn config_validation_reports_problems() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("de.jsonl");
        std::fs::write(&input, "{\"id\":\"1\",\"lang\":\"de\",\"text\":\"gut\",\"label\":1}\n").unwrap();
        let mut config = PipelineConfig {
            languages: vec![LanguageSpec {
                lang: "de".to_string(),
                input,
                adapter: "jsonl".to_string(),
                sample_size: None,
            }],
            pivot: "en".to_string(),
            provider: ProviderConfig::Identity,
            cycles: 1,
            analytics: AnalyticsToggles { sentiment: false, topics: false, embedding: false },
            lexicon_dir: None,
            stopword_dir: None,
            embedding_dir: None,
            ks: default_ks(),
            alpha: 0.1,
            beta: 0.1,
            iterations: 5,
            replicates: 10,
            permutations: 10,
            peers: 5,
            exclude_neutral: true,
            level: 0.99,
            seed: 1,
            out_dir: dir.path().join("out"),
        };
        assert!(config.validate().is_ok());

        config.pivot = "de".to_string();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("among analyzed languages"), "{err}");

        config.pivot = "en".to_string();
        config.analytics.sentiment = true;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("lexicon_dir"), "{err}");
    }
}
