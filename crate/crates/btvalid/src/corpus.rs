//! Corpus ingestion: normalized records, text cleaning, dataset adapters,
//! and reproducible sampling.
//!
//! Heterogeneous labeled tweet datasets are loaded through adapters into a
//! single interchange format (JSON lines with `id`, `lang`, `text`, optional
//! `label`). Every row passes through [`clean_text`]; rows that clean to an
//! empty string are dropped and counted, as are rows filtered by language.
//! A [`Corpus`] carries a provenance audit trail whose drop counts always
//! reconcile with the raw row count.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::index::sample as index_sample;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::RngStream;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid language code {0:?}: expected two ASCII letters")]
    BadLang(String),
    #[error("unknown adapter {0:?}")]
    UnknownAdapter(String),
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("adapter config {path}: {message}")]
    BadAdapterConfig { path: String, message: String },
    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("corpus file {path} line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("label {0} outside {{-1, 0, +1}}")]
    BadLabel(i64),
}

/// Two-letter ISO 639-1 style language code, stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Lang(String);

impl Lang {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let lower = code.trim().to_lowercase();
        if lower.len() == 2 && lower.chars().all(|c| c.is_ascii_lowercase()) {
            Ok(Lang(lower))
        } else {
            Err(CorpusError::BadLang(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Lang {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        Lang::new(&s).map_err(|e| e.to_string())
    }
}

impl From<Lang> for String {
    fn from(l: Lang) -> String {
        l.0
    }
}

/// Gold or predicted sentiment in {-1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub fn from_value(v: i64) -> Result<Self, CorpusError> {
        match v {
            -1 => Ok(Self::Negative),
            0 => Ok(Self::Neutral),
            1 => Ok(Self::Positive),
            other => Err(CorpusError::BadLabel(other)),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Self::Negative => -1,
            Self::Neutral => 0,
            Self::Positive => 1,
        }
    }

    /// Sign of a polarity value.
    pub fn from_sign(polarity: f64) -> Self {
        if polarity > 0.0 {
            Self::Positive
        } else if polarity < 0.0 {
            Self::Negative
        } else {
            Self::Neutral
        }
    }
}

impl TryFrom<i64> for SentimentLabel {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, String> {
        SentimentLabel::from_value(v).map_err(|e| e.to_string())
    }
}

impl From<SentimentLabel> for i64 {
    fn from(l: SentimentLabel) -> i64 {
        l.as_i8() as i64
    }
}

/// One short text with its translation variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub lang: Lang,
    pub text_original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_pivot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_back: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SentimentLabel>,
}

/// Cleaning and sampling audit trail. `raw_count == kept + sum(dropped)`
/// always holds for corpora produced by [`load_corpus`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub raw_count: u64,
    pub kept: u64,
    pub dropped: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleInfo>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub seed: u64,
    pub n: usize,
    pub from: u64,
}

impl Provenance {
    fn drop(&mut self, rule: &str) {
        *self.dropped.entry(rule.to_string()).or_default() += 1;
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }

    /// Drop-count reconciliation: raw = kept + dropped.
    pub fn reconciles(&self) -> bool {
        self.raw_count == self.kept + self.dropped_total()
    }
}

/// A monolingual, immutable collection of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub lang: Lang,
    pub records: Vec<TextRecord>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Text cleaning
// ---------------------------------------------------------------------------

fn digit_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Decimal digits only (Unicode Nd), including digits embedded in tokens.
    RE.get_or_init(|| Regex::new(r"\p{Nd}").unwrap())
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Any "http"-initiated or "www."-initiated run up to whitespace. Broader
    // than scheme-only matching so no "http" substring ever survives.
    RE.get_or_init(|| Regex::new(r"(?i)(http|www\.)\S*").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // An @-initiated token; \S* also consumes the colon of a "RT @handle:"
    // retweet marker.
    RE.get_or_init(|| Regex::new(r"(^|\s)@\S*").unwrap())
}

fn leading_rt_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?i:rt)\b").unwrap())
}

fn clean_pass(raw: &str) -> String {
    // Digits first: stripping them can expose mentions/URLs ("1@x", "h2ttp").
    let no_digits = digit_re().replace_all(raw, "");
    let no_urls = url_re().replace_all(&no_digits, " ");
    let no_rt = leading_rt_re().replace(&no_urls, "");
    let no_mentions = mention_re().replace_all(&no_rt, |caps: &regex::Captures| {
        caps.get(1).map_or("", |m| m.as_str()).to_string()
    });
    let lowered = no_mentions.to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalize a raw tweet: strip digits, URLs, retweet markers, and
/// @-mentions, lowercase, and collapse whitespace. Total and idempotent;
/// the result may be empty.
pub fn clean_text(raw: &str) -> String {
    // Removal rules can expose new matches (a mention hiding a leading "rt",
    // digits hiding a URL), so iterate to the fixed point. Each pass only
    // removes characters, so this terminates.
    let mut current = clean_pass(raw);
    loop {
        let next = clean_pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

// ---------------------------------------------------------------------------
// Dataset adapters
// ---------------------------------------------------------------------------

/// Column mapping for one source dataset. File schemas live in config files,
/// not code, because upstream datasets do not share a layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    /// "jsonl" or "csv".
    pub format: String,
    #[serde(default)]
    pub delimiter: Option<char>,
    #[serde(default = "default_true")]
    pub has_headers: bool,
    /// Source field/column names for id, lang, text, label.
    pub columns: ColumnMap,
    /// Raw label string -> {-1,0,+1}. Absent means labels are integers.
    #[serde(default)]
    pub label_map: Option<BTreeMap<String, i64>>,
    /// Datasets without a language column declare the language here.
    #[serde(default)]
    pub fixed_lang: Option<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub id: String,
    #[serde(default)]
    pub lang: Option<String>,
    pub text: String,
    #[serde(default)]
    pub label: Option<String>,
}

/// A registered way of reading one dataset into the interchange schema.
#[derive(Debug, Clone)]
pub enum Adapter {
    /// Interchange JSONL: `{"id", "lang", "text", "label"?}` per line.
    Jsonl,
    Config(Box<AdapterConfig>),
}

impl Adapter {
    /// Resolve an adapter name: `"jsonl"` is built in; anything else is a
    /// path to an adapter config JSON file.
    pub fn resolve(name: &str) -> Result<Self, CorpusError> {
        if name.eq_ignore_ascii_case("jsonl") {
            return Ok(Adapter::Jsonl);
        }
        let path = Path::new(name);
        if !path.exists() {
            return Err(CorpusError::UnknownAdapter(name.to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Unreadable {
            path: name.to_string(),
            source: e,
        })?;
        let config: AdapterConfig =
            serde_json::from_str(&text).map_err(|e| CorpusError::BadAdapterConfig {
                path: name.to_string(),
                message: e.to_string(),
            })?;
        if config.format != "jsonl" && config.format != "csv" {
            return Err(CorpusError::BadAdapterConfig {
                path: name.to_string(),
                message: format!("unsupported format {:?}", config.format),
            });
        }
        Ok(Adapter::Config(Box::new(config)))
    }
}

/// One raw row as the adapter saw it, before cleaning.
struct RawRow {
    id: String,
    lang: Option<String>,
    text: String,
    label: Option<i64>,
}

fn parse_label_value(
    raw: &str,
    map: &Option<BTreeMap<String, i64>>,
) -> Result<Option<i64>, String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    if let Some(map) = map {
        return match map.get(trimmed) {
            Some(v) => Ok(Some(*v)),
            None => Err(format!("label {trimmed:?} not in adapter label_map")),
        };
    }
    trimmed
        .parse::<f64>()
        .map(|v| Some(v.round() as i64))
        .map_err(|_| format!("label {trimmed:?} is not numeric"))
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Load a dataset into a cleaned, monolingual corpus.
///
/// Rows cleaning to empty, rows in other languages, rows in the excluded
/// (pivot) language, duplicate ids, and malformed rows are dropped and
/// counted under their rule; a malformed row is logged with its line number
/// and the run continues. An unreadable file is fatal.
pub fn load_corpus(
    path: &Path,
    adapter: &Adapter,
    lang_filter: Option<&Lang>,
    exclude_lang: Option<&Lang>,
) -> Result<Corpus, CorpusError> {
    let display = path.display().to_string();
    let mut provenance = Provenance {
        source: format!("{display} ({})", adapter_tag(adapter)),
        ..Default::default()
    };

    let mut records: Vec<TextRecord> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut corpus_lang: Option<Lang> = lang_filter.cloned();

    let mut handle_row = |row: Result<RawRow, String>, line: usize, prov: &mut Provenance| {
        prov.raw_count += 1;
        let row = match row {
            Ok(r) => r,
            Err(message) => {
                log::warn!("{display}:{line}: malformed row skipped: {message}");
                prov.drop("malformed");
                return;
            }
        };
        let lang = match row.lang.as_deref().map(Lang::new) {
            Some(Ok(l)) => l,
            Some(Err(_)) => {
                log::warn!("{display}:{line}: malformed row skipped: bad language {:?}", row.lang);
                prov.drop("malformed");
                return;
            }
            None => match &corpus_lang {
                Some(l) => l.clone(),
                None => {
                    log::warn!("{display}:{line}: malformed row skipped: no language");
                    prov.drop("malformed");
                    return;
                }
            },
        };
        if let Some(excluded) = exclude_lang {
            if &lang == excluded {
                prov.drop("pivot_excluded");
                return;
            }
        }
        if let Some(filter) = lang_filter {
            if &lang != filter {
                prov.drop("lang_filtered");
                return;
            }
        } else if let Some(first) = &corpus_lang {
            // No explicit filter: the first row's language defines the corpus.
            if &lang != first {
                prov.drop("lang_filtered");
                return;
            }
        } else {
            corpus_lang = Some(lang.clone());
        }
        let label = match row.label.map(SentimentLabel::from_value).transpose() {
            Ok(l) => l,
            Err(_) => {
                log::warn!("{display}:{line}: malformed row skipped: label {:?}", row.label);
                prov.drop("malformed");
                return;
            }
        };
        let text = clean_text(&row.text);
        if text.is_empty() {
            prov.drop("empty_after_clean");
            return;
        }
        if !seen_ids.insert(row.id.clone()) {
            log::warn!("{display}:{line}: duplicate id {:?} skipped", row.id);
            prov.drop("duplicate_id");
            return;
        }
        prov.kept += 1;
        records.push(TextRecord {
            id: row.id,
            lang,
            text_original: text,
            text_pivot: None,
            text_back: None,
            label,
        });
    };

    match adapter {
        Adapter::Jsonl => {
            let file = File::open(path).map_err(|e| CorpusError::Unreadable {
                path: display.clone(),
                source: e,
            })?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| CorpusError::Unreadable {
                    path: display.clone(),
                    source: e,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let row = parse_interchange_line(&line);
                handle_row(row, idx + 1, &mut provenance);
            }
        }
        Adapter::Config(config) => match config.format.as_str() {
            "jsonl" => {
                let file = File::open(path).map_err(|e| CorpusError::Unreadable {
                    path: display.clone(),
                    source: e,
                })?;
                for (idx, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| CorpusError::Unreadable {
                        path: display.clone(),
                        source: e,
                    })?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let row = parse_mapped_json_line(&line, config);
                    handle_row(row, idx + 1, &mut provenance);
                }
            }
            "csv" => {
                let file = File::open(path).map_err(|e| CorpusError::Unreadable {
                    path: display.clone(),
                    source: e,
                })?;
                let mut builder = csv::ReaderBuilder::new();
                builder.has_headers(config.has_headers).flexible(true);
                if let Some(d) = config.delimiter {
                    builder.delimiter(d as u8);
                }
                let mut reader = builder.from_reader(BufReader::new(file));
                let headers: Vec<String> = if config.has_headers {
                    reader
                        .headers()
                        .map_err(|e| CorpusError::Unreadable {
                            path: display.clone(),
                            source: std::io::Error::other(e),
                        })?
                        .iter()
                        .map(|h| h.to_string())
                        .collect()
                } else {
                    Vec::new()
                };
                for (idx, result) in reader.records().enumerate() {
                    let line = idx + if config.has_headers { 2 } else { 1 };
                    let row = match result {
                        Ok(record) => parse_csv_record(&record, &headers, config),
                        Err(e) => Err(e.to_string()),
                    };
                    handle_row(row, line, &mut provenance);
                }
            }
            other => {
                return Err(CorpusError::BadAdapterConfig {
                    path: display,
                    message: format!("unsupported format {other:?}"),
                })
            }
        },
    }

    let lang = corpus_lang.ok_or_else(|| CorpusError::BadLang("<none>".to_string()))?;
    debug_assert!(provenance.reconciles());
    Ok(Corpus { lang, records, provenance })
}

fn adapter_tag(adapter: &Adapter) -> String {
    match adapter {
        Adapter::Jsonl => "jsonl".to_string(),
        Adapter::Config(c) => format!("adapter:{}", c.format),
    }
}

#[derive(Deserialize)]
struct InterchangeRow {
    id: serde_json::Value,
    lang: String,
    text: String,
    #[serde(default)]
    label: Option<i64>,
}

fn json_id_to_string(v: &serde_json::Value) -> Result<String, String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("id must be a string or number, got {other}")),
    }
}

fn parse_interchange_line(line: &str) -> Result<RawRow, String> {
    let row: InterchangeRow = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Ok(RawRow {
        id: json_id_to_string(&row.id)?,
        lang: Some(row.lang),
        text: row.text,
        label: row.label,
    })
}

fn parse_mapped_json_line(line: &str, config: &AdapterConfig) -> Result<RawRow, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("row is not a JSON object")?;
    let fetch = |key: &str| -> Result<&serde_json::Value, String> {
        obj.get(key).ok_or_else(|| format!("missing field {key:?}"))
    };
    let id = json_id_to_string(fetch(&config.columns.id)?)?;
    let text = fetch(&config.columns.text)?
        .as_str()
        .ok_or("text field is not a string")?
        .to_string();
    let lang = match (&config.columns.lang, &config.fixed_lang) {
        (Some(col), _) => Some(
            fetch(col)?
                .as_str()
                .ok_or("lang field is not a string")?
                .to_string(),
        ),
        (None, Some(fixed)) => Some(fixed.clone()),
        (None, None) => None,
    };
    let label = match &config.columns.label {
        Some(col) => match obj.get(col) {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::Number(n)) => Some(
                n.as_f64()
                    .map(|v| v.round() as i64)
                    .ok_or("label is not numeric")?,
            ),
            Some(serde_json::Value::String(s)) => parse_label_value(s, &config.label_map)?,
            Some(other) => return Err(format!("label has unsupported type: {other}")),
        },
        None => None,
    };
    Ok(RawRow { id, lang, text, label })
}

fn parse_csv_record(
    record: &csv::StringRecord,
    headers: &[String],
    config: &AdapterConfig,
) -> Result<RawRow, String> {
    let field = |name: &str| -> Result<&str, String> {
        // Column references are header names, or zero-based indices for
        // headerless files.
        if config.has_headers {
            let idx = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| format!("no column named {name:?}"))?;
            record.get(idx).ok_or_else(|| format!("row too short for column {name:?}"))
        } else {
            let idx: usize = name
                .parse()
                .map_err(|_| format!("column {name:?} is not an index and file has no headers"))?;
            record.get(idx).ok_or_else(|| format!("row too short for column {idx}"))
        }
    };
    let id = field(&config.columns.id)?.to_string();
    let text = field(&config.columns.text)?.to_string();
    let lang = match (&config.columns.lang, &config.fixed_lang) {
        (Some(col), _) => Some(field(col)?.to_string()),
        (None, Some(fixed)) => Some(fixed.clone()),
        (None, None) => None,
    };
    let label = match &config.columns.label {
        Some(col) => parse_label_value(field(col)?, &config.label_map)?,
        None => None,
    };
    Ok(RawRow { id, lang, text, label })
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Uniform sample of `n` records without replacement, preserving the input
/// order. Deterministic for a fixed seed; the seed and size are recorded in
/// the provenance.
pub fn sample_corpus(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if n > corpus.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut rng = RngStream::new(seed, format!("corpus/sample/{}", corpus.lang)).rng();
    let mut indices = index_sample(&mut rng, corpus.len(), n).into_vec();
    indices.sort_unstable();
    let records: Vec<TextRecord> = indices.iter().map(|&i| corpus.records[i].clone()).collect();
    let mut provenance = corpus.provenance.clone();
    provenance.sample = Some(SampleInfo {
        seed,
        n,
        from: corpus.len() as u64,
    });
    Ok(Corpus {
        lang: corpus.lang.clone(),
        records,
        provenance,
    })
}

// ---------------------------------------------------------------------------
// Interchange IO
// ---------------------------------------------------------------------------

/// Which text a variant file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Original,
    Pivot,
    Back,
    /// Backtranslation after N full cycles (cycle 1 == `Back`).
    Cycle(u32),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Original => f.write_str("original"),
            Variant::Pivot => f.write_str("pivot"),
            Variant::Back => f.write_str("back"),
            Variant::Cycle(n) => write!(f, "cycle{n}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InterchangeOut<'a> {
    id: &'a str,
    lang: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
}

/// Write one variant of a corpus as interchange JSONL. Records lacking the
/// requested variant are skipped.
pub fn write_variant(corpus: &Corpus, variant: Variant, path: &Path) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CorpusError::Unwritable {
            path: display.clone(),
            source: e,
        })?;
    }
    let mut out = Vec::new();
    for record in &corpus.records {
        let text = match variant {
            Variant::Original => Some(record.text_original.as_str()),
            Variant::Pivot => record.text_pivot.as_deref(),
            Variant::Back | Variant::Cycle(_) => record.text_back.as_deref(),
        };
        let Some(text) = text else { continue };
        let row = InterchangeOut {
            id: &record.id,
            lang: corpus.lang.as_str(),
            text,
            label: record.label.map(|l| l.as_i8() as i64),
        };
        serde_json::to_writer(&mut out, &row).expect("interchange row serializes");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| CorpusError::Unwritable {
        path: display,
        source: e,
    })
}

/// Write the provenance sidecar next to a corpus file.
pub fn write_provenance(provenance: &Provenance, path: &Path) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let json = serde_json::to_vec_pretty(provenance).expect("provenance serializes");
    let mut bytes = json;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CorpusError::Unwritable {
        path: display,
        source: e,
    })
}

/// Read an interchange JSONL file produced by [`write_variant`] back into
/// `(id, text, label)` rows plus the corpus language.
pub fn read_variant(path: &Path) -> Result<(Lang, Vec<(String, String, Option<SentimentLabel>)>), CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| CorpusError::Unreadable {
        path: display.clone(),
        source: e,
    })?;
    let mut lang: Option<Lang> = None;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Unreadable {
            path: display.clone(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: InterchangeRow =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: display.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        let row_lang = Lang::new(&row.lang)?;
        let lang = lang.get_or_insert(row_lang.clone());
        if *lang != row_lang {
            return Err(CorpusError::Malformed {
                path: display.clone(),
                line: idx + 1,
                message: format!("mixed languages {lang} and {row_lang} in one corpus file"),
            });
        }
        let label = row.label.map(SentimentLabel::from_value).transpose()?;
        rows.push((json_id_to_string(&row.id).map_err(|message| CorpusError::Malformed {
            path: display.clone(),
            line: idx + 1,
            message,
        })?, row.text, label));
    }
    let lang = lang.ok_or_else(|| CorpusError::Malformed {
        path: display,
        line: 0,
        message: "empty corpus file".to_string(),
    })?;
    Ok((lang, rows))
}

/// Assemble a corpus from checkpointed variant files. `original` is
/// required; pivot and back texts are merged in by id when present.
pub fn read_checkpoint(
    original: &Path,
    pivot: Option<&Path>,
    back: Option<&Path>,
) -> Result<Corpus, CorpusError> {
    let (lang, rows) = read_variant(original)?;
    let mut records: Vec<TextRecord> = rows
        .into_iter()
        .map(|(id, text, label)| TextRecord {
            id,
            lang: lang.clone(),
            text_original: text,
            text_pivot: None,
            text_back: None,
            label,
        })
        .collect();
    let index: BTreeMap<String, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.clone(), i))
        .collect();
    if let Some(path) = pivot {
        let (_, rows) = read_variant(path)?;
        for (id, text, _) in rows {
            if let Some(&i) = index.get(&id) {
                records[i].text_pivot = Some(text);
            }
        }
    }
    if let Some(path) = back {
        let (_, rows) = read_variant(path)?;
        for (id, text, _) in rows {
            if let Some(&i) = index.get(&id) {
                records[i].text_back = Some(text);
            }
        }
    }
    Ok(Corpus {
        lang,
        records,
        provenance: Provenance {
            source: original.display().to_string(),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn clean_text_applies_all_rules() {
        assert_eq!(clean_text("@user Hello WORLD http://t.co/x 123"), "hello world");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("RT @a: Gut! 42mal"), "gut! mal");
    }

    #[test]
    fn clean_text_edge_cases() {
        assert_eq!(clean_text("no urls here"), "no urls here");
        assert_eq!(clean_text("https://example.com/a?b=1"), "");
        assert_eq!(clean_text("WWW.example.com trailing"), "trailing");
        // bare "http" token and uppercase scheme both vanish
        assert_eq!(clean_text("HTTP://X.CO link http alone"), "link alone");
        // digits removed even inside tokens; exposed URLs removed too
        assert_eq!(clean_text("h2ttp://sneaky.com stays?"), "stays?");
        // exposed mention after digit strip
        assert_eq!(clean_text("1@user hi"), "hi");
        // lone @ token
        assert_eq!(clean_text("@ hello"), "hello");
        // mention exposing a leading rt
        assert_eq!(clean_text("@x rt hi"), "hi");
        assert_eq!(clean_text("ÜBER Straße"), "über straße");
    }

    #[test]
    fn sentiment_label_round_trip() {
        for v in [-1i64, 0, 1] {
            assert_eq!(SentimentLabel::from_value(v).unwrap().as_i8() as i64, v);
        }
        assert!(SentimentLabel::from_value(2).is_err());
        assert_eq!(SentimentLabel::from_sign(0.4), SentimentLabel::Positive);
        assert_eq!(SentimentLabel::from_sign(-0.4), SentimentLabel::Negative);
        assert_eq!(SentimentLabel::from_sign(0.0), SentimentLabel::Neutral);
    }

    #[test]
    fn lang_validation() {
        assert_eq!(Lang::new("DE").unwrap().as_str(), "de");
        assert!(Lang::new("deu").is_err());
        assert!(Lang::new("d1").is_err());
        assert!(Lang::new("").is_err());
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_jsonl_applies_cleaning_and_filters() {
        let f = write_temp(concat!(
            "{\"id\":\"1\",\"lang\":\"de\",\"text\":\"@x Gut\",\"label\":1}\n",
            "{\"id\":\"2\",\"lang\":\"en\",\"text\":\"hello\"}\n",
            "{\"id\":\"3\",\"lang\":\"de\",\"text\":\"http://only.url\"}\n",
            "{\"id\":\"4\",\"lang\":\"de\",\"text\":\"schön\",\"label\":-1}\n",
            "not json at all\n",
            "{\"id\":\"4\",\"lang\":\"de\",\"text\":\"doppelt\"}\n",
        ));
        let de = Lang::new("de").unwrap();
        let en = Lang::new("en").unwrap();
        let corpus = load_corpus(f.path(), &Adapter::Jsonl, Some(&de), Some(&en)).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.records[0].id, "1");
        assert_eq!(corpus.records[0].text_original, "gut");
        assert_eq!(corpus.records[0].label, Some(SentimentLabel::Positive));
        assert_eq!(corpus.records[1].id, "4");
        let p = &corpus.provenance;
        assert_eq!(p.raw_count, 6);
        assert_eq!(p.kept, 2);
        assert_eq!(p.dropped["pivot_excluded"], 1);
        assert_eq!(p.dropped["empty_after_clean"], 1);
        assert_eq!(p.dropped["malformed"], 1);
        assert_eq!(p.dropped["duplicate_id"], 1);
        assert!(p.reconciles());
    }

    #[test]
    fn load_csv_adapter_with_label_map() {
        let data = write_temp(concat!(
            "tweet_id,language,content,sentiment\n",
            "a1,de,@x Gut,positive\n",
            "a2,de,Schlecht!,negative\n",
            "a3,de,na ja,neutral\n",
            "a4,de,kaputt,unknownlabel\n",
        ));
        let config = write_temp(
            r#"{
              "format": "csv",
              "columns": {"id": "tweet_id", "lang": "language", "text": "content", "label": "sentiment"},
              "label_map": {"positive": 1, "negative": -1, "neutral": 0}
            }"#,
        );
        let adapter = Adapter::resolve(config.path().to_str().unwrap()).unwrap();
        let de = Lang::new("de").unwrap();
        let corpus = load_corpus(data.path(), &adapter, Some(&de), None).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.records[0].label, Some(SentimentLabel::Positive));
        assert_eq!(corpus.records[1].text_original, "schlecht!");
        assert_eq!(corpus.provenance.dropped["malformed"], 1);
        assert!(corpus.provenance.reconciles());
    }

    #[test]
    fn unknown_adapter_is_an_error() {
        assert!(matches!(
            Adapter::resolve("no-such-adapter"),
            Err(CorpusError::UnknownAdapter(_))
        ));
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let de = Lang::new("de").unwrap();
        let err = load_corpus(Path::new("/nonexistent/x.jsonl"), &Adapter::Jsonl, Some(&de), None);
        assert!(matches!(err, Err(CorpusError::Unreadable { .. })));
    }

    fn toy_corpus(n: usize) -> Corpus {
        let de = Lang::new("de").unwrap();
        let records = (0..n)
            .map(|i| TextRecord {
                id: format!("r{i}"),
                lang: de.clone(),
                text_original: format!("text {i}"),
                text_pivot: None,
                text_back: None,
                label: None,
            })
            .collect();
        Corpus {
            lang: de,
            records,
            provenance: Provenance { raw_count: n as u64, kept: n as u64, ..Default::default() },
        }
    }

    #[test]
    fn sample_is_exhaustive_deterministic_and_order_preserving() {
        let corpus = toy_corpus(5);
        let all = sample_corpus(&corpus, 5, 1).unwrap();
        assert_eq!(all.records, corpus.records);

        let big = toy_corpus(100);
        let a = sample_corpus(&big, 10, 7).unwrap();
        let b = sample_corpus(&big, 10, 7).unwrap();
        let ids = |c: &Corpus| c.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        let c = sample_corpus(&big, 10, 8).unwrap();
        assert_ne!(ids(&a), ids(&c));
        // order preserved: positions within the original are increasing
        let pos: Vec<usize> = a
            .records
            .iter()
            .map(|r| big.records.iter().position(|x| x.id == r.id).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.provenance.sample, Some(SampleInfo { seed: 7, n: 10, from: 100 }));
    }

    #[test]
    fn sample_too_large_reports_both_numbers() {
        let corpus = toy_corpus(3);
        match sample_corpus(&corpus, 4, 0) {
            Err(CorpusError::SampleTooLarge { requested: 4, available: 3 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn variant_round_trip() {
        let mut corpus = toy_corpus(3);
        corpus.records[0].label = Some(SentimentLabel::Negative);
        for r in &mut corpus.records {
            r.text_pivot = Some(format!("pivot {}", r.id));
            r.text_back = Some(format!("back {}", r.id));
        }
        let dir = tempfile::tempdir().unwrap();
        let orig = dir.path().join("de.original.jsonl");
        let pivot = dir.path().join("de.pivot.jsonl");
        let back = dir.path().join("de.back.jsonl");
        write_variant(&corpus, Variant::Original, &orig).unwrap();
        write_variant(&corpus, Variant::Pivot, &pivot).unwrap();
        write_variant(&corpus, Variant::Back, &back).unwrap();
        let loaded = read_checkpoint(&orig, Some(&pivot), Some(&back)).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.records[0].label, Some(SentimentLabel::Negative));
        assert_eq!(loaded.records[1].text_pivot.as_deref(), Some("pivot r1"));
        assert_eq!(loaded.records[2].text_back.as_deref(), Some("back r2"));
    }
}
