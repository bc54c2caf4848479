//! Dictionary-valence sentiment scoring with bootstrap accuracy intervals.
//!
//! A text's polarity is `(P - N) / max(1, P + N)` where `P` and `N` count
//! tokens the lexicon values at +1 and -1; the predicted label is the sign.
//! Accuracy against gold labels excludes neutral items (gold-neutral and
//! predicted-neutral both, switchable) and is summarized per translation
//! variant by a percentile bootstrap.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Lang, SentimentLabel};
use crate::stats::{bootstrap, IntervalSummary, RngStream, StatsError};
use crate::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("cannot read lexicon {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon {path} line {line}: {message}")]
    BadLexiconLine { path: String, line: usize, message: String },
    #[error("no evaluable items after neutral exclusion")]
    NoEvaluableItems,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Per-language token valences in {-1, 0, +1}. Tokens are stored lowercase,
/// the normal form the cleaner emits.
#[derive(Debug, Clone)]
pub struct ValenceLexicon {
    pub lang: Lang,
    entries: HashMap<String, i8>,
}

impl ValenceLexicon {
    pub fn new(lang: Lang) -> Self {
        Self { lang, entries: HashMap::new() }
    }

    pub fn insert(&mut self, token: &str, valence: i8) {
        debug_assert!((-1..=1).contains(&valence));
        self.entries.insert(token.to_lowercase(), valence);
    }

    pub fn valence(&self, token: &str) -> Option<i8> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load a `token<TAB>valence` TSV. Valences outside {-1,0,+1} are
    /// rejected; later duplicates overwrite earlier ones.
    pub fn from_tsv(lang: Lang, path: &Path) -> Result<Self, SentimentError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|e| SentimentError::Unreadable {
            path: display.clone(),
            source: e,
        })?;
        let mut lexicon = Self::new(lang);
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SentimentError::Unreadable {
                path: display.clone(),
                source: e,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.splitn(2, '\t');
            let token = parts.next().unwrap_or_default().trim();
            let valence = parts.next().map(str::trim);
            let (Some(valence), false) = (valence, token.is_empty()) else {
                return Err(SentimentError::BadLexiconLine {
                    path: display,
                    line: idx + 1,
                    message: "expected token<TAB>valence".to_string(),
                });
            };
            let value: i8 = valence.parse().map_err(|_| SentimentError::BadLexiconLine {
                path: display.clone(),
                line: idx + 1,
                message: format!("valence {valence:?} is not an integer"),
            })?;
            if !(-1..=1).contains(&value) {
                return Err(SentimentError::BadLexiconLine {
                    path: display,
                    line: idx + 1,
                    message: format!("valence {value} outside {{-1, 0, +1}}"),
                });
            }
            lexicon.insert(token, value);
        }
        Ok(lexicon)
    }
}

/// Score of a single text.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentScore {
    pub polarity: f64,
    pub label: SentimentLabel,
    pub scored_word_count: usize,
}

/// Score of a record, tagged by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentResult {
    pub id: String,
    pub polarity: f64,
    pub label: SentimentLabel,
    pub scored_word_count: usize,
}

/// Score one cleaned text: unknown tokens contribute nothing.
pub fn score_text(text: &str, lexicon: &ValenceLexicon) -> SentimentScore {
    let mut positive = 0usize;
    let mut negative = 0usize;
    for token in tokenize(text) {
        match lexicon.valence(&token) {
            Some(1) => positive += 1,
            Some(-1) => negative += 1,
            _ => {}
        }
    }
    let scored = positive + negative;
    let polarity = (positive as f64 - negative as f64) / (scored.max(1)) as f64;
    SentimentScore {
        polarity,
        label: SentimentLabel::from_sign(polarity),
        scored_word_count: scored,
    }
}

/// Accuracy of predictions against parallel gold labels.
///
/// With `exclude_neutral`, items with a neutral gold label and items with a
/// neutral predicted label are both dropped before counting. Returns `None`
/// when nothing remains (undefined, not zero).
pub fn accuracy(
    predictions: &[SentimentLabel],
    gold: &[SentimentLabel],
    exclude_neutral: bool,
) -> Option<f64> {
    assert_eq!(predictions.len(), gold.len(), "prediction/gold lists must be parallel");
    let mut matches = 0usize;
    let mut total = 0usize;
    for (p, g) in predictions.iter().zip(gold) {
        if exclude_neutral && (*p == SentimentLabel::Neutral || *g == SentimentLabel::Neutral) {
            continue;
        }
        total += 1;
        if p == g {
            matches += 1;
        }
    }
    (total > 0).then(|| matches as f64 / total as f64)
}

/// The evaluable match indicators behind [`accuracy`]; the unit the
/// bootstrap resamples.
fn match_indicators(
    predictions: &[SentimentLabel],
    gold: &[SentimentLabel],
    exclude_neutral: bool,
) -> Vec<f64> {
    predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| {
            !(exclude_neutral && (**p == SentimentLabel::Neutral || **g == SentimentLabel::Neutral))
        })
        .map(|(p, g)| if p == g { 1.0 } else { 0.0 })
        .collect()
}

/// Percentile-bootstrap summary of accuracy over the evaluable set. Returns
/// the summary and the evaluable count.
pub fn bootstrap_accuracy(
    predictions: &[SentimentLabel],
    gold: &[SentimentLabel],
    exclude_neutral: bool,
    replicates: usize,
    level: f64,
    stream: &RngStream,
) -> Result<(IntervalSummary, usize), SentimentError> {
    let items = match_indicators(predictions, gold, exclude_neutral);
    if items.is_empty() {
        return Err(SentimentError::NoEvaluableItems);
    }
    let n = items.len();
    let summary = bootstrap(
        &items,
        |xs| xs.iter().sum::<f64>() / xs.len() as f64,
        replicates,
        level,
        stream,
    )?;
    Ok((summary, n))
}

/// Bootstrap summary for one variant of one language's corpus, as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStat {
    pub n_evaluable: usize,
    pub median: f64,
    pub hci99_low: f64,
    pub hci99_high: f64,
}

impl VariantStat {
    fn from_summary(summary: &IntervalSummary, n: usize) -> Self {
        Self {
            n_evaluable: n,
            median: summary.median,
            hci99_low: summary.low,
            hci99_high: summary.high,
        }
    }
}

/// Per-language sentiment summaries, keyed by variant name
/// (`original` / `pivot` / `back`).
pub type LangSentiment = BTreeMap<String, VariantStat>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub per_lang: BTreeMap<String, LangSentiment>,
    /// Summaries over evaluable items concatenated across languages before
    /// bootstrapping.
    pub pooled: LangSentiment,
    pub exclude_neutral: bool,
    pub replicates: usize,
    pub level: f64,
    /// Languages skipped with the reason (usually a missing lexicon).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<(String, String)>,
}

/// Lexicons for the analyzed languages plus the pivot, loaded from a
/// directory of `<lang>.tsv` files.
#[derive(Debug, Default)]
pub struct LexiconSet {
    lexicons: HashMap<Lang, ValenceLexicon>,
}

impl LexiconSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lexicon: ValenceLexicon) {
        self.lexicons.insert(lexicon.lang.clone(), lexicon);
    }

    pub fn get(&self, lang: &Lang) -> Option<&ValenceLexicon> {
        self.lexicons.get(lang)
    }

    pub fn from_dir(dir: &Path) -> Result<Self, SentimentError> {
        let mut set = Self::new();
        let entries = std::fs::read_dir(dir).map_err(|e| SentimentError::Unreadable {
            path: dir.display().to_string(),
            source: e,
        })?;
        for entry in entries {
            let entry = entry.map_err(|e| SentimentError::Unreadable {
                path: dir.display().to_string(),
                source: e,
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("tsv") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let Ok(lang) = Lang::new(stem) else {
                log::warn!("ignoring lexicon with non-language name: {}", path.display());
                continue;
            };
            set.insert(ValenceLexicon::from_tsv(lang, &path)?);
        }
        Ok(set)
    }
}

struct VariantEval {
    summaries: LangSentiment,
    /// Evaluable indicators per variant, for cross-language pooling.
    indicators: BTreeMap<String, Vec<f64>>,
}

fn evaluate_corpus(
    corpus: &Corpus,
    own: &ValenceLexicon,
    pivot: Option<&ValenceLexicon>,
    exclude_neutral: bool,
    replicates: usize,
    level: f64,
    stream: &RngStream,
) -> Result<VariantEval, SentimentError> {
    let mut summaries = LangSentiment::new();
    let mut indicators = BTreeMap::new();

    let labeled: Vec<_> = corpus
        .records
        .iter()
        .filter_map(|r| r.label.map(|label| (r, label)))
        .collect();

    let mut eval_variant = |name: &str,
                            lexicon: &ValenceLexicon,
                            text_of: &dyn Fn(&crate::corpus::TextRecord) -> Option<&str>|
     -> Result<(), SentimentError> {
        let mut preds = Vec::new();
        let mut gold = Vec::new();
        for (record, label) in &labeled {
            if let Some(text) = text_of(record) {
                preds.push(score_text(text, lexicon).label);
                gold.push(*label);
            }
        }
        if preds.is_empty() {
            return Ok(());
        }
        let items = match_indicators(&preds, &gold, exclude_neutral);
        if items.is_empty() {
            return Err(SentimentError::NoEvaluableItems);
        }
        // One stream shared by all variants of a language: identical inputs
        // (an identity round trip) then give bit-identical summaries, and
        // common random numbers sharpen cross-variant comparisons.
        let summary = bootstrap(
            &items,
            |xs| xs.iter().sum::<f64>() / xs.len() as f64,
            replicates,
            level,
            stream,
        )?;
        summaries.insert(name.to_string(), VariantStat::from_summary(&summary, items.len()));
        indicators.insert(name.to_string(), items);
        Ok(())
    };

    eval_variant("original", own, &|r| Some(r.text_original.as_str()))?;
    if let Some(pivot_lexicon) = pivot {
        eval_variant("pivot", pivot_lexicon, &|r| r.text_pivot.as_deref())?;
    }
    eval_variant("back", own, &|r| r.text_back.as_deref())?;

    Ok(VariantEval { summaries, indicators })
}

/// Three-variant bootstrap summaries per language plus pooled summaries.
///
/// Languages without a lexicon are skipped with a warning. Pivot summaries
/// require the pivot-language lexicon. Gold labels are required per record;
/// unlabeled records are ignored.
pub fn sentiment_report(
    corpora: &[&Corpus],
    lexicons: &LexiconSet,
    pivot: &Lang,
    exclude_neutral: bool,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<SentimentReport, SentimentError> {
    let pivot_lexicon = lexicons.get(pivot);
    if pivot_lexicon.is_none() {
        log::warn!("no lexicon for pivot language {pivot}; pivot variant skipped");
    }
    let mut per_lang = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut pooled_items: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for corpus in corpora {
        let lang = corpus.lang.as_str().to_string();
        let Some(own) = lexicons.get(&corpus.lang) else {
            log::warn!("no lexicon for language {lang}; skipped");
            skipped.push((lang, "missing lexicon".to_string()));
            continue;
        };
        if corpus.records.iter().all(|r| r.label.is_none()) {
            log::warn!("no gold labels in corpus {lang}; skipped");
            skipped.push((lang, "no gold labels".to_string()));
            continue;
        }
        let stream = RngStream::new(seed, format!("sentiment/{lang}"));
        let eval = evaluate_corpus(
            corpus,
            own,
            pivot_lexicon,
            exclude_neutral,
            replicates,
            level,
            &stream,
        )?;
        for (variant, items) in &eval.indicators {
            pooled_items.entry(variant.clone()).or_default().extend(items);
        }
        per_lang.insert(lang, eval.summaries);
    }

    let mut pooled = LangSentiment::new();
    let pooled_stream = RngStream::new(seed, "sentiment/pooled");
    for (variant, items) in &pooled_items {
        let summary = bootstrap(
            items,
            |xs| xs.iter().sum::<f64>() / xs.len() as f64,
            replicates,
            level,
            &pooled_stream,
        )?;
        pooled.insert(variant.clone(), VariantStat::from_summary(&summary, items.len()));
    }

    Ok(SentimentReport {
        per_lang,
        pooled,
        exclude_neutral,
        replicates,
        level,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon(entries: &[(&str, i8)]) -> ValenceLexicon {
        let mut lex = ValenceLexicon::new(Lang::new("en").unwrap());
        for (token, v) in entries {
            lex.insert(token, *v);
        }
        lex
    }

    fn basic() -> ValenceLexicon {
        lexicon(&[("good", 1), ("happy", 1), ("bad", -1)])
    }

    #[test]
    fn score_counts_valences() {
        let s = score_text("good happy day", &basic());
        assert_eq!(s.polarity, 1.0);
        assert_eq!(s.label, SentimentLabel::Positive);
        assert_eq!(s.scored_word_count, 2);

        let s = score_text("good bad", &basic());
        assert_eq!(s.polarity, 0.0);
        assert_eq!(s.label, SentimentLabel::Neutral);
        assert_eq!(s.scored_word_count, 2);

        let s = score_text("quantum flux", &basic());
        assert_eq!(s.polarity, 0.0);
        assert_eq!(s.label, SentimentLabel::Neutral);
        assert_eq!(s.scored_word_count, 0);
    }

    #[test]
    fn polarity_stays_in_unit_interval_and_is_antisymmetric() {
        let lex = basic();
        let negated = lexicon(&[("good", -1), ("happy", -1), ("bad", 1)]);
        for text in ["good", "bad bad good", "happy bad", "x", "good good bad"] {
            let s = score_text(text, &lex);
            let n = score_text(text, &negated);
            assert!((-1.0..=1.0).contains(&s.polarity));
            assert_eq!(s.polarity, -n.polarity);
            assert_eq!(s.label.as_i8(), -n.label.as_i8());
        }
    }

    use SentimentLabel::{Negative as Neg, Neutral as Neu, Positive as Pos};

    #[test]
    fn accuracy_hand_counts() {
        assert_eq!(accuracy(&[Pos, Neg, Neg], &[Pos, Neg, Pos], false), Some(2.0 / 3.0));
        assert_eq!(accuracy(&[Pos, Neg, Pos], &[Pos, Neg, Pos], false), Some(1.0));
        // exclusion drops gold-neutral item 2 and predicted-neutral item 3
        assert_eq!(accuracy(&[Pos, Pos, Neu], &[Pos, Neu, Neg], true), Some(1.0));
        // everything excluded -> undefined
        assert_eq!(accuracy(&[Neu], &[Pos], true), None);
    }

    #[test]
    fn accuracy_is_permutation_invariant() {
        let preds = [Pos, Neg, Neu, Pos, Neg];
        let gold = [Pos, Pos, Neg, Neu, Neg];
        let base = accuracy(&preds, &gold, true);
        let order = [4, 2, 0, 3, 1];
        let p2: Vec<_> = order.iter().map(|&i| preds[i]).collect();
        let g2: Vec<_> = order.iter().map(|&i| gold[i]).collect();
        assert_eq!(accuracy(&p2, &g2, true), base);
    }

    #[test]
    fn bootstrap_constant_accuracy_is_exact() {
        let gold = vec![Pos; 50];
        let (s, n) =
            bootstrap_accuracy(&gold, &gold, true, 200, 0.99, &RngStream::new(1, "t")).unwrap();
        assert_eq!(n, 50);
        assert_eq!(s.median, 1.0);
        assert_eq!((s.low, s.high), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_accuracy_calibrated_and_width_shrinks_with_n() {
        // exact accuracy 0.80 by construction
        let build = |n: usize| {
            let gold = vec![Pos; n];
            let preds: Vec<_> = (0..n).map(|i| if i % 5 == 0 { Neg } else { Pos }).collect();
            (preds, gold)
        };
        let (preds, gold) = build(10_000);
        let (s_large, n) =
            bootstrap_accuracy(&preds, &gold, false, 1000, 0.99, &RngStream::new(2, "t")).unwrap();
        assert_eq!(n, 10_000);
        assert!((s_large.median - 0.8).abs() <= 0.01, "median {}", s_large.median);

        let (preds, gold) = build(100);
        let (s_small, _) =
            bootstrap_accuracy(&preds, &gold, false, 1000, 0.99, &RngStream::new(2, "t")).unwrap();
        let width = |s: &IntervalSummary| s.high - s.low;
        assert!(width(&s_small) > width(&s_large));
    }

    #[test]
    fn bootstrap_accuracy_is_deterministic() {
        let gold = vec![Pos, Neg, Pos, Neg, Pos, Pos];
        let preds = vec![Pos, Pos, Pos, Neg, Neg, Pos];
        let s = RngStream::new(42, "d");
        let a = bootstrap_accuracy(&preds, &gold, true, 500, 0.99, &s).unwrap();
        let b = bootstrap_accuracy(&preds, &gold, true, 500, 0.99, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lexicon_tsv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("en.tsv");
        std::fs::write(&path, "good\t1\nBAD\t-1\nmeh\t0\n\n# comment\n").unwrap();
        let lex = ValenceLexicon::from_tsv(Lang::new("en").unwrap(), &path).unwrap();
        assert_eq!(lex.len(), 3);
        assert_eq!(lex.valence("good"), Some(1));
        assert_eq!(lex.valence("bad"), Some(-1), "tokens are lowercased");
        assert_eq!(lex.valence("meh"), Some(0));

        std::fs::write(&path, "good\t2\n").unwrap();
        assert!(ValenceLexicon::from_tsv(Lang::new("en").unwrap(), &path).is_err());
        std::fs::write(&path, "no-tab-line\n").unwrap();
        assert!(ValenceLexicon::from_tsv(Lang::new("en").unwrap(), &path).is_err());
    }
}
