//! Content analysis: keyword extraction and taxonomy-based categorization.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::doc_model::{normalize_label, BlogPostDocument};
use crate::index::Tokenizer;

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.txt");

pub const DEFAULT_MAX_CATEGORIES: usize = 3;
pub const DEFAULT_KEYWORDS: usize = 8;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("reading taxonomy: {0}")]
    Io(#[from] std::io::Error),
}

/// Category labels and the words or phrases that trigger them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    /// label -> triggers, each trigger a non-empty token sequence.
    categories: BTreeMap<String, Vec<Vec<String>>>,
}

impl Taxonomy {
    /// Parses `label: term, term, ...` lines. Blank lines and `#` comments are
    /// skipped. Labels and triggers are lowercased.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let tokenizer = Tokenizer::without_stopwords();
        let mut categories = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |reason: &str| TaxonomyError::Invalid {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (label, terms) = line.split_once(':').ok_or_else(|| invalid("missing ':'"))?;
            let label = normalize_label(label);
            if label.is_empty() {
                return Err(invalid("empty label"));
            }
            let triggers: Vec<Vec<String>> = terms
                .split(',')
                .map(|t| tokenizer.terms(t))
                .filter(|t| !t.is_empty())
                .collect();
            if triggers.is_empty() {
                return Err(invalid("no trigger terms"));
            }
            if categories.insert(label.clone(), triggers).is_some() {
                return Err(invalid(&format!("duplicate label {label:?}")));
            }
        }
        Ok(Taxonomy { categories })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::parse(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }
}

/// Document frequencies over a batch of texts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocFreqTable {
    docs: u32,
    df: BTreeMap<String, u32>,
}

impl DocFreqTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_texts<'a>(tokenizer: &Tokenizer, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = Self::new();
        for t in texts {
            table.add(tokenizer, t);
        }
        table
    }

    pub fn add(&mut self, tokenizer: &Tokenizer, text: &str) {
        self.docs += 1;
        let distinct: BTreeSet<String> = tokenizer.terms(text).into_iter().collect();
        for term in distinct {
            *self.df.entry(term).or_default() += 1;
        }
    }

    pub fn num_docs(&self) -> u32 {
        self.docs
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency, always at least 1.
    pub fn idf(&self, term: &str) -> f64 {
        let n = f64::from(self.docs);
        let df = f64::from(self.doc_freq(term));
        ((1.0 + n) / (1.0 + df)).ln().max(0.0) + 1.0
    }
}

/// Top `k` keywords of `text` by tf * idf, ties broken lexicographically.
/// Stopwords and purely numeric tokens are never keywords.
pub fn extract_keywords(
    text: &str,
    stats: &DocFreqTable,
    tokenizer: &Tokenizer,
    k: usize,
) -> Vec<(String, f64)> {
    let mut tf: BTreeMap<String, u32> = BTreeMap::new();
    for term in tokenizer.terms(text) {
        if term.chars().all(|c| c.is_numeric()) {
            continue;
        }
        *tf.entry(term).or_default() += 1;
    }
    let mut scored: Vec<(String, f64)> = tf
        .into_iter()
        .map(|(term, n)| {
            let s = f64::from(n) * stats.idf(&term);
            (term, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Labels with at least one trigger hit, by hit count then label, capped at
/// `max_categories`. Phrase triggers count consecutive occurrences.
pub fn assign_categories(
    text: &str,
    taxonomy: &Taxonomy,
    max_categories: usize,
) -> Vec<(String, u32)> {
    let tokens = Tokenizer::without_stopwords().terms(text);
    let mut hits: Vec<(String, u32)> = taxonomy
        .categories
        .iter()
        .map(|(label, triggers)| {
            let count: usize = triggers
                .iter()
                .map(|t| {
                    tokens
                        .windows(t.len())
                        .filter(|w| *w == t.as_slice())
                        .count()
                })
                .sum();
            (label.clone(), count as u32)
        })
        .filter(|(_, c)| *c > 0)
        .collect();
    hits.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits.truncate(max_categories);
    hits
}

/// Ranked categories and keywords for one text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisResult {
    pub categories: Vec<(String, u32)>,
    pub keywords: Vec<(String, f64)>,
}

/// Derives categories and keywords for documents.
pub trait ContentAnalyzer: Send + Sync {
    fn analyze(&self, text: &str, stats: &DocFreqTable) -> AnalysisResult;

    /// Fills `categories` and `keywords` of `doc` from its post content.
    fn annotate(&self, doc: &mut BlogPostDocument, stats: &DocFreqTable) {
        let result = self.analyze(&doc.post_content, stats);
        doc.categories = result.categories.into_iter().map(|c| c.0).collect();
        doc.keywords = result.keywords.into_iter().map(|k| k.0).collect();
        doc.normalize();
    }
}

/// Taxonomy categories plus tf-idf keywords.
#[derive(Debug, Clone)]
pub struct TaxonomyAnalyzer {
    pub taxonomy: Taxonomy,
    pub tokenizer: Tokenizer,
    pub max_categories: usize,
    pub keywords: usize,
}

impl TaxonomyAnalyzer {
    pub fn new(taxonomy: Taxonomy) -> Self {
        TaxonomyAnalyzer {
            taxonomy,
            tokenizer: Tokenizer::default(),
            max_categories: DEFAULT_MAX_CATEGORIES,
            keywords: DEFAULT_KEYWORDS,
        }
    }
}

impl Default for TaxonomyAnalyzer {
    fn default() -> Self {
        Self::new(Taxonomy::default())
    }
}

impl ContentAnalyzer for TaxonomyAnalyzer {
    fn analyze(&self, text: &str, stats: &DocFreqTable) -> AnalysisResult {
        AnalysisResult {
            categories: assign_categories(text, &self.taxonomy, self.max_categories),
            keywords: extract_keywords(text, stats, &self.tokenizer, self.keywords),
        }
    }
}
