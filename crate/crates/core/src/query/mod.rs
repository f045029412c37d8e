//! Query parsing, conjunctive execution, BM25 ranking, pagination and snippets.
//!
//! Ranking formula, per query part (term or phrase) and per target field in
//! which the part occurs:
//!
//! ```text
//! idf   = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! ```
//!
//! with `k1 = 1.2`, `b = 0.75`. `N` is the number of live documents in the
//! snapshot, `df` the number of live documents in which the part occurs in that
//! field, `tf` the occurrence count in the document's field (for phrases, the
//! number of matching start positions), `dl` the field's token count after
//! stopword removal and `avgdl` its mean over live documents. A document's
//! score is the sum over parts in query order (terms, then phrases) and over
//! target fields in schema order. Hits sort by score descending, then doc number ascending.

mod exec;
mod parser;
mod snippet;

use serde::Serialize;
use thiserror::Error;

use crate::doc_model::{BlogHost, Field};
use crate::index::IndexError;

pub use exec::{
    bm25, execute, phrase_match, phrase_match_positions, rank, score, PreparedQuery, ScoredDoc, B,
    K1,
};
pub use parser::{parse_query, parse_query_with, set_filter};
pub use snippet::{make_snippet, DEFAULT_SNIPPET_LEN, MARK_CLOSE, MARK_OPEN};

/// Fields searched by parts without a field prefix.
pub const DEFAULT_FIELDS: [Field; 3] = [Field::PostTitle, Field::PostContent, Field::Keywords];

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unbalanced quote starting at byte {0}")]
    UnbalancedQuote(usize),
    #[error("page {page} is out of range (1..={total_pages})")]
    PageOutOfRange { page: usize, total_pages: usize },
    #[error("page size must be at least 1")]
    InvalidPageSize,
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl QueryError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::EmptyQuery => "empty_query",
            QueryError::UnbalancedQuote(_) => "unbalanced_quote",
            QueryError::PageOutOfRange { .. } => "page_out_of_range",
            QueryError::InvalidPageSize => "invalid_page_size",
            QueryError::Index(_) => "index_error",
        }
    }
}

/// Where a term or phrase is looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The default field set.
    Default,
    Field(Field),
}

impl Target {
    pub fn fields(&self) -> Vec<Field> {
        match self {
            Target::Default => DEFAULT_FIELDS.to_vec(),
            Target::Field(f) => vec![*f],
        }
    }

    pub fn covers(&self, field: Field) -> bool {
        match self {
            Target::Default => DEFAULT_FIELDS.contains(&field),
            Target::Field(f) => *f == field,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermQuery {
    pub target: Target,
    pub token: String,
}

/// Tokens that must occur at fixed relative positions. `offsets[0]` is 0;
/// gaps come from stopwords dropped inside the quoted text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhraseQuery {
    pub target: Target,
    pub tokens: Vec<String>,
    pub offsets: Vec<u32>,
}

impl PhraseQuery {
    /// A phrase of consecutive tokens.
    pub fn consecutive(target: Target, tokens: Vec<String>) -> Self {
        let offsets = (0..tokens.len() as u32).collect();
        PhraseQuery {
            target,
            tokens,
            offsets,
        }
    }
}

/// Restrictions that narrow the result set without contributing to the score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Filters {
    pub host: Option<BlogHost>,
    pub year: Option<i32>,
    pub author: Option<String>,
    pub category: Option<String>,
    pub keyword: Option<String>,
    pub title: Option<String>,
    pub url: Option<String>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        self == &Filters::default()
    }
}

/// A parsed query. All parts are combined conjunctively.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Query {
    pub terms: Vec<TermQuery>,
    pub phrases: Vec<PhraseQuery>,
    pub filters: Filters,
}

impl Query {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.phrases.is_empty() && self.filters.is_empty()
    }

    /// True when the query has terms or phrases, i.e. contributes to scores.
    pub fn has_scoring_parts(&self) -> bool {
        !self.terms.is_empty() || !self.phrases.is_empty()
    }
}

/// One ranked result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub doc: u32,
    pub score: f64,
    pub matched_fields: Vec<&'static str>,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultPage {
    pub hits: Vec<Hit>,
    pub total: usize,
    pub page: usize,
    pub size: usize,
    pub total_pages: usize,
}
