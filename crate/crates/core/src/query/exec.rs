use std::collections::{BTreeMap, BTreeSet};

use crate::doc_model::Field;
use crate::index::{DocNumber, IndexReader, Term};

use super::snippet::{make_snippet, DEFAULT_SNIPPET_LEN};
use super::{Filters, Hit, PhraseQuery, Query, QueryError, ResultPage, Target};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// BM25 contribution of one part in one field.
pub fn bm25(tf: u32, df: u32, num_docs: u32, doc_len: u32, avg_len: f64) -> f64 {
    let n = f64::from(num_docs);
    let df = f64::from(df);
    let tf = f64::from(tf);
    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
    let norm = if avg_len > 0.0 {
        f64::from(doc_len) / avg_len
    } else {
        0.0
    };
    idf * (tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * norm))
}

/// Per-document match counts of a phrase in one field. Tokens must sit at
/// `offsets` relative to the first token.
pub fn phrase_match_positions(
    reader: &IndexReader,
    field: Field,
    tokens: &[String],
    offsets: &[u32],
) -> BTreeMap<DocNumber, u32> {
    assert_eq!(tokens.len(), offsets.len(), "one offset per token");
    let mut out = BTreeMap::new();
    if tokens.is_empty() {
        return out;
    }
    let lists: Vec<BTreeMap<DocNumber, Vec<u32>>> = tokens
        .iter()
        .map(|t| {
            reader
                .postings(&Term::new(field, t.as_str()))
                .postings
                .into_iter()
                .map(|p| (p.doc, p.positions))
                .collect()
        })
        .collect();
    'docs: for (doc, first_positions) in &lists[0] {
        let mut rest = Vec::with_capacity(lists.len() - 1);
        for list in &lists[1..] {
            match list.get(doc) {
                Some(positions) => rest.push(positions),
                None => continue 'docs,
            }
        }
        let count = first_positions
            .iter()
            .filter(|&&start| {
                rest.iter().zip(&offsets[1..]).all(|(positions, &off)| {
                    positions.binary_search(&(start - offsets[0] + off)).is_ok()
                })
            })
            .count() as u32;
        if count > 0 {
            out.insert(*doc, count);
        }
    }
    out
}

/// Documents where `tokens` occur at consecutive positions of `field`.
pub fn phrase_match(reader: &IndexReader, field: Field, tokens: &[&str]) -> Vec<DocNumber> {
    let tokens: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    let offsets: Vec<u32> = (0..tokens.len() as u32).collect();
    phrase_match_positions(reader, field, &tokens, &offsets)
        .into_keys()
        .collect()
}

/// Occurrences of one query part in one field across the snapshot.
#[derive(Debug, Clone)]
struct FieldMatches {
    field: Field,
    tf: BTreeMap<DocNumber, u32>,
}

#[derive(Debug, Clone)]
struct PreparedPart {
    fields: Vec<FieldMatches>,
}

impl PreparedPart {
    fn matches(&self, doc: DocNumber) -> bool {
        self.fields.iter().any(|f| f.tf.contains_key(&doc))
    }

    fn docs(&self) -> BTreeSet<DocNumber> {
        self.fields
            .iter()
            .flat_map(|f| f.tf.keys().copied())
            .collect()
    }
}

fn term_matches(reader: &IndexReader, field: Field, token: &str) -> BTreeMap<DocNumber, u32> {
    reader
        .postings(&Term::new(field, token))
        .postings
        .into_iter()
        .map(|p| (p.doc, p.term_freq()))
        .collect()
}

fn text_filter(reader: &IndexReader, field: Field, text: &str) -> Option<BTreeSet<DocNumber>> {
    let tokens = reader.tokenizer().tokenize(text);
    if tokens.is_empty() {
        return None;
    }
    let first = tokens[0].position;
    let offsets: Vec<u32> = tokens.iter().map(|t| t.position - first).collect();
    let tokens: Vec<String> = tokens.into_iter().map(|t| t.text).collect();
    Some(
        phrase_match_positions(reader, field, &tokens, &offsets)
            .into_keys()
            .collect(),
    )
}

/// Intersection of all filter restrictions; `None` when no filter is active.
fn filter_docs(reader: &IndexReader, filters: &Filters) -> Option<BTreeSet<DocNumber>> {
    let mut sets: Vec<BTreeSet<DocNumber>> = Vec::new();
    if let Some(host) = filters.host {
        sets.push(
            term_matches(reader, Field::Generator, host.as_str())
                .into_keys()
                .collect(),
        );
    }
    if let Some(year) = filters.year {
        sets.push(
            term_matches(reader, Field::PostDate, &year.to_string())
                .into_keys()
                .collect(),
        );
    }
    let text_filters = [
        (Field::PostAuthor, &filters.author),
        (Field::Categories, &filters.category),
        (Field::Keywords, &filters.keyword),
        (Field::PostTitle, &filters.title),
    ];
    for (field, value) in text_filters {
        if let Some(set) = value.as_deref().and_then(|v| text_filter(reader, field, v)) {
            sets.push(set);
        }
    }
    if let Some(needle) = &filters.url {
        let mut set = BTreeSet::new();
        for url in reader.field_tokens(Field::PostUrl) {
            if url.to_lowercase().contains(needle.as_str()) {
                set.extend(reader.postings(&Term::new(Field::PostUrl, url)).docs());
            }
        }
        sets.push(set);
    }
    let mut iter = sets.into_iter();
    let first = iter.next()?;
    Some(iter.fold(first, |acc, s| acc.intersection(&s).copied().collect()))
}

/// A ranked document without display data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc: DocNumber,
    pub score: f64,
    pub matched_fields: Vec<&'static str>,
}

/// A query bound to one reader snapshot, with per-part statistics resolved.
#[derive(Debug, Clone)]
pub struct PreparedQuery<'r> {
    reader: &'r IndexReader,
    parts: Vec<PreparedPart>,
    filter: Option<BTreeSet<DocNumber>>,
}

impl<'r> PreparedQuery<'r> {
    pub fn new(query: &Query, reader: &'r IndexReader) -> Self {
        let mut parts = Vec::with_capacity(query.terms.len() + query.phrases.len());
        for term in &query.terms {
            parts.push(PreparedPart {
                fields: fields_of(term.target)
                    .map(|field| FieldMatches {
                        field,
                        tf: term_matches(reader, field, &term.token),
                    })
                    .collect(),
            });
        }
        for PhraseQuery {
            target,
            tokens,
            offsets,
        } in &query.phrases
        {
            parts.push(PreparedPart {
                fields: fields_of(*target)
                    .map(|field| FieldMatches {
                        field,
                        tf: phrase_match_positions(reader, field, tokens, offsets),
                    })
                    .collect(),
            });
        }
        PreparedQuery {
            reader,
            parts,
            filter: filter_docs(reader, &query.filters),
        }
    }

    pub fn matches(&self, doc: DocNumber) -> bool {
        self.reader.is_live(doc)
            && self.parts.iter().all(|p| p.matches(doc))
            && self.filter.as_ref().is_none_or(|f| f.contains(&doc))
    }

    /// All matching doc numbers, ascending.
    pub fn candidates(&self) -> Vec<DocNumber> {
        let mut set: Option<BTreeSet<DocNumber>> = None;
        // Start from the most selective part.
        let mut order: Vec<&PreparedPart> = self.parts.iter().collect();
        order.sort_by_key(|p| p.fields.iter().map(|f| f.tf.len()).sum::<usize>());
        for part in order {
            let docs = part.docs();
            set = Some(match set {
                None => docs,
                Some(acc) => acc.intersection(&docs).copied().collect(),
            });
        }
        if let Some(filter) = &self.filter {
            set = Some(match set {
                None => filter.clone(),
                Some(acc) => acc.intersection(filter).copied().collect(),
            });
        }
        match set {
            Some(s) => s.into_iter().collect(),
            None => self.reader.live_docs(),
        }
    }

    /// Relevance of `doc`. Parts absent from the document contribute nothing.
    pub fn score(&self, doc: DocNumber) -> f64 {
        let n = self.reader.num_docs();
        let mut total = 0.0;
        for part in &self.parts {
            for fm in &part.fields {
                if let Some(&tf) = fm.tf.get(&doc) {
                    total += bm25(
                        tf,
                        fm.tf.len() as u32,
                        n,
                        self.reader.field_length(doc, fm.field),
                        self.reader.avg_field_length(fm.field),
                    );
                }
            }
        }
        total
    }

    fn matched_fields(&self, doc: DocNumber) -> Vec<&'static str> {
        let mut fields: Vec<Field> = self
            .parts
            .iter()
            .flat_map(|p| p.fields.iter())
            .filter(|fm| fm.tf.contains_key(&doc))
            .map(|fm| fm.field)
            .collect();
        fields.sort();
        fields.dedup();
        fields.into_iter().map(Field::name).collect()
    }

    /// Every matching document, sorted by score descending then doc number.
    pub fn rank(&self) -> Vec<ScoredDoc> {
        let mut out: Vec<ScoredDoc> = self
            .candidates()
            .into_iter()
            .map(|doc| ScoredDoc {
                doc,
                score: self.score(doc),
                matched_fields: self.matched_fields(doc),
            })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc)));
        out
    }
}

fn fields_of(target: Target) -> impl Iterator<Item = Field> {
    target.fields().into_iter()
}

/// Score of one document for `query` against `reader`'s snapshot.
pub fn score(query: &Query, doc: DocNumber, reader: &IndexReader) -> f64 {
    PreparedQuery::new(query, reader).score(doc)
}

/// All hits in rank order, without snippets.
pub fn rank(query: &Query, reader: &IndexReader) -> Vec<ScoredDoc> {
    PreparedQuery::new(query, reader).rank()
}

/// Runs `query` and returns the 1-based `page` of `size` hits.
pub fn execute(
    query: &Query,
    reader: &IndexReader,
    page: usize,
    size: usize,
) -> Result<ResultPage, QueryError> {
    if size == 0 {
        return Err(QueryError::InvalidPageSize);
    }
    let ranked = rank(query, reader);
    let total = ranked.len();
    let total_pages = total.div_ceil(size);
    if total == 0 && page == 1 {
        return Ok(ResultPage {
            hits: Vec::new(),
            total: 0,
            page,
            size,
            total_pages: 0,
        });
    }
    if page == 0 || page > total_pages {
        return Err(QueryError::PageOutOfRange { page, total_pages });
    }
    let hits = ranked
        .into_iter()
        .skip((page - 1) * size)
        .take(size)
        .map(|s| {
            let doc = reader.stored_document(s.doc)?;
            Ok(Hit {
                doc: s.doc,
                score: s.score,
                matched_fields: s.matched_fields,
                snippet: make_snippet(&doc, query, DEFAULT_SNIPPET_LEN),
            })
        })
        .collect::<Result<Vec<_>, QueryError>>()?;
    Ok(ResultPage {
        hits,
        total,
        page,
        size,
        total_pages,
    })
}
