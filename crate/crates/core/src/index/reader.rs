use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use crate::doc_model::{BlogPostDocument, Field, Schema};

use super::segment::{DocNumber, Posting, PostingsList, Term};
use super::tokenizer::Tokenizer;
use super::{IndexError, Result, SegmentEntry, Snapshot};

/// Size and population figures for one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexStats {
    pub total_docs: u32,
    /// Bytes of field text fed to the indexer, live documents only.
    pub indexed_text_bytes: u64,
    /// Encoded term dictionary plus postings, stored fields excluded.
    pub index_bytes: u64,
    pub segments: usize,
}

/// Index bytes over indexed text bytes.
pub fn index_size_ratio(stats: &IndexStats) -> Result<f64> {
    if stats.indexed_text_bytes == 0 {
        return Err(IndexError::EmptyIndex);
    }
    Ok(stats.index_bytes as f64 / stats.indexed_text_bytes as f64)
}

#[derive(Debug)]
struct ReaderTotals {
    live_docs: u32,
    field_lengths: [u64; Field::COUNT],
    text_bytes: u64,
    index_bytes: u64,
}

/// Read-only view of one committed snapshot. Cheap to clone and shareable
/// across threads; later commits are never observed.
#[derive(Debug, Clone)]
pub struct IndexReader {
    snapshot: Arc<Snapshot>,
    totals: Arc<ReaderTotals>,
}

impl IndexReader {
    pub(super) fn new(snapshot: Arc<Snapshot>) -> Self {
        let mut totals = ReaderTotals {
            live_docs: 0,
            field_lengths: [0; Field::COUNT],
            text_bytes: 0,
            index_bytes: 0,
        };
        for entry in &snapshot.segments {
            totals.index_bytes += entry.data.index_bytes;
            for (local, record) in entry.data.docs.iter().enumerate() {
                if entry.deleted.contains(local as u32) {
                    continue;
                }
                totals.live_docs += 1;
                totals.text_bytes += record.text_bytes;
                for (sum, len) in totals.field_lengths.iter_mut().zip(record.field_lengths) {
                    *sum += u64::from(len);
                }
            }
        }
        IndexReader {
            snapshot,
            totals: Arc::new(totals),
        }
    }

    pub fn generation(&self) -> u64 {
        self.snapshot.generation
    }

    pub fn schema(&self) -> &Schema {
        &self.snapshot.schema
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.snapshot.tokenizer
    }

    /// Live documents in the snapshot.
    pub fn num_docs(&self) -> u32 {
        self.totals.live_docs
    }

    pub fn segment_count(&self) -> usize {
        self.snapshot.segments.len()
    }

    /// Live document count per segment, in doc-number order.
    pub fn segment_live_counts(&self) -> Vec<u32> {
        self.snapshot
            .segments
            .iter()
            .map(SegmentEntry::live_count)
            .collect()
    }

    fn locate(&self, doc: DocNumber) -> Option<(&SegmentEntry, u32)> {
        let segments = &self.snapshot.segments;
        let idx = segments.partition_point(|s| s.data.doc_base <= doc);
        let entry = segments.get(idx.checked_sub(1)?)?;
        let local = doc - entry.data.doc_base;
        if local < entry.data.doc_count() && !entry.deleted.contains(local) {
            Some((entry, local))
        } else {
            None
        }
    }

    pub fn is_live(&self, doc: DocNumber) -> bool {
        self.locate(doc).is_some()
    }

    /// All live doc numbers, ascending.
    pub fn live_docs(&self) -> Vec<DocNumber> {
        let mut out = Vec::with_capacity(self.totals.live_docs as usize);
        for entry in &self.snapshot.segments {
            for local in 0..entry.data.doc_count() {
                if !entry.deleted.contains(local) {
                    out.push(entry.data.doc_base + local);
                }
            }
        }
        out
    }

    /// Live postings for `term`, doc numbers ascending. Unknown terms yield an
    /// empty list.
    pub fn postings(&self, term: &Term) -> PostingsList {
        let mut postings = Vec::new();
        for entry in &self.snapshot.segments {
            if let Some(list) = entry.data.terms.get(term) {
                postings.extend(
                    list.iter()
                        .filter(|p| !entry.deleted.contains(p.doc))
                        .map(|p| Posting {
                            doc: entry.data.doc_base + p.doc,
                            positions: p.positions.clone(),
                        }),
                );
            }
        }
        PostingsList { postings }
    }

    /// Number of live documents containing `term`.
    pub fn doc_freq(&self, term: &Term) -> u32 {
        self.snapshot
            .segments
            .iter()
            .filter_map(|entry| {
                entry.data.terms.get(term).map(|list| {
                    list.iter()
                        .filter(|p| !entry.deleted.contains(p.doc))
                        .count() as u32
                })
            })
            .sum()
    }

    /// Distinct tokens of `field` that occur in at least one live document.
    pub fn field_tokens(&self, field: Field) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for entry in &self.snapshot.segments {
            let lo = Term::new(field, "");
            for (term, list) in entry.data.terms.range(lo..) {
                if term.field != field {
                    break;
                }
                if list.iter().any(|p| !entry.deleted.contains(p.doc)) {
                    out.insert(term.token.clone());
                }
            }
        }
        out
    }

    /// Every distinct term with at least one live posting.
    pub fn terms(&self) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        for entry in &self.snapshot.segments {
            for (term, list) in &entry.data.terms {
                if list.iter().any(|p| !entry.deleted.contains(p.doc)) {
                    out.insert(term.clone());
                }
            }
        }
        out
    }

    /// Stored fields of a live document.
    pub fn stored_document(&self, doc: DocNumber) -> Result<BlogPostDocument> {
        let (entry, local) = self.locate(doc).ok_or(IndexError::NoSuchDocument(doc))?;
        Ok(self
            .snapshot
            .schema
            .stored_view(&entry.data.docs[local as usize].stored))
    }

    /// The post_url of a live document, stored or not.
    pub fn doc_key(&self, doc: DocNumber) -> Option<&str> {
        self.locate(doc)
            .map(|(entry, local)| entry.data.docs[local as usize].key.as_str())
    }

    pub fn doc_by_key(&self, post_url: &str) -> Option<DocNumber> {
        for entry in &self.snapshot.segments {
            for (local, record) in entry.data.docs.iter().enumerate() {
                if record.key == post_url && !entry.deleted.contains(local as u32) {
                    return Some(entry.data.doc_base + local as u32);
                }
            }
        }
        None
    }

    /// Indexed token count of `field` in `doc`, 0 for dead documents.
    pub fn field_length(&self, doc: DocNumber, field: Field) -> u32 {
        self.locate(doc)
            .map(|(entry, local)| entry.data.docs[local as usize].field_lengths[field.ordinal()])
            .unwrap_or(0)
    }

    /// Sum of `field` lengths over live documents.
    pub fn total_field_length(&self, field: Field) -> u64 {
        self.totals.field_lengths[field.ordinal()]
    }

    pub fn avg_field_length(&self, field: Field) -> f64 {
        if self.totals.live_docs == 0 {
            0.0
        } else {
            self.total_field_length(field) as f64 / f64::from(self.totals.live_docs)
        }
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            total_docs: self.totals.live_docs,
            indexed_text_bytes: self.totals.text_bytes,
            index_bytes: self.totals.index_bytes,
            segments: self.snapshot.segments.len(),
        }
    }
}
