use std::collections::BTreeMap;

use crate::doc_model::{BlogPostDocument, Field, Schema};

use super::tokenizer::Tokenizer;

/// Integer document number, global within one index snapshot.
pub type DocNumber = u32;

pub type SegmentId = u64;

/// Positions between consecutive values of a multi-valued field, so a phrase
/// never matches across two comments or two category labels.
pub const POSITION_GAP: u32 = 100;

/// A `(field, token)` pair. The same token in two fields is two terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub field: Field,
    pub token: String,
}

impl Term {
    pub fn new(field: Field, token: impl Into<String>) -> Self {
        Term {
            field,
            token: token.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub doc: DocNumber,
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn term_freq(&self) -> u32 {
        self.positions.len() as u32
    }
}

/// Postings of one term: doc numbers strictly ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PostingsList {
    pub postings: Vec<Posting>,
}

impl PostingsList {
    pub fn doc_freq(&self) -> u32 {
        self.postings.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = DocNumber> + '_ {
        self.postings.iter().map(|p| p.doc)
    }
}

/// Token stream of one field of one document, as the index sees it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldTokens {
    pub tokens: Vec<(String, u32)>,
}

impl FieldTokens {
    /// Field length used for length normalization.
    pub fn len(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Runs the analysis chain for one field according to its schema flags.
pub fn analyze_field(
    doc: &BlogPostDocument,
    field: Field,
    schema: &Schema,
    tokenizer: &Tokenizer,
) -> FieldTokens {
    let spec = schema.spec(field);
    if !spec.indexed {
        return FieldTokens::default();
    }
    let values = doc.field_values(field);
    let mut tokens = Vec::new();
    if spec.tokenized {
        let mut next = 0u32;
        for value in &values {
            for tok in tokenizer.tokenize_from(value, next) {
                tokens.push((tok.text, tok.position));
            }
            next += tokenizer.position_span(value) + POSITION_GAP;
        }
    } else {
        for (i, value) in values.iter().enumerate() {
            let value = value.trim();
            if !value.is_empty() {
                tokens.push((value.to_string(), i as u32 * POSITION_GAP));
            }
        }
    }
    FieldTokens { tokens }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DocRecord {
    /// The document's post_url, kept regardless of the stored flag.
    pub key: String,
    pub stored: BlogPostDocument,
    pub field_lengths: [u32; Field::COUNT],
    pub text_bytes: u64,
}

/// One immutable sub-index. Doc ids inside are local, `doc_base` maps them to
/// global doc numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SegmentData {
    pub id: SegmentId,
    pub doc_base: DocNumber,
    pub docs: Vec<DocRecord>,
    pub terms: BTreeMap<Term, Vec<Posting>>,
    /// Encoded size of the dictionary plus postings, filled in by the codec.
    pub index_bytes: u64,
}

impl SegmentData {
    pub fn doc_count(&self) -> u32 {
        self.docs.len() as u32
    }
}

pub(crate) struct SegmentBuilder<'a> {
    schema: &'a Schema,
    tokenizer: &'a Tokenizer,
    docs: Vec<DocRecord>,
    terms: BTreeMap<Term, Vec<Posting>>,
}

impl<'a> SegmentBuilder<'a> {
    pub fn new(schema: &'a Schema, tokenizer: &'a Tokenizer) -> Self {
        SegmentBuilder {
            schema,
            tokenizer,
            docs: Vec::new(),
            terms: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, doc: &BlogPostDocument) {
        let local = self.docs.len() as u32;
        let mut field_lengths = [0u32; Field::COUNT];
        let mut text_bytes = 0u64;
        for field in self.schema.indexed_fields() {
            text_bytes += doc
                .field_values(field)
                .iter()
                .map(|v| v.len() as u64)
                .sum::<u64>();
            let analyzed = analyze_field(doc, field, self.schema, self.tokenizer);
            field_lengths[field.ordinal()] = analyzed.len();
            let mut by_token: BTreeMap<String, Vec<u32>> = BTreeMap::new();
            for (token, pos) in analyzed.tokens {
                by_token.entry(token).or_default().push(pos);
            }
            for (token, positions) in by_token {
                self.terms
                    .entry(Term { field, token })
                    .or_default()
                    .push(Posting {
                        doc: local,
                        positions,
                    });
            }
        }
        let mut stored = self.schema.stored_view(doc);
        stored.post_url = doc.post_url.clone();
        self.docs.push(DocRecord {
            key: doc.post_url.clone(),
            stored,
            field_lengths,
            text_bytes,
        });
    }

    pub fn build(self, id: SegmentId, doc_base: DocNumber) -> SegmentData {
        SegmentData {
            id,
            doc_base,
            docs: self.docs,
            terms: self.terms,
            index_bytes: 0,
        }
    }
}

/// Fixed-size set of local doc ids marked deleted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeletedDocs {
    bits: Vec<u64>,
    len: u32,
    count: u32,
}

impl DeletedDocs {
    pub fn new(len: u32) -> Self {
        DeletedDocs {
            bits: vec![0; (len as usize).div_ceil(64)],
            len,
            count: 0,
        }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of deleted docs.
    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn contains(&self, local: u32) -> bool {
        local < self.len && self.bits[(local / 64) as usize] & (1 << (local % 64)) != 0
    }

    /// Marks `local` deleted, returning false if it already was.
    pub fn insert(&mut self, local: u32) -> bool {
        assert!(local < self.len, "doc {local} out of range {}", self.len);
        let word = &mut self.bits[(local / 64) as usize];
        let mask = 1u64 << (local % 64);
        if *word & mask != 0 {
            return false;
        }
        *word |= mask;
        self.count += 1;
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len).filter(move |d| self.contains(*d))
    }

    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        self.bits.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub(crate) fn from_bytes(len: u32, bytes: &[u8]) -> Option<Self> {
        let words = (len as usize).div_ceil(64);
        if bytes.len() != words * 8 {
            return None;
        }
        let bits: Vec<u64> = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut out = DeletedDocs {
            bits,
            len,
            count: 0,
        };
        out.count = out.iter().count() as u32;
        Some(out)
    }
}

/// Combines segments into one, dropping deleted docs and renumbering the
/// survivors contiguously from `doc_base` in segment order.
pub(crate) fn merge(
    parts: &[(&SegmentData, &DeletedDocs)],
    id: SegmentId,
    doc_base: DocNumber,
) -> SegmentData {
    let mut docs = Vec::new();
    let mut terms: BTreeMap<Term, Vec<Posting>> = BTreeMap::new();
    for (segment, deleted) in parts {
        let mut remap: Vec<Option<u32>> = Vec::with_capacity(segment.docs.len());
        for (local, record) in segment.docs.iter().enumerate() {
            if deleted.contains(local as u32) {
                remap.push(None);
            } else {
                remap.push(Some(docs.len() as u32));
                docs.push(record.clone());
            }
        }
        for (term, postings) in &segment.terms {
            let live: Vec<Posting> = postings
                .iter()
                .filter_map(|p| {
                    remap[p.doc as usize].map(|doc| Posting {
                        doc,
                        positions: p.positions.clone(),
                    })
                })
                .collect();
            if !live.is_empty() {
                terms.entry(term.clone()).or_default().extend(live);
            }
        }
    }
    SegmentData {
        id,
        doc_base,
        docs,
        terms,
        index_bytes: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(url: &str, title: &str, comments: &[&str]) -> BlogPostDocument {
        let mut d = BlogPostDocument::new(url);
        d.post_title = title.into();
        d.post_comments = comments.iter().map(|s| s.to_string()).collect();
        d
    }

    #[test]
    fn multi_valued_fields_get_position_gaps() {
        let d = doc("http://a.example/p", "", &["great post", "post again"]);
        let toks = analyze_field(
            &d,
            Field::PostComments,
            &Schema::default(),
            &Tokenizer::default(),
        );
        assert_eq!(
            toks.tokens,
            vec![
                ("great".to_string(), 0),
                ("post".to_string(), 1),
                ("post".to_string(), 102),
                ("again".to_string(), 103)
            ]
        );
        assert_eq!(toks.len(), 4);
    }

    #[test]
    fn exact_fields_keep_whole_value() {
        let d = doc("http://a.example/Some/Path", "", &[]);
        let toks = analyze_field(
            &d,
            Field::PostUrl,
            &Schema::default(),
            &Tokenizer::default(),
        );
        assert_eq!(
            toks.tokens,
            vec![("http://a.example/Some/Path".to_string(), 0)]
        );
    }

    #[test]
    fn builder_records_positions_and_lengths() {
        let schema = Schema::default();
        let tok = Tokenizer::default();
        let mut b = SegmentBuilder::new(&schema, &tok);
        b.add(&doc("http://a.example/1", "rust and rust", &[]));
        b.add(&doc("http://a.example/2", "go", &[]));
        let seg = b.build(1, 10);
        let rust = &seg.terms[&Term::new(Field::PostTitle, "rust")];
        assert_eq!(
            rust,
            &vec![Posting {
                doc: 0,
                positions: vec![0, 2]
            }]
        );
        assert_eq!(seg.docs[0].field_lengths[Field::PostTitle.ordinal()], 2);
        assert_eq!(seg.docs[1].field_lengths[Field::PostTitle.ordinal()], 1);
    }

    #[test]
    fn deleted_docs_bitset() {
        let mut d = DeletedDocs::new(70);
        assert!(d.insert(3));
        assert!(!d.insert(3));
        assert!(d.insert(69));
        assert_eq!(d.count(), 2);
        assert_eq!(d.iter().collect::<Vec<_>>(), vec![3, 69]);
        let back = DeletedDocs::from_bytes(70, &d.to_bytes()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn merge_drops_deleted_and_renumbers() {
        let schema = Schema::default();
        let tok = Tokenizer::default();
        let mut a = SegmentBuilder::new(&schema, &tok);
        a.add(&doc("http://a.example/1", "rust", &[]));
        a.add(&doc("http://a.example/2", "rust go", &[]));
        let a = a.build(1, 0);
        let mut b = SegmentBuilder::new(&schema, &tok);
        b.add(&doc("http://a.example/3", "go rust", &[]));
        let b = b.build(2, 2);
        let mut del_a = DeletedDocs::new(2);
        del_a.insert(0);
        let merged = merge(&[(&a, &del_a), (&b, &DeletedDocs::new(1))], 3, 0);
        assert_eq!(merged.doc_count(), 2);
        assert_eq!(merged.docs[0].key, "http://a.example/2");
        let rust = &merged.terms[&Term::new(Field::PostTitle, "rust")];
        assert_eq!(rust.iter().map(|p| p.doc).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(rust[1].positions, vec![1]);
    }
}
