use std::collections::BTreeSet;

use crate::doc_model::{BlogPostDocument, Field};
use crate::index::Tokenizer;

use super::Query;

pub const MARK_OPEN: char = '⟦';
pub const MARK_CLOSE: char = '⟧';
pub const DEFAULT_SNIPPET_LEN: usize = 200;

fn content_tokens(query: &Query) -> BTreeSet<&str> {
    let mut out = BTreeSet::new();
    for t in &query.terms {
        if t.target.covers(Field::PostContent) {
            out.insert(t.token.as_str());
        }
    }
    for p in &query.phrases {
        if p.target.covers(Field::PostContent) {
            out.extend(p.tokens.iter().map(String::as_str));
        }
    }
    out
}

/// Up to `max_len` characters of post_content around the first query match,
/// with every matching token inside the window wrapped in `⟦ ⟧`. Without a
/// match the window is the leading `max_len` characters. Markers are not
/// counted against `max_len`.
pub fn make_snippet(doc: &BlogPostDocument, query: &Query, max_len: usize) -> String {
    let content = doc.post_content.as_str();
    let wanted = content_tokens(query);
    // Byte offset of every char boundary, plus the end.
    let boundaries: Vec<usize> = content
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(content.len()))
        .collect();
    let char_len = boundaries.len() - 1;
    let char_at = |byte: usize| boundaries.partition_point(|&b| b < byte);

    let matches: Vec<(usize, usize)> = Tokenizer::without_stopwords()
        .tokenize(content)
        .into_iter()
        .filter(|t| wanted.contains(t.text.as_str()))
        .map(|t| (char_at(t.start), char_at(t.end)))
        .collect();

    let (start, end) = match matches.first() {
        _ if char_len <= max_len => (0, char_len),
        None => (0, max_len),
        Some(&(s, e)) => {
            let center = (s + e) / 2;
            let end = (center.saturating_sub(max_len / 2) + max_len).min(char_len);
            (end - max_len, end)
        }
    };

    let mut out = String::with_capacity(boundaries[end] - boundaries[start] + 16);
    let mut pending = matches
        .iter()
        .filter(|(s, e)| *s >= start && *e <= end)
        .peekable();
    let mut open_until: Option<usize> = None;
    for (ci, ch) in content[boundaries[start]..boundaries[end]]
        .chars()
        .enumerate()
    {
        let ci = ci + start;
        if open_until == Some(ci) {
            out.push(MARK_CLOSE);
            open_until = None;
        }
        if let Some(&&(s, e)) = pending.peek() {
            if s == ci {
                out.push(MARK_OPEN);
                open_until = Some(e);
                pending.next();
            }
        }
        out.push(ch);
    }
    if open_until.is_some() {
        out.push(MARK_CLOSE);
    }
    out
}
