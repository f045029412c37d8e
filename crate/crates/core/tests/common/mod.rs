//! Shared fixtures and naive reference implementations for integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use blogsearch_core::doc_model::{BlogHost, BlogPostDocument, Field};
use blogsearch_core::query::{Filters, Query, Target};
use chrono::NaiveDate;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "that", "the", "their", "there", "they", "this", "to", "was",
    "will", "with",
];

pub const VOCAB: &[&str] = &[
    "blog", "search", "engine", "index", "rust", "python", "query", "crawler", "parser", "post",
    "archive", "template", "cluster", "ranking", "java", "news", "travel", "food", "music", "data",
    "the", "of", "and", "a", "in",
];

const AUTHORS: &[&str] = &["john smith", "mary jones", "lee", "ann lee"];
const LABELS: &[&str] = &["machine learning", "travel", "food", "web search", "music"];

/// Token sequence of one field value: (token, position), stopwords dropped
/// but still counted.
pub fn naive_tokens(text: &str, first: u32) -> (Vec<(String, u32)>, u32) {
    let mut out = Vec::new();
    let lower = text.to_lowercase();
    let mut pos = first;
    for word in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if !STOPWORDS.contains(&word) {
            out.push((word.to_string(), pos));
        }
        pos += 1;
    }
    (out, pos - first)
}

fn exact_field(field: Field) -> bool {
    matches!(
        field,
        Field::BlogUrl | Field::Generator | Field::PostUrl | Field::PostDate
    )
}

/// Indexed token stream of a field, mirroring the documented analysis rules.
pub fn naive_field(doc: &BlogPostDocument, field: Field) -> Vec<(String, u32)> {
    let values = doc.field_values(field);
    let mut out = Vec::new();
    let mut next = 0;
    for (i, value) in values.iter().enumerate() {
        if exact_field(field) {
            let v = value.trim();
            if !v.is_empty() {
                out.push((v.to_string(), i as u32 * 100));
            }
        } else {
            let (toks, span) = naive_tokens(value, next);
            out.extend(toks);
            next += span + 100;
        }
    }
    out
}

/// Number of start positions at which `tokens` sit at `offsets`.
pub fn naive_phrase_count(stream: &[(String, u32)], tokens: &[String], offsets: &[u32]) -> u32 {
    stream
        .iter()
        .filter(|(t, _)| *t == tokens[0])
        .filter(|(_, start)| {
            tokens
                .iter()
                .zip(offsets)
                .all(|(tok, off)| stream.iter().any(|(t, p)| t == tok && *p == start + off))
        })
        .count() as u32
}

fn naive_term_count(stream: &[(String, u32)], token: &str) -> u32 {
    stream.iter().filter(|(t, _)| t == token).count() as u32
}

fn text_phrase(doc: &BlogPostDocument, field: Field, text: &str) -> Option<bool> {
    let (toks, _) = naive_tokens(text, 0);
    if toks.is_empty() {
        return None;
    }
    let offsets: Vec<u32> = toks.iter().map(|(_, p)| p - toks[0].1).collect();
    let tokens: Vec<String> = toks.into_iter().map(|(t, _)| t).collect();
    Some(naive_phrase_count(&naive_field(doc, field), &tokens, &offsets) > 0)
}

pub fn naive_filter(doc: &BlogPostDocument, f: &Filters) -> bool {
    if let Some(h) = f.host {
        if doc.generator != h {
            return false;
        }
    }
    if let Some(y) = f.year {
        if doc.year() != Some(y) {
            return false;
        }
    }
    for (field, value) in [
        (Field::PostAuthor, &f.author),
        (Field::Categories, &f.category),
        (Field::Keywords, &f.keyword),
        (Field::PostTitle, &f.title),
    ] {
        if let Some(v) = value {
            if text_phrase(doc, field, v) == Some(false) {
                return false;
            }
        }
    }
    if let Some(u) = &f.url {
        if !doc.post_url.to_lowercase().contains(u.as_str()) {
            return false;
        }
    }
    true
}

/// Reference search over the live documents. `docs[i]` is doc number `i`,
/// `None` marks a deleted slot. Returns (doc, score) in rank order.
pub fn naive_search(docs: &[Option<BlogPostDocument>], query: &Query) -> Vec<(u32, f64)> {
    let live: Vec<(u32, &BlogPostDocument)> = docs
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.as_ref().map(|d| (i as u32, d)))
        .collect();
    let n = live.len() as f64;

    // Per part: list of (field, per-live-doc count).
    let mut parts: Vec<Vec<(Field, Vec<u32>)>> = Vec::new();
    let targets = |t: Target| match t {
        Target::Default => vec![Field::PostTitle, Field::PostContent, Field::Keywords],
        Target::Field(f) => vec![f],
    };
    for term in &query.terms {
        parts.push(
            targets(term.target)
                .into_iter()
                .map(|f| {
                    let counts = live
                        .iter()
                        .map(|(_, d)| naive_term_count(&naive_field(d, f), &term.token))
                        .collect();
                    (f, counts)
                })
                .collect(),
        );
    }
    for phrase in &query.phrases {
        parts.push(
            targets(phrase.target)
                .into_iter()
                .map(|f| {
                    let counts = live
                        .iter()
                        .map(|(_, d)| {
                            naive_phrase_count(&naive_field(d, f), &phrase.tokens, &phrase.offsets)
                        })
                        .collect();
                    (f, counts)
                })
                .collect(),
        );
    }

    let mut out = Vec::new();
    for (li, (num, doc)) in live.iter().enumerate() {
        let all = parts
            .iter()
            .all(|p| p.iter().any(|(_, counts)| counts[li] > 0));
        if !all || !naive_filter(doc, &query.filters) {
            continue;
        }
        let mut score = 0.0;
        for part in &parts {
            for (field, counts) in part {
                let tf = counts[li] as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = counts.iter().filter(|c| **c > 0).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let total: usize = live.iter().map(|(_, d)| naive_field(d, *field).len()).sum();
                let avg = total as f64 / n;
                let dl = naive_field(doc, *field).len() as f64;
                score += idf * (tf * 2.2) / (tf + 1.2 * (0.25 + 0.75 * (dl / avg)));
            }
        }
        out.push((*num, score));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

pub fn random_text(rng: &mut StdRng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| *VOCAB.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_doc(rng: &mut StdRng, n: usize) -> BlogPostDocument {
    let host = if rng.random_bool(0.5) {
        BlogHost::Blogger
    } else {
        BlogHost::WordPress
    };
    let year = rng.random_range(2009..=2013);
    let mut d = BlogPostDocument::new(format!(
        "http://blog{}.example.com/{year}/0{}/post-{n}.html",
        n % 3,
        rng.random_range(1..=9)
    ));
    d.generator = host;
    d.blog_url = format!("http://blog{}.example.com/", n % 3);
    d.blog_title = random_text(rng, 1, 3);
    d.post_title = random_text(rng, 1, 6);
    d.post_content = random_text(rng, 0, 40);
    d.post_author = AUTHORS.choose(rng).unwrap().to_string();
    d.post_date = NaiveDate::from_ymd_opt(year, 1, 1 + (n % 28) as u32);
    d.keywords = (0..rng.random_range(0..3))
        .map(|_| random_text(rng, 1, 2))
        .collect();
    d.categories = (0..rng.random_range(0..3))
        .map(|_| LABELS.choose(rng).unwrap().to_string())
        .collect();
    d.post_comments = (0..rng.random_range(0..3))
        .map(|_| random_text(rng, 1, 8))
        .collect();
    d.normalize();
    d
}

pub fn random_corpus(seed: u64, n: usize) -> Vec<BlogPostDocument> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|i| random_doc(&mut rng, i)).collect()
}

/// A random raw query string over the corpus vocabulary that parses to a
/// non-empty query.
pub fn random_query(rng: &mut StdRng) -> String {
    loop {
        let raw = random_raw_query(rng);
        if blogsearch_core::query::parse_query(&raw).is_ok() {
            return raw;
        }
    }
}

fn random_raw_query(rng: &mut StdRng) -> String {
    let mut parts: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(0..3) {
        parts.push(VOCAB.choose(rng).unwrap().to_string());
    }
    if rng.random_bool(0.3) {
        parts.push(format!("\"{}\"", random_text(rng, 2, 3)));
    }
    if rng.random_bool(0.2) {
        parts.push(format!("title:{}", VOCAB.choose(rng).unwrap()));
    }
    if rng.random_bool(0.2) {
        parts.push(format!("year:{}", rng.random_range(2009..=2013)));
    }
    if rng.random_bool(0.15) {
        parts.push(format!("author:\"{}\"", AUTHORS.choose(rng).unwrap()));
    }
    if rng.random_bool(0.1) {
        parts.push(format!(
            "host:{}",
            if rng.random_bool(0.5) {
                "blogger"
            } else {
                "wordpress"
            }
        ));
    }
    if rng.random_bool(0.1) {
        parts.push(format!("category:\"{}\"", LABELS.choose(rng).unwrap()));
    }
    if parts.is_empty() {
        parts.push(VOCAB.choose(rng).unwrap().to_string());
    }
    parts.join(" ")
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Compares engine output with the reference ranking; returns a description
/// of the first difference.
pub fn compare_rankings(got: &[(u32, f64)], want: &[(u32, f64)]) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} hits, expected {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.0 != w.0 || !close(g.1, w.1) {
            return Err(format!("rank {i}: got {g:?}, expected {w:?}"));
        }
    }
    Ok(())
}

pub fn doc_set(docs: &[u32]) -> BTreeSet<u32> {
    docs.iter().copied().collect()
}
