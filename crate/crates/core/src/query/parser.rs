use crate::doc_model::{normalize_label, BlogHost, Field};
use crate::index::Tokenizer;

use super::{Filters, PhraseQuery, Query, QueryError, Target, TermQuery};

#[derive(Debug, PartialEq, Eq)]
enum Lexeme<'a> {
    Word(&'a str),
    Quoted(&'a str),
    Fielded {
        name: &'a str,
        value: &'a str,
        quoted: bool,
    },
}

fn lex(raw: &str) -> Result<Vec<Lexeme<'_>>, QueryError> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let quoted_from = |start: usize| -> Result<(usize, usize), QueryError> {
        match raw[start + 1..].find('"') {
            Some(off) => Ok((start + 1, start + 1 + off)),
            None => Err(QueryError::UnbalancedQuote(start)),
        }
    };
    while i < bytes.len() {
        let c = raw[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '"' {
            let (s, e) = quoted_from(i)?;
            out.push(Lexeme::Quoted(&raw[s..e]));
            i = e + 1;
            continue;
        }
        let start = i;
        while i < bytes.len() {
            let c = raw[i..].chars().next().unwrap();
            if c.is_whitespace() || c == '"' {
                break;
            }
            i += c.len_utf8();
        }
        let word = &raw[start..i];
        match word.split_once(':') {
            Some((name, "")) if !name.is_empty() && raw[i..].starts_with('"') => {
                let (s, e) = quoted_from(i)?;
                out.push(Lexeme::Fielded {
                    name,
                    value: &raw[s..e],
                    quoted: true,
                });
                i = e + 1;
            }
            Some((name, value)) if !name.is_empty() && !value.is_empty() => {
                out.push(Lexeme::Fielded {
                    name,
                    value,
                    quoted: false,
                });
            }
            _ => out.push(Lexeme::Word(word)),
        }
    }
    Ok(out)
}

enum FieldPrefix {
    Filter(FilterKey),
    Bound(Field),
}

#[derive(Clone, Copy)]
enum FilterKey {
    Host,
    Year,
    Author,
    Category,
    Keyword,
    Url,
}

fn resolve_prefix(name: &str) -> Option<FieldPrefix> {
    let name = name.to_ascii_lowercase();
    let filter = match name.as_str() {
        "host" | "type" | "blogtype" | "blog_type" => Some(FilterKey::Host),
        "year" => Some(FilterKey::Year),
        "author" => Some(FilterKey::Author),
        "category" => Some(FilterKey::Category),
        "keyword" => Some(FilterKey::Keyword),
        "url" => Some(FilterKey::Url),
        _ => None,
    };
    if let Some(key) = filter {
        return Some(FieldPrefix::Filter(key));
    }
    let field = match name.as_str() {
        "title" => Some(Field::PostTitle),
        "content" => Some(Field::PostContent),
        "comment" | "comments" => Some(Field::PostComments),
        other => Field::from_name(other),
    };
    field.map(FieldPrefix::Bound)
}

/// Adds `text` to the query as a term list or a phrase bound to `target`.
fn push_text(
    query: &mut Query,
    tokenizer: &Tokenizer,
    target: Target,
    text: &str,
    as_phrase: bool,
    exact: bool,
) {
    if exact {
        let value = text.trim();
        if !value.is_empty() {
            query.terms.push(TermQuery {
                target,
                token: value.to_string(),
            });
        }
        return;
    }
    let tokens = tokenizer.tokenize(text);
    if tokens.is_empty() {
        return;
    }
    if as_phrase {
        let first = tokens[0].position;
        query.phrases.push(PhraseQuery {
            target,
            offsets: tokens.iter().map(|t| t.position - first).collect(),
            tokens: tokens.into_iter().map(|t| t.text).collect(),
        });
    } else {
        query.terms.extend(tokens.into_iter().map(|t| TermQuery {
            target,
            token: t.text,
        }));
    }
}

/// Applies a filter; values that cannot be a valid filter are returned back.
fn apply_filter(filters: &mut Filters, key: FilterKey, value: &str) -> bool {
    let value = value.trim();
    if value.is_empty() {
        return false;
    }
    match key {
        FilterKey::Host => match BlogHost::parse(value) {
            Some(host @ (BlogHost::Blogger | BlogHost::WordPress)) => filters.host = Some(host),
            _ => return false,
        },
        FilterKey::Year => match value.parse::<i32>() {
            Ok(year) if value.len() == 4 => filters.year = Some(year),
            _ => return false,
        },
        FilterKey::Author => filters.author = Some(value.to_string()),
        FilterKey::Category => filters.category = Some(normalize_label(value)),
        FilterKey::Keyword => filters.keyword = Some(normalize_label(value)),
        FilterKey::Url => filters.url = Some(value.to_lowercase()),
    }
    true
}

/// Parses the search-box grammar with the default tokenizer.
///
/// * `"a b"` is a phrase over the default fields.
/// * `field:value` / `field:"a b"` bind to a known field (`title`, `content`,
///   `comments` or any indexed field name), or set a filter (`author`, `year`,
///   `host`/`type`, `category`, `keyword`, `url`).
/// * Anything else, including unknown `name:value` pairs, is plain text over
///   the default fields.
pub fn parse_query(raw: &str) -> Result<Query, QueryError> {
    parse_query_with(raw, &Tokenizer::default())
}

pub fn parse_query_with(raw: &str, tokenizer: &Tokenizer) -> Result<Query, QueryError> {
    if raw.trim().is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    let mut query = Query::default();
    for lexeme in lex(raw)? {
        match lexeme {
            Lexeme::Word(w) => push_text(&mut query, tokenizer, Target::Default, w, false, false),
            Lexeme::Quoted(q) => push_text(&mut query, tokenizer, Target::Default, q, true, false),
            Lexeme::Fielded {
                name,
                value,
                quoted,
            } => match resolve_prefix(name) {
                Some(FieldPrefix::Filter(key)) => {
                    if !apply_filter(&mut query.filters, key, value) {
                        push_text(&mut query, tokenizer, Target::Default, name, false, false);
                        push_text(&mut query, tokenizer, Target::Default, value, quoted, false);
                    }
                }
                Some(FieldPrefix::Bound(field)) => {
                    push_text(
                        &mut query,
                        tokenizer,
                        Target::Field(field),
                        value,
                        quoted,
                        !crate::doc_model::Schema::default().spec(field).tokenized,
                    );
                }
                None => {
                    push_text(&mut query, tokenizer, Target::Default, name, false, false);
                    push_text(&mut query, tokenizer, Target::Default, value, quoted, false);
                }
            },
        }
    }
    if query.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    Ok(query)
}

/// Sets the filter named `key` from a request parameter. Returns false for an
/// unknown key or an invalid value. `title` is accepted here as the
/// title-contains filter.
pub fn set_filter(filters: &mut Filters, key: &str, value: &str) -> bool {
    let key = match key.to_ascii_lowercase().as_str() {
        "title" => {
            let value = value.trim();
            if value.is_empty() {
                return false;
            }
            filters.title = Some(value.to_string());
            return true;
        }
        "host" | "type" | "blogtype" | "blog_type" => FilterKey::Host,
        "year" => FilterKey::Year,
        "author" => FilterKey::Author,
        "category" => FilterKey::Category,
        "keyword" => FilterKey::Keyword,
        "url" => FilterKey::Url,
        _ => return false,
    };
    apply_filter(filters, key, value)
}
