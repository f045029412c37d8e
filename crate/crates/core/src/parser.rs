//! Template detection and rule-driven extraction of post pages.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use ego_tree::iter::Edge;
use scraper::{ElementRef, Html, Node, Selector};
use thiserror::Error;
use url::Url;

use crate::doc_model::{BlogHost, BlogPostDocument, Field};

const DEFAULT_RULES: &str = include_str!("../data/rules.txt");

/// Fields filled from page markup. The generator comes from the template.
pub const EXTRACTED_FIELDS: [Field; 9] = [
    Field::BlogUrl,
    Field::BlogTitle,
    Field::BlogName,
    Field::PostTitle,
    Field::PostUrl,
    Field::PostDate,
    Field::PostContent,
    Field::PostAuthor,
    Field::PostComments,
];

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("page looks like {found}, rule table is for {expected}")]
    TemplateMismatch { expected: BlogHost, found: BlogHost },
    #[error("no template markers found")]
    UnknownTemplate,
    #[error("could not extract {0}")]
    ExtractionFailure(&'static str),
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("no rules for {host} {field}")]
    Missing { host: BlogHost, field: &'static str },
    #[error("reading rules: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractMode {
    Text,
    Attr(String),
    /// The `content` attribute of a `<meta>` element.
    MetaContent,
}

impl ExtractMode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(ExtractMode::Text),
            "meta" => Some(ExtractMode::MetaContent),
            _ => s
                .strip_prefix("attr:")
                .filter(|a| !a.is_empty())
                .map(|a| ExtractMode::Attr(a.to_string())),
        }
    }
}

impl fmt::Display for ExtractMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractMode::Text => f.write_str("text"),
            ExtractMode::Attr(a) => write!(f, "attr:{a}"),
            ExtractMode::MetaContent => f.write_str("meta"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectorSpec {
    pub css: String,
    pub selector: Selector,
    pub mode: ExtractMode,
}

/// Ordered candidate selectors for one field; the first that yields a
/// non-empty value wins.
#[derive(Debug, Clone)]
pub struct SelectorRule {
    pub field: Field,
    pub selectors: Vec<SelectorSpec>,
}

#[derive(Debug, Clone)]
pub struct RuleTable {
    pub host: BlogHost,
    rules: BTreeMap<Field, SelectorRule>,
}

impl RuleTable {
    pub fn rule(&self, field: Field) -> Option<&SelectorRule> {
        self.rules.get(&field)
    }

    pub fn rules(&self) -> impl Iterator<Item = &SelectorRule> {
        self.rules.values()
    }
}

/// Rule tables for every supported host.
#[derive(Debug, Clone)]
pub struct RuleSet {
    blogger: RuleTable,
    wordpress: RuleTable,
}

impl RuleSet {
    /// Parses `host | field | selector | mode` lines. Each host must have at
    /// least one rule for every extracted field.
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut tables: BTreeMap<&'static str, BTreeMap<Field, SelectorRule>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |reason: String| RuleError::Invalid {
                line: i + 1,
                reason,
            };
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            let [host, field, css, mode] = cols[..] else {
                return Err(invalid(format!("expected 4 columns, got {}", cols.len())));
            };
            let host = match BlogHost::parse(host) {
                Some(h @ (BlogHost::Blogger | BlogHost::WordPress)) => h,
                _ => return Err(invalid(format!("unknown host {host:?}"))),
            };
            let field = Field::from_name(field)
                .filter(|f| EXTRACTED_FIELDS.contains(f))
                .ok_or_else(|| invalid(format!("field {field:?} is not extracted from markup")))?;
            let selector =
                Selector::parse(css).map_err(|e| invalid(format!("bad selector {css:?}: {e}")))?;
            let mode =
                ExtractMode::parse(mode).ok_or_else(|| invalid(format!("bad mode {mode:?}")))?;
            tables
                .entry(host.as_str())
                .or_default()
                .entry(field)
                .or_insert_with(|| SelectorRule {
                    field,
                    selectors: Vec::new(),
                })
                .selectors
                .push(SelectorSpec {
                    css: css.to_string(),
                    selector,
                    mode,
                });
        }
        let mut take = |host: BlogHost| -> Result<RuleTable, RuleError> {
            let rules = tables.remove(host.as_str()).unwrap_or_default();
            if let Some(f) = EXTRACTED_FIELDS.iter().find(|f| !rules.contains_key(f)) {
                return Err(RuleError::Missing {
                    host,
                    field: f.name(),
                });
            }
            Ok(RuleTable { host, rules })
        };
        Ok(RuleSet {
            blogger: take(BlogHost::Blogger)?,
            wordpress: take(BlogHost::WordPress)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn table(&self, host: BlogHost) -> Option<&RuleTable> {
        match host {
            BlogHost::Blogger => Some(&self.blogger),
            BlogHost::WordPress => Some(&self.wordpress),
            BlogHost::Unknown => None,
        }
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::parse(DEFAULT_RULES).expect("bundled rules are valid")
    }
}

fn detect_in(doc: &Html, raw: &str) -> BlogHost {
    let generator = Selector::parse(r#"meta[name="generator" i]"#).unwrap();
    for meta in doc.select(&generator) {
        let content = meta.value().attr("content").unwrap_or("").to_lowercase();
        if content.starts_with("blogger") {
            return BlogHost::Blogger;
        }
        if content.contains("wordpress") {
            return BlogHost::WordPress;
        }
    }
    let lower = raw.to_lowercase();
    if lower.contains("blogger.com/") || lower.contains("blogspot.com") {
        BlogHost::Blogger
    } else if lower.contains("/wp-content/") || lower.contains("/wp-includes/") {
        BlogHost::WordPress
    } else {
        BlogHost::Unknown
    }
}

/// Host template of a page: the generator meta tag first, then host-specific
/// markers (Blogger/blogspot asset URLs, `wp-content`/`wp-includes` paths).
pub fn detect_template(html: &str) -> BlogHost {
    detect_in(&Html::parse_document(html), html)
}

fn is_block(name: &str) -> bool {
    matches!(
        name,
        "address"
            | "article"
            | "aside"
            | "blockquote"
            | "br"
            | "dd"
            | "div"
            | "dl"
            | "dt"
            | "figcaption"
            | "figure"
            | "footer"
            | "h1"
            | "h2"
            | "h3"
            | "h4"
            | "h5"
            | "h6"
            | "header"
            | "hr"
            | "li"
            | "main"
            | "nav"
            | "ol"
            | "p"
            | "pre"
            | "section"
            | "table"
            | "td"
            | "th"
            | "tr"
            | "ul"
    )
}

fn is_hidden(name: &str) -> bool {
    matches!(name, "script" | "style" | "noscript" | "template")
}

/// Visible text of an element with block boundaries turned into spaces and
/// whitespace collapsed.
pub fn element_text(el: ElementRef<'_>) -> String {
    let mut out = String::new();
    let mut hidden = 0usize;
    for edge in el.traverse() {
        match edge {
            Edge::Open(node) => match node.value() {
                Node::Element(e) if is_hidden(e.name()) => hidden += 1,
                Node::Element(e) if hidden == 0 && is_block(e.name()) => out.push(' '),
                Node::Text(t) if hidden == 0 => out.push_str(t),
                _ => {}
            },
            Edge::Close(node) => {
                if let Node::Element(e) = node.value() {
                    if is_hidden(e.name()) {
                        hidden -= 1;
                    } else if hidden == 0 && is_block(e.name()) {
                        out.push(' ');
                    }
                }
            }
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Plain text of an HTML fragment: tags removed, entities decoded, script and
/// style content dropped, whitespace collapsed.
pub fn strip_markup(html_fragment: &str) -> String {
    let frag = Html::parse_fragment(html_fragment);
    element_text(frag.root_element())
}

/// Parses the date formats seen in Blogger and WordPress templates.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.date_naive());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, fmt) {
            return Some(dt.date());
        }
    }
    const DATE_FORMATS: [&str; 8] = [
        "%Y-%m-%d",
        "%A, %B %d, %Y",
        "%B %d, %Y",
        "%b %d, %Y",
        "%d %B %Y",
        "%d %b %Y",
        "%m/%d/%Y",
        "%Y/%m/%d",
    ];
    DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(t, fmt).ok())
}

fn extract(el: ElementRef<'_>, mode: &ExtractMode) -> String {
    let raw = match mode {
        ExtractMode::Text => return element_text(el),
        ExtractMode::Attr(name) => el.value().attr(name),
        ExtractMode::MetaContent => el.value().attr("content"),
    };
    raw.unwrap_or("")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Values of a rule: all non-empty matches of the first productive selector.
fn apply_rule(doc: &Html, rule: &SelectorRule) -> Vec<String> {
    for spec in &rule.selectors {
        let values: Vec<String> = doc
            .select(&spec.selector)
            .map(|el| extract(el, &spec.mode))
            .filter(|v| !v.is_empty())
            .collect();
        if !values.is_empty() {
            return values;
        }
    }
    Vec::new()
}

fn resolve(base: &Url, href: &str) -> Option<String> {
    base.join(href).ok().map(|mut u| {
        u.set_fragment(None);
        u.to_string()
    })
}

/// Extracts a post page with `table`. Only post_content is mandatory; any
/// other missing field is left empty and logged.
pub fn parse_post(
    html: &str,
    page_url: &Url,
    table: &RuleTable,
) -> Result<BlogPostDocument, ParseError> {
    let doc = Html::parse_document(html);
    let found = detect_in(&doc, html);
    if found != BlogHost::Unknown && found != table.host {
        return Err(ParseError::TemplateMismatch {
            expected: table.host,
            found,
        });
    }
    let mut values: BTreeMap<Field, Vec<String>> = BTreeMap::new();
    for field in EXTRACTED_FIELDS {
        let v = table
            .rule(field)
            .map(|r| apply_rule(&doc, r))
            .unwrap_or_default();
        if v.is_empty() {
            if field == Field::PostContent {
                return Err(ParseError::ExtractionFailure("post_content"));
            }
            log::warn!("{page_url}: no value for {}", field.name());
        }
        values.insert(field, v);
    }
    let mut first = |f: Field| values.get_mut(&f).and_then(|v| v.drain(..).next());

    let post_url = first(Field::PostUrl)
        .and_then(|h| resolve(page_url, &h))
        .unwrap_or_else(|| page_url.to_string());
    let mut out = BlogPostDocument::new(post_url);
    out.generator = table.host;
    out.blog_url = first(Field::BlogUrl)
        .and_then(|h| resolve(page_url, &h))
        .or_else(|| resolve(page_url, "/"))
        .unwrap_or_default();
    out.blog_title = first(Field::BlogTitle).unwrap_or_default();
    out.blog_name = first(Field::BlogName).unwrap_or_default();
    out.post_title = first(Field::PostTitle).unwrap_or_default();
    out.post_date = first(Field::PostDate).and_then(|d| {
        let parsed = parse_date(&d);
        if parsed.is_none() {
            log::warn!("{page_url}: unparseable date {d:?}");
        }
        parsed
    });
    out.post_content = first(Field::PostContent).unwrap_or_default();
    out.post_author = first(Field::PostAuthor).unwrap_or_default();
    out.post_comments = values.remove(&Field::PostComments).unwrap_or_default();
    Ok(out)
}

/// Detects the template and parses with the matching table.
pub fn parse_page(
    html: &str,
    page_url: &Url,
    rules: &RuleSet,
) -> Result<BlogPostDocument, ParseError> {
    let host = detect_template(html);
    let table = rules.table(host).ok_or(ParseError::UnknownTemplate)?;
    parse_post(html, page_url, table)
}
