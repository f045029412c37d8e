//! Canonical blog post document, field identifiers and the field schema.
//!
//! A [`BlogPostDocument`] carries the ten elements extracted from a post page
//! plus the categories and keywords produced by content analysis. Documents
//! travel between components as canonical JSON: sorted keys, no insignificant
//! whitespace, one document per line in corpus files.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("malformed document: field `{field}`: {reason}")]
    MalformedDocument { field: &'static str, reason: String },
    #[error("malformed document json: {0}")]
    InvalidJson(String),
}

impl DocumentError {
    fn malformed(field: &'static str, reason: impl Into<String>) -> Self {
        DocumentError::MalformedDocument {
            field,
            reason: reason.into(),
        }
    }

    /// The offending field, if the error names one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            DocumentError::MalformedDocument { field, .. } => Some(field),
            DocumentError::InvalidJson(_) => None,
        }
    }
}

/// Hosting service that generated a blog page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlogHost {
    Blogger,
    #[serde(rename = "wordpress")]
    WordPress,
    Unknown,
}

impl BlogHost {
    pub fn as_str(self) -> &'static str {
        match self {
            BlogHost::Blogger => "blogger",
            BlogHost::WordPress => "wordpress",
            BlogHost::Unknown => "unknown",
        }
    }

    /// Parses a host name case-insensitively. Anything unrecognised is `None`.
    pub fn parse(s: &str) -> Option<BlogHost> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blogger" | "blogspot" => Some(BlogHost::Blogger),
            "wordpress" | "wp" => Some(BlogHost::WordPress),
            "unknown" => Some(BlogHost::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for BlogHost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One extracted blog post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlogPostDocument {
    pub blog_url: String,
    pub blog_title: String,
    pub blog_name: String,
    pub generator: BlogHost,
    pub post_title: String,
    /// Unique key of the document within an index.
    pub post_url: String,
    pub post_date: Option<NaiveDate>,
    pub post_content: String,
    pub post_author: String,
    pub post_comments: Vec<String>,
    pub categories: Vec<String>,
    pub keywords: Vec<String>,
}

impl BlogPostDocument {
    /// An otherwise empty document keyed by `post_url`.
    pub fn new(post_url: impl Into<String>) -> Self {
        BlogPostDocument {
            blog_url: String::new(),
            blog_title: String::new(),
            blog_name: String::new(),
            generator: BlogHost::Unknown,
            post_title: String::new(),
            post_url: post_url.into(),
            post_date: None,
            post_content: String::new(),
            post_author: String::new(),
            post_comments: Vec::new(),
            categories: Vec::new(),
            keywords: Vec::new(),
        }
    }

    pub fn year(&self) -> Option<i32> {
        self.post_date.map(|d| d.year())
    }

    /// Checks the document invariants without modifying anything.
    pub fn validate(&self) -> Result<(), DocumentError> {
        if self.post_url.is_empty() {
            return Err(DocumentError::malformed("post_url", "empty"));
        }
        Url::parse(&self.post_url)
            .map_err(|e| DocumentError::malformed("post_url", e.to_string()))?;
        if self.categories != normalize_labels(&self.categories) {
            return Err(DocumentError::malformed("categories", "not normalized"));
        }
        if self.keywords != normalize_labels(&self.keywords) {
            return Err(DocumentError::malformed("keywords", "not normalized"));
        }
        Ok(())
    }

    /// Applies label normalization to categories and keywords in place.
    pub fn normalize(&mut self) {
        self.categories = normalize_labels(&self.categories);
        self.keywords = normalize_labels(&self.keywords);
    }

    /// Text of a field as indexed. Multi-valued fields yield one entry per value.
    pub fn field_values(&self, field: Field) -> Vec<String> {
        match field {
            Field::BlogUrl => vec![self.blog_url.clone()],
            Field::BlogTitle => vec![self.blog_title.clone()],
            Field::BlogName => vec![self.blog_name.clone()],
            Field::Generator => vec![self.generator.as_str().to_string()],
            Field::PostTitle => vec![self.post_title.clone()],
            Field::PostUrl => vec![self.post_url.clone()],
            Field::PostDate => self
                .post_date
                .map(|d| vec![d.year().to_string()])
                .unwrap_or_default(),
            Field::PostContent => vec![self.post_content.clone()],
            Field::PostAuthor => vec![self.post_author.clone()],
            Field::PostComments => self.post_comments.clone(),
            Field::Categories => self.categories.clone(),
            Field::Keywords => self.keywords.clone(),
        }
    }

    /// Resets a field to its empty value.
    pub fn clear_field(&mut self, field: Field) {
        match field {
            Field::BlogUrl => self.blog_url.clear(),
            Field::BlogTitle => self.blog_title.clear(),
            Field::BlogName => self.blog_name.clear(),
            Field::Generator => self.generator = BlogHost::Unknown,
            Field::PostTitle => self.post_title.clear(),
            Field::PostUrl => self.post_url.clear(),
            Field::PostDate => self.post_date = None,
            Field::PostContent => self.post_content.clear(),
            Field::PostAuthor => self.post_author.clear(),
            Field::PostComments => self.post_comments.clear(),
            Field::Categories => self.categories.clear(),
            Field::Keywords => self.keywords.clear(),
        }
    }

    fn to_value(&self) -> Value {
        // serde_json's default map is a BTreeMap, so keys come out sorted.
        let mut map = Map::new();
        map.insert("blog_url".into(), Value::from(self.blog_url.as_str()));
        map.insert("blog_title".into(), Value::from(self.blog_title.as_str()));
        map.insert("blog_name".into(), Value::from(self.blog_name.as_str()));
        map.insert("generator".into(), Value::from(self.generator.as_str()));
        map.insert("post_title".into(), Value::from(self.post_title.as_str()));
        map.insert("post_url".into(), Value::from(self.post_url.as_str()));
        map.insert(
            "post_date".into(),
            match self.post_date {
                Some(d) => Value::from(d.format("%Y-%m-%d").to_string()),
                None => Value::Null,
            },
        );
        map.insert(
            "post_content".into(),
            Value::from(self.post_content.as_str()),
        );
        map.insert("post_author".into(), Value::from(self.post_author.as_str()));
        map.insert("post_comments".into(), string_array(&self.post_comments));
        map.insert("categories".into(), string_array(&self.categories));
        map.insert("keywords".into(), string_array(&self.keywords));
        Value::Object(map)
    }
}

fn string_array(values: &[String]) -> Value {
    Value::Array(values.iter().map(|v| Value::from(v.as_str())).collect())
}

/// Serializes a document as a single line of canonical JSON.
pub fn to_canonical_json(doc: &BlogPostDocument) -> String {
    doc.to_value().to_string()
}

/// Parses and validates canonical JSON. Missing optional fields take their
/// empty value; `post_url` is mandatory.
pub fn from_canonical_json(text: &str) -> Result<BlogPostDocument, DocumentError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| DocumentError::InvalidJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| DocumentError::InvalidJson("top level is not an object".into()))?;

    let post_url = match obj.get("post_url") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(DocumentError::malformed("post_url", "empty")),
        Some(_) => return Err(DocumentError::malformed("post_url", "not a string")),
        None => return Err(DocumentError::malformed("post_url", "missing")),
    };

    let mut doc = BlogPostDocument::new(post_url);
    doc.blog_url = opt_string(obj, "blog_url")?;
    doc.blog_title = opt_string(obj, "blog_title")?;
    doc.blog_name = opt_string(obj, "blog_name")?;
    doc.post_title = opt_string(obj, "post_title")?;
    doc.post_content = opt_string(obj, "post_content")?;
    doc.post_author = opt_string(obj, "post_author")?;
    doc.post_comments = opt_strings(obj, "post_comments")?;
    doc.categories = opt_strings(obj, "categories")?;
    doc.keywords = opt_strings(obj, "keywords")?;

    doc.generator = match obj.get("generator") {
        None | Some(Value::Null) => BlogHost::Unknown,
        Some(Value::String(s)) => BlogHost::parse(s)
            .ok_or_else(|| DocumentError::malformed("generator", format!("unknown host {s:?}")))?,
        Some(_) => return Err(DocumentError::malformed("generator", "not a string")),
    };

    doc.post_date = match obj.get("post_date") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| DocumentError::malformed("post_date", format!("{s:?}: {e}")))?,
        ),
        Some(_) => return Err(DocumentError::malformed("post_date", "not a string")),
    };

    doc.normalize();
    doc.validate()?;
    Ok(doc)
}

fn field_name_static(name: &str) -> &'static str {
    Field::ALL
        .iter()
        .find(|f| f.name() == name)
        .map(|f| f.name())
        .unwrap_or("unknown")
}

fn opt_string(obj: &Map<String, Value>, key: &str) -> Result<String, DocumentError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(DocumentError::malformed(
            field_name_static(key),
            "not a string",
        )),
    }
}

fn opt_strings(obj: &Map<String, Value>, key: &str) -> Result<Vec<String>, DocumentError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| match item {
                Value::String(s) => Ok(s.clone()),
                _ => Err(DocumentError::malformed(
                    field_name_static(key),
                    "array element is not a string",
                )),
            })
            .collect(),
        Some(_) => Err(DocumentError::malformed(
            field_name_static(key),
            "not an array",
        )),
    }
}

/// Lowercases, trims and collapses internal whitespace of one label.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalizes every label, drops empties and duplicates. First occurrence wins.
pub fn normalize_labels(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(labels.len());
    for label in labels {
        let norm = normalize_label(label);
        if !norm.is_empty() && !out.contains(&norm) {
            out.push(norm);
        }
    }
    out
}

/// Document fields. The discriminant doubles as the field's ordinal in a schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    BlogUrl = 0,
    BlogTitle,
    BlogName,
    Generator,
    PostTitle,
    PostUrl,
    PostDate,
    PostContent,
    PostAuthor,
    PostComments,
    Categories,
    Keywords,
}

impl Field {
    pub const COUNT: usize = 12;

    pub const ALL: [Field; Field::COUNT] = [
        Field::BlogUrl,
        Field::BlogTitle,
        Field::BlogName,
        Field::Generator,
        Field::PostTitle,
        Field::PostUrl,
        Field::PostDate,
        Field::PostContent,
        Field::PostAuthor,
        Field::PostComments,
        Field::Categories,
        Field::Keywords,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::BlogUrl => "blog_url",
            Field::BlogTitle => "blog_title",
            Field::BlogName => "blog_name",
            Field::Generator => "generator",
            Field::PostTitle => "post_title",
            Field::PostUrl => "post_url",
            Field::PostDate => "post_date",
            Field::PostContent => "post_content",
            Field::PostAuthor => "post_author",
            Field::PostComments => "post_comments",
            Field::Categories => "categories",
            Field::Keywords => "keywords",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.iter().copied().find(|f| f.name() == name)
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Field> {
        Field::ALL.get(ordinal).copied()
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldSpec {
    pub name: &'static str,
    pub stored: bool,
    pub indexed: bool,
    /// Tokenized fields go through the analyzer chain; untokenized indexed
    /// fields are matched as one exact, lowercased value.
    pub tokenized: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("field `{0}` is neither stored nor indexed")]
    Useless(&'static str),
    #[error("unknown field `{0}`")]
    UnknownField(String),
}

/// Per-field storage flags, one entry per [`Field`] in ordinal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    specs: [FieldSpec; Field::COUNT],
}

impl Schema {
    pub fn new(specs: [FieldSpec; Field::COUNT]) -> Result<Self, SchemaError> {
        for spec in &specs {
            if !spec.stored && !spec.indexed {
                return Err(SchemaError::Useless(spec.name));
            }
        }
        Ok(Schema { specs })
    }

    pub fn spec(&self, field: Field) -> &FieldSpec {
        &self.specs[field.ordinal()]
    }

    pub fn specs(&self) -> &[FieldSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Returns a copy with the flags of one field replaced.
    pub fn with_flags(
        &self,
        field: Field,
        stored: bool,
        indexed: bool,
        tokenized: bool,
    ) -> Result<Self, SchemaError> {
        let mut specs = self.specs;
        specs[field.ordinal()] = FieldSpec {
            name: field.name(),
            stored,
            indexed,
            tokenized,
        };
        Schema::new(specs)
    }

    pub fn indexed_fields(&self) -> impl Iterator<Item = Field> + '_ {
        Field::ALL
            .into_iter()
            .filter(move |f| self.spec(*f).indexed)
    }

    /// A document reduced to its stored fields.
    pub fn stored_view(&self, doc: &BlogPostDocument) -> BlogPostDocument {
        let mut out = doc.clone();
        for field in Field::ALL {
            if !self.spec(field).stored {
                out.clear_field(field);
            }
        }
        out
    }
}

impl Default for Schema {
    fn default() -> Self {
        let spec = |field: Field, tokenized: bool| FieldSpec {
            name: field.name(),
            stored: true,
            indexed: true,
            tokenized,
        };
        Schema {
            specs: [
                spec(Field::BlogUrl, false),
                spec(Field::BlogTitle, true),
                spec(Field::BlogName, true),
                spec(Field::Generator, false),
                spec(Field::PostTitle, true),
                spec(Field::PostUrl, false),
                // Indexed as the four-digit year for archive filtering.
                spec(Field::PostDate, false),
                spec(Field::PostContent, true),
                spec(Field::PostAuthor, true),
                spec(Field::PostComments, true),
                spec(Field::Categories, true),
                spec(Field::Keywords, true),
            ],
        }
    }
}
