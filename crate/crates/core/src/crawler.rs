//! Three-level depth-first blog crawler: root page, archive pages, posts.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::thread;
use std::time::Duration;

use regex::Regex;
use scraper::{ElementRef, Html, Selector};
use thiserror::Error;
use url::Url;

pub const DEFAULT_USER_AGENT: &str = concat!("blogsearch-crawler/", env!("CARGO_PKG_VERSION"));
pub const DEFAULT_DELAY: Duration = Duration::from_millis(500);
pub const DEFAULT_ARCHIVE_MARKERS: [&str; 3] = ["archive", "BlogArchive", "widget_archive"];

static ARCHIVE_PATH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^/\d{4}/(\d{2}/)?$").unwrap());
static BLOGGER_POST_PATH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^/\d{4}/\d{2}/[^/]*[^/\d][^/]*$").unwrap());
static WORDPRESS_POST_PATH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^/\d{4}/\d{2}/\d{2}/[^/]+/?$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
    pub final_url: Url,
}

impl FetchResult {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn is_html(&self) -> bool {
        let ct = self.content_type.to_ascii_lowercase();
        ct.starts_with("text/html") || ct.starts_with("application/xhtml+xml")
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{0}")]
    Network(String),
    #[error("disallowed by robots.txt")]
    RobotsDisallowed,
    #[error("reading fixture {path}: {source}")]
    Fixture {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub trait Fetcher {
    fn fetch(&self, url: &Url) -> Result<FetchResult, FetchError>;

    /// Whether the crawler should sleep between requests to this fetcher.
    fn is_live(&self) -> bool {
        false
    }
}

impl<F: Fetcher + ?Sized> Fetcher for &F {
    fn fetch(&self, url: &Url) -> Result<FetchResult, FetchError> {
        (**self).fetch(url)
    }

    fn is_live(&self) -> bool {
        (**self).is_live()
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
}

/// Serves pages from a directory listed in `manifest.tsv`
/// (`url<TAB>relative-path` per line). Unknown URLs get a 404.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    root: PathBuf,
    pages: BTreeMap<String, PathBuf>,
}

impl FixtureFetcher {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join("manifest.tsv");
        let text = std::fs::read_to_string(&path).map_err(|source| ManifestError::Io {
            path: path.clone(),
            source,
        })?;
        let mut pages = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |reason: &str| ManifestError::Invalid {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (url, rel) = line
                .split_once('\t')
                .ok_or_else(|| invalid("expected url<TAB>path"))?;
            let url = Url::parse(url.trim()).map_err(|e| invalid(&e.to_string()))?;
            pages.insert(url.to_string(), PathBuf::from(rel.trim()));
        }
        Ok(FixtureFetcher { root, pages })
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.pages.keys().map(String::as_str)
    }
}

fn content_type_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "txt" => "text/plain; charset=utf-8",
        "xml" => "application/xml",
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "gif" => "image/gif",
        _ => "application/octet-stream",
    }
}

impl Fetcher for FixtureFetcher {
    fn fetch(&self, url: &Url) -> Result<FetchResult, FetchError> {
        let Some(rel) = self.pages.get(url.as_str()) else {
            return Ok(FetchResult {
                status: 404,
                content_type: "text/plain".into(),
                body: Vec::new(),
                final_url: url.clone(),
            });
        };
        let path = self.root.join(rel);
        let body = std::fs::read(&path).map_err(|source| FetchError::Fixture {
            path: path.clone(),
            source,
        })?;
        Ok(FetchResult {
            status: 200,
            content_type: content_type_for(&path).into(),
            body,
            final_url: url.clone(),
        })
    }
}

/// Allow/Disallow prefixes from the robots.txt groups that apply to us.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    rules: Vec<(bool, String)>,
}

impl RobotsRules {
    /// Uses the group naming `agent` if one exists, else the `*` group.
    pub fn parse(text: &str, agent: &str) -> Self {
        let agent = agent.to_ascii_lowercase();
        let mut specific = Vec::new();
        let mut wildcard = Vec::new();
        let mut group_agents: Vec<String> = Vec::new();
        let mut in_rules = false;
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if in_rules {
                        group_agents.clear();
                        in_rules = false;
                    }
                    group_agents.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_rules = true;
                    if value.is_empty() {
                        continue;
                    }
                    let rule = (key == "allow", value.to_string());
                    if group_agents
                        .iter()
                        .any(|a| a != "*" && agent.contains(a.as_str()))
                    {
                        specific.push(rule.clone());
                    }
                    if group_agents.iter().any(|a| a == "*") {
                        wildcard.push(rule);
                    }
                }
                _ => {}
            }
        }
        RobotsRules {
            rules: if specific.is_empty() {
                wildcard
            } else {
                specific
            },
        }
    }

    /// Longest matching prefix decides; no match means allowed.
    pub fn allows(&self, path: &str) -> bool {
        self.rules
            .iter()
            .filter(|(_, prefix)| path.starts_with(prefix.as_str()))
            .max_by_key(|(allow, prefix)| (prefix.len(), *allow))
            .is_none_or(|(allow, _)| *allow)
    }
}

/// Plain HTTP GET with robots.txt checks, cached per host.
pub struct HttpFetcher {
    client: reqwest::blocking::Client,
    user_agent: String,
    robots: RefCell<BTreeMap<String, RobotsRules>>,
}

impl HttpFetcher {
    pub fn new(user_agent: &str) -> Result<Self, FetchError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| FetchError::Network(e.to_string()))?;
        Ok(HttpFetcher {
            client,
            user_agent: user_agent.to_string(),
            robots: RefCell::new(BTreeMap::new()),
        })
    }

    fn get(&self, url: &Url) -> Result<FetchResult, FetchError> {
        let resp = self
            .client
            .get(url.clone())
            .send()
            .map_err(|e| FetchError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let final_url = resp.url().clone();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        let body = resp
            .bytes()
            .map_err(|e| FetchError::Network(e.to_string()))?
            .to_vec();
        Ok(FetchResult {
            status,
            content_type,
            body,
            final_url,
        })
    }

    fn allowed(&self, url: &Url) -> bool {
        let origin = url.origin().ascii_serialization();
        if let Some(rules) = self.robots.borrow().get(&origin) {
            return rules.allows(url.path());
        }
        let rules = url
            .join("/robots.txt")
            .ok()
            .and_then(|u| self.get(&u).ok())
            .filter(FetchResult::is_success)
            .map(|r| RobotsRules::parse(&r.text(), &self.user_agent))
            .unwrap_or_default();
        let ok = rules.allows(url.path());
        self.robots.borrow_mut().insert(origin, rules);
        ok
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &Url) -> Result<FetchResult, FetchError> {
        if !self.allowed(url) {
            return Err(FetchError::RobotsDisallowed);
        }
        self.get(url)
    }

    fn is_live(&self) -> bool {
        true
    }
}

/// Link recognition settings.
#[derive(Debug, Clone)]
pub struct LinkExtractor {
    /// Substrings of class/id values marking an archive section.
    pub archive_markers: Vec<String>,
    pub same_host_only: bool,
}

impl Default for LinkExtractor {
    fn default() -> Self {
        LinkExtractor {
            archive_markers: DEFAULT_ARCHIVE_MARKERS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            same_host_only: true,
        }
    }
}

fn anchors(doc: &Html) -> impl Iterator<Item = ElementRef<'_>> {
    static A: LazyLock<Selector> = LazyLock::new(|| Selector::parse("a[href]").unwrap());
    doc.select(&A)
}

fn is_post_path(path: &str) -> bool {
    BLOGGER_POST_PATH.is_match(path) || WORDPRESS_POST_PATH.is_match(path)
}

impl LinkExtractor {
    fn resolve(&self, base: &Url, href: &str) -> Option<Url> {
        let mut url = base.join(href.trim()).ok()?;
        if !matches!(url.scheme(), "http" | "https") {
            return None;
        }
        if self.same_host_only && url.host_str() != base.host_str() {
            return None;
        }
        url.set_fragment(None);
        Some(url)
    }

    fn in_archive_section(&self, a: ElementRef<'_>) -> bool {
        a.ancestors().filter_map(ElementRef::wrap).any(|el| {
            let v = el.value();
            let names = v.attr("class").into_iter().chain(v.attr("id"));
            names.into_iter().any(|name| {
                let name = name.to_ascii_lowercase();
                self.archive_markers
                    .iter()
                    .any(|m| name.contains(&m.to_ascii_lowercase()))
            })
        })
    }

    fn collect(
        &self,
        html: &str,
        base: &Url,
        keep: impl Fn(ElementRef<'_>, &Url) -> bool,
    ) -> Vec<Url> {
        let doc = Html::parse_document(html);
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for a in anchors(&doc) {
            let Some(url) = self.resolve(base, a.value().attr("href").unwrap_or("")) else {
                continue;
            };
            if keep(a, &url) && seen.insert(url.to_string()) {
                out.push(url);
            }
        }
        out
    }

    /// Archive page URLs on a blog root page, in document order.
    pub fn archive_links(&self, html: &str, base: &Url) -> Vec<Url> {
        self.collect(html, base, |a, url| {
            if url.query().is_some() || is_post_path(url.path()) {
                return false;
            }
            ARCHIVE_PATH.is_match(url.path()) || self.in_archive_section(a)
        })
    }

    /// Post permalinks on an archive page, in document order.
    pub fn post_links(&self, html: &str, base: &Url) -> Vec<Url> {
        self.collect(html, base, |a, url| {
            let bookmark = a.value().attr("rel").is_some_and(|r| {
                r.split_whitespace()
                    .any(|t| t.eq_ignore_ascii_case("bookmark"))
            });
            (bookmark || is_post_path(url.path())) && !ARCHIVE_PATH.is_match(url.path())
        })
    }
}

pub fn extract_archive_links(root_html: &str, base_url: &Url) -> Vec<Url> {
    LinkExtractor::default().archive_links(root_html, base_url)
}

pub fn extract_post_links(archive_html: &str, base_url: &Url) -> Vec<Url> {
    LinkExtractor::default().post_links(archive_html, base_url)
}

#[derive(Debug, Clone)]
pub struct CrawlPlan {
    pub root_url: Url,
    pub max_pages: usize,
    pub per_request_delay: Duration,
    pub same_host_only: bool,
}

impl CrawlPlan {
    pub fn new(root_url: Url) -> Self {
        CrawlPlan {
            root_url,
            max_pages: 500,
            per_request_delay: DEFAULT_DELAY,
            same_host_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostPage {
    pub url: Url,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrawlResult {
    pub post_pages: Vec<PostPage>,
    /// Number of fetches made, the root included.
    pub visited_count: usize,
    pub skipped: Vec<Skipped>,
    /// Fetched URLs with their depth (1 root, 2 archive, 3 post).
    pub visits: Vec<(String, u8)>,
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("root {url} unreachable: {reason}")]
    RootUnreachable { url: String, reason: String },
    #[error("max_pages must be at least 1")]
    InvalidPlan,
}

struct Crawl<'a, F: Fetcher> {
    plan: &'a CrawlPlan,
    fetcher: F,
    seen: HashSet<String>,
    result: CrawlResult,
}

impl<F: Fetcher> Crawl<'_, F> {
    /// Fetches `url` unless it was seen or the budget is spent. Failures land
    /// in `skipped`; only successful HTML pages are returned.
    fn visit(&mut self, url: &Url, depth: u8) -> Result<Option<FetchResult>, String> {
        if !self.seen.insert(url.to_string()) {
            return Ok(None);
        }
        if self.result.visited_count >= self.plan.max_pages {
            return Err("max-pages".into());
        }
        if self.result.visited_count > 0 && self.fetcher.is_live() {
            thread::sleep(self.plan.per_request_delay);
        }
        self.result.visited_count += 1;
        self.result.visits.push((url.to_string(), depth));
        log::debug!("fetch depth {depth}: {url}");
        let page = match self.fetcher.fetch(url) {
            Ok(p) => p,
            Err(FetchError::RobotsDisallowed) => return Err("robots-disallowed".into()),
            Err(e) => return Err(format!("fetch-error: {e}")),
        };
        if !page.is_success() {
            return Err(format!("http-{}", page.status));
        }
        if !page.is_html() {
            return Err("not-html".into());
        }
        self.seen.insert(page.final_url.to_string());
        Ok(Some(page))
    }

    fn skip(&mut self, url: &Url, reason: String) {
        log::info!("skipped {url}: {reason}");
        self.result.skipped.push(Skipped {
            url: url.to_string(),
            reason,
        });
    }
}

/// Crawls root, then each archive page in order, then each post listed on it.
pub fn crawl_blog<F: Fetcher>(plan: &CrawlPlan, fetcher: F) -> Result<CrawlResult, CrawlError> {
    if plan.max_pages == 0 {
        return Err(CrawlError::InvalidPlan);
    }
    let links = LinkExtractor {
        same_host_only: plan.same_host_only,
        ..LinkExtractor::default()
    };
    let mut crawl = Crawl {
        plan,
        fetcher,
        seen: HashSet::new(),
        result: CrawlResult::default(),
    };
    let root = match crawl.visit(&plan.root_url, 1) {
        Ok(Some(page)) => page,
        Ok(None) => unreachable!("first visit"),
        Err(reason) => {
            return Err(CrawlError::RootUnreachable {
                url: plan.root_url.to_string(),
                reason,
            })
        }
    };
    for archive_url in links.archive_links(&root.text(), &root.final_url) {
        let archive = match crawl.visit(&archive_url, 2) {
            Ok(Some(p)) => p,
            Ok(None) => continue,
            Err(reason) => {
                crawl.skip(&archive_url, reason);
                continue;
            }
        };
        for post_url in links.post_links(&archive.text(), &archive.final_url) {
            match crawl.visit(&post_url, 3) {
                Ok(Some(p)) => crawl.result.post_pages.push(PostPage {
                    url: p.final_url.clone(),
                    html: p.text(),
                }),
                Ok(None) => {}
                Err(reason) => crawl.skip(&post_url, reason),
            }
        }
    }
    Ok(crawl.result)
}
