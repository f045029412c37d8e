//! Crawl, parse, analyze and index one blog in a single batch.

use serde::Serialize;
use thiserror::Error;

use crate::analyzer::{ContentAnalyzer, DocFreqTable};
use crate::crawler::{crawl_blog, CrawlError, CrawlPlan, Fetcher, PostPage};
use crate::index::{Index, IndexError, IndexWriter, SegmentId, Tokenizer};
use crate::parser::{parse_page, RuleSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Crawl(#[from] CrawlError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub visited: usize,
    pub post_pages: usize,
    pub indexed: usize,
    /// Posts that replaced an earlier copy of the same post_url.
    pub replaced: usize,
    /// (url, reason) for pages skipped by the crawler or rejected by the parser.
    pub failures: Vec<(String, String)>,
    pub segment: Option<SegmentId>,
}

/// Parses and optionally analyzes `pages`, then adds them to `writer`
/// without committing. Keyword statistics cover the batch itself.
pub fn ingest_pages(
    pages: &[PostPage],
    rules: &RuleSet,
    analyzer: Option<&dyn ContentAnalyzer>,
    writer: &mut IndexWriter,
) -> Result<IngestReport, IndexError> {
    let mut report = IngestReport {
        post_pages: pages.len(),
        ..IngestReport::default()
    };
    let mut docs = Vec::new();
    for page in pages {
        match parse_page(&page.html, &page.url, rules) {
            Ok(doc) => docs.push(doc),
            Err(e) => {
                log::warn!("{}: {e}", page.url);
                report.failures.push((page.url.to_string(), e.to_string()));
            }
        }
    }
    if let Some(analyzer) = analyzer {
        let stats = DocFreqTable::from_texts(
            &Tokenizer::default(),
            docs.iter().map(|d| d.post_content.as_str()),
        );
        for doc in &mut docs {
            analyzer.annotate(doc, &stats);
        }
    }
    for doc in docs {
        let url = doc.post_url.clone();
        if writer.delete_document(&url)? {
            report.replaced += 1;
        }
        match writer.add_document(doc) {
            Ok(_) => report.indexed += 1,
            Err(IndexError::InvalidDocument(e)) => {
                report.failures.push((url, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Crawls one blog and commits every parsed post to `index`.
pub fn crawl_and_index<F: Fetcher>(
    plan: &CrawlPlan,
    fetcher: F,
    rules: &RuleSet,
    analyzer: Option<&dyn ContentAnalyzer>,
    index: &Index,
) -> Result<IngestReport, PipelineError> {
    let crawl = crawl_blog(plan, fetcher)?;
    let mut writer = index.writer()?;
    let mut report = ingest_pages(&crawl.post_pages, rules, analyzer, &mut writer)?;
    report.visited = crawl.visited_count;
    let mut failures: Vec<(String, String)> = crawl
        .skipped
        .into_iter()
        .map(|s| (s.url, s.reason))
        .collect();
    failures.append(&mut report.failures);
    report.failures = failures;
    report.segment = writer.commit()?;
    Ok(report)
}
