//! Background crawl jobs: a bounded queue drained by one worker.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use blogsearch_core::analyzer::ContentAnalyzer;
use blogsearch_core::crawler::{crawl_blog, CrawlPlan, FixtureFetcher, HttpFetcher};
use blogsearch_core::index::Index;
use blogsearch_core::parser::RuleSet;
use blogsearch_core::pipeline::ingest_pages;
use serde::Serialize;
use tokio::sync::mpsc;
use url::Url;

/// Jobs that may wait behind the running one.
pub const QUEUE_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobStatus {
    pub id: u64,
    pub root_url: String,
    pub max_pages: usize,
    pub state: JobState,
    pub visited: usize,
    /// Post pages that produced a document.
    pub parsed: usize,
    pub indexed: usize,
    /// Pages the crawler skipped plus posts the parser rejected.
    pub skipped: usize,
    pub failures: Vec<(String, String)>,
    pub error: Option<String>,
}

/// Everything a job needs to crawl and index.
#[derive(Clone)]
pub struct CrawlContext {
    pub index: Index,
    pub rules: Arc<RuleSet>,
    pub analyzer: Arc<dyn ContentAnalyzer>,
    pub delay: Duration,
    pub user_agent: String,
    pub fixture_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct QueueFull;

struct Job {
    id: u64,
    plan: CrawlPlan,
}

#[derive(Default)]
struct Registry {
    next_id: u64,
    jobs: BTreeMap<u64, JobStatus>,
}

#[derive(Clone)]
pub struct JobQueue {
    tx: mpsc::Sender<Job>,
    registry: Arc<Mutex<Registry>>,
}

impl JobQueue {
    /// Starts the worker on the current tokio runtime.
    pub fn start(ctx: CrawlContext) -> JobQueue {
        let (tx, rx) = mpsc::channel(QUEUE_DEPTH);
        let registry = Arc::new(Mutex::new(Registry::default()));
        tokio::spawn(worker(rx, ctx, registry.clone()));
        JobQueue { tx, registry }
    }

    pub fn submit(&self, root_url: Url, max_pages: usize) -> Result<u64, QueueFull> {
        let mut reg = self.registry.lock().unwrap();
        let id = reg.next_id + 1;
        let mut plan = CrawlPlan::new(root_url.clone());
        plan.max_pages = max_pages;
        self.tx.try_send(Job { id, plan }).map_err(|_| QueueFull)?;
        reg.next_id = id;
        reg.jobs.insert(
            id,
            JobStatus {
                id,
                root_url: root_url.to_string(),
                max_pages,
                state: JobState::Queued,
                visited: 0,
                parsed: 0,
                indexed: 0,
                skipped: 0,
                failures: Vec::new(),
                error: None,
            },
        );
        Ok(id)
    }

    pub fn status(&self, id: u64) -> Option<JobStatus> {
        self.registry.lock().unwrap().jobs.get(&id).cloned()
    }
}

fn update(registry: &Mutex<Registry>, id: u64, f: impl FnOnce(&mut JobStatus)) {
    if let Some(status) = registry.lock().unwrap().jobs.get_mut(&id) {
        f(status);
    }
}

async fn worker(mut rx: mpsc::Receiver<Job>, ctx: CrawlContext, registry: Arc<Mutex<Registry>>) {
    while let Some(job) = rx.recv().await {
        let id = job.id;
        update(&registry, id, |s| s.state = JobState::Running);
        let ctx = ctx.clone();
        let reg = registry.clone();
        let outcome = tokio::task::spawn_blocking(move || run_job(job, &ctx, &reg)).await;
        let error = match outcome {
            Ok(Ok(())) => None,
            Ok(Err(e)) => Some(e),
            Err(e) => Some(format!("job panicked: {e}")),
        };
        update(&registry, id, |s| match error {
            None => s.state = JobState::Done,
            Some(e) => {
                log::warn!("crawl job {id} failed: {e}");
                s.state = JobState::Failed;
                s.error = Some(e);
            }
        });
    }
}

fn run_job(mut job: Job, ctx: &CrawlContext, registry: &Mutex<Registry>) -> Result<(), String> {
    job.plan.per_request_delay = ctx.delay;
    let crawl = match &ctx.fixture_dir {
        Some(dir) => {
            let fetcher = FixtureFetcher::open(dir).map_err(|e| e.to_string())?;
            crawl_blog(&job.plan, fetcher)
        }
        None => {
            let fetcher = HttpFetcher::new(&ctx.user_agent).map_err(|e| e.to_string())?;
            crawl_blog(&job.plan, fetcher)
        }
    }
    .map_err(|e| e.to_string())?;
    let mut failures: Vec<(String, String)> = crawl
        .skipped
        .iter()
        .map(|s| (s.url.clone(), s.reason.clone()))
        .collect();
    update(registry, job.id, |s| {
        s.visited = crawl.visited_count;
        s.skipped = failures.len();
    });

    let mut writer = ctx.index.writer().map_err(|e| e.to_string())?;
    let report = ingest_pages(
        &crawl.post_pages,
        &ctx.rules,
        Some(ctx.analyzer.as_ref()),
        &mut writer,
    )
    .map_err(|e| e.to_string())?;
    writer.commit().map_err(|e| e.to_string())?;
    let rejected = report.failures.len();
    failures.extend(report.failures);
    update(registry, job.id, |s| {
        s.parsed = report.post_pages - rejected;
        s.indexed = report.indexed;
        s.skipped = failures.len();
        s.failures = failures;
    });
    Ok(())
}
