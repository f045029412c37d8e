//! Command-line entry points.

use std::error::Error;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;

use blogsearch_core::analyzer::{ContentAnalyzer, DocFreqTable, Taxonomy, TaxonomyAnalyzer};
use blogsearch_core::cluster::{cluster_results, render_tree};
use blogsearch_core::crawler::{CrawlPlan, FixtureFetcher, HttpFetcher};
use blogsearch_core::doc_model::from_canonical_json;
use blogsearch_core::eval::{aggregate, read_sessions_file};
use blogsearch_core::index::{Index, IndexError};
use blogsearch_core::parser::RuleSet;
use blogsearch_core::pipeline::crawl_and_index;
use blogsearch_core::query::{execute, parse_query_with};
use clap::{Args, Parser, Subcommand, ValueEnum};
use url::Url;

use crate::app::{router, AppState};
use crate::config::ServiceConfig;

pub type CliResult = Result<(), Box<dyn Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "blogsearch", version, about = "Crawl, index and search blogs")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured index directory.
    #[arg(long, global = true)]
    pub index_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Traditional,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl one blog and index its posts.
    Crawl {
        root_url: Url,
        #[arg(long)]
        max_pages: Option<usize>,
        /// Politeness delay between requests.
        #[arg(long)]
        delay_ms: Option<u64>,
        /// Read pages from a fixture site (manifest.tsv) instead of the network.
        #[arg(long)]
        fixture_dir: Option<PathBuf>,
        /// Skip keyword extraction and category assignment.
        #[arg(long)]
        no_analyze: bool,
    },
    /// Bulk-load a JSONL corpus of documents, one JSON object per line.
    Index {
        corpus: PathBuf,
        /// Fill keywords and categories with the content analyzer.
        #[arg(long)]
        analyze: bool,
    },
    /// Run one query and print the results.
    Search {
        #[arg(required = true, num_args = 1..)]
        query: Vec<String>,
        #[arg(long, value_enum, default_value = "traditional")]
        view: ViewArg,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Start the HTTP service.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Aggregate relevance judgments from a `session_id,crc,prc,cic` CSV.
    Eval {
        #[arg(conflicts_with = "input")]
        file: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Merge all index segments into one.
    Merge,
}

fn load_config(global: &Global) -> Result<ServiceConfig, Box<dyn Error + Send + Sync>> {
    let mut config = ServiceConfig::load(global.config.as_deref())?;
    if let Some(dir) = &global.index_dir {
        config.index_dir = dir.clone();
    }
    Ok(config)
}

fn analyzer(config: &ServiceConfig) -> Result<TaxonomyAnalyzer, Box<dyn Error + Send + Sync>> {
    let taxonomy = match &config.taxonomy_path {
        Some(p) => Taxonomy::load(p)?,
        None => Taxonomy::default(),
    };
    Ok(TaxonomyAnalyzer::new(taxonomy))
}

fn rules(config: &ServiceConfig) -> Result<RuleSet, Box<dyn Error + Send + Sync>> {
    Ok(match &config.rules_path {
        Some(p) => RuleSet::load(p)?,
        None => RuleSet::default(),
    })
}

pub fn run(cli: Cli) -> CliResult {
    let config = load_config(&cli.global)?;
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Crawl {
            root_url,
            max_pages,
            delay_ms,
            fixture_dir,
            no_analyze,
        } => {
            let mut plan = CrawlPlan::new(root_url);
            plan.max_pages = max_pages.unwrap_or(config.crawl_max_pages);
            plan.per_request_delay = delay_ms
                .map(std::time::Duration::from_millis)
                .unwrap_or(config.crawl_delay);
            let analyzer = analyzer(&config)?;
            let analyzer = (!no_analyze).then_some(&analyzer as &dyn ContentAnalyzer);
            let rules = rules(&config)?;
            let index = Index::open_or_create(&config.index_dir)?;
            let report = match fixture_dir.or(config.fixture_dir.clone()) {
                Some(dir) => {
                    crawl_and_index(&plan, FixtureFetcher::open(dir)?, &rules, analyzer, &index)?
                }
                None => {
                    let fetcher = HttpFetcher::new(&config.user_agent)?;
                    crawl_and_index(&plan, fetcher, &rules, analyzer, &index)?
                }
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Index { corpus, analyze } => {
            let reader = BufReader::new(fs::File::open(&corpus)?);
            let mut docs = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc = from_canonical_json(&line)
                    .map_err(|e| format!("{}:{}: {e}", corpus.display(), i + 1))?;
                docs.push(doc);
            }
            let index = Index::open_or_create(&config.index_dir)?;
            if analyze {
                let analyzer = analyzer(&config)?;
                let stats = DocFreqTable::from_texts(
                    &index.reader().tokenizer().clone(),
                    docs.iter().map(|d| d.post_content.as_str()),
                );
                for doc in &mut docs {
                    analyzer.annotate(doc, &stats);
                }
            }
            let mut writer = index.writer()?;
            let (mut added, mut replaced) = (0, 0);
            for doc in docs {
                if writer.delete_document(&doc.post_url)? {
                    replaced += 1;
                }
                writer.add_document(doc)?;
                added += 1;
            }
            writer.commit()?;
            writeln!(out, "indexed {added} documents ({replaced} replaced)")?;
        }
        Command::Search {
            query,
            view,
            page,
            size,
        } => {
            let index = Index::open(&config.index_dir)?;
            let reader = index.reader();
            let parsed = parse_query_with(&query.join(" "), reader.tokenizer())?;
            let result = execute(&parsed, &reader, page, size.unwrap_or(config.page_size))?;
            if result.total == 0 {
                writeln!(out, "no results")?;
                return Ok(());
            }
            let docs = result
                .hits
                .iter()
                .map(|h| reader.stored_document(h.doc))
                .collect::<Result<Vec<_>, _>>()?;
            match view {
                ViewArg::Traditional => {
                    let first = (result.page - 1) * result.size + 1;
                    for (i, (hit, doc)) in result.hits.iter().zip(&docs).enumerate() {
                        writeln!(
                            out,
                            "{:>3}. {:.4}  {}",
                            first + i,
                            hit.score,
                            doc.post_title
                        )?;
                        writeln!(out, "     {}", doc.post_url)?;
                        writeln!(out, "     {}", hit.snippet)?;
                    }
                }
                ViewArg::Clustered => {
                    write!(
                        out,
                        "{}",
                        render_tree(&cluster_results(&result.hits, &docs))
                    )?;
                }
            }
            writeln!(
                out,
                "{} hits, page {} of {}",
                result.total, result.page, result.total_pages
            )?;
        }
        Command::Serve { listen } => {
            let addr = listen.unwrap_or(config.listen);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let state = AppState::new(config)?;
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("listening on {}", listener.local_addr()?);
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(
                    listener,
                    router(state).into_make_service_with_connect_info::<std::net::SocketAddr>(),
                )
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                Ok::<_, Box<dyn Error + Send + Sync>>(())
            })?;
        }
        Command::Eval {
            file,
            input,
            format,
        } => {
            let path = file.or(input).ok_or("eval needs an input CSV")?;
            let report = aggregate(&read_sessions_file(path)?)?;
            match format {
                ReportFormat::Json => writeln!(out, "{}", report.to_json())?,
                ReportFormat::Table => write!(out, "{}", report.to_table())?,
            }
        }
        Command::Merge => {
            let index = Index::open(&config.index_dir)?;
            let mut writer = index.writer()?;
            match writer.merge_segments() {
                Ok(id) => writeln!(out, "merged into segment {id}")?,
                Err(IndexError::NotEnoughSegments(n)) => {
                    writeln!(out, "nothing to merge ({n} segment(s))")?
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(())
}
