//! Append-only search log with per-user recent searches and top queries.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("writing search log {path}: {source}")]
    LogWriteFailed {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("reading search log {path}: {source}")]
    LogReadFailed {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("search log {path} line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientInfo {
    pub os: String,
    pub browser: String,
    pub ip: String,
}

impl ClientInfo {
    /// Client details from a User-Agent header and peer address.
    pub fn from_request(user_agent: &str, ip: Option<IpAddr>) -> Self {
        let (os, browser) = parse_user_agent(user_agent);
        ClientInfo {
            os,
            browser,
            ip: ip.map_or_else(|| UNKNOWN.to_string(), |ip| ip.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLogEntry {
    pub user: String,
    pub query: String,
    pub timestamp: DateTime<Utc>,
    pub client: ClientInfo,
}

/// Case-folded, whitespace-collapsed form used for counting.
pub fn normalize_query(q: &str) -> String {
    q.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The user's `n` most recent distinct queries, newest first.
pub fn recent_from(entries: &[SearchLogEntry], user: &str, n: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    entries
        .iter()
        .rev()
        .filter(|e| e.user == user)
        .filter(|e| seen.insert(e.query.as_str()))
        .take(n)
        .map(|e| e.query.clone())
        .collect()
}

fn top_from_counts(counts: &BTreeMap<String, u64>, n: usize) -> Vec<(String, u64)> {
    let mut all: Vec<(String, u64)> = counts.iter().map(|(q, c)| (q.clone(), *c)).collect();
    // BTreeMap order is lexicographic, and the sort is stable.
    all.sort_by_key(|e| std::cmp::Reverse(e.1));
    all.truncate(n);
    all
}

/// The `n` most frequent normalized queries, count descending then text.
pub fn top_from(entries: &[SearchLogEntry], n: usize) -> Vec<(String, u64)> {
    let mut counts = BTreeMap::new();
    for e in entries {
        *counts.entry(normalize_query(&e.query)).or_default() += 1;
    }
    top_from_counts(&counts, n)
}

/// Reads every entry of a log file. A torn final line is ignored.
pub fn replay(path: impl AsRef<Path>) -> Result<Vec<SearchLogEntry>, LogError> {
    let path = path.as_ref();
    let read_err = |source| LogError::LogReadFailed {
        path: path.to_path_buf(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(read_err(e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(read_err)?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            Err(_) if i + 1 == lines.len() => {
                log::warn!("{}: ignoring torn last line", path.display());
            }
            Err(e) => {
                return Err(LogError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// JSON-lines search log. The file is the source of truth; entries and query
/// counts are mirrored in memory.
#[derive(Debug)]
pub struct ActivityLog {
    path: PathBuf,
    file: File,
    entries: Vec<SearchLogEntry>,
    counts: BTreeMap<String, u64>,
}

impl ActivityLog {
    /// Opens or creates the log. With `max_entries`, older entries beyond the
    /// limit are dropped by rewriting the file once here.
    pub fn open(path: impl AsRef<Path>, max_entries: Option<usize>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let write_err = |source| LogError::LogWriteFailed {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(write_err)?;
        }
        let mut entries = replay(&path)?;
        let torn = std::fs::metadata(&path).is_ok_and(|m| m.len() > 0)
            && std::fs::read(&path).map_err(write_err)?.last() != Some(&b'\n');
        if let Some(max) = max_entries.filter(|m| entries.len() > *m) {
            entries.drain(..entries.len() - max);
            rewrite(&path, &entries).map_err(write_err)?;
        } else if torn {
            rewrite(&path, &entries).map_err(write_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(write_err)?;
        let mut counts = BTreeMap::new();
        for e in &entries {
            *counts.entry(normalize_query(&e.query)).or_default() += 1;
        }
        Ok(ActivityLog {
            path,
            file,
            entries,
            counts,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs one entry. The timestamp is raised to the previous
    /// entry's if it is older, and an unparseable IP becomes "unknown".
    pub fn record_search(&mut self, mut entry: SearchLogEntry) -> Result<(), LogError> {
        if let Some(last) = self.entries.last() {
            entry.timestamp = entry.timestamp.max(last.timestamp);
        }
        if entry.client.ip.parse::<IpAddr>().is_err() {
            entry.client.ip = UNKNOWN.to_string();
        }
        let mut line = serde_json::to_string(&entry).expect("log entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| LogError::LogWriteFailed {
                path: self.path.clone(),
                source,
            })?;
        *self
            .counts
            .entry(normalize_query(&entry.query))
            .or_default() += 1;
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[SearchLogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn recent_searches(&self, user: &str, n: usize) -> Vec<String> {
        recent_from(&self.entries, user, n)
    }

    pub fn top_queries(&self, n: usize) -> Vec<(String, u64)> {
        top_from_counts(&self.counts, n)
    }
}

fn rewrite(path: &Path, entries: &[SearchLogEntry]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        for e in entries {
            serde_json::to_writer(&mut f, e)?;
            f.write_all(b"\n")?;
        }
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

struct Pattern {
    re: Regex,
    name: &'static str,
}

fn table(rows: &[(&str, &'static str)]) -> Vec<Pattern> {
    rows.iter()
        .map(|(re, name)| Pattern {
            re: Regex::new(re).expect("valid UA pattern"),
            name,
        })
        .collect()
}

// First match wins, so more specific patterns come first.
static OS_PATTERNS: LazyLock<Vec<Pattern>> = LazyLock::new(|| {
    table(&[
        (r"Windows Phone", "Windows Phone"),
        (r"Windows NT 10\.0", "Windows 10"),
        (r"Windows NT 6\.3", "Windows 8.1"),
        (r"Windows NT 6\.2", "Windows 8"),
        (r"Windows NT 6\.1", "Windows 7"),
        (r"Windows NT 6\.0", "Windows Vista"),
        (r"Windows NT 5\.[12]", "Windows XP"),
        (r"Windows", "Windows"),
        (r"iPhone|iPad|iPod", "iOS"),
        (r"Android", "Android"),
        (r"CrOS", "Chrome OS"),
        (r"Mac OS X|Macintosh", "Mac OS X"),
        (r"Linux|X11", "Linux"),
    ])
});

static BROWSER_PATTERNS: LazyLock<Vec<Pattern>> = LazyLock::new(|| {
    table(&[
        (r"Edge?/", "Edge"),
        (r"OPR/|Opera", "Opera"),
        (r"Firefox/|FxiOS/", "Firefox"),
        (r"Chrome/|CriOS/", "Chrome"),
        (r"MSIE |Trident/", "Internet Explorer"),
        (r"Version/[\d.]+.*Safari/", "Safari"),
        (r"curl/", "curl"),
    ])
});

fn first_match(patterns: &[Pattern], ua: &str) -> String {
    patterns
        .iter()
        .find(|p| p.re.is_match(ua))
        .map_or(UNKNOWN, |p| p.name)
        .to_string()
}

/// Best-effort (os, browser) from a User-Agent string.
pub fn parse_user_agent(ua: &str) -> (String, String) {
    (
        first_match(&OS_PATTERNS, ua),
        first_match(&BROWSER_PATTERNS, ua),
    )
}
