//! Service configuration: built-in defaults, then a `key = value` file, then
//! `BLOSEN_*` environment variables.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

pub const ENV_PREFIX: &str = "BLOSEN_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub index_dir: PathBuf,
    pub log_path: PathBuf,
    /// Entries kept when the log is opened; unlimited when unset.
    pub log_max_entries: Option<usize>,
    /// Category taxonomy; the built-in one when unset.
    pub taxonomy_path: Option<PathBuf>,
    /// Extraction rule table; the built-in one when unset.
    pub rules_path: Option<PathBuf>,
    pub page_size: usize,
    pub crawl_delay: Duration,
    pub crawl_max_pages: usize,
    pub user_agent: String,
    /// Serve crawl jobs from a fixture site directory instead of the network.
    pub fixture_dir: Option<PathBuf>,
    /// Static UI bundle mounted at `/ui`.
    pub ui_dir: Option<PathBuf>,
    pub admin_localhost_only: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            index_dir: PathBuf::from("data/index"),
            log_path: PathBuf::from("data/search.log"),
            log_max_entries: None,
            taxonomy_path: None,
            rules_path: None,
            page_size: 10,
            crawl_delay: blogsearch_core::crawler::DEFAULT_DELAY,
            crawl_max_pages: 500,
            user_agent: blogsearch_core::crawler::DEFAULT_USER_AGENT.to_string(),
            fixture_dir: None,
            ui_dir: None,
            admin_localhost_only: true,
        }
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ServiceConfig {
    /// Defaults, overlaid with `file` (if any) and then the process environment.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = ServiceConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            config.apply_file(&text)?;
        }
        config.apply_env(std::env::vars())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let value = value.trim().trim_matches('"');
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Applies every `BLOSEN_<KEY>` variable; other variables are ignored.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), value.trim())?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = || ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "listen" => self.listen = value.parse().map_err(|_| invalid())?,
            "index_dir" => self.index_dir = PathBuf::from(value),
            "log_path" => self.log_path = PathBuf::from(value),
            "log_max_entries" => {
                self.log_max_entries = match value {
                    "" => None,
                    v => Some(v.parse().map_err(|_| invalid())?),
                }
            }
            "taxonomy_path" => self.taxonomy_path = optional_path(value),
            "rules_path" => self.rules_path = optional_path(value),
            "page_size" => self.page_size = value.parse().map_err(|_| invalid())?,
            "crawl_delay_ms" => {
                self.crawl_delay = Duration::from_millis(value.parse().map_err(|_| invalid())?)
            }
            "crawl_max_pages" => self.crawl_max_pages = value.parse().map_err(|_| invalid())?,
            "user_agent" => self.user_agent = value.to_string(),
            "fixture_dir" => self.fixture_dir = optional_path(value),
            "ui_dir" => self.ui_dir = optional_path(value),
            "admin_localhost_only" => {
                self.admin_localhost_only = match value.to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(invalid()),
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Checks numeric bounds and that configured paths exist or can be created.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.page_size == 0 {
            return Err(ConfigError::Invalid("page_size must be at least 1".into()));
        }
        if self.crawl_max_pages == 0 {
            return Err(ConfigError::Invalid(
                "crawl_max_pages must be at least 1".into(),
            ));
        }
        for path in [
            &self.taxonomy_path,
            &self.rules_path,
            &self.fixture_dir,
            &self.ui_dir,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!(
                    "{} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Creates the index directory and the log file's parent.
    pub fn prepare_dirs(&self) -> Result<(), ConfigError> {
        let parent = self.log_path.parent().filter(|p| !p.as_os_str().is_empty());
        for dir in std::iter::once(self.index_dir.as_path()).chain(parent) {
            fs::create_dir_all(dir).map_err(|source| ConfigError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }
}
