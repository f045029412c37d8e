//! HTTP service and command-line front end for the blog search engine.

pub mod app;
pub mod cli;
pub mod config;
pub mod jobs;

pub use app::{router, AppState};
pub use config::ServiceConfig;
