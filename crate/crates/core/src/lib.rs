//! Blog search engine core: crawling, template-driven parsing, content
//! analysis, a segmented fielded inverted index, query execution, result
//! clustering, search analytics and relevance evaluation.

pub mod activity;
pub mod analyzer;
pub mod cluster;
pub mod crawler;
pub mod doc_model;
pub mod eval;
pub mod index;
pub mod parser;
pub mod pipeline;
pub mod query;
