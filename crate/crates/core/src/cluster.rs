//! Groups ranked hits into one level of category clusters.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::doc_model::BlogPostDocument;
use crate::query::Hit;

pub const UNCATEGORIZED: &str = "Uncategorized";

/// Display fields of one hit inside a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterHit {
    pub link: String,
    pub snippet: String,
    pub title: String,
    pub date: Option<String>,
    pub author: String,
    pub keywords: Vec<String>,
    pub comment_count: usize,
}

impl ClusterHit {
    pub fn new(hit: &Hit, doc: &BlogPostDocument) -> Self {
        ClusterHit {
            link: doc.post_url.clone(),
            snippet: hit.snippet.clone(),
            title: doc.post_title.clone(),
            date: doc.post_date.map(|d| d.format("%Y-%m-%d").to_string()),
            author: doc.post_author.clone(),
            keywords: doc.keywords.clone(),
            comment_count: doc.post_comments.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterNode {
    pub label: String,
    pub count: usize,
    /// In global rank order.
    pub hits: Vec<ClusterHit>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClusterTree {
    pub clusters: Vec<ClusterNode>,
}

impl ClusterTree {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Keeps the first `max` nodes.
    pub fn truncate(&mut self, max: usize) {
        self.clusters.truncate(max);
    }
}

/// Groups `hits` (in rank order) by the categories of `docs[i]`, the stored
/// document of `hits[i]`. A document with several categories appears in each
/// of them; one with none goes to the trailing Uncategorized node.
pub fn cluster_results(hits: &[Hit], docs: &[BlogPostDocument]) -> ClusterTree {
    assert_eq!(hits.len(), docs.len(), "one document per hit");
    let mut groups: BTreeMap<&str, Vec<ClusterHit>> = BTreeMap::new();
    let mut uncategorized = Vec::new();
    for (hit, doc) in hits.iter().zip(docs) {
        let entry = ClusterHit::new(hit, doc);
        if doc.categories.is_empty() {
            uncategorized.push(entry);
            continue;
        }
        let mut labels: Vec<&str> = doc.categories.iter().map(String::as_str).collect();
        labels.sort_unstable();
        labels.dedup();
        for label in labels {
            groups.entry(label).or_default().push(entry.clone());
        }
    }
    let mut clusters: Vec<ClusterNode> = groups
        .into_iter()
        .map(|(label, hits)| ClusterNode {
            label: label.to_string(),
            count: hits.len(),
            hits,
        })
        .collect();
    // Stable sort keeps the label order of the BTreeMap among equal counts.
    clusters.sort_by_key(|c| std::cmp::Reverse(c.count));
    if !uncategorized.is_empty() {
        clusters.push(ClusterNode {
            label: UNCATEGORIZED.to_string(),
            count: uncategorized.len(),
            hits: uncategorized,
        });
    }
    ClusterTree { clusters }
}

pub fn serialize_tree(tree: &ClusterTree) -> String {
    serde_json::to_string(tree).expect("cluster tree serializes")
}

/// Indented plain-text rendering for terminals.
pub fn render_tree(tree: &ClusterTree) -> String {
    let mut out = String::new();
    for node in &tree.clusters {
        out.push_str(&format!("{} ({})\n", node.label, node.count));
        for hit in &node.hits {
            let date = hit.date.as_deref().unwrap_or("-");
            out.push_str(&format!("  {} [{}] {}\n", hit.title, date, hit.link));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(cats: &[&[&str]]) -> (Vec<Hit>, Vec<BlogPostDocument>) {
        let mut hits = Vec::new();
        let mut docs = Vec::new();
        for (i, c) in cats.iter().enumerate() {
            hits.push(Hit {
                doc: i as u32,
                score: 1.0 / (i as f64 + 1.0),
                matched_fields: vec![],
                snippet: format!("s{i}"),
            });
            let mut d = BlogPostDocument::new(format!("http://x.example/{i}"));
            d.categories = c.iter().map(|s| s.to_string()).collect();
            docs.push(d);
        }
        (hits, docs)
    }

    fn shape(t: &ClusterTree) -> Vec<(String, Vec<String>)> {
        t.clusters
            .iter()
            .map(|n| {
                (
                    n.label.clone(),
                    n.hits.iter().map(|h| h.snippet.clone()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn groups_with_uncategorized_last() {
        let (h, d) = input(&[&["a"], &["a"], &["b"], &[]]);
        let t = cluster_results(&h, &d);
        let counts: Vec<(&str, usize)> = t
            .clusters
            .iter()
            .map(|n| (n.label.as_str(), n.count))
            .collect();
        assert_eq!(counts, vec![("a", 2), ("b", 1), (UNCATEGORIZED, 1)]);
    }

    #[test]
    fn empty_input_empty_tree() {
        let t = cluster_results(&[], &[]);
        assert!(t.is_empty());
        assert_eq!(serialize_tree(&t), r#"{"clusters":[]}"#);
    }

    #[test]
    fn multi_category_doc_is_duplicated_in_rank_order() {
        let (h, d) = input(&[&["b", "a"], &["a"], &["c", "b"]]);
        let t = cluster_results(&h, &d);
        assert_eq!(
            shape(&t),
            vec![
                ("a".into(), vec!["s0".into(), "s1".into()]),
                ("b".into(), vec!["s0".into(), "s2".into()]),
                ("c".into(), vec!["s2".into()]),
            ]
        );
    }

    #[test]
    fn uncategorized_stays_last_even_when_largest() {
        let (h, d) = input(&[&[], &[], &[], &["z"]]);
        let t = cluster_results(&h, &d);
        assert_eq!(t.clusters[0].label, "z");
        assert_eq!(t.clusters[1].label, UNCATEGORIZED);
    }

    #[test]
    fn golden_serialization() {
        let (h, mut d) = input(&[&["travel"], &[]]);
        d[0].post_title = "Trip".into();
        d[0].post_author = "Lee".into();
        d[0].post_date = chrono::NaiveDate::from_ymd_opt(2012, 12, 8);
        d[0].keywords = vec!["penang".into()];
        d[0].post_comments = vec!["nice".into(), "yes".into()];
        let t = cluster_results(&h, &d);
        let json = serialize_tree(&t);
        assert_eq!(
            json,
            concat!(
                r#"{"clusters":[{"label":"travel","count":1,"hits":[{"link":"http://x.example/0","#,
                r#""snippet":"s0","title":"Trip","date":"2012-12-08","author":"Lee","#,
                r#""keywords":["penang"],"comment_count":2}]},"#,
                r#"{"label":"Uncategorized","count":1,"hits":[{"link":"http://x.example/1","#,
                r#""snippet":"s1","title":"","date":null,"author":"","keywords":[],"comment_count":0}]}]}"#
            )
        );
        assert_eq!(json, serialize_tree(&cluster_results(&h, &d)));
    }

    #[test]
    fn render_indents_hits() {
        let (h, d) = input(&[&["a"]]);
        assert_eq!(
            render_tree(&cluster_results(&h, &d)),
            "a (1)\n   [-] http://x.example/0\n"
        );
    }
}
