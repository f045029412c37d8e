mod common;

use blogsearch_core::doc_model::{BlogHost, BlogPostDocument, Field};
use blogsearch_core::index::{Index, IndexReader};
use blogsearch_core::query::{
    execute, make_snippet, parse_query, phrase_match, rank, score, PhraseQuery, Query, QueryError,
    Target, TermQuery,
};
use chrono::NaiveDate;
use common::*;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use tempfile::TempDir;

fn post(n: usize, title: &str, content: &str) -> BlogPostDocument {
    let mut d = BlogPostDocument::new(format!("http://b.example.com/2012/01/p{n}.html"));
    d.post_title = title.into();
    d.post_content = content.into();
    d
}

fn build(docs: &[BlogPostDocument]) -> (TempDir, Index) {
    let dir = TempDir::new().unwrap();
    let index = Index::create_default(dir.path().join("idx")).unwrap();
    let mut w = index.writer().unwrap();
    for d in docs {
        w.add_document(d.clone()).unwrap();
    }
    w.commit().unwrap();
    drop(w);
    (dir, index)
}

fn ranked(q: &Query, r: &IndexReader) -> Vec<(u32, f64)> {
    rank(q, r).into_iter().map(|s| (s.doc, s.score)).collect()
}

#[test]
fn no_match_gives_empty_first_page() {
    let (_d, index) = build(&[post(0, "hello", "world")]);
    let page = execute(&parse_query("absent").unwrap(), &index.reader(), 1, 10).unwrap();
    assert_eq!((page.total, page.total_pages, page.hits.len()), (0, 0, 0));
}

#[test]
fn page_two_of_empty_result_is_out_of_range() {
    let (_d, index) = build(&[post(0, "hello", "world")]);
    let err = execute(&parse_query("absent").unwrap(), &index.reader(), 2, 10).unwrap_err();
    assert!(matches!(
        err,
        QueryError::PageOutOfRange {
            page: 2,
            total_pages: 0
        }
    ));
}

#[test]
fn zero_page_size_is_rejected() {
    let (_d, index) = build(&[post(0, "hello", "world")]);
    let err = execute(&parse_query("hello").unwrap(), &index.reader(), 1, 0).unwrap_err();
    assert_eq!(err.code(), "invalid_page_size");
}

#[test]
fn higher_tf_ranks_first_with_equal_idf() {
    // Same length everywhere so only tf differs between docs 0 and 2.
    let docs = [
        post(0, "x", "rust word word word"),
        post(1, "x", "word word word word"),
        post(2, "x", "rust rust rust word"),
    ];
    let (_d, index) = build(&docs);
    let r = index.reader();
    let q = parse_query("rust").unwrap();
    let order: Vec<u32> = rank(&q, &r).into_iter().map(|s| s.doc).collect();
    assert_eq!(order, vec![2, 0]);

    // Hand computation: N=3, df=1 on post_content, dl=4, avgdl=4.
    let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
    let s0 = idf * 2.2 / (1.0 + 1.2);
    let s2 = idf * 3.0 * 2.2 / (3.0 + 1.2);
    assert!(close(score(&q, 0, &r), s0));
    assert!(close(score(&q, 2, &r), s2));
}

#[test]
fn year_filter_keeps_matching_years_only() {
    let mut docs: Vec<_> = (0..3).map(|i| post(i, "t", "c")).collect();
    for (d, y) in docs.iter_mut().zip([2011, 2012, 2012]) {
        d.post_date = NaiveDate::from_ymd_opt(y, 3, 1);
    }
    let (_d, index) = build(&docs);
    let page = execute(&parse_query("year:2012").unwrap(), &index.reader(), 1, 10).unwrap();
    let docs: Vec<u32> = page.hits.iter().map(|h| h.doc).collect();
    assert_eq!(docs, vec![1, 2]);
}

#[test]
fn filter_only_query_scores_zero_in_doc_order() {
    let mut docs: Vec<_> = (0..4).map(|i| post(i, "t", "c")).collect();
    docs[1].generator = BlogHost::WordPress;
    docs[3].generator = BlogHost::WordPress;
    let (_d, index) = build(&docs);
    let r = index.reader();
    let got = ranked(&parse_query("host:wordpress").unwrap(), &r);
    assert_eq!(got, vec![(1, 0.0), (3, 0.0)]);
}

#[test]
fn single_doc_score_matches_oracle() {
    let docs = [post(0, "engine notes", "search engine for blog search")];
    let (_d, index) = build(&docs);
    let r = index.reader();
    let q = parse_query("search engine").unwrap();
    let want = naive_search(&[Some(docs[0].clone())], &q);
    compare_rankings(&ranked(&q, &r), &want).unwrap();
}

#[test]
fn duplicated_content_changes_score_as_formula_dictates() {
    let base = post(0, "a", "rust compiler speed matters");
    let mut doubled = post(1, "a", "");
    doubled.post_content = format!("{0} {0}", base.post_content);
    let other = post(2, "a", "python interpreter speed");
    let docs = [base, doubled, other];
    let (_d, index) = build(&docs);
    let r = index.reader();
    let q = parse_query("rust").unwrap();
    let want = naive_search(&docs.iter().cloned().map(Some).collect::<Vec<_>>(), &q);
    compare_rankings(&ranked(&q, &r), &want).unwrap();
    // tf doubles but so does length, so the gain is sub-linear.
    let (s0, s1) = (score(&q, 0, &r), score(&q, 1, &r));
    assert!(s1 > s0 && s1 < 2.0 * s0);
}

#[test]
fn phrase_requires_order_and_adjacency() {
    let docs = [
        post(0, "", "blog search engine"),
        post(1, "", "search blog"),
        post(2, "", "blog of search"),
    ];
    let (_d, index) = build(&docs);
    let r = index.reader();
    assert_eq!(
        phrase_match(&r, Field::PostContent, &["blog", "search"]),
        vec![0]
    );
}

#[test]
fn quoted_stopword_gap_is_honoured() {
    let docs = [post(0, "", "blog of search"), post(1, "", "blog search")];
    let (_d, index) = build(&docs);
    let q = parse_query("\"blog of search\"").unwrap();
    let got: Vec<u32> = rank(&q, &index.reader())
        .into_iter()
        .map(|s| s.doc)
        .collect();
    assert_eq!(got, vec![0]);
}

#[test]
fn field_bound_term_only_matches_that_field() {
    let docs = [post(0, "rust", "other"), post(1, "other", "rust")];
    let (_d, index) = build(&docs);
    let got = ranked(&parse_query("title:rust").unwrap(), &index.reader());
    assert_eq!(got.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0]);
}

#[test]
fn golden_snippet_for_fixture_doc() {
    let mut d = post(
        0,
        "Indexing",
        "Crawling blogs is slow. An inverted index maps every term to the posts \
         that contain it, so a query only touches a few lists.",
    );
    d.keywords = vec!["index".into()];
    // Match "index" spans chars 36..41; centre 38; a 40-char window is 18..58.
    let q = parse_query("index").unwrap();
    assert_eq!(
        make_snippet(&d, &q, 40),
        "slow. An inverted ⟦index⟧ maps every term "
    );
}

#[test]
fn hits_carry_matched_fields_and_snippets() {
    let mut d = post(0, "rust tips", "learn rust today");
    d.keywords = vec!["systems".into()];
    let (_d, index) = build(&[d]);
    let page = execute(&parse_query("rust").unwrap(), &index.reader(), 1, 10).unwrap();
    assert_eq!(
        page.hits[0].matched_fields,
        vec!["post_title", "post_content"]
    );
    assert_eq!(page.hits[0].snippet, "learn ⟦rust⟧ today");
}

#[test]
fn hand_built_query_ast_executes() {
    let docs = [
        post(0, "inverted index", "x"),
        post(1, "index inverted", "x"),
    ];
    let (_d, index) = build(&docs);
    let q = Query {
        terms: vec![TermQuery {
            target: Target::Default,
            token: "x".into(),
        }],
        phrases: vec![PhraseQuery::consecutive(
            Target::Field(Field::PostTitle),
            vec!["inverted".into(), "index".into()],
        )],
        ..Query::default()
    };
    assert_eq!(rank(&q, &index.reader()).len(), 1);
}

fn corpus_index(seed: u64, n: usize) -> (TempDir, Index, Vec<BlogPostDocument>) {
    let docs = random_corpus(seed, n);
    let (d, index) = build(&docs);
    (d, index, docs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ranking_matches_reference(seed in any::<u64>(), qseed in any::<u64>()) {
        let (_d, index, docs) = corpus_index(seed, 30);
        let r = index.reader();
        let slots: Vec<_> = docs.into_iter().map(Some).collect();
        let mut rng = StdRng::seed_from_u64(qseed);
        for _ in 0..10 {
            let raw = random_query(&mut rng);
            let q = parse_query(&raw).unwrap();
            let want = naive_search(&slots, &q);
            if let Err(e) = compare_rankings(&ranked(&q, &r), &want) {
                panic!("query {raw:?}: {e}");
            }
        }
    }

    #[test]
    fn phrase_match_equals_token_scan(seed in any::<u64>(), qseed in any::<u64>()) {
        let (_d, index, docs) = corpus_index(seed, 50);
        let r = index.reader();
        let mut rng = StdRng::seed_from_u64(qseed);
        for _ in 0..10 {
            let (toks, _) = naive_tokens(&random_text(&mut rng, 1, 3), 0);
            if toks.is_empty() {
                continue;
            }
            let tokens: Vec<String> = toks.into_iter().map(|t| t.0).collect();
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let offsets: Vec<u32> = (0..tokens.len() as u32).collect();
            let want: Vec<u32> = docs
                .iter()
                .enumerate()
                .filter(|(_, d)| {
                    naive_phrase_count(&naive_field(d, Field::PostContent), &tokens, &offsets) > 0
                })
                .map(|(i, _)| i as u32)
                .collect();
            prop_assert_eq!(phrase_match(&r, Field::PostContent, &refs), want);
        }
    }

    #[test]
    fn pages_concatenate_to_full_ranking(seed in any::<u64>(), size in 1usize..7) {
        let (_d, index, _) = corpus_index(seed, 25);
        let r = index.reader();
        let q = parse_query("blog").unwrap();
        let full: Vec<u32> = rank(&q, &r).into_iter().map(|s| s.doc).collect();
        let first = execute(&q, &r, 1, size).unwrap();
        prop_assert_eq!(first.total_pages, full.len().div_ceil(size));
        let mut all = Vec::new();
        for page in 1..=first.total_pages.max(1) {
            let p = execute(&q, &r, page, size).unwrap();
            prop_assert!(p.hits.len() <= size);
            all.extend(p.hits.iter().map(|h| h.doc));
        }
        prop_assert_eq!(all, full);
        let beyond = execute(&q, &r, first.total_pages + 1, size);
        prop_assert!(first.total == 0 || beyond.is_err());
    }

    #[test]
    fn execution_is_deterministic(seed in any::<u64>(), qseed in any::<u64>()) {
        let (_d, index, _) = corpus_index(seed, 20);
        let r = index.reader();
        let mut rng = StdRng::seed_from_u64(qseed);
        let q = parse_query(&random_query(&mut rng)).unwrap();
        let a = serde_json::to_string(&execute(&q, &r, 1, 5).ok()).unwrap();
        let b = serde_json::to_string(&execute(&q, &r, 1, 5).ok()).unwrap();
        prop_assert_eq!(a, b);
    }
}
