use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::extract::connect_info::MockConnectInfo;
use axum::http::{header, HeaderMap, Request, StatusCode};
use axum::Router;
use blogsearch::{router, AppState, ServiceConfig};
use blogsearch_core::activity::replay;
use blogsearch_core::analyzer::TaxonomyAnalyzer;
use blogsearch_core::crawler::{CrawlPlan, FixtureFetcher};
use blogsearch_core::index::Index;
use blogsearch_core::parser::RuleSet;
use blogsearch_core::pipeline::crawl_and_index;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;
use url::Url;

const LOCAL: ([u8; 4], u16) = ([127, 0, 0, 1], 40000);
const REMOTE: ([u8; 4], u16) = ([203, 0, 113, 7], 40000);
const FIREFOX_LINUX: &str =
    "Mozilla/5.0 (X11; Linux x86_64; rv:109.0) Gecko/20100101 Firefox/115.0";

fn site_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/site")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

struct Harness {
    dir: TempDir,
    state: AppState,
}

fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        index_dir: dir.join("index"),
        log_path: dir.join("search.log"),
        fixture_dir: Some(site_dir()),
        crawl_delay: Duration::ZERO,
        ..ServiceConfig::default()
    }
}

fn build_fixture_index(dir: &Path) {
    let index = Index::create_default(dir).unwrap();
    let analyzer = TaxonomyAnalyzer::default();
    for root in [
        "http://techjournal.blogspot.com/",
        "http://cookingnotes.example.com/",
    ] {
        let mut plan = CrawlPlan::new(Url::parse(root).unwrap());
        plan.per_request_delay = Duration::ZERO;
        let fetcher = FixtureFetcher::open(site_dir()).unwrap();
        crawl_and_index(&plan, fetcher, &RuleSet::default(), Some(&analyzer), &index).unwrap();
    }
}

impl Harness {
    fn new(with_fixture_index: bool) -> Harness {
        Self::with_config(with_fixture_index, |_| {})
    }

    fn with_config(with_fixture_index: bool, tweak: impl FnOnce(&mut ServiceConfig)) -> Harness {
        let dir = TempDir::new().unwrap();
        let mut cfg = config(dir.path());
        tweak(&mut cfg);
        if with_fixture_index {
            build_fixture_index(&cfg.index_dir);
        }
        let state = AppState::new(cfg).unwrap();
        Harness { dir, state }
    }

    fn app(&self, peer: impl Into<SocketAddr>) -> Router {
        router(self.state.clone()).layer(MockConnectInfo(peer.into()))
    }

    async fn send(
        &self,
        peer: impl Into<SocketAddr>,
        req: Request<Body>,
    ) -> (StatusCode, HeaderMap, Value) {
        let resp = self.app(peer).oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let body = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, headers, body)
    }

    async fn get(&self, uri: &str) -> (StatusCode, HeaderMap, Value) {
        self.get_with(uri, &[]).await
    }

    async fn get_with(
        &self,
        uri: &str,
        headers: &[(&str, &str)],
    ) -> (StatusCode, HeaderMap, Value) {
        let mut req = Request::get(uri);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        self.send(LOCAL, req.body(Body::empty()).unwrap()).await
    }

    async fn post_crawl(
        &self,
        peer: impl Into<SocketAddr>,
        body: &str,
    ) -> (StatusCode, HeaderMap, Value) {
        let req = Request::post("/admin/crawl")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(peer, req).await
    }

    fn log_len(&self) -> usize {
        replay(self.dir.path().join("search.log")).unwrap().len()
    }
}

fn cookie(headers: &HeaderMap) -> String {
    let set = headers
        .get(header::SET_COOKIE)
        .expect("set-cookie issued")
        .to_str()
        .unwrap();
    set.split(';').next().unwrap().to_string()
}

fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap()
}

#[tokio::test]
async fn missing_query_and_filters_is_empty_query() {
    let h = Harness::new(true);
    let (status, _, body) = h.get("/search").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "empty_query");
    assert!(body["error"]["message"].is_string());
    let (status, _, body) = h.get("/search?q=the%20and").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "empty_query");
}

#[tokio::test]
async fn page_beyond_range_is_rejected() {
    let h = Harness::new(true);
    let (status, _, body) = h.get("/search?q=rust&page=999").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "page_out_of_range");
}

#[tokio::test]
async fn other_parameter_errors() {
    let h = Harness::new(true);
    let cases = [
        ("/search?q=%22inverted%20index", "unbalanced_quote"),
        ("/search?q=rust&size=0", "invalid_page_size"),
        ("/search?q=rust&size=1000", "invalid_page_size"),
        ("/search?q=rust&page=abc", "invalid_parameter"),
        ("/search?q=rust&view=grid", "invalid_view"),
        ("/search?year=twelve", "invalid_filter"),
        ("/search?host=myspace", "invalid_filter"),
    ];
    for (uri, code) in cases {
        let (status, _, body) = h.get(uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(error_code(&body), code, "{uri}");
    }
}

#[tokio::test]
async fn traditional_view_carries_display_fields_and_page_list() {
    let h = Harness::new(true);
    let (status, _, body) = h.get("/search?q=%22inverted%20index%22").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["view"], "traditional");
    assert_eq!(body["total"], 1);
    assert_eq!(body["pages"], serde_json::json!([1]));
    let hit = &body["hits"][0];
    assert_eq!(hit["title"], "Building an inverted index");
    assert!(hit["link"]
        .as_str()
        .unwrap()
        .starts_with("http://techjournal.blogspot.com/"));
    assert!(hit["snippet"]
        .as_str()
        .unwrap()
        .contains("⟦inverted⟧ ⟦index⟧"));
    assert!(hit["date"].is_string());
    assert!(hit["author"].is_string());
    assert!(hit["categories"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c == "web search"));
    assert!(!hit["keywords"].as_array().unwrap().is_empty());
    assert!(hit["score"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn filters_and_pagination() {
    let h = Harness::new(true);
    let (status, _, body) = h.get("/search?year=2012&size=3").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total"], 8);
    assert_eq!(body["total_pages"], 3);
    assert_eq!(body["pages"], serde_json::json!([1, 2, 3]));
    let (_, _, last) = h.get("/search?year=2012&size=3&page=3").await;
    assert_eq!(last["hits"].as_array().unwrap().len(), 2);
    assert_eq!(last["hits"][0]["rank"], 7);
    let (_, _, wp) = h.get("/search?host=wordpress&year=2013").await;
    assert_eq!(wp["total"], 2);
    for hit in wp["hits"].as_array().unwrap() {
        assert_eq!(hit["generator"], "wordpress");
        assert!(hit["date"].as_str().unwrap().starts_with("2013"));
    }
}

#[tokio::test]
async fn clustered_rust_matches_golden() {
    let h = Harness::new(true);
    let (status, _, body) = h.get("/search?q=rust&view=clustered").await;
    assert_eq!(status, StatusCode::OK);
    let path = golden("clustered_rust.json");
    let rendered = serde_json::to_string_pretty(&body).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, format!("{rendered}\n")).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(rendered, want.trim_end());
}

#[tokio::test]
async fn cluster_cap_keeps_leading_nodes() {
    let h = Harness::new(true);
    let (_, _, full) = h.get("/search?year=2012&size=50&view=clustered").await;
    let (_, _, capped) = h
        .get("/search?year=2012&size=50&view=clustered&max_clusters=1")
        .await;
    assert!(full["clusters"].as_array().unwrap().len() > 1);
    assert_eq!(capped["clusters"].as_array().unwrap().len(), 1);
    assert_eq!(capped["clusters"][0], full["clusters"][0]);
}

#[tokio::test]
async fn replayed_requests_give_identical_bodies() {
    let h = Harness::new(true);
    for uri in [
        "/search?q=index&size=2",
        "/search?q=bread&view=clustered",
        "/search?category=food",
    ] {
        let (_, _, a) = h.get(uri).await;
        let (_, _, b) = h.get(uri).await;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn every_search_request_is_logged_once() {
    let h = Harness::new(true);
    let uris = [
        "/search?q=rust",
        "/search",
        "/search?q=rust&page=999",
        "/search?year=2013",
        "/search?q=%22x",
    ];
    for (i, uri) in uris.iter().enumerate() {
        h.get(uri).await;
        assert_eq!(h.log_len(), i + 1, "{uri}");
    }
    let entries = replay(h.dir.path().join("search.log")).unwrap();
    assert_eq!(entries[3].query, "year:2013");
    assert_eq!(entries[0].client.ip, "127.0.0.1");
}

#[tokio::test]
async fn recent_searches_follow_the_cookie() {
    let h = Harness::new(true);
    let (status, headers, body) = h.get("/analytics/recent").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::json!([]));
    let uid = cookie(&headers);
    let token = uid.strip_prefix("uid=").unwrap();
    assert_eq!(token.len(), 22);

    let (_, again, _) = h.get_with("/search?q=rust", &[("cookie", &uid)]).await;
    assert!(again.get(header::SET_COOKIE).is_none());
    h.get_with("/search?q=bread&year=2013", &[("cookie", &uid)])
        .await;
    h.get("/search?q=someone%20else").await;

    let (_, headers, body) = h.get_with("/analytics/recent", &[("cookie", &uid)]).await;
    assert!(headers.get(header::SET_COOKIE).is_none());
    assert_eq!(body, serde_json::json!(["bread year:2013", "rust"]));
    let (_, _, one) = h
        .get_with("/analytics/recent?n=1", &[("cookie", &uid)])
        .await;
    assert_eq!(one, serde_json::json!(["bread year:2013"]));
}

#[tokio::test]
async fn search_issues_a_cookie_to_new_visitors() {
    let h = Harness::new(true);
    let (_, headers, _) = h.get("/search?q=rust").await;
    let uid = cookie(&headers);
    let (_, _, body) = h.get_with("/analytics/recent", &[("cookie", &uid)]).await;
    assert_eq!(body, serde_json::json!(["rust"]));
}

#[tokio::test]
async fn top_queries_count_normalized_text() {
    let h = Harness::new(true);
    for q in ["rust", "Rust", "bread", "rust", "index", "bread"] {
        h.get(&format!("/search?q={q}")).await;
    }
    let (status, _, body) = h.get("/analytics/top?n=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        serde_json::json!([{"query": "rust", "count": 3}, {"query": "bread", "count": 2}])
    );
}

#[tokio::test]
async fn whoami_reports_agent_and_peer() {
    let h = Harness::new(false);
    let (_, _, body) = h
        .get_with("/whoami", &[("user-agent", FIREFOX_LINUX)])
        .await;
    assert_eq!(
        body,
        serde_json::json!({"os": "Linux", "browser": "Firefox", "ip": "127.0.0.1"})
    );
    let (_, _, body) = h.get_with("/whoami", &[("user-agent", "curl/8.5.0")]).await;
    // Command-line clients are matched by name; the platform stays unknown.
    assert_eq!(body["os"], "unknown");
    assert_eq!(body["browser"], "curl");
    let (_, _, body) = h.get("/whoami").await;
    assert_eq!(
        (&body["os"], &body["browser"]),
        (&Value::from("unknown"), &Value::from("unknown"))
    );
    let req = Request::get("/whoami").body(Body::empty()).unwrap();
    let (_, _, body) = h.send(REMOTE, req).await;
    assert_eq!(body["ip"], "203.0.113.7");
}

#[tokio::test]
async fn whoami_matches_the_ua_sheet() {
    let h = Harness::new(false);
    let sheet = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ua_sheet.tsv");
    let text = std::fs::read_to_string(sheet).unwrap();
    let mut rows = 0;
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let cols: Vec<&str> = line.split('\t').collect();
        let (ua, os, browser) = (cols[0], cols[1], cols[2]);
        let (_, _, body) = h.get_with("/whoami", &[("user-agent", ua)]).await;
        assert_eq!(
            (
                body["os"].as_str().unwrap(),
                body["browser"].as_str().unwrap()
            ),
            (os, browser),
            "{ua}"
        );
        rows += 1;
    }
    assert!(rows >= 10);
}

#[tokio::test]
async fn admin_routes_reject_remote_peers() {
    let h = Harness::new(false);
    let (status, _, body) = h
        .post_crawl(
            REMOTE,
            r#"{"root_url": "http://techjournal.blogspot.com/"}"#,
        )
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(error_code(&body), "forbidden");
    let req = Request::get("/admin/jobs/1").body(Body::empty()).unwrap();
    assert_eq!(h.send(REMOTE, req).await.0, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn admin_validation_errors() {
    let h = Harness::new(false);
    for body in [
        r#"{"root_url": "not a url"}"#,
        r#"{"root_url": "ftp://example.com/"}"#,
    ] {
        let (status, _, resp) = h.post_crawl(LOCAL, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(error_code(&resp), "invalid_url");
    }
    let (status, _, resp) = h.post_crawl(LOCAL, "{").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&resp), "invalid_request");
    let (status, _, resp) = h.get("/admin/jobs/42").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&resp), "unknown_job");
    assert_eq!(h.get("/admin/jobs/abc").await.0, StatusCode::NOT_FOUND);
}

async fn wait_for_job(h: &Harness, id: u64) -> Value {
    for _ in 0..400 {
        let (_, _, status) = h.get(&format!("/admin/jobs/{id}")).await;
        if status["state"] == "done" || status["state"] == "failed" {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn fixture_crawl_job_indexes_the_blog() {
    let h = Harness::new(false);
    let (status, _, body) = h
        .post_crawl(
            LOCAL,
            r#"{"root_url": "http://techjournal.blogspot.com/", "max_pages": 50}"#,
        )
        .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = body["job_id"].as_u64().unwrap();
    let status = wait_for_job(&h, id).await;
    assert_eq!(status["state"], "done");
    assert_eq!(status["visited"], 9);
    assert_eq!(status["parsed"], 6);
    assert_eq!(status["indexed"], 6);
    assert_eq!(status["skipped"], 0);

    let (_, _, found) = h.get("/search?q=rust").await;
    assert_eq!(found["total"], 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn job_failures_land_in_status() {
    let h = Harness::new(false);
    let (status, _, body) = h
        .post_crawl(LOCAL, r#"{"root_url": "http://unknown.example/"}"#)
        .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let status = wait_for_job(&h, body["job_id"].as_u64().unwrap()).await;
    assert_eq!(status["state"], "failed");
    assert!(status["error"].as_str().unwrap().contains("404"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn queue_is_bounded() {
    let h = Harness::with_config(false, |c| c.crawl_delay = Duration::from_millis(100));
    let mut accepted = 0;
    let mut rejected = 0;
    for _ in 0..7 {
        let (status, _, body) = h
            .post_crawl(LOCAL, r#"{"root_url": "http://techjournal.blogspot.com/"}"#)
            .await;
        match status {
            StatusCode::ACCEPTED => accepted += 1,
            StatusCode::SERVICE_UNAVAILABLE => {
                assert_eq!(error_code(&body), "queue_full");
                rejected += 1;
            }
            other => panic!("unexpected {other}"),
        }
    }
    assert!((4..=5).contains(&accepted), "{accepted}");
    assert_eq!(accepted + rejected, 7);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn search_is_served_while_a_job_indexes() {
    let h = Harness::with_config(true, |c| c.crawl_delay = Duration::from_millis(20));
    let (_, _, body) = h
        .post_crawl(LOCAL, r#"{"root_url": "http://techjournal.blogspot.com/"}"#)
        .await;
    let id = body["job_id"].as_u64().unwrap();
    let mut served = 0;
    loop {
        let (status, _, page) = h.get("/search?year=2012&size=50").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(page["total"], 8);
        served += 1;
        let (_, _, job) = h.get(&format!("/admin/jobs/{id}")).await;
        if job["state"] == "done" {
            break;
        }
        assert!(served < 2000);
    }
    assert!(served > 1);
}

#[tokio::test]
async fn real_socket_round_trip() {
    let h = Harness::new(true);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(h.state.clone());
    tokio::spawn(async move {
        axum::serve(
            listener,
            app.into_make_service_with_connect_info::<SocketAddr>(),
        )
        .await
        .unwrap();
    });
    let client = reqwest::Client::new();
    let resp = client
        .get(format!("http://{addr}/whoami"))
        .header("user-agent", FIREFOX_LINUX)
        .send()
        .await
        .unwrap();
    let body: Value = serde_json::from_str(&resp.text().await.unwrap()).unwrap();
    assert_eq!(body["ip"], "127.0.0.1");
    let resp = client
        .get(format!("http://{addr}/search?q=rust"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert!(resp.headers().get("set-cookie").is_some());
}
