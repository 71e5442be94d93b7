//! Provider interfaces to the outside world.
//!
//! Search backends, social-tag sources, backlink sources and page fetching
//! all sit behind small uniform interfaces with three kinds of backing:
//! the local simulator, recorded fixture files, and a generic remote
//! adapter. With only local and fixture bindings configured the whole
//! pipeline runs with zero network traffic.

pub mod ratelimit;
pub mod transport;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::RawPage;
use crate::search::{Hit, Index, ResultPage, SearchQuery};
use crate::uri;
use ratelimit::{Clock, RateLimiter, SystemClock};
use transport::HttpTransport;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("engine {engine_id}: {message} (retryable={retryable})")]
    EngineTransport {
        engine_id: String,
        message: String,
        retryable: bool,
    },
    #[error("no recorded response for engine {engine_id}, terms {terms:?}, quoted {quoted}")]
    FixtureMiss {
        engine_id: String,
        terms: Vec<String>,
        quoted: bool,
    },
    #[error("fixture {path}: {message}")]
    BadFixture { path: String, message: String },
    #[error("engine {engine_id}: malformed remote response: {message}")]
    BadResponse { engine_id: String, message: String },
    #[error("provider transport: {message} (retryable)")]
    Transport { message: String },
    #[error(transparent)]
    Uri(#[from] uri::UriError),
}

/// Declarative engine description, as written in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineBinding {
    pub engine_id: String,
    pub kind: EngineKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub rate_limit: Option<f64>,
    #[serde(default = "default_max_results")]
    pub max_results: usize,
    /// local-sim: path of the index file.
    #[serde(default)]
    pub index_path: Option<PathBuf>,
    /// fixture-replay: path of the recorded responses file.
    #[serde(default)]
    pub fixture_path: Option<PathBuf>,
}

fn default_max_results() -> usize {
    crate::search::DEFAULT_MAX_RESULTS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    LocalSim,
    RemoteGeneric,
    FixtureReplay,
}

/// A ready-to-query search backend.
pub enum Engine {
    LocalSim {
        id: String,
        index: Arc<Index>,
        max_results: usize,
    },
    FixtureReplay {
        id: String,
        responses: HashMap<String, Vec<Hit>>,
        max_results: usize,
    },
    RemoteGeneric {
        id: String,
        endpoint: String,
        api_key: Option<String>,
        transport: Arc<dyn HttpTransport>,
        limiter: RateLimiter,
        max_results: usize,
    },
}

impl Engine {
    pub fn local_sim(id: &str, index: Arc<Index>, max_results: usize) -> Self {
        Engine::LocalSim {
            id: id.to_string(),
            index,
            max_results,
        }
    }

    /// Load recorded responses: JSONL of
    /// `{"engine_id", "terms":[…], "quoted", "hits":[{"uri","score"}…]}`
    /// keyed by `(engine_id, terms, quoted)`.
    pub fn fixture_replay(id: &str, path: &Path, max_results: usize) -> Result<Self, ProviderError> {
        #[derive(Deserialize)]
        struct Line {
            engine_id: String,
            terms: Vec<String>,
            quoted: bool,
            hits: Vec<Hit>,
        }
        let text = fs::read_to_string(path).map_err(|e| ProviderError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut responses = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| ProviderError::BadFixture {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            responses.insert(
                replay_key(&parsed.engine_id, &parsed.terms, parsed.quoted),
                parsed.hits,
            );
        }
        Ok(Engine::FixtureReplay {
            id: id.to_string(),
            responses,
            max_results,
        })
    }

    pub fn remote_generic(
        id: &str,
        endpoint: &str,
        api_key: Option<String>,
        rate_limit: Option<f64>,
        max_results: usize,
        transport: Arc<dyn HttpTransport>,
        clock: Option<Arc<dyn Clock>>,
    ) -> Self {
        let clock = clock.unwrap_or_else(|| SystemClock::new() as Arc<dyn Clock>);
        Engine::RemoteGeneric {
            id: id.to_string(),
            endpoint: endpoint.to_string(),
            api_key,
            transport,
            limiter: RateLimiter::new(rate_limit.unwrap_or(0.0), clock),
            max_results,
        }
    }

    pub fn engine_id(&self) -> &str {
        match self {
            Engine::LocalSim { id, .. } => id,
            Engine::FixtureReplay { id, .. } => id,
            Engine::RemoteGeneric { id, .. } => id,
        }
    }

    pub fn max_results(&self) -> usize {
        match self {
            Engine::LocalSim { max_results, .. } => *max_results,
            Engine::FixtureReplay { max_results, .. } => *max_results,
            Engine::RemoteGeneric { max_results, .. } => *max_results,
        }
    }

    /// Execute a query against this binding. Results are always truncated
    /// to the binding's `max_results`.
    pub fn search(&self, query: &SearchQuery) -> Result<ResultPage, ProviderError> {
        match self {
            Engine::LocalSim { id, index, max_results } => {
                let mut q = query.clone();
                q.max_results = q.max_results.min(*max_results);
                Ok(index.search_as(&q, id))
            }
            Engine::FixtureReplay { id, responses, max_results } => {
                let key = replay_key(id, &query.terms, query.quoted);
                let hits = responses.get(&key).ok_or_else(|| ProviderError::FixtureMiss {
                    engine_id: id.clone(),
                    terms: query.terms.clone(),
                    quoted: query.quoted,
                })?;
                let mut hits = hits.clone();
                hits.truncate(query.max_results.min(*max_results));
                Ok(ResultPage {
                    hits,
                    engine_id: id.clone(),
                })
            }
            Engine::RemoteGeneric {
                id,
                endpoint,
                api_key,
                transport,
                limiter,
                max_results,
            } => {
                limiter.acquire();
                let cap = query.max_results.min(*max_results);
                let url = remote_url(endpoint, &query.terms, query.quoted, cap);
                let mut headers = Vec::new();
                if let Some(key) = api_key {
                    headers.push(("x-api-key".to_string(), key.clone()));
                }
                let resp = transport.get(&url, &headers).map_err(|e| ProviderError::EngineTransport {
                    engine_id: id.clone(),
                    message: e.message.clone(),
                    retryable: e.retryable,
                })?;
                let urls: Vec<RemoteHit> =
                    serde_json::from_str(&resp.body).map_err(|e| ProviderError::BadResponse {
                        engine_id: id.clone(),
                        message: e.to_string(),
                    })?;
                // The wire format carries rank order only; synthesize a
                // non-increasing score from the position.
                let hits: Vec<Hit> = urls
                    .into_iter()
                    .take(cap)
                    .enumerate()
                    .map(|(i, h)| Hit {
                        uri: h.url,
                        score: 1.0 / (i as f64 + 1.0),
                    })
                    .collect();
                Ok(ResultPage {
                    hits,
                    engine_id: id.clone(),
                })
            }
        }
    }
}

#[derive(Deserialize)]
struct RemoteHit {
    url: String,
}

/// Spec-level entry point; identical to [`Engine::search`].
pub fn engine_search(engine: &Engine, query: &SearchQuery) -> Result<ResultPage, ProviderError> {
    engine.search(query)
}

fn replay_key(engine_id: &str, terms: &[String], quoted: bool) -> String {
    format!("{engine_id}\u{1f}{quoted}\u{1f}{}", terms.join("\u{1e}"))
}

fn remote_url(endpoint: &str, terms: &[String], quoted: bool, count: usize) -> String {
    let joined = terms.join(" ");
    let q = if quoted { format!("\"{joined}\"") } else { joined };
    let sep = if endpoint.contains('?') { '&' } else { '?' };
    format!("{endpoint}{sep}q={}&count={count}", encode_query_value(&q))
}

fn encode_query_value(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for byte in value.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

/// Social bookmarking tags for one URI, most frequently used first, at most
/// ten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSet {
    pub uri: String,
    pub tags: Vec<String>,
}

/// Tag source backed by a JSONL fixture: `{"uri": …, "tags": […]}` per line.
pub struct TagStore {
    tags: HashMap<String, Vec<String>>,
}

impl TagStore {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        #[derive(Deserialize)]
        struct Line {
            uri: String,
            tags: Vec<String>,
        }
        let text = fs::read_to_string(path).map_err(|e| ProviderError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut tags = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| ProviderError::BadFixture {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            let normalized = uri::normalize(&parsed.uri)?;
            let cleaned: Vec<String> = parsed
                .tags
                .iter()
                .map(|t| t.trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect();
            tags.insert(normalized, cleaned);
        }
        Ok(Self { tags })
    }

    pub fn empty() -> Self {
        Self {
            tags: HashMap::new(),
        }
    }

    pub fn from_map(tags: HashMap<String, Vec<String>>) -> Self {
        Self { tags }
    }

    /// Tags for a URI, truncated to ten, provider order preserved. `None`
    /// when the URI has no annotations.
    pub fn fetch_tags(&self, target: &str) -> Result<Option<TagSet>, ProviderError> {
        let normalized = uri::normalize(target)?;
        Ok(self.tags.get(&normalized).and_then(|tags| {
            if tags.is_empty() {
                return None;
            }
            let mut tags = tags.clone();
            tags.truncate(10);
            Some(TagSet {
                uri: normalized.clone(),
                tags,
            })
        }))
    }
}

/// The pages linking to a centroid URI, as reported by a backlink provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlinkSet {
    pub uri: String,
    pub inlinks: Vec<String>,
}

/// Backlink source backed by a JSONL fixture: `{"uri": …, "inlinks": […]}`.
pub struct InlinkStore {
    inlinks: HashMap<String, Vec<String>>,
}

impl InlinkStore {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        #[derive(Deserialize)]
        struct Line {
            uri: String,
            inlinks: Vec<String>,
        }
        let text = fs::read_to_string(path).map_err(|e| ProviderError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut inlinks = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| ProviderError::BadFixture {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            inlinks.insert(uri::normalize(&parsed.uri)?, parsed.inlinks);
        }
        Ok(Self { inlinks })
    }

    pub fn empty() -> Self {
        Self {
            inlinks: HashMap::new(),
        }
    }

    pub fn from_map(inlinks: HashMap<String, Vec<String>>) -> Self {
        Self { inlinks }
    }

    /// Up to `cap` inlink URIs in provider order, deduplicated by
    /// normalized URI, the centroid itself removed. `None` when the
    /// provider knows no inlinks.
    pub fn fetch_inlinks(&self, target: &str, cap: usize) -> Result<Option<InlinkSet>, ProviderError> {
        let centroid = uri::normalize(target)?;
        let Some(raw) = self.inlinks.get(&centroid) else {
            return Ok(None);
        };
        let mut seen: HashSet<String> = HashSet::new();
        let mut out = Vec::new();
        for link in raw {
            if out.len() >= cap.max(1) {
                break;
            }
            let Ok(normalized) = uri::normalize(link) else {
                continue;
            };
            if normalized == centroid || !seen.insert(normalized.clone()) {
                continue;
            }
            out.push(normalized);
        }
        if out.is_empty() {
            return Ok(None);
        }
        Ok(Some(InlinkSet {
            uri: centroid,
            inlinks: out,
        }))
    }
}

/// Page retrieval: recorded copies from disk, or a live GET through the
/// transport for remote setups.
pub enum PageFetcher {
    Fixture { pages: HashMap<String, PathBuf> },
    Remote { transport: Arc<dyn HttpTransport> },
}

impl PageFetcher {
    /// Fixture of `{"uri": …, "html_path": …}` lines; paths are resolved
    /// relative to the fixture file.
    pub fn fixture(path: &Path) -> Result<Self, ProviderError> {
        #[derive(Deserialize)]
        struct Line {
            uri: String,
            html_path: PathBuf,
        }
        let text = fs::read_to_string(path).map_err(|e| ProviderError::BadFixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut pages = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| ProviderError::BadFixture {
                path: path.display().to_string(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
            pages.insert(uri::normalize(&parsed.uri)?, base.join(parsed.html_path));
        }
        Ok(PageFetcher::Fixture { pages })
    }

    pub fn fetch_page(&self, target: &str) -> Result<Option<RawPage>, ProviderError> {
        let normalized = uri::normalize(target)?;
        match self {
            PageFetcher::Fixture { pages } => match pages.get(&normalized) {
                Some(path) => {
                    let body = fs::read(path).map_err(|e| ProviderError::BadFixture {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                    Ok(Some(RawPage::new(&normalized, body).expect("normalized uri")))
                }
                None => Ok(None),
            },
            PageFetcher::Remote { transport } => {
                match transport.get(&normalized, &[]) {
                    Ok(resp) => Ok(Some(
                        RawPage::new(&normalized, resp.body.into_bytes()).expect("normalized uri"),
                    )),
                    Err(e) if e.retryable => Err(ProviderError::Transport {
                        message: e.to_string(),
                    }),
                    // Hard failures (404 and friends) mean the page is gone.
                    Err(_) => Ok(None),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{extract_text, RawPage};
    use crate::stopwords::StopwordSet;
    use std::io::Write;

    fn write_jsonl(dir: &Path, name: &str, lines: &[serde_json::Value]) -> PathBuf {
        let path = dir.join(name);
        let mut file = fs::File::create(&path).unwrap();
        for line in lines {
            writeln!(file, "{line}").unwrap();
        }
        path
    }

    #[test]
    fn local_sim_delegates_to_the_index() {
        let docs = vec![extract_text(
            &RawPage::new("http://a.org", b"unique kestrel content".to_vec()).unwrap(),
            &StopwordSet::bundled(),
        )];
        let index = Arc::new(Index::build(&docs, &StopwordSet::bundled()).unwrap());
        let engine = Engine::local_sim("sim", index.clone(), 100);
        let query = SearchQuery::keywords(vec!["kestrel"]);
        let via_engine = engine.search(&query).unwrap();
        let direct = index.search_as(&query, "sim");
        assert_eq!(via_engine, direct);
    }

    #[test]
    fn fixture_replay_returns_recorded_hits_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(
            dir.path(),
            "replay.jsonl",
            &[serde_json::json!({
                "engine_id": "yahoo",
                "terms": ["american", "red", "cross"],
                "quoted": false,
                "hits": [
                    {"uri": "http://redcrossla.org", "score": 0.9},
                    {"uri": "http://redcross.org", "score": 0.7}
                ]
            })],
        );
        let engine = Engine::fixture_replay("yahoo", &path, 100).unwrap();
        let query = SearchQuery::keywords(vec!["american", "red", "cross"]);
        let first = engine.search(&query).unwrap();
        let second = engine.search(&query).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.hits.len(), 2);
        assert_eq!(first.hits[0].uri, "http://redcrossla.org");
    }

    #[test]
    fn fixture_miss_is_a_hard_error_naming_the_query() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(dir.path(), "replay.jsonl", &[]);
        let engine = Engine::fixture_replay("yahoo", &path, 100).unwrap();
        let err = engine
            .search(&SearchQuery::keywords(vec!["nothing", "recorded"]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nothing") && msg.contains("recorded"), "{msg}");
    }

    #[test]
    fn remote_generic_builds_the_wire_query_and_parses_urls() {
        let transport = transport::StaticTransport::new();
        transport.insert(
            "http://api.example/search?q=red+cross&count=10",
            200,
            r#"[{"url": "http://redcross.org"}, {"url": "http://other.org"}]"#,
        );
        let engine = Engine::remote_generic(
            "remote",
            "http://api.example/search",
            None,
            None,
            100,
            transport.clone(),
            None,
        );
        let mut query = SearchQuery::keywords(vec!["red", "cross"]);
        query.max_results = 10;
        let page = engine.search(&query).unwrap();
        assert_eq!(page.hits.len(), 2);
        assert_eq!(page.hits[0].uri, "http://redcross.org");
        assert!(page.hits[0].score > page.hits[1].score);
    }

    #[test]
    fn remote_generic_quotes_phrase_queries() {
        let transport = transport::StaticTransport::new();
        transport.insert(
            "http://api.example/search?q=%22red+cross%22&count=100",
            200,
            "[]",
        );
        let engine = Engine::remote_generic(
            "remote",
            "http://api.example/search",
            None,
            None,
            100,
            transport.clone(),
            None,
        );
        let page = engine.search(&SearchQuery::phrase(vec!["red", "cross"])).unwrap();
        assert!(page.hits.is_empty());
        assert_eq!(transport.requests(), 1);
    }

    #[test]
    fn remote_5xx_is_retryable() {
        let transport = transport::StaticTransport::new();
        transport.insert("http://api.example/search?q=x&count=100", 503, "oops");
        let engine = Engine::remote_generic(
            "remote",
            "http://api.example/search",
            None,
            None,
            100,
            transport,
            None,
        );
        let err = engine.search(&SearchQuery::keywords(vec!["x"])).unwrap_err();
        match err {
            ProviderError::EngineTransport { retryable, .. } => assert!(retryable),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tags_cap_at_ten_and_preserve_order() {
        let dir = tempfile::tempdir().unwrap();
        let fourteen: Vec<String> = (0..14).map(|i| format!("tag{i:02}")).collect();
        let path = write_jsonl(
            dir.path(),
            "tags.jsonl",
            &[
                serde_json::json!({"uri": "http://many.org", "tags": fourteen}),
                serde_json::json!({"uri": "http://few.org", "tags": ["photography", "blog"]}),
                serde_json::json!({"uri": "http://none.org", "tags": []}),
            ],
        );
        let store = TagStore::load(&path).unwrap();

        let many = store.fetch_tags("http://many.org").unwrap().unwrap();
        assert_eq!(many.tags.len(), 10);
        assert_eq!(many.tags[0], "tag00");
        assert_eq!(many.tags[9], "tag09");

        let few = store.fetch_tags("http://few.org").unwrap().unwrap();
        assert_eq!(few.tags, vec!["photography", "blog"]);

        assert!(store.fetch_tags("http://none.org").unwrap().is_none());
        assert!(store.fetch_tags("http://unknown.org").unwrap().is_none());
    }

    #[test]
    fn inlinks_dedupe_remove_self_and_cap() {
        let dir = tempfile::tempdir().unwrap();
        let eighty: Vec<String> = (0..80).map(|i| format!("http://in{i:02}.org")).collect();
        let path = write_jsonl(
            dir.path(),
            "inlinks.jsonl",
            &[
                serde_json::json!({"uri": "http://big.org", "inlinks": eighty}),
                serde_json::json!({"uri": "http://small.org", "inlinks": [
                    "http://a.org", "http://www.a.org", "http://small.org", "http://b.org"
                ]}),
            ],
        );
        let store = InlinkStore::load(&path).unwrap();

        let big = store.fetch_inlinks("http://big.org", 50).unwrap().unwrap();
        assert_eq!(big.inlinks.len(), 50);

        let small = store.fetch_inlinks("http://small.org", 50).unwrap().unwrap();
        assert_eq!(small.inlinks, vec!["http://a.org", "http://b.org"]);

        assert!(store.fetch_inlinks("http://unknown.org", 50).unwrap().is_none());
    }

    #[test]
    fn page_fetcher_fixture_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("pages")).unwrap();
        fs::write(dir.path().join("pages/a.html"), "<title>A</title>").unwrap();
        let path = write_jsonl(
            dir.path(),
            "pages.jsonl",
            &[serde_json::json!({"uri": "http://a.org", "html_path": "pages/a.html"})],
        );
        let fetcher = PageFetcher::fixture(&path).unwrap();
        let page = fetcher.fetch_page("http://www.a.org/").unwrap().unwrap();
        assert_eq!(page.uri, "http://a.org");
        assert!(!page.body.is_empty());
        assert!(fetcher.fetch_page("http://other.org").unwrap().is_none());
    }

    #[test]
    fn counting_transport_observes_remote_attempts_only() {
        let counting = transport::CountingTransport::new();
        let docs = vec![extract_text(
            &RawPage::new("http://a.org", b"kestrel".to_vec()).unwrap(),
            &StopwordSet::bundled(),
        )];
        let index = Arc::new(Index::build(&docs, &StopwordSet::bundled()).unwrap());
        let engine = Engine::local_sim("sim", index, 100);
        engine.search(&SearchQuery::keywords(vec!["kestrel"])).unwrap();
        assert_eq!(counting.attempts(), 0);

        let remote = Engine::remote_generic(
            "remote",
            "http://api.example/s",
            None,
            None,
            100,
            counting.clone(),
            None,
        );
        assert!(remote.search(&SearchQuery::keywords(vec!["kestrel"])).is_err());
        assert_eq!(counting.attempts(), 1);
    }
}
