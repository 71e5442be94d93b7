//! A self-contained inverted-index search engine.
//!
//! This is the deterministic stand-in for the commercial backends the
//! rediscovery protocol was designed against: it answers ranked keyword
//! queries (disjunctive, TF-IDF cosine) and quoted phrase queries over a
//! local corpus, and reports where a target URI lands in the result list.
//! Everything about it is reproducible — document ids are assigned by
//! sorted URI, the index carries a content hash of its corpus, and the
//! on-disk format is byte-stable for identical input.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::content::{raw_tokens, ExtractedDoc};
use crate::docfreq::LocalIndexDf;
use crate::signature::clamped_idf;
use crate::stopwords::StopwordSet;
use crate::uri;

const MAGIC: &[u8; 4] = b"RLIX";
const FORMAT_VERSION: u32 = 1;

/// Result-list window: callers do not look past the top 100 by default.
pub const DEFAULT_MAX_RESULTS: usize = 100;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate normalized URI in corpus: {uri}")]
    DuplicateUri { uri: String },
    #[error("index file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index file {path} is not an index (bad magic)")]
    BadMagic { path: String },
    #[error("index file {path} has format version {found}, expected {expected}")]
    VersionMismatch {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("index file {path} is truncated or corrupt: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Uri(#[from] uri::UriError),
}

/// A ranked keyword or phrase query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    /// Ordered terms; order matters for quoted (phrase) queries.
    pub terms: Vec<String>,
    pub quoted: bool,
    pub max_results: usize,
}

impl SearchQuery {
    pub fn keywords<S: Into<String>>(terms: Vec<S>) -> Self {
        Self {
            terms: terms.into_iter().map(Into::into).collect(),
            quoted: false,
            max_results: DEFAULT_MAX_RESULTS,
        }
    }

    pub fn phrase<S: Into<String>>(terms: Vec<S>) -> Self {
        Self {
            terms: terms.into_iter().map(Into::into).collect(),
            quoted: true,
            max_results: DEFAULT_MAX_RESULTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub uri: String,
    pub score: f64,
}

/// An ordered result list from one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub hits: Vec<Hit>,
    pub engine_id: String,
}

impl ResultPage {
    pub fn empty(engine_id: &str) -> Self {
        Self {
            hits: Vec::new(),
            engine_id: engine_id.to_string(),
        }
    }
}

/// How matching documents are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingFn {
    /// TF-IDF cosine — the same weighting theory signatures are built on,
    /// which keeps self-retrieval analyzable.
    TfidfCosine,
    /// Okapi BM25 with the usual constants.
    Bm25,
}

impl Default for RankingFn {
    fn default() -> Self {
        RankingFn::TfidfCosine
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Posting {
    doc_id: u32,
    positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
struct DocEntry {
    uri: String,
    token_count: u32,
}

/// Immutable inverted index over a corpus of extracted documents.
pub struct Index {
    postings: BTreeMap<String, Vec<Posting>>,
    docs: Vec<DocEntry>,
    content_hash: [u8; 32],
    stopwords: BTreeSet<String>,
    ranking: RankingFn,
    // Derived, rebuilt on load.
    norms: Vec<f64>,
    avg_len: f64,
}

impl Index {
    /// Build from a corpus. Document ids are assigned by sorted normalized
    /// URI, so the result is independent of input order.
    pub fn build(corpus: &[ExtractedDoc], stopwords: &StopwordSet) -> Result<Self, IndexError> {
        if corpus.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut sorted: Vec<&ExtractedDoc> = corpus.iter().collect();
        sorted.sort_by(|a, b| a.uri.cmp(&b.uri));
        for pair in sorted.windows(2) {
            if pair[0].uri == pair[1].uri {
                return Err(IndexError::DuplicateUri {
                    uri: pair[0].uri.clone(),
                });
            }
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut docs = Vec::with_capacity(sorted.len());
        let mut hasher = Sha256::new();
        for (doc_id, doc) in sorted.iter().enumerate() {
            docs.push(DocEntry {
                uri: doc.uri.clone(),
                token_count: doc.tokens.len() as u32,
            });
            let mut doc_hasher = Sha256::new();
            doc_hasher.update(doc.uri.as_bytes());
            doc_hasher.update([0u8]);
            for (pos, token) in doc.tokens.iter().enumerate() {
                doc_hasher.update(token.as_bytes());
                doc_hasher.update([0x1f]);
                let entry = postings.entry(token.clone()).or_default();
                match entry.last_mut() {
                    Some(p) if p.doc_id == doc_id as u32 => p.positions.push(pos as u32),
                    _ => entry.push(Posting {
                        doc_id: doc_id as u32,
                        positions: vec![pos as u32],
                    }),
                }
            }
            hasher.update(doc_hasher.finalize());
        }
        let content_hash: [u8; 32] = hasher.finalize().into();

        let mut index = Self {
            postings,
            docs,
            content_hash,
            stopwords: stopwords.iter().map(str::to_string).collect(),
            ranking: RankingFn::default(),
            norms: Vec::new(),
            avg_len: 0.0,
        };
        index.rebuild_derived();
        Ok(index)
    }

    /// Corpus digest: stable across input order, changes with any content
    /// change.
    pub fn content_hash_hex(&self) -> String {
        self.content_hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn doc_count(&self) -> u32 {
        self.docs.len() as u32
    }

    pub fn ranking(&self) -> RankingFn {
        self.ranking
    }

    pub fn set_ranking(&mut self, ranking: RankingFn) {
        self.ranking = ranking;
    }

    /// Document frequency of a term over the indexed corpus.
    pub fn df(&self, term: &str) -> u64 {
        self.postings.get(term).map(|p| p.len() as u64).unwrap_or(0)
    }

    /// Exact df provider backed by this index.
    pub fn df_provider(&self, provider_id: &str) -> LocalIndexDf {
        let counts: HashMap<String, u64> = self
            .postings
            .iter()
            .map(|(term, posts)| (term.clone(), posts.len() as u64))
            .collect();
        LocalIndexDf::from_counts(counts, self.docs.len() as u64, provider_id)
    }

    fn idf(&self, term: &str) -> f64 {
        clamped_idf(self.df(term), self.docs.len() as u64)
    }

    fn rebuild_derived(&mut self) {
        let n = self.docs.len() as u64;
        let mut sq = vec![0.0f64; self.docs.len()];
        for posts in self.postings.values() {
            let idf = clamped_idf(posts.len() as u64, n);
            for p in posts {
                let len = self.docs[p.doc_id as usize].token_count.max(1) as f64;
                let w = (p.positions.len() as f64 / len) * idf;
                sq[p.doc_id as usize] += w * w;
            }
        }
        self.norms = sq.into_iter().map(f64::sqrt).collect();
        let total: u64 = self.docs.iter().map(|d| d.token_count as u64).sum();
        self.avg_len = total as f64 / self.docs.len().max(1) as f64;
    }

    /// Normalize query terms with the same rules the indexed documents went
    /// through: case folding, alphanumeric splitting, length and digit
    /// filters, stop word removal.
    fn normalize_query(&self, terms: &[String]) -> Vec<String> {
        let joined = terms.join(" ");
        raw_tokens(&joined)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }

    /// Ranked retrieval.
    ///
    /// Unquoted queries match any document containing at least one query
    /// term; quoted queries only documents containing the terms as one
    /// consecutive token sequence. Scores are non-increasing, ties broken by
    /// ascending URI, and at most `max_results` hits are returned. A query
    /// matching nothing returns an empty page.
    pub fn search(&self, query: &SearchQuery) -> ResultPage {
        self.search_as(query, "local-sim")
    }

    /// [`Index::search`] with the caller's engine id stamped on the result.
    pub fn search_as(&self, query: &SearchQuery, engine_id: &str) -> ResultPage {
        let terms = self.normalize_query(&query.terms);
        if terms.is_empty() {
            return ResultPage::empty(engine_id);
        }

        let candidates: Vec<u32> = if query.quoted {
            self.phrase_candidates(&terms)
        } else {
            let mut set: BTreeSet<u32> = BTreeSet::new();
            for term in terms.iter().collect::<BTreeSet<_>>() {
                if let Some(posts) = self.postings.get(term.as_str()) {
                    set.extend(posts.iter().map(|p| p.doc_id));
                }
            }
            set.into_iter().collect()
        };
        if candidates.is_empty() {
            return ResultPage::empty(engine_id);
        }

        let mut hits: Vec<Hit> = candidates
            .into_iter()
            .map(|doc_id| Hit {
                uri: self.docs[doc_id as usize].uri.clone(),
                score: match self.ranking {
                    RankingFn::TfidfCosine => self.cosine_score(doc_id, &terms),
                    RankingFn::Bm25 => self.bm25_score(doc_id, &terms),
                },
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.uri.cmp(&b.uri))
        });
        hits.truncate(query.max_results);
        ResultPage {
            hits,
            engine_id: engine_id.to_string(),
        }
    }

    fn term_count_in_doc(&self, term: &str, doc_id: u32) -> u64 {
        self.postings
            .get(term)
            .and_then(|posts| {
                posts
                    .binary_search_by_key(&doc_id, |p| p.doc_id)
                    .ok()
                    .map(|i| posts[i].positions.len() as u64)
            })
            .unwrap_or(0)
    }

    fn cosine_score(&self, doc_id: u32, terms: &[String]) -> f64 {
        let qlen = terms.len() as f64;
        let mut qcounts: BTreeMap<&str, u64> = BTreeMap::new();
        for t in terms {
            *qcounts.entry(t.as_str()).or_insert(0) += 1;
        }
        let doc_len = self.docs[doc_id as usize].token_count.max(1) as f64;
        let mut dot = 0.0;
        let mut q_sq = 0.0;
        for (term, qcount) in qcounts {
            let idf = self.idf(term);
            let wq = (qcount as f64 / qlen) * idf;
            q_sq += wq * wq;
            let count = self.term_count_in_doc(term, doc_id);
            if count > 0 {
                let wd = (count as f64 / doc_len) * idf;
                dot += wd * wq;
            }
        }
        let norm = self.norms[doc_id as usize] * q_sq.sqrt();
        if norm > 0.0 {
            dot / norm
        } else {
            0.0
        }
    }

    fn bm25_score(&self, doc_id: u32, terms: &[String]) -> f64 {
        const K1: f64 = 1.2;
        const B: f64 = 0.75;
        let n = self.docs.len() as f64;
        let doc_len = self.docs[doc_id as usize].token_count as f64;
        let mut score = 0.0;
        for term in terms.iter().collect::<BTreeSet<_>>() {
            let df = self.df(term) as f64;
            if df == 0.0 {
                continue;
            }
            let count = self.term_count_in_doc(term, doc_id) as f64;
            if count == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = (count * (K1 + 1.0)) / (count + K1 * (1.0 - B + B * doc_len / self.avg_len.max(1.0)));
            score += idf * tf;
        }
        score
    }

    /// Documents containing `terms` as one consecutive token sequence.
    fn phrase_candidates(&self, terms: &[String]) -> Vec<u32> {
        let mut lists: Vec<&Vec<Posting>> = Vec::with_capacity(terms.len());
        for term in terms {
            match self.postings.get(term) {
                Some(posts) => lists.push(posts),
                None => return Vec::new(),
            }
        }
        // Intersect doc ids, rarest list first to keep the scan small.
        let mut order: Vec<usize> = (0..lists.len()).collect();
        order.sort_by_key(|&i| lists[i].len());
        let mut docs: BTreeSet<u32> = lists[order[0]].iter().map(|p| p.doc_id).collect();
        for &i in &order[1..] {
            let ids: HashSet<u32> = lists[i].iter().map(|p| p.doc_id).collect();
            docs.retain(|d| ids.contains(d));
        }

        docs.into_iter()
            .filter(|&doc_id| {
                let first = positions_of(lists[0], doc_id);
                first.iter().any(|&start| {
                    lists[1..].iter().enumerate().all(|(offset, posts)| {
                        positions_of(posts, doc_id)
                            .binary_search(&(start + 1 + offset as u32))
                            .is_ok()
                    })
                })
            })
            .collect()
    }

    /// 1-based rank of the first hit equivalent to `target` under URI
    /// normalization; `None` when absent.
    pub fn rank_of(result: &ResultPage, target: &str) -> Result<Option<u32>, IndexError> {
        let target = uri::normalize(target)?;
        for (i, hit) in result.hits.iter().enumerate() {
            let hit_uri = uri::normalize(&hit.uri).unwrap_or_else(|_| hit.uri.clone());
            if hit_uri == target {
                return Ok(Some(i as u32 + 1));
            }
        }
        Ok(None)
    }

    // ---- persistence ----

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let io_err = |source| IndexError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io_err)?;
        buf.extend_from_slice(&self.content_hash);

        buf.write_u32::<LittleEndian>(self.stopwords.len() as u32).map_err(io_err)?;
        for word in &self.stopwords {
            write_str(&mut buf, word).map_err(io_err)?;
        }

        buf.write_u32::<LittleEndian>(self.docs.len() as u32).map_err(io_err)?;
        for doc in &self.docs {
            write_str(&mut buf, &doc.uri).map_err(io_err)?;
            buf.write_u32::<LittleEndian>(doc.token_count).map_err(io_err)?;
        }

        buf.write_u32::<LittleEndian>(self.postings.len() as u32).map_err(io_err)?;
        for (term, posts) in &self.postings {
            write_str(&mut buf, term).map_err(io_err)?;
            buf.write_u32::<LittleEndian>(posts.len() as u32).map_err(io_err)?;
            for p in posts {
                buf.write_u32::<LittleEndian>(p.doc_id).map_err(io_err)?;
                buf.write_u32::<LittleEndian>(p.positions.len() as u32).map_err(io_err)?;
                for &pos in &p.positions {
                    buf.write_u32::<LittleEndian>(pos).map_err(io_err)?;
                }
            }
        }

        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &buf).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let data = fs::read(path).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let corrupt = |message: &str| IndexError::Corrupt {
            path: path.display().to_string(),
            message: message.to_string(),
        };
        let mut cur = Cursor::new(&data);

        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| corrupt("missing magic"))?;
        if &magic != MAGIC {
            return Err(IndexError::BadMagic {
                path: path.display().to_string(),
            });
        }
        let version = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("missing version"))?;
        if version != FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                path: path.display().to_string(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mut content_hash = [0u8; 32];
        cur.read_exact(&mut content_hash).map_err(|_| corrupt("missing content hash"))?;

        let n_stop = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("stopword count"))?;
        let mut stopwords = BTreeSet::new();
        for _ in 0..n_stop {
            stopwords.insert(read_str(&mut cur).map_err(|_| corrupt("stopword entry"))?);
        }

        let n_docs = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("doc count"))?;
        let mut docs = Vec::with_capacity(n_docs as usize);
        for _ in 0..n_docs {
            let doc_uri = read_str(&mut cur).map_err(|_| corrupt("doc uri"))?;
            let token_count = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("doc token count"))?;
            docs.push(DocEntry {
                uri: doc_uri,
                token_count,
            });
        }

        let n_terms = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("term count"))?;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_str(&mut cur).map_err(|_| corrupt("term entry"))?;
            let n_posts = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("posting count"))?;
            let mut posts = Vec::with_capacity(n_posts as usize);
            for _ in 0..n_posts {
                let doc_id = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("posting doc id"))?;
                if doc_id as usize >= docs.len() {
                    return Err(corrupt("posting references unknown doc"));
                }
                let n_pos = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("position count"))?;
                let mut positions = Vec::with_capacity(n_pos as usize);
                for _ in 0..n_pos {
                    positions.push(cur.read_u32::<LittleEndian>().map_err(|_| corrupt("position"))?);
                }
                posts.push(Posting { doc_id, positions });
            }
            postings.insert(term, posts);
        }

        let mut index = Self {
            postings,
            docs,
            content_hash,
            stopwords,
            ranking: RankingFn::default(),
            norms: Vec::new(),
            avg_len: 0.0,
        };
        index.rebuild_derived();
        Ok(index)
    }
}

fn write_str(buf: &mut Vec<u8>, s: &str) -> std::io::Result<()> {
    buf.write_u16::<LittleEndian>(s.len() as u16)?;
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

fn read_str(cur: &mut Cursor<&Vec<u8>>) -> std::io::Result<String> {
    let len = cur.read_u16::<LittleEndian>()? as usize;
    let mut bytes = vec![0u8; len];
    cur.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn positions_of(posts: &[Posting], doc_id: u32) -> &[u32] {
    posts
        .binary_search_by_key(&doc_id, |p| p.doc_id)
        .map(|i| posts[i].positions.as_slice())
        .unwrap_or(&[])
}
